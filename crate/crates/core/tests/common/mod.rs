#![allow(dead_code)]

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use vcl_core::contrastive::{infonce_loss, kl_loss, momentum_update, total_loss, Branch, MemoryQueue};
use vcl_core::data::SkeletonTopology;
use vcl_core::encoder::{build_adjacency, gaussian_head_forward, reparameterize, Encoder, GaussianHead, ParamSet, StgcnConfig};
use vcl_core::numerics::{finite_diff_check, finite_diff_check_many, FrameMixer, Tape, Tensor, Var};
use vcl_core::training::cross_entropy;
use vcl_core::Result;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, r: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.random_range(lo..hi)).collect()).unwrap()
}

/// Uniform in `±1` with every `|x| ≥ gap`.
pub fn away_from_zero(shape: &[usize], gap: f64, r: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v: f64 = r.random_range(-1.0..1.0);
            if v.abs() >= gap {
                break v;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn normal_vec(d: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..d).map(|_| r.sample(StandardNormal)).collect()
}

pub fn toy_topology() -> SkeletonTopology {
    SkeletonTopology::new(4, vec![(0, 1), (1, 2), (0, 3)]).unwrap()
}

/// Two blocks over four joints.
pub fn toy_encoder(variational: bool) -> Encoder {
    let cfg = StgcnConfig {
        widths: vec![3, 4],
        kernel: 3,
        strides: vec![1, 2],
        latent_dim: 3,
    };
    Encoder::new(cfg, build_adjacency(&toy_topology()).unwrap(), variational).unwrap()
}

/// `Σ y ⊙ r` for a fixed random `r`, reducing any output to a scalar.
fn project(t: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let shape = t.value(y).shape().to_vec();
    let r = uniform(&shape, -1.0, 1.0, &mut rng(seed));
    let c = t.constant(r)?;
    let p = t.mul(y, c)?;
    t.sum(p)
}

const H: f64 = 1e-5;

/// `(name, max relative error)` for every differentiable primitive.
pub fn primitive_gradient_errors() -> Vec<(String, f64)> {
    let mut out: Vec<(String, f64)> = Vec::new();
    let mut r = rng(11);
    let mut push = |name: &str, e: Result<f64>| out.push((name.to_string(), e.unwrap()));

    let a = uniform(&[3, 4], -1.0, 1.0, &mut r);
    let b = uniform(&[4, 2], -1.0, 1.0, &mut r);
    push("matmul", finite_diff_check_many(|t, v| { let y = t.matmul(v[0], v[1])?; project(t, y, 1) }, &[a, b], H));

    let x = uniform(&[2, 3], -1.0, 1.0, &mut r);
    let y = uniform(&[2, 3], -1.0, 1.0, &mut r);
    push("add", finite_diff_check_many(|t, v| { let z = t.add(v[0], v[1])?; project(t, z, 2) }, &[x.clone(), y.clone()], H));
    push("sub", finite_diff_check_many(|t, v| { let z = t.sub(v[0], v[1])?; project(t, z, 3) }, &[x.clone(), y.clone()], H));
    push("mul", finite_diff_check_many(|t, v| { let z = t.mul(v[0], v[1])?; project(t, z, 4) }, &[x.clone(), y.clone()], H));
    push("scale", finite_diff_check(|t, v| { let z = t.scale(v, -2.5)?; project(t, z, 5) }, &x, H));
    push("add_scalar", finite_diff_check(|t, v| { let z = t.add_scalar(v, 0.7)?; project(t, z, 6) }, &x, H));
    let bias = uniform(&[3], -1.0, 1.0, &mut r);
    push("add_bias", finite_diff_check_many(|t, v| { let z = t.add_bias(v[0], v[1])?; project(t, z, 7) }, &[x.clone(), bias], H));
    let kinked = away_from_zero(&[4, 3], 1e-3, &mut r);
    push("relu", finite_diff_check(|t, v| { let z = t.relu(v)?; project(t, z, 8) }, &kinked, H));
    push("exp", finite_diff_check(|t, v| { let z = t.exp(v)?; project(t, z, 9) }, &x, H));
    let c = away_from_zero(&[12], 1e-3, &mut r);
    push("clamp", finite_diff_check(|t, v| {
        let s = t.add_scalar(v, 0.5)?;
        let z = t.clamp(s, 0.0, 1.0)?;
        project(t, z, 10)
    }, &c, H));
    push("sum", finite_diff_check(|t, v| t.sum(v), &x, H));
    push("mean", finite_diff_check(|t, v| t.mean(v), &x, H));
    let p = uniform(&[16], -1.0, 1.0, &mut r);
    let q = uniform(&[16], -1.0, 1.0, &mut r);
    push("dot", finite_diff_check_many(|t, v| t.dot(v[0], v[1]), &[p.clone(), q.clone()], H));
    push("l2_normalize", finite_diff_check(|t, v| { let z = t.l2_normalize(v)?; project(t, z, 11) }, &p, H));
    let logits = uniform(&[7], -3.0, 3.0, &mut r);
    push("log_softmax", finite_diff_check(|t, v| { let z = t.log_softmax(v)?; project(t, z, 12) }, &logits, H));
    push("select", finite_diff_check(|t, v| { let z = t.select(v, 3)?; t.scale(z, 2.0) }, &logits, H));
    push("concat", finite_diff_check_many(|t, v| { let z = t.concat(&[v[0], v[1]])?; project(t, z, 13) }, &[p.clone(), logits.clone()], H));
    push("reshape", finite_diff_check(|t, v| { let z = t.reshape(v, &[3, 2])?; project(t, z, 14) }, &x, H));
    let m = uniform(&[5, 3], -1.0, 1.0, &mut r);
    push("mean_rows", finite_diff_check(|t, v| { let z = t.mean_rows(v)?; project(t, z, 15) }, &m, H));

    let adj = build_adjacency(&toy_topology()).unwrap();
    let mixer = adj.mixer().clone();
    let h = uniform(&[5 * 4, 3], -1.0, 1.0, &mut r);
    push("frame_mix", finite_diff_check(|t, v| { let z = t.frame_mix(v, &mixer)?; project(t, z, 16) }, &h, H));
    let dense = uniform(&[4, 4], -1.0, 1.0, &mut r);
    let dense_mixer = std::sync::Arc::new(FrameMixer::from_dense(&dense).unwrap());
    push("frame_mix_dense", finite_diff_check(|t, v| { let z = t.frame_mix(v, &dense_mixer)?; project(t, z, 17) }, &h, H));

    for stride in [1usize, 2] {
        let x = uniform(&[7 * 4, 2], -1.0, 1.0, &mut r);
        let w = uniform(&[3 * 2, 3], -1.0, 1.0, &mut r);
        let b = uniform(&[3], -1.0, 1.0, &mut r);
        push(
            &format!("temporal_conv_stride{stride}"),
            finite_diff_check_many(
                |t, v| {
                    let z = t.temporal_conv(v[0], v[1], v[2], 4, 3, stride)?;
                    project(t, z, 18)
                },
                &[x, w, b],
                H,
            ),
        );
    }

    let mu = uniform(&[16], -1.0, 1.0, &mut r);
    let lv = uniform(&[16], -2.0, 2.0, &mut r);
    push("kl_loss", finite_diff_check_many(|t, v| kl_loss(t, v[0], v[1]), &[mu.clone(), lv.clone()], H));
    let xi = Tensor::vector(normal_vec(16, &mut r));
    push("reparameterize", finite_diff_check_many(|t, v| {
        let z = reparameterize(t, v[0], v[1], &xi)?;
        project(t, z, 19)
    }, &[mu.clone(), lv.clone()], H));
    let negs = unit_rows(10, 16, &mut r);
    push("infonce_loss", finite_diff_check_many(|t, v| infonce_loss(t, v[0], v[1], Some(&negs), 0.07), &[p, q], H));
    push("cross_entropy", finite_diff_check(|t, v| cross_entropy(t, v, 2), &logits, H));

    let hin = uniform(&[6], -1.0, 1.0, &mut r);
    let mw = uniform(&[6, 4], -1.0, 1.0, &mut r);
    let mb = uniform(&[4], -1.0, 1.0, &mut r);
    let lw = uniform(&[6, 4], -0.5, 0.5, &mut r);
    let lb = uniform(&[4], -0.5, 0.5, &mut r);
    push("gaussian_head", finite_diff_check_many(|t, v| {
        let head = GaussianHead { mu_w: v[1], mu_b: v[2], logvar: Some((v[3], v[4])) };
        let (m, l) = gaussian_head_forward(t, v[0], &head)?;
        let a = project(t, m, 20)?;
        let b = project(t, l.unwrap(), 21)?;
        t.add(a, b)
    }, &[hin, mw, mb, lw, lb], H));
    out
}

pub fn unit_rows(n: usize, d: usize, r: &mut ChaCha8Rng) -> Tensor {
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let v = normal_vec(d, r);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        data.extend(v.iter().map(|x| x / norm));
    }
    Tensor::matrix(n, d, data).unwrap()
}

/// Max relative error of the full objective w.r.t. the input clip and every
/// query parameter of the toy encoder.
pub fn end_to_end_gradient_error() -> f64 {
    let enc = toy_encoder(true);
    let mut r = rng(21);
    let params = enc.init_params(&mut r);
    let x = uniform(&[6 * 4, 3], -1.0, 1.0, &mut r);
    let d = enc.config().latent_dim;
    let xi = Tensor::vector(normal_vec(d, &mut r));
    let zk = Tensor::vector(normal_vec(d, &mut r));
    let mu_k = Tensor::vector(normal_vec(d, &mut r));
    let lv_k = uniform(&[d], -1.0, 1.0, &mut r);
    let negs = unit_rows(8, d, &mut r);
    let mut inputs = vec![x];
    inputs.extend(params.tensors().cloned());
    finite_diff_check_many(
        |t, v| {
            let out = enc.forward(t, v[0], &v[1..])?;
            let lv = out.logvar.unwrap();
            let zq = reparameterize(t, out.mu, lv, &xi)?;
            let key = Branch {
                z: t.constant(zk.clone())?,
                mu: t.constant(mu_k.clone())?,
                logvar: t.constant(lv_k.clone())?,
            };
            let terms = total_loss(t, Branch { z: zq, mu: out.mu, logvar: lv }, key, Some(&negs), 0.07)?;
            Ok(terms.total)
        },
        &inputs,
        H,
    )
    .unwrap()
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = s + v;
        c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
        s = t;
    }
    s + c
}

/// InfoNCE from its definition: ratio of exponentials of cosine similarities
/// (queue entries are unit vectors).
pub fn naive_infonce(q: &[f64], k: &[f64], negs: &[Vec<f64>], tau: f64) -> f64 {
    let norm = |v: &[f64]| compensated_sum(v.iter().map(|x| x * x)).sqrt();
    let cos = |a: &[f64], b: &[f64]| compensated_sum(a.iter().zip(b).map(|(x, y)| x * y)) / (norm(a) * norm(b));
    let pos = (cos(q, k) / tau).exp();
    let denom = compensated_sum(std::iter::once(pos).chain(negs.iter().map(|n| (cos(q, n) / tau).exp())));
    -(pos / denom).ln()
}

/// Largest deviation between `infonce_loss` and the naive oracle.
pub fn infonce_oracle_error(cases: usize) -> f64 {
    let mut r = rng(31);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let d = r.random_range(2..=32);
        let j = r.random_range(0..=64);
        let tau = r.random_range(0.05..1.0);
        let q = normal_vec(d, &mut r);
        let k = normal_vec(d, &mut r);
        let negs: Vec<Vec<f64>> = (0..j).map(|_| unit_rows(1, d, &mut r).data().to_vec()).collect();
        let mut t = Tape::new();
        let qv = t.param(Tensor::vector(q.clone())).unwrap();
        let kv = t.param(Tensor::vector(k.clone())).unwrap();
        let bank = (j > 0).then(|| Tensor::matrix(j, d, negs.concat()).unwrap());
        let l = infonce_loss(&mut t, qv, kv, bank.as_ref(), tau).unwrap();
        worst = worst.max((t.value(l).item() - naive_infonce(&q, &k, &negs, tau)).abs());
    }
    worst
}

/// Worst `|kl − MC| / SE` over random diagonal Gaussians in `d = 16`.
pub fn kl_monte_carlo_z(cases: usize, draws: usize) -> f64 {
    let mut r = rng(41);
    let mut worst: f64 = 0.0;
    for _ in 0..cases {
        let d = 16;
        let mu: Vec<f64> = (0..d).map(|_| r.random_range(-1.5..1.5)).collect();
        let lv: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..1.5)).collect();
        let mut t = Tape::new();
        let m = t.param(Tensor::vector(mu.clone())).unwrap();
        let l = t.param(Tensor::vector(lv.clone())).unwrap();
        let kl = kl_loss(&mut t, m, l).unwrap();
        let kl = t.value(kl).item();
        let sigma: Vec<f64> = lv.iter().map(|v| (v / 2.0).exp()).collect();
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let mut log_ratio = 0.0;
            for i in 0..d {
                let e: f64 = r.sample(StandardNormal);
                let x = mu[i] + sigma[i] * e;
                // log q(x) − log p(x) for one coordinate
                log_ratio += -0.5 * lv[i] - 0.5 * e * e + 0.5 * x * x;
            }
            s1 += log_ratio;
            s2 += log_ratio * log_ratio;
        }
        let n = draws as f64;
        let mean = s1 / n;
        let se = ((s2 / n - mean * mean) / n).sqrt();
        worst = worst.max((kl - mean).abs() / se);
    }
    worst
}

/// `(min KL over random points, count of non-positive values, KL at the origin)`.
pub fn kl_nonnegativity(points: usize) -> (f64, usize, f64) {
    let mut r = rng(51);
    let mut min = f64::INFINITY;
    let mut nonpositive = 0;
    for _ in 0..points {
        let d = r.random_range(1..=8);
        let mu = uniform(&[d], -3.0, 3.0, &mut r);
        let lv = uniform(&[d], -5.0, 5.0, &mut r);
        let mut t = Tape::new();
        let m = t.constant(mu).unwrap();
        let l = t.constant(lv).unwrap();
        let kl = kl_loss(&mut t, m, l).unwrap();
        let v = t.value(kl).item();
        min = min.min(v);
        if v <= 0.0 {
            nonpositive += 1;
        }
    }
    let mut t = Tape::new();
    let m = t.constant(Tensor::zeros(&[8])).unwrap();
    let l = t.constant(Tensor::zeros(&[8])).unwrap();
    let kl = kl_loss(&mut t, m, l).unwrap();
    let origin = t.value(kl).item();
    (min, nonpositive, origin)
}

fn flat_distance(a: &ParamSet, b: &ParamSet) -> f64 {
    a.tensors()
        .zip(b.tensors())
        .flat_map(|(x, y)| x.data().iter().zip(y.data()).map(|(p, q)| (p - q) * (p - q)))
        .sum::<f64>()
        .sqrt()
}

/// Worst `|‖θ_k′ − θ_q‖ − ε‖θ_k − θ_q‖| / ‖θ_k − θ_q‖`.
pub fn momentum_identity_error(trials: usize) -> f64 {
    let mut r = rng(61);
    let enc = toy_encoder(true);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let q = enc.init_params(&mut r);
        let mut k = enc.init_params(&mut r);
        let eps: f64 = r.random_range(0.0..1.0);
        let before = flat_distance(&k, &q);
        momentum_update(&mut k, &q, eps).unwrap();
        let after = flat_distance(&k, &q);
        worst = worst.max((after - eps * before).abs() / before);
    }
    worst
}

/// Number of operations after which the queue disagrees with a `VecDeque` model.
pub fn queue_oracle_mismatches(ops: usize) -> usize {
    let mut r = rng(71);
    let (cap, d) = (37, 5);
    let mut q = MemoryQueue::random(cap, d, &mut r).unwrap();
    let mut model: VecDeque<Vec<f64>> = q.entries().into_iter().collect();
    let mut pushed = 0u64;
    let mut mismatches = 0;
    for _ in 0..ops {
        let n = r.random_range(0..=9);
        let batch: Vec<Vec<f64>> = (0..n)
            .map(|_| unit_rows(1, d, &mut r).data().to_vec())
            .collect();
        q.push(&batch).unwrap();
        for v in batch {
            model.push_back(v);
            if model.len() > cap {
                model.pop_front();
            }
        }
        pushed += n as u64;
        let same = q.entries() == model.iter().cloned().collect::<Vec<_>>()
            && q.len() == model.len()
            && q.total_pushed() == pushed
            && q.negatives().map(|t| t.data().to_vec()) == Some(model.iter().flatten().cloned().collect());
        if !same {
            mismatches += 1;
        }
    }
    mismatches
}

/// Largest deviation of the empirical mean and std of `z` from `(μ, σ)`.
pub fn reparameterize_moment_error(draws: usize) -> f64 {
    let mut r = rng(81);
    let mu = [0.3, -1.2, 2.0, 0.0];
    let lv = [0.0, -1.0, 0.8, -3.0];
    let d = mu.len();
    let (mut s1, mut s2) = (vec![0.0; d], vec![0.0; d]);
    for _ in 0..draws {
        let xi = Tensor::vector(normal_vec(d, &mut r));
        let mut t = Tape::new();
        let m = t.constant(Tensor::vector(mu.to_vec())).unwrap();
        let l = t.constant(Tensor::vector(lv.to_vec())).unwrap();
        let z = reparameterize(&mut t, m, l, &xi).unwrap();
        for (i, v) in t.value(z).data().iter().enumerate() {
            s1[i] += v;
            s2[i] += v * v;
        }
    }
    let n = draws as f64;
    (0..d)
        .map(|i| {
            let mean = s1[i] / n;
            let sd = (s2[i] / n - mean * mean).sqrt();
            (mean - mu[i]).abs().max((sd - (lv[i] / 2.0).exp()).abs())
        })
        .fold(0.0, f64::max)
}
