use rand::Rng;

use super::adjacency::GraphAdjacency;
use super::params::ParamSet;
use crate::data::{SkeletonSequence, CHANNELS};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Lower/upper clamp on the head's log-variance.
pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

/// Backbone shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StgcnConfig {
    pub widths: Vec<usize>,
    pub kernel: usize,
    pub strides: Vec<usize>,
    /// Latent dimension `d` of the Gaussian head.
    pub latent_dim: usize,
}

impl StgcnConfig {
    /// 4 blocks (8, 8, 16, 16), kernel 5, stride 2 at block 3, d = 16.
    pub fn desk() -> Self {
        Self {
            widths: vec![8, 8, 16, 16],
            kernel: 5,
            strides: vec![1, 1, 2, 1],
            latent_dim: 16,
        }
    }

    /// ST-GCN's ten blocks at a quarter of the channel widths.
    pub fn paper_quarter() -> Self {
        Self {
            widths: vec![16, 16, 16, 16, 32, 32, 32, 64, 64, 64],
            kernel: 9,
            strides: vec![1, 1, 1, 1, 2, 1, 1, 2, 1, 1],
            latent_dim: 128,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "desk" => Some(Self::desk()),
            "paper-quarter" => Some(Self::paper_quarter()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::contract("encoder widths must be a non-empty list of positive sizes"));
        }
        if self.strides.len() != self.widths.len() || self.strides.contains(&0) {
            return Err(Error::contract("one positive stride per block is required"));
        }
        if self.kernel % 2 == 0 {
            return Err(Error::contract(format!("temporal kernel {} must be odd", self.kernel)));
        }
        if self.latent_dim < 2 {
            return Err(Error::contract("latent dimension must be ≥ 2"));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        *self.widths.last().expect("validated")
    }

    /// Frames after every strided block.
    pub fn output_frames(&self, frames: usize) -> usize {
        self.strides.iter().fold(frames, |t, s| (t - 1) / s + 1)
    }
}

/// Backbone plus Gaussian head over one adjacency.
#[derive(Clone, Debug)]
pub struct Encoder {
    config: StgcnConfig,
    adjacency: GraphAdjacency,
    variational: bool,
}

/// Variables produced by one forward pass.
#[derive(Clone, Copy, Debug)]
pub struct EncoderOutput {
    pub features: Var,
    /// Output of the last block's spatial graph convolution, `[T'·N, C]`.
    pub last_spatial: Var,
    pub mu: Var,
    /// Absent for the deterministic-head variant.
    pub logvar: Option<Var>,
}

const PER_BLOCK: usize = 4;

impl Encoder {
    pub fn new(config: StgcnConfig, adjacency: GraphAdjacency, variational: bool) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            adjacency,
            variational,
        })
    }

    pub fn config(&self) -> &StgcnConfig {
        &self.config
    }

    pub fn adjacency(&self) -> &GraphAdjacency {
        &self.adjacency
    }

    pub fn joints(&self) -> usize {
        self.adjacency.n_joints()
    }

    pub fn is_variational(&self) -> bool {
        self.variational
    }

    /// He-uniform `±sqrt(6/fan_in)` weights and zero biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamSet {
        let mut p = ParamSet::new();
        let k = self.config.kernel;
        let mut c_in = CHANNELS;
        let uniform = |rng: &mut R, rows: usize, cols: usize, fan_in: usize| {
            let bound = (6.0 / fan_in as f64).sqrt();
            let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
            Tensor::matrix(rows, cols, data).expect("positive extents")
        };
        for (i, &w) in self.config.widths.iter().enumerate() {
            p.push(format!("block{i}.gcn.w"), uniform(rng, c_in, w, c_in));
            p.push(format!("block{i}.gcn.b"), Tensor::zeros(&[w]));
            p.push(format!("block{i}.tcn.w"), uniform(rng, k * w, w, k * w));
            p.push(format!("block{i}.tcn.b"), Tensor::zeros(&[w]));
            c_in = w;
        }
        let (f, d) = (self.config.feature_dim(), self.config.latent_dim);
        p.push("head.mu.w", uniform(rng, f, d, f));
        p.push("head.mu.b", Tensor::zeros(&[d]));
        if self.variational {
            p.push("head.logvar.w", uniform(rng, f, d, f));
            p.push("head.logvar.b", Tensor::zeros(&[d]));
        }
        p
    }

    fn expected_len(&self) -> usize {
        PER_BLOCK * self.config.widths.len() + if self.variational { 4 } else { 2 }
    }

    pub fn check_params(&self, params: &ParamSet) -> Result<()> {
        if params.len() != self.expected_len() || params.index_of("head.mu.w") != Some(PER_BLOCK * self.config.widths.len()) {
            return Err(Error::dim(format!(
                "encoder expects {} parameter tensors in canonical order, got {}",
                self.expected_len(),
                params.len()
            )));
        }
        Ok(())
    }

    /// Backbone only; `bound` are handles from [`ParamSet::bind`].
    pub fn stgcn_forward(&self, tape: &mut Tape, x: Var, bound: &[Var]) -> Result<(Var, Var)> {
        let n = self.joints();
        let xs = tape.value(x).shape().to_vec();
        if xs.len() != 2 || xs[1] != CHANNELS || xs[0] % n != 0 {
            return Err(Error::dim(format!(
                "encoder input must be [T·{n}, {CHANNELS}], got {xs:?}"
            )));
        }
        if bound.len() < PER_BLOCK * self.config.widths.len() {
            return Err(Error::dim("too few bound parameters for the backbone"));
        }
        let mut h = x;
        let mut last_spatial = x;
        for (i, &stride) in self.config.strides.iter().enumerate() {
            let b = &bound[PER_BLOCK * i..PER_BLOCK * (i + 1)];
            let mixed = tape.matmul(h, b[0])?;
            let mixed = tape.add_bias(mixed, b[1])?;
            let spatial = tape.frame_mix(mixed, self.adjacency.mixer())?;
            last_spatial = spatial;
            let temporal = tape.temporal_conv(spatial, b[2], b[3], n, self.config.kernel, stride)?;
            h = tape.relu(temporal)?;
        }
        let pooled = tape.mean_rows(h)?;
        Ok((pooled, last_spatial))
    }

    /// Backbone followed by the Gaussian head.
    pub fn forward(&self, tape: &mut Tape, x: Var, bound: &[Var]) -> Result<EncoderOutput> {
        if bound.len() != self.expected_len() {
            return Err(Error::dim(format!(
                "encoder expects {} bound parameters, got {}",
                self.expected_len(),
                bound.len()
            )));
        }
        let (features, last_spatial) = self.stgcn_forward(tape, x, bound)?;
        let h = PER_BLOCK * self.config.widths.len();
        let head = GaussianHead {
            mu_w: bound[h],
            mu_b: bound[h + 1],
            logvar: self.variational.then(|| (bound[h + 2], bound[h + 3])),
        };
        let (mu, logvar) = gaussian_head_forward(tape, features, &head)?;
        Ok(EncoderOutput {
            features,
            last_spatial,
            mu,
            logvar,
        })
    }
}

/// Handles of the head's affine maps on a tape.
#[derive(Clone, Copy, Debug)]
pub struct GaussianHead {
    pub mu_w: Var,
    pub mu_b: Var,
    pub logvar: Option<(Var, Var)>,
}

fn affine(tape: &mut Tape, h: Var, w: Var, b: Var) -> Result<Var> {
    let f = tape.value(h).numel();
    let row = tape.reshape(h, &[1, f])?;
    let y = tape.matmul(row, w)?;
    let y = tape.add_bias(y, b)?;
    let d = tape.value(y).numel();
    tape.reshape(y, &[d])
}

/// `(μ, log σ²)` from two independent affine maps; log σ² is clamped to
/// `[−10, 10]`.
pub fn gaussian_head_forward(tape: &mut Tape, h: Var, head: &GaussianHead) -> Result<(Var, Option<Var>)> {
    let mu = affine(tape, h, head.mu_w, head.mu_b)?;
    let logvar = match head.logvar {
        Some((w, b)) => {
            let raw = affine(tape, h, w, b)?;
            Some(tape.clamp(raw, LOGVAR_MIN, LOGVAR_MAX)?)
        }
        None => None,
    };
    Ok((mu, logvar))
}

/// `z = μ + exp(log σ² / 2) ⊙ ξ` with `ξ` held constant.
pub fn reparameterize(tape: &mut Tape, mu: Var, logvar: Var, xi: &Tensor) -> Result<Var> {
    if tape.value(mu).shape() != xi.shape() || tape.value(logvar).shape() != xi.shape() {
        return Err(Error::dim("reparameterize: μ, log σ² and ξ must share a shape"));
    }
    let half = tape.scale(logvar, 0.5)?;
    let sigma = tape.exp(half)?;
    let noise = tape.constant(xi.clone())?;
    let spread = tape.mul(sigma, noise)?;
    tape.add(mu, spread)
}

/// `[T·N, C]` encoder input, standardized to zero mean and unit variance
/// over all coordinates (mean removal only when the clip is constant).
pub fn input_tensor(s: &SkeletonSequence) -> Tensor {
    let (t, n) = (s.frames(), s.joints());
    let src = s.coords();
    let len = src.len() as f64;
    let mean = src.iter().sum::<f64>() / len;
    let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len;
    let std = var.sqrt();
    let inv = if std > 1e-12 { 1.0 / std } else { 1.0 };
    let mut out = vec![0.0; src.len()];
    for c in 0..CHANNELS {
        for f in 0..t {
            for j in 0..n {
                out[(f * n + j) * CHANNELS + c] = (s.at(c, f, j) - mean) * inv;
            }
        }
    }
    Tensor::matrix(t * n, CHANNELS, out).expect("positive extents")
}

/// Raw `[T·N, C]` layout without standardization.
pub fn raw_input_tensor(s: &SkeletonSequence) -> Tensor {
    let (t, n) = (s.frames(), s.joints());
    let mut out = vec![0.0; s.coords().len()];
    for c in 0..CHANNELS {
        for f in 0..t {
            for j in 0..n {
                out[(f * n + j) * CHANNELS + c] = s.at(c, f, j);
            }
        }
    }
    Tensor::matrix(t * n, CHANNELS, out).expect("positive extents")
}
