//! Procedural skeleton actions for desk-scale experiments.
//!
//! Every class animates a small set of joints with sinusoidal displacements.
//! Samples add Gaussian jitter, a random rotation about the vertical axis and
//! a random playback speed. Class 0 always animates joints 2 and 3 only.

use std::f64::consts::PI;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::Dataset;
use super::rng::{slot, stream_rng};
use super::sequence::SkeletonSequence;
use super::topology::SkeletonTopology;
use crate::error::{Error, Result};

/// Joints animated by class 0.
pub const CLASS0_JOINTS: [usize; 2] = [2, 3];

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub per_class: usize,
    pub frames: usize,
    pub seed: u64,
    /// Per-coordinate Gaussian jitter.
    pub noise_std: f64,
    /// Rotation about the vertical axis is uniform in `±max_rotation` radians.
    pub max_rotation: f64,
    /// Speed factor is uniform in `1 ± speed_jitter`.
    pub speed_jitter: f64,
}

impl SynthSpec {
    pub fn new(n_classes: usize, per_class: usize, frames: usize, seed: u64) -> Self {
        Self {
            n_classes,
            per_class,
            frames,
            seed,
            noise_std: 0.02,
            max_rotation: 0.4,
            speed_jitter: 0.15,
        }
    }

    /// Disables jitter, rotation and speed variation.
    pub fn noiseless(mut self) -> Self {
        self.noise_std = 0.0;
        self.max_rotation = 0.0;
        self.speed_jitter = 0.0;
        self
    }
}

#[derive(Clone, Debug)]
struct Wave {
    joint: usize,
    amp: [f64; 3],
    freq: f64,
    phase: f64,
}

/// Per-sample nuisance parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nuisance {
    pub rotation: f64,
    pub speed: f64,
}

impl Nuisance {
    pub const NONE: Nuisance = Nuisance {
        rotation: 0.0,
        speed: 1.0,
    };
}

pub struct SynthGenerator {
    spec: SynthSpec,
    topo: SkeletonTopology,
    rest: Vec<[f64; 3]>,
    templates: Vec<Vec<Wave>>,
}

fn rest_pose(topo: &SkeletonTopology) -> Vec<[f64; 3]> {
    let golden = PI * (3.0 - 5f64.sqrt());
    let mut rest = vec![[0.0; 3]; topo.n_joints()];
    let parents = topo.parents();
    for j in topo.depth_first_order() {
        if j == topo.root() {
            continue;
        }
        // spread children over a sphere, biased so limbs hang off the trunk
        let y = 1.0 - 2.0 * ((j as f64 + 0.5) / topo.n_joints() as f64);
        let r = (1.0 - y * y).sqrt();
        let theta = golden * j as f64;
        let dir = [r * theta.cos(), y, r * theta.sin()];
        let p = rest[parents[j]];
        rest[j] = [p[0] + 0.25 * dir[0], p[1] + 0.25 * dir[1], p[2] + 0.25 * dir[2]];
    }
    rest
}

fn random_wave<R: Rng>(joint: usize, rng: &mut R) -> Wave {
    let mut amp = [0.0; 3];
    for a in &mut amp {
        *a = rng.random_range(-1.0..1.0);
    }
    let norm = amp.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-6);
    let target = rng.random_range(0.25..0.4);
    for a in &mut amp {
        *a *= target / norm;
    }
    Wave {
        joint,
        amp,
        freq: [1.0, 1.5, 2.0, 2.5, 3.0][rng.random_range(0..5)],
        phase: rng.random_range(0.0..2.0 * PI),
    }
}

impl SynthGenerator {
    pub fn new(topo: &SkeletonTopology, spec: SynthSpec) -> Result<Self> {
        if spec.n_classes < 2 || spec.per_class < 2 {
            return Err(Error::contract(format!(
                "need at least 2 classes and 2 samples per class, got {} × {}",
                spec.n_classes, spec.per_class
            )));
        }
        if spec.frames < 2 {
            return Err(Error::DegenerateInput("synthetic clips need T ≥ 2".into()));
        }
        let n = topo.n_joints();
        if n < 4 {
            return Err(Error::contract("synthetic generator needs at least 4 joints"));
        }
        let mut templates = Vec::with_capacity(spec.n_classes);
        let mut used: Vec<Vec<usize>> = Vec::new();
        for c in 0..spec.n_classes {
            let mut rng = stream_rng(spec.seed, 0, slot::TEMPLATE, c as u64);
            let mut joints: Vec<usize> = if c == 0 {
                CLASS0_JOINTS.to_vec()
            } else {
                loop {
                    let k = rng.random_range(2..=4usize).min(n - 1);
                    let mut pick: Vec<usize> = sample(&mut rng, n - 1, k).into_iter().map(|j| j + 1).collect();
                    pick.sort_unstable();
                    if !used.contains(&pick) {
                        break pick;
                    }
                }
            };
            joints.sort_unstable();
            used.push(joints.clone());
            templates.push(joints.iter().map(|&j| random_wave(j, &mut rng)).collect());
        }
        Ok(Self {
            rest: rest_pose(topo),
            topo: topo.clone(),
            spec,
            templates,
        })
    }

    pub fn spec(&self) -> &SynthSpec {
        &self.spec
    }

    /// Joints animated by `class`.
    pub fn active_joints(&self, class: usize) -> Vec<usize> {
        self.templates[class].iter().map(|w| w.joint).collect()
    }

    /// Nuisance draw of the `i`-th generated sample.
    pub fn nuisance(&self, index: usize) -> Nuisance {
        let mut rng = stream_rng(self.spec.seed, 0, index as u64, 0);
        let u: f64 = rng.random();
        let v: f64 = rng.random();
        Nuisance {
            rotation: self.spec.max_rotation * (2.0 * u - 1.0),
            speed: 1.0 + self.spec.speed_jitter * (2.0 * v - 1.0),
        }
    }

    /// Noise-free rendering of `class` under `nuisance`.
    pub fn render(&self, class: usize, nuisance: Nuisance) -> Result<SkeletonSequence> {
        self.render_with(class, nuisance, 0, |_, _, _| 0.0)
    }

    fn render_with(
        &self,
        class: usize,
        nuisance: Nuisance,
        subject_id: u32,
        mut noise: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<SkeletonSequence> {
        let frames = self.spec.frames;
        let n = self.topo.n_joints();
        let mut pos = vec![[0.0; 3]; frames * n];
        for t in 0..frames {
            let tau = t as f64 / (frames - 1) as f64 * nuisance.speed;
            for j in 0..n {
                pos[t * n + j] = self.rest[j];
            }
            for w in &self.templates[class] {
                let s = (2.0 * PI * w.freq * tau + w.phase).sin();
                let p = &mut pos[t * n + w.joint];
                for c in 0..3 {
                    p[c] += w.amp[c] * s;
                }
            }
        }
        let (sin, cos) = nuisance.rotation.sin_cos();
        SkeletonSequence::from_fn(frames, n, class, subject_id, |c, t, j| {
            let p = pos[t * n + j];
            let v = match c {
                0 => cos * p[0] + sin * p[2],
                1 => p[1],
                _ => -sin * p[0] + cos * p[2],
            };
            v + noise(c, t, j)
        })
    }

    /// Sample `i` of the dataset: class-major order, subject ids count up
    /// within each class.
    pub fn sample(&self, index: usize) -> Result<SkeletonSequence> {
        let class = index / self.spec.per_class;
        let subject = (index % self.spec.per_class) as u32;
        let nuisance = self.nuisance(index);
        let mut rng = stream_rng(self.spec.seed, 1, index as u64, 0);
        let std = self.spec.noise_std;
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        self.render_with(class, nuisance, subject, |_, _, _| {
            if std > 0.0 {
                std * normal.sample(&mut rng)
            } else {
                0.0
            }
        })
    }

    pub fn generate(&self) -> Result<Dataset> {
        let total = self.spec.n_classes * self.spec.per_class;
        let samples = (0..total).map(|i| self.sample(i)).collect::<Result<Vec<_>>>()?;
        let names = (0..self.spec.n_classes).map(|c| format!("synth_{c}")).collect();
        Dataset::new(samples, self.topo.clone(), names)
    }
}

/// Generates `n_classes × per_class` labelled clips with default nuisance.
pub fn synth_generate(
    n_classes: usize,
    per_class: usize,
    topo: &SkeletonTopology,
    frames: usize,
    seed: u64,
) -> Result<Dataset> {
    SynthGenerator::new(topo, SynthSpec::new(n_classes, per_class, frames, seed))?.generate()
}
