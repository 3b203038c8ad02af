//! Flat `key = value` run configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::data::{AugmentationConfig, Stream};
use crate::encoder::StgcnConfig;
use crate::error::{Error, Result};
use crate::training::{hash_text, DownstreamConfig, PretrainConfig, Protocol};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunProtocol {
    Pretrain,
    Downstream(Protocol),
}

impl RunProtocol {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pretrain" => Some(RunProtocol::Pretrain),
            "linear" => Some(RunProtocol::Downstream(Protocol::Linear)),
            "semi" => Some(RunProtocol::Downstream(Protocol::SemiSupervised)),
            "finetune" => Some(RunProtocol::Downstream(Protocol::Finetune)),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            RunProtocol::Pretrain => "pretrain",
            RunProtocol::Downstream(p) => p.name(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamSelection {
    One(Stream),
    All,
}

impl StreamSelection {
    pub fn streams(self) -> Vec<Stream> {
        match self {
            StreamSelection::One(s) => vec![s],
            StreamSelection::All => Stream::ALL.to_vec(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            StreamSelection::One(s) => s.name(),
            StreamSelection::All => "all",
        }
    }
}

/// Fully resolved run settings.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub protocol: RunProtocol,
    pub preset: String,
    pub data_path: Option<String>,
    pub data_topology: String,
    pub synth_classes: usize,
    pub synth_per_class: usize,
    pub synth_frames: usize,
    pub synth_seed: u64,
    pub split_modulus: u32,
    pub stream: StreamSelection,
    pub encoder_preset: String,
    pub latent_dim: usize,
    pub variational: bool,
    pub tau: f64,
    pub momentum: f64,
    pub queue_size: usize,
    pub shear: f64,
    pub crop_ratio: usize,
    pub pretrain_lr: f64,
    pub pretrain_epochs: usize,
    pub pretrain_milestone: usize,
    pub linear_lr: f64,
    pub linear_epochs: usize,
    pub finetune_lr: f64,
    pub finetune_epochs: usize,
    pub milestone_fraction: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub fraction: f64,
    pub seed: u64,
    pub workers: usize,
    pub checkpoint: Option<String>,
    pub resume: Option<String>,
    pub out_dir: String,
    pub fusion_weights: Vec<f64>,
}

/// Every accepted key, in canonical order.
pub const KEYS: &[&str] = &[
    "protocol",
    "preset",
    "data.path",
    "data.topology",
    "data.synth.classes",
    "data.synth.per_class",
    "data.synth.frames",
    "data.synth.seed",
    "data.split_modulus",
    "stream",
    "encoder.preset",
    "encoder.latent_dim",
    "variational",
    "tau",
    "momentum",
    "queue_size",
    "augment.shear",
    "augment.crop_ratio",
    "pretrain.lr",
    "pretrain.epochs",
    "pretrain.milestone",
    "linear.lr",
    "linear.epochs",
    "finetune.lr",
    "finetune.epochs",
    "eval.milestone_fraction",
    "batch_size",
    "weight_decay",
    "fraction",
    "seed",
    "workers",
    "checkpoint",
    "resume",
    "out_dir",
    "fusion.weights",
];

/// Keys that locate files or set parallelism; they do not change results.
const UNHASHED: &[&str] = &["checkpoint", "resume", "out_dir", "workers", "pretrain.epochs"];

impl RunConfig {
    pub fn desk() -> Self {
        Self {
            protocol: RunProtocol::Pretrain,
            preset: "desk".into(),
            data_path: None,
            data_topology: "default17".into(),
            synth_classes: 8,
            synth_per_class: 80,
            synth_frames: 24,
            synth_seed: 0,
            split_modulus: 4,
            stream: StreamSelection::One(Stream::Joint),
            encoder_preset: "desk".into(),
            latent_dim: 16,
            variational: true,
            tau: 0.07,
            momentum: 0.99,
            queue_size: 512,
            shear: 0.5,
            crop_ratio: 6,
            pretrain_lr: 0.001,
            pretrain_epochs: 30,
            pretrain_milestone: 25,
            linear_lr: 0.03,
            linear_epochs: 50,
            finetune_lr: 0.01,
            finetune_epochs: 20,
            milestone_fraction: 0.8,
            batch_size: 32,
            weight_decay: 1e-4,
            fraction: 0.01,
            seed: 0,
            workers: 1,
            checkpoint: None,
            resume: None,
            out_dir: "runs".into(),
            fusion_weights: vec![0.6, 0.6, 0.4],
        }
    }

    pub fn paper() -> Self {
        Self {
            preset: "paper".into(),
            synth_frames: 50,
            encoder_preset: "paper-quarter".into(),
            latent_dim: 128,
            momentum: 0.999,
            queue_size: 30000,
            pretrain_epochs: 300,
            pretrain_milestone: 250,
            linear_epochs: 100,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::config("preset", format!("unknown preset `{other}` (desk|paper)"))),
        }
    }

    /// Parses `text` on top of the preset it names (or `desk`), then
    /// applies `overrides` in order.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(line, format!("line {} is not `key = value`", i + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        pairs.extend(overrides.iter().cloned());
        let base = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "preset")
            .map_or("desk", |(_, v)| v.as_str());
        let mut cfg = Self::preset(base)?;
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::config(key, format!("cannot parse `{v}`")))
        }
        fn opt(v: &str) -> Option<String> {
            (!v.is_empty()).then(|| v.to_string())
        }
        let v = value;
        match key {
            "protocol" => {
                self.protocol = RunProtocol::parse(v)
                    .ok_or_else(|| Error::config(key, format!("`{v}` is not pretrain|linear|semi|finetune")))?
            }
            "preset" => {
                Self::preset(v)?;
                self.preset = v.to_string();
            }
            "data.path" => self.data_path = opt(v),
            "data.topology" => self.data_topology = v.to_string(),
            "data.synth.classes" => self.synth_classes = num(key, v)?,
            "data.synth.per_class" => self.synth_per_class = num(key, v)?,
            "data.synth.frames" => self.synth_frames = num(key, v)?,
            "data.synth.seed" => self.synth_seed = num(key, v)?,
            "data.split_modulus" => self.split_modulus = num(key, v)?,
            "stream" => {
                self.stream = match v {
                    "all" => StreamSelection::All,
                    s => StreamSelection::One(
                        Stream::parse(s).ok_or_else(|| Error::config(key, format!("`{s}` is not joint|bone|motion|all")))?,
                    ),
                }
            }
            "encoder.preset" => self.encoder_preset = v.to_string(),
            "encoder.latent_dim" => self.latent_dim = num(key, v)?,
            "variational" => self.variational = num(key, v)?,
            "tau" => self.tau = num(key, v)?,
            "momentum" => self.momentum = num(key, v)?,
            "queue_size" => self.queue_size = num(key, v)?,
            "augment.shear" => self.shear = num(key, v)?,
            "augment.crop_ratio" => self.crop_ratio = num(key, v)?,
            "pretrain.lr" => self.pretrain_lr = num(key, v)?,
            "pretrain.epochs" => self.pretrain_epochs = num(key, v)?,
            "pretrain.milestone" => self.pretrain_milestone = num(key, v)?,
            "linear.lr" => self.linear_lr = num(key, v)?,
            "linear.epochs" => self.linear_epochs = num(key, v)?,
            "finetune.lr" => self.finetune_lr = num(key, v)?,
            "finetune.epochs" => self.finetune_epochs = num(key, v)?,
            "eval.milestone_fraction" => self.milestone_fraction = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "weight_decay" => self.weight_decay = num(key, v)?,
            "fraction" => self.fraction = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "workers" => self.workers = num(key, v)?,
            "checkpoint" => self.checkpoint = opt(v),
            "resume" => self.resume = opt(v),
            "out_dir" => self.out_dir = v.to_string(),
            "fusion.weights" => {
                self.fusion_weights = v
                    .split(',')
                    .map(|w| num::<f64>(key, w.trim()))
                    .collect::<Result<_>>()?
            }
            other => return Err(Error::config(other, "unknown key")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, msg: &str| Err(Error::config(key, msg));
        if StgcnConfig::preset(&self.encoder_preset).is_none() {
            return bad("encoder.preset", "expected desk|paper-quarter");
        }
        if !matches!(self.data_topology.as_str(), "default17" | "ntu25") {
            return bad("data.topology", "expected default17|ntu25");
        }
        if self.data_path.is_none() && (self.synth_classes < 2 || self.synth_per_class < 2 || self.synth_frames < 2) {
            return bad("data.synth.classes", "synthetic data needs ≥ 2 classes, ≥ 2 per class and ≥ 2 frames");
        }
        if self.split_modulus < 2 {
            return bad("data.split_modulus", "must be ≥ 2");
        }
        if self.latent_dim < 2 {
            return bad("encoder.latent_dim", "must be ≥ 2");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau", "must be positive");
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return bad("momentum", "must lie in [0, 1]");
        }
        if self.queue_size == 0 {
            return bad("queue_size", "must be positive");
        }
        if !(self.shear >= 0.0 && self.shear.is_finite()) {
            return bad("augment.shear", "must be ≥ 0");
        }
        if self.crop_ratio == 0 {
            return bad("augment.crop_ratio", "must be ≥ 1");
        }
        for (key, lr) in [
            ("pretrain.lr", self.pretrain_lr),
            ("linear.lr", self.linear_lr),
            ("finetune.lr", self.finetune_lr),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return bad(key, "must be positive");
            }
        }
        if !(0.0..=1.0).contains(&self.milestone_fraction) {
            return bad("eval.milestone_fraction", "must lie in [0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay", "must be ≥ 0");
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return bad("fraction", "must lie in (0, 1]");
        }
        if self.workers == 0 {
            return bad("workers", "must be ≥ 1");
        }
        if self.fusion_weights.len() != 3 || self.fusion_weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("fusion.weights", "expected three nonnegative weights (joint, bone, motion)");
        }
        match self.protocol {
            RunProtocol::Pretrain => {}
            RunProtocol::Downstream(_) => match &self.checkpoint {
                None => return bad("checkpoint", "downstream protocols need a pretrained checkpoint path"),
                Some(c) if self.stream == StreamSelection::All && !c.contains("{stream}") => {
                    return bad("checkpoint", "with stream = all the path must contain `{stream}`")
                }
                Some(_) => {}
            },
        }
        if self.resume.is_some() && self.protocol != RunProtocol::Pretrain {
            return bad("resume", "only pretraining can resume");
        }
        Ok(())
    }

    fn value_of(&self, key: &str) -> String {
        let f = |v: f64| format!("{v}");
        match key {
            "protocol" => self.protocol.name().into(),
            "preset" => self.preset.clone(),
            "data.path" => self.data_path.clone().unwrap_or_default(),
            "data.topology" => self.data_topology.clone(),
            "data.synth.classes" => self.synth_classes.to_string(),
            "data.synth.per_class" => self.synth_per_class.to_string(),
            "data.synth.frames" => self.synth_frames.to_string(),
            "data.synth.seed" => self.synth_seed.to_string(),
            "data.split_modulus" => self.split_modulus.to_string(),
            "stream" => self.stream.name().into(),
            "encoder.preset" => self.encoder_preset.clone(),
            "encoder.latent_dim" => self.latent_dim.to_string(),
            "variational" => self.variational.to_string(),
            "tau" => f(self.tau),
            "momentum" => f(self.momentum),
            "queue_size" => self.queue_size.to_string(),
            "augment.shear" => f(self.shear),
            "augment.crop_ratio" => self.crop_ratio.to_string(),
            "pretrain.lr" => f(self.pretrain_lr),
            "pretrain.epochs" => self.pretrain_epochs.to_string(),
            "pretrain.milestone" => self.pretrain_milestone.to_string(),
            "linear.lr" => f(self.linear_lr),
            "linear.epochs" => self.linear_epochs.to_string(),
            "finetune.lr" => f(self.finetune_lr),
            "finetune.epochs" => self.finetune_epochs.to_string(),
            "eval.milestone_fraction" => f(self.milestone_fraction),
            "batch_size" => self.batch_size.to_string(),
            "weight_decay" => f(self.weight_decay),
            "fraction" => f(self.fraction),
            "seed" => self.seed.to_string(),
            "workers" => self.workers.to_string(),
            "checkpoint" => self.checkpoint.clone().unwrap_or_default(),
            "resume" => self.resume.clone().unwrap_or_default(),
            "out_dir" => self.out_dir.clone(),
            "fusion.weights" => self.fusion_weights.iter().map(|w| f(*w)).collect::<Vec<_>>().join(","),
            other => unreachable!("unlisted key {other}"),
        }
    }

    /// Every key with its resolved value; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{key} = {}", self.value_of(key)).unwrap();
        }
        out
    }

    /// Hash of the result-relevant keys with `stream` fixed to the stream being trained.
    pub fn config_hash(&self, stream: Stream) -> u64 {
        let mut text = String::new();
        for key in KEYS.iter().filter(|k| !UNHASHED.contains(k)) {
            let value = if *key == "stream" { stream.name().to_string() } else { self.value_of(key) };
            writeln!(text, "{key} = {value}").unwrap();
        }
        hash_text(&text)
    }

    pub fn encoder_config(&self) -> StgcnConfig {
        let mut e = StgcnConfig::preset(&self.encoder_preset).expect("validated");
        e.latent_dim = self.latent_dim;
        e
    }

    pub fn pretrain_config(&self, stream: Stream) -> PretrainConfig {
        PretrainConfig {
            encoder: self.encoder_config(),
            variational: self.variational,
            stream,
            augment: AugmentationConfig {
                shear_amplitude: self.shear,
                crop_padding_ratio: self.crop_ratio,
                rng_seed: self.seed,
            },
            tau: self.tau,
            momentum: self.momentum,
            queue_size: self.queue_size,
            lr: self.pretrain_lr,
            milestones: if self.pretrain_milestone > 0 { vec![(self.pretrain_milestone, 0.1)] } else { Vec::new() },
            weight_decay: self.weight_decay,
            epochs: self.pretrain_epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            workers: self.workers,
        }
    }

    pub fn downstream_config(&self, protocol: Protocol, stream: Stream) -> DownstreamConfig {
        let (lr, epochs) = match protocol {
            Protocol::Linear => (self.linear_lr, self.linear_epochs),
            _ => (self.finetune_lr, self.finetune_epochs),
        };
        DownstreamConfig {
            encoder: self.encoder_config(),
            variational: self.variational,
            stream,
            lr,
            epochs,
            milestone_fraction: self.milestone_fraction,
            batch_size: self.batch_size,
            weight_decay: self.weight_decay,
            seed: self.seed,
            workers: self.workers,
        }
    }

    /// `out_dir`, placed under `root` when relative.
    pub fn output_dir(&self, root: Option<&Path>) -> PathBuf {
        let p = PathBuf::from(&self.out_dir);
        match root {
            Some(r) if p.is_relative() => r.join(p),
            _ => p,
        }
    }
}

/// Substitutes `{stream}` in a path template.
pub fn stream_path(template: &str, stream: Stream) -> PathBuf {
    PathBuf::from(template.replace("{stream}", stream.name()))
}
