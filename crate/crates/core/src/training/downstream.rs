use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;

use super::checkpoint::{hash_text, CheckpointBundle};
use super::classify::{argmax, cross_entropy, top1_accuracy};
use super::metrics::MetricsRecord;
use super::optim::{adamw_step, AdamWState, Schedule};
use super::parallel::map_ordered;
use super::pipeline::{build_encoder, Pipeline};
use super::pretrain::checkpoint_encoder;
use crate::data::rng::{slot, stream_rng};
use crate::data::{category_balanced_subset, Dataset, Stream};
use crate::encoder::{accumulate, Encoder, ParamSet, StgcnConfig};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Protocol {
    Linear,
    SemiSupervised,
    Finetune,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Linear => "linear",
            Protocol::SemiSupervised => "semi",
            Protocol::Finetune => "finetune",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DownstreamConfig {
    pub encoder: StgcnConfig,
    pub variational: bool,
    pub stream: Stream,
    pub lr: f64,
    pub epochs: usize,
    /// The rate drops ×0.1 after this fraction of the epochs.
    pub milestone_fraction: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub workers: usize,
}

impl DownstreamConfig {
    pub fn desk_linear(seed: u64) -> Self {
        Self {
            encoder: StgcnConfig::desk(),
            variational: true,
            stream: Stream::Joint,
            lr: 0.03,
            epochs: 50,
            milestone_fraction: 0.8,
            batch_size: 32,
            weight_decay: 1e-4,
            seed,
            workers: 1,
        }
    }

    pub fn desk_finetune(seed: u64) -> Self {
        Self {
            lr: 0.01,
            epochs: 20,
            ..Self::desk_linear(seed)
        }
    }

    pub fn schedule(&self) -> Result<Schedule> {
        let m = (self.milestone_fraction * self.epochs as f64).round() as usize;
        let milestones = if m > 0 && m < self.epochs { vec![(m, 0.1)] } else { Vec::new() };
        Schedule::new(self.lr, milestones)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.schedule()?;
        if self.batch_size == 0 {
            return Err(Error::contract("batch size must be positive"));
        }
        if !(0.0..=1.0).contains(&self.milestone_fraction) {
            return Err(Error::contract("milestone fraction must lie in [0, 1]"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::contract("weight decay must be ≥ 0"));
        }
        Ok(())
    }

    pub fn fingerprint(&self, protocol: Protocol) -> u64 {
        let mut c = self.clone();
        c.workers = 1;
        hash_text(&format!("{} {c:?}", protocol.name()))
    }
}

/// Everything a downstream run produces.
#[derive(Clone, Debug)]
pub struct DownstreamOutcome {
    /// One test-split record per epoch (a single epoch-0 record when no training happens).
    pub records: Vec<MetricsRecord>,
    pub top1: f64,
    pub test_logits: Vec<Vec<f64>>,
    pub test_labels: Vec<usize>,
    pub encoder_params: ParamSet,
    pub classifier: ParamSet,
    pub checkpoint: CheckpointBundle,
}

/// Fresh affine classifier `cls.w [d, C]`, `cls.b [C]`.
pub fn init_classifier<R: Rng + ?Sized>(d: usize, n_classes: usize, rng: &mut R) -> ParamSet {
    let bound = (1.0 / d as f64).sqrt();
    let w = (0..d * n_classes).map(|_| rng.random_range(-bound..bound)).collect();
    let mut p = ParamSet::new();
    p.push("w", Tensor::matrix(d, n_classes, w).expect("positive extents"));
    p.push("b", Tensor::zeros(&[n_classes]));
    p
}

/// `logits = μ W + b` on a tape.
pub fn classifier_forward(tape: &mut Tape, mu: Var, w: Var, b: Var) -> Result<Var> {
    let d = tape.value(mu).numel();
    let row = tape.reshape(mu, &[1, d])?;
    let y = tape.matmul(row, w)?;
    let y = tape.add_bias(y, b)?;
    let c = tape.value(y).numel();
    tape.reshape(y, &[c])
}

fn check_splits(train: &Dataset, test: &Dataset) -> Result<()> {
    if train.n_classes() != test.n_classes() {
        return Err(Error::contract(format!(
            "train split has {} classes, test split {}",
            train.n_classes(),
            test.n_classes()
        )));
    }
    if train.topology() != test.topology() {
        return Err(Error::contract("train and test splits use different topologies"));
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::contract("train and test splits must be nonempty"));
    }
    Ok(())
}

fn logits_from_mu(cls: &ParamSet, mu: &Tensor) -> Result<Vec<f64>> {
    let mut t = Tape::new();
    let m = t.constant(mu.clone())?;
    let b = cls.bind(&mut t, false)?;
    let l = classifier_forward(&mut t, m, b[0], b[1])?;
    Ok(t.value(l).data().to_vec())
}

fn evaluate(protocol: &str, epoch: usize, logits: &[Vec<f64>], labels: &[usize], start: Instant) -> Result<MetricsRecord> {
    let mut ce = 0.0;
    for (l, &y) in logits.iter().zip(labels) {
        let mut t = Tape::new();
        let v = t.constant(Tensor::vector(l.clone()))?;
        let c = cross_entropy(&mut t, v, y)?;
        ce += t.value(c).item();
    }
    let preds: Vec<usize> = logits.iter().map(|l| argmax(l)).collect();
    Ok(MetricsRecord {
        ce_loss: Some(ce / labels.len() as f64),
        top1: Some(top1_accuracy(&preds, labels)?),
        seconds: start.elapsed().as_secs_f64(),
        ..MetricsRecord::new(epoch, "test", protocol)
    })
}

fn shuffled(seed: u64, n: usize, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, epoch as u64, slot::SHUFFLE, 1));
    order
}

struct Run<'a> {
    cfg: &'a DownstreamConfig,
    encoder: Encoder,
    protocol: Protocol,
}

impl Run<'_> {
    fn inputs(&self, d: &Dataset) -> Result<Vec<Tensor>> {
        let pipe = Pipeline::new(self.cfg.stream, d.topology().clone());
        map_ordered(self.cfg.workers, d.len(), |i| pipe.plain(&d.samples()[i]))
            .into_iter()
            .collect()
    }

    fn mu(&self, params: &ParamSet, x: &Tensor) -> Result<Tensor> {
        let mut t = Tape::new();
        let xv = t.constant(x.clone())?;
        let b = params.bind(&mut t, false)?;
        let out = self.encoder.forward(&mut t, xv, &b)?;
        Ok(t.value(out.mu).clone())
    }

    fn outcome(
        &self,
        records: Vec<MetricsRecord>,
        test_logits: Vec<Vec<f64>>,
        test_labels: Vec<usize>,
        encoder_params: ParamSet,
        classifier: ParamSet,
    ) -> DownstreamOutcome {
        let mut checkpoint = CheckpointBundle::new(self.cfg.fingerprint(self.protocol));
        checkpoint.push_params("query", &encoder_params);
        checkpoint.push_params("cls", &classifier);
        DownstreamOutcome {
            top1: records.last().and_then(|r| r.top1).unwrap_or(0.0),
            records,
            test_logits,
            test_labels,
            encoder_params,
            classifier,
            checkpoint,
        }
    }
}

fn setup<'a>(cfg: &'a DownstreamConfig, protocol: Protocol, train: &Dataset, test: &Dataset) -> Result<Run<'a>> {
    cfg.validate()?;
    check_splits(train, test)?;
    Ok(Run {
        cfg,
        encoder: build_encoder(&cfg.encoder, train.topology(), cfg.variational)?,
        protocol,
    })
}

/// Trains an affine classifier on fixed features, evaluating on the test
/// features after every epoch. Returns the records, the classifier and the
/// final test logits.
pub fn linear_probe(
    train_x: &[Tensor],
    train_y: &[usize],
    test_x: &[Tensor],
    test_y: &[usize],
    n_classes: usize,
    cfg: &DownstreamConfig,
) -> Result<(Vec<MetricsRecord>, ParamSet, Vec<Vec<f64>>)> {
    cfg.validate()?;
    if train_x.is_empty() || test_x.is_empty() || train_x.len() != train_y.len() || test_x.len() != test_y.len() {
        return Err(Error::contract("linear probe needs nonempty, equally long features and labels"));
    }
    if let Some(&y) = train_y.iter().chain(test_y).find(|&&y| y >= n_classes) {
        return Err(Error::contract(format!("label {y} ≥ {n_classes} classes")));
    }
    let d = train_x[0].numel();
    if train_x.iter().chain(test_x).any(|x| x.shape() != [d]) {
        return Err(Error::dim("all features must be vectors of one length"));
    }
    let mut cls = init_classifier(d, n_classes, &mut stream_rng(cfg.seed, 0, slot::CLASSIFIER_INIT, 0));
    let mut adam = AdamWState::new(&cls, cfg.lr, cfg.weight_decay);
    let schedule = cfg.schedule()?;
    let test_logits = |cls: &ParamSet| -> Result<Vec<Vec<f64>>> { test_x.iter().map(|m| logits_from_mu(cls, m)).collect() };
    let name = Protocol::Linear.name();
    let mut records = Vec::new();
    if cfg.epochs == 0 {
        records.push(evaluate(name, 0, &test_logits(&cls)?, test_y, Instant::now())?);
    }
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        adam.lr = schedule.lr_at(epoch);
        for batch in shuffled(cfg.seed, train_x.len(), epoch).chunks(cfg.batch_size) {
            let weight = 1.0 / batch.len() as f64;
            let mut grads: Vec<Tensor> = cls.tensors().map(|t| Tensor::zeros(t.shape())).collect();
            for &i in batch {
                let mut t = Tape::new();
                let m = t.constant(train_x[i].clone())?;
                let b = cls.bind(&mut t, true)?;
                let logits = classifier_forward(&mut t, m, b[0], b[1])?;
                let ce = cross_entropy(&mut t, logits, train_y[i])?;
                let l = t.scale(ce, weight)?;
                t.backward(l)?;
                accumulate(&mut grads, &cls.grads_from(&t, &b));
            }
            adamw_step(&mut cls, &grads, &mut adam)?;
        }
        records.push(evaluate(name, epoch + 1, &test_logits(&cls)?, test_y, start)?);
    }
    let logits = test_logits(&cls)?;
    Ok((records, cls, logits))
}

/// Frozen encoder; a linear classifier on μ is trained with all labels.
pub fn linear_eval(
    checkpoint: &CheckpointBundle,
    train: &Dataset,
    test: &Dataset,
    cfg: &DownstreamConfig,
) -> Result<DownstreamOutcome> {
    let run = setup(cfg, Protocol::Linear, train, test)?;
    let params = checkpoint_encoder(checkpoint)?;
    run.encoder.check_params(&params)?;
    let feats = |d: &Dataset| -> Result<Vec<Tensor>> {
        let xs = run.inputs(d)?;
        map_ordered(cfg.workers, xs.len(), |i| run.mu(&params, &xs[i]))
            .into_iter()
            .collect()
    };
    let train_mu = feats(train)?;
    let test_mu = feats(test)?;
    let test_labels = test.labels();
    let (records, cls, logits) = linear_probe(&train_mu, &train.labels(), &test_mu, &test_labels, train.n_classes(), cfg)?;
    Ok(run.outcome(records, logits, test_labels, params, cls))
}

fn end_to_end(
    run: &Run,
    mut params: ParamSet,
    train: &Dataset,
    test: &Dataset,
) -> Result<DownstreamOutcome> {
    let cfg = run.cfg;
    run.encoder.check_params(&params)?;
    let train_x = run.inputs(train)?;
    let test_x = run.inputs(test)?;
    let train_labels = train.labels();
    let test_labels = test.labels();
    let mut cls = init_classifier(
        cfg.encoder.latent_dim,
        train.n_classes(),
        &mut stream_rng(cfg.seed, 0, slot::CLASSIFIER_INIT, 0),
    );
    let ne = params.len();
    let join = |p: &ParamSet, c: &ParamSet| {
        let mut all = p.prefixed("query").into_entries();
        all.extend(c.prefixed("cls").into_entries());
        ParamSet::from_entries(all)
    };
    let mut joint = join(&params, &cls);
    let mut adam = AdamWState::new(&joint, cfg.lr, cfg.weight_decay);
    let schedule = cfg.schedule()?;

    let eval = |p: &ParamSet, c: &ParamSet| -> Result<Vec<Vec<f64>>> {
        map_ordered(cfg.workers, test_x.len(), |i| logits_from_mu(c, &run.mu(p, &test_x[i])?))
            .into_iter()
            .collect()
    };
    let mut records = Vec::new();
    if cfg.epochs == 0 {
        records.push(evaluate(run.protocol.name(), 0, &eval(&params, &cls)?, &test_labels, Instant::now())?);
    }
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        adam.lr = schedule.lr_at(epoch);
        for batch in shuffled(cfg.seed, train_x.len(), epoch).chunks(cfg.batch_size) {
            let weight = 1.0 / batch.len() as f64;
            let step = |j: usize| -> Result<Vec<Tensor>> {
                let i = batch[j];
                let mut t = Tape::new();
                let x = t.constant(train_x[i].clone())?;
                let b = joint.bind(&mut t, true)?;
                let out = run.encoder.forward(&mut t, x, &b[..ne])?;
                let logits = classifier_forward(&mut t, out.mu, b[ne], b[ne + 1])?;
                let ce = cross_entropy(&mut t, logits, train_labels[i])?;
                let l = t.scale(ce, weight)?;
                t.backward(l)?;
                Ok(joint.grads_from(&t, &b))
            };
            let outs = map_ordered(cfg.workers, batch.len(), step);
            let mut grads: Vec<Tensor> = joint.tensors().map(|t| Tensor::zeros(t.shape())).collect();
            for g in outs {
                accumulate(&mut grads, &g?);
            }
            adamw_step(&mut joint, &grads, &mut adam)?;
        }
        params = joint.strip_prefix("query");
        cls = joint.strip_prefix("cls");
        records.push(evaluate(run.protocol.name(), epoch + 1, &eval(&params, &cls)?, &test_labels, start)?);
    }
    let logits = eval(&params, &cls)?;
    Ok(run.outcome(records, logits, test_labels, params, cls))
}

/// End-to-end training on a category-balanced `fraction` of the labels.
pub fn semi_supervised(
    checkpoint: &CheckpointBundle,
    train: &Dataset,
    test: &Dataset,
    fraction: f64,
    cfg: &DownstreamConfig,
) -> Result<DownstreamOutcome> {
    let run = setup(cfg, Protocol::SemiSupervised, train, test)?;
    let subset = category_balanced_subset(train, fraction, &mut stream_rng(cfg.seed, 0, slot::SUBSET, 0))?;
    end_to_end(&run, checkpoint_encoder(checkpoint)?, &subset, test)
}

/// End-to-end training with every label.
pub fn finetune(
    checkpoint: &CheckpointBundle,
    train: &Dataset,
    test: &Dataset,
    cfg: &DownstreamConfig,
) -> Result<DownstreamOutcome> {
    let run = setup(cfg, Protocol::Finetune, train, test)?;
    end_to_end(&run, checkpoint_encoder(checkpoint)?, train, test)
}
