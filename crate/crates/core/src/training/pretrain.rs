use std::time::Instant;

use rand::seq::SliceRandom;

use super::checkpoint::{hash_text, CheckpointBundle};
use super::metrics::MetricsRecord;
use super::optim::{adamw_step, AdamWState, Schedule};
use super::parallel::map_ordered;
use super::pipeline::{build_encoder, standard_normal, Pipeline};
use crate::contrastive::{infonce_loss, total_loss, Branch, EncoderPair, LossTerms, LossValues, MemoryQueue};
use crate::data::rng::{slot, stream_rng, view};
use crate::data::{AugmentationConfig, Dataset, Stream};
use crate::encoder::{accumulate, reparameterize, Encoder, ParamSet, StgcnConfig};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub encoder: StgcnConfig,
    /// `false` drops the log-variance head and both KL terms; `z = μ`.
    pub variational: bool,
    pub stream: Stream,
    pub augment: AugmentationConfig,
    pub tau: f64,
    pub momentum: f64,
    pub queue_size: usize,
    pub lr: f64,
    pub milestones: Vec<(usize, f64)>,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Threads for per-sample work; results do not depend on it.
    pub workers: usize,
}

impl PretrainConfig {
    pub fn desk(seed: u64) -> Self {
        Self {
            encoder: StgcnConfig::desk(),
            variational: true,
            stream: Stream::Joint,
            augment: AugmentationConfig::default(),
            tau: 0.07,
            momentum: 0.99,
            queue_size: 512,
            lr: 0.001,
            milestones: vec![(25, 0.1)],
            weight_decay: 1e-4,
            epochs: 30,
            batch_size: 32,
            seed,
            workers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        self.augment.validate()?;
        Schedule::new(self.lr, self.milestones.clone())?;
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::contract(format!("temperature must be positive, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.momentum) {
            return Err(Error::contract(format!("momentum {} outside [0, 1]", self.momentum)));
        }
        if self.queue_size == 0 || self.batch_size == 0 {
            return Err(Error::contract("queue size and batch size must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::contract("weight decay must be ≥ 0"));
        }
        Ok(())
    }

    /// Hash of every field that affects results.
    pub fn fingerprint(&self) -> u64 {
        let mut c = self.clone();
        c.workers = 1;
        hash_text(&format!("pretrain {c:?}"))
    }
}

/// Mutable state of one pretraining run.
pub struct Pretrainer<'a> {
    cfg: PretrainConfig,
    data: &'a Dataset,
    pipeline: Pipeline,
    encoder: Encoder,
    schedule: Schedule,
    pub pair: EncoderPair,
    pub adam: AdamWState,
    pub queue: MemoryQueue,
    epoch: usize,
    config_hash: u64,
}

struct SampleOut {
    grads: Vec<Tensor>,
    loss: LossValues,
    key: Vec<f64>,
}

fn seed_tensor(seed: u64, epoch: usize) -> Tensor {
    Tensor::vector(vec![(seed & 0xffff_ffff) as f64, (seed >> 32) as f64, epoch as f64])
}

impl<'a> Pretrainer<'a> {
    pub fn new(cfg: PretrainConfig, data: &'a Dataset, config_hash: u64) -> Result<Self> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::contract("pretraining needs at least one sample"));
        }
        let encoder = build_encoder(&cfg.encoder, data.topology(), cfg.variational)?;
        let query = encoder.init_params(&mut stream_rng(cfg.seed, 0, slot::INIT, 0));
        let queue = MemoryQueue::random(
            cfg.queue_size,
            cfg.encoder.latent_dim,
            &mut stream_rng(cfg.seed, 0, slot::QUEUE_INIT, 0),
        )?;
        let adam = AdamWState::new(&query, cfg.lr, cfg.weight_decay);
        Ok(Self {
            pipeline: Pipeline::new(cfg.stream, data.topology().clone()),
            schedule: Schedule::new(cfg.lr, cfg.milestones.clone())?,
            pair: EncoderPair::new(query, cfg.momentum)?,
            encoder,
            adam,
            queue,
            data,
            cfg,
            epoch: 0,
            config_hash,
        })
    }

    /// Restores a run from [`Pretrainer::checkpoint`] output.
    pub fn resume(cfg: PretrainConfig, data: &'a Dataset, bundle: &CheckpointBundle, config_hash: u64) -> Result<Self> {
        bundle.ensure_hash(config_hash)?;
        let mut p = Self::new(cfg, data, config_hash)?;
        let query = bundle.params("query");
        let key = bundle.params("key");
        query.ensure_same_structure(&p.pair.query)?;
        key.ensure_same_structure(&p.pair.key)?;
        let moments = |prefix: &str| -> Result<Vec<Tensor>> {
            let m = bundle.params(prefix);
            m.ensure_same_structure(&p.pair.query)?;
            Ok(m.into_entries().into_iter().map(|(_, t)| t).collect())
        };
        p.adam.m = moments("adam.m")?;
        p.adam.v = moments("adam.v")?;
        p.adam.step = bundle.require("adam.step")?.item() as u64;
        p.queue = MemoryQueue::from_tensors(bundle.require("queue.slots")?, bundle.require("queue.meta")?)?;
        let state = bundle.require("rng.state")?;
        if state.data()[..2] != seed_tensor(p.cfg.seed, 0).data()[..2] {
            return Err(Error::contract("checkpoint was written under a different seed"));
        }
        p.epoch = state.data()[2] as usize;
        p.pair.query = query;
        p.pair.key = key;
        Ok(p)
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn config(&self) -> &PretrainConfig {
        &self.cfg
    }

    /// Epochs completed so far.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    fn sample_step(&self, idx: usize, epoch: usize, negatives: Option<&Tensor>, weight: f64) -> Result<SampleOut> {
        let s = &self.data.samples()[idx];
        let (seed, e, i) = (self.cfg.seed, epoch as u64, idx as u64);
        let xq = self.pipeline.augmented(s, &self.cfg.augment, &mut stream_rng(seed, e, i, view::QUERY_AUG))?;
        let xk = self.pipeline.augmented(s, &self.cfg.augment, &mut stream_rng(seed, e, i, view::KEY_AUG))?;
        let d = self.cfg.encoder.latent_dim;
        let xi_q = standard_normal(d, &mut stream_rng(seed, e, i, view::QUERY_NOISE));
        let xi_k = standard_normal(d, &mut stream_rng(seed, e, i, view::KEY_NOISE));

        let mut kt = Tape::new();
        let kx = kt.constant(xk)?;
        let kb = self.pair.key.bind(&mut kt, false)?;
        let ko = self.encoder.forward(&mut kt, kx, &kb)?;
        let zk = match ko.logvar {
            Some(lv) => reparameterize(&mut kt, ko.mu, lv, &xi_k)?,
            None => ko.mu,
        };

        let mut qt = Tape::new();
        let qx = qt.constant(xq)?;
        let qb = self.pair.query.bind(&mut qt, true)?;
        let qo = self.encoder.forward(&mut qt, qx, &qb)?;
        let zk_q = qt.constant(kt.value(zk).clone())?;
        let terms = match (qo.logvar, ko.logvar) {
            (Some(lv_q), Some(lv_k)) => {
                let zq = reparameterize(&mut qt, qo.mu, lv_q, &xi_q)?;
                let mu_k = qt.constant(kt.value(ko.mu).clone())?;
                let lv_k = qt.constant(kt.value(lv_k).clone())?;
                total_loss(
                    &mut qt,
                    Branch { z: zq, mu: qo.mu, logvar: lv_q },
                    Branch { z: zk_q, mu: mu_k, logvar: lv_k },
                    negatives,
                    self.cfg.tau,
                )?
            }
            _ => {
                let l = infonce_loss(&mut qt, qo.mu, zk_q, negatives, self.cfg.tau)?;
                LossTerms {
                    total: l,
                    infonce: l,
                    kl_q: None,
                    kl_k: None,
                }
            }
        };
        let scaled = qt.scale(terms.total, weight)?;
        qt.backward(scaled)?;

        let z = kt.value(zk).data();
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::DegenerateInput(format!("key latent of sample {idx} is zero")));
        }
        Ok(SampleOut {
            grads: self.pair.query.grads_from(&qt, &qb),
            loss: terms.values(&qt),
            key: z.iter().map(|v| v / norm).collect(),
        })
    }

    /// One pass over the data in a seeded shuffled order.
    pub fn run_epoch(&mut self) -> Result<MetricsRecord> {
        let start = Instant::now();
        let epoch = self.epoch;
        let mut order: Vec<usize> = (0..self.data.len()).collect();
        order.shuffle(&mut stream_rng(self.cfg.seed, epoch as u64, slot::SHUFFLE, 0));
        self.adam.lr = self.schedule.lr_at(epoch);
        let mut sums = LossValues::default();
        for batch in order.chunks(self.cfg.batch_size) {
            let negatives = self.queue.negatives();
            let weight = 1.0 / batch.len() as f64;
            let outs = {
                let this = &*self;
                map_ordered(self.cfg.workers, batch.len(), |j| {
                    this.sample_step(batch[j], epoch, negatives.as_ref(), weight)
                })
            };
            let mut grads: Vec<Tensor> = self.pair.query.tensors().map(|t| Tensor::zeros(t.shape())).collect();
            let mut keys = Vec::with_capacity(batch.len());
            for out in outs {
                let out = out?;
                accumulate(&mut grads, &out.grads);
                sums.total += out.loss.total;
                sums.infonce += out.loss.infonce;
                sums.kl_q += out.loss.kl_q;
                sums.kl_k += out.loss.kl_k;
                keys.push(out.key);
            }
            adamw_step(&mut self.pair.query, &grads, &mut self.adam)?;
            self.pair.momentum_update()?;
            self.queue.push(&keys)?;
        }
        self.epoch += 1;
        let n = self.data.len() as f64;
        let kl = |v: f64| self.cfg.variational.then_some(v / n);
        Ok(MetricsRecord {
            loss_total: Some(sums.total / n),
            loss_infonce: Some(sums.infonce / n),
            loss_kl_q: kl(sums.kl_q),
            loss_kl_k: kl(sums.kl_k),
            seconds: start.elapsed().as_secs_f64(),
            ..MetricsRecord::new(self.epoch, "train", "pretrain")
        })
    }

    /// Trains until `cfg.epochs` epochs are complete.
    pub fn run(&mut self) -> Result<Vec<MetricsRecord>> {
        let mut records = Vec::new();
        while self.epoch < self.cfg.epochs {
            records.push(self.run_epoch()?);
        }
        Ok(records)
    }

    pub fn checkpoint(&self) -> CheckpointBundle {
        let mut b = CheckpointBundle::new(self.config_hash);
        b.push_params("query", &self.pair.query);
        b.push_params("key", &self.pair.key);
        let names: Vec<&str> = self.pair.query.iter().map(|(n, _)| n).collect();
        for (prefix, buf) in [("adam.m", &self.adam.m), ("adam.v", &self.adam.v)] {
            for (n, t) in names.iter().zip(buf) {
                b.push(format!("{prefix}.{n}"), t.clone());
            }
        }
        b.push("adam.step", Tensor::scalar(self.adam.step as f64));
        let (slots, meta) = self.queue.to_tensors();
        b.push("queue.slots", slots);
        b.push("queue.meta", meta);
        b.push("rng.state", seed_tensor(self.cfg.seed, self.epoch));
        b
    }
}

/// Result of a full pretraining run.
#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub checkpoint: CheckpointBundle,
    pub records: Vec<MetricsRecord>,
}

pub fn pretrain(dataset: &Dataset, cfg: &PretrainConfig) -> Result<PretrainOutcome> {
    let mut p = Pretrainer::new(cfg.clone(), dataset, cfg.fingerprint())?;
    let records = p.run()?;
    Ok(PretrainOutcome {
        checkpoint: p.checkpoint(),
        records,
    })
}

/// Query-encoder parameters stored in a checkpoint.
pub fn checkpoint_encoder(bundle: &CheckpointBundle) -> Result<ParamSet> {
    let p = bundle.params("query");
    if p.is_empty() {
        return Err(Error::contract("checkpoint holds no query encoder"));
    }
    Ok(p)
}
