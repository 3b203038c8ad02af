use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use super::config::{stream_path, RunConfig, RunProtocol, StreamSelection};
use super::{DumpArgs, FuseArgs, GenDataArgs, SaliencyArgs};
use crate::data::{load_dataset, save_dataset, synth_generate, Dataset, SkeletonTopology, Stream};
use crate::error::Error;
use crate::training::{
    build_encoder, embedding_dump, finetune, format_map, fuse_predictions, joint_saliency, linear_eval,
    read_rows, semi_supervised, top1_accuracy, write_logits, CheckpointBundle, MetricsRecord, Pipeline, Pretrainer,
    Protocol,
};

/// A failure mapped to an exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or config; exit 2.
    Usage(String),
    /// Anything that went wrong while running; exit 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => CliError::Usage(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

fn context(what: impl fmt::Display) -> impl FnOnce(Error) -> CliError {
    move |e| match e {
        Error::Config { .. } => CliError::Usage(e.to_string()),
        other => CliError::Runtime(format!("{what}: {other}")),
    }
}

fn topology(name: &str) -> Result<SkeletonTopology, CliError> {
    match name {
        "default17" => Ok(SkeletonTopology::default_17()),
        "ntu25" => Ok(SkeletonTopology::ntu_25()),
        other => Err(CliError::Usage(format!("unknown topology `{other}` (default17|ntu25)"))),
    }
}

pub fn cmd_gen_data(a: &GenDataArgs) -> Result<(), CliError> {
    let topo = topology(&a.topology)?;
    let d = synth_generate(a.classes, a.per_class, &topo, a.frames, a.seed)
        .map_err(|e| CliError::Usage(format!("invalid synthetic spec: {e}")))?;
    save_dataset(&d, &a.out).map_err(context(format!("writing {}", a.out.display())))?;
    for (name, count) in d.class_names().iter().zip(d.class_histogram()) {
        println!("{name}\t{count}");
    }
    println!("wrote {} samples to {}", d.len(), a.out.display());
    Ok(())
}

fn load_all(cfg: &RunConfig) -> Result<Dataset, CliError> {
    match &cfg.data_path {
        Some(p) => load_dataset(p).map_err(context(format!("loading {p}"))),
        None => synth_generate(
            cfg.synth_classes,
            cfg.synth_per_class,
            &topology(&cfg.data_topology)?,
            cfg.synth_frames,
            cfg.synth_seed,
        )
        .map_err(context("generating synthetic data")),
    }
}

/// The configured dataset split into `(train, test)` by subject.
pub fn load_split(cfg: &RunConfig) -> Result<(Dataset, Dataset), CliError> {
    let d = load_all(cfg)?;
    d.split_by_subject(cfg.split_modulus).map_err(context("splitting by subject"))
}

struct MetricsLog {
    file: fs::File,
}

impl MetricsLog {
    fn open(path: &Path) -> Result<Self, CliError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| CliError::Runtime(format!("opening {}: {e}", path.display())))?;
        Ok(Self { file })
    }

    fn write(&mut self, r: &MetricsRecord) -> Result<(), CliError> {
        writeln!(self.file, "{}", r.to_json_line()).map_err(|e| CliError::Runtime(format!("writing metrics: {e}")))
    }
}

fn label(base: &str, stream: Stream, sel: StreamSelection) -> String {
    match sel {
        StreamSelection::All => format!("{base}/{}", stream.name()),
        StreamSelection::One(_) => base.to_string(),
    }
}

pub fn cmd_run(cfg: &RunConfig, root: Option<&Path>) -> Result<(), CliError> {
    let out = cfg.output_dir(root);
    fs::create_dir_all(&out).map_err(|e| CliError::Runtime(format!("creating {}: {e}", out.display())))?;
    let protocol = cfg.protocol.name();
    fs::write(out.join(format!("{protocol}.cfg")), cfg.to_text())
        .map_err(|e| CliError::Runtime(format!("writing resolved config: {e}")))?;
    let (train, test) = load_split(cfg)?;
    let mut log = MetricsLog::open(&out.join("metrics.jsonl"))?;
    match cfg.protocol {
        RunProtocol::Pretrain => {
            for stream in cfg.stream.streams() {
                let pc = cfg.pretrain_config(stream);
                let hash = cfg.config_hash(stream);
                let mut p = match &cfg.resume {
                    Some(t) => {
                        let path = stream_path(t, stream);
                        let b = CheckpointBundle::load(&path).map_err(context(format!("loading {}", path.display())))?;
                        Pretrainer::resume(pc, &train, &b, hash).map_err(context("resuming"))?
                    }
                    None => Pretrainer::new(pc, &train, hash).map_err(context("pretraining"))?,
                };
                while p.epoch() < cfg.pretrain_epochs {
                    let mut r = p.run_epoch().map_err(context(format!("pretraining {}", stream.name())))?;
                    r.protocol = label("pretrain", stream, cfg.stream);
                    log.write(&r)?;
                }
                let path = out.join(format!("pretrain_{}.vclc", stream.name()));
                p.checkpoint().save(&path).map_err(context(format!("writing {}", path.display())))?;
            }
        }
        RunProtocol::Downstream(kind) => {
            let template = cfg.checkpoint.as_deref().expect("validated");
            let mut per_stream = Vec::new();
            for stream in cfg.stream.streams() {
                let path = stream_path(template, stream);
                let ck = CheckpointBundle::load(&path).map_err(context(format!("loading {}", path.display())))?;
                let dc = cfg.downstream_config(kind, stream);
                let what = format!("{} on {}", kind.name(), stream.name());
                let mut o = match kind {
                    Protocol::Linear => linear_eval(&ck, &train, &test, &dc),
                    Protocol::SemiSupervised => semi_supervised(&ck, &train, &test, cfg.fraction, &dc),
                    Protocol::Finetune => finetune(&ck, &train, &test, &dc),
                }
                .map_err(context(what))?;
                for r in &mut o.records {
                    r.protocol = label(kind.name(), stream, cfg.stream);
                    log.write(r)?;
                }
                o.checkpoint.config_hash = cfg.config_hash(stream);
                let stem = format!("{}_{}", kind.name(), stream.name());
                let ck_path = out.join(format!("{stem}.vclc"));
                o.checkpoint.save(&ck_path).map_err(context(format!("writing {}", ck_path.display())))?;
                write_logits(out.join(format!("logits_{stem}.csv")), &o.test_labels, &o.test_logits)
                    .map_err(context("writing logits"))?;
                println!("{}\ttop1 {:.4}", label(kind.name(), stream, cfg.stream), o.top1);
                per_stream.push(o);
            }
            if cfg.stream == StreamSelection::All {
                let labels = &per_stream[0].test_labels;
                let preds = (0..labels.len())
                    .map(|i| {
                        let l: Vec<&[f64]> = per_stream.iter().map(|o| o.test_logits[i].as_slice()).collect();
                        fuse_predictions(&l, &cfg.fusion_weights)
                    })
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(context("fusing"))?;
                let top1 = top1_accuracy(&preds, labels).map_err(context("fusing"))?;
                let epoch = per_stream[0].records.last().map_or(0, |r| r.epoch);
                let r = MetricsRecord {
                    top1: Some(top1),
                    ..MetricsRecord::new(epoch, "test", &format!("{}/fusion", kind.name()))
                };
                log.write(&r)?;
                println!("{}/fusion\ttop1 {top1:.4}", kind.name());
            }
        }
    }
    Ok(())
}

fn single_stream(cfg: &RunConfig) -> Result<Stream, CliError> {
    match cfg.stream {
        StreamSelection::One(s) => Ok(s),
        StreamSelection::All => Err(CliError::Usage("this command needs a single stream, not `all`".into())),
    }
}

pub fn cmd_saliency(a: &SaliencyArgs) -> Result<(), CliError> {
    let cfg = a.config.resolve()?;
    let stream = single_stream(&cfg)?;
    let d = load_all(&cfg)?;
    let sample = d.samples().get(a.index).ok_or_else(|| {
        CliError::Usage(format!("sample index {} out of range for {} samples", a.index, d.len()))
    })?;
    let target = a.target.unwrap_or(sample.label);
    if target >= d.n_classes() {
        return Err(CliError::Usage(format!("target class {target} ≥ {} classes", d.n_classes())));
    }
    let ck = CheckpointBundle::load(&a.checkpoint).map_err(context(format!("loading {}", a.checkpoint.display())))?;
    let enc = build_encoder(&cfg.encoder_config(), d.topology(), cfg.variational).map_err(context("building encoder"))?;
    let pipe = Pipeline::new(stream, d.topology().clone());
    let map = joint_saliency(&ck, &enc, &pipe, sample, target).map_err(context("saliency"))?;
    let text = format_map(&map);
    match &a.out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Runtime(format!("writing {}: {e}", p.display())))?,
        None => print!("{text}"),
    }
    Ok(())
}

pub fn cmd_dump_embeddings(a: &DumpArgs) -> Result<(), CliError> {
    let cfg = a.config.resolve()?;
    let stream = single_stream(&cfg)?;
    let d = load_all(&cfg)?;
    let ck = CheckpointBundle::load(&a.checkpoint).map_err(context(format!("loading {}", a.checkpoint.display())))?;
    let enc = build_encoder(&cfg.encoder_config(), d.topology(), cfg.variational).map_err(context("building encoder"))?;
    let pipe = Pipeline::new(stream, d.topology().clone());
    let n = embedding_dump(&ck, &enc, &pipe, &d, &a.out).map_err(context("dumping embeddings"))?;
    println!("wrote {n} rows to {}", a.out.display());
    Ok(())
}

pub fn cmd_fuse(a: &FuseArgs) -> Result<(), CliError> {
    if a.weights.len() != a.logits.len() {
        return Err(CliError::Usage(format!(
            "{} weights for {} logit files",
            a.weights.len(),
            a.logits.len()
        )));
    }
    let tables = a
        .logits
        .iter()
        .map(|p| read_rows(p).map_err(context(format!("reading {}", p.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    let n = tables[0].len();
    if tables.iter().any(|t| t.len() != n) || n == 0 {
        return Err(CliError::Runtime("logit files must have the same, nonzero number of rows".into()));
    }
    let labels: Vec<usize> = tables[0].iter().map(|(l, _)| *l).collect();
    let mut preds = Vec::with_capacity(n);
    for i in 0..n {
        if tables.iter().any(|t| t[i].0 != labels[i]) {
            return Err(CliError::Runtime(format!("row {i}: logit files disagree on the label")));
        }
        let l: Vec<&[f64]> = tables.iter().map(|t| t[i].1.as_slice()).collect();
        preds.push(fuse_predictions(&l, &a.weights).map_err(context("fusing"))?);
    }
    let top1 = top1_accuracy(&preds, &labels).map_err(context("scoring"))?;
    println!("top1 {top1:.4}");
    if let Some(p) = &a.out {
        let text: String = preds.iter().map(|p| format!("{p}\n")).collect();
        fs::write(p, text).map_err(|e| CliError::Runtime(format!("writing {}: {e}", p.display())))?;
    }
    Ok(())
}
