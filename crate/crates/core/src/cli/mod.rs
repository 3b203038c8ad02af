//! `vcl` command-line interface.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub use commands::{cmd_dump_embeddings, cmd_fuse, cmd_gen_data, cmd_run, cmd_saliency, load_split, CliError};
pub use config::{stream_path, RunConfig, RunProtocol, StreamSelection, KEYS};

/// Environment variable that roots relative output directories.
pub const OUTPUT_ROOT_ENV: &str = "VCL_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "vcl", version, about = "Variational contrastive pretraining for skeleton sequences")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic SKL1 dataset.
    GenData(GenDataArgs),
    /// Run a protocol from a config file.
    Run(ConfigArgs),
    /// Write a Grad-CAM joint importance map for one sample.
    Saliency(SaliencyArgs),
    /// Write per-sample μ vectors as CSV.
    DumpEmbeddings(DumpArgs),
    /// Fuse per-stream logit files and report top-1 accuracy.
    Fuse(FuseArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, default_value_t = 8)]
    pub classes: usize,
    #[arg(long, default_value_t = 50)]
    pub per_class: usize,
    #[arg(long, default_value_t = 24)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// default17 | ntu25
    #[arg(long, default_value = "default17")]
    pub topology: String,
    #[arg(long, short, default_value = "synth.skl")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// `key = value` config file; the desk preset when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set pretrain.epochs=2`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    pub overrides: Vec<(String, String)>,
}

#[derive(Debug, Args)]
pub struct SaliencyArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Checkpoint holding an encoder and a trained classifier.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Sample index in the dataset.
    #[arg(long)]
    pub index: usize,
    /// Target class; the sample's label when omitted.
    #[arg(long)]
    pub target: Option<usize>,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// Logit CSV files in stream order (joint, bone, motion).
    #[arg(long = "logits", required = true)]
    pub logits: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "0.6,0.6,0.4")]
    pub weights: Vec<f64>,
    /// Write fused predictions here, one per line.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

fn parse_override(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("`{s}` is not KEY=VALUE"))
}

impl ConfigArgs {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let cfg = match &self.config {
            Some(p) => RunConfig::from_file(p, &self.overrides)?,
            None => RunConfig::parse("", &self.overrides)?,
        };
        Ok(cfg)
    }
}

pub fn dispatch(cli: Cli) -> Result<(), CliError> {
    let root = std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from);
    match cli.command {
        Command::GenData(a) => cmd_gen_data(&a),
        Command::Run(a) => cmd_run(&a.resolve()?, root.as_deref()),
        Command::Saliency(a) => cmd_saliency(&a),
        Command::DumpEmbeddings(a) => cmd_dump_embeddings(&a),
        Command::Fuse(a) => cmd_fuse(&a),
    }
}

/// Parses `args` and runs; exit 0 on success, 1 on runtime failure, 2 on usage or config errors.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
