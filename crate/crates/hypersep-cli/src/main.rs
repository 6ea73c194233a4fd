//! Experiment driver for the hyper-separability pipeline: train, capture,
//! probe, sweep-transforms, report. Every run resolves one effective
//! configuration (TOML file, then the desk-scale preset, then flags) and
//! is a pure function of that configuration plus its input artifacts.

mod artifacts;
mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use config::{Overrides, RunConfig};
use std::path::PathBuf;

#[derive(Debug)]
pub struct CmdError {
    pub code: i32,
    pub message: String,
}

impl CmdError {
    pub fn new(code: i32, message: impl Into<String>) -> CmdError {
        CmdError {
            code,
            message: message.into(),
        }
    }
}

impl From<hypersep_core::Error> for CmdError {
    fn from(e: hypersep_core::Error) -> CmdError {
        use hypersep_core::Error as E;
        let code = match &e {
            E::Numerical(_) => 3,
            E::Inconsistent(_) => 5,
            _ => 1,
        };
        CmdError::new(code, e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "hypersep",
    version,
    about = "Contrastive vs supervised representations measured by super-class probes"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Global {
    /// TOML run configuration; flags override file keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding mnist/ and emnist/ IDX files
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Output directory for artifacts and manifests
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed_data: Option<u64>,
    #[arg(long, global = true)]
    seed_init: Option<u64>,
    #[arg(long, global = true)]
    seed_augment: Option<u64>,
    #[arg(long, global = true)]
    seed_probe: Option<u64>,
    /// Reduced preset: contrastive 40 epochs, supervised 10, N=256
    #[arg(long, global = true)]
    desk_scale: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a network; writes checkpoint.hsnn and loss.csv
    Train(TrainArgs),
    /// Forward a dataset through a checkpoint; writes cache.hsrc
    Capture(CaptureArgs),
    /// Train per-super-class binary probes on a cache and report
    Probe(ProbeArgs),
    /// Compare transform specs by short contrastive runs + multi-class probe
    SweepTransforms(SweepArgs),
    /// Combine contrastive and supervised probe summaries side by side
    Report(ReportArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// contrastive | supervised
    #[arg(long)]
    scheme: Option<String>,
    /// mnist | emnist-balanced
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Contrastive pair count N (a minibatch holds 2N views)
    #[arg(long)]
    pairs: Option<usize>,
    /// Supervised minibatch size
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
}

#[derive(Args)]
struct CaptureArgs {
    /// Checkpoint to load (default <out>/checkpoint.hsnn)
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Dataset tag; defaults to the checkpoint metadata
    #[arg(long)]
    dataset: Option<String>,
}

#[derive(Args)]
struct ProbeArgs {
    /// Representation cache (default <out>/cache.hsrc)
    #[arg(long)]
    cache: Option<PathBuf>,
    /// enumerate | sample | auto
    #[arg(long)]
    masks: Option<String>,
    /// Sample size when sampling masks
    #[arg(long)]
    count: Option<usize>,
    /// Alias for --seed-probe
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    probe_epochs: Option<usize>,
    #[arg(long)]
    probe_batch_size: Option<usize>,
    /// Worker threads for per-mask trainings (0 = default pool)
    #[arg(long)]
    workers: Option<usize>,
    /// Additionally render the histogram as SVG
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated entries, `+` composes: elastic,rotate,elastic+rotate
    #[arg(long)]
    grid: String,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    pairs: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// probe_summary.txt of the contrastive run
    #[arg(long)]
    contrastive: PathBuf,
    /// probe_summary.txt of the supervised run
    #[arg(long)]
    supervised: PathBuf,
    /// Additionally render the combined histogram as SVG
    #[arg(long)]
    svg: bool,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                e.exit();
            }
            eprint!("{e}");
            std::process::exit(1);
        }
    };
    if let Err(e) = run(cli) {
        eprintln!("error: {}", e.message);
        std::process::exit(e.code);
    }
}

fn run(cli: Cli) -> Result<(), CmdError> {
    let g = &cli.global;
    let mut over = Overrides {
        data_dir: g.data_dir.clone(),
        out_dir: g.out.clone(),
        seed_data: g.seed_data,
        seed_init: g.seed_init,
        seed_augment: g.seed_augment,
        seed_probe: g.seed_probe,
        desk_scale: g.desk_scale,
        ..Overrides::default()
    };
    match &cli.cmd {
        Cmd::Train(a) => {
            over.scheme = a.scheme.clone();
            over.dataset = a.dataset.clone();
            over.epochs = a.epochs;
            over.pairs = a.pairs;
            over.batch_size = a.batch_size;
            over.tau = a.tau;
        }
        Cmd::Probe(a) => {
            over.probe_masks = a.masks.clone();
            over.probe_count = a.count;
            over.probe_epochs = a.probe_epochs;
            over.probe_batch_size = a.probe_batch_size;
            over.probe_workers = a.workers;
            if a.seed.is_some() {
                over.seed_probe = a.seed;
            }
        }
        Cmd::SweepTransforms(a) => {
            over.scheme = Some("contrastive".to_string());
            over.epochs = a.epochs;
            over.pairs = a.pairs;
        }
        _ => {}
    }
    let cfg = RunConfig::resolve(g.config.as_deref(), &over)?;
    match cli.cmd {
        Cmd::Train(_) => commands::cmd_train(&cfg),
        Cmd::Capture(a) => commands::cmd_capture(&cfg, a.checkpoint, a.dataset),
        Cmd::Probe(a) => commands::cmd_probe(&cfg, a.cache, a.svg),
        Cmd::SweepTransforms(a) => commands::cmd_sweep(&cfg, &a.grid),
        Cmd::Report(a) => commands::cmd_report(&cfg, &a.contrastive, &a.supervised, a.svg),
    }
}
