//! Command-line interface: `synth | curate | train | predict | eval |
//! ratio-sweep | correlate | stub-server`.
//!
//! Every command is deterministic given its seed and inputs; rerunning with
//! identical inputs produces byte-identical primary outputs. Exit codes:
//! 0 success, 2 input error, 3 numeric divergence, 4 total remote failure.

mod commands;

use std::path::PathBuf;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::diffusion::TrainConfig;
use crate::error::{Error, Result};

pub use commands::RATIO_GRID;

/// Fixation-ranked salient objects conditioning a diffusion saliency decoder.
#[derive(Debug, Parser)]
#[command(name = "salrank", version, about)]
pub struct Cli {
    /// Master seed; overrides the seed in config/spec files when given.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// TOML config for training parameters and remote endpoints.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for clip-level parallelism (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic disk dataset.
    Synth {
        /// JSON generator spec; defaults are used when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Dataset output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rank annotated objects by fixations; emit supervision records and
    /// ground-truth ranking maps.
    Curate {
        #[arg(long)]
        dataset: PathBuf,
        /// JSON object mapping clip ids to captions; placeholders when omitted.
        #[arg(long)]
        captions: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the ranking-map-conditioned diffusion saliency decoder.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        /// Output directory for `checkpoint.bin` and `loss.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Decode per-frame saliency maps with a trained checkpoint.
    Predict {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Where the object ranking comes from.
        #[arg(long, value_enum, default_value_t = SourceArg::Oracle)]
        source: SourceArg,
        /// Fraction of frames conditioned with the ranking map.
        #[arg(long, default_value_t = 0.25)]
        ratio: f64,
    },
    /// Score predicted saliency against ground truth (AUC-J, CC, SIM, NSS).
    Eval {
        /// Prediction directory written by `predict`.
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Metrics CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate the conditioning-ratio grid and plot CC against ratio.
    RatioSweep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output directory for `sweep.csv` and `sweep.png`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = SourceArg::Oracle)]
        source: SourceArg,
    },
    /// Correlate predicted ranking maps and ranks with ground truth.
    Correlate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Correlation CSV output path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve canned ranking/grounding responses over HTTP.
    StubServer {
        /// Port to bind on 127.0.0.1 (0 picks an ephemeral port).
        #[arg(long, default_value_t = 0)]
        port: u16,
        /// JSON file with the responses to serve; defaults when omitted.
        #[arg(long)]
        responses: Option<PathBuf>,
    },
}

/// Ranking source selector shared by `predict` and `ratio-sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceArg {
    /// Remote ranking + grounding endpoints.
    Mllm,
    /// Fixation-derived ranking from the clip's annotations.
    Oracle,
    /// Shuffled ranks over annotated objects.
    Random,
}

/// Remote-endpoint settings from the `[remote]` config section.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub mllm_url: Option<String>,
    pub ground_url: Option<String>,
    pub timeout_secs: f64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            mllm_url: None,
            ground_url: None,
            timeout_secs: 10.0,
        }
    }
}

impl RemoteConfig {
    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }
}

/// Full CLI config file: `[train]` and `[remote]` sections, all optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub train: TrainConfig,
    pub remote: RemoteConfig,
}

impl CliConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))?;
        config.train.validate()?;
        Ok(config)
    }

    /// Loads from the given path, or returns defaults when no path is set.
    pub fn load(path: Option<&PathBuf>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_toml(&text)
            }
        }
    }
}

/// Maps an error to the documented process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence(_) => 3,
        Error::Transport(_) => 4,
        _ => 2,
    }
}

/// Runs a parsed invocation. Splitting this from [`run`] keeps the whole
/// CLI drivable from integration tests.
pub fn dispatch(cli: Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        // Ignore "already initialized": tests dispatch repeatedly in-process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    let config = CliConfig::load(cli.config.as_ref())?;
    match cli.command {
        Command::Synth { spec, out } => commands::cmd_synth(spec.as_deref(), &out, cli.seed),
        Command::Curate {
            dataset,
            captions,
            out,
        } => commands::cmd_curate(&dataset, captions.as_deref(), &out),
        Command::Train { dataset, out } => {
            commands::cmd_train(&dataset, &out, &config, cli.seed)
        }
        Command::Predict {
            dataset,
            checkpoint,
            out,
            source,
            ratio,
        } => commands::cmd_predict(
            &dataset,
            &checkpoint,
            &out,
            source,
            ratio,
            &config,
            cli.seed.unwrap_or(0),
        ),
        Command::Eval { pred, dataset, out } => commands::cmd_eval(&pred, &dataset, &out),
        Command::RatioSweep {
            dataset,
            checkpoint,
            out,
            source,
        } => commands::cmd_ratio_sweep(
            &dataset,
            &checkpoint,
            &out,
            source,
            &config,
            cli.seed.unwrap_or(0),
        ),
        Command::Correlate { pred, dataset, out } => {
            commands::cmd_correlate(&pred, &dataset, &out)
        }
        Command::StubServer { port, responses } => {
            commands::cmd_stub_server(port, responses.as_deref())
        }
    }
}

/// Parses `std::env::args`, runs, and returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
