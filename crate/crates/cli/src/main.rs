//! `densecap`: batch front end for data generation, training, inference
//! and evaluation.
//!
//! Exit codes: 0 on success, 2 on invalid input or configuration, 3 on a
//! numeric failure. Errors go to standard error as `error[<kind>]: <message>`.

mod commands;
mod config;
mod gradcheck;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "densecap", version, about = "Dense event captioning: proposals, context captioning, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    None,
    Online,
    #[value(name = "online-attn")]
    OnlineAttn,
    Full,
    #[value(name = "full-attn")]
    FullAttn,
}

impl Mode {
    pub fn variant(self) -> &'static str {
        match self {
            Mode::None => "none",
            Mode::Online => "online",
            Mode::OnlineAttn => "online-attn",
            Mode::Full => "full",
            Mode::FullAttn => "full-attn",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Scope {
    All,
    Captioning,
    Proposals,
    Retrieval,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset and its feature files.
    GenData {
        /// Synthetic corpus specification (JSON).
        #[arg(long)]
        spec: PathBuf,
        /// Output directory; receives dataset.json, features/ and, with --test, test.json.
        #[arg(long)]
        out: PathBuf,
        /// Hold out the last N videos as test.json.
        #[arg(long, default_value_t = 0)]
        test: usize,
    },
    /// Train the joint proposal and caption model.
    Train {
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Training dataset (JSON).
        #[arg(long)]
        data: PathBuf,
        /// Directory of feature files named <video id>.dvcf.
        #[arg(long)]
        features: PathBuf,
        /// Context variant; overrides the configuration's mode.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Checkpoint to write.
        #[arg(long)]
        out: PathBuf,
        /// Loss log CSV; defaults to the checkpoint path with a .loss.csv suffix.
        #[arg(long)]
        loss_log: Option<PathBuf>,
        /// Continue from this checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this many iterations in total and save.
        #[arg(long)]
        iterations: Option<u64>,
    },
    /// Run the proposal module over feature files.
    Propose {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Restrict to the videos of this dataset (default: every feature file).
        #[arg(long)]
        data: Option<PathBuf>,
        /// Keep every anchor instead of thresholding scores.
        #[arg(long)]
        retain_all: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Caption proposals or ground-truth events.
    Caption {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Proposal dump to caption.
        #[arg(long, conflicts_with = "gt", required_unless_present = "gt")]
        proposals: Option<PathBuf>,
        /// Dataset whose ground-truth events are captioned.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        beam: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dense-captioning score of a caption dump.
    EvalDense {
        #[arg(long)]
        captions: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// bleu1..bleu4, meteor, cider, or all.
        #[arg(long, default_value = "all")]
        metric: String,
        /// Optional run configuration supplying thresholds and top_n.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Localization recall of a proposal or caption dump.
    EvalRecall {
        #[arg(long)]
        proposals: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 1000)]
        max_n: usize,
        /// Comma-separated tIoU thresholds.
        #[arg(long, value_delimiter = ',', default_values_t = [0.3, 0.5, 0.7, 0.9])]
        thresholds: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train retrieval encoders on top of a trained proposal module.
    TrainRetrieval {
        #[arg(long)]
        config: PathBuf,
        /// Dense model checkpoint providing the proposal LSTM.
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Enable the context term regardless of the configuration.
        #[arg(long)]
        context: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Video and paragraph retrieval metrics of a retrieval checkpoint.
    EvalRetrieval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic gradients with central differences on small random models.
    GradCheck {
        #[arg(long, value_enum, default_value_t = Scope::All)]
        scope: Scope,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Failure classified for the exit-code contract.
pub enum CliError {
    Invalid { kind: &'static str, message: String },
    Numeric(String),
}

impl From<densecap::Error> for CliError {
    fn from(e: densecap::Error) -> Self {
        use densecap::Error as E;
        if e.is_numeric() {
            return CliError::Numeric(e.to_string());
        }
        let kind = match &e {
            E::Shape { .. } | E::Index { .. } | E::Range(_) => "shape",
            E::Format(_) => "format",
            E::Schema(_) | E::Json(_) => "schema",
            E::Validation { .. } => "validation",
            E::Input(_) => "input",
            E::Config(_) => "config",
            E::Incompatible(_) => "checkpoint",
            E::Generation(_) => "generation",
            E::Io { .. } => "io",
            E::Numeric { .. } | E::Diverged { .. } | E::Determinism { .. } => "numeric",
        };
        CliError::Invalid {
            kind,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::GenData { spec, out, test } => commands::gen_data(&spec, &out, test),
        Command::Train {
            config,
            data,
            features,
            mode,
            out,
            loss_log,
            resume,
            iterations,
        } => commands::train(commands::TrainArgs {
            config,
            data,
            features,
            mode: mode.map(Mode::variant),
            out,
            loss_log,
            resume,
            iterations,
        }),
        Command::Propose {
            checkpoint,
            features,
            data,
            retain_all,
            out,
        } => commands::propose(&checkpoint, &features, data.as_deref(), retain_all, &out),
        Command::Caption {
            checkpoint,
            features,
            proposals,
            gt,
            beam,
            out,
        } => commands::caption(&checkpoint, &features, proposals.as_deref(), gt.as_deref(), beam, &out),
        Command::EvalDense {
            captions,
            gt,
            metric,
            config,
            out,
        } => commands::eval_dense(&captions, &gt, &metric, config.as_deref(), &out),
        Command::EvalRecall {
            proposals,
            gt,
            max_n,
            thresholds,
            out,
        } => commands::eval_recall(&proposals, &gt, max_n, &thresholds, &out),
        Command::TrainRetrieval {
            config,
            checkpoint,
            data,
            features,
            context,
            out,
        } => commands::train_retrieval(&config, &checkpoint, &data, &features, context, &out),
        Command::EvalRetrieval {
            checkpoint,
            data,
            features,
            out,
        } => commands::eval_retrieval(&checkpoint, &data, &features, &out),
        Command::GradCheck { scope, seed } => gradcheck::run(scope, seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Invalid { kind, message }) => {
            eprintln!("error[{kind}]: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(message)) => {
            eprintln!("error[numeric]: {message}");
            ExitCode::from(3)
        }
    }
}
