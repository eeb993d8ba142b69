//! `clue`: command-line front end of the engagement pipeline.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clue_core::{Error, ErrorKind, PipelineConfig};

const EXIT_IO: u8 = 3;
const EXIT_SCHEMA: u8 = 4;
const EXIT_NUMERIC: u8 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "clue",
    version,
    about = "Predict and explain lecture engagement"
)]
struct Cli {
    /// Pipeline configuration (TOML). Falls back to $CLUE_CONFIG, then defaults.
    #[arg(long, global = true, env = "CLUE_CONFIG")]
    config: Option<PathBuf>,

    /// Root seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (defaults to all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the effective configuration as TOML.
    DumpConfig,
    /// Text features, speech feature windows and timelines for lectures.
    ExtractFeatures {
        /// Lecture manifests (JSON).
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
    },
    /// Train the engagement forest on a feature table and report held-out MSE.
    TrainForest {
        /// Feature CSV with the 14 features and `median_engagement`.
        features: PathBuf,
    },
    /// Train the speech-emotion network from a `path,label` index of WAV clips.
    TrainSpeech {
        index: PathBuf,
        /// Validation index; the training set is used when absent.
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Train the bag-of-words text-emotion model from a `text,label` CSV.
    TrainTextEmotion { corpus: PathBuf },
    /// Fit the fusion coefficients.
    TrainFusion(TrainFusionArgs),
    /// Score lectures.
    Score(ScoreArgs),
    /// Score lectures and write feedback reports.
    Report {
        #[command(flatten)]
        score: ScoreArgs,
        /// Feature table whose rows serve as the Shapley background.
        #[arg(long)]
        background: Option<PathBuf>,
    },
    /// Shapley attributions of the forest for every row of a feature table.
    ShapSummary {
        features: PathBuf,
        #[arg(long)]
        forest: PathBuf,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long)]
    forest: PathBuf,
    #[arg(long)]
    speech: PathBuf,
    /// Text-emotion model (JSON).
    #[arg(
        long,
        conflicts_with = "text_probs",
        required_unless_present = "text_probs"
    )]
    text_model: Option<PathBuf>,
    /// External text-emotion probabilities: a JSON file, or a directory of `<id>.json`.
    #[arg(long)]
    text_probs: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    #[arg(required = true)]
    manifests: Vec<PathBuf>,
    #[command(flatten)]
    models: ModelArgs,
    /// Fusion coefficients; the initial coefficients when absent.
    #[arg(long)]
    coefficients: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainFusionArgs {
    /// `x1,x2,x3,x4,y_hat` samples.
    #[arg(long, required_unless_present = "finetune_speech")]
    samples: Option<PathBuf>,
    /// Also fine-tune the speech network through the fusion loss, using rated lectures.
    #[arg(long, requires_all = ["manifests", "forest", "speech"])]
    finetune_speech: bool,
    #[arg(long, num_args = 1..)]
    manifests: Vec<PathBuf>,
    #[arg(long)]
    forest: Option<PathBuf>,
    #[arg(long)]
    speech: Option<PathBuf>,
    #[arg(long, conflicts_with = "text_probs")]
    text_model: Option<PathBuf>,
    #[arg(long)]
    text_probs: Option<PathBuf>,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Io => EXIT_IO,
        ErrorKind::Schema => EXIT_SCHEMA,
        ErrorKind::Numeric => EXIT_NUMERIC,
    }
}

fn report_error(err: &Error) -> ExitCode {
    let kind = match err.kind() {
        ErrorKind::Io => "io",
        ErrorKind::Schema => "schema",
        ErrorKind::Numeric => "numeric",
    };
    let body = serde_json::json!({ "error": { "kind": kind, "message": err.to_string() } });
    eprintln!("{body}");
    ExitCode::from(exit_code(err.kind()))
}

fn load_config(cli: &Cli) -> clue_core::Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = clue_core::config::Seed(seed);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> clue_core::Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    }
    let cfg = load_config(&cli)?;
    let out = cli.out.as_deref();
    match &cli.command {
        Command::DumpConfig => commands::dump_config(&cfg, out),
        Command::ExtractFeatures { manifests } => commands::extract_features(&cfg, manifests, out),
        Command::TrainForest { features } => commands::train_forest(&cfg, features, out),
        Command::TrainSpeech { index, validation } => {
            commands::train_speech(&cfg, index, validation.as_deref(), out)
        }
        Command::TrainTextEmotion { corpus } => commands::train_text_emotion(&cfg, corpus, out),
        Command::TrainFusion(a) => commands::train_fusion(
            &cfg,
            &commands::FusionInputs {
                samples: a.samples.as_deref(),
                finetune_speech: a.finetune_speech,
                manifests: &a.manifests,
                forest: a.forest.as_deref(),
                speech: a.speech.as_deref(),
                text_model: a.text_model.as_deref(),
                text_probs: a.text_probs.as_deref(),
            },
            out,
        ),
        Command::Score(a) => commands::score(&cfg, &score_inputs(a), out),
        Command::Report { score, background } => {
            commands::report(&cfg, &score_inputs(score), background.as_deref(), out)
        }
        Command::ShapSummary { features, forest } => {
            commands::shap_summary(&cfg, features, forest, out)
        }
    }
}

fn score_inputs(a: &ScoreArgs) -> commands::ScoreInputs<'_> {
    commands::ScoreInputs {
        manifests: &a.manifests,
        forest: &a.models.forest,
        speech: &a.models.speech,
        text_model: a.models.text_model.as_deref(),
        text_probs: a.models.text_probs.as_deref(),
        coefficients: a.coefficients.as_deref(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(&e),
    }
}
