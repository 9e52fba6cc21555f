mod commands;
mod manifest;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Entity linking in multiparty dialogue: training, evaluation, analysis
/// and probing of entity-centric models.
#[derive(Debug, Parser)]
#[command(name = "entlink", version)]
pub struct Cli {
    /// Output directory; created if missing.
    #[arg(long, global = true, env = "ENTLINK_OUT", default_value = "entlink-out")]
    pub out: PathBuf,

    /// Run seed; overrides any seed in a config or spec file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus, catalog and knowledge base.
    GenSynthetic {
        /// key=value spec file; defaults are used for missing keys.
        #[arg(long = "config")]
        spec: Option<PathBuf>,
    },
    /// Train a model.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        data: CorpusArgs,
        /// Validation corpus for early stopping.
        #[arg(long)]
        val: Option<PathBuf>,
    },
    /// Score a model, or a predictions file, against a corpus.
    Eval {
        #[command(flatten)]
        data: CorpusArgs,
        #[arg(long, required_unless_present = "predictions")]
        model: Option<PathBuf>,
        /// JSONL predictions to score instead of running a model.
        #[arg(long, conflicts_with = "model")]
        predictions: Option<PathBuf>,
        /// Corpus whose entities and frequencies define the evaluation
        /// classes when scoring a predictions file.
        #[arg(long)]
        train_corpus: Option<PathBuf>,
        #[arg(long, value_enum)]
        grouping: Option<Grouping>,
        #[arg(long, default_value_t = entlink::models::DEFAULT_CHUNK_LEN)]
        chunk_len: usize,
    },
    /// Compare two models with approximate randomization.
    Compare {
        #[command(flatten)]
        data: CorpusArgs,
        #[arg(long)]
        model_a: PathBuf,
        #[arg(long)]
        model_b: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        iterations: usize,
        #[arg(long, value_enum)]
        grouping: Option<Grouping>,
        #[arg(long, default_value_t = entlink::models::DEFAULT_CHUNK_LEN)]
        chunk_len: usize,
    },
    /// Representation analyses of a trained model.
    Analyze {
        #[arg(value_enum)]
        which: Analysis,
        #[command(flatten)]
        data: CorpusArgs,
        #[arg(long)]
        model: PathBuf,
        /// Scene index for `drift`.
        #[arg(long, default_value_t = 0)]
        scene: usize,
        #[command(flatten)]
        flags: FlagArgs,
        #[arg(long, default_value_t = entlink::models::DEFAULT_CHUNK_LEN)]
        chunk_len: usize,
    },
    /// Probe entity representations against a knowledge base.
    Probe {
        #[arg(value_enum)]
        which: Probe,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        /// Entity catalog the knowledge base refers to.
        #[arg(long)]
        catalog: PathBuf,
        /// Maximum properties per description.
        #[arg(long, default_value_t = 3)]
        max_properties: usize,
    },
    /// Print the parameter-count report for a model or a config.
    Params {
        #[arg(long, required_unless_present = "config")]
        model: Option<PathBuf>,
        #[arg(long, conflicts_with = "model", requires_all = ["vocab", "entities"])]
        config: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<usize>,
        #[arg(long)]
        entities: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Defaults to `<corpus-stem>.catalog.tsv` beside the corpus.
    #[arg(long)]
    pub catalog: Option<PathBuf>,
}

/// Overrides for `analyze ablation`; unset flags keep the trained values.
#[derive(Debug, Args)]
pub struct FlagArgs {
    #[arg(long)]
    pub updates: Option<bool>,
    #[arg(long)]
    pub gate: Option<String>,
    #[arg(long)]
    pub tie: Option<bool>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Grouping {
    All,
    Main,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Analysis {
    Rsa,
    Pairs,
    Drift,
    Ablation,
    Pca,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Probe {
    Descriptions,
    Attributes,
    Relations,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
