mod config;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::PipelineConfig;

const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (formats: ARPA, G2P1, TREE1, EMIT1)"
);

#[derive(Parser)]
#[command(name = "asrkit", version = VERSION, about = "Lexicon, language model and decoding pipeline for CTC speech recognition")]
pub struct Cli {
    /// error, warn, info, debug or trace
    #[arg(long, global = true)]
    log_level: Option<String>,
    /// Worker threads for parallel stages (default: available cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML pipeline configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Vocabulary construction and OOV measurement
    #[command(subcommand)]
    Vocab(VocabCommand),
    /// N-gram language model training and evaluation
    #[command(subcommand)]
    Lm(LmCommand),
    /// Grapheme-to-phoneme model training and conversion
    #[command(subcommand)]
    G2p(G2pCommand),
    /// Pronunciation lexicon building and prefix-tree compilation
    #[command(subcommand)]
    Lexicon(LexiconCommand),
    /// Estimate a label prior from the emissions of a manifest
    Prior(PriorArgs),
    /// Decode the emissions listed in a manifest
    Decode(DecodeArgs),
    /// Score hypotheses against manifest references
    Score(ScoreArgs),
    /// Grid-tune LM and prior scales on a dev manifest
    Tune(TuneArgs),
}

#[derive(Subcommand)]
pub enum VocabCommand {
    Build(VocabBuildArgs),
    Oov(VocabOovArgs),
}

#[derive(Args)]
pub struct VocabBuildArgs {
    /// Training text, one sentence per line (repeatable)
    #[arg(long, required = true)]
    pub corpus: Vec<PathBuf>,
    #[arg(long)]
    pub base_dict: Option<PathBuf>,
    #[arg(long)]
    pub min_count: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the token counts
    #[arg(long)]
    pub counts_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct VocabOovArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub text: PathBuf,
}

#[derive(Subcommand)]
pub enum LmCommand {
    Train(LmTrainArgs),
    Ppl(LmPplArgs),
}

#[derive(Args)]
pub struct LmTrainArgs {
    /// Training text (repeatable; multiple corpora are pooled)
    #[arg(long, required = true)]
    pub corpus: Vec<PathBuf>,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub order: Option<usize>,
    /// Per-order count thresholds, e.g. 0,0,1,1
    #[arg(long)]
    pub prune: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct LmPplArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub text: PathBuf,
    /// Write the full report as JSON
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum G2pCommand {
    Train(G2pTrainArgs),
    Apply(G2pApplyArgs),
}

#[derive(Args)]
pub struct G2pTrainArgs {
    /// Pronunciation dictionary (CMUdict style); stress markers are removed
    #[arg(long)]
    pub dict: PathBuf,
    #[arg(long)]
    pub order: Option<usize>,
    #[arg(long)]
    pub holdout: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct G2pApplyArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Words to convert, one per line
    #[arg(long)]
    pub words: PathBuf,
    /// Pronunciations per word
    #[arg(long, default_value_t = 1)]
    pub variants: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Subcommand)]
pub enum LexiconCommand {
    Build(LexiconBuildArgs),
    Compile(LexiconCompileArgs),
}

#[derive(Args)]
pub struct LexiconBuildArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub base_dict: Option<PathBuf>,
    #[arg(long)]
    pub g2p: Option<PathBuf>,
    /// single, threshold-0.6 or threshold-0.8
    #[arg(long)]
    pub variants: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct LexiconCompileArgs {
    #[arg(long)]
    pub lexicon: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the tree's label inventory
    #[arg(long)]
    pub labels_out: Option<PathBuf>,
}

#[derive(Args)]
pub struct PriorArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Greedy,
    Open,
    Lexical,
}

#[derive(Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub tree: Option<PathBuf>,
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[arg(long)]
    pub prior: Option<PathBuf>,
    #[arg(long)]
    pub beam: Option<usize>,
    #[arg(long)]
    pub score_threshold: Option<f64>,
    #[arg(long)]
    pub word_insertion_score: Option<f64>,
}

#[derive(Args)]
pub struct DecodeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub models: ModelArgs,
    #[arg(long)]
    pub lm_scale: Option<f64>,
    #[arg(long)]
    pub prior_scale: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub refs: PathBuf,
    #[arg(long)]
    pub hyps: PathBuf,
    /// TSV report (printed to stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub models: ModelArgs,
    /// start:stop:step or a comma-separated list
    #[arg(long)]
    pub lm_scales: Option<String>,
    #[arg(long)]
    pub prior_scales: Option<String>,
    #[arg(long)]
    pub fraction: Option<f64>,
    /// Tune each subset separately
    #[arg(long)]
    pub per_subset: bool,
    /// Write the full grid as JSON
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub struct Globals {
    pub seed: Option<u64>,
    pub config: PipelineConfig,
}

/// Raised for problems with the invocation itself rather than the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(asrkit::Error::Config(_)) = cause.downcast_ref::<asrkit::Error>() {
            return 2;
        }
    }
    1
}

fn setup(cli: &Cli) -> anyhow::Result<Globals> {
    let config = match &cli.config {
        Some(path) => PipelineConfig::load(path).map_err(|e| UsageError(e.to_string()))?,
        None => PipelineConfig::default(),
    };
    let level = cli
        .log_level
        .clone()
        .or_else(|| config.log_level.clone())
        .unwrap_or_else(|| "warn".into());
    let filter: log::LevelFilter = level
        .parse()
        .map_err(|_| UsageError(format!("unknown log level {level:?}")))?;
    env_logger::Builder::new()
        .filter_level(filter)
        .format_timestamp(None)
        .try_init()
        .ok();
    if let Some(n) = cli.workers.or(config.workers) {
        if n == 0 {
            return Err(UsageError("--workers must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
    }
    Ok(Globals {
        seed: cli.seed.or(config.seed),
        config,
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let globals = setup(&cli)?;
    match cli.command {
        Command::Vocab(VocabCommand::Build(a)) => stages::vocab_build(&a, &globals),
        Command::Vocab(VocabCommand::Oov(a)) => stages::vocab_oov(&a),
        Command::Lm(LmCommand::Train(a)) => stages::lm_train(&a, &globals),
        Command::Lm(LmCommand::Ppl(a)) => stages::lm_ppl(&a),
        Command::G2p(G2pCommand::Train(a)) => stages::g2p_train(&a, &globals),
        Command::G2p(G2pCommand::Apply(a)) => stages::g2p_apply(&a),
        Command::Lexicon(LexiconCommand::Build(a)) => stages::lexicon_build(&a, &globals),
        Command::Lexicon(LexiconCommand::Compile(a)) => stages::lexicon_compile(&a),
        Command::Prior(a) => stages::prior(&a),
        Command::Decode(a) => stages::decode(&a, &globals),
        Command::Score(a) => stages::score(&a),
        Command::Tune(a) => stages::tune(&a, &globals),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
