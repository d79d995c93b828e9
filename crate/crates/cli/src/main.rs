//! `mwp`: corpus statistics, quantity tagging, variant generation,
//! training, prediction with voting, and cross-validated evaluation.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, VariantMode};

/// Failure classes, each with its own exit code.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "mwp", version, about = "Math word problem toolkit")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed, overriding the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

/// Variant counts, source and voting overrides.
#[derive(Args, Debug, Default)]
struct VariantArgs {
    #[arg(long)]
    k1: Option<usize>,
    #[arg(long)]
    k2: Option<usize>,
    #[arg(long)]
    k3: Option<usize>,
    /// Total variants, spread over the three families.
    #[arg(long, conflicts_with_all = ["k1", "k2", "k3"])]
    k: Option<usize>,
    /// Use the rule-based generator.
    #[arg(long, conflicts_with = "remote")]
    offline: bool,
    /// Use the chat-completion endpoint from the configuration.
    #[arg(long)]
    remote: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Dataset statistics of a corpus.
    Stats {
        corpus: Option<PathBuf>,
        /// Also write the statistics as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tag the quantities of a text or of every record of a corpus.
    Tag {
        #[arg(long, conflicts_with = "corpus")]
        text: Option<String>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Append linguistic variants of every original problem.
    GenVariants {
        corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        variants: VariantArgs,
    },
    /// Train a solver on a whole corpus.
    Train {
        corpus: Option<PathBuf>,
        /// Checkpoint path; the loss log goes next to it.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        variants: VariantArgs,
    },
    /// Decode one problem, optionally voting over variants.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long)]
        vote: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        variants: VariantArgs,
    },
    /// Cross-validated evaluation.
    Eval {
        corpus: Option<PathBuf>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        vote: bool,
        /// Run one cell per total variant count, e.g. `0,5,10,15`.
        #[arg(long, value_delimiter = ',', conflicts_with_all = ["k", "k1", "k2", "k3"])]
        grid: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        variants: VariantArgs,
    },
}

fn apply_variant_args(cfg: &mut RunConfig, v: &VariantArgs) {
    if let Some(k) = v.k {
        let c = mwp_core::variants::VariantCounts::split(k);
        (cfg.variants.k1, cfg.variants.k2, cfg.variants.k3) = (c.k1, c.k2, c.k3);
    }
    if let Some(k) = v.k1 {
        cfg.variants.k1 = k;
    }
    if let Some(k) = v.k2 {
        cfg.variants.k2 = k;
    }
    if let Some(k) = v.k3 {
        cfg.variants.k3 = k;
    }
    if v.offline {
        cfg.variants.mode = VariantMode::Offline;
    }
    if v.remote {
        cfg.variants.mode = VariantMode::Remote;
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.train.seed = cfg.seed;
    match &cli.command {
        Command::GenVariants { variants, .. } | Command::Train { variants, .. } => {
            apply_variant_args(&mut cfg, variants)
        }
        Command::Predict { variants, vote, .. } => {
            apply_variant_args(&mut cfg, variants);
            cfg.voting |= vote;
        }
        Command::Eval {
            variants, vote, folds, ..
        } => {
            apply_variant_args(&mut cfg, variants);
            cfg.voting |= vote;
            if let Some(f) = folds {
                cfg.folds = *f;
            }
        }
        _ => {}
    }
    cfg.validate()?;
    let corpus_path = |arg: &Option<PathBuf>| -> Result<PathBuf, CliError> {
        arg.clone()
            .or_else(|| cfg.corpus.clone())
            .ok_or_else(|| CliError::Config("no corpus given (argument or `corpus` in the configuration)".into()))
    };
    match cli.command {
        Command::Stats { corpus, out } => commands::stats(&cfg, &corpus_path(&corpus)?, out.as_deref()),
        Command::Tag { text, corpus, out } => match (text, corpus) {
            (Some(t), _) => commands::tag_text(&cfg, &t, out.as_deref()),
            (None, Some(c)) => commands::tag_corpus(&cfg, &c, out.as_deref()),
            (None, None) => Err(CliError::Config("tag needs --text or --corpus".into())),
        },
        Command::GenVariants { corpus, out, .. } => commands::gen_variants(&cfg, &corpus_path(&corpus)?, &out),
        Command::Train { corpus, out, .. } => commands::train(&cfg, &corpus_path(&corpus)?, &out),
        Command::Predict { model, text, out, .. } => commands::predict(&cfg, &model, &text, out.as_deref()),
        Command::Eval { corpus, grid, out, .. } => commands::eval(&cfg, &corpus_path(&corpus)?, &grid, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mwp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
