mod backend;
mod files;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use synprobe::AmbiguityType;
use thiserror::Error;

use backend::BackendSpec;
use files::Layout;
use stages::{DecodingArgs, MetricArgs, Run};

/// Configuration errors exit with 1, stage failures with 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0:#}")]
    Config(anyhow::Error),
    #[error("{0:#}")]
    Stage(anyhow::Error),
}

pub trait ResultExt<T> {
    fn config(self) -> Result<T, CliError>;
    fn stage(self) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> ResultExt<T> for Result<T, E> {
    fn config(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Config(e.into()))
    }
    fn stage(self) -> Result<T, CliError> {
        self.map_err(|e| CliError::Stage(e.into()))
    }
}

/// Probe language models for syntactic uncertainty on garden-path prefixes.
///
/// Stages read and write files under --out: prompts.jsonl, completions/,
/// parses/, labels/, estimates/, metrics/ and report/.
#[derive(Debug, Parser)]
#[command(name = "synprobe", version)]
struct Cli {
    /// Output directory shared by all stages.
    #[arg(long, global = true, default_value = "synprobe-out")]
    out: PathBuf,
    /// NPS, NPZ or NounVerb.
    #[arg(long, global = true, default_value = "NPS")]
    ambiguity: AmbiguityType,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct BackendArgs {
    /// `toy`, `builtin:corpus=PATH[,order=N][,discount=D]` or `remote[:URL]`.
    #[arg(long, default_value = "toy")]
    backend: BackendSpec,
    /// URL used by `--backend remote` when none is given inline.
    #[arg(long, env = "SYNPROBE_BACKEND_URL", hide_env_values = true)]
    backend_url: Option<String>,
}

#[derive(Debug, clap::Args)]
struct Decoding {
    /// Nucleus mass.
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// Temperature.
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Beam search with this width instead of sampling.
    #[arg(long)]
    beam: Option<usize>,
    /// Run all eight rows of the decoding comparison instead.
    #[arg(long, conflicts_with_all = ["p", "t", "beam"])]
    grid: bool,
    /// Samples per prompt.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Token budget; defaults to 30 for word-level and 50 for subword vocabularies.
    #[arg(long)]
    budget: Option<usize>,
    /// Re-sample discarded completions up to --n.
    #[arg(long)]
    top_up: bool,
}

impl Decoding {
    fn args(&self) -> DecodingArgs {
        DecodingArgs {
            p: self.p,
            t: self.t,
            beam: self.beam,
            grid: self.grid,
            n: self.n,
            budget: self.budget,
            top_up: self.top_up,
        }
    }
}

#[derive(Debug, clap::Args)]
struct Metrics {
    /// Self-BLEU n-gram order.
    #[arg(long, default_value_t = 4)]
    bleu_n: usize,
    #[arg(long)]
    no_brevity_penalty: bool,
    /// Manual annotation TSV to compare against the automatic labels.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Decoding slug the annotations refer to.
    #[arg(long, default_value = "p1_t1")]
    decoding: String,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load materials and write items.tsv and prompts.jsonl.
    DerivePrompts {
        /// Materials TSV; the bundled items of --ambiguity when omitted.
        #[arg(long)]
        materials: Option<PathBuf>,
        /// CoNLL-U parses of the Noun/Verb base sentences, with sentence
        /// ids `ITEM/ambiguous` and `ITEM/unambiguous`.
        #[arg(long)]
        base_parses: Option<PathBuf>,
    },
    /// Generate completions for every prompt.
    Generate {
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        decoding: Decoding,
    },
    /// Parse completions with the toy grammar.
    ParseToy,
    /// Label completions from their CoNLL-U parses.
    Classify {
        /// Directory with one `SLUG.conllu` per decoding; defaults to parses/.
        #[arg(long)]
        parses: Option<PathBuf>,
        /// JSON label scheme for the classifier.
        #[arg(long)]
        classifier: Option<PathBuf>,
    },
    /// Per-prompt probability estimates.
    Estimate,
    /// Diversity and, given annotations, agreement tables.
    Metrics(Metrics),
    /// Cue surprisal against the no-cue estimates.
    Surprisal {
        #[command(flatten)]
        backend: BackendArgs,
        #[arg(long, default_value = "p1_t1")]
        decoding: String,
    },
    /// Collect all tables under report/.
    Report,
    /// Every stage in order, parsing with the toy grammar.
    Run {
        #[arg(long)]
        materials: Option<PathBuf>,
        #[command(flatten)]
        backend: BackendArgs,
        #[command(flatten)]
        decoding: Decoding,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let run = Run { layout: Layout { out: cli.out }, ambiguity: cli.ambiguity, seed: cli.seed };
    match cli.command {
        Command::DerivePrompts { materials, base_parses } => {
            stages::derive_prompts(&run, materials.as_deref(), base_parses.as_deref())
        }
        Command::Generate { backend, decoding } => {
            stages::generate(&run, &backend.backend, backend.backend_url.as_deref(), &decoding.args())
        }
        Command::ParseToy => stages::parse_toy(&run),
        Command::Classify { parses, classifier } => stages::classify(&run, parses.as_deref(), classifier.as_deref()),
        Command::Estimate => stages::estimate(&run),
        Command::Metrics(m) => stages::metrics(
            &run,
            &MetricArgs {
                bleu_n: m.bleu_n,
                brevity_penalty: !m.no_brevity_penalty,
                annotations: m.annotations,
                decoding: m.decoding,
            },
        ),
        Command::Surprisal { backend, decoding } => {
            stages::surprisal(&run, &backend.backend, backend.backend_url.as_deref(), &decoding)
        }
        Command::Report => stages::report(&run),
        Command::Run { materials, backend, decoding } => {
            if backend.backend != BackendSpec::Toy {
                return Err(CliError::Config(anyhow::anyhow!(
                    "`run` parses with the toy grammar and needs --backend toy; run the stages separately for other backends"
                )));
            }
            let url = backend.backend_url.as_deref();
            stages::derive_prompts(&run, materials.as_deref(), None)?;
            stages::generate(&run, &backend.backend, url, &decoding.args())?;
            stages::parse_toy(&run)?;
            stages::classify(&run, None, None)?;
            stages::estimate(&run)?;
            stages::metrics(
                &run,
                &MetricArgs { bleu_n: 4, brevity_penalty: true, annotations: None, decoding: "p1_t1".into() },
            )?;
            let pure = run.layout.estimates("p1_t1");
            if pure.exists() {
                stages::surprisal(&run, &backend.backend, url, "p1_t1")?;
            }
            stages::report(&run)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Config(_) => 1,
                CliError::Stage(_) => 2,
            })
        }
    }
}
