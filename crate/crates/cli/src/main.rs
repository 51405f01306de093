//! `dialsum`: corpus statistics, preprocessing, training, generation,
//! evaluation and speaker-style analysis from one binary.
//!
//! Every command that writes files also writes `manifest.json` with the
//! resolved configuration and SHA-256 digests of its inputs and outputs.
//! `dialsum replay MANIFEST --out DIR` re-runs the recorded command.
//!
//! Exit codes: 0 success, 2 bad arguments, 3 data errors, 4 numeric
//! failure.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] dialsum::Error),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        use dialsum::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Core(e) => match e {
                E::Argument(_) | E::ConfigMismatch(_) => 2,
                E::NumericFailure { .. } => 4,
                _ => 3,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dialsum", version, about = "Syntax-aware multi-task dialogue summarization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the bundled toy corpus as train/dev/test raw-chat files.
    Toy {
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-split statistics: conversations, summary length, speakers, turns.
    Stats {
        /// Corpus files; the split is read from each file name.
        #[arg(required = true)]
        corpus: Vec<PathBuf>,
        /// `raw` or `annotated`; defaults from the file extension.
        #[arg(long)]
        format: Option<String>,
        /// Also write a histogram of turn counts with this bin width.
        #[arg(long)]
        bin_width: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tokenize and tag a corpus into annotated JSON Lines.
    Preprocess {
        input: PathBuf,
        #[arg(long)]
        format: Option<String>,
        /// Directory of lexicon files replacing the bundled ones.
        #[arg(long)]
        lexicons: Option<PathBuf>,
        /// Take tags from this annotated file instead of the tagger.
        #[arg(long)]
        import_tags: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and keep the checkpoint with the best dev ROUGE-1.
    Train(TrainArgs),
    /// Decode summaries with a trained model.
    Generate {
        /// Output directory of `train`.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score generated summaries against references.
    Evaluate {
        /// `NAME=PATH` or `PATH` of a `generate` output; repeatable.
        #[arg(long, required = true)]
        predictions: Vec<String>,
        #[arg(long)]
        references: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Speaker-style tf-idf, K-means, PCA and feature ranking.
    AnalyzeStyles {
        corpus: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        top_k: usize,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the command recorded in a manifest into a new directory.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    /// JSON file with training keys; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// JSON file overriding the network shape.
    #[arg(long)]
    model_config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// lead, middle, longest or full.
    #[arg(long)]
    input_type: Option<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    summary_max_len: Option<usize>,
    /// Minimum training-set frequency for a vocabulary entry.
    #[arg(long, default_value_t = 1)]
    min_freq: usize,
    #[arg(long)]
    out: PathBuf,
}

fn run(args: Vec<String>) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(std::iter::once("dialsum".to_string()).chain(args.clone())) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                return Err(CliError::Usage(e.to_string().trim_start_matches("error: ").trim_end().to_string()));
            }
            print!("{e}");
            return Ok(());
        }
    };
    let recorded = manifest::strip_out(&args);
    match cli.command {
        Command::Toy { out } => commands::toy(&out, recorded),
        Command::Stats {
            corpus,
            format,
            bin_width,
            out,
        } => commands::stats(&corpus, format.as_deref(), bin_width, out.as_deref(), recorded),
        Command::Preprocess {
            input,
            format,
            lexicons,
            import_tags,
            out,
        } => commands::preprocess(
            &input,
            format.as_deref(),
            lexicons.as_deref(),
            import_tags.as_deref(),
            &out,
            recorded,
        ),
        Command::Train(t) => commands::train(&t, recorded),
        Command::Generate {
            model,
            corpus,
            beam,
            out,
        } => commands::generate(&model, &corpus, beam, &out, recorded),
        Command::Evaluate {
            predictions,
            references,
            out,
        } => commands::evaluate(&predictions, &references, out.as_deref(), recorded),
        Command::AnalyzeStyles {
            corpus,
            k,
            seed,
            top_k,
            max_iter,
            out,
        } => commands::analyze_styles(&corpus, k, seed, top_k, max_iter, &out, recorded),
        Command::Replay { manifest, out } => {
            let m = manifest::RunManifest::read(&manifest)?;
            if m.args.first().map(String::as_str) == Some("replay") {
                return Err(CliError::Usage("a replay manifest cannot be replayed".into()));
            }
            let mut args = m.args;
            args.push("--out".into());
            args.push(out.display().to_string());
            run(args)
        }
    }
}

fn main() -> ExitCode {
    match run(std::env::args().skip(1).collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
