//! Argument parsing and dispatch for the `s2a` binary.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use super::commands::{
    cmd_align, cmd_demo_data, cmd_evaluate, cmd_render, cmd_render_corpus, cmd_synth, cmd_tokenize,
    cmd_train,
};
use super::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::model::load_checkpoint;

#[derive(Debug, Parser)]
#[command(name = "s2a", version, about = "Score MIDI to expressive performance MIDI and audio")]
pub struct Cli {
    /// JSON pipeline configuration; flags override its fields.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SeedArg {
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic score/performance corpus.
    DemoData {
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        pieces: Option<usize>,
        #[arg(long)]
        notes: Option<usize>,
        #[arg(long)]
        performers: Option<usize>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Write the token tuples of a MIDI file as TSV.
    Tokenize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Tokenize as a score (constant velocity).
        #[arg(long)]
        score: bool,
    },
    /// Align a performance to its score and write the map as JSON.
    Align {
        #[arg(long)]
        score: PathBuf,
        #[arg(long)]
        performance: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        gap_penalty: Option<f64>,
    },
    /// Train the renderer on the corpus training split.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Render a score (or the corpus test split) into a performance.
    Render {
        /// Score to render; without it the corpus test split is rendered.
        #[arg(long, requires = "output")]
        score: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        performer: Option<usize>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        top_p: Option<f64>,
        #[command(flatten)]
        seed: SeedArg,
    },
    /// Synthesize a performance file or directory to WAV.
    Synth {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compare predicted performances with targets of the same file name.
    Evaluate {
        #[arg(long)]
        pred_dir: Option<PathBuf>,
        #[arg(long)]
        target_dir: Option<PathBuf>,
        #[arg(long)]
        alignment_dir: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Executes a parsed command line.
pub fn execute(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::DemoData {
            out,
            pieces,
            notes,
            performers,
            seed,
        } => {
            set(&mut cfg.paths.corpus_dir, out);
            set(&mut cfg.corpus.n_pieces, pieces);
            set(&mut cfg.corpus.notes_per_piece, notes);
            set(&mut cfg.corpus.n_performers, performers);
            set(&mut cfg.corpus.seed, seed.seed);
            cfg.corpus.validate().map_err(|e| Error::Usage(e.to_string()))?;
            cmd_demo_data(&cfg)?;
        }
        Command::Tokenize { input, output, score } => {
            let n = cmd_tokenize(&input, &output, score)?;
            log::info!("wrote {n} token tuples to {}", output.display());
        }
        Command::Align {
            score,
            performance,
            output,
            gap_penalty,
        } => {
            set(&mut cfg.alignment.gap_penalty, gap_penalty);
            cmd_align(&score, &performance, &output, cfg.alignment.gap_penalty)?;
        }
        Command::Train {
            corpus,
            output_dir,
            checkpoint,
            steps,
            epochs,
            learning_rate,
            seed,
        } => {
            set(&mut cfg.paths.corpus_dir, corpus);
            set(&mut cfg.paths.output_dir, output_dir);
            set(&mut cfg.paths.checkpoint, checkpoint);
            if steps.is_some() {
                cfg.train.max_steps = steps;
            }
            set(&mut cfg.train.max_epochs, epochs);
            set(&mut cfg.train.learning_rate, learning_rate);
            set(&mut cfg.train.seed, seed.seed);
            cfg.validate()?;
            let out = cmd_train(&cfg)?;
            log::info!("{} steps on {} segments", out.log.entries.len(), out.n_segments);
        }
        Command::Render {
            score,
            output,
            checkpoint,
            performer,
            temperature,
            top_p,
            seed,
        } => {
            set(&mut cfg.paths.checkpoint, checkpoint);
            set(&mut cfg.sampling.performer_id, performer);
            set(&mut cfg.sampling.temperature, temperature);
            set(&mut cfg.sampling.top_p, top_p);
            set(&mut cfg.sampling.seed, seed.seed);
            cfg.validate()?;
            match (score, output) {
                (Some(score), Some(output)) => {
                    let model = load_checkpoint(&cfg.paths.checkpoint)?;
                    cmd_render(&model, &score, &output, cfg.sampling.performer_id, &cfg.sampling)?;
                }
                _ => {
                    let written = cmd_render_corpus(&cfg)?;
                    log::info!("rendered {} test pieces", written.len());
                }
            }
        }
        Command::Synth { input, output } => {
            cfg.validate()?;
            let input = input.unwrap_or_else(|| cfg.paths.output_dir.join("rendered"));
            let output = output.unwrap_or_else(|| cfg.paths.output_dir.join("audio"));
            cmd_synth(&input, &output, &cfg.synthesis)?;
        }
        Command::Evaluate {
            pred_dir,
            target_dir,
            alignment_dir,
            output_dir,
        } => {
            cfg.validate()?;
            let pred_dir = pred_dir.unwrap_or_else(|| cfg.paths.output_dir.join("rendered"));
            let target_dir = target_dir.unwrap_or_else(|| cfg.paths.corpus_dir.join("performances"));
            let output_dir = output_dir.unwrap_or_else(|| cfg.paths.output_dir.clone());
            let report = cmd_evaluate(&cfg, &pred_dir, &target_dir, alignment_dir.as_deref(), &output_dir)?;
            println!("{}", report.metrics.summary_table());
        }
    }
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 success, 1 usage error, 2 data error, 3 nothing to evaluate.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
