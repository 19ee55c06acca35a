use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use termdialog::cli::{
    run_annotate, run_evaluate, run_generate, run_prepare, run_stats, run_train, DecodeKind,
    DecodeSettings, PipelineConfig, EXIT_RUNTIME,
};

#[derive(Parser)]
#[command(
    name = "termdialog",
    version,
    about = "Terminology-aware dialogue corpus annotation, training, and evaluation"
)]
struct Cli {
    /// Pipeline config file (TOML); flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the split and training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for corpus annotation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Override the output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Annotate a JSONL file of {id, src_text, tgt_text} pairs.
    Annotate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Parse, filter, split, and annotate a raw dialogue dump.
    Prepare {
        /// Raw JSONL dump; overrides paths.raw from the config.
        #[arg(long)]
        raw: Option<PathBuf>,
        /// Wordlist path; overrides paths.lexicon from the config.
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Print corpus statistics for a raw dump.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
    },
    /// Train on prepared train/val splits.
    Train,
    /// Decode a test split into responses.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// greedy | beam
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        beam_width: Option<usize>,
        #[arg(long)]
        max_new: Option<usize>,
    },
    /// Decode a test split and report all metrics.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// Where to write the report JSON (default: report.json in out dir).
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        beam_width: Option<usize>,
        #[arg(long)]
        max_new: Option<usize>,
    },
}

fn parse_strategy(name: &str) -> Result<DecodeKind> {
    match name {
        "greedy" => Ok(DecodeKind::Greedy),
        "beam" => Ok(DecodeKind::Beam),
        other => anyhow::bail!("unknown decode strategy '{other}' (expected greedy or beam)"),
    }
}

fn resolve_decode(
    base: &DecodeSettings,
    strategy: Option<String>,
    beam_width: Option<usize>,
    max_new: Option<usize>,
) -> Result<DecodeSettings> {
    let mut decode = base.clone();
    if let Some(name) = strategy {
        decode.strategy = parse_strategy(&name)?;
    }
    if let Some(width) = beam_width {
        decode.beam_width = width;
    }
    if let Some(n) = max_new {
        decode.max_new = n;
    }
    Ok(decode)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }

    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.split.seed = seed;
        config.train.seed = seed;
    }
    if let Some(out_dir) = &cli.out_dir {
        config.paths.out_dir = out_dir.clone();
    }

    match cli.command {
        Command::Annotate {
            input,
            lexicon,
            output,
        } => {
            let summary = run_annotate(&input, &lexicon, &output)?;
            println!(
                "annotated {} records ({} tokens, {} term phrases) -> {}",
                summary.records,
                summary.tokens,
                summary.term_phrases,
                output.display()
            );
        }
        Command::Prepare { raw, lexicon } => {
            if let Some(raw) = raw {
                config.paths.raw = Some(raw);
            }
            if let Some(lexicon) = lexicon {
                config.paths.lexicon = Some(lexicon);
            }
            let summary = run_prepare(&config)?;
            println!(
                "parsed {} pairs ({} lines skipped), kept {} after filtering",
                summary.parsed_pairs, summary.skipped_lines, summary.kept_pairs
            );
            println!(
                "splits: train {} / val {} / test {}",
                summary.train_records, summary.val_records, summary.test_records
            );
            print!("{}", summary.stats_table);
        }
        Command::Stats { input, lexicon } => {
            print!("{}", run_stats(&input, &lexicon)?);
        }
        Command::Train => {
            let summary = run_train(&config)?;
            println!(
                "trained {} steps: lm_loss {:.4}, classifier_loss {:.4}, overall {:.4}",
                summary.steps,
                summary.final_lm_loss,
                summary.final_classifier_loss,
                summary.final_overall_loss
            );
            if let Some(ppl) = summary.best_val_ppl {
                println!("best validation PPL {ppl:.4}");
            }
            println!("checkpoint -> {}", summary.checkpoint.display());
        }
        Command::Generate {
            checkpoint,
            input,
            output,
            strategy,
            beam_width,
            max_new,
        } => {
            let decode = resolve_decode(&config.decode, strategy, beam_width, max_new)?;
            let n = run_generate(&checkpoint, &input, &output, &decode)?;
            println!("generated {n} responses -> {}", output.display());
        }
        Command::Evaluate {
            checkpoint,
            input,
            lexicon,
            report,
            strategy,
            beam_width,
            max_new,
        } => {
            let decode = resolve_decode(&config.decode, strategy, beam_width, max_new)?;
            let report_path = report.unwrap_or_else(|| config.paths.out_dir.join("report.json"));
            if let Some(parent) = report_path.parent() {
                std::fs::create_dir_all(parent).ok();
            }
            let metrics = run_evaluate(&checkpoint, &input, &lexicon, Some(&report_path), &decode)?;
            print!("{}", metrics.render_table());
            println!("report -> {}", report_path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // Die quietly on a closed pipe (e.g. `termdialog stats ... | head`)
    // instead of panicking mid-print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }

    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(EXIT_RUNTIME as u8)
        }
    }
}
