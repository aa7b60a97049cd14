use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use pixplate::bpso::{BpsoConfig, DesignTarget};
use pixplate::geometry::{assemble_plate, PlateGenome};
use pixplate::surrogate::{self, history_csv, SurrogateConfig, TargetNormalizer, TrainConfig};
use pixplate::workbench::{self, Dataset, EvaluatorSources};
use pixplate::Error;

#[derive(Parser)]
#[command(name = "pixplate", version, about = "Pixelated coupling-plate design pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Label random genomes with an evaluator and write a JSONL dataset.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "oracle")]
        evaluator: String,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Histogram, CDF, summary and joint-distribution CSVs for a dataset.
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        /// Drop samples whose frequency lies strictly inside LO:HI GHz.
        #[arg(long, value_parser = parse_gap)]
        gap: Option<(f64, f64)>,
        #[arg(long)]
        out_prefix: String,
    },
    /// Train a surrogate and write its weights and per-epoch history.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "desk")]
        preset: String,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        momentum: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long, value_parser = parse_gap)]
        gap: Option<(f64, f64)>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Predict the main resonance of a genome with a trained surrogate.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        genome: String,
    },
    /// Search for a plate hitting a resonance target with binary PSO.
    Optimize {
        #[arg(long, allow_negative_numbers = true)]
        target_f: f64,
        #[arg(long, allow_negative_numbers = true)]
        target_s21: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long)]
        evaluator: String,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Dataset backing the lookup evaluator.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        iters: usize,
        #[arg(long, default_value_t = 30)]
        swarm: usize,
        #[arg(long)]
        out_prefix: String,
    },
    /// Build a dataset from Touchstone files listed in a manifest CSV.
    Ingest {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        permissive: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the full plate of a genome as CSV or PBM.
    Export {
        #[arg(long)]
        genome: String,
        #[arg(long, value_enum)]
        format: ExportFormat,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExportFormat {
    Csv,
    Pbm,
}

fn parse_gap(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or("expected LO:HI")?;
    let lo: f64 = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: f64 = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if !(lo < hi) {
        return Err("lower bound must be below upper bound".into());
    }
    Ok((lo, hi))
}

const EXIT_ARGS: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_MODEL: u8 = 4;

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    error: Error,
}

fn data_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => EXIT_ARGS,
        Error::Model(_) | Error::Evaluator(_) | Error::UnknownEvaluator { .. } | Error::Particle { .. } => EXIT_MODEL,
        _ => EXIT_DATA,
    }
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Failure {
            code: data_code(&error),
            error,
        }
    }
}

/// Evaluator and model loading failures are model errors, except missing
/// arguments.
fn model_failure(error: Error) -> Failure {
    let code = match error {
        Error::Config(_) => EXIT_ARGS,
        _ => EXIT_MODEL,
    };
    Failure { code, error }
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, body).map_err(|e| Error::io(path, e).into())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Generate {
            n,
            seed,
            evaluator,
            model,
            out,
        } => {
            let sources = EvaluatorSources {
                model: model.as_deref(),
                table: None,
            };
            let ev = workbench::resolve_evaluator(&evaluator, &sources).map_err(model_failure)?;
            let ds = workbench::generate_dataset(n, seed, &ev)?;
            ds.save(&out)?;
            info!("wrote {} samples to {}", ds.len(), out.display());
        }
        Command::Stats {
            input,
            bins,
            gap,
            out_prefix,
        } => {
            let ds = Dataset::load(&input)?;
            for path in workbench::write_stats(&ds, bins, gap, &out_prefix)? {
                println!("{}", path.display());
            }
        }
        Command::Train {
            input,
            seed,
            preset,
            epochs,
            lr,
            momentum,
            batch,
            gap,
            out,
            history,
        } => {
            let sconfig = SurrogateConfig::preset(&preset)?;
            let defaults = TrainConfig::default();
            let tconfig = TrainConfig {
                learning_rate: lr.unwrap_or(defaults.learning_rate),
                momentum: momentum.unwrap_or(defaults.momentum),
                batch_size: batch.unwrap_or(defaults.batch_size),
                epochs: epochs.unwrap_or(defaults.epochs),
                seed,
                ..defaults
            };
            let ds = Dataset::load(&input)?;
            let normalizer = TargetNormalizer::default();
            let outcome = workbench::train_on_dataset(&ds, gap, &normalizer, &sconfig, &tconfig)?;
            write(&out, surrogate::encode_weights(&outcome.model, &normalizer)?)?;
            if let Some(path) = history {
                write(&path, history_csv(&outcome.history))?;
            }
            println!(
                "best epoch {}: val MAE f {:.4} GHz, s21 {:.4} dB (mean predictor: {:.4} GHz, {:.4} dB)",
                outcome.best_epoch,
                outcome.best_val_mae.f_ghz,
                outcome.best_val_mae.s21_db,
                outcome.baseline_val_mae.f_ghz,
                outcome.baseline_val_mae.s21_db
            );
            if let Some(test) = outcome.test_mae {
                println!("test MAE f {:.4} GHz, s21 {:.4} dB", test.f_ghz, test.s21_db);
            }
        }
        Command::Predict { model, genome } => {
            let genome = PlateGenome::from_hex(&genome).map_err(|error| Failure { code: EXIT_ARGS, error })?;
            let (model, normalizer) = surrogate::load_weights(&model).map_err(model_failure)?;
            let p = surrogate::predict_physical(&model, &normalizer, &assemble_plate(&genome)).map_err(model_failure)?;
            println!("f_ghz={} s21_db={}", p.f_res_ghz, p.s21_db);
        }
        Command::Optimize {
            target_f,
            target_s21,
            lambda,
            evaluator,
            model,
            table,
            seed,
            iters,
            swarm,
            out_prefix,
        } => {
            let sources = EvaluatorSources {
                model: model.as_deref(),
                table: table.as_deref(),
            };
            let ev = workbench::resolve_evaluator(&evaluator, &sources).map_err(model_failure)?;
            let target = DesignTarget {
                weight_s21: lambda,
                ..DesignTarget::new(target_f, target_s21)
            };
            target.validate(ev.band_ghz()).map_err(|error| Failure { code: EXIT_ARGS, error })?;
            let config = BpsoConfig {
                swarm_size: swarm,
                max_iterations: iters,
                seed,
                ..Default::default()
            };
            config.validate().map_err(|error| Failure { code: EXIT_ARGS, error })?;
            let report = workbench::run_design(&target, &ev, &config, &out_prefix)?;
            println!(
                "best fitness {:.6}: f {:.4} GHz, s21 {:.4} dB, genome {}",
                report.best_fitness, report.predicted_f_ghz, report.predicted_s21_db, report.best_genome_hex
            );
        }
        Command::Ingest {
            dir,
            manifest,
            permissive,
            out,
        } => {
            let rows = workbench::read_manifest(&manifest)?;
            let report = workbench::ingest_touchstone_dir(&dir, &rows, permissive)?;
            for (row, reason) in &report.skipped {
                eprintln!("skipped row {row}: {reason}");
            }
            report.dataset.save(&out)?;
            println!("ingested {} of {} rows", report.dataset.len(), rows.len());
        }
        Command::Export { genome, format, out } => {
            let genome = PlateGenome::from_hex(&genome).map_err(|error| Failure { code: EXIT_ARGS, error })?;
            let plate = assemble_plate(&genome);
            let body = match format {
                ExportFormat::Csv => plate.to_csv(),
                ExportFormat::Pbm => plate.to_pbm(),
            };
            write(&out, body)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error}");
            ExitCode::from(code)
        }
    }
}
