use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use scenefuse::backbone::LayerId;
use scenefuse::classifier::parse_c_grid;
use scenefuse::dataset::{parse_manifest, validate_protocol, Protocol};
use scenefuse::experiment::{
    read_records, run_ablation, run_eval, run_extract, run_train, write_report,
    write_timing_table, Ablation, AblationOptions, ExperimentError, ExperimentPlan, ReportFormat,
};
use scenefuse::features::{AggregationMethod, Stream};

/// Overrides the feature store directory (default `<out>/stores`).
const CACHE_ENV: &str = "SCENEFUSE_CACHE";

#[derive(Parser)]
#[command(name = "scenefuse", version, about = "Foreground/background/hybrid scene features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract per-stream feature stores.
    Extract {
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long)]
        force: bool,
    },
    /// Train one model per split pair.
    Train {
        #[command(flatten)]
        plan: PlanArgs,
    },
    /// Score saved models and write results.jsonl.
    Eval {
        #[command(flatten)]
        plan: PlanArgs,
    },
    /// Run an ablation family: layers, streams, aggregation or combinations.
    Ablate {
        family: Ablation,
        #[command(flatten)]
        plan: PlanArgs,
        #[arg(long)]
        force: bool,
        /// Train variants concurrently.
        #[arg(long)]
        parallel: bool,
    },
    /// Render results files as a table.
    Report {
        /// JSON-lines results files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: ReportFormat,
        /// Include wall-clock columns (not reproducible across runs).
        #[arg(long)]
        timings: bool,
        /// Print the per-phase timing table instead.
        #[arg(long)]
        timing_table: bool,
        /// Write to a file instead of stdout.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Check a manifest against a split protocol.
    Validate {
        #[arg(long, visible_alias = "suite")]
        manifest: PathBuf,
        #[arg(long, default_value = "free")]
        protocol: Protocol,
    },
}

#[derive(Args)]
struct PlanArgs {
    /// Manifest TSV (`path<TAB>category<TAB>split`), or a split suite.
    #[arg(long, visible_alias = "suite")]
    manifest: PathBuf,
    /// Backbone registry (TOML).
    #[arg(long)]
    registry: Option<PathBuf>,
    #[arg(long, default_value = "p5")]
    layer: LayerId,
    /// Comma-separated subset of f,b,h.
    #[arg(long, default_value = "f,b,h")]
    streams: String,
    #[arg(long = "agg", default_value = "concat")]
    aggregation: AggregationMethod,
    /// e.g. `1..50` or `0.1,1,10`.
    #[arg(long, default_value = "1..50")]
    c_grid: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn out_err(source: io::Error) -> ExperimentError {
    ExperimentError::Io {
        path: "<stdout>".into(),
        source,
    }
}

impl PlanArgs {
    fn plan(self) -> Result<ExperimentPlan, ExperimentError> {
        let mut plan = ExperimentPlan::new(self.manifest, self.out);
        if let Some(dir) = std::env::var_os(CACHE_ENV).filter(|d| !d.is_empty()) {
            plan.store_dir = PathBuf::from(dir);
        }
        plan.registry = self.registry;
        plan.layer = self.layer;
        plan.streams = self
            .streams
            .split(',')
            .map(|s| s.trim().parse::<Stream>())
            .collect::<Result<_, _>>()
            .map_err(|e| ExperimentError::Plan(e.to_string()))?;
        plan.aggregation = self.aggregation;
        plan.training.c_grid = parse_c_grid(&self.c_grid)?;
        plan.training.cv_folds = self.folds;
        plan.training.seed = self.seed;
        plan.validate()?;
        Ok(plan)
    }
}

fn run(command: Command) -> Result<(), ExperimentError> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match command {
        Command::Extract { plan, force } => {
            let summary = run_extract(&plan.plan()?, force)?;
            for s in &summary.stores {
                let state = if s.cached { "cached" } else { "written" };
                writeln!(out, "{state} {} ({} x {})", s.path.display(), s.count, s.dim)
                    .map_err(out_err)?;
            }
        }
        Command::Train { plan } => {
            for t in run_train(&plan.plan()?)? {
                writeln!(out, "{}: C={} ({:.2}s)", t.name, t.model.chosen_c(), t.training_s)
                    .map_err(out_err)?;
            }
        }
        Command::Eval { plan } => {
            let record = run_eval(&plan.plan()?)?;
            for s in &record.splits {
                writeln!(out, "{}: {:.1}%", s.name, s.accuracy * 100.0)
                    .map_err(out_err)?;
            }
            writeln!(out, "accuracy {}%", record.accuracy_pct()).map_err(out_err)?;
        }
        Command::Ablate {
            family,
            plan,
            force,
            parallel,
        } => {
            let records = run_ablation(&plan.plan()?, family, AblationOptions { force, parallel })?;
            write_report(&records, ReportFormat::Csv, false, &mut out)?;
        }
        Command::Report {
            inputs,
            format,
            timings,
            timing_table,
            output,
        } => {
            let mut records = Vec::new();
            for path in &inputs {
                records.extend(read_records(path)?);
            }
            let sink: Box<dyn Write + '_> = match &output {
                Some(path) => {
                    let file = File::create(path).map_err(|source| ExperimentError::Io {
                        path: path.clone(),
                        source,
                    })?;
                    Box::new(BufWriter::new(file))
                }
                None => Box::new(&mut out),
            };
            if timing_table {
                write_timing_table(&records, sink)?;
            } else {
                write_report(&records, format, timings, sink)?;
            }
        }
        Command::Validate { manifest, protocol } => {
            let report = validate_protocol(&parse_manifest(&manifest)?, protocol);
            writeln!(
                out,
                "{protocol}: {} categories, {} pairs, {} slots, {} violations",
                report.categories,
                report.pairs,
                report.total_slots,
                report.violations.len()
            )
            .map_err(out_err)?;
            for v in &report.violations {
                writeln!(out, "  {v}").map_err(out_err)?;
            }
            if !report.is_conforming() {
                return Err(ExperimentError::Plan(format!(
                    "manifest does not follow the {protocol} protocol"
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = serde_json::to_string(&e.to_string()).expect("string serializes");
            eprintln!("error kind={} message={message}", e.kind());
            ExitCode::FAILURE
        }
    }
}
