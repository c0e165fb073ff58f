use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use accel_eval::config::{ExperimentConfig, ModelFile, WarmStart};
use accel_eval::experiment::{run_with, RunOptions, RunReport, TiltSource};
use accel_eval::ingest::{fit_model, read_events, FitOptions};
use accel_eval::pipeline::{EstimationMode, EventKind};
use accel_eval::report::{reload_report, render_table, write_report};
use accel_eval::{Error, Result};

#[derive(Parser)]
#[command(name = "accel-eval", version, about = "Accelerated evaluation of automated vehicles in cut-in scenarios")]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a scenario model from recorded events (CSV: v, v_l, r_l, r_l_dot).
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Model file to write (TOML, a `[scenario]` table).
        #[arg(long)]
        out: PathBuf,
        /// Pareto location; defaults to the smallest inverse range.
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Cross-entropy search only; writes the tilts as `warm_start.toml`.
    Search(RunArgs),
    /// Estimation with tilts taken from the config or `--warm-start`.
    Estimate(RunArgs),
    /// Search, estimate and report.
    Run(RunArgs),
    /// Print the table of an existing report directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EventArg {
    Conflict,
    Crash,
    Injury,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Cmc,
    Is,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    event: Option<EventArg>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Velocity bin name, or `all`.
    #[arg(long)]
    bin: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Sample cap for every estimation run.
    #[arg(long)]
    n_cap: Option<u64>,
    /// Also write per-sample scenario logs and the first traces of each run.
    #[arg(long)]
    verbose_traces: bool,
    /// TOML file with `[[warm_start]]` entries.
    #[arg(long)]
    warm_start: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WarmStartFile {
    warm_start: Vec<WarmStart>,
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(e) = args.event {
        cfg.events = vec![match e {
            EventArg::Conflict => EventKind::Conflict,
            EventArg::Crash => EventKind::Crash,
            EventArg::Injury => EventKind::Injury,
        }];
    }
    if let Some(m) = args.mode {
        cfg.modes = vec![match m {
            ModeArg::Cmc => EstimationMode::Cmc,
            ModeArg::Is => EstimationMode::Is,
        }];
    }
    if let Some(b) = &args.bin {
        cfg.bins = vec![b.clone()];
    }
    if let Some(out) = &args.out {
        cfg.output_dir = out.clone();
    }
    if let Some(n) = args.n_cap {
        cfg.n_caps.cmc = n;
        cfg.n_caps.is = n;
    }
    if let Some(path) = &args.warm_start {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        let file: WarmStartFile = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        cfg.warm_start.extend(file.warm_start);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_toml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn finish(report: &RunReport, cfg: &ExperimentConfig) -> Result<ExitCode> {
    let files = write_report(report, &cfg.output_dir)?;
    print!("{}", render_table(report));
    eprintln!("wrote {} files to {}", files.len(), cfg.output_dir.display());
    Ok(if report.all_converged() {
        ExitCode::SUCCESS
    } else {
        eprintln!("some estimates did not reach the target half-width before the sample cap");
        ExitCode::from(2)
    })
}

fn options(args: &RunArgs, search: bool, estimate: bool) -> RunOptions {
    RunOptions {
        search,
        estimate,
        log_scenarios: args.verbose_traces,
        trace_limit: if args.verbose_traces { 10 } else { 0 },
    }
}

fn execute(command: Command) -> Result<ExitCode> {
    match command {
        Command::Fit { input, out, theta } => {
            let rows = read_events(&input)?;
            let opts = FitOptions {
                pareto_theta: theta,
                ..FitOptions::default()
            };
            let (scenario, summary) = fit_model(&rows, &opts)?;
            write_toml(&out, &ModelFile { scenario })?;
            println!(
                "{} events: {} outside the bounds, {} with a nonnegative range rate, {} kept",
                summary.total,
                summary.dropped_out_of_bounds,
                summary.dropped_nonnegative_range_rate,
                summary.kept
            );
            println!("inverse range, pareto:      {:?}  BIC {:.2}", summary.r_inv_pareto.params, summary.r_inv_pareto.bic);
            println!(
                "inverse range, exponential: {:?}  BIC {:.2}",
                summary.r_inv_exponential.params, summary.r_inv_exponential.bic
            );
            println!("least-squares exponential mean {:.6}", summary.lambda_r);
            for ((v, l), n) in summary.ttc_table.iter().zip(&summary.ttc_counts) {
                println!("TTC^-1 mean at {v:5.1} m/s: {l:.5}  ({n} events)");
            }
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Search(args) => {
            let cfg = load_config(&args)?;
            let report = run_with(&cfg, &options(&args, true, false))?;
            let starts = report
                .searches
                .iter()
                .filter(|s| s.source == TiltSource::CrossEntropy)
                .map(|s| WarmStart {
                    event: s.event,
                    bin: s.bin.clone(),
                    vartheta_r: s.params.vartheta_r,
                    vartheta_ttc: s.params.vartheta_ttc,
                })
                .collect();
            let code = finish(&report, &cfg)?;
            write_toml(&cfg.output_dir.join("warm_start.toml"), &WarmStartFile { warm_start: starts })?;
            Ok(code)
        }
        Command::Estimate(args) => {
            let cfg = load_config(&args)?;
            let report = run_with(&cfg, &options(&args, false, true))?;
            finish(&report, &cfg)
        }
        Command::Run(args) => {
            let cfg = load_config(&args)?;
            let report = run_with(&cfg, &options(&args, true, true))?;
            finish(&report, &cfg)
        }
        Command::Report { out } => {
            let report = reload_report(&out)?;
            print!("{}", render_table(&report));
            Ok(if report.all_converged() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.workers {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(cli.command)),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        },
        None => execute(cli.command),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
