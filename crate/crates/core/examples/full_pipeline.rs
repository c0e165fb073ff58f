//! Search, estimate and write a report directory for all three events.

use accel_eval::config::ExperimentConfig;
use accel_eval::experiment::run_experiment;
use accel_eval::pipeline::{EstimationMode, EventKind};
use accel_eval::report::{render_table, write_report};

fn main() -> accel_eval::Result<()> {
    let mut cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/default.toml").as_ref())?;
    cfg.events = vec![EventKind::Conflict, EventKind::Crash, EventKind::Injury];
    cfg.modes = vec![EstimationMode::Is];
    let out = std::env::args().nth(1).map_or_else(|| std::env::temp_dir().join("accel-eval-report"), Into::into);

    let report = run_experiment(&cfg)?;
    let files = write_report(&report, &out)?;
    print!("{}", render_table(&report));
    println!("\n{} files in {}", files.len(), out.display());
    Ok(())
}
