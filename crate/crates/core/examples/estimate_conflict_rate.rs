//! Conflict probability in the low bin by crude Monte Carlo and by
//! importance sampling, with the number of tests each needed.

use accel_eval::config::ExperimentConfig;
use accel_eval::experiment::run_experiment;
use accel_eval::pipeline::{EstimationMode, EventKind};

fn main() -> accel_eval::Result<()> {
    let mut cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/default.toml").as_ref())?;
    cfg.events = vec![EventKind::Conflict];
    cfg.modes = vec![EstimationMode::Cmc, EstimationMode::Is];
    let report = run_experiment(&cfg)?;
    for e in &report.estimates {
        println!(
            "{:>3}: {:.4e}  80% CI [{:.4e}, {:.4e}]  n = {:5}  relative half-width {:.3}",
            e.mode.to_string(),
            e.estimate,
            e.ci_low,
            e.ci_high,
            e.n,
            e.rel_half_width.unwrap_or(f64::NAN)
        );
    }
    let cmc = report.estimate(EventKind::Conflict, EstimationMode::Cmc, "low").expect("cmc run");
    let is = report.estimate(EventKind::Conflict, EstimationMode::Is, "low").expect("is run");
    println!("IS used {:.1}x fewer tests", cmc.n as f64 / is.n as f64);
    Ok(())
}
