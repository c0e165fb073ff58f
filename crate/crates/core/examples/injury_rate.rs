//! Crash and injury rates from the same tilted sample stream, and the
//! injury risk curve.

use accel_eval::config::ExperimentConfig;
use accel_eval::estimation::InjuryModel;
use accel_eval::experiment::run_experiment;
use accel_eval::pipeline::{EstimationMode, EventKind};

fn main() -> accel_eval::Result<()> {
    let injury = InjuryModel::default();
    for dv in [0.0, 5.0, 10.0, 20.0, 40.0, 66.914] {
        println!("P(injury | crash, dv = {dv:6.3} m/s) = {:.4e}", injury.probability(Some(dv)));
    }

    let mut cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/default.toml").as_ref())?;
    cfg.events = vec![EventKind::Crash, EventKind::Injury];
    cfg.modes = vec![EstimationMode::Is];
    let report = run_experiment(&cfg)?;
    let s = &report.searches[0];
    println!(
        "\ncrash tilt: vartheta_r {:.5}, vartheta_ttc {:.5}",
        s.params.vartheta_r, s.params.vartheta_ttc
    );
    for e in &report.estimates {
        println!(
            "{:>7}: {:.4e} per cut-in  (n = {}, r_acc = {:.3e})",
            e.event.to_string(),
            e.estimate,
            e.n,
            e.r_acc.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
