//! Fit a scenario model to synthetic lane-change records and print the
//! resulting model file.

use accel_eval::config::ModelFile;
use accel_eval::distributions::TruncatedPareto;
use accel_eval::ingest::{fit_model, EventRow, FitOptions};
use accel_eval::rng::StreamKey;

fn main() -> accel_eval::Result<()> {
    let r_law = TruncatedPareto::new(0.2, 0.012, 1.0 / 75.0, 1.0 / 75.0, 10.0)?;
    let key = StreamKey::new(5, "records");
    let rows: Vec<EventRow> = (0..20_000)
        .map(|i| {
            let mut s = key.stream(i);
            let v_l = 4.0 + 30.0 * s.open01();
            let r_inv = r_law.sample(s.open01());
            // some lane changes open the gap; the fit drops those
            let ttc_inv = -0.05 * s.open01().ln() - 0.01;
            EventRow {
                v: v_l + ttc_inv / r_inv,
                v_l,
                r_l: 1.0 / r_inv,
                r_l_dot: -ttc_inv / r_inv,
            }
        })
        .collect();

    let (scenario, summary) = fit_model(&rows, &FitOptions::default())?;
    println!(
        "{} records, {} out of bounds, {} opening, {} kept",
        summary.total, summary.dropped_out_of_bounds, summary.dropped_nonnegative_range_rate, summary.kept
    );
    println!("pareto BIC {:.1} vs exponential BIC {:.1}", summary.r_inv_pareto.bic, summary.r_inv_exponential.bic);
    println!("{}", toml::to_string(&ModelFile { scenario }).expect("model serializes"));
    Ok(())
}
