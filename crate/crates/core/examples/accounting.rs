//! Sample-size and mileage arithmetic behind the accelerated rate.

use accel_eval::estimation::{
    accelerated_rate, required_n_cmc, ConfidenceSpec, DEFAULT_MILES_PER_LANE_CHANGE, METERS_PER_MILE,
};

fn main() -> accel_eval::Result<()> {
    let spec = ConfidenceSpec::default();
    println!("z at {:.0}% confidence: {:.4}", 100.0 * (1.0 - spec.alpha), spec.z());
    for gamma in [0.5, 0.1, 1e-2, 1e-4, 1e-6] {
        println!("gamma {gamma:8.1e}: crude Monte Carlo needs {:>12} tests", required_n_cmc(gamma, &spec)?);
    }
    println!("\nmiles per lane change: {:.4}", DEFAULT_MILES_PER_LANE_CHANGE);
    println!("one 8 s test at 20 m/s: {:.4} mi", 160.0 / METERS_PER_MILE);

    let n = required_n_cmc(1e-2, &spec)?;
    let r = accelerated_rate(n, DEFAULT_MILES_PER_LANE_CHANGE, 300.0 * 120.0)?;
    println!(
        "gamma 1e-2 with 300 accelerated tests of 120 m: D_nature {:.3e} mi, D_acc {:.2} mi, r_acc {:.3e}",
        r.d_nature_mi, r.d_acc_mi, r.r_acc
    );
    Ok(())
}
