//! Draw cut-in scenarios from the default model, untilted and tilted.

use accel_eval::config::ExperimentConfig;
use accel_eval::rng::StreamKey;
use accel_eval::scenario::ProposalParams;

fn main() -> accel_eval::Result<()> {
    let cfg = ExperimentConfig::load(concat!(env!("CARGO_MANIFEST_DIR"), "/configs/default.toml").as_ref())?;
    let model = cfg.model()?;
    let sampler = model.sampler(model.bin("low")?.range())?;
    let key = StreamKey::new(cfg.seed, "sample-scenarios");

    println!("lambda_R = {:.6} 1/m", model.lambda_r());
    println!("{:>7} {:>9} {:>8} {:>8} {:>8} {:>7} {:>10}", "v_l", "r_inv", "ttc_inv", "r0", "rdot", "v0", "weight");

    let tilt = ProposalParams {
        vartheta_r: -0.12,
        vartheta_ttc: 0.0,
        bin: "low".into(),
    };
    for (label, proposal) in [("original law", None), ("tilted toward short ranges", Some(&tilt))] {
        println!("-- {label}");
        for i in 0..6 {
            let s = sampler.sample(proposal, &mut key.stream(i))?;
            println!(
                "{:7.2} {:9.5} {:8.4} {:8.2} {:8.3} {:7.2} {:10.3e}",
                s.v_l, s.r_inv, s.ttc_inv, s.r0, s.rdot, s.v0, s.likelihood
            );
        }
    }

    // weights average to one under any proposal
    let n = 20_000;
    let mean: f64 = (0..n)
        .map(|i| sampler.sample(Some(&tilt), &mut key.child("mean", 0).stream(i)).map(|s| s.likelihood))
        .sum::<accel_eval::Result<f64>>()?
        / n as f64;
    println!("mean weight over {n} tilted draws: {mean:.4}");
    Ok(())
}
