//! P(X > 7) for X ~ Exp(1): crude Monte Carlo sample size, CE search,
//! importance sampling, and the zero-variance proposal.

use accel_eval::cross_entropy::CeSettings;
use accel_eval::estimation::{required_n_cmc, ConfidenceSpec, StoppingRule};
use accel_eval::rng::StreamKey;
use accel_eval::tail::{tail_ce, tail_estimate, TailProblem};

fn main() -> accel_eval::Result<()> {
    let p = TailProblem::new(1.0, 7.0)?;
    let spec = ConfidenceSpec::default();
    let rule = StoppingRule::default();
    println!("gamma = {:.6e}", p.gamma());
    println!("crude Monte Carlo needs {} samples", required_n_cmc(p.gamma(), &spec)?);

    let settings = CeSettings {
        n_per_iter: 500,
        ..CeSettings::default()
    };
    let rows = tail_ce(&p, &settings, &StreamKey::new(1, "tail-ce"))?;
    for r in &rows {
        println!(
            "CE {:2}: vartheta {:8.4}  proposal mean {:7.4}  hits {:3}",
            r.iteration,
            r.vartheta,
            p.lambda - r.vartheta,
            r.hits
        );
    }
    let vartheta = rows.last().expect("iterations > 0").vartheta;

    let run = tail_estimate(&p, &p.proposal(vartheta)?, &spec, &rule, 100_000, &StreamKey::new(1, "tail-is"))?;
    let est = run.acc.mean().unwrap_or(0.0);
    println!(
        "IS: {:.6e} after {} samples, relative half-width {:.3}",
        est,
        run.acc.n,
        run.acc.relative_half_width(&spec).unwrap_or(f64::NAN)
    );

    let zv = tail_estimate(&p, &p.zero_variance_proposal(), &spec, &rule, 1_000, &StreamKey::new(1, "tail-zv"))?;
    println!(
        "zero-variance proposal: {:.15e} after {} samples, relative half-width {}",
        zv.acc.mean().unwrap_or(0.0),
        zv.acc.n,
        zv.acc.relative_half_width(&spec).unwrap_or(f64::NAN)
    );
    Ok(())
}
