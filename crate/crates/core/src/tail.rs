//! Exponential tail benchmark `P(X > c)` for `X ~ Exp(mean lambda)`.
//!
//! The answer `exp(-c / lambda)` is known, which makes this the reference
//! problem for the estimators and the CE search.

use serde::{Deserialize, Serialize};

use crate::cross_entropy::{tilt_ceiling, weighted_tilt, CeSettings};
use crate::distributions::TruncatedExponential;
use crate::error::{Error, Result};
use crate::estimation::{run_estimator, ConfidenceSpec, EstimateRun, Observation, StoppingRule};
use crate::rng::StreamKey;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailProblem {
    pub lambda: f64,
    pub c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailCeRow {
    pub iteration: u32,
    pub vartheta: f64,
    pub hits: u64,
    /// Intermediate level, or `None` when the event itself was used.
    pub level: Option<f64>,
}

impl TailProblem {
    pub fn new(lambda: f64, c: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::param("lambda", "must be positive"));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::param("c", "must be positive"));
        }
        Ok(TailProblem { lambda, c })
    }

    pub fn gamma(&self) -> f64 {
        (-self.c / self.lambda).exp()
    }

    pub fn base(&self) -> TruncatedExponential {
        TruncatedExponential::with_mean(self.lambda).expect("validated mean")
    }

    pub fn proposal(&self, vartheta: f64) -> Result<TruncatedExponential> {
        self.base().tilted(vartheta)
    }

    /// The conditional law given the event; sampling from it leaves no
    /// variance in the weighted samples.
    pub fn zero_variance_proposal(&self) -> TruncatedExponential {
        TruncatedExponential::new(self.lambda, self.c, f64::INFINITY).expect("validated tail")
    }

    pub fn likelihood(&self, x: f64, proposal: &TruncatedExponential) -> f64 {
        (self.base().ln_pdf(x) - proposal.ln_pdf(x)).exp()
    }

    /// Tilt whose mean is the conditional mean `c + lambda`.
    pub fn optimal_vartheta(&self) -> f64 {
        -self.c
    }
}

/// CE search on the tail problem from `vartheta = 0`. Severity levels rise
/// through the elite quantile until the event itself is frequent enough.
pub fn tail_ce(problem: &TailProblem, settings: &CeSettings, key: &StreamKey) -> Result<Vec<TailCeRow>> {
    settings.validate()?;
    let mut vartheta = 0.0;
    let mut rows = Vec::with_capacity(settings.iterations as usize);
    let mut empty = 0;
    for it in 1..=settings.iterations {
        let g = problem.proposal(vartheta)?;
        let iter_key = key.child("tail-ce", u64::from(it));
        let xs: Vec<f64> = (0..settings.n_per_iter).map(|i| g.sample(iter_key.stream(i).open01())).collect();
        let hits = xs.iter().filter(|&&x| x > problem.c).count() as u64;
        let level = match settings.elite_fraction {
            Some(rho) => {
                let need = ((rho * xs.len() as f64).ceil() as usize).max(1);
                if hits as usize >= need {
                    problem.c
                } else {
                    let mut sorted = xs.clone();
                    sorted.sort_by(|a, b| b.total_cmp(a));
                    sorted[need - 1].min(problem.c)
                }
            }
            None => problem.c,
        };
        let points = xs.iter().map(|&x| {
            let inside = if level == problem.c { x > level } else { x >= level };
            let w = if inside { problem.likelihood(x, &g) } else { 0.0 };
            (x, problem.lambda, w)
        });
        match weighted_tilt(points) {
            Some(v) => {
                empty = 0;
                vartheta = v.min(tilt_ceiling(problem.lambda, settings.margin));
            }
            None => {
                empty += 1;
                if empty >= settings.max_empty {
                    return Err(Error::CeStalled {
                        iteration: it,
                        streak: empty,
                    });
                }
            }
        }
        rows.push(TailCeRow {
            iteration: it,
            vartheta,
            hits,
            level: (level != problem.c).then_some(level),
        });
    }
    Ok(rows)
}

/// Importance-sampling estimate of the tail probability under `proposal`.
pub fn tail_estimate(
    problem: &TailProblem,
    proposal: &TruncatedExponential,
    spec: &ConfidenceSpec,
    rule: &StoppingRule,
    n_cap: u64,
    key: &StreamKey,
) -> Result<EstimateRun<f64>> {
    run_estimator(
        |i| {
            let x = proposal.sample(key.stream(i).open01());
            let likelihood = problem.likelihood(x, proposal);
            let value = if x > problem.c { 1.0 } else { 0.0 };
            Ok((
                Observation {
                    value,
                    likelihood,
                    distance_m: 0.0,
                },
                value * likelihood,
            ))
        },
        spec,
        rule,
        n_cap,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_and_zero_variance_weight() {
        let p = TailProblem::new(1.0, 7.0).unwrap();
        assert_eq!(p.gamma(), (-7f64).exp());
        let g = p.zero_variance_proposal();
        for x in [7.0, 7.5, 9.0, 20.0, 40.0] {
            assert!((p.likelihood(x, &g) / p.gamma() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn optimal_tilt_mean() {
        let p = TailProblem::new(2.0, 5.0).unwrap();
        let g = p.proposal(p.optimal_vartheta()).unwrap();
        assert_eq!(g.mean_parameter(), 7.0);
    }

    #[test]
    fn ce_reaches_conditional_mean() {
        let p = TailProblem::new(1.0, 7.0).unwrap();
        let settings = CeSettings {
            n_per_iter: 500,
            ..CeSettings::default()
        };
        let rows = tail_ce(&p, &settings, &StreamKey::new(11, "tail")).unwrap();
        let m = p.lambda - rows.last().unwrap().vartheta;
        assert!((m - 8.0).abs() / 8.0 < 0.1, "{rows:?}");
        let run = tail_estimate(
            &p,
            &p.proposal(rows.last().unwrap().vartheta).unwrap(),
            &ConfidenceSpec::default(),
            &StoppingRule::default(),
            100_000,
            &StreamKey::new(11, "tail-is"),
        )
        .unwrap();
        assert!(run.converged);
        assert!(run.acc.n < 4_500, "{}", run.acc.n);
    }
}
