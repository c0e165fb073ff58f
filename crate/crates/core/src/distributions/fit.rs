use serde::{Deserialize, Serialize};

use super::{TruncatedExponential, TruncatedPareto};
use crate::error::{Error, Result};
use crate::numeric::{golden_section, integrate_pieces, nelder_mead};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FitParams {
    Exponential { mean: f64 },
    Pareto { k: f64, sigma: f64, theta: f64 },
}

impl FitParams {
    /// Number of free parameters entering the BIC penalty. A fixed Pareto
    /// location does not count.
    pub fn free_parameters(&self) -> usize {
        match self {
            FitParams::Exponential { .. } => 1,
            FitParams::Pareto { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: FitParams,
    pub loglik: f64,
    pub bic: f64,
    pub n: usize,
}

impl FitReport {
    fn new(params: FitParams, loglik: f64, n: usize) -> Self {
        let bic = params.free_parameters() as f64 * (n as f64).ln() - 2.0 * loglik;
        FitReport {
            params,
            loglik,
            bic,
            n,
        }
    }
}

/// Maximum-likelihood exponential fit; the estimate of the mean is the
/// sample mean.
pub fn fit_exponential_mle(samples: &[f64]) -> Result<FitReport> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "exponential fit needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidInput("exponential fit needs positive finite samples".into()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let loglik = -n * (mean.ln() + 1.0);
    Ok(FitReport::new(FitParams::Exponential { mean }, loglik, samples.len()))
}

fn pareto_loglik(samples: &[f64], k: f64, sigma: f64, theta: f64) -> f64 {
    let n = samples.len() as f64;
    let tail: f64 = samples
        .iter()
        .map(|&x| (k * (x - theta) / sigma).ln_1p())
        .sum();
    -n * sigma.ln() - (1.0 + 1.0 / k) * tail
}

/// Maximum-likelihood Pareto fit of shape and scale with the location held
/// fixed. The location defaults to the sample minimum.
pub fn fit_pareto(samples: &[f64], theta: Option<f64>) -> Result<FitReport> {
    if samples.len() < 10 {
        return Err(Error::InvalidInput(format!(
            "Pareto fit needs at least 10 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("Pareto fit needs finite samples".into()));
    }
    let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let theta = theta.unwrap_or(min);
    if min < theta {
        return Err(Error::InvalidInput(format!(
            "sample {min} lies below the location {theta}"
        )));
    }

    // moment-based starting point
    let n = samples.len() as f64;
    let m = samples.iter().map(|x| x - theta).sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - theta - m).powi(2)).sum::<f64>() / (n - 1.0);
    if !(m > 0.0) {
        return Err(Error::InvalidInput("degenerate sample: no spread above the location".into()));
    }
    let k0 = (0.5 * (1.0 - m * m / var)).clamp(0.05, 0.45);
    let s0 = m * (1.0 - k0);

    let objective = |p: &[f64]| {
        let (k, s) = (p[0].exp(), p[1].exp());
        let ll = pareto_loglik(samples, k, s, theta);
        if ll.is_finite() {
            -ll
        } else {
            f64::INFINITY
        }
    };
    let (best, nll) = nelder_mead(objective, &[k0.ln(), s0.ln()], 0.3, 1e-13, 20_000)?;
    if !nll.is_finite() {
        return Err(Error::Optimization("Pareto likelihood is not finite at the optimum".into()));
    }
    let (k, sigma) = (best[0].exp(), best[1].exp());
    Ok(FitReport::new(FitParams::Pareto { k, sigma, theta }, -nll, samples.len()))
}

/// Integrated squared difference between the exponential law with mean
/// `mean` (on the Pareto's support) and the truncated Pareto density.
///
/// Both squared terms have closed forms; only the cross term is integrated,
/// after rescaling by the exponential mean so the integrand stays bounded.
pub fn lsq_objective(p: &TruncatedPareto, mean: f64) -> Result<f64> {
    let e = TruncatedExponential::new(mean, p.lo(), p.hi())?;
    let width = p.hi() - p.lo();
    let e_mass = -(-width / mean).exp_m1();

    let exp_sq = if width.is_infinite() {
        1.0
    } else {
        -(-2.0 * width / mean).exp_m1()
    } / (2.0 * mean * e_mass * e_mass);

    let (k, sigma) = (p.k(), p.sigma());
    let a = 1.0 + 2.0 / k;
    let tail = |x: f64| {
        if x.is_infinite() {
            0.0
        } else {
            (-a * (k * (x - p.theta()) / sigma).ln_1p()).exp()
        }
    };
    let m = p.truncation_mass();
    let pareto_sq = (tail(p.lo()) - tail(p.hi())) / (sigma * (k + 2.0) * m * m);

    // cross term in t = (x - lo) / mean
    let t_max = (width / mean).min(60.0);
    let mut breaks = vec![0.0];
    let mut b = (sigma / mean) * 1e-2;
    while b < t_max {
        breaks.push(b);
        b *= 4.0;
    }
    for b in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
        if b < t_max {
            breaks.push(b);
        }
    }
    breaks.push(t_max);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let scale = p.pdf(p.lo());
    let cross = integrate_pieces(
        |t| (-t).exp() * p.pdf(p.lo() + mean * t),
        &breaks,
        1e-13 * scale,
    ) / e_mass;
    debug_assert!(e.pdf(p.lo()) > 0.0);

    Ok((exp_sq + pareto_sq - 2.0 * cross).max(0.0))
}

/// Mean of the exponential (sharing the Pareto's support) closest to the
/// Pareto density in integrated squared error.
pub fn lsq_exponential_of_pareto(p: &TruncatedPareto) -> Result<f64> {
    let width = if p.hi().is_finite() {
        p.hi() - p.lo()
    } else {
        p.sample(1.0 - 1e-9) - p.lo()
    };
    let (lo_ln, hi_ln) = ((p.sigma() * 1e-3).ln(), width.ln());
    let grid = 80;
    let points: Vec<f64> = (0..=grid)
        .map(|i| lo_ln + (hi_ln - lo_ln) * i as f64 / grid as f64)
        .collect();
    let mut values = Vec::with_capacity(points.len());
    for &l in &points {
        values.push(lsq_objective(p, l.exp())?);
    }
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if best == 0 || best == grid {
        return Err(Error::Optimization(format!(
            "least-squares exponential mean not bracketed in [{:.3e}, {:.3e}] (best at grid edge, objective {:.3e})",
            lo_ln.exp(),
            hi_ln.exp(),
            values[best]
        )));
    }
    let f = |l: f64| lsq_objective(p, l.exp()).unwrap_or(f64::INFINITY);
    let l = golden_section(f, points[best - 1], points[best + 1], 1e-12);
    Ok(l.exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    #[test]
    fn exponential_constant_samples() {
        let r = fit_exponential_mle(&[2.5; 8]).unwrap();
        assert_eq!(r.params, FitParams::Exponential { mean: 2.5 });
    }

    #[test]
    fn exponential_recovers_mean() {
        let e = TruncatedExponential::with_mean(3.0).unwrap();
        let key = StreamKey::new(5, "exp-fit");
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|i| e.sample(key.stream(i).open01())).collect();
        let r = fit_exponential_mle(&xs).unwrap();
        let FitParams::Exponential { mean } = r.params else {
            panic!()
        };
        assert!((mean - 3.0).abs() < 3.0 * 3.0 / (n as f64).sqrt(), "{mean}");
        assert_eq!(r.bic, 1.0 * (n as f64).ln() - 2.0 * r.loglik);
    }

    #[test]
    fn exponential_rejects_degenerate_input() {
        assert!(fit_exponential_mle(&[]).is_err());
        assert!(fit_exponential_mle(&[1.0]).is_err());
        assert!(fit_exponential_mle(&[1.0, -1.0]).is_err());
    }

    fn pareto_draws(n: u64) -> Vec<f64> {
        let p = TruncatedPareto::untruncated(0.4, 0.05, 0.0).unwrap();
        let key = StreamKey::new(9, "pareto-fit");
        (0..n).map(|i| p.sample(key.stream(i).open01())).collect()
    }

    #[test]
    fn pareto_recovers_parameters() {
        let xs = pareto_draws(100_000);
        let r = fit_pareto(&xs, Some(0.0)).unwrap();
        let FitParams::Pareto { k, sigma, theta } = r.params else {
            panic!()
        };
        assert_eq!(theta, 0.0);
        assert!((k - 0.4).abs() < 0.04, "k = {k}");
        assert!((sigma - 0.05).abs() < 0.005, "sigma = {sigma}");
        assert_eq!(r.bic, 2.0 * (xs.len() as f64).ln() - 2.0 * r.loglik);

        for (dk, ds) in [(1.05, 1.0), (0.95, 1.0), (1.0, 1.05), (1.0, 0.95)] {
            assert!(pareto_loglik(&xs, k * dk, sigma * ds, 0.0) <= r.loglik);
        }
    }

    #[test]
    fn pareto_location_defaults_to_minimum() {
        let xs: Vec<f64> = pareto_draws(2_000).iter().map(|x| x + 0.01).collect();
        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let r = fit_pareto(&xs, None).unwrap();
        let FitParams::Pareto { theta, .. } = r.params else {
            panic!()
        };
        assert_eq!(theta, min);
    }

    #[test]
    fn pareto_rejects_short_or_misplaced_input() {
        assert!(fit_pareto(&[1.0; 5], None).is_err());
        assert!(fit_pareto(&pareto_draws(50), Some(0.5)).is_err());
    }

    #[test]
    fn lsq_small_shape_matches_grid_oracle() {
        // oracle: grid search of the quadrature objective, computed offline
        let p = TruncatedPareto::new(0.01, 0.03, 0.0, 0.0, 5.0).unwrap();
        let lam = lsq_exponential_of_pareto(&p).unwrap();
        assert!((lam - 0.030_074_85).abs() / 0.030_074_85 < 1e-5, "{lam}");
    }

    #[test]
    fn lsq_default_like_matches_grid_oracle() {
        let p = TruncatedPareto::new(0.2, 0.012, 1.0 / 75.0, 1.0 / 75.0, 10.0).unwrap();
        let lam = lsq_exponential_of_pareto(&p).unwrap();
        assert!((lam - 0.012_582_68).abs() / 0.012_582_68 < 1e-5, "{lam}");
    }

    #[test]
    fn lsq_is_locally_optimal_and_deterministic() {
        let p = TruncatedPareto::new(0.3, 0.02, 0.0, 0.0, 2.0).unwrap();
        let lam = lsq_exponential_of_pareto(&p).unwrap();
        let at = lsq_objective(&p, lam).unwrap();
        assert!(at <= lsq_objective(&p, lam * 1.01).unwrap());
        assert!(at <= lsq_objective(&p, lam * 0.99).unwrap());
        assert_eq!(lam, lsq_exponential_of_pareto(&p).unwrap());
    }
}
