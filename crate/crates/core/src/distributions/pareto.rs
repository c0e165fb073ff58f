use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generalized Pareto law with shape `k`, scale `sigma` and location `theta`,
/// truncated to `[lo, hi]` and renormalized. `hi` may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParetoFields", into = "ParetoFields")]
pub struct TruncatedPareto {
    k: f64,
    sigma: f64,
    theta: f64,
    lo: f64,
    hi: f64,
    surv_lo: f64,
    mass: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParetoFields {
    k: f64,
    sigma: f64,
    theta: f64,
    lo: f64,
    hi: f64,
}

impl TryFrom<ParetoFields> for TruncatedPareto {
    type Error = Error;
    fn try_from(f: ParetoFields) -> Result<Self> {
        TruncatedPareto::new(f.k, f.sigma, f.theta, f.lo, f.hi)
    }
}

impl From<TruncatedPareto> for ParetoFields {
    fn from(p: TruncatedPareto) -> Self {
        ParetoFields {
            k: p.k,
            sigma: p.sigma,
            theta: p.theta,
            lo: p.lo,
            hi: p.hi,
        }
    }
}

impl TruncatedPareto {
    pub fn new(k: f64, sigma: f64, theta: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::param("k", format!("shape must be positive, got {k}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::param("sigma", format!("scale must be positive, got {sigma}")));
        }
        if !(theta >= 0.0 && theta.is_finite()) {
            return Err(Error::param("theta", format!("location must be >= 0, got {theta}")));
        }
        if !(lo >= theta && lo < hi) || lo.is_infinite() {
            return Err(Error::param(
                "lo",
                format!("need theta <= lo < hi, got theta={theta}, lo={lo}, hi={hi}"),
            ));
        }
        let mut p = TruncatedPareto {
            k,
            sigma,
            theta,
            lo,
            hi,
            surv_lo: 0.0,
            mass: 0.0,
        };
        p.surv_lo = p.raw_survival(lo);
        p.mass = p.surv_lo - p.raw_survival(hi);
        if !(p.mass > 0.0) {
            return Err(Error::param("hi", "truncation window carries no probability mass"));
        }
        Ok(p)
    }

    /// The law on `[theta, inf)` with no truncation.
    pub fn untruncated(k: f64, sigma: f64, theta: f64) -> Result<Self> {
        Self::new(k, sigma, theta, theta, f64::INFINITY)
    }

    pub fn k(&self) -> f64 {
        self.k
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn lo(&self) -> f64 {
        self.lo
    }
    pub fn hi(&self) -> f64 {
        self.hi
    }
    /// Probability the untruncated law assigns to `[lo, hi]`.
    pub fn truncation_mass(&self) -> f64 {
        self.mass
    }

    fn raw_survival(&self, x: f64) -> f64 {
        if x.is_infinite() {
            return 0.0;
        }
        let z = (x - self.theta) / self.sigma;
        (-(self.k * z).ln_1p() / self.k).exp()
    }

    /// Untruncated density at `x >= theta`.
    pub fn raw_pdf(&self, x: f64) -> f64 {
        let z = (x - self.theta) / self.sigma;
        ((-1.0 - 1.0 / self.k) * (self.k * z).ln_1p()).exp() / self.sigma
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        self.raw_pdf(x) / self.mass
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return f64::NEG_INFINITY;
        }
        let z = (x - self.theta) / self.sigma;
        (-1.0 - 1.0 / self.k) * (self.k * z).ln_1p() - self.sigma.ln() - self.mass.ln()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            0.0
        } else if x >= self.hi {
            1.0
        } else {
            ((self.surv_lo - self.raw_survival(x)) / self.mass).clamp(0.0, 1.0)
        }
    }

    /// Inverse-CDF draw for `u` in (0, 1).
    pub fn sample(&self, u: f64) -> f64 {
        let target = self.surv_lo - u * self.mass;
        let x = self.theta + self.sigma * (-self.k * target.ln()).exp_m1() / self.k;
        x.clamp(self.lo, self.hi)
    }
}
