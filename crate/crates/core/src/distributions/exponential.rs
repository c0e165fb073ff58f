use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exponential law with MEAN `mean`, truncated to `[lo, hi]` and renormalized.
///
/// Truncating an exponential from below is the same as shifting it, so the
/// density on the support is `exp(-(x - lo) / mean) / (mean * mass)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ExpFields", into = "ExpFields")]
pub struct TruncatedExponential {
    mean: f64,
    lo: f64,
    hi: f64,
    mass: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExpFields {
    mean: f64,
    lo: f64,
    hi: f64,
}

impl TryFrom<ExpFields> for TruncatedExponential {
    type Error = Error;
    fn try_from(f: ExpFields) -> Result<Self> {
        TruncatedExponential::new(f.mean, f.lo, f.hi)
    }
}

impl From<TruncatedExponential> for ExpFields {
    fn from(e: TruncatedExponential) -> Self {
        ExpFields {
            mean: e.mean,
            lo: e.lo,
            hi: e.hi,
        }
    }
}

impl TruncatedExponential {
    pub fn new(mean: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(mean > 0.0 && mean.is_finite()) {
            return Err(Error::param("mean", format!("must be positive, got {mean}")));
        }
        if !(lo < hi) || !lo.is_finite() {
            return Err(Error::param("lo", format!("need finite lo < hi, got lo={lo}, hi={hi}")));
        }
        let mass = -(-(hi - lo) / mean).exp_m1();
        if !(mass > 0.0) {
            return Err(Error::param("hi", "truncation window carries no probability mass"));
        }
        Ok(TruncatedExponential { mean, lo, hi, mass })
    }

    /// Plain exponential on `[0, inf)`.
    pub fn with_mean(mean: f64) -> Result<Self> {
        Self::new(mean, 0.0, f64::INFINITY)
    }

    pub fn mean_parameter(&self) -> f64 {
        self.mean
    }
    pub fn lo(&self) -> f64 {
        self.lo
    }
    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        (-(x - self.lo) / self.mean).exp() / (self.mean * self.mass)
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return f64::NEG_INFINITY;
        }
        -(x - self.lo) / self.mean - self.mean.ln() - self.mass.ln()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            0.0
        } else if x >= self.hi {
            1.0
        } else {
            (-(-(x - self.lo) / self.mean).exp_m1() / self.mass).clamp(0.0, 1.0)
        }
    }

    pub fn sample(&self, u: f64) -> f64 {
        let x = self.lo - self.mean * (-u * self.mass).ln_1p();
        x.clamp(self.lo, self.hi)
    }

    /// Mean of the truncated law (differs from the mean parameter when
    /// truncated).
    pub fn truncated_mean(&self) -> f64 {
        if self.hi.is_infinite() {
            return self.lo + self.mean;
        }
        let w = self.hi - self.lo;
        self.lo + self.mean - w * (-w / self.mean).exp() / self.mass
    }

    /// Exponentially tilted law: mean `mean - vartheta`, same support.
    pub fn tilted(&self, vartheta: f64) -> Result<Self> {
        if !(vartheta < self.mean) || !vartheta.is_finite() {
            return Err(Error::InvalidTilt {
                lambda: self.mean,
                vartheta,
            });
        }
        if vartheta == 0.0 {
            return Ok(*self);
        }
        Self::new(self.mean - vartheta, self.lo, self.hi)
    }

    /// Log moment generating function `ln E[exp(t X)]` of this law.
    pub fn log_mgf(&self, t: f64) -> f64 {
        let r = 1.0 / self.mean - t;
        let w = self.hi - self.lo;
        if w.is_infinite() && r <= 0.0 {
            return f64::INFINITY;
        }
        let window = if w.is_infinite() {
            1.0
        } else if r == 0.0 {
            return t * self.lo + (w / self.mean).ln() - self.mass.ln();
        } else {
            -(-r * w).exp_m1()
        };
        t * self.lo - (self.mean * r).ln() + window.ln() - self.mass.ln()
    }
}

/// Natural exponential-change-of-measure parameter matching a mean shift
/// from `lambda` to `lambda - vartheta`.
pub fn ecm_natural_parameter(lambda: f64, vartheta: f64) -> f64 {
    vartheta / (vartheta * lambda - lambda * lambda)
}
