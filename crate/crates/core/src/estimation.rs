//! Crude Monte Carlo and importance-sampling estimators, relative half-width
//! stopping, injury weighting and test-distance accounting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::normal_two_sided_quantile;

pub const METERS_PER_MILE: f64 = 1609.344;

/// Naturalistic miles per lane change with a negative range rate.
pub const DEFAULT_MILES_PER_LANE_CHANGE: f64 = 1_325_964.0 / 173_592.0;

/// Exact sum of f64 values kept as non-overlapping partials, so the
/// result does not depend on the order values were added or merged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExactSum {
    partials: Vec<f64>,
}

impl ExactSum {
    pub fn add(&mut self, mut x: f64) {
        let mut i = 0;
        for j in 0..self.partials.len() {
            let mut y = self.partials[j];
            if x.abs() < y.abs() {
                std::mem::swap(&mut x, &mut y);
            }
            let hi = x + y;
            let lo = y - (hi - x);
            if lo != 0.0 {
                self.partials[i] = lo;
                i += 1;
            }
            x = hi;
        }
        self.partials.truncate(i);
        self.partials.push(x);
    }

    /// Adds `w * w` without rounding the product.
    pub fn add_square(&mut self, w: f64) {
        let hi = w * w;
        let lo = w.mul_add(w, -hi);
        self.add(hi);
        if lo != 0.0 {
            self.add(lo);
        }
    }

    pub fn merge(&mut self, other: &ExactSum) {
        for &x in &other.partials {
            self.add(x);
        }
    }

    /// Correctly rounded value of the exact sum.
    pub fn value(&self) -> f64 {
        let p = &self.partials;
        let Some(&top) = p.last() else {
            return 0.0;
        };
        let mut n = p.len() - 1;
        let mut hi = top;
        let mut lo = 0.0;
        while n > 0 {
            let x = hi;
            n -= 1;
            let y = p[n];
            hi = x + y;
            lo = y - (hi - x);
            if lo != 0.0 {
                break;
            }
        }
        // half-way case: the remaining partials decide the rounding direction
        if n > 0 && ((lo < 0.0 && p[n - 1] < 0.0) || (lo > 0.0 && p[n - 1] > 0.0)) {
            let y = lo * 2.0;
            let x = hi + y;
            if y == x - hi {
                hi = x;
            }
        }
        hi
    }
}

/// Running sums of weighted samples `I * L` (or `P_inj * L`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EstimatorAccumulator {
    pub n: u64,
    sum_w: ExactSum,
    sum_w2: ExactSum,
    distance_m: ExactSum,
    w_min: f64,
    w_max: f64,
}

impl EstimatorAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, indicator: f64, likelihood: f64, distance: f64) -> Result<()> {
        if !(likelihood > 0.0) || !likelihood.is_finite() {
            return Err(Error::InvalidInput(format!(
                "likelihood must be positive and finite, got {likelihood}"
            )));
        }
        if !(0.0..=1.0).contains(&indicator) {
            return Err(Error::InvalidInput(format!("indicator must lie in [0, 1], got {indicator}")));
        }
        if !(distance >= 0.0) || !distance.is_finite() {
            return Err(Error::InvalidInput(format!("distance must be finite and >= 0, got {distance}")));
        }
        let w = indicator * likelihood;
        if self.n == 0 {
            self.w_min = w;
            self.w_max = w;
        } else {
            self.w_min = self.w_min.min(w);
            self.w_max = self.w_max.max(w);
        }
        self.n += 1;
        self.sum_w.add(w);
        self.sum_w2.add_square(w);
        self.distance_m.add(distance);
        Ok(())
    }

    pub fn merge(&self, other: &Self) -> Self {
        if other.n == 0 {
            return self.clone();
        }
        if self.n == 0 {
            return other.clone();
        }
        let mut out = self.clone();
        out.n += other.n;
        out.sum_w.merge(&other.sum_w);
        out.sum_w2.merge(&other.sum_w2);
        out.distance_m.merge(&other.distance_m);
        out.w_min = self.w_min.min(other.w_min);
        out.w_max = self.w_max.max(other.w_max);
        out
    }

    pub fn sum_w(&self) -> f64 {
        self.sum_w.value()
    }

    pub fn sum_w2(&self) -> f64 {
        self.sum_w2.value()
    }

    pub fn distance_m(&self) -> f64 {
        self.distance_m.value()
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum_w() / self.n as f64)
    }

    /// Unbiased sample variance of the weighted samples.
    pub fn sample_variance(&self) -> Option<f64> {
        if self.n < 2 {
            return None;
        }
        // weights that agree to floating resolution carry no sampling spread
        if self.w_max - self.w_min <= 16.0 * f64::EPSILON * self.w_max.abs() {
            return Some(0.0);
        }
        let n = self.n as f64;
        let s1 = self.sum_w();
        Some(((self.sum_w2() - s1 * s1 / n) / (n - 1.0)).max(0.0))
    }

    /// `z * s / (mean * sqrt(n))`; `None` while the estimate is zero or
    /// fewer than two samples are in.
    pub fn relative_half_width(&self, spec: &ConfidenceSpec) -> Option<f64> {
        let mean = self.mean()?;
        let var = self.sample_variance()?;
        if !(mean > 0.0) {
            return None;
        }
        Some(spec.z() * var.sqrt() / (mean * (self.n as f64).sqrt()))
    }

    pub fn standard_error(&self) -> Option<f64> {
        Some((self.sample_variance()? / self.n as f64).sqrt())
    }

    /// Two-sided `1 - alpha` normal interval.
    pub fn confidence_interval(&self, spec: &ConfidenceSpec) -> Option<(f64, f64)> {
        let mean = self.mean()?;
        let half = spec.z() * self.standard_error()?;
        Some((mean - half, mean + half))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceSpec {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for ConfidenceSpec {
    /// 80 % confidence, 20 % relative half-width.
    fn default() -> Self {
        ConfidenceSpec { alpha: 0.2, beta: 0.2 }
    }
}

impl ConfidenceSpec {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let s = ConfidenceSpec { alpha, beta };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("confidence.alpha", format!("must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::config("confidence.beta", format!("must be positive, got {}", self.beta)));
        }
        Ok(())
    }

    pub fn z(&self) -> f64 {
        normal_two_sided_quantile(self.alpha)
    }
}

/// Crude Monte Carlo sample size needed for relative half-width `beta` at
/// event probability `gamma`.
pub fn required_n_cmc(gamma: f64, spec: &ConfidenceSpec) -> Result<u64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidInput(format!("gamma must lie in (0, 1), got {gamma}")));
    }
    let z = spec.z();
    Ok((z * z / (spec.beta * spec.beta) * (1.0 - gamma) / gamma).ceil() as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeltaVUnit {
    #[serde(rename = "m/s")]
    MetersPerSecond,
    #[serde(rename = "km/h")]
    KilometersPerHour,
}

/// Logistic MAIS2+ injury risk in the crash speed change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InjuryModel {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    /// Unit the coefficients expect for `delta_v`. Simulation speeds are m/s.
    pub unit: DeltaVUnit,
}

impl Default for InjuryModel {
    fn default() -> Self {
        InjuryModel {
            b0: -6.068,
            b1: 0.1,
            b2: -0.6234,
            unit: DeltaVUnit::MetersPerSecond,
        }
    }
}

impl InjuryModel {
    /// Probability of injury; exactly 0 when there was no crash.
    pub fn probability(&self, delta_v_mps: Option<f64>) -> f64 {
        let Some(dv) = delta_v_mps else {
            return 0.0;
        };
        let dv = match self.unit {
            DeltaVUnit::MetersPerSecond => dv,
            DeltaVUnit::KilometersPerHour => dv * 3.6,
        };
        let eta = self.b0 + self.b1 * dv + self.b2;
        1.0 / (1.0 + (-eta).exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceleratedRate {
    pub n_nature: u64,
    pub d_nature_mi: f64,
    pub d_acc_mi: f64,
    pub r_acc: f64,
}

/// Naturalistic miles for `n_nature` lane changes over the miles driven in
/// the accelerated tests.
pub fn accelerated_rate(n_nature: u64, miles_per_lane_change: f64, d_acc_m: f64) -> Result<AcceleratedRate> {
    if !(d_acc_m > 0.0) {
        return Err(Error::InvalidInput("accelerated test distance must be positive".into()));
    }
    let d_nature_mi = miles_per_lane_change * n_nature as f64;
    let d_acc_mi = d_acc_m / METERS_PER_MILE;
    Ok(AcceleratedRate {
        n_nature,
        d_nature_mi,
        d_acc_mi,
        r_acc: d_nature_mi / d_acc_mi,
    })
}

/// One simulated test as seen by an estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Event indicator or injury probability, in [0, 1].
    pub value: f64,
    pub likelihood: f64,
    pub distance_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StoppingRule {
    /// Stopping is checked after every batch of this many samples.
    pub batch: u64,
    pub min_samples: u64,
    /// Batches evaluated concurrently between merges.
    pub wave: u64,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule {
            batch: 50,
            min_samples: 100,
            wave: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: u64,
    pub estimate: f64,
    pub rel_half_width: Option<f64>,
    pub sample_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRun<T> {
    pub acc: EstimatorAccumulator,
    pub converged: bool,
    pub rows: Vec<ConvergenceRow>,
    /// Per-sample records for the samples that were counted.
    pub records: Vec<T>,
}

/// Draw samples `0, 1, 2, ...` through `sample` until the relative
/// half-width drops below `beta` or `n_cap` samples are in.
///
/// Samples are processed in fixed batches; each batch is accumulated in
/// index order and batches are merged in order, so the result does not
/// depend on the number of worker threads.
pub fn run_estimator<T, F>(sample: F, spec: &ConfidenceSpec, rule: &StoppingRule, n_cap: u64) -> Result<EstimateRun<T>>
where
    T: Send,
    F: Fn(u64) -> Result<(Observation, T)> + Sync,
{
    let batch = rule.batch.max(1);
    let wave = rule.wave.max(1);
    let mut total = EstimatorAccumulator::new();
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut converged = false;
    let mut next_index = 0u64;

    'outer: while next_index < n_cap {
        let starts: Vec<u64> = (0..wave)
            .map(|j| next_index + j * batch)
            .take_while(|&s| s < n_cap)
            .collect();
        let results: Vec<Result<(EstimatorAccumulator, Vec<T>)>> = starts
            .par_iter()
            .map(|&s| {
                let end = (s + batch).min(n_cap);
                let mut acc = EstimatorAccumulator::new();
                let mut recs = Vec::with_capacity((end - s) as usize);
                for i in s..end {
                    let (obs, rec) = sample(i)?;
                    acc.update(obs.value, obs.likelihood, obs.distance_m)?;
                    recs.push(rec);
                }
                Ok((acc, recs))
            })
            .collect();
        for (res, &s) in results.into_iter().zip(&starts) {
            let (acc, recs) = res?;
            total = total.merge(&acc);
            records.extend(recs);
            next_index = (s + batch).min(n_cap);
            let lr = total.relative_half_width(spec);
            rows.push(ConvergenceRow {
                n: total.n,
                estimate: total.mean().unwrap_or(0.0),
                rel_half_width: lr,
                sample_variance: total.sample_variance().unwrap_or(0.0),
            });
            if total.n >= rule.min_samples && lr.is_some_and(|l| l < spec.beta) {
                converged = true;
                break 'outer;
            }
        }
    }
    Ok(EstimateRun {
        acc: total,
        converged,
        rows,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fill(values: &[(f64, f64)]) -> EstimatorAccumulator {
        let mut a = EstimatorAccumulator::new();
        for &(i, l) in values {
            a.update(i, l, 1.0).unwrap();
        }
        a
    }

    #[test]
    fn cmc_fraction() {
        let a = fill(&[(1.0, 1.0), (0.0, 1.0), (1.0, 1.0), (0.0, 1.0), (0.0, 1.0)]);
        assert_eq!(a.mean(), Some(0.4));
    }

    #[test]
    fn all_zero_stream() {
        let a = fill(&[(0.0, 2.0); 10]);
        assert_eq!(a.mean(), Some(0.0));
        assert_eq!(a.sample_variance(), Some(0.0));
        assert_eq!(a.relative_half_width(&ConfidenceSpec::default()), None);
    }

    #[test]
    fn two_sample_hand_arithmetic() {
        let a = fill(&[(1.0, 0.2), (0.0, 5.0)]);
        assert!((a.mean().unwrap() - 0.1).abs() < 1e-15);
        assert!((a.sample_variance().unwrap() - 0.02).abs() < 1e-15);
        assert_eq!(a.sum_w(), 0.2);
        assert_eq!(a.sum_w2(), 0.2f64 * 0.2);
    }

    #[test]
    fn rejects_bad_updates() {
        let mut a = EstimatorAccumulator::new();
        assert!(a.update(1.0, 0.0, 1.0).is_err());
        assert!(a.update(1.0, -1.0, 1.0).is_err());
        assert!(a.update(1.5, 1.0, 1.0).is_err());
        assert!(a.update(1.0, 1.0, -1.0).is_err());
        assert_eq!(a.n, 0);
    }

    #[test]
    fn merge_identity_and_commutativity() {
        let a = fill(&[(1.0, 0.3), (0.0, 1.0)]);
        let b = fill(&[(1.0, 0.7)]);
        assert_eq!(a.merge(&EstimatorAccumulator::new()), a);
        assert_eq!(EstimatorAccumulator::new().merge(&a), a);
        let (ab, ba) = (a.merge(&b), b.merge(&a));
        assert_eq!((ab.n, ab.sum_w(), ab.sum_w2()), (ba.n, ba.sum_w(), ba.sum_w2()));
        let whole = fill(&[(1.0, 0.3), (0.0, 1.0), (1.0, 0.7)]);
        assert_eq!(ab.sum_w(), whole.sum_w());
        assert_eq!(ab.sum_w2(), whole.sum_w2());
        assert_eq!(ab.distance_m(), 3.0);
    }

    #[test]
    fn exact_sum_is_order_free() {
        let xs = [1e16, 1.0, -1e16, 3.0e-8, 0.1, 0.2, -0.3];
        let mut fwd = ExactSum::default();
        xs.iter().for_each(|&x| fwd.add(x));
        let mut rev = ExactSum::default();
        xs.iter().rev().for_each(|&x| rev.add(x));
        assert_eq!(fwd.value(), rev.value());
        let naive: f64 = xs.iter().sum();
        assert_ne!(naive, fwd.value());
        assert!((fwd.value() - (1.0 + 3.0e-8 + 0.1 + 0.2 - 0.3)).abs() < 1e-16);
    }

    #[test]
    fn zero_variance_gives_zero_width() {
        let g = (-7f64).exp();
        let a = fill(&vec![(1.0, g); 1000]);
        assert_eq!(a.relative_half_width(&ConfidenceSpec::default()), Some(0.0));
    }

    #[test]
    fn bernoulli_plug_in_matches_closed_form() {
        // 30 hits in 200: sample-variance form vs z * sqrt((1-g)/(g n)),
        // which differ only by the n/(n-1) factor of the unbiased variance
        let mut values = vec![(1.0, 1.0); 30];
        values.extend(vec![(0.0, 1.0); 170]);
        let a = fill(&values);
        let spec = ConfidenceSpec::default();
        let g: f64 = 0.15;
        let n: f64 = 200.0;
        let closed = spec.z() * ((1.0 - g) / (g * n)).sqrt() * (n / (n - 1.0)).sqrt();
        assert!((a.relative_half_width(&spec).unwrap() - closed).abs() < 1e-12);
    }

    #[test]
    fn z_at_eighty_percent() {
        assert!((ConfidenceSpec::default().z() - 1.2816).abs() < 1e-3);
    }

    #[test]
    fn required_sample_sizes() {
        assert_eq!(required_n_cmc(0.5, &ConfidenceSpec::new(0.05, 0.1).unwrap()).unwrap(), 385);
        assert_eq!(required_n_cmc(0.1, &ConfidenceSpec::new(0.2, 0.2).unwrap()).unwrap(), 370);
        assert!(required_n_cmc(0.999_999, &ConfidenceSpec::default()).unwrap() <= 1);
        assert!(required_n_cmc(0.0, &ConfidenceSpec::default()).is_err());
    }

    #[test]
    fn injury_values() {
        let m = InjuryModel::default();
        assert_eq!(m.probability(None), 0.0);
        assert!((m.probability(Some(0.0)) - 1.24e-3).abs() < 1e-5);
        assert!((m.probability(Some(66.914)) - 0.5).abs() < 1e-3);
        let mut last = 0.0;
        for i in 0..100 {
            let p = m.probability(Some(i as f64));
            assert!((0.0..=1.0).contains(&p) && p >= last);
            last = p;
        }
        let kmh = InjuryModel {
            unit: DeltaVUnit::KilometersPerHour,
            ..m
        };
        assert!((kmh.probability(Some(66.914 / 3.6)) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn accounting() {
        assert_eq!((DEFAULT_MILES_PER_LANE_CHANGE * 100.0).round() / 100.0, 7.64);
        let r = accelerated_rate(100, 7.64, 160.0).unwrap();
        assert!((r.d_acc_mi - 0.099_419).abs() < 1e-6);
        assert_eq!(r.r_acc, r.d_nature_mi / r.d_acc_mi);
        assert!(accelerated_rate(10, 7.64, 0.0).is_err());
    }

    #[test]
    fn driver_stops_and_is_thread_count_independent() {
        let spec = ConfidenceSpec::default();
        let rule = StoppingRule::default();
        let f = |i: u64| -> Result<(Observation, u64)> {
            let value = if i % 7 == 0 { 1.0 } else { 0.0 };
            Ok((
                Observation {
                    value,
                    likelihood: 1.0 + (i % 3) as f64 * 0.1,
                    distance_m: 10.0,
                },
                i,
            ))
        };
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_estimator(f, &spec, &rule, 100_000)).unwrap();
        let b = four.install(|| run_estimator(f, &spec, &rule, 100_000)).unwrap();
        assert!(a.converged);
        assert_eq!(a, b);
        assert_eq!(a.acc.n % rule.batch, 0);
        assert_eq!(a.records.len() as u64, a.acc.n);
        assert!(a.rows.last().unwrap().rel_half_width.unwrap() < spec.beta);
    }

    #[test]
    fn driver_respects_cap() {
        let f = |_i: u64| -> Result<(Observation, ())> {
            Ok((
                Observation {
                    value: 0.0,
                    likelihood: 1.0,
                    distance_m: 1.0,
                },
                (),
            ))
        };
        let r = run_estimator(f, &ConfidenceSpec::default(), &StoppingRule::default(), 10).unwrap();
        assert!(!r.converged);
        assert_eq!(r.acc.n, 10);
    }
}
