//! The three-variable cut-in generator: LCV speed, inverse range and inverse
//! TTC at the moment of lane crossing, plus the derived kinematics and the
//! likelihood ratio of a tilted draw.

use serde::{Deserialize, Serialize};

use crate::distributions::{lsq_exponential_of_pareto, EmpiricalDist, TruncatedExponential, TruncatedPareto};
use crate::error::{Error, Result};
use crate::rng::UniformStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocityBin {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl VelocityBin {
    pub fn new(name: &str, lo: f64, hi: f64) -> Self {
        VelocityBin {
            name: name.to_string(),
            lo,
            hi,
        }
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

pub fn default_bins() -> Vec<VelocityBin> {
    vec![
        VelocityBin::new("low", 5.0, 15.0),
        VelocityBin::new("medium", 15.0, 25.0),
        VelocityBin::new("high", 25.0, 40.0),
    ]
}

fn default_ttc_floor() -> f64 {
    0.01
}

fn default_ttc_bounds() -> (f64, f64) {
    (0.0, f64::INFINITY)
}

/// Serializable description of a [`ScenarioModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioModelSpec {
    pub v_dist: EmpiricalDist,
    pub r_inv: TruncatedPareto,
    /// Least-squares exponential mean approximating `r_inv`. Recomputed and
    /// cross-checked when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_inv_exp_approx: Option<f64>,
    /// `(v_center [m/s], mean of TTC^-1 [1/s])`, speeds increasing.
    pub ttc_lambda_table: Vec<(f64, f64)>,
    #[serde(default = "default_ttc_floor")]
    pub ttc_lambda_floor: f64,
    /// Support of TTC^-1; the upper end may be `inf`.
    #[serde(default = "default_ttc_bounds")]
    pub ttc_inv_bounds: (f64, f64),
    #[serde(default = "default_bins")]
    pub bins: Vec<VelocityBin>,
}

/// Validated generative model.
#[derive(Debug, Clone)]
pub struct ScenarioModel {
    v_dist: EmpiricalDist,
    r_inv: TruncatedPareto,
    lambda_r: f64,
    ttc_table: Vec<(f64, f64)>,
    ttc_floor: f64,
    ttc_bounds: (f64, f64),
    bins: Vec<VelocityBin>,
}

impl ScenarioModel {
    pub fn from_spec(spec: &ScenarioModelSpec) -> Result<Self> {
        let table = &spec.ttc_lambda_table;
        if table.is_empty() {
            return Err(Error::config("scenario.ttc_lambda_table", "must not be empty"));
        }
        if table.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(Error::config(
                "scenario.ttc_lambda_table",
                "speeds must be strictly increasing",
            ));
        }
        if table.iter().any(|&(v, l)| !(l > 0.0) || !v.is_finite() || !l.is_finite()) {
            return Err(Error::config("scenario.ttc_lambda_table", "all means must be positive"));
        }
        if !(spec.ttc_lambda_floor > 0.0) {
            return Err(Error::config("scenario.ttc_lambda_floor", "must be positive"));
        }
        let (tlo, thi) = spec.ttc_inv_bounds;
        if !(tlo >= 0.0 && tlo < thi) || !tlo.is_finite() {
            return Err(Error::config(
                "scenario.ttc_inv_bounds",
                format!("need finite 0 <= lo < hi, got ({tlo}, {thi})"),
            ));
        }
        validate_bins(&spec.bins)?;

        let lambda_r = lsq_exponential_of_pareto(&spec.r_inv)
            .map_err(|e| Error::config("scenario.r_inv", e.to_string()))?;
        if let Some(given) = spec.r_inv_exp_approx {
            if ((given - lambda_r) / lambda_r).abs() > 1e-9 {
                return Err(Error::config(
                    "scenario.r_inv_exp_approx",
                    format!("{given} disagrees with the least-squares value {lambda_r}"),
                ));
            }
        }

        Ok(ScenarioModel {
            v_dist: spec.v_dist.clone(),
            r_inv: spec.r_inv,
            lambda_r,
            ttc_table: table.clone(),
            ttc_floor: spec.ttc_lambda_floor,
            ttc_bounds: spec.ttc_inv_bounds,
            bins: spec.bins.clone(),
        })
    }

    pub fn to_spec(&self) -> ScenarioModelSpec {
        ScenarioModelSpec {
            v_dist: self.v_dist.clone(),
            r_inv: self.r_inv,
            r_inv_exp_approx: Some(self.lambda_r),
            ttc_lambda_table: self.ttc_table.clone(),
            ttc_lambda_floor: self.ttc_floor,
            ttc_inv_bounds: self.ttc_bounds,
            bins: self.bins.clone(),
        }
    }

    pub fn v_dist(&self) -> &EmpiricalDist {
        &self.v_dist
    }
    pub fn r_inv(&self) -> &TruncatedPareto {
        &self.r_inv
    }
    /// Mean of the least-squares exponential approximation of `r_inv`.
    pub fn lambda_r(&self) -> f64 {
        self.lambda_r
    }
    pub fn bins(&self) -> &[VelocityBin] {
        &self.bins
    }
    pub fn ttc_inv_bounds(&self) -> (f64, f64) {
        self.ttc_bounds
    }

    pub fn bin(&self, name: &str) -> Result<&VelocityBin> {
        self.bins
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| Error::InvalidInput(format!("unknown velocity bin `{name}`")))
    }

    /// Mean of TTC^-1 at LCV speed `v`: linear interpolation between table
    /// nodes, linear extrapolation past the ends, never below the floor.
    pub fn lambda_ttc(&self, v: f64) -> f64 {
        let t = &self.ttc_table;
        if t.len() == 1 {
            return t[0].1.max(self.ttc_floor);
        }
        let i = t.partition_point(|&(c, _)| c <= v).clamp(1, t.len() - 1);
        let (v0, l0) = t[i - 1];
        let (v1, l1) = t[i];
        let l = l0 + (l1 - l0) * (v - v0) / (v1 - v0);
        l.max(self.ttc_floor)
    }

    /// Smallest TTC^-1 mean over a speed range; the binding constraint for
    /// a TTC tilt in that range.
    pub fn min_lambda_ttc(&self, lo: f64, hi: f64) -> f64 {
        self.ttc_table
            .iter()
            .map(|&(v, _)| v)
            .filter(|&v| v > lo && v < hi)
            .chain([lo, hi])
            .map(|v| self.lambda_ttc(v))
            .fold(f64::INFINITY, f64::min)
    }

    fn ttc_law(&self, v: f64) -> TruncatedExponential {
        TruncatedExponential::new(self.lambda_ttc(v), self.ttc_bounds.0, self.ttc_bounds.1)
            .expect("validated TTC law")
    }

    fn r_proposal(&self, vartheta_r: f64) -> Result<TruncatedExponential> {
        TruncatedExponential::new(self.lambda_r, self.r_inv.lo(), self.r_inv.hi())?.tilted(vartheta_r)
    }

    /// Pre-restrict the speed law to a range for repeated sampling.
    pub fn sampler(&self, range: (f64, f64)) -> Result<BinSampler<'_>> {
        Ok(BinSampler {
            model: self,
            v_law: self.v_dist.restrict(range.0, range.1)?,
            range,
        })
    }
}

fn validate_bins(bins: &[VelocityBin]) -> Result<()> {
    if bins.is_empty() {
        return Err(Error::config("scenario.bins", "at least one bin is required"));
    }
    for (i, b) in bins.iter().enumerate() {
        if !(b.lo < b.hi) {
            return Err(Error::config(format!("scenario.bins[{i}]"), "need lo < hi"));
        }
        if bins[..i].iter().any(|o| o.name == b.name) {
            return Err(Error::config(format!("scenario.bins[{i}].name"), "duplicate bin name"));
        }
        if i > 0 && bins[i - 1].hi != b.lo {
            return Err(Error::config(
                format!("scenario.bins[{i}].lo"),
                "bins must be sorted and contiguous without overlap",
            ));
        }
    }
    Ok(())
}

/// Tilting parameters of the exponential-change-of-measure proposal for one
/// velocity bin. `(0, 0)` is the identity of the family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalParams {
    pub vartheta_r: f64,
    pub vartheta_ttc: f64,
    pub bin: String,
}

impl ProposalParams {
    pub fn identity(bin: &str) -> Self {
        ProposalParams {
            vartheta_r: 0.0,
            vartheta_ttc: 0.0,
            bin: bin.to_string(),
        }
    }

    /// Both tilts must leave a positive mean everywhere in the bin.
    pub fn validate(&self, model: &ScenarioModel) -> Result<()> {
        let bin = model.bin(&self.bin)?;
        if !(self.vartheta_r < model.lambda_r()) || !self.vartheta_r.is_finite() {
            return Err(Error::InvalidTilt {
                lambda: model.lambda_r(),
                vartheta: self.vartheta_r,
            });
        }
        let lmin = model.min_lambda_ttc(bin.lo, bin.hi);
        if !(self.vartheta_ttc < lmin) || !self.vartheta_ttc.is_finite() {
            return Err(Error::InvalidTilt {
                lambda: lmin,
                vartheta: self.vartheta_ttc,
            });
        }
        Ok(())
    }
}

/// One cut-in instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSample {
    pub v_l: f64,
    pub r_inv: f64,
    pub ttc_inv: f64,
    pub r0: f64,
    pub rdot: f64,
    pub v0: f64,
    pub likelihood: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub rdot: f64,
    pub v0: f64,
    pub r0: f64,
}

/// Range rate, AV speed and range from the sampled variables.
pub fn derive_kinematics(v_l: f64, r_inv: f64, ttc_inv: f64) -> Result<Kinematics> {
    if !(r_inv > 0.0) {
        return Err(Error::InvalidInput(format!("inverse range must be positive, got {r_inv}")));
    }
    if !(ttc_inv >= 0.0) {
        return Err(Error::InvalidInput(format!("inverse TTC must be >= 0, got {ttc_inv}")));
    }
    let rdot = -ttc_inv / r_inv;
    Ok(Kinematics {
        rdot,
        v0: v_l - rdot,
        r0: 1.0 / r_inv,
    })
}

/// Likelihood ratio of the original law to the tilted proposal at `s`.
/// LCV speed has the same law under both and contributes no factor.
pub fn likelihood_ratio(s: &ScenarioSample, model: &ScenarioModel, proposal: &ProposalParams) -> Result<f64> {
    let ttc = model.ttc_law(s.v_l);
    let ln_f = model.r_inv.ln_pdf(s.r_inv) + ttc.ln_pdf(s.ttc_inv);
    let ln_g = model.r_proposal(proposal.vartheta_r)?.ln_pdf(s.r_inv)
        + ttc.tilted(proposal.vartheta_ttc)?.ln_pdf(s.ttc_inv);
    assert!(ln_g.is_finite(), "proposal density vanished at a sampled point");
    Ok((ln_f - ln_g).exp())
}

/// Scenario generator for one speed range.
#[derive(Debug, Clone)]
pub struct BinSampler<'a> {
    model: &'a ScenarioModel,
    v_law: EmpiricalDist,
    range: (f64, f64),
}

impl BinSampler<'_> {
    pub fn range(&self) -> (f64, f64) {
        self.range
    }

    pub fn model(&self) -> &ScenarioModel {
        self.model
    }

    /// Draw one scenario. Without a proposal the inverse range comes from
    /// the Pareto law and the weight is exactly 1.
    pub fn sample(&self, proposal: Option<&ProposalParams>, stream: &mut UniformStream) -> Result<ScenarioSample> {
        let (u1, u2, u3, u4) = (stream.open01(), stream.open01(), stream.open01(), stream.open01());
        let v_l = self.v_law.sample(u1, u2);
        let ttc = self.model.ttc_law(v_l);
        let (r_inv, ttc_inv) = match proposal {
            None => (self.model.r_inv.sample(u3), ttc.sample(u4)),
            Some(p) => (
                self.model.r_proposal(p.vartheta_r)?.sample(u3),
                ttc.tilted(p.vartheta_ttc)?.sample(u4),
            ),
        };
        let k = derive_kinematics(v_l, r_inv, ttc_inv)?;
        let mut s = ScenarioSample {
            v_l,
            r_inv,
            ttc_inv,
            r0: k.r0,
            rdot: k.rdot,
            v0: k.v0,
            likelihood: 1.0,
        };
        if let Some(p) = proposal {
            s.likelihood = likelihood_ratio(&s, self.model, p)?;
        }
        Ok(s)
    }
}

/// Draw one scenario from the model restricted to `range`.
pub fn sample_scenario(
    model: &ScenarioModel,
    proposal: Option<&ProposalParams>,
    range: (f64, f64),
    stream: &mut UniformStream,
) -> Result<ScenarioSample> {
    model.sampler(range)?.sample(proposal, stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    pub(crate) fn small_model() -> ScenarioModel {
        ScenarioModel::from_spec(&ScenarioModelSpec {
            v_dist: EmpiricalDist::new(vec![2.0, 10.0, 20.0, 40.0], vec![0.4, 0.3, 0.3]).unwrap(),
            r_inv: TruncatedPareto::new(0.2, 0.012, 1.0 / 75.0, 1.0 / 75.0, 10.0).unwrap(),
            r_inv_exp_approx: None,
            ttc_lambda_table: vec![(10.0, 0.2), (20.0, 0.1), (30.0, 0.06)],
            ttc_lambda_floor: 0.01,
            ttc_inv_bounds: (0.0, f64::INFINITY),
            bins: default_bins(),
        })
        .unwrap()
    }

    #[test]
    fn lambda_ttc_interpolates_and_extrapolates() {
        let m = small_model();
        assert_eq!(m.lambda_ttc(20.0), 0.1);
        assert!((m.lambda_ttc(15.0) - 0.15).abs() < 1e-15);
        // beyond 30: slope -0.004 per m/s → 0.06 - 0.004 * 5 = 0.04
        assert!((m.lambda_ttc(35.0) - 0.04).abs() < 1e-12);
        // far beyond: floor
        assert_eq!(m.lambda_ttc(60.0), 0.01);
        // below the first node: slope -0.01 → 0.25 at 5 m/s
        assert!((m.lambda_ttc(5.0) - 0.25).abs() < 1e-12);
        assert!((m.min_lambda_ttc(15.0, 25.0) - 0.08).abs() < 1e-12);
    }

    #[test]
    fn kinematics_by_hand() {
        let k = derive_kinematics(10.0, 0.05, 0.2).unwrap();
        assert!((k.rdot + 4.0).abs() < 1e-12);
        assert!((k.v0 - 14.0).abs() < 1e-12);
        assert!((k.r0 - 20.0).abs() < 1e-12);
        let z = derive_kinematics(12.0, 0.1, 0.0).unwrap();
        assert_eq!(z.rdot, 0.0);
        assert_eq!(z.v0, 12.0);
        assert!(derive_kinematics(12.0, 0.0, 0.1).is_err());
        assert!(derive_kinematics(12.0, -0.1, 0.1).is_err());
    }

    #[test]
    fn no_proposal_means_unit_weight_and_determinism() {
        let m = small_model();
        let key = StreamKey::new(3, "scenario");
        let a = sample_scenario(&m, None, (5.0, 15.0), &mut key.stream(0)).unwrap();
        let b = sample_scenario(&m, None, (5.0, 15.0), &mut key.stream(0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.likelihood, 1.0);
        assert!(a.v_l >= 5.0 && a.v_l <= 15.0);
        assert_eq!(a.rdot * a.r_inv, -a.ttc_inv);
    }

    #[test]
    fn identity_proposal_weight_is_pareto_over_exponential() {
        let m = small_model();
        let p = ProposalParams::identity("low");
        let key = StreamKey::new(4, "scenario");
        for i in 0..50 {
            let s = sample_scenario(&m, Some(&p), (5.0, 15.0), &mut key.stream(i)).unwrap();
            let approx = TruncatedExponential::new(m.lambda_r(), 1.0 / 75.0, 10.0).unwrap();
            let want = m.r_inv().pdf(s.r_inv) / approx.pdf(s.r_inv);
            assert!(((s.likelihood - want) / want).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_laws_give_unit_factor() {
        let m = small_model();
        let ttc = m.ttc_law(12.0);
        let same = ttc.tilted(0.0).unwrap();
        for x in [0.0, 0.1, 0.7, 3.0] {
            assert_eq!((ttc.ln_pdf(x) - same.ln_pdf(x)).exp(), 1.0);
        }
    }

    #[test]
    fn proposal_validation() {
        let m = small_model();
        let mut p = ProposalParams::identity("medium");
        p.vartheta_ttc = 0.079;
        assert!(p.validate(&m).is_ok());
        p.vartheta_ttc = 0.081;
        assert!(p.validate(&m).is_err());
        let mut q = ProposalParams::identity("low");
        q.vartheta_r = m.lambda_r();
        assert!(q.validate(&m).is_err());
        assert!(ProposalParams::identity("nope").validate(&m).is_err());
    }

    #[test]
    fn weights_average_to_one() {
        let m = small_model();
        let p = ProposalParams {
            vartheta_r: -0.05,
            vartheta_ttc: -0.1,
            bin: "low".into(),
        };
        let sampler = m.sampler((5.0, 15.0)).unwrap();
        let key = StreamKey::new(21, "unit-mean");
        let n = 100_000;
        let w: Vec<f64> = (0..n)
            .map(|i| sampler.sample(Some(&p), &mut key.stream(i)).unwrap().likelihood)
            .collect();
        let mean = w.iter().sum::<f64>() / n as f64;
        let var = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn bins_must_partition() {
        let mut spec = small_model().to_spec();
        spec.bins = vec![VelocityBin::new("a", 5.0, 15.0), VelocityBin::new("b", 14.0, 25.0)];
        assert!(ScenarioModel::from_spec(&spec).is_err());
    }

    #[test]
    fn exp_approx_is_cross_checked() {
        let m = small_model();
        let mut spec = m.to_spec();
        assert!(ScenarioModel::from_spec(&spec).is_ok());
        spec.r_inv_exp_approx = Some(m.lambda_r() * 1.001);
        let err = ScenarioModel::from_spec(&spec).unwrap_err();
        assert!(err.to_string().contains("r_inv_exp_approx"));
    }
}
