use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Histogram law: probability `bin_mass[i]` spread uniformly on
/// `[bin_edges[i], bin_edges[i + 1])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EmpiricalFields", into = "EmpiricalFields")]
pub struct EmpiricalDist {
    bin_edges: Vec<f64>,
    bin_mass: Vec<f64>,
    cumulative: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmpiricalFields {
    bin_edges: Vec<f64>,
    bin_mass: Vec<f64>,
}

impl TryFrom<EmpiricalFields> for EmpiricalDist {
    type Error = Error;
    fn try_from(f: EmpiricalFields) -> Result<Self> {
        EmpiricalDist::new(f.bin_edges, f.bin_mass)
    }
}

impl From<EmpiricalDist> for EmpiricalFields {
    fn from(d: EmpiricalDist) -> Self {
        EmpiricalFields {
            bin_edges: d.bin_edges,
            bin_mass: d.bin_mass,
        }
    }
}

impl EmpiricalDist {
    pub fn new(bin_edges: Vec<f64>, bin_mass: Vec<f64>) -> Result<Self> {
        if bin_mass.is_empty() || bin_edges.len() != bin_mass.len() + 1 {
            return Err(Error::param(
                "bin_edges",
                format!(
                    "need one more edge than masses, got {} edges and {} masses",
                    bin_edges.len(),
                    bin_mass.len()
                ),
            ));
        }
        if bin_edges.iter().any(|e| !e.is_finite()) || bin_edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("bin_edges", "edges must be finite and strictly increasing"));
        }
        if bin_mass.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::param("bin_mass", "masses must be nonnegative"));
        }
        let total: f64 = bin_mass.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param("bin_mass", format!("masses sum to {total}, not 1")));
        }
        let cumulative = running_sum(&bin_mass);
        Ok(EmpiricalDist {
            bin_edges,
            bin_mass,
            cumulative,
        })
    }

    /// Build from raw counts, normalizing to unit mass.
    pub fn from_counts(bin_edges: Vec<f64>, counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::InvalidInput("histogram has no observations".into()));
        }
        let mass = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Self::new(bin_edges, mass)
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }
    pub fn bin_mass(&self) -> &[f64] {
        &self.bin_mass
    }
    pub fn support(&self) -> (f64, f64) {
        (self.bin_edges[0], self.bin_edges[self.bin_edges.len() - 1])
    }

    /// The law conditioned on `[lo, hi]`: bins are clipped to the range and
    /// keep the share of their mass that falls inside it.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<EmpiricalDist> {
        let mut edges = Vec::new();
        let mut mass = Vec::new();
        for (i, &m) in self.bin_mass.iter().enumerate() {
            let (a, b) = (self.bin_edges[i], self.bin_edges[i + 1]);
            let (ca, cb) = (a.max(lo), b.min(hi));
            if cb <= ca {
                continue;
            }
            let share = m * (cb - ca) / (b - a);
            match edges.last() {
                Some(&last) if last == ca => {}
                Some(_) => {
                    // gap between kept pieces: an empty bin keeps edges contiguous
                    edges.push(ca);
                    mass.push(0.0);
                }
                None => edges.push(ca),
            }
            edges.push(cb);
            mass.push(share);
        }
        let total: f64 = mass.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput(format!(
                "empirical distribution has zero mass in [{lo}, {hi}]"
            )));
        }
        for m in &mut mass {
            *m /= total;
        }
        let cumulative = running_sum(&mass);
        Ok(EmpiricalDist {
            bin_edges: edges,
            bin_mass: mass,
            cumulative,
        })
    }

    /// Pick a bin with `u1`, then a uniform point inside it with `u2`.
    pub fn sample(&self, u1: f64, u2: f64) -> f64 {
        let total = self.cumulative[self.cumulative.len() - 1];
        let target = u1 * total;
        let mut i = self.cumulative.partition_point(|&c| c <= target);
        i = i.min(self.bin_mass.len() - 1);
        // never land in an empty bin through rounding
        while self.bin_mass[i] == 0.0 && i > 0 {
            i -= 1;
        }
        let (a, b) = (self.bin_edges[i], self.bin_edges[i + 1]);
        a + u2 * (b - a)
    }

    /// Draw from the law restricted to `range`.
    pub fn sample_in(&self, range: (f64, f64), u1: f64, u2: f64) -> Result<f64> {
        Ok(self.restrict(range.0, range.1)?.sample(u1, u2))
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        let i = self.bin_edges.partition_point(|&e| e <= x) - 1;
        let before = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
        let (a, b) = (self.bin_edges[i], self.bin_edges[i + 1]);
        before + self.bin_mass[i] * (x - a) / (b - a)
    }
}

fn running_sum(mass: &[f64]) -> Vec<f64> {
    mass.iter()
        .scan(0.0, |acc, &m| {
            *acc += m;
            Some(*acc)
        })
        .collect()
}
