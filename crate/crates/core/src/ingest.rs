//! Turn recorded lane-change events into a scenario model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distributions::{fit_exponential_mle, fit_pareto, EmpiricalDist, FitParams, FitReport, TruncatedPareto};
use crate::error::{Error, Result};
use crate::scenario::{default_bins, ScenarioModel, ScenarioModelSpec};

/// One event at lane-crossing time: AV speed, LCV speed, range, range rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRow {
    pub v: f64,
    pub v_l: f64,
    pub r_l: f64,
    pub r_l_dot: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Open interval for both speeds.
    pub speed_bounds: (f64, f64),
    /// Open interval for the range.
    pub range_bounds: (f64, f64),
    pub speed_edges: Vec<f64>,
    /// Speed intervals over which the TTC^-1 mean is estimated.
    pub ttc_edges: Vec<f64>,
    /// Intervals with fewer events are left out of the TTC table.
    pub min_events_per_interval: usize,
    pub pareto_theta: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            speed_bounds: (2.0, 40.0),
            range_bounds: (0.1, 75.0),
            speed_edges: (0..=19).map(|i| 2.0 + 2.0 * i as f64).collect(),
            ttc_edges: vec![2.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0],
            min_events_per_interval: 30,
            pareto_theta: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub total: usize,
    pub dropped_out_of_bounds: usize,
    pub dropped_nonnegative_range_rate: usize,
    pub kept: usize,
    pub r_inv_pareto: FitReport,
    pub r_inv_exponential: FitReport,
    pub lambda_r: f64,
    pub ttc_table: Vec<(f64, f64)>,
    pub ttc_counts: Vec<usize>,
}

pub fn read_events(path: &Path) -> Result<Vec<EventRow>> {
    let err = |e: csv::Error| Error::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(err)?;
    r.deserialize().map(|row| row.map_err(err)).collect()
}

fn inside(x: f64, (lo, hi): (f64, f64)) -> bool {
    x > lo && x < hi
}

/// Apply the event filters and fit the three scenario variables.
pub fn fit_model(rows: &[EventRow], opts: &FitOptions) -> Result<(ScenarioModelSpec, FitSummary)> {
    let mut dropped_bounds = 0;
    let mut dropped_rate = 0;
    let mut kept = Vec::new();
    for r in rows {
        if !(inside(r.v, opts.speed_bounds) && inside(r.v_l, opts.speed_bounds) && inside(r.r_l, opts.range_bounds)) {
            dropped_bounds += 1;
        } else if !(r.r_l_dot < 0.0) {
            dropped_rate += 1;
        } else {
            kept.push(*r);
        }
    }
    if kept.len() < 10 {
        return Err(Error::InvalidInput(format!(
            "only {} events survive the filters; at least 10 are needed",
            kept.len()
        )));
    }

    let r_inv: Vec<f64> = kept.iter().map(|r| 1.0 / r.r_l).collect();
    let pareto = fit_pareto(&r_inv, opts.pareto_theta)?;
    let exponential = fit_exponential_mle(&r_inv)?;
    let FitParams::Pareto { k, sigma, theta } = pareto.params else {
        unreachable!("pareto fit returns pareto parameters")
    };
    let lo = theta.max(1.0 / opts.range_bounds.1);
    let r_law = TruncatedPareto::new(k, sigma, theta, lo, 1.0 / opts.range_bounds.0)?;

    let edges = &opts.speed_edges;
    let mut counts = vec![0u64; edges.len().saturating_sub(1)];
    for r in &kept {
        let i = edges.partition_point(|&e| e <= r.v_l);
        if i >= 1 && i < edges.len() {
            counts[i - 1] += 1;
        }
    }
    let v_dist = EmpiricalDist::from_counts(edges.clone(), &counts)?;

    let mut ttc_table = Vec::new();
    let mut ttc_counts = Vec::new();
    for w in opts.ttc_edges.windows(2) {
        let xs: Vec<f64> = kept
            .iter()
            .filter(|r| r.v_l >= w[0] && r.v_l < w[1])
            .map(|r| -r.r_l_dot / r.r_l)
            .collect();
        if xs.len() >= opts.min_events_per_interval {
            ttc_table.push((0.5 * (w[0] + w[1]), xs.iter().sum::<f64>() / xs.len() as f64));
            ttc_counts.push(xs.len());
        }
    }
    if ttc_table.is_empty() {
        return Err(Error::InvalidInput(
            "no speed interval has enough events to estimate the TTC mean".into(),
        ));
    }

    let (vlo, vhi) = v_dist.support();
    let bins = default_bins()
        .into_iter()
        .filter(|b| b.hi > vlo && b.lo < vhi)
        .collect();
    let mut spec = ScenarioModelSpec {
        v_dist,
        r_inv: r_law,
        r_inv_exp_approx: None,
        ttc_lambda_table: ttc_table.clone(),
        ttc_lambda_floor: 0.01,
        ttc_inv_bounds: (0.0, f64::INFINITY),
        bins,
    };
    let model = ScenarioModel::from_spec(&spec)?;
    spec.r_inv_exp_approx = Some(model.lambda_r());

    Ok((
        spec,
        FitSummary {
            total: rows.len(),
            dropped_out_of_bounds: dropped_bounds,
            dropped_nonnegative_range_rate: dropped_rate,
            kept: kept.len(),
            r_inv_pareto: pareto,
            r_inv_exponential: exponential,
            lambda_r: model.lambda_r(),
            ttc_table,
            ttc_counts,
        },
    ))
}
