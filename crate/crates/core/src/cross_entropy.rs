//! Cross-entropy search for the exponential tilts of one velocity bin.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{run_test, EventKind, TestOutcome};
use crate::plant::AvConfig;
use crate::rng::StreamKey;
use crate::scenario::{ProposalParams, ScenarioModel};

/// Weighted observation for one CE update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CeSample {
    pub r_inv: f64,
    pub ttc_inv: f64,
    /// TTC^-1 mean at this sample's LCV speed.
    pub lambda_ttc: f64,
    /// `L * I`.
    pub weight: f64,
}

/// Weighted mean of `lambda - x`: the closed-form CE optimum for an
/// exponential family tilted by `vartheta`.
pub fn weighted_tilt(points: impl IntoIterator<Item = (f64, f64, f64)>) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (x, lambda, w) in points {
        num += w * (lambda - x);
        den += w;
    }
    (den > 0.0).then(|| num / den)
}

/// Largest admissible tilt for base mean `lambda`.
pub fn tilt_ceiling(lambda: f64, margin: f64) -> f64 {
    lambda * (1.0 - margin)
}

/// One CE step. Returns `(vartheta_r, vartheta_ttc)` clamped below the
/// means by `margin` (a fraction of each mean); `lambda_ttc_min` is the
/// smallest TTC^-1 mean over the bin.
pub fn ce_update(samples: &[CeSample], lambda_r: f64, lambda_ttc_min: f64, margin: f64) -> Result<(f64, f64)> {
    let n = samples.len();
    let vr = weighted_tilt(samples.iter().map(|s| (s.r_inv, lambda_r, s.weight)))
        .ok_or(Error::NoEventObserved { n })?;
    let vt = weighted_tilt(samples.iter().map(|s| (s.ttc_inv, s.lambda_ttc, s.weight)))
        .ok_or(Error::NoEventObserved { n })?;
    Ok((
        vr.min(tilt_ceiling(lambda_r, margin)),
        vt.min(tilt_ceiling(lambda_ttc_min, margin)),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CeSettings {
    pub iterations: u32,
    pub n_per_iter: u64,
    /// Tilts stay at least this fraction of the base mean below it.
    pub margin: f64,
    /// Elite fraction for intermediate severity levels while the target
    /// event is rarer than this share of an iteration. `None` uses the
    /// target event indicator only.
    pub elite_fraction: Option<f64>,
    /// Consecutive iterations without a single event before giving up
    /// (only reachable without an elite fraction).
    pub max_empty: u32,
}

impl Default for CeSettings {
    fn default() -> Self {
        CeSettings {
            iterations: 10,
            n_per_iter: 100,
            margin: 0.01,
            elite_fraction: Some(0.1),
            max_empty: 3,
        }
    }
}

impl CeSettings {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.n_per_iter == 0 {
            return Err(Error::config("ce", "iterations and n_per_iter must be positive"));
        }
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(Error::config("ce.margin", "must lie in (0, 1)"));
        }
        if let Some(r) = self.elite_fraction {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::config("ce.elite_fraction", "must lie in (0, 1)"));
            }
        }
        if self.max_empty == 0 {
            return Err(Error::config("ce.max_empty", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeHistoryRow {
    pub iteration: u32,
    pub vartheta_r: f64,
    pub vartheta_ttc: f64,
    /// Target events among this iteration's samples.
    pub hits: u64,
    pub n: u64,
    /// Severity level that defined the elite set (see [`severity`]);
    /// `None` when the event itself did.
    pub level: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CeState {
    pub iteration: u32,
    pub params: ProposalParams,
    pub n_per_iter: u64,
    pub event_hits: u64,
    pub history: Vec<CeHistoryRow>,
}

/// Severity used to rank samples while the event itself is too rare:
/// closeness for conflicts, peak closing rate for crashes. Larger is more
/// severe; the event corresponds to the level returned by [`event_level`].
pub fn severity(o: &TestOutcome, event: EventKind) -> f64 {
    match event.search_target() {
        EventKind::Conflict => -o.min_range,
        _ => o.max_ttc_inv,
    }
}

fn event_level(event: EventKind, plant: &AvConfig) -> f64 {
    match event.search_target() {
        EventKind::Conflict => -plant.r_conflict,
        _ => f64::INFINITY,
    }
}

fn is_event(o: &TestOutcome, event: EventKind) -> bool {
    match event.search_target() {
        EventKind::Conflict => o.events.conflict,
        _ => o.events.crash,
    }
}

/// Iterative CE search from `start` (identity tilt when `None`).
///
/// Scenario `i` of iteration `k` uses stream `i` of `key.child("ce", k)`.
pub fn ce_search(
    model: &ScenarioModel,
    plant: &AvConfig,
    bin: &str,
    event: EventKind,
    settings: &CeSettings,
    start: Option<&ProposalParams>,
    key: &StreamKey,
) -> Result<CeState> {
    settings.validate()?;
    let b = model.bin(bin)?.clone();
    let sampler = model.sampler(b.range())?;
    let lambda_r = model.lambda_r();
    let lambda_ttc_min = model.min_lambda_ttc(b.lo, b.hi);
    let params = start.cloned().unwrap_or_else(|| ProposalParams::identity(bin));
    if params.bin != bin {
        return Err(Error::InvalidInput(format!(
            "start tilt is for bin `{}`, search is for `{bin}`",
            params.bin
        )));
    }
    params.validate(model)?;

    let target = event_level(event, plant);
    let mut state = CeState {
        iteration: 0,
        params: params.clone(),
        n_per_iter: settings.n_per_iter,
        event_hits: 0,
        history: Vec::with_capacity(settings.iterations as usize),
    };
    let mut empty_streak = 0;

    for it in 1..=settings.iterations {
        let iter_key = key.child("ce", u64::from(it));
        let outcomes: Vec<TestOutcome> = (0..settings.n_per_iter)
            .into_par_iter()
            .map(|i| run_test(&sampler, Some(&state.params), plant, &mut iter_key.stream(i)))
            .collect::<Result<_>>()?;
        let hits = outcomes.iter().filter(|o| is_event(o, event)).count() as u64;

        let level = match settings.elite_fraction {
            Some(rho) => {
                let need = ((rho * outcomes.len() as f64).ceil() as usize).max(1);
                if hits as usize >= need {
                    target
                } else {
                    let mut scores: Vec<f64> = outcomes.iter().map(|o| severity(o, event)).collect();
                    scores.sort_by(|a, b| b.total_cmp(a));
                    scores[need - 1].min(target)
                }
            }
            None => target,
        };
        let in_elite = |o: &TestOutcome| {
            if level == target {
                is_event(o, event)
            } else {
                severity(o, event) >= level
            }
        };
        let samples: Vec<CeSample> = outcomes
            .iter()
            .map(|o| CeSample {
                r_inv: o.sample.r_inv,
                ttc_inv: o.sample.ttc_inv,
                lambda_ttc: model.lambda_ttc(o.sample.v_l),
                weight: if in_elite(o) { o.sample.likelihood } else { 0.0 },
            })
            .collect();

        match ce_update(&samples, lambda_r, lambda_ttc_min, settings.margin) {
            Ok((vr, vt)) => {
                empty_streak = 0;
                state.params.vartheta_r = vr;
                state.params.vartheta_ttc = vt;
            }
            Err(Error::NoEventObserved { .. }) => {
                empty_streak += 1;
                if empty_streak >= settings.max_empty {
                    return Err(Error::CeStalled {
                        iteration: it,
                        streak: empty_streak,
                    });
                }
            }
            Err(e) => return Err(e),
        }
        state.params.validate(model)?;
        state.iteration = it;
        state.event_hits = hits;
        state.history.push(CeHistoryRow {
            iteration: it,
            vartheta_r: state.params.vartheta_r,
            vartheta_ttc: state.params.vartheta_ttc,
            hits,
            n: settings.n_per_iter,
            level: (level != target).then_some(level),
        });
    }
    Ok(state)
}
