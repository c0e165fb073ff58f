//! Search, estimate and account: the full accelerated-evaluation pipeline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, NatureSource};
use crate::cross_entropy::{ce_search, CeHistoryRow};
use crate::error::{Error, Result};
use crate::estimation::{accelerated_rate, required_n_cmc, run_estimator, ConvergenceRow, METERS_PER_MILE};
use crate::pipeline::{run_test, run_test_traced, EstimationMode, EventKind, TestOutcome};
use crate::plant::SimState;
use crate::rng::StreamKey;
use crate::scenario::{ProposalParams, ScenarioModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiltSource {
    CrossEntropy,
    WarmStart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    /// Event the tilt was searched for (injury runs use the crash tilt).
    pub event: EventKind,
    pub bin: String,
    pub source: TiltSource,
    pub params: ProposalParams,
    pub history: Vec<CeHistoryRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    NotConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub event: EventKind,
    pub mode: EstimationMode,
    pub bin: String,
    pub status: RunStatus,
    pub n: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub rel_half_width: Option<f64>,
    pub sample_variance: f64,
    pub vartheta_r: Option<f64>,
    pub vartheta_ttc: Option<f64>,
    pub d_acc_m: f64,
    pub d_acc_mi: f64,
    pub nature_source: NatureSource,
    pub n_nature: Option<u64>,
    pub d_nature_mi: Option<f64>,
    pub r_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub alpha: f64,
    pub beta: f64,
    pub r_lc: f64,
    pub lambda_r: f64,
}

/// Everything `write_report` puts on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub provenance: Provenance,
    pub settings: RunSettings,
    pub searches: Vec<SearchRecord>,
    pub estimates: Vec<EstimateRecord>,
    #[serde(skip)]
    pub convergence: Vec<Vec<ConvergenceRow>>,
    #[serde(skip)]
    pub scenario_logs: Vec<Vec<(u64, TestOutcome)>>,
    #[serde(skip)]
    pub traces: Vec<Vec<(u64, Vec<SimState>)>>,
}

impl RunReport {
    pub fn all_converged(&self) -> bool {
        self.estimates.iter().all(|e| e.status == RunStatus::Converged)
    }

    pub fn estimate(&self, event: EventKind, mode: EstimationMode, bin: &str) -> Option<&EstimateRecord> {
        self.estimates
            .iter()
            .find(|e| e.event == event && e.mode == mode && e.bin == bin)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Run the CE search for tilts not given as warm starts.
    pub search: bool,
    pub estimate: bool,
    /// Keep per-sample scenario logs.
    pub log_scenarios: bool,
    /// Full state histories kept for this many leading samples per run.
    pub trace_limit: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            search: true,
            estimate: true,
            log_scenarios: false,
            trace_limit: 0,
        }
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunReport> {
    run_with(cfg, &RunOptions::default())
}

fn estimate_key(seed: u64, event: EventKind, mode: EstimationMode, bin: &str) -> StreamKey {
    // crash and injury share draws so their estimates are comparable
    let label = format!("{}/{}/{}", event.search_target(), mode, bin);
    StreamKey::new(seed, "estimate").child(&label, 0)
}

fn search_key(seed: u64, event: EventKind, bin: &str) -> StreamKey {
    StreamKey::new(seed, "ce").child(&format!("{}/{}", event.search_target(), bin), 0)
}

pub fn run_with(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    let model = cfg.model()?;
    let bins = cfg.resolved_bins(&model)?;

    let mut tilts: BTreeMap<(EventKind, String), ProposalParams> = BTreeMap::new();
    let mut searches = Vec::new();
    let wants_tilt = !opts.estimate || cfg.modes.contains(&EstimationMode::Is);
    if wants_tilt {
        for &event in &cfg.events {
            let target = event.search_target();
            for bin in &bins {
                if tilts.contains_key(&(target, bin.clone())) {
                    continue;
                }
                let record = match cfg.warm_start_for(target, bin) {
                    Some(params) => {
                        params.validate(&model)?;
                        SearchRecord {
                            event: target,
                            bin: bin.clone(),
                            source: TiltSource::WarmStart,
                            params,
                            history: Vec::new(),
                        }
                    }
                    None if opts.search => {
                        let state = ce_search(
                            &model,
                            &cfg.plant,
                            bin,
                            target,
                            cfg.ce.for_event(target),
                            None,
                            &search_key(cfg.seed, target, bin),
                        )?;
                        SearchRecord {
                            event: target,
                            bin: bin.clone(),
                            source: TiltSource::CrossEntropy,
                            params: state.params,
                            history: state.history,
                        }
                    }
                    None => {
                        return Err(Error::InvalidInput(format!(
                            "no tilt for {target} in bin `{bin}`: add a warm_start entry or run the search"
                        )))
                    }
                };
                tilts.insert((target, bin.clone()), record.params.clone());
                searches.push(record);
            }
        }
    }

    let mut report = RunReport {
        provenance: Provenance {
            config_hash: cfg.hash(),
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
        settings: RunSettings {
            alpha: cfg.confidence.alpha,
            beta: cfg.confidence.beta,
            r_lc: cfg.r_lc,
            lambda_r: model.lambda_r(),
        },
        searches,
        estimates: Vec::new(),
        convergence: Vec::new(),
        scenario_logs: Vec::new(),
        traces: Vec::new(),
    };
    if !opts.estimate {
        return Ok(report);
    }

    for &event in &cfg.events {
        for &mode in &cfg.modes {
            for bin in &bins {
                let proposal = match mode {
                    EstimationMode::Cmc => None,
                    EstimationMode::Is => Some(&tilts[&(event.search_target(), bin.clone())]),
                };
                estimate_one(cfg, &model, opts, event, mode, bin, proposal, &mut report)?;
            }
        }
    }
    fill_accounting(cfg, &mut report)?;
    Ok(report)
}

#[allow(clippy::too_many_arguments)]
fn estimate_one(
    cfg: &ExperimentConfig,
    model: &ScenarioModel,
    opts: &RunOptions,
    event: EventKind,
    mode: EstimationMode,
    bin: &str,
    proposal: Option<&ProposalParams>,
    report: &mut RunReport,
) -> Result<()> {
    let sampler = model.sampler(model.bin(bin)?.range())?;
    let key = estimate_key(cfg.seed, event, mode, bin);
    let keep = opts.log_scenarios;
    let run = run_estimator(
        |i| {
            let outcome = run_test(&sampler, proposal, &cfg.plant, &mut key.stream(i))?;
            Ok((outcome.observation(event, &cfg.injury), keep.then_some(outcome)))
        },
        &cfg.confidence,
        &cfg.stopping,
        cfg.n_caps.for_mode(mode),
    )?;

    let mut traces = Vec::new();
    for i in 0..opts.trace_limit.min(run.acc.n) {
        let (_, trace) = run_test_traced(&sampler, proposal, &cfg.plant, &mut key.stream(i))?;
        traces.push((i, trace.states));
    }

    let acc = &run.acc;
    let (ci_low, ci_high) = acc.confidence_interval(&cfg.confidence).unwrap_or((0.0, 0.0));
    let d_acc_m = acc.distance_m();
    report.estimates.push(EstimateRecord {
        event,
        mode,
        bin: bin.to_string(),
        status: if run.converged {
            RunStatus::Converged
        } else {
            RunStatus::NotConverged
        },
        n: acc.n,
        estimate: acc.mean().unwrap_or(0.0),
        ci_low,
        ci_high,
        rel_half_width: acc.relative_half_width(&cfg.confidence),
        sample_variance: acc.sample_variance().unwrap_or(0.0),
        vartheta_r: proposal.map(|p| p.vartheta_r),
        vartheta_ttc: proposal.map(|p| p.vartheta_ttc),
        d_acc_m,
        d_acc_mi: d_acc_m / METERS_PER_MILE,
        nature_source: cfg.nature_source,
        n_nature: None,
        d_nature_mi: None,
        r_acc: None,
    });
    report.convergence.push(run.rows);
    report.scenario_logs.push(
        run.records
            .into_iter()
            .enumerate()
            .filter_map(|(i, r)| r.map(|o| (i as u64, o)))
            .collect(),
    );
    report.traces.push(traces);
    Ok(())
}

fn fill_accounting(cfg: &ExperimentConfig, report: &mut RunReport) -> Result<()> {
    let cmc_n: BTreeMap<(EventKind, String), u64> = report
        .estimates
        .iter()
        .filter(|e| e.mode == EstimationMode::Cmc)
        .map(|e| ((e.event, e.bin.clone()), e.n))
        .collect();
    for e in &mut report.estimates {
        let n_nature = match cfg.nature_source {
            NatureSource::Cmc => cmc_n.get(&(e.event, e.bin.clone())).copied(),
            NatureSource::Predictive if e.estimate > 0.0 && e.estimate < 1.0 => {
                Some(required_n_cmc(e.estimate, &cfg.confidence)?)
            }
            NatureSource::Predictive => None,
        };
        e.n_nature = n_nature;
        if let Some(n) = n_nature {
            if e.d_acc_m > 0.0 {
                let r = accelerated_rate(n, cfg.r_lc, e.d_acc_m)?;
                e.d_nature_mi = Some(r.d_nature_mi);
                e.r_acc = Some(r.r_acc);
            } else {
                e.d_nature_mi = Some(cfg.r_lc * n as f64);
            }
        }
    }
    Ok(())
}
