//! One accelerated test: draw a cut-in, drive the AV through it, classify.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::estimation::{InjuryModel, Observation};
use crate::plant::{classify_events, simulate, simulate_summary, AvConfig, EventRecord, SimTrace};
use crate::rng::UniformStream;
use crate::scenario::{BinSampler, ProposalParams, ScenarioSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Conflict,
    Crash,
    Injury,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Conflict => "conflict",
            EventKind::Crash => "crash",
            EventKind::Injury => "injury",
        }
    }

    /// Event whose proposal is searched for; injury reuses the crash tilt.
    pub fn search_target(self) -> EventKind {
        match self {
            EventKind::Injury => EventKind::Crash,
            e => e,
        }
    }
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimationMode {
    Cmc,
    Is,
}

impl EstimationMode {
    pub fn name(self) -> &'static str {
        match self {
            EstimationMode::Cmc => "cmc",
            EstimationMode::Is => "is",
        }
    }
}

impl std::fmt::Display for EstimationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub sample: ScenarioSample,
    pub events: EventRecord,
    pub min_range: f64,
    pub max_ttc_inv: f64,
    pub t_end: f64,
    pub distance_m: f64,
}

impl TestOutcome {
    fn from_trace(sample: ScenarioSample, trace: &SimTrace, plant: &AvConfig) -> Self {
        TestOutcome {
            sample,
            events: classify_events(trace, plant),
            min_range: trace.min_range,
            max_ttc_inv: trace.max_ttc_inv,
            t_end: trace.t_end,
            distance_m: trace.distance,
        }
    }

    /// Indicator of the event, or the injury probability.
    pub fn value(&self, event: EventKind, injury: &InjuryModel) -> f64 {
        match event {
            EventKind::Conflict => f64::from(u8::from(self.events.conflict)),
            EventKind::Crash => f64::from(u8::from(self.events.crash)),
            EventKind::Injury => {
                if self.events.crash {
                    injury.probability(self.events.delta_v)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn observation(&self, event: EventKind, injury: &InjuryModel) -> Observation {
        Observation {
            value: self.value(event, injury),
            likelihood: self.sample.likelihood,
            distance_m: self.distance_m,
        }
    }
}

/// Sample a scenario (under `proposal` if given) and simulate it.
pub fn run_test(
    sampler: &BinSampler<'_>,
    proposal: Option<&ProposalParams>,
    plant: &AvConfig,
    stream: &mut UniformStream,
) -> Result<TestOutcome> {
    let sample = sampler.sample(proposal, stream)?;
    let trace = simulate_summary(&sample, plant)?;
    Ok(TestOutcome::from_trace(sample, &trace, plant))
}

/// As [`run_test`], also returning the full state history.
pub fn run_test_traced(
    sampler: &BinSampler<'_>,
    proposal: Option<&ProposalParams>,
    plant: &AvConfig,
    stream: &mut UniformStream,
) -> Result<(TestOutcome, SimTrace)> {
    let sample = sampler.sample(proposal, stream)?;
    let trace = simulate(&sample, plant)?;
    Ok((TestOutcome::from_trace(sample, &trace, plant), trace))
}
