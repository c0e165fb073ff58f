//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cross_entropy::CeSettings;
use crate::error::{Error, Result};
use crate::estimation::{ConfidenceSpec, InjuryModel, StoppingRule, DEFAULT_MILES_PER_LANE_CHANGE};
use crate::pipeline::{EstimationMode, EventKind};
use crate::plant::AvConfig;
use crate::scenario::{ProposalParams, ScenarioModel, ScenarioModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NCaps {
    pub cmc: u64,
    pub is: u64,
}

impl Default for NCaps {
    fn default() -> Self {
        NCaps { cmc: 200_000, is: 20_000 }
    }
}

impl NCaps {
    pub fn for_mode(&self, mode: EstimationMode) -> u64 {
        match mode {
            EstimationMode::Cmc => self.cmc,
            EstimationMode::Is => self.is,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CeConfig {
    pub conflict: CeSettings,
    pub crash: CeSettings,
}

impl Default for CeConfig {
    fn default() -> Self {
        CeConfig {
            conflict: CeSettings::default(),
            crash: CeSettings {
                n_per_iter: 500,
                ..CeSettings::default()
            },
        }
    }
}

impl CeConfig {
    pub fn for_event(&self, event: EventKind) -> &CeSettings {
        match event.search_target() {
            EventKind::Conflict => &self.conflict,
            _ => &self.crash,
        }
    }
}

/// Source of the naturalistic test count behind `D_nature`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NatureSource {
    /// Sample size crude Monte Carlo would need at the estimated rate.
    #[default]
    Predictive,
    /// Length of the crude Monte Carlo run of the same event and bin.
    Cmc,
}

/// Tilt supplied instead of running the CE search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarmStart {
    pub event: EventKind,
    pub bin: String,
    pub vartheta_r: f64,
    pub vartheta_ttc: f64,
}

impl WarmStart {
    pub fn params(&self) -> ProposalParams {
        ProposalParams {
            vartheta_r: self.vartheta_r,
            vartheta_ttc: self.vartheta_ttc,
            bin: self.bin.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scenario: ScenarioModelSpec,
    #[serde(default)]
    pub plant: AvConfig,
    #[serde(default)]
    pub confidence: ConfidenceSpec,
    #[serde(default)]
    pub injury: InjuryModel,
    /// Naturalistic miles per lane change.
    #[serde(default = "default_r_lc")]
    pub r_lc: f64,
    #[serde(default = "default_events")]
    pub events: Vec<EventKind>,
    #[serde(default = "default_modes")]
    pub modes: Vec<EstimationMode>,
    /// Bin names, or `"all"`.
    #[serde(default = "default_bins")]
    pub bins: Vec<String>,
    #[serde(default)]
    pub n_caps: NCaps,
    #[serde(default)]
    pub stopping: StoppingRule,
    #[serde(default)]
    pub ce: CeConfig,
    #[serde(default)]
    pub nature_source: NatureSource,
    #[serde(default)]
    pub warm_start: Vec<WarmStart>,
    /// Where `run` writes its report. Not part of the config hash.
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
}

fn default_r_lc() -> f64 {
    DEFAULT_MILES_PER_LANE_CHANGE
}
fn default_events() -> Vec<EventKind> {
    vec![EventKind::Conflict]
}
fn default_modes() -> Vec<EstimationMode> {
    vec![EstimationMode::Is]
}
fn default_bins() -> Vec<String> {
    vec!["low".to_string()]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Model-only file as written by `fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub scenario: ScenarioModelSpec,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse {
            path: PathBuf::from("<config>"),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn model(&self) -> Result<ScenarioModel> {
        ScenarioModel::from_spec(&self.scenario)
    }

    /// Bins named in the config, with `"all"` expanded in model order.
    pub fn resolved_bins(&self, model: &ScenarioModel) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for (i, b) in self.bins.iter().enumerate() {
            if b == "all" {
                out.extend(model.bins().iter().map(|b| b.name.clone()));
            } else {
                model
                    .bin(b)
                    .map_err(|_| Error::config(format!("bins[{i}]"), format!("unknown bin `{b}`")))?;
                out.push(b.clone());
            }
        }
        let mut seen = Vec::new();
        out.retain(|b| {
            let fresh = !seen.contains(b);
            seen.push(b.clone());
            fresh
        });
        Ok(out)
    }

    pub fn warm_start_for(&self, event: EventKind, bin: &str) -> Option<ProposalParams> {
        let target = event.search_target();
        self.warm_start
            .iter()
            .find(|w| w.event.search_target() == target && w.bin == bin)
            .map(WarmStart::params)
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.model()?;
        self.plant.validate()?;
        self.confidence.validate()?;
        for (name, s) in [("ce.conflict", &self.ce.conflict), ("ce.crash", &self.ce.crash)] {
            s.validate().map_err(|e| match e {
                Error::Config { key, reason } => Error::config(format!("{name}.{}", key.trim_start_matches("ce.")), reason),
                e => e,
            })?;
        }
        if !(self.r_lc > 0.0 && self.r_lc.is_finite()) {
            return Err(Error::config("r_lc", "must be positive"));
        }
        if self.events.is_empty() {
            return Err(Error::config("events", "at least one event is required"));
        }
        if self.modes.is_empty() {
            return Err(Error::config("modes", "at least one mode is required"));
        }
        if self.n_caps.cmc == 0 || self.n_caps.is == 0 {
            return Err(Error::config("n_caps", "caps must be positive"));
        }
        if self.stopping.batch == 0 || self.stopping.wave == 0 {
            return Err(Error::config("stopping", "batch and wave must be positive"));
        }
        if self.nature_source == NatureSource::Cmc && !self.modes.contains(&EstimationMode::Cmc) {
            return Err(Error::config("nature_source", "`cmc` needs the cmc mode in `modes`"));
        }
        self.resolved_bins(&model)?;
        for (i, w) in self.warm_start.iter().enumerate() {
            let key = format!("warm_start[{i}]");
            let bin = model
                .bin(&w.bin)
                .map_err(|_| Error::config(format!("{key}.bin"), format!("unknown bin `{}`", w.bin)))?;
            if !(w.vartheta_r < model.lambda_r()) || !w.vartheta_r.is_finite() {
                return Err(Error::config(
                    format!("{key}.vartheta_r"),
                    format!("must be below lambda_R = {}", model.lambda_r()),
                ));
            }
            let lmin = model.min_lambda_ttc(bin.lo, bin.hi);
            if !(w.vartheta_ttc < lmin) || !w.vartheta_ttc.is_finite() {
                return Err(Error::config(
                    format!("{key}.vartheta_ttc"),
                    format!("must be below the bin's smallest lambda_TTC = {lmin}"),
                ));
            }
        }
        Ok(())
    }

    /// Canonical JSON of everything that affects results.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
