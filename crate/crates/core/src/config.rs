//! Scenario configuration: one TOML file with nested sections.
//!
//! Every section has defaults, so a config only needs to name what it
//! changes. Unknown keys are rejected, and [`validate_text`] reports every
//! violation it finds rather than stopping at the first.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::behavior::{BehaviorParams, BehaviorSchedule, RewardWeights, Visibility};
use crate::calibration::InfectiousPeriod;
use crate::cogibl::{MemoryParams, PolicyParams};
use crate::epidemic::DiseaseParams;
use crate::metrics::PeakOptions;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    BarabasiAlbert,
    UniformRandom,
    EdgeList,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub generator: Generator,
    pub n: Option<usize>,
    pub edges: Option<usize>,
    pub path: Option<PathBuf>,
    /// Downsample to this many nodes with cluster sampling and stub rewiring.
    pub sample_target: Option<usize>,
    pub rewire_max_attempts: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            generator: Generator::BarabasiAlbert,
            n: Some(2000),
            edges: Some(22_000),
            path: None,
            sample_target: None,
            rewire_max_attempts: 50,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// Infectious period drawn as the engine draws it.
    Geometric,
    /// Fixed length equal to the mean infectious period.
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub tol: f64,
    pub kernel: KernelKind,
    /// Monte-Carlo index cases for the `calibrate` command's cross-check.
    pub check_trials: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            tol: 0.01,
            kernel: KernelKind::Geometric,
            check_trials: 2000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub c: f64,
    /// Defaults to `1 − masking_effectiveness`.
    pub mf: Option<f64>,
    pub rr_as_written: bool,
}

impl Default for RewardConfig {
    fn default() -> Self {
        let w = RewardWeights::default();
        Self {
            w1: w.w1,
            w2: w.w2,
            w3: w.w3,
            c: w.c,
            mf: None,
            rr_as_written: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CognitionConfig {
    pub mu: f64,
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub capacity: Option<usize>,
    pub visibility: Visibility,
    /// Hold each experience until the next epoch's observation is known.
    pub deferred_learning: bool,
}

impl Default for CognitionConfig {
    fn default() -> Self {
        let m = MemoryParams::default();
        let p = PolicyParams::default();
        Self {
            mu: m.mu,
            tau: m.tau,
            alpha: p.alpha,
            beta: p.beta,
            gamma: p.gamma,
            capacity: None,
            visibility: Visibility::default(),
            deferred_learning: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub decision_period: u32,
    pub horizon_days: u32,
    pub replicates: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            decision_period: 7,
            horizon_days: 600,
            replicates: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub peak_min_separation: usize,
    pub peak_min_prominence: f64,
    pub equilibrium_window: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        let p = PeakOptions::default();
        Self {
            peak_min_separation: p.min_separation,
            peak_min_prominence: p.min_prominence,
            equilibrium_window: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub network: NetworkConfig,
    pub disease: DiseaseParams,
    pub calibration: CalibrationConfig,
    pub reward: RewardConfig,
    pub cognition: CognitionConfig,
    pub schedule: ScheduleConfig,
    pub analysis: AnalysisConfig,
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            seed: 1,
            network: NetworkConfig::default(),
            disease: DiseaseParams::default(),
            calibration: CalibrationConfig::default(),
            reward: RewardConfig::default(),
            cognition: CognitionConfig::default(),
            schedule: ScheduleConfig::default(),
            analysis: AnalysisConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn reward_weights(&self) -> RewardWeights {
        RewardWeights {
            w1: self.reward.w1,
            w2: self.reward.w2,
            w3: self.reward.w3,
            c: self.reward.c,
            mf: self
                .reward
                .mf
                .unwrap_or(1.0 - self.disease.masking_effectiveness),
            rr_as_written: self.reward.rr_as_written,
        }
    }

    pub fn behavior(&self) -> BehaviorParams {
        let c = &self.cognition;
        BehaviorParams {
            weights: self.reward_weights(),
            visibility: c.visibility,
            memory: MemoryParams {
                mu: c.mu,
                tau: c.tau,
                capacity: c.capacity,
            },
            policy: PolicyParams {
                beta: c.beta,
                gamma: c.gamma,
                alpha: c.alpha,
            },
        }
    }

    pub fn schedule(&self) -> BehaviorSchedule {
        BehaviorSchedule {
            decision_period: self.schedule.decision_period,
        }
    }

    pub fn peak_options(&self) -> PeakOptions {
        PeakOptions {
            min_separation: self.analysis.peak_min_separation,
            min_prominence: self.analysis.peak_min_prominence,
        }
    }

    pub fn infectious_period(&self) -> InfectiousPeriod {
        match self.calibration.kernel {
            KernelKind::Geometric => InfectiousPeriod::geometric(&self.disease),
            KernelKind::Fixed => InfectiousPeriod::fixed(self.disease.infectious_days()),
        }
    }

    /// Every violated constraint, each naming its field.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let net = &self.network;
        match net.generator {
            Generator::BarabasiAlbert | Generator::UniformRandom => {
                match (net.n, net.edges) {
                    (Some(n), Some(m)) => {
                        if net.generator == Generator::BarabasiAlbert {
                            let attach = (m as f64 / n as f64).round() as usize;
                            if n < 3 {
                                out.push(format!("network.n: {n} must be at least 3"));
                            } else if attach < 1 || attach >= n {
                                out.push(format!(
                                    "network.edges: {m} edges on {n} nodes gives attachment {attach}; need 1 <= round(edges / n) < n"
                                ));
                            }
                        } else if m > n * n.saturating_sub(1) / 2 {
                            out.push(format!(
                                "network.edges: {m} exceeds the {} possible pairs",
                                n * n.saturating_sub(1) / 2
                            ));
                        }
                        if let Some(t) = net.sample_target {
                            if t >= n {
                                out.push(format!(
                                    "network.sample_target: {t} must be below network.n = {n}"
                                ));
                            }
                        }
                    }
                    _ => out.push("network: generators need both n and edges".into()),
                }
                if net.path.is_some() {
                    out.push("network.path: only used with generator = \"edge_list\"".into());
                }
            }
            Generator::EdgeList => {
                if net.path.is_none() {
                    out.push("network.path: required for generator = \"edge_list\"".into());
                }
            }
        }
        if matches!(net.sample_target, Some(0)) {
            out.push("network.sample_target: must be positive".into());
        }
        if net.rewire_max_attempts == 0 {
            out.push("network.rewire_max_attempts: must be positive".into());
        }

        out.extend(self.disease.violations());
        if self.disease.mix_fraction >= 1.0 {
            out.push(format!(
                "disease.mix_fraction: {} leaves nothing for the network to calibrate; must be below 1",
                self.disease.mix_fraction
            ));
        }
        if !(self.calibration.tol > 0.0) {
            out.push(format!(
                "calibration.tol: {} must be positive",
                self.calibration.tol
            ));
        }
        if self.calibration.check_trials == 0 {
            out.push("calibration.check_trials: must be positive".into());
        }

        out.extend(self.reward_weights().violations());

        let c = &self.cognition;
        if !(c.mu > 0.0) {
            out.push(format!("cognition.mu: {} must be positive", c.mu));
        }
        if !(c.tau > 0.0) {
            out.push(format!("cognition.tau: {} must be positive", c.tau));
        }
        if !(c.alpha > 0.0 && c.alpha <= 1.0) {
            out.push(format!("cognition.alpha: {} outside (0, 1]", c.alpha));
        }
        if !(c.beta > 0.0 && c.beta.is_finite()) {
            out.push(format!("cognition.beta: {} must be positive", c.beta));
        }
        if !(0.0..1.0).contains(&c.gamma) {
            out.push(format!("cognition.gamma: {} outside [0, 1)", c.gamma));
        }
        if let Some(cap) = c.capacity {
            if cap <= 16 {
                out.push(format!(
                    "cognition.capacity: {cap} leaves no room beyond the 16 boundary instances"
                ));
            }
        }
        if c.gamma > 0.0 && !c.deferred_learning {
            out.push(format!(
                "cognition.gamma: discounting (gamma = {}) needs the next observation, which requires cognition.deferred_learning = true",
                c.gamma
            ));
        }

        if self.schedule.decision_period == 0 {
            out.push("schedule.decision_period: must be at least 1 day".into());
        }
        if self.schedule.replicates == 0 {
            out.push("schedule.replicates: must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.analysis.peak_min_prominence) {
            out.push(format!(
                "analysis.peak_min_prominence: {} outside [0, 1]",
                self.analysis.peak_min_prominence
            ));
        }
        if self.analysis.equilibrium_window == 0 {
            out.push("analysis.equilibrium_window: must be positive".into());
        }
        out
    }
}

/// Parses and fully validates `text`, collecting unknown keys, type errors
/// and range violations.
pub fn validate_text(text: &str) -> Result<ScenarioConfig, Vec<String>> {
    let value: toml::Table = toml::from_str(text).map_err(|e| vec![format!("syntax: {e}")])?;
    let mut errors = Vec::new();
    let template = toml::Table::try_from(key_template()).expect("template serializes");
    unknown_keys(&value, &template, "", &mut errors);
    if !errors.is_empty() {
        return Err(errors);
    }
    let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| vec![e.message().to_string()])?;
    let violations = cfg.violations();
    if violations.is_empty() {
        Ok(cfg)
    } else {
        Err(violations)
    }
}

/// A config with every optional key populated, used to enumerate valid keys.
fn key_template() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.network.path = Some(PathBuf::from("-"));
    cfg.network.sample_target = Some(1);
    cfg.reward.mf = Some(0.0);
    cfg.cognition.capacity = Some(1);
    cfg
}

fn unknown_keys(value: &toml::Table, template: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (key, v) in value {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match template.get(key) {
            None => out.push(format!("{path}: unknown key")),
            Some(toml::Value::Table(t)) => {
                if let toml::Value::Table(inner) = v {
                    unknown_keys(inner, t, &path, out);
                }
            }
            Some(_) => {}
        }
    }
}

/// Reads and validates a config file. Relative edge-list paths are resolved
/// against the config file's directory.
pub fn load(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut cfg = validate_text(&text).map_err(ConfigError::Invalid)?;
    if let (Some(p), Some(dir)) = (cfg.network.path.as_mut(), path.parent()) {
        if p.is_relative() {
            *p = dir.join(&*p);
        }
    }
    Ok(cfg)
}

/// Validation entry point for the `validate` command.
pub fn validate_config(path: impl AsRef<Path>) -> Result<Vec<String>, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(validate_text(&text).err().unwrap_or_default())
}

/// Scenario presets shipped with the crate.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig3_base", include_str!("../presets/fig3_base.toml")),
    ("fig4_global", include_str!("../presets/fig4_global.toml")),
];

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    preset_text(name).map(|t| validate_text(t).expect("shipped presets are valid"))
}

/// Flattened `key → value` view of the resolved config, with defaults
/// filled in.
pub fn resolved_parameters(cfg: &ScenarioConfig) -> BTreeMap<String, serde_json::Value> {
    let mut out = BTreeMap::new();
    let mut json = serde_json::to_value(cfg).expect("config serializes");
    if let Some(obj) = json.get_mut("reward").and_then(|r| r.as_object_mut()) {
        obj.insert("mf".into(), cfg.reward_weights().mf.into());
    }
    flatten("", &json, &mut out);
    out
}

fn flatten(prefix: &str, v: &serde_json::Value, out: &mut BTreeMap<String, serde_json::Value>) {
    match v {
        serde_json::Value::Object(map) => {
            for (k, inner) in map {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, inner, out);
            }
        }
        other => {
            out.insert(prefix.to_string(), other.clone());
        }
    }
}
