//! JSON run configuration. Relative paths resolve against the directory
//! holding the config file.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use pairdose::episim::{SirConfig, SyntheticPanelConfig, Truth};
use pairdose::inference::{linear_grid, EngineOptions};
use pairdose::interference::InterferenceParams;
use pairdose::io::OutcomeSource;
use pairdose::longitudinal::{Aggregator, WeightShape};
use pairdose::matching::{CovarianceMode, Ridge};
use pairdose::model::{DoseResponseHypothesis, Family, Link};
use pairdose::sensitivity::GammaMode;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub design: Option<DesignConfig>,
    #[serde(default)]
    pub inference: Option<InferenceConfig>,
    #[serde(default)]
    pub interference: Option<InterferenceConfig>,
    #[serde(default)]
    pub sensitivity: Option<SensitivityConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub covariates: Option<PathBuf>,
    pub mobility: Option<PathBuf>,
    pub cases: Option<PathBuf>,
    pub deaths: Option<PathBuf>,
    pub adjacency: Option<PathBuf>,
    /// Pre-formed pairs, used by `test` instead of the `match` output.
    pub pairs: Option<PathBuf>,
    /// Scalar outcomes `id,outcome`, used instead of panel outcomes.
    pub outcomes: Option<PathBuf>,
}

impl DataConfig {
    pub fn has_panel(&self) -> bool {
        self.covariates.is_some()
            && self.mobility.is_some()
            && self.cases.is_some()
            && self.deaths.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeeksConfig {
    /// Monday starting the first week.
    pub first: NaiveDate,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub treatment_start: NaiveDate,
    pub treatment_end: NaiveDate,
    #[serde(default = "default_reference_level")]
    pub reference_level: f64,
    #[serde(default = "default_weights")]
    pub weights: WeightShape,
    #[serde(default)]
    pub lag: usize,
    pub weeks: Option<WeeksConfig>,
    #[serde(default = "default_covariance")]
    pub covariance: CovarianceMode,
    #[serde(default = "default_ridge")]
    pub ridge: Ridge,
    #[serde(default)]
    pub exact_keys: Vec<String>,
    /// Added where exact keys differ; omitted means such pairs are forbidden.
    pub exact_penalty: Option<f64>,
    #[serde(default)]
    pub dose_gap_penalty: f64,
    #[serde(default)]
    pub min_gap: f64,
    #[serde(default)]
    pub sink_fraction: f64,
}

fn default_reference_level() -> f64 {
    -0.5
}

fn default_weights() -> WeightShape {
    WeightShape::Uniform
}

fn default_covariance() -> CovarianceMode {
    CovarianceMode::RankRobust
}

fn default_ridge() -> Ridge {
    Ridge::Off
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeConfig {
    pub source: OutcomeSource,
    pub start: NaiveDate,
    pub days: usize,
    #[serde(default)]
    pub aggregator: Aggregator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridConfig {
    pub fn values(&self, what: &str) -> Result<Vec<f64>, CliError> {
        linear_grid(self.start, self.stop, self.step)
            .map_err(|e| CliError::Config(format!("{what}: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    #[serde(default)]
    pub tau: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub reference_dose: f64,
    /// Defaults to log for `kink_log`, identity otherwise.
    pub link: Option<Link>,
    #[serde(default = "default_log_offset")]
    pub log_offset: f64,
}

fn default_log_offset() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn hypothesis(&self) -> Result<DoseResponseHypothesis, CliError> {
        let link = self.link.unwrap_or(if self.family == Family::KinkLog {
            Link::Log
        } else {
            Link::Identity
        });
        let h = DoseResponseHypothesis {
            family: self.family,
            tau: self.tau,
            beta: self.beta,
            reference_dose: self.reference_dose,
            link,
            log_offset: self.log_offset,
        };
        h.validate()
            .map_err(|e| CliError::Config(format!("model: {e}")))?;
        Ok(h)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeConfig {
    #[serde(default)]
    pub gamma: f64,
    /// Screen a coarse grid first and keep points with p above gamma.
    #[serde(default)]
    pub prescreen: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub name: String,
    #[serde(flatten)]
    pub model: ModelConfig,
    pub tau_grid: Option<GridConfig>,
    pub beta_grid: Option<GridConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Subgroup {
    pub name: String,
    pub covariate: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    /// Outcome window on the panel; ignored with `data.outcomes`.
    pub outcome: Option<OutcomeConfig>,
    pub model: ModelConfig,
    pub tau_grid: Option<GridConfig>,
    pub beta_grid: Option<GridConfig>,
    pub composite: Option<CompositeConfig>,
    #[serde(default)]
    pub scan: Vec<ScanEntry>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_mc_draws")]
    pub mc_draws: u64,
    #[serde(default = "default_cap")]
    pub enumeration_cap: u64,
    #[serde(default)]
    pub subgroups: Vec<Subgroup>,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_mc_draws() -> u64 {
    10_000
}

fn default_cap() -> u64 {
    1 << 16
}

impl InferenceConfig {
    pub fn engine(&self, seed: u64) -> EngineOptions {
        EngineOptions {
            mc_draws: self.mc_draws,
            seed,
            enumeration_cap: self.enumeration_cap,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferenceConfig {
    pub params: Vec<InterferenceParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityConfig {
    #[serde(default = "default_gamma_mode")]
    pub mode: GammaMode,
    pub lambda_grid: GridConfig,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_refine")]
    pub refine_steps: usize,
}

fn default_gamma_mode() -> GammaMode {
    GammaMode::DoseGapProportional
}

fn default_refine() -> usize {
    12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimulateConfig {
    /// Pre-formed pairs with outcomes from a known truth.
    MatchedFixture {
        n_pairs: usize,
        truth: TruthConfig,
        #[serde(default = "default_noise")]
        noise_sd: f64,
    },
    /// County panel files plus adjacency.
    Panel {
        #[serde(default = "default_counties")]
        n_counties: usize,
        #[serde(default = "default_panel_start")]
        start: NaiveDate,
        #[serde(default = "default_panel_days")]
        days: usize,
    },
    /// Equal-cumulative-dose audit of the SIR model.
    Audit {
        sir: SirConfig,
        window: usize,
        #[serde(default = "default_reference_level")]
        reference_level: f64,
        #[serde(default = "default_weights")]
        weights: WeightShape,
        #[serde(default)]
        lag: usize,
        n_pairs: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TruthConfig {
    Model {
        #[serde(flatten)]
        model: ModelConfig,
    },
    Step {
        knots: Vec<f64>,
        values: Vec<f64>,
    },
}

impl TruthConfig {
    pub fn truth(&self) -> Result<Truth, CliError> {
        Ok(match self {
            TruthConfig::Model { model } => Truth::Model {
                hypothesis: model.hypothesis()?,
            },
            TruthConfig::Step { knots, values } => Truth::Step {
                knots: knots.clone(),
                values: values.clone(),
            },
        })
    }
}

fn default_noise() -> f64 {
    1.0
}

fn default_counties() -> usize {
    SyntheticPanelConfig::default().n_counties
}

fn default_panel_start() -> NaiveDate {
    SyntheticPanelConfig::default().start
}

fn default_panel_days() -> usize {
    SyntheticPanelConfig::default().days
}

/// A parsed config plus the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: Config,
    pub base: PathBuf,
}

impl Loaded {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: Config = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Loaded { config, base })
    }

    /// sha256 of the config as serialized after flag overrides.
    pub fn hash(&self) -> String {
        crate::artifacts::sha256_hex(&serde_json::to_vec(&self.config).expect("config serializes"))
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn design(&self) -> Result<&DesignConfig, CliError> {
        self.config
            .design
            .as_ref()
            .ok_or_else(|| CliError::Config("missing design section".into()))
    }

    pub fn inference(&self) -> Result<&InferenceConfig, CliError> {
        self.config
            .inference
            .as_ref()
            .ok_or_else(|| CliError::Config("missing inference section".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let c: Config = serde_json::from_str(
            r#"{"inference": {"model": {"family": "kink_log", "tau": 0.5, "beta": 2}}}"#,
        )
        .unwrap();
        let inf = c.inference.unwrap();
        assert_eq!(inf.mc_draws, 10_000);
        assert_eq!(inf.model.hypothesis().unwrap().link, Link::Log);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<Config>(r#"{"sead": 1}"#).is_err());
    }

    #[test]
    fn simulate_variants_parse() {
        let s: SimulateConfig = serde_json::from_str(
            r#"{"kind": "matched_fixture", "n_pairs": 5, "truth": {"kind": "step", "knots": [0, 1, 4], "values": [2, 1]}}"#,
        )
        .unwrap();
        assert!(matches!(
            s,
            SimulateConfig::MatchedFixture { n_pairs: 5, .. }
        ));
        let p: SimulateConfig = serde_json::from_str(r#"{"kind": "panel"}"#).unwrap();
        assert!(matches!(
            p,
            SimulateConfig::Panel {
                n_counties: 30,
                days: 105,
                ..
            }
        ));
    }

    #[test]
    fn model_truth_and_scan_entries_flatten_model_fields() {
        let s: SimulateConfig = serde_json::from_str(
            r#"{"kind": "matched_fixture", "n_pairs": 4, "truth": {"kind": "model", "family": "kink", "tau": 1, "beta": 0.5}}"#,
        )
        .unwrap();
        let SimulateConfig::MatchedFixture { truth, .. } = s else {
            panic!()
        };
        assert_eq!(
            truth.truth().unwrap(),
            Truth::Model {
                hypothesis: DoseResponseHypothesis::kink(1.0, 0.5)
            }
        );
        let e: ScanEntry = serde_json::from_str(
            r#"{"name": "p", "family": "proportional", "beta_grid": {"start": 0, "stop": 1, "step": 0.5}}"#,
        )
        .unwrap();
        assert_eq!(e.model.family, Family::Proportional);
        assert!(e.tau_grid.is_none());
    }

    #[test]
    fn config_hash_tracks_overrides() {
        let mut l = Loaded {
            config: Config::default(),
            base: PathBuf::new(),
        };
        let h0 = l.hash();
        l.config.seed = 9;
        assert_ne!(h0, l.hash());
    }
}
