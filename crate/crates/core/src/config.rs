//! Run configuration: a single TOML document with every knob of the
//! pipeline; CLI flags override individual keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cohort::InclusionScope;
use crate::error::{Error, Result};
use crate::eval::TTestVariant;
use crate::learners::{ModelFamily, TrainConfig};
use crate::synth::SynthConfig;

/// Whether the feature-selection forest is trained on the SMOTE-balanced
/// training set or on the raw (imbalanced) one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SelectionOn {
    #[default]
    Balanced,
    Raw,
}

impl std::str::FromStr for SelectionOn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "balanced" => Ok(SelectionOn::Balanced),
            "raw" => Ok(SelectionOn::Raw),
            other => Err(Error::Config(format!(
                "selection_on must be balanced|raw, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub inclusion_scope: InclusionScope,
    pub missing_threshold: f64,
    pub split_ratio: f64,
    pub smote_k: usize,
    pub top_k_features: usize,
    pub cv_folds: usize,
    pub bootstrap_b: usize,
    pub bootstrap_alpha: f64,
    pub models: Vec<ModelFamily>,
    pub ttest_variant: TTestVariant,
    pub selection_on: SelectionOn,
    /// test rows explained by SHAP; 0 = all of them
    pub shap_sample: usize,
    pub shap_top_n: usize,
    pub train: TrainConfig,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: None,
            out_dir: None,
            seed: 42,
            inclusion_scope: InclusionScope::Latest,
            missing_threshold: 0.30,
            split_ratio: 0.75,
            smote_k: 5,
            top_k_features: 35,
            cv_folds: 5,
            bootstrap_b: 1000,
            bootstrap_alpha: 0.05,
            models: ModelFamily::ALL.to_vec(),
            ttest_variant: TTestVariant::Student,
            selection_on: SelectionOn::Balanced,
            shap_sample: 200,
            shap_top_n: 20,
            train: TrainConfig::default(),
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.missing_threshold > 0.0 && self.missing_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "missing_threshold must be in (0,1], got {}",
                self.missing_threshold
            )));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!(
                "split_ratio must be in (0,1), got {}",
                self.split_ratio
            )));
        }
        if self.smote_k == 0 {
            return Err(Error::Config("smote_k must be >= 1".into()));
        }
        if self.top_k_features == 0 {
            return Err(Error::Config("top_k_features must be >= 1".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::Config("cv_folds must be >= 2".into()));
        }
        if self.bootstrap_b == 0 {
            return Err(Error::Config("bootstrap_b must be >= 1".into()));
        }
        if !(self.bootstrap_alpha > 0.0 && self.bootstrap_alpha < 1.0) {
            return Err(Error::Config(format!(
                "bootstrap_alpha must be in (0,1), got {}",
                self.bootstrap_alpha
            )));
        }
        if self.models.is_empty() {
            return Err(Error::Config("models must not be empty".into()));
        }
        self.synth.validate()?;
        Ok(())
    }

    /// Configured model list with duplicates removed, original order kept.
    pub fn model_list(&self) -> Vec<ModelFamily> {
        let mut seen = Vec::new();
        for &m in &self.models {
            if !seen.contains(&m) {
                seen.push(m);
            }
        }
        seen
    }

    pub fn data_dir(&self) -> Result<&Path> {
        self.data_dir
            .as_deref()
            .ok_or_else(|| Error::Config("data_dir is required (set --data or data_dir)".into()))
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out_dir
            .as_deref()
            .ok_or_else(|| Error::Config("out_dir is required (set --out or out_dir)".into()))
    }
}

/// Loads a TOML config file. Unknown keys are configuration errors.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(
            f,
            "seed = 7\nmodels = [\"rf\", \"lr\"]\nmissing_threshold = 0.25\n\n[synth]\nn_patients = 100\n\n[train.forest]\nn_trees = 50\n"
        )
        .unwrap();
        let cfg = load_config(f.path()).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.models, vec![ModelFamily::Rf, ModelFamily::Lr]);
        assert_eq!(cfg.missing_threshold, 0.25);
        assert_eq!(cfg.synth.n_patients, 100);
        assert_eq!(cfg.train.forest.n_trees, 50);
        // untouched keys keep defaults
        assert_eq!(cfg.split_ratio, 0.75);
        assert_eq!(cfg.top_k_features, 35);
    }

    #[test]
    fn unknown_keys_are_config_errors() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "sead = 7").unwrap();
        assert!(matches!(load_config(f.path()), Err(Error::Config(_))));
    }

    #[test]
    fn range_checks() {
        let mut cfg = RunConfig::default();
        cfg.split_ratio = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.models.clear();
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::default();
        cfg.missing_threshold = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn duplicate_models_deduplicate_preserving_order() {
        let mut cfg = RunConfig::default();
        cfg.models = vec![ModelFamily::Gb, ModelFamily::Rf, ModelFamily::Gb];
        assert_eq!(cfg.model_list(), vec![ModelFamily::Gb, ModelFamily::Rf]);
    }
}
