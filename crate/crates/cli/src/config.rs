//! Run configuration loaded from a TOML document. Every key is optional.

use std::path::Path;

use qevalue::evalmap::EvaluationKind;
use qevalue::selector::SelectionConfig;
use qevalue::simgen::SimConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub mbic2: bool,
    pub rfgls: bool,
    pub fdr_level: f64,
    pub mbic2_constant: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { mbic2: true, rfgls: true, fdr_level: 0.05, mbic2_constant: qevalue::baselines::MBIC2_DEFAULT_CONSTANT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub replications: usize,
    pub h_list: Vec<f64>,
    pub kinds: Vec<EvaluationKind>,
    /// Thresholds reported for E1.
    pub t_e1: Vec<f64>,
    /// Thresholds reported for E2.
    pub t_e2: Vec<f64>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            replications: 100,
            h_list: vec![10.0, 7.0, 5.0, 3.0, 2.0, 1.0, 0.0],
            kinds: vec![EvaluationKind::E1, EvaluationKind::E2],
            t_e1: (1..=5).map(|k| (-(k as f64)).exp()).collect(),
            t_e2: vec![0.8, 0.74, 0.68, 0.62, 0.56, 0.5],
        }
    }
}

impl StudyConfig {
    pub fn thresholds(&self, kind: EvaluationKind) -> &[f64] {
        match kind {
            EvaluationKind::E1 => &self.t_e1,
            EvaluationKind::E2 => &self.t_e2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed. Overrides the seeds inside `simulation` and `selection`.
    pub seed: u64,
    /// Fraction of families used for training by `select`.
    pub split_fraction: f64,
    pub simulation: SimConfig,
    pub selection: SelectionConfig,
    pub baselines: BaselineConfig,
    pub study: StudyConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            split_fraction: 0.75,
            simulation: SimConfig::default(),
            selection: SelectionConfig::default(),
            baselines: BaselineConfig::default(),
            study: StudyConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> std::result::Result<Self, String> {
        let config: RunConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        config.validate().map_err(|e| e.to_string())?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CliError::io(path))?;
        Self::from_toml(&text).map_err(|message| CliError::Config { path: path.to_path_buf(), message })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(CliError::Validation(format!("split_fraction {} outside (0, 1)", self.split_fraction)));
        }
        if self.study.replications == 0 {
            return Err(CliError::Validation("study.replications must be at least 1".into()));
        }
        if self.study.h_list.iter().any(|h| !(*h >= 0.0)) {
            return Err(CliError::Validation("study.h_list entries must be nonnegative".into()));
        }
        if !(self.baselines.fdr_level > 0.0 && self.baselines.fdr_level < 1.0) {
            return Err(CliError::Validation(format!("baselines.fdr_level {} outside (0, 1)", self.baselines.fdr_level)));
        }
        self.simulation.validate()?;
        self.selection.validate()?;
        for &kind in &self.study.kinds {
            let config = SelectionConfig { t_grid: self.study.thresholds(kind).to_vec(), kind, ..self.selection.clone() };
            config.validate()?;
        }
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig { seed: self.seed, ..self.simulation.clone() }
    }

    pub fn selection_config(&self) -> SelectionConfig {
        SelectionConfig { seed: self.seed, ..self.selection.clone() }
    }
}
