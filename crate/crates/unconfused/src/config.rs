//! Experiment configuration: a JSON file with a `schema_version` field,
//! overridable from the command line.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use unconfused_core::perceptron::PerceptronConfig;
use unconfused_core::synth::{SynthConfig, MAX_SWEEP_LEVEL};
use unconfused_core::uma::{Selection, UmaConfig};

use crate::error::{AppError, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SemisupConfig {
    /// Size of the clean pool that gets partially labelled and relabelled.
    pub pool_size: usize,
    pub labeled_fraction: f64,
    /// Share of the labelled points used to train the bootstrap classifier;
    /// the rest estimate the confusion matrix.
    pub bootstrap_share: f64,
}

impl Default for SemisupConfig {
    fn default() -> Self {
        Self { pool_size: 10_000, labeled_fraction: 0.03, bootstrap_share: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub synth: SynthConfig,
    pub uma: UmaConfig,
    /// `seed` is ignored by the harness, which derives one per run.
    pub perceptron: PerceptronConfig,
    pub n_runs: usize,
    pub output_dir: PathBuf,
    pub sweep_range: Vec<u32>,
    pub semisup: SemisupConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let synth = SynthConfig::default();
        Self {
            schema_version: SCHEMA_VERSION,
            uma: UmaConfig::for_margin(synth.margin_theta),
            synth,
            perceptron: PerceptronConfig::default(),
            n_runs: 10,
            output_dir: PathBuf::from("out"),
            sweep_range: (1..=20).collect(),
            semisup: SemisupConfig::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub runs: Option<usize>,
    pub selection: Option<Selection>,
    pub alpha: Option<f64>,
    pub stop_norm: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_json(path: &Path, text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| AppError::format(path, e.line(), e.to_string()))?;
        match value.get("schema_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(SCHEMA_VERSION) => {}
            Some(v) => {
                return Err(AppError::Config(format!(
                    "{}: schema_version {v} is not supported (expected {SCHEMA_VERSION})",
                    path.display()
                )))
            }
            None => {
                return Err(AppError::Config(format!("{}: missing schema_version", path.display())));
            }
        }
        serde_json::from_str(text).map_err(|e| AppError::format(path, e.line(), e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        Self::from_json(path, &text)
    }

    /// Loads `path` if given, else the defaults, then applies `overrides` and validates.
    pub fn resolve(path: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.synth.seed = seed;
        }
        if let Some(out) = &o.out {
            self.output_dir = out.clone();
        }
        if let Some(runs) = o.runs {
            self.n_runs = runs;
        }
        if let Some(selection) = o.selection {
            self.uma.selection = selection;
        }
        if let Some(alpha) = o.alpha {
            self.uma.alpha = alpha;
        }
        if let Some(stop_norm) = o.stop_norm {
            self.uma.stop_norm = stop_norm;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(AppError::Config(format!("schema_version must be {SCHEMA_VERSION}")));
        }
        self.synth.validate()?;
        self.uma.validate()?;
        if self.perceptron.max_epochs == 0 {
            return Err(AppError::Config("perceptron.max_epochs must be >= 1".into()));
        }
        if self.n_runs == 0 {
            return Err(AppError::Config("n_runs must be >= 1".into()));
        }
        if let Some(i) = self.sweep_range.iter().find(|&&i| i > MAX_SWEEP_LEVEL) {
            return Err(AppError::Config(format!("sweep level {i} exceeds {MAX_SWEEP_LEVEL}")));
        }
        let s = &self.semisup;
        if s.pool_size == 0 {
            return Err(AppError::Config("semisup.pool_size must be >= 1".into()));
        }
        if !(s.labeled_fraction > 0.0 && s.labeled_fraction <= 1.0) {
            return Err(AppError::Config("semisup.labeled_fraction must lie in (0, 1]".into()));
        }
        if !(s.bootstrap_share > 0.0 && s.bootstrap_share < 1.0) {
            return Err(AppError::Config("semisup.bootstrap_share must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.synth.seed
    }

    /// SHA-256 of the canonical JSON serialization, hex encoded. The output
    /// directory is left out: it does not change any result.
    pub fn hash(&self) -> String {
        let canonical = Self { output_dir: PathBuf::new(), ..self.clone() };
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_json(Path::new("cfg.json"), &cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        assert_eq!(cfg.sweep_range.len(), 20);
        assert_eq!(cfg.uma.max_iters, 32_000);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg = ExperimentConfig::from_json(
            Path::new("cfg.json"),
            r#"{"schema_version": 1, "n_runs": 3, "synth": {"q_classes": 4}}"#,
        )
        .unwrap();
        assert_eq!(cfg.n_runs, 3);
        assert_eq!(cfg.synth.q_classes, 4);
        assert_eq!(cfg.synth.dim, 2);
    }

    #[test]
    fn schema_version_is_required() {
        let err = ExperimentConfig::from_json(Path::new("c.json"), r#"{"n_runs": 3}"#).unwrap_err();
        assert!(err.to_string().contains("schema_version"));
        let err = ExperimentConfig::from_json(Path::new("c.json"), r#"{"schema_version": 9}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_fields_report_a_line() {
        let text = "{\n  \"schema_version\": 1,\n  \"n_rnus\": 3\n}";
        match ExperimentConfig::from_json(Path::new("c.json"), text).unwrap_err() {
            AppError::Format { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn overrides_win_and_change_the_hash() {
        let mut cfg = ExperimentConfig::default();
        let before = cfg.hash();
        cfg.apply(&Overrides { seed: Some(9), runs: Some(2), alpha: Some(0.5), ..Default::default() });
        assert_eq!((cfg.seed(), cfg.n_runs, cfg.uma.alpha), (9, 2, 0.5));
        assert_ne!(cfg.hash(), before);
        let moved = cfg.hash();
        cfg.apply(&Overrides { out: Some(PathBuf::from("elsewhere")), ..Default::default() });
        assert_eq!(cfg.hash(), moved);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.n_runs = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.sweep_range = vec![21];
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::default();
        cfg.uma.stop_norm = 0.0;
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    }
}
