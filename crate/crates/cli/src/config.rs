//! Run configuration: one JSON document with a section per command.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use voltensor::market_sim::SimConfig;
use voltensor::ptpoet::IdioTarget;
use voltensor::realized_vol::PrvmConfig;
use voltensor::study::{DataSource, EstimatorConfig, PipelineConfig, StudyConfig, TickSource};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; overrides the per-section seeds when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Default output directory (relative to the config file).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predict: Option<PredictSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluate: Option<StudyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backtest: Option<PipelineConfig>,
}

/// PRVM over a directory of panel CSVs or a tick file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panels_dir: Option<PathBuf>,
    /// Pre-sample panels used only for the lagged covariates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ticks: Option<TickSource>,
    #[serde(default)]
    pub prvm: PrvmConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// Tensor header written by `estimate`.
    pub tensor: PathBuf,
    /// `D × d` covariate CSV.
    pub covariates: PathBuf,
    /// Intraday intervals behind the tensor; needed when `tau` is unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default)]
    pub estimator: EstimatorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSection {
    pub model_dir: PathBuf,
    /// One-row CSV with the covariates of the target day.
    pub covariates_next: PathBuf,
    #[serde(default)]
    pub idio: IdioTarget,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psd_floor: Option<f64>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Pushes the master seed into every seeded section.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        if let Some(s) = &mut self.simulate {
            s.seed = seed;
        }
        if let Some(s) = &mut self.evaluate {
            s.base_seed = seed;
        }
        if let Some(b) = &mut self.backtest {
            if let DataSource::Simulated(s) = &mut b.source {
                s.seed = seed;
            }
        }
    }

    /// Resolves relative input paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(o) = &mut self.out {
            fix(o);
        }
        if let Some(e) = &mut self.estimate {
            e.panels_dir.as_mut().map(fix);
            e.history_dir.as_mut().map(fix);
            if let Some(t) = &mut e.ticks {
                fix(&mut t.path);
            }
        }
        if let Some(f) = &mut self.fit {
            fix(&mut f.tensor);
            fix(&mut f.covariates);
        }
        if let Some(p) = &mut self.predict {
            fix(&mut p.model_dir);
            fix(&mut p.covariates_next);
        }
        if let Some(b) = &mut self.backtest {
            if let DataSource::Ticks(t) = &mut b.source {
                fix(&mut t.path);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"simulate": {"p": 2, "bogus": 1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"simulat": {}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"fit": {"tensor": "t", "covariates": "x", "estimator": {"r9": 1}}}"#).is_err());
    }

    #[test]
    fn partial_sections_take_defaults() {
        let cfg = RunConfig::from_json(r#"{"simulate": {"p": 2, "days": 3, "m": 50}}"#).unwrap();
        let sim = cfg.simulate.unwrap();
        assert_eq!(sim.p, 2);
        assert_eq!(sim.har, SimConfig::default().har);
    }

    #[test]
    fn seed_reaches_every_section() {
        let mut cfg = RunConfig {
            simulate: Some(SimConfig::default()),
            evaluate: Some(StudyConfig::default()),
            backtest: Some(PipelineConfig::default()),
            ..RunConfig::default()
        };
        cfg.apply_seed(42);
        assert_eq!(cfg.simulate.as_ref().unwrap().seed, 42);
        assert_eq!(cfg.evaluate.as_ref().unwrap().base_seed, 42);
        match &cfg.backtest.as_ref().unwrap().source {
            DataSource::Simulated(s) => assert_eq!(s.seed, 42),
            DataSource::Ticks(_) => unreachable!(),
        }
    }

    #[test]
    fn full_config_round_trips() {
        let cfg = RunConfig {
            seed: Some(3),
            simulate: Some(SimConfig::default()),
            evaluate: Some(StudyConfig::default()),
            backtest: Some(PipelineConfig::default()),
            ..RunConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }
}
