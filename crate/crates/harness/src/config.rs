use std::path::Path;

use gkf_core::field::{ParamSpace, SpatialCov};
use gkf_core::gmf::CanonicalRegion;
use gkf_core::wiener::Potential;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::HarnessError;

/// One experiment: what to run, the root seed, and the worker count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Worker threads; all outputs are independent of this value.
    #[serde(default = "default_workers")]
    pub workers: usize,
    pub experiment: Experiment,
}

fn default_workers() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    /// Surface estimate of `M_0..M_J` for a canonical region.
    Gmf {
        region: CanonicalRegion,
        order: usize,
        samples: usize,
        #[serde(default)]
        bandwidth: Option<f64>,
    },
    /// Direct tube volumes against the closed-form tube series.
    Tube {
        region: CanonicalRegion,
        order: usize,
        samples: usize,
        rho_grid: Vec<f64>,
        #[serde(default)]
        method: DistanceMethod,
    },
    /// GMFs of `{F_n ≥ u}` along a grid of `n`.
    Converge {
        potential: Potential,
        level: f64,
        order: usize,
        n_grid: Vec<usize>,
        samples: usize,
        #[serde(default)]
        bandwidth: Option<f64>,
    },
    /// Mean Euler characteristic against the kinematic formula.
    Gkf(FieldExperiment),
    /// Mean `L_i` of the excursion set against the Crofton-type formula.
    Crofton { index: usize, field: FieldExperiment },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMethod {
    #[default]
    ClosedForm,
    Projection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldExperiment {
    pub space: ParamSpace,
    pub cov: SpatialCov,
    pub potential: Potential,
    pub u_levels: Vec<f64>,
    /// Itô grid size, shared by the field and the cylindrical functional.
    pub time_n: usize,
    pub reps: usize,
    pub order: usize,
    pub samples: usize,
    #[serde(default)]
    pub bandwidth: Option<f64>,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Gmf { .. } => "gmf",
            Experiment::Tube { .. } => "tube",
            Experiment::Converge { .. } => "converge",
            Experiment::Gkf(_) => "gkf",
            Experiment::Crofton { .. } => "crofton",
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let config: Self = serde_json::from_str(text).map_err(|e| HarnessError::Validation(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Structural checks that do not need the numerical modules.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Validation(m));
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        match &self.experiment {
            Experiment::Tube { rho_grid, .. } if rho_grid.is_empty() => bad("rho_grid is empty".into()),
            Experiment::Converge { n_grid, .. } if n_grid.is_empty() => bad("n_grid is empty".into()),
            Experiment::Gkf(f) | Experiment::Crofton { field: f, .. } if f.u_levels.is_empty() => {
                bad("u_levels is empty".into())
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crofton_config_round_trips() {
        let text = r#"{
            "seed": 7,
            "experiment": {
                "kind": "crofton", "index": 2, "field": {
                "space": {"kind": "torus", "lengths": [6.283185307179586, 6.283185307179586], "grid": 100},
                "cov": {"kind": "cosine", "frequency": 2.0},
                "potential": {"kind": "constant", "value": 1.0},
                "u_levels": [1.0], "time_n": 2, "reps": 100, "order": 2, "samples": 10000
            }}
        }"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.workers, 1);
        assert_eq!(c.experiment.name(), "crofton");
        assert_eq!(ExperimentConfig::from_json(&c.to_json()).unwrap(), c);
        let extra = text.replace("\"reps\"", "\"repz\": 1, \"reps\"");
        assert!(ExperimentConfig::from_json(&extra).is_err());
    }
}
