//! Experiment configuration: a JSON document with a tagged experiment kind,
//! strict about unknown keys at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl OutputFormat {
    pub fn parse(s: &str) -> Result<Self, HarnessError> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(HarnessError::Config(format!(
                "unknown output format {other:?}, expected csv or json"
            ))),
        }
    }
}

/// Spiked covariance scaling experiment over a grid of dimensions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceParams {
    pub d_grid: Vec<usize>,
    pub r: usize,
    /// Spike strength as a multiple of `d / r`.
    pub spike_scale: f64,
    /// Bulk standard deviation `c`.
    pub bulk_c: f64,
    /// Samples per replicate.
    pub n: usize,
}

/// Right-frame recovery for tall low-rank signals plus unit Gaussian noise.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowrankRecoveryParams {
    pub p1: usize,
    pub p2: usize,
    pub r: usize,
    /// `sigma_r = sigma_scale * p2 / sqrt(p1)`.
    pub sigma_scale: f64,
    /// Noise entry standard deviation.
    pub noise_scale: f64,
}

/// Joint two-graph embedding rate over a grid of graph sizes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmnibusParams {
    pub n_grid: Vec<usize>,
    pub rho: f64,
    /// Symmetric block probability matrix, row-major.
    pub lambda_block: Vec<Vec<f64>>,
}

/// Entrywise symmetric eigenvector bound stress test.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntrywiseParams {
    pub p: usize,
    /// Signed eigenvalues, largest magnitude first.
    pub lambdas: Vec<f64>,
    /// `|E|_inf` as a fraction of `|lambda_r|`; 0.25 is the precondition
    /// boundary.
    pub noise_ratio: f64,
}

/// Exactness sweep over all decomposition variants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionSuiteParams {
    pub p_max: usize,
    pub r_max: usize,
}

/// Norm inequality sweep over random matrices of assorted shapes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormSuiteParams {
    pub max_dim: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "experiment", content = "params", rename_all = "snake_case")]
pub enum ExperimentKind {
    Covariance(CovarianceParams),
    LowrankRecovery(LowrankRecoveryParams),
    Omnibus(OmnibusParams),
    Entrywise(EntrywiseParams),
    DecompositionSuite(DecompositionSuiteParams),
    NormSuite(NormSuiteParams),
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Covariance(_) => "covariance",
            ExperimentKind::LowrankRecovery(_) => "lowrank_recovery",
            ExperimentKind::Omnibus(_) => "omnibus",
            ExperimentKind::Entrywise(_) => "entrywise",
            ExperimentKind::DecompositionSuite(_) => "decomposition_suite",
            ExperimentKind::NormSuite(_) => "norm_suite",
        }
    }
}

fn default_replicates() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub kind: ExperimentKind,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub output_format: OutputFormat,
}

const KNOWN_TOP_LEVEL: [&str; 6] = [
    "experiment",
    "params",
    "replicates",
    "base_seed",
    "output_path",
    "output_format",
];

impl ExperimentConfig {
    /// Parses a JSON config. Unknown keys are rejected at the top level and
    /// inside `params`.
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| HarnessError::Config(format!("invalid JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| HarnessError::Config("config must be a JSON object".into()))?;
        // The tagged enum sits behind a flatten, which silently swallows
        // unknown keys; check them by hand.
        for key in obj.keys() {
            if !KNOWN_TOP_LEVEL.contains(&key.as_str()) {
                return Err(HarnessError::Config(format!("unknown config key {key:?}")));
            }
        }
        let config: ExperimentConfig = serde_json::from_value(value)
            .map_err(|e| HarnessError::Config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            HarnessError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |msg: String| Err(HarnessError::Config(msg));
        if self.replicates < 1 {
            return fail("replicates must be >= 1".into());
        }
        match &self.kind {
            ExperimentKind::Covariance(p) => {
                if p.d_grid.is_empty() {
                    return fail("d_grid must be non-empty".into());
                }
                if p.r < 1 || p.d_grid.iter().any(|&d| d <= p.r) {
                    return fail("need 1 <= r < d for every grid point".into());
                }
                if p.spike_scale <= 0.0 || p.bulk_c <= 0.0 || p.n < 1 {
                    return fail("spike_scale, bulk_c, n must be positive".into());
                }
            }
            ExperimentKind::LowrankRecovery(p) => {
                if p.r < 1 || p.r > p.p1.min(p.p2) {
                    return fail("need 1 <= r <= min(p1, p2)".into());
                }
                if p.sigma_scale <= 0.0 || p.noise_scale <= 0.0 {
                    return fail("sigma_scale and noise_scale must be positive".into());
                }
            }
            ExperimentKind::Omnibus(p) => {
                if p.n_grid.is_empty() || p.n_grid.iter().any(|&n| n < 4) {
                    return fail("n_grid must be non-empty with n >= 4".into());
                }
                if !(0.0..=1.0).contains(&p.rho) {
                    return fail("rho must be in [0, 1]".into());
                }
                let k = p.lambda_block.len();
                if k == 0 || p.lambda_block.iter().any(|row| row.len() != k) {
                    return fail("lambda_block must be square and non-empty".into());
                }
            }
            ExperimentKind::Entrywise(p) => {
                if p.lambdas.is_empty() || p.lambdas.len() >= p.p {
                    return fail("need 1 <= len(lambdas) < p".into());
                }
                if !(0.0..=0.25).contains(&p.noise_ratio) {
                    return fail("noise_ratio must be in [0, 0.25]".into());
                }
            }
            ExperimentKind::DecompositionSuite(p) => {
                if p.p_max < 20 || p.r_max < 1 {
                    return fail("need p_max >= 20 and r_max >= 1".into());
                }
            }
            ExperimentKind::NormSuite(p) => {
                if p.max_dim < 2 {
                    return fail("max_dim must be >= 2".into());
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(experiment: &str, params: &str) -> String {
        format!(
            r#"{{"experiment": "{experiment}", "params": {params}, "replicates": 3, "base_seed": 7}}"#
        )
    }

    #[test]
    fn parses_each_experiment() {
        let cases = [
            (
                "covariance",
                r#"{"d_grid": [100, 400], "r": 3, "spike_scale": 1.0, "bulk_c": 1.0, "n": 500}"#,
            ),
            (
                "lowrank_recovery",
                r#"{"p1": 100, "p2": 2000, "r": 3, "sigma_scale": 1.0, "noise_scale": 1.0}"#,
            ),
            (
                "omnibus",
                r#"{"n_grid": [250, 500], "rho": 0.5, "lambda_block": [[0.5, 0.2], [0.2, 0.5]]}"#,
            ),
            (
                "entrywise",
                r#"{"p": 50, "lambdas": [10.0, -8.0], "noise_ratio": 0.25}"#,
            ),
            ("decomposition_suite", r#"{"p_max": 200, "r_max": 8}"#),
            ("norm_suite", r#"{"max_dim": 30}"#),
        ];
        for (name, params) in cases {
            let config = ExperimentConfig::from_json(&minimal(name, params)).unwrap();
            assert_eq!(config.kind.name(), name);
            assert_eq!(config.replicates, 3);
            assert_eq!(config.base_seed, 7);
        }
    }

    #[test]
    fn rejects_unknown_top_level_key() {
        let text = r#"{"experiment": "norm_suite", "params": {"max_dim": 10}, "replicates": 1, "bogus": 1}"#;
        let err = ExperimentConfig::from_json(text).unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn rejects_unknown_param_key() {
        let text = r#"{"experiment": "norm_suite", "params": {"max_dim": 10, "oops": 2}}"#;
        assert!(ExperimentConfig::from_json(text).is_err());
    }

    #[test]
    fn rejects_invalid_values() {
        let text = minimal("entrywise", r#"{"p": 50, "lambdas": [10.0], "noise_ratio": 0.5}"#);
        assert!(ExperimentConfig::from_json(&text).is_err());
        let text = r#"{"experiment": "norm_suite", "params": {"max_dim": 10}, "replicates": 0}"#;
        assert!(ExperimentConfig::from_json(text).is_err());
    }

    #[test]
    fn defaults_apply() {
        let text = r#"{"experiment": "norm_suite", "params": {"max_dim": 10}}"#;
        let config = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(config.replicates, 1);
        assert_eq!(config.base_seed, 0);
        assert_eq!(config.output_format, OutputFormat::Csv);
        assert!(config.output_path.is_none());
    }
}
