//! Scenario configuration files (TOML).

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

use skg_core::channel::DEFAULT_RANK_TOL;
use skg_core::designer::Criterion;

use crate::error::{BenchError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Uniform,
    LargeAntenna,
    Optimal,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Uniform => "uniform",
            Strategy::LargeAntenna => "large_antenna",
            Strategy::Optimal => "optimal",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionSpec {
    Sum,
    Min,
    WeightedSum,
    WeightedMin,
}

impl From<CriterionSpec> for Criterion {
    fn from(c: CriterionSpec) -> Self {
        match c {
            CriterionSpec::Sum => Criterion::Sum,
            CriterionSpec::Min => Criterion::Min,
            CriterionSpec::WeightedSum => Criterion::WeightedSum,
            CriterionSpec::WeightedMin => Criterion::WeightedMin,
        }
    }
}

/// How `dl_snr_db` maps to a training budget. Only `fixed_noise`
/// (`sigma_DL^2 = 1`, `p_DL = 10^(rho_DL/10)`) is supported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetConvention {
    #[default]
    FixedNoise,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySpec {
    /// Elements along the horizontal axis.
    pub horizontal: usize,
    #[serde(default = "one")]
    pub vertical: usize,
    /// Inter-element spacing in wavelengths.
    #[serde(default = "half")]
    pub spacing: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub azimuth_deg: f64,
    #[serde(default)]
    pub elevation_deg: f64,
    pub spread_deg: f64,
    #[serde(default = "unit")]
    pub power: f64,
}

/// One user: explicit clusters, clusters drawn from the run seed, or a
/// covariance matrix file (path relative to the config file).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clusters: Option<Vec<ClusterSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_clusters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance_file: Option<PathBuf>,
    /// Per-user uplink SNR override in dB.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ul_snr_db: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSpec {
    /// Antenna counts of the half-wavelength ULA used by `converge`.
    pub m_list: Vec<usize>,
    #[serde(default = "ten")]
    pub dl_snr_db: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub seed: u64,
    pub ul_snr_db: f64,
    pub dl_snr_db: Vec<f64>,
    #[serde(default = "all_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "sum")]
    pub criterion: CriterionSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<usize>,
    #[serde(default = "default_rank_tol")]
    pub rank_tol: f64,
    #[serde(default = "unit")]
    pub dl_noise_var: f64,
    #[serde(default)]
    pub budget_convention: BudgetConvention,
    /// Also emit `K = 1` rows using only the first user.
    #[serde(default)]
    pub single_user_baseline: bool,
    pub array: ArraySpec,
    pub users: Vec<UserSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceSpec>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn one() -> usize {
    1
}
fn half() -> f64 {
    0.5
}
fn unit() -> f64 {
    1.0
}
fn ten() -> f64 {
    10.0
}
fn sum() -> CriterionSpec {
    CriterionSpec::Sum
}
fn default_rank_tol() -> f64 {
    DEFAULT_RANK_TOL
}
fn all_strategies() -> Vec<Strategy> {
    vec![Strategy::Uniform, Strategy::LargeAntenna, Strategy::Optimal]
}

fn invalid(field: impl Into<String>, msg: impl Into<String>) -> BenchError {
    BenchError::Invalid {
        field: field.into(),
        msg: msg.into(),
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: ScenarioConfig = toml::from_str(text).map_err(|e| BenchError::Parse(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    /// SHA-256 of the canonical serialization: insensitive to comments and
    /// formatting, sensitive to every value.
    pub fn content_hash(&self) -> String {
        Sha256::digest(self.to_toml().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.users.is_empty() {
            return Err(invalid("users", "at least one user is required"));
        }
        if self.dl_snr_db.is_empty() {
            return Err(invalid("dl_snr_db", "sweep list is empty"));
        }
        if self.dl_snr_db.iter().any(|v| !v.is_finite()) {
            return Err(invalid("dl_snr_db", "values must be finite"));
        }
        if !self.ul_snr_db.is_finite() {
            return Err(invalid("ul_snr_db", "must be finite"));
        }
        if self.strategies.is_empty() {
            return Err(invalid("strategies", "at least one strategy is required"));
        }
        for (i, s) in self.strategies.iter().enumerate() {
            if self.strategies[..i].contains(s) {
                return Err(invalid("strategies", format!("'{}' listed twice", s.as_str())));
            }
        }
        if !(self.rank_tol > 0.0 && self.rank_tol < 1.0) {
            return Err(invalid("rank_tol", "must lie in (0, 1)"));
        }
        if !(self.dl_noise_var > 0.0 && self.dl_noise_var.is_finite()) {
            return Err(invalid("dl_noise_var", "must be > 0"));
        }
        if self.t_max == Some(0) {
            return Err(invalid("t_max", "must be at least 1"));
        }
        if self.array.horizontal == 0 || self.array.vertical == 0 {
            return Err(invalid("array", "element counts must be at least 1"));
        }
        if !(self.array.spacing > 0.0 && self.array.spacing.is_finite()) {
            return Err(invalid("array.spacing", "must be > 0"));
        }
        if let Some(w) = &self.weights {
            if w.len() != self.users.len() {
                return Err(invalid(
                    "weights",
                    format!("{} weights for {} users", w.len(), self.users.len()),
                ));
            }
            if w.iter().any(|b| !(*b > 0.0)) {
                return Err(invalid("weights", "must be positive"));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(invalid("weights", format!("sum to {total}, expected 1")));
            }
        }
        for (k, u) in self.users.iter().enumerate() {
            let field = format!("users[{k}]");
            let sources = [
                u.clusters.is_some(),
                u.random_clusters.is_some(),
                u.covariance_file.is_some(),
            ]
            .iter()
            .filter(|&&b| b)
            .count();
            if sources != 1 {
                return Err(invalid(
                    field,
                    "exactly one of clusters, random_clusters, covariance_file is required",
                ));
            }
            if let Some(cs) = &u.clusters {
                if cs.is_empty() {
                    return Err(invalid(format!("{field}.clusters"), "cluster list is empty"));
                }
                for (c, spec) in cs.iter().enumerate() {
                    if !(spec.power > 0.0) {
                        return Err(invalid(format!("{field}.clusters[{c}].power"), "must be > 0"));
                    }
                    if !(spec.spread_deg > 0.0) {
                        return Err(invalid(
                            format!("{field}.clusters[{c}].spread_deg"),
                            "must be > 0",
                        ));
                    }
                }
            }
            if u.random_clusters == Some(0) {
                return Err(invalid(format!("{field}.random_clusters"), "must be at least 1"));
            }
            if let Some(db) = u.ul_snr_db {
                if !db.is_finite() {
                    return Err(invalid(format!("{field}.ul_snr_db"), "must be finite"));
                }
            }
        }
        if let Some(c) = &self.convergence {
            if c.m_list.is_empty() || c.m_list.contains(&0) {
                return Err(invalid("convergence.m_list", "needs positive antenna counts"));
            }
            if !c.dl_snr_db.is_finite() {
                return Err(invalid("convergence.dl_snr_db", "must be finite"));
            }
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

/// Reads, parses and validates a scenario file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    ScenarioConfig::from_toml(&text, base)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
ul_snr_db = 10.0
dl_snr_db = [0.0]
array = { horizontal = 4 }
[[users]]
clusters = [{ azimuth_deg = 10.0, spread_deg = 5.0 }]
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ScenarioConfig::from_toml(MINIMAL, ".").unwrap();
        assert_eq!(cfg.rank_tol, 1e-8);
        assert_eq!(cfg.dl_noise_var, 1.0);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.strategies.len(), 3);
        assert_eq!(cfg.criterion, CriterionSpec::Sum);
        assert_eq!(cfg.array.vertical, 1);
        assert_eq!(cfg.array.spacing, 0.5);
        assert_eq!(cfg.users[0].clusters.as_ref().unwrap()[0].power, 1.0);
    }

    #[test]
    fn rejects_bad_weights_with_field_name() {
        let text = format!("weights = [0.5, 0.6]\n{MINIMAL}\n[[users]]\nrandom_clusters = 2\n");
        match ScenarioConfig::from_toml(&text, ".") {
            Err(BenchError::Invalid { field, .. }) => assert_eq!(field, "weights"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = ScenarioConfig::from_toml("ul_snr_db = \n", ".").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
        let err = ScenarioConfig::from_toml(&format!("bogus = 1\n{MINIMAL}"), ".").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn rejects_ambiguous_user() {
        let text = MINIMAL.replace("clusters = [", "random_clusters = 2\nclusters = [");
        assert!(matches!(
            ScenarioConfig::from_toml(&text, "."),
            Err(BenchError::Invalid { field, .. }) if field == "users[0]"
        ));
    }

    #[test]
    fn round_trip_is_idempotent_and_hash_tracks_content() {
        let cfg = ScenarioConfig::from_toml(MINIMAL, ".").unwrap();
        let again = ScenarioConfig::from_toml(&cfg.to_toml(), ".").unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.content_hash(), again.content_hash());
        let reformatted = format!("# comment\n{}", MINIMAL.replace("= 10.0", "=   10.0"));
        assert_eq!(
            ScenarioConfig::from_toml(&reformatted, ".")
                .unwrap()
                .content_hash(),
            cfg.content_hash()
        );
        let mut changed = cfg.clone();
        changed.seed = 1;
        assert_ne!(changed.content_hash(), cfg.content_hash());
    }
}
