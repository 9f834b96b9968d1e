//! The JSON run configuration.

use std::path::{Path, PathBuf};

use orb_core::dataset::{PredictorSet, Target};
use orb_core::features::FeatureConfig;
use orb_core::pipeline::{BasisConfig, RunSettings};
use orb_core::stamp::{Basin, SampleFilter};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub stamps_dir: PathBuf,
    pub track_csv: PathBuf,
    pub ships_csv: PathBuf,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Flags {
    /// Swap predictions within rows in the permutation tests.
    pub paired: bool,
    /// Pick the largest penalty within one standard error of the CV minimum.
    pub one_se: bool,
    /// Report permutation p-values as `(1 + count) / (1 + B)`.
    pub smooth_p_values: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Mandatory; every random choice in the run derives from it.
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub filter: SampleFilter,
    /// Keep EOFs up to this explained-variance fraction instead of the fixed
    /// predictor-table counts.
    #[serde(default)]
    pub var_target: Option<f64>,
    /// Sets fitted by `orb fit`. Defaults to all four.
    #[serde(default = "all_sets")]
    pub predictor_sets: Vec<PredictorSet>,
    #[serde(default = "default_target")]
    pub target: Target,
    #[serde(default = "default_basin")]
    pub basin: Basin,
    #[serde(default)]
    pub flags: Flags,
    #[serde(default = "default_split_year")]
    pub split_year: i32,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_bootstrap")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_permutations")]
    pub permutation_rounds: usize,
    #[serde(default)]
    pub features: FeatureConfig,
}

fn all_sets() -> Vec<PredictorSet> {
    PredictorSet::ALL.to_vec()
}
fn default_target() -> Target {
    Target::RI
}
fn default_basin() -> Basin {
    Basin::NAL
}
fn default_split_year() -> i32 {
    2010
}
fn default_folds() -> usize {
    10
}
fn default_bootstrap() -> usize {
    250
}
fn default_permutations() -> usize {
    1000
}

impl RunConfig {
    /// Reads and validates a configuration file. Relative paths inside it
    /// resolve against the file's directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.paths.stamps_dir,
            &mut cfg.paths.track_csv,
            &mut cfg.paths.ships_csv,
            &mut cfg.paths.output_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Validation(m));
        if !self.paths.stamps_dir.is_dir() {
            return bad(format!("stamps_dir {} is not a directory", self.paths.stamps_dir.display()));
        }
        for (name, p) in [("track_csv", &self.paths.track_csv), ("ships_csv", &self.paths.ships_csv)] {
            if !p.is_file() {
                return bad(format!("{name} {} does not exist", p.display()));
            }
        }
        self.filter.validate().map_err(CliError::Validation)?;
        if let Some(t) = self.var_target {
            if !(t > 0.0 && t <= 1.0) {
                return bad(format!("var_target must lie in (0, 1], got {t}"));
            }
        }
        if self.predictor_sets.is_empty() {
            return bad("predictor_sets is empty".into());
        }
        if self.folds < 2 {
            return bad(format!("folds must be at least 2, got {}", self.folds));
        }
        if self.bootstrap_resamples == 0 || self.permutation_rounds == 0 {
            return bad("bootstrap_resamples and permutation_rounds must be positive".into());
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn basis_config(&self) -> BasisConfig {
        match self.var_target {
            Some(t) => BasisConfig::variance_target(t),
            None => BasisConfig::default(),
        }
    }

    pub fn settings(&self) -> RunSettings {
        RunSettings {
            seed: self.seed,
            target: self.target,
            basin: self.basin,
            split_year: self.split_year,
            filter: self.filter,
            folds: self.folds,
            one_se: self.flags.one_se,
            bootstrap_resamples: self.bootstrap_resamples,
            permutation_rounds: self.permutation_rounds,
            paired: self.flags.paired,
            add_one: self.flags.smooth_p_values,
            ..RunSettings::default()
        }
    }

    pub fn out(&self, rel: &str) -> PathBuf {
        self.paths.output_dir.join(rel)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_resolve_against_the_config_file() {
        let tmp = tempfile::tempdir().unwrap();
        std::fs::create_dir(tmp.path().join("st")).unwrap();
        std::fs::write(tmp.path().join("t.csv"), "").unwrap();
        std::fs::write(tmp.path().join("s.csv"), "").unwrap();
        let body = r#"{"seed": 9, "paths": {"stamps_dir": "st", "track_csv": "t.csv", "ships_csv": "s.csv", "output_dir": "out"}}"#;
        let p = tmp.path().join("c.json");
        std::fs::write(&p, body).unwrap();
        let cfg = RunConfig::load(&p).unwrap();
        assert_eq!(cfg.paths.output_dir, tmp.path().join("out"));
        assert_eq!(cfg.predictor_sets.len(), 4);
        assert_eq!(cfg.settings().permutation_rounds, 1000);
        assert_eq!(cfg.settings().bootstrap_resamples, 250);

        let mut other = cfg.clone();
        assert_eq!(other.hash(), cfg.hash());
        other.seed = 10;
        assert_ne!(other.hash(), cfg.hash());
    }
}
