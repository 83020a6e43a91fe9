use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::twolevel::TwoLevelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[value(name = "two_level")]
    TwoLevel,
    Vanilla,
    Centralized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionSpec {
    /// Number of regions for the built-in partitioner.
    pub regions: usize,
    /// Assignment file; overrides `regions`.
    pub assignment: Option<PathBuf>,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec {
            regions: 2,
            assignment: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VanillaConfig {
    pub rho: f64,
    pub max_iter: usize,
    /// Convergence is reported when `‖Ax + Bx̄‖₂ ≤ √d·ε` at the end.
    pub epsilon: f64,
}

impl Default for VanillaConfig {
    fn default() -> Self {
        VanillaConfig {
            rho: 1000.0,
            max_iter: 2000,
            epsilon: 2e-4,
        }
    }
}

/// Everything `solve` needs. Read from TOML; command-line flags override
/// individual fields. Relative paths are taken relative to the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// MATPOWER `.m` or JSON case file.
    pub case: Option<PathBuf>,
    pub partition: PartitionSpec,
    pub algorithm: Algorithm,
    pub two_level: TwoLevelConfig,
    pub vanilla: VanillaConfig,
    pub output: PathBuf,
    /// Seed of the partitioner.
    pub seed: u64,
    /// Worker threads; 0 runs the sequential schedule. Overrides
    /// `two_level.threads`.
    pub threads: usize,
    /// Also solve the full problem centrally and report the gap.
    pub gap: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            case: None,
            partition: PartitionSpec::default(),
            algorithm: Algorithm::TwoLevel,
            two_level: TwoLevelConfig::default(),
            vanilla: VanillaConfig::default(),
            output: PathBuf::from("out"),
            seed: 0,
            threads: 0,
            gap: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = cfg.case.as_mut() {
            rebase(p);
        }
        if let Some(p) = cfg.partition.assignment.as_mut() {
            rebase(p);
        }
        rebase(&mut cfg.output);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.case.is_none() {
            return Err(Error::Config("no case file given".into()));
        }
        if self.partition.regions == 0 && self.partition.assignment.is_none() {
            return Err(Error::Config("regions must be positive".into()));
        }
        match self.algorithm {
            Algorithm::TwoLevel => self.two_level.validate()?,
            Algorithm::Vanilla => {
                let v = &self.vanilla;
                if !(v.rho > 0.0) || v.max_iter == 0 || !(v.epsilon > 0.0) {
                    return Err(Error::Config("vanilla needs rho > 0, max_iter > 0 and epsilon > 0".into()));
                }
            }
            Algorithm::Centralized => {}
        }
        Ok(())
    }
}
