//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use ruelle::escape::{EscapeFunction, OrderParams};
use ruelle::harness::campaign::{Campaign, CampaignSettings};
use ruelle::model::{CatMap, MappingTorusFlow, TimeChange};
use ruelle::operator::Truncation;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub matrix: [[i64; 2]; 2],
    pub time_change: TimeChange,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            matrix: [[2, 1], [1, 1]],
            time_change: TimeChange::cosine(1.0, 0.2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub k_max: u32,
    pub p_max: u32,
    pub j_max: u32,
    pub h: f64,
    /// Largest accepted relative eigen-residual.
    pub residual_tolerance: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            k_max: 8,
            p_max: 2,
            j_max: 32,
            h: 0.1,
            residual_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Also write each sector matrix in the dense binary layout.
    pub dump_matrices: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("ruelle-out"),
            dump_matrices: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelSection,
    pub escape: OrderParams,
    pub solver: SolverSection,
    pub campaign: CampaignSettings,
    pub output: OutputSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn truncation(&self) -> Truncation {
        Truncation {
            k_max: self.solver.k_max,
            p_max: self.solver.p_max,
            j_max: self.solver.j_max,
        }
    }

    pub fn flow(&self) -> Result<MappingTorusFlow, ConfigError> {
        let m = self.model.matrix;
        let cat = CatMap::new(m[0][0], m[0][1], m[1][0], m[1][1]).map_err(invalid)?;
        MappingTorusFlow::new(cat, self.model.time_change.clone()).map_err(invalid)
    }

    pub fn escape(&self) -> Result<EscapeFunction, ConfigError> {
        EscapeFunction::new(self.flow()?, self.escape.clone()).map_err(invalid)
    }

    pub fn campaign(&self) -> Result<Campaign, ConfigError> {
        Ok(Campaign::new(
            self.escape()?,
            self.truncation(),
            self.campaign.clone(),
        ))
    }

    /// Every semantic check that does not need a computation.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.escape()?;
        self.truncation().validate().map_err(invalid)?;
        EscapeFunction::new(self.flow()?, self.campaign.alt_escape.clone()).map_err(invalid)?;
        let s = &self.solver;
        let c = &self.campaign;
        let positive = [
            ("solver.h", s.h),
            ("solver.residual_tolerance", s.residual_tolerance),
            ("campaign.h", c.h),
            ("campaign.beta", c.beta),
            ("campaign.disk_b", c.disk_b),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if c.e == 0.0 || !c.e.is_finite() {
            return Err(ConfigError::Invalid("campaign.e must be finite and nonzero".into()));
        }
        if c.alphas.iter().any(|a| !(*a > 0.0)) || c.ims_h.iter().chain(&c.coherent_h).any(|h| !(*h > 0.0)) {
            return Err(ConfigError::Invalid("alphas and h lists must be positive".into()));
        }
        ruelle::harness::check_grid(&c.alphas).map_err(invalid)?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of everything that affects
    /// results. The output section is left out.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(&(&self.model, &self.escape, &self.solver, &self.campaign))
            .expect("configuration serializes");
        hex::encode(Sha256::digest(&json))
    }
}

fn invalid(e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}
