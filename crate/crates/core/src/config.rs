//! Run configuration: one TOML table drives the CLI commands.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::crossfit::LearnerSet;
use crate::dataset::{DgpSpec, ModelKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Estimate,
    Simulate,
    Coverage,
}

/// Estimator variants a simulation study can request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Orthogonal moments on cross-fitted nuisances.
    OrthogonalCrossfit,
    /// Orthogonal moments with nuisances fit and evaluated on the full
    /// sample.
    OrthogonalNosplit,
    /// Plug-in moments (no correction term) on cross-fitted nuisances.
    Naive,
    /// Infeasible benchmark at the exact population nuisances.
    Oracle,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::OrthogonalCrossfit => "orthogonal_crossfit",
            Variant::OrthogonalNosplit => "orthogonal_nosplit",
            Variant::Naive => "naive",
            Variant::Oracle => "oracle",
        }
    }
}

fn default_k() -> usize {
    2
}
fn default_grid_size() -> usize {
    64
}
fn default_b() -> usize {
    300
}
fn default_alpha() -> f64 {
    0.05
}
fn default_m() -> usize {
    1
}
fn default_variants() -> Vec<Variant> {
    vec![Variant::OrthogonalCrossfit]
}
fn default_output_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    /// Synthetic design for the simulation commands.
    pub dgp: Option<DgpSpec>,
    /// CSV input for the estimate command.
    pub data_path: Option<String>,
    #[serde(default)]
    pub learners: LearnerSet,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default = "default_b")]
    pub b: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Monte Carlo replications.
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_variants")]
    pub estimator_variants: Vec<Variant>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::schema(None, format!("config: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self, command: Command) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha must lie in (0,1)"));
        }
        if self.m < 1 {
            return Err(Error::invalid("m must be at least 1"));
        }
        if self.k < 2 {
            return Err(Error::invalid("k must be at least 2"));
        }
        match command {
            Command::Estimate => {
                if self.data_path.is_none() || self.dgp.is_some() {
                    return Err(Error::invalid(
                        "estimate needs data_path and no dgp table",
                    ));
                }
            }
            Command::Simulate | Command::Coverage => {
                if self.dgp.is_none() || self.data_path.is_some() {
                    return Err(Error::invalid(
                        "simulation commands need a dgp table and no data_path",
                    ));
                }
                let dgp = self.dgp.as_ref().unwrap();
                dgp.validate()?;
                if dgp.model != self.model {
                    return Err(Error::invalid("dgp model must match the run model"));
                }
            }
        }
        if command == Command::Coverage {
            if self.m < 50 {
                return Err(Error::invalid("coverage needs m >= 50"));
            }
            if self.b < 100 {
                return Err(Error::invalid("coverage needs b >= 100"));
            }
        }
        if self.estimator_variants.is_empty() {
            return Err(Error::invalid("at least one estimator variant is required"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_roundtrip_with_defaults() {
        let text = r#"
model = "plp"

[dgp]
model = "plp"
n = 500
p = 20
sparsity = 5
beta0 = [1.0]
interval_width = 1.0
noise_sd = 1.0
residual_sd = 1.0
seed = 3
"#;
        let cfg = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.k, 2);
        assert_eq!(cfg.b, 300);
        assert_eq!(cfg.estimator_variants, vec![Variant::OrthogonalCrossfit]);
        cfg.validate(Command::Simulate).unwrap();
        assert!(cfg.validate(Command::Estimate).is_err());
        assert!(cfg.validate(Command::Coverage).is_err(), "m = 1 fails coverage");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = "model = \"plp\"\nnope = 3\n";
        assert!(RunConfig::from_toml_str(text).is_err());
    }

    #[test]
    fn variant_names_match_serde() {
        let cfg = RunConfig::from_toml_str(
            "model = \"plp\"\ndata_path = \"x.csv\"\nestimator_variants = [\"naive\", \"oracle\"]\n",
        )
        .unwrap();
        assert_eq!(cfg.estimator_variants, vec![Variant::Naive, Variant::Oracle]);
    }
}
