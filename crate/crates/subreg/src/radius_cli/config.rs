//! Experiment configuration: one TOML file per run.
//!
//! ```toml
//! seed = 7
//! task = "verify_radius"
//! norm = "l1"
//!
//! [map]
//! id = "identity"
//!
//! [ladder]
//! depth = 12
//!
//! [perturbation]
//! kind = "ssr"
//! ```
//!
//! Unknown keys anywhere are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geometry::{NormKind, ScaleLadder};
use crate::mappings::{build_map, catalog, CatalogEntry, GraphPoint, MapError, MapSpec};
use crate::perturb::WitnessKind;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Moduli,
    Constants,
    Relations,
    Semismooth,
    BuildPerturbation,
    VerifyRadius,
    EckartYoung,
}

impl Task {
    fn needs_map(self) -> bool {
        self != Task::EckartYoung
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseConfig {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Ladder overrides; unset fields keep the library defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    pub r0: Option<f64>,
    pub theta: Option<f64>,
    pub depth: Option<usize>,
    pub samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    /// Omitted in `verify_radius` to run every class.
    pub kind: Option<WitnessKind>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EckartYoungConfig {
    pub count: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Full,
    Csv,
    #[default]
    Summary,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<String>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub task: Task,
    pub norm: NormKind,
    pub map: Option<MapSpec>,
    pub base: Option<BaseConfig>,
    #[serde(default)]
    pub ladder: LadderConfig,
    pub perturbation: Option<PerturbationConfig>,
    pub eckart_young: Option<EckartYoungConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if self.task.needs_map() {
            let Some(spec) = &self.map else {
                return bad("this task needs a [map] table");
            };
            let map = build_map(spec)?;
            let base = self.base_point()?;
            if base.x.len() != map.dim_x() || base.y.len() != map.dim_y() {
                return bad("base point dimensions do not match the map");
            }
            if !map.contains(&base.x, &base.y, crate::mappings::DEFAULT_TOL) {
                return bad("base point is not on the graph");
            }
        }
        self.ladder().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        match self.task {
            Task::BuildPerturbation => match &self.perturbation {
                Some(PerturbationConfig { kind: Some(_), gamma: Some(g) }) if *g > 0.0 && g.is_finite() => {}
                _ => return bad("build_perturbation needs [perturbation] with kind and a positive gamma"),
            },
            Task::VerifyRadius => {
                if self.catalog_entry().is_none() {
                    return bad("verify_radius needs a catalog map at its catalog base point");
                }
                if self.perturbation.as_ref().is_some_and(|p| p.gamma.is_some()) {
                    return bad("verify_radius chooses its own gamma values");
                }
            }
            Task::EckartYoung => match &self.eckart_young {
                Some(e) if e.count > 0 && e.dim > 0 => {}
                _ => return bad("eckart_young needs [eckart_young] with positive count and dim"),
            },
            _ => {
                if self.perturbation.is_some() {
                    return bad("[perturbation] only applies to build_perturbation and verify_radius");
                }
            }
        }
        if self.task != Task::EckartYoung && self.eckart_young.is_some() {
            return bad("[eckart_young] only applies to the eckart_young task");
        }
        Ok(())
    }

    pub fn ladder(&self) -> ScaleLadder {
        let d = ScaleLadder::default();
        ScaleLadder {
            r0: self.ladder.r0.unwrap_or(d.r0),
            theta: self.ladder.theta.unwrap_or(d.theta),
            depth: self.ladder.depth.unwrap_or(d.depth),
            samples_per_scale: self.ladder.samples.unwrap_or(d.samples_per_scale),
            seed: self.seed,
        }
    }

    /// The catalog entry whose spec matches `map`, if any, when the base
    /// point is the entry's own.
    pub fn catalog_entry(&self) -> Option<CatalogEntry> {
        let spec = self.map.as_ref()?;
        let entry = catalog().into_iter().find(|e| &e.spec == spec)?;
        match &self.base {
            Some(b) if b.x != entry.base.x || b.y != entry.base.y => None,
            _ => Some(entry),
        }
    }

    /// The explicit base point, else the catalog base, else the origin.
    pub fn base_point(&self) -> Result<GraphPoint, ConfigError> {
        if let Some(b) = &self.base {
            return Ok(GraphPoint::new(b.x.clone(), b.y.clone()));
        }
        if let Some(e) = self.catalog_entry() {
            return Ok(e.base);
        }
        let spec = self.map.as_ref().ok_or_else(|| ConfigError::Invalid("no map".into()))?;
        let m = build_map(spec)?;
        Ok(GraphPoint::new(vec![0.0; m.dim_x()], vec![0.0; m.dim_y()]))
    }

    /// Hex sha256 over the canonical JSON form and the crate version.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(env!("CARGO_PKG_VERSION").as_bytes());
        h.update(serde_json::to_vec(self).expect("config serializes"));
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_rejects_unknown_keys() {
        let ok = "seed = 1\ntask = \"moduli\"\nnorm = \"l1\"\n[map]\nid = \"identity\"\n";
        let cfg = ExperimentConfig::from_toml(ok).unwrap();
        assert_eq!(cfg.base_point().unwrap(), GraphPoint::new(vec![0.0], vec![0.0]));
        assert!(ExperimentConfig::from_toml(&format!("{ok}colour = 3\n")).is_err());
        assert!(ExperimentConfig::from_toml(&ok.replace("seed = 1\n", "")).is_err());
        let bad_map = ok.replace("identity", "nope");
        assert!(ExperimentConfig::from_toml(&bad_map).is_err());
        let typo = format!("{ok}[ladder]\ndepht = 3\n");
        assert!(ExperimentConfig::from_toml(&typo).is_err());
    }

    #[test]
    fn task_field_combinations() {
        let head = "seed = 1\nnorm = \"l1\"\n[map]\nid = \"zero\"\n";
        let build = format!("task = \"build_perturbation\"\n{head}");
        assert!(ExperimentConfig::from_toml(&build).is_err());
        let build = format!("{build}[perturbation]\nkind = \"lip\"\ngamma = 0.1\n");
        assert!(ExperimentConfig::from_toml(&build).is_ok());
        let off_graph = format!("task = \"moduli\"\n{head}[base]\nx = [0.0]\ny = [1.0]\n");
        assert!(ExperimentConfig::from_toml(&off_graph).is_err());
        let ey = "seed = 1\nnorm = \"l2\"\ntask = \"eckart_young\"\n[eckart_young]\ncount = 2\ndim = 3\n";
        assert!(ExperimentConfig::from_toml(ey).is_ok());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::from_toml("seed = 1\ntask = \"moduli\"\nnorm = \"l1\"\n[map]\nid = \"identity\"\n")
            .unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
    }
}
