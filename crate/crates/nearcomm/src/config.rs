//! Experiment configuration, validation and hashing.

use nearcomm_core::instance::BlockStyle;
use nearcomm_core::oracle::DEFAULT_CAP;
use nearcomm_core::rounding::{RoundingConfig, RoundingMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{field, Error, FieldError, Result};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "NEARCOMM_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Structural,
    Penalty,
}

impl From<ModeName> for RoundingMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::Structural => RoundingMode::Structural,
            ModeName::Penalty => RoundingMode::Penalty,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum StyleName {
    Auto,
    Classical,
    Factored,
}

impl From<StyleName> for BlockStyle {
    fn from(s: StyleName) -> Self {
        match s {
            StyleName::Auto => BlockStyle::Auto,
            StyleName::Classical => BlockStyle::Classical,
            StyleName::Factored => BlockStyle::Factored,
        }
    }
}

/// Everything that determines the output bytes of a pipeline run or a scan.
/// Worker counts and output paths are deliberately absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub d: usize,
    pub degree: usize,
    pub deltas: Vec<f64>,
    /// Ensemble size per delta.
    pub seeds: usize,
    pub master_seed: u64,
    pub r: f64,
    pub mode: ModeName,
    pub style: StyleName,
    pub rounding_tol: f64,
    pub certificate_tol: f64,
    pub cluster_gap: f64,
    /// Largest `d^n` handed to exact diagonalization; larger runs leave the
    /// ground-energy column empty.
    pub oracle_cap: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 8,
            d: 4,
            degree: 3,
            deltas: vec![0.0, 1e-3, 1e-2, 1e-1],
            seeds: 20,
            master_seed: 0,
            r: 0.5,
            mode: ModeName::Structural,
            style: StyleName::Auto,
            rounding_tol: 1e-10,
            certificate_tol: 1e-9,
            cluster_gap: 1e-6,
            oracle_cap: DEFAULT_CAP,
        }
    }
}

impl ExperimentConfig {
    /// All field problems at once.
    pub fn problems(&self) -> Vec<FieldError> {
        let mut out = Vec::new();
        if self.n < 2 {
            out.push(field("n", "need at least 2 vertices"));
        }
        if self.d < 2 {
            out.push(field("d", "qudit dimension must be at least 2"));
        }
        if self.degree == 0 || self.degree >= self.n.max(1) {
            out.push(field("degree", format!("must lie in 1..{}", self.n)));
        } else if !(self.n * self.degree).is_multiple_of(2) {
            out.push(field("degree", format!("n * degree = {} must be even", self.n * self.degree)));
        }
        if self.deltas.is_empty() {
            out.push(field("deltas", "empty delta list"));
        }
        for (i, &d) in self.deltas.iter().enumerate() {
            if !(0.0..=2.0).contains(&d) {
                out.push(field(format!("deltas[{i}]"), format!("{d} is outside [0, 2]")));
            }
        }
        if self.seeds == 0 {
            out.push(field("seeds", "need at least one seed"));
        }
        if !(self.r > 0.0 && self.r < 1.0) {
            out.push(field("r", format!("{} is outside (0, 1)", self.r)));
        }
        for (name, v) in [("rounding_tol", self.rounding_tol), ("certificate_tol", self.certificate_tol), ("cluster_gap", self.cluster_gap)] {
            if !(v > 0.0 && v < 1.0) {
                out.push(field(name, format!("{v} is outside (0, 1)")));
            }
        }
        if self.oracle_cap == 0 {
            out.push(field("oracle_cap", "must be positive"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn rounding(&self) -> RoundingConfig {
        RoundingConfig {
            mode: self.mode.into(),
            tol: self.rounding_tol,
            certificate_tol: self.certificate_tol,
            ..RoundingConfig::default()
        }
    }
}

/// Worker count: explicit value, else the environment variable, else the
/// number of available cores.
pub fn resolve_workers(explicit: Option<usize>) -> usize {
    explicit
        .or_else(|| std::env::var(WORKERS_ENV).ok().and_then(|s| s.parse().ok()))
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, usize::from))
}
