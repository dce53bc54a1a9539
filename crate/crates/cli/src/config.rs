//! Experiment configuration: one TOML file with nested blocks. Unknown keys
//! are rejected; every field has a default printed by `--print-defaults`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use pco::besov::{BesovBall, SignalKind};
use pco::penalty::Strategy;
use pco::regression::{TestFunction, WaveletBasis};
use pco::NoiseKind;

/// A configuration problem; the CLI exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

macro_rules! invalid {
    ($($arg:tt)*) => {
        return Err(ConfigError(format!($($arg)*)))
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Estimate,
    #[default]
    Simulate,
    Rates,
    Concentration,
    Regress,
    Calibrate,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Command::Estimate => "estimate",
            Command::Simulate => "simulate",
            Command::Rates => "rates",
            Command::Concentration => "concentration",
            Command::Regress => "regress",
            Command::Calibrate => "calibrate",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignalBlock {
    /// dense | sparse | mixed
    pub kind: String,
    pub s: f64,
    pub r: f64,
    #[serde(rename = "R")]
    pub radius: f64,
    /// Generator seed; the experiment seed when absent.
    pub seed: Option<u64>,
    /// Top level `J` of `Λ^(N)`; derived from `(R/ε)²` when absent.
    pub top_level: Option<i32>,
}

impl Default for SignalBlock {
    fn default() -> Self {
        Self {
            kind: "dense".into(),
            s: 1.0,
            r: 2.0,
            radius: 1.0,
            seed: None,
            top_level: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseBlock {
    /// gaussian | rademacher | uniform | uniform:<c>
    pub distribution: String,
    pub epsilon: f64,
}

impl Default for NoiseBlock {
    fn default() -> Self {
        Self {
            distribution: "gaussian".into(),
            epsilon: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyBlock {
    pub p: f64,
    /// Any of H, I, S, flat, threshold:<t>.
    pub strategies: Vec<String>,
    /// dyadic | constant
    pub weights: String,
    /// Calibrated constants for non-tabulated (distribution, p).
    pub moments_file: Option<PathBuf>,
    pub k_i: Option<f64>,
    pub k_s: Option<f64>,
    pub a: Option<f64>,
}

impl Default for PenaltyBlock {
    fn default() -> Self {
        Self {
            p: 2.0,
            strategies: vec!["H".into(), "I".into(), "S".into()],
            weights: "dyadic".into(),
            moments_file: None,
            k_i: None,
            k_s: None,
            a: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepBlock {
    pub epsilons: Vec<f64>,
    pub replicates: usize,
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self {
            epsilons: vec![0.2, 0.1, 0.05, 0.025],
            replicates: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConcentrationBlock {
    #[serde(rename = "D")]
    pub block_sizes: Vec<usize>,
    pub x: Vec<f64>,
    pub replicates: usize,
}

impl Default for ConcentrationBlock {
    fn default() -> Self {
        Self {
            block_sizes: vec![10, 50, 200],
            x: vec![1.0, 2.0, 3.0, 5.0],
            replicates: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateBlock {
    #[serde(rename = "D")]
    pub block_sizes: Vec<usize>,
    pub x: Vec<f64>,
    pub replicates: usize,
    pub confidence: f64,
    /// Recorded in the moments table as the calibration date.
    pub date: String,
}

impl Default for CalibrateBlock {
    fn default() -> Self {
        let d = pco::concentration::CalibrationSettings::default();
        Self {
            block_sizes: d.d_grid,
            x: d.x_grid,
            replicates: d.replicates,
            confidence: d.confidence,
            date: "undated".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressionBlock {
    /// blocks | bumps | ramp | constant | steps | rough | zero
    pub function: String,
    /// CSV of `(i, x)` responses; replaces the named function.
    pub input: Option<PathBuf>,
    pub n: usize,
    pub sigma: f64,
    pub basis: String,
    pub top_level: Option<i32>,
}

impl Default for RegressionBlock {
    fn default() -> Self {
        Self {
            function: "blocks".into(),
            input: None,
            n: 1024,
            sigma: 0.5,
            basis: "haar".into(),
            top_level: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IoBlock {
    pub out_dir: PathBuf,
    /// Observation CSV read by `estimate`.
    pub observations: Option<PathBuf>,
}

impl Default for IoBlock {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            observations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: u64,
    pub signal: SignalBlock,
    pub noise: NoiseBlock,
    pub penalty: PenaltyBlock,
    pub sweep: SweepBlock,
    pub concentration: ConcentrationBlock,
    pub calibrate: CalibrateBlock,
    pub regression: RegressionBlock,
    pub io: IoBlock,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// First 16 hex digits of SHA-256 over the canonical serialisation.
    /// `io.out_dir` is excluded: where results go does not change them.
    pub fn hash(&self) -> String {
        let mut canon = self.clone();
        canon.io.out_dir = IoBlock::default().out_dir;
        let digest = Sha256::digest(canon.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn noise_kind(&self) -> Result<NoiseKind, ConfigError> {
        self.noise
            .distribution
            .parse()
            .map_err(|e| ConfigError(format!("noise.distribution: {e}")))
    }

    pub fn strategies(&self) -> Result<Vec<Strategy>, ConfigError> {
        if self.penalty.strategies.is_empty() {
            invalid!("penalty.strategies: at least one strategy is required");
        }
        self.penalty
            .strategies
            .iter()
            .map(|s| s.parse().map_err(|e| ConfigError(format!("penalty.strategies: {e}"))))
            .collect()
    }

    pub fn signal_kind(&self) -> Result<SignalKind, ConfigError> {
        self.signal
            .kind
            .parse()
            .map_err(|e| ConfigError(format!("signal.kind: {e}")))
    }

    pub fn ball(&self) -> Result<BesovBall, ConfigError> {
        BesovBall::new(self.signal.s, self.signal.r, self.signal.radius)
            .map_err(|e| ConfigError(format!("signal: {e}")))
    }

    pub fn weights(&self) -> Result<pco::WeightScheme, ConfigError> {
        match self.penalty.weights.as_str() {
            "dyadic" => Ok(pco::WeightScheme::Dyadic { p: self.penalty.p }),
            "constant" => Ok(pco::WeightScheme::Constant),
            other => invalid!("penalty.weights: expected dyadic or constant, got {other:?}"),
        }
    }

    pub fn function(&self) -> Result<TestFunction, ConfigError> {
        self.regression
            .function
            .parse()
            .map_err(|e| ConfigError(format!("regression.function: {e}")))
    }

    pub fn basis(&self) -> Result<WaveletBasis, ConfigError> {
        self.regression
            .basis
            .parse()
            .map_err(|e| ConfigError(format!("regression.basis: {e}")))
    }

    /// Domain checks that do not depend on the command.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = self.penalty.p;
        if !(p >= 1.0 && p.is_finite()) {
            invalid!("penalty.p: must be a finite number >= 1, got {p}");
        }
        let eps = self.noise.epsilon;
        if !(eps > 0.0 && eps <= 1.0) {
            invalid!("noise.epsilon: must lie in (0, 1], got {eps}");
        }
        self.noise_kind()?;
        self.strategies()?;
        self.weights()?;
        self.signal_kind()?;
        self.ball()?;
        if let Some(j) = self.signal.top_level {
            if !(0..=20).contains(&j) {
                invalid!("signal.top_level: must lie in 0..=20, got {j}");
            }
        }
        for (key, v) in [("penalty.k_i", self.penalty.k_i), ("penalty.k_s", self.penalty.k_s), ("penalty.a", self.penalty.a)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    invalid!("{key}: must be > 0, got {v}");
                }
            }
        }
        if self.sweep.replicates < 2 {
            invalid!("sweep.replicates: need at least 2");
        }
        if self.concentration.replicates < 2 {
            invalid!("concentration.replicates: need at least 2");
        }
        if self.concentration.block_sizes.contains(&0) {
            invalid!("concentration.D: block sizes must be >= 1");
        }
        if self.calibrate.block_sizes.contains(&0) {
            invalid!("calibrate.D: block sizes must be >= 1");
        }
        if self.concentration.x.iter().chain(&self.calibrate.x).any(|&x| !(x >= 1.0)) {
            invalid!("concentration.x / calibrate.x: values must be >= 1");
        }
        if !(self.calibrate.confidence > 0.0 && self.calibrate.confidence < 1.0) {
            invalid!("calibrate.confidence: must lie in (0, 1)");
        }
        if self.calibrate.date.split_whitespace().count() != 1 || self.calibrate.date.contains(',') {
            invalid!("calibrate.date: must be a single token without commas");
        }
        let n = self.regression.n;
        if n < 2 || !n.is_power_of_two() {
            invalid!("regression.n: must be a power of two >= 2, got {n}");
        }
        if !(self.regression.sigma >= 0.0 && self.regression.sigma.is_finite()) {
            invalid!("regression.sigma: must be >= 0");
        }
        self.function()?;
        self.basis()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let d = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&d.to_toml()).unwrap();
        assert_eq!(back, d);
        d.validate().unwrap();
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::from_toml("seed = 1\n[noise]\nepsilonn = 0.1\n").unwrap_err();
        assert!(err.0.contains("epsilonn"), "{err}");
        assert!(err.0.contains("line 3") || err.0.contains(":3:") || err.0.contains("3 |"), "{err}");
    }

    #[test]
    fn partial_blocks_take_defaults() {
        let c = ExperimentConfig::from_toml("command = \"rates\"\n[penalty]\np = 4.0\n").unwrap();
        assert_eq!(c.command, Command::Rates);
        assert_eq!(c.penalty.p, 4.0);
        assert_eq!(c.penalty.strategies.len(), 3);
        assert_eq!(c.noise, NoiseBlock::default());
    }

    #[test]
    fn validation_names_fields() {
        let mut c = ExperimentConfig::default();
        c.noise.epsilon = 2.0;
        assert!(c.validate().unwrap_err().0.starts_with("noise.epsilon"));
        let mut c = ExperimentConfig::default();
        c.penalty.strategies = vec!["Q".into()];
        assert!(c.validate().unwrap_err().0.starts_with("penalty.strategies"));
        let mut c = ExperimentConfig::default();
        c.regression.n = 1000;
        assert!(c.validate().unwrap_err().0.starts_with("regression.n"));
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.io.out_dir = PathBuf::from("elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.seed = 9;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
