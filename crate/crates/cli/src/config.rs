use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Result;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use weylcap::capacity::{lattice_extent, MAX_ATOMS};
use weylcap::SweepMode;

/// A problem with the run configuration or command line; exits with status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn bad_key(key: &str, msg: impl fmt::Display) -> anyhow::Error {
    config_error(format!("invalid `{key}`: {msg}"))
}

/// Reads a JSON or TOML config, chosen by the file extension.
pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    let parsed = if is_toml {
        toml::from_str(&text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| config_error(format!("config {}: {e}", path.display())))
}

/// Loads the config when a path is given, otherwise parses an empty table.
pub fn load_or_default<T: DeserializeOwned>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => load(p),
        None => serde_json::from_str("{}").map_err(|e| config_error(format!("no --config given: {e}"))),
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad_key(key, format!("must be positive and finite, got {v}")))
    }
}

fn rate(key: &str, v: f64) -> Result<()> {
    if v >= 1.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad_key(key, format!("decay rates must be at least 1, got {v}")))
    }
}

fn redundancy(rho: f64) -> Result<()> {
    if rho > 1.0 && rho.is_finite() {
        Ok(())
    } else {
        Err(bad_key(
            "rho",
            format!("Balian–Low regime: rho must exceed 1 for a localized orthonormal transmit set, got {rho}"),
        ))
    }
}

fn grid(n: usize, dt: Option<f64>) -> Result<()> {
    if n < 16 {
        return Err(bad_key("grid_n", format!("must be at least 16, got {n}")));
    }
    if let Some(dt) = dt {
        positive("grid_dt", dt)?;
    }
    Ok(())
}

fn default_one() -> f64 {
    1.0
}

fn default_grid_n() -> usize {
    weylcap::gabor::DEFAULT_GRID_N
}

fn default_max_atoms() -> usize {
    MAX_ATOMS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalingConfig {
    /// Gaussian scale `s` of the window.
    #[serde(default = "default_one")]
    pub s: f64,
    pub rho: f64,
    /// Base time step `a`; the frequency step is `1/a`.
    #[serde(default = "default_one")]
    pub a: f64,
    /// Gram deviation is measured over `|k|, |l| <= gram_extent`.
    #[serde(default = "default_gram_extent")]
    pub gram_extent: i64,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    #[serde(default)]
    pub grid_dt: Option<f64>,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

fn default_gram_extent() -> i64 {
    3
}

impl SignalingConfig {
    pub fn validate(&self) -> Result<()> {
        positive("s", self.s)?;
        redundancy(self.rho)?;
        positive("a", self.a)?;
        if !(0..=20).contains(&self.gram_extent) {
            return Err(bad_key(
                "gram_extent",
                format!("must lie in 0..=20, got {}", self.gram_extent),
            ));
        }
        grid(self.grid_n, self.grid_dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    SeparableExponential,
    LtiLimitFamily,
    Identity,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityConfig {
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    /// Window scale; `(beta/alpha)^2` when absent.
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(rename = "T")]
    pub duration: f64,
    #[serde(rename = "W")]
    pub bandwidth: f64,
    pub eta2: f64,
    #[serde(rename = "P_total", default = "default_one")]
    pub p_total: f64,
    #[serde(default)]
    pub phase_seed: u64,
    #[serde(default = "default_channel_kind")]
    pub channel_kind: ChannelKind,
    /// Peak of the spreading function.
    #[serde(default = "default_one")]
    pub amplitude: f64,
    #[serde(default = "default_one")]
    pub kappa_csir: f64,
    #[serde(default = "default_one")]
    pub kappa_csit: f64,
    #[serde(default = "default_max_atoms")]
    pub max_atoms: usize,
    #[serde(default = "default_grid_n")]
    pub grid_n: usize,
    #[serde(default)]
    pub grid_dt: Option<f64>,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

fn default_channel_kind() -> ChannelKind {
    ChannelKind::SeparableExponential
}

impl CapacityConfig {
    pub fn validate(&self) -> Result<()> {
        rate("alpha", self.alpha)?;
        rate("beta", self.beta)?;
        redundancy(self.rho)?;
        if let Some(s) = self.s {
            positive("s", s)?;
        }
        positive("T", self.duration)?;
        positive("W", self.bandwidth)?;
        positive("eta2", self.eta2)?;
        positive("P_total", self.p_total)?;
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(bad_key(
                "amplitude",
                format!("must be nonnegative, got {}", self.amplitude),
            ));
        }
        positive("kappa_csir", self.kappa_csir)?;
        positive("kappa_csit", self.kappa_csit)?;
        grid(self.grid_n, self.grid_dt)?;
        let (k, l) = lattice_extent(self.alpha, self.beta, self.rho, self.duration, self.bandwidth);
        let atoms = (k + 1) * (2 * l + 1);
        if atoms > self.max_atoms {
            return Err(bad_key(
                "T",
                format!(
                    "region needs {atoms} atoms, above max_atoms = {}; shrink T or W",
                    self.max_atoms
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub alpha: f64,
    pub beta_seq: Vec<f64>,
    #[serde(rename = "W")]
    pub bandwidth: f64,
    pub rho: f64,
    pub eta2: f64,
    #[serde(default = "default_mode")]
    pub mode: SweepMode,
    #[serde(rename = "P_total", default = "default_one")]
    pub p_total: f64,
    #[serde(default = "default_max_atoms")]
    pub max_atoms: usize,
    /// Keep the rows that fit the atom budget instead of failing.
    #[serde(default)]
    pub allow_truncation: bool,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

fn default_mode() -> SweepMode {
    SweepMode::Csir
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        rate("alpha", self.alpha)?;
        if self.beta_seq.is_empty() {
            return Err(bad_key("beta_seq", "must not be empty"));
        }
        for &b in &self.beta_seq {
            rate("beta_seq", b)?;
        }
        if self
            .beta_seq
            .windows(2)
            .any(|w| w[1].partial_cmp(&w[0]) != Some(std::cmp::Ordering::Greater))
        {
            return Err(bad_key("beta_seq", "must be strictly increasing"));
        }
        positive("W", self.bandwidth)?;
        redundancy(self.rho)?;
        positive("eta2", self.eta2)?;
        positive("P_total", self.p_total)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    #[serde(default)]
    pub seed: u64,
    /// Relative tolerance of the identity checks.
    #[serde(default)]
    pub tolerance: Option<f64>,
    /// Subset of checks to run; all checks when absent.
    #[serde(default)]
    pub checks: Option<Vec<String>>,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
}

impl ValidateConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.tolerance {
            positive("tolerance", t)?;
        }
        Ok(())
    }
}
