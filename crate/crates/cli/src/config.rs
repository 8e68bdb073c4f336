use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::CliError;

/// Every option of every subcommand. Each field may come from the JSON config
/// file or from a flag of the same name (flags win).
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Must match the subcommand when given in a config file.
    #[arg(skip)]
    pub subcommand: Option<String>,

    /// Benchmark system: duffing or lorenz.
    #[arg(long)]
    pub system: Option<String>,
    /// Snapshot sampling: box, trajectories or ergodic.
    #[arg(long)]
    pub sampling: Option<String>,
    /// Number of snapshot pairs.
    #[arg(long = "M")]
    #[serde(rename = "M")]
    pub m: Option<usize>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Steps per sampled trajectory.
    #[arg(long)]
    pub length: Option<usize>,
    /// Lower corner of the sampling box (every coordinate).
    #[arg(long, allow_negative_numbers = true)]
    pub lower: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub upper: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Start state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Flow time of one step.
    #[arg(long)]
    pub dt: Option<f64>,

    /// CSV file to ingest.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Treat the input as one trajectory and pair consecutive rows.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub trajectory: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub normalize: Option<bool>,

    /// Snapshot CSV with columns x1..xd,y1..yd[,w].
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Dictionary: chebyshev, rbf or matern.
    #[arg(long)]
    pub dictionary: Option<String>,
    /// Chebyshev degree per coordinate.
    #[arg(long)]
    pub degree: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub domain_lower: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub domain_upper: Option<f64>,
    /// Number of radial basis centres.
    #[arg(long)]
    pub centers: Option<usize>,
    /// Radial basis scale.
    #[arg(long)]
    pub scale: Option<f64>,
    /// Matérn order of the radial basis.
    #[arg(long)]
    pub order: Option<f64>,
    #[arg(long)]
    pub kernel_nu: Option<f64>,
    #[arg(long)]
    pub kernel_sigma: Option<f64>,

    /// Reduction: none, svd or pad.
    #[arg(long)]
    pub reduction: Option<String>,
    #[arg(long)]
    pub rank: Option<usize>,

    /// Directory holding a saved Galerkin system.
    #[arg(long)]
    pub galerkin: Option<PathBuf>,
    /// coord:i (state coordinate) or basis:j (basis function), 1-based.
    #[arg(long)]
    pub observable: Option<String>,
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Bound variant: first_order or full_order.
    #[arg(long)]
    pub variant: Option<String>,

    /// Monte-Carlo sample count of the surrogate.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Decay constant of the surrogate eigenvalue law.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Eigenvalue law convention: squared or direct.
    #[arg(long)]
    pub law: Option<String>,
    /// Surrogate basis: svd or pad.
    #[arg(long)]
    pub surrogate_basis: Option<String>,
    #[arg(long)]
    pub surrogate_rank: Option<usize>,

    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub init_s: Option<f64>,
    #[arg(long)]
    pub init_nu: Option<f64>,
    /// Held-out trajectories for the test error (needs --system).
    #[arg(long)]
    pub test_trajectories: Option<usize>,
    #[arg(long)]
    pub test_length: Option<usize>,

    /// Output directory (defaults to $KOOPCERT_OUT).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

pub const OUT_ENV: &str = "KOOPCERT_OUT";

fn strip_nulls(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m.into_iter().filter(|(_, v)| !v.is_null()).collect(),
        _ => Map::new(),
    }
}

/// Overlays the flags on the config file and checks the subcommand name.
pub fn merge(command: &str, file: Option<&Path>, flags: &RunConfig) -> Result<RunConfig, CliError> {
    let mut merged = match file {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::config("config", format!("cannot read {}: {e}", p.display())))?;
            let parsed: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::config("config", e.to_string()))?;
            strip_nulls(serde_json::to_value(parsed).expect("config serializes"))
        }
        None => Map::new(),
    };
    merged.extend(strip_nulls(serde_json::to_value(flags).expect("flags serialize")));
    let mut cfg: RunConfig = serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::config("config", e.to_string()))?;
    match &cfg.subcommand {
        Some(s) if s != command => {
            return Err(CliError::config("subcommand", format!("config file is for {s:?}, invoked as {command:?}")));
        }
        _ => cfg.subcommand = Some(command.to_string()),
    }
    if cfg.out.is_none() {
        cfg.out = std::env::var_os(OUT_ENV).map(PathBuf::from);
    }
    Ok(cfg)
}

/// The config with unset fields removed, as echoed into the manifest.
pub fn echo(cfg: &RunConfig) -> Value {
    Value::Object(strip_nulls(serde_json::to_value(cfg).expect("config serializes")))
}

pub fn require<T: Clone>(value: &Option<T>, field: &str) -> Result<T, CliError> {
    value.clone().ok_or_else(|| CliError::config(field, "required but not set"))
}

pub fn positive(value: f64, field: &str) -> Result<f64, CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(CliError::config(field, format!("must be positive and finite, got {value}")))
    }
}

pub fn at_least(value: usize, min: usize, field: &str) -> Result<usize, CliError> {
    if value >= min {
        Ok(value)
    } else {
        Err(CliError::config(field, format!("must be at least {min}, got {value}")))
    }
}

pub fn choice<'a>(value: &Option<String>, field: &str, allowed: &[&'a str], default: Option<&'a str>) -> Result<&'a str, CliError> {
    match value {
        None => default.ok_or_else(|| CliError::config(field, format!("required, one of {}", allowed.join(", ")))),
        Some(v) => allowed
            .iter()
            .find(|a| **a == v.to_ascii_lowercase())
            .copied()
            .ok_or_else(|| CliError::config(field, format!("unknown value {v:?}, expected one of {}", allowed.join(", ")))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    /// 0-based state coordinate.
    Coord(usize),
    /// 0-based basis function of the system.
    Basis(usize),
}

pub fn parse_observable(value: &Option<String>) -> Result<Observable, CliError> {
    let raw = require(value, "observable")?;
    let bad = || CliError::config("observable", format!("expected coord:i or basis:j with 1-based index, got {raw:?}"));
    let (kind, idx) = raw.split_once(':').ok_or_else(bad)?;
    let i: usize = idx.trim().parse().map_err(|_| bad())?;
    if i == 0 {
        return Err(bad());
    }
    match kind.trim() {
        "coord" => Ok(Observable::Coord(i - 1)),
        "basis" => Ok(Observable::Basis(i - 1)),
        _ => Err(bad()),
    }
}
