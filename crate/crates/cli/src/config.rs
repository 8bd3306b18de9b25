//! Experiment configuration: a TOML file overlaid by command-line flags.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Deserialize;
use supershadow::pseudotraj::{IndexConvention, Window};
use supershadow::{CVector, C};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    #[serde(alias = "structured-text")]
    #[value(alias = "structured-text")]
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DensityKind {
    Ud,
    Ubd,
}

/// A complex entry: a bare real or an `[re, im]` pair.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(f64),
    Pair([f64; 2]),
}

impl Entry {
    fn value(self) -> C<f64> {
        match self {
            Entry::Real(re) => C::new(re, 0.0),
            Entry::Pair([re, im]) => C::new(re, im),
        }
    }
}

pub fn to_vector(entries: &[Entry]) -> CVector<f64> {
    CVector::from_iterator(entries.len(), entries.iter().map(|e| e.value()))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetBall {
    pub center: Vec<Entry>,
    pub radius: f64,
}

/// Every key is optional; missing keys fall back to command-line flags or
/// built-in defaults. Relative paths are resolved against the file's
/// directory.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub subcommand: Option<String>,
    pub demo: Option<String>,
    pub operator: Option<PathBuf>,
    pub trajectory: Option<PathBuf>,
    pub kind: Option<String>,
    pub generator: Option<toml::Table>,
    pub window: Option<String>,
    pub windows: Option<Vec<u32>>,
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub budget: Option<usize>,
    pub iterations: Option<usize>,
    pub max_cells: Option<usize>,
    pub mode: Option<String>,
    pub x: Option<Vec<Entry>>,
    pub y: Option<Vec<Entry>>,
    pub target: Option<Vec<Entry>>,
    pub radius: Option<f64>,
    pub targets: Option<Vec<TargetBall>>,
    pub horizon: Option<u64>,
    pub set: Option<String>,
    pub density: Option<DensityKind>,
    pub n_min: Option<u64>,
    pub window_min: Option<u64>,
    pub window_max: Option<u64>,
    pub threshold: Option<f64>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.operator, &mut cfg.trajectory, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Fills every unset key of `self` from `lower`.
    pub fn or(self, lower: Self) -> Self {
        macro_rules! pick {
            ($($f:ident),*) => { Self { $($f: self.$f.or(lower.$f)),* } };
        }
        pick!(
            subcommand, demo, operator, trajectory, kind, generator, window, windows, eps, delta, tol, seed, out, format,
            budget, iterations, max_cells, mode, x, y, target, radius, targets, horizon, set, density, n_min, window_min,
            window_max, threshold
        )
    }
}

/// `positive:N`, `bilateral:N`, `positive:LO..HI` or `bilateral:LO..HI`.
pub fn parse_window(s: &str) -> Result<Window, CliError> {
    let bad = || CliError::Config(format!("window `{s}`: expected positive:N, bilateral:N or <convention>:LO..HI"));
    let (conv, range) = s.split_once(':').ok_or_else(bad)?;
    let convention = match conv {
        "positive" => IndexConvention::Positive,
        "bilateral" => IndexConvention::Bilateral,
        _ => return Err(bad()),
    };
    if let Some((lo, hi)) = range.split_once("..") {
        let lo: i64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: i64 = hi.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        return Window::new(convention, lo, hi).map_err(|e| CliError::Config(e.to_string()));
    }
    let n: u32 = range.trim().parse().map_err(|_| bad())?;
    Ok(match convention {
        IndexConvention::Positive => Window::positive(n),
        IndexConvention::Bilateral => Window::bilateral(n),
    })
}

/// Parses a vector flag given as JSON, e.g. `[[1,0],[0,0.5]]` or `[1,0]`.
pub fn parse_entries(s: &str) -> Result<Vec<Entry>, String> {
    serde_json::from_str(s).map_err(|e| format!("expected a JSON list of numbers or [re, im] pairs: {e}"))
}
