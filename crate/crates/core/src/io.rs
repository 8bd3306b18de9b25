//! File formats: JSON documents (complex numbers as `[re, im]` pairs) and
//! CSV tables for plotting.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::density::{density_f64, HittingSet};
use crate::error::{Error, Result};
use crate::operator::OperatorSpec;
use crate::pseudotraj::Trajectory;
use crate::scalar::Real;
use crate::shadow::Witness;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json(value)?).map_err(|e| io_err(path, e))
}

pub fn read_operator<R: Real>(path: &Path) -> Result<OperatorSpec<R>> {
    read_json(path)
}

pub fn read_trajectory<R: Real>(path: &Path) -> Result<Trajectory<R>> {
    read_json(path)
}

fn csv_bytes(header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(|e| Error::Format(e.to_string()))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

/// Columns `n, re_0, im_0, re_1, im_1, ...`.
pub fn trajectory_csv<R: Real>(traj: &Trajectory<R>) -> Result<Vec<u8>> {
    let mut header = vec!["n".to_string()];
    for i in 0..traj.dim() {
        header.push(format!("re_{i}"));
        header.push(format!("im_{i}"));
    }
    csv_bytes(
        header,
        traj.iter().map(|(n, x)| {
            let mut row = vec![n.to_string()];
            for z in x.iter() {
                row.push(z.re.to_string());
                row.push(z.im.to_string());
            }
            row
        }),
    )
}

/// Columns `n, lambda_re, lambda_im, residual`.
pub fn witness_csv<R: Real>(w: &Witness<R>) -> Result<Vec<u8>> {
    let header = ["n", "lambda_re", "lambda_im", "residual"].map(String::from).to_vec();
    csv_bytes(
        header,
        w.window.indices().zip(w.lambdas.iter().zip(&w.residual_profile)).map(|(n, (l, r))| {
            vec![n.to_string(), l.re.to_string(), l.im.to_string(), r.to_string()]
        }),
    )
}

/// Columns `n, hit, dist`.
pub fn hitting_csv<R: Real>(hs: &HittingSet<R>) -> Result<Vec<u8>> {
    let header = ["n", "hit", "dist"].map(String::from).to_vec();
    csv_bytes(
        header,
        hs.distances.iter().enumerate().map(|(n, d)| {
            let hit = hs.report.contains(n as u64);
            vec![n.to_string(), (hit as u8).to_string(), d.to_string()]
        }),
    )
}

/// Columns `n_prime, value, value_f64` of the windowed density profile.
pub fn density_profile_csv(profile: &[(u64, crate::density::Density)]) -> Result<Vec<u8>> {
    let header = ["n_prime", "value", "value_f64"].map(String::from).to_vec();
    csv_bytes(header, profile.iter().map(|(n, d)| vec![n.to_string(), d.to_string(), density_f64(d).to_string()]))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(bytes).map_err(|e| io_err(path, e))
}
