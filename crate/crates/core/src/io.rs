//! CSV and JSON output, and a CSV + JSON round trip for [`ClvBasis`].
//!
//! Floats are written with Rust's shortest round-trip formatting, so equal
//! inputs give byte-identical files and reloading is lossless.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{SystemKind, Trajectory};
use crate::error::{Error, Result};
use crate::series::{MatSeries, VecSeries};
use crate::tangent::ClvBasis;

pub const SCHEMA: u32 = 1;

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::Writer::from_path(path)?)
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

/// `t,u1,...,um`, one row per stored state.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=traj.dim()).map(|k| format!("u{k}")));
    w.write_record(&header)?;
    for i in 0..traj.len() {
        let mut row = vec![fmt(traj.time(i))];
        row.extend(traj.state(i).iter().map(|x| fmt(*x)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `step,t` followed by one column per vector entry, named `{prefix}{k}`.
pub fn write_series_csv(path: &Path, series: &VecSeries, start: usize, step: f64, prefix: &str) -> Result<()> {
    let mut w = writer(path)?;
    let mut header = vec!["step".to_string(), "t".to_string()];
    header.extend((1..=series.dim()).map(|k| format!("{prefix}{k}")));
    w.write_record(&header)?;
    for (k, v) in series.iter().enumerate() {
        let i = start + k;
        let mut row = vec![i.to_string(), fmt(i as f64 * step)];
        row.extend(v.iter().map(|x| fmt(*x)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Summary written as `exponents.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentsRecord {
    pub schema: u32,
    pub system: String,
    pub parameter: f64,
    pub kind: SystemKind,
    /// Descending.
    pub exponents: Vec<f64>,
    pub n_unstable: usize,
    pub neutral_index: Option<usize>,
    pub neutral_tolerance: f64,
    pub min_angle: f64,
    pub max_condition: f64,
    pub window: (usize, usize),
}

impl ExponentsRecord {
    pub fn new(system: &str, parameter: f64, clv: &ClvBasis) -> Self {
        Self {
            schema: SCHEMA,
            system: system.to_string(),
            parameter,
            kind: clv.kind,
            exponents: clv.exponents.clone(),
            n_unstable: clv.n_unstable,
            neutral_index: clv.neutral_index,
            neutral_tolerance: clv.neutral_tolerance,
            min_angle: clv.min_angle,
            max_condition: clv.max_condition,
            window: (clv.start, clv.end()),
        }
    }
}

/// Everything in a [`ClvBasis`] besides the per-step arrays.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct ClvMeta {
    schema: u32,
    kind: SystemKind,
    step: f64,
    start: usize,
    dim: usize,
    len: usize,
    exponents: Vec<f64>,
    n_unstable: usize,
    neutral_index: Option<usize>,
    neutral_tolerance: f64,
    min_angle: f64,
    max_condition: f64,
    neutral_alignment: Option<f64>,
    convergence_error: f64,
}

/// Writes `frames.csv` (`step`, then `z{j}_{k}`: entry `k` of CLV `j`),
/// `growth.csv` (per-step log growth factors) and `clv.json` into `dir`.
pub fn save_clv(dir: &Path, clv: &ClvBasis) -> Result<()> {
    let m = clv.dim();
    let mut w = writer(&dir.join("frames.csv"))?;
    let mut header = vec!["step".to_string()];
    for j in 1..=m {
        header.extend((1..=m).map(|k| format!("z{j}_{k}")));
    }
    w.write_record(&header)?;
    let flat = clv.frames.as_flat();
    for k in 0..clv.frames.len() {
        let mut row = vec![(clv.start + k).to_string()];
        row.extend(flat[k * m * m..(k + 1) * m * m].iter().map(|x| fmt(*x)));
        w.write_record(&row)?;
    }
    w.flush()?;
    write_series_csv(&dir.join("growth.csv"), &clv.log_growth, clv.start, clv.step, "log_growth")?;
    let meta = ClvMeta {
        schema: SCHEMA,
        kind: clv.kind,
        step: clv.step,
        start: clv.start,
        dim: m,
        len: clv.frames.len(),
        exponents: clv.exponents.clone(),
        n_unstable: clv.n_unstable,
        neutral_index: clv.neutral_index,
        neutral_tolerance: clv.neutral_tolerance,
        min_angle: clv.min_angle,
        max_condition: clv.max_condition,
        neutral_alignment: clv.neutral_alignment,
        convergence_error: clv.convergence_error,
    };
    write_json(&dir.join("clv.json"), &meta)
}

fn read_rows(path: &Path, skip: usize, width: usize) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != skip + width {
            return Err(Error::InvalidInput(format!("{}: expected {} columns, found {}", path.display(), skip + width, rec.len())));
        }
        for field in rec.iter().skip(skip) {
            out.push(field.parse::<f64>().map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?);
        }
    }
    Ok(out)
}

/// Reads back what [`save_clv`] wrote.
pub fn load_clv(dir: &Path) -> Result<ClvBasis> {
    let meta: ClvMeta = read_json(&dir.join("clv.json"))?;
    if meta.schema != SCHEMA {
        return Err(Error::InvalidInput(format!("unsupported CLV schema {}", meta.schema)));
    }
    let m = meta.dim;
    let frames = read_rows(&dir.join("frames.csv"), 1, m * m)?;
    let growth = read_rows(&dir.join("growth.csv"), 2, m)?;
    if frames.len() != meta.len * m * m || growth.len() != (meta.len - 1) * m {
        return Err(Error::InvalidInput("CLV files disagree on the window length".into()));
    }
    Ok(ClvBasis {
        kind: meta.kind,
        step: meta.step,
        start: meta.start,
        frames: MatSeries::from_flat(m, frames),
        log_growth: VecSeries::from_flat(m, growth),
        exponents: meta.exponents,
        n_unstable: meta.n_unstable,
        neutral_index: meta.neutral_index,
        neutral_tolerance: meta.neutral_tolerance,
        min_angle: meta.min_angle,
        max_condition: meta.max_condition,
        neutral_alignment: meta.neutral_alignment,
        convergence_error: meta.convergence_error,
    })
}
