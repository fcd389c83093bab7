//! CSV tables and the JSON run summary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::studies::{EquivalenceRow, MnRow, MomentRow, SweepRow, TailEstimate};
use crate::{ExperimentConfig, LabError};

pub const SWEEP_HEADER: [&str; 7] = [
    "epsilon",
    "p_hat",
    "ci_lo",
    "ci_hi",
    "eps_log_p",
    "replicas",
    "resolved",
];
pub const EQUIVALENCE_HEADER: [&str; 7] = [
    "epsilon",
    "delta",
    "gap_kind",
    "p_hat",
    "ci_lo",
    "ci_hi",
    "eps_log_p",
];

/// Marker in the `eps_log_p` column of rows without hits.
pub const UNRESOLVED: &str = "UNRESOLVED";

/// Build-time `git describe`, or `unknown` outside a checkout.
pub const GIT_DESCRIBE: &str = env!("NMV_GIT_DESCRIBE");

fn num(x: f64) -> String {
    x.to_string()
}

fn eps_log_p(t: &TailEstimate) -> String {
    t.eps_log_p.map_or_else(|| UNRESOLVED.to_string(), num)
}

fn writer(dir: &Path, name: &str) -> Result<(csv::Writer<fs::File>, PathBuf), LabError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    Ok((csv::Writer::from_path(&path)?, path))
}

pub fn write_sweep_csv(dir: &Path, rows: &[SweepRow]) -> Result<PathBuf, LabError> {
    let (mut w, path) = writer(dir, "sweep.csv")?;
    w.write_record(SWEEP_HEADER)?;
    for r in rows {
        let t = &r.tail;
        w.write_record([
            num(r.epsilon),
            num(t.p_hat),
            num(t.ci_lo),
            num(t.ci_hi),
            eps_log_p(t),
            t.samples.to_string(),
            t.resolved().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

pub fn write_equivalence_csv(dir: &Path, rows: &[EquivalenceRow]) -> Result<PathBuf, LabError> {
    let (mut w, path) = writer(dir, "equivalence.csv")?;
    w.write_record(EQUIVALENCE_HEADER)?;
    for r in rows {
        let t = &r.tail;
        w.write_record([
            num(r.epsilon),
            num(r.delta),
            r.gap_kind.clone(),
            num(t.p_hat),
            num(t.ci_lo),
            num(t.ci_hi),
            eps_log_p(t),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

pub fn write_mn_csv(dir: &Path, rows: &[MnRow]) -> Result<PathBuf, LabError> {
    let (mut w, path) = writer(dir, "mn_convergence.csv")?;
    w.write_record(["n", "gap"])?;
    for r in rows {
        w.write_record([r.n.to_string(), num(r.gap)])?;
    }
    w.flush()?;
    Ok(path)
}

pub fn write_moments_csv(dir: &Path, rows: &[MomentRow]) -> Result<PathBuf, LabError> {
    let (mut w, path) = writer(dir, "moments.csv")?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(path)
}

#[derive(Debug, Serialize)]
pub struct Summary<'a, R: Serialize> {
    pub command: &'a str,
    pub config: &'a ExperimentConfig,
    pub git_describe: &'a str,
    pub wall_clock_seconds: f64,
    pub threads: usize,
    pub check_failures: &'a [String],
    pub results: R,
}

/// Writes `<command>_summary.json` into `dir`.
pub fn write_summary<R: Serialize>(
    dir: &Path,
    summary: &Summary<'_, R>,
) -> Result<PathBuf, LabError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!(
        "{}_summary.json",
        summary.command.replace('-', "_")
    ));
    fs::write(&path, serde_json::to_string_pretty(summary)?)?;
    Ok(path)
}
