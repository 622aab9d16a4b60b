//! Plot-ready CSV and JSON writers.
//!
//! Files are rendered in memory and written in one call so a failed run never
//! leaves a half-written table behind a complete-looking name.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use epicontrol_core::ensemble::SeriesStats;
use epicontrol_core::format::sig10;
use epicontrol_core::mobility::ACTIVITY_LABELS;
use epicontrol_core::mpc::TraceRow;
use epicontrol_core::{ActivityVector, Schedule};

use crate::CliError;

pub fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
        path: dir.to_path_buf(),
        source,
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::write(path, bytes).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })?;
    log::debug!("wrote {}", path.display());
    Ok(path.to_path_buf())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<PathBuf, CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// `date,mean,q2.5,q50,q97.5,min,max`, one row per day from `start_day`.
/// Days without a defined value (R_e on the first day) are skipped.
pub fn panel_csv(schedule: &Schedule, start_day: i64, stats: &SeriesStats) -> String {
    let mut out = String::from("date,mean,q2.5,q50,q97.5,min,max\n");
    for k in 0..stats.mean.len() {
        if stats.mean[k].is_nan() {
            continue;
        }
        let _ = write!(out, "{}", schedule.date_of(start_day + k as i64));
        for v in [stats.mean[k], stats.q025[k], stats.q50[k], stats.q975[k], stats.min[k], stats.max[k]] {
            let _ = write!(out, ",{}", sig10(v));
        }
        out.push('\n');
    }
    out
}

/// `date,RR,G,P,T,W,SU,u`; row `k` is the policy in force on the transition
/// into day `start_day + k + 1`, dated by that day.
pub fn policy_csv(schedule: &Schedule, start_day: i64, policy: &[ActivityVector], u: &[f64]) -> String {
    let mut out = String::from("date");
    for label in ACTIVITY_LABELS {
        out.push(',');
        out.push_str(label);
    }
    out.push_str(",u\n");
    for (k, (alpha, u)) in policy.iter().zip(u).enumerate() {
        let _ = write!(out, "{}", schedule.date_of(start_day + k as i64 + 1));
        for v in alpha {
            let _ = write!(out, ",{}", sig10(*v));
        }
        let _ = writeln!(out, ",{}", sig10(*u));
    }
    out
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("window,start,iteration,evaluations,objective,violation,merit\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.window,
            r.start,
            r.iteration,
            r.evaluations,
            sig10(r.objective),
            sig10(r.violation),
            sig10(r.merit)
        );
    }
    out
}

/// Per-day summary values of `stats` at index `k`, for summary JSON.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Envelope {
    pub mean: f64,
    pub std: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub min: f64,
    pub max: f64,
}

impl Envelope {
    pub fn at(stats: &SeriesStats, k: usize) -> Self {
        Self {
            mean: stats.mean[k],
            std: stats.std[k],
            q025: stats.q025[k],
            q50: stats.q50[k],
            q975: stats.q975[k],
            min: stats.min[k],
            max: stats.max[k],
        }
    }
}
