//! Metrics files.
//!
//! `detail.csv` has one row per trial per node, with columns
//! `trial,seed,node,correct,member,decided,latency_ms,round,accepted,sends,rejected`
//! (empty cells for nodes that did not decide). `summary.csv` has one row
//! per metric, columns `metric,count,mean,ci95,min,max,median`, where `ci95`
//! is the half-width of the 95% Student-t interval of the mean.

use std::fmt::Write as _;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::stats::summarize;
use super::TrialMetrics;

pub const DETAIL_COLUMNS: &str = "trial,seed,node,correct,member,decided,latency_ms,round,accepted,sends,rejected";
pub const SUMMARY_COLUMNS: &str = "metric,count,mean,ci95,min,max,median";

#[derive(Debug, Error)]
pub enum EmitError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn detail_csv(trials: &[TrialMetrics]) -> String {
    let mut s = String::from(DETAIL_COLUMNS);
    s.push('\n');
    for t in trials {
        for r in &t.nodes {
            writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                t.trial,
                t.seed,
                r.node.0,
                r.correct as u8,
                r.member as u8,
                r.latency.is_some() as u8,
                opt(r.latency),
                opt(r.round),
                r.accepted as u8,
                r.sends,
                r.rejected
            )
            .expect("write to string");
        }
    }
    s
}

/// Per-trial metric series summarized in `summary.csv`, in file order.
pub fn metric_series(trials: &[TrialMetrics]) -> Vec<(&'static str, Vec<f64>)> {
    let pick = |f: &dyn Fn(&TrialMetrics) -> Option<f64>| -> Vec<f64> { trials.iter().filter_map(f).collect() };
    vec![
        ("decided", pick(&|t| Some(t.decided as u8 as f64))),
        ("decide_time_ms", pick(&|t| t.decide_time.map(|x| x as f64))),
        ("latency_mean_ms", pick(&|t| t.latency_mean)),
        ("rounds", pick(&|t| t.rounds.map(f64::from))),
        ("sends_consensus", pick(&|t| Some(t.sends_consensus as f64))),
        ("sends_total", pick(&|t| Some(t.sends_total as f64))),
        ("rejected", pick(&|t| Some(t.rejected as f64))),
        ("violations", pick(&|t| Some(t.violations.len() as f64))),
    ]
}

pub fn summary_csv(trials: &[TrialMetrics]) -> String {
    let mut s = String::from(SUMMARY_COLUMNS);
    s.push('\n');
    for (name, xs) in metric_series(trials) {
        match summarize(&xs) {
            Some(m) => writeln!(
                s,
                "{name},{},{:.6},{:.6},{:.6},{:.6},{:.6}",
                m.count, m.mean, m.ci95, m.min, m.max, m.median
            ),
            None => writeln!(s, "{name},0,,,,,"),
        }
        .expect("write to string");
    }
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<(), EmitError> {
    std::fs::write(path, contents).map_err(|source| EmitError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `detail.csv` and `summary.csv` into `dir`, creating it.
pub fn emit(dir: &Path, trials: &[TrialMetrics]) -> Result<(), EmitError> {
    std::fs::create_dir_all(dir).map_err(|source| EmitError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_file(&dir.join("detail.csv"), &detail_csv(trials))?;
    write_file(&dir.join("summary.csv"), &summary_csv(trials))
}
