//! On-disk report: `summary.json` plus CSV logs. Identical reports produce
//! byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimation::ConvergenceRow;
use crate::experiment::{EstimateRecord, RunReport, SearchRecord};
use crate::plant::Mode;

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Serialize)]
struct CeCsvRow {
    iteration: u32,
    vartheta_r: f64,
    vartheta_ttc: f64,
    hits: u64,
    n: u64,
}

#[derive(Serialize)]
struct ScenarioCsvRow {
    index: u64,
    v_l: f64,
    r_inv: f64,
    ttc_inv: f64,
    r0: f64,
    rdot: f64,
    v0: f64,
    likelihood: f64,
    conflict: bool,
    crash: bool,
    delta_v: Option<f64>,
    min_range: f64,
    distance_m: f64,
}

#[derive(Serialize)]
struct TraceCsvRow {
    t: f64,
    r: f64,
    v: f64,
    a_cmd: f64,
    a: f64,
    mode: Mode,
}

pub fn convergence_file(e: &EstimateRecord) -> String {
    format!("convergence_{}_{}_{}.csv", e.event, e.mode, e.bin)
}

pub fn ce_history_file(s: &SearchRecord) -> String {
    format!("ce_history_{}_{}.csv", s.event, s.bin)
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_empty_csv(path: &Path, header: &str) -> Result<()> {
    fs::write(path, format!("{header}\n")).map_err(|e| Error::io(path, e))
}

/// Write the report into `dir` (created if missing). Returns the files
/// written, in order.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let summary = dir.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    fs::write(&summary, text).map_err(|e| Error::io(&summary, e))?;
    written.push(summary);

    for s in &report.searches {
        let path = dir.join(ce_history_file(s));
        if s.history.is_empty() {
            write_empty_csv(&path, "iteration,vartheta_r,vartheta_ttc,hits,n")?;
        } else {
            write_csv(
                &path,
                s.history.iter().map(|h| CeCsvRow {
                    iteration: h.iteration,
                    vartheta_r: h.vartheta_r,
                    vartheta_ttc: h.vartheta_ttc,
                    hits: h.hits,
                    n: h.n,
                }),
            )?;
        }
        written.push(path);
    }

    for (k, e) in report.estimates.iter().enumerate() {
        let path = dir.join(convergence_file(e));
        let rows = report.convergence.get(k).map(Vec::as_slice).unwrap_or(&[]);
        if rows.is_empty() {
            write_empty_csv(&path, "n,estimate,rel_half_width,sample_variance")?;
        } else {
            write_csv(&path, rows)?;
        }
        written.push(path);

        if let Some(log) = report.scenario_logs.get(k).filter(|l| !l.is_empty()) {
            let path = dir.join(format!("scenarios_{}_{}_{}.csv", e.event, e.mode, e.bin));
            write_csv(
                &path,
                log.iter().map(|(i, o)| ScenarioCsvRow {
                    index: *i,
                    v_l: o.sample.v_l,
                    r_inv: o.sample.r_inv,
                    ttc_inv: o.sample.ttc_inv,
                    r0: o.sample.r0,
                    rdot: o.sample.rdot,
                    v0: o.sample.v0,
                    likelihood: o.sample.likelihood,
                    conflict: o.events.conflict,
                    crash: o.events.crash,
                    delta_v: o.events.delta_v,
                    min_range: o.min_range,
                    distance_m: o.distance_m,
                }),
            )?;
            written.push(path);
        }
        for (i, states) in report.traces.get(k).map(Vec::as_slice).unwrap_or(&[]) {
            let path = dir.join(format!("trace_{}_{}_{}_{:06}.csv", e.event, e.mode, e.bin, i));
            write_csv(
                &path,
                states.iter().map(|s| TraceCsvRow {
                    t: s.t,
                    r: s.r,
                    v: s.v,
                    a_cmd: s.a_cmd,
                    a: s.a,
                    mode: s.mode,
                }),
            )?;
            written.push(path);
        }
    }
    Ok(written)
}

pub fn read_summary(dir: &Path) -> Result<RunReport> {
    let path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path,
        reason: e.to_string(),
    })
}

pub fn read_convergence(path: &Path) -> Result<Vec<ConvergenceRow>> {
    let csv_err = |e: csv::Error| Error::Parse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Re-read a report directory and check every summary estimate against
/// the last row of its convergence log.
pub fn reload_report(dir: &Path) -> Result<RunReport> {
    let mut report = read_summary(dir)?;
    let mut convergence = Vec::new();
    for e in &report.estimates {
        let path = dir.join(convergence_file(e));
        let rows = read_convergence(&path)?;
        if let Some(last) = rows.last() {
            if last.n != e.n || last.estimate != e.estimate {
                return Err(Error::Parse {
                    path,
                    reason: format!(
                        "last row (n={}, estimate={}) disagrees with the summary (n={}, estimate={})",
                        last.n, last.estimate, e.n, e.estimate
                    ),
                });
            }
        }
        convergence.push(rows);
    }
    report.convergence = convergence;
    Ok(report)
}

fn sci(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.3e}"))
}

/// Plain-text table in the shape of an accelerated-rate summary.
pub fn render_table(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "config {}  seed {}  version {}",
        &report.provenance.config_hash[..report.provenance.config_hash.len().min(12)],
        report.provenance.seed,
        report.provenance.version
    );
    let _ = writeln!(
        out,
        "confidence {:.0}%  target relative half-width {}",
        100.0 * (1.0 - report.settings.alpha),
        report.settings.beta
    );
    for s in &report.searches {
        let _ = writeln!(
            out,
            "tilt {:<8} {:<7} vartheta_r {:>10.5}  vartheta_ttc {:>10.5}  ({:?}, {} iterations)",
            s.event.to_string(),
            s.bin,
            s.params.vartheta_r,
            s.params.vartheta_ttc,
            s.source,
            s.history.len()
        );
    }
    let _ = writeln!(
        out,
        "{:<8} {:<4} {:<7} {:>10} {:>10} {:>23} {:>7} {:>8} {:>10} {:>10} {:>10} {:>13}",
        "event", "mode", "bin", "estimate", "l_r", "CI", "N", "N_nat", "D_nat[mi]", "D_acc[mi]", "r_acc", "status"
    );
    for e in &report.estimates {
        let _ = writeln!(
            out,
            "{:<8} {:<4} {:<7} {:>10.3e} {:>10} {:>23} {:>7} {:>8} {:>10} {:>10.3e} {:>10} {:>13}",
            e.event.to_string(),
            e.mode.to_string(),
            e.bin,
            e.estimate,
            e.rel_half_width.map_or_else(|| "-".to_string(), |l| format!("{l:.4}")),
            format!("[{:.3e}, {:.3e}]", e.ci_low, e.ci_high),
            e.n,
            e.n_nature.map_or_else(|| "-".to_string(), |n| n.to_string()),
            sci(e.d_nature_mi),
            e.d_acc_mi,
            sci(e.r_acc),
            match e.status {
                crate::experiment::RunStatus::Converged => "converged",
                crate::experiment::RunStatus::NotConverged => "not converged",
            }
        );
    }
    out
}
