//! CSV and JSON writers for run output.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::run::{RunSummary, StepRecord};

const POSE: [&str; 6] = ["x", "y", "z", "alpha", "beta", "theta"];

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

/// Column names for a run with `dof` joints (0 for the ideal plant).
pub fn header(dof: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    let joint = |h: &mut Vec<String>, p: &str| h.extend((0..dof).map(|i| format!("{p}{i}")));
    joint(&mut h, "q");
    joint(&mut h, "qdot");
    for prefix in ["", "d_"] {
        h.extend(POSE.iter().map(|c| format!("{prefix}{c}")));
    }
    for prefix in ["ex_", "ef_", "ups_", "psi_"] {
        h.extend(POSE.iter().map(|c| format!("{prefix}{c}")));
    }
    joint(&mut h, "tau");
    h.extend(["contact", "f_c", "pen_rate"].map(String::from));
    joint(&mut h, "vpf");
    h.extend(["S", "S_expanded", "S_integral", "E_net", "E_abs", "E_inj"].map(String::from));
    joint(&mut h, "lhat_min");
    h
}

/// Running sums that the CSV carries alongside each record.
#[derive(Debug, Clone, Copy, Default)]
struct Running {
    s_integral: f64,
    prev_s: Option<f64>,
    started: bool,
    prev_power: Option<f64>,
    e_net: f64,
    e_abs: f64,
    e_inj: f64,
}

/// Rows matching [`header`]; energies and `∫𝒮` are re-accumulated from the
/// records with the same trapezoid rule the run uses.
pub fn rows(records: &[StepRecord], dt: f64) -> Vec<Vec<f64>> {
    let mut run = Running::default();
    records
        .iter()
        .map(|r| {
            if let Some(prev) = run.prev_s {
                run.s_integral += 0.5 * dt * (prev + r.stability);
            }
            run.prev_s = Some(r.stability);
            run.started |= r.wall.in_contact;
            if run.started {
                let p = r.wall.force * r.wall.rate;
                if let Some(prev) = run.prev_power {
                    let h = 0.5 * dt;
                    run.e_net += h * (prev + p);
                    run.e_abs += h * (prev.max(0.0) + p.max(0.0));
                    run.e_inj += h * (prev.min(0.0) + p.min(0.0));
                }
                run.prev_power = Some(p);
            }

            let mut row = vec![r.t];
            if let Some(c) = &r.chain {
                row.extend(c.q.iter());
                row.extend(c.qdot.iter());
            }
            row.extend(r.pose.iter());
            row.extend(r.pose_d.iter());
            row.extend(r.errors.e_x.iter());
            row.extend(r.errors.e_f.iter());
            row.extend(r.upsilon.iter());
            row.extend(r.psi.iter());
            if let Some(c) = &r.chain {
                row.extend(c.tau.iter());
            }
            row.push(if r.wall.in_contact { 1.0 } else { 0.0 });
            row.push(r.wall.force);
            row.push(r.wall.rate);
            if let Some(c) = &r.chain {
                row.extend(c.vpf.iter());
            }
            row.extend([r.stability, r.stability_expanded, run.s_integral, run.e_net, run.e_abs, run.e_inj]);
            if let Some(c) = &r.chain {
                row.extend(c.l_hat_min_eigenvalues.iter());
            }
            row
        })
        .collect()
}

/// CSV text; floats use the shortest round-trip representation.
pub fn csv_string(header: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err(path, e))
}

pub fn write_telemetry(path: &Path, records: &[StepRecord], dt: f64) -> Result<()> {
    let dof = records.first().and_then(|r| r.chain.as_ref()).map_or(0, |c| c.q.len());
    write_text(path, &csv_string(&header(dof), &rows(records, dt)))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.into()))?;
    write_text(path, &(text + "\n"))
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    write_json(path, summary)
}
