//! Largest passive wall stiffness per desired inertia.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{passivity_energy, ContactEnergy};
use crate::error::{Error, Result};
use crate::sim::config::{ExperimentConfig, MatrixSpec, ZwidthConfig};
use crate::sim::run::{run_experiment, RunOutcome, TraceSample};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub stiffness: f64,
    pub passive: bool,
    pub bounces: u32,
    pub contact_energy: f64,
    pub diverged: bool,
}

/// The passive run at the reported stiffness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRun {
    pub stiffness: f64,
    pub contact_energy: ContactEnergy,
    /// Energy recomputed from the saved force and rate traces.
    pub replay_energy: ContactEnergy,
    pub replay_error: f64,
    pub stability_integral: f64,
    pub min_stability_integral: f64,
    pub bounces: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub desired_inertia: f64,
    /// `None` when even the lowest stiffness is not passive.
    pub max_passive_stiffness: Option<f64>,
    /// The upper end of the search range was passive.
    pub saturated: bool,
    pub free_motion_rms: Option<f64>,
    pub boundary: Option<BoundaryRun>,
    pub evaluations: Vec<Evaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    pub stiffness_non_decreasing: bool,
    pub free_motion_rms_non_decreasing: bool,
    /// `K_e(max m_d) / K_e(min m_d)`.
    pub stiffness_ratio: Option<f64>,
}

/// RMS of the translational error norm outside contact: before the first
/// contact and after the final release.
pub fn free_motion_rms(trace: &[TraceSample]) -> Option<f64> {
    let first = trace.iter().position(|s| s.in_contact);
    let last = trace.iter().rposition(|s| s.in_contact);
    let free: Vec<f64> = trace
        .iter()
        .enumerate()
        .filter(|(i, _)| match (first, last) {
            (Some(f), Some(l)) => *i < f || *i > l,
            _ => true,
        })
        .map(|(_, s)| s.e_x.fixed_rows::<3>(0).norm())
        .collect();
    if free.is_empty() {
        None
    } else {
        Some(crate::sim::metrics::rms(&free))
    }
}

/// Contact energy recomputed from the trace, starting at first contact.
pub fn replay_contact_energy(trace: &[TraceSample], dt: f64) -> Result<ContactEnergy> {
    let Some(first) = trace.iter().position(|s| s.in_contact) else {
        return Ok(ContactEnergy::default());
    };
    let f: Vec<f64> = trace[first..].iter().map(|s| s.contact_force).collect();
    let v: Vec<f64> = trace[first..].iter().map(|s| s.penetration_rate).collect();
    passivity_energy(&f, &v, dt)
}

fn configured(base: &ExperimentConfig, inertia: f64, stiffness: f64) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.impedance.mass = MatrixSpec::Scalar(inertia);
    if let Some(w) = &mut cfg.wall {
        w.stiffness = stiffness;
    }
    cfg
}

fn evaluate(base: &ExperimentConfig, inertia: f64, stiffness: f64) -> Result<(Evaluation, RunOutcome)> {
    let out = run_experiment(configured(base, inertia, stiffness), false)?;
    let s = &out.summary;
    Ok((
        Evaluation {
            stiffness,
            passive: s.passive,
            bounces: s.bounces,
            contact_energy: s.contact_energy.net,
            diverged: s.diverged.is_some(),
        },
        out,
    ))
}

/// Geometric growth from the lower bound until the first non-passive
/// stiffness, then geometric bisection.
pub fn search_inertia(base: &ExperimentConfig, z: &ZwidthConfig, inertia: f64) -> Result<SweepPoint> {
    let mut evaluations = Vec::new();
    let mut best: Option<RunOutcome> = None;
    let mut lo = z.stiffness_min;
    let (eval, out) = evaluate(base, inertia, lo)?;
    evaluations.push(eval);
    let mut saturated = false;
    let mut hi = None;
    if eval.passive {
        best = Some(out);
        loop {
            let k = (lo * z.growth).min(z.stiffness_max);
            let (eval, out) = evaluate(base, inertia, k)?;
            evaluations.push(eval);
            if eval.passive {
                lo = k;
                best = Some(out);
                if k >= z.stiffness_max {
                    saturated = true;
                    break;
                }
            } else {
                hi = Some(k);
                break;
            }
        }
        if let Some(mut h) = hi {
            for _ in 0..z.bisection_steps {
                let mid = (lo * h).sqrt();
                let (eval, out) = evaluate(base, inertia, mid)?;
                evaluations.push(eval);
                if eval.passive {
                    lo = mid;
                    best = Some(out);
                } else {
                    h = mid;
                }
            }
        }
    }
    let boundary = match &best {
        Some(out) => {
            let sim = &out.simulation;
            let replay = replay_contact_energy(sim.trace(), sim.dt())?;
            let s = &out.summary;
            Some(BoundaryRun {
                stiffness: lo,
                contact_energy: s.contact_energy,
                replay_energy: replay,
                replay_error: (replay.net - s.contact_energy.net).abs(),
                stability_integral: s.stability_integral,
                min_stability_integral: s.min_stability_integral,
                bounces: s.bounces,
            })
        }
        None => None,
    };
    Ok(SweepPoint {
        desired_inertia: inertia,
        max_passive_stiffness: best.as_ref().map(|_| lo),
        saturated,
        free_motion_rms: best.as_ref().and_then(|o| free_motion_rms(o.simulation.trace())),
        boundary,
        evaluations,
    })
}

fn non_decreasing(values: &[Option<f64>]) -> bool {
    values.windows(2).all(|w| match (w[0], w[1]) {
        (Some(a), Some(b)) => b >= a,
        _ => false,
    })
}

/// Sweep every inertia of the grid in parallel. Points come back in grid
/// order, so the report does not depend on scheduling.
pub fn run_sweep(base: &ExperimentConfig) -> Result<SweepReport> {
    let z = base
        .zwidth
        .as_ref()
        .ok_or_else(|| Error::Config("missing [zwidth] section".into()))?;
    let mut grid = z.inertia_grid.clone();
    grid.sort_by(f64::total_cmp);
    let points: Vec<SweepPoint> = grid
        .par_iter()
        .map(|&m| search_inertia(base, z, m))
        .collect::<Result<_>>()?;
    let k: Vec<Option<f64>> = points.iter().map(|p| p.max_passive_stiffness).collect();
    let rms: Vec<Option<f64>> = points.iter().map(|p| p.free_motion_rms).collect();
    let stiffness_ratio = match (k.first().copied().flatten(), k.last().copied().flatten()) {
        (Some(a), Some(b)) if a > 0.0 => Some(b / a),
        _ => None,
    };
    Ok(SweepReport {
        stiffness_non_decreasing: non_decreasing(&k),
        free_motion_rms_non_decreasing: non_decreasing(&rms),
        stiffness_ratio,
        points,
    })
}

pub fn report_csv(report: &SweepReport) -> String {
    let mut out = String::from(
        "desired_inertia,max_passive_stiffness,saturated,free_motion_rms,E_net,E_abs,E_inj,replay_error,stability_integral,min_stability_integral,bounces\n",
    );
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for p in &report.points {
        let b = p.boundary.as_ref();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            p.desired_inertia,
            opt(p.max_passive_stiffness),
            p.saturated,
            opt(p.free_motion_rms),
            opt(b.map(|b| b.contact_energy.net)),
            opt(b.map(|b| b.contact_energy.absorbed)),
            opt(b.map(|b| b.contact_energy.injected)),
            opt(b.map(|b| b.replay_error)),
            opt(b.map(|b| b.stability_integral)),
            opt(b.map(|b| b.min_stability_integral)),
            b.map_or(String::new(), |b| b.bounces.to_string()),
        ));
    }
    out
}
