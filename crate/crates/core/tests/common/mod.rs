//! Shared helpers for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use ode_solvers::{Dopri5, System, Vector2};
use vdc_core::sim::ExperimentConfig;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn load_config(name: &str) -> ExperimentConfig {
    ExperimentConfig::from_path(&config_path(name)).expect("shipped config loads")
}

/// `m ë + d ė + k e = -f` on one channel.
struct ScalarImpedance {
    m: f64,
    d: f64,
    k: f64,
    f: f64,
}

impl System<f64, Vector2<f64>> for ScalarImpedance {
    fn system(&self, _t: f64, y: &Vector2<f64>, dy: &mut Vector2<f64>) {
        dy[0] = y[1];
        dy[1] = (-self.f - self.d * y[1] - self.k * y[0]) / self.m;
    }
}

/// Dense-output DOPRI5 solution of the target impedance, sampled every `dt`
/// from 0 to `t_end`. Returns `(t, e)` pairs.
#[allow(clippy::too_many_arguments)]
pub fn impedance_oracle(m: f64, d: f64, k: f64, f: f64, e0: f64, v0: f64, dt: f64, t_end: f64) -> Vec<(f64, f64)> {
    let mut solver = Dopri5::new(
        ScalarImpedance { m, d, k, f },
        0.0,
        t_end,
        dt,
        Vector2::new(e0, v0),
        1e-12,
        1e-14,
    );
    solver.integrate().expect("oracle integrates");
    solver
        .x_out()
        .iter()
        .zip(solver.y_out())
        .map(|(t, y)| (*t, y[0]))
        .collect()
}

/// `sqrt(mean((a - b)²)) / sqrt(mean(b²))`.
pub fn relative_rms(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}
