//! Recomposition: per-body required net wrenches, joint torques, and the
//! power-flow and contact-energy monitors.

use serde::{Deserialize, Serialize};

use crate::body::{ParamVector, Regressor};
use crate::error::{Error, Result};
use crate::spatial::{Mat6, SpatialVector, Vec6, VectorKind};

pub const DEFAULT_FEEDBACK_GAIN: f64 = 60.0;

/// Per-body velocity feedback `K_A`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlGains {
    k_a: Vec<Mat6>,
}

impl ControlGains {
    pub fn new(k_a: Vec<Mat6>) -> Result<Self> {
        for (i, k) in k_a.iter().enumerate() {
            let asymmetry = (k - k.transpose()).abs().max();
            if asymmetry > 1e-12 * k.abs().max().max(1.0) {
                return Err(Error::Asymmetric { asymmetry });
            }
            let min_eigenvalue = k.symmetric_eigenvalues().min();
            if min_eigenvalue <= 0.0 {
                return Err(Error::NotPositiveDefinite {
                    what: format!("feedback gain of body {i}"),
                    min_eigenvalue,
                });
            }
        }
        Ok(Self { k_a })
    }

    pub fn uniform(bodies: usize, gain: f64) -> Result<Self> {
        Self::new(vec![Mat6::identity() * gain; bodies])
    }

    pub fn gains(&self) -> &[Mat6] {
        &self.k_a
    }

    pub fn len(&self) -> usize {
        self.k_a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k_a.is_empty()
    }
}

/// `ᴬF*_r = ʳY φ̂ + K_A (V_r - V)`.
#[inline]
pub fn required_net_force(yr: &Regressor, phi_hat: &ParamVector, k_a: &Mat6, v_r: &Vec6, v: &Vec6) -> Vec6 {
    yr * phi_hat + k_a * (v_r - v)
}

/// `τ = sᵀ F_r + b q̇_r`: rigid joint with viscous friction compensation.
#[inline]
pub fn joint_torque(screw: &Vec6, f_r: &Vec6, qdot_r: f64, friction: f64) -> f64 {
    screw.dot(f_r) + friction * qdot_r
}

/// Virtual power flow `(V_r - V)ᵀ(F_r - F)` at one frame.
pub fn vpf(v_r: &SpatialVector, v: &SpatialVector, f_r: &SpatialVector, f: &SpatialVector) -> Result<f64> {
    let dv = v_r.checked_sub(v)?;
    let df = f_r.checked_sub(f)?;
    dv.expect_kind(VectorKind::Velocity)?;
    dv.power(&df)
}

/// Unchecked [`vpf`] on raw vectors already known to share a frame.
#[inline]
pub fn vpf_raw(v_r: &Vec6, v: &Vec6, f_r: &Vec6, f: &Vec6) -> f64 {
    (v_r - v).dot(&(f_r - f))
}

/// `𝒮 = -υᵀ(𝓕_d - 𝓕)`.
#[inline]
pub fn stability_function(upsilon: &Vec6, f_d: &Vec6, f: &Vec6) -> f64 {
    -upsilon.dot(&(f_d - f))
}

/// `𝒮` written through the errors: `(-ė - ϑ_e e - ϑ_ψ ψ)ᵀ(𝓕_d - 𝓕)`.
#[allow(clippy::too_many_arguments)]
pub fn stability_function_expanded(
    e_x: &Vec6,
    e_x_dot: &Vec6,
    psi: &Vec6,
    theta_e: &Mat6,
    theta_psi: &Mat6,
    f_d: &Vec6,
    f: &Vec6,
) -> f64 {
    (-e_x_dot - theta_e * e_x - theta_psi * psi).dot(&(f_d - f))
}

/// Contact energy split by the sign of the power.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactEnergy {
    pub net: f64,
    pub absorbed: f64,
    pub injected: f64,
}

impl ContactEnergy {
    /// `|net - (absorbed + injected)|`.
    pub fn balance_error(&self) -> f64 {
        (self.net - (self.absorbed + self.injected)).abs()
    }
}

/// Running trapezoidal integral of `f_c · v`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyAccumulator {
    energy: ContactEnergy,
    last_power: Option<f64>,
}

impl EnergyAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one sample `f_c · v`; `dt` is the spacing to the previous sample.
    pub fn push(&mut self, power: f64, dt: f64) {
        if let Some(prev) = self.last_power {
            let h = 0.5 * dt;
            self.energy.net += h * (prev + power);
            self.energy.absorbed += h * (prev.max(0.0) + power.max(0.0));
            self.energy.injected += h * (prev.min(0.0) + power.min(0.0));
        }
        self.last_power = Some(power);
    }

    /// Ends the current window; the next sample starts a new segment.
    pub fn break_segment(&mut self) {
        self.last_power = None;
    }

    pub fn energy(&self) -> ContactEnergy {
        self.energy
    }
}

/// Trapezoidal `∫ f_c v dt` over aligned uniformly sampled traces.
pub fn passivity_energy(f_c: &[f64], v: &[f64], dt: f64) -> Result<ContactEnergy> {
    if f_c.len() != v.len() {
        return Err(Error::Dimension {
            context: "force and velocity traces".into(),
            expected: f_c.len(),
            found: v.len(),
        });
    }
    let mut acc = EnergyAccumulator::new();
    for (f, x) in f_c.iter().zip(v) {
        acc.push(f * x, dt);
    }
    Ok(acc.energy())
}

/// Per-step monitor values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MonitorRecord {
    /// VPF at each body's driven cutting point.
    pub vpf: Vec<f64>,
    pub stability: f64,
    pub stability_expanded: f64,
    pub energy: ContactEnergy,
}
