//! Second-order impedance allocation through a pseudo-impedance state.
//!
//! The auxiliary state `ψ` obeys `ψ̇ = Λψ + Γ_p e + Γ_v ė + Γ_f e_f` and the
//! sliding surface is `υ = ė + ϑ_e e + ϑ_ψ ψ`. With the gains chosen by
//! [`derive_gains`], `υ ≡ 0` forces `M_d ë + D_d ė + K_d e = -e_f`.
//! Errors are `e = 𝒳 - 𝒳_d` and `e_f = 𝓕 - 𝓕_d`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chain::pseudo_inverse;
use crate::error::{Error, Result};
use crate::spatial::{Mat6, Vec6};

/// Tolerance used when checking the gain identities on construction.
pub const GAIN_IDENTITY_TOL: f64 = 1e-10;

/// Desired impedance plus allocator tuning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpedanceSpec {
    pub mass: Mat6,
    pub damping: Mat6,
    pub stiffness: Mat6,
    pub lambda: Mat6,
    pub theta_psi: Mat6,
    pub theta_e: Mat6,
}

fn check_spd(m: &Mat6, what: &str) -> Result<()> {
    let asym = (m - m.transpose()).abs().max();
    if asym > 1e-12 * m.abs().max().max(1.0) {
        return Err(Error::Asymmetric { asymmetry: asym });
    }
    let min_eigenvalue = m.symmetric_eigenvalues().min();
    if min_eigenvalue <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            what: what.into(),
            min_eigenvalue,
        });
    }
    Ok(())
}

impl ImpedanceSpec {
    /// Builds a spec from diagonals.
    pub fn diagonal(mass: Vec6, damping: Vec6, stiffness: Vec6, lambda: Vec6, theta_psi: Vec6, theta_e: Vec6) -> Self {
        Self {
            mass: Mat6::from_diagonal(&mass),
            damping: Mat6::from_diagonal(&damping),
            stiffness: Mat6::from_diagonal(&stiffness),
            lambda: Mat6::from_diagonal(&lambda),
            theta_psi: Mat6::from_diagonal(&theta_psi),
            theta_e: Mat6::from_diagonal(&theta_e),
        }
    }

    /// The reference tuning used throughout the examples and tests.
    pub fn reference() -> Self {
        Self::diagonal(
            Vec6::new(1.0, 1.0, 2.2, 1.0, 1.0, 1.0),
            Vec6::repeat(80.0),
            Vec6::repeat(200.0),
            -Vec6::new(40.0, 40.0, 36.0, 40.0, 40.0, 40.0),
            Vec6::new(10.0, 10.0, 15.0, 10.0, 10.0, 10.0),
            Vec6::new(15.0, 15.0, 8.0, 20.0, 20.0, 20.0),
        )
    }

    /// Same tuning with every desired inertia set to `m_d`.
    pub fn with_uniform_mass(mut self, m_d: f64) -> Self {
        self.mass = Mat6::identity() * m_d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_spd(&self.mass, "desired inertia")?;
        check_spd(&self.damping, "desired damping")?;
        check_spd(&self.stiffness, "desired stiffness")?;
        let sym = (self.lambda + self.lambda.transpose()) * 0.5;
        let max_eigenvalue = sym.symmetric_eigenvalues().max();
        if max_eigenvalue > 1e-12 {
            return Err(Error::invalid(format!(
                "Lambda must be negative semidefinite (max eigenvalue {max_eigenvalue:.3e})"
            )));
        }
        if self.theta_psi.try_inverse().is_none() || self.theta_psi.determinant().abs() < 1e-300 {
            return Err(Error::Singular {
                what: "theta_psi".into(),
            });
        }
        Ok(())
    }
}

/// Gains of the pseudo-impedance dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocatorGains {
    pub gamma_p: Mat6,
    pub gamma_v: Mat6,
    pub gamma_f: Mat6,
}

impl AllocatorGains {
    /// Max residual of the three coefficient identities
    /// `ϑ_ψΓ_p - ϑ_ψΛϑ_ψ⁻¹ϑ_e = M_d⁻¹K_d`,
    /// `ϑ_e - ϑ_ψΛϑ_ψ⁻¹ + ϑ_ψΓ_v = M_d⁻¹D_d`,
    /// `ϑ_ψΓ_f = M_d⁻¹`.
    pub fn identity_residuals(&self, spec: &ImpedanceSpec) -> Result<[f64; 3]> {
        let tp_inv = spec.theta_psi.try_inverse().ok_or_else(|| Error::Singular {
            what: "theta_psi".into(),
        })?;
        let m_inv = spec.mass.try_inverse().ok_or_else(|| Error::Singular {
            what: "desired inertia".into(),
        })?;
        let tlt = spec.theta_psi * spec.lambda * tp_inv;
        let r1 = spec.theta_psi * self.gamma_p - tlt * spec.theta_e - m_inv * spec.stiffness;
        let r2 = spec.theta_e - tlt + spec.theta_psi * self.gamma_v - m_inv * spec.damping;
        let r3 = spec.theta_psi * self.gamma_f - m_inv;
        Ok([r1.abs().max(), r2.abs().max(), r3.abs().max()])
    }
}

/// `Γ_p = ϑ_ψ⁻¹(M_d⁻¹K_d + ϑ_ψΛϑ_ψ⁻¹ϑ_e)`,
/// `Γ_v = ϑ_ψ⁻¹(M_d⁻¹D_d - ϑ_e + ϑ_ψΛϑ_ψ⁻¹)`,
/// `Γ_f = ϑ_ψ⁻¹M_d⁻¹`.
pub fn derive_gains(spec: &ImpedanceSpec) -> Result<AllocatorGains> {
    spec.validate()?;
    let tp_inv = spec.theta_psi.try_inverse().ok_or_else(|| Error::Singular {
        what: "theta_psi".into(),
    })?;
    let m_inv = spec.mass.try_inverse().ok_or_else(|| Error::Singular {
        what: "desired inertia".into(),
    })?;
    let tlt = spec.theta_psi * spec.lambda * tp_inv;
    let gains = AllocatorGains {
        gamma_p: tp_inv * (m_inv * spec.stiffness + tlt * spec.theta_e),
        gamma_v: tp_inv * (m_inv * spec.damping - spec.theta_e + tlt),
        gamma_f: tp_inv * m_inv,
    };
    let worst = gains.identity_residuals(spec)?.into_iter().fold(0.0, f64::max);
    if worst > GAIN_IDENTITY_TOL * (1.0 + tlt.abs().max()) {
        return Err(Error::invalid(format!(
            "derived gains violate the coefficient identities (residual {worst:.3e}); tuning is ill-conditioned"
        )));
    }
    Ok(gains)
}

/// Pose, rate and force errors at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TrackingErrors {
    pub e_x: Vec6,
    pub e_x_dot: Vec6,
    pub e_f: Vec6,
}

impl TrackingErrors {
    pub fn new(e_x: Vec6, e_x_dot: Vec6, e_f: Vec6) -> Self {
        Self { e_x, e_x_dot, e_f }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AllocatorState {
    pub psi: Vec6,
    pub errors: TrackingErrors,
}

/// `Γ_p e + Γ_v ė + Γ_f e_f`.
#[inline]
fn psi_input(errors: &TrackingErrors, gains: &AllocatorGains) -> Vec6 {
    gains.gamma_p * errors.e_x + gains.gamma_v * errors.e_x_dot + gains.gamma_f * errors.e_f
}

/// `ψ̇ = Λψ + Γ_p e + Γ_v ė + Γ_f e_f`.
pub fn psi_rate(psi: &Vec6, errors: &TrackingErrors, gains: &AllocatorGains, spec: &ImpedanceSpec) -> Vec6 {
    spec.lambda * psi + psi_input(errors, gains)
}

/// One RK4 step of `ψ` with the errors held over the step.
pub fn psi_step(state: &AllocatorState, gains: &AllocatorGains, spec: &ImpedanceSpec, dt: f64) -> Vec6 {
    let u = psi_input(&state.errors, gains);
    let f = |psi: &Vec6| spec.lambda * psi + u;
    let psi = state.psi;
    let k1 = f(&psi);
    let k2 = f(&(psi + k1 * (dt / 2.0)));
    let k3 = f(&(psi + k2 * (dt / 2.0)));
    let k4 = f(&(psi + k3 * dt));
    psi + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// `υ = ė + ϑ_e e + ϑ_ψ ψ`.
pub fn sliding_surface(state: &AllocatorState, spec: &ImpedanceSpec) -> Vec6 {
    state.errors.e_x_dot + spec.theta_e * state.errors.e_x + spec.theta_psi * state.psi
}

/// `ψ` that places the state on the surface: `-ϑ_ψ⁻¹(ė + ϑ_e e)`.
pub fn on_surface_psi(errors: &TrackingErrors, spec: &ImpedanceSpec) -> Result<Vec6> {
    let tp_inv = spec.theta_psi.try_inverse().ok_or_else(|| Error::Singular {
        what: "theta_psi".into(),
    })?;
    Ok(-(tp_inv * (errors.e_x_dot + spec.theta_e * errors.e_x)))
}

/// `𝒳̇_d - ϑ_e e - ϑ_ψ ψ`.
#[inline]
pub fn required_velocity(x_d_dot: &Vec6, e_x: &Vec6, psi: &Vec6, theta_e: &Mat6, theta_psi: &Mat6) -> Vec6 {
    x_d_dot - theta_e * e_x - theta_psi * psi
}

/// `(𝒳̇_r, 𝒳̈_r)` with `𝒳̈_r = 𝒳̈_d - ϑ_e ė - ϑ_ψ ψ̇`.
pub fn required_cartesian(
    state: &AllocatorState,
    gains: &AllocatorGains,
    spec: &ImpedanceSpec,
    x_d_dot: &Vec6,
    x_d_ddot: &Vec6,
) -> (Vec6, Vec6) {
    let e = &state.errors;
    let v = required_velocity(x_d_dot, &e.e_x, &state.psi, &spec.theta_e, &spec.theta_psi);
    let psi_dot = psi_rate(&state.psi, e, gains, spec);
    let a = x_d_ddot - spec.theta_e * e.e_x_dot - spec.theta_psi * psi_dot;
    (v, a)
}

/// Tuning that collapses the allocator to a first-order impedance law:
/// `ϑ_e = K_d D_d⁻¹`, `ϑ_ψ = D_d⁻¹`, with `ψ := e_f` and `𝒳̈_r := 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderTuning {
    pub theta_e: Mat6,
    pub theta_psi: Mat6,
}

impl FirstOrderTuning {
    pub fn from_impedance(damping: &Mat6, stiffness: &Mat6) -> Result<Self> {
        let d_inv = damping.try_inverse().ok_or_else(|| Error::Singular {
            what: "desired damping".into(),
        })?;
        Ok(Self {
            theta_e: stiffness * d_inv,
            theta_psi: d_inv,
        })
    }

    /// Allocator required velocity with the substitutions applied.
    pub fn allocator_velocity(&self, x_d_dot: &Vec6, e_x: &Vec6, e_f: &Vec6) -> Vec6 {
        required_velocity(x_d_dot, e_x, e_f, &self.theta_e, &self.theta_psi)
    }

    /// `(𝒳̇_r, 𝒳̈_r)` of the reduced law.
    pub fn required(&self, x_d_dot: &Vec6, e_x: &Vec6, e_f: &Vec6) -> (Vec6, Vec6) {
        (self.allocator_velocity(x_d_dot, e_x, e_f), Vec6::zeros())
    }
}

/// First-order impedance law written directly:
/// `𝒳̇_d - K_d D_d⁻¹ e - D_d⁻¹ e_f`.
pub fn first_order_velocity(x_d_dot: &Vec6, e_x: &Vec6, e_f: &Vec6, damping: &Mat6, stiffness: &Mat6) -> Result<Vec6> {
    let d_inv = damping.try_inverse().ok_or_else(|| Error::Singular {
        what: "desired damping".into(),
    })?;
    let k_d_inv = stiffness * d_inv;
    Ok(x_d_dot - k_d_inv * e_x - d_inv * e_f)
}

/// Selected task channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskMask(pub [bool; 6]);

impl TaskMask {
    pub const ALL: TaskMask = TaskMask([true; 6]);

    pub fn from_channels(channels: &[usize]) -> Result<Self> {
        let mut m = [false; 6];
        for &c in channels {
            if c >= 6 {
                return Err(Error::invalid(format!("task channel {c} out of range")));
            }
            m[c] = true;
        }
        if !m.iter().any(|&b| b) {
            return Err(Error::invalid("task mask selects no channel"));
        }
        Ok(Self(m))
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..6).filter(|&i| self.0[i]).collect()
    }

    pub fn len(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Zeroes the unselected channels.
    pub fn apply(&self, v: &Vec6) -> Vec6 {
        Vec6::from_fn(|i, _| if self.0[i] { v[i] } else { 0.0 })
    }

    pub fn rows(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        m.select_rows(self.indices().iter())
    }

    pub fn entries(&self, v: &Vec6) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.indices().into_iter().map(|i| v[i]))
    }
}

/// Joint-space required motion `(q̇_r, q̈_r)` and whether damping was used.
#[derive(Debug, Clone, PartialEq)]
pub struct JointRequired {
    pub qdot_r: DVector<f64>,
    pub qddot_r: DVector<f64>,
    pub damped: bool,
}

/// `q̇_r = 𝒥†𝒳̇_r`, `q̈_r = 𝒥†(𝒳̈_r - 𝒥̇q̇_r)` on the selected channels.
pub fn required_joint(
    jacobian: &DMatrix<f64>,
    jacobian_dot: &DMatrix<f64>,
    mask: &TaskMask,
    x_r_dot: &Vec6,
    x_r_ddot: &Vec6,
) -> Result<JointRequired> {
    if jacobian.nrows() != 6 || jacobian.shape() != jacobian_dot.shape() {
        return Err(Error::Dimension {
            context: "task Jacobian rows".into(),
            expected: 6,
            found: jacobian.nrows(),
        });
    }
    let j = mask.rows(jacobian);
    let jd = mask.rows(jacobian_dot);
    let (pinv, damped) = pseudo_inverse(&j);
    let qdot_r = &pinv * mask.entries(x_r_dot);
    let qddot_r = &pinv * (mask.entries(x_r_ddot) - jd * &qdot_r);
    Ok(JointRequired {
        qdot_r,
        qddot_r,
        damped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn arb_vec6(scale: f64) -> impl Strategy<Value = Vec6> {
        prop::array::uniform6(-scale..scale).prop_map(|a| Vec6::from_column_slice(&a))
    }

    fn arb_spd6(lo: f64, hi: f64) -> impl Strategy<Value = Mat6> {
        (prop::collection::vec(-1.0..1.0f64, 36), prop::array::uniform6(lo..hi)).prop_map(|(a, d)| {
            let a = Mat6::from_column_slice(&a);
            let q = a.qr().q();
            q * Mat6::from_diagonal(&Vec6::from_column_slice(&d)) * q.transpose()
        })
    }

    pub(crate) fn arb_spec() -> impl Strategy<Value = ImpedanceSpec> {
        (
            arb_spd6(0.5, 10.0),
            arb_spd6(1.0, 100.0),
            arb_spd6(1.0, 500.0),
            arb_spd6(0.0, 50.0),
            prop::collection::vec(-1.0..1.0f64, 36),
            prop::collection::vec(-1.0..1.0f64, 36),
        )
            .prop_map(|(m, d, k, l, tp, te)| {
                let tp = Mat6::from_column_slice(&tp) + Mat6::identity() * 8.0;
                let te = Mat6::from_column_slice(&te) * 5.0 + Mat6::identity() * 10.0;
                ImpedanceSpec {
                    mass: m,
                    damping: d,
                    stiffness: k,
                    lambda: -l,
                    theta_psi: tp,
                    theta_e: te,
                }
            })
    }

    #[test]
    fn reference_z_channel_gains() {
        let g = derive_gains(&ImpedanceSpec::reference()).unwrap();
        // scalar z channel: m=2.2, d=80, k=200, ϑ_ψ=15, ϑ_e=8, Λ=-36
        let gp = (200.0 / 2.2 - 36.0 * 8.0) / 15.0;
        let gv = (80.0 / 2.2 - 8.0 - 36.0) / 15.0;
        let gf = 1.0 / (15.0 * 2.2);
        assert!((g.gamma_p[(2, 2)] - gp).abs() < 1e-12);
        assert!((g.gamma_v[(2, 2)] - gv).abs() < 1e-12);
        assert!((g.gamma_f[(2, 2)] - gf).abs() < 1e-12);
        assert!((g.gamma_p[(2, 2)] + 13.139).abs() < 1e-3);
        assert!((g.gamma_v[(2, 2)] + 0.5091).abs() < 1e-3);
        assert!((g.gamma_f[(2, 2)] - 0.030303).abs() < 1e-3);
    }

    #[test]
    fn degenerate_tuning_gives_plain_ratios() {
        let mut spec = ImpedanceSpec::reference();
        spec.lambda = Mat6::zeros();
        spec.theta_e = Mat6::zeros();
        spec.theta_psi = Mat6::identity();
        let g = derive_gains(&spec).unwrap();
        let m_inv = spec.mass.try_inverse().unwrap();
        assert!((g.gamma_p - m_inv * spec.stiffness).abs().max() < 1e-14);
        assert!((g.gamma_v - m_inv * spec.damping).abs().max() < 1e-14);
        assert!((g.gamma_f - m_inv).abs().max() < 1e-14);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = ImpedanceSpec::reference();
        s.theta_psi[(2, 2)] = 0.0;
        assert!(derive_gains(&s).is_err());
        let mut s = ImpedanceSpec::reference();
        s.lambda[(0, 0)] = 1.0;
        assert!(derive_gains(&s).is_err());
        let mut s = ImpedanceSpec::reference();
        s.mass[(1, 1)] = -1.0;
        assert!(derive_gains(&s).is_err());
    }

    #[test]
    fn psi_equilibrium_and_surface_zero() {
        let spec = ImpedanceSpec::reference();
        let g = derive_gains(&spec).unwrap();
        let st = AllocatorState::default();
        assert_eq!(psi_step(&st, &g, &spec, 1e-3), Vec6::zeros());
        assert_eq!(sliding_surface(&st, &spec), Vec6::zeros());
        let (v, a) = required_cartesian(&st, &g, &spec, &Vec6::repeat(0.3), &Vec6::repeat(-0.1));
        assert_eq!(v, Vec6::repeat(0.3));
        assert_eq!(a, Vec6::repeat(-0.1));
    }

    #[test]
    fn psi_step_matches_exact_linear_solution() {
        let spec = ImpedanceSpec::reference();
        let g = derive_gains(&spec).unwrap();
        let errors = TrackingErrors::new(Vec6::repeat(0.01), Vec6::repeat(-0.02), Vec6::repeat(3.0));
        let st = AllocatorState {
            psi: Vec6::repeat(0.05),
            errors,
        };
        let dt = 1e-3;
        let out = psi_step(&st, &g, &spec, dt);
        let u = psi_input(&errors, &g);
        for i in 0..6 {
            let l = spec.lambda[(i, i)];
            let exact = (l * dt).exp() * st.psi[i] + ((l * dt).exp() - 1.0) / l * u[i];
            assert!((out[i] - exact).abs() < 1e-9, "channel {i}");
        }
    }

    #[test]
    fn steady_contact_psi() {
        let spec = ImpedanceSpec::reference();
        let g = derive_gains(&spec).unwrap();
        let errors = TrackingErrors::new(Vec6::repeat(-0.05), Vec6::zeros(), Vec6::repeat(10.0));
        let lambda_inv = spec.lambda.try_inverse().unwrap();
        let psi = -(lambda_inv * (g.gamma_p * errors.e_x + g.gamma_f * errors.e_f));
        let st = AllocatorState { psi, errors };
        assert!((psi_step(&st, &g, &spec, 1e-3) - psi).abs().max() < 1e-12);
    }

    #[test]
    fn unit_jacobian_passes_through() {
        let j = DMatrix::identity(6, 6);
        let jd = DMatrix::zeros(6, 6);
        let xr = Vec6::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0);
        let r = required_joint(&j, &jd, &TaskMask::ALL, &xr, &Vec6::zeros()).unwrap();
        assert!((r.qdot_r - DVector::from_column_slice(xr.as_slice())).abs().max() < 1e-12);
    }

    #[test]
    fn jdot_term_cancels() {
        let j = DMatrix::from_fn(6, 6, |r, c| if r == c { 2.0 } else { 0.1 * (r as f64 - c as f64) });
        let jd = DMatrix::from_fn(6, 6, |r, c| 0.3 * ((r + 2 * c) as f64).sin());
        let xr = Vec6::new(0.1, -0.2, 0.3, 0.0, 0.5, -0.4);
        let qdot_r = j.clone().lu().solve(&DVector::from_column_slice(xr.as_slice())).unwrap();
        let xdd = Vec6::from_column_slice((&jd * &qdot_r).as_slice());
        let r = required_joint(&j, &jd, &TaskMask::ALL, &xr, &xdd).unwrap();
        assert!(r.qddot_r.abs().max() < 1e-12);
    }

    #[test]
    fn mask_selection() {
        let m = TaskMask::from_channels(&[0, 1, 5]).unwrap();
        assert_eq!(m.indices(), vec![0, 1, 5]);
        assert_eq!(m.apply(&Vec6::repeat(1.0)), Vec6::new(1.0, 1.0, 0.0, 0.0, 0.0, 1.0));
        assert!(TaskMask::from_channels(&[]).is_err());
        assert!(TaskMask::from_channels(&[6]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn gain_identities_hold(spec in arb_spec()) {
            let g = derive_gains(&spec).unwrap();
            let r = g.identity_residuals(&spec).unwrap();
            prop_assert!(r.iter().all(|&x| x < 1e-10), "{:?}", r);
        }

        #[test]
        fn on_surface_psi_zeroes_surface(spec in arb_spec(), e in arb_vec6(1.0), ed in arb_vec6(1.0)) {
            let errors = TrackingErrors::new(e, ed, Vec6::zeros());
            let psi = on_surface_psi(&errors, &spec).unwrap();
            let u = sliding_surface(&AllocatorState { psi, errors }, &spec);
            prop_assert!(u.abs().max() < 1e-10);
        }

        #[test]
        fn surface_matches_direct_arithmetic(spec in arb_spec(), e in arb_vec6(1.0), ed in arb_vec6(1.0), psi in arb_vec6(1.0)) {
            let st = AllocatorState { psi, errors: TrackingErrors::new(e, ed, Vec6::zeros()) };
            let u = sliding_surface(&st, &spec);
            for i in 0..6 {
                let mut direct = ed[i];
                for k in 0..6 {
                    direct += spec.theta_e[(i, k)] * e[k] + spec.theta_psi[(i, k)] * psi[k];
                }
                prop_assert!((u[i] - direct).abs() < 1e-12 * (1.0 + direct.abs()));
            }
        }

        #[test]
        fn first_order_reduction_is_exact(
            d in arb_spd6(1.0, 100.0), k in arb_spd6(1.0, 500.0),
            xd in arb_vec6(1.0), e in arb_vec6(1.0), ef in arb_vec6(10.0),
        ) {
            let t = FirstOrderTuning::from_impedance(&d, &k).unwrap();
            let reduced = t.allocator_velocity(&xd, &e, &ef);
            let direct = first_order_velocity(&xd, &e, &ef, &d, &k).unwrap();
            prop_assert_eq!(reduced, direct);
            prop_assert_eq!(t.required(&xd, &e, &ef).1, Vec6::zeros());
        }

        #[test]
        fn square_required_joint_solves(a in prop::collection::vec(-1.0..1.0f64, 36), xr in arb_vec6(1.0)) {
            let j = DMatrix::from_column_slice(6, 6, &a) + DMatrix::identity(6, 6) * 3.0;
            let r = required_joint(&j, &DMatrix::zeros(6, 6), &TaskMask::ALL, &xr, &Vec6::zeros()).unwrap();
            prop_assume!(!r.damped);
            let back = &j * &r.qdot_r;
            prop_assert!((back - DVector::from_column_slice(xr.as_slice())).abs().max() < 1e-10);
        }
    }
}
