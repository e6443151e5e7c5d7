//! Single rigid body: inertial parameters, the pseudo-inertia bijection and the
//! linear-in-parameters equations of motion.
//!
//! All quantities are expressed in the body frame `{A}`, which need not sit at
//! the center of mass. The parameter vector is
//! `φ = (m, hx, hy, hz, Ixx, Iyy, Izz, Ixy, Ixz, Iyz)` with `h = m·c` the first
//! mass moment and `I` the rotational inertia about the frame origin.
//!
//! Gravity enters as a constant bias acceleration: the dynamics are evaluated
//! at `V̇ - (g, 0)`, so the regressor stays 6×10.

use nalgebra::{Matrix4, SMatrix, SVector, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::{join, skew, split, Mat3, Mat6, SpatialVector, Vec3, Vec6, VectorKind};

pub type ParamVector = SVector<f64, 10>;
pub type Regressor = SMatrix<f64, 6, 10>;

const SYMMETRY_TOL: f64 = 1e-12;

/// Mass, first mass moment and rotational inertia about the frame origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InertialParams {
    pub mass: f64,
    pub first_moment: Vec3,
    pub inertia: Mat3,
}

impl InertialParams {
    pub fn new(mass: f64, first_moment: Vec3, inertia: Mat3) -> Self {
        Self {
            mass,
            first_moment,
            inertia,
        }
    }

    /// Builds parameters from mass, center of mass and inertia about the COM
    /// (parallel-axis shift to the frame origin).
    pub fn from_com(mass: f64, com: Vec3, inertia_com: Mat3) -> Self {
        let shift = mass * (com.dot(&com) * Mat3::identity() - com * com.transpose());
        Self::new(mass, mass * com, inertia_com + shift)
    }

    /// Solid box of the given side lengths whose center sits at `com`.
    pub fn solid_box(mass: f64, com: Vec3, size: Vec3) -> Self {
        let (a, b, c) = (size.x * size.x, size.y * size.y, size.z * size.z);
        let i = Mat3::from_diagonal(&Vec3::new(b + c, a + c, a + b)) * (mass / 12.0);
        Self::from_com(mass, com, i)
    }

    /// Flattens to `φ`. The inertia is vech-ordered `(xx, yy, zz, xy, xz, yz)`.
    pub fn to_vector(&self) -> ParamVector {
        let h = &self.first_moment;
        let i = &self.inertia;
        ParamVector::from_column_slice(&[
            self.mass,
            h.x,
            h.y,
            h.z,
            i[(0, 0)],
            i[(1, 1)],
            i[(2, 2)],
            i[(0, 1)],
            i[(0, 2)],
            i[(1, 2)],
        ])
    }

    pub fn from_vector(phi: &ParamVector) -> Self {
        let inertia = Mat3::new(
            phi[4], phi[7], phi[8], //
            phi[7], phi[5], phi[9], //
            phi[8], phi[9], phi[6],
        );
        Self::new(phi[0], Vec3::new(phi[1], phi[2], phi[3]), inertia)
    }

    pub fn pseudo_inertia(&self) -> PseudoInertia {
        f_map(self)
    }

    /// `f(φ) ≻ 0`.
    pub fn is_physically_consistent(&self) -> bool {
        self.pseudo_inertia().min_eigenvalue() > 0.0
    }

    /// Spatial mass matrix `[[m·1, -(h×)], [(h×), I]]`.
    pub fn mass_matrix(&self) -> Mat6 {
        let hx = skew(&self.first_moment);
        let mut m = Mat6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(&(Mat3::identity() * self.mass));
        m.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-hx));
        m.fixed_view_mut::<3, 3>(3, 0).copy_from(&hx);
        m.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.inertia);
        m
    }

    /// `M·x` without assembling `M`.
    #[inline]
    pub(crate) fn mass_times(&self, x: &Vec6) -> Vec6 {
        let (lin, ang) = split(x);
        let h = &self.first_moment;
        join(
            &(lin * self.mass - h.cross(&ang)),
            &(h.cross(&lin) + self.inertia * ang),
        )
    }

    /// Net wrench `M (V̇ - g̃) + C(V) V_r` with `C(V) V_r = V_r ×* (M V)`.
    #[inline]
    pub(crate) fn wrench(&self, vdot: &Vec6, v_r: &Vec6, v: &Vec6, gravity: &Vec3) -> Vec6 {
        let mut a = *vdot;
        a[0] -= gravity.x;
        a[1] -= gravity.y;
        a[2] -= gravity.z;
        self.mass_times(&a) + crate::spatial::force_cross(v_r, &self.mass_times(v))
    }
}

/// 4×4 symmetric image `𝓛 = f(φ)` of the inertial parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoInertia(Matrix4<f64>);

impl PseudoInertia {
    /// Wraps a matrix after checking symmetry.
    pub fn new(l: Matrix4<f64>) -> Result<Self> {
        let asymmetry = (l - l.transpose()).abs().max();
        let scale = l.abs().max().max(1.0);
        if asymmetry > SYMMETRY_TOL * scale {
            return Err(Error::Asymmetric { asymmetry });
        }
        Ok(Self(l))
    }

    pub(crate) fn new_unchecked(l: Matrix4<f64>) -> Self {
        Self(l)
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn eigenvalues(&self) -> Vector4<f64> {
        SymmetricEigen::new(self.0).eigenvalues
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().min()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.0.cholesky().is_some() && self.min_eigenvalue() > 0.0
    }
}

/// `f(φ) = [[½tr(I)·1 - I, h], [hᵀ, m]]`.
pub fn f_map(p: &InertialParams) -> PseudoInertia {
    let sigma = Mat3::identity() * (0.5 * p.inertia.trace()) - p.inertia;
    let mut l = Matrix4::zeros();
    l.fixed_view_mut::<3, 3>(0, 0).copy_from(&sigma);
    l.fixed_view_mut::<3, 1>(0, 3).copy_from(&p.first_moment);
    l.fixed_view_mut::<1, 3>(3, 0)
        .copy_from(&p.first_moment.transpose());
    l[(3, 3)] = p.mass;
    PseudoInertia(l)
}

/// Inverse of [`f_map`]: `m = 𝓛₄₄`, `h` from the last column, `I = tr(Σ)·1 - Σ`.
pub fn f_inv(l: &PseudoInertia) -> InertialParams {
    let m = l.matrix();
    let sigma: Mat3 = m.fixed_view::<3, 3>(0, 0).into_owned();
    let sigma = (sigma + sigma.transpose()) * 0.5;
    let h = Vec3::new(m[(0, 3)], m[(1, 3)], m[(2, 3)]);
    InertialParams::new(m[(3, 3)], h, Mat3::identity() * sigma.trace() - sigma)
}

/// Checked variant of [`f_inv`] for matrices that have not been validated.
pub fn f_inv_checked(l: &Matrix4<f64>) -> Result<InertialParams> {
    Ok(f_inv(&PseudoInertia::new(*l)?))
}

/// `M`, `C(V)` and `G` of a single body, with `M V̇ + C V + G = F*`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyDynTerms {
    pub mass_matrix: Mat6,
    pub coriolis: Mat6,
    pub gravity: Vec6,
    velocity: Vec6,
}

impl BodyDynTerms {
    pub fn net_wrench(&self, vdot: &Vec6) -> Vec6 {
        self.mass_matrix * vdot + self.coriolis * self.velocity + self.gravity
    }
}

/// Matrix of `X ↦ X ×* F`; skew-symmetric for every wrench `F`.
pub fn force_bar(f: &Vec6) -> Mat6 {
    let (force, moment) = split(f);
    let fx = skew(&force);
    let mut c = Mat6::zeros();
    c.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-fx));
    c.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-fx));
    c.fixed_view_mut::<3, 3>(3, 3).copy_from(&(-skew(&moment)));
    c
}

/// Equation-of-motion terms for body-frame velocity `v` and gravity `g`
/// expressed in the same body frame.
pub fn dyn_terms(p: &InertialParams, v: &SpatialVector, gravity: &Vec3) -> Result<BodyDynTerms> {
    v.expect_kind(VectorKind::Velocity)?;
    let l = f_map(p);
    let min_eigenvalue = l.min_eigenvalue();
    if min_eigenvalue <= 0.0 {
        return Err(Error::InconsistentInertia { min_eigenvalue });
    }
    let vel = v.to_vec6();
    let mass_matrix = p.mass_matrix();
    Ok(BodyDynTerms {
        mass_matrix,
        coriolis: force_bar(&(mass_matrix * vel)),
        gravity: mass_matrix * join(&(-gravity), &Vec3::zeros()),
        velocity: vel,
    })
}

/// `L(w)` with `I·w = L(w)·vech(I)`.
#[inline]
fn vech_operator(w: &Vec3) -> SMatrix<f64, 3, 6> {
    SMatrix::<f64, 3, 6>::new(
        w.x, 0.0, 0.0, w.y, w.z, 0.0, //
        0.0, w.y, 0.0, w.x, 0.0, w.z, //
        0.0, 0.0, w.z, 0.0, w.x, w.y,
    )
}

/// Regressor with `Y·φ = M (V̇_r - g̃) + C(V) V_r`.
///
/// Passing `v_r == v` and `vdot_r == V̇` gives the plain `Y(V̇, V)` factorization
/// of the body dynamics.
pub fn regressor(vdot_r: &Vec6, v_r: &Vec6, v: &Vec6, gravity: &Vec3) -> Regressor {
    let (acc, alpha) = split(vdot_r);
    let acc = acc - gravity;
    let (lin_r, ang_r) = split(v_r);
    let (lin, ang) = split(v);

    let ang_r_x = skew(&ang_r);
    let ang_x = skew(&ang);

    let mut y = Regressor::zeros();

    let m_lin = acc + ang_r.cross(&lin);
    let m_ang = lin_r.cross(&lin);
    y.fixed_view_mut::<3, 1>(0, 0).copy_from(&m_lin);
    y.fixed_view_mut::<3, 1>(3, 0).copy_from(&m_ang);

    let h_lin = skew(&alpha) + ang_r_x * ang_x;
    let h_ang = -skew(&acc) + skew(&lin_r) * ang_x - ang_r_x * skew(&lin);
    y.fixed_view_mut::<3, 3>(0, 1).copy_from(&h_lin);
    y.fixed_view_mut::<3, 3>(3, 1).copy_from(&h_ang);

    let i_ang = vech_operator(&alpha) + ang_r_x * vech_operator(&ang);
    y.fixed_view_mut::<3, 6>(3, 4).copy_from(&i_ang);
    y
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn arb_vec6(scale: f64) -> impl Strategy<Value = Vec6> {
        prop::array::uniform6(-scale..scale).prop_map(|a| Vec6::from_column_slice(&a))
    }

    /// Physically consistent parameters drawn as `f⁻¹(AAᵀ + εI)`.
    pub(crate) fn arb_consistent() -> impl Strategy<Value = InertialParams> {
        prop::collection::vec(-1.0..1.0f64, 16).prop_map(|a| {
            let a = Matrix4::from_column_slice(&a);
            let l = a * a.transpose() + Matrix4::identity() * 0.05;
            f_inv(&PseudoInertia::new_unchecked(l))
        })
    }

    fn arb_params() -> impl Strategy<Value = InertialParams> {
        prop::collection::vec(-2.0..2.0f64, 10)
            .prop_map(|a| InertialParams::from_vector(&ParamVector::from_column_slice(&a)))
    }

    #[test]
    fn unit_sphere_maps_to_diagonal() {
        let p = InertialParams::new(1.0, Vec3::zeros(), Mat3::identity() * 0.4);
        let l = f_map(&p);
        let expected = Matrix4::from_diagonal(&Vector4::new(0.2, 0.2, 0.2, 1.0));
        assert_relative_eq!(*l.matrix(), expected, epsilon = 1e-15);
        let back = f_inv(&PseudoInertia::new(expected).unwrap());
        assert_relative_eq!(back.to_vector(), p.to_vector(), epsilon = 1e-15);
    }

    #[test]
    fn zero_params_map_to_zero() {
        let p = InertialParams::new(0.0, Vec3::zeros(), Mat3::zeros());
        assert_eq!(*f_map(&p).matrix(), Matrix4::zeros());
    }

    #[test]
    fn identity_pseudo_inertia() {
        let p = f_inv(&PseudoInertia::new(Matrix4::identity()).unwrap());
        assert_eq!(p.mass, 1.0);
        assert_eq!(p.first_moment, Vec3::zeros());
        assert_eq!(p.inertia, Mat3::identity() * 2.0);
    }

    #[test]
    fn asymmetric_input_rejected() {
        let mut l = Matrix4::identity();
        l[(0, 1)] = 1e-3;
        assert!(matches!(f_inv_checked(&l), Err(Error::Asymmetric { .. })));
    }

    #[test]
    fn point_mass_at_rest_feels_only_gravity() {
        let p = InertialParams::new(2.0, Vec3::zeros(), Mat3::identity() * 1e-3);
        let g = Vec3::new(0.0, 0.0, -9.81);
        let v = SpatialVector::zero(VectorKind::Velocity, crate::spatial::FrameId::Body(0));
        let terms = dyn_terms(&p, &v, &g).unwrap();
        let w = terms.net_wrench(&Vec6::zeros());
        assert_relative_eq!(w, Vec6::new(0.0, 0.0, 2.0 * 9.81, 0.0, 0.0, 0.0), epsilon = 1e-12);
        assert_eq!(terms.coriolis * Vec6::zeros(), Vec6::zeros());
    }

    #[test]
    fn inconsistent_params_rejected() {
        let p = InertialParams::new(-1.0, Vec3::zeros(), Mat3::identity());
        let v = SpatialVector::zero(VectorKind::Velocity, crate::spatial::FrameId::Body(0));
        assert!(matches!(
            dyn_terms(&p, &v, &Vec3::zeros()),
            Err(Error::InconsistentInertia { .. })
        ));
    }

    #[test]
    fn solid_box_is_consistent() {
        let p = InertialParams::solid_box(2.0, Vec3::new(0.2, 0.0, 0.0), Vec3::new(0.4, 0.05, 0.05));
        assert!(p.is_physically_consistent());
        // thin-rod check about the joint axis z: m l²/3 + m w²/12
        assert_relative_eq!(p.inertia[(2, 2)], 2.0 * 0.16 / 3.0 + 2.0 * 0.0025 / 12.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn f_map_round_trip(p in arb_params()) {
            let back = f_inv(&f_map(&p));
            prop_assert!((back.to_vector() - p.to_vector()).abs().max() < 1e-12);
        }

        #[test]
        fn f_map_is_linear(p1 in arb_params(), p2 in arb_params(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
            let mix = InertialParams::from_vector(&(p1.to_vector() * a + p2.to_vector() * b));
            let lhs = *f_map(&mix).matrix();
            let rhs = f_map(&p1).matrix() * a + f_map(&p2).matrix() * b;
            prop_assert!((lhs - rhs).abs().max() < 1e-12);
        }

        #[test]
        fn consistency_matches_acceptance(p in arb_params()) {
            let v = SpatialVector::zero(VectorKind::Velocity, crate::spatial::FrameId::Body(0));
            let accepted = dyn_terms(&p, &v, &Vec3::zeros()).is_ok();
            prop_assert_eq!(accepted, f_map(&p).min_eigenvalue() > 0.0);
        }

        #[test]
        fn regressor_reproduces_dynamics(
            p in arb_consistent(),
            v in arb_vec6(2.0),
            vdot in arb_vec6(5.0),
            g in prop::array::uniform3(-10.0..10.0f64),
        ) {
            let g = Vec3::new(g[0], g[1], g[2]);
            let sv = SpatialVector::from_vec6(VectorKind::Velocity, crate::spatial::FrameId::Body(0), &v);
            let terms = dyn_terms(&p, &sv, &g).unwrap();
            let y = regressor(&vdot, &v, &v, &g);
            let err = (y * p.to_vector() - terms.net_wrench(&vdot)).abs().max();
            prop_assert!(err < 1e-10);
        }

        #[test]
        fn required_regressor_uses_actual_coriolis(
            p in arb_consistent(),
            v in arb_vec6(2.0),
            v_r in arb_vec6(2.0),
            vdot_r in arb_vec6(5.0),
        ) {
            let g = Vec3::new(0.0, 0.0, -9.81);
            let sv = SpatialVector::from_vec6(VectorKind::Velocity, crate::spatial::FrameId::Body(0), &v);
            let terms = dyn_terms(&p, &sv, &g).unwrap();
            let expected = terms.mass_matrix * vdot_r + terms.coriolis * v_r + terms.gravity;
            let y = regressor(&vdot_r, &v_r, &v, &g);
            prop_assert!((y * p.to_vector() - expected).abs().max() < 1e-10);
            prop_assert!((p.wrench(&vdot_r, &v_r, &v, &g) - expected).abs().max() < 1e-10);
        }

        #[test]
        fn coriolis_is_skew(p in arb_consistent(), v in arb_vec6(3.0)) {
            let sv = SpatialVector::from_vec6(VectorKind::Velocity, crate::spatial::FrameId::Body(0), &v);
            let c = dyn_terms(&p, &sv, &Vec3::zeros()).unwrap().coriolis;
            // M is constant in the body frame, so Ṁ - 2C = -2C.
            prop_assert!((c + c.transpose()).abs().max() < 1e-12);
        }

        #[test]
        fn mass_matrix_is_spd_for_consistent_params(p in arb_consistent()) {
            let m = p.mass_matrix();
            prop_assert!((m - m.transpose()).abs().max() < 1e-14);
            prop_assert!(m.cholesky().is_some());
        }

        #[test]
        fn regressor_is_linear_in_params(
            p1 in arb_params(), p2 in arb_params(),
            v in arb_vec6(2.0), vdot in arb_vec6(2.0),
        ) {
            let g = Vec3::new(0.0, 0.0, -9.81);
            let y = regressor(&vdot, &v, &v, &g);
            let lhs = y * (p1.to_vector() + p2.to_vector());
            let rhs = y * p1.to_vector() + y * p2.to_vector();
            prop_assert!((lhs - rhs).abs().max() < 1e-10);
        }
    }

    #[test]
    fn static_regressor_is_gravity_wrench() {
        let g = Vec3::new(0.0, 0.0, -9.81);
        let y = regressor(&Vec6::zeros(), &Vec6::zeros(), &Vec6::zeros(), &g);
        let p = InertialParams::from_com(1.5, Vec3::new(0.1, 0.2, 0.0), Mat3::identity() * 0.01);
        let w = y * p.to_vector();
        let f = -g * p.mass;
        let m = p.first_moment.cross(&(-g));
        assert_relative_eq!(w, join(&f, &m), epsilon = 1e-12);
    }
}
