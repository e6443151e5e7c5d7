//! 6D spatial vectors and frame transforms.
//!
//! Spatial vectors are stacked linear-then-angular: a velocity twist is
//! `(v, ω)` and a force wrench is `(f, m)`. A [`SpatialTransform`] from frame
//! `{A}` to frame `{B}` stores `ᴬR_B` and `ᴬr_AB` and assembles to
//!
//! ```text
//! ᴬU_B = [ R       0 ]
//!        [ (r×)R   R ]
//! ```
//!
//! Velocities move `A → B` through `ᴬU_Bᵀ`, forces move `B → A` through `ᴬU_B`.
//! That pairing makes the power `VᵀF` frame-invariant.

use std::fmt;

use nalgebra::{Matrix3, Matrix6, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Vec6 = Vector6<f64>;
pub type Mat6 = Matrix6<f64>;

const ROTATION_TOL: f64 = 1e-9;

/// Frame identifier. Frames are checked at runtime whenever spatial
/// quantities are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FrameId {
    /// Inertial base frame.
    World,
    /// Frame attached to body `i` at its driven cutting point (joint `i`).
    Body(usize),
    /// End-effector frame `{T}`.
    Tool,
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameId::World => write!(f, "{{W}}"),
            FrameId::Body(i) => write!(f, "{{A{i}}}"),
            FrameId::Tool => write!(f, "{{T}}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VectorKind {
    Velocity,
    Force,
}

/// Skew-symmetric cross-product matrix: `skew(v) * w == v × w`.
#[inline]
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[inline]
pub(crate) fn split(x: &Vec6) -> (Vec3, Vec3) {
    (
        Vec3::new(x[0], x[1], x[2]),
        Vec3::new(x[3], x[4], x[5]),
    )
}

#[inline]
pub(crate) fn join(lin: &Vec3, ang: &Vec3) -> Vec6 {
    Vec6::new(lin.x, lin.y, lin.z, ang.x, ang.y, ang.z)
}

/// Motion cross product `a × b` for twists `(v, ω)`.
#[inline]
pub fn motion_cross(a: &Vec6, b: &Vec6) -> Vec6 {
    let (va, wa) = split(a);
    let (vb, wb) = split(b);
    join(&(wa.cross(&vb) + va.cross(&wb)), &wa.cross(&wb))
}

/// Force cross product `v ×* f` for a twist `v` and wrench `f`.
#[inline]
pub fn force_cross(v: &Vec6, f: &Vec6) -> Vec6 {
    let (lin, ang) = split(v);
    let (force, moment) = split(f);
    join(&ang.cross(&force), &(lin.cross(&force) + ang.cross(&moment)))
}

/// A velocity twist or force wrench tagged with its kind and frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialVector {
    linear: Vec3,
    angular: Vec3,
    kind: VectorKind,
    frame: FrameId,
}

impl SpatialVector {
    pub fn new(kind: VectorKind, frame: FrameId, linear: Vec3, angular: Vec3) -> Self {
        Self {
            linear,
            angular,
            kind,
            frame,
        }
    }

    pub fn velocity(frame: FrameId, linear: Vec3, angular: Vec3) -> Self {
        Self::new(VectorKind::Velocity, frame, linear, angular)
    }

    pub fn force(frame: FrameId, force: Vec3, moment: Vec3) -> Self {
        Self::new(VectorKind::Force, frame, force, moment)
    }

    pub fn from_vec6(kind: VectorKind, frame: FrameId, x: &Vec6) -> Self {
        let (linear, angular) = split(x);
        Self::new(kind, frame, linear, angular)
    }

    pub fn zero(kind: VectorKind, frame: FrameId) -> Self {
        Self::new(kind, frame, Vec3::zeros(), Vec3::zeros())
    }

    pub fn linear(&self) -> &Vec3 {
        &self.linear
    }

    pub fn angular(&self) -> &Vec3 {
        &self.angular
    }

    pub fn kind(&self) -> VectorKind {
        self.kind
    }

    pub fn frame(&self) -> FrameId {
        self.frame
    }

    pub fn to_vec6(&self) -> Vec6 {
        join(&self.linear, &self.angular)
    }

    /// Power pairing `Vᵀ F` between a velocity and a force in the same frame.
    pub fn power(&self, force: &SpatialVector) -> Result<f64> {
        self.expect_kind(VectorKind::Velocity)?;
        force.expect_kind(VectorKind::Force)?;
        self.expect_frame(force.frame)?;
        Ok(self.linear.dot(&force.linear) + self.angular.dot(&force.angular))
    }

    /// Difference of two quantities of the same kind and frame.
    pub fn checked_sub(&self, other: &SpatialVector) -> Result<SpatialVector> {
        other.expect_kind(self.kind)?;
        self.expect_frame(other.frame)?;
        Ok(Self::new(
            self.kind,
            self.frame,
            self.linear - other.linear,
            self.angular - other.angular,
        ))
    }

    pub(crate) fn expect_kind(&self, kind: VectorKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::KindMismatch {
                expected: kind,
                found: self.kind,
            });
        }
        Ok(())
    }

    pub(crate) fn expect_frame(&self, frame: FrameId) -> Result<()> {
        if self.frame != frame {
            return Err(Error::FrameMismatch {
                expected: frame,
                found: self.frame,
            });
        }
        Ok(())
    }
}

/// Frame change `ᴬU_B` from `source = {A}` to `target = {B}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialTransform {
    rotation: Mat3,
    offset: Vec3,
    source: FrameId,
    target: FrameId,
}

fn rotation_residual(r: &Mat3) -> f64 {
    (r.transpose() * r - Mat3::identity()).abs().max()
}

/// Gram-Schmidt on the columns of `r`, keeping the right-handed orientation.
fn orthonormalize(r: &Mat3) -> Mat3 {
    let x = r.column(0).normalize();
    let y = (r.column(1) - x * x.dot(&r.column(1))).normalize();
    let z = x.cross(&y);
    Mat3::from_columns(&[x, y, z])
}

impl SpatialTransform {
    /// Builds `ᴬU_B`; `rotation` must be orthonormal with determinant +1.
    pub fn new(rotation: Mat3, offset: Vec3, source: FrameId, target: FrameId) -> Result<Self> {
        let residual = rotation_residual(&rotation);
        let det = rotation.determinant();
        if residual > ROTATION_TOL || (det - 1.0).abs() > ROTATION_TOL {
            return Err(Error::NotARotation {
                residual: residual.max((det - 1.0).abs()),
            });
        }
        Ok(Self::from_parts_unchecked(rotation, offset, source, target))
    }

    pub(crate) fn from_parts_unchecked(
        rotation: Mat3,
        offset: Vec3,
        source: FrameId,
        target: FrameId,
    ) -> Self {
        Self {
            rotation,
            offset,
            source,
            target,
        }
    }

    pub fn identity(frame: FrameId) -> Self {
        Self::from_parts_unchecked(Mat3::identity(), Vec3::zeros(), frame, frame)
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn offset(&self) -> &Vec3 {
        &self.offset
    }

    pub fn source(&self) -> FrameId {
        self.source
    }

    pub fn target(&self) -> FrameId {
        self.target
    }

    /// The assembled 6×6 operator.
    pub fn matrix(&self) -> Mat6 {
        let mut u = Mat6::zeros();
        let lower = skew(&self.offset) * self.rotation;
        u.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        u.fixed_view_mut::<3, 3>(3, 0).copy_from(&lower);
        u.fixed_view_mut::<3, 3>(3, 3).copy_from(&self.rotation);
        u
    }

    /// `ᴬU_B · x` for a raw wrench in `{B}`; result in `{A}`.
    #[inline]
    pub fn apply(&self, x: &Vec6) -> Vec6 {
        let (f, m) = split(x);
        let f_a = self.rotation * f;
        join(&f_a, &(self.rotation * m + self.offset.cross(&f_a)))
    }

    /// `ᴬU_Bᵀ · x` for a raw twist in `{A}`; result in `{B}`.
    #[inline]
    pub fn apply_transpose(&self, x: &Vec6) -> Vec6 {
        let (v, w) = split(x);
        let rt = self.rotation.transpose();
        join(&(rt * (v + w.cross(&self.offset))), &(rt * w))
    }

    /// `ᴮV = ᴬU_Bᵀ ᴬV`.
    pub fn transform_velocity(&self, v: &SpatialVector) -> Result<SpatialVector> {
        v.expect_kind(VectorKind::Velocity)?;
        v.expect_frame(self.source)?;
        Ok(SpatialVector::from_vec6(
            VectorKind::Velocity,
            self.target,
            &self.apply_transpose(&v.to_vec6()),
        ))
    }

    /// `ᴬF = ᴬU_B ᴮF`.
    pub fn transform_force(&self, f: &SpatialVector) -> Result<SpatialVector> {
        f.expect_kind(VectorKind::Force)?;
        f.expect_frame(self.target)?;
        Ok(SpatialVector::from_vec6(
            VectorKind::Force,
            self.source,
            &self.apply(&f.to_vec6()),
        ))
    }

    /// `ᴬU_C = ᴬU_B · ᴮU_C`; `self` is `A → B`, `next` is `B → C`.
    pub fn compose(&self, next: &SpatialTransform) -> Result<SpatialTransform> {
        if self.target != next.source {
            return Err(Error::FrameMismatch {
                expected: self.target,
                found: next.source,
            });
        }
        Ok(self.compose_unchecked(next))
    }

    pub(crate) fn compose_unchecked(&self, next: &SpatialTransform) -> SpatialTransform {
        let mut rotation = self.rotation * next.rotation;
        if rotation_residual(&rotation) > ROTATION_TOL {
            rotation = orthonormalize(&rotation);
        }
        SpatialTransform {
            rotation,
            offset: self.offset + self.rotation * next.offset,
            source: self.source,
            target: next.target,
        }
    }

    /// `ᴮU_A`.
    pub fn inverse(&self) -> SpatialTransform {
        let rt = self.rotation.transpose();
        SpatialTransform {
            rotation: rt,
            offset: -(rt * self.offset),
            source: self.target,
            target: self.source,
        }
    }

    /// Relabels the frames; geometry is unchanged.
    pub fn with_frames(mut self, source: FrameId, target: FrameId) -> Self {
        self.source = source;
        self.target = target;
        self
    }
}

/// Rotation about a unit axis by `angle` (Rodrigues).
pub fn axis_angle(axis: &Vec3, angle: f64) -> Mat3 {
    let k = skew(axis);
    Mat3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn arb_vec3(scale: f64) -> impl Strategy<Value = Vec3> {
        prop::array::uniform3(-scale..scale).prop_map(|a| Vec3::new(a[0], a[1], a[2]))
    }

    fn arb_vec6(scale: f64) -> impl Strategy<Value = Vec6> {
        prop::array::uniform6(-scale..scale).prop_map(|a| Vec6::from_column_slice(&a))
    }

    fn arb_transform(source: FrameId, target: FrameId) -> impl Strategy<Value = SpatialTransform> {
        (arb_vec3(1.0), -3.1..3.1f64, arb_vec3(2.0)).prop_filter_map(
            "degenerate axis",
            move |(axis, angle, offset)| {
                let n = axis.norm();
                (n > 1e-3).then(|| {
                    SpatialTransform::new(axis_angle(&(axis / n), angle), offset, source, target)
                        .unwrap()
                })
            },
        )
    }

    #[test]
    fn skew_examples() {
        assert_eq!(skew(&Vec3::zeros()), Mat3::zeros());
        let x = Vec3::x();
        assert_eq!(skew(&x) * Vec3::y(), Vec3::z());
        assert_eq!(skew(&x) * Vec3::z(), Vec3::new(0.0, -1.0, 0.0));
    }

    #[test]
    fn translation_moves_force_moment() {
        let t = SpatialTransform::new(Mat3::identity(), Vec3::x(), FrameId::World, FrameId::Tool)
            .unwrap();
        let f = SpatialVector::force(FrameId::Tool, Vec3::z(), Vec3::zeros());
        let fa = t.transform_force(&f).unwrap();
        assert_eq!(fa.frame(), FrameId::World);
        assert_eq!(*fa.angular(), Vec3::new(0.0, -1.0, 0.0));
        assert_eq!(*fa.linear(), Vec3::z());
    }

    #[test]
    fn pure_rotation_rotates_both_halves() {
        let r = axis_angle(&Vec3::z(), 0.7);
        let t = SpatialTransform::new(r, Vec3::zeros(), FrameId::World, FrameId::Body(0)).unwrap();
        let v = SpatialVector::velocity(FrameId::World, Vec3::new(1.0, 2.0, 3.0), Vec3::new(-1.0, 0.5, 2.0));
        let vb = t.transform_velocity(&v).unwrap();
        assert_relative_eq!(*vb.linear(), r.transpose() * v.linear(), epsilon = 1e-15);
        assert_relative_eq!(*vb.angular(), r.transpose() * v.angular(), epsilon = 1e-15);
    }

    #[test]
    fn identity_leaves_vectors_unchanged() {
        let t = SpatialTransform::identity(FrameId::Tool);
        let v = SpatialVector::velocity(FrameId::Tool, Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0));
        assert_eq!(t.transform_velocity(&v).unwrap(), v);
        let f = SpatialVector::force(FrameId::Tool, Vec3::new(1.0, 2.0, 3.0), Vec3::new(4.0, 5.0, 6.0));
        assert_eq!(t.transform_force(&f).unwrap(), f);
    }

    #[test]
    fn kind_and_frame_are_checked() {
        let t = SpatialTransform::identity(FrameId::World);
        let f = SpatialVector::force(FrameId::World, Vec3::x(), Vec3::zeros());
        assert!(matches!(t.transform_velocity(&f), Err(Error::KindMismatch { .. })));
        let v = SpatialVector::velocity(FrameId::Tool, Vec3::x(), Vec3::zeros());
        assert!(matches!(t.transform_velocity(&v), Err(Error::FrameMismatch { .. })));
        let a = SpatialTransform::identity(FrameId::World);
        let b = SpatialTransform::identity(FrameId::Tool);
        assert!(a.compose(&b).is_err());
    }

    #[test]
    fn rejects_non_rotation() {
        let bad = Mat3::identity() * 1.01;
        assert!(SpatialTransform::new(bad, Vec3::zeros(), FrameId::World, FrameId::Tool).is_err());
        let reflect = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(SpatialTransform::new(reflect, Vec3::zeros(), FrameId::World, FrameId::Tool).is_err());
    }

    #[test]
    fn long_chains_stay_orthonormal() {
        let step = SpatialTransform::new(
            axis_angle(&Vec3::new(1.0, 2.0, 3.0).normalize(), 0.123_456_789),
            Vec3::new(0.1, 0.0, 0.2),
            FrameId::World,
            FrameId::World,
        )
        .unwrap();
        let mut acc = SpatialTransform::identity(FrameId::World);
        for _ in 0..100_000 {
            acc = acc.compose(&step).unwrap();
        }
        assert!(rotation_residual(acc.rotation()) <= ROTATION_TOL);
    }

    proptest! {
        #[test]
        fn power_is_frame_invariant(
            t in arb_transform(FrameId::World, FrameId::Tool),
            v in arb_vec6(3.0),
            f in arb_vec6(3.0),
        ) {
            let va = SpatialVector::from_vec6(VectorKind::Velocity, FrameId::World, &v);
            let fb = SpatialVector::from_vec6(VectorKind::Force, FrameId::Tool, &f);
            let fa = t.transform_force(&fb).unwrap();
            let vb = t.transform_velocity(&va).unwrap();
            let lhs = va.power(&fa).unwrap();
            let rhs = vb.power(&fb).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn compose_matches_matrix_product(
            t1 in arb_transform(FrameId::World, FrameId::Body(0)),
            t2 in arb_transform(FrameId::Body(0), FrameId::Tool),
        ) {
            let c = t1.compose(&t2).unwrap();
            let diff = (c.matrix() - t1.matrix() * t2.matrix()).abs().max();
            prop_assert!(diff < 1e-12);
            prop_assert_eq!(c.source(), FrameId::World);
            prop_assert_eq!(c.target(), FrameId::Tool);
        }

        #[test]
        fn compose_is_associative_and_has_inverse(
            t1 in arb_transform(FrameId::World, FrameId::Body(0)),
            t2 in arb_transform(FrameId::Body(0), FrameId::Body(1)),
            t3 in arb_transform(FrameId::Body(1), FrameId::Tool),
        ) {
            let left = t1.compose(&t2).unwrap().compose(&t3).unwrap();
            let right = t1.compose(&t2.compose(&t3).unwrap()).unwrap();
            prop_assert!((left.matrix() - right.matrix()).abs().max() < 1e-12);
            let id = t1.compose(&t1.inverse()).unwrap();
            prop_assert!((id.matrix() - Mat6::identity()).abs().max() < 1e-12);
            let id_left = SpatialTransform::identity(FrameId::World).compose(&t1).unwrap();
            prop_assert_eq!(id_left.matrix(), t1.matrix());
        }

        #[test]
        fn lower_left_block_is_skew_r_times_r(t in arb_transform(FrameId::World, FrameId::Tool)) {
            let m = t.matrix();
            let block = m.fixed_view::<3, 3>(3, 0).into_owned();
            prop_assert!((block - skew(t.offset()) * t.rotation()).abs().max() < 1e-15);
            prop_assert_eq!(m.fixed_view::<3, 3>(0, 3).into_owned(), Mat3::zeros());
        }

        #[test]
        fn velocity_round_trip(t in arb_transform(FrameId::World, FrameId::Tool), v in arb_vec6(3.0)) {
            let va = SpatialVector::from_vec6(VectorKind::Velocity, FrameId::World, &v);
            let back = t.inverse().transform_velocity(&t.transform_velocity(&va).unwrap()).unwrap();
            prop_assert!((back.to_vec6() - v).abs().max() < 1e-12);
        }

        #[test]
        fn raw_apply_matches_matrix(t in arb_transform(FrameId::World, FrameId::Tool), x in arb_vec6(3.0)) {
            prop_assert!((t.apply(&x) - t.matrix() * x).abs().max() < 1e-12);
            prop_assert!((t.apply_transpose(&x) - t.matrix().transpose() * x).abs().max() < 1e-12);
        }

        #[test]
        fn skew_is_cross_product(v in arb_vec3(5.0), w in arb_vec3(5.0)) {
            let s = skew(&v);
            prop_assert_eq!(s, -s.transpose());
            prop_assert!((s * w - v.cross(&w)).abs().max() < 1e-12);
        }
    }
}
