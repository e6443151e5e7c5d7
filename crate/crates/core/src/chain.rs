//! Open serial chain with one frame per body, placed at the joint that drives
//! it. Kinematics, outward velocity propagation, inward force propagation,
//! task Jacobian in Euler-XYZ coordinates, and plant dynamics built on the
//! same recursions.

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::body::InertialParams;
use crate::error::{Error, Result};
use crate::spatial::{
    axis_angle, join, motion_cross, split, FrameId, Mat3, SpatialTransform, Vec3, Vec6,
};

/// Below this smallest singular value the pseudo-inverse switches to damped
/// least squares.
pub const PINV_SWITCH: f64 = 0.05;
pub const PINV_DAMPING: f64 = 0.01;
/// `cos β` below which the Euler XYZ rate map is treated as singular.
const EULER_COS_MIN: f64 = 1e-6;
const JDOT_FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointKind {
    Revolute,
    Prismatic,
}

/// One joint and the fixed placement of its frame in the parent frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDesc {
    pub kind: JointKind,
    /// Unit axis in the joint's own frame.
    pub axis: Vec3,
    pub origin_rotation: Mat3,
    pub origin_offset: Vec3,
    pub limits: (f64, f64),
    /// Viscous friction, N·m·s/rad or N·s/m.
    pub friction: f64,
}

impl JointDesc {
    pub fn revolute(axis: Vec3, origin_offset: Vec3) -> Self {
        Self {
            kind: JointKind::Revolute,
            axis,
            origin_rotation: Mat3::identity(),
            origin_offset,
            limits: (-std::f64::consts::PI, std::f64::consts::PI),
            friction: 0.0,
        }
    }

    pub fn prismatic(axis: Vec3, origin_offset: Vec3) -> Self {
        Self {
            kind: JointKind::Prismatic,
            limits: (-1.0, 1.0),
            ..Self::revolute(axis, origin_offset)
        }
    }

    pub fn screw(&self) -> Vec6 {
        match self.kind {
            JointKind::Revolute => join(&Vec3::zeros(), &self.axis),
            JointKind::Prismatic => join(&self.axis, &Vec3::zeros()),
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        if ((self.axis.norm() - 1.0).abs()) > 1e-9 {
            return Err(Error::invalid(format!("joint {index}: axis must be a unit vector")));
        }
        if self.limits.0 >= self.limits.1 {
            return Err(Error::invalid(format!("joint {index}: lower limit must be below upper limit")));
        }
        if self.friction < 0.0 || !self.friction.is_finite() {
            return Err(Error::invalid(format!("joint {index}: friction must be non-negative")));
        }
        SpatialTransform::new(self.origin_rotation, self.origin_offset, FrameId::World, FrameId::World)?;
        Ok(())
    }

    /// `ᴾU_A(q)`: fixed placement followed by the joint motion.
    fn transform(&self, q: f64, parent: FrameId, child: FrameId) -> SpatialTransform {
        let (r, p) = match self.kind {
            JointKind::Revolute => (self.origin_rotation * axis_angle(&self.axis, q), self.origin_offset),
            JointKind::Prismatic => (
                self.origin_rotation,
                self.origin_offset + self.origin_rotation * self.axis * q,
            ),
        };
        SpatialTransform::from_parts_unchecked(r, p, parent, child)
    }
}

/// Serial chain. Body `i` is driven by joint `i`; its inertial parameters are
/// expressed in frame `{Ai}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainModel {
    joints: Vec<JointDesc>,
    bodies: Vec<InertialParams>,
    gravity: Vec3,
    tool_rotation: Mat3,
    tool_offset: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
}

impl ChainState {
    pub fn new(q: DVector<f64>, qdot: DVector<f64>) -> Self {
        Self { q, qdot }
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self::new(q, DVector::zeros(n))
    }
}

/// Frame transforms at one configuration.
#[derive(Debug, Clone)]
pub struct Kinematics {
    /// `ᴾU_Ai` from the parent of body `i` (world for `i = 0`).
    pub local: Vec<SpatialTransform>,
    /// `ᵂU_Ai`.
    pub world: Vec<SpatialTransform>,
    /// `ᴬⁿU_T`.
    pub tool_local: SpatialTransform,
    /// `ᵂU_T`.
    pub tool_world: SpatialTransform,
}

impl Kinematics {
    /// `(x, y, z, α, β, θ)` of the tool with `R = Rx(α) Ry(β) Rz(θ)`.
    pub fn pose(&self) -> Result<Vec6> {
        let (p, angles) = (self.tool_world.offset(), euler_xyz(self.tool_world.rotation())?);
        Ok(join(p, &angles))
    }
}

/// Euler XYZ angles of `r = Rx(α) Ry(β) Rz(θ)`.
pub fn euler_xyz(r: &Mat3) -> Result<Vec3> {
    let sb = r[(0, 2)].clamp(-1.0, 1.0);
    let beta = sb.asin();
    if beta.cos() < EULER_COS_MIN {
        return Err(Error::EulerSingularity { beta });
    }
    let alpha = (-r[(1, 2)]).atan2(r[(2, 2)]);
    let theta = (-r[(0, 1)]).atan2(r[(0, 0)]);
    Ok(Vec3::new(alpha, beta, theta))
}

/// `R = Rx(α) Ry(β) Rz(θ)`.
pub fn rotation_xyz(angles: &Vec3) -> Mat3 {
    axis_angle(&Vec3::x(), angles.x) * axis_angle(&Vec3::y(), angles.y) * axis_angle(&Vec3::z(), angles.z)
}

/// `E(α, β)` with `ω = E · (α̇, β̇, θ̇)`.
pub fn euler_rate_matrix(angles: &Vec3) -> Mat3 {
    let (sa, ca) = angles.x.sin_cos();
    let (sb, cb) = angles.y.sin_cos();
    Mat3::new(
        1.0, 0.0, sb, //
        0.0, ca, -sa * cb, //
        0.0, sa, ca * cb,
    )
}

fn euler_rate_matrix_dot(angles: &Vec3, rates: &Vec3) -> Mat3 {
    let (sa, ca) = angles.x.sin_cos();
    let (sb, cb) = angles.y.sin_cos();
    let (da, db) = (rates.x, rates.y);
    Mat3::new(
        0.0, 0.0, cb * db, //
        0.0, -sa * da, -ca * cb * da + sa * sb * db, //
        0.0, ca * da, -sa * cb * da - ca * sb * db,
    )
}

fn euler_rate_inverse(angles: &Vec3) -> Result<Mat3> {
    if angles.y.cos() < EULER_COS_MIN {
        return Err(Error::EulerSingularity { beta: angles.y });
    }
    euler_rate_matrix(angles)
        .try_inverse()
        .ok_or(Error::EulerSingularity { beta: angles.y })
}

/// Moore-Penrose inverse via SVD, damped when the smallest singular value
/// drops below [`PINV_SWITCH`]. Returns whether damping was applied.
pub fn pseudo_inverse(j: &DMatrix<f64>) -> (DMatrix<f64>, bool) {
    let svd = SVD::new(j.clone(), true, true);
    let sigma_min = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let damped = sigma_min < PINV_SWITCH;
    let u = svd.u.as_ref().expect("svd u");
    let vt = svd.v_t.as_ref().expect("svd v_t");
    let inv_sigma = svd.singular_values.map(|s| {
        if damped {
            s / (s * s + PINV_DAMPING * PINV_DAMPING)
        } else if s > 0.0 {
            1.0 / s
        } else {
            0.0
        }
    });
    let pinv = vt.transpose() * DMatrix::from_diagonal(&inv_sigma) * u.transpose();
    (pinv, damped)
}

impl ChainModel {
    pub fn new(
        joints: Vec<JointDesc>,
        bodies: Vec<InertialParams>,
        gravity: Vec3,
        tool_rotation: Mat3,
        tool_offset: Vec3,
    ) -> Result<Self> {
        if joints.is_empty() {
            return Err(Error::invalid("chain needs at least one joint"));
        }
        if joints.len() != bodies.len() {
            return Err(Error::Dimension {
                context: "bodies per joint".into(),
                expected: joints.len(),
                found: bodies.len(),
            });
        }
        for (i, j) in joints.iter().enumerate() {
            j.validate(i)?;
        }
        for (i, b) in bodies.iter().enumerate() {
            let min_eigenvalue = b.pseudo_inertia().min_eigenvalue();
            if min_eigenvalue <= 0.0 {
                return Err(Error::NotPositiveDefinite {
                    what: format!("pseudo-inertia of body {i}"),
                    min_eigenvalue,
                });
            }
        }
        SpatialTransform::new(tool_rotation, tool_offset, FrameId::World, FrameId::Tool)?;
        Ok(Self {
            joints,
            bodies,
            gravity,
            tool_rotation,
            tool_offset,
        })
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[JointDesc] {
        &self.joints
    }

    pub fn bodies(&self) -> &[InertialParams] {
        &self.bodies
    }

    pub fn gravity(&self) -> &Vec3 {
        &self.gravity
    }

    pub fn with_gravity(mut self, gravity: Vec3) -> Self {
        self.gravity = gravity;
        self
    }

    pub fn revolute_only(&self) -> bool {
        self.joints.iter().all(|j| j.kind == JointKind::Revolute)
    }

    fn check_dim(&self, context: &str, found: usize) -> Result<()> {
        if found != self.dof() {
            return Err(Error::Dimension {
                context: context.into(),
                expected: self.dof(),
                found,
            });
        }
        Ok(())
    }

    pub fn forward_kinematics(&self, q: &DVector<f64>) -> Result<Kinematics> {
        self.check_dim("joint positions", q.len())?;
        let n = self.dof();
        let mut local = Vec::with_capacity(n);
        let mut world = Vec::with_capacity(n);
        let mut parent = SpatialTransform::identity(FrameId::World);
        for (i, joint) in self.joints.iter().enumerate() {
            let parent_id = if i == 0 { FrameId::World } else { FrameId::Body(i - 1) };
            let u = joint.transform(q[i], parent_id, FrameId::Body(i));
            parent = parent.compose_unchecked(&u);
            local.push(u);
            world.push(parent);
        }
        let tool_local = SpatialTransform::from_parts_unchecked(
            self.tool_rotation,
            self.tool_offset,
            FrameId::Body(n - 1),
            FrameId::Tool,
        );
        let tool_world = parent.compose_unchecked(&tool_local);
        Ok(Kinematics {
            local,
            world,
            tool_local,
            tool_world,
        })
    }

    /// Gravity expressed in each body frame.
    pub fn body_gravity(&self, kin: &Kinematics) -> Vec<Vec3> {
        kin.world
            .iter()
            .map(|u| u.rotation().transpose() * self.gravity)
            .collect()
    }

    /// Outward recursion `ᴬV = s q̇ + ᴾU_Aᵀ ᴾV` from a fixed base. The last
    /// element is the tool twist `ᵀV`.
    pub fn propagate_velocity(&self, kin: &Kinematics, qdot: &DVector<f64>) -> Result<Vec<Vec6>> {
        self.check_dim("joint velocities", qdot.len())?;
        let mut out = Vec::with_capacity(self.dof() + 1);
        let mut v = Vec6::zeros();
        for (i, joint) in self.joints.iter().enumerate() {
            v = kin.local[i].apply_transpose(&v) + joint.screw() * qdot[i];
            out.push(v);
        }
        out.push(kin.tool_local.apply_transpose(&v));
        Ok(out)
    }

    /// Required twists and their time derivatives from `q̇_r`, `q̈_r`. The
    /// transforms move with the actual `q̇`, which sets the cross term.
    pub fn propagate_required(
        &self,
        kin: &Kinematics,
        qdot_r: &DVector<f64>,
        qddot_r: &DVector<f64>,
        qdot: &DVector<f64>,
    ) -> Result<(Vec<Vec6>, Vec<Vec6>)> {
        self.check_dim("required joint velocities", qdot_r.len())?;
        self.check_dim("required joint accelerations", qddot_r.len())?;
        self.check_dim("joint velocities", qdot.len())?;
        let n = self.dof();
        let mut vel = Vec::with_capacity(n);
        let mut acc = Vec::with_capacity(n);
        let (mut v, mut a) = (Vec6::zeros(), Vec6::zeros());
        for (i, joint) in self.joints.iter().enumerate() {
            let s = joint.screw();
            let v_in = kin.local[i].apply_transpose(&v);
            a = kin.local[i].apply_transpose(&a) + s * qddot_r[i] + motion_cross(&v_in, &(s * qdot[i]));
            v = v_in + s * qdot_r[i];
            vel.push(v);
            acc.push(a);
        }
        Ok((vel, acc))
    }

    /// Inward recursion `ᴬF = ᴬF* + ᴬU_C ᶜF`, with `tip` the wrench the tool
    /// exerts on the environment, expressed in `{T}`.
    pub fn propagate_force(&self, kin: &Kinematics, net: &[Vec6], tip: &Vec6) -> Result<Vec<Vec6>> {
        self.check_dim("body net wrenches", net.len())?;
        let n = self.dof();
        let mut out = vec![Vec6::zeros(); n];
        let mut child = kin.tool_local.apply(tip);
        for i in (0..n).rev() {
            out[i] = net[i] + child;
            if i > 0 {
                child = kin.local[i].apply(&out[i]);
            }
        }
        Ok(out)
    }

    /// `sᵀ F` per joint.
    pub fn project_forces(&self, forces: &[Vec6]) -> DVector<f64> {
        DVector::from_iterator(
            self.dof(),
            self.joints.iter().zip(forces).map(|(j, f)| j.screw().dot(f)),
        )
    }

    /// Body twists and accelerations for actual motion.
    fn motion(&self, kin: &Kinematics, qdot: &DVector<f64>, qddot: &DVector<f64>) -> Result<(Vec<Vec6>, Vec<Vec6>)> {
        self.propagate_required(kin, qdot, qddot, qdot)
    }

    /// Net body wrenches `F*` for actual motion with the given gravity.
    fn net_wrenches(&self, kin: &Kinematics, vel: &[Vec6], acc: &[Vec6], with_gravity: bool) -> Vec<Vec6> {
        let gravity = self.body_gravity(kin);
        self.bodies
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let g = if with_gravity { gravity[i] } else { Vec3::zeros() };
                b.wrench(&acc[i], &vel[i], &vel[i], &g)
            })
            .collect()
    }

    /// Rigid-body inverse dynamics (no joint friction). `tip` is the wrench the
    /// tool exerts on the environment, in `{T}`. Returns the interface forces
    /// and joint torques.
    pub fn inverse_dynamics(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        qddot: &DVector<f64>,
        tip: &Vec6,
    ) -> Result<(Vec<Vec6>, DVector<f64>)> {
        let kin = self.forward_kinematics(q)?;
        self.inverse_dynamics_at(&kin, qdot, qddot, tip, true)
    }

    fn inverse_dynamics_at(
        &self,
        kin: &Kinematics,
        qdot: &DVector<f64>,
        qddot: &DVector<f64>,
        tip: &Vec6,
        with_gravity: bool,
    ) -> Result<(Vec<Vec6>, DVector<f64>)> {
        let (vel, acc) = self.motion(kin, qdot, qddot)?;
        let net = self.net_wrenches(kin, &vel, &acc, with_gravity);
        let forces = self.propagate_force(kin, &net, tip)?;
        let tau = self.project_forces(&forces);
        Ok((forces, tau))
    }

    /// Joint-space mass matrix, one unit-acceleration pass per column.
    pub fn mass_matrix(&self, kin: &Kinematics) -> Result<DMatrix<f64>> {
        let n = self.dof();
        let zero = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut e = DVector::zeros(n);
            e[j] = 1.0;
            let (_, col) = self.inverse_dynamics_at(kin, &zero, &e, &Vec6::zeros(), false)?;
            h.set_column(j, &col);
        }
        Ok((&h + h.transpose()) * 0.5)
    }

    /// Joint accelerations under motor torques `tau`, joint friction and the
    /// tool wrench `tip` (tool on environment, in `{T}`).
    pub fn forward_dynamics(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        tau: &DVector<f64>,
        tip: &Vec6,
    ) -> Result<DVector<f64>> {
        self.check_dim("joint torques", tau.len())?;
        let kin = self.forward_kinematics(q)?;
        let n = self.dof();
        let (_, bias) = self.inverse_dynamics_at(&kin, qdot, &DVector::zeros(n), tip, true)?;
        let friction = self.friction_torque(qdot);
        let h = self.mass_matrix(&kin)?;
        let rhs = tau - bias - friction;
        h.cholesky()
            .map(|c| c.solve(&rhs))
            .ok_or_else(|| Error::Singular {
                what: "joint-space mass matrix".into(),
            })
    }

    pub fn friction_torque(&self, qdot: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.dof(),
            self.joints.iter().zip(qdot.iter()).map(|(j, v)| j.friction * v),
        )
    }

    /// Geometric Jacobian of the tool origin, world coordinates, rows `(v; ω)`.
    pub fn geometric_jacobian(&self, kin: &Kinematics) -> DMatrix<f64> {
        let n = self.dof();
        let p_tool = *kin.tool_world.offset();
        let mut j = DMatrix::zeros(6, n);
        for (i, joint) in self.joints.iter().enumerate() {
            let z = kin.world[i].rotation() * joint.axis;
            let col = match joint.kind {
                JointKind::Revolute => join(&z.cross(&(p_tool - kin.world[i].offset())), &z),
                JointKind::Prismatic => join(&z, &Vec3::zeros()),
            };
            j.set_column(i, &col);
        }
        j
    }

    /// Analytic Jacobian mapping `q̇` to `(ṗ, α̇, β̇, θ̇)`.
    pub fn jacobian(&self, kin: &Kinematics) -> Result<DMatrix<f64>> {
        let angles = euler_xyz(kin.tool_world.rotation())?;
        let e_inv = euler_rate_inverse(&angles)?;
        let mut j = self.geometric_jacobian(kin);
        let ang = e_inv * j.rows(3, 3);
        j.rows_mut(3, 3).copy_from(&ang);
        Ok(j)
    }

    /// Time derivative of [`ChainModel::jacobian`]; analytic for revolute
    /// chains, central difference along `q̇` otherwise.
    pub fn jacobian_dot(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim("joint velocities", qdot.len())?;
        if self.revolute_only() {
            let kin = self.forward_kinematics(q)?;
            return self.jacobian_dot_analytic(&kin, qdot);
        }
        let h = JDOT_FD_STEP;
        let plus = self.jacobian(&self.forward_kinematics(&(q + qdot * h))?)?;
        let minus = self.jacobian(&self.forward_kinematics(&(q - qdot * h))?)?;
        Ok((plus - minus) / (2.0 * h))
    }

    fn jacobian_dot_analytic(&self, kin: &Kinematics, qdot: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.dof();
        let twists = self.propagate_velocity(kin, qdot)?;
        let world_twist = |u: &SpatialTransform, t: &Vec6| {
            let (v, w) = split(t);
            (u.rotation() * v, u.rotation() * w)
        };
        let (v_tool, w_tool) = world_twist(&kin.tool_world, &twists[n]);
        let p_tool = *kin.tool_world.offset();

        let jg = self.geometric_jacobian(kin);
        let mut jg_dot = DMatrix::zeros(6, n);
        for (i, joint) in self.joints.iter().enumerate() {
            let (v_i, w_i) = world_twist(&kin.world[i], &twists[i]);
            let z = kin.world[i].rotation() * joint.axis;
            let z_dot = w_i.cross(&z);
            let col = match joint.kind {
                JointKind::Revolute => join(
                    &(z_dot.cross(&(p_tool - kin.world[i].offset())) + z.cross(&(v_tool - v_i))),
                    &z_dot,
                ),
                JointKind::Prismatic => join(&z_dot, &Vec3::zeros()),
            };
            jg_dot.set_column(i, &col);
        }

        let angles = euler_xyz(kin.tool_world.rotation())?;
        let e_inv = euler_rate_inverse(&angles)?;
        let rates = e_inv * w_tool;
        let e_inv_dot = -e_inv * euler_rate_matrix_dot(&angles, &rates) * e_inv;

        let mut out = jg_dot;
        let ang = e_inv_dot * jg.rows(3, 3) + e_inv * out.rows(3, 3);
        out.rows_mut(3, 3).copy_from(&ang);
        Ok(out)
    }

    /// Kinetic energy `½ Σ Vᵀ M V`.
    pub fn kinetic_energy(&self, kin: &Kinematics, qdot: &DVector<f64>) -> Result<f64> {
        let vel = self.propagate_velocity(kin, qdot)?;
        Ok(self
            .bodies
            .iter()
            .zip(&vel)
            .map(|(b, v)| 0.5 * v.dot(&b.mass_times(v)))
            .sum())
    }

    /// Gravitational potential `-Σ m gᵀ c`, zero at the world origin.
    pub fn potential_energy(&self, kin: &Kinematics) -> f64 {
        self.bodies
            .iter()
            .zip(&kin.world)
            .map(|(b, u)| {
                // m·c in world = R·h + m·p
                let mc = u.rotation() * b.first_moment + u.offset() * b.mass;
                -self.gravity.dot(&mc)
            })
            .sum()
    }
}
