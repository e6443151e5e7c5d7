//! Declarative experiment description, read from TOML.
//!
//! Matrices accept three shapes: a scalar (`s·I`), a list (diagonal) or a
//! list of rows.

use std::path::{Path, PathBuf};

use nalgebra::{DVector, Matrix4};
use serde::{Deserialize, Serialize};

use crate::adaptation::AdaptState;
use crate::allocator::{ImpedanceSpec, TaskMask};
use crate::body::{f_map, InertialParams, PseudoInertia};
use crate::chain::{rotation_xyz, ChainModel, JointDesc, JointKind};
use crate::controller::{ControlGains, DEFAULT_FEEDBACK_GAIN};
use crate::error::{Error, Result};
use crate::spatial::{Mat3, Mat6, Vec3, Vec6};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl MatrixSpec {
    fn to_matrix<const N: usize>(&self, what: &str) -> Result<nalgebra::SMatrix<f64, N, N>> {
        let m = match self {
            MatrixSpec::Scalar(s) => nalgebra::SMatrix::<f64, N, N>::identity() * *s,
            MatrixSpec::Diagonal(d) => {
                if d.len() != N {
                    return Err(Error::Config(format!("{what}: diagonal needs {N} entries, got {}", d.len())));
                }
                nalgebra::SMatrix::<f64, N, N>::from_diagonal(&nalgebra::SVector::<f64, N>::from_column_slice(d))
            }
            MatrixSpec::Full(rows) => {
                if rows.len() != N || rows.iter().any(|r| r.len() != N) {
                    return Err(Error::Config(format!("{what}: expected a {N}x{N} matrix")));
                }
                nalgebra::SMatrix::<f64, N, N>::from_fn(|r, c| rows[r][c])
            }
        };
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config(format!("{what}: non-finite entry")));
        }
        Ok(m)
    }

    pub fn to_mat6(&self, what: &str) -> Result<Mat6> {
        self.to_matrix::<6>(what)
    }

    pub fn to_mat3(&self, what: &str) -> Result<Mat3> {
        self.to_matrix::<3>(what)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlantMode {
    /// Full serial chain under VDC.
    #[default]
    Chain,
    /// Cartesian double integrator driven by the required acceleration.
    Ideal,
}

/// What the controller uses as the tip required wrench.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TipForceMode {
    /// `ᵀF_r = 𝓕_d`.
    #[default]
    Literal,
    /// `ᵀF_r` = the sampled wall wrench.
    WallModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PsiInit {
    #[default]
    Zero,
    OnSurface,
}

fn default_gamma0() -> f64 {
    0.1
}
fn default_bounce_limit() -> u32 {
    2
}
fn default_velocity_limit() -> f64 {
    100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOptions {
    #[serde(default)]
    pub mode: PlantMode,
    pub dt: f64,
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub tip_force: TipForceMode,
    #[serde(default)]
    pub psi_init: PsiInit,
    /// First-order low-pass on the measured wrench, Hz. Off when absent.
    #[serde(default)]
    pub force_filter_cutoff: Option<f64>,
    /// Standard deviation of additive Gaussian noise on the measured wrench.
    #[serde(default)]
    pub force_noise_std: f64,
    /// Lower bound `-γ₀` asserted on `∫𝒮`.
    #[serde(default = "default_gamma0")]
    pub gamma0: f64,
    #[serde(default = "default_bounce_limit")]
    pub bounce_limit: u32,
    /// Joint speed treated as divergence, rad/s or m/s.
    #[serde(default = "default_velocity_limit")]
    pub velocity_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyConfig {
    pub mass: f64,
    /// Center of mass in the joint frame.
    #[serde(default)]
    pub com: [f64; 3],
    /// Rotational inertia about the center of mass.
    #[serde(default)]
    pub inertia: Option<MatrixSpec>,
    /// Solid box dimensions, used instead of `inertia`.
    #[serde(default)]
    pub box_size: Option<[f64; 3]>,
}

impl BodyConfig {
    pub fn params(&self) -> Result<InertialParams> {
        let com = Vec3::from(self.com);
        match (&self.inertia, &self.box_size) {
            (Some(i), None) => Ok(InertialParams::from_com(self.mass, com, i.to_mat3("body inertia")?)),
            (None, Some(b)) => Ok(InertialParams::solid_box(self.mass, com, Vec3::from(*b))),
            _ => Err(Error::Config("body needs exactly one of `inertia` or `box_size`".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointConfig {
    pub kind: JointKind,
    pub axis: [f64; 3],
    #[serde(default)]
    pub origin_offset: [f64; 3],
    /// Euler XYZ angles of the fixed placement.
    #[serde(default)]
    pub origin_rpy: [f64; 3],
    #[serde(default)]
    pub limits: Option<[f64; 2]>,
    #[serde(default)]
    pub friction: f64,
    pub body: BodyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainConfig {
    #[serde(default)]
    pub gravity: [f64; 3],
    #[serde(default)]
    pub tool_offset: [f64; 3],
    #[serde(default)]
    pub tool_rpy: [f64; 3],
    pub initial_q: Vec<f64>,
    #[serde(default)]
    pub initial_qdot: Option<Vec<f64>>,
    pub joints: Vec<JointConfig>,
}

impl ChainConfig {
    pub fn model(&self) -> Result<ChainModel> {
        let mut joints = Vec::with_capacity(self.joints.len());
        let mut bodies = Vec::with_capacity(self.joints.len());
        for j in &self.joints {
            let axis = Vec3::from(j.axis);
            let norm = axis.norm();
            if norm == 0.0 {
                return Err(Error::Config("joint axis must be nonzero".into()));
            }
            let mut desc = match j.kind {
                JointKind::Revolute => JointDesc::revolute(axis / norm, Vec3::from(j.origin_offset)),
                JointKind::Prismatic => JointDesc::prismatic(axis / norm, Vec3::from(j.origin_offset)),
            };
            desc.origin_rotation = rotation_xyz(&Vec3::from(j.origin_rpy));
            if let Some([lo, hi]) = j.limits {
                desc.limits = (lo, hi);
            }
            desc.friction = j.friction;
            joints.push(desc);
            bodies.push(j.body.params()?);
        }
        ChainModel::new(
            joints,
            bodies,
            Vec3::from(self.gravity),
            rotation_xyz(&Vec3::from(self.tool_rpy)),
            Vec3::from(self.tool_offset),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdealConfig {
    #[serde(default)]
    pub initial_pose: [f64; 6],
    /// `K_v` in `𝒳̈ = 𝒳̈_r + K_v(𝒳̇_r - 𝒳̇)`.
    #[serde(default)]
    pub velocity_feedback: f64,
    /// External wrench switched on at `step_time` (used when no wall is set).
    #[serde(default)]
    pub step_force: Option<[f64; 6]>,
    #[serde(default)]
    pub step_time: f64,
    /// Where the reference starts; defaults to `initial_pose`.
    #[serde(default)]
    pub reference_start: Option<[f64; 6]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpedanceConfig {
    pub mass: MatrixSpec,
    pub damping: MatrixSpec,
    pub stiffness: MatrixSpec,
    pub lambda: MatrixSpec,
    pub theta_psi: MatrixSpec,
    pub theta_e: MatrixSpec,
}

impl ImpedanceConfig {
    pub fn spec(&self) -> Result<ImpedanceSpec> {
        Ok(ImpedanceSpec {
            mass: self.mass.to_mat6("impedance.mass")?,
            damping: self.damping.to_mat6("impedance.damping")?,
            stiffness: self.stiffness.to_mat6("impedance.stiffness")?,
            lambda: self.lambda.to_mat6("impedance.lambda")?,
            theta_psi: self.theta_psi.to_mat6("impedance.theta_psi")?,
            theta_e: self.theta_e.to_mat6("impedance.theta_e")?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EstimateInit {
    /// `s · I₄` for every body.
    Scale(f64),
    /// `"exact"`: start from the true parameters.
    Named(String),
}

impl Default for EstimateInit {
    fn default() -> Self {
        EstimateInit::Scale(0.5)
    }
}

fn default_feedback() -> MatrixSpec {
    MatrixSpec::Scalar(DEFAULT_FEEDBACK_GAIN)
}
fn default_gamma() -> f64 {
    10.0
}
fn default_channels() -> Vec<usize> {
    (0..6).collect()
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    #[serde(default = "default_feedback")]
    pub feedback_gain: MatrixSpec,
    /// Per-body `K_A`, overriding `feedback_gain` when present.
    #[serde(default)]
    pub feedback_gains: Option<Vec<MatrixSpec>>,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default)]
    pub initial_estimate: EstimateInit,
    #[serde(default = "default_true")]
    pub adapt: bool,
    #[serde(default = "default_channels")]
    pub task_channels: Vec<usize>,
    /// Symmetric per-joint torque limit; off when absent.
    #[serde(default)]
    pub torque_limit: Option<f64>,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self {
            feedback_gain: default_feedback(),
            feedback_gains: None,
            gamma: default_gamma(),
            initial_estimate: EstimateInit::default(),
            adapt: true,
            task_channels: default_channels(),
            torque_limit: None,
        }
    }
}

impl ControlConfig {
    pub fn mask(&self) -> Result<TaskMask> {
        TaskMask::from_channels(&self.task_channels).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn gains(&self, bodies: usize) -> Result<ControlGains> {
        match &self.feedback_gains {
            Some(list) => {
                if list.len() != bodies {
                    return Err(Error::Config(format!("control.feedback_gains needs {bodies} entries")));
                }
                let gains = list
                    .iter()
                    .map(|g| g.to_mat6("control.feedback_gains"))
                    .collect::<Result<Vec<_>>>()?;
                ControlGains::new(gains)
            }
            None => ControlGains::new(vec![self.feedback_gain.to_mat6("control.feedback_gain")?; bodies]),
        }
    }

    pub fn adapt_state(&self, model: &ChainModel) -> Result<AdaptState> {
        match &self.initial_estimate {
            EstimateInit::Scale(s) => {
                let l = PseudoInertia::new(Matrix4::identity() * *s)?;
                AdaptState::new(vec![l; model.dof()], self.gamma)
            }
            EstimateInit::Named(n) if n == "exact" => {
                AdaptState::new(model.bodies().iter().map(f_map).collect(), self.gamma)
            }
            EstimateInit::Named(n) => Err(Error::Config(format!("unknown initial_estimate `{n}`"))),
        }
    }
}

fn default_side() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallConfig {
    pub stiffness: f64,
    pub position: f64,
    /// Translational task channel normal to the wall (0, 1 or 2).
    pub axis: usize,
    /// `+1`: penetration when the coordinate exceeds `position`.
    #[serde(default = "default_side")]
    pub side: f64,
    #[serde(default)]
    pub bilateral: bool,
    /// Desired contact force along the wall normal while in contact.
    #[serde(default)]
    pub desired_force: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    /// Absolute target pose.
    #[serde(default)]
    pub target: Option<[f64; 6]>,
    /// Target relative to the reference start pose.
    #[serde(default)]
    pub offset: Option<[f64; 6]>,
    pub duration: f64,
    /// Absolute start time; defaults to the end of the previous segment.
    #[serde(default)]
    pub start: Option<f64>,
}

fn default_growth() -> f64 {
    1.5
}
fn default_bisection() -> u32 {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZwidthConfig {
    /// Desired inertias to sweep (applied to every task channel).
    pub inertia_grid: Vec<f64>,
    pub stiffness_min: f64,
    pub stiffness_max: f64,
    #[serde(default = "default_growth")]
    pub growth: f64,
    #[serde(default = "default_bisection")]
    pub bisection_steps: u32,
}

/// Post-run assertions for `simulate` (exit code 3 when violated).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ChecksConfig {
    #[serde(default)]
    pub max_upsilon_after_transient: Option<f64>,
    #[serde(default)]
    pub max_upsilon_in_contact: Option<f64>,
    #[serde(default)]
    pub require_no_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunOptions,
    #[serde(default)]
    pub chain: Option<ChainConfig>,
    #[serde(default)]
    pub ideal: Option<IdealConfig>,
    pub impedance: ImpedanceConfig,
    #[serde(default)]
    pub control: ControlConfig,
    #[serde(default)]
    pub wall: Option<WallConfig>,
    #[serde(default)]
    pub trajectory: Vec<SegmentConfig>,
    #[serde(default)]
    pub zwidth: Option<ZwidthConfig>,
    #[serde(default)]
    pub checks: ChecksConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Static checks that do not need a simulation.
    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(Error::Config(m));
        let r = &self.run;
        if !(r.dt > 0.0 && r.dt.is_finite()) {
            return cfg_err("run.dt must be positive".into());
        }
        if !(r.duration >= r.dt && r.duration.is_finite()) {
            return cfg_err("run.duration must be at least one step".into());
        }
        if let Some(fc) = r.force_filter_cutoff {
            if !(fc > 0.0) {
                return cfg_err("run.force_filter_cutoff must be positive".into());
            }
        }
        if r.force_noise_std < 0.0 {
            return cfg_err("run.force_noise_std must be non-negative".into());
        }
        if r.gamma0 < 0.0 {
            return cfg_err("run.gamma0 must be non-negative".into());
        }
        let horizon = self.trajectory_horizon();
        if horizon > r.duration + 1e-12 {
            return cfg_err(format!(
                "run.duration ({}) is shorter than the trajectory horizon ({horizon})",
                r.duration
            ));
        }
        for (i, s) in self.trajectory.iter().enumerate() {
            if !(s.duration > 0.0) {
                return cfg_err(format!("trajectory[{i}].duration must be positive"));
            }
            if s.target.is_some() == s.offset.is_some() {
                return cfg_err(format!("trajectory[{i}] needs exactly one of `target` or `offset`"));
            }
        }
        self.impedance
            .spec()?
            .validate()
            .map_err(|e| Error::Config(format!("impedance: {e}")))?;
        let mask = self.control.mask()?;
        if !(self.control.gamma > 0.0) {
            return cfg_err("control.gamma must be positive".into());
        }
        if let Some(w) = &self.wall {
            if !(w.stiffness > 0.0) {
                return cfg_err("wall.stiffness must be positive".into());
            }
            if w.axis > 2 {
                return cfg_err("wall.axis must be 0, 1 or 2".into());
            }
            if w.side != 1.0 && w.side != -1.0 {
                return cfg_err("wall.side must be +1 or -1".into());
            }
            if !mask.0[w.axis] {
                return cfg_err("wall.axis must be a controlled task channel".into());
            }
        }
        match r.mode {
            PlantMode::Chain => {
                let c = self
                    .chain
                    .as_ref()
                    .ok_or_else(|| Error::Config("chain mode needs a [chain] section".into()))?;
                let model = c.model().map_err(|e| Error::Config(format!("chain: {e}")))?;
                if c.initial_q.len() != model.dof() {
                    return cfg_err(format!("chain.initial_q needs {} entries", model.dof()));
                }
                if let Some(qd) = &c.initial_qdot {
                    if qd.len() != model.dof() {
                        return cfg_err(format!("chain.initial_qdot needs {} entries", model.dof()));
                    }
                }
                if mask.len() > model.dof() {
                    return cfg_err("more task channels than joints".into());
                }
                self.control.gains(model.dof())?;
                self.control.adapt_state(&model)?;
                let kin = model.forward_kinematics(&DVector::from_vec(c.initial_q.clone()))?;
                kin.pose()?;
            }
            PlantMode::Ideal => {
                if let Some(i) = &self.ideal {
                    if i.velocity_feedback < 0.0 {
                        return cfg_err("ideal.velocity_feedback must be non-negative".into());
                    }
                }
            }
        }
        if let Some(z) = &self.zwidth {
            if z.inertia_grid.is_empty() || z.inertia_grid.iter().any(|m| !(*m > 0.0)) {
                return cfg_err("zwidth.inertia_grid must hold positive values".into());
            }
            if !(z.stiffness_min > 0.0 && z.stiffness_max > z.stiffness_min) {
                return cfg_err("zwidth stiffness range is empty".into());
            }
            if !(z.growth > 1.0) {
                return cfg_err("zwidth.growth must exceed 1".into());
            }
            if self.wall.is_none() {
                return cfg_err("zwidth needs a [wall] section".into());
            }
        }
        Ok(())
    }

    pub fn trajectory_horizon(&self) -> f64 {
        let mut end: f64 = 0.0;
        for s in &self.trajectory {
            let start = s.start.unwrap_or(end);
            end = start + s.duration;
        }
        end
    }

    pub fn steps(&self) -> usize {
        (self.run.duration / self.run.dt).round() as usize
    }

    /// Start of the reference path: the initial pose unless overridden.
    pub fn reference_start(&self) -> Result<Vec6> {
        match self.ideal.as_ref().and_then(|i| i.reference_start) {
            Some(p) if self.run.mode == PlantMode::Ideal => Ok(Vec6::from(p)),
            _ => self.initial_pose(),
        }
    }

    /// Initial tool pose of the configured plant.
    pub fn initial_pose(&self) -> Result<Vec6> {
        match self.run.mode {
            PlantMode::Ideal => Ok(Vec6::from(self.ideal.as_ref().map(|i| i.initial_pose).unwrap_or_default())),
            PlantMode::Chain => {
                let c = self.chain.as_ref().ok_or_else(|| Error::Config("missing [chain]".into()))?;
                let model = c.model()?;
                model.forward_kinematics(&DVector::from_vec(c.initial_q.clone()))?.pose()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [run]
        mode = "ideal"
        dt = 0.001
        duration = 1.0

        [impedance]
        mass = [1, 1, 2.2, 1, 1, 1]
        damping = 80
        stiffness = 200
        lambda = [-40, -40, -36, -40, -40, -40]
        theta_psi = [10, 10, 15, 10, 10, 10]
        theta_e = [15, 15, 8, 20, 20, 20]
    "#;

    #[test]
    fn diagonal_shorthand() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.impedance.spec().unwrap(), ImpedanceSpec::reference());
        assert_eq!(cfg.control.gamma, 10.0);
        assert_eq!(cfg.run.tip_force, TipForceMode::Literal);
    }

    #[test]
    fn matrix_shapes() {
        assert_eq!(MatrixSpec::Scalar(2.0).to_mat3("x").unwrap(), Mat3::identity() * 2.0);
        assert!(MatrixSpec::Diagonal(vec![1.0; 5]).to_mat6("x").is_err());
        let full = MatrixSpec::Full(vec![vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 5.0], vec![3.0, 5.0, 6.0]]);
        assert_eq!(full.to_mat3("x").unwrap()[(1, 2)], 5.0);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = MINIMAL.replace("dt = 0.001", "dt = -1");
        assert!(matches!(ExperimentConfig::from_toml_str(&bad), Err(Error::Config(_))));
        let bad = MINIMAL.replace("damping = 80", "damping = -80");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let bad = MINIMAL.replace("[run]", "[run]\nunknown_key = 1");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
        let chain_without_section = MINIMAL.replace("mode = \"ideal\"", "mode = \"chain\"");
        assert!(ExperimentConfig::from_toml_str(&chain_without_section).is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
    }
}
