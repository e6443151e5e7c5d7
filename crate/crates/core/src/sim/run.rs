//! Closed-loop stepping for both plants, with per-step monitors.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::adaptation::{eta, AdaptState};
use crate::allocator::{
    derive_gains, on_surface_psi, psi_rate, psi_step, required_cartesian, required_joint, sliding_surface,
    AllocatorGains, AllocatorState, ImpedanceSpec, TaskMask, TrackingErrors,
};
use crate::body::{regressor, ParamVector};
use crate::chain::{ChainModel, Kinematics};
use crate::controller::{
    joint_torque, required_net_force, stability_function, stability_function_expanded, vpf_raw, ContactEnergy,
    ControlGains, EnergyAccumulator,
};
use crate::error::{Error, Result};
use crate::sim::config::{ExperimentConfig, PlantMode, PsiInit, TipForceMode};
use crate::sim::trajectory::TrajectoryPlan;
use crate::sim::wall::{VirtualWall, WallSample};
use crate::spatial::{join, split, Vec6};

/// Samples before this time are excluded from the steady `‖υ‖∞` bound.
pub const TRANSIENT_TIME: f64 = 0.5;
/// Contact that has lasted this long counts as sustained.
pub const SUSTAINED_CONTACT_TIME: f64 = 0.5;

fn wrap_angles(mut e: Vec6) -> Vec6 {
    for k in 3..6 {
        e[k] = (e[k] + PI).rem_euclid(2.0 * PI) - PI;
    }
    e
}

/// World task wrench as a tool-frame wrench at the tool origin.
fn task_to_tool(kin: &Kinematics, w: &Vec6) -> Vec6 {
    let rt = kin.tool_world.rotation().transpose();
    let (f, m) = split(w);
    join(&(rt * f), &(rt * m))
}

/// Additive noise and first-order low-pass on the measured wrench.
#[derive(Debug, Clone)]
struct ForceSensor {
    noise: Option<(ChaCha8Rng, Normal<f64>)>,
    filter: Option<(f64, Option<Vec6>)>,
}

impl ForceSensor {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let noise = if cfg.run.force_noise_std > 0.0 {
            let normal = Normal::new(0.0, cfg.run.force_noise_std)
                .map_err(|e| Error::Config(format!("force noise: {e}")))?;
            Some((ChaCha8Rng::seed_from_u64(cfg.run.seed), normal))
        } else {
            None
        };
        let filter = cfg
            .run
            .force_filter_cutoff
            .map(|fc| (1.0 - (-2.0 * PI * fc * cfg.run.dt).exp(), None));
        Ok(Self { noise, filter })
    }

    fn measure(&mut self, w: &Vec6) -> Vec6 {
        let mut m = *w;
        if let Some((rng, normal)) = &mut self.noise {
            for k in 0..6 {
                m[k] += normal.sample(rng);
            }
        }
        if let Some((alpha, state)) = &mut self.filter {
            let y = match state {
                Some(prev) => *prev + (m - *prev) * *alpha,
                None => m,
            };
            *state = Some(y);
            m = y;
        }
        m
    }
}

#[derive(Debug, Clone)]
struct IdealPlant {
    x: Vec6,
    xdot: Vec6,
    kv: f64,
    step_force: Option<Vec6>,
    step_time: f64,
}

#[derive(Debug, Clone)]
struct ChainPlant {
    model: ChainModel,
    k_a: ControlGains,
    adapt: AdaptState,
    adapt_on: bool,
    tip_mode: TipForceMode,
    torque_limit: Option<f64>,
    q: DVector<f64>,
    qdot: DVector<f64>,
    motor_work: f64,
    dissipated: f64,
    contact_work: f64,
    initial_energy: f64,
    saturation_events: u64,
    damped_steps: u64,
}

impl ChainPlant {
    fn mechanical_energy(&self) -> Result<f64> {
        let kin = self.model.forward_kinematics(&self.q)?;
        Ok(self.model.kinetic_energy(&kin, &self.qdot)? + self.model.potential_energy(&kin))
    }

    /// `(q̈, motor power, dissipated power, contact power)` with the world
    /// contact wrench held fixed.
    fn rates(
        &self,
        q: &DVector<f64>,
        qdot: &DVector<f64>,
        tau: &DVector<f64>,
        contact: &Vec6,
    ) -> Result<(DVector<f64>, f64, f64, f64)> {
        let kin = self.model.forward_kinematics(q)?;
        let tip = task_to_tool(&kin, contact);
        let qddot = self.model.forward_dynamics(q, qdot, tau, &tip)?;
        let tool_twist = *self
            .model
            .propagate_velocity(&kin, qdot)?
            .last()
            .expect("chain has at least one body");
        let friction = self.model.friction_torque(qdot);
        Ok((qddot, tau.dot(qdot), friction.dot(qdot), -tip.dot(&tool_twist)))
    }

    /// RK4 over one control period with torque and contact wrench held.
    fn integrate(&mut self, tau: &DVector<f64>, contact: &Vec6, dt: f64) -> Result<()> {
        let (q0, v0) = (self.q.clone(), self.qdot.clone());
        let (a1, m1, d1, c1) = self.rates(&q0, &v0, tau, contact)?;
        let (q2, v2) = (&q0 + &v0 * (dt / 2.0), &v0 + &a1 * (dt / 2.0));
        let (a2, m2, d2, c2) = self.rates(&q2, &v2, tau, contact)?;
        let (q3, v3) = (&q0 + &v2 * (dt / 2.0), &v0 + &a2 * (dt / 2.0));
        let (a3, m3, d3, c3) = self.rates(&q3, &v3, tau, contact)?;
        let (q4, v4) = (&q0 + &v3 * dt, &v0 + &a3 * dt);
        let (a4, m4, d4, c4) = self.rates(&q4, &v4, tau, contact)?;
        let w = dt / 6.0;
        self.q = &q0 + (&v0 + &v2 * 2.0 + &v3 * 2.0 + &v4) * w;
        self.qdot = &v0 + (&a1 + &a2 * 2.0 + &a3 * 2.0 + &a4) * w;
        self.motor_work += (m1 + 2.0 * m2 + 2.0 * m3 + m4) * w;
        self.dissipated += (d1 + 2.0 * d2 + 2.0 * d3 + d4) * w;
        self.contact_work += (c1 + 2.0 * c2 + 2.0 * c3 + c4) * w;
        Ok(())
    }
}

#[derive(Debug, Clone)]
enum Plant {
    Ideal(IdealPlant),
    Chain(Box<ChainPlant>),
}

/// Joint-space quantities logged for the chain plant.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRecord {
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    pub tau: DVector<f64>,
    /// `𝔭` per body.
    pub vpf: Vec<f64>,
    /// Largest mismatch of the interface power balance between neighbours.
    pub telescoping_residual: f64,
    pub l_hat_min_eigenvalues: Vec<f64>,
}

/// Everything observed at one control instant.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub pose: Vec6,
    pub pose_d: Vec6,
    pub errors: TrackingErrors,
    pub upsilon: Vec6,
    pub psi: Vec6,
    pub force: Vec6,
    pub force_d: Vec6,
    pub wall: WallSample,
    pub x_r_ddot: Vec6,
    pub stability: f64,
    pub stability_expanded: f64,
    pub chain: Option<ChainRecord>,
}

/// Compact per-step history used for metrics and replay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub t: f64,
    pub e_x: Vec6,
    pub upsilon: Vec6,
    pub x_r_ddot: Vec6,
    pub contact_force: f64,
    pub penetration_rate: f64,
    pub in_contact: bool,
    pub stability: f64,
}

#[derive(Debug, Clone, Default)]
struct Monitors {
    stability_integral: f64,
    min_stability_integral: f64,
    prev_stability: Option<f64>,
    energy: EnergyAccumulator,
    first_contact: Option<f64>,
    last_contact: Option<f64>,
    contact_start: Option<f64>,
    bounces: u32,
    max_upsilon: f64,
    max_upsilon_after_transient: f64,
    max_upsilon_sustained: Option<f64>,
    max_free_stability: f64,
    max_stability_mismatch: f64,
    max_telescoping: f64,
    min_l_hat: Option<f64>,
    min_energy_in_contact: Option<f64>,
}

impl Monitors {
    fn observe(&mut self, r: &StepRecord, dt: f64) {
        let s = r.stability;
        if let Some(prev) = self.prev_stability {
            self.stability_integral += 0.5 * dt * (prev + s);
        }
        self.prev_stability = Some(s);
        self.min_stability_integral = self.min_stability_integral.min(self.stability_integral);
        self.max_stability_mismatch = self.max_stability_mismatch.max((s - r.stability_expanded).abs());

        let in_contact = r.wall.in_contact;
        if in_contact {
            if self.first_contact.is_none() {
                self.first_contact = Some(r.t);
            }
            if self.contact_start.is_none() {
                self.contact_start = Some(r.t);
            }
            self.last_contact = Some(r.t);
        } else {
            if self.contact_start.is_some() {
                self.bounces += 1;
            }
            self.contact_start = None;
        }
        if self.first_contact.is_some() {
            self.energy.push(r.wall.force * r.wall.rate, dt);
            if in_contact {
                let e = self.energy.energy().net;
                self.min_energy_in_contact = Some(self.min_energy_in_contact.map_or(e, |m: f64| m.min(e)));
            }
        }
        if r.force == Vec6::zeros() && r.force_d == Vec6::zeros() {
            self.max_free_stability = self.max_free_stability.max(s.abs());
        }

        let u = r.upsilon.amax();
        self.max_upsilon = self.max_upsilon.max(u);
        if r.t >= TRANSIENT_TIME {
            self.max_upsilon_after_transient = self.max_upsilon_after_transient.max(u);
        }
        if let Some(start) = self.contact_start {
            if r.t - start >= SUSTAINED_CONTACT_TIME {
                self.max_upsilon_sustained = Some(self.max_upsilon_sustained.map_or(u, |m: f64| m.max(u)));
            }
        }
        if let Some(c) = &r.chain {
            self.max_telescoping = self.max_telescoping.max(c.telescoping_residual);
            let lmin = c.l_hat_min_eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
            self.min_l_hat = Some(self.min_l_hat.map_or(lmin, |m: f64| m.min(lmin)));
        }
    }
}

/// Post-run digest written as the summary JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: PlantMode,
    pub steps: usize,
    pub final_time: f64,
    pub diverged: Option<String>,
    pub contact_energy: ContactEnergy,
    pub contact_energy_balance_error: f64,
    pub min_contact_energy_in_contact: Option<f64>,
    pub stability_integral: f64,
    pub min_stability_integral: f64,
    pub gamma0: f64,
    pub stability_bound_held: bool,
    pub max_upsilon: f64,
    pub max_upsilon_after_transient: f64,
    pub max_upsilon_sustained_contact: Option<f64>,
    pub max_free_motion_stability: f64,
    pub max_stability_form_mismatch: f64,
    pub first_contact_time: Option<f64>,
    pub last_contact_time: Option<f64>,
    pub in_contact_at_end: bool,
    pub bounces: u32,
    pub passive: bool,
    pub min_l_hat_eigenvalue: Option<f64>,
    pub fallback_count: u64,
    pub max_vpf_telescoping_residual: Option<f64>,
    /// `ΔE_mech - (W_motor - D + W_contact)` over the run.
    pub plant_energy_residual: Option<f64>,
    pub plant_energy_change: Option<f64>,
    pub saturation_events: u64,
    pub damped_pinv_steps: u64,
}

/// One configured experiment, advanced one control period at a time.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: ExperimentConfig,
    spec: ImpedanceSpec,
    gains: AllocatorGains,
    mask: TaskMask,
    plan: TrajectoryPlan,
    wall: Option<VirtualWall>,
    sensor: ForceSensor,
    plant: Plant,
    psi: Vec6,
    step_index: usize,
    steps: usize,
    monitors: Monitors,
    trace: Vec<TraceSample>,
    keep_records: bool,
    records: Vec<StepRecord>,
    diverged: Option<String>,
}

impl Simulation {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let spec = config.impedance.spec()?;
        let gains = derive_gains(&spec)?;
        let mask = config.control.mask()?;
        let start = config.reference_start()?;
        let targets: Vec<_> = config
            .trajectory
            .iter()
            .map(|s| {
                let target = match (s.target, s.offset) {
                    (Some(t), _) => Vec6::from(t),
                    (None, Some(o)) => start + Vec6::from(o),
                    (None, None) => start,
                };
                (target, s.duration, s.start)
            })
            .collect();
        let plan = if targets.is_empty() {
            TrajectoryPlan::hold(start)
        } else {
            TrajectoryPlan::new(start, &targets)?
        };
        let wall = config.wall.as_ref().map(VirtualWall::from_config);
        let sensor = ForceSensor::new(&config)?;
        let plant = match config.run.mode {
            PlantMode::Ideal => {
                let ideal = config.ideal.clone().unwrap_or(crate::sim::config::IdealConfig {
                    initial_pose: [0.0; 6],
                    velocity_feedback: 0.0,
                    step_force: None,
                    step_time: 0.0,
                    reference_start: None,
                });
                Plant::Ideal(IdealPlant {
                    x: Vec6::from(ideal.initial_pose),
                    xdot: Vec6::zeros(),
                    kv: ideal.velocity_feedback,
                    step_force: ideal.step_force.map(Vec6::from),
                    step_time: ideal.step_time,
                })
            }
            PlantMode::Chain => {
                let c = config.chain.as_ref().expect("validated");
                let model = c.model()?;
                let n = model.dof();
                let q = DVector::from_vec(c.initial_q.clone());
                let qdot = c
                    .initial_qdot
                    .clone()
                    .map(DVector::from_vec)
                    .unwrap_or_else(|| DVector::zeros(n));
                let mut plant = ChainPlant {
                    k_a: config.control.gains(n)?,
                    adapt: config.control.adapt_state(&model)?,
                    adapt_on: config.control.adapt,
                    tip_mode: config.run.tip_force,
                    torque_limit: config.control.torque_limit,
                    model,
                    q,
                    qdot,
                    motor_work: 0.0,
                    dissipated: 0.0,
                    contact_work: 0.0,
                    initial_energy: 0.0,
                    saturation_events: 0,
                    damped_steps: 0,
                };
                plant.initial_energy = plant.mechanical_energy()?;
                Plant::Chain(Box::new(plant))
            }
        };
        let steps = config.steps();
        Ok(Self {
            spec,
            gains,
            mask,
            plan,
            wall,
            sensor,
            plant,
            psi: Vec6::zeros(),
            step_index: 0,
            steps,
            monitors: Monitors::default(),
            trace: Vec::with_capacity(steps),
            keep_records: false,
            records: Vec::new(),
            diverged: None,
            config,
        })
    }

    /// Keep every [`StepRecord`] for telemetry output.
    pub fn with_records(mut self, keep: bool) -> Self {
        self.keep_records = keep;
        self
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn spec(&self) -> &ImpedanceSpec {
        &self.spec
    }

    pub fn gains(&self) -> &AllocatorGains {
        &self.gains
    }

    pub fn dt(&self) -> f64 {
        self.config.run.dt
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.dt()
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn total_steps(&self) -> usize {
        self.steps
    }

    pub fn is_finished(&self) -> bool {
        self.step_index >= self.steps || self.diverged.is_some()
    }

    pub fn psi(&self) -> &Vec6 {
        &self.psi
    }

    pub fn trace(&self) -> &[TraceSample] {
        &self.trace
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn last_upsilon(&self) -> Option<Vec6> {
        self.trace.last().map(|s| s.upsilon)
    }

    /// `(q, q̇)` for the chain plant, `(𝒳, 𝒳̇)` for the ideal plant.
    pub fn plant_state(&self) -> (DVector<f64>, DVector<f64>) {
        match &self.plant {
            Plant::Ideal(p) => (DVector::from_column_slice(p.x.as_slice()), DVector::from_column_slice(p.xdot.as_slice())),
            Plant::Chain(p) => (p.q.clone(), p.qdot.clone()),
        }
    }

    /// Current parameter estimates of the chain plant.
    pub fn adapt_state(&self) -> Option<&AdaptState> {
        match &self.plant {
            Plant::Chain(p) => Some(&p.adapt),
            Plant::Ideal(_) => None,
        }
    }

    pub fn model(&self) -> Option<&ChainModel> {
        match &self.plant {
            Plant::Chain(p) => Some(&p.model),
            Plant::Ideal(_) => None,
        }
    }

    /// Advance one control period. On divergence the run stops and the
    /// error is returned; later calls return it again.
    pub fn step(&mut self) -> Result<()> {
        if let Some(reason) = &self.diverged {
            return Err(Error::Diverged {
                time: self.time(),
                reason: reason.clone(),
            });
        }
        if self.step_index >= self.steps {
            return Ok(());
        }
        let outcome = match self.plant {
            Plant::Ideal(_) => self.ideal_step(),
            Plant::Chain(_) => self.chain_step(),
        };
        let record = match outcome {
            Ok(r) => r,
            Err(Error::Diverged { time, reason }) => {
                self.diverged = Some(reason.clone());
                return Err(Error::Diverged { time, reason });
            }
            // Numerical breakdown mid-run (singular mass matrix, Euler
            // singularity) ends the run like divergence does.
            Err(e) => {
                let reason = e.to_string();
                self.diverged = Some(reason.clone());
                return Err(Error::Diverged {
                    time: self.time(),
                    reason,
                });
            }
        };
        self.monitors.observe(&record, self.dt());
        self.trace.push(TraceSample {
            t: record.t,
            e_x: record.errors.e_x,
            upsilon: record.upsilon,
            x_r_ddot: record.x_r_ddot,
            contact_force: record.wall.force,
            penetration_rate: record.wall.rate,
            in_contact: record.wall.in_contact,
            stability: record.stability,
        });
        if self.keep_records {
            self.records.push(record);
        }
        self.step_index += 1;
        self.check_divergence()
    }

    /// Step until the configured duration or divergence.
    pub fn run(&mut self) -> Result<()> {
        while !self.is_finished() {
            self.step()?;
        }
        Ok(())
    }

    fn check_divergence(&mut self) -> Result<()> {
        let limit = self.config.run.velocity_limit;
        let reason = match &self.plant {
            Plant::Ideal(p) => {
                if !(p.x.iter().chain(p.xdot.iter()).all(|v| v.is_finite())) || p.xdot.amax() > limit {
                    Some("task state left the admissible range".to_string())
                } else {
                    None
                }
            }
            Plant::Chain(p) => {
                if !(p.q.iter().chain(p.qdot.iter()).all(|v| v.is_finite())) || p.qdot.amax() > limit {
                    Some("joint velocity exceeded the divergence limit".to_string())
                } else {
                    None
                }
            }
        };
        if !self.psi.iter().all(|v| v.is_finite()) {
            self.diverged = Some("allocator state became non-finite".into());
        } else if let Some(r) = reason {
            self.diverged = Some(r);
        }
        match &self.diverged {
            Some(reason) => Err(Error::Diverged {
                time: self.time(),
                reason: reason.clone(),
            }),
            None => Ok(()),
        }
    }

    fn ideal_forces(&self, p: &IdealPlant, t: f64, x: &Vec6, xdot: &Vec6) -> (Vec6, Vec6, WallSample) {
        match &self.wall {
            Some(w) => {
                let s = w.sample(x, xdot);
                (w.wrench(&s), w.desired_wrench(&s), s)
            }
            None => {
                let f = match p.step_force {
                    Some(f) if t >= p.step_time => f,
                    _ => Vec6::zeros(),
                };
                (f, Vec6::zeros(), WallSample::default())
            }
        }
    }

    fn errors_at(&self, t: f64, pose: &Vec6, xdot: &Vec6, force: &Vec6, force_d: &Vec6) -> TrackingErrors {
        let (xd, xd_dot, _) = self.plan.eval(t);
        TrackingErrors::new(
            self.mask.apply(&wrap_angles(pose - xd)),
            self.mask.apply(&(xdot - xd_dot)),
            self.mask.apply(&(force - force_d)),
        )
    }

    fn ideal_step(&mut self) -> Result<StepRecord> {
        let Plant::Ideal(p) = &self.plant else {
            unreachable!("ideal step on a chain plant")
        };
        let p = p.clone();
        let t = self.time();
        let dt = self.dt();
        if self.step_index == 0 && self.config.run.psi_init == PsiInit::OnSurface {
            let (f, fd, _) = self.ideal_forces(&p, t, &p.x, &p.xdot);
            self.psi = on_surface_psi(&self.errors_at(t, &p.x, &p.xdot, &f, &fd), &self.spec)?;
        }

        // Continuous closed loop: (𝒳, 𝒳̇, ψ) integrated together.
        let deriv = |t: f64, x: &Vec6, xdot: &Vec6, psi: &Vec6| {
            let (f, fd, _) = self.ideal_forces(&p, t, x, xdot);
            let errors = self.errors_at(t, x, xdot, &f, &fd);
            let state = AllocatorState { psi: *psi, errors };
            let (_, xd_dot, xd_ddot) = self.plan.eval(t);
            let (vr, ar) = required_cartesian(&state, &self.gains, &self.spec, &xd_dot, &xd_ddot);
            let xddot = self.mask.apply(&(ar + (vr - xdot) * p.kv));
            (*xdot, xddot, psi_rate(psi, &errors, &self.gains, &self.spec))
        };

        let (x0, v0, s0) = (p.x, p.xdot, self.psi);
        let (dx1, dv1, ds1) = deriv(t, &x0, &v0, &s0);
        let h = dt / 2.0;
        let (dx2, dv2, ds2) = deriv(t + h, &(x0 + dx1 * h), &(v0 + dv1 * h), &(s0 + ds1 * h));
        let (dx3, dv3, ds3) = deriv(t + h, &(x0 + dx2 * h), &(v0 + dv2 * h), &(s0 + ds2 * h));
        let (dx4, dv4, ds4) = deriv(t + dt, &(x0 + dx3 * dt), &(v0 + dv3 * dt), &(s0 + ds3 * dt));
        let w = dt / 6.0;

        let (force, force_d, wall) = self.ideal_forces(&p, t, &x0, &v0);
        let errors = self.errors_at(t, &x0, &v0, &force, &force_d);
        let state = AllocatorState { psi: s0, errors };
        let (pose_d, xd_dot, xd_ddot) = self.plan.eval(t);
        let (_, ar) = required_cartesian(&state, &self.gains, &self.spec, &xd_dot, &xd_ddot);
        let record = self.make_record(t, x0, pose_d, state, force, force_d, wall, self.mask.apply(&ar), None);

        if let Plant::Ideal(p) = &mut self.plant {
            p.x = x0 + (dx1 + dx2 * 2.0 + dx3 * 2.0 + dx4) * w;
            p.xdot = v0 + (dv1 + dv2 * 2.0 + dv3 * 2.0 + dv4) * w;
        }
        self.psi = s0 + (ds1 + ds2 * 2.0 + ds3 * 2.0 + ds4) * w;
        Ok(record)
    }

    #[allow(clippy::too_many_arguments)]
    fn make_record(
        &self,
        t: f64,
        pose: Vec6,
        pose_d: Vec6,
        state: AllocatorState,
        force: Vec6,
        force_d: Vec6,
        wall: WallSample,
        x_r_ddot: Vec6,
        chain: Option<ChainRecord>,
    ) -> StepRecord {
        let upsilon = self.mask.apply(&sliding_surface(&state, &self.spec));
        let e = &state.errors;
        // Only controlled channels enter 𝒮.
        let (fd_m, f_m) = (self.mask.apply(&force_d), self.mask.apply(&force));
        StepRecord {
            t,
            pose,
            pose_d,
            errors: *e,
            upsilon,
            psi: state.psi,
            force,
            force_d,
            wall,
            x_r_ddot,
            stability: stability_function(&upsilon, &fd_m, &f_m),
            stability_expanded: stability_function_expanded(
                &e.e_x,
                &e.e_x_dot,
                &self.mask.apply(&state.psi),
                &self.spec.theta_e,
                &self.spec.theta_psi,
                &fd_m,
                &f_m,
            ),
            chain,
        }
    }

    fn chain_step(&mut self) -> Result<StepRecord> {
        let t = self.time();
        let dt = self.dt();
        let Plant::Chain(p) = &self.plant else {
            unreachable!("chain step on an ideal plant")
        };
        let model = &p.model;
        let n = model.dof();
        let kin = model.forward_kinematics(&p.q)?;
        let pose = kin.pose()?;
        let jac = model.jacobian(&kin)?;
        let jac_dot = model.jacobian_dot(&p.q, &p.qdot)?;
        let xdot = Vec6::from_iterator((&jac * &p.qdot).iter().copied());
        let (pose_d, xd_dot, xd_ddot) = self.plan.eval(t);

        let (wall, contact, force_d) = match &self.wall {
            Some(w) => {
                let s = w.sample(&pose, &xdot);
                (s, w.wrench(&s), w.desired_wrench(&s))
            }
            None => (WallSample::default(), Vec6::zeros(), Vec6::zeros()),
        };
        let measured = self.sensor.measure(&contact);
        let errors = self.errors_at(t, &pose, &xdot, &measured, &force_d);
        if self.step_index == 0 && self.config.run.psi_init == PsiInit::OnSurface {
            self.psi = on_surface_psi(&errors, &self.spec)?;
        }
        let state = AllocatorState { psi: self.psi, errors };
        let (vr_task, ar_task) = required_cartesian(&state, &self.gains, &self.spec, &xd_dot, &xd_ddot);
        let (vr_task, ar_task) = (self.mask.apply(&vr_task), self.mask.apply(&ar_task));
        let jr = required_joint(&jac, &jac_dot, &self.mask, &vr_task, &ar_task)?;

        let Plant::Chain(p) = &mut self.plant else {
            unreachable!()
        };
        let model = &p.model;
        let vel = model.propagate_velocity(&kin, &p.qdot)?;
        let (vr, ar) = model.propagate_required(&kin, &jr.qdot_r, &jr.qddot_r, &p.qdot)?;
        let gravity = model.body_gravity(&kin);
        let phi = p.adapt.params();
        let mut net_r = Vec::with_capacity(n);
        let mut etas: Vec<ParamVector> = Vec::with_capacity(n);
        for i in 0..n {
            let y = regressor(&ar[i], &vr[i], &vel[i], &gravity[i]);
            net_r.push(required_net_force(&y, &phi[i].to_vector(), &p.k_a.gains()[i], &vr[i], &vel[i]));
            etas.push(eta(&y, &vr[i], &vel[i]));
        }
        let tip_task = match p.tip_mode {
            TipForceMode::Literal => force_d,
            TipForceMode::WallModel => contact,
        };
        let f_r = model.propagate_force(&kin, &net_r, &task_to_tool(&kin, &tip_task))?;
        let mut tau = DVector::from_iterator(
            n,
            model
                .joints()
                .iter()
                .enumerate()
                .map(|(i, j)| joint_torque(&j.screw(), &f_r[i], jr.qdot_r[i], j.friction)),
        );
        if let Some(limit) = p.torque_limit {
            if tau.amax() > limit {
                p.saturation_events += 1;
                tau.apply(|x| *x = x.clamp(-limit, limit));
            }
        }
        if jr.damped {
            p.damped_steps += 1;
        }

        // Actual interface forces under the applied torques, for the
        // power-flow monitors.
        let tip_actual = task_to_tool(&kin, &contact);
        let qddot = model.forward_dynamics(&p.q, &p.qdot, &tau, &tip_actual)?;
        let (f_act, _) = model.inverse_dynamics(&p.q, &p.qdot, &qddot, &tip_actual)?;
        let vpf: Vec<f64> = (0..n).map(|i| vpf_raw(&vr[i], &vel[i], &f_r[i], &f_act[i])).collect();
        let mut telescoping: f64 = 0.0;
        for i in 0..n.saturating_sub(1) {
            let dv = vr[i] - vel[i];
            let df = f_r[i + 1] - f_act[i + 1];
            let out = kin.local[i + 1].apply_transpose(&dv).dot(&df);
            let joint = (jr.qdot_r[i + 1] - p.qdot[i + 1]) * model.joints()[i + 1].screw().dot(&df);
            let scale = 1.0 + vpf[i + 1].abs();
            telescoping = telescoping.max((out + joint - vpf[i + 1]).abs() / scale);
        }
        let chain_record = ChainRecord {
            q: p.q.clone(),
            qdot: p.qdot.clone(),
            tau: tau.clone(),
            vpf,
            telescoping_residual: telescoping,
            l_hat_min_eigenvalues: p.adapt.min_eigenvalues(),
        };

        if p.adapt_on {
            p.adapt.step(&etas, dt)?;
        }
        p.integrate(&tau, &contact, dt)?;

        let record = self.make_record(t, pose, pose_d, state, measured, force_d, wall, ar_task, Some(chain_record));
        self.psi = psi_step(&state, &self.gains, &self.spec, dt);
        Ok(record)
    }

    pub fn summary(&self) -> Result<RunSummary> {
        let m = &self.monitors;
        let energy = m.energy.energy();
        let (fallback, plant_residual, plant_change, saturation, damped, min_l_hat) = match &self.plant {
            Plant::Chain(p) => {
                let change = p.mechanical_energy()? - p.initial_energy;
                let residual = change - (p.motor_work - p.dissipated + p.contact_work);
                let final_min = p.adapt.min_eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
                (
                    p.adapt.fallback_count(),
                    Some(residual),
                    Some(change),
                    p.saturation_events,
                    p.damped_steps,
                    Some(m.min_l_hat.map_or(final_min, |x| x.min(final_min))),
                )
            }
            Plant::Ideal(_) => (0, None, None, 0, 0, None),
        };
        let in_contact_at_end = self.trace.last().is_some_and(|s| s.in_contact);
        let gamma0 = self.config.run.gamma0;
        Ok(RunSummary {
            mode: self.config.run.mode,
            steps: self.step_index,
            final_time: self.time(),
            diverged: self.diverged.clone(),
            contact_energy: energy,
            contact_energy_balance_error: energy.balance_error(),
            min_contact_energy_in_contact: m.min_energy_in_contact,
            stability_integral: m.stability_integral,
            min_stability_integral: m.min_stability_integral,
            gamma0,
            stability_bound_held: m.min_stability_integral >= -gamma0,
            max_upsilon: m.max_upsilon,
            max_upsilon_after_transient: m.max_upsilon_after_transient,
            max_upsilon_sustained_contact: m.max_upsilon_sustained,
            max_free_motion_stability: m.max_free_stability,
            max_stability_form_mismatch: m.max_stability_mismatch,
            first_contact_time: m.first_contact,
            last_contact_time: m.last_contact,
            in_contact_at_end,
            bounces: m.bounces,
            passive: self.diverged.is_none()
                && m.first_contact.is_some()
                && energy.net > 0.0
                && m.bounces <= self.config.run.bounce_limit,
            min_l_hat_eigenvalue: min_l_hat,
            fallback_count: fallback,
            max_vpf_telescoping_residual: match &self.plant {
                Plant::Chain(_) => Some(m.max_telescoping),
                Plant::Ideal(_) => None,
            },
            plant_energy_residual: plant_residual,
            plant_energy_change: plant_change,
            saturation_events: saturation,
            damped_pinv_steps: damped,
        })
    }

    /// Index of the first in-contact sample, if any.
    pub fn first_contact_index(&self) -> Option<usize> {
        self.trace.iter().position(|s| s.in_contact)
    }
}

/// Outcome of a complete run; divergence is recorded, not propagated.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub simulation: Simulation,
}

impl RunOutcome {
    pub fn diverged(&self) -> bool {
        self.summary.diverged.is_some()
    }
}

/// Build and run `config` to completion. Configuration problems are errors;
/// numerical divergence is reported in the summary.
pub fn run_experiment(config: ExperimentConfig, keep_records: bool) -> Result<RunOutcome> {
    let mut sim = Simulation::new(config)?.with_records(keep_records);
    match sim.run() {
        Ok(()) | Err(Error::Diverged { .. }) => {}
        Err(e) => return Err(e),
    }
    let summary = sim.summary()?;
    Ok(RunOutcome {
        summary,
        simulation: sim,
    })
}
