//! Spring wall along one translational task channel.

use crate::sim::config::WallConfig;
use crate::spatial::Vec6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualWall {
    pub stiffness: f64,
    pub position: f64,
    pub axis: usize,
    pub side: f64,
    pub bilateral: bool,
    pub desired_force: f64,
}

/// Wall reading at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WallSample {
    /// Signed penetration; positive inside the wall.
    pub penetration: f64,
    /// Rate of penetration.
    pub rate: f64,
    /// `f_c = K_e · penetration` (zero outside a unilateral wall).
    pub force: f64,
    pub in_contact: bool,
}

impl VirtualWall {
    pub fn from_config(c: &WallConfig) -> Self {
        Self {
            stiffness: c.stiffness,
            position: c.position,
            axis: c.axis,
            side: c.side,
            bilateral: c.bilateral,
            desired_force: c.desired_force,
        }
    }

    pub fn sample(&self, pose: &Vec6, velocity: &Vec6) -> WallSample {
        let penetration = self.side * (pose[self.axis] - self.position);
        let rate = self.side * velocity[self.axis];
        let in_contact = penetration > 0.0;
        let force = if in_contact || self.bilateral {
            self.stiffness * penetration
        } else {
            0.0
        };
        WallSample {
            penetration,
            rate,
            force,
            in_contact,
        }
    }

    /// Task-space wrench the tool exerts on the wall.
    pub fn wrench(&self, sample: &WallSample) -> Vec6 {
        let mut w = Vec6::zeros();
        w[self.axis] = self.side * sample.force;
        w
    }

    /// `𝓕_d`: the configured push while touching, zero otherwise.
    pub fn desired_wrench(&self, sample: &WallSample) -> Vec6 {
        let mut w = Vec6::zeros();
        if sample.in_contact {
            w[self.axis] = self.side * self.desired_force;
        }
        w
    }
}
