//! Minimum-jerk (quintic) task-space references.

use crate::error::{Error, Result};
use crate::spatial::Vec6;

/// `(s, ṡ/T, s̈/T²)` of `s(τ) = 10τ³ - 15τ⁴ + 6τ⁵` at `τ = t/T`, clamped to
/// `[0, 1]` so the profile holds its end values outside the segment.
pub fn quintic_profile(t: f64, duration: f64) -> (f64, f64, f64) {
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if t >= duration {
        return (1.0, 0.0, 0.0);
    }
    let tau = t / duration;
    let (t2, t3) = (tau * tau, tau * tau * tau);
    let s = t3 * (10.0 - 15.0 * tau + 6.0 * t2);
    let ds = 30.0 * t2 * (1.0 - 2.0 * tau + t2) / duration;
    let dds = 60.0 * tau * (1.0 - 3.0 * tau + 2.0 * t2) / (duration * duration);
    (s, ds, dds)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub start_time: f64,
    pub duration: f64,
    pub from: Vec6,
    pub to: Vec6,
}

impl Segment {
    pub fn eval(&self, t: f64) -> (Vec6, Vec6, Vec6) {
        let (s, ds, dds) = quintic_profile(t - self.start_time, self.duration);
        let delta = self.to - self.from;
        (self.from + delta * s, delta * ds, delta * dds)
    }
}

/// Piecewise quintic path through a list of targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPlan {
    start: Vec6,
    segments: Vec<Segment>,
}

impl TrajectoryPlan {
    /// `targets` holds `(target, duration, optional absolute start)`.
    pub fn new(start: Vec6, targets: &[(Vec6, f64, Option<f64>)]) -> Result<Self> {
        let mut segments = Vec::with_capacity(targets.len());
        let (mut from, mut end) = (start, 0.0);
        for (i, &(to, duration, start_time)) in targets.iter().enumerate() {
            let start_time = start_time.unwrap_or(end);
            if !(duration > 0.0) || start_time < end {
                return Err(Error::Config(format!(
                    "trajectory segment {i} must have positive duration and start after the previous one"
                )));
            }
            segments.push(Segment {
                start_time,
                duration,
                from,
                to,
            });
            from = to;
            end = start_time + duration;
        }
        Ok(Self { start, segments })
    }

    /// A plan that holds `pose` forever.
    pub fn hold(pose: Vec6) -> Self {
        Self {
            start: pose,
            segments: Vec::new(),
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// `(𝒳_d, 𝒳̇_d, 𝒳̈_d)` at time `t`.
    pub fn eval(&self, t: f64) -> (Vec6, Vec6, Vec6) {
        let mut current = (self.start, Vec6::zeros(), Vec6::zeros());
        for seg in &self.segments {
            if t < seg.start_time {
                break;
            }
            current = seg.eval(t);
        }
        current
    }
}
