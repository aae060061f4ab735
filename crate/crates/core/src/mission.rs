//! Setpoint sampling from the optimized trajectory and locomotion-switch
//! triggers. Yaw follows the velocity direction and holds its last value
//! through near-zero-speed stretches.

use crate::envmap::mode_for_height;
use crate::trajopt::BSplineTrajectory;
use crate::{Mode, Result};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Setpoint {
    pub mode: Mode,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Feedforward acceleration; only meaningful for aerial setpoints.
    pub acceleration: Vector3<f64>,
    pub yaw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwitchKind {
    Takeoff,
    Land,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SwitchTrigger {
    pub kind: SwitchKind,
    pub time: f64,
}

/// Samples timestamped setpoints; owns the held-yaw memory, so one sampler
/// belongs to exactly one control loop.
pub struct SetpointSampler<'a> {
    traj: &'a BSplineTrajectory,
    ground_height: f64,
    z_tol: f64,
    /// Speed below which yaw holds its previous value.
    eps_v: f64,
    held_yaw: f64,
}

impl<'a> SetpointSampler<'a> {
    pub fn new(traj: &'a BSplineTrajectory, ground_height: f64, z_tol: f64, eps_v: f64) -> Self {
        // Initialize the held yaw from the trajectory's initial heading.
        let held_yaw = traj
            .evaluate(0.0, 1)
            .ok()
            .filter(|v| v.xy().norm() > 1e-9)
            .map(|v| v.y.atan2(v.x))
            .unwrap_or(0.0);
        Self { traj, ground_height, z_tol, eps_v, held_yaw }
    }

    pub fn duration(&self) -> f64 {
        self.traj.duration()
    }

    /// Sample the reference state at time t. Past the span end the sampler
    /// clamps to the final position with zero velocity.
    pub fn sample(&mut self, t: f64) -> Result<Setpoint> {
        let dur = self.traj.duration();
        let (position, velocity, acceleration) = if t >= dur {
            (self.traj.evaluate(dur, 0)?, Vector3::zeros(), Vector3::zeros())
        } else {
            let t = t.max(0.0);
            (
                self.traj.evaluate(t, 0)?,
                self.traj.evaluate(t, 1)?,
                self.traj.evaluate(t, 2)?,
            )
        };
        let mode = mode_for_height(position.z, self.ground_height, self.z_tol);
        let speed = velocity.xy().norm();
        let yaw = if speed > self.eps_v {
            let y = velocity.y.atan2(velocity.x);
            self.held_yaw = y;
            y
        } else {
            self.held_yaw
        };
        let mut sp = Setpoint { mode, position, velocity, acceleration, yaw };
        if mode == Mode::Terrestrial {
            sp.position.z = self.ground_height;
            sp.velocity.z = 0.0;
            sp.acceleration = Vector3::zeros();
        }
        Ok(sp)
    }
}

/// Emit a switch trigger when consecutive setpoints differ in mode.
pub fn detect_switch(prev: &Setpoint, cur: &Setpoint, time: f64) -> Option<SwitchTrigger> {
    match (prev.mode, cur.mode) {
        (Mode::Terrestrial, Mode::Aerial) => Some(SwitchTrigger { kind: SwitchKind::Takeoff, time }),
        (Mode::Aerial, Mode::Terrestrial) => Some(SwitchTrigger { kind: SwitchKind::Land, time }),
        _ => None,
    }
}
