//! Deterministic fixed-step plant model for both locomotion modes, the
//! closed-loop episode runner, and trace metrics.
//!
//! Attitude dynamics are a first-order lag standing in for the autopilot
//! inner loops. Terrestrial yaw acceleration is capped by the inverse of the
//! thrust/yaw-acceleration fit, so the controller's assumption and the plant
//! capability agree by construction. Integration is semi-implicit Euler.

use crate::config::{GainsConfig, PlantConfig};
use crate::control::{ControlCommand, Controller, EulerZyx, RobotState};
use crate::mission::{detect_switch, Setpoint, SetpointSampler};
use crate::trajopt::BSplineTrajectory;
use crate::{wrap_angle, Error, Mode, Result};
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct PlantParams {
    pub mass: f64,
    pub gravity: f64,
    pub tau_att: f64,
    pub mu_r: f64,
    pub ground_height: f64,
    pub k_f: f64,
    pub dt: f64,
    /// Inverse thrust fit: available yaw acceleration = (|F| - c0) / c1.
    pub yaw_fit_c1: f64,
    pub yaw_fit_c0: f64,
}

impl PlantParams {
    pub fn from_config(gains: &GainsConfig, plant: &PlantConfig, ground_height: f64) -> Self {
        Self {
            mass: gains.mass,
            gravity: gains.gravity,
            tau_att: plant.tau_att,
            mu_r: plant.mu_r,
            ground_height,
            k_f: gains.k_f(),
            dt: plant.dt,
            yaw_fit_c1: gains.thrust_fit_c1,
            yaw_fit_c0: gains.thrust_fit_c0,
        }
    }

    /// Yaw acceleration the vehicle can produce at a given normalized thrust.
    pub fn yaw_accel_available(&self, thrust: f64) -> f64 {
        ((thrust - self.yaw_fit_c0) / self.yaw_fit_c1).max(0.0)
    }
}

fn lag_toward(current: f64, desired: f64, dt: f64, tau: f64) -> f64 {
    let alpha = (dt / tau).min(1.0);
    wrap_angle(current + wrap_angle(desired - current) * alpha)
}

/// Aerial point-mass step: attitude relaxes toward the command, thrust acts
/// along the body z-axis against gravity. The ground plane is impenetrable.
pub fn step_aerial(state: &RobotState, cmd: &ControlCommand, params: &PlantParams) -> RobotState {
    let dt = params.dt;
    let euler = EulerZyx {
        yaw: lag_toward(state.euler.yaw, cmd.attitude.yaw, dt, params.tau_att),
        pitch: lag_toward(state.euler.pitch, cmd.attitude.pitch, dt, params.tau_att),
        roll: lag_toward(state.euler.roll, cmd.attitude.roll, dt, params.tau_att),
    };
    let euler_rates = EulerZyx {
        yaw: wrap_angle(euler.yaw - state.euler.yaw) / dt,
        pitch: wrap_angle(euler.pitch - state.euler.pitch) / dt,
        roll: wrap_angle(euler.roll - state.euler.roll) / dt,
    };
    let accel = euler.body_z() * (params.k_f * cmd.thrust / params.mass)
        - Vector3::new(0.0, 0.0, params.gravity);
    let mut velocity = state.velocity + accel * dt;
    let mut position = state.position + velocity * dt;
    if position.z < params.ground_height {
        position.z = params.ground_height;
        velocity.z = velocity.z.max(0.0);
    }
    RobotState { position, velocity, euler, euler_rates, mode: Mode::Aerial }
}

/// Terrestrial step: roll pinned to zero, z pinned to the ground plane, yaw
/// rate limited by the thrust-dependent yaw acceleration capability, and
/// velocity constrained to the heading direction every step. Returns the new
/// state and a wheel-liftoff flag (normal force went negative).
pub fn step_terrestrial(
    state: &RobotState,
    cmd: &ControlCommand,
    params: &PlantParams,
) -> (RobotState, bool) {
    let dt = params.dt;
    let pitch = lag_toward(state.euler.pitch, cmd.attitude.pitch, dt, params.tau_att);
    let pitch_rate = wrap_angle(pitch - state.euler.pitch) / dt;

    // Yaw follows the command through the attitude lag, but its acceleration
    // is capped by what the current thrust can produce.
    let avail = params.yaw_accel_available(cmd.thrust);
    let rate_desired = wrap_angle(cmd.attitude.yaw - state.euler.yaw) / params.tau_att;
    let yaw_accel = ((rate_desired - state.euler_rates.yaw) / dt).clamp(-avail, avail);
    let yaw_rate = state.euler_rates.yaw + yaw_accel * dt;
    let yaw = wrap_angle(state.euler.yaw + yaw_rate * dt);

    let normal = params.mass * params.gravity - params.k_f * cmd.thrust * pitch.cos();
    let liftoff = normal < 0.0;

    // Speed along the (old) heading; lateral component is zero by
    // construction from the previous step.
    let heading_old = Vector2::new(state.euler.yaw.cos(), state.euler.yaw.sin());
    let speed = Vector2::new(state.velocity.x, state.velocity.y).dot(&heading_old);

    let drive = params.k_f * cmd.thrust * pitch.sin();
    let friction = params.mu_r * normal.max(0.0);
    let accel = if speed.abs() < 1e-9 && drive.abs() <= friction {
        0.0
    } else {
        let resist = if speed.abs() < 1e-9 { drive.signum() } else { speed.signum() };
        (drive - friction * resist) / params.mass
    };
    let mut new_speed = speed + accel * dt;
    if speed != 0.0 && new_speed.signum() != speed.signum() && drive.abs() <= friction {
        new_speed = 0.0; // friction stops the vehicle, it does not reverse it
    }

    let heading = Vector2::new(yaw.cos(), yaw.sin());
    let velocity = Vector3::new(new_speed * heading.x, new_speed * heading.y, 0.0);
    let position = Vector3::new(
        state.position.x + velocity.x * dt,
        state.position.y + velocity.y * dt,
        params.ground_height,
    );
    let new_state = RobotState {
        position,
        velocity,
        euler: EulerZyx { yaw, pitch, roll: 0.0 },
        euler_rates: EulerZyx { yaw: yaw_rate, pitch: pitch_rate, roll: 0.0 },
        mode: Mode::Terrestrial,
    };
    (new_state, liftoff)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EpisodeStatus {
    Completed,
    Diverged,
    WheelLiftoff,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub state: RobotState,
    pub cmd: ControlCommand,
    pub setpoint: Setpoint,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trace {
    /// Control period between rows (s).
    pub dt: f64,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean position tracking error (m); 2D in terrestrial segments.
    pub e_a: f64,
    /// Max position tracking error (m).
    pub e_m: f64,
    /// Mean normalized thrust.
    pub t_n: f64,
    /// Integral of squared acceleration (m^2/s^3) from the trace.
    pub j_acc: f64,
    /// Integral of |F|^(3/2) dt; propeller-power proxy.
    pub energy_proxy: f64,
    pub duration: f64,
    pub status: EpisodeStatus,
}

fn tracking_error(row: &TraceRow) -> f64 {
    let d = row.state.position - row.setpoint.position;
    match row.setpoint.mode {
        Mode::Terrestrial => d.xy().norm(),
        Mode::Aerial => d.norm(),
    }
}

/// Recompute metrics from a trace; a pure function so serialized traces
/// reproduce their stored metrics exactly.
pub fn metrics_from_trace(trace: &Trace, status: EpisodeStatus) -> Metrics {
    if trace.rows.is_empty() {
        return Metrics {
            e_a: 0.0,
            e_m: 0.0,
            t_n: 0.0,
            j_acc: 0.0,
            energy_proxy: 0.0,
            duration: 0.0,
            status,
        };
    }
    let n = trace.rows.len();
    let mut sum_err = 0.0;
    let mut max_err: f64 = 0.0;
    let mut sum_thrust = 0.0;
    let mut energy = 0.0;
    let mut j_acc = 0.0;
    for (i, row) in trace.rows.iter().enumerate() {
        let e = tracking_error(row);
        sum_err += e;
        max_err = max_err.max(e);
        sum_thrust += row.cmd.thrust;
        energy += row.cmd.thrust.powf(1.5) * trace.dt;
        if i > 0 {
            let dv = row.state.velocity - trace.rows[i - 1].state.velocity;
            j_acc += (dv / trace.dt).norm_squared() * trace.dt;
        }
    }
    Metrics {
        e_a: sum_err / n as f64,
        e_m: max_err,
        t_n: sum_thrust / n as f64,
        j_acc,
        energy_proxy: energy,
        duration: trace.rows.last().unwrap().t,
        status,
    }
}

pub struct EpisodeConfig {
    pub plant: PlantParams,
    pub control_substeps: usize,
    pub settle_time: f64,
    pub z_tol: f64,
    pub yaw_hold_eps: f64,
    /// Abort threshold on tracking error (m).
    pub divergence_limit: f64,
}

impl EpisodeConfig {
    pub fn from_config(cfg: &crate::config::Config) -> Self {
        Self {
            plant: PlantParams::from_config(&cfg.gains, &cfg.plant, cfg.map.ground_height),
            control_substeps: cfg.plant.control_substeps,
            settle_time: cfg.plant.settle_time,
            z_tol: cfg.trajopt.z_tol,
            yaw_hold_eps: cfg.gains.yaw_hold_eps,
            divergence_limit: 5.0,
        }
    }
}

/// Close the loop at the control rate: sample setpoint, detect mode-switch
/// trigger, run the cascaded controller, and advance the plant.
pub fn run_episode(
    traj: &BSplineTrajectory,
    controller: &mut Controller,
    episode: &EpisodeConfig,
) -> Result<(Trace, Metrics)> {
    let params = &episode.plant;
    let control_dt = params.dt * episode.control_substeps as f64;
    let mut sampler =
        SetpointSampler::new(traj, params.ground_height, episode.z_tol, episode.yaw_hold_eps);
    let duration = traj.duration();
    if !(duration > 0.0) {
        return Err(Error::Simulation("trajectory has no time span".into()));
    }

    let sp0 = sampler.sample(0.0)?;
    let mut state = RobotState {
        position: sp0.position,
        velocity: sp0.velocity,
        euler: EulerZyx { yaw: sp0.yaw, pitch: 0.0, roll: 0.0 },
        euler_rates: EulerZyx::default(),
        mode: sp0.mode,
    };
    if sp0.mode == Mode::Terrestrial {
        state.position.z = params.ground_height;
        state.velocity.z = 0.0;
        // Nonholonomic start: velocity along the heading.
        let speed = state.velocity.xy().norm();
        state.velocity = Vector3::new(speed * sp0.yaw.cos(), speed * sp0.yaw.sin(), 0.0);
    }

    let steps = ((duration + episode.settle_time) / control_dt).ceil() as usize;
    let mut rows = Vec::with_capacity(steps);
    let mut prev_sp = sp0;
    let mut status = EpisodeStatus::Completed;

    'outer: for k in 0..steps {
        let t = k as f64 * control_dt;
        let sp = sampler.sample(t)?;
        let trigger = detect_switch(&prev_sp, &sp, t);
        let cmd = controller.step(&state, &sp, trigger.as_ref())?;
        for _ in 0..episode.control_substeps {
            match controller.mode() {
                Mode::Aerial => state = step_aerial(&state, &cmd, params),
                Mode::Terrestrial => {
                    let (s, liftoff) = step_terrestrial(&state, &cmd, params);
                    state = s;
                    if liftoff {
                        status = EpisodeStatus::WheelLiftoff;
                        rows.push(TraceRow { t, state, cmd, setpoint: sp });
                        break 'outer;
                    }
                }
            }
        }
        let row = TraceRow { t, state, cmd, setpoint: sp };
        let err = tracking_error(&row);
        rows.push(row);
        if err > episode.divergence_limit {
            status = EpisodeStatus::Diverged;
            break;
        }
        prev_sp = sp;
    }

    let trace = Trace { dt: control_dt, rows };
    let metrics = metrics_from_trace(&trace, status);
    Ok((trace, metrics))
}

impl Trace {
    /// Fixed column order: time, state position/velocity/attitude, command,
    /// mode, and reference position/mode.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(
            f,
            "t,px,py,pz,vx,vy,vz,yaw,pitch,roll,thrust,cmd_yaw,cmd_pitch,cmd_roll,mode,ref_px,ref_py,ref_pz,ref_mode"
        )?;
        for r in &self.rows {
            let mode = match r.state.mode {
                Mode::Terrestrial => "T",
                Mode::Aerial => "A",
            };
            let ref_mode = match r.setpoint.mode {
                Mode::Terrestrial => "T",
                Mode::Aerial => "A",
            };
            writeln!(
                f,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                r.state.position.x,
                r.state.position.y,
                r.state.position.z,
                r.state.velocity.x,
                r.state.velocity.y,
                r.state.velocity.z,
                r.state.euler.yaw,
                r.state.euler.pitch,
                r.state.euler.roll,
                r.cmd.thrust,
                r.cmd.attitude.yaw,
                r.cmd.attitude.pitch,
                r.cmd.attitude.roll,
                mode,
                r.setpoint.position.x,
                r.setpoint.position.y,
                r.setpoint.position.z,
                ref_mode,
            )?;
        }
        Ok(())
    }
}

/// Self-consistency check of the thrust/yaw-acceleration fit: drive the
/// terrestrial plant with yaw step commands at a range of thrusts, measure
/// the achieved yaw acceleration, and regression-fit |F| = c1 * psi_ddot + c0.
pub fn simulate_yaw_capability_consistency(params: &PlantParams) -> (f64, f64) {
    let mut pairs = Vec::new();
    let lo = params.yaw_fit_c0 + 0.05;
    let hi = 0.45;
    for i in 0..10 {
        let thrust = lo + (hi - lo) * i as f64 / 9.0;
        let state = RobotState {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            euler: EulerZyx::default(),
            euler_rates: EulerZyx::default(),
            mode: Mode::Terrestrial,
        };
        let cmd = ControlCommand {
            thrust,
            attitude: EulerZyx { yaw: 2.0, pitch: 0.0, roll: 0.0 },
        };
        let (after, _) = step_terrestrial(&state, &cmd, params);
        let psi_ddot = (after.euler_rates.yaw - state.euler_rates.yaw) / params.dt;
        pairs.push((psi_ddot, thrust));
    }
    // Least squares thrust = c1 * psi_ddot + c0.
    let n = pairs.len() as f64;
    let sx: f64 = pairs.iter().map(|p| p.0).sum();
    let sy: f64 = pairs.iter().map(|p| p.1).sum();
    let sxx: f64 = pairs.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
    let c1 = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let c0 = (sy - c1 * sx) / n;
    (c1, c0)
}
