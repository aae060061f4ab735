//! Unified cascaded controller for both locomotion modes.
//!
//! Aerial: proportional position/velocity loop plus feedforward, mapped to a
//! normalized collective thrust and a desired attitude via the flatness
//! construction. Terrestrial: yaw points along the trajectory tangent (or
//! toward the position error when it grows), the thrust is sized so the
//! achievable yaw acceleration completes the commanded turn within a short
//! window, and pitch converts the desired along-track acceleration into a
//! horizontal thrust component. Takeoff switches modes immediately; landing
//! descends at constant speed until ground contact.

use crate::config::GainsConfig;
use crate::mission::{Setpoint, SwitchKind, SwitchTrigger};
use crate::{wrap_angle, Error, Mode, Result};
use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// Z-Y-X Euler attitude (yaw, pitch, roll), wrapped to (-pi, pi].
/// Convention: positive pitch tilts the thrust vector toward -x, so a
/// desired +x acceleration produces negative pitch in aerial mode.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct EulerZyx {
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
}

impl EulerZyx {
    /// Body z-axis (thrust direction) in the inertial frame.
    pub fn body_z(&self) -> Vector3<f64> {
        let (sy, cy) = self.yaw.sin_cos();
        let (sp, cp) = self.pitch.sin_cos();
        let (sr, cr) = self.roll.sin_cos();
        Vector3::new(-sp * cy * cr + sy * sr, -sp * sy * cr - cy * sr, cp * cr)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RobotState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub euler: EulerZyx,
    pub euler_rates: EulerZyx,
    pub mode: Mode,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ControlCommand {
    /// Normalized collective thrust in [0, 1].
    pub thrust: f64,
    pub attitude: EulerZyx,
}

/// Aerial outer loop: desired acceleration from proportional position and
/// velocity errors plus the reference feedforward. Gravity compensation is
/// folded into the thrust mapping downstream.
pub fn aerial_position_control(
    state: &RobotState,
    setpoint: &Setpoint,
    gains: &GainsConfig,
) -> Vector3<f64> {
    setpoint.acceleration
        + (setpoint.position - state.position) * gains.kp_pos
        + (setpoint.velocity - state.velocity) * gains.kv_pos
}

/// Map a desired acceleration and yaw to (normalized thrust, attitude) via
/// the flatness construction. At zero desired acceleration the command is
/// exactly (hover_thrust, level). Near-zero total thrust holds the previous
/// attitude at a small thrust floor.
pub fn thrust_attitude_from_acc(
    a_d: &Vector3<f64>,
    yaw_d: f64,
    gains: &GainsConfig,
    prev_attitude: &EulerZyx,
) -> ControlCommand {
    let f = a_d + Vector3::new(0.0, 0.0, gains.gravity);
    let fnorm = f.norm();
    if fnorm < 1e-6 {
        return ControlCommand { thrust: 0.05 * gains.hover_thrust, attitude: *prev_attitude };
    }
    let thrust = (gains.hover_thrust * fnorm / gains.gravity).clamp(0.0, 1.0);
    let zb = f / fnorm;
    let xc = Vector3::new(yaw_d.cos(), yaw_d.sin(), 0.0);
    let yb_raw = zb.cross(&xc);
    if yb_raw.norm() < 1e-9 {
        // Thrust parallel to the heading axis; attitude is ill-defined.
        return ControlCommand { thrust, attitude: *prev_attitude };
    }
    let yb = yb_raw.normalize();
    let xb = yb.cross(&zb);
    let attitude = EulerZyx {
        yaw: xb.y.atan2(xb.x),
        pitch: xb.z.asin(),
        roll: yb.z.atan2(zb.z),
    };
    ControlCommand { thrust, attitude }
}

/// Terrestrial yaw selection: trajectory tangent while the position error is
/// within the threshold (inclusive), error-correction heading otherwise.
pub fn terrestrial_yaw(state: &RobotState, setpoint: &Setpoint, threshold: f64) -> f64 {
    let xe = Vector2::new(
        setpoint.position.x - state.position.x,
        setpoint.position.y - state.position.y,
    );
    if xe.norm() <= threshold {
        wrap_angle(setpoint.yaw)
    } else {
        xe.y.atan2(xe.x)
    }
}

/// Adaptive terrestrial thrust: size |F| so the achievable yaw acceleration
/// finishes the commanded turn within the window. Clamped to
/// [intercept, hover_thrust).
pub fn adaptive_thrust(state: &RobotState, yaw_d: f64, window: f64, gains: &GainsConfig) -> f64 {
    let dpsi = wrap_angle(yaw_d - state.euler.yaw);
    // Yaw rate component already turning in the commanded direction.
    let rate_toward = state.euler_rates.yaw * dpsi.signum();
    let psi_ddot = (2.0 * (dpsi.abs() - rate_toward * window) / (window * window)).max(0.0);
    let f = gains.thrust_fit_c1 * psi_ddot + gains.thrust_fit_c0;
    let upper = gains.hover_thrust * (1.0 - 1e-9);
    f.clamp(gains.thrust_fit_c0, upper.max(gains.thrust_fit_c0))
}

/// Terrestrial attitude: desired along-track acceleration from the feedback
/// law (errors projected onto the desired heading), converted to pitch so
/// the horizontal thrust component provides it. Roll stays zero on flat
/// ground.
pub fn terrestrial_attitude(
    state: &RobotState,
    setpoint: &Setpoint,
    thrust: f64,
    yaw_d: f64,
    delta: f64,
    gains: &GainsConfig,
) -> Result<ControlCommand> {
    if !(thrust > 0.0) {
        return Err(Error::InvalidInput("terrestrial attitude needs positive thrust".into()));
    }
    let heading = Vector2::new(yaw_d.cos(), yaw_d.sin());
    let xe = Vector2::new(
        setpoint.position.x - state.position.x,
        setpoint.position.y - state.position.y,
    )
    .dot(&heading);
    let ve = Vector2::new(
        setpoint.velocity.x - state.velocity.x,
        setpoint.velocity.y - state.velocity.y,
    )
    .dot(&heading);
    let a_x = gains.k_v * (ve + gains.k_p * xe) + gains.k_i * delta;
    let arg = (gains.mass * a_x / (gains.k_f() * thrust)).clamp(-1.0, 1.0);
    Ok(ControlCommand {
        thrust,
        attitude: EulerZyx { yaw: wrap_angle(yaw_d), pitch: arg.asin(), roll: 0.0 },
    })
}

/// Cascaded controller state machine: owns the locomotion mode, the
/// terrestrial velocity-error integral, and the landing descent.
pub struct Controller {
    pub gains: GainsConfig,
    pub ground_height: f64,
    /// Control period used for the integral term (s).
    pub control_dt: f64,
    /// Constant terrestrial thrust for fixed-thrust baseline controllers;
    /// None selects the adaptive law.
    pub fixed_thrust: Option<f64>,
    mode: Mode,
    delta: f64,
    landing: bool,
    prev_attitude: EulerZyx,
}

impl Controller {
    pub fn new(gains: GainsConfig, ground_height: f64, control_dt: f64, initial_mode: Mode) -> Self {
        Self {
            gains,
            ground_height,
            control_dt,
            fixed_thrust: None,
            mode: initial_mode,
            delta: 0.0,
            landing: false,
            prev_attitude: EulerZyx::default(),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_landing(&self) -> bool {
        self.landing
    }

    pub fn step(
        &mut self,
        state: &RobotState,
        setpoint: &Setpoint,
        trigger: Option<&SwitchTrigger>,
    ) -> Result<ControlCommand> {
        if let Some(t) = trigger {
            match t.kind {
                SwitchKind::Takeoff => {
                    // Immediate switch, no transition process.
                    self.mode = Mode::Aerial;
                    self.landing = false;
                }
                SwitchKind::Land => {
                    self.landing = true;
                }
            }
        }
        if self.landing && state.position.z <= self.ground_height + 0.02 {
            self.mode = Mode::Terrestrial;
            self.landing = false;
            self.delta = 0.0;
        }

        let cmd = match self.mode {
            Mode::Aerial => {
                let mut sp = *setpoint;
                if self.landing {
                    // Constant-speed descent: no vertical position feedback,
                    // just track -v_land until ground contact.
                    sp.position.z = state.position.z;
                    sp.velocity.z = -self.gains.v_land;
                    sp.acceleration.z = 0.0;
                }
                let a_d = aerial_position_control(state, &sp, &self.gains);
                thrust_attitude_from_acc(&a_d, sp.yaw, &self.gains, &self.prev_attitude)
            }
            Mode::Terrestrial => {
                let yaw_d = terrestrial_yaw(state, setpoint, self.gains.x_err_threshold);
                let thrust = match self.fixed_thrust {
                    Some(f) => f.clamp(
                        self.gains.thrust_fit_c0,
                        self.gains.hover_thrust * (1.0 - 1e-9),
                    ),
                    None => adaptive_thrust(state, yaw_d, self.gains.turn_window, &self.gains),
                };
                let heading = Vector2::new(yaw_d.cos(), yaw_d.sin());
                let ve = Vector2::new(
                    setpoint.velocity.x - state.velocity.x,
                    setpoint.velocity.y - state.velocity.y,
                )
                .dot(&heading);
                self.delta = (self.delta + ve * self.control_dt)
                    .clamp(-self.gains.integral_limit, self.gains.integral_limit);
                terrestrial_attitude(state, setpoint, thrust, yaw_d, self.delta, &self.gains)?
            }
        };
        self.prev_attitude = cmd.attitude;
        Ok(cmd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn gains() -> GainsConfig {
        GainsConfig::default()
    }

    fn rest_state(mode: Mode) -> RobotState {
        RobotState {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            euler: EulerZyx::default(),
            euler_rates: EulerZyx::default(),
            mode,
        }
    }

    fn sp_at(p: Vector3<f64>, v: Vector3<f64>, yaw: f64, mode: Mode) -> Setpoint {
        Setpoint { mode, position: p, velocity: v, acceleration: Vector3::zeros(), yaw }
    }

    #[test]
    fn aerial_p_law() {
        let g = gains();
        let s = rest_state(Mode::Aerial);
        // Zero error, zero feedforward.
        let sp = sp_at(Vector3::zeros(), Vector3::zeros(), 0.0, Mode::Aerial);
        assert!(aerial_position_control(&s, &sp, &g).norm() < 1e-12);
        // 1 m +x error with kp only.
        let mut g2 = g.clone();
        g2.kp_pos = 2.0;
        g2.kv_pos = 0.0;
        let sp = sp_at(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros(), 0.0, Mode::Aerial);
        let a = aerial_position_control(&s, &sp, &g2);
        assert!((a - Vector3::new(2.0, 0.0, 0.0)).norm() < 1e-12);
        // Pure feedforward passes through.
        let mut sp = sp_at(Vector3::zeros(), Vector3::zeros(), 0.0, Mode::Aerial);
        sp.acceleration = Vector3::new(0.3, -0.2, 0.1);
        let a = aerial_position_control(&s, &sp, &g);
        assert!((a - sp.acceleration).norm() < 1e-12);
    }

    #[test]
    fn hover_identity() {
        let g = gains();
        let cmd = thrust_attitude_from_acc(&Vector3::zeros(), 0.0, &g, &EulerZyx::default());
        assert!((cmd.thrust - g.hover_thrust).abs() < 1e-12);
        assert!(cmd.attitude.yaw.abs() < 1e-12);
        assert!(cmd.attitude.pitch.abs() < 1e-12);
        assert!(cmd.attitude.roll.abs() < 1e-12);
    }

    #[test]
    fn forward_acceleration_pitches_nose_down() {
        let g = gains();
        let a_d = Vector3::new(g.gravity, 0.0, 0.0);
        let cmd = thrust_attitude_from_acc(&a_d, 0.0, &g, &EulerZyx::default());
        assert!((cmd.attitude.pitch + FRAC_PI_4).abs() < 1e-9);
        assert!((cmd.thrust - g.hover_thrust * 2.0_f64.sqrt()).abs() < 1e-9);
        // The commanded attitude reproduces the desired thrust direction.
        let f = a_d + Vector3::new(0.0, 0.0, g.gravity);
        assert!((cmd.attitude.body_z() - f.normalize()).norm() < 1e-9);
    }

    #[test]
    fn yaw_decoupled_at_hover() {
        let g = gains();
        let c0 = thrust_attitude_from_acc(&Vector3::zeros(), 0.0, &g, &EulerZyx::default());
        let c1 = thrust_attitude_from_acc(&Vector3::zeros(), PI, &g, &EulerZyx::default());
        assert!((c0.thrust - c1.thrust).abs() < 1e-12);
        assert!(c0.attitude.pitch.abs() < 1e-12 && c1.attitude.pitch.abs() < 1e-12);
        assert!((wrap_angle(c1.attitude.yaw - PI)).abs() < 1e-9);
    }

    #[test]
    fn yaw_branch_selection() {
        let g = gains();
        let s = rest_state(Mode::Terrestrial);
        // On track: tangent branch.
        let sp = sp_at(Vector3::zeros(), Vector3::zeros(), 0.4, Mode::Terrestrial);
        assert!((terrestrial_yaw(&s, &sp, g.x_err_threshold) - 0.4).abs() < 1e-12);
        // Large +y error: error-correction branch.
        let sp = sp_at(Vector3::new(0.0, 1.0, 0.0), Vector3::zeros(), 0.4, Mode::Terrestrial);
        assert!((terrestrial_yaw(&s, &sp, 0.2) - FRAC_PI_2).abs() < 1e-12);
        // Exactly at the threshold: inclusive tangent branch.
        let sp = sp_at(Vector3::new(0.2, 0.0, 0.0), Vector3::zeros(), 0.4, Mode::Terrestrial);
        assert!((terrestrial_yaw(&s, &sp, 0.2) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn adaptive_thrust_intercept_and_clamp() {
        let g = gains();
        let s = rest_state(Mode::Terrestrial);
        // No turn, no rate: exactly the fit intercept.
        assert_eq!(adaptive_thrust(&s, 0.0, g.turn_window, &g), g.thrust_fit_c0);
        // 0.1 rad turn in 0.1 s from rest: psi_ddot = 20, raw F > 1, clamped.
        let f = adaptive_thrust(&s, 0.1, 0.1, &g);
        assert!(f < g.hover_thrust);
        assert!(f > 0.4);
        // Always within [c0, hover).
        for dpsi in [-3.0, -0.5, 0.0, 0.2, 1.0, 3.0] {
            let f = adaptive_thrust(&s, dpsi, g.turn_window, &g);
            assert!(f >= g.thrust_fit_c0 && f < g.hover_thrust);
        }
    }

    #[test]
    fn adaptive_thrust_monotone_in_turn_magnitude() {
        let g = gains();
        let mut s = rest_state(Mode::Terrestrial);
        s.euler_rates.yaw = 0.3;
        let mut prev = 0.0;
        for i in 0..20 {
            let dpsi = 0.001 + 0.002 * i as f64;
            let f = adaptive_thrust(&s, dpsi, g.turn_window, &g);
            assert!(f >= prev - 1e-12);
            prev = f;
        }
    }

    #[test]
    fn terrestrial_pitch_from_acceleration() {
        let g = gains();
        let s = rest_state(Mode::Terrestrial);
        // Zero errors, zero integral: level.
        let sp = sp_at(Vector3::zeros(), Vector3::zeros(), 0.0, Mode::Terrestrial);
        let cmd = terrestrial_attitude(&s, &sp, 0.2, 0.0, 0.0, &g).unwrap();
        assert!(cmd.attitude.pitch.abs() < 1e-12);
        assert_eq!(cmd.attitude.roll, 0.0);

        // a_x = 0.5 * k_f |F| / M -> pitch = asin(0.5).
        let thrust = 0.2;
        let a_x = 0.5 * g.k_f() * thrust / g.mass;
        // Build an error that produces exactly a_x through the k_v term.
        let ve = a_x / g.k_v;
        let sp = sp_at(Vector3::zeros(), Vector3::new(ve, 0.0, 0.0), 0.0, Mode::Terrestrial);
        let cmd = terrestrial_attitude(&s, &sp, thrust, 0.0, 0.0, &g).unwrap();
        assert!((cmd.attitude.pitch - 0.5_f64.asin()).abs() < 1e-9);

        // Saturating acceleration clamps the asin argument.
        let sp = sp_at(Vector3::zeros(), Vector3::new(100.0, 0.0, 0.0), 0.0, Mode::Terrestrial);
        let cmd = terrestrial_attitude(&s, &sp, thrust, 0.0, 0.0, &g).unwrap();
        assert!((cmd.attitude.pitch - FRAC_PI_2).abs() < 1e-9);
        assert!(cmd.attitude.pitch.is_finite());

        assert!(terrestrial_attitude(&s, &sp, 0.0, 0.0, 0.0, &g).is_err());
    }

    #[test]
    fn controller_dispatch_and_triggers() {
        let g = gains();
        let mut c = Controller::new(g.clone(), 0.0, 0.01, Mode::Terrestrial);
        let s = rest_state(Mode::Terrestrial);
        let sp = sp_at(Vector3::zeros(), Vector3::zeros(), 0.0, Mode::Terrestrial);
        let cmd = c.step(&s, &sp, None).unwrap();
        assert!(cmd.thrust < g.hover_thrust);
        assert_eq!(c.mode(), Mode::Terrestrial);

        // Takeoff trigger: the very next command is aerial.
        let takeoff = SwitchTrigger { kind: SwitchKind::Takeoff, time: 0.0 };
        let sp_air = sp_at(Vector3::new(0.0, 0.0, 1.0), Vector3::zeros(), 0.0, Mode::Aerial);
        let cmd = c.step(&s, &sp_air, Some(&takeoff)).unwrap();
        assert_eq!(c.mode(), Mode::Aerial);
        assert!(cmd.thrust > g.hover_thrust); // climbing against the 1 m error

        // Land trigger: constant-descent vertical reference until contact.
        let land = SwitchTrigger { kind: SwitchKind::Land, time: 1.0 };
        let mut s_air = rest_state(Mode::Aerial);
        s_air.position.z = 1.0;
        let sp_ground = sp_at(Vector3::zeros(), Vector3::zeros(), 0.0, Mode::Terrestrial);
        let cmd = c.step(&s_air, &sp_ground, Some(&land)).unwrap();
        assert!(c.is_landing());
        // Descending command: thrust below hover since it tracks -v_land.
        assert!(cmd.thrust < g.hover_thrust);

        // Ground contact completes the landing and resets the integral.
        s_air.position.z = 0.01;
        c.step(&s_air, &sp_ground, None).unwrap();
        assert_eq!(c.mode(), Mode::Terrestrial);
        assert_eq!(c.delta(), 0.0);
    }

    #[test]
    fn integral_bounded_under_persistent_error() {
        let g = gains();
        let mut c = Controller::new(g.clone(), 0.0, 0.01, Mode::Terrestrial);
        let s = rest_state(Mode::Terrestrial);
        let sp = sp_at(Vector3::zeros(), Vector3::new(3.0, 0.0, 0.0), 0.0, Mode::Terrestrial);
        for _ in 0..10_000 {
            c.step(&s, &sp, None).unwrap();
        }
        assert!(c.delta().abs() <= g.integral_limit + 1e-12);
    }
}
