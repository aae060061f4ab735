//! Shared configuration for the planner, optimizer, controller, plant, and
//! benchmarks. Loadable from JSON or TOML (picked by file extension); every
//! field has a default so partial files work.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Config {
    pub map: MapConfig,
    pub search: SearchConfig,
    pub trajopt: TrajOptConfig,
    pub gains: GainsConfig,
    pub plant: PlantConfig,
    pub bench: BenchConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MapConfig {
    pub origin: [f64; 3],
    pub size: [f64; 3],
    pub resolution: f64,
    pub ground_height: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            origin: [0.0, 0.0, 0.0],
            size: [20.0, 20.0, 3.0],
            resolution: 0.1,
            ground_height: 0.0,
        }
    }
}

impl MapConfig {
    pub fn dims(&self) -> [usize; 3] {
        [
            (self.size[0] / self.resolution).round() as usize,
            (self.size[1] / self.resolution).round() as usize,
            (self.size[2] / self.resolution).round() as usize,
        ]
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub v_max: f64,
    pub a_max: f64,
    /// Primitive duration (s); a tau/2 refinement kicks in near the goal.
    pub tau: f64,
    pub w_time: f64,
    /// Aerial energy penalty per second of airborne primitive.
    pub w_air: f64,
    pub node_budget: usize,
    pub goal_tolerance: f64,
    /// Velocity quantization for the closed-set key (m/s per bin).
    pub vel_bin: f64,
    /// Spacing of collision-check samples along a primitive (m).
    pub collision_step: f64,
    pub allow_terrestrial: bool,
    pub allow_aerial: bool,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            v_max: 3.0,
            a_max: 4.0,
            tau: 0.5,
            w_time: 1.0,
            w_air: 4.0,
            node_budget: 100_000,
            goal_tolerance: 0.5,
            vel_bin: 0.5,
            collision_step: 0.1,
            allow_terrestrial: true,
            allow_aerial: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrajOptConfig {
    pub degree: usize,
    /// Knot interval as a fraction of the search primitive duration.
    pub knot_interval: f64,
    pub lambda_smooth: f64,
    pub lambda_collision: f64,
    pub lambda_feasibility: f64,
    pub lambda_curvature: f64,
    /// Obstacle clearance below which the collision penalty activates (m).
    pub clearance: f64,
    pub curvature_max: f64,
    pub z_tol: f64,
    pub max_iterations: usize,
}

impl Default for TrajOptConfig {
    fn default() -> Self {
        Self {
            degree: 3,
            knot_interval: 0.25,
            lambda_smooth: 1.0,
            lambda_collision: 10.0,
            lambda_feasibility: 1.0,
            lambda_curvature: 5.0,
            clearance: 0.4,
            curvature_max: 2.0,
            z_tol: 0.05,
            max_iterations: 150,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GainsConfig {
    pub kp_pos: f64,
    pub kv_pos: f64,
    pub k_v: f64,
    pub k_p: f64,
    pub k_i: f64,
    pub integral_limit: f64,
    /// Position error threshold for the yaw branch switch (m).
    pub x_err_threshold: f64,
    /// Turn completion window for adaptive thrust (s).
    pub turn_window: f64,
    pub hover_thrust: f64,
    pub mass: f64,
    pub gravity: f64,
    /// Thrust-to-yaw-acceleration fit: |F| = c1 * psi_ddot + c0.
    pub thrust_fit_c1: f64,
    pub thrust_fit_c0: f64,
    pub v_land: f64,
    pub yaw_hold_eps: f64,
}

impl Default for GainsConfig {
    fn default() -> Self {
        Self {
            kp_pos: 4.0,
            kv_pos: 3.0,
            k_v: 2.0,
            k_p: 1.5,
            k_i: 0.3,
            integral_limit: 1.0,
            x_err_threshold: 0.3,
            turn_window: 0.1,
            hover_thrust: 0.5,
            mass: 0.8477,
            gravity: 9.81,
            thrust_fit_c1: 0.04603,
            thrust_fit_c0: 0.0798,
            v_land: 0.3,
            yaw_hold_eps: 0.05,
        }
    }
}

impl GainsConfig {
    /// Thrust scale (N per normalized unit) consistent with the hover
    /// identity k_f * hover_thrust = M * g.
    pub fn k_f(&self) -> f64 {
        self.mass * self.gravity / self.hover_thrust
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    /// Attitude lag time constant standing in for the autopilot inner loops.
    pub tau_att: f64,
    pub mu_r: f64,
    pub dt: f64,
    /// Plant substeps per control tick (control runs at 1/(dt*substeps)).
    pub control_substeps: usize,
    pub settle_time: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            tau_att: 0.08,
            mu_r: 0.01,
            dt: 0.005,
            control_substeps: 2,
            settle_time: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub seed: u64,
    pub trials: usize,
    pub obstacle_count: usize,
    pub start: [f64; 3],
    pub goal: [f64; 3],
    pub barricade_height: f64,
    pub barricade_thickness: f64,
    /// Keep-out radius around start and goal for random obstacles (m).
    pub keepout: f64,
    /// Half-width of the guaranteed ground corridor, when requested (m).
    pub corridor_half_width: f64,
    pub lemniscate_scale: f64,
    pub tracking_velocities: Vec<f64>,
    pub mode_velocity_limit: f64,
    pub parallel: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: 50,
            obstacle_count: 80,
            start: [2.0, 10.0, 0.0],
            goal: [18.0, 10.0, 0.0],
            barricade_height: 1.5,
            barricade_thickness: 0.3,
            keepout: 1.2,
            corridor_half_width: 0.8,
            lemniscate_scale: 2.0,
            tracking_velocities: vec![0.8, 1.0, 1.2],
            mode_velocity_limit: 1.0,
            parallel: false,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Ok(serde_json::from_str(&text)?),
            _ => toml::from_str(&text).map_err(|e| Error::Config(e.to_string())),
        }
    }
}
