//! Terrestrial-aerial quadrotor navigation stack.
//!
//! The pipeline goes: voxel occupancy map + ESDF ([`envmap`]) → kinodynamic
//! hybrid-A* over terrestrial and aerial motion primitives ([`search`]) →
//! uniform B-spline refinement with smoothness, collision, feasibility, and
//! nonholonomic curvature costs ([`trajopt`]) → setpoint sampling with
//! locomotion-switch triggers ([`mission`]) → cascaded terrestrial/aerial
//! control with adaptive thrust ([`control`]) → fixed-step plant simulation
//! and metrics ([`sim`]). [`bench`] wires it all into seeded benchmark
//! protocols.

pub mod bench;
pub mod config;
pub mod control;
pub mod envmap;
pub mod mission;
pub mod search;
pub mod sim;
pub mod trajopt;

use serde::{Deserialize, Serialize};

/// Locomotion mode. Terrestrial states roll on the ground plane with zero
/// vertical velocity; aerial states are free 3D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    Terrestrial,
    Aerial,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("planning failed: {0}")]
    Planning(String),
    #[error("simulation failed: {0}")]
    Simulation(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Wrap an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * std::f64::consts::PI);
    if a > std::f64::consts::PI {
        a -= 2.0 * std::f64::consts::PI;
    } else if a <= -std::f64::consts::PI {
        a += 2.0 * std::f64::consts::PI;
    }
    a
}
