//! Kinodynamic hybrid-state A* over terrestrial and aerial motion primitives.
//!
//! Edges are closed-form constant-acceleration segments. Aerial primitives
//! carry an extra per-second energy penalty so the search stays on the ground
//! unless an obstacle forces flight. The two mode lattices connect only at
//! ground height with zero vertical velocity (takeoff and landing edges).

use crate::envmap::OccupancyGrid;
use crate::{Error, Mode, Result};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KinoState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub mode: Mode,
}

impl KinoState {
    pub fn terrestrial(x: f64, y: f64, ground_height: f64, vx: f64, vy: f64) -> Self {
        Self {
            position: Vector3::new(x, y, ground_height),
            velocity: Vector3::new(vx, vy, 0.0),
            mode: Mode::Terrestrial,
        }
    }

    pub fn aerial(position: Vector3<f64>, velocity: Vector3<f64>) -> Self {
        Self { position, velocity, mode: Mode::Aerial }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotionPrimitive {
    pub start: KinoState,
    /// Constant acceleration input (zero z-component when terrestrial).
    pub input: Vector3<f64>,
    pub duration: f64,
    pub end: KinoState,
    /// Positions at fixed sub-steps, used for collision checking.
    pub samples: Vec<Vector3<f64>>,
}

impl MotionPrimitive {
    pub fn position_at(&self, t: f64) -> Vector3<f64> {
        self.start.position + self.start.velocity * t + self.input * (0.5 * t * t)
    }

    pub fn velocity_at(&self, t: f64) -> Vector3<f64> {
        self.start.velocity + self.input * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SearchStatus {
    Success,
    NoPath,
    Timeout,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResult {
    pub primitives: Vec<MotionPrimitive>,
    pub total_cost: f64,
    pub expanded_nodes: usize,
    pub status: SearchStatus,
}

#[derive(Debug, Clone)]
pub struct SearchParams {
    pub v_max: f64,
    pub a_max: f64,
    pub tau: f64,
    pub w_time: f64,
    pub w_air: f64,
    pub node_budget: usize,
    pub goal_tolerance: f64,
    pub vel_bin: f64,
    pub collision_step: f64,
    pub ground_height: f64,
    pub allow_terrestrial: bool,
    pub allow_aerial: bool,
}

impl From<&crate::config::Config> for SearchParams {
    fn from(c: &crate::config::Config) -> Self {
        Self {
            v_max: c.search.v_max,
            a_max: c.search.a_max,
            tau: c.search.tau,
            w_time: c.search.w_time,
            w_air: c.search.w_air,
            node_budget: c.search.node_budget,
            goal_tolerance: c.search.goal_tolerance,
            vel_bin: c.search.vel_bin,
            collision_step: c.search.collision_step,
            ground_height: c.map.ground_height,
            allow_terrestrial: c.search.allow_terrestrial,
            allow_aerial: c.search.allow_aerial,
        }
    }
}

fn integrate(start: &KinoState, input: Vector3<f64>, tau: f64, end_mode: Mode, ground: f64) -> KinoState {
    let mut position = start.position + start.velocity * tau + input * (0.5 * tau * tau);
    let mut velocity = start.velocity + input * tau;
    if end_mode == Mode::Terrestrial {
        position.z = ground;
        velocity.z = 0.0;
    }
    KinoState { position, velocity, mode: end_mode }
}

/// Build a candidate primitive; returns None when it exceeds the velocity
/// limit or collides with the map.
fn make_primitive(
    start: &KinoState,
    input: Vector3<f64>,
    tau: f64,
    end_mode: Mode,
    grid: &OccupancyGrid,
    params: &SearchParams,
) -> Option<MotionPrimitive> {
    let end = integrate(start, input, tau, end_mode, params.ground_height);
    // Velocity along a constant-acceleration segment is linear, so its norm
    // is maximal at an endpoint.
    let v_end = start.velocity + input * tau;
    if v_end.norm() > params.v_max + 1e-9 {
        return None;
    }
    let approx_len = (end.position - start.position).norm().max(1e-6);
    let n = ((approx_len / params.collision_step).ceil() as usize).clamp(4, 64);
    let mut samples = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let t = tau * i as f64 / n as f64;
        let mut p = start.position + start.velocity * t + input * (0.5 * t * t);
        if end_mode == Mode::Terrestrial && start.mode == Mode::Terrestrial {
            p.z = params.ground_height;
        }
        if p.z < params.ground_height - 1e-9 {
            return None;
        }
        if grid.is_occupied_at(&p) {
            return None;
        }
        samples.push(p);
    }
    Some(MotionPrimitive { start: *start, input, duration: tau, end, samples })
}

/// Enumerate candidate (input, duration, end mode) triples for one node in a
/// fixed order, before any collision checking: the Cartesian product of the
/// input lattice with the given durations, plus takeoff and landing edges.
fn candidate_edges(
    node: &KinoState,
    params: &SearchParams,
    durations: &[f64],
    out: &mut Vec<(Vector3<f64>, f64, Mode)>,
) {
    let a = params.a_max;
    let horiz = [-a, 0.0, a];
    let vert = [-a / 2.0, 0.0, a / 2.0];
    for &tau in durations {
        match node.mode {
            Mode::Terrestrial => {
                if params.allow_terrestrial {
                    for &ax in &horiz {
                        for &ay in &horiz {
                            out.push((Vector3::new(ax, ay, 0.0), tau, Mode::Terrestrial));
                        }
                    }
                }
                // Takeoff: aerial primitives leaving the ground lattice.
                if params.allow_aerial {
                    for &ax in &horiz {
                        for &ay in &horiz {
                            out.push((Vector3::new(ax, ay, a / 2.0), tau, Mode::Aerial));
                        }
                    }
                }
            }
            Mode::Aerial => {
                if params.allow_aerial {
                    for &ax in &horiz {
                        for &ay in &horiz {
                            for &az in &vert {
                                out.push((Vector3::new(ax, ay, az), tau, Mode::Aerial));
                            }
                        }
                    }
                }
                // Landing: constant-input segment arriving exactly at ground
                // height with zero vertical velocity. Requires descending
                // motion; the duration is pinned by the two constraints.
                if params.allow_terrestrial
                    && node.velocity.z < -1e-3
                    && node.position.z > params.ground_height + 1e-6
                {
                    let tau_land = 2.0 * (params.ground_height - node.position.z) / node.velocity.z;
                    if tau_land > 0.05 && tau_land <= 2.0 * params.tau {
                        let az = -node.velocity.z / tau_land;
                        if az.abs() <= a + 1e-9 {
                            for &ax in &horiz {
                                for &ay in &horiz {
                                    out.push((Vector3::new(ax, ay, az), tau_land, Mode::Terrestrial));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Expand a node into its feasible motion primitives: the Cartesian product
/// of the discretized input lattice and the given durations, pruned against
/// velocity limits and the occupancy grid.
pub fn expand(
    node: &KinoState,
    grid: &OccupancyGrid,
    params: &SearchParams,
    durations: &[f64],
) -> Vec<MotionPrimitive> {
    let mut cands = Vec::new();
    candidate_edges(node, params, durations, &mut cands);
    cands
        .into_iter()
        .filter_map(|(input, tau, end_mode)| make_primitive(node, input, tau, end_mode, grid, params))
        .collect()
}

/// Edge cost: control effort plus time, plus the aerial energy penalty when
/// the primitive ends above the ground.
pub fn primitive_cost(p: &MotionPrimitive, w_time: f64, w_air: f64) -> Result<f64> {
    if w_time < 0.0 || w_air < 0.0 {
        return Err(Error::InvalidInput("cost weights must be nonnegative".into()));
    }
    let mut cost = p.input.norm_squared() * p.duration + w_time * p.duration;
    if p.end.mode == Mode::Aerial {
        cost += w_air * p.duration;
    }
    Ok(cost)
}

/// Admissible remaining-cost estimate: straight-line time at v_max, weighted
/// by w_time. Every feasible chain to the goal costs at least this much.
pub fn heuristic(state: &KinoState, goal: &Vector3<f64>, v_max: f64, w_time: f64) -> f64 {
    w_time * (goal - state.position).norm() / v_max
}

#[derive(Clone, Copy)]
struct OpenEntry {
    f: f64,
    terrestrial: bool,
    g: f64,
    node: usize,
}

impl PartialEq for OpenEntry {
    fn eq(&self, other: &Self) -> bool {
        self.f == other.f && self.g == other.g && self.terrestrial == other.terrestrial
    }
}
impl Eq for OpenEntry {}
impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for OpenEntry {
    // Min-heap via reversed comparison: lowest f first, then terrestrial
    // preferred, then lowest g.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .partial_cmp(&self.f)
            .unwrap_or(Ordering::Equal)
            .then_with(|| self.terrestrial.cmp(&other.terrestrial))
            .then_with(|| other.g.partial_cmp(&self.g).unwrap_or(Ordering::Equal))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Key {
    pos: [i32; 3],
    vel: [i32; 3],
    mode: Mode,
}

fn key_of(state: &KinoState, grid: &OccupancyGrid, vel_bin: f64) -> Key {
    let res = grid.geom.resolution;
    let q = |x: f64, s: f64| (x / s).floor() as i32;
    Key {
        pos: [
            q(state.position.x - grid.geom.origin[0], res),
            q(state.position.y - grid.geom.origin[1], res),
            q(state.position.z - grid.geom.origin[2], res),
        ],
        vel: [
            q(state.velocity.x, vel_bin),
            q(state.velocity.y, vel_bin),
            q(state.velocity.z, vel_bin),
        ],
        mode: state.mode,
    }
}

struct NodeRec {
    state: KinoState,
    parent: Option<usize>,
    edge: Option<MotionPrimitive>,
    g: f64,
}

/// Best-first search over (voxelized position, quantized velocity, mode).
pub fn kinodynamic_search(
    start: &KinoState,
    goal: &Vector3<f64>,
    grid: &OccupancyGrid,
    params: &SearchParams,
) -> Result<SearchResult> {
    if params.w_time < 0.0 || params.w_air < 0.0 {
        return Err(Error::InvalidInput("cost weights must be nonnegative".into()));
    }
    if grid.is_occupied_at(&start.position) {
        return Err(Error::Planning("start position is in collision".into()));
    }
    if !grid.geom.contains_point(goal) {
        return Err(Error::Planning("goal is outside the map".into()));
    }
    if (goal - start.position).norm() <= params.goal_tolerance {
        return Ok(SearchResult {
            primitives: Vec::new(),
            total_cost: 0.0,
            expanded_nodes: 0,
            status: SearchStatus::Success,
        });
    }

    let mut nodes = vec![NodeRec { state: *start, parent: None, edge: None, g: 0.0 }];
    let mut best_g: HashMap<Key, f64> = HashMap::new();
    best_g.insert(key_of(start, grid, params.vel_bin), 0.0);
    let mut open = BinaryHeap::new();
    open.push(OpenEntry {
        f: heuristic(start, goal, params.v_max, params.w_time),
        terrestrial: start.mode == Mode::Terrestrial,
        g: 0.0,
        node: 0,
    });

    // Duration refinement kicks in near the goal.
    let refine_radius = 2.0 * params.v_max * params.tau;
    let mut expanded = 0usize;
    let mut cands: Vec<(Vector3<f64>, f64, Mode)> = Vec::new();

    while let Some(entry) = open.pop() {
        let node_id = entry.node;
        let state = nodes[node_id].state;
        let g = nodes[node_id].g;
        if g > entry.g + 1e-12 {
            continue; // stale heap entry
        }
        expanded += 1;
        if expanded > params.node_budget {
            return Ok(SearchResult {
                primitives: Vec::new(),
                total_cost: f64::INFINITY,
                expanded_nodes: expanded,
                status: SearchStatus::Timeout,
            });
        }

        let near_goal = (goal - state.position).norm() <= refine_radius;
        let durations: &[f64] =
            if near_goal { &[params.tau, params.tau / 2.0] } else { &[params.tau] };

        cands.clear();
        candidate_edges(&state, params, durations, &mut cands);
        for &(input, tau, end_mode) in &cands {
            // Cheap pruning first: velocity limit, then the closed-set bound.
            // Collision sampling (the expensive part) only runs for
            // candidates that would actually improve a node.
            if (state.velocity + input * tau).norm() > params.v_max + 1e-9 {
                continue;
            }
            let end = integrate(&state, input, tau, end_mode, params.ground_height);
            let mut cost = input.norm_squared() * tau + params.w_time * tau;
            if end_mode == Mode::Aerial {
                cost += params.w_air * tau;
            }
            let ng = g + cost;
            let key = key_of(&end, grid, params.vel_bin);
            if let Some(&old) = best_g.get(&key) {
                if ng >= old - 1e-12 {
                    continue;
                }
            }
            let Some(prim) = make_primitive(&state, input, tau, end_mode, grid, params) else {
                continue;
            };
            best_g.insert(key, ng);
            nodes.push(NodeRec { state: end, parent: Some(node_id), edge: Some(prim), g: ng });
            let child = nodes.len() - 1;

            if (goal - end.position).norm() <= params.goal_tolerance {
                let mut chain = Vec::new();
                let mut cur = child;
                while let Some(parent) = nodes[cur].parent {
                    chain.push(nodes[cur].edge.clone().expect("non-root node has an edge"));
                    cur = parent;
                }
                chain.reverse();
                return Ok(SearchResult {
                    primitives: chain,
                    total_cost: ng,
                    expanded_nodes: expanded,
                    status: SearchStatus::Success,
                });
            }
            open.push(OpenEntry {
                f: ng + heuristic(&end, goal, params.v_max, params.w_time),
                terrestrial: end.mode == Mode::Terrestrial,
                g: ng,
                node: child,
            });
        }
    }

    Ok(SearchResult {
        primitives: Vec::new(),
        total_cost: f64::INFINITY,
        expanded_nodes: expanded,
        status: SearchStatus::NoPath,
    })
}

/// Sample a primitive chain at (t, position) pairs with roughly uniform time
/// spacing, for B-spline fitting. Always includes chain start and end.
pub fn sample_chain(primitives: &[MotionPrimitive], dt: f64) -> Vec<(f64, Vector3<f64>)> {
    let mut out = Vec::new();
    let mut t0 = 0.0;
    for (i, p) in primitives.iter().enumerate() {
        let n = ((p.duration / dt).ceil() as usize).max(1);
        let last = i == primitives.len() - 1;
        let hi = if last { n } else { n - 1 };
        for j in 0..=hi {
            let t = p.duration * j as f64 / n as f64;
            out.push((t0 + t, p.position_at(t)));
        }
        t0 += p.duration;
    }
    out
}
