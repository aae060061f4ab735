//! Benchmark harness: seeded random environments, the planning benchmark
//! (search + refinement over many trials), lemniscate tracking with adaptive
//! and fixed-thrust controller variants, and the fly-vs-roll energy
//! comparison.
//!
//! Everything here is deterministic under the master seed, including trial
//! order, so archived CSVs are byte-reproducible. Wall-clock timings are
//! reported only in the text summaries, never in the CSVs.
//!
//! Note on baselines: the planning ablation is our own search stage without
//! the refinement pass, not a re-implementation of any external planner; the
//! two fixed-thrust tracking baselines share the constant thrust assigned
//! from the adaptive run and differ only by a documented gain preset.

use crate::config::{Config, GainsConfig};
use crate::control::Controller;
use crate::envmap::{compute_esdf, Box3, Cylinder, MapFile, ObstacleSet};
use crate::search::{kinodynamic_search, sample_chain, KinoState, SearchParams, SearchStatus};
use crate::sim::{metrics_from_trace, run_episode, EpisodeConfig, EpisodeStatus, Metrics, Trace};
use crate::trajopt::{classify_points, fit_bspline, optimize, BSplineTrajectory, CostWeights, Limits};
use crate::{Error, Mode, Result};
use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial RNG seed derived from the master seed; stable across runs and
/// independent of trial execution order.
pub fn trial_seed(master: u64, trial: usize) -> u64 {
    splitmix64(master ^ (trial as u64).wrapping_mul(0xA3EC_6476_5935_9ACD).wrapping_add(1))
}

#[derive(Debug, Clone, Copy)]
pub struct EnvOptions {
    /// Wall spanning the full map width between start and goal, passable
    /// only above its top.
    pub barricade: bool,
    /// Keep random obstacles out of a ground corridor along the start-goal
    /// line, guaranteeing a fully terrestrial route.
    pub corridor: bool,
}

fn dist_to_segment_2d(p: Vector2<f64>, a: Vector2<f64>, b: Vector2<f64>) -> f64 {
    let ab = b - a;
    let denom = ab.norm_squared().max(1e-12);
    let t = ((p - a).dot(&ab) / denom).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Deterministic random environment: vertical cylinders with keep-out radii
/// around start and goal, optionally a barricade and/or a clear ground
/// corridor. Errors when an obstacle cannot be placed within bounded retries.
pub fn gen_random_env(seed: u64, cfg: &Config, opts: &EnvOptions) -> Result<MapFile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let b = &cfg.bench;
    let [sx, sy, sz] = cfg.map.size;
    let start = Vector2::new(b.start[0], b.start[1]);
    let goal = Vector2::new(b.goal[0], b.goal[1]);

    let mut cylinders = Vec::with_capacity(b.obstacle_count);
    let barricade_x_mid = 0.5 * (b.start[0] + b.goal[0]);
    for _ in 0..b.obstacle_count {
        let mut placed = false;
        for _ in 0..200 {
            let r = rng.gen_range(0.15..0.35);
            let cx = rng.gen_range(0.5..sx - 0.5);
            let cy = rng.gen_range(0.5..sy - 0.5);
            let c = Vector2::new(cx, cy);
            if (c - start).norm() <= b.keepout + r || (c - goal).norm() <= b.keepout + r {
                continue;
            }
            if opts.corridor && dist_to_segment_2d(c, start, goal) <= b.corridor_half_width + r {
                continue;
            }
            if opts.barricade && (cx - barricade_x_mid).abs() <= 0.5 * b.barricade_thickness + r {
                // Keep cylinders off the barricade so the crossing corridor
                // above its top stays reachable.
                continue;
            }
            cylinders.push(Cylinder {
                center: [cx, cy],
                radius: r,
                z_min: 0.0,
                z_max: sz,
            });
            placed = true;
            break;
        }
        if !placed {
            return Err(Error::Planning(
                "could not place obstacle within retry budget".into(),
            ));
        }
    }

    let mut boxes = Vec::new();
    if opts.barricade {
        boxes.push(Box3 {
            min: [barricade_x_mid - 0.5 * b.barricade_thickness, 0.0, 0.0],
            max: [
                barricade_x_mid + 0.5 * b.barricade_thickness,
                sy,
                b.barricade_height,
            ],
        });
    }

    Ok(MapFile {
        origin: cfg.map.origin,
        dims: cfg.map.dims(),
        resolution: cfg.map.resolution,
        ground_height: cfg.map.ground_height,
        obstacles: ObstacleSet { boxes, cylinders },
    })
}

/// Trapezoid integral of squared acceleration along the spline.
pub fn accel_integral(traj: &BSplineTrajectory, n: usize) -> Result<f64> {
    let dur = traj.duration();
    let mut sum = 0.0;
    let mut prev = traj.evaluate(0.0, 2)?.norm_squared();
    for i in 1..=n {
        let t = dur * i as f64 / n as f64;
        let cur = traj.evaluate(t, 2)?.norm_squared();
        sum += 0.5 * (prev + cur) * (dur / n as f64);
        prev = cur;
    }
    Ok(sum)
}

#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub status: SearchStatus,
    pub expanded_nodes: usize,
    /// Squared-acceleration integral of the raw primitive chain (the
    /// search-only ablation).
    pub j_search: f64,
    /// Squared-acceleration integral of the refined spline, densely sampled.
    pub j_opt: f64,
    pub has_aerial: bool,
    pub trajectory: Option<BSplineTrajectory>,
    pub search_ms: f64,
    pub opt_ms: f64,
}

/// Full planning pipeline on one map: search, spline fit, labeling, and
/// gradient refinement against the map's ESDF.
pub fn plan_route(
    map: &MapFile,
    start: &KinoState,
    goal: &Vector3<f64>,
    cfg: &Config,
) -> Result<PlanOutcome> {
    let grid = map.to_grid()?;
    let mut params = SearchParams::from(cfg);
    params.ground_height = map.ground_height;

    let t0 = Instant::now();
    let sr = kinodynamic_search(start, goal, &grid, &params)?;
    let search_ms = t0.elapsed().as_secs_f64() * 1e3;

    if sr.status != SearchStatus::Success || sr.primitives.is_empty() {
        return Ok(PlanOutcome {
            status: sr.status,
            expanded_nodes: sr.expanded_nodes,
            j_search: f64::NAN,
            j_opt: f64::NAN,
            has_aerial: false,
            trajectory: None,
            search_ms,
            opt_ms: 0.0,
        });
    }

    // Constant-acceleration chain: the integral is exact.
    let j_search: f64 = sr
        .primitives
        .iter()
        .map(|p| p.input.norm_squared() * p.duration)
        .sum();
    let has_aerial = sr.primitives.iter().any(|p| p.end.mode == Mode::Aerial);

    // The ESDF is a property of the map, not of this query; keep it out of
    // the per-plan timing like the occupancy grid above.
    let esdf = compute_esdf(&grid);

    let t1 = Instant::now();
    let knot_dt = cfg.trajopt.knot_interval * cfg.search.tau;
    let samples = sample_chain(&sr.primitives, 0.5 * knot_dt);
    let mut traj = fit_bspline(&samples, cfg.trajopt.degree, knot_dt)?;
    classify_points(&mut traj, map.ground_height, cfg.trajopt.z_tol);
    let weights = CostWeights {
        // Second differences scale as a*dt^2, so dividing by dt^3 makes the
        // smoothness term approximate the continuous squared-acceleration
        // integral independently of knot density.
        smooth: cfg.trajopt.lambda_smooth / knot_dt.powi(3),
        collision: cfg.trajopt.lambda_collision,
        feasibility: cfg.trajopt.lambda_feasibility,
        curvature: cfg.trajopt.lambda_curvature,
    };
    let limits = Limits { v_max: cfg.search.v_max, a_max: cfg.search.a_max };
    let out = optimize(
        &traj,
        Some(&esdf),
        &weights,
        &limits,
        cfg.trajopt.clearance,
        cfg.trajopt.curvature_max,
        cfg.trajopt.max_iterations,
    )?;
    let opt_ms = t1.elapsed().as_secs_f64() * 1e3;
    let j_opt = accel_integral(&out.trajectory, 1000)?;

    Ok(PlanOutcome {
        status: SearchStatus::Success,
        expanded_nodes: sr.expanded_nodes,
        j_search,
        j_opt,
        has_aerial,
        trajectory: Some(out.trajectory),
        search_ms,
        opt_ms,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanningTrial {
    pub trial: usize,
    pub seed: u64,
    pub success: bool,
    pub expanded_nodes: usize,
    pub j_search: f64,
    pub j_opt: f64,
    pub improved: bool,
    pub duration: f64,
    pub has_aerial: bool,
    /// Wall-clock timings; text summary only, never serialized to CSV.
    #[serde(skip)]
    pub search_ms: f64,
    #[serde(skip)]
    pub opt_ms: f64,
}

#[derive(Debug, Clone)]
pub struct PlanningSummary {
    pub trials: usize,
    pub success_rate: f64,
    pub mean_j_search: f64,
    pub mean_j_opt: f64,
    pub max_j_opt: f64,
    pub std_j_opt: f64,
    pub improved_fraction: f64,
    pub mean_search_ms: f64,
    pub mean_opt_ms: f64,
}

#[derive(Debug, Clone)]
pub struct PlanningReport {
    pub trials: Vec<PlanningTrial>,
    pub summary: PlanningSummary,
}

/// Aggregation is a pure function of the per-trial rows, so summaries can be
/// regenerated from archived CSVs.
pub fn summarize_planning(trials: &[PlanningTrial]) -> PlanningSummary {
    let n = trials.len().max(1) as f64;
    let ok: Vec<&PlanningTrial> = trials.iter().filter(|t| t.success).collect();
    let k = ok.len().max(1) as f64;
    let mean_j_search = ok.iter().map(|t| t.j_search).sum::<f64>() / k;
    let mean_j_opt = ok.iter().map(|t| t.j_opt).sum::<f64>() / k;
    let max_j_opt = ok.iter().map(|t| t.j_opt).fold(0.0f64, f64::max);
    let var = ok.iter().map(|t| (t.j_opt - mean_j_opt).powi(2)).sum::<f64>() / k;
    PlanningSummary {
        trials: trials.len(),
        success_rate: ok.len() as f64 / n,
        mean_j_search,
        mean_j_opt,
        max_j_opt,
        std_j_opt: var.sqrt(),
        improved_fraction: if ok.is_empty() {
            0.0
        } else {
            ok.iter().filter(|t| t.improved).count() as f64 / k
        },
        mean_search_ms: ok.iter().map(|t| t.search_ms).sum::<f64>() / k,
        mean_opt_ms: ok.iter().map(|t| t.opt_ms).sum::<f64>() / k,
    }
}

fn planning_trial(cfg: &Config, master: u64, trial: usize) -> PlanningTrial {
    let seed = trial_seed(master, trial);
    let failed = |expanded| PlanningTrial {
        trial,
        seed,
        success: false,
        expanded_nodes: expanded,
        j_search: f64::NAN,
        j_opt: f64::NAN,
        improved: false,
        duration: f64::NAN,
        has_aerial: false,
        search_ms: 0.0,
        opt_ms: 0.0,
    };
    let opts = EnvOptions { barricade: true, corridor: false };
    let map = match gen_random_env(seed, cfg, &opts) {
        Ok(m) => m,
        Err(_) => return failed(0),
    };
    let start = KinoState::terrestrial(
        cfg.bench.start[0],
        cfg.bench.start[1],
        cfg.map.ground_height,
        0.0,
        0.0,
    );
    let goal = Vector3::new(cfg.bench.goal[0], cfg.bench.goal[1], cfg.bench.goal[2]);
    match plan_route(&map, &start, &goal, cfg) {
        Ok(out) if out.status == SearchStatus::Success && out.trajectory.is_some() => {
            let traj = out.trajectory.as_ref().unwrap();
            PlanningTrial {
                trial,
                seed,
                success: true,
                expanded_nodes: out.expanded_nodes,
                j_search: out.j_search,
                j_opt: out.j_opt,
                improved: out.j_opt < out.j_search,
                duration: traj.duration(),
                has_aerial: out.has_aerial,
                search_ms: out.search_ms,
                opt_ms: out.opt_ms,
            }
        }
        Ok(out) => failed(out.expanded_nodes),
        Err(_) => failed(0),
    }
}

/// Seeded planning benchmark: N random barricade maps, full pipeline per
/// trial, failures counted rather than thrown.
pub fn bench_planning(cfg: &Config, master: u64, trials: usize, parallel: bool) -> PlanningReport {
    let rows: Vec<PlanningTrial> = if parallel {
        use rayon::prelude::*;
        (0..trials)
            .into_par_iter()
            .map(|i| planning_trial(cfg, master, i))
            .collect()
    } else {
        (0..trials).map(|i| planning_trial(cfg, master, i)).collect()
    };
    let summary = summarize_planning(&rows);
    PlanningReport { trials: rows, summary }
}

pub fn write_planning_csv(trials: &[PlanningTrial], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "trial,seed,success,expanded_nodes,j_search,j_opt,improved,duration,has_aerial")?;
    for t in trials {
        writeln!(
            f,
            "{},{},{},{},{},{},{},{},{}",
            t.trial,
            t.seed,
            t.success,
            t.expanded_nodes,
            t.j_search,
            t.j_opt,
            t.improved,
            t.duration,
            t.has_aerial
        )?;
    }
    Ok(())
}

pub fn planning_summary_text(report: &PlanningReport) -> String {
    let s = &report.summary;
    format!(
        "planning benchmark ({} trials)\n\
         success rate:        {:.1}%\n\
         mean comp time:      {:.2} ms (search {:.2} + refine {:.2})\n\
         accel integral:      mean {:.2}, max {:.2}, std {:.2} (refined)\n\
         search-only mean:    {:.2}\n\
         refined < search:    {:.1}% of successful trials\n",
        s.trials,
        100.0 * s.success_rate,
        s.mean_search_ms + s.mean_opt_ms,
        s.mean_search_ms,
        s.mean_opt_ms,
        s.mean_j_opt,
        s.max_j_opt,
        s.std_j_opt,
        s.mean_j_search,
        100.0 * s.improved_fraction,
    )
}

/// Pass/fail gates evaluated on a planning report; any failure maps to CLI
/// exit code 2.
pub fn planning_assertions(report: &PlanningReport) -> Vec<(String, bool)> {
    let s = &report.summary;
    vec![
        ("success rate >= 90%".into(), s.success_rate >= 0.9),
        (
            "refined accel integral below search-only on >= 95% of successful trials".into(),
            s.improved_fraction >= 0.95,
        ),
        (
            "mean computation time <= 200 ms".into(),
            s.mean_search_ms + s.mean_opt_ms <= 200.0,
        ),
    ]
}

/// Bernoulli lemniscate reference at constant ground speed: the curve is
/// arc-length resampled and fitted to a B-spline, labeled terrestrial.
pub fn lemniscate(scale: f64, v_limit: f64, knot_dt: f64) -> Result<BSplineTrajectory> {
    if !(scale > 0.0) || !(v_limit > 0.0) || !(knot_dt > 0.0) {
        return Err(Error::InvalidInput("lemniscate needs positive scale/speed/knot".into()));
    }
    let pos = |s: f64| -> Vector3<f64> {
        let (sn, cs) = s.sin_cos();
        let d = 1.0 + sn * sn;
        Vector3::new(scale * cs / d, scale * sn * cs / d, 0.0)
    };
    // Cumulative arc length over one period.
    let n = 8000usize;
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    let mut prev = pos(0.0);
    let mut total = 0.0;
    for i in 1..=n {
        let s = std::f64::consts::TAU * i as f64 / n as f64;
        let p = pos(s);
        total += (p - prev).norm();
        cum.push(total);
        prev = p;
    }
    let period = total / v_limit;
    let m = ((period / (0.5 * knot_dt)).ceil() as usize).max(8);
    let dt_s = period / m as f64;
    let mut samples = Vec::with_capacity(m + 1);
    let mut idx = 0usize;
    for k in 0..=m {
        let target = (v_limit * k as f64 * dt_s).min(total);
        while idx + 1 < cum.len() && cum[idx + 1] < target {
            idx += 1;
        }
        let (l0, l1) = (cum[idx], cum[(idx + 1).min(n)]);
        let frac = if l1 > l0 { (target - l0) / (l1 - l0) } else { 0.0 };
        let s = std::f64::consts::TAU * (idx as f64 + frac) / n as f64;
        samples.push((k as f64 * dt_s, pos(s)));
    }
    let mut traj = fit_bspline(&samples, 3, knot_dt)?;
    classify_points(&mut traj, 0.0, 1e-9);
    Ok(traj)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrackingCell {
    pub velocity: f64,
    pub variant: String,
    pub t_n: f64,
    pub e_a: f64,
    pub e_m: f64,
    pub energy_proxy: f64,
    pub status: EpisodeStatus,
}

/// Gain presets for the two fixed-thrust baselines. They share the assigned
/// constant thrust and differ only in translational gains: "steady" keeps
/// the adaptive controller's gains, "agile" trades damping for stiffness.
fn baseline_gains(base: &GainsConfig, agile: bool) -> GainsConfig {
    let mut g = base.clone();
    if agile {
        g.k_v *= 1.5;
        g.k_p *= 0.6;
    }
    g
}

fn tracking_episode(
    cfg: &Config,
    traj: &BSplineTrajectory,
    fixed_thrust: Option<f64>,
    gains: GainsConfig,
) -> Result<(Trace, Metrics)> {
    let episode = EpisodeConfig::from_config(cfg);
    let control_dt = cfg.plant.dt * cfg.plant.control_substeps as f64;
    let mut controller = Controller::new(gains, cfg.map.ground_height, control_dt, Mode::Terrestrial);
    controller.fixed_thrust = fixed_thrust;
    run_episode(traj, &mut controller, &episode)
}

/// Lemniscate tracking at each configured velocity: adaptive thrust first,
/// then the two fixed-thrust baselines pinned at the adaptive run's mean
/// normalized thrust.
pub fn bench_tracking(cfg: &Config) -> Result<Vec<TrackingCell>> {
    let knot_dt = cfg.trajopt.knot_interval * cfg.search.tau;
    let mut cells = Vec::new();
    for &v in &cfg.bench.tracking_velocities {
        let traj = lemniscate(cfg.bench.lemniscate_scale, v, knot_dt)?;
        let (_, adaptive) = tracking_episode(cfg, &traj, None, cfg.gains.clone())?;
        let t_n = adaptive.t_n;
        cells.push(TrackingCell {
            velocity: v,
            variant: "adaptive".into(),
            t_n,
            e_a: adaptive.e_a,
            e_m: adaptive.e_m,
            energy_proxy: adaptive.energy_proxy,
            status: adaptive.status,
        });
        for (name, agile) in [("fixed-steady", false), ("fixed-agile", true)] {
            let gains = baseline_gains(&cfg.gains, agile);
            let (_, m) = tracking_episode(cfg, &traj, Some(t_n), gains)?;
            cells.push(TrackingCell {
                velocity: v,
                variant: name.into(),
                t_n: m.t_n,
                e_a: m.e_a,
                e_m: m.e_m,
                energy_proxy: m.energy_proxy,
                status: m.status,
            });
        }
    }
    Ok(cells)
}

pub fn write_tracking_csv(cells: &[TrackingCell], path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "velocity,variant,t_n,e_a,e_m,energy_proxy,status")?;
    for c in cells {
        writeln!(
            f,
            "{},{},{},{},{},{},{:?}",
            c.velocity, c.variant, c.t_n, c.e_a, c.e_m, c.energy_proxy, c.status
        )?;
    }
    Ok(())
}

pub fn tracking_summary_text(cells: &[TrackingCell]) -> String {
    let mut out = String::from("lemniscate tracking benchmark\n");
    out.push_str(&format!(
        "{:>8} {:>14} {:>8} {:>9} {:>9}\n",
        "v (m/s)", "variant", "T_n", "E_a (m)", "E_m (m)"
    ));
    for c in cells {
        out.push_str(&format!(
            "{:>8.2} {:>14} {:>8.4} {:>9.4} {:>9.4}\n",
            c.velocity, c.variant, c.t_n, c.e_a, c.e_m
        ));
    }
    out
}

pub fn tracking_assertions(cells: &[TrackingCell]) -> Vec<(String, bool)> {
    let mut out = Vec::new();
    let velocities: Vec<f64> = {
        let mut v: Vec<f64> = cells.iter().map(|c| c.velocity).collect();
        v.dedup();
        v
    };
    for v in velocities {
        let find = |name: &str| cells.iter().find(|c| c.velocity == v && c.variant == name);
        let (Some(a), Some(s), Some(g)) = (find("adaptive"), find("fixed-steady"), find("fixed-agile"))
        else {
            out.push((format!("all variants present at {v} m/s"), false));
            continue;
        };
        out.push((
            format!("adaptive E_a and E_m lowest at {v} m/s"),
            a.e_a < s.e_a && a.e_a < g.e_a && a.e_m < s.e_m && a.e_m < g.e_m,
        ));
        out.push((
            format!("T_n matched across variants at {v} m/s"),
            (a.t_n - s.t_n).abs() <= 1e-3 && (a.t_n - g.t_n).abs() <= 1e-3,
        ));
        out.push((
            format!("all episodes completed at {v} m/s"),
            [a, s, g].iter().all(|c| c.status == EpisodeStatus::Completed),
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeRunReport {
    pub mean_thrust: f64,
    pub energy_proxy: f64,
    pub duration: f64,
    pub e_m: f64,
    pub status: EpisodeStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeReport {
    pub terrestrial: ModeRunReport,
    pub aerial: ModeRunReport,
    /// terrestrial mean thrust / aerial mean thrust.
    pub thrust_ratio: f64,
    /// aerial energy proxy / terrestrial energy proxy.
    pub energy_ratio: f64,
}

fn mode_run(m: &Metrics) -> ModeRunReport {
    ModeRunReport {
        mean_thrust: m.t_n,
        energy_proxy: m.energy_proxy,
        duration: m.duration,
        e_m: m.e_m,
        status: m.status,
    }
}

/// Same route rolled and flown at the configured velocity limit: plan a
/// ground route and an aerial-only route on the same corridor map, track
/// both, and compare thrust and the energy proxy.
pub fn bench_fly_vs_roll(cfg: &Config, seed: u64) -> Result<ModeReport> {
    let mut cfg_slow = cfg.clone();
    cfg_slow.search.v_max = cfg.bench.mode_velocity_limit;
    // The input lattice uses +/-a_max; cap it so one primitive from rest
    // stays within the reduced velocity limit.
    cfg_slow.search.a_max = cfg.search.a_max.min(cfg_slow.search.v_max / cfg.search.tau);
    let opts = EnvOptions { barricade: false, corridor: true };
    let map = gen_random_env(seed, &cfg_slow, &opts)?;

    // Ground route.
    let start_t = KinoState::terrestrial(
        cfg.bench.start[0],
        cfg.bench.start[1],
        cfg.map.ground_height,
        0.0,
        0.0,
    );
    let goal_t = Vector3::new(cfg.bench.goal[0], cfg.bench.goal[1], cfg.map.ground_height);
    let ground = plan_route(&map, &start_t, &goal_t, &cfg_slow)?;
    let Some(ground_traj) = ground.trajectory else {
        return Err(Error::Planning("ground route not plannable".into()));
    };

    // Same route flown: terrestrial lattice disabled, cruise altitude 1 m.
    let mut cfg_air = cfg_slow.clone();
    cfg_air.search.allow_terrestrial = false;
    let cruise = cfg.map.ground_height + 1.0;
    let start_a = KinoState::aerial(
        Vector3::new(cfg.bench.start[0], cfg.bench.start[1], cruise),
        Vector3::zeros(),
    );
    let goal_a = Vector3::new(cfg.bench.goal[0], cfg.bench.goal[1], cruise);
    let air = plan_route(&map, &start_a, &goal_a, &cfg_air)?;
    let Some(air_traj) = air.trajectory else {
        return Err(Error::Planning("aerial route not plannable".into()));
    };

    let episode = EpisodeConfig::from_config(cfg);
    let control_dt = cfg.plant.dt * cfg.plant.control_substeps as f64;
    let mut ctrl_t =
        Controller::new(cfg.gains.clone(), cfg.map.ground_height, control_dt, Mode::Terrestrial);
    let (_, m_t) = run_episode(&ground_traj, &mut ctrl_t, &episode)?;
    let mut ctrl_a =
        Controller::new(cfg.gains.clone(), cfg.map.ground_height, control_dt, Mode::Aerial);
    let (_, m_a) = run_episode(&air_traj, &mut ctrl_a, &episode)?;

    Ok(ModeReport {
        thrust_ratio: m_t.t_n / m_a.t_n,
        energy_ratio: m_a.energy_proxy / m_t.energy_proxy,
        terrestrial: mode_run(&m_t),
        aerial: mode_run(&m_a),
    })
}

pub fn write_mode_csv(report: &ModeReport, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "mode,mean_thrust,energy_proxy,duration,e_m,status")?;
    for (name, r) in [("terrestrial", &report.terrestrial), ("aerial", &report.aerial)] {
        writeln!(
            f,
            "{},{},{},{},{},{:?}",
            name, r.mean_thrust, r.energy_proxy, r.duration, r.e_m, r.status
        )?;
    }
    Ok(())
}

pub fn mode_summary_text(report: &ModeReport) -> String {
    format!(
        "fly-vs-roll comparison (same route, v = limit)\n\
         terrestrial: mean |F| = {:.4}, energy proxy = {:.4}, duration = {:.1} s\n\
         aerial:      mean |F| = {:.4}, energy proxy = {:.4}, duration = {:.1} s\n\
         thrust ratio (roll/fly):  {:.3}\n\
         energy ratio (fly/roll):  {:.2}\n",
        report.terrestrial.mean_thrust,
        report.terrestrial.energy_proxy,
        report.terrestrial.duration,
        report.aerial.mean_thrust,
        report.aerial.energy_proxy,
        report.aerial.duration,
        report.thrust_ratio,
        report.energy_ratio,
    )
}

pub fn mode_assertions(report: &ModeReport) -> Vec<(String, bool)> {
    vec![
        ("thrust ratio terrestrial:aerial <= 0.5".into(), report.thrust_ratio <= 0.5),
        ("energy proxy ratio >= 3 in favor of terrestrial".into(), report.energy_ratio >= 3.0),
        (
            "both episodes completed".into(),
            report.terrestrial.status == EpisodeStatus::Completed
                && report.aerial.status == EpisodeStatus::Completed,
        ),
    ]
}

// Re-exported so the CLI's `track` subcommand shares the episode plumbing.
pub fn run_tracking(
    cfg: &Config,
    traj: &BSplineTrajectory,
    initial_mode: Mode,
) -> Result<(Trace, Metrics)> {
    let episode = EpisodeConfig::from_config(cfg);
    let control_dt = cfg.plant.dt * cfg.plant.control_substeps as f64;
    let mut controller =
        Controller::new(cfg.gains.clone(), cfg.map.ground_height, control_dt, initial_mode);
    let (trace, metrics) = run_episode(traj, &mut controller, &episode)?;
    debug_assert_eq!(metrics.e_a, metrics_from_trace(&trace, metrics.status).e_a);
    Ok((trace, metrics))
}
