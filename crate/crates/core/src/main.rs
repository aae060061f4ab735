//! Command-line front end: map generation, single plan/track runs, and the
//! three benchmark suites. Exit codes: 0 success, 2 benchmark assertion
//! failure, 1 error.

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;
use std::path::PathBuf;
use std::process::ExitCode;
use tie_nav::bench::{
    self, bench_fly_vs_roll, bench_planning, bench_tracking, gen_random_env, plan_route,
    EnvOptions,
};
use tie_nav::config::Config;
use tie_nav::envmap::{compute_esdf, MapFile};
use tie_nav::search::{KinoState, SearchStatus};
use tie_nav::trajopt::BSplineTrajectory;
use tie_nav::Mode;

#[derive(Parser)]
#[command(name = "tie-nav", about = "terrestrial-aerial navigation stack", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Configuration file (JSON or TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master RNG seed (overrides the config value).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; created if missing.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random obstacle map (JSON) and its ESDF dump.
    GenMap {
        #[command(flatten)]
        common: Common,
        /// Add the start-goal barricade wall.
        #[arg(long)]
        barricade: bool,
        /// Keep a clear ground corridor between start and goal.
        #[arg(long)]
        corridor: bool,
    },
    /// Plan start to goal on a map file and write the trajectory JSON.
    Plan {
        #[command(flatten)]
        common: Common,
        /// Map file produced by gen-map.
        #[arg(long)]
        map: PathBuf,
    },
    /// Track a trajectory file; writes the trace CSV and metrics JSON.
    Track {
        #[command(flatten)]
        common: Common,
        /// Trajectory file produced by plan.
        #[arg(long)]
        traj: PathBuf,
    },
    /// Planning benchmark over seeded random maps.
    BenchPlan {
        #[command(flatten)]
        common: Common,
        /// Number of trials (overrides the config value).
        #[arg(long)]
        trials: Option<usize>,
        /// Run trials on a thread pool.
        #[arg(long)]
        parallel: bool,
    },
    /// Lemniscate tracking benchmark (adaptive vs fixed-thrust baselines).
    BenchTrack {
        #[command(flatten)]
        common: Common,
    },
    /// Fly-vs-roll thrust and energy comparison on one route.
    BenchMode {
        #[command(flatten)]
        common: Common,
    },
}

fn load_config(common: &Common) -> Result<Config, tie_nav::Error> {
    match &common.config {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn seed_of(common: &Common, cfg: &Config) -> u64 {
    common.seed.unwrap_or(cfg.bench.seed)
}

fn report_assertions(name: &str, checks: &[(String, bool)]) -> bool {
    let mut all_ok = true;
    for (label, ok) in checks {
        println!("[{}] {}: {}", name, label, if *ok { "pass" } else { "FAIL" });
        all_ok &= ok;
    }
    all_ok
}

fn run(cli: Cli) -> Result<bool, tie_nav::Error> {
    match cli.command {
        Command::GenMap { common, barricade, corridor } => {
            let cfg = load_config(&common)?;
            let seed = seed_of(&common, &cfg);
            std::fs::create_dir_all(&common.out_dir)?;
            let opts = EnvOptions { barricade, corridor };
            let map = gen_random_env(seed, &cfg, &opts)?;
            let map_path = common.out_dir.join("map.json");
            map.save(&map_path)?;
            let esdf = compute_esdf(&map.to_grid()?);
            esdf.write_binary(
                &common.out_dir.join("esdf.bin"),
                &common.out_dir.join("esdf.json"),
            )?;
            println!(
                "wrote {} ({} boxes, {} cylinders) and ESDF dump",
                map_path.display(),
                map.obstacles.boxes.len(),
                map.obstacles.cylinders.len()
            );
            Ok(true)
        }
        Command::Plan { common, map } => {
            let cfg = load_config(&common)?;
            std::fs::create_dir_all(&common.out_dir)?;
            let map = MapFile::load(&map)?;
            let start = KinoState::terrestrial(
                cfg.bench.start[0],
                cfg.bench.start[1],
                map.ground_height,
                0.0,
                0.0,
            );
            let goal = Vector3::new(cfg.bench.goal[0], cfg.bench.goal[1], cfg.bench.goal[2]);
            let out = plan_route(&map, &start, &goal, &cfg)?;
            if out.status != SearchStatus::Success {
                return Err(tie_nav::Error::Planning(format!(
                    "search failed: {:?} after {} expansions",
                    out.status, out.expanded_nodes
                )));
            }
            let traj = out.trajectory.expect("successful plan carries a trajectory");
            let traj_path = common.out_dir.join("trajectory.json");
            traj.save(&traj_path)?;
            println!(
                "plan: {:.1} s span, {} control points, accel integral {:.2} (search-only {:.2}), aerial segment: {}",
                traj.duration(),
                traj.control_points.len(),
                out.j_opt,
                out.j_search,
                out.has_aerial
            );
            println!("wrote {}", traj_path.display());
            Ok(true)
        }
        Command::Track { common, traj } => {
            let cfg = load_config(&common)?;
            std::fs::create_dir_all(&common.out_dir)?;
            let traj = BSplineTrajectory::load(&traj)?;
            let initial_mode = traj.labels.first().copied().unwrap_or(Mode::Aerial);
            let (trace, metrics) = bench::run_tracking(&cfg, &traj, initial_mode)?;
            let trace_path = common.out_dir.join("trace.csv");
            trace.write_csv(&trace_path)?;
            let metrics_path = common.out_dir.join("metrics.json");
            std::fs::write(&metrics_path, serde_json::to_string_pretty(&metrics)?)?;
            println!(
                "track: status {:?}, E_a = {:.4} m, E_m = {:.4} m, T_n = {:.4}",
                metrics.status, metrics.e_a, metrics.e_m, metrics.t_n
            );
            println!("wrote {} and {}", trace_path.display(), metrics_path.display());
            Ok(true)
        }
        Command::BenchPlan { common, trials, parallel } => {
            let cfg = load_config(&common)?;
            let seed = seed_of(&common, &cfg);
            let trials = trials.unwrap_or(cfg.bench.trials);
            let parallel = parallel || cfg.bench.parallel;
            std::fs::create_dir_all(&common.out_dir)?;
            let report = bench_planning(&cfg, seed, trials, parallel);
            bench::write_planning_csv(&report.trials, &common.out_dir.join("bench_plan.csv"))?;
            let summary = bench::planning_summary_text(&report);
            std::fs::write(common.out_dir.join("bench_plan.txt"), &summary)?;
            print!("{summary}");
            Ok(report_assertions("bench-plan", &bench::planning_assertions(&report)))
        }
        Command::BenchTrack { common } => {
            let cfg = load_config(&common)?;
            std::fs::create_dir_all(&common.out_dir)?;
            let cells = bench_tracking(&cfg)?;
            bench::write_tracking_csv(&cells, &common.out_dir.join("bench_track.csv"))?;
            let summary = bench::tracking_summary_text(&cells);
            std::fs::write(common.out_dir.join("bench_track.txt"), &summary)?;
            print!("{summary}");
            Ok(report_assertions("bench-track", &bench::tracking_assertions(&cells)))
        }
        Command::BenchMode { common } => {
            let cfg = load_config(&common)?;
            let seed = seed_of(&common, &cfg);
            std::fs::create_dir_all(&common.out_dir)?;
            let report = bench_fly_vs_roll(&cfg, seed)?;
            bench::write_mode_csv(&report, &common.out_dir.join("bench_mode.csv"))?;
            let summary = bench::mode_summary_text(&report);
            std::fs::write(common.out_dir.join("bench_mode.txt"), &summary)?;
            print!("{summary}");
            Ok(report_assertions("bench-mode", &bench::mode_assertions(&report)))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
