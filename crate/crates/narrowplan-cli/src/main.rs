//! `narrowplan`: plan and benchmark collision-free trajectories for planar
//! arms in narrow workspaces.
//!
//! Exit codes: 0 on success, 1 on usage or I/O errors, 2 when a requested
//! planning run fails or a gradient check exceeds its tolerance.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use narrowplan_cli::{bench, render, scene, tune};
use narrowplan_core::isago::{plan, IsagoConfig, PlanMode, PlanStatus};
use narrowplan_core::verify::gradient_max_rel_error;

#[derive(Parser)]
#[command(name = "narrowplan", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SceneArg {
    /// Scene file (TOML).
    #[arg(long)]
    scene: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Plan one task and write the result record and trajectory dump.
    Plan {
        #[command(flatten)]
        scene: SceneArg,
        /// Task id from the scene file.
        #[arg(long)]
        task: String,
        /// Planner variant: isago, sago, agd-only, stoma-only.
        #[arg(long, default_value = "isago", value_parser = parse_mode)]
        mode: PlanMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also render the planned trajectory.
        #[arg(long)]
        svg: bool,
        /// Wall-clock budget per run in seconds.
        #[arg(long)]
        time_budget: Option<f64>,
    },
    /// Run the seeded benchmark matrix and write records plus summary CSV.
    Bench {
        #[command(flatten)]
        scene: SceneArg,
        /// Comma-separated planner variants.
        #[arg(long, default_value = "isago,sago,agd-only,stoma-only", value_delimiter = ',', value_parser = parse_mode)]
        modes: Vec<PlanMode>,
        /// Repeats per (task, mode); per-task overrides in the file win.
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Base seed of the derivation hash.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV path.
        #[arg(long)]
        out: PathBuf,
        /// Zero the wall-time columns for byte-identical output.
        #[arg(long)]
        fixed_time: bool,
        /// Wall-clock budget per run in seconds.
        #[arg(long)]
        time_budget: Option<f64>,
    },
    /// Check analytic gradients against central finite differences.
    Gradcheck {
        #[command(flatten)]
        scene: SceneArg,
        /// Random trajectories per task.
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-6)]
        h: f64,
        /// Failure threshold on the max relative error.
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
    },
    /// Evaluate a (delta, gamma) tuning grid for the stochastic engine.
    Tune {
        #[command(flatten)]
        scene: SceneArg,
        /// Comma-separated trust-region scales.
        #[arg(long, value_delimiter = ',', default_value = "0.8,0.4,0.08,0.04")]
        delta: Vec<f64>,
        /// Comma-separated moment decays.
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.9,0.99")]
        gamma: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Restrict to these task ids (repeatable); all tasks otherwise.
        #[arg(long)]
        task: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Zero the wall-time columns for byte-identical output.
        #[arg(long)]
        fixed_time: bool,
    },
    /// Render a scene and trajectory as a standalone SVG.
    Render {
        #[command(flatten)]
        scene: SceneArg,
        #[arg(long)]
        task: String,
        /// Trajectory dump from `plan`; the initial trajectory otherwise.
        #[arg(long)]
        traj: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<PlanMode, String> {
    match s {
        "isago" => Ok(PlanMode::Isago),
        "sago" => Ok(PlanMode::Sago),
        "agd-only" => Ok(PlanMode::AgdOnly),
        "stoma-only" => Ok(PlanMode::StomaOnly),
        other => Err(format!("unknown mode '{other}' (isago, sago, agd-only, stoma-only)")),
    }
}

#[derive(Serialize)]
struct PlanRecord<'a> {
    task: &'a str,
    mode: &'a str,
    seed: u64,
    status: &'a str,
    final_obs_cost: f64,
    wall_time_s: f64,
    stuck_events: usize,
    restarts: usize,
    penalty_rounds: usize,
    outer_rounds: usize,
}

fn cmd_plan(
    scene_path: &Path,
    task_id: &str,
    mode: PlanMode,
    seed: u64,
    out_dir: &Path,
    svg: bool,
    time_budget: Option<f64>,
) -> Result<bool> {
    let loaded = scene::load_scene(scene_path)?;
    let task = loaded.task(task_id)?;
    let problem = loaded.problem(task);
    let cfg = IsagoConfig { time_budget_s: time_budget, ..IsagoConfig::default() };
    let result = plan(&problem, &cfg, seed, mode)?;

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let stem = format!("{}_{}_{}", task_id, mode.name(), seed);
    let status = match result.status {
        PlanStatus::Success => "success",
        PlanStatus::Failure => "failure",
        PlanStatus::Timeout => "timeout",
    };
    let record = PlanRecord {
        task: task_id,
        mode: mode.name(),
        seed,
        status,
        final_obs_cost: result.final_obs_cost,
        wall_time_s: result.wall_time_s,
        stuck_events: result.stuck_events,
        restarts: result.restarts,
        penalty_rounds: result.penalty_rounds,
        outer_rounds: result.outer_rounds,
    };
    std::fs::write(out_dir.join(format!("{stem}.toml")), toml::to_string(&record)?)?;
    std::fs::write(
        out_dir.join(format!("{stem}_trajectory.csv")),
        render::trajectory_csv(&result.trajectory),
    )?;
    if svg {
        render::write_svg(
            &out_dir.join(format!("{stem}.svg")),
            &loaded.arm,
            &loaded.scene,
            &result.trajectory,
        )?;
    }
    println!(
        "{task_id} [{}] seed {seed}: {status}, obstacle cost {:.3e}, {:.3}s, {} stuck events, {} restarts",
        mode.name(),
        result.final_obs_cost,
        result.wall_time_s,
        result.stuck_events,
        result.restarts
    );
    Ok(result.status == PlanStatus::Success)
}

fn cmd_gradcheck(scene_path: &Path, trials: usize, seed: u64, h: f64, tol: f64) -> Result<bool> {
    use narrowplan_core::gp::GpModel;
    use narrowplan_core::objective::ObjectiveContext;
    use rand::{Rng, SeedableRng};

    let loaded = scene::load_scene(scene_path)?;
    let mut worst: f64 = 0.0;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    for task in &loaded.tasks {
        let gp = GpModel::new(&task.start, &task.goal, loaded.n_support, loaded.total_time, loaded.qc)?;
        let ctx =
            ObjectiveContext::new(loaded.arm.clone(), loaded.scene.clone(), gp, loaded.n_ip)?;
        for trial in 0..trials {
            let traj = {
                let mut t = ctx.gp.sample(1, &mut rng).pop().unwrap();
                // Shove a couple of waypoints to vary collision depth.
                for s in &mut t.support {
                    for q in &mut s.position {
                        *q += rng.random_range(-0.15..0.15);
                    }
                }
                t
            };
            let err = gradient_max_rel_error(&ctx, &traj, 1.25e-2, h)?;
            if err > worst {
                worst = err;
            }
            if err > tol {
                println!("task {} trial {trial}: max relative error {err:.3e} > {tol:.1e}", task.id);
            }
        }
    }
    println!("gradcheck: {} tasks x {trials} trials, max relative error {worst:.3e} (tol {tol:.1e})", loaded.tasks.len());
    Ok(worst <= tol)
}

fn run() -> Result<bool> {
    // Usage errors exit 1; help and version print normally.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            std::process::exit(1);
        }
        Err(e) => {
            print!("{e}");
            return Ok(true);
        }
    };
    match cli.command {
        Command::Plan { scene, task, mode, seed, out, svg, time_budget } => {
            cmd_plan(&scene.scene, &task, mode, seed, &out, svg, time_budget)
        }
        Command::Bench { scene, modes, repeats, seed, out, fixed_time, time_budget } => {
            if modes.is_empty() {
                bail!("at least one mode is required");
            }
            let loaded = scene::load_scene(&scene.scene)?;
            if loaded.tasks.is_empty() {
                bail!("scene file has no tasks to benchmark");
            }
            let cfg = IsagoConfig { time_budget_s: time_budget, ..IsagoConfig::default() };
            let records = bench::run_matrix(&loaded, &modes, repeats, seed, &cfg)?;
            let csv = bench::to_csv(&records, fixed_time);
            std::fs::write(&out, &csv).with_context(|| format!("cannot write {}", out.display()))?;
            let ok = records.iter().filter(|r| r.success).count();
            println!("bench: {}/{} runs succeeded, records in {}", ok, records.len(), out.display());
            Ok(true)
        }
        Command::Gradcheck { scene, trials, seed, h, tol } => {
            cmd_gradcheck(&scene.scene, trials, seed, h, tol)
        }
        Command::Tune { scene, delta, gamma, repeats, seed, task, out, fixed_time } => {
            let mut loaded = scene::load_scene(&scene.scene)?;
            if !task.is_empty() {
                loaded.tasks.retain(|t| task.contains(&t.id));
                if loaded.tasks.is_empty() {
                    bail!("no tasks left after --task filtering");
                }
            }
            let cells =
                tune::run_grid(&loaded, &delta, &gamma, repeats, seed, &IsagoConfig::default())?;
            std::fs::write(&out, tune::to_csv(&cells, fixed_time))
                .with_context(|| format!("cannot write {}", out.display()))?;
            for c in &cells {
                println!(
                    "delta {:.2} gamma {:.2}: {}/{} succeeded, mean {:.3}s",
                    c.delta, c.gamma, c.successes, c.runs, c.mean_time_s
                );
            }
            Ok(true)
        }
        Command::Render { scene, task, traj, out } => {
            let loaded = scene::load_scene(&scene.scene)?;
            let spec = loaded.task(&task)?;
            let trajectory = match traj {
                Some(path) => {
                    let text = std::fs::read_to_string(&path)
                        .with_context(|| format!("cannot read {}", path.display()))?;
                    render::parse_trajectory_csv(&text, loaded.arm.dof())?
                }
                None => {
                    use narrowplan_core::gp::GpModel;
                    GpModel::new(&spec.start, &spec.goal, loaded.n_support, loaded.total_time, loaded.qc)?
                        .mean
                }
            };
            render::write_svg(&out, &loaded.arm, &loaded.scene, &trajectory)?;
            println!("rendered {} to {}", task, out.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
