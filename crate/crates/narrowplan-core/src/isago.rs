//! Incremental planner: windowed factor ranking, sub-trajectory slicing, and
//! the penalty loop that mixes accelerated and stochastic descent.
//!
//! The driver scores every waypoint by the objective of its three-waypoint
//! window, selects outliers beyond `c_eta` standard deviations, pads each
//! maximal run of selected waypoints with one fixed neighbor, and
//! re-optimizes the resulting sub-trajectories until no waypoint stands out.
//! Whole-trajectory modes reuse the same penalty loop over a single slice.


use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agd::{self, AgdConfig, AgdStatus};
use crate::environment::Scene;
use crate::gp::{GpModel, Trajectory, UpsampleSpec};
use crate::kinematics::ArmModel;
use crate::math::sqrt;
use crate::objective::{config_collision, ObjectiveContext};
use crate::stoma::{self, StomaConfig, StomaStatus};
use crate::{Error, Result};

/// Whole-planner configuration; nested engine configs share the obstacle
/// tolerance and stuck angle.
#[derive(Debug, Clone)]
pub struct IsagoConfig {
    /// Initial smoothness penalty.
    pub rho0: f64,
    /// Multiplier (< 1) applied to the penalty each unsatisfied round.
    pub kappa_rho: f64,
    /// Factor-filter width in standard deviations.
    pub c_eta: f64,
    /// Obstacle-cost tolerance deciding success and penalty-loop exit.
    pub obs_tol: f64,
    /// Outer re-selection rounds.
    pub max_outer_rounds: usize,
    /// Penalty rounds per sub-trajectory visit.
    pub max_penalty_rounds: usize,
    pub agd: AgdConfig,
    pub stoma: StomaConfig,
    /// Optional wall-clock budget; exceeded runs finish with `Timeout`.
    /// Ignored on `no_std` builds, which cannot read a clock.
    pub time_budget_s: Option<f64>,
}

impl Default for IsagoConfig {
    fn default() -> Self {
        Self {
            rho0: 1.25e-2,
            kappa_rho: 0.4,
            c_eta: 2.0,
            obs_tol: 1e-4,
            max_outer_rounds: 10,
            max_penalty_rounds: 5,
            agd: AgdConfig::default(),
            stoma: StomaConfig::default(),
            time_budget_s: None,
        }
    }
}

/// Planner variants exposed by the benchmark surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMode {
    /// Incremental: factor-selected sub-trajectories, mixed engines.
    Isago,
    /// Whole trajectory as one slice, mixed engines.
    Sago,
    /// Whole trajectory, accelerated descent only.
    AgdOnly,
    /// Whole trajectory, stochastic descent only.
    StomaOnly,
}

impl PlanMode {
    pub fn name(&self) -> &'static str {
        match self {
            PlanMode::Isago => "isago",
            PlanMode::Sago => "sago",
            PlanMode::AgdOnly => "agd-only",
            PlanMode::StomaOnly => "stoma-only",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanStatus {
    Success,
    Failure,
    Timeout,
}

/// One planning problem: world, boundary configurations, discretization.
#[derive(Debug, Clone)]
pub struct PlanProblem {
    pub arm: ArmModel,
    pub scene: Scene,
    pub start: Vec<f64>,
    pub goal: Vec<f64>,
    pub n_support: usize,
    pub total_time: f64,
    pub qc: f64,
    /// Per-interval interpolation count of the optimizer spec.
    pub n_ip: usize,
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub trajectory: Trajectory,
    pub status: PlanStatus,
    /// Obstacle cost under the doubled-density verification spec.
    pub final_obs_cost: f64,
    /// Wall time in seconds (0 on `no_std` builds).
    pub wall_time_s: f64,
    /// Deterministic stuck verdicts observed in penalty loops.
    pub stuck_events: usize,
    /// Restart events of both engines.
    pub restarts: usize,
    pub penalty_rounds: usize,
    pub outer_rounds: usize,
    /// Objective value at every inner optimizer iteration, in execution
    /// order; bit-identical for identical (problem, config, seed, mode).
    pub cost_trace: Vec<f64>,
}

/// Objective of every waypoint's `{t-1, t, t+1}` window, uniform weights.
#[derive(Debug, Clone)]
pub struct BtFactors {
    pub values: Vec<f64>,
}

impl BtFactors {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Population standard deviation.
    pub fn std_dev(&self) -> f64 {
        let mu = self.mean();
        sqrt(self.values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>()
            / self.values.len() as f64)
    }
}

/// A contiguous sub-trajectory: support states strictly between `head` and
/// `tail` (global state indices) are free, the ends are fixed pads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubProblem {
    pub head: usize,
    pub tail: usize,
}

impl SubProblem {
    /// Support timestamps covered by this slice, pads included where they
    /// are support states.
    pub fn timestamps(&self, n_support: usize) -> Vec<usize> {
        (self.head.max(1)..=self.tail.min(n_support)).collect()
    }

    /// Free support indices.
    pub fn free_range(&self) -> core::ops::RangeInclusive<usize> {
        (self.head + 1)..=(self.tail - 1)
    }
}

/// Evaluates all N windowed factors on the current trajectory.
pub fn bt_factors(ctx: &ObjectiveContext, traj: &Trajectory, rho: f64) -> Result<BtFactors> {
    let n = traj.n_support();
    let n_ip = ctx.default_spec.counts[0];
    let values = (1..=n)
        .map(|t| window_cost(ctx, traj, rho, t, n_ip))
        .collect::<Result<Vec<f64>>>()?;
    Ok(BtFactors { values })
}

fn window_cost(
    ctx: &ObjectiveContext,
    traj: &Trajectory,
    rho: f64,
    t: usize,
    n_ip: usize,
) -> Result<f64> {
    let (sub_ctx, sub_traj) = extract_subproblem(
        ctx,
        traj,
        &SubProblem { head: t - 1, tail: t + 1 },
        n_ip,
    );
    sub_ctx.total_cost(&sub_traj, rho, &sub_ctx.default_spec)
}

/// Waypoints whose factor deviates from the mean by strictly more than
/// `c_eta` standard deviations; ascending timestamps `1..=N`.
pub fn select_significant(factors: &BtFactors, c_eta: f64) -> Vec<usize> {
    let mu = factors.mean();
    let dev = factors.std_dev();
    factors
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| (**v - mu).abs() > c_eta * dev)
        .map(|(i, _)| i + 1)
        .collect()
}

/// Groups selected timestamps into maximal adjacent runs, pads each run with
/// one fixed neighbor per side (global boundaries at the ends), and merges
/// slices whose pads touch.
pub fn slice_subtrajectories(selected: &[usize], n_support: usize) -> Vec<SubProblem> {
    let mut slices: Vec<SubProblem> = Vec::new();
    let mut i = 0;
    while i < selected.len() {
        let mut j = i;
        while j + 1 < selected.len() && selected[j + 1] == selected[j] + 1 {
            j += 1;
        }
        let head = selected[i] - 1;
        let tail = (selected[j] + 1).min(n_support + 1);
        match slices.last_mut() {
            Some(prev) if head <= prev.tail => prev.tail = tail,
            _ => slices.push(SubProblem { head, tail }),
        }
        i = j + 1;
    }
    slices
}

/// Materializes the slice: a sub-trajectory whose boundary is the current
/// pad states, and a context whose prior is the matching window of the
/// global mean.
pub fn extract_subproblem(
    ctx: &ObjectiveContext,
    traj: &Trajectory,
    sub: &SubProblem,
    n_ip: usize,
) -> (ObjectiveContext, Trajectory) {
    let free: Vec<usize> = sub.free_range().collect();
    let sub_traj = Trajectory {
        start: traj.state(sub.head).clone(),
        goal: traj.state(sub.tail).clone(),
        support: free.iter().map(|&t| traj.state(t).clone()).collect(),
        dt: traj.dt,
    };
    let mean = &ctx.gp.mean;
    let sub_mean = Trajectory {
        start: mean.state(sub.head).clone(),
        goal: mean.state(sub.tail).clone(),
        support: free.iter().map(|&t| mean.state(t).clone()).collect(),
        dt: mean.dt,
    };
    let sub_gp = GpModel::from_mean(sub_mean, ctx.gp.qc);
    let sub_ctx = ObjectiveContext {
        arm: ctx.arm.clone(),
        scene: ctx.scene.clone(),
        gp: sub_gp,
        default_spec: UpsampleSpec::uniform(sub_traj.n_support(), n_ip),
    };
    (sub_ctx, sub_traj)
}

/// Counters accumulated by one `pen_iter` call.
#[derive(Debug, Clone, Default)]
pub struct PenIterStats {
    pub stuck_events: usize,
    pub restarts: usize,
    pub penalty_rounds: usize,
    pub met_obs_tol: bool,
    pub numerical_failure: bool,
    pub cost_trace: Vec<f64>,
}

/// Penalty loop over one sub-trajectory: check the stuck case, route to the
/// stochastic or accelerated engine (or the forced one), and shrink the
/// penalty until the obstacle cost clears the tolerance or the round budget
/// runs out.
pub fn pen_iter<R: Rng + ?Sized>(
    sub_ctx: &ObjectiveContext,
    sub_traj: Trajectory,
    cfg: &IsagoConfig,
    mode: PlanMode,
    rng: &mut R,
) -> Result<(Trajectory, PenIterStats)> {
    let mut traj = sub_traj;
    let mut stats = PenIterStats::default();
    let mut rho = cfg.rho0;
    for _ in 0..cfg.max_penalty_rounds {
        stats.penalty_rounds += 1;
        let stuck = sub_ctx.check_stuck(&traj, cfg.stoma.stuck_phi_tol_deg, cfg.obs_tol)?;
        if stuck.is_stuck {
            stats.stuck_events += 1;
        }
        let use_stoma = match mode {
            PlanMode::AgdOnly => false,
            PlanMode::StomaOnly => true,
            PlanMode::Isago | PlanMode::Sago => stuck.is_stuck,
        };
        if use_stoma {
            let out = stoma::run(sub_ctx, &traj, rho, &cfg.stoma, rng)?;
            stats.restarts += out.trace.rounds.saturating_sub(1);
            stats.cost_trace.extend(out.trace.steps.iter().map(|s| s.cost));
            stats.numerical_failure |= out.status == StomaStatus::NumericalFailure;
            traj = out.trajectory;
        } else {
            let out = agd::run(sub_ctx, &traj, rho, &cfg.agd)?;
            stats.restarts += out.trace.restarts;
            stats.cost_trace.extend(out.trace.iterations.iter().map(|i| i.cost));
            stats.numerical_failure |= out.status == AgdStatus::NumericalFailure;
            traj = out.trajectory;
        }
        if sub_ctx.obs_cost(&traj, &sub_ctx.default_spec)? < cfg.obs_tol {
            stats.met_obs_tol = true;
            break;
        }
        rho *= cfg.kappa_rho;
    }
    Ok((traj, stats))
}

/// Wall clock where one exists; `no_std` builds report zero elapsed time and
/// never trip the budget.
struct Stopwatch {
    #[cfg(feature = "std")]
    t0: std::time::Instant,
}

impl Stopwatch {
    fn start() -> Self {
        Self {
            #[cfg(feature = "std")]
            t0: std::time::Instant::now(),
        }
    }

    fn elapsed_s(&self) -> f64 {
        #[cfg(feature = "std")]
        {
            self.t0.elapsed().as_secs_f64()
        }
        #[cfg(not(feature = "std"))]
        {
            0.0
        }
    }
}

/// Plans from scratch: validates the boundary, initializes with the linear
/// interpolation, runs the selected drive loop, and re-verifies the result
/// with a doubled-density spec. Deterministic for a fixed seed.
pub fn plan(
    problem: &PlanProblem,
    cfg: &IsagoConfig,
    seed: u64,
    mode: PlanMode,
) -> Result<PlanResult> {
    if problem.start.len() != problem.arm.dof() || problem.goal.len() != problem.arm.dof() {
        return Err(Error::DimensionMismatch {
            expected: problem.arm.dof(),
            got: problem.start.len().min(problem.goal.len()),
        });
    }
    for (which, q) in [("start", &problem.start), ("goal", &problem.goal)] {
        if let Some((ball, distance)) = config_collision(&problem.arm, &problem.scene, q)? {
            return Err(Error::BoundaryInCollision { which, ball, distance });
        }
    }

    let gp = GpModel::new(
        &problem.start,
        &problem.goal,
        problem.n_support,
        problem.total_time,
        problem.qc,
    )?;
    let ctx = ObjectiveContext::new(problem.arm.clone(), problem.scene.clone(), gp, problem.n_ip)?;
    let mut traj = ctx.gp.mean.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let watch = Stopwatch::start();
    let mut result = PlanResult {
        trajectory: traj.clone(),
        status: PlanStatus::Failure,
        final_obs_cost: 0.0,
        wall_time_s: 0.0,
        stuck_events: 0,
        restarts: 0,
        penalty_rounds: 0,
        outer_rounds: 0,
        cost_trace: Vec::new(),
    };
    let mut timed_out = false;
    let over_budget = |watch: &Stopwatch, timed_out: &mut bool| -> bool {
        if let Some(budget) = cfg.time_budget_s {
            if watch.elapsed_s() > budget {
                *timed_out = true;
                return true;
            }
        }
        false
    };

    let n = traj.n_support();
    match mode {
        PlanMode::Isago => {
            let mut factors = bt_factors(&ctx, &traj, cfg.rho0)?;
            'outer: for round in 1..=cfg.max_outer_rounds {
                result.outer_rounds = round;
                let selected = select_significant(&factors, cfg.c_eta);
                if selected.is_empty() {
                    break;
                }
                for sub in slice_subtrajectories(&selected, n) {
                    let (sub_ctx, sub_traj) = extract_subproblem(&ctx, &traj, &sub, problem.n_ip);
                    let (optimized, stats) = pen_iter(&sub_ctx, sub_traj, cfg, mode, &mut rng)?;
                    for (i, t) in sub.free_range().enumerate() {
                        traj.support[t - 1] = optimized.support[i].clone();
                    }
                    fold_stats(&mut result, stats);
                    // Refresh only the windows the slice touched.
                    for t in sub.head.max(1)..=sub.tail.min(n) {
                        factors.values[t - 1] =
                            window_cost(&ctx, &traj, cfg.rho0, t, problem.n_ip)?;
                    }
                    if over_budget(&watch, &mut timed_out) {
                        break 'outer;
                    }
                }
            }
        }
        PlanMode::Sago | PlanMode::AgdOnly | PlanMode::StomaOnly => {
            let whole = SubProblem { head: 0, tail: n + 1 };
            for round in 1..=cfg.max_outer_rounds {
                result.outer_rounds = round;
                if ctx.obs_cost(&traj, &ctx.default_spec)? < cfg.obs_tol {
                    break;
                }
                let (sub_ctx, sub_traj) = extract_subproblem(&ctx, &traj, &whole, problem.n_ip);
                let (optimized, stats) = pen_iter(&sub_ctx, sub_traj, cfg, mode, &mut rng)?;
                traj.support = optimized.support.clone();
                let met = stats.met_obs_tol;
                fold_stats(&mut result, stats);
                if met || over_budget(&watch, &mut timed_out) {
                    break;
                }
            }
        }
    }

    // Success is decided against a denser spec than the optimizer used, so
    // collisions hiding between optimizer samples are caught.
    let dense = UpsampleSpec::uniform(n, problem.n_ip * 2);
    result.final_obs_cost = ctx.obs_cost(&traj, &dense)?;
    result.status = if result.final_obs_cost < cfg.obs_tol {
        PlanStatus::Success
    } else if timed_out {
        PlanStatus::Timeout
    } else {
        PlanStatus::Failure
    };
    result.trajectory = traj;
    result.wall_time_s = watch.elapsed_s();
    Ok(result)
}

fn fold_stats(result: &mut PlanResult, stats: PenIterStats) {
    result.stuck_events += stats.stuck_events;
    result.restarts += stats.restarts;
    result.penalty_rounds += stats.penalty_rounds;
    result.cost_trace.extend(stats.cost_trace);
}
