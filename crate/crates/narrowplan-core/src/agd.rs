//! Accelerated gradient descent with a trust-region-style restart on the
//! Lipschitz estimate.
//!
//! Three sequences are maintained: the lag iterate `theta`, the middle point
//! `theta_md` where gradients are taken, and the aggressive point `theta_ag`.
//! Step sizes follow `alpha_k = 2/(k+1)`, `beta_k = 1/(2L)`,
//! `lambda_k = k beta_k / 2`. Whenever the descent violates the local
//! Lipschitz model
//! `|F_k - F_{k-1} - <grad_md, dtheta>| <= (L/2) ||dtheta||^2`,
//! the iterate resets to the previous middle point, `L` grows by `kappa_l`,
//! and the inner loop restarts; `L` is never decreased. Each run initializes
//! `L = delta0 * ||grad(theta_0)||`.

use alloc::vec::Vec;

use nalgebra::DVector;

use crate::gp::Trajectory;
use crate::objective::{clamp_to_limits, ObjectiveContext, StuckReport};
use crate::Result;

/// Tuning for one AGD run.
#[derive(Debug, Clone)]
pub struct AgdConfig {
    /// Scale of the initial Lipschitz estimate.
    pub delta0: f64,
    /// Growth factor applied to the Lipschitz estimate on every restart.
    pub kappa_l: f64,
    /// Maximum restart rounds.
    pub max_restarts: usize,
    /// Maximum iterations per round.
    pub max_inner: usize,
    /// Convergence: absolute cost change threshold.
    pub f_tol: f64,
    /// Convergence: iterate displacement threshold.
    pub theta_tol: f64,
    /// Obstacle-cost gate for the stuck check.
    pub obs_tol: f64,
    /// Included-angle tolerance of the stuck check, degrees.
    pub stuck_phi_tol_deg: f64,
}

impl Default for AgdConfig {
    fn default() -> Self {
        Self {
            delta0: 1.0,
            kappa_l: 6.67,
            max_restarts: 10,
            max_inner: 50,
            f_tol: 8e-4,
            theta_tol: 1e-3,
            obs_tol: 1e-4,
            stuck_phi_tol_deg: 95.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgdStatus {
    Converged,
    Stuck,
    IterationCap,
    NumericalFailure,
}

/// One inner iteration as recorded in the trace.
#[derive(Debug, Clone)]
pub struct AgdIterRecord {
    pub round: usize,
    pub k: usize,
    /// Objective at the lag iterate after this iteration's step.
    pub cost: f64,
    pub grad_norm: f64,
    pub lipschitz: f64,
    /// Whether this iteration tripped a restart.
    pub restarted: bool,
}

#[derive(Debug, Clone, Default)]
pub struct AgdTrace {
    pub iterations: Vec<AgdIterRecord>,
    pub grad_evals: usize,
    pub restarts: usize,
    /// Set when the run exited on a stuck verdict.
    pub stuck: Option<StuckReport>,
}

pub struct AgdOutcome {
    pub trajectory: Trajectory,
    pub status: AgdStatus,
    pub trace: AgdTrace,
}

/// Runs AGD on the penalized objective from `traj`. The returned trajectory
/// is the best iterate seen, so its cost never exceeds the input's.
pub fn run(
    ctx: &ObjectiveContext,
    traj: &Trajectory,
    rho: f64,
    cfg: &AgdConfig,
) -> Result<AgdOutcome> {
    let mut work = traj.clone();
    let spec = ctx.default_spec.clone();
    let mut trace = AgdTrace::default();

    let cost_at = |flat: &DVector<f64>, work: &mut Trajectory| -> Result<f64> {
        work.set_from_flat(flat);
        ctx.total_cost(work, rho, &spec)
    };
    let grad_at =
        |flat: &DVector<f64>, work: &mut Trajectory, evals: &mut usize| -> Result<DVector<f64>> {
            work.set_from_flat(flat);
            *evals += 1;
            let (_, g) = ctx.total_cost_grad(work, rho, &spec)?;
            Ok(g)
        };
    let finish = |flat: &DVector<f64>, work: &mut Trajectory| {
        work.set_from_flat(flat);
        work.clone()
    };

    let theta_in = traj.flatten();
    let f_in = cost_at(&theta_in, &mut work)?;
    let g0 = grad_at(&theta_in, &mut work, &mut trace.grad_evals)?;
    if !f_in.is_finite() || !g0.iter().all(|x| x.is_finite()) {
        return Ok(AgdOutcome { trajectory: traj.clone(), status: AgdStatus::NumericalFailure, trace });
    }

    let mut lipschitz = cfg.delta0 * g0.norm();
    if lipschitz <= 0.0 {
        // Zero gradient: already at a stationary point.
        return Ok(AgdOutcome { trajectory: traj.clone(), status: AgdStatus::Converged, trace });
    }

    // Lag iterate, aggressive iterate, and the cached middle-point gradient.
    let mut theta = theta_in.clone();
    let mut theta_ag = theta_in.clone();
    let mut g_md = g0;
    let mut f_prev = f_in;
    // Previous middle point and its gradient, the restart target.
    let mut md_prev = theta_in.clone();
    let mut g_md_prev = g_md.clone();

    let mut best = (theta_in.clone(), f_in);
    let mut theta_md = theta_in.clone();
    // Set when a round ran its full budget: the cached middle-point gradient
    // then belongs to a stale point and the next round re-evaluates it.
    let mut needs_fresh_grad = false;

    'rounds: for round in 1..=cfg.max_restarts {
        if needs_fresh_grad {
            g_md = grad_at(&theta, &mut work, &mut trace.grad_evals)?;
            md_prev = theta.clone();
            g_md_prev = g_md.clone();
            needs_fresh_grad = false;
        }
        for k in 1..=cfg.max_inner {
            let alpha = 2.0 / (k + 1) as f64;
            let beta = 1.0 / (2.0 * lipschitz);
            let lambda = k as f64 * beta / 2.0;

            theta_md = &theta_ag * (1.0 - alpha) + &theta * alpha;
            if k >= 2 {
                g_md = grad_at(&theta_md, &mut work, &mut trace.grad_evals)?;
            }

            let theta_next = {
                let mut t = &theta - &g_md * lambda;
                clamp_to_limits(&ctx.arm, traj.n_support(), &mut t);
                t
            };
            theta_ag = &theta_md - &g_md * beta;
            clamp_to_limits(&ctx.arm, traj.n_support(), &mut theta_ag);

            let f_next = cost_at(&theta_next, &mut work)?;
            let grad_norm = g_md.norm();
            if !f_next.is_finite() || !grad_norm.is_finite() {
                return Ok(AgdOutcome {
                    trajectory: finish(&best.0, &mut work),
                    status: AgdStatus::NumericalFailure,
                    trace,
                });
            }

            let step = &theta_next - &theta;
            let step_norm = step.norm();
            let converged = (f_next - f_prev).abs() < cfg.f_tol && step_norm < cfg.theta_tol;

            work.set_from_flat(&theta_md);
            let stuck = ctx.check_stuck(&work, cfg.stuck_phi_tol_deg, cfg.obs_tol)?;

            // Lipschitz model check between the consecutive lag iterates.
            let model_gap = (f_next - f_prev - g_md.dot(&step)).abs();
            let model_ok = model_gap <= 0.5 * lipschitz * step_norm * step_norm;

            trace.iterations.push(AgdIterRecord {
                round,
                k,
                cost: f_next,
                grad_norm,
                lipschitz,
                restarted: !model_ok && !converged && !stuck.is_stuck,
            });
            if f_next < best.1 {
                best = (theta_next.clone(), f_next);
            }

            if converged || stuck.is_stuck {
                let status = if stuck.is_stuck {
                    trace.stuck = Some(stuck);
                    AgdStatus::Stuck
                } else {
                    AgdStatus::Converged
                };
                let f_md = cost_at(&theta_md, &mut work)?;
                let out = if f_md.is_finite() && f_md < best.1 { &theta_md } else { &best.0 };
                return Ok(AgdOutcome { trajectory: finish(out, &mut work), status, trace });
            }

            if !model_ok {
                // Reset to the previous middle point with a stiffer model.
                theta = md_prev.clone();
                theta_ag = md_prev.clone();
                g_md = g_md_prev.clone();
                lipschitz *= cfg.kappa_l;
                trace.restarts += 1;
                f_prev = cost_at(&theta, &mut work)?;
                md_prev = theta.clone();
                g_md_prev = g_md.clone();
                continue 'rounds;
            }

            md_prev = theta_md.clone();
            g_md_prev = g_md.clone();
            theta = theta_next;
            f_prev = f_next;
        }
        // Full inner budget spent: restart the acceleration schedule from
        // the current lag iterate in the next round.
        theta_ag = theta.clone();
        needs_fresh_grad = true;
    }

    let f_md = cost_at(&theta_md, &mut work)?;
    let out = if f_md.is_finite() && f_md < best.1 { theta_md } else { best.0 };
    Ok(AgdOutcome {
        trajectory: finish(&out, &mut work),
        status: AgdStatus::IterationCap,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    #[test]
    fn alpha_schedule_is_exact() {
        for (k, want) in [(1usize, 1.0), (2, 2.0 / 3.0), (3, 0.5)] {
            assert_eq!(2.0 / (k + 1) as f64, want);
        }
    }

    #[test]
    fn quadratic_converges_to_mean() {
        let (ctx, start) = scenarios::quadratic_problem(42);
        let out = run(&ctx, &start, 1.0, &AgdConfig::default()).unwrap();
        assert_eq!(out.status, AgdStatus::Converged);
        let dev0 = (start.flatten() - ctx.gp.mean.flatten()).norm();
        let dev = (out.trajectory.flatten() - ctx.gp.mean.flatten()).norm();
        assert!(dev < 0.1 * dev0, "distance to optimum {dev} from {dev0}");
        let f_end = ctx.total_cost(&out.trajectory, 1.0, &ctx.default_spec).unwrap();
        let f_start = ctx.total_cost(&start, 1.0, &ctx.default_spec).unwrap();
        assert!(f_end <= f_start);
    }

    #[test]
    fn already_converged_input_returns_immediately() {
        let (ctx, _) = scenarios::quadratic_problem(1);
        let out = run(&ctx, &ctx.gp.mean, 1.0, &AgdConfig::default()).unwrap();
        assert_eq!(out.status, AgdStatus::Converged);
        assert!(out.trace.iterations.len() <= 1);
        assert_eq!(out.trajectory, ctx.gp.mean);
    }

    #[test]
    fn trapped_input_reports_stuck() {
        let trap = scenarios::pinch_trap();
        let out = run(&trap.ctx, &trap.pinched, 1.25e-2, &AgdConfig::default()).unwrap();
        assert_eq!(out.status, AgdStatus::Stuck);
        assert!(out.trace.stuck.is_some());
    }

    #[test]
    fn restarts_grow_lipschitz_geometrically() {
        // A tiny delta0 forces the model check to fail early and often.
        let (ctx, start) = scenarios::quadratic_problem(7);
        let cfg = AgdConfig { delta0: 1e-6, ..AgdConfig::default() };
        let out = run(&ctx, &start, 1.0, &cfg).unwrap();
        assert!(out.trace.restarts > 0, "expected at least one restart");
        assert!(out.trace.restarts <= cfg.max_restarts);
        let mut seen = Vec::new();
        for it in &out.trace.iterations {
            if seen.last() != Some(&it.lipschitz) {
                seen.push(it.lipschitz);
            }
        }
        for w in seen.windows(2) {
            let ratio = w[1] / w[0];
            assert!((ratio - cfg.kappa_l).abs() < 1e-9, "L must grow by kappa_l, got {ratio}");
        }
    }

    #[test]
    fn gradient_evaluations_within_budget() {
        let (ctx, start) = scenarios::quadratic_problem(3);
        let cfg = AgdConfig { delta0: 1e-4, ..AgdConfig::default() };
        let out = run(&ctx, &start, 1.0, &cfg).unwrap();
        assert!(out.trace.grad_evals <= cfg.max_restarts * cfg.max_inner + cfg.max_restarts);
    }

    #[test]
    fn cost_non_increasing_when_model_holds() {
        let (ctx, start) = scenarios::quadratic_problem(9);
        let out = run(&ctx, &start, 1.0, &AgdConfig::default()).unwrap();
        if out.trace.restarts == 0 {
            let costs: Vec<f64> = out.trace.iterations.iter().map(|i| i.cost).collect();
            for w in costs.windows(2).skip(1) {
                assert!(w[1] <= w[0] + 1e-9, "cost rose from {} to {}", w[0], w[1]);
            }
        }
    }
}
