//! Stochastic trajectory optimization with second-moment adaptation: the
//! escape engine for body-obstacle stuck cases.
//!
//! Gradients are randomized on three scales per draw: the penalty weight
//! (`rho_hat >= rho`), the per-interval interpolation counts, and the
//! included-angle tolerance that rejects opposing ball contributions. Steps
//! are scaled per coordinate by bias-corrected exponential-moving-average
//! second moments inside a `delta`-sized trust region. When an inner run
//! stalls, the iterate restarts from the cheapest of the current point and a
//! batch of prior samples conditioned on the fixed boundary.

use alloc::vec::Vec;

use nalgebra::DVector;
use rand::Rng;

use crate::gp::{Trajectory, UpsampleSpec};
use crate::math::sqrt;
use crate::objective::{clamp_to_limits, ObjectiveContext, StuckReport};
use crate::{Error, Result};

/// Tuning for one escape run.
#[derive(Debug, Clone)]
pub struct StomaConfig {
    /// Trust-region scale of the adaptive step.
    pub delta: f64,
    /// EMA decay of the second moments.
    pub gamma: f64,
    /// Restart sample count drawn from the prior.
    pub restart_samples: usize,
    /// Maximum restart rounds.
    pub max_restart_rounds: usize,
    /// Inclusive bounds of the per-iteration inner-budget redraw.
    pub sg_iters_range: (usize, usize),
    /// Step-displacement threshold that triggers a restart.
    pub sg_tol: f64,
    /// Constant included-angle tolerance of the stuck check, degrees.
    pub stuck_phi_tol_deg: f64,
    /// Range of the randomized rejection angle, degrees.
    pub sg_phi_range_deg: (f64, f64),
    /// Upper bound of the randomized per-interval interpolation count.
    pub n_ip_max: usize,
    /// Obstacle-cost gate shared with the stuck check.
    pub obs_tol: f64,
    /// Floor of the uniform penalty-scale draw; keeps `rho_hat <= rho/floor`.
    pub rho_scale_floor: f64,
    /// Regularizer added to the moments before the inverse square root.
    pub moment_eps: f64,
}

impl Default for StomaConfig {
    fn default() -> Self {
        Self {
            delta: 0.40,
            gamma: 0.90,
            restart_samples: 12,
            max_restart_rounds: 5,
            sg_iters_range: (35, 55),
            sg_tol: 6.4e-3,
            stuck_phi_tol_deg: 95.0,
            sg_phi_range_deg: (60.0, 180.0),
            n_ip_max: 8,
            obs_tol: 1e-4,
            rho_scale_floor: 0.05,
            moment_eps: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StomaStatus {
    /// The iterate passed the stuck check and was returned.
    Unstuck,
    /// Every restart round stayed stuck; the best iterate was returned.
    CapReached,
    NumericalFailure,
}

/// Bias-corrected exponential moving average of squared gradients.
#[derive(Debug, Clone)]
pub struct MomentState {
    raw: DVector<f64>,
    k: usize,
    gamma_pow: f64,
}

impl MomentState {
    pub fn new(dim: usize) -> Self {
        Self { raw: DVector::zeros(dim), k: 0, gamma_pow: 1.0 }
    }

    /// Folds one stochastic gradient into the raw EMA.
    pub fn update(&mut self, sg: &DVector<f64>, gamma: f64) {
        debug_assert_eq!(sg.len(), self.raw.len());
        self.raw = &self.raw * gamma + sg.component_mul(sg) * (1.0 - gamma);
        self.k += 1;
        self.gamma_pow *= gamma;
    }

    pub fn step_count(&self) -> usize {
        self.k
    }

    /// Bias-corrected moments `raw / (1 - gamma^k)`; exact squared gradient
    /// at `k = 1`.
    pub fn corrected(&self) -> DVector<f64> {
        debug_assert!(self.k > 0, "moments queried before any update");
        &self.raw / (1.0 - self.gamma_pow)
    }

    /// Per-coordinate step scales `(M + eps)^(-1/2) / (2 delta)`.
    pub fn step_scale(&self, delta: f64, eps: f64) -> DVector<f64> {
        self.corrected().map(|m| 1.0 / (2.0 * delta * sqrt(m + eps)))
    }
}

/// The randomized ingredients behind one stochastic gradient.
#[derive(Debug, Clone)]
pub struct SgDraw {
    pub rho_hat: f64,
    pub phi_tol_deg: f64,
    pub spec: UpsampleSpec,
}

/// Draws one stochastic gradient of the penalized objective at `traj`:
/// `rho_hat * grad_prior + grad_obs` with the penalty scale, interpolation
/// counts, and rejection angle all re-randomized. The stuck verdict is
/// evaluated on the same randomized scan with the constant tolerance.
pub fn sample_sg<R: Rng + ?Sized>(
    ctx: &ObjectiveContext,
    traj: &Trajectory,
    rho: f64,
    cfg: &StomaConfig,
    rng: &mut R,
) -> Result<(DVector<f64>, StuckReport, SgDraw)> {
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument { what: "rho must be positive" });
    }
    let u = rng.random_range(cfg.rho_scale_floor..1.0);
    let rho_hat = rho / u;
    let counts: Vec<usize> =
        (0..=traj.n_support()).map(|_| rng.random_range(0..=cfg.n_ip_max)).collect();
    let spec = UpsampleSpec { counts };
    let phi_tol_deg = rng.random_range(cfg.sg_phi_range_deg.0..cfg.sg_phi_range_deg.1);

    let (scan, matrix) = ctx.scan(traj, &spec, phi_tol_deg, cfg.stuck_phi_tol_deg)?;
    let (_, gp_grad) = ctx.gp.cost_grad(traj)?;
    let grad = gp_grad * rho_hat + matrix.apply_transpose_position(&scan.g_rows);
    let in_collision = scan.cost > cfg.obs_tol;
    let report = StuckReport {
        is_stuck: in_collision && !scan.offending.is_empty(),
        offending: if in_collision { scan.offending } else { Vec::new() },
        max_angle_deg: scan.max_angle_deg,
        obs_cost: scan.cost,
    };
    Ok((grad, report, SgDraw { rho_hat, phi_tol_deg, spec }))
}

/// One adaptive step as recorded in the trace.
#[derive(Debug, Clone)]
pub struct StomaStepRecord {
    pub round: usize,
    pub k: usize,
    /// Objective at the lag iterate after the step.
    pub cost: f64,
    pub alpha: f64,
    pub lambda: f64,
    /// Smallest entry of the per-coordinate step scale.
    pub scale_min: f64,
    pub inner_budget: usize,
    pub step_norm: f64,
}

#[derive(Debug, Clone, Default)]
pub struct StomaTrace {
    pub steps: Vec<StomaStepRecord>,
    pub rounds: usize,
    /// Cost of the point each round restarted from.
    pub round_init_costs: Vec<f64>,
    /// Running minimum of every objective value seen; non-increasing.
    pub best_so_far: Vec<f64>,
}

pub struct StomaOutcome {
    pub trajectory: Trajectory,
    pub status: StomaStatus,
    pub trace: StomaTrace,
}

/// Runs the escape loop from `traj` (normally a stuck iterate). Returns as
/// soon as an iterate passes the stuck check; after the round budget the
/// cheapest iterate seen is returned instead.
pub fn run<R: Rng + ?Sized>(
    ctx: &ObjectiveContext,
    traj: &Trajectory,
    rho: f64,
    cfg: &StomaConfig,
    rng: &mut R,
) -> Result<StomaOutcome> {
    let mut work = traj.clone();
    let spec = ctx.default_spec.clone();
    let mut trace = StomaTrace::default();

    let mut theta = traj.flatten();
    let f_in = ctx.total_cost(traj, rho, &spec)?;
    if !f_in.is_finite() {
        return Ok(StomaOutcome {
            trajectory: traj.clone(),
            status: StomaStatus::NumericalFailure,
            trace,
        });
    }
    let mut best = (theta.clone(), f_in);
    let note_best = |flat: &DVector<f64>, f: f64, best: &mut (DVector<f64>, f64),
                         trace: &mut StomaTrace| {
        if f < best.1 {
            *best = (flat.clone(), f);
        }
        trace.best_so_far.push(best.1);
    };
    note_best(&theta, f_in, &mut best, &mut trace);

    for round in 1..=cfg.max_restart_rounds {
        trace.rounds = round;

        // Reinitialize from the cheapest of the current iterate and a fresh
        // batch of boundary-respecting prior samples.
        let samples =
            ctx.gp.sample_conditioned(&work.start, &work.goal, cfg.restart_samples, rng);
        let mut init = theta.clone();
        let mut init_cost = {
            work.set_from_flat(&theta);
            ctx.total_cost(&work, rho, &spec)?
        };
        for s in &samples {
            let f = ctx.total_cost(s, rho, &spec)?;
            if f < init_cost {
                init_cost = f;
                init = s.flatten();
            }
        }
        trace.round_init_costs.push(init_cost);
        note_best(&init, init_cost, &mut best, &mut trace);

        theta = init;
        let mut theta_ag = theta.clone();
        let mut moments = MomentState::new(theta.len());
        let mut last_step_norm: Option<f64> = None;
        let mut k = 0usize;

        loop {
            k += 1;
            let inner_budget = rng.random_range(cfg.sg_iters_range.0..=cfg.sg_iters_range.1);
            let alpha = 2.0 / (k + 1) as f64;
            let theta_sg = &theta_ag * (1.0 - alpha) + &theta * alpha;
            work.set_from_flat(&theta_sg);
            let (sg, stuck, _) = sample_sg(ctx, &work, rho, cfg, rng)?;
            if !sg.iter().all(|x| x.is_finite()) {
                work.set_from_flat(&best.0);
                return Ok(StomaOutcome {
                    trajectory: work.clone(),
                    status: StomaStatus::NumericalFailure,
                    trace,
                });
            }

            if !stuck.is_stuck {
                // Confirm on the deterministic spec before declaring escape,
                // so the returned point always fails the plain stuck check.
                let confirm = ctx.check_stuck(&work, cfg.stuck_phi_tol_deg, cfg.obs_tol)?;
                if !confirm.is_stuck {
                    return Ok(StomaOutcome {
                        trajectory: work.clone(),
                        status: StomaStatus::Unstuck,
                        trace,
                    });
                }
            }

            if k >= inner_budget || last_step_norm.is_some_and(|s| s <= cfg.sg_tol) {
                // Stalled or out of budget: next round restarts from here.
                theta = theta_sg;
                break;
            }

            moments.update(&sg, cfg.gamma);
            let scale = moments.step_scale(cfg.delta, cfg.moment_eps);
            let scale_min = scale.min();
            let lambda = (1.0 + alpha / 8.0) * scale_min;

            let theta_prev = theta.clone();
            theta -= &sg * lambda;
            clamp_to_limits(&ctx.arm, traj.n_support(), &mut theta);
            theta_ag = &theta_sg - scale.component_mul(&sg);
            clamp_to_limits(&ctx.arm, traj.n_support(), &mut theta_ag);
            let step_norm = (&theta - &theta_prev).norm();
            last_step_norm = Some(step_norm);

            work.set_from_flat(&theta);
            let f = ctx.total_cost(&work, rho, &spec)?;
            if !f.is_finite() {
                work.set_from_flat(&best.0);
                return Ok(StomaOutcome {
                    trajectory: work.clone(),
                    status: StomaStatus::NumericalFailure,
                    trace,
                });
            }
            note_best(&theta, f, &mut best, &mut trace);
            trace.steps.push(StomaStepRecord {
                round,
                k,
                cost: f,
                alpha,
                lambda,
                scale_min,
                inner_budget,
                step_norm,
            });
        }
    }

    work.set_from_flat(&best.0);
    Ok(StomaOutcome { trajectory: work.clone(), status: StomaStatus::CapReached, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn moment_bias_correction_exact_at_first_step() {
        let g = DVector::from_vec(alloc::vec![0.3, -2.0, 0.0]);
        let mut ms = MomentState::new(3);
        ms.update(&g, 0.9);
        let m = ms.corrected();
        for j in 0..3 {
            assert_eq!(m[j], g[j] * g[j]);
        }
    }

    #[test]
    fn moment_fixed_point_under_constant_gradient() {
        let g = DVector::from_vec(alloc::vec![1.5, -0.25]);
        let mut ms = MomentState::new(2);
        for _ in 0..60 {
            ms.update(&g, 0.9);
            let m = ms.corrected();
            for j in 0..2 {
                assert!((m[j] - g[j] * g[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn moment_two_step_hand_value() {
        // gamma = 0.9, g1 = 1, g2 = 2:
        // raw_2 = 0.9*0.1*1 + 0.1*4 = 0.49; corrected = 0.49 / (1 - 0.81).
        let mut ms = MomentState::new(1);
        ms.update(&DVector::from_vec(alloc::vec![1.0]), 0.9);
        ms.update(&DVector::from_vec(alloc::vec![2.0]), 0.9);
        let want = 0.49 / 0.19;
        assert!((ms.corrected()[0] - want).abs() < 1e-12);
    }

    #[test]
    fn larger_moments_shrink_step_scales() {
        let mut ms = MomentState::new(2);
        ms.update(&DVector::from_vec(alloc::vec![0.1, 3.0]), 0.9);
        let scale = ms.step_scale(0.4, 1e-12);
        assert!(scale[0] > scale[1]);
    }

    #[test]
    fn sg_without_obstacles_scales_prior_gradient() {
        let (ctx, traj) = scenarios::quadratic_problem(5);
        let rho = 0.5;
        let (_, gp_grad) = ctx.gp.cost_grad(&traj).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let (sg, report, draw) =
                sample_sg(&ctx, &traj, rho, &StomaConfig::default(), &mut rng).unwrap();
            assert!(draw.rho_hat >= rho, "penalty scale must not shrink");
            assert!(!report.is_stuck);
            let diff = &sg - &gp_grad * draw.rho_hat;
            assert!(diff.norm() < 1e-12);
        }
    }

    #[test]
    fn degenerate_draw_ranges_recover_deterministic_gradient() {
        let trap = scenarios::pinch_trap();
        let rho = 1.25e-2;
        let cfg = StomaConfig {
            sg_phi_range_deg: (180.0 - 1e-9, 180.0),
            n_ip_max: 0,
            rho_scale_floor: 1.0 - 1e-12,
            ..StomaConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (sg, _, draw) = sample_sg(&trap.ctx, &trap.pinched, rho, &cfg, &mut rng).unwrap();
        assert!(draw.spec.counts.iter().all(|&c| c == 0));
        let n = trap.pinched.n_support();
        let (_, gp_grad) = trap.ctx.gp.cost_grad(&trap.pinched).unwrap();
        let want = gp_grad * draw.rho_hat
            + trap.ctx.obs_grad(&trap.pinched, &UpsampleSpec::zeros(n), 180.0).unwrap();
        assert!((&sg - &want).norm() < 1e-9);
    }

    #[test]
    fn unstuck_input_returns_without_steps() {
        let trap = scenarios::pinch_trap();
        let free = trap.ctx.gp.mean.clone();
        // Not a stuck input: collision cost along the straight line is
        // positive, but use the aligned scenario to be sure of the verdict.
        let aligned = scenarios::aligned_push();
        let _ = free;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out =
            run(&aligned.ctx, &aligned.pinched, 1.25e-2, &StomaConfig::default(), &mut rng)
                .unwrap();
        assert_eq!(out.status, StomaStatus::Unstuck);
        assert!(out.trace.steps.is_empty());
    }

    #[test]
    fn round_reinit_picks_cheapest_candidate() {
        let trap = scenarios::pinch_trap();
        let rho = 1.25e-2;
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let out = run(&trap.ctx, &trap.pinched, rho, &StomaConfig::default(), &mut rng).unwrap();
        assert!(!out.trace.round_init_costs.is_empty());
        let f_in = trap.ctx.total_cost(&trap.pinched, rho, &trap.ctx.default_spec).unwrap();
        assert!(out.trace.round_init_costs[0] <= f_in + 1e-12);
    }

    #[test]
    fn best_so_far_is_monotone() {
        let trap = scenarios::pinch_trap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let out =
            run(&trap.ctx, &trap.pinched, 1.25e-2, &StomaConfig::default(), &mut rng).unwrap();
        for w in out.trace.best_so_far.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn identical_seeds_identical_traces() {
        let trap = scenarios::pinch_trap();
        let run_once = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            run(&trap.ctx, &trap.pinched, 1.25e-2, &StomaConfig::default(), &mut rng).unwrap()
        };
        let a = run_once(99);
        let b = run_once(99);
        assert_eq!(a.status, b.status);
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.trace.steps.len(), b.trace.steps.len());
        for (x, y) in a.trace.steps.iter().zip(&b.trace.steps) {
            assert_eq!(x.cost.to_bits(), y.cost.to_bits());
            assert_eq!(x.step_norm.to_bits(), y.step_norm.to_bits());
        }
    }

    #[test]
    fn escape_from_pinch_within_budget() {
        let trap = scenarios::pinch_trap();
        let mut escaped = 0;
        for seed in 0..10u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let out =
                run(&trap.ctx, &trap.pinched, 1.25e-2, &StomaConfig::default(), &mut rng).unwrap();
            if out.status == StomaStatus::Unstuck {
                escaped += 1;
                let confirm = trap.ctx.check_stuck(&out.trajectory, 95.0, 1e-4).unwrap();
                assert!(!confirm.is_stuck);
            }
        }
        assert!(escaped >= 9, "only {escaped}/10 seeds escaped the pinch");
    }
}
