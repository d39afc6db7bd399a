//! Gradient verification against central finite differences.
//!
//! The analytic obstacle gradient treats the arc-length weights as constants
//! of the current iterate, so the finite-difference side differentiates the
//! matching surrogate: weights captured once at the base point, then only
//! the collision-cost factors vary with the perturbed coordinates.

use crate::gp::Trajectory;
use crate::objective::ObjectiveContext;
use crate::Result;

/// Maximum relative disagreement between the analytic gradient of the full
/// objective and a central finite difference with step `h`, normalized by
/// the max-norm of the analytic gradient (floored at 1e-8).
pub fn gradient_max_rel_error(
    ctx: &ObjectiveContext,
    traj: &Trajectory,
    rho: f64,
    h: f64,
) -> Result<f64> {
    let spec = ctx.default_spec.clone();
    let (_, analytic) = ctx.total_cost_grad(traj, rho, &spec)?;
    let weights = ctx.capture_weights(traj, &spec)?;

    let mut work = traj.clone();
    let mut flat = traj.flatten();
    let surrogate = |flat: &nalgebra::DVector<f64>, work: &mut Trajectory| -> Result<f64> {
        work.set_from_flat(flat);
        Ok(rho * ctx.gp.cost(work)? + ctx.obs_cost_frozen(work, &spec, &weights)?)
    };

    let scale = analytic.amax().max(1e-8);
    let mut worst: f64 = 0.0;
    for i in 0..flat.len() {
        let orig = flat[i];
        flat[i] = orig + h;
        let fp = surrogate(&flat, &mut work)?;
        flat[i] = orig - h;
        let fm = surrogate(&flat, &mut work)?;
        flat[i] = orig;
        let fd = (fp - fm) / (2.0 * h);
        worst = worst.max((fd - analytic[i]).abs() / scale);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;

    #[test]
    fn gradient_matches_fd_on_the_trap() {
        let trap = scenarios::pinch_trap();
        let err = gradient_max_rel_error(&trap.ctx, &trap.pinched, 1.25e-2, 1e-6).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn gradient_matches_fd_on_cluttered_scenes() {
        for seed in 0..5u64 {
            let (ctx, traj) = scenarios::random_cluttered(seed);
            let err = gradient_max_rel_error(&ctx, &traj, 1.25e-2, 1e-6).unwrap();
            assert!(err < 1e-4, "seed {seed}: max relative error {err}");
        }
    }
}
