//! Canned planning worlds used by tests, benchmarks, and examples: a
//! two-obstacle pinch that produces opposing ball gradients, an aligned
//! single-ball push that stays escapable by plain descent, obstacle-free
//! quadratic instances, and seeded cluttered scenes for gradient checking.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::environment::{Obstacle, Scene};
use crate::gp::{GpModel, Trajectory};
use crate::kinematics::{ArmModel, Ccb};
use crate::objective::ObjectiveContext;

/// A ready-to-optimize world with a linear initial trajectory.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub ctx: ObjectiveContext,
    /// Linear-interpolation initial trajectory (the prior mean).
    pub pinched: Trajectory,
    pub free_start: Vec<f64>,
    pub free_goal: Vec<f64>,
}

fn two_ball_arm() -> ArmModel {
    ArmModel::new(
        vec![1.0, 1.0],
        Vector2::zeros(),
        0.0,
        vec![[-core::f64::consts::PI, core::f64::consts::PI]; 2],
        vec![
            Ccb { link_index: 0, offset_fraction: 1.0, radius: 0.1 },
            Ccb { link_index: 1, offset_fraction: 1.0, radius: 0.1 },
        ],
    )
    .unwrap()
}

fn scenario(arm: ArmModel, obstacles: Vec<Obstacle>, start: [f64; 2], goal: [f64; 2]) -> Scenario {
    let scene = Scene::new(obstacles, 0.1, [Vector2::new(-2.5, -2.5), Vector2::new(2.5, 2.5)])
        .unwrap();
    let gp = GpModel::new(&start, &goal, 12, 6.5, 1.0).unwrap();
    let ctx = ObjectiveContext::new(arm, scene, gp, 4).unwrap();
    let pinched = ctx.gp.mean.clone();
    Scenario { ctx, pinched, free_start: start.to_vec(), free_goal: goal.to_vec() }
}

/// Symmetric narrow-gap trap: on the straight joint-space path the elbow
/// ball is pushed up by an obstacle below it while the tip ball is pushed
/// down by an obstacle above it, so their joint-space gradients oppose and
/// the summed gradient nearly cancels while the collision cost stays high.
pub fn pinch_trap() -> Scenario {
    scenario(
        two_ball_arm(),
        vec![
            Obstacle::Circle { center: Vector2::new(1.0, -0.15), radius: 0.1 },
            Obstacle::Circle { center: Vector2::new(2.0, 0.15), radius: 0.1 },
        ],
        [-0.5, 0.6],
        [0.5, -0.6],
    )
}

/// Single obstacle brushing only the tip ball: the push is coherent, no
/// included angle is ever defined, and plain gradient descent gets out.
pub fn aligned_push() -> Scenario {
    scenario(two_ball_arm(), vec![Obstacle::Circle {
        center: Vector2::new(1.95, 0.2),
        radius: 0.1,
    }], [-0.5, 0.6], [0.5, -0.6])
}

/// Obstacle-free instance: the objective reduces to the quadratic prior and
/// the optimum is the mean. The starting point is a seeded prior sample
/// rescaled so the initial gradient norm (and with it the initial Lipschitz
/// estimate) sits at the curvature scale of the prior; joint limits are wide
/// open so clamping never interferes with the pure quadratic descent.
pub fn quadratic_problem(seed: u64) -> (ObjectiveContext, Trajectory) {
    let arm = ArmModel::new(
        vec![1.0, 1.0],
        Vector2::zeros(),
        0.0,
        vec![[-1e9, 1e9]; 2],
        vec![
            Ccb { link_index: 0, offset_fraction: 1.0, radius: 0.1 },
            Ccb { link_index: 1, offset_fraction: 1.0, radius: 0.1 },
        ],
    )
    .unwrap();
    let scene =
        Scene::new(vec![], 0.1, [Vector2::new(-2.5, -2.5), Vector2::new(2.5, 2.5)]).unwrap();
    let gp = GpModel::new(&[0.0, 0.0], &[1.0, -0.6], 1, 5.0, 1.0).unwrap();
    let ctx = ObjectiveContext::new(arm, scene, gp, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start = ctx.gp.sample(1, &mut rng).pop().unwrap();
    let (_, g0) = ctx.gp.cost_grad(&start).unwrap();
    let amp = 4.0 / g0.norm();
    for (s, m) in start.support.iter_mut().zip(&ctx.gp.mean.support) {
        for j in 0..s.position.len() {
            s.position[j] = m.position[j] + amp * (s.position[j] - m.position[j]);
            s.velocity[j] = m.velocity[j] + amp * (s.velocity[j] - m.velocity[j]);
        }
    }
    (ctx, start)
}

/// Seeded cluttered scene on a three-link arm with a prior-sampled
/// trajectory, sized so several balls sit inside the cost margin; used by
/// gradient-oracle checks.
pub fn random_cluttered(seed: u64) -> (ObjectiveContext, Trajectory) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arm = ArmModel::with_uniform_balls(
        vec![0.40, 0.35, 0.30],
        Vector2::zeros(),
        0.0,
        3,
        0.05,
    )
    .unwrap();
    let mut obstacles = Vec::new();
    for _ in 0..3 {
        let cx = rng.random_range(-0.9..0.9);
        let cy = rng.random_range(-0.9..0.9);
        if rng.random_range(0.0..1.0) < 0.5 {
            obstacles.push(Obstacle::Circle {
                center: Vector2::new(cx, cy),
                radius: rng.random_range(0.08..0.22),
            });
        } else {
            let w = rng.random_range(0.1..0.3);
            let h = rng.random_range(0.1..0.3);
            obstacles.push(Obstacle::Box {
                min: Vector2::new(cx - w, cy - h),
                max: Vector2::new(cx + w, cy + h),
            });
        }
    }
    let scene = Scene::new(obstacles, 0.1, [Vector2::new(-1.2, -1.2), Vector2::new(1.2, 1.2)])
        .unwrap();
    let start = [rng.random_range(-0.4..0.4), rng.random_range(-0.6..0.6), 0.0];
    let goal = [
        start[0] + rng.random_range(0.6..1.2),
        rng.random_range(-0.8..0.8),
        rng.random_range(-0.8..0.8),
    ];
    let gp = GpModel::new(&start, &goal, 8, 4.0, 1.0).unwrap();
    let ctx = ObjectiveContext::new(arm, scene, gp, 3).unwrap();
    let traj = {
        let mut r2 = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        ctx.gp.sample(1, &mut r2).pop().unwrap()
    };
    (ctx, traj)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trap_construction_holds() {
        let trap = pinch_trap();
        let report = trap.ctx.check_stuck(&trap.pinched, 95.0, 1e-4).unwrap();
        assert!(report.is_stuck, "max angle {}, cost {}", report.max_angle_deg, report.obs_cost);
        // Boundary states stay collision-free with margin.
        for q in [&trap.free_start, &trap.free_goal] {
            assert!(crate::objective::config_collision(&trap.ctx.arm, &trap.ctx.scene, q)
                .unwrap()
                .is_none());
        }
    }

    #[test]
    fn aligned_push_collides_without_opposition() {
        let s = aligned_push();
        let report = s.ctx.check_stuck(&s.pinched, 95.0, 1e-4).unwrap();
        assert!(report.obs_cost > 1e-4);
        assert!(!report.is_stuck);
    }

    #[test]
    fn cluttered_scenes_have_live_gradients() {
        let mut nonzero = 0;
        for seed in 0..20u64 {
            let (ctx, traj) = random_cluttered(seed);
            let g = ctx.obs_grad(&traj, &ctx.default_spec, 180.0).unwrap();
            if g.amax() > 1e-3 {
                nonzero += 1;
            }
        }
        assert!(nonzero >= 15, "only {nonzero}/20 cluttered scenes touch the margin");
    }
}
