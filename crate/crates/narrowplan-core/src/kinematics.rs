//! Planar n-link serial arm: forward kinematics for collision-check balls
//! (CCBs) and per-ball Jacobians.
//!
//! Balls are kept in base-to-end-effector order; the accumulation order of
//! per-ball collision gradients depends on it, so it is part of the model
//! contract and never re-sorted.

use alloc::vec::Vec;

use nalgebra::{Matrix2xX, Vector2};

use crate::math::{cos, perp, sin};
use crate::{Error, Result};

/// A collision-check ball attached to one link.
#[derive(Debug, Clone, PartialEq)]
pub struct Ccb {
    /// Index of the carrying link, `0..n_links`.
    pub link_index: usize,
    /// Position along the link, `0.0` = proximal joint, `1.0` = distal end.
    pub offset_fraction: f64,
    /// Ball radius in meters.
    pub radius: f64,
}

/// Planar serial arm with revolute joints and a rigid set of CCBs.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    /// Per-link lengths in meters, all positive.
    pub link_lengths: Vec<f64>,
    /// Base position (m) and orientation (rad).
    pub base_position: Vector2<f64>,
    pub base_orientation: f64,
    /// Per-joint `[lo, hi]` limits in radians.
    pub joint_limits: Vec<[f64; 2]>,
    /// Collision-check balls in base-to-end-effector order.
    pub balls: Vec<Ccb>,
}

impl ArmModel {
    /// Validates the geometry and returns the model.
    pub fn new(
        link_lengths: Vec<f64>,
        base_position: Vector2<f64>,
        base_orientation: f64,
        joint_limits: Vec<[f64; 2]>,
        balls: Vec<Ccb>,
    ) -> Result<Self> {
        if link_lengths.is_empty() {
            return Err(Error::InvalidArgument { what: "arm needs at least one link" });
        }
        if link_lengths.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::InvalidArgument { what: "link lengths must be positive" });
        }
        if joint_limits.len() != link_lengths.len() {
            return Err(Error::DimensionMismatch {
                expected: link_lengths.len(),
                got: joint_limits.len(),
            });
        }
        if joint_limits.iter().any(|[lo, hi]| !(lo <= hi)) {
            return Err(Error::InvalidArgument { what: "joint limit lo must not exceed hi" });
        }
        for ball in &balls {
            if ball.link_index >= link_lengths.len() {
                return Err(Error::IndexOutOfRange {
                    what: "ball link",
                    index: ball.link_index,
                    len: link_lengths.len(),
                });
            }
            if !(ball.radius > 0.0) {
                return Err(Error::InvalidArgument { what: "ball radius must be positive" });
            }
            if !(0.0..=1.0).contains(&ball.offset_fraction) {
                return Err(Error::InvalidArgument {
                    what: "ball offset fraction must lie in [0, 1]",
                });
            }
        }
        // Base-to-end-effector order: by link, then by offset along the link.
        let sorted = balls.windows(2).all(|w| {
            (w[0].link_index, w[0].offset_fraction) <= (w[1].link_index, w[1].offset_fraction)
        });
        if !sorted {
            return Err(Error::InvalidArgument {
                what: "balls must be ordered base-to-end-effector",
            });
        }
        Ok(Self { link_lengths, base_position, base_orientation, joint_limits, balls })
    }

    /// Convenience constructor: `per_link` balls evenly spread along every
    /// link (fractions 1/per_link, 2/per_link, ..., 1.0), all of one radius.
    pub fn with_uniform_balls(
        link_lengths: Vec<f64>,
        base_position: Vector2<f64>,
        base_orientation: f64,
        per_link: usize,
        radius: f64,
    ) -> Result<Self> {
        let n = link_lengths.len();
        let mut balls = Vec::with_capacity(n * per_link);
        for link in 0..n {
            for b in 1..=per_link {
                balls.push(Ccb {
                    link_index: link,
                    offset_fraction: b as f64 / per_link as f64,
                    radius,
                });
            }
        }
        let limits = alloc::vec![[-core::f64::consts::PI, core::f64::consts::PI]; n];
        Self::new(link_lengths, base_position, base_orientation, limits, balls)
    }

    /// Number of joints.
    pub fn dof(&self) -> usize {
        self.link_lengths.len()
    }

    fn check_dim(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::DimensionMismatch { expected: self.dof(), got: q.len() });
        }
        Ok(())
    }

    /// Positions of the joints `0..=n` (joint 0 is the base, joint n the
    /// end-effector tip) for configuration `q`.
    pub fn joint_positions(&self, q: &[f64]) -> Result<Vec<Vector2<f64>>> {
        self.check_dim(q)?;
        let mut pts = Vec::with_capacity(self.dof() + 1);
        let mut p = self.base_position;
        let mut angle = self.base_orientation;
        pts.push(p);
        for (len, qi) in self.link_lengths.iter().zip(q) {
            angle += qi;
            p += Vector2::new(cos(angle), sin(angle)) * *len;
            pts.push(p);
        }
        Ok(pts)
    }

    /// Workspace center of every CCB, in ball order.
    pub fn ball_positions(&self, q: &[f64]) -> Result<Vec<Vector2<f64>>> {
        let joints = self.joint_positions(q)?;
        Ok(self
            .balls
            .iter()
            .map(|b| {
                let head = joints[b.link_index];
                let tail = joints[b.link_index + 1];
                head + (tail - head) * b.offset_fraction
            })
            .collect())
    }

    /// Jacobian of one ball center with respect to the joint vector: a 2xD
    /// matrix whose columns for joints beyond the ball's link are exactly
    /// zero.
    pub fn ball_jacobian(&self, q: &[f64], ball_index: usize) -> Result<Matrix2xX<f64>> {
        if ball_index >= self.balls.len() {
            return Err(Error::IndexOutOfRange {
                what: "ball",
                index: ball_index,
                len: self.balls.len(),
            });
        }
        let joints = self.joint_positions(q)?;
        let ball = &self.balls[ball_index];
        let head = joints[ball.link_index];
        let tail = joints[ball.link_index + 1];
        let x = head + (tail - head) * ball.offset_fraction;

        let mut jac = Matrix2xX::zeros(self.dof());
        for j in 0..=ball.link_index {
            let col = perp(x - joints[j]);
            jac.set_column(j, &col);
        }
        Ok(jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn two_link() -> ArmModel {
        ArmModel::new(
            vec![1.0, 1.0],
            Vector2::zeros(),
            0.0,
            vec![[-4.0, 4.0]; 2],
            vec![Ccb { link_index: 1, offset_fraction: 1.0, radius: 0.1 }],
        )
        .unwrap()
    }

    #[test]
    fn straight_arm_tip() {
        let arm = two_link();
        let p = arm.ball_positions(&[0.0, 0.0]).unwrap();
        assert!((p[0] - Vector2::new(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn quarter_turn_tip() {
        let arm = two_link();
        let p = arm.ball_positions(&[core::f64::consts::FRAC_PI_2, 0.0]).unwrap();
        assert!((p[0] - Vector2::new(0.0, 2.0)).norm() < 1e-12);
    }

    #[test]
    fn tip_jacobian_at_zero() {
        let arm = two_link();
        let j = arm.ball_jacobian(&[0.0, 0.0], 0).unwrap();
        let expect = [[0.0, 0.0], [2.0, 1.0]];
        for r in 0..2 {
            for c in 0..2 {
                assert!((j[(r, c)] - expect[r][c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_actuating_columns_are_zero() {
        let arm = ArmModel::with_uniform_balls(vec![1.0, 0.8, 0.6], Vector2::zeros(), 0.0, 2, 0.05)
            .unwrap();
        // Balls 0 and 1 sit on link 0; joints 1 and 2 must not move them.
        let j = arm.ball_jacobian(&[0.3, -0.7, 1.1], 0).unwrap();
        assert_eq!(j.column(1).norm(), 0.0);
        assert_eq!(j.column(2).norm(), 0.0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let arm = two_link();
        assert!(matches!(
            arm.ball_positions(&[0.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 1 })
        ));
        assert!(matches!(arm.ball_jacobian(&[0.0, 0.0], 7), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn invalid_geometry_rejected() {
        assert!(ArmModel::new(vec![], Vector2::zeros(), 0.0, vec![], vec![]).is_err());
        assert!(ArmModel::new(vec![-1.0], Vector2::zeros(), 0.0, vec![[0.0, 1.0]], vec![]).is_err());
        let bad_ball = Ccb { link_index: 3, offset_fraction: 0.5, radius: 0.1 };
        assert!(ArmModel::new(vec![1.0], Vector2::zeros(), 0.0, vec![[0.0, 1.0]], vec![bad_ball])
            .is_err());
    }
}
