//! Constant-velocity Gauss-Markov trajectory prior.
//!
//! The trajectory is a white-noise-on-acceleration process: each joint
//! carries an independent (position, velocity) state with transition
//! `Phi(tau) = [[1, tau], [0, 1]]` and process noise
//! `Q(tau) = qc * [[tau^3/3, tau^2/2], [tau^2/2, tau]]`. The Markov structure
//! keeps every computation here in per-joint 2x2 blocks: the smoothness cost
//! is a sum of transition factors, interpolation between support waypoints is
//! the standard Gauss-Markov conditional, and sampling walks the conditioned
//! chain from the fixed start toward the fixed goal.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::math::{chol2, inv2};
use crate::{Error, Result};

/// One trajectory waypoint: joint positions and velocities of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl State {
    pub fn new(position: Vec<f64>, velocity: Vec<f64>) -> Result<Self> {
        if position.len() != velocity.len() {
            return Err(Error::DimensionMismatch {
                expected: position.len(),
                got: velocity.len(),
            });
        }
        Ok(Self { position, velocity })
    }

    pub fn dim(&self) -> usize {
        self.position.len()
    }

    /// The (position, velocity) pair of one joint.
    #[inline]
    pub(crate) fn joint(&self, j: usize) -> Vector2<f64> {
        Vector2::new(self.position[j], self.velocity[j])
    }
}

/// Support waypoints between a fixed start and goal, spaced `dt` apart.
///
/// Index convention: global state `0` is the start, `1..=n` are the support
/// states, `n + 1` is the goal. Only the support states are optimized.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub start: State,
    pub goal: State,
    pub support: Vec<State>,
    pub dt: f64,
}

impl Trajectory {
    pub fn n_support(&self) -> usize {
        self.support.len()
    }

    pub fn dim(&self) -> usize {
        self.start.dim()
    }

    pub fn total_time(&self) -> f64 {
        (self.n_support() + 1) as f64 * self.dt
    }

    /// Global state lookup, `0..=n_support()+1`.
    pub fn state(&self, index: usize) -> &State {
        let n = self.n_support();
        if index == 0 {
            &self.start
        } else if index <= n {
            &self.support[index - 1]
        } else {
            &self.goal
        }
    }

    /// Length of the flattened free-variable vector.
    pub fn free_len(&self) -> usize {
        self.n_support() * 2 * self.dim()
    }

    /// Flattens the support states; per state the layout is all positions
    /// followed by all velocities.
    pub fn flatten(&self) -> DVector<f64> {
        let d = self.dim();
        let mut out = DVector::zeros(self.free_len());
        for (t, s) in self.support.iter().enumerate() {
            let base = t * 2 * d;
            for j in 0..d {
                out[base + j] = s.position[j];
                out[base + d + j] = s.velocity[j];
            }
        }
        out
    }

    /// Writes a flattened free-variable vector back into the support states.
    pub fn set_from_flat(&mut self, flat: &DVector<f64>) {
        let d = self.dim();
        debug_assert_eq!(flat.len(), self.free_len());
        for (t, s) in self.support.iter_mut().enumerate() {
            let base = t * 2 * d;
            for j in 0..d {
                s.position[j] = flat[base + j];
                s.velocity[j] = flat[base + d + j];
            }
        }
    }
}

/// Per-interval interpolation counts; entry `t` is the number of extra states
/// inserted between global states `t` and `t + 1`, so a trajectory with `n`
/// support states takes `n + 1` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct UpsampleSpec {
    pub counts: Vec<usize>,
}

impl UpsampleSpec {
    pub fn uniform(n_support: usize, per_interval: usize) -> Self {
        Self { counts: vec![per_interval; n_support + 1] }
    }

    pub fn zeros(n_support: usize) -> Self {
        Self::uniform(n_support, 0)
    }
}

#[inline]
pub(crate) fn phi2(tau: f64) -> Matrix2<f64> {
    Matrix2::new(1.0, tau, 0.0, 1.0)
}

#[inline]
pub(crate) fn q2(qc: f64, tau: f64) -> Matrix2<f64> {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    Matrix2::new(qc * t3 / 3.0, qc * t2 / 2.0, qc * t2 / 2.0, qc * tau)
}

#[inline]
pub(crate) fn q2_inv(qc: f64, tau: f64) -> Matrix2<f64> {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    Matrix2::new(12.0 / (qc * t3), -6.0 / (qc * t2), -6.0 / (qc * t2), 4.0 / (qc * tau))
}

/// One row of the upsampling map.
#[derive(Debug, Clone, PartialEq)]
pub enum UpsampleRow {
    /// The upsampled state is a support (or boundary) state verbatim.
    Support { state_index: usize },
    /// Gauss-Markov conditional between `left` and `left + 1`:
    /// `dev = lam * dev_left + psi * dev_right` per joint.
    Interp { left: usize, lam: Matrix2<f64>, psi: Matrix2<f64> },
}

/// Block-banded linear map from support-state deviations to densely
/// interpolated deviations. Identity rows appear at every support time.
#[derive(Debug, Clone)]
pub struct UpsampleMatrix {
    rows: Vec<(f64, UpsampleRow)>,
    dim: usize,
    n_support: usize,
}

impl UpsampleMatrix {
    /// `(time_seconds, row)` pairs in trajectory order.
    pub fn rows(&self) -> &[(f64, UpsampleRow)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Dense form mapping all `(n_support + 2)` state deviations (boundaries
    /// included) to upsampled deviations. With an all-zero spec this is the
    /// identity.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim;
        let ncols = (self.n_support + 2) * 2 * d;
        let mut m = DMatrix::zeros(self.rows.len() * 2 * d, ncols);
        for (r, (_, row)) in self.rows.iter().enumerate() {
            let rb = r * 2 * d;
            let mut put = |col_state: usize, blk: &Matrix2<f64>| {
                let cb = col_state * 2 * d;
                for j in 0..d {
                    m[(rb + j, cb + j)] = blk[(0, 0)];
                    m[(rb + j, cb + d + j)] = blk[(0, 1)];
                    m[(rb + d + j, cb + j)] = blk[(1, 0)];
                    m[(rb + d + j, cb + d + j)] = blk[(1, 1)];
                }
            };
            match row {
                UpsampleRow::Support { state_index } => put(*state_index, &Matrix2::identity()),
                UpsampleRow::Interp { left, lam, psi } => {
                    put(*left, lam);
                    put(*left + 1, psi);
                }
            }
        }
        m
    }

    /// Transposed action on per-row position-space gradients: maps a gradient
    /// with one `dim`-length entry per upsampled state (velocity components
    /// zero) down to the flat free-support gradient. Contributions to the
    /// fixed boundary states are dropped.
    pub fn apply_transpose_position(&self, g_rows: &[Vec<f64>]) -> DVector<f64> {
        debug_assert_eq!(g_rows.len(), self.rows.len());
        let d = self.dim;
        let n = self.n_support;
        let mut out = DVector::zeros(n * 2 * d);
        let mut add = |state: usize, blk: &Matrix2<f64>, g: &[f64]| {
            if state == 0 || state > n {
                return;
            }
            let base = (state - 1) * 2 * d;
            for j in 0..d {
                out[base + j] += blk[(0, 0)] * g[j];
                out[base + d + j] += blk[(0, 1)] * g[j];
            }
        };
        let ident = Matrix2::identity();
        for ((_, row), g) in self.rows.iter().zip(g_rows) {
            match row {
                UpsampleRow::Support { state_index } => add(*state_index, &ident, g),
                UpsampleRow::Interp { left, lam, psi } => {
                    add(*left, lam, g);
                    add(*left + 1, psi, g);
                }
            }
        }
        out
    }
}

/// The trajectory prior: mean plus the Gauss-Markov kernel implied by
/// `(qc, dt)`. The mean is always a constant-velocity line, so transition
/// factors vanish on it and the prior cost is zero exactly at the mean.
#[derive(Debug, Clone, PartialEq)]
pub struct GpModel {
    /// Power-spectral density of the acceleration noise (per joint).
    pub qc: f64,
    pub dt: f64,
    pub dim: usize,
    pub mean: Trajectory,
}

impl GpModel {
    /// Builds the prior between two joint configurations: the mean is the
    /// straight joint-space line traversed at constant velocity, boundary
    /// states included.
    pub fn new(
        start_q: &[f64],
        goal_q: &[f64],
        n_support: usize,
        total_time: f64,
        qc: f64,
    ) -> Result<Self> {
        if n_support < 1 {
            return Err(Error::InvalidArgument { what: "need at least one support state" });
        }
        if !(total_time > 0.0) {
            return Err(Error::InvalidArgument { what: "total_time must be positive" });
        }
        if !(qc > 0.0) {
            return Err(Error::InvalidArgument { what: "qc must be positive" });
        }
        if start_q.len() != goal_q.len() {
            return Err(Error::DimensionMismatch { expected: start_q.len(), got: goal_q.len() });
        }
        let d = start_q.len();
        let dt = total_time / (n_support + 1) as f64;
        let v_line: Vec<f64> =
            (0..d).map(|j| (goal_q[j] - start_q[j]) / total_time).collect();
        let state_at = |time: f64| State {
            position: (0..d).map(|j| start_q[j] + v_line[j] * time).collect(),
            velocity: v_line.clone(),
        };
        let support = (1..=n_support).map(|t| state_at(t as f64 * dt)).collect();
        let mean = Trajectory {
            start: state_at(0.0),
            goal: state_at(total_time),
            support,
            dt,
        };
        Ok(Self { qc, dt, dim: d, mean })
    }

    /// Wraps an existing constant-velocity mean (used when slicing a global
    /// prior down to a sub-trajectory window).
    pub(crate) fn from_mean(mean: Trajectory, qc: f64) -> Self {
        Self { qc, dt: mean.dt, dim: mean.dim(), mean }
    }

    pub fn n_support(&self) -> usize {
        self.mean.n_support()
    }

    /// Mean state at an arbitrary time within the horizon.
    pub fn mean_state_at(&self, time: f64) -> State {
        let d = self.dim;
        let start = &self.mean.start;
        State {
            position: (0..d)
                .map(|j| start.position[j] + start.velocity[j] * time)
                .collect(),
            velocity: start.velocity.clone(),
        }
    }

    /// State transition and process-noise covariance over a step `tau`, as
    /// dense `2D x 2D` matrices in the `[positions, velocities]` layout.
    pub fn transition(&self, tau: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if !(tau > 0.0) {
            return Err(Error::InvalidArgument { what: "tau must be positive" });
        }
        let d = self.dim;
        let (p, q) = (phi2(tau), q2(self.qc, tau));
        let mut phi = DMatrix::zeros(2 * d, 2 * d);
        let mut qm = DMatrix::zeros(2 * d, 2 * d);
        for j in 0..d {
            for (blk, m) in [(&p, &mut phi), (&q, &mut qm)] {
                m[(j, j)] = blk[(0, 0)];
                m[(j, d + j)] = blk[(0, 1)];
                m[(d + j, j)] = blk[(1, 0)];
                m[(d + j, d + j)] = blk[(1, 1)];
            }
        }
        Ok((phi, qm))
    }

    fn check_traj(&self, traj: &Trajectory) -> Result<()> {
        if traj.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: traj.dim() });
        }
        if traj.n_support() != self.n_support() {
            return Err(Error::DimensionMismatch {
                expected: self.n_support(),
                got: traj.n_support(),
            });
        }
        Ok(())
    }

    #[inline]
    fn dev(&self, traj: &Trajectory, index: usize, j: usize) -> Vector2<f64> {
        traj.state(index).joint(j) - self.mean.state(index).joint(j)
    }

    /// Smoothness cost and its gradient over the flattened support states.
    ///
    /// The cost is the sum of transition factors
    /// `1/2 ||Phi(dt) dev_t - dev_{t+1}||^2_{Q(dt)^-1}` over all consecutive
    /// pairs, fixed boundaries included, which equals the dense quadratic
    /// form of the conditioned kernel.
    pub fn cost_grad(&self, traj: &Trajectory) -> Result<(f64, DVector<f64>)> {
        self.check_traj(traj)?;
        let (n, d) = (self.n_support(), self.dim);
        let phi = phi2(self.dt);
        let qinv = q2_inv(self.qc, self.dt);
        let mut cost = 0.0;
        let mut grad = DVector::zeros(traj.free_len());
        for t in 0..=n {
            for j in 0..d {
                let e = phi * self.dev(traj, t, j) - self.dev(traj, t + 1, j);
                let qe = qinv * e;
                cost += 0.5 * e.dot(&qe);
                let pqe = phi.transpose() * qe;
                if t >= 1 {
                    let base = (t - 1) * 2 * d;
                    grad[base + j] += pqe.x;
                    grad[base + d + j] += pqe.y;
                }
                if t + 1 <= n {
                    let base = t * 2 * d;
                    grad[base + j] -= qe.x;
                    grad[base + d + j] -= qe.y;
                }
            }
        }
        Ok((cost, grad))
    }

    /// Convenience: cost only.
    pub fn cost(&self, traj: &Trajectory) -> Result<f64> {
        Ok(self.cost_grad(traj)?.0)
    }

    /// Builds the upsampling map for the given per-interval counts.
    pub fn upsample_matrix(&self, spec: &UpsampleSpec) -> Result<UpsampleMatrix> {
        let n = self.n_support();
        if spec.counts.len() != n + 1 {
            return Err(Error::DimensionMismatch { expected: n + 1, got: spec.counts.len() });
        }
        let q_dt_inv = q2_inv(self.qc, self.dt);
        let phi_dt = phi2(self.dt);
        let mut rows = Vec::new();
        for t in 0..=n {
            rows.push((t as f64 * self.dt, UpsampleRow::Support { state_index: t }));
            let count = spec.counts[t];
            for k in 1..=count {
                let s = self.dt * k as f64 / (count + 1) as f64;
                let psi = q2(self.qc, s) * phi2(self.dt - s).transpose() * q_dt_inv;
                let lam = phi2(s) - psi * phi_dt;
                rows.push((t as f64 * self.dt + s, UpsampleRow::Interp { left: t, lam, psi }));
            }
        }
        rows.push(((n + 1) as f64 * self.dt, UpsampleRow::Support { state_index: n + 1 }));
        Ok(UpsampleMatrix { rows, dim: self.dim, n_support: n })
    }

    /// Upsampled `(time, state)` sequence for a trajectory, boundary states
    /// included. States at support times are returned verbatim.
    pub fn interpolate_with(&self, m: &UpsampleMatrix, traj: &Trajectory) -> Vec<(f64, State)> {
        let d = self.dim;
        m.rows
            .iter()
            .map(|(time, row)| {
                let state = match row {
                    UpsampleRow::Support { state_index } => traj.state(*state_index).clone(),
                    UpsampleRow::Interp { left, lam, psi } => {
                        let mut s = self.mean_state_at(*time);
                        for j in 0..d {
                            let dev =
                                lam * self.dev(traj, *left, j) + psi * self.dev(traj, *left + 1, j);
                            s.position[j] += dev.x;
                            s.velocity[j] += dev.y;
                        }
                        s
                    }
                };
                (*time, state)
            })
            .collect()
    }

    /// Upsampled state sequence for the given spec.
    pub fn interpolate(&self, traj: &Trajectory, spec: &UpsampleSpec) -> Result<Vec<(f64, State)>> {
        self.check_traj(traj)?;
        let m = self.upsample_matrix(spec)?;
        Ok(self.interpolate_with(&m, traj))
    }

    /// Draws trajectories from the prior conditioned on its own boundary
    /// states; every sample keeps start and goal fixed.
    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Trajectory> {
        self.sample_conditioned(&self.mean.start, &self.mean.goal, count, rng)
    }

    /// Draws trajectories from the prior conditioned on arbitrary fixed
    /// boundary states (used by restarts of sub-trajectory optimization,
    /// where the pads generally sit off the prior mean).
    pub fn sample_conditioned<R: Rng + ?Sized>(
        &self,
        start: &State,
        goal: &State,
        count: usize,
        rng: &mut R,
    ) -> Vec<Trajectory> {
        let (n, d) = (self.n_support(), self.dim);
        let q_dt_inv = q2_inv(self.qc, self.dt);
        let phi_dt = phi2(self.dt);
        let a_step = q_dt_inv * phi_dt;

        // Per-waypoint conditional moments of the chain given the goal; the
        // same blocks serve every joint and every sample.
        struct StepCond {
            to_prev: Matrix2<f64>,
            to_goal: Matrix2<f64>,
            chol: Matrix2<f64>,
        }
        let steps: Vec<StepCond> = (1..=n)
            .map(|t| {
                let rem = (n + 1 - t) as f64 * self.dt;
                let phi_r = phi2(rem);
                let qr_inv = q2_inv(self.qc, rem);
                let prec = q_dt_inv + phi_r.transpose() * qr_inv * phi_r;
                let cov = inv2(&prec);
                StepCond {
                    to_prev: cov * a_step,
                    to_goal: cov * phi_r.transpose() * qr_inv,
                    chol: chol2(&cov),
                }
            })
            .collect();

        let dev_start: Vec<Vector2<f64>> =
            (0..d).map(|j| start.joint(j) - self.mean.start.joint(j)).collect();
        let dev_goal: Vec<Vector2<f64>> =
            (0..d).map(|j| goal.joint(j) - self.mean.goal.joint(j)).collect();

        (0..count)
            .map(|_| {
                let mut prev = dev_start.clone();
                let support = (1..=n)
                    .map(|t| {
                        let sc = &steps[t - 1];
                        let mut state = self.mean.state(t).clone();
                        for j in 0..d {
                            let z = Vector2::new(
                                StandardNormal.sample(rng),
                                StandardNormal.sample(rng),
                            );
                            let dev = sc.to_prev * prev[j] + sc.to_goal * dev_goal[j] + sc.chol * z;
                            state.position[j] += dev.x;
                            state.velocity[j] += dev.y;
                            prev[j] = dev;
                        }
                        state
                    })
                    .collect();
                Trajectory { start: start.clone(), goal: goal.clone(), support, dt: self.dt }
            })
            .collect()
    }
}
