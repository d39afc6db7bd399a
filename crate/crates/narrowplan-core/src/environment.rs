//! Scene representation: primitive obstacles with exact signed distances and
//! the piecewise-polynomial collision cost.
//!
//! Distances are analytic rather than grid-sampled, so gradient checks carry
//! no discretization error. Ties between equidistant obstacles resolve to the
//! lowest obstacle id, and the gradient at a circle center defaults to
//! `(1, 0)`; both rules keep seeded runs reproducible.

use alloc::vec::Vec;

use nalgebra::Vector2;

use crate::math::hypot;
use crate::{Error, Result};

/// A primitive obstacle.
#[derive(Debug, Clone, PartialEq)]
pub enum Obstacle {
    Circle { center: Vector2<f64>, radius: f64 },
    /// Axis-aligned box given by min/max corners.
    Box { min: Vector2<f64>, max: Vector2<f64> },
}

impl Obstacle {
    /// Signed distance (negative inside) and outward gradient at `p`.
    pub fn signed_distance(&self, p: Vector2<f64>) -> (f64, Vector2<f64>) {
        match self {
            Obstacle::Circle { center, radius } => {
                let d = p - center;
                let len = hypot(d.x, d.y);
                if len < 1e-12 {
                    (-radius, Vector2::new(1.0, 0.0))
                } else {
                    (len - radius, d / len)
                }
            }
            Obstacle::Box { min, max } => {
                let cx = p.x.clamp(min.x, max.x);
                let cy = p.y.clamp(min.y, max.y);
                if cx != p.x || cy != p.y {
                    let d = p - Vector2::new(cx, cy);
                    let len = hypot(d.x, d.y);
                    (len, d / len)
                } else {
                    // Inside: nearest face wins, fixed face order on ties.
                    let gaps = [
                        (p.x - min.x, Vector2::new(-1.0, 0.0)),
                        (max.x - p.x, Vector2::new(1.0, 0.0)),
                        (p.y - min.y, Vector2::new(0.0, -1.0)),
                        (max.y - p.y, Vector2::new(0.0, 1.0)),
                    ];
                    let mut best = gaps[0];
                    for g in &gaps[1..] {
                        if g.0 < best.0 {
                            best = *g;
                        }
                    }
                    (-best.0, best.1)
                }
            }
        }
    }
}

/// Immutable workspace description.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub obstacles: Vec<Obstacle>,
    /// Safety margin: cost support extends this far outside obstacle surfaces.
    pub epsilon: f64,
    /// Workspace rectangle (metadata for renderers; queries are unrestricted).
    pub bounds: [Vector2<f64>; 2],
}

impl Scene {
    pub fn new(obstacles: Vec<Obstacle>, epsilon: f64, bounds: [Vector2<f64>; 2]) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidArgument { what: "epsilon must be positive" });
        }
        Ok(Self { obstacles, epsilon, bounds })
    }

    /// Signed distance to the nearest obstacle, its outward unit gradient,
    /// and the obstacle id. An empty scene reports `(+inf, 0, None)`.
    pub fn signed_distance(&self, p: Vector2<f64>) -> (f64, Vector2<f64>, Option<usize>) {
        let mut best: Option<(f64, Vector2<f64>, usize)> = None;
        for (id, obs) in self.obstacles.iter().enumerate() {
            let (d, g) = obs.signed_distance(p);
            // Strict `<` keeps the lowest id on exact ties.
            if best.map_or(true, |(bd, _, _)| d < bd) {
                best = Some((d, g, id));
            }
        }
        match best {
            Some((d, g, id)) => (d, g, Some(id)),
            None => (f64::INFINITY, Vector2::zeros(), None),
        }
    }
}

/// Piecewise collision cost over signed distance `d` with margin `epsilon`,
/// together with its derivative:
///
/// - `d < 0`:        `c = -d + epsilon/2`
/// - `0 <= d <= eps`: `c = (d - epsilon)^2 / (2 epsilon)`
/// - `d > eps`:       `c = 0`
///
/// `c` is continuously differentiable at both seams.
pub fn collision_cost(distance: f64, epsilon: f64) -> (f64, f64) {
    debug_assert!(epsilon > 0.0);
    if distance < 0.0 {
        (-distance + epsilon / 2.0, -1.0)
    } else if distance <= epsilon {
        let r = distance - epsilon;
        (r * r / (2.0 * epsilon), r / epsilon)
    } else {
        (0.0, 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn unit_circle() -> Scene {
        Scene::new(
            vec![Obstacle::Circle { center: Vector2::zeros(), radius: 1.0 }],
            0.1,
            [Vector2::new(-3.0, -3.0), Vector2::new(3.0, 3.0)],
        )
        .unwrap()
    }

    #[test]
    fn circle_radial_distance() {
        let scene = unit_circle();
        let (d, g, id) = scene.signed_distance(Vector2::new(2.0, 0.0));
        assert!((d - 1.0).abs() < 1e-15);
        assert!((g - Vector2::new(1.0, 0.0)).norm() < 1e-15);
        assert_eq!(id, Some(0));
    }

    #[test]
    fn circle_center_tiebreak() {
        let scene = unit_circle();
        let (d, g, id) = scene.signed_distance(Vector2::zeros());
        assert_eq!(d, -1.0);
        assert_eq!(g, Vector2::new(1.0, 0.0));
        assert_eq!(id, Some(0));
    }

    #[test]
    fn nearest_primitive_wins() {
        let scene = Scene::new(
            vec![
                Obstacle::Box { min: Vector2::new(0.0, 0.0), max: Vector2::new(1.0, 1.0) },
                Obstacle::Circle { center: Vector2::new(3.0, 0.0), radius: 0.5 },
            ],
            0.1,
            [Vector2::new(-4.0, -4.0), Vector2::new(4.0, 4.0)],
        )
        .unwrap();
        // (2, 0): box surface is 1.0 away, circle surface only 0.5.
        let (d, g, id) = scene.signed_distance(Vector2::new(2.0, 0.0));
        assert!((d - 0.5).abs() < 1e-15);
        assert!((g - Vector2::new(-1.0, 0.0)).norm() < 1e-15);
        assert_eq!(id, Some(1));
    }

    #[test]
    fn empty_scene_is_free() {
        let scene =
            Scene::new(vec![], 0.1, [Vector2::new(-1.0, -1.0), Vector2::new(1.0, 1.0)]).unwrap();
        let (d, g, id) = scene.signed_distance(Vector2::new(0.3, 0.4));
        assert_eq!(d, f64::INFINITY);
        assert_eq!(g, Vector2::zeros());
        assert_eq!(id, None);
    }

    #[test]
    fn box_inside_gradient_points_to_nearest_face() {
        let b = Obstacle::Box { min: Vector2::new(0.0, 0.0), max: Vector2::new(2.0, 1.0) };
        let (d, g) = b.signed_distance(Vector2::new(0.2, 0.5));
        assert!((d + 0.2).abs() < 1e-15);
        assert_eq!(g, Vector2::new(-1.0, 0.0));
        let (d, g) = b.signed_distance(Vector2::new(1.0, 0.9));
        assert!((d + 0.1).abs() < 1e-14);
        assert_eq!(g, Vector2::new(0.0, 1.0));
    }

    #[test]
    fn cost_piecewise_values() {
        let (c, dc) = collision_cost(0.1, 0.1);
        assert_eq!((c, dc), (0.0, 0.0));
        let (c, dc) = collision_cost(-0.05, 0.1);
        assert!((c - 0.1).abs() < 1e-15);
        assert_eq!(dc, -1.0);
        let (c, dc) = collision_cost(0.05, 0.1);
        assert!((c - 0.0125).abs() < 1e-15);
        assert!((dc + 0.5).abs() < 1e-15);
    }

    #[test]
    fn cost_is_continuous_and_monotone() {
        let eps = 0.17;
        let mut prev = f64::INFINITY;
        let mut d = -0.4;
        while d < 0.4 {
            let (c, _) = collision_cost(d, eps);
            assert!(c <= prev + 1e-12, "cost must not increase with distance");
            assert!(c >= 0.0);
            assert_eq!(c == 0.0, d >= eps);
            prev = c;
            d += 1e-3;
        }
        // C1 at the seams.
        let h = 1e-7;
        for seam in [0.0, eps] {
            let (_, dl) = collision_cost(seam - h, eps);
            let (_, dr) = collision_cost(seam + h, eps);
            assert!((dl - dr).abs() < 1e-5);
        }
    }

    #[test]
    fn distance_gradient_matches_finite_differences() {
        let scene = Scene::new(
            vec![
                Obstacle::Circle { center: Vector2::new(0.4, -0.2), radius: 0.3 },
                Obstacle::Box { min: Vector2::new(-1.0, 0.5), max: Vector2::new(-0.2, 1.5) },
            ],
            0.1,
            [Vector2::new(-2.0, -2.0), Vector2::new(2.0, 2.0)],
        )
        .unwrap();
        let h = 1e-6;
        // Probe points chosen away from medial-axis ties.
        for p in [
            Vector2::new(1.0, 0.1),
            Vector2::new(-0.5, 2.0),
            Vector2::new(0.4, 0.3),
            Vector2::new(-1.4, 1.0),
        ] {
            let (_, g, _) = scene.signed_distance(p);
            let gx = (scene.signed_distance(p + Vector2::new(h, 0.0)).0
                - scene.signed_distance(p - Vector2::new(h, 0.0)).0)
                / (2.0 * h);
            let gy = (scene.signed_distance(p + Vector2::new(0.0, h)).0
                - scene.signed_distance(p - Vector2::new(0.0, h)).0)
                / (2.0 * h);
            assert!((g - Vector2::new(gx, gy)).norm() < 1e-5);
            assert!((g.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn adding_obstacles_never_increases_distance() {
        let base = unit_circle();
        let mut bigger = base.clone();
        bigger.obstacles.push(Obstacle::Box {
            min: Vector2::new(1.0, 1.0),
            max: Vector2::new(2.0, 2.0),
        });
        for p in [Vector2::new(2.0, 0.0), Vector2::new(1.5, 1.5), Vector2::new(-0.4, 0.9)] {
            assert!(bigger.signed_distance(p).0 <= base.signed_distance(p).0);
        }
    }
}
