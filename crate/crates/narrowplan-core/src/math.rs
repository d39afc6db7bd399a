//! Scalar math shims so the crate builds both with `std` intrinsics and with
//! `libm` on `no_std` targets, plus small 2D helpers shared across modules.

use nalgebra::{Matrix2, Vector2};

#[cfg(feature = "std")]
mod imp {
    #[inline]
    pub fn sqrt(x: f64) -> f64 {
        x.sqrt()
    }
    #[inline]
    pub fn sin(x: f64) -> f64 {
        x.sin()
    }
    #[inline]
    pub fn cos(x: f64) -> f64 {
        x.cos()
    }
    #[inline]
    pub fn acos(x: f64) -> f64 {
        x.acos()
    }
    #[inline]
    pub fn hypot(x: f64, y: f64) -> f64 {
        x.hypot(y)
    }
}

#[cfg(not(feature = "std"))]
mod imp {
    #[inline]
    pub fn sqrt(x: f64) -> f64 {
        libm::sqrt(x)
    }
    #[inline]
    pub fn sin(x: f64) -> f64 {
        libm::sin(x)
    }
    #[inline]
    pub fn cos(x: f64) -> f64 {
        libm::cos(x)
    }
    #[inline]
    pub fn acos(x: f64) -> f64 {
        libm::acos(x)
    }
    #[inline]
    pub fn hypot(x: f64, y: f64) -> f64 {
        libm::hypot(x, y)
    }
}

pub use imp::{acos, cos, hypot, sin, sqrt};

/// Euclidean norm of a slice.
pub fn norm(v: &[f64]) -> f64 {
    sqrt(v.iter().map(|x| x * x).sum())
}

/// Angle between two vectors in degrees, `None` if either norm is below
/// `tiny` (the angle is then undefined).
pub fn angle_deg(a: &[f64], b: &[f64], tiny: f64) -> Option<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na < tiny || nb < tiny {
        return None;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let c = (dot / (na * nb)).clamp(-1.0, 1.0);
    Some(acos(c).to_degrees())
}

/// Lower Cholesky factor of a symmetric positive-definite 2x2 matrix.
pub fn chol2(m: &Matrix2<f64>) -> Matrix2<f64> {
    let l11 = sqrt(m[(0, 0)]);
    let l21 = m[(1, 0)] / l11;
    let l22 = sqrt((m[(1, 1)] - l21 * l21).max(0.0));
    Matrix2::new(l11, 0.0, l21, l22)
}

/// Inverse of a 2x2 matrix. Panics on a singular input; callers only invert
/// matrices that are positive definite by construction.
pub fn inv2(m: &Matrix2<f64>) -> Matrix2<f64> {
    m.try_inverse().expect("2x2 matrix is singular")
}

/// Rotate a 2D vector by +90 degrees (the planar revolute-joint velocity map).
#[inline]
pub fn perp(v: Vector2<f64>) -> Vector2<f64> {
    Vector2::new(-v.y, v.x)
}
