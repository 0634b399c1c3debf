use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Similarity transform parameters: isotropic scale, rotation (radians) and
/// translation (pixels).
///
/// The transform acts on coordinates centered on the image center `c`:
/// `out = c + s R(theta) (src - c) + t`, so `s > 1` magnifies content.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineParams<T = f64> {
    pub s: T,
    pub theta: T,
    pub tx: T,
    pub ty: T,
}

impl<T: Real> AffineParams<T> {
    /// Validates `s > 0` and normalizes `theta` into `(-pi, pi]`.
    pub fn new(s: T, theta: T, tx: T, ty: T) -> Result<Self> {
        if !(s > T::zero()) || !s.is_finite() {
            return Err(Error::param(format!("scale must be positive, got {s}")));
        }
        if !theta.is_finite() || !tx.is_finite() || !ty.is_finite() {
            return Err(Error::param("affine parameters must be finite"));
        }
        Ok(Self {
            s,
            theta: normalize_angle(theta),
            tx,
            ty,
        })
    }

    pub fn identity() -> Self {
        Self {
            s: T::one(),
            theta: T::zero(),
            tx: T::zero(),
            ty: T::zero(),
        }
    }

    pub fn scale(s: T) -> Result<Self> {
        Self::new(s, T::zero(), T::zero(), T::zero())
    }

    /// Maps an output coordinate (relative to center `c`) back to the source.
    #[inline]
    pub fn inverse_apply(&self, q: [T; 2], c: [T; 2]) -> [T; 2] {
        let (sn, cs) = self.theta.sin_cos();
        let vx = q[0] - c[0] - self.tx;
        let vy = q[1] - c[1] - self.ty;
        [
            c[0] + (cs * vx + sn * vy) / self.s,
            c[1] + (-sn * vx + cs * vy) / self.s,
        ]
    }

    /// Maps a source coordinate forward.
    #[inline]
    pub fn apply(&self, p: [T; 2], c: [T; 2]) -> [T; 2] {
        let m = affine_matrix(self);
        let ux = p[0] - c[0];
        let uy = p[1] - c[1];
        [
            c[0] + m[0][0] * ux + m[0][1] * uy + m[0][2],
            c[1] + m[1][0] * ux + m[1][1] * uy + m[1][2],
        ]
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle<T: Real>(theta: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut t = theta % two_pi;
    if t <= -T::PI() {
        t += two_pi;
    } else if t > T::PI() {
        t -= two_pi;
    }
    t
}

/// `[[s cos, -s sin, tx], [s sin, s cos, ty]]`.
pub fn affine_matrix<T: Real>(p: &AffineParams<T>) -> [[T; 3]; 2] {
    let (sn, cs) = p.theta.sin_cos();
    [
        [p.s * cs, -(p.s * sn), p.tx],
        [p.s * sn, p.s * cs, p.ty],
    ]
}

/// Center used by the centered affine convention.
#[inline]
pub fn image_center<T: Real>(w: usize, h: usize) -> [T; 2] {
    [
        T::from_usize_lossy(w.max(1) - 1) / T::lit(2.0),
        T::from_usize_lossy(h.max(1) - 1) / T::lit(2.0),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn matrix_examples() {
        let id = affine_matrix(&AffineParams::<f64>::new(1.0, 0.0, 0.0, 0.0).unwrap());
        assert_eq!(id, [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        let r = affine_matrix(&AffineParams::<f64>::new(2.0, PI / 2.0, 0.0, 0.0).unwrap());
        let expect = [[0.0, -2.0, 0.0], [2.0, 0.0, 0.0]];
        for i in 0..2 {
            for j in 0..3 {
                assert!((r[i][j] - expect[i][j]).abs() < 1e-15);
            }
        }
        let t = affine_matrix(&AffineParams::<f64>::new(1.0, 0.0, 5.0, 3.0).unwrap());
        assert_eq!(t, [[1.0, 0.0, 5.0], [0.0, 1.0, 3.0]]);
    }

    #[test]
    fn validation_and_normalization() {
        assert!(AffineParams::<f64>::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(AffineParams::<f64>::new(-1.0, 0.0, 0.0, 0.0).is_err());
        let p = AffineParams::<f64>::new(1.0, 3.0 * PI, 0.0, 0.0).unwrap();
        assert!((p.theta - PI).abs() < 1e-12);
        let p = AffineParams::<f64>::new(1.0, -PI, 0.0, 0.0).unwrap();
        assert!((p.theta - PI).abs() < 1e-12);
    }

    #[test]
    fn inverse_undoes_forward() {
        let p = AffineParams::<f64>::new(1.3, 0.4, -2.0, 7.5).unwrap();
        let c = [10.0, 20.0];
        let q = p.apply([3.0, -4.0], c);
        let back = p.inverse_apply(q, c);
        assert!((back[0] - 3.0).abs() < 1e-12 && (back[1] + 4.0).abs() < 1e-12);
    }
}
