//! Thin-plate-spline displacement fields defined by an `n x n` control lattice.
//!
//! The spline maps an output pixel `p` to `p + d(p)`, where `d` interpolates
//! the control displacements exactly at the anchors. Kernel `U(r) = r^2 log r^2`.

use serde::{Deserialize, Serialize};

use super::linalg;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Default control-lattice side.
pub const DEFAULT_GRID: usize = 4;
/// Lattice inset from the image border, as a fraction of the side.
pub const LATTICE_INSET: f64 = 0.1;

/// Control lattice plus per-anchor displacements in absolute pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TpsField<T = f64> {
    pub n: usize,
    /// Anchor coordinates, row-major over the lattice.
    pub anchors: Vec<[T; 2]>,
    /// Displacement `(dx, dy)` per anchor.
    pub displacements: Vec<[T; 2]>,
    /// Optional ridge regularizer added to the kernel diagonal.
    #[serde(default)]
    pub regularization: f64,
}

impl<T: Real> TpsField<T> {
    /// Uniform `n x n` lattice inset 10% from the borders of a `w x h` canvas,
    /// with zero displacements.
    pub fn lattice(n: usize, w: usize, h: usize) -> Self {
        let axis = |len: usize| -> Vec<T> {
            let span = (len.max(1) - 1) as f64;
            let lo = LATTICE_INSET * span;
            let step = if n > 1 { (span - 2.0 * lo) / (n - 1) as f64 } else { 0.0 };
            (0..n).map(|i| T::lit(lo + step * i as f64)).collect()
        };
        let xs = axis(w);
        let ys = axis(h);
        let mut anchors = Vec::with_capacity(n * n);
        for y in &ys {
            for x in &xs {
                anchors.push([*x, *y]);
            }
        }
        Self {
            n,
            anchors,
            displacements: vec![[T::zero(); 2]; n * n],
            regularization: 0.0,
        }
    }

    pub fn with_displacements(mut self, displacements: Vec<[T; 2]>) -> Result<Self> {
        if displacements.len() != self.anchors.len() {
            return Err(Error::LengthMismatch {
                expected: self.anchors.len(),
                actual: displacements.len(),
            });
        }
        self.displacements = displacements;
        Ok(self)
    }

    pub fn is_zero(&self) -> bool {
        self.displacements
            .iter()
            .all(|d| d[0] == T::zero() && d[1] == T::zero())
    }

    /// Checks lattice shape, finiteness and the `|d| <= side` sanity bound.
    pub fn validate(&self, w: usize, h: usize) -> Result<()> {
        if self.n < 2 {
            return Err(Error::param("TPS grid side must be at least 2"));
        }
        if self.anchors.len() != self.n * self.n || self.displacements.len() != self.n * self.n {
            return Err(Error::LengthMismatch {
                expected: self.n * self.n,
                actual: self.displacements.len(),
            });
        }
        let bound = T::from_usize_lossy(w.max(h));
        for d in self.displacements.iter().chain(self.anchors.iter()) {
            if !d[0].is_finite() || !d[1].is_finite() {
                return Err(Error::param("TPS values must be finite"));
            }
        }
        if self
            .displacements
            .iter()
            .any(|d| d[0].abs() > bound || d[1].abs() > bound)
        {
            return Err(Error::param("TPS displacement exceeds image side"));
        }
        Ok(())
    }
}

#[inline]
fn kernel<T: Real>(r2: T) -> T {
    if r2 <= T::zero() {
        T::zero()
    } else {
        r2 * r2.ln()
    }
}

/// Precomputed inverse of the spline system restricted to the data columns:
/// evaluating [`TpsBasis::weights_at`] gives the linear weights with which
/// each control displacement contributes at a point.
#[derive(Debug, Clone)]
pub struct TpsBasis<T = f64> {
    anchors: Vec<[T; 2]>,
    /// `(N + 3) x N` row-major.
    inv: Vec<T>,
    scale: T,
}

impl<T: Real> TpsBasis<T> {
    pub fn new(field: &TpsField<T>) -> Result<Self> {
        let n = field.anchors.len();
        if n < 3 {
            return Err(Error::param("TPS needs at least 3 control points"));
        }
        // normalized coordinates keep the kernel well scaled; the interpolant is unchanged
        let scale = field
            .anchors
            .iter()
            .fold(T::zero(), |acc, a| acc.max(a[0].abs()).max(a[1].abs()))
            .max(T::one());
        let pts: Vec<[T; 2]> = field
            .anchors
            .iter()
            .map(|a| [a[0] / scale, a[1] / scale])
            .collect();
        let dim = n + 3;
        let mut l = vec![T::zero(); dim * dim];
        let reg = T::lit(field.regularization);
        for i in 0..n {
            for j in 0..n {
                let dx = pts[i][0] - pts[j][0];
                let dy = pts[i][1] - pts[j][1];
                l[i * dim + j] = kernel(dx * dx + dy * dy);
            }
            l[i * dim + i] += reg;
            let row = [T::one(), pts[i][0], pts[i][1]];
            for (k, v) in row.iter().enumerate() {
                l[i * dim + n + k] = *v;
                l[(n + k) * dim + i] = *v;
            }
        }
        let mut rhs = vec![T::zero(); dim * n];
        for i in 0..n {
            rhs[i * n + i] = T::one();
        }
        let inv = linalg::solve(l, rhs, dim, n)?;
        Ok(Self {
            anchors: pts,
            inv,
            scale,
        })
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// Weights `beta_k(p)` such that `d(p) = sum_k beta_k(p) * displacement_k`.
    pub fn weights_at(&self, p: [T; 2], out: &mut [T]) {
        let n = self.anchors.len();
        debug_assert_eq!(out.len(), n);
        let px = p[0] / self.scale;
        let py = p[1] / self.scale;
        out.iter_mut().for_each(|v| *v = T::zero());
        for (j, a) in self.anchors.iter().enumerate() {
            let dx = px - a[0];
            let dy = py - a[1];
            let phi = kernel(dx * dx + dy * dy);
            if phi != T::zero() {
                let row = &self.inv[j * n..(j + 1) * n];
                for (o, r) in out.iter_mut().zip(row) {
                    *o += phi * *r;
                }
            }
        }
        for (k, phi) in [T::one(), px, py].into_iter().enumerate() {
            let row = &self.inv[(n + k) * n..(n + k + 1) * n];
            for (o, r) in out.iter_mut().zip(row) {
                *o += phi * *r;
            }
        }
    }

    /// Displacement at `p` for the given control displacements.
    pub fn displacement_at(&self, p: [T; 2], displacements: &[[T; 2]], scratch: &mut [T]) -> [T; 2] {
        self.weights_at(p, scratch);
        let mut d = [T::zero(); 2];
        for (w, disp) in scratch.iter().zip(displacements) {
            d[0] += *w * disp[0];
            d[1] += *w * disp[1];
        }
        d
    }

    /// Kernel coefficients for the given displacements (normalized frame).
    fn kernel_coefficients(&self, displacements: &[[T; 2]]) -> Vec<[T; 2]> {
        let n = self.anchors.len();
        (0..n)
            .map(|j| {
                let row = &self.inv[j * n..(j + 1) * n];
                let mut w = [T::zero(); 2];
                for (r, d) in row.iter().zip(displacements) {
                    w[0] += *r * d[0];
                    w[1] += *r * d[1];
                }
                w
            })
            .collect()
    }

    /// Bending energy `sum_c w_c^T K w_c` of the non-affine part.
    pub fn bending_energy(&self, displacements: &[[T; 2]]) -> T {
        let w = self.kernel_coefficients(displacements);
        let mut e = T::zero();
        for (i, a) in self.anchors.iter().enumerate() {
            for (j, b) in self.anchors.iter().enumerate() {
                let dx = a[0] - b[0];
                let dy = a[1] - b[1];
                let k = kernel(dx * dx + dy * dy);
                e += k * (w[i][0] * w[j][0] + w[i][1] * w[j][1]);
            }
        }
        e.abs()
    }
}

/// Dense per-pixel source coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGrid<T = f64> {
    pub width: usize,
    pub height: usize,
    /// `(x_src, y_src)` per output pixel, row-major.
    pub coords: Vec<[T; 2]>,
}

impl<T: Real> FlowGrid<T> {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> [T; 2] {
        self.coords[y * self.width + x]
    }
}

/// Realizes the spline as a dense flow: output pixel `p` reads from `p + d(p)`.
pub fn tps_flow<T: Real>(field: &TpsField<T>, out_w: usize, out_h: usize) -> Result<FlowGrid<T>> {
    if field.n < 2 {
        return Err(Error::param("TPS grid side must be at least 2"));
    }
    let basis = TpsBasis::new(field)?;
    let mut scratch = vec![T::zero(); basis.len()];
    let mut coords = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        for x in 0..out_w {
            let p = [T::from_usize_lossy(x), T::from_usize_lossy(y)];
            let d = basis.displacement_at(p, &field.displacements, &mut scratch);
            coords.push([p[0] + d[0], p[1] + d[1]]);
        }
    }
    Ok(FlowGrid {
        width: out_w,
        height: out_h,
        coords,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_displacement_is_identity() {
        let field = TpsField::<f64>::lattice(4, 40, 30);
        let flow = tps_flow(&field, 40, 30).unwrap();
        for y in 0..30 {
            for x in 0..40 {
                assert_eq!(flow.at(x, y), [x as f64, y as f64]);
            }
        }
    }

    #[test]
    fn interpolates_controls_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let field = TpsField::<f64>::lattice(4, 64, 64);
        let disp: Vec<[f64; 2]> = (0..16)
            .map(|_| [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)])
            .collect();
        let field = field.with_displacements(disp.clone()).unwrap();
        let basis = TpsBasis::new(&field).unwrap();
        let mut scratch = vec![0.0; 16];
        for (a, d) in field.anchors.iter().zip(&disp) {
            let got = basis.displacement_at(*a, &disp, &mut scratch);
            assert!((got[0] - d[0]).abs() < 1e-9 && (got[1] - d[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn single_control_displacement() {
        let field = TpsField::<f64>::lattice(4, 50, 50);
        let mut disp = vec![[0.0; 2]; 16];
        disp[5] = [3.0, 0.0];
        let anchor = field.anchors[5];
        let field = field.with_displacements(disp).unwrap();
        let basis = TpsBasis::new(&field).unwrap();
        let mut scratch = vec![0.0; 16];
        let d = basis.displacement_at(anchor, &field.displacements, &mut scratch);
        assert!((d[0] - 3.0).abs() < 1e-9 && d[1].abs() < 1e-9);
    }

    #[test]
    fn coincident_controls_are_singular() {
        let mut field = TpsField::<f64>::lattice(2, 10, 10);
        field.anchors[1] = field.anchors[0];
        assert!(matches!(TpsBasis::new(&field), Err(Error::SingularSystem)));
    }

    #[test]
    fn rejects_degenerate_grid() {
        let field = TpsField::<f64>::lattice(1, 10, 10);
        assert!(tps_flow(&field, 10, 10).is_err());
    }
}
