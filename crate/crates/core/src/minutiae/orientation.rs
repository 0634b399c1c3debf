//! Block ridge-orientation field from the gradient structure tensor.

use std::f64::consts::PI;

use crate::imaging::Image;

pub const DEFAULT_ORIENTATION_BLOCK: usize = 16;

/// Per-block ridge direction in `[0, pi)` and coherence in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationField {
    pub block: usize,
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub angles: Vec<f64>,
    pub coherence: Vec<f64>,
}

impl OrientationField {
    #[inline]
    pub fn angle(&self, bx: usize, by: usize) -> f64 {
        self.angles[by * self.blocks_x + bx]
    }

    #[inline]
    pub fn coherence_at_block(&self, bx: usize, by: usize) -> f64 {
        self.coherence[by * self.blocks_x + bx]
    }

    /// Doubled-angle vector of a block scaled by its coherence.
    #[inline]
    fn vector(&self, bx: usize, by: usize) -> [f64; 2] {
        let i = by * self.blocks_x + bx;
        let (s, c) = (2.0 * self.angles[i]).sin_cos();
        [self.coherence[i] * c, self.coherence[i] * s]
    }

    /// Orientation and coherence at a pixel, bilinearly interpolated between
    /// block centers in the doubled-angle domain.
    pub fn at(&self, x: f64, y: f64) -> (f64, f64) {
        let b = self.block as f64;
        let gx = (x + 0.5) / b - 0.5;
        let gy = (y + 0.5) / b - 0.5;
        let clamp = |v: f64, n: usize| v.clamp(0.0, (n - 1) as f64);
        let gx = clamp(gx, self.blocks_x);
        let gy = clamp(gy, self.blocks_y);
        let x0 = gx.floor() as usize;
        let y0 = gy.floor() as usize;
        let x1 = (x0 + 1).min(self.blocks_x - 1);
        let y1 = (y0 + 1).min(self.blocks_y - 1);
        let fx = gx - x0 as f64;
        let fy = gy - y0 as f64;
        let mut v = [0.0; 2];
        for (bx, by, w) in [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x1, y0, fx * (1.0 - fy)),
            (x0, y1, (1.0 - fx) * fy),
            (x1, y1, fx * fy),
        ] {
            let u = self.vector(bx, by);
            v[0] += w * u[0];
            v[1] += w * u[1];
        }
        let mag = (v[0] * v[0] + v[1] * v[1]).sqrt();
        if mag < 1e-12 {
            let bx = ((x / b) as usize).min(self.blocks_x - 1);
            let by = ((y / b) as usize).min(self.blocks_y - 1);
            return (self.angle(bx, by), 0.0);
        }
        let a = (0.5 * v[1].atan2(v[0])).rem_euclid(PI);
        (if a >= PI { 0.0 } else { a }, mag.min(1.0))
    }
}

/// Central-difference gradients with replicated borders.
pub(crate) fn gradients(img: &Image<f64>) -> (Vec<f64>, Vec<f64>) {
    let (w, h) = img.dims();
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let xl = x.saturating_sub(1);
            let xr = (x + 1).min(w - 1);
            let yu = y.saturating_sub(1);
            let yd = (y + 1).min(h - 1);
            if xr > xl {
                gx[y * w + x] = (img.get(xr, y) - img.get(xl, y)) / (xr - xl) as f64;
            }
            if yd > yu {
                gy[y * w + x] = (img.get(x, yd) - img.get(x, yu)) / (yd - yu) as f64;
            }
        }
    }
    (gx, gy)
}

fn integral(values: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut s = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += values[y * w + x];
            s[(y + 1) * (w + 1) + x + 1] = s[y * (w + 1) + x + 1] + row;
        }
    }
    s
}

#[inline]
fn box_sum(s: &[f64], w: usize, x0: usize, y0: usize, x1: usize, y1: usize) -> f64 {
    let w1 = w + 1;
    s[y1 * w1 + x1] - s[y0 * w1 + x1] - s[y1 * w1 + x0] + s[y0 * w1 + x0]
}

/// Least-squares block orientation. Each block's tensor is accumulated over a
/// window twice the block side centered on the block. Blocks without gradient
/// energy get coherence 0.
pub fn orientation_field(img: &Image<f64>, block: usize) -> OrientationField {
    let block = block.max(1);
    let (w, h) = img.dims();
    let blocks_x = w.div_ceil(block).max(1);
    let blocks_y = h.div_ceil(block).max(1);
    let (gx, gy) = gradients(img);
    let gxx: Vec<f64> = gx.iter().map(|v| v * v).collect();
    let gyy: Vec<f64> = gy.iter().map(|v| v * v).collect();
    let gxy: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a * b).collect();
    let (sxx, syy, sxy) = (integral(&gxx, w, h), integral(&gyy, w, h), integral(&gxy, w, h));
    let half = block / 2;
    let mut angles = Vec::with_capacity(blocks_x * blocks_y);
    let mut coherence = Vec::with_capacity(blocks_x * blocks_y);
    for by in 0..blocks_y {
        for bx in 0..blocks_x {
            let x0 = (bx * block).saturating_sub(half);
            let y0 = (by * block).saturating_sub(half);
            let x1 = ((bx + 1) * block + half).min(w);
            let y1 = ((by + 1) * block + half).min(h);
            let a = box_sum(&sxx, w, x0, y0, x1, y1);
            let b = box_sum(&syy, w, x0, y0, x1, y1);
            let c = box_sum(&sxy, w, x0, y0, x1, y1);
            let n = ((x1 - x0) * (y1 - y0)).max(1) as f64;
            let energy = (a + b) / n;
            let (angle, coh) = if energy > 1e-10 {
                let grad = 0.5 * (2.0 * c).atan2(a - b);
                let ridge = (grad + PI / 2.0).rem_euclid(PI);
                let coh = (((a - b).powi(2) + 4.0 * c * c).sqrt() / (a + b)).clamp(0.0, 1.0);
                (if ridge >= PI { 0.0 } else { ridge }, coh)
            } else {
                (0.0, 0.0)
            };
            angles.push(angle);
            coherence.push(coh);
        }
    }
    OrientationField {
        block,
        blocks_x,
        blocks_y,
        angles,
        coherence,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::geometry::{warp_image, AffineParams, TpsField};

    /// Cosine stripes whose ridges run along direction `angle_deg`.
    pub(crate) fn stripes(w: usize, h: usize, period: f64, angle_deg: f64) -> Image<f64> {
        let a = angle_deg.to_radians();
        let (nx, ny) = (-a.sin(), a.cos());
        Image::from_fn(w, h, |x, y| {
            let u = x as f64 * nx + y as f64 * ny;
            0.5 + 0.5 * (2.0 * PI * u / period).cos()
        })
    }

    fn axial_diff(a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(PI);
        d.min(PI - d)
    }

    #[test]
    fn stripes_at_thirty_degrees() {
        let of = orientation_field(&stripes(128, 128, 9.0, 30.0), 16);
        assert_eq!((of.blocks_x, of.blocks_y), (8, 8));
        let mut high = 0;
        for (a, c) in of.angles.iter().zip(&of.coherence) {
            assert!((0.0..PI).contains(a) && (0.0..=1.0).contains(c));
            if *c > 0.5 {
                high += 1;
                assert!(axial_diff(*a, 30f64.to_radians()) < 3f64.to_radians(), "angle {}", a.to_degrees());
            }
        }
        assert!(high > 50);
    }

    #[test]
    fn rotation_shifts_angles() {
        let img = stripes(192, 192, 9.0, 10.0);
        let a45 = AffineParams::new(1.0, 45f64.to_radians(), 0.0, 0.0).unwrap();
        let rot = warp_image(&img, &a45, &TpsField::lattice(4, 192, 192)).unwrap();
        let a = orientation_field(&img, 16);
        let b = orientation_field(&rot, 16);
        for by in 4..8 {
            for bx in 4..8 {
                let expect = a.angle(bx, by) + 45f64.to_radians();
                assert!(axial_diff(b.angle(bx, by), expect) < 3f64.to_radians());
            }
        }
    }

    #[test]
    fn uniform_has_zero_coherence() {
        let of = orientation_field(&Image::filled(64, 64, 0.4), 16);
        assert!(of.coherence.iter().all(|c| *c < 1e-9));
    }

    #[test]
    fn pixel_lookup_matches_blocks() {
        let of = orientation_field(&stripes(96, 96, 8.0, 120.0), 16);
        let (a, c) = of.at(50.0, 40.0);
        assert!(axial_diff(a, 120f64.to_radians()) < 3f64.to_radians());
        assert!(c > 0.8);
    }
}
