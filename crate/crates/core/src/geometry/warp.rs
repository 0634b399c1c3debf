//! Composed affine + spline resampling and its analytic parameter gradients.
//!
//! For an output pixel `p` the spline gives `q = p + d(p)` in the affinely
//! transformed frame, and the affine inverse gives the source coordinate that
//! is read with zero-filled bilinear interpolation. This realizes
//! `T_d(T_s(I, A), Theta)` with the affine stage applied first.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::affine::{image_center, AffineParams};
use super::tps::{TpsBasis, TpsField};
use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::scalar::Real;

/// Serializable record of every geometric parameter applied to an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpParams {
    pub s: f64,
    pub theta: f64,
    pub tx: f64,
    pub ty: f64,
    pub n: usize,
    /// Control displacements `[dx, dy]` in absolute pixels on the canvas.
    pub displacements: Vec<[f64; 2]>,
    pub width: usize,
    pub height: usize,
    #[serde(default = "absolute_pixels")]
    pub units: String,
}

fn absolute_pixels() -> String {
    "absolute_pixels".to_string()
}

impl WarpParams {
    pub fn new(affine: &AffineParams<f64>, field: &TpsField<f64>, width: usize, height: usize) -> Self {
        Self {
            s: affine.s,
            theta: affine.theta,
            tx: affine.tx,
            ty: affine.ty,
            n: field.n,
            displacements: field.displacements.clone(),
            width,
            height,
            units: absolute_pixels(),
        }
    }

    pub fn identity(width: usize, height: usize) -> Self {
        Self::new(
            &AffineParams::identity(),
            &TpsField::lattice(super::tps::DEFAULT_GRID, width, height),
            width,
            height,
        )
    }

    pub fn affine(&self) -> Result<AffineParams<f64>> {
        AffineParams::new(self.s, self.theta, self.tx, self.ty)
    }

    /// Rebuilds the spline on the standard lattice for this canvas.
    pub fn field(&self) -> Result<TpsField<f64>> {
        if self.units != "absolute_pixels" {
            return Err(Error::Format(format!("unsupported displacement units {}", self.units)));
        }
        TpsField::lattice(self.n, self.width, self.height).with_displacements(self.displacements.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Source coordinate for every output pixel of a `w x h` warp.
pub fn warp_source_coords<T: Real>(
    w: usize,
    h: usize,
    p: &AffineParams<T>,
    field: Option<&TpsField<T>>,
) -> Result<Vec<[T; 2]>> {
    let basis = match field {
        Some(f) if !f.is_zero() => {
            f.validate(w, h)?;
            Some(TpsBasis::new(f)?)
        }
        _ => None,
    };
    let c = image_center::<T>(w, h);
    let coords = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let mut scratch = vec![T::zero(); basis.as_ref().map_or(0, |b| b.len())];
            let basis = basis.as_ref();
            (0..w)
                .map(move |x| {
                    let pt = [T::from_usize_lossy(x), T::from_usize_lossy(y)];
                    let q = match (basis, field) {
                        (Some(b), Some(f)) => {
                            let d = b.displacement_at(pt, &f.displacements, &mut scratch);
                            [pt[0] + d[0], pt[1] + d[1]]
                        }
                        _ => pt,
                    };
                    p.inverse_apply(q, c)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(coords)
}

/// Resamples `img` through the affine stage then the spline stage; samples
/// falling outside the source read as zero. Output has the input dimensions.
pub fn warp_image<T: Real>(img: &Image<T>, p: &AffineParams<T>, field: &TpsField<T>) -> Result<Image<T>> {
    warp_with(img, p, Some(field))
}

pub(crate) fn warp_with<T: Real>(
    img: &Image<T>,
    p: &AffineParams<T>,
    field: Option<&TpsField<T>>,
) -> Result<Image<T>> {
    let (w, h) = img.dims();
    let coords = warp_source_coords(w, h, p, field)?;
    let pixels: Vec<T> = coords
        .par_iter()
        .map(|s| img.sample_bilinear(s[0], s[1]))
        .collect();
    Ok(Image::from_raw_clamped(w, h, pixels).with_ppi(img.ppi()))
}

/// Gradients of `sum_p upstream(p) * warp(img)(p)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpGradients<T = f64> {
    pub s: T,
    pub theta: T,
    pub tx: T,
    pub ty: T,
    pub displacements: Vec<[T; 2]>,
}

impl<T: Real> WarpGradients<T> {
    /// Flattened as `[s, theta, tx, ty, dx_0, dy_0, dx_1, ...]`.
    pub fn to_vec(&self) -> Vec<T> {
        let mut v = vec![self.s, self.theta, self.tx, self.ty];
        for d in &self.displacements {
            v.push(d[0]);
            v.push(d[1]);
        }
        v
    }
}

/// Analytic chain-rule gradients through the bilinear sampler, the affine
/// inverse and the spline weights.
pub fn warp_param_gradients<T: Real>(
    img: &Image<T>,
    p: &AffineParams<T>,
    field: &TpsField<T>,
    upstream: &[T],
) -> Result<WarpGradients<T>> {
    let (w, h) = img.dims();
    if upstream.len() != w * h {
        return Err(Error::LengthMismatch {
            expected: w * h,
            actual: upstream.len(),
        });
    }
    field.validate(w, h)?;
    let basis = TpsBasis::new(field)?;
    let nctl = basis.len();
    let c = image_center::<T>(w, h);
    let (sn, cs) = p.theta.sin_cos();
    let inv_s = T::one() / p.s;

    struct Acc<T> {
        s: T,
        theta: T,
        tx: T,
        ty: T,
        disp: Vec<[T; 2]>,
    }
    let zero = || Acc {
        s: T::zero(),
        theta: T::zero(),
        tx: T::zero(),
        ty: T::zero(),
        disp: vec![[T::zero(); 2]; nctl],
    };

    let acc = (0..h)
        .into_par_iter()
        .fold(zero, |mut acc, y| {
            let mut beta = vec![T::zero(); nctl];
            for x in 0..w {
                let g = upstream[y * w + x];
                if g == T::zero() {
                    continue;
                }
                let pt = [T::from_usize_lossy(x), T::from_usize_lossy(y)];
                basis.weights_at(pt, &mut beta);
                let mut q = pt;
                for (b, d) in beta.iter().zip(&field.displacements) {
                    q[0] += *b * d[0];
                    q[1] += *b * d[1];
                }
                let vx = q[0] - c[0] - p.tx;
                let vy = q[1] - c[1] - p.ty;
                let ux = (cs * vx + sn * vy) * inv_s; // src - c
                let uy = (-sn * vx + cs * vy) * inv_s;
                let sx = c[0] + ux;
                let sy = c[1] + uy;

                // bilinear partials with zero fill
                let x0 = sx.floor();
                let y0 = sy.floor();
                let fx = sx - x0;
                let fy = sy - y0;
                let (ix, iy) = match (x0.to_isize(), y0.to_isize()) {
                    (Some(a), Some(b)) => (a, b),
                    _ => continue,
                };
                let v00 = img.get_or_zero(ix, iy);
                let v10 = img.get_or_zero(ix + 1, iy);
                let v01 = img.get_or_zero(ix, iy + 1);
                let v11 = img.get_or_zero(ix + 1, iy + 1);
                let one = T::one();
                let dvx = (one - fy) * (v10 - v00) + fy * (v11 - v01);
                let dvy = (one - fx) * (v01 - v00) + fx * (v11 - v10);
                let gx = g * dvx;
                let gy = g * dvy;

                // d src / d s = -(src - c) / s
                acc.s += -(gx * ux + gy * uy) * inv_s;
                // d src / d theta = (uy, -ux)
                acc.theta += gx * uy - gy * ux;
                // d src / d t = -(1/s) R(-theta)
                acc.tx += -(gx * cs - gy * sn) * inv_s;
                acc.ty += -(gx * sn + gy * cs) * inv_s;
                // d src / d q = (1/s) R(-theta)
                let gqx = (gx * cs - gy * sn) * inv_s;
                let gqy = (gx * sn + gy * cs) * inv_s;
                for (d, b) in acc.disp.iter_mut().zip(&beta) {
                    d[0] += gqx * *b;
                    d[1] += gqy * *b;
                }
            }
            acc
        })
        .reduce(zero, |mut a, b| {
            a.s += b.s;
            a.theta += b.theta;
            a.tx += b.tx;
            a.ty += b.ty;
            for (x, y) in a.disp.iter_mut().zip(&b.disp) {
                x[0] += y[0];
                x[1] += y[1];
            }
            a
        });

    Ok(WarpGradients {
        s: acc.s,
        theta: acc.theta,
        tx: acc.tx,
        ty: acc.ty,
        displacements: acc.disp,
    })
}

/// Objective whose gradient [`warp_param_gradients`] computes.
pub fn warp_objective<T: Real>(img: &Image<T>, p: &AffineParams<T>, field: &TpsField<T>, upstream: &[T]) -> Result<T> {
    let (w, h) = img.dims();
    let coords = warp_source_coords(w, h, p, Some(field))?;
    // unclamped sampling so the objective is the exact composition
    Ok(coords
        .iter()
        .zip(upstream)
        .map(|(s, g)| *g * img.sample_bilinear(s[0], s[1]))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::tps::tps_flow;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image<f64> {
        Image::from_fn(w, h, |_, _| rng.gen_range(0.0..1.0))
    }

    #[test]
    fn identity_warp_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = random_image(&mut rng, 23, 17);
        let out = warp_image(&img, &AffineParams::identity(), &TpsField::lattice(4, 23, 17)).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn integer_translation_shifts_with_zero_fill() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = random_image(&mut rng, 30, 12);
        let p = AffineParams::new(1.0, 0.0, 7.0, 0.0).unwrap();
        let out = warp_image(&img, &p, &TpsField::lattice(4, 30, 12)).unwrap();
        for y in 0..12 {
            for x in 0..30 {
                let expect = if x >= 7 { img.get(x - 7, y) } else { 0.0 };
                assert_eq!(out.get(x, y), expect);
            }
        }
    }

    #[test]
    fn matches_scalar_reference_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_image(&mut rng, 20, 20);
        let p = AffineParams::new(1.1, 0.2, 1.5, -0.7).unwrap();
        let disp: Vec<[f64; 2]> = (0..16)
            .map(|_| [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)])
            .collect();
        let field = TpsField::lattice(4, 20, 20).with_displacements(disp).unwrap();
        let out = warp_image(&img, &p, &field).unwrap();
        // reference: dense flow, explicit inverse matrix, hand-written bilinear
        let flow = tps_flow(&field, 20, 20).unwrap();
        let c = 9.5;
        let (sn, cs) = p.theta.sin_cos();
        for y in 0..20 {
            for x in 0..20 {
                let q = flow.at(x, y);
                let vx = q[0] - c - p.tx;
                let vy = q[1] - c - p.ty;
                let sx = c + (cs * vx + sn * vy) / p.s;
                let sy = c + (-sn * vx + cs * vy) / p.s;
                let read = |ix: i64, iy: i64| {
                    if ix < 0 || iy < 0 || ix >= 20 || iy >= 20 {
                        0.0
                    } else {
                        img.get(ix as usize, iy as usize)
                    }
                };
                let (x0, y0) = (sx.floor() as i64, sy.floor() as i64);
                let (ax, ay) = (sx - sx.floor(), sy - sy.floor());
                let v = read(x0, y0) * (1.0 - ax) * (1.0 - ay)
                    + read(x0 + 1, y0) * ax * (1.0 - ay)
                    + read(x0, y0 + 1) * (1.0 - ax) * ay
                    + read(x0 + 1, y0 + 1) * ax * ay;
                assert!((out.get(x, y) - v.clamp(0.0, 1.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let img = random_image(&mut rng, 16, 16);
        let p = AffineParams::new(0.9, 0.1, 0.3, 0.2).unwrap();
        let field = TpsField::lattice(4, 16, 16);
        let g = warp_param_gradients(&img, &p, &field, &vec![0.0; 256]).unwrap();
        assert!(g.to_vec().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_image_has_vanishing_gradients() {
        let img = Image::<f64>::filled(16, 16, 0.6);
        // magnification keeps every sample well inside the raster
        let p = AffineParams::new(1.25, 0.05, 0.4, -0.3).unwrap();
        let field = TpsField::lattice(4, 16, 16)
            .with_displacements((0..16).map(|i| [0.1 * (i % 3) as f64, -0.05 * (i % 2) as f64]).collect())
            .unwrap();
        let up: Vec<f64> = (0..256).map(|i| ((i * 37) % 11) as f64 / 11.0 - 0.5).collect();
        let g = warp_param_gradients(&img, &p, &field, &up).unwrap();
        assert!(g.to_vec().iter().all(|v| v.abs() < 1e-8), "{:?}", g);
    }

    #[test]
    fn params_json_round_trip() {
        let field = TpsField::lattice(4, 480, 480)
            .with_displacements((0..16).map(|i| [i as f64, -(i as f64) / 2.0]).collect())
            .unwrap();
        let wp = WarpParams::new(&AffineParams::new(1.2, 0.3, 4.0, -2.0).unwrap(), &field, 480, 480);
        let text = wp.to_json().unwrap();
        assert!(text.contains("\"displacements\""));
        let back = WarpParams::from_json(&text).unwrap();
        assert_eq!(back, wp);
        assert_eq!(back.field().unwrap(), field);
    }
}
