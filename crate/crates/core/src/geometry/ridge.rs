//! Ridge-period estimation from oriented x-signatures and the resulting
//! resolution normalization.

use serde::{Deserialize, Serialize};

use super::affine::AffineParams;
use super::warp::warp_with;
use crate::error::{Error, Result};
use crate::imaging::Image;

pub const MIN_PERIOD: f64 = 3.0;
pub const MAX_PERIOD: f64 = 25.0;
/// Inter-ridge spacing of a 500 ppi contact impression, in pixels.
pub const DEFAULT_TARGET_PERIOD: f64 = 9.0;
pub const DEFAULT_PERIOD_BLOCK: usize = 32;
/// Minimum share of blocks that must yield a period.
pub const MIN_VALID_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockPeriod {
    pub bx: usize,
    pub by: usize,
    /// Ridge direction in `[0, pi)`.
    pub orientation: f64,
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodEstimate {
    /// Median of the per-block periods.
    pub period: f64,
    pub blocks: Vec<BlockPeriod>,
    /// Blocks with content (not dominated by flat fill).
    pub total_blocks: usize,
}

/// Local ridge orientation at `(cx, cy)` from the structure tensor over a
/// square window. Returns `(ridge_angle, coherence, energy)`.
pub(crate) fn local_orientation(img: &Image<f64>, cx: f64, cy: f64, half: usize) -> (f64, f64, f64) {
    let (w, h) = img.dims();
    let x0 = (cx - half as f64).max(1.0) as usize;
    let y0 = (cy - half as f64).max(1.0) as usize;
    let x1 = ((cx + half as f64) as usize).min(w.saturating_sub(2));
    let y1 = ((cy + half as f64) as usize).min(h.saturating_sub(2));
    let (mut gxx, mut gyy, mut gxy) = (0.0, 0.0, 0.0);
    let mut n = 0usize;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let gx = (img.get(x + 1, y) - img.get(x - 1, y)) * 0.5;
            let gy = (img.get(x, y + 1) - img.get(x, y - 1)) * 0.5;
            gxx += gx * gx;
            gyy += gy * gy;
            gxy += gx * gy;
            n += 1;
        }
    }
    if n == 0 {
        return (0.0, 0.0, 0.0);
    }
    let energy = (gxx + gyy) / n as f64;
    let coh = if gxx + gyy > 1e-15 {
        ((gxx - gyy).powi(2) + 4.0 * gxy * gxy).sqrt() / (gxx + gyy)
    } else {
        0.0
    };
    let grad_angle = 0.5 * (2.0 * gxy).atan2(gxx - gyy);
    let ridge = (grad_angle + std::f64::consts::FRAC_PI_2).rem_euclid(std::f64::consts::PI);
    (ridge, coh, energy)
}

/// Averaged intensity profile across the ridges through `(cx, cy)`.
/// Samples falling outside the raster end the profile on that side.
pub(crate) fn x_signature(img: &Image<f64>, cx: f64, cy: f64, ridge_angle: f64, half_len: usize, half_width: usize) -> Vec<f64> {
    let (w, h) = img.dims();
    let (dy, dx) = ridge_angle.sin_cos();
    let (nx, ny) = (-dy, dx);
    let inside = |x: f64, y: f64| x >= 0.0 && y >= 0.0 && x <= (w - 1) as f64 && y <= (h - 1) as f64;
    let sample = |k: isize| -> Option<f64> {
        let mut acc = 0.0;
        for m in -(half_width as isize)..=(half_width as isize) {
            let x = cx + k as f64 * nx + m as f64 * dx;
            let y = cy + k as f64 * ny + m as f64 * dy;
            if !inside(x, y) {
                return None;
            }
            acc += img.sample_bilinear(x, y);
        }
        Some(acc / (2 * half_width + 1) as f64)
    };
    let mut back = Vec::new();
    for k in (-(half_len as isize)..0).rev() {
        match sample(k) {
            Some(v) => back.push(v),
            None => break,
        }
    }
    back.reverse();
    let mut fwd = Vec::new();
    for k in 0..=(half_len as isize) {
        match sample(k) {
            Some(v) => fwd.push(v),
            None => break,
        }
    }
    back.extend(fwd);
    back
}

/// Dominant period of a 1-D profile over `[MIN_PERIOD, MAX_PERIOD]`, or
/// `None` when the profile is not clearly periodic.
pub(crate) fn dominant_period(signal: &[f64]) -> Option<f64> {
    let n = signal.len();
    if n < 24 {
        return None;
    }
    // remove mean and linear trend
    let nf = n as f64;
    let mean = signal.iter().sum::<f64>() / nf;
    let tc = (nf - 1.0) / 2.0;
    let denom: f64 = (0..n).map(|i| (i as f64 - tc).powi(2)).sum();
    let slope = (0..n).map(|i| (i as f64 - tc) * (signal[i] - mean)).sum::<f64>() / denom;
    let x: Vec<f64> = (0..n)
        .map(|i| signal[i] - mean - slope * (i as f64 - tc))
        .collect();
    let var = x.iter().map(|v| v * v).sum::<f64>() / nf;
    if var < 1e-8 {
        return None;
    }
    let win: Vec<f64> = (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * (i as f64 + 0.5) / nf).cos())
        .collect();
    let xw: Vec<f64> = x.iter().zip(&win).map(|(a, b)| a * b).collect();
    let f_lo = 1.0 / MAX_PERIOD;
    let f_hi = 1.0 / MIN_PERIOD;
    let steps = 800;
    let power = |f: f64| -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        let w = 2.0 * std::f64::consts::PI * f;
        for (i, v) in xw.iter().enumerate() {
            let (s, c) = (w * i as f64).sin_cos();
            re += v * c;
            im += v * s;
        }
        re * re + im * im
    };
    let mut best = (0usize, -1.0);
    let mut powers = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let f = f_lo + (f_hi - f_lo) * k as f64 / steps as f64;
        let p = power(f);
        powers.push(p);
        if p > best.1 {
            best = (k, p);
        }
    }
    if best.0 == 0 || best.0 == steps {
        return None;
    }
    // parabolic refinement on the frequency grid
    let (p0, p1, p2) = (powers[best.0 - 1], powers[best.0], powers[best.0 + 1]);
    let curv = p0 - 2.0 * p1 + p2;
    let offset = if curv < 0.0 { 0.5 * (p0 - p2) / curv } else { 0.0 };
    let f = f_lo + (f_hi - f_lo) * (best.0 as f64 + offset) / steps as f64;
    let period = 1.0 / f;
    // must repeat: normalized autocorrelation at the period lag
    let lag = period.round() as usize;
    if lag == 0 || lag * 2 > n {
        return None;
    }
    let frac = period - period.floor();
    let ac = |l: usize| -> f64 {
        let m = n - l;
        (0..m).map(|i| x[i] * x[i + l]).sum::<f64>() / (m as f64 * var)
    };
    let lo = period.floor() as usize;
    let corr = if lo + 1 < n {
        (1.0 - frac) * ac(lo) + frac * ac(lo + 1)
    } else {
        ac(lo)
    };
    if corr < 0.3 {
        return None;
    }
    Some(period)
}

/// Per-block dominant ridge period, aggregated by median.
pub fn estimate_ridge_period(img: &Image<f64>, block: usize) -> Result<PeriodEstimate> {
    if block < 8 {
        return Err(Error::param("period block must be at least 8 px"));
    }
    let (w, h) = img.dims();
    let nbx = (w / block).max(1);
    let nby = (h / block).max(1);
    // blocks dominated by flat fill (padding / masked background) are not
    // counted toward the valid-share requirement
    let mut total = 0usize;
    let mut blocks = Vec::new();
    for by in 0..nby {
        for bx in 0..nbx {
            let cx = (bx * block) as f64 + block as f64 / 2.0;
            let cy = (by * block) as f64 + block as f64 / 2.0;
            if cx >= w as f64 || cy >= h as f64 {
                continue;
            }
            let (x0, y0) = (bx * block, by * block);
            let (x1, y1) = ((x0 + block).min(w), (y0 + block).min(h));
            let mut flat = 0usize;
            for y in y0..y1 {
                for x in x0..x1 {
                    let v = img.get(x, y);
                    if v <= 1e-9 || v >= 1.0 - 1e-9 {
                        flat += 1;
                    }
                }
            }
            if flat * 4 > (x1 - x0) * (y1 - y0) {
                continue;
            }
            total += 1;
            let (angle, coh, energy) = local_orientation(img, cx, cy, block / 2);
            if coh < 0.5 || energy < 1e-6 {
                continue;
            }
            let sig = x_signature(img, cx, cy, angle, block, block / 4);
            if let Some(period) = dominant_period(&sig) {
                blocks.push(BlockPeriod {
                    bx,
                    by,
                    orientation: angle,
                    period,
                });
            }
        }
    }
    if (blocks.len() as f64) < MIN_VALID_FRACTION * total as f64 || blocks.is_empty() {
        return Err(Error::NoRidgeStructure {
            valid: blocks.len(),
            total,
        });
    }
    let mut ps: Vec<f64> = blocks.iter().map(|b| b.period).collect();
    ps.sort_by(|a, b| a.total_cmp(b));
    let m = ps.len();
    let period = if m % 2 == 1 {
        ps[m / 2]
    } else {
        0.5 * (ps[m / 2 - 1] + ps[m / 2])
    };
    Ok(PeriodEstimate {
        period,
        blocks,
        total_blocks: total,
    })
}

/// Rescales the image about its center so the ridge period becomes
/// `target_period`, tagging the output as 500 ppi.
pub fn scale_to_500ppi(img: &Image<f64>, target_period: f64) -> Result<(Image<f64>, AffineParams<f64>)> {
    if !(target_period >= MIN_PERIOD && target_period <= MAX_PERIOD) {
        return Err(Error::param(format!("target period {target_period} outside [3,25]")));
    }
    let est = estimate_ridge_period(img, DEFAULT_PERIOD_BLOCK)?;
    let params = AffineParams::scale(target_period / est.period)?;
    let out = warp_with(img, &params, None)?;
    Ok((out.with_ppi(Some(500.0)), params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::resize_to;

    fn stripes(w: usize, h: usize, period: f64, angle_deg: f64) -> Image<f64> {
        let a = angle_deg.to_radians();
        // ridges run along `a`, so intensity varies along the normal
        let (nx, ny) = (-a.sin(), a.cos());
        Image::from_fn(w, h, |x, y| {
            let t = x as f64 * nx + y as f64 * ny;
            0.5 + 0.5 * (2.0 * std::f64::consts::PI * t / period).cos()
        })
    }

    #[test]
    fn recovers_synthetic_period() {
        for angle in [0.0, 30.0, 75.0, 120.0] {
            let img = stripes(256, 256, 9.0, angle);
            let est = estimate_ridge_period(&img, 32).unwrap();
            assert!((est.period - 9.0).abs() <= 0.5, "angle {angle}: {}", est.period);
        }
    }

    #[test]
    fn covariant_with_upsampling() {
        let img = stripes(200, 200, 9.0, 20.0);
        let up = resize_to(&img, 400, 400).unwrap();
        let est = estimate_ridge_period(&up, 32).unwrap();
        assert!((est.period - 18.0).abs() <= 1.0, "{}", est.period);
    }

    #[test]
    fn uniform_image_has_no_ridges() {
        let img = Image::<f64>::filled(128, 128, 0.5);
        assert!(matches!(
            estimate_ridge_period(&img, 32),
            Err(Error::NoRidgeStructure { .. })
        ));
    }

    #[test]
    fn scaling_normalizes_period() {
        let img = stripes(320, 320, 18.0, 40.0);
        let (out, params) = scale_to_500ppi(&img, 9.0).unwrap();
        assert_eq!(out.ppi(), Some(500.0));
        assert!((params.s - 0.5).abs() < 0.05);
        let est = estimate_ridge_period(&out, 32).unwrap();
        assert!((est.period - 9.0).abs() <= 0.5, "{}", est.period);
    }

    #[test]
    fn already_normalized_is_near_identity() {
        let img = stripes(256, 256, 9.0, 10.0);
        let (_, params) = scale_to_500ppi(&img, 9.0).unwrap();
        assert!((params.s - 1.0).abs() <= 0.06);
    }

    #[test]
    fn estimation_failure_propagates() {
        let img = Image::<f64>::filled(128, 128, 0.2);
        assert!(scale_to_500ppi(&img, 9.0).is_err());
    }
}
