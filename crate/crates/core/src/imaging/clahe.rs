use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{Error, Result};
use crate::scalar::Real;

const BINS: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaheParams {
    /// Clip limit in units of the mean bin height. `f64::INFINITY` disables clipping.
    pub clip_limit: f64,
    pub tiles_x: usize,
    pub tiles_y: usize,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            clip_limit: 2.0,
            tiles_x: 8,
            tiles_y: 8,
        }
    }
}

#[inline]
fn bin_of<T: Real>(v: T) -> usize {
    let b = (v.as_f64() * (BINS - 1) as f64).round();
    (b.max(0.0) as usize).min(BINS - 1)
}

/// Tile geometry: `tiles` contiguous spans covering `len` pixels.
fn spans(len: usize, tiles: usize) -> Vec<(usize, usize)> {
    (0..tiles)
        .map(|t| (t * len / tiles, (t + 1) * len / tiles))
        .collect()
}

fn validate<T: Real>(img: &Image<T>, p: &ClaheParams) -> Result<(usize, usize)> {
    if !(p.clip_limit > 0.0) {
        return Err(Error::param("clip limit must be positive"));
    }
    if p.tiles_x == 0 || p.tiles_y == 0 {
        return Err(Error::param("tile grid must be at least 1x1"));
    }
    // more tiles than pixels collapses to one pixel per tile
    Ok((p.tiles_x.min(img.width()), p.tiles_y.min(img.height())))
}

/// Clips `hist` at `limit` and redistributes the excess over bins still below
/// the limit, never pushing a bin above it. Mass that cannot be placed is dropped.
fn clip_histogram(hist: &mut [f64], limit: f64) {
    if !limit.is_finite() {
        return;
    }
    let mut excess: f64 = hist
        .iter_mut()
        .map(|h| {
            let over = (*h - limit).max(0.0);
            *h -= over;
            over
        })
        .sum();
    while excess > 1e-9 {
        let room: Vec<usize> = (0..hist.len()).filter(|&i| hist[i] < limit).collect();
        if room.is_empty() {
            break;
        }
        let share = excess / room.len() as f64;
        let mut placed = 0.0;
        for &i in &room {
            let add = share.min(limit - hist[i]);
            hist[i] += add;
            placed += add;
        }
        excess -= placed;
        if placed <= 1e-12 {
            break;
        }
    }
}

/// Clipped histograms per tile, row-major over the tile grid.
pub fn clahe_tile_histograms<T: Real>(img: &Image<T>, params: &ClaheParams) -> Result<Vec<Vec<f64>>> {
    let (tx, ty) = validate(img, params)?;
    let xs = spans(img.width(), tx);
    let ys = spans(img.height(), ty);
    let mut out = Vec::with_capacity(tx * ty);
    for &(y0, y1) in &ys {
        for &(x0, x1) in &xs {
            let mut hist = vec![0.0; BINS];
            for y in y0..y1 {
                for x in x0..x1 {
                    hist[bin_of(img.get(x, y))] += 1.0;
                }
            }
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            clip_histogram(&mut hist, params.clip_limit * n / BINS as f64);
            out.push(hist);
        }
    }
    Ok(out)
}

/// Per-tile intensity mapping. `None` marks a tile with a single occupied
/// level, which is left untouched.
fn tile_mapping(original_min_bin: usize, clipped: &[f64]) -> Option<Vec<f64>> {
    let mut cdf = vec![0.0; BINS];
    let mut acc = 0.0;
    for (c, h) in cdf.iter_mut().zip(clipped) {
        acc += h;
        *c = acc;
    }
    let total = acc;
    let base = cdf[original_min_bin];
    let denom = total - base;
    if denom <= 1e-12 {
        return None;
    }
    Some(cdf.iter().map(|c| ((c - base) / denom).clamp(0.0, 1.0)).collect())
}

/// Contrast-limited adaptive histogram equalization with bilinear blending of
/// the per-tile mappings between tile centers.
pub fn clahe<T: Real>(img: &Image<T>, params: &ClaheParams) -> Result<Image<T>> {
    let (tx, ty) = validate(img, params)?;
    let xs = spans(img.width(), tx);
    let ys = spans(img.height(), ty);
    let hists = clahe_tile_histograms(img, params)?;

    let mut maps = Vec::with_capacity(tx * ty);
    for (ti, hist) in hists.iter().enumerate() {
        let (x0, x1) = xs[ti % tx];
        let (y0, y1) = ys[ti / tx];
        let mut min_bin = BINS - 1;
        let mut max_bin = 0;
        for y in y0..y1 {
            for x in x0..x1 {
                let b = bin_of(img.get(x, y));
                min_bin = min_bin.min(b);
                max_bin = max_bin.max(b);
            }
        }
        // a single occupied level carries no contrast to stretch
        maps.push(if min_bin == max_bin { None } else { tile_mapping(min_bin, hist) });
    }

    let centers = |sp: &[(usize, usize)]| -> Vec<f64> {
        sp.iter().map(|&(a, b)| (a + b - 1) as f64 / 2.0).collect()
    };
    let cx = centers(&xs);
    let cy = centers(&ys);
    // index of the lower tile center and the blend weight toward the next one
    let locate = |c: &[f64], p: f64| -> (usize, usize, f64) {
        if p <= c[0] {
            return (0, 0, 0.0);
        }
        let last = c.len() - 1;
        if p >= c[last] {
            return (last, last, 0.0);
        }
        let i = c.partition_point(|v| *v <= p) - 1;
        (i, i + 1, (p - c[i]) / (c[i + 1] - c[i]))
    };

    let apply = |tile: usize, v: T, b: usize| -> f64 {
        match &maps[tile] {
            Some(m) => m[b],
            None => v.as_f64(),
        }
    };

    let w = img.width();
    let mut pixels = Vec::with_capacity(w * img.height());
    for y in 0..img.height() {
        let (j0, j1, fy) = locate(&cy, y as f64);
        for x in 0..w {
            let (i0, i1, fx) = locate(&cx, x as f64);
            let v = img.get(x, y);
            let b = bin_of(v);
            let a = apply(j0 * tx + i0, v, b);
            let bb = apply(j0 * tx + i1, v, b);
            let c = apply(j1 * tx + i0, v, b);
            let d = apply(j1 * tx + i1, v, b);
            let out = if a == bb && a == c && a == d {
                a
            } else {
                (1.0 - fy) * ((1.0 - fx) * a + fx * bb) + fy * ((1.0 - fx) * c + fx * d)
            };
            pixels.push(if a == v.as_f64() && out == a { v } else { T::lit(out) });
        }
    }
    Ok(Image::from_raw_clamped(w, img.height(), pixels).with_ppi(img.ppi()))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain single-histogram equalization, written independently of the tiled path.
    fn reference_equalize(img: &Image<f64>) -> Vec<f64> {
        let q: Vec<usize> = img
            .pixels()
            .iter()
            .map(|v| ((v * 255.0).round() as usize).min(255))
            .collect();
        let mut counts = [0usize; 256];
        for &b in &q {
            counts[b] += 1;
        }
        let lo = q.iter().copied().min().unwrap();
        let cdf_lo: usize = counts[..=lo].iter().sum();
        let n = q.len();
        q.iter()
            .map(|&b| {
                let c: usize = counts[..=b].iter().sum();
                (c - cdf_lo) as f64 / (n - cdf_lo) as f64
            })
            .collect()
    }

    fn textured(w: usize, h: usize) -> Image<f64> {
        Image::from_fn(w, h, |x, y| {
            let v = ((x * 7 + y * 13) % 37) as f64 / 60.0 + 0.1 * ((x as f64 * 0.3).sin() + 1.0);
            v
        })
    }

    #[test]
    fn constant_image_is_unchanged() {
        for v in [0.0, 0.3, 0.77, 1.0] {
            let img = Image::<f64>::filled(33, 21, v);
            let out = clahe(&img, &ClaheParams::default()).unwrap();
            assert_eq!(out, img);
        }
    }

    #[test]
    fn single_tile_without_clipping_is_plain_equalization() {
        let img = textured(40, 30);
        let params = ClaheParams {
            clip_limit: f64::INFINITY,
            tiles_x: 1,
            tiles_y: 1,
        };
        let out = clahe(&img, &params).unwrap();
        let reference = reference_equalize(&img);
        for (a, b) in out.pixels().iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn output_range_and_tile_clip_limit() {
        let img = textured(64, 48);
        let params = ClaheParams::default();
        let out = clahe(&img, &params).unwrap();
        assert_eq!(out.dims(), img.dims());
        assert!(out.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
        let hists = clahe_tile_histograms(&img, &params).unwrap();
        let xs = spans(64, 8);
        let ys = spans(48, 8);
        for (t, h) in hists.iter().enumerate() {
            let (x0, x1) = xs[t % 8];
            let (y0, y1) = ys[t / 8];
            let limit = params.clip_limit * ((x1 - x0) * (y1 - y0)) as f64 / 256.0;
            assert!(h.iter().all(|b| *b <= limit + 1e-9));
        }
    }

    #[test]
    fn rejects_bad_params() {
        let img = textured(8, 8);
        let mut p = ClaheParams::default();
        p.clip_limit = 0.0;
        assert!(clahe(&img, &p).is_err());
        p.clip_limit = 2.0;
        p.tiles_x = 0;
        assert!(clahe(&img, &p).is_err());
    }

    #[test]
    fn increases_contrast_of_low_contrast_stripes() {
        let img = Image::<f64>::from_fn(64, 64, |x, _| 0.45 + 0.05 * (x as f64 * 0.7).sin());
        let out = clahe(&img, &ClaheParams::default()).unwrap();
        let spread = |im: &Image<f64>| {
            let (lo, hi) = im
                .pixels()
                .iter()
                .fold((1.0f64, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
            hi - lo
        };
        assert!(spread(&out) > 2.0 * spread(&img));
    }

    #[test]
    fn works_for_f32() {
        let img = textured(16, 16).cast::<f32>();
        let out = clahe(&img, &ClaheParams::default()).unwrap();
        assert!(out.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
