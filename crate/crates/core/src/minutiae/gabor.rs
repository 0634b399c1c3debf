//! Orientation-adaptive even-symmetric Gabor filtering.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::orientation::OrientationField;
use crate::geometry::{MAX_PERIOD, MIN_PERIOD};
use crate::imaging::Image;

const ORIENTATION_BINS: usize = 36;

struct Kernel {
    radius: usize,
    taps: Vec<f64>,
}

fn kernel(angle: f64, period: f64) -> Kernel {
    let sigma_across = 0.45 * period;
    let sigma_along = 0.55 * period;
    let radius = (2.5 * sigma_along).ceil() as usize;
    let side = 2 * radius + 1;
    let (s, c) = angle.sin_cos();
    let mut taps = Vec::with_capacity(side * side);
    for j in 0..side {
        for i in 0..side {
            let x = i as f64 - radius as f64;
            let y = j as f64 - radius as f64;
            let along = x * c + y * s;
            let across = -x * s + y * c;
            let env = (-0.5 * (across * across / (sigma_across * sigma_across) + along * along / (sigma_along * sigma_along))).exp();
            taps.push(env * (2.0 * PI * across / period).cos());
        }
    }
    // zero DC so flat regions give no response
    let mean = taps.iter().sum::<f64>() / taps.len() as f64;
    taps.iter_mut().for_each(|t| *t -= mean);
    let norm: f64 = taps.iter().map(|t| t.abs()).sum();
    taps.iter_mut().for_each(|t| *t /= norm);
    Kernel { radius, taps }
}

/// Filters every pixel with a Gabor kernel tuned to the local orientation and
/// the given ridge period, then maps responses to `[0, 1]` around 0.5 using the
/// 99th percentile of absolute response. Borders replicate edge pixels.
pub fn gabor_enhance(img: &Image<f64>, of: &OrientationField, period: f64) -> Image<f64> {
    let period = period.clamp(MIN_PERIOD, MAX_PERIOD);
    let (w, h) = img.dims();
    let kernels: Vec<Kernel> = (0..ORIENTATION_BINS)
        .map(|b| kernel(b as f64 * PI / ORIENTATION_BINS as f64, period))
        .collect();
    let px = img.pixels();
    let response: Vec<f64> = (0..h)
        .into_par_iter()
        .flat_map_iter(|y| {
            let kernels = &kernels;
            (0..w).map(move |x| {
                let (angle, _) = of.at(x as f64, y as f64);
                let bin = ((angle / PI * ORIENTATION_BINS as f64).round() as usize) % ORIENTATION_BINS;
                let k = &kernels[bin];
                let r = k.radius as isize;
                let side = 2 * k.radius + 1;
                let mut acc = 0.0;
                for j in 0..side {
                    let yy = (y as isize + j as isize - r).clamp(0, h as isize - 1) as usize;
                    let row = &px[yy * w..(yy + 1) * w];
                    let taps = &k.taps[j * side..(j + 1) * side];
                    let xs = x as isize - r;
                    if xs >= 0 && xs as usize + side <= w {
                        let seg = &row[xs as usize..xs as usize + side];
                        acc += seg.iter().zip(taps).map(|(a, b)| a * b).sum::<f64>();
                    } else {
                        for (i, t) in taps.iter().enumerate() {
                            let xx = (xs + i as isize).clamp(0, w as isize - 1) as usize;
                            acc += row[xx] * t;
                        }
                    }
                }
                acc
            })
        })
        .collect();
    let mut mags: Vec<f64> = response.iter().map(|r| r.abs()).collect();
    let idx = ((mags.len() as f64 * 0.99) as usize).min(mags.len() - 1);
    let (_, p99, _) = mags.select_nth_unstable_by(idx, |a, b| a.total_cmp(b));
    let scale = *p99;
    let pixels = if scale < 1e-12 {
        vec![0.5; w * h]
    } else {
        response
            .iter()
            .map(|r| (0.5 + 0.5 * r / scale).clamp(0.0, 1.0))
            .collect()
    };
    Image::new(w, h, pixels).expect("values clamped").with_ppi(img.ppi())
}
