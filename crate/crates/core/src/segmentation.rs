//! Distal-phalange masks: a classical segmenter, the pixel-wise cross-entropy
//! training objective, and overlap scoring.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Image;
use crate::scalar::Real;

/// Binary raster.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                actual: bits.len(),
            });
        }
        Ok(Self { width, height, bits })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Fraction of the raster covered by foreground.
    pub fn coverage(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.bits.len() as f64
        }
    }

    /// Number of 4-connected foreground components.
    pub fn component_count(&self) -> usize {
        label_components(self).1.len()
    }
}

/// Per-pixel foreground probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbMask<T = f64> {
    width: usize,
    height: usize,
    probs: Vec<T>,
}

impl<T: Real> ProbMask<T> {
    pub fn new(width: usize, height: usize, probs: Vec<T>) -> Result<Self> {
        if probs.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                actual: probs.len(),
            });
        }
        if probs.iter().any(|p| !(*p >= T::zero() && *p <= T::one())) {
            return Err(Error::param("probabilities must lie in [0,1]"));
        }
        Ok(Self { width, height, probs })
    }

    pub fn from_mask(mask: &Mask) -> Self {
        Self {
            width: mask.width,
            height: mask.height,
            probs: mask
                .bits
                .iter()
                .map(|b| if *b { T::one() } else { T::zero() })
                .collect(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    /// Thresholds at 0.5.
    pub fn to_mask(&self) -> Mask {
        Mask {
            width: self.width,
            height: self.height,
            bits: self.probs.iter().map(|p| *p >= T::lit(0.5)).collect(),
        }
    }
}

/// Probability clamp used by the cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Reduction {
    #[default]
    Sum,
    Mean,
}

fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            actual: b,
        });
    }
    Ok(())
}

/// Pixel-wise binary cross-entropy between predicted probabilities and a
/// ground-truth mask, summed over pixels (or averaged with [`Reduction::Mean`]).
pub fn seg_bce_loss<T: Real>(pred: &ProbMask<T>, gt: &Mask, reduction: Reduction) -> Result<T> {
    check_dims(gt.dims(), pred.dims())?;
    let eps = T::lit(BCE_EPS);
    let mut total = T::zero();
    for (p, m) in pred.probs.iter().zip(&gt.bits) {
        let p = p.max(eps).min(T::one() - eps);
        total -= if *m { p.ln() } else { (T::one() - p).ln() };
    }
    Ok(match reduction {
        Reduction::Sum => total,
        Reduction::Mean => total / T::from_usize_lossy(gt.bits.len().max(1)),
    })
}

/// Gradient of [`seg_bce_loss`] with respect to each predicted probability.
/// Entries clamped by the epsilon bound have zero gradient.
pub fn seg_bce_grad<T: Real>(pred: &ProbMask<T>, gt: &Mask, reduction: Reduction) -> Result<Vec<T>> {
    check_dims(gt.dims(), pred.dims())?;
    let eps = T::lit(BCE_EPS);
    let scale = match reduction {
        Reduction::Sum => T::one(),
        Reduction::Mean => T::one() / T::from_usize_lossy(gt.bits.len().max(1)),
    };
    Ok(pred
        .probs
        .iter()
        .zip(&gt.bits)
        .map(|(p, m)| {
            if *p < eps || *p > T::one() - eps {
                T::zero()
            } else if *m {
                -scale / *p
            } else {
                scale / (T::one() - *p)
            }
        })
        .collect())
}

/// Intersection over union; two empty masks score 1.
pub fn iou(a: &Mask, b: &Mask) -> Result<f64> {
    check_dims(a.dims(), b.dims())?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (x, y) in a.bits.iter().zip(&b.bits) {
        inter += (*x && *y) as usize;
        union += (*x || *y) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    /// Box-blur radius applied before thresholding.
    pub smooth_radius: usize,
    /// Side of the square closing element.
    pub closing: usize,
    /// Fraction of an elongated component kept from its top edge.
    pub distal_fraction: f64,
    /// Height/width ratio above which a component is treated as a whole
    /// finger and cropped to its distal part.
    pub elongation: f64,
    pub min_coverage: f64,
    pub max_coverage: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            smooth_radius: 2,
            closing: 5,
            distal_fraction: 0.6,
            elongation: 1.5,
            min_coverage: 0.01,
            max_coverage: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub mask: Mask,
    /// Coverage fell outside the plausible range.
    pub low_confidence: bool,
}

fn box_blur(img: &Image<f64>, r: usize) -> Vec<f64> {
    let (w, h) = img.dims();
    let src = img.pixels();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            let s: f64 = src[y * w + lo..=y * w + hi].iter().sum();
            tmp[y * w + x] = s / (hi - lo + 1) as f64;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            let mut s = 0.0;
            for yy in lo..=hi {
                s += tmp[yy * w + x];
            }
            out[y * w + x] = s / (hi - lo + 1) as f64;
        }
    }
    out
}

/// Otsu threshold over 256 bins. Returns the threshold and the between-class
/// share of the total variance.
fn otsu(values: &[f64]) -> Option<(f64, f64)> {
    let mut hist = [0usize; 256];
    for v in values {
        hist[((v * 255.0).round() as usize).min(255)] += 1;
    }
    let n = values.len() as f64;
    let total_mean: f64 = hist.iter().enumerate().map(|(i, c)| i as f64 * *c as f64).sum::<f64>() / n;
    let total_var: f64 = hist
        .iter()
        .enumerate()
        .map(|(i, c)| (i as f64 - total_mean).powi(2) * *c as f64)
        .sum::<f64>()
        / n;
    if total_var < 1e-9 {
        return None;
    }
    let (mut w0, mut sum0) = (0.0, 0.0);
    let mut best = (0usize, -1.0);
    for (t, c) in hist.iter().enumerate().take(255) {
        w0 += *c as f64;
        sum0 += t as f64 * *c as f64;
        let w1 = n - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let m0 = sum0 / w0;
        let m1 = (total_mean * n - sum0) / w1;
        let between = w0 * w1 * (m0 - m1).powi(2) / (n * n);
        if between > best.1 {
            best = (t, between);
        }
    }
    if best.1 < 0.0 {
        return None;
    }
    Some(((best.0 as f64 + 0.5) / 255.0, best.1 / total_var))
}

fn morph(mask: &Mask, k: usize, dilate: bool) -> Mask {
    if k <= 1 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    let r = k / 2;
    let pass = |src: &[bool], horizontal: bool| -> Vec<bool> {
        let mut out = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                let (lo, hi, fixed) = if horizontal {
                    (x.saturating_sub(r), (x + r).min(w - 1), y)
                } else {
                    (y.saturating_sub(r), (y + r).min(h - 1), x)
                };
                let mut it = (lo..=hi).map(|i| {
                    if horizontal {
                        src[fixed * w + i]
                    } else {
                        src[i * w + fixed]
                    }
                });
                out[y * w + x] = if dilate { it.any(|b| b) } else { it.all(|b| b) };
            }
        }
        out
    };
    let a = pass(&mask.bits, true);
    let b = pass(&a, false);
    Mask { width: w, height: h, bits: b }
}

/// Labels 4-connected components; returns per-pixel labels (0 = background)
/// and component sizes (index `i` holds label `i + 1`).
fn label_components(mask: &Mask) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if mask.bits[j] && labels[j] == 0 {
                    labels[j] = label;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

/// Keeps the largest 4-connected component (first in scan order on ties).
pub fn largest_component(mask: &Mask) -> Mask {
    let (labels, sizes) = label_components(mask);
    let best = sizes
        .iter()
        .enumerate()
        .fold(None, |acc: Option<(usize, usize)>, (i, s)| match acc {
            Some((_, bs)) if bs >= *s => acc,
            _ => Some((i, *s)),
        });
    let (w, h) = mask.dims();
    match best {
        None => Mask::filled(w, h, false),
        Some((i, _)) => Mask {
            width: w,
            height: h,
            bits: labels.iter().map(|l| *l == i as u32 + 1).collect(),
        },
    }
}

/// Classical distal-phalange segmenter for bright fingers on darker backgrounds.
pub fn segment_distal(img: &Image<f64>, params: &SegmentParams) -> Result<Segmentation> {
    let (w, h) = img.dims();
    let smooth = box_blur(img, params.smooth_radius);
    let (lo, hi) = smooth
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(*v), b.max(*v)));
    if hi - lo < 1e-6 {
        return Err(Error::SegmentationFailed("image has no intensity variation".into()));
    }
    let norm: Vec<f64> = smooth.iter().map(|v| (v - lo) / (hi - lo)).collect();
    let (threshold, separability) = otsu(&norm)
        .ok_or_else(|| Error::SegmentationFailed("no separable foreground".into()))?;
    if separability < 0.3 {
        return Err(Error::SegmentationFailed(format!(
            "foreground/background separability {separability:.3} too low"
        )));
    }
    let raw = Mask {
        width: w,
        height: h,
        bits: norm.iter().map(|v| *v > threshold).collect(),
    };
    let closed = morph(&morph(&raw, params.closing, true), params.closing, false);
    let mut mask = largest_component(&closed);

    // crop elongated (whole-finger) components to the distal segment
    let rows: Vec<usize> = (0..h).filter(|y| (0..w).any(|x| mask.get(x, *y))).collect();
    if let (Some(&top), Some(&bottom)) = (rows.first(), rows.last()) {
        let height = (bottom - top + 1) as f64;
        let widest = (top..=bottom)
            .map(|y| (0..w).filter(|x| mask.get(*x, y)).count())
            .max()
            .unwrap_or(0) as f64;
        if widest > 0.0 && height / widest >= params.elongation {
            let cut = top + (params.distal_fraction.clamp(0.0, 1.0) * height).ceil() as usize;
            for y in cut.min(h)..h {
                for x in 0..w {
                    mask.bits[y * w + x] = false;
                }
            }
            mask = largest_component(&mask);
        }
    }
    if mask.count() == 0 {
        return Err(Error::SegmentationFailed("empty foreground component".into()));
    }
    let cov = mask.coverage();
    Ok(Segmentation {
        low_confidence: cov < params.min_coverage || cov > params.max_coverage,
        mask,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ellipse(w: usize, h: usize, cx: f64, cy: f64, ax: f64, ay: f64) -> Mask {
        Mask::from_fn(w, h, |x, y| {
            let dx = (x as f64 - cx) / ax;
            let dy = (y as f64 - cy) / ay;
            dx * dx + dy * dy <= 1.0
        })
    }

    #[test]
    fn iou_examples() {
        let a = Mask::from_fn(30, 30, |x, y| x < 10 && y < 10);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        let b = Mask::from_fn(30, 30, |x, y| x >= 20 && y >= 20);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
        let outer = Mask::from_fn(30, 30, |x, y| x < 10 && y < 20);
        assert_eq!(iou(&a, &outer).unwrap(), 0.5);
        let e = Mask::filled(30, 30, false);
        assert_eq!(iou(&e, &e).unwrap(), 1.0);
        assert!(iou(&a, &Mask::filled(3, 3, false)).is_err());
    }

    #[test]
    fn bce_closed_forms() {
        let gt = Mask::from_fn(6, 5, |x, y| (x * y) % 3 == 0);
        let half = ProbMask::new(6, 5, vec![0.5f64; 30]).unwrap();
        let l = seg_bce_loss(&half, &gt, Reduction::Sum).unwrap();
        assert!((l - 30.0 * std::f64::consts::LN_2).abs() < 1e-12);
        let lm = seg_bce_loss(&half, &gt, Reduction::Mean).unwrap();
        assert!((lm - std::f64::consts::LN_2).abs() < 1e-12);
        let perfect = ProbMask::<f64>::from_mask(&gt);
        let lp = seg_bce_loss(&perfect, &gt, Reduction::Sum).unwrap();
        assert!(lp >= 0.0 && lp < 30.0 * 2e-7);
        assert!(seg_bce_loss(&half, &Mask::filled(5, 6, true), Reduction::Sum).is_err());
    }

    #[test]
    fn bce_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let probs: Vec<f64> = (0..16).map(|_| rng.gen_range(0.01..0.99)).collect();
        let bits: Vec<bool> = (0..16).map(|_| rng.gen_bool(0.5)).collect();
        let gt = Mask::new(4, 4, bits.clone()).unwrap();
        let pred = ProbMask::new(4, 4, probs.clone()).unwrap();
        let mut naive = 0.0;
        for i in 0..16 {
            let m = if bits[i] { 1.0 } else { 0.0 };
            naive += -(m * probs[i].ln() + (1.0 - m) * (1.0 - probs[i]).ln());
        }
        let got = seg_bce_loss(&pred, &gt, Reduction::Sum).unwrap();
        assert!((got - naive).abs() < 1e-12);
    }

    #[test]
    fn bce_minimized_at_ground_truth() {
        let gt = Mask::from_fn(3, 3, |x, y| x == y);
        let best = seg_bce_loss(&ProbMask::<f64>::from_mask(&gt), &gt, Reduction::Sum).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let mut p: Vec<f64> = gt.bits().iter().map(|b| if *b { 1.0 } else { 0.0 }).collect();
            let i = rng.gen_range(0..9);
            p[i] = if gt.bits()[i] { 1.0 - rng.gen_range(1e-4..0.5) } else { rng.gen_range(1e-4..0.5) };
            let l = seg_bce_loss(&ProbMask::new(3, 3, p).unwrap(), &gt, Reduction::Sum).unwrap();
            assert!(l > best);
        }
    }

    #[test]
    fn segments_synthetic_blob() {
        let truth = ellipse(200, 240, 100.0, 120.0, 60.0, 80.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let img = Image::from_fn(200, 240, |x, y| {
            let base = if truth.get(x, y) { 0.7 } else { 0.15 };
            base + rng.gen_range(-0.08..0.08)
        });
        let seg = segment_distal(&img, &SegmentParams::default()).unwrap();
        assert!(!seg.low_confidence);
        assert_eq!(seg.mask.component_count(), 1);
        assert!(iou(&seg.mask, &truth).unwrap() >= 0.9);
    }

    #[test]
    fn uniform_image_fails() {
        let img = Image::<f64>::filled(64, 64, 0.4);
        assert!(matches!(
            segment_distal(&img, &SegmentParams::default()),
            Err(Error::SegmentationFailed(_))
        ));
    }

    #[test]
    fn keeps_only_largest_blob() {
        let big = ellipse(200, 200, 70.0, 100.0, 40.0, 50.0);
        let small = ellipse(200, 200, 160.0, 60.0, 15.0, 15.0);
        let img = Image::from_fn(200, 200, |x, y| {
            if big.get(x, y) || small.get(x, y) {
                0.8
            } else {
                0.1
            }
        });
        let seg = segment_distal(&img, &SegmentParams::default()).unwrap();
        assert_eq!(seg.mask.component_count(), 1);
        assert!(iou(&seg.mask, &big).unwrap() > 0.9);
        assert!(!seg.mask.get(160, 60));
    }

    #[test]
    fn elongated_finger_is_cropped_to_distal_part() {
        let finger = ellipse(200, 400, 100.0, 200.0, 50.0, 180.0);
        let img = Image::from_fn(200, 400, |x, y| if finger.get(x, y) { 0.8 } else { 0.1 });
        let seg = segment_distal(&img, &SegmentParams::default()).unwrap();
        assert!(seg.mask.get(100, 60));
        assert!(!seg.mask.get(100, 330));
        assert_eq!(seg.mask.component_count(), 1);
    }
}
