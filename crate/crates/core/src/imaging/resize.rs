use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Side of the square working canvas.
pub const DEFAULT_CANVAS: usize = 480;

/// Records how an image was placed on the square canvas so canvas
/// coordinates can be mapped back to the source raster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PadRecord {
    /// Nominal isotropic scale (`target / longer side`).
    pub scale_factor: f64,
    pub pad_left: usize,
    pub pad_top: usize,
    pub pad_right: usize,
    pub pad_bottom: usize,
    pub source_width: usize,
    pub source_height: usize,
}

impl PadRecord {
    pub fn content_width(&self, out_w: usize) -> usize {
        out_w - self.pad_left - self.pad_right
    }

    pub fn content_height(&self, out_h: usize) -> usize {
        out_h - self.pad_top - self.pad_bottom
    }

    /// Input dimensions recovered from the output dimensions.
    pub fn source_dims(&self, out_w: usize, out_h: usize) -> (usize, usize) {
        debug_assert!(self.content_width(out_w) > 0 && self.content_height(out_h) > 0);
        (self.source_width, self.source_height)
    }

    /// Canvas coordinate -> source coordinate (pixel-center convention).
    pub fn to_source(&self, x: f64, y: f64, out_w: usize, out_h: usize) -> (f64, f64) {
        let sx = self.content_width(out_w) as f64 / self.source_width as f64;
        let sy = self.content_height(out_h) as f64 / self.source_height as f64;
        (
            (x - self.pad_left as f64 + 0.5) / sx - 0.5,
            (y - self.pad_top as f64 + 0.5) / sy - 0.5,
        )
    }

    /// Source coordinate -> canvas coordinate.
    pub fn to_canvas(&self, x: f64, y: f64, out_w: usize, out_h: usize) -> (f64, f64) {
        let sx = self.content_width(out_w) as f64 / self.source_width as f64;
        let sy = self.content_height(out_h) as f64 / self.source_height as f64;
        (
            (x + 0.5) * sx - 0.5 + self.pad_left as f64,
            (y + 0.5) * sy - 0.5 + self.pad_top as f64,
        )
    }
}

/// Separable triangle-filter resampling; the filter support widens when
/// downscaling so the result is antialiased.
fn resample_axis<T: Real>(src: &[T], len: usize, stride_count: usize, new_len: usize, along_rows: bool) -> Vec<T> {
    // along_rows: src is laid out as stride_count rows of `len` samples
    let scale = new_len as f64 / len as f64;
    let support = if scale < 1.0 { 1.0 / scale } else { 1.0 };
    let mut weights: Vec<Vec<(usize, f64)>> = Vec::with_capacity(new_len);
    for o in 0..new_len {
        let center = (o as f64 + 0.5) / scale - 0.5;
        let lo = (center - support).floor().max(0.0) as isize;
        let hi = ((center + support).ceil() as isize).min(len as isize - 1);
        let mut ws = Vec::new();
        let mut total = 0.0;
        for i in lo..=hi {
            let w = 1.0 - ((i as f64 - center).abs() / support);
            if w > 0.0 {
                ws.push((i as usize, w));
                total += w;
            }
        }
        if ws.is_empty() {
            let i = center.round().clamp(0.0, (len - 1) as f64) as usize;
            ws.push((i, 1.0));
            total = 1.0;
        }
        for w in ws.iter_mut() {
            w.1 /= total;
        }
        weights.push(ws);
    }
    let mut out = vec![T::zero(); new_len * stride_count];
    for s in 0..stride_count {
        for (o, ws) in weights.iter().enumerate() {
            let mut acc = 0.0;
            for &(i, w) in ws {
                let idx = if along_rows { s * len + i } else { i * stride_count + s };
                acc += w * src[idx].as_f64();
            }
            let idx = if along_rows { s * new_len + o } else { o * stride_count + s };
            out[idx] = T::lit(acc);
        }
    }
    out
}

/// Resamples an image to exactly `new_w` x `new_h`.
pub fn resize_to<T: Real>(img: &Image<T>, new_w: usize, new_h: usize) -> Result<Image<T>> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::param("target dimensions must be positive"));
    }
    if img.dims() == (new_w, new_h) {
        return Ok(img.clone());
    }
    let (w, h) = img.dims();
    let rows = resample_axis(img.pixels(), w, h, new_w, true);
    let cols = resample_axis(&rows, h, new_w, new_h, false);
    Ok(Image::from_raw_clamped(new_w, new_h, cols).with_ppi(img.ppi()))
}

/// Scales the image isotropically so its longer side equals `target`, then
/// centers it on a `target` x `target` canvas padded with zeros.
pub fn resize_pad<T: Real>(img: &Image<T>, target: usize) -> Result<(Image<T>, PadRecord)> {
    if target == 0 {
        return Err(Error::param("target must be at least 1"));
    }
    let (w, h) = img.dims();
    if w == 0 || h == 0 {
        return Err(Error::EmptyInput("zero-area image"));
    }
    let scale = target as f64 / w.max(h) as f64;
    let cw = ((w as f64 * scale).round() as usize).clamp(1, target);
    let ch = ((h as f64 * scale).round() as usize).clamp(1, target);
    let content = resize_to(img, cw, ch)?;
    let pad_left = (target - cw) / 2;
    let pad_top = (target - ch) / 2;
    let record = PadRecord {
        scale_factor: scale,
        pad_left,
        pad_top,
        pad_right: target - cw - pad_left,
        pad_bottom: target - ch - pad_top,
        source_width: w,
        source_height: h,
    };
    let mut pixels = vec![T::zero(); target * target];
    for y in 0..ch {
        let row = &content.pixels()[y * cw..(y + 1) * cw];
        let start = (y + pad_top) * target + pad_left;
        pixels[start..start + cw].copy_from_slice(row);
    }
    let ppi = img.ppi().map(|p| p * scale);
    Ok((Image::from_raw_clamped(target, target, pixels).with_ppi(ppi), record))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn portrait_aspect_arithmetic() {
        let img = Image::<f64>::filled(900, 1200, 0.5);
        let (out, rec) = resize_pad(&img, 480).unwrap();
        assert_eq!(out.dims(), (480, 480));
        assert_eq!(rec.content_width(480), 360);
        assert_eq!(rec.content_height(480), 480);
        assert_eq!((rec.pad_left, rec.pad_right), (60, 60));
        assert_eq!((rec.pad_top, rec.pad_bottom), (0, 0));
        assert_eq!(out.get(10, 240), 0.0);
        assert!((out.get(240, 240) - 0.5).abs() < 1e-12);
        assert_eq!(rec.source_dims(480, 480), (900, 1200));
    }

    #[test]
    fn square_target_is_unchanged() {
        let img = Image::<f64>::from_fn(480, 480, |x, y| ((x ^ y) & 255) as f64 / 255.0);
        let (out, rec) = resize_pad(&img, 480).unwrap();
        assert_eq!(out, img);
        assert_eq!(
            (rec.pad_left, rec.pad_top, rec.pad_right, rec.pad_bottom),
            (0, 0, 0, 0)
        );
    }

    #[test]
    fn corners_round_trip_within_half_pixel() {
        for &(w, h) in &[(900usize, 1200usize), (901, 1203), (640, 333), (37, 1000), (1, 3)] {
            let img = Image::<f64>::filled(w, h, 0.2);
            let (out, rec) = resize_pad(&img, 480).unwrap();
            let (ow, oh) = out.dims();
            let cw = rec.content_width(ow) as f64;
            let chh = rec.content_height(oh) as f64;
            let corners_out = [
                (rec.pad_left as f64 - 0.5, rec.pad_top as f64 - 0.5),
                (rec.pad_left as f64 + cw - 0.5, rec.pad_top as f64 + chh - 0.5),
            ];
            let corners_in = [(-0.5, -0.5), (w as f64 - 0.5, h as f64 - 0.5)];
            for (co, ci) in corners_out.iter().zip(&corners_in) {
                let (sx, sy) = rec.to_source(co.0, co.1, ow, oh);
                assert!((sx - ci.0).abs() <= 0.5 && (sy - ci.1).abs() <= 0.5);
            }
            // interior points round-trip exactly through both directions
            let (cx, cy) = rec.to_canvas(w as f64 / 3.0, h as f64 / 2.0, ow, oh);
            let (bx, by) = rec.to_source(cx, cy, ow, oh);
            assert!((bx - w as f64 / 3.0).abs() < 1e-9 && (by - h as f64 / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn downscale_preserves_mean() {
        let img = Image::<f64>::from_fn(300, 200, |x, y| ((x / 3 + y / 5) % 2) as f64);
        let out = resize_to(&img, 120, 80).unwrap();
        assert!((out.mean() - img.mean()).abs() < 0.02);
    }

    #[test]
    fn zero_target_rejected() {
        let img = Image::<f64>::filled(4, 4, 0.0);
        assert!(resize_pad(&img, 0).is_err());
    }
}
