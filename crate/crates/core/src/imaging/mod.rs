//! Grayscale raster type and the contrast/normalization primitives applied to
//! contactless captures before geometric correction.

mod clahe;
pub mod io;
mod resize;

pub use clahe::{clahe, clahe_tile_histograms, ClaheParams};
pub use resize::{resize_pad, resize_to, PadRecord, DEFAULT_CANVAS};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::segmentation::Mask;

/// Single-channel raster with intensities in `[0, 1]`.
///
/// Pixels are stored row-major. Pixel `(x, y)` has its center at integer
/// coordinates `(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image<T = f64> {
    width: usize,
    height: usize,
    pixels: Vec<T>,
    ppi: Option<f64>,
}

impl<T: Real> Image<T> {
    /// Builds an image, rejecting empty dimensions and values outside `[0, 1]`.
    pub fn new(width: usize, height: usize, pixels: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::EmptyInput("image has zero area"));
        }
        if pixels.len() != width * height {
            return Err(Error::LengthMismatch {
                expected: width * height,
                actual: pixels.len(),
            });
        }
        if let Some(bad) = pixels
            .iter()
            .find(|v| !(**v >= T::zero() && **v <= T::one()))
        {
            return Err(Error::param(format!("pixel value {bad} outside [0,1]")));
        }
        Ok(Self {
            width,
            height,
            pixels,
            ppi: None,
        })
    }

    /// Constant image. Panics on zero dimensions.
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let value = clamp01(value);
        Self {
            width,
            height,
            pixels: vec![value; width * height],
            ppi: None,
        }
    }

    /// Image from a per-pixel generator; results are clamped into `[0, 1]`.
    /// Panics on zero dimensions.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(clamp01(f(x, y)));
            }
        }
        Self {
            width,
            height,
            pixels,
            ppi: None,
        }
    }

    pub(crate) fn from_raw_clamped(width: usize, height: usize, mut pixels: Vec<T>) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        for p in pixels.iter_mut() {
            *p = clamp01(*p);
        }
        Self {
            width,
            height,
            pixels,
            ppi: None,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    #[inline]
    pub fn ppi(&self) -> Option<f64> {
        self.ppi
    }

    /// Attaches resolution metadata. Non-positive or non-finite values clear it.
    pub fn with_ppi(mut self, ppi: Option<f64>) -> Self {
        self.ppi = ppi.filter(|p| p.is_finite() && *p > 0.0);
        self
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.pixels[y * self.width + x]
    }

    /// Pixel read with zero fill outside the raster.
    #[inline]
    pub fn get_or_zero(&self, x: isize, y: isize) -> T {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            T::zero()
        } else {
            self.pixels[y as usize * self.width + x as usize]
        }
    }

    /// Bilinear interpolation with zero fill outside the raster.
    pub fn sample_bilinear(&self, x: T, y: T) -> T {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (ix, iy) = match (x0.to_isize(), y0.to_isize()) {
            (Some(a), Some(b)) => (a, b),
            _ => return T::zero(),
        };
        let v00 = self.get_or_zero(ix, iy);
        let v10 = self.get_or_zero(ix + 1, iy);
        let v01 = self.get_or_zero(ix, iy + 1);
        let v11 = self.get_or_zero(ix + 1, iy + 1);
        let one = T::one();
        (one - fy) * ((one - fx) * v00 + fx * v10) + fy * ((one - fx) * v01 + fx * v11)
    }

    /// Converts the scalar type, keeping dimensions and metadata.
    pub fn cast<U: Real>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            pixels: self
                .pixels
                .iter()
                .map(|v| clamp01(U::lit(v.as_f64())))
                .collect(),
            ppi: self.ppi,
        }
    }

    /// Mean intensity.
    pub fn mean(&self) -> T {
        self.pixels.iter().copied().sum::<T>() / T::from_usize_lossy(self.pixels.len())
    }

    pub(crate) fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            width: self.width,
            height: self.height,
            pixels: self.pixels.iter().map(|v| clamp01(f(*v))).collect(),
            ppi: self.ppi,
        }
    }
}

#[inline]
pub(crate) fn clamp01<T: Real>(v: T) -> T {
    if v.is_nan() {
        T::zero()
    } else {
        v.max(T::zero()).min(T::one())
    }
}

/// Gray-level inversion: every pixel becomes `1 - v`.
pub fn invert<T: Real>(img: &Image<T>) -> Image<T> {
    img.map(|v| T::one() - v)
}

/// Zeroes every pixel outside the mask.
pub fn apply_mask<T: Real>(img: &Image<T>, mask: &Mask) -> Result<Image<T>> {
    if mask.dims() != img.dims() {
        return Err(Error::DimensionMismatch {
            expected: img.dims(),
            actual: mask.dims(),
        });
    }
    let pixels = img
        .pixels
        .iter()
        .zip(mask.bits())
        .map(|(v, m)| if *m { *v } else { T::zero() })
        .collect();
    Ok(Image {
        width: img.width,
        height: img.height,
        pixels,
        ppi: img.ppi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_rejects_out_of_range() {
        assert!(Image::<f64>::new(2, 1, vec![0.0, 1.5]).is_err());
        assert!(Image::<f64>::new(0, 1, vec![]).is_err());
        assert!(Image::<f64>::new(2, 2, vec![0.0; 3]).is_err());
        assert!(Image::<f32>::new(1, 1, vec![0.5]).is_ok());
    }

    #[test]
    fn invert_values_and_involution() {
        let img = Image::<f64>::new(3, 1, vec![0.0, 0.25, 1.0]).unwrap();
        let inv = invert(&img);
        assert_eq!(inv.pixels(), &[1.0, 0.75, 0.0]);
        let img = Image::<f64>::from_fn(7, 5, |x, y| ((x * 31 + y * 17) % 256) as f64 / 256.0);
        assert_eq!(invert(&invert(&img)), img);
    }

    #[test]
    fn mask_identity_zero_and_checkerboard() {
        let img = Image::<f64>::from_fn(4, 4, |x, y| 0.1 + 0.05 * (x + y) as f64);
        let ones = Mask::filled(4, 4, true);
        let zeros = Mask::filled(4, 4, false);
        assert_eq!(apply_mask(&img, &ones).unwrap(), img);
        assert!(apply_mask(&img, &zeros)
            .unwrap()
            .pixels()
            .iter()
            .all(|v| *v == 0.0));
        let checker = Mask::from_fn(4, 4, |x, y| (x + y) % 2 == 0);
        let out = apply_mask(&img, &checker).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                let expect = if (x + y) % 2 == 0 { img.get(x, y) } else { 0.0 };
                assert_eq!(out.get(x, y), expect);
            }
        }
        // idempotent for a fixed mask
        assert_eq!(apply_mask(&out, &checker).unwrap(), out);
        assert!(apply_mask(&img, &Mask::filled(3, 4, true)).is_err());
    }

    #[test]
    fn bilinear_is_exact_on_grid() {
        let img = Image::<f64>::from_fn(5, 4, |x, y| (x * 4 + y) as f64 / 20.0);
        for y in 0..4 {
            for x in 0..5 {
                assert_eq!(img.sample_bilinear(x as f64, y as f64), img.get(x, y));
            }
        }
        assert_eq!(img.sample_bilinear(-3.0, 1.0), 0.0);
    }
}
