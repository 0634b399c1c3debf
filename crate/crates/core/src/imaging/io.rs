//! 8-bit PNG / binary PGM loading and saving.

use std::path::Path;

use image::{DynamicImage, ImageFormat, Luma};

use super::Image;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::segmentation::Mask;

fn format_for(path: &Path) -> Result<ImageFormat> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("png") => Ok(ImageFormat::Png),
        Some("pgm") | Some("pnm") => Ok(ImageFormat::Pnm),
        other => Err(Error::Format(format!(
            "unsupported image extension {other:?} (expected png or pgm)"
        ))),
    }
}

/// Luma conversion of an arbitrary decoded image with 0.299/0.587/0.114 weights.
pub fn from_dynamic<T: Real>(img: &DynamicImage) -> Result<Image<T>> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels: Vec<T> = match img {
        DynamicImage::ImageLuma8(g) => g.pixels().map(|p| T::lit(p.0[0] as f64 / 255.0)).collect(),
        DynamicImage::ImageLuma16(g) => g
            .pixels()
            .map(|p| T::lit(p.0[0] as f64 / 65535.0))
            .collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| {
                let [r, g, b] = p.0;
                let l = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
                T::lit((l / 255.0).clamp(0.0, 1.0))
            })
            .collect(),
    };
    Image::new(w, h, pixels)
}

pub fn load_gray<T: Real>(path: impl AsRef<Path>) -> Result<Image<T>> {
    let path = path.as_ref();
    let dynimg = image::open(path)?;
    from_dynamic(&dynimg)
}

fn to_u8<T: Real>(v: T) -> u8 {
    (v.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8
}

pub fn to_luma8<T: Real>(img: &Image<T>) -> image::GrayImage {
    image::GrayImage::from_fn(img.width() as u32, img.height() as u32, |x, y| {
        Luma([to_u8(img.get(x as usize, y as usize))])
    })
}

pub fn save_gray<T: Real>(img: &Image<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let fmt = format_for(path)?;
    to_luma8(img).save_with_format(path, fmt)?;
    Ok(())
}

/// Loads a mask; any nonzero pixel (after luma conversion, >= 0.5) is foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let img: Image<f64> = load_gray(path)?;
    Ok(Mask::from_fn(img.width(), img.height(), |x, y| img.get(x, y) >= 0.5))
}

/// Saves a mask as 0/255.
pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let fmt = format_for(path)?;
    let (w, h) = mask.dims();
    let buf = image::GrayImage::from_fn(w as u32, h as u32, |x, y| {
        Luma([if mask.get(x as usize, y as usize) { 255 } else { 0 }])
    });
    buf.save_with_format(path, fmt)?;
    Ok(())
}
