//! Classical fixed-length texture embedding: per-cell ridge-orientation
//! histograms, local ridge period and Gabor energy on a grid centred on the
//! finger, zero-padded to 512 values and L2-normalized.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::embedding::{Embedding, EMBEDDING_DIM};
use crate::geometry::{dominant_period, x_signature};
use crate::imaging::Image;
use crate::minutiae::{analyze_ridges, ExtractParams, RidgeAnalysis};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextureParams {
    /// Cells per side of the feature grid.
    pub grid: usize,
    /// Cell side in pixels.
    pub cell: usize,
    pub orientation_bins: usize,
    /// Pixel stride when sampling cells.
    pub stride: usize,
    pub orientation_weight: f64,
    pub period_weight: f64,
    pub energy_weight: f64,
    /// Cells with less foreground than this fraction contribute nothing.
    pub min_cell_coverage: f64,
    pub ridge: ExtractParams,
}

impl Default for TextureParams {
    fn default() -> Self {
        Self {
            grid: 6,
            cell: 52,
            orientation_bins: 8,
            stride: 4,
            orientation_weight: 1.0,
            period_weight: 0.3,
            energy_weight: 0.3,
            min_cell_coverage: 0.25,
            ridge: ExtractParams::default(),
        }
    }
}

/// Embedding of a preprocessed image; featureless input yields the flagged
/// uniform embedding.
pub fn extract_texture_embedding(img: &Image<f64>, params: &TextureParams) -> Embedding<f64> {
    let analysis = analyze_ridges(img, &params.ridge);
    texture_from_analysis(analysis.as_ref(), img, params)
}

struct Cell {
    hist: Vec<f64>,
    energy: f64,
    period: f64,
}

pub fn texture_from_analysis(analysis: Option<&RidgeAnalysis>, img: &Image<f64>, p: &TextureParams) -> Embedding<f64> {
    let Some(a) = analysis else {
        return Embedding::uninformative(EMBEDDING_DIM);
    };
    let (w, h) = img.dims();
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for y in 0..h {
        for x in 0..w {
            if a.foreground.get(x, y) {
                sx += x as f64;
                sy += y as f64;
                n += 1.0;
            }
        }
    }
    if n == 0.0 {
        return Embedding::uninformative(EMBEDDING_DIM);
    }
    let span = (p.grid * p.cell) as f64;
    let ox = sx / n - span / 2.0;
    let oy = sy / n - span / 2.0;
    let bins = p.orientation_bins.max(1);
    let stride = p.stride.max(1);
    let samples_per_cell = (p.cell.div_ceil(stride)).pow(2) as f64;

    let mut cells: Vec<Option<Cell>> = Vec::with_capacity(p.grid * p.grid);
    for gy in 0..p.grid {
        for gx in 0..p.grid {
            let x0 = ox + (gx * p.cell) as f64;
            let y0 = oy + (gy * p.cell) as f64;
            let mut hist = vec![0.0; bins];
            let mut energy = 0.0;
            let mut count = 0.0;
            let mut vec2 = [0.0; 2];
            let mut j = 0;
            while j < p.cell {
                let mut i = 0;
                while i < p.cell {
                    let xf = (x0 + i as f64).round();
                    let yf = (y0 + j as f64).round();
                    i += stride;
                    if xf < 0.0 || yf < 0.0 || xf >= w as f64 || yf >= h as f64 {
                        continue;
                    }
                    let (xu, yu) = (xf as usize, yf as usize);
                    if !a.foreground.get(xu, yu) {
                        continue;
                    }
                    let (angle, coh) = a.field.at(xf, yf);
                    let t = angle / PI * bins as f64;
                    let b0 = (t.floor() as usize) % bins;
                    let frac = t - t.floor();
                    hist[b0] += coh * (1.0 - frac);
                    hist[(b0 + 1) % bins] += coh * frac;
                    vec2[0] += coh * (2.0 * angle).cos();
                    vec2[1] += coh * (2.0 * angle).sin();
                    energy += (a.enhanced.get(xu, yu) - 0.5).abs();
                    count += 1.0;
                }
                j += stride;
            }
            if count < p.min_cell_coverage * samples_per_cell {
                cells.push(None);
                continue;
            }
            let axis = 0.5 * vec2[1].atan2(vec2[0]);
            let cx = x0 + p.cell as f64 / 2.0;
            let cy = y0 + p.cell as f64 / 2.0;
            let period = if cx >= 0.0 && cy >= 0.0 && cx < w as f64 && cy < h as f64 {
                let sig = x_signature(img, cx, cy, axis.rem_euclid(PI), p.cell / 2, p.cell / 8);
                dominant_period(&sig).unwrap_or(a.period)
            } else {
                a.period
            };
            cells.push(Some(Cell {
                hist,
                energy: energy / count,
                period,
            }));
        }
    }

    let valid: Vec<&Cell> = cells.iter().flatten().collect();
    if valid.is_empty() {
        return Embedding::uninformative(EMBEDDING_DIM);
    }
    let mean_energy = valid.iter().map(|c| c.energy).sum::<f64>() / valid.len() as f64;
    let scale = 1.0 / (valid.len() as f64).sqrt();
    let mut values = vec![0.0; EMBEDDING_DIM];
    let total = p.grid * p.grid;
    for (ci, cell) in cells.iter().enumerate() {
        let Some(c) = cell else { continue };
        let m = c.hist.iter().sum::<f64>() / bins as f64;
        let centred: Vec<f64> = c.hist.iter().map(|v| v - m).collect();
        let nrm = centred.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm > 1e-12 {
            for (b, v) in centred.iter().enumerate() {
                let idx = ci * bins + b;
                if idx < EMBEDDING_DIM {
                    values[idx] = p.orientation_weight * scale * v / nrm;
                }
            }
        }
        let pi = total * bins + ci;
        if pi < EMBEDDING_DIM {
            values[pi] = p.period_weight * scale * ((c.period - a.period) / a.period).clamp(-0.5, 0.5) * 4.0;
        }
        let ei = total * (bins + 1) + ci;
        if ei < EMBEDDING_DIM && mean_energy > 1e-12 {
            values[ei] = p.energy_weight * scale * ((c.energy - mean_energy) / mean_energy).clamp(-1.0, 1.0);
        }
    }
    Embedding::unit(values).unwrap_or_else(|_| Embedding::uninformative(EMBEDDING_DIM))
}
