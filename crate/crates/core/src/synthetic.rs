//! Synthetic fingerprints: a phase-field master print rendered as a clean
//! contact impression, and a geometrically and photometrically degraded
//! contactless surrogate of the same finger.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{warp_source_coords, AffineParams, TpsField, WarpParams, DEFAULT_GRID};
use crate::imaging::Image;
use crate::segmentation::Mask;

/// Phase singularity: each one creates a ridge ending or bifurcation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Singularity {
    pub x: f64,
    pub y: f64,
    /// `+1` or `-1`.
    pub sign: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterParams {
    pub size: usize,
    pub period: (f64, f64),
    pub singularities: (usize, usize),
    pub semi_axis_x: (f64, f64),
    pub semi_axis_y: (f64, f64),
    /// Distance of the ridge-flow centre from the print centre.
    pub flow_offset: (f64, f64),
    pub min_separation: f64,
}

impl Default for MasterParams {
    fn default() -> Self {
        Self {
            size: 480,
            period: (8.6, 9.4),
            singularities: (22, 34),
            semi_axis_x: (125.0, 145.0),
            semi_axis_y: (155.0, 180.0),
            flow_offset: (0.0, 320.0),
            min_separation: 26.0,
        }
    }
}

/// Ridge phase `|p - c| / T + sum_i sign_i * atan2(p - p_i) / 2pi` inside an ellipse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterPrint {
    pub width: usize,
    pub height: usize,
    pub period: f64,
    pub flow_center: [f64; 2],
    pub phase_offset: f64,
    pub singularities: Vec<Singularity>,
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
}

fn sample(rng: &mut impl Rng, r: (f64, f64)) -> f64 {
    if r.1 > r.0 {
        rng.gen_range(r.0..r.1)
    } else {
        r.0
    }
}

impl MasterPrint {
    pub fn random(rng: &mut impl Rng, p: &MasterParams) -> Self {
        let size = p.size as f64;
        let center = [
            size / 2.0 + rng.gen_range(-10.0..10.0),
            size / 2.0 + rng.gen_range(-10.0..10.0),
        ];
        let semi_axes = [sample(rng, p.semi_axis_x), sample(rng, p.semi_axis_y)];
        let a = rng.gen_range(0.0..TAU);
        let d = sample(rng, p.flow_offset);
        let flow_center = [center[0] + d * a.cos(), center[1] + d * a.sin()];
        let target = if p.singularities.1 > p.singularities.0 {
            rng.gen_range(p.singularities.0..=p.singularities.1)
        } else {
            p.singularities.0
        };
        let mut singularities: Vec<Singularity> = Vec::with_capacity(target);
        let mut attempts = 0;
        while singularities.len() < target && attempts < 20 * target + 100 {
            attempts += 1;
            let u = rng.gen_range(-1.0f64..1.0);
            let v = rng.gen_range(-1.0f64..1.0);
            if u * u + v * v > 1.0 {
                continue;
            }
            let x = center[0] + u * (semi_axes[0] - 30.0);
            let y = center[1] + v * (semi_axes[1] - 30.0);
            if ((x - flow_center[0]).powi(2) + (y - flow_center[1]).powi(2)).sqrt() < p.min_separation {
                continue;
            }
            if singularities
                .iter()
                .any(|s| ((s.x - x).powi(2) + (s.y - y).powi(2)).sqrt() < p.min_separation)
            {
                continue;
            }
            let sign = if singularities.len() % 2 == 0 { 1.0 } else { -1.0 };
            singularities.push(Singularity { x, y, sign });
        }
        Self {
            width: p.size,
            height: p.size,
            period: sample(rng, p.period),
            flow_center,
            phase_offset: rng.gen_range(0.0..1.0),
            singularities,
            center,
            semi_axes,
        }
    }

    pub fn phase(&self, x: f64, y: f64) -> f64 {
        let r = ((x - self.flow_center[0]).powi(2) + (y - self.flow_center[1]).powi(2)).sqrt();
        let mut phi = r / self.period + self.phase_offset;
        for s in &self.singularities {
            phi += s.sign * (y - s.y).atan2(x - s.x) / TAU;
        }
        phi
    }

    /// Normalized elliptic radius; `<= 1` inside the finger.
    pub fn ellipse_radius(&self, x: f64, y: f64) -> f64 {
        (((x - self.center[0]) / self.semi_axes[0]).powi(2) + ((y - self.center[1]) / self.semi_axes[1]).powi(2)).sqrt()
    }

    /// Ridge profile in `[0, 1]`, 1 on ridge centre lines.
    pub fn ridge(&self, x: f64, y: f64) -> f64 {
        0.5 - 0.5 * (TAU * self.phase(x, y)).cos()
    }

    pub fn mask(&self) -> Mask {
        Mask::from_fn(self.width, self.height, |x, y| self.ellipse_radius(x as f64, y as f64) <= 1.0)
    }

    /// Dark ridges on a white background with mild sensor noise.
    pub fn render_contact(&self, rng: &mut impl Rng, noise: f64) -> Image<f64> {
        let normal = Normal::new(0.0, noise.max(1e-12)).expect("positive std");
        let mut pixels = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let (xf, yf) = (x as f64, y as f64);
                let e = self.ellipse_radius(xf, yf);
                let v = if e <= 1.0 {
                    let fade = ((1.0 - e) / 0.04).min(1.0);
                    1.0 - fade * 0.9 * self.ridge(xf, yf) + normal.sample(rng)
                } else {
                    1.0
                };
                pixels.push(v.clamp(0.0, 1.0));
            }
        }
        Image::new(self.width, self.height, pixels).expect("clamped").with_ppi(Some(500.0))
    }

    /// Positions of the phase singularities, i.e. the planted minutiae.
    pub fn planted_minutiae(&self) -> Vec<[f64; 2]> {
        self.singularities.iter().map(|s| [s.x, s.y]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradeParams {
    pub scale: (f64, f64),
    pub rotation_deg: f64,
    pub translation: f64,
    /// Maximum displacement magnitude per spline control point.
    pub tps_max: f64,
    /// Ridge contrast after degradation.
    pub contrast: (f64, f64),
    pub finger_level: f64,
    pub background_level: f64,
    /// Peak-to-peak illumination gradient across the finger.
    pub illumination: f64,
    pub noise: f64,
}

impl Default for DegradeParams {
    fn default() -> Self {
        Self {
            scale: (0.7, 1.4),
            rotation_deg: 8.0,
            translation: 15.0,
            tps_max: 6.0,
            contrast: (0.25, 0.4),
            finger_level: 0.35,
            background_level: 0.06,
            illumination: 0.12,
            noise: 0.03,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Contactless {
    pub image: Image<f64>,
    pub mask: Mask,
    /// Geometry applied to the master, for audit.
    pub warp: WarpParams,
}

/// Renders the master through a random similarity plus spline warp with low
/// contrast, bright ridges, uneven illumination and noise.
pub fn contactless_surrogate(master: &MasterPrint, rng: &mut impl Rng, p: &DegradeParams) -> Result<Contactless> {
    let (w, h) = (master.width, master.height);
    let affine = AffineParams::new(
        sample(rng, p.scale),
        rng.gen_range(-p.rotation_deg..=p.rotation_deg).to_radians(),
        rng.gen_range(-p.translation..=p.translation),
        rng.gen_range(-p.translation..=p.translation),
    )?;
    let displacements: Vec<[f64; 2]> = (0..DEFAULT_GRID * DEFAULT_GRID)
        .map(|_| {
            let a = rng.gen_range(0.0..TAU);
            let r = p.tps_max * rng.gen_range(0.0f64..1.0).sqrt();
            [r * a.cos(), r * a.sin()]
        })
        .collect();
    let field = TpsField::lattice(DEFAULT_GRID, w, h).with_displacements(displacements)?;
    let coords = warp_source_coords(w, h, &affine, Some(&field))?;
    let contrast = sample(rng, p.contrast);
    let light = rng.gen_range(0.0..TAU);
    let normal = Normal::new(0.0, p.noise.max(1e-12)).expect("positive std");
    let mut pixels = Vec::with_capacity(w * h);
    let mut bits = Vec::with_capacity(w * h);
    for (i, src) in coords.iter().enumerate() {
        let e = master.ellipse_radius(src[0], src[1]);
        let inside = e <= 1.0;
        let v = if inside {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let grad = ((x - w as f64 / 2.0) * light.cos() + (y - h as f64 / 2.0) * light.sin()) / w as f64;
            p.finger_level + p.illumination * grad + contrast * master.ridge(src[0], src[1])
        } else {
            p.background_level
        };
        bits.push(inside);
        pixels.push((v + normal.sample(rng)).clamp(0.0, 1.0));
    }
    Ok(Contactless {
        image: Image::new(w, h, pixels)?,
        mask: Mask::new(w, h, bits)?,
        warp: WarpParams::new(&affine, &field, w, h),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::estimate_ridge_period;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn master_is_deterministic_and_well_formed() {
        let a = MasterPrint::random(&mut ChaCha8Rng::seed_from_u64(7), &MasterParams::default());
        let b = MasterPrint::random(&mut ChaCha8Rng::seed_from_u64(7), &MasterParams::default());
        assert_eq!(a, b);
        assert!(a.singularities.len() >= 20);
        for s in &a.singularities {
            assert!(a.ellipse_radius(s.x, s.y) < 1.0);
        }
        let img = a.render_contact(&mut ChaCha8Rng::seed_from_u64(1), 0.02);
        let est = estimate_ridge_period(&img, 32).unwrap();
        assert!((est.period - a.period).abs() < 0.6, "{} vs {}", est.period, a.period);
    }

    #[test]
    fn surrogate_has_scaled_period_and_bright_ridges() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = MasterPrint::random(&mut rng, &MasterParams::default());
        let c = contactless_surrogate(&m, &mut rng, &DegradeParams::default()).unwrap();
        let s = c.warp.s;
        assert!((0.7..=1.4).contains(&s));
        let est = estimate_ridge_period(&c.image, 32).unwrap();
        assert!((est.period - m.period * s).abs() < 0.12 * m.period * s, "{} vs {}", est.period, m.period * s);
        let fg: f64 = c.image.pixels().iter().zip(c.mask.bits()).filter(|(_, b)| **b).map(|(v, _)| v).sum::<f64>()
            / c.mask.count() as f64;
        assert!(fg > 0.3);
    }
}
