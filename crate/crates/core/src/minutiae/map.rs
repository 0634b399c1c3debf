//! Dense 6-channel minutiae maps on an 8-pixel cell grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::MinutiaeSet;

pub const MAP_CELL: usize = 8;
pub const MAP_CHANNELS: usize = 6;

/// `rows x cols x 6` tensor, row-major with the channel fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinutiaeMap {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl MinutiaeMap {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols * MAP_CHANNELS],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.values[(row * self.cols + col) * MAP_CHANNELS + channel]
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}

fn radius(sigma: f64) -> isize {
    (8.0 * sigma).ceil() as isize
}

/// Mass of one splat whose footprint lies fully inside the map.
pub fn splat_mass(sigma: f64) -> f64 {
    let r = radius(sigma);
    let axis: f64 = (-r..=r)
        .map(|i| (-(i as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .sum();
    axis * axis
}

/// Renders each minutia as a unit-peak Gaussian centred at `(x/8, y/8)` in
/// cell units (cell `i` covers `[i, i+1)`), split linearly between the two
/// nearest of six orientation channels centred at `c * pi / 3`.
pub fn minutiae_map(set: &MinutiaeSet, dims: (usize, usize), sigma: f64) -> MinutiaeMap {
    let (w, h) = dims;
    let cols = w.div_ceil(MAP_CELL);
    let rows = h.div_ceil(MAP_CELL);
    let mut map = MinutiaeMap::zeros(rows, cols);
    let r = radius(sigma);
    let step = PI / 3.0;
    for m in set.iter() {
        let u = m.x / MAP_CELL as f64 - 0.5;
        let v = m.y / MAP_CELL as f64 - 0.5;
        let t = m.theta.rem_euclid(2.0 * PI) / step;
        let c0 = (t.floor() as usize) % MAP_CHANNELS;
        let frac = t - t.floor();
        let c1 = (c0 + 1) % MAP_CHANNELS;
        // nearest cell to the centre; the footprint is symmetric about it
        let cu = u.round() as isize;
        let cv = v.round() as isize;
        for row in cv - r..=cv + r {
            if row < 0 || row as usize >= rows {
                continue;
            }
            for col in cu - r..=cu + r {
                if col < 0 || col as usize >= cols {
                    continue;
                }
                let g = (-((col as f64 - u).powi(2) + (row as f64 - v).powi(2)) / (2.0 * sigma * sigma)).exp();
                let base = (row as usize * cols + col as usize) * MAP_CHANNELS;
                map.values[base + c0] += g * (1.0 - frac);
                map.values[base + c1] += g * frac;
            }
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::super::{Minutia, MinutiaKind};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one(x: f64, y: f64, theta: f64) -> MinutiaeSet {
        MinutiaeSet::new(vec![Minutia::new(x, y, theta, MinutiaKind::Ending, 1.0)], (480, 480))
    }

    #[test]
    fn empty_set_is_zero() {
        let m = minutiae_map(&MinutiaeSet::empty((480, 480)), (480, 480), 1.5);
        assert_eq!((m.rows, m.cols), (60, 60));
        assert!(m.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn bin_centre_goes_to_one_channel() {
        let m = minutiae_map(&one(204.0, 244.0, 2.0 * PI / 3.0), (480, 480), 1.5);
        for row in 0..m.rows {
            for col in 0..m.cols {
                for c in 0..MAP_CHANNELS {
                    if c != 2 {
                        assert!(m.get(row, col, c).abs() < 1e-12);
                    }
                }
            }
        }
        // cell (25, 30) is centred exactly on the minutia: peak value 1
        assert!((m.get(30, 25, 2) - 1.0).abs() < 1e-12);
        assert!((m.total() - splat_mass(1.5)).abs() < 1e-9);
        assert!((splat_mass(1.5) - 2.0 * PI * 2.25).abs() < 1e-6);
    }

    #[test]
    fn equals_naive_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let set = MinutiaeSet::new(
            (0..5)
                .map(|_| {
                    Minutia::new(
                        rng.gen_range(0.0..200.0),
                        rng.gen_range(0.0..160.0),
                        rng.gen_range(0.0..2.0 * PI),
                        MinutiaKind::Ending,
                        1.0,
                    )
                })
                .collect(),
            (200, 160),
        );
        let sigma = 1.5;
        let m = minutiae_map(&set, (200, 160), sigma);
        for row in 0..m.rows {
            for col in 0..m.cols {
                // cell centre in pixels
                let (px, py) = (col as f64 * 8.0 + 4.0, row as f64 * 8.0 + 4.0);
                for c in 0..MAP_CHANNELS {
                    let mut expect = 0.0;
                    for mi in set.iter() {
                        let d2 = ((px - mi.x) / 8.0).powi(2) + ((py - mi.y) / 8.0).powi(2);
                        let g = (-d2 / (2.0 * sigma * sigma)).exp();
                        let centre = c as f64 * PI / 3.0;
                        let diff = (mi.theta - centre).rem_euclid(2.0 * PI);
                        let diff = diff.min(2.0 * PI - diff);
                        let wgt = (1.0 - diff / (PI / 3.0)).max(0.0);
                        expect += g * wgt;
                    }
                    assert!((m.get(row, col, c) - expect).abs() < 1e-6, "{row} {col} {c}");
                }
            }
        }
    }

    #[test]
    fn total_mass_is_count_times_splat() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let set = MinutiaeSet::new(
            (0..12)
                .map(|_| {
                    Minutia::new(
                        rng.gen_range(80.0..400.0),
                        rng.gen_range(80.0..400.0),
                        rng.gen_range(0.0..2.0 * PI),
                        MinutiaKind::Bifurcation,
                        1.0,
                    )
                })
                .collect(),
            (480, 480),
        );
        let m = minutiae_map(&set, (480, 480), 1.5);
        assert!((m.total() - set.len() as f64 * splat_mass(1.5)).abs() < 1e-9);
        assert!(m.values.iter().all(|v| *v >= 0.0));
    }
}
