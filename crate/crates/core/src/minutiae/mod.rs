//! Minutiae: extraction from ridge images, pairwise matching, correspondence
//! scoring against a reference set, and dense minutiae maps.

mod extract;
mod gabor;
mod map;
mod matching;
mod metrics;
mod orientation;
mod thinning;

pub use extract::{analyze_ridges, crossing_number, extract_minutiae, ExtractParams, Extraction, RidgeAnalysis};
pub use gabor::gabor_enhance;
pub use map::{minutiae_map, splat_mass, MinutiaeMap, MAP_CELL, MAP_CHANNELS};
pub use matching::{match_minutiae, MatchParams, MatchResult, Similarity};
pub use metrics::{correspondence_metrics, CorrespondenceMetrics};
pub use orientation::{orientation_field, OrientationField, DEFAULT_ORIENTATION_BLOCK};
pub use thinning::zhang_suen;

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MinutiaKind {
    Ending,
    Bifurcation,
}

impl MinutiaKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MinutiaKind::Ending => "ending",
            MinutiaKind::Bifurcation => "bifurcation",
        }
    }
}

impl std::str::FromStr for MinutiaKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ending" | "e" | "0" => Ok(MinutiaKind::Ending),
            "bifurcation" | "b" | "1" => Ok(MinutiaKind::Bifurcation),
            other => Err(Error::Format(format!("unknown minutia kind {other:?}"))),
        }
    }
}

/// A ridge ending or bifurcation. `theta` is the ridge direction in `[0, 2pi)`
/// in image coordinates (x right, y down), pointing from the minutia along the
/// ridge (for bifurcations: between the two forks).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Minutia {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub kind: MinutiaKind,
    pub quality: f64,
}

impl Minutia {
    pub fn new(x: f64, y: f64, theta: f64, kind: MinutiaKind, quality: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_2pi(theta),
            kind,
            quality: quality.clamp(0.0, 1.0),
        }
    }

    #[inline]
    pub fn dist(&self, other: &Minutia) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

#[inline]
pub(crate) fn wrap_2pi(a: f64) -> f64 {
    let t = a.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Absolute difference of two directions, in `[0, pi]`.
#[inline]
pub fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    if d > PI {
        TAU - d
    } else {
        d
    }
}

pub const DEDUP_DIST: f64 = 4.0;
pub const DEDUP_ANGLE_DEG: f64 = 10.0;

/// Unordered minutiae collection with the dimensions of its source image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinutiaeSet {
    pub minutiae: Vec<Minutia>,
    pub source_dims: (usize, usize),
}

impl MinutiaeSet {
    /// Builds a set, merging near-duplicates (closer than 4 px with direction
    /// difference below 10 degrees; the higher-quality one survives).
    pub fn new(minutiae: Vec<Minutia>, source_dims: (usize, usize)) -> Self {
        let mut order: Vec<usize> = (0..minutiae.len()).collect();
        order.sort_by(|&a, &b| minutiae[b].quality.total_cmp(&minutiae[a].quality).then(a.cmp(&b)));
        let mut kept: Vec<usize> = Vec::with_capacity(minutiae.len());
        for i in order {
            let m = &minutiae[i];
            let dup = kept.iter().any(|&k| {
                let o = &minutiae[k];
                m.dist(o) < DEDUP_DIST && angle_diff(m.theta, o.theta) < DEDUP_ANGLE_DEG.to_radians()
            });
            if !dup {
                kept.push(i);
            }
        }
        kept.sort_unstable();
        Self {
            minutiae: kept.into_iter().map(|i| minutiae[i]).collect(),
            source_dims,
        }
    }

    pub fn empty(source_dims: (usize, usize)) -> Self {
        Self {
            minutiae: Vec::new(),
            source_dims,
        }
    }

    pub fn len(&self) -> usize {
        self.minutiae.len()
    }

    pub fn is_empty(&self) -> bool {
        self.minutiae.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Minutia> {
        self.minutiae.iter()
    }

    /// Applies a similarity transform to positions and directions.
    pub fn transformed(&self, t: &Similarity) -> Self {
        Self {
            minutiae: self.minutiae.iter().map(|m| t.apply_minutia(m)).collect(),
            source_dims: self.source_dims,
        }
    }

    /// Plain-text form: optional `# dims W H` header, then one
    /// `x y theta_deg kind quality` line per minutia.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# dims {} {}", self.source_dims.0, self.source_dims.1);
        for m in &self.minutiae {
            let _ = writeln!(
                s,
                "{:.3} {:.3} {:.3} {} {:.4}",
                m.x,
                m.y,
                m.theta.to_degrees(),
                m.kind.as_str(),
                m.quality
            );
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut dims = (0, 0);
        let mut minutiae = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() == 3 && parts[0] == "dims" {
                    let w = parts[1].parse().map_err(|_| Error::Format(format!("bad width on line {}", lineno + 1)))?;
                    let h = parts[2].parse().map_err(|_| Error::Format(format!("bad height on line {}", lineno + 1)))?;
                    dims = (w, h);
                }
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 5 {
                return Err(Error::Format(format!(
                    "line {}: expected 5 fields, got {}",
                    lineno + 1,
                    parts.len()
                )));
            }
            let num = |i: usize| -> Result<f64> {
                let v: f64 = parts[i]
                    .parse()
                    .map_err(|_| Error::Format(format!("line {}: bad number {:?}", lineno + 1, parts[i])))?;
                if !v.is_finite() {
                    return Err(Error::Format(format!("line {}: non-finite value", lineno + 1)));
                }
                Ok(v)
            };
            minutiae.push(Minutia::new(
                num(0)?,
                num(1)?,
                num(2)?.to_radians(),
                parts[3].parse()?,
                num(4)?,
            ));
        }
        Ok(Self { minutiae, source_dims: dims })
    }

    pub fn save_text(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load_text(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_helpers() {
        assert!((angle_diff(0.1, TAU - 0.1) - 0.2).abs() < 1e-12);
        assert!((angle_diff(0.0, PI) - PI).abs() < 1e-12);
        assert!((wrap_2pi(-0.5) - (TAU - 0.5)).abs() < 1e-12);
        assert!(wrap_2pi(TAU) < TAU);
    }

    #[test]
    fn dedup_merges_close_similar_minutiae() {
        let set = MinutiaeSet::new(
            vec![
                Minutia::new(10.0, 10.0, 0.0, MinutiaKind::Ending, 0.5),
                Minutia::new(12.0, 10.0, 0.05, MinutiaKind::Ending, 0.9),
                Minutia::new(12.0, 11.0, 2.0, MinutiaKind::Ending, 0.4),
                Minutia::new(40.0, 10.0, 0.0, MinutiaKind::Bifurcation, 0.4),
            ],
            (64, 64),
        );
        assert_eq!(set.len(), 3);
        assert!(set.iter().any(|m| m.quality == 0.9));
        assert!(!set.iter().any(|m| m.quality == 0.5));
    }

    #[test]
    fn text_round_trip() {
        let set = MinutiaeSet::new(
            vec![
                Minutia::new(10.5, 20.25, 1.0, MinutiaKind::Ending, 0.5),
                Minutia::new(100.0, 7.0, 4.0, MinutiaKind::Bifurcation, 1.0),
            ],
            (480, 480),
        );
        let back = MinutiaeSet::from_text(&set.to_text()).unwrap();
        assert_eq!(back.source_dims, (480, 480));
        assert_eq!(back.len(), 2);
        for (a, b) in back.iter().zip(set.iter()) {
            assert!((a.x - b.x).abs() < 1e-3 && (a.y - b.y).abs() < 1e-3);
            assert!(angle_diff(a.theta, b.theta) < 1e-4);
            assert_eq!(a.kind, b.kind);
        }
        assert!(MinutiaeSet::from_text("1 2 3 ending").is_err());
        assert!(MinutiaeSet::from_text("1 2 3 loop 0.5").is_err());
        assert!(MinutiaeSet::from_text("1 2 nan ending 0.5").is_err());
    }
}
