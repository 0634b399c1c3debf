//! ROC, EER and TAR at fixed FAR. A comparison is accepted when its score
//! is at least the threshold.

use serde::{Deserialize, Serialize};

use super::ScoreSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub far: f64,
    pub tar: f64,
}

fn sorted_desc(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// One operating point per distinct score, thresholds descending, so both
/// FAR and TAR are non-decreasing along the list.
pub fn roc(scores: &ScoreSet) -> Result<Vec<RocPoint>> {
    scores.require_both()?;
    let g = sorted_desc(&scores.genuine);
    let i = sorted_desc(&scores.imposter);
    let mut thresholds: Vec<f64> = g.iter().chain(&i).copied().collect();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (ng, ni) = (g.len() as f64, i.len() as f64);
    let (mut gi, mut ii) = (0usize, 0usize);
    let mut out = Vec::with_capacity(thresholds.len());
    for t in thresholds {
        while gi < g.len() && g[gi] >= t {
            gi += 1;
        }
        while ii < i.len() && i[ii] >= t {
            ii += 1;
        }
        out.push(RocPoint {
            threshold: t,
            far: ii as f64 / ni,
            tar: gi as f64 / ng,
        });
    }
    Ok(out)
}

/// Rate where FAR equals FRR, interpolated linearly between the two
/// operating points that bracket the crossing.
pub fn eer(scores: &ScoreSet) -> Result<f64> {
    let mut pts: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    pts.extend(roc(scores)?.iter().map(|p| (p.far, 1.0 - p.tar)));
    // FAR - FRR rises from -1 (reject all) to >= 0 (lowest threshold accepts everything)
    for w in pts.windows(2) {
        let (f0, r0) = w[0];
        let (f1, r1) = w[1];
        let d0 = f0 - r0;
        let d1 = f1 - r1;
        if d0 == 0.0 {
            return Ok(f0);
        }
        if d0 < 0.0 && d1 >= 0.0 {
            let a = -d0 / (d1 - d0);
            return Ok(f0 + a * (f1 - f0));
        }
    }
    unreachable!("ROC always ends at FAR = 1, FRR = 0")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TarAtFar {
    pub tar: f64,
    /// Achieved FAR at the chosen threshold.
    pub far: f64,
    pub threshold: f64,
    /// Target is below `1 / |imposter|`; the value reported is the floor.
    pub floor: bool,
}

/// Highest TAR among operating points with FAR at or below `target`.
pub fn tar_at_far(scores: &ScoreSet, target: f64) -> Result<TarAtFar> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::param(format!("target FAR {target} outside (0,1)")));
    }
    let curve = roc(scores)?;
    let floor = target < 1.0 / scores.imposter.len() as f64;
    let mut best = TarAtFar {
        tar: 0.0,
        far: 0.0,
        threshold: f64::INFINITY,
        floor,
    };
    for p in curve {
        if p.far > target {
            break;
        }
        best = TarAtFar {
            tar: p.tar,
            far: p.far,
            threshold: p.threshold,
            floor,
        };
    }
    Ok(best)
}
