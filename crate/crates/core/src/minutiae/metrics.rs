//! Paired / missing / spurious counts against a reference set.

use serde::{Deserialize, Serialize};

use super::{angle_diff, MinutiaeSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceMetrics {
    pub paired: usize,
    pub missing: usize,
    pub spurious: usize,
    /// `(paired - missing - spurious) / |reference|`.
    pub goodness_index: f64,
}

fn augment(u: usize, adj: &[Vec<usize>], seen: &mut [bool], match_r: &mut [Option<usize>]) -> bool {
    for &v in &adj[u] {
        if seen[v] {
            continue;
        }
        seen[v] = true;
        if match_r[v].map_or(true, |w| augment(w, adj, seen, match_r)) {
            match_r[v] = Some(u);
            return true;
        }
    }
    false
}

/// Maximum one-to-one assignment between probe and reference minutiae that
/// lie within `tol_px` and `tol_deg` of each other. Sets must share a frame.
pub fn correspondence_metrics(
    probe: &MinutiaeSet,
    reference: &MinutiaeSet,
    tol_px: f64,
    tol_deg: f64,
) -> Result<CorrespondenceMetrics> {
    if reference.is_empty() {
        return Err(Error::EmptyInput("reference minutiae"));
    }
    let tol_rad = tol_deg.to_radians();
    let adj: Vec<Vec<usize>> = probe
        .iter()
        .map(|p| {
            reference
                .iter()
                .enumerate()
                .filter(|(_, r)| p.dist(r) <= tol_px && angle_diff(p.theta, r.theta) <= tol_rad)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let mut match_r = vec![None; reference.len()];
    let mut paired = 0;
    for u in 0..probe.len() {
        let mut seen = vec![false; reference.len()];
        if augment(u, &adj, &mut seen, &mut match_r) {
            paired += 1;
        }
    }
    let missing = reference.len() - paired;
    let spurious = probe.len() - paired;
    Ok(CorrespondenceMetrics {
        paired,
        missing,
        spurious,
        goodness_index: (paired as f64 - missing as f64 - spurious as f64) / reference.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{Minutia, MinutiaKind};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::TAU;

    fn set(rng: &mut ChaCha8Rng, n: usize, side: f64) -> MinutiaeSet {
        let v = (0..n)
            .map(|_| {
                Minutia::new(
                    rng.gen_range(0.0..side),
                    rng.gen_range(0.0..side),
                    rng.gen_range(0.0..TAU),
                    MinutiaKind::Ending,
                    1.0,
                )
            })
            .collect();
        MinutiaeSet::new(v, (side as usize, side as usize))
    }

    /// Exhaustive maximum assignment over reference subsets.
    fn oracle(probe: &MinutiaeSet, reference: &MinutiaeSet, tol_px: f64, tol_deg: f64) -> usize {
        let m = reference.len();
        let mut best = 0;
        // cur[mask]: most pairs so far using exactly the reference subset `mask`
        let mut cur = vec![i64::MIN; 1 << m];
        cur[0] = 0;
        for p in probe.iter() {
            let mut next = cur.clone();
            for mask in 0..1usize << m {
                if cur[mask] == i64::MIN {
                    continue;
                }
                for (j, r) in reference.iter().enumerate() {
                    if mask & (1 << j) == 0
                        && p.dist(r) <= tol_px
                        && angle_diff(p.theta, r.theta) <= tol_deg.to_radians()
                    {
                        let nm = mask | (1 << j);
                        next[nm] = next[nm].max(cur[mask] + 1);
                    }
                }
            }
            cur = next;
        }
        for v in cur {
            best = best.max(v.max(0) as usize);
        }
        best
    }

    #[test]
    fn identical_and_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = set(&mut rng, 15, 300.0);
        let m = correspondence_metrics(&r, &r, 12.0, 30.0).unwrap();
        assert_eq!((m.paired, m.missing, m.spurious), (r.len(), 0, 0));
        assert_eq!(m.goodness_index, 1.0);
        let e = MinutiaeSet::empty((300, 300));
        let m = correspondence_metrics(&e, &r, 12.0, 30.0).unwrap();
        assert_eq!((m.paired, m.missing, m.spurious), (0, r.len(), 0));
        assert_eq!(m.goodness_index, -1.0);
        assert!(correspondence_metrics(&r, &e, 12.0, 30.0).is_err());
    }

    #[test]
    fn jittered_probe_pairs_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let r = set(&mut rng, 20, 400.0);
        let probe = MinutiaeSet {
            minutiae: r
                .iter()
                .map(|m| {
                    let a = rng.gen_range(0.0..TAU);
                    let d = rng.gen_range(0.0..6.0);
                    Minutia::new(m.x + d * a.cos(), m.y + d * a.sin(), m.theta + rng.gen_range(-0.25..0.25), m.kind, 1.0)
                })
                .collect(),
            source_dims: r.source_dims,
        };
        let m = correspondence_metrics(&probe, &r, 12.0, 30.0).unwrap();
        assert_eq!(m.paired, r.len());
        assert_eq!(m.paired, oracle(&probe, &r, 12.0, 30.0).min(r.len()));
    }

    #[test]
    fn matches_exhaustive_oracle_on_dense_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..40 {
            let (nr, np) = (rng.gen_range(1..=10), rng.gen_range(0..=12));
            let r = set(&mut rng, nr, 60.0);
            let p = set(&mut rng, np, 60.0);
            let m = correspondence_metrics(&p, &r, 20.0, 90.0).unwrap();
            assert_eq!(m.paired, oracle(&p, &r, 20.0, 90.0));
            let (pa, rl, pl) = (m.paired as f64, r.len() as f64, p.len() as f64);
            assert!((m.goodness_index - (3.0 * pa - rl - pl) / rl).abs() < 1e-12);
            assert!(m.goodness_index <= 1.0);
            if p.len() <= r.len() {
                assert!(m.goodness_index >= -2.0);
            }
        }
    }
}
