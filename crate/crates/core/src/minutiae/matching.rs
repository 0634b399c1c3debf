//! Pairwise minutiae matching: local neighbourhood descriptors, candidate
//! correspondences, similarity-transform consensus and one-to-one pairing.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{angle_diff, wrap_2pi, Minutia, MinutiaeSet};

/// `p -> scale * R(rotation) p + (tx, ty)`; directions rotate by `rotation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for Similarity {
    fn default() -> Self {
        Self {
            scale: 1.0,
            rotation: 0.0,
            tx: 0.0,
            ty: 0.0,
        }
    }
}

impl Similarity {
    #[inline]
    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        (
            self.scale * (c * x - s * y) + self.tx,
            self.scale * (s * x + c * y) + self.ty,
        )
    }

    pub fn apply_minutia(&self, m: &Minutia) -> Minutia {
        let (x, y) = self.apply(m.x, m.y);
        Minutia {
            x,
            y,
            theta: wrap_2pi(m.theta + self.rotation),
            ..*m
        }
    }

    pub fn inverse(&self) -> Self {
        let inv_s = 1.0 / self.scale;
        let (s, c) = (-self.rotation).sin_cos();
        let tx = -inv_s * (c * self.tx - s * self.ty);
        let ty = -inv_s * (s * self.tx + c * self.ty);
        Self {
            scale: inv_s,
            rotation: -self.rotation,
            tx,
            ty,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchParams {
    pub neighbours: usize,
    /// Candidate partners kept per minutia.
    pub candidates: usize,
    /// Descriptor distance above which a pair is never a candidate.
    pub max_descriptor_cost: f64,
    pub ransac_iterations: usize,
    pub min_scale: f64,
    pub max_scale: f64,
    pub pair_tol_px: f64,
    pub pair_tol_deg: f64,
    pub seed: u64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            neighbours: 5,
            candidates: 3,
            max_descriptor_cost: 1.6,
            ransac_iterations: 200,
            min_scale: 0.8,
            max_scale: 1.25,
            pair_tol_px: 12.0,
            pair_tol_deg: 25.0,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    /// `paired^2 / (|a| |b|)`, in `[0, 1]`.
    pub score: f64,
    /// One-to-one `(index in a, index in b)` pairs.
    pub pairs: Vec<(usize, usize)>,
    /// Maps `a` into the frame of `b`.
    pub transform: Similarity,
}

/// `(distance, direction of neighbour relative to own theta, theta difference)`.
type Feature = [f64; 3];

fn descriptors(set: &[Minutia], k: usize) -> Vec<Vec<Feature>> {
    set.iter()
        .enumerate()
        .map(|(i, m)| {
            let mut nb: Vec<(f64, usize)> = set
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(j, o)| (m.dist(o), j))
                .collect();
            nb.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            nb.truncate(k);
            nb.iter()
                .map(|&(d, j)| {
                    let o = &set[j];
                    let dir = (o.y - m.y).atan2(o.x - m.x);
                    [d, wrap_2pi(dir - m.theta), wrap_2pi(o.theta - m.theta)]
                })
                .collect()
        })
        .collect()
}

const FEATURE_CAP: f64 = 3.0;

fn one_way(a: &[Feature], b: &[Feature]) -> f64 {
    if a.is_empty() {
        return FEATURE_CAP;
    }
    let total: f64 = a
        .iter()
        .map(|f| {
            b.iter()
                .map(|g| {
                    (f[0] - g[0]).abs() / (3.0 + 0.15 * f[0].max(g[0]))
                        + angle_diff(f[1], g[1]) / 20f64.to_radians()
                        + angle_diff(f[2], g[2]) / 20f64.to_radians()
                })
                .fold(FEATURE_CAP, f64::min)
        })
        .sum();
    total / a.len() as f64
}

fn descriptor_cost(a: &[Feature], b: &[Feature]) -> f64 {
    0.5 * (one_way(a, b) + one_way(b, a))
}

fn within(t: &Similarity, a: &Minutia, b: &Minutia, tol_px: f64, tol_rad: f64) -> Option<f64> {
    let (x, y) = t.apply(a.x, a.y);
    let d = ((x - b.x).powi(2) + (y - b.y).powi(2)).sqrt();
    let da = angle_diff(a.theta + t.rotation, b.theta);
    (d <= tol_px && da <= tol_rad).then(|| d / tol_px + da / tol_rad)
}

/// Greedy one-to-one pairing by ascending cost over all pairs within tolerance.
fn pair_all(a: &[Minutia], b: &[Minutia], t: &Similarity, p: &MatchParams) -> Vec<(usize, usize)> {
    let tol_rad = p.pair_tol_deg.to_radians();
    let mut edges: Vec<(f64, usize, usize)> = Vec::new();
    for (i, ma) in a.iter().enumerate() {
        for (j, mb) in b.iter().enumerate() {
            if let Some(c) = within(t, ma, mb, p.pair_tol_px, tol_rad) {
                edges.push((c, i, j));
            }
        }
    }
    edges.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in edges {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

fn consensus(cands: &[(usize, usize)], a: &[Minutia], b: &[Minutia], t: &Similarity, p: &MatchParams) -> usize {
    let tol_rad = p.pair_tol_deg.to_radians();
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut n = 0;
    for &(i, j) in cands {
        if used_a[i] || used_b[j] {
            continue;
        }
        if within(t, &a[i], &b[j], p.pair_tol_px, tol_rad).is_some() {
            used_a[i] = true;
            used_b[j] = true;
            n += 1;
        }
    }
    n
}

fn from_single(ma: &Minutia, mb: &Minutia) -> Similarity {
    let rotation = mb.theta - ma.theta;
    let (s, c) = rotation.sin_cos();
    Similarity {
        scale: 1.0,
        rotation,
        tx: mb.x - (c * ma.x - s * ma.y),
        ty: mb.y - (s * ma.x + c * ma.y),
    }
}

/// Least-squares similarity mapping `src` onto `dst`, with the scale clamped.
fn fit_similarity(src: &[(f64, f64)], dst: &[(f64, f64)], min_s: f64, max_s: f64) -> Option<Similarity> {
    let n = src.len() as f64;
    if src.len() < 2 {
        return None;
    }
    let (sx, sy) = src.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0 / n, acc.1 + p.1 / n));
    let (dx, dy) = dst.iter().fold((0.0, 0.0), |acc, p| (acc.0 + p.0 / n, acc.1 + p.1 / n));
    let (mut a, mut b, mut norm) = (0.0, 0.0, 0.0);
    for (p, q) in src.iter().zip(dst) {
        let (px, py) = (p.0 - sx, p.1 - sy);
        let (qx, qy) = (q.0 - dx, q.1 - dy);
        a += px * qx + py * qy;
        b += px * qy - py * qx;
        norm += px * px + py * py;
    }
    if norm < 1e-9 {
        return None;
    }
    let rotation = b.atan2(a);
    let scale = ((a * a + b * b).sqrt() / norm).clamp(min_s, max_s);
    let (s, c) = rotation.sin_cos();
    Some(Similarity {
        scale,
        rotation,
        tx: dx - scale * (c * sx - s * sy),
        ty: dy - scale * (s * sx + c * sy),
    })
}

fn cmp_minutia(a: &Minutia, b: &Minutia) -> Ordering {
    a.x.total_cmp(&b.x)
        .then(a.y.total_cmp(&b.y))
        .then(a.theta.total_cmp(&b.theta))
        .then((a.kind as u8).cmp(&(b.kind as u8)))
        .then(a.quality.total_cmp(&b.quality))
}

fn canonical_order(a: &MinutiaeSet, b: &MinutiaeSet) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        let mut sa: Vec<&Minutia> = a.iter().collect();
        let mut sb: Vec<&Minutia> = b.iter().collect();
        sa.sort_by(|x, y| cmp_minutia(x, y));
        sb.sort_by(|x, y| cmp_minutia(x, y));
        sa.iter()
            .zip(&sb)
            .map(|(x, y)| cmp_minutia(x, y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    })
}

/// Matches two minutiae sets. The result does not depend on argument order:
/// swapping the arguments swaps each pair and inverts the transform.
pub fn match_minutiae(a: &MinutiaeSet, b: &MinutiaeSet, params: &MatchParams) -> MatchResult {
    if canonical_order(a, b) == Ordering::Greater {
        let r = match_ordered(b, a, params);
        return MatchResult {
            score: r.score,
            pairs: {
                let mut p: Vec<(usize, usize)> = r.pairs.iter().map(|&(i, j)| (j, i)).collect();
                p.sort_unstable();
                p
            },
            transform: r.transform.inverse(),
        };
    }
    match_ordered(a, b, params)
}

fn match_ordered(sa: &MinutiaeSet, sb: &MinutiaeSet, p: &MatchParams) -> MatchResult {
    let a = &sa.minutiae;
    let b = &sb.minutiae;
    let empty = MatchResult {
        score: 0.0,
        pairs: Vec::new(),
        transform: Similarity::default(),
    };
    if a.is_empty() || b.is_empty() {
        return empty;
    }
    let da = descriptors(a, p.neighbours);
    let db = descriptors(b, p.neighbours);
    let cost: Vec<Vec<f64>> = da.iter().map(|x| db.iter().map(|y| descriptor_cost(x, y)).collect()).collect();

    let mut cands: Vec<(f64, usize, usize)> = Vec::new();
    for (i, row) in cost.iter().enumerate() {
        let mut js: Vec<usize> = (0..b.len()).filter(|&j| row[j] <= p.max_descriptor_cost).collect();
        js.sort_by(|&x, &y| row[x].total_cmp(&row[y]).then(x.cmp(&y)));
        for &j in js.iter().take(p.candidates) {
            cands.push((row[j], i, j));
        }
    }
    for j in 0..b.len() {
        let mut is: Vec<usize> = (0..a.len()).filter(|&i| cost[i][j] <= p.max_descriptor_cost).collect();
        is.sort_by(|&x, &y| cost[x][j].total_cmp(&cost[y][j]).then(x.cmp(&y)));
        for &i in is.iter().take(p.candidates) {
            cands.push((cost[i][j], i, j));
        }
    }
    cands.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    cands.dedup_by(|x, y| x.1 == y.1 && x.2 == y.2);
    let pairs_c: Vec<(usize, usize)> = cands.iter().map(|c| (c.1, c.2)).collect();
    if pairs_c.is_empty() {
        return empty;
    }

    let mut best = Similarity::default();
    let mut best_n = 0;
    let consider = |t: Similarity, best: &mut Similarity, best_n: &mut usize| {
        let n = consensus(&pairs_c, a, b, &t, p);
        if n > *best_n {
            *best_n = n;
            *best = t;
        }
    };
    for &(i, j) in &pairs_c {
        consider(from_single(&a[i], &b[j]), &mut best, &mut best_n);
    }
    if pairs_c.len() >= 2 {
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let tol_rad = p.pair_tol_deg.to_radians();
        for _ in 0..p.ransac_iterations {
            let u = rng.gen_range(0..pairs_c.len());
            let v = rng.gen_range(0..pairs_c.len());
            let (i1, j1) = pairs_c[u];
            let (i2, j2) = pairs_c[v];
            if i1 == i2 || j1 == j2 {
                continue;
            }
            let src = [(a[i1].x, a[i1].y), (a[i2].x, a[i2].y)];
            let dst = [(b[j1].x, b[j1].y), (b[j2].x, b[j2].y)];
            let Some(t) = fit_similarity(&src, &dst, 0.0, f64::INFINITY) else {
                continue;
            };
            if t.scale < p.min_scale || t.scale > p.max_scale {
                continue;
            }
            if angle_diff(a[i1].theta + t.rotation, b[j1].theta) > tol_rad
                || angle_diff(a[i2].theta + t.rotation, b[j2].theta) > tol_rad
            {
                continue;
            }
            consider(t, &mut best, &mut best_n);
        }
    }

    let mut pairs = pair_all(a, b, &best, p);
    let mut transform = best;
    for _ in 0..2 {
        let src: Vec<(f64, f64)> = pairs.iter().map(|&(i, _)| (a[i].x, a[i].y)).collect();
        let dst: Vec<(f64, f64)> = pairs.iter().map(|&(_, j)| (b[j].x, b[j].y)).collect();
        let Some(t) = fit_similarity(&src, &dst, p.min_scale, p.max_scale) else {
            break;
        };
        let refit = pair_all(a, b, &t, p);
        if refit.len() > pairs.len() {
            pairs = refit;
            transform = t;
        } else {
            break;
        }
    }
    let n = pairs.len() as f64;
    MatchResult {
        score: (n * n / (a.len() as f64 * b.len() as f64)).clamp(0.0, 1.0),
        pairs,
        transform,
    }
}

#[cfg(test)]
mod tests {
    use super::super::MinutiaKind;
    use super::*;
    use std::f64::consts::TAU;

    pub(crate) fn random_set(rng: &mut ChaCha8Rng, n: usize, side: f64) -> MinutiaeSet {
        let ms = (0..n)
            .map(|_| {
                Minutia::new(
                    rng.gen_range(20.0..side - 20.0),
                    rng.gen_range(20.0..side - 20.0),
                    rng.gen_range(0.0..TAU),
                    if rng.gen_bool(0.5) { MinutiaKind::Ending } else { MinutiaKind::Bifurcation },
                    rng.gen_range(0.3..1.0),
                )
            })
            .collect();
        MinutiaeSet::new(ms, (side as usize, side as usize))
    }

    #[test]
    fn self_match_is_perfect() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_set(&mut rng, 30, 400.0);
        let r = match_minutiae(&a, &a, &MatchParams::default());
        assert_eq!(r.score, 1.0);
        assert_eq!(r.pairs.len(), a.len());
        assert!(r.pairs.iter().all(|(i, j)| i == j));
    }

    #[test]
    fn rigid_copy_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let a = random_set(&mut rng, 35, 400.0);
            let t = Similarity {
                scale: 1.0,
                rotation: rng.gen_range(-0.6..0.6),
                tx: rng.gen_range(-40.0..40.0),
                ty: rng.gen_range(-40.0..40.0),
            };
            let b = a.transformed(&t);
            let r = match_minutiae(&a, &b, &MatchParams::default());
            assert!(r.score >= 0.9, "score {}", r.score);
            let correct = r.pairs.iter().filter(|(i, j)| i == j).count();
            assert!(correct as f64 >= 0.9 * a.len() as f64);
        }
    }

    #[test]
    fn random_imposters_score_low() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = MatchParams::default();
        for _ in 0..100 {
            let a = random_set(&mut rng, 35, 400.0);
            let b = random_set(&mut rng, 35, 400.0);
            let r = match_minutiae(&a, &b, &p);
            assert!(r.score <= 0.1, "score {}", r.score);
        }
    }

    #[test]
    fn symmetric_and_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_set(&mut rng, 20, 300.0);
        let mut b = a.transformed(&Similarity {
            scale: 1.0,
            rotation: 0.3,
            tx: 5.0,
            ty: -8.0,
        });
        b.minutiae.truncate(15);
        let p = MatchParams::default();
        let ab = match_minutiae(&a, &b, &p);
        let ba = match_minutiae(&b, &a, &p);
        assert_eq!(ab.score, ba.score);
        let mut swapped: Vec<(usize, usize)> = ba.pairs.iter().map(|&(i, j)| (j, i)).collect();
        swapped.sort_unstable();
        assert_eq!(ab.pairs, swapped);
        let e = MinutiaeSet::empty((300, 300));
        assert_eq!(match_minutiae(&a, &e, &p).score, 0.0);
    }

    #[test]
    fn inverse_transform_round_trips() {
        let t = Similarity {
            scale: 1.2,
            rotation: 0.7,
            tx: 3.0,
            ty: -4.0,
        };
        let (x, y) = t.apply(10.0, 20.0);
        let (bx, by) = t.inverse().apply(x, y);
        assert!((bx - 10.0).abs() < 1e-9 && (by - 20.0).abs() < 1e-9);
    }
}
