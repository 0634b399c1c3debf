//! Minutiae extraction: orientation, period, Gabor enhancement, binarization,
//! thinning, crossing-number detection and spurious-minutiae filtering.

use serde::{Deserialize, Serialize};

use super::gabor::gabor_enhance;
use super::orientation::{orientation_field, OrientationField};
use super::thinning::{ring_bits, ring_crossings, zhang_suen, RING};
use super::{angle_diff, wrap_2pi, Minutia, MinutiaKind, MinutiaeSet};
use crate::geometry::estimate_ridge_period;
use crate::imaging::Image;
use crate::segmentation::Mask;

/// Extraction thresholds; distances in pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractParams {
    pub orientation_block: usize,
    pub period_block: usize,
    /// Block side for the contrast-based foreground estimate.
    pub foreground_block: usize,
    /// Minimum intensity standard deviation of a foreground block.
    pub foreground_std: f64,
    /// Blocks eroded from the foreground before minutiae are accepted.
    pub border_blocks: usize,
    /// Minimum distance of a minutia from the image edge.
    pub image_margin: usize,
    /// Ridge segments shorter than this that end at a minutia are spurs.
    pub spur_len: f64,
    /// Facing ridge endings closer than this are treated as a broken ridge.
    pub opposing_gap: f64,
    /// Ridge length followed when estimating minutia direction.
    pub trace_len: usize,
}

impl Default for ExtractParams {
    fn default() -> Self {
        Self {
            orientation_block: 16,
            period_block: 32,
            foreground_block: 16,
            foreground_std: 0.06,
            border_blocks: 1,
            image_margin: 8,
            spur_len: 8.0,
            opposing_gap: 6.0,
            trace_len: 10,
        }
    }
}

/// Intermediate ridge analysis shared with the texture representation.
#[derive(Debug, Clone)]
pub struct RidgeAnalysis {
    pub period: f64,
    pub field: OrientationField,
    pub enhanced: Image<f64>,
    pub foreground: Mask,
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub minutiae: MinutiaeSet,
    /// Set when no ridge structure could be found; the set is then empty.
    pub no_ridge_structure: bool,
    pub analysis: Option<RidgeAnalysis>,
}

/// Crossing number of the centre of a 3x3 binary patch (`patch[row][col]`).
pub fn crossing_number(patch: [[bool; 3]; 3]) -> u32 {
    let img: Vec<bool> = patch.iter().flatten().copied().collect();
    ring_crossings(ring_bits(&img, 3, 3, 1, 1))
}

fn block_foreground(img: &Image<f64>, p: &ExtractParams) -> (Vec<bool>, usize, usize) {
    let b = p.foreground_block.max(1);
    let (w, h) = img.dims();
    let bw = w.div_ceil(b);
    let bh = h.div_ceil(b);
    let mut fg = vec![false; bw * bh];
    for by in 0..bh {
        for bx in 0..bw {
            let mut s = 0.0;
            let mut s2 = 0.0;
            let mut n = 0.0;
            for y in by * b..((by + 1) * b).min(h) {
                for x in bx * b..((bx + 1) * b).min(w) {
                    let v = img.get(x, y);
                    s += v;
                    s2 += v * v;
                    n += 1.0;
                }
            }
            let var = (s2 / n - (s / n).powi(2)).max(0.0);
            fg[by * bw + bx] = var.sqrt() >= p.foreground_std;
        }
    }
    // fill single-block holes
    let orig = fg.clone();
    for by in 1..bh.saturating_sub(1) {
        for bx in 1..bw.saturating_sub(1) {
            if !orig[by * bw + bx] {
                let around = [(0, 1), (2, 1), (1, 0), (1, 2)]
                    .iter()
                    .filter(|(dx, dy)| orig[(by + dy - 1) * bw + bx + dx - 1])
                    .count();
                if around >= 3 {
                    fg[by * bw + bx] = true;
                }
            }
        }
    }
    (fg, bw, bh)
}

fn erode_blocks(fg: &[bool], bw: usize, bh: usize, r: usize) -> Vec<bool> {
    let mut out = vec![false; fg.len()];
    for by in 0..bh {
        for bx in 0..bw {
            if bx < r || by < r || bx + r >= bw || by + r >= bh {
                continue;
            }
            let mut ok = true;
            'o: for y in by - r..=by + r {
                for x in bx - r..=bx + r {
                    if !fg[y * bw + x] {
                        ok = false;
                        break 'o;
                    }
                }
            }
            out[by * bw + bx] = ok;
        }
    }
    out
}

fn expand_blocks(fg: &[bool], bw: usize, b: usize, w: usize, h: usize) -> Mask {
    Mask::from_fn(w, h, |x, y| fg[(y / b) * bw + x / b])
}

/// Orientation, period, enhancement and foreground of a ridge image.
/// Returns `None` when no ridge period can be estimated.
pub fn analyze_ridges(img: &Image<f64>, p: &ExtractParams) -> Option<RidgeAnalysis> {
    let (w, h) = img.dims();
    if w < 2 * p.orientation_block || h < 2 * p.orientation_block {
        return None;
    }
    let period = estimate_ridge_period(img, p.period_block).ok()?.period;
    let field = orientation_field(img, p.orientation_block);
    let enhanced = gabor_enhance(img, &field, period);
    let (fg, bw, _) = block_foreground(img, p);
    let foreground = expand_blocks(&fg, bw, p.foreground_block.max(1), w, h);
    if foreground.count() == 0 {
        return None;
    }
    Some(RidgeAnalysis {
        period,
        field,
        enhanced,
        foreground,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stop {
    Ending,
    Junction,
    Open,
}

struct Trace {
    path: Vec<usize>,
    stop: Stop,
}

struct Skeleton {
    w: usize,
    h: usize,
    on: Vec<bool>,
    cn: Vec<u8>,
}

impl Skeleton {
    fn neighbours(&self, i: usize) -> impl Iterator<Item = (usize, bool)> + '_ {
        let (x, y) = ((i % self.w) as isize, (i / self.w) as isize);
        RING.iter().filter_map(move |(dx, dy)| {
            let xx = x + dx;
            let yy = y + dy;
            if xx < 0 || yy < 0 || xx as usize >= self.w || yy as usize >= self.h {
                return None;
            }
            let j = yy as usize * self.w + xx as usize;
            self.on[j].then_some((j, *dx == 0 || *dy == 0))
        })
    }

    fn trace(&self, start: usize, first: usize, exclude: &[usize], max: usize) -> Trace {
        let mut path = vec![first];
        let mut cur = first;
        loop {
            match self.cn[cur] {
                1 => return Trace { path, stop: Stop::Ending },
                c if c >= 3 => return Trace { path, stop: Stop::Junction },
                _ => {}
            }
            if path.len() >= max {
                return Trace { path, stop: Stop::Open };
            }
            let mut next = None;
            for (j, four) in self.neighbours(cur) {
                if j == start || exclude.contains(&j) || path.contains(&j) {
                    continue;
                }
                match next {
                    None => next = Some((j, four)),
                    Some((_, false)) if four => next = Some((j, four)),
                    _ => {}
                }
            }
            match next {
                Some((j, _)) => {
                    path.push(j);
                    cur = j;
                }
                None => return Trace { path, stop: Stop::Ending },
            }
        }
    }

    /// One representative pixel per 8-connected group of set neighbours,
    /// preferring 4-neighbours.
    fn branch_starts(&self, i: usize) -> Vec<usize> {
        let nb: Vec<(usize, bool)> = self.neighbours(i).collect();
        let mut group = vec![usize::MAX; nb.len()];
        let mut groups = 0;
        for s in 0..nb.len() {
            if group[s] != usize::MAX {
                continue;
            }
            group[s] = groups;
            let mut stack = vec![s];
            while let Some(k) = stack.pop() {
                let a = nb[k].0;
                let (ax, ay) = ((a % self.w) as isize, (a / self.w) as isize);
                for (m, item) in nb.iter().enumerate() {
                    if group[m] != usize::MAX {
                        continue;
                    }
                    let (bx, by) = ((item.0 % self.w) as isize, (item.0 / self.w) as isize);
                    if (ax - bx).abs() <= 1 && (ay - by).abs() <= 1 {
                        group[m] = groups;
                        stack.push(m);
                    }
                }
            }
            groups += 1;
        }
        (0..groups)
            .map(|g| {
                let members: Vec<&(usize, bool)> = nb.iter().zip(&group).filter(|(_, gg)| **gg == g).map(|(n, _)| n).collect();
                members.iter().find(|m| m.1).unwrap_or(&members[0]).0
            })
            .collect()
    }

    fn direction(&self, from: usize, path: &[usize], len: usize) -> Option<f64> {
        let k = path.len().min(len);
        if k < 3 {
            return None;
        }
        let to = path[k - 1];
        let dx = (to % self.w) as f64 - (from % self.w) as f64;
        let dy = (to / self.w) as f64 - (from / self.w) as f64;
        Some(dy.atan2(dx))
    }
}

fn circular_mean(a: f64, b: f64) -> f64 {
    (a.sin() + b.sin()).atan2(a.cos() + b.cos())
}

/// Snaps a traced direction onto the (axial) orientation field when they agree.
fn refine(theta: f64, field: &OrientationField, x: f64, y: f64) -> f64 {
    let (axis, coh) = field.at(x, y);
    if coh < 0.2 {
        return wrap_2pi(theta);
    }
    let cand = if angle_diff(axis, theta) <= angle_diff(axis + std::f64::consts::PI, theta) {
        axis
    } else {
        axis + std::f64::consts::PI
    };
    if angle_diff(cand, theta) < 45f64.to_radians() {
        wrap_2pi(cand)
    } else {
        wrap_2pi(theta)
    }
}

struct Candidate {
    idx: usize,
    kind: MinutiaKind,
    theta: f64,
    removed: bool,
}

/// Full extraction with default parameters.
pub fn extract_minutiae(img: &Image<f64>, params: &ExtractParams) -> Extraction {
    let dims = img.dims();
    let Some(analysis) = analyze_ridges(img, params) else {
        return Extraction {
            minutiae: MinutiaeSet::empty(dims),
            no_ridge_structure: true,
            analysis: None,
        };
    };
    let minutiae = minutiae_from_analysis(&analysis, img, params);
    Extraction {
        minutiae,
        no_ridge_structure: false,
        analysis: Some(analysis),
    }
}

pub(crate) fn minutiae_from_analysis(a: &RidgeAnalysis, img: &Image<f64>, p: &ExtractParams) -> MinutiaeSet {
    let (w, h) = img.dims();
    let ridge: Vec<bool> = (0..w * h)
        .map(|i| a.foreground.bits()[i] && a.enhanced.pixels()[i] < 0.5)
        .collect();
    let on = zhang_suen(&ridge, w, h);
    let cn: Vec<u8> = (0..w * h)
        .map(|i| {
            if on[i] {
                ring_crossings(ring_bits(&on, w, h, i % w, i / w)) as u8
            } else {
                0
            }
        })
        .collect();
    let sk = Skeleton { w, h, on, cn };

    let b = p.foreground_block.max(1);
    let (bw, bh) = (w.div_ceil(b), h.div_ceil(b));
    let fg_blocks: Vec<bool> = (0..bw * bh)
        .map(|i| a.foreground.get(((i % bw) * b).min(w - 1), ((i / bw) * b).min(h - 1)))
        .collect();
    let valid_blocks = erode_blocks(&fg_blocks, bw, bh, p.border_blocks);
    let valid = |i: usize| {
        let (x, y) = (i % w, i / w);
        let m = p.image_margin;
        x >= m && y >= m && x + m < w && y + m < h && valid_blocks[(y / b) * bw + x / b]
    };

    let spur = p.spur_len.ceil() as usize;
    let max_trace = p.trace_len.max(spur) + 2;
    let mut cands: Vec<Candidate> = Vec::new();
    for i in 0..w * h {
        if !sk.on[i] || !valid(i) {
            continue;
        }
        let (x, y) = ((i % w) as f64, (i / w) as f64);
        match sk.cn[i] {
            1 => {
                let starts = sk.branch_starts(i);
                let Some(&first) = starts.first() else { continue };
                let t = sk.trace(i, first, &[], max_trace);
                let short = t.stop != Stop::Open && (t.path.len() as f64) < p.spur_len;
                let Some(dir) = sk.direction(i, &t.path, p.trace_len) else {
                    continue;
                };
                cands.push(Candidate {
                    idx: i,
                    kind: MinutiaKind::Ending,
                    theta: refine(dir, &a.field, x, y),
                    removed: short,
                });
            }
            3 => {
                let starts = sk.branch_starts(i);
                if starts.len() != 3 {
                    continue;
                }
                let mut dirs = Vec::with_capacity(3);
                let mut short = false;
                for &s in &starts {
                    let t = sk.trace(i, s, &starts, max_trace);
                    if t.stop != Stop::Open && (t.path.len() as f64) < p.spur_len {
                        short = true;
                    }
                    dirs.push(sk.direction(i, &t.path, p.trace_len));
                }
                if dirs.iter().any(|d| d.is_none()) {
                    continue;
                }
                let d: Vec<f64> = dirs.into_iter().flatten().collect();
                let pairs = [(0, 1), (0, 2), (1, 2)];
                let &(u, v) = pairs
                    .iter()
                    .min_by(|x, y| angle_diff(d[x.0], d[x.1]).total_cmp(&angle_diff(d[y.0], d[y.1])))
                    .expect("three pairs");
                cands.push(Candidate {
                    idx: i,
                    kind: MinutiaKind::Bifurcation,
                    theta: refine(circular_mean(d[u], d[v]), &a.field, x, y),
                    removed: short,
                });
            }
            _ => {}
        }
    }

    // broken ridges: facing endings close together
    let pos = |i: usize| ((i % w) as f64, (i / w) as f64);
    for i in 0..cands.len() {
        if cands[i].kind != MinutiaKind::Ending {
            continue;
        }
        for j in i + 1..cands.len() {
            if cands[j].kind != MinutiaKind::Ending {
                continue;
            }
            let (xi, yi) = pos(cands[i].idx);
            let (xj, yj) = pos(cands[j].idx);
            let d = ((xi - xj).powi(2) + (yi - yj).powi(2)).sqrt();
            if d < p.opposing_gap && angle_diff(cands[i].theta, cands[j].theta) > 120f64.to_radians() {
                cands[i].removed = true;
                cands[j].removed = true;
            }
        }
    }

    let minutiae = cands
        .iter()
        .filter(|c| !c.removed)
        .map(|c| {
            let (x, y) = pos(c.idx);
            let (_, coh) = a.field.at(x, y);
            Minutia::new(x, y, c.theta, c.kind, coh)
        })
        .collect();
    MinutiaeSet::new(minutiae, (w, h))
}
