//! Central finite-difference checks of every analytic gradient: the warp
//! sampler (similarity + spline parameters) and the training losses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::geometry::{warp_param_gradients, warp_source_coords, AffineParams, TpsField};
use crate::imaging::Image;
use crate::representation::{
    adversarial_raw, adversary_head_raw, identity_raw, loss_adversarial_grad, loss_adversary_head_grad,
    loss_identity_grad, loss_stn, loss_stn_grad, loss_total_deepprint_grad, Embedding, LossGradients, LossInputs,
    LossWeights,
};
use crate::segmentation::{seg_bce_grad, seg_bce_loss, Mask, ProbMask, Reduction};

pub const STEP: f64 = 1e-4;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error, so gradients that are zero up
/// to rounding compare absolutely.
pub const REL_FLOOR: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub suite: String,
    pub config: usize,
    pub params: usize,
    pub max_rel_error: f64,
    pub worst_param: String,
    /// Pixels left out of a warp check because a sample crossed a bilinear kink.
    pub excluded: usize,
}

impl CheckEntry {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= TOLERANCE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub step: f64,
    pub tolerance: f64,
    pub entries: Vec<CheckEntry>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(CheckEntry::passed)
    }

    pub fn suites(&self) -> Vec<String> {
        let mut s: Vec<String> = self.entries.iter().map(|e| e.suite.clone()).collect();
        s.dedup();
        s
    }

    pub fn worst(&self, suite: &str) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.suite == suite)
            .fold(0.0, |a, e| a.max(e.max_rel_error))
    }
}

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

struct Tracker {
    worst: f64,
    name: String,
    count: usize,
}

impl Tracker {
    fn new() -> Self {
        Self {
            worst: 0.0,
            name: String::new(),
            count: 0,
        }
    }

    fn add(&mut self, name: impl FnOnce() -> String, analytic: f64, numeric: f64) {
        let e = rel_error(analytic, numeric);
        self.count += 1;
        if e > self.worst || self.name.is_empty() {
            self.worst = self.worst.max(e);
            self.name = name();
        }
    }

    fn finish(self, suite: &str, config: usize, excluded: usize) -> CheckEntry {
        CheckEntry {
            suite: suite.to_string(),
            config,
            params: self.count,
            max_rel_error: self.worst,
            worst_param: self.name,
            excluded,
        }
    }
}

struct WarpCase {
    img: Image<f64>,
    affine: [f64; 4],
    disp: Vec<[f64; 2]>,
    upstream: Vec<f64>,
}

const WARP_SIDE: usize = 40;
const WARP_GRID: usize = 4;

impl WarpCase {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = WARP_SIDE;
        let (fx, fy, ph) = (rng.gen_range(0.1..0.4), rng.gen_range(0.1..0.4), rng.gen_range(0.0..6.0));
        let img = Image::from_fn(n, n, |x, y| {
            (0.5 + 0.3 * (fx * x as f64 + ph).sin() * (fy * y as f64).cos() + 0.1 * rng.gen::<f64>()).clamp(0.0, 1.0)
        });
        Self {
            img,
            affine: [
                rng.gen_range(0.8..1.25),
                rng.gen_range(-0.3..0.3),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            ],
            disp: (0..WARP_GRID * WARP_GRID)
                .map(|_| [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
                .collect(),
            upstream: (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        }
    }

    fn params(&self) -> Vec<f64> {
        let mut v = self.affine.to_vec();
        for d in &self.disp {
            v.extend_from_slice(d);
        }
        v
    }

    fn unpack(&self, v: &[f64]) -> Result<(AffineParams<f64>, TpsField<f64>)> {
        let a = AffineParams::new(v[0], v[1], v[2], v[3])?;
        let disp = v[4..].chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        let f = TpsField::lattice(WARP_GRID, WARP_SIDE, WARP_SIDE).with_displacements(disp)?;
        Ok((a, f))
    }

    fn coords(&self, v: &[f64]) -> Result<Vec<[f64; 2]>> {
        let (a, f) = self.unpack(v)?;
        warp_source_coords(WARP_SIDE, WARP_SIDE, &a, Some(&f))
    }

    fn objective(&self, coords: &[[f64; 2]], weights: &[f64]) -> f64 {
        coords
            .iter()
            .zip(weights)
            .map(|(s, g)| *g * self.img.sample_bilinear(s[0], s[1]))
            .sum()
    }
}

fn param_name(i: usize) -> String {
    match i {
        0 => "s".into(),
        1 => "theta".into(),
        2 => "tx".into(),
        3 => "ty".into(),
        k => format!("d{}[{}]", (k - 4) / 2, if (k - 4) % 2 == 0 { "x" } else { "y" }),
    }
}

fn same_cell(a: [f64; 2], b: [f64; 2]) -> bool {
    a[0].floor() == b[0].floor() && a[1].floor() == b[1].floor()
}

/// The bilinear sampler is only piecewise smooth, so for each parameter the
/// pixels whose sample moves to another cell within `+-h` are dropped from
/// both the analytic and the numeric side.
pub fn check_warp(config: usize, rng: &mut ChaCha8Rng) -> Result<CheckEntry> {
    let case = WarpCase::random(rng);
    let base = case.params();
    let c0 = case.coords(&base)?;
    let mut t = Tracker::new();
    let mut excluded = 0;
    for i in 0..base.len() {
        let mut plus = base.clone();
        plus[i] += STEP;
        let mut minus = base.clone();
        minus[i] -= STEP;
        let cp = case.coords(&plus)?;
        let cm = case.coords(&minus)?;
        let weights: Vec<f64> = (0..c0.len())
            .map(|k| {
                if same_cell(c0[k], cp[k]) && same_cell(c0[k], cm[k]) {
                    case.upstream[k]
                } else {
                    excluded += 1;
                    0.0
                }
            })
            .collect();
        let numeric = (case.objective(&cp, &weights) - case.objective(&cm, &weights)) / (2.0 * STEP);
        let (a, f) = case.unpack(&base)?;
        let analytic = warp_param_gradients(&case.img, &a, &f, &weights)?.to_vec()[i];
        t.add(|| param_name(i), analytic, numeric);
    }
    Ok(t.finish("warp", config, excluded))
}

type Field = fn(&mut LossInputs<f64>) -> &mut Vec<f64>;
type GradField = fn(&LossGradients<f64>) -> &Vec<f64>;

const FIELDS: [(&str, Field, GradField); 9] = [
    ("probs_minutiae", |x| &mut x.probs_minutiae, |g| &g.probs_minutiae),
    ("probs_texture", |x| &mut x.probs_texture, |g| &g.probs_texture),
    ("r1", |x| &mut x.r1, |g| &g.r1),
    ("r2", |x| &mut x.r2, |g| &g.r2),
    ("center1", |x| &mut x.center1, |g| &g.center1),
    ("center2", |x| &mut x.center2, |g| &g.center2),
    ("map_true", |x| &mut x.map_true, |g| &g.map_true),
    ("map_pred", |x| &mut x.map_pred, |g| &g.map_pred),
    ("adversary_probs", |x| &mut x.adversary_probs, |g| &g.adversary_probs),
];

fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn random_inputs(rng: &mut ChaCha8Rng) -> LossInputs<f64> {
    let k = rng.gen_range(2..8);
    let d = rng.gen_range(4..24);
    let c = rng.gen_range(2..5);
    let m = rng.gen_range(6..30);
    let mut vec = |n: usize, lo: f64, hi: f64| (0..n).map(|_| rng.gen_range(lo..hi)).collect::<Vec<f64>>();
    let (r1, r2, center1, center2) = (vec(d, -1.0, 1.0), vec(d, -1.0, 1.0), vec(d, -1.0, 1.0), vec(d, -1.0, 1.0));
    let (map_true, map_pred) = (vec(m, 0.0, 1.0), vec(m, 0.0, 1.0));
    LossInputs {
        probs_minutiae: simplex(rng, k),
        probs_texture: simplex(rng, k),
        r1,
        r2,
        center1,
        center2,
        map_true,
        map_pred,
        adversary_probs: simplex(rng, c),
        label: rng.gen_range(0..k),
        device_label: rng.gen_range(0..c),
    }
}

/// Checks an objective over every continuous input field.
fn check_fields(
    suite: &str,
    config: usize,
    x: &LossInputs<f64>,
    f: impl Fn(&LossInputs<f64>) -> f64,
    grad: &LossGradients<f64>,
) -> CheckEntry {
    let mut t = Tracker::new();
    for (name, field, gfield) in FIELDS {
        let n = field(&mut x.clone()).len();
        for i in 0..n {
            let mut p = x.clone();
            field(&mut p)[i] += STEP;
            let mut m = x.clone();
            field(&mut m)[i] -= STEP;
            let numeric = (f(&p) - f(&m)) / (2.0 * STEP);
            t.add(|| format!("{name}[{i}]"), gfield(grad)[i], numeric);
        }
    }
    t.finish(suite, config, 0)
}

fn only_adversary(x: &LossInputs<f64>, g: Vec<f64>) -> LossGradients<f64> {
    let z = |v: &Vec<f64>| vec![0.0; v.len()];
    LossGradients {
        probs_minutiae: z(&x.probs_minutiae),
        probs_texture: z(&x.probs_texture),
        r1: z(&x.r1),
        r2: z(&x.r2),
        center1: z(&x.center1),
        center2: z(&x.center2),
        map_true: z(&x.map_true),
        map_pred: z(&x.map_pred),
        adversary_probs: g,
    }
}

pub fn check_losses(config: usize, rng: &mut ChaCha8Rng) -> Result<Vec<CheckEntry>> {
    let x = random_inputs(rng);
    let w = LossWeights {
        lambda1: rng.gen_range(0.1..2.0),
        lambda2: rng.gen_range(0.0..0.5),
        lambda3: rng.gen_range(0.0..0.5),
        lambda4: rng.gen_range(0.0..0.5),
    };
    let mut out = Vec::new();
    out.push(check_fields("loss_identity", config, &x, |v| identity_raw(v, &w).total, &loss_identity_grad(&x, &w)?));
    out.push(check_fields(
        "loss_adversarial",
        config,
        &x,
        adversarial_raw,
        &only_adversary(&x, loss_adversarial_grad(&x)?),
    ));
    out.push(check_fields(
        "loss_adversary_head",
        config,
        &x,
        adversary_head_raw,
        &only_adversary(&x, loss_adversary_head_grad(&x)?),
    ));
    out.push(check_fields(
        "loss_total",
        config,
        &x,
        |v| identity_raw(v, &w).total + w.lambda4 * adversarial_raw(v),
        &loss_total_deepprint_grad(&x, &w)?,
    ));

    let d = rng.gen_range(8..64);
    let a = Embedding::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let b = Embedding::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())?;
    let g = loss_stn_grad(&a, &b)?;
    let mut t = Tracker::new();
    for i in 0..d {
        let mut p = a.clone();
        p.values[i] += STEP;
        let mut m = a.clone();
        m.values[i] -= STEP;
        let numeric = (loss_stn(&p, &b)? - loss_stn(&m, &b)?) / (2.0 * STEP);
        t.add(|| format!("r_cl[{i}]"), g[i], numeric);
    }
    out.push(t.finish("loss_stn", config, 0));

    let (mw, mh) = (rng.gen_range(3..12), rng.gen_range(3..12));
    let probs: Vec<f64> = (0..mw * mh).map(|_| rng.gen_range(0.02..0.98)).collect();
    let gt = Mask::from_fn(mw, mh, |_, _| rng.gen_bool(0.5));
    let reduction = if config % 2 == 0 { Reduction::Sum } else { Reduction::Mean };
    let g = seg_bce_grad(&ProbMask::new(mw, mh, probs.clone())?, &gt, reduction)?;
    let mut t = Tracker::new();
    for i in 0..probs.len() {
        let mut p = probs.clone();
        p[i] += STEP;
        let mut m = probs.clone();
        m[i] -= STEP;
        let numeric = (seg_bce_loss(&ProbMask::new(mw, mh, p)?, &gt, reduction)?
            - seg_bce_loss(&ProbMask::new(mw, mh, m)?, &gt, reduction)?)
            / (2.0 * STEP);
        t.add(|| format!("p[{i}]"), g[i], numeric);
    }
    out.push(t.finish("seg_bce", config, 0));
    Ok(out)
}

/// Runs `configs` seeded random configurations of every suite.
pub fn run_gradcheck(configs: usize, seed: u64) -> Result<GradCheckReport> {
    let mut entries = Vec::new();
    for c in 0..configs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        entries.push(check_warp(c, &mut rng)?);
    }
    for c in 0..configs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1055);
        rng.set_stream(c as u64);
        entries.extend(check_losses(c, &mut rng)?);
    }
    entries.sort_by(|a, b| a.suite.cmp(&b.suite).then(a.config.cmp(&b.config)));
    Ok(GradCheckReport {
        step: STEP,
        tolerance: TOLERANCE,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_suites_pass_on_three_configs() {
        let r = run_gradcheck(3, 1).unwrap();
        for e in &r.entries {
            assert!(e.passed(), "{e:?}");
            assert!(e.params > 0);
        }
        assert_eq!(r.suites().len(), 7);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        assert!(rel_error(1.0, 1.01) > TOLERANCE);
        assert!(rel_error(1e-9, 0.0) < TOLERANCE);
    }
}
