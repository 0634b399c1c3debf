//! Comparison of two ROC curves through their Mann-Whitney AUC statistics.
//!
//! Small problems are decided by exact permutation enumeration; larger ones
//! use the DeLong normal approximation.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use super::ScoreSet;
use crate::error::{Error, Result};

/// Largest number of permutations enumerated exactly.
pub const EXACT_LIMIT: u64 = 1 << 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RocTestMode {
    /// `a` and `b` score the same trials in the same order.
    Paired,
    Independent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RocTestMethod {
    Exact,
    DeLong,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocTestResult {
    pub p_value: f64,
    pub auc_a: f64,
    pub auc_b: f64,
    pub method: RocTestMethod,
    /// Every score in both sets was equal; `p_value` is 1.
    pub degenerate: bool,
}

/// Twice the pairwise kernel: 2 if genuine wins, 1 on a tie.
#[inline]
fn h2(g: f64, i: f64) -> i64 {
    if g > i {
        2
    } else if g == i {
        1
    } else {
        0
    }
}

fn u2(gen: &[f64], imp: &[f64]) -> i64 {
    gen.iter().map(|g| imp.iter().map(|i| h2(*g, *i)).sum::<i64>()).sum()
}

/// AUC via midranks of the pooled sample.
fn auc(s: &ScoreSet) -> f64 {
    let (v10, _) = placements(s);
    v10.iter().sum::<f64>() / v10.len() as f64
}

/// DeLong structural components: per-genuine and per-imposter placement values.
fn placements(s: &ScoreSet) -> (Vec<f64>, Vec<f64>) {
    let mut g = s.genuine.clone();
    let mut i = s.imposter.clone();
    g.sort_by(|a, b| a.total_cmp(b));
    i.sort_by(|a, b| a.total_cmp(b));
    let below = |sorted: &[f64], v: f64| -> (usize, usize) {
        let lt = sorted.partition_point(|x| *x < v);
        let le = sorted.partition_point(|x| *x <= v);
        (lt, le - lt)
    };
    let (m, n) = (g.len() as f64, i.len() as f64);
    let v10 = s
        .genuine
        .iter()
        .map(|x| {
            let (lt, eq) = below(&i, *x);
            (lt as f64 + 0.5 * eq as f64) / n
        })
        .collect();
    let v01 = s
        .imposter
        .iter()
        .map(|y| {
            let (lt, eq) = below(&g, *y);
            let gt = g.len() - lt - eq;
            (gt as f64 + 0.5 * eq as f64) / m
        })
        .collect();
    (v10, v01)
}

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1) as f64
}

fn binom(n: u64, k: u64) -> u64 {
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for j in 0..k {
        r = r * (n - j) as u128 / (j + 1) as u128;
        if r > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    r as u64
}

fn exact_paired(a: &ScoreSet, b: &ScoreSet) -> f64 {
    let ng = a.genuine.len();
    let n = ng + a.imposter.len();
    let obs = (u2(&a.genuine, &a.imposter) - u2(&b.genuine, &b.imposter)).abs();
    let mut ga = a.genuine.clone();
    let mut gb = b.genuine.clone();
    let mut ia = a.imposter.clone();
    let mut ib = b.imposter.clone();
    let mut hits = 0u64;
    for mask in 0u64..(1u64 << n) {
        for k in 0..n {
            let swap = mask >> k & 1 == 1;
            if k < ng {
                (ga[k], gb[k]) = if swap { (b.genuine[k], a.genuine[k]) } else { (a.genuine[k], b.genuine[k]) };
            } else {
                let j = k - ng;
                (ia[j], ib[j]) = if swap { (b.imposter[j], a.imposter[j]) } else { (a.imposter[j], b.imposter[j]) };
            }
        }
        if (u2(&ga, &ia) - u2(&gb, &ib)).abs() >= obs {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

/// Subsets of `0..n` with exactly `k` members, as bitmasks.
fn combinations(n: usize, k: usize) -> Vec<u64> {
    if k == 0 {
        return vec![0];
    }
    let mut out = Vec::new();
    let mut m: u64 = (1u64 << k) - 1;
    while m < (1u64 << n) {
        out.push(m);
        // next mask with the same popcount
        let c = m & m.wrapping_neg();
        let r = m + c;
        m = (((r ^ m) >> 2) / c) | r;
    }
    out
}

fn exact_independent(a: &ScoreSet, b: &ScoreSet) -> f64 {
    let pg: Vec<f64> = a.genuine.iter().chain(&b.genuine).copied().collect();
    let pi: Vec<f64> = a.imposter.iter().chain(&b.imposter).copied().collect();
    let (nga, nia) = (a.genuine.len(), a.imposter.len());
    let (ngb, nib) = (b.genuine.len(), b.imposter.len());
    let wa = (ngb * nib) as i64;
    let wb = (nga * nia) as i64;
    let h: Vec<Vec<i64>> = pg.iter().map(|g| pi.iter().map(|i| h2(*g, *i)).collect()).collect();
    let stat = |gm: u64, im: u64| -> i64 {
        let (mut ua, mut ub) = (0i64, 0i64);
        for (gi, row) in h.iter().enumerate() {
            let g_in_a = gm >> gi & 1 == 1;
            for (ii, v) in row.iter().enumerate() {
                let i_in_a = im >> ii & 1 == 1;
                if g_in_a && i_in_a {
                    ua += v;
                } else if !g_in_a && !i_in_a {
                    ub += v;
                }
            }
        }
        ua * wa - ub * wb
    };
    let obs = stat((1u64 << nga) - 1, (1u64 << nia) - 1).abs();
    let gsplits = combinations(pg.len(), nga);
    let isplits = combinations(pi.len(), nia);
    let mut hits = 0u64;
    for gm in &gsplits {
        for im in &isplits {
            if stat(*gm, *im).abs() >= obs {
                hits += 1;
            }
        }
    }
    hits as f64 / (gsplits.len() * isplits.len()) as f64
}

fn delong(a: &ScoreSet, b: &ScoreSet, mode: RocTestMode) -> f64 {
    let (a10, a01) = placements(a);
    let (b10, b01) = placements(b);
    let auc_a = a10.iter().sum::<f64>() / a10.len() as f64;
    let auc_b = b10.iter().sum::<f64>() / b10.len() as f64;
    let var_one = |v10: &[f64], v01: &[f64]| cov(v10, v10) / v10.len() as f64 + cov(v01, v01) / v01.len() as f64;
    let mut var = var_one(&a10, &a01) + var_one(&b10, &b01);
    if mode == RocTestMode::Paired {
        var -= 2.0 * (cov(&a10, &b10) / a10.len() as f64 + cov(&a01, &b01) / a01.len() as f64);
    }
    let diff = auc_a - auc_b;
    if var <= 1e-300 {
        return if diff.abs() < 1e-15 { 1.0 } else { 0.0 };
    }
    let z = diff / var.sqrt();
    erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

/// Two-sided test of equal AUC for two systems. Ties count one half.
pub fn mann_whitney_roc_test(a: &ScoreSet, b: &ScoreSet, mode: RocTestMode) -> Result<RocTestResult> {
    a.require_both()?;
    b.require_both()?;
    if mode == RocTestMode::Paired
        && (a.genuine.len() != b.genuine.len() || a.imposter.len() != b.imposter.len())
    {
        return Err(Error::param("paired ROC test needs equally sized score sets"));
    }
    let (auc_a, auc_b) = (auc(a), auc(b));
    let first = a.genuine[0];
    let degenerate = a
        .genuine
        .iter()
        .chain(&a.imposter)
        .chain(&b.genuine)
        .chain(&b.imposter)
        .all(|v| *v == first);
    if degenerate || a == b {
        return Ok(RocTestResult {
            p_value: 1.0,
            auc_a,
            auc_b,
            method: RocTestMethod::Exact,
            degenerate,
        });
    }
    let (ng, ni) = (
        (a.genuine.len() + b.genuine.len()) as u64,
        (a.imposter.len() + b.imposter.len()) as u64,
    );
    let configs = match mode {
        RocTestMode::Paired => {
            let n = (a.genuine.len() + a.imposter.len()) as u32;
            if n >= 63 { u64::MAX } else { 1u64 << n }
        }
        RocTestMode::Independent if ng < 64 && ni < 64 => {
            binom(ng, a.genuine.len() as u64).saturating_mul(binom(ni, a.imposter.len() as u64))
        }
        RocTestMode::Independent => u64::MAX,
    };
    let (p_value, method) = if configs <= EXACT_LIMIT {
        let p = match mode {
            RocTestMode::Paired => exact_paired(a, b),
            RocTestMode::Independent => exact_independent(a, b),
        };
        (p, RocTestMethod::Exact)
    } else {
        (delong(a, b, mode), RocTestMethod::DeLong)
    };
    Ok(RocTestResult {
        p_value,
        auc_a,
        auc_b,
        method,
        degenerate: false,
    })
}
