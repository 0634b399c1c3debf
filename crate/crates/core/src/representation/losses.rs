//! Identity, adversarial, device-classifier and alignment losses.
//!
//! Class scores are probability vectors (softmax applied by the caller).

use serde::{Deserialize, Serialize};

use super::embedding::Embedding;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Probabilities are clamped from below before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub lambda4: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 0.00125,
            lambda3: 0.095,
            lambda4: 0.1,
        }
    }
}

impl LossWeights {
    fn validate(&self) -> Result<()> {
        let all = [self.lambda1, self.lambda2, self.lambda3, self.lambda4];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("loss weights must be finite and nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossInputs<T = f64> {
    /// Class probabilities from the minutiae branch.
    pub probs_minutiae: Vec<T>,
    /// Class probabilities from the texture branch.
    pub probs_texture: Vec<T>,
    pub r1: Vec<T>,
    pub r2: Vec<T>,
    /// Class centre for `r1` under the true label.
    pub center1: Vec<T>,
    pub center2: Vec<T>,
    /// Target minutiae map `H`, flattened.
    pub map_true: Vec<T>,
    /// Predicted minutiae map, flattened.
    pub map_pred: Vec<T>,
    /// Device-classifier probabilities over `C` devices.
    pub adversary_probs: Vec<T>,
    pub label: usize,
    pub device_label: usize,
}

fn check_simplex<T: Real>(p: &[T], what: &str) -> Result<()> {
    if p.iter().any(|v| !v.is_finite() || *v < T::zero()) {
        return Err(Error::param(format!("{what} must be finite and nonnegative")));
    }
    let s: T = p.iter().copied().sum();
    if (s.as_f64() - 1.0).abs() > 1e-6 {
        return Err(Error::param(format!("{what} must sum to 1 (got {s})")));
    }
    Ok(())
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::LengthMismatch { expected, actual });
    }
    Ok(())
}

impl<T: Real> LossInputs<T> {
    pub fn classes(&self) -> usize {
        self.probs_minutiae.len()
    }

    pub fn devices(&self) -> usize {
        self.adversary_probs.len()
    }

    fn validate_identity(&self) -> Result<()> {
        let k = self.classes();
        if k < 2 {
            return Err(Error::param("need at least 2 identity classes"));
        }
        check_len(k, self.probs_texture.len())?;
        check_simplex(&self.probs_minutiae, "minutiae-branch probabilities")?;
        check_simplex(&self.probs_texture, "texture-branch probabilities")?;
        if self.label >= k {
            return Err(Error::LabelOutOfRange {
                label: self.label,
                classes: k,
            });
        }
        check_len(self.r1.len(), self.center1.len())?;
        check_len(self.r2.len(), self.center2.len())?;
        check_len(self.map_true.len(), self.map_pred.len())?;
        Ok(())
    }

    fn validate_adversary(&self) -> Result<()> {
        if self.devices() < 2 {
            return Err(Error::param("need at least 2 device classes"));
        }
        check_simplex(&self.adversary_probs, "adversary probabilities")
    }
}

/// Per-term breakdown of the identity loss (weights already applied to `total` only).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityLoss<T = f64> {
    pub l1: T,
    pub l2: T,
    pub l3: T,
    pub total: T,
}

/// Gradients with respect to every continuous input of [`LossInputs`].
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradients<T = f64> {
    pub probs_minutiae: Vec<T>,
    pub probs_texture: Vec<T>,
    pub r1: Vec<T>,
    pub r2: Vec<T>,
    pub center1: Vec<T>,
    pub center2: Vec<T>,
    pub map_true: Vec<T>,
    pub map_pred: Vec<T>,
    pub adversary_probs: Vec<T>,
}

impl<T: Real> LossGradients<T> {
    fn zeros(x: &LossInputs<T>) -> Self {
        let z = |v: &Vec<T>| vec![T::zero(); v.len()];
        Self {
            probs_minutiae: z(&x.probs_minutiae),
            probs_texture: z(&x.probs_texture),
            r1: z(&x.r1),
            r2: z(&x.r2),
            center1: z(&x.center1),
            center2: z(&x.center2),
            map_true: z(&x.map_true),
            map_pred: z(&x.map_pred),
            adversary_probs: z(&x.adversary_probs),
        }
    }
}

#[inline]
fn neg_log<T: Real>(p: T) -> T {
    -p.max(T::lit(PROB_FLOOR)).ln()
}

#[inline]
fn neg_log_grad<T: Real>(p: T) -> T {
    if p > T::lit(PROB_FLOOR) {
        -T::one() / p
    } else {
        T::zero()
    }
}

fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| (*x - *y) * (*x - *y)).sum()
}

pub(crate) fn identity_raw<T: Real>(x: &LossInputs<T>, w: &LossWeights) -> IdentityLoss<T> {
    let l1 = neg_log(x.probs_minutiae[x.label]) + neg_log(x.probs_texture[x.label]);
    let l2 = sq_dist(&x.r1, &x.center1) + sq_dist(&x.r2, &x.center2);
    let l3 = sq_dist(&x.map_pred, &x.map_true);
    IdentityLoss {
        l1,
        l2,
        l3,
        total: T::lit(w.lambda1) * l1 + T::lit(w.lambda2) * l2 + T::lit(w.lambda3) * l3,
    }
}

pub(crate) fn adversarial_raw<T: Real>(x: &LossInputs<T>) -> T {
    let c = T::from_usize_lossy(x.adversary_probs.len());
    x.adversary_probs.iter().map(|q| neg_log(*q)).sum::<T>() / c
}

pub(crate) fn adversary_head_raw<T: Real>(x: &LossInputs<T>) -> T {
    neg_log(x.adversary_probs[x.device_label])
}

/// `l1 * (-ln p1[y] - ln p2[y]) + l2 * (|R1-c1|^2 + |R2-c2|^2) + l3 * |H^ - H|^2`.
pub fn loss_identity<T: Real>(x: &LossInputs<T>, w: &LossWeights) -> Result<IdentityLoss<T>> {
    w.validate()?;
    x.validate_identity()?;
    Ok(identity_raw(x, w))
}

pub fn loss_identity_grad<T: Real>(x: &LossInputs<T>, w: &LossWeights) -> Result<LossGradients<T>> {
    w.validate()?;
    x.validate_identity()?;
    Ok(identity_grad_raw(x, w))
}

fn identity_grad_raw<T: Real>(x: &LossInputs<T>, w: &LossWeights) -> LossGradients<T> {
    let mut g = LossGradients::zeros(x);
    let (l1, l2, l3) = (T::lit(w.lambda1), T::lit(w.lambda2), T::lit(w.lambda3));
    g.probs_minutiae[x.label] = l1 * neg_log_grad(x.probs_minutiae[x.label]);
    g.probs_texture[x.label] = l1 * neg_log_grad(x.probs_texture[x.label]);
    let two = T::lit(2.0);
    for i in 0..x.r1.len() {
        let d = two * l2 * (x.r1[i] - x.center1[i]);
        g.r1[i] = d;
        g.center1[i] = -d;
    }
    for i in 0..x.r2.len() {
        let d = two * l2 * (x.r2[i] - x.center2[i]);
        g.r2[i] = d;
        g.center2[i] = -d;
    }
    for i in 0..x.map_pred.len() {
        let d = two * l3 * (x.map_pred[i] - x.map_true[i]);
        g.map_pred[i] = d;
        g.map_true[i] = -d;
    }
    g
}

/// Cross-entropy of the device probabilities against the uniform target:
/// `-(1/C) sum_c ln q_c`.
pub fn loss_adversarial<T: Real>(x: &LossInputs<T>) -> Result<T> {
    x.validate_adversary()?;
    Ok(adversarial_raw(x))
}

pub fn loss_adversarial_grad<T: Real>(x: &LossInputs<T>) -> Result<Vec<T>> {
    x.validate_adversary()?;
    let c = T::from_usize_lossy(x.devices());
    Ok(x.adversary_probs.iter().map(|q| neg_log_grad(*q) / c).collect())
}

/// `L_ID + lambda4 * L_A`.
pub fn loss_total_deepprint<T: Real>(x: &LossInputs<T>, w: &LossWeights) -> Result<T> {
    let id = loss_identity(x, w)?;
    let adv = loss_adversarial(x)?;
    Ok(id.total + T::lit(w.lambda4) * adv)
}

pub fn loss_total_deepprint_grad<T: Real>(x: &LossInputs<T>, w: &LossWeights) -> Result<LossGradients<T>> {
    let mut g = loss_identity_grad(x, w)?;
    let adv = loss_adversarial_grad(x)?;
    let l4 = T::lit(w.lambda4);
    g.adversary_probs = adv.into_iter().map(|v| l4 * v).collect();
    Ok(g)
}

/// Device-classifier cross-entropy `-ln q[y_c]`.
pub fn loss_adversary_head<T: Real>(x: &LossInputs<T>) -> Result<T> {
    x.validate_adversary()?;
    if x.device_label >= x.devices() {
        return Err(Error::LabelOutOfRange {
            label: x.device_label,
            classes: x.devices(),
        });
    }
    Ok(adversary_head_raw(x))
}

pub fn loss_adversary_head_grad<T: Real>(x: &LossInputs<T>) -> Result<Vec<T>> {
    loss_adversary_head(x)?;
    let mut g = vec![T::zero(); x.devices()];
    g[x.device_label] = neg_log_grad(x.adversary_probs[x.device_label]);
    Ok(g)
}

/// Squared distance between the contactless and contact representations.
pub fn loss_stn<T: Real>(r_cl: &Embedding<T>, r_c: &Embedding<T>) -> Result<T> {
    check_len(r_c.dim(), r_cl.dim())?;
    Ok(sq_dist(&r_cl.values, &r_c.values))
}

/// Gradient of [`loss_stn`] with respect to the contactless representation.
pub fn loss_stn_grad<T: Real>(r_cl: &Embedding<T>, r_c: &Embedding<T>) -> Result<Vec<T>> {
    check_len(r_c.dim(), r_cl.dim())?;
    Ok(r_cl
        .values
        .iter()
        .zip(&r_c.values)
        .map(|(a, b)| T::lit(2.0) * (*a - *b))
        .collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect()
    }

    pub(crate) fn random_inputs(rng: &mut ChaCha8Rng, k: usize, d: usize, c: usize) -> LossInputs<f64> {
        let vec = |rng: &mut ChaCha8Rng, n: usize| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
        LossInputs {
            probs_minutiae: simplex(rng, k),
            probs_texture: simplex(rng, k),
            r1: vec(rng, d),
            r2: vec(rng, d),
            center1: vec(rng, d),
            center2: vec(rng, d),
            map_true: (0..d).map(|_| rng.gen_range(0.0..1.0)).collect(),
            map_pred: (0..d).map(|_| rng.gen_range(0.0..1.0)).collect(),
            adversary_probs: simplex(rng, c),
            label: rng.gen_range(0..k),
            device_label: rng.gen_range(0..c),
        }
    }

    fn perfect(k: usize) -> LossInputs<f64> {
        let mut one_hot = vec![0.0; k];
        one_hot[1] = 1.0;
        LossInputs {
            probs_minutiae: one_hot.clone(),
            probs_texture: one_hot,
            r1: vec![0.3, -0.2],
            r2: vec![0.1, 0.4],
            center1: vec![0.3, -0.2],
            center2: vec![0.1, 0.4],
            map_true: vec![0.5; 6],
            map_pred: vec![0.5; 6],
            adversary_probs: vec![0.25; 4],
            label: 1,
            device_label: 2,
        }
    }

    #[test]
    fn paper_weights() {
        let w = LossWeights::default();
        assert_eq!((w.lambda1, w.lambda2, w.lambda3, w.lambda4), (1.0, 0.00125, 0.095, 0.1));
    }

    #[test]
    fn identity_examples() {
        let w = LossWeights::default();
        let x = perfect(5);
        assert_eq!(loss_identity(&x, &w).unwrap().total, 0.0);
        let mut u = perfect(5);
        u.probs_minutiae = vec![0.2; 5];
        u.probs_texture = vec![0.2; 5];
        let l = loss_identity(&u, &w).unwrap();
        assert!((l.total - 2.0 * 5f64.ln()).abs() < 1e-12);
        let mut bad = perfect(5);
        bad.label = 5;
        assert!(matches!(loss_identity(&bad, &w), Err(Error::LabelOutOfRange { .. })));
    }

    #[test]
    fn identity_matches_scalar_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w = LossWeights::default();
        for _ in 0..20 {
            let x = random_inputs(&mut rng, 6, 8, 3);
            let mut l1 = 0.0;
            l1 -= x.probs_minutiae[x.label].ln();
            l1 -= x.probs_texture[x.label].ln();
            let mut l2 = 0.0;
            for i in 0..8 {
                l2 += (x.r1[i] - x.center1[i]).powi(2);
                l2 += (x.r2[i] - x.center2[i]).powi(2);
            }
            let mut l3 = 0.0;
            for i in 0..8 {
                l3 += (x.map_pred[i] - x.map_true[i]).powi(2);
            }
            let got = loss_identity(&x, &w).unwrap();
            assert!((got.total - (l1 + 0.00125 * l2 + 0.095 * l3)).abs() < 1e-12);
        }
    }

    #[test]
    fn adversarial_examples() {
        let x = perfect(3);
        assert!((loss_adversarial(&x).unwrap() - 4f64.ln()).abs() < 1e-12);
        let mut one = perfect(3);
        one.adversary_probs = vec![0.0, 1.0, 0.0, 0.0];
        let v = loss_adversarial(&one).unwrap();
        assert!(v > 4f64.ln());
        assert!((v - 0.75 * -(PROB_FLOOR.ln())).abs() < 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut r = perfect(3);
        r.adversary_probs = simplex(&mut rng, 4);
        let direct: f64 = r.adversary_probs.iter().map(|q| -q.ln() / 4.0).sum();
        assert!((loss_adversarial(&r).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn total_is_component_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let w = LossWeights::default();
        let x = random_inputs(&mut rng, 4, 8, 4);
        let id = loss_identity(&x, &w).unwrap().total;
        let adv = loss_adversarial(&x).unwrap();
        assert_eq!(loss_total_deepprint(&x, &w).unwrap(), id + 0.1 * adv);
        // L_ID = 1 and L_A = 2 with lambda4 = 0.1 gives 1.2
        assert!((1.0 + w.lambda4 * 2.0 - 1.2f64).abs() < 1e-15);
        let mut z = perfect(3);
        z.adversary_probs = vec![1.0, 0.0, 0.0, 0.0];
        let w0 = LossWeights { lambda4: 0.0, ..w };
        assert_eq!(loss_total_deepprint(&z, &w0).unwrap(), 0.0);
    }

    #[test]
    fn adversary_head_examples() {
        let mut x = perfect(3);
        x.adversary_probs = vec![0.0, 0.0, 1.0, 0.0];
        assert_eq!(loss_adversary_head(&x).unwrap(), 0.0);
        x.adversary_probs = vec![0.25; 4];
        assert!((loss_adversary_head(&x).unwrap() - 4f64.ln()).abs() < 1e-12);
        x.device_label = 4;
        assert!(loss_adversary_head(&x).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut r = perfect(3);
        r.adversary_probs = simplex(&mut rng, 4);
        assert!((loss_adversary_head(&r).unwrap() + r.adversary_probs[2].ln()).abs() < 1e-12);
    }

    #[test]
    fn stn_examples() {
        let a = Embedding::<f64>::unit(vec![1.0, 0.0, 0.0]).unwrap();
        let b = Embedding::<f64>::unit(vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(loss_stn(&a, &a).unwrap(), 0.0);
        assert!((loss_stn(&a, &b).unwrap() - 2.0).abs() < 1e-12);
        let c = Embedding::unit(vec![1.0, 0.0]).unwrap();
        assert!(loss_stn(&a, &c).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = Embedding::<f64>::new((0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let y = Embedding::new((0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let mut direct = 0.0;
        for i in 0..8 {
            direct += (x.values[i] - y.values[i]) * (x.values[i] - y.values[i]);
        }
        assert!((loss_stn(&x, &y).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn invalid_simplex_rejected() {
        let mut x = perfect(3);
        x.probs_minutiae = vec![0.5, 0.6, 0.0];
        assert!(loss_identity(&x, &LossWeights::default()).is_err());
        let mut y = perfect(3);
        y.adversary_probs = vec![1.0];
        assert!(loss_adversarial(&y).is_err());
    }
}
