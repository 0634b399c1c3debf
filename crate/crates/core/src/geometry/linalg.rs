use crate::error::{Error, Result};
use crate::scalar::Real;

/// Solves `A X = B` by Gaussian elimination with partial pivoting.
/// `a` is `n x n` row-major, `b` is `n x m` row-major; returns `X` as `n x m`.
pub(crate) fn solve<T: Real>(mut a: Vec<T>, mut b: Vec<T>, n: usize, m: usize) -> Result<Vec<T>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n * m);
    let scale = a.iter().fold(T::zero(), |acc, v| acc.max(v.abs()));
    let tol = scale * T::epsilon() * T::from_usize_lossy(n) * T::lit(16.0);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i * n + col]
                    .abs()
                    .partial_cmp(&a[j * n + col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(col);
        if !(a[pivot * n + col].abs() > tol) {
            return Err(Error::SingularSystem);
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            for k in 0..m {
                b.swap(col * m + k, pivot * m + k);
            }
        }
        let p = a[col * n + col];
        for row in col + 1..n {
            let f = a[row * n + col] / p;
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[row * n + k] -= f * v;
            }
            for k in 0..m {
                let v = b[col * m + k];
                b[row * m + k] -= f * v;
            }
        }
    }
    for col in (0..n).rev() {
        let p = a[col * n + col];
        for k in 0..m {
            let mut acc = b[col * m + k];
            for j in col + 1..n {
                acc -= a[col * n + j] * b[j * m + k];
            }
            b[col * m + k] = acc / p;
        }
    }
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        // [[2,1],[1,3]] x = [[3],[5]] -> x = [0.8, 1.4]
        let x = solve(vec![2.0, 1.0, 1.0, 3.0], vec![3.0, 5.0], 2, 1).unwrap();
        assert!((x[0] - 0.8f64).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
    }

    #[test]
    fn needs_pivoting() {
        let x = solve(vec![0.0, 1.0, 1.0, 0.0], vec![2.0, 3.0], 2, 1).unwrap();
        assert_eq!(x, vec![3.0f64, 2.0]);
    }

    #[test]
    fn detects_singular() {
        assert!(matches!(
            solve(vec![1.0f64, 2.0, 2.0, 4.0], vec![1.0, 2.0], 2, 1),
            Err(Error::SingularSystem)
        ));
    }
}
