//! Small dense linear algebra on row-major `Vec<f64>` storage.

use crate::error::{Error, Result};

/// Solves `a x = b` for square `a` (row-major, `dim × dim`) by Gaussian
/// elimination with partial pivoting. `a` and `b` are consumed.
pub fn solve(mut a: Vec<f64>, mut b: Vec<f64>, dim: usize) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), dim * dim);
    debug_assert_eq!(b.len(), dim);
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for col in 0..dim {
        let pivot = (col..dim)
            .max_by(|&i, &j| a[i * dim + col].abs().total_cmp(&a[j * dim + col].abs()))
            .expect("non-empty range");
        if a[pivot * dim + col].abs() <= 1e-13 * scale {
            return Err(Error::SingularSystem);
        }
        if pivot != col {
            for k in 0..dim {
                a.swap(pivot * dim + k, col * dim + k);
            }
            b.swap(pivot, col);
        }
        let diag = a[col * dim + col];
        for row in col + 1..dim {
            let factor = a[row * dim + col] / diag;
            if factor == 0.0 {
                continue;
            }
            a[row * dim + col] = 0.0;
            for k in col + 1..dim {
                a[row * dim + k] -= factor * a[col * dim + k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; dim];
    for row in (0..dim).rev() {
        let mut acc = b[row];
        for k in row + 1..dim {
            acc -= a[row * dim + k] * x[k];
        }
        x[row] = acc / a[row * dim + row];
    }
    Ok(x)
}

pub fn matmul(a: &[f64], b: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim * dim];
    for i in 0..dim {
        for k in 0..dim {
            let aik = a[i * dim + k];
            if aik == 0.0 {
                continue;
            }
            for j in 0..dim {
                out[i * dim + j] += aik * b[k * dim + j];
            }
        }
    }
    out
}

/// `m^power` by repeated squaring.
pub fn matpow(m: &[f64], dim: usize, mut power: u64) -> Vec<f64> {
    let mut result = identity(dim);
    let mut base = m.to_vec();
    while power > 0 {
        if power & 1 == 1 {
            result = matmul(&result, &base, dim);
        }
        power >>= 1;
        if power > 0 {
            base = matmul(&base, &base, dim);
        }
    }
    result
}

pub fn identity(dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim * dim];
    for i in 0..dim {
        out[i * dim + i] = 1.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        // 2x + y = 3, x + 3y = 5 -> x = 0.8, y = 1.4
        let x = solve(vec![2.0, 1.0, 1.0, 3.0], vec![3.0, 5.0], 2).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14);
        assert!((x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn needs_pivoting() {
        let x = solve(vec![0.0, 1.0, 1.0, 0.0], vec![2.0, 7.0], 2).unwrap();
        assert_eq!(x, vec![7.0, 2.0]);
    }

    #[test]
    fn singular_is_reported() {
        let err = solve(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 2.0], 2).unwrap_err();
        assert_eq!(err, Error::SingularSystem);
    }

    #[test]
    fn power_matches_repeated_product() {
        let m = vec![0.9, 0.1, 0.5, 0.5];
        let mut slow = identity(2);
        for _ in 0..7 {
            slow = matmul(&slow, &m, 2);
        }
        let fast = matpow(&m, 2, 7);
        for (a, b) in slow.iter().zip(&fast) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
