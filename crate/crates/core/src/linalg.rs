//! Dense symmetric linear algebra: Cholesky factorization and triangular ops.
//!
//! The matrices involved (GP kernels over a few hundred training rows) are
//! small enough that straightforward O(n^3) routines are adequate.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// Fails on a non-positive pivot, which signals an indefinite or severely
/// ill-conditioned input.
pub fn cholesky_lower(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Schema(format!(
            "cholesky requires a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[[i, j]];
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return Err(Error::Numerics(format!(
                        "cholesky pivot {} is non-positive ({s:.3e})",
                        i
                    )));
                }
                l[[i, i]] = s.sqrt();
            } else {
                l[[i, j]] = s / l[[j, j]];
            }
        }
    }
    Ok(l)
}

/// Solve L x = b in place (forward substitution).
pub fn solve_lower(l: &Array2<f64>, b: &mut [f64]) {
    let n = l.nrows();
    debug_assert_eq!(b.len(), n);
    for i in 0..n {
        let mut s = b[i];
        let row = l.row(i);
        for k in 0..i {
            s -= row[k] * b[k];
        }
        b[i] = s / row[i];
    }
}

/// Solve L^T x = b in place (backward substitution).
pub fn solve_lower_transpose(l: &Array2<f64>, b: &mut [f64]) {
    let n = l.nrows();
    debug_assert_eq!(b.len(), n);
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in (i + 1)..n {
            s -= l[[k, i]] * b[k];
        }
        b[i] = s / l[[i, i]];
    }
}

/// Solve (L L^T) x = b, overwriting b with x.
pub fn solve_spd(l: &Array2<f64>, b: &mut [f64]) {
    solve_lower(l, b);
    solve_lower_transpose(l, b);
}

/// y = L v for lower-triangular L.
pub fn lower_matvec(l: &Array2<f64>, v: &[f64], out: &mut [f64]) {
    let n = l.nrows();
    debug_assert_eq!(v.len(), n);
    debug_assert_eq!(out.len(), n);
    let lslice = l.as_slice().expect("contiguous");
    for i in 0..n {
        let row = &lslice[i * n..i * n + i + 1];
        let mut s = 0.0;
        for (lik, vk) in row.iter().zip(&v[..=i]) {
            s += lik * vk;
        }
        out[i] = s;
    }
}

/// y = L^T v for lower-triangular L.
pub fn lower_transpose_matvec(l: &Array2<f64>, v: &[f64], out: &mut [f64]) {
    let n = l.nrows();
    debug_assert_eq!(v.len(), n);
    debug_assert_eq!(out.len(), n);
    let lslice = l.as_slice().expect("contiguous");
    out.iter_mut().for_each(|o| *o = 0.0);
    for k in 0..n {
        let row = &lslice[k * n..k * n + k + 1];
        let vk = v[k];
        for (o, lki) in out[..=k].iter_mut().zip(row.iter()) {
            *o += lki * vk;
        }
    }
}

/// Full inverse of the SPD matrix from its Cholesky factor.
pub fn spd_inverse_from_cholesky(l: &Array2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|c| *c = 0.0);
        col[j] = 1.0;
        solve_spd(l, &mut col);
        for i in 0..n {
            inv[[i, j]] = col[i];
        }
    }
    inv
}

/// log |A| for A = L L^T.
pub fn log_det_from_cholesky(l: &Array2<f64>) -> f64 {
    (0..l.nrows()).map(|i| l[[i, i]].ln()).sum::<f64>() * 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn cholesky_of_known_matrix() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let l = cholesky_lower(&a).unwrap();
        assert_relative_eq!(l[[0, 0]], 2.0);
        assert_relative_eq!(l[[1, 0]], 1.0);
        assert_relative_eq!(l[[1, 1]], 2f64.sqrt());
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = array![[1.0, 2.0], [2.0, 1.0]];
        assert!(cholesky_lower(&a).is_err());
    }

    #[test]
    fn solve_round_trips() {
        let a = array![[4.0, 2.0, 0.5], [2.0, 3.0, 0.2], [0.5, 0.2, 5.0]];
        let l = cholesky_lower(&a).unwrap();
        let x_true = [1.0, -2.0, 0.5];
        let mut b = vec![0.0; 3];
        for i in 0..3 {
            for j in 0..3 {
                b[i] += a[[i, j]] * x_true[j];
            }
        }
        solve_spd(&l, &mut b);
        for (got, want) in b.iter().zip(x_true.iter()) {
            assert_relative_eq!(got, want, max_relative = 1e-12);
        }
    }

    #[test]
    fn matvec_agrees_with_dense() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let l = cholesky_lower(&a).unwrap();
        let v = [1.0, 2.0];
        let mut lv = [0.0; 2];
        let mut ltv = [0.0; 2];
        lower_matvec(&l, &v, &mut lv);
        lower_transpose_matvec(&l, &v, &mut ltv);
        assert_relative_eq!(lv[0], l[[0, 0]] * 1.0);
        assert_relative_eq!(lv[1], l[[1, 0]] + 2.0 * l[[1, 1]]);
        assert_relative_eq!(ltv[0], l[[0, 0]] + 2.0 * l[[1, 0]]);
        assert_relative_eq!(ltv[1], 2.0 * l[[1, 1]]);
    }

    #[test]
    fn inverse_and_logdet() {
        let a = array![[4.0, 2.0], [2.0, 3.0]];
        let l = cholesky_lower(&a).unwrap();
        let inv = spd_inverse_from_cholesky(&l);
        // det = 8, inverse = [[3,-2],[-2,4]] / 8
        assert_relative_eq!(log_det_from_cholesky(&l), 8f64.ln(), max_relative = 1e-12);
        assert_relative_eq!(inv[[0, 0]], 3.0 / 8.0, max_relative = 1e-12);
        assert_relative_eq!(inv[[0, 1]], -2.0 / 8.0, max_relative = 1e-12);
        assert_relative_eq!(inv[[1, 1]], 4.0 / 8.0, max_relative = 1e-12);
    }
}
