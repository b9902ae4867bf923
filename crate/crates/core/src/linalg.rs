//! Small dense linear-algebra helpers shared by the numerical modules.
//!
//! Everything here sits on top of `nalgebra`'s SVD and Schur routines; the
//! helpers only add the conventions the rest of the crate relies on
//! (descending singular values, full right singular bases, relative rank
//! thresholds).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

const SVD_EPS: f64 = 1e-15;
const SVD_MAX_ITER: usize = 10_000;
const SCHUR_MAX_ITER: usize = 10_000;

/// Singular values (descending) together with the full right singular basis.
///
/// Column `j` of `v` pairs with `values[j]`; columns past `values.len()` span
/// the structural null space of a wide input.
#[derive(Debug, Clone)]
pub struct RightSvd {
    pub values: Vec<f64>,
    pub v: DMatrix<f64>,
}

impl RightSvd {
    pub fn largest(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn smallest(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Number of singular values (out of the column count) regarded as zero.
    pub fn nullity(&self, threshold: f64) -> usize {
        let cols = self.v.ncols();
        let small = self.values.iter().filter(|&&s| s <= threshold).count();
        small + cols.saturating_sub(self.values.len())
    }

    /// Right singular vector attached to the smallest singular value.
    pub fn smallest_vector(&self) -> DVector<f64> {
        self.v.column(self.v.ncols() - 1).into_owned()
    }

    /// Orthonormal basis for the trailing `count` right singular vectors.
    pub fn trailing_basis(&self, count: usize) -> DMatrix<f64> {
        let cols = self.v.ncols();
        self.v.columns(cols - count, count).into_owned()
    }
}

/// SVD returning the full right basis, sorted by descending singular value.
///
/// Wide matrices are padded with zero rows so that `v` is always square.
pub fn right_svd(m: &DMatrix<f64>) -> RightSvd {
    let (rows, cols) = m.shape();
    let padded = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(m);
        p
    } else {
        m.clone()
    };
    if cols == 0 {
        return RightSvd {
            values: Vec::new(),
            v: DMatrix::zeros(0, 0),
        };
    }
    let svd = padded
        .try_svd(false, true, SVD_EPS, SVD_MAX_ITER)
        .unwrap_or_else(|| m.clone().svd(false, true));
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut values: Vec<f64> = svd.singular_values.iter().copied().collect();
    let mut v = v_t.transpose();
    // padded rows contribute exact zeros; keep only the genuine ones
    values.truncate(rows.min(cols));
    if v.ncols() > cols {
        v = v.columns(0, cols).into_owned();
    }
    RightSvd { values, v }
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let svd = m
        .clone()
        .try_svd(false, false, SVD_EPS, SVD_MAX_ITER)
        .unwrap_or_else(|| m.clone().svd(false, false));
    svd.singular_values.iter().copied().collect()
}

/// Numerical rank with a threshold relative to the largest singular value.
pub fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = singular_values(m);
    let top = sv.first().copied().unwrap_or(0.0);
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

/// Orthonormal basis of the numerical null space of `m`.
pub fn null_space(m: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let svd = right_svd(m);
    let k = svd.nullity(rel_tol * svd.largest());
    svd.trailing_basis(k)
}

/// Eigenvalues of a general real square matrix.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    if m.nrows() == 1 {
        return vec![Complex64::new(m[(0, 0)], 0.0)];
    }
    let schur = m
        .clone()
        .try_schur(f64::EPSILON, SCHUR_MAX_ITER)
        .unwrap_or_else(|| m.clone().schur());
    schur.complex_eigenvalues().iter().copied().collect()
}

/// Parlett–Reinsch diagonal balancing with power-of-two scalings; the
/// spectrum is unchanged and eigenvalues come out better conditioned.
pub fn balance(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    let radix = 2.0_f64;
    let mut converged = false;
    while !converged {
        converged = true;
        for i in 0..n {
            let mut col = 0.0;
            let mut row = 0.0;
            for j in 0..n {
                if j != i {
                    col += m[(j, i)].abs();
                    row += m[(i, j)].abs();
                }
            }
            if col == 0.0 || row == 0.0 {
                continue;
            }
            let total = col + row;
            let mut f = 1.0;
            let mut c = col;
            while c < row / radix {
                f *= radix;
                c *= radix * radix;
            }
            while c > row * radix {
                f /= radix;
                c /= radix * radix;
            }
            let r = row;
            if (c + r) / f < 0.95 * total {
                converged = false;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
    }
}

/// Condition number (2-norm) from singular values; infinite when singular.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = singular_values(m);
    match (sv.first(), sv.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        _ => f64::INFINITY,
    }
}

pub fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `C(n, k)` as a float, zero when `k > n`.
pub fn binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0_f64;
    for j in 0..k {
        acc = acc * (n - j) as f64 / (j + 1) as f64;
    }
    acc
}

/// Falling factorial `k (k-1) ... (k-r+1)`, evaluated on a real argument.
pub fn falling_factorial(k: f64, r: usize) -> f64 {
    (0..r).fold(1.0, |acc, j| acc * (k - j as f64))
}

pub fn factorial(r: usize) -> f64 {
    (1..=r).fold(1.0, |acc, j| acc * j as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wide_matrix_keeps_structural_null_space() {
        let m = DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let svd = right_svd(&m);
        assert_eq!(svd.values.len(), 1);
        assert_eq!(svd.nullity(1e-12), 2);
        let basis = svd.trailing_basis(2);
        assert!((&m * &basis).norm() < 1e-12);
    }

    #[test]
    fn binomials_and_falling_factorials() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(3, 5), 0.0);
        assert_eq!(falling_factorial(5.0, 3), 60.0);
        assert_eq!(falling_factorial(1.0, 3), 0.0);
        assert_eq!(factorial(0), 1.0);
    }

    #[test]
    fn rank_of_outer_product() {
        let u = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let m = &u * u.transpose();
        assert_eq!(numerical_rank(&m, 1e-12), 1);
        assert_eq!(null_space(&m, 1e-12).ncols(), 2);
    }
}
