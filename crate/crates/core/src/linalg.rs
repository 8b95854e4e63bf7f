//! Small dense kernels: cyclic Jacobi eigendecomposition, a scaling-and-squaring
//! matrix exponential, and a banded Cholesky factorisation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Eigenvalues and orthonormal eigenvectors (as columns) of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

/// Cyclic Jacobi rotation sweeps until the off-diagonal mass is negligible.
///
/// Meant for the tiny projected matrices of the Krylov decoder (order ≤ 21).
pub fn jacobi_eigen(matrix: &DMatrix<f64>) -> SymmetricEigen {
    let n = matrix.nrows();
    assert_eq!(n, matrix.ncols(), "jacobi_eigen needs a square matrix");
    let mut a = matrix.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= 1e-15 * scale || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    SymmetricEigen {
        values: DVector::from_iterator(n, (0..n).map(|i| a[(i, i)])),
        vectors: v,
    }
}

/// `e^M` by scaling and squaring with a degree-18 Taylor polynomial.
pub fn expm(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm1 = (0..n)
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0;
    if norm1 > 0.5 {
        squarings = (norm1 / 0.5).log2().ceil() as i32;
    }
    let scaled = m / 2f64.powi(squarings);
    let mut result = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    for k in 1..=18 {
        term = &term * &scaled / k as f64;
        result += &term;
    }
    for _ in 0..squarings {
        result = &result * &result;
    }
    result
}

/// Cholesky factor `L` (lower, banded) of a symmetric positive-definite matrix
/// whose nonzeros satisfy `|i − j| ≤ bandwidth`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    /// Row `i` holds `L[i][i-bw ..= i]`, left-padded.
    rows: Vec<f64>,
}

impl BandedCholesky {
    /// Factors the matrix described by `entry(i, j)` for `j ∈ [i−bw, i]`.
    pub fn factor(n: usize, bw: usize, entry: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let stride = bw + 1;
        let mut rows = vec![0.0; n * stride];
        // Index of L[i][j] for i-bw <= j <= i.
        let at = |i: usize, j: usize| i * stride + (j + bw - i);
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let mut sum = entry(i, j);
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    sum -= rows[at(i, k)] * rows[at(j, k)];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(Error::NotPositiveDefinite);
                    }
                    rows[at(i, i)] = sum.sqrt();
                } else {
                    rows[at(i, j)] = sum / rows[at(j, j)];
                }
            }
        }
        Ok(BandedCholesky { n, bw, rows })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Solves `L Lᵀ x = rhs` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let (n, bw) = (self.n, self.bw);
        let stride = bw + 1;
        let at = |i: usize, j: usize| i * stride + (j + bw - i);
        for i in 0..n {
            let mut s = x[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.rows[at(i, k)] * x[k];
            }
            x[i] = s / self.rows[at(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..(i + bw + 1).min(n) {
                s -= self.rows[at(k, i)] * x[k];
            }
            x[i] = s / self.rows[at(i, i)];
        }
    }
}
