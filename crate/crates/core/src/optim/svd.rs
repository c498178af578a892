//! Null-space extraction via one-sided Jacobi SVD.

use crate::linalg::{dot, norm, Matrix};
use crate::optim::OptimError;
use crate::scalar::Real;

/// Default relative singular-value cutoff.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Thin SVD pieces from one-sided Jacobi: `A V = U diag(sigma)`.
#[derive(Debug, Clone)]
pub struct JacobiSvd<T> {
    /// Right singular vectors as columns (n×n, orthogonal).
    pub v: Matrix<T>,
    /// Singular value per column of `v` (unsorted).
    pub sigma: Vec<T>,
}

/// One-sided (Hestenes) Jacobi SVD. Works for any m×n, including m < n.
pub fn jacobi_svd<T: Real>(a: &Matrix<T>) -> JacobiSvd<T> {
    let (m, n) = (a.rows(), a.cols());
    // Work on columns: cols[j] is the j-th column of A V.
    let mut cols: Vec<Vec<T>> = (0..n).map(|j| a.col(j)).collect();
    let mut v = Matrix::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() });
    let eps = T::epsilon();
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::of(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let (x, y) = (cols[p][i], cols[q][i]);
                    cols[p][i] = c * x - s * y;
                    cols[q][i] = s * x + c * y;
                }
                for i in 0..n {
                    let (x, y) = (v[(i, p)], v[(i, q)]);
                    v[(i, p)] = c * x - s * y;
                    v[(i, q)] = s * x + c * y;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma = cols.iter().map(|c| norm(c)).collect();
    JacobiSvd { v, sigma }
}

/// Orthonormal basis of `{v : A v = 0}`.
#[derive(Debug, Clone)]
pub struct NullSpaceBasis<T> {
    pub vectors: Vec<Vec<T>>,
    /// `‖A v‖` for each basis vector.
    pub residuals: Vec<T>,
}

impl<T: Real> NullSpaceBasis<T> {
    pub fn dim(&self) -> usize {
        self.vectors.len()
    }

    /// `Σ c_k w_k`.
    pub fn combine(&self, coeffs: &[T]) -> Vec<T> {
        assert_eq!(coeffs.len(), self.vectors.len());
        let n = self.vectors.first().map_or(0, Vec::len);
        let mut out = vec![T::zero(); n];
        for (c, w) in coeffs.iter().zip(&self.vectors) {
            for (o, &wi) in out.iter_mut().zip(w) {
                *o = *o + *c * wi;
            }
        }
        out
    }
}

/// Null space of `a` from the right singular vectors whose singular value is
/// below `rank_tol × σ_max`. A zero matrix has the whole space as null space.
pub fn null_space<T: Real>(a: &Matrix<T>, rank_tol: T) -> Result<NullSpaceBasis<T>, OptimError> {
    let n = a.cols();
    let svd = jacobi_svd(a);
    let sigma_max = svd.sigma.iter().copied().fold(T::zero(), T::max);
    let cutoff = rank_tol * sigma_max;
    let mut vectors = Vec::new();
    for j in 0..n {
        if sigma_max == T::zero() || svd.sigma[j] < cutoff {
            vectors.push(svd.v.col(j));
        }
    }
    if vectors.is_empty() {
        return Err(OptimError::EmptyNullSpace { rank: n });
    }
    let residuals = vectors.iter().map(|w| norm(&a.mul_vec(w))).collect();
    Ok(NullSpaceBasis { vectors, residuals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn assert_orthonormal(b: &NullSpaceBasis<f64>) {
        for (i, u) in b.vectors.iter().enumerate() {
            for (j, w) in b.vectors.iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot(u, w) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_block_leaves_last_axis() {
        let a = Matrix::from_rows(&[
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
        ]);
        let ns = null_space(&a, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(ns.dim(), 1);
        let w = &ns.vectors[0];
        assert!((w[3].abs() - 1.0).abs() < 1e-15);
        assert!(w[..3].iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn zero_matrix_is_all_null() {
        let ns = null_space(&Matrix::<f64>::zeros(3, 6), DEFAULT_RANK_TOL).unwrap();
        assert_eq!(ns.dim(), 6);
        assert_orthonormal(&ns);
    }

    #[test]
    fn random_full_rank_3x8() {
        let a = random_matrix(3, 8, 7);
        let ns = null_space(&a, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(ns.dim(), 5);
        assert_orthonormal(&ns);
        assert!(ns.residuals.iter().all(|&r| r < 1e-12));
    }

    #[test]
    fn full_column_rank_is_an_error() {
        let a = random_matrix(3, 3, 1);
        assert!(matches!(null_space(&a, DEFAULT_RANK_TOL), Err(OptimError::EmptyNullSpace { rank: 3 })));
    }

    #[test]
    fn rank_deficient_rows() {
        let mut a = random_matrix(3, 6, 3);
        for j in 0..6 {
            a[(2, j)] = 2.0 * a[(0, j)] - a[(1, j)];
        }
        let ns = null_space(&a, DEFAULT_RANK_TOL).unwrap();
        assert_eq!(ns.dim(), 4);
    }

    #[test]
    fn singular_values_match_gram_eigenvalues() {
        // For a 2x2 matrix, σ² are the eigenvalues of AᵀA.
        let a = Matrix::from_rows(&[vec![3.0, 1.0], vec![1.0, 2.0]]);
        let svd = jacobi_svd(&a);
        let mut s: Vec<f64> = svd.sigma.iter().map(|x| x * x).collect();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // AᵀA = [[10, 5], [5, 5]]: eigenvalues 7.5 ± sqrt(31.25)
        assert!((s[0] - (7.5 - 31.25f64.sqrt())).abs() < 1e-12);
        assert!((s[1] - (7.5 + 31.25f64.sqrt())).abs() < 1e-12);
    }
}
