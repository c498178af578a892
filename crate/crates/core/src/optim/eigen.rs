//! Symmetric 3x3 eigen-decomposition (cyclic Jacobi).

use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

/// Eigenvalues in ascending order with matching unit eigenvectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymEigen3<T> {
    pub values: [T; 3],
    pub vectors: [Vec3<T>; 3],
}

pub fn sym_eigen3<T: Real>(a: &Mat3<T>) -> SymEigen3<T> {
    let mut m = a.m;
    // Symmetrize to guard against tiny asymmetry from numerical assembly.
    for i in 0..3 {
        for j in (i + 1)..3 {
            let s = (m[i][j] + m[j][i]) * T::of(0.5);
            m[i][j] = s;
            m[j][i] = s;
        }
    }
    let mut v = Mat3::<T>::identity().m;
    let scale = a.norm();
    for _ in 0..64 {
        let off = (m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2]).sqrt();
        if off <= T::epsilon() * scale * T::of(1e-2) || off == T::zero() {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if m[p][q] == T::zero() {
                continue;
            }
            let theta = (m[q][q] - m[p][p]) / (T::of(2.0) * m[p][q]);
            let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
            let c = T::one() / (t * t + T::one()).sqrt();
            let s = t * c;
            for k in 0..3 {
                let (mkp, mkq) = (m[k][p], m[k][q]);
                m[k][p] = c * mkp - s * mkq;
                m[k][q] = s * mkp + c * mkq;
            }
            for k in 0..3 {
                let (mpk, mqk) = (m[p][k], m[q][k]);
                m[p][k] = c * mpk - s * mqk;
                m[q][k] = s * mpk + c * mqk;
            }
            for row in v.iter_mut() {
                let (vp, vq) = (row[p], row[q]);
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&i, &j| m[i][i].partial_cmp(&m[j][j]).unwrap_or(std::cmp::Ordering::Equal));
    let col = |j: usize| Vec3::new(v[0][j], v[1][j], v[2][j]);
    SymEigen3 {
        values: [m[idx[0]][idx[0]], m[idx[1]][idx[1]], m[idx[2]][idx[2]]],
        vectors: [col(idx[0]), col(idx[1]), col(idx[2])],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_is_sorted() {
        let mut a = Mat3::<f64>::zero();
        a.m[0][0] = 3.0;
        a.m[1][1] = -1.0;
        a.m[2][2] = 2.0;
        let e = sym_eigen3(&a);
        assert_eq!(e.values, [-1.0, 2.0, 3.0]);
        assert!((e.vectors[0].y.abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reconstructs_general_symmetric() {
        let a = Mat3 { m: [[4.0, 1.0, -2.0], [1.0, 2.0, 0.5], [-2.0, 0.5, 3.0]] };
        let e = sym_eigen3(&a);
        for k in 0..3 {
            let av = a.mul_vec(e.vectors[k]);
            let lv = e.vectors[k] * e.values[k];
            assert!((av - lv).norm() < 1e-12);
            assert!((e.vectors[k].norm() - 1.0f64).abs() < 1e-12);
        }
        assert!((e.values.iter().sum::<f64>() - a.trace()).abs() < 1e-12);
    }
}
