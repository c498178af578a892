use super::OptimError;
use crate::linalg::{dot, lstsq, Matrix};

/// Minimizes `½ xᵀHx + gᵀx` subject to `A x ≤ b` with a primal active-set
/// method started from the feasible point `x0`. `H` must be symmetric
/// positive definite, so the minimizer is unique.
pub fn inequality_qp(h: &Matrix<f64>, g: &[f64], a: &Matrix<f64>, b: &[f64], x0: &[f64]) -> Result<Vec<f64>, OptimError> {
    let k = x0.len();
    let nc = a.rows();
    assert!(h.rows() == k && h.cols() == k && g.len() == k && a.cols() == k && b.len() == nc);
    let slack_tol = |i: usize| 1e-12 * (1.0 + b[i].abs());
    let mut x = x0.to_vec();
    if (0..nc).any(|i| dot(a.row(i), &x) > b[i] + slack_tol(i)) {
        return Err(OptimError::InfeasibleStart);
    }
    let mut work: Vec<usize> = Vec::new();
    // True right after a full, unblocked step: x minimizes on the working set.
    let mut at_min = false;
    let max_iter = 10 * (k + nc) + 100;
    for _ in 0..max_iter {
        // Equality-constrained step: H p + A_Wᵀ μ = -(H x + g), A_W p = 0.
        let w = work.len();
        let grad: Vec<f64> = (0..k).map(|i| dot(h.row(i), &x) + g[i]).collect();
        let kkt = Matrix::from_fn(k + w, k + w, |i, j| match (i < k, j < k) {
            (true, true) => h[(i, j)],
            (true, false) => a[(work[j - k], i)],
            (false, true) => a[(work[i - k], j)],
            (false, false) => 0.0,
        });
        let rhs: Vec<f64> = (0..k + w).map(|i| if i < k { -grad[i] } else { 0.0 }).collect();
        let sol = lstsq(&kkt, &rhs).ok_or(OptimError::InvalidConfig("singular KKT system".into()))?;
        let (p, mu) = sol.split_at(k);
        let scale = 1.0 + x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if at_min || p.iter().all(|v| v.abs() <= 1e-13 * scale) {
            match mu.iter().enumerate().min_by(|l, r| l.1.total_cmp(r.1)) {
                Some((j, &m)) if m < -1e-12 * (1.0 + grad.iter().map(|v| v.abs()).fold(0.0, f64::max)) => {
                    work.remove(j);
                    at_min = false;
                    continue;
                }
                _ => return Ok(x),
            }
        }
        let mut alpha = 1.0;
        let mut blocking = None;
        for i in (0..nc).filter(|i| !work.contains(i)) {
            let ap = dot(a.row(i), p);
            if ap > 0.0 {
                let t = ((b[i] - dot(a.row(i), &x)) / ap).max(0.0);
                if t < alpha {
                    alpha = t;
                    blocking = Some(i);
                }
            }
        }
        for (xi, pi) in x.iter_mut().zip(p) {
            *xi += alpha * pi;
        }
        match blocking {
            Some(i) => work.push(i),
            None => at_min = true,
        }
    }
    Err(OptimError::MaxEvalsExceeded { evals: max_iter, best: f64::NAN })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unconstrained_minimum_when_inactive() {
        let h = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]);
        let g = [-2.0, -4.0];
        let a = Matrix::from_rows(&[vec![1.0, 0.0]]);
        let x = inequality_qp(&h, &g, &a, &[10.0], &[0.0, 0.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn box_projection_of_separable_quadratic() {
        // Separable: minimizer is the clamp of the free minimizer.
        let c = [3.0, -0.5, -7.0, 0.25];
        let h = Matrix::from_fn(4, 4, |i, j| if i == j { 2.0 } else { 0.0 });
        let g: Vec<f64> = c.iter().map(|v| -2.0 * v).collect();
        let a = Matrix::from_fn(8, 4, |i, j| if i / 2 == j { if i % 2 == 0 { 1.0 } else { -1.0 } } else { 0.0 });
        let b = [1.0; 8];
        let x = inequality_qp(&h, &g, &a, &b, &[0.0; 4]).unwrap();
        for (xi, ci) in x.iter().zip(c) {
            assert!((xi - ci.clamp(-1.0, 1.0)).abs() < 1e-12, "{x:?}");
        }
    }

    #[test]
    fn coupled_constraint_satisfies_kkt() {
        // min (x-2)² + (y-2)² s.t. x + y ≤ 1 → (0.5, 0.5).
        let h = Matrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 2.0]]);
        let a = Matrix::from_rows(&[vec![1.0, 1.0], vec![-1.0, 0.0]]);
        let x = inequality_qp(&h, &[-4.0, -4.0], &a, &[1.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12, "{x:?}");
    }

    #[test]
    fn infeasible_start_is_rejected() {
        let h = Matrix::from_rows(&[vec![1.0]]);
        let a = Matrix::from_rows(&[vec![1.0]]);
        assert_eq!(inequality_qp(&h, &[0.0], &a, &[-1.0], &[0.0]), Err(OptimError::InfeasibleStart));
    }
}
