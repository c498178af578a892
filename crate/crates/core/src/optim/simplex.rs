//! Deterministic Nelder-Mead simplex minimization.
//!
//! Constraints are expressed by the objective itself: returning `+inf` (or
//! NaN, which is treated as `+inf`) marks a point infeasible. Only the
//! vertices of the initial simplex must be finite.

use serde::{Deserialize, Serialize};

use crate::optim::OptimError;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexConfig<T> {
    /// Per-parameter initial step. A single entry is broadcast to all
    /// parameters.
    pub initial_step: Vec<T>,
    pub reflection: T,
    pub expansion: T,
    pub contraction: T,
    pub shrink: T,
    /// Stop when `max f - min f` over the simplex falls below this.
    pub f_tol: T,
    /// Stop when the simplex diameter (max vertex distance from the best)
    /// falls below this.
    pub x_tol: T,
    pub max_evals: usize,
}

impl<T: Real> Default for SimplexConfig<T> {
    fn default() -> Self {
        Self {
            initial_step: vec![T::one()],
            reflection: T::one(),
            expansion: T::of(2.0),
            contraction: T::of(0.5),
            shrink: T::of(0.5),
            f_tol: T::of(1e-12),
            x_tol: T::of(1e-10),
            max_evals: 10_000,
        }
    }
}

impl<T: Real> SimplexConfig<T> {
    pub fn with_step(mut self, step: T) -> Self {
        self.initial_step = vec![step];
        self
    }

    pub fn with_max_evals(mut self, n: usize) -> Self {
        self.max_evals = n;
        self
    }

    pub fn with_tolerances(mut self, f_tol: T, x_tol: T) -> Self {
        self.f_tol = f_tol;
        self.x_tol = x_tol;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<(), OptimError> {
        let bad = |what: &str| Err(OptimError::InvalidConfig(what.to_string()));
        if !(self.reflection > T::zero()) {
            return bad("reflection must be > 0");
        }
        if !(self.expansion > T::one() && self.expansion > self.reflection) {
            return bad("expansion must exceed 1 and the reflection coefficient");
        }
        if !(self.contraction > T::zero() && self.contraction < T::one()) {
            return bad("contraction must lie in (0, 1)");
        }
        if !(self.shrink > T::zero() && self.shrink < T::one()) {
            return bad("shrink must lie in (0, 1)");
        }
        if !(self.f_tol > T::zero() && self.x_tol > T::zero()) {
            return bad("tolerances must be > 0");
        }
        if self.initial_step.len() != 1 && self.initial_step.len() != dim {
            return bad("initial_step must have one entry or one per parameter");
        }
        if self.initial_step.iter().any(|s| *s == T::zero() || !s.is_finite()) {
            return bad("initial steps must be finite and nonzero");
        }
        if self.max_evals < dim + 1 {
            return bad("max_evals smaller than the initial simplex");
        }
        Ok(())
    }

    fn step(&self, i: usize) -> T {
        if self.initial_step.len() == 1 {
            self.initial_step[0]
        } else {
            self.initial_step[i]
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    FunctionSpread,
    SimplexSize,
    MaxEvals,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexResult<T> {
    pub x: Vec<T>,
    pub f: T,
    pub evals: usize,
    pub termination: Termination,
    /// Every objective value in evaluation order.
    pub evaluations: Vec<T>,
    /// Best-so-far value after each iteration (starts with the initial simplex).
    pub best_trace: Vec<T>,
}

impl<T: Real> SimplexResult<T> {
    pub fn converged(&self) -> bool {
        self.termination != Termination::MaxEvals
    }

    /// Converts a budget-exhausted run into [`OptimError::MaxEvalsExceeded`].
    pub fn ok(self) -> Result<Self, OptimError> {
        if self.converged() {
            Ok(self)
        } else {
            Err(OptimError::MaxEvalsExceeded {
                evals: self.evals,
                best: self.f.to_f64_lossy(),
            })
        }
    }

    /// Best-so-far after every objective evaluation.
    pub fn running_best(&self) -> Vec<T> {
        let mut best = T::infinity();
        self.evaluations
            .iter()
            .map(|&f| {
                if f < best {
                    best = f;
                }
                best
            })
            .collect()
    }
}

struct Counted<'a, T, F> {
    f: &'a mut F,
    log: Vec<T>,
}

impl<T: Real, F: FnMut(&[T]) -> T> Counted<'_, T, F> {
    fn call(&mut self, x: &[T]) -> T {
        let v = (self.f)(x);
        let v = if v.is_nan() { T::infinity() } else { v };
        self.log.push(v);
        v
    }
}

fn lerp<T: Real>(from: &[T], to: &[T], t: T) -> Vec<T> {
    from.iter().zip(to).map(|(&a, &b)| a + t * (b - a)).collect()
}

/// Minimizes `f` starting from `x0`.
///
/// The initial simplex is `x0` plus one step along each coordinate, so the
/// run is fully deterministic. The returned point never has a larger
/// objective than `x0`.
pub fn nelder_mead<T, F>(mut f: F, x0: &[T], cfg: &SimplexConfig<T>) -> Result<SimplexResult<T>, OptimError>
where
    T: Real,
    F: FnMut(&[T]) -> T,
{
    let n = x0.len();
    if n == 0 {
        return Err(OptimError::InvalidConfig("empty parameter vector".into()));
    }
    cfg.validate(n)?;

    let mut obj = Counted { f: &mut f, log: Vec::with_capacity(cfg.max_evals.min(1 << 16)) };
    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
    let f0 = obj.call(x0);
    if !f0.is_finite() {
        return Err(OptimError::NonFiniteStart(0));
    }
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        // A barrier hit along +step is retried along -step, then at half steps.
        let mut vertex = None;
        let mut h = cfg.step(i);
        for attempt in 0..8 {
            let mut x = x0.to_vec();
            x[i] = x[i] + if attempt % 2 == 0 { h } else { -h };
            let fx = obj.call(&x);
            if fx.is_finite() {
                vertex = Some((x, fx));
                break;
            }
            if attempt % 2 == 1 {
                h = h * T::of(0.5);
            }
        }
        match vertex {
            Some(v) => simplex.push(v),
            None => return Err(OptimError::NonFiniteStart(i + 1)),
        }
    }

    let order = |s: &mut Vec<(Vec<T>, T)>| {
        // Stable sort keeps tie order deterministic.
        s.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    };
    order(&mut simplex);
    let mut best_trace = vec![simplex[0].1];

    let termination = loop {
        let f_best = simplex[0].1;
        let f_worst = simplex[n].1;
        if f_worst - f_best < cfg.f_tol {
            break Termination::FunctionSpread;
        }
        let diameter = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt())
            .fold(T::zero(), T::max);
        if diameter < cfg.x_tol {
            break Termination::SimplexSize;
        }
        if obj.log.len() >= cfg.max_evals {
            break Termination::MaxEvals;
        }

        let inv_n = T::one() / T::of(n as f64);
        let mut centroid = vec![T::zero(); n];
        for (x, _) in &simplex[..n] {
            for (c, &xi) in centroid.iter_mut().zip(x) {
                *c = *c + xi * inv_n;
            }
        }
        let worst = simplex[n].0.clone();
        let xr = lerp(&centroid, &worst, -cfg.reflection);
        let fr = obj.call(&xr);
        let f_second = simplex[n - 1].1;

        if fr < f_best {
            let xe = lerp(&centroid, &worst, -cfg.expansion);
            let fe = if obj.log.len() < cfg.max_evals { obj.call(&xe) } else { T::infinity() };
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < f_second {
            simplex[n] = (xr, fr);
        } else {
            let outside = fr < f_worst;
            let xc = if outside {
                lerp(&centroid, &xr, cfg.contraction)
            } else {
                lerp(&centroid, &worst, cfg.contraction)
            };
            let fc = if obj.log.len() < cfg.max_evals { obj.call(&xc) } else { T::infinity() };
            let accept = if outside { fc <= fr } else { fc < f_worst };
            if accept {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    if obj.log.len() >= cfg.max_evals {
                        break;
                    }
                    let x = lerp(&best, &vertex.0, cfg.shrink);
                    let fx = obj.call(&x);
                    *vertex = (x, fx);
                }
            }
        }
        order(&mut simplex);
        best_trace.push(simplex[0].1);
    };

    let (x, fx) = simplex.swap_remove(0);
    Ok(SimplexResult {
        x,
        f: fx,
        evals: obj.log.len(),
        termination,
        evaluations: obj.log,
        best_trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(c: &[f64]) -> impl Fn(&[f64]) -> f64 + '_ {
        move |x: &[f64]| x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    #[test]
    fn convex_quadratic_reaches_center() {
        let c = [1.5, -2.0, 0.25];
        let cfg = SimplexConfig::default().with_tolerances(1e-20, 1e-12);
        for x0 in [[0.0, 0.0, 0.0], [10.0, -7.0, 3.0]] {
            let r = nelder_mead(sphere(&c), &x0, &cfg).unwrap();
            for (a, b) in r.x.iter().zip(&c) {
                assert!((a - b).abs() < 1e-6, "{:?}", r.x);
            }
        }
    }

    #[test]
    fn rosenbrock_from_standard_start() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let cfg = SimplexConfig::default()
            .with_step(0.5)
            .with_tolerances(1e-24, 1e-14)
            .with_max_evals(20_000);
        let r = nelder_mead(rosen, &[-1.2, 1.0], &cfg).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn barrier_keeps_solution_in_box() {
        // Unconstrained minimum at (3, -3); box [-1, 1]^2 puts the
        // constrained minimum at the corner (1, -1).
        let f = |x: &[f64]| {
            if x.iter().any(|v| v.abs() > 1.0) {
                f64::INFINITY
            } else {
                (x[0] - 3.0).powi(2) + (x[1] + 3.0).powi(2)
            }
        };
        let cfg = SimplexConfig::default().with_step(0.3).with_tolerances(1e-16, 1e-12);
        let r = nelder_mead(f, &[0.0, 0.0], &cfg).unwrap();
        assert!(r.x.iter().all(|v| v.abs() <= 1.0));
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] + 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn best_so_far_is_monotone_and_not_worse_than_start() {
        let f = |x: &[f64]| (x[0] * x[1] - 1.0).powi(2) + 0.1 * x[0].powi(4) + (x[1] - 0.5).abs();
        let x0 = [2.0, -1.0];
        let r = nelder_mead(f, &x0, &SimplexConfig::default().with_max_evals(300)).unwrap();
        assert!(r.f <= f(&x0));
        assert!(r.best_trace.windows(2).all(|w| w[1] <= w[0]));
        assert!(r.running_best().windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn identical_inputs_are_bit_identical() {
        let f = |x: &[f64]| (x[0] - 0.3).powi(2) + (x[1] * x[0]).sin().powi(2) + x[2].abs();
        let cfg = SimplexConfig::default().with_max_evals(500);
        let a = nelder_mead(f, &[1.0, 2.0, 3.0], &cfg).unwrap();
        let b = nelder_mead(f, &[1.0, 2.0, 3.0], &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(rosen, &[-1.2, 1.0], &SimplexConfig::default().with_max_evals(20)).unwrap();
        assert_eq!(r.termination, Termination::MaxEvals);
        assert!(r.evals <= 20);
        assert!(matches!(r.ok(), Err(OptimError::MaxEvalsExceeded { .. })));
    }

    #[test]
    fn infinite_start_is_rejected() {
        let f = |_: &[f64]| f64::INFINITY;
        assert!(matches!(
            nelder_mead(f, &[0.0], &SimplexConfig::default()),
            Err(OptimError::NonFiniteStart(0))
        ));
    }

    #[test]
    fn works_in_single_precision() {
        let f = |x: &[f32]| (x[0] - 2.0) * (x[0] - 2.0) + (x[1] + 1.0) * (x[1] + 1.0);
        let cfg = SimplexConfig::<f32>::default().with_tolerances(1e-10, 1e-5);
        let r = nelder_mead(f, &[0.0f32, 0.0], &cfg).unwrap();
        assert!((r.x[0] - 2.0).abs() < 1e-3 && (r.x[1] + 1.0).abs() < 1e-3);
    }
}
