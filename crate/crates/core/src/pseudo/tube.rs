//! Predictor-corrector marching along the rf null tube.

use super::{Pseudo, PseudoError};
use crate::linalg::{solve2, Mat3, Vec3};
use crate::optim::{nelder_mead, sym_eigen3, SimplexConfig};
use crate::scalar::Real;

/// Orthonormal triad at a tube point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame<T> {
    pub tangent: Vec3<T>,
    pub normal: Vec3<T>,
    pub binormal: Vec3<T>,
}

/// Discretized tube: points at fixed arclength spacing.
#[derive(Debug, Clone, PartialEq)]
pub struct TubePath<T> {
    pub points: Vec<Vec3<T>>,
    pub frames: Vec<Frame<T>>,
    /// Φ_pp per point, eV.
    pub pseudopotential: Vec<T>,
    /// Nominal spacing, µm.
    pub step: T,
}

/// Corrector sample in the normal plane: |g|², gradient and Hessian of ½|g|², Jᵀg and JᵀJ.
type PlaneSample = (f64, [f64; 2], [[f64; 2]; 2], [f64; 2], [[f64; 2]; 2]);

impl<T: Real> TubePath<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nominal arclength of point `i`.
    pub fn arclength(&self, i: usize) -> T {
        self.step * T::of(i as f64)
    }

    /// Same tube traversed in the opposite direction.
    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        out.points.reverse();
        out.pseudopotential.reverse();
        out.frames.reverse();
        for f in &mut out.frames {
            f.tangent = -f.tangent;
            f.binormal = -f.binormal;
        }
        out
    }

    /// Sub-path of points `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            points: self.points[range.clone()].to_vec(),
            frames: self.frames[range.clone()].to_vec(),
            pseudopotential: self.pseudopotential[range].to_vec(),
            step: self.step,
        }
    }
}

/// Tube tracing controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    /// Preferred initial direction; the tube tangent is oriented along it.
    pub direction: Option<Vec3<f64>>,
    pub max_corrector_iterations: usize,
    /// Largest transverse correction per step, in units of the step.
    pub max_shift_steps: f64,
    /// Largest transverse correction of the start point, µm.
    pub start_radius: f64,
    /// Largest turn between consecutive tangents, degrees.
    pub max_turn_deg: f64,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self {
            direction: None,
            max_corrector_iterations: 60,
            max_shift_steps: 3.0,
            start_radius: 50.0,
            max_turn_deg: 30.0,
        }
    }
}

impl TraceOptions {
    pub fn towards(mut self, d: Vec3<f64>) -> Self {
        self.direction = Some(d);
        self
    }
}

fn to64<T: Real>(v: Vec3<T>) -> Vec3<f64> {
    v.map(|x| x.to_f64_lossy())
}

fn from64<T: Real>(v: Vec3<f64>) -> Vec3<T> {
    v.map(T::of)
}

/// Stateful marcher: yields tube points one step at a time.
#[derive(Debug, Clone)]
pub struct TubeMarcher<'p, 'a, T> {
    pp: &'p Pseudo<'a, T>,
    step: f64,
    opts: TraceOptions,
    point: Vec3<f64>,
    tangent: Vec3<f64>,
    normal: Vec3<f64>,
    energy: f64,
    index: usize,
}

impl<'p, 'a, T: Real> TubeMarcher<'p, 'a, T> {
    /// Corrects `start` onto the tube and fixes the initial tangent.
    pub fn new(pp: &'p Pseudo<'a, T>, start: Vec3<T>, step: f64, opts: TraceOptions) -> Result<Self, PseudoError> {
        if !(step > 0.0 && step.is_finite()) {
            return Err(PseudoError::TubeLost { s: 0.0, reason: format!("step must be positive, got {step}") });
        }
        let start = to64(start);
        let orient = |t: Vec3<f64>| -> Vec3<f64> {
            let hint = opts.direction.unwrap_or(Vec3::new(1.0, 1e-3, 1e-6));
            if t.dot(hint) < 0.0 {
                -t
            } else {
                t
            }
        };
        let mut t = orient(null_direction(pp, start)?);
        let mut m = Self { pp, step, opts, point: start, tangent: t, normal: Vec3::zero(), energy: 0.0, index: 0 };
        let (p, _) = m.correct(start, t, opts.start_radius).map_err(|reason| PseudoError::TubeLost { s: 0.0, reason })?;
        t = orient(null_direction(pp, p)?);
        // Second pass with the refined tangent.
        let (p, e) = m.correct(p, t, opts.start_radius).map_err(|reason| PseudoError::TubeLost { s: 0.0, reason })?;
        m.point = p;
        m.tangent = t;
        m.energy = e;
        let up = Vec3::new(0.0, 0.0, 1.0);
        let n = up - t * up.dot(t);
        m.normal = if n.norm() > 1e-6 { n.normalized() } else { t.any_orthogonal().normalized() };
        Ok(m)
    }

    pub fn point(&self) -> Vec3<T> {
        from64(self.point)
    }

    pub fn frame(&self) -> Frame<T> {
        Frame { tangent: from64(self.tangent), normal: from64(self.normal), binormal: from64(self.tangent.cross(self.normal)) }
    }

    /// Φ_pp at the current point, eV.
    pub fn energy(&self) -> T {
        T::of(self.energy)
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// Advances one step along the tube.
    pub fn advance(&mut self) -> Result<(), PseudoError> {
        let s = self.step * (self.index + 1) as f64;
        let lost = |reason: String| PseudoError::TubeLost { s, reason };
        let predicted = self.point + self.tangent * self.step;
        let (p, e) = self.correct(predicted, self.tangent, self.opts.max_shift_steps * self.step).map_err(lost)?;
        let secant = (p - self.point).normalized();
        let mut t = secant;
        if let Ok(d) = null_direction(self.pp, p) {
            let d = if d.dot(secant) < 0.0 { -d } else { d };
            if d.dot(secant) > 0.9 {
                t = d;
            }
        }
        let turn = t.dot(self.tangent).clamp(-1.0, 1.0).acos().to_degrees();
        if turn > self.opts.max_turn_deg {
            return Err(lost(format!("tangent turned {turn:.1}° in one step")));
        }
        let n = self.normal - t * self.normal.dot(t);
        self.normal = if n.norm() > 1e-9 { n.normalized() } else { t.any_orthogonal().normalized() };
        self.point = p;
        self.tangent = t;
        self.energy = e;
        self.index += 1;
        Ok(())
    }

    /// Minimizes |E|² over the plane through `p0` normal to `t`. Returns the
    /// corrected point and its Φ_pp.
    fn correct(&self, p0: Vec3<f64>, t: Vec3<f64>, max_shift: f64) -> Result<(Vec3<f64>, f64), String> {
        let e1 = t.any_orthogonal().normalized();
        let e2 = t.cross(e1);
        let at = |u: [f64; 2]| p0 + e1 * u[0] + e2 * u[1];
        let k = self.pp.scale().to_f64_lossy();
        let eval = |u: [f64; 2]| -> Option<PlaneSample> {
            let p = at(u);
            if !(p.z > 0.0) {
                return None;
            }
            let (s, d) = self.pp.unit_with_third(from64(p)).ok()?;
            let g = to64(s.grad);
            let h = s.hess.map(|v| v.to_f64_lossy());
            let mut hf = h.mul_mat(&h);
            for kk in 0..3 {
                hf = hf + d[kk].map(|v| v.to_f64_lossy()).scale(g[kk]);
            }
            let grad = h.mul_vec(g);
            let proj = [grad.dot(e1), grad.dot(e2)];
            let hm = [[hf.bilinear(e1, e1), hf.bilinear(e1, e2)], [hf.bilinear(e2, e1), hf.bilinear(e2, e2)]];
            let j1 = h.mul_vec(e1);
            let j2 = h.mul_vec(e2);
            let gn = [[j1.dot(j1), j1.dot(j2)], [j2.dot(j1), j2.dot(j2)]];
            Some((g.norm_sq(), proj, hm, [j1.dot(g), j2.dot(g)], gn))
        };
        let mut u = [0.0f64; 2];
        let Some(mut cur) = eval(u) else { return Err("point left the half-space".into()) };
        let mut converged = false;
        for _ in 0..self.opts.max_corrector_iterations {
            let (f, grad, hm, _, gn) = cur;
            if f == 0.0 {
                converged = true;
                break;
            }
            let newton = solve2(hm[0][0], hm[0][1], hm[1][0], hm[1][1], (-grad[0], -grad[1]))
                .filter(|_| hm[0][0] > 0.0 && hm[0][0] * hm[1][1] - hm[0][1] * hm[1][0] > 0.0);
            let damp = 1e-9 * (gn[0][0] + gn[1][1]);
            let gauss = solve2(gn[0][0] + damp, gn[0][1], gn[1][0], gn[1][1] + damp, (-grad[0], -grad[1]));
            let mut moved = false;
            for dir in [newton, gauss].into_iter().flatten() {
                let mut a = 1.0;
                for _ in 0..30 {
                    let cand = [u[0] + a * dir.0, u[1] + a * dir.1];
                    if let Some(next) = eval(cand) {
                        if next.0 < f || (next.0 <= f && a * (dir.0.hypot(dir.1)) < 1e-12) {
                            let len = a * dir.0.hypot(dir.1);
                            u = cand;
                            cur = next;
                            moved = true;
                            if len < 1e-9 {
                                converged = true;
                            }
                            break;
                        }
                    }
                    a *= 0.5;
                }
                if moved {
                    break;
                }
            }
            if converged {
                break;
            }
            if !moved {
                // Stationary to rounding: accept if the projected gradient is negligible.
                let gnorm = grad[0].hypot(grad[1]);
                let scale = (hm[0][0].abs() + hm[1][1].abs()) * f.sqrt().max(1e-300) + 1e-300;
                converged = gnorm <= 1e-6 * scale.max(f);
                if !converged {
                    // Derivative-free fallback.
                    let obj = |v: &[f64]| eval([v[0], v[1]]).map_or(f64::INFINITY, |x| x.0);
                    let cfg = SimplexConfig::default().with_step(0.1 * self.step.max(0.1)).with_max_evals(600).with_tolerances(1e-300, 1e-9);
                    match nelder_mead(obj, &u, &cfg) {
                        Ok(res) if res.f < f => {
                            u = [res.x[0], res.x[1]];
                            cur = eval(u).ok_or("fallback left the half-space")?;
                            converged = res.converged();
                        }
                        _ => converged = true,
                    }
                }
                break;
            }
        }
        if !converged {
            return Err("transverse corrector did not converge".into());
        }
        let shift = u[0].hypot(u[1]);
        if shift > max_shift {
            return Err(format!("corrector moved {shift:.3} µm off the predicted point"));
        }
        Ok((at(u), cur.0 * k))
    }
}

/// Direction of least field variation: smallest-eigenvalue eigenvector of H².
fn null_direction<T: Real>(pp: &Pseudo<'_, T>, p: Vec3<f64>) -> Result<Vec3<f64>, PseudoError> {
    let s = pp.unit(from64(p))?;
    let h: Mat3<f64> = s.hess.map(|v| v.to_f64_lossy());
    let e = sym_eigen3(&h.mul_mat(&h));
    Ok(e.vectors[0].normalized())
}

/// Traces `round(length / step) + 1` points along the tube from `start`.
pub fn trace_tube<T: Real>(
    pp: &Pseudo<'_, T>,
    start: Vec3<T>,
    step: f64,
    length: f64,
    opts: &TraceOptions,
) -> Result<TubePath<T>, PseudoError> {
    if !(length >= 0.0 && length.is_finite()) {
        return Err(PseudoError::TubeLost { s: 0.0, reason: format!("length must be non-negative, got {length}") });
    }
    let n = (length / step).round() as usize + 1;
    let mut m = TubeMarcher::new(pp, start, step, *opts)?;
    let mut path = TubePath {
        points: Vec::with_capacity(n),
        frames: Vec::with_capacity(n),
        pseudopotential: Vec::with_capacity(n),
        step: T::of(step),
    };
    loop {
        path.points.push(m.point());
        path.frames.push(m.frame());
        path.pseudopotential.push(m.energy());
        if path.points.len() == n {
            return Ok(path);
        }
        m.advance()?;
    }
}

/// Traces from `start` toward `target` and stops at the point of closest
/// in-plane approach to it.
pub fn trace_between<T: Real>(
    pp: &Pseudo<'_, T>,
    start: Vec3<T>,
    target: Vec3<T>,
    step: f64,
    opts: &TraceOptions,
) -> Result<TubePath<T>, PseudoError> {
    let to64 = |v: Vec3<T>| v.map(|x| x.to_f64_lossy());
    let (a, b) = (to64(start), to64(target));
    let dir = Vec3::new(b.x - a.x, b.y - a.y, 0.0);
    let span = dir.norm();
    if !(span > step) {
        return Err(PseudoError::TubeLost { s: 0.0, reason: format!("endpoints are only {span:.3} µm apart") });
    }
    let opts = opts.towards(dir * (1.0 / span));
    let mut m = TubeMarcher::new(pp, start, step, opts)?;
    let gap = |p: Vec3<T>| {
        let p = to64(p);
        Vec3::new(b.x - p.x, b.y - p.y, 0.0).norm()
    };
    let mut path = TubePath { points: Vec::new(), frames: Vec::new(), pseudopotential: Vec::new(), step: T::of(step) };
    let max_points = (4.0 * span / step).ceil() as usize + 2;
    let mut best = f64::INFINITY;
    while path.points.len() < max_points {
        let d = gap(m.point());
        if d > best {
            return Ok(path);
        }
        best = d;
        path.points.push(m.point());
        path.frames.push(m.frame());
        path.pseudopotential.push(m.energy());
        if d <= 0.5 * step {
            return Ok(path);
        }
        m.advance()?;
    }
    Err(PseudoError::TubeLost { s: step * path.points.len() as f64, reason: "tube does not approach the target".into() })
}

/// Φ_pp along the path with its maximum (the bump height).
#[derive(Debug, Clone, PartialEq)]
pub struct BumpProfile<T> {
    /// `(arclength µm, Φ_pp eV)` in path order.
    pub samples: Vec<(T, T)>,
    pub max: T,
    pub argmax: usize,
}

pub fn bump_profile<T: Real>(path: &TubePath<T>) -> BumpProfile<T> {
    let samples: Vec<(T, T)> = path.pseudopotential.iter().enumerate().map(|(i, &e)| (path.arclength(i), e)).collect();
    let (argmax, max) = samples
        .iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |(bi, bv), (i, &(_, e))| if e > bv { (i, e) } else { (bi, bv) });
    BumpProfile { samples, max, argmax }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{FieldBasis, NetPolygons};
    use crate::geom::Point;
    use crate::layout::Role;
    use crate::pseudo::RfDrive;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
        vec![Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)]
    }

    fn rails(w_l: f64, w_r: f64, a: f64, half_len: f64) -> FieldBasis<f64> {
        FieldBasis::from_polygons(vec![NetPolygons {
            name: "rf".into(),
            role: Role::Rf,
            polygons: vec![rect(-half_len, a, half_len, a + w_l), rect(-half_len, -a - w_r, half_len, -a)],
        }])
    }

    #[test]
    fn straight_rails_give_straight_tube() {
        let b = rails(40.0, 60.0, 22.0, 3000.0);
        let pp = Pseudo::new(&b, RfDrive::reference()).unwrap();
        let path = trace_tube(&pp, Vec3::new(-100.0, 0.0, 35.0), 1.0, 200.0, &TraceOptions::default()).unwrap();
        assert_eq!(path.len(), 201);
        let p0 = path.points[0];
        for (i, p) in path.points.iter().enumerate() {
            assert!((p.y - p0.y).abs() < 1e-3 && (p.z - p0.z).abs() < 1e-3, "{i} {p:?}");
            assert!(path.pseudopotential[i] < 1e-12);
        }
        for w in path.points.windows(2) {
            assert!((w[0].dist(w[1]) - 1.0).abs() < 0.01);
        }
        assert!(path.frames[0].tangent.x > 0.999);
    }

    #[test]
    fn trace_between_stops_at_the_target() {
        let b = rails(40.0, 60.0, 22.0, 3000.0);
        let pp = Pseudo::new(&b, RfDrive::reference()).unwrap();
        let path = trace_between(&pp, Vec3::new(100.0, 0.0, 35.0), Vec3::new(-50.3, 0.0, 35.0), 1.0, &TraceOptions::default()).unwrap();
        assert_eq!(path.len(), 151);
        assert!((path.points[150].x + 50.0).abs() < 0.01);
        assert!(path.frames[0].tangent.x < -0.999);
    }

    #[test]
    fn counting_contract() {
        let b = rails(40.0, 60.0, 22.0, 3000.0);
        let pp = Pseudo::new(&b, RfDrive::reference()).unwrap();
        let path = trace_tube(&pp, Vec3::new(-425.0, 0.0, 35.0), 1.0, 850.0, &TraceOptions::default()).unwrap();
        assert_eq!(path.len(), 851);
    }

    #[test]
    fn running_off_the_end_loses_the_tube() {
        let b = rails(40.0, 60.0, 22.0, 200.0);
        let pp = Pseudo::new(&b, RfDrive::reference()).unwrap();
        let r = trace_tube(&pp, Vec3::new(0.0, 0.0, 35.0), 1.0, 1000.0, &TraceOptions::default().towards(Vec3::new(1.0, 0.0, 0.0)));
        assert!(matches!(r, Err(PseudoError::TubeLost { .. })), "{r:?}");
    }

    #[test]
    fn bump_profile_max() {
        let path = TubePath {
            points: vec![Vec3::zero(); 3],
            frames: vec![Frame { tangent: Vec3::unit(0), normal: Vec3::unit(2), binormal: Vec3::unit(1) }; 3],
            pseudopotential: vec![0.0, 2.0, 1.0],
            step: 0.5,
        };
        let b = bump_profile(&path);
        assert_eq!((b.max, b.argmax), (2.0, 1));
        assert_eq!(b.samples[2].0, 1.0);
    }
}
