//! Gapless-plane electrostatics.
//!
//! An electrode patch held at 1 V in an otherwise grounded plane produces
//! `φ(r) = Ω(r) / 2π`, with `Ω` the solid angle the patch subtends at `r`.
//! The solid angle is accumulated edge by edge in closed form; its gradient
//! is the Biot-Savart-like line integral around the boundary, and the
//! Hessian and third derivatives follow by differentiating the per-edge
//! segment expression analytically.
//!
//! Geometry is in micrometres. [`UnitSample`] values are per volt and per
//! µm; [`FieldSample`] is in SI units.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::constants::UM;
use crate::geom;
use crate::layout::{Role, TrapLayout};
use crate::linalg::{Mat3, Vec2, Vec3};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FieldError {
    #[error("observation point z = {z} µm is not above the electrode plane")]
    BelowPlane { z: f64 },
    #[error("unknown net `{0}`")]
    UnknownNet(String),
    #[error("voltage vector has {got} entries, basis has {expected} nets")]
    VoltageLength { got: usize, expected: usize },
}

/// How inter-electrode gaps are treated by the gapless-plane solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GapPolicy {
    /// Each gap is bisected and each half annexed to its neighbour (every
    /// electrode grows outward by half its component's nominal gap).
    #[default]
    MidlineSplit,
    /// Gaps are grounded plane.
    GroundedGaps,
}

impl std::str::FromStr for GapPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "midline-split" => Ok(Self::MidlineSplit),
            "grounded-gaps" => Ok(Self::GroundedGaps),
            other => Err(format!("unknown gap policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Edge<T> {
    a: Vec2<T>,
    b: Vec2<T>,
    /// Unit direction a → b.
    t: Vec2<T>,
}

/// A single polygonal patch, stored counterclockwise.
#[derive(Debug, Clone)]
pub struct Patch<T> {
    edges: Vec<Edge<T>>,
}

/// Potential, gradient and Hessian of a unit-potential source, per µm.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UnitSample<T> {
    pub phi: T,
    pub grad: Vec3<T>,
    pub hess: Mat3<T>,
}

/// Third derivatives: `d[k].m[i][j] = ∂_i ∂_j ∂_k φ`, per µm³.
pub type Third<T> = [Mat3<T>; 3];

impl<T: Real> UnitSample<T> {
    fn add_scaled(&mut self, o: &Self, k: T) {
        self.phi = self.phi + o.phi * k;
        self.grad += o.grad * k;
        self.hess = self.hess + o.hess.scale(k);
    }
}

/// Per-edge solid-angle primitive for the right triangle spanned by the foot
/// of the perpendicular and a point at signed arclength `s` along the edge
/// line at signed distance `d`, seen from height `z`.
#[inline]
fn edge_angle<T: Real>(s: T, d: T, z: T) -> T {
    let rho2 = s * s + d * d;
    let r = (rho2 + z * z).sqrt();
    // atan(s d (R - z) / (d² R + s² z)), with R - z = ρ² / (R + z).
    (s * d * rho2).atan2((r + z) * (d * d * r + s * s * z))
}

impl<T: Real> Patch<T> {
    pub fn new(vertices: &[Vec2<T>]) -> Self {
        let n = vertices.len();
        let mut twice_area = T::zero();
        for i in 0..n {
            twice_area = twice_area + vertices[i].cross(vertices[(i + 1) % n]);
        }
        let mut v = vertices.to_vec();
        if twice_area < T::zero() {
            v.reverse();
        }
        let edges = (0..n)
            .filter_map(|i| {
                let (a, b) = (v[i], v[(i + 1) % n]);
                let len = (b - a).norm();
                (len > T::zero()).then(|| Edge { a, b, t: (b - a) * (T::one() / len) })
            })
            .collect();
        Self { edges }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Unit-potential φ at `r` (µm, z > 0).
    pub fn potential(&self, r: Vec3<T>) -> T {
        let p = r.xy();
        let mut omega = T::zero();
        for e in &self.edges {
            let (pa, pb) = (e.a - p, e.b - p);
            // Outward normal for a CCW polygon is the right-hand normal.
            let d = pa.dot(Vec2::new(e.t.y, -e.t.x));
            omega = omega + edge_angle(pb.dot(e.t), d, r.z) - edge_angle(pa.dot(e.t), d, r.z);
        }
        omega / T::TAU()
    }

    /// φ, ∇φ and the Hessian at `r`; optionally the third-derivative tensor.
    pub fn sample(&self, r: Vec3<T>, third: Option<&mut Third<T>>) -> UnitSample<T> {
        let mut out = UnitSample { phi: self.potential(r), ..Default::default() };
        let two = T::of(2.0);
        let three = T::of(3.0);
        let inv_tau = T::one() / T::TAU();
        let mut third = third;
        for e in &self.edges {
            let t = Vec3::new(e.t.x, e.t.y, T::zero());
            let a = Vec3::new(e.a.x - r.x, e.a.y - r.y, -r.z);
            let b = Vec3::new(e.b.x - r.x, e.b.y - r.y, -r.z);
            let sa = a.dot(t);
            let sb = b.dot(t);
            // Perpendicular from r to the edge line.
            let rho = a - t * sa;
            let rho2 = rho.norm_sq();
            let inv_rho2 = T::one() / rho2;
            let tr = t.cross(rho);
            let c = tr * inv_rho2;
            let (la, lb) = (a.norm(), b.norm());
            let w = sb / lb - sa / la;
            out.grad += c * (w * inv_tau);

            // d(t × ρ)_i / dr_j = ε_ijk t_k.
            let m = [[T::zero(), T::zero(), -t.y], [T::zero(), T::zero(), t.x], [t.y, -t.x, T::zero()]];
            let dw = |v: Vec3<T>, s: T, l: T, j: usize| -t[j] / l + s * v[j] / (l * l * l);
            let wj = Vec3::new(
                dw(b, sb, lb, 0) - dw(a, sa, la, 0),
                dw(b, sb, lb, 1) - dw(a, sa, la, 1),
                dw(b, sb, lb, 2) - dw(a, sa, la, 2),
            );
            let inv_rho4 = inv_rho2 * inv_rho2;
            let mut amat = [[T::zero(); 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    amat[i][j] = m[i][j] * inv_rho2 + two * tr[i] * rho[j] * inv_rho4;
                    out.hess.m[i][j] = out.hess.m[i][j] + (w * amat[i][j] + c[i] * wj[j]) * inv_tau;
                }
            }

            if let Some(third) = third.as_deref_mut() {
                let inv_rho6 = inv_rho4 * inv_rho2;
                let ddw = |v: Vec3<T>, s: T, l: T, j: usize, k: usize| {
                    let l3 = l * l * l;
                    let delta = if j == k { T::one() } else { T::zero() };
                    -(t[j] * v[k] + t[k] * v[j]) / l3 - s * delta / l3 + three * s * v[j] * v[k] / (l3 * l * l)
                };
                for k in 0..3 {
                    for i in 0..3 {
                        for j in 0..3 {
                            let proj = if j == k { T::one() } else { T::zero() } - t[j] * t[k];
                            let da = two * m[i][j] * rho[k] * inv_rho4
                                + two * (m[i][k] * rho[j] - tr[i] * proj) * inv_rho4
                                + T::of(8.0) * tr[i] * rho[j] * rho[k] * inv_rho6;
                            let wjk = ddw(b, sb, lb, j, k) - ddw(a, sa, la, j, k);
                            let v = wj[k] * amat[i][j] + w * da + amat[i][k] * wj[j] + c[i] * wjk;
                            third[k].m[i][j] = third[k].m[i][j] + v * inv_tau;
                        }
                    }
                }
            }
        }
        out
    }
}

/// Unit-potential evaluator for one net (all of its polygons).
#[derive(Debug, Clone)]
pub struct NetBasis<T> {
    pub name: String,
    pub role: Role,
    patches: Vec<Patch<T>>,
    /// Polygons in the plane (µm), after the gap policy was applied.
    outlines: Vec<Vec<Vec2<f64>>>,
}

impl<T: Real> NetBasis<T> {
    pub fn outlines(&self) -> &[Vec<Vec2<f64>>] {
        &self.outlines
    }

    pub fn potential(&self, r: Vec3<T>) -> T {
        self.patches.iter().map(|p| p.potential(r)).sum()
    }

    pub fn sample(&self, r: Vec3<T>) -> UnitSample<T> {
        let mut s = UnitSample::default();
        for p in &self.patches {
            s.add_scaled(&p.sample(r, None), T::one());
        }
        s
    }

    pub fn sample_with_third(&self, r: Vec3<T>) -> (UnitSample<T>, Third<T>) {
        let mut s = UnitSample::default();
        let mut third = [Mat3::zero(); 3];
        for p in &self.patches {
            s.add_scaled(&p.sample(r, Some(&mut third)), T::one());
        }
        (s, third)
    }

    /// Minimum in-plane distance (µm) from `p` to this net's electrodes.
    pub fn distance_to(&self, p: Vec2<f64>) -> f64 {
        self.outlines.iter().map(|o| geom::distance_to(o, p)).fold(f64::INFINITY, f64::min)
    }
}

/// Field, potential and Hessian in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldSample<T> {
    /// V
    pub potential: T,
    /// V/m
    pub field: Vec3<T>,
    /// V/m², Hessian of the potential.
    pub hessian: Mat3<T>,
}

/// Per-net unit-potential evaluators for a whole layout.
#[derive(Debug, Clone)]
pub struct FieldBasis<T> {
    nets: Vec<NetBasis<T>>,
    index: HashMap<String, usize>,
}

/// Input description of one net for [`FieldBasis::from_polygons`].
#[derive(Debug, Clone)]
pub struct NetPolygons {
    pub name: String,
    pub role: Role,
    pub polygons: Vec<Vec<Vec2<f64>>>,
}

impl<T: Real> FieldBasis<T> {
    /// Builds evaluators from explicit polygons (already gap-adjusted).
    pub fn from_polygons(nets: Vec<NetPolygons>) -> Self {
        let mut out = Vec::with_capacity(nets.len());
        let mut index = HashMap::new();
        for n in nets {
            let patches = n
                .polygons
                .iter()
                .map(|poly| {
                    let v: Vec<Vec2<T>> = poly.iter().map(|p| Vec2::new(T::of(p.x), T::of(p.y))).collect();
                    Patch::new(&v)
                })
                .collect();
            index.insert(n.name.clone(), out.len());
            out.push(NetBasis { name: n.name, role: n.role, patches, outlines: n.polygons });
        }
        Self { nets: out, index }
    }

    /// Unit-potential basis for every net in `layout`. Nets are ordered by
    /// name; ground nets are included (they only ever carry 0 V).
    pub fn unit_basis(layout: &TrapLayout, policy: GapPolicy) -> Self {
        let mut grouped: BTreeMap<String, NetPolygons> = BTreeMap::new();
        for (role, e, gap) in layout.electrodes_with_gap() {
            let poly = match policy {
                GapPolicy::GroundedGaps => e.polygon.clone(),
                GapPolicy::MidlineSplit => geom::offset_polygon(&e.polygon, 0.5 * gap),
            };
            grouped
                .entry(e.net.clone())
                .or_insert_with(|| NetPolygons { name: e.net.clone(), role, polygons: Vec::new() })
                .polygons
                .push(poly);
        }
        Self::from_polygons(grouped.into_values().collect())
    }

    pub fn nets(&self) -> &[NetBasis<T>] {
        &self.nets
    }

    pub fn len(&self) -> usize {
        self.nets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nets.is_empty()
    }

    pub fn net_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn net(&self, j: usize) -> &NetBasis<T> {
        &self.nets[j]
    }

    /// Index of the (single) rf net, if any.
    pub fn rf_net(&self) -> Option<usize> {
        self.nets.iter().position(|n| n.role == Role::Rf)
    }

    /// Indices of all control nets.
    pub fn control_nets(&self) -> Vec<usize> {
        (0..self.nets.len()).filter(|&j| self.nets[j].role == Role::Control).collect()
    }

    /// Dense voltage vector from a net → volts map; missing nets are 0 V.
    pub fn voltages(&self, map: &HashMap<String, T>) -> Result<Vec<T>, FieldError> {
        let mut v = vec![T::zero(); self.nets.len()];
        for (name, &volts) in map {
            let j = self.net_index(name).ok_or_else(|| FieldError::UnknownNet(name.clone()))?;
            v[j] = volts;
        }
        Ok(v)
    }

    fn check_point(r: Vec3<T>) -> Result<(), FieldError> {
        if r.z > T::zero() {
            Ok(())
        } else {
            Err(FieldError::BelowPlane { z: r.z.to_f64_lossy() })
        }
    }

    /// Superposed unit sample (per µm) for a dense voltage vector.
    pub fn combined_unit(&self, voltages: &[T], r: Vec3<T>) -> Result<UnitSample<T>, FieldError> {
        Self::check_point(r)?;
        if voltages.len() != self.nets.len() {
            return Err(FieldError::VoltageLength { got: voltages.len(), expected: self.nets.len() });
        }
        let mut s = UnitSample::default();
        for (net, &v) in self.nets.iter().zip(voltages) {
            if v != T::zero() {
                s.add_scaled(&net.sample(r), v);
            }
        }
        Ok(s)
    }

    /// Potential, field and Hessian (SI) for dense `voltages` at `r` (µm).
    pub fn evaluate(&self, voltages: &[T], r: Vec3<T>) -> Result<FieldSample<T>, FieldError> {
        let s = self.combined_unit(voltages, r)?;
        let per_m = T::one() / T::of(UM);
        Ok(FieldSample {
            potential: s.phi,
            field: -s.grad * per_m,
            hessian: s.hess.scale(per_m * per_m),
        })
    }

    /// Same as [`FieldBasis::evaluate`] with a net → volts map.
    pub fn evaluate_map(&self, voltages: &HashMap<String, T>, r: Vec3<T>) -> Result<FieldSample<T>, FieldError> {
        self.evaluate(&self.voltages(voltages)?, r)
    }

    /// Potential only, per volt weights, at `r` (µm). Cheaper than a full sample.
    pub fn potential(&self, voltages: &[T], r: Vec3<T>) -> Result<T, FieldError> {
        Self::check_point(r)?;
        Ok(self
            .nets
            .iter()
            .zip(voltages)
            .filter(|(_, &v)| v != T::zero())
            .map(|(n, &v)| n.potential(r) * v)
            .sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Vec2<f64>> {
        vec![Vec2::new(x0, y0), Vec2::new(x1, y0), Vec2::new(x1, y1), Vec2::new(x0, y1)]
    }

    fn patch(poly: &[Vec2<f64>]) -> Patch<f64> {
        Patch::new(poly)
    }

    /// Closed form for the corner of a rectangle: Ω = atan(ab / (z R)).
    fn corner_omega(a: f64, b: f64, z: f64) -> f64 {
        (a * b / (z * (a * a + b * b + z * z).sqrt())).atan()
    }

    #[test]
    fn rectangle_matches_corner_formula() {
        let p = patch(&rect(0.0, 0.0, 3.0, 2.0));
        for (x, y, z) in [(1.0, 0.5, 0.7), (-2.0, 4.0, 1.5), (1.5, 1.0, 10.0)] {
            let sgn = |v: f64| v.signum();
            let mut omega = 0.0;
            for (cx, cy, s) in [(0.0, 0.0, 1.0), (3.0, 0.0, -1.0), (3.0, 2.0, 1.0), (0.0, 2.0, -1.0)] {
                let (a, b) = (cx - x, cy - y);
                omega += s * sgn(a) * sgn(b) * corner_omega(a.abs(), b.abs(), z);
            }
            let expect = omega / std::f64::consts::TAU;
            let got = p.potential(Vec3::new(x, y, z));
            assert!((got - expect).abs() < 1e-14, "{got} vs {expect}");
        }
    }

    #[test]
    fn orientation_does_not_matter() {
        let r = rect(-1.0, -2.0, 4.0, 1.0);
        let rev: Vec<_> = r.iter().rev().copied().collect();
        let q = Vec3::new(0.3, 0.2, 0.9);
        assert_eq!(patch(&r).potential(q), patch(&rev).potential(q));
    }

    #[test]
    fn whole_plane_limit() {
        let l = 1e5;
        let p = patch(&rect(-l, -l, l, l));
        let phi = p.potential(Vec3::new(0.0, 0.0, 1.0));
        assert!((phi - 1.0).abs() < 1e-4, "{phi}");
    }

    #[test]
    fn far_field_decays_monotonically() {
        let p = patch(&rect(0.0, 0.0, 10.0, 10.0));
        let mut last = f64::INFINITY;
        for k in 1..12 {
            let z = 10.0 * 2f64.powi(k);
            let phi = p.potential(Vec3::new(5.0, 5.0, z));
            assert!(phi > 0.0 && phi < last);
            last = phi;
        }
        assert!(last < 1e-6);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let tri = vec![Vec2::new(0.0, 0.0), Vec2::new(50.0, 10.0), Vec2::new(10.0, 40.0)];
        let p = patch(&tri);
        let r = Vec3::new(20.0, 5.0, 12.0);
        let s = p.sample(r, None);
        let h = 1e-4;
        for i in 0..3 {
            let e = Vec3::unit(i) * h;
            let fd = (p.potential(r + e) - p.potential(r - e)) / (2.0 * h);
            assert!((fd - s.grad[i]).abs() < 1e-8 * s.grad.norm().max(1e-3), "axis {i}: {fd} vs {}", s.grad[i]);
        }
    }

    #[test]
    fn hessian_and_third_match_finite_differences() {
        let poly = vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(60.0, 0.0),
            Vec2::new(60.0, 20.0),
            Vec2::new(30.0, 50.0),
            Vec2::new(-5.0, 30.0),
        ];
        let p = patch(&poly);
        let r = Vec3::new(25.0, 10.0, 15.0);
        let mut third = [Mat3::zero(); 3];
        let s = p.sample(r, Some(&mut third));
        let h = 1e-3;
        for k in 0..3 {
            let e = Vec3::unit(k) * h;
            let gp = p.sample(r + e, None);
            let gm = p.sample(r - e, None);
            for i in 0..3 {
                let fd = (gp.grad[i] - gm.grad[i]) / (2.0 * h);
                assert!((fd - s.hess.m[i][k]).abs() < 1e-7 * s.hess.norm(), "H[{i}][{k}]");
                for j in 0..3 {
                    let fd3 = (gp.hess.m[i][j] - gm.hess.m[i][j]) / (2.0 * h);
                    let scale = third.iter().map(Mat3::norm).fold(0.0, f64::max);
                    assert!((fd3 - third[k].m[i][j]).abs() < 1e-6 * scale, "T[{i}][{j}][{k}]");
                }
            }
        }
        assert!(s.hess.trace().abs() < 1e-12 * s.hess.norm());
    }

    #[test]
    fn point_above_edge_line_and_vertex() {
        // Observation points whose projection lies on an edge line or a vertex.
        let p = patch(&rect(0.0, 0.0, 1.0, 1.0));
        for r in [Vec3::new(0.0, 0.0, 0.5), Vec3::new(2.0, 0.0, 0.5), Vec3::new(0.5, 0.0, 0.3)] {
            let s = p.sample(r, None);
            assert!(s.phi.is_finite() && s.grad.is_finite());
            let h = 1e-5;
            let fd = (p.potential(r + Vec3::unit(0) * h) - p.potential(r - Vec3::unit(0) * h)) / (2.0 * h);
            assert!((fd - s.grad.x).abs() < 1e-7);
        }
        // Directly above a corner: a quarter of the infinite-quadrant value.
        let phi = p.potential(Vec3::new(0.0, 0.0, 1e-4));
        assert!((phi - 0.25).abs() < 1e-3);
    }

    #[test]
    fn below_plane_is_rejected() {
        let basis = FieldBasis::<f64>::from_polygons(vec![NetPolygons {
            name: "a".into(),
            role: Role::Control,
            polygons: vec![rect(0.0, 0.0, 1.0, 1.0)],
        }]);
        assert!(matches!(basis.evaluate(&[1.0], Vec3::new(0.0, 0.0, 0.0)), Err(FieldError::BelowPlane { .. })));
        assert!(matches!(basis.evaluate(&[1.0], Vec3::new(0.0, 0.0, -1.0)), Err(FieldError::BelowPlane { .. })));
    }

    #[test]
    fn single_precision_agrees_with_double() {
        let poly = rect(0.0, 0.0, 40.0, 60.0);
        let p64 = patch(&poly);
        let p32 = Patch::<f32>::new(&poly.iter().map(|v| Vec2::new(v.x as f32, v.y as f32)).collect::<Vec<_>>());
        let a = p64.potential(Vec3::new(10.0, 20.0, 30.0));
        let b = p32.potential(Vec3::new(10.0f32, 20.0, 30.0));
        assert!((a - f64::from(b)).abs() < 1e-5);
    }
}
