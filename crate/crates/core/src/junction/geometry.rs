//! Y-junction electrode geometry from control-vertex offsets.

use std::f64::consts::FRAC_PI_3;

use serde::{Deserialize, Serialize};

use super::JunctionError;
use crate::geom::{self, Point};
use crate::layout::library::{five_wire_profile, RF_NET};
use crate::layout::{Component, Electrode, Port, Role, MIN_VERTEX_SPACING};
use crate::linalg::solve2;

/// How the rail edge is drawn through the control vertices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "type")]
pub enum Interpolation {
    Linear,
    /// Centripetal Catmull-Rom spline polygonized to `chord_tol` µm.
    CatmullRom { chord_tol: f64 },
}

/// Fixed geometry of a threefold-symmetric Y junction.
///
/// Leg `k` points along angle `120k°`. Looking outward along a leg, its left
/// rail is `rail_widths.0` wide and its right rail `rail_widths.1`, which
/// matches a straight section's `east` port.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JunctionConfig {
    pub rail_widths: (f64, f64),
    /// Rail-to-rail spacing in the legs.
    pub center_gap: f64,
    pub gap: f64,
    pub outer_width: f64,
    /// Distance from the junction center to each leg port.
    pub leg_length: f64,
    /// Control vertices lie within this distance of the center along each leg.
    pub opt_extent: f64,
    /// Control vertices on the inner rail edge (odd; the middle one sits on
    /// the corner).
    pub inner_vertices: usize,
    /// Control vertices on the outer rail edge (odd).
    pub outer_vertices: usize,
    pub max_offset: f64,
    pub interpolation: Interpolation,
    /// Radius of the central control electrode.
    pub center_core: f64,
    /// Segment pitch of the center strip near the junction.
    pub narrow_pitch: f64,
    /// The narrow pitch is used up to this distance from the center.
    pub narrow_extent: f64,
    /// Segment pitch elsewhere.
    pub pitch: f64,
}

impl Default for JunctionConfig {
    fn default() -> Self {
        Self {
            rail_widths: (40.0, 60.0),
            center_gap: 44.0,
            gap: 5.0,
            outer_width: 150.0,
            leg_length: 280.0,
            opt_extent: 200.0,
            inner_vertices: 9,
            outer_vertices: 9,
            max_offset: 55.0,
            interpolation: Interpolation::Linear,
            center_core: 40.0,
            narrow_pitch: 30.0,
            narrow_extent: 160.0,
            pitch: 60.0,
        }
    }
}

/// One chevron's rail edges, traversed from leg `k` to leg `k+1`.
#[derive(Debug, Clone)]
pub(crate) struct ChevronEdges {
    pub inner: Vec<Point>,
    pub outer: Vec<Point>,
}

fn rot(p: Point, k: usize) -> Point {
    match k % 3 {
        0 => p,
        _ => p.rotated(2.0 * FRAC_PI_3 * k as f64),
    }
}

/// Unit vector along leg `k`.
pub fn leg_dir(k: usize) -> Point {
    let (s, c) = match k % 3 {
        0 => (0.0, 1.0),
        1 => (0.75f64.sqrt(), -0.5),
        _ => (-(0.75f64.sqrt()), -0.5),
    };
    Point::new(c, s)
}

/// Open-polyline offset by `delta` to the left of the travel direction
/// (negative `delta` offsets to the right), with mitred joints.
fn offset_polyline(pts: &[Point], delta: f64) -> Vec<Point> {
    let n = pts.len();
    let left = |d: Point| Point::new(-d.y, d.x);
    (0..n)
        .map(|i| {
            let d_in = (i > 0).then(|| (pts[i] - pts[i - 1]).normalized());
            let d_out = (i + 1 < n).then(|| (pts[i + 1] - pts[i]).normalized());
            match (d_in, d_out) {
                (Some(a), Some(b)) => {
                    let (na, nb) = (left(a), left(b));
                    let denom = (1.0 + na.dot(nb)).max(0.25);
                    pts[i] + (na + nb) * (delta / denom)
                }
                (Some(a), None) | (None, Some(a)) => pts[i] + left(a) * delta,
                (None, None) => pts[i],
            }
        })
        .collect()
}

/// Centripetal Catmull-Rom segment between `p1` and `p2`, `t` in [0, 1].
fn catmull_rom(p0: Point, p1: Point, p2: Point, p3: Point, t: f64) -> Point {
    let knot = |a: Point, b: Point| a.dist(b).sqrt().max(1e-12);
    let t1 = knot(p0, p1);
    let t2 = t1 + knot(p1, p2);
    let t3 = t2 + knot(p2, p3);
    let t = t1 + t * (t2 - t1);
    let lerp = |a: Point, b: Point, ta: f64, tb: f64| a * ((tb - t) / (tb - ta)) + b * ((t - ta) / (tb - ta));
    let a1 = lerp(p0, p1, 0.0, t1);
    let a2 = lerp(p1, p2, t1, t2);
    let a3 = lerp(p2, p3, t2, t3);
    let b1 = lerp(a1, a2, 0.0, t2);
    let b2 = lerp(a2, a3, t1, t3);
    lerp(b1, b2, t1, t2)
}

#[allow(clippy::too_many_arguments)]
fn refine(out: &mut Vec<Point>, seg: [Point; 4], t0: f64, t1: f64, a: Point, b: Point, tol: f64, depth: u32) {
    let tm = 0.5 * (t0 + t1);
    let m = catmull_rom(seg[0], seg[1], seg[2], seg[3], tm);
    if depth < 12 && (m - (a + b) * 0.5).norm() > tol {
        refine(out, seg, t0, tm, a, m, tol, depth + 1);
        refine(out, seg, tm, t1, m, b, tol, depth + 1);
    } else {
        out.push(b);
    }
}

/// Splines through `ctrl[1..n-1]`; `ctrl[0]` and `ctrl[n-1]` are phantom
/// neighbours fixing the end tangents.
fn spline_through(ctrl: &[Point], tol: f64) -> Vec<Point> {
    let mut out = vec![ctrl[1]];
    for i in 1..ctrl.len() - 2 {
        let seg = [ctrl[i - 1], ctrl[i], ctrl[i + 1], ctrl[i + 2]];
        refine(&mut out, seg, 0.0, 1.0, ctrl[i], ctrl[i + 1], tol, 0);
    }
    out
}

impl JunctionConfig {
    pub fn n_params(&self) -> usize {
        self.inner_vertices + self.outer_vertices
    }

    pub fn validate(&self) -> Result<(), JunctionError> {
        let bad = |m: String| Err(JunctionError::BadConfig(m));
        let (wa, wb) = self.rail_widths;
        for (name, v) in [
            ("rail width", wa),
            ("rail width", wb),
            ("gap", self.gap),
            ("outer width", self.outer_width),
            ("max offset", self.max_offset),
            ("pitch", self.pitch),
            ("narrow pitch", self.narrow_pitch),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.center_gap > 2.0 * self.gap) {
            return bad("center gap must exceed twice the gap".into());
        }
        for n in [self.inner_vertices, self.outer_vertices] {
            if n % 2 == 0 || n < 3 {
                return bad(format!("vertex counts must be odd and at least 3, got {n}"));
            }
        }
        if let Interpolation::CatmullRom { chord_tol } = self.interpolation {
            if !(chord_tol > 0.0) {
                return bad("chord tolerance must be positive".into());
            }
        }
        let c_out = self.outer_corner();
        let reach = c_out.dot(leg_dir(0)).max(c_out.dot(leg_dir(1)));
        if !(self.opt_extent > reach + self.max_offset) {
            return bad(format!("opt_extent {} must exceed the outer corner reach {reach:.1} plus max offset", self.opt_extent));
        }
        if !(self.leg_length > self.opt_extent) || !(self.leg_length > self.narrow_extent) {
            return bad("leg length must exceed opt_extent and narrow_extent".into());
        }
        if !(self.narrow_extent > self.center_core) {
            return bad("narrow extent must exceed the center core".into());
        }
        let far = self.far_corner();
        let x_o = self.crook_core();
        if !(self.leg_length - x_o > self.gap * 2.0) || far.dot(leg_dir(0)).max(far.dot(leg_dir(1))) + self.gap >= x_o {
            return bad("leg too short for the outer control electrodes".into());
        }
        Ok(())
    }

    fn half(&self) -> f64 {
        0.5 * self.center_gap
    }

    fn inner_corner(&self) -> Point {
        Point::from_angle(FRAC_PI_3) * (2.0 * self.half() / 3f64.sqrt())
    }

    fn corner_of(&self, da: f64, db: f64) -> Point {
        // p·n0 = da, p·n1 = -db
        let (n0, n1) = (leg_dir(0).perp(), leg_dir(1).perp());
        let (x, y) = solve2(n0.x, n0.y, n1.x, n1.y, (da, -db)).expect("legs are not parallel");
        Point::new(x, y)
    }

    fn outer_corner(&self) -> Point {
        let a = self.half();
        self.corner_of(a + self.rail_widths.0, a + self.rail_widths.1)
    }

    fn far_corner(&self) -> Point {
        let a = self.half() + self.gap + self.outer_width;
        self.corner_of(a + self.rail_widths.0, a + self.rail_widths.1)
    }

    fn crook_core(&self) -> f64 {
        let far = self.far_corner();
        let reach = far.dot(leg_dir(0)).max(far.dot(leg_dir(1)));
        (reach + 2.0 * self.gap).max(self.narrow_extent)
    }

    /// Chevron 0 edges (between legs 0 and 1) and the per-vertex normals of
    /// its control vertices.
    fn base_edges(&self, offsets: &[f64], leg_length: f64) -> ChevronEdges {
        let (u0, u1) = (leg_dir(0), leg_dir(1));
        let (n0, n1) = (u0.perp(), u1.perp());
        let a = self.half();
        let (wa, wb) = self.rail_widths;
        let m = Point::from_angle(FRAC_PI_3);

        let build = |da: f64, db: f64, corner: Point, corner_normal: Point, na: Point, nb: Point, count: usize, offs: &[f64]| {
            let far_a = u0 * leg_length + n0 * da;
            let q_a = u0 * self.opt_extent + n0 * da;
            let q_b = u1 * self.opt_extent - n1 * db;
            let far_b = u1 * leg_length - n1 * db;
            let per_arm = (count - 1) / 2;
            let mut ctrl = Vec::with_capacity(count + 4);
            ctrl.push(far_a);
            ctrl.push(q_a);
            let mut idx = 0;
            for j in (1..=per_arm).rev() {
                let p = corner + (q_a - corner) * (j as f64 / (per_arm + 1) as f64);
                ctrl.push(p + na * offs[idx]);
                idx += 1;
            }
            ctrl.push(corner + corner_normal * offs[idx]);
            idx += 1;
            for j in 1..=per_arm {
                let p = corner + (q_b - corner) * (j as f64 / (per_arm + 1) as f64);
                ctrl.push(p + nb * offs[idx]);
                idx += 1;
            }
            ctrl.push(q_b);
            ctrl.push(far_b);
            match self.interpolation {
                Interpolation::Linear => ctrl,
                Interpolation::CatmullRom { chord_tol } => {
                    let mut out = vec![far_a];
                    out.extend(spline_through(&ctrl, chord_tol));
                    out.push(far_b);
                    out
                }
            }
        };
        let ni = self.inner_vertices;
        let inner = build(a, a, self.inner_corner(), -m, -n0, n1, ni, &offsets[..ni]);
        let outer = build(
            a + wa,
            a + wb,
            self.outer_corner(),
            (n0 - n1).normalized(),
            n0,
            -n1,
            self.outer_vertices,
            &offsets[ni..],
        );
        ChevronEdges { inner, outer }
    }

    fn check_offsets(&self, offsets: &[f64]) -> Result<(), JunctionError> {
        if offsets.len() != self.n_params() {
            return Err(JunctionError::BadConfig(format!("expected {} offsets, got {}", self.n_params(), offsets.len())));
        }
        if let Some(o) = offsets.iter().find(|o| !(o.abs() <= self.max_offset)) {
            return Err(JunctionError::InvalidGeometry(format!("offset {o} exceeds ±{}", self.max_offset)));
        }
        Ok(())
    }

    /// The three rf electrode polygons (counterclockwise), with legs of
    /// length `leg_length`.
    pub fn rf_polygons(&self, offsets: &[f64], leg_length: f64) -> Result<[Vec<Point>; 3], JunctionError> {
        self.check_offsets(offsets)?;
        let e = self.base_edges(offsets, leg_length);
        let chevron = chevron_polygon(&e)?;
        let star = star_polygon(&e, self.gap);
        if !geom::is_simple(&star) {
            return Err(JunctionError::InvalidGeometry("rail inner edges collide near the center".into()));
        }
        Ok([chevron.clone(), chevron.iter().map(|&p| rot(p, 1)).collect(), chevron.iter().map(|&p| rot(p, 2)).collect()])
    }

    /// Full junction component (rf rails plus control electrodes).
    pub fn component(&self, offsets: &[f64], name: &str) -> Result<Component, JunctionError> {
        self.validate()?;
        self.check_offsets(offsets)?;
        let g = self.gap;
        let l = self.leg_length;
        let e = self.base_edges(offsets, l);
        let chevron = chevron_polygon(&e)?;
        let mut electrodes = Vec::new();
        for k in 0..3 {
            electrodes.push(Electrode::new(format!("rf{k}"), Role::Rf, RF_NET, chevron.iter().map(|&p| rot(p, k)).collect()));
        }
        let mut push_ctl = |id: String, poly: Vec<Point>| -> Result<(), JunctionError> {
            let poly = geom::dedup_ring(poly, MIN_VERTEX_SPACING * 2.0);
            if poly.len() < 3 || geom::area(&poly) < 1.0 {
                return Err(JunctionError::InvalidGeometry(format!("control electrode {id} vanished")));
            }
            if !geom::is_simple(&poly) {
                return Err(JunctionError::InvalidGeometry(format!("control electrode {id} is not simple")));
            }
            electrodes.push(Electrode::new(id.clone(), Role::Control, id, poly));
            Ok(())
        };

        let slab = |poly: &[Point], dir: Point, lo: f64, hi: f64| {
            let p = geom::clip_half_plane(poly, dir, hi);
            geom::clip_half_plane(&p, -dir, -lo)
        };

        // Center strip: one central piece plus segments along each leg.
        let star = star_polygon(&e, g);
        if !geom::is_simple(&star) {
            return Err(JunctionError::InvalidGeometry("rail inner edges collide near the center".into()));
        }
        let mut core = star.clone();
        for k in 0..3 {
            core = geom::clip_half_plane(&core, leg_dir(k), self.center_core - 0.5 * g);
        }
        push_ctl("ctr".into(), core)?;
        let mut breaks = vec![self.center_core];
        let mut x = self.center_core;
        while x + self.narrow_pitch <= self.narrow_extent + 1e-9 {
            x += self.narrow_pitch;
            breaks.push(x);
        }
        while x + 1.5 * self.pitch <= l + 1e-9 {
            x += self.pitch;
            breaks.push(x);
        }
        if l - x > 1e-9 {
            breaks.push(l);
        }
        for k in 0..3 {
            for (j, w) in breaks.windows(2).enumerate() {
                let piece = slab(&star, leg_dir(k), w[0] + 0.5 * g, w[1] - 0.5 * g);
                push_ctl(format!("s{k}_{j:02}"), piece)?;
            }
        }

        // Outer control electrodes in each crook.
        let crook = crook_polygon(&e, self, l);
        let x_o = self.crook_core();
        let mut obreaks = vec![x_o];
        let mut x = x_o;
        while x + 1.5 * self.pitch <= l + 1e-9 {
            x += self.pitch;
            obreaks.push(x);
        }
        if l - x > 1e-9 {
            obreaks.push(l);
        }
        let bis = Point::from_angle(FRAC_PI_3);
        for k in 0..3 {
            let ck: Vec<Point> = crook.iter().map(|&p| rot(p, k)).collect();
            let (ua, ub) = (leg_dir(k), leg_dir(k + 1));
            let mut corner = geom::clip_half_plane(&ck, ua, x_o - 0.5 * g);
            corner = geom::clip_half_plane(&corner, ub, x_o - 0.5 * g);
            push_ctl(format!("k{k}"), corner)?;
            let side = rot(bis, k).perp();
            for (j, w) in obreaks.windows(2).enumerate() {
                let pa = geom::clip_half_plane(&slab(&ck, ua, w[0] + 0.5 * g, w[1] - 0.5 * g), side, 0.0);
                push_ctl(format!("k{k}a{j}"), pa)?;
                let pb = geom::clip_half_plane(&slab(&ck, ub, w[0] + 0.5 * g, w[1] - 0.5 * g), -side, 0.0);
                push_ctl(format!("k{k}b{j}"), pb)?;
            }
        }

        let profile = five_wire_profile(self.rail_widths.0, self.rail_widths.1, self.center_gap, g, self.outer_width);
        let ports = (0..3)
            .map(|k| Port {
                name: format!("leg{k}"),
                position: leg_dir(k) * l,
                direction: leg_dir(k),
                rail_profile: profile.clone(),
            })
            .collect();
        Ok(Component {
            name: name.to_string(),
            kind: "junction".into(),
            gap: g,
            electrodes,
            ports,
            params: serde_json::to_value(serde_json::json!({ "config": self, "vertex_offsets": offsets })).ok(),
        })
    }
}

fn chevron_polygon(e: &ChevronEdges) -> Result<Vec<Point>, JunctionError> {
    let mut poly = e.inner.clone();
    poly.extend(e.outer.iter().rev());
    let poly = geom::to_ccw(geom::dedup_ring(poly, 1e-9));
    if !geom::is_simple(&poly) {
        return Err(JunctionError::InvalidGeometry("rf rail polygon self-intersects".into()));
    }
    Ok(poly)
}

/// Boundary of the center control region: inner rail edges shifted away
/// from the rails by the gap, joined across the three leg ends.
fn star_polygon(e: &ChevronEdges, gap: f64) -> Vec<Point> {
    // Traversing the inner edge from leg 0 to leg 1, the rail lies on the right.
    let shifted = offset_polyline(&e.inner, gap);
    let mut star = Vec::with_capacity(3 * shifted.len());
    for k in 0..3 {
        star.extend(shifted.iter().map(|&p| rot(p, k)));
    }
    geom::to_ccw(geom::dedup_ring(star, 1e-9))
}

/// Outer control region of crook 0.
fn crook_polygon(e: &ChevronEdges, cfg: &JunctionConfig, leg_length: f64) -> Vec<Point> {
    // Along the outer edge the rail lies on the left.
    let mut poly = offset_polyline(&e.outer, -cfg.gap);
    let a = cfg.half() + cfg.gap + cfg.outer_width;
    let (u0, u1) = (leg_dir(0), leg_dir(1));
    poly.push(u1 * leg_length - u1.perp() * (a + cfg.rail_widths.1));
    poly.push(cfg.far_corner());
    poly.push(u0 * leg_length + u0.perp() * (a + cfg.rail_widths.0));
    geom::to_ccw(geom::dedup_ring(poly, 1e-9))
}

/// Rigid rotation of a point by `k` × 120° about the junction center.
pub fn rotate_third(p: Point, k: usize) -> Point {
    rot(p, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{TrapLayout, PortRef};
    use crate::geom::Transform;

    fn straight_chevron(cfg: &JunctionConfig, l: f64) -> Vec<Point> {
        let a = cfg.half();
        let (u0, u1) = (leg_dir(0), leg_dir(1));
        let (n0, n1) = (u0.perp(), u1.perp());
        geom::to_ccw(vec![
            u0 * l + n0 * a,
            cfg.inner_corner(),
            u1 * l - n1 * a,
            u1 * l - n1 * (a + cfg.rail_widths.1),
            cfg.outer_corner(),
            u0 * l + n0 * (a + cfg.rail_widths.0),
        ])
    }

    fn same_ring(a: &[Point], b: &[Point]) -> bool {
        let a = geom::drop_collinear(a.to_vec(), 1e-9);
        let b = geom::drop_collinear(b.to_vec(), 1e-9);
        if a.len() != b.len() {
            return false;
        }
        (0..b.len()).any(|s| a.iter().enumerate().all(|(i, p)| p.dist(b[(i + s) % b.len()]) < 1e-9))
    }

    #[test]
    fn zero_offsets_give_straight_rails() {
        let cfg = JunctionConfig::default();
        let rf = cfg.rf_polygons(&[0.0; 18], cfg.leg_length).unwrap();
        assert!(same_ring(&rf[0], &straight_chevron(&cfg, cfg.leg_length)));
    }

    #[test]
    fn legs_have_requested_widths() {
        let cfg = JunctionConfig::default();
        let c = cfg.component(&[0.0; 18], "j").unwrap();
        for k in 0..3 {
            let port = c.port(&format!("leg{k}")).unwrap();
            let widths: Vec<f64> = port.rail_profile.iter().filter(|s| s.net == RF_NET).map(|s| s.width).collect();
            assert_eq!(widths, vec![40.0, 60.0]);
        }
        // Rail cross-section measured at the port: left rail spans a..a+40.
        let u = leg_dir(0);
        let rf0 = &c.electrode("rf0").unwrap().polygon;
        let probe = |t: f64| geom::contains(rf0, u * (cfg.leg_length - 1.0) + u.perp() * t);
        assert!(probe(22.5) && probe(61.5) && !probe(21.5) && !probe(62.5));
    }

    #[test]
    fn threefold_symmetry_is_exact() {
        let cfg = JunctionConfig::default();
        let offs: Vec<f64> = (0..18).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let rf = cfg.rf_polygons(&offs, cfg.leg_length).unwrap();
        for k in 0..3 {
            let next = &rf[(k + 1) % 3];
            let rotated: Vec<Point> = rf[k].iter().map(|&p| rot(p, 1)).collect();
            let err = rotated.iter().zip(next).map(|(a, b)| a.dist(*b)).fold(0.0, f64::max);
            assert!(err < 1e-9, "mismatch {err}");
        }
    }

    #[test]
    fn component_is_valid_and_attaches() {
        let cfg = JunctionConfig::default();
        let offs: Vec<f64> = (0..18).map(|i| if i % 2 == 0 { 4.0 } else { -3.0 }).collect();
        let c = cfg.component(&offs, "junction").unwrap();
        let layout = TrapLayout::single(c, "j", Transform::IDENTITY).unwrap();
        assert!(layout.validate().is_empty());
        let sec = crate::layout::library::make_straight_section((40.0, 60.0), 44.0, 60.0, 3).unwrap();
        for k in 0..3 {
            layout.attach(&sec, &PortRef::new("j", format!("leg{k}")), "west").unwrap();
        }
    }

    #[test]
    fn self_intersection_is_reported() {
        let cfg = JunctionConfig { max_offset: 80.0, ..Default::default() };
        let mut offs = vec![0.0; 18];
        // Inner corner pushed past the outer corner.
        offs[4] = -70.0;
        assert!(matches!(cfg.rf_polygons(&offs, cfg.leg_length), Err(JunctionError::InvalidGeometry(_))));
        let strict = JunctionConfig::default();
        assert!(strict.rf_polygons(&offs, strict.leg_length).is_err());
    }

    #[test]
    fn spline_option_is_valid() {
        let cfg = JunctionConfig { interpolation: Interpolation::CatmullRom { chord_tol: 0.1 }, ..Default::default() };
        let offs: Vec<f64> = (0..18).map(|i| (i as f64 * 0.7).sin() * 5.0).collect();
        let c = cfg.component(&offs, "j").unwrap();
        assert!(TrapLayout::single(c, "j", Transform::IDENTITY).unwrap().validate().is_empty());
    }
}
