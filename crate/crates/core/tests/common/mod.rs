#![allow(dead_code)]

use trapforge::field::{FieldBasis, GapPolicy};
use trapforge::geom::Transform;
use trapforge::layout::library::StraightSection;
use trapforge::linalg::Vec3;
use trapforge::pseudo::{find_null, trace_between, NullOptions, Pseudo, TraceOptions, TubePath};
use trapforge::{RfDrive, TrapLayout};

// 15-point Kronrod nodes/weights on [-1, 1] (positive half, center last) and
// the embedded 7-point Gauss weights.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let s = f(c - h * XGK[i]) + f(c + h * XGK[i]);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss-Kronrod quadrature to relative tolerance `rel`.
pub fn integrate(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, rel: f64) -> f64 {
    fn rec(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, rel: f64, abs: f64, depth: usize) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= rel * v.abs() + abs || depth == 0 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, rel, 0.5 * abs, depth - 1) + rec(f, m, b, rel, 0.5 * abs, depth - 1)
    }
    if a == b {
        return 0.0;
    }
    rec(f, a, b, rel, 1e-300, 40)
}

/// Potential at `(px, py, pz)` of a convex polygon held at 1 V in a grounded
/// plane, by direct integration of the half-space Green's function
/// `z / (2π) ∬ dA / |r - r'|³`.
pub fn polygon_potential_quadrature(poly: &[(f64, f64)], (px, py, pz): (f64, f64, f64)) -> f64 {
    let n = poly.len();
    let mut xs: Vec<f64> = poly.iter().map(|p| p.0).collect();
    xs.push(px);
    xs.sort_by(f64::total_cmp);
    let (xmin, xmax) = (xs[0], xs[xs.len() - 1]);
    // Vertical chord [lo, hi] of the convex polygon at abscissa x.
    let chord = |x: f64| -> (f64, f64) {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            let (x0, x1) = (a.0.min(b.0), a.0.max(b.0));
            if x < x0 || x > x1 {
                continue;
            }
            if x1 - x0 < 1e-14 {
                lo = lo.min(a.1.min(b.1));
                hi = hi.max(a.1.max(b.1));
            } else {
                let y = a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0);
                lo = lo.min(y);
                hi = hi.max(y);
            }
        }
        (lo, hi)
    };
    let z2 = pz * pz;
    let mut outer = |x: f64| {
        let (lo, hi) = chord(x);
        if hi <= lo {
            return 0.0;
        }
        let dx2 = (x - px) * (x - px);
        let mut inner = |y: f64| {
            let r2 = dx2 + (y - py) * (y - py) + z2;
            1.0 / (r2 * r2.sqrt())
        };
        // Split at the foot of the perpendicular where the integrand peaks.
        let mid = py.clamp(lo, hi);
        integrate(&mut inner, lo, mid, 1e-12) + integrate(&mut inner, mid, hi, 1e-12)
    };
    let mut total = 0.0;
    for w in xs.windows(2) {
        let (a, b) = (w[0].max(xmin), w[1].min(xmax));
        if b > a {
            total += integrate(&mut outer, a, b, 1e-11);
        }
    }
    pz / (2.0 * std::f64::consts::PI) * total
}

/// Single five-wire section of `segments` × 60 µm along +x.
pub fn section_layout(rails: (f64, f64), center_gap: f64, segments: usize) -> TrapLayout {
    let comp = StraightSection::new(rails, center_gap, 60.0, segments).build().unwrap();
    TrapLayout::single(comp, "s", Transform::IDENTITY).unwrap()
}

pub fn section_basis(rails: (f64, f64), center_gap: f64, segments: usize) -> FieldBasis<f64> {
    FieldBasis::unit_basis(&section_layout(rails, center_gap, segments), GapPolicy::MidlineSplit)
}

/// rf null at the middle of a section.
pub fn center_null(basis: &FieldBasis<f64>, drive: &RfDrive, x_mid: f64) -> Vec3<f64> {
    let n = find_null(basis, drive, Vec3::new(x_mid, 0.0, 40.0), &NullOptions::default()).unwrap();
    assert!(n.is_null);
    n.point
}

/// Center gap of a 40/60 section whose null sits at `height` µm, by
/// bisection on the 25-segment section.
pub fn center_gap_for_height(height: f64, drive: &RfDrive) -> f64 {
    let (mut lo, mut hi) = (40.0, 50.0);
    for _ in 0..20 {
        let mid = 0.5 * (lo + hi);
        let z = center_null(&section_basis((40.0, 60.0), mid, 25), drive, 750.0).z;
        if z < height {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Tube from x = `x0` to x = `x1` at 1 µm spacing, seeded from the null at
/// x = `x_mid`.
pub fn section_path(basis: &FieldBasis<f64>, drive: &RfDrive, x_mid: f64, x0: f64, x1: f64) -> TubePath<f64> {
    let c = center_null(basis, drive, x_mid);
    let pp = Pseudo::new(basis, *drive).unwrap();
    trace_between(&pp, Vec3::new(x0, c.y, c.z), Vec3::new(x1, c.y, c.z), 1.0, &TraceOptions::default()).unwrap()
}
