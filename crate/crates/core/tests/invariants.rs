mod common;

use proptest::prelude::*;
use trapforge::field::{NetPolygons, Patch};
use trapforge::geom::Point;
use trapforge::linalg::{Vec2, Vec3};
use trapforge::waveform::{smooth, Waveform, WaveformMeta};
use trapforge::{FieldBasis, Role};

fn convex(cx: f64, cy: f64, rx: f64, ry: f64, rot: f64, angles: &[f64]) -> Vec<Point> {
    let mut a = angles.to_vec();
    a.sort_by(f64::total_cmp);
    a.dedup_by(|x, y| (*x - *y).abs() < 1e-3);
    a.iter()
        .map(|t| {
            let p = Point::new(rx * t.cos(), ry * t.sin()).rotated(rot);
            Point::new(cx + p.x, cy + p.y)
        })
        .collect()
}

fn polygon() -> impl Strategy<Value = Vec<Point>> {
    (-100.0..100.0f64, -100.0..100.0f64, 10.0..120.0f64, 10.0..120.0f64, 0.0..3.2f64, prop::collection::vec(0.0..std::f64::consts::TAU, 3..9))
        .prop_map(|(cx, cy, rx, ry, rot, ang)| convex(cx, cy, rx, ry, rot, &ang))
        .prop_filter("needs three distinct vertices", |p| p.len() >= 3)
}

fn point() -> impl Strategy<Value = Vec3<f64>> {
    (-200.0..200.0f64, -200.0..200.0f64, 5.0..150.0f64).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn net(name: &str, poly: Vec<Point>) -> NetPolygons {
    NetPolygons { name: name.into(), role: Role::Control, polygons: vec![poly] }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn potential_is_harmonic_and_bounded(poly in polygon(), r in point()) {
        let patch = Patch::new(&poly);
        let s = patch.sample(r, None);
        prop_assert!(s.phi >= -1e-15 && s.phi <= 1.0 + 1e-15);
        let scale = s.hess.norm().max(1e-300);
        prop_assert!(s.hess.trace().abs() <= 1e-9 * scale, "laplacian {} vs {}", s.hess.trace(), scale);
    }

    #[test]
    fn splitting_a_polygon_is_additive(poly in polygon(), r in point(), k in 1usize..8) {
        // Fan split through vertex 0 into two convex pieces.
        let k = 1 + k % (poly.len() - 2).max(1);
        prop_assume!(k + 1 < poly.len());
        let a: Vec<Point> = poly[..=k + 1].to_vec();
        let mut b = vec![poly[0]];
        b.extend_from_slice(&poly[k + 1..]);
        prop_assume!(b.len() >= 3);
        let whole = Patch::new(&poly).sample(r, None);
        let parts = [Patch::new(&a).sample(r, None), Patch::new(&b).sample(r, None)];
        let tol = 1e-12 * (1.0 + whole.phi.abs());
        prop_assert!((parts[0].phi + parts[1].phi - whole.phi).abs() <= tol);
        let g = parts[0].grad + parts[1].grad - whole.grad;
        prop_assert!(g.norm() <= 1e-11 * (1.0 + whole.grad.norm()));
    }

    #[test]
    fn superposition_is_exact(p in polygon(), q in polygon(), r in point(), va in -10.0..10.0f64, vb in -10.0..10.0f64) {
        let basis: FieldBasis<f64> = FieldBasis::from_polygons(vec![net("a", p), net("b", q)]);
        let both = basis.evaluate(&[va, vb], r).unwrap();
        let a = basis.evaluate(&[va, 0.0], r).unwrap();
        let b = basis.evaluate(&[0.0, vb], r).unwrap();
        let scale = both.field.norm() + a.field.norm() + b.field.norm() + 1e-300;
        prop_assert!((a.field + b.field - both.field).norm() <= 1e-12 * scale);
        prop_assert!((a.potential + b.potential - both.potential).abs() <= 1e-12 * (va.abs() + vb.abs()));
    }

    #[test]
    fn orientation_and_translation(poly in polygon(), r in point(), dx in -50.0..50.0f64, dy in -50.0..50.0f64) {
        let fwd = Patch::new(&poly).potential(r);
        let mut rev = poly.clone();
        rev.reverse();
        prop_assert!((Patch::new(&rev).potential(r) - fwd).abs() <= 1e-14);
        let moved: Vec<Point> = poly.iter().map(|p| Vec2::new(p.x + dx, p.y + dy)).collect();
        let shifted = Patch::new(&moved).potential(Vec3::new(r.x + dx, r.y + dy, r.z));
        prop_assert!((shifted - fwd).abs() <= 1e-12);
    }
}

fn waveform(frames: Vec<Vec<f64>>) -> Waveform<f64> {
    let n = frames.len();
    Waveform { nets: (0..frames[0].len()).map(|k| format!("n{k}")).collect(), frames, meta: WaveformMeta::empty(n, 1.0) }
}

fn column(w: &Waveform<f64>, k: usize) -> Vec<f64> {
    w.frames.iter().map(|f| f[k]).collect()
}

fn first_diffs(c: &[f64]) -> Vec<f64> {
    c.windows(2).map(|w| w[1] - w[0]).collect()
}

fn frames() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (3usize..40, 1usize..4).prop_flat_map(|(n, m)| prop::collection::vec(prop::collection::vec(-5.0..5.0f64, m), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn smoothing_contracts_first_differences(f in frames(), levels in 0usize..12) {
        let w = waveform(f);
        let mut prev = w.clone();
        for _ in 0..levels {
            let next = smooth(&prev, 1);
            for k in 0..w.nets.len() {
                let (a, b) = (first_diffs(&column(&prev, k)), first_diffs(&column(&next, k)));
                let max = |d: &[f64]| d.iter().map(|x| x.abs()).fold(0.0, f64::max);
                let tv = |d: &[f64]| d.iter().map(|x| x.abs()).sum::<f64>();
                prop_assert!(max(&b) <= max(&a) + 1e-12);
                prop_assert!(tv(&b) <= tv(&a) + 1e-12);
            }
            prev = next;
        }
    }

    #[test]
    fn smoothing_keeps_bounds_and_endpoints(f in frames(), levels in 0usize..12) {
        let w = waveform(f);
        let s = smooth(&w, levels);
        prop_assert_eq!(s.len(), w.len());
        prop_assert_eq!(s.frames.first(), w.frames.first());
        prop_assert_eq!(s.frames.last(), w.frames.last());
        for k in 0..w.nets.len() {
            let c = column(&w, k);
            let (lo, hi) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            for v in column(&s, k) {
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
        prop_assert!(s.max_abs() <= 5.0);
    }

    #[test]
    fn staged_smoothing_matches_single_call(f in frames(), a in 0usize..6, b in 0usize..6) {
        let w = waveform(f);
        let (staged, once) = (smooth(&smooth(&w, a), b), smooth(&w, a + b));
        prop_assert_eq!(staged.frames, once.frames);
        prop_assert_eq!(staged.meta.smoothing_level, once.meta.smoothing_level);
    }

    #[test]
    fn constant_waveforms_are_fixed(v in prop::collection::vec(-5.0..5.0f64, 1..5), n in 2usize..30, levels in 0usize..12) {
        let w = waveform(vec![v; n]);
        prop_assert_eq!(smooth(&w, levels).frames, w.frames);
    }
}

#[test]
fn second_differences_are_not_contracted() {
    let second = |c: &[f64]| c.windows(3).map(|w| (w[0] - 2.0 * w[1] + w[2]).abs()).fold(0.0, f64::max);
    let w = waveform([0.0, 1.0, 0.0, 1.0, 1.0, -1.0].iter().map(|&v| vec![v]).collect());
    let s = smooth(&w, 1);
    assert_eq!(column(&s, 0), vec![0.0, 0.0, 0.0, 0.5, 1.0, -1.0]);
    assert_eq!(second(&column(&w, 0)), 2.0);
    assert_eq!(second(&column(&s, 0)), 2.5);
}
