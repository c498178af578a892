mod common;

use std::sync::OnceLock;

use trapforge::waveform::{smooth, synth_transport, verify_waveform, VerifyOptions, Waveform};
use trapforge::{FieldBasis, RfDrive, TubePath, WellSpec};

struct Setup {
    basis: FieldBasis<f64>,
    path: TubePath<f64>,
    raw: Waveform<f64>,
}

fn setup() -> &'static Setup {
    static S: OnceLock<Setup> = OnceLock::new();
    S.get_or_init(|| {
        let drive = RfDrive::reference();
        // Long enough that the rail ends do not break the translation symmetry.
        let basis = common::section_basis((40.0, 60.0), 45.1, 60);
        let path = common::section_path(&basis, &drive, 1800.0, 1760.0, 1900.0);
        let spec = WellSpec::new(path.points[0], path.frames[0].tangent, 3.5e6);
        let raw = synth_transport(&basis, &drive, &path, &spec).unwrap();
        Setup { basis, path, raw }
    })
}

fn column(w: &Waveform<f64>, net: &str) -> Option<Vec<f64>> {
    let k = w.nets.iter().position(|n| n == net)?;
    Some(w.frames.iter().map(|f| f[k]).collect())
}

#[test]
fn one_frame_per_point_within_bounds() {
    let s = setup();
    assert_eq!(s.raw.len(), s.path.len());
    assert_eq!(s.path.len(), 141);
    assert!(s.raw.max_abs() <= 5.0);
    for d in &s.raw.meta.frames {
        assert!(d.residual_field < 1e-3, "{d:?}");
        assert!((d.axial_freq / 3.5e6 - 1.0).abs() < 0.02, "{d:?}");
    }
}

#[test]
fn reversed_path_reverses_frames() {
    let s = setup();
    let back = synth_transport(&s.basis, &RfDrive::reference(), &s.path.reversed(), &WellSpec::new(s.path.points[0], s.path.frames[0].tangent, 3.5e6))
        .unwrap();
    let fwd = s.raw.reversed();
    assert_eq!(back.nets, fwd.nets);
    let worst = back.frames.iter().flatten().zip(fwd.frames.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-3, "max difference {worst} V");
}

#[test]
fn frames_repeat_one_segment_later() {
    let s = setup();
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for row in ["c", "l", "r"] {
        for k in 0..59 {
            let (Some(a), Some(b)) = (column(&s.raw, &format!("s.{row}{k:02}")), column(&s.raw, &format!("s.{row}{:02}", k + 1))) else {
                continue;
            };
            for i in 0..s.raw.len() - 60 {
                worst = worst.max((a[i] - b[i + 60]).abs());
                compared += 1;
            }
        }
    }
    assert!(compared > 1000);
    assert!(worst < 1e-3, "max mismatch {worst} V");
}

#[test]
fn corrupted_frame_is_flagged() {
    let s = setup();
    let drive = RfDrive::reference();
    let mut wf = smooth(&s.raw, 10);
    let clean = verify_waveform(&s.basis, &drive, &wf, &s.path, &VerifyOptions::default()).unwrap();
    assert!(clean.flagged.is_empty(), "{:?}", clean.flagged);
    assert!(clean.max_displacement <= 1.0);
    for f in &clean.frames {
        assert!((f.axial_freq / 3.5e6 - 1.0).abs() < 0.05, "{f:?}");
    }
    // Swap in the well from 40 µm further along.
    wf.frames[70] = wf.frames[110].clone();
    let bad = verify_waveform(&s.basis, &drive, &wf, &s.path, &VerifyOptions::default()).unwrap();
    assert_eq!(bad.flagged, vec![70]);
    assert!(bad.frames[70].displacement > 30.0);
}
