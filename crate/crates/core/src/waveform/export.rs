use std::io::Write;

use serde::{Deserialize, Serialize};

use super::Waveform;
use crate::pseudo::RfDrive;
use crate::scalar::Real;

/// Per-frame values recorded when the waveform was synthesized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameDiagnostics {
    /// Arclength of the well center along the path, µm.
    pub s: f64,
    /// V/m
    pub residual_field: f64,
    /// Hz
    pub axial_freq: f64,
    /// V
    pub rms_misfit: f64,
}

/// Sidecar metadata of a waveform file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformMeta {
    /// Well-center spacing, µm.
    pub spacing: f64,
    pub drive: RfDrive,
    pub target_axial_freq: f64,
    pub voltage_bound: f64,
    pub smoothing_level: usize,
    /// Synthesis diagnostics (not updated by smoothing).
    pub frames: Vec<FrameDiagnostics>,
}

impl WaveformMeta {
    /// Metadata without diagnostics for `n` frames.
    pub fn empty(n: usize, spacing: f64) -> Self {
        Self {
            spacing,
            drive: RfDrive::reference(),
            target_axial_freq: f64::NAN,
            voltage_bound: f64::INFINITY,
            smoothing_level: 0,
            frames: (0..n)
                .map(|i| FrameDiagnostics { s: spacing * i as f64, residual_field: f64::NAN, axial_freq: f64::NAN, rms_misfit: f64::NAN })
                .collect(),
        }
    }
}

/// `v` with `digits` significant digits, in plain notation for moderate
/// magnitudes and scientific notation otherwise.
pub fn format_sig(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let digits = digits.max(1);
    let exp = v.abs().log10().floor() as i32;
    if (-4..15).contains(&exp) {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        let s = format!("{v:.decimals$}");
        // Rounding may have produced one digit too many (9.999995 -> 10.00000).
        let reparsed: f64 = s.parse().unwrap_or(v);
        if reparsed != 0.0 && reparsed.abs().log10().floor() as i32 > exp && decimals > 0 {
            let decimals = decimals - 1;
            return format!("{v:.decimals$}");
        }
        s
    } else {
        let decimals = digits - 1;
        format!("{v:.decimals$e}")
    }
}

impl<T: Real> Waveform<T> {
    /// CSV with header `index, s_um, <nets...>` and 6 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["index".to_string(), "s_um".to_string()];
        header.extend(self.nets.iter().cloned());
        w.write_record(&header)?;
        for (i, frame) in self.frames.iter().enumerate() {
            let s = self.meta.frames.get(i).map_or(self.meta.spacing * i as f64, |d| d.s);
            let mut row = vec![i.to_string(), format_sig(s, 6)];
            row.extend(frame.iter().map(|v| format_sig(v.to_f64_lossy(), 6)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Pretty-printed JSON sidecar.
    pub fn metadata_json(&self) -> String {
        serde_json::to_string_pretty(&self.meta).expect("metadata always serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(1.23456789, 6), "1.23457");
        assert_eq!(format_sig(-0.000123456789, 6), "-0.000123457");
        assert_eq!(format_sig(123456.789, 6), "123457");
        assert_eq!(format_sig(9.9999999, 6), "10.0000");
        assert_eq!(format_sig(0.0, 6), "0");
        assert_eq!(format_sig(1.5e-7, 6), "1.50000e-7");
        for v in [3.33333333, -4.99999951, 0.0123456789, 2.5e-9] {
            let back: f64 = format_sig(v, 6).parse().unwrap();
            assert!((back - v).abs() <= 5e-6 * v.abs());
        }
    }

    #[test]
    fn csv_layout() {
        let w = Waveform {
            nets: vec!["a".into(), "b".into()],
            frames: vec![vec![1.0, -2.0], vec![0.5, 1.0 / 3.0]],
            meta: WaveformMeta::empty(2, 1.0),
        };
        let mut buf = Vec::new();
        w.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "index,s_um,a,b\n0,0,1.00000,-2.00000\n1,1.00000,0.500000,0.333333\n");
    }
}
