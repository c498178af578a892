use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_well, Waveform, WaveformError, WaveformMeta, WellSpec};
use super::export::FrameDiagnostics;
use crate::constants::ELEMENTARY_CHARGE;
use crate::field::FieldBasis;
use crate::linalg::{lstsq, Matrix, Vec3};
use crate::pseudo::{secular_frequencies, Pseudo, RfDrive, TubePath};
use crate::scalar::Real;

/// One well per path point, solved in parallel.
pub fn synth_transport<T: Real>(
    basis: &FieldBasis<T>,
    drive: &RfDrive,
    path: &TubePath<T>,
    template: &WellSpec,
) -> Result<Waveform<T>, WaveformError> {
    template.validate()?;
    let step = path.step.to_f64_lossy();
    let wells = (0..path.len())
        .into_par_iter()
        .map(|i| {
            let spec = template.at(path.points[i].map(|v| v.to_f64_lossy()), path.frames[i].tangent.map(|v| v.to_f64_lossy()));
            solve_well(basis, drive, &spec)
                .map_err(|e| WaveformError::AtPoint { s: step * i as f64, source: Box::new(e) })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut used = vec![false; basis.len()];
    for w in &wells {
        for &j in &w.nets {
            used[j] = true;
        }
    }
    let columns: Vec<usize> = (0..basis.len()).filter(|&j| used[j]).collect();
    let mut slot = vec![usize::MAX; basis.len()];
    for (c, &j) in columns.iter().enumerate() {
        slot[j] = c;
    }
    let frames = wells
        .iter()
        .map(|w| {
            let mut f = vec![T::zero(); columns.len()];
            for (&j, &v) in w.nets.iter().zip(&w.voltages) {
                f[slot[j]] = T::of(v);
            }
            f
        })
        .collect();
    let diagnostics = wells
        .iter()
        .enumerate()
        .map(|(i, w)| FrameDiagnostics {
            s: step * i as f64,
            residual_field: w.residual_field,
            axial_freq: w.axial_freq,
            rms_misfit: w.rms_misfit,
        })
        .collect();
    Ok(Waveform {
        nets: columns.iter().map(|&j| basis.net(j).name.clone()).collect(),
        frames,
        meta: WaveformMeta {
            spacing: step,
            drive: *drive,
            target_axial_freq: template.target_axial_freq,
            voltage_bound: template.voltage_bound,
            smoothing_level: 0,
            frames: diagnostics,
        },
    })
}

/// Alternating neighbour averaging. Level `l` (counting from 0) replaces
/// every interior frame whose index has the parity of `l + 1` by the mean
/// of its two neighbours; the first and last frames never change. Levels
/// continue from `meta.smoothing_level`, so smoothing in stages matches
/// smoothing in one call.
pub fn smooth<T: Real>(waveform: &Waveform<T>, levels: usize) -> Waveform<T> {
    let mut out = waveform.clone();
    let n = out.frames.len();
    let half = T::of(0.5);
    let done = out.meta.smoothing_level;
    for level in done..done + levels {
        let first = if level % 2 == 0 { 1 } else { 2 };
        for i in (first..n.saturating_sub(1)).step_by(2) {
            let (before, rest) = out.frames.split_at_mut(i);
            let (mid, after) = rest.split_at_mut(1);
            let (prev, next) = (&before[i - 1], &after[0]);
            for (k, v) in mid[0].iter_mut().enumerate() {
                *v = (prev[k] + next[k]) * half;
            }
        }
    }
    out.meta.smoothing_level += levels;
    out
}

/// Settings for [`verify_waveform`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    /// Frames whose well minimum moved farther than this (µm) are flagged.
    pub max_displacement: f64,
    pub max_iterations: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { max_displacement: 1.0, max_iterations: 50 }
    }
}

/// Diagnostics of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameCheck {
    pub index: usize,
    pub s: f64,
    /// Static |E| at the nominal center, V/m.
    pub residual_field: f64,
    /// Distance from the nominal center to the total-potential minimum, µm
    /// (infinite when no minimum was found).
    pub displacement: f64,
    /// Secular frequency along the axis closest to the tube tangent, Hz
    /// (NaN when the minimum is not stable).
    pub axial_freq: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub frames: Vec<FrameCheck>,
    pub max_residual_field: f64,
    pub max_displacement: f64,
    pub flagged: Vec<usize>,
}

/// Locates the actual well minimum of every frame and compares it with the
/// nominal center on the path.
pub fn verify_waveform<T: Real>(
    basis: &FieldBasis<T>,
    drive: &RfDrive,
    waveform: &Waveform<T>,
    path: &TubePath<T>,
    opts: &VerifyOptions,
) -> Result<VerifyReport, WaveformError> {
    if waveform.len() != path.len() {
        return Err(WaveformError::LengthMismatch { frames: waveform.len(), points: path.len() });
    }
    let pp = Pseudo::new(basis, *drive)?;
    let step = path.step.to_f64_lossy();
    let frames = (0..waveform.len())
        .into_par_iter()
        .map(|i| {
            let v = waveform.dense(basis, i)?;
            let center = path.points[i];
            let residual_field = basis.evaluate(&v, center)?.field.norm().to_f64_lossy();
            let minimum = total_minimum(&pp, basis, &v, center, drive, opts.max_iterations);
            let (displacement, axial_freq) = match minimum {
                Some(r) => {
                    let d = r.dist(center).to_f64_lossy();
                    let t = path.frames[i].tangent.map(|x| x.to_f64_lossy());
                    let f = secular_frequencies(basis, drive, &v, r).ok().map_or(f64::NAN, |sec| {
                        let k = (0..3)
                            .max_by(|&a, &b| sec.axes[a].dot(t).abs().total_cmp(&sec.axes[b].dot(t).abs()))
                            .unwrap_or(0);
                        sec.frequencies[k]
                    });
                    (d, f)
                }
                None => (f64::INFINITY, f64::NAN),
            };
            let flagged = !(displacement <= opts.max_displacement) || axial_freq.is_nan();
            Ok(FrameCheck { index: i, s: step * i as f64, residual_field, displacement, axial_freq, flagged })
        })
        .collect::<Result<Vec<_>, WaveformError>>()?;
    Ok(VerifyReport {
        max_residual_field: frames.iter().map(|f| f.residual_field).fold(0.0, f64::max),
        max_displacement: frames.iter().map(|f| f.displacement).fold(0.0, f64::max),
        flagged: frames.iter().filter(|f| f.flagged).map(|f| f.index).collect(),
        frames,
    })
}

/// Newton iteration on the total potential energy (pseudopotential plus
/// static), eV, from `start`.
fn total_minimum<T: Real>(
    pp: &Pseudo<'_, T>,
    basis: &FieldBasis<T>,
    voltages: &[T],
    start: Vec3<T>,
    drive: &RfDrive,
    max_iterations: usize,
) -> Option<Vec3<T>> {
    let q = drive.ion.charge / ELEMENTARY_CHARGE;
    let energy = |r: Vec3<T>| -> Option<f64> {
        let e = pp.energy(r).ok()?.to_f64_lossy();
        let v = basis.potential(voltages, r).ok()?.to_f64_lossy();
        Some(e + q * v)
    };
    let mut r = start;
    let mut u = energy(r)?;
    for _ in 0..max_iterations {
        let ps = pp.sample(r).ok()?;
        let st = basis.combined_unit(voltages, r).ok()?;
        let g: Vec<f64> = (0..3).map(|k| ps.gradient[k].to_f64_lossy() + q * st.grad[k].to_f64_lossy()).collect();
        let h = Matrix::from_fn(3, 3, |i, j| ps.hessian.m[i][j].to_f64_lossy() + q * st.hess.m[i][j].to_f64_lossy());
        let gn = crate::linalg::norm(&g);
        let newton = lstsq(&h, &g.iter().map(|x| -x).collect::<Vec<_>>());
        // Fall back to steepest descent when the Newton step is not downhill.
        let mut dir = match newton {
            Some(d) if crate::linalg::dot(&d, &g) < 0.0 => d,
            _ => g.iter().map(|x| -x / gn.max(1e-300)).collect(),
        };
        let len = crate::linalg::norm(&dir);
        if len > 5.0 {
            dir.iter_mut().for_each(|x| *x *= 5.0 / len);
        }
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-8 {
            let cand = r + Vec3::new(T::of(t * dir[0]), T::of(t * dir[1]), T::of(t * dir[2]));
            if let Some(uc) = energy(cand) {
                if uc < u {
                    r = cand;
                    u = uc;
                    moved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !moved || t * crate::linalg::norm(&dir) < 1e-9 {
            break;
        }
    }
    Some(r)
}
