//! Transport waveforms.
//!
//! Each well is built in two steps: the control voltages are restricted to
//! the null space of the 3×n field matrix at the well center (zero static
//! field there), then the null-space coefficients are fitted so that the
//! potential along the tube matches a harmonic well of the target axial
//! frequency. Frames along a tube form a waveform, which can be smoothed,
//! verified and exported.

mod export;
mod transport;

use serde::{Deserialize, Serialize};

use crate::constants::UM;
use crate::field::{FieldBasis, FieldError};
use crate::linalg::{lstsq, Matrix, Vec3};
use crate::optim::{inequality_qp, nelder_mead, null_space, OptimError, SimplexConfig};
use crate::pseudo::{PseudoError, RfDrive};
use crate::layout::Role;
use crate::scalar::Real;

pub use export::{format_sig, WaveformMeta};
pub use transport::{smooth, synth_transport, verify_waveform, FrameCheck, VerifyOptions, VerifyReport};

/// Singular values below this fraction of the largest count as zero.
pub const NULL_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WaveformError {
    #[error("invalid well spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Pseudo(#[from] PseudoError),
    #[error(transparent)]
    Optim(#[from] OptimError),
    #[error("net {0} is not a control net")]
    NotControl(String),
    #[error("{available} participating electrodes leave no field-free combination (need at least 4)")]
    InsufficientElectrodes { available: usize },
    #[error("no well within ±{bound} V: best frequency {best_freq:.4e} Hz for target {target:.4e} Hz (rms misfit {rms_misfit:.3e} V)")]
    NoFeasibleWell { best_freq: f64, target: f64, bound: f64, rms_misfit: f64 },
    #[error("at s = {s:.3} µm: {source}")]
    AtPoint { s: f64, source: Box<WaveformError> },
    #[error("waveform has {frames} frames but the path has {points} points")]
    LengthMismatch { frames: usize, points: usize },
}

/// Target well at one point of a tube.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WellSpec {
    /// µm
    pub center: Vec3<f64>,
    /// Unit tube direction at the center.
    pub tangent: Vec3<f64>,
    /// Hz
    pub target_axial_freq: f64,
    /// Half-length of the fit window along the tube, µm.
    pub fit_halfwidth: f64,
    pub fit_points: usize,
    /// Voltage limit, V (symmetric).
    pub voltage_bound: f64,
    /// Control nets closer than this (µm, in the plane) participate.
    pub participation_radius: f64,
    /// Accepted relative deviation of the fitted frequency.
    pub freq_tolerance: f64,
}

impl WellSpec {
    pub fn new(center: Vec3<f64>, tangent: Vec3<f64>, target_axial_freq: f64) -> Self {
        Self {
            center,
            tangent,
            target_axial_freq,
            fit_halfwidth: 50.0,
            fit_points: 10,
            voltage_bound: 5.0,
            participation_radius: 300.0,
            freq_tolerance: 0.02,
        }
    }

    /// Same settings at another point.
    pub fn at(&self, center: Vec3<f64>, tangent: Vec3<f64>) -> Self {
        Self { center, tangent, ..*self }
    }

    pub fn validate(&self) -> Result<(), WaveformError> {
        let bad = |m: String| Err(WaveformError::InvalidSpec(m));
        if !(self.target_axial_freq > 0.0 && self.target_axial_freq.is_finite()) {
            return bad(format!("target frequency must be positive, got {}", self.target_axial_freq));
        }
        if self.fit_points < 4 {
            return bad(format!("need at least 4 fit points, got {}", self.fit_points));
        }
        for (name, v) in [
            ("fit half-width", self.fit_halfwidth),
            ("voltage bound", self.voltage_bound),
            ("participation radius", self.participation_radius),
            ("frequency tolerance", self.freq_tolerance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !self.center.is_finite() || !(self.center.z > 0.0) {
            return bad(format!("center must lie above the plane, got {:?}", self.center));
        }
        if !((self.tangent.norm() - 1.0).abs() < 1e-6) {
            return bad("tangent must be a unit vector".into());
        }
        Ok(())
    }

    /// Curvature of the target potential along the tube, V/µm².
    pub fn target_curvature(&self, drive: &RfDrive) -> f64 {
        harmonic_curvature(self.target_axial_freq, drive)
    }

    /// Target well depth at the edge of the fit window, V.
    pub fn target_depth(&self, drive: &RfDrive) -> f64 {
        self.target_curvature(drive) * self.fit_halfwidth * self.fit_halfwidth
    }

    /// Sample offsets along the tube, µm.
    fn fit_offsets(&self) -> Vec<f64> {
        let n = self.fit_points;
        (0..n).map(|i| self.fit_halfwidth * (2.0 * i as f64 / (n - 1) as f64 - 1.0)).collect()
    }
}

/// `k` in `V(s) = k s² + const` (V/µm²) for axial frequency `freq` (Hz).
pub fn harmonic_curvature(freq: f64, drive: &RfDrive) -> f64 {
    let w = 2.0 * std::f64::consts::PI * freq;
    drive.ion.mass * w * w / (2.0 * drive.ion.charge) * UM * UM
}

/// Axial frequency (Hz) of a potential curvature `k` (V/µm²); 0 when `k ≤ 0`.
pub fn curvature_frequency(k: f64, drive: &RfDrive) -> f64 {
    if k > 0.0 {
        (2.0 * drive.ion.charge * k / (UM * UM) / drive.ion.mass).sqrt() / (2.0 * std::f64::consts::PI)
    } else {
        0.0
    }
}

/// Field (V/m) at a well center from each participating net at 1 V.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldConstraintMatrix {
    /// Basis indices of the participating nets, one per column.
    pub nets: Vec<usize>,
    pub a: Matrix<f64>,
}

impl FieldConstraintMatrix {
    /// Field (V/m) produced by `voltages` (one per column).
    pub fn field(&self, voltages: &[f64]) -> Vec3<f64> {
        let e = self.a.mul_vec(voltages);
        Vec3::new(e[0], e[1], e[2])
    }
}

/// Electrodes this close to the participation radius (µm) count as inside.
const RADIUS_SLACK: f64 = 1e-6;

/// Control nets with an electrode within `radius` µm (in the plane) of `center`.
pub fn participating_nets<T: Real>(basis: &FieldBasis<T>, center: Vec3<f64>, radius: f64) -> Vec<usize> {
    basis
        .control_nets()
        .into_iter()
        .filter(|&j| basis.net(j).distance_to(center.xy()) <= radius + RADIUS_SLACK)
        .collect()
}

/// 3×n matrix of unit-voltage fields at `center`.
pub fn build_constraint_matrix<T: Real>(
    basis: &FieldBasis<T>,
    center: Vec3<f64>,
    participating: &[usize],
) -> Result<FieldConstraintMatrix, WaveformError> {
    if !(center.z > 0.0) {
        return Err(FieldError::BelowPlane { z: center.z }.into());
    }
    let r = center.map(T::of);
    let mut a = Matrix::zeros(3, participating.len());
    for (col, &j) in participating.iter().enumerate() {
        let net = basis.net(j);
        if net.role != Role::Control {
            return Err(WaveformError::NotControl(net.name.clone()));
        }
        let g = net.sample(r).grad;
        for i in 0..3 {
            a[(i, col)] = -g[i].to_f64_lossy() / UM;
        }
    }
    Ok(FieldConstraintMatrix { nets: participating.to_vec(), a })
}

/// One solved well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellSolution {
    /// Basis indices of the nets in `voltages`.
    pub nets: Vec<usize>,
    pub voltages: Vec<f64>,
    /// |E| at the center from these voltages, V/m.
    pub residual_field: f64,
    /// Frequency of a quadratic fit to the potential over the window, Hz.
    pub axial_freq: f64,
    /// RMS difference from the target well (free offset), V.
    pub rms_misfit: f64,
    /// Target well depth over the window, V.
    pub depth: f64,
    pub null_dim: usize,
}

/// Zero-field harmonic well of the requested frequency at `spec.center`.
pub fn solve_well<T: Real>(basis: &FieldBasis<T>, drive: &RfDrive, spec: &WellSpec) -> Result<WellSolution, WaveformError> {
    spec.validate()?;
    drive.validate()?;
    let nets = participating_nets(basis, spec.center, spec.participation_radius);
    if nets.len() < 4 {
        return Err(WaveformError::InsufficientElectrodes { available: nets.len() });
    }
    let cm = build_constraint_matrix(basis, spec.center, &nets)?;
    let ns = match null_space(&cm.a, NULL_RANK_TOL) {
        Ok(ns) => ns,
        Err(OptimError::EmptyNullSpace { .. }) => return Err(WaveformError::InsufficientElectrodes { available: nets.len() }),
        Err(e) => return Err(e.into()),
    };
    let k = ns.dim();
    let n = nets.len();

    // Potential of each null vector at the fit points, with the mean removed
    // (the offset of the target is free).
    let offsets = spec.fit_offsets();
    let m = offsets.len();
    let mut phi = Matrix::zeros(m, n);
    for (i, &s) in offsets.iter().enumerate() {
        let r = (spec.center + spec.tangent * s).map(T::of);
        if !(r.z > T::zero()) {
            return Err(FieldError::BelowPlane { z: r.z.to_f64_lossy() }.into());
        }
        for (col, &j) in nets.iter().enumerate() {
            phi[(i, col)] = basis.net(j).potential(r).to_f64_lossy();
        }
    }
    let mut b = Matrix::from_fn(m, k, |i, c| (0..n).map(|j| phi[(i, j)] * ns.vectors[c][j]).sum());
    center_columns(&mut b);
    let kappa = spec.target_curvature(drive);
    let mut target: Vec<f64> = offsets.iter().map(|s| kappa * s * s).collect();
    let mean = target.iter().sum::<f64>() / m as f64;
    target.iter_mut().for_each(|t| *t -= mean);

    // Small ridge term: picks the smallest voltages among equally good fits.
    let depth = spec.target_depth(drive);
    let lambda = 1e-6 * depth * depth;
    let misfit_sq = |c: &[f64]| -> f64 {
        let u = b.mul_vec(c);
        u.iter().zip(&target).map(|(a, t)| (a - t) * (a - t)).sum::<f64>() / m as f64
    };
    let objective = |c: &[f64]| -> f64 {
        let v = ns.combine(c);
        if v.iter().any(|x| !(x.abs() <= spec.voltage_bound)) {
            return f64::INFINITY;
        }
        misfit_sq(c) + lambda * c.iter().map(|x| x * x).sum::<f64>()
    };
    // Exact minimizer of the same objective under the voltage box, from
    // the feasible origin.
    let hess = Matrix::from_fn(k, k, |i, j| {
        let bb: f64 = (0..m).map(|r| b[(r, i)] * b[(r, j)]).sum();
        2.0 * bb / m as f64 + if i == j { 2.0 * lambda } else { 0.0 }
    });
    let lin: Vec<f64> = (0..k).map(|j| -2.0 * (0..m).map(|r| b[(r, j)] * target[r]).sum::<f64>() / m as f64).collect();
    let rows = Matrix::from_fn(2 * n, k, |i, c| if i % 2 == 0 { ns.vectors[c][i / 2] } else { -ns.vectors[c][i / 2] });
    let mut seed = inequality_qp(&hess, &lin, &rows, &vec![spec.voltage_bound; 2 * n], &vec![0.0; k])?;
    let peak = ns.combine(&seed).iter().fold(0.0f64, |a, x| a.max(x.abs()));
    if peak > spec.voltage_bound {
        let shrink = spec.voltage_bound / peak * (1.0 - 1e-12);
        seed.iter_mut().for_each(|c| *c *= shrink);
    }
    let scale = seed.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1e-3);
    let cfg = SimplexConfig::default()
        .with_step(0.05 * scale)
        .with_max_evals(200 * (k + 1))
        .with_tolerances(1e-12 * depth * depth, 1e-9 * scale);
    // An optimum pressed into a corner of the box leaves no room for a
    // feasible simplex; it is then already the answer.
    let coeffs = match nelder_mead(objective, &seed, &cfg) {
        Ok(res) => res.x,
        Err(OptimError::NonFiniteStart(_)) => seed,
        Err(e) => return Err(e.into()),
    };
    let voltages = ns.combine(&coeffs);

    let rms_misfit = misfit_sq(&coeffs).sqrt();
    let fitted = fit_curvature(&offsets, &phi.mul_vec(&voltages));
    let axial_freq = curvature_frequency(fitted, drive);
    let residual_field = cm.field(&voltages).norm();
    let freq_ok = (axial_freq - spec.target_axial_freq).abs() <= spec.freq_tolerance * spec.target_axial_freq;
    if !freq_ok || rms_misfit > 0.05 * depth {
        return Err(WaveformError::NoFeasibleWell {
            best_freq: axial_freq,
            target: spec.target_axial_freq,
            bound: spec.voltage_bound,
            rms_misfit,
        });
    }
    Ok(WellSolution { nets, voltages, residual_field, axial_freq, rms_misfit, depth, null_dim: k })
}

fn center_columns(b: &mut Matrix<f64>) {
    let m = b.rows();
    for j in 0..b.cols() {
        let mean = (0..m).map(|i| b[(i, j)]).sum::<f64>() / m as f64;
        for i in 0..m {
            b[(i, j)] -= mean;
        }
    }
}

/// Leading coefficient of the least-squares parabola through `(s, u)`.
pub(crate) fn fit_curvature(s: &[f64], u: &[f64]) -> f64 {
    let a = Matrix::from_fn(s.len(), 3, |i, j| s[i].powi(2 - j as i32));
    lstsq(&a, u).map_or(f64::NAN, |c| c[0])
}

/// Control voltages for a sequence of well centers.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<T> {
    /// Net names, one per voltage column.
    pub nets: Vec<String>,
    /// One voltage vector per well center, V.
    pub frames: Vec<Vec<T>>,
    pub meta: WaveformMeta,
}

impl<T: Real> Waveform<T> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Largest |voltage| over all frames.
    pub fn max_abs(&self) -> T {
        self.frames.iter().flatten().fold(T::zero(), |a, v| a.max(v.abs()))
    }

    /// Dense voltage vector over the nets of `basis` for frame `i`.
    pub fn dense(&self, basis: &FieldBasis<T>, i: usize) -> Result<Vec<T>, FieldError> {
        let mut v = vec![T::zero(); basis.len()];
        for (name, &x) in self.nets.iter().zip(&self.frames[i]) {
            let j = basis.net_index(name).ok_or_else(|| FieldError::UnknownNet(name.clone()))?;
            v[j] = x;
        }
        Ok(v)
    }

    /// Frames in reverse order (transport in the opposite direction).
    pub fn reversed(&self) -> Self {
        let mut out = self.clone();
        out.frames.reverse();
        out.meta.frames.reverse();
        out
    }
}
