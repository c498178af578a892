//! rf pseudopotential, null finding, tube tracing and secular frequencies.

mod tube;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::constants::{Ion, ELEMENTARY_CHARGE, UM};
use crate::field::{FieldBasis, FieldError, Third, UnitSample};
use crate::linalg::{lstsq, Mat3, Matrix, Vec3};
use crate::optim::sym_eigen3;
use crate::scalar::Real;

pub use tube::{bump_profile, trace_between, trace_tube, BumpProfile, Frame, TraceOptions, TubeMarcher, TubePath};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PseudoError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("layout has no rf net")]
    NoRfNet,
    #[error("invalid rf drive: {0}")]
    InvalidDrive(String),
    #[error("no convergence after {iterations} iterations (|E| = {residual:.3e} V/m)")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("tube lost at s = {s:.3} µm: {reason}")]
    TubeLost { s: f64, reason: String },
    #[error("not a minimum: curvature {eigenvalue:.3e} J/m² along axis {axis:?}")]
    NotAMinimum { eigenvalue: f64, axis: [f64; 3] },
}

/// rf drive and trapped species.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfDrive {
    /// Peak amplitude, V.
    pub amplitude: f64,
    /// Angular drive frequency, rad/s.
    pub omega_rf: f64,
    pub ion: Ion,
}

impl RfDrive {
    pub fn new(amplitude: f64, freq_hz: f64, ion: Ion) -> Result<Self, PseudoError> {
        let d = Self { amplitude, omega_rf: 2.0 * std::f64::consts::PI * freq_hz, ion };
        d.validate()?;
        Ok(d)
    }

    /// 113 V peak at 90.7 MHz on ²⁴Mg⁺.
    pub fn reference() -> Self {
        Self::new(113.0, 90.7e6, Ion::MG24).expect("valid")
    }

    pub fn freq_hz(&self) -> f64 {
        self.omega_rf / (2.0 * std::f64::consts::PI)
    }

    pub fn validate(&self) -> Result<(), PseudoError> {
        for (name, v) in [
            ("amplitude", self.amplitude),
            ("omega_rf", self.omega_rf),
            ("ion mass", self.ion.mass),
            ("ion charge", self.ion.charge),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(PseudoError::InvalidDrive(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// eV per (unit-potential gradient in 1/µm)² at this drive.
    pub fn energy_scale(&self) -> f64 {
        let q = self.ion.charge;
        let e_per_grad = self.amplitude / UM;
        q * q * e_per_grad * e_per_grad / (4.0 * self.ion.mass * self.omega_rf * self.omega_rf) / ELEMENTARY_CHARGE
    }
}

impl Default for RfDrive {
    fn default() -> Self {
        Self::reference()
    }
}

impl fmt::Display for RfDrive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}V,{}MHz,{:.4}u", self.amplitude, self.freq_hz() / 1e6, self.ion.mass / crate::constants::ATOMIC_MASS_UNIT)
    }
}

/// Parses `113V,90.7MHz,Mg24` (fields in any order; frequency units Hz,
/// kHz, MHz or GHz; species defaults to Mg24).
impl FromStr for RfDrive {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut amp = None;
        let mut freq = None;
        let mut ion = Ion::MG24;
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let lower = part.to_ascii_lowercase();
            let num = |suffix_len: usize, scale: f64| -> Result<f64, String> {
                part[..part.len() - suffix_len].trim().parse::<f64>().map(|v| v * scale).map_err(|e| format!("`{part}`: {e}"))
            };
            if lower.ends_with("ghz") {
                freq = Some(num(3, 1e9)?);
            } else if lower.ends_with("mhz") {
                freq = Some(num(3, 1e6)?);
            } else if lower.ends_with("khz") {
                freq = Some(num(3, 1e3)?);
            } else if lower.ends_with("hz") {
                freq = Some(num(2, 1.0)?);
            } else if lower.ends_with('v') {
                amp = Some(num(1, 1.0)?);
            } else {
                ion = Ion::parse(part).ok_or_else(|| format!("unrecognised drive field `{part}`"))?;
            }
        }
        let amp = amp.ok_or("missing amplitude (e.g. 113V)")?;
        let freq = freq.ok_or("missing frequency (e.g. 90.7MHz)")?;
        RfDrive::new(amp, freq, ion).map_err(|e| e.to_string())
    }
}

/// Pseudopotential of the rf net of a basis.
#[derive(Debug, Clone)]
pub struct Pseudo<'a, T> {
    basis: &'a FieldBasis<T>,
    rf: usize,
    drive: RfDrive,
    k: T,
}

/// Pseudopotential with derivatives, eV and µm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoSample<T> {
    pub energy: T,
    pub gradient: Vec3<T>,
    pub hessian: Mat3<T>,
}

impl<'a, T: Real> Pseudo<'a, T> {
    pub fn new(basis: &'a FieldBasis<T>, drive: RfDrive) -> Result<Self, PseudoError> {
        drive.validate()?;
        let rf = basis.rf_net().ok_or(PseudoError::NoRfNet)?;
        Ok(Self { basis, rf, drive, k: T::of(drive.energy_scale()) })
    }

    pub fn basis(&self) -> &'a FieldBasis<T> {
        self.basis
    }

    pub fn drive(&self) -> &RfDrive {
        &self.drive
    }

    /// eV per (1/µm)² of unit-potential gradient.
    pub fn scale(&self) -> T {
        self.k
    }

    fn check(r: Vec3<T>) -> Result<(), PseudoError> {
        if r.z > T::zero() {
            Ok(())
        } else {
            Err(FieldError::BelowPlane { z: r.z.to_f64_lossy() }.into())
        }
    }

    /// Unit-amplitude rf sample (per µm).
    pub fn unit(&self, r: Vec3<T>) -> Result<UnitSample<T>, PseudoError> {
        Self::check(r)?;
        Ok(self.basis.net(self.rf).sample(r))
    }

    pub fn unit_with_third(&self, r: Vec3<T>) -> Result<(UnitSample<T>, Third<T>), PseudoError> {
        Self::check(r)?;
        Ok(self.basis.net(self.rf).sample_with_third(r))
    }

    /// Φ_pp in eV.
    pub fn energy(&self, r: Vec3<T>) -> Result<T, PseudoError> {
        Ok(self.unit(r)?.grad.norm_sq() * self.k)
    }

    /// |E_rf| in V/m at the drive amplitude.
    pub fn field_magnitude(&self, r: Vec3<T>) -> Result<T, PseudoError> {
        Ok(self.unit(r)?.grad.norm() * T::of(self.drive.amplitude / UM))
    }

    /// Φ_pp with gradient (eV/µm) and Hessian (eV/µm²).
    pub fn sample(&self, r: Vec3<T>) -> Result<PseudoSample<T>, PseudoError> {
        let (s, d) = self.unit_with_third(r)?;
        Ok(pseudo_from_unit(&s, &d, self.k))
    }
}

pub(crate) fn pseudo_from_unit<T: Real>(s: &UnitSample<T>, d: &Third<T>, k: T) -> PseudoSample<T> {
    let g = s.grad;
    let h = s.hess;
    let two_k = k + k;
    let mut hess = h.mul_mat(&h);
    for (kk, dk) in d.iter().enumerate() {
        hess = hess + dk.scale(g[kk]);
    }
    PseudoSample { energy: g.norm_sq() * k, gradient: h.mul_vec(g) * two_k, hessian: hess.scale(two_k) }
}

/// Φ_pp (eV) at `r` (µm).
pub fn pseudopotential<T: Real>(basis: &FieldBasis<T>, drive: &RfDrive, r: Vec3<T>) -> Result<T, PseudoError> {
    Pseudo::new(basis, *drive)?.energy(r)
}

/// Options for [`find_null`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullOptions {
    pub max_iterations: usize,
    /// Relative reduction of |E| (versus the seed) that counts as a true null.
    pub rel_tol: f64,
    /// The search fails once it strays this far (µm) from the seed.
    pub basin_radius: f64,
}

impl Default for NullOptions {
    fn default() -> Self {
        Self { max_iterations: 200, rel_tol: 1e-4, basin_radius: 100.0 }
    }
}

/// Outcome of [`find_null`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullPoint<T> {
    pub point: Vec3<T>,
    /// |E_rf| at `point`, V/m.
    pub residual: f64,
    /// |E_rf| at the seed, V/m.
    pub seed_residual: f64,
    /// False when only a residual (non-zero) minimum of |E| was found.
    pub is_null: bool,
    pub iterations: usize,
}

/// Levenberg-Marquardt on the rf field vector, starting from `seed`.
pub fn find_null<T: Real>(
    basis: &FieldBasis<T>,
    drive: &RfDrive,
    seed: Vec3<T>,
    opts: &NullOptions,
) -> Result<NullPoint<T>, PseudoError> {
    let pp = Pseudo::new(basis, *drive)?;
    let to_si = drive.amplitude / UM;
    let mut r = seed;
    let mut s = pp.unit(r)?;
    let seed_norm = s.grad.norm().to_f64_lossy();
    let mut f = s.grad.norm_sq().to_f64_lossy();
    let mut mu = 1e-3;
    let mut iterations = 0;
    while iterations < opts.max_iterations && f > 0.0 {
        iterations += 1;
        let g = s.grad.map(|v| v.to_f64_lossy());
        let h = s.hess.map(|v| v.to_f64_lossy());
        let hn = h.norm().max(1e-300);
        let mut step = None;
        while mu < 1e12 {
            let lam = mu * hn;
            let a = Matrix::from_fn(6, 3, |i, j| if i < 3 { h.m[i][j] } else if i - 3 == j { lam } else { 0.0 });
            let rhs: Vec<f64> = (0..6).map(|i| if i < 3 { -g[i] } else { 0.0 }).collect();
            if let Some(dx) = lstsq(&a, &rhs) {
                let cand = r + Vec3::new(T::of(dx[0]), T::of(dx[1]), T::of(dx[2]));
                if cand.z > T::zero() && cand.dist(seed).to_f64_lossy() <= opts.basin_radius {
                    let cs = pp.unit(cand)?;
                    let cf = cs.grad.norm_sq().to_f64_lossy();
                    if cf < f {
                        step = Some((cand, cs, cf, (dx[0] * dx[0] + dx[1] * dx[1] + dx[2] * dx[2]).sqrt()));
                        break;
                    }
                }
            }
            mu *= 10.0;
        }
        let Some((cand, cs, cf, len)) = step else { break };
        r = cand;
        s = cs;
        f = cf;
        mu = (mu * 0.3).max(1e-12);
        if len < 1e-10 {
            break;
        }
    }
    let resid = f.sqrt();
    let done = |is_null| NullPoint {
        point: r,
        residual: resid * to_si,
        seed_residual: seed_norm * to_si,
        is_null,
        iterations,
    };
    if resid <= opts.rel_tol * seed_norm {
        return Ok(done(true));
    }
    let g = s.grad.map(|v| v.to_f64_lossy());
    let h = s.hess.map(|v| v.to_f64_lossy());
    let stationary = h.mul_vec(g).norm() <= 1e-6 * h.norm() * g.norm();
    if stationary && local_minimum(&pp, r) {
        return Ok(done(false));
    }
    Err(PseudoError::NoConvergence { iterations, residual: resid * to_si })
}

/// Whether |E|² has a local minimum at `r` (positive-definite Hessian).
fn local_minimum<T: Real>(pp: &Pseudo<'_, T>, r: Vec3<T>) -> bool {
    match pp.sample(r) {
        Ok(s) => sym_eigen3(&s.hessian.map(|v| v.to_f64_lossy())).values[0] > 0.0,
        Err(_) => false,
    }
}

/// Secular frequencies and principal axes at a trapping point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Secular {
    /// Hz, ascending.
    pub frequencies: [f64; 3],
    /// Unit eigenvectors matching `frequencies`.
    pub axes: [Vec3<f64>; 3],
    /// Total curvature, J/m².
    pub curvature: Mat3<f64>,
    /// Net force on the ion, N (should be near zero at a minimum).
    pub force: Vec3<f64>,
}

/// Frequencies from a total curvature (J/m²) for a particle of `mass` kg.
pub fn frequencies_from_curvature(curvature: &Mat3<f64>, mass: f64) -> Result<Secular, PseudoError> {
    let sym = (*curvature + curvature.transpose()).scale(0.5);
    let e = sym_eigen3(&sym);
    let scale = e.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for (i, &lam) in e.values.iter().enumerate() {
        if lam < -1e-12 * scale || lam == 0.0 && scale == 0.0 {
            let ax = e.vectors[i];
            return Err(PseudoError::NotAMinimum { eigenvalue: lam, axis: [ax.x, ax.y, ax.z] });
        }
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let f = |lam: f64| (lam.max(0.0) / mass).sqrt() / two_pi;
    Ok(Secular {
        frequencies: [f(e.values[0]), f(e.values[1]), f(e.values[2])],
        axes: e.vectors,
        curvature: sym,
        force: Vec3::zero(),
    })
}

/// Diagonalizes pseudopotential plus static curvature at `r`.
/// `control_voltages` is dense over the basis nets; the rf entry is the rf
/// electrode's dc level.
pub fn secular_frequencies<T: Real>(
    basis: &FieldBasis<T>,
    drive: &RfDrive,
    control_voltages: &[T],
    r: Vec3<T>,
) -> Result<Secular, PseudoError> {
    let pp = Pseudo::new(basis, *drive)?;
    let ps = pp.sample(r)?;
    let st = basis.evaluate(control_voltages, r)?;
    let q = drive.ion.charge;
    let ev_per_um2 = ELEMENTARY_CHARGE / (UM * UM);
    let ev_per_um = ELEMENTARY_CHARGE / UM;
    let curv = ps.hessian.map(|v| v.to_f64_lossy() * ev_per_um2) + st.hessian.map(|v| v.to_f64_lossy() * q);
    let mut out = frequencies_from_curvature(&curv, drive.ion.mass)?;
    // Force = −∇U: pseudopotential gradient plus q E.
    out.force = ps.gradient.map(|v| -v.to_f64_lossy() * ev_per_um) + st.field.map(|v| v.to_f64_lossy() * q);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::ATOMIC_MASS_UNIT;
    use crate::field::NetPolygons;
    use crate::geom::Point;
    use crate::layout::Role;

    fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
        vec![Point::new(x0, y0), Point::new(x1, y0), Point::new(x1, y1), Point::new(x0, y1)]
    }

    /// Long symmetric five-wire rf pair along x.
    fn five_wire(w_l: f64, w_r: f64, a: f64) -> FieldBasis<f64> {
        FieldBasis::from_polygons(vec![NetPolygons {
            name: "rf".into(),
            role: Role::Rf,
            polygons: vec![rect(-3000.0, a, 3000.0, a + w_l), rect(-3000.0, -a - w_r, 3000.0, -a)],
        }])
    }

    #[test]
    fn reference_energy_arithmetic() {
        let d = RfDrive::new(1.0, 90.7e6, Ion::MG24).unwrap();
        // |E| = 1e5 V/m corresponds to a unit gradient of 0.1 / µm at 1 V.
        let phi = d.energy_scale() * 0.1 * 0.1;
        let q = ELEMENTARY_CHARGE;
        let m = 24.0 * ATOMIC_MASS_UNIT;
        let w = 2.0 * std::f64::consts::PI * 90.7e6;
        let direct = q * q * 1e10 / (4.0 * m * w * w) / q;
        assert!((phi - direct).abs() < 1e-15 * direct);
        assert!((phi - 3.09e-2).abs() < 0.01e-2, "{phi}");
    }

    #[test]
    fn drive_parsing() {
        let d: RfDrive = "113V,90.7MHz,Mg24".parse().unwrap();
        assert_eq!(d, RfDrive::reference());
        assert!("113V".parse::<RfDrive>().is_err());
        assert!("-1V,1MHz".parse::<RfDrive>().is_err());
    }

    #[test]
    fn null_on_symmetry_plane() {
        let b = five_wire(50.0, 50.0, 20.0);
        let d = RfDrive::reference();
        let n = find_null(&b, &d, Vec3::new(0.0, 3.0, 30.0), &NullOptions::default()).unwrap();
        assert!(n.is_null);
        assert!(n.point.y.abs() < 1e-6);
        // Bisection oracle on Ez along the symmetry line.
        let ez = |z: f64| b.net(0).sample(Vec3::new(0.0, 0.0, z)).grad.z;
        let (mut lo, mut hi) = (5.0, 200.0);
        assert!(ez(lo).signum() != ez(hi).signum());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if ez(mid).signum() == ez(lo).signum() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((n.point.z - 0.5 * (lo + hi)).abs() < 0.01);
    }

    #[test]
    fn far_seed_fails() {
        let b = five_wire(40.0, 60.0, 22.0);
        let r = find_null(&b, &RfDrive::reference(), Vec3::new(0.0, 0.0, 5000.0), &NullOptions::default());
        assert!(matches!(r, Err(PseudoError::NoConvergence { .. })), "{r:?}");
    }

    #[test]
    fn pseudo_derivatives_match_finite_differences() {
        let b = five_wire(40.0, 60.0, 22.0);
        let pp = Pseudo::new(&b, RfDrive::reference()).unwrap();
        let r = Vec3::new(3.0, 7.0, 33.0);
        let s = pp.sample(r).unwrap();
        let h = 1e-3;
        for k in 0..3 {
            let e = Vec3::unit(k) * h;
            let gp = pp.sample(r + e).unwrap();
            let gm = pp.sample(r - e).unwrap();
            let fd = (gp.energy - gm.energy) / (2.0 * h);
            assert!((fd - s.gradient[k]).abs() < 1e-6 * s.gradient.norm().max(1e-12));
            for i in 0..3 {
                let fdh = (gp.gradient[i] - gm.gradient[i]) / (2.0 * h);
                assert!((fdh - s.hessian.m[i][k]).abs() < 1e-4 * s.hessian.norm(), "{i}{k}");
            }
        }
    }

    #[test]
    fn scalings() {
        let b = five_wire(40.0, 60.0, 22.0);
        let r = Vec3::new(0.0, 10.0, 25.0);
        let base = RfDrive::reference();
        let e0 = pseudopotential(&b, &base, r).unwrap();
        assert!(e0 > 0.0);
        let amp = RfDrive { amplitude: 2.0 * base.amplitude, ..base };
        let omega = RfDrive { omega_rf: 2.0 * base.omega_rf, ..base };
        let mass = RfDrive { ion: Ion { mass: 2.0 * base.ion.mass, ..base.ion }, ..base };
        let rel = |a: f64, b: f64| (a - b).abs() / b;
        assert!(rel(pseudopotential(&b, &amp, r).unwrap(), 4.0 * e0) < 1e-12);
        assert!(rel(pseudopotential(&b, &omega, r).unwrap(), 0.25 * e0) < 1e-12);
        assert!(rel(pseudopotential(&b, &mass, r).unwrap(), 0.5 * e0) < 1e-12);
    }

    #[test]
    fn quadrupole_frequencies_closed_form() {
        let m = 24.0 * ATOMIC_MASS_UNIT;
        let w = [2.0, 3.5, 5.0].map(|f: f64| 2.0 * std::f64::consts::PI * f * 1e6);
        let mut c = Mat3::zero();
        for i in 0..3 {
            c.m[i][i] = m * w[i] * w[i];
        }
        let s = frequencies_from_curvature(&c, m).unwrap();
        for (f, want) in s.frequencies.iter().zip([2e6, 3.5e6, 5e6]) {
            assert!((f - want).abs() < 1e-9 * want);
        }
        c.m[0][0] = -c.m[0][0];
        assert!(matches!(frequencies_from_curvature(&c, m), Err(PseudoError::NotAMinimum { .. })));
    }
}
