//! Heating-rate / field-noise conversions and layout summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::constants::{Ion, HBAR};
use crate::geom;
use crate::layout::{Role, TrapLayout};

/// A measured heating rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatingMeasurement {
    /// Phonons per second.
    pub n_dot: f64,
    /// One-sigma uncertainty of `n_dot`.
    pub n_dot_err: f64,
    /// Axial frequency, Hz.
    pub axial_freq: f64,
    /// Ion-to-surface distance, µm (informational).
    pub ion_surface_distance: f64,
    pub ion: Ion,
}

/// A value with a one-sigma uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Uncertain {
    pub value: f64,
    pub sigma: f64,
}

impl Uncertain {
    /// Concise notation such as `1.3(2)e-9`, rounding the uncertainty to one
    /// significant digit.
    pub fn concise(&self) -> String {
        if !(self.value.is_finite()) || self.value == 0.0 {
            return format!("{}({})", self.value, self.sigma);
        }
        let exp = self.value.abs().log10().floor() as i32;
        let mantissa = self.value / 10f64.powi(exp);
        if self.sigma <= 0.0 {
            return format!("{mantissa}e{exp}");
        }
        let sig_exp = self.sigma.log10().floor() as i32;
        let decimals = (exp - sig_exp).max(0) as usize;
        let unit = 10f64.powi(exp - decimals as i32);
        let digit = (self.sigma / unit).round() as i64;
        format!("{mantissa:.decimals$}({digit})e{exp}")
    }
}

/// S_E = ṅ · 4 m ħ ω / q², in V² m⁻² Hz⁻¹.
pub fn heating_to_noise(meas: &HeatingMeasurement) -> Uncertain {
    let k = noise_per_phonon_rate(meas.axial_freq, &meas.ion);
    Uncertain { value: meas.n_dot * k, sigma: meas.n_dot_err.abs() * k }
}

/// ṅ = S_E q² / (4 m ħ ω), in phonons per second.
pub fn noise_to_heating(s_e: f64, axial_freq: f64, ion: &Ion) -> f64 {
    s_e / noise_per_phonon_rate(axial_freq, ion)
}

fn noise_per_phonon_rate(axial_freq: f64, ion: &Ion) -> f64 {
    let omega = 2.0 * std::f64::consts::PI * axial_freq;
    4.0 * ion.mass * HBAR * omega / (ion.charge * ion.charge)
}

/// Summary of a layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutReport {
    pub components: usize,
    pub components_by_kind: BTreeMap<String, usize>,
    pub electrodes: usize,
    pub nets: usize,
    pub control_nets: usize,
    pub rf_electrodes: usize,
    /// µm²
    pub rf_area: f64,
    /// µm²
    pub total_area: f64,
    /// Bounding box `[xmin, ymin, xmax, ymax]`, µm.
    pub extent: [f64; 4],
    pub open_ports: Vec<String>,
    pub connections: usize,
}

pub fn report(layout: &TrapLayout) -> LayoutReport {
    let mut kinds = BTreeMap::new();
    for c in layout.components() {
        let k = if c.component.kind.is_empty() { c.component.name.clone() } else { c.component.kind.clone() };
        *kinds.entry(k).or_insert(0) += 1;
    }
    let rf: Vec<_> = layout.electrodes().iter().filter(|e| e.role == Role::Rf).collect();
    let (mut lo, mut hi) = (geom::Point::new(f64::INFINITY, f64::INFINITY), geom::Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for e in layout.electrodes() {
        let (a, b) = geom::bbox(&e.polygon);
        lo = geom::Point::new(lo.x.min(a.x), lo.y.min(a.y));
        hi = geom::Point::new(hi.x.max(b.x), hi.y.max(b.y));
    }
    LayoutReport {
        components: layout.components().len(),
        components_by_kind: kinds,
        electrodes: layout.electrodes().len(),
        nets: layout.nets().len(),
        control_nets: layout.nets().values().filter(|r| **r == Role::Control).count(),
        rf_electrodes: rf.len(),
        rf_area: rf.iter().map(|e| e.area()).sum(),
        total_area: layout.total_area(),
        extent: [lo.x, lo.y, hi.x, hi.y],
        open_ports: layout.open_ports().iter().map(|(r, _)| r.to_string()).collect(),
        connections: layout.connections().len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{ATOMIC_MASS_UNIT, ELEMENTARY_CHARGE};

    fn first_trap() -> HeatingMeasurement {
        HeatingMeasurement { n_dot: 87e3, n_dot_err: 11e3, axial_freq: 3.5e6, ion_surface_distance: 38.0, ion: Ion::MG24 }
    }

    #[test]
    fn first_trap_noise() {
        let s = heating_to_noise(&first_trap());
        // Independent arithmetic: 4 m ħ ω / e².
        let m = 24.0 * ATOMIC_MASS_UNIT;
        let w = 2.0 * std::f64::consts::PI * 3.5e6;
        let k = 4.0 * m * 1.054_571_817e-34 * w / (ELEMENTARY_CHARGE * ELEMENTARY_CHARGE);
        assert!((s.value - 87e3 * k).abs() < 1e-12 * s.value);
        assert_eq!(s.concise(), "1.3(2)e-9");
    }

    #[test]
    fn zero_rate() {
        let m = HeatingMeasurement { n_dot: 0.0, n_dot_err: 0.0, ..first_trap() };
        assert_eq!(heating_to_noise(&m).value, 0.0);
    }

    #[test]
    fn round_trip_and_scaling() {
        let m = first_trap();
        let s = heating_to_noise(&m).value;
        let back = noise_to_heating(s, m.axial_freq, &m.ion);
        assert!((back - m.n_dot).abs() < 1e-12 * m.n_dot);
        let n1 = noise_to_heating(6e-11, 4.5e6, &Ion::MG24);
        let n2 = noise_to_heating(6e-11, 9.0e6, &Ion::MG24);
        assert!((n1 - 2.0 * n2).abs() < 1e-12 * n1);
        let doubled = HeatingMeasurement { axial_freq: 7e6, ..m };
        assert!((heating_to_noise(&doubled).value - 2.0 * s).abs() < 1e-12 * s);
    }

    #[test]
    fn concise_notation() {
        assert_eq!(Uncertain { value: 1.2345e-3, sigma: 2.1e-5 }.concise(), "1.23(2)e-3");
        assert_eq!(Uncertain { value: 5.0, sigma: 0.0 }.concise(), "5e0");
    }
}
