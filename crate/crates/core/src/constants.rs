//! Physical constants (CODATA 2018) and unit conversions.

/// Elementary charge, C (exact).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Atomic mass constant, kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// Metres per micrometre.
pub const UM: f64 = 1e-6;

/// Ion species: mass and charge.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Ion {
    /// kg
    pub mass: f64,
    /// C
    pub charge: f64,
}

impl Ion {
    /// ²⁴Mg⁺, taken as 24 u with charge +e.
    pub const MG24: Ion = Ion { mass: 24.0 * ATOMIC_MASS_UNIT, charge: ELEMENTARY_CHARGE };

    pub fn from_mass_u(mass_u: f64, charge_e: f64) -> Self {
        Self { mass: mass_u * ATOMIC_MASS_UNIT, charge: charge_e * ELEMENTARY_CHARGE }
    }

    /// Parses species names such as `Mg24`, `Be9`, `Ca40` (singly charged,
    /// mass taken as the nucleon number in u).
    pub fn parse(name: &str) -> Option<Self> {
        let split = name.find(|c: char| c.is_ascii_digit())?;
        let (sym, num) = name.split_at(split);
        if sym.is_empty() || !sym.chars().all(|c| c.is_ascii_alphabetic()) {
            return None;
        }
        let a: u32 = num.trim_end_matches('+').parse().ok()?;
        (a > 0).then(|| Self::from_mass_u(f64::from(a), 1.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn species_parsing() {
        assert_eq!(Ion::parse("Mg24"), Some(Ion::MG24));
        assert_eq!(Ion::parse("Be9+").unwrap().mass, 9.0 * ATOMIC_MASS_UNIT);
        assert!(Ion::parse("24").is_none());
        assert!(Ion::parse("Mg").is_none());
        assert!(Ion::parse("Mg0").is_none());
    }
}
