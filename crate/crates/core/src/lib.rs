//! Surface-electrode ion trap design toolkit.
//!
//! * [`layout`]: electrode polygons, component library, port-based assembly
//!   and the layout document format.
//! * [`field`]: gapless-plane electrostatics with analytic derivatives.
//! * [`pseudo`]: rf pseudopotential, null tubes, secular frequencies.
//! * [`optim`]: Nelder-Mead and SVD null spaces.
//! * [`junction`]: Y-junction rail shape optimization.
//! * [`waveform`]: null-space transport waveforms and smoothing.
//! * [`analysis`]: heating-rate conversions and layout reports.
//!
//! Geometry is in µm and voltages in V; SI conversions happen inside the
//! physics formulas. The numeric core is generic over [`Real`] (`f32` or
//! `f64`); the aliases below fix it to one precision.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod constants;
pub mod field;
pub mod geom;
pub mod junction;
pub mod layout;
pub mod linalg;
pub mod optim;
pub mod pseudo;
pub mod scalar;
pub mod waveform;

pub use constants::Ion;
pub use field::{FieldBasis, FieldError, FieldSample, GapPolicy};
pub use layout::{Component, Electrode, LayoutError, Port, PortRef, Role, TrapLayout};
pub use pseudo::{PseudoError, RfDrive, TubePath};
pub use waveform::{Waveform, WaveformError, WellSpec};
pub use scalar::Real;

pub type FieldBasis64 = field::FieldBasis<f64>;
pub type FieldBasis32 = field::FieldBasis<f32>;
pub type FieldSample64 = field::FieldSample<f64>;
pub type TubePath64 = pseudo::TubePath<f64>;
pub type TubePath32 = pseudo::TubePath<f32>;
pub type Vec3d = linalg::Vec3<f64>;
pub type Mat3d = linalg::Mat3<f64>;
pub type SimplexConfig64 = optim::SimplexConfig<f64>;
pub type Waveform64 = waveform::Waveform<f64>;
