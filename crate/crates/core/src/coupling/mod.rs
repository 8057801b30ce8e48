//! Collective coupling of the spin ensemble to the resonator mode.

pub mod estimators;
pub mod field;
pub mod geometry;

pub use estimators::*;
pub use field::{b1_cross_section, vacuum_magnetic_energy, CpwCurrentModel, CurrentProfile, FieldMap, GridSpec};
pub use geometry::{CpwGeometry, CrystalStack, OrientationMask};
