//! Physical constants (CODATA 2018, SI units).
//!
//! Every numeric routine in the crate reads its constants from here so that
//! regression numbers are reproducible to the last digit.

use std::f64::consts::PI;

/// Planck constant h (J s), exact.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant ħ = h / 2π (J s).
pub const HBAR: f64 = PLANCK / (2.0 * PI);
/// Boltzmann constant k_B (J/K), exact.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Bohr magneton μ_B (J/T).
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
/// Nuclear magneton μ_N (J/T).
pub const NUCLEAR_MAGNETON: f64 = 5.050_783_746_1e-27;
/// Vacuum permeability μ₀ (N/A²).
pub const MU0: f64 = 1.256_637_062_12e-6;

/// Electron g-factor of the phosphorus donor in silicon.
pub const G_E_SI_P: f64 = 1.9985;
/// Nuclear g-factor of ³¹P as used in the donor Hamiltonian.
pub const G_N_SI_P: f64 = 2.2632;
/// Isotropic hyperfine constant A/h of Si:P (Hz).
pub const HYPERFINE_SI_P_HZ: f64 = 117.53e6;

/// Gyromagnetic ratio g μ_B / h in Hz/T (ordinary frequency per tesla).
pub fn gyromagnetic_hz_per_tesla(g_factor: f64) -> f64 {
    g_factor * BOHR_MAGNETON / PLANCK
}
