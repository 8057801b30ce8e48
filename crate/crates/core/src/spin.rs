//! Electron–nuclear spin Hamiltonian of the phosphorus donor in silicon.
//!
//! The donor is an S = 1/2 electron coupled to an I = 1/2 nucleus through
//! the isotropic hyperfine interaction. With the static field along z the
//! Hamiltonian is block diagonal in the product basis
//! `|↑⇑⟩, |↑⇓⟩, |↓⇑⟩, |↓⇓⟩` and has the closed-form eigenenergies
//! implemented in [`SpinSystemParams::energy_levels`]. The nuclear Zeeman
//! term enters with a positive sign and a positive `g_n`, as written in the
//! original level scheme. This differs from the usual negative ³¹P nuclear
//! g-factor; the closed forms are used verbatim.
//!
//! All energies are in joules, fields in tesla and frequencies in Hz
//! (ordinary, not angular).

use serde::{Deserialize, Serialize};

use crate::constants::{BOHR_MAGNETON, BOLTZMANN, G_E_SI_P, G_N_SI_P, HYPERFINE_SI_P_HZ, NUCLEAR_MAGNETON, PLANCK};
use crate::error::{Error, Result};
use crate::numeric::bisect;

/// Lower edge of the bracket used by [`SpinSystemParams::resonance_field`].
pub const RESONANCE_FIELD_MIN: f64 = 1e-3;
/// Upper edge of the bracket used by [`SpinSystemParams::resonance_field`].
pub const RESONANCE_FIELD_MAX: f64 = 2.0;
/// Frequency tolerance of the resonance-field root finder (Hz).
pub const RESONANCE_FREQ_TOL_HZ: f64 = 1.0;

/// Donor spin parameters. Physical constants live in [`crate::constants`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpinSystemParams {
    /// Electron g-factor.
    pub g_e: f64,
    /// Nuclear g-factor.
    pub g_n: f64,
    /// Hyperfine constant A/h in Hz.
    pub hyperfine_hz: f64,
}

impl Default for SpinSystemParams {
    fn default() -> Self {
        Self { g_e: G_E_SI_P, g_n: G_N_SI_P, hyperfine_hz: HYPERFINE_SI_P_HZ }
    }
}

/// The two allowed ESR transitions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TransitionId {
    /// E1 ↔ E4, resonant at the lower field for a given frequency.
    #[serde(rename = "LF")]
    LowField,
    /// E2 ↔ E3, resonant at the higher field.
    #[serde(rename = "HF")]
    HighField,
}

impl TransitionId {
    pub const ALL: [TransitionId; 2] = [TransitionId::LowField, TransitionId::HighField];

    pub fn label(self) -> &'static str {
        match self {
            TransitionId::LowField => "LF",
            TransitionId::HighField => "HF",
        }
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s.trim() {
            "LF" | "lf" | "low" | "low-field" => Some(TransitionId::LowField),
            "HF" | "hf" | "high" | "high-field" => Some(TransitionId::HighField),
            _ => None,
        }
    }
}

/// Eigenenergies E1..E4 in joules at a given field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLevels {
    pub b_z: f64,
    pub e: [f64; 4],
}

impl EnergyLevels {
    pub fn sum(&self) -> f64 {
        self.e.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.e.iter().fold(0.0_f64, |m, e| m.max(e.abs()))
    }

    /// Levels expressed as frequencies E_i / h (Hz).
    pub fn in_hz(&self) -> [f64; 4] {
        self.e.map(|e| e / PLANCK)
    }
}

/// Thermal-equilibrium populations of the four levels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalState {
    pub temperature: f64,
    pub p: [f64; 4],
    /// Natural log of the partition function Σ exp(-E_i / k_B T). Stored as a
    /// logarithm because Z itself overflows at millikelvin temperatures.
    pub ln_partition: f64,
}

impl ThermalState {
    pub fn partition_function(&self) -> f64 {
        self.ln_partition.exp()
    }
}

impl SpinSystemParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hyperfine_hz > 0.0) || !self.hyperfine_hz.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "hyperfine constant must be positive, got {} Hz",
                self.hyperfine_hz
            )));
        }
        if !(self.g_e > 0.0) || !self.g_e.is_finite() {
            return Err(Error::InvalidParameter(format!("electron g-factor must be positive, got {}", self.g_e)));
        }
        if !self.g_n.is_finite() {
            return Err(Error::InvalidParameter("nuclear g-factor is not finite".into()));
        }
        Ok(())
    }

    /// Hyperfine energy A in joules.
    pub fn hyperfine_energy(&self) -> f64 {
        PLANCK * self.hyperfine_hz
    }

    fn electron_zeeman(&self) -> f64 {
        self.g_e * BOHR_MAGNETON
    }

    fn nuclear_zeeman(&self) -> f64 {
        self.g_n * NUCLEAR_MAGNETON
    }

    /// 4×4 Hamiltonian matrix (J) in the product basis for B = (0, 0, b_z).
    pub fn hamiltonian(&self, b_z: f64) -> [[f64; 4]; 4] {
        let a = self.hyperfine_energy();
        let (ge, gn) = (self.electron_zeeman(), self.nuclear_zeeman());
        let half_b = 0.5 * b_z;
        let mut h = [[0.0; 4]; 4];
        h[0][0] = a / 4.0 + half_b * (ge + gn);
        h[1][1] = -a / 4.0 + half_b * (ge - gn);
        h[2][2] = -a / 4.0 + half_b * (-ge + gn);
        h[3][3] = a / 4.0 - half_b * (ge + gn);
        h[1][2] = a / 2.0;
        h[2][1] = a / 2.0;
        h
    }

    /// Closed-form eigenenergies of [`Self::hamiltonian`].
    pub fn energy_levels(&self, b_z: f64) -> EnergyLevels {
        let a = self.hyperfine_energy();
        let (ge, gn) = (self.electron_zeeman(), self.nuclear_zeeman());
        let sum = ge + gn;
        let diff = ge - gn;
        let root = 0.5 * (a * a + b_z * b_z * diff * diff).sqrt();
        EnergyLevels {
            b_z,
            e: [a / 4.0 + 0.5 * b_z * sum, -a / 4.0 + root, a / 4.0 - 0.5 * b_z * sum, -a / 4.0 - root],
        }
    }

    /// Transition frequency in Hz: (E1 − E4)/h for LF, (E2 − E3)/h for HF.
    ///
    /// The differences are formed analytically rather than by subtracting
    /// the level energies, which keeps full relative precision near zero field.
    pub fn transition_frequency(&self, b_z: f64, transition: TransitionId) -> f64 {
        let a = self.hyperfine_energy();
        let (ge, gn) = (self.electron_zeeman(), self.nuclear_zeeman());
        let root = 0.5 * (a * a + b_z * b_z * (ge - gn) * (ge - gn)).sqrt();
        let zeeman = 0.5 * b_z * (ge + gn);
        let energy = match transition {
            TransitionId::LowField => a / 2.0 + zeeman + root,
            TransitionId::HighField => -a / 2.0 + zeeman + root,
        };
        energy / PLANCK
    }

    /// dν/dB of [`Self::transition_frequency`] in Hz/T.
    pub fn transition_frequency_slope(&self, b_z: f64, _transition: TransitionId) -> f64 {
        let a = self.hyperfine_energy();
        let (ge, gn) = (self.electron_zeeman(), self.nuclear_zeeman());
        let diff2 = (ge - gn) * (ge - gn);
        let root = (a * a + b_z * b_z * diff2).sqrt();
        (0.5 * (ge + gn) + 0.5 * b_z * diff2 / root) / PLANCK
    }

    /// Field at which `transition` is resonant with `frequency_hz`, found by
    /// bisection on `[1 mT, 2 T]` to a 1 Hz frequency residual.
    pub fn resonance_field(&self, frequency_hz: f64, transition: TransitionId) -> Result<f64> {
        let lo = self.transition_frequency(RESONANCE_FIELD_MIN, transition);
        let hi = self.transition_frequency(RESONANCE_FIELD_MAX, transition);
        if !(frequency_hz >= lo && frequency_hz <= hi) {
            return Err(Error::NoRoot { frequency_hz, b_min: RESONANCE_FIELD_MIN, b_max: RESONANCE_FIELD_MAX });
        }
        Ok(bisect(
            |b| self.transition_frequency(b, transition),
            frequency_hz,
            RESONANCE_FIELD_MIN,
            RESONANCE_FIELD_MAX,
            RESONANCE_FREQ_TOL_HZ,
        ))
    }

    /// Boltzmann populations. Energies are shifted by min(E_i) before
    /// exponentiation.
    pub fn thermal_state(&self, b_z: f64, temperature: f64) -> Result<ThermalState> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::InvalidTemperature(temperature));
        }
        let levels = self.energy_levels(b_z);
        let kt = BOLTZMANN * temperature;
        let e_min = levels.e.iter().copied().fold(f64::INFINITY, f64::min);
        let weights = levels.e.map(|e| (-(e - e_min) / kt).exp());
        let z_shifted: f64 = weights.iter().sum();
        Ok(ThermalState { temperature, p: weights.map(|w| w / z_shifted), ln_partition: z_shifted.ln() - e_min / kt })
    }

    /// Thermal polarization |p1 − p4| (LF) or |p2 − p3| (HF).
    pub fn polarization(&self, b_z: f64, temperature: f64, transition: TransitionId) -> Result<f64> {
        let state = self.thermal_state(b_z, temperature)?;
        let p = state.p;
        Ok(match transition {
            TransitionId::LowField => (p[0] - p[3]).abs(),
            TransitionId::HighField => (p[1] - p[2]).abs(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> SpinSystemParams {
        SpinSystemParams::default()
    }

    #[test]
    fn zero_field_hamiltonian_structure() {
        let p = params();
        let a = p.hyperfine_energy();
        let h = p.hamiltonian(0.0);
        assert_eq!(h[0][0], a / 4.0);
        assert_eq!(h[1][1], -a / 4.0);
        assert_eq!(h[2][2], -a / 4.0);
        assert_eq!(h[3][3], a / 4.0);
        assert_eq!(h[1][2], a / 2.0);
        assert_eq!(h[2][1], a / 2.0);
        assert_eq!(h[0][1] + h[0][2] + h[0][3] + h[1][3] + h[2][3], 0.0);
    }

    #[test]
    fn hamiltonian_is_traceless() {
        let p = params();
        for b in [0.0, 0.01, 0.1765, 0.7, 3.0] {
            let h = p.hamiltonian(b);
            let trace = h[0][0] + h[1][1] + h[2][2] + h[3][3];
            assert!(trace.abs() <= 1e-15 * p.hyperfine_energy().max(b * 2e-23));
        }
    }

    #[test]
    fn zero_field_triplet_and_singlet() {
        let p = params();
        let a = p.hyperfine_energy();
        let lv = p.energy_levels(0.0);
        assert_relative_eq!(lv.e[0], a / 4.0, max_relative = 1e-15);
        assert_relative_eq!(lv.e[1], a / 4.0, max_relative = 1e-15);
        assert_relative_eq!(lv.e[2], a / 4.0, max_relative = 1e-15);
        assert_relative_eq!(lv.e[3], -3.0 * a / 4.0, max_relative = 1e-15);
        assert_relative_eq!(lv.e[0] - lv.e[3], a, max_relative = 1e-15);
    }

    #[test]
    fn high_field_breit_rabi_asymptote() {
        let p = params();
        let b = 50.0;
        let lv = p.energy_levels(b);
        let slope = b * (p.g_e * BOHR_MAGNETON + p.g_n * NUCLEAR_MAGNETON);
        assert_relative_eq!(lv.e[0] - lv.e[2], slope, max_relative = 1e-12);
    }

    #[test]
    fn level_ordering_at_experimental_field() {
        let lv = params().energy_levels(0.1765);
        assert!(lv.e[0] > lv.e[1] && lv.e[1] > lv.e[2] && lv.e[2] > lv.e[3]);
    }

    #[test]
    fn transition_frequencies_at_zero_field() {
        let p = params();
        assert_relative_eq!(p.transition_frequency(0.0, TransitionId::LowField), p.hyperfine_hz, max_relative = 1e-14);
        // E2 and E3 are both members of the zero-field triplet
        assert!(p.transition_frequency(0.0, TransitionId::HighField).abs() < 1e-6);
    }

    #[test]
    fn transition_frequency_matches_level_differences() {
        let p = params();
        let b = 0.1765;
        let lv = p.energy_levels(b).in_hz();
        assert_relative_eq!(p.transition_frequency(b, TransitionId::LowField), lv[0] - lv[3], max_relative = 1e-12);
        assert_relative_eq!(p.transition_frequency(b, TransitionId::HighField), lv[1] - lv[2], max_relative = 1e-12);
        // both ≈ 4.93 GHz, split by ≈ A/h to first order
        let split =
            p.transition_frequency(b, TransitionId::LowField) - p.transition_frequency(b, TransitionId::HighField);
        assert!((split - p.hyperfine_hz).abs() < 1e6);
    }

    #[test]
    fn resonance_field_below_zero_field_splitting_has_no_root() {
        let p = params();
        let err = p.resonance_field(50e6, TransitionId::LowField).unwrap_err();
        assert!(matches!(err, Error::NoRoot { .. }));
        assert!(p.resonance_field(50e6, TransitionId::HighField).is_ok());
    }

    #[test]
    fn slope_matches_central_difference() {
        let p = params();
        for t in TransitionId::ALL {
            for b in [0.0, 1e-3, 0.1765, 1.0] {
                let h = 1e-6;
                let fd = (p.transition_frequency(b + h, t) - p.transition_frequency(b - h, t)) / (2.0 * h);
                assert_relative_eq!(p.transition_frequency_slope(b, t), fd, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn resonance_fields_at_resonator_frequency() {
        let p = params();
        let lf = p.resonance_field(4.931e9, TransitionId::LowField).unwrap();
        let hf = p.resonance_field(4.931e9, TransitionId::HighField).unwrap();
        assert!((lf - 174.27e-3).abs() < 0.15e-3, "LF {lf}");
        assert!((hf - 178.46e-3).abs() < 0.15e-3, "HF {hf}");
        assert!(((hf - lf) - 4.19e-3).abs() < 0.05e-3);
        let first_order = p.hyperfine_energy() / (p.g_e * BOHR_MAGNETON);
        assert!(((hf - lf) / first_order - 1.0).abs() < 0.01);
        for (b, t) in [(lf, TransitionId::LowField), (hf, TransitionId::HighField)] {
            assert!((p.transition_frequency(b, t) - 4.931e9).abs() < 1.0);
        }
    }

    #[test]
    fn invalid_temperature_rejected() {
        let p = params();
        assert_eq!(p.thermal_state(0.1765, 0.0).unwrap_err(), Error::InvalidTemperature(0.0));
        assert!(p.polarization(0.1765, -1.0, TransitionId::LowField).is_err());
    }

    #[test]
    fn infinite_temperature_limit() {
        // at 10⁶ K the residual deviation is E_i/(4 k_B T) ≈ 3e-8, so the
        // populations are compared with the first-order expansion instead
        let t = 1e6;
        let p = params();
        let s = p.thermal_state(0.1765, t).unwrap();
        let lv = p.energy_levels(0.1765);
        for (pi, e) in s.p.iter().zip(lv.e) {
            assert!((pi - 0.25).abs() < 1e-7);
            let first_order = 0.25 * (1.0 - e / (BOLTZMANN * t));
            assert!((pi - first_order).abs() < 1e-13);
        }
    }

    #[test]
    fn millikelvin_populations_do_not_overflow() {
        let s = params().thermal_state(0.1765, 1e-3).unwrap();
        assert!(s.p.iter().all(|p| p.is_finite()));
        assert!(s.ln_partition.is_finite());
        assert!((s.p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
