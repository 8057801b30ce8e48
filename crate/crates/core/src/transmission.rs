//! Input-output model of the resonator transmission |S21|².
//!
//! All rates (κ₀, κ_c, γ, g_eff) and the probe frequency are ordinary
//! frequencies in Hz, i.e. the κ/2π values usually quoted. The model is
//!
//! ```text
//! S21 = κ_c / ( i(ω − ω_r) − κ₀ + Σ_n g_n² / ( i(ω − ω_r − δ_n(B₀)) − γ_n ) )
//! ```
//!
//! with the spin detuning δ_n = g_n μ_B (B₀ − B_n) / h. At ω = ω_r the spin
//! term reduces to g_n² / (−iδ_n − γ_n), whose modulus is that of the
//! field-only form; the explicit probe-frequency dependence of the spin
//! denominator is what produces the normal-mode doublet.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{gyromagnetic_hz_per_tesla, BOHR_MAGNETON, PLANCK};
use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, golden_section_max, linspace};
use crate::spin::{SpinSystemParams, TransitionId};

/// Number of grid points used by [`normal_mode_peaks`].
pub const PEAK_GRID_POINTS: usize = 2001;
/// Half-width of the peak search window in units of max(g, κ₀, γ).
pub const PEAK_WINDOW_WIDTHS: f64 = 6.0;
/// Golden-section refinement tolerance (Hz).
pub const PEAK_TOL_HZ: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonatorParams {
    /// Resonance frequency ω_r/2π (Hz).
    pub freq_hz: f64,
    /// Total HWHM loss rate κ₀/2π (Hz).
    pub kappa0_hz: f64,
    /// External coupling rate κ_c/2π (Hz).
    pub kappa_c_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QFactors {
    pub loaded: f64,
    pub external: f64,
    pub internal: f64,
}

impl ResonatorParams {
    /// Builds the rates from external and internal quality factors.
    pub fn from_q_factors(freq_hz: f64, q_ext: f64, q_int: f64) -> Self {
        let kappa_c_hz = freq_hz / (2.0 * q_ext);
        let kappa_int = freq_hz / (2.0 * q_int);
        Self { freq_hz, kappa0_hz: kappa_c_hz + kappa_int, kappa_c_hz }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.freq_hz > 0.0) {
            return Err(Error::InvalidParameter(format!("resonance frequency must be positive, got {}", self.freq_hz)));
        }
        if !(self.kappa0_hz > 0.0) {
            return Err(Error::DegenerateLinewidth(format!("kappa0 must be positive, got {}", self.kappa0_hz)));
        }
        if !(self.kappa_c_hz > 0.0 && self.kappa_c_hz <= self.kappa0_hz) {
            return Err(Error::InvalidParameter(format!(
                "kappa_c must satisfy 0 < kappa_c <= kappa0, got {} (kappa0 = {})",
                self.kappa_c_hz, self.kappa0_hz
            )));
        }
        Ok(())
    }

    pub fn kappa_int_hz(&self) -> f64 {
        self.kappa0_hz - self.kappa_c_hz
    }

    /// Loaded, external and internal quality factors. A vanishing internal
    /// loss rate (κ_c = κ₀) has no finite Q_int and is reported as an error.
    pub fn q_factors(&self) -> Result<QFactors> {
        self.validate()?;
        if self.kappa_int_hz() <= 0.0 {
            return Err(Error::DegenerateLinewidth(
                "kappa_c equals kappa0: internal quality factor is infinite (overcoupled limit)".into(),
            ));
        }
        Ok(QFactors {
            loaded: self.freq_hz / (2.0 * self.kappa0_hz),
            external: self.freq_hz / (2.0 * self.kappa_c_hz),
            internal: self.freq_hz / (2.0 * self.kappa_int_hz()),
        })
    }
}

/// Resonator frequency of the first harmonic (Hz).
pub const REFERENCE_FREQ_HZ: f64 = 4.931e9;
/// Total loss rate κ₀/2π of the reference resonator (Hz).
pub const REFERENCE_KAPPA0_HZ: f64 = 0.37e6;
/// External quality factor of the reference resonator.
pub const REFERENCE_Q_EXT: f64 = 9793.0;

impl ResonatorParams {
    /// 4.931 GHz, κ₀/2π = 370 kHz and κ_c from Q_ext = 9793.
    pub fn reference() -> Self {
        Self {
            freq_hz: REFERENCE_FREQ_HZ,
            kappa0_hz: REFERENCE_KAPPA0_HZ,
            kappa_c_hz: REFERENCE_FREQ_HZ / (2.0 * REFERENCE_Q_EXT),
        }
    }
}

impl TransmissionModelParams {
    /// The two hyperfine lines of the donor ensemble at 50 mK: LF with
    /// γ/2π = 1.38 MHz and g/2π = 1.13 MHz, HF with γ/2π = 1.40 MHz and
    /// g/2π = 1.07 MHz. Resonance fields are solved from `spin` at the
    /// resonator frequency; detuning is linear in the electron g-factor.
    pub fn donor_scenario(spin: &SpinSystemParams, resonator: ResonatorParams) -> Result<Self> {
        let lines = [(TransitionId::LowField, 1.38e6, 1.13e6), (TransitionId::HighField, 1.40e6, 1.07e6)];
        let resonances = lines
            .iter()
            .map(|&(t, gamma, g)| {
                Ok(SpinResonance::new(spin.resonance_field(resonator.freq_hz, t)?, gamma, g, spin.g_e))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::with_resonances(resonator, resonances))
    }

    /// Appends the two weak defect lines (dangling bonds at 175.5 mT,
    /// dimers at 176.3 mT) as phenomenological resonances.
    pub fn with_defect_lines(mut self) -> Self {
        self.resonances.extend(defect_resonances());
        self
    }
}

/// Phenomenological dangling-bond and dimer resonances.
pub fn defect_resonances() -> [SpinResonance; 2] {
    [SpinResonance::new(0.1755, 5.0e6, 0.5e6, 2.0055), SpinResonance::new(0.1763, 2.0e6, 0.4e6, 1.9985)]
}

/// Harmonic combination 1/Q_loaded = 1/Q_ext + 1/Q_int.
pub fn loaded_q(q_ext: f64, q_int: f64) -> f64 {
    1.0 / (1.0 / q_ext + 1.0 / q_int)
}

/// How the field offset B₀ − B_n is turned into a spin frequency detuning.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum Detuning {
    /// δ = g μ_B (B₀ − B_n) / h.
    #[default]
    Linear,
    /// δ = ν_t(B₀) − ν_t(B_n) from the Breit–Rabi transition frequency.
    /// Agrees with `Linear` to first order in the field offset.
    BreitRabi { spin: SpinSystemParams, transition: TransitionId },
}

/// One ensemble resonance coupled to the cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinResonance {
    /// Resonance field B_n (T).
    pub b_res: f64,
    /// Ensemble HWHM loss rate γ/2π (Hz).
    pub gamma_hz: f64,
    /// Collective coupling g_eff/2π (Hz).
    pub g_eff_hz: f64,
    /// g-factor used to convert field offsets into frequency.
    pub g_factor: f64,
    #[serde(default)]
    pub detuning: Detuning,
}

impl SpinResonance {
    pub fn new(b_res: f64, gamma_hz: f64, g_eff_hz: f64, g_factor: f64) -> Self {
        Self { b_res, gamma_hz, g_eff_hz, g_factor, detuning: Detuning::Linear }
    }

    /// Spin frequency offset from the cavity (Hz) at static field `b0`.
    pub fn detuning_hz(&self, b0: f64) -> f64 {
        match self.detuning {
            Detuning::Linear => gyromagnetic_hz_per_tesla(self.g_factor) * (b0 - self.b_res),
            Detuning::BreitRabi { spin, transition } => {
                spin.transition_frequency(b0, transition) - spin.transition_frequency(self.b_res, transition)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionModelParams {
    pub resonator: ResonatorParams,
    pub resonances: Vec<SpinResonance>,
    pub amplitude_scale: f64,
    pub background_offset: f64,
}

impl TransmissionModelParams {
    pub fn bare(resonator: ResonatorParams) -> Self {
        Self { resonator, resonances: Vec::new(), amplitude_scale: 1.0, background_offset: 0.0 }
    }

    pub fn with_resonances(resonator: ResonatorParams, resonances: Vec<SpinResonance>) -> Self {
        Self { resonances, ..Self::bare(resonator) }
    }

    pub fn validate(&self) -> Result<()> {
        self.resonator.validate()?;
        if !(self.amplitude_scale > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "amplitude scale must be positive, got {}",
                self.amplitude_scale
            )));
        }
        if !(self.background_offset >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "background offset must be non-negative, got {}",
                self.background_offset
            )));
        }
        for (i, r) in self.resonances.iter().enumerate() {
            if !(r.gamma_hz > 0.0) {
                return Err(Error::DegenerateLinewidth(format!("resonance {i} has gamma = {}", r.gamma_hz)));
            }
            if !(r.g_eff_hz >= 0.0) {
                return Err(Error::InvalidParameter(format!("resonance {i} has negative coupling {}", r.g_eff_hz)));
            }
        }
        Ok(())
    }

    /// Complex denominator and the individual spin denominators.
    pub(crate) fn denominator(&self, freq_hz: f64, b0: f64) -> (Complex64, Vec<Complex64>) {
        let cavity_detuning = freq_hz - self.resonator.freq_hz;
        let spin_denoms: Vec<Complex64> =
            self.resonances.iter().map(|r| Complex64::new(-r.gamma_hz, cavity_detuning - r.detuning_hz(b0))).collect();
        let mut terms: Vec<Complex64> =
            self.resonances.iter().zip(&spin_denoms).map(|(r, d)| r.g_eff_hz * r.g_eff_hz / d).collect();
        // order-independent summation: sort the terms before summing
        terms.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let spin_sum =
            Complex64::new(compensated_sum(terms.iter().map(|t| t.re)), compensated_sum(terms.iter().map(|t| t.im)));
        (Complex64::new(-self.resonator.kappa0_hz, cavity_detuning) + spin_sum, spin_denoms)
    }

    /// Complex transmission amplitude S21 (without scale and offset).
    pub fn s21(&self, freq_hz: f64, b0: f64) -> Result<Complex64> {
        self.validate()?;
        Ok(self.s21_unchecked(freq_hz, b0))
    }

    pub(crate) fn s21_unchecked(&self, freq_hz: f64, b0: f64) -> Complex64 {
        let (d, _) = self.denominator(freq_hz, b0);
        Complex64::new(self.resonator.kappa_c_hz, 0.0) / d
    }
}

/// Transmitted power amplitude_scale·|S21|² + background_offset.
pub fn s21_power(p: &TransmissionModelParams, freq_hz: f64, b0: f64) -> Result<f64> {
    p.validate()?;
    Ok(s21_power_unchecked(p, freq_hz, b0))
}

pub(crate) fn s21_power_unchecked(p: &TransmissionModelParams, freq_hz: f64, b0: f64) -> f64 {
    p.amplitude_scale * p.s21_unchecked(freq_hz, b0).norm_sqr() + p.background_offset
}

/// |S21|² on a (B₀, ω) grid, one row per field value. Rows are evaluated in
/// parallel and collected in input order.
pub fn transmission_map(p: &TransmissionModelParams, b_grid: &[f64], freq_grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    p.validate()?;
    Ok(b_grid.par_iter().map(|&b| freq_grid.iter().map(|&f| s21_power_unchecked(p, f, b)).collect()).collect())
}

/// Lorentzian amplitude·hwhm²/((ω − center)² + hwhm²) + offset.
pub fn lorentzian(freq_hz: f64, center: f64, hwhm: f64, amplitude: f64, offset: f64) -> Result<f64> {
    if !(hwhm > 0.0) {
        return Err(Error::DegenerateLinewidth(format!("hwhm must be positive, got {hwhm}")));
    }
    let d = freq_hz - center;
    Ok(amplitude * hwhm * hwhm / (d * d + hwhm * hwhm) + offset)
}

/// Local maxima of |S21|²(ω) at fixed field, sorted by frequency.
///
/// The search grid spans ω_r ± 6·max(g, κ₀, γ) with 2001 points; each grid
/// maximum is refined by golden-section search to 1 Hz.
pub fn normal_mode_peaks(p: &TransmissionModelParams, b0: f64) -> Result<Vec<f64>> {
    p.validate()?;
    let width = p.resonances.iter().flat_map(|r| [r.g_eff_hz, r.gamma_hz]).fold(p.resonator.kappa0_hz, f64::max);
    let center = p.resonator.freq_hz;
    let grid = linspace(center - PEAK_WINDOW_WIDTHS * width, center + PEAK_WINDOW_WIDTHS * width, PEAK_GRID_POINTS);
    let values: Vec<f64> = grid.iter().map(|&f| s21_power_unchecked(p, f, b0)).collect();
    let mut peaks = Vec::new();
    for i in 1..grid.len() - 1 {
        if values[i] > values[i - 1] && values[i] >= values[i + 1] {
            let f = golden_section_max(|f| s21_power_unchecked(p, f, b0), grid[i - 1], grid[i + 1], PEAK_TOL_HZ);
            peaks.push(f);
        }
    }
    peaks.sort_by(f64::total_cmp);
    Ok(peaks)
}

/// Cooperativity C = g²/(κ₀ γ).
pub fn cooperativity(g_eff_hz: f64, kappa0_hz: f64, gamma_hz: f64) -> Result<f64> {
    if !(kappa0_hz > 0.0) || !(gamma_hz > 0.0) {
        return Err(Error::DegenerateLinewidth(format!(
            "cooperativity needs positive kappa0 and gamma, got {kappa0_hz} and {gamma_hz}"
        )));
    }
    Ok(g_eff_hz * g_eff_hz / (kappa0_hz * gamma_hz))
}

/// Spin HWHM loss rate γ/2π (Hz) from a FWHM field linewidth:
/// γ/2π = g μ_B ΔB / (2h).
pub fn linewidth_to_gamma(delta_b_fwhm: f64, g_factor: f64) -> f64 {
    g_factor * BOHR_MAGNETON * delta_b_fwhm / (2.0 * PLANCK)
}

/// Inverse of [`linewidth_to_gamma`].
pub fn gamma_to_linewidth(gamma_hz: f64, g_factor: f64) -> f64 {
    2.0 * PLANCK * gamma_hz / (g_factor * BOHR_MAGNETON)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const F_R: f64 = 4.931e9;

    fn reference_resonator() -> ResonatorParams {
        ResonatorParams { freq_hz: F_R, kappa0_hz: 370e3, kappa_c_hz: F_R / (2.0 * 9793.0) }
    }

    #[test]
    fn bare_on_resonance_power() {
        let p = TransmissionModelParams::bare(reference_resonator());
        let v = s21_power(&p, F_R, 0.17).unwrap();
        let expected = (reference_resonator().kappa_c_hz / 370e3).powi(2);
        assert_relative_eq!(v, expected, max_relative = 1e-14);
        assert!((v - 0.463).abs() < 1e-3);
    }

    #[test]
    fn far_detuned_spins_leave_bare_lorentzian() {
        let res = SpinResonance::new(0.17416, 1.38e6, 1.13e6, 1.9985);
        let p = TransmissionModelParams::with_resonances(reference_resonator(), vec![res]);
        let b0 = 0.17416 + 0.05;
        for k in 1..50 {
            let d = k as f64 * 20e3;
            let up = s21_power(&p, F_R + d, b0).unwrap();
            let down = s21_power(&p, F_R - d, b0).unwrap();
            // the residual spin term shifts the line by g²/δ ≈ 1 kHz
            assert!((up - down).abs() / up < 1e-2);
        }
        let peaks = normal_mode_peaks(&p, b0).unwrap();
        assert_eq!(peaks.len(), 1);
    }

    #[test]
    fn zero_resonances_is_exact_lorentzian() {
        let p = TransmissionModelParams::bare(reference_resonator());
        let amp = (p.resonator.kappa_c_hz / p.resonator.kappa0_hz).powi(2);
        for f in linspace(F_R - 3e6, F_R + 3e6, 301) {
            let a = s21_power(&p, f, 0.1).unwrap();
            let b = lorentzian(f, F_R, 370e3, amp, 0.0).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
        let half = s21_power(&p, F_R + 370e3, 0.1).unwrap();
        assert_relative_eq!(half, amp / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn suppression_at_high_field_resonance() {
        let b = 0.17836;
        let res = SpinResonance::new(b, 1.40e6, 1.07e6, 1.9985);
        let r = ResonatorParams { kappa0_hz: 0.37e6, ..reference_resonator() };
        let p = TransmissionModelParams::with_resonances(r, vec![res]);
        let bare = s21_power(&TransmissionModelParams::bare(r), F_R, b).unwrap();
        let on = s21_power(&p, F_R, b).unwrap();
        let c = cooperativity(1.07e6, 0.37e6, 1.40e6).unwrap();
        // on resonance the suppression is exactly (1 + C)²
        assert_relative_eq!(bare / on, (1.0 + c).powi(2), max_relative = 1e-12);
        assert!(bare / on > 9.0 && bare / on < 11.0);
    }

    #[test]
    fn lorentzian_definition() {
        assert_eq!(lorentzian(5.0, 5.0, 0.5, 2.0, 0.25).unwrap(), 2.25);
        assert_relative_eq!(lorentzian(5.5, 5.0, 0.5, 2.0, 0.25).unwrap(), 1.25);
        assert_relative_eq!(lorentzian(4.5, 5.0, 0.5, 2.0, 0.25).unwrap(), 1.25);
        assert!(matches!(lorentzian(1.0, 0.0, 0.0, 1.0, 0.0), Err(Error::DegenerateLinewidth(_))));
    }

    #[test]
    fn zero_gamma_is_degenerate() {
        let res = SpinResonance::new(0.17, 0.0, 1e6, 2.0);
        let p = TransmissionModelParams::with_resonances(reference_resonator(), vec![res]);
        assert!(matches!(s21_power(&p, F_R, 0.17), Err(Error::DegenerateLinewidth(_))));
    }

    #[test]
    fn strong_coupling_splitting_is_two_g() {
        let kappa = 100e3;
        let g = 50.0 * kappa;
        let r = ResonatorParams { freq_hz: F_R, kappa0_hz: kappa, kappa_c_hz: kappa / 2.0 };
        let res = SpinResonance::new(0.17, kappa, g, 2.0);
        let p = TransmissionModelParams::with_resonances(r, vec![res]);
        let peaks = normal_mode_peaks(&p, 0.17).unwrap();
        assert_eq!(peaks.len(), 2);
        assert!(((peaks[1] - peaks[0]) / (2.0 * g) - 1.0).abs() < 0.01);
    }

    #[test]
    fn no_coupling_single_peak_at_resonator() {
        let res = SpinResonance::new(0.17, 1e6, 0.0, 2.0);
        let p = TransmissionModelParams::with_resonances(reference_resonator(), vec![res]);
        let peaks = normal_mode_peaks(&p, 0.17).unwrap();
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0] - F_R).abs() < 2.0);
    }

    #[test]
    fn reported_values_give_resolved_doublet() {
        let g = 1.07e6;
        let r = ResonatorParams { kappa0_hz: 0.37e6, ..reference_resonator() };
        let res = SpinResonance::new(0.17836, 1.40e6, g, 1.9985);
        let p = TransmissionModelParams::with_resonances(r, vec![res]);
        let peaks = normal_mode_peaks(&p, 0.17836).unwrap();
        assert_eq!(peaks.len(), 2);
        let sep = peaks[1] - peaks[0];
        assert!((sep / (2.0 * g) - 1.0).abs() < 0.25, "separation {sep}");
        // symmetric about the cavity when the spins are exactly on resonance
        assert!(((peaks[0] + peaks[1]) / 2.0 - F_R).abs() < 10.0);
    }

    #[test]
    fn cooperativity_values() {
        assert!((cooperativity(1.13e6, 0.37e6, 1.38e6).unwrap() - 2.50).abs() < 0.02);
        assert!((cooperativity(1.13e6, 0.37e6, 0.53e6).unwrap() - 6.5).abs() < 0.1);
        assert_eq!(cooperativity(0.0, 0.37e6, 1.38e6).unwrap(), 0.0);
        assert!(cooperativity(1.0, 0.0, 1.0).is_err());
        assert!(cooperativity(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn linewidth_conversions() {
        let gamma = linewidth_to_gamma(37.7e-6, 1.9985);
        assert!((gamma - 530e3).abs() < 5e3, "{gamma}");
        let db = gamma_to_linewidth(1.38e6, 1.9985);
        assert!((db - 98.52e-6).abs() < 0.5e-6, "{db}");
        let back = linewidth_to_gamma(gamma_to_linewidth(1.38e6, 1.9985), 1.9985);
        assert_relative_eq!(back, 1.38e6, max_relative = 1e-14);
    }

    #[test]
    fn q_factor_bookkeeping() {
        let q = ResonatorParams { freq_hz: F_R, kappa0_hz: 370e3, kappa_c_hz: 200e3 }.q_factors().unwrap();
        assert!((q.loaded - 6664.0).abs() < 5.0);
        assert!((loaded_q(9793.0, 20857.0) - 6660.0).abs() < 10.0);
        let crit = ResonatorParams { freq_hz: F_R, kappa0_hz: 400e3, kappa_c_hz: 200e3 }.q_factors().unwrap();
        assert_eq!(crit.external, crit.internal);
        let over = ResonatorParams { freq_hz: F_R, kappa0_hz: 400e3, kappa_c_hz: 400e3 };
        assert!(matches!(over.q_factors(), Err(Error::DegenerateLinewidth(_))));
    }

    #[test]
    fn from_q_factors_roundtrip() {
        let r = ResonatorParams::from_q_factors(F_R, 9793.0, 20857.0);
        let q = r.q_factors().unwrap();
        assert_relative_eq!(q.external, 9793.0, max_relative = 1e-12);
        assert_relative_eq!(q.internal, 20857.0, max_relative = 1e-12);
    }

    #[test]
    fn breit_rabi_detuning_agrees_to_first_order() {
        let spin = SpinSystemParams::default();
        let b_res = spin.resonance_field(F_R, TransitionId::HighField).unwrap();
        let mut exact = SpinResonance::new(b_res, 1.4e6, 1.07e6, spin.g_e);
        exact.detuning = Detuning::BreitRabi { spin, transition: TransitionId::HighField };
        let linear = SpinResonance::new(b_res, 1.4e6, 1.07e6, spin.g_e);
        for offset in [1e-5, 1e-4, -1e-4] {
            let a = exact.detuning_hz(b_res + offset);
            let b = linear.detuning_hz(b_res + offset);
            assert!(((a - b) / b).abs() < 5e-3, "{offset}: {a} vs {b}");
        }
    }

    #[test]
    fn map_rows_match_pointwise_evaluation() {
        let res = SpinResonance::new(0.17416, 1.38e6, 1.13e6, 1.9985);
        let p = TransmissionModelParams::with_resonances(reference_resonator(), vec![res]);
        let bs = linspace(0.173, 0.175, 5);
        let fs = linspace(F_R - 2e6, F_R + 2e6, 7);
        let map = transmission_map(&p, &bs, &fs).unwrap();
        for (i, b) in bs.iter().enumerate() {
            for (j, f) in fs.iter().enumerate() {
                assert_eq!(map[i][j], s21_power(&p, *f, *b).unwrap());
            }
        }
    }
}
