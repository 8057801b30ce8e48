use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{check_data, fit_curve, FitResult, ParameterSpec, Transform};
use crate::constants::gyromagnetic_hz_per_tesla;
use crate::error::{Error, Result};
use crate::transmission::{cooperativity, s21_power_unchecked, Detuning, QFactors, TransmissionModelParams};

/// Minimum number of points in an input-output slice.
pub const INOUT_MIN_POINTS: usize = 16;

/// Resonances closer than this to the slice field are fitted by default (T).
pub const NEAR_FIELD_WINDOW: f64 = 1e-3;

/// Two maxima count as a doublet when the minimum between them is below this
/// fraction of the lower one.
pub const DOUBLET_DIP_RATIO: f64 = 0.95;

/// A parameter of the transmission model; indices refer to the resonance
/// list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InoutParam {
    Kappa0,
    KappaC,
    ResonatorFreq,
    Gamma(usize),
    Coupling(usize),
    ResonanceField(usize),
    Scale,
    Offset,
}

impl InoutParam {
    pub fn name(self) -> String {
        match self {
            InoutParam::Kappa0 => "kappa0_over_2pi_hz".into(),
            InoutParam::KappaC => "kappa_c_over_2pi_hz".into(),
            InoutParam::ResonatorFreq => "omega_r_over_2pi_hz".into(),
            InoutParam::Gamma(n) => format!("gamma{n}_over_2pi_hz"),
            InoutParam::Coupling(n) => format!("g_eff{n}_over_2pi_hz"),
            InoutParam::ResonanceField(n) => format!("b_res{n}_tesla"),
            InoutParam::Scale => "amplitude_scale".into(),
            InoutParam::Offset => "background_offset".into(),
        }
    }

    fn unit(self) -> &'static str {
        match self {
            InoutParam::ResonanceField(_) => "T",
            InoutParam::Scale | InoutParam::Offset => "1",
            _ => "Hz",
        }
    }

    pub fn get(self, p: &TransmissionModelParams) -> f64 {
        match self {
            InoutParam::Kappa0 => p.resonator.kappa0_hz,
            InoutParam::KappaC => p.resonator.kappa_c_hz,
            InoutParam::ResonatorFreq => p.resonator.freq_hz,
            InoutParam::Gamma(n) => p.resonances[n].gamma_hz,
            InoutParam::Coupling(n) => p.resonances[n].g_eff_hz,
            InoutParam::ResonanceField(n) => p.resonances[n].b_res,
            InoutParam::Scale => p.amplitude_scale,
            InoutParam::Offset => p.background_offset,
        }
    }

    pub fn set(self, p: &mut TransmissionModelParams, v: f64) {
        match self {
            InoutParam::Kappa0 => p.resonator.kappa0_hz = v,
            InoutParam::KappaC => p.resonator.kappa_c_hz = v,
            InoutParam::ResonatorFreq => p.resonator.freq_hz = v,
            InoutParam::Gamma(n) => p.resonances[n].gamma_hz = v,
            InoutParam::Coupling(n) => p.resonances[n].g_eff_hz = v,
            InoutParam::ResonanceField(n) => p.resonances[n].b_res = v,
            InoutParam::Scale => p.amplitude_scale = v,
            InoutParam::Offset => p.background_offset = v,
        }
    }
}

/// Which parameters of `template` are fitted; the rest stay frozen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InoutSpec {
    pub template: TransmissionModelParams,
    pub b0: f64,
    pub free: Vec<InoutParam>,
}

impl InoutSpec {
    /// Frees κ₀, ω_r, the offset, and γ, g and B_n of every resonance within
    /// [`NEAR_FIELD_WINDOW`] of `b0` (or of the nearest one if none is). A
    /// line many linewidths away only contributes a dispersive shift g²/δ, so
    /// its own parameters cannot be separated. κ_c and the amplitude scale
    /// enter only as the product scale·κ_c², so both stay fixed.
    pub fn new(template: TransmissionModelParams, b0: f64) -> Self {
        let mut free = vec![InoutParam::Kappa0, InoutParam::ResonatorFreq];
        let distance = |n: usize| (template.resonances[n].b_res - b0).abs();
        let mut near: Vec<usize> =
            (0..template.resonances.len()).filter(|&n| distance(n) <= NEAR_FIELD_WINDOW).collect();
        if near.is_empty() {
            near.extend((0..template.resonances.len()).min_by(|&a, &b| distance(a).total_cmp(&distance(b))));
        }
        for n in near {
            free.extend([InoutParam::Gamma(n), InoutParam::Coupling(n), InoutParam::ResonanceField(n)]);
        }
        free.push(InoutParam::Offset);
        Self { template, b0, free }
    }

    fn validate(&self) -> Result<()> {
        self.template.validate()?;
        let n = self.template.resonances.len();
        for (i, p) in self.free.iter().enumerate() {
            if let InoutParam::Gamma(k) | InoutParam::Coupling(k) | InoutParam::ResonanceField(k) = *p {
                if k >= n {
                    return Err(Error::InvalidParameter(format!("{} refers to missing resonance {k}", p.name())));
                }
            }
            if self.free[..i].contains(p) {
                return Err(Error::InvalidParameter(format!("{} listed twice", p.name())));
            }
        }
        Ok(())
    }

    fn with_values(&self, values: &[f64]) -> TransmissionModelParams {
        let mut p = self.template.clone();
        for (param, &v) in self.free.iter().zip(values) {
            param.set(&mut p, v);
        }
        p
    }
}

/// d(δ_n)/d(B_n) for the detuning of one resonance.
fn detuning_field_slope(p: &TransmissionModelParams, n: usize) -> f64 {
    let r = &p.resonances[n];
    match r.detuning {
        Detuning::Linear => -gyromagnetic_hz_per_tesla(r.g_factor),
        Detuning::BreitRabi { spin, transition } => -spin.transition_frequency_slope(r.b_res, transition),
    }
}

/// Analytic derivatives of amplitude_scale·|S21|² + offset with respect to
/// `which`, at one frequency.
pub fn s21_power_gradient(p: &TransmissionModelParams, freq_hz: f64, b0: f64, which: &[InoutParam]) -> Vec<f64> {
    let (d, spin_denoms) = p.denominator(freq_hz, b0);
    let kc = p.resonator.kappa_c_hz;
    let s = kc / d;
    let i = Complex64::i();
    let one = Complex64::new(1.0, 0.0);
    let spin_ratio = |n: usize| {
        let g = p.resonances[n].g_eff_hz;
        g * g / (spin_denoms[n] * spin_denoms[n])
    };
    which
        .iter()
        .map(|&param| {
            // dD/dθ, with dκ_c/dθ handled separately
            let d_d = match param {
                InoutParam::Kappa0 => -one,
                InoutParam::KappaC | InoutParam::Scale | InoutParam::Offset => Complex64::new(0.0, 0.0),
                InoutParam::ResonatorFreq => -i + i * (0..spin_denoms.len()).map(spin_ratio).sum::<Complex64>(),
                InoutParam::Gamma(n) => spin_ratio(n),
                InoutParam::Coupling(n) => 2.0 * p.resonances[n].g_eff_hz / spin_denoms[n],
                // dD_n/dB_n = −i·dδ_n/dB_n
                InoutParam::ResonanceField(n) => spin_ratio(n) * i * detuning_field_slope(p, n),
            };
            match param {
                InoutParam::Scale => s.norm_sqr(),
                InoutParam::Offset => 1.0,
                _ => {
                    let d_kc = if param == InoutParam::KappaC { 1.0 } else { 0.0 };
                    let d_s = d_kc / d - kc * d_d / (d * d);
                    p.amplitude_scale * 2.0 * (s.conj() * d_s).re
                }
            }
        })
        .collect()
}

/// Starting values refined from the measured doublet.
///
/// The two highest local maxima of the lightly smoothed slice that are
/// separated by a dip are taken as the normal modes. For a spin detuned by δ
/// they sit at f_r + δ/2 ± √(g² + δ²/4), so their midpoint gives δ (hence
/// B_n) and their half separation gives g for the resonance closest to b0.
/// Without a resolved doublet the template is returned unchanged.
pub fn inout_initial_guess(
    template: &TransmissionModelParams,
    b0: f64,
    freq: &[f64],
    power: &[f64],
) -> TransmissionModelParams {
    let mut out = template.clone();
    let Some(n) = (0..template.resonances.len()).min_by(|&a, &b| {
        let da = (template.resonances[a].b_res - b0).abs();
        let db = (template.resonances[b].b_res - b0).abs();
        da.total_cmp(&db)
    }) else {
        return out;
    };
    let smooth: Vec<f64> = (0..power.len())
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 3).min(power.len());
            power[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let mut maxima: Vec<usize> = (1..smooth.len().saturating_sub(1))
        .filter(|&i| smooth[i] > smooth[i - 1] && smooth[i] >= smooth[i + 1])
        .collect();
    maxima.sort_by(|&a, &b| smooth[b].total_cmp(&smooth[a]));
    let Some(&first) = maxima.first() else {
        return out;
    };
    let second = maxima.iter().copied().skip(1).find(|&k| {
        let (lo, hi) = if k < first { (k, first) } else { (first, k) };
        let dip = smooth[lo..=hi].iter().copied().fold(f64::INFINITY, f64::min);
        dip < DOUBLET_DIP_RATIO * smooth[k]
    });
    let Some(second) = second else {
        return out;
    };
    let (f1, f2) = if freq[first] < freq[second] { (freq[first], freq[second]) } else { (freq[second], freq[first]) };
    let mid = 0.5 * (f1 + f2);
    let half = 0.5 * (f2 - f1);
    let delta = 2.0 * (mid - template.resonator.freq_hz);
    let g2 = half * half - 0.25 * delta * delta;
    if g2 > 0.0 {
        let r = &mut out.resonances[n];
        r.g_eff_hz = g2.sqrt();
        r.b_res = b0 - delta / gyromagnetic_hz_per_tesla(r.g_factor);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InoutFit {
    pub fit: FitResult,
    /// Template with the fitted values substituted.
    pub model: TransmissionModelParams,
    /// g_n²/(κ₀ γ_n) for every resonance.
    pub cooperativities: Vec<f64>,
    pub q_factors: Option<QFactors>,
}

/// Fits the input-output model to one frequency slice at field `spec.b0`.
///
/// Free couplings and resonance fields start from [`inout_initial_guess`]
/// when the slice shows a resolved doublet, otherwise from the template.
pub fn fit_inout_slice(freq: &[f64], power: &[f64], spec: &InoutSpec) -> Result<InoutFit> {
    check_data(freq, power, INOUT_MIN_POINTS)?;
    spec.validate()?;
    if spec.free.is_empty() {
        return Err(Error::InvalidParameter("no free parameters".into()));
    }
    let max = power.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = power.iter().copied().fold(f64::INFINITY, f64::min);
    if !(max > min) {
        return Err(Error::SingularFit("spectrum is constant".into()));
    }
    let guess = inout_initial_guess(&spec.template, spec.b0, freq, power);
    let mut start = spec.template.clone();
    for &param in &spec.free {
        if let InoutParam::Coupling(_) | InoutParam::ResonanceField(_) = param {
            param.set(&mut start, param.get(&guess));
        }
    }
    let t = &start;
    let field_scale = t.resonances.iter().map(|r| r.gamma_hz).fold(t.resonator.kappa0_hz, f64::max);
    let specs: Vec<ParameterSpec> = spec
        .free
        .iter()
        .map(|&param| {
            let initial = param.get(t);
            let transform = match param {
                InoutParam::ResonatorFreq => Transform::Affine { offset: initial, scale: t.resonator.kappa0_hz },
                InoutParam::ResonanceField(n) => Transform::Affine {
                    offset: initial,
                    scale: field_scale / gyromagnetic_hz_per_tesla(t.resonances[n].g_factor),
                },
                InoutParam::Offset => Transform::Affine { offset: 0.0, scale: max },
                _ => Transform::Log,
            };
            ParameterSpec { name: param.name(), unit: param.unit(), transform, initial }
        })
        .collect();
    let model = |values: &[f64]| -> Result<Vec<f64>> {
        let p = spec.with_values(values);
        // the fitted background may dip below zero within noise
        let mut check = p.clone();
        check.background_offset = check.background_offset.max(0.0);
        check.validate()?;
        Ok(freq.iter().map(|&f| s21_power_unchecked(&p, f, spec.b0)).collect())
    };
    let gradient = |values: &[f64]| -> Result<DMatrix<f64>> {
        let p = spec.with_values(values);
        let rows: Vec<Vec<f64>> = freq.iter().map(|&f| s21_power_gradient(&p, f, spec.b0, &spec.free)).collect();
        Ok(DMatrix::from_fn(freq.len(), spec.free.len(), |i, k| rows[i][k]))
    };
    let fit = fit_curve(&specs, &model, Some(&gradient), power)?;
    let values: Vec<f64> = fit.parameters.iter().map(|p| p.value).collect();
    let fitted = spec.with_values(&values);
    let cooperativities = fitted
        .resonances
        .iter()
        .map(|r| cooperativity(r.g_eff_hz, fitted.resonator.kappa0_hz, r.gamma_hz))
        .collect::<Result<Vec<_>>>()?;
    let q_factors = fitted.resonator.q_factors().ok();
    Ok(InoutFit { fit, model: fitted, cooperativities, q_factors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::finite_difference_jacobian;
    use crate::numeric::linspace;
    use crate::spin::{SpinSystemParams, TransitionId};
    use crate::transmission::{s21_power, ResonatorParams, SpinResonance};

    fn reference_model() -> TransmissionModelParams {
        TransmissionModelParams::with_resonances(
            ResonatorParams { freq_hz: 4.931e9, kappa0_hz: 0.37e6, kappa_c_hz: 0.2518e6 },
            vec![
                SpinResonance::new(0.17416, 1.38e6, 1.13e6, 1.9985),
                SpinResonance::new(0.17836, 1.40e6, 1.07e6, 1.9985),
            ],
        )
    }

    const ALL: [InoutParam; 11] = [
        InoutParam::Kappa0,
        InoutParam::KappaC,
        InoutParam::ResonatorFreq,
        InoutParam::Gamma(0),
        InoutParam::Coupling(0),
        InoutParam::ResonanceField(0),
        InoutParam::Gamma(1),
        InoutParam::Coupling(1),
        InoutParam::ResonanceField(1),
        InoutParam::Scale,
        InoutParam::Offset,
    ];

    fn check_against_fd(p: &TransmissionModelParams, b0: f64) {
        let freq = linspace(4.925e9, 4.937e9, 61);
        let spec = InoutSpec { template: p.clone(), b0, free: ALL.to_vec() };
        let x: Vec<f64> = ALL.iter().map(|q| q.get(p)).collect();
        let field_scale = 1.4e6 / gyromagnetic_hz_per_tesla(1.9985);
        let scales: Vec<f64> = ALL
            .iter()
            .zip(&x)
            .map(|(q, &v)| match q {
                InoutParam::ResonatorFreq => p.resonator.kappa0_hz,
                InoutParam::ResonanceField(_) => field_scale,
                InoutParam::Offset => 0.1,
                _ => v,
            })
            .collect();
        let model = |v: &[f64]| -> Result<Vec<f64>> {
            let q = spec.with_values(v);
            Ok(freq.iter().map(|&f| s21_power_unchecked(&q, f, b0)).collect())
        };
        let gradient = |v: &[f64]| -> Result<DMatrix<f64>> {
            let q = spec.with_values(v);
            let rows: Vec<Vec<f64>> = freq.iter().map(|&f| s21_power_gradient(&q, f, b0, &ALL)).collect();
            Ok(DMatrix::from_fn(freq.len(), ALL.len(), |i, k| rows[i][k]))
        };
        crate::fit::assert_gradient_matches(&model, &gradient, &x, &scales, 1e-6);
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        let mut p = reference_model();
        p.background_offset = 0.01;
        p.amplitude_scale = 1.3;
        check_against_fd(&p, 0.17836);
        check_against_fd(&p, 0.1765);
    }

    #[test]
    fn breit_rabi_field_derivative_matches() {
        let mut p = reference_model();
        let spin = SpinSystemParams::default();
        p.resonances[0].detuning = Detuning::BreitRabi { spin, transition: TransitionId::LowField };
        p.resonances[1].detuning = Detuning::BreitRabi { spin, transition: TransitionId::HighField };
        check_against_fd(&p, 0.17836);
    }

    #[test]
    fn uncoupled_distant_resonance_has_zero_column() {
        let mut p = reference_model();
        p.resonances.push(SpinResonance::new(1.17836, 1.4e6, 0.0, 1.9985));
        let which = [InoutParam::Kappa0, InoutParam::ResonatorFreq, InoutParam::Coupling(2)];
        let freq = linspace(4.925e9, 4.937e9, 61);
        let spec = InoutSpec { template: p.clone(), b0: 0.17836, free: which.to_vec() };
        let x: Vec<f64> = which.iter().map(|q| q.get(&p)).collect();
        let model = |v: &[f64]| -> Result<Vec<f64>> {
            let q = spec.with_values(v);
            Ok(freq.iter().map(|&f| s21_power_unchecked(&q, f, 0.17836)).collect())
        };
        let fd = finite_difference_jacobian(model, &x, 1e3).unwrap();
        let max = (0..2).map(|k| fd.column(k).norm()).fold(0.0, f64::max);
        assert!(fd.column(2).norm() < 1e-12 * max, "{} vs {max}", fd.column(2).norm());
    }

    #[test]
    fn initial_guess_recovers_detuned_doublet() {
        let mut p = reference_model();
        p.resonances[1].g_eff_hz = 3e6;
        p.resonances[1].b_res = 0.17836 + 0.02e-3;
        let freq = linspace(4.925e9, 4.937e9, 601);
        let power: Vec<f64> = freq.iter().map(|&f| s21_power(&p, f, 0.17836).unwrap()).collect();
        let mut template = reference_model();
        template.resonances[1].b_res = 0.17836 - 0.5e-3;
        template.resonances[1].g_eff_hz = 0.5e6;
        let init = inout_initial_guess(&template, 0.17836, &freq, &power);
        let r = init.resonances[1];
        assert!((r.b_res - p.resonances[1].b_res).abs() < 0.02e-3, "{}", r.b_res);
        assert!((r.g_eff_hz / 3e6 - 1.0).abs() < 0.1, "{}", r.g_eff_hz);
    }

    #[test]
    fn unresolved_doublet_keeps_template() {
        // at the quoted values the lower normal mode is only a shoulder
        let p = reference_model();
        let freq = linspace(4.925e9, 4.937e9, 601);
        let power: Vec<f64> = freq.iter().map(|&f| s21_power(&p, f, 0.1784).unwrap()).collect();
        let mut template = reference_model();
        template.resonances[1].b_res = 0.1786;
        assert_eq!(inout_initial_guess(&template, 0.1784, &freq, &power), template);
    }

    #[test]
    fn free_list_is_validated() {
        let spec = InoutSpec { template: reference_model(), b0: 0.178, free: vec![InoutParam::Gamma(5)] };
        assert!(spec.validate().is_err());
        let spec =
            InoutSpec { template: reference_model(), b0: 0.178, free: vec![InoutParam::Kappa0, InoutParam::Kappa0] };
        assert!(spec.validate().is_err());
    }
}
