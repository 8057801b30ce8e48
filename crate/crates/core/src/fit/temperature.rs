use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{fit_curve, FitResult, ParameterSpec, Transform};
use crate::coupling::g_eff_temperature;
use crate::error::{Error, Result};
use crate::spin::{SpinSystemParams, TransitionId};

/// Minimum number of temperature points per fitted transition.
pub const TEMPERATURE_MIN_POINTS: usize = 3;

/// One measured collective coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperaturePoint {
    pub temperature_k: f64,
    pub transition: TransitionId,
    pub g_eff_hz: f64,
}

/// Parses `temperature_K,transition,g_eff_over_2pi_hz` rows; `#` lines are
/// comments and the transition is `LF` or `HF`.
pub fn temperature_series_from_csv(text: &str) -> Result<Vec<TemperaturePoint>> {
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Schema { line: 1, message: e.to_string() })?.clone();
    let expected = ["temperature_K", "transition", "g_eff_over_2pi_hz"];
    if header.iter().ne(expected) {
        let line = reader.position().line().max(1) as usize;
        return Err(Error::Schema { line, message: format!("expected header {}", expected.join(",")) });
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Schema {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let number = |i: usize| -> Result<f64> {
            record[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Schema { line, message: format!("bad {} value {:?}", expected[i], &record[i]) })
        };
        let transition = TransitionId::from_label(&record[1])
            .ok_or_else(|| Error::Schema { line, message: format!("unknown transition {:?}", &record[1]) })?;
        out.push(TemperaturePoint { temperature_k: number(0)?, transition, g_eff_hz: number(2)? });
    }
    Ok(out)
}

pub fn temperature_series_to_csv(points: &[TemperaturePoint]) -> String {
    let mut s = String::from("temperature_K,transition,g_eff_over_2pi_hz\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.temperature_k, p.transition.label(), p.g_eff_hz));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureFit {
    /// Parameters `g_full_over_2pi_hz`, or `g_full_lf_over_2pi_hz` and
    /// `g_full_hf_over_2pi_hz` with per-transition amplitudes.
    pub fit: FitResult,
    pub residuals_hz: Vec<f64>,
}

impl TemperatureFit {
    /// Fully polarized coupling for `transition`.
    pub fn amplitude(&self, transition: TransitionId) -> Option<f64> {
        self.fit.value(&amplitude_name(Some(transition))).or_else(|| self.fit.value(&amplitude_name(None)))
    }
}

/// Static field at which each transition's polarization is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolarizationField {
    /// One field for both transitions (T).
    Fixed(f64),
    /// Each transition at its own resonance field for this frequency (Hz),
    /// as in a measurement where every line is tuned onto the resonator.
    Resonant(f64),
}

impl PolarizationField {
    pub fn field(self, params: &SpinSystemParams, transition: TransitionId) -> Result<f64> {
        match self {
            PolarizationField::Fixed(b) => Ok(b),
            PolarizationField::Resonant(freq_hz) => params.resonance_field(freq_hz, transition),
        }
    }
}

/// g_full·√P_t(T) at the field selected by `field`.
pub fn temperature_model(
    g_full_hz: f64,
    params: &SpinSystemParams,
    field: PolarizationField,
    temperature: f64,
    transition: TransitionId,
) -> Result<f64> {
    g_eff_temperature(g_full_hz, params, field.field(params, transition)?, temperature, transition)
}

fn amplitude_name(transition: Option<TransitionId>) -> String {
    match transition {
        None => "g_full_over_2pi_hz".into(),
        Some(t) => format!("g_full_{}_over_2pi_hz", t.label().to_lowercase()),
    }
}

/// Fits g_eff(T) = g_full·√P_t(T, B) to the points, with B chosen by
/// `field`. With `shared` one
/// amplitude serves both transitions, otherwise each transition present gets
/// its own.
pub fn fit_temperature_series(
    points: &[TemperaturePoint],
    params: &SpinSystemParams,
    field: PolarizationField,
    shared: bool,
) -> Result<TemperatureFit> {
    params.validate()?;
    let transitions: Vec<TransitionId> =
        TransitionId::ALL.into_iter().filter(|t| points.iter().any(|p| p.transition == *t)).collect();
    if transitions.is_empty() {
        return Err(Error::SingularFit("no temperature points".into()));
    }
    for &t in &transitions {
        let n = points.iter().filter(|p| p.transition == t).count();
        if n < TEMPERATURE_MIN_POINTS {
            return Err(Error::SingularFit(format!(
                "need at least {TEMPERATURE_MIN_POINTS} points for {}, got {n}",
                t.label()
            )));
        }
    }
    if let Some(p) = points.iter().find(|p| !(p.g_eff_hz.is_finite() && p.g_eff_hz > 0.0)) {
        return Err(Error::InvalidParameter(format!("coupling must be positive, got {}", p.g_eff_hz)));
    }
    let root_p: Vec<f64> = points
        .iter()
        .map(|p| temperature_model(1.0, params, field, p.temperature_k, p.transition))
        .collect::<Result<_>>()?;
    // column of each point in the parameter vector
    let column: Vec<usize> = points
        .iter()
        .map(|p| if shared { 0 } else { transitions.iter().position(|t| *t == p.transition).unwrap_or(0) })
        .collect();
    let groups: Vec<Option<TransitionId>> =
        if shared { vec![None] } else { transitions.iter().copied().map(Some).collect() };
    let specs: Vec<ParameterSpec> = groups
        .iter()
        .enumerate()
        .map(|(k, &g)| {
            // least-squares amplitude of the group as the starting value
            let (num, den) = points
                .iter()
                .zip(&root_p)
                .zip(&column)
                .filter(|(_, &c)| c == k)
                .fold((0.0, 0.0), |(n, d), ((p, &r), _)| (n + p.g_eff_hz * r, d + r * r));
            ParameterSpec {
                name: amplitude_name(g),
                unit: "Hz",
                transform: Transform::Log,
                initial: if den > 0.0 { num / den } else { f64::NAN },
            }
        })
        .collect();
    let model = |a: &[f64]| -> Result<Vec<f64>> { Ok(root_p.iter().zip(&column).map(|(r, &c)| a[c] * r).collect()) };
    let gradient = |_: &[f64]| -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_fn(points.len(), specs.len(), |i, k| if column[i] == k { root_p[i] } else { 0.0 }))
    };
    let data: Vec<f64> = points.iter().map(|p| p.g_eff_hz).collect();
    let fit = fit_curve(&specs, &model, Some(&gradient), &data)?;
    let values: Vec<f64> = fit.parameters.iter().map(|p| p.value).collect();
    let residuals_hz = model(&values)?.iter().zip(&data).map(|(m, d)| d - m).collect();
    Ok(TemperatureFit { fit, residuals_hz })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::logspace;

    fn series(g_lf: f64, g_hf: f64) -> Vec<TemperaturePoint> {
        let p = SpinSystemParams::default();
        let mut out = Vec::new();
        for t in logspace(0.05, 3.5, 12) {
            for (tr, g) in [(TransitionId::LowField, g_lf), (TransitionId::HighField, g_hf)] {
                let g_eff = g_eff_temperature(g, &p, 0.1765, t, tr).unwrap();
                out.push(TemperaturePoint { temperature_k: t, transition: tr, g_eff_hz: g_eff });
            }
        }
        out
    }

    #[test]
    fn recovers_shared_amplitude() {
        let fit = fit_temperature_series(
            &series(1.2e6, 1.2e6),
            &SpinSystemParams::default(),
            PolarizationField::Fixed(0.1765),
            true,
        )
        .unwrap();
        assert!((fit.amplitude(TransitionId::LowField).unwrap() / 1.2e6 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn recovers_separate_amplitudes() {
        let fit = fit_temperature_series(
            &series(1.2e6, 1.1e6),
            &SpinSystemParams::default(),
            PolarizationField::Fixed(0.1765),
            false,
        )
        .unwrap();
        assert!((fit.amplitude(TransitionId::LowField).unwrap() / 1.2e6 - 1.0).abs() < 1e-8);
        assert!((fit.amplitude(TransitionId::HighField).unwrap() / 1.1e6 - 1.0).abs() < 1e-8);
    }

    #[test]
    fn too_few_points_is_singular() {
        let pts = &series(1e6, 1e6)[..4];
        assert!(matches!(
            fit_temperature_series(pts, &SpinSystemParams::default(), PolarizationField::Fixed(0.1765), true),
            Err(Error::SingularFit(_))
        ));
    }

    #[test]
    fn csv_roundtrip() {
        let pts = series(1.2e6, 1.1e6);
        let back = temperature_series_from_csv(&temperature_series_to_csv(&pts)).unwrap();
        assert_eq!(back, pts);
        let err = temperature_series_from_csv("temperature_K,transition,g_eff_over_2pi_hz\n0.1,XX,1e6\n").unwrap_err();
        assert!(matches!(err, Error::Schema { line: 2, .. }), "{err:?}");
    }
}
