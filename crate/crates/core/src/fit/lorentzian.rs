use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_data, fit_curve, FitResult, FitStatus, ParameterSpec, Transform};
use crate::error::{Error, Result};
use crate::sweep::FieldSweep;
use crate::transmission::lorentzian;

/// Minimum number of points in a Lorentzian slice.
pub const LORENTZIAN_MIN_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianInit {
    pub center_hz: f64,
    pub hwhm_hz: f64,
    pub amplitude: f64,
    pub offset: f64,
}

impl LorentzianInit {
    /// Peak position, half-maximum crossings, maximum and minimum of the data.
    pub fn from_data(freq: &[f64], power: &[f64]) -> Result<Self> {
        let (imax, &max) = power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .ok_or_else(|| Error::SingularFit("empty spectrum".into()))?;
        let min = power.iter().copied().fold(f64::INFINITY, f64::min);
        if !(max > min) {
            return Err(Error::SingularFit("spectrum is constant".into()));
        }
        let half = min + 0.5 * (max - min);
        let crossing = |i: usize, j: usize| {
            let t = (half - power[i]) / (power[j] - power[i]);
            freq[i] + t * (freq[j] - freq[i])
        };
        let left = (1..=imax).rev().find(|&i| power[i - 1] <= half).map(|i| crossing(i - 1, i));
        let right = (imax..freq.len() - 1).find(|&i| power[i + 1] <= half).map(|i| crossing(i + 1, i));
        let center = freq[imax];
        let hwhm = match (left, right) {
            (Some(l), Some(r)) => 0.5 * (r - l),
            (Some(l), None) => center - l,
            (None, Some(r)) => r - center,
            (None, None) => 0.1 * (freq[freq.len() - 1] - freq[0]),
        };
        let step = freq[1] - freq[0];
        Ok(Self { center_hz: center, hwhm_hz: hwhm.max(0.5 * step), amplitude: max - min, offset: min })
    }
}

pub const LORENTZIAN_PARAMETERS: [&str; 4] = ["center_hz", "hwhm_hz", "amplitude", "offset"];

/// Fits amplitude·hwhm²/((f − center)² + hwhm²) + offset to one slice.
pub fn fit_lorentzian_slice(freq: &[f64], power: &[f64], init: Option<LorentzianInit>) -> Result<FitResult> {
    check_data(freq, power, LORENTZIAN_MIN_POINTS)?;
    let init = match init {
        Some(i) => i,
        None => LorentzianInit::from_data(freq, power)?,
    };
    if !(init.hwhm_hz > 0.0 && init.amplitude > 0.0) {
        return Err(Error::InvalidParameter(format!("invalid Lorentzian start {init:?}")));
    }
    let specs = [
        ParameterSpec {
            name: "center_hz".into(),
            unit: "Hz",
            transform: Transform::Affine { offset: init.center_hz, scale: init.hwhm_hz },
            initial: init.center_hz,
        },
        ParameterSpec { name: "hwhm_hz".into(), unit: "Hz", transform: Transform::Log, initial: init.hwhm_hz },
        ParameterSpec { name: "amplitude".into(), unit: "1", transform: Transform::Log, initial: init.amplitude },
        ParameterSpec {
            name: "offset".into(),
            unit: "1",
            transform: Transform::Affine { offset: 0.0, scale: init.amplitude },
            initial: init.offset,
        },
    ];
    let model =
        |p: &[f64]| -> Result<Vec<f64>> { freq.iter().map(|&f| lorentzian(f, p[0], p[1], p[2], p[3])).collect() };
    let gradient = |p: &[f64]| -> Result<DMatrix<f64>> { Ok(lorentzian_jacobian(freq, p)) };
    fit_curve(&specs, &model, Some(&gradient), power)
}

/// Derivatives with respect to (center, hwhm, amplitude, offset).
fn lorentzian_jacobian(freq: &[f64], p: &[f64]) -> DMatrix<f64> {
    let (c, h, a) = (p[0], p[1], p[2]);
    DMatrix::from_fn(freq.len(), 4, |i, k| {
        let d = freq[i] - c;
        let q = d * d + h * h;
        match k {
            0 => a * h * h * 2.0 * d / (q * q),
            1 => a * 2.0 * h * d * d / (q * q),
            2 => h * h / q,
            _ => 1.0,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaRow {
    pub b0_tesla: f64,
    pub kappa_over_2pi_hz: f64,
    pub kappa_stderr_hz: f64,
    pub center_hz: f64,
    pub status: FitStatus,
    /// Empty when the fit converged; otherwise why the row is flagged.
    pub flag: String,
}

/// Lorentzian linewidth for every field row of a sweep, evaluated in
/// parallel and returned in field order. Failed rows are kept and flagged.
pub fn extract_kappa_vs_field(sweep: &FieldSweep) -> Result<Vec<KappaRow>> {
    sweep.validate()?;
    Ok(sweep
        .b_grid
        .par_iter()
        .zip(sweep.power.par_iter())
        .map(|(&b0, row)| match fit_lorentzian_slice(&sweep.freq_grid, row, None) {
            Ok(fit) => KappaRow {
                b0_tesla: b0,
                kappa_over_2pi_hz: fit.value("hwhm_hz").unwrap_or(f64::NAN),
                kappa_stderr_hz: fit.stderr("hwhm_hz").unwrap_or(f64::NAN),
                center_hz: fit.value("center_hz").unwrap_or(f64::NAN),
                status: fit.status,
                flag: match fit.status {
                    FitStatus::Converged => String::new(),
                    FitStatus::MaxIter => format!("no convergence after {} iterations", fit.iterations),
                    FitStatus::Singular => "singular covariance".into(),
                },
            },
            Err(e) => KappaRow {
                b0_tesla: b0,
                kappa_over_2pi_hz: f64::NAN,
                kappa_stderr_hz: f64::NAN,
                center_hz: f64::NAN,
                status: FitStatus::Singular,
                flag: e.to_string(),
            },
        })
        .collect())
}
