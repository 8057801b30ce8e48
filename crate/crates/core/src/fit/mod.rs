//! Least-squares fitting of the transmission and temperature models.
//!
//! Strictly positive quantities (rates, couplings, amplitudes) are fitted as
//! logarithms; frequencies, fields and offsets are fitted after an affine
//! rescaling to order-one coordinates. Standard errors come from the
//! linearized covariance σ²(JᵀJ)⁻¹ mapped back to physical units.

mod inout;
mod lm;
mod lorentzian;
mod temperature;

pub use inout::*;
pub use lm::*;
pub use lorentzian::*;
pub use temperature::*;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Map between a physical parameter and the coordinate seen by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    /// value = exp(u)
    Log,
    /// value = offset + scale·u
    Affine { offset: f64, scale: f64 },
}

impl Transform {
    pub fn to_internal(self, value: f64) -> f64 {
        match self {
            Transform::Log => value.ln(),
            Transform::Affine { offset, scale } => (value - offset) / scale,
        }
    }

    pub fn to_physical(self, u: f64) -> f64 {
        match self {
            Transform::Log => u.exp(),
            Transform::Affine { offset, scale } => offset + scale * u,
        }
    }

    /// d(value)/du.
    pub fn derivative(self, u: f64) -> f64 {
        match self {
            Transform::Log => u.exp(),
            Transform::Affine { scale, .. } => scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    pub unit: String,
    pub value: f64,
    /// Linearized standard error; infinite when the parameter is not
    /// identifiable.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub parameters: Vec<FitParameter>,
    /// ‖model − data‖₂.
    pub residual_norm: f64,
    pub status: FitStatus,
    pub iterations: usize,
    pub n_data: usize,
}

impl FitResult {
    pub fn parameter(&self, name: &str) -> Option<&FitParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.parameter(name).map(|p| p.value)
    }

    pub fn stderr(&self, name: &str) -> Option<f64> {
        self.parameter(name).map(|p| p.stderr)
    }

    /// Turns a non-converged status into the matching error.
    pub fn require_converged(self) -> Result<Self> {
        match self.status {
            FitStatus::Converged => Ok(self),
            FitStatus::MaxIter => Err(Error::MaxIter(self.iterations)),
            FitStatus::Singular => Err(Error::SingularFit(
                "the normal matrix is singular at the optimum; some parameters are not identifiable".into(),
            )),
        }
    }
}

/// Physical model values on the data grid as a function of the free
/// parameters.
pub(crate) type ModelFn<'a> = dyn Fn(&[f64]) -> Result<Vec<f64>> + 'a;
/// Physical Jacobian (rows: data points, columns: free parameters).
pub(crate) type GradientFn<'a> = dyn Fn(&[f64]) -> Result<DMatrix<f64>> + 'a;

pub(crate) struct ParameterSpec {
    pub name: String,
    pub unit: &'static str,
    pub transform: Transform,
    pub initial: f64,
}

struct CurveProblem<'a> {
    specs: &'a [ParameterSpec],
    model: &'a ModelFn<'a>,
    gradient: Option<&'a GradientFn<'a>>,
    data: &'a [f64],
}

impl CurveProblem<'_> {
    fn physical(&self, u: &[f64]) -> Vec<f64> {
        self.specs.iter().zip(u).map(|(s, &u)| s.transform.to_physical(u)).collect()
    }
}

impl LeastSquares for CurveProblem<'_> {
    fn residuals(&self, u: &[f64]) -> Result<Vec<f64>> {
        let values = (self.model)(&self.physical(u))?;
        Ok(values.iter().zip(self.data).map(|(m, d)| m - d).collect())
    }

    fn jacobian(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        match self.gradient {
            Some(gradient) => {
                let mut j = gradient(&self.physical(u))?;
                for (k, (s, &uk)) in self.specs.iter().zip(u).enumerate() {
                    let d = s.transform.derivative(uk);
                    j.column_mut(k).scale_mut(d);
                }
                Ok(j)
            }
            None => finite_difference_jacobian(|p| self.residuals(p), u, FD_ABSOLUTE_FLOOR),
        }
    }
}

/// Fits `model` to `data` starting from the initial values in `specs`.
pub(crate) fn fit_curve(
    specs: &[ParameterSpec],
    model: &ModelFn<'_>,
    gradient: Option<&GradientFn<'_>>,
    data: &[f64],
) -> Result<FitResult> {
    let u0: Vec<f64> = specs.iter().map(|s| s.transform.to_internal(s.initial)).collect();
    if let Some(i) = u0.iter().position(|u| !u.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "initial value {} of {} is outside the parameter domain",
            specs[i].initial, specs[i].name
        )));
    }
    let problem = CurveProblem { specs, model, gradient, data };
    let out = levenberg_marquardt(&problem, &u0)?;
    let parameters = specs
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let u = out.x[k];
            let stderr = out
                .covariance
                .as_ref()
                .map_or(f64::INFINITY, |c| s.transform.derivative(u).abs() * c[(k, k)].max(0.0).sqrt());
            FitParameter { name: s.name.clone(), unit: s.unit.to_string(), value: s.transform.to_physical(u), stderr }
        })
        .collect();
    Ok(FitResult {
        parameters,
        residual_norm: (2.0 * out.cost).sqrt(),
        status: out.status,
        iterations: out.iterations,
        n_data: data.len(),
    })
}

pub(crate) fn check_data(x: &[f64], y: &[f64], min_points: usize) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidParameter(format!("grid has {} points but data has {}", x.len(), y.len())));
    }
    if x.len() < min_points {
        return Err(Error::SingularFit(format!("need at least {min_points} points, got {}", x.len())));
    }
    if !x.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::InvalidParameter("frequency grid must be strictly increasing".into()));
    }
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("data contains non-finite value {v}")));
    }
    Ok(())
}

/// Compares an analytic physical Jacobian against central differences taken
/// in the rescaled coordinate value = x0 + scale·u around u = 0, which is how
/// the optimizer sees large-offset parameters such as frequencies. The step
/// in u is 1e-4 so that x0 + scale·u stays well resolved for x0 of order
/// 1e4·scale.
#[cfg(test)]
pub(crate) fn assert_gradient_matches(
    model: &ModelFn<'_>,
    gradient: &GradientFn<'_>,
    x0: &[f64],
    scales: &[f64],
    tol: f64,
) {
    let physical = |u: &[f64]| -> Vec<f64> { x0.iter().zip(scales).zip(u).map(|((x, s), u)| x + s * u).collect() };
    let fd = finite_difference_jacobian(|u| model(&physical(u)), &vec![0.0; x0.len()], 1e-4).unwrap();
    let exact = gradient(x0).unwrap();
    for k in 0..x0.len() {
        let col_max = fd.column(k).amax();
        for i in 0..fd.nrows() {
            let a = exact[(i, k)] * scales[k];
            assert!(
                (a - fd[(i, k)]).abs() <= tol * col_max,
                "parameter {k} at row {i}: analytic {a} vs difference {}",
                fd[(i, k)]
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transforms_roundtrip() {
        for t in [Transform::Log, Transform::Affine { offset: 4.9e9, scale: 3.7e5 }] {
            for v in [1.0, 3.7e5, 4.931e9] {
                assert!((t.to_physical(t.to_internal(v)) / v - 1.0).abs() < 1e-14);
            }
        }
        let u = 0.3;
        let h = 1e-6;
        let t = Transform::Log;
        let fd = (t.to_physical(u + h) - t.to_physical(u - h)) / (2.0 * h);
        assert!((fd - t.derivative(u)).abs() < 1e-9);
    }
}
