//! Levenberg–Marquardt least squares with Marquardt diagonal damping.
//!
//! Damping starts at 1e-3 and is divided by 10 after an accepted step and
//! multiplied by 10 after a rejected one. A step is accepted only if it
//! lowers the residual norm. The loop stops when the relative cost change or
//! the relative step drops below 1e-10, when no step can lower the cost any
//! more (damping above 1e16), or after 200 Jacobian evaluations.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 200;
pub const RELATIVE_TOLERANCE: f64 = 1e-10;
pub const INITIAL_DAMPING: f64 = 1e-3;
pub const DAMPING_FACTOR: f64 = 10.0;
const MAX_DAMPING: f64 = 1e16;
/// Relative central-difference step.
pub const FD_RELATIVE_STEP: f64 = 1e-6;
/// Absolute step floor for parameters near zero (internal coordinates are
/// log values or affinely scaled, so they are of order one).
pub const FD_ABSOLUTE_FLOOR: f64 = 1e-8;
/// Smallest eigenvalue of the normalized normal matrix accepted as
/// identifiable.
const SINGULAR_THRESHOLD: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    MaxIter,
    Singular,
}

/// A residual vector r(x) = model(x) − data and its Jacobian.
pub trait LeastSquares {
    fn residuals(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        finite_difference_jacobian(|p| self.residuals(p), x, FD_ABSOLUTE_FLOOR)
    }
}

/// Central-difference Jacobian, one column per parameter.
///
/// Each parameter is stepped by max(1e-6·|x_j|, `abs_floor`). If either
/// side of the step leaves the model domain the step is shrunk tenfold and
/// retried once before giving up with [`Error::DomainStep`].
pub fn finite_difference_jacobian<F>(f: F, params: &[f64], abs_floor: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut x = params.to_vec();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(params.len());
    for j in 0..params.len() {
        let mut h = (FD_RELATIVE_STEP * params[j].abs()).max(abs_floor);
        let mut col = None;
        for _ in 0..2 {
            let (hi, lo) = (params[j] + h, params[j] - h);
            x[j] = hi;
            let up = f(&x);
            x[j] = lo;
            let down = f(&x);
            x[j] = params[j];
            if let (Ok(u), Ok(d)) = (up, down) {
                let width = hi - lo;
                col = Some(u.iter().zip(&d).map(|(u, d)| (u - d) / width).collect::<Vec<_>>());
                break;
            }
            h *= 0.1;
        }
        cols.push(col.ok_or(Error::DomainStep(j))?);
    }
    let m = cols.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(m, params.len(), |i, j| cols[j][i]))
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    /// ½‖r‖².
    pub cost: f64,
    pub iterations: usize,
    pub status: FitStatus,
    /// σ²(JᵀJ)⁻¹ in the fitted coordinates, absent when singular.
    pub covariance: Option<DMatrix<f64>>,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

fn half_norm2(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|v| v * v).sum::<f64>()
}

fn finite(r: &[f64]) -> bool {
    r.iter().all(|v| v.is_finite())
}

pub fn levenberg_marquardt<P: LeastSquares + ?Sized>(problem: &P, x0: &[f64]) -> Result<LmOutcome> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut r = problem.residuals(&x)?;
    if !finite(&r) {
        return Err(Error::InvalidParameter("residuals are not finite at the initial point".into()));
    }
    if r.len() < n {
        return Err(Error::SingularFit(format!("{} data points cannot determine {n} parameters", r.len())));
    }
    let mut cost = half_norm2(&r);
    let mut history = vec![cost];
    let mut lambda = INITIAL_DAMPING;
    let mut status = FitStatus::MaxIter;
    let mut iterations = 0;
    let mut jac = problem.jacobian(&x)?;

    'outer: while iterations < MAX_ITERATIONS {
        iterations += 1;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * DVector::from_column_slice(&r);
        if cost == 0.0 || grad.amax() == 0.0 {
            status = FitStatus::Converged;
            break;
        }
        let diag_floor = jtj.diagonal().max() * f64::EPSILON;
        loop {
            let mut a = jtj.clone();
            for i in 0..n {
                a[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
            }
            let step = a.cholesky().map(|c| c.solve(&(-&grad)));
            let accepted = step.as_ref().and_then(|step| {
                let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
                match problem.residuals(&trial) {
                    Ok(rt) if finite(&rt) => {
                        let ct = half_norm2(&rt);
                        (ct < cost).then_some((trial, rt, ct))
                    }
                    _ => None,
                }
            });
            match accepted {
                Some((trial, rt, ct)) => {
                    let step_norm = step.as_ref().map_or(0.0, |s| s.norm());
                    let x_norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let rel_cost = (cost - ct) / cost;
                    let rel_step = step_norm / (x_norm + RELATIVE_TOLERANCE);
                    x = trial;
                    r = rt;
                    cost = ct;
                    history.push(cost);
                    lambda /= DAMPING_FACTOR;
                    if rel_cost < RELATIVE_TOLERANCE || rel_step < RELATIVE_TOLERANCE {
                        status = FitStatus::Converged;
                        break 'outer;
                    }
                    jac = problem.jacobian(&x)?;
                    break;
                }
                None => {
                    lambda *= DAMPING_FACTOR;
                    if lambda > MAX_DAMPING {
                        // no representable step lowers the cost any further
                        status = FitStatus::Converged;
                        break 'outer;
                    }
                }
            }
        }
    }

    let jac = problem.jacobian(&x)?;
    let covariance = covariance(&jac, cost, r.len());
    if covariance.is_none() {
        status = FitStatus::Singular;
    }
    Ok(LmOutcome { x, residuals: r, cost, iterations, status, covariance, cost_history: history })
}

/// σ²(JᵀJ)⁻¹ with σ² = ‖r‖²/(m − n), or `None` when JᵀJ is singular.
fn covariance(jac: &DMatrix<f64>, cost: f64, m: usize) -> Option<DMatrix<f64>> {
    let n = jac.ncols();
    let jtj = jac.transpose() * jac;
    let d: Vec<f64> = jtj.diagonal().iter().map(|v| v.sqrt()).collect();
    if d.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return None;
    }
    let normalized = DMatrix::from_fn(n, n, |i, j| jtj[(i, j)] / (d[i] * d[j]));
    let eig = SymmetricEigen::new(normalized.clone());
    if eig.eigenvalues.min() < SINGULAR_THRESHOLD {
        return None;
    }
    let inv = normalized.cholesky()?.inverse();
    let dof = m.saturating_sub(n);
    let sigma2 = if dof > 0 { 2.0 * cost / dof as f64 } else { 0.0 };
    Some(DMatrix::from_fn(n, n, |i, j| sigma2 * inv[(i, j)] / (d[i] * d[j])))
}
