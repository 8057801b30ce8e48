//! Three routes to the collective coupling g_eff, plus its temperature
//! dependence.
//!
//! Rates are ordinary frequencies (g/2π in Hz). The single-spin coupling
//! to a field amplitude B is g₀/2π = g_s μ_B |B| / (2h).

use rayon::prelude::*;
use serde::Serialize;

use super::field::{graded_nodes, locate, FieldMap};
use super::geometry::{CrystalStack, OrientationMask};
use crate::constants::{BOHR_MAGNETON, HBAR, MU0, PLANCK};
use crate::error::{Error, Result};
use crate::numeric::{gauss_legendre, pairwise_sum};
use crate::spin::{SpinSystemParams, TransitionId};

use std::f64::consts::PI;

/// Only one circularly polarized component of the linearly polarized
/// vacuum field drives the spin transition; it enters |B₁|² with weight ½.
pub const CIRCULAR_POLARIZATION_FACTOR: f64 = 0.5;

/// g₀/2π per tesla of vacuum field, g_s μ_B / (2h) (Hz/T).
pub fn coupling_per_tesla_hz(g_factor: f64) -> f64 {
    g_factor * BOHR_MAGNETON / (2.0 * PLANCK)
}

/// Filling-factor estimate g_eff/2π = (g_s μ_B / 2h)·√(μ₀ ρ ħ ω_r η / 2).
///
/// `spin_density` is the density of spins taking part; pass the
/// per-transition density to count only one hyperfine line.
pub fn analytic_g_eff(spin_density: f64, filling_factor: f64, freq_hz: f64, g_factor: f64) -> Result<f64> {
    if !(spin_density >= 0.0) {
        return Err(Error::InvalidParameter(format!("spin density must be non-negative, got {spin_density}")));
    }
    if !(filling_factor > 0.0 && filling_factor <= 1.0) {
        return Err(Error::InvalidParameter(format!("filling factor must lie in (0, 1], got {filling_factor}")));
    }
    let omega = 2.0 * PI * freq_hz;
    let b_rms2 = MU0 * spin_density * HBAR * omega * filling_factor / 2.0;
    Ok(coupling_per_tesla_hz(g_factor) * b_rms2.sqrt())
}

/// [`analytic_g_eff`] for the spins of one transition of `stack`.
pub fn analytic_g_eff_per_transition(
    stack: &CrystalStack,
    filling_factor: f64,
    freq_hz: f64,
    g_factor: f64,
) -> Result<f64> {
    analytic_g_eff(stack.transition_density(), filling_factor, freq_hz, g_factor)
}

/// Single-spin coupling g₀/2π (Hz) at (y, z) from the interpolated map,
/// without the longitudinal standing-wave factor.
pub fn g0_at(map: &FieldMap, y: f64, z: f64, g_factor: f64) -> Result<f64> {
    let (by, bz) = map.interpolate(y, z)?;
    Ok(coupling_per_tesla_hz(g_factor) * by.hypot(bz))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatticeSum {
    pub g_eff_hz: f64,
    /// Number of lattice sites inside the masked crystal volume.
    pub sites: u64,
    pub lattice_constant: f64,
    /// Spins represented by each site, ρ_transition·a³.
    pub site_weight: f64,
}

/// Transverse crystal window clipped to the field map.
fn crystal_window(map: &FieldMap, stack: &CrystalStack) -> Result<(f64, f64, f64, f64)> {
    let (z0, z1) = stack.z_range(&map.geometry);
    let (_, z_top) = map.z_range();
    if z1 > z_top {
        return Err(Error::OutOfDomain { y: 0.0, z: z1 });
    }
    let (y_lo, y_hi) = map.y_range();
    let half = 0.5 * stack.lateral_extent;
    Ok((-half.min(-y_lo), half.min(y_hi), z0, z1))
}

/// Cell-centred lattice coordinates `origin + (i + ½)a` inside `[lo, hi)`.
fn lattice_line(origin: f64, lo: f64, hi: f64, a: f64) -> Vec<f64> {
    let first = ((lo - origin) / a - 0.5).ceil().max(0.0) as i64;
    let mut out = Vec::new();
    let mut i = first;
    loop {
        let x = origin + (i as f64 + 0.5) * a;
        if x >= hi {
            break;
        }
        if x >= lo {
            out.push(x);
        }
        i += 1;
    }
    out
}

/// Discrete sum over spins on a cubic lattice of constant `a`:
///
/// g_eff/2π = (g_s μ_B / 2h)·√(½ Σ_i w (B_y,i² + B_z,i²) sin²(mπx_i/l) S(x_i))
///
/// with w = ρ_transition·a³ the number of spins each site stands for (w is
/// the per-transition fraction when a = ρ^(−1/3)). The transverse field
/// does not depend on x, so the triple sum is evaluated as the product of
/// the longitudinal and the cross-section sums. Both reductions use
/// fixed-order pairwise summation.
pub fn g_eff_lattice_sum(
    map: &FieldMap,
    stack: &CrystalStack,
    mask: &OrientationMask,
    lattice_constant: f64,
    g_factor: f64,
) -> Result<LatticeSum> {
    stack.validate()?;
    let geom = &map.geometry;
    mask.validate(geom.length)?;
    let a = lattice_constant;
    if !(a > 0.0) {
        return Err(Error::InvalidParameter(format!("lattice constant must be positive, got {a}")));
    }
    let k = geom.wavenumber();
    let xs: Vec<f64> = mask
        .intervals
        .iter()
        .flat_map(|&(x0, x1)| lattice_line(0.0, x0, x1, a))
        .map(|x| (k * x).sin().powi(2))
        .collect();
    let (y_lo, y_hi, z0, z1) = crystal_window(map, stack)?;
    let half = 0.5 * stack.lateral_extent;
    let ys: Vec<(usize, f64)> = lattice_line(-half, y_lo, y_hi, a).into_iter().map(|y| locate(&map.y, y)).collect();
    let zs: Vec<(usize, f64)> = lattice_line(z0, z0, z1, a).into_iter().map(|z| locate(&map.z, z)).collect();
    if ys.is_empty() || zs.is_empty() {
        return Err(Error::EmptyLattice);
    }
    // an empty mask leaves sites in the crystal but S = 0 on all of them
    let sites = (xs.len() * ys.len() * zs.len()) as u64;
    let longitudinal = pairwise_sum(&xs);
    let rows: Vec<f64> = zs
        .par_iter()
        .map(|&(iz, tz)| {
            let terms: Vec<f64> = ys
                .iter()
                .map(|&(iy, ty)| {
                    let (by, bz) = map.blend(iy, ty, iz, tz);
                    by * by + bz * bz
                })
                .collect();
            pairwise_sum(&terms)
        })
        .collect();
    let transverse = pairwise_sum(&rows);
    let weight = stack.transition_density() * a * a * a;
    let sum_b2 = weight * longitudinal * transverse;
    Ok(LatticeSum {
        g_eff_hz: coupling_per_tesla_hz(g_factor) * (CIRCULAR_POLARIZATION_FACTOR * sum_b2).sqrt(),
        sites,
        lattice_constant: a,
        site_weight: weight,
    })
}

const CONTINUUM_GAUSS_POINTS: usize = 4;

/// ∫ |B₁|² dA over the crystal cross-section, using the exact field model.
pub fn crystal_field_integral(map: &FieldMap, stack: &CrystalStack) -> Result<f64> {
    let (y_lo, y_hi, z0, z1) = crystal_window(map, stack)?;
    let geom = &map.geometry;
    let a = geom.half_center();
    let b = geom.inner_ground_edge();
    let outer = b + geom.ground_width;
    let edges = [-outer, -b, -a, a, b, outer];
    // Gauss-Legendre cells need far fewer nodes than the trapezoid map grid
    let quad = map.spec.coarsened().coarsened();
    let y_nodes = graded_nodes(y_lo, y_hi, &edges, &edges, &quad);
    let z_nodes = graded_nodes(z0, z1, &[geom.film_top()], &[], &quad);
    let (gx, gw) = gauss_legendre(CONTINUUM_GAUSS_POINTS);
    let expand = |nodes: &[f64]| -> Vec<(f64, f64)> {
        nodes
            .windows(2)
            .flat_map(|w| {
                let (m, h) = (0.5 * (w[0] + w[1]), 0.5 * (w[1] - w[0]));
                gx.iter().zip(&gw).map(move |(x, wt)| (m + h * x, h * wt)).collect::<Vec<_>>()
            })
            .collect()
    };
    let yq = expand(&y_nodes);
    let zq = expand(&z_nodes);
    let rows: Vec<f64> = zq
        .par_iter()
        .map(|&(z, wz)| {
            let terms: Vec<f64> = yq
                .iter()
                .map(|&(y, wy)| {
                    let (by, bz) = map.field_at(y, z);
                    wy * (by * by + bz * bz)
                })
                .collect();
            wz * pairwise_sum(&terms)
        })
        .collect();
    Ok(pairwise_sum(&rows))
}

/// ∫ sin²(mπx/l) S(x) dx, exact per mask interval.
pub fn longitudinal_factor(map: &FieldMap, mask: &OrientationMask) -> f64 {
    mask.intervals.iter().map(|&(x0, x1)| map.geometry.sin2_integral(x0, x1)).sum()
}

/// Continuum limit of the lattice sum:
///
/// g_eff/2π = (g_s μ_B / 2h)·√(½ ρ_transition ∫ |B₁(y,z)|² sin²(mπx/l) S(x) dV)
pub fn g_eff_continuum(map: &FieldMap, stack: &CrystalStack, mask: &OrientationMask, g_factor: f64) -> Result<f64> {
    stack.validate()?;
    mask.validate(map.geometry.length)?;
    let transverse = crystal_field_integral(map, stack)?;
    let longitudinal = longitudinal_factor(map, mask);
    let sum_b2 = stack.transition_density() * longitudinal * transverse;
    Ok(coupling_per_tesla_hz(g_factor) * (CIRCULAR_POLARIZATION_FACTOR * sum_b2).sqrt())
}

/// g_eff(T) = g_full·√P_t(T, b_z), where g_full is the fully polarized
/// coupling.
pub fn g_eff_temperature(
    g_full_hz: f64,
    params: &SpinSystemParams,
    b_z: f64,
    temperature: f64,
    transition: TransitionId,
) -> Result<f64> {
    Ok(g_full_hz * params.polarization(b_z, temperature, transition)?.sqrt())
}
