//! Quasi-static magnetic field of the CPW cross-section.
//!
//! The centre conductor and the two ground planes are split into thin
//! rectangular panels of the film thickness, each carrying a uniform current
//! density. The panel currents follow a prescribed transverse profile with
//! zero net current. The field of each panel has a closed form (sum over the
//! four corners of the rectangle), so it stays finite inside and at the edges
//! of the film. The overall amplitude is fixed afterwards by the vacuum
//! normalization
//!
//! ```text
//! (1 / 2μ₀) ∫ |B₁|² dV = ħω_r / 4,
//! ```
//!
//! where the volume integral is the cross-section integral times l/2 from the
//! sin² standing wave along the resonator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::geometry::CpwGeometry;
use crate::constants::{HBAR, MU0};
use crate::error::{Error, Result};
use crate::numeric::{gauss_legendre, pairwise_sum};

use std::f64::consts::PI;

/// Tolerance of the energy-normalization convergence check.
pub const ENERGY_TOLERANCE: f64 = 5e-3;

/// Transverse current distribution across the conductors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurrentProfile {
    /// Uniform density on the centre strip and on each ground plane.
    #[default]
    Uniform,
    /// Thin-film quasi-TEM distribution with inverse-square-root edge peaks,
    /// J ∝ 1/√|(y² − a²)(y² − b²)|.
    EdgePeaked,
}

/// One rectangular current panel, y ∈ [y0, y1], |z| ≤ t/2.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Panel {
    y0: f64,
    y1: f64,
    current: f64,
}

/// Unnormalized field source: panel currents for 1 A on the centre strip.
#[derive(Debug, Clone, PartialEq)]
pub struct CpwCurrentModel {
    panels: Vec<Panel>,
    half_thickness: f64,
}

const PANEL_QUADRATURE: usize = 8;
/// Distance (in panel sizes) beyond which a panel is treated as a filament.
const FILAMENT_DISTANCE: f64 = 40.0;

impl CpwCurrentModel {
    /// `panels_per_conductor` panels on the centre strip and on each ground.
    pub fn new(geom: &CpwGeometry, profile: CurrentProfile, panels_per_conductor: usize) -> Result<Self> {
        geom.validate()?;
        let n = panels_per_conductor.max(4);
        let a = geom.half_center();
        let b = geom.inner_ground_edge();
        let outer = b + geom.ground_width;
        let (center, ground) = match profile {
            CurrentProfile::Uniform => {
                let center: Vec<(f64, f64, f64)> = (0..n)
                    .map(|i| {
                        let y0 = -a + 2.0 * a * i as f64 / n as f64;
                        let y1 = -a + 2.0 * a * (i + 1) as f64 / n as f64;
                        (y0, y1, y1 - y0)
                    })
                    .collect();
                let ground: Vec<(f64, f64, f64)> = (0..n)
                    .map(|i| {
                        let y0 = b + geom.ground_width * i as f64 / n as f64;
                        let y1 = b + geom.ground_width * (i + 1) as f64 / n as f64;
                        (y0, y1, y1 - y0)
                    })
                    .collect();
                (center, ground)
            }
            CurrentProfile::EdgePeaked => {
                let (gx, gw) = gauss_legendre(PANEL_QUADRATURE);
                let integrate = |f: &dyn Fn(f64) -> f64, lo: f64, hi: f64| -> f64 {
                    let (m, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                    gx.iter().zip(&gw).map(|(x, w)| w * h * f(m + h * x)).sum()
                };
                // y = a sin θ removes the edge singularity on the centre strip
                let center = (0..n)
                    .map(|i| {
                        let t0 = -PI / 2.0 + PI * i as f64 / n as f64;
                        let t1 = -PI / 2.0 + PI * (i + 1) as f64 / n as f64;
                        let w = integrate(&|t: f64| 1.0 / (b * b - a * a * t.sin().powi(2)).sqrt(), t0, t1);
                        (a * t0.sin(), a * t1.sin(), w)
                    })
                    .collect();
                // y = b cosh φ does the same on the ground plane
                let phi_max = (outer / b).acosh();
                let ground = (0..n)
                    .map(|i| {
                        let p0 = phi_max * i as f64 / n as f64;
                        let p1 = phi_max * (i + 1) as f64 / n as f64;
                        let w = integrate(&|p: f64| 1.0 / (b * b * p.cosh().powi(2) - a * a).sqrt(), p0, p1);
                        (b * p0.cosh(), b * p1.cosh(), w)
                    })
                    .collect();
                (center, ground)
            }
        };
        let center_total: f64 = center.iter().map(|c| c.2).sum();
        let ground_total: f64 = ground.iter().map(|g| g.2).sum();
        let mut panels = Vec::with_capacity(center.len() + 2 * ground.len());
        for &(y0, y1, w) in &center {
            panels.push(Panel { y0, y1, current: w / center_total });
        }
        // each ground plane returns half of the centre current
        for &(y0, y1, w) in &ground {
            let current = -0.5 * w / ground_total;
            panels.push(Panel { y0, y1, current });
            panels.push(Panel { y0: -y1, y1: -y0, current });
        }
        Ok(Self { panels, half_thickness: geom.film_top() })
    }

    pub fn panel_count(&self) -> usize {
        self.panels.len()
    }

    pub fn net_current(&self) -> f64 {
        self.panels.iter().map(|p| p.current).sum()
    }

    /// (B_y, B_z) in tesla at (y, z) for 1 A on the centre conductor.
    pub fn field(&self, y: f64, z: f64) -> (f64, f64) {
        let t = self.half_thickness;
        let mut by = 0.0;
        let mut bz = 0.0;
        for p in &self.panels {
            let (dy, dz) = panel_field(p, t, y, z);
            by += dy;
            bz += dz;
        }
        (by, bz)
    }
}

/// Field of one uniformly filled rectangular panel.
fn panel_field(p: &Panel, t: f64, y: f64, z: f64) -> (f64, f64) {
    let width = p.y1 - p.y0;
    let size = width.max(2.0 * t);
    let u = y - 0.5 * (p.y0 + p.y1);
    let r2 = u * u + z * z;
    let pref = MU0 * p.current / (2.0 * PI);
    if r2 > (FILAMENT_DISTANCE * size).powi(2) {
        return (-pref * z / r2, pref * u / r2);
    }
    let density = pref / (width * 2.0 * t);
    let (u0, u1) = (y - p.y1, y - p.y0);
    let (v0, v1) = (z - t, z + t);
    let corner = |f: fn(f64, f64) -> f64| f(u1, v1) - f(u0, v1) - f(u1, v0) + f(u0, v0);
    (-density * corner(prim_v), density * corner(prim_u))
}

/// Antiderivative of u/(u² + v²) in u and v.
fn prim_u(u: f64, v: f64) -> f64 {
    let r2 = u * u + v * v;
    let log_term = if r2 > 0.0 { 0.5 * v * r2.ln() } else { 0.0 };
    let atan_term = if u != 0.0 { u * (v / u).atan() } else { 0.0 };
    log_term + atan_term
}

/// Antiderivative of v/(u² + v²) in u and v.
fn prim_v(u: f64, v: f64) -> f64 {
    prim_u(v, u)
}

/// Graded rectilinear grid for the cross-section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    /// Half width of the grid in y (m).
    pub lateral_half_extent: f64,
    /// Height of the grid above the film centre (m).
    pub height: f64,
    /// Node spacing at conductor edges and at the film (m).
    pub min_step: f64,
    /// Largest node spacing (m).
    pub max_step: f64,
    /// Spacing grows by this fraction of the distance to the nearest edge.
    pub growth: f64,
    /// Current panels per conductor.
    pub panels: usize,
    pub profile: CurrentProfile,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lateral_half_extent: 250e-6,
            height: 250e-6,
            min_step: 20e-9,
            max_step: 1e-6,
            growth: 0.05,
            panels: 64,
            profile: CurrentProfile::Uniform,
        }
    }
}

impl GridSpec {
    /// Same extent with all steps halved and twice the panels.
    pub fn refined(&self) -> Self {
        Self {
            min_step: 0.5 * self.min_step,
            max_step: 0.5 * self.max_step,
            growth: 0.5 * self.growth,
            panels: 2 * self.panels,
            ..*self
        }
    }

    pub fn coarsened(&self) -> Self {
        Self {
            min_step: 2.0 * self.min_step,
            max_step: 2.0 * self.max_step,
            growth: 2.0 * self.growth,
            panels: (self.panels / 2).max(4),
            ..*self
        }
    }

    fn validate(&self, geom: &CpwGeometry) -> Result<()> {
        let need = 5.0 * geom.span();
        if 2.0 * self.lateral_half_extent < need || self.height < need {
            return Err(Error::GridTooCoarse(format!(
                "grid must cover at least 5x the {:.3e} m CPW span laterally and vertically",
                geom.span()
            )));
        }
        if !(self.min_step > 0.0 && self.max_step >= self.min_step && self.growth > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "invalid grid steps: min {} max {} growth {}",
                self.min_step, self.max_step, self.growth
            )));
        }
        Ok(())
    }
}

/// Nodes on `[start, end]` whose spacing grows linearly with the distance
/// from the nearest attractor, capped at `max_step`. Breakpoints are hit
/// exactly.
pub(crate) fn graded_nodes(start: f64, end: f64, attractors: &[f64], breaks: &[f64], spec: &GridSpec) -> Vec<f64> {
    let mut stops: Vec<f64> = breaks.iter().copied().filter(|&b| b > start && b < end).collect();
    stops.push(end);
    stops.sort_by(f64::total_cmp);
    let step_at = |x: f64| {
        let d = attractors.iter().map(|a| (x - a).abs()).fold(f64::INFINITY, f64::min);
        (spec.min_step + spec.growth * d).min(spec.max_step)
    };
    let mut nodes = vec![start];
    let mut x = start;
    for stop in stops {
        while x < stop {
            // look ahead so spacing shrinks before reaching an attractor
            let h = step_at(x).min(step_at(x + step_at(x)));
            let next = x + h;
            x = if next > stop - 0.3 * h { stop } else { next };
            nodes.push(x);
        }
    }
    nodes
}

/// Normalized vacuum field on a rectilinear cross-section grid (z ≥ 0).
#[derive(Debug, Clone)]
pub struct FieldMap {
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    /// B_y at node (iz, iy), stored row-major by z.
    pub b_y: Vec<f64>,
    pub b_z: Vec<f64>,
    pub freq_hz: f64,
    pub geometry: CpwGeometry,
    pub spec: GridSpec,
    model: CpwCurrentModel,
    /// Amperes on the centre conductor that realise the vacuum field.
    scale: f64,
}

/// Trapezoid weights for a nonuniform 1-D grid.
fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 0..n.saturating_sub(1) {
        let h = 0.5 * (x[i + 1] - x[i]);
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

struct RawMap {
    y: Vec<f64>,
    z: Vec<f64>,
    b_y: Vec<f64>,
    b_z: Vec<f64>,
    model: CpwCurrentModel,
}

impl RawMap {
    fn build(geom: &CpwGeometry, spec: &GridSpec) -> Result<Self> {
        let model = CpwCurrentModel::new(geom, spec.profile, spec.panels)?;
        let a = geom.half_center();
        let b = geom.inner_ground_edge();
        let outer = b + geom.ground_width;
        let edges = [a, b, outer];
        let half = graded_nodes(0.0, spec.lateral_half_extent, &edges, &edges, spec);
        let mut y: Vec<f64> = half.iter().skip(1).rev().map(|v| -v).collect();
        y.extend_from_slice(&half);
        let film = geom.film_top();
        let z = graded_nodes(0.0, spec.height, &[film], &[film], spec);
        let rows: Vec<Vec<(f64, f64)>> =
            z.par_iter().map(|&zz| y.iter().map(|&yy| model.field(yy, zz)).collect()).collect();
        let mut b_y = Vec::with_capacity(y.len() * z.len());
        let mut b_z = Vec::with_capacity(y.len() * z.len());
        for row in rows {
            for (by, bz) in row {
                b_y.push(by);
                b_z.push(bz);
            }
        }
        Ok(Self { y, z, b_y, b_z, model })
    }

    /// ∫ |B|² dA over the full plane (both half-planes, by symmetry).
    fn energy_integral(&self) -> f64 {
        let wy = trapezoid_weights(&self.y);
        let wz = trapezoid_weights(&self.z);
        let ny = self.y.len();
        let rows: Vec<f64> = (0..self.z.len())
            .map(|iz| {
                let terms: Vec<f64> = (0..ny)
                    .map(|iy| {
                        let k = iz * ny + iy;
                        wy[iy] * (self.b_y[k] * self.b_y[k] + self.b_z[k] * self.b_z[k])
                    })
                    .collect();
                wz[iz] * pairwise_sum(&terms)
            })
            .collect();
        2.0 * pairwise_sum(&rows)
    }
}

/// Vacuum magnetic field of the resonator mode in the CPW cross-section.
///
/// The map is built on `spec` and checked against a coarser grid; if the
/// two energy integrals differ by more than 0.5 % the grid is rejected.
pub fn b1_cross_section(geom: &CpwGeometry, freq_hz: f64, spec: &GridSpec) -> Result<FieldMap> {
    geom.validate()?;
    spec.validate(geom)?;
    if !(freq_hz > 0.0) {
        return Err(Error::InvalidParameter(format!("frequency must be positive, got {freq_hz}")));
    }
    let raw = RawMap::build(geom, spec)?;
    let energy = raw.energy_integral();
    let coarse = RawMap::build(geom, &spec.coarsened())?.energy_integral();
    let change = (energy - coarse).abs() / energy;
    if !(change < ENERGY_TOLERANCE) {
        return Err(Error::GridTooCoarse(format!(
            "energy integral changes by {:.3}% between grid levels",
            100.0 * change
        )));
    }
    Ok(FieldMap::from_raw(raw, energy, geom, spec, freq_hz))
}

impl FieldMap {
    fn from_raw(raw: RawMap, energy: f64, geom: &CpwGeometry, spec: &GridSpec, freq_hz: f64) -> Self {
        let target = vacuum_magnetic_energy(freq_hz);
        let per_amp2 = energy * 0.5 * geom.length / (2.0 * MU0);
        let scale = (target / per_amp2).sqrt();
        Self {
            b_y: raw.b_y.iter().map(|v| v * scale).collect(),
            b_z: raw.b_z.iter().map(|v| v * scale).collect(),
            y: raw.y,
            z: raw.z,
            freq_hz,
            geometry: *geom,
            spec: *spec,
            model: raw.model,
            scale,
        }
    }

    /// Centre-conductor current amplitude (A) of the normalized mode.
    pub fn current_amplitude(&self) -> f64 {
        self.scale
    }

    /// Exact normalized field from the current model, anywhere in the plane.
    pub fn field_at(&self, y: f64, z: f64) -> (f64, f64) {
        let (by, bz) = self.model.field(y, z);
        (self.scale * by, self.scale * bz)
    }

    pub fn y_range(&self) -> (f64, f64) {
        (self.y[0], *self.y.last().unwrap())
    }

    pub fn z_range(&self) -> (f64, f64) {
        (self.z[0], *self.z.last().unwrap())
    }

    pub fn contains(&self, y: f64, z: f64) -> bool {
        let (y0, y1) = self.y_range();
        let (z0, z1) = self.z_range();
        y >= y0 && y <= y1 && z >= z0 && z <= z1
    }

    pub fn node(&self, iy: usize, iz: usize) -> (f64, f64) {
        let k = iz * self.y.len() + iy;
        (self.b_y[k], self.b_z[k])
    }

    /// Bilinear interpolation of (B_y, B_z) between grid nodes.
    pub fn interpolate(&self, y: f64, z: f64) -> Result<(f64, f64)> {
        if !self.contains(y, z) {
            return Err(Error::OutOfDomain { y, z });
        }
        let (iy, ty) = locate(&self.y, y);
        let (iz, tz) = locate(&self.z, z);
        Ok(self.blend(iy, ty, iz, tz))
    }

    pub(crate) fn blend(&self, iy: usize, ty: f64, iz: usize, tz: f64) -> (f64, f64) {
        let ny = self.y.len();
        let k00 = iz * ny + iy;
        let k01 = k00 + 1;
        let k10 = k00 + ny;
        let k11 = k10 + 1;
        let mix =
            |v: &[f64]| (1.0 - tz) * ((1.0 - ty) * v[k00] + ty * v[k01]) + tz * ((1.0 - ty) * v[k10] + ty * v[k11]);
        (mix(&self.b_y), mix(&self.b_z))
    }

    /// (1/2μ₀)·(l/2)·∫|B|² dA on the stored grid (J). Equals ħω_r/4 by
    /// construction.
    pub fn stored_energy(&self) -> f64 {
        let raw = RawMap {
            y: self.y.clone(),
            z: self.z.clone(),
            b_y: self.b_y.clone(),
            b_z: self.b_z.clone(),
            model: self.model.clone(),
        };
        raw.energy_integral() * 0.5 * self.geometry.length / (2.0 * MU0)
    }

    /// Magnetic energy of the normalized field recomputed on a different
    /// grid with the exact field model (J).
    pub fn energy_on_grid(&self, spec: &GridSpec) -> Result<f64> {
        spec.validate(&self.geometry)?;
        let raw =
            RawMap::build(&self.geometry, &GridSpec { panels: self.spec.panels, profile: self.spec.profile, ..*spec })?;
        Ok(raw.energy_integral() * self.scale * self.scale * 0.5 * self.geometry.length / (2.0 * MU0))
    }

    /// CSV export with columns y_m, z_m, b_y_tesla, b_z_tesla.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("y_m,z_m,b_y_tesla,b_z_tesla\n");
        for (iz, z) in self.z.iter().enumerate() {
            for (iy, y) in self.y.iter().enumerate() {
                let (by, bz) = self.node(iy, iz);
                out.push_str(&format!("{y},{z},{by},{bz}\n"));
            }
        }
        out
    }
}

/// Magnetic share of the zero-point energy, ħω_r/4 (J).
pub fn vacuum_magnetic_energy(freq_hz: f64) -> f64 {
    0.25 * HBAR * 2.0 * PI * freq_hz
}

/// Cell index and fractional position of `x` in the sorted `nodes`.
pub(crate) fn locate(nodes: &[f64], x: f64) -> (usize, f64) {
    let n = nodes.len();
    let i = match nodes.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) => i.min(n - 2),
        Err(i) => i.saturating_sub(1).min(n - 2),
    };
    let t = (x - nodes[i]) / (nodes[i + 1] - nodes[i]);
    (i, t.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panel_closed_form_matches_filament_quadrature() {
        let p = Panel { y0: -1e-6, y1: 2e-6, current: 1.0 };
        let t = 0.5e-6;
        let (gx, gw) = gauss_legendre(40);
        for (y, z) in [(5e-6, 3e-6), (0.5e-6, 1.0e-6), (-4e-6, -2e-6)] {
            let (mut by, mut bz) = (0.0, 0.0);
            for (xi, wi) in gx.iter().zip(&gw) {
                for (xj, wj) in gx.iter().zip(&gw) {
                    let ys = 0.5e-6 + 1.5e-6 * xi;
                    let zs = t * xj;
                    let w = wi * wj / 4.0;
                    let (u, v) = (y - ys, z - zs);
                    let r2 = u * u + v * v;
                    by += -w * MU0 / (2.0 * PI) * v / r2;
                    bz += w * MU0 / (2.0 * PI) * u / r2;
                }
            }
            let (cy, cz) = panel_field(&p, t, y, z);
            assert!((cy - by).abs() < 1e-9 * by.hypot(bz), "{cy} vs {by}");
            assert!((cz - bz).abs() < 1e-9 * by.hypot(bz), "{cz} vs {bz}");
        }
    }

    #[test]
    fn field_inside_panel_is_finite() {
        let p = Panel { y0: 0.0, y1: 1e-6, current: 1.0 };
        let (by, bz) = panel_field(&p, 1e-7, 0.0, 0.0);
        assert!(by.is_finite() && bz.is_finite());
    }

    #[test]
    fn current_model_has_zero_net_current() {
        for profile in [CurrentProfile::Uniform, CurrentProfile::EdgePeaked] {
            let m = CpwCurrentModel::new(&CpwGeometry::default(), profile, 32).unwrap();
            assert!(m.net_current().abs() < 1e-12);
            assert_eq!(m.panel_count(), 96);
        }
    }

    #[test]
    fn graded_nodes_hit_breakpoints() {
        let spec = GridSpec::default();
        let nodes = graded_nodes(0.0, 50e-6, &[10e-6, 22e-6], &[10e-6, 22e-6], &spec);
        assert!(nodes.contains(&10e-6) && nodes.contains(&22e-6));
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(*nodes.last().unwrap(), 50e-6);
    }

    #[test]
    fn locate_interior_and_end() {
        let nodes = [0.0, 1.0, 3.0];
        assert_eq!(locate(&nodes, 2.0), (1, 0.5));
        assert_eq!(locate(&nodes, 3.0), (1, 1.0));
        assert_eq!(locate(&nodes, 0.0), (0, 0.0));
    }

    #[test]
    fn undersized_grid_rejected() {
        let spec = GridSpec { lateral_half_extent: 50e-6, ..GridSpec::default() };
        let err = b1_cross_section(&CpwGeometry::default(), 4.931e9, &spec).unwrap_err();
        assert!(matches!(err, Error::GridTooCoarse(_)));
    }
}
