use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cross-section and length of the coplanar waveguide resonator.
///
/// The film is centred on z = 0, so its top surface sits at z = t/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CpwGeometry {
    /// Centre conductor width (m).
    pub center_width: f64,
    /// Gap between centre conductor and ground plane (m).
    pub gap_width: f64,
    /// Film thickness (m).
    pub film_thickness: f64,
    /// Resonator length l (m).
    pub length: f64,
    /// Mode index: 0 is the fundamental, 1 the first harmonic.
    pub mode_index: u32,
    /// Width of each ground plane carrying return current (m).
    pub ground_width: f64,
}

impl Default for CpwGeometry {
    fn default() -> Self {
        Self {
            center_width: 20e-6,
            gap_width: 12e-6,
            film_thickness: 150e-9,
            length: 23e-3,
            mode_index: 1,
            ground_width: 200e-6,
        }
    }
}

pub const MAX_MODE_INDEX: u32 = 16;

impl CpwGeometry {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("center_width", self.center_width),
            ("gap_width", self.gap_width),
            ("film_thickness", self.film_thickness),
            ("length", self.length),
            ("ground_width", self.ground_width),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if self.mode_index > MAX_MODE_INDEX {
            return Err(Error::InvalidParameter(format!(
                "mode index {} outside supported range 0..={MAX_MODE_INDEX}",
                self.mode_index
            )));
        }
        Ok(())
    }

    pub fn half_center(&self) -> f64 {
        0.5 * self.center_width
    }

    /// Distance from the axis to the inner ground-plane edge.
    pub fn inner_ground_edge(&self) -> f64 {
        self.half_center() + self.gap_width
    }

    /// Full width from ground edge to ground edge (centre plus both gaps).
    pub fn span(&self) -> f64 {
        self.center_width + 2.0 * self.gap_width
    }

    pub fn film_top(&self) -> f64 {
        0.5 * self.film_thickness
    }

    /// Number of half wavelengths along the resonator.
    pub fn mode_number(&self) -> u32 {
        self.mode_index + 1
    }

    /// Longitudinal standing-wave wavenumber mπ/l of the current.
    pub fn wavenumber(&self) -> f64 {
        self.mode_number() as f64 * std::f64::consts::PI / self.length
    }

    /// ∫ sin²(kx) dx over `[x0, x1]`, exact.
    pub fn sin2_integral(&self, x0: f64, x1: f64) -> f64 {
        let k = self.wavenumber();
        0.5 * (x1 - x0) - ((2.0 * k * x1).sin() - (2.0 * k * x0).sin()) / (4.0 * k)
    }
}

/// The spin-doped crystal lying on top of the resonator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrystalStack {
    /// Crystal thickness (m).
    pub thickness: f64,
    /// Gap d between film surface and crystal (m).
    pub standoff_gap: f64,
    /// Lateral width of the crystal, centred on the resonator (m).
    pub lateral_extent: f64,
    /// Donor density ρ (m⁻³).
    pub spin_density: f64,
    /// Fraction of the donors contributing to one ESR transition.
    pub density_fraction_per_transition: f64,
}

impl Default for CrystalStack {
    fn default() -> Self {
        Self {
            thickness: 20e-6,
            standoff_gap: 12.5e-6,
            lateral_extent: 500e-6,
            spin_density: 1e23,
            density_fraction_per_transition: 0.5,
        }
    }
}

impl CrystalStack {
    pub fn validate(&self) -> Result<()> {
        if !(self.thickness > 0.0) {
            return Err(Error::InvalidParameter(format!("crystal thickness must be positive, got {}", self.thickness)));
        }
        if !(self.standoff_gap >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "standoff gap must be non-negative, got {}",
                self.standoff_gap
            )));
        }
        if !(self.lateral_extent > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "lateral extent must be positive, got {}",
                self.lateral_extent
            )));
        }
        if !(self.spin_density >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "spin density must be non-negative, got {}",
                self.spin_density
            )));
        }
        let f = self.density_fraction_per_transition;
        if !(f > 0.0 && f <= 1.0) {
            return Err(Error::InvalidParameter(format!("density fraction must lie in (0, 1], got {f}")));
        }
        Ok(())
    }

    /// Density of spins addressed by one transition (m⁻³).
    pub fn transition_density(&self) -> f64 {
        self.spin_density * self.density_fraction_per_transition
    }

    /// Lowest and highest z of the crystal for a given geometry.
    pub fn z_range(&self, geom: &CpwGeometry) -> (f64, f64) {
        let z0 = geom.film_top() + self.standoff_gap;
        (z0, z0 + self.thickness)
    }

    /// ρ^(−1/3): the cubic lattice constant that conserves the spin count.
    pub fn cubic_lattice_constant(&self) -> f64 {
        self.spin_density.powf(-1.0 / 3.0)
    }

    /// Twice the Wigner–Seitz radius, 2·(3/(4πρ))^(1/3).
    pub fn mean_interparticle_distance(&self) -> f64 {
        2.0 * (3.0 / (4.0 * std::f64::consts::PI * self.spin_density)).powf(1.0 / 3.0)
    }
}

/// Segments along the resonator where the centre line is parallel to B₀
/// (S = 1); S = 0 elsewhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrientationMask {
    pub intervals: Vec<(f64, f64)>,
}

impl OrientationMask {
    pub fn new(mut intervals: Vec<(f64, f64)>, length: f64) -> Result<Self> {
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mask = Self { intervals };
        mask.validate(length)?;
        Ok(mask)
    }

    pub fn full(length: f64) -> Self {
        Self { intervals: vec![(0.0, length)] }
    }

    pub fn empty() -> Self {
        Self { intervals: Vec::new() }
    }

    /// `segments` equal parallel sections, each centred in one of
    /// `segments` equal cells, covering `fraction` of the length.
    pub fn periodic(length: f64, segments: usize, fraction: f64) -> Result<Self> {
        if segments == 0 || !(fraction > 0.0 && fraction <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "periodic mask needs segments > 0 and fraction in (0, 1], got {segments}, {fraction}"
            )));
        }
        let cell = length / segments as f64;
        let seg = cell * fraction;
        let intervals = (0..segments)
            .map(|i| {
                let mid = (i as f64 + 0.5) * cell;
                ((mid - 0.5 * seg).max(0.0), (mid + 0.5 * seg).min(length))
            })
            .collect();
        Self::new(intervals, length)
    }

    pub fn validate(&self, length: f64) -> Result<()> {
        let mut last_end = f64::NEG_INFINITY;
        for &(a, b) in &self.intervals {
            if !(a >= 0.0 && b <= length && a < b) {
                return Err(Error::InvalidParameter(format!(
                    "mask interval [{a}, {b}] must satisfy 0 <= a < b <= {length}"
                )));
            }
            if a < last_end {
                return Err(Error::InvalidParameter(format!("mask interval [{a}, {b}] overlaps the previous one")));
            }
            last_end = b;
        }
        Ok(())
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|&(a, b)| x >= a && x < b)
    }

    pub fn masked_length(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn parallel_fraction(&self, length: f64) -> f64 {
        self.masked_length() / length
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sin2_integral_over_full_length_is_half_length() {
        let g = CpwGeometry::default();
        assert!((g.sin2_integral(0.0, g.length) - 0.5 * g.length).abs() < 1e-15);
    }

    #[test]
    fn periodic_mask_fraction() {
        let m = OrientationMask::periodic(23e-3, 10, 0.5).unwrap();
        assert!((m.parallel_fraction(23e-3) - 0.5).abs() < 1e-12);
        assert!(m.contains(1.15e-3));
        assert!(!m.contains(0.1e-3));
    }

    #[test]
    fn overlapping_mask_rejected() {
        assert!(OrientationMask::new(vec![(0.0, 2.0), (1.0, 3.0)], 5.0).is_err());
        assert!(OrientationMask::new(vec![(0.0, 6.0)], 5.0).is_err());
    }

    #[test]
    fn lattice_constants_for_1e17_per_cm3() {
        let s = CrystalStack::default();
        assert!((s.cubic_lattice_constant() - 21.544e-9).abs() < 0.01e-9);
        assert!((s.mean_interparticle_distance() - 26.73e-9).abs() < 0.01e-9);
    }
}
