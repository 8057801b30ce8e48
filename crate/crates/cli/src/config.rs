//! TOML run configuration.
//!
//! Every block is optional; missing blocks fall back to the reference
//! device (4.931 GHz first harmonic, two donor lines at 50 mK). See
//! `configs/` for the shipped scenarios.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use spincav_core::coupling::{CpwGeometry, CrystalStack, GridSpec, OrientationMask};
use spincav_core::fit::PolarizationField;
use spincav_core::numeric::linspace;
use spincav_core::spin::{SpinSystemParams, TransitionId};
use spincav_core::sweep::{NoiseModel, NoiseSpec, SweepMetadata};
use spincav_core::transmission::{
    defect_resonances, Detuning, ResonatorParams, SpinResonance, TransmissionModelParams, REFERENCE_FREQ_HZ,
    REFERENCE_KAPPA0_HZ, REFERENCE_Q_EXT,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonatorConfig {
    pub freq_hz: f64,
    pub kappa0_hz: f64,
    /// External coupling rate; derived from `q_ext` when absent.
    pub kappa_c_hz: Option<f64>,
    pub q_ext: Option<f64>,
}

impl Default for ResonatorConfig {
    fn default() -> Self {
        Self {
            freq_hz: REFERENCE_FREQ_HZ,
            kappa0_hz: REFERENCE_KAPPA0_HZ,
            kappa_c_hz: None,
            q_ext: Some(REFERENCE_Q_EXT),
        }
    }
}

impl ResonatorConfig {
    pub fn params(&self) -> Result<ResonatorParams, ConfigError> {
        let kappa_c_hz = match (self.kappa_c_hz, self.q_ext) {
            (Some(k), None) => k,
            (None, Some(q)) => self.freq_hz / (2.0 * q),
            (Some(_), Some(_)) => return Err(invalid("resonator: give kappa_c_hz or q_ext, not both")),
            (None, None) => return Err(invalid("resonator: kappa_c_hz or q_ext is required")),
        };
        let p = ResonatorParams { freq_hz: self.freq_hz, kappa0_hz: self.kappa0_hz, kappa_c_hz };
        p.validate().map_err(|e| invalid(format!("resonator: {e}")))?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetuningKind {
    #[default]
    Linear,
    BreitRabi,
}

/// One spin line. Either `b_res_tesla` or `transition` must be given; with
/// a transition the field is solved from the spin Hamiltonian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonanceConfig {
    pub label: Option<String>,
    pub transition: Option<TransitionId>,
    pub b_res_tesla: Option<f64>,
    pub gamma_hz: f64,
    pub g_eff_hz: f64,
    /// Defaults to the electron g-factor of the spin block.
    pub g_factor: Option<f64>,
    #[serde(default)]
    pub detuning: DetuningKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub b_min_tesla: f64,
    pub b_max_tesla: f64,
    pub b_steps: usize,
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub f_steps: usize,
}

impl SweepConfig {
    pub fn grids(&self) -> Result<(Vec<f64>, Vec<f64>), ConfigError> {
        if !(self.b_max_tesla > self.b_min_tesla) || self.b_steps < 2 {
            return Err(invalid("sweep: need b_max_tesla > b_min_tesla and b_steps >= 2"));
        }
        if !(self.f_max_hz > self.f_min_hz) || self.f_steps < 2 {
            return Err(invalid("sweep: need f_max_hz > f_min_hz and f_steps >= 2"));
        }
        Ok((
            linspace(self.b_min_tesla, self.b_max_tesla, self.b_steps),
            linspace(self.f_min_hz, self.f_max_hz, self.f_steps),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    #[serde(default)]
    pub model: NoiseModel,
    pub level: f64,
    pub seed: Option<u64>,
}

impl NoiseConfig {
    pub fn spec(&self) -> Result<Option<NoiseSpec>, ConfigError> {
        if !(self.level >= 0.0) {
            return Err(invalid(format!("noise: level must be non-negative, got {}", self.level)));
        }
        if self.level == 0.0 {
            return Ok(None);
        }
        let seed = self.seed.ok_or_else(|| invalid("noise: seed is required when level > 0"))?;
        Ok(Some(NoiseSpec { model: self.model, level: self.level, seed }))
    }
}

/// Field at which the temperature model evaluates the polarization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum FieldChoice {
    /// Each line at its own resonance field for the resonator frequency.
    #[default]
    Resonant,
    Fixed {
        tesla: f64,
    },
}

/// The coupling of one line at one temperature, used to set g_full.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub temperature_k: f64,
    pub transition: TransitionId,
    pub g_eff_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemperatureConfig {
    pub temperatures_k: Vec<f64>,
    #[serde(default)]
    pub field: FieldChoice,
    /// Fully polarized coupling; alternatively set through `calibration`.
    pub g_full_hz: Option<f64>,
    pub calibration: Option<Calibration>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
pub enum MaskConfig {
    Full,
    Periodic { segments: usize, fraction: f64 },
    Intervals { intervals_m: Vec<(f64, f64)> },
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig::Periodic { segments: 10, fraction: 0.5 }
    }
}

impl MaskConfig {
    pub fn mask(&self, length: f64) -> Result<OrientationMask, ConfigError> {
        let m = match self {
            MaskConfig::Full => Ok(OrientationMask::full(length)),
            MaskConfig::Periodic { segments, fraction } => OrientationMask::periodic(length, *segments, *fraction),
            MaskConfig::Intervals { intervals_m } => OrientationMask::new(intervals_m.clone(), length),
        };
        m.map_err(|e| invalid(format!("mask: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    /// Filling factor η of the analytic estimate.
    pub filling_factor: f64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self { filling_factor: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: String,
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub spin: SpinSystemParams,
    #[serde(default)]
    pub resonator: ResonatorConfig,
    #[serde(default = "default_resonances")]
    pub resonances: Vec<ResonanceConfig>,
    /// Appends the two weak defect lines at 175.5 and 176.3 mT.
    #[serde(default)]
    pub defect_lines: bool,
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub metadata: SweepMetadata,
    pub noise: Option<NoiseConfig>,
    pub temperature: Option<TemperatureConfig>,
    #[serde(default)]
    pub geometry: CpwGeometry,
    #[serde(default)]
    pub crystal: CrystalStack,
    #[serde(default)]
    pub mask: MaskConfig,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub coupling: CouplingConfig,
}

fn default_resonances() -> Vec<ResonanceConfig> {
    [("P LF", TransitionId::LowField, 1.38e6, 1.13e6), ("P HF", TransitionId::HighField, 1.40e6, 1.07e6)]
        .into_iter()
        .map(|(label, t, gamma_hz, g_eff_hz)| ResonanceConfig {
            label: Some(label.into()),
            transition: Some(t),
            b_res_tesla: None,
            gamma_hz,
            g_eff_hz,
            g_factor: None,
            detuning: DetuningKind::Linear,
        })
        .collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: "default".into(),
            output_dir: None,
            spin: SpinSystemParams::default(),
            resonator: ResonatorConfig::default(),
            resonances: default_resonances(),
            defect_lines: false,
            sweep: None,
            metadata: SweepMetadata::default(),
            noise: None,
            temperature: None,
            geometry: CpwGeometry::default(),
            crystal: CrystalStack::default(),
            mask: MaskConfig::default(),
            grid: GridSpec::default(),
            coupling: CouplingConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse { path: path.to_path_buf(), message },
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)
            .map_err(|e| ConfigError::Parse { path: PathBuf::from("<config>"), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.spin.validate().map_err(|e| invalid(format!("spin: {e}")))?;
        self.resonator.params()?;
        self.model()?;
        if let Some(s) = &self.sweep {
            s.grids()?;
        }
        if let Some(n) = &self.noise {
            n.spec()?;
        }
        if let Some(t) = &self.temperature {
            self.temperature_amplitude(t)?;
            if t.temperatures_k.is_empty() || t.temperatures_k.iter().any(|&v| !(v > 0.0)) {
                return Err(invalid("temperature: temperatures_k must be non-empty and positive"));
            }
            if !t.temperatures_k.windows(2).all(|w| w[1] > w[0]) {
                return Err(invalid("temperature: temperatures_k must be strictly increasing"));
            }
        }
        self.geometry.validate().map_err(|e| invalid(format!("geometry: {e}")))?;
        self.crystal.validate().map_err(|e| invalid(format!("crystal: {e}")))?;
        self.mask.mask(self.geometry.length)?;
        if !(self.coupling.filling_factor > 0.0 && self.coupling.filling_factor <= 1.0) {
            return Err(invalid("coupling: filling_factor must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Transmission model with every resonance field resolved.
    pub fn model(&self) -> Result<TransmissionModelParams, ConfigError> {
        let resonator = self.resonator.params()?;
        let resonances = self
            .resonances
            .iter()
            .enumerate()
            .map(|(i, r)| self.resonance(i, r, resonator.freq_hz))
            .collect::<Result<Vec<_>, _>>()?;
        let mut model = TransmissionModelParams::with_resonances(resonator, resonances);
        if self.defect_lines {
            model.resonances.extend(defect_resonances());
        }
        model.validate().map_err(|e| invalid(format!("resonances: {e}")))?;
        Ok(model)
    }

    fn resonance(&self, i: usize, r: &ResonanceConfig, freq_hz: f64) -> Result<SpinResonance, ConfigError> {
        let b_res = match (r.b_res_tesla, r.transition) {
            (Some(b), _) => b,
            (None, Some(t)) => {
                self.spin.resonance_field(freq_hz, t).map_err(|e| invalid(format!("resonance {i}: {e}")))?
            }
            (None, None) => return Err(invalid(format!("resonance {i}: give b_res_tesla or transition"))),
        };
        let detuning = match r.detuning {
            DetuningKind::Linear => Detuning::Linear,
            DetuningKind::BreitRabi => {
                let transition = r
                    .transition
                    .ok_or_else(|| invalid(format!("resonance {i}: breit-rabi detuning needs a transition")))?;
                Detuning::BreitRabi { spin: self.spin, transition }
            }
        };
        Ok(SpinResonance {
            b_res,
            gamma_hz: r.gamma_hz,
            g_eff_hz: r.g_eff_hz,
            g_factor: r.g_factor.unwrap_or(self.spin.g_e),
            detuning,
        })
    }

    /// Indices of the resonances tied to a donor transition.
    pub fn donor_lines(&self) -> Vec<usize> {
        self.resonances.iter().enumerate().filter(|(_, r)| r.transition.is_some()).map(|(i, _)| i).collect()
    }

    pub fn polarization_field(&self, t: &TemperatureConfig) -> PolarizationField {
        match t.field {
            FieldChoice::Resonant => PolarizationField::Resonant(self.resonator.freq_hz),
            FieldChoice::Fixed { tesla } => PolarizationField::Fixed(tesla),
        }
    }

    /// g_full of the temperature block, from `g_full_hz` or the calibration.
    pub fn temperature_amplitude(&self, t: &TemperatureConfig) -> Result<f64, ConfigError> {
        let g = match (t.g_full_hz, t.calibration) {
            (Some(g), None) => g,
            (None, Some(c)) => {
                let unit = spincav_core::fit::temperature_model(
                    1.0,
                    &self.spin,
                    self.polarization_field(t),
                    c.temperature_k,
                    c.transition,
                )
                .map_err(|e| invalid(format!("temperature calibration: {e}")))?;
                c.g_eff_hz / unit
            }
            _ => return Err(invalid("temperature: give exactly one of g_full_hz and calibration")),
        };
        if !(g > 0.0 && g.is_finite()) {
            return Err(invalid(format!("temperature: amplitude must be positive, got {g}")));
        }
        Ok(g)
    }
}
