//! Transmission maps |S21|²(B₀, f) and their CSV form.
//!
//! The CSV layout is long format with optional `#` metadata lines:
//!
//! ```text
//! # temperature_K=0.05
//! # power_dBm=-134
//! # mode_index=1
//! b0_tesla,freq_hz,s21_power
//! 0.174,4.925e9,0.0123
//! ...
//! ```
//!
//! Rows run over frequency fastest. The last column may instead be `s21_db`
//! (10·log₁₀ of the linear power). Numbers are written in the shortest
//! decimal form that round-trips.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transmission::{transmission_map, TransmissionModelParams};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub temperature_k: Option<f64>,
    pub power_dbm: Option<f64>,
    pub mode_index: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldSweep {
    pub b_grid: Vec<f64>,
    pub freq_grid: Vec<f64>,
    /// One row per field value, one column per frequency.
    pub power: Vec<Vec<f64>>,
    pub metadata: SweepMetadata,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    /// Gaussian noise with σ = level·max(power); results are clipped at 0.
    #[default]
    Additive,
    /// Each value multiplied by (1 + level·n), n standard normal.
    Multiplicative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(default)]
    pub model: NoiseModel,
    pub level: f64,
    pub seed: u64,
}

impl NoiseSpec {
    /// Adds noise in row-major order from a ChaCha8 stream seeded with
    /// `seed`, so the result depends only on the seed and the data.
    pub fn apply(&self, power: &mut [Vec<f64>]) -> Result<()> {
        if !(self.level >= 0.0) {
            return Err(Error::InvalidParameter(format!("noise level must be non-negative, got {}", self.level)));
        }
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let peak = power.iter().flatten().copied().fold(0.0, f64::max);
        for row in power.iter_mut() {
            for v in row.iter_mut() {
                let n: f64 = normal.sample(&mut rng);
                *v = match self.model {
                    NoiseModel::Additive => (*v + self.level * peak * n).max(0.0),
                    NoiseModel::Multiplicative => *v * (1.0 + self.level * n),
                };
            }
        }
        Ok(())
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

impl FieldSweep {
    /// Forward-simulated map from the transmission model.
    pub fn simulate(
        params: &TransmissionModelParams,
        b_grid: Vec<f64>,
        freq_grid: Vec<f64>,
        metadata: SweepMetadata,
    ) -> Result<Self> {
        let power = transmission_map(params, &b_grid, &freq_grid)?;
        let sweep = Self { b_grid, freq_grid, power, metadata };
        sweep.validate()?;
        Ok(sweep)
    }

    pub fn validate(&self) -> Result<()> {
        let schema = |message: String| Err(Error::Schema { line: 0, message });
        if self.b_grid.is_empty() || self.freq_grid.is_empty() {
            return schema("field and frequency grids must be non-empty".into());
        }
        if !strictly_increasing(&self.b_grid) {
            return schema("field grid must be strictly increasing".into());
        }
        if !strictly_increasing(&self.freq_grid) {
            return schema("frequency grid must be strictly increasing".into());
        }
        if self.power.len() != self.b_grid.len() {
            return schema(format!(
                "power has {} rows but the field grid has {} points",
                self.power.len(),
                self.b_grid.len()
            ));
        }
        for (i, row) in self.power.iter().enumerate() {
            if row.len() != self.freq_grid.len() {
                return schema(format!(
                    "power row {i} has {} values but the frequency grid has {}",
                    row.len(),
                    self.freq_grid.len()
                ));
            }
            if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return schema(format!("power row {i} contains invalid value {v}; expected finite and >= 0"));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self, db: bool) -> String {
        let mut out = String::new();
        if let Some(t) = self.metadata.temperature_k {
            out.push_str(&format!("# temperature_K={t}\n"));
        }
        if let Some(p) = self.metadata.power_dbm {
            out.push_str(&format!("# power_dBm={p}\n"));
        }
        if let Some(m) = self.metadata.mode_index {
            out.push_str(&format!("# mode_index={m}\n"));
        }
        out.push_str(if db { "b0_tesla,freq_hz,s21_db\n" } else { "b0_tesla,freq_hz,s21_power\n" });
        for (b, row) in self.b_grid.iter().zip(&self.power) {
            for (f, p) in self.freq_grid.iter().zip(row) {
                let v = if db { 10.0 * p.log10() } else { *p };
                out.push_str(&format!("{b},{f},{v}\n"));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut metadata = SweepMetadata::default();
        let mut header_line = None;
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let Some(meta) = trimmed.strip_prefix('#') else {
                header_line = Some(line_no);
                break;
            };
            let Some((key, value)) = meta.split_once('=').or_else(|| meta.split_once(':')) else {
                continue;
            };
            let (key, value) = (key.trim(), value.trim());
            let bad =
                |what: &str| Error::Schema { line: line_no, message: format!("{key}: expected {what}, got '{value}'") };
            match key {
                "temperature_K" => metadata.temperature_k = Some(value.parse().map_err(|_| bad("a number"))?),
                "power_dBm" => metadata.power_dbm = Some(value.parse().map_err(|_| bad("a number"))?),
                "mode_index" => metadata.mode_index = Some(value.parse().map_err(|_| bad("an integer"))?),
                _ => {}
            }
        }
        let header_line = header_line.ok_or(Error::Schema { line: 0, message: "missing column header".into() })?;

        let mut reader =
            csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers =
            reader.headers().map_err(|e| Error::Schema { line: header_line, message: e.to_string() })?.clone();
        let names: Vec<&str> = headers.iter().collect();
        let db = match names.as_slice() {
            ["b0_tesla", "freq_hz", "s21_power"] => false,
            ["b0_tesla", "freq_hz", "s21_db"] => true,
            _ => {
                return Err(Error::Schema {
                    line: header_line,
                    message: format!(
                        "expected columns b0_tesla,freq_hz,s21_power (or s21_db), got {}",
                        names.join(",")
                    ),
                })
            }
        };

        let mut b_grid: Vec<f64> = Vec::new();
        let mut freq_grid: Vec<f64> = Vec::new();
        let mut power: Vec<Vec<f64>> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Schema {
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let num = |i: usize| -> Result<f64> {
                let field = record.get(i).unwrap_or("");
                field.parse::<f64>().map_err(|_| Error::Schema {
                    line,
                    message: format!("column {} is not a number: '{field}'", names[i]),
                })
            };
            let (b, f, raw) = (num(0)?, num(1)?, num(2)?);
            let p = if db { 10f64.powf(raw / 10.0) } else { raw };
            if !(p.is_finite() && p >= 0.0) || !b.is_finite() || !f.is_finite() {
                return Err(Error::Schema {
                    line,
                    message: format!("invalid value (b0 {b}, freq {f}, power {raw}); expected finite, power >= 0"),
                });
            }
            if b_grid.last() != Some(&b) {
                if let Some(&last) = b_grid.last() {
                    if b <= last {
                        return Err(Error::Schema {
                            line,
                            message: format!("field {b} T does not increase after {last} T"),
                        });
                    }
                    if power.last().map(Vec::len) != Some(freq_grid.len()) {
                        return Err(Error::Schema {
                            line,
                            message: format!(
                                "field {last} T has {} frequency points, expected {}",
                                power.last().map_or(0, Vec::len),
                                freq_grid.len()
                            ),
                        });
                    }
                }
                b_grid.push(b);
                power.push(Vec::new());
            }
            let row = power.last_mut().expect("row pushed above");
            let k = row.len();
            if b_grid.len() == 1 {
                if let Some(&prev) = freq_grid.last() {
                    if f <= prev {
                        return Err(Error::Schema {
                            line,
                            message: format!("frequency {f} Hz does not increase after {prev} Hz"),
                        });
                    }
                }
                freq_grid.push(f);
            } else if freq_grid.get(k) != Some(&f) {
                return Err(Error::Schema {
                    line,
                    message: format!("frequency {f} Hz does not match grid point {k} of the first field row"),
                });
            }
            row.push(p);
        }
        if let Some(last) = power.last() {
            if last.len() != freq_grid.len() {
                return Err(Error::Schema {
                    line: 0,
                    message: format!(
                        "last field row has {} frequency points, expected {}",
                        last.len(),
                        freq_grid.len()
                    ),
                });
            }
        }
        let sweep = Self { b_grid, freq_grid, power, metadata };
        sweep.validate()?;
        Ok(sweep)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> FieldSweep {
        FieldSweep {
            b_grid: vec![0.17, 0.18],
            freq_grid: vec![4.9e9, 4.95e9, 5.0e9],
            power: vec![vec![0.1, 0.2, 0.1], vec![0.05, 0.4, 1e-3]],
            metadata: SweepMetadata { temperature_k: Some(0.05), power_dbm: Some(-134.0), mode_index: Some(1) },
        }
    }

    #[test]
    fn csv_roundtrip_is_exact() {
        let s = small();
        assert_eq!(FieldSweep::from_csv(&s.to_csv(false)).unwrap(), s);
        let back = FieldSweep::from_csv(&s.to_csv(true)).unwrap();
        for (a, b) in back.power.iter().flatten().zip(s.power.iter().flatten()) {
            assert!((a / b - 1.0).abs() < 1e-14);
        }
        assert_eq!(back.metadata, s.metadata);
    }

    #[test]
    fn schema_errors_point_at_lines() {
        let bad_nan = "# temperature_K=0.05\nb0_tesla,freq_hz,s21_power\n0.1,1,0.5\n0.1,2,NaN\n";
        assert!(matches!(FieldSweep::from_csv(bad_nan), Err(Error::Schema { line: 4, .. })));
        let bad_order = "b0_tesla,freq_hz,s21_power\n0.1,2,0.5\n0.1,1,0.5\n";
        assert!(matches!(FieldSweep::from_csv(bad_order), Err(Error::Schema { line: 3, .. })));
        let bad_field = "b0_tesla,freq_hz,s21_power\n0.2,1,0.5\n0.1,1,0.5\n";
        assert!(matches!(FieldSweep::from_csv(bad_field), Err(Error::Schema { line: 3, .. })));
        let ragged = "b0_tesla,freq_hz,s21_power\n0.1,1,0.5\n0.1,2,0.5\n0.2,1,0.5\n0.3,1,0.5\n";
        assert!(matches!(FieldSweep::from_csv(ragged), Err(Error::Schema { line: 5, .. })));
        let header = "b,f,p\n0.1,1,0.5\n";
        assert!(matches!(FieldSweep::from_csv(header), Err(Error::Schema { line: 1, .. })));
        let mut s = small();
        s.power[1].pop();
        assert!(matches!(s.validate(), Err(Error::Schema { .. })));
    }

    #[test]
    fn noise_is_seeded() {
        let spec = NoiseSpec { model: NoiseModel::Multiplicative, level: 0.01, seed: 7 };
        let (mut a, mut b) = (small().power, small().power);
        spec.apply(&mut a).unwrap();
        spec.apply(&mut b).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, small().power);
        let mut c = small().power;
        NoiseSpec { seed: 8, ..spec }.apply(&mut c).unwrap();
        assert_ne!(a, c);
    }
}
