use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use spincav_core::coupling::{
    analytic_g_eff, analytic_g_eff_per_transition, b1_cross_section, g_eff_continuum, g_eff_lattice_sum,
    OrientationMask,
};
use spincav_core::fit::{
    extract_kappa_vs_field, fit_inout_slice, fit_temperature_series, temperature_model, temperature_series_from_csv,
    temperature_series_to_csv, FitResult, InoutSpec, KappaRow, PolarizationField, TemperaturePoint,
};
use spincav_core::numeric::{linear_slope, linspace, logspace};
use spincav_core::spin::{SpinSystemParams, TransitionId};
use spincav_core::sweep::FieldSweep;
use spincav_core::transmission::{gamma_to_linewidth, TransmissionModelParams};

use crate::bundle::ResultBundle;
use crate::config::{RunConfig, TemperatureConfig};

#[derive(Debug, Parser)]
#[command(name = "spincav", version, about = "Spin ensemble to superconducting resonator coupling toolkit")]
pub struct Cli {
    /// Worker threads for parallel kernels (default: all cores). Results do
    /// not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Breit-Rabi level diagram: energies and transition frequencies vs field.
    Levels(LevelsArgs),
    /// Thermal polarization of both transitions on a log temperature grid.
    Polarization(PolarizationArgs),
    /// Forward-simulate the transmission map and temperature tables.
    Simulate(SimulateArgs),
    /// Fit measured or simulated data.
    Fit(FitArgs),
    /// Collective coupling estimate.
    Coupling(CouplingArgs),
}

#[derive(Debug, Args)]
pub struct LevelsArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Lowest field (T).
    #[arg(long, default_value_t = 0.0)]
    pub b_min: f64,
    /// Highest field (T).
    #[arg(long, default_value_t = 0.4)]
    pub b_max: f64,
    #[arg(long, default_value_t = 401)]
    pub steps: usize,
    /// Write the table to this file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PolarizationArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Lowest temperature (K).
    #[arg(long, default_value_t = 1e-3)]
    pub t_min: f64,
    /// Highest temperature (K).
    #[arg(long, default_value_t = 10.0)]
    pub t_max: f64,
    #[arg(long, default_value_t = 61)]
    pub points: usize,
    /// Static field (T).
    #[arg(long, default_value_t = 0.1765)]
    pub field: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (default: output_dir of the config, else out/<scenario>).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write |S21|² in dB instead of linear power.
    #[arg(long)]
    pub db: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitMode {
    /// Lorentzian linewidth κ for every field row of a sweep.
    LorentzianMap,
    /// Input-output model fit of single frequency slices.
    InoutSlice,
    /// g_eff(T) series against the thermal polarization model.
    Temperature,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Sweep CSV (lorentzian-map, inout-slice) or temperature series CSV.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub mode: FitMode,
    /// Model template, spin parameters and temperature field choice.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Slice fields (T) for inout-slice; the nearest sweep row is used.
    /// Default: the resonance field of every donor line.
    #[arg(long, value_delimiter = ',')]
    pub b0: Vec<f64>,
    /// Fit one amplitude per transition instead of a shared one.
    #[arg(long)]
    pub per_transition: bool,
    /// Output directory (default: output_dir of the config, else out/<scenario>-fit).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CouplingMethod {
    Analytic,
    Lattice,
    Continuum,
}

#[derive(Debug, Args)]
pub struct CouplingArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "continuum")]
    pub method: CouplingMethod,
    /// Standoff gaps d between film and crystal (µm); default from config.
    #[arg(long, value_delimiter = ',')]
    pub gap_um: Vec<f64>,
    /// Restrict the mask to [x0, x1] (m) along the resonator.
    #[arg(long, value_delimiter = ',')]
    pub section: Option<Vec<f64>>,
    /// Lattice constant (m); default ρ^(-1/3).
    #[arg(long)]
    pub lattice_constant: Option<f64>,
    /// Write coupling.json (with manifest) into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<()> {
    let work = move || match cli.command {
        Command::Levels(a) => cmd_levels(&a),
        Command::Polarization(a) => cmd_polarization(&a),
        Command::Simulate(a) => cmd_simulate(&a).map(|_| ()),
        Command::Fit(a) => cmd_fit(&a).map(|_| ()),
        Command::Coupling(a) => cmd_coupling(&a).map(|_| ()),
    };
    match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(work),
        None => work(),
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    Ok(match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn output_dir(explicit: Option<&Path>, cfg: &RunConfig, suffix: &str) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(format!("{}{suffix}", cfg.scenario)))
}

// ------------------------------------------------------------------ levels

pub fn levels_table(spin: &SpinSystemParams, b_min: f64, b_max: f64, steps: usize) -> Result<String> {
    if !(b_min >= 0.0 && b_max > b_min) || steps < 2 {
        bail!(crate::config::ConfigError::Invalid(format!(
            "need 0 <= b_min < b_max and steps >= 2, got [{b_min}, {b_max}] with {steps}"
        )));
    }
    let mut s = String::from("b0_tesla,e1_ghz,e2_ghz,e3_ghz,e4_ghz,nu_lf_hz,nu_hf_hz\n");
    for b in linspace(b_min, b_max, steps) {
        let e = spin.energy_levels(b).in_hz().map(|v| v / 1e9);
        let lf = spin.transition_frequency(b, TransitionId::LowField);
        let hf = spin.transition_frequency(b, TransitionId::HighField);
        s.push_str(&format!("{b},{},{},{},{},{lf},{hf}\n", e[0], e[1], e[2], e[3]));
    }
    Ok(s)
}

fn cmd_levels(a: &LevelsArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    emit(a.out.as_deref(), &levels_table(&cfg.spin, a.b_min, a.b_max, a.steps)?)
}

// ------------------------------------------------------------ polarization

pub fn polarization_table(
    spin: &SpinSystemParams,
    t_min: f64,
    t_max: f64,
    points: usize,
    field: f64,
) -> Result<String> {
    if !(t_min > 0.0 && t_max > t_min) || points < 2 {
        bail!(spincav_core::error::Error::InvalidTemperature(t_min.min(t_max)));
    }
    let mut s = String::from("temperature_K,p_lf,p_hf\n");
    for t in logspace(t_min, t_max, points) {
        let lf = spin.polarization(field, t, TransitionId::LowField)?;
        let hf = spin.polarization(field, t, TransitionId::HighField)?;
        s.push_str(&format!("{t},{lf},{hf}\n"));
    }
    Ok(s)
}

fn cmd_polarization(a: &PolarizationArgs) -> Result<()> {
    let cfg = load_config(a.config.as_deref())?;
    emit(a.out.as_deref(), &polarization_table(&cfg.spin, a.t_min, a.t_max, a.points, a.field)?)
}

// ---------------------------------------------------------------- simulate

/// Model parameters with units in the key names.
pub fn model_json(p: &TransmissionModelParams) -> Value {
    let resonances: Vec<Value> = p
        .resonances
        .iter()
        .map(|r| {
            json!({
                "b_res_tesla": r.b_res,
                "gamma_over_2pi_hz": r.gamma_hz,
                "g_eff_over_2pi_hz": r.g_eff_hz,
                "g_factor": r.g_factor,
                "linewidth_fwhm_tesla": gamma_to_linewidth(r.gamma_hz, r.g_factor),
            })
        })
        .collect();
    let q = p.resonator.q_factors().ok();
    json!({
        "omega_r_over_2pi_hz": p.resonator.freq_hz,
        "kappa0_over_2pi_hz": p.resonator.kappa0_hz,
        "kappa_c_over_2pi_hz": p.resonator.kappa_c_hz,
        "q_loaded": q.map(|q| q.loaded),
        "q_ext": q.map(|q| q.external),
        "q_int": q.map(|q| q.internal),
        "amplitude_scale": p.amplitude_scale,
        "background_offset": p.background_offset,
        "resonances": resonances,
    })
}

fn temperature_points(cfg: &RunConfig, t: &TemperatureConfig) -> Result<Vec<TemperaturePoint>> {
    let g_full = cfg.temperature_amplitude(t)?;
    let field = cfg.polarization_field(t);
    let mut out = Vec::new();
    for &temp in &t.temperatures_k {
        for tr in TransitionId::ALL {
            let g = temperature_model(g_full, &cfg.spin, field, temp, tr)?;
            out.push(TemperaturePoint { temperature_k: temp, transition: tr, g_eff_hz: g });
        }
    }
    Ok(out)
}

fn polarization_rows(cfg: &RunConfig, t: &TemperatureConfig) -> Result<String> {
    let field = cfg.polarization_field(t);
    let b_lf = field.field(&cfg.spin, TransitionId::LowField)?;
    let b_hf = field.field(&cfg.spin, TransitionId::HighField)?;
    let mut s = String::from("temperature_K,p_lf,p_hf,b_lf_tesla,b_hf_tesla\n");
    for &temp in &t.temperatures_k {
        let lf = cfg.spin.polarization(b_lf, temp, TransitionId::LowField)?;
        let hf = cfg.spin.polarization(b_hf, temp, TransitionId::HighField)?;
        s.push_str(&format!("{temp},{lf},{hf},{b_lf},{b_hf}\n"));
    }
    Ok(s)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<PathBuf> {
    let cfg = RunConfig::load(&a.config)?;
    let model = cfg.model()?;
    let dir = output_dir(a.out.as_deref(), &cfg, "");
    let mut bundle = ResultBundle::create(&dir, "simulate", &cfg.scenario)?;
    bundle.write_json("model.json", &model_json(&model))?;
    if let Some(sweep_cfg) = &cfg.sweep {
        let (b_grid, freq_grid) = sweep_cfg.grids()?;
        let mut sweep = FieldSweep::simulate(&model, b_grid, freq_grid, cfg.metadata)?;
        if let Some(noise) = cfg.noise.as_ref().map(|n| n.spec()).transpose()?.flatten() {
            noise.apply(&mut sweep.power)?;
        }
        bundle.write("sweep.csv", &sweep.to_csv(a.db))?;
    }
    if let Some(t) = &cfg.temperature {
        bundle.write("g_eff_vs_temperature.csv", &temperature_series_to_csv(&temperature_points(&cfg, t)?))?;
        bundle.write("polarization.csv", &polarization_rows(&cfg, t)?)?;
    }
    bundle.finish()?;
    Ok(dir)
}

// --------------------------------------------------------------------- fit

/// Parameter values and standard errors keyed by name.
pub fn fit_json(fit: &FitResult) -> Value {
    let mut params = Map::new();
    for p in &fit.parameters {
        params.insert(p.name.clone(), json!(p.value));
        params.insert(format!("{}_stderr", p.name), json!(p.stderr));
    }
    json!({
        "parameters": params,
        "status": fit.status,
        "iterations": fit.iterations,
        "residual_norm": fit.residual_norm,
        "n_data": fit.n_data,
    })
}

fn kappa_csv(rows: &[KappaRow]) -> String {
    let mut s = String::from("b0_tesla,kappa_over_2pi_hz,kappa_stderr_hz,center_hz,status,flag\n");
    for r in rows {
        let status = serde_json::to_value(r.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{status},\"{}\"\n",
            r.b0_tesla,
            r.kappa_over_2pi_hz,
            r.kappa_stderr_hz,
            r.center_hz,
            r.flag.replace('"', "'")
        ));
    }
    s
}

/// Rows a peak must dominate on each side.
const PEAK_HALF_WINDOW: usize = 3;
/// Required excess over the median κ, in units of the row scatter.
const PEAK_SIGMA: f64 = 5.0;
/// Required excess over the median κ, relative to it.
const PEAK_REL: f64 = 0.01;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Fields of the significant local maxima of κ(B₀), skipping flagged rows.
///
/// A row counts when it is the largest within ±[`PEAK_HALF_WINDOW`] rows and
/// stands above the median κ by [`PEAK_REL`] of the median and by
/// [`PEAK_SIGMA`] times the larger of its standard error and the robust
/// row-to-row scatter (MAD of successive differences). The fit standard
/// error alone underestimates the scatter between rows.
pub fn kappa_maxima(rows: &[KappaRow]) -> Vec<f64> {
    let ok: Vec<&KappaRow> = rows.iter().filter(|r| r.flag.is_empty()).collect();
    if ok.len() < 3 {
        return Vec::new();
    }
    let k = |j: usize| ok[j].kappa_over_2pi_hz;
    let base = median(ok.iter().map(|r| r.kappa_over_2pi_hz).collect());
    let scatter = 1.4826 * median((1..ok.len()).map(|i| (k(i) - k(i - 1)).abs()).collect()) / 2f64.sqrt();
    (0..ok.len())
        .filter(|&i| {
            let lo = i.saturating_sub(PEAK_HALF_WINDOW);
            let hi = (i + PEAK_HALF_WINDOW).min(ok.len() - 1);
            let dominant = (lo..=hi).all(|j| j == i || (if j < i { k(i) > k(j) } else { k(i) >= k(j) }));
            let excess = k(i) - base;
            dominant && excess > PEAK_SIGMA * ok[i].kappa_stderr_hz.max(scatter) && excess > PEAK_REL * base
        })
        .map(|i| ok[i].b0_tesla)
        .collect()
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn inout_report(cfg: &RunConfig, sweep: &FieldSweep, b0_list: &[f64]) -> Result<Value> {
    let template = cfg.model()?;
    let targets: Vec<f64> = if b0_list.is_empty() {
        cfg.donor_lines().iter().map(|&i| template.resonances[i].b_res).collect()
    } else {
        b0_list.to_vec()
    };
    if targets.is_empty() {
        bail!(crate::config::ConfigError::Invalid("no slice fields: pass --b0 or configure donor lines".into()));
    }
    let mut slices = Vec::new();
    for target in targets {
        let row = (0..sweep.b_grid.len())
            .min_by(|&i, &j| (sweep.b_grid[i] - target).abs().total_cmp(&(sweep.b_grid[j] - target).abs()))
            .context("empty sweep")?;
        let b0 = sweep.b_grid[row];
        let spec = InoutSpec::new(template.clone(), b0);
        let entry = match fit_inout_slice(&sweep.freq_grid, &sweep.power[row], &spec) {
            Ok(out) => {
                let q = out.q_factors;
                let fitted: Vec<Value> = spec
                    .free
                    .iter()
                    .filter_map(|p| match p {
                        spincav_core::fit::InoutParam::Gamma(n) => Some(*n),
                        _ => None,
                    })
                    .map(|n| {
                        let r = &out.model.resonances[n];
                        json!({
                            "index": n,
                            "cooperativity": out.cooperativities[n],
                            "linewidth_fwhm_tesla": gamma_to_linewidth(r.gamma_hz, r.g_factor),
                        })
                    })
                    .collect();
                let flag = match out.fit.status {
                    spincav_core::fit::FitStatus::Converged => String::new(),
                    s => format!("{s:?}"),
                };
                json!({
                    "target_tesla": target,
                    "b0_tesla": b0,
                    "fit": fit_json(&out.fit),
                    "fitted_resonances": fitted,
                    "cooperativities": out.cooperativities,
                    "q_loaded": q.map(|q| q.loaded),
                    "q_ext": q.map(|q| q.external),
                    "q_int": q.map(|q| q.internal),
                    "model": model_json(&out.model),
                    "flag": flag,
                })
            }
            Err(e) => json!({ "target_tesla": target, "b0_tesla": b0, "flag": e.to_string() }),
        };
        slices.push(entry);
    }
    Ok(json!({ "slices": slices }))
}

/// Local log-log slope of the fitted g_eff(T) over [0.5, 3.5] K.
pub fn tail_slope(g_full: f64, spin: &SpinSystemParams, field: PolarizationField, tr: TransitionId) -> Result<f64> {
    let t = logspace(0.5, 3.5, 25);
    let x: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let y = t.iter().map(|&v| Ok(temperature_model(g_full, spin, field, v, tr)?.ln())).collect::<Result<Vec<f64>>>()?;
    Ok(linear_slope(&x, &y))
}

fn temperature_report(cfg: &RunConfig, points: &[TemperaturePoint], shared: bool) -> Result<(Value, String)> {
    let field = match &cfg.temperature {
        Some(t) => cfg.polarization_field(t),
        None => PolarizationField::Resonant(cfg.resonator.freq_hz),
    };
    let fit = fit_temperature_series(points, &cfg.spin, field, shared)?;
    let mut transitions = Map::new();
    let mut curve = String::from("temperature_K,g_lf_model_over_2pi_hz,g_hf_model_over_2pi_hz\n");
    let grid = logspace(0.01, 10.0, 121);
    let mut columns = Vec::new();
    for tr in TransitionId::ALL {
        let Some(g) = fit.amplitude(tr) else {
            columns.push(vec![f64::NAN; grid.len()]);
            continue;
        };
        transitions.insert(
            tr.label().to_string(),
            json!({
                "g_full_over_2pi_hz": g,
                "tail_loglog_slope_0p5_to_3p5_k": tail_slope(g, &cfg.spin, field, tr)?,
            }),
        );
        columns.push(
            grid.iter()
                .map(|&t| temperature_model(g, &cfg.spin, field, t, tr))
                .collect::<spincav_core::error::Result<Vec<f64>>>()?,
        );
    }
    for (i, t) in grid.iter().enumerate() {
        curve.push_str(&format!("{t},{},{}\n", columns[0][i], columns[1][i]));
    }
    let report = json!({
        "field": field,
        "shared_amplitude": shared,
        "fit": fit_json(&fit.fit),
        "transitions": transitions,
        "residuals_over_2pi_hz": fit.residuals_hz,
    });
    Ok((report, curve))
}

pub fn cmd_fit(a: &FitArgs) -> Result<PathBuf> {
    let cfg = load_config(a.config.as_deref())?;
    let dir = output_dir(a.out.as_deref(), &cfg, "-fit");
    let text = read(&a.input)?;
    let mut bundle = ResultBundle::create(&dir, "fit", &cfg.scenario)?;
    match a.mode {
        FitMode::LorentzianMap => {
            let sweep = FieldSweep::from_csv(&text)?;
            let rows = extract_kappa_vs_field(&sweep)?;
            bundle.write("kappa_vs_field.csv", &kappa_csv(&rows))?;
            let flagged = rows.iter().filter(|r| !r.flag.is_empty()).count();
            bundle.write_json(
                "lorentzian_summary.json",
                &json!({
                    "rows": rows.len(),
                    "flagged_rows": flagged,
                    "kappa_maxima_b0_tesla": kappa_maxima(&rows),
                }),
            )?;
        }
        FitMode::InoutSlice => {
            let sweep = FieldSweep::from_csv(&text)?;
            bundle.write_json("inout_fit.json", &inout_report(&cfg, &sweep, &a.b0)?)?;
        }
        FitMode::Temperature => {
            let points = temperature_series_from_csv(&text)?;
            let (report, curve) = temperature_report(&cfg, &points, !a.per_transition)?;
            bundle.write_json("temperature_fit.json", &report)?;
            bundle.write("temperature_curve.csv", &curve)?;
        }
    }
    bundle.finish()?;
    Ok(dir)
}

// ---------------------------------------------------------------- coupling

pub fn coupling_report(cfg: &RunConfig, a: &CouplingArgs) -> Result<Value> {
    let geom = cfg.geometry;
    let freq = cfg.resonator.freq_hz;
    let g_s = cfg.spin.g_e;
    let mask = match a.section.as_deref() {
        Some(&[x0, x1]) => OrientationMask::new(vec![(x0, x1)], geom.length)
            .map_err(|e| crate::config::ConfigError::Invalid(format!("section: {e}")))?,
        Some(_) => bail!(crate::config::ConfigError::Invalid("--section takes two values: x0,x1".into())),
        None => cfg.mask.mask(geom.length)?,
    };
    let gaps: Vec<f64> =
        if a.gap_um.is_empty() { vec![cfg.crystal.standoff_gap] } else { a.gap_um.iter().map(|d| d * 1e-6).collect() };
    let common = json!({
        "method": format!("{:?}", a.method).to_lowercase(),
        "omega_r_over_2pi_hz": freq,
        "geometry": geom,
        "crystal": cfg.crystal,
        "mask_parallel_fraction": mask.parallel_fraction(geom.length),
        "mask_intervals_m": mask.intervals,
    });
    let mut rows = Vec::new();
    match a.method {
        CouplingMethod::Analytic => {
            let eta = cfg.coupling.filling_factor;
            let full = analytic_g_eff(cfg.crystal.spin_density, eta, freq, g_s)?;
            let per = analytic_g_eff_per_transition(&cfg.crystal, eta, freq, g_s)?;
            rows.push(json!({
                "filling_factor": eta,
                "g_eff_full_density_over_2pi_hz": full,
                "g_eff_per_transition_over_2pi_hz": per,
            }));
        }
        CouplingMethod::Lattice | CouplingMethod::Continuum => {
            let map = b1_cross_section(&geom, freq, &cfg.grid)?;
            for d in gaps {
                let stack = spincav_core::coupling::CrystalStack { standoff_gap: d, ..cfg.crystal };
                let row = if a.method == CouplingMethod::Lattice {
                    let lc = a.lattice_constant.unwrap_or_else(|| stack.cubic_lattice_constant());
                    let l = g_eff_lattice_sum(&map, &stack, &mask, lc, g_s)?;
                    json!({
                        "standoff_gap_m": d,
                        "g_eff_over_2pi_hz": l.g_eff_hz,
                        "sites": l.sites,
                        "lattice_constant_m": l.lattice_constant,
                        "spins_per_site": l.site_weight,
                    })
                } else {
                    json!({
                        "standoff_gap_m": d,
                        "g_eff_over_2pi_hz": g_eff_continuum(&map, &stack, &mask, g_s)?,
                    })
                };
                rows.push(row);
            }
        }
    }
    let mut report = common;
    report["results"] = Value::Array(rows);
    Ok(report)
}

pub fn cmd_coupling(a: &CouplingArgs) -> Result<Option<PathBuf>> {
    let cfg = load_config(a.config.as_deref())?;
    let report = coupling_report(&cfg, a)?;
    match &a.out {
        Some(dir) => {
            let mut bundle = ResultBundle::create(dir, "coupling", &cfg.scenario)?;
            bundle.write_json("coupling.json", &report)?;
            bundle.finish()?;
            Ok(Some(dir.clone()))
        }
        None => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(None)
        }
    }
}
