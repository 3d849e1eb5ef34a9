//! Seeded, parallel experiment harness.
//!
//! Grid points run in order; trials inside a point run on the rayon pool and
//! are collected by index before any reduction, so results do not depend on
//! the worker count. Every trial draws from its own ChaCha8 stream keyed by
//! `(master seed, point, trial)`.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{cascaded_channel_with, ChannelModel};
use crate::config::{db_to_linear, Scenario, ScenarioConfig};
use crate::error::{Error, Result};
use crate::estimation::{
    complex_gaussian, dft_pilot_matrix, ls_estimate_general, ls_estimate_unitary, make_pilot_matrix,
    nmse, required_pilot_length, simulate_pilot_rx, EstimationResult, PilotKind, PilotMatrix, PilotPlan,
};
use crate::feedback::{cs_compress, cs_reconstruct, max_quantization_depth, SparsifyingBasis};
use crate::phase_control::{adapt_phases, combine, combining_snr, optimal_phases, AdaptConfig};
use crate::pixel_optics::{
    ideal_pixel_gain, long_exposure_gain, sigma_for_boresight_attenuation, JitterSpec,
};
use crate::seed::{point_seed, rng_from_seed, trial_seed, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    NmseVsM,
    NmseVsSnr,
    EffsnrVsNmse,
    PilotVsWavelength,
    PilotVsArea,
    Complexity,
    CsFeedback,
    PixelGainMaps,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::NmseVsM,
        Experiment::NmseVsSnr,
        Experiment::EffsnrVsNmse,
        Experiment::PilotVsWavelength,
        Experiment::PilotVsArea,
        Experiment::Complexity,
        Experiment::CsFeedback,
        Experiment::PixelGainMaps,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::NmseVsM => "nmse_vs_M",
            Experiment::NmseVsSnr => "nmse_vs_snr",
            Experiment::EffsnrVsNmse => "effsnr_vs_nmse",
            Experiment::PilotVsWavelength => "pilot_vs_wavelength",
            Experiment::PilotVsArea => "pilot_vs_area",
            Experiment::Complexity => "complexity",
            Experiment::CsFeedback => "cs_feedback",
            Experiment::PixelGainMaps => "pixel_gain_maps",
        }
    }

    /// Primary grid used when the caller gives none.
    pub fn default_grid(&self) -> Vec<f64> {
        match self {
            Experiment::NmseVsM => vec![64.0, 128.0, 256.0],
            Experiment::NmseVsSnr => vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            Experiment::EffsnrVsNmse => vec![0.001, 0.002, 0.005, 0.01, 0.02, 0.03, 0.04, 0.05],
            Experiment::PilotVsWavelength => (0..=8).map(|i| 800.0 + 100.0 * i as f64).collect(),
            Experiment::PilotVsArea => vec![0.5, 1.0, 1.5, 2.0, 3.0, 4.0],
            Experiment::Complexity => vec![16.0, 32.0, 64.0, 128.0, 256.0, 512.0],
            Experiment::CsFeedback => vec![0.25, 0.5, 0.75, 1.0],
            Experiment::PixelGainMaps => vec![41.0],
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config("experiment", format!("unknown experiment `{s}`")))
    }
}

impl std::fmt::Display for Experiment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    /// Primary sweep axis; see [`Experiment::default_grid`] for meanings.
    pub grid: Vec<f64>,
    pub trials: usize,
    pub master_seed: u64,
    /// Bit depth for compressed-feedback coefficients.
    pub feedback_bits: u32,
    /// Worker count; affects speed only.
    pub threads: Option<usize>,
}

impl ExperimentSpec {
    /// Spec with the default grid and the scenario's trial count and seed.
    pub fn new(experiment: Experiment, scenario: &Scenario) -> Self {
        Self {
            experiment,
            grid: experiment.default_grid(),
            trials: scenario.trials,
            master_seed: scenario.seed,
            feedback_bits: 16,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("experiment.trials", "must be >= 1"));
        }
        if self.grid.is_empty() || self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("experiment.grid", "grid must be non-empty and finite"));
        }
        Ok(())
    }
}

/// Aggregated result at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub coords: Vec<f64>,
    pub mean: f64,
    pub std_error: f64,
    pub trials: usize,
    /// Point seed; trial `t` uses `derive(seed, t)`.
    pub seed: u64,
    pub extras: Vec<f64>,
    /// Raw per-trial samples, in trial order.
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub experiment: Experiment,
    pub coord_names: Vec<String>,
    pub value_name: String,
    pub extra_names: Vec<String>,
    pub points: Vec<SweepPoint>,
    /// Model-versus-literature remarks attached to this run.
    pub notes: Vec<String>,
}

impl SweepResult {
    pub fn header(&self) -> Vec<String> {
        let mut h = self.coord_names.clone();
        h.push(format!("mean_{}", self.value_name));
        h.extend(["stderr", "trials", "seed"].map(String::from));
        h.extend(self.extra_names.iter().cloned());
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::Serialize(e.to_string());
        w.write_record(self.header()).map_err(io)?;
        for p in &self.points {
            let mut row: Vec<String> = p.coords.iter().map(|v| fmt_num(*v)).collect();
            row.push(fmt_num(p.mean));
            row.push(fmt_num(p.std_error));
            row.push(p.trials.to_string());
            row.push(p.seed.to_string());
            row.extend(p.extras.iter().map(|v| fmt_num(*v)));
            w.write_record(&row).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Serialize(e.to_string()))
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:e}")
    }
}

/// Provenance written next to every result file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: Experiment,
    pub scenario_hash: String,
    pub scenario: String,
    pub spec: ExperimentSpec,
    pub crate_version: String,
    pub wall_time_s: f64,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(spec: &ExperimentSpec, config: &ScenarioConfig, result: &SweepResult, wall_time_s: f64) -> Result<Self> {
        Ok(Self {
            experiment: spec.experiment,
            scenario_hash: config.hash()?,
            scenario: config.to_toml_string()?,
            spec: spec.clone(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_s,
            notes: result.notes.clone(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serialize(e.to_string()))
    }
}

/// Sample mean and standard error (`s/√n`), accumulated in index order.
pub fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let d = x - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (x - mean);
    }
    let se = if n > 1 { (m2 / (n - 1) as f64 / n as f64).sqrt() } else { 0.0 };
    (mean, se)
}

/// Least-squares slope of `ys` against `xs`.
pub fn regression_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn run_trials<F>(master: u64, point: usize, trials: usize, f: F) -> Result<(u64, Vec<f64>)>
where
    F: Fn(&mut SimRng, u64) -> Result<f64> + Sync,
{
    let samples: Vec<Result<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(master, point, t);
            let mut rng = rng_from_seed(seed);
            f(&mut rng, seed)
        })
        .collect();
    let samples = samples.into_iter().collect::<Result<Vec<f64>>>()?;
    Ok((point_seed(master, point), samples))
}

fn aggregate(coords: Vec<f64>, seed: u64, samples: Vec<f64>, extras: Vec<f64>) -> SweepPoint {
    let (mean, std_error) = mean_and_stderr(&samples);
    SweepPoint {
        coords,
        mean,
        std_error,
        trials: samples.len(),
        seed,
        extras,
        samples,
    }
}

fn pilot_matrix_for(kind: PilotKind, m: usize, n: usize, rng: &mut SimRng) -> Result<PilotMatrix> {
    match kind {
        PilotKind::UnitaryDft => Ok(dft_pilot_matrix(m, n)),
        PilotKind::General => make_pilot_matrix(
            &PilotPlan {
                pilot_length: m,
                elements: n,
                kind,
                pilot_power: 1.0,
                noise_variance: 0.0,
            },
            rng,
        ),
    }
}

fn ls_estimate(pilots: &PilotMatrix, y: &[Complex64], pilot_power: f64) -> Result<EstimationResult> {
    match pilots.kind {
        PilotKind::UnitaryDft => ls_estimate_unitary(pilots, y, pilot_power),
        PilotKind::General => ls_estimate_general(pilots, y, pilot_power),
    }
}

/// Channel draw, pilot phase at a target realized SNR, and LS estimate.
/// Returns `(g, ĝ)`.
fn estimate_at_snr(
    model: &ChannelModel,
    scenario: &Scenario,
    pilot_length: usize,
    target_snr: f64,
    rng: &mut SimRng,
    seed: u64,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let ch = cascaded_channel_with(model, rng, seed);
    let p_t = scenario.link.pilot_power;
    let energy: f64 = ch.g.iter().map(|z| z.norm_sqr()).sum();
    let noise = p_t * energy / target_snr;
    let pilots = pilot_matrix_for(scenario.pilot.kind, pilot_length, model.elements(), rng)?;
    let y = simulate_pilot_rx(&pilots, &ch.g, p_t, noise, rng)?;
    let est = ls_estimate(&pilots, &y, p_t)?;
    Ok((ch.g, est.g_hat))
}

/// Pilot length configured for the scenario (resolving `auto`).
pub fn scenario_pilot_length(scenario: &Scenario) -> Result<usize> {
    match scenario.pilot.length {
        Some(m) => Ok(m),
        None => required_pilot_length(scenario.elements(), scenario.pilot.target_nmse, scenario.pilot.snr_linear()),
    }
}

/// Per-component feedback bits configured for the scenario (resolving `auto`).
pub fn scenario_component_bits(scenario: &Scenario) -> Result<u32> {
    match scenario.component_bits {
        Some(q) => Ok(q),
        None => max_quantization_depth(
            scenario.elements(),
            &scenario.budget,
            scenario.pilot.target_nmse,
            scenario.pilot.snr_linear(),
        ),
    }
}

/// Run one experiment. Deterministic in `(spec, scenario)`.
pub fn run_experiment(spec: &ExperimentSpec, scenario: &Scenario) -> Result<SweepResult> {
    spec.validate()?;
    match spec.threads {
        Some(t) if t > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::config("threads", e.to_string()))?;
            pool.install(|| dispatch(spec, scenario))
        }
        _ => dispatch(spec, scenario),
    }
}

/// Run and time an experiment, returning the result with its manifest.
pub fn run_with_manifest(
    spec: &ExperimentSpec,
    config: &ScenarioConfig,
) -> Result<(SweepResult, RunManifest)> {
    let scenario = config.resolve()?;
    let start = Instant::now();
    let result = run_experiment(spec, &scenario)?;
    let manifest = RunManifest::new(spec, config, &result, start.elapsed().as_secs_f64())?;
    Ok((result, manifest))
}

fn dispatch(spec: &ExperimentSpec, scenario: &Scenario) -> Result<SweepResult> {
    match spec.experiment {
        Experiment::NmseVsM => nmse_vs_m(spec, scenario),
        Experiment::NmseVsSnr => nmse_vs_snr(spec, scenario),
        Experiment::EffsnrVsNmse => effsnr_vs_nmse(spec, scenario),
        Experiment::PilotVsWavelength => pilot_sweep(spec, scenario, PilotAxis::Wavelength),
        Experiment::PilotVsArea => pilot_sweep(spec, scenario, PilotAxis::PixelWidth),
        Experiment::Complexity => complexity(spec, scenario),
        Experiment::CsFeedback => cs_feedback(spec, scenario),
        Experiment::PixelGainMaps => pixel_gain_maps(spec, scenario),
    }
}

fn grid_usize(grid: &[f64], key: &str, min: usize) -> Result<Vec<usize>> {
    grid.iter()
        .map(|&v| {
            if v.fract() != 0.0 || v < min as f64 {
                Err(Error::config(key, format!("grid value {v} must be an integer >= {min}")))
            } else {
                Ok(v as usize)
            }
        })
        .collect()
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn nmse_vs_m(spec: &ExperimentSpec, scenario: &Scenario) -> Result<SweepResult> {
    let model = ChannelModel::new(scenario)?;
    let n = model.elements();
    let lengths = grid_usize(&spec.grid, "experiment.grid", n)?;
    let snr = scenario.pilot.snr_linear();
    let mut points = Vec::new();
    for (i, &m) in lengths.iter().enumerate() {
        let (seed, samples) = run_trials(spec.master_seed, i, spec.trials, |rng, s| {
            let (g, g_hat) = estimate_at_snr(&model, scenario, m, snr, rng, s)?;
            nmse(&g_hat, &g)
        })?;
        points.push(aggregate(vec![m as f64], seed, samples, vec![]));
    }
    Ok(SweepResult {
        experiment: spec.experiment,
        coord_names: names(&["M"]),
        value_name: "nmse".into(),
        extra_names: vec![],
        points,
        notes: vec![format!(
            "pilot SNR held at {} dB per trial; the NMSE law predicts N/(M*gamma) = {}/(M*{})",
            scenario.pilot.snr_db, n, snr
        )],
    })
}

fn nmse_vs_snr(spec: &ExperimentSpec, scenario: &Scenario) -> Result<SweepResult> {
    let model = ChannelModel::new(scenario)?;
    let n = model.elements();
    let lengths = [n, 2 * n, 4 * n];
    let mut points = Vec::new();
    let mut idx = 0;
    for &snr_db in &spec.grid {
        let snr = db_to_linear(snr_db);
        for &m in &lengths {
            let (seed, samples) = run_trials(spec.master_seed, idx, spec.trials, |rng, s| {
                let (g, g_hat) = estimate_at_snr(&model, scenario, m, snr, rng, s)?;
                nmse(&g_hat, &g)
            })?;
            let predicted = n as f64 / (m as f64 * snr);
            points.push(aggregate(vec![snr_db, m as f64], seed, samples, vec![predicted]));
            idx += 1;
        }
    }
    Ok(SweepResult {
        experiment: spec.experiment,
        coord_names: names(&["snr_db", "M"]),
        value_name: "nmse".into(),
        extra_names: names(&["predicted_nmse"]),
        points,
        notes: vec![],
    })
}

/// Perturb `g` by an isotropic complex Gaussian error with
/// `‖e‖² = ε ‖g‖²` exactly.
pub fn perturb_at_nmse(g: &[Complex64], target: f64, rng: &mut SimRng) -> Vec<Complex64> {
    let e: Vec<Complex64> = g.iter().map(|_| complex_gaussian(rng, 1.0)).collect();
    let e_energy: f64 = e.iter().map(|z| z.norm_sqr()).sum();
    let g_energy: f64 = g.iter().map(|z| z.norm_sqr()).sum();
    let scale = (target * g_energy / e_energy).sqrt();
    g.iter().zip(&e).map(|(a, b)| a + b * scale).collect()
}

/// Ratio of the SNR with phases aligned to a perturbed estimate to the
/// SNR with perfect alignment.
pub fn effective_snr_ratio(g: &[Complex64], g_hat: &[Complex64]) -> f64 {
    let achieved = combine(g, &optimal_phases(g_hat)).norm_sqr();
    let ideal: f64 = g.iter().map(|z| z.norm()).sum::<f64>().powi(2);
    achieved / ideal
}

fn effsnr_vs_nmse(spec: &ExperimentSpec, scenario: &Scenario) -> Result<SweepResult> {
    if spec.grid.iter().any(|&e| !(0.0..1.0).contains(&e)) {
        return Err(Error::config("experiment.grid", "NMSE levels must lie in [0, 1)"));
    }
    let model = ChannelModel::new(scenario)?;
    let mut points = Vec::new();
    for (i, &eps) in spec.grid.iter().enumerate() {
        let (seed, samples) = run_trials(spec.master_seed, i, spec.trials, |rng, s| {
            let ch = cascaded_channel_with(&model, rng, s);
            let g_hat = perturb_at_nmse(&ch.g, eps, rng);
            Ok(effective_snr_ratio(&ch.g, &g_hat))
        })?;
        points.push(aggregate(vec![eps], seed, samples, vec![1.0 - eps]));
    }
    Ok(SweepResult {
        experiment: spec.experiment,
        coord_names: names(&["nmse"]),
        value_name: "snr_ratio".into(),
        extra_names: names(&["linear_model"]),
        points,
        notes: vec![
            "phase-only alignment to a perturbed estimate loses about eps/2 of the SNR, not eps".into(),
        ],
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum PilotAxis {
    Wavelength,
    PixelWidth,
}

fn scenario_with(base: &ScenarioConfig, axis: PilotAxis, value: f64) -> ScenarioConfig {
    let mut cfg = base.clone();
    match axis {
        PilotAxis::Wavelength => cfg.geometry.wavelength_nm = value,
        PilotAxis::PixelWidth => {
            cfg.geometry.pixel_width_mm = value;
            cfg.geometry.pixel_height_mm = value;
            cfg.geometry.pitch_mm = cfg.geometry.pitch_mm.max(value);
        }
    }
    cfg
}

/// Deterministic pilot-length curves. `P_T/σ²` is fixed so that the given
/// scenario has mean pilot SNR `pilot.snr_db`; each grid point then changes
/// one design parameter and reevaluates `Σ E|g_n|²`.
fn pilot_sweep(spec: &ExperimentSpec, scenario: &Scenario, axis: PilotAxis) -> Result<SweepResult> {
    let base_model = ChannelModel::new(scenario)?;
    let noise = scenario.link.pilot_power * base_model.total_mean_power() / scenario.pilot.snr_linear();
    let base_cfg = scenario_config_of(scenario);
    let n = scenario.elements();
    let mut points = Vec::new();
    for (i, &v) in spec.grid.iter().enumerate() {
        if !(v > 0.0) {
            return Err(Error::config("experiment.grid", "design values must be > 0"));
        }
        let mut s = scenario_with(&base_cfg, axis, v).resolve()?;
        s.pixel_jitter = scenario.pixel_jitter.clone();
        let model = ChannelModel::new(&s)?;
        let snr = s.link.pilot_power * model.total_mean_power() / noise;
        let m = required_pilot_length(n, s.pilot.target_nmse, snr)?;
        points.push(SweepPoint {
            coords: vec![v],
            mean: m as f64,
            std_error: 0.0,
            trials: 1,
            seed: point_seed(spec.master_seed, i),
            extras: vec![10.0 * snr.log10(), model.link.pixel_area],
            samples: vec![m as f64],
        });
    }
    let mut notes = vec![format!(
        "pilot-to-noise ratio fixed so the configured design has {} dB pilot SNR",
        scenario.pilot.snr_db
    )];
    if axis == PilotAxis::PixelWidth {
        notes.push(
            "mean element power scales with A^2, so halving the pixel width raises the required pilot length about 16x above the M = N floor (a 4x factor is sometimes quoted)".into(),
        );
    }
    Ok(SweepResult {
        experiment: spec.experiment,
        coord_names: names(&[match axis {
            PilotAxis::Wavelength => "wavelength_nm",
            PilotAxis::PixelWidth => "pixel_width_mm",
        }]),
        value_name: "required_M".into(),
        extra_names: names(&["pilot_snr_db", "pixel_area_m2"]),
        points,
        notes,
    })
}

/// Reconstruct a config whose resolution reproduces `scenario` (used to
/// vary one physical parameter at a time).
pub fn scenario_config_of(scenario: &Scenario) -> ScenarioConfig {
    use crate::config::*;
    let g = &scenario.geometry;
    let jit = |j: &JitterSpec| {
        let (sx, sy) = (j.sigma_x(), j.sigma_y());
        HopJitterSection {
            sigma_x_mrad: sx * 1e3,
            sigma_y_mrad: sy * 1e3,
            correlation: if sx > 0.0 && sy > 0.0 { j.cross() / (sx * sy) } else { 0.0 },
        }
    };
    let rows_cols = {
        let xs: std::collections::BTreeSet<i64> = g.pixel_centers.iter().map(|c| (c[0] * 1e9).round() as i64).collect();
        let cols = xs.len();
        (g.num_pixels() / cols.max(1), cols)
    };
    let r = &scenario.noise.receiver;
    ScenarioConfig {
        geometry: GeometrySection {
            tx_position_m: g.tx_position,
            ris_plane_z_m: g.ris_plane_z,
            rx_position_m: g.rx_position,
            grid_rows: rows_cols.0,
            grid_cols: rows_cols.1,
            pitch_mm: g.lattice_pitch * 1e3,
            pixel_width_mm: g.pixel_width * 1e3,
            pixel_height_mm: g.pixel_height * 1e3,
            wavelength_nm: g.wavelength * 1e9,
        },
        optics: OpticsSection {
            strehl_tr: scenario.optics_tr.strehl,
            strehl_rr: scenario.optics_rr.strehl,
            obliquity_tr: scenario.optics_tr.obliquity,
            obliquity_rr: scenario.optics_rr.obliquity,
            quadrature_nodes: scenario.quadrature.nodes_per_axis,
            quadrature_max_nodes: scenario.quadrature.max_nodes_per_axis,
            quadrature_rel_tol: scenario.quadrature.relative_tolerance,
            quadrature_method: scenario.quadrature.method,
        },
        jitter: JitterSection {
            tr: jit(&scenario.jitter_tr),
            rr: jit(&scenario.jitter_rr),
        },
        turbulence: TurbulenceSection {
            fading: scenario.fading,
            tr: scenario.turbulence_tr,
            rr: scenario.turbulence_rr,
        },
        efficiency: EfficiencySection {
            reflectivity: scenario.efficiency.reflectivity,
            polarization_efficiency: scenario.efficiency.polarization_efficiency,
            insertion_loss: scenario.efficiency.insertion_loss,
        },
        link: LinkSection {
            tx_directivity: scenario.link.tx_directivity,
            rx_directivity: scenario.link.rx_directivity,
            extinction_per_m: scenario.link.extinction,
            data_power_w: scenario.link.data_power,
            pilot_power_w: scenario.link.pilot_power,
        },
        noise: NoiseSection {
            calibration: scenario.noise.calibration,
            responsivity_a_per_w: r.responsivity,
            signal_power_w: scenario.noise.signal_power_given.then_some(r.signal_power),
            background_power_w: r.background_power,
            dark_current_a: r.dark_current,
            bandwidth_hz: r.bandwidth,
            temperature_k: r.temperature,
            feedback_resistance_ohm: r.feedback_resistance,
            transconductance_s: r.transconductance,
            channel_noise_factor: r.channel_noise_factor,
            series_resistance_ohm: r.series_resistance,
            input_capacitance_pf: r.input_capacitance * 1e12,
            bit_rate_per_s: r.bit_rate,
            i2: r.i2,
            i3: r.i3,
            i_f: r.i_f,
        },
        pilot: PilotSection {
            length: scenario.pilot.length.map_or(AutoOr::Auto(AutoWord::Auto), AutoOr::Value),
            kind: scenario.pilot.kind,
            snr_db: scenario.pilot.snr_db,
            target_nmse: scenario.pilot.target_nmse,
        },
        budget: BudgetSection {
            component_bits: scenario.component_bits.map_or(AutoOr::Auto(AutoWord::Auto), AutoOr::Value),
            spectral_efficiency: scenario.budget.spectral_efficiency,
            feedback_bandwidth_hz: scenario.budget.feedback_bandwidth,
            frame_duration_ms: scenario.budget.frame_duration * 1e3,
            symbol_rate_per_s: scenario.budget.symbol_rate,
            min_data_duty: scenario.budget.min_data_duty,
        },
        control: ControlSection {
            bits: scenario.control.bits.map_or(PhaseBits::Continuous(InfWord::Inf), PhaseBits::Bits),
            max_iterations: scenario.control.max_iterations,
            schedule: scenario.control.schedule,
            step_scale: scenario.control.step_scale,
            tolerance: scenario.control.tolerance,
            quantize: scenario.control.quantize,
        },
        experiment: ExperimentSection {
            trials: scenario.trials,
            seed: scenario.seed,
        },
    }
}

/// Multiply-accumulate counts of both estimators at `M = 2N`.
pub fn complexity_point(n: usize, seed: u64) -> Result<(u64, u64)> {
    let m = 2 * n;
    let mut rng = rng_from_seed(seed);
    let g: Vec<Complex64> = (0..n).map(|_| complex_gaussian(&mut rng, 1.0)).collect();
    let unitary = dft_pilot_matrix(m, n);
    let y = simulate_pilot_rx(&unitary, &g, 1.0, 1e-3, &mut rng)?;
    let fast = ls_estimate_unitary(&unitary, &y, 1.0)?;
    let slow = ls_estimate_general(&unitary, &y, 1.0)?;
    Ok((fast.op_count, slow.op_count))
}

fn complexity(spec: &ExperimentSpec, _scenario: &Scenario) -> Result<SweepResult> {
    let sizes = grid_usize(&spec.grid, "experiment.grid", 1)?;
    let mut points = Vec::new();
    for (i, &n) in sizes.iter().enumerate() {
        let seed = point_seed(spec.master_seed, i);
        let (fast, slow) = complexity_point(n, seed)?;
        let ratio = slow as f64 / fast as f64;
        points.push(SweepPoint {
            coords: vec![n as f64, 2.0 * n as f64],
            mean: ratio,
            std_error: 0.0,
            trials: 1,
            seed,
            extras: vec![fast as f64, slow as f64],
            samples: vec![ratio],
        });
    }
    Ok(SweepResult {
        experiment: spec.experiment,
        coord_names: names(&["N", "M"]),
        value_name: "mac_ratio".into(),
        extra_names: names(&["unitary_macs", "general_macs"]),
        points,
        notes: vec![],
    })
}

fn cs_feedback(spec: &ExperimentSpec, scenario: &Scenario) -> Result<SweepResult> {
    let model = ChannelModel::new(scenario)?;
    let n = model.elements();
    let m = scenario_pilot_length(scenario)?;
    let snr = scenario.pilot.snr_linear();
    let kept: Vec<usize> = spec
        .grid
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::config("experiment.grid", "kept fractions must lie in (0, 1]"));
            }
            Ok(((f * n as f64).round() as usize).clamp(1, n))
        })
        .collect::<Result<_>>()?;
    let index_bits_per = if n <= 1 { 0 } else { usize::BITS - (n - 1).leading_zeros() } as f64;
    let mut points = Vec::new();
    for &k in &kept {
        // same channel and pilot draws at every K: the point index is not
        // folded into the trial seed here
        let pairs: Vec<Result<(f64, f64)>> = (0..spec.trials)
            .into_par_iter()
            .map(|t| {
                let seed = trial_seed(spec.master_seed, 0, t);
                let mut rng = rng_from_seed(seed);
                let (g, g_hat) = estimate_at_snr(&model, scenario, m, snr, &mut rng, seed)?;
                let fb = cs_compress(&g_hat, k, spec.feedback_bits, SparsifyingBasis::Dft)?;
                Ok((nmse(&cs_reconstruct(&fb), &g)?, nmse(&g_hat, &g)?))
            })
            .collect();
        let pairs = pairs.into_iter().collect::<Result<Vec<_>>>()?;
        let samples: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let (plain, _) = mean_and_stderr(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
        let payload = 2.0 * k as f64 * spec.feedback_bits as f64;
        points.push(aggregate(
            vec![k as f64],
            point_seed(spec.master_seed, 0),
            samples,
            vec![plain, payload, k as f64 * index_bits_per],
        ));
    }
    Ok(SweepResult {
        experiment: spec.experiment,
        coord_names: names(&["K"]),
        value_name: "nmse".into(),
        extra_names: names(&["uncompressed_nmse", "payload_bits", "index_bits"]),
        points,
        notes: vec![],
    })
}

/// Attenuation levels shown next to the configured jitter in gain maps.
pub const MAP_ATTENUATIONS: [f64; 3] = [0.1, 0.2, 0.4];

fn pixel_gain_maps(spec: &ExperimentSpec, scenario: &Scenario) -> Result<SweepResult> {
    let side = grid_usize(&spec.grid[..1], "experiment.grid", 2)?[0];
    let optics = scenario.optics_tr.unit_factors();
    let q = &scenario.quadrature;
    // span two first-null widths on each side
    let span = 2.0 * std::f64::consts::PI / optics.k_x.min(optics.k_y);
    let sigmas: Vec<f64> = MAP_ATTENUATIONS
        .iter()
        .map(|&a| sigma_for_boresight_attenuation(a, &optics, 0.0, q))
        .collect::<Result<_>>()?;
    let cells: Vec<(f64, f64)> = (0..side)
        .flat_map(|r| (0..side).map(move |c| (r, c)))
        .map(|(r, c)| {
            let t = |i: usize| -span + 2.0 * span * i as f64 / (side - 1) as f64;
            (t(c), t(r))
        })
        .collect();
    let rows: Vec<Result<SweepPoint>> = cells
        .par_iter()
        .enumerate()
        .map(|(i, &(mx, my))| {
            let mu = [mx, my];
            let ideal = ideal_pixel_gain(mu, &optics);
            let le = long_exposure_gain(mu, &optics, &scenario.jitter_tr, q)?.gain;
            let mut extras = vec![ideal, ideal - le];
            for &s in &sigmas {
                extras.push(long_exposure_gain(mu, &optics, &JitterSpec::isotropic(s), q)?.gain);
            }
            Ok(SweepPoint {
                coords: vec![mx, my],
                mean: le,
                std_error: 0.0,
                trials: 1,
                seed: point_seed(spec.master_seed, i),
                extras,
                samples: vec![le],
            })
        })
        .collect();
    let points = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let mut extra_names = names(&["ideal_gain", "deviation"]);
    extra_names.extend(MAP_ATTENUATIONS.iter().map(|a| format!("gain_atten_{}pct", (a * 100.0).round())));
    Ok(SweepResult {
        experiment: spec.experiment,
        coord_names: names(&["mu_x", "mu_y"]),
        value_name: "long_exposure_gain".into(),
        extra_names,
        points,
        notes: sigmas
            .iter()
            .zip(MAP_ATTENUATIONS)
            .map(|(s, a)| format!("{:.0}% boresight attenuation at isotropic sigma = {:.6e} rad", a * 100.0, s))
            .collect(),
    })
}

/// Recompute the raw sample of one trial from its seeds.
pub fn replay_trial(spec: &ExperimentSpec, scenario: &Scenario, point: usize, trial: usize) -> Result<f64> {
    let mut single = spec.clone();
    match spec.experiment {
        Experiment::NmseVsM | Experiment::EffsnrVsNmse => {
            let model = ChannelModel::new(scenario)?;
            let seed = trial_seed(spec.master_seed, point, trial);
            let mut rng = rng_from_seed(seed);
            let v = *spec
                .grid
                .get(point)
                .ok_or_else(|| Error::Contract(format!("point {point} outside the grid")))?;
            if spec.experiment == Experiment::NmseVsM {
                let (g, g_hat) =
                    estimate_at_snr(&model, scenario, v as usize, scenario.pilot.snr_linear(), &mut rng, seed)?;
                nmse(&g_hat, &g)
            } else {
                let ch = cascaded_channel_with(&model, &mut rng, seed);
                let g_hat = perturb_at_nmse(&ch.g, v, &mut rng);
                Ok(effective_snr_ratio(&ch.g, &g_hat))
            }
        }
        _ => {
            single.trials = trial + 1;
            single.threads = Some(1);
            let r = run_experiment(&single, scenario)?;
            r.points
                .get(point)
                .and_then(|p| p.samples.get(trial).copied())
                .ok_or_else(|| Error::Contract("trial outside the recorded range".into()))
        }
    }
}

/// Idealized references next to the configured system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub trials: usize,
    pub pilot_length: usize,
    pub phase_bits: Option<u32>,
    /// Mean combining SNR with estimated CSI and the configured phase control.
    pub realistic_snr_db: f64,
    /// Perfect CSI and continuous phases on the same channels.
    pub perfect_csi_snr_db: f64,
    /// Perfect CSI with jitter removed and unit Strehl ratio, same noise.
    pub zero_jitter_snr_db: f64,
    pub realistic_capacity: f64,
    pub perfect_csi_capacity: f64,
    pub zero_jitter_capacity: f64,
    pub csi_gap_db: f64,
    pub jitter_gap_db: f64,
    pub csi_gap_capacity: f64,
    pub jitter_gap_capacity: f64,
    /// Closed-form mean optimal SNR of the configured and jitter-free links.
    pub expected_optimal_snr_db: f64,
    pub zero_jitter_expected_snr_db: f64,
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn run_baselines(scenario: &Scenario, master_seed: u64) -> Result<BaselineReport> {
    let model = ChannelModel::new(scenario)?;
    let mut ideal_optics = scenario.clone();
    ideal_optics.jitter_tr = JitterSpec::NONE;
    ideal_optics.jitter_rr = JitterSpec::NONE;
    ideal_optics.pixel_jitter = None;
    ideal_optics.optics_tr.strehl = 1.0;
    ideal_optics.optics_rr.strehl = 1.0;
    let ideal_model = ChannelModel::new(&ideal_optics)?;
    let noise = scenario.noise_variance(&model);
    let p_t = scenario.link.pilot_power;
    let p_d = scenario.link.data_power;
    let m = scenario_pilot_length(scenario)?;
    let n = model.elements();
    let cfg: AdaptConfig = scenario.control;

    let rows: Vec<Result<[f64; 3]>> = (0..scenario.trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(master_seed, 0, t);
            let mut rng = rng_from_seed(seed);
            let ch = cascaded_channel_with(&model, &mut rng, seed);
            let pilots = pilot_matrix_for(scenario.pilot.kind, m, n, &mut rng)?;
            let y = simulate_pilot_rx(&pilots, &ch.g, p_t, noise, &mut rng)?;
            let est = ls_estimate(&pilots, &y, p_t)?;
            let state = adapt_phases(&est.g_hat, &cfg)?;
            let realistic = combining_snr(&ch.g, &state.weights, p_d, noise);
            let perfect = combining_snr(&ch.g, &optimal_phases(&ch.g), p_d, noise);
            // identical turbulence draws on the jitter-free optics
            let mut rng2 = rng_from_seed(seed);
            let ch2 = cascaded_channel_with(&ideal_model, &mut rng2, seed);
            let clean = combining_snr(&ch2.g, &optimal_phases(&ch2.g), p_d, noise);
            Ok([realistic, perfect, clean])
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
    let cap = |v: &[f64]| v.iter().map(|g| (1.0 + g).log2()).sum::<f64>() / v.len() as f64;
    let (real, perf, clean) = (col(0), col(1), col(2));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let report = BaselineReport {
        trials: scenario.trials,
        pilot_length: m,
        phase_bits: cfg.bits,
        realistic_snr_db: db(mean(&real)),
        perfect_csi_snr_db: db(mean(&perf)),
        zero_jitter_snr_db: db(mean(&clean)),
        realistic_capacity: cap(&real),
        perfect_csi_capacity: cap(&perf),
        zero_jitter_capacity: cap(&clean),
        csi_gap_db: db(mean(&perf)) - db(mean(&real)),
        jitter_gap_db: db(mean(&clean)) - db(mean(&perf)),
        csi_gap_capacity: cap(&perf) - cap(&real),
        jitter_gap_capacity: cap(&clean) - cap(&perf),
        expected_optimal_snr_db: db(crate::channel::expected_optimal_snr(&model, noise)),
        zero_jitter_expected_snr_db: db(crate::channel::expected_optimal_snr(&ideal_model, noise)),
    };
    Ok(report)
}

/// Write `<dir>/<name>.csv` or `.json` plus `<name>.manifest.json`.
pub fn write_outputs(
    dir: &Path,
    result: &SweepResult,
    manifest: &RunManifest,
    json: bool,
) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let stem = result.experiment.name();
    let data_path = dir.join(format!("{stem}.{}", if json { "json" } else { "csv" }));
    if json {
        let text = serde_json::to_string_pretty(result).map_err(|e| Error::Serialize(e.to_string()))?;
        std::fs::write(&data_path, text)?;
    } else {
        result.write_csv(std::fs::File::create(&data_path)?)?;
    }
    let manifest_path = dir.join(format!("{stem}.manifest.json"));
    std::fs::write(&manifest_path, manifest.to_json()?)?;
    Ok(vec![data_path, manifest_path])
}
