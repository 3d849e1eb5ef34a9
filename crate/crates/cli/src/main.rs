//! `ris-owc` command-line front end.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error,
//! 3 numerical failure, 4 infeasible budget under `budget --strict`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use ris_owc::channel::{cascaded_channel, pilot_snr, ChannelModel};
use ris_owc::estimation::{
    make_pilot_matrix, nmse, predicted_nmse, realized_pilot_snr, simulate_pilot_rx, ls_estimate_general,
    ls_estimate_unitary, required_pilot_length, PilotKind, PilotPlan,
};
use ris_owc::feedback::{feedback_payload_bits, max_quantization_depth, overhead_feasible, FeedbackMode};
use ris_owc::montecarlo::{
    run_baselines, run_with_manifest, scenario_component_bits, scenario_pilot_length, write_outputs, Experiment,
    ExperimentSpec,
};
use ris_owc::phase_control::{adapt_phases, combining_snr, optimal_phases};
use ris_owc::seed::{derive, rng_from_seed};
use ris_owc::{Error, Scenario, ScenarioConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ris-owc", version, about = "Optical RIS link simulator: pixel optics, CSI acquisition and phase control")]
struct Cli {
    /// Scenario file (TOML); the built-in reference scenario when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding `experiment.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, env = "RIS_OWC_OUT", default_value = "ris-owc-out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Worker threads; changes speed only.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Ideal and long-exposure pixel gain maps with the deviation surface.
    PixelGain {
        /// Grid points per axis.
        #[arg(long, default_value_t = 41)]
        points: usize,
    },
    /// Draw one channel realization.
    Channel,
    /// One least-squares estimation run.
    Estimate,
    /// Estimate, then run the phase adaptation and record its trace.
    Adapt,
    /// Pilot length, largest feedback depth and overhead feasibility.
    Budget {
        /// Exit with status 4 when the configured depth does not fit.
        #[arg(long)]
        strict: bool,
    },
    /// Run a Monte Carlo sweep.
    Sweep {
        #[arg(value_parser = parse_experiment)]
        experiment: Experiment,
        /// Trials per grid point (defaults to `experiment.trials`).
        #[arg(long)]
        trials: Option<usize>,
        /// Comma-separated primary grid.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// Bit depth for compressed-feedback coefficients.
        #[arg(long, default_value_t = 16)]
        feedback_bits: u32,
    },
    /// Compare the configured link with perfect-CSI and jitter-free references.
    Baselines,
}

fn parse_experiment(s: &str) -> std::result::Result<Experiment, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Config { .. }) => 2,
        Some(e) if e.is_numerical() => 3,
        _ => 1,
    }
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = seed;
    }
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

fn complex_table(header: &str, columns: &[&[Complex64]]) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for n in 0..columns[0].len() {
        out.push_str(&n.to_string());
        for col in columns {
            out.push_str(&format!(",{:e},{:e}", col[n].re, col[n].im));
        }
        out.push('\n');
    }
    out
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let cfg = load_config(&cli)?;
    let scenario = cfg.resolve()?;
    match &cli.command {
        Command::PixelGain { points } => pixel_gain(&cli, &cfg, *points),
        Command::Channel => channel(&cli, &scenario),
        Command::Estimate => estimate(&cli, &scenario).map(|_| ExitCode::SUCCESS),
        Command::Adapt => adapt(&cli, &scenario),
        Command::Budget { strict } => budget(&cli, &scenario, *strict),
        Command::Sweep {
            experiment,
            trials,
            grid,
            feedback_bits,
        } => {
            let mut spec = ExperimentSpec::new(*experiment, &scenario);
            if let Some(t) = trials {
                spec.trials = *t;
            }
            if let Some(g) = grid {
                spec.grid = g.clone();
            }
            spec.feedback_bits = *feedback_bits;
            spec.threads = cli.threads;
            sweep(&cli, &cfg, &spec)
        }
        Command::Baselines => {
            let report = run_baselines(&scenario, scenario.seed)?;
            let text = to_json(&report)?;
            write(&cli.out.join("baselines.json"), &text)?;
            println!("{text}");
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn sweep(cli: &Cli, cfg: &ScenarioConfig, spec: &ExperimentSpec) -> Result<ExitCode> {
    let (result, manifest) = run_with_manifest(spec, cfg)?;
    let files = write_outputs(&cli.out, &result, &manifest, cli.format == Format::Json)?;
    for note in &result.notes {
        println!("note: {note}");
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn pixel_gain(cli: &Cli, cfg: &ScenarioConfig, points: usize) -> Result<ExitCode> {
    let scenario = cfg.resolve()?;
    let model = ChannelModel::new(&scenario)?;
    let mut spec = ExperimentSpec::new(Experiment::PixelGainMaps, &scenario);
    spec.grid = vec![points as f64];
    spec.threads = cli.threads;
    let (result, manifest) = run_with_manifest(&spec, cfg)?;
    let files = write_outputs(&cli.out, &result, &manifest, cli.format == Format::Json)?;
    let per_pixel = model
        .pixel_gain_tr
        .iter()
        .zip(&model.pixel_gain_rr)
        .enumerate()
        .map(|(n, (tr, rr))| json!({ "pixel": n, "gain_tr": tr, "gain_rr": rr }))
        .collect::<Vec<_>>();
    write(&cli.out.join("pixel_gains.json"), &to_json(&per_pixel)?)?;
    let min = model.pixel_gain_tr.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = model.pixel_gain_tr.iter().cloned().fold(0.0, f64::max);
    println!("pixel_gain_tr_min={min:.6}");
    println!("pixel_gain_tr_max={max:.6}");
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn channel(cli: &Cli, scenario: &Scenario) -> Result<ExitCode> {
    let model = ChannelModel::new(scenario)?;
    let ch = cascaded_channel(&model, scenario.seed);
    let path = match cli.format {
        Format::Json => {
            let p = cli.out.join("channel.json");
            write(&p, &to_json(&ch)?)?;
            p
        }
        Format::Csv => {
            let mut text = String::from("n,x_m,y_m,g_re,g_im,abs_g,irradiance_tr,irradiance_rr,mean_power\n");
            for n in 0..ch.g.len() {
                let [x, y] = scenario.geometry.pixel_centers[n];
                text.push_str(&format!(
                    "{n},{x},{y},{:e},{:e},{:e},{},{},{:e}\n",
                    ch.g[n].re,
                    ch.g[n].im,
                    ch.g[n].norm(),
                    ch.irradiance_tr[n],
                    ch.irradiance_rr[n],
                    model.mean_power[n]
                ));
            }
            let p = cli.out.join("channel.csv");
            write(&p, &text)?;
            p
        }
    };
    println!("elements={}", ch.g.len());
    println!("total_mean_power={:e}", model.total_mean_power());
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

struct EstimateRun {
    g: Vec<Complex64>,
    g_hat: Vec<Complex64>,
    noise: f64,
}

fn estimate(cli: &Cli, scenario: &Scenario) -> Result<EstimateRun> {
    let model = ChannelModel::new(scenario)?;
    let noise = scenario.noise_variance(&model);
    let ch = cascaded_channel(&model, scenario.seed);
    let m = scenario_pilot_length(scenario)?;
    let p_t = scenario.link.pilot_power;
    let mut rng = rng_from_seed(derive(scenario.seed, 1));
    let plan = PilotPlan {
        pilot_length: m,
        elements: model.elements(),
        kind: scenario.pilot.kind,
        pilot_power: p_t,
        noise_variance: noise,
    };
    let pilots = make_pilot_matrix(&plan, &mut rng)?;
    let y = simulate_pilot_rx(&pilots, &ch.g, p_t, noise, &mut rng)?;
    let est = match scenario.pilot.kind {
        PilotKind::UnitaryDft => ls_estimate_unitary(&pilots, &y, p_t)?,
        PilotKind::General => ls_estimate_general(&pilots, &y, p_t)?,
    };
    let realized = realized_pilot_snr(&ch.g, p_t, noise);
    let summary = json!({
        "seed": scenario.seed,
        "pilot_length": m,
        "elements": model.elements(),
        "noise_variance": noise,
        "mean_pilot_snr_db": 10.0 * pilot_snr(&model, noise).log10(),
        "realized_pilot_snr_db": 10.0 * realized.log10(),
        "nmse": nmse(&est.g_hat, &ch.g)?,
        "predicted_nmse": predicted_nmse(model.elements(), m, realized),
        "op_count": est.op_count,
    });
    match cli.format {
        Format::Json => {
            let full = json!({ "summary": summary, "g": ch.g, "g_hat": est.g_hat });
            write(&cli.out.join("estimate.json"), &to_json(&full)?)?;
        }
        Format::Csv => {
            write(
                &cli.out.join("estimate.csv"),
                &complex_table("n,g_re,g_im,g_hat_re,g_hat_im", &[&ch.g, &est.g_hat]),
            )?;
            write(&cli.out.join("estimate_summary.json"), &to_json(&summary)?)?;
        }
    }
    println!("{}", to_json(&summary)?);
    Ok(EstimateRun {
        g: ch.g,
        g_hat: est.g_hat,
        noise,
    })
}

fn adapt(cli: &Cli, scenario: &Scenario) -> Result<ExitCode> {
    let run = estimate(cli, scenario)?;
    let state = adapt_phases(&run.g_hat, &scenario.control)?;
    let p_d = scenario.link.data_power;
    let achieved = combining_snr(&run.g, &state.weights, p_d, run.noise);
    let ideal = combining_snr(&run.g, &optimal_phases(&run.g), p_d, run.noise);
    let mut trace = String::from("iteration,objective\n");
    for (i, v) in state.objective_trace.iter().enumerate() {
        trace.push_str(&format!("{i},{v:e}\n"));
    }
    let summary = json!({
        "bits": scenario.control.bits,
        "iterations": state.iterations,
        "converged": state.converged,
        "snr_db": 10.0 * achieved.log10(),
        "perfect_csi_snr_db": 10.0 * ideal.log10(),
        "loss_db": 10.0 * (ideal / achieved).log10(),
        "phases": state.phases,
    });
    match cli.format {
        Format::Json => {
            let full = json!({ "summary": summary, "objective_trace": state.objective_trace });
            write(&cli.out.join("adapt.json"), &to_json(&full)?)?;
        }
        Format::Csv => {
            write(&cli.out.join("adapt_trace.csv"), &trace)?;
            write(&cli.out.join("adapt_summary.json"), &to_json(&summary)?)?;
        }
    }
    println!("snr_db={:.4}", 10.0 * achieved.log10());
    println!("loss_db={:.5}", 10.0 * (ideal / achieved).log10());
    Ok(ExitCode::SUCCESS)
}

fn budget(cli: &Cli, scenario: &Scenario, strict: bool) -> Result<ExitCode> {
    let n = scenario.elements();
    let eps = scenario.pilot.target_nmse;
    let snr = scenario.pilot.snr_linear();
    let m_req = required_pilot_length(n, eps, snr)?;
    let q_max = max_quantization_depth(n, &scenario.budget, eps, snr)?;
    let q = scenario_component_bits(scenario)?;
    let bits = feedback_payload_bits(FeedbackMode::Processed, m_req, n, q);
    let report = overhead_feasible(m_req, &scenario.budget, bits);
    let summary = json!({
        "elements": n,
        "target_nmse": eps,
        "pilot_snr_db": scenario.pilot.snr_db,
        "M_required": m_req,
        "Q_max": q_max,
        "Q": q,
        "payload_bits": bits,
        "tau_pilot": report.tau_pilot,
        "tau_fb": report.tau_fb,
        "slack": report.slack,
        "feasible": report.feasible,
    });
    write(&cli.out.join("budget.json"), &to_json(&summary)?)?;
    println!("M_required={m_req}");
    println!("Q_max={q_max}");
    println!("Q={q}");
    println!("tau_pilot={:.6}", report.tau_pilot);
    println!("tau_fb={:.6}", report.tau_fb);
    println!("feasible={}", report.feasible);
    if strict && !report.feasible {
        eprintln!("budget infeasible: slack {:.6}", report.slack);
        return Ok(ExitCode::from(4));
    }
    Ok(ExitCode::SUCCESS)
}
