//! RIS phase alignment: closed-form optimum, the quantized gradient update,
//! and the conversion from estimation error to SNR and capacity loss.
//!
//! The combining objective is `|ĝᴴθ|` with `θ_n = e^{jφ_n}`, so the aligned
//! phases are `φ_n = arg ĝ_n`.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feedback::{phase_project, MAX_BITS};

/// Unit-modulus weights `e^{jφ}`.
pub fn weights_from_phases(phases: &[f64]) -> Vec<Complex64> {
    phases.iter().map(|&p| Complex64::from_polar(1.0, p)).collect()
}

/// `ĝᴴθ`.
pub fn combine(g: &[Complex64], weights: &[Complex64]) -> Complex64 {
    g.iter().zip(weights).map(|(a, w)| a.conj() * w).sum()
}

/// Phase alignment `θ★_n = e^{j arg ĝ_n}`; zero entries get phase 0.
pub fn optimal_phases(g_hat: &[Complex64]) -> Vec<Complex64> {
    g_hat
        .iter()
        .map(|z| {
            if z.norm_sqr() == 0.0 {
                Complex64::new(1.0, 0.0)
            } else {
                z / z.norm()
            }
        })
        .collect()
}

/// `P_d |gᴴθ|² / σ²`.
pub fn combining_snr(g: &[Complex64], weights: &[Complex64], data_power: f64, noise_variance: f64) -> f64 {
    data_power * combine(g, weights).norm_sqr() / noise_variance
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSchedule {
    /// `μ_t = scale / ‖ĝ‖²`.
    Constant,
    /// `μ_t = scale / (‖ĝ‖² (1 + t))`.
    Diminishing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantizeWhen {
    /// Project onto the codebook after every update.
    EveryIteration,
    /// Iterate in continuous phase and quantize the emitted pattern only.
    EmitOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    /// Phase bits; `None` means continuous phase.
    pub bits: Option<u32>,
    pub max_iterations: usize,
    pub schedule: StepSchedule,
    /// Multiplier on `1/‖ĝ‖²`; the safe range is `(0, 2)`.
    pub step_scale: f64,
    /// Stop once the objective improves by less than this.
    pub tolerance: f64,
    pub quantize: QuantizeWhen,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            bits: Some(6),
            max_iterations: 200,
            schedule: StepSchedule::Constant,
            step_scale: 1.0,
            tolerance: 1e-9,
            quantize: QuantizeWhen::EveryIteration,
        }
    }
}

impl AdaptConfig {
    pub fn continuous() -> Self {
        Self {
            bits: None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(b) = self.bits {
            if b == 0 || b > MAX_BITS {
                return Err(Error::config("control.bits", format!("must lie in 1..={MAX_BITS} or be \"inf\"")));
            }
        }
        if self.max_iterations == 0 {
            return Err(Error::config("control.max_iterations", "must be >= 1"));
        }
        if !(self.step_scale > 0.0 && self.step_scale < 2.0) {
            return Err(Error::config("control.step_scale", "must lie in (0, 2)"));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::config("control.tolerance", "must be >= 0"));
        }
        Ok(())
    }

    fn iterate_bits(&self) -> Option<u32> {
        match self.quantize {
            QuantizeWhen::EveryIteration => self.bits,
            QuantizeWhen::EmitOnly => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlState {
    /// Emitted phases in `[0, 2π)`, on the codebook when `bits` is finite.
    pub phases: Vec<f64>,
    pub weights: Vec<Complex64>,
    /// `|ĝᴴθ|` after initialization and after every iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    /// Stopped on the tolerance rather than the iteration cap.
    pub converged: bool,
}

impl ControlState {
    pub fn objective(&self, g_hat: &[Complex64]) -> f64 {
        combine(g_hat, &self.weights).norm()
    }
}

/// Gradient update starting from `φ_n = arg ĝ_n`.
pub fn adapt_phases(g_hat: &[Complex64], cfg: &AdaptConfig) -> Result<ControlState> {
    let init: Vec<f64> = g_hat.iter().map(|z| z.arg()).collect();
    adapt_phases_from(g_hat, &init, cfg)
}

/// Gradient update from caller-supplied initial phases.
///
/// Each step ascends `|s|²` with `s = ĝᴴθ`:
/// `φ_n ← φ_n − μ Im{ĝ*_n e^{jφ_n} s*}`, then wraps (and quantizes).
/// The best iterate seen is returned.
pub fn adapt_phases_from(g_hat: &[Complex64], initial: &[f64], cfg: &AdaptConfig) -> Result<ControlState> {
    cfg.validate()?;
    if g_hat.is_empty() || initial.len() != g_hat.len() {
        return Err(Error::Contract("phase adaptation needs matching non-empty inputs".into()));
    }
    let energy: f64 = g_hat.iter().map(|z| z.norm_sqr()).sum();
    let bits = cfg.iterate_bits();
    let emit = |phases: &[f64]| -> Vec<f64> { phases.iter().map(|&p| phase_project(p, cfg.bits)).collect() };

    let mut phases: Vec<f64> = initial.iter().map(|&p| phase_project(p, bits)).collect();
    let objective_of = |ph: &[f64]| combine(g_hat, &weights_from_phases(&emit(ph))).norm();
    let mut current = objective_of(&phases);
    let mut trace = vec![current];
    let mut best = (current, phases.clone());
    let mut iterations = 0;
    let mut converged = false;

    if energy > 0.0 {
        for t in 0..cfg.max_iterations {
            let mu = match cfg.schedule {
                StepSchedule::Constant => cfg.step_scale / energy,
                StepSchedule::Diminishing => cfg.step_scale / (energy * (1.0 + t as f64)),
            };
            let s = combine(g_hat, &weights_from_phases(&phases));
            for (p, z) in phases.iter_mut().zip(g_hat) {
                let grad = (z.conj() * Complex64::from_polar(1.0, *p) * s.conj()).im;
                *p = phase_project(*p - mu * grad, bits);
            }
            iterations = t + 1;
            let next = objective_of(&phases);
            trace.push(next);
            if next > best.0 {
                best = (next, phases.clone());
            }
            let improvement = next - current;
            current = next;
            if improvement < cfg.tolerance {
                converged = true;
                break;
            }
        }
    } else {
        converged = true;
    }

    let phases = emit(&best.1);
    Ok(ControlState {
        weights: weights_from_phases(&phases),
        phases,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// `γ_eff = γ★ (1 − ε)`.
pub fn effective_snr(optimal_snr: f64, nmse: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&nmse) {
        return Err(Error::Contract("NMSE must lie in [0, 1)".into()));
    }
    Ok(optimal_snr * (1.0 - nmse))
}

/// Capacity loss in bits/s/Hz from an estimation error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityLoss {
    /// `log₂(1+γ) − log₂(1+γ(1−ε))`.
    pub exact: f64,
    /// `γε / (ln 2 (1+γ))`, the linearization at `ε = 0`.
    pub first_order: f64,
}

pub fn capacity_loss(optimal_snr: f64, nmse: f64) -> Result<CapacityLoss> {
    if !(optimal_snr > 0.0) {
        return Err(Error::Contract("SNR must be > 0".into()));
    }
    let reduced = effective_snr(optimal_snr, nmse)?;
    Ok(CapacityLoss {
        exact: optimal_snr.ln_1p() / LN_2 - reduced.ln_1p() / LN_2,
        first_order: optimal_snr * nmse / (LN_2 * (1.0 + optimal_snr)),
    })
}

/// SNR ratio in dB, `10 log₁₀(a/b)`.
pub fn db_ratio(a: f64, b: f64) -> f64 {
    10.0 * (a / b).log10()
}
