//! Phase quantization, channel-feedback payloads, transform-domain
//! compression, and the pilot/feedback overhead budget.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::required_pilot_length;

/// Largest supported bit depth for any quantizer.
pub const MAX_BITS: u32 = 30;

/// Uniform `b`-bit phase codebook `{0, Δ, …, (2^b − 1)Δ}` with `Δ = 2π/2^b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub bits: u32,
}

impl QuantizerSpec {
    pub fn new(bits: u32) -> Result<Self> {
        if bits == 0 || bits > MAX_BITS {
            return Err(Error::config("control.bits", format!("must lie in 1..={MAX_BITS}")));
        }
        Ok(Self { bits })
    }

    pub fn levels(&self) -> u64 {
        1 << self.bits
    }

    pub fn step(&self) -> f64 {
        TAU / self.levels() as f64
    }

    pub fn codebook(&self) -> Vec<f64> {
        (0..self.levels()).map(|i| i as f64 * self.step()).collect()
    }

    pub fn quantize(&self, phase: f64) -> f64 {
        let step = self.step();
        let wrapped = phase.rem_euclid(TAU);
        let idx = (wrapped / step).round() as u64 % self.levels();
        idx as f64 * step
    }
}

/// Nearest codeword of the `b`-bit phase codebook; result in `[0, 2π)`.
pub fn phase_quantize(phase: f64, bits: u32) -> f64 {
    QuantizerSpec { bits }.quantize(phase)
}

/// Quantize when a bit depth is given, otherwise only wrap to `[0, 2π)`.
pub fn phase_project(phase: f64, bits: Option<u32>) -> f64 {
    match bits {
        Some(b) => phase_quantize(phase, b),
        None => phase.rem_euclid(TAU),
    }
}

/// Shortest distance between two angles.
pub fn circular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeedbackMode {
    /// The `M` received pilot samples are sent back.
    RawPilots,
    /// The `N` channel estimates are sent back.
    Processed,
}

/// Component-wise quantized complex vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedVector {
    pub values: Vec<Complex64>,
    /// Full-scale value, sent at full precision outside the payload.
    pub scale: f64,
    pub component_bits: u32,
}

impl QuantizedVector {
    pub fn payload_bits(&self) -> u64 {
        2 * self.values.len() as u64 * self.component_bits as u64
    }
}

/// Uniform midrise quantizer over `[-scale, scale]` with `2^bits` cells.
fn midrise(x: f64, scale: f64, bits: u32) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    let half = (1_i64 << (bits - 1)) as f64;
    let step = scale / half;
    let idx = (x / step).floor().clamp(-half, half - 1.0);
    (idx + 0.5) * step
}

/// Quantize real and imaginary parts with a shared full-scale equal to the
/// largest component magnitude.
pub fn quantize_components(values: &[Complex64], bits: u32) -> Result<QuantizedVector> {
    if values.is_empty() {
        return Err(Error::Contract("cannot quantize an empty vector".into()));
    }
    if bits == 0 || bits > MAX_BITS {
        return Err(Error::config("budget.component_bits", format!("must lie in 1..={MAX_BITS}")));
    }
    let scale = values
        .iter()
        .flat_map(|z| [z.re.abs(), z.im.abs()])
        .fold(0.0, f64::max);
    let values = values
        .iter()
        .map(|z| Complex64::new(midrise(z.re, scale, bits), midrise(z.im, scale, bits)))
        .collect();
    Ok(QuantizedVector {
        values,
        scale,
        component_bits: bits,
    })
}

/// Feedback payload in bits: `2·len·Q`.
pub fn feedback_payload_bits(mode: FeedbackMode, pilot_length: usize, elements: usize, component_bits: u32) -> u64 {
    let len = match mode {
        FeedbackMode::RawPilots => pilot_length,
        FeedbackMode::Processed => elements,
    };
    2 * len as u64 * component_bits as u64
}

/// Quantize the vector the chosen mode sends back: the pilot samples `y`
/// for raw feedback, the estimate `ĝ` for processed feedback.
pub fn quantize_channel_feedback(
    payload: &[Complex64],
    component_bits: u32,
    mode: FeedbackMode,
) -> Result<(QuantizedVector, FeedbackMode)> {
    Ok((quantize_components(payload, component_bits)?, mode))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparsifyingBasis {
    /// Orthonormal `N`-point DFT.
    Dft,
    /// Identity (element domain).
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedFeedback {
    pub basis: SparsifyingBasis,
    pub length: usize,
    pub kept_indices: Vec<usize>,
    pub coefficients: QuantizedVector,
}

impl CompressedFeedback {
    pub fn kept_count(&self) -> usize {
        self.kept_indices.len()
    }

    /// Coefficient bits `2·K·bits`.
    pub fn payload_bits(&self) -> u64 {
        self.coefficients.payload_bits()
    }

    /// Support side information `K·⌈log₂ N⌉`.
    pub fn index_bits(&self) -> u64 {
        let per = if self.length <= 1 {
            0
        } else {
            usize::BITS - (self.length - 1).leading_zeros()
        };
        self.kept_count() as u64 * per as u64
    }

    pub fn total_bits(&self) -> u64 {
        self.payload_bits() + self.index_bits()
    }
}

fn transform(values: &[Complex64], basis: SparsifyingBasis, inverse: bool) -> Vec<Complex64> {
    let mut buf = values.to_vec();
    if basis == SparsifyingBasis::Identity {
        return buf;
    }
    let n = buf.len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    fft.process(&mut buf);
    let s = 1.0 / (n as f64).sqrt();
    buf.iter_mut().for_each(|v| *v *= s);
    buf
}

/// Keep the `K` largest transform coefficients (ties go to the lower index)
/// and quantize them.
pub fn cs_compress(
    g_hat: &[Complex64],
    kept: usize,
    bits: u32,
    basis: SparsifyingBasis,
) -> Result<CompressedFeedback> {
    let n = g_hat.len();
    if kept == 0 || kept > n {
        return Err(Error::Contract(format!("kept count {kept} outside 1..={n}")));
    }
    let coeffs = transform(g_hat, basis, false);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        coeffs[b]
            .norm_sqr()
            .total_cmp(&coeffs[a].norm_sqr())
            .then(a.cmp(&b))
    });
    let mut kept_indices: Vec<usize> = order[..kept].to_vec();
    kept_indices.sort_unstable();
    let selected: Vec<Complex64> = kept_indices.iter().map(|&i| coeffs[i]).collect();
    Ok(CompressedFeedback {
        basis,
        length: n,
        kept_indices,
        coefficients: quantize_components(&selected, bits)?,
    })
}

/// Inverse-transform the sparse coefficient vector.
pub fn cs_reconstruct(fb: &CompressedFeedback) -> Vec<Complex64> {
    let mut sparse = vec![Complex64::new(0.0, 0.0); fb.length];
    for (&i, &v) in fb.kept_indices.iter().zip(&fb.coefficients.values) {
        sparse[i] = v;
    }
    transform(&sparse, fb.basis, true)
}

/// Uplink and framing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeedbackBudget {
    /// β (bit/s/Hz).
    pub spectral_efficiency: f64,
    /// B_FB (Hz).
    pub feedback_bandwidth: f64,
    /// T (s).
    pub frame_duration: f64,
    /// R_s (symbols/s).
    pub symbol_rate: f64,
    /// η_min, the least fraction of the frame left for data.
    pub min_data_duty: f64,
}

impl FeedbackBudget {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("budget.spectral_efficiency", self.spectral_efficiency),
            ("budget.feedback_bandwidth_hz", self.feedback_bandwidth),
            ("budget.frame_duration_ms", self.frame_duration),
            ("budget.symbol_rate_per_s", self.symbol_rate),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be > 0"));
            }
        }
        if !(0.0..1.0).contains(&self.min_data_duty) {
            return Err(Error::config("budget.min_data_duty", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Uplink bits available per frame, `β B_FB T`.
    pub fn bits_per_frame(&self) -> f64 {
        self.spectral_efficiency * self.feedback_bandwidth * self.frame_duration
    }
}

/// `τ_FB = bits / (β B_FB T)`.
pub fn feedback_time_fraction(budget: &FeedbackBudget, payload_bits: u64) -> f64 {
    payload_bits as f64 / budget.bits_per_frame()
}

/// `τ_pilot = M / (R_s T)`.
pub fn pilot_time_fraction(budget: &FeedbackBudget, pilot_length: usize) -> f64 {
    pilot_length as f64 / (budget.symbol_rate * budget.frame_duration)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub feasible: bool,
    pub tau_pilot: f64,
    pub tau_fb: f64,
    /// `1 − η_min − τ_pilot − τ_FB`; negative when infeasible.
    pub slack: f64,
}

/// Joint overhead check `τ_pilot + τ_FB ≤ 1 − η_min` (inclusive).
pub fn overhead_feasible(pilot_length: usize, budget: &FeedbackBudget, payload_bits: u64) -> OverheadReport {
    let tau_pilot = pilot_time_fraction(budget, pilot_length);
    let tau_fb = feedback_time_fraction(budget, payload_bits);
    let available = 1.0 - budget.min_data_duty;
    OverheadReport {
        feasible: tau_pilot + tau_fb <= available,
        tau_pilot,
        tau_fb,
        slack: available - tau_pilot - tau_fb,
    }
}

/// Largest per-component bit depth whose processed payload `2NQ` fits next
/// to the pilot length required for the NMSE target.
pub fn max_quantization_depth(
    elements: usize,
    budget: &FeedbackBudget,
    target_nmse: f64,
    pilot_snr: f64,
) -> Result<u32> {
    budget.validate()?;
    let m_req = required_pilot_length(elements, target_nmse, pilot_snr)?;
    let bracket = (1.0 - budget.min_data_duty) - pilot_time_fraction(budget, m_req);
    if bracket <= 0.0 {
        return Ok(0);
    }
    let fits = |q: u64| {
        overhead_feasible(m_req, budget, 2 * elements as u64 * q).feasible
    };
    let estimate = (bracket * budget.bits_per_frame() / (2.0 * elements as f64) + 1e-9).floor();
    let mut q = estimate.clamp(0.0, u32::MAX as f64) as u64;
    while q > 0 && !fits(q) {
        q -= 1;
    }
    while q < u32::MAX as u64 && fits(q + 1) {
        q += 1;
    }
    Ok(q as u32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn budget() -> FeedbackBudget {
        FeedbackBudget {
            spectral_efficiency: 1.0,
            feedback_bandwidth: 1e6,
            frame_duration: 10e-3,
            symbol_rate: 1e6,
            min_data_duty: 0.2,
        }
    }

    #[test]
    fn phase_quantizer_examples() {
        assert_eq!(phase_quantize(0.0, 4), 0.0);
        assert_eq!(phase_quantize(0.75 * PI, 1), PI);
        assert_eq!(phase_quantize(TAU - 0.01, 3), 0.0);
        assert_eq!(phase_quantize(-0.4 * PI, 2), 1.5 * PI);
    }

    #[test]
    fn quantizer_error_and_membership() {
        for b in 1..=8 {
            let q = QuantizerSpec::new(b).unwrap();
            let book = q.codebook();
            for i in 0..10_000 {
                let phi = -10.0 + 20.0 * i as f64 / 10_000.0;
                let out = q.quantize(phi);
                assert!(book.contains(&out));
                assert!(circular_distance(out, phi) <= q.step() / 2.0 + 1e-12);
                assert_eq!(q.quantize(out), out);
            }
        }
    }

    #[test]
    fn payload_accounting() {
        assert_eq!(feedback_payload_bits(FeedbackMode::Processed, 128, 64, 6), 768);
        assert_eq!(feedback_payload_bits(FeedbackMode::RawPilots, 128, 64, 6), 1536);
    }

    #[test]
    fn fine_quantization_is_nearly_lossless() {
        let v: Vec<Complex64> = (0..64)
            .map(|i| Complex64::from_polar(1.0 + 0.01 * i as f64, 0.37 * i as f64))
            .collect();
        let q = quantize_components(&v, 16).unwrap();
        let err = crate::estimation::nmse(&q.values, &v).unwrap();
        assert!(err < 1e-8, "{err}");
        assert!(quantize_components(&[], 4).is_err());
    }

    #[test]
    fn midrise_never_returns_zero_and_stays_in_range() {
        for x in [-1.0, -0.3, 0.0, 0.2, 1.0] {
            let y = midrise(x, 1.0, 3);
            assert!(y != 0.0 && y.abs() <= 1.0);
            assert!((y - x).abs() <= 0.125 + 1e-15);
        }
    }

    #[test]
    fn compression_round_trip() {
        let v: Vec<Complex64> = (0..16)
            .map(|i| Complex64::new((i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()))
            .collect();
        let fb = cs_compress(&v, 16, 16, SparsifyingBasis::Dft).unwrap();
        let back = cs_reconstruct(&fb);
        assert!(crate::estimation::nmse(&back, &v).unwrap() < 1e-8);
        assert_eq!(fb.index_bits(), 16 * 4);
        assert_eq!(fb.payload_bits(), 2 * 16 * 16);
        assert!(cs_compress(&v, 0, 8, SparsifyingBasis::Dft).is_err());
        assert!(cs_compress(&v, 17, 8, SparsifyingBasis::Dft).is_err());
    }

    #[test]
    fn single_tone_is_recovered_from_one_coefficient() {
        let n = 32;
        let v: Vec<Complex64> = (0..n)
            .map(|i| Complex64::from_polar(1.0, TAU * 5.0 * i as f64 / n as f64))
            .collect();
        let fb = cs_compress(&v, 1, 16, SparsifyingBasis::Dft).unwrap();
        assert_eq!(fb.kept_indices, vec![5]);
        assert!(crate::estimation::nmse(&cs_reconstruct(&fb), &v).unwrap() < 1e-8);
    }

    #[test]
    fn time_fractions() {
        let b = budget();
        assert_eq!(feedback_time_fraction(&b, 0), 0.0);
        assert!((feedback_time_fraction(&b, 768) - 0.0768).abs() < 1e-15);
        let longer = FeedbackBudget { frame_duration: 20e-3, ..b };
        assert!((feedback_time_fraction(&longer, 768) - 0.0384).abs() < 1e-15);
        let r = overhead_feasible(128, &FeedbackBudget { min_data_duty: 0.9, ..b }, 768);
        assert!((r.tau_pilot - 0.0128).abs() < 1e-15);
        assert!(r.feasible);
    }

    #[test]
    fn boundary_is_inclusive() {
        // 0.25 + 0.25 = 0.5 exactly in binary
        let b = FeedbackBudget {
            spectral_efficiency: 1.0,
            feedback_bandwidth: 100.0,
            frame_duration: 1.0,
            symbol_rate: 100.0,
            min_data_duty: 0.5,
        };
        let r = overhead_feasible(25, &b, 25);
        assert_eq!(r.slack, 0.0);
        assert!(r.feasible);
        assert!(!overhead_feasible(25, &b, 26).feasible);
    }

    #[test]
    fn q_max_examples() {
        let b = budget();
        assert_eq!(max_quantization_depth(64, &b, 0.01, 100.0).unwrap(), 62);
        let starved = FeedbackBudget { frame_duration: 1e-4, ..b };
        assert_eq!(max_quantization_depth(64, &starved, 0.005, 100.0).unwrap(), 0);
    }
}
