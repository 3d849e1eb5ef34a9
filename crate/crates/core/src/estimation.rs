//! Pilot design, least-squares estimation of the cascaded channel, and the
//! associated error laws (NMSE, Fisher information, pilot-length rule).

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, Lu};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PilotKind {
    /// First `N` columns of the `M`-point DFT matrix.
    UnitaryDft,
    /// Unit-modulus entries with independent uniform phases.
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PilotPlan {
    pub pilot_length: usize,
    pub elements: usize,
    pub kind: PilotKind,
    pub pilot_power: f64,
    pub noise_variance: f64,
}

impl PilotPlan {
    pub fn validate(&self) -> Result<()> {
        if self.elements == 0 {
            return Err(Error::config("geometry", "at least one element is required"));
        }
        if self.pilot_length < self.elements {
            return Err(Error::config(
                "pilot.length",
                format!(
                    "pilot length {} is below the element count {}",
                    self.pilot_length, self.elements
                ),
            ));
        }
        if !(self.pilot_power > 0.0) {
            return Err(Error::config("link.pilot_power_w", "must be > 0"));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(Error::config("noise", "noise variance must be >= 0"));
        }
        Ok(())
    }
}

/// Training matrix tagged with how it was built.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMatrix {
    pub kind: PilotKind,
    pub matrix: CMatrix,
}

impl PilotMatrix {
    pub fn pilot_length(&self) -> usize {
        self.matrix.rows
    }

    pub fn elements(&self) -> usize {
        self.matrix.cols
    }
}

/// `e^{-j 2π (m n mod M) / M}` with exact values on the quarter turns.
fn dft_entry(m: usize, n: usize, size: usize) -> Complex64 {
    let k = (m * n) % size;
    if (4 * k).is_multiple_of(size) {
        return match 4 * k / size {
            0 => Complex64::new(1.0, 0.0),
            1 => Complex64::new(0.0, -1.0),
            2 => Complex64::new(-1.0, 0.0),
            _ => Complex64::new(0.0, 1.0),
        };
    }
    Complex64::from_polar(1.0, -2.0 * PI * k as f64 / size as f64)
}

pub fn dft_pilot_matrix(pilot_length: usize, elements: usize) -> PilotMatrix {
    PilotMatrix {
        kind: PilotKind::UnitaryDft,
        matrix: CMatrix::from_fn(pilot_length, elements, |m, n| dft_entry(m, n, pilot_length)),
    }
}

/// Build the training matrix; the generator is only consumed by the
/// general (random-phase) kind.
pub fn make_pilot_matrix<R: Rng + ?Sized>(plan: &PilotPlan, rng: &mut R) -> Result<PilotMatrix> {
    plan.validate()?;
    let (m, n) = (plan.pilot_length, plan.elements);
    Ok(match plan.kind {
        PilotKind::UnitaryDft => dft_pilot_matrix(m, n),
        PilotKind::General => PilotMatrix {
            kind: PilotKind::General,
            matrix: CMatrix::from_fn(m, n, |_, _| {
                Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI))
            }),
        },
    })
}

/// Circular complex Gaussian sample with `E|z|² = variance`.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(s * re, s * im)
}

/// `y = √P_T Φ g + n`.
pub fn simulate_pilot_rx<R: Rng + ?Sized>(
    pilots: &PilotMatrix,
    g: &[Complex64],
    pilot_power: f64,
    noise_variance: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    if g.len() != pilots.elements() {
        return Err(Error::Contract(format!(
            "channel has {} entries, pilot matrix expects {}",
            g.len(),
            pilots.elements()
        )));
    }
    let amp = pilot_power.sqrt();
    let clean = pilots.matrix.mul_vec(g);
    Ok(clean
        .into_iter()
        .map(|v| {
            let noise = if noise_variance > 0.0 {
                complex_gaussian(rng, noise_variance)
            } else {
                Complex64::new(0.0, 0.0)
            };
            amp * v + noise
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMethod {
    Unitary,
    NormalEquations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationResult {
    pub g_hat: Vec<Complex64>,
    /// Complex multiply-accumulates spent (modelled for the factorization).
    pub op_count: u64,
    pub method: EstimatorMethod,
    /// Ratio of extreme LU pivots (1 for the unitary path).
    pub condition_estimate: f64,
}

impl EstimationResult {
    pub fn nmse(&self, g: &[Complex64]) -> Result<f64> {
        nmse(&self.g_hat, g)
    }
}

fn check_rx(pilots: &PilotMatrix, y: &[Complex64], pilot_power: f64) -> Result<()> {
    if y.len() != pilots.pilot_length() {
        return Err(Error::Contract(format!(
            "received {} pilot samples, expected {}",
            y.len(),
            pilots.pilot_length()
        )));
    }
    if !(pilot_power > 0.0) {
        return Err(Error::Contract("pilot power must be > 0".into()));
    }
    Ok(())
}

/// Inversion-free estimate `ĝ = Φᴴ y / (M √P_T)`.
pub fn ls_estimate_unitary(
    pilots: &PilotMatrix,
    y: &[Complex64],
    pilot_power: f64,
) -> Result<EstimationResult> {
    if pilots.kind != PilotKind::UnitaryDft {
        return Err(Error::Contract(
            "unitary estimator called with a non-unitary pilot matrix".into(),
        ));
    }
    check_rx(pilots, y, pilot_power)?;
    let mut macs = 0;
    let scale = 1.0 / (pilots.pilot_length() as f64 * pilot_power.sqrt());
    let g_hat = pilots
        .matrix
        .adjoint_mul_vec(y, &mut macs)
        .into_iter()
        .map(|v| v * scale)
        .collect();
    Ok(EstimationResult {
        g_hat,
        op_count: macs,
        method: EstimatorMethod::Unitary,
        condition_estimate: 1.0,
    })
}

/// Modelled dense-solve cost: `⌈2N³/3⌉ + 2N²` multiply-accumulates.
pub fn factorization_cost(n: usize) -> u64 {
    let n = n as u64;
    (2 * n * n * n).div_ceil(3) + 2 * n * n
}

/// Normal-equations estimate `ĝ = (ΦᴴΦ)⁻¹ Φᴴ y / √P_T`.
pub fn ls_estimate_general(
    pilots: &PilotMatrix,
    y: &[Complex64],
    pilot_power: f64,
) -> Result<EstimationResult> {
    check_rx(pilots, y, pilot_power)?;
    let mut macs = 0;
    let rhs = pilots.matrix.adjoint_mul_vec(y, &mut macs);
    let gram = pilots.matrix.gram(&mut macs);
    let lu = Lu::factor(gram)?;
    macs += factorization_cost(pilots.elements());
    let inv_amp = 1.0 / pilot_power.sqrt();
    let g_hat = lu.solve(&rhs).into_iter().map(|v| v * inv_amp).collect();
    Ok(EstimationResult {
        g_hat,
        op_count: macs,
        method: EstimatorMethod::NormalEquations,
        condition_estimate: lu.condition_estimate,
    })
}

fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// `‖ĝ − g‖² / ‖g‖²`.
pub fn nmse(g_hat: &[Complex64], g: &[Complex64]) -> Result<f64> {
    if g_hat.len() != g.len() {
        return Err(Error::Contract("estimate and channel lengths differ".into()));
    }
    let denom = norm_sqr(g);
    if denom == 0.0 {
        return Err(Error::UndefinedNmse);
    }
    let num: f64 = g_hat.iter().zip(g).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(num / denom)
}

/// `N / (M γ_pilot)`.
pub fn predicted_nmse(elements: usize, pilot_length: usize, pilot_snr: f64) -> f64 {
    elements as f64 / (pilot_length as f64 * pilot_snr)
}

/// Realized pilot SNR `P_T ‖g‖² / σ²`.
pub fn realized_pilot_snr(g: &[Complex64], pilot_power: f64, noise_variance: f64) -> f64 {
    pilot_power * norm_sqr(g) / noise_variance
}

#[derive(Debug, Clone, PartialEq)]
pub struct FisherInformation {
    /// `J = (P_T/σ²) ΦᴴΦ`.
    pub matrix: CMatrix,
    /// `tr(J⁻¹)`, the smallest total error variance of an unbiased estimator.
    pub crlb_trace: f64,
    /// Diagonal of `J⁻¹`.
    pub crlb_diagonal: Vec<f64>,
}

pub fn fisher_information(
    pilots: &PilotMatrix,
    pilot_power: f64,
    noise_variance: f64,
) -> Result<FisherInformation> {
    if !(noise_variance > 0.0) || !(pilot_power > 0.0) {
        return Err(Error::Contract("Fisher information needs P_T > 0 and σ² > 0".into()));
    }
    let mut macs = 0;
    let mut j = pilots.matrix.gram(&mut macs);
    let scale = pilot_power / noise_variance;
    j.data.iter_mut().for_each(|v| *v *= scale);
    let n = j.rows;
    let lu = Lu::factor(j.clone())?;
    let mut crlb_diagonal = Vec::with_capacity(n);
    let mut e = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        e[i] = Complex64::new(1.0, 0.0);
        crlb_diagonal.push(lu.solve(&e)[i].re);
        e[i] = Complex64::new(0.0, 0.0);
    }
    Ok(FisherInformation {
        matrix: j,
        crlb_trace: crlb_diagonal.iter().sum(),
        crlb_diagonal,
    })
}

/// `⌈x⌉`, except that values within 1e-9 (relative) of an integer snap to it.
fn tolerant_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// Smallest `M` meeting the NMSE target: `max(N, ⌈N / (ε γ)⌉)`.
pub fn required_pilot_length(elements: usize, target_nmse: f64, pilot_snr: f64) -> Result<usize> {
    if !(target_nmse > 0.0 && target_nmse < 1.0) {
        return Err(Error::config("pilot.target_nmse", "must lie in (0, 1)"));
    }
    if !(pilot_snr > 0.0) {
        return Err(Error::Contract("pilot SNR must be > 0".into()));
    }
    let raw = tolerant_ceil(elements as f64 / (target_nmse * pilot_snr));
    if !raw.is_finite() || raw > usize::MAX as f64 / 2.0 {
        return Err(Error::Contract("required pilot length overflows".into()));
    }
    Ok((raw as usize).max(elements))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn random_channel(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = rng_from_seed(seed);
        (0..n).map(|_| complex_gaussian(&mut rng, 1.0)).collect()
    }

    #[test]
    fn trivial_pilot() {
        let p = dft_pilot_matrix(1, 1);
        assert_eq!(p.matrix.data, vec![Complex64::new(1.0, 0.0)]);
    }

    #[test]
    fn dft_columns_are_orthogonal() {
        let p = dft_pilot_matrix(4, 2);
        let mut macs = 0;
        let g = p.matrix.gram(&mut macs);
        assert_eq!(g, {
            let mut m = CMatrix::identity(2);
            m.data.iter_mut().for_each(|v| *v *= 4.0);
            m
        });
        let big = dft_pilot_matrix(128, 64);
        let g = big.matrix.gram(&mut macs);
        for i in 0..64 {
            for j in 0..64 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g[(i, j)] / 128.0 - want).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn noiseless_recovery_both_paths() {
        let g = random_channel(8, 3);
        let p = dft_pilot_matrix(16, 8);
        let mut rng = rng_from_seed(0);
        let y = simulate_pilot_rx(&p, &g, 2.0, 0.0, &mut rng).unwrap();
        let u = ls_estimate_unitary(&p, &y, 2.0).unwrap();
        let gen = ls_estimate_general(&p, &y, 2.0).unwrap();
        assert!(nmse(&u.g_hat, &g).unwrap() < 1e-28);
        for (a, b) in u.g_hat.iter().zip(&gen.g_hat) {
            assert!((a - b).norm() <= 1e-10 * a.norm());
        }
        assert_eq!(u.op_count, 128);
    }

    #[test]
    fn general_random_pilots_recover_channel() {
        let g = random_channel(6, 9);
        let plan = PilotPlan {
            pilot_length: 12,
            elements: 6,
            kind: PilotKind::General,
            pilot_power: 1.0,
            noise_variance: 0.0,
        };
        let mut rng = rng_from_seed(5);
        let p = make_pilot_matrix(&plan, &mut rng).unwrap();
        assert!(p.matrix.data.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
        let y = simulate_pilot_rx(&p, &g, 1.0, 0.0, &mut rng).unwrap();
        assert!(ls_estimate_unitary(&p, &y, 1.0).is_err());
        let est = ls_estimate_general(&p, &y, 1.0).unwrap();
        assert!(nmse(&est.g_hat, &g).unwrap() < 1e-20);
    }

    #[test]
    fn short_pilot_is_a_config_error() {
        let plan = PilotPlan {
            pilot_length: 4,
            elements: 8,
            kind: PilotKind::UnitaryDft,
            pilot_power: 1.0,
            noise_variance: 1.0,
        };
        assert!(matches!(
            make_pilot_matrix(&plan, &mut rng_from_seed(0)),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn pure_noise_when_channel_is_zero() {
        let p = dft_pilot_matrix(4, 2);
        let zero = vec![Complex64::new(0.0, 0.0); 2];
        let a = simulate_pilot_rx(&p, &zero, 1.0, 1.0, &mut rng_from_seed(4)).unwrap();
        let b = simulate_pilot_rx(&p, &zero, 1.0, 1.0, &mut rng_from_seed(4)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().any(|v| v.norm() > 0.0));
    }

    #[test]
    fn nmse_laws() {
        assert_eq!(predicted_nmse(64, 128, 100.0), 0.005);
        let g = random_channel(4, 1);
        assert_eq!(nmse(&g, &g).unwrap(), 0.0);
        let zero = vec![Complex64::new(0.0, 0.0); 4];
        assert!(matches!(nmse(&g, &zero), Err(Error::UndefinedNmse)));
    }

    #[test]
    fn fisher_for_unitary_pilots() {
        let p = dft_pilot_matrix(128, 4);
        let f = fisher_information(&p, 1.0, 1.0).unwrap();
        for i in 0..4 {
            assert!((f.matrix[(i, i)].re - 128.0).abs() < 1e-9);
            assert!((f.crlb_diagonal[i] - 1.0 / 128.0).abs() < 1e-15);
        }
        let f2 = fisher_information(&dft_pilot_matrix(256, 4), 1.0, 1.0).unwrap();
        assert!((f2.matrix[(0, 0)].re - 256.0).abs() < 1e-9);
    }

    #[test]
    fn pilot_length_rule() {
        assert_eq!(required_pilot_length(64, 0.005, 100.0).unwrap(), 128);
        assert_eq!(required_pilot_length(64, 0.01, 100.0).unwrap(), 64);
        assert_eq!(required_pilot_length(64, 0.005, 1e9).unwrap(), 64);
        assert_eq!(required_pilot_length(64, 0.0025, 100.0).unwrap(), 256);
        assert_eq!(required_pilot_length(64, 0.005, 50.0).unwrap(), 256);
        assert!(required_pilot_length(64, 0.0, 100.0).is_err());
    }

    #[test]
    fn factorization_model() {
        assert_eq!(factorization_cost(3), 18 + 18);
        assert!(factorization_cost(16) as f64 >= 2.0 / 3.0 * 4096.0 + 512.0);
    }
}
