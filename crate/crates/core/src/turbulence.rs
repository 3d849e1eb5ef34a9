//! Unit-mean scintillation factors for each hop.
//!
//! Log-normal uses the log-intensity variance `σ²_lnI` (the log-amplitude
//! variance is `σ²_lnI / 4`). Gamma–Gamma draws are the product of two
//! independent unit-mean Gamma variates, which has the Gamma–Gamma law
//! without touching the Bessel-function density.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "regime", rename_all = "lowercase", deny_unknown_fields)]
pub enum TurbulenceSpec {
    #[default]
    None,
    Lognormal {
        sigma_ln_irradiance_sq: f64,
    },
    Gammagamma {
        alpha: f64,
        beta: f64,
    },
}

impl TurbulenceSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TurbulenceSpec::None => Ok(()),
            TurbulenceSpec::Lognormal { sigma_ln_irradiance_sq } => {
                if sigma_ln_irradiance_sq >= 0.0 && sigma_ln_irradiance_sq.is_finite() {
                    Ok(())
                } else {
                    Err(Error::config(
                        "turbulence.sigma_ln_irradiance_sq",
                        "must be finite and >= 0",
                    ))
                }
            }
            TurbulenceSpec::Gammagamma { alpha, beta } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::config("turbulence.alpha", "must be > 0"));
                }
                if !(beta > 0.0 && beta.is_finite()) {
                    return Err(Error::config("turbulence.beta", "must be > 0"));
                }
                Ok(())
            }
        }
    }

    /// True when every draw equals one.
    pub fn is_degenerate(&self) -> bool {
        match *self {
            TurbulenceSpec::None => true,
            TurbulenceSpec::Lognormal { sigma_ln_irradiance_sq } => sigma_ln_irradiance_sq == 0.0,
            TurbulenceSpec::Gammagamma { .. } => false,
        }
    }

    /// Variance of `H` implied by the model.
    pub fn irradiance_variance(&self) -> f64 {
        match *self {
            TurbulenceSpec::None => 0.0,
            TurbulenceSpec::Lognormal { sigma_ln_irradiance_sq } => sigma_ln_irradiance_sq.exp_m1(),
            TurbulenceSpec::Gammagamma { alpha, beta } => 1.0 / alpha + 1.0 / beta + 1.0 / (alpha * beta),
        }
    }
}

/// Draw one irradiance factor `H > 0` with `E[H] = 1`.
pub fn sample_irradiance<R: Rng + ?Sized>(spec: &TurbulenceSpec, rng: &mut R) -> f64 {
    match *spec {
        TurbulenceSpec::None => 1.0,
        TurbulenceSpec::Lognormal { sigma_ln_irradiance_sq: s } => {
            if s == 0.0 {
                return 1.0;
            }
            let normal = Normal::new(-0.5 * s, s.sqrt()).expect("validated variance");
            normal.sample(rng).exp()
        }
        TurbulenceSpec::Gammagamma { alpha, beta } => {
            let x = Gamma::new(alpha, 1.0 / alpha).expect("validated shape");
            let y = Gamma::new(beta, 1.0 / beta).expect("validated shape");
            x.sample(rng) * y.sample(rng)
        }
    }
}

/// Closed-form `E[√H]`.
pub fn mean_sqrt_irradiance(spec: &TurbulenceSpec) -> f64 {
    match *spec {
        TurbulenceSpec::None => 1.0,
        TurbulenceSpec::Lognormal { sigma_ln_irradiance_sq } => (-sigma_ln_irradiance_sq / 8.0).exp(),
        TurbulenceSpec::Gammagamma { alpha, beta } => {
            let ln = libm::lgamma(alpha + 0.5) + libm::lgamma(beta + 0.5)
                - libm::lgamma(alpha)
                - libm::lgamma(beta)
                - 0.5 * (alpha * beta).ln();
            ln.exp()
        }
    }
}

/// `E|g_n|` from the deterministic power `E|g_n|²` and the per-hop models.
pub fn mean_abs_g(baseline_power: f64, spec_tr: &TurbulenceSpec, spec_rr: &TurbulenceSpec) -> f64 {
    debug_assert!(baseline_power >= 0.0);
    baseline_power.sqrt() * mean_sqrt_irradiance(spec_tr) * mean_sqrt_irradiance(spec_rr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn degenerate_regimes_are_one() {
        let mut rng = rng_from_seed(1);
        let none = TurbulenceSpec::None;
        let zero = TurbulenceSpec::Lognormal { sigma_ln_irradiance_sq: 0.0 };
        for _ in 0..100 {
            assert_eq!(sample_irradiance(&none, &mut rng), 1.0);
            assert_eq!(sample_irradiance(&zero, &mut rng), 1.0);
        }
        assert_eq!(mean_sqrt_irradiance(&none), 1.0);
    }

    #[test]
    fn closed_form_reference_values() {
        let ln = TurbulenceSpec::Lognormal { sigma_ln_irradiance_sq: 0.25 };
        assert!((mean_sqrt_irradiance(&ln) - 0.969_233_234_476_344).abs() < 1e-14);
        let gg = TurbulenceSpec::Gammagamma { alpha: 4.0, beta: 4.0 };
        assert!((mean_sqrt_irradiance(&gg) - 0.939_563_232_579_955_3).abs() < 1e-12);
        let both = mean_abs_g(4.0, &ln, &ln);
        assert!((both - 2.0 * 0.939_413_062_813_475_8).abs() < 1e-14);
    }

    #[test]
    fn lognormal_sample_mean_is_one() {
        let spec = TurbulenceSpec::Lognormal { sigma_ln_irradiance_sq: 0.25 };
        let mut rng = rng_from_seed(42);
        let n = 1_000_000;
        let mean = (0..n).map(|_| sample_irradiance(&spec, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 3e-3, "{mean}");
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(TurbulenceSpec::Lognormal { sigma_ln_irradiance_sq: -0.1 }.validate().is_err());
        assert!(TurbulenceSpec::Gammagamma { alpha: 0.0, beta: 1.0 }.validate().is_err());
        assert!(TurbulenceSpec::Gammagamma { alpha: 2.0, beta: f64::NAN }.validate().is_err());
    }
}
