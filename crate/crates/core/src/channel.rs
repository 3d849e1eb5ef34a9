//! Per-hop field gains, the cascaded channel vector, receiver noise, and
//! the closed-form SNR expressions.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::Scenario;
use crate::error::{Error, Result};
use crate::estimation::complex_gaussian;
use crate::geometry::{direction_cosines, HopGeometry};
use crate::pixel_optics::{per_hop_gain, JitterSpec, PixelOpticsSpec, QuadratureSpec};
use crate::seed::rng_from_seed;
use crate::turbulence::{mean_sqrt_irradiance, sample_irradiance, TurbulenceSpec};

pub const ELECTRON_CHARGE: f64 = 1.602_176_634e-19;
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Static pixel efficiency `η_opt = R ξ_p L_ins`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalEfficiencySpec {
    pub reflectivity: f64,
    pub polarization_efficiency: f64,
    pub insertion_loss: f64,
}

impl OpticalEfficiencySpec {
    pub fn eta(&self) -> f64 {
        self.reflectivity * self.polarization_efficiency * self.insertion_loss
    }

    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("efficiency.reflectivity", self.reflectivity),
            ("efficiency.polarization_efficiency", self.polarization_efficiency),
            ("efficiency.insertion_loss", self.insertion_loss),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::config(key, "must lie in (0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub tx_directivity: f64,
    pub rx_directivity: f64,
    /// Beer–Lambert extinction α (1/m).
    pub extinction: f64,
    /// A_n = Δx Δy (m²).
    pub pixel_area: f64,
    /// k = 2π/λ (rad/m).
    pub wavenumber: f64,
    pub data_power: f64,
    pub pilot_power: f64,
}

impl LinkSpec {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("link.tx_directivity", self.tx_directivity),
            ("link.rx_directivity", self.rx_directivity),
            ("geometry.pixel_width_mm", self.pixel_area),
            ("geometry.wavelength_nm", self.wavenumber),
            ("link.data_power_w", self.data_power),
            ("link.pilot_power_w", self.pilot_power),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be > 0"));
            }
        }
        if !(self.extinction >= 0.0 && self.extinction.is_finite()) {
            return Err(Error::config("link.extinction_per_m", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Hop {
    TxToRis,
    RisToRx,
}

/// How small-scale fading enters the cascaded coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FadingMode {
    /// Deterministic baseline times `√(H_tr H_rr)`.
    #[default]
    Scintillation,
    /// Baseline times `ζ_tr ζ_rr` with `ζ ~ CN(0, 1)`; excludes scintillation.
    ComplexGaussian,
}

/// Deterministic LOS field gain of one hop:
/// `√(A G Ḡ η / (4π d)²) e^{−αd/2} e^{−jkd}`.
pub fn hop_field_gain(
    distance: f64,
    pixel_gain: f64,
    directivity: f64,
    link: &LinkSpec,
    efficiency: &OpticalEfficiencySpec,
) -> Complex64 {
    let power = link.pixel_area * directivity * pixel_gain * efficiency.eta()
        / (4.0 * PI * distance).powi(2);
    let magnitude = power.sqrt() * (-0.5 * link.extinction * distance).exp();
    Complex64::from_polar(magnitude, -(link.wavenumber * distance).rem_euclid(2.0 * PI))
}

/// One channel realization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CascadedChannel {
    pub g: Vec<Complex64>,
    /// Deterministic part `h_rr h_tr`.
    pub baseline: Vec<Complex64>,
    /// Per-element power factors of each hop (`|ζ|²` in complex-fading mode).
    pub irradiance_tr: Vec<f64>,
    pub irradiance_rr: Vec<f64>,
    /// Seed that regenerates this realization.
    pub seed: u64,
}

/// Everything about the channel that does not change between trials.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    pub hops: HopGeometry,
    /// Long-exposure gain per pixel, including `S ρ`.
    pub pixel_gain_tr: Vec<f64>,
    pub pixel_gain_rr: Vec<f64>,
    pub link: LinkSpec,
    pub efficiency: OpticalEfficiencySpec,
    pub turbulence_tr: TurbulenceSpec,
    pub turbulence_rr: TurbulenceSpec,
    pub fading: FadingMode,
    pub baseline: Vec<Complex64>,
    /// `E|g_n|²`.
    pub mean_power: Vec<f64>,
    /// `E|g_n|`.
    pub mean_amplitude: Vec<f64>,
}

fn hop_gains(
    mus: &[[f64; 2]],
    optics: &PixelOpticsSpec,
    shared: &JitterSpec,
    per_pixel: Option<&[JitterSpec]>,
    quad: &QuadratureSpec,
) -> Result<Vec<f64>> {
    if let Some(list) = per_pixel {
        if list.len() != mus.len() {
            return Err(Error::config("jitter", "per-pixel covariance list length differs from pixel count"));
        }
    }
    mus.iter()
        .enumerate()
        .map(|(n, &mu)| {
            let jitter = per_pixel.map_or(shared, |list| &list[n]);
            per_hop_gain(mu, optics, jitter, quad)
        })
        .collect()
}

impl ChannelModel {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        let hops = direction_cosines(&scenario.geometry)?;
        let per = scenario.pixel_jitter.as_ref();
        let gain_tr = hop_gains(
            &hops.mu_tr,
            &scenario.optics_tr,
            &scenario.jitter_tr,
            per.map(|p| p.tr.as_slice()),
            &scenario.quadrature,
        )?;
        let gain_rr = hop_gains(
            &hops.mu_rr,
            &scenario.optics_rr,
            &scenario.jitter_rr,
            per.map(|p| p.rr.as_slice()),
            &scenario.quadrature,
        )?;
        Self::from_parts(
            hops,
            gain_tr,
            gain_rr,
            scenario.link,
            scenario.efficiency,
            scenario.turbulence_tr,
            scenario.turbulence_rr,
            scenario.fading,
        )
    }

    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        hops: HopGeometry,
        pixel_gain_tr: Vec<f64>,
        pixel_gain_rr: Vec<f64>,
        link: LinkSpec,
        efficiency: OpticalEfficiencySpec,
        turbulence_tr: TurbulenceSpec,
        turbulence_rr: TurbulenceSpec,
        fading: FadingMode,
    ) -> Result<Self> {
        link.validate()?;
        efficiency.validate()?;
        turbulence_tr.validate()?;
        turbulence_rr.validate()?;
        if fading == FadingMode::ComplexGaussian
            && !(turbulence_tr.is_degenerate() && turbulence_rr.is_degenerate())
        {
            return Err(Error::config(
                "turbulence.fading",
                "complex_gaussian fading cannot be combined with scintillation",
            ));
        }
        let n = hops.d_tr.len();
        if pixel_gain_tr.len() != n || pixel_gain_rr.len() != n {
            return Err(Error::Contract("pixel gain vectors do not match the geometry".into()));
        }
        let mut model = Self {
            hops,
            pixel_gain_tr,
            pixel_gain_rr,
            link,
            efficiency,
            turbulence_tr,
            turbulence_rr,
            fading,
            baseline: Vec::new(),
            mean_power: Vec::new(),
            mean_amplitude: Vec::new(),
        };
        model.baseline = (0..n)
            .map(|i| model.hop_field_gain(Hop::RisToRx, i) * model.hop_field_gain(Hop::TxToRis, i))
            .collect();
        model.mean_power = (0..n).map(|i| mean_element_power(&model, i)).collect();
        let amp_factor = match fading {
            FadingMode::Scintillation => mean_sqrt_irradiance(&turbulence_tr) * mean_sqrt_irradiance(&turbulence_rr),
            // E|ζ| = √π/2 per hop
            FadingMode::ComplexGaussian => PI / 4.0,
        };
        model.mean_amplitude = model.mean_power.iter().map(|p| p.sqrt() * amp_factor).collect();
        Ok(model)
    }

    pub fn elements(&self) -> usize {
        self.baseline.len()
    }

    pub fn hop_field_gain(&self, hop: Hop, n: usize) -> Complex64 {
        match hop {
            Hop::TxToRis => hop_field_gain(
                self.hops.d_tr[n],
                self.pixel_gain_tr[n],
                self.link.tx_directivity,
                &self.link,
                &self.efficiency,
            ),
            Hop::RisToRx => hop_field_gain(
                self.hops.d_rr[n],
                self.pixel_gain_rr[n],
                self.link.rx_directivity,
                &self.link,
                &self.efficiency,
            ),
        }
    }

    /// `Σ E|g_n|²`.
    pub fn total_mean_power(&self) -> f64 {
        self.mean_power.iter().sum()
    }

    /// `Σ_n E|g_n|² + Σ_{n≠m} E|g_n| E|g_m|`.
    pub fn coherent_mean_power(&self) -> f64 {
        let s: f64 = self.mean_amplitude.iter().sum();
        let sq: f64 = self.mean_amplitude.iter().map(|a| a * a).sum();
        self.total_mean_power() + (s * s - sq).max(0.0)
    }

    /// Index of the pixel closest to the RIS-plane origin (lowest index on ties).
    pub fn boresight_pixel(&self, centers: &[[f64; 2]]) -> usize {
        let mut best = 0;
        let mut best_r = f64::INFINITY;
        for (i, c) in centers.iter().enumerate() {
            let r = c[0] * c[0] + c[1] * c[1];
            if r < best_r {
                best_r = r;
                best = i;
            }
        }
        best
    }
}

/// Closed-form `E|g_n|² = η² e^{−α(d_tr+d_rr)} A² G_T G_R Ḡ_tr Ḡ_rr / ((4π)⁴ d_tr² d_rr²)`.
pub fn mean_element_power(model: &ChannelModel, n: usize) -> f64 {
    let (d_tr, d_rr) = (model.hops.d_tr[n], model.hops.d_rr[n]);
    let l = &model.link;
    let eta = model.efficiency.eta();
    eta * eta
        * (-l.extinction * (d_tr + d_rr)).exp()
        * l.pixel_area
        * l.pixel_area
        * l.tx_directivity
        * l.rx_directivity
        * model.pixel_gain_tr[n]
        * model.pixel_gain_rr[n]
        / ((4.0 * PI).powi(4) * d_tr * d_tr * d_rr * d_rr)
}

/// Draw one realization with a generator owned by the caller.
pub fn cascaded_channel_with<R: Rng + ?Sized>(model: &ChannelModel, rng: &mut R, seed: u64) -> CascadedChannel {
    let n = model.elements();
    let mut g = Vec::with_capacity(n);
    let mut irradiance_tr = Vec::with_capacity(n);
    let mut irradiance_rr = Vec::with_capacity(n);
    for &b in &model.baseline {
        match model.fading {
            FadingMode::Scintillation => {
                let h_tr = sample_irradiance(&model.turbulence_tr, rng);
                let h_rr = sample_irradiance(&model.turbulence_rr, rng);
                g.push(b * (h_tr * h_rr).sqrt());
                irradiance_tr.push(h_tr);
                irradiance_rr.push(h_rr);
            }
            FadingMode::ComplexGaussian => {
                let z_tr = complex_gaussian(rng, 1.0);
                let z_rr = complex_gaussian(rng, 1.0);
                g.push(b * z_tr * z_rr);
                irradiance_tr.push(z_tr.norm_sqr());
                irradiance_rr.push(z_rr.norm_sqr());
            }
        }
    }
    CascadedChannel {
        g,
        baseline: model.baseline.clone(),
        irradiance_tr,
        irradiance_rr,
        seed,
    }
}

/// Realization regenerated from `seed`.
pub fn cascaded_channel(model: &ChannelModel, seed: u64) -> CascadedChannel {
    let mut rng = rng_from_seed(seed);
    cascaded_channel_with(model, &mut rng, seed)
}

/// Receiver front-end parameters (SI units).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReceiverNoiseSpec {
    pub electron_charge: f64,
    pub responsivity: f64,
    pub signal_power: f64,
    pub background_power: f64,
    pub dark_current: f64,
    pub bandwidth: f64,
    pub boltzmann: f64,
    pub temperature: f64,
    pub feedback_resistance: f64,
    pub transconductance: f64,
    pub channel_noise_factor: f64,
    pub series_resistance: f64,
    pub input_capacitance: f64,
    pub bit_rate: f64,
    pub i2: f64,
    pub i3: f64,
    pub i_f: f64,
}

impl ReceiverNoiseSpec {
    pub fn validate(&self) -> Result<()> {
        let non_negative = [
            ("noise.signal_power_w", self.signal_power),
            ("noise.background_power_w", self.background_power),
            ("noise.dark_current_a", self.dark_current),
        ];
        for (key, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be >= 0"));
            }
        }
        let positive = [
            ("noise.electron_charge_c", self.electron_charge),
            ("noise.responsivity_a_per_w", self.responsivity),
            ("noise.bandwidth_hz", self.bandwidth),
            ("noise.boltzmann_j_per_k", self.boltzmann),
            ("noise.temperature_k", self.temperature),
            ("noise.feedback_resistance_ohm", self.feedback_resistance),
            ("noise.transconductance_s", self.transconductance),
            ("noise.channel_noise_factor", self.channel_noise_factor),
            ("noise.series_resistance_ohm", self.series_resistance),
            ("noise.input_capacitance_pf", self.input_capacitance),
            ("noise.bit_rate_per_s", self.bit_rate),
            ("noise.i2", self.i2),
            ("noise.i3", self.i3),
            ("noise.i_f", self.i_f),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(key, "must be > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseVariance {
    pub shot: f64,
    pub thermal: f64,
    pub total: f64,
}

/// Shot plus transimpedance thermal noise variances (A²).
pub fn noise_variance(spec: &ReceiverNoiseSpec) -> NoiseVariance {
    let s = spec;
    let shot = 2.0
        * s.electron_charge
        * (s.responsivity * s.signal_power + s.responsivity * s.background_power + s.dark_current)
        * s.bandwidth;
    let kt = s.boltzmann * s.temperature;
    let c2 = s.input_capacitance * s.input_capacitance;
    let thermal = 4.0 * kt / s.feedback_resistance * s.i2 * s.bit_rate
        + 16.0 * PI * kt / (s.transconductance * s.feedback_resistance)
            * (s.channel_noise_factor + 1.0 / (s.transconductance * s.series_resistance))
            * c2
            * s.i3
            * s.bit_rate.powi(3)
        + 4.0 * PI * PI * kt / (s.transconductance * s.transconductance) * c2 * s.i_f * s.bit_rate.powi(2);
    NoiseVariance {
        shot,
        thermal,
        total: shot + thermal,
    }
}

/// `E[γ★] = (P_d/σ²)(Σ E|g_n|² + Σ_{n≠m} E|g_n| E|g_m|)`.
pub fn expected_optimal_snr(model: &ChannelModel, noise_variance: f64) -> f64 {
    model.link.data_power / noise_variance * model.coherent_mean_power()
}

/// Non-coherent pilot SNR `(P_T/σ²) Σ E|g_n|²`.
pub fn pilot_snr(model: &ChannelModel, noise_variance: f64) -> f64 {
    model.link.pilot_power / noise_variance * model.total_mean_power()
}

/// Pilot SNR including the coherent cross terms.
pub fn coherent_pilot_snr(model: &ChannelModel, noise_variance: f64) -> f64 {
    model.link.pilot_power / noise_variance * model.coherent_mean_power()
}
