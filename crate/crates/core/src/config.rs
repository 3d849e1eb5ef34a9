//! Scenario configuration: the TOML file layout (units in key names) and
//! its validated SI-unit form.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{
    noise_variance, ChannelModel, FadingMode, LinkSpec, OpticalEfficiencySpec, ReceiverNoiseSpec,
    BOLTZMANN, ELECTRON_CHARGE,
};
use crate::error::{Error, Result};
use crate::estimation::PilotKind;
use crate::feedback::{FeedbackBudget, MAX_BITS};
use crate::geometry::ScenarioGeometry;
use crate::phase_control::{AdaptConfig, QuantizeWhen, StepSchedule};
use crate::pixel_optics::{JitterSpec, PixelOpticsSpec, QuadratureMethod, QuadratureSpec};
use crate::turbulence::TurbulenceSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoWord {
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InfWord {
    Inf,
}

/// A count that may be derived automatically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AutoOr<T> {
    Value(T),
    Auto(AutoWord),
}

impl<T: Copy> AutoOr<T> {
    pub fn value(&self) -> Option<T> {
        match self {
            AutoOr::Value(v) => Some(*v),
            AutoOr::Auto(_) => None,
        }
    }
}

/// Phase resolution in bits, or `"inf"` for continuous phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PhaseBits {
    Bits(u32),
    Continuous(InfWord),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometrySection {
    pub tx_position_m: [f64; 3],
    pub ris_plane_z_m: f64,
    pub rx_position_m: [f64; 3],
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub pitch_mm: f64,
    pub pixel_width_mm: f64,
    pub pixel_height_mm: f64,
    pub wavelength_nm: f64,
}

impl Default for GeometrySection {
    fn default() -> Self {
        Self {
            tx_position_m: [0.0, 0.0, 0.0],
            ris_plane_z_m: 1000.0,
            rx_position_m: [0.0, 0.0, 2500.0],
            grid_rows: 8,
            grid_cols: 8,
            pitch_mm: 20.0,
            pixel_width_mm: 2.0,
            pixel_height_mm: 2.0,
            wavelength_nm: 1550.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsSection {
    pub strehl_tr: f64,
    pub strehl_rr: f64,
    pub obliquity_tr: f64,
    pub obliquity_rr: f64,
    pub quadrature_nodes: usize,
    pub quadrature_max_nodes: usize,
    pub quadrature_rel_tol: f64,
    pub quadrature_method: QuadratureMethod,
}

impl Default for OpticsSection {
    fn default() -> Self {
        let q = QuadratureSpec::default();
        Self {
            strehl_tr: 1.0,
            strehl_rr: 1.0,
            obliquity_tr: 1.0,
            obliquity_rr: 1.0,
            quadrature_nodes: q.nodes_per_axis,
            quadrature_max_nodes: q.max_nodes_per_axis,
            quadrature_rel_tol: q.relative_tolerance,
            quadrature_method: q.method,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HopJitterSection {
    pub sigma_x_mrad: f64,
    pub sigma_y_mrad: f64,
    pub correlation: f64,
}

impl Default for HopJitterSection {
    fn default() -> Self {
        Self {
            sigma_x_mrad: 0.1,
            sigma_y_mrad: 0.1,
            correlation: 0.0,
        }
    }
}

impl HopJitterSection {
    fn resolve(&self, key: &str) -> Result<JitterSpec> {
        if !(self.sigma_x_mrad >= 0.0 && self.sigma_y_mrad >= 0.0) {
            return Err(Error::config(format!("jitter.{key}.sigma_x_mrad"), "RMS jitter must be >= 0"));
        }
        if !(-1.0..=1.0).contains(&self.correlation) {
            return Err(Error::config(format!("jitter.{key}.correlation"), "must lie in [-1, 1]"));
        }
        let j = JitterSpec::correlated(self.sigma_x_mrad * 1e-3, self.sigma_y_mrad * 1e-3, self.correlation);
        j.validate()?;
        Ok(j)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct JitterSection {
    pub tr: HopJitterSection,
    pub rr: HopJitterSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TurbulenceSection {
    pub fading: FadingMode,
    pub tr: TurbulenceSpec,
    pub rr: TurbulenceSpec,
}

impl Default for TurbulenceSection {
    fn default() -> Self {
        let weak = TurbulenceSpec::Lognormal {
            sigma_ln_irradiance_sq: 0.1,
        };
        Self {
            fading: FadingMode::Scintillation,
            tr: weak,
            rr: weak,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EfficiencySection {
    pub reflectivity: f64,
    pub polarization_efficiency: f64,
    pub insertion_loss: f64,
}

impl Default for EfficiencySection {
    fn default() -> Self {
        Self {
            reflectivity: 0.7,
            polarization_efficiency: 1.0,
            insertion_loss: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    pub tx_directivity: f64,
    pub rx_directivity: f64,
    pub extinction_per_m: f64,
    pub data_power_w: f64,
    pub pilot_power_w: f64,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            tx_directivity: 1.0,
            rx_directivity: 1.0,
            extinction_per_m: 1e-4,
            data_power_w: 1.0,
            pilot_power_w: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCalibration {
    /// σ² chosen so the mean pilot SNR equals `pilot.snr_db`.
    #[default]
    PilotSnr,
    /// σ² from the shot and thermal noise model.
    Physical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub calibration: NoiseCalibration,
    pub responsivity_a_per_w: f64,
    /// Defaults to `P_d E|g|²` of the pixel nearest the array centre.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signal_power_w: Option<f64>,
    pub background_power_w: f64,
    pub dark_current_a: f64,
    pub bandwidth_hz: f64,
    pub temperature_k: f64,
    pub feedback_resistance_ohm: f64,
    pub transconductance_s: f64,
    pub channel_noise_factor: f64,
    pub series_resistance_ohm: f64,
    pub input_capacitance_pf: f64,
    pub bit_rate_per_s: f64,
    pub i2: f64,
    pub i3: f64,
    pub i_f: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            calibration: NoiseCalibration::PilotSnr,
            responsivity_a_per_w: 1.0,
            signal_power_w: None,
            background_power_w: 0.0,
            dark_current_a: 1e-9,
            bandwidth_hz: 5.62e8,
            temperature_k: 300.0,
            feedback_resistance_ohm: 1e4,
            transconductance_s: 0.03,
            channel_noise_factor: 0.82,
            series_resistance_ohm: 50.0,
            input_capacitance_pf: 1.0,
            bit_rate_per_s: 1e9,
            i2: 0.562,
            i3: 0.0868,
            i_f: 0.184,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PilotSection {
    pub length: AutoOr<usize>,
    pub kind: PilotKind,
    pub snr_db: f64,
    pub target_nmse: f64,
}

impl Default for PilotSection {
    fn default() -> Self {
        Self {
            length: AutoOr::Value(128),
            kind: PilotKind::UnitaryDft,
            snr_db: 20.0,
            target_nmse: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSection {
    pub component_bits: AutoOr<u32>,
    pub spectral_efficiency: f64,
    pub feedback_bandwidth_hz: f64,
    pub frame_duration_ms: f64,
    pub symbol_rate_per_s: f64,
    pub min_data_duty: f64,
}

impl Default for BudgetSection {
    fn default() -> Self {
        Self {
            component_bits: AutoOr::Value(6),
            spectral_efficiency: 1.0,
            feedback_bandwidth_hz: 1e6,
            frame_duration_ms: 10.0,
            symbol_rate_per_s: 1e6,
            min_data_duty: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlSection {
    pub bits: PhaseBits,
    pub max_iterations: usize,
    pub schedule: StepSchedule,
    pub step_scale: f64,
    pub tolerance: f64,
    pub quantize: QuantizeWhen,
}

impl Default for ControlSection {
    fn default() -> Self {
        let a = AdaptConfig::default();
        Self {
            bits: PhaseBits::Bits(6),
            max_iterations: a.max_iterations,
            schedule: a.schedule,
            step_scale: a.step_scale,
            tolerance: a.tolerance,
            quantize: a.quantize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub trials: usize,
    pub seed: u64,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self { trials: 200, seed: 1 }
    }
}

/// The on-disk scenario description. Every key is optional; missing keys
/// take the reference values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub geometry: GeometrySection,
    pub optics: OpticsSection,
    pub jitter: JitterSection,
    pub turbulence: TurbulenceSection,
    pub efficiency: EfficiencySection,
    pub link: LinkSection,
    pub noise: NoiseSection,
    pub pilot: PilotSection,
    pub budget: BudgetSection,
    pub control: ControlSection,
    pub experiment: ExperimentSection,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(offending_key(&e).unwrap_or_else(|| "config".into()), e.message()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// The effective configuration with every default written out.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialize(e.to_string()))
    }

    /// Hex SHA-256 of the effective configuration.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml_string()?.as_bytes())))
    }

    /// Validate every section and convert to SI units.
    pub fn resolve(&self) -> Result<Scenario> {
        let g = &self.geometry;
        if g.grid_rows == 0 || g.grid_cols == 0 {
            return Err(Error::config("geometry.grid_rows", "grid must have at least one pixel"));
        }
        if !(g.pitch_mm > 0.0) {
            return Err(Error::config("geometry.pitch_mm", "must be > 0"));
        }
        if g.pitch_mm < g.pixel_width_mm.max(g.pixel_height_mm) {
            return Err(Error::config("geometry.pitch_mm", "pixels would overlap"));
        }
        let wavelength = g.wavelength_nm * 1e-9;
        let geometry = ScenarioGeometry::square_grid(
            g.tx_position_m,
            g.ris_plane_z_m,
            g.rx_position_m,
            g.grid_rows,
            g.grid_cols,
            g.pitch_mm * 1e-3,
            g.pixel_width_mm * 1e-3,
            g.pixel_height_mm * 1e-3,
            wavelength,
        )?;

        let o = &self.optics;
        let optics = |strehl: f64, obliquity: f64, hop: &str| {
            PixelOpticsSpec::from_pixel(geometry.pixel_width, geometry.pixel_height, wavelength, strehl, obliquity)
                .map_err(|e| match e {
                    Error::Config { key, reason } => Error::Config {
                        key: format!("{key}_{hop}"),
                        reason,
                    },
                    other => other,
                })
        };
        let optics_tr = optics(o.strehl_tr, o.obliquity_tr, "tr")?;
        let optics_rr = optics(o.strehl_rr, o.obliquity_rr, "rr")?;
        let quadrature = QuadratureSpec {
            nodes_per_axis: o.quadrature_nodes,
            relative_tolerance: o.quadrature_rel_tol,
            method: o.quadrature_method,
            max_nodes_per_axis: o.quadrature_max_nodes,
        };
        quadrature.validate()?;

        let jitter_tr = self.jitter.tr.resolve("tr")?;
        let jitter_rr = self.jitter.rr.resolve("rr")?;

        let t = &self.turbulence;
        t.tr.validate()?;
        t.rr.validate()?;
        if t.fading == FadingMode::ComplexGaussian && !(t.tr.is_degenerate() && t.rr.is_degenerate()) {
            return Err(Error::config(
                "turbulence.fading",
                "complex_gaussian fading requires regime = \"none\" on both hops",
            ));
        }

        let e = &self.efficiency;
        let efficiency = OpticalEfficiencySpec {
            reflectivity: e.reflectivity,
            polarization_efficiency: e.polarization_efficiency,
            insertion_loss: e.insertion_loss,
        };
        efficiency.validate()?;

        let l = &self.link;
        let link = LinkSpec {
            tx_directivity: l.tx_directivity,
            rx_directivity: l.rx_directivity,
            extinction: l.extinction_per_m,
            pixel_area: geometry.pixel_area(),
            wavenumber: 2.0 * std::f64::consts::PI / wavelength,
            data_power: l.data_power_w,
            pilot_power: l.pilot_power_w,
        };
        link.validate()?;

        let n = &self.noise;
        let receiver = ReceiverNoiseSpec {
            electron_charge: ELECTRON_CHARGE,
            responsivity: n.responsivity_a_per_w,
            signal_power: n.signal_power_w.unwrap_or(0.0),
            background_power: n.background_power_w,
            dark_current: n.dark_current_a,
            bandwidth: n.bandwidth_hz,
            boltzmann: BOLTZMANN,
            temperature: n.temperature_k,
            feedback_resistance: n.feedback_resistance_ohm,
            transconductance: n.transconductance_s,
            channel_noise_factor: n.channel_noise_factor,
            series_resistance: n.series_resistance_ohm,
            input_capacitance: n.input_capacitance_pf * 1e-12,
            bit_rate: n.bit_rate_per_s,
            i2: n.i2,
            i3: n.i3,
            i_f: n.i_f,
        };
        receiver.validate()?;

        let p = &self.pilot;
        let elements = geometry.num_pixels();
        if let AutoOr::Value(m) = p.length {
            if m < elements {
                return Err(Error::config(
                    "pilot.length",
                    format!("pilot length {m} is below the element count {elements}"),
                ));
            }
        }
        if !p.snr_db.is_finite() {
            return Err(Error::config("pilot.snr_db", "must be finite"));
        }
        if !(p.target_nmse > 0.0 && p.target_nmse < 1.0) {
            return Err(Error::config("pilot.target_nmse", "must lie in (0, 1)"));
        }

        let b = &self.budget;
        let budget = FeedbackBudget {
            spectral_efficiency: b.spectral_efficiency,
            feedback_bandwidth: b.feedback_bandwidth_hz,
            frame_duration: b.frame_duration_ms * 1e-3,
            symbol_rate: b.symbol_rate_per_s,
            min_data_duty: b.min_data_duty,
        };
        budget.validate()?;
        if let AutoOr::Value(q) = b.component_bits {
            if q == 0 || q > MAX_BITS {
                return Err(Error::config("budget.component_bits", format!("must lie in 1..={MAX_BITS} or be \"auto\"")));
            }
        }

        let c = &self.control;
        let control = AdaptConfig {
            bits: match c.bits {
                PhaseBits::Bits(b) => Some(b),
                PhaseBits::Continuous(_) => None,
            },
            max_iterations: c.max_iterations,
            schedule: c.schedule,
            step_scale: c.step_scale,
            tolerance: c.tolerance,
            quantize: c.quantize,
        };
        control.validate()?;

        if self.experiment.trials == 0 {
            return Err(Error::config("experiment.trials", "must be >= 1"));
        }

        Ok(Scenario {
            geometry,
            optics_tr,
            optics_rr,
            jitter_tr,
            jitter_rr,
            pixel_jitter: None,
            quadrature,
            turbulence_tr: t.tr,
            turbulence_rr: t.rr,
            fading: t.fading,
            efficiency,
            link,
            noise: NoiseModel {
                calibration: n.calibration,
                receiver,
                signal_power_given: n.signal_power_w.is_some(),
            },
            pilot: PilotSettings {
                length: p.length.value(),
                kind: p.kind,
                snr_db: p.snr_db,
                target_nmse: p.target_nmse,
            },
            budget,
            component_bits: b.component_bits.value(),
            control,
            trials: self.experiment.trials,
            seed: self.experiment.seed,
        })
    }
}

fn offending_key(e: &toml::de::Error) -> Option<String> {
    let msg = e.message();
    let start = msg.find('`')? + 1;
    let end = start + msg[start..].find('`')?;
    Some(msg[start..end].to_string())
}

/// Per-pixel jitter covariances overriding the shared per-hop value.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelJitter {
    pub tr: Vec<JitterSpec>,
    pub rr: Vec<JitterSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub calibration: NoiseCalibration,
    pub receiver: ReceiverNoiseSpec,
    /// False when `signal_power` should be derived from the channel.
    pub signal_power_given: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotSettings {
    /// `None` selects the length from the NMSE target.
    pub length: Option<usize>,
    pub kind: PilotKind,
    pub snr_db: f64,
    pub target_nmse: f64,
}

impl PilotSettings {
    pub fn snr_linear(&self) -> f64 {
        db_to_linear(self.snr_db)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Validated scenario in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub geometry: ScenarioGeometry,
    pub optics_tr: PixelOpticsSpec,
    pub optics_rr: PixelOpticsSpec,
    pub jitter_tr: JitterSpec,
    pub jitter_rr: JitterSpec,
    pub pixel_jitter: Option<PixelJitter>,
    pub quadrature: QuadratureSpec,
    pub turbulence_tr: TurbulenceSpec,
    pub turbulence_rr: TurbulenceSpec,
    pub fading: FadingMode,
    pub efficiency: OpticalEfficiencySpec,
    pub link: LinkSpec,
    pub noise: NoiseModel,
    pub pilot: PilotSettings,
    pub budget: FeedbackBudget,
    pub component_bits: Option<u32>,
    pub control: AdaptConfig,
    pub trials: usize,
    pub seed: u64,
}

impl Scenario {
    /// The shipped reference scenario.
    pub fn reference() -> Self {
        ScenarioConfig::default()
            .resolve()
            .expect("reference configuration is valid")
    }

    pub fn elements(&self) -> usize {
        self.geometry.num_pixels()
    }

    /// Receiver noise spec with the signal power filled in.
    pub fn receiver_noise(&self, model: &ChannelModel) -> ReceiverNoiseSpec {
        let mut spec = self.noise.receiver;
        if !self.noise.signal_power_given {
            let n = model.boresight_pixel(&self.geometry.pixel_centers);
            spec.signal_power = self.link.data_power * model.mean_power[n];
        }
        spec
    }

    /// Noise variance σ² used for both pilot and data phases.
    pub fn noise_variance(&self, model: &ChannelModel) -> f64 {
        match self.noise.calibration {
            NoiseCalibration::PilotSnr => {
                self.link.pilot_power * model.total_mean_power() / self.pilot.snr_linear()
            }
            NoiseCalibration::Physical => noise_variance(&self.receiver_noise(model)).total,
        }
    }
}
