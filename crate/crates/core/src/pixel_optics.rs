//! Far-field pixel response: the ideal sinc² pattern and its jitter-averaged
//! (long-exposure) counterpart.
//!
//! The long-exposure gain is the expectation of the ideal pattern over a
//! zero-mean Gaussian pointing error `δ ~ N(0, Σ)`. In the spatial-frequency
//! domain the sinc² factors become triangular windows and the jitter enters
//! through its characteristic function, giving a smooth real integrand over
//! `[-2k_x, 2k_x] × [-2k_y, 2k_y]`. Folding both axes onto `[0, 2k]` leaves
//! two cosine terms (sign combinations of `ω_y`), which we integrate with a
//! tensor Gauss–Legendre rule refined by node doubling.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;
use crate::seed::rng_from_seed;

/// RMS jitter above which the small-angle model is no longer trusted (rad).
pub const SMALL_ANGLE_LIMIT: f64 = 5e-3;

/// Floor used when comparing successive quadrature estimates near a null.
const ABS_FLOOR: f64 = 1e-6;

/// `sin(u)/u`, with a short Taylor branch near the origin.
pub fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-4 {
        let u2 = u * u;
        1.0 - u2 / 6.0 + u2 * u2 / 120.0
    } else {
        u.sin() / u
    }
}

/// Normalized aperture frequencies plus the Strehl and obliquity factors of
/// one hop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelOpticsSpec {
    /// `π Δx / λ` (rad).
    pub k_x: f64,
    /// `π Δy / λ` (rad).
    pub k_y: f64,
    pub strehl: f64,
    pub obliquity: f64,
}

impl PixelOpticsSpec {
    pub fn new(k_x: f64, k_y: f64, strehl: f64, obliquity: f64) -> Result<Self> {
        let spec = Self {
            k_x,
            k_y,
            strehl,
            obliquity,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Build from physical pixel size and wavelength (all in metres).
    pub fn from_pixel(
        width: f64,
        height: f64,
        wavelength: f64,
        strehl: f64,
        obliquity: f64,
    ) -> Result<Self> {
        let k = std::f64::consts::PI / wavelength;
        Self::new(k * width, k * height, strehl, obliquity)
    }

    /// Same apertures with `S = ρ = 1`.
    pub fn unit_factors(&self) -> Self {
        Self {
            strehl: 1.0,
            obliquity: 1.0,
            ..*self
        }
    }

    /// Peak value `S·ρ` of the response.
    pub fn peak(&self) -> f64 {
        self.strehl * self.obliquity
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_x > 0.0 && self.k_x.is_finite()) || !(self.k_y > 0.0 && self.k_y.is_finite()) {
            return Err(Error::config("optics", "aperture frequencies must be positive"));
        }
        if !(self.strehl > 0.0 && self.strehl <= 1.0) {
            return Err(Error::config("optics.strehl", "must lie in (0, 1]"));
        }
        if !(self.obliquity > 0.0 && self.obliquity <= 1.0) {
            return Err(Error::config("optics.obliquity", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Angular pointing-error covariance of one hop (rad²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterSpec {
    pub covariance: [[f64; 2]; 2],
}

impl JitterSpec {
    pub const NONE: JitterSpec = JitterSpec {
        covariance: [[0.0, 0.0], [0.0, 0.0]],
    };

    pub fn isotropic(sigma: f64) -> Self {
        Self::diagonal(sigma, sigma)
    }

    pub fn diagonal(sigma_x: f64, sigma_y: f64) -> Self {
        Self::correlated(sigma_x, sigma_y, 0.0)
    }

    /// RMS jitters per axis plus a correlation coefficient in [-1, 1].
    pub fn correlated(sigma_x: f64, sigma_y: f64, correlation: f64) -> Self {
        let c = correlation * sigma_x * sigma_y;
        Self {
            covariance: [[sigma_x * sigma_x, c], [c, sigma_y * sigma_y]],
        }
    }

    pub fn sigma_x(&self) -> f64 {
        self.covariance[0][0].sqrt()
    }

    pub fn sigma_y(&self) -> f64 {
        self.covariance[1][1].sqrt()
    }

    pub fn cross(&self) -> f64 {
        self.covariance[0][1]
    }

    pub fn is_zero(&self) -> bool {
        self.covariance.iter().flatten().all(|&v| v == 0.0)
    }

    pub fn is_diagonal(&self) -> bool {
        self.covariance[0][1] == 0.0 && self.covariance[1][0] == 0.0
    }

    /// Root of the mean per-axis variance.
    pub fn rms(&self) -> f64 {
        (0.5 * (self.covariance[0][0] + self.covariance[1][1])).sqrt()
    }

    pub fn is_small_angle(&self) -> bool {
        self.rms() <= SMALL_ANGLE_LIMIT
    }

    pub fn validate(&self) -> Result<()> {
        let [[a, b], [c, d]] = self.covariance;
        if ![a, b, c, d].iter().all(|v| v.is_finite()) {
            return Err(Error::config("jitter", "covariance entries must be finite"));
        }
        if b != c {
            return Err(Error::config("jitter", "covariance must be symmetric"));
        }
        // eigenvalues of a symmetric 2x2 are non-negative iff trace and determinant are
        let det = a * d - b * b;
        let tol = 1e-12 * (a * d).abs().max(f64::MIN_POSITIVE);
        if a < 0.0 || d < 0.0 || det < -tol {
            return Err(Error::config(
                "jitter",
                "covariance must be positive semidefinite",
            ));
        }
        Ok(())
    }

    /// Lower-triangular factor `L` with `L Lᵀ = Σ`; tolerates singular Σ.
    fn cholesky(&self) -> [[f64; 2]; 2] {
        let [[a, b], [_, d]] = self.covariance;
        let l11 = a.max(0.0).sqrt();
        let l21 = if l11 > 0.0 { b / l11 } else { 0.0 };
        let l22 = (d - l21 * l21).max(0.0).sqrt();
        [[l11, 0.0], [l21, l22]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureMethod {
    /// Single evaluation at `nodes_per_axis`.
    Fixed,
    /// Node doubling until successive estimates agree.
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub nodes_per_axis: usize,
    pub relative_tolerance: f64,
    pub method: QuadratureMethod,
    pub max_nodes_per_axis: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            nodes_per_axis: 16,
            relative_tolerance: 1e-8,
            method: QuadratureMethod::Adaptive,
            max_nodes_per_axis: 2048,
        }
    }
}

impl QuadratureSpec {
    pub fn with_tolerance(relative_tolerance: f64) -> Self {
        Self {
            relative_tolerance,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes_per_axis < 8 {
            return Err(Error::config("optics.quadrature_nodes", "must be at least 8"));
        }
        if !(self.relative_tolerance > 0.0) {
            return Err(Error::config("optics.quadrature_rel_tol", "must be > 0"));
        }
        if self.max_nodes_per_axis < self.nodes_per_axis {
            return Err(Error::config(
                "optics.quadrature_max_nodes",
                "must be at least the starting node count",
            ));
        }
        Ok(())
    }
}

/// Outcome of a quadrature evaluation of the long-exposure gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainEstimate {
    pub gain: f64,
    /// Difference between the last two refinement levels.
    pub error_bound: f64,
    pub nodes_per_axis: usize,
    /// The raw estimate fell outside `[0, S·ρ]` and was clamped.
    pub clamped: bool,
}

/// Ideal Fraunhofer pattern `sinc²(k_x μ_x) sinc²(k_y μ_y)`; excludes `S·ρ`.
pub fn ideal_pixel_gain(mu: [f64; 2], spec: &PixelOpticsSpec) -> f64 {
    let sx = sinc(spec.k_x * mu[0]);
    let sy = sinc(spec.k_y * mu[1]);
    sx * sx * sy * sy
}

fn refine<F>(quad: &QuadratureSpec, mut eval: F) -> Result<(f64, f64, usize)>
where
    F: FnMut(usize) -> f64,
{
    quad.validate()?;
    let mut n = quad.nodes_per_axis;
    let mut prev = eval(n);
    if quad.method == QuadratureMethod::Fixed {
        let coarse = eval((n / 2).max(1));
        return Ok((prev, (prev - coarse).abs(), n));
    }
    loop {
        let next_n = 2 * n;
        if next_n > quad.max_nodes_per_axis {
            return Err(Error::Quadrature {
                estimate: prev,
                error_bound: f64::NAN,
                nodes: n,
            });
        }
        let next = eval(next_n);
        let diff = (next - prev).abs();
        if diff <= quad.relative_tolerance * next.abs().max(ABS_FLOOR) {
            return Ok((next, diff, next_n));
        }
        if 2 * next_n > quad.max_nodes_per_axis {
            return Err(Error::Quadrature {
                estimate: next,
                error_bound: diff,
                nodes: next_n,
            });
        }
        prev = next;
        n = next_n;
    }
}

fn clamp_gain(raw: f64, err: f64, nodes: usize, peak: f64) -> GainEstimate {
    let gain = raw.clamp(0.0, peak);
    GainEstimate {
        gain,
        error_bound: err,
        nodes_per_axis: nodes,
        clamped: gain != raw,
    }
}

/// Folded 2-D integral over the unit square for `S = ρ = 1`.
fn folded_integral(mu: [f64; 2], spec: &PixelOpticsSpec, jitter: &JitterSpec, n: usize) -> f64 {
    let rule = GaussLegendre::cached(n);
    let (wx, wy) = (2.0 * spec.k_x, 2.0 * spec.k_y);
    let [[sxx, sxy], [_, syy]] = jitter.covariance;
    // precompute per-axis quantities on the node set
    let xs: Vec<(f64, f64, f64, f64)> = rule
        .unit_interval()
        .map(|(s, w)| {
            let om = wx * s;
            (om, w * (1.0 - s), -0.5 * sxx * om * om, om * mu[0])
        })
        .collect();
    let ys: Vec<(f64, f64, f64, f64)> = rule
        .unit_interval()
        .map(|(t, w)| {
            let om = wy * t;
            (om, w * (1.0 - t), -0.5 * syy * om * om, om * mu[1])
        })
        .collect();
    let mut total = 0.0;
    for &(ox, wxw, ex, phx) in &xs {
        let mut row = 0.0;
        for &(oy, wyw, ey, phy) in &ys {
            let cross = sxy * ox * oy;
            let plus = (ex + ey - cross).exp() * (phx + phy).cos();
            let minus = (ex + ey + cross).exp() * (phx - phy).cos();
            row += wyw * (plus + minus);
        }
        total += wxw * row;
    }
    2.0 * total
}

/// Jitter-averaged per-hop gain via the real spatial-frequency integral,
/// always using the 2-D rule (any covariance, including correlated).
pub fn long_exposure_gain(
    mu: [f64; 2],
    spec: &PixelOpticsSpec,
    jitter: &JitterSpec,
    quad: &QuadratureSpec,
) -> Result<GainEstimate> {
    spec.validate()?;
    jitter.validate()?;
    let (raw, err, nodes) = refine(quad, |n| folded_integral(mu, spec, jitter, n))?;
    let peak = spec.peak();
    Ok(clamp_gain(peak * raw, peak * err, nodes, peak))
}

fn blur_integral(mu: f64, k: f64, sigma: f64, n: usize) -> f64 {
    let rule = GaussLegendre::cached(n);
    let w = 2.0 * k;
    let a = -0.5 * sigma * sigma;
    let sum: f64 = rule
        .unit_interval()
        .map(|(s, wt)| {
            let om = w * s;
            wt * (1.0 - s) * (a * om * om).exp() * (om * mu).cos()
        })
        .sum();
    2.0 * sum
}

/// One-dimensional blur kernel `B(μ; k, σ)`; equals `sinc²(kμ)` when `σ = 0`.
pub fn blur_kernel_1d(mu: f64, k: f64, sigma: f64, quad: &QuadratureSpec) -> Result<f64> {
    if !(sigma >= 0.0) || !(k > 0.0) {
        return Err(Error::Contract(
            "blur kernel needs k > 0 and sigma >= 0".into(),
        ));
    }
    let (v, _, _) = refine(quad, |n| blur_integral(mu, k, sigma, n))?;
    Ok(v.clamp(0.0, 1.0))
}

/// Separable evaluation for a diagonal covariance: `S ρ B(μx) B(μy)`.
pub fn long_exposure_gain_separable(
    mu: [f64; 2],
    spec: &PixelOpticsSpec,
    jitter: &JitterSpec,
    quad: &QuadratureSpec,
) -> Result<f64> {
    spec.validate()?;
    jitter.validate()?;
    if !jitter.is_diagonal() {
        return Err(Error::Contract(
            "separable evaluation requires a diagonal covariance".into(),
        ));
    }
    let bx = blur_kernel_1d(mu[0], spec.k_x, jitter.sigma_x(), quad)?;
    let by = blur_kernel_1d(mu[1], spec.k_y, jitter.sigma_y(), quad)?;
    Ok(spec.peak() * bx * by)
}

/// Dispatching evaluator used by the channel model: 1-D kernel product for
/// diagonal covariances, full 2-D rule otherwise.
pub fn per_hop_gain(
    mu: [f64; 2],
    spec: &PixelOpticsSpec,
    jitter: &JitterSpec,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if jitter.is_diagonal() {
        long_exposure_gain_separable(mu, spec, jitter, quad)
    } else {
        long_exposure_gain(mu, spec, jitter, quad).map(|g| g.gain)
    }
}

/// Sample mean and standard error of a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Monte Carlo reference: average `S ρ sinc² sinc²` over jitter draws.
pub fn long_exposure_gain_mc(
    mu: [f64; 2],
    spec: &PixelOpticsSpec,
    jitter: &JitterSpec,
    trials: usize,
    seed: u64,
) -> Result<McEstimate> {
    if trials < 1000 {
        return Err(Error::Contract("Monte Carlo oracle needs at least 1000 trials".into()));
    }
    spec.validate()?;
    jitter.validate()?;
    let l = jitter.cholesky();
    let peak = spec.peak();
    let mut rng = rng_from_seed(seed);
    // Welford accumulation: identical samples give an exact mean and zero spread
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for i in 0..trials {
        let z0: f64 = StandardNormal.sample(&mut rng);
        let z1: f64 = StandardNormal.sample(&mut rng);
        let dx = l[0][0] * z0;
        let dy = l[1][0] * z0 + l[1][1] * z1;
        let x = peak * ideal_pixel_gain([mu[0] + dx, mu[1] + dy], spec);
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    let var = m2 / (trials - 1) as f64;
    Ok(McEstimate {
        mean,
        std_error: (var / trials as f64).sqrt(),
    })
}

/// Product of the two per-hop gains.
pub fn two_hop_gain(g_tr: f64, g_rr: f64) -> f64 {
    debug_assert!(g_tr >= 0.0 && g_rr >= 0.0);
    g_tr * g_rr
}

/// `G0(μ) − Ḡ(μ)` on a set of direction cosines, with `S = ρ = 1`.
pub fn deviation_surface(
    grid: &[[f64; 2]],
    spec: &PixelOpticsSpec,
    jitter: &JitterSpec,
    quad: &QuadratureSpec,
) -> Result<Vec<f64>> {
    let unit = spec.unit_factors();
    grid.iter()
        .map(|&mu| {
            if !(mu[0].abs() < 1.0 && mu[1].abs() < 1.0) {
                return Err(Error::Contract("direction cosines must satisfy |μ| < 1".into()));
            }
            let ideal = ideal_pixel_gain(mu, &unit);
            let le = long_exposure_gain(mu, &unit, jitter, quad)?.gain;
            Ok(ideal - le)
        })
        .collect()
}

/// Isotropic-scale jitter `σ` (with fixed correlation coefficient) giving
/// the requested fractional boresight attenuation `1 − Ḡ(0)/(S ρ)`.
pub fn sigma_for_boresight_attenuation(
    target: f64,
    spec: &PixelOpticsSpec,
    correlation: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    if !(0.0..1.0).contains(&target) {
        return Err(Error::Contract("attenuation target must lie in [0, 1)".into()));
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    let unit = spec.unit_factors();
    let atten = |sigma: f64| -> Result<f64> {
        let j = JitterSpec::correlated(sigma, sigma, correlation);
        Ok(1.0 - long_exposure_gain([0.0, 0.0], &unit, &j, quad)?.gain)
    };
    let mut hi = 0.1 / spec.k_x.max(spec.k_y);
    while atten(hi)? < target {
        hi *= 2.0;
        if hi > 1.0 {
            return Err(Error::Contract("attenuation target unreachable".into()));
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if atten(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
