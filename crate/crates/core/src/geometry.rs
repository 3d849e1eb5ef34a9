//! Transmitter / RIS / receiver placement and per-pixel hop geometry.
//!
//! The RIS lies in the plane `z = ris_plane_z`. Direction cosines are taken
//! against the fixed plane normal (+z) for both hops; tilt-dependent
//! projection losses are carried separately by the obliquity factor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

/// Node placement and pixel optics geometry for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGeometry {
    pub tx_position: Vec3,
    /// z coordinate of the RIS plane (m).
    pub ris_plane_z: f64,
    /// Pixel centres `(x, y)` on the RIS plane (m), row-major.
    pub pixel_centers: Vec<[f64; 2]>,
    pub rx_position: Vec3,
    pub lattice_pitch: f64,
    pub pixel_width: f64,
    pub pixel_height: f64,
    pub wavelength: f64,
}

impl ScenarioGeometry {
    /// Square `rows x cols` lattice centred on the RIS-plane origin with
    /// row-major indexing (x varies fastest).
    #[allow(clippy::too_many_arguments)]
    pub fn square_grid(
        tx_position: Vec3,
        ris_plane_z: f64,
        rx_position: Vec3,
        rows: usize,
        cols: usize,
        pitch: f64,
        pixel_width: f64,
        pixel_height: f64,
        wavelength: f64,
    ) -> Result<Self> {
        let geom = Self {
            tx_position,
            ris_plane_z,
            pixel_centers: grid_centers(rows, cols, pitch),
            rx_position,
            lattice_pitch: pitch,
            pixel_width,
            pixel_height,
            wavelength,
        };
        geom.validate()?;
        Ok(geom)
    }

    pub fn num_pixels(&self) -> usize {
        self.pixel_centers.len()
    }

    pub fn pixel_area(&self) -> f64 {
        self.pixel_width * self.pixel_height
    }

    pub fn pixel_position(&self, n: usize) -> Vec3 {
        let [x, y] = self.pixel_centers[n];
        [x, y, self.ris_plane_z]
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.tx_position) || !finite(&self.rx_position) || !self.ris_plane_z.is_finite()
        {
            return Err(Error::config("geometry", "positions must be finite"));
        }
        if self.rx_position[2] <= self.ris_plane_z {
            return Err(Error::config(
                "geometry.rx_position_m",
                format!(
                    "receiver z = {} must lie beyond the RIS plane z = {}",
                    self.rx_position[2], self.ris_plane_z
                ),
            ));
        }
        if self.tx_position[2] >= self.ris_plane_z {
            return Err(Error::config(
                "geometry.tx_position_m",
                "transmitter must lie in front of the RIS plane",
            ));
        }
        if !(self.pixel_width > 0.0) {
            return Err(Error::config("geometry.pixel_width_mm", "must be > 0"));
        }
        if !(self.pixel_height > 0.0) {
            return Err(Error::config("geometry.pixel_height_mm", "must be > 0"));
        }
        if !(self.wavelength > 0.0) {
            return Err(Error::config("geometry.wavelength_nm", "must be > 0"));
        }
        if self.pixel_centers.is_empty() {
            return Err(Error::config("geometry", "at least one pixel is required"));
        }
        let mut sorted: Vec<[f64; 2]> = self.pixel_centers.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("geometry", "pixel centres must be distinct"));
        }
        Ok(())
    }
}

/// Row-major square lattice of pixel centres with the array centred on (0, 0).
pub fn grid_centers(rows: usize, cols: usize, pitch: f64) -> Vec<[f64; 2]> {
    let cx = (cols as f64 - 1.0) / 2.0;
    let cy = (rows as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push([(c as f64 - cx) * pitch, (r as f64 - cy) * pitch]);
        }
    }
    out
}

/// Per-pixel path lengths for the Tx→pixel and pixel→Rx hops (m).
#[derive(Debug, Clone, PartialEq)]
pub struct HopDistances {
    pub d_tr: Vec<f64>,
    pub d_rr: Vec<f64>,
}

/// Distances plus off-axis direction cosines `(μx, μy)` for each hop.
#[derive(Debug, Clone, PartialEq)]
pub struct HopGeometry {
    pub d_tr: Vec<f64>,
    pub d_rr: Vec<f64>,
    pub mu_tr: Vec<[f64; 2]>,
    pub mu_rr: Vec<[f64; 2]>,
}

fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn hop_distances(geom: &ScenarioGeometry) -> Result<HopDistances> {
    geom.validate()?;
    let n = geom.num_pixels();
    let mut d_tr = Vec::with_capacity(n);
    let mut d_rr = Vec::with_capacity(n);
    for i in 0..n {
        let p = geom.pixel_position(i);
        d_tr.push(norm(sub(p, geom.tx_position)));
        d_rr.push(norm(sub(geom.rx_position, p)));
    }
    Ok(HopDistances { d_tr, d_rr })
}

/// Direction cosines relative to the RIS normal. For the TR hop
/// `μx = (x_n − x_T) / d_tr`; for the RR hop `μx = (x_R − x_n) / d_rr`.
pub fn direction_cosines(geom: &ScenarioGeometry) -> Result<HopGeometry> {
    let HopDistances { d_tr, d_rr } = hop_distances(geom)?;
    let (tx, rx) = (geom.tx_position, geom.rx_position);
    let mu_tr = geom
        .pixel_centers
        .iter()
        .zip(&d_tr)
        .map(|(&[x, y], &d)| [(x - tx[0]) / d, (y - tx[1]) / d])
        .collect();
    let mu_rr = geom
        .pixel_centers
        .iter()
        .zip(&d_rr)
        .map(|(&[x, y], &d)| [(rx[0] - x) / d, (rx[1] - y) / d])
        .collect();
    Ok(HopGeometry {
        d_tr,
        d_rr,
        mu_tr,
        mu_rr,
    })
}
