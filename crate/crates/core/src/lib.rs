//! Simulation and link budgeting for RIS-assisted optical wireless links.
//!
//! The crate covers the cascaded Tx → RIS → Rx channel with jitter-averaged
//! pixel diffraction and scintillation, least-squares estimation from
//! unitary pilots, quantized and compressed channel feedback, gradient phase
//! control, and a seeded Monte Carlo harness for parameter sweeps.

// NaN must fail validation, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod error;
pub mod estimation;
pub mod feedback;
pub mod geometry;
pub mod linalg;
pub mod montecarlo;
pub mod phase_control;
pub mod pixel_optics;
pub mod quadrature;
pub mod seed;
pub mod turbulence;

pub use config::{Scenario, ScenarioConfig};
pub use error::{Error, Result};
