//! Simulation and analysis of a two-delay glucose–insulin feedback model.
//!
//! The crate is organised bottom-up:
//!
//! - [`dde`]: fixed-step RK4 integrator for systems with constant delays,
//!   with cubic Hermite dense output for delayed lookups.
//! - [`model`]: the glucose/insulin vector field, its Hill pathways and the
//!   equilibrium solver.
//! - [`linear`]: characteristic equation about the equilibrium and the
//!   parametric Hopf curve in the (τ_I, τ_G) delay plane.
//! - [`forcing`]: constant and smooth on-off infusion protocols.
//! - [`simulate`]: glue that runs the model under a protocol.
//! - [`analysis`]: transient removal, peaks, and response classification.
//! - [`sweep`] and [`contour`]: grid experiments and isocurve extraction.
//! - [`config`]: experiment configuration files and presets used by the CLI.
//!
//! Units: time in minutes. The model state holds glucose in mg and insulin in
//! mU (amounts in their distribution volumes `V_g` and `V_i`), which is what
//! the pathway constants are calibrated for. Concentrations in mg/dl and
//! uU/ml, and infusion rates in mg dl⁻¹ min⁻¹, are used at every public
//! boundary that talks to a user; [`model::ModelParams`] owns the conversions.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod contour;
pub mod dde;
pub mod error;
pub mod forcing;
pub mod linear;
pub mod model;
pub mod simulate;
pub mod sweep;

pub use error::{Error, Result};

/// Toolkit version recorded in every output manifest.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
