//! Reflection coefficient modeling for 300-400 GHz material surfaces.
//!
//! The forward model is a single dielectric slab with a roughness loss
//! factor and a parameterized Lorentz (non-metal) or Drude (metal)
//! permittivity. Its parameters follow a log-linear trend in frequency,
//! which [`wftrend`] estimates from measurements band by band.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod evalcmp;
pub mod fitting;
pub mod physics;
pub mod specfun;
pub mod wftrend;

pub use data::{Dataset, MaterialRecord, MeasurementSample};
pub use error::{Error, Result};
pub use fitting::{FitResult, LmConfig};
pub use num_complex::Complex64;
pub use physics::{FreqUnit, IncidenceInput, LogLinear, MaterialClass, SubBandParams, TrendParams};
pub use wftrend::{BandFit, TrendFit, WfTrendConfig};
