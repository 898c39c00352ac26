//! Adaptive Weyl–Heisenberg signaling over linear time-varying channels.
//!
//! * [`tfcore`]: sampled signals, Fourier transform, shifts, ambiguity and Wigner distributions.
//! * [`gabor`]: frame operators, tight windows, transmit and receive Gabor systems.
//! * [`channel`]: spreading functions, Weyl operators, channel matrices, twisted products.
//! * [`capacity`]: eigenvalue and symbol-based capacity estimates, water-filling, bounds.
//! * [`validation`]: named desk-scale property checks.

// Parameter checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod capacity;
pub mod channel;
pub mod error;
pub mod gabor;
pub mod quadrature;
pub mod tfcore;
pub mod validation;

pub use capacity::{CapacityReport, ReportConfig, SweepMode};
pub use channel::{ChannelMatrix, SpreadingFunction, SpreadingKind};
pub use error::{Error, Result};
pub use gabor::{GaborSystem, IndexRange, Lattice, SystemKind, TightWindow};
pub use tfcore::{SampledSignal, TFGridFunction, TimeGrid};
