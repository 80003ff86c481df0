//! Beam-squint-aware integrated sensing and communications (ISAC) precoding
//! for wide-band massive-MIMO LEO satellite downlinks.
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`]: planar-array geometry, OFDM subcarrier plan, frequency
//!   dependent (squinted) array responses and Rician channel gains.
//! - [`comms_metrics`]: SINR, Jensen upper bound on the ergodic rate,
//!   Monte-Carlo ergodic rate, power consumption and energy efficiency.
//! - [`sensing`]: sub-arrayed sensing precoder, transmit beampattern,
//!   noncentrality parameter and multi-target detection probability.
//! - [`digital_precoder`]: energy-efficiency maximising fully digital
//!   precoding (Dinkelbach outer loop, Lagrangian-dual and quadratic
//!   transforms, bisection on the power multiplier).
//! - [`hybrid_precoder`]: joint factorisation of the communication and
//!   sensing precoders into unit-modulus analog and digital stages for the
//!   fully and partially connected architectures.
//! - [`harness`]: scenario configuration, presets, sweeps and result files.

pub mod channel;
pub mod comms_metrics;
pub mod digital_precoder;
mod error;
pub mod harness;
pub mod hybrid_precoder;
pub mod linalg;
pub mod sensing;

pub use error::{IsacError, Result};
pub use linalg::{CMatrix, CVector, Complex64};

/// Speed of light used throughout the link model, m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.38e-23;
