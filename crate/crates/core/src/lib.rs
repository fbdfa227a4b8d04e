//! Linear precoding for MIMO channels with iterative LMMSE detection.
//!
//! The crate covers the detector (fast structured and dense reference
//! paths), the SINR-variance transfer functions of the detector and of
//! matched decoders, achievable-rate formulas with their quadrature
//! cross-checks, precoder construction and optimisation for full and
//! partial channel knowledge at the transmitter, the superposition-coded
//! modulation ladder, and a Monte-Carlo harness with genie decoders.

pub mod channel;
pub mod constellation;
pub mod detector;
pub mod error;
pub mod interp;
pub mod io;
pub mod linalg;
pub mod montecarlo;
pub mod par;
pub mod precoder;
pub mod quadrature;
pub mod rng;
pub mod scm;
pub mod stats;
pub mod system;
pub mod transfer;

pub use constellation::{Constellation, GammaCurve, SymbolPrior};
pub use error::{Error, Result};
pub use num_complex::Complex64;
