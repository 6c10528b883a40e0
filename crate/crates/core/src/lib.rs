//! Monte Carlo and analysis toolkit for photon-number detection with a
//! fast-gated silicon avalanche photodiode.
//!
//! The crate follows the measurement chain end to end:
//!
//! - [`photonstat`]: Poisson photon statistics and efficiency thinning.
//! - [`detector`]: gate-by-gate avalanche Monte Carlo with dark counts,
//!   trap-mediated afterpulsing and bias-dependent parameters.
//! - [`waveform`]: raw gated output, self-differencing, amplitude extraction
//!   and pulse-height histograms.
//! - [`analysis`]: Gaussian mixture fits, Poisson consistency, photon-number
//!   discrimination, excess noise and counting estimators.
//! - [`runspec`] and [`pipeline`]: configuration files, presets and the
//!   batch commands behind the `apd-pnr` binary.
//!
//! All randomness flows from explicitly seeded [`rng::SimRng`] streams.

pub mod analysis;
pub mod detector;
pub mod error;
pub mod export;
pub mod photonstat;
pub mod pipeline;
pub mod rng;
pub mod runspec;
pub mod waveform;

pub use error::{Error, Result};
