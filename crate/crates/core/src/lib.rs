//! Election forecasting with a diffusion-driven national spread.
//!
//! The crate is organised bottom-up:
//!
//! - [`data`]: poll and historical-result ingestion plus Gaussian-kernel
//!   smoothing of the national spread.
//! - [`calibration`]: per-state regressions on the smoothed national series,
//!   market volatility estimates and the historical fallback.
//! - [`simulation`]: Monte Carlo over terminal national spreads, per-state
//!   noise and electoral-vote aggregation.
//! - [`scoring`]: Brier, log-likelihood, Selten, spherical and CDF scores.
//! - [`trading`]: mark-to-market trading score against a reference price.
//! - [`online`]: exponential-weights aggregation of expert forecasts.

pub mod calibration;
pub mod data;
pub mod ols;
pub mod online;
pub mod rng;
pub mod scoring;
pub mod simulation;
pub mod states;
pub mod trading;

pub use calibration::{CalibrationError, CalibrationSet, MarketCalibration, StateCalibration};
pub use data::{IngestError, PollRecord, Region, SmoothedSeries, SpreadObservation};
pub use simulation::{EvTable, ForecastDistribution, NoiseModel, SimulationConfig};
pub use states::StateCode;

/// Electoral votes needed to win the presidency.
pub const EV_TO_WIN: u32 = 270;

/// Total electoral votes; histograms have `TOTAL_EV + 1` bins.
pub const TOTAL_EV: u32 = 538;
