//! Per-state regressions on the national spread and market volatility.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{HistoricalResult, Region, SmoothedSeries, SpreadObservation};
use crate::ols::{self, OlsError};
use crate::states::StateCode;

/// Minimum number of state polls before a poll-based fit is trusted.
pub const MIN_POLLS: usize = 4;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CalibrationError {
    #[error("{region}: insufficient data ({n} observations, need {required})")]
    InsufficientData {
        region: Region,
        n: usize,
        required: usize,
    },
    #[error("{region}: national regressor is constant across observations")]
    Degenerate { region: Region },
    #[error("{state}: no usable polls and no historical fallback ({reason})")]
    NoFallback { state: StateCode, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CalibrationSource {
    Polls,
    Historical,
}

/// `spread = alpha + beta * national + eps`, `eps ~ N(0, sigma_eps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateCalibration {
    pub state: StateCode,
    pub alpha: f64,
    pub beta: f64,
    pub sigma_eps: f64,
    pub n_obs: usize,
    pub source: CalibrationSource,
}

impl StateCalibration {
    pub fn fitted(&self, national: f64) -> f64 {
        self.alpha + self.beta * national
    }
}

/// Parameters of the driftless diffusion for the national spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketCalibration {
    /// Sampling-error volatility (points).
    pub sigma_samp: f64,
    /// Market volatility (points per √day).
    pub sigma_m: f64,
    /// Smoothed national spread at the most recent grid point.
    pub m_current: f64,
    /// Days left until the election.
    pub horizon: f64,
}

impl MarketCalibration {
    pub fn sigma_total(&self) -> f64 {
        self.sigma_samp + self.sigma_m
    }
}

fn lift(region: Region, n: usize, e: OlsError) -> CalibrationError {
    match e {
        OlsError::Degenerate => CalibrationError::Degenerate { region },
        OlsError::TooFew(_) | OlsError::Length(..) => CalibrationError::InsufficientData {
            region,
            n,
            required: 2,
        },
    }
}

/// OLS of a state's poll spreads on the smoothed national spread, each poll
/// matched to the nearest grid point. Observations for other regions are
/// ignored.
pub fn calibrate_state(
    state: StateCode,
    obs: &[SpreadObservation],
    national: &SmoothedSeries,
    min_polls: usize,
) -> Result<StateCalibration, CalibrationError> {
    let region = Region::State(state);
    let (x, y): (Vec<f64>, Vec<f64>) = obs
        .iter()
        .filter(|o| o.region == region)
        .map(|o| (national.value_near(o.days_to_election), o.spread))
        .unzip();
    let n = x.len();
    let required = min_polls.max(2);
    if n < required {
        return Err(CalibrationError::InsufficientData { region, n, required });
    }
    let fit = ols::fit(&x, &y).map_err(|e| lift(region, n, e))?;
    Ok(StateCalibration {
        state,
        alpha: fit.intercept,
        beta: fit.slope,
        sigma_eps: fit.sigma,
        n_obs: n,
        source: CalibrationSource::Polls,
    })
}

/// OLS of the state's past spreads on the national spread of the same year.
pub fn calibrate_from_historical(
    state: StateCode,
    rows: &[HistoricalResult],
) -> Result<StateCalibration, CalibrationError> {
    let region = Region::State(state);
    let (x, y): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| r.state == state)
        .map(|r| (r.national_spread, r.state_spread))
        .unzip();
    let n = x.len();
    let fit = ols::fit(&x, &y).map_err(|e| lift(region, n, e))?;
    Ok(StateCalibration {
        state,
        alpha: fit.intercept,
        beta: fit.slope,
        sigma_eps: fit.sigma,
        n_obs: n,
        source: CalibrationSource::Historical,
    })
}

/// Binomial standard error of a poll's spread, in points.
pub fn spread_standard_error(c1_share: f64, sample_size: u32) -> f64 {
    2.0 * (c1_share * (1.0 - c1_share) / sample_size as f64).sqrt() * 100.0
}

/// Market volatility from the smoothed series and sampling error from the
/// national polls.
///
/// `sigma_m` is the sample standard deviation of the series' increments,
/// each scaled by `1/√Δt`. `sigma_samp` averages [`spread_standard_error`]
/// over `polls` (0 when there are none).
pub fn calibrate_market(
    national: &SmoothedSeries,
    polls: &[SpreadObservation],
) -> Result<MarketCalibration, CalibrationError> {
    if national.len() < 2 {
        return Err(CalibrationError::InsufficientData {
            region: Region::National,
            n: national.len(),
            required: 2,
        });
    }
    let increments: Vec<f64> = national
        .grid
        .windows(2)
        .zip(national.values.windows(2))
        .map(|(g, v)| (v[1] - v[0]) / (g[1] - g[0]).sqrt())
        .collect();
    let sigma_m = sample_std(&increments);

    let sigma_samp = if polls.is_empty() {
        0.0
    } else {
        polls
            .iter()
            .map(|p| spread_standard_error(p.c1_share, p.sample_size))
            .sum::<f64>()
            / polls.len() as f64
    };

    Ok(MarketCalibration {
        sigma_samp,
        sigma_m,
        m_current: national.values[0],
        horizon: national.grid[0].max(0.0),
    })
}

fn sample_std(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Calibrates every state in `states`, preferring polls and falling back to
/// historical results when the poll fit is impossible.
pub fn calibrate_states(
    states: impl IntoIterator<Item = StateCode>,
    obs: &[SpreadObservation],
    national: &SmoothedSeries,
    historical: &[HistoricalResult],
    min_polls: usize,
) -> Result<BTreeMap<StateCode, StateCalibration>, CalibrationError> {
    let mut out = BTreeMap::new();
    for state in states {
        let cal = match calibrate_state(state, obs, national, min_polls) {
            Ok(cal) => cal,
            Err(poll_err) => {
                log::info!("{state}: {poll_err}; using historical results");
                calibrate_from_historical(state, historical).map_err(|hist_err| {
                    CalibrationError::NoFallback {
                        state,
                        reason: format!("{poll_err}; {hist_err}"),
                    }
                })?
            }
        };
        out.insert(state, cal);
    }
    Ok(out)
}

/// A frozen calibration: the market parameters and one entry per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub market: MarketCalibration,
    pub states: BTreeMap<StateCode, StateCalibration>,
}
