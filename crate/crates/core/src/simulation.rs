//! Monte Carlo over terminal national spreads and state outcomes.
//!
//! Each path draws a terminal national spread from the exact Gaussian law of
//! the driftless diffusion, then one spread per state from its regression on
//! that terminal value. States are winner-take-all.

use std::collections::BTreeMap;
use std::io::Read;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::{MarketCalibration, StateCalibration};
use crate::rng::StreamFactory;
use crate::states::{StateCode, STATE_COUNT};
use crate::{EV_TO_WIN, TOTAL_EV};

const BUNDLED_EV_2016: &str = include_str!("../data/ev_2016.csv");

/// Stream slot used for the market draw; state `i` uses slot `i + 1`.
const MARKET_SLOT: u32 = 0;

#[derive(Debug, thiserror::Error)]
pub enum SimulationError {
    #[error("invalid EV table: {0}")]
    EvTable(String),
    #[error("failed to read EV table: {0}")]
    Csv(#[from] csv::Error),
    #[error("no spread supplied for {0}")]
    MissingState(StateCode),
    #[error("no calibration for {0}")]
    MissingCalibration(StateCode),
    #[error("invalid simulation config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    Gaussian,
    /// Parameter-uncertain Student-T noise: fresh `alpha`, `beta` and scale
    /// are drawn for every path.
    StudentT {
        sigma_alpha: f64,
        sigma_beta: f64,
        nu: u32,
    },
}

impl NoiseModel {
    pub fn student_t_default() -> Self {
        NoiseModel::StudentT {
            sigma_alpha: 0.01,
            sigma_beta: 1.0,
            nu: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_paths: usize,
    pub seed: u64,
    pub noise_model: NoiseModel,
    /// A state is won by candidate 1 when its spread is strictly above this.
    pub win_threshold: f64,
}

impl SimulationConfig {
    pub fn new(seed: u64) -> Self {
        SimulationConfig {
            n_paths: 10_000,
            seed,
            noise_model: NoiseModel::Gaussian,
            win_threshold: 0.0,
        }
    }

    fn validate(&self) -> Result<(), SimulationError> {
        if self.n_paths == 0 {
            return Err(SimulationError::Config("n_paths must be at least 1".into()));
        }
        if let NoiseModel::StudentT {
            sigma_alpha,
            sigma_beta,
            nu,
        } = self.noise_model
        {
            if nu == 0 {
                return Err(SimulationError::Config("nu must be at least 1".into()));
            }
            if !(sigma_alpha >= 0.0 && sigma_beta >= 0.0) {
                return Err(SimulationError::Config("prior scales must be >= 0".into()));
            }
        }
        if !self.win_threshold.is_finite() {
            return Err(SimulationError::Config("win_threshold must be finite".into()));
        }
        Ok(())
    }
}

/// Electoral votes per state. Always 51 entries summing to 538.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvTable(BTreeMap<StateCode, u32>);

impl EvTable {
    pub fn new(entries: BTreeMap<StateCode, u32>) -> Result<Self, SimulationError> {
        if entries.len() != STATE_COUNT {
            let missing: Vec<String> = StateCode::all()
                .filter(|s| !entries.contains_key(s))
                .map(|s| s.to_string())
                .collect();
            return Err(SimulationError::EvTable(format!(
                "expected {STATE_COUNT} entries, missing {}",
                missing.join(",")
            )));
        }
        if let Some((s, _)) = entries.iter().find(|(_, v)| **v == 0) {
            return Err(SimulationError::EvTable(format!("{s} has zero electoral votes")));
        }
        let total: u32 = entries.values().sum();
        if total != TOTAL_EV {
            return Err(SimulationError::EvTable(format!(
                "votes sum to {total}, expected {TOTAL_EV}"
            )));
        }
        Ok(EvTable(entries))
    }

    /// Parses `state,ev` rows.
    pub fn from_csv<R: Read>(source: R) -> Result<Self, SimulationError> {
        #[derive(Deserialize)]
        struct Row {
            state: String,
            ev: u32,
        }
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(source);
        let mut entries = BTreeMap::new();
        for row in reader.deserialize() {
            let row: Row = row?;
            let state: StateCode = row
                .state
                .parse()
                .map_err(|e: crate::states::UnknownState| SimulationError::EvTable(e.to_string()))?;
            if entries.insert(state, row.ev).is_some() {
                return Err(SimulationError::EvTable(format!("duplicate entry for {state}")));
            }
        }
        EvTable::new(entries)
    }

    /// The 2016 apportionment shipped with the crate.
    pub fn bundled_2016() -> Self {
        EvTable::from_csv(BUNDLED_EV_2016.as_bytes()).expect("bundled EV table is valid")
    }

    pub fn get(&self, state: StateCode) -> Option<u32> {
        self.0.get(&state).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateCode, u32)> + '_ {
        self.0.iter().map(|(s, v)| (*s, *v))
    }

    pub fn total(&self) -> u32 {
        self.0.values().sum()
    }
}

/// Terminal national spreads, one per path: `m_current + σ·√T·Z`.
pub fn simulate_market_terminals(
    mkt: &MarketCalibration,
    cfg: &SimulationConfig,
) -> Result<Vec<f64>, SimulationError> {
    cfg.validate()?;
    check_market(mkt)?;
    let streams = StreamFactory::new(cfg.seed);
    Ok((0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|j| market_terminal(mkt, &mut streams.stream(j, MARKET_SLOT)))
        .collect())
}

fn check_market(mkt: &MarketCalibration) -> Result<(), SimulationError> {
    if !(mkt.horizon >= 0.0) || !(mkt.sigma_total() >= 0.0) || !mkt.m_current.is_finite() {
        return Err(SimulationError::Config(format!(
            "market needs horizon >= 0 and volatility >= 0, got {mkt:?}"
        )));
    }
    Ok(())
}

fn market_terminal<R: Rng>(mkt: &MarketCalibration, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mkt.m_current + mkt.sigma_total() * mkt.horizon.sqrt() * z
}

/// One state's terminal spread given the terminal national spread.
pub fn sample_state_noise<R: Rng>(
    cal: &StateCalibration,
    m_terminal: f64,
    model: NoiseModel,
    rng: &mut R,
) -> f64 {
    match model {
        NoiseModel::Gaussian => {
            let z: f64 = StandardNormal.sample(rng);
            cal.alpha + cal.beta * m_terminal + cal.sigma_eps * z
        }
        NoiseModel::StudentT {
            sigma_alpha,
            sigma_beta,
            nu,
        } => {
            let za: f64 = StandardNormal.sample(rng);
            let zb: f64 = StandardNormal.sample(rng);
            let zs: f64 = StandardNormal.sample(rng);
            let alpha = cal.alpha + sigma_alpha * za;
            let beta = cal.beta + sigma_beta * zb;
            let scale = (cal.sigma_eps * zs).abs();
            let t = StudentT::new(f64::from(nu))
                .expect("nu validated >= 1")
                .sample(rng);
            alpha + beta * m_terminal + scale * t
        }
    }
}

fn state_won(spread: f64, win_threshold: f64) -> bool {
    spread > win_threshold
}

/// Candidate 1's electoral votes, winner-take-all per state.
pub fn aggregate_electoral_votes(
    state_spreads: &BTreeMap<StateCode, f64>,
    ev: &EvTable,
    win_threshold: f64,
) -> Result<u32, SimulationError> {
    ev.iter().try_fold(0, |acc, (state, votes)| {
        let spread = state_spreads
            .get(&state)
            .ok_or(SimulationError::MissingState(state))?;
        Ok(acc + if state_won(*spread, win_threshold) { votes } else { 0 })
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathOutcome {
    pub m_terminal: f64,
    /// Terminal spreads in EV-table (alphabetical) order.
    pub state_spreads: Vec<f64>,
    pub ev_c1: u32,
}

/// Calibrations aligned with the EV table.
struct Model<'a> {
    states: Vec<(&'a StateCalibration, u32)>,
    market: &'a MarketCalibration,
    streams: StreamFactory,
    cfg: &'a SimulationConfig,
}

impl<'a> Model<'a> {
    fn new(
        cals: &'a BTreeMap<StateCode, StateCalibration>,
        mkt: &'a MarketCalibration,
        ev: &EvTable,
        cfg: &'a SimulationConfig,
    ) -> Result<Self, SimulationError> {
        cfg.validate()?;
        check_market(mkt)?;
        let states = ev
            .iter()
            .map(|(s, votes)| {
                cals.get(&s)
                    .map(|c| (c, votes))
                    .ok_or(SimulationError::MissingCalibration(s))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Model {
            states,
            market: mkt,
            streams: StreamFactory::new(cfg.seed),
            cfg,
        })
    }

    fn path(&self, j: u64) -> PathOutcome {
        let m = market_terminal(self.market, &mut self.streams.stream(j, MARKET_SLOT));
        let mut ev_c1 = 0;
        let state_spreads = self
            .states
            .iter()
            .enumerate()
            .map(|(i, (cal, votes))| {
                let mut rng = self.streams.stream(j, i as u32 + 1);
                let s = sample_state_noise(cal, m, self.cfg.noise_model, &mut rng);
                if state_won(s, self.cfg.win_threshold) {
                    ev_c1 += votes;
                }
                s
            })
            .collect();
        PathOutcome {
            m_terminal: m,
            state_spreads,
            ev_c1,
        }
    }
}

/// Every simulated path, in path order.
pub fn simulate_paths(
    cals: &BTreeMap<StateCode, StateCalibration>,
    mkt: &MarketCalibration,
    ev: &EvTable,
    cfg: &SimulationConfig,
) -> Result<Vec<PathOutcome>, SimulationError> {
    let model = Model::new(cals, mkt, ev, cfg)?;
    Ok((0..cfg.n_paths as u64)
        .into_par_iter()
        .map(|j| model.path(j))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastDistribution {
    pub p_state: BTreeMap<StateCode, f64>,
    pub p_national: f64,
    /// Probability of each electoral-vote total `0..=538` for candidate 1.
    pub ev_histogram: Vec<f64>,
    pub mean_ev: f64,
    pub n_paths: usize,
    pub seed: u64,
}

#[derive(Clone)]
struct Counts {
    state_wins: Vec<u64>,
    ev: Vec<u64>,
}

impl Counts {
    fn new(n_states: usize) -> Self {
        Counts {
            state_wins: vec![0; n_states],
            ev: vec![0; TOTAL_EV as usize + 1],
        }
    }

    fn merge(mut self, other: Counts) -> Counts {
        for (a, b) in self.state_wins.iter_mut().zip(other.state_wins) {
            *a += b;
        }
        for (a, b) in self.ev.iter_mut().zip(other.ev) {
            *a += b;
        }
        self
    }
}

/// Win probabilities and the EV histogram. Results depend only on the
/// inputs and `cfg`; all tallies are integer counts, so the rayon thread
/// count does not affect the output.
pub fn run_forecast(
    cals: &BTreeMap<StateCode, StateCalibration>,
    mkt: &MarketCalibration,
    ev: &EvTable,
    cfg: &SimulationConfig,
) -> Result<ForecastDistribution, SimulationError> {
    let model = Model::new(cals, mkt, ev, cfg)?;
    let n_states = model.states.len();
    let counts = (0..cfg.n_paths as u64)
        .into_par_iter()
        .fold(
            || Counts::new(n_states),
            |mut acc, j| {
                let path = model.path(j);
                for (w, s) in acc.state_wins.iter_mut().zip(&path.state_spreads) {
                    if state_won(*s, cfg.win_threshold) {
                        *w += 1;
                    }
                }
                acc.ev[path.ev_c1 as usize] += 1;
                acc
            },
        )
        .reduce(|| Counts::new(n_states), Counts::merge);

    let n = cfg.n_paths as f64;
    let p_state = ev
        .iter()
        .zip(&counts.state_wins)
        .map(|((s, _), w)| (s, *w as f64 / n))
        .collect();
    let ev_histogram: Vec<f64> = counts.ev.iter().map(|c| *c as f64 / n).collect();
    let wins: u64 = counts.ev[EV_TO_WIN as usize..].iter().sum();
    let p_national = wins as f64 / n;
    let total_ev: u64 = counts.ev.iter().enumerate().map(|(k, c)| k as u64 * c).sum();
    Ok(ForecastDistribution {
        p_state,
        p_national,
        ev_histogram,
        mean_ev: total_ev as f64 / n,
        n_paths: cfg.n_paths,
        seed: cfg.seed,
    })
}

/// Calibrations and market state as of one forecast date.
#[derive(Debug, Clone)]
pub struct DailyInputs {
    pub date_label: String,
    pub states: BTreeMap<StateCode, StateCalibration>,
    pub market: MarketCalibration,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeriesPoint {
    pub date_label: String,
    pub horizon: f64,
    pub p_national: f64,
    pub p_state: BTreeMap<StateCode, f64>,
}

/// Runs [`run_forecast`] once per day with the same seed, so consecutive
/// days differ only through their inputs.
pub fn probability_time_series(
    days: &[DailyInputs],
    ev: &EvTable,
    cfg: &SimulationConfig,
) -> Result<Vec<TimeSeriesPoint>, SimulationError> {
    days.iter()
        .map(|d| {
            let f = run_forecast(&d.states, &d.market, ev, cfg)?;
            Ok(TimeSeriesPoint {
                date_label: d.date_label.clone(),
                horizon: d.market.horizon,
                p_national: f.p_national,
                p_state: f.p_state,
            })
        })
        .collect()
}
