//! `forecast` and `calibrate`: polls → calibration → simulated EV distribution.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use chrono::{Days, NaiveDate};
use elecast::calibration::{calibrate_market, calibrate_states};
use elecast::data::{
    daily_grid, load_historical, parse_polls, smooth_national, to_spreads, HistoricalResult, PollRecord,
};
use elecast::simulation::{probability_time_series, run_forecast, DailyInputs};
use elecast::{CalibrationSet, EvTable, ForecastDistribution, NoiseModel, Region, SimulationConfig, SmoothedSeries};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{num, OutDir};

struct Inputs {
    election: NaiveDate,
    polls: Vec<PollRecord>,
    historical: Vec<HistoricalResult>,
    ev: EvTable,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let election = cfg.election_date()?;
    let polls_path = cfg.require(&cfg.polls, "polls")?;
    let file = std::fs::File::open(polls_path).with_context(|| format!("opening {}", polls_path.display()))?;
    let parsed = parse_polls(file, election).context("reading polls")?;
    for issue in &parsed.skipped {
        log::warn!("polls line {}: {}", issue.line, issue.reason);
    }
    let historical = match &cfg.historical {
        Some(_) => {
            let path = cfg.require(&cfg.historical, "historical")?;
            let file = std::fs::File::open(path)?;
            let h = load_historical(file).context("reading historical results")?;
            for issue in h.skipped.iter().chain(&h.warnings) {
                log::warn!("historical line {}: {}", issue.line, issue.reason);
            }
            h.rows
        }
        None => Vec::new(),
    };
    let ev = match &cfg.ev_table {
        Some(_) => {
            let path = cfg.require(&cfg.ev_table, "ev_table")?;
            EvTable::from_csv(std::fs::File::open(path)?).context("reading EV table")?
        }
        None => EvTable::bundled_2016(),
    };
    Ok(Inputs {
        election,
        polls: parsed.records,
        historical,
        ev,
    })
}

/// Calibration using only polls published on or before `as_of`.
fn calibrate_as_of(inputs: &Inputs, cfg: &RunConfig, as_of: NaiveDate) -> Result<(CalibrationSet, SmoothedSeries)> {
    let t0 = (inputs.election - as_of).num_days() as f64;
    let usable: Vec<PollRecord> = inputs.polls.iter().filter(|p| p.date <= as_of).cloned().collect();
    let spreads = to_spreads(&usable);
    let national: Vec<_> = spreads.iter().copied().filter(|o| o.region == Region::National).collect();
    let Some(oldest) = national.iter().map(|o| o.days_to_election).reduce(f64::max) else {
        bail!("no national polls on or before {as_of}");
    };
    let grid = daily_grid(t0, oldest.max(t0));
    let smoothed = smooth_national(&national, cfg.bandwidth, &grid).context("smoothing national polls")?;
    let states = calibrate_states(
        inputs.ev.iter().map(|(s, _)| s),
        &spreads,
        &smoothed,
        &inputs.historical,
        cfg.min_polls,
    )?;
    let market = calibrate_market(&smoothed, &national)?;
    Ok((CalibrationSet { market, states }, smoothed))
}

fn default_as_of(inputs: &Inputs) -> Result<NaiveDate> {
    inputs
        .polls
        .iter()
        .map(|p| p.date)
        .max()
        .context("no usable polls")
}

#[derive(Serialize)]
struct CalibrationFile<'a> {
    as_of: NaiveDate,
    days_to_election: i64,
    #[serde(flatten)]
    calibration: &'a CalibrationSet,
    national: &'a SmoothedSeries,
}

pub fn cmd_calibrate(cfg: &RunConfig) -> Result<()> {
    let inputs = load_inputs(cfg)?;
    let as_of = match cfg.as_of {
        Some(d) => d,
        None => default_as_of(&inputs)?,
    };
    let (cal, smoothed) = calibrate_as_of(&inputs, cfg, as_of).context("calibration")?;
    let out = OutDir::create(&cfg.out_dir)?;
    out.json(
        "calibration.json",
        &CalibrationFile {
            as_of,
            days_to_election: (inputs.election - as_of).num_days(),
            calibration: &cal,
            national: &smoothed,
        },
    )
}

#[derive(Serialize)]
struct ForecastFile<'a> {
    election_date: NaiveDate,
    as_of: NaiveDate,
    days_to_election: i64,
    noise_model: NoiseModel,
    win_threshold: f64,
    #[serde(flatten)]
    forecast: &'a ForecastDistribution,
}

pub fn cmd_forecast(cfg: &RunConfig) -> Result<()> {
    let sim = SimulationConfig {
        n_paths: cfg.paths,
        seed: cfg.seed()?,
        noise_model: cfg.noise_model,
        win_threshold: cfg.win_threshold,
    };
    let inputs = load_inputs(cfg)?;
    let as_of = match cfg.as_of {
        Some(d) => d,
        None => default_as_of(&inputs)?,
    };
    let (cal, _) = calibrate_as_of(&inputs, cfg, as_of).context("calibration")?;
    let forecast = run_forecast(&cal.states, &cal.market, &inputs.ev, &sim).context("simulation")?;

    let mut days = Vec::new();
    let step = u64::from(cfg.series_step.max(1));
    let mut back = 0u64;
    while back <= u64::from(cfg.series_span) {
        let Some(date) = as_of.checked_sub_days(Days::new(back)) else {
            break;
        };
        if back == 0 {
            days.push(DailyInputs {
                date_label: date.to_string(),
                states: cal.states.clone(),
                market: cal.market.clone(),
            });
        } else {
            match calibrate_as_of(&inputs, cfg, date) {
                Ok((c, _)) => days.push(DailyInputs {
                    date_label: date.to_string(),
                    states: c.states,
                    market: c.market,
                }),
                Err(e) => log::warn!("time series: skipping {date}: {e:#}"),
            }
        }
        back += step;
    }
    days.reverse();
    let series = probability_time_series(&days, &inputs.ev, &sim).context("time series")?;

    let out = OutDir::create(&cfg.out_dir)?;
    out.json(
        "forecast.json",
        &ForecastFile {
            election_date: inputs.election,
            as_of,
            days_to_election: (inputs.election - as_of).num_days(),
            noise_model: cfg.noise_model,
            win_threshold: cfg.win_threshold,
            forecast: &forecast,
        },
    )?;
    out.csv(
        "ev_histogram.csv",
        ["ev", "probability"],
        forecast
            .ev_histogram
            .iter()
            .enumerate()
            .map(|(k, p)| [k.to_string(), num(*p)]),
    )?;
    let states: Vec<String> = inputs.ev.iter().map(|(s, _)| s.to_string()).collect();
    let header = ["date", "days_to_election", "p_national"]
        .into_iter()
        .map(String::from)
        .chain(states.iter().cloned());
    out.csv(
        "timeseries.csv",
        header,
        series.iter().map(|pt| {
            let by_state: BTreeMap<String, f64> = pt.p_state.iter().map(|(s, p)| (s.to_string(), *p)).collect();
            [pt.date_label.clone(), num(pt.horizon), num(pt.p_national)]
                .into_iter()
                .chain(states.iter().map(|s| num(by_state[s])))
                .collect::<Vec<_>>()
        }),
    )
}
