//! `score`: score tables per metric and weighting.

use std::collections::BTreeMap;

use anyhow::{bail, Context, Result};
use elecast::scoring::{
    aggregate_scores, brier, cdf_score, group_reports, log_likelihood, selten, spherical, BinaryForecastSeries,
    Metric, Realization, ScoreReport, Weighting,
};
use elecast::{EvTable, Region};

use crate::config::{RunConfig, UsageError};
use crate::inputs::{read_histograms, read_realizations, read_series, Realizations};
use crate::output::{file_stem, num, OutDir};

fn binary_score(metric: Metric, series: &BinaryForecastSeries, omega: bool) -> Result<f64> {
    let omega = Realization::Binary(omega);
    Ok(match metric {
        Metric::Brier => brier(series, omega)?,
        Metric::Log => {
            let s = log_likelihood(series, omega)?;
            if s.hypersensitive {
                log::warn!("{}: probability 0 on the realized outcome; log score is -inf", series.forecaster);
            }
            s.value
        }
        _ => unreachable!("binary metrics only"),
    })
}

fn binary_reports(
    metric: Metric,
    series: &BTreeMap<String, BTreeMap<Region, BinaryForecastSeries>>,
    real: &Realizations,
    ev: &EvTable,
) -> Result<Vec<ScoreReport>> {
    let mut out = Vec::new();
    for (forecaster, events) in series {
        if let Some(s) = events.get(&Region::National) {
            let omega = *real
                .binary
                .get(&Region::National)
                .context("no realization for event US")?;
            out.push(ScoreReport::overall(forecaster, metric, binary_score(metric, s, omega)?));
        }
        let mut per_state = Vec::new();
        for (region, s) in events {
            let Region::State(state) = *region else { continue };
            let omega = *real
                .binary
                .get(region)
                .with_context(|| format!("no realization for event {region}"))?;
            per_state.push((state, ScoreReport::overall(forecaster, metric, binary_score(metric, s, omega)?)));
        }
        if !per_state.is_empty() {
            for w in [Weighting::StateAverage, Weighting::EvWeighted] {
                out.push(aggregate_scores(&per_state, w, ev)?);
            }
        }
    }
    Ok(out)
}

pub fn cmd_score(cfg: &RunConfig) -> Result<()> {
    let real = read_realizations(cfg.require(&cfg.realizations, "realizations")?)?;
    let ev = match &cfg.ev_table {
        Some(_) => EvTable::from_csv(std::fs::File::open(cfg.require(&cfg.ev_table, "ev_table")?)?)?,
        None => EvTable::bundled_2016(),
    };
    let requested = cfg.metrics()?;
    let metrics: Vec<Metric> = match &requested {
        Some(m) => m.clone(),
        None => Metric::ALL
            .into_iter()
            .filter(|m| {
                if m.is_density() {
                    cfg.histograms.is_some()
                } else {
                    cfg.experts.is_some()
                }
            })
            .collect(),
    };
    if metrics.is_empty() {
        return Err(UsageError("nothing to score: set `experts` and/or `histograms`".into()).into());
    }

    let series = if metrics.iter().any(|m| !m.is_density()) {
        Some(read_series(cfg.require(&cfg.experts, "experts")?).context("reading expert series")?)
    } else {
        None
    };
    let histograms = if metrics.iter().any(|m| m.is_density()) {
        Some(read_histograms(cfg.require(&cfg.histograms, "histograms")?).context("reading histograms")?)
    } else {
        None
    };

    let mut reports = Vec::new();
    for &metric in &metrics {
        if metric.is_density() {
            let omega = Realization::Electoral(real.electoral.context("no `EV` row in realizations")?);
            for (forecaster, h) in histograms.as_ref().expect("loaded above") {
                let value = match metric {
                    Metric::Selten => selten(h, omega),
                    Metric::Spherical => spherical(h, omega),
                    Metric::Cdf => cdf_score(h, omega),
                    _ => unreachable!(),
                }
                .with_context(|| format!("{metric} for {forecaster}"))?;
                reports.push(ScoreReport::overall(forecaster, metric, value));
            }
        } else {
            reports.extend(binary_reports(metric, series.as_ref().expect("loaded above"), &real, &ev)?);
        }
    }
    if reports.is_empty() {
        bail!("no forecasts matched any realization");
    }

    let out = OutDir::create(&cfg.out_dir)?;
    for ((metric, weighting), rows) in group_reports(&reports) {
        out.csv(
            &format!("scores_{}_{}.csv", file_stem(metric.as_str()), weighting.as_str()),
            ["forecaster", "value"],
            rows.iter().map(|r| [r.forecaster.clone(), num(r.value)]),
        )?;
    }
    out.json("scores.json", &reports)
}
