//! Readers for the CLI's CSV inputs. Dates are ISO `YYYY-MM-DD` and become
//! day numbers (days since 0001-01-01) internally.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use chrono::{Datelike, NaiveDate};
use elecast::scoring::{BinaryForecastSeries, HistogramForecast};
use elecast::trading::ReferenceSeries;
use elecast::Region;
use serde::Deserialize;

pub fn day_number(d: NaiveDate) -> i64 {
    i64::from(d.num_days_from_ce())
}

pub fn day_label(day: i64) -> String {
    i32::try_from(day)
        .ok()
        .and_then(NaiveDate::from_num_days_from_ce_opt)
        .map(|d| d.to_string())
        .unwrap_or_else(|| day.to_string())
}

fn reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))
}

fn parse_date(raw: &str, path: &Path, line: usize) -> Result<NaiveDate> {
    raw.parse()
        .with_context(|| format!("{}:{line}: bad date `{raw}`", path.display()))
}

#[derive(Deserialize)]
struct SeriesRow {
    forecaster: String,
    event: String,
    date: String,
    p: f64,
}

/// `forecaster,event,date,p` rows, grouped per forecaster and event.
pub type ExpertSeries = BTreeMap<String, BTreeMap<Region, BinaryForecastSeries>>;

pub fn read_series(path: &Path) -> Result<ExpertSeries> {
    let mut raw: BTreeMap<(String, Region), Vec<(i64, f64)>> = BTreeMap::new();
    for (i, row) in reader(path)?.deserialize::<SeriesRow>().enumerate() {
        let line = i + 2;
        let row = row.with_context(|| format!("{}:{line}", path.display()))?;
        let region: Region = row
            .event
            .parse()
            .map_err(|e| anyhow!("{}:{line}: {e}", path.display()))?;
        let day = day_number(parse_date(&row.date, path, line)?);
        raw.entry((row.forecaster, region)).or_default().push((day, row.p));
    }
    let mut out: ExpertSeries = BTreeMap::new();
    for ((forecaster, region), mut points) in raw {
        points.sort_by_key(|(d, _)| *d);
        if let Some(w) = points.windows(2).find(|w| w[0].0 == w[1].0) {
            bail!("{forecaster}/{region}: two forecasts on {}", day_label(w[0].0));
        }
        let series = BinaryForecastSeries::new(forecaster.clone(), points)
            .with_context(|| format!("{forecaster}/{region}"))?;
        out.entry(forecaster).or_default().insert(region, series);
    }
    if out.is_empty() {
        bail!("{} has no forecasts", path.display());
    }
    Ok(out)
}

#[derive(Debug, Default)]
pub struct Realizations {
    pub binary: BTreeMap<Region, bool>,
    pub electoral: Option<u32>,
}

#[derive(Deserialize)]
struct RealizationRow {
    event: String,
    outcome: String,
}

/// `event,outcome` rows: `1`/`0` per state or `US`, and one `EV` row with
/// candidate 1's electoral votes.
pub fn read_realizations(path: &Path) -> Result<Realizations> {
    let mut out = Realizations::default();
    for (i, row) in reader(path)?.deserialize::<RealizationRow>().enumerate() {
        let line = i + 2;
        let row = row.with_context(|| format!("{}:{line}", path.display()))?;
        if row.event.eq_ignore_ascii_case("ev") {
            let v: u32 = row
                .outcome
                .parse()
                .with_context(|| format!("{}:{line}: EV must be an integer", path.display()))?;
            if v > elecast::TOTAL_EV {
                bail!("{}:{line}: EV {v} exceeds {}", path.display(), elecast::TOTAL_EV);
            }
            out.electoral = Some(v);
            continue;
        }
        let region: Region = row
            .event
            .parse()
            .map_err(|e| anyhow!("{}:{line}: {e}", path.display()))?;
        let won = match row.outcome.to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" => true,
            "0" | "false" | "no" => false,
            other => bail!("{}:{line}: outcome must be 1 or 0, got `{other}`", path.display()),
        };
        out.binary.insert(region, won);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct HistogramRow {
    forecaster: String,
    ev: u32,
    p: f64,
}

/// `forecaster,ev,p` rows; bins not listed are zero.
pub fn read_histograms(path: &Path) -> Result<BTreeMap<String, HistogramForecast>> {
    let mut bins: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let n = elecast::TOTAL_EV as usize + 1;
    for (i, row) in reader(path)?.deserialize::<HistogramRow>().enumerate() {
        let line = i + 2;
        let row = row.with_context(|| format!("{}:{line}", path.display()))?;
        if row.ev as usize >= n {
            bail!("{}:{line}: EV {} out of range", path.display(), row.ev);
        }
        bins.entry(row.forecaster).or_insert_with(|| vec![0.0; n])[row.ev as usize] += row.p;
    }
    bins.into_iter()
        .map(|(f, b)| {
            let h = HistogramForecast::new(b).with_context(|| format!("histogram for {f}"))?;
            Ok((f, h))
        })
        .collect()
}

#[derive(Deserialize)]
struct ReferenceRow {
    date: String,
    price: f64,
}

/// `date,price` rows of a betting-market series.
pub fn read_reference(path: &Path) -> Result<ReferenceSeries> {
    let mut points = Vec::new();
    for (i, row) in reader(path)?.deserialize::<ReferenceRow>().enumerate() {
        let line = i + 2;
        let row = row.with_context(|| format!("{}:{line}", path.display()))?;
        points.push((day_number(parse_date(&row.date, path, line)?), row.price));
    }
    points.sort_by_key(|(d, _)| *d);
    ReferenceSeries::market(points).with_context(|| format!("reference {}", path.display()))
}

/// `date,<expert>,<expert>,...`: one column per expert.
pub fn read_panel(path: &Path) -> Result<elecast::online::ExpertPanel> {
    let mut rdr = reader(path)?;
    let headers = rdr.headers()?.clone();
    if headers.get(0).map(|h| h.eq_ignore_ascii_case("date")) != Some(true) {
        bail!("{}: first column must be `date`", path.display());
    }
    let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut rows: Vec<(i64, Vec<f64>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.with_context(|| format!("{}:{line}", path.display()))?;
        let day = day_number(parse_date(&rec[0], path, line)?);
        let preds = rec
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>()
                    .with_context(|| format!("{}:{line}: bad probability `{v}`", path.display()))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((day, preds));
    }
    rows.sort_by_key(|(d, _)| *d);
    let (dates, predictions) = rows.into_iter().unzip();
    elecast::online::ExpertPanel::new(names, dates, predictions).with_context(|| format!("panel {}", path.display()))
}
