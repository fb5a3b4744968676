//! `trade`: trading-score P&L for each expert on one event.

use std::collections::BTreeSet;

use anyhow::{bail, Context, Result};
use elecast::scoring::{BinaryForecastSeries, Realization};
use elecast::trading::{mean_reference, trading_pnl, ReferenceSeries};
use elecast::Region;

use crate::config::{ReferenceChoice, RunConfig, UsageError};
use crate::inputs::{day_label, read_realizations, read_reference, read_series};
use crate::output::{file_stem, num, OutDir};

/// Fails with every missing date listed when `reference` lacks a date that
/// some expert forecast on.
fn check_alignment(experts: &[&BinaryForecastSeries], reference: &ReferenceSeries) -> Result<()> {
    let mut problems = Vec::new();
    for e in experts {
        let missing: Vec<String> = e
            .points
            .iter()
            .filter(|(d, _)| reference.price_at(*d).is_none())
            .map(|(d, _)| day_label(*d))
            .collect();
        if !missing.is_empty() {
            problems.push(format!("{}: {}", e.forecaster, missing.join(", ")));
        }
    }
    if !problems.is_empty() {
        bail!("reference is missing dates\n  {}", problems.join("\n  "));
    }
    Ok(())
}

/// Pair-mean reference requires every expert to forecast on the same dates.
fn check_shared_dates(experts: &[&BinaryForecastSeries]) -> Result<()> {
    let all: BTreeSet<i64> = experts.iter().flat_map(|e| e.points.iter().map(|(d, _)| *d)).collect();
    let mut problems = Vec::new();
    for e in experts {
        let have: BTreeSet<i64> = e.points.iter().map(|(d, _)| *d).collect();
        let missing: Vec<String> = all.difference(&have).map(|d| day_label(*d)).collect();
        if !missing.is_empty() {
            problems.push(format!("{}: {}", e.forecaster, missing.join(", ")));
        }
    }
    if !problems.is_empty() {
        bail!("experts do not share dates\n  {}", problems.join("\n  "));
    }
    Ok(())
}

pub fn cmd_trade(cfg: &RunConfig) -> Result<()> {
    let event: Region = cfg
        .event
        .parse()
        .map_err(|e| UsageError(format!("event: {e}")))?;
    let all = read_series(cfg.require(&cfg.experts, "experts")?).context("reading expert series")?;
    let experts: Vec<&BinaryForecastSeries> = all.values().filter_map(|m| m.get(&event)).collect();
    if experts.is_empty() {
        bail!("no expert forecasts for event {event}");
    }
    let reference = match cfg.reference_kind {
        ReferenceChoice::Market => {
            let r = read_reference(cfg.require(&cfg.reference, "reference")?)?;
            check_alignment(&experts, &r)?;
            r
        }
        ReferenceChoice::Pairmean => {
            check_shared_dates(&experts)?;
            mean_reference(&experts)?
        }
    };
    let outcome = match &cfg.realizations {
        Some(_) => {
            let real = read_realizations(cfg.require(&cfg.realizations, "realizations")?)?;
            real.binary.get(&event).map(|w| Realization::Binary(*w))
        }
        None => None,
    };
    if outcome.is_none() {
        log::info!("no outcome for {event}; settling at the final reference price");
    }

    let out = OutDir::create(&cfg.out_dir)?;
    let mut summary = Vec::new();
    for e in &experts {
        let pnl = trading_pnl(e, &reference, outcome).with_context(|| format!("P&L for {}", e.forecaster))?;
        let stem = file_stem(&e.forecaster);
        let daily: Vec<[String; 3]> = pnl
            .daily
            .iter()
            .zip(&pnl.cumulative)
            .map(|((d, inc), cum)| [day_label(*d), num(*inc), num(*cum)])
            .collect();
        out.csv(&format!("pnl_{stem}_nolast.csv"), ["date", "increment", "cumulative"], daily.clone())?;
        let settle = pnl.settlement.unwrap_or(0.0);
        let settle_row = ["settlement".to_string(), num(settle), num(pnl.total())];
        out.csv(
            &format!("pnl_{stem}.csv"),
            ["date", "increment", "cumulative"],
            daily.into_iter().chain(std::iter::once(settle_row)),
        )?;
        summary.push([
            e.forecaster.clone(),
            num(pnl.unsettled_total()),
            num(settle),
            num(pnl.total()),
        ]);
    }
    out.csv(
        "pnl_summary.csv",
        ["forecaster", "unsettled_total", "settlement", "total"],
        summary,
    )
}
