//! `aggregate`: exponential-weights combination of an expert panel.

use anyhow::{Context, Result};
use elecast::online::{build_losses, run, ExpertPanel, LearnerState, LossMode};
use elecast::trading::ReferenceSeries;
use elecast::Region;
use serde::Serialize;

use crate::config::{ReferenceChoice, RunConfig, UsageError};
use crate::inputs::{day_label, read_panel, read_realizations, read_reference};
use crate::output::{num, OutDir};

fn panel_mean(panel: &ExpertPanel) -> Result<ReferenceSeries> {
    let points = panel
        .dates
        .iter()
        .zip(&panel.predictions)
        .map(|(d, row)| (*d, row.iter().sum::<f64>() / row.len() as f64))
        .collect();
    Ok(ReferenceSeries::new(points, elecast::trading::ReferenceKind::PairMean)?)
}

#[derive(Serialize)]
struct ExpertSummary<'a> {
    name: &'a str,
    cumulative_loss: f64,
    final_weight: f64,
    mse: f64,
}

#[derive(Serialize)]
struct Report<'a> {
    loss: LossMode,
    reference: &'static str,
    n_experts: usize,
    rounds: usize,
    eta: f64,
    learner_loss: f64,
    regret: f64,
    regret_bound: f64,
    /// Mean of `(ŷ − target)²` over rounds; target is the next reference
    /// price, or the outcome on the final round.
    mse: f64,
    experts: Vec<ExpertSummary<'a>>,
}

fn mse(preds: impl Iterator<Item = f64>, targets: &[f64]) -> f64 {
    preds.zip(targets).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / targets.len() as f64
}

pub fn cmd_aggregate(cfg: &RunConfig) -> Result<()> {
    let panel = read_panel(cfg.require(&cfg.panel, "panel")?).context("reading panel")?;
    let (reference, ref_name) = match cfg.reference_kind {
        ReferenceChoice::Market => (read_reference(cfg.require(&cfg.reference, "reference")?)?, "market"),
        ReferenceChoice::Pairmean => (panel_mean(&panel)?, "pairmean"),
    };
    let event: Region = cfg
        .event
        .parse()
        .map_err(|e| UsageError(format!("event: {e}")))?;
    let outcome = match &cfg.realizations {
        Some(_) => read_realizations(cfg.require(&cfg.realizations, "realizations")?)?
            .binary
            .get(&event)
            .copied(),
        None => None,
    };
    let losses = build_losses(&panel, &reference, outcome, cfg.loss).context("building losses")?;
    let rounds = losses.len();
    if let Some(h) = cfg.horizon.filter(|h| *h != rounds) {
        log::warn!("configured horizon {h} differs from the {rounds} available rounds; using {rounds}");
    }
    let played = panel.head(rounds);
    let result = run(&played, &losses, rounds).context("online learning")?;

    // Targets for each round, plus a trailing prediction when the panel has
    // a final date without a known outcome.
    let targets: Vec<f64> = (0..rounds)
        .map(|k| match panel.dates.get(k + 1) {
            Some(d) => reference.price_at(*d).expect("checked by build_losses"),
            None => f64::from(u8::from(outcome.expect("final round implies outcome"))),
        })
        .collect();
    let mut rows: Vec<(i64, f64, Option<f64>, Vec<f64>)> = result
        .aggregate
        .iter()
        .zip(&result.weight_history)
        .zip(&targets)
        .map(|(((d, y), w), t)| (*d, *y, Some(*t), w.clone()))
        .collect();
    if rounds < panel.len() {
        let last = panel.len() - 1;
        let y = result.state.predict(&panel.predictions[last])?;
        rows.push((panel.dates[last], y, None, result.state.weights.clone()));
    }

    let out = OutDir::create(&cfg.out_dir)?;
    let header = ["date", "prediction", "reference", "target"]
        .into_iter()
        .map(String::from)
        .chain(panel.names.iter().map(|n| format!("w_{n}")));
    out.csv(
        "aggregate.csv",
        header,
        rows.iter().map(|(d, y, t, w)| {
            [
                day_label(*d),
                num(*y),
                num(reference.price_at(*d).expect("checked by build_losses")),
                t.map(num).unwrap_or_default(),
            ]
            .into_iter()
            .chain(w.iter().map(|x| num(*x)))
            .collect::<Vec<_>>()
        }),
    )?;

    let state: &LearnerState = &result.state;
    let experts = panel
        .names
        .iter()
        .enumerate()
        .map(|(i, name)| ExpertSummary {
            name,
            cumulative_loss: state.cumulative_losses[i],
            final_weight: state.weights[i],
            mse: mse(played.predictions.iter().map(|r| r[i]), &targets),
        })
        .collect();
    out.json(
        "aggregate.json",
        &Report {
            loss: cfg.loss,
            reference: ref_name,
            n_experts: panel.n_experts(),
            rounds,
            eta: state.eta,
            learner_loss: result.learner_loss,
            regret: result.regret,
            regret_bound: result.bound,
            mse: mse(result.aggregate.iter().map(|(_, y)| *y), &targets),
            experts,
        },
    )
}
