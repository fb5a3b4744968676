//! `curves`: score as a function of the realization for discretized Gaussians.

use anyhow::Result;
use elecast::scoring::{score_curves, CurveMetric, DiscreteGaussian};

use crate::config::{RunConfig, UsageError};
use crate::output::{num, OutDir};

pub fn cmd_curves(cfg: &RunConfig) -> Result<()> {
    let c = &cfg.curves;
    if c.min_realization > c.max_realization || c.max_realization > elecast::TOTAL_EV {
        return Err(UsageError(format!(
            "curve realizations must satisfy 0 <= min <= max <= {}",
            elecast::TOTAL_EV
        ))
        .into());
    }
    if let Some(sd) = c.sds.iter().find(|s| !(**s > 0.0)) {
        return Err(UsageError(format!("curve sd must be positive, got {sd}")).into());
    }
    let n_bins = elecast::TOTAL_EV as usize + 1;
    let densities: Vec<DiscreteGaussian> = c
        .means
        .iter()
        .flat_map(|&mean| c.sds.iter().map(move |&sd| DiscreteGaussian { mean, sd, n_bins }))
        .collect();
    let realizations: Vec<u32> = (c.min_realization..=c.max_realization).collect();

    let out = OutDir::create(&cfg.out_dir)?;
    for metric in CurveMetric::ALL {
        let points = score_curves(metric, &densities, &realizations);
        out.csv(
            &format!("curves_{}.csv", metric.as_str()),
            ["mean", "sd", "realization", "score"],
            points
                .iter()
                .map(|p| [num(p.mean), num(p.sd), p.realization.to_string(), num(p.score)]),
        )?;
    }
    Ok(())
}
