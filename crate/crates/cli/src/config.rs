//! Run configuration: a TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use elecast::online::LossMode;
use elecast::scoring::Metric;
use elecast::NoiseModel;
use serde::Deserialize;

use crate::Cli;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceChoice {
    Market,
    Pairmean,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvesConfig {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub min_realization: u32,
    pub max_realization: u32,
}

impl Default for CurvesConfig {
    fn default() -> Self {
        CurvesConfig {
            means: vec![200.0, 270.0, 320.0],
            sds: vec![15.0, 30.0],
            min_realization: 0,
            max_realization: elecast::TOTAL_EV,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub paths: usize,
    pub threads: Option<usize>,
    #[serde(deserialize_with = "date_opt")]
    pub election_date: Option<NaiveDate>,
    /// Forecast date; defaults to the latest usable poll.
    #[serde(deserialize_with = "date_opt")]
    pub as_of: Option<NaiveDate>,
    pub bandwidth: f64,
    pub win_threshold: f64,
    pub min_polls: usize,
    pub noise_model: NoiseModel,
    /// Days between time-series points, and how far back the series runs.
    pub series_step: u32,
    pub series_span: u32,

    pub polls: Option<PathBuf>,
    pub historical: Option<PathBuf>,
    pub ev_table: Option<PathBuf>,
    pub experts: Option<PathBuf>,
    pub histograms: Option<PathBuf>,
    pub realizations: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub panel: Option<PathBuf>,

    /// Event traded or aggregated: `US` or a state code.
    pub event: String,
    pub loss: LossMode,
    pub reference_kind: ReferenceChoice,
    pub horizon: Option<usize>,
    pub metrics: Option<Vec<String>>,
    pub curves: CurvesConfig,

    #[serde(skip)]
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            paths: 10_000,
            threads: None,
            election_date: None,
            as_of: None,
            bandwidth: 5.0,
            win_threshold: 0.0,
            min_polls: elecast::calibration::MIN_POLLS,
            noise_model: NoiseModel::Gaussian,
            series_step: 7,
            series_span: 28,
            polls: None,
            historical: None,
            ev_table: None,
            experts: None,
            histograms: None,
            realizations: None,
            reference: None,
            panel: None,
            event: "US".into(),
            loss: LossMode::Quadratic,
            reference_kind: ReferenceChoice::Market,
            horizon: None,
            metrics: None,
            curves: CurvesConfig::default(),
            out_dir: PathBuf::from("out"),
        }
    }
}

/// A configuration mistake the user has to fix; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

impl RunConfig {
    pub fn load(cli: &Cli) -> Result<Self> {
        let mut cfg = match &cli.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                let mut cfg: RunConfig = toml::from_str(&text)
                    .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
                cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
                cfg
            }
            None => RunConfig::default(),
        };
        if let Some(seed) = cli.seed {
            cfg.seed = Some(seed);
        }
        if let Some(paths) = cli.paths {
            cfg.paths = paths;
        }
        if let Some(threads) = cli.threads {
            cfg.threads = Some(threads);
        }
        if let Some(loss) = cli.loss {
            cfg.loss = match loss {
                LossArg::Quadratic => LossMode::Quadratic,
                LossArg::Trading => LossMode::Trading,
            };
        }
        if let Some(r) = cli.reference {
            cfg.reference_kind = r;
        }
        if let Some(m) = &cli.metrics {
            cfg.metrics = Some(m.iter().map(|m| m.as_str().to_string()).collect());
        }
        cfg.out_dir = cli.out_dir.clone();
        if cfg.paths == 0 {
            return Err(UsageError("paths must be at least 1".into()).into());
        }
        Ok(cfg)
    }

    /// Relative input paths are taken relative to the config file.
    fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.polls,
            &mut self.historical,
            &mut self.ev_table,
            &mut self.experts,
            &mut self.histograms,
            &mut self.realizations,
            &mut self.reference,
            &mut self.panel,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| UsageError("a seed is required: set `seed` in the config or pass --seed".into()).into())
    }

    pub fn election_date(&self) -> Result<NaiveDate> {
        self.election_date
            .ok_or_else(|| UsageError("`election_date` is required".into()).into())
    }

    pub fn require<'a>(&self, path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        match path {
            Some(p) if p.exists() => Ok(p),
            Some(p) => bail!("{key} file {} does not exist", p.display()),
            None => Err(UsageError(format!("`{key}` must be set in the config")).into()),
        }
    }

    pub fn metrics(&self) -> Result<Option<Vec<Metric>>> {
        self.metrics
            .as_ref()
            .map(|names| {
                names
                    .iter()
                    .map(|n| n.parse::<Metric>().map_err(|e| UsageError(e.to_string()).into()))
                    .collect()
            })
            .transpose()
    }
}

/// Accepts both `2016-11-08` and `"2016-11-08"`.
fn date_opt<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<NaiveDate>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Str(String),
        Toml(toml::value::Datetime),
    }
    let text = match Raw::deserialize(d)? {
        Raw::Str(s) => s,
        Raw::Toml(dt) => dt.to_string(),
    };
    text.parse()
        .map(Some)
        .map_err(|e| serde::de::Error::custom(format!("bad date `{text}`: {e}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum LossArg {
    Quadratic,
    Trading,
}
