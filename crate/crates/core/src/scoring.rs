//! Scores for binary probability series and electoral-vote densities.
//!
//! Orientation is fixed per metric: Brier and CDF are penalties (lower is
//! better); log-likelihood, Selten and spherical are rewards (higher is
//! better).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::simulation::EvTable;
use crate::states::StateCode;

/// Histograms must sum to one within this tolerance.
pub const NORMALIZATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreError {
    #[error("cannot score an empty input")]
    Empty,
    #[error("probability {0} outside [0, 1]")]
    Probability(f64),
    #[error("forecast times must be strictly increasing")]
    Unordered,
    #[error("expected a binary realization")]
    NotBinary,
    #[error("expected an electoral-vote realization")]
    NotElectoral,
    #[error("realized outcome {value} outside histogram support 0..{len}")]
    OutOfSupport { value: u32, len: usize },
    #[error("histogram sums to {0}, not 1")]
    NotNormalized(f64),
    #[error("histogram has a negative or non-finite bin")]
    InvalidBin,
    #[error("histogram has zero norm")]
    ZeroHistogram,
    #[error("cannot aggregate reports with different metrics or forecasters")]
    Mixed,
    #[error("{metric} cannot be aggregated with {weighting} weighting")]
    InvalidWeighting { metric: Metric, weighting: Weighting },
    #[error("no electoral votes for {0}")]
    MissingWeight(StateCode),
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
}

/// A forecaster's probability for one binary event over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryForecastSeries {
    pub forecaster: String,
    /// `(day, probability)` with strictly increasing days.
    pub points: Vec<(i64, f64)>,
}

impl BinaryForecastSeries {
    pub fn new(forecaster: impl Into<String>, points: Vec<(i64, f64)>) -> Result<Self, ScoreError> {
        if let Some(&(_, p)) = points.iter().find(|(_, p)| !(0.0..=1.0).contains(p)) {
            return Err(ScoreError::Probability(p));
        }
        if points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(ScoreError::Unordered);
        }
        Ok(BinaryForecastSeries {
            forecaster: forecaster.into(),
            points,
        })
    }

    pub fn probabilities(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|(_, p)| *p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Realization {
    Binary(bool),
    Electoral(u32),
}

impl Realization {
    fn binary(self) -> Result<f64, ScoreError> {
        match self {
            Realization::Binary(w) => Ok(if w { 1.0 } else { 0.0 }),
            Realization::Electoral(_) => Err(ScoreError::NotBinary),
        }
    }

    fn bin(self, h: &HistogramForecast) -> Result<usize, ScoreError> {
        match self {
            Realization::Electoral(v) if (v as usize) < h.bins.len() => Ok(v as usize),
            Realization::Electoral(value) => Err(ScoreError::OutOfSupport {
                value,
                len: h.bins.len(),
            }),
            Realization::Binary(_) => Err(ScoreError::NotElectoral),
        }
    }
}

/// A discrete density over outcomes `0..bins.len()`; for electoral votes
/// that is 539 bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramForecast {
    pub bins: Vec<f64>,
}

impl HistogramForecast {
    pub fn new(bins: Vec<f64>) -> Result<Self, ScoreError> {
        if bins.is_empty() {
            return Err(ScoreError::Empty);
        }
        if bins.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(ScoreError::InvalidBin);
        }
        Ok(HistogramForecast { bins })
    }

    /// All mass on `at`, over `len` bins.
    pub fn point_mass(len: usize, at: usize) -> Self {
        let mut bins = vec![0.0; len];
        bins[at] = 1.0;
        HistogramForecast { bins }
    }

    fn check_normalized(&self) -> Result<(), ScoreError> {
        let total: f64 = self.bins.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(ScoreError::NotNormalized(total));
        }
        Ok(())
    }

    pub fn cdf(&self) -> Vec<f64> {
        self.bins
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect()
    }
}

/// `Σ_t (ω − p_t)²`. A penalty.
pub fn brier(series: &BinaryForecastSeries, omega: Realization) -> Result<f64, ScoreError> {
    let w = omega.binary()?;
    if series.points.is_empty() {
        return Err(ScoreError::Empty);
    }
    Ok(series.probabilities().map(|p| (w - p) * (w - p)).sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogScore {
    pub value: f64,
    /// Set when some period assigned probability 0 to what happened; the
    /// value is then `-inf`.
    pub hypersensitive: bool,
}

/// `Σ_t ln(ω p_t + (1 − ω)(1 − p_t))`. A reward, always `<= 0`.
pub fn log_likelihood(series: &BinaryForecastSeries, omega: Realization) -> Result<LogScore, ScoreError> {
    let w = omega.binary()?;
    if series.points.is_empty() {
        return Err(ScoreError::Empty);
    }
    let mut value = 0.0;
    for p in series.probabilities() {
        let q = w * p + (1.0 - p) * (1.0 - w);
        if q <= 0.0 {
            return Ok(LogScore {
                value: f64::NEG_INFINITY,
                hypersensitive: true,
            });
        }
        value += q.ln();
    }
    Ok(LogScore {
        value,
        hypersensitive: false,
    })
}

/// Brier score applied bin-wise to a density: `Σ_i (ω_i − p_i)²` with
/// one-hot `ω`. A penalty; equals `1 − selten`.
pub fn categorical_brier(h: &HistogramForecast, realized: Realization) -> Result<f64, ScoreError> {
    let star = realized.bin(h)?;
    h.check_normalized()?;
    Ok(h.bins
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let w = if i == star { 1.0 } else { 0.0 };
            (w - p) * (w - p)
        })
        .sum())
}

/// `ln p_{i*}`: the log score of a density. `-inf` when the realized bin
/// has no mass.
pub fn log_density(h: &HistogramForecast, realized: Realization) -> Result<f64, ScoreError> {
    let star = realized.bin(h)?;
    h.check_normalized()?;
    Ok(h.bins[star].ln())
}

/// `2 p_{i*} − Σ p_i²`, in `[-1, 1]`. A reward.
pub fn selten(h: &HistogramForecast, realized: Realization) -> Result<f64, ScoreError> {
    let star = realized.bin(h)?;
    h.check_normalized()?;
    Ok(2.0 * h.bins[star] - sum_sq(&h.bins))
}

/// `p_{i*} / ‖p‖₂`, in `[0, 1]`. A reward.
pub fn spherical(h: &HistogramForecast, realized: Realization) -> Result<f64, ScoreError> {
    let star = realized.bin(h)?;
    let norm = sum_sq(&h.bins).sqrt();
    if norm == 0.0 {
        return Err(ScoreError::ZeroHistogram);
    }
    Ok(h.bins[star] / norm)
}

/// `Σ_k (F(k) − 1{k ≥ ω})²` over unit-width bins. A penalty, zero only for a
/// point mass on the realized bin.
pub fn cdf_score(h: &HistogramForecast, realized: Realization) -> Result<f64, ScoreError> {
    let star = realized.bin(h)?;
    h.check_normalized()?;
    Ok(h.cdf()
        .into_iter()
        .enumerate()
        .map(|(k, f)| {
            let step = if k >= star { 1.0 } else { 0.0 };
            (f - step) * (f - step)
        })
        .sum())
}

fn sum_sq(xs: &[f64]) -> f64 {
    xs.iter().map(|p| p * p).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Brier,
    Log,
    Selten,
    Spherical,
    Cdf,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::Brier,
        Metric::Log,
        Metric::Selten,
        Metric::Spherical,
        Metric::Cdf,
    ];

    pub fn is_density(self) -> bool {
        matches!(self, Metric::Selten | Metric::Spherical | Metric::Cdf)
    }

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::Brier | Metric::Cdf)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Brier => "brier",
            Metric::Log => "log",
            Metric::Selten => "selten",
            Metric::Spherical => "spherical",
            Metric::Cdf => "cdf",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = ScoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "brier" => Ok(Metric::Brier),
            "log" | "loglik" | "log_likelihood" => Ok(Metric::Log),
            "selten" => Ok(Metric::Selten),
            "spherical" => Ok(Metric::Spherical),
            "cdf" | "crps" => Ok(Metric::Cdf),
            other => Err(ScoreError::UnknownMetric(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Overall,
    StateAverage,
    EvWeighted,
}

impl Weighting {
    pub fn as_str(self) -> &'static str {
        match self {
            Weighting::Overall => "overall",
            Weighting::StateAverage => "state_average",
            Weighting::EvWeighted => "ev_weighted",
        }
    }
}

impl fmt::Display for Weighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub forecaster: String,
    pub metric: Metric,
    pub weighting: Weighting,
    #[serde(with = "extended_real")]
    pub value: f64,
}

impl ScoreReport {
    pub fn overall(forecaster: impl Into<String>, metric: Metric, value: f64) -> Self {
        ScoreReport {
            forecaster: forecaster.into(),
            metric,
            weighting: Weighting::Overall,
            value,
        }
    }
}

/// Renders an `f64` the way a CSV cell would: infinities as `inf`/`-inf`.
pub fn format_value(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".to_string()
    } else if v == f64::INFINITY {
        "inf".to_string()
    } else if v.is_nan() {
        "nan".to_string()
    } else {
        v.to_string()
    }
}

/// JSON has no infinities, so non-finite scores travel as strings.
mod extended_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&super::format_value(*v))
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(v),
            Raw::Str(s) => match s.as_str() {
                "-inf" => Ok(f64::NEG_INFINITY),
                "inf" => Ok(f64::INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad score `{other}`"))),
            },
        }
    }
}

/// Averages per-state binary scores, either unweighted or weighted by
/// electoral votes.
pub fn aggregate_scores(
    per_state: &[(StateCode, ScoreReport)],
    weighting: Weighting,
    ev: &EvTable,
) -> Result<ScoreReport, ScoreError> {
    let (_, first) = per_state.first().ok_or(ScoreError::Empty)?;
    if per_state
        .iter()
        .any(|(_, r)| r.metric != first.metric || r.forecaster != first.forecaster)
    {
        return Err(ScoreError::Mixed);
    }
    if first.metric.is_density() || weighting == Weighting::Overall {
        return Err(ScoreError::InvalidWeighting {
            metric: first.metric,
            weighting,
        });
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (state, r) in per_state {
        let w = match weighting {
            Weighting::EvWeighted => f64::from(ev.get(*state).ok_or(ScoreError::MissingWeight(*state))?),
            _ => 1.0,
        };
        num += w * r.value;
        den += w;
    }
    Ok(ScoreReport {
        forecaster: first.forecaster.clone(),
        metric: first.metric,
        weighting,
        value: num / den,
    })
}

/// Scores that can be traced as a function of the realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveMetric {
    Log,
    Selten,
    Spherical,
    Cdf,
}

impl CurveMetric {
    pub const ALL: [CurveMetric; 4] = [
        CurveMetric::Log,
        CurveMetric::Selten,
        CurveMetric::Spherical,
        CurveMetric::Cdf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CurveMetric::Log => "log",
            CurveMetric::Selten => "selten",
            CurveMetric::Spherical => "spherical",
            CurveMetric::Cdf => "cdf",
        }
    }
}

/// A Gaussian discretized onto integer bins `0..n_bins`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteGaussian {
    pub mean: f64,
    pub sd: f64,
    pub n_bins: usize,
}

impl DiscreteGaussian {
    /// Log bin probabilities, normalized with log-sum-exp so tails stay finite.
    pub fn log_probs(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.n_bins)
            .map(|k| {
                let z = (k as f64 - self.mean) / self.sd;
                -0.5 * z * z
            })
            .collect();
        let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + raw.iter().map(|r| (r - max).exp()).sum::<f64>().ln();
        raw.into_iter().map(|r| r - lse).collect()
    }

    pub fn histogram(&self) -> HistogramForecast {
        HistogramForecast {
            bins: self.log_probs().into_iter().map(f64::exp).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub mean: f64,
    pub sd: f64,
    pub realization: u32,
    pub score: f64,
}

/// Score of each density at each realization, oriented so higher is better
/// (the CDF penalty is negated). Realizations outside the bins are skipped.
pub fn score_curves(
    metric: CurveMetric,
    densities: &[DiscreteGaussian],
    realizations: &[u32],
) -> Vec<CurvePoint> {
    let mut out = Vec::new();
    for d in densities {
        let log_probs = d.log_probs();
        let h = d.histogram();
        let cdf = h.cdf();
        let norm = sum_sq(&h.bins).sqrt();
        let sq = sum_sq(&h.bins);
        for &r in realizations.iter().filter(|r| (**r as usize) < d.n_bins) {
            let i = r as usize;
            let score = match metric {
                CurveMetric::Log => log_probs[i],
                CurveMetric::Selten => 2.0 * h.bins[i] - sq,
                CurveMetric::Spherical => h.bins[i] / norm,
                CurveMetric::Cdf => -cdf
                    .iter()
                    .enumerate()
                    .map(|(k, f)| {
                        let step = if k >= i { 1.0 } else { 0.0 };
                        (f - step) * (f - step)
                    })
                    .sum::<f64>(),
            };
            out.push(CurvePoint {
                mean: d.mean,
                sd: d.sd,
                realization: r,
                score,
            });
        }
    }
    out
}

/// Groups reports by `(metric, weighting)`, e.g. for one output table each.
pub fn group_reports(reports: &[ScoreReport]) -> BTreeMap<(Metric, Weighting), Vec<ScoreReport>> {
    let mut out: BTreeMap<_, Vec<_>> = BTreeMap::new();
    for r in reports {
        out.entry((r.metric, r.weighting)).or_default().push(r.clone());
    }
    out
}
