//! Poll and historical-result ingestion, spreads, and kernel smoothing of the
//! national spread.
//!
//! Time is measured in days to election: `0.0` is election day and larger
//! values lie further in the past.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::states::StateCode;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("failed to read input: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(&'static str),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SmoothingError {
    #[error("no national observations to smooth")]
    Empty,
    #[error("bandwidth must be positive and finite, got {0}")]
    Bandwidth(f64),
    #[error("smoothing grid must be non-empty and strictly ascending")]
    Grid,
    #[error("observation for {0} passed to national smoothing")]
    NotNational(Region),
}

/// Where a poll or observation was taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Region {
    National,
    State(StateCode),
}

impl Region {
    pub fn state(self) -> Option<StateCode> {
        match self {
            Region::National => None,
            Region::State(s) => Some(s),
        }
    }
}

impl FromStr for Region {
    type Err = crate::states::UnknownState;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("US") {
            Ok(Region::National)
        } else {
            s.parse().map(Region::State)
        }
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Region::National => f.write_str("US"),
            Region::State(s) => s.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleType {
    RegisteredVoters,
    LikelyVoters,
    All,
}

impl FromStr for SampleType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rv" | "registered" | "registeredvoters" | "registered voters" => {
                Ok(SampleType::RegisteredVoters)
            }
            "lv" | "likely" | "likelyvoters" | "likely voters" => Ok(SampleType::LikelyVoters),
            "a" | "all" | "adults" => Ok(SampleType::All),
            other => Err(format!("unknown sample type `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PollRecord {
    pub pollster: String,
    pub region: Region,
    pub date: NaiveDate,
    pub days_to_election: f64,
    pub sample_size: u32,
    pub sample_type: SampleType,
    pub pct_c1: f64,
    pub pct_c2: f64,
    /// Third-party and undecided columns; parsed but not modeled.
    pub pct_other: Vec<(String, f64)>,
}

/// One observed spread (candidate 1 minus candidate 2, in points).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpreadObservation {
    pub region: Region,
    pub days_to_election: f64,
    pub spread: f64,
    pub sample_size: u32,
    /// Candidate 1's share of the two-party vote, in `(0, 1)` for real polls.
    pub c1_share: f64,
}

impl SpreadObservation {
    /// A national observation with an even two-party split implied by the
    /// spread. Mostly useful for building fixtures.
    pub fn national(days_to_election: f64, spread: f64) -> Self {
        SpreadObservation {
            region: Region::National,
            days_to_election,
            spread,
            sample_size: 1000,
            c1_share: (0.5 + spread / 200.0).clamp(0.0, 1.0),
        }
    }

    pub fn state(state: StateCode, days_to_election: f64, spread: f64) -> Self {
        SpreadObservation {
            region: Region::State(state),
            ..SpreadObservation::national(days_to_election, spread)
        }
    }
}

/// A CSV row that could not be used, with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct RowIssue {
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct PollParse {
    pub records: Vec<PollRecord>,
    pub skipped: Vec<RowIssue>,
}

impl PollParse {
    pub fn skip_count(&self) -> usize {
        self.skipped.len()
    }
}

const POLL_COLUMNS: [&str; 7] = [
    "pollster",
    "state",
    "date",
    "sample_size",
    "sample_type",
    "pct_c1",
    "pct_c2",
];

fn column_index(headers: &csv::StringRecord, name: &'static str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
        .ok_or(IngestError::MissingColumn(name))
}

fn field<'a>(row: &'a csv::StringRecord, idx: usize, name: &str) -> Result<&'a str, String> {
    match row.get(idx).map(str::trim) {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(format!("missing `{name}`")),
    }
}

fn parse_pct(raw: &str, name: &str) -> Result<f64, String> {
    let v: f64 = raw
        .parse()
        .map_err(|_| format!("`{name}` is not a number: `{raw}`"))?;
    if !(0.0..=100.0).contains(&v) {
        return Err(format!("`{name}` out of [0, 100]: {v}"));
    }
    Ok(v)
}

/// Parses a poll CSV. Rows with missing or invalid fields are skipped and
/// reported in [`PollParse::skipped`]; only an unreadable stream or a missing
/// header column fails the whole parse.
pub fn parse_polls<R: Read>(source: R, election_date: NaiveDate) -> Result<PollParse, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let mut idx = [0usize; 7];
    for (slot, name) in idx.iter_mut().zip(POLL_COLUMNS) {
        *slot = column_index(&headers, name)?;
    }
    let other_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| !idx.contains(i))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut out = PollParse::default();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        match parse_poll_row(&row, &idx, &other_cols, election_date) {
            Ok(rec) => out.records.push(rec),
            Err(reason) => {
                log::warn!("poll line {line} skipped: {reason}");
                out.skipped.push(RowIssue { line, reason });
            }
        }
    }
    Ok(out)
}

fn parse_poll_row(
    row: &csv::StringRecord,
    idx: &[usize; 7],
    other_cols: &[(usize, String)],
    election_date: NaiveDate,
) -> Result<PollRecord, String> {
    let pollster = field(row, idx[0], "pollster")?.to_string();
    let region: Region = field(row, idx[1], "state")?
        .parse()
        .map_err(|e: crate::states::UnknownState| e.to_string())?;
    let raw_date = field(row, idx[2], "date")?;
    let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
        .map_err(|e| format!("bad date `{raw_date}`: {e}"))?;
    let days = (election_date - date).num_days();
    if days < 0 {
        return Err(format!("poll dated {date} is after the election"));
    }
    let raw_n = field(row, idx[3], "sample_size")?;
    let sample_size: u32 = raw_n
        .parse()
        .ok()
        .filter(|n| *n >= 1)
        .ok_or_else(|| format!("bad sample_size `{raw_n}`"))?;
    let sample_type: SampleType = field(row, idx[4], "sample_type")?.parse()?;
    let pct_c1 = parse_pct(field(row, idx[5], "pct_c1")?, "pct_c1")?;
    let pct_c2 = parse_pct(field(row, idx[6], "pct_c2")?, "pct_c2")?;
    if pct_c1 + pct_c2 > 100.0 + 1e-9 {
        return Err(format!("pct_c1 + pct_c2 = {} exceeds 100", pct_c1 + pct_c2));
    }
    if pct_c1 + pct_c2 <= 0.0 {
        return Err("both candidates at 0%".to_string());
    }
    let pct_other = other_cols
        .iter()
        .filter_map(|(i, name)| {
            let v = row.get(*i)?.trim();
            v.parse().ok().map(|p| (name.clone(), p))
        })
        .collect();
    Ok(PollRecord {
        pollster,
        region,
        date,
        days_to_election: days as f64,
        sample_size,
        sample_type,
        pct_c1,
        pct_c2,
        pct_other,
    })
}

pub fn to_spreads(polls: &[PollRecord]) -> Vec<SpreadObservation> {
    polls
        .iter()
        .map(|p| SpreadObservation {
            region: p.region,
            days_to_election: p.days_to_election,
            spread: p.pct_c1 - p.pct_c2,
            sample_size: p.sample_size,
            c1_share: p.pct_c1 / (p.pct_c1 + p.pct_c2),
        })
        .collect()
}

/// Kernel-smoothed national spread on an ascending days-to-election grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothedSeries {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub bandwidth: f64,
    /// Grid points where every kernel weight underflowed and the nearest
    /// observation was used instead.
    #[serde(default)]
    pub fallbacks: Vec<f64>,
}

impl SmoothedSeries {
    /// Index of the grid point closest to `t`; ties go to the earlier point.
    pub fn nearest_index(&self, t: f64) -> usize {
        let pos = self.grid.partition_point(|&g| g < t);
        if pos == 0 {
            0
        } else if pos == self.grid.len() || t - self.grid[pos - 1] <= self.grid[pos] - t {
            pos - 1
        } else {
            pos
        }
    }

    pub fn value_near(&self, t: f64) -> f64 {
        self.values[self.nearest_index(t)]
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

/// Integer-day grid covering `[from, to]`.
pub fn daily_grid(from: f64, to: f64) -> Vec<f64> {
    let start = from.floor() as i64;
    let end = to.ceil() as i64;
    (start..=end).map(|d| d as f64).collect()
}

/// Nadaraya–Watson estimate of the national spread with kernel
/// `exp(-u²/2)`, `u = (t - t_k) / bandwidth`. Polls are weighted equally.
pub fn smooth_national(
    obs: &[SpreadObservation],
    bandwidth: f64,
    grid: &[f64],
) -> Result<SmoothedSeries, SmoothingError> {
    if obs.is_empty() {
        return Err(SmoothingError::Empty);
    }
    if let Some(o) = obs.iter().find(|o| o.region != Region::National) {
        return Err(SmoothingError::NotNational(o.region));
    }
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(SmoothingError::Bandwidth(bandwidth));
    }
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SmoothingError::Grid);
    }

    let mut values = Vec::with_capacity(grid.len());
    let mut fallbacks = Vec::new();
    for &t in grid {
        let (mut num, mut den) = (0.0, 0.0);
        for o in obs {
            let u = (t - o.days_to_election) / bandwidth;
            let w = (-0.5 * u * u).exp();
            num += w * o.spread;
            den += w;
        }
        if den > 0.0 {
            values.push(num / den);
        } else {
            let nearest = obs
                .iter()
                .min_by(|a, b| {
                    (a.days_to_election - t)
                        .abs()
                        .total_cmp(&(b.days_to_election - t).abs())
                })
                .expect("non-empty");
            log::warn!("kernel weights underflow at t={t}; using nearest observation");
            fallbacks.push(t);
            values.push(nearest.spread);
        }
    }
    Ok(SmoothedSeries {
        grid: grid.to_vec(),
        values,
        bandwidth,
        fallbacks,
    })
}

/// A past election: a state's spread alongside the national spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoricalResult {
    pub year: u16,
    pub state: StateCode,
    pub state_spread: f64,
    pub national_spread: f64,
}

#[derive(Debug, Clone, Default)]
pub struct HistoricalParse {
    pub rows: Vec<HistoricalResult>,
    pub skipped: Vec<RowIssue>,
    /// Rows that were kept but look suspicious (e.g. pre-1976 years).
    pub warnings: Vec<RowIssue>,
}

impl HistoricalParse {
    pub fn by_state(&self) -> HashMap<StateCode, Vec<HistoricalResult>> {
        let mut map: HashMap<StateCode, Vec<HistoricalResult>> = HashMap::new();
        for r in &self.rows {
            map.entry(r.state).or_default().push(r.clone());
        }
        map
    }
}

pub const FIRST_HISTORICAL_YEAR: u16 = 1976;

/// Parses `year,state,state_spread,national_spread` rows in file order.
/// Duplicate `(year, state)` rows are all kept.
pub fn load_historical<R: Read>(source: R) -> Result<HistoricalParse, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let idx = [
        column_index(&headers, "year")?,
        column_index(&headers, "state")?,
        column_index(&headers, "state_spread")?,
        column_index(&headers, "national_spread")?,
    ];
    let mut out = HistoricalParse::default();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let parsed = (|| -> Result<HistoricalResult, String> {
            let raw_year = field(&row, idx[0], "year")?;
            let year: u16 = raw_year
                .parse()
                .map_err(|_| format!("bad year `{raw_year}`"))?;
            let state: StateCode = field(&row, idx[1], "state")?
                .parse()
                .map_err(|e: crate::states::UnknownState| e.to_string())?;
            let num = |i: usize, name: &str| -> Result<f64, String> {
                let raw = field(&row, i, name)?;
                raw.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| format!("bad `{name}`: `{raw}`"))
            };
            Ok(HistoricalResult {
                year,
                state,
                state_spread: num(idx[2], "state_spread")?,
                national_spread: num(idx[3], "national_spread")?,
            })
        })();
        match parsed {
            Ok(r) => {
                if r.year < FIRST_HISTORICAL_YEAR || r.year % 4 != 0 {
                    let reason = format!("unexpected election year {}", r.year);
                    log::warn!("historical line {line}: {reason}");
                    out.warnings.push(RowIssue { line, reason });
                }
                out.rows.push(r);
            }
            Err(reason) => {
                log::warn!("historical line {line} skipped: {reason}");
                out.skipped.push(RowIssue { line, reason });
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "pollster,state,date,sample_size,sample_type,pct_c1,pct_c2\n";

    fn election() -> NaiveDate {
        NaiveDate::from_ymd_opt(2016, 11, 8).unwrap()
    }

    #[test]
    fn single_national_row() {
        let csv = format!("{HEADER}Acme,US,2016-11-01,900,LV,48,44\n");
        let parsed = parse_polls(csv.as_bytes(), election()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        let r = &parsed.records[0];
        assert_eq!(r.region, Region::National);
        assert_eq!(r.days_to_election, 7.0);
        assert_eq!(r.sample_type, SampleType::LikelyVoters);
        assert_eq!(to_spreads(&parsed.records)[0].spread, 4.0);
    }

    #[test]
    fn header_only_is_empty() {
        let parsed = parse_polls(HEADER.as_bytes(), election()).unwrap();
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.skip_count(), 0);
    }

    #[test]
    fn one_malformed_row_among_ten() {
        let mut csv = HEADER.to_string();
        for d in 1..=9 {
            csv.push_str(&format!("P{d},OH,2016-10-{:02},600,RV,45,44\n", d + 10));
        }
        // missing pct_c2
        csv.push_str("Bad,OH,2016-10-30,600,RV,45,\n");
        let parsed = parse_polls(csv.as_bytes(), election()).unwrap();
        assert_eq!(parsed.records.len(), 9);
        assert_eq!(parsed.skip_count(), 1);
        assert_eq!(parsed.skipped[0].line, 11);
    }

    #[test]
    fn unknown_state_row_is_reported() {
        let csv = format!("{HEADER}Acme,ZZ,2016-11-01,900,LV,48,44\nAcme,OH,2016-11-01,900,LV,48,44\n");
        let parsed = parse_polls(csv.as_bytes(), election()).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert!(parsed.skipped[0].reason.contains("ZZ"));
    }

    #[test]
    fn invalid_percentages_are_skipped() {
        let csv = format!(
            "{HEADER}A,US,2016-11-01,900,LV,60,50\nB,US,2016-11-01,0,LV,40,40\nC,US,2016-11-20,900,LV,40,40\n"
        );
        let parsed = parse_polls(csv.as_bytes(), election()).unwrap();
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.skip_count(), 3);
    }

    #[test]
    fn missing_column_fails() {
        let csv = "pollster,state,date\nA,US,2016-01-01\n";
        assert!(matches!(
            parse_polls(csv.as_bytes(), election()),
            Err(IngestError::MissingColumn("sample_size"))
        ));
    }

    #[test]
    fn third_party_columns_are_kept_aside() {
        let csv = "pollster,state,date,sample_size,sample_type,pct_c1,pct_c2,johnson,stein\n\
                   Albuquerque Journal,NM,2016-09-29,501,LV,35,31,24,2\n";
        let parsed = parse_polls(csv.as_bytes(), election()).unwrap();
        let r = &parsed.records[0];
        assert_eq!(r.pct_other, vec![("johnson".into(), 24.0), ("stein".into(), 2.0)]);
        assert_eq!(to_spreads(&parsed.records)[0].spread, 4.0);
    }

    #[test]
    fn spread_signs() {
        let mk = |a, b| PollRecord {
            pollster: "x".into(),
            region: Region::National,
            date: election(),
            days_to_election: 0.0,
            sample_size: 100,
            sample_type: SampleType::All,
            pct_c1: a,
            pct_c2: b,
            pct_other: vec![],
        };
        let s = to_spreads(&[mk(48.0, 44.0), mk(44.0, 48.0), mk(50.0, 50.0)]);
        let spreads: Vec<f64> = s.iter().map(|o| o.spread).collect();
        assert_eq!(spreads, vec![4.0, -4.0, 0.0]);
        assert_eq!(s[2].c1_share, 0.5);
    }

    #[test]
    fn smoothing_single_observation() {
        let obs = [SpreadObservation::national(0.0, 5.0)];
        let s = smooth_national(&obs, 5.0, &[0.0, 3.0, 17.0]).unwrap();
        assert_eq!(s.values, vec![5.0, 5.0, 5.0]);
    }

    #[test]
    fn smoothing_symmetric_pair() {
        let obs = [
            SpreadObservation::national(-1.0, 4.0),
            SpreadObservation::national(1.0, 6.0),
        ];
        let s = smooth_national(&obs, 5.0, &[0.0]).unwrap();
        assert!((s.values[0] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn smoothing_two_term_kernel_sum() {
        // weights at t=0: 1 and exp(-(10/5)^2/2) = e^-2
        let obs = [
            SpreadObservation::national(0.0, 0.0),
            SpreadObservation::national(10.0, 10.0),
        ];
        let s = smooth_national(&obs, 5.0, &[0.0]).unwrap();
        let e2 = (-2.0f64).exp();
        let expected = 10.0 * e2 / (1.0 + e2);
        assert!((s.values[0] - expected).abs() < 1e-12);
        assert!((s.values[0] - 1.1920).abs() < 1e-4);
    }

    #[test]
    fn smoothing_underflow_falls_back_to_nearest() {
        let obs = [
            SpreadObservation::national(0.0, 1.0),
            SpreadObservation::national(1000.0, 9.0),
        ];
        let s = smooth_national(&obs, 1.0, &[400.0, 700.0]).unwrap();
        assert_eq!(s.values, vec![1.0, 9.0]);
        assert_eq!(s.fallbacks, vec![400.0, 700.0]);
    }

    #[test]
    fn smoothing_errors() {
        let obs = [SpreadObservation::national(0.0, 1.0)];
        assert_eq!(smooth_national(&[], 5.0, &[0.0]), Err(SmoothingError::Empty));
        assert_eq!(
            smooth_national(&obs, 0.0, &[0.0]),
            Err(SmoothingError::Bandwidth(0.0))
        );
        assert_eq!(smooth_national(&obs, 5.0, &[1.0, 1.0]), Err(SmoothingError::Grid));
        let oh = SpreadObservation::state("OH".parse().unwrap(), 0.0, 1.0);
        assert!(matches!(
            smooth_national(&[oh], 5.0, &[0.0]),
            Err(SmoothingError::NotNational(_))
        ));
    }

    #[test]
    fn nearest_index_ties_and_clamping() {
        let s = SmoothedSeries {
            grid: vec![0.0, 1.0, 2.0],
            values: vec![10.0, 11.0, 12.0],
            bandwidth: 5.0,
            fallbacks: vec![],
        };
        assert_eq!(s.nearest_index(-3.0), 0);
        assert_eq!(s.nearest_index(0.5), 0);
        assert_eq!(s.nearest_index(0.6), 1);
        assert_eq!(s.nearest_index(9.0), 2);
        assert_eq!(s.value_near(1.4), 11.0);
    }

    #[test]
    fn daily_grid_bounds() {
        assert_eq!(daily_grid(2.0, 5.0), vec![2.0, 3.0, 4.0, 5.0]);
        assert_eq!(daily_grid(2.5, 3.2), vec![2.0, 3.0, 4.0]);
    }

    #[test]
    fn historical_rows() {
        let csv = "year,state,state_spread,national_spread\n1976,OH,-0.27,2.06\n";
        let parsed = load_historical(csv.as_bytes()).unwrap();
        assert_eq!(
            parsed.rows,
            vec![HistoricalResult {
                year: 1976,
                state: "OH".parse().unwrap(),
                state_spread: -0.27,
                national_spread: 2.06
            }]
        );
        assert!(parsed.warnings.is_empty());
    }

    #[test]
    fn historical_empty_duplicates_and_old_years() {
        let empty = load_historical("year,state,state_spread,national_spread\n".as_bytes()).unwrap();
        assert!(empty.rows.is_empty());

        let csv = "year,state,state_spread,national_spread\n\
                   1980,WY,30,9.7\n1980,WY,31,9.7\n1972,WY,40,23.2\n1984,WY,abc,18\n";
        let parsed = load_historical(csv.as_bytes()).unwrap();
        assert_eq!(parsed.rows.len(), 3);
        assert_eq!(parsed.warnings.len(), 1);
        assert_eq!(parsed.skipped.len(), 1);
        assert_eq!(parsed.by_state()[&"WY".parse().unwrap()].len(), 3);
    }
}
