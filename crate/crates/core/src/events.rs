//! Sentiment event days, neighbour sentiment profiles around them, and
//! cross-sectional structure of the event series.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::sync::{Arc, RwLock};

use chrono::NaiveDate;
use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CoverageMode};
use crate::network::{dynamic_network, Network, NetworkError};
use crate::sentiment::SentimentPanel;
use crate::statkit::{self, MannWhitney};

#[derive(Debug, Error)]
pub enum EventsError {
    #[error("series has {series} values but the calendar has {calendar} days")]
    Misaligned { series: usize, calendar: usize },
    #[error("unknown ticker {0}")]
    UnknownTicker(String),
    #[error("need at least {needed} series with nonzero variance, got {available}")]
    TooFewSeries { needed: usize, available: usize },
    #[error("events line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Positive,
    Negative,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Positive => "positive",
            Direction::Negative => "negative",
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Direction::Positive => 1.0,
            Direction::Negative => -1.0,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "positive" => Ok(Direction::Positive),
            "negative" => Ok(Direction::Negative),
            other => Err(format!("unknown direction {other:?}")),
        }
    }
}

/// `|z_score| > z` of the detector that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentimentEvent {
    pub ticker: String,
    pub date: NaiveDate,
    pub direction: Direction,
    pub z_score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventDetector {
    /// Trading days before the evaluated day that form the baseline.
    pub lookback: usize,
    pub z: f64,
    /// Minimum present values in the baseline.
    pub min_observations: usize,
    pub sigma_floor: f64,
}

impl Default for EventDetector {
    fn default() -> Self {
        EventDetector {
            lookback: 180,
            z: 2.0,
            min_observations: 30,
            sigma_floor: 1e-12,
        }
    }
}

impl EventDetector {
    /// Days whose value leaves the band `mean ± z·std` of the present values
    /// in the preceding `lookback` days. The std is the population std.
    pub fn detect(&self, ticker: &str, series: &[Option<f64>], calendar: &[NaiveDate]) -> Result<Vec<SentimentEvent>, EventsError> {
        if series.len() != calendar.len() {
            return Err(EventsError::Misaligned {
                series: series.len(),
                calendar: calendar.len(),
            });
        }
        let mut out = Vec::new();
        for t in self.lookback..series.len() {
            let Some(value) = series[t] else { continue };
            let window: Vec<f64> = series[t - self.lookback..t].iter().flatten().copied().collect();
            if window.len() < self.min_observations.max(1) {
                continue;
            }
            let mu = statkit::mean(&window).expect("non-empty window");
            let sigma = statkit::population_std(&window).expect("non-empty window");
            if sigma < self.sigma_floor {
                continue;
            }
            let direction = if value > mu + self.z * sigma {
                Direction::Positive
            } else if value < mu - self.z * sigma {
                Direction::Negative
            } else {
                continue;
            };
            out.push(SentimentEvent {
                ticker: ticker.to_string(),
                date: calendar[t],
                direction,
                z_score: (value - mu) / sigma,
            });
        }
        Ok(out)
    }

    /// Events of every panel ticker, ordered by ticker then date.
    pub fn detect_panel(&self, panel: &SentimentPanel) -> Result<Vec<SentimentEvent>, EventsError> {
        let mut out = Vec::new();
        for (ticker, row) in panel.tickers.iter().zip(&panel.values) {
            out.extend(self.detect(ticker, row, &panel.calendar)?);
        }
        out.sort_by(|a, b| (&a.ticker, a.date).cmp(&(&b.ticker, b.date)));
        Ok(out)
    }
}

/// Detection with default thresholds apart from `lookback` and `z`.
pub fn detect_events(
    ticker: &str,
    series: &[Option<f64>],
    calendar: &[NaiveDate],
    lookback: usize,
    z: f64,
) -> Result<Vec<SentimentEvent>, EventsError> {
    EventDetector {
        lookback,
        z,
        ..EventDetector::default()
    }
    .detect(ticker, series, calendar)
}

pub fn write_events_csv<W: Write>(events: &[SentimentEvent], mut writer: W) -> Result<(), EventsError> {
    writeln!(writer, "ticker,date,direction,z")?;
    for e in events {
        writeln!(writer, "{},{},{},{}", e.ticker, e.date, e.direction.as_str(), e.z_score)?;
    }
    Ok(())
}

/// Reads the events CSV; lines starting with `#` are skipped.
pub fn read_events_csv<R: BufRead>(reader: R) -> Result<Vec<SentimentEvent>, EventsError> {
    let mut out = Vec::new();
    let mut header_seen = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| EventsError::Format { line: i + 1, message };
        if !header_seen {
            if line.trim() != "ticker,date,direction,z" {
                return Err(bad("expected header ticker,date,direction,z".into()));
            }
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad("expected four fields".into()));
        }
        out.push(SentimentEvent {
            ticker: f[0].to_string(),
            date: f[1].parse().map_err(|e| bad(format!("bad date: {e}")))?,
            direction: f[2].parse().map_err(bad)?,
            z_score: f[3].parse().map_err(|e| bad(format!("bad z: {e}")))?,
        });
    }
    Ok(out)
}

/// The `min(k, degree)` heaviest neighbours of `c`; equal weights are
/// ordered by ticker.
pub fn top_k_neighbours(g: &Network, c: &str, k: usize) -> Result<Vec<String>, EventsError> {
    let i = g.index_of(c).ok_or_else(|| EventsError::UnknownTicker(c.to_string()))?;
    let mut nbrs: Vec<(&String, f64)> = g.adjacency()[i].iter().map(|&(j, w)| (&g.nodes[j], w)).collect();
    nbrs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(nbrs.into_iter().take(k).map(|(t, _)| t.clone()).collect())
}

/// Unweighted mean of the neighbours' present sentiment on `date`.
pub fn neighbour_sentiment(neighbours: &[String], panel: &SentimentPanel, date: NaiveDate) -> Option<f64> {
    let present: Vec<f64> = neighbours.iter().filter_map(|t| panel.get(t, date)).collect();
    statkit::mean(&present)
}

/// Network valid on a given day.
pub trait NetworkSource: Sync {
    fn network_at(&self, date: NaiveDate) -> Result<Arc<Network>, EventsError>;
}

pub struct StaticNetwork(pub Arc<Network>);

impl NetworkSource for StaticNetwork {
    fn network_at(&self, _date: NaiveDate) -> Result<Arc<Network>, EventsError> {
        Ok(Arc::clone(&self.0))
    }
}

/// Trailing-window networks, built on first request and shared afterwards.
pub struct DynamicNetworks<'a> {
    pub corpus: &'a Corpus,
    pub tickers: Vec<String>,
    pub calendar: Vec<NaiveDate>,
    pub lookback: usize,
    pub mode: CoverageMode,
    cache: RwLock<BTreeMap<NaiveDate, Arc<Network>>>,
}

impl<'a> DynamicNetworks<'a> {
    pub fn new(corpus: &'a Corpus, tickers: Vec<String>, calendar: Vec<NaiveDate>, lookback: usize, mode: CoverageMode) -> Self {
        DynamicNetworks {
            corpus,
            tickers,
            calendar,
            lookback,
            mode,
            cache: RwLock::new(BTreeMap::new()),
        }
    }

    pub fn cached(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }
}

impl NetworkSource for DynamicNetworks<'_> {
    fn network_at(&self, date: NaiveDate) -> Result<Arc<Network>, EventsError> {
        if let Some(g) = self.cache.read().expect("cache lock").get(&date) {
            return Ok(Arc::clone(g));
        }
        let g = Arc::new(dynamic_network(self.corpus, &self.tickers, date, self.lookback, &self.calendar, self.mode)?);
        let mut cache = self.cache.write().expect("cache lock");
        Ok(Arc::clone(cache.entry(date).or_insert(g)))
    }
}

/// Mean, median and test result per offset around a set of events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventProfile {
    pub offsets: Vec<i64>,
    pub mean: Vec<Option<f64>>,
    pub median: Vec<Option<f64>>,
    /// Absent where either test sample is empty.
    pub p_values: Vec<Option<f64>>,
    pub n_events: usize,
}

impl EventProfile {
    pub fn empty(offsets: &[i64]) -> Self {
        EventProfile {
            offsets: offsets.to_vec(),
            mean: vec![None; offsets.len()],
            median: vec![None; offsets.len()],
            p_values: vec![None; offsets.len()],
            n_events: 0,
        }
    }

    pub fn at(&self, offset: i64) -> Option<usize> {
        self.offsets.iter().position(|&o| o == offset)
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<(), EventsError> {
        writeln!(writer, "offset,mean,median,p")?;
        for i in 0..self.offsets.len() {
            writeln!(
                writer,
                "{},{},{},{}",
                self.offsets[i],
                fmt_opt(self.mean[i]),
                fmt_opt(self.median[i]),
                fmt_opt(self.p_values[i])
            )?;
        }
        Ok(())
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// How per-event values become a profile.
///
/// Each offset's per-event sample is tested against a reference sample
/// pooled from `reference_offsets`, which lie before the profile window.
#[derive(Debug, Clone)]
pub struct ProfileSpec {
    pub offsets: Vec<i64>,
    pub reference_offsets: Vec<i64>,
    /// Average per company first, then across companies.
    pub two_level: bool,
    pub test: MannWhitney,
}

impl ProfileSpec {
    /// Offsets `-window..=window` with `count` reference offsets spaced
    /// `memory` days apart before `-window`.
    pub fn symmetric(window: i64, memory: i64, count: usize, two_level: bool) -> Self {
        ProfileSpec {
            offsets: (-window..=window).collect(),
            reference_offsets: reference_offsets(window, memory, count),
            two_level,
            test: MannWhitney::default(),
        }
    }
}

/// `-window - memory·(j+1)` for `j < count`. A value at offset `r` depends
/// on days `r - memory + 1 ..= r`, so the references never overlap the
/// profile window or each other.
pub fn reference_offsets(window: i64, memory: i64, count: usize) -> Vec<i64> {
    (0..count as i64).map(|j| -window - memory * (j + 1)).collect()
}

/// Builds a profile from `value(event, offset)`. Events must carry a
/// grouping key (the ticker) for the two-level mean.
pub fn aggregate_profile<F>(events: &[SentimentEvent], spec: &ProfileSpec, mut value: F) -> EventProfile
where
    F: FnMut(&SentimentEvent, i64) -> Option<f64>,
{
    if events.is_empty() {
        return EventProfile::empty(&spec.offsets);
    }
    let reference: Vec<f64> = events
        .iter()
        .flat_map(|e| spec.reference_offsets.iter().map(move |&r| (e, r)))
        .filter_map(|(e, r)| value(e, r))
        .collect();
    let mut profile = EventProfile::empty(&spec.offsets);
    profile.n_events = events.len();
    for (i, &tau) in spec.offsets.iter().enumerate() {
        let mut pooled = Vec::new();
        let mut per_company: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for e in events {
            if let Some(v) = value(e, tau) {
                pooled.push(v);
                per_company.entry(&e.ticker).or_default().push(v);
            }
        }
        profile.mean[i] = if spec.two_level {
            let company_means: Vec<f64> = per_company.values().filter_map(|v| statkit::mean(v)).collect();
            statkit::mean(&company_means)
        } else {
            statkit::mean(&pooled)
        };
        profile.median[i] = statkit::median(&pooled).ok();
        profile.p_values[i] = spec.test.test(&pooled, &reference).ok().map(|r| r.p_value);
    }
    profile
}

/// Day `index + offset` of the calendar, if inside it.
pub fn shifted(calendar: &[NaiveDate], date: NaiveDate, offset: i64) -> Option<NaiveDate> {
    let t = calendar.binary_search(&date).ok()? as i64 + offset;
    (0..calendar.len() as i64).contains(&t).then(|| calendar[t as usize])
}

/// Group aggregate neighbour sentiment around the members' events.
/// Neighbours are fixed by the network valid on the event day.
pub fn group_event_profile<N: NetworkSource + ?Sized>(
    group: &BTreeSet<String>,
    events: &[SentimentEvent],
    panel: &SentimentPanel,
    networks: &N,
    k: usize,
    spec: &ProfileSpec,
) -> Result<EventProfile, EventsError> {
    let members: Vec<SentimentEvent> = events.iter().filter(|e| group.contains(&e.ticker)).cloned().collect();
    let mut neighbours: Vec<Vec<String>> = Vec::with_capacity(members.len());
    for e in &members {
        let g = networks.network_at(e.date)?;
        neighbours.push(top_k_neighbours(&g, &e.ticker, k)?);
    }
    let index: BTreeMap<(&str, NaiveDate), usize> = members
        .iter()
        .enumerate()
        .map(|(i, e)| ((e.ticker.as_str(), e.date), i))
        .collect();
    Ok(aggregate_profile(&members, spec, |e, tau| {
        let day = shifted(&panel.calendar, e.date, tau)?;
        neighbour_sentiment(&neighbours[index[&(e.ticker.as_str(), e.date)]], panel, day)
    }))
}

/// Per-ticker series over the calendar: `+1` positive event, `-1` negative,
/// `0` otherwise.
pub fn event_series(events: &[SentimentEvent], tickers: &[String], calendar: &[NaiveDate]) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; calendar.len()]; tickers.len()];
    let row: BTreeMap<&str, usize> = tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    for e in events {
        if let (Some(&i), Ok(t)) = (row.get(e.ticker.as_str()), calendar.binary_search(&e.date)) {
            out[i][t] = e.direction.sign();
        }
    }
    out
}

/// Pearson correlation of every pair; absent where either series is
/// constant.
pub fn event_correlation_matrix(series: &[Vec<f64>]) -> Vec<Vec<Option<f64>>> {
    let n = series.len();
    let mut out = vec![vec![None; n]; n];
    for i in 0..n {
        for j in i..n {
            let r = statkit::pearson(&series[i], &series[j]);
            out[i][j] = r;
            out[j][i] = r;
        }
    }
    out
}

/// Share of the correlation matrix trace carried by its `n_factors` largest
/// eigenvalues, over the series with nonzero variance.
pub fn explained_variance(series: &[Vec<f64>], n_factors: usize) -> Result<f64, EventsError> {
    let valid: Vec<&Vec<f64>> = series.iter().filter(|s| statkit::population_std(s).is_some_and(|sd| sd > 0.0)).collect();
    if valid.len() < n_factors.max(1) {
        return Err(EventsError::TooFewSeries {
            needed: n_factors.max(1),
            available: valid.len(),
        });
    }
    let n = valid.len();
    let mut corr = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let r = statkit::pearson(valid[i], valid[j]).unwrap_or(0.0);
            corr[(i, j)] = r;
            corr[(j, i)] = r;
        }
    }
    Ok(explained_variance_of_correlation(&corr, n_factors))
}

pub fn explained_variance_of_correlation(corr: &DMatrix<f64>, n_factors: usize) -> f64 {
    let mut eig: Vec<f64> = SymmetricEigen::new(corr.clone()).eigenvalues.iter().copied().collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let trace: f64 = corr.diagonal().sum();
    let top: f64 = eig.iter().take(n_factors).map(|v| v.max(0.0)).sum();
    (top / trace).clamp(0.0, 1.0)
}
