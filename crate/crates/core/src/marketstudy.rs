//! Returns, rolling CAPM residuals, cumulative abnormal returns and the
//! event-window statistics built on them.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::{aggregate_profile, fmt_opt, reference_offsets, Direction, EventProfile, ProfileSpec, SentimentEvent};
use crate::statkit::{self, DensityEstimate, Histogram, MannWhitney};

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("price must be positive, got {0}")]
    NonPositivePrice(f64),
    #[error("{file} line {line}: {message}")]
    Format { file: &'static str, line: usize, message: String },
    #[error("{file}: duplicate row for {key}")]
    Duplicate { file: &'static str, key: String },
    #[error("CAPM window has {got} paired observations, need {needed}")]
    InsufficientPairs { needed: usize, got: usize },
    #[error("index returns have zero variance over the window")]
    ZeroVariance,
    #[error("no trading days: index and stock dates do not overlap")]
    EmptyCalendar,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn log_return(p_prev: f64, p: f64) -> Result<f64, MarketError> {
    for v in [p_prev, p] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(MarketError::NonPositivePrice(v));
        }
    }
    Ok((p / p_prev).ln())
}

/// `|ln(p / p_prev)|`, evaluated on the larger-over-smaller ratio so that
/// swapping the prices gives the identical value.
pub fn volatility_proxy(p_prev: f64, p: f64) -> Result<f64, MarketError> {
    log_return(p_prev.min(p), p_prev.max(p))
}

/// Daily closes aligned to a trading calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketPanel {
    pub calendar: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    /// `close[ticker][day]`.
    pub close: Vec<Vec<Option<f64>>>,
    pub index_close: Vec<f64>,
}

#[derive(Debug, Deserialize)]
struct StockRow {
    date: NaiveDate,
    ticker: String,
    close: f64,
}

#[derive(Debug, Deserialize)]
struct IndexRow {
    date: NaiveDate,
    close: f64,
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(reader: R, file: &'static str) -> Result<Vec<T>, MarketError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| MarketError::Format {
                file,
                line: e.position().map_or(i + 2, |p| p.line() as usize),
                message: e.to_string(),
            })
        })
        .collect()
}

impl MarketPanel {
    /// Calendar is every date with an index close and at least one stock
    /// close.
    pub fn from_csv<R1: Read, R2: Read>(market: R1, index: R2) -> Result<Self, MarketError> {
        let stock_rows: Vec<StockRow> = read_rows(market, "market")?;
        let index_rows: Vec<IndexRow> = read_rows(index, "index")?;
        let mut index: BTreeMap<NaiveDate, f64> = BTreeMap::new();
        for (i, r) in index_rows.iter().enumerate() {
            if !(r.close > 0.0 && r.close.is_finite()) {
                return Err(MarketError::Format { file: "index", line: i + 2, message: format!("close must be positive, got {}", r.close) });
            }
            if index.insert(r.date, r.close).is_some() {
                return Err(MarketError::Duplicate { file: "index", key: r.date.to_string() });
            }
        }
        let mut stocks: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();
        for (i, r) in stock_rows.iter().enumerate() {
            if !(r.close > 0.0 && r.close.is_finite()) {
                return Err(MarketError::Format { file: "market", line: i + 2, message: format!("close must be positive, got {}", r.close) });
            }
            if stocks.entry(r.ticker.clone()).or_default().insert(r.date, r.close).is_some() {
                return Err(MarketError::Duplicate { file: "market", key: format!("{} {}", r.ticker, r.date) });
            }
        }
        let stock_dates: BTreeSet<NaiveDate> = stocks.values().flat_map(|m| m.keys().copied()).collect();
        let calendar: Vec<NaiveDate> = index.keys().copied().filter(|d| stock_dates.contains(d)).collect();
        if calendar.is_empty() {
            return Err(MarketError::EmptyCalendar);
        }
        let close = stocks.values().map(|m| calendar.iter().map(|d| m.get(d).copied()).collect()).collect();
        Ok(MarketPanel {
            index_close: calendar.iter().map(|d| index[d]).collect(),
            tickers: stocks.into_keys().collect(),
            close,
            calendar,
        })
    }

    pub fn write_market_csv<W: Write>(&self, mut writer: W) -> Result<(), MarketError> {
        writeln!(writer, "date,ticker,close")?;
        for (d, date) in self.calendar.iter().enumerate() {
            for (t, ticker) in self.tickers.iter().enumerate() {
                if let Some(c) = self.close[t][d] {
                    writeln!(writer, "{date},{ticker},{c}")?;
                }
            }
        }
        Ok(())
    }

    pub fn write_index_csv<W: Write>(&self, mut writer: W) -> Result<(), MarketError> {
        writeln!(writer, "date,close")?;
        for (date, c) in self.calendar.iter().zip(&self.index_close) {
            writeln!(writer, "{date},{c}")?;
        }
        Ok(())
    }

    pub fn row(&self, ticker: &str) -> Option<&[Option<f64>]> {
        self.tickers.iter().position(|t| t == ticker).map(|i| self.close[i].as_slice())
    }
}

/// Log returns of consecutive calendar days; absent where either close is.
pub fn returns(closes: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut out = vec![None; closes.len()];
    for t in 1..closes.len() {
        if let (Some(a), Some(b)) = (closes[t - 1], closes[t]) {
            out[t] = log_return(a, b).ok();
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapmFit {
    pub alpha: f64,
    pub beta: f64,
    /// First and last calendar index of the estimation window.
    pub window: (usize, usize),
    pub n_pairs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapmParams {
    pub window: usize,
    pub min_pairs: usize,
}

impl Default for CapmParams {
    fn default() -> Self {
        CapmParams { window: 180, min_pairs: 120 }
    }
}

/// OLS of stock on index returns over the `window` days strictly before
/// `at`, using days where both are present.
pub fn fit_capm(stock: &[Option<f64>], index: &[Option<f64>], at: usize, params: CapmParams) -> Result<CapmFit, MarketError> {
    let start = at.saturating_sub(params.window);
    let pairs: Vec<(f64, f64)> = (start..at.min(stock.len()).min(index.len()))
        .filter_map(|t| Some((stock[t]?, index[t]?)))
        .collect();
    if at < params.window || pairs.len() < params.min_pairs.max(2) {
        return Err(MarketError::InsufficientPairs {
            needed: params.min_pairs.max(2),
            got: pairs.len(),
        });
    }
    let n = pairs.len() as f64;
    let my = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut sq) = (0.0, 0.0, 0.0);
    for &(y, x) in &pairs {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        sq += x * x;
    }
    if sxx <= f64::EPSILON * sq {
        return Err(MarketError::ZeroVariance);
    }
    let beta = sxy / sxx;
    Ok(CapmFit {
        alpha: my - beta * mx,
        beta,
        window: (start, at - 1),
        n_pairs: pairs.len(),
    })
}

pub fn abnormal_return(fit: &CapmFit, r: f64, r_m: f64) -> f64 {
    r - fit.alpha - fit.beta * r_m
}

/// Residual of each day against the CAPM fitted on the preceding window;
/// absent where no fit is possible.
pub fn abnormal_returns(stock: &[Option<f64>], index: &[Option<f64>], params: CapmParams) -> Vec<Option<f64>> {
    (0..stock.len())
        .map(|t| {
            let (r, rm) = (stock[t]?, index[t]?);
            let fit = fit_capm(stock, index, t, params).ok()?;
            Some(abnormal_return(&fit, r, rm))
        })
        .collect()
}

/// `sum_{i = t - span}^{t} ar[i]`: `span + 1` terms, all present.
pub fn car_at(ar: &[Option<f64>], t: i64, span: usize) -> Option<f64> {
    let lo = t - span as i64;
    if lo < 0 || t >= ar.len() as i64 {
        return None;
    }
    (lo..=t).map(|i| ar[i as usize]).sum()
}

/// CAR on every day of `[event - window, event + window]`, or `None` when
/// an abnormal return in the accumulation range is missing.
pub fn car(ar: &[Option<f64>], event: usize, window: usize, span: usize) -> Option<Vec<f64>> {
    let e = event as i64;
    let w = window as i64;
    (e - w..=e + w).map(|t| car_at(ar, t, span)).collect()
}

/// Per-ticker returns, volatility proxy and abnormal returns on one
/// calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketSeries {
    pub calendar: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    pub volatility: Vec<Vec<Option<f64>>>,
    pub abnormal: Vec<Vec<Option<f64>>>,
}

impl MarketSeries {
    pub fn from_panel(panel: &MarketPanel, params: CapmParams) -> Self {
        let index: Vec<Option<f64>> = returns(&panel.index_close.iter().map(|&c| Some(c)).collect::<Vec<_>>());
        let mut volatility = Vec::with_capacity(panel.tickers.len());
        let mut abnormal = Vec::with_capacity(panel.tickers.len());
        for closes in &panel.close {
            let r = returns(closes);
            volatility.push(r.iter().map(|v| v.map(f64::abs)).collect());
            abnormal.push(abnormal_returns(&r, &index, params));
        }
        MarketSeries {
            calendar: panel.calendar.clone(),
            tickers: panel.tickers.clone(),
            volatility,
            abnormal,
        }
    }

    fn index_of(&self, ticker: &str) -> Option<usize> {
        self.tickers.iter().position(|t| t == ticker)
    }

    fn day(&self, date: NaiveDate) -> Option<usize> {
        self.calendar.binary_search(&date).ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyParams {
    /// Offsets `-profile_window..=profile_window` around each event.
    pub profile_window: usize,
    /// Trailing accumulation span of the CAR (the CAR has `span + 1` terms).
    pub car_span: usize,
    pub reference_count: usize,
    pub test: MannWhitney,
    /// Densities are estimated only for groups with more events than this.
    pub kde_min_events: usize,
}

impl Default for StudyParams {
    fn default() -> Self {
        StudyParams {
            profile_window: 7,
            car_span: 7,
            reference_count: 10,
            test: MannWhitney::default(),
            kde_min_events: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Significance {
    Strong,
    Weak,
}

/// `Strong` for p < 0.01, `Weak` for 0.01 <= p < 0.05.
pub fn significance(p: f64) -> Option<Significance> {
    if p < 0.01 {
        Some(Significance::Strong)
    } else if p < 0.05 {
        Some(Significance::Weak)
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionStudy {
    pub car: EventProfile,
    pub volatility: EventProfile,
    /// Events without a complete abnormal-return window.
    pub dropped: Vec<SentimentEvent>,
}

/// CAR and volatility profiles of one group's events for one direction.
pub fn direction_study(events: &[SentimentEvent], series: &MarketSeries, params: &StudyParams) -> DirectionStudy {
    let w = params.profile_window as i64;
    let (mut kept, mut dropped) = (Vec::new(), Vec::new());
    let mut rows: BTreeMap<(String, NaiveDate), (usize, usize)> = BTreeMap::new();
    for e in events {
        let located = series.index_of(&e.ticker).zip(series.day(e.date));
        match located {
            Some((row, day)) if car(&series.abnormal[row], day, params.profile_window, params.car_span).is_some() => {
                rows.insert((e.ticker.clone(), e.date), (row, day));
                kept.push(e.clone());
            }
            _ => dropped.push(e.clone()),
        }
    }
    let offsets: Vec<i64> = (-w..=w).collect();
    let car_spec = ProfileSpec {
        offsets: offsets.clone(),
        reference_offsets: reference_offsets(w, params.car_span as i64 + 1, params.reference_count),
        two_level: false,
        test: params.test,
    };
    let vol_spec = ProfileSpec {
        reference_offsets: reference_offsets(w, 1, params.reference_count),
        ..car_spec.clone()
    };
    let locate = |e: &SentimentEvent| rows[&(e.ticker.clone(), e.date)];
    let car_profile = aggregate_profile(&kept, &car_spec, |e, tau| {
        let (row, day) = locate(e);
        car_at(&series.abnormal[row], day as i64 + tau, params.car_span)
    });
    let vol_profile = aggregate_profile(&kept, &vol_spec, |e, tau| {
        let (row, day) = locate(e);
        let t = day as i64 + tau;
        (0..series.calendar.len() as i64).contains(&t).then(|| series.volatility[row][t as usize]).flatten()
    });
    DirectionStudy {
        car: car_profile,
        volatility: vol_profile,
        dropped,
    }
}

/// Studies per group and direction; combinations without events are
/// omitted.
pub fn event_window_study(
    events: &[SentimentEvent],
    series: &MarketSeries,
    groups: &BTreeMap<usize, BTreeSet<String>>,
    params: &StudyParams,
) -> BTreeMap<usize, BTreeMap<Direction, DirectionStudy>> {
    let mut out = BTreeMap::new();
    for (&g, members) in groups {
        let mut per_direction = BTreeMap::new();
        for direction in [Direction::Positive, Direction::Negative] {
            let selected: Vec<SentimentEvent> = events
                .iter()
                .filter(|e| e.direction == direction && members.contains(&e.ticker))
                .cloned()
                .collect();
            if !selected.is_empty() {
                per_direction.insert(direction, direction_study(&selected, series, params));
            }
        }
        if !per_direction.is_empty() {
            out.insert(g, per_direction);
        }
    }
    out
}

/// Header of the per-group study CSV.
pub const STUDY_HEADER: &str = "offset,mean_car,median_car,p_car,mean_vol,median_vol,p_vol,direction";

pub fn write_study_csv<W: Write>(studies: &BTreeMap<Direction, DirectionStudy>, mut writer: W) -> Result<(), MarketError> {
    writeln!(writer, "{STUDY_HEADER}")?;
    for (direction, s) in studies {
        for i in 0..s.car.offsets.len() {
            writeln!(
                writer,
                "{},{},{},{},{},{},{},{}",
                s.car.offsets[i],
                fmt_opt(s.car.mean[i]),
                fmt_opt(s.car.median[i]),
                fmt_opt(s.car.p_values[i]),
                fmt_opt(s.volatility.mean[i]),
                fmt_opt(s.volatility.median[i]),
                fmt_opt(s.volatility.p_values[i]),
                direction.as_str()
            )?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Before,
    On,
    After,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Before, Phase::On, Phase::After];

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Before => "before",
            Phase::On => "on",
            Phase::After => "after",
        }
    }

    fn of(offset: i64) -> Phase {
        match offset {
            o if o < 0 => Phase::Before,
            0 => Phase::On,
            _ => Phase::After,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub n: usize,
    pub histogram: Histogram,
    pub density: Option<DensityEstimate>,
}

impl SampleSummary {
    fn new(sample: &[f64], with_density: bool) -> Self {
        SampleSummary {
            n: sample.len(),
            histogram: Histogram::from_sample(sample),
            density: if with_density { statkit::kde_auto(sample).ok() } else { None },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDistribution {
    pub abnormal: SampleSummary,
    pub volatility: SampleSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionStudy {
    pub n_events: usize,
    pub phases: BTreeMap<Phase, PhaseDistribution>,
}

/// Member abnormal returns and volatility pooled into before `[T-w, T)`,
/// on `T` and after `(T, T+w]` each group event `T`.
pub fn group_distribution_study(
    members: &BTreeSet<String>,
    group_events: &[SentimentEvent],
    series: &MarketSeries,
    params: &StudyParams,
) -> DistributionStudy {
    let w = params.profile_window as i64;
    let mut ar: BTreeMap<Phase, Vec<f64>> = BTreeMap::new();
    let mut vol: BTreeMap<Phase, Vec<f64>> = BTreeMap::new();
    let rows: Vec<usize> = members.iter().filter_map(|m| series.index_of(m)).collect();
    for e in group_events {
        let Some(day) = series.day(e.date) else { continue };
        for tau in -w..=w {
            let t = day as i64 + tau;
            if t < 0 || t >= series.calendar.len() as i64 {
                continue;
            }
            let phase = Phase::of(tau);
            for &r in &rows {
                if let Some(v) = series.abnormal[r][t as usize] {
                    ar.entry(phase).or_default().push(v);
                }
                if let Some(v) = series.volatility[r][t as usize] {
                    vol.entry(phase).or_default().push(v);
                }
            }
        }
    }
    let with_density = group_events.len() > params.kde_min_events;
    let phases = Phase::ALL
        .iter()
        .map(|&p| {
            let a = ar.get(&p).map_or(&[][..], |v| v.as_slice());
            let v = vol.get(&p).map_or(&[][..], |v| v.as_slice());
            (
                p,
                PhaseDistribution {
                    abnormal: SampleSummary::new(a, with_density),
                    volatility: SampleSummary::new(v, with_density),
                },
            )
        })
        .collect();
    DistributionStudy {
        n_events: group_events.len(),
        phases,
    }
}

pub fn write_density_csv<W: Write>(d: &DensityEstimate, mut writer: W) -> Result<(), MarketError> {
    writeln!(writer, "grid,density")?;
    for (x, p) in d.grid.iter().zip(&d.density) {
        writeln!(writer, "{x},{p}")?;
    }
    Ok(())
}

pub fn write_histogram_csv<W: Write>(h: &Histogram, mut writer: W) -> Result<(), MarketError> {
    writeln!(writer, "left,right,count")?;
    for (i, c) in h.counts.iter().enumerate() {
        writeln!(writer, "{},{},{c}", h.edges[i], h.edges[i + 1])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Duration;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn calendar(n: usize) -> Vec<NaiveDate> {
        let start: NaiveDate = "2007-01-01".parse().unwrap();
        (0..n as i64).map(|i| start + Duration::days(i)).collect()
    }

    #[test]
    fn log_return_examples() {
        assert_eq!(log_return(100.0, 100.0).unwrap(), 0.0);
        assert!((log_return(100.0, 110.0).unwrap() - 0.0953102).abs() < 1e-7);
        assert!((log_return(110.0, 100.0).unwrap() + 0.0953102).abs() < 1e-7);
        assert!(matches!(log_return(0.0, 1.0), Err(MarketError::NonPositivePrice(_))));
        assert!(log_return(1.0, -2.0).is_err());
        assert_eq!(volatility_proxy(5.0, 5.0).unwrap(), 0.0);
        assert!((volatility_proxy(100.0, 100.0 / 1.1).unwrap() - 0.0953102).abs() < 1e-7);
    }

    fn planted(n: usize, alpha: f64, beta: f64, seed: u64) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let index: Vec<Option<f64>> = (0..n).map(|_| Some(rng.random_range(-0.02..0.02))).collect();
        let stock = index.iter().map(|x| x.map(|x| alpha + beta * x)).collect();
        (stock, index)
    }

    #[test]
    fn capm_examples() {
        let (stock, index) = planted(181, 0.001, 1.5, 1);
        let fit = fit_capm(&stock, &index, 180, CapmParams::default()).unwrap();
        assert!((fit.alpha - 0.001).abs() < 1e-12);
        assert!((fit.beta - 1.5).abs() < 1e-12);
        assert_eq!(fit.window, (0, 179));
        let same = fit_capm(&index, &index, 180, CapmParams::default()).unwrap();
        assert!(same.alpha.abs() < 1e-15 && (same.beta - 1.0).abs() < 1e-12);
        let flat = vec![Some(0.0); 181];
        assert!(matches!(fit_capm(&stock, &flat, 180, CapmParams::default()), Err(MarketError::ZeroVariance)));
        assert!(matches!(fit_capm(&stock, &index, 100, CapmParams::default()), Err(MarketError::InsufficientPairs { .. })));
        let mut sparse = stock.clone();
        sparse.iter_mut().step_by(2).for_each(|v| *v = None);
        assert!(matches!(fit_capm(&sparse, &index, 180, CapmParams::default()), Err(MarketError::InsufficientPairs { got: 90, .. })));

        let unit = CapmFit { alpha: 0.0, beta: 1.0, window: (0, 0), n_pairs: 0 };
        assert!((abnormal_return(&unit, 0.02, 0.005) - 0.015).abs() < 1e-15);
        let zero_beta = CapmFit { alpha: 0.3, beta: 0.0, ..unit };
        assert_eq!(abnormal_return(&zero_beta, 0.5, 9.0), 0.5 - 0.3);
    }

    /// Solves the 2x2 normal equations `X'X b = X'y` by Cramer's rule.
    fn normal_equations(pairs: &[(f64, f64)]) -> (f64, f64) {
        let n = pairs.len() as f64;
        let sx: f64 = pairs.iter().map(|p| p.1).sum();
        let sy: f64 = pairs.iter().map(|p| p.0).sum();
        let sxx: f64 = pairs.iter().map(|p| p.1 * p.1).sum();
        let sxy: f64 = pairs.iter().map(|p| p.0 * p.1).sum();
        let det = n * sxx - sx * sx;
        ((sy * sxx - sx * sxy) / det, (n * sxy - sx * sy) / det)
    }

    proptest! {
        #[test]
        fn capm_matches_normal_equations(
            data in prop::collection::vec((prop::option::weighted(0.9, -0.05f64..0.05), -0.03f64..0.03), 130..=180),
        ) {
            let stock: Vec<Option<f64>> = data.iter().map(|d| d.0).collect();
            let index: Vec<Option<f64>> = data.iter().map(|d| Some(d.1)).collect();
            let at = data.len();
            let params = CapmParams { window: at, min_pairs: 100 };
            let fit = fit_capm(&stock, &index, at, params).unwrap();
            let pairs: Vec<(f64, f64)> = data.iter().filter_map(|d| Some((d.0?, d.1))).collect();
            let (a, b) = normal_equations(&pairs);
            prop_assert!((fit.alpha - a).abs() <= 1e-10 * a.abs().max(1e-3));
            prop_assert!((fit.beta - b).abs() <= 1e-10 * b.abs().max(1.0));
            let resid: f64 = pairs.iter().map(|&(y, x)| abnormal_return(&fit, y, x)).sum::<f64>() / pairs.len() as f64;
            prop_assert!(resid.abs() <= 1e-12);
        }

        #[test]
        fn car_telescopes(ar in prop::collection::vec(-0.05f64..0.05, 40), span in 1usize..10) {
            let ar: Vec<Option<f64>> = ar.into_iter().map(Some).collect();
            for t in (span as i64 + 1)..ar.len() as i64 {
                let diff = car_at(&ar, t, span).unwrap() - car_at(&ar, t - 1, span).unwrap();
                let expected = ar[t as usize].unwrap() - ar[(t - span as i64 - 1) as usize].unwrap();
                prop_assert!((diff - expected).abs() < 1e-12);
            }
        }

        #[test]
        fn volatility_is_symmetric(p in 0.01f64..1e4, q in 0.01f64..1e4) {
            prop_assert_eq!(volatility_proxy(p, q).unwrap(), volatility_proxy(q, p).unwrap());
        }
    }

    #[test]
    fn car_examples() {
        let zeros = vec![Some(0.0); 40];
        assert!(car(&zeros, 20, 7, 7).unwrap().iter().all(|v| *v == 0.0));
        let constant = vec![Some(0.01); 40];
        for v in car(&constant, 20, 7, 7).unwrap() {
            assert!((v - 0.08).abs() < 1e-15);
        }
        let mut spike = vec![Some(0.0); 40];
        spike[20] = Some(0.05);
        let c = car(&spike, 20, 7, 7).unwrap();
        // offsets -7..=7: zero before T, 0.05 from T through T+7
        for (i, v) in c.iter().enumerate() {
            let tau = i as i64 - 7;
            assert_eq!(*v, if tau >= 0 { 0.05 } else { 0.0 });
        }
        assert_eq!(car_at(&spike, 35, 7), Some(0.0), "spike leaves the trailing window");
        let mut gap = constant.clone();
        gap[10] = None;
        assert!(car(&gap, 20, 7, 7).is_none());
        assert!(car(&constant, 5, 7, 7).is_none());
    }

    #[test]
    fn panel_csv_loading() {
        let market = "date,ticker,close\n# comment\n2007-01-02,AAA,10\n2007-01-02,BBB,20\n2007-01-03,AAA,11\n2007-01-06,AAA,12\n";
        let index = "date,close\n2007-01-02,100\n2007-01-03,101\n2007-01-04,102\n";
        let p = MarketPanel::from_csv(market.as_bytes(), index.as_bytes()).unwrap();
        assert_eq!(p.calendar, vec!["2007-01-02".parse::<NaiveDate>().unwrap(), "2007-01-03".parse().unwrap()]);
        assert_eq!(p.close, vec![vec![Some(10.0), Some(11.0)], vec![Some(20.0), None]]);
        assert_eq!(p.index_close, vec![100.0, 101.0]);
        let mut buf = Vec::new();
        p.write_market_csv(&mut buf).unwrap();
        let mut ibuf = Vec::new();
        p.write_index_csv(&mut ibuf).unwrap();
        assert_eq!(MarketPanel::from_csv(buf.as_slice(), ibuf.as_slice()).unwrap(), p);

        let bad = "date,ticker,close\n2007-01-02,AAA,-1\n";
        assert!(matches!(MarketPanel::from_csv(bad.as_bytes(), index.as_bytes()), Err(MarketError::Format { file: "market", .. })));
        let dup = "date,ticker,close\n2007-01-02,AAA,1\n2007-01-02,AAA,2\n";
        assert!(matches!(MarketPanel::from_csv(dup.as_bytes(), index.as_bytes()), Err(MarketError::Duplicate { .. })));
        let disjoint = "date,ticker,close\n2009-01-02,AAA,1\n";
        assert!(matches!(MarketPanel::from_csv(disjoint.as_bytes(), index.as_bytes()), Err(MarketError::EmptyCalendar)));
    }

    #[test]
    fn series_from_panel_recovers_planted_residuals() {
        let n = 300;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut index = vec![100.0];
        let mut stock = vec![Some(50.0)];
        for t in 1..n {
            let rm: f64 = rng.random_range(-0.02..0.02);
            let eps = if t == 250 { 0.03 } else { 0.0 };
            index.push(index[t - 1] * rm.exp());
            stock.push(Some(stock[t - 1].unwrap() * (0.0005 + 1.2 * rm + eps).exp()));
        }
        let panel = MarketPanel { calendar: calendar(n), tickers: vec!["S".into()], close: vec![stock], index_close: index };
        let s = MarketSeries::from_panel(&panel, CapmParams::default());
        assert_eq!(s.abnormal[0][..180].iter().flatten().count(), 0);
        // later fits see the spike in their window
        for t in 181..=250 {
            let expected = if t == 250 { 0.03 } else { 0.0 };
            assert!((s.abnormal[0][t].unwrap() - expected).abs() < 1e-9, "day {t}");
        }
    }

    /// Abnormal-return noise with `jump` on each event day.
    fn jump_fixture(seed: u64, n_events: usize, jump: f64) -> (MarketSeries, Vec<SentimentEvent>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.002).unwrap();
        let spacing = 120;
        let n = spacing * (n_events + 1);
        let mut ar: Vec<Option<f64>> = (0..n).map(|_| Some(noise.sample(&mut rng))).collect();
        let vol: Vec<Option<f64>> = ar.iter().map(|v| v.map(f64::abs)).collect();
        let cal = calendar(n);
        let mut events = Vec::new();
        for e in 0..n_events {
            let t = spacing * (e + 1);
            ar[t] = ar[t].map(|v| v + jump);
            events.push(SentimentEvent { ticker: "S".into(), date: cal[t], direction: Direction::Positive, z_score: 3.0 });
        }
        let series = MarketSeries { calendar: cal, tickers: vec!["S".into()], volatility: vec![vol], abnormal: vec![ar] };
        (series, events)
    }

    #[test]
    fn planted_jump_study() {
        let (series, events) = jump_fixture(17, 50, 0.02);
        let s = direction_study(&events, &series, &StudyParams::default());
        assert!(s.dropped.is_empty());
        assert_eq!(s.car.n_events, 50);
        for (i, &tau) in s.car.offsets.iter().enumerate() {
            let p = s.car.p_values[i].unwrap();
            if tau >= 0 {
                assert!(p < 0.01, "offset {tau}: p = {p}");
                assert!((s.car.mean[i].unwrap() - 0.02).abs() < 0.005);
            } else {
                assert!(s.car.mean[i].unwrap().abs() < 0.005);
            }
        }
    }

    #[test]
    fn zero_abnormal_returns_are_not_significant() {
        let n = 400;
        let series = MarketSeries {
            calendar: calendar(n),
            tickers: vec!["S".into()],
            volatility: vec![vec![Some(0.0); n]],
            abnormal: vec![vec![Some(0.0); n]],
        };
        let events: Vec<SentimentEvent> = [120, 200, 300]
            .iter()
            .map(|&t| SentimentEvent { ticker: "S".into(), date: series.calendar[t], direction: Direction::Negative, z_score: -3.0 })
            .collect();
        let s = direction_study(&events, &series, &StudyParams::default());
        assert!(s.car.mean.iter().all(|m| *m == Some(0.0)));
        assert!(s.car.p_values.iter().all(|p| p.unwrap() >= 0.05));
        assert!(s.volatility.p_values.iter().all(|p| p.unwrap() >= 0.05));
    }

    #[test]
    fn incomplete_windows_are_dropped_and_groups_omitted() {
        let (mut series, events) = jump_fixture(2, 3, 0.02);
        let t = series.calendar.binary_search(&events[1].date).unwrap();
        series.abnormal[0][t - 3] = None;
        let groups: BTreeMap<usize, BTreeSet<String>> = [(0, ["S".to_string()].into()), (1, ["T".to_string()].into())].into();
        let out = event_window_study(&events, &series, &groups, &StudyParams::default());
        assert_eq!(out.keys().copied().collect::<Vec<_>>(), vec![0]);
        let s = &out[&0][&Direction::Positive];
        assert_eq!(s.dropped, vec![events[1].clone()]);
        assert_eq!(s.car.n_events, 2);
        assert!(!out[&0].contains_key(&Direction::Negative));
        let mut buf = Vec::new();
        write_study_csv(&out[&0], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(STUDY_HEADER));
        assert_eq!(text.lines().count(), 16);
    }

    #[test]
    fn permuted_dates_are_calibrated() {
        let (series, _) = jump_fixture(23, 50, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (mut hits, mut total) = (0usize, 0usize);
        let n = series.calendar.len();
        for _ in 0..300 {
            let events: Vec<SentimentEvent> = (0..50)
                .map(|_| SentimentEvent { ticker: "S".into(), date: series.calendar[rng.random_range(100..n - 8)], direction: Direction::Positive, z_score: 3.0 })
                .collect();
            let s = direction_study(&events, &series, &StudyParams::default());
            for p in s.car.p_values.iter().chain(&s.volatility.p_values).flatten() {
                total += 1;
                hits += usize::from(*p < 0.05);
            }
        }
        let rate = hits as f64 / total as f64;
        assert!((rate - 0.05).abs() <= 0.02, "false-positive rate {rate}");
    }

    #[test]
    fn distribution_study_phases_and_kde_rule() {
        let n = 2000;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let members: Vec<String> = (0..5).map(|i| format!("M{i}")).collect();
        let series = MarketSeries {
            calendar: calendar(n),
            tickers: members.clone(),
            volatility: (0..5).map(|_| (0..n).map(|_| Some(rng.random_range(0.0..0.02))).collect()).collect(),
            abnormal: (0..5).map(|_| (0..n).map(|_| Some(normal.sample(&mut rng))).collect()).collect(),
        };
        let member_set: BTreeSet<String> = members.into_iter().collect();
        let group_event = |t: usize| SentimentEvent { ticker: "group-0".into(), date: series.calendar[t], direction: Direction::Positive, z_score: 2.5 };
        let many: Vec<SentimentEvent> = (1..=40).map(|i| group_event(i * 45)).collect();
        let study = group_distribution_study(&member_set, &many, &series, &StudyParams::default());
        let before = &study.phases[&Phase::Before];
        assert_eq!(before.abnormal.n, 40 * 7 * 5);
        assert_eq!(study.phases[&Phase::On].abnormal.n, 40 * 5);
        let d = before.abnormal.density.as_ref().unwrap();
        assert!(d.mean().abs() < 0.05);
        assert!((d.integral() - 1.0).abs() < 0.01);
        assert_eq!(before.abnormal.histogram.total(), before.abnormal.n);

        let few: Vec<SentimentEvent> = many[..20].to_vec();
        let study = group_distribution_study(&member_set, &few, &series, &StudyParams::default());
        for p in Phase::ALL {
            assert!(study.phases[&p].abnormal.density.is_none());
            assert!(study.phases[&p].abnormal.histogram.total() > 0);
        }

        let flat = SampleSummary::new(&[0.25; 30], true);
        let d = flat.density.unwrap();
        assert!((d.bandwidth - 1e-3).abs() < 1e-15);
        assert!((d.integral() - 1.0).abs() < 0.01);
        let mut buf = Vec::new();
        write_density_csv(&d, &mut buf).unwrap();
        assert!(buf.starts_with(b"grid,density\n"));
        let mut buf = Vec::new();
        write_histogram_csv(&flat.histogram, &mut buf).unwrap();
        assert!(buf.starts_with(b"left,right,count\n"));
    }

    #[test]
    fn significance_tiers() {
        assert_eq!(significance(0.009), Some(Significance::Strong));
        assert_eq!(significance(0.01), Some(Significance::Weak));
        assert_eq!(significance(0.049), Some(Significance::Weak));
        assert_eq!(significance(0.05), None);
    }
}
