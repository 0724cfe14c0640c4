//! Daily and per-period sentiment series, plus the article-level
//! sentiment concentration curve.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Article, Corpus, DateRange};

#[derive(Debug, Error)]
pub enum SentimentError {
    #[error("ticker {0} has no group label")]
    Unmapped(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("panel csv: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Tickers × calendar matrix of mean daily sentiment; `None` where the
/// company had no mention that day.
#[derive(Debug, Clone, PartialEq)]
pub struct SentimentPanel {
    pub calendar: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl SentimentPanel {
    pub fn row(&self, ticker: &str) -> Option<&[Option<f64>]> {
        self.tickers.iter().position(|t| t == ticker).map(|i| self.values[i].as_slice())
    }

    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.calendar.binary_search(&date).ok()
    }

    pub fn get(&self, ticker: &str, date: NaiveDate) -> Option<f64> {
        let i = self.date_index(date)?;
        self.row(ticker)?[i]
    }

    /// Column-wise mean of present cells over `members`; the daily series of
    /// a group as a whole.
    pub fn group_series(&self, members: &[String]) -> Vec<Option<f64>> {
        let rows: Vec<&[Option<f64>]> = members.iter().filter_map(|t| self.row(t)).collect();
        (0..self.calendar.len())
            .map(|j| {
                let present: Vec<f64> = rows.iter().filter_map(|r| r[j]).collect();
                mean_of(&present)
            })
            .collect()
    }

    /// CSV with a `date` column followed by one column per ticker. Values
    /// use the shortest representation that parses back to the same float.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SentimentError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| SentimentError::Io(e.into());
        let mut header = vec!["date".to_string()];
        header.extend(self.tickers.iter().cloned());
        w.write_record(&header).map_err(io)?;
        for (j, date) in self.calendar.iter().enumerate() {
            let mut rec = vec![date.to_string()];
            rec.extend(self.values.iter().map(|row| row[j].map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, SentimentError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let fmt = |e: csv::Error| SentimentError::Format(e.to_string());
        let header = rdr.headers().map_err(fmt)?.clone();
        if header.get(0) != Some("date") {
            return Err(SentimentError::Format("first column must be date".into()));
        }
        let tickers: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut calendar = Vec::new();
        let mut values = vec![Vec::new(); tickers.len()];
        for rec in rdr.records() {
            let rec = rec.map_err(fmt)?;
            let date: NaiveDate = rec[0]
                .parse()
                .map_err(|e| SentimentError::Format(format!("bad date {}: {e}", &rec[0])))?;
            calendar.push(date);
            for (i, cell) in rec.iter().skip(1).enumerate() {
                let v = if cell.is_empty() {
                    None
                } else {
                    Some(cell.parse::<f64>().map_err(|e| SentimentError::Format(format!("bad value {cell}: {e}")))?)
                };
                values[i].push(v);
            }
        }
        Ok(SentimentPanel { calendar, tickers, values })
    }
}

fn mean_of(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Index of the calendar day an article dated `date` contributes to: the
/// same day, or the next calendar day when `date` is not in the calendar.
fn calendar_slot(calendar: &[NaiveDate], date: NaiveDate) -> Option<usize> {
    let idx = calendar.partition_point(|d| *d < date);
    (idx < calendar.len()).then_some(idx)
}

/// Mean sentiment over all mentions of each ticker on each calendar day.
///
/// Articles dated between calendar days (weekends, holidays) are pooled into
/// the next calendar day; articles after the last day are ignored.
pub fn daily_sentiment(corpus: &Corpus, tickers: &[String], calendar: &[NaiveDate]) -> SentimentPanel {
    let index: HashMap<&str, usize> = tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut sums = vec![vec![(0.0f64, 0usize); calendar.len()]; tickers.len()];
    for article in &corpus.articles {
        let Some(slot) = calendar_slot(calendar, article.date) else {
            continue;
        };
        for m in &article.mentions {
            if let Some(&row) = m.canonical.as_deref().and_then(|t| index.get(t)) {
                let cell = &mut sums[row][slot];
                cell.0 += m.sentiment;
                cell.1 += 1;
            }
        }
    }
    let values = sums
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(s, n)| (n > 0).then(|| (s / n as f64).clamp(-1.0, 1.0)))
                .collect()
        })
        .collect();
    SentimentPanel {
        calendar: calendar.to_vec(),
        tickers: tickers.to_vec(),
        values,
    }
}

/// Label × period table of mean sentiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodTable {
    pub labels: Vec<String>,
    pub periods: Vec<DateRange>,
    /// `values[label][period]`
    pub values: Vec<Vec<Option<f64>>>,
}

impl PeriodTable {
    pub fn get(&self, label: &str, period: usize) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == label)?;
        self.values[i][period]
    }

    /// `label,<period start dates...>`
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), SentimentError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| SentimentError::Io(e.into());
        let mut header = vec!["label".to_string()];
        header.extend(self.periods.iter().map(period_label));
        w.write_record(&header).map_err(io)?;
        for (label, row) in self.labels.iter().zip(&self.values) {
            let mut rec = vec![label.clone()];
            rec.extend(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
            w.write_record(&rec).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn period_label(p: &DateRange) -> String {
    if p.quarters().len() == 1 {
        p.quarter_label()
    } else {
        p.start.to_string()
    }
}

/// Mean over every present company-day cell of the group members inside
/// each period; each company-day carries equal weight.
pub fn period_aggregate(
    panel: &SentimentPanel,
    grouping: &BTreeMap<String, String>,
    periods: &[DateRange],
) -> Result<PeriodTable, SentimentError> {
    let mut labels: BTreeSet<String> = BTreeSet::new();
    for t in &panel.tickers {
        labels.insert(grouping.get(t).ok_or_else(|| SentimentError::Unmapped(t.clone()))?.clone());
    }
    let labels: Vec<String> = labels.into_iter().collect();
    let label_index: HashMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut acc = vec![vec![(0.0f64, 0usize); periods.len()]; labels.len()];
    for (row, ticker) in panel.tickers.iter().enumerate() {
        let li = label_index[grouping[ticker].as_str()];
        for (j, date) in panel.calendar.iter().enumerate() {
            let Some(v) = panel.values[row][j] else { continue };
            for (pi, p) in periods.iter().enumerate() {
                if p.contains(*date) {
                    acc[li][pi].0 += v;
                    acc[li][pi].1 += 1;
                }
            }
        }
    }
    let values = acc
        .into_iter()
        .map(|row| row.into_iter().map(|(s, n)| (n > 0).then(|| s / n as f64)).collect())
        .collect();
    Ok(PeriodTable {
        labels,
        periods: periods.to_vec(),
        values,
    })
}

/// Per-company mean sentiment inside one article, for the given tickers.
fn article_company_means(article: &Article, tickers: &BTreeSet<String>) -> BTreeMap<String, f64> {
    let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for m in &article.mentions {
        if let Some(t) = m.canonical.as_ref().filter(|t| tickers.contains(*t)) {
            let e = acc.entry(t.clone()).or_default();
            e.0 += m.sentiment;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(t, (s, n))| (t, s / n as f64)).collect()
}

pub const DEFAULT_NEUTRAL_EPS: f64 = 1e-12;

/// True when some target company's mean sentiment in the article has
/// magnitude above `eps`.
pub fn sentiment_bearing(article: &Article, tickers: &BTreeSet<String>, eps: f64) -> bool {
    article_company_means(article, tickers).values().any(|v| v.abs() > eps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationCurve {
    /// `(article_fraction, sentiment_fraction)`, starting at (0,0) and
    /// ending at (1,1).
    pub points: Vec<(f64, f64)>,
    /// Set when the corpus carries no target sentiment at all; the curve is
    /// then the diagonal.
    pub degenerate: bool,
}

impl ConcentrationCurve {
    /// Smallest article fraction whose cumulative share reaches `share`
    /// (linear interpolation between points).
    pub fn article_fraction_for(&self, share: f64) -> f64 {
        for w in self.points.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if y1 >= share {
                if y1 == y0 {
                    return x0;
                }
                return x0 + (x1 - x0) * (share - y0) / (y1 - y0);
            }
        }
        1.0
    }
}

/// Cumulative share of total absolute target sentiment, articles ordered by
/// descending sentiment mass.
pub fn concentration_curve(corpus: &Corpus, tickers: &BTreeSet<String>) -> Result<ConcentrationCurve, SentimentError> {
    if corpus.is_empty() {
        return Err(SentimentError::EmptyCorpus);
    }
    let mut mass: Vec<f64> = corpus
        .articles
        .iter()
        .map(|a| {
            a.mentions
                .iter()
                .filter(|m| m.canonical.as_ref().is_some_and(|t| tickers.contains(t)))
                .map(|m| m.sentiment.abs())
                .sum()
        })
        .collect();
    mass.sort_by(|a, b| b.total_cmp(a));
    let n = mass.len() as f64;
    let total: f64 = mass.iter().sum();
    let mut points = vec![(0.0, 0.0)];
    if total <= 0.0 {
        points.extend((1..=mass.len()).map(|i| (i as f64 / n, i as f64 / n)));
        return Ok(ConcentrationCurve { points, degenerate: true });
    }
    let mut cum = 0.0;
    for (i, m) in mass.iter().enumerate() {
        cum += m;
        points.push(((i + 1) as f64 / n, (cum / total).min(1.0)));
    }
    if let Some(last) = points.last_mut() {
        *last = (1.0, 1.0);
    }
    Ok(ConcentrationCurve { points, degenerate: false })
}
