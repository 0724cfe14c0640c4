//! Article ingestion, entity-name normalization and coverage matrices.
//!
//! Articles arrive as JSON lines, one article per line:
//!
//! ```text
//! {"article_id":"a1","date":"2007-01-03","mentions":[{"raw_name":"Apple Inc.","sentiment":0.4}],"sentences":["..."]}
//! ```
//!
//! Raw entity names are mapped to tickers through an [`AliasTable`]. Names
//! that do not resolve are kept on the article but carry no canonical ticker.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Read, Write};

use chrono::{Datelike, Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: sentiment {value} outside [-1, 1]")]
    SentimentRange { line: usize, value: f64 },
    #[error("line {line}: date {date} outside the study period")]
    OutOfPeriod { line: usize, date: NaiveDate },
    #[error("duplicate article ids: {}", .ids.join(", "))]
    DuplicateIds { ids: Vec<String> },
    #[error("at least one quarter is required")]
    EmptyQuarters,
    #[error("company list is empty")]
    EmptyCompanies,
    #[error("empty date window {0}")]
    EmptyWindow(DateRange),
    #[error("universe row {row}: {message}")]
    Universe { row: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Inclusive date range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Self {
        Self { start, end }
    }

    /// `[start, end_exclusive)`.
    pub fn half_open(start: NaiveDate, end_exclusive: NaiveDate) -> Self {
        Self {
            start,
            end: end_exclusive - Duration::days(1),
        }
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    /// Calendar quarters overlapping this range, clipped to it.
    pub fn quarters(&self) -> Vec<DateRange> {
        let mut out = Vec::new();
        if self.is_empty() {
            return out;
        }
        let mut q_start = quarter_start(self.start);
        while q_start <= self.end {
            let next = add_months(q_start, 3);
            let q_end = next - Duration::days(1);
            out.push(DateRange {
                start: q_start.max(self.start),
                end: q_end.min(self.end),
            });
            q_start = next;
        }
        out
    }

    /// Label like `2007Q3` for the quarter containing `start`.
    pub fn quarter_label(&self) -> String {
        format!("{}Q{}", self.start.year(), (self.start.month() - 1) / 3 + 1)
    }
}

impl std::fmt::Display for DateRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

fn quarter_start(d: NaiveDate) -> NaiveDate {
    let month = (d.month() - 1) / 3 * 3 + 1;
    NaiveDate::from_ymd_opt(d.year(), month, 1).expect("valid quarter start")
}

fn add_months(d: NaiveDate, months: u32) -> NaiveDate {
    let total = d.month0() + months;
    NaiveDate::from_ymd_opt(d.year() + (total / 12) as i32, total % 12 + 1, 1).expect("valid month")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mention {
    pub raw_name: String,
    /// Ticker after normalization; `None` marks a non-target mention.
    pub canonical: Option<String>,
    pub sentiment: f64,
    pub article_id: String,
}

impl Mention {
    pub fn is_target(&self) -> bool {
        self.canonical.is_some()
    }

    pub fn is(&self, ticker: &str) -> bool {
        self.canonical.as_deref() == Some(ticker)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub article_id: String,
    pub date: NaiveDate,
    pub mentions: Vec<Mention>,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub articles: Vec<Article>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn span(&self) -> Option<DateRange> {
        let first = self.articles.first()?;
        let last = self.articles.last()?;
        Some(DateRange::new(first.date, last.date))
    }

    pub fn in_window(&self, window: DateRange) -> impl Iterator<Item = &Article> {
        // articles are sorted by date
        let lo = self.articles.partition_point(|a| a.date < window.start);
        let hi = self.articles.partition_point(|a| a.date <= window.end);
        self.articles[lo..hi.max(lo)].iter()
    }

    pub fn mention_count(&self) -> usize {
        self.articles.iter().map(|a| a.mentions.len()).sum()
    }

    pub fn target_mention_count(&self) -> usize {
        self.articles
            .iter()
            .flat_map(|a| &a.mentions)
            .filter(|m| m.is_target())
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Company {
    pub ticker: String,
    pub full_name: String,
    pub sector: String,
    pub aliases: BTreeSet<String>,
}

/// Corporate suffixes dropped during normalization.
pub const DEFAULT_SUFFIXES: &[&str] = &["llc", "group", "inc", "corp", "co", "ltd", "ag", "se", "plc"];

/// Normalized name → ticker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AliasTable {
    entries: BTreeMap<String, String>,
    suffixes: Vec<String>,
}

impl Default for AliasTable {
    fn default() -> Self {
        Self::with_suffixes(DEFAULT_SUFFIXES.iter().map(|s| s.to_string()).collect())
    }
}

impl AliasTable {
    pub fn with_suffixes(suffixes: Vec<String>) -> Self {
        Self {
            entries: BTreeMap::new(),
            suffixes: suffixes.into_iter().map(|s| s.to_lowercase()).collect(),
        }
    }

    /// Every company is reachable by its ticker, full name and aliases.
    pub fn from_companies(companies: &[Company]) -> Self {
        let mut table = Self::default();
        for c in companies {
            table.insert(&c.ticker, &c.ticker);
        }
        for c in companies {
            table.insert(&c.full_name, &c.ticker);
            for alias in &c.aliases {
                table.insert(alias, &c.ticker);
            }
        }
        table
    }

    /// Adds `name → ticker` unless the key is already taken. Returns whether
    /// an entry was added.
    pub fn insert(&mut self, name: &str, ticker: &str) -> bool {
        let key = self.key(name);
        if key.is_empty() || self.entries.contains_key(&key) {
            return false;
        }
        self.entries.insert(key, ticker.to_string());
        true
    }

    pub fn lookup(&self, name: &str) -> Option<&str> {
        self.entries.get(&self.key(name)).map(String::as_str)
    }

    /// Lookup key: lower-cased, commas and trailing dots removed, corporate
    /// suffixes stripped from the end while more than one word remains.
    pub fn key(&self, raw: &str) -> String {
        let lowered = raw.to_lowercase().replace(',', " ");
        let mut words: Vec<&str> = lowered
            .split_whitespace()
            .map(|w| w.trim_end_matches('.'))
            .filter(|w| !w.is_empty())
            .collect();
        while words.len() > 1 && self.suffixes.iter().any(|s| s == words[words.len() - 1]) {
            words.pop();
        }
        words.join(" ")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Resolve a raw organisation name to a ticker.
pub fn normalize_entity_name(raw: &str, table: &AliasTable) -> Option<String> {
    table.lookup(raw).map(str::to_string)
}

fn is_suffix(word: &str) -> bool {
    let w = word.trim_end_matches('.').to_lowercase();
    DEFAULT_SUFFIXES.contains(&w.as_str())
}

/// `(long form, abbreviation)` pairs from patterns like
/// `International Business Machines Corp (IBM)`.
///
/// The abbreviation must be 2-6 upper-case ASCII letters and directly follow
/// a phrase of at least two capitalised words.
pub fn extract_bracket_aliases(sentence: &str) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut search_from = 0;
    while let Some(rel_open) = sentence[search_from..].find('(') {
        let open = search_from + rel_open;
        let Some(rel_close) = sentence[open..].find(')') else {
            break;
        };
        let close = open + rel_close;
        search_from = open + 1;
        let token = &sentence[open + 1..close];
        if !(2..=6).contains(&token.len()) || !token.chars().all(|c| c.is_ascii_uppercase()) {
            continue;
        }
        let before = &sentence[..open];
        if !before.ends_with(char::is_whitespace) {
            continue;
        }
        let mut phrase: Vec<&str> = Vec::new();
        for word in before.split_whitespace().rev() {
            let capitalised = word.chars().next().is_some_and(|c| c.is_uppercase());
            let joins = word == "&" && !phrase.is_empty();
            // lower-case legal suffixes ("plc") may only trail the name
            let trailing_suffix = phrase.iter().all(|w| is_suffix(w)) && is_suffix(word);
            if !(capitalised || joins || trailing_suffix) {
                break;
            }
            // a comma or similar ends the phrase at the previous word
            if !phrase.is_empty() && word.ends_with([',', ';', ':']) {
                break;
            }
            phrase.push(word);
        }
        while phrase.last() == Some(&"&") {
            phrase.pop();
        }
        if phrase.len() < 2 || phrase.iter().all(|w| is_suffix(w)) {
            continue;
        }
        phrase.reverse();
        out.push((phrase.join(" "), token.to_string()));
    }
    out
}

/// Universe loaded from a `ticker,full_name,sector,aliases` CSV with
/// pipe-separated aliases.
#[derive(Debug, Clone, PartialEq)]
pub struct Universe {
    pub companies: Vec<Company>,
}

impl Universe {
    pub fn new(companies: Vec<Company>) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for (row, c) in companies.iter().enumerate() {
            if c.ticker.is_empty() {
                return Err(CorpusError::Universe { row: row + 1, message: "empty ticker".into() });
            }
            if !seen.insert(c.ticker.clone()) {
                return Err(CorpusError::Universe {
                    row: row + 1,
                    message: format!("duplicate ticker {}", c.ticker),
                });
            }
        }
        Ok(Self { companies })
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, CorpusError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| CorpusError::Universe { row: 0, message: e.to_string() })?
            .clone();
        let expected = ["ticker", "full_name", "sector", "aliases"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(CorpusError::Universe {
                row: 0,
                message: format!("expected header {}", expected.join(",")),
            });
        }
        let mut companies = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| CorpusError::Universe { row: i + 1, message: e.to_string() })?;
            let aliases = rec[3]
                .split('|')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect();
            companies.push(Company {
                ticker: rec[0].trim().to_string(),
                full_name: rec[1].trim().to_string(),
                sector: rec[2].trim().to_string(),
                aliases,
            });
        }
        Self::new(companies)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), CorpusError> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| CorpusError::Io(e.into());
        w.write_record(["ticker", "full_name", "sector", "aliases"]).map_err(io)?;
        for c in &self.companies {
            let aliases = c.aliases.iter().cloned().collect::<Vec<_>>().join("|");
            w.write_record([&c.ticker, &c.full_name, &c.sector, &aliases]).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn alias_table(&self) -> AliasTable {
        AliasTable::from_companies(&self.companies)
    }

    pub fn sectors(&self) -> BTreeMap<String, String> {
        self.companies
            .iter()
            .map(|c| (c.ticker.clone(), c.sector.clone()))
            .collect()
    }

    pub fn tickers(&self) -> Vec<String> {
        self.companies.iter().map(|c| c.ticker.clone()).collect()
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct MentionRecord {
    raw_name: String,
    sentiment: f64,
}

#[derive(Debug, Deserialize, Serialize)]
struct ArticleRecord {
    article_id: String,
    date: NaiveDate,
    mentions: Vec<MentionRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    sentences: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub study_period: Option<DateRange>,
    /// Learn extra aliases from bracketed abbreviations in sentences.
    pub bracket_aliases: bool,
}

/// Parse with bracket-alias learning on and no period restriction.
pub fn parse_corpus<R: BufRead>(source: R, universe: &Universe) -> Result<Corpus, CorpusError> {
    parse_corpus_with(
        source,
        universe,
        &ParseOptions {
            study_period: None,
            bracket_aliases: true,
        },
    )
}

/// Two passes: decode and validate every record, then (optionally) extend
/// the alias table from bracket pairs found anywhere in the corpus, then
/// resolve mentions. Output is sorted by date, ties kept in input order.
pub fn parse_corpus_with<R: BufRead>(
    source: R,
    universe: &Universe,
    options: &ParseOptions,
) -> Result<Corpus, CorpusError> {
    let mut records: Vec<(usize, ArticleRecord)> = Vec::new();
    let mut first_line: HashMap<String, usize> = HashMap::new();
    let mut duplicates: BTreeSet<String> = BTreeSet::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ArticleRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        for m in &rec.mentions {
            if !(-1.0..=1.0).contains(&m.sentiment) {
                return Err(CorpusError::SentimentRange { line: line_no, value: m.sentiment });
            }
        }
        if let Some(period) = options.study_period {
            if !period.contains(rec.date) {
                return Err(CorpusError::OutOfPeriod { line: line_no, date: rec.date });
            }
        }
        if first_line.insert(rec.article_id.clone(), line_no).is_some() {
            duplicates.insert(rec.article_id.clone());
        }
        records.push((line_no, rec));
    }
    if !duplicates.is_empty() {
        return Err(CorpusError::DuplicateIds { ids: duplicates.into_iter().collect() });
    }

    let mut table = universe.alias_table();
    if options.bracket_aliases {
        learn_bracket_aliases(&mut table, records.iter().flat_map(|(_, r)| &r.sentences));
    }

    let mut articles: Vec<Article> = records
        .into_iter()
        .map(|(_, rec)| Article {
            mentions: rec
                .mentions
                .into_iter()
                .map(|m| Mention {
                    canonical: normalize_entity_name(&m.raw_name, &table),
                    raw_name: m.raw_name,
                    sentiment: m.sentiment,
                    article_id: rec.article_id.clone(),
                })
                .collect(),
            article_id: rec.article_id,
            date: rec.date,
            sentences: rec.sentences,
        })
        .collect();
    articles.sort_by_key(|a| a.date);
    Ok(Corpus { articles })
}

/// For each pair where exactly one side already resolves, map the other side
/// to the same ticker. Existing entries are never overwritten.
pub fn learn_bracket_aliases<'a>(table: &mut AliasTable, sentences: impl Iterator<Item = &'a String>) -> usize {
    let mut added = 0;
    for sentence in sentences {
        for (long, abbr) in extract_bracket_aliases(sentence) {
            let long_hit = table.lookup(&long).map(str::to_string);
            let abbr_hit = table.lookup(&abbr).map(str::to_string);
            match (long_hit, abbr_hit) {
                (None, Some(t)) => added += table.insert(&long, &t) as usize,
                (Some(t), None) => added += table.insert(&abbr, &t) as usize,
                _ => {}
            }
        }
    }
    added
}

/// Write the corpus back out in the input line format.
pub fn write_corpus<W: Write>(corpus: &Corpus, mut writer: W) -> Result<(), CorpusError> {
    for a in &corpus.articles {
        let rec = ArticleRecord {
            article_id: a.article_id.clone(),
            date: a.date,
            mentions: a
                .mentions
                .iter()
                .map(|m| MentionRecord {
                    raw_name: m.raw_name.clone(),
                    sentiment: m.sentiment,
                })
                .collect(),
            sentences: a.sentences.clone(),
        };
        let line = serde_json::to_string(&rec).map_err(|e| CorpusError::Io(e.into()))?;
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Tickers mentioned strictly more than `min_mentions` times in every quarter.
pub fn select_frequent_companies(
    corpus: &Corpus,
    quarters: &[DateRange],
    min_mentions: usize,
) -> Result<BTreeSet<String>, CorpusError> {
    if quarters.is_empty() {
        return Err(CorpusError::EmptyQuarters);
    }
    let mut selected: Option<BTreeSet<String>> = None;
    for q in quarters {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for m in corpus.in_window(*q).flat_map(|a| &a.mentions) {
            if let Some(t) = &m.canonical {
                *counts.entry(t).or_default() += 1;
            }
        }
        let frequent: BTreeSet<String> = counts
            .into_iter()
            .filter(|(_, c)| *c > min_mentions)
            .map(|(t, _)| t.to_string())
            .collect();
        selected = Some(match selected {
            None => frequent,
            Some(prev) => prev.intersection(&frequent).cloned().collect(),
        });
    }
    Ok(selected.unwrap_or_default())
}

/// What a coverage-matrix cell counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageMode {
    /// Number of mentions of the company in the article.
    #[default]
    MentionCount,
    /// 1 if the company is mentioned at all.
    Indicator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoverageWarning {
    /// The window does not overlap the corpus.
    OutsideCorpusSpan,
}

/// Companies × articles count matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageMatrix {
    pub companies: Vec<String>,
    pub articles: Vec<String>,
    pub counts: Vec<u32>,
    pub window: DateRange,
    pub warning: Option<CoverageWarning>,
}

impl CoverageMatrix {
    pub fn n_companies(&self) -> usize {
        self.companies.len()
    }

    pub fn n_articles(&self) -> usize {
        self.articles.len()
    }

    pub fn get(&self, company: usize, article: usize) -> u32 {
        self.counts[company * self.articles.len() + article]
    }

    pub fn row(&self, company: usize) -> &[u32] {
        let w = self.articles.len();
        &self.counts[company * w..(company + 1) * w]
    }

    /// Build directly from rows; used for synthetic data.
    pub fn from_rows(companies: Vec<String>, rows: Vec<Vec<u32>>, window: DateRange) -> Self {
        let width = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == width), "ragged coverage rows");
        CoverageMatrix {
            companies,
            articles: (0..width).map(|j| format!("col{j}")).collect(),
            counts: rows.into_iter().flatten().collect(),
            window,
            warning: None,
        }
    }
}

/// Count mentions of each company in each article of the window. Articles
/// without any listed company are dropped.
pub fn build_coverage_matrix(
    corpus: &Corpus,
    companies: &[String],
    window: DateRange,
    mode: CoverageMode,
) -> Result<CoverageMatrix, CorpusError> {
    if companies.is_empty() {
        return Err(CorpusError::EmptyCompanies);
    }
    if window.is_empty() {
        return Err(CorpusError::EmptyWindow(window));
    }
    let index: HashMap<&str, usize> = companies.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
    let mut columns: Vec<(String, Vec<(usize, u32)>)> = Vec::new();
    for article in corpus.in_window(window) {
        let mut cells: BTreeMap<usize, u32> = BTreeMap::new();
        for m in &article.mentions {
            if let Some(&row) = m.canonical.as_deref().and_then(|t| index.get(t)) {
                let cell = cells.entry(row).or_default();
                *cell = match mode {
                    CoverageMode::MentionCount => *cell + 1,
                    CoverageMode::Indicator => 1,
                };
            }
        }
        if !cells.is_empty() {
            columns.push((article.article_id.clone(), cells.into_iter().collect()));
        }
    }
    let width = columns.len();
    let mut counts = vec![0u32; companies.len() * width];
    for (j, (_, cells)) in columns.iter().enumerate() {
        for &(row, c) in cells {
            counts[row * width + j] = c;
        }
    }
    let warning = match corpus.span() {
        Some(span) if window.end >= span.start && window.start <= span.end => None,
        _ => Some(CoverageWarning::OutsideCorpusSpan),
    };
    Ok(CoverageMatrix {
        companies: companies.to_vec(),
        articles: columns.into_iter().map(|(id, _)| id).collect(),
        counts,
        window,
        warning,
    })
}
