//! Seeded generators for test and demonstration data with known structure.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{write_corpus, Article, Company, Corpus, CorpusError, CoverageMatrix, DateRange, Mention, Universe};
use crate::events::Direction;
use crate::marketstudy::{MarketError, MarketPanel};

/// Companies × articles matrix where each article belongs to one block and
/// mentions every company of that block with probability `p_in`, every
/// other company with probability `p_out`. Returns the matrix and the block
/// label of each company.
pub fn planted_coverage(seed: u64, blocks: usize, per_block: usize, articles: usize, p_in: f64, p_out: f64) -> (CoverageMatrix, BTreeMap<String, usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = blocks * per_block;
    let companies: Vec<String> = (0..n).map(|i| format!("T{i:03}")).collect();
    let mut rows = vec![vec![0u32; articles]; n];
    for a in 0..articles {
        let b = rng.random_range(0..blocks);
        for (c, row) in rows.iter_mut().enumerate() {
            let p = if c / per_block == b { p_in } else { p_out };
            if rng.random_bool(p) {
                row[a] = 1;
            }
        }
    }
    let labels = companies.iter().enumerate().map(|(i, c)| (c.clone(), i / per_block)).collect();
    let window = DateRange::new(NaiveDate::from_ymd_opt(2007, 1, 1).unwrap(), NaiveDate::from_ymd_opt(2007, 12, 31).unwrap());
    (CoverageMatrix::from_rows(companies, rows, window), labels)
}

#[derive(Debug, Clone)]
pub struct FixtureConfig {
    pub seed: u64,
    pub start: NaiveDate,
    pub calendar_days: usize,
    pub sectors: Vec<String>,
    pub per_sector: usize,
    pub articles_per_weekday: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Sentiment spikes planted per company.
    pub spikes_per_company: usize,
    /// Sentiment shift of block neighbours for 8 days from a spike.
    pub spillover: f64,
    /// Abnormal return added to the spiking company on the spike day.
    pub jump: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        FixtureConfig {
            seed: 7,
            start: NaiveDate::from_ymd_opt(2007, 1, 1).unwrap(),
            calendar_days: 731,
            sectors: vec!["Energy".into(), "Financials".into(), "Technology".into()],
            per_sector: 8,
            articles_per_weekday: 4,
            p_in: 0.3,
            p_out: 0.02,
            spikes_per_company: 3,
            spillover: 0.35,
            jump: 0.03,
        }
    }
}

/// Generated inputs plus the structure planted in them.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub universe: Universe,
    pub corpus: Corpus,
    pub market: MarketPanel,
    /// Planted co-mention block of each ticker.
    pub blocks: BTreeMap<String, usize>,
    pub spikes: Vec<(String, NaiveDate, Direction)>,
    /// Mentioned too rarely to pass frequency selection.
    pub rare_ticker: String,
}

const PREFIXES: [&str; 26] = [
    "Alder", "Birch", "Cedar", "Dogwood", "Elm", "Fir", "Ginkgo", "Hazel", "Ivy", "Juniper", "Kapok", "Larch", "Maple", "Nutmeg", "Oak", "Pine",
    "Quince", "Rowan", "Spruce", "Teak", "Upas", "Vine", "Willow", "Xylo", "Yew", "Zelkova",
];
const SUFFIXES: [&str; 8] = ["Inc", "Corp", "Group", "plc", "AG", "Ltd", "Co", "SE"];
const OTHERS: [&str; 4] = ["Federal Reserve", "Reuters", "European Commission", "OPEC"];

struct Spec {
    ticker: String,
    base: String,
    full: String,
    abbreviation: String,
    block: usize,
    level: f64,
}

fn weekday(d: NaiveDate) -> bool {
    !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
}

impl Fixture {
    pub fn generate(cfg: &FixtureConfig) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let n_companies = cfg.sectors.len() * cfg.per_sector;
        assert!(n_companies < PREFIXES.len(), "at most {} companies", PREFIXES.len() - 1);

        let specs: Vec<Spec> = (0..n_companies)
            .map(|i| {
                let block = i / cfg.per_sector;
                let sector = &cfg.sectors[block];
                let base = format!("{} {}", PREFIXES[i], sector);
                Spec {
                    ticker: format!("{}{}", PREFIXES[i][..3].to_uppercase(), &sector[..1]),
                    full: format!("{base} {}", SUFFIXES[i % SUFFIXES.len()]),
                    abbreviation: format!("{}{}X", &PREFIXES[i][..1], &sector[..1]),
                    base,
                    block,
                    level: rng.random_range(-0.2..0.3),
                }
            })
            .collect();
        let rare_ticker = format!("{}M", PREFIXES[n_companies][..3].to_uppercase());
        let mut companies: Vec<Company> = specs
            .iter()
            .enumerate()
            .map(|(i, s)| Company {
                ticker: s.ticker.clone(),
                full_name: s.full.clone(),
                // the last company of each block is filed under the next sector
                sector: if i % cfg.per_sector == cfg.per_sector - 1 {
                    cfg.sectors[(s.block + 1) % cfg.sectors.len()].clone()
                } else {
                    cfg.sectors[s.block].clone()
                },
                aliases: [s.ticker.clone()].into(),
            })
            .collect();
        companies.push(Company {
            ticker: rare_ticker.clone(),
            full_name: format!("{} Minor Holdings", PREFIXES[n_companies]),
            sector: cfg.sectors[0].clone(),
            aliases: BTreeSet::new(),
        });

        let days: Vec<NaiveDate> = (0..cfg.calendar_days as i64).map(|i| cfg.start + Duration::days(i)).collect();
        let trading: Vec<NaiveDate> = days.iter().copied().filter(|d| weekday(*d)).collect();

        // planted spikes: spaced, late enough for a full baseline
        let mut spikes = Vec::new();
        let lo = 260.min(trading.len() / 2);
        let hi = trading.len().saturating_sub(20);
        for s in &specs {
            let mut chosen: Vec<usize> = Vec::new();
            let mut tries = 0;
            while chosen.len() < cfg.spikes_per_company && tries < 1000 {
                tries += 1;
                let t = rng.random_range(lo..hi);
                if chosen.iter().all(|&c| c.abs_diff(t) >= 30) {
                    chosen.push(t);
                }
            }
            chosen.sort_unstable();
            for t in chosen {
                let dir = if rng.random_bool(0.5) { Direction::Positive } else { Direction::Negative };
                spikes.push((s.ticker.clone(), trading[t], dir));
            }
        }
        spikes.sort_by(|a, b| (a.1, &a.0).cmp(&(b.1, &b.0)));

        // sentiment shifts per (company index, trading day)
        let trading_index: BTreeMap<NaiveDate, usize> = trading.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        let index_of: BTreeMap<&str, usize> = specs.iter().enumerate().map(|(i, s)| (s.ticker.as_str(), i)).collect();
        let mut shift: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (ticker, date, dir) in &spikes {
            let c = index_of[ticker.as_str()];
            let t = trading_index[date];
            for (j, other) in specs.iter().enumerate() {
                if j != c && other.block == specs[c].block {
                    for d in t..(t + 8).min(trading.len()) {
                        *shift.entry((j, d)).or_default() += dir.sign() * cfg.spillover;
                    }
                }
            }
        }

        let noise = Normal::new(0.0, 0.2).unwrap();
        let mut articles = Vec::new();
        let mut next_id = 0usize;
        let mut new_id = || {
            next_id += 1;
            format!("a{next_id:06}")
        };
        let mut trading_cursor = 0usize;
        let mut introduced: BTreeSet<usize> = BTreeSet::new();
        let spike_days: BTreeMap<NaiveDate, Vec<(usize, Direction)>> = spikes.iter().fold(BTreeMap::new(), |mut m, (t, d, dir)| {
            m.entry(*d).or_insert_with(Vec::new).push((index_of[t.as_str()], *dir));
            m
        });
        for &day in &days {
            while trading_cursor < trading.len() && trading[trading_cursor] < day {
                trading_cursor += 1;
            }
            // weekend news is pooled into the next trading day
            let effective = trading_cursor.min(trading.len().saturating_sub(1));
            let count = if weekday(day) { cfg.articles_per_weekday } else { 1 };
            for _ in 0..count {
                let block = rng.random_range(0..cfg.sectors.len());
                let mut mentions = Vec::new();
                let mut sentences = Vec::new();
                let id = new_id();
                for (c, s) in specs.iter().enumerate() {
                    let p = if s.block == block { cfg.p_in } else { cfg.p_out };
                    if !rng.random_bool(p) {
                        continue;
                    }
                    let value = s.level + noise.sample(&mut rng) + shift.get(&(c, effective)).copied().unwrap_or(0.0);
                    let raw = match rng.random_range(0..10) {
                        0..=3 => s.full.clone(),
                        4 | 5 => s.base.clone(),
                        6 => format!("{}.", s.full.replace(' ', ", ").replacen(", ", " ", s.base.split(' ').count() - 1)),
                        7 => s.full.to_uppercase(),
                        8 => {
                            sentences.push(format!("Shares of {} ({}) moved on the news.", s.full, s.abbreviation));
                            introduced.insert(c);
                            s.full.clone()
                        }
                        // abbreviations resolve only once a bracket sentence defines them
                        _ if introduced.contains(&c) => s.abbreviation.clone(),
                        _ => s.full.clone(),
                    };
                    mentions.push(Mention { raw_name: raw, canonical: Some(s.ticker.clone()), sentiment: round4(value.clamp(-1.0, 1.0)), article_id: id.clone() });
                }
                if rng.random_bool(0.3) {
                    let name = OTHERS[rng.random_range(0..OTHERS.len())];
                    mentions.push(Mention { raw_name: name.into(), canonical: None, sentiment: round4(rng.random_range(-0.5..0.5)), article_id: id.clone() });
                }
                if mentions.is_empty() {
                    continue;
                }
                mentions.shuffle(&mut rng);
                articles.push(Article { article_id: id, date: day, mentions, sentences });
            }
            if weekday(day) {
                for &(c, dir) in spike_days.get(&day).map(Vec::as_slice).unwrap_or(&[]) {
                    let s = &specs[c];
                    let id = new_id();
                    let mentions = (0..3)
                        .map(|_| Mention { raw_name: s.full.clone(), canonical: Some(s.ticker.clone()), sentiment: round4(dir.sign() * 0.95), article_id: id.clone() })
                        .collect();
                    articles.push(Article { article_id: id, date: day, mentions, sentences: vec![] });
                }
            }
            // the rare company: two mentions a quarter at most
            if day.day() == 15 && day.month() % 2 == 1 {
                let id = new_id();
                let name = companies.last().unwrap().full_name.clone();
                articles.push(Article {
                    article_id: id.clone(),
                    date: day,
                    mentions: vec![Mention { raw_name: name, canonical: Some(rare_ticker.clone()), sentiment: 0.1, article_id: id }],
                    sentences: vec![],
                });
            }
        }

        // prices: index random walk, stocks follow CAPM plus planted jumps
        let index_noise = Normal::new(0.0002, 0.01).unwrap();
        let stock_noise = Normal::new(0.0, 0.01).unwrap();
        let mut index_close = vec![1000.0f64];
        for _ in 1..trading.len() {
            let r: f64 = index_noise.sample(&mut rng);
            let last = *index_close.last().unwrap();
            index_close.push(round4(last * r.exp()));
        }
        let mut jumps: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (ticker, date, dir) in &spikes {
            jumps.insert((index_of[ticker.as_str()], trading_index[date]), dir.sign() * cfg.jump);
        }
        let mut tickers: Vec<(String, Vec<Option<f64>>)> = Vec::new();
        for (c, s) in specs.iter().enumerate() {
            let alpha = rng.random_range(-0.0005..0.0005);
            let beta = rng.random_range(0.6..1.4);
            let mut price: f64 = rng.random_range(20.0..150.0);
            let mut closes = vec![Some(round4(price))];
            for t in 1..trading.len() {
                let rm = (index_close[t] / index_close[t - 1]).ln();
                let r = alpha + beta * rm + stock_noise.sample(&mut rng) + jumps.get(&(c, t)).copied().unwrap_or(0.0);
                price *= r.exp();
                closes.push(Some(round4(price)));
            }
            tickers.push((s.ticker.clone(), closes));
        }
        let mut rare_price: f64 = 40.0;
        let mut rare = vec![Some(rare_price)];
        for _ in 1..trading.len() {
            rare_price *= stock_noise.sample(&mut rng).exp();
            rare.push(Some(round4(rare_price)));
        }
        tickers.push((rare_ticker.clone(), rare));
        tickers.sort_by(|a, b| a.0.cmp(&b.0));
        let market = MarketPanel {
            calendar: trading,
            tickers: tickers.iter().map(|t| t.0.clone()).collect(),
            close: tickers.into_iter().map(|t| t.1).collect(),
            index_close,
        };

        articles.sort_by_key(|a| a.date);
        Fixture {
            universe: Universe::new(companies).expect("generated tickers are unique"),
            corpus: Corpus { articles },
            market,
            blocks: specs.iter().map(|s| (s.ticker.clone(), s.block)).collect(),
            spikes,
            rare_ticker,
        }
    }

    /// Writes `corpus.jsonl`, `universe.csv`, `market.csv` and `index.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<(), FixtureError> {
        std::fs::create_dir_all(dir)?;
        let open = |name: &str| -> Result<BufWriter<File>, FixtureError> { Ok(BufWriter::new(File::create(dir.join(name))?)) };
        let mut w = open("corpus.jsonl")?;
        write_corpus(&self.corpus, &mut w)?;
        w.flush()?;
        let mut w = open("universe.csv")?;
        self.universe.write_csv(&mut w)?;
        w.flush()?;
        let mut w = open("market.csv")?;
        self.market.write_market_csv(&mut w)?;
        w.flush()?;
        let mut w = open("index.csv")?;
        self.market.write_index_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_corpus;

    #[test]
    fn planted_coverage_shape() {
        let (m, labels) = planted_coverage(1, 3, 10, 300, 0.3, 0.02);
        assert_eq!(m.n_companies(), 30);
        assert_eq!(m.n_articles(), 300);
        assert_eq!(labels.values().filter(|&&b| b == 2).count(), 10);
        let density = (0..30).map(|i| m.row(i).iter().filter(|&&c| c > 0).count()).sum::<usize>() as f64 / 9000.0;
        // expected (0.3 + 2 * 0.02) / 3
        assert!((density - 0.1133).abs() < 0.01, "{density}");
        let (again, _) = planted_coverage(1, 3, 10, 300, 0.3, 0.02);
        assert_eq!(again, m);
    }

    #[test]
    fn fixture_round_trips_through_the_parser() {
        let cfg = FixtureConfig { calendar_days: 200, ..FixtureConfig::default() };
        let fx = Fixture::generate(&cfg);
        let mut buf = Vec::new();
        write_corpus(&fx.corpus, &mut buf).unwrap();
        let parsed = parse_corpus(buf.as_slice(), &fx.universe).unwrap();
        assert_eq!(parsed.len(), fx.corpus.len());
        for (a, b) in parsed.articles.iter().zip(&fx.corpus.articles) {
            let got: Vec<&Option<String>> = a.mentions.iter().map(|m| &m.canonical).collect();
            let want: Vec<&Option<String>> = b.mentions.iter().map(|m| &m.canonical).collect();
            assert_eq!(got, want, "article {} {:?}", a.article_id, a.mentions.iter().map(|m| &m.raw_name).collect::<Vec<_>>());
        }
        let raw: BTreeSet<&str> = fx.corpus.articles.iter().flat_map(|a| &a.mentions).map(|m| m.raw_name.as_str()).collect();
        assert!(raw.contains("AEX"), "bracket abbreviations are exercised");
        assert!(raw.iter().any(|r| r.ends_with('.')));
    }

    #[test]
    fn fixture_is_deterministic_per_seed() {
        let cfg = FixtureConfig { calendar_days: 120, ..FixtureConfig::default() };
        let a = Fixture::generate(&cfg);
        let b = Fixture::generate(&cfg);
        assert_eq!(a.corpus, b.corpus);
        assert_eq!(a.market, b.market);
        let c = Fixture::generate(&FixtureConfig { seed: 8, ..cfg });
        assert_ne!(a.corpus, c.corpus);
    }
}
