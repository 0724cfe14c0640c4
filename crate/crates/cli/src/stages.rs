//! Pipeline stages. Each stage reads the stamped artifacts of earlier stages
//! from the output tree and writes its own subdirectory:
//!
//! ```text
//! ingest/   articles.jsonl companies.csv sentiment.csv market.csv index.csv summary.json
//! network/<static|quarterly|at-DATE>/
//!           windows.csv stats.csv centrality.csv split.csv
//!           outliers_in_sector.csv outliers_out_sector.csv edges/<label>.tsv
//! groups/   partition.csv composition.csv comparison.json
//! events/   events.csv group_events.csv correlation.csv explained_variance.json
//!           index.json profiles/group-<g>-<direction>.csv
//! study/    group-<g>.csv summary.json
//!           distribution/group-<g>/<phase>-<ar|volatility>-<histogram|density>.csv
//! report/   sector_quarter.csv company_quarter.csv group_quarter.csv
//!           concentration.csv summary.json
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Months, NaiveDate};
use serde_json::{json, Value};

use sentinet::community::{compare_with_sectors, louvain, Partition};
use sentinet::corpus::{build_coverage_matrix, parse_corpus_with, Article, Corpus, DateRange, ParseOptions, Universe};
use sentinet::events::{
    event_correlation_matrix, event_series, explained_variance, fmt_opt, group_event_profile, write_events_csv,
    read_events_csv, Direction, DynamicNetworks, EventDetector, ProfileSpec, SentimentEvent,
};
use sentinet::marketstudy::{
    event_window_study, group_distribution_study, write_density_csv, write_histogram_csv, write_study_csv, CapmParams,
    MarketError, MarketPanel, MarketSeries, Phase, SampleSummary, StudyParams,
};
use sentinet::network::{
    betweenness_centrality, build_network, dynamic_network, eigenvector_centrality, network_stats, outlier_edges,
    weight_split, Network, NetworkError,
};
use sentinet::sentiment::{concentration_curve, daily_sentiment, period_aggregate, sentiment_bearing, SentimentPanel, DEFAULT_NEUTRAL_EPS};
use sentinet::statkit::MannWhitney;

use crate::artifact::Store;
use crate::config::RunConfig;
use crate::error::CliError;

/// Which co-occurrence networks `network` builds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowSpec {
    /// The first `static_months` months of the study period.
    Static,
    Quarterly,
    /// The dynamic network valid on a trading day.
    At(NaiveDate),
}

impl WindowSpec {
    pub fn dir(&self) -> String {
        match self {
            WindowSpec::Static => "static".into(),
            WindowSpec::Quarterly => "quarterly".into(),
            WindowSpec::At(d) => format!("at-{d}"),
        }
    }
}

impl FromStr for WindowSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "static" => Ok(WindowSpec::Static),
            "quarterly" => Ok(WindowSpec::Quarterly),
            other => other
                .strip_prefix("at-")
                .unwrap_or(other)
                .parse()
                .map(WindowSpec::At)
                .map_err(|_| format!("unknown window spec {other:?}; expected static, quarterly or at-YYYY-MM-DD")),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::from_io(path, e))
}

fn date_range_json(r: Option<DateRange>) -> Value {
    r.map_or(Value::Null, |r| json!({ "start": r.start.to_string(), "end": r.end.to_string() }))
}

// ---------------------------------------------------------------- ingest

pub fn ingest(cfg: &RunConfig, store: &Store) -> Result<(), CliError> {
    let p = &cfg.params;
    let universe = Universe::read_csv(open(&cfg.universe)?).map_err(|e| CliError::corpus(&cfg.universe, e))?;
    let market = MarketPanel::from_csv(open(&cfg.market)?, open(&cfg.index)?).map_err(|e| CliError::market(&cfg.market, e))?;
    let options = ParseOptions {
        study_period: None,
        bracket_aliases: p.bracket_aliases,
    };
    let mut corpus = parse_corpus_with(open(&cfg.corpus)?, &universe, &options).map_err(|e| CliError::corpus(&cfg.corpus, e))?;
    let n_parsed = corpus.len();
    if p.study_start.is_some() || p.study_end.is_some() {
        let lo = p.study_start.unwrap_or(NaiveDate::MIN);
        let hi = p.study_end.unwrap_or(NaiveDate::MAX);
        corpus.articles.retain(|a| (lo..=hi).contains(&a.date));
    }
    let period = corpus
        .span()
        .map(|s| DateRange::new(p.study_start.unwrap_or(s.start), p.study_end.unwrap_or(s.end)));

    let quarters = period.map(|r| r.quarters()).unwrap_or_default();
    let frequent: BTreeSet<String> = if quarters.is_empty() {
        BTreeSet::new()
    } else {
        sentinet::corpus::select_frequent_companies(&corpus, &quarters, p.min_mentions).map_err(|e| CliError::corpus(&cfg.corpus, e))?
    };
    let priced: BTreeSet<&String> = market.tickers.iter().collect();
    let missing_prices: Vec<&String> = frequent.iter().filter(|t| !priced.contains(t)).collect();
    let mut companies: Vec<_> = universe
        .companies
        .iter()
        .filter(|c| frequent.contains(&c.ticker) && priced.contains(&c.ticker))
        .cloned()
        .collect();
    companies.sort_by(|a, b| a.ticker.cmp(&b.ticker));
    let companies = Universe::new(companies).map_err(|e| CliError::corpus(&cfg.universe, e))?;
    let tickers = companies.tickers();
    let dropped_infrequent: Vec<&String> = universe.companies.iter().map(|c| &c.ticker).filter(|t| !frequent.contains(*t)).collect();

    let rows: Vec<Vec<Option<f64>>> = tickers.iter().map(|t| market.row(t).expect("priced").to_vec()).collect();
    let keep: Vec<usize> = (0..market.calendar.len())
        .filter(|&d| tickers.is_empty() || rows.iter().any(|r| r[d].is_some()))
        .collect();
    let restricted = MarketPanel {
        calendar: keep.iter().map(|&d| market.calendar[d]).collect(),
        tickers: tickers.clone(),
        close: rows.iter().map(|r| keep.iter().map(|&d| r[d]).collect()).collect(),
        index_close: keep.iter().map(|&d| market.index_close[d]).collect(),
    };
    let panel = daily_sentiment(&corpus, &tickers, &restricted.calendar);

    store.write_jsonl("ingest/articles.jsonl", &corpus.articles)?;
    store.write_text("ingest/companies.csv", |w| companies.write_csv(w))?;
    store.write_text("ingest/sentiment.csv", |w| panel.write_csv(w))?;
    store.write_text("ingest/market.csv", |w| restricted.write_market_csv(w))?;
    store.write_text("ingest/index.csv", |w| restricted.write_index_csv(w))?;
    store.write_json(
        "ingest/summary.json",
        &json!({
            "articles_parsed": n_parsed,
            "articles": corpus.len(),
            "mentions": corpus.mention_count(),
            "target_mentions": corpus.target_mention_count(),
            "universe_companies": universe.companies.len(),
            "companies": tickers,
            "dropped_infrequent": dropped_infrequent,
            "missing_prices": missing_prices,
            "period": date_range_json(period),
            "quarters": quarters.len(),
            "trading_days": restricted.calendar.len(),
        }),
    )?;
    Ok(())
}

fn load_companies(store: &Store) -> Result<Universe, CliError> {
    let (path, text) = store.read_text("ingest/companies.csv")?;
    Universe::read_csv(text.as_bytes()).map_err(|e| CliError::corpus(&path, e))
}

fn load_corpus(store: &Store) -> Result<Corpus, CliError> {
    let (path, lines) = store.read_jsonl("ingest/articles.jsonl")?;
    let articles = lines
        .iter()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str::<Article>(l).map_err(|e| CliError::Validation(format!("{}:{}: {e}", path.display(), i + 2)))
        })
        .collect::<Result<_, _>>()?;
    Ok(Corpus { articles })
}

fn load_panel(store: &Store) -> Result<SentimentPanel, CliError> {
    let (path, text) = store.read_text("ingest/sentiment.csv")?;
    SentimentPanel::read_csv(text.as_bytes()).map_err(|e| CliError::sentiment(&path, e))
}

fn load_market(store: &Store) -> Result<MarketPanel, CliError> {
    let (path, market) = store.read_text("ingest/market.csv")?;
    let (_, index) = store.read_text("ingest/index.csv")?;
    match MarketPanel::from_csv(market.as_bytes(), index.as_bytes()) {
        // Stamp and header only: ingest selected no companies.
        Err(MarketError::EmptyCalendar) if market.lines().count() == 2 => Ok(MarketPanel {
            calendar: Vec::new(),
            tickers: Vec::new(),
            close: Vec::new(),
            index_close: Vec::new(),
        }),
        other => other.map_err(|e| CliError::market(&path, e)),
    }
}

fn load_period(store: &Store) -> Result<Option<DateRange>, CliError> {
    let (path, v) = store.read_json("ingest/summary.json")?;
    let p = &v["period"];
    if p.is_null() {
        return Ok(None);
    }
    let date = |k: &str| -> Result<NaiveDate, CliError> {
        p[k].as_str()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CliError::Validation(format!("{}: bad period.{k}", path.display())))
    };
    Ok(Some(DateRange::new(date("start")?, date("end")?)))
}

fn load_partition(store: &Store) -> Result<Partition, CliError> {
    let (path, text) = store.read_text("groups/partition.csv")?;
    Partition::read_csv(text.as_bytes()).map_err(|e| CliError::community(&path.display().to_string(), e))
}

fn load_events(store: &Store, rel: &str) -> Result<Vec<SentimentEvent>, CliError> {
    let (path, text) = store.read_text(rel)?;
    read_events_csv(text.as_bytes()).map_err(|e| CliError::events(&path.display().to_string(), e))
}

// --------------------------------------------------------------- network

/// Static window: `static_months` months from the period start, clipped to
/// the period.
pub fn static_window(period: DateRange, months: u32) -> DateRange {
    let end = period
        .start
        .checked_add_months(Months::new(months))
        .map_or(period.end, |d| d.pred_opt().expect("after period start"));
    DateRange::new(period.start, end.min(period.end))
}

pub fn network(cfg: &RunConfig, store: &Store, spec: WindowSpec) -> Result<(), CliError> {
    let p = &cfg.params;
    let companies = load_companies(store)?;
    let corpus = load_corpus(store)?;
    let period = load_period(store)?;
    let tickers = companies.tickers();
    let sectors = companies.sectors();

    let mut windows: Vec<(String, Network)> = Vec::new();
    if tickers.len() >= 2 {
        let build = |w: DateRange| -> Result<Network, CliError> {
            let m = build_coverage_matrix(&corpus, &tickers, w, p.coverage).map_err(|e| CliError::Computation(e.to_string()))?;
            build_network(&m).map_err(|e| CliError::network(&format!("window {w}"), e))
        };
        match spec {
            WindowSpec::Static => {
                if let Some(period) = period {
                    windows.push(("static".into(), build(static_window(period, p.static_months))?));
                }
            }
            WindowSpec::Quarterly => {
                for q in period.map(|r| r.quarters()).unwrap_or_default() {
                    windows.push((q.quarter_label(), build(q)?));
                }
            }
            WindowSpec::At(date) => {
                let calendar = load_panel(store)?.calendar;
                let g = dynamic_network(&corpus, &tickers, date, p.network_window, &calendar, p.coverage).map_err(|e| match e {
                    e @ NetworkError::NotInCalendar(_) => CliError::Validation(e.to_string()),
                    e => CliError::network(&format!("network at {date}"), e),
                })?;
                windows.push((date.to_string(), g));
            }
        }
    }

    let dir = format!("network/{}", spec.dir());
    let mut index = Vec::new();
    let mut stats = Vec::new();
    let mut centrality = Vec::new();
    let mut split = Vec::new();
    let mut outliers_in = Vec::new();
    let mut outliers_out = Vec::new();
    for (label, g) in &windows {
        let file = format!("edges/{label}.tsv");
        store.write_text(&format!("{dir}/{file}"), |w| g.write_edge_list(w))?;
        let window = g.window.expect("built from a window");
        index.push(format!("{label},{},{},{},{},{file}", window.start, window.end, g.n_nodes(), g.n_edges()));

        let s = network_stats(g);
        stats.push(format!("{label},{},{},{}", s.avg_degree, s.clustering_coefficient, fmt_opt(s.avg_path_length)));

        let eigen = match eigenvector_centrality(g, p.eigen_tol, p.eigen_max_iter) {
            Ok(c) => c,
            Err(NetworkError::NoEdges) => BTreeMap::new(),
            Err(e) => return Err(CliError::network(&format!("window {label}"), e)),
        };
        for (t, b) in betweenness_centrality(g) {
            centrality.push(format!("{label},{t},{},{b}", fmt_opt(eigen.get(&t).copied())));
        }

        let ws = weight_split(g, &sectors).map_err(|e| CliError::network(&format!("window {label}"), e))?;
        split.push(format!(
            "{label},{},{},{},{}",
            ws.in_sector.len(),
            fmt_opt(ws.medians.0),
            ws.out_sector.len(),
            fmt_opt(ws.medians.1)
        ));
        for (sample, edges, sink) in [
            (ws.in_weights(), &ws.in_sector, &mut outliers_in),
            (ws.out_weights(), &ws.out_sector, &mut outliers_out),
        ] {
            match outlier_edges(&sample, edges) {
                Ok(rows) => sink.extend(rows.into_iter().map(|(a, b, w)| format!("{label},{a},{b},{w}"))),
                Err(NetworkError::EmptySample) => {}
                Err(e) => return Err(CliError::network(&format!("window {label}"), e)),
            }
        }
    }

    let table = |rel: &str, header: &str, rows: &[String]| {
        store.write_text(&format!("{dir}/{rel}"), |w| -> std::io::Result<()> {
            writeln!(w, "{header}")?;
            for r in rows {
                writeln!(w, "{r}")?;
            }
            Ok(())
        })
    };
    table("windows.csv", "label,start,end,n_nodes,n_edges,file", &index)?;
    table("stats.csv", "label,avg_degree,clustering_coefficient,avg_path_length", &stats)?;
    table("centrality.csv", "label,ticker,eigenvector,betweenness", &centrality)?;
    table("split.csv", "label,n_in_sector,median_in_sector,n_out_sector,median_out_sector", &split)?;
    table("outliers_in_sector.csv", "label,src,dst,weight", &outliers_in)?;
    table("outliers_out_sector.csv", "label,src,dst,weight", &outliers_out)?;
    Ok(())
}

// ---------------------------------------------------------------- groups

/// The network of the first row of `network/static/windows.csv`, or `None`
/// when no static window was built.
fn load_static_network(store: &Store, nodes: Vec<String>) -> Result<Option<Network>, CliError> {
    let (path, text) = store.read_text("network/static/windows.csv")?;
    let Some(row) = text.lines().filter(|l| !l.starts_with('#')).nth(1) else {
        return Ok(None);
    };
    let file = row
        .rsplit(',')
        .next()
        .ok_or_else(|| CliError::Validation(format!("{}: malformed row", path.display())))?;
    let rel = format!("network/static/{file}");
    let (path, text) = store.read_text(&rel)?;
    Network::read_edge_list(text.as_bytes(), Some(nodes))
        .map(Some)
        .map_err(|e| CliError::network(&path.display().to_string(), e))
}

pub fn groups(cfg: &RunConfig, store: &Store) -> Result<(), CliError> {
    let companies = load_companies(store)?;
    let sectors = companies.sectors();
    let Some(g) = load_static_network(store, companies.tickers())? else {
        let empty = Partition::from_labels::<usize>(&BTreeMap::new());
        store.write_text("groups/partition.csv", |w| empty.write_csv(w))?;
        store.write_text("groups/composition.csv", |w| writeln!(w, "group"))?;
        store.write_json(
            "groups/comparison.json",
            &json!({ "n_groups": 0, "modularity": null, "levels": 0, "nmi": null, "f1": null, "contingency": null }),
        )?;
        return Ok(());
    };
    let outcome = louvain(&g, cfg.params.resolution).map_err(|e| CliError::community("static network", e))?;
    let report = compare_with_sectors(&outcome.partition, &sectors).map_err(|e| CliError::community("sector comparison", e))?;
    store.write_text("groups/partition.csv", |w| outcome.partition.write_csv(w))?;
    store.write_text("groups/composition.csv", |w| report.contingency.write_csv(w))?;
    store.write_json(
        "groups/comparison.json",
        &json!({
            "n_groups": outcome.partition.k,
            "modularity": outcome.modularity,
            "levels": outcome.levels,
            "nmi": report.nmi,
            "f1": report.f1,
            "contingency": report.contingency,
        }),
    )?;
    Ok(())
}

fn group_sets(p: &Partition) -> BTreeMap<usize, BTreeSet<String>> {
    p.groups().into_iter().enumerate().map(|(g, m)| (g, m.into_iter().collect())).collect()
}

pub fn group_label(g: usize) -> String {
    format!("group-{g}")
}

// ---------------------------------------------------------------- events

pub fn events(cfg: &RunConfig, store: &Store) -> Result<(), CliError> {
    let p = &cfg.params;
    let panel = load_panel(store)?;
    let corpus = load_corpus(store)?;
    let partition = load_partition(store)?;
    let detector = EventDetector {
        lookback: p.lookback_event,
        z: p.z,
        min_observations: p.min_observations,
        sigma_floor: 1e-12,
    };
    let found = detector.detect_panel(&panel).map_err(|e| CliError::events("event detection", e))?;
    store.write_text("events/events.csv", |w| write_events_csv(&found, w))?;

    let networks = DynamicNetworks::new(&corpus, panel.tickers.clone(), panel.calendar.clone(), p.network_window, p.coverage);
    let spec = ProfileSpec::symmetric(p.profile_window as i64, 1, p.reference_count, true);
    let mut entries = Vec::new();
    let mut group_events = Vec::new();
    for (g, members) in group_sets(&partition) {
        for direction in [Direction::Positive, Direction::Negative] {
            let (usable, short): (Vec<SentimentEvent>, Vec<SentimentEvent>) = found
                .iter()
                .filter(|e| e.direction == direction && members.contains(&e.ticker))
                .cloned()
                .partition(|e| panel.date_index(e.date).is_some_and(|i| i >= p.network_window));
            if usable.is_empty() {
                continue;
            }
            let profile = group_event_profile(&members, &usable, &panel, &networks, p.k_neighbours, &spec)
                .map_err(|e| CliError::events(&format!("{} profile", group_label(g)), e))?;
            let file = format!("profiles/{}-{}.csv", group_label(g), direction.as_str());
            store.write_text(&format!("events/{file}"), |w| profile.write_csv(w))?;
            entries.push(json!({
                "group": g,
                "direction": direction.as_str(),
                "file": file,
                "n_events": profile.n_events,
                "skipped_without_network": short.len(),
            }));
        }
        let members: Vec<String> = members.into_iter().collect();
        let series = panel.group_series(&members);
        group_events.extend(
            detector
                .detect(&group_label(g), &series, &panel.calendar)
                .map_err(|e| CliError::events("group event detection", e))?,
        );
    }
    store.write_text("events/group_events.csv", |w| write_events_csv(&group_events, w))?;
    store.write_json(
        "events/index.json",
        &json!({
            "n_events": found.len(),
            "n_group_events": group_events.len(),
            "neighbours": p.k_neighbours,
            "profiles": entries,
        }),
    )?;

    let series = event_series(&found, &panel.tickers, &panel.calendar);
    let corr = event_correlation_matrix(&series);
    store.write_text("events/correlation.csv", |w| -> std::io::Result<()> {
        writeln!(w, "ticker{}", panel.tickers.iter().map(|t| format!(",{t}")).collect::<String>())?;
        for (t, row) in panel.tickers.iter().zip(&corr) {
            writeln!(w, "{t}{}", row.iter().map(|v| format!(",{}", fmt_opt(*v))).collect::<String>())?;
        }
        Ok(())
    })?;

    let daily: Vec<Vec<f64>> = panel.values.iter().map(|r| r.iter().map(|v| v.unwrap_or(0.0)).collect()).collect();
    let share = |s: &[Vec<f64>]| match explained_variance(s, p.n_factors) {
        Ok(v) => json!({ "share": v, "note": null }),
        Err(e) => json!({ "share": null, "note": e.to_string() }),
    };
    store.write_json(
        "events/explained_variance.json",
        &json!({
            "method": "principal-component share of the correlation matrix (factor-model proxy)",
            "n_factors": p.n_factors,
            "n_series": panel.tickers.len(),
            "daily_sentiment": share(&daily),
            "event_series": share(&series),
        }),
    )?;
    Ok(())
}

// ----------------------------------------------------------------- study

fn write_summary_files(store: &Store, dir: &str, name: &str, s: &SampleSummary) -> Result<(), CliError> {
    store.write_text(&format!("{dir}/{name}-histogram.csv"), |w| write_histogram_csv(&s.histogram, w))?;
    if let Some(d) = &s.density {
        store.write_text(&format!("{dir}/{name}-density.csv"), |w| write_density_csv(d, w))?;
    }
    Ok(())
}

pub fn study(cfg: &RunConfig, store: &Store) -> Result<(), CliError> {
    let p = &cfg.params;
    let market = load_market(store)?;
    let found = load_events(store, "events/events.csv")?;
    let group_events = load_events(store, "events/group_events.csv")?;
    let partition = load_partition(store)?;
    let series = MarketSeries::from_panel(
        &market,
        CapmParams {
            window: p.capm_window,
            min_pairs: p.capm_min_pairs,
        },
    );
    let params = StudyParams {
        profile_window: p.profile_window,
        car_span: p.car_window,
        reference_count: p.reference_count,
        test: MannWhitney::default(),
        kde_min_events: p.kde_min_events,
    };
    let groups = group_sets(&partition);
    let studies = event_window_study(&found, &series, &groups, &params);

    let mut summary = Vec::new();
    for (g, members) in &groups {
        let label = group_label(*g);
        let mut directions = BTreeMap::new();
        if let Some(per_direction) = studies.get(g) {
            store.write_text(&format!("study/{label}.csv"), |w| write_study_csv(per_direction, w))?;
            for (d, s) in per_direction {
                let flagged = |prof: &sentinet::events::EventProfile| -> Vec<i64> {
                    prof.offsets
                        .iter()
                        .zip(&prof.p_values)
                        .filter(|(_, p)| p.is_some_and(|p| p < 0.01))
                        .map(|(o, _)| *o)
                        .collect()
                };
                directions.insert(
                    d.as_str(),
                    json!({
                        "n_events": s.car.n_events,
                        "dropped": s.dropped.len(),
                        "car_offsets_p_below_0.01": flagged(&s.car),
                        "volatility_offsets_p_below_0.01": flagged(&s.volatility),
                    }),
                );
            }
        }
        let own: Vec<SentimentEvent> = group_events.iter().filter(|e| e.ticker == label).cloned().collect();
        let dist = group_distribution_study(members, &own, &series, &params);
        let dir = format!("study/distribution/{label}");
        for (phase, pd) in &dist.phases {
            write_summary_files(store, &dir, &format!("{}-ar", phase.as_str()), &pd.abnormal)?;
            write_summary_files(store, &dir, &format!("{}-volatility", phase.as_str()), &pd.volatility)?;
        }
        let densities = dist.phases.values().any(|pd| pd.abnormal.density.is_some() || pd.volatility.density.is_some());
        let samples: BTreeMap<&str, Value> = Phase::ALL
            .iter()
            .map(|ph| {
                let pd = &dist.phases[ph];
                (ph.as_str(), json!({ "ar": pd.abnormal.n, "volatility": pd.volatility.n }))
            })
            .collect();
        summary.push(json!({
            "group": g,
            "members": members,
            "directions": directions,
            "group_events": dist.n_events,
            "densities_estimated": densities,
            "distribution_samples": samples,
        }));
    }
    store.write_json(
        "study/summary.json",
        &json!({ "kde_min_events": p.kde_min_events, "groups": summary }),
    )?;
    Ok(())
}

// ---------------------------------------------------------------- report

pub fn report(_cfg: &RunConfig, store: &Store) -> Result<(), CliError> {
    let companies = load_companies(store)?;
    let panel = load_panel(store)?;
    let corpus = load_corpus(store)?;
    let quarters = load_period(store)?.map(|r| r.quarters()).unwrap_or_default();
    let agg = |labels: &BTreeMap<String, String>| {
        period_aggregate(&panel, labels, &quarters).map_err(|e| CliError::Computation(e.to_string()))
    };
    let sector_table = agg(&companies.sectors())?;
    store.write_text("report/sector_quarter.csv", |w| sector_table.write_csv(w))?;
    let own: BTreeMap<String, String> = panel.tickers.iter().map(|t| (t.clone(), t.clone())).collect();
    let company_table = agg(&own)?;
    store.write_text("report/company_quarter.csv", |w| company_table.write_csv(w))?;
    if store.path("groups/partition.csv").exists() {
        let partition = load_partition(store)?;
        let labels: BTreeMap<String, String> = partition
            .assignment
            .iter()
            .map(|(t, g)| (t.clone(), group_label(*g)))
            .collect();
        let group_table = agg(&labels)?;
        store.write_text("report/group_quarter.csv", |w| group_table.write_csv(w))?;
    }

    let targets: BTreeSet<String> = panel.tickers.iter().cloned().collect();
    let curve = if corpus.is_empty() { None } else { concentration_curve(&corpus, &targets).ok() };
    store.write_text("report/concentration.csv", |w| -> std::io::Result<()> {
        writeln!(w, "article_fraction,sentiment_fraction")?;
        for (x, y) in curve.iter().flat_map(|c| &c.points) {
            writeln!(w, "{x},{y}")?;
        }
        Ok(())
    })?;
    let bearing = corpus.articles.iter().filter(|a| sentiment_bearing(a, &targets, DEFAULT_NEUTRAL_EPS)).count();
    store.write_json(
        "report/summary.json",
        &json!({
            "articles": corpus.len(),
            "sentiment_bearing_articles": bearing,
            "article_fraction_for_half_of_sentiment": curve.as_ref().map(|c| c.article_fraction_for(0.5)),
            "degenerate_curve": curve.as_ref().map(|c| c.degenerate),
            "quarters": quarters.len(),
        }),
    )?;
    Ok(())
}
