//! End-to-end behaviour of the `sentinet` binary on small hand-built inputs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

const SECTORS: [(&str, &[&str]); 2] = [("Energy", &["AAA", "AAB", "AAC"]), ("Retail", &["BBA", "BBB", "BBC"])];

fn full_name(ticker: &str) -> String {
    format!("{}{} Holdings Inc", &ticker[..1], ticker[1..].to_lowercase())
}

/// Inputs written to a temporary directory next to a config file.
struct Inputs {
    tickers: Vec<(String, String)>,
    corpus: Vec<String>,
    days: Vec<NaiveDate>,
    flat_prices: bool,
}

impl Inputs {
    fn days(start: &str, n: u64) -> Vec<NaiveDate> {
        let s: NaiveDate = start.parse().unwrap();
        (0..n).map(|i| s + Days::new(i)).collect()
    }

    /// Two sectors whose companies are only ever mentioned together with
    /// companies of the same sector.
    fn blocks(start: &str, n_days: u64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let days = Self::days(start, n_days);
        let mut corpus = Vec::new();
        for (d, day) in days.iter().enumerate() {
            for (s, (_, members)) in SECTORS.iter().enumerate() {
                let a = rng.random_range(0..3);
                let b = (a + rng.random_range(1..3)) % 3;
                let mention = |t: &str, rng: &mut ChaCha8Rng| {
                    format!(r#"{{"raw_name":"{}","sentiment":{:.4}}}"#, full_name(t), rng.random_range(-0.5..0.5))
                };
                let (ma, mb) = (mention(members[a], &mut rng), mention(members[b], &mut rng));
                corpus.push(format!(r#"{{"article_id":"a{d}-{s}","date":"{day}","mentions":[{ma},{mb}]}}"#));
            }
        }
        let tickers = SECTORS
            .iter()
            .flat_map(|(sector, ms)| ms.iter().map(|t| (t.to_string(), sector.to_string())))
            .collect();
        Inputs { tickers, corpus, days, flat_prices: false }
    }

    fn write(&self, dir: &Path) -> PathBuf {
        let mut universe = String::from("ticker,full_name,sector,aliases\n");
        for (t, s) in &self.tickers {
            universe += &format!("{t},{},{s},{t}\n", full_name(t));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut market = String::from("date,ticker,close\n");
        let mut index = String::from("date,close\n");
        let mut closes = vec![100.0; self.tickers.len()];
        let mut level = 1000.0;
        for day in &self.days {
            level *= 1.0 + rng.random_range(-0.02..0.02);
            index += &format!("{day},{level:.4}\n");
            for ((t, _), c) in self.tickers.iter().zip(closes.iter_mut()) {
                if !self.flat_prices {
                    *c *= 1.0 + rng.random_range(-0.03..0.03);
                }
                market += &format!("{day},{t},{c:.4}\n");
            }
        }
        std::fs::write(dir.join("universe.csv"), universe).unwrap();
        std::fs::write(dir.join("market.csv"), market).unwrap();
        std::fs::write(dir.join("index.csv"), index).unwrap();
        std::fs::write(dir.join("corpus.jsonl"), self.corpus.join("\n") + "\n").unwrap();
        let conf = dir.join("sentinet.conf");
        std::fs::write(&conf, "corpus = corpus.jsonl\nuniverse = universe.csv\nmarket = market.csv\nindex = index.csv\n").unwrap();
        conf
    }
}

struct Workspace {
    _dir: TempDir,
    conf: PathBuf,
    out: PathBuf,
}

impl Workspace {
    fn new(inputs: &Inputs) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let conf = inputs.write(dir.path());
        let out = dir.path().join("out");
        Workspace { _dir: dir, conf, out }
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_sentinet"))
            .arg("--config")
            .arg(&self.conf)
            .arg("--out")
            .arg(&self.out)
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) {
        let o = self.run(args);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }

    /// Data lines of a stamped table, header excluded.
    fn rows(&self, rel: &str) -> Vec<String> {
        let text = std::fs::read_to_string(self.out.join(rel)).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# config_hash="), "{rel} unstamped");
        lines.skip(1).map(str::to_string).collect()
    }

    fn json(&self, rel: &str) -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(self.out.join(rel)).unwrap()).unwrap()
    }

    fn list(&self, rel: &str) -> Vec<String> {
        let mut names: Vec<String> = std::fs::read_dir(self.out.join(rel))
            .map(|rd| rd.map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect())
            .unwrap_or_default();
        names.sort();
        names
    }
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_input_exits_2_naming_the_path() {
    let ws = Workspace::new(&Inputs::blocks("2010-01-01", 30, 1));
    std::fs::remove_file(ws.conf.with_file_name("market.csv")).unwrap();
    let o = ws.run(&["ingest"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("market.csv"), "{}", stderr(&o));
}

#[test]
fn duplicate_article_ids_exit_3_listing_them() {
    let mut inputs = Inputs::blocks("2010-01-01", 30, 1);
    let first = inputs.corpus[0].clone();
    inputs.corpus.push(first);
    let ws = Workspace::new(&inputs);
    let o = ws.run(&["ingest"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("a0-0"), "{}", stderr(&o));
}

#[test]
fn artifacts_from_another_config_are_refused() {
    let ws = Workspace::new(&Inputs::blocks("2010-01-01", 120, 2));
    ws.ok(&["ingest"]);
    let o = ws.run(&["--set", "z=2.5", "events"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("config hash"), "{}", stderr(&o));
}

#[test]
fn unknown_window_is_a_usage_error() {
    let ws = Workspace::new(&Inputs::blocks("2010-01-01", 30, 1));
    let o = ws.run(&["network", "--window", "monthly"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("monthly"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_rejected() {
    let ws = Workspace::new(&Inputs::blocks("2010-01-01", 30, 1));
    let o = ws.run(&["--set", "no_such_key=1", "ingest"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn quarterly_networks_have_one_edge_list_per_quarter() {
    let ws = Workspace::new(&Inputs::blocks("2010-01-01", 181, 3));
    ws.ok(&["ingest"]);
    ws.ok(&["network", "--window", "quarterly"]);
    assert_eq!(ws.list("network/quarterly/edges"), vec!["2010Q1.tsv", "2010Q2.tsv"]);
    assert_eq!(ws.rows("network/quarterly/windows.csv").len(), 2);
}

#[test]
fn static_and_quarterly_agree_within_one_quarter() {
    let ws = Workspace::new(&Inputs::blocks("2010-04-01", 91, 4));
    ws.ok(&["ingest"]);
    ws.ok(&["network", "--window", "static"]);
    ws.ok(&["network", "--window", "quarterly"]);
    let quarterly = ws.list("network/quarterly/edges");
    assert_eq!(quarterly, vec!["2010Q2.tsv"]);
    assert_eq!(ws.rows("network/static/edges/static.tsv"), ws.rows("network/quarterly/edges/2010Q2.tsv"));
}

#[test]
fn outlier_tables_are_sorted_by_weight() {
    let ws = Workspace::new(&Inputs::blocks("2010-01-01", 200, 5));
    ws.ok(&["ingest"]);
    ws.ok(&["network"]);
    for file in ["outliers_in_sector.csv", "outliers_out_sector.csv"] {
        let weights: Vec<f64> = ws
            .rows(&format!("network/static/{file}"))
            .iter()
            .map(|r| r.rsplit(',').next().unwrap().parse().unwrap())
            .collect();
        assert!(weights.windows(2).all(|w| w[0] >= w[1]), "{file}: {weights:?}");
    }
    // Cross-sector pairs are never co-mentioned.
    assert!(ws.rows("network/static/outliers_out_sector.csv").is_empty());
}

#[test]
fn sector_blocks_are_recovered_exactly() {
    let ws = Workspace::new(&Inputs::blocks("2010-01-01", 200, 6));
    ws.ok(&["ingest"]);
    ws.ok(&["network"]);
    ws.ok(&["groups"]);
    let cmp = ws.json("groups/comparison.json");
    assert_eq!(cmp["n_groups"], 2);
    assert!((cmp["nmi"].as_f64().unwrap() - 1.0).abs() < 1e-12, "{cmp}");
    let rows = ws.rows("groups/partition.csv");
    assert_eq!(rows.len(), 6);
}

#[test]
fn empty_corpus_yields_empty_outputs() {
    let mut inputs = Inputs::blocks("2010-01-01", 30, 1);
    inputs.corpus.clear();
    let ws = Workspace::new(&inputs);
    ws.ok(&["run"]);
    assert!(ws.rows("events/events.csv").is_empty());
    assert!(ws.rows("events/group_events.csv").is_empty());
    assert!(ws.rows("groups/partition.csv").is_empty());
    assert_eq!(ws.json("ingest/summary.json")["articles"], 0);
}

#[test]
fn single_planted_spike_is_the_only_event() {
    let days = Inputs::days("2010-01-01", 181);
    let corpus = days
        .iter()
        .enumerate()
        .map(|(d, day)| {
            let s = if d == 180 { 0.5 } else if d % 2 == 0 { 0.1 } else { -0.1 };
            format!(r#"{{"article_id":"s{d}","date":"{day}","mentions":[{{"raw_name":"{}","sentiment":{s}}}]}}"#, full_name("AAA"))
        })
        .collect();
    let inputs = Inputs { tickers: vec![("AAA".into(), "Energy".into())], corpus, days, flat_prices: false };
    let ws = Workspace::new(&inputs);
    for stage in ["ingest", "network", "groups", "events"] {
        ws.ok(&[stage]);
    }
    let rows = ws.rows("events/events.csv");
    assert_eq!(rows.len(), 1, "{rows:?}");
    let fields: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(&fields[..3], &["AAA", "2010-06-30", "positive"]);
    assert!((fields[3].parse::<f64>().unwrap() - 5.0).abs() < 1e-9);
}

#[test]
fn event_correlation_matrix_is_symmetric() {
    let ws = Workspace::new(&Inputs::blocks("2010-01-01", 400, 7));
    ws.ok(&["ingest"]);
    ws.ok(&["network"]);
    ws.ok(&["groups"]);
    ws.ok(&["events"]);
    let rows = ws.rows("events/correlation.csv");
    let cells: Vec<Vec<String>> = rows.iter().map(|r| r.split(',').skip(1).map(str::to_string).collect()).collect();
    assert_eq!(cells.len(), 6);
    for i in 0..6 {
        for j in 0..6 {
            assert_eq!(cells[i][j], cells[j][i], "({i},{j})");
        }
    }
}

#[test]
fn flat_prices_leave_no_abnormal_returns() {
    let mut inputs = Inputs::blocks("2010-01-01", 500, 8);
    inputs.flat_prices = true;
    let ws = Workspace::new(&inputs);
    ws.ok(&["run"]);
    let mut seen = 0;
    for file in ws.list("study").iter().filter(|f| f.starts_with("group-") && f.ends_with(".csv")) {
        for row in ws.rows(&format!("study/{file}")) {
            let f: Vec<&str> = row.split(',').collect();
            if !f[1].is_empty() {
                assert_eq!(f[1].parse::<f64>().unwrap(), 0.0, "{row}");
                seen += 1;
            }
        }
    }
    assert!(seen > 0, "no study rows written");
}

#[test]
fn density_estimates_respect_the_event_threshold() {
    let ws = Workspace::new(&Inputs::blocks("2010-01-01", 500, 9));
    ws.ok(&["--set", "kde_min_events=100000", "run"]);
    let summary = ws.json("study/summary.json");
    for g in summary["groups"].as_array().unwrap() {
        assert_eq!(g["densities_estimated"], false);
        let dir = format!("study/distribution/group-{}", g["group"]);
        assert!(ws.list(&dir).iter().all(|f| !f.ends_with("-density.csv")));
    }
}

#[test]
fn reruns_are_byte_identical() {
    let ws = Workspace::new(&Inputs::blocks("2010-01-01", 300, 10));
    ws.ok(&["run"]);
    let before = std::fs::read(ws.out.join("study/summary.json")).unwrap();
    let edges = std::fs::read(ws.out.join("network/static/edges/static.tsv")).unwrap();
    ws.ok(&["run"]);
    assert_eq!(before, std::fs::read(ws.out.join("study/summary.json")).unwrap());
    assert_eq!(edges, std::fs::read(ws.out.join("network/static/edges/static.tsv")).unwrap());
}

#[test]
fn synth_writes_a_runnable_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = dir.path().join("fx");
    let o = Command::new(env!("CARGO_BIN_EXE_sentinet")).args(["--seed", "3", "synth", "--out"]).arg(&fixture).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let planted: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fixture.join("planted.json")).unwrap()).unwrap();
    assert_eq!(planted["seed"], 3);
    let ws = Workspace { _dir: dir, conf: fixture.join("sentinet.conf"), out: fixture.join("out") };
    ws.ok(&["ingest"]);
    assert!(ws.json("ingest/summary.json")["companies"].as_array().unwrap().len() > 2);
}
