//! Flat `key = value` run configuration.
//!
//! Path keys (`corpus`, `universe`, `market`, `index`, `out`) are resolved
//! against the directory of the file that sets them. Every other key is an
//! analysis parameter; parameters, and only parameters, feed the config hash.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use sentinet::corpus::CoverageMode;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub lookback_event: usize,
    pub z: f64,
    pub min_observations: usize,
    pub k_neighbours: usize,
    pub network_window: usize,
    pub car_window: usize,
    pub profile_window: usize,
    pub reference_count: usize,
    pub resolution: f64,
    pub kde_min_events: usize,
    pub min_mentions: usize,
    pub capm_window: usize,
    pub capm_min_pairs: usize,
    pub n_factors: usize,
    /// Length of the network used for group detection, counted from the
    /// first month of the study period.
    pub static_months: u32,
    pub coverage: CoverageMode,
    pub bracket_aliases: bool,
    pub eigen_tol: f64,
    pub eigen_max_iter: usize,
    pub study_start: Option<NaiveDate>,
    pub study_end: Option<NaiveDate>,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            lookback_event: 180,
            z: 2.0,
            min_observations: 30,
            k_neighbours: 10,
            network_window: 60,
            car_window: 7,
            profile_window: 7,
            reference_count: 10,
            resolution: 1.0,
            kde_min_events: 20,
            min_mentions: 4,
            capm_window: 180,
            capm_min_pairs: 120,
            n_factors: 5,
            static_months: 12,
            coverage: CoverageMode::MentionCount,
            bracket_aliases: true,
            eigen_tol: 1e-10,
            eigen_max_iter: 10_000,
            study_start: None,
            study_end: None,
        }
    }
}

fn coverage_name(mode: CoverageMode) -> &'static str {
    match mode {
        CoverageMode::MentionCount => "mention-count",
        CoverageMode::Indicator => "indicator",
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::Validation(format!("{key}: cannot parse {value:?}: {e}")))
}

fn parse_date(key: &str, value: &str) -> Result<Option<NaiveDate>, CliError> {
    if value.is_empty() {
        return Ok(None);
    }
    parse(key, value).map(Some)
}

impl Params {
    pub const KEYS: &'static [&'static str] = &[
        "bracket_aliases",
        "capm_min_pairs",
        "capm_window",
        "car_window",
        "coverage",
        "eigen_max_iter",
        "eigen_tol",
        "k_neighbours",
        "kde_min_events",
        "lookback_event",
        "min_mentions",
        "min_observations",
        "n_factors",
        "network_window",
        "profile_window",
        "reference_count",
        "resolution",
        "static_months",
        "study_end",
        "study_start",
        "z",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "lookback_event" => self.lookback_event = parse(key, value)?,
            "z" => self.z = parse(key, value)?,
            "min_observations" => self.min_observations = parse(key, value)?,
            "k_neighbours" => self.k_neighbours = parse(key, value)?,
            "network_window" => self.network_window = parse(key, value)?,
            "car_window" => self.car_window = parse(key, value)?,
            "profile_window" => self.profile_window = parse(key, value)?,
            "reference_count" => self.reference_count = parse(key, value)?,
            "resolution" => self.resolution = parse(key, value)?,
            "kde_min_events" => self.kde_min_events = parse(key, value)?,
            "min_mentions" => self.min_mentions = parse(key, value)?,
            "capm_window" => self.capm_window = parse(key, value)?,
            "capm_min_pairs" => self.capm_min_pairs = parse(key, value)?,
            "n_factors" => self.n_factors = parse(key, value)?,
            "static_months" => self.static_months = parse(key, value)?,
            "bracket_aliases" => self.bracket_aliases = parse(key, value)?,
            "eigen_tol" => self.eigen_tol = parse(key, value)?,
            "eigen_max_iter" => self.eigen_max_iter = parse(key, value)?,
            "study_start" => self.study_start = parse_date(key, value)?,
            "study_end" => self.study_end = parse_date(key, value)?,
            "coverage" => {
                self.coverage = match value {
                    "mention-count" => CoverageMode::MentionCount,
                    "indicator" => CoverageMode::Indicator,
                    other => return Err(CliError::Validation(format!("coverage: unknown mode {other:?}"))),
                }
            }
            other => return Err(CliError::Validation(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// `(key, value)` pairs in key order; values are re-rendered from the
    /// parsed fields so equivalent spellings hash identically.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let date = |d: Option<NaiveDate>| d.map(|d| d.to_string()).unwrap_or_default();
        Self::KEYS
            .iter()
            .map(|&k| {
                let v = match k {
                    "bracket_aliases" => self.bracket_aliases.to_string(),
                    "capm_min_pairs" => self.capm_min_pairs.to_string(),
                    "capm_window" => self.capm_window.to_string(),
                    "car_window" => self.car_window.to_string(),
                    "coverage" => coverage_name(self.coverage).to_string(),
                    "eigen_max_iter" => self.eigen_max_iter.to_string(),
                    "eigen_tol" => format!("{:e}", self.eigen_tol),
                    "k_neighbours" => self.k_neighbours.to_string(),
                    "kde_min_events" => self.kde_min_events.to_string(),
                    "lookback_event" => self.lookback_event.to_string(),
                    "min_mentions" => self.min_mentions.to_string(),
                    "min_observations" => self.min_observations.to_string(),
                    "n_factors" => self.n_factors.to_string(),
                    "network_window" => self.network_window.to_string(),
                    "profile_window" => self.profile_window.to_string(),
                    "reference_count" => self.reference_count.to_string(),
                    "resolution" => format!("{:?}", self.resolution),
                    "static_months" => self.static_months.to_string(),
                    "study_end" => date(self.study_end),
                    "study_start" => date(self.study_start),
                    "z" => format!("{:?}", self.z),
                    _ => unreachable!("key list and renderer disagree"),
                };
                (k, v)
            })
            .collect()
    }

    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_string().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("lookback_event", self.lookback_event),
            ("min_observations", self.min_observations),
            ("k_neighbours", self.k_neighbours),
            ("network_window", self.network_window),
            ("car_window", self.car_window),
            ("profile_window", self.profile_window),
            ("reference_count", self.reference_count),
            ("capm_window", self.capm_window),
            ("capm_min_pairs", self.capm_min_pairs),
            ("n_factors", self.n_factors),
            ("static_months", self.static_months as usize),
            ("eigen_max_iter", self.eigen_max_iter),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(CliError::Validation(format!("{k} must be positive")));
            }
        }
        for (k, v) in [("z", self.z), ("resolution", self.resolution), ("eigen_tol", self.eigen_tol)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(CliError::Validation(format!("{k} must be a positive number, got {v}")));
            }
        }
        if self.capm_min_pairs > self.capm_window {
            return Err(CliError::Validation("capm_min_pairs exceeds capm_window".into()));
        }
        if let (Some(a), Some(b)) = (self.study_start, self.study_end) {
            if a > b {
                return Err(CliError::Validation(format!("study_start {a} is after study_end {b}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub corpus: PathBuf,
    pub universe: PathBuf,
    pub market: PathBuf,
    pub index: PathBuf,
    pub out: PathBuf,
    pub params: Params,
}

impl RunConfig {
    pub fn defaults_in(dir: &Path) -> Self {
        RunConfig {
            corpus: dir.join("corpus.jsonl"),
            universe: dir.join("universe.csv"),
            market: dir.join("market.csv"),
            index: dir.join("index.csv"),
            out: dir.join("out"),
            params: Params::default(),
        }
    }

    /// `base` anchors relative path values.
    pub fn set(&mut self, key: &str, value: &str, base: &Path) -> Result<(), CliError> {
        let path = || base.join(value);
        match key {
            "corpus" => self.corpus = path(),
            "universe" => self.universe = path(),
            "market" => self.market = path(),
            "index" => self.index = path(),
            "out" => self.out = path(),
            _ => self.params.set(key, value)?,
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::from_io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = split_assignment(line)
                .map_err(|m| CliError::Validation(format!("{}:{}: {m}", path.display(), i + 1)))?;
            self.set(k, v, base)
                .map_err(|e| CliError::Validation(format!("{}:{}: {e}", path.display(), i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_override(&mut self, assignment: &str) -> Result<(), CliError> {
        let (k, v) = split_assignment(assignment).map_err(|m| CliError::Validation(format!("--set {assignment}: {m}")))?;
        self.set(k, v, Path::new("."))
    }
}

pub fn split_assignment(s: &str) -> Result<(&str, &str), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| "expected key=value".to_string())?;
    let k = k.trim();
    if k.is_empty() {
        return Err("empty key".into());
    }
    Ok((k, v.trim()))
}

/// The file `synth` writes next to a generated fixture.
pub fn fixture_config_text() -> String {
    let mut s = String::from("# Synthetic fixture inputs; parameters keep their defaults.\n");
    for (k, v) in [
        ("corpus", "corpus.jsonl"),
        ("universe", "universe.csv"),
        ("market", "market.csv"),
        ("index", "index.csv"),
    ] {
        let _ = writeln!(s, "{k} = {v}");
    }
    s
}
