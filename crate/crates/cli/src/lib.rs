//! `sentinet` command-line pipeline: ingest, network, groups, events, study
//! and report stages over a shared output tree, plus a synthetic fixture
//! generator.

pub mod artifact;
pub mod config;
pub mod error;
pub mod stages;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use sentinet::synthetic::{Fixture, FixtureConfig};
use serde_json::json;

use crate::artifact::Store;
use crate::config::{fixture_config_text, RunConfig};
pub use crate::error::CliError;
use crate::stages::WindowSpec;

#[derive(Debug, Parser)]
#[command(name = "sentinet", version, about = "News co-occurrence networks, sentiment events and event studies")]
pub struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (the fixture directory for `synth`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for synthetic fixture generation; analysis never uses it.
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,
    /// `key=value` override applied after the configuration file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate inputs, normalize mentions, select companies, build the daily panel.
    Ingest,
    /// Build co-occurrence networks with statistics and outlier tables.
    Network {
        /// `static`, `quarterly` or `at-YYYY-MM-DD`.
        #[arg(long, default_value = "static")]
        window: WindowSpec,
    },
    /// Detect company groups on the static network and compare them with sectors.
    Groups,
    /// Detect sentiment events and build group neighbour-sentiment profiles.
    Events,
    /// Event study of abnormal returns and volatility around events.
    Study,
    /// Period aggregates and the sentiment concentration curve.
    Report,
    /// Every stage in order, with static and quarterly networks.
    Run,
    /// Write a synthetic corpus, universe and prices with a matching config.
    Synth,
}

pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::defaults_in(Path::new("."));
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    cfg.params.validate()?;
    Ok(cfg)
}

fn synth(dir: &Path, seed: u64) -> Result<(), CliError> {
    let fixture = Fixture::generate(&FixtureConfig {
        seed,
        ..FixtureConfig::default()
    });
    fixture.write_to(dir).map_err(|e| CliError::write(dir, e))?;
    let conf = dir.join("sentinet.conf");
    std::fs::write(&conf, fixture_config_text()).map_err(|e| CliError::write(&conf, e))?;
    let spikes: Vec<_> = fixture
        .spikes
        .iter()
        .map(|(t, d, dir)| json!({ "ticker": t, "date": d.to_string(), "direction": dir.as_str() }))
        .collect();
    let planted = json!({
        "seed": seed,
        "blocks": fixture.blocks,
        "spikes": spikes,
        "rare_ticker": fixture.rare_ticker,
    });
    let path = dir.join("planted.json");
    let mut text = serde_json::to_string_pretty(&planted).expect("json value");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| CliError::write(&path, e))
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Command::Synth = cli.command {
        let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("fixture"));
        return synth(&dir, cli.seed);
    }
    let cfg = resolve_config(cli)?;
    let store = Store::new(&cfg);
    match &cli.command {
        Command::Ingest => stages::ingest(&cfg, &store),
        Command::Network { window } => stages::network(&cfg, &store, *window),
        Command::Groups => stages::groups(&cfg, &store),
        Command::Events => stages::events(&cfg, &store),
        Command::Study => stages::study(&cfg, &store),
        Command::Report => stages::report(&cfg, &store),
        Command::Run => {
            stages::ingest(&cfg, &store)?;
            stages::network(&cfg, &store, WindowSpec::Static)?;
            stages::network(&cfg, &store, WindowSpec::Quarterly)?;
            stages::groups(&cfg, &store)?;
            stages::events(&cfg, &store)?;
            stages::study(&cfg, &store)?;
            stages::report(&cfg, &store)
        }
        Command::Synth => unreachable!("handled above"),
    }
}
