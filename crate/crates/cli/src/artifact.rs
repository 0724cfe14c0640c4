//! Stamped on-disk artifacts.
//!
//! CSV and TSV files start with `# config_hash=<hex>`; JSON lines files start
//! with a `{"config_hash": ...}` record; JSON documents carry `config_hash`
//! and `config` fields. Readers refuse files stamped with another hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::CliError;

pub const STAMP_PREFIX: &str = "# config_hash=";

pub struct Store {
    pub root: PathBuf,
    pub hash: String,
    pub config: BTreeMap<String, String>,
}

impl Store {
    pub fn new(cfg: &RunConfig) -> Self {
        Store {
            root: cfg.out.clone(),
            hash: cfg.params.hash(),
            config: cfg.params.entries().into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn put(&self, rel: &str, bytes: Vec<u8>) -> Result<PathBuf, CliError> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::write(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::write(&path, e))?;
        Ok(path)
    }

    /// Writes the stamp line followed by whatever `body` emits.
    pub fn write_text<E: std::fmt::Display>(
        &self,
        rel: &str,
        body: impl FnOnce(&mut Vec<u8>) -> Result<(), E>,
    ) -> Result<PathBuf, CliError> {
        let mut buf = format!("{STAMP_PREFIX}{}\n", self.hash).into_bytes();
        body(&mut buf).map_err(|e| CliError::write(&self.path(rel), e))?;
        self.put(rel, buf)
    }

    pub fn write_jsonl<T: Serialize>(&self, rel: &str, records: &[T]) -> Result<PathBuf, CliError> {
        let mut buf = serde_json::to_vec(&json!({ "config_hash": self.hash })).expect("stamp serializes");
        buf.push(b'\n');
        for r in records {
            serde_json::to_writer(&mut buf, r).map_err(|e| CliError::write(&self.path(rel), e))?;
            buf.push(b'\n');
        }
        self.put(rel, buf)
    }

    /// `payload` must serialize to an object; stamp fields are added to it.
    pub fn write_json<T: Serialize>(&self, rel: &str, payload: &T) -> Result<PathBuf, CliError> {
        let mut value = serde_json::to_value(payload).map_err(|e| CliError::write(&self.path(rel), e))?;
        let obj = value.as_object_mut().expect("report payloads are objects");
        obj.insert("config_hash".into(), Value::String(self.hash.clone()));
        obj.insert("config".into(), serde_json::to_value(&self.config).expect("string map"));
        let mut buf = serde_json::to_vec_pretty(&value).expect("value serializes");
        buf.push(b'\n');
        self.put(rel, buf)
    }

    fn mismatch(&self, path: &Path, found: &str) -> CliError {
        CliError::Validation(format!(
            "{} was produced with config hash {found}, current config hash is {}; re-run the stage that writes it",
            path.display(),
            self.hash
        ))
    }

    fn read(&self, rel: &str) -> Result<(PathBuf, String), CliError> {
        let path = self.path(rel);
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::from_io(&path, e))?;
        Ok((path, text))
    }

    /// Full text of a stamped CSV/TSV file, stamp line included.
    pub fn read_text(&self, rel: &str) -> Result<(PathBuf, String), CliError> {
        let (path, text) = self.read(rel)?;
        let found = text
            .lines()
            .next()
            .and_then(|l| l.strip_prefix(STAMP_PREFIX))
            .ok_or_else(|| CliError::Validation(format!("{} carries no config hash", path.display())))?;
        if found != self.hash {
            return Err(self.mismatch(&path, found));
        }
        Ok((path, text))
    }

    /// Record lines of a stamped JSON lines file.
    pub fn read_jsonl(&self, rel: &str) -> Result<(PathBuf, Vec<String>), CliError> {
        let (path, text) = self.read(rel)?;
        let mut lines = text.lines();
        let stamp: Option<Value> = lines.next().and_then(|l| serde_json::from_str(l).ok());
        let found = stamp
            .as_ref()
            .and_then(|v| v.get("config_hash"))
            .and_then(Value::as_str)
            .ok_or_else(|| CliError::Validation(format!("{} carries no config hash", path.display())))?;
        if found != self.hash {
            return Err(self.mismatch(&path, found));
        }
        Ok((path, lines.map(str::to_string).collect()))
    }

    pub fn read_json(&self, rel: &str) -> Result<(PathBuf, Value), CliError> {
        let (path, text) = self.read(rel)?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let found = value
            .get("config_hash")
            .and_then(Value::as_str)
            .ok_or_else(|| CliError::Validation(format!("{} carries no config hash", path.display())))?;
        if found != self.hash {
            return Err(self.mismatch(&path, found));
        }
        Ok((path, value))
    }
}
