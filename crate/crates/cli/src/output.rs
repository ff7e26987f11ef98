//! Run artifacts: CSV tables plus `summary.json` and `manifest.json`.
//! Nothing touches the filesystem until a run has finished.

use std::fs;
use std::path::Path;

use serde_json::{json, Map, Value as Json};

use crate::config::ExperimentConfig;
use crate::CliError;

/// Version of the CSV column layouts. Bumped whenever a header changes.
pub const CSV_SCHEMA: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, headers: &[&str]) -> Self {
        Self { name: name.into(), headers: headers.iter().map(|h| h.to_string()).collect(), rows: vec![] }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn column(&self, header: &str) -> Option<Vec<&str>> {
        let k = self.headers.iter().position(|h| h == header)?;
        Some(self.rows.iter().map(|r| r[k].as_str()).collect())
    }

    fn to_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(vec![]);
        w.write_record(&self.headers).map_err(runtime)?;
        for r in &self.rows {
            w.write_record(r).map_err(runtime)?;
        }
        w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
    }
}

/// Shortest round-trip decimal form; `inf`/`nan` spelled out.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:?}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// JSON number, or `null` when not finite.
pub fn jnum(x: f64) -> Json {
    if x.is_finite() {
        json!(x)
    } else {
        Json::Null
    }
}

#[derive(Clone, Debug, Default)]
pub struct Artifacts {
    pub tables: Vec<Table>,
    pub summary: Map<String, Json>,
}

impl Artifacts {
    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn set(&mut self, key: &str, v: impl Into<Json>) {
        self.summary.insert(key.into(), v.into());
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

pub fn manifest(cfg: &ExperimentConfig) -> Json {
    json!({
        "experiment": cfg.experiment,
        "seed": cfg.seed,
        "output_dir": cfg.output_dir,
        "parameters": cfg.parameters,
        "version": env!("CARGO_PKG_VERSION"),
        "csv_schema": CSV_SCHEMA,
    })
}

/// Serializes everything first, then writes the files.
pub fn write_all(cfg: &ExperimentConfig, art: &Artifacts) -> Result<(), CliError> {
    let mut files: Vec<(String, Vec<u8>)> = vec![];
    for t in &art.tables {
        files.push((format!("{}.csv", t.name), t.to_csv()?));
    }
    let pretty = |v: &Json| serde_json::to_vec_pretty(v).map_err(runtime);
    files.push(("summary.json".into(), pretty(&Json::Object(art.summary.clone()))?));
    files.push(("manifest.json".into(), pretty(&manifest(cfg))?));
    let dir: &Path = &cfg.output_dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    for (name, bytes) in files {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.1, 1.0, -2.5e-12, 1.0 / 3.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(jnum(f64::NAN), Json::Null);
    }

    #[test]
    fn csv_quotes_fields() {
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec!["1".into(), "p,q".into()]);
        assert_eq!(String::from_utf8(t.to_csv().unwrap()).unwrap(), "a,b\n1,\"p,q\"\n");
    }
}
