//! CSV tables and their JSON metadata sidecar.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

/// A result table with a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
    /// Extra entries for the sidecar.
    pub meta: Map<String, Value>,
}

impl Table {
    pub fn new(header: &'static [&'static str]) -> Self {
        Self { header, rows: Vec::new(), meta: Map::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> std::io::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner().map_err(|e| e.into_error())
    }
}

/// Shortest round-trip representation, so reruns compare byte for byte;
/// exponent form outside `[1e-4, 1e16)`.
pub fn num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-4..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".meta.json");
    PathBuf::from(name)
}

pub struct RunInfo<'a> {
    pub command: &'a str,
    pub params: &'a std::collections::BTreeMap<String, String>,
    pub threads: Option<usize>,
    pub wall_time_s: f64,
}

pub fn sidecar(table: &Table, info: &RunInfo<'_>) -> Value {
    let mut v = json!({
        "command": info.command,
        "config": info.params,
        "seed": info.params.get("seed"),
        "threads": info.threads,
        "version": env!("CARGO_PKG_VERSION"),
        "columns": table.header,
        "rows": table.rows.len(),
        "wall_time_s": info.wall_time_s,
    });
    if let Value::Object(m) = &mut v {
        m.extend(table.meta.clone());
    }
    v
}

/// Writes the CSV to `out` (with its sidecar) or to stdout.
pub fn emit(table: &Table, info: &RunInfo<'_>, out: Option<&Path>) -> std::io::Result<()> {
    let bytes = table.to_csv()?;
    match out {
        Some(path) => {
            std::fs::write(path, &bytes)?;
            let meta = serde_json::to_string_pretty(&sidecar(table, info))?;
            std::fs::write(sidecar_path(path), meta + "\n")
        }
        None => std::io::stdout().write_all(&bytes),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for x in [0.0, -0.0499, 4.7e-19, 1.0 / 3.0, 2e20, -1e-300, 64.0] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(num(4.0), "4");
        assert_eq!(num(4.7e-19), "4.7e-19");
    }

    #[test]
    fn sidecar_sits_next_to_csv() {
        assert_eq!(sidecar_path(Path::new("out/run.csv")), PathBuf::from("out/run.csv.meta.json"));
    }
}
