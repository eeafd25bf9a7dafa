//! CSV tables with `#`-prefixed metadata, and config hashing.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const TOOL: &str = concat!("wiener ", env!("CARGO_PKG_VERSION"));

/// Shortest decimal that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:?}")
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn flag(b: bool) -> String {
    if b { "1".into() } else { "0".into() }
}

/// SHA-256 of the canonical JSON form of a resolved configuration.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let json = serde_json::to_string(config).expect("plain data");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub struct Table {
    meta: Vec<(String, String)>,
    notes: Vec<String>,
    columns: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<T: Serialize>(command: &str, seed: u64, config: &T) -> Self {
        Self {
            meta: vec![
                ("tool".into(), TOOL.into()),
                ("command".into(), command.into()),
                ("seed".into(), seed.to_string()),
                ("config-sha256".into(), config_hash(config)),
            ],
            notes: Vec::new(),
            columns: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn meta(&mut self, key: &str, value: impl Into<String>) {
        self.meta.push((key.into(), value.into()));
    }

    /// Column documentation line.
    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn columns<I: IntoIterator<Item = S>, S: Into<String>>(&mut self, cols: I) {
        self.columns = cols.into_iter().map(Into::into).collect();
    }

    pub fn row(&mut self, cells: Vec<String>) {
        debug_assert_eq!(cells.len(), self.columns.len());
        self.rows.push(cells);
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}: {v}");
        }
        for n in &self.notes {
            let _ = writeln!(out, "# {n}");
        }
        let _ = writeln!(out, "{}", self.columns.join(","));
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        out
    }
}

/// Writes to `path`, or to stdout when absent.
pub fn emit(path: Option<&Path>, content: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, content)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip() {
        for &x in &[0.1, 1.0, 1.0 / 3.0, 1e-20, 6.02e23, -0.0, 15.0, 0.8123] {
            assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(num(0.25), "0.25");
        assert_eq!(num(f64::NAN), "NaN");
    }

    #[test]
    fn hash_is_stable() {
        #[derive(Serialize)]
        struct C {
            a: u32,
        }
        assert_eq!(config_hash(&C { a: 1 }), config_hash(&C { a: 1 }));
        assert_ne!(config_hash(&C { a: 1 }), config_hash(&C { a: 2 }));
        assert_eq!(config_hash(&C { a: 1 }).len(), 64);
    }
}
