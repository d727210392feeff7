//! CSV output with a `#`-prefixed metadata header.
//!
//! The header records the tool version, the command, the seed and the full
//! effective configuration as one JSON line, so a file can be regenerated
//! from its own header.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::continuation::{BifurcationEvent, LcoBranch, PeriodicOrbit};
use crate::model::StateVector;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const BRANCH_HEADER: [&str; 12] = [
    "mu1", "amplitude", "period", "stable", "mult1_re", "mult1_im", "mult2_re", "mult2_im", "mult3_re", "mult3_im",
    "mult4_re", "mult4_im",
];
pub const EVENTS_HEADER: [&str; 3] = ["kind", "mu1", "amplitude"];
pub const SERIES_HEADER: [&str; 5] = ["t", "x1", "x2", "x3", "x4"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    /// Subcommand with its selecting arguments, e.g. `reproduce-figure 10 --panel a`.
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl Metadata {
    pub fn header_lines(&self) -> Vec<String> {
        vec![
            format!("# lco-guard {VERSION}"),
            format!("# command: {}", self.command),
            format!("# seed: {}", self.seed),
            format!("# config: {}", self.config),
        ]
    }

    /// Reads the metadata back from the leading comment lines of a file.
    pub fn parse(text: &str) -> io::Result<Metadata> {
        let bad = |what: &str| io::Error::new(io::ErrorKind::InvalidData, format!("metadata header: {what}"));
        let mut command = None;
        let mut seed = None;
        let mut config = None;
        for line in text.lines().take_while(|l| l.starts_with('#')) {
            let body = line.trim_start_matches('#').trim_start();
            if let Some(v) = body.strip_prefix("command: ") {
                command = Some(v.to_string());
            } else if let Some(v) = body.strip_prefix("seed: ") {
                seed = Some(v.parse().map_err(|_| bad("seed is not an integer"))?);
            } else if let Some(v) = body.strip_prefix("config: ") {
                config = Some(serde_json::from_str(v).map_err(|e| bad(&e.to_string()))?);
            }
        }
        Ok(Metadata {
            command: command.ok_or_else(|| bad("missing command line"))?,
            seed: seed.ok_or_else(|| bad("missing seed line"))?,
            config: config.ok_or_else(|| bad("missing config line"))?,
        })
    }

    pub fn read(path: &Path) -> io::Result<Metadata> {
        Metadata::parse(&fs::read_to_string(path)?)
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// Header plus rows; every cell is already formatted.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Table {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self, meta: &Metadata) -> io::Result<Vec<u8>> {
        let mut out = Vec::new();
        for line in meta.header_lines() {
            writeln!(out, "{line}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| e.into_error())
    }

    pub fn write(&self, path: &Path, meta: &Metadata) -> io::Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_bytes(meta)?)
    }

    /// Parses a file written by [`Table::write`], skipping the header comments.
    pub fn read(path: &Path) -> io::Result<Table> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
        let header = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

fn orbit_row(p: &PeriodicOrbit) -> Vec<String> {
    let mut row = vec![num(p.mu1), num(p.amplitude), num(p.period), p.stable.to_string()];
    for m in &p.multipliers {
        row.push(num(m.re));
        row.push(num(m.im));
    }
    row
}

pub fn branch_table(branch: &LcoBranch) -> Table {
    let mut t = Table::new(&BRANCH_HEADER);
    for p in &branch.points {
        t.push(orbit_row(p));
    }
    t
}

pub fn events_table<'a>(events: impl IntoIterator<Item = &'a BifurcationEvent>) -> Table {
    let mut t = Table::new(&EVENTS_HEADER);
    for e in events {
        t.push(vec![e.kind.name().to_string(), num(e.mu1), num(e.amplitude)]);
    }
    t
}

pub fn series_table<'a>(samples: impl IntoIterator<Item = (f64, &'a StateVector)>) -> Table {
    let mut t = Table::new(&SERIES_HEADER);
    for (time, x) in samples {
        t.push(vec![num(time), num(x[0]), num(x[1]), num(x[2]), num(x[3])]);
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> Metadata {
        Metadata {
            command: "reproduce-figure 10 --panel a".into(),
            seed: 7,
            config: serde_json::json!({"system": {"eps": 0.05}}),
        }
    }

    #[test]
    fn header_round_trip() {
        let m = meta();
        let text = m.header_lines().join("\n") + "\nmu1,amplitude\n";
        assert_eq!(Metadata::parse(&text).unwrap(), m);
        assert!(Metadata::parse("mu1\n").is_err());
    }

    #[test]
    fn table_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/t.csv");
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![num(0.1), num(1e-300)]);
        t.push(vec![num(-2.5), "true".into()]);
        t.write(&path, &meta()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# lco-guard "));
        let back = Table::read(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.column("a").unwrap(), vec!["0.1", "-2.5"]);
        assert_eq!(back.rows[0][1].parse::<f64>().unwrap(), 1e-300);
        assert_eq!(Metadata::read(&path).unwrap(), meta());
    }
}
