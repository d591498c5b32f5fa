//! `report.csv` / `report.meta` emission.

use std::fmt::Write as _;
use std::fs;
use std::path::Path as FsPath;

use sha2::{Digest, Sha256};

use super::config::ExperimentKind;
use crate::error::Result;
use crate::measures::Ensemble;
use crate::noise::write_binary_file;

/// Version tag of the CSV layouts; bumped whenever a column changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, pass: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
    pub checks: Vec<Check>,
    /// Extra `key = value` lines for the meta file.
    pub notes: Vec<(String, String)>,
    pub dumps: Vec<(String, Ensemble)>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for row in &self.rows {
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    /// One line per check, `PASS name: detail`.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        s
    }

    pub fn meta(&self, config_hash: &str) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "experiment = {}", self.kind.name());
        let _ = writeln!(s, "config_sha256 = {config_hash}");
        let _ = writeln!(s, "ddsde_core_version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "csv_schema = {}/{}", self.kind.name(), CSV_SCHEMA_VERSION);
        for (k, v) in &self.notes {
            let _ = writeln!(s, "{k} = {v}");
        }
        for c in &self.checks {
            let _ = writeln!(
                s,
                "check.{} = {} ({})",
                c.name,
                if c.pass { "pass" } else { "fail" },
                c.detail
            );
        }
        let _ = writeln!(s, "result = {}", if self.passed() { "pass" } else { "fail" });
        s
    }

    /// Writes `report.csv`, `report.meta` and any ensemble dumps into `dir`.
    pub fn write(&self, dir: &FsPath, config_hash: &str) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.csv"), self.csv())?;
        fs::write(dir.join("report.meta"), self.meta(config_hash))?;
        for (name, ens) in &self.dumps {
            write_binary_file(ens, &dir.join(name))?;
        }
        Ok(())
    }
}

pub fn config_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Shortest round-trip formatting, `n/a` for absent values.
pub(crate) fn num(v: f64) -> String {
    format!("{v}")
}

pub(crate) fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_else(|| "n/a".into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_string() {
        assert_eq!(
            config_hash(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn csv_and_meta_layout() {
        let r = ExperimentReport {
            kind: ExperimentKind::BoundsTable,
            header: vec!["a", "b"],
            rows: vec![vec![num(0.1), opt(None)]],
            checks: vec![Check::new("x", true, "ok"), Check::new("y", false, "bad")],
            notes: vec![("k".into(), "v".into())],
            dumps: vec![],
        };
        assert_eq!(r.csv(), "a,b\n0.1,n/a\n");
        assert!(!r.passed());
        let meta = r.meta("abc");
        assert!(meta.contains("config_sha256 = abc\n"));
        assert!(meta.contains("check.y = fail (bad)\n"));
        assert!(meta.ends_with("result = fail\n"));
        let dir = tempfile::tempdir().unwrap();
        r.write(dir.path(), "abc").unwrap();
        assert_eq!(fs::read_to_string(dir.path().join("report.csv")).unwrap(), r.csv());
    }
}
