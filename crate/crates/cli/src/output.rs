//! CSV files with a comment header, and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use kerr_junction::Result;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Column-oriented table written as `# key: value` lines, a header row and
/// one row per sample. Floats use the shortest round-trip representation.
pub struct Table {
    meta: Vec<(String, String)>,
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

#[derive(Clone, Debug)]
pub enum Cell {
    F(f64),
    I(i64),
    B(bool),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            meta: vec![("units".into(), "energies meV, times ps".into())],
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(s, "# {k}: {v}");
        }
        s.push_str(&self.columns.join(","));
        s.push('\n');
        for row in &self.rows {
            for (i, c) in row.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                match c {
                    Cell::F(v) => {
                        let _ = write!(s, "{v}");
                    }
                    Cell::I(v) => {
                        let _ = write!(s, "{v}");
                    }
                    Cell::B(v) => s.push(if *v { '1' } else { '0' }),
                    Cell::S(v) => s.push_str(v),
                }
            }
            s.push('\n');
        }
        s
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    /// Data only; the scenario carries no pass criterion.
    #[serde(rename = "DONE")]
    Done,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioRecord {
    pub name: String,
    pub status: Status,
    pub metrics: BTreeMap<String, serde_json::Value>,
    pub files: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub code_version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub threads: usize,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub scenarios: Vec<ScenarioRecord>,
    pub files: BTreeMap<String, String>,
}

/// Writes files into one output directory and remembers their checksums.
pub struct OutputDir {
    root: PathBuf,
    checksums: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        Ok(Self {
            root: root.to_path_buf(),
            checksums: BTreeMap::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<String> {
        std::fs::write(self.root.join(name), contents)?;
        self.checksums.insert(name.to_string(), sha256_hex(contents.as_bytes()));
        Ok(name.to_string())
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> Result<String> {
        self.write(name, &table.render())
    }

    pub fn checksums(&self) -> &BTreeMap<String, String> {
        &self.checksums
    }

    pub fn write_manifest(&self, manifest: &Manifest) -> Result<()> {
        let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
        std::fs::write(self.root.join("manifest.json"), text + "\n")?;
        Ok(())
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
