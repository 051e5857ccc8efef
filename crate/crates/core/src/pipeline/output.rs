//! Single writer for scenario artefacts. Every file goes through here, so
//! the manifest is exhaustive by construction.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::OutputFormat;
use crate::netalg::{write_s2p, ScatteringMatrix};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.into())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

/// Plain decimal for ordinary magnitudes, exponent form otherwise; both
/// are the shortest representation that reads back exactly.
fn fmt_f64(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

impl Cell {
    fn to_csv(&self) -> String {
        match self {
            Cell::Num(v) => fmt_f64(*v),
            Cell::Int(v) => v.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(Cell::to_csv))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Shorthand for building a row of mixed cells.
#[macro_export]
#[doc(hidden)]
macro_rules! row {
    ($($x:expr),* $(,)?) => {
        vec![$($crate::pipeline::output::Cell::from($x)),*]
    };
}

#[derive(Debug)]
pub struct OutputWriter {
    dir: PathBuf,
    format: OutputFormat,
    manifest: Vec<String>,
}

impl OutputWriter {
    pub fn create(dir: &Path, format: OutputFormat) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            format,
            manifest: Vec::new(),
        })
    }

    pub fn manifest(&self) -> &[String] {
        &self.manifest
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn open(&mut self, name: &str) -> std::io::Result<BufWriter<fs::File>> {
        let f = fs::File::create(self.dir.join(name))?;
        if !self.manifest.iter().any(|m| m == name) {
            self.manifest.push(name.to_string());
        }
        Ok(BufWriter::new(f))
    }

    /// Writes `stem.csv` or `stem.json` depending on the configured format.
    pub fn table(&mut self, stem: &str, table: &Table) -> std::io::Result<String> {
        match self.format {
            OutputFormat::Csv => {
                let name = format!("{stem}.csv");
                table.write_csv(self.open(&name)?)?;
                Ok(name)
            }
            OutputFormat::Json => {
                let name = format!("{stem}.json");
                self.json(&name, table)?;
                Ok(name)
            }
        }
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> std::io::Result<()> {
        let mut w = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()
    }

    pub fn touchstone(&mut self, name: &str, data: &[ScatteringMatrix]) -> std::io::Result<()> {
        let mut w = self.open(name)?;
        write_s2p(&mut w, data)?;
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting_round_trips() {
        for v in [0.0, 1.5, -50.0, 1e-7, 6.02e23, 0.1 + 0.2, -3.01e-12] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_f64(-40.0), "-40");
        assert_eq!(fmt_f64(2.5e-6), "2.5e-6");
    }

    #[test]
    fn writes_csv_and_json() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(&["k", "mode"]);
        t.push(row![0.5, "rx"]);
        let mut w = OutputWriter::create(dir.path(), OutputFormat::Csv).unwrap();
        w.table("a", &t).unwrap();
        assert_eq!(
            fs::read_to_string(dir.path().join("a.csv")).unwrap(),
            "k,mode\n0.5,rx\n"
        );
        let mut w = OutputWriter::create(dir.path(), OutputFormat::Json).unwrap();
        w.table("a", &t).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("a.json")).unwrap()).unwrap();
        assert_eq!(v["rows"][0][1], "rx");
        assert_eq!(w.manifest(), ["a.json"]);
    }
}
