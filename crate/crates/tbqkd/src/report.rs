//! Tabular results and their CSV/JSON files.
//!
//! CSV layout:
//!
//! ```text
//! # E_mu_aggregate = 0.0081
//! # separation_ps = 4.5
//! delay_ps,F_t0,F_t1,...
//! -10,0.0012,0.9921,...
//! ```
//!
//! Summary entries come first as `# key = value` comment lines, then one
//! header row naming the columns and one line per row. The JSON form is
//! `{"independent": .., "columns": [..], "rows": [[..]], "summary": {..}}`.
//! Numbers are written in shortest round-trip form, so loading a file
//! gives back exactly the values that were written.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Format;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    /// Name of the first column.
    pub independent: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub summary: BTreeMap<String, f64>,
}

impl SweepResult {
    pub fn new(independent: &str, columns: &[&str]) -> Self {
        debug_assert_eq!(columns.first(), Some(&independent));
        SweepResult {
            independent: independent.to_owned(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            summary: BTreeMap::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// Stable sort by the independent variable.
    pub fn sort(&mut self) {
        self.rows.sort_by(|a, b| a[0].total_cmp(&b[0]));
    }

    /// Rows sorted, rectangular, every cell finite.
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.columns.first() != Some(&self.independent) {
            return Err("first column must be the independent variable".into());
        }
        for (k, r) in self.rows.iter().enumerate() {
            if r.len() != self.columns.len() {
                return Err(format!("row {k} has {} cells, expected {}", r.len(), self.columns.len()));
            }
            if let Some(c) = r.iter().position(|x| !x.is_finite()) {
                return Err(format!("row {k} column {} is not finite", self.columns[c]));
            }
        }
        if self.rows.windows(2).any(|w| w[0][0] > w[1][0]) {
            return Err("rows are not sorted by the independent variable".into());
        }
        if let Some((k, _)) = self.summary.iter().find(|(_, v)| !v.is_finite()) {
            return Err(format!("summary entry {k} is not finite"));
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (k, v) in &self.summary {
            writeln!(out, "# {k} = {v:?}")?;
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.columns)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|x| format!("{x:?}")))?;
        }
        w.flush()
    }

    pub fn read_csv<R: Read>(mut input: R) -> std::result::Result<Self, String> {
        let mut text = String::new();
        input.read_to_string(&mut text).map_err(|e| e.to_string())?;
        let mut summary = BTreeMap::new();
        let mut body = String::new();
        for line in text.lines() {
            if let Some(entry) = line.strip_prefix('#') {
                let (k, v) = entry
                    .split_once('=')
                    .ok_or_else(|| format!("malformed summary line `{line}`"))?;
                let v: f64 = v.trim().parse().map_err(|_| format!("bad summary value in `{line}`"))?;
                summary.insert(k.trim().to_owned(), v);
            } else {
                body.push_str(line);
                body.push('\n');
            }
        }
        let mut r = csv::Reader::from_reader(body.as_bytes());
        let columns: Vec<String> = r.headers().map_err(|e| e.to_string())?.iter().map(str::to_owned).collect();
        let independent = columns.first().cloned().ok_or("missing header row")?;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| e.to_string())?;
            let row = rec
                .iter()
                .map(|c| c.parse::<f64>().map_err(|_| format!("bad number `{c}`")))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            rows.push(row);
        }
        let out = SweepResult {
            independent,
            columns,
            rows,
            summary,
        };
        out.check()?;
        Ok(out)
    }

    pub fn write_json<W: Write>(&self, out: W) -> io::Result<()> {
        write_json(self, out)
    }

    pub fn read_json<R: Read>(input: R) -> std::result::Result<Self, String> {
        let out: SweepResult = serde_json::from_reader(input).map_err(|e| e.to_string())?;
        out.check()?;
        Ok(out)
    }

    pub fn write<W: Write>(&self, format: Format, out: W) -> io::Result<()> {
        match format {
            Format::Csv => self.write_csv(out),
            Format::Json => self.write_json(out),
        }
    }
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize, W: Write>(value: &T, mut out: W) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)
}

/// Writes `result` to `path`, or to standard output when `path` is `None`.
pub fn emit(result: &SweepResult, format: Format, path: Option<&Path>) -> Result<()> {
    result.check().map_err(|m| Error::format(path.unwrap_or(Path::new("-")), m))?;
    with_output(path, |w| result.write(format, w))
}

/// Reads a file written by [`emit`].
pub fn load(path: &Path, format: Format) -> Result<SweepResult> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    match format {
        Format::Csv => SweepResult::read_csv(f),
        Format::Json => SweepResult::read_json(f),
    }
    .map_err(|m| Error::format(path, m))
}

pub fn with_output<F>(path: Option<&Path>, write: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| Error::io(p, e))?;
            let mut w = BufWriter::new(f);
            write(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(p, e))
        }
        None => {
            let stdout = io::stdout();
            let mut w = stdout.lock();
            write(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SweepResult {
        let mut s = SweepResult::new("channel_db", &["channel_db", "Q_mu", "E_mu", "R_bps"]);
        s.push(vec![0.45, 0.026_541_743_003_925_27, 0.007_344_495_523_594_174, 340_182.902_565_095_5]);
        s.push(vec![12.0, 1.0 / 3.0, 1e-300, 0.0]);
        s.summary.insert("E_mu_aggregate".into(), 0.1 + 0.2);
        s
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = sample();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# E_mu_aggregate = 0.30000000000000004\nchannel_db,Q_mu,E_mu,R_bps\n"));
        assert_eq!(SweepResult::read_csv(&buf[..]).unwrap(), s);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let s = sample();
        let mut buf = Vec::new();
        s.write_json(&mut buf).unwrap();
        assert_eq!(SweepResult::read_json(&buf[..]).unwrap(), s);
    }

    #[test]
    fn empty_sweep_is_header_only() {
        let s = SweepResult::new("delay_ps", &["delay_ps", "F_t0", "F_t1"]);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "delay_ps,F_t0,F_t1\n");
        assert_eq!(SweepResult::read_csv(&buf[..]).unwrap(), s);
    }

    #[test]
    fn check_rejects_bad_tables() {
        let mut s = sample();
        s.rows.swap(0, 1);
        assert!(s.check().is_err());
        let mut s = sample();
        s.rows[0][1] = f64::NAN;
        assert!(s.check().is_err());
        assert!(SweepResult::read_csv("a,b\n1,x\n".as_bytes()).is_err());
    }
}
