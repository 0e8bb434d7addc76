//! Run reports and their on-disk form.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::Kind;
use crate::CliError;

/// One output table. The last column is always `pass`.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        let mut header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
        header.push("pass".into());
        Table { name: name.into(), header, rows: Vec::new() }
    }

    pub fn push(&mut self, mut row: Vec<String>, pass: bool) {
        row.push(pass.to_string());
        debug_assert_eq!(row.len(), self.header.len(), "row width for {}", self.name);
        self.rows.push(row);
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.last().map(String::as_str) == Some("false")).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    /// `key = value` blocks, one per row
    Text,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub kind: Kind,
    pub digest: String,
    pub seed: u64,
    /// the first table is the kind's main table
    pub tables: Vec<Table>,
    /// binary side outputs (file name, bytes)
    pub raw: Vec<(String, Vec<u8>)>,
    /// wall-clock seconds per stage, in stage order
    pub timing: Vec<(String, f64)>,
}

impl RunReport {
    pub fn failures(&self) -> usize {
        self.tables.iter().map(Table::failures).sum()
    }

    pub fn manifest(&self) -> String {
        format!("# manifest kind={} digest={} seed={}", self.kind, self.digest, self.seed)
    }

    fn file_name(&self, i: usize, ext: &str) -> String {
        if i == 0 {
            format!("{}.{ext}", self.kind)
        } else {
            format!("{}.{ext}", self.tables[i].name)
        }
    }

    /// Renders every artifact in memory; nothing touches the disk.
    pub fn render(&self, format: Format) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        for (i, t) in self.tables.iter().enumerate() {
            let bytes = match format {
                Format::Csv => render_csv(&self.manifest(), t),
                Format::Text => render_text(&self.manifest(), t),
            };
            out.push((self.file_name(i, if format == Format::Csv { "csv" } else { "txt" }), bytes));
        }
        let mut timing = Table::new("timing", &["stage", "seconds"]);
        for (stage, secs) in &self.timing {
            timing.push(vec![stage.clone(), format!("{secs:.6}")], true);
        }
        out.push(("timing.csv".into(), render_csv(&self.manifest(), &timing)));
        out.extend(self.raw.iter().cloned());
        out
    }

    /// Writes all artifacts into `dir`, creating it if needed. Returns the paths written.
    pub fn export(&self, dir: &Path, format: Format) -> Result<Vec<PathBuf>, CliError> {
        let files = self.render(format);
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
        let mut written = Vec::new();
        for (name, bytes) in files {
            let path = dir.join(name);
            fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            written.push(path);
        }
        Ok(written)
    }
}

fn render_csv(manifest: &str, t: &Table) -> Vec<u8> {
    let mut buf = format!("{manifest}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(&t.header).expect("in-memory write");
        for row in &t.rows {
            w.write_record(row).expect("in-memory write");
        }
        w.flush().expect("in-memory write");
    }
    buf
}

fn render_text(manifest: &str, t: &Table) -> Vec<u8> {
    let mut s = format!("{manifest}\n");
    for (i, row) in t.rows.iter().enumerate() {
        s.push_str(&format!("\n[{} {i}]\n", t.name));
        for (k, v) in t.header.iter().zip(row) {
            s.push_str(&format!("{k} = {v}\n"));
        }
    }
    s.into_bytes()
}

/// Manifest line, header, rows.
pub type ParsedCsv = (String, Vec<String>, Vec<Vec<String>>);

/// Reads a CSV artifact back.
pub fn read_csv(bytes: &[u8]) -> Result<ParsedCsv, csv::Error> {
    let text = String::from_utf8_lossy(bytes);
    let manifest = text.lines().next().unwrap_or_default().to_string();
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(bytes);
    let header = r.headers()?.iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.map(|r| r.iter().map(String::from).collect())).collect::<Result<_, _>>()?;
    Ok((manifest, header, rows))
}
