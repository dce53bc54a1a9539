//! CSV persistence. Every file has a header row and ends with one metadata
//! comment line `# key=value key=value ...`.
//!
//! Floats are written in Rust's shortest round-trip form, so a written file
//! reads back bit-for-bit and identical inputs give identical bytes.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{bail, PcoError, Result};
use crate::penalty::{MomentsEntry, MomentsTable, NoiseMoments};
use crate::sequence::{DyadicIndex, Model, ObservationSet, SignalSequence};

/// Ordered `key=value` pairs of the trailing comment line.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metadata {
    pairs: Vec<(String, String)>,
}

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a pair; keys and values must not contain whitespace or `=`.
    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.pairs.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn render(&self) -> String {
        let body: Vec<String> = self.pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("# {}", body.join(" "))
    }

    pub fn parse(line: &str) -> Result<Self> {
        let body = line
            .trim()
            .strip_prefix('#')
            .ok_or_else(|| PcoError::Input(format!("metadata line must start with '#': {line:?}")))?;
        let mut pairs = Vec::new();
        for tok in body.split_whitespace() {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| PcoError::Input(format!("bad metadata token {tok:?}")))?;
            pairs.push((k.to_string(), v.to_string()));
        }
        Ok(Self { pairs })
    }
}

/// A header plus string rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<S: ToString>(&mut self, row: impl IntoIterator<Item = S>) {
        self.rows.push(row.into_iter().map(|c| c.to_string()).collect());
    }
}

/// Writes the table followed by the metadata line.
pub fn write_table<W: Write>(out: W, table: &CsvTable, meta: &Metadata) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(&table.header)?;
    for row in &table.rows {
        wtr.write_record(row)?;
    }
    wtr.flush()?;
    let mut inner = wtr.into_inner().map_err(|e| PcoError::Io(e.into_error()))?;
    writeln!(inner, "{}", meta.render())?;
    Ok(())
}

pub fn write_table_file(path: &Path, table: &CsvTable, meta: &Metadata) -> Result<()> {
    write_table(File::create(path)?, table, meta)
}

/// Reads a table, returning the last metadata line if any.
pub fn read_table<R: Read>(input: R) -> Result<(CsvTable, Option<Metadata>)> {
    let mut text = String::new();
    BufReader::new(input).read_to_string(&mut text)?;
    let meta = text
        .lines()
        .rev()
        .find(|l| l.trim_start().starts_with('#'))
        .map(Metadata::parse)
        .transpose()?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok((CsvTable { header, rows }, meta))
}

pub fn read_table_file(path: &Path) -> Result<(CsvTable, Option<Metadata>)> {
    read_table(File::open(path)?)
}

fn column(table: &CsvTable, name: &str) -> Result<usize> {
    table
        .header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| PcoError::Input(format!("missing column {name:?}")))
}

fn parse_cell<T: std::str::FromStr>(cell: &str, what: &str, line: usize) -> Result<T> {
    cell.parse()
        .map_err(|_| PcoError::Input(format!("row {line}: bad {what} {cell:?}")))
}

/// `(j, k, value)` triples in flat order.
pub fn signal_table(values: &[f64], value_name: &str) -> CsvTable {
    let mut t = CsvTable::new(&["j", "k", value_name]);
    for (flat, v) in values.iter().enumerate() {
        let idx = DyadicIndex::from_flat(flat);
        t.push([idx.j.to_string(), idx.k.to_string(), v.to_string()]);
    }
    t
}

fn dyadic_values(table: &CsvTable, value_name: &str) -> Result<Vec<f64>> {
    let (cj, ck, cv) = (column(table, "j")?, column(table, "k")?, column(table, value_name)?);
    let mut entries = Vec::with_capacity(table.rows.len());
    for (line, row) in table.rows.iter().enumerate() {
        let j: i32 = parse_cell(&row[cj], "level", line + 2)?;
        let k: usize = parse_cell(&row[ck], "position", line + 2)?;
        let v: f64 = parse_cell(&row[cv], value_name, line + 2)?;
        let idx = DyadicIndex::new(j, k).map_err(|e| PcoError::Input(format!("row {}: {e}", line + 2)))?;
        entries.push((idx.flat(), v));
    }
    let len = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
    if len == 0 {
        bail!(Input, "no coefficients");
    }
    let len = len.next_power_of_two().max(2);
    let mut out = vec![0.0; len];
    for (flat, v) in entries {
        out[flat] = v;
    }
    Ok(out)
}

pub fn write_signal<W: Write>(out: W, theta: &SignalSequence, meta: &Metadata) -> Result<()> {
    write_table(out, &signal_table(theta.values(), "theta"), meta)
}

/// Reads `(j, k, theta)`; absent coordinates are zero and the length is
/// rounded up to a whole number of levels.
pub fn read_signal<R: Read>(input: R) -> Result<SignalSequence> {
    let (t, _) = read_table(input)?;
    Ok(SignalSequence::new(dyadic_values(&t, "theta")?))
}

/// Observations; `ε` goes into the metadata line.
pub fn write_observations<W: Write>(out: W, obs: &ObservationSet, meta: &Metadata) -> Result<()> {
    let meta = meta.clone().with("epsilon", obs.epsilon());
    write_table(out, &signal_table(obs.y(), "y"), &meta)
}

pub fn read_observations<R: Read>(input: R) -> Result<ObservationSet> {
    let (t, meta) = read_table(input)?;
    let eps: f64 = meta
        .as_ref()
        .and_then(|m| m.get("epsilon"))
        .ok_or_else(|| PcoError::Input("observation file lacks epsilon metadata".into()))
        .and_then(|v| parse_cell(v, "epsilon", 0))?;
    ObservationSet::dyadic(dyadic_values(&t, "y")?, eps)
}

/// Selected indices as `(j, k)` rows.
pub fn model_table(m: &Model) -> CsvTable {
    let mut t = CsvTable::new(&["j", "k"]);
    for idx in m.indices() {
        t.push([idx.j.to_string(), idx.k.to_string()]);
    }
    t
}

pub fn read_model<R: Read>(input: R, n: usize) -> Result<Model> {
    let (t, _) = read_table(input)?;
    let (cj, ck) = (column(&t, "j")?, column(&t, "k")?);
    let mut idx = Vec::new();
    for (line, row) in t.rows.iter().enumerate() {
        let j = parse_cell(&row[cj], "level", line + 2)?;
        let k = parse_cell(&row[ck], "position", line + 2)?;
        idx.push(DyadicIndex::new(j, k)?);
    }
    Model::from_indices(n, idx)
}

const MOMENTS_HEADER: [&str; 7] = ["distribution", "p", "sigma_p", "c1", "c2", "kappa_p", "calibration_date"];

pub fn moments_table(table: &MomentsTable) -> CsvTable {
    let mut t = CsvTable::new(&MOMENTS_HEADER);
    for e in &table.entries {
        let m = &e.moments;
        t.push([
            e.distribution.clone(),
            m.p.to_string(),
            m.sigma_p.to_string(),
            m.c1.to_string(),
            m.c2.to_string(),
            m.kappa_p.to_string(),
            e.calibration_date.clone(),
        ]);
    }
    t
}

/// Reads a moments table; `kappa_p` is recomputed and must agree with the file.
pub fn read_moments<R: Read>(input: R) -> Result<MomentsTable> {
    let (t, _) = read_table(input)?;
    let cols: Vec<usize> = MOMENTS_HEADER.iter().map(|h| column(&t, h)).collect::<Result<_>>()?;
    let mut table = MomentsTable::default();
    for (line, row) in t.rows.iter().enumerate() {
        let l = line + 2;
        let f = |i: usize, what: &str| parse_cell::<f64>(&row[cols[i]], what, l);
        let moments = NoiseMoments::new(f(1, "p")?, f(2, "sigma_p")?, f(3, "c1")?, f(4, "c2")?)?;
        let kappa = f(5, "kappa_p")?;
        if (kappa - moments.kappa_p).abs() > 1e-9 * kappa.abs().max(1.0) {
            bail!(Input, "row {l}: kappa_p {kappa} disagrees with c1, c2 (expected {})", moments.kappa_p);
        }
        table.insert(MomentsEntry {
            distribution: row[cols[0]].clone(),
            moments,
            calibration_date: row[cols[6]].clone(),
        });
    }
    Ok(table)
}

pub fn read_moments_file(path: &Path) -> Result<MomentsTable> {
    read_moments(File::open(path)?)
}

/// Reads `(i, x)` regression responses; rows must be in order `i = 0..n`
/// (or `1..=n`).
pub fn read_responses<R: Read>(input: R) -> Result<Vec<f64>> {
    let (t, _) = read_table(input)?;
    let (ci, cx) = (column(&t, "i")?, column(&t, "x")?);
    let mut xs = Vec::with_capacity(t.rows.len());
    let mut first: Option<usize> = None;
    for (line, row) in t.rows.iter().enumerate() {
        let i: usize = parse_cell(&row[ci], "index", line + 2)?;
        let base = *first.get_or_insert(i);
        if base > 1 || i != base + line {
            bail!(Input, "row {}: index {i} out of sequence", line + 2);
        }
        xs.push(parse_cell(&row[cx], "response", line + 2)?);
    }
    Ok(xs)
}

/// First non-comment line of a file, for quick format checks.
pub fn first_line<R: Read>(input: R) -> Result<String> {
    let mut line = String::new();
    BufReader::new(input).read_line(&mut line)?;
    Ok(line.trim_end().to_string())
}
