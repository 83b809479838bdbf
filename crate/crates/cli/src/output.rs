//! File formats. Every float is written with 17 significant digits so logs
//! round-trip bit for bit; lines end in LF.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use cutexplore::Dataset;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Jsonl,
    Csv,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Jsonl => "jsonl",
            Format::Csv => "csv",
        }
    }

    /// Picks the format from a file extension.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "jsonl" | "json" => Some(Format::Jsonl),
            "csv" => Some(Format::Csv),
            _ => None,
        }
    }
}

/// One admitted point. Warm-up rows carry `parent_id = -1` and
/// `score_at_selection = -1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRow {
    pub id: u64,
    pub iteration: usize,
    pub parent_id: i64,
    pub coords: Vec<f64>,
    pub score_at_selection: f64,
}

pub fn sample_rows(dataset: &Dataset, from: usize) -> Vec<SampleRow> {
    (from..dataset.len())
        .map(|i| {
            let id = i as u64;
            let (parent_id, score_at_selection) = match dataset.parent_of(id) {
                Some((p, s)) => (p as i64, s),
                None => (-1, -1.0),
            };
            SampleRow {
                id,
                iteration: dataset.iteration_of(id).unwrap_or(0),
                parent_id,
                coords: dataset.points()[i].coords.clone(),
                score_at_selection,
            }
        })
        .collect()
}

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// serde_json formatter writing floats as `{:.16e}`.
struct Precise;

impl serde_json::ser::Formatter for Precise {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", float(value))
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

/// Single-line JSON with precise floats.
pub fn json_line<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Precise);
    value.serialize(&mut ser).expect("in-memory JSON serialization");
    String::from_utf8(out).expect("JSON is UTF-8")
}

/// Streams sample rows to a file in either format.
pub struct SampleWriter {
    out: BufWriter<File>,
    format: Format,
    dim: usize,
    header_written: bool,
}

impl SampleWriter {
    pub fn create(path: &Path, format: Format, dim: usize) -> anyhow::Result<Self> {
        let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
        Ok(Self { out: BufWriter::new(file), format, dim, header_written: false })
    }

    pub fn write(&mut self, rows: &[SampleRow]) -> io::Result<()> {
        if self.format == Format::Csv && !self.header_written {
            let mut header = vec!["id".to_owned(), "iteration".to_owned(), "parent_id".to_owned()];
            header.extend((0..self.dim).map(|i| format!("x{i}")));
            header.push("score_at_selection".to_owned());
            writeln!(self.out, "{}", header.join(","))?;
            self.header_written = true;
        }
        for row in rows {
            match self.format {
                Format::Jsonl => writeln!(self.out, "{}", json_line(row))?,
                Format::Csv => {
                    let mut fields = vec![row.id.to_string(), row.iteration.to_string(), row.parent_id.to_string()];
                    fields.extend(row.coords.iter().map(|&c| float(c)));
                    fields.push(float(row.score_at_selection));
                    writeln!(self.out, "{}", fields.join(","))?;
                }
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> io::Result<()> {
        if self.format == Format::Csv && !self.header_written {
            self.write(&[])?;
        }
        self.out.flush()
    }
}

pub fn write_samples(path: &Path, format: Format, dim: usize, rows: &[SampleRow]) -> anyhow::Result<()> {
    let mut w = SampleWriter::create(path, format, dim)?;
    w.write(rows).with_context(|| format!("writing {}", path.display()))?;
    w.finish().with_context(|| format!("writing {}", path.display()))
}

/// Reads a sample log, choosing the format by extension. Malformed input is
/// a configuration error naming the offending line.
pub fn read_samples(path: &Path) -> Result<Vec<SampleRow>, CliError> {
    let name = path.display();
    let format = Format::from_path(path)
        .ok_or_else(|| CliError::Config(format!("{name}: unknown extension (expected .jsonl or .csv)")))?;
    let file = File::open(path).map_err(|e| CliError::Config(format!("cannot read {name}: {e}")))?;
    let rows = match format {
        Format::Jsonl => {
            let mut rows = Vec::new();
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| CliError::Config(format!("{name}: line {}: {e}", n + 1)))?;
                if line.trim().is_empty() {
                    continue;
                }
                let row: SampleRow = serde_json::from_str(&line)
                    .map_err(|e| CliError::Config(format!("{name}: line {}: {e}", n + 1)))?;
                rows.push(row);
            }
            rows
        }
        Format::Csv => read_csv(file, &name.to_string())?,
    };
    if rows.is_empty() {
        return Err(CliError::Config(format!("{name}: no sample rows")));
    }
    let dim = rows[0].coords.len();
    for (i, row) in rows.iter().enumerate() {
        if row.coords.len() != dim || dim == 0 {
            return Err(CliError::Config(format!("{name}: row {}: expected {dim} coordinates", i + 1)));
        }
        if row.coords.iter().any(|c| !c.is_finite()) {
            return Err(CliError::Config(format!("{name}: row {}: non-finite coordinate", i + 1)));
        }
    }
    Ok(rows)
}

fn read_csv(file: File, name: &str) -> Result<Vec<SampleRow>, CliError> {
    let mut reader = csv::Reader::from_reader(file);
    let header = reader.headers().map_err(|e| CliError::Config(format!("{name}: header: {e}")))?.clone();
    let fields: Vec<&str> = header.iter().collect();
    let dim = fields.len().saturating_sub(4);
    let mut expected = vec!["id".to_owned(), "iteration".to_owned(), "parent_id".to_owned()];
    expected.extend((0..dim).map(|i| format!("x{i}")));
    expected.push("score_at_selection".to_owned());
    if fields.len() < 5 || fields != expected {
        return Err(CliError::Config(format!("{name}: line 1: expected header `{}`", expected.join(","))));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Config(format!("{name}: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |what: &str| CliError::Config(format!("{name}: line {line}: bad {what}"));
        let get = |i: usize| record.get(i).unwrap_or("");
        let coords = (0..dim)
            .map(|i| get(3 + i).parse::<f64>().map_err(|_| bad(&format!("x{i}"))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(SampleRow {
            id: get(0).parse().map_err(|_| bad("id"))?,
            iteration: get(1).parse().map_err(|_| bad("iteration"))?,
            parent_id: get(2).parse().map_err(|_| bad("parent_id"))?,
            coords,
            score_at_selection: get(3 + dim).parse().map_err(|_| bad("score_at_selection"))?,
        });
    }
    Ok(rows)
}
