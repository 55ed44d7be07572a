//! Count-matrix ingestion, checkpoints and the bouncing-ball generator.

mod balls;
mod checkpoint;

pub use balls::{generate_bouncing_balls, simulate_balls, BallConfig, BallState};
pub use checkpoint::{
    load_checkpoint, parse_checkpoint, render_checkpoint, save_checkpoint, Checkpoint, EngineState, RngCursor,
    FORMAT_VERSION,
};

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::{CountMatrix, DataKind, MAX_STEPS, MAX_VOCAB};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFormat {
    /// Header row of time labels, then one row of T counts per word.
    DenseCsv,
    /// `v,t,count` lines with 0-based indices.
    SparseTriplet,
}

impl FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense-csv" | "dense" | "csv" => Ok(Self::DenseCsv),
            "sparse-triplet" | "triplet" | "sparse" => Ok(Self::SparseTriplet),
            other => Err(Error::domain(format!("unknown matrix format '{other}'"))),
        }
    }
}

fn parse_count(field: &str, line: usize) -> Result<u64> {
    let f = field.trim();
    f.parse::<u64>().map_err(|_| {
        if f.starts_with('-') {
            Error::parse(line, format!("negative count '{f}'"))
        } else {
            Error::parse(line, format!("'{f}' is not a nonnegative integer"))
        }
    })
}

fn parse_index(field: &str, line: usize, what: &str) -> Result<usize> {
    let f = field.trim();
    f.parse::<usize>()
        .map_err(|_| Error::parse(line, format!("{what} index '{f}' is not a nonnegative integer")))
}

/// Parse dense CSV text: a header of T time labels followed by V rows of T
/// counts each.
pub fn parse_dense_csv(text: &str, kind: DataKind) -> Result<CountMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let steps = reader
        .headers()
        .map_err(|e| Error::parse(1, e.to_string()))?
        .len();
    if text.trim().is_empty() {
        return Err(Error::parse(1, "missing header row"));
    }
    let mut cells = Vec::new();
    let mut vocab = 0;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != steps {
            return Err(Error::Shape(format!(
                "line {line}: {} fields where the header declares {steps}",
                record.len()
            )));
        }
        for (t, field) in record.iter().enumerate() {
            let c = parse_count(field, line)?;
            if kind == DataKind::Binary && c > 1 {
                return Err(Error::parse(line, format!("binary entry {c} exceeds 1")));
            }
            cells.push((vocab, t, c));
        }
        vocab += 1;
    }
    CountMatrix::from_triplets(vocab, steps, cells, kind)
}

/// Parse triplet text. Dimensions come from a `# shape: V T` header, from
/// `dims`, or else from the largest indices seen; a header that disagrees
/// with `dims` is a structural error. Other `#` lines and blank lines are
/// ignored.
pub fn parse_triplets(text: &str, dims: Option<(usize, usize)>, kind: DataKind) -> Result<CountMatrix> {
    let mut declared: Option<(usize, usize)> = None;
    let mut cells = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        if let Some(comment) = l.strip_prefix('#') {
            if let Some(shape) = comment.trim().strip_prefix("shape:") {
                let parts: Vec<&str> = shape.split_whitespace().collect();
                if parts.len() != 2 {
                    return Err(Error::parse(line, "shape header needs 'V T'"));
                }
                declared = Some((parse_index(parts[0], line, "shape")?, parse_index(parts[1], line, "shape")?));
            }
            continue;
        }
        let fields: Vec<&str> = l.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::parse(line, format!("expected 'v,t,count', got {} fields", fields.len())));
        }
        let v = parse_index(fields[0], line, "word")?;
        let t = parse_index(fields[1], line, "time")?;
        let c = parse_count(fields[2], line)?;
        if kind == DataKind::Binary && c > 1 {
            return Err(Error::parse(line, format!("binary entry {c} exceeds 1")));
        }
        if v >= MAX_VOCAB || t >= MAX_STEPS {
            return Err(Error::Shape(format!("line {line}: index ({v},{t}) exceeds the supported dimensions")));
        }
        cells.push((v, t, c));
    }
    let (vocab, steps) = match (declared, dims) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::Shape(format!("file declares {}x{}, caller expects {}x{}", a.0, a.1, b.0, b.1)))
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => {
            let v = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
            let t = cells.iter().map(|c| c.1 + 1).max().unwrap_or(0);
            (v, t)
        }
    };
    let mut total = 0u64;
    for c in &cells {
        total = total
            .checked_add(c.2)
            .ok_or_else(|| Error::domain("count total overflows"))?;
    }
    CountMatrix::from_triplets(vocab, steps, cells, kind)
}

pub fn load_count_matrix(
    path: &Path,
    format: MatrixFormat,
    kind: DataKind,
    dims: Option<(usize, usize)>,
) -> Result<CountMatrix> {
    let text = std::fs::read_to_string(path)?;
    let m = match format {
        MatrixFormat::DenseCsv => {
            let m = parse_dense_csv(&text, kind)?;
            if let Some(d) = dims {
                if d != (m.vocab(), m.steps()) {
                    return Err(Error::Shape(format!(
                        "file is {}x{}, caller expects {}x{}",
                        m.vocab(),
                        m.steps(),
                        d.0,
                        d.1
                    )));
                }
            }
            m
        }
        MatrixFormat::SparseTriplet => parse_triplets(&text, dims, kind)?,
    };
    Ok(m)
}

pub fn render_dense_csv(x: &CountMatrix) -> String {
    let mut out = String::new();
    let header: Vec<String> = (0..x.steps()).map(|t| format!("t{t}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    let dense = x.to_dense();
    for row in dense.rows() {
        let fields: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn render_triplets(x: &CountMatrix) -> String {
    let mut out = format!("# shape: {} {}\n", x.vocab(), x.steps());
    for (v, t, c) in x.triplets() {
        let _ = writeln!(out, "{v},{t},{c}");
    }
    out
}

pub fn save_count_matrix(x: &CountMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    let text = match format {
        MatrixFormat::DenseCsv => render_dense_csv(x),
        MatrixFormat::SparseTriplet => render_triplets(x),
    };
    std::fs::write(path, text)?;
    Ok(())
}
