//! Matrix I/O: Matrix Market (array and coordinate), headerless CSV, and a
//! JSON sidecar describing generated instances.
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! matrix written and read back is bit-identical.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

fn parse_value(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(format!("line {line}: cannot parse '{tok}' as a number")))
}

fn parse_index(tok: &str, bound: usize, line: usize) -> Result<usize> {
    let i: usize = tok
        .parse()
        .map_err(|_| parse_err(format!("line {line}: cannot parse '{tok}' as an index")))?;
    if i == 0 || i > bound {
        return Err(parse_err(format!("line {line}: index {i} outside 1..={bound}")));
    }
    Ok(i - 1)
}

/// Reads a real Matrix Market matrix in array or coordinate format
/// (general, symmetric or skew-symmetric; pattern entries read as 1).
pub fn read_matrix_market<R: Read>(reader: R) -> Result<DenseMatrix> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| parse_err("empty input"))?;
    let header = header?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_lowercase).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(parse_err(format!("bad Matrix Market header: '{header}'")));
    }
    let coordinate = match fields[2].as_str() {
        "array" => false,
        "coordinate" => true,
        other => return Err(parse_err(format!("unsupported format '{other}'"))),
    };
    let pattern = match fields[3].as_str() {
        "real" | "integer" | "double" => false,
        "pattern" if coordinate => true,
        other => return Err(parse_err(format!("unsupported field '{other}'"))),
    };
    let symmetry = match fields[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(parse_err(format!("unsupported symmetry '{other}'"))),
    };

    let mut body = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        body.push((idx + 1, t.to_string()));
    }
    let mut body = body.into_iter();
    let (size_line, size) = body.next().ok_or_else(|| parse_err("missing size line"))?;
    let dims: Vec<&str> = size.split_whitespace().collect();
    let expect = if coordinate { 3 } else { 2 };
    if dims.len() != expect {
        return Err(parse_err(format!("line {size_line}: expected {expect} size fields")));
    }
    let n = parse_index_count(dims[0], size_line)?;
    let d = parse_index_count(dims[1], size_line)?;
    if symmetry != Symmetry::General && n != d {
        return Err(parse_err("symmetric matrix must be square"));
    }
    let mut m = vec![0.0; n * d];

    if coordinate {
        let nnz = parse_index_count(dims[2], size_line)?;
        let mut seen = 0;
        for (line, text) in body {
            let toks: Vec<&str> = text.split_whitespace().collect();
            let want = if pattern { 2 } else { 3 };
            if toks.len() != want {
                return Err(parse_err(format!("line {line}: expected {want} fields")));
            }
            let i = parse_index(toks[0], n, line)?;
            let j = parse_index(toks[1], d, line)?;
            let v = if pattern { 1.0 } else { parse_value(toks[2], line)? };
            m[i * d + j] = v;
            match symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => m[j * d + i] = v,
                Symmetry::SkewSymmetric => m[j * d + i] = -v,
            }
            seen += 1;
        }
        if seen != nnz {
            return Err(parse_err(format!("expected {nnz} entries, found {seen}")));
        }
    } else {
        let mut values = Vec::new();
        for (line, text) in body {
            for tok in text.split_whitespace() {
                values.push(parse_value(tok, line)?);
            }
        }
        // Column-major; symmetric storage holds the lower triangle only.
        let positions: Vec<(usize, usize)> = match symmetry {
            Symmetry::General => (0..d).flat_map(|j| (0..n).map(move |i| (i, j))).collect(),
            Symmetry::Symmetric => (0..d).flat_map(|j| (j..n).map(move |i| (i, j))).collect(),
            Symmetry::SkewSymmetric => (0..d).flat_map(|j| (j + 1..n).map(move |i| (i, j))).collect(),
        };
        if values.len() != positions.len() {
            return Err(parse_err(format!(
                "expected {} values, found {}",
                positions.len(),
                values.len()
            )));
        }
        for ((i, j), v) in positions.into_iter().zip(values) {
            m[i * d + j] = v;
            match symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => m[j * d + i] = v,
                Symmetry::SkewSymmetric => m[j * d + i] = -v,
            }
        }
    }
    DenseMatrix::new(n, d, m)
}

fn parse_index_count(tok: &str, line: usize) -> Result<usize> {
    tok.parse()
        .map_err(|_| parse_err(format!("line {line}: cannot parse '{tok}' as a size")))
}

/// Writes a dense Matrix Market array (column-major, general).
pub fn write_matrix_market<W: Write>(m: &DenseMatrix, mut writer: W) -> Result<()> {
    writeln!(writer, "%%MatrixMarket matrix array real general")?;
    writeln!(writer, "{} {}", m.rows(), m.cols())?;
    for j in 0..m.cols() {
        for i in 0..m.rows() {
            writeln!(writer, "{}", m.get(i, j))?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Reads a headerless CSV of numbers, one matrix row per record.
pub fn read_csv<R: Read>(reader: R) -> Result<DenseMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut rows = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| parse_err(format!("CSV record {}: {e}", idx + 1)))?;
        let row = record
            .iter()
            .map(|tok| parse_value(tok, idx + 1))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    DenseMatrix::from_rows(&rows)
}

pub fn write_csv<W: Write>(m: &DenseMatrix, writer: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for i in 0..m.rows() {
        wtr.write_record(m.row(i).iter().map(|v| v.to_string()))
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a matrix file, choosing the format by extension (`.csv` or
/// Matrix Market otherwise).
pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let file = fs::File::open(path)?;
    if is_csv(path) {
        read_csv(file)
    } else {
        read_matrix_market(file)
    }
}

pub fn write_matrix(m: &DenseMatrix, path: &Path) -> Result<()> {
    let file = std::io::BufWriter::new(fs::File::create(path)?);
    if is_csv(path) {
        write_csv(m, file)
    } else {
        write_matrix_market(m, file)
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Description of a generated instance, stored next to its matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSidecar {
    pub generator: String,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub k: usize,
    pub p: f64,
    /// ‖E‖_p of the planted noise, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_norm_p: Option<f64>,
}

impl InstanceSidecar {
    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(|e| parse_err(e.to_string()))?;
        fs::write(path, json + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| parse_err(format!("{}: {e}", path.display())))
    }
}
