//! Embedding dataset files.
//!
//! Binary layout (little-endian):
//!
//! ```text
//! "EMB1"            4 bytes magic
//! version           u8 (= 1)
//! class_count       u32
//! per class:
//!     n_c           u32
//!     d             u32
//!     values        n_c·d f32, row-major
//! ```
//!
//! Labels are implicit in class block order. The CSV form has a header
//! `label,f0,...,f{d-1}` and one row per sample.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::EmbeddingDataset;
use crate::error::{Error, FormatError, FormatErrorKind, Result};

pub const FILE_MAGIC: &[u8; 4] = b"EMB1";
pub const FILE_VERSION: u8 = 1;

pub fn write_binary<W: Write>(dataset: &EmbeddingDataset, mut out: W) -> Result<()> {
    out.write_all(FILE_MAGIC)?;
    out.write_all(&[FILE_VERSION])?;
    out.write_all(&(dataset.n_classes() as u32).to_le_bytes())?;
    for c in 0..dataset.n_classes() {
        let block = dataset.class(c);
        out.write_all(&(block.nrows() as u32).to_le_bytes())?;
        out.write_all(&(block.ncols() as u32).to_le_bytes())?;
        for v in block.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let remaining = self.bytes.len() - self.pos;
        if remaining < n {
            return Err(FormatError {
                offset: self.bytes.len(),
                kind: FormatErrorKind::Truncated { needed: n - remaining },
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn inconsistent(offset: usize, msg: impl Into<String>) -> FormatError {
    FormatError { offset, kind: FormatErrorKind::Inconsistent(msg.into()) }
}

pub fn read_binary(bytes: &[u8]) -> Result<EmbeddingDataset> {
    let mut cur = Cursor { bytes, pos: 0 };
    let magic = cur.take(4).map_err(|_| FormatError { offset: 0, kind: FormatErrorKind::BadMagic })?;
    if magic != FILE_MAGIC {
        return Err(FormatError { offset: 0, kind: FormatErrorKind::BadMagic }.into());
    }
    let version = cur.take(1)?[0];
    if version != FILE_VERSION {
        return Err(FormatError { offset: 4, kind: FormatErrorKind::UnsupportedVersion(version) }.into());
    }
    let count_at = cur.pos;
    let n_classes = cur.u32()? as usize;
    if n_classes == 0 {
        return Err(inconsistent(count_at, "class count is zero").into());
    }
    let mut classes = Vec::with_capacity(n_classes.min(1 << 16));
    let mut dim = None;
    for c in 0..n_classes {
        let header_at = cur.pos;
        let n = cur.u32()? as usize;
        let d = cur.u32()? as usize;
        if n == 0 || d == 0 {
            return Err(inconsistent(header_at, format!("class {c} has shape {n}x{d}")).into());
        }
        if let Some(expected) = dim {
            if expected != d {
                return Err(inconsistent(header_at, format!("class {c} has dimension {d}, expected {expected}")).into());
            }
        }
        dim = Some(d);
        let values_at = cur.pos;
        let len = n
            .checked_mul(d)
            .and_then(|v| v.checked_mul(4))
            .ok_or_else(|| inconsistent(header_at, "class too large"))?;
        let raw = cur.take(len)?;
        let values: Vec<f32> =
            raw.chunks_exact(4).map(|ch| f32::from_le_bytes(ch.try_into().expect("4 bytes"))).collect();
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(inconsistent(values_at + 4 * bad, "non-finite value").into());
        }
        classes.push(Array2::from_shape_vec((n, d), values).expect("shape matches length"));
    }
    if cur.pos != bytes.len() {
        return Err(inconsistent(cur.pos, format!("{} trailing bytes", bytes.len() - cur.pos)).into());
    }
    EmbeddingDataset::new(classes)
}

pub fn write_csv<W: Write>(dataset: &EmbeddingDataset, mut out: W) -> Result<()> {
    let header: Vec<String> =
        std::iter::once("label".to_string()).chain((0..dataset.dim()).map(|j| format!("f{j}"))).collect();
    writeln!(out, "{}", header.join(","))?;
    for c in 0..dataset.n_classes() {
        let label = match dataset.class_names() {
            Some(names) => names[c].clone(),
            None => c.to_string(),
        };
        for row in dataset.class(c).rows() {
            write!(out, "{label}")?;
            for v in row {
                // shortest representation that parses back to the same f32
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

fn csv_error(line: usize, msg: impl Into<String>) -> Error {
    FormatError { offset: line, kind: FormatErrorKind::Csv(msg.into()) }.into()
}

/// Parses the CSV form. Integer labels are class ids (every id below the
/// maximum must occur); any other labels are names, ordered by first appearance.
pub fn read_csv<R: Read>(input: R) -> Result<EmbeddingDataset> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines().enumerate();
    let dim = loop {
        let Some((i, line)) = lines.next() else {
            return Err(csv_error(1, "missing header"));
        };
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.trim().split(',').map(str::trim).collect();
        if cols.first() != Some(&"label") || cols.len() < 2 {
            return Err(csv_error(i + 1, "header must be label,f0,...,f{d-1}"));
        }
        for (j, col) in cols[1..].iter().enumerate() {
            if *col != format!("f{j}") {
                return Err(csv_error(i + 1, format!("expected column f{j}, found '{col}'")));
            }
        }
        break cols.len() - 1;
    };

    let mut rows: Vec<(String, Vec<f32>)> = Vec::new();
    for (i, line) in lines {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let mut fields = trimmed.split(',').map(str::trim);
        let label = fields.next().unwrap_or_default().to_string();
        let values = fields
            .map(|f| f.parse::<f32>().map_err(|_| csv_error(i + 1, format!("bad value '{f}'"))))
            .collect::<Result<Vec<f32>>>()?;
        if values.len() != dim {
            return Err(csv_error(i + 1, format!("expected {dim} values, found {}", values.len())));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(csv_error(i + 1, "non-finite value"));
        }
        rows.push((label, values));
    }
    if rows.is_empty() {
        return Err(csv_error(2, "no data rows"));
    }

    let numeric: Option<Vec<usize>> = rows.iter().map(|(l, _)| l.parse::<usize>().ok()).collect();
    let (ids, names) = match numeric {
        Some(ids) => (ids, None),
        None => {
            let mut names: Vec<String> = Vec::new();
            let ids = rows
                .iter()
                .map(|(l, _)| match names.iter().position(|n| n == l) {
                    Some(p) => p,
                    None => {
                        names.push(l.clone());
                        names.len() - 1
                    }
                })
                .collect();
            (ids, Some(names))
        }
    };
    let n_classes = ids.iter().max().map_or(0, |m| m + 1);
    let mut buckets: Vec<Vec<f32>> = vec![Vec::new(); n_classes];
    for (id, (_, values)) in ids.iter().zip(&rows) {
        buckets[*id].extend_from_slice(values);
    }
    if let Some(missing) = buckets.iter().position(Vec::is_empty) {
        return Err(csv_error(1, format!("class {missing} has no rows")));
    }
    let classes = buckets
        .into_iter()
        .map(|v| {
            let n = v.len() / dim;
            Array2::from_shape_vec((n, dim), v).expect("shape matches length")
        })
        .collect();
    let dataset = EmbeddingDataset::new(classes)?;
    match names {
        Some(names) => dataset.with_class_names(names),
        None => Ok(dataset),
    }
}

fn is_csv(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Loads an embedding file; `.csv` paths use the CSV form, anything else the
/// binary form. The dataset is named after the file stem.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingDataset> {
    let path = path.as_ref();
    let dataset = if is_csv(path) { read_csv(fs::File::open(path)?)? } else { read_binary(&fs::read(path)?)? };
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(dataset.with_name(name))
}

/// Saves in the binary form.
pub fn save_embeddings(dataset: &EmbeddingDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write_binary(dataset, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn save_embeddings_csv(dataset: &EmbeddingDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write_csv(dataset, &mut out)?;
    out.flush()?;
    Ok(())
}
