//! Embedding interchange: the `PECOEMB1` binary format plus CSV and JSONL
//! ingestion.
//!
//! Binary layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   "PECOEMB1"
//! version      u32       1
//! n            u64       number of examples
//! dim          u32       embedding dimension
//! label_count  u8        3
//! labels       n bytes   label codes 0/1/2
//! vectors      n*dim     f32, row-major
//! id flag      u8        0 = no ids, 1 = ids follow
//! ids          n times   u32 byte length + UTF-8 bytes
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::Deserialize;

use crate::dataset::{EmbeddingDataset, Label, NUM_LABELS};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PECOEMB1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 8 + 4 + 8 + 4 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingFileHeader {
    pub version: u32,
    pub n: u64,
    pub dim: u32,
    pub label_count: u8,
}

impl EmbeddingFileHeader {
    fn to_bytes(self) -> [u8; HEADER_LEN] {
        let mut out = [0u8; HEADER_LEN];
        out[..8].copy_from_slice(MAGIC);
        out[8..12].copy_from_slice(&self.version.to_le_bytes());
        out[12..20].copy_from_slice(&self.n.to_le_bytes());
        out[20..24].copy_from_slice(&self.dim.to_le_bytes());
        out[24] = self.label_count;
        out
    }
}

/// Serialize `dataset` to `sink`. Returns the number of bytes written.
pub fn write_embeddings<W: Write>(dataset: &EmbeddingDataset, sink: W) -> Result<u64> {
    let mut sink = BufWriter::new(sink);
    let dim = u32::try_from(dataset.dim())
        .map_err(|_| Error::param(format!("dimension {} does not fit in u32", dataset.dim())))?;
    let header = EmbeddingFileHeader {
        version: VERSION,
        n: dataset.len() as u64,
        dim,
        label_count: NUM_LABELS as u8,
    };
    let mut written = 0u64;
    let mut put = |sink: &mut BufWriter<W>, bytes: &[u8]| -> Result<()> {
        sink.write_all(bytes)?;
        written += bytes.len() as u64;
        Ok(())
    };

    put(&mut sink, &header.to_bytes())?;
    let codes: Vec<u8> = dataset.labels().iter().map(|l| l.code()).collect();
    put(&mut sink, &codes)?;
    for row in dataset.vectors().rows() {
        for v in row.iter() {
            put(&mut sink, &v.to_le_bytes())?;
        }
    }
    match dataset.ids() {
        None => put(&mut sink, &[0u8])?,
        Some(ids) => {
            put(&mut sink, &[1u8])?;
            for id in ids {
                let len = u32::try_from(id.len())
                    .map_err(|_| Error::param("id longer than u32::MAX bytes"))?;
                put(&mut sink, &len.to_le_bytes())?;
                put(&mut sink, id.as_bytes())?;
            }
        }
    }
    sink.flush()?;
    Ok(written)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.remaining() < len {
            return Err(Error::Truncation(format!(
                "{what}: need {len} bytes, {} remain",
                self.remaining()
            )));
        }
        let out = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Parse a `PECOEMB1` stream. The format carries no dataset name or split,
/// so both come back empty; [`read_path`] fills the name from the file stem.
pub fn read_embeddings<R: Read>(mut source: R) -> Result<EmbeddingDataset> {
    let mut buf = Vec::new();
    source.read_to_end(&mut buf)?;
    parse_embeddings(&buf)
}

pub fn parse_embeddings(buf: &[u8]) -> Result<EmbeddingDataset> {
    let probe = buf.len().min(MAGIC.len());
    if buf[..probe] != MAGIC[..probe] {
        return Err(Error::format("bad magic, expected \"PECOEMB1\""));
    }
    let mut cur = Cursor { buf, pos: 0 };
    cur.take(MAGIC.len(), "magic")?;
    let version = cur.u32("version")?;
    let n = cur.u64("n")?;
    let dim = cur.u32("dim")?;
    let label_count = cur.u8("label_count")?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported version {version}")));
    }
    if label_count as usize != NUM_LABELS {
        return Err(Error::format(format!("label_count {label_count}, expected {NUM_LABELS}")));
    }
    if dim == 0 {
        return Err(Error::format("dim must be at least 1"));
    }

    // Size checks happen before any allocation so a hostile header cannot
    // request gigabytes.
    let n_usize = usize::try_from(n).map_err(|_| Error::Truncation(format!("n={n} too large")))?;
    let dim = dim as usize;
    let float_bytes = n_usize
        .checked_mul(dim)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::Truncation(format!("n={n} x dim={dim} overflows")))?;
    let body = n_usize
        .checked_add(float_bytes)
        .ok_or_else(|| Error::Truncation("body size overflows".into()))?;
    if cur.remaining() < body {
        return Err(Error::Truncation(format!(
            "header claims n={n}, dim={dim} ({body} body bytes) but only {} remain",
            cur.remaining()
        )));
    }

    let labels = cur
        .take(n_usize, "labels")?
        .iter()
        .map(|&c| Label::from_code(c))
        .collect::<Result<Vec<_>>>()?;
    let floats: Vec<f32> = cur
        .take(float_bytes, "vectors")?
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let vectors = Array2::from_shape_vec((n_usize, dim), floats)
        .map_err(|e| Error::format(e.to_string()))?;

    let ids = match cur.u8("id flag")? {
        0 => None,
        1 => {
            let mut ids = Vec::with_capacity(n_usize.min(cur.remaining() / 4));
            for i in 0..n_usize {
                let len = cur.u32("id length")? as usize;
                let bytes = cur.take(len, "id bytes")?;
                let id = std::str::from_utf8(bytes)
                    .map_err(|_| Error::format(format!("id {i} is not valid UTF-8")))?;
                ids.push(id.to_owned());
            }
            Some(ids)
        }
        other => return Err(Error::format(format!("id flag {other}, expected 0 or 1"))),
    };
    if cur.remaining() != 0 {
        return Err(Error::format(format!("{} trailing bytes after id block", cur.remaining())));
    }
    EmbeddingDataset::new("", "", ids, labels, vectors)
}

fn parse_component(raw: &str, row: usize, col: &str) -> Result<f32> {
    let v: f32 = raw
        .trim()
        .parse()
        .map_err(|_| Error::format(format!("row {row}, column {col}: {raw:?} is not a number")))?;
    if !v.is_finite() {
        return Err(Error::Value(format!("row {row}, column {col}: non-finite value {raw:?}")));
    }
    Ok(v)
}

/// Read the `id?,label,v0..v{D-1}` CSV schema. Columns are located by header
/// name; vector columns must be numbered contiguously from `v0`.
pub fn read_csv<R: Read>(source: R) -> Result<EmbeddingDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header = reader.headers().map_err(csv_error)?.clone();

    let find = |name: &str| header.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let id_col = find("id");
    let label_col = find("label").ok_or_else(|| Error::format("CSV header has no label column"))?;
    let mut vec_cols = Vec::new();
    while let Some(pos) = find(&format!("v{}", vec_cols.len())) {
        vec_cols.push(pos);
    }
    if vec_cols.is_empty() {
        return Err(Error::format("CSV header has no v0 column"));
    }
    let expected_cols = vec_cols.len() + 1 + usize::from(id_col.is_some());
    if header.len() != expected_cols {
        return Err(Error::format(format!(
            "CSV header has {} columns; expected id?, label, v0..v{}",
            header.len(),
            vec_cols.len() - 1
        )));
    }

    let dim = vec_cols.len();
    let mut ids = id_col.map(|_| Vec::new());
    let mut labels = Vec::new();
    let mut floats = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        if let (Some(ids), Some(col)) = (ids.as_mut(), id_col) {
            ids.push(record[col].to_owned());
        }
        labels.push(record[label_col].parse::<Label>()?);
        for (j, &col) in vec_cols.iter().enumerate() {
            floats.push(parse_component(&record[col], row, &format!("v{j}"))?);
        }
    }
    let vectors = Array2::from_shape_vec((labels.len(), dim), floats)
        .map_err(|e| Error::format(e.to_string()))?;
    EmbeddingDataset::new("", "", ids, labels, vectors)
}

fn csv_error(e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        },
        _ => Error::format(format!("CSV: {e}")),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonlRow {
    #[serde(default)]
    id: Option<serde_json::Value>,
    label: serde_json::Value,
    vector: Vec<f64>,
}

fn json_label(value: &serde_json::Value) -> Result<Label> {
    match value {
        serde_json::Value::String(s) => s.parse(),
        serde_json::Value::Number(n) => match n.as_u64() {
            Some(code) if code <= u8::MAX as u64 => Label::from_code(code as u8),
            _ => Err(Error::LabelCode(format!("label code {n} is not in 0..=2"))),
        },
        other => Err(Error::LabelCode(format!("unsupported label value {other}"))),
    }
}

/// Read one `{"id":…, "label":…, "vector":[…]}` object per line. Blank lines
/// are skipped; ids must be present on every row or on none.
pub fn read_jsonl<R: Read>(source: R) -> Result<EmbeddingDataset> {
    let mut text = String::new();
    BufReader::new(source).read_to_string(&mut text)?;

    let mut ids: Vec<String> = Vec::new();
    let mut with_ids = None;
    let mut labels = Vec::new();
    let mut floats = Vec::new();
    let mut dim = None;
    for (lineno, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: JsonlRow = serde_json::from_str(line)
            .map_err(|e| Error::format(format!("line {}: {e}", lineno + 1)))?;
        let has_id = row.id.is_some();
        if *with_ids.get_or_insert(has_id) != has_id {
            return Err(Error::format(format!("line {}: ids must be on all rows or none", lineno + 1)));
        }
        if let Some(id) = row.id {
            ids.push(match id {
                serde_json::Value::String(s) => s,
                other => other.to_string(),
            });
        }
        labels.push(json_label(&row.label)?);
        let d = *dim.get_or_insert(row.vector.len());
        if row.vector.len() != d {
            return Err(Error::format(format!(
                "line {}: vector has {} entries, expected {d}",
                lineno + 1,
                row.vector.len()
            )));
        }
        for v in row.vector {
            let narrowed = v as f32;
            if !narrowed.is_finite() {
                return Err(Error::Value(format!("line {}: value {v} is not a finite f32", lineno + 1)));
            }
            floats.push(narrowed);
        }
    }
    let dim = dim.ok_or_else(|| Error::format("JSONL input has no rows, dimension unknown"))?;
    let vectors = Array2::from_shape_vec((labels.len(), dim), floats)
        .map_err(|e| Error::format(e.to_string()))?;
    EmbeddingDataset::new("", "", with_ids.unwrap_or(false).then_some(ids), labels, vectors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Binary,
    Csv,
    Jsonl,
}

impl InputFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("csv") => InputFormat::Csv,
            Some("jsonl") | Some("json") | Some("ndjson") => InputFormat::Jsonl,
            _ => InputFormat::Binary,
        }
    }
}

/// Read a dataset from disk, picking the format from the file extension.
/// The dataset name defaults to the file stem.
pub fn read_path(path: &Path) -> Result<EmbeddingDataset> {
    let file = File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    let dataset = match InputFormat::from_path(path) {
        InputFormat::Binary => read_embeddings(BufReader::new(file))?,
        InputFormat::Csv => read_csv(BufReader::new(file))?,
        InputFormat::Jsonl => read_jsonl(file)?,
    };
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset").to_owned();
    Ok(dataset.with_name(stem))
}

pub fn write_path(dataset: &EmbeddingDataset, path: &Path) -> Result<u64> {
    write_embeddings(dataset, File::create(path)?)
}
