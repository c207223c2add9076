//! CSV and raw-binary feature files.
//!
//! CSV: one sample per row, `d` feature columns followed by an integer label.
//!
//! Binary (all integers and floats little-endian):
//!
//! ```text
//! "PLTR" | u32 version = 1 | u32 N | u32 d | u32 K | N*d f32 features | N u32 labels
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::dataset::FeatureDataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

const MAGIC: &[u8; 4] = b"PLTR";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Binary,
}

impl Format {
    /// `.csv` is CSV, anything else is the binary container.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Binary,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadOptions {
    /// Map the distinct labels present onto `[0, K)` in ascending order.
    /// Without it, any class in `[0, K)` with no samples is an error.
    pub remap: bool,
    /// Skip one header line (CSV only).
    pub header: bool,
}

pub fn load_features(path: &Path, format: Format, opts: LoadOptions) -> Result<FeatureDataset> {
    match format {
        Format::Csv => parse_csv(fs::File::open(path)?, opts),
        Format::Binary => decode_binary(&fs::read(path)?, opts),
    }
}

pub fn parse_csv<R: Read>(reader: R, opts: LoadOptions) -> Result<FeatureDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(opts.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut data = Vec::new();
    let mut raw_labels = Vec::new();
    let mut dim: Option<usize> = None;
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        if record.len() < 2 {
            return Err(Error::MalformedRow {
                row,
                reason: "need at least one feature column and a label".into(),
            });
        }
        let d = record.len() - 1;
        match dim {
            None => dim = Some(d),
            Some(expected) if expected != d => {
                return Err(Error::DimensionMismatch { expected, got: d })
            }
            _ => {}
        }
        for (col, field) in record.iter().take(d).enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::MalformedRow {
                row,
                reason: format!("column {col}: not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::NonFiniteFeature { row, col });
            }
            data.push(v);
        }
        let field = &record[d];
        let label: i64 = field.parse().map_err(|_| Error::MalformedRow {
            row,
            reason: format!("label is not an integer: {field:?}"),
        })?;
        raw_labels.push(label);
    }
    let dim = dim.ok_or(Error::EmptyDataset)?;
    let n = raw_labels.len();
    let features = Matrix::from_vec(n, dim, data)?;

    if opts.remap {
        let (labels, k) = remap_dense(&raw_labels);
        return FeatureDataset::new(features, labels, k);
    }
    let mut labels = Vec::with_capacity(n);
    for (row, &l) in raw_labels.iter().enumerate() {
        if l < 0 || l > u32::MAX as i64 {
            return Err(Error::LabelOutOfRange {
                row,
                label: l,
                num_classes: 0,
            });
        }
        labels.push(l as usize);
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let ds = FeatureDataset::new(features, labels, k)?;
    ds.require_nonempty_classes()?;
    Ok(ds)
}

fn remap_dense(raw: &[i64]) -> (Vec<usize>, usize) {
    let mut index = BTreeMap::new();
    for &l in raw {
        index.entry(l).or_insert(0usize);
    }
    for (i, v) in index.values_mut().enumerate() {
        *v = i;
    }
    let labels = raw.iter().map(|l| index[l]).collect();
    (labels, index.len())
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4-byte slice"))
}

pub fn decode_binary(bytes: &[u8], opts: LoadOptions) -> Result<FeatureDataset> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic { expected: "PLTR" });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedPayload {
            expected: HEADER_LEN,
            got: bytes.len(),
        });
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n = read_u32(bytes, 8) as usize;
    let d = read_u32(bytes, 12) as usize;
    let k = read_u32(bytes, 16) as usize;

    let expected = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_add(n))
        .and_then(|words| words.checked_mul(4))
        .and_then(|b| b.checked_add(HEADER_LEN))
        .unwrap_or(usize::MAX);
    if bytes.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            got: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(Error::TrailingBytes(bytes.len() - expected));
    }
    if n == 0 {
        return Err(Error::EmptyDataset);
    }

    let feat_bytes = &bytes[HEADER_LEN..HEADER_LEN + n * d * 4];
    let mut data = Vec::with_capacity(n * d);
    for (i, chunk) in feat_bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        if !v.is_finite() {
            return Err(Error::NonFiniteFeature {
                row: i / d,
                col: i % d,
            });
        }
        data.push(v as f64);
    }
    let raw_labels: Vec<u32> = bytes[HEADER_LEN + n * d * 4..]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    let features = Matrix::from_vec(n, d, data)?;

    if opts.remap {
        let raw: Vec<i64> = raw_labels.iter().map(|&l| l as i64).collect();
        let (labels, k) = remap_dense(&raw);
        return FeatureDataset::new(features, labels, k);
    }
    let mut labels = Vec::with_capacity(n);
    for (row, &l) in raw_labels.iter().enumerate() {
        if l as usize >= k {
            return Err(Error::LabelOutOfRange {
                row,
                label: l as i64,
                num_classes: k,
            });
        }
        labels.push(l as usize);
    }
    let ds = FeatureDataset::new(features, labels, k)?;
    ds.require_nonempty_classes()?;
    Ok(ds)
}

/// Serializes to the binary container. Features are narrowed to `f32`.
pub fn encode_binary(ds: &FeatureDataset) -> Result<Vec<u8>> {
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::InvalidConfig(format!("{what} does not fit in u32")))
    };
    let (n, d, k) = (
        to_u32(ds.len(), "N")?,
        to_u32(ds.dim(), "d")?,
        to_u32(ds.num_classes(), "K")?,
    );
    let mut out = Vec::with_capacity(HEADER_LEN + ds.len() * (ds.dim() + 1) * 4);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, n, d, k] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in ds.features().as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    for &y in ds.labels() {
        out.extend_from_slice(&(y as u32).to_le_bytes());
    }
    Ok(out)
}

/// Writes headerless CSV using the shortest round-trip float representation.
pub fn write_csv<W: Write>(ds: &FeatureDataset, mut out: W) -> Result<()> {
    for (x, y) in ds.features().iter_rows().zip(ds.labels()) {
        for v in x {
            write!(out, "{v},")?;
        }
        writeln!(out, "{y}")?;
    }
    Ok(())
}
