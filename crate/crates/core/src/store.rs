//! Embedding stores: a row-major `f32` matrix plus a metadata sidecar.
//!
//! On disk a store is a pair of files. The matrix file starts with a
//! 24-byte header
//!
//! ```text
//! offset  size  field
//!      0     4  magic "CFE1"
//!      4     4  version (u32, = 1)
//!      8     4  dimension (u32)
//!     12     8  row count (u64)
//!     20     1  normalized flag (0 or 1)
//!     21     3  padding (zero)
//! ```
//!
//! followed by `rows * dimension` little-endian `f32` values. The sidecar
//! (`<matrix path>.meta.jsonl`) holds one JSON object per row with
//! `image_id`, `track_id`, `identity`, `source` and `confidence`, in row order.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl::{self, JsonlError};

pub const MAGIC: [u8; 4] = *b"CFE1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
pub const MIN_DIMENSION: usize = 2;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("vector has zero norm")]
    ZeroNorm,
    #[error("vector has a non-finite component")]
    NonFinite,
    #[error("dimension {0} is below the minimum of {MIN_DIMENSION}")]
    DimensionTooSmall(usize),
    #[error("record {image_id} has dimension {found}, store dimension is {expected}")]
    DimensionMismatch {
        image_id: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate image_id {0}")]
    DuplicateImageId(String),
    #[error("record {image_id} has confidence {confidence} outside [0, 1]")]
    InvalidConfidence { image_id: String, confidence: f64 },
    #[error("bad magic {0:?}, expected \"CFE1\"")]
    BadMagic([u8; 4]),
    #[error("unsupported store version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid normalized flag {0}")]
    BadFlag(u8),
    #[error("header declares {header} rows but metadata has {metadata}")]
    RowCountMismatch { header: u64, metadata: usize },
    #[error("matrix truncated: expected {expected} bytes after the header, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("matrix has {extra} trailing bytes after the last row")]
    TrailingBytes { extra: u64 },
    #[error("i/o error on {path}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error(transparent)]
    Metadata(#[from] JsonlError),
}

/// One face crop: metadata plus its feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub image_id: String,
    pub track_id: Option<String>,
    pub identity: Option<String>,
    pub source: String,
    pub confidence: f64,
    pub vector: Vec<f32>,
}

impl EmbeddingRecord {
    pub fn meta(&self) -> RecordMeta {
        RecordMeta {
            image_id: self.image_id.clone(),
            track_id: self.track_id.clone(),
            identity: self.identity.clone(),
            source: self.source.clone(),
            confidence: self.confidence,
        }
    }
}

/// A sidecar line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub image_id: String,
    pub track_id: Option<String>,
    pub identity: Option<String>,
    pub source: String,
    pub confidence: f64,
}

impl RecordMeta {
    fn with_vector(self, vector: Vec<f32>) -> EmbeddingRecord {
        EmbeddingRecord {
            image_id: self.image_id,
            track_id: self.track_id,
            identity: self.identity,
            source: self.source,
            confidence: self.confidence,
            vector,
        }
    }
}

/// Scales `vector` to unit L2 norm.
pub fn normalize(vector: &[f32]) -> Result<Vec<f32>, StoreError> {
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(StoreError::NonFinite);
    }
    let norm = vector
        .iter()
        .map(|&v| f64::from(v) * f64::from(v))
        .sum::<f64>()
        .sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(StoreError::ZeroNorm);
    }
    Ok(vector
        .iter()
        .map(|&v| (f64::from(v) / norm) as f32)
        .collect())
}

/// Dot product accumulated in `f64`, in index order.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

/// Cosine similarity of arbitrary (non-zero) vectors.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    dot(a, b) / (na * nb)
}

/// An immutable set of embedding rows sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dimension: usize,
    normalized: bool,
    records: Vec<EmbeddingRecord>,
}

impl EmbeddingStore {
    /// Validates `records` and, if `normalize_rows`, scales every vector to
    /// unit norm.
    pub fn build(
        dimension: usize,
        records: Vec<EmbeddingRecord>,
        normalize_rows: bool,
    ) -> Result<Self, StoreError> {
        let mut store = Self::from_parts(dimension, false, records)?;
        if normalize_rows {
            for rec in &mut store.records {
                rec.vector = normalize(&rec.vector)?;
            }
            store.normalized = true;
        }
        Ok(store)
    }

    fn from_parts(
        dimension: usize,
        normalized: bool,
        records: Vec<EmbeddingRecord>,
    ) -> Result<Self, StoreError> {
        if dimension < MIN_DIMENSION {
            return Err(StoreError::DimensionTooSmall(dimension));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for rec in &records {
            if rec.vector.len() != dimension {
                return Err(StoreError::DimensionMismatch {
                    image_id: rec.image_id.clone(),
                    expected: dimension,
                    found: rec.vector.len(),
                });
            }
            if !(0.0..=1.0).contains(&rec.confidence) {
                return Err(StoreError::InvalidConfidence {
                    image_id: rec.image_id.clone(),
                    confidence: rec.confidence,
                });
            }
            if !seen.insert(rec.image_id.as_str()) {
                return Err(StoreError::DuplicateImageId(rec.image_id.clone()));
            }
        }
        Ok(Self {
            dimension,
            normalized,
            records,
        })
    }

    /// The same store with unit-norm rows (a no-op if already flagged).
    pub fn into_normalized(self) -> Result<Self, StoreError> {
        if self.normalized {
            return Ok(self);
        }
        Self::build(self.dimension, self.records, true)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[EmbeddingRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<EmbeddingRecord> {
        self.records
    }

    /// Writes the matrix file at `path` and the sidecar next to it.
    pub fn save(&self, path: &Path) -> Result<(), StoreError> {
        let io_err = |source| StoreError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
        w.write_all(&encode_header(
            self.dimension as u32,
            self.records.len() as u64,
            self.normalized,
        ))
        .map_err(io_err)?;
        for rec in &self.records {
            for v in &rec.vector {
                w.write_all(&v.to_le_bytes()).map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)?;

        let metas: Vec<RecordMeta> = self.records.iter().map(EmbeddingRecord::meta).collect();
        jsonl::write(&sidecar_path(path), &metas)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, StoreError> {
        let io_err = |source| StoreError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut bytes = Vec::new();
        BufReader::new(File::open(path).map_err(io_err)?)
            .read_to_end(&mut bytes)
            .map_err(io_err)?;
        let header = decode_header(&bytes)?;

        let metas: Vec<RecordMeta> = jsonl::read(&sidecar_path(path))?;
        if header.rows != metas.len() as u64 {
            return Err(StoreError::RowCountMismatch {
                header: header.rows,
                metadata: metas.len(),
            });
        }

        let body = &bytes[HEADER_LEN..];
        let expected = header.rows * header.dimension as u64 * 4;
        let actual = body.len() as u64;
        if actual < expected {
            return Err(StoreError::Truncated { expected, actual });
        }
        if actual > expected {
            return Err(StoreError::TrailingBytes {
                extra: actual - expected,
            });
        }

        let dimension = header.dimension as usize;
        let records = if dimension == 0 {
            Vec::new()
        } else {
            body.chunks_exact(dimension * 4)
                .zip(metas)
                .map(|(row, meta)| {
                    let vector = row
                        .chunks_exact(4)
                        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                        .collect();
                    meta.with_vector(vector)
                })
                .collect()
        };
        Self::from_parts(dimension, header.normalized, records)
    }
}

/// Sidecar location for a matrix file: `<path>.meta.jsonl`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".meta.jsonl");
    PathBuf::from(name)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub dimension: u32,
    pub rows: u64,
    pub normalized: bool,
}

pub fn encode_header(dimension: u32, rows: u64, normalized: bool) -> [u8; HEADER_LEN] {
    let mut h = [0u8; HEADER_LEN];
    h[0..4].copy_from_slice(&MAGIC);
    h[4..8].copy_from_slice(&VERSION.to_le_bytes());
    h[8..12].copy_from_slice(&dimension.to_le_bytes());
    h[12..20].copy_from_slice(&rows.to_le_bytes());
    h[20] = u8::from(normalized);
    h
}

pub fn decode_header(bytes: &[u8]) -> Result<Header, StoreError> {
    if bytes.len() < HEADER_LEN {
        return Err(StoreError::Truncated {
            expected: HEADER_LEN as u64,
            actual: bytes.len() as u64,
        });
    }
    let magic = [bytes[0], bytes[1], bytes[2], bytes[3]];
    if magic != MAGIC {
        return Err(StoreError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(StoreError::UnsupportedVersion(version));
    }
    let dimension = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    let rows = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let normalized = match bytes[20] {
        0 => false,
        1 => true,
        other => return Err(StoreError::BadFlag(other)),
    };
    Ok(Header {
        dimension,
        rows,
        normalized,
    })
}
