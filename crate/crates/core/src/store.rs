//! Directory archives of binary64 matrices with a JSON manifest.
//!
//! Layout: `manifest.json` plus one `<name>.rommat` blob per entry. A blob is
//! the tag `ROMMAT01`, rows and cols as little-endian `u64`, then the values
//! row-major as little-endian binary64.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crc::{Crc, CRC_64_XZ};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::linalg::Tensor3;
use crate::scalar::Real;

pub const MAGIC: &[u8; 8] = b"ROMMAT01";
pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";
const HEADER: usize = 24;

static CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

/// Dense row-major binary64 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixBlob {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixBlob {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(RomError::shape("matrix blob payload", rows * cols, data.len()));
        }
        Ok(MatrixBlob { rows, cols, data })
    }

    pub fn from_matrix<T: Real>(m: &DMatrix<T>) -> Self {
        let (rows, cols) = m.shape();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(m[(i, j)].to_f64_lossy());
            }
        }
        MatrixBlob { rows, cols, data }
    }

    pub fn to_matrix<T: Real>(&self) -> DMatrix<T> {
        DMatrix::from_fn(self.rows, self.cols, |i, j| T::lit(self.data[i * self.cols + j]))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER + 8 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.rows as u64).to_le_bytes());
        out.extend_from_slice(&(self.cols as u64).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER || &bytes[..8] != MAGIC {
            return Err(RomError::Archive("missing ROMMAT01 header".into()));
        }
        let word = |k: usize| u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().unwrap());
        let (rows, cols) = (word(1) as usize, word(2) as usize);
        let n = rows
            .checked_mul(cols)
            .ok_or_else(|| RomError::Archive("matrix dimensions overflow".into()))?;
        if bytes.len() != HEADER + 8 * n {
            return Err(RomError::Archive(format!(
                "payload holds {} bytes, a {rows}x{cols} matrix needs {}",
                bytes.len() - HEADER,
                8 * n
            )));
        }
        let data: Vec<f64> = bytes[HEADER..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if data.iter().any(|v| !v.is_finite()) {
            return Err(RomError::NonFinite("archived matrix".into()));
        }
        Ok(MatrixBlob { rows, cols, data })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryKind {
    Matrix,
    Vector,
    /// Stored as `n0 × (n1·n2)`.
    Tensor3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryMeta {
    pub kind: EntryKind,
    pub shape: Vec<usize>,
    /// CRC-64/XZ of the blob file, hex.
    pub checksum: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub schema_version: u32,
    pub entries: BTreeMap<String, EntryMeta>,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArchiveItem {
    Matrix(DMatrix<f64>),
    Vector(Vec<f64>),
    Tensor3(Tensor3<f64>),
}

impl ArchiveItem {
    fn blob(&self) -> (EntryKind, Vec<usize>, MatrixBlob) {
        match self {
            ArchiveItem::Matrix(m) => (EntryKind::Matrix, vec![m.nrows(), m.ncols()], MatrixBlob::from_matrix(m)),
            ArchiveItem::Vector(v) => (EntryKind::Vector, vec![v.len()], MatrixBlob {
                rows: v.len(),
                cols: 1,
                data: v.clone(),
            }),
            ArchiveItem::Tensor3(t) => (EntryKind::Tensor3, t.dims().to_vec(), MatrixBlob::from_matrix(&t.to_matrix())),
        }
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && !name.starts_with('.') && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn blob_path(root: &Path, name: &str) -> PathBuf {
    root.join(format!("{name}.rommat"))
}

/// Writes `items` as a fresh archive at `path`, replacing any previous one.
pub fn save_archive(path: impl AsRef<Path>, items: &[(String, ArchiveItem)], metadata: BTreeMap<String, serde_json::Value>) -> Result<()> {
    let root = path.as_ref();
    let mut entries = BTreeMap::new();
    for (name, _) in items {
        if !valid_name(name) {
            return Err(RomError::Archive(format!("invalid entry name `{name}`")));
        }
        if entries.insert(name.clone(), ()).is_some() {
            return Err(RomError::Archive(format!("duplicate entry name `{name}`")));
        }
    }
    fs::create_dir_all(root)?;
    for entry in fs::read_dir(root)? {
        let p = entry?.path();
        if p.extension().is_some_and(|e| e == "rommat") || p.file_name().is_some_and(|f| f == MANIFEST) {
            fs::remove_file(p)?;
        }
    }
    let mut manifest = ArchiveManifest {
        schema_version: SCHEMA_VERSION,
        entries: BTreeMap::new(),
        metadata,
    };
    for (name, item) in items {
        let (kind, shape, blob) = item.blob();
        if blob.data.iter().any(|v| !v.is_finite()) {
            return Err(RomError::NonFinite(format!("archive entry `{name}`")));
        }
        let bytes = blob.encode();
        fs::write(blob_path(root, name), &bytes)?;
        manifest.entries.insert(name.clone(), EntryMeta {
            kind,
            shape,
            checksum: format!("{:016x}", CRC64.checksum(&bytes)),
        });
    }
    let tmp = root.join("manifest.json.tmp");
    fs::write(&tmp, serde_json::to_string_pretty(&manifest)?)?;
    fs::rename(tmp, root.join(MANIFEST))?;
    Ok(())
}

/// Read-only view of an archive directory.
#[derive(Debug, Clone)]
pub struct Archive {
    root: PathBuf,
    pub manifest: ArchiveManifest,
}

impl Archive {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let root = path.as_ref().to_path_buf();
        let text = fs::read_to_string(root.join(MANIFEST))?;
        let manifest: ArchiveManifest = serde_json::from_str(&text)?;
        if manifest.schema_version != SCHEMA_VERSION {
            return Err(RomError::Archive(format!("unsupported schema version {}", manifest.schema_version)));
        }
        Ok(Archive { root, manifest })
    }

    pub fn exists(path: impl AsRef<Path>) -> bool {
        path.as_ref().join(MANIFEST).is_file()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.manifest.entries.keys().map(String::as_str)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.manifest.entries.contains_key(name)
    }

    pub fn metadata(&self, key: &str) -> Option<&serde_json::Value> {
        self.manifest.metadata.get(key)
    }

    /// Loads and verifies one blob.
    pub fn blob(&self, name: &str) -> Result<(&EntryMeta, MatrixBlob)> {
        let meta = self
            .manifest
            .entries
            .get(name)
            .ok_or_else(|| RomError::Archive(format!("no entry `{name}` in {}", self.root.display())))?;
        let bytes = fs::read(blob_path(&self.root, name))?;
        if format!("{:016x}", CRC64.checksum(&bytes)) != meta.checksum {
            return Err(RomError::Checksum(name.to_string()));
        }
        let blob = MatrixBlob::decode(&bytes)?;
        let expected = match meta.kind {
            EntryKind::Matrix => meta.shape.clone(),
            EntryKind::Vector => vec![meta.shape.first().copied().unwrap_or(0), 1],
            EntryKind::Tensor3 => match meta.shape[..] {
                [n0, n1, n2] => vec![n0, n1 * n2],
                _ => return Err(RomError::Archive(format!("bad tensor shape for `{name}`"))),
            },
        };
        if [blob.rows, blob.cols][..] != expected[..] {
            return Err(RomError::Archive(format!("entry `{name}` shape disagrees with the manifest")));
        }
        Ok((meta, blob))
    }

    pub fn matrix<T: Real>(&self, name: &str) -> Result<DMatrix<T>> {
        Ok(self.blob(name)?.1.to_matrix())
    }

    pub fn vector<T: Real>(&self, name: &str) -> Result<DVector<T>> {
        let (_, b) = self.blob(name)?;
        Ok(DVector::from_iterator(b.data.len(), b.data.iter().map(|&v| T::lit(v))))
    }

    pub fn tensor3<T: Real>(&self, name: &str) -> Result<Tensor3<T>> {
        let (meta, b) = self.blob(name)?;
        if meta.kind != EntryKind::Tensor3 {
            return Err(RomError::Archive(format!("entry `{name}` is not a tensor")));
        }
        Tensor3::from_matrix(&b.to_matrix(), meta.shape[1], meta.shape[2])
    }
}

/// Reads a rectangular numeric CSV file without a header row.
pub fn import_matrix_csv(path: impl AsRef<Path>, delimiter: u8) -> Result<MatrixBlob> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| RomError::Csv(e.to_string()))?;
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| RomError::Csv(e.to_string()))?;
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(RomError::Csv(format!("row {} has {} fields, expected {c}", line + 1, record.len())));
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| RomError::Csv(format!("row {}: `{field}` is not a number", line + 1)))?;
            if !v.is_finite() {
                return Err(RomError::Csv(format!("row {}: `{field}` is not finite", line + 1)));
            }
            data.push(v);
        }
        rows += 1;
    }
    MatrixBlob::new(rows, cols.unwrap_or(0), data)
}
