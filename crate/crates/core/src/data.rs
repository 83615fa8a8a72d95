//! Embedding datasets: the in-memory model, the two on-disk formats, target
//! binarization, and deterministic subsampling.
//!
//! Two formats are defined bit-exactly:
//!
//! * CSV with header `id,dist,split,label,e0..e{d-1}`; `dist` is `ID`/`OOD`,
//!   `split` is `train`/`val`/`test`, `label` may be empty. Human-readable,
//!   full f64 precision via shortest round-trip formatting.
//! * Binary `MPER`: magic `MPER`, then `version:u32`, `n:u32`, `dim:u32`
//!   (all little-endian), then `n*dim` little-endian float32 row-major, then
//!   a JSON trailer `{ids, dist, split, labels}`. Compact; embeddings are
//!   quantized to float32 on disk and widened to float64 in memory.
//!
//! Record ids must be non-empty ASCII without commas, whitespace or control
//! characters so that the CSV form needs no quoting.

use std::collections::HashSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Matrix, Rng};

const MAGIC: &[u8; 4] = b"MPER";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistTag {
    #[serde(rename = "ID")]
    Id,
    #[serde(rename = "OOD")]
    Ood,
}

impl DistTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DistTag::Id => "ID",
            DistTag::Ood => "OOD",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "ID" => Some(DistTag::Id),
            "OOD" => Some(DistTag::Ood),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Val,
    Test,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(SplitTag::Train),
            "val" => Some(SplitTag::Val),
            "test" => Some(SplitTag::Test),
            _ => None,
        }
    }

    pub const ALL: [SplitTag; 3] = [SplitTag::Train, SplitTag::Val, SplitTag::Test];
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub id: String,
    pub embedding: Vec<f64>,
    pub dist: DistTag,
    pub split: SplitTag,
    pub label: Option<f64>,
}

/// Labeled matrix of fixed-dimension embedding vectors with ID/OOD and split
/// tags. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    records: Vec<EmbeddingRecord>,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.chars().all(|c| c.is_ascii_graphic() && c != ',')
}

impl EmbeddingSet {
    pub fn new(dim: usize, records: Vec<EmbeddingRecord>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Schema("embedding dimension must be positive".into()));
        }
        let mut seen = HashSet::with_capacity(records.len());
        for rec in &records {
            if rec.embedding.len() != dim {
                return Err(Error::Schema(format!(
                    "record '{}' has {} entries, expected dim {dim}",
                    rec.id,
                    rec.embedding.len()
                )));
            }
            if rec.embedding.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!(
                    "record '{}' contains a non-finite embedding entry",
                    rec.id
                )));
            }
            if let Some(l) = rec.label {
                if !l.is_finite() {
                    return Err(Error::Schema(format!(
                        "record '{}' has a non-finite label",
                        rec.id
                    )));
                }
            }
            if !valid_id(&rec.id) {
                return Err(Error::Schema(format!(
                    "record id '{}' is not a plain ASCII token",
                    rec.id
                )));
            }
            if !seen.insert(rec.id.as_str()) {
                return Err(Error::Schema(format!("duplicate record id '{}'", rec.id)));
            }
        }
        // Drop the borrow of `records` before moving it.
        drop(seen);
        Ok(EmbeddingSet { dim, records })
    }

    pub fn dim(&self) -> usize {
        self.dim
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

    /// Indices of records in a (dist, split) cell, in stored order.
    pub fn cell_indices(&self, dist: DistTag, split: SplitTag) -> Vec<usize> {
        self.records
            .iter()
            .enumerate()
            .filter(|(_, r)| r.dist == dist && r.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// Gather the embeddings at `indices` into an n x dim matrix.
    pub fn gather(&self, indices: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(indices.len(), self.dim);
        for (row, &i) in indices.iter().enumerate() {
            m.row_mut(row).copy_from_slice(&self.records[i].embedding);
        }
        m
    }

    /// Error unless the split holds at least one ID and one OOD record.
    pub fn require_both_tags(&self, split: SplitTag) -> Result<()> {
        for dist in [DistTag::Id, DistTag::Ood] {
            if self.cell_indices(dist, split).is_empty() {
                return Err(Error::Capacity(format!(
                    "split '{}' has no {} records",
                    split.as_str(),
                    dist.as_str()
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// CSV format
// ---------------------------------------------------------------------------

pub fn load_csv(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let text = fs::read_to_string(path.as_ref())?;
    parse_csv(&text)
}

fn parse_csv(text: &str) -> Result<EmbeddingSet> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Schema("empty file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 5
        || cols[0] != "id"
        || cols[1] != "dist"
        || cols[2] != "split"
        || cols[3] != "label"
    {
        return Err(Error::Schema(
            "header must be id,dist,split,label,e0..e{d-1}".into(),
        ));
    }
    let dim = cols.len() - 4;
    for (i, c) in cols[4..].iter().enumerate() {
        if *c != format!("e{i}") {
            return Err(Error::Schema(format!(
                "embedding column {} named '{c}', expected 'e{i}'",
                i + 4
            )));
        }
    }

    let mut records = Vec::new();
    for (zero_line, raw) in lines {
        let line_no = zero_line + 1; // 1-based, counting the header
        if raw.is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split(',').collect();
        if fields.len() != dim + 4 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {} fields, found {}", dim + 4, fields.len()),
            });
        }
        let dist = DistTag::parse(fields[1]).ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("bad dist tag '{}'", fields[1]),
        })?;
        let split = SplitTag::parse(fields[2]).ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("bad split tag '{}'", fields[2]),
        })?;
        let label = if fields[3].is_empty() {
            None
        } else {
            let v: f64 = fields[3].parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad label '{}'", fields[3]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: "non-finite label".into(),
                });
            }
            Some(v)
        };
        let mut embedding = Vec::with_capacity(dim);
        for f in &fields[4..] {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad embedding entry '{f}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("non-finite embedding entry '{f}'"),
                });
            }
            embedding.push(v);
        }
        records.push(EmbeddingRecord {
            id: fields[0].to_string(),
            embedding,
            dist,
            split,
            label,
        });
    }
    if records.is_empty() {
        return Err(Error::Schema("empty set: file has no data rows".into()));
    }
    EmbeddingSet::new(dim, records)
}

pub fn save_csv(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("id,dist,split,label");
    for i in 0..set.dim {
        out.push_str(&format!(",e{i}"));
    }
    out.push('\n');
    for rec in &set.records {
        out.push_str(&rec.id);
        out.push(',');
        out.push_str(rec.dist.as_str());
        out.push(',');
        out.push_str(rec.split.as_str());
        out.push(',');
        if let Some(l) = rec.label {
            out.push_str(&format!("{l}"));
        }
        for v in &rec.embedding {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    fs::write(path.as_ref(), out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Binary MPER format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct BinaryTrailer {
    ids: Vec<String>,
    dist: Vec<DistTag>,
    split: Vec<SplitTag>,
    labels: Vec<Option<f64>>,
}

pub fn save_binary(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(set.records.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(set.dim as u32).to_le_bytes());
    for rec in &set.records {
        for &v in &rec.embedding {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let trailer = BinaryTrailer {
        ids: set.records.iter().map(|r| r.id.clone()).collect(),
        dist: set.records.iter().map(|r| r.dist).collect(),
        split: set.records.iter().map(|r| r.split).collect(),
        labels: set.records.iter().map(|r| r.label).collect(),
    };
    buf.extend_from_slice(serde_json::to_string(&trailer)?.as_bytes());
    let mut f = fs::File::create(path.as_ref())?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn load_binary(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let mut bytes = Vec::new();
    fs::File::open(path.as_ref())?.read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[0..4] != MAGIC {
        return Err(Error::Format("bad magic, expected MPER".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if n == 0 {
        return Err(Error::Schema(
            "empty set: binary file holds n=0 records".into(),
        ));
    }
    let payload_len = n
        .checked_mul(dim)
        .and_then(|c| c.checked_mul(4))
        .ok_or_else(|| Error::Format("size overflow".into()))?;
    let payload_end = 16 + payload_len;
    if bytes.len() < payload_end {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            format!(
                "truncated payload: need {payload_end} bytes, file has {}",
                bytes.len()
            ),
        )));
    }
    let trailer: BinaryTrailer = serde_json::from_slice(&bytes[payload_end..])
        .map_err(|e| Error::Format(format!("bad JSON trailer: {e}")))?;
    if trailer.ids.len() != n
        || trailer.dist.len() != n
        || trailer.split.len() != n
        || trailer.labels.len() != n
    {
        return Err(Error::Format(
            "trailer array lengths do not match record count".into(),
        ));
    }
    let mut records = Vec::with_capacity(n);
    let mut off = 16;
    for i in 0..n {
        let mut embedding = Vec::with_capacity(dim);
        for _ in 0..dim {
            let v = f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::Format(format!(
                    "non-finite embedding entry in record {i}"
                )));
            }
            embedding.push(v as f64);
            off += 4;
        }
        records.push(EmbeddingRecord {
            id: trailer.ids[i].clone(),
            embedding,
            dist: trailer.dist[i],
            split: trailer.split[i],
            label: trailer.labels[i],
        });
    }
    EmbeddingSet::new(dim, records)
}

/// Load by file extension: `.csv` for text, anything else binary.
pub fn load_auto(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let p = path.as_ref();
    if p.extension().is_some_and(|e| e == "csv") {
        load_csv(p)
    } else {
        load_binary(p)
    }
}

// ---------------------------------------------------------------------------
// Target binarization
// ---------------------------------------------------------------------------

/// Median of a non-empty slice: average of the two middles for even length.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("median of empty input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

/// Label 1 where value >= median, else 0.
pub fn median_binarize(values: &[f64]) -> Result<Vec<u8>> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "median_binarize requires finite values".into(),
        ));
    }
    let med = median(values)?;
    Ok(values.iter().map(|&v| u8::from(v >= med)).collect())
}

// ---------------------------------------------------------------------------
// Split manifest and subsampling
// ---------------------------------------------------------------------------

/// Record counts per (dist, split) cell plus the seed and source files that
/// produced them. Serialized as JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub train_id: usize,
    pub train_ood: usize,
    pub val_id: usize,
    pub val_ood: usize,
    pub test_id: usize,
    pub test_ood: usize,
    pub seed: u64,
    pub source_files: Vec<String>,
}

impl SplitManifest {
    pub fn count(&self, dist: DistTag, split: SplitTag) -> usize {
        match (dist, split) {
            (DistTag::Id, SplitTag::Train) => self.train_id,
            (DistTag::Ood, SplitTag::Train) => self.train_ood,
            (DistTag::Id, SplitTag::Val) => self.val_id,
            (DistTag::Ood, SplitTag::Val) => self.val_ood,
            (DistTag::Id, SplitTag::Test) => self.test_id,
            (DistTag::Ood, SplitTag::Test) => self.test_ood,
        }
    }

    /// Manifest describing `set` exactly.
    pub fn from_set(set: &EmbeddingSet, seed: u64, source_files: Vec<String>) -> Self {
        let c = |d, s| set.cell_indices(d, s).len();
        SplitManifest {
            train_id: c(DistTag::Id, SplitTag::Train),
            train_ood: c(DistTag::Ood, SplitTag::Train),
            val_id: c(DistTag::Id, SplitTag::Val),
            val_ood: c(DistTag::Ood, SplitTag::Val),
            test_id: c(DistTag::Id, SplitTag::Test),
            test_ood: c(DistTag::Ood, SplitTag::Test),
            seed,
            source_files,
        }
    }

    pub fn validate_against(&self, set: &EmbeddingSet) -> Result<()> {
        for split in SplitTag::ALL {
            for dist in [DistTag::Id, DistTag::Ood] {
                let have = set.cell_indices(dist, split).len();
                let want = self.count(dist, split);
                if have != want {
                    return Err(Error::Schema(format!(
                        "cell ({}, {}) holds {have} records, manifest says {want}",
                        dist.as_str(),
                        split.as_str()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Uniform subsample without replacement per (dist, split) cell, down to the
/// target counts. Deterministic given the rng seed; record order of the
/// source set is preserved.
pub fn subsample_split(
    set: &EmbeddingSet,
    targets: &SplitManifest,
    rng: &mut Rng,
) -> Result<EmbeddingSet> {
    let mut keep: Vec<usize> = Vec::new();
    for split in SplitTag::ALL {
        for dist in [DistTag::Id, DistTag::Ood] {
            let cell = set.cell_indices(dist, split);
            let want = targets.count(dist, split);
            if want > cell.len() {
                return Err(Error::Capacity(format!(
                    "cell ({}, {}) has {} records, requested {want}",
                    dist.as_str(),
                    split.as_str(),
                    cell.len()
                )));
            }
            let picked = rng.choose(cell.len(), want)?;
            keep.extend(picked.into_iter().map(|i| cell[i]));
        }
    }
    keep.sort_unstable();
    let records: Vec<EmbeddingRecord> = keep.into_iter().map(|i| set.records[i].clone()).collect();
    if records.is_empty() {
        // A fully-empty request is representable; mirror EmbeddingSet::new's
        // dim bookkeeping without tripping its emptiness-by-use invariants.
        return Ok(EmbeddingSet {
            dim: set.dim,
            records,
        });
    }
    EmbeddingSet::new(set.dim, records)
}
