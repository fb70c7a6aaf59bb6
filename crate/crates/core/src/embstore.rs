//! Embedding sets: validation, normalization, splits, prototypes, and the
//! EMB1 binary format with its JSON metadata sidecar.
//!
//! All in-memory compute is f64 regardless of the stored dtype; the dtype
//! only controls on-disk precision.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::Result;

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";
pub const EMB_VERSION: u32 = 1;

/// Norm tolerance for the `normalized` invariant.
pub const UNIT_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Image,
    Text,
}

impl std::fmt::Display for Modality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Modality::Image => write!(f, "image"),
            Modality::Text => write!(f, "text"),
        }
    }
}

/// On-disk element type of an EMB1 payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }

    fn from_code(code: u8, offset: u64) -> Result<Self> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            c => Err(Error::format(offset, format!("unknown dtype code {c}"))),
        }
    }

    fn byte_width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// A labeled matrix of embedding rows for one (model, modality, dataset)
/// triple. Rows are embeddings; `normalized` asserts unit row norms.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub data: DMatrix<f64>,
    pub labels: Option<Vec<u32>>,
    pub class_names: Option<BTreeMap<u32, String>>,
    pub model_id: String,
    pub modality: Option<Modality>,
    pub dataset_id: String,
    pub normalized: bool,
    pub dtype: Dtype,
}

/// Sidecar schema: every field optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct Sidecar {
    #[serde(skip_serializing_if = "Option::is_none")]
    model_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    modality: Option<Modality>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    class_names: Option<BTreeMap<u32, String>>,
}

impl EmbeddingSet {
    /// Validating constructor. Checks the type invariants and returns the set.
    pub fn new(
        data: DMatrix<f64>,
        labels: Option<Vec<u32>>,
        class_names: Option<BTreeMap<u32, String>>,
        model_id: impl Into<String>,
        modality: Option<Modality>,
        dataset_id: impl Into<String>,
        normalized: bool,
    ) -> Result<Self> {
        let set = EmbeddingSet {
            data,
            labels,
            class_names,
            model_id: model_id.into(),
            modality,
            dataset_id: dataset_id.into(),
            normalized,
            dtype: Dtype::F64,
        };
        set.validate()?;
        Ok(set)
    }

    /// Bare set with no labels or metadata; rows taken as-is.
    pub fn from_rows(data: DMatrix<f64>, normalized: bool) -> Result<Self> {
        Self::new(data, None, None, "", None, "", normalized)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = self.data.shape();
        if n < 1 || d < 1 {
            return Err(Error::Structure(format!(
                "embedding matrix must be at least 1x1, got {n}x{d}"
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Structure("non-finite embedding entry".into()));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(Error::Structure(format!(
                    "{} labels for {n} rows",
                    labels.len()
                )));
            }
            if let Some(names) = &self.class_names {
                for &l in labels {
                    if !names.contains_key(&l) {
                        return Err(Error::Structure(format!(
                            "label {l} has no class_names entry"
                        )));
                    }
                }
            }
        }
        if self.normalized {
            for (i, row) in self.data.row_iter().enumerate() {
                if (row.norm() - 1.0).abs() > UNIT_NORM_TOL {
                    return Err(Error::Structure(format!(
                        "normalized=true but row {i} has norm {}",
                        row.norm()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn row_vec(&self, i: usize) -> DVector<f64> {
        self.data.row(i).transpose()
    }

    /// Column mean of the rows (the modality-specific mean vector).
    pub fn mean_vector(&self) -> DVector<f64> {
        let n = self.n() as f64;
        let mut mu = DVector::zeros(self.dim());
        for row in self.data.row_iter() {
            mu += row.transpose();
        }
        mu / n
    }

    /// Distinct labels in ascending order.
    pub fn distinct_classes(&self) -> Result<Vec<u32>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::MissingLabels("set has no labels".into()))?;
        let mut classes: Vec<u32> = labels.clone();
        classes.sort_unstable();
        classes.dedup();
        Ok(classes)
    }

    /// New set with the given rows (and their labels) in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Result<EmbeddingSet> {
        if indices.iter().any(|&i| i >= self.n()) {
            return Err(Error::InvalidArgument("row index out of range".into()));
        }
        let d = self.dim();
        let mut data = DMatrix::zeros(indices.len(), d);
        for (out, &i) in indices.iter().enumerate() {
            data.row_mut(out).copy_from(&self.data.row(i));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Ok(EmbeddingSet {
            data,
            labels,
            class_names: self.class_names.clone(),
            model_id: self.model_id.clone(),
            modality: self.modality,
            dataset_id: self.dataset_id.clone(),
            normalized: self.normalized,
            dtype: self.dtype,
        })
    }
}

/// Prototype vectors, one per class, ordered by ascending class id.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrototypes {
    pub data: DMatrix<f64>,
    pub class_ids: Vec<u32>,
    pub source: String,
}

impl ClassPrototypes {
    pub fn validate(&self) -> Result<()> {
        if self.data.nrows() != self.class_ids.len() {
            return Err(Error::Structure(format!(
                "{} prototype rows for {} class ids",
                self.data.nrows(),
                self.class_ids.len()
            )));
        }
        let mut seen = self.class_ids.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.class_ids.len() {
            return Err(Error::Structure("duplicate prototype class ids".into()));
        }
        for (i, row) in self.data.row_iter().enumerate() {
            if (row.norm() - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::Structure(format!(
                    "prototype row {i} has norm {}",
                    row.norm()
                )));
            }
        }
        Ok(())
    }

    pub fn row_for_class(&self, class: u32) -> Option<DVector<f64>> {
        self.class_ids
            .iter()
            .position(|&c| c == class)
            .map(|i| self.data.row(i).transpose())
    }
}

/// How to split a set into (first, second).
#[derive(Debug, Clone)]
pub enum SplitSpec {
    /// Seeded shuffle, cut at ceil(fraction * n).
    ByFraction { fraction: f64, seed: u64 },
    /// Listed classes go to the first output, the rest to the second.
    ByClasses { classes: Vec<u32> },
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Divide every row by its norm. Rows with norm <= epsilon are an error,
/// reported all at once.
pub fn normalize(set: &EmbeddingSet, epsilon: f64) -> Result<EmbeddingSet> {
    if epsilon <= 0.0 {
        return Err(Error::InvalidArgument("epsilon must be > 0".into()));
    }
    let mut data = set.data.clone();
    let mut degenerate = Vec::new();
    for (i, mut row) in data.row_iter_mut().enumerate() {
        let norm = row.norm();
        if norm <= epsilon {
            degenerate.push(i);
        } else {
            row /= norm;
        }
    }
    if !degenerate.is_empty() {
        return Err(Error::DegenerateRows {
            epsilon,
            indices: degenerate,
        });
    }
    Ok(EmbeddingSet {
        data,
        normalized: true,
        ..set.clone()
    })
}

/// Per-class normalized means, ordered by ascending class id.
pub fn class_prototypes(set: &EmbeddingSet) -> Result<ClassPrototypes> {
    let labels = set
        .labels
        .as_ref()
        .ok_or_else(|| Error::MissingLabels("class_prototypes needs labels".into()))?;
    if !set.normalized {
        return Err(Error::InvalidArgument(
            "class_prototypes requires a normalized set".into(),
        ));
    }
    let classes = set.distinct_classes()?;
    let d = set.dim();
    let mut data = DMatrix::zeros(classes.len(), d);
    for (k, &class) in classes.iter().enumerate() {
        let mut mean = DVector::<f64>::zeros(d);
        let mut count = 0usize;
        for (i, &l) in labels.iter().enumerate() {
            if l == class {
                mean += set.row_vec(i);
                count += 1;
            }
        }
        mean /= count as f64;
        let norm = mean.norm();
        if norm <= 1e-12 {
            return Err(Error::DegenerateRows {
                epsilon: 1e-12,
                indices: vec![k],
            });
        }
        mean /= norm;
        data.row_mut(k).copy_from(&mean.transpose());
    }
    Ok(ClassPrototypes {
        data,
        class_ids: classes,
        source: format!("{}:{}", set.model_id, set.dataset_id),
    })
}

/// Partition a set per the spec. Outputs preserve original row order within
/// each side; `ByFraction` is deterministic in the seed.
pub fn split(set: &EmbeddingSet, spec: &SplitSpec) -> Result<(EmbeddingSet, EmbeddingSet)> {
    match spec {
        SplitSpec::ByFraction { fraction, seed } => {
            if !(*fraction > 0.0 && *fraction <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "fraction must be in (0, 1], got {fraction}"
                )));
            }
            let n = set.n();
            let mut indices: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            indices.shuffle(&mut rng);
            let cut = (fraction * n as f64).ceil() as usize;
            let (first, second) = indices.split_at(cut.min(n));
            Ok((set.select_rows(first)?, set.select_rows(second)?))
        }
        SplitSpec::ByClasses { classes } => {
            if classes.is_empty() {
                return Err(Error::InvalidArgument("empty class list".into()));
            }
            let labels = set
                .labels
                .as_ref()
                .ok_or_else(|| Error::MissingLabels("by_classes split needs labels".into()))?;
            for &c in classes {
                if !labels.contains(&c) {
                    return Err(Error::InvalidArgument(format!(
                        "class {c} not present in labels"
                    )));
                }
            }
            let (mut seen, mut unseen) = (Vec::new(), Vec::new());
            for (i, l) in labels.iter().enumerate() {
                if classes.contains(l) {
                    seen.push(i);
                } else {
                    unseen.push(i);
                }
            }
            Ok((set.select_rows(&seen)?, set.select_rows(&unseen)?))
        }
    }
}

// ---------------------------------------------------------------------------
// EMB1 binary format
// ---------------------------------------------------------------------------
//
// Little-endian layout:
//   magic "EMB1" | version u32 = 1 | n u32 | d u32 | dtype u8 (0=f32, 1=f64)
//   | flags u8 (bit 0: labels present) | reserved u16 = 0
//   | row-major data (n*d values) | if labels: n x u32
//
// Sidecar `<path>.json`: {"model_id", "modality", "dataset_id",
// "class_names"} — all optional.

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + len > self.bytes.len() {
            return Err(Error::format(
                self.pos as u64,
                format!("truncated payload while reading {what}"),
            ));
        }
        let slice = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(slice)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    std::path::PathBuf::from(s)
}

/// Read an EMB1 file and merge its sidecar metadata when present.
/// Does not normalize.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor::new(&bytes);

    let magic = cur.take(4, "magic")?;
    if magic != EMB_MAGIC {
        return Err(Error::format(
            0,
            format!("bad magic {:?}, expected \"EMB1\"", magic),
        ));
    }
    let version = cur.u32("version")?;
    if version != EMB_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let n = cur.u32("row count")? as usize;
    let d = cur.u32("column count")? as usize;
    let dtype_off = cur.pos as u64;
    let dtype = Dtype::from_code(cur.u8("dtype")?, dtype_off)?;
    let flags = cur.u8("flags")?;
    let reserved = cur.u16("reserved")?;
    if reserved != 0 {
        return Err(Error::format(
            (cur.pos - 2) as u64,
            format!("reserved field must be 0, got {reserved}"),
        ));
    }
    if n == 0 || d == 0 {
        return Err(Error::format(8, format!("empty shape {n}x{d}")));
    }

    let count = n
        .checked_mul(d)
        .ok_or_else(|| Error::format(8, "row/column counts overflow"))?;
    let raw = cur.take(count * dtype.byte_width(), "data payload")?;
    let mut values = Vec::with_capacity(count);
    match dtype {
        Dtype::F32 => {
            for chunk in raw.chunks_exact(4) {
                values.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
            }
        }
        Dtype::F64 => {
            for chunk in raw.chunks_exact(8) {
                values.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
        }
    }
    let data = DMatrix::from_row_slice(n, d, &values);

    let labels = if flags & 1 != 0 {
        let raw = cur.take(n * 4, "labels")?;
        Some(
            raw.chunks_exact(4)
                .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
                .collect::<Vec<u32>>(),
        )
    } else {
        None
    };
    if cur.pos != bytes.len() {
        return Err(Error::format(
            cur.pos as u64,
            format!("{} trailing bytes after payload", bytes.len() - cur.pos),
        ));
    }

    let mut set = EmbeddingSet {
        data,
        labels,
        class_names: None,
        model_id: String::new(),
        modality: None,
        dataset_id: String::new(),
        normalized: false,
        dtype,
    };

    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        let text = std::fs::read_to_string(&sidecar)?;
        let meta: Sidecar = serde_json::from_str(&text)?;
        if let Some(m) = meta.model_id {
            set.model_id = m;
        }
        set.modality = meta.modality;
        if let Some(d) = meta.dataset_id {
            set.dataset_id = d;
        }
        set.class_names = meta.class_names;
    }
    set.validate()?;
    Ok(set)
}

/// Write an EMB1 file (plus sidecar when any metadata is set) in the set's
/// stored dtype. f64 values are rounded to nearest f32 when dtype is F32.
pub fn save_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    set.validate()?;
    let path = path.as_ref();
    let (n, d) = set.data.shape();
    let mut bytes = Vec::with_capacity(16 + n * d * set.dtype.byte_width());
    bytes.extend_from_slice(EMB_MAGIC);
    bytes.extend_from_slice(&EMB_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(n as u32).to_le_bytes());
    bytes.extend_from_slice(&(d as u32).to_le_bytes());
    bytes.push(set.dtype.code());
    bytes.push(if set.labels.is_some() { 1 } else { 0 });
    bytes.extend_from_slice(&0u16.to_le_bytes());
    for i in 0..n {
        for j in 0..d {
            match set.dtype {
                Dtype::F32 => bytes.extend_from_slice(&(set.data[(i, j)] as f32).to_le_bytes()),
                Dtype::F64 => bytes.extend_from_slice(&set.data[(i, j)].to_le_bytes()),
            }
        }
    }
    if let Some(labels) = &set.labels {
        for &l in labels {
            bytes.extend_from_slice(&l.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;

    let meta = Sidecar {
        model_id: (!set.model_id.is_empty()).then(|| set.model_id.clone()),
        modality: set.modality,
        dataset_id: (!set.dataset_id.is_empty()).then(|| set.dataset_id.clone()),
        class_names: set.class_names.clone(),
    };
    let has_meta = meta.model_id.is_some()
        || meta.modality.is_some()
        || meta.dataset_id.is_some()
        || meta.class_names.is_some();
    if has_meta {
        let text = serde_json::to_string_pretty(&meta)?;
        std::fs::write(sidecar_path(path), text)?;
    }
    Ok(())
}

/// Import a headerless CSV: optional integer label in the first column
/// (`labeled`), remaining columns are coordinates.
pub fn import_csv(path: impl AsRef<Path>, labeled: bool) -> Result<EmbeddingSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<u32> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Structure(format!("csv row {i}: {e}")))?;
        let mut fields = record.iter();
        if labeled {
            let raw = fields
                .next()
                .ok_or_else(|| Error::Structure(format!("csv row {i}: empty record")))?;
            let label: u32 = raw
                .parse()
                .map_err(|_| Error::Structure(format!("csv row {i}: bad label {raw:?}")))?;
            labels.push(label);
        }
        let coords: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::Structure(format!("csv row {i}: bad value {f:?}")))
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if coords.len() != first.len() {
                return Err(Error::Structure(format!(
                    "csv row {i}: {} columns, expected {}",
                    coords.len(),
                    first.len()
                )));
            }
        }
        rows.push(coords);
    }
    if rows.is_empty() {
        return Err(Error::Structure("empty csv".into()));
    }
    let n = rows.len();
    let d = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    EmbeddingSet::new(
        DMatrix::from_row_slice(n, d, &flat),
        labeled.then_some(labels),
        None,
        "",
        None,
        "",
        false,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_rows(rows: &[&[f64]]) -> EmbeddingSet {
        let n = rows.len();
        let d = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let set = EmbeddingSet::from_rows(DMatrix::from_row_slice(n, d, &flat), false).unwrap();
        normalize(&set, 1e-12).unwrap()
    }

    #[test]
    fn normalize_three_four_five() {
        let set =
            EmbeddingSet::from_rows(DMatrix::from_row_slice(1, 2, &[3.0, 4.0]), false).unwrap();
        let out = normalize(&set, 1e-12).unwrap();
        assert_relative_eq!(out.data[(0, 0)], 0.6, epsilon = 1e-15);
        assert_relative_eq!(out.data[(0, 1)], 0.8, epsilon = 1e-15);
        assert!(out.normalized);
    }

    #[test]
    fn normalize_is_idempotent() {
        let set = unit_rows(&[&[1.0, 2.0, 2.0], &[0.0, 1.0, 0.0]]);
        let twice = normalize(&set, 1e-12).unwrap();
        for (a, b) in set.data.iter().zip(twice.data.iter()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn normalize_rejects_zero_row() {
        let set =
            EmbeddingSet::from_rows(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]), false)
                .unwrap();
        match normalize(&set, 1e-12) {
            Err(Error::DegenerateRows { indices, .. }) => assert_eq!(indices, vec![1]),
            other => panic!("expected degenerate-row error, got {other:?}"),
        }
    }

    #[test]
    fn prototypes_symmetric_mean() {
        let mut set = unit_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        set.labels = Some(vec![0, 0]);
        let protos = class_prototypes(&set).unwrap();
        let s = 1.0 / 2.0_f64.sqrt();
        assert_relative_eq!(protos.data[(0, 0)], s, epsilon = 1e-15);
        assert_relative_eq!(protos.data[(0, 1)], s, epsilon = 1e-15);
    }

    #[test]
    fn prototypes_identity_when_one_row_per_class() {
        let mut set = unit_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        set.labels = Some(vec![1, 0]);
        let protos = class_prototypes(&set).unwrap();
        assert_eq!(protos.class_ids, vec![0, 1]);
        // class 0 is the second row, class 1 the first
        assert_relative_eq!(protos.data[(0, 1)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(protos.data[(1, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn prototypes_antipodal_rows_degenerate() {
        let mut set = unit_rows(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        set.labels = Some(vec![0, 0]);
        assert!(matches!(
            class_prototypes(&set),
            Err(Error::DegenerateRows { .. })
        ));
    }

    #[test]
    fn split_by_classes_counts() {
        let mut set = unit_rows(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]]);
        set.labels = Some(vec![0, 1, 0]);
        let (seen, unseen) = split(&set, &SplitSpec::ByClasses { classes: vec![0] }).unwrap();
        assert_eq!(seen.n(), 2);
        assert_eq!(unseen.n(), 1);
        assert_eq!(seen.labels, Some(vec![0, 0]));
    }

    #[test]
    fn split_full_fraction() {
        let set = unit_rows(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let (a, b) = split(
            &set,
            &SplitSpec::ByFraction {
                fraction: 1.0,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(a.n(), 2);
        assert_eq!(b.n(), 0);
    }

    #[test]
    fn split_deterministic_in_seed() {
        let mut set = unit_rows(&[
            &[1.0, 0.0],
            &[0.0, 1.0],
            &[1.0, 1.0],
            &[1.0, 2.0],
            &[2.0, 1.0],
        ]);
        set.labels = Some(vec![0, 1, 2, 3, 4]);
        let spec = SplitSpec::ByFraction {
            fraction: 0.6,
            seed: 42,
        };
        let (a1, b1) = split(&set, &spec).unwrap();
        let (a2, b2) = split(&set, &spec).unwrap();
        assert_eq!(a1.labels, a2.labels);
        assert_eq!(b1.labels, b2.labels);
    }

    #[test]
    fn split_missing_class_is_error() {
        let mut set = unit_rows(&[&[1.0, 0.0]]);
        set.labels = Some(vec![0]);
        assert!(split(&set, &SplitSpec::ByClasses { classes: vec![7] }).is_err());
    }

    #[test]
    fn emb1_round_trip_with_labels_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.emb");
        let mut names = BTreeMap::new();
        names.insert(0, "cat".to_string());
        names.insert(1, "dog".to_string());
        let set = EmbeddingSet::new(
            DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]),
            Some(vec![0, 1, 0]),
            Some(names),
            "model-a",
            Some(Modality::Image),
            "pets",
            false,
        )
        .unwrap();
        save_embeddings(&set, &path).unwrap();
        let loaded = load_embeddings(&path).unwrap();
        assert_eq!(loaded, set);
    }

    #[test]
    fn emb1_f32_dtype_rounds() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.emb");
        let v = 0.1f64; // not representable in f32
        let mut set =
            EmbeddingSet::from_rows(DMatrix::from_row_slice(1, 1, &[v]), false).unwrap();
        set.dtype = Dtype::F32;
        save_embeddings(&set, &path).unwrap();
        let loaded = load_embeddings(&path).unwrap();
        assert_eq!(loaded.data[(0, 0)], v as f32 as f64);
        assert_eq!(loaded.dtype, Dtype::F32);
    }

    #[test]
    fn emb1_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.emb");
        std::fs::write(&path, b"XXXX\x01\x00\x00\x00").unwrap();
        match load_embeddings(&path) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn emb1_truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.emb");
        let set = EmbeddingSet::from_rows(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            false,
        )
        .unwrap();
        save_embeddings(&set, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(load_embeddings(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn emb1_unknown_dtype() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dtype.emb");
        let set = EmbeddingSet::from_rows(DMatrix::from_row_slice(1, 1, &[1.0]), false).unwrap();
        save_embeddings(&set, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[16] = 9; // dtype code
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_embeddings(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let set = EmbeddingSet::from_rows(DMatrix::from_row_slice(1, 1, &[1.0]), false).unwrap();
        assert!(matches!(
            save_embeddings(&set, "/nonexistent-dir/x.emb"),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn csv_import_with_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        std::fs::write(&path, "0,1.0,0.0\n1,0.0,1.0\n").unwrap();
        let set = import_csv(&path, true).unwrap();
        assert_eq!(set.n(), 2);
        assert_eq!(set.dim(), 2);
        assert_eq!(set.labels, Some(vec![0, 1]));
    }
}
