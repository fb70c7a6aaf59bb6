//! Alignment maps between embedding spaces: orthogonal Procrustes fits
//! (square and rectangular, centered or not), linear least squares, the
//! closed-form anchor identification, polar projection onto the nearest
//! isometry, composition, inversion, and the MAP1 binary format.
//!
//! Conventions: embeddings are rows in an `EmbeddingSet`; a map's matrix `Q`
//! is `d_tilde x d` and acts on column vectors, so a row `z` transforms as
//! `Q (z - mu_source) + mu_target`.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::embstore::EmbeddingSet;
use crate::error::Error;
use crate::par;
use crate::Result;

pub const MAP_MAGIC: &[u8; 4] = b"MAP1";
pub const MAP_VERSION: u32 = 1;

/// Semi-orthogonality tolerance on `Q^T Q - I`.
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

/// Relative singular-value cutoff used for rank decisions.
const RANK_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapKind {
    Orthogonal,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitModality {
    Image,
    Text,
    Anchors,
    Synthetic,
}

impl Default for FitModality {
    fn default() -> Self {
        FitModality::Synthetic
    }
}

/// Fit diagnostics carried alongside a map (sidecar JSON, not MAP1 bytes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    /// Frobenius norm of the misfit on the fitting data.
    pub residual: f64,
    /// Smallest singular value of the matrix that determined the fit
    /// (cross-covariance for Procrustes, source data for least squares,
    /// target anchors for the anchor fit).
    pub sigma_min: f64,
}

/// A `d_tilde x d` map with optional source/target means and provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMap {
    pub q: DMatrix<f64>,
    pub mu_source: Option<DVector<f64>>,
    pub mu_target: Option<DVector<f64>>,
    pub kind: MapKind,
    pub fit_modality: FitModality,
    pub source_model: String,
    pub target_model: String,
    pub stats: Option<FitStats>,
}

impl AlignmentMap {
    pub fn new(
        q: DMatrix<f64>,
        mu_source: Option<DVector<f64>>,
        mu_target: Option<DVector<f64>>,
        kind: MapKind,
    ) -> Result<Self> {
        let map = AlignmentMap {
            q,
            mu_source,
            mu_target,
            kind,
            fit_modality: FitModality::default(),
            source_model: String::new(),
            target_model: String::new(),
            stats: None,
        };
        map.validate()?;
        Ok(map)
    }

    /// Identity map on `d` dimensions, no means.
    pub fn identity(d: usize) -> Self {
        AlignmentMap {
            q: DMatrix::identity(d, d),
            mu_source: None,
            mu_target: None,
            kind: MapKind::Orthogonal,
            fit_modality: FitModality::default(),
            source_model: String::new(),
            target_model: String::new(),
            stats: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (dt, d) = self.q.shape();
        if self.mu_source.is_some() != self.mu_target.is_some() {
            return Err(Error::Structure(
                "mu_source and mu_target must both be present or both absent".into(),
            ));
        }
        if let Some(mu) = &self.mu_source {
            if mu.len() != d {
                return Err(Error::Shape(format!(
                    "mu_source has length {}, map expects {d}",
                    mu.len()
                )));
            }
        }
        if let Some(mu) = &self.mu_target {
            if mu.len() != dt {
                return Err(Error::Shape(format!(
                    "mu_target has length {}, map expects {dt}",
                    mu.len()
                )));
            }
        }
        if self.kind == MapKind::Orthogonal {
            if d > dt {
                return Err(Error::Shape(format!(
                    "orthogonal map needs d <= d_tilde, got {d} -> {dt}"
                )));
            }
            let dev = semi_orthogonality_defect(&self.q);
            if dev > ORTHOGONALITY_TOL {
                return Err(Error::Structure(format!(
                    "kind=orthogonal but |Q^T Q - I|_F = {dev:e}"
                )));
            }
        }
        Ok(())
    }

    /// Source dimension d.
    pub fn dim_source(&self) -> usize {
        self.q.ncols()
    }

    /// Target dimension d_tilde.
    pub fn dim_target(&self) -> usize {
        self.q.nrows()
    }

    pub fn has_means(&self) -> bool {
        self.mu_source.is_some()
    }

    /// Transform a single column vector.
    pub fn transform_vector(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        if z.len() != self.dim_source() {
            return Err(Error::Shape(format!(
                "vector has length {}, map expects {}",
                z.len(),
                self.dim_source()
            )));
        }
        let centered = match &self.mu_source {
            Some(mu) => z - mu,
            None => z.clone(),
        };
        let mut out = &self.q * centered;
        if let Some(mu) = &self.mu_target {
            out += mu;
        }
        Ok(out)
    }
}

/// `|Q^T Q - I|_F`.
pub fn semi_orthogonality_defect(q: &DMatrix<f64>) -> f64 {
    let d = q.ncols();
    (q.transpose() * q - DMatrix::identity(d, d)).norm()
}

fn check_paired(source: &EmbeddingSet, target: &EmbeddingSet) -> Result<()> {
    if source.n() != target.n() {
        return Err(Error::Shape(format!(
            "paired sets must have equal row counts, got {} and {}",
            source.n(),
            target.n()
        )));
    }
    if source.n() == 0 {
        return Err(Error::Shape("cannot fit on empty sets".into()));
    }
    Ok(())
}

fn centered_data(set: &EmbeddingSet, centered: bool) -> (DMatrix<f64>, Option<DVector<f64>>) {
    if !centered {
        return (set.data.clone(), None);
    }
    let mu = set.mean_vector();
    let mut data = set.data.clone();
    for mut row in data.row_iter_mut() {
        row -= mu.transpose();
    }
    (data, Some(mu))
}

/// Orthogonal Procrustes fit: the semi-orthogonal `Q` minimizing
/// `|X_tilde - Q X|_F` over matrices with orthonormal columns, via the SVD
/// of the cross-covariance. Rows are paired by index.
pub fn fit_orthogonal(
    source: &EmbeddingSet,
    target: &EmbeddingSet,
    centered: bool,
) -> Result<AlignmentMap> {
    check_paired(source, target)?;
    if source.dim() > target.dim() {
        return Err(Error::Shape(format!(
            "orthogonal fit needs source.d <= target.d, got {} -> {}",
            source.dim(),
            target.dim()
        )));
    }
    let (src, mu_s) = centered_data(source, centered);
    let (tgt, mu_t) = centered_data(target, centered);

    // Cross-covariance with embeddings as columns: M = X_tilde X^T.
    let m = tgt.transpose() * &src;
    let svd = m.svd(true, true);
    let u = svd.u.as_ref().ok_or_else(|| svd_failure())?;
    let v_t = svd.v_t.as_ref().ok_or_else(|| svd_failure())?;
    let q = u * v_t;
    let sigma_min = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);

    let residual = (&tgt - &src * q.transpose()).norm();
    let mut map = AlignmentMap::new(q, mu_s, mu_t, MapKind::Orthogonal)?;
    map.source_model = source.model_id.clone();
    map.target_model = target.model_id.clone();
    map.stats = Some(FitStats { residual, sigma_min });
    Ok(map)
}

/// Ridge-regularized linear least-squares fit
/// `argmin |X_tilde - Q X|_F^2 + ridge |Q|_F^2`, solved through the SVD of
/// the source data. With `ridge = 0` a rank-deficient source is an error.
pub fn fit_linear(
    source: &EmbeddingSet,
    target: &EmbeddingSet,
    centered: bool,
    ridge: f64,
) -> Result<AlignmentMap> {
    check_paired(source, target)?;
    if ridge < 0.0 {
        return Err(Error::InvalidArgument("ridge must be >= 0".into()));
    }
    let (src, mu_s) = centered_data(source, centered);
    let (tgt, mu_t) = centered_data(target, centered);

    // Solve min over B of |X B - X_tilde| with Q = B^T, via X = U S V^T.
    let svd = src.clone().svd(true, true);
    let u = svd.u.as_ref().ok_or_else(|| svd_failure())?;
    let v_t = svd.v_t.as_ref().ok_or_else(|| svd_failure())?;
    let s = &svd.singular_values;
    let sigma_max = s.iter().copied().fold(0.0, f64::max);
    let sigma_min = if src.nrows() < src.ncols() {
        0.0
    } else {
        s.iter().copied().fold(f64::INFINITY, f64::min)
    };
    if ridge == 0.0 && sigma_min <= RANK_REL_TOL * sigma_max.max(1.0) {
        return Err(Error::IllConditioned {
            what: "source data (use ridge > 0)".into(),
            sigma_min,
        });
    }
    // B = V diag(s / (s^2 + ridge)) U^T X_tilde
    let ut_tgt = u.transpose() * &tgt;
    let mut scaled = ut_tgt;
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        let si = s[i];
        row *= si / (si * si + ridge);
    }
    let b = v_t.transpose() * scaled;
    let q = b.transpose();

    let residual = (&tgt - &src * q.transpose()).norm();
    let mut map = AlignmentMap::new(q, mu_s, mu_t, MapKind::Linear)?;
    map.source_model = source.model_id.clone();
    map.target_model = target.model_id.clone();
    map.stats = Some(FitStats { residual, sigma_min });
    Ok(map)
}

fn svd_failure() -> Error {
    Error::Structure("svd did not produce factors".into())
}

/// Apply a map to every row: `z -> Q (z - mu_s) + mu_t`, with the stored
/// means unless overridden, and zero means when absent. Rows keep their
/// order; labels and dataset metadata are preserved; the output carries the
/// map's target model id.
pub fn apply(
    map: &AlignmentMap,
    set: &EmbeddingSet,
    override_mu_source: Option<&DVector<f64>>,
    override_mu_target: Option<&DVector<f64>>,
    renormalize: bool,
) -> Result<EmbeddingSet> {
    let (d, dt) = (map.dim_source(), map.dim_target());
    if set.dim() != d {
        return Err(Error::Shape(format!(
            "set has dimension {}, map expects {d}",
            set.dim()
        )));
    }
    for (mu, len, name) in [
        (override_mu_source, d, "override_mu_source"),
        (override_mu_target, dt, "override_mu_target"),
    ] {
        if let Some(mu) = mu {
            if mu.len() != len {
                return Err(Error::Shape(format!(
                    "{name} has length {}, expected {len}",
                    mu.len()
                )));
            }
        }
    }
    let zero_s = DVector::zeros(d);
    let zero_t = DVector::zeros(dt);
    let mu_s = override_mu_source
        .or(map.mu_source.as_ref())
        .unwrap_or(&zero_s);
    let mu_t = override_mu_target
        .or(map.mu_target.as_ref())
        .unwrap_or(&zero_t);

    let rows = par::map_indexed(set.n(), |i| {
        let z = set.row_vec(i);
        &map.q * (z - mu_s) + mu_t
    });
    let mut data = DMatrix::zeros(set.n(), dt);
    for (i, row) in rows.iter().enumerate() {
        data.row_mut(i).copy_from(&row.transpose());
    }

    let translation_free = map.mu_source.is_none()
        && map.mu_target.is_none()
        && override_mu_source.is_none()
        && override_mu_target.is_none();
    let mut out = EmbeddingSet {
        data,
        labels: set.labels.clone(),
        class_names: set.class_names.clone(),
        model_id: map.target_model.clone(),
        modality: set.modality,
        dataset_id: set.dataset_id.clone(),
        normalized: set.normalized && map.kind == MapKind::Orthogonal && translation_free,
        dtype: set.dtype,
    };
    if renormalize {
        out = crate::embstore::normalize(&out, 1e-12)?;
    }
    Ok(out)
}

/// Anchor matrices of one downstream domain as seen by two models.
/// Columns are unit embeddings: `g` is `d x d_tilde` (source text anchors),
/// `g_tilde` is `d_tilde x d_tilde` (target text anchors), `f` is `d x r`
/// (source image anchors).
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    pub g: DMatrix<f64>,
    pub g_tilde: DMatrix<f64>,
    pub f: DMatrix<f64>,
}

impl AnchorSet {
    pub fn validate(&self) -> Result<()> {
        if self.g_tilde.nrows() != self.g_tilde.ncols() {
            return Err(Error::Shape("target text anchors must be square".into()));
        }
        if self.g.ncols() != self.g_tilde.ncols() {
            return Err(Error::Shape(
                "source and target text anchor counts differ".into(),
            ));
        }
        if self.f.ncols() > self.f.nrows() {
            return Err(Error::Shape("more image anchors than dimensions".into()));
        }
        for (name, m) in [("g", &self.g), ("g_tilde", &self.g_tilde), ("f", &self.f)] {
            for (j, col) in m.column_iter().enumerate() {
                if (col.norm() - 1.0).abs() > crate::embstore::UNIT_NORM_TOL {
                    return Err(Error::Structure(format!(
                        "anchor column {j} of {name} has norm {}",
                        col.norm()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Closed-form linear identification from anchor kernel agreement:
/// `A = G_tilde^{-T} G^T`. Errors when the target anchors are singular.
pub fn fit_from_anchors(anchors: &AnchorSet) -> Result<AlignmentMap> {
    anchors.validate()?;
    let gt = &anchors.g_tilde;
    let svd = gt.clone().svd(false, false);
    let sigma_min = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if sigma_min <= 1e-10 {
        return Err(Error::IllConditioned {
            what: "target text anchors".into(),
            sigma_min,
        });
    }
    // Solve G_tilde^T A = G^T.
    let lu = gt.transpose().lu();
    let a = lu
        .solve(&anchors.g.transpose())
        .ok_or_else(|| Error::IllConditioned {
            what: "target text anchors".into(),
            sigma_min,
        })?;
    let mut map = AlignmentMap::new(a, None, None, MapKind::Linear)?;
    map.fit_modality = FitModality::Anchors;
    map.stats = Some(FitStats {
        residual: 0.0,
        sigma_min,
    });
    Ok(map)
}

/// Orthogonal polar factor: the nearest semi-orthogonal matrix to a
/// full-column-rank linear map. Means and provenance are copied.
pub fn polar_orthogonal(map: &AlignmentMap) -> Result<AlignmentMap> {
    if map.kind != MapKind::Linear {
        return Err(Error::InvalidArgument(
            "polar projection expects a linear map".into(),
        ));
    }
    let svd = map.q.clone().svd(true, true);
    let sigma_min = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if sigma_min <= 1e-10 {
        return Err(Error::IllConditioned {
            what: "map (rank deficient)".into(),
            sigma_min,
        });
    }
    let u = svd.u.as_ref().ok_or_else(|| svd_failure())?;
    let v_t = svd.v_t.as_ref().ok_or_else(|| svd_failure())?;
    let q = u * v_t;
    let mut out = map.clone();
    out.q = q;
    out.kind = MapKind::Orthogonal;
    out.stats = Some(FitStats {
        residual: 0.0,
        sigma_min,
    });
    out.validate()?;
    Ok(out)
}

/// Affine composition: apply `first`, then `second`.
pub fn compose(first: &AlignmentMap, second: &AlignmentMap) -> Result<AlignmentMap> {
    if second.dim_source() != first.dim_target() {
        return Err(Error::Shape(format!(
            "cannot compose {} -> {} with {} -> {}",
            first.dim_source(),
            first.dim_target(),
            second.dim_source(),
            second.dim_target()
        )));
    }
    let q = &second.q * &first.q;
    let (mu_s, mu_t) = if !first.has_means() && !second.has_means() {
        (None, None)
    } else {
        let zero1_s = DVector::zeros(first.dim_source());
        let zero1_t = DVector::zeros(first.dim_target());
        let zero2_s = DVector::zeros(second.dim_source());
        let zero2_t = DVector::zeros(second.dim_target());
        let mu_s1 = first.mu_source.as_ref().unwrap_or(&zero1_s);
        let mu_t1 = first.mu_target.as_ref().unwrap_or(&zero1_t);
        let mu_s2 = second.mu_source.as_ref().unwrap_or(&zero2_s);
        let mu_t2 = second.mu_target.as_ref().unwrap_or(&zero2_t);
        (
            Some(mu_s1.clone()),
            Some(&second.q * (mu_t1 - mu_s2) + mu_t2),
        )
    };
    let kind = if first.kind == MapKind::Orthogonal && second.kind == MapKind::Orthogonal {
        MapKind::Orthogonal
    } else {
        MapKind::Linear
    };
    let mut map = AlignmentMap::new(q, mu_s, mu_t, kind)?;
    map.fit_modality = first.fit_modality;
    map.source_model = first.source_model.clone();
    map.target_model = second.target_model.clone();
    Ok(map)
}

/// Inverse of a square map. Orthogonal maps invert by transpose; linear maps
/// must be nonsingular. Means swap roles.
pub fn invert(map: &AlignmentMap) -> Result<AlignmentMap> {
    let (dt, d) = map.q.shape();
    if dt != d {
        return Err(Error::NotInvertible(format!(
            "rectangular map {d} -> {dt} has no two-sided inverse"
        )));
    }
    let q_inv = match map.kind {
        MapKind::Orthogonal => map.q.transpose(),
        MapKind::Linear => {
            let svd = map.q.clone().svd(false, false);
            let sigma_min = svd
                .singular_values
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            if sigma_min <= 1e-10 {
                return Err(Error::NotInvertible(format!(
                    "linear map is singular (sigma_min = {sigma_min:e})"
                )));
            }
            map.q
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::NotInvertible("linear map is singular".into()))?
        }
    };
    let mut out = map.clone();
    out.q = q_inv;
    out.mu_source = map.mu_target.clone();
    out.mu_target = map.mu_source.clone();
    out.source_model = map.target_model.clone();
    out.target_model = map.source_model.clone();
    out.stats = None;
    out.validate()?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// MAP1 binary format
// ---------------------------------------------------------------------------
//
// Little-endian layout:
//   magic "MAP1" | version u32 = 1 | d_tilde u32 | d u32
//   | kind u8 (0 orth, 1 linear) | flags u8 (bit 0: means present)
//   | reserved u16 | Q row-major f64 (d_tilde * d)
//   | if means: mu_source (d f64) then mu_target (d_tilde f64)

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct MapSidecar {
    #[serde(skip_serializing_if = "Option::is_none")]
    fit_modality: Option<FitModality>,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    target_model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    stats: Option<FitStats>,
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    std::path::PathBuf::from(s)
}

pub fn save_map(map: &AlignmentMap, path: impl AsRef<Path>) -> Result<()> {
    map.validate()?;
    let path = path.as_ref();
    let (dt, d) = map.q.shape();
    let mut bytes = Vec::with_capacity(16 + dt * d * 8);
    bytes.extend_from_slice(MAP_MAGIC);
    bytes.extend_from_slice(&MAP_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(dt as u32).to_le_bytes());
    bytes.extend_from_slice(&(d as u32).to_le_bytes());
    bytes.push(match map.kind {
        MapKind::Orthogonal => 0,
        MapKind::Linear => 1,
    });
    bytes.push(if map.has_means() { 1 } else { 0 });
    bytes.extend_from_slice(&0u16.to_le_bytes());
    for i in 0..dt {
        for j in 0..d {
            bytes.extend_from_slice(&map.q[(i, j)].to_le_bytes());
        }
    }
    if let (Some(mu_s), Some(mu_t)) = (&map.mu_source, &map.mu_target) {
        for v in mu_s.iter().chain(mu_t.iter()) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;

    let meta = MapSidecar {
        fit_modality: Some(map.fit_modality),
        source_model: (!map.source_model.is_empty()).then(|| map.source_model.clone()),
        target_model: (!map.target_model.is_empty()).then(|| map.target_model.clone()),
        stats: map.stats,
    };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_map(path: impl AsRef<Path>) -> Result<AlignmentMap> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;

    let need = |pos: usize, len: usize, what: &str| -> Result<&[u8]> {
        if pos + len > bytes.len() {
            Err(Error::format(
                pos as u64,
                format!("truncated payload while reading {what}"),
            ))
        } else {
            Ok(&bytes[pos..pos + len])
        }
    };

    if need(0, 4, "magic")? != MAP_MAGIC {
        return Err(Error::format(0, "bad magic, expected \"MAP1\""));
    }
    let version = u32::from_le_bytes(need(4, 4, "version")?.try_into().unwrap());
    if version != MAP_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let dt = u32::from_le_bytes(need(8, 4, "d_tilde")?.try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(need(12, 4, "d")?.try_into().unwrap()) as usize;
    if dt == 0 || d == 0 {
        return Err(Error::format(8, format!("empty shape {dt}x{d}")));
    }
    let kind = match need(16, 1, "kind")?[0] {
        0 => MapKind::Orthogonal,
        1 => MapKind::Linear,
        k => return Err(Error::format(16, format!("unknown kind code {k}"))),
    };
    let flags = need(17, 1, "flags")?[0];
    let reserved = u16::from_le_bytes(need(18, 2, "reserved")?.try_into().unwrap());
    if reserved != 0 {
        return Err(Error::format(18, format!("reserved must be 0, got {reserved}")));
    }

    let mut pos = 20usize;
    let read_f64s = |pos: &mut usize, count: usize, what: &str| -> Result<Vec<f64>> {
        let raw = need(*pos, count * 8, what)?;
        *pos += count * 8;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    };
    let q_vals = read_f64s(&mut pos, dt * d, "map matrix")?;
    let q = DMatrix::from_row_slice(dt, d, &q_vals);
    let (mu_source, mu_target) = if flags & 1 != 0 {
        let mu_s = read_f64s(&mut pos, d, "mu_source")?;
        let mu_t = read_f64s(&mut pos, dt, "mu_target")?;
        (
            Some(DVector::from_vec(mu_s)),
            Some(DVector::from_vec(mu_t)),
        )
    } else {
        (None, None)
    };
    if pos != bytes.len() {
        return Err(Error::format(
            pos as u64,
            format!("{} trailing bytes after payload", bytes.len() - pos),
        ));
    }

    let mut map = AlignmentMap::new(q, mu_source, mu_target, kind)?;
    let sidecar = sidecar_path(path);
    if sidecar.exists() {
        let meta: MapSidecar = serde_json::from_str(&std::fs::read_to_string(&sidecar)?)?;
        if let Some(fm) = meta.fit_modality {
            map.fit_modality = fm;
        }
        if let Some(m) = meta.source_model {
            map.source_model = m;
        }
        if let Some(m) = meta.target_model {
            map.target_model = m;
        }
        map.stats = meta.stats;
    }
    Ok(map)
}
