//! Evaluation quantities: paired cosine and Euclidean distance, class-level
//! top-1 retrieval, zero-shot classification against class prototypes,
//! multimodal kernels and their CKA, the modality gap, and the two-path
//! retrieval comparison.
//!
//! All similarity decisions use cosine; ties break toward the lowest gallery
//! index or class id so reports are deterministic across platforms. Per-query
//! loops run in parallel; the reductions that produce means are sequential.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::align::{self, AlignmentMap};
use crate::embstore::{ClassPrototypes, EmbeddingSet};
use crate::error::Error;
use crate::par;
use crate::Result;

/// Inner-product table between two row sets.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub values: DMatrix<f64>,
    pub row_source: String,
    pub col_source: String,
}

/// Flat report shared by the metric operations; fields are filled by the
/// operations that define them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_cosine: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_cosine: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_l2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub top1_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_class_accuracy: Option<BTreeMap<u32, f64>>,
    pub n_queries: usize,
}

fn check_same_n(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::Shape(format!(
            "paired metric needs equal row counts, got {} and {}",
            a.n(),
            b.n()
        )));
    }
    Ok(())
}

fn check_same_dim(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!(
            "dimension mismatch: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// Rows scaled to unit norm for cosine computations, erroring on
/// (near-)zero rows. Sets already flagged normalized pass through.
fn unit_rows(set: &EmbeddingSet) -> Result<DMatrix<f64>> {
    if set.normalized {
        return Ok(set.data.clone());
    }
    let renorm = crate::embstore::normalize(set, 1e-12)?;
    Ok(renorm.data)
}

/// Mean and standard deviation of the per-index cosine `<a_i, b_i>`.
pub fn paired_cosine(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<MetricsReport> {
    check_same_n(a, b)?;
    check_same_dim(a, b)?;
    let ra = unit_rows(a)?;
    let rb = unit_rows(b)?;
    let n = ra.nrows();
    let cosines = par::map_indexed(n, |i| ra.row(i).dot(&rb.row(i)));
    let mean = cosines.iter().sum::<f64>() / n as f64;
    let var = cosines.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n as f64;
    Ok(MetricsReport {
        mean_cosine: Some(mean),
        std_cosine: Some(var.sqrt()),
        n_queries: n,
        ..Default::default()
    })
}

/// Mean Euclidean distance between paired rows, taken on the raw rows
/// without any renormalization.
pub fn paired_l2(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<MetricsReport> {
    check_same_n(a, b)?;
    check_same_dim(a, b)?;
    let n = a.n();
    let dists = par::map_indexed(n, |i| (a.data.row(i) - b.data.row(i)).norm());
    let mean = dists.iter().sum::<f64>() / n as f64;
    Ok(MetricsReport {
        mean_l2: Some(mean),
        n_queries: n,
        ..Default::default()
    })
}

/// Index of the gallery row with the highest cosine against `query`,
/// skipping `skip` when given. Strict comparison keeps the lowest index on
/// ties.
fn nearest_row(gallery: &DMatrix<f64>, query: &DVector<f64>, skip: Option<usize>) -> usize {
    let mut best = usize::MAX;
    let mut best_score = f64::NEG_INFINITY;
    for (j, row) in gallery.row_iter().enumerate() {
        if skip == Some(j) {
            continue;
        }
        let score = row.transpose().dot(query);
        if score > best_score {
            best_score = score;
            best = j;
        }
    }
    best
}

/// Class-level top-1 retrieval: a query scores a hit when its nearest
/// gallery row by cosine carries the same label.
pub fn class_retrieval_top1(
    queries: &EmbeddingSet,
    gallery: &EmbeddingSet,
    exclude_self: bool,
) -> Result<MetricsReport> {
    check_same_dim(queries, gallery)?;
    let q_labels = queries
        .labels
        .as_ref()
        .ok_or_else(|| Error::MissingLabels("retrieval queries need labels".into()))?;
    let g_labels = gallery
        .labels
        .as_ref()
        .ok_or_else(|| Error::MissingLabels("retrieval gallery needs labels".into()))?;
    if exclude_self && queries.n() != gallery.n() {
        return Err(Error::Shape(
            "exclude_self requires query and gallery of equal size".into(),
        ));
    }
    let qrows = unit_rows(queries)?;
    let grows = unit_rows(gallery)?;
    let hits = par::map_indexed(queries.n(), |i| {
        let q = qrows.row(i).transpose();
        let j = nearest_row(&grows, &q, exclude_self.then_some(i));
        (q_labels[i], g_labels[j] == q_labels[i])
    });

    let mut correct = 0usize;
    let mut per_class: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (label, hit) in &hits {
        let entry = per_class.entry(*label).or_insert((0, 0));
        entry.1 += 1;
        if *hit {
            entry.0 += 1;
            correct += 1;
        }
    }
    Ok(MetricsReport {
        top1_accuracy: Some(correct as f64 / hits.len() as f64),
        per_class_accuracy: Some(
            per_class
                .into_iter()
                .map(|(c, (hit, total))| (c, hit as f64 / total as f64))
                .collect(),
        ),
        n_queries: hits.len(),
        ..Default::default()
    })
}

/// Zero-shot classification: predict the class whose prototype has the
/// highest cosine with the image; ties break to the lowest class id.
pub fn zero_shot(images: &EmbeddingSet, prototypes: &ClassPrototypes) -> Result<MetricsReport> {
    let labels = images
        .labels
        .as_ref()
        .ok_or_else(|| Error::MissingLabels("zero-shot images need labels".into()))?;
    if images.dim() != prototypes.data.ncols() {
        return Err(Error::Shape(format!(
            "images have dimension {}, prototypes {}",
            images.dim(),
            prototypes.data.ncols()
        )));
    }
    for &l in labels {
        if !prototypes.class_ids.contains(&l) {
            return Err(Error::Structure(format!(
                "image label {l} has no prototype"
            )));
        }
    }
    let rows = unit_rows(images)?;
    // prototype rows are unit by construction; class_ids ascend, so the
    // strict argmax below resolves ties toward the lowest class id.
    let predictions = par::map_indexed(images.n(), |i| {
        let q = rows.row(i).transpose();
        let j = nearest_row(&prototypes.data, &q, None);
        prototypes.class_ids[j]
    });

    let mut correct = 0usize;
    let mut per_class: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (i, &pred) in predictions.iter().enumerate() {
        let entry = per_class.entry(labels[i]).or_insert((0, 0));
        entry.1 += 1;
        if pred == labels[i] {
            entry.0 += 1;
            correct += 1;
        }
    }
    Ok(MetricsReport {
        top1_accuracy: Some(correct as f64 / images.n() as f64),
        per_class_accuracy: Some(
            per_class
                .into_iter()
                .map(|(c, (hit, total))| (c, hit as f64 / total as f64))
                .collect(),
        ),
        n_queries: images.n(),
        ..Default::default()
    })
}

/// Inner-product table `values[i][j] = <a_i, b_j>`.
pub fn multimodal_kernel(a: &EmbeddingSet, b: &EmbeddingSet) -> Result<KernelMatrix> {
    check_same_dim(a, b)?;
    Ok(KernelMatrix {
        values: &a.data * b.data.transpose(),
        row_source: a.model_id.clone(),
        col_source: b.model_id.clone(),
    })
}

/// Linear CKA between two kernel tables of equal shape, treating each as a
/// feature matrix with column centering. Scale- and shift-invariant; 1.0 for
/// identical tables.
pub fn cka(k1: &KernelMatrix, k2: &KernelMatrix) -> Result<f64> {
    if k1.values.shape() != k2.values.shape() {
        return Err(Error::Shape(format!(
            "kernel shapes differ: {:?} vs {:?}",
            k1.values.shape(),
            k2.values.shape()
        )));
    }
    let center = |m: &DMatrix<f64>| {
        let mut out = m.clone();
        for mut col in out.column_iter_mut() {
            let mean = col.mean();
            col.add_scalar_mut(-mean);
        }
        out
    };
    let z1 = center(&k1.values);
    let z2 = center(&k2.values);
    let cross = (z1.transpose() * &z2).norm_squared();
    let n1 = (z1.transpose() * &z1).norm();
    let n2 = (z2.transpose() * &z2).norm();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::InvalidArgument(
            "cka is undefined for zero-variance kernels".into(),
        ));
    }
    Ok(cross / (n1 * n2))
}

/// Distance between the image and text centroids.
pub fn modality_gap(images: &EmbeddingSet, texts: &EmbeddingSet) -> Result<f64> {
    check_same_dim(images, texts)?;
    if !images.normalized || !texts.normalized {
        return Err(Error::InvalidArgument(
            "modality gap expects normalized sets".into(),
        ));
    }
    Ok((images.mean_vector() - texts.mean_vector()).norm())
}

/// Result of comparing the direct and text-mediated retrieval paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwoPathReport {
    pub mean_jaccard: f64,
    pub class_match_fraction: f64,
    pub per_query_jaccard: Vec<f64>,
    pub k_used: usize,
    pub n_queries: usize,
}

/// Top-k gallery indices by cosine, lowest index first on ties.
fn top_k(gallery: &DMatrix<f64>, query: &DVector<f64>, k: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = gallery
        .row_iter()
        .enumerate()
        .map(|(j, row)| (j, row.transpose().dot(query)))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored.into_iter().map(|(j, _)| j).collect()
}

fn majority_class(indices: &[usize], labels: &[u32]) -> u32 {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &i in indices {
        *counts.entry(labels[i]).or_insert(0) += 1;
    }
    // BTreeMap iterates ascending, so the lowest class wins count ties.
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(c, _)| c)
        .unwrap()
}

/// Compare two routes from each source image into the target image space:
/// direct (map the image, retrieve top-k target images) and text-mediated
/// (nearest source text, map it, top-1 target text, top-k target images from
/// that text). Reports the mean Jaccard overlap of the two k-sets and the
/// fraction of queries whose majority classes agree.
pub fn two_path_retrieval(
    src_img: &EmbeddingSet,
    src_txt: &EmbeddingSet,
    tgt_img: &EmbeddingSet,
    tgt_txt: &EmbeddingSet,
    map: &AlignmentMap,
    k: usize,
) -> Result<TwoPathReport> {
    if src_txt.n() == 0 || tgt_txt.n() == 0 {
        return Err(Error::InvalidArgument("empty text set".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let tgt_labels = tgt_img
        .labels
        .as_ref()
        .ok_or_else(|| Error::MissingLabels("target images need labels".into()))?;
    if src_img
        .labels
        .as_ref()
        .is_none()
    {
        return Err(Error::MissingLabels("source images need labels".into()));
    }
    let k_used = k.min(tgt_img.n());

    let aligned_img = align::apply(map, src_img, None, None, false)?;
    let aligned_txt = align::apply(map, src_txt, None, None, false)?;
    let qi = unit_rows(&aligned_img)?;
    let qt = unit_rows(&aligned_txt)?;
    let si = unit_rows(src_img)?;
    let st = unit_rows(src_txt)?;
    let ti = unit_rows(tgt_img)?;
    let tt = unit_rows(tgt_txt)?;

    let per_query = par::map_indexed(src_img.n(), |i| {
        // direct path
        let direct = top_k(&ti, &qi.row(i).transpose(), k_used);
        // text-mediated path
        let src_text_idx = nearest_row(&st, &si.row(i).transpose(), None);
        let mapped_text = qt.row(src_text_idx).transpose();
        let tgt_text_idx = nearest_row(&tt, &mapped_text, None);
        let mediated = top_k(&ti, &tt.row(tgt_text_idx).transpose(), k_used);

        let a: std::collections::BTreeSet<usize> = direct.iter().copied().collect();
        let b: std::collections::BTreeSet<usize> = mediated.iter().copied().collect();
        let inter = a.intersection(&b).count();
        let union = a.union(&b).count();
        let jaccard = inter as f64 / union as f64;
        let class_match = majority_class(&direct, tgt_labels) == majority_class(&mediated, tgt_labels);
        (jaccard, class_match)
    });

    let n = per_query.len();
    let mean_jaccard = per_query.iter().map(|(j, _)| j).sum::<f64>() / n as f64;
    let matches = per_query.iter().filter(|(_, m)| *m).count();
    Ok(TwoPathReport {
        mean_jaccard,
        class_match_fraction: matches as f64 / n as f64,
        per_query_jaccard: per_query.into_iter().map(|(j, _)| j).collect(),
        k_used,
        n_queries: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embstore::normalize;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn set_from(rows: &[&[f64]]) -> EmbeddingSet {
        let n = rows.len();
        let d = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let set = EmbeddingSet::from_rows(DMatrix::from_row_slice(n, d, &flat), false).unwrap();
        normalize(&set, 1e-12).unwrap()
    }

    #[test]
    fn paired_cosine_identical_and_orthogonal() {
        let a = set_from(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let r = paired_cosine(&a, &a).unwrap();
        assert_relative_eq!(r.mean_cosine.unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.std_cosine.unwrap(), 0.0, epsilon = 1e-12);

        let b = set_from(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let r = paired_cosine(&a, &b).unwrap();
        assert_relative_eq!(r.mean_cosine.unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn paired_cosine_rotation_angle() {
        let theta = 60.0_f64.to_radians();
        let rot = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
        let a = set_from(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0]]);
        let b = EmbeddingSet {
            data: &a.data * rot.transpose(),
            normalized: true,
            ..a.clone()
        };
        let r = paired_cosine(&a, &b).unwrap();
        assert_relative_eq!(r.mean_cosine.unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn paired_l2_translation() {
        let a = set_from(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let mut b = a.clone();
        for mut row in b.data.row_iter_mut() {
            row += nalgebra::RowDVector::from_vec(vec![0.3, -0.4]);
        }
        b.normalized = false;
        let r = paired_l2(&a, &b).unwrap();
        assert_relative_eq!(r.mean_l2.unwrap(), 0.5, epsilon = 1e-12);

        let zero = paired_l2(&a, &a).unwrap();
        assert_relative_eq!(zero.mean_l2.unwrap(), 0.0, epsilon = 1e-15);

        let c = set_from(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let sqrt2 = paired_l2(&a, &c).unwrap();
        assert_relative_eq!(sqrt2.mean_l2.unwrap(), 2.0_f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn retrieval_gallery_equals_queries() {
        let mut a = set_from(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 0.0]]);
        a.labels = Some(vec![0, 1, 2]);
        let r = class_retrieval_top1(&a, &a, false).unwrap();
        assert_relative_eq!(r.top1_accuracy.unwrap(), 1.0, epsilon = 0.0);
    }

    #[test]
    fn retrieval_two_classes_antipodal() {
        let mut gallery = set_from(&[&[1.0, 0.0], &[-1.0, 0.0]]);
        gallery.labels = Some(vec![0, 1]);
        let mut query = set_from(&[&[0.9, 0.1]]);
        query.labels = Some(vec![0]);
        let r = class_retrieval_top1(&query, &gallery, false).unwrap();
        assert_relative_eq!(r.top1_accuracy.unwrap(), 1.0, epsilon = 0.0);
    }

    #[test]
    fn zero_shot_prototype_identity() {
        let mut imgs = set_from(&[&[1.0, 0.0], &[0.0, 1.0]]);
        imgs.labels = Some(vec![0, 1]);
        let protos = crate::embstore::class_prototypes(&imgs).unwrap();
        let r = zero_shot(&imgs, &protos).unwrap();
        assert_relative_eq!(r.top1_accuracy.unwrap(), 1.0, epsilon = 0.0);
    }

    #[test]
    fn zero_shot_uncovered_label_errors() {
        let mut imgs = set_from(&[&[1.0, 0.0]]);
        imgs.labels = Some(vec![5]);
        let mut protos_src = set_from(&[&[1.0, 0.0]]);
        protos_src.labels = Some(vec![0]);
        let protos = crate::embstore::class_prototypes(&protos_src).unwrap();
        assert!(matches!(zero_shot(&imgs, &protos), Err(Error::Structure(_))));
    }

    #[test]
    fn kernel_identity_pairs() {
        let a = set_from(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let k = multimodal_kernel(&a, &a).unwrap();
        assert!((k.values.clone() - DMatrix::identity(2, 2)).norm() <= 1e-12);
        assert!(k.values.iter().all(|v| v.abs() <= 1.0 + 1e-9));
    }

    #[test]
    fn cka_self_and_shift() {
        let vals = DMatrix::from_row_slice(3, 3, &[0.1, 0.5, 0.2, 0.9, 0.3, 0.4, 0.2, 0.8, 0.6]);
        let k1 = KernelMatrix {
            values: vals.clone(),
            row_source: "a".into(),
            col_source: "b".into(),
        };
        assert_relative_eq!(cka(&k1, &k1).unwrap(), 1.0, epsilon = 1e-12);

        let k2 = KernelMatrix {
            values: vals.map(|v| 2.5 * v + 0.7),
            row_source: "a".into(),
            col_source: "b".into(),
        };
        assert_relative_eq!(cka(&k1, &k2).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn modality_gap_basics() {
        let imgs = set_from(&[&[1.0, 0.0], &[1.0, 0.0]]);
        let texts = set_from(&[&[0.0, 1.0], &[0.0, 1.0]]);
        assert_relative_eq!(
            modality_gap(&imgs, &texts).unwrap(),
            2.0_f64.sqrt(),
            epsilon = 1e-12
        );
        assert_relative_eq!(modality_gap(&imgs, &imgs).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn two_path_single_gallery_row() {
        let mut src_img = set_from(&[&[1.0, 0.0]]);
        src_img.labels = Some(vec![0]);
        let src_txt = set_from(&[&[0.6, 0.8]]);
        let mut tgt_img = set_from(&[&[1.0, 0.0]]);
        tgt_img.labels = Some(vec![0]);
        let tgt_txt = set_from(&[&[0.6, 0.8]]);
        let map = AlignmentMap::identity(2);
        let r = two_path_retrieval(&src_img, &src_txt, &tgt_img, &tgt_txt, &map, 1).unwrap();
        assert_relative_eq!(r.mean_jaccard, 1.0, epsilon = 0.0);
        assert_relative_eq!(r.class_match_fraction, 1.0, epsilon = 0.0);
    }
}
