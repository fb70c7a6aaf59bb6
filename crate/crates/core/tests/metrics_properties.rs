//! Decision-level invariants of the metric operations, including the
//! independent exhaustive references they must match exactly.

use embalign_core::align::{apply, fit_orthogonal, AlignmentMap, MapKind};
use embalign_core::embstore::{class_prototypes, Dtype, EmbeddingSet, Modality};
use embalign_core::metrics::{cka, class_retrieval_top1, multimodal_kernel, paired_cosine, zero_shot};
use embalign_core::synth::random_semi_orthogonal;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn labeled_unit_set(rng: &mut ChaCha8Rng, n: usize, d: usize, k: u32) -> EmbeddingSet {
    let mut data = DMatrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let v: DVector<f64> = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        data.row_mut(i).copy_from(&(&v / v.norm()).transpose());
        labels.push(rng.random::<u32>() % k);
    }
    EmbeddingSet {
        data,
        labels: Some(labels),
        class_names: None,
        model_id: String::new(),
        modality: Some(Modality::Image),
        dataset_id: String::new(),
        normalized: true,
        dtype: Dtype::F64,
    }
}

/// Independent reference: exhaustive double loop over queries and gallery,
/// cosines from first principles, lowest index on ties.
fn brute_force_top1(queries: &EmbeddingSet, gallery: &EmbeddingSet) -> Vec<usize> {
    let mut out = Vec::with_capacity(queries.n());
    for i in 0..queries.n() {
        let q = queries.row_vec(i);
        let qn = q.norm();
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for j in 0..gallery.n() {
            let g = gallery.row_vec(j);
            let score = q.dot(&g) / (qn * g.norm());
            if score > best_score {
                best_score = score;
                best = j;
            }
        }
        out.push(best);
    }
    out
}

#[test]
fn retrieval_matches_exhaustive_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for trial in 0..5 {
        let queries = labeled_unit_set(&mut rng, 60 + trial, 5, 4);
        let gallery = labeled_unit_set(&mut rng, 90 + trial, 5, 4);
        let report = class_retrieval_top1(&queries, &gallery, false).unwrap();
        let reference = brute_force_top1(&queries, &gallery);
        let g_labels = gallery.labels.as_ref().unwrap();
        let q_labels = queries.labels.as_ref().unwrap();
        let expected = reference
            .iter()
            .zip(q_labels)
            .filter(|(&j, &l)| g_labels[j] == l)
            .count() as f64
            / queries.n() as f64;
        assert_eq!(report.top1_accuracy.unwrap(), expected);
    }
}

#[test]
fn decisions_are_invariant_under_orthogonal_transforms() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let queries = labeled_unit_set(&mut rng, 50, 6, 5);
    let gallery = labeled_unit_set(&mut rng, 80, 6, 5);
    let q = random_semi_orthogonal(6, 10, 8).unwrap();
    let map = AlignmentMap::new(q, None, None, MapKind::Orthogonal).unwrap();
    let queries_t = apply(&map, &queries, None, None, false).unwrap();
    let gallery_t = apply(&map, &gallery, None, None, false).unwrap();

    // query-by-query, not merely equal accuracy
    assert_eq!(
        brute_force_top1(&queries, &gallery),
        brute_force_top1(&queries_t, &gallery_t)
    );

    let mut protos_src = labeled_unit_set(&mut rng, 5, 6, 5);
    protos_src.labels = Some(vec![0, 1, 2, 3, 4]);
    let protos = class_prototypes(&protos_src).unwrap();
    let protos_t_set = apply(&map, &protos_src, None, None, false).unwrap();
    let protos_t = class_prototypes(&protos_t_set).unwrap();

    let zs_plain = zero_shot(&queries, &protos).unwrap();
    let zs_mapped = zero_shot(&queries_t, &protos_t).unwrap();
    assert_eq!(zs_plain.per_class_accuracy, zs_mapped.per_class_accuracy);
    assert_eq!(zs_plain.top1_accuracy, zs_mapped.top1_accuracy);
}

#[test]
fn cka_is_invariant_to_positive_scale_and_constant_shift() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let a = labeled_unit_set(&mut rng, 30, 4, 3);
    let b = labeled_unit_set(&mut rng, 20, 4, 3);
    let k1 = multimodal_kernel(&a, &b).unwrap();
    for (alpha, beta) in [(2.0, 0.0), (0.5, 1.0), (3.0, -0.7)] {
        let mut k2 = k1.clone();
        k2.values = k1.values.map(|v| alpha * v + beta);
        let value = cka(&k1, &k2).unwrap();
        assert!((value - 1.0).abs() <= 1e-12, "cka({alpha}, {beta}) = {value}");
    }
}

#[test]
fn cka_against_noise_is_small() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let imgs = labeled_unit_set(&mut rng, 200, 8, 4);
    let txts = labeled_unit_set(&mut rng, 200, 8, 4);
    let k1 = multimodal_kernel(&imgs, &txts).unwrap();
    let mut k2 = k1.clone();
    k2.values = DMatrix::from_fn(200, 200, |_, _| rng.sample::<f64, _>(StandardNormal));
    let value = cka(&k1, &k2).unwrap();
    assert!(value < 0.1, "independent noise should decorrelate, got {value}");
}

#[test]
fn centered_fit_absorbs_constant_target_offset() {
    // exact planted world; the paired cosine after alignment must not
    // change when every target row is shifted by one constant vector
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let source = labeled_unit_set(&mut rng, 40, 5, 4);
    let q0 = random_semi_orthogonal(5, 5, 21).unwrap();
    let clean = EmbeddingSet {
        data: &source.data * q0.transpose(),
        ..source.clone()
    };
    let offset = DVector::from_fn(5, |_, _| 0.3 * rng.sample::<f64, _>(StandardNormal));
    let mut shifted = clean.clone();
    for mut row in shifted.data.row_iter_mut() {
        row += offset.transpose();
    }
    shifted.normalized = false;

    let fit_clean = fit_orthogonal(&source, &clean, true).unwrap();
    let cos_clean = paired_cosine(
        &apply(&fit_clean, &source, None, None, false).unwrap(),
        &clean,
    )
    .unwrap()
    .mean_cosine
    .unwrap();

    let fit_shifted = fit_orthogonal(&source, &shifted, true).unwrap();
    let aligned = apply(&fit_shifted, &source, None, None, false).unwrap();
    let cos_shifted = paired_cosine(&aligned, &shifted).unwrap().mean_cosine.unwrap();

    assert!((cos_clean - 1.0).abs() <= 1e-12);
    assert!(
        (cos_shifted - cos_clean).abs() <= 1e-12,
        "constant offset leaked through centering: {cos_shifted} vs {cos_clean}"
    );
}
