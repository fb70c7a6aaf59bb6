//! Optimality, recovery, isometry, centering, and composition invariants of
//! the alignment fits, checked against planted ground truth and random
//! competitors.

use embalign_core::align::{
    apply, compose, fit_linear, fit_orthogonal, polar_orthogonal, semi_orthogonality_defect,
    AlignmentMap, MapKind,
};
use embalign_core::embstore::{Dtype, EmbeddingSet, Modality};
use embalign_core::synth::random_semi_orthogonal;
use embalign_core::theory::sym_spanning;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn unit_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingSet {
    let mut data = DMatrix::zeros(n, d);
    for i in 0..n {
        let v: DVector<f64> = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        data.row_mut(i).copy_from(&(&v / v.norm()).transpose());
    }
    EmbeddingSet {
        data,
        labels: None,
        class_names: None,
        model_id: "a".into(),
        modality: Some(Modality::Image),
        dataset_id: "t".into(),
        normalized: true,
        dtype: Dtype::F64,
    }
}

fn transported(set: &EmbeddingSet, q: &DMatrix<f64>) -> EmbeddingSet {
    EmbeddingSet {
        data: &set.data * q.transpose(),
        model_id: "b".into(),
        ..set.clone()
    }
}

fn fit_cost(source: &EmbeddingSet, target: &EmbeddingSet, q: &DMatrix<f64>) -> f64 {
    (&target.data - &source.data * q.transpose()).norm()
}

#[test]
fn procrustes_beats_random_semi_orthogonal_competitors() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for (d, dt) in [(3, 3), (4, 7)] {
        let source = unit_set(&mut rng, 40, d);
        let mut target = unit_set(&mut rng, 40, dt);
        // partially related target so the optimum is nontrivial
        let q0 = random_semi_orthogonal(d, dt, 5).unwrap();
        target.data = (&source.data * q0.transpose() + target.data * 0.3).map(|v| v);
        for mut row in target.data.row_iter_mut() {
            let n = row.norm();
            row /= n;
        }
        let fitted = fit_orthogonal(&source, &target, false).unwrap();
        let best = fit_cost(&source, &target, &fitted.q);
        for trial in 0..100 {
            let q = random_semi_orthogonal(d, dt, 1000 + trial).unwrap();
            assert!(
                best <= fit_cost(&source, &target, &q) + 1e-9,
                "random competitor beat the closed form at d={d}, dt={dt}, trial={trial}"
            );
        }
    }
}

#[test]
fn exact_recovery_from_spanning_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for d in [3usize, 5] {
        let n = d * (d + 1) / 2 + 3;
        let source = unit_set(&mut rng, n, d);
        assert!(sym_spanning(&source).unwrap().spanning, "d={d} rows must span");
        let q0 = random_semi_orthogonal(d, d, 77).unwrap();
        let target = transported(&source, &q0);
        let fitted = fit_orthogonal(&source, &target, false).unwrap();
        assert!(
            (&fitted.q - &q0).norm() <= 1e-8,
            "recovery error {} at d={d}",
            (&fitted.q - &q0).norm()
        );
    }
}

#[test]
fn orthogonal_apply_preserves_gram_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let set = unit_set(&mut rng, 25, 6);
    let q = random_semi_orthogonal(6, 9, 31).unwrap();
    let map = AlignmentMap::new(q, None, None, MapKind::Orthogonal).unwrap();
    let out = apply(&map, &set, None, None, false).unwrap();
    let gram_in = &set.data * set.data.transpose();
    let gram_out = &out.data * out.data.transpose();
    assert!((gram_in - gram_out).abs().max() <= 1e-10);
}

#[test]
fn centered_fit_reduces_to_pure_rotation_in_exact_regime() {
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let source = unit_set(&mut rng, 30, 5);
    let q0 = random_semi_orthogonal(5, 5, 9).unwrap();
    let target = transported(&source, &q0);

    let centered = fit_orthogonal(&source, &target, true).unwrap();
    let mu_s = centered.mu_source.clone().unwrap();
    let mu_t = centered.mu_target.clone().unwrap();
    assert!(
        (&centered.q * mu_s - mu_t).norm() <= 1e-8,
        "stored means must be related by the fitted map"
    );

    let uncentered = fit_orthogonal(&source, &target, false).unwrap();
    let via_centered = apply(&centered, &source, None, None, false).unwrap();
    let via_plain = apply(&uncentered, &source, None, None, false).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..source.n() {
        worst = worst.max((via_centered.row_vec(i) - via_plain.row_vec(i)).norm());
    }
    assert!(worst <= 1e-8, "centered and plain application differ by {worst}");
}

#[test]
fn compose_is_associative_pointwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    for trial in 0..10 {
        let d = 4;
        let mk = |seed: u64, with_means: bool| {
            let q = random_semi_orthogonal(d, d, seed).unwrap();
            let means = with_means.then(|| {
                (
                    DVector::from_fn(d, |_, _| 0.2 * rng.sample::<f64, _>(StandardNormal)),
                    DVector::from_fn(d, |_, _| 0.2 * rng.sample::<f64, _>(StandardNormal)),
                )
            });
            match means {
                Some((s, t)) => AlignmentMap::new(q, Some(s), Some(t), MapKind::Orthogonal).unwrap(),
                None => AlignmentMap::new(q, None, None, MapKind::Orthogonal).unwrap(),
            }
        };
        let m1 = mk(600 + trial, trial % 2 == 0);
        let m2 = mk(700 + trial, true);
        let m3 = mk(800 + trial, trial % 3 == 0);
        let left = compose(&compose(&m1, &m2).unwrap(), &m3).unwrap();
        let right = compose(&m1, &compose(&m2, &m3).unwrap()).unwrap();
        for _ in 0..5 {
            let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let a = left.transform_vector(&z).unwrap();
            let b = right.transform_vector(&z).unwrap();
            assert!((a - b).norm() <= 1e-10);
        }
    }
}

#[test]
fn fit_is_invariant_to_joint_row_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    let source = unit_set(&mut rng, 30, 5);
    let q0 = random_semi_orthogonal(5, 8, 13).unwrap();
    let mut target = transported(&source, &q0);
    // blur the target a little so the fit is not an exact recovery
    for mut row in target.data.row_iter_mut() {
        for v in row.iter_mut() {
            *v += 0.01 * rng.sample::<f64, _>(StandardNormal);
        }
        let n = row.norm();
        row /= n;
    }
    let held_out = unit_set(&mut rng, 10, 5);

    use rand::seq::SliceRandom;
    let mut perm: Vec<usize> = (0..source.n()).collect();
    perm.shuffle(&mut rng);
    let source_p = source.select_rows(&perm).unwrap();
    let target_p = target.select_rows(&perm).unwrap();

    let plain = fit_orthogonal(&source, &target, false).unwrap();
    let permuted = fit_orthogonal(&source_p, &target_p, false).unwrap();
    let a = apply(&plain, &held_out, None, None, false).unwrap();
    let b = apply(&permuted, &held_out, None, None, false).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..held_out.n() {
        worst = worst.max((a.row_vec(i) - b.row_vec(i)).norm());
    }
    assert!(worst <= 1e-9, "permutation changed the fit by {worst}");
}

#[test]
fn polar_factor_error_bounded_by_gram_defect() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for trial in 0..20 {
        let d = 5;
        let q0 = random_semi_orthogonal(d, d, 2000 + trial).unwrap();
        // A = Q0 (I + s S) with small symmetric S
        let b = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let s = (&b + b.transpose()) * 0.5;
        let a_mat = &q0 * (DMatrix::identity(d, d) + &s * 0.01);
        let linear = AlignmentMap::new(a_mat.clone(), None, None, MapKind::Linear).unwrap();
        let polar = polar_orthogonal(&linear).unwrap();
        assert!(semi_orthogonality_defect(&polar.q) <= 1e-10);

        let spectral = |m: &DMatrix<f64>| {
            m.clone()
                .svd(false, false)
                .singular_values
                .iter()
                .copied()
                .fold(0.0, f64::max)
        };
        let gram_defect = spectral(&(a_mat.transpose() * &a_mat - DMatrix::identity(d, d)));
        let polar_error = spectral(&(&polar.q - &q0));
        assert!(
            polar_error <= gram_defect + 1e-12,
            "polar error {polar_error} exceeds gram defect {gram_defect}"
        );
    }
}

#[test]
fn linear_fit_matches_orthogonal_on_planted_isometry() {
    let mut rng = ChaCha8Rng::seed_from_u64(1100);
    let source = unit_set(&mut rng, 40, 4);
    let q0 = random_semi_orthogonal(4, 4, 3).unwrap();
    let target = transported(&source, &q0);
    let linear = fit_linear(&source, &target, false, 0.0).unwrap();
    assert!((&linear.q - &q0).norm() <= 1e-10);
}
