//! Seeded instance sweeps that exercise the perturbation bounds, the margin
//! guarantee, and the PMI constant-shift identity on generated worlds
//! satisfying each result's preconditions. Instances are independent and
//! seeded individually, so sweeps parallelize without changing results.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::align::{AlignmentMap, AnchorSet, MapKind};
use crate::embstore::{Dtype, EmbeddingSet};
use crate::metrics::KernelMatrix;
use crate::par;
use crate::synth;
use crate::theory;
use crate::Result;

/// One verified instance, serialized into theory reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundInstance {
    pub seed: u64,
    pub epsilon: f64,
    pub bound_value: f64,
    pub observed_max: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginInstance {
    pub seed: u64,
    pub gamma: f64,
    pub eta: f64,
    pub guaranteed: bool,
    pub retrieval_correct: bool,
    /// False only when `guaranteed` held but retrieval failed.
    pub satisfied: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShiftInstance {
    pub seed: u64,
    pub delta: f64,
    pub max_residual: f64,
    pub satisfied: bool,
}

fn unit_rows_set(rng: &mut ChaCha8Rng, n: usize, d: usize) -> EmbeddingSet {
    let mut data = DMatrix::zeros(n, d);
    for i in 0..n {
        let v: DVector<f64> = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        data.row_mut(i).copy_from(&(&v / v.norm()).transpose());
    }
    EmbeddingSet {
        data,
        labels: None,
        class_names: None,
        model_id: String::new(),
        modality: None,
        dataset_id: String::new(),
        normalized: true,
        dtype: Dtype::F64,
    }
}

fn unit_columns(rng: &mut ChaCha8Rng, rows: usize, cols: usize, sigma_floor: f64) -> DMatrix<f64> {
    loop {
        let mut m = DMatrix::zeros(rows, cols);
        for j in 0..cols {
            let v: DVector<f64> =
                DVector::from_fn(rows, |_, _| rng.sample::<f64, _>(StandardNormal));
            m.set_column(j, &(&v / v.norm()));
        }
        let sigma_min = m
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if sigma_min > sigma_floor {
            return m;
        }
    }
}

/// Columns mapped by `q` with pre-normalization noise, renormalized.
fn perturbed_columns(
    rng: &mut ChaCha8Rng,
    q: &DMatrix<f64>,
    cols: &DMatrix<f64>,
    sigma: f64,
) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(q.nrows(), cols.ncols());
    for j in 0..cols.ncols() {
        let mut v = q * cols.column(j);
        if sigma > 0.0 {
            v += DVector::from_fn(q.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal)) * sigma;
        }
        out.set_column(j, &(&v / v.norm()));
    }
    out
}

/// Linear-identification bound on one seeded instance: square world,
/// perturbed target model, measured anchor-kernel discrepancy.
pub fn pert_x_instance(seed: u64) -> Result<BoundInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 4 + (rng.random::<u32>() % 5) as usize; // 4..=8
    let sigma = rng.random::<f64>() * 0.03;
    let q = synth::random_semi_orthogonal(d, d, seed ^ 0x1111)?;

    let g = unit_columns(&mut rng, d, d, 0.05);
    let g_tilde = perturbed_columns(&mut rng, &q, &g, sigma);
    let f = unit_columns(&mut rng, d, d, 0.05);
    let anchors = AnchorSet { g, g_tilde, f };

    let f_a = unit_rows_set(&mut rng, 50, d);
    let f_b = synth::transport_rows(&f_a, &q, sigma, seed ^ 0x2222, "b")?;

    let k_a = KernelMatrix {
        values: &f_a.data * &anchors.g,
        row_source: "a".into(),
        col_source: "a".into(),
    };
    let k_b = KernelMatrix {
        values: &f_b.data * &anchors.g_tilde,
        row_source: "b".into(),
        col_source: "b".into(),
    };
    let report = theory::check_linear_bound(&anchors, &f_a, &f_b, &k_a, &k_b)?;
    Ok(BoundInstance {
        seed,
        epsilon: report.epsilon,
        bound_value: report.bound_value,
        observed_max: report.observed_max,
        satisfied: report.satisfied,
    })
}

/// Text-side bound on one seeded instance, rectangular half the time.
pub fn pert_y_instance(seed: u64) -> Result<BoundInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 4 + (rng.random::<u32>() % 4) as usize; // 4..=7
    let d_tilde = if seed % 2 == 0 { d } else { d + 3 };
    let sigma = rng.random::<f64>() * 0.03;
    let q_mat = synth::random_semi_orthogonal(d, d_tilde, seed ^ 0x3333)?;
    let map = AlignmentMap::new(q_mat.clone(), None, None, MapKind::Orthogonal)?;

    let f = unit_columns(&mut rng, d, d, 0.05);
    let f_b = perturbed_columns(&mut rng, &q_mat, &f, sigma);
    let mut delta_f: f64 = 0.0;
    for j in 0..d {
        delta_f = delta_f.max((f_b.column(j) - &q_mat * f.column(j)).norm());
    }

    let g_a = unit_rows_set(&mut rng, 40, d);
    let g_b = synth::transport_rows(&g_a, &q_mat, sigma, seed ^ 0x4444, "b")?;
    let mut epsilon_prime: f64 = 0.0;
    for j in 0..d {
        for i in 0..g_a.n() {
            let ka = f.column(j).dot(&g_a.row_vec(i));
            let kb = f_b.column(j).dot(&g_b.row_vec(i));
            epsilon_prime = epsilon_prime.max((ka - kb).abs());
        }
    }

    let report = theory::check_text_bound(&f, &map, &g_a, &g_b, epsilon_prime, delta_f)?;
    Ok(BoundInstance {
        seed,
        epsilon: report.epsilon_prime,
        bound_value: report.bound_value,
        observed_max: report.observed_max,
        satisfied: report.satisfied,
    })
}

/// Low-dimensional projection bound on one seeded instance. Even seeds take
/// the noisy route; odd seeds build the exact subspace world whose target
/// prompts carry an unidentifiable component outside the image span.
pub fn proj_instance(seed: u64) -> Result<BoundInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = 3 + (rng.random::<u32>() % 3) as usize; // 3..=5
    let d = r + 2 + (rng.random::<u32>() % 3) as usize;
    let d_tilde = d + (rng.random::<u32>() % 3) as usize;
    let q_mat = synth::random_semi_orthogonal(d, d_tilde, seed ^ 0x5555)?;
    let map = AlignmentMap::new(q_mat.clone(), None, None, MapKind::Orthogonal)?;
    let anchors = unit_columns(&mut rng, d, r, 0.05);

    let m = 30;
    if seed % 2 == 0 {
        let sigma = rng.random::<f64>() * 0.03;
        let f_b = perturbed_columns(&mut rng, &q_mat, &anchors, sigma);
        let mut delta_f: f64 = 0.0;
        for j in 0..r {
            delta_f = delta_f.max((f_b.column(j) - &q_mat * anchors.column(j)).norm());
        }
        let g_a = unit_rows_set(&mut rng, m, d);
        let g_b = synth::transport_rows(&g_a, &q_mat, sigma, seed ^ 0x6666, "b")?;
        let mut epsilon: f64 = 0.0;
        for j in 0..r {
            for i in 0..m {
                let ka = anchors.column(j).dot(&g_a.row_vec(i));
                let kb = f_b.column(j).dot(&g_b.row_vec(i));
                epsilon = epsilon.max((ka - kb).abs());
            }
        }
        let report =
            theory::subspace_projection_bound(&anchors, &map, &g_a, &g_b, epsilon, delta_f)?;
        Ok(BoundInstance {
            seed,
            epsilon: report.epsilon,
            bound_value: report.bound_value,
            observed_max: report.observed_max,
            satisfied: report.satisfied,
        })
    } else {
        // Exact regime: target prompts are the transported identifiable part
        // plus junk orthogonal to the transported span.
        let basis = anchors.clone().qr().q();
        let g_a = unit_rows_set(&mut rng, m, d);
        let mut g_b_data = DMatrix::zeros(m, d_tilde);
        let qb = &q_mat * &basis;
        for i in 0..m {
            let g = g_a.row_vec(i);
            let u = &basis * (basis.transpose() * &g);
            let junk_norm = (1.0 - u.norm_squared()).max(0.0).sqrt();
            // a direction orthogonal to the transported span
            let mut junk = DVector::from_fn(d_tilde, |_, _| rng.sample::<f64, _>(StandardNormal));
            junk -= &qb * (qb.transpose() * &junk);
            let n = junk.norm();
            let g_t = if n > 1e-9 {
                &q_mat * &u + junk * (junk_norm / n)
            } else {
                &q_mat * &u
            };
            let norm = g_t.norm();
            g_b_data.row_mut(i).copy_from(&(g_t / norm).transpose());
        }
        let g_b = EmbeddingSet {
            data: g_b_data,
            normalized: true,
            ..unit_rows_set(&mut rng, 1, d_tilde)
        };
        let report = theory::subspace_projection_bound(&anchors, &map, &g_a, &g_b, 0.0, 0.0)?;
        Ok(BoundInstance {
            seed,
            epsilon: 0.0,
            bound_value: report.bound_value,
            observed_max: report.observed_max,
            satisfied: report.satisfied,
        })
    }
}

/// Margin world on one seeded instance, mixing guaranteed and adversarial
/// regimes. `satisfied` records the implication guaranteed => correct.
pub fn margin_instance(seed: u64) -> Result<MarginInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = 2 + (rng.random::<u32>() % 3) as usize; // 2..=4
    let r = k + (rng.random::<u32>() % 3) as usize;
    let d = r + 2 * k + 1 + (rng.random::<u32>() % 3) as usize;
    let gamma = 0.05 + 0.9 * rng.random::<f64>();
    let eta = (1.0 - gamma) * rng.random::<f64>();
    let adversarial = rng.random::<bool>();
    let world = synth::make_margin_world(d, r, k, gamma, eta, adversarial, seed ^ 0x7777)?;
    let report = theory::margin_noise(
        &world.basis,
        &world.map,
        &world.prototypes_a,
        &world.prototypes_b,
    )?;
    Ok(MarginInstance {
        seed,
        gamma: report.gamma,
        eta: report.eta,
        guaranteed: report.guaranteed,
        retrieval_correct: report.retrieval_correct,
        satisfied: !report.guaranteed || report.retrieval_correct,
    })
}

/// Curation world on one seeded instance: residual after removing the best
/// constant shift between two curated PMI tables must vanish. With
/// `violate_preconditions` the weights skip the mean correction, so the
/// residual is informational only.
pub fn curation_instance(seed: u64, violate_preconditions: bool) -> Result<ShiftInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bx = 2 + (rng.random::<u32>() % 3) as usize;
    let by = 2 + (rng.random::<u32>() % 3) as usize;
    let sx = 2 + (rng.random::<u32>() % 3) as usize;
    let sy = 2 + (rng.random::<u32>() % 3) as usize;
    let scenario = synth::make_curation_world(bx * sx, by * sy, bx, by, 2, seed ^ 0x8888)?;

    let (j1, j2) = if violate_preconditions {
        let corrupt = |rng: &mut ChaCha8Rng, joint: &theory::DiscreteJoint| {
            let u = DVector::from_fn(joint.p.nrows(), |_, _| rng.random::<f64>() + 0.2);
            let v = DVector::from_fn(joint.p.ncols(), |_, _| rng.random::<f64>() + 0.2);
            scenario
                .p_star
                .clone()
                .with_weights(u, v)
                .and_then(|j| j.curated())
        };
        (
            corrupt(&mut rng, &scenario.p_star)?,
            corrupt(&mut rng, &scenario.p_star)?,
        )
    } else {
        (scenario.joints[0].clone(), scenario.joints[1].clone())
    };
    let k1 = theory::pmi_matrix(&j1, false)?;
    let k2 = theory::pmi_matrix(&j2, false)?;
    let (delta, max_residual) = theory::check_constant_shift(&k1, &k2)?;
    Ok(ShiftInstance {
        seed,
        delta,
        max_residual,
        satisfied: violate_preconditions || max_residual <= 1e-10,
    })
}

/// Aggregate of a full verification run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheoryRun {
    pub instances_per_check: usize,
    pub base_seed: u64,
    pub violate_preconditions: bool,
    pub pert_x: Vec<BoundInstance>,
    pub pert_y: Vec<BoundInstance>,
    pub projection: Vec<BoundInstance>,
    pub margin: Vec<MarginInstance>,
    pub curation: Vec<ShiftInstance>,
}

impl TheoryRun {
    /// Seeds of instances whose check failed.
    pub fn violations(&self) -> Vec<(&'static str, u64)> {
        let mut out = Vec::new();
        for b in self.pert_x.iter().filter(|b| !b.satisfied) {
            out.push(("pert_x", b.seed));
        }
        for b in self.pert_y.iter().filter(|b| !b.satisfied) {
            out.push(("pert_y", b.seed));
        }
        for b in self.projection.iter().filter(|b| !b.satisfied) {
            out.push(("projection", b.seed));
        }
        for m in self.margin.iter().filter(|m| !m.satisfied) {
            out.push(("margin", m.seed));
        }
        for c in self.curation.iter().filter(|c| !c.satisfied) {
            out.push(("curation", c.seed));
        }
        out
    }
}

/// Run every sweep with `instances` per check.
pub fn run_theory_sweeps(
    instances: usize,
    base_seed: u64,
    violate_preconditions: bool,
) -> Result<TheoryRun> {
    let collect_bounds = |f: fn(u64) -> Result<BoundInstance>, offset: u64| {
        par::map_indexed(instances, |i| f(base_seed + offset + i as u64))
            .into_iter()
            .collect::<Result<Vec<_>>>()
    };
    let pert_x = collect_bounds(pert_x_instance, 0)?;
    let pert_y = collect_bounds(pert_y_instance, 1_000_000)?;
    let projection = collect_bounds(proj_instance, 2_000_000)?;
    let margin = par::map_indexed(instances, |i| margin_instance(base_seed + 3_000_000 + i as u64))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let curation = par::map_indexed(instances, |i| {
        curation_instance(base_seed + 4_000_000 + i as u64, violate_preconditions)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(TheoryRun {
        instances_per_check: instances,
        base_seed,
        violate_preconditions,
        pert_x,
        pert_y,
        projection,
        margin,
        curation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_sweep_has_no_violations() {
        let run = run_theory_sweeps(25, 1000, false).unwrap();
        assert!(run.violations().is_empty(), "{:?}", run.violations());
    }

    #[test]
    fn violated_preconditions_show_nonzero_residuals() {
        let run = run_theory_sweeps(10, 2000, true).unwrap();
        // informational: residuals exist but nothing is flagged
        assert!(run.violations().is_empty());
        assert!(run.curation.iter().any(|c| c.max_residual > 1e-6));
    }

    #[test]
    fn exact_projection_instances_have_tiny_rho() {
        let inst = proj_instance(4001).unwrap(); // odd seed: exact world
        assert!(inst.satisfied);
        assert!(inst.bound_value <= 1e-9);
    }
}
