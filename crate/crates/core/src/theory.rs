//! Numerical embodiment of the identifiability results: the symmetric-
//! spanning diagnostic, the anchor perturbation bounds, the margin/noise
//! retrieval guarantee, and the discrete PMI/curation invariance identities.
//!
//! Every check here verifies an inequality or identity that holds by proof
//! when its preconditions do; the functions measure both sides and report
//! them rather than trusting the caller.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::align::{self, AlignmentMap, AnchorSet, MapKind};
use crate::embstore::EmbeddingSet;
use crate::error::Error;
use crate::metrics::KernelMatrix;
use crate::Result;

/// Absolute slack allowed when deciding `observed <= bound`.
pub const BOUND_TOL: f64 = 1e-9;

/// Outcome of one perturbation-bound check.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct BoundReport {
    /// Max kernel discrepancy over the checked pairs.
    pub epsilon: f64,
    pub epsilon_prime: f64,
    /// Max anchor-image deviation from the isometry.
    pub delta_f: f64,
    pub sigma_min_gtilde: f64,
    pub sigma_min_f: f64,
    pub bound_value: f64,
    pub observed_max: f64,
    pub satisfied: bool,
    /// Projection bound for the low-dimensional variant.
    pub rho: f64,
}

/// Outcome of the margin/noise retrieval check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginReport {
    pub gamma: f64,
    pub eta: f64,
    pub guaranteed: bool,
    pub retrieval_correct: bool,
}

/// Finite joint probability table with optional per-modality curation
/// weights. Entries must be strictly positive and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint {
    pub p: DMatrix<f64>,
    pub u: Option<DVector<f64>>,
    pub v: Option<DVector<f64>>,
}

impl DiscreteJoint {
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        let joint = DiscreteJoint { p, u: None, v: None };
        joint.validate()?;
        Ok(joint)
    }

    pub fn with_weights(mut self, u: DVector<f64>, v: DVector<f64>) -> Result<Self> {
        self.u = Some(u);
        self.v = Some(v);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.iter().any(|&x| !(x > 0.0)) {
            return Err(Error::InvalidArgument(
                "joint entries must be strictly positive".into(),
            ));
        }
        let total: f64 = self.p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "joint sums to {total}, expected 1 within 1e-12"
            )));
        }
        if let Some(u) = &self.u {
            if u.len() != self.p.nrows() {
                return Err(Error::Shape("u length must match |X|".into()));
            }
            if u.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::InvalidArgument("u must be positive".into()));
            }
        }
        if let Some(v) = &self.v {
            if v.len() != self.p.ncols() {
                return Err(Error::Shape("v length must match |Y|".into()));
            }
            if v.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::InvalidArgument("v must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn marginal_x(&self) -> DVector<f64> {
        DVector::from_iterator(self.p.nrows(), self.p.row_iter().map(|r| r.sum()))
    }

    pub fn marginal_y(&self) -> DVector<f64> {
        DVector::from_iterator(self.p.ncols(), self.p.column_iter().map(|c| c.sum()))
    }

    /// The curated table `p'(x,y) = u(x) v(y) p(x,y) / Z`, keeping the
    /// weights attached for reference.
    pub fn curated(&self) -> Result<DiscreteJoint> {
        let (u, v) = self.weights()?;
        let mut p = self.p.clone();
        for i in 0..p.nrows() {
            for j in 0..p.ncols() {
                p[(i, j)] *= u[i] * v[j];
            }
        }
        let z: f64 = p.iter().sum();
        p /= z;
        Ok(DiscreteJoint {
            p,
            u: self.u.clone(),
            v: self.v.clone(),
        })
    }

    fn weights(&self) -> Result<(&DVector<f64>, &DVector<f64>)> {
        match (&self.u, &self.v) {
            (Some(u), Some(v)) => Ok((u, v)),
            _ => Err(Error::InvalidArgument(
                "operation requires curation weights".into(),
            )),
        }
    }
}

// ---------------------------------------------------------------------------
// Sym(d) spanning
// ---------------------------------------------------------------------------

/// Result of the spanning diagnostic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpanningReport {
    pub rank: usize,
    pub required: usize,
    pub spanning: bool,
    /// Sampled lower estimate of the conditioning constant relating
    /// `|M|_2` to `max_u |u^T M u|` over the set.
    pub kappa_lower: f64,
}

/// Dimension of the symmetric coordinate space.
pub fn sym_dim(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Vectorize `x x^T` into the symmetric coordinate space, off-diagonals
/// scaled by sqrt(2) so Euclidean inner products match Frobenius ones.
fn sym_vectorize(x: &DVector<f64>) -> DVector<f64> {
    let d = x.len();
    let mut out = DVector::zeros(sym_dim(d));
    let mut k = 0;
    for i in 0..d {
        out[k] = x[i] * x[i];
        k += 1;
    }
    let sqrt2 = 2.0_f64.sqrt();
    for i in 0..d {
        for j in (i + 1)..d {
            out[k] = sqrt2 * x[i] * x[j];
            k += 1;
        }
    }
    out
}

/// Rebuild a symmetric matrix from its scaled coordinate vector.
fn sym_devectorize(m: &DVector<f64>, d: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(d, d);
    let mut k = 0;
    for i in 0..d {
        out[(i, i)] = m[k];
        k += 1;
    }
    let inv_sqrt2 = 1.0 / 2.0_f64.sqrt();
    for i in 0..d {
        for j in (i + 1)..d {
            out[(i, j)] = m[k] * inv_sqrt2;
            out[(j, i)] = m[k] * inv_sqrt2;
            k += 1;
        }
    }
    out
}

fn spectral_norm_symmetric(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|e| e.abs())
        .fold(0.0, f64::max)
}

/// Check whether the rows' outer products span the symmetric matrices, and
/// estimate how well they probe every symmetric direction.
pub fn sym_spanning(rows: &EmbeddingSet) -> Result<SpanningReport> {
    if !rows.normalized {
        return Err(Error::InvalidArgument(
            "spanning diagnostic expects normalized rows".into(),
        ));
    }
    let d = rows.dim();
    let n = rows.n();
    let required = sym_dim(d);
    let mut design = DMatrix::zeros(n, required);
    for i in 0..n {
        design
            .row_mut(i)
            .copy_from(&sym_vectorize(&rows.row_vec(i)).transpose());
    }
    let svd = design.clone().svd(false, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-10 * sigma_max)
        .count();
    let spanning = rank == required;

    // Candidate directions: seeded random symmetric matrices plus the
    // right singular directions of the design (the spanning-defect
    // operator), which include the worst-probed ones.
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x53_59_4d);
    let mut kappa: f64 = 0.0;
    let mut consider = |m: &DMatrix<f64>| {
        let norm2 = spectral_norm_symmetric(m);
        if norm2 == 0.0 {
            return;
        }
        let mut probe: f64 = 0.0;
        for i in 0..n {
            let u = rows.row_vec(i);
            probe = probe.max((u.transpose() * m * &u)[(0, 0)].abs());
        }
        if probe <= 1e-15 {
            kappa = f64::INFINITY;
        } else {
            kappa = kappa.max(norm2 / probe);
        }
    };
    for _ in 0..1000 {
        let b = DMatrix::from_fn(d, d, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
        let m = (&b + b.transpose()) * 0.5;
        consider(&m);
    }
    if let Some(v_t) = svd.v_t {
        for row in v_t.row_iter() {
            let m = sym_devectorize(&row.transpose(), d);
            consider(&m);
        }
    }

    Ok(SpanningReport {
        rank,
        required,
        spanning,
        kappa_lower: kappa,
    })
}

// ---------------------------------------------------------------------------
// Kernel discrepancies and perturbation bounds
// ---------------------------------------------------------------------------

/// Max absolute difference between the two models' multimodal kernels over
/// all (image, text) pairs.
pub fn kernel_discrepancy(
    f_a: &EmbeddingSet,
    g_a: &EmbeddingSet,
    f_b: &EmbeddingSet,
    g_b: &EmbeddingSet,
) -> Result<f64> {
    if f_a.n() != f_b.n() || g_a.n() != g_b.n() {
        return Err(Error::Shape(
            "kernel discrepancy needs matched sizes across models".into(),
        ));
    }
    let ka = crate::metrics::multimodal_kernel(f_a, g_a)?;
    let kb = crate::metrics::multimodal_kernel(f_b, g_b)?;
    Ok((ka.values - kb.values).abs().max())
}

fn max_kernel_diff(k_a: &KernelMatrix, k_b: &KernelMatrix) -> Result<f64> {
    if k_a.values.shape() != k_b.values.shape() {
        return Err(Error::Shape("kernel tables differ in shape".into()));
    }
    Ok((&k_a.values - &k_b.values).abs().max())
}

/// Max row deviation `max_i |b_i - Q a_i|`, used for the delta_f ingredient
/// of the text-side bounds.
pub fn max_row_deviation(
    source: &EmbeddingSet,
    target: &EmbeddingSet,
    map: &AlignmentMap,
) -> Result<f64> {
    if source.n() != target.n() {
        return Err(Error::Shape("paired sets differ in size".into()));
    }
    let mapped = align::apply(map, source, None, None, false)?;
    let mut worst: f64 = 0.0;
    for i in 0..mapped.n() {
        worst = worst.max((mapped.row_vec(i) - target.row_vec(i)).norm());
    }
    Ok(worst)
}

/// Verify the linear-identification perturbation bound: fitting
/// `A = G_tilde^{-T} G^T` from anchors, every test image must satisfy
/// `|f_b(x) - A f_a(x)| <= sqrt(d_tilde) * epsilon / sigma_min(G_tilde)`
/// where `epsilon` is the worst anchor-kernel discrepancy.
pub fn check_linear_bound(
    anchors: &AnchorSet,
    f_a: &EmbeddingSet,
    f_b: &EmbeddingSet,
    g_a_anchor_kernels: &KernelMatrix,
    g_b_anchor_kernels: &KernelMatrix,
) -> Result<BoundReport> {
    let map = align::fit_from_anchors(anchors)?;
    let sigma_min = map.stats.expect("anchor fit records sigma_min").sigma_min;
    let epsilon = max_kernel_diff(g_a_anchor_kernels, g_b_anchor_kernels)?;
    let d_tilde = anchors.g_tilde.nrows() as f64;
    let bound_value = d_tilde.sqrt() * epsilon / sigma_min;
    let observed_max = max_row_deviation(f_a, f_b, &map)?;
    Ok(BoundReport {
        epsilon,
        sigma_min_gtilde: sigma_min,
        bound_value,
        observed_max,
        satisfied: observed_max <= bound_value + BOUND_TOL,
        ..Default::default()
    })
}

fn sigma_min_of(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Verify the text-side perturbation bound
/// `|Q^T g_b(y) - g_a(y)| <= sqrt(d) (epsilon' + delta_f) / sigma_min(F)`
/// over all prompts, and the same bound on `|g_b(y) - Q g_a(y)|` when the
/// dimensions match.
pub fn check_text_bound(
    f_anchor_columns: &DMatrix<f64>,
    map: &AlignmentMap,
    g_a: &EmbeddingSet,
    g_b: &EmbeddingSet,
    epsilon_prime: f64,
    delta_f: f64,
) -> Result<BoundReport> {
    let d = f_anchor_columns.nrows();
    if f_anchor_columns.ncols() < d {
        return Err(Error::Shape(format!(
            "text bound needs d image anchors, got {} for d = {d}",
            f_anchor_columns.ncols()
        )));
    }
    if map.kind != MapKind::Orthogonal {
        return Err(Error::InvalidArgument(
            "text bound expects a semi-orthogonal map".into(),
        ));
    }
    if map.dim_source() != d || g_a.dim() != d || g_b.dim() != map.dim_target() {
        return Err(Error::Shape("text bound dimension mismatch".into()));
    }
    if g_a.n() != g_b.n() {
        return Err(Error::Shape("prompt sets differ in size".into()));
    }
    let sigma_min_f = sigma_min_of(f_anchor_columns);
    if sigma_min_f <= 1e-10 {
        return Err(Error::IllConditioned {
            what: "image anchors".into(),
            sigma_min: sigma_min_f,
        });
    }
    let bound_value = (d as f64).sqrt() * (epsilon_prime + delta_f) / sigma_min_f;

    let square = map.dim_source() == map.dim_target();
    let mut observed_max: f64 = 0.0;
    for i in 0..g_a.n() {
        let ga = g_a.row_vec(i);
        let gb = g_b.row_vec(i);
        let pulled = map.q.transpose() * &gb;
        observed_max = observed_max.max((&pulled - &ga).norm());
        if square {
            observed_max = observed_max.max((&gb - &map.q * &ga).norm());
        }
    }
    Ok(BoundReport {
        epsilon_prime,
        delta_f,
        sigma_min_f,
        bound_value,
        observed_max,
        satisfied: observed_max <= bound_value + BOUND_TOL,
        ..Default::default()
    })
}

/// Verify the low-dimensional projection bound
/// `|Proj_U (g_a(y) - Q^T g_b(y))| <= rho` with
/// `rho = sqrt(r) (epsilon + delta_f) / sigma_min(F)` where the columns of
/// `u_basis` are the image anchors spanning U.
pub fn subspace_projection_bound(
    u_basis: &DMatrix<f64>,
    map: &AlignmentMap,
    g_a: &EmbeddingSet,
    g_b: &EmbeddingSet,
    epsilon: f64,
    delta_f: f64,
) -> Result<BoundReport> {
    let (d, r) = u_basis.shape();
    if r > d {
        return Err(Error::Shape("basis has more columns than dimensions".into()));
    }
    if map.kind != MapKind::Orthogonal || map.dim_source() != d {
        return Err(Error::InvalidArgument(
            "projection bound expects a semi-orthogonal map on d".into(),
        ));
    }
    if g_a.dim() != d || g_b.dim() != map.dim_target() || g_a.n() != g_b.n() {
        return Err(Error::Shape("projection bound dimension mismatch".into()));
    }
    let sigma_min_f = sigma_min_of(u_basis);
    if sigma_min_f <= 1e-10 {
        return Err(Error::IllConditioned {
            what: "subspace anchor basis".into(),
            sigma_min: sigma_min_f,
        });
    }
    let rho = (r as f64).sqrt() * (epsilon + delta_f) / sigma_min_f;

    // Orthonormal basis for span(u_basis) via thin QR.
    let qr = u_basis.clone().qr();
    let b = qr.q();
    let mut observed_max: f64 = 0.0;
    for i in 0..g_a.n() {
        let h = g_a.row_vec(i) - map.q.transpose() * g_b.row_vec(i);
        observed_max = observed_max.max((b.transpose() * h).norm());
    }
    Ok(BoundReport {
        epsilon,
        delta_f,
        sigma_min_f,
        bound_value: rho,
        observed_max,
        satisfied: observed_max <= rho + BOUND_TOL,
        rho,
        ..Default::default()
    })
}

/// Margin/noise decomposition for class prompts. `basis` holds an
/// orthonormal basis of the identifiable image span as columns;
/// `prototypes_a` and `prototypes_b` hold one prompt embedding per class as
/// rows, in matching class order.
pub fn margin_noise(
    basis: &DMatrix<f64>,
    map: &AlignmentMap,
    prototypes_a: &DMatrix<f64>,
    prototypes_b: &DMatrix<f64>,
) -> Result<MarginReport> {
    let (d, r) = basis.shape();
    let k = prototypes_a.nrows();
    if k < 2 {
        return Err(Error::InvalidArgument(
            "margin check needs at least two classes".into(),
        ));
    }
    if map.kind != MapKind::Orthogonal {
        return Err(Error::InvalidArgument(
            "margin check expects a semi-orthogonal map".into(),
        ));
    }
    if prototypes_a.ncols() != d || map.dim_source() != d {
        return Err(Error::Shape("source prototypes must live in R^d".into()));
    }
    if prototypes_b.ncols() != map.dim_target() || prototypes_b.nrows() != k {
        return Err(Error::Shape("target prototypes shape mismatch".into()));
    }
    let gram_dev = (basis.transpose() * basis - DMatrix::identity(r, r)).norm();
    if gram_dev > 1e-8 {
        return Err(Error::InvalidArgument(format!(
            "basis is not orthonormal (gram deviation {gram_dev:e})"
        )));
    }

    // u_c = Proj_U g_c, w_c = g_c - u_c; target residual extracted by
    // projecting off Q U.
    let qu = &map.q * basis; // d_tilde x r, orthonormal columns
    let mut signal = Vec::with_capacity(k);
    let mut residual_a = Vec::with_capacity(k);
    let mut residual_b = Vec::with_capacity(k);
    for c in 0..k {
        let g = prototypes_a.row(c).transpose();
        let u = basis * (basis.transpose() * &g);
        let w = &g - &u;
        let gt = prototypes_b.row(c).transpose();
        let wt = &gt - &qu * (qu.transpose() * &gt);
        signal.push(u);
        residual_a.push(w);
        residual_b.push(wt);
    }

    let mut gamma = f64::INFINITY;
    for c in 0..k {
        let own = signal[c].norm_squared();
        let mut worst = f64::NEG_INFINITY;
        for kk in 0..k {
            if kk != c {
                worst = worst.max(signal[c].dot(&signal[kk]));
            }
        }
        gamma = gamma.min(own - worst);
    }
    let mut eta: f64 = 0.0;
    for c in 0..k {
        let qw = &map.q * &residual_a[c];
        for kk in 0..k {
            eta = eta.max(qw.dot(&residual_b[kk]).abs());
        }
    }

    let mut retrieval_correct = true;
    for c in 0..k {
        let query = &map.q * prototypes_a.row(c).transpose();
        let mut best = usize::MAX;
        let mut best_score = f64::NEG_INFINITY;
        for kk in 0..k {
            let score = query.dot(&prototypes_b.row(kk).transpose());
            if score > best_score {
                best_score = score;
                best = kk;
            }
        }
        if best != c {
            retrieval_correct = false;
        }
    }

    Ok(MarginReport {
        gamma,
        eta,
        guaranteed: gamma > 2.0 * eta,
        retrieval_correct,
    })
}

// ---------------------------------------------------------------------------
// Discrete PMI and curation
// ---------------------------------------------------------------------------

/// Pointwise mutual information table of a joint, in nats. With
/// `use_curation` the joint is first reweighted by `u(x) v(y)` and
/// renormalized.
pub fn pmi_matrix(joint: &DiscreteJoint, use_curation: bool) -> Result<KernelMatrix> {
    joint.validate()?;
    let table = if use_curation {
        joint.curated()?
    } else {
        joint.clone()
    };
    let px = table.marginal_x();
    let py = table.marginal_y();
    let values = DMatrix::from_fn(table.p.nrows(), table.p.ncols(), |i, j| {
        (table.p[(i, j)] / (px[i] * py[j])).ln()
    });
    Ok(KernelMatrix {
        values,
        row_source: "x".into(),
        col_source: "y".into(),
    })
}

/// How far the attached weights are from the no-cross-modal-bias condition:
/// `(max_x |E[v(Y)|X=x] - E[v(Y)]|, max_y |E[u(X)|Y=y] - E[u(X)]|)` under
/// the joint itself.
pub fn curation_bias_residual(joint: &DiscreteJoint) -> Result<(f64, f64)> {
    joint.validate()?;
    let (u, v) = joint.weights()?;
    let px = joint.marginal_x();
    let py = joint.marginal_y();
    let ev: f64 = py.iter().zip(v.iter()).map(|(p, w)| p * w).sum();
    let eu: f64 = px.iter().zip(u.iter()).map(|(p, w)| p * w).sum();

    let mut max_dev_v: f64 = 0.0;
    for i in 0..joint.p.nrows() {
        let cond: f64 = (0..joint.p.ncols())
            .map(|j| v[j] * joint.p[(i, j)])
            .sum::<f64>()
            / px[i];
        max_dev_v = max_dev_v.max((cond - ev).abs());
    }
    let mut max_dev_u: f64 = 0.0;
    for j in 0..joint.p.ncols() {
        let cond: f64 = (0..joint.p.nrows())
            .map(|i| u[i] * joint.p[(i, j)])
            .sum::<f64>()
            / py[j];
        max_dev_u = max_dev_u.max((cond - eu).abs());
    }
    Ok((max_dev_v, max_dev_u))
}

/// Best constant shift between two kernel tables and the worst residual
/// after removing it.
pub fn check_constant_shift(k1: &KernelMatrix, k2: &KernelMatrix) -> Result<(f64, f64)> {
    if k1.values.shape() != k2.values.shape() {
        return Err(Error::Shape("kernel tables differ in shape".into()));
    }
    let diff = &k1.values - &k2.values;
    let delta = diff.iter().sum::<f64>() / diff.len() as f64;
    let max_residual = diff.iter().map(|x| (x - delta).abs()).fold(0.0, f64::max);
    Ok((delta, max_residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embstore::normalize;
    use approx::assert_relative_eq;

    fn unit_set(rows: &[&[f64]]) -> EmbeddingSet {
        let n = rows.len();
        let d = rows[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        let set = EmbeddingSet::from_rows(DMatrix::from_row_slice(n, d, &flat), false).unwrap();
        normalize(&set, 1e-12).unwrap()
    }

    #[test]
    fn spanning_minimal_2d_set() {
        let s = 1.0 / 2.0_f64.sqrt();
        let set = unit_set(&[&[1.0, 0.0], &[0.0, 1.0], &[s, s]]);
        let report = sym_spanning(&set).unwrap();
        assert_eq!(report.rank, 3);
        assert!(report.spanning);
        assert!(report.kappa_lower.is_finite());
    }

    #[test]
    fn spanning_single_vector_fails() {
        let set = unit_set(&[&[1.0, 0.0]]);
        let report = sym_spanning(&set).unwrap();
        assert_eq!(report.rank, 1);
        assert!(!report.spanning);
    }

    #[test]
    fn spanning_generic_3d() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|_| {
                (0..3)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let set = unit_set(&refs);
        let report = sym_spanning(&set).unwrap();
        assert_eq!(report.rank, 6);
        assert!(report.spanning);
    }

    #[test]
    fn spanning_recovers_symmetric_matrix_from_quadratic_probes() {
        // soundness: when spanning holds, the quadratic measurements pin
        // down any symmetric matrix by least squares.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(23);
        let d = 4;
        let n = 14; // > d(d+1)/2 = 10
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let set = unit_set(&refs);
        assert!(sym_spanning(&set).unwrap().spanning);

        let b = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(rand_distr::StandardNormal));
        let m0 = (&b + b.transpose()) * 0.5;
        let mut design = DMatrix::zeros(n, sym_dim(d));
        let mut targets = DVector::zeros(n);
        for i in 0..n {
            let u = set.row_vec(i);
            design
                .row_mut(i)
                .copy_from(&sym_vectorize(&u).transpose());
            targets[i] = (u.transpose() * &m0 * &u)[(0, 0)];
        }
        let sol = design
            .svd(true, true)
            .solve(&targets, 1e-12)
            .expect("solvable");
        let recovered = sym_devectorize(&sol, d);
        assert!((recovered - m0).norm() <= 1e-6);
    }

    #[test]
    fn kernel_discrepancy_hand_value() {
        // single image/text pair per model with kernels 0.3 vs 0.25
        let f_a = unit_set(&[&[1.0, 0.0]]);
        let g_a = unit_set(&[&[0.3, (1.0_f64 - 0.09).sqrt()]]);
        let f_b = unit_set(&[&[1.0, 0.0]]);
        let g_b = unit_set(&[&[0.25, (1.0_f64 - 0.0625).sqrt()]]);
        let eps = kernel_discrepancy(&f_a, &g_a, &f_b, &g_b).unwrap();
        assert_relative_eq!(eps, 0.05, epsilon = 1e-12);
    }

    #[test]
    fn constant_shift_detects_offset() {
        let k1 = KernelMatrix {
            values: DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]),
            row_source: "x".into(),
            col_source: "y".into(),
        };
        let k2 = KernelMatrix {
            values: k1.values.map(|v| v + 0.7),
            row_source: "x".into(),
            col_source: "y".into(),
        };
        let (delta, residual) = check_constant_shift(&k2, &k1).unwrap();
        assert_relative_eq!(delta, 0.7, epsilon = 1e-12);
        assert!(residual <= 1e-12);
    }

    #[test]
    fn pmi_product_joint_is_zero() {
        let px = [0.3, 0.7];
        let py = [0.2, 0.5, 0.3];
        let p = DMatrix::from_fn(2, 3, |i, j| px[i] * py[j]);
        let joint = DiscreteJoint::new(p).unwrap();
        let k = pmi_matrix(&joint, false).unwrap();
        assert!(k.values.abs().max() <= 1e-12);
    }

    #[test]
    fn pmi_hand_computed_2x2() {
        let joint =
            DiscreteJoint::new(DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.1, 0.4])).unwrap();
        let k = pmi_matrix(&joint, false).unwrap();
        // marginals are 0.5 each, so the ratio table is [[1.6, 0.4], [0.4, 1.6]]
        assert_relative_eq!(k.values[(0, 0)], 1.6_f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(k.values[(0, 1)], 0.4_f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(k.values[(0, 0)], 0.470004, epsilon = 1e-6);
    }

    #[test]
    fn neutral_weights_change_nothing() {
        let joint = DiscreteJoint::new(DMatrix::from_row_slice(2, 2, &[0.4, 0.1, 0.1, 0.4]))
            .unwrap()
            .with_weights(DVector::from_element(2, 1.0), DVector::from_element(2, 1.0))
            .unwrap();
        let plain = pmi_matrix(&joint, false).unwrap();
        let curated = pmi_matrix(&joint, true).unwrap();
        assert!((plain.values - curated.values).abs().max() <= 1e-12);
    }

    #[test]
    fn constant_v_has_zero_bias() {
        let joint = DiscreteJoint::new(DMatrix::from_row_slice(2, 2, &[0.37, 0.13, 0.08, 0.42]))
            .unwrap()
            .with_weights(
                DVector::from_vec(vec![0.5, 2.0]),
                DVector::from_element(2, 3.0),
            )
            .unwrap();
        let (dev_v, dev_u) = curation_bias_residual(&joint).unwrap();
        assert!(dev_v <= 1e-12);
        assert!(dev_u > 1e-3); // generic joint, non-constant u
    }

    #[test]
    fn ratio_curation_identity_generic_joint() {
        // the lemma's identity needs no independence assumption at all
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let (nx, ny) = (5, 7);
        let mut p = DMatrix::from_fn(nx, ny, |_, _| rng.random::<f64>() + 0.05);
        let total: f64 = p.iter().sum();
        p /= total;
        let u = DVector::from_fn(nx, |_, _| rng.random::<f64>() + 0.1);
        let v = DVector::from_fn(ny, |_, _| rng.random::<f64>() + 0.1);
        let joint = DiscreteJoint::new(p).unwrap().with_weights(u.clone(), v.clone()).unwrap();

        let k_star = pmi_matrix(&joint, false).unwrap();
        let k_cur = pmi_matrix(&joint, true).unwrap();
        let px = joint.marginal_x();
        let py = joint.marginal_y();
        let mut z = 0.0;
        for i in 0..nx {
            for j in 0..ny {
                z += u[i] * v[j] * joint.p[(i, j)];
            }
        }
        for i in 0..nx {
            for j in 0..ny {
                let ev_cond: f64 = (0..ny).map(|jj| v[jj] * joint.p[(i, jj)]).sum::<f64>() / px[i];
                let eu_cond: f64 = (0..nx).map(|ii| u[ii] * joint.p[(ii, j)]).sum::<f64>() / py[j];
                let lhs = k_cur.values[(i, j)] - k_star.values[(i, j)] + ev_cond.ln()
                    + eu_cond.ln()
                    - z.ln();
                assert!(lhs.abs() <= 1e-10, "identity residual {lhs:e}");
            }
        }
    }

    #[test]
    fn pmi_exp_negative_expectation_is_one() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut p = DMatrix::from_fn(4, 6, |_, _| rng.random::<f64>() + 0.02);
        let total: f64 = p.iter().sum();
        p /= total;
        let joint = DiscreteJoint::new(p).unwrap();
        let k = pmi_matrix(&joint, false).unwrap();
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..6 {
                acc += joint.p[(i, j)] * (-k.values[(i, j)]).exp();
            }
        }
        assert_relative_eq!(acc, 1.0, epsilon = 1e-10);
    }
}
