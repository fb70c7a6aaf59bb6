//! Planted-ground-truth scenario generators. Every generator is a pure
//! function of its parameters including the seed, and each scenario carries
//! enough ground truth that downstream assertions never re-derive the
//! construction.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::align::{AlignmentMap, AnchorSet, MapKind};
use crate::embstore::{EmbeddingSet, Modality};
use crate::error::Error;
use crate::theory::DiscreteJoint;
use crate::Result;

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn gaussian_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    DVector::from_fn(len, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn random_unit(rng: &mut ChaCha8Rng, len: usize) -> DVector<f64> {
    loop {
        let v = gaussian_vector(rng, len);
        let n = v.norm();
        if n > 1e-6 {
            return v / n;
        }
    }
}

fn signed_permutation(d: usize, seed: u64) -> DMatrix<f64> {
    use rand::seq::SliceRandom;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..d).collect();
    perm.shuffle(&mut rng);
    let mut m = DMatrix::zeros(d, d);
    for (j, &i) in perm.iter().enumerate() {
        m[(i, j)] = if rng.random::<bool>() { 1.0 } else { -1.0 };
    }
    m
}

/// Orthonormal-column factor of a seeded Gaussian matrix, with column signs
/// fixed so the result is a deterministic function of the seed.
pub fn random_semi_orthogonal(d: usize, d_tilde: usize, seed: u64) -> Result<DMatrix<f64>> {
    if d > d_tilde {
        return Err(Error::Shape(format!(
            "need d <= d_tilde, got {d} > {d_tilde}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let qr = gaussian_matrix(&mut rng, d_tilde, d).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// Parameters for a planted two-model, two-modality world.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantedParams {
    pub d: usize,
    pub d_tilde: usize,
    pub n_img: usize,
    pub n_txt: usize,
    pub k: usize,
    /// Gaussian row noise added to model B before renormalization.
    pub noise_sigma: f64,
    /// Target distance between the image and text cone centers.
    pub gap_norm: f64,
    /// Angular radius of the cone the class directions are drawn from.
    pub cap_angle_deg: f64,
    /// Angular spread of samples around their class direction.
    pub within_class_angle_deg: f64,
    pub seed: u64,
}

impl PlantedParams {
    pub fn new(d: usize, d_tilde: usize, n_img: usize, n_txt: usize, k: usize, seed: u64) -> Self {
        PlantedParams {
            d,
            d_tilde,
            n_img,
            n_txt,
            k,
            noise_sigma: 0.0,
            gap_norm: 0.5,
            cap_angle_deg: 60.0,
            within_class_angle_deg: 5.0,
            seed,
        }
    }
}

/// A generated two-model world with known ground truth.
#[derive(Debug, Clone)]
pub struct PlantedScenario {
    pub params: PlantedParams,
    pub q_true: DMatrix<f64>,
    pub f_a: EmbeddingSet,
    pub g_a: EmbeddingSet,
    pub f_b: EmbeddingSet,
    pub g_b: EmbeddingSet,
    /// Centroid distance between model A's image and text rows.
    pub achieved_gap: f64,
    pub warnings: Vec<String>,
}

impl PlantedScenario {
    /// The planted map as an `AlignmentMap` (no means).
    pub fn true_map(&self) -> AlignmentMap {
        let mut map = AlignmentMap::new(self.q_true.clone(), None, None, MapKind::Orthogonal)
            .expect("planted map is semi-orthogonal");
        map.source_model = self.f_a.model_id.clone();
        map.target_model = self.f_b.model_id.clone();
        map
    }
}

/// A unit vector at angle `angle` from `center`, steered toward `tangent`
/// (which must be unit and orthogonal to `center`).
fn on_cone(center: &DVector<f64>, tangent: &DVector<f64>, angle: f64) -> DVector<f64> {
    center * angle.cos() + tangent * angle.sin()
}

fn tangent_at(rng: &mut ChaCha8Rng, center: &DVector<f64>) -> DVector<f64> {
    loop {
        let v = gaussian_vector(rng, center.len());
        let t = &v - center * center.dot(&v);
        let n = t.norm();
        if n > 1e-6 {
            return t / n;
        }
    }
}

/// Map the other model's rows through the planted map, add pre-normalization
/// Gaussian noise, and renormalize. `noise_seed` makes the noise stream
/// independent of the geometry stream.
pub fn transport_rows(
    set: &EmbeddingSet,
    q: &DMatrix<f64>,
    noise_sigma: f64,
    noise_seed: u64,
    model_id: &str,
) -> Result<EmbeddingSet> {
    if set.dim() != q.ncols() {
        return Err(Error::Shape("transport dimension mismatch".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let d_tilde = q.nrows();
    let mut data = DMatrix::zeros(set.n(), d_tilde);
    for i in 0..set.n() {
        let mut row = q * set.row_vec(i);
        if noise_sigma > 0.0 {
            row += gaussian_vector(&mut rng, d_tilde) * noise_sigma;
        }
        let n = row.norm();
        if n <= 1e-12 {
            return Err(Error::DegenerateRows {
                epsilon: 1e-12,
                indices: vec![i],
            });
        }
        data.row_mut(i).copy_from(&(row / n).transpose());
    }
    Ok(EmbeddingSet {
        data,
        labels: set.labels.clone(),
        class_names: set.class_names.clone(),
        model_id: model_id.to_string(),
        modality: set.modality,
        dataset_id: set.dataset_id.clone(),
        normalized: true,
        dtype: set.dtype,
    })
}

/// Generate a planted scenario: class directions on an image cone and a
/// text cone separated by roughly `gap_norm`, per-class samples on both
/// modalities for model A, and model B produced by the planted isometry
/// plus optional noise.
pub fn make_planted(params: &PlantedParams) -> Result<PlantedScenario> {
    let p = params;
    if p.k == 0 || p.k > p.n_img || p.k > p.n_txt {
        return Err(Error::InvalidArgument(
            "need 1 <= k <= n_img and k <= n_txt".into(),
        ));
    }
    if p.d < 2 || p.d > p.d_tilde {
        return Err(Error::InvalidArgument(
            "need 2 <= d <= d_tilde".into(),
        ));
    }
    if !(0.0..=2.0).contains(&p.gap_norm) {
        return Err(Error::InvalidArgument("gap_norm must be in [0, 2]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let q_true = random_semi_orthogonal(p.d, p.d_tilde, p.seed.wrapping_add(0x51))?;

    let c_img = random_unit(&mut rng, p.d);
    let theta_gap = 2.0 * (p.gap_norm / 2.0).asin();
    let gap_tangent = tangent_at(&mut rng, &c_img);
    let c_txt = on_cone(&c_img, &gap_tangent, theta_gap);

    let cap = p.cap_angle_deg.to_radians();
    let within = p.within_class_angle_deg.to_radians();

    // Class directions share tangents across modalities so class c's images
    // sit across the gap from class c's texts.
    let mut img_dirs = Vec::with_capacity(p.k);
    let mut txt_dirs = Vec::with_capacity(p.k);
    for _ in 0..p.k {
        let angle = cap * rng.random::<f64>().sqrt();
        let t_img = tangent_at(&mut rng, &c_img);
        let t_txt = {
            let projected = &t_img - &c_txt * c_txt.dot(&t_img);
            let n = projected.norm();
            if n > 1e-6 {
                projected / n
            } else {
                tangent_at(&mut rng, &c_txt)
            }
        };
        img_dirs.push(on_cone(&c_img, &t_img, angle));
        txt_dirs.push(on_cone(&c_txt, &t_txt, angle));
    }

    let mut warnings = Vec::new();
    let mut min_sep = f64::INFINITY;
    for a in 0..p.k {
        for b in (a + 1)..p.k {
            let angle = img_dirs[a].dot(&img_dirs[b]).clamp(-1.0, 1.0).acos();
            min_sep = min_sep.min(angle);
        }
    }
    if p.k > 1 && min_sep < 2.0 * within {
        warnings.push(format!(
            "class directions only {:.2} deg apart with {:.2} deg within-class spread",
            min_sep.to_degrees(),
            p.within_class_angle_deg
        ));
    }

    let sample_set = |rng: &mut ChaCha8Rng,
                          dirs: &[DVector<f64>],
                          n: usize,
                          modality: Modality|
     -> EmbeddingSet {
        let mut data = DMatrix::zeros(n, p.d);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % p.k;
            let dir = &dirs[class];
            let t = tangent_at(rng, dir);
            let angle = within * rng.sample::<f64, _>(StandardNormal);
            let x = on_cone(dir, &t, angle);
            let x = &x / x.norm();
            data.row_mut(i).copy_from(&x.transpose());
            labels.push(class as u32);
        }
        EmbeddingSet {
            data,
            labels: Some(labels),
            class_names: None,
            model_id: "model-a".into(),
            modality: Some(modality),
            dataset_id: "planted".into(),
            normalized: true,
            dtype: crate::embstore::Dtype::F64,
        }
    };

    let f_a = sample_set(&mut rng, &img_dirs, p.n_img, Modality::Image);
    let g_a = sample_set(&mut rng, &txt_dirs, p.n_txt, Modality::Text);
    let f_b = transport_rows(&f_a, &q_true, p.noise_sigma, p.seed.wrapping_add(0x1b), "model-b")?;
    let g_b = transport_rows(&g_a, &q_true, p.noise_sigma, p.seed.wrapping_add(0x2b), "model-b")?;

    let achieved_gap = (f_a.mean_vector() - g_a.mean_vector()).norm();
    Ok(PlantedScenario {
        params: p.clone(),
        q_true,
        f_a,
        g_a,
        f_b,
        g_b,
        achieved_gap,
        warnings,
    })
}

/// Exact-regime anchor world: anchor matrices for which the kernel-equality
/// assumption holds exactly, so the closed-form anchor fit returns the
/// planted map. The exact regime pins target embeddings to the planted
/// image of the source sphere, so the target text anchors are only
/// invertible in the square case.
pub fn make_exact_anchor_world(
    d: usize,
    d_tilde: usize,
    seed: u64,
) -> Result<(AnchorSet, PlantedScenario)> {
    if d != d_tilde {
        return Err(Error::InvalidArgument(
            "exact anchor world needs d = d_tilde: unit-norm targets force the \
             target anchors into the planted d-dimensional image"
                .into(),
        ));
    }
    let mut params = PlantedParams::new(d, d_tilde, 4 * d.max(8), 2 * d.max(8), 4, seed);
    params.noise_sigma = 0.0;
    let scenario = make_planted(&params)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(0xa17c));
    let well_conditioned = |rng: &mut ChaCha8Rng, rows: usize, cols: usize| loop {
        let mut m = DMatrix::zeros(rows, cols);
        for j in 0..cols {
            m.set_column(j, &random_unit(rng, rows));
        }
        let sigma_min = m
            .clone()
            .svd(false, false)
            .singular_values
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if sigma_min > 0.1 {
            return m;
        }
    };
    let g = well_conditioned(&mut rng, d, d_tilde);
    let f = well_conditioned(&mut rng, d, d);
    let g_tilde = &scenario.q_true * &g;
    let anchors = AnchorSet { g, g_tilde, f };
    anchors.validate()?;
    Ok((anchors, scenario))
}

/// A family of curated joints over one block-uniform base distribution.
#[derive(Debug, Clone)]
pub struct CurationScenario {
    pub p_star: DiscreteJoint,
    pub blocks_x: Vec<usize>,
    pub blocks_y: Vec<usize>,
    pub weights: Vec<(DVector<f64>, DVector<f64>)>,
    /// Curated joints, one per dataset, with their weights attached.
    pub joints: Vec<DiscreteJoint>,
}

/// Build a block-uniform base joint and `n_datasets` separable curations
/// whose within-block weight means are equal across blocks, which makes the
/// no-cross-modal-bias condition hold exactly. Generic joints admit only
/// constant weights with that property, hence the block structure.
pub fn make_curation_world(
    nx: usize,
    ny: usize,
    bx: usize,
    by: usize,
    n_datasets: usize,
    seed: u64,
) -> Result<CurationScenario> {
    if bx == 0 || by == 0 || nx % bx != 0 || ny % by != 0 {
        return Err(Error::InvalidArgument(
            "block counts must divide the axis sizes".into(),
        ));
    }
    let (sx, sy) = (nx / bx, ny / by);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut block_table = DMatrix::from_fn(bx, by, |_, _| rng.random::<f64>() + 0.1);
    let total: f64 = block_table.iter().sum();
    block_table /= total;
    let p = DMatrix::from_fn(nx, ny, |i, j| {
        block_table[(i / sx, j / sy)] / (sx as f64 * sy as f64)
    });
    let p_star = DiscreteJoint::new(p)?;

    let blocks_x: Vec<usize> = (0..nx).map(|i| i / sx).collect();
    let blocks_y: Vec<usize> = (0..ny).map(|j| j / sy).collect();

    // Positive noise, then rescale each block to mean one.
    let block_mean_one = |rng: &mut ChaCha8Rng, n: usize, block_size: usize| {
        let mut w = DVector::from_fn(n, |_, _| rng.random::<f64>() + 0.5);
        for b in 0..(n / block_size) {
            let slice: f64 = (0..block_size).map(|i| w[b * block_size + i]).sum();
            let mean = slice / block_size as f64;
            for i in 0..block_size {
                w[b * block_size + i] /= mean;
            }
        }
        w
    };

    let mut weights = Vec::with_capacity(n_datasets);
    let mut joints = Vec::with_capacity(n_datasets);
    for _ in 0..n_datasets {
        let u = block_mean_one(&mut rng, nx, sx);
        let v = block_mean_one(&mut rng, ny, sy);
        let with = p_star.clone().with_weights(u.clone(), v.clone())?;
        joints.push(with.curated()?);
        weights.push((u, v));
    }
    Ok(CurationScenario {
        p_star,
        blocks_x,
        blocks_y,
        weights,
        joints,
    })
}

/// Inputs for the margin/noise check with prescribed margin and noise.
#[derive(Debug, Clone)]
pub struct MarginWorld {
    pub basis: DMatrix<f64>,
    pub map: AlignmentMap,
    pub prototypes_a: DMatrix<f64>,
    pub prototypes_b: DMatrix<f64>,
    pub gamma: f64,
    pub eta: f64,
}

/// Construct unit prototypes whose identifiable signals achieve exactly
/// `gamma_target` and whose residual interactions achieve exactly
/// `eta_target`. With `adversarial` the residual mass lands on off-diagonal
/// class pairs, where it can actually flip retrievals once it beats the
/// margin.
pub fn make_margin_world(
    d: usize,
    r: usize,
    k: usize,
    gamma_target: f64,
    eta_target: f64,
    adversarial: bool,
    seed: u64,
) -> Result<MarginWorld> {
    if r >= d || k < 2 || k > r {
        return Err(Error::InvalidArgument(
            "need 2 <= k <= r < d".into(),
        ));
    }
    if d < r + 2 * k {
        return Err(Error::InvalidArgument(format!(
            "need d >= r + 2k = {} to host the residual directions",
            r + 2 * k
        )));
    }
    if !(gamma_target > 0.0 && gamma_target <= 1.0) {
        return Err(Error::InvalidArgument(
            "gamma_target must be in (0, 1] for unit prototypes".into(),
        ));
    }
    if eta_target < 0.0 || eta_target > 1.0 - gamma_target {
        return Err(Error::InvalidArgument(format!(
            "eta_target must be in [0, 1 - gamma] = [0, {}]",
            1.0 - gamma_target
        )));
    }

    // With eta = 0 the check must come out exactly zero, so the frames are
    // signed permutations: disjoint-support columns keep every cross inner
    // product at literal 0.0 through the matrix products.
    let (frame, q) = if eta_target == 0.0 {
        (
            signed_permutation(d, seed),
            signed_permutation(d, seed.wrapping_add(0x9a)),
        )
    } else {
        (
            random_semi_orthogonal(d, d, seed)?,
            random_semi_orthogonal(d, d, seed.wrapping_add(0x9a))?,
        )
    };
    let basis = frame.columns(0, r).into_owned();

    let gamma = gamma_target;
    let eta = eta_target;
    let signal_scale = gamma.sqrt();
    let resid_scale = (1.0 - gamma).sqrt();
    // alpha splits the residual between the paired direction and padding.
    let alpha = if resid_scale > 0.0 {
        eta / (1.0 - gamma)
    } else {
        0.0
    };
    let beta = resid_scale * (1.0 - alpha * alpha).max(0.0).sqrt();

    let mut protos_a = DMatrix::zeros(k, d);
    let mut protos_b = DMatrix::zeros(k, d);
    for c in 0..k {
        let u = frame.column(c) * signal_scale;
        let w = frame.column(r + c) * resid_scale;
        let g = &u + &w;
        protos_a.row_mut(c).copy_from(&g.transpose());

        let partner = if adversarial { (c + 1) % k } else { c };
        let w_hat = &q * frame.column(r + partner) * resid_scale;
        let pad = &q * frame.column(r + k + c);
        let w_tilde = w_hat * alpha + pad * beta;
        let g_tilde = &q * u + w_tilde;
        protos_b.row_mut(c).copy_from(&g_tilde.transpose());
    }

    let mut map = AlignmentMap::new(q, None, None, MapKind::Orthogonal)?;
    map.fit_modality = crate::align::FitModality::Synthetic;
    Ok(MarginWorld {
        basis,
        map,
        prototypes_a: protos_a,
        prototypes_b: protos_b,
        gamma,
        eta,
    })
}
