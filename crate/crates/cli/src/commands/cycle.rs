use std::path::PathBuf;

use clap::Args;
use embalign_core::align::{self, AlignmentMap};
use embalign_core::embstore::EmbeddingSet;
use embalign_core::Result;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::Serialize;

use super::Method;
use crate::util;

#[derive(Args)]
pub struct CycleArgs {
    /// Model A embeddings (EMB1), paired row-by-row with the others.
    #[arg(long)]
    pub a_images: PathBuf,
    #[arg(long)]
    pub b_images: PathBuf,
    /// Optional third model; enables the composition comparison.
    #[arg(long)]
    pub c_images: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "orthogonal")]
    pub method: Method,
    /// Seeds the independent subsamples the cycle maps are fit on.
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct CycleReport {
    seed: u64,
    subsample_fraction: f64,
    /// Max row deviation of forward-then-reverse from the identity.
    cycle_pointwise_deviation: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    compose: Option<ComposeReport>,
}

#[derive(Serialize)]
struct ComposeReport {
    frobenius_deviation: f64,
    pointwise_deviation: f64,
}

fn fit(method: Method, a: &EmbeddingSet, b: &EmbeddingSet) -> Result<AlignmentMap> {
    match method {
        Method::Orthogonal => align::fit_orthogonal(a, b, false),
        Method::OrthogonalCentered => align::fit_orthogonal(a, b, true),
        Method::Linear => align::fit_linear(a, b, true, 0.0),
    }
}

fn max_pointwise(a: &EmbeddingSet, b: &EmbeddingSet) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..a.n() {
        worst = worst.max((a.row_vec(i) - b.row_vec(i)).norm());
    }
    worst
}

pub fn run(args: &CycleArgs) -> Result<i32> {
    let a = util::load_normalized(&args.a_images)?;
    let b = util::load_normalized(&args.b_images)?;
    util::check_pairing(&a, &b, "a/b")?;

    // Forward and reverse maps on independent 95% subsamples, then the
    // round trip is applied to every row of A.
    let fraction = 0.95;
    let subsample = |seed: u64| -> Vec<usize> {
        let mut indices: Vec<usize> = (0..a.n()).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        indices.shuffle(&mut rng);
        indices.truncate(((a.n() as f64) * fraction).ceil() as usize);
        indices
    };
    let fwd_rows = subsample(args.seed);
    let rev_rows = subsample(args.seed.wrapping_add(1));
    let q_ab = fit(
        args.method,
        &a.select_rows(&fwd_rows)?,
        &b.select_rows(&fwd_rows)?,
    )?;
    let q_ba = fit(
        args.method,
        &b.select_rows(&rev_rows)?,
        &a.select_rows(&rev_rows)?,
    )?;
    let round_trip = align::compose(&q_ab, &q_ba)?;
    let cycled = align::apply(&round_trip, &a, None, None, false)?;
    let cycle_pointwise_deviation = max_pointwise(&cycled, &a);

    let compose = match &args.c_images {
        None => None,
        Some(path) => {
            let c = util::load_normalized(path)?;
            util::check_pairing(&a, &c, "a/c")?;
            let q_ab_full = fit(args.method, &a, &b)?;
            let q_bc = fit(args.method, &b, &c)?;
            let q_ac = fit(args.method, &a, &c)?;
            let chained = align::compose(&q_ab_full, &q_bc)?;
            let via_chain = align::apply(&chained, &a, None, None, false)?;
            let direct = align::apply(&q_ac, &a, None, None, false)?;
            Some(ComposeReport {
                frobenius_deviation: (&q_ac.q - &chained.q).norm(),
                pointwise_deviation: max_pointwise(&via_chain, &direct),
            })
        }
    };

    let report = CycleReport {
        seed: args.seed,
        subsample_fraction: fraction,
        cycle_pointwise_deviation,
        compose,
    };
    util::emit(args.out.as_ref(), &util::to_json_string(&report)?)?;
    Ok(0)
}
