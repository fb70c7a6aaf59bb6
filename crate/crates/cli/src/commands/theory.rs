use std::path::PathBuf;

use clap::Args;
use embalign_core::embstore::{Dtype, EmbeddingSet};
use embalign_core::theory::{sym_dim, sym_spanning};
use embalign_core::verify::{run_theory_sweeps, TheoryRun};
use embalign_core::Result;
use rand::Rng;
use rand::SeedableRng;
use serde::Serialize;

use crate::util;

#[derive(Args)]
pub struct TheoryArgs {
    /// Instances per check family.
    #[arg(long, default_value_t = 1000)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Generate curations that violate the bias condition; their residuals
    /// are reported but not enforced.
    #[arg(long, default_value_t = false)]
    pub violate_preconditions: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct SpanningDiagnostic {
    d: usize,
    n: usize,
    rank: usize,
    required: usize,
    spanning: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa_lower: Option<f64>,
}

#[derive(Serialize)]
struct TheoryReport {
    spanning: Vec<SpanningDiagnostic>,
    run: TheoryRun,
}

fn generic_unit_set(d: usize, n: usize, seed: u64) -> EmbeddingSet {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut data = nalgebra::DMatrix::zeros(n, d);
    for i in 0..n {
        let v = nalgebra::DVector::from_fn(d, |_, _| {
            rng.sample::<f64, _>(rand_distr::StandardNormal)
        });
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

pub fn run(args: &TheoryArgs) -> Result<i32> {
    let mut spanning = Vec::new();
    for (i, d) in [2usize, 3, 4, 8].into_iter().enumerate() {
        let n = sym_dim(d) + 4;
        let set = generic_unit_set(d, n, args.seed.wrapping_add(i as u64));
        let report = sym_spanning(&set)?;
        spanning.push(SpanningDiagnostic {
            d,
            n,
            rank: report.rank,
            required: report.required,
            spanning: report.spanning,
            kappa_lower: report.kappa_lower.is_finite().then_some(report.kappa_lower),
        });
    }

    let run = run_theory_sweeps(args.instances, args.seed, args.violate_preconditions)?;
    let violations = run.violations();
    let report = TheoryReport { spanning, run };
    util::emit(args.out.as_ref(), &util::to_json_string(&report)?)?;

    if violations.is_empty() {
        Ok(0)
    } else {
        for (check, seed) in &violations {
            eprintln!("violation: {check} instance with seed {seed}");
        }
        Ok(1)
    }
}
