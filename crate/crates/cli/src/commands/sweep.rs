use std::path::PathBuf;

use clap::Args;
use embalign_core::align;
use embalign_core::embstore::{class_prototypes, normalize, split, EmbeddingSet, SplitSpec};
use embalign_core::metrics;
use embalign_core::report::{sweep_rows_to_csv, SweepRow};
use embalign_core::{Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::Serialize;

use super::{Format, Method};
use crate::util;

#[derive(Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub source_images: PathBuf,
    #[arg(long)]
    pub target_images: PathBuf,
    #[arg(long)]
    pub source_texts: PathBuf,
    #[arg(long)]
    pub target_texts: PathBuf,
    /// Comma-separated list of seen-class counts, e.g. 2,4,8.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<usize>,
    /// Seeds the class order the prefixes are taken from.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "orthogonal")]
    pub method: Method,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Serialize)]
struct SweepReport {
    seed: u64,
    class_order: Vec<u32>,
    rows: Vec<SweepRow>,
}

pub fn run(args: &SweepArgs) -> Result<i32> {
    let src_img = util::load_normalized(&args.source_images)?;
    let tgt_img = util::load_normalized(&args.target_images)?;
    let src_txt = util::load_normalized(&args.source_texts)?;
    let tgt_txt = util::load_normalized(&args.target_texts)?;
    util::check_pairing(&src_img, &tgt_img, "images")?;
    util::check_pairing(&src_txt, &tgt_txt, "texts")?;

    let mut class_order = src_img.distinct_classes()?;
    for set in [&src_txt, &tgt_img, &tgt_txt] {
        if set.labels.is_none() {
            return Err(Error::MissingLabels("sweep needs labels on all sets".into()));
        }
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
    class_order.shuffle(&mut rng);

    if args.classes.is_empty() {
        return Err(Error::InvalidArgument("--classes must not be empty".into()));
    }
    for &n in &args.classes {
        if n == 0 || n > class_order.len() {
            return Err(Error::InvalidArgument(format!(
                "N = {n} exceeds the {} available classes",
                class_order.len()
            )));
        }
    }

    let mut rows = Vec::new();
    for &n in &args.classes {
        let seen_classes: Vec<u32> = class_order[..n].to_vec();
        let spec = SplitSpec::ByClasses {
            classes: seen_classes.clone(),
        };
        let (seen_src_img, unseen_src_img) = split(&src_img, &spec)?;
        let (seen_tgt_img, unseen_tgt_img) = split(&tgt_img, &spec)?;
        let (seen_src_txt, unseen_src_txt) = split(&src_txt, &spec)?;
        let (seen_tgt_txt, unseen_tgt_txt) = split(&tgt_txt, &spec)?;

        let map = match args.method {
            Method::Orthogonal => align::fit_orthogonal(&seen_src_img, &seen_tgt_img, false)?,
            Method::OrthogonalCentered => {
                align::fit_orthogonal(&seen_src_img, &seen_tgt_img, true)?
            }
            Method::Linear => align::fit_linear(&seen_src_img, &seen_tgt_img, true, 0.0)?,
        };

        partition_rows(&mut rows, n, "seen", &map, &seen_src_img, &seen_tgt_img, &seen_src_txt, &seen_tgt_txt)?;
        if unseen_src_img.n() > 0 && unseen_src_txt.n() > 0 {
            partition_rows(
                &mut rows,
                n,
                "unseen",
                &map,
                &unseen_src_img,
                &unseen_tgt_img,
                &unseen_src_txt,
                &unseen_tgt_txt,
            )?;
        }
    }

    let rendered = match args.format {
        Format::Csv => sweep_rows_to_csv(&rows)?,
        Format::Json => util::to_json_string(&SweepReport {
            seed: args.seed,
            class_order,
            rows,
        })?,
    };
    util::emit(args.out.as_ref(), &rendered)?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn partition_rows(
    rows: &mut Vec<SweepRow>,
    n: usize,
    subset: &str,
    map: &align::AlignmentMap,
    src_img: &EmbeddingSet,
    tgt_img: &EmbeddingSet,
    src_txt: &EmbeddingSet,
    tgt_txt: &EmbeddingSet,
) -> Result<()> {
    let aligned_img = align::apply(map, src_img, None, None, false)?;
    let aligned_txt = align::apply(map, src_txt, None, None, false)?;
    let mut push = |metric: &str, value: f64| {
        rows.push(SweepRow {
            n,
            subset: subset.to_string(),
            metric: metric.to_string(),
            value,
        });
    };
    push(
        "paired_cosine_image",
        metrics::paired_cosine(&aligned_img, tgt_img)?.mean_cosine.unwrap(),
    );
    push(
        "paired_cosine_text",
        metrics::paired_cosine(&aligned_txt, tgt_txt)?.mean_cosine.unwrap(),
    );
    let protos = class_prototypes(&normalize(&aligned_txt, 1e-12)?)?;
    push(
        "zero_shot_aligned_image_aligned_text",
        metrics::zero_shot(&aligned_img, &protos)?.top1_accuracy.unwrap(),
    );
    Ok(())
}
