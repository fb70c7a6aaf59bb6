use std::path::PathBuf;

use clap::Args;
use embalign_core::align::{self, AlignmentMap, MapKind};
use embalign_core::embstore::{class_prototypes, normalize, EmbeddingSet};
use embalign_core::metrics;
use embalign_core::report::{metric_rows_to_csv, MetricRow};
use embalign_core::{Error, Result};
use serde::Serialize;

use super::Format;
use crate::util;

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub map: PathBuf,
    #[arg(long)]
    pub source_images: PathBuf,
    #[arg(long)]
    pub source_texts: PathBuf,
    #[arg(long)]
    pub target_images: PathBuf,
    #[arg(long)]
    pub target_texts: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Serialize)]
struct EvalReport {
    map: String,
    kind: MapKind,
    rows: Vec<MetricRow>,
    skipped: Vec<String>,
}

struct Battery {
    rows: Vec<MetricRow>,
    skipped: Vec<String>,
}

impl Battery {
    fn push(&mut self, metric: &str, subset: &str, value: f64) {
        self.rows.push(MetricRow::new(metric, subset, value));
    }

    fn skip(&mut self, what: &str, why: impl std::fmt::Display) {
        eprintln!("warning: skipping {what}: {why}");
        self.skipped.push(format!("{what}: {why}"));
    }
}

fn labeled(set: &EmbeddingSet) -> bool {
    set.labels.is_some()
}

pub fn run(args: &EvalArgs) -> Result<i32> {
    let map = align::load_map(&args.map)?;
    let src_img = util::load_normalized(&args.source_images)?;
    let src_txt = util::load_normalized(&args.source_texts)?;
    let tgt_img = util::load_normalized(&args.target_images)?;
    let tgt_txt = util::load_normalized(&args.target_texts)?;

    for (set, name) in [(&src_img, "source images"), (&src_txt, "source texts")] {
        if set.dim() != map.dim_source() {
            return Err(Error::Shape(format!(
                "{name} have dimension {}, map expects {}",
                set.dim(),
                map.dim_source()
            )));
        }
    }
    for (set, name) in [(&tgt_img, "target images"), (&tgt_txt, "target texts")] {
        if set.dim() != map.dim_target() {
            return Err(Error::Shape(format!(
                "{name} have dimension {}, map expects {}",
                set.dim(),
                map.dim_target()
            )));
        }
    }
    util::check_pairing(&src_img, &tgt_img, "images")?;
    util::check_pairing(&src_txt, &tgt_txt, "texts")?;

    let aligned_img = align::apply(&map, &src_img, None, None, false)?;
    let aligned_txt = align::apply(&map, &src_txt, None, None, false)?;
    let square = map.dim_source() == map.dim_target();

    let mut battery = Battery {
        rows: Vec::new(),
        skipped: Vec::new(),
    };
    if !square {
        battery.skip(
            "before-alignment metrics",
            "source and target dimensions differ",
        );
    }

    paired_block(&mut battery, "image", &src_img, &aligned_img, &tgt_img, square)?;
    paired_block(&mut battery, "text", &src_txt, &aligned_txt, &tgt_txt, square)?;

    retrieval_block(&mut battery, "image_image", &src_img, &aligned_img, &tgt_img, square)?;
    retrieval_block(&mut battery, "text_text", &src_txt, &aligned_txt, &tgt_txt, square)?;

    zero_shot_block(
        &mut battery,
        &map,
        (&src_img, &aligned_img, &tgt_img),
        (&src_txt, &aligned_txt, &tgt_txt),
        square,
    )?;

    battery.push(
        "modality_gap",
        "source_model",
        metrics::modality_gap(&src_img, &src_txt)?,
    );
    battery.push(
        "modality_gap",
        "target_model",
        metrics::modality_gap(&tgt_img, &tgt_txt)?,
    );
    let k_src = metrics::multimodal_kernel(&src_img, &src_txt)?;
    let k_tgt = metrics::multimodal_kernel(&tgt_img, &tgt_txt)?;
    battery.push("multimodal_kernel_cka", "cross_model", metrics::cka(&k_src, &k_tgt)?);

    let report = EvalReport {
        map: args.map.display().to_string(),
        kind: map.kind,
        rows: battery.rows,
        skipped: battery.skipped,
    };
    let rendered = match args.format {
        Format::Json => util::to_json_string(&report)?,
        Format::Csv => metric_rows_to_csv(&report.rows)?,
    };
    util::emit(args.out.as_ref(), &rendered)?;
    Ok(0)
}

fn paired_block(
    battery: &mut Battery,
    modality: &str,
    raw_src: &EmbeddingSet,
    aligned: &EmbeddingSet,
    target: &EmbeddingSet,
    square: bool,
) -> Result<()> {
    if square {
        let before = metrics::paired_cosine(raw_src, target)?;
        battery.push(
            &format!("paired_cosine_{modality}"),
            "before",
            before.mean_cosine.unwrap(),
        );
        battery.push(
            &format!("paired_cosine_{modality}_std"),
            "before",
            before.std_cosine.unwrap(),
        );
        let l2 = metrics::paired_l2(raw_src, target)?;
        battery.push(&format!("paired_l2_{modality}"), "before", l2.mean_l2.unwrap());
    }
    let after = metrics::paired_cosine(aligned, target)?;
    battery.push(
        &format!("paired_cosine_{modality}"),
        "after",
        after.mean_cosine.unwrap(),
    );
    battery.push(
        &format!("paired_cosine_{modality}_std"),
        "after",
        after.std_cosine.unwrap(),
    );
    let l2 = metrics::paired_l2(aligned, target)?;
    battery.push(&format!("paired_l2_{modality}"), "after", l2.mean_l2.unwrap());
    Ok(())
}

fn retrieval_block(
    battery: &mut Battery,
    name: &str,
    raw_src: &EmbeddingSet,
    aligned: &EmbeddingSet,
    target: &EmbeddingSet,
    square: bool,
) -> Result<()> {
    let metric = format!("retrieval_{name}");
    if !labeled(raw_src) || !labeled(target) {
        battery.skip(&metric, "missing labels");
        return Ok(());
    }
    if square {
        let before = metrics::class_retrieval_top1(raw_src, target, false)?;
        battery.push(&metric, "before", before.top1_accuracy.unwrap());
    }
    let after = metrics::class_retrieval_top1(aligned, target, false)?;
    battery.push(&metric, "after", after.top1_accuracy.unwrap());
    Ok(())
}

fn zero_shot_block(
    battery: &mut Battery,
    _map: &AlignmentMap,
    (src_img, aligned_img, tgt_img): (&EmbeddingSet, &EmbeddingSet, &EmbeddingSet),
    (src_txt, aligned_txt, tgt_txt): (&EmbeddingSet, &EmbeddingSet, &EmbeddingSet),
    square: bool,
) -> Result<()> {
    if !labeled(src_img) || !labeled(tgt_img) || !labeled(src_txt) || !labeled(tgt_txt) {
        battery.skip("zero_shot metrics", "missing labels");
        return Ok(());
    }
    let protos_src = class_prototypes(src_txt)?;
    let protos_tgt = class_prototypes(tgt_txt)?;
    let protos_aligned = class_prototypes(&normalize(aligned_txt, 1e-12)?)?;

    // aligned images against target text
    if square {
        battery.push(
            "zero_shot_aligned_image_target_text",
            "before",
            metrics::zero_shot(src_img, &protos_tgt)?.top1_accuracy.unwrap(),
        );
    }
    battery.push(
        "zero_shot_aligned_image_target_text",
        "after",
        metrics::zero_shot(aligned_img, &protos_tgt)?.top1_accuracy.unwrap(),
    );

    // target images against aligned text
    if square {
        battery.push(
            "zero_shot_target_image_aligned_text",
            "before",
            metrics::zero_shot(tgt_img, &protos_src)?.top1_accuracy.unwrap(),
        );
    }
    battery.push(
        "zero_shot_target_image_aligned_text",
        "after",
        metrics::zero_shot(tgt_img, &protos_aligned)?.top1_accuracy.unwrap(),
    );

    // both sides aligned, plus each model's own image-to-text baseline
    battery.push(
        "zero_shot_aligned_image_aligned_text",
        "after",
        metrics::zero_shot(aligned_img, &protos_aligned)?.top1_accuracy.unwrap(),
    );
    battery.push(
        "zero_shot_within_model",
        "model_a",
        metrics::zero_shot(src_img, &protos_src)?.top1_accuracy.unwrap(),
    );
    battery.push(
        "zero_shot_within_model",
        "model_b",
        metrics::zero_shot(tgt_img, &protos_tgt)?.top1_accuracy.unwrap(),
    );
    Ok(())
}
