use std::path::PathBuf;

use clap::Args;
use embalign_core::align;
use embalign_core::metrics::two_path_retrieval;
use embalign_core::report::{metric_rows_to_csv, MetricRow};
use embalign_core::Result;

use super::Format;
use crate::util;

#[derive(Args)]
pub struct TwoPathArgs {
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
    /// Neighborhood size compared between the two paths.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

pub fn run(args: &TwoPathArgs) -> Result<i32> {
    let map = align::load_map(&args.map)?;
    let src_img = util::load_normalized(&args.source_images)?;
    let src_txt = util::load_normalized(&args.source_texts)?;
    let tgt_img = util::load_normalized(&args.target_images)?;
    let tgt_txt = util::load_normalized(&args.target_texts)?;

    if args.k > tgt_img.n() {
        eprintln!(
            "warning: k = {} exceeds the {}-row target gallery; clamping",
            args.k,
            tgt_img.n()
        );
    }
    let report = two_path_retrieval(&src_img, &src_txt, &tgt_img, &tgt_txt, &map, args.k)?;

    let rendered = match args.format {
        Format::Json => util::to_json_string(&report)?,
        Format::Csv => {
            let mut rows = vec![
                MetricRow::new("mean_jaccard", "summary", report.mean_jaccard),
                MetricRow::new("class_match_fraction", "summary", report.class_match_fraction),
            ];
            for (i, j) in report.per_query_jaccard.iter().enumerate() {
                rows.push(MetricRow::new("jaccard", format!("q{i:04}"), *j));
            }
            metric_rows_to_csv(&rows)?
        }
    };
    util::emit(args.out.as_ref(), &rendered)?;
    Ok(0)
}
