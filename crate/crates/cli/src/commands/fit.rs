use std::path::PathBuf;

use clap::Args;
use embalign_core::align::{self, FitModality};
use embalign_core::{Error, Result};
use serde::Serialize;

use super::Method;
use crate::util;

#[derive(Args)]
pub struct FitArgs {
    /// Source-model EMB1 file.
    #[arg(long)]
    pub source: PathBuf,
    /// Target-model EMB1 file, paired row-by-row with the source.
    #[arg(long)]
    pub target: PathBuf,
    /// Where to write the MAP1 file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "orthogonal-centered")]
    pub method: Method,
    /// Ridge strength for the linear method.
    #[arg(long, default_value_t = 0.0)]
    pub ridge: f64,
}

#[derive(Serialize)]
struct FitSummary {
    method: String,
    n: usize,
    d_source: usize,
    d_target: usize,
    fit_modality: FitModality,
    residual: f64,
    sigma_min: f64,
    out: String,
}

pub fn run(args: &FitArgs) -> Result<i32> {
    let source = util::load_normalized(&args.source)?;
    let target = util::load_normalized(&args.target)?;
    util::check_pairing(&source, &target, "fit")?;

    let mut map = match args.method {
        Method::Orthogonal => align::fit_orthogonal(&source, &target, false)?,
        Method::OrthogonalCentered => align::fit_orthogonal(&source, &target, true)?,
        Method::Linear => align::fit_linear(&source, &target, true, args.ridge)?,
    };
    map.fit_modality = match source.modality {
        Some(embalign_core::embstore::Modality::Image) => FitModality::Image,
        Some(embalign_core::embstore::Modality::Text) => FitModality::Text,
        None => FitModality::Synthetic,
    };
    align::save_map(&map, &args.out)?;

    let stats = map.stats.ok_or_else(|| Error::Structure("fit lost stats".into()))?;
    let summary = FitSummary {
        method: format!("{:?}", args.method),
        n: source.n(),
        d_source: source.dim(),
        d_target: target.dim(),
        fit_modality: map.fit_modality,
        residual: stats.residual,
        sigma_min: stats.sigma_min,
        out: args.out.display().to_string(),
    };
    println!("{}", util::to_json_string(&summary)?);
    Ok(0)
}
