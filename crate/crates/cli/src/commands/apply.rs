use std::path::PathBuf;

use clap::Args;
use embalign_core::align;
use embalign_core::embstore;
use embalign_core::{Error, Result};

use crate::util;

#[derive(Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub map: PathBuf,
    /// EMB1 file to transform.
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Renormalize rows after the transform.
    #[arg(long, default_value_t = false)]
    pub renormalize: bool,
    /// Recompute the source mean on this set instead of the stored one
    /// (cross-dataset re-centering; requires --recenter-target).
    #[arg(long)]
    pub recenter_source: Option<PathBuf>,
    /// Recompute the target mean on this set instead of the stored one.
    #[arg(long)]
    pub recenter_target: Option<PathBuf>,
}

pub fn run(args: &ApplyArgs) -> Result<i32> {
    let map = align::load_map(&args.map)?;
    let set = embstore::load_embeddings(&args.source)?;
    let set = embstore::normalize(&set, 1e-12)?;

    let overrides = match (&args.recenter_source, &args.recenter_target) {
        (None, None) => None,
        (Some(src), Some(tgt)) => {
            let mu_s = util::load_normalized(src)?.mean_vector();
            let mu_t = util::load_normalized(tgt)?.mean_vector();
            Some((mu_s, mu_t))
        }
        _ => {
            return Err(Error::InvalidArgument(
                "--recenter-source and --recenter-target must be given together".into(),
            ))
        }
    };
    let out = match &overrides {
        Some((mu_s, mu_t)) => align::apply(&map, &set, Some(mu_s), Some(mu_t), args.renormalize)?,
        None => align::apply(&map, &set, None, None, args.renormalize)?,
    };
    embstore::save_embeddings(&out, &args.out)?;
    eprintln!(
        "applied {} -> {} rows={} d={}",
        args.map.display(),
        args.out.display(),
        out.n(),
        out.dim()
    );
    Ok(0)
}
