use std::path::PathBuf;

use clap::Args;
use embalign_core::embstore::{import_csv, save_embeddings, Modality};
use embalign_core::Result;

#[derive(Args)]
pub struct ImportArgs {
    /// Headerless CSV; with --labeled the first column is an integer label.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = false)]
    pub labeled: bool,
    #[arg(long)]
    pub model_id: Option<String>,
    #[arg(long)]
    pub modality: Option<String>,
    #[arg(long)]
    pub dataset_id: Option<String>,
}

pub fn run(args: &ImportArgs) -> Result<i32> {
    let mut set = import_csv(&args.input, args.labeled)?;
    if let Some(m) = &args.model_id {
        set.model_id = m.clone();
    }
    if let Some(d) = &args.dataset_id {
        set.dataset_id = d.clone();
    }
    set.modality = match args.modality.as_deref() {
        None => None,
        Some("image") => Some(Modality::Image),
        Some("text") => Some(Modality::Text),
        Some(other) => {
            return Err(embalign_core::Error::InvalidArgument(format!(
                "modality must be image or text, got {other:?}"
            )))
        }
    };
    save_embeddings(&set, &args.out)?;
    eprintln!(
        "imported {} rows x {} dims -> {}",
        set.n(),
        set.dim(),
        args.out.display()
    );
    Ok(0)
}
