//! Shared plumbing for the subcommands.

use std::path::{Path, PathBuf};

use embalign_core::embstore::{self, EmbeddingSet};
use embalign_core::{Error, Result};
use nalgebra::DMatrix;

/// Load an EMB1 file and l2-normalize its rows, the form every similarity
/// computation expects.
pub fn load_normalized(path: &Path) -> Result<EmbeddingSet> {
    let set = embstore::load_embeddings(path)?;
    embstore::normalize(&set, 1e-12)
}

/// Write to `out` when given, stdout otherwise.
pub fn emit(out: Option<&PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)?,
        None => println!("{content}"),
    }
    Ok(())
}

/// Paired inputs must agree on row count and, when both carry labels, on
/// the labels themselves (pairing is positional).
pub fn check_pairing(a: &EmbeddingSet, b: &EmbeddingSet, what: &str) -> Result<()> {
    if a.n() != b.n() {
        return Err(Error::Shape(format!(
            "{what}: paired files have {} and {} rows",
            a.n(),
            b.n()
        )));
    }
    if let (Some(la), Some(lb)) = (&a.labels, &b.labels) {
        if la != lb {
            return Err(Error::Structure(format!(
                "{what}: paired files disagree on labels"
            )));
        }
    }
    Ok(())
}

pub fn matrix_to_nested(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter()
        .map(|row| row.iter().copied().collect())
        .collect()
}

/// Standalone pretty JSON printer; field order comes from the struct, so
/// repeat runs are byte-identical.
pub fn to_json_string<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}
