use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use embalign_core::embstore::{save_embeddings, Dtype, EmbeddingSet};
use embalign_core::synth::{
    make_curation_world, make_exact_anchor_world, make_margin_world, make_planted, PlantedParams,
};
use embalign_core::Result;
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use crate::util::matrix_to_nested;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    /// Two-model two-modality world related by a planted isometry.
    Planted,
    /// Exact-regime anchor matrices plus the planted world behind them.
    Anchors,
    /// Block-structured curated discrete joints.
    Curation,
    /// Prototypes with prescribed margin and residual noise.
    Margin,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub kind: SynthKind,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub d: usize,
    /// Target dimension; defaults to d.
    #[arg(long)]
    pub d_tilde: Option<usize>,
    #[arg(long, default_value_t = 120)]
    pub n_img: usize,
    #[arg(long, default_value_t = 60)]
    pub n_txt: usize,
    #[arg(long, default_value_t = 6)]
    pub classes: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.5)]
    pub gap: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    // curation knobs
    #[arg(long, default_value_t = 12)]
    pub nx: usize,
    #[arg(long, default_value_t = 12)]
    pub ny: usize,
    #[arg(long, default_value_t = 3)]
    pub bx: usize,
    #[arg(long, default_value_t = 3)]
    pub by: usize,
    #[arg(long, default_value_t = 2)]
    pub datasets: usize,
    // margin knobs
    #[arg(long, default_value_t = 6)]
    pub rank: usize,
    #[arg(long, default_value_t = 0.4)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    #[arg(long, default_value_t = false)]
    pub adversarial: bool,
}

fn write_scenario(dir: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(dir.join("scenario.json"), text)?;
    Ok(())
}

fn columns_as_set(m: &DMatrix<f64>) -> EmbeddingSet {
    EmbeddingSet {
        data: m.transpose(),
        labels: None,
        class_names: None,
        model_id: String::new(),
        modality: None,
        dataset_id: String::new(),
        normalized: false,
        dtype: Dtype::F64,
    }
}

pub fn run(args: &SynthArgs) -> Result<i32> {
    std::fs::create_dir_all(&args.out_dir)?;
    let dir = args.out_dir.as_path();
    let d_tilde = args.d_tilde.unwrap_or(args.d);

    match args.kind {
        SynthKind::Planted => {
            let mut params =
                PlantedParams::new(args.d, d_tilde, args.n_img, args.n_txt, args.classes, args.seed);
            params.noise_sigma = args.noise;
            params.gap_norm = args.gap;
            let scenario = make_planted(&params)?;
            for warning in &scenario.warnings {
                eprintln!("warning: {warning}");
            }
            save_embeddings(&scenario.f_a, dir.join("fa.emb"))?;
            save_embeddings(&scenario.g_a, dir.join("ga.emb"))?;
            save_embeddings(&scenario.f_b, dir.join("fb.emb"))?;
            save_embeddings(&scenario.g_b, dir.join("gb.emb"))?;
            write_scenario(
                dir,
                &json!({
                    "kind": "planted",
                    "params": scenario.params,
                    "q_true": matrix_to_nested(&scenario.q_true),
                    "achieved_gap": scenario.achieved_gap,
                    "warnings": scenario.warnings,
                    "files": {
                        "f_a": "fa.emb", "g_a": "ga.emb",
                        "f_b": "fb.emb", "g_b": "gb.emb"
                    },
                }),
            )?;
        }
        SynthKind::Anchors => {
            let (anchors, scenario) = make_exact_anchor_world(args.d, d_tilde, args.seed)?;
            save_embeddings(&scenario.f_a, dir.join("fa.emb"))?;
            save_embeddings(&scenario.g_a, dir.join("ga.emb"))?;
            save_embeddings(&scenario.f_b, dir.join("fb.emb"))?;
            save_embeddings(&scenario.g_b, dir.join("gb.emb"))?;
            // anchor files hold the anchor vectors as rows
            save_embeddings(&columns_as_set(&anchors.g), dir.join("anchors_g.emb"))?;
            save_embeddings(&columns_as_set(&anchors.g_tilde), dir.join("anchors_g_tilde.emb"))?;
            save_embeddings(&columns_as_set(&anchors.f), dir.join("anchors_f.emb"))?;
            write_scenario(
                dir,
                &json!({
                    "kind": "anchors",
                    "seed": args.seed,
                    "d": args.d,
                    "d_tilde": d_tilde,
                    "q_true": matrix_to_nested(&scenario.q_true),
                    "files": {
                        "f_a": "fa.emb", "g_a": "ga.emb",
                        "f_b": "fb.emb", "g_b": "gb.emb",
                        "anchors_g": "anchors_g.emb",
                        "anchors_g_tilde": "anchors_g_tilde.emb",
                        "anchors_f": "anchors_f.emb"
                    },
                }),
            )?;
        }
        SynthKind::Curation => {
            let scenario =
                make_curation_world(args.nx, args.ny, args.bx, args.by, args.datasets, args.seed)?;
            write_scenario(
                dir,
                &json!({
                    "kind": "curation",
                    "seed": args.seed,
                    "nx": args.nx, "ny": args.ny, "bx": args.bx, "by": args.by,
                    "p_star": matrix_to_nested(&scenario.p_star.p),
                    "blocks_x": scenario.blocks_x,
                    "blocks_y": scenario.blocks_y,
                    "weights": scenario
                        .weights
                        .iter()
                        .map(|(u, v)| json!({
                            "u": u.iter().copied().collect::<Vec<f64>>(),
                            "v": v.iter().copied().collect::<Vec<f64>>(),
                        }))
                        .collect::<Vec<_>>(),
                    "joints": scenario
                        .joints
                        .iter()
                        .map(|j| matrix_to_nested(&j.p))
                        .collect::<Vec<_>>(),
                }),
            )?;
        }
        SynthKind::Margin => {
            let world = make_margin_world(
                args.d,
                args.rank,
                args.classes,
                args.gamma,
                args.eta,
                args.adversarial,
                args.seed,
            )?;
            let labels: Vec<u32> = (0..args.classes as u32).collect();
            let protos_a = EmbeddingSet {
                data: world.prototypes_a.clone(),
                labels: Some(labels.clone()),
                class_names: None,
                model_id: "model-a".into(),
                modality: Some(embalign_core::embstore::Modality::Text),
                dataset_id: "margin".into(),
                normalized: true,
                dtype: Dtype::F64,
            };
            let mut protos_b = protos_a.clone();
            protos_b.data = world.prototypes_b.clone();
            protos_b.model_id = "model-b".into();
            protos_a.validate()?;
            protos_b.validate()?;
            save_embeddings(&protos_a, dir.join("prototypes_a.emb"))?;
            save_embeddings(&protos_b, dir.join("prototypes_b.emb"))?;
            save_embeddings(&columns_as_set(&world.basis), dir.join("basis.emb"))?;
            write_scenario(
                dir,
                &json!({
                    "kind": "margin",
                    "seed": args.seed,
                    "d": args.d,
                    "rank": args.rank,
                    "classes": args.classes,
                    "gamma": world.gamma,
                    "eta": world.eta,
                    "adversarial": args.adversarial,
                    "q_true": matrix_to_nested(&world.map.q),
                    "files": {
                        "prototypes_a": "prototypes_a.emb",
                        "prototypes_b": "prototypes_b.emb",
                        "basis": "basis.emb"
                    },
                }),
            )?;
        }
    }
    eprintln!("scenario written to {}", dir.display());
    Ok(0)
}
