//! `encode`: cross-validated per-target encoding scores. Every layer is
//! scored and each target keeps its best layer; the per-target table goes
//! to `per_target_scores.csv`.

use serde::Serialize;

use layerscore::data::ResponseData;
use layerscore::metrics::{best_layer_scores, layer_encoding};
use layerscore::numeric::Matrix;

use super::{fold_plan, load_aligned, mean_defined};
use crate::config::{CliError, RunConfig};
use crate::report::{csv_cell, ensure_out_dir, write_report, write_text, Report};

#[derive(Debug, Serialize)]
pub struct LayerSummary {
    pub depth: f64,
    pub mean_r: Option<f64>,
    pub n_masked: usize,
    pub lambda_per_fold: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct EncodeResults {
    pub modality: String,
    pub n_stimuli: usize,
    pub n_targets: usize,
    pub n_layers: usize,
    /// Mean over targets of the best-layer score.
    pub mean_r: Option<f64>,
    pub n_masked: usize,
    pub per_layer: Vec<LayerSummary>,
    /// Axis the per-target score is maximized over.
    pub normalization_axis: &'static str,
}

pub fn run(config: &RunConfig) -> Result<(), CliError> {
    if config.manifests.len() != 1 {
        return Err(CliError::Usage(format!(
            "encode takes exactly one --manifest, got {}",
            config.manifests.len()
        )));
    }
    let loaded = load_aligned(config.manifests[0].as_ref())?;
    let mut warnings = loaded.warnings.clone();
    let ckpt = loaded.dataset.single_checkpoint()?;
    let targets: Matrix = match &loaded.dataset.response {
        ResponseData::Fmri { matrix, .. } => matrix.clone(),
        ResponseData::Meg { response, .. } => {
            let all: Vec<usize> = (0..response.n_times()).collect();
            response.flatten_cells(&all)
        }
    };
    let plan = fold_plan(config, ckpt.layers.n_stimuli())?;
    let grid = config.lambda_grid()?;
    let per_layer = layer_encoding(
        &ckpt.layers,
        &targets,
        &plan,
        &grid,
        config.encode_options(),
    )?;

    let best = best_layer_scores(&per_layer);
    let depths = ckpt.layers.depths();
    let best_depth: Vec<Option<f64>> = (0..targets.cols())
        .map(|j| {
            let mut out: Option<(f64, f64)> = None; // (score, depth)
            for (li, res) in per_layer.iter().enumerate() {
                if let Some(r) = res.per_target_r[j] {
                    if out.map(|(s, _)| r > s).unwrap_or(true) {
                        out = Some((r, depths[li]));
                    }
                }
            }
            out.map(|(_, d)| d)
        })
        .collect();

    let n_masked = best.iter().filter(|b| b.is_none()).count();
    if n_masked > 0 {
        warnings.push(format!("{n_masked} targets masked in every layer"));
    }

    let results = EncodeResults {
        modality: match &loaded.dataset.response {
            ResponseData::Fmri { .. } => "fmri".into(),
            ResponseData::Meg { .. } => "meg".into(),
        },
        n_stimuli: ckpt.layers.n_stimuli(),
        n_targets: targets.cols(),
        n_layers: ckpt.layers.n_layers(),
        mean_r: mean_defined(best.iter().copied()),
        n_masked,
        per_layer: per_layer
            .iter()
            .zip(&depths)
            .map(|(res, &depth)| LayerSummary {
                depth,
                mean_r: res.mean_r(),
                n_masked: res.n_masked(),
                lambda_per_fold: res.lambda_per_fold.clone(),
            })
            .collect(),
        normalization_axis: "per-target argmax over layers",
    };

    let out_dir: &std::path::Path = config.out_dir.as_ref();
    ensure_out_dir(out_dir)?;
    let mut csv = String::from("target,best_r,best_layer_depth,masked\n");
    for j in 0..targets.cols() {
        csv.push_str(&format!(
            "{j},{},{},{}\n",
            csv_cell(best[j]),
            csv_cell(best_depth[j]),
            best[j].is_none()
        ));
    }
    write_text(&out_dir.join("per_target_scores.csv"), &csv)?;
    write_report(out_dir, &Report::new(config.clone(), results, warnings))?;
    Ok(())
}
