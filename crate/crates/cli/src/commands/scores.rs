//! `scores`: the hierarchy-alignment metrics. For fMRI-like manifests the
//! spatial score correlates each target's (or region's) best layer depth
//! with its distance from V1; for MEG-like manifests the temporal score
//! correlates layer depth with T_max. Both come with a scatter figure.

use serde::Serialize;

use layerscore::data::{distance_from_v1, ResponseData, RoiTable};
use layerscore::metrics::{
    best_layer_map, best_layer_scores, layer_encoding, spatial_score_roi, spatial_score_voxel,
    temporal_curves, temporal_score, Correlation, TemporalProfile, VoxelGeometry,
};
use layerscore::numeric::Matrix;
use layerscore::ridge::EncodingResult;
use layerscore::stats::{fdr_bh, pearson_p};

use super::{adjusted_target_p, fold_plan, load_aligned, target_significance, FdrInfo};
use crate::config::{CliError, FdrFamily, Level, RoiInclusion, RunConfig};
use crate::report::{ensure_out_dir, write_report, write_text, Report};
use crate::svg::{fmt_sig, scatter_svg};

#[derive(Debug, Serialize)]
pub struct CorrelationOut {
    pub r: f64,
    pub p: f64,
    pub n: usize,
    pub degenerate: bool,
}

impl From<Correlation> for CorrelationOut {
    fn from(c: Correlation) -> Self {
        CorrelationOut {
            r: c.r,
            p: c.p,
            n: c.n,
            degenerate: c.degenerate,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SpatialResults {
    pub modality: &'static str,
    pub level: Level,
    pub spatial: CorrelationOut,
    pub n_targets: usize,
    pub n_surviving: usize,
    pub n_excluded: usize,
    pub fdr: FdrInfo,
    pub roi_inclusion: Option<RoiInclusion>,
    pub included_rois: Option<Vec<String>>,
    /// Best depth per included region at roi level.
    pub roi_k_star: Option<Vec<Option<f64>>>,
    pub normalization_axis: &'static str,
}

#[derive(Debug, Serialize)]
pub struct TemporalResults {
    pub modality: &'static str,
    pub temporal: CorrelationOut,
    pub depths: Vec<f64>,
    pub t_max: Vec<f64>,
    pub threshold: f64,
    pub times: Vec<f64>,
    pub curves: Vec<Vec<f64>>,
    pub normalization_axis: &'static str,
}

pub fn run(config: &RunConfig) -> Result<(), CliError> {
    if config.manifests.len() != 1 {
        return Err(CliError::Usage(format!(
            "scores takes exactly one --manifest, got {}",
            config.manifests.len()
        )));
    }
    let loaded = load_aligned(config.manifests[0].as_ref())?;
    let warnings = loaded.warnings.clone();
    match &loaded.dataset.response {
        ResponseData::Fmri { matrix, geometry } => spatial(
            config,
            &loaded.dataset,
            matrix,
            geometry,
            loaded.dataset.roi_table.as_ref(),
            warnings,
        ),
        ResponseData::Meg { response, .. } => temporal(config, &loaded.dataset, response, warnings),
    }
}

fn spatial(
    config: &RunConfig,
    dataset: &layerscore::data::AlignedDataset,
    matrix: &Matrix,
    geometry: &VoxelGeometry,
    roi_table: Option<&RoiTable>,
    mut warnings: Vec<String>,
) -> Result<(), CliError> {
    let ckpt = dataset.single_checkpoint()?;
    let plan = fold_plan(config, ckpt.layers.n_stimuli())?;
    let grid = config.lambda_grid()?;
    let per_layer = layer_encoding(&ckpt.layers, matrix, &plan, &grid, config.encode_options())?;
    let depths = ckpt.layers.depths();
    let best = best_layer_scores(&per_layer);
    let n_stimuli = ckpt.layers.n_stimuli();
    let (mask, fdr) = target_significance(config, &best, n_stimuli)?;

    let out_dir: &std::path::Path = config.out_dir.as_ref();
    match config.level {
        Level::Voxel => {
            let map = best_layer_map(&per_layer, &depths, mask.as_deref())?;
            let dists = distance_from_v1(geometry)?;
            let corr = spatial_score_voxel(&map.k_star, &dists)?;
            let n_surviving = map.k_star.iter().filter(|k| k.is_some()).count();
            if !map.excluded.is_empty() {
                warnings.push(format!("{} targets excluded", map.excluded.len()));
            }
            let points: Vec<(f64, f64)> = map
                .k_star
                .iter()
                .zip(&dists)
                .filter_map(|(k, d)| k.map(|k| (*d, k)))
                .collect();
            let svg = scatter_svg(
                "best layer depth vs distance from V1",
                "distance from V1 (mm)",
                "best layer depth",
                &points,
                &format!("r = {}, p = {}", fmt_sig(corr.r), fmt_sig(corr.p)),
            );
            ensure_out_dir(out_dir)?;
            write_text(&out_dir.join("spatial_scatter.svg"), &svg)?;
            let results = SpatialResults {
                modality: "fmri",
                level: config.level,
                spatial: corr.into(),
                n_targets: best.len(),
                n_surviving,
                n_excluded: map.excluded.len(),
                fdr,
                roi_inclusion: None,
                included_rois: None,
                roi_k_star: None,
                normalization_axis: "per-target argmax over layers",
            };
            write_report(out_dir, &Report::new(config.clone(), results, warnings))?;
        }
        Level::Roi => {
            let table = roi_table.ok_or_else(|| {
                CliError::Usage("roi-level scores need a roi table in the manifest".into())
            })?;
            let included = included_rois(config, table, &per_layer, &best, n_stimuli)?;
            if included.len() < table.rois.len() {
                warnings.push(format!(
                    "{} of {} regions excluded by the inclusion rule",
                    table.rois.len() - included.len(),
                    table.rois.len()
                ));
            }
            let v1 = geometry.resolve_v1_reference(None)?;
            let members: Vec<Vec<usize>> = included
                .iter()
                .map(|&ri| table.rois[ri].members.clone())
                .collect();
            let dists: Vec<f64> = included
                .iter()
                .map(|&ri| {
                    let c = table.rois[ri].centroid;
                    ((c[0] - v1[0]).powi(2) + (c[1] - v1[1]).powi(2) + (c[2] - v1[2]).powi(2))
                        .sqrt()
                })
                .collect();
            let (corr, roi_k) = spatial_score_roi(&per_layer, &depths, &members, &dists)?;
            let points: Vec<(f64, f64)> = roi_k
                .iter()
                .zip(&dists)
                .filter_map(|(k, d)| k.map(|k| (*d, k)))
                .collect();
            let svg = scatter_svg(
                "best layer depth vs distance from V1 (regions)",
                "distance from V1 (mm)",
                "best layer depth",
                &points,
                &format!("r = {}, p = {}", fmt_sig(corr.r), fmt_sig(corr.p)),
            );
            ensure_out_dir(out_dir)?;
            write_text(&out_dir.join("spatial_scatter.svg"), &svg)?;
            let results = SpatialResults {
                modality: "fmri",
                level: config.level,
                spatial: corr.into(),
                n_targets: best.len(),
                n_surviving: roi_k.iter().filter(|k| k.is_some()).count(),
                n_excluded: table.rois.len() - included.len(),
                fdr,
                roi_inclusion: Some(config.roi_inclusion),
                included_rois: Some(
                    included
                        .iter()
                        .map(|&ri| table.rois[ri].name.clone())
                        .collect(),
                ),
                roi_k_star: Some(roi_k),
                normalization_axis: "per-region mean curve, argmax over layers",
            };
            write_report(out_dir, &Report::new(config.clone(), results, warnings))?;
        }
    }
    Ok(())
}

/// Region indices that pass the configured inclusion rule.
fn included_rois(
    config: &RunConfig,
    table: &RoiTable,
    per_layer: &[EncodingResult],
    best: &[Option<f64>],
    n_stimuli: usize,
) -> Result<Vec<usize>, CliError> {
    if config.fdr_family == FdrFamily::None {
        return Ok((0..table.rois.len()).collect());
    }
    match config.roi_inclusion {
        RoiInclusion::TestThenAverage => {
            let adjusted = adjusted_target_p(best, n_stimuli, config.fdr_q)?;
            Ok((0..table.rois.len())
                .filter(|&ri| {
                    let ps: Vec<f64> = table.rois[ri]
                        .members
                        .iter()
                        .filter_map(|&j| adjusted.get(j).copied().flatten())
                        .collect();
                    !ps.is_empty()
                        && ps.iter().sum::<f64>() / ps.len() as f64 <= config.fdr_q
                })
                .collect())
        }
        RoiInclusion::AverageThenTest => {
            let _ = per_layer;
            let mut tested = Vec::new();
            let mut pvals = Vec::new();
            for (ri, roi) in table.rois.iter().enumerate() {
                let vals: Vec<f64> = roi
                    .members
                    .iter()
                    .filter_map(|&j| best.get(j).copied().flatten())
                    .collect();
                if vals.is_empty() {
                    continue;
                }
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                tested.push(ri);
                pvals.push(pearson_p(mean.clamp(-1.0, 1.0), n_stimuli)?);
            }
            let set = fdr_bh(&pvals, config.fdr_q)?;
            let rejected = set.rejections(config.fdr_q);
            Ok(tested
                .into_iter()
                .zip(rejected)
                .filter(|(_, keep)| *keep)
                .map(|(ri, _)| ri)
                .collect())
        }
    }
}

fn temporal(
    config: &RunConfig,
    dataset: &layerscore::data::AlignedDataset,
    response: &layerscore::data::MegResponse,
    warnings: Vec<String>,
) -> Result<(), CliError> {
    let ckpt = dataset.single_checkpoint()?;
    let plan = fold_plan(config, ckpt.layers.n_stimuli())?;
    let grid = config.lambda_grid()?;
    let slices: Vec<Matrix> = (0..response.n_times())
        .map(|ti| response.time_slice(ti))
        .collect();
    let curves = temporal_curves(&ckpt.layers, &slices, &plan, &grid, config.encode_options())?;
    let profile = TemporalProfile::from_curves(
        response.times.clone(),
        ckpt.layers.depths(),
        curves,
        config.tmax_frac,
    )?;
    let corr = temporal_score(&profile)?;

    let points: Vec<(f64, f64)> = profile
        .depths
        .iter()
        .zip(&profile.t_max)
        .map(|(&d, &t)| (d, t))
        .collect();
    let svg = scatter_svg(
        "T_max vs layer depth",
        "layer depth",
        "T_max (s)",
        &points,
        &format!("r = {}, p = {}", fmt_sig(corr.r), fmt_sig(corr.p)),
    );
    let out_dir: &std::path::Path = config.out_dir.as_ref();
    ensure_out_dir(out_dir)?;
    write_text(&out_dir.join("temporal_scatter.svg"), &svg)?;
    let results = TemporalResults {
        modality: "meg",
        temporal: corr.into(),
        depths: profile.depths.clone(),
        t_max: profile.t_max.clone(),
        threshold: profile.threshold,
        times: profile.times.clone(),
        curves: profile.curves.clone(),
        normalization_axis: "per-layer curve over time",
    };
    write_report(out_dir, &Report::new(config.clone(), results, warnings))?;
    Ok(())
}
