//! Subcommand implementations and the shared loading/masking machinery.

pub mod encode;
pub mod halftime;
pub mod property_corr;
pub mod scores;
pub mod synth;
pub mod validate;

use std::path::{Path, PathBuf};

use serde::Serialize;

use layerscore::data::{align_stimuli, zscore_meg, AlignedDataset, Manifest, ResponseData};
use layerscore::metrics::best_layer_scores;
use layerscore::ridge::{EncodingResult, FoldPlan};
use layerscore::stats::{fdr_bh, pearson_p};

use crate::config::{CliError, FdrFamily, RunConfig};

/// Manifest plus everything it references, z-scored when the modality asks
/// for it (MEG signals are standardized per channel and time point).
pub struct Loaded {
    pub dataset: AlignedDataset,
    pub base_dir: PathBuf,
    pub warnings: Vec<String>,
}

pub fn load_aligned(manifest_path: &Path) -> Result<Loaded, CliError> {
    let manifest = Manifest::from_file(manifest_path)?;
    let base_dir = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .to_path_buf();
    let mut dataset = align_stimuli(&manifest, &base_dir)?;
    let mut warnings = Vec::new();
    if let ResponseData::Meg { response, windows } = &dataset.response {
        let (zscored, constant_cells) = zscore_meg(response)?;
        if !constant_cells.is_empty() {
            warnings.push(format!(
                "{} constant meg cells left centered during z-scoring",
                constant_cells.len()
            ));
        }
        dataset.response = ResponseData::Meg {
            response: zscored,
            windows: windows.clone(),
        };
    }
    Ok(Loaded {
        dataset,
        base_dir,
        warnings,
    })
}

pub fn fold_plan(config: &RunConfig, n_stimuli: usize) -> Result<FoldPlan, CliError> {
    Ok(FoldPlan::new(n_stimuli, config.folds, config.seed)?)
}

/// How the significance mask was built, echoed into reports.
#[derive(Debug, Clone, Serialize)]
pub struct FdrInfo {
    pub family: FdrFamily,
    pub q: f64,
    pub family_size: usize,
    pub n_significant: usize,
}

/// Per-target significance mask over the best-layer scores: a two-sided
/// correlation test per target, FDR-corrected across the target family.
/// `None` when masking is off.
pub fn target_significance(
    config: &RunConfig,
    best_r: &[Option<f64>],
    n_stimuli: usize,
) -> Result<(Option<Vec<bool>>, FdrInfo), CliError> {
    let tested: Vec<(usize, f64)> = best_r
        .iter()
        .enumerate()
        .filter_map(|(j, r)| r.map(|r| (j, r)))
        .collect();
    if config.fdr_family == FdrFamily::None {
        return Ok((
            None,
            FdrInfo {
                family: config.fdr_family,
                q: config.fdr_q,
                family_size: tested.len(),
                n_significant: tested.len(),
            },
        ));
    }
    let pvals: Vec<f64> = tested
        .iter()
        .map(|(_, r)| Ok(pearson_p(*r, n_stimuli)?))
        .collect::<Result<_, CliError>>()?;
    let set = fdr_bh(&pvals, config.fdr_q)?;
    let rejected = set.rejections(config.fdr_q);
    let mut mask = vec![false; best_r.len()];
    let mut n_significant = 0;
    for ((j, _), keep) in tested.iter().zip(&rejected) {
        mask[*j] = *keep;
        n_significant += usize::from(*keep);
    }
    Ok((
        Some(mask),
        FdrInfo {
            family: config.fdr_family,
            q: config.fdr_q,
            family_size: tested.len(),
            n_significant,
        },
    ))
}

/// Per-target adjusted p-values over best-layer scores (targets family),
/// used by the test-then-average region inclusion rule.
pub fn adjusted_target_p(
    best_r: &[Option<f64>],
    n_stimuli: usize,
    q: f64,
) -> Result<Vec<Option<f64>>, CliError> {
    let tested: Vec<(usize, f64)> = best_r
        .iter()
        .enumerate()
        .filter_map(|(j, r)| r.map(|r| (j, r)))
        .collect();
    let pvals: Vec<f64> = tested
        .iter()
        .map(|(_, r)| Ok(pearson_p(*r, n_stimuli)?))
        .collect::<Result<_, CliError>>()?;
    let set = fdr_bh(&pvals, q)?;
    let mut out = vec![None; best_r.len()];
    for ((j, _), adj) in tested.iter().zip(&set.adjusted) {
        out[*j] = Some(*adj);
    }
    Ok(out)
}

/// Mean over the defined entries; `None` if nothing is defined.
pub fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let defined: Vec<f64> = values.flatten().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// Mean best-layer score over all targets of an encoding stack.
pub fn mean_best_score(per_layer: &[EncodingResult]) -> Option<f64> {
    mean_defined(best_layer_scores(per_layer).into_iter())
}
