//! Similarity metrics between layered activations and brain-like targets:
//! normalized encoding scores, best-layer maps, the spatial and temporal
//! hierarchy scores, T_max, training half-times, and ROI-level property
//! correlations.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{pearson, Matrix, NumericError};
use crate::ridge::{EncodeOptions, EncodePlan, EncodingResult, FoldPlan, LambdaGrid, RidgeError};
use crate::stats::{pearson_p, StatsError};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid layer stack: {0}")]
    InvalidLayers(String),
    #[error("normalization undefined: {0}")]
    NormalizationUndefined(String),
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("missing v1 reference point")]
    MissingV1,
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Ridge(#[from] RidgeError),
}

// ---------------------------------------------------------------------------
// domain types
// ---------------------------------------------------------------------------

/// One layer of model activations at a normalized depth.
#[derive(Debug, Clone)]
pub struct LayerSlot {
    /// Position in the model, 0 = first layer, 1 = last.
    pub depth: f64,
    /// stimuli x features.
    pub activations: Matrix,
}

/// Ordered per-layer activations for one model checkpoint.
#[derive(Debug, Clone)]
pub struct LayerActivations {
    layers: Vec<LayerSlot>,
    pub model_tag: String,
    /// Relative training step in [0, 1].
    pub checkpoint_step: f64,
}

impl LayerActivations {
    /// Depths must be strictly increasing within [0, 1]; with two or more
    /// layers the first must sit at 0 and the last at 1. A single layer may
    /// sit anywhere (training-trajectory probes use that).
    pub fn new(
        layers: Vec<LayerSlot>,
        model_tag: String,
        checkpoint_step: f64,
    ) -> Result<Self, MetricsError> {
        if layers.is_empty() {
            return Err(MetricsError::InvalidLayers("no layers".into()));
        }
        let n = layers[0].activations.rows();
        for (i, slot) in layers.iter().enumerate() {
            if !(0.0..=1.0).contains(&slot.depth) {
                return Err(MetricsError::InvalidLayers(format!(
                    "layer {i} depth {} outside [0, 1]",
                    slot.depth
                )));
            }
            if slot.activations.rows() != n {
                return Err(MetricsError::InvalidLayers(format!(
                    "layer {i} has {} stimuli, expected {n}",
                    slot.activations.rows()
                )));
            }
            if i > 0 && layers[i - 1].depth >= slot.depth {
                return Err(MetricsError::InvalidLayers(
                    "depths must be strictly increasing".into(),
                ));
            }
        }
        if layers.len() >= 2 {
            if layers[0].depth != 0.0 {
                return Err(MetricsError::InvalidLayers("first layer depth must be 0".into()));
            }
            if layers[layers.len() - 1].depth != 1.0 {
                return Err(MetricsError::InvalidLayers("last layer depth must be 1".into()));
            }
        }
        Ok(LayerActivations {
            layers,
            model_tag,
            checkpoint_step,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn n_stimuli(&self) -> usize {
        self.layers[0].activations.rows()
    }

    pub fn layer(&self, i: usize) -> &LayerSlot {
        &self.layers[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &LayerSlot> {
        self.layers.iter()
    }

    pub fn depths(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.depth).collect()
    }

    /// Evenly spaced subset of layers including the first and the last.
    pub fn subsample(&self, requested: usize) -> Result<LayerActivations, MetricsError> {
        if requested < 2 {
            return Err(MetricsError::InvalidLayers(
                "subsample needs at least 2 layers".into(),
            ));
        }
        let total = self.layers.len();
        if requested >= total {
            return Ok(self.clone());
        }
        let picked: Vec<LayerSlot> = (0..requested)
            .map(|j| {
                let idx = (j as f64 * (total - 1) as f64 / (requested - 1) as f64).round() as usize;
                self.layers[idx].clone()
            })
            .collect();
        LayerActivations::new(picked, self.model_tag.clone(), self.checkpoint_step)
    }
}

/// Spatial layout of targets in a standardized millimeter coordinate frame.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VoxelGeometry {
    pub coordinates: Vec<[f64; 3]>,
    /// Optional named region per target.
    pub roi_labels: Option<Vec<Option<String>>>,
    /// Reference point for hierarchy distances.
    pub v1_reference: Option<[f64; 3]>,
}

impl VoxelGeometry {
    pub fn n_targets(&self) -> usize {
        self.coordinates.len()
    }

    /// Resolve the V1 reference point: an explicit override wins, then the
    /// stored reference, then the centroid of targets labeled "V1".
    pub fn resolve_v1_reference(
        &self,
        override_point: Option<[f64; 3]>,
    ) -> Result<[f64; 3], MetricsError> {
        if let Some(p) = override_point {
            return Ok(p);
        }
        if let Some(p) = self.v1_reference {
            return Ok(p);
        }
        if let Some(labels) = &self.roi_labels {
            let mut sum = [0.0f64; 3];
            let mut count = 0usize;
            for (coord, label) in self.coordinates.iter().zip(labels) {
                if label.as_deref() == Some("V1") {
                    for (s, c) in sum.iter_mut().zip(coord) {
                        *s += c;
                    }
                    count += 1;
                }
            }
            if count > 0 {
                return Ok([
                    sum[0] / count as f64,
                    sum[1] / count as f64,
                    sum[2] / count as f64,
                ]);
            }
        }
        Err(MetricsError::MissingV1)
    }
}

/// Per-layer score curves over time plus the T_max summary per layer.
#[derive(Debug, Clone, Serialize)]
pub struct TemporalProfile {
    pub times: Vec<f64>,
    pub depths: Vec<f64>,
    /// `layers x times` score curves.
    pub curves: Vec<Vec<f64>>,
    /// Mean time of the super-threshold window per layer, seconds.
    pub t_max: Vec<f64>,
    pub threshold: f64,
}

impl TemporalProfile {
    pub fn from_curves(
        times: Vec<f64>,
        depths: Vec<f64>,
        curves: Vec<Vec<f64>>,
        threshold: f64,
    ) -> Result<Self, MetricsError> {
        if depths.len() != curves.len() {
            return Err(MetricsError::InvalidLayers(
                "one curve per layer required".into(),
            ));
        }
        let t_max = curves
            .iter()
            .map(|c| t_max(&times, c, threshold))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TemporalProfile {
            times,
            depths,
            curves,
            t_max,
            threshold,
        })
    }
}

/// A metric traced over training checkpoints.
#[derive(Debug, Clone, Serialize)]
pub struct ScoreTrajectory {
    /// Relative training steps in [0, 1], strictly increasing.
    pub steps: Vec<f64>,
    pub values: Vec<f64>,
}

/// Outcome of half-time estimation.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HalfTimeEstimate {
    /// Relative step of the first upward crossing of half the final value;
    /// `None` when the final value is not positive.
    pub half_time: Option<f64>,
    pub final_value: f64,
    /// The trajectory dropped back below half-final after crossing.
    pub dropped_below_after: bool,
}

// ---------------------------------------------------------------------------
// operations
// ---------------------------------------------------------------------------

/// Cross-validated encoding of one target matrix from every layer.
pub fn layer_encoding(
    layers: &LayerActivations,
    y: &Matrix,
    plan: &FoldPlan,
    grid: &LambdaGrid,
    opts: EncodeOptions,
) -> Result<Vec<EncodingResult>, MetricsError> {
    layers
        .iter()
        .map(|slot| {
            let encode_plan = EncodePlan::new(&slot.activations, plan, grid, opts)?;
            Ok(encode_plan.encode(y)?)
        })
        .collect()
}

/// Per-target best score across layers (the layer argmax value). Works for
/// a single layer too, unlike [`best_layer_map`].
pub fn best_layer_scores(per_layer: &[EncodingResult]) -> Vec<Option<f64>> {
    let m = per_layer.first().map(|r| r.n_targets()).unwrap_or(0);
    (0..m)
        .map(|j| {
            per_layer
                .iter()
                .filter_map(|res| res.per_target_r[j])
                .fold(None, |acc: Option<f64>, r| {
                    Some(acc.map_or(r, |a| a.max(r)))
                })
        })
        .collect()
}

/// Per-layer score curves over a sequence of target matrices (one per time
/// sample): each curve value is the mean per-target correlation of that
/// layer at that time, over the targets that survive masking.
///
/// The design matrix of each layer is decomposed once and reused across all
/// time slices.
pub fn temporal_curves(
    layers: &LayerActivations,
    time_slices: &[Matrix],
    plan: &FoldPlan,
    grid: &LambdaGrid,
    opts: EncodeOptions,
) -> Result<Vec<Vec<f64>>, MetricsError> {
    let mut curves = Vec::with_capacity(layers.n_layers());
    for slot in layers.iter() {
        let encode_plan = EncodePlan::new(&slot.activations, plan, grid, opts)?;
        let mut curve = Vec::with_capacity(time_slices.len());
        for y in time_slices {
            let res = encode_plan.encode(y)?;
            let mean = res.mean_r().ok_or_else(|| {
                MetricsError::UndefinedCorrelation(
                    "every channel masked at one time sample".into(),
                )
            })?;
            curve.push(mean);
        }
        curves.push(curve);
    }
    Ok(curves)
}

/// Scale a score vector by its maximum so it peaks at exactly 1.
///
/// The caller decides (and should record) which axis the scores run over;
/// normalization is only defined when the peak is positive.
pub fn normalize_scores(r: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if r.is_empty() {
        return Err(MetricsError::NormalizationUndefined("empty input".into()));
    }
    let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > 0.0) {
        return Err(MetricsError::NormalizationUndefined(format!(
            "max score {max} is not positive"
        )));
    }
    Ok(r.iter().map(|v| v / max).collect())
}

/// Per-target best layer.
#[derive(Debug, Clone)]
pub struct BestLayerMap {
    /// Depth of the best-scoring layer per target, `None` where excluded.
    pub k_star: Vec<Option<f64>>,
    /// Index of that layer.
    pub layer_index: Vec<Option<usize>>,
    /// Targets excluded because they were masked in every layer (or by the
    /// significance mask).
    pub excluded: Vec<usize>,
}

/// Identify the layer that best predicts each target.
///
/// Ties break toward the shallower depth. Targets masked in every layer, or
/// dropped by the significance mask, are excluded and recorded.
pub fn best_layer_map(
    per_layer: &[EncodingResult],
    depths: &[f64],
    significance: Option<&[bool]>,
) -> Result<BestLayerMap, MetricsError> {
    if per_layer.len() < 2 {
        return Err(MetricsError::InsufficientData(format!(
            "best-layer map needs at least 2 layers, got {}",
            per_layer.len()
        )));
    }
    if per_layer.len() != depths.len() {
        return Err(MetricsError::InvalidLayers(
            "one depth per layer required".into(),
        ));
    }
    let m = per_layer[0].n_targets();
    if per_layer.iter().any(|r| r.n_targets() != m) {
        return Err(MetricsError::InvalidLayers(
            "layer results disagree on target count".into(),
        ));
    }
    if let Some(mask) = significance {
        if mask.len() != m {
            return Err(MetricsError::InvalidLayers(
                "significance mask length mismatch".into(),
            ));
        }
    }
    let mut k_star = vec![None; m];
    let mut layer_index = vec![None; m];
    let mut excluded = Vec::new();
    for j in 0..m {
        if significance.map(|s| !s[j]).unwrap_or(false) {
            excluded.push(j);
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (li, res) in per_layer.iter().enumerate() {
            if let Some(r) = res.per_target_r[j] {
                // strict improvement only: earlier (shallower) layer wins ties
                if best.map(|(_, b)| r > b).unwrap_or(true) {
                    best = Some((li, r));
                }
            }
        }
        match best {
            Some((li, _)) => {
                k_star[j] = Some(depths[li]);
                layer_index[j] = Some(li);
            }
            None => excluded.push(j),
        }
    }
    Ok(BestLayerMap {
        k_star,
        layer_index,
        excluded,
    })
}

/// A correlation with its significance.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Correlation {
    pub r: f64,
    pub p: f64,
    pub n: usize,
    /// `|r| = 1`: the p-value is exactly 0 by construction.
    pub degenerate: bool,
}

fn correlate(x: &[f64], y: &[f64]) -> Result<Correlation, MetricsError> {
    if x.len() < 3 {
        return Err(MetricsError::InsufficientData(format!(
            "correlation needs at least 3 pairs, got {}",
            x.len()
        )));
    }
    let r = match pearson(x, y) {
        Ok(r) => r,
        Err(NumericError::UndefinedCorrelation(msg)) => {
            return Err(MetricsError::UndefinedCorrelation(msg))
        }
        Err(e) => return Err(e.into()),
    };
    let p = pearson_p(r, x.len())?;
    Ok(Correlation {
        r,
        p,
        n: x.len(),
        degenerate: r.abs() >= 1.0,
    })
}

/// Voxel-level spatial score: correlation between each surviving target's
/// best layer depth and its distance from the reference point.
pub fn spatial_score_voxel(
    k_star: &[Option<f64>],
    distances: &[f64],
) -> Result<Correlation, MetricsError> {
    if k_star.len() != distances.len() {
        return Err(MetricsError::InvalidLayers(
            "k* and distances disagree on target count".into(),
        ));
    }
    let mut ks = Vec::new();
    let mut ds = Vec::new();
    for (k, d) in k_star.iter().zip(distances) {
        if let Some(k) = k {
            ks.push(*k);
            ds.push(*d);
        }
    }
    correlate(&ds, &ks)
}

/// ROI-level spatial score: average the per-layer score curve over each
/// region's targets first, take the argmax depth of that mean curve, then
/// correlate with the region's distance from the reference point.
///
/// Returns the correlation and the per-region best depth (None for regions
/// with no usable targets, which are skipped and reported by position).
pub fn spatial_score_roi(
    per_layer: &[EncodingResult],
    depths: &[f64],
    roi_members: &[Vec<usize>],
    roi_distances: &[f64],
) -> Result<(Correlation, Vec<Option<f64>>), MetricsError> {
    if roi_members.len() != roi_distances.len() {
        return Err(MetricsError::InvalidLayers(
            "one distance per region required".into(),
        ));
    }
    if per_layer.len() != depths.len() || per_layer.len() < 2 {
        return Err(MetricsError::InvalidLayers(
            "need one result per layer, at least 2 layers".into(),
        ));
    }
    let mut roi_k = vec![None; roi_members.len()];
    for (ri, members) in roi_members.iter().enumerate() {
        let mut best: Option<(f64, f64)> = None; // (depth, mean score)
        for (li, res) in per_layer.iter().enumerate() {
            let vals: Vec<f64> = members
                .iter()
                .filter_map(|&j| res.per_target_r.get(j).copied().flatten())
                .collect();
            if vals.is_empty() {
                continue;
            }
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            if best.map(|(_, b)| mean > b).unwrap_or(true) {
                best = Some((depths[li], mean));
            }
        }
        roi_k[ri] = best.map(|(d, _)| d);
    }
    let mut ks = Vec::new();
    let mut ds = Vec::new();
    for (k, d) in roi_k.iter().zip(roi_distances) {
        if let Some(k) = k {
            ks.push(*k);
            ds.push(*d);
        }
    }
    let corr = correlate(&ds, &ks)?;
    Ok((corr, roi_k))
}

/// Mean of the time samples where the normalized curve is at or above
/// `threshold` of its peak. All super-threshold samples count, including
/// disjoint segments.
pub fn t_max(times: &[f64], curve: &[f64], threshold: f64) -> Result<f64, MetricsError> {
    if times.is_empty() || curve.is_empty() {
        return Err(MetricsError::InsufficientData("empty curve".into()));
    }
    if times.len() != curve.len() {
        return Err(MetricsError::InvalidLayers(
            "times and curve lengths differ".into(),
        ));
    }
    let normalized = normalize_scores(curve)?;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (t, v) in times.iter().zip(&normalized) {
        if *v >= threshold {
            sum += t;
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricsError::InsufficientData(
            "no samples reach the threshold".into(),
        ));
    }
    Ok(sum / count as f64)
}

/// Temporal score: correlation between layer depth and T_max.
pub fn temporal_score(profile: &TemporalProfile) -> Result<Correlation, MetricsError> {
    correlate(&profile.depths, &profile.t_max)
}

/// Relative training step at which the trajectory first reaches half of its
/// final (last-checkpoint) value, linearly interpolated between checkpoints.
///
/// Starting at or above half-final returns the first checkpoint. A final
/// value that is not positive leaves the half-time undefined (recorded, not
/// an error): hierarchy scores can start negative and stay there.
pub fn half_time(traj: &ScoreTrajectory) -> Result<HalfTimeEstimate, MetricsError> {
    let n = traj.steps.len();
    if n < 2 {
        return Err(MetricsError::InsufficientData(format!(
            "half-time needs at least 2 checkpoints, got {n}"
        )));
    }
    if traj.values.len() != n {
        return Err(MetricsError::InvalidLayers(
            "steps and values lengths differ".into(),
        ));
    }
    for w in traj.steps.windows(2) {
        if w[0] >= w[1] {
            return Err(MetricsError::InvalidLayers(
                "steps must be strictly increasing".into(),
            ));
        }
    }
    let final_value = *traj.values.last().unwrap();
    if !(final_value > 0.0) {
        return Ok(HalfTimeEstimate {
            half_time: None,
            final_value,
            dropped_below_after: false,
        });
    }
    let half = final_value / 2.0;
    let mut crossing: Option<(usize, f64)> = None;
    if traj.values[0] >= half {
        crossing = Some((0, traj.steps[0]));
    } else {
        for i in 0..n - 1 {
            let (v0, v1) = (traj.values[i], traj.values[i + 1]);
            if v0 < half && v1 >= half {
                let frac = (half - v0) / (v1 - v0);
                let t = traj.steps[i] + frac * (traj.steps[i + 1] - traj.steps[i]);
                crossing = Some((i + 1, t));
                break;
            }
        }
    }
    let (cross_idx, t) = crossing.expect("final value above half guarantees a crossing");
    let dropped_below_after = traj.values[cross_idx..].iter().any(|&v| v < half);
    Ok(HalfTimeEstimate {
        half_time: Some(t),
        final_value,
        dropped_below_after,
    })
}

/// Join per-region half-times with a per-region property map by name and
/// correlate. Pairs with missing (non-finite) values are dropped and
/// counted.
#[derive(Debug, Clone, Serialize)]
pub struct PropertyCorrelation {
    pub corr: Correlation,
    pub joined: usize,
    pub dropped: usize,
}

pub fn roi_property_correlation(
    half_times: &[(String, f64)],
    property: &[(String, f64)],
) -> Result<PropertyCorrelation, MetricsError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut dropped = 0usize;
    for (name, ht) in half_times {
        if let Some((_, pv)) = property.iter().find(|(n, _)| n == name) {
            if ht.is_finite() && pv.is_finite() {
                xs.push(*ht);
                ys.push(*pv);
            } else {
                dropped += 1;
            }
        }
    }
    if xs.len() < 3 {
        return Err(MetricsError::InsufficientData(format!(
            "property correlation needs at least 3 joined regions, got {}",
            xs.len()
        )));
    }
    let corr = correlate(&xs, &ys)?;
    Ok(PropertyCorrelation {
        corr,
        joined: xs.len(),
        dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn result_with_scores(scores: Vec<Option<f64>>) -> EncodingResult {
        EncodingResult {
            per_fold_r: vec![scores.clone()],
            masked: scores.iter().map(|s| s.is_none()).collect(),
            per_target_r: scores,
            lambda_per_fold: vec![1.0],
            lambda_per_fold_per_target: None,
            n_stimuli: 10,
            fold_seed: 0,
        }
    }

    #[test]
    fn normalize_peaks_at_one() {
        let out = normalize_scores(&[0.1, 0.2, 0.4]).unwrap();
        assert_eq!(out, vec![0.25, 0.5, 1.0]);
        assert_eq!(normalize_scores(&[1.0]).unwrap(), vec![1.0]);
    }

    #[test]
    fn normalize_preserves_argmax() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..100 {
            let v: Vec<f64> = (0..8).map(|_| rng.gen_range(0.01..2.0)).collect();
            let n = normalize_scores(&v).unwrap();
            let am = |s: &[f64]| {
                s.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .unwrap()
                    .0
            };
            assert_eq!(am(&v), am(&n));
        }
    }

    #[test]
    fn normalize_rejects_nonpositive_max() {
        assert!(normalize_scores(&[-0.5, -0.1]).is_err());
        assert!(normalize_scores(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn best_layer_picks_argmax_depth() {
        let layers = vec![
            result_with_scores(vec![Some(0.1)]),
            result_with_scores(vec![Some(0.3)]),
            result_with_scores(vec![Some(0.2)]),
        ];
        let map = best_layer_map(&layers, &[0.0, 0.5, 1.0], None).unwrap();
        assert_eq!(map.k_star[0], Some(0.5));
    }

    #[test]
    fn best_layer_tie_goes_shallower() {
        let layers = vec![
            result_with_scores(vec![Some(0.3)]),
            result_with_scores(vec![Some(0.3)]),
        ];
        let map = best_layer_map(&layers, &[0.0, 1.0], None).unwrap();
        assert_eq!(map.k_star[0], Some(0.0));
    }

    #[test]
    fn best_layer_excludes_fully_masked_targets() {
        let layers = vec![
            result_with_scores(vec![Some(0.1), None]),
            result_with_scores(vec![Some(0.2), None]),
        ];
        let map = best_layer_map(&layers, &[0.0, 1.0], None).unwrap();
        assert_eq!(map.excluded, vec![1]);
        assert!(map.k_star[1].is_none());
    }

    #[test]
    fn best_layer_respects_significance_mask() {
        let layers = vec![
            result_with_scores(vec![Some(0.1), Some(0.5)]),
            result_with_scores(vec![Some(0.2), Some(0.6)]),
        ];
        let map = best_layer_map(&layers, &[0.0, 1.0], Some(&[true, false])).unwrap();
        assert!(map.k_star[0].is_some());
        assert!(map.k_star[1].is_none());
        assert_eq!(map.excluded, vec![1]);
    }

    #[test]
    fn best_layer_invariant_under_monotone_rescaling() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        for _ in 0..50 {
            let scores: Vec<Vec<Option<f64>>> = (0..4)
                .map(|_| (0..6).map(|_| Some(rng.gen_range(0.0..1.0))).collect())
                .collect();
            let a = rng.gen_range(0.5..3.0);
            let b = rng.gen_range(0.0..0.5);
            let layers: Vec<EncodingResult> =
                scores.iter().map(|s| result_with_scores(s.clone())).collect();
            let rescaled: Vec<EncodingResult> = scores
                .iter()
                .map(|s| {
                    result_with_scores(
                        s.iter().map(|v| v.map(|x| a * x + b)).collect(),
                    )
                })
                .collect();
            let depths = [0.0, 0.3, 0.7, 1.0];
            let m1 = best_layer_map(&layers, &depths, None).unwrap();
            let m2 = best_layer_map(&rescaled, &depths, None).unwrap();
            assert_eq!(m1.layer_index, m2.layer_index);
        }
    }

    #[test]
    fn spatial_score_perfect_when_proportional() {
        let k_star: Vec<Option<f64>> = (0..10).map(|i| Some(i as f64 / 9.0)).collect();
        let dist: Vec<f64> = (0..10).map(|i| 20.0 * i as f64 / 9.0).collect();
        let c = spatial_score_voxel(&k_star, &dist).unwrap();
        assert!((c.r - 1.0).abs() < 1e-12);
        assert!(c.degenerate);
        assert_eq!(c.p, 0.0);
    }

    #[test]
    fn spatial_score_constant_kstar_is_undefined() {
        let k_star: Vec<Option<f64>> = vec![Some(0.5); 5];
        let dist: Vec<f64> = (0..5).map(|i| i as f64).collect();
        assert!(matches!(
            spatial_score_voxel(&k_star, &dist),
            Err(MetricsError::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn spatial_score_antisymmetric_in_depth_reversal() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        for _ in 0..100 {
            let k: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..1.0)).collect();
            let d: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..50.0)).collect();
            let ks: Vec<Option<f64>> = k.iter().map(|&v| Some(v)).collect();
            let kr: Vec<Option<f64>> = k.iter().map(|&v| Some(1.0 - v)).collect();
            let c1 = match spatial_score_voxel(&ks, &d) {
                Ok(c) => c,
                Err(_) => continue,
            };
            let c2 = spatial_score_voxel(&kr, &d).unwrap();
            assert!((c1.r + c2.r).abs() < 1e-12);
        }
    }

    #[test]
    fn roi_level_uses_mean_then_argmax() {
        // region 0: target 0 peaks at layer 0 but target 1 peaks strongly
        // at layer 1, so the mean curve [0.25, 0.65, 0.15] picks layer 1
        let layers = vec![
            result_with_scores(vec![Some(0.5), Some(0.0), Some(0.9), Some(0.3)]),
            result_with_scores(vec![Some(0.4), Some(0.9), Some(0.1), Some(0.2)]),
            result_with_scores(vec![Some(0.1), Some(0.2), Some(0.0), Some(0.8)]),
        ];
        let depths = [0.0, 0.5, 1.0];
        let members = vec![vec![0, 1], vec![2], vec![3]];
        let dists = vec![10.0, 20.0, 30.0];
        let (_, roi_k) = spatial_score_roi(&layers, &depths, &members, &dists).unwrap();
        assert_eq!(roi_k[0], Some(0.5));
        assert_eq!(roi_k[1], Some(0.0));
        assert_eq!(roi_k[2], Some(1.0));
    }

    #[test]
    fn t_max_single_sample() {
        let t = t_max(&[0.1], &[0.7], 0.95).unwrap();
        assert_eq!(t, 0.1);
    }

    #[test]
    fn t_max_plateau_takes_mean() {
        let times = [0.1, 0.125, 0.15, 0.175, 0.2, 0.25];
        let curve = [1.0, 1.0, 1.0, 1.0, 1.0, 0.1];
        let t = t_max(&times, &curve, 0.95).unwrap();
        assert!((t - 0.15).abs() < 1e-12);
    }

    #[test]
    fn t_max_scale_invariant_and_ignores_subthreshold_additions() {
        let times = [0.0, 0.1, 0.2, 0.3];
        let curve = [0.1, 0.9, 1.0, 0.2];
        let base = t_max(&times, &curve, 0.95).unwrap();
        let scaled: Vec<f64> = curve.iter().map(|v| 3.0 * v).collect();
        assert_eq!(base, t_max(&times, &scaled, 0.95).unwrap());
        let times2 = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5];
        let curve2 = [0.1, 0.9, 1.0, 0.2, 0.3, 0.05];
        assert_eq!(base, t_max(&times2, &curve2, 0.95).unwrap());
    }

    #[test]
    fn t_max_rejects_empty_and_nonpositive() {
        assert!(t_max(&[], &[], 0.95).is_err());
        assert!(t_max(&[0.1, 0.2], &[-1.0, -0.5], 0.95).is_err());
    }

    #[test]
    fn temporal_score_signs() {
        let up = TemporalProfile {
            times: vec![0.0, 0.1, 0.2],
            depths: vec![0.0, 0.5, 1.0],
            curves: vec![],
            t_max: vec![0.0, 0.1, 0.2],
            threshold: 0.95,
        };
        assert!((temporal_score(&up).unwrap().r - 1.0).abs() < 1e-9);
        let down = TemporalProfile {
            t_max: vec![0.2, 0.1, 0.0],
            ..up.clone()
        };
        assert!((temporal_score(&down).unwrap().r + 1.0).abs() < 1e-9);
        let flat = TemporalProfile {
            t_max: vec![0.1, 0.1, 0.1],
            ..up
        };
        assert!(matches!(
            temporal_score(&flat),
            Err(MetricsError::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn half_time_linear_ramp() {
        let traj = ScoreTrajectory {
            steps: vec![0.0, 1.0],
            values: vec![0.0, 1.0],
        };
        let est = half_time(&traj).unwrap();
        assert_eq!(est.half_time, Some(0.5));
        assert!(!est.dropped_below_after);
    }

    #[test]
    fn half_time_hand_interpolated() {
        let traj = ScoreTrajectory {
            steps: vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0],
            values: vec![0.0, 0.2, 0.8, 1.0],
        };
        // crossing 0.5 in the middle of [1/3, 2/3]
        let est = half_time(&traj).unwrap();
        assert!((est.half_time.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn half_time_starts_above_half() {
        let traj = ScoreTrajectory {
            steps: vec![0.1, 0.5, 1.0],
            values: vec![0.9, 0.95, 1.0],
        };
        let est = half_time(&traj).unwrap();
        assert_eq!(est.half_time, Some(0.1));
    }

    #[test]
    fn half_time_nonpositive_final_undefined() {
        let traj = ScoreTrajectory {
            steps: vec![0.0, 1.0],
            values: vec![0.1, -0.2],
        };
        let est = half_time(&traj).unwrap();
        assert!(est.half_time.is_none());
        assert_eq!(est.final_value, -0.2);
    }

    #[test]
    fn half_time_warns_on_drop_back() {
        let traj = ScoreTrajectory {
            steps: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            values: vec![0.0, 0.8, 0.2, 0.9, 1.0],
        };
        let est = half_time(&traj).unwrap();
        assert!(est.dropped_below_after);
        assert!(est.half_time.unwrap() < 0.25);
    }

    #[test]
    fn half_time_scaling_invariance() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..100 {
            let n = rng.gen_range(3..12);
            let steps: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
            let mut values: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.2..1.0)).collect();
            *values.last_mut().unwrap() = rng.gen_range(0.5..1.0);
            let traj = ScoreTrajectory {
                steps: steps.clone(),
                values: values.clone(),
            };
            let base = half_time(&traj).unwrap();
            // power-of-two scaling is exact in floating point, so the
            // result must be bit-identical
            let c = 2f64.powi(rng.gen_range(-6..=6));
            let scaled = ScoreTrajectory {
                steps,
                values: values.iter().map(|v| c * v).collect(),
            };
            let got = half_time(&scaled).unwrap();
            assert_eq!(base.half_time, got.half_time);
        }
    }

    #[test]
    fn half_time_rejects_short_trajectories() {
        let traj = ScoreTrajectory {
            steps: vec![0.5],
            values: vec![1.0],
        };
        assert!(half_time(&traj).is_err());
    }

    #[test]
    fn property_correlation_identity() {
        let half: Vec<(String, f64)> = (0..5)
            .map(|i| (format!("roi{i}"), 0.1 * i as f64 + 0.05))
            .collect();
        let out = roi_property_correlation(&half, &half).unwrap();
        assert!((out.corr.r - 1.0).abs() < 1e-12);
        assert_eq!(out.joined, 5);
        assert_eq!(out.dropped, 0);
    }

    #[test]
    fn property_correlation_drops_missing() {
        let half: Vec<(String, f64)> = (0..5)
            .map(|i| (format!("roi{i}"), 0.1 * (i as f64 + 1.0)))
            .collect();
        let mut prop = half.clone();
        prop[1].1 = f64::NAN;
        prop[2].1 = 0.9;
        let out = roi_property_correlation(&half, &prop).unwrap();
        assert_eq!(out.joined, 4);
        assert_eq!(out.dropped, 1);
    }

    #[test]
    fn property_correlation_needs_three_pairs() {
        let half = vec![("a".to_string(), 0.1), ("b".to_string(), 0.2)];
        assert!(matches!(
            roi_property_correlation(&half, &half),
            Err(MetricsError::InsufficientData(_))
        ));
    }

    #[test]
    fn layer_stack_validation() {
        let m = Matrix::zeros(4, 2);
        let ok = LayerActivations::new(
            vec![
                LayerSlot { depth: 0.0, activations: m.clone() },
                LayerSlot { depth: 1.0, activations: m.clone() },
            ],
            "t".into(),
            1.0,
        );
        assert!(ok.is_ok());
        let bad_first = LayerActivations::new(
            vec![
                LayerSlot { depth: 0.1, activations: m.clone() },
                LayerSlot { depth: 1.0, activations: m.clone() },
            ],
            "t".into(),
            1.0,
        );
        assert!(bad_first.is_err());
        let single = LayerActivations::new(
            vec![LayerSlot { depth: 0.4, activations: m }],
            "t".into(),
            0.5,
        );
        assert!(single.is_ok());
    }

    #[test]
    fn subsample_keeps_endpoints() {
        let m = Matrix::zeros(3, 1);
        let layers: Vec<LayerSlot> = (0..7)
            .map(|i| LayerSlot {
                depth: i as f64 / 6.0,
                activations: m.clone(),
            })
            .collect();
        let acts = LayerActivations::new(layers, "t".into(), 1.0).unwrap();
        let sub = acts.subsample(3).unwrap();
        assert_eq!(sub.depths(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn v1_resolution_precedence() {
        let geom = VoxelGeometry {
            coordinates: vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [10.0, 0.0, 0.0]],
            roi_labels: Some(vec![
                Some("V1".into()),
                Some("V1".into()),
                Some("other".into()),
            ]),
            v1_reference: None,
        };
        assert_eq!(geom.resolve_v1_reference(None).unwrap(), [1.0, 0.0, 0.0]);
        assert_eq!(
            geom.resolve_v1_reference(Some([5.0, 5.0, 5.0])).unwrap(),
            [5.0, 5.0, 5.0]
        );
        let explicit = VoxelGeometry {
            v1_reference: Some([9.0, 0.0, 0.0]),
            ..geom
        };
        assert_eq!(explicit.resolve_v1_reference(None).unwrap(), [9.0, 0.0, 0.0]);
        let none = VoxelGeometry {
            coordinates: vec![[0.0; 3]],
            roi_labels: None,
            v1_reference: None,
        };
        assert!(matches!(
            none.resolve_v1_reference(None),
            Err(MetricsError::MissingV1)
        ));
    }
}
