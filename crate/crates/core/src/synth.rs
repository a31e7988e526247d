//! Planted-ground-truth synthetic data: hierarchical fMRI-like datasets,
//! temporally structured MEG-like datasets, and training trajectories with
//! closed-form half-times. Every generator emits a truth record sufficient
//! to score the full pipeline without re-deriving the plants, and identical
//! spec + seed produce byte-identical datasets.

use std::collections::BTreeMap;
use std::path::Path;

use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    write_array, write_matrix, write_roi_csv, ActivationEntry, CheckpointActivations, DataError,
    Manifest, MegResponse, Modality, ResponseEntry, Roi, RoiTable, TimeAxisFile,
    MANIFEST_SCHEMA_VERSION,
};
use crate::metrics::{LayerActivations, LayerSlot, MetricsError, VoxelGeometry};
use crate::numeric::{center_standardize, thin_svd, Matrix, StandardizeMode};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid plant spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantKind {
    Hierarchical,
    Temporal,
    Trajectory,
}

/// Parameters of a planted dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlantSpec {
    pub kind: PlantKind,
    pub n_stimuli: usize,
    pub n_layers: usize,
    pub features_per_layer: usize,
    /// Targets (fMRI) or channels (MEG) assigned to each layer.
    pub targets_per_layer: usize,
    /// Noise SD relative to the unit-variance planted signals.
    pub noise_sd: f64,
    /// Millimeters of distance-from-V1 per unit of layer depth.
    #[serde(default = "default_slope")]
    pub hierarchy_slope_mm: f64,
    /// Seconds of temporal peak shift per unit of layer depth.
    #[serde(default = "default_peaks")]
    pub temporal_peaks_s: f64,
    /// Plant the temporal peaks in reverse layer order.
    #[serde(default)]
    pub temporal_reversed: bool,
    /// Per-layer learning rates for trajectory interpolation; defaults to
    /// halving with depth (shallow layers learn fastest).
    #[serde(default)]
    pub trajectory_rates: Option<Vec<f64>>,
    /// Relative checkpoint steps for trajectory datasets; defaults to
    /// twelve evenly spaced steps ending at 1.
    #[serde(default)]
    pub checkpoints: Option<Vec<f64>>,
    pub seed: u64,
}

fn default_slope() -> f64 {
    20.0
}

fn default_peaks() -> f64 {
    0.5
}

impl PlantSpec {
    pub fn from_file(path: &Path) -> Result<PlantSpec, SynthError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            SynthError::InvalidSpec(format!("cannot read {}: {e}", path.display()))
        })?;
        let spec: PlantSpec = serde_json::from_str(&text)
            .map_err(|e| SynthError::InvalidSpec(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let err = |msg: String| Err(SynthError::InvalidSpec(msg));
        if self.n_stimuli < 10 {
            return err(format!("n_stimuli {} too small (min 10)", self.n_stimuli));
        }
        if self.n_layers == 0 || self.features_per_layer == 0 || self.targets_per_layer == 0 {
            return err("counts must be at least 1".into());
        }
        if !(self.noise_sd >= 0.0) {
            return err(format!("noise_sd {} must be >= 0", self.noise_sd));
        }
        if self.hierarchy_slope_mm <= 0.0 || self.temporal_peaks_s <= 0.0 {
            return err("hierarchy slope and temporal peaks must be positive".into());
        }
        if self.kind == PlantKind::Temporal && self.n_layers < 2 {
            return err("temporal plants need at least 2 layers".into());
        }
        if let Some(rates) = &self.trajectory_rates {
            if rates.len() != self.n_layers {
                return err(format!(
                    "trajectory_rates has {} entries for {} layers",
                    rates.len(),
                    self.n_layers
                ));
            }
            if rates.iter().any(|r| !(r > &0.0)) {
                return err("trajectory rates must be positive".into());
            }
        }
        if let Some(cp) = &self.checkpoints {
            if cp.len() < 2 {
                return err("need at least 2 checkpoints".into());
            }
            if cp.windows(2).any(|w| w[0] >= w[1]) {
                return err("checkpoints must be strictly increasing".into());
            }
            if cp.iter().any(|s| !(0.0..=1.0).contains(s)) {
                return err("checkpoints must lie in [0, 1]".into());
            }
        }
        Ok(())
    }

    pub fn layer_depths(&self) -> Vec<f64> {
        if self.n_layers == 1 {
            vec![0.0]
        } else {
            (0..self.n_layers)
                .map(|k| k as f64 / (self.n_layers - 1) as f64)
                .collect()
        }
    }

    pub fn rates(&self) -> Vec<f64> {
        self.trajectory_rates.clone().unwrap_or_else(|| {
            (0..self.n_layers)
                .map(|k| 2f64.powi((self.n_layers - 1 - k) as i32))
                .collect()
        })
    }

    pub fn checkpoint_steps(&self) -> Vec<f64> {
        self.checkpoints
            .clone()
            .unwrap_or_else(|| (1..=12).map(|i| i as f64 / 12.0).collect())
    }
}

// ---------------------------------------------------------------------------
// shared construction helpers
// ---------------------------------------------------------------------------

fn randn_matrix(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Matrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::from_vec(rows, cols, data).expect("shape matches data")
}

fn standardized(m: &Matrix) -> Matrix {
    center_standardize(m, StandardizeMode::Zscore)
        .expect("generator matrices have >= 2 rows")
        .matrix
}

/// Random f x f rotation from the singular factors of a Gaussian matrix.
fn random_rotation(rng: &mut ChaCha12Rng, f: usize) -> Matrix {
    let g = randn_matrix(rng, f, f);
    let svd = thin_svd(&g).expect("random matrix is finite");
    svd.u.matmul(&svd.vt).expect("square factors")
}

/// Layer chain: each layer is the previous one through a half-wave
/// rectification and a random rotation, mixed with fresh Gaussian
/// components, then standardized. The fresh part keeps the layers
/// distinguishable so argmax recovery is meaningful.
fn build_layer_chain(rng: &mut ChaCha12Rng, n: usize, f: usize, k_layers: usize) -> Vec<Matrix> {
    let mut layers = Vec::with_capacity(k_layers);
    let first = standardized(&randn_matrix(rng, n, f));
    layers.push(first);
    for _ in 1..k_layers {
        let prev = layers.last().expect("nonempty");
        let mut rectified = prev.clone();
        for v in rectified.data_mut() {
            *v = v.max(0.0);
        }
        let rotation = random_rotation(rng, f);
        let rotated = rectified.matmul(&rotation).expect("square rotation");
        let fresh = randn_matrix(rng, n, f);
        let mut mixed = rotated;
        for (m, fr) in mixed.data_mut().iter_mut().zip(fresh.data()) {
            *m += fr;
        }
        layers.push(standardized(&mixed));
    }
    layers
}

/// Unit-variance readout of one layer.
fn planted_readout(rng: &mut ChaCha12Rng, layer: &Matrix) -> Vec<f64> {
    let f = layer.cols();
    let w: Vec<f64> = (0..f).map(|_| rng.sample(StandardNormal)).collect();
    let mut signal = vec![0.0; layer.rows()];
    for (r, s) in signal.iter_mut().enumerate() {
        let row = layer.row(r);
        *s = row.iter().zip(&w).map(|(a, b)| a * b).sum();
    }
    let n = signal.len() as f64;
    let mean = signal.iter().sum::<f64>() / n;
    let sd = (signal.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
    for v in signal.iter_mut() {
        *v = (*v - mean) / sd;
    }
    signal
}

fn unit_direction(rng: &mut ChaCha12Rng) -> [f64; 3] {
    loop {
        let v = [
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        ];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 1e-6 {
            return [v[0] / norm, v[1] / norm, v[2] / norm];
        }
    }
}

const V1_POINT: [f64; 3] = [10.0, -90.0, 0.0];

fn roi_name(layer: usize) -> String {
    if layer == 0 {
        "V1".to_string()
    } else {
        format!("ROI_{layer:02}")
    }
}

fn build_rois(planted_layer: &[usize], coords: &[[f64; 3]], n_layers: usize) -> RoiTable {
    let mut rois = Vec::with_capacity(n_layers);
    for k in 0..n_layers {
        let members: Vec<usize> = planted_layer
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == k)
            .map(|(i, _)| i)
            .collect();
        let mut centroid = [0.0f64; 3];
        for &i in &members {
            for (c, v) in centroid.iter_mut().zip(&coords[i]) {
                *c += v;
            }
        }
        for c in centroid.iter_mut() {
            *c /= members.len() as f64;
        }
        rois.push(Roi {
            name: roi_name(k),
            members,
            centroid,
            properties: BTreeMap::new(),
        });
    }
    RoiTable {
        rois,
        property_names: Vec::new(),
    }
}

// ---------------------------------------------------------------------------
// hierarchical plant
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HierTruth {
    pub kind: PlantKind,
    pub seed: u64,
    /// Layer index each target reads out.
    pub planted_layer: Vec<usize>,
    pub planted_depth: Vec<f64>,
    /// Signal SD over noise SD; `None` for a noiseless plant.
    pub snr: Option<f64>,
    pub v1_reference: [f64; 3],
    pub distances_mm: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HierarchicalData {
    pub layers: LayerActivations,
    /// stimuli x targets responses.
    pub responses: Matrix,
    pub geometry: VoxelGeometry,
    pub rois: RoiTable,
    pub truth: HierTruth,
}

/// Hierarchical plant: each target is a linear readout of exactly one layer
/// plus Gaussian noise, placed at a distance from a synthetic V1 point
/// proportional to that layer's depth.
pub fn gen_hierarchical(spec: &PlantSpec) -> Result<HierarchicalData, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let n = spec.n_stimuli;
    let depths = spec.layer_depths();
    let layer_mats = build_layer_chain(&mut rng, n, spec.features_per_layer, spec.n_layers);
    let m = spec.n_layers * spec.targets_per_layer;

    let mut responses = Matrix::zeros(n, m);
    let mut planted_layer = Vec::with_capacity(m);
    let mut planted_depth = Vec::with_capacity(m);
    let mut coords = Vec::with_capacity(m);
    let mut distances = Vec::with_capacity(m);
    for k in 0..spec.n_layers {
        for _ in 0..spec.targets_per_layer {
            let j = planted_layer.len();
            let signal = planted_readout(&mut rng, &layer_mats[k]);
            for (r, s) in signal.iter().enumerate() {
                let noise: f64 = rng.sample(StandardNormal);
                responses.set(r, j, s + spec.noise_sd * noise);
            }
            let dir = unit_direction(&mut rng);
            let jitter: f64 = rng.sample(StandardNormal);
            let dist = (spec.hierarchy_slope_mm * depths[k]
                + 0.05 * spec.hierarchy_slope_mm * spec.noise_sd * jitter)
                .max(0.0);
            coords.push([
                V1_POINT[0] + dir[0] * dist,
                V1_POINT[1] + dir[1] * dist,
                V1_POINT[2] + dir[2] * dist,
            ]);
            distances.push(dist);
            planted_layer.push(k);
            planted_depth.push(depths[k]);
        }
    }

    let slots: Vec<LayerSlot> = depths
        .iter()
        .zip(layer_mats)
        .map(|(&depth, activations)| LayerSlot { depth, activations })
        .collect();
    let layers = LayerActivations::new(slots, "synth-hierarchical".into(), 1.0)?;
    let roi_labels: Vec<Option<String>> = planted_layer
        .iter()
        .map(|&k| Some(roi_name(k)))
        .collect();
    let geometry = VoxelGeometry {
        coordinates: coords.clone(),
        roi_labels: Some(roi_labels),
        v1_reference: Some(V1_POINT),
    };
    let rois = build_rois(&planted_layer, &coords, spec.n_layers);
    let truth = HierTruth {
        kind: PlantKind::Hierarchical,
        seed: spec.seed,
        planted_layer,
        planted_depth,
        snr: if spec.noise_sd > 0.0 {
            Some(1.0 / spec.noise_sd)
        } else {
            None
        },
        v1_reference: V1_POINT,
        distances_mm: distances,
    };
    Ok(HierarchicalData {
        layers,
        responses,
        geometry,
        rois,
        truth,
    })
}

// ---------------------------------------------------------------------------
// temporal plant
// ---------------------------------------------------------------------------

/// Grid samples between neighboring layer peaks.
const PEAK_SPACING_SAMPLES: usize = 5;
/// Gain width and hard cutoff in grid steps. The cutoff makes off-window
/// cells exactly constant at zero noise, so correlation curves carry the
/// planted timing even without noise.
const GAIN_SIGMA_STEPS: f64 = 1.5;
const GAIN_CUTOFF_STEPS: f64 = 2.5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TemporalTruth {
    pub kind: PlantKind,
    pub seed: u64,
    /// Planted peak time per layer, seconds.
    pub peak_s: Vec<f64>,
    pub dt_s: f64,
    pub gain_sigma_s: f64,
    pub gain_cutoff_s: f64,
    pub reversed: bool,
    pub snr: Option<f64>,
    /// Layer each channel reads out.
    pub channel_layer: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TemporalData {
    pub layers: LayerActivations,
    pub meg: MegResponse,
    /// Suggested per-layer analysis windows, [start, end) seconds.
    pub windows: Vec<[f64; 2]>,
    pub truth: TemporalTruth,
}

/// Temporal plant: each channel reads out one layer, gated by a truncated
/// Gaussian temporal gain centered at `temporal_peaks_s * depth`. Peaks sit
/// exactly on the time grid and the axis extends symmetrically past the
/// first and last peak, so the recovered window mean lands on the peak.
pub fn gen_temporal(spec: &PlantSpec) -> Result<TemporalData, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let n = spec.n_stimuli;
    let k_layers = spec.n_layers;
    let depths = spec.layer_depths();
    let layer_mats = build_layer_chain(&mut rng, n, spec.features_per_layer, k_layers);
    let n_channels = k_layers * spec.targets_per_layer;

    let dt = spec.temporal_peaks_s / ((k_layers - 1) * PEAK_SPACING_SAMPLES) as f64;
    let margin = GAIN_CUTOFF_STEPS.floor() as usize; // symmetric samples past the end peaks
    let n_times = (k_layers - 1) * PEAK_SPACING_SAMPLES + 2 * margin + 1;
    let times: Vec<f64> = (0..n_times)
        .map(|i| (i as f64 - margin as f64) * dt)
        .collect();
    let peak_s: Vec<f64> = (0..k_layers)
        .map(|k| {
            let slot = if spec.temporal_reversed {
                k_layers - 1 - k
            } else {
                k
            };
            (slot * PEAK_SPACING_SAMPLES) as f64 * dt
        })
        .collect();
    let sigma = GAIN_SIGMA_STEPS * dt;
    let cutoff = GAIN_CUTOFF_STEPS * dt;

    let channel_layer: Vec<usize> = (0..n_channels)
        .map(|c| c / spec.targets_per_layer)
        .collect();
    let readouts: Vec<Vec<f64>> = channel_layer
        .iter()
        .map(|&k| planted_readout(&mut rng, &layer_mats[k]))
        .collect();

    let mut data = vec![0.0f64; n * n_channels * n_times];
    for s in 0..n {
        for (c, &k) in channel_layer.iter().enumerate() {
            for (ti, &t) in times.iter().enumerate() {
                let delta = t - peak_s[k];
                let gain = if delta.abs() <= cutoff {
                    (-delta * delta / (2.0 * sigma * sigma)).exp()
                } else {
                    0.0
                };
                let noise: f64 = if spec.noise_sd > 0.0 {
                    rng.sample(StandardNormal)
                } else {
                    0.0
                };
                data[(s * n_channels + c) * n_times + ti] =
                    gain * readouts[c][s] + spec.noise_sd * noise;
            }
        }
    }
    let meg = MegResponse::new(n, n_channels, times, data)?;

    let mut windows: Vec<[f64; 2]> = peak_s.iter().map(|&p| [p - cutoff, p + cutoff]).collect();
    windows.sort_by(|a, b| a[0].total_cmp(&b[0]));

    let slots: Vec<LayerSlot> = depths
        .iter()
        .zip(layer_mats)
        .map(|(&depth, activations)| LayerSlot { depth, activations })
        .collect();
    let layers = LayerActivations::new(slots, "synth-temporal".into(), 1.0)?;
    let truth = TemporalTruth {
        kind: PlantKind::Temporal,
        seed: spec.seed,
        peak_s,
        dt_s: dt,
        gain_sigma_s: sigma,
        gain_cutoff_s: cutoff,
        reversed: spec.temporal_reversed,
        snr: if spec.noise_sd > 0.0 {
            Some(1.0 / spec.noise_sd)
        } else {
            None
        },
        channel_layer,
    };
    Ok(TemporalData {
        layers,
        meg,
        windows,
        truth,
    })
}

// ---------------------------------------------------------------------------
// trajectory plant
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryTruth {
    pub kind: PlantKind,
    pub seed: u64,
    pub rates: Vec<f64>,
    /// Closed-form half-time per layer.
    pub half_times: Vec<f64>,
    /// Population final score per layer.
    pub final_r: Vec<f64>,
    pub checkpoints: Vec<f64>,
    pub planted_layer: Vec<usize>,
    /// Planted property correlations against the per-layer half-times,
    /// by property name.
    pub property_r: BTreeMap<String, f64>,
}

#[derive(Debug, Clone)]
pub struct TrajectoryData {
    pub checkpoints: Vec<CheckpointActivations>,
    pub responses: Matrix,
    pub geometry: VoxelGeometry,
    pub rois: RoiTable,
    pub truth: TrajectoryTruth,
}

/// Population score of the interpolated features: with unit-covariance
/// final features F and fresh start N, activations (1-g) N + g F predict a
/// readout of F with correlation g / sqrt(g^2 + (1-g)^2).
pub fn population_r(g: f64) -> f64 {
    if g <= 0.0 {
        return 0.0;
    }
    g / (g * g + (1.0 - g) * (1.0 - g)).sqrt()
}

/// Linear saturating learning curve.
pub fn learning_gain(rate: f64, step: f64) -> f64 {
    (rate * step).min(1.0)
}

/// Closed-form half-time of the planted trajectory for one rate: the step
/// where the population score first reaches half of its final value.
pub fn closed_form_half_time(rate: f64) -> f64 {
    let g_final = learning_gain(rate, 1.0);
    let half = population_r(g_final) / 2.0;
    // solve population_r(g) = half: g^2 (1 - 2h^2) + 2h^2 g - h^2 = 0
    let rho = half * half;
    let a = 1.0 - 2.0 * rho;
    let b = 2.0 * rho;
    let c = -rho;
    let g_star = (-b + (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
    g_star / rate
}

/// Trajectory plant: per layer, activations at step `s` interpolate between
/// a fixed seeded random matrix and the final features with a linear
/// saturating per-layer rate; targets read the final features, so the
/// pipeline's score trajectory follows [`population_r`] and the truth
/// half-times come from [`closed_form_half_time`].
pub fn gen_trajectory(spec: &PlantSpec) -> Result<TrajectoryData, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let n = spec.n_stimuli;
    let k_layers = spec.n_layers;
    let depths = spec.layer_depths();
    let rates = spec.rates();
    let steps = spec.checkpoint_steps();

    // independent unit-variance layers keep the population formula exact
    let finals: Vec<Matrix> = (0..k_layers)
        .map(|_| standardized(&randn_matrix(&mut rng, n, spec.features_per_layer)))
        .collect();
    let starts: Vec<Matrix> = (0..k_layers)
        .map(|_| standardized(&randn_matrix(&mut rng, n, spec.features_per_layer)))
        .collect();

    let m = k_layers * spec.targets_per_layer;
    let mut responses = Matrix::zeros(n, m);
    let mut planted_layer = Vec::with_capacity(m);
    let mut coords = Vec::with_capacity(m);
    for k in 0..k_layers {
        for _ in 0..spec.targets_per_layer {
            let j = planted_layer.len();
            let signal = planted_readout(&mut rng, &finals[k]);
            for (r, s) in signal.iter().enumerate() {
                let noise: f64 = rng.sample(StandardNormal);
                responses.set(r, j, s + spec.noise_sd * noise);
            }
            let dir = unit_direction(&mut rng);
            let dist = spec.hierarchy_slope_mm * depths[k];
            coords.push([
                V1_POINT[0] + dir[0] * dist,
                V1_POINT[1] + dir[1] * dist,
                V1_POINT[2] + dir[2] * dist,
            ]);
            planted_layer.push(k);
        }
    }

    let mut checkpoints = Vec::with_capacity(steps.len());
    for &step in &steps {
        let slots: Vec<LayerSlot> = (0..k_layers)
            .map(|k| {
                let g = learning_gain(rates[k], step);
                let mut acts = starts[k].clone();
                for (a, f) in acts.data_mut().iter_mut().zip(finals[k].data()) {
                    *a = (1.0 - g) * *a + g * f;
                }
                LayerSlot {
                    depth: depths[k],
                    activations: acts,
                }
            })
            .collect();
        let layers = LayerActivations::new(slots, "synth-trajectory".into(), step)?;
        checkpoints.push(CheckpointActivations { step, layers });
    }

    let half_times: Vec<f64> = rates.iter().map(|&r| closed_form_half_time(r)).collect();
    let final_r: Vec<f64> = rates
        .iter()
        .map(|&r| population_r(learning_gain(r, 1.0)))
        .collect();

    let roi_labels: Vec<Option<String>> = planted_layer
        .iter()
        .map(|&k| Some(roi_name(k)))
        .collect();
    let geometry = VoxelGeometry {
        coordinates: coords.clone(),
        roi_labels: Some(roi_labels),
        v1_reference: Some(V1_POINT),
    };
    let mut rois = build_rois(&planted_layer, &coords, k_layers);

    // plant cortical-style properties as linear functions of the truth
    // half-times (myelin negatively), with noise-scaled scatter
    let prop_defs: [(&str, f64, f64); 4] = [
        ("expansion", 1.5, 0.2),
        ("thickness", 0.8, 1.0),
        ("timescale", 0.9, 0.05),
        ("myelin", -1.0, 1.2),
    ];
    let mut property_r = BTreeMap::new();
    for (name, slope, intercept) in prop_defs {
        let mut values = Vec::with_capacity(k_layers);
        for half in &half_times {
            let noise: f64 = rng.sample(StandardNormal);
            values.push(intercept + slope * half + 0.05 * spec.noise_sd * noise);
        }
        for (roi, v) in rois.rois.iter_mut().zip(&values) {
            roi.properties.insert(name.to_string(), *v);
        }
        rois.property_names.push(name.to_string());
        // fewer than 3 layers cannot support a correlation; fall back to
        // the sign of the planted slope
        let planted = crate::numeric::pearson(&half_times, &values)
            .unwrap_or(if slope < 0.0 { -1.0 } else { 1.0 });
        property_r.insert(name.to_string(), planted);
    }

    let truth = TrajectoryTruth {
        kind: PlantKind::Trajectory,
        seed: spec.seed,
        rates,
        half_times,
        final_r,
        checkpoints: steps,
        planted_layer,
        property_r,
    };
    Ok(TrajectoryData {
        checkpoints,
        responses,
        geometry,
        rois,
        truth,
    })
}

// ---------------------------------------------------------------------------
// dataset writer
// ---------------------------------------------------------------------------

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SynthError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| {
        SynthError::InvalidSpec(format!("cannot write {}: {e}", path.display()))
    })?;
    Ok(())
}

fn ensure_dir(path: &Path) -> Result<(), SynthError> {
    std::fs::create_dir_all(path).map_err(|e| {
        SynthError::InvalidSpec(format!("cannot create {}: {e}", path.display()))
    })
}

/// Paths written by [`write_dataset`], relative to the output directory.
#[derive(Debug, Clone, Serialize)]
pub struct DatasetPaths {
    pub manifests: Vec<String>,
    pub truth: String,
}

fn stimulus_ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("stim_{i:05}")).collect()
}

fn layer_entries(layers: &LayerActivations, dir_rel: &str, checkpoint: f64) -> Vec<ActivationEntry> {
    (0..layers.n_layers())
        .map(|k| ActivationEntry {
            depth: layers.layer(k).depth,
            checkpoint,
            path: format!("{dir_rel}/layer_{k:02}.nmb"),
            stimulus_ids: None,
        })
        .collect()
}

fn write_layers(base: &Path, dir_rel: &str, layers: &LayerActivations) -> Result<(), SynthError> {
    ensure_dir(&base.join(dir_rel))?;
    for k in 0..layers.n_layers() {
        let path = base.join(format!("{dir_rel}/layer_{k:02}.nmb"));
        write_matrix(&path, &layers.layer(k).activations)?;
    }
    Ok(())
}

/// Generate the dataset a spec describes and write it under `dir` as
/// manifest(s), matrix files, metadata and a truth record.
pub fn write_dataset(spec: &PlantSpec, dir: &Path) -> Result<DatasetPaths, SynthError> {
    spec.validate()?;
    ensure_dir(dir)?;
    ensure_dir(&dir.join("responses"))?;
    let ids = stimulus_ids(spec.n_stimuli);
    match spec.kind {
        PlantKind::Hierarchical => {
            let data = gen_hierarchical(spec)?;
            write_layers(dir, "acts", &data.layers)?;
            write_matrix(&dir.join("responses/fmri.nmb"), &data.responses)?;
            write_json(&dir.join("responses/geometry.json"), &data.geometry)?;
            write_roi_csv(&dir.join("rois.csv"), &data.rois)?;
            write_json(&dir.join("truth.json"), &data.truth)?;
            let manifest = Manifest {
                schema: MANIFEST_SCHEMA_VERSION,
                stimulus_ids: ids,
                model_tag: Some("synth-hierarchical".into()),
                activations: layer_entries(&data.layers, "acts", 1.0),
                response: ResponseEntry {
                    modality: Modality::Fmri,
                    path: "responses/fmri.nmb".into(),
                    stimulus_ids: None,
                    geometry_path: Some("responses/geometry.json".into()),
                    time_path: None,
                },
                roi_table_path: Some("rois.csv".into()),
                property_map_paths: vec![],
            };
            manifest.to_file(&dir.join("manifest.json"))?;
            Ok(DatasetPaths {
                manifests: vec!["manifest.json".into()],
                truth: "truth.json".into(),
            })
        }
        PlantKind::Temporal => {
            let data = gen_temporal(spec)?;
            write_layers(dir, "acts", &data.layers)?;
            let meg = &data.meg;
            write_array(
                &dir.join("responses/meg.nmb"),
                &[meg.n_stimuli, meg.n_channels, meg.n_times()],
                meg.data(),
            )?;
            write_json(
                &dir.join("responses/time.json"),
                &TimeAxisFile {
                    times: meg.times.clone(),
                    n_channels: meg.n_channels,
                    windows: Some(data.windows.clone()),
                },
            )?;
            write_json(&dir.join("truth.json"), &data.truth)?;
            let manifest = Manifest {
                schema: MANIFEST_SCHEMA_VERSION,
                stimulus_ids: ids,
                model_tag: Some("synth-temporal".into()),
                activations: layer_entries(&data.layers, "acts", 1.0),
                response: ResponseEntry {
                    modality: Modality::Meg,
                    path: "responses/meg.nmb".into(),
                    stimulus_ids: None,
                    geometry_path: None,
                    time_path: Some("responses/time.json".into()),
                },
                roi_table_path: None,
                property_map_paths: vec![],
            };
            manifest.to_file(&dir.join("manifest.json"))?;
            Ok(DatasetPaths {
                manifests: vec!["manifest.json".into()],
                truth: "truth.json".into(),
            })
        }
        PlantKind::Trajectory => {
            let data = gen_trajectory(spec)?;
            write_matrix(&dir.join("responses/fmri.nmb"), &data.responses)?;
            write_json(&dir.join("responses/geometry.json"), &data.geometry)?;
            write_roi_csv(&dir.join("rois.csv"), &data.rois)?;
            write_json(&dir.join("truth.json"), &data.truth)?;
            ensure_dir(&dir.join("manifests"))?;
            let mut manifest_paths = Vec::new();
            for (i, ckpt) in data.checkpoints.iter().enumerate() {
                let acts_rel = format!("acts/ckpt_{i:02}");
                write_layers(dir, &acts_rel, &ckpt.layers)?;
                let manifest = Manifest {
                    schema: MANIFEST_SCHEMA_VERSION,
                    stimulus_ids: ids.clone(),
                    model_tag: Some("synth-trajectory".into()),
                    activations: layer_entries(&ckpt.layers, &acts_rel, ckpt.step),
                    response: ResponseEntry {
                        modality: Modality::Fmri,
                        path: "../responses/fmri.nmb".into(),
                        stimulus_ids: None,
                        geometry_path: Some("../responses/geometry.json".into()),
                        time_path: None,
                    },
                    roi_table_path: Some("../rois.csv".into()),
                    property_map_paths: vec![],
                };
                let rel = format!("manifests/ckpt_{i:02}.json");
                manifest.to_file(&dir.join(&rel))?;
                manifest_paths.push(rel);
            }
            Ok(DatasetPaths {
                manifests: manifest_paths,
                truth: "truth.json".into(),
            })
        }
    }
}
