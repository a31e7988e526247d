//! Dataset manifests, matrix file IO, stimulus alignment, ROI tables,
//! cortical property maps, and the in-scope response preprocessing.
//!
//! Matrix files use a small binary container: magic `NMB1`, a u8 dimension
//! count, little-endian u64 dims, then the payload as row-major
//! little-endian f32 (widened to f64 in memory). Activations dominate the
//! disk footprint, so storage stays single precision while compute stays
//! double. Everything else (manifests, geometry, time axes) is JSON and ROI
//! and property tables are CSV, so a dataset can be inspected and diffed
//! with ordinary tools.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{LayerActivations, LayerSlot, MetricsError, VoxelGeometry};
use crate::numeric::Matrix;

pub const MATRIX_MAGIC: [u8; 4] = *b"NMB1";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("bad magic in {path}: expected NMB1, found {found:?}")]
    BadMagic { path: PathBuf, found: [u8; 4] },
    #[error("truncated file {path}: {context}")]
    Truncated { path: PathBuf, context: String },
    #[error("dimension overflow in {path}: dims {dims:?}")]
    DimOverflow { path: PathBuf, dims: Vec<u64> },
    #[error("size mismatch in {path}: header promises {expected} values, payload holds {got}")]
    SizeMismatch {
        path: PathBuf,
        expected: usize,
        got: usize,
    },
    #[error("unsupported dimensionality in {path}: got {got}, expected {expected}")]
    WrongNdim {
        path: PathBuf,
        got: u8,
        expected: u8,
    },
    #[error("json error in {path}: {message}")]
    Json { path: PathBuf, message: String },
    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("invalid manifest: {0}")]
    InvalidManifest(String),
    #[error("unsupported manifest schema {found}, this reader handles {supported}")]
    SchemaVersion { found: u32, supported: u32 },
    #[error("duplicate stimulus id {id} in {context}")]
    DuplicateStimulus { id: String, context: String },
    #[error("{context} is missing stimuli: {missing:?}; it has extra ids: {extra:?}")]
    StimulusMismatch {
        context: String,
        missing: Vec<String>,
        extra: Vec<String>,
    },
    #[error("stimulus count mismatch in {context}: manifest lists {expected}, file has {got}")]
    CountMismatch {
        context: String,
        expected: usize,
        got: usize,
    },
    #[error("too few stimuli: {got} (need at least {min})")]
    TooFewStimuli { got: usize, min: usize },
    #[error("time window [{start}, {end}) selects no samples")]
    EmptyWindow { start: f64, end: f64 },
    #[error("time window [{start}, {end}) lies outside the axis [{axis_start}, {axis_end}]")]
    WindowOutsideAxis {
        start: f64,
        end: f64,
        axis_start: f64,
        axis_end: f64,
    },
    #[error("invalid time window [{start}, {end})")]
    InvalidWindow { start: f64, end: f64 },
    #[error("non-finite coordinate for target {index}")]
    MissingCoordinates { index: usize },
    #[error("rois {a} and {b} both claim target {index}")]
    RoiOverlap { a: String, b: String, index: usize },
    #[error("roi {roi}: stored centroid differs from the mean of member coordinates")]
    CentroidMismatch { roi: String },
    #[error("roi table references target {index}, but only {n_targets} targets exist")]
    RoiIndexOutOfRange { index: usize, n_targets: usize },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

// ---------------------------------------------------------------------------
// binary array format
// ---------------------------------------------------------------------------

/// Write an n-dimensional array (row-major f64 data, stored as f32).
pub fn write_array(path: &Path, dims: &[usize], data: &[f64]) -> Result<(), DataError> {
    let expected: usize = dims.iter().product();
    assert_eq!(expected, data.len(), "dims do not match data length");
    let mut bytes = Vec::with_capacity(4 + 1 + 8 * dims.len() + 4 * data.len());
    bytes.extend_from_slice(&MATRIX_MAGIC);
    bytes.push(dims.len() as u8);
    for &d in dims {
        bytes.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &v in data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&bytes).map_err(io_err(path))?;
    Ok(())
}

/// Read an n-dimensional array, widening the payload to f64.
pub fn read_array(path: &Path) -> Result<(Vec<usize>, Vec<f64>), DataError> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    if bytes.len() < 4 {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            context: "file shorter than the magic".into(),
        });
    }
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[..4]);
    if magic != MATRIX_MAGIC {
        return Err(DataError::BadMagic {
            path: path.to_path_buf(),
            found: magic,
        });
    }
    if bytes.len() < 5 {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            context: "missing dimension count".into(),
        });
    }
    let ndim = bytes[4] as usize;
    let header_len = 5 + 8 * ndim;
    if bytes.len() < header_len {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            context: format!("header needs {header_len} bytes, file has {}", bytes.len()),
        });
    }
    let mut dims_u64 = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let mut b = [0u8; 8];
        b.copy_from_slice(&bytes[5 + 8 * i..5 + 8 * (i + 1)]);
        dims_u64.push(u64::from_le_bytes(b));
    }
    let mut total: usize = 1;
    for &d in &dims_u64 {
        let d_usize: usize = d.try_into().map_err(|_| DataError::DimOverflow {
            path: path.to_path_buf(),
            dims: dims_u64.clone(),
        })?;
        total = total
            .checked_mul(d_usize)
            .ok_or_else(|| DataError::DimOverflow {
                path: path.to_path_buf(),
                dims: dims_u64.clone(),
            })?;
    }
    let expected_bytes = total.checked_mul(4).ok_or_else(|| DataError::DimOverflow {
        path: path.to_path_buf(),
        dims: dims_u64.clone(),
    })?;
    let payload = &bytes[header_len..];
    if payload.len() != expected_bytes {
        // a partial trailing value means the file was cut, a whole number
        // of values means the header and payload disagree
        if payload.len() < expected_bytes && payload.len() % 4 != 0 {
            return Err(DataError::Truncated {
                path: path.to_path_buf(),
                context: format!(
                    "payload ends mid-value: {} of {expected_bytes} bytes",
                    payload.len()
                ),
            });
        }
        return Err(DataError::SizeMismatch {
            path: path.to_path_buf(),
            expected: total,
            got: payload.len() / 4,
        });
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| {
            let mut b = [0u8; 4];
            b.copy_from_slice(c);
            f32::from_le_bytes(b) as f64
        })
        .collect();
    Ok((dims_u64.into_iter().map(|d| d as usize).collect(), data))
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<(), DataError> {
    write_array(path, &[m.rows(), m.cols()], m.data())
}

pub fn read_matrix(path: &Path) -> Result<Matrix, DataError> {
    let (dims, data) = read_array(path)?;
    if dims.len() != 2 {
        return Err(DataError::WrongNdim {
            path: path.to_path_buf(),
            got: dims.len() as u8,
            expected: 2,
        });
    }
    Ok(Matrix::from_vec(dims[0], dims[1], data).expect("dims validated by reader"))
}

// ---------------------------------------------------------------------------
// MEG responses
// ---------------------------------------------------------------------------

/// Epoched responses as a stimuli x channels x times tensor.
#[derive(Debug, Clone)]
pub struct MegResponse {
    pub n_stimuli: usize,
    pub n_channels: usize,
    /// Seconds relative to stimulus onset, ascending, uniform step.
    pub times: Vec<f64>,
    /// Row-major [stimulus][channel][time].
    data: Vec<f64>,
}

impl MegResponse {
    pub fn new(
        n_stimuli: usize,
        n_channels: usize,
        times: Vec<f64>,
        data: Vec<f64>,
    ) -> Result<Self, DataError> {
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(DataError::InvalidManifest(
                "time axis must be strictly ascending".into(),
            ));
        }
        let expected = n_stimuli * n_channels * times.len();
        if data.len() != expected {
            return Err(DataError::CountMismatch {
                context: "meg tensor".into(),
                expected,
                got: data.len(),
            });
        }
        Ok(MegResponse {
            n_stimuli,
            n_channels,
            times,
            data,
        })
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    #[inline]
    pub fn get(&self, stim: usize, channel: usize, time: usize) -> f64 {
        self.data[(stim * self.n_channels + channel) * self.times.len() + time]
    }

    #[inline]
    fn set(&mut self, stim: usize, channel: usize, time: usize, v: f64) {
        self.data[(stim * self.n_channels + channel) * self.times.len() + time] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// stimuli x channels matrix at one time sample.
    pub fn time_slice(&self, time_idx: usize) -> Matrix {
        let mut m = Matrix::zeros(self.n_stimuli, self.n_channels);
        for s in 0..self.n_stimuli {
            for c in 0..self.n_channels {
                m.set(s, c, self.get(s, c, time_idx));
            }
        }
        m
    }

    /// stimuli x (channels * |time_idx|) matrix over a set of time samples,
    /// targets ordered channel-major.
    pub fn flatten_cells(&self, time_idx: &[usize]) -> Matrix {
        let m = self.n_channels * time_idx.len();
        let mut out = Matrix::zeros(self.n_stimuli, m);
        for s in 0..self.n_stimuli {
            for c in 0..self.n_channels {
                for (k, &t) in time_idx.iter().enumerate() {
                    out.set(s, c * time_idx.len() + k, self.get(s, c, t));
                }
            }
        }
        out
    }

    pub fn select_stimuli(&self, idx: &[usize]) -> MegResponse {
        let ct = self.n_channels * self.times.len();
        let mut data = Vec::with_capacity(idx.len() * ct);
        for &s in idx {
            data.extend_from_slice(&self.data[s * ct..(s + 1) * ct]);
        }
        MegResponse {
            n_stimuli: idx.len(),
            n_channels: self.n_channels,
            times: self.times.clone(),
            data,
        }
    }
}

/// Z-score each (channel, time) cell across stimuli (population SD).
/// Constant cells are centered, left unscaled, and reported.
pub fn zscore_meg(resp: &MegResponse) -> Result<(MegResponse, Vec<(usize, usize)>), DataError> {
    let n = resp.n_stimuli;
    if n < 2 {
        return Err(DataError::TooFewStimuli { got: n, min: 2 });
    }
    let mut out = resp.clone();
    let mut constant_cells = Vec::new();
    for c in 0..resp.n_channels {
        for t in 0..resp.n_times() {
            let first = resp.get(0, c, t);
            let mut constant = true;
            let mut mean = 0.0;
            for s in 0..n {
                let v = resp.get(s, c, t);
                mean += v;
                if v != first {
                    constant = false;
                }
            }
            if constant {
                for s in 0..n {
                    out.set(s, c, t, 0.0);
                }
                constant_cells.push((c, t));
                continue;
            }
            mean /= n as f64;
            let mut ss = 0.0;
            for s in 0..n {
                let d = resp.get(s, c, t) - mean;
                ss += d * d;
            }
            let sd = (ss / n as f64).sqrt();
            for s in 0..n {
                let v = (resp.get(s, c, t) - mean) / sd;
                out.set(s, c, t, v);
            }
        }
    }
    Ok((out, constant_cells))
}

/// Targets selected by one time window.
#[derive(Debug, Clone)]
pub struct TimeWindowTargets {
    pub start: f64,
    pub end: f64,
    /// Indices into the time axis whose samples fall in [start, end).
    pub time_indices: Vec<usize>,
}

/// Select the (channel, time) target groups whose sample times fall in each
/// half-open window `[start, end)`.
pub fn select_time_windows(
    resp: &MegResponse,
    windows: &[[f64; 2]],
) -> Result<Vec<TimeWindowTargets>, DataError> {
    let axis_start = *resp.times.first().expect("validated nonempty");
    let axis_end = *resp.times.last().expect("validated nonempty");
    windows
        .iter()
        .map(|w| {
            let [start, end] = *w;
            if !(start < end) {
                return Err(DataError::InvalidWindow { start, end });
            }
            if end <= axis_start || start > axis_end {
                return Err(DataError::WindowOutsideAxis {
                    start,
                    end,
                    axis_start,
                    axis_end,
                });
            }
            let time_indices: Vec<usize> = resp
                .times
                .iter()
                .enumerate()
                .filter(|(_, &t)| t >= start && t < end)
                .map(|(i, _)| i)
                .collect();
            if time_indices.is_empty() {
                return Err(DataError::EmptyWindow { start, end });
            }
            Ok(TimeWindowTargets {
                start,
                end,
                time_indices,
            })
        })
        .collect()
}

/// Euclidean distance of every target from the resolved V1 reference, mm.
pub fn distance_from_v1(geom: &VoxelGeometry) -> Result<Vec<f64>, DataError> {
    let v1 = geom.resolve_v1_reference(None)?;
    geom.coordinates
        .iter()
        .enumerate()
        .map(|(i, c)| {
            if c.iter().any(|v| !v.is_finite()) {
                return Err(DataError::MissingCoordinates { index: i });
            }
            let d = (0..3).map(|k| (c[k] - v1[k]).powi(2)).sum::<f64>().sqrt();
            Ok(d)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// ROI tables and property maps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Roi {
    pub name: String,
    pub members: Vec<usize>,
    pub centroid: [f64; 3],
    /// Cortical property values by name; missing values absent.
    pub properties: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RoiTable {
    pub rois: Vec<Roi>,
    /// Property column order as declared in the source files.
    pub property_names: Vec<String>,
}

impl RoiTable {
    /// Member index sets must be disjoint.
    pub fn validate(&self) -> Result<(), DataError> {
        let mut owner: BTreeMap<usize, &str> = BTreeMap::new();
        for roi in &self.rois {
            for &idx in &roi.members {
                if let Some(prev) = owner.insert(idx, &roi.name) {
                    return Err(DataError::RoiOverlap {
                        a: prev.to_string(),
                        b: roi.name.clone(),
                        index: idx,
                    });
                }
            }
        }
        Ok(())
    }

    /// Check member indices and stored centroids against the geometry.
    pub fn validate_against(&self, geom: &VoxelGeometry) -> Result<(), DataError> {
        let n = geom.n_targets();
        for roi in &self.rois {
            let mut sum = [0.0f64; 3];
            for &idx in &roi.members {
                if idx >= n {
                    return Err(DataError::RoiIndexOutOfRange {
                        index: idx,
                        n_targets: n,
                    });
                }
                for (s, c) in sum.iter_mut().zip(&geom.coordinates[idx]) {
                    *s += c;
                }
            }
            if !roi.members.is_empty() {
                for k in 0..3 {
                    let mean = sum[k] / roi.members.len() as f64;
                    let tol = 1e-6 * (1.0 + mean.abs());
                    if (mean - roi.centroid[k]).abs() > tol {
                        return Err(DataError::CentroidMismatch {
                            roi: roi.name.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn property(&self, name: &str) -> Vec<(String, f64)> {
        self.rois
            .iter()
            .filter_map(|r| r.properties.get(name).map(|v| (r.name.clone(), *v)))
            .collect()
    }
}

const ROI_FIXED_COLUMNS: [&str; 5] = ["roi", "target_indices", "centroid_x", "centroid_y", "centroid_z"];

/// Read `roi,target_indices,centroid_x,centroid_y,centroid_z[,prop...]`.
/// `target_indices` is a semicolon-separated index list; empty property
/// cells mean missing.
pub fn read_roi_csv(path: &Path) -> Result<RoiTable, DataError> {
    let csv_err = |message: String| DataError::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| csv_err(e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < ROI_FIXED_COLUMNS.len()
        || cols[..ROI_FIXED_COLUMNS.len()] != ROI_FIXED_COLUMNS
    {
        return Err(csv_err(format!(
            "header must start with {ROI_FIXED_COLUMNS:?}, got {cols:?}"
        )));
    }
    let property_names: Vec<String> = cols[ROI_FIXED_COLUMNS.len()..]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut rois = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        let name = record.get(0).unwrap_or("").to_string();
        if name.is_empty() {
            return Err(csv_err("empty roi name".into()));
        }
        let members: Vec<usize> = record
            .get(1)
            .unwrap_or("")
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<usize>()
                    .map_err(|e| csv_err(format!("roi {name}: bad index {s:?}: {e}")))
            })
            .collect::<Result<_, _>>()?;
        let parse_f = |i: usize| -> Result<f64, DataError> {
            record
                .get(i)
                .unwrap_or("")
                .parse::<f64>()
                .map_err(|e| csv_err(format!("roi {name}: bad float in column {i}: {e}")))
        };
        let centroid = [parse_f(2)?, parse_f(3)?, parse_f(4)?];
        let mut properties = BTreeMap::new();
        for (pi, pname) in property_names.iter().enumerate() {
            let cell = record.get(ROI_FIXED_COLUMNS.len() + pi).unwrap_or("");
            if !cell.is_empty() {
                let v = cell
                    .parse::<f64>()
                    .map_err(|e| csv_err(format!("roi {name}: bad {pname}: {e}")))?;
                properties.insert(pname.clone(), v);
            }
        }
        rois.push(Roi {
            name,
            members,
            centroid,
            properties,
        });
    }
    let table = RoiTable {
        rois,
        property_names,
    };
    table.validate()?;
    Ok(table)
}

pub fn write_roi_csv(path: &Path, table: &RoiTable) -> Result<(), DataError> {
    let mut out = String::new();
    out.push_str(&ROI_FIXED_COLUMNS.join(","));
    for p in &table.property_names {
        out.push(',');
        out.push_str(p);
    }
    out.push('\n');
    for roi in &table.rois {
        let members: Vec<String> = roi.members.iter().map(|i| i.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{},{}",
            roi.name,
            members.join(";"),
            roi.centroid[0],
            roi.centroid[1],
            roi.centroid[2]
        ));
        for p in &table.property_names {
            out.push(',');
            if let Some(v) = roi.properties.get(p) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(io_err(path))
}

/// Merge a `roi,<name>[,<name>...]` property CSV into the table.
pub fn merge_property_csv(table: &mut RoiTable, path: &Path) -> Result<(), DataError> {
    let csv_err = |message: String| DataError::Csv {
        path: path.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| csv_err(e.to_string()))?
        .clone();
    let cols: Vec<String> = headers.iter().map(|s| s.to_string()).collect();
    if cols.len() < 2 || cols[0] != "roi" {
        return Err(csv_err(format!(
            "property map header must be roi,<name>...; got {cols:?}"
        )));
    }
    for name in &cols[1..] {
        if !table.property_names.contains(name) {
            table.property_names.push(name.clone());
        }
    }
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(e.to_string()))?;
        let roi_name = record.get(0).unwrap_or("");
        let Some(roi) = table.rois.iter_mut().find(|r| r.name == roi_name) else {
            return Err(csv_err(format!("unknown roi {roi_name:?}")));
        };
        for (pi, pname) in cols[1..].iter().enumerate() {
            let cell = record.get(1 + pi).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            let v = cell
                .parse::<f64>()
                .map_err(|e| csv_err(format!("roi {roi_name}: bad {pname}: {e}")))?;
            roi.properties.insert(pname.clone(), v);
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Fmri,
    Meg,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActivationEntry {
    /// Normalized layer depth in [0, 1].
    pub depth: f64,
    /// Relative training step of this checkpoint.
    #[serde(default = "default_checkpoint")]
    pub checkpoint: f64,
    pub path: String,
    /// Row order of the referenced matrix; defaults to the manifest order.
    #[serde(default)]
    pub stimulus_ids: Option<Vec<String>>,
}

fn default_checkpoint() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseEntry {
    pub modality: Modality,
    pub path: String,
    #[serde(default)]
    pub stimulus_ids: Option<Vec<String>>,
    /// Per-target coordinates etc., required for fmri.
    #[serde(default)]
    pub geometry_path: Option<String>,
    /// Time axis metadata, required for meg.
    #[serde(default)]
    pub time_path: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub stimulus_ids: Vec<String>,
    #[serde(default)]
    pub model_tag: Option<String>,
    pub activations: Vec<ActivationEntry>,
    pub response: ResponseEntry,
    #[serde(default)]
    pub roi_table_path: Option<String>,
    #[serde(default)]
    pub property_map_paths: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeAxisFile {
    pub times: Vec<f64>,
    pub n_channels: usize,
    /// Optional analysis windows, [start, end) seconds.
    #[serde(default)]
    pub windows: Option<Vec<[f64; 2]>>,
}

impl Manifest {
    pub fn from_file(path: &Path) -> Result<Manifest, DataError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| DataError::Json {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn to_file(&self, path: &Path) -> Result<(), DataError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(io_err(path))
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.schema != MANIFEST_SCHEMA_VERSION {
            return Err(DataError::SchemaVersion {
                found: self.schema,
                supported: MANIFEST_SCHEMA_VERSION,
            });
        }
        if self.stimulus_ids.is_empty() {
            return Err(DataError::InvalidManifest("no stimuli".into()));
        }
        let mut seen = BTreeSet::new();
        for id in &self.stimulus_ids {
            if !seen.insert(id) {
                return Err(DataError::DuplicateStimulus {
                    id: id.clone(),
                    context: "manifest stimulus_ids".into(),
                });
            }
        }
        if self.activations.is_empty() {
            return Err(DataError::InvalidManifest("no activation entries".into()));
        }
        let mut keys = BTreeSet::new();
        for entry in &self.activations {
            if !(0.0..=1.0).contains(&entry.depth) {
                return Err(DataError::InvalidManifest(format!(
                    "activation depth {} outside [0, 1]",
                    entry.depth
                )));
            }
            if !keys.insert((entry.depth.to_bits(), entry.checkpoint.to_bits())) {
                return Err(DataError::InvalidManifest(format!(
                    "duplicate (depth, checkpoint) pair ({}, {})",
                    entry.depth, entry.checkpoint
                )));
            }
        }
        match self.response.modality {
            Modality::Fmri if self.response.geometry_path.is_none() => {
                return Err(DataError::InvalidManifest(
                    "fmri response needs geometry_path".into(),
                ));
            }
            Modality::Meg if self.response.time_path.is_none() => {
                return Err(DataError::InvalidManifest(
                    "meg response needs time_path".into(),
                ));
            }
            _ => {}
        }
        Ok(())
    }

    /// Distinct checkpoint steps, ascending.
    pub fn checkpoint_steps(&self) -> Vec<f64> {
        let mut steps: Vec<f64> = Vec::new();
        for e in &self.activations {
            if !steps.iter().any(|s| *s == e.checkpoint) {
                steps.push(e.checkpoint);
            }
        }
        steps.sort_by(|a, b| a.total_cmp(b));
        steps
    }
}

// ---------------------------------------------------------------------------
// alignment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum ResponseData {
    Fmri {
        matrix: Matrix,
        geometry: VoxelGeometry,
    },
    Meg {
        response: MegResponse,
        windows: Option<Vec<[f64; 2]>>,
    },
}

impl ResponseData {
    pub fn n_targets(&self) -> usize {
        match self {
            ResponseData::Fmri { matrix, .. } => matrix.cols(),
            ResponseData::Meg { response, .. } => response.n_channels * response.n_times(),
        }
    }
}

/// Activations for one checkpoint step.
#[derive(Debug, Clone)]
pub struct CheckpointActivations {
    pub step: f64,
    pub layers: LayerActivations,
}

/// Everything a manifest references, loaded and reordered to the manifest's
/// stimulus order.
#[derive(Debug, Clone)]
pub struct AlignedDataset {
    pub stimulus_ids: Vec<String>,
    pub checkpoints: Vec<CheckpointActivations>,
    pub response: ResponseData,
    pub roi_table: Option<RoiTable>,
}

impl AlignedDataset {
    /// The single checkpoint of a non-trajectory dataset.
    pub fn single_checkpoint(&self) -> Result<&CheckpointActivations, DataError> {
        if self.checkpoints.len() != 1 {
            return Err(DataError::InvalidManifest(format!(
                "expected one checkpoint, manifest holds {}",
                self.checkpoints.len()
            )));
        }
        Ok(&self.checkpoints[0])
    }
}

/// Row permutation mapping a file's stimulus order onto the manifest order.
fn alignment_permutation(
    master: &[String],
    file_ids: &[String],
    context: &str,
) -> Result<Vec<usize>, DataError> {
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, id) in file_ids.iter().enumerate() {
        if index.insert(id.as_str(), i).is_some() {
            return Err(DataError::DuplicateStimulus {
                id: id.clone(),
                context: context.to_string(),
            });
        }
    }
    let mut missing = Vec::new();
    let mut perm = Vec::with_capacity(master.len());
    for id in master {
        match index.get(id.as_str()) {
            Some(&i) => perm.push(i),
            None => missing.push(id.clone()),
        }
    }
    let master_set: BTreeSet<&str> = master.iter().map(|s| s.as_str()).collect();
    let extra: Vec<String> = file_ids
        .iter()
        .filter(|id| !master_set.contains(id.as_str()))
        .cloned()
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(DataError::StimulusMismatch {
            context: context.to_string(),
            missing,
            extra,
        });
    }
    Ok(perm)
}

fn resolve(base: &Path, rel: &str) -> PathBuf {
    base.join(rel)
}

/// Load every file a manifest references and reorder all rows to the
/// manifest's stimulus order. Files without their own `stimulus_ids` are
/// taken to already be in manifest order (their row count is still
/// checked).
pub fn align_stimuli(manifest: &Manifest, base_dir: &Path) -> Result<AlignedDataset, DataError> {
    manifest.validate()?;
    let master = &manifest.stimulus_ids;
    let n = master.len();

    let perm_for = |ids: &Option<Vec<String>>, context: &str| -> Result<Option<Vec<usize>>, DataError> {
        match ids {
            None => Ok(None),
            Some(ids) => Ok(Some(alignment_permutation(master, ids, context)?)),
        }
    };

    let mut by_checkpoint: BTreeMap<u64, Vec<(f64, Matrix)>> = BTreeMap::new();
    for entry in &manifest.activations {
        let path = resolve(base_dir, &entry.path);
        let m = read_matrix(&path)?;
        if m.rows() != n && entry.stimulus_ids.is_none() {
            return Err(DataError::CountMismatch {
                context: entry.path.clone(),
                expected: n,
                got: m.rows(),
            });
        }
        if let Some(ids) = &entry.stimulus_ids {
            if ids.len() != m.rows() {
                return Err(DataError::CountMismatch {
                    context: entry.path.clone(),
                    expected: ids.len(),
                    got: m.rows(),
                });
            }
        }
        let aligned = match perm_for(&entry.stimulus_ids, &entry.path)? {
            Some(perm) => m.select_rows(&perm),
            None => m,
        };
        by_checkpoint
            .entry(entry.checkpoint.to_bits())
            .or_default()
            .push((entry.depth, aligned));
    }
    let mut checkpoints = Vec::new();
    let mut steps: Vec<f64> = by_checkpoint.keys().map(|b| f64::from_bits(*b)).collect();
    steps.sort_by(|a, b| a.total_cmp(b));
    for step in steps {
        let mut slots = by_checkpoint.remove(&step.to_bits()).expect("key exists");
        slots.sort_by(|a, b| a.0.total_cmp(&b.0));
        let layers: Vec<LayerSlot> = slots
            .into_iter()
            .map(|(depth, activations)| LayerSlot { depth, activations })
            .collect();
        let tag = manifest.model_tag.clone().unwrap_or_default();
        checkpoints.push(CheckpointActivations {
            step,
            layers: LayerActivations::new(layers, tag, step)?,
        });
    }

    let response_path = resolve(base_dir, &manifest.response.path);
    let response = match manifest.response.modality {
        Modality::Fmri => {
            let m = read_matrix(&response_path)?;
            if m.rows() != n && manifest.response.stimulus_ids.is_none() {
                return Err(DataError::CountMismatch {
                    context: manifest.response.path.clone(),
                    expected: n,
                    got: m.rows(),
                });
            }
            let matrix = match perm_for(&manifest.response.stimulus_ids, &manifest.response.path)? {
                Some(perm) => m.select_rows(&perm),
                None => m,
            };
            let geom_path = resolve(
                base_dir,
                manifest.response.geometry_path.as_deref().expect("validated"),
            );
            let text = std::fs::read_to_string(&geom_path).map_err(io_err(&geom_path))?;
            let geometry: VoxelGeometry =
                serde_json::from_str(&text).map_err(|e| DataError::Json {
                    path: geom_path.clone(),
                    message: e.to_string(),
                })?;
            if geometry.n_targets() != matrix.cols() {
                return Err(DataError::CountMismatch {
                    context: "geometry coordinates".into(),
                    expected: matrix.cols(),
                    got: geometry.n_targets(),
                });
            }
            ResponseData::Fmri { matrix, geometry }
        }
        Modality::Meg => {
            let (dims, data) = read_array(&response_path)?;
            if dims.len() != 3 {
                return Err(DataError::WrongNdim {
                    path: response_path.clone(),
                    got: dims.len() as u8,
                    expected: 3,
                });
            }
            let time_path = resolve(
                base_dir,
                manifest.response.time_path.as_deref().expect("validated"),
            );
            let text = std::fs::read_to_string(&time_path).map_err(io_err(&time_path))?;
            let axis: TimeAxisFile = serde_json::from_str(&text).map_err(|e| DataError::Json {
                path: time_path.clone(),
                message: e.to_string(),
            })?;
            if dims[1] != axis.n_channels || dims[2] != axis.times.len() {
                return Err(DataError::CountMismatch {
                    context: "meg tensor vs time axis".into(),
                    expected: axis.n_channels * axis.times.len(),
                    got: dims[1] * dims[2],
                });
            }
            let resp = MegResponse::new(dims[0], dims[1], axis.times, data)?;
            if resp.n_stimuli != n && manifest.response.stimulus_ids.is_none() {
                return Err(DataError::CountMismatch {
                    context: manifest.response.path.clone(),
                    expected: n,
                    got: resp.n_stimuli,
                });
            }
            let resp = match perm_for(&manifest.response.stimulus_ids, &manifest.response.path)? {
                Some(perm) => resp.select_stimuli(&perm),
                None => resp,
            };
            ResponseData::Meg {
                response: resp,
                windows: axis.windows,
            }
        }
    };

    let mut roi_table = None;
    if let Some(rel) = &manifest.roi_table_path {
        let mut table = read_roi_csv(&resolve(base_dir, rel))?;
        for rel_prop in &manifest.property_map_paths {
            merge_property_csv(&mut table, &resolve(base_dir, rel_prop))?;
        }
        if let ResponseData::Fmri { geometry, .. } = &response {
            table.validate_against(geometry)?;
        }
        roi_table = Some(table);
    }

    Ok(AlignedDataset {
        stimulus_ids: master.clone(),
        checkpoints,
        response,
        roi_table,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;
    use tempfile::tempdir;

    #[test]
    fn matrix_round_trip_values_and_bytes() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.nmb");
        // values already representable in f32 so the round trip is exact
        let data: Vec<f64> = vec![1.0, -2.5, 3.25, 0.0, 5.5, -6.125];
        let m = Matrix::from_vec(3, 2, data).unwrap();
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        assert_eq!(m, back);
        let first = std::fs::read(&path).unwrap();
        let path2 = dir.path().join("m2.nmb");
        write_matrix(&path2, &back).unwrap();
        assert_eq!(first, std::fs::read(&path2).unwrap());
    }

    #[test]
    fn nan_cells_survive_the_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.nmb");
        let m = Matrix::from_vec(2, 2, vec![1.0, f64::NAN, 3.0, f64::NAN]).unwrap();
        write_matrix(&path, &m).unwrap();
        let back = read_matrix(&path).unwrap();
        assert!(back.get(0, 1).is_nan());
        assert!(back.get(1, 1).is_nan());
        let path2 = dir.path().join("m2.nmb");
        write_matrix(&path2, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn truncated_file_reports_truncation() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.nmb");
        let m = Matrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        write_matrix(&path, &m).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            read_matrix(&path),
            Err(DataError::Truncated { .. })
        ));
    }

    #[test]
    fn wrong_value_count_reports_size_mismatch() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.nmb");
        // header says 2x3, payload holds 5 floats
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MATRIX_MAGIC);
        bytes.push(2);
        bytes.extend_from_slice(&2u64.to_le_bytes());
        bytes.extend_from_slice(&3u64.to_le_bytes());
        for v in [1.0f32, 2.0, 3.0, 4.0, 5.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_matrix(&path),
            Err(DataError::SizeMismatch {
                expected: 6,
                got: 5,
                ..
            })
        ));
    }

    #[test]
    fn bad_magic_is_its_own_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.nmb");
        std::fs::write(&path, b"XXXX\x02rest").unwrap();
        assert!(matches!(read_matrix(&path), Err(DataError::BadMagic { .. })));
    }

    #[test]
    fn huge_dims_report_overflow() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.nmb");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&MATRIX_MAGIC);
        bytes.push(2);
        bytes.extend_from_slice(&u64::MAX.to_le_bytes());
        bytes.extend_from_slice(&u64::MAX.to_le_bytes());
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_matrix(&path),
            Err(DataError::DimOverflow { .. })
        ));
    }

    #[test]
    fn zscore_meg_unit_stats_and_idempotence() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let n = 12;
        let (c, t) = (3, 4);
        let data: Vec<f64> = (0..n * c * t).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let times: Vec<f64> = (0..t).map(|i| i as f64 * 0.1).collect();
        let resp = MegResponse::new(n, c, times, data).unwrap();
        let (z, flagged) = zscore_meg(&resp).unwrap();
        assert!(flagged.is_empty());
        for ch in 0..c {
            for ti in 0..t {
                let vals: Vec<f64> = (0..n).map(|s| z.get(s, ch, ti)).collect();
                let mean = vals.iter().sum::<f64>() / n as f64;
                let sd = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / n as f64)
                    .sqrt();
                assert!(mean.abs() < 1e-12);
                assert!((sd - 1.0).abs() < 1e-12);
            }
        }
        let (zz, _) = zscore_meg(&z).unwrap();
        for (a, b) in z.data().iter().zip(zz.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zscore_meg_two_stimuli_and_constant_cells() {
        // one cell with values 1 and 3 -> -1 and 1; one constant cell
        let times = vec![0.0];
        let data = vec![1.0, 7.0, 3.0, 7.0]; // stim0: [cell0=1, cell1=7], stim1: [3, 7]
        let resp = MegResponse::new(2, 2, times, data).unwrap();
        let (z, flagged) = zscore_meg(&resp).unwrap();
        assert_eq!(z.get(0, 0, 0), -1.0);
        assert_eq!(z.get(1, 0, 0), 1.0);
        assert_eq!(z.get(0, 1, 0), 0.0);
        assert_eq!(flagged, vec![(1, 0)]);
    }

    #[test]
    fn zscore_meg_needs_two_stimuli() {
        let resp = MegResponse::new(1, 1, vec![0.0], vec![1.0]).unwrap();
        assert!(matches!(
            zscore_meg(&resp),
            Err(DataError::TooFewStimuli { .. })
        ));
    }

    #[test]
    fn time_window_on_offset_grid() {
        // 30 Hz sampling with half-sample offset from -0.5 s: the window
        // [.08, .13) catches exactly the samples at .0833 and .1167
        let times: Vec<f64> = (0..106).map(|k| -0.5 + (k as f64 + 0.5) / 30.0).collect();
        let n = 2;
        let c = 1;
        let data = vec![0.0; n * c * times.len()];
        let resp = MegResponse::new(n, c, times.clone(), data).unwrap();
        let sel = select_time_windows(&resp, &[[0.08, 0.13]]).unwrap();
        assert_eq!(sel[0].time_indices.len(), 2);
        let t0 = times[sel[0].time_indices[0]];
        let t1 = times[sel[0].time_indices[1]];
        assert!((t0 - 0.0833333333).abs() < 1e-6);
        assert!((t1 - 0.1166666667).abs() < 1e-6);
    }

    #[test]
    fn time_window_errors() {
        let times: Vec<f64> = (0..10).map(|k| k as f64 * 0.1).collect();
        let resp = MegResponse::new(2, 1, times, vec![0.0; 20]).unwrap();
        assert!(matches!(
            select_time_windows(&resp, &[[5.0, 6.0]]),
            Err(DataError::WindowOutsideAxis { .. })
        ));
        assert!(matches!(
            select_time_windows(&resp, &[[0.31, 0.39]]),
            Err(DataError::EmptyWindow { .. })
        ));
        assert!(matches!(
            select_time_windows(&resp, &[[0.5, 0.5]]),
            Err(DataError::InvalidWindow { .. })
        ));
        let all = select_time_windows(&resp, &[[-1.0, 2.0]]).unwrap();
        assert_eq!(all[0].time_indices.len(), 10);
    }

    #[test]
    fn distance_from_v1_basics() {
        let geom = VoxelGeometry {
            coordinates: vec![[10.0, -90.0, 0.0], [10.0, -90.0, 30.0]],
            roi_labels: None,
            v1_reference: Some([10.0, -90.0, 0.0]),
        };
        let d = distance_from_v1(&geom).unwrap();
        assert_eq!(d[0], 0.0);
        assert!((d[1] - 30.0).abs() < 1e-12);
    }

    #[test]
    fn distance_invariant_under_translation() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let coords: Vec<[f64; 3]> = (0..8)
            .map(|_| [rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)])
            .collect();
        let v1 = [5.0, -80.0, 2.0];
        let shift = [13.5, -2.25, 40.0];
        let geom = VoxelGeometry {
            coordinates: coords.clone(),
            roi_labels: None,
            v1_reference: Some(v1),
        };
        let moved = VoxelGeometry {
            coordinates: coords
                .iter()
                .map(|c| [c[0] + shift[0], c[1] + shift[1], c[2] + shift[2]])
                .collect(),
            roi_labels: None,
            v1_reference: Some([v1[0] + shift[0], v1[1] + shift[1], v1[2] + shift[2]]),
        };
        let d0 = distance_from_v1(&geom).unwrap();
        let d1 = distance_from_v1(&moved).unwrap();
        for (a, b) in d0.iter().zip(&d1) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn roi_csv_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("rois.csv");
        let table = RoiTable {
            rois: vec![
                Roi {
                    name: "V1".into(),
                    members: vec![0, 1],
                    centroid: [1.0, 2.0, 3.0],
                    properties: BTreeMap::from([("expansion".into(), 0.5)]),
                },
                Roi {
                    name: "IFS".into(),
                    members: vec![2],
                    centroid: [-4.0, 5.5, 0.0],
                    properties: BTreeMap::new(),
                },
            ],
            property_names: vec!["expansion".into()],
        };
        write_roi_csv(&path, &table).unwrap();
        let back = read_roi_csv(&path).unwrap();
        assert_eq!(back.rois.len(), 2);
        assert_eq!(back.rois[0].members, vec![0, 1]);
        assert_eq!(back.rois[0].properties.get("expansion"), Some(&0.5));
        assert!(back.rois[1].properties.is_empty());
    }

    #[test]
    fn roi_overlap_is_rejected() {
        let table = RoiTable {
            rois: vec![
                Roi {
                    name: "a".into(),
                    members: vec![0, 1],
                    centroid: [0.0; 3],
                    properties: BTreeMap::new(),
                },
                Roi {
                    name: "b".into(),
                    members: vec![1],
                    centroid: [0.0; 3],
                    properties: BTreeMap::new(),
                },
            ],
            property_names: vec![],
        };
        assert!(matches!(
            table.validate(),
            Err(DataError::RoiOverlap { index: 1, .. })
        ));
    }

    fn write_minimal_dataset(dir: &Path, shuffle_layer: bool) -> Manifest {
        let ids: Vec<String> = (0..6).map(|i| format!("stim_{i}")).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let acts = Matrix::from_vec(6, 2, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let resp = Matrix::from_vec(6, 2, (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let (acts_file, act_ids) = if shuffle_layer {
            let perm = [3usize, 0, 5, 1, 4, 2];
            let shuffled = acts.select_rows(&perm);
            let ids_shuffled: Vec<String> = perm.iter().map(|&i| ids[i].clone()).collect();
            (shuffled, Some(ids_shuffled))
        } else {
            (acts.clone(), None)
        };
        write_matrix(&dir.join("acts.nmb"), &acts_file).unwrap();
        write_matrix(&dir.join("resp.nmb"), &resp).unwrap();
        let geom = VoxelGeometry {
            coordinates: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]],
            roi_labels: None,
            v1_reference: Some([0.0, 0.0, 0.0]),
        };
        std::fs::write(
            dir.join("geometry.json"),
            serde_json::to_string_pretty(&geom).unwrap(),
        )
        .unwrap();
        Manifest {
            schema: 1,
            stimulus_ids: ids,
            model_tag: Some("test".into()),
            activations: vec![ActivationEntry {
                depth: 0.0,
                checkpoint: 1.0,
                path: "acts.nmb".into(),
                stimulus_ids: act_ids,
            }],
            response: ResponseEntry {
                modality: Modality::Fmri,
                path: "resp.nmb".into(),
                stimulus_ids: None,
                geometry_path: Some("geometry.json".into()),
                time_path: None,
            },
            roi_table_path: None,
            property_map_paths: vec![],
        }
    }

    #[test]
    fn align_restores_shuffled_rows() {
        let dir = tempdir().unwrap();
        let straight = write_minimal_dataset(dir.path(), false);
        let aligned_straight = align_stimuli(&straight, dir.path()).unwrap();

        let dir2 = tempdir().unwrap();
        let shuffled = write_minimal_dataset(dir2.path(), true);
        let aligned_shuffled = align_stimuli(&shuffled, dir2.path()).unwrap();

        let a = &aligned_straight.checkpoints[0].layers.layer(0).activations;
        let b = &aligned_shuffled.checkpoints[0].layers.layer(0).activations;
        assert_eq!(a, b);
    }

    #[test]
    fn align_is_idempotent() {
        let dir = tempdir().unwrap();
        let manifest = write_minimal_dataset(dir.path(), true);
        let once = align_stimuli(&manifest, dir.path()).unwrap();
        // Write the aligned matrix back out in manifest order and re-align.
        write_matrix(
            &dir.path().join("acts.nmb"),
            &once.checkpoints[0].layers.layer(0).activations,
        )
        .unwrap();
        let mut manifest2 = manifest.clone();
        manifest2.activations[0].stimulus_ids = Some(manifest2.stimulus_ids.clone());
        let twice = align_stimuli(&manifest2, dir.path()).unwrap();
        assert_eq!(
            once.checkpoints[0].layers.layer(0).activations,
            twice.checkpoints[0].layers.layer(0).activations
        );
    }

    #[test]
    fn align_reports_missing_stimuli_by_id() {
        let dir = tempdir().unwrap();
        let mut manifest = write_minimal_dataset(dir.path(), true);
        if let Some(ids) = &mut manifest.activations[0].stimulus_ids {
            ids[0] = "rogue".into(); // replaces stim_3
        }
        let err = align_stimuli(&manifest, dir.path()).unwrap_err();
        match err {
            DataError::StimulusMismatch { missing, extra, .. } => {
                assert_eq!(missing, vec!["stim_3".to_string()]);
                assert_eq!(extra, vec!["rogue".to_string()]);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn align_reports_disjoint_id_sets() {
        let dir = tempdir().unwrap();
        let mut manifest = write_minimal_dataset(dir.path(), true);
        manifest.activations[0].stimulus_ids = Some(
            (0..6).map(|i| format!("other_{i}")).collect(),
        );
        let err = align_stimuli(&manifest, dir.path()).unwrap_err();
        match err {
            DataError::StimulusMismatch { missing, extra, .. } => {
                assert_eq!(missing.len(), 6);
                assert_eq!(extra.len(), 6);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn align_rejects_duplicate_ids() {
        let dir = tempdir().unwrap();
        let mut manifest = write_minimal_dataset(dir.path(), true);
        if let Some(ids) = &mut manifest.activations[0].stimulus_ids {
            ids[1] = ids[0].clone();
        }
        assert!(matches!(
            align_stimuli(&manifest, dir.path()),
            Err(DataError::DuplicateStimulus { .. })
        ));
    }

    #[test]
    fn manifest_validation_catches_schema_and_duplicates() {
        let dir = tempdir().unwrap();
        let mut manifest = write_minimal_dataset(dir.path(), false);
        manifest.schema = 2;
        assert!(matches!(
            manifest.validate(),
            Err(DataError::SchemaVersion { found: 2, .. })
        ));
        manifest.schema = 1;
        manifest.stimulus_ids[1] = manifest.stimulus_ids[0].clone();
        assert!(matches!(
            manifest.validate(),
            Err(DataError::DuplicateStimulus { .. })
        ));
    }
}
