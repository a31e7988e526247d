//! Resolved run configuration and the error-to-exit-code policy.
//!
//! Precedence: command-line flags beat the optional JSON config file, which
//! beats the built-in defaults. The resolved configuration is echoed into
//! every report. The thread count is deliberately not part of it: reports
//! must be byte-identical across thread counts, so execution details live
//! in `timing.json` instead.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use layerscore::data::DataError;
use layerscore::metrics::MetricsError;
use layerscore::ridge::{LambdaGrid, LambdaMode, RidgeError};
use layerscore::stats::StatsError;
use layerscore::synth::SynthError;

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration, manifest or input file: exit 2.
    Usage(String),
    /// Numerical or degenerate-data failure: exit 3.
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Metrics(m) => m.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<RidgeError> for CliError {
    fn from(e: RidgeError) -> Self {
        match e {
            RidgeError::InvalidGrid(_) | RidgeError::InvalidFolds(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::MissingV1 | MetricsError::InvalidLayers(_) => {
                CliError::Usage(e.to_string())
            }
            MetricsError::Ridge(r) => r.into(),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec(_) => CliError::Usage(e.to_string()),
            SynthError::Data(d) => d.into(),
            SynthError::Metrics(m) => m.into(),
        }
    }
}

pub fn io_usage(path: &Path, e: std::io::Error) -> CliError {
    CliError::Usage(format!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// resolved configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaModeName {
    Gcv,
    Kfold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    Voxel,
    Roi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FdrFamily {
    /// Correct across all targets of the analysis.
    Targets,
    /// Correct across regions after aggregation.
    Rois,
    /// No significance masking.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum RoiInclusion {
    /// Test each target, then require the mean adjusted p of a region's
    /// members to clear the threshold.
    TestThenAverage,
    /// Average each region's scores first, then test the regions.
    AverageThenTest,
}

/// The fully resolved analysis configuration, echoed into every report.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub manifests: Vec<String>,
    pub out_dir: String,
    pub lambda_grid: Vec<f64>,
    pub folds: usize,
    pub seed: u64,
    pub lambda_mode: LambdaModeName,
    pub kfold_k: usize,
    pub per_target_lambda: bool,
    pub level: Level,
    pub tmax_frac: f64,
    pub fdr_q: f64,
    pub fdr_family: FdrFamily,
    pub roi_inclusion: RoiInclusion,
}

impl RunConfig {
    pub fn lambda_grid(&self) -> Result<LambdaGrid, CliError> {
        Ok(LambdaGrid::new(self.lambda_grid.clone())?)
    }

    pub fn lambda_mode(&self) -> LambdaMode {
        match self.lambda_mode {
            LambdaModeName::Gcv => LambdaMode::Gcv,
            LambdaModeName::Kfold => LambdaMode::Kfold { k: self.kfold_k },
        }
    }

    pub fn encode_options(&self) -> layerscore::ridge::EncodeOptions {
        layerscore::ridge::EncodeOptions {
            lambda_mode: self.lambda_mode(),
            per_target_lambda: self.per_target_lambda,
        }
    }
}

/// Optional JSON config file; any present field overrides the default but
/// loses to an explicit flag.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub lambda_grid: Option<Vec<f64>>,
    pub folds: Option<usize>,
    pub seed: Option<u64>,
    pub lambda_mode: Option<LambdaModeName>,
    pub kfold_k: Option<usize>,
    pub per_target_lambda: Option<bool>,
    pub level: Option<Level>,
    pub tmax_frac: Option<f64>,
    pub fdr_q: Option<f64>,
    pub fdr_family: Option<FdrFamily>,
    pub roi_inclusion: Option<RoiInclusion>,
    pub threads: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_usage(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }
}

/// Shared analysis flags. Every option is optional here so that the
/// flag > config file > default precedence can be resolved explicitly.
#[derive(Debug, Clone, clap::Args)]
pub struct AnalysisArgs {
    /// Input dataset manifest (repeat for multi-checkpoint analyses).
    #[arg(long = "manifest", required = true)]
    pub manifests: Vec<PathBuf>,
    /// Output directory for reports, tables and figures.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Comma-separated ridge regularization grid (ascending).
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    /// Outer cross-validation splits.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Fold-shuffle seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Lambda selection on each training split.
    #[arg(long, value_enum)]
    pub lambda_mode: Option<LambdaModeName>,
    /// Inner splits when --lambda-mode kfold.
    #[arg(long)]
    pub kfold_k: Option<usize>,
    /// Select one lambda per target instead of a shared one.
    #[arg(long)]
    pub per_target_lambda: bool,
    /// Spatial-score granularity.
    #[arg(long, value_enum)]
    pub level: Option<Level>,
    /// Fraction of the peak that defines the T_max window.
    #[arg(long)]
    pub tmax_frac: Option<f64>,
    /// FDR level for significance masking.
    #[arg(long)]
    pub fdr_q: Option<f64>,
    /// Family the FDR correction runs over.
    #[arg(long, value_enum)]
    pub fdr_family: Option<FdrFamily>,
    /// How regions qualify for roi-level scores.
    #[arg(long, value_enum)]
    pub roi_inclusion: Option<RoiInclusion>,
    /// Worker threads (outputs are identical for any value).
    #[arg(long)]
    pub threads: Option<usize>,
}

pub struct Resolved {
    pub config: RunConfig,
    pub threads: usize,
}

impl AnalysisArgs {
    pub fn resolve(&self, command: &str) -> Result<Resolved, CliError> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let config = RunConfig {
            command: command.to_string(),
            manifests: self
                .manifests
                .iter()
                .map(|p| p.to_string_lossy().into_owned())
                .collect(),
            out_dir: self.out.to_string_lossy().into_owned(),
            lambda_grid: self
                .lambda_grid
                .clone()
                .or(file.lambda_grid)
                .unwrap_or_else(|| LambdaGrid::default_grid().values().to_vec()),
            folds: self.folds.or(file.folds).unwrap_or(5),
            seed: self.seed.or(file.seed).unwrap_or(0),
            lambda_mode: self
                .lambda_mode
                .or(file.lambda_mode)
                .unwrap_or(LambdaModeName::Gcv),
            kfold_k: self.kfold_k.or(file.kfold_k).unwrap_or(5),
            per_target_lambda: self.per_target_lambda
                || file.per_target_lambda.unwrap_or(false),
            level: self.level.or(file.level).unwrap_or(Level::Voxel),
            tmax_frac: self.tmax_frac.or(file.tmax_frac).unwrap_or(0.95),
            fdr_q: self.fdr_q.or(file.fdr_q).unwrap_or(0.01),
            fdr_family: self
                .fdr_family
                .or(file.fdr_family)
                .unwrap_or(FdrFamily::Targets),
            roi_inclusion: self
                .roi_inclusion
                .or(file.roi_inclusion)
                .unwrap_or(RoiInclusion::TestThenAverage),
        };
        if !(0.0 < config.tmax_frac && config.tmax_frac <= 1.0) {
            return Err(CliError::Usage(format!(
                "--tmax-frac must lie in (0, 1], got {}",
                config.tmax_frac
            )));
        }
        if !(0.0 < config.fdr_q && config.fdr_q <= 1.0) {
            return Err(CliError::Usage(format!(
                "--fdr-q must lie in (0, 1], got {}",
                config.fdr_q
            )));
        }
        if config.folds < 2 {
            return Err(CliError::Usage(format!(
                "--folds must be at least 2, got {}",
                config.folds
            )));
        }
        if config.kfold_k < 2 {
            return Err(CliError::Usage(format!(
                "--kfold-k must be at least 2, got {}",
                config.kfold_k
            )));
        }
        let threads = self.threads.or(file.threads).unwrap_or(1);
        if threads == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        Ok(Resolved { config, threads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(manifest: &str) -> AnalysisArgs {
        AnalysisArgs {
            manifests: vec![PathBuf::from(manifest)],
            out: PathBuf::from("/tmp/out"),
            config: None,
            lambda_grid: None,
            folds: None,
            seed: None,
            lambda_mode: None,
            kfold_k: None,
            per_target_lambda: false,
            level: None,
            tmax_frac: None,
            fdr_q: None,
            fdr_family: None,
            roi_inclusion: None,
            threads: None,
        }
    }

    #[test]
    fn defaults_resolve() {
        let r = args("m.json").resolve("encode").unwrap();
        assert_eq!(r.config.folds, 5);
        assert_eq!(r.config.seed, 0);
        assert_eq!(r.config.lambda_grid.len(), 10);
        assert_eq!(r.config.tmax_frac, 0.95);
        assert_eq!(r.config.fdr_q, 0.01);
        assert_eq!(r.threads, 1);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("cfg.json");
        std::fs::write(&cfg_path, r#"{"folds": 3, "seed": 9, "threads": 4}"#).unwrap();
        let mut a = args("m.json");
        a.config = Some(cfg_path);
        a.folds = Some(7);
        let r = a.resolve("encode").unwrap();
        assert_eq!(r.config.folds, 7, "flag beats file");
        assert_eq!(r.config.seed, 9, "file beats default");
        assert_eq!(r.threads, 4);
    }

    #[test]
    fn bad_values_are_usage_errors() {
        let mut a = args("m.json");
        a.tmax_frac = Some(1.5);
        assert!(matches!(a.resolve("scores"), Err(CliError::Usage(_))));
        let mut a = args("m.json");
        a.folds = Some(1);
        assert!(matches!(a.resolve("encode"), Err(CliError::Usage(_))));
    }
}
