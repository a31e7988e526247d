//! Cross-validated ridge regression from activations to brain targets.
//!
//! The solver decomposes the design matrix once and reuses that SVD across
//! the whole regularization grid; with a thin SVD the same path covers both
//! the primal (n >= d) and the dual (d > n) regime. Model selection runs
//! per outer-train split, either by closed-form leave-one-out GCV or by an
//! inner k-fold, so test rows never touch preprocessing or fitting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numeric::{
    center_standardize, pearson, thin_svd, Matrix, NumericError, StandardizeMode, SvdFactors,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RidgeError {
    #[error("invalid lambda grid: {0}")]
    InvalidGrid(String),
    #[error("invalid fold plan: {0}")]
    InvalidFolds(String),
    #[error("fold {fold} has {got} test stimuli, need at least {min}")]
    FoldTooSmall { fold: usize, got: usize, min: usize },
    #[error("all target columns are constant")]
    AllConstantTargets,
    #[error("row mismatch: X has {x_rows} rows, Y has {y_rows}")]
    RowMismatch { x_rows: usize, y_rows: usize },
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

// ---------------------------------------------------------------------------
// lambda grid
// ---------------------------------------------------------------------------

/// Ascending grid of ridge regularization strengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaGrid {
    values: Vec<f64>,
}

impl LambdaGrid {
    /// Ten logarithmically spaced values over [1e0, 1e8] inclusive.
    pub fn default_grid() -> Self {
        let values = (0..10).map(|i| 10f64.powf(8.0 * i as f64 / 9.0)).collect();
        LambdaGrid { values }
    }

    pub fn new(values: Vec<f64>) -> Result<Self, RidgeError> {
        if values.is_empty() {
            return Err(RidgeError::InvalidGrid("empty grid".into()));
        }
        for w in values.windows(2) {
            if w[0] >= w[1] {
                return Err(RidgeError::InvalidGrid("values must be ascending".into()));
            }
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(RidgeError::InvalidGrid(
                "values must be finite and nonnegative".into(),
            ));
        }
        Ok(LambdaGrid { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Default for LambdaGrid {
    fn default() -> Self {
        Self::default_grid()
    }
}

// ---------------------------------------------------------------------------
// fold plan
// ---------------------------------------------------------------------------

/// Assignment of stimuli to cross-validation folds.
///
/// Construction: Fisher-Yates shuffle of the stimulus order driven by a
/// seeded ChaCha stream, then contiguous blocks; the first `n % k` folds
/// take the extra stimulus. The seed is recorded so every report can state
/// exactly how the data were split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    n_splits: usize,
    assignment: Vec<usize>,
    seed: u64,
}

impl FoldPlan {
    pub fn new(n_stimuli: usize, n_splits: usize, seed: u64) -> Result<Self, RidgeError> {
        if n_splits < 2 {
            return Err(RidgeError::InvalidFolds(format!(
                "need at least 2 splits, got {n_splits}"
            )));
        }
        if n_stimuli < n_splits {
            return Err(RidgeError::InvalidFolds(format!(
                "{n_stimuli} stimuli cannot fill {n_splits} splits"
            )));
        }
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n_stimuli).collect();
        for i in (1..n_stimuli).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        let base = n_stimuli / n_splits;
        let extra = n_stimuli % n_splits;
        let mut assignment = vec![0usize; n_stimuli];
        let mut pos = 0;
        for fold in 0..n_splits {
            let size = base + usize::from(fold < extra);
            for &stim in &order[pos..pos + size] {
                assignment[stim] = fold;
            }
            pos += size;
        }
        Ok(FoldPlan {
            n_splits,
            assignment,
            seed,
        })
    }

    pub fn from_assignment(
        assignment: Vec<usize>,
        n_splits: usize,
        seed: u64,
    ) -> Result<Self, RidgeError> {
        let mut sizes = vec![0usize; n_splits];
        for &f in &assignment {
            if f >= n_splits {
                return Err(RidgeError::InvalidFolds(format!("fold id {f} out of range")));
            }
            sizes[f] += 1;
        }
        let (min, max) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
        if *min == 0 || max - min > 1 {
            return Err(RidgeError::InvalidFolds(
                "fold sizes must differ by at most 1".into(),
            ));
        }
        Ok(FoldPlan {
            n_splits,
            assignment,
            seed,
        })
    }

    pub fn n_splits(&self) -> usize {
        self.n_splits
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&i| self.assignment[i] != fold)
            .collect()
    }

    /// The plan that assigns permuted data the same way: row `i` of the
    /// permuted dataset (`old index perm[i]`) keeps its original fold.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, RidgeError> {
        if perm.len() != self.assignment.len() {
            return Err(RidgeError::InvalidFolds("permutation length mismatch".into()));
        }
        let assignment = perm.iter().map(|&old| self.assignment[old]).collect();
        Ok(FoldPlan {
            n_splits: self.n_splits,
            assignment,
            seed: self.seed,
        })
    }
}

// ---------------------------------------------------------------------------
// solver
// ---------------------------------------------------------------------------

/// One SVD of a fixed design matrix, reusable across every lambda.
#[derive(Debug, Clone)]
pub struct RidgeSolver {
    svd: SvdFactors,
    n_rows: usize,
    n_cols: usize,
}

impl RidgeSolver {
    pub fn new(x: &Matrix) -> Result<Self, RidgeError> {
        let svd = thin_svd(x)?;
        Ok(RidgeSolver {
            svd,
            n_rows: x.rows(),
            n_cols: x.cols(),
        })
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.svd.s
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    fn rank_cutoff(&self) -> f64 {
        let smax = self.svd.s.first().copied().unwrap_or(0.0);
        smax * f64::EPSILON * self.n_rows.max(self.n_cols) as f64
    }

    /// Projection of the targets onto the left singular basis, `U^T Y`.
    pub fn project_targets(&self, y: &Matrix) -> Result<Matrix, RidgeError> {
        if y.rows() != self.n_rows {
            return Err(RidgeError::RowMismatch {
                x_rows: self.n_rows,
                y_rows: y.rows(),
            });
        }
        Ok(self.svd.u.transpose().matmul(y)?)
    }

    /// Weights for one lambda given precomputed `U^T Y`.
    ///
    /// `lambda == 0` with rank-deficient X falls back to the minimum-norm
    /// solution (zero singular values dropped); the flag reports it.
    pub fn solve_projected(&self, uty: &Matrix, lambda: f64) -> (Matrix, bool) {
        let cutoff = self.rank_cutoff();
        let mut min_norm = false;
        let filters: Vec<f64> = self
            .svd
            .s
            .iter()
            .map(|&s| {
                if s <= cutoff {
                    if lambda == 0.0 {
                        min_norm = true;
                    }
                    0.0
                } else if lambda == 0.0 {
                    1.0 / s
                } else {
                    s / (s * s + lambda)
                }
            })
            .collect();
        let r = filters.len();
        let m = uty.cols();
        let mut scaled = Matrix::zeros(r, m);
        for i in 0..r {
            for j in 0..m {
                scaled.set(i, j, filters[i] * uty.get(i, j));
            }
        }
        let w = self
            .svd
            .vt
            .transpose()
            .matmul(&scaled)
            .expect("factor shapes agree");
        (w, min_norm)
    }

    pub fn solve(&self, y: &Matrix, lambda: f64) -> Result<(Matrix, bool), RidgeError> {
        let uty = self.project_targets(y)?;
        Ok(self.solve_projected(&uty, lambda))
    }
}

/// Column means removed from X and Y before fitting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Preprocessing {
    pub x_means: Vec<f64>,
    pub y_means: Vec<f64>,
}

/// A fitted ridge map.
#[derive(Debug, Clone)]
pub struct RidgeFit {
    /// d x m weight matrix.
    pub weights: Matrix,
    pub lambda: f64,
    /// Present when the fit was made on centered data.
    pub preprocessing: Option<Preprocessing>,
    /// True when lambda = 0 met a rank-deficient design and the
    /// minimum-norm solution was returned.
    pub min_norm: bool,
}

/// Ridge fit of `Y ~ X W` at one regularization strength, on the matrices
/// exactly as given (no centering; the encoding pipeline centers per fold
/// and records the means in [`RidgeFit::preprocessing`]).
pub fn fit_ridge(x: &Matrix, y: &Matrix, lambda: f64) -> Result<RidgeFit, RidgeError> {
    if x.rows() != y.rows() {
        return Err(RidgeError::RowMismatch {
            x_rows: x.rows(),
            y_rows: y.rows(),
        });
    }
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(RidgeError::InvalidGrid(format!("bad lambda {lambda}")));
    }
    y.check_finite()?;
    let solver = RidgeSolver::new(x)?;
    let (weights, min_norm) = solver.solve(y, lambda)?;
    Ok(RidgeFit {
        weights,
        lambda,
        preprocessing: None,
        min_norm,
    })
}

/// Apply a fit to new rows, undoing the stored preprocessing.
pub fn predict(fit: &RidgeFit, x_new: &Matrix) -> Result<Matrix, RidgeError> {
    match &fit.preprocessing {
        None => Ok(x_new.matmul(&fit.weights)?),
        Some(pre) => {
            let mut xc = x_new.clone();
            for r in 0..xc.rows() {
                for c in 0..xc.cols() {
                    let v = xc.get(r, c) - pre.x_means[c];
                    xc.set(r, c, v);
                }
            }
            let mut pred = xc.matmul(&fit.weights)?;
            for r in 0..pred.rows() {
                for c in 0..pred.cols() {
                    let v = pred.get(r, c) + pre.y_means[c];
                    pred.set(r, c, v);
                }
            }
            Ok(pred)
        }
    }
}

// ---------------------------------------------------------------------------
// lambda selection
// ---------------------------------------------------------------------------

/// How lambda is chosen on each training split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum LambdaMode {
    /// Closed-form leave-one-out generalized cross-validation.
    Gcv,
    /// Inner k-fold cross-validation on the training split.
    Kfold { k: usize },
}

pub(crate) fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the inner fold plan of one outer fold.
fn inner_seed(seed: u64, outer_fold: usize) -> u64 {
    splitmix64(seed ^ splitmix64(outer_fold as u64 + 1))
}

fn all_columns_constant(y: &Matrix) -> bool {
    (0..y.cols()).all(|c| (1..y.rows()).all(|r| y.get(r, c) == y.get(0, c)))
}

/// GCV error per lambda: `sum_j ||(I - H) y_j||^2 / (n - tr H)^2` with
/// `H = U diag(s^2/(s^2+lambda)) U^T` on the centered system.
fn gcv_errors(solver: &RidgeSolver, yc: &Matrix, grid: &LambdaGrid) -> Result<Vec<Vec<f64>>, RidgeError> {
    let uty = solver.project_targets(yc)?;
    let n = solver.n_rows() as f64;
    let m = yc.cols();
    let y_sq: Vec<f64> = (0..m)
        .map(|j| (0..yc.rows()).map(|r| yc.get(r, j) * yc.get(r, j)).sum())
        .collect();
    let mut out = Vec::with_capacity(grid.values().len());
    for &lambda in grid.values() {
        let d: Vec<f64> = solver
            .singular_values()
            .iter()
            .map(|&s| {
                if s == 0.0 {
                    0.0
                } else {
                    s * s / (s * s + lambda)
                }
            })
            .collect();
        let trace: f64 = d.iter().sum();
        let denom = (n - trace) * (n - trace);
        let mut per_target = vec![f64::INFINITY; m];
        if denom > 0.0 {
            for (j, pt) in per_target.iter_mut().enumerate() {
                let mut rss = y_sq[j];
                for (i, &di) in d.iter().enumerate() {
                    let z = uty.get(i, j);
                    rss -= (2.0 * di - di * di) * z * z;
                }
                *pt = rss.max(0.0) / denom;
            }
        }
        out.push(per_target);
    }
    Ok(out)
}

/// Validation mean squared error per lambda per target from an inner k-fold
/// on the given training split. Each inner split is centered on its own
/// training rows only.
fn kfold_errors(
    x: &Matrix,
    y: &Matrix,
    grid: &LambdaGrid,
    k: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, RidgeError> {
    let n = x.rows();
    let plan = FoldPlan::new(n, k, seed)?;
    let m = y.cols();
    let n_lambdas = grid.values().len();
    let mut sse = vec![vec![0.0f64; m]; n_lambdas];
    let mut count = 0usize;
    for fold in 0..k {
        let tr = plan.train_indices(fold);
        let va = plan.test_indices(fold);
        if tr.len() < 2 {
            return Err(RidgeError::InvalidFolds(format!(
                "inner fold {fold} leaves {} training rows",
                tr.len()
            )));
        }
        let xs = center_standardize(&x.select_rows(&tr), StandardizeMode::Center)?;
        let ys = center_standardize(&y.select_rows(&tr), StandardizeMode::Center)?;
        let solver = RidgeSolver::new(&xs.matrix)?;
        let uty = solver.project_targets(&ys.matrix)?;
        let x_va = x.select_rows(&va);
        let y_va = y.select_rows(&va);
        for (li, &lambda) in grid.values().iter().enumerate() {
            let (w, _) = solver.solve_projected(&uty, lambda);
            for (row_out, &row_in) in va.iter().enumerate() {
                let _ = row_in;
                let xrow = x_va.row(row_out);
                for j in 0..m {
                    let mut pred = ys.means[j];
                    for (c, &xv) in xrow.iter().enumerate() {
                        pred += (xv - xs.means[c]) * w.get(c, j);
                    }
                    let resid = y_va.get(row_out, j) - pred;
                    sse[li][j] += resid * resid;
                }
            }
        }
        count += va.len();
    }
    let denom = count as f64;
    for per_target in sse.iter_mut() {
        for v in per_target.iter_mut() {
            *v /= denom;
        }
    }
    Ok(sse)
}

fn errors_for_mode(
    x: &Matrix,
    y: &Matrix,
    grid: &LambdaGrid,
    mode: LambdaMode,
    seed: u64,
) -> Result<Vec<Vec<f64>>, RidgeError> {
    if all_columns_constant(y) {
        return Err(RidgeError::AllConstantTargets);
    }
    match mode {
        LambdaMode::Gcv => {
            let xs = center_standardize(x, StandardizeMode::Center)?;
            let ys = center_standardize(y, StandardizeMode::Center)?;
            let solver = RidgeSolver::new(&xs.matrix)?;
            gcv_errors(&solver, &ys.matrix, grid)
        }
        LambdaMode::Kfold { k } => kfold_errors(x, y, grid, k, seed),
    }
}

/// Pick the grid value with the smallest error; ties go to the larger
/// lambda (more regularization, and a deterministic outcome).
fn argmin_toward_larger(errors: &[f64], grid: &LambdaGrid) -> Result<f64, RidgeError> {
    let mut best: Option<(f64, f64)> = None;
    for (&lambda, &err) in grid.values().iter().zip(errors) {
        if !err.is_finite() {
            continue;
        }
        best = match best {
            None => Some((lambda, err)),
            Some((_, e)) if err <= e => Some((lambda, err)),
            keep => keep,
        };
    }
    best.map(|(l, _)| l)
        .ok_or_else(|| RidgeError::InvalidGrid("no finite validation error on grid".into()))
}

/// Shared-lambda selection on a training split: the grid value whose mean
/// validation error across targets is smallest.
pub fn select_lambda(
    x: &Matrix,
    y: &Matrix,
    grid: &LambdaGrid,
    mode: LambdaMode,
    seed: u64,
) -> Result<f64, RidgeError> {
    let errors = errors_for_mode(x, y, grid, mode, seed)?;
    let m = y.cols() as f64;
    let mean_errors: Vec<f64> = errors
        .iter()
        .map(|per_target| per_target.iter().sum::<f64>() / m)
        .collect();
    argmin_toward_larger(&mean_errors, grid)
}

/// Per-target variant of [`select_lambda`].
pub fn select_lambda_per_target(
    x: &Matrix,
    y: &Matrix,
    grid: &LambdaGrid,
    mode: LambdaMode,
    seed: u64,
) -> Result<Vec<f64>, RidgeError> {
    let errors = errors_for_mode(x, y, grid, mode, seed)?;
    (0..y.cols())
        .map(|j| {
            let per_lambda: Vec<f64> = errors.iter().map(|e| e[j]).collect();
            argmin_toward_larger(&per_lambda, grid)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// encode
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EncodeOptions {
    pub lambda_mode: LambdaMode,
    /// Select one lambda per target instead of a shared one.
    pub per_target_lambda: bool,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions {
            lambda_mode: LambdaMode::Gcv,
            per_target_lambda: false,
        }
    }
}

/// Minimum test stimuli per fold for a defined correlation.
pub const MIN_TEST_STIMULI: usize = 3;

/// Per-target cross-validated encoding scores.
#[derive(Debug, Clone)]
pub struct EncodingResult {
    /// Mean over folds of the per-fold correlations; `None` where masked.
    pub per_target_r: Vec<Option<f64>>,
    /// `n_splits x m` per-fold correlations.
    pub per_fold_r: Vec<Vec<Option<f64>>>,
    /// Shared lambda chosen on each outer-train split.
    pub lambda_per_fold: Vec<f64>,
    /// Per-fold per-target lambdas when per-target selection is on.
    pub lambda_per_fold_per_target: Option<Vec<Vec<f64>>>,
    /// Targets excluded as constant / undefined in at least one fold.
    pub masked: Vec<bool>,
    pub n_stimuli: usize,
    pub fold_seed: u64,
}

impl EncodingResult {
    pub fn n_targets(&self) -> usize {
        self.masked.len()
    }

    /// Mean score over unmasked targets.
    pub fn mean_r(&self) -> Option<f64> {
        let vals: Vec<f64> = self.per_target_r.iter().filter_map(|v| *v).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }

    pub fn n_masked(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }
}

struct FoldState {
    train: Vec<usize>,
    test: Vec<usize>,
    x_means: Vec<f64>,
    solver: RidgeSolver,
    /// Centered test design (test rows minus train means).
    x_test_centered: Matrix,
    inner_seed: u64,
}

/// Reusable encoding machinery for a fixed design matrix and fold plan.
///
/// Building the plan runs one SVD per fold; [`EncodePlan::encode`] can then
/// score any number of target matrices against the same activations, which
/// is what the temporal profiles need (one design, many time slices).
pub struct EncodePlan<'a> {
    x: &'a Matrix,
    plan: &'a FoldPlan,
    grid: &'a LambdaGrid,
    opts: EncodeOptions,
    folds: Vec<FoldState>,
}

impl<'a> EncodePlan<'a> {
    pub fn new(
        x: &'a Matrix,
        plan: &'a FoldPlan,
        grid: &'a LambdaGrid,
        opts: EncodeOptions,
    ) -> Result<Self, RidgeError> {
        if x.rows() != plan.len() {
            return Err(RidgeError::RowMismatch {
                x_rows: x.rows(),
                y_rows: plan.len(),
            });
        }
        x.check_finite()?;
        let folds = (0..plan.n_splits())
            .map(|fold| {
                let train = plan.train_indices(fold);
                let test = plan.test_indices(fold);
                if test.len() < MIN_TEST_STIMULI {
                    return Err(RidgeError::FoldTooSmall {
                        fold,
                        got: test.len(),
                        min: MIN_TEST_STIMULI,
                    });
                }
                let xs = center_standardize(&x.select_rows(&train), StandardizeMode::Center)?;
                let solver = RidgeSolver::new(&xs.matrix)?;
                let mut x_test_centered = x.select_rows(&test);
                for r in 0..x_test_centered.rows() {
                    for c in 0..x_test_centered.cols() {
                        let v = x_test_centered.get(r, c) - xs.means[c];
                        x_test_centered.set(r, c, v);
                    }
                }
                Ok(FoldState {
                    train,
                    test,
                    x_means: xs.means,
                    solver,
                    x_test_centered,
                    inner_seed: inner_seed(plan.seed(), fold),
                })
            })
            .collect::<Result<Vec<_>, RidgeError>>()?;
        Ok(EncodePlan {
            x,
            plan,
            grid,
            opts,
            folds,
        })
    }

    /// Columns that can never produce a defined correlation: non-finite
    /// entries or constant over all stimuli.
    fn premask(y: &Matrix) -> Vec<bool> {
        (0..y.cols())
            .map(|c| {
                let mut constant = true;
                for r in 0..y.rows() {
                    let v = y.get(r, c);
                    if !v.is_finite() {
                        return true;
                    }
                    if v != y.get(0, c) {
                        constant = false;
                    }
                }
                constant
            })
            .collect()
    }

    fn encode_fold(
        &self,
        fold: &FoldState,
        y_kept: &Matrix,
    ) -> Result<(Vec<Option<f64>>, f64, Option<Vec<f64>>, Option<Preprocessing>), RidgeError> {
        let y_tr_raw = y_kept.select_rows(&fold.train);
        let ys = center_standardize(&y_tr_raw, StandardizeMode::Center)?;
        let m = y_kept.cols();

        let (lambda_shared, per_target_lambdas) = if self.opts.per_target_lambda {
            let lambdas = match self.opts.lambda_mode {
                LambdaMode::Gcv => {
                    let errors = gcv_errors(&fold.solver, &ys.matrix, self.grid)?;
                    (0..m)
                        .map(|j| {
                            let per_lambda: Vec<f64> = errors.iter().map(|e| e[j]).collect();
                            argmin_toward_larger(&per_lambda, self.grid)
                        })
                        .collect::<Result<Vec<f64>, _>>()?
                }
                LambdaMode::Kfold { k } => select_lambda_per_target(
                    &self.x.select_rows(&fold.train),
                    &y_tr_raw,
                    self.grid,
                    LambdaMode::Kfold { k },
                    fold.inner_seed,
                )?,
            };
            (f64::NAN, Some(lambdas))
        } else {
            let lambda = match self.opts.lambda_mode {
                LambdaMode::Gcv => {
                    if all_columns_constant(&y_tr_raw) {
                        return Err(RidgeError::AllConstantTargets);
                    }
                    let errors = gcv_errors(&fold.solver, &ys.matrix, self.grid)?;
                    let mean_errors: Vec<f64> = errors
                        .iter()
                        .map(|per_target| per_target.iter().sum::<f64>() / m as f64)
                        .collect();
                    argmin_toward_larger(&mean_errors, self.grid)?
                }
                LambdaMode::Kfold { k } => select_lambda(
                    &self.x.select_rows(&fold.train),
                    &y_tr_raw,
                    self.grid,
                    LambdaMode::Kfold { k },
                    fold.inner_seed,
                )?,
            };
            (lambda, None)
        };

        let uty = fold.solver.project_targets(&ys.matrix)?;
        let weights = match &per_target_lambdas {
            None => fold.solver.solve_projected(&uty, lambda_shared).0,
            Some(lambdas) => {
                // assemble per-target columns, deduplicating identical lambdas
                let mut w = Matrix::zeros(self.x.cols(), m);
                let mut uniq: Vec<f64> = lambdas.clone();
                uniq.sort_by(|a, b| a.total_cmp(b));
                uniq.dedup();
                for lu in uniq {
                    let (w_all, _) = fold.solver.solve_projected(&uty, lu);
                    for (j, &lj) in lambdas.iter().enumerate() {
                        if lj == lu {
                            for c in 0..w.rows() {
                                w.set(c, j, w_all.get(c, j));
                            }
                        }
                    }
                }
                w
            }
        };

        let mut pred = fold.x_test_centered.matmul(&weights)?;
        for r in 0..pred.rows() {
            for c in 0..pred.cols() {
                let v = pred.get(r, c) + ys.means[c];
                pred.set(r, c, v);
            }
        }
        let y_te = y_kept.select_rows(&fold.test);
        let rs: Vec<Option<f64>> = (0..m)
            .into_par_iter()
            .map(|j| {
                let pj = pred.col(j);
                let yj = y_te.col(j);
                match pearson(&pj, &yj) {
                    Ok(r) => Some(r),
                    Err(NumericError::UndefinedCorrelation(_)) => None,
                    Err(_) => None,
                }
            })
            .collect();
        let pre = Preprocessing {
            x_means: fold.x_means.clone(),
            y_means: ys.means.clone(),
        };
        Ok((rs, lambda_shared, per_target_lambdas, Some(pre)))
    }

    /// Cross-validated per-target encoding of one target matrix.
    pub fn encode(&self, y: &Matrix) -> Result<EncodingResult, RidgeError> {
        if y.rows() != self.x.rows() {
            return Err(RidgeError::RowMismatch {
                x_rows: self.x.rows(),
                y_rows: y.rows(),
            });
        }
        let m_all = y.cols();
        let premasked = Self::premask(y);
        if premasked.iter().all(|&m| m) {
            return Err(RidgeError::AllConstantTargets);
        }
        let kept: Vec<usize> = (0..m_all).filter(|&j| !premasked[j]).collect();
        let y_kept = y.select_cols(&kept);

        let fold_outputs: Vec<_> = self
            .folds
            .par_iter()
            .map(|fold| self.encode_fold(fold, &y_kept))
            .collect::<Result<Vec<_>, _>>()?;

        let k = self.plan.n_splits();
        let mut per_fold_r = vec![vec![None; m_all]; k];
        let mut lambda_per_fold = Vec::with_capacity(k);
        let mut lambda_ptl: Option<Vec<Vec<f64>>> = if self.opts.per_target_lambda {
            Some(Vec::with_capacity(k))
        } else {
            None
        };
        for (f, (rs, lambda, per_target, _)) in fold_outputs.into_iter().enumerate() {
            for (slot, &j) in kept.iter().enumerate() {
                per_fold_r[f][j] = rs[slot];
            }
            lambda_per_fold.push(lambda);
            if let (Some(all), Some(ls)) = (lambda_ptl.as_mut(), per_target) {
                // scatter back to full target indexing
                let mut full = vec![f64::NAN; m_all];
                for (slot, &j) in kept.iter().enumerate() {
                    full[j] = ls[slot];
                }
                all.push(full);
            }
        }

        let mut masked = premasked;
        let mut per_target_r = vec![None; m_all];
        for j in 0..m_all {
            if masked[j] {
                continue;
            }
            if (0..k).any(|f| per_fold_r[f][j].is_none()) {
                masked[j] = true;
                continue;
            }
            let sum: f64 = (0..k).map(|f| per_fold_r[f][j].unwrap()).sum();
            per_target_r[j] = Some(sum / k as f64);
        }

        Ok(EncodingResult {
            per_target_r,
            per_fold_r,
            lambda_per_fold,
            lambda_per_fold_per_target: lambda_ptl,
            masked,
            n_stimuli: self.x.rows(),
            fold_seed: self.plan.seed(),
        })
    }

    /// The fitted map of one outer fold, for inspection and leakage tests.
    pub fn fit_fold(&self, fold_idx: usize, y: &Matrix) -> Result<RidgeFit, RidgeError> {
        let fold = &self.folds[fold_idx];
        let premasked = Self::premask(y);
        let kept: Vec<usize> = (0..y.cols()).filter(|&j| !premasked[j]).collect();
        let y_kept = y.select_cols(&kept);
        let y_tr_raw = y_kept.select_rows(&fold.train);
        let ys = center_standardize(&y_tr_raw, StandardizeMode::Center)?;
        let lambda = match self.opts.lambda_mode {
            LambdaMode::Gcv => {
                let errors = gcv_errors(&fold.solver, &ys.matrix, self.grid)?;
                let mean: Vec<f64> = errors
                    .iter()
                    .map(|e| e.iter().sum::<f64>() / e.len() as f64)
                    .collect();
                argmin_toward_larger(&mean, self.grid)?
            }
            LambdaMode::Kfold { k } => select_lambda(
                &self.x.select_rows(&fold.train),
                &y_tr_raw,
                self.grid,
                LambdaMode::Kfold { k },
                fold.inner_seed,
            )?,
        };
        let (weights, min_norm) = fold.solver.solve(&ys.matrix, lambda)?;
        Ok(RidgeFit {
            weights,
            lambda,
            preprocessing: Some(Preprocessing {
                x_means: fold.x_means.clone(),
                y_means: ys.means.clone(),
            }),
            min_norm,
        })
    }
}

/// Cross-validated encoding: per outer fold, preprocessing and lambda
/// selection happen on the training split only, then the fitted map is
/// scored on the held-out stimuli with a Pearson correlation per target.
pub fn encode(
    x: &Matrix,
    y: &Matrix,
    plan: &FoldPlan,
    grid: &LambdaGrid,
    opts: EncodeOptions,
) -> Result<EncodingResult, RidgeError> {
    EncodePlan::new(x, plan, grid, opts)?.encode(y)
}
