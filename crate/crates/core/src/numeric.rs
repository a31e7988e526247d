//! Deterministic dense linear-algebra and elementary-statistics kernels.
//!
//! Everything here is a pure function over immutable inputs with fixed
//! iteration order, so results are bit-identical across runs and across
//! thread counts. All arithmetic is 64-bit: the ridge regularization grid
//! spans eight orders of magnitude and the conditioning that implies rules
//! out single precision.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
    #[error("non-finite value at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
}

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericError> {
        if rows * cols != data.len() {
            return Err(NumericError::DimMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, NumericError> {
        if rows.is_empty() {
            return Err(NumericError::DegenerateInput("no rows".into()));
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(NumericError::DimMismatch("ragged rows".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix, NumericError> {
        if self.cols != other.rows {
            return Err(NumericError::DimMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let src = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += a * s;
                }
            }
        }
        Ok(out)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(idx.len(), self.cols);
        for (i, &r) in idx.iter().enumerate() {
            out.data[i * self.cols..(i + 1) * self.cols].copy_from_slice(self.row(r));
        }
        out
    }

    pub fn select_cols(&self, idx: &[usize]) -> Matrix {
        let mut out = Matrix::zeros(self.rows, idx.len());
        for r in 0..self.rows {
            for (j, &c) in idx.iter().enumerate() {
                out.data[r * idx.len() + j] = self.get(r, c);
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Error on the first non-finite entry, in row-major order.
    pub fn check_finite(&self) -> Result<(), NumericError> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(NumericError::NonFinite {
                    row: i / self.cols,
                    col: i % self.cols,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StandardizeMode {
    /// Subtract column means.
    Center,
    /// Subtract column means and divide by the population standard deviation.
    Zscore,
}

/// Output of [`center_standardize`]: the transformed matrix plus the
/// statistics needed to apply the same transform to new rows.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub matrix: Matrix,
    pub means: Vec<f64>,
    /// Per-column divisor; 1.0 in center mode and for constant columns.
    pub scales: Vec<f64>,
    /// Columns whose entries were all equal. They are centered and their
    /// scale is left at 1 rather than dividing by zero.
    pub constant_cols: Vec<bool>,
}

/// Column-wise centering / z-scoring.
///
/// Z-scoring uses the population standard deviation (divide by n), so two
/// values `1, 3` map to `-1, 1`.
pub fn center_standardize(m: &Matrix, mode: StandardizeMode) -> Result<Standardized, NumericError> {
    if m.rows() < 2 {
        return Err(NumericError::DegenerateInput(format!(
            "standardization needs at least 2 rows, got {}",
            m.rows()
        )));
    }
    m.check_finite()?;
    let n = m.rows();
    let d = m.cols();
    let mut means = vec![0.0; d];
    let mut constant = vec![true; d];
    for r in 0..n {
        let row = m.row(r);
        let first = m.row(0);
        for c in 0..d {
            means[c] += row[c];
            if row[c] != first[c] {
                constant[c] = false;
            }
        }
    }
    for mc in means.iter_mut() {
        *mc /= n as f64;
    }
    // Constant columns are centered exactly by their shared value, which
    // avoids the rounding residue of the accumulated mean.
    for c in 0..d {
        if constant[c] {
            means[c] = m.get(0, c);
        }
    }
    let mut out = Matrix::zeros(n, d);
    for r in 0..n {
        for c in 0..d {
            out.set(r, c, m.get(r, c) - means[c]);
        }
    }
    let mut scales = vec![1.0; d];
    if mode == StandardizeMode::Zscore {
        for c in 0..d {
            if constant[c] {
                continue;
            }
            let ss: f64 = (0..n).map(|r| out.get(r, c) * out.get(r, c)).sum();
            let sd = (ss / n as f64).sqrt();
            if sd > 0.0 {
                scales[c] = sd;
                for r in 0..n {
                    let v = out.get(r, c) / sd;
                    out.set(r, c, v);
                }
            }
        }
    }
    Ok(Standardized {
        matrix: out,
        means,
        scales,
        constant_cols: constant,
    })
}

/// Thin singular value decomposition `m = U . diag(S) . Vt`.
#[derive(Debug, Clone)]
pub struct SvdFactors {
    /// `rows x r`, orthonormal columns for nonzero singular values.
    pub u: Matrix,
    /// `r` singular values, descending, nonnegative.
    pub s: Vec<f64>,
    /// `r x cols`, orthonormal rows.
    pub vt: Matrix,
}

impl SvdFactors {
    pub fn rank_len(&self) -> usize {
        self.s.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let r = self.s.len();
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for j in 0..r {
                let v = us.get(i, j) * self.s[j];
                us.set(i, j, v);
            }
        }
        us.matmul(&self.vt).expect("factor shapes agree")
    }
}

/// Thin SVD by one-sided Jacobi rotations (Hestenes).
///
/// The sweep order over column pairs is fixed, which makes the
/// decomposition deterministic; downstream cross-validation results are
/// compared bit-for-bit and depend on that.
pub fn thin_svd(m: &Matrix) -> Result<SvdFactors, NumericError> {
    m.check_finite()?;
    if m.rows() == 0 || m.cols() == 0 {
        return Err(NumericError::DegenerateInput("empty matrix".into()));
    }
    let transposed = m.rows() < m.cols();
    let a = if transposed { m.transpose() } else { m.clone() };
    let n = a.rows();
    let d = a.cols();

    // Work on columns; `w` converges to U*diag(S), `v` accumulates rotations.
    let mut w: Vec<Vec<f64>> = (0..d).map(|j| a.col(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            e
        })
        .collect();

    let tol = f64::EPSILON;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..d.saturating_sub(1) {
            for q in (p + 1)..d {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..n {
                    let x = w[p][i];
                    let y = w[q][i];
                    app += x * x;
                    aqq += y * y;
                    apq += x * y;
                }
                if app == 0.0 || aqq == 0.0 || apq == 0.0 {
                    continue;
                }
                if apq.abs() <= tol * (app * aqq).sqrt() {
                    continue;
                }
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..n {
                    let x = w[p][i];
                    let y = w[q][i];
                    w[p][i] = c * x - s * y;
                    w[q][i] = s * x + c * y;
                }
                for i in 0..d {
                    let x = v[p][i];
                    let y = v[q][i];
                    v[p][i] = c * x - s * y;
                    v[q][i] = s * x + c * y;
                }
                rotated = true;
            }
        }
        if !rotated {
            break;
        }
    }

    let mut norms: Vec<f64> = w
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let mut u = Matrix::zeros(n, d);
    let mut vt = Matrix::zeros(d, d);
    let mut s = vec![0.0; d];
    for (k, &j) in order.iter().enumerate() {
        s[k] = norms[j];
        if norms[j] > 0.0 {
            for i in 0..n {
                u.set(i, k, w[j][i] / norms[j]);
            }
        }
        for i in 0..d {
            vt.set(k, i, v[j][i]);
        }
    }
    norms.clear();

    if transposed {
        // m = (a factors)^T: swap the roles of U and V.
        Ok(SvdFactors {
            u: vt.transpose(),
            s,
            vt: u.transpose(),
        })
    } else {
        Ok(SvdFactors { u, s, vt })
    }
}

/// Pearson correlation in `[-1, 1]`.
///
/// Constant inputs are an error, never a silent zero: silently-zero scores
/// would bias every average built on top of this.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, NumericError> {
    if x.len() != y.len() {
        return Err(NumericError::DimMismatch(format!(
            "pearson inputs differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(NumericError::DegenerateInput(format!(
            "pearson needs at least 3 samples, got {}",
            x.len()
        )));
    }
    for (i, v) in x.iter().chain(y.iter()).enumerate() {
        if !v.is_finite() {
            return Err(NumericError::NonFinite {
                row: i % x.len(),
                col: i / x.len(),
            });
        }
    }
    if x.windows(2).all(|w| w[0] == w[1]) {
        return Err(NumericError::UndefinedCorrelation(
            "first argument is constant".into(),
        ));
    }
    if y.windows(2).all(|w| w[0] == w[1]) {
        return Err(NumericError::UndefinedCorrelation(
            "second argument is constant".into(),
        ));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        let dx = a - mx;
        let dy = b - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(NumericError::UndefinedCorrelation(
            "zero variance after centering".into(),
        ));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn random_matrix(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Matrix {
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Matrix::from_vec(rows, cols, data).unwrap()
    }

    /// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi.
    /// Independent of the one-sided SVD path: works on m^T m directly.
    fn symmetric_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
        let n = a.len();
        for _ in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[p][q] * a[p][q];
                }
            }
            if off < 1e-30 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    // rotation angle zeroing a[p][q]
                    let phi = 0.5 * (2.0 * a[p][q]).atan2(a[p][p] - a[q][q]);
                    let c = phi.cos();
                    let s = phi.sin();
                    for k in 0..n {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp + s * akq;
                        a[k][q] = -s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk + s * aqk;
                        a[q][k] = -s * apk + c * aqk;
                    }
                }
            }
        }
        let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        eig.sort_by(|x, y| y.total_cmp(x));
        eig
    }

    #[test]
    fn center_two_rows_is_symmetric() {
        let m = Matrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        let s = center_standardize(&m, StandardizeMode::Center).unwrap();
        assert_eq!(s.matrix.get(0, 0), -1.0);
        assert_eq!(s.matrix.get(1, 0), 1.0);
        assert_eq!(s.means, vec![2.0]);
        assert_eq!(s.scales, vec![1.0]);
    }

    #[test]
    fn zscore_constant_column_is_flagged() {
        let m = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let s = center_standardize(&m, StandardizeMode::Zscore).unwrap();
        assert!(s.constant_cols[0]);
        assert_eq!(s.scales[0], 1.0);
        for r in 0..3 {
            assert_eq!(s.matrix.get(r, 0), 0.0);
        }
    }

    #[test]
    fn zscore_random_matrix_has_unit_stats() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let m = random_matrix(&mut rng, 10, 3);
        let s = center_standardize(&m, StandardizeMode::Zscore).unwrap();
        for c in 0..3 {
            // recompute mean and population SD directly
            let col = s.matrix.col(c);
            let mean = col.iter().sum::<f64>() / 10.0;
            let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 10.0).sqrt();
            assert!(mean.abs() < 1e-12, "column {c} mean {mean}");
            assert!((sd - 1.0).abs() < 1e-12, "column {c} sd {sd}");
        }
    }

    #[test]
    fn centering_is_idempotent() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let m = random_matrix(&mut rng, 12, 4);
        let once = center_standardize(&m, StandardizeMode::Center).unwrap();
        let twice = center_standardize(&once.matrix, StandardizeMode::Center).unwrap();
        for (a, b) in once.matrix.data().iter().zip(twice.matrix.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_rejects_single_row() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(
            center_standardize(&m, StandardizeMode::Center),
            Err(NumericError::DegenerateInput(_))
        ));
    }

    #[test]
    fn svd_identity() {
        let f = thin_svd(&Matrix::identity(3)).unwrap();
        for s in &f.s {
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn svd_diagonal_sorts_descending() {
        let m = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let f = thin_svd(&m).unwrap();
        assert!((f.s[0] - 4.0).abs() < 1e-12);
        assert!((f.s[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn svd_matches_gram_eigenvalues() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let m = random_matrix(&mut rng, 6, 4);
        let f = thin_svd(&m).unwrap();
        let gram = m.transpose().matmul(&m).unwrap();
        let g: Vec<Vec<f64>> = (0..4).map(|r| gram.row(r).to_vec()).collect();
        let eig = symmetric_eigenvalues(g);
        for (sv, ev) in f.s.iter().zip(&eig) {
            assert!((sv - ev.max(0.0).sqrt()).abs() < 1e-8, "{sv} vs {}", ev.sqrt());
        }
    }

    #[test]
    fn svd_reconstructs_input() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for &(r, c) in &[(5, 3), (3, 5), (20, 20), (40, 7), (200, 200)] {
            let m = random_matrix(&mut rng, r, c);
            let f = thin_svd(&m).unwrap();
            let back = f.reconstruct();
            let mut err = 0.0;
            for (a, b) in m.data().iter().zip(back.data()) {
                err += (a - b) * (a - b);
            }
            let rel = err.sqrt() / m.frobenius_norm();
            assert!(rel < 1e-8, "{r}x{c} relative error {rel}");
        }
    }

    #[test]
    fn svd_u_columns_orthonormal_for_full_rank() {
        let mut rng = ChaCha12Rng::seed_from_u64(19);
        let m = random_matrix(&mut rng, 9, 4);
        let f = thin_svd(&m).unwrap();
        let utu = f.u.transpose().matmul(&f.u).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((utu.get(i, j) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn svd_rejects_non_finite() {
        let m = Matrix::from_vec(2, 2, vec![1.0, f64::NAN, 0.0, 1.0]).unwrap();
        assert!(matches!(thin_svd(&m), Err(NumericError::NonFinite { .. })));
    }

    #[test]
    fn pearson_self_is_one() {
        let x = [0.3, -1.2, 4.5, 2.2];
        assert_eq!(pearson(&x, &x).unwrap(), 1.0);
    }

    #[test]
    fn pearson_reversed_is_minus_one() {
        let r = pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_hand_computed() {
        // covariance 4, both variances 5 => r = 0.8
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r - 0.8).abs() < 1e-12);
    }

    #[test]
    fn pearson_rejects_constant() {
        let err = pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]);
        assert!(matches!(err, Err(NumericError::UndefinedCorrelation(_))));
    }

    #[test]
    fn pearson_affine_invariance() {
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        for _ in 0..50 {
            let x: Vec<f64> = (0..20).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let y: Vec<f64> = (0..20).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let a = rng.gen_range(0.1..5.0);
            let b = rng.gen_range(-3.0..3.0);
            let xt: Vec<f64> = x.iter().map(|v| a * v + b).collect();
            let r0 = pearson(&x, &y).unwrap();
            let r1 = pearson(&xt, &y).unwrap();
            assert!((r0 - r1).abs() < 1e-12);
            let r2 = pearson(&y, &x).unwrap();
            assert!((r0 - r2).abs() < 1e-12, "symmetry");
        }
    }
}
