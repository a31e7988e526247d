//! Significance machinery: one-sample t-test, exact Wilcoxon signed-rank,
//! Benjamini-Hochberg FDR, and correlation p-values.
//!
//! The t distribution is evaluated through the regularized incomplete beta
//! function with a continued fraction converged to 1e-12; that precision is
//! needed because downstream analyses quote p-values as small as 1e-12.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("zero variance: {0}")]
    ZeroVariance(String),
    #[error("all differences are zero")]
    AllZeroDifferences,
    #[error("p-value out of range at index {index}: {value}")]
    PValueOutOfRange { index: usize, value: f64 },
}

// ---------------------------------------------------------------------------
// special functions
// ---------------------------------------------------------------------------

/// Natural log of the gamma function (Lanczos, g=7, 9 coefficients).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Continued fraction for the incomplete beta function (Lentz's method).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 500;
    const EPS: f64 = 1e-14;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b), converged to ~1e-12.
pub fn incomplete_beta(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let bt = (ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln()).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        bt * betacf(a, b, x) / a
    } else {
        1.0 - bt * betacf(b, a, 1.0 - x) / b
    }
}

/// Regularized upper incomplete gamma Q(a, x) via series / continued fraction.
fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    if x < 0.0 || a <= 0.0 {
        return f64::NAN;
    }
    if x == 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        // series for P(a, x)
        let mut ap = a;
        let mut sum = 1.0 / a;
        let mut del = sum;
        for _ in 0..500 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-15 {
                break;
            }
        }
        1.0 - sum * (-x + a * x.ln() - ln_gamma(a)).exp()
    } else {
        // continued fraction for Q(a, x)
        const FPMIN: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / FPMIN;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < FPMIN {
                d = FPMIN;
            }
            c = b + an / c;
            if c.abs() < FPMIN {
                c = FPMIN;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-15 {
                break;
            }
        }
        h * (-x + a * x.ln() - ln_gamma(a)).exp()
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    // erfc(x) = Q(1/2, x^2) for x >= 0
    let x = z / std::f64::consts::SQRT_2;
    let erfc_abs = regularized_gamma_q(0.5, x * x);
    if z >= 0.0 {
        1.0 - 0.5 * erfc_abs
    } else {
        0.5 * erfc_abs
    }
}

/// Two-sided p-value for a Student-t statistic with `df` degrees of freedom.
pub fn student_t_two_sided_p(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return 0.0;
    }
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    incomplete_beta(0.5 * df, 0.5, x).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// t-test
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub df: usize,
}

/// One-sample two-sided t-test of `mean(x) == mu0`, sample SD (n-1 divisor).
pub fn t_test_one_sample(x: &[f64], mu0: f64) -> Result<TTest, StatsError> {
    let n = x.len();
    if n < 2 {
        return Err(StatsError::DegenerateInput(format!(
            "t-test needs at least 2 samples, got {n}"
        )));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    if x.windows(2).all(|w| w[0] == w[1]) {
        return Err(StatsError::ZeroVariance("all samples equal".into()));
    }
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
    if var == 0.0 {
        return Err(StatsError::ZeroVariance("sample variance is zero".into()));
    }
    let se = (var / n as f64).sqrt();
    let t = (mean - mu0) / se;
    let p = student_t_two_sided_p(t, n as f64 - 1.0);
    Ok(TTest { t, p, df: n - 1 })
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct WilcoxonResult {
    /// min(W+, W-), the smaller of the signed rank sums.
    pub w: f64,
    /// Two-sided p-value.
    pub p: f64,
    /// Pairs used after dropping zero differences.
    pub n_used: usize,
    pub zeros_dropped: usize,
    /// True when the exact 2^n distribution was used.
    pub exact: bool,
}

/// Exact cutoff: up to here the full sign-assignment distribution is used,
/// beyond it the normal approximation with continuity correction.
pub const WILCOXON_EXACT_MAX_N: usize = 25;

/// Average ranks of |values|, doubled so ties stay integral.
fn doubled_ranks_of_abs(values: &[f64]) -> Vec<u64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| values[i].abs().total_cmp(&values[j].abs()).then(i.cmp(&j)));
    let mut doubled = vec![0u64; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[idx[end]].abs() == values[idx[start]].abs() {
            end += 1;
        }
        // average of ranks start+1 ..= end, doubled: (start+1 + end)
        let avg2 = (start + 1 + end) as u64;
        for &k in &idx[start..end] {
            doubled[k] = avg2;
        }
        start = end;
    }
    doubled
}

/// Two-sided Wilcoxon signed-rank test of paired samples.
///
/// Zero differences are dropped and counted. For `n_used <=`
/// [`WILCOXON_EXACT_MAX_N`] the p-value is exact over all 2^n sign
/// assignments (computed through the rank generating function); beyond that
/// a normal approximation with continuity and tie corrections is used.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::DegenerateInput(format!(
            "paired samples differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    let diffs: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    let zeros_dropped = x.len() - diffs.len();
    if diffs.is_empty() {
        return Err(StatsError::AllZeroDifferences);
    }
    let n = diffs.len();
    let ranks2 = doubled_ranks_of_abs(&diffs);
    let w_plus2: u64 = diffs
        .iter()
        .zip(&ranks2)
        .filter(|(d, _)| **d > 0.0)
        .map(|(_, r)| *r)
        .sum();
    let total2: u64 = ranks2.iter().sum();
    let w_minus2 = total2 - w_plus2;
    let w_min2 = w_plus2.min(w_minus2);
    let w = w_min2 as f64 / 2.0;

    if n <= WILCOXON_EXACT_MAX_N {
        // Distribution of W+ (doubled) over all 2^n equally likely sign
        // assignments, as the coefficients of prod_i (1 + z^{r_i}).
        let max_sum = total2 as usize;
        let mut counts = vec![0u64; max_sum + 1];
        counts[0] = 1;
        for &r in &ranks2 {
            let r = r as usize;
            for s in (r..=max_sum).rev() {
                counts[s] += counts[s - r];
            }
        }
        let le: u64 = counts[..=w_min2 as usize].iter().sum();
        let p = (2.0 * le as f64 / 2f64.powi(n as i32)).min(1.0);
        Ok(WilcoxonResult {
            w,
            p,
            n_used: n,
            zeros_dropped,
            exact: true,
        })
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0;
        // tie correction: sum over tie groups of (t^3 - t) / 48
        let mut sorted: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i + 1;
            while j < sorted.len() && sorted[j] == sorted[i] {
                j += 1;
            }
            let t = (j - i) as f64;
            if t > 1.0 {
                var -= (t * t * t - t) / 48.0;
            }
            i = j;
        }
        let sd = var.sqrt();
        if sd == 0.0 {
            return Err(StatsError::ZeroVariance(
                "wilcoxon variance is zero".into(),
            ));
        }
        let z = (w - mean + 0.5) / sd;
        let p = (2.0 * normal_cdf(z)).min(1.0);
        Ok(WilcoxonResult {
            w,
            p,
            n_used: n,
            zeros_dropped,
            exact: false,
        })
    }
}

// ---------------------------------------------------------------------------
// Benjamini-Hochberg
// ---------------------------------------------------------------------------

/// Raw and BH-adjusted p-values plus rejection masks per q-level.
#[derive(Debug, Clone)]
pub struct PValueSet {
    pub raw: Vec<f64>,
    pub adjusted: Vec<f64>,
    /// (q, mask) pairs for every level queried so far.
    pub rejected_at: Vec<(f64, Vec<bool>)>,
}

impl PValueSet {
    /// Step-up rejection mask at level `q` (equivalent to `adjusted <= q`).
    pub fn rejections(&self, q: f64) -> Vec<bool> {
        self.adjusted.iter().map(|&a| a <= q).collect()
    }

    pub fn mask_at(&self, q: f64) -> Option<&[bool]> {
        self.rejected_at
            .iter()
            .find(|(level, _)| *level == q)
            .map(|(_, m)| m.as_slice())
    }
}

/// Benjamini-Hochberg step-up FDR correction at level `q`.
///
/// Adjusted p-values are `min over j >= i of m * p_(j) / j`, capped at 1;
/// rejecting `adjusted <= q` reproduces the step-up rule exactly.
pub fn fdr_bh(p: &[f64], q: f64) -> Result<PValueSet, StatsError> {
    for (i, &v) in p.iter().enumerate() {
        if !(0.0..=1.0).contains(&v) || v.is_nan() {
            return Err(StatsError::PValueOutOfRange { index: i, value: v });
        }
    }
    let m = p.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p[i].total_cmp(&p[j]).then(i.cmp(&j)));
    let mut adjusted = vec![0.0; m];
    let mut running_min = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        let candidate = (p[i] * m as f64 / (rank + 1) as f64).min(1.0);
        running_min = running_min.min(candidate);
        adjusted[i] = running_min;
    }
    let mut set = PValueSet {
        raw: p.to_vec(),
        adjusted,
        rejected_at: Vec::new(),
    };
    let mask = set.rejections(q);
    set.rejected_at.push((q, mask));
    Ok(set)
}

// ---------------------------------------------------------------------------
// correlation p-value
// ---------------------------------------------------------------------------

/// Two-sided p-value of a Pearson correlation under the null of no
/// association: `t = r * sqrt((n-2) / (1-r^2))` with n-2 degrees of freedom.
///
/// `|r| >= 1` returns exactly 0 (degenerate, the caller flags it). Callers
/// are expected to supply n >= 3 so the t distribution has at least one
/// degree of freedom.
pub fn pearson_p(r: f64, n: usize) -> Result<f64, StatsError> {
    if n < 3 {
        return Err(StatsError::DegenerateInput(format!(
            "correlation p-value needs n >= 3, got {n}"
        )));
    }
    if !r.is_finite() || r.abs() > 1.0 {
        return Err(StatsError::DegenerateInput(format!(
            "correlation out of range: {r}"
        )));
    }
    if r.abs() >= 1.0 {
        return Ok(0.0);
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    Ok(student_t_two_sided_p(t, df))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    /// Student-t two-sided p by adaptive Simpson quadrature of the density.
    /// The normalization constant is built from the exact half-integer
    /// gamma recurrence, independent of the Lanczos approximation.
    pub fn t_two_sided_p_quadrature(t: f64, df: usize) -> f64 {
        fn gamma_ratio(df: usize) -> f64 {
            // r(v) = Gamma((v+1)/2) / Gamma(v/2); r(1) = 1/sqrt(pi)
            let mut r = 1.0 / std::f64::consts::PI.sqrt();
            for v in 2..=df {
                r = (v as f64 - 1.0) / 2.0 / r;
            }
            r
        }
        let dff = df as f64;
        let coef = gamma_ratio(df) / (dff * std::f64::consts::PI).sqrt();
        let density = move |x: f64| coef * (1.0 + x * x / dff).powf(-(dff + 1.0) / 2.0);
        fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn adaptive(
            f: &dyn Fn(f64) -> f64,
            a: f64,
            b: f64,
            whole: f64,
            eps: f64,
            depth: usize,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let left = simpson(f, a, m);
            let right = simpson(f, m, b);
            if depth == 0 || (left + right - whole).abs() < 15.0 * eps {
                left + right + (left + right - whole) / 15.0
            } else {
                adaptive(f, a, m, left, eps / 2.0, depth - 1)
                    + adaptive(f, m, b, right, eps / 2.0, depth - 1)
            }
        }
        let t = t.abs();
        let whole = simpson(&density, 0.0, t);
        let integral = adaptive(&density, 0.0, t, whole, 1e-13, 60);
        (1.0 - 2.0 * integral).clamp(0.0, 1.0)
    }

    #[test]
    fn t_test_symmetric_sample() {
        let r = t_test_one_sample(&[1.0, -1.0, 1.0, -1.0], 0.0).unwrap();
        assert_eq!(r.t, 0.0);
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn t_test_zero_sd_errors() {
        assert!(matches!(
            t_test_one_sample(&[1.0, 1.0, 1.0, 1.0], 0.0),
            Err(StatsError::ZeroVariance(_))
        ));
    }

    #[test]
    fn t_test_hand_computed_statistic() {
        let r = t_test_one_sample(&[2.0, 4.0, 6.0], 0.0).unwrap();
        // mean 4, sd 2, se 2/sqrt(3)
        assert!((r.t - 4.0 / (2.0 / 3f64.sqrt())).abs() < 1e-12);
        assert!((r.t - 3.4641016151).abs() < 1e-9);
        let oracle = t_two_sided_p_quadrature(r.t, 2);
        assert!((r.p - oracle).abs() < 1e-6, "{} vs {}", r.p, oracle);
    }

    #[test]
    fn t_cdf_matches_quadrature_over_df_range() {
        for df in [1usize, 2, 3, 5, 10, 30, 100] {
            for t in [0.2, 1.0, 2.5, 4.0] {
                let p = student_t_two_sided_p(t, df as f64);
                let oracle = t_two_sided_p_quadrature(t, df);
                assert!(
                    (p - oracle).abs() < 1e-8,
                    "df={df} t={t}: {p} vs {oracle}"
                );
            }
        }
    }

    #[test]
    fn wilcoxon_all_positive_small_sample() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [0.0; 5];
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(r.w, 0.0);
        assert!((r.p - 0.0625).abs() < 1e-15, "p = {}", r.p);
        assert!(r.exact);
    }

    #[test]
    fn wilcoxon_equal_samples_error() {
        let x = [1.0, 2.0, 3.0];
        assert!(matches!(
            wilcoxon_signed_rank(&x, &x),
            Err(StatsError::AllZeroDifferences)
        ));
    }

    #[test]
    fn wilcoxon_n4_floor() {
        // best attainable two-sided p with 4 subjects
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [0.0; 4];
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert!((r.p - 0.125).abs() < 1e-15);
    }

    /// Literal enumeration over all 2^n sign assignments.
    fn wilcoxon_enumeration_p(diffs: &[f64]) -> f64 {
        let n = diffs.len();
        let ranks2 = doubled_ranks_of_abs(diffs);
        let w_plus2: u64 = diffs
            .iter()
            .zip(&ranks2)
            .filter(|(d, _)| **d > 0.0)
            .map(|(_, r)| *r)
            .sum();
        let total2: u64 = ranks2.iter().sum();
        let w_min2 = w_plus2.min(total2 - w_plus2);
        let mut count_le = 0u64;
        for mask in 0u64..(1 << n) {
            let mut w2 = 0u64;
            for (i, r) in ranks2.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    w2 += r;
                }
            }
            let m = w2.min(total2 - w2);
            let _ = m;
            if w2 <= w_min2 {
                count_le += 1;
            }
        }
        (2.0 * count_le as f64 / 2f64.powi(n as i32)).min(1.0)
    }

    #[test]
    fn wilcoxon_matches_enumeration() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        for _ in 0..100 {
            let n = rng.gen_range(3..=12);
            let diffs: Vec<f64> = (0..n)
                .map(|_| {
                    let v: i32 = rng.gen_range(-5..=5);
                    if v == 0 {
                        1.0
                    } else {
                        v as f64
                    }
                })
                .collect();
            let x = diffs.clone();
            let y = vec![0.0; n];
            let got = wilcoxon_signed_rank(&x, &y).unwrap();
            let want = wilcoxon_enumeration_p(&diffs);
            assert!(
                (got.p - want).abs() < 1e-12,
                "diffs {diffs:?}: {} vs {want}",
                got.p
            );
        }
    }

    #[test]
    fn wilcoxon_drops_zero_differences() {
        let x = [1.0, 2.0, 3.0, 5.0];
        let y = [1.0, 0.0, 0.0, 0.0];
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(r.zeros_dropped, 1);
        assert_eq!(r.n_used, 3);
    }

    #[test]
    fn wilcoxon_large_n_uses_approximation() {
        let n = 30;
        let x: Vec<f64> = (0..n).map(|i| i as f64 + 1.0).collect();
        let y = vec![0.0; n];
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert!(!r.exact);
        assert!(r.p > 0.0 && r.p < 1e-4);
    }

    #[test]
    fn fdr_hand_computed_example() {
        // thresholds i*q/m: .0125 / .025 / .0375 / .05 -- all four rejected
        let set = fdr_bh(&[0.01, 0.02, 0.03, 0.04], 0.05).unwrap();
        let mask = set.mask_at(0.05).unwrap();
        assert!(mask.iter().all(|&b| b));
    }

    #[test]
    fn fdr_all_ones() {
        let set = fdr_bh(&[1.0, 1.0, 1.0], 0.05).unwrap();
        assert!(set.rejections(0.05).iter().all(|&b| !b));
        assert!(set.adjusted.iter().all(|&a| a == 1.0));
    }

    #[test]
    fn fdr_single_p_reduces_to_raw_threshold() {
        let set = fdr_bh(&[0.009], 0.01).unwrap();
        assert!(set.rejections(0.01)[0]);
    }

    #[test]
    fn fdr_rejects_bad_pvalues() {
        assert!(matches!(
            fdr_bh(&[0.5, 1.5], 0.05),
            Err(StatsError::PValueOutOfRange { index: 1, .. })
        ));
    }

    #[test]
    fn fdr_monotone_in_q_and_order_consistent() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..200 {
            let m = rng.gen_range(1..40);
            let p: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
            let set = fdr_bh(&p, 0.05).unwrap();
            for i in 0..m {
                assert!(set.adjusted[i] >= set.raw[i] - 1e-15);
            }
            // adjusted order consistent with raw order
            let mut idx: Vec<usize> = (0..m).collect();
            idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
            for w in idx.windows(2) {
                assert!(set.adjusted[w[0]] <= set.adjusted[w[1]] + 1e-15);
            }
            let q1 = rng.gen_range(0.0..0.5);
            let q2 = q1 + rng.gen_range(0.0..0.5);
            let r1 = set.rejections(q1);
            let r2 = set.rejections(q2);
            for (a, b) in r1.iter().zip(&r2) {
                assert!(!a || *b, "rejections not monotone in q");
            }
        }
    }

    #[test]
    fn pearson_p_zero_correlation() {
        assert_eq!(pearson_p(0.0, 10).unwrap(), 1.0);
        assert_eq!(pearson_p(0.0, 100).unwrap(), 1.0);
    }

    #[test]
    fn pearson_p_matches_quadrature() {
        let r = 0.8;
        let n = 30;
        let t = r * ((n as f64 - 2.0) / (1.0 - r * r)).sqrt();
        let want = t_two_sided_p_quadrature(t, n - 2);
        let got = pearson_p(r, n).unwrap();
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn pearson_p_degenerate_and_limit() {
        assert_eq!(pearson_p(1.0, 10).unwrap(), 0.0);
        assert_eq!(pearson_p(-1.0, 10).unwrap(), 0.0);
        let mut last = 1.0;
        for r in [0.0, 0.3, 0.6, 0.9, 0.99, 0.9999] {
            let p = pearson_p(r, 20).unwrap();
            assert!(p <= last + 1e-15, "p not monotone toward r=1");
            last = p;
        }
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-12);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-9);
        assert!((normal_cdf(-1.959963984540054) - 0.025).abs() < 1e-9);
    }
}
