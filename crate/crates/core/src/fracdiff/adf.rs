//! Augmented Dickey-Fuller test, constant term only.
//!
//! Regression: `Δx_t = α + β·x_{t−1} + Σ_{i=1..p} γ_i·Δx_{t−i} + ε_t`; the statistic is the
//! t-ratio of β. P-values come from MacKinnon's (1994) response surface for
//! one series with a constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIN_OBS: usize = 20;

// MacKinnon (1994), constant, N = 1.
const TAU_MAX: f64 = 2.74;
const TAU_MIN: f64 = -18.83;
const TAU_STAR: f64 = -1.61;
const SMALL_P: [f64; 3] = [2.1659, 1.4412, 0.038269];
const LARGE_P: [f64; 4] = [1.7339, 0.93202, -0.12745, -0.010368];
const P_FLOOR: f64 = 0.001;
const P_CEIL: f64 = 0.999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdfLags {
    /// Schwert's rule, `⌊12·(n/100)^{1/4}⌋`.
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdfResult {
    pub statistic: f64,
    pub p_value: f64,
    pub lags_used: usize,
    pub n_obs: usize,
    /// Statistic fell outside the response surface and the p-value was clamped.
    pub p_clamped: bool,
}

pub fn schwert_lags(n: usize) -> usize {
    (12.0 * (n as f64 / 100.0).powf(0.25)).floor() as usize
}

pub fn adf_test(series: &[f64], lags: AdfLags) -> Result<AdfResult> {
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("ADF input contains non-finite values".into()));
    }
    let n = series.len();
    let p = match lags {
        AdfLags::Auto => schwert_lags(n),
        AdfLags::Fixed(p) => p,
    };
    let n_obs = n.saturating_sub(p + 1);
    if n_obs < MIN_OBS {
        return Err(Error::InsufficientData {
            needed: MIN_OBS + p + 1,
            got: n,
        });
    }

    let diff: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let k = p + 2;
    // row for observation t (t = p+1 .. n-1): [1, x_{t-1}, Δx_{t-1}, …, Δx_{t-p}]
    let mut design = Vec::with_capacity(n_obs * k);
    let mut response = Vec::with_capacity(n_obs);
    for t in (p + 1)..n {
        design.push(1.0);
        design.push(series[t - 1]);
        for i in 1..=p {
            design.push(diff[t - 1 - i]);
        }
        response.push(diff[t - 1]);
    }

    let fit = ols(&design, &response, n_obs, k)?;
    let dof = (n_obs - k) as f64;
    let sigma2 = fit.rss / dof;
    let se = (sigma2 * fit.inv_diag[1]).sqrt();
    if !(se > 0.0) || !se.is_finite() {
        return Err(Error::Degenerate("ADF regression has zero residual variance".into()));
    }
    let statistic = fit.coef[1] / se;
    let (p_value, p_clamped) = mackinnon_p(statistic);
    Ok(AdfResult {
        statistic,
        p_value,
        lags_used: p,
        n_obs,
        p_clamped,
    })
}

/// Asymptotic p-value for the constant-only ADF statistic.
pub fn mackinnon_p(stat: f64) -> (f64, bool) {
    if stat > TAU_MAX {
        return (P_CEIL, true);
    }
    if stat < TAU_MIN {
        return (P_FLOOR, true);
    }
    let z = if stat <= TAU_STAR {
        polyval(&SMALL_P, stat)
    } else {
        polyval(&LARGE_P, stat)
    };
    (normal_cdf(z), false)
}

fn polyval(coef: &[f64], x: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

struct OlsFit {
    coef: Vec<f64>,
    rss: f64,
    /// Diagonal of (XᵀX)⁻¹.
    inv_diag: Vec<f64>,
}

/// Least squares through Householder QR of the row-major `rows × cols` design.
fn ols(design: &[f64], response: &[f64], rows: usize, cols: usize) -> Result<OlsFit> {
    // column-major working copy
    let mut a: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..rows).map(|i| design[i * cols + j]).collect())
        .collect();
    let mut y = response.to_vec();
    let scale = a
        .iter()
        .flat_map(|c| c.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);

    for j in 0..cols {
        let norm = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= 1e-10 * scale * (rows as f64).sqrt() {
            return Err(Error::Degenerate(
                "ADF regression matrix is singular (constant or collinear series)".into(),
            ));
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        for col in a.iter_mut().skip(j) {
            let dot: f64 = v.iter().zip(&col[j..]).map(|(p, q)| p * q).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, vi) in col[j..].iter_mut().zip(&v) {
                *c -= f * vi;
            }
        }
        let dot: f64 = v.iter().zip(&y[j..]).map(|(p, q)| p * q).sum();
        let f = 2.0 * dot / vnorm2;
        for (c, vi) in y[j..].iter_mut().zip(&v) {
            *c -= f * vi;
        }
    }

    // R is the upper triangle: r(i, j) = a[j][i]
    let r = |i: usize, j: usize| a[j][i];
    let mut coef = vec![0.0; cols];
    for i in (0..cols).rev() {
        let mut s = y[i];
        for j in (i + 1)..cols {
            s -= r(i, j) * coef[j];
        }
        coef[i] = s / r(i, i);
    }
    let rss: f64 = y[cols..].iter().map(|v| v * v).sum();

    // R⁻¹ by back substitution; (XᵀX)⁻¹ = R⁻¹R⁻ᵀ
    let mut rinv = vec![vec![0.0; cols]; cols];
    for i in (0..cols).rev() {
        rinv[i][i] = 1.0 / r(i, i);
        for j in (i + 1)..cols {
            let mut s = 0.0;
            for m in (i + 1)..=j {
                s += r(i, m) * rinv[m][j];
            }
            rinv[i][j] = -s / r(i, i);
        }
    }
    let inv_diag = (0..cols)
        .map(|i| rinv[i][i..].iter().map(|v| v * v).sum())
        .collect();
    if coef.iter().any(|c: &f64| !c.is_finite()) {
        return Err(Error::Degenerate("ADF regression produced non-finite coefficients".into()));
    }
    Ok(OlsFit { coef, rss, inv_diag })
}
