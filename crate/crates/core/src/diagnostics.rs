//! Knockoff quality measures: kernel two-sample distance under swaps,
//! second-order moment mismatch and cross-covariance decorrelation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bandwidth {
    MedianHeuristic,
    Fixed { sigma: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnosticsConfig {
    pub gamma: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub delta: f64,
    pub bandwidth: Bandwidth,
    pub swap_seed: u64,
    pub partition_seed: u64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            lambda1: 1.0,
            lambda2: 1.0,
            lambda3: 1.0,
            delta: 1.0,
            bandwidth: Bandwidth::MedianHeuristic,
            swap_seed: 0,
            partition_seed: 0,
        }
    }
}

impl DiagnosticsConfig {
    fn validate(&self) -> Result<()> {
        let w = [self.gamma, self.lambda1, self.lambda2, self.lambda3, self.delta];
        if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("loss weights must be finite and non-negative".into()));
        }
        if let Bandwidth::Fixed { sigma } = self.bandwidth {
            if !(sigma > 0.0) {
                return Err(Error::InvalidArgument(format!("bandwidth {sigma} must be positive")));
            }
        }
        Ok(())
    }
}

fn same_shape(x: &DMatrix<f64>, xk: &DMatrix<f64>) -> Result<()> {
    if x.shape() != xk.shape() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", x.shape(), xk.shape())));
    }
    Ok(())
}

/// `[X, X̃]` with columns in `swap_set` exchanged between the two blocks.
pub fn swap(x: &DMatrix<f64>, xk: &DMatrix<f64>, swap_set: &[usize]) -> Result<DMatrix<f64>> {
    same_shape(x, xk)?;
    let (n, p) = x.shape();
    let mut flip = vec![false; p];
    for &j in swap_set {
        if j >= p {
            return Err(Error::IndexOutOfRange { index: j, len: p });
        }
        flip[j] = true;
    }
    Ok(DMatrix::from_fn(n, 2 * p, |i, c| {
        let (j, knock) = if c < p { (c, false) } else { (c - p, true) };
        if knock != flip[j] {
            xk[(i, j)]
        } else {
            x[(i, j)]
        }
    }))
}

/// Row-major copy for cache-friendly pairwise distances.
fn rows(m: &DMatrix<f64>) -> Vec<f64> {
    let (n, d) = m.shape();
    let mut out = Vec::with_capacity(n * d);
    for i in 0..n {
        out.extend(m.row(i).iter());
    }
    out
}

fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

const BANDWIDTH_ROWS: usize = 1000;

/// Median pairwise distance of the pooled sample; large samples use an
/// evenly strided subset of at most `BANDWIDTH_ROWS` rows.
fn median_bandwidth(pooled: &[&[f64]]) -> f64 {
    let stride = pooled.len().div_ceil(BANDWIDTH_ROWS).max(1);
    let sub: Vec<&[f64]> = pooled.iter().step_by(stride).copied().collect();
    let mut d = Vec::with_capacity(sub.len() * (sub.len().saturating_sub(1)) / 2);
    for i in 0..sub.len() {
        for j in i + 1..sub.len() {
            d.push(sqdist(sub[i], sub[j]).sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, f64::total_cmp);
    if *m > 0.0 {
        *m
    } else {
        1.0
    }
}

/// Biased (V-statistic) MMD² with a Gaussian kernel.
pub fn gaussian_mmd(a: &DMatrix<f64>, b: &DMatrix<f64>, bandwidth: Bandwidth) -> Result<f64> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch(format!("{} vs {} columns", a.ncols(), b.ncols())));
    }
    if a.nrows() == 0 || b.nrows() == 0 {
        return Err(Error::Empty);
    }
    let d = a.ncols();
    let ra = rows(a);
    let rb = rows(b);
    let ar: Vec<&[f64]> = ra.chunks(d.max(1)).collect();
    let br: Vec<&[f64]> = rb.chunks(d.max(1)).collect();
    let sigma = match bandwidth {
        Bandwidth::Fixed { sigma } => sigma,
        Bandwidth::MedianHeuristic => {
            let pooled: Vec<&[f64]> = ar.iter().chain(&br).copied().collect();
            median_bandwidth(&pooled)
        }
    };
    let scale = -1.0 / (2.0 * sigma * sigma);
    let mean_kernel = |u: &[&[f64]], v: &[&[f64]]| {
        let mut s = 0.0;
        for x in u {
            for y in v {
                s += (sqdist(x, y) * scale).exp();
            }
        }
        s / (u.len() * v.len()) as f64
    };
    let value = mean_kernel(&ar, &ar) + mean_kernel(&br, &br) - 2.0 * mean_kernel(&ar, &br);
    Ok(value.max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmdReport {
    pub value: f64,
    pub swap_set: Vec<usize>,
    pub dropped_last_row: bool,
}

/// Each column joins the swap set with probability 1/2.
pub fn draw_swap_set(p: usize, swap_seed: u64) -> Vec<usize> {
    use rand::Rng as _;
    let mut r = rng::rng_from(swap_seed, &[0x5A4F]);
    (0..p).filter(|_| r.random_bool(0.5)).collect()
}

pub fn j_mmd(x: &DMatrix<f64>, xk: &DMatrix<f64>, cfg: &DiagnosticsConfig) -> Result<MmdReport> {
    let s = draw_swap_set(x.ncols(), cfg.swap_seed);
    j_mmd_with_swap(x, xk, &s, cfg)
}

/// `MMD[(X', X̃'), (X̃'', X'')] + MMD[(X', X̃'), swap_S(X'', X̃'')]` over a
/// seeded half partition of rows. Odd `n` drops the last row first.
pub fn j_mmd_with_swap(
    x: &DMatrix<f64>,
    xk: &DMatrix<f64>,
    swap_set: &[usize],
    cfg: &DiagnosticsConfig,
) -> Result<MmdReport> {
    same_shape(x, xk)?;
    cfg.validate()?;
    let n = x.nrows();
    if n < 4 {
        return Err(Error::TooFewRows { needed: 4, got: n });
    }
    let dropped = n % 2 == 1;
    let n = n - usize::from(dropped);
    let mut r = rng::rng_from(cfg.partition_seed, &[0xBA47]);
    let perm = rng::permutation(&mut r, n);
    let (first, second) = perm.split_at(n / 2);
    let pick = |m: &DMatrix<f64>, idx: &[usize]| DMatrix::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)]);
    let (x1, xk1) = (pick(x, first), pick(xk, first));
    let (x2, xk2) = (pick(x, second), pick(xk, second));
    let joint1 = swap(&x1, &xk1, &[])?;
    let flipped = swap(&xk2, &x2, &[])?;
    let swapped = swap(&x2, &xk2, swap_set)?;
    let value = gaussian_mmd(&joint1, &flipped, cfg.bandwidth)? + gaussian_mmd(&joint1, &swapped, cfg.bandwidth)?;
    Ok(MmdReport { value, swap_set: swap_set.to_vec(), dropped_last_row: dropped })
}

fn off_diagonal_sq(m: &DMatrix<f64>) -> f64 {
    let mut s = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s
}

/// `λ1‖G_XX - G_X̃X̃‖²/‖G_XX‖² + λ2‖M∘(G_XX - G_X̃X̃)‖²/‖G_XX‖² + (λ3/p)‖mean(X - X̃)‖²`.
///
/// With `corrected`, the middle term uses the cross block instead:
/// `λ2‖M∘(G_XX - G_XX̃)‖²/‖G_XX‖²`.
pub fn j_second_order(x: &DMatrix<f64>, xk: &DMatrix<f64>, lambda: [f64; 3], corrected: bool) -> Result<f64> {
    same_shape(x, xk)?;
    if x.nrows() < 2 {
        return Err(Error::TooFewRows { needed: 2, got: x.nrows() });
    }
    let p = x.ncols() as f64;
    let gxx = linalg::covariance(x);
    let gkk = linalg::covariance(xk);
    let norm = linalg::frobenius_sq(&gxx);
    let norm = if norm > 0.0 { norm } else { 1.0 };
    let first = lambda[0] * linalg::frobenius_sq(&(&gxx - &gkk)) / norm;
    let second = if corrected {
        let gxk = linalg::cross_covariance(x, xk);
        lambda[1] * off_diagonal_sq(&(&gxx - gxk)) / norm
    } else {
        lambda[1] * off_diagonal_sq(&(&gxx - &gkk)) / norm
    };
    let diff: DVector<f64> = linalg::column_means(x) - linalg::column_means(xk);
    let third = lambda[2] / p * diff.norm_squared();
    Ok(first + second + third)
}

/// `‖diag(corr(X, X̃)) - 1 + s*‖²`.
pub fn j_decorrelation(x: &DMatrix<f64>, xk: &DMatrix<f64>, s_star: &[f64]) -> Result<f64> {
    same_shape(x, xk)?;
    if s_star.len() != x.ncols() {
        return Err(Error::DimensionMismatch(format!("s* has {} entries for {} columns", s_star.len(), x.ncols())));
    }
    if x.nrows() < 2 {
        return Err(Error::TooFewRows { needed: 2, got: x.nrows() });
    }
    let mx = linalg::column_means(x);
    let mk = linalg::column_means(xk);
    let sx = linalg::column_sds(x, &mx);
    let sk = linalg::column_sds(xk, &mk);
    let n = x.nrows() as f64;
    Ok((0..x.ncols())
        .map(|j| {
            let cov = x.column(j).iter().zip(xk.column(j).iter()).map(|(a, b)| (a - mx[j]) * (b - mk[j])).sum::<f64>()
                / (n - 1.0);
            let denom = sx[j] * sk[j];
            let corr = if denom > 0.0 { cov / denom } else { 0.0 };
            (corr - 1.0 + s_star[j]).powi(2)
        })
        .sum())
}

/// Decorrelation target: the ASDP `s` for the sample correlation of `X`.
pub fn asdp_target(x: &DMatrix<f64>, block_size: usize) -> Result<Vec<f64>> {
    let corr = linalg::cov_to_corr(&linalg::covariance(x));
    Ok(crate::knockoffs::solve_s_asdp(&corr, block_size)?.iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub j_mmd: f64,
    pub j_second_order: f64,
    pub j_second_order_corrected: f64,
    pub j_decorrelation: f64,
    /// `γ·J_MMD + J_second-order + δ·J_decorrelation`.
    pub total: f64,
    pub swap_set: Vec<usize>,
    pub dropped_last_row: bool,
}

pub fn knockoff_diagnostics(
    x: &DMatrix<f64>,
    xk: &DMatrix<f64>,
    s_star: &[f64],
    cfg: &DiagnosticsConfig,
) -> Result<DiagnosticsReport> {
    cfg.validate()?;
    let mmd = j_mmd(x, xk, cfg)?;
    let lambda = [cfg.lambda1, cfg.lambda2, cfg.lambda3];
    let so = j_second_order(x, xk, lambda, false)?;
    let so_c = j_second_order(x, xk, lambda, true)?;
    let dec = j_decorrelation(x, xk, s_star)?;
    Ok(DiagnosticsReport {
        j_mmd: mmd.value,
        j_second_order: so,
        j_second_order_corrected: so_c,
        j_decorrelation: dec,
        total: cfg.gamma * mmd.value + so + cfg.delta * dec,
        swap_set: mmd.swap_set,
        dropped_last_row: mmd.dropped_last_row,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gaussian(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng::rng_from(seed, &[]);
        let z = rng::normals(&mut r, n * p);
        DMatrix::from_fn(n, p, |i, j| z[i * p + j])
    }

    #[test]
    fn swap_examples() {
        let x = DMatrix::from_fn(2, 3, |i, j| (10 * i + j) as f64);
        let xk = x.map(|v| -v - 1.0);
        let id = swap(&x, &xk, &[]).unwrap();
        assert_eq!(id.columns(0, 3), x);
        assert_eq!(id.columns(3, 3), xk);
        let full = swap(&x, &xk, &[0, 1, 2]).unwrap();
        assert_eq!(full.columns(0, 3), xk);
        assert_eq!(full.columns(3, 3), x);
        let one = swap(&x, &xk, &[1]).unwrap();
        for i in 0..2 {
            assert_eq!(one[(i, 0)], x[(i, 0)]);
            assert_eq!(one[(i, 1)], xk[(i, 1)]);
            assert_eq!(one[(i, 2)], x[(i, 2)]);
            assert_eq!(one[(i, 3)], xk[(i, 0)]);
            assert_eq!(one[(i, 4)], x[(i, 1)]);
            assert_eq!(one[(i, 5)], xk[(i, 2)]);
        }
        assert_eq!(swap(&x, &xk, &[3]), Err(Error::IndexOutOfRange { index: 3, len: 3 }));
    }

    #[test]
    fn mmd_examples() {
        let a = gaussian(50, 3, 1);
        assert_abs_diff_eq!(gaussian_mmd(&a, &a, Bandwidth::MedianHeuristic).unwrap(), 0.0, epsilon = 1e-12);
        let z = DMatrix::zeros(1, 1);
        assert_eq!(gaussian_mmd(&z, &z, Bandwidth::MedianHeuristic).unwrap(), 0.0);
        let b = gaussian(300, 2, 2);
        let c = gaussian(300, 2, 3);
        let same = gaussian_mmd(&b, &c, Bandwidth::MedianHeuristic).unwrap();
        let shifted = gaussian_mmd(&b, &c.add_scalar(3.0), Bandwidth::MedianHeuristic).unwrap();
        assert!(same < shifted);
        assert!(gaussian_mmd(&b, &gaussian(5, 3, 4), Bandwidth::MedianHeuristic).is_err());
    }

    #[test]
    fn second_order_examples() {
        let x = gaussian(100, 4, 5);
        assert_eq!(j_second_order(&x, &x, [1.0, 1.0, 1.0], false).unwrap(), 0.0);
        let shifted = j_second_order(&x, &x.add_scalar(0.5), [0.0, 0.0, 2.0], false).unwrap();
        assert_abs_diff_eq!(shifted, 2.0 * 0.25, epsilon = 1e-12);
        let moments_only = j_second_order(&x, &x.add_scalar(0.5), [1.0, 1.0, 0.0], false).unwrap();
        assert!(moments_only < 1e-20);
        assert!(j_second_order(&x, &(&x * 2.0), [1.0, 0.0, 0.0], false).unwrap() > 0.0);
        assert!(j_second_order(&x, &gaussian(10, 4, 1), [1.0; 3], false).is_err());
    }

    #[test]
    fn decorrelation_examples() {
        let x = gaussian(60, 3, 6);
        assert_abs_diff_eq!(j_decorrelation(&x, &x, &[1.0; 3]).unwrap(), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(j_decorrelation(&x, &x, &[0.0; 3]).unwrap(), 0.0, epsilon = 1e-12);
        let xk = gaussian(60, 3, 7);
        let base = j_decorrelation(&x, &xk, &[0.4; 3]).unwrap();
        let order: Vec<usize> = (0..60).rev().collect();
        let px = DMatrix::from_fn(60, 3, |i, j| x[(order[i], j)]);
        let pk = DMatrix::from_fn(60, 3, |i, j| xk[(order[i], j)]);
        assert_abs_diff_eq!(j_decorrelation(&px, &pk, &[0.4; 3]).unwrap(), base, epsilon = 1e-12);
    }

    #[test]
    fn j_mmd_is_deterministic_and_odd_rows_drop_last() {
        let x = gaussian(41, 2, 8);
        let xk = gaussian(41, 2, 9);
        let cfg = DiagnosticsConfig { swap_seed: 3, partition_seed: 4, ..DiagnosticsConfig::default() };
        let a = j_mmd(&x, &xk, &cfg).unwrap();
        assert_eq!(a, j_mmd(&x, &xk, &cfg).unwrap());
        assert!(a.dropped_last_row);
        let trimmed = j_mmd(&x.rows(0, 40).into_owned(), &xk.rows(0, 40).into_owned(), &cfg).unwrap();
        assert_eq!(a.value, trimmed.value);
        assert!(!trimmed.dropped_last_row);
    }

    #[test]
    fn exact_knockoffs_beat_shifted_ones() {
        // Σ = I, s = 1: an independent copy is an exact knockoff
        let x = gaussian(1000, 3, 10);
        let good = gaussian(1000, 3, 11);
        let bad = x.add_scalar(2.0);
        let cfg = DiagnosticsConfig { swap_seed: 1, partition_seed: 2, ..DiagnosticsConfig::default() };
        assert!(j_mmd(&x, &good, &cfg).unwrap().value < j_mmd(&x, &bad, &cfg).unwrap().value);
    }
}
