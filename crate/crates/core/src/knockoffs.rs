//! Second-order Gaussian knockoffs.
//!
//! Moments are estimated from the data and the construction is carried out on
//! the correlation scale: with `Σ` the (shrunk) correlation matrix and `S` the
//! decorrelation matrix (`diag(s)` for the equicorrelated and ASDP solvers,
//! block diagonal for group knockoffs), knockoffs are drawn row by row from
//!
//! ```text
//! X̃ | X ~ N( X - S Σ⁻¹ (X - μ),  2S - S Σ⁻¹ S )
//! ```
//!
//! and rescaled back to the original units of `X`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, GroupSpec};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

/// Covariance shrinkage applied on the correlation scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shrinkage {
    None,
    /// Data-driven shrinkage of the correlation matrix towards the identity.
    LedoitWolfStyle,
    /// `(R + εI) / (1 + ε)`; `epsilon = None` means `0.01 × mean diagonal`.
    Ridge {
        epsilon: Option<f64>,
    },
}

impl Default for Shrinkage {
    fn default() -> Self {
        Shrinkage::Ridge { epsilon: None }
    }
}

/// First and second moments of `X`. `covariance` is on the correlation scale;
/// `correlation_scale` holds the column standard deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentEstimate {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub shrinkage_intensity: f64,
    pub correlation_scale: DVector<f64>,
}

impl MomentEstimate {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Moments for a known correlation matrix, zero mean and unit scale.
    pub fn from_correlation(corr: DMatrix<f64>) -> Self {
        let p = corr.nrows();
        Self {
            mean: DVector::zeros(p),
            covariance: corr,
            shrinkage_intensity: 0.0,
            correlation_scale: DVector::from_element(p, 1.0),
        }
    }
}

pub fn estimate_moments(x: &DataMatrix, shrinkage: Shrinkage) -> Result<MomentEstimate> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::TooFewRows { needed: 2, got: n });
    }
    x.ensure_finite()?;
    let values = x.values();
    let mean = linalg::column_means(values);
    let sd = linalg::column_sds(values, &mean);
    for (j, &s) in sd.iter().enumerate() {
        if !(s > 1e-12 * (1.0 + mean[j].abs())) {
            return Err(Error::ZeroVarianceColumn(j));
        }
    }
    let p = x.ncols();
    let mut z = linalg::center(values, &mean);
    for (j, mut c) in z.column_iter_mut().enumerate() {
        c /= sd[j];
    }
    let mut corr = z.tr_mul(&z) / (n - 1) as f64;
    linalg::symmetrize(&mut corr);
    for j in 0..p {
        corr[(j, j)] = 1.0;
    }

    let intensity = match shrinkage {
        Shrinkage::None => 0.0,
        Shrinkage::Ridge { epsilon } => {
            let eps = epsilon.unwrap_or(0.01);
            if eps < 0.0 {
                return Err(Error::InvalidArgument("ridge epsilon must be >= 0".into()));
            }
            eps / (1.0 + eps)
        }
        Shrinkage::LedoitWolfStyle => correlation_shrinkage_intensity(&z, &corr),
    };
    if intensity > 0.0 {
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    corr[(i, j)] *= 1.0 - intensity;
                }
            }
        }
    }
    if !linalg::is_psd(&corr, 1e-8) {
        corr = linalg::cov_to_corr(&linalg::clip_psd(&corr));
    }
    Ok(MomentEstimate { mean, covariance: corr, shrinkage_intensity: intensity, correlation_scale: sd })
}

/// Optimal shrinkage of a correlation matrix towards the identity
/// (off-diagonal variance over off-diagonal energy), clamped to `[0, 1]`.
fn correlation_shrinkage_intensity(z: &DMatrix<f64>, corr: &DMatrix<f64>) -> f64 {
    let n = z.nrows();
    let p = z.ncols();
    if p < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let mut var_sum = 0.0;
    let mut energy = 0.0;
    for i in 0..p {
        for j in (i + 1)..p {
            let w_bar = corr[(i, j)] * (nf - 1.0) / nf;
            let ss: f64 = (0..n).map(|k| (z[(k, i)] * z[(k, j)] - w_bar).powi(2)).sum();
            var_sum += nf / (nf - 1.0).powi(3) * ss;
            energy += corr[(i, j)].powi(2);
        }
    }
    if energy <= 0.0 {
        return 1.0;
    }
    (var_sum / energy).clamp(0.0, 1.0)
}

fn check_correlation(sigma: &DMatrix<f64>) -> Result<()> {
    if sigma.nrows() != sigma.ncols() {
        return Err(Error::DimensionMismatch("correlation matrix must be square".into()));
    }
    for j in 0..sigma.nrows() {
        let v = sigma[(j, j)];
        if (v - 1.0).abs() > 1e-8 {
            return Err(Error::NotUnitDiagonal { index: j, value: v });
        }
    }
    if sigma.nrows() > 0 && !linalg::is_psd(sigma, 1e-8) {
        return Err(Error::NotPsd { min_eigenvalue: linalg::min_eigenvalue(sigma) });
    }
    Ok(())
}

/// Equicorrelated solution `s_j = min(1, 2 λ_min(Σ))`.
pub fn solve_s_equi(sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_correlation(sigma)?;
    let p = sigma.nrows();
    let lmin = linalg::min_eigenvalue(sigma).max(0.0);
    Ok(DVector::from_element(p, (2.0 * lmin).min(1.0)))
}

/// Tuning for [`solve_s_asdp_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsdpOptions {
    pub block_size: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for AsdpOptions {
    fn default() -> Self {
        Self { block_size: 10, max_iter: 500, tol: 1e-8 }
    }
}

/// Output of the ASDP solver: the final `s` and the global scaling applied.
#[derive(Debug, Clone, PartialEq)]
pub struct AsdpSolution {
    pub s: DVector<f64>,
    pub gamma: f64,
    pub order: Vec<usize>,
}

pub fn solve_s_asdp(sigma: &DMatrix<f64>, block_size: usize) -> Result<DVector<f64>> {
    solve_s_asdp_with(sigma, AsdpOptions { block_size, ..AsdpOptions::default() }).map(|a| a.s)
}

/// Approximate SDP: solve the problem independently on blocks of at most
/// `block_size` variables, then shrink the concatenated solution by the
/// largest `γ ∈ [0, 1]` that keeps `2Σ - γ diag(s)` PSD.
///
/// Variables are ordered by mean absolute correlation (descending) and cut
/// into contiguous blocks. Each block maximises `Σ s_j` subject to
/// `0 ≤ s ≤ 1` and `2Σ_b - diag(s) ⪰ 0` by coordinate ascent on a log-det
/// barrier whose weight is driven to zero; each coordinate step has the closed
/// form `s_j = clamp(1 / [A⁻¹]_jj - μ, 0, 1)` with `A = 2Σ_b - diag(s_{-j})`.
pub fn solve_s_asdp_with(sigma: &DMatrix<f64>, opts: AsdpOptions) -> Result<AsdpSolution> {
    if opts.block_size == 0 {
        return Err(Error::InvalidArgument("block_size must be >= 1".into()));
    }
    check_correlation(sigma)?;
    let p = sigma.nrows();

    let mut score: Vec<(usize, f64)> = (0..p)
        .map(|j| {
            let tot: f64 = (0..p).filter(|&k| k != j).map(|k| sigma[(j, k)].abs()).sum();
            (j, if p > 1 { tot / (p - 1) as f64 } else { 0.0 })
        })
        .collect();
    score.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let order: Vec<usize> = score.into_iter().map(|(j, _)| j).collect();

    let mut s = DVector::zeros(p);
    for (chunk_idx, chunk) in order.chunks(opts.block_size).enumerate() {
        let block = DMatrix::from_fn(chunk.len(), chunk.len(), |a, b| sigma[(chunk[a], chunk[b])]);
        let sb = solve_block(&block, &opts)
            .map_err(|_| Error::BlockSolveDiverged { block_start: chunk_idx * opts.block_size })?;
        for (k, &j) in chunk.iter().enumerate() {
            s[j] = sb[k];
        }
    }

    let feasible = |g: f64| {
        let mut m = sigma * 2.0;
        for j in 0..p {
            m[(j, j)] -= g * s[j];
        }
        linalg::min_eigenvalue(&m) >= -1e-10
    };
    let gamma = if feasible(1.0) {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    s *= gamma;
    Ok(AsdpSolution { s, gamma, order })
}

const BARRIER_SCHEDULE: [f64; 8] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8];

fn solve_block(sigma: &DMatrix<f64>, opts: &AsdpOptions) -> std::result::Result<Vec<f64>, ()> {
    let b = sigma.nrows();
    if b == 1 {
        return Ok(vec![1.0]);
    }
    let mut two_sigma = sigma * 2.0;
    if nalgebra::Cholesky::new(two_sigma.clone()).is_none() {
        // singular block: a tiny ridge keeps the barrier finite and forces s ≈ 0
        for j in 0..b {
            two_sigma[(j, j)] += 1e-10;
        }
    }
    let mut s = vec![0.0; b];
    for &mu in &BARRIER_SCHEDULE {
        let mut converged = false;
        for _ in 0..opts.max_iter {
            let mut m = two_sigma.clone();
            for j in 0..b {
                m[(j, j)] -= s[j];
            }
            let mut minv = linalg::spd_inverse(&m).map_err(|_| ())?;
            let mut max_change = 0.0_f64;
            for j in 0..b {
                let mjj = minv[(j, j)];
                let c = mjj / (1.0 + s[j] * mjj);
                if !(c.is_finite() && c > 0.0) {
                    return Err(());
                }
                let t = (1.0 / c - mu).clamp(0.0, 1.0);
                let delta = t - s[j];
                if delta != 0.0 {
                    let denom = 1.0 - delta * mjj;
                    if !(denom > 0.0) {
                        return Err(());
                    }
                    let col = minv.column(j).into_owned();
                    minv += (&col * col.transpose()) * (delta / denom);
                    s[j] = t;
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change < opts.tol {
                converged = true;
                break;
            }
        }
        let _ = converged;
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(());
    }
    Ok(s)
}

/// Group-equicorrelated `S = γ · blockdiag(Σ_gg)` with the largest `γ ≤ 1`
/// keeping `2Σ - S` PSD, i.e. `γ = min(1, 2 λ_min(D^{-1/2} Σ D^{-1/2}))`.
pub fn solve_s_group_equi(sigma: &DMatrix<f64>, groups: &GroupSpec) -> Result<(DMatrix<f64>, f64)> {
    check_correlation(sigma)?;
    let p = sigma.nrows();
    if groups.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "group map covers {} variables, covariance has {p}",
            groups.len()
        )));
    }
    let mut d = DMatrix::zeros(p, p);
    let mut d_inv_sqrt = DMatrix::zeros(p, p);
    for members in groups.members() {
        let block = DMatrix::from_fn(members.len(), members.len(), |a, b| sigma[(members[a], members[b])]);
        let (vals, vecs) = linalg::sym_eigen(&block);
        let cut = 1e-12 * vals[0].max(f64::MIN_POSITIVE);
        let inv_sqrt =
            DVector::from_iterator(vals.len(), vals.iter().map(|&v| if v > cut { 1.0 / v.sqrt() } else { 0.0 }));
        let bis = &vecs * DMatrix::from_diagonal(&inv_sqrt) * vecs.transpose();
        for (a, &i) in members.iter().enumerate() {
            for (c, &j) in members.iter().enumerate() {
                d[(i, j)] = block[(a, c)];
                d_inv_sqrt[(i, j)] = bis[(a, c)];
            }
        }
    }
    let normalized = &d_inv_sqrt * sigma * &d_inv_sqrt;
    let lmin = linalg::min_eigenvalue(&normalized).max(0.0);
    let gamma = (2.0 * lmin).min(1.0);
    Ok((d * gamma, gamma))
}

/// Which construction produced a [`KnockoffModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KnockoffMethod {
    Equi,
    Asdp { block_size: usize },
    GroupEqui { groups: GroupSpec },
}

impl Default for KnockoffMethod {
    fn default() -> Self {
        KnockoffMethod::Asdp { block_size: 10 }
    }
}

/// Everything needed to draw `X̃` given `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnockoffModel {
    pub moments: MomentEstimate,
    /// Diagonal of `S` (correlation scale).
    pub s: DVector<f64>,
    /// Full decorrelation matrix `S`; diagonal except for group knockoffs.
    pub s_matrix: DMatrix<f64>,
    pub method: KnockoffMethod,
    /// `S Σ⁻¹`.
    pub conditional_mean_map: DMatrix<f64>,
    /// Lower-triangular `L` with `L Lᵀ = 2S - S Σ⁻¹ S` (negative eigenvalues clipped).
    pub conditional_cov_factor: DMatrix<f64>,
}

impl KnockoffModel {
    pub fn new(moments: MomentEstimate, method: KnockoffMethod) -> Result<Self> {
        let sigma = &moments.covariance;
        let s_matrix = match &method {
            KnockoffMethod::Equi => DMatrix::from_diagonal(&solve_s_equi(sigma)?),
            KnockoffMethod::Asdp { block_size } => DMatrix::from_diagonal(&solve_s_asdp(sigma, *block_size)?),
            KnockoffMethod::GroupEqui { groups } => solve_s_group_equi(sigma, groups)?.0,
        };
        Self::from_s_matrix(moments, s_matrix, method)
    }

    /// Build from an explicit diagonal `s`.
    pub fn with_s(moments: MomentEstimate, s: DVector<f64>, method: KnockoffMethod) -> Result<Self> {
        if s.len() != moments.dim() {
            return Err(Error::DimensionMismatch(format!(
                "s has length {}, model has {} variables",
                s.len(),
                moments.dim()
            )));
        }
        if s.iter().any(|&v| !(0.0..=1.0 + 1e-12).contains(&v)) {
            return Err(Error::InvalidArgument("s must lie in [0, 1]".into()));
        }
        Self::from_s_matrix(moments, DMatrix::from_diagonal(&s), method)
    }

    fn from_s_matrix(moments: MomentEstimate, s_matrix: DMatrix<f64>, method: KnockoffMethod) -> Result<Self> {
        let sigma_inv = linalg::sym_inverse(&moments.covariance);
        let conditional_mean_map = &s_matrix * &sigma_inv;
        let mut cond_cov = &s_matrix * 2.0 - &conditional_mean_map * &s_matrix;
        linalg::symmetrize(&mut cond_cov);
        let repaired = if linalg::min_eigenvalue(&cond_cov) < 0.0 { linalg::clip_psd(&cond_cov) } else { cond_cov };
        let conditional_cov_factor = linalg::psd_cholesky(&repaired);
        let s = s_matrix.diagonal();
        Ok(Self { moments, s, s_matrix, method, conditional_mean_map, conditional_cov_factor })
    }

    /// Estimate moments from `x` and build the model.
    pub fn fit(x: &DataMatrix, shrinkage: Shrinkage, method: KnockoffMethod) -> Result<Self> {
        Self::new(estimate_moments(x, shrinkage)?, method)
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    /// Conditional covariance `2S - S Σ⁻¹ S` as reproduced by the stored factor.
    pub fn conditional_covariance(&self) -> DMatrix<f64> {
        &self.conditional_cov_factor * self.conditional_cov_factor.transpose()
    }

    /// Joint `2p × 2p` covariance of `(X, X̃)` on the correlation scale.
    pub fn joint_covariance(&self) -> DMatrix<f64> {
        joint_covariance(&self.moments.covariance, &self.s_matrix)
    }
}

/// `G = [[Σ, Σ - S], [Σ - S, Σ]]`.
pub fn joint_covariance(sigma: &DMatrix<f64>, s_matrix: &DMatrix<f64>) -> DMatrix<f64> {
    let p = sigma.nrows();
    let cross = sigma - s_matrix;
    DMatrix::from_fn(2 * p, 2 * p, |i, j| match (i < p, j < p) {
        (true, true) => sigma[(i, j)],
        (false, false) => sigma[(i - p, j - p)],
        (true, false) => cross[(i, j - p)],
        (false, true) => cross[(i - p, j)],
    })
}

/// Draw knockoffs for every row of `x`. Row `i` uses its own stream keyed by
/// `(seed, i)`, so the output is a pure function of the inputs.
pub fn sample_knockoffs(x: &DataMatrix, model: &KnockoffModel, seed: u64) -> Result<DataMatrix> {
    let p = model.dim();
    if x.ncols() != p {
        return Err(Error::DimensionMismatch(format!("data has {} columns, knockoff model has {p}", x.ncols())));
    }
    let n = x.nrows();
    let values = x.values();
    let mean = &model.moments.mean;
    let sd = &model.moments.correlation_scale;
    let mut z = linalg::center(values, mean);
    for (j, mut c) in z.column_iter_mut().enumerate() {
        c /= sd[j];
    }
    let shift = &z * model.conditional_mean_map.transpose();

    let mut noise = DMatrix::zeros(n, p);
    for i in 0..n {
        let mut r = rng::rng_from(seed, &[i as u64]);
        let e = rng::normals(&mut r, p);
        for j in 0..p {
            noise[(i, j)] = e[j];
        }
    }
    let noise = noise * model.conditional_cov_factor.transpose();

    let out = DMatrix::from_fn(n, p, |i, j| values[(i, j)] - shift[(i, j)] * sd[j] + noise[(i, j)] * sd[j]);
    let names = x.names().iter().map(|nm| format!("{nm}_knockoff")).collect();
    DataMatrix::new(out, names)
}

/// Group-equicorrelated knockoffs with moments estimated from `x`.
pub fn sample_group_knockoffs(x: &DataMatrix, groups: &GroupSpec, seed: u64) -> Result<DataMatrix> {
    if groups.len() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "group map covers {} variables, data has {}",
            groups.len(),
            x.ncols()
        )));
    }
    let model = KnockoffModel::fit(x, Shrinkage::default(), KnockoffMethod::GroupEqui { groups: groups.clone() })?;
    sample_knockoffs(x, &model, seed)
}

/// AR(1) correlation matrix `ρ^|i-j|`.
pub fn ar1_correlation(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| rho.powi((i as i32 - j as i32).abs()))
}

/// Equicorrelation matrix with off-diagonal `ρ`.
pub fn equicorrelation(p: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_sample(corr: &DMatrix<f64>, n: usize, seed: u64) -> DataMatrix {
        let l = linalg::cholesky_lower(corr).unwrap();
        let p = corr.nrows();
        let mut r = rng::rng_from(seed, &[]);
        let z = DMatrix::from_row_slice(n, p, &rng::normals(&mut r, n * p));
        DataMatrix::from_matrix(z * l.transpose())
    }

    #[test]
    fn identical_rows_have_zero_variance() {
        let x = DataMatrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert_eq!(estimate_moments(&x, Shrinkage::None), Err(Error::ZeroVarianceColumn(0)));
    }

    #[test]
    fn single_row_is_too_few() {
        let x = DataMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(estimate_moments(&x, Shrinkage::None), Err(Error::TooFewRows { .. })));
    }

    #[test]
    fn independent_columns_estimate_identity() {
        let n = 4000;
        let x = gaussian_sample(&DMatrix::identity(4, 4), n, 3);
        let m = estimate_moments(&x, Shrinkage::None).unwrap();
        let tol = 3.0 / (n as f64).sqrt();
        assert!((m.covariance - DMatrix::<f64>::identity(4, 4)).abs().max() <= tol);
        assert_eq!(m.shrinkage_intensity, 0.0);
    }

    #[test]
    fn ar1_sample_moments_recover_lag_one() {
        let x = gaussian_sample(&ar1_correlation(5, 0.5), 10_000, 11);
        let m = estimate_moments(&x, Shrinkage::None).unwrap();
        assert!((m.covariance[(0, 1)] - 0.5).abs() <= 0.03);
    }

    #[test]
    fn ridge_shrinkage_keeps_unit_diagonal() {
        let x = gaussian_sample(&ar1_correlation(3, 0.5), 500, 5);
        let m = estimate_moments(&x, Shrinkage::default()).unwrap();
        assert!((m.shrinkage_intensity - 0.01 / 1.01).abs() < 1e-15);
        for j in 0..3 {
            assert_eq!(m.covariance[(j, j)], 1.0);
        }
        let lw = estimate_moments(&x, Shrinkage::LedoitWolfStyle).unwrap();
        assert!((0.0..=1.0).contains(&lw.shrinkage_intensity));
    }

    #[test]
    fn equi_on_identity_is_one() {
        let s = solve_s_equi(&DMatrix::identity(6, 6)).unwrap();
        assert!(s.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn equi_two_by_two() {
        // λ_min = 0.4
        let s = solve_s_equi(&equicorrelation(2, 0.6)).unwrap();
        assert!(s.iter().all(|&v| (v - 0.8).abs() < 1e-12));
    }

    #[test]
    fn equi_exchangeable_point_eight() {
        let s = solve_s_equi(&equicorrelation(5, 0.8)).unwrap();
        assert!(s.iter().all(|&v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn equi_rejects_bad_inputs() {
        let mut m = DMatrix::identity(2, 2);
        m[(1, 1)] = 2.0;
        assert!(matches!(solve_s_equi(&m), Err(Error::NotUnitDiagonal { index: 1, .. })));
        let bad = equicorrelation(3, -0.9);
        assert!(matches!(solve_s_equi(&bad), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn asdp_identity_reduces_to_ones() {
        let sol =
            solve_s_asdp_with(&DMatrix::identity(5, 5), AsdpOptions { block_size: 5, ..Default::default() }).unwrap();
        assert_eq!(sol.gamma, 1.0);
        assert!(sol.s.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn asdp_beats_or_matches_equi_on_ar1() {
        let sigma = ar1_correlation(4, 0.5);
        let asdp = solve_s_asdp(&sigma, 2).unwrap();
        let equi = solve_s_equi(&sigma).unwrap();
        let g = joint_covariance(&sigma, &DMatrix::from_diagonal(&asdp));
        assert!(linalg::min_eigenvalue(&g) >= -1e-8);
        // bisection leaves at most 1e-6 per coordinate on the table
        assert!(asdp.sum() >= equi.sum() - 4e-6, "{} vs {}", asdp.sum(), equi.sum());
    }

    #[test]
    fn asdp_highly_correlated_exchangeable() {
        let sigma = equicorrelation(10, 0.99);
        let s = solve_s_asdp(&sigma, 10).unwrap();
        assert!(s.iter().all(|&v| (0.0..=0.02 + 1e-6).contains(&v)), "{s}");
        let g = joint_covariance(&sigma, &DMatrix::from_diagonal(&s));
        assert!(linalg::min_eigenvalue(&g) >= -1e-8);
        // near-optimal: the SDP optimum is the equicorrelated point
        assert!(s.sum() > 0.19, "{}", s.sum());
    }

    #[test]
    fn zero_s_copies_data_exactly() {
        let x = gaussian_sample(&ar1_correlation(3, 0.4), 50, 2);
        let moments = estimate_moments(&x, Shrinkage::None).unwrap();
        let model = KnockoffModel::with_s(moments, DVector::zeros(3), KnockoffMethod::Equi).unwrap();
        let xk = sample_knockoffs(&x, &model, 9).unwrap();
        assert_eq!(xk.values(), x.values());
    }

    #[test]
    fn sampling_is_deterministic_and_checks_shape() {
        let x = gaussian_sample(&ar1_correlation(3, 0.4), 40, 2);
        let model = KnockoffModel::fit(&x, Shrinkage::default(), KnockoffMethod::Equi).unwrap();
        let a = sample_knockoffs(&x, &model, 123).unwrap();
        let b = sample_knockoffs(&x, &model, 123).unwrap();
        assert_eq!(a, b);
        let c = sample_knockoffs(&x, &model, 124).unwrap();
        assert_ne!(a, c);
        let narrow = x.select_columns(&[0, 1]);
        assert!(matches!(sample_knockoffs(&narrow, &model, 1), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn conditional_factor_reproduces_covariance() {
        let sigma = ar1_correlation(6, 0.6);
        for method in [KnockoffMethod::Equi, KnockoffMethod::Asdp { block_size: 3 }] {
            let model = KnockoffModel::new(MomentEstimate::from_correlation(sigma.clone()), method).unwrap();
            let sinv = linalg::spd_inverse(&sigma).unwrap();
            let target = &model.s_matrix * 2.0 - &model.s_matrix * sinv * &model.s_matrix;
            assert!((model.conditional_covariance() - &target).abs().max() < 1e-8);
            assert!(linalg::min_eigenvalue(&target) >= -1e-8);
            assert!(model.s.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn group_equi_single_group_identity() {
        let (s, gamma) = solve_s_group_equi(&DMatrix::identity(4, 4), &GroupSpec::from_sizes(&[4]).unwrap()).unwrap();
        assert_eq!(gamma, 1.0);
        assert!((s - DMatrix::<f64>::identity(4, 4)).abs().max() < 1e-12);
    }

    #[test]
    fn group_equi_independent_blocks() {
        let mut sigma = DMatrix::identity(4, 4);
        sigma[(0, 1)] = 0.5;
        sigma[(1, 0)] = 0.5;
        sigma[(2, 3)] = 0.5;
        sigma[(3, 2)] = 0.5;
        let (s, gamma) = solve_s_group_equi(&sigma, &GroupSpec::from_sizes(&[2, 2]).unwrap()).unwrap();
        assert!((gamma - 1.0).abs() < 1e-12);
        assert!((s - &sigma).abs().max() < 1e-12);
        // eigenvalue oracle: 2Σ - Σ_blockdiag = Σ ⪰ 0
        assert!(linalg::min_eigenvalue(&(&sigma * 2.0 - &sigma)) > 0.0);
    }
}
