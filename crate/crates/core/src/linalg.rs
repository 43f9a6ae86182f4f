//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

/// Sample standard deviations with the `n - 1` denominator.
pub fn column_sds(x: &DMatrix<f64>, means: &DVector<f64>) -> DVector<f64> {
    let n = x.nrows();
    let denom = (n.max(2) - 1) as f64;
    DVector::from_iterator(
        x.ncols(),
        x.column_iter().zip(means.iter()).map(|(c, m)| (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / denom).sqrt()),
    )
}

/// `X - 1 μᵀ`.
pub fn center(x: &DMatrix<f64>, means: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (mut c, m) in out.column_iter_mut().zip(means.iter()) {
        c.add_scalar_mut(-m);
    }
    out
}

/// Sample covariance (`n - 1` denominator).
pub fn covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let means = column_means(x);
    let xc = center(x, &means);
    let denom = (x.nrows().max(2) - 1) as f64;
    let mut c = xc.tr_mul(&xc) / denom;
    symmetrize(&mut c);
    c
}

/// Sample cross-covariance `Cov(A, B)` between the columns of `a` and `b`.
pub fn cross_covariance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let ac = center(a, &column_means(a));
    let bc = center(b, &column_means(b));
    let denom = (a.nrows().max(2) - 1) as f64;
    ac.tr_mul(&bc) / denom
}

/// Rescale a covariance matrix to a correlation matrix.
pub fn cov_to_corr(cov: &DMatrix<f64>) -> DMatrix<f64> {
    let d: Vec<f64> = cov.diagonal().iter().map(|v| v.sqrt()).collect();
    let mut c = DMatrix::from_fn(cov.nrows(), cov.ncols(), |i, j| cov[(i, j)] / (d[i] * d[j]));
    for i in 0..c.nrows() {
        c[(i, i)] = 1.0;
    }
    c
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Eigenvalues (descending) and matching eigenvectors of a symmetric matrix.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let mut s = m.clone();
    symmetrize(&mut s);
    let eig = SymmetricEigen::new(s);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = DMatrix::from_fn(m.nrows(), order.len(), |i, c| eig.eigenvectors[(i, order[c])]);
    (values, vectors)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let mut s = m.clone();
    symmetrize(&mut s);
    s.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let mut s = m.clone();
    symmetrize(&mut s);
    s.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// PSD up to `-rel_tol × λ_max`.
pub fn is_psd(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    let mut s = m.clone();
    symmetrize(&mut s);
    let ev = s.symmetric_eigenvalues();
    let lmax = ev.iter().copied().fold(0.0_f64, f64::max);
    let lmin = ev.iter().copied().fold(f64::INFINITY, f64::min);
    lmin >= -rel_tol * lmax.max(1e-300)
}

/// Replace negative eigenvalues by zero.
pub fn clip_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sym_eigen(m);
    let clipped = DVector::from_iterator(values.len(), values.iter().map(|v| v.max(0.0)));
    let mut out = &vectors * DMatrix::from_diagonal(&clipped) * vectors.transpose();
    symmetrize(&mut out);
    out
}

/// Lower-triangular `L` with `L Lᵀ ≈ m` for a positive semi-definite `m`.
///
/// Pivots below `1e-13 × max diagonal` are treated as exact zeros and their
/// column is zeroed, which keeps the factor finite for singular inputs.
pub fn psd_cholesky(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let scale = m.diagonal().iter().copied().fold(0.0_f64, f64::max);
    let tiny = 1e-13 * scale.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = m[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= tiny {
            continue;
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in (j + 1)..n {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / ljj;
        }
    }
    l
}

/// Inverse of a symmetric positive-definite matrix.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = nalgebra::Cholesky::new(m.clone()).ok_or(Error::NotPsd { min_eigenvalue: min_eigenvalue(m) })?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Ok(inv)
}

/// Moore-Penrose inverse of a symmetric PSD matrix via its eigendecomposition.
pub fn psd_pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (values, vectors) = sym_eigen(m);
    let lmax = values.first().copied().unwrap_or(0.0).max(0.0);
    let cut = 1e-12 * lmax.max(f64::MIN_POSITIVE);
    let inv = DVector::from_iterator(values.len(), values.iter().map(|&v| if v > cut { 1.0 / v } else { 0.0 }));
    let mut out = &vectors * DMatrix::from_diagonal(&inv) * vectors.transpose();
    symmetrize(&mut out);
    out
}

/// Symmetric inverse, falling back to the pseudo-inverse when the Cholesky
/// factorisation fails.
pub fn sym_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    spd_inverse(m).unwrap_or_else(|_| psd_pinv(m))
}

pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Cholesky factor `L` of an AR(1) / equicorrelated / any SPD covariance.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    nalgebra::Cholesky::new(m.clone()).map(|c| c.l()).ok_or(Error::NotPsd { min_eigenvalue: min_eigenvalue(m) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psd_cholesky_handles_singular_matrix() {
        // rank one: all ones
        let m = DMatrix::from_element(3, 3, 1.0);
        let l = psd_cholesky(&m);
        let r = &l * l.transpose();
        assert!((r - &m).abs().max() < 1e-12);
    }

    #[test]
    fn psd_cholesky_matches_full_rank_factor() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let l = psd_cholesky(&m);
        assert!((&l * l.transpose() - &m).abs().max() < 1e-14);
        assert_eq!(l[(0, 1)], 0.0);
    }

    #[test]
    fn eigen_is_sorted_descending() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, 0.6, 1.0]);
        let (v, _) = sym_eigen(&m);
        assert!((v[0] - 1.6).abs() < 1e-12 && (v[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn pinv_of_singular_projector() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = psd_pinv(&m);
        assert!((&m * &p * &m - &m).abs().max() < 1e-12);
    }
}
