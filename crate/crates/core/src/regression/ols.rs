use nalgebra::{DMatrix, DVector};

use super::FitResult;
use crate::error::{Error, Result};
use crate::linalg;

/// OLS with an intercept and HC3 heteroskedasticity-robust standard errors,
/// `(XᵀX)⁻¹ Xᵀ diag(e_i² / (1 - h_ii)²) X (XᵀX)⁻¹`.
pub fn ols_hc3(x: &DMatrix<f64>, y: &[f64]) -> Result<FitResult> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::LengthMismatch { left: n, right: y.len() });
    }
    let q = x.ncols();
    if n <= q + 1 {
        return Err(Error::TooFewRows { needed: q + 2, got: n });
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput("ols inputs".into()));
    }
    let design = DMatrix::from_fn(n, q + 1, |i, j| if j == 0 { 1.0 } else { x[(i, j - 1)] });
    let xtx = design.tr_mul(&design);
    let (vals, _) = linalg::sym_eigen(&xtx);
    let lmax = vals[0];
    let lmin = *vals.last().unwrap();
    if !(lmin > 1e-12 * lmax) {
        return Err(Error::SingularDesign);
    }
    let inv = linalg::spd_inverse(&xtx).map_err(|_| Error::SingularDesign)?;
    let yv = DVector::from_column_slice(y);
    let beta = &inv * design.tr_mul(&yv);
    let resid = &yv - &design * &beta;

    let xinv = &design * &inv;
    let mut meat = DMatrix::zeros(q + 1, q + 1);
    for i in 0..n {
        let h = xinv.row(i).dot(&design.row(i));
        if 1.0 - h < 1e-10 {
            return Err(Error::LeverageOne(i));
        }
        let w = (resid[i] / (1.0 - h)).powi(2);
        let row = design.row(i);
        meat += row.transpose() * row * w;
    }
    let cov = &inv * meat * &inv;
    let se: Vec<f64> = cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
    let coefficients: Vec<f64> = beta.iter().skip(1).copied().collect();
    Ok(FitResult {
        standardized_coefficients: coefficients.clone(),
        coefficients,
        intercept: beta[0],
        lambda_selected: 0.0,
        lambda_grid: vec![0.0],
        cv_error_curve: Vec::new(),
        robust_se: Some(se[1..].to_vec()),
        intercept_se: Some(se[0]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_fit_has_zero_errors() {
        let x = DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 3.0, 4.0, 6.0]);
        let y: Vec<f64> = x.iter().map(|v| 1.0 + 2.0 * v).collect();
        let fit = ols_hc3(&x, &y).unwrap();
        assert!((fit.intercept - 1.0).abs() < 1e-10);
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-10);
        assert!(fit.robust_se.unwrap()[0] < 1e-7);
    }

    #[test]
    fn intercept_only_is_the_mean() {
        let x = DMatrix::zeros(4, 0);
        let fit = ols_hc3(&x, &[1.0, 2.0, 3.0, 6.0]).unwrap();
        assert!((fit.intercept - 3.0).abs() < 1e-12);
        assert!(fit.coefficients.is_empty());
    }

    #[test]
    fn six_point_bivariate_matches_matrix_formula() {
        let x1 = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let x2 = [2.0, 1.0, 4.0, 3.0, 6.0, 5.0];
        let y = [1.0, 3.0, 2.0, 5.0, 4.0, 7.0];
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { x1[i] } else { x2[i] });
        let fit = ols_hc3(&x, &y).unwrap();

        // independent route: hat matrix from an explicit 3×3 inverse
        let d = DMatrix::from_fn(6, 3, |i, j| match j {
            0 => 1.0,
            1 => x1[i],
            _ => x2[i],
        });
        let xtx = d.transpose() * &d;
        let inv = xtx.clone().try_inverse().unwrap();
        let b = &inv * d.transpose() * DVector::from_column_slice(&y);
        let hat = &d * &inv * d.transpose();
        let e = DVector::from_column_slice(&y) - &d * &b;
        let omega = DMatrix::from_fn(6, 6, |i, j| if i == j { (e[i] / (1.0 - hat[(i, i)])).powi(2) } else { 0.0 });
        let v = &inv * d.transpose() * omega * &d * &inv;
        assert!((fit.intercept - b[0]).abs() < 1e-8);
        for j in 0..2 {
            assert!((fit.coefficients[j] - b[j + 1]).abs() < 1e-8);
            assert!((fit.robust_se.as_ref().unwrap()[j] - v[(j + 1, j + 1)].sqrt()).abs() < 1e-8);
        }
        assert!((fit.intercept_se.unwrap() - v[(0, 0)].sqrt()).abs() < 1e-8);
    }

    #[test]
    fn collinear_design_is_singular() {
        let x = DMatrix::from_fn(6, 2, |i, j| (i as f64 + 1.0) * (j as f64 + 1.0));
        assert_eq!(ols_hc3(&x, &[1.0, 2.0, 3.0, 4.0, 5.0, 7.0]), Err(Error::SingularDesign));
    }

    #[test]
    fn dummy_for_single_observation_has_leverage_one() {
        let x = DMatrix::from_column_slice(5, 1, &[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(ols_hc3(&x, &[1.0, 2.0, 3.0, 4.0, 5.0]), Err(Error::LeverageOne(0)));
    }
}
