//! Coordinate-descent regression: lasso and elastic-net paths, cross-validated
//! penalty selection, group lasso, and OLS with HC3 standard errors.
//!
//! Columns are standardized internally (centered, unit variance with the `1/n`
//! convention) and the intercept is never penalized. Penalized objectives are
//!
//! ```text
//! (1/2n) ‖y - β₀ - Xβ‖² + λ Σ_j (a |β_j| + (1 - a) β_j²)      elastic net, mixing a
//! (1/2n) ‖y - β₀ - Xβ‖² + λ Σ_g √|g| ‖β_g‖₂                   group lasso
//! ```
//!
//! with `a = 1` giving the lasso.

mod cd;
mod cv;
mod group;
mod ols;

pub use cd::{elastic_net_path, lasso_path, Design, PathOptions};
pub use cv::{cv_select_lambda, elastic_net_fit, fit_at_lambda, CvOptions};
pub use group::group_lasso_path;
pub use ols::ols_hc3;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// How the penalty grid is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridSpec {
    /// `len` log-spaced values from `λ_max` down to `min_ratio × λ_max`.
    Auto { len: usize, min_ratio: f64 },
    /// A caller-supplied strictly decreasing grid.
    Explicit { lambdas: Vec<f64> },
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec::Auto { len: 100, min_ratio: 1e-3 }
    }
}

impl GridSpec {
    pub(crate) fn build(&self, lambda_max: f64) -> crate::Result<Vec<f64>> {
        match self {
            GridSpec::Auto { len, min_ratio } => {
                if *len == 0 || !(*min_ratio > 0.0 && *min_ratio < 1.0) {
                    return Err(crate::Error::InvalidArgument("grid needs len >= 1 and min_ratio in (0, 1)".into()));
                }
                let top = if lambda_max > 0.0 { lambda_max } else { 1.0 };
                if *len == 1 {
                    return Ok(vec![top]);
                }
                let step = min_ratio.ln() / (*len - 1) as f64;
                Ok((0..*len).map(|l| top * (step * l as f64).exp()).collect())
            }
            GridSpec::Explicit { lambdas } => {
                if lambdas.is_empty()
                    || lambdas.iter().any(|l| !(*l > 0.0 && l.is_finite()))
                    || lambdas.windows(2).any(|w| w[1] >= w[0])
                {
                    return Err(crate::Error::InvalidArgument(
                        "explicit grid must be positive and strictly decreasing".into(),
                    ));
                }
                Ok(lambdas.clone())
            }
        }
    }
}

/// A fitted regularization path. Coefficients are on the standardized scale
/// (unit-variance columns); use [`LassoPath::original_coefficients`] for the
/// scale of the input columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoPath {
    pub lambda_grid: Vec<f64>,
    /// `L × q`.
    pub coefficients: DMatrix<f64>,
    /// Largest grid λ at which each coefficient is nonzero, `0` if never.
    pub entry_lambda: Vec<f64>,
    /// Intercept for the original-scale coefficients at each λ.
    pub intercept_per_lambda: Vec<f64>,
    /// Entry λ per group when fitted by the group lasso.
    pub group_entry_lambda: Option<Vec<f64>>,
    pub x_mean: Vec<f64>,
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
}

impl LassoPath {
    pub fn len(&self) -> usize {
        self.lambda_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda_grid.is_empty()
    }

    pub fn n_coefficients(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn standardized_coefficients(&self, l: usize) -> Vec<f64> {
        self.coefficients.row(l).iter().copied().collect()
    }

    pub fn original_coefficients(&self, l: usize) -> Vec<f64> {
        self.coefficients.row(l).iter().zip(&self.x_scale).map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 }).collect()
    }

    /// Predictions in the units of `y` at grid index `l`.
    pub fn predict(&self, x: &DMatrix<f64>, l: usize) -> Vec<f64> {
        let beta = self.original_coefficients(l);
        let b0 = self.intercept_per_lambda[l];
        (0..x.nrows()).map(|i| b0 + (0..x.ncols()).map(|j| x[(i, j)] * beta[j]).sum::<f64>()).collect()
    }
}

/// Mean cross-validated error at one λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub lambda: f64,
    pub mean: f64,
    pub se: f64,
}

/// A single fitted model with its selected penalty.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// Coefficients on the scale of the input columns.
    pub coefficients: Vec<f64>,
    /// Coefficients on the standardized scale (equal to `coefficients` for OLS).
    pub standardized_coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda_selected: f64,
    pub lambda_grid: Vec<f64>,
    pub cv_error_curve: Vec<CvPoint>,
    /// HC3 standard errors of `coefficients` (OLS only).
    pub robust_se: Option<Vec<f64>>,
    pub intercept_se: Option<f64>,
}

impl FitResult {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.nrows())
            .map(|i| self.intercept + (0..x.ncols()).map(|j| x[(i, j)] * self.coefficients[j]).sum::<f64>())
            .collect()
    }

    pub fn nonzero(&self) -> Vec<usize> {
        self.coefficients.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(j, _)| j).collect()
    }
}

pub(crate) fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auto_grid_is_log_spaced() {
        let g = GridSpec::default().build(2.0).unwrap();
        assert_eq!(g.len(), 100);
        assert_eq!(g[0], 2.0);
        assert!((g[99] - 2e-3).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn explicit_grid_must_decrease() {
        assert!(GridSpec::Explicit { lambdas: vec![0.1, 0.2] }.build(1.0).is_err());
        assert!(GridSpec::Explicit { lambdas: vec![0.2, 0.1] }.build(1.0).is_ok());
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(5.0, 2.0), 3.0);
        assert_eq!(soft_threshold(-5.0, 2.0), -3.0);
        assert_eq!(soft_threshold(1.0, 2.0), 0.0);
    }
}
