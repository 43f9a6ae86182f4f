use nalgebra::DMatrix;

use super::cd::{enet_lambda_max, enet_path_on, Design, PathOptions};
use super::{CvPoint, FitResult, GridSpec};
use crate::error::{Error, Result};
use crate::rng;

/// Cross-validation settings. The minimum-error rule is used.
#[derive(Debug, Clone, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    pub grid: GridSpec,
}

impl CvOptions {
    pub fn new(folds: usize, seed: u64) -> Self {
        Self { folds, seed, grid: GridSpec::default() }
    }
}

/// Fold label for every row: a seeded shuffle dealt round-robin.
pub(crate) fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut r = rng::rng_from(seed, &[0xF01D]);
    let perm = rng::permutation(&mut r, n);
    let mut out = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        out[row] = pos % folds;
    }
    out
}

fn rows_of(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

/// Squared held-out errors per grid point for one fold.
fn fold_errors(
    x: &DMatrix<f64>,
    y: &[f64],
    labels: &[usize],
    fold: usize,
    grid: &[f64],
    mixing: f64,
) -> Result<Vec<f64>> {
    let (test, train): (Vec<usize>, Vec<usize>) = (0..y.len()).partition(|&i| labels[i] == fold);
    let design = Design::new(&rows_of(x, &train), &train.iter().map(|&i| y[i]).collect::<Vec<_>>())?;
    let path = enet_path_on(&design, grid, mixing, &PathOptions::default())?;
    let xt = rows_of(x, &test);
    Ok((0..grid.len())
        .map(|l| {
            let pred = path.predict(&xt, l);
            pred.iter().zip(&test).map(|(p, &i)| (p - y[i]).powi(2)).sum::<f64>() / test.len() as f64
        })
        .collect())
}

/// Elastic net with the penalty chosen by K-fold cross-validation.
///
/// The grid is built once on the full data and reused in every fold; folds
/// are evaluated independently and reduced in fold order, so the result does
/// not depend on parallel execution.
pub fn elastic_net_fit(x: &DMatrix<f64>, y: &[f64], mixing: f64, opts: &CvOptions) -> Result<FitResult> {
    if !(0.0..=1.0).contains(&mixing) {
        return Err(Error::InvalidArgument(format!("mixing {mixing} outside [0, 1]")));
    }
    let n = y.len();
    if opts.folds < 2 || opts.folds > n {
        return Err(Error::InvalidArgument(format!("folds must lie in [2, {n}], got {}", opts.folds)));
    }
    let design = Design::new(x, y)?;
    let grid = opts.grid.build(enet_lambda_max(&design, mixing))?;
    let full = enet_path_on(&design, &grid, mixing, &PathOptions::default())?;
    let labels = fold_assignment(n, opts.folds, opts.seed);

    #[cfg(feature = "parallel")]
    let per_fold: Vec<Result<Vec<f64>>> = {
        use rayon::prelude::*;
        (0..opts.folds).into_par_iter().map(|k| fold_errors(x, y, &labels, k, &grid, mixing)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_fold: Vec<Result<Vec<f64>>> =
        (0..opts.folds).map(|k| fold_errors(x, y, &labels, k, &grid, mixing)).collect();
    let per_fold = per_fold.into_iter().collect::<Result<Vec<_>>>()?;

    let k = opts.folds as f64;
    let curve: Vec<CvPoint> = grid
        .iter()
        .enumerate()
        .map(|(l, &lambda)| {
            let vals: Vec<f64> = per_fold.iter().map(|f| f[l]).collect();
            let mean = vals.iter().sum::<f64>() / k;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
            CvPoint { lambda, mean, se: (var / k).sqrt() }
        })
        .collect();
    let best = curve
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.mean.total_cmp(&b.1.mean).then(a.0.cmp(&b.0)))
        .map(|(l, _)| l)
        .unwrap_or(0);

    Ok(FitResult {
        coefficients: full.original_coefficients(best),
        standardized_coefficients: full.standardized_coefficients(best),
        intercept: full.intercept_per_lambda[best],
        lambda_selected: grid[best],
        lambda_grid: grid,
        cv_error_curve: curve,
        robust_se: None,
        intercept_se: None,
    })
}

/// Cross-validated lasso.
pub fn cv_select_lambda(x: &DMatrix<f64>, y: &[f64], folds: usize, seed: u64) -> Result<FitResult> {
    elastic_net_fit(x, y, 1.0, &CvOptions::new(folds, seed))
}

/// Elastic net at a single fixed λ.
pub fn fit_at_lambda(x: &DMatrix<f64>, y: &[f64], mixing: f64, lambda: f64) -> Result<FitResult> {
    let design = Design::new(x, y)?;
    let grid = GridSpec::Explicit { lambdas: vec![lambda] }.build(lambda)?;
    let path = enet_path_on(&design, &grid, mixing, &PathOptions::default())?;
    Ok(FitResult {
        coefficients: path.original_coefficients(0),
        standardized_coefficients: path.standardized_coefficients(0),
        intercept: path.intercept_per_lambda[0],
        lambda_selected: lambda,
        lambda_grid: grid,
        cv_error_curve: Vec::new(),
        robust_se: None,
        intercept_se: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_design(seed: u64, n: usize, p: usize) -> DMatrix<f64> {
        let mut r = rng::rng_from(seed, &[1]);
        DMatrix::from_row_slice(n, p, &rng::normals(&mut r, n * p))
    }

    #[test]
    fn pure_noise_selects_almost_nothing() {
        let x = noise_design(1, 40, 10);
        let mut r = rng::rng_from(2, &[]);
        let y = rng::normals(&mut r, 40);
        let fit = cv_select_lambda(&x, &y, 10, 3).unwrap();
        assert!(fit.nonzero().len() <= 5, "{:?}", fit.nonzero());
        assert!(fit.lambda_grid.contains(&fit.lambda_selected));
    }

    #[test]
    fn strong_single_signal_is_found() {
        let x = noise_design(5, 40, 10);
        let mut r = rng::rng_from(6, &[]);
        let e = rng::normals(&mut r, 40);
        let y: Vec<f64> = (0..40).map(|i| 5.0 * x[(i, 0)] + 0.1 * e[i]).collect();
        let fit = cv_select_lambda(&x, &y, 10, 3).unwrap();
        assert!(fit.coefficients[0] > 0.0);
    }

    #[test]
    fn leave_one_out_on_five_rows() {
        let x = noise_design(9, 5, 2);
        let y = vec![1.0, 2.0, 0.5, -1.0, 0.3];
        let fit = cv_select_lambda(&x, &y, 5, 0).unwrap();
        assert!(fit.lambda_grid.contains(&fit.lambda_selected));
        assert!(cv_select_lambda(&x, &y, 6, 0).is_err());
        assert!(cv_select_lambda(&x, &y, 1, 0).is_err());
    }

    #[test]
    fn folds_are_balanced_and_seeded() {
        let a = fold_assignment(23, 5, 4);
        assert_eq!(a, fold_assignment(23, 5, 4));
        for k in 0..5 {
            let c = a.iter().filter(|&&f| f == k).count();
            assert!(c == 4 || c == 5);
        }
    }

    #[test]
    fn mixing_one_matches_lasso() {
        let x = noise_design(11, 30, 6);
        let y: Vec<f64> = (0..30).map(|i| x[(i, 1)] - x[(i, 2)]).collect();
        let a = elastic_net_fit(&x, &y, 1.0, &CvOptions::new(5, 1)).unwrap();
        let b = cv_select_lambda(&x, &y, 5, 1).unwrap();
        for (u, v) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((u - v).abs() < 1e-6);
        }
        let zero = elastic_net_fit(&x, &[0.0; 30], 0.5, &CvOptions::new(5, 1)).unwrap();
        assert!(zero.coefficients.iter().all(|&b| b == 0.0));
    }
}
