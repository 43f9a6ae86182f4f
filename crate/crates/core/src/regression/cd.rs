use nalgebra::DMatrix;

use super::{soft_threshold, GridSpec, LassoPath};
use crate::error::{Error, Result};

/// Sufficient statistics of a standardized least-squares problem.
#[derive(Debug, Clone)]
pub struct Design {
    pub n: usize,
    pub x_mean: Vec<f64>,
    /// `1/n` standard deviations; `0` marks a constant column, which is never
    /// allowed to enter.
    pub x_scale: Vec<f64>,
    pub y_mean: f64,
    pub y_sd: f64,
    /// `Zᵀ Z / n` for the standardized columns `Z`.
    pub gram: DMatrix<f64>,
    /// `Zᵀ (y - ȳ) / n`.
    pub xty: Vec<f64>,
    /// `‖y - ȳ‖² / n`.
    pub yty: f64,
}

impl Design {
    pub fn new(x: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        let n = x.nrows();
        if n != y.len() {
            return Err(Error::LengthMismatch { left: n, right: y.len() });
        }
        if n < 2 {
            return Err(Error::TooFewRows { needed: 2, got: n });
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput("regression inputs".into()));
        }
        let nf = n as f64;
        let q = x.ncols();
        let y_mean = y.iter().sum::<f64>() / nf;
        let yc: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let yty = yc.iter().map(|v| v * v).sum::<f64>() / nf;
        let mut z = x.clone();
        let mut x_mean = vec![0.0; q];
        let mut x_scale = vec![0.0; q];
        for (j, mut col) in z.column_iter_mut().enumerate() {
            let m = col.sum() / nf;
            col.add_scalar_mut(-m);
            let sd = (col.norm_squared() / nf).sqrt();
            x_mean[j] = m;
            if sd > 1e-12 * (1.0 + m.abs()) {
                col /= sd;
                x_scale[j] = sd;
            } else {
                col.fill(0.0);
            }
        }
        let gram = z.tr_mul(&z) / nf;
        let xty = (0..q).map(|j| z.column(j).iter().zip(&yc).map(|(a, b)| a * b).sum::<f64>() / nf).collect();
        Ok(Self { n, x_mean, x_scale, y_mean, y_sd: yty.sqrt(), gram, xty, yty })
    }

    pub fn n_coefficients(&self) -> usize {
        self.xty.len()
    }

    pub(crate) fn tol(&self) -> f64 {
        1e-7 * if self.y_sd > 0.0 { self.y_sd } else { 1.0 }
    }

    /// Intercept paired with the original-scale version of `beta_std`.
    pub fn intercept(&self, beta_std: &[f64]) -> f64 {
        self.y_mean
            - beta_std
                .iter()
                .zip(&self.x_mean)
                .zip(&self.x_scale)
                .map(|((b, m), s)| if *s > 0.0 { b / s * m } else { 0.0 })
                .sum::<f64>()
    }
}

/// Solver limits shared by the path routines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOptions {
    pub max_sweeps: usize,
    pub record_objective: bool,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self { max_sweeps: 10_000, record_objective: false }
    }
}

/// State of coordinate descent on one design: coefficients and the negative
/// gradient `c - Gβ` of the smooth part.
pub(crate) struct CdState {
    pub beta: Vec<f64>,
    pub resid_grad: Vec<f64>,
}

impl CdState {
    pub fn new(design: &Design) -> Self {
        Self { beta: vec![0.0; design.n_coefficients()], resid_grad: design.xty.clone() }
    }

    pub fn shift(&mut self, design: &Design, j: usize, delta: f64) {
        self.beta[j] += delta;
        let col = design.gram.column(j);
        for (g, gj) in self.resid_grad.iter_mut().zip(col.iter()) {
            *g -= gj * delta;
        }
    }

    /// `(1/2n)‖y - Xβ‖²` via the Gram representation.
    pub fn loss(&self, design: &Design) -> f64 {
        // ½βᵀGβ - cᵀβ + ½ yᵀy/n, with Gβ = c - resid_grad
        let mut quad = 0.0;
        let mut lin = 0.0;
        for j in 0..self.beta.len() {
            let gb = design.xty[j] - self.resid_grad[j];
            quad += self.beta[j] * gb;
            lin += self.beta[j] * design.xty[j];
        }
        0.5 * quad - lin + 0.5 * design.yty
    }
}

fn enet_penalty(beta: &[f64], lambda: f64, mixing: f64) -> f64 {
    lambda * beta.iter().map(|b| mixing * b.abs() + (1.0 - mixing) * b * b).sum::<f64>()
}

/// One coordinate pass over `coords`; returns the largest absolute change.
fn enet_sweep(design: &Design, st: &mut CdState, coords: &[usize], lambda: f64, mixing: f64) -> f64 {
    let l1 = lambda * mixing;
    let l2 = 2.0 * lambda * (1.0 - mixing);
    let mut max_change = 0.0_f64;
    for &j in coords {
        let gjj = design.gram[(j, j)];
        if gjj <= 0.0 {
            continue;
        }
        let z = st.resid_grad[j] + gjj * st.beta[j];
        let new = soft_threshold(z, l1) / (gjj + l2);
        let delta = new - st.beta[j];
        if delta != 0.0 {
            st.shift(design, j, delta);
            max_change = max_change.max(delta.abs());
        }
    }
    max_change
}

/// Absolute tolerance on the optimality conditions checked before stopping.
const KKT_TOL: f64 = 5e-8;

/// Largest violation of the elastic-net optimality conditions at `st`.
fn kkt_violation(st: &CdState, lambda: f64, mixing: f64) -> f64 {
    let l1 = lambda * mixing;
    let l2 = 2.0 * lambda * (1.0 - mixing);
    st.beta.iter().zip(&st.resid_grad).fold(0.0_f64, |worst, (&b, &g)| {
        let v = if b == 0.0 { (g.abs() - l1).max(0.0) } else { (g - l2 * b - l1 * b.signum()).abs() };
        worst.max(v)
    })
}

/// Minimise the elastic-net objective at one λ from a warm start.
/// Returns the objective after every sweep when `record` is set.
pub(crate) fn solve_enet(
    design: &Design,
    st: &mut CdState,
    lambda: f64,
    mixing: f64,
    opts: &PathOptions,
) -> Result<Vec<f64>> {
    let q = design.n_coefficients();
    let all: Vec<usize> = (0..q).collect();
    let tol = design.tol();
    let mut trace = Vec::new();
    let mut sweeps = 0;
    loop {
        let change = enet_sweep(design, st, &all, lambda, mixing);
        sweeps += 1;
        if opts.record_objective {
            trace.push(st.loss(design) + enet_penalty(&st.beta, lambda, mixing));
        }
        // a sweep that moves nothing is a fixed point up to rounding
        if change == 0.0 || (change < tol && kkt_violation(st, lambda, mixing) <= KKT_TOL) {
            break;
        }
        // iterate on the active set until it settles, then re-check everything
        loop {
            let active: Vec<usize> = (0..q).filter(|&j| st.beta[j] != 0.0).collect();
            let change = enet_sweep(design, st, &active, lambda, mixing);
            sweeps += 1;
            if opts.record_objective {
                trace.push(st.loss(design) + enet_penalty(&st.beta, lambda, mixing));
            }
            if change < tol {
                break;
            }
            if sweeps >= opts.max_sweeps {
                return Err(Error::Diverged { sweeps, lambda });
            }
        }
        if sweeps >= opts.max_sweeps {
            return Err(Error::Diverged { sweeps, lambda });
        }
    }
    Ok(trace)
}

pub(crate) fn enet_lambda_max(design: &Design, mixing: f64) -> f64 {
    let m = design.xty.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    m / mixing.max(1e-3)
}

/// Elastic-net path on a prepared design over an explicit grid.
pub(crate) fn enet_path_on(design: &Design, grid: &[f64], mixing: f64, opts: &PathOptions) -> Result<LassoPath> {
    let q = design.n_coefficients();
    let mut st = CdState::new(design);
    let mut coefficients = DMatrix::zeros(grid.len(), q);
    let mut entry_lambda = vec![0.0; q];
    let mut intercepts = Vec::with_capacity(grid.len());
    for (l, &lambda) in grid.iter().enumerate() {
        solve_enet(design, &mut st, lambda, mixing, opts)?;
        for j in 0..q {
            coefficients[(l, j)] = st.beta[j];
            if st.beta[j] != 0.0 && entry_lambda[j] == 0.0 {
                entry_lambda[j] = lambda;
            }
        }
        intercepts.push(design.intercept(&st.beta));
    }
    Ok(LassoPath {
        lambda_grid: grid.to_vec(),
        coefficients,
        entry_lambda,
        intercept_per_lambda: intercepts,
        group_entry_lambda: None,
        x_mean: design.x_mean.clone(),
        x_scale: design.x_scale.clone(),
        y_mean: design.y_mean,
    })
}

fn check_mixing(mixing: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&mixing) {
        return Err(Error::InvalidArgument(format!("mixing {mixing} outside [0, 1]")));
    }
    Ok(())
}

/// Lasso path with warm starts along a decreasing grid.
pub fn lasso_path(x: &DMatrix<f64>, y: &[f64], grid: &GridSpec) -> Result<LassoPath> {
    elastic_net_path(x, y, 1.0, grid)
}

/// Elastic-net path; `mixing = 1` is the lasso.
pub fn elastic_net_path(x: &DMatrix<f64>, y: &[f64], mixing: f64, grid: &GridSpec) -> Result<LassoPath> {
    check_mixing(mixing)?;
    let design = Design::new(x, y)?;
    let lambdas = grid.build(enet_lambda_max(&design, mixing))?;
    enet_path_on(&design, &lambdas, mixing, &PathOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    /// Columns with mean zero and `XᵀX/n = I` (scaled Hadamard-like design).
    pub(crate) fn orthonormal_design(n: usize, q: usize) -> DMatrix<f64> {
        // Walsh functions: column j uses bit j+1 of the row index
        assert!(n.is_power_of_two() && (1usize << q) <= n);
        DMatrix::from_fn(n, q, |i, j| if (i >> j) & 1 == 0 { 1.0 } else { -1.0 })
    }

    fn random_instance(seed: u64, n: usize, q: usize) -> (DMatrix<f64>, Vec<f64>) {
        let mut r = rng::rng_from(seed, &[]);
        let x = DMatrix::from_row_slice(n, q, &rng::normals(&mut r, n * q));
        let noise = rng::normals(&mut r, n);
        let y = (0..n).map(|i| 2.0 * x[(i, 0)] - 1.5 * x[(i, 1)] + noise[i]).collect();
        (x, y)
    }

    #[test]
    fn zero_response_gives_zero_path() {
        let x = orthonormal_design(16, 3);
        let path = lasso_path(&x, &[0.0; 16], &GridSpec::default()).unwrap();
        assert!(path.coefficients.iter().all(|&b| b == 0.0));
        assert!(path.entry_lambda.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn orthonormal_design_soft_thresholds() {
        let n = 16;
        let x = orthonormal_design(n, 2);
        // y = 1.0·x1 + 0.8·x2 gives Xᵀy/n = (1.0, 0.8)
        let y: Vec<f64> = (0..n).map(|i| x[(i, 0)] + 0.8 * x[(i, 1)]).collect();
        let grid = GridSpec::Explicit { lambdas: vec![1.0, 0.9, 0.5, 0.3, 0.1] };
        let path = lasso_path(&x, &y, &grid).unwrap();
        let l = 3; // λ = 0.3
        assert!((path.coefficients[(l, 0)] - 0.7).abs() < 1e-6);
        assert!((path.coefficients[(l, 1)] - 0.5).abs() < 1e-6);
        // largest grid λ below 0.8
        assert_eq!(path.entry_lambda[1], 0.5);
        assert_eq!(path.entry_lambda[0], 0.9);
    }

    #[test]
    fn first_grid_point_is_all_zero() {
        let (x, y) = random_instance(4, 40, 6);
        let path = lasso_path(&x, &y, &GridSpec::default()).unwrap();
        assert!(path.coefficients.row(0).iter().all(|&b| b == 0.0));
        for (j, &e) in path.entry_lambda.iter().enumerate() {
            assert!(e == 0.0 || path.lambda_grid.contains(&e), "coef {j}");
        }
    }

    #[test]
    fn objective_never_increases_within_a_lambda() {
        let (x, y) = random_instance(8, 30, 12);
        let design = Design::new(&x, &y).unwrap();
        let grid = GridSpec::default().build(enet_lambda_max(&design, 1.0)).unwrap();
        let opts = PathOptions { record_objective: true, ..Default::default() };
        let mut st = CdState::new(&design);
        for &lambda in grid.iter().step_by(7) {
            let trace = solve_enet(&design, &mut st, lambda, 1.0, &opts).unwrap();
            assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{trace:?}");
        }
    }

    #[test]
    fn ridge_limit_matches_closed_form() {
        let n = 16;
        let x = orthonormal_design(n, 2);
        let y: Vec<f64> = (0..n).map(|i| x[(i, 0)] - 0.4 * x[(i, 1)]).collect();
        let lambda = 0.25;
        let path = elastic_net_path(&x, &y, 0.0, &GridSpec::Explicit { lambdas: vec![lambda] }).unwrap();
        assert!((path.coefficients[(0, 0)] - 1.0 / (1.0 + 2.0 * lambda)).abs() < 1e-6);
        assert!((path.coefficients[(0, 1)] + 0.4 / (1.0 + 2.0 * lambda)).abs() < 1e-6);
    }

    #[test]
    fn constant_column_never_enters() {
        let (mut x, y) = random_instance(2, 20, 3);
        x.column_mut(2).fill(4.0);
        let path = lasso_path(&x, &y, &GridSpec::default()).unwrap();
        assert!(path.coefficients.column(2).iter().all(|&b| b == 0.0));
    }

    #[test]
    fn rejects_non_finite_input() {
        let (mut x, y) = random_instance(2, 20, 3);
        x[(0, 0)] = f64::NAN;
        assert!(matches!(lasso_path(&x, &y, &GridSpec::default()), Err(Error::NonFiniteInput(_))));
    }
}
