use nalgebra::{DMatrix, DVector};

use super::cd::{CdState, Design};
use super::{GridSpec, LassoPath};
use crate::data::GroupSpec;
use crate::error::{Error, Result};
use crate::linalg;

struct Block {
    members: Vec<usize>,
    weight: f64,
    lipschitz: f64,
}

fn blocks(design: &Design, groups: &GroupSpec) -> Vec<Block> {
    groups
        .members()
        .into_iter()
        .map(|members| {
            let sub = DMatrix::from_fn(members.len(), members.len(), |a, b| design.gram[(members[a], members[b])]);
            let lipschitz = if members.len() == 1 { sub[(0, 0)] } else { linalg::max_eigenvalue(&sub) };
            Block { weight: (members.len() as f64).sqrt(), members, lipschitz }
        })
        .collect()
}

/// One majorized proximal step per block; returns the largest coefficient change.
fn group_sweep(design: &Design, st: &mut CdState, blocks: &[Block], which: &[usize], lambda: f64) -> f64 {
    let mut max_change = 0.0_f64;
    for &g in which {
        let b = &blocks[g];
        if b.lipschitz <= 0.0 {
            continue;
        }
        let v: Vec<f64> = b.members.iter().map(|&j| st.beta[j] + st.resid_grad[j] / b.lipschitz).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let factor = if norm > 0.0 { (1.0 - lambda * b.weight / (b.lipschitz * norm)).max(0.0) } else { 0.0 };
        for (k, &j) in b.members.iter().enumerate() {
            let delta = factor * v[k] - st.beta[j];
            if delta != 0.0 {
                st.shift(design, j, delta);
                max_change = max_change.max(delta.abs());
            }
        }
    }
    max_change
}

/// Group lasso path by block coordinate descent, penalty `λ √|g| ‖β_g‖₂`.
///
/// `entry_lambda` broadcasts each group's entry λ to its members;
/// `group_entry_lambda` holds one value per group.
pub fn group_lasso_path(x: &DMatrix<f64>, y: &[f64], groups: &GroupSpec, grid: &GridSpec) -> Result<LassoPath> {
    if groups.len() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "group map covers {} columns, design has {}",
            groups.len(),
            x.ncols()
        )));
    }
    let design = Design::new(x, y)?;
    let blocks = blocks(&design, groups);
    let lambda_max = blocks
        .iter()
        .map(|b| {
            let c = DVector::from_iterator(b.members.len(), b.members.iter().map(|&j| design.xty[j]));
            c.norm() / b.weight
        })
        .fold(0.0_f64, f64::max);
    let grid = grid.build(lambda_max)?;
    let q = design.n_coefficients();
    let tol = design.tol();
    let all: Vec<usize> = (0..blocks.len()).collect();

    let mut st = CdState::new(&design);
    let mut coefficients = DMatrix::zeros(grid.len(), q);
    let mut group_entry = vec![0.0; blocks.len()];
    let mut intercepts = Vec::with_capacity(grid.len());
    let max_sweeps = 10_000;
    for (l, &lambda) in grid.iter().enumerate() {
        let mut sweeps = 0;
        loop {
            let change = group_sweep(&design, &mut st, &blocks, &all, lambda);
            sweeps += 1;
            if change < tol {
                break;
            }
            loop {
                let active: Vec<usize> =
                    (0..blocks.len()).filter(|&g| blocks[g].members.iter().any(|&j| st.beta[j] != 0.0)).collect();
                let change = group_sweep(&design, &mut st, &blocks, &active, lambda);
                sweeps += 1;
                if change < tol {
                    break;
                }
                if sweeps >= max_sweeps {
                    return Err(Error::Diverged { sweeps, lambda });
                }
            }
            if sweeps >= max_sweeps {
                return Err(Error::Diverged { sweeps, lambda });
            }
        }
        for j in 0..q {
            coefficients[(l, j)] = st.beta[j];
        }
        for (g, b) in blocks.iter().enumerate() {
            if group_entry[g] == 0.0 && b.members.iter().any(|&j| st.beta[j] != 0.0) {
                group_entry[g] = lambda;
            }
        }
        intercepts.push(design.intercept(&st.beta));
    }
    let entry_lambda = groups.assignments().iter().map(|&g| group_entry[g - 1]).collect();
    Ok(LassoPath {
        lambda_grid: grid,
        coefficients,
        entry_lambda,
        intercept_per_lambda: intercepts,
        group_entry_lambda: Some(group_entry),
        x_mean: design.x_mean.clone(),
        x_scale: design.x_scale.clone(),
        y_mean: design.y_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regression::lasso_path;
    use crate::rng;

    fn random(seed: u64, n: usize, q: usize) -> DMatrix<f64> {
        let mut r = rng::rng_from(seed, &[]);
        DMatrix::from_row_slice(n, q, &rng::normals(&mut r, n * q))
    }

    #[test]
    fn zero_response_keeps_groups_inactive() {
        let x = random(1, 20, 4);
        let path =
            group_lasso_path(&x, &[0.0; 20], &GroupSpec::from_sizes(&[2, 2]).unwrap(), &GridSpec::default()).unwrap();
        assert!(path.group_entry_lambda.unwrap().iter().all(|&l| l == 0.0));
    }

    #[test]
    fn singleton_groups_reduce_to_lasso() {
        let x = random(3, 10, 6);
        let mut r = rng::rng_from(4, &[]);
        let e = rng::normals(&mut r, 10);
        let y: Vec<f64> = (0..10).map(|i| x[(i, 0)] * 2.0 - x[(i, 3)] + 0.5 * e[i]).collect();
        let grid = GridSpec::default();
        let lasso = lasso_path(&x, &y, &grid).unwrap();
        let group = group_lasso_path(&x, &y, &GroupSpec::singletons(6), &grid).unwrap();
        assert_eq!(lasso.lambda_grid, group.lambda_grid);
        for l in 0..lasso.len() {
            for j in 0..6 {
                let a = lasso.coefficients[(l, j)] != 0.0;
                let b = group.coefficients[(l, j)] != 0.0;
                assert_eq!(a, b, "λ index {l}, coef {j}");
            }
        }
    }

    #[test]
    fn predictive_group_enters_first() {
        let x = random(7, 60, 6);
        let y: Vec<f64> = (0..60).map(|i| x[(i, 2)] + x[(i, 3)]).collect();
        let groups = GroupSpec::from_sizes(&[2, 2, 2]).unwrap();
        let path = group_lasso_path(&x, &y, &groups, &GridSpec::default()).unwrap();
        let e = path.group_entry_lambda.unwrap();
        assert!(e[1] > e[0] && e[1] > e[2], "{e:?}");
        assert_eq!(path.entry_lambda[2], e[1]);
    }
}
