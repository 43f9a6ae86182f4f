//! One PCA per predefined variable group, keeping at most `cap` components
//! that reach the cumulative variance threshold.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, GroupSpec};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComponents {
    /// Zero-based columns of the source data belonging to this group.
    pub columns: Vec<usize>,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    /// `group size × retained`, orthonormal columns.
    pub loadings: DMatrix<f64>,
    /// All eigenvalue shares, descending.
    pub explained_variance_ratio: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub retained: usize,
}

impl GroupComponents {
    pub fn captured_variance(&self) -> f64 {
        self.explained_variance_ratio[..self.retained].iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPcaModel {
    pub groups: Vec<GroupComponents>,
    pub component_names: Vec<String>,
    pub input_names: Vec<String>,
    pub cap: usize,
    pub var_threshold: f64,
    /// First and last label of the rows used for fitting, when known.
    pub fit_window: Option<(String, String)>,
}

impl GroupPcaModel {
    pub fn total_components(&self) -> usize {
        self.component_names.len()
    }

    /// Maps every component to its source group.
    pub fn component_groups(&self) -> GroupSpec {
        let assignments =
            self.groups.iter().enumerate().flat_map(|(g, c)| std::iter::repeat_n(g + 1, c.retained)).collect();
        GroupSpec::new(assignments).expect("every group retains at least one component")
    }
}

/// Smallest `m` with cumulative share `≥ threshold`, capped.
fn retained_count(ratios: &[f64], cap: usize, threshold: f64) -> usize {
    let mut cum = 0.0;
    let mut m = ratios.len();
    for (i, r) in ratios.iter().enumerate() {
        cum += r;
        if cum >= threshold - 1e-12 {
            m = i + 1;
            break;
        }
    }
    m.min(cap).max(1)
}

pub fn fit_group_pca(x: &DataMatrix, groups: &GroupSpec, cap: usize, var_threshold: f64) -> Result<GroupPcaModel> {
    if cap == 0 {
        return Err(Error::InvalidArgument("cap must be at least 1".into()));
    }
    if !(var_threshold > 0.0 && var_threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!("variance threshold {var_threshold} outside (0, 1]")));
    }
    if groups.len() != x.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "group map covers {} variables, data has {}",
            groups.len(),
            x.ncols()
        )));
    }
    if x.nrows() < 2 {
        return Err(Error::TooFewRows { needed: 2, got: x.nrows() });
    }
    x.ensure_finite()?;
    let means = linalg::column_means(x.values());
    let sds = linalg::column_sds(x.values(), &means);
    if let Some(j) = sds.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::ZeroVarianceColumn(j));
    }

    let mut fitted = Vec::new();
    let mut names = Vec::new();
    for (g, cols) in groups.members().into_iter().enumerate() {
        if cols.is_empty() {
            return Err(Error::EmptyGroup(g + 1));
        }
        let center: Vec<f64> = cols.iter().map(|&j| means[j]).collect();
        let scale: Vec<f64> = cols.iter().map(|&j| sds[j]).collect();
        let z = standardize(x.values(), &cols, &center, &scale);
        let corr = linalg::covariance(&z);
        let (vals, vecs) = linalg::sym_eigen(&corr);
        let vals: Vec<f64> = vals.into_iter().map(|v| v.max(0.0)).collect();
        let total: f64 = vals.iter().sum();
        let ratios: Vec<f64> = vals.iter().map(|v| v / total).collect();
        let retained = retained_count(&ratios, cap, var_threshold);
        let mut loadings = vecs.columns(0, retained).into_owned();
        for mut c in loadings.column_iter_mut() {
            let lead = c.iter().copied().fold(0.0_f64, |a, v| if v.abs() > a.abs() { v } else { a });
            if lead < 0.0 {
                c.neg_mut();
            }
        }
        for k in 0..retained {
            names.push(format!("PC{}.{}", g + 1, k + 1));
        }
        fitted.push(GroupComponents {
            columns: cols,
            center,
            scale,
            loadings,
            explained_variance_ratio: ratios,
            eigenvalues: vals,
            retained,
        });
    }
    Ok(GroupPcaModel {
        groups: fitted,
        component_names: names,
        input_names: x.names().to_vec(),
        cap,
        var_threshold,
        fit_window: None,
    })
}

fn standardize(x: &DMatrix<f64>, cols: &[usize], center: &[f64], scale: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(x.nrows(), cols.len(), |i, k| (x[(i, cols[k])] - center[k]) / scale[k])
}

/// Project rows onto the fitted loadings, groups concatenated in order.
pub fn transform(model: &GroupPcaModel, x_new: &DataMatrix) -> Result<DataMatrix> {
    if x_new.ncols() != model.input_names.len() {
        return Err(Error::SchemaMismatch(format!(
            "expected {} columns, got {}",
            model.input_names.len(),
            x_new.ncols()
        )));
    }
    if let Some((j, _)) = x_new.names().iter().zip(&model.input_names).enumerate().find(|(_, (a, b))| a != b) {
        return Err(Error::SchemaMismatch(format!(
            "column {j} is '{}', model expects '{}'",
            x_new.names()[j],
            model.input_names[j]
        )));
    }
    let n = x_new.nrows();
    let mut out = DMatrix::zeros(n, model.total_components());
    let mut offset = 0;
    for g in &model.groups {
        let z = standardize(x_new.values(), &g.columns, &g.center, &g.scale);
        let scores = z * &g.loadings;
        out.columns_mut(offset, g.retained).copy_from(&scores);
        offset += g.retained;
    }
    DataMatrix::new(out, model.component_names.clone())
}

/// Share of variance each group's retained components capture.
pub fn captured_variance(model: &GroupPcaModel) -> DVector<f64> {
    DVector::from_iterator(model.groups.len(), model.groups.iter().map(GroupComponents::captured_variance))
}
