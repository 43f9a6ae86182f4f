//! Shared data containers: the observation matrix and variable-to-group maps.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An `n × p` observation matrix with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    names: Vec<String>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(Error::DimensionMismatch(format!("{} names for {} columns", names.len(), values.ncols())));
        }
        Ok(Self { values, names })
    }

    /// Columns named `x1..xp`.
    pub fn from_matrix(values: DMatrix<f64>) -> Self {
        let names = (1..=values.ncols()).map(|j| format!("x{j}")).collect();
        Self { values, names }
    }

    /// Build from row-major data.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != p) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Ok(Self::from_matrix(DMatrix::from_fn(n, p, |i, j| rows[i][j])))
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_values(self) -> DMatrix<f64> {
        self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j).iter().copied().collect()
    }

    /// Rows at `idx`, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Self {
        let p = self.ncols();
        let values = DMatrix::from_fn(idx.len(), p, |i, j| self.values[(idx[i], j)]);
        Self { values, names: self.names.clone() }
    }

    /// Columns at `idx`, in the given order.
    pub fn select_columns(&self, idx: &[usize]) -> Self {
        let values = DMatrix::from_fn(self.nrows(), idx.len(), |i, j| self.values[(i, idx[j])]);
        let names = idx.iter().map(|&j| self.names[j].clone()).collect();
        Self { values, names }
    }

    /// `[self, other]` side by side.
    pub fn hstack(&self, other: &DataMatrix) -> Result<Self> {
        if self.nrows() != other.nrows() {
            return Err(Error::DimensionMismatch(format!("hstack of {} and {} rows", self.nrows(), other.nrows())));
        }
        let p = self.ncols();
        let values = DMatrix::from_fn(self.nrows(), p + other.ncols(), |i, j| {
            if j < p {
                self.values[(i, j)]
            } else {
                other.values[(i, j - p)]
            }
        });
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        Ok(Self { values, names })
    }

    pub fn ensure_finite(&self) -> Result<()> {
        if let Some(k) = self.values.iter().position(|v| !v.is_finite()) {
            let n = self.nrows();
            return Err(Error::NonFiniteInput(format!("row {}, column {}", k % n, k / n)));
        }
        Ok(())
    }
}

/// Assignment of `p` variables to groups `1..=group_count`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSpec {
    assignments: Vec<usize>,
    group_count: usize,
    names: Option<Vec<String>>,
}

impl GroupSpec {
    /// Group ids must be exactly the contiguous set `1..=max`.
    pub fn new(assignments: Vec<usize>) -> Result<Self> {
        let group_count = assignments.iter().copied().max().unwrap_or(0);
        if assignments.contains(&0) {
            return Err(Error::InvalidArgument("group ids start at 1".into()));
        }
        let mut seen = vec![false; group_count];
        for &g in &assignments {
            seen[g - 1] = true;
        }
        if let Some(g) = seen.iter().position(|s| !s) {
            return Err(Error::EmptyGroup(g + 1));
        }
        Ok(Self { assignments, group_count, names: None })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.group_count {
            return Err(Error::DimensionMismatch(format!(
                "{} group names for {} groups",
                names.len(),
                self.group_count
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    /// Every variable in its own group.
    pub fn singletons(p: usize) -> Self {
        Self { assignments: (1..=p).collect(), group_count: p, names: None }
    }

    /// Contiguous groups of the given sizes.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let assignments = sizes.iter().enumerate().flat_map(|(g, &s)| std::iter::repeat_n(g + 1, s)).collect();
        Self::new(assignments)
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn group_count(&self) -> usize {
        self.group_count
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    /// Label of group `g` (1-based).
    pub fn name(&self, g: usize) -> String {
        self.names.as_ref().map(|n| n[g - 1].clone()).unwrap_or_else(|| g.to_string())
    }

    /// Member indices of each group, indexed `0..group_count`.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.group_count];
        for (j, &g) in self.assignments.iter().enumerate() {
            out[g - 1].push(j);
        }
        out
    }

    /// Groups over `[X, X̃]`: knockoff copy of group `g` becomes `g + G`.
    pub fn doubled(&self) -> Self {
        let g = self.group_count;
        let mut assignments = self.assignments.clone();
        assignments.extend(self.assignments.iter().map(|a| a + g));
        Self { assignments, group_count: 2 * g, names: None }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_ids_must_be_contiguous() {
        assert!(GroupSpec::new(vec![1, 1, 3]).is_err());
        assert!(GroupSpec::new(vec![0, 1]).is_err());
        let g = GroupSpec::new(vec![2, 1, 2]).unwrap();
        assert_eq!(g.group_count(), 2);
        assert_eq!(g.members(), vec![vec![1], vec![0, 2]]);
    }

    #[test]
    fn doubled_groups_offset_knockoff_twins() {
        let g = GroupSpec::from_sizes(&[2, 1]).unwrap().doubled();
        assert_eq!(g.assignments(), &[1, 1, 2, 3, 3, 4]);
    }

    #[test]
    fn hstack_requires_equal_rows() {
        let a = DataMatrix::from_rows(&[vec![1.0], vec![2.0]]).unwrap();
        let b = DataMatrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(a.hstack(&b).is_err());
        let c = a.hstack(&a).unwrap();
        assert_eq!(c.ncols(), 2);
        assert_eq!(c.names(), &["x1".to_string(), "x1".to_string()]);
    }
}
