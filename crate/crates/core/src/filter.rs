//! Feature statistics comparing each variable with its knockoff, and the
//! data-dependent threshold that controls the false discovery rate.

use serde::{Deserialize, Serialize};

use crate::data::GroupSpec;
use crate::error::{Error, Result};
use crate::regression::{FitResult, LassoPath};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    /// Lasso coefficient difference at the cross-validated λ.
    Lcd,
    /// Lasso signed max of the entry penalties.
    Lsm,
    /// Signed max of group entry penalties from a group lasso.
    GroupLsm,
}

/// One antisymmetric statistic per variable; large positive values favour
/// the original variable over its knockoff.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub w: Vec<f64>,
    pub kind: StatisticKind,
    pub lambda0: Option<f64>,
    pub group_map: Option<GroupSpec>,
}

impl FeatureStats {
    pub fn new(w: Vec<f64>, kind: StatisticKind) -> Self {
        Self { w, kind, lambda0: None, group_map: None }
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// `+∞` when no candidate threshold meets the target.
    pub threshold: f64,
    /// Zero-based indices with `w_j ≥ threshold`.
    pub selected: Vec<usize>,
    pub fdp_estimate: f64,
    pub nominal_fdr: f64,
    pub plus_variant: bool,
}

impl SelectionResult {
    pub fn indicators(&self, p: usize) -> Vec<bool> {
        let mut out = vec![false; p];
        for &j in &self.selected {
            out[j] = true;
        }
        out
    }
}

/// `W_j = |β_j(λ0)| - |β_{j+p}(λ0)|` from a fit over `[X, X̃]`
/// (standardized coefficients).
pub fn lcd_statistics(fit: &FitResult, p: usize) -> Result<FeatureStats> {
    let b = &fit.standardized_coefficients;
    if b.len() != 2 * p {
        return Err(Error::DimensionMismatch(format!("expected {} coefficients, got {}", 2 * p, b.len())));
    }
    let w = (0..p).map(|j| b[j].abs() - b[j + p].abs()).collect();
    Ok(FeatureStats { w, kind: StatisticKind::Lcd, lambda0: Some(fit.lambda_selected), group_map: None })
}

fn signed_max(a: f64, b: f64) -> f64 {
    if a > b {
        a
    } else if b > a {
        -b
    } else {
        0.0
    }
}

/// `W_j = sign(λ_j - λ_{j+p}) · max(λ_j, λ_{j+p})` from entry penalties.
pub fn lsm_statistics(path: &LassoPath, p: usize) -> Result<FeatureStats> {
    let e = &path.entry_lambda;
    if e.len() != 2 * p {
        return Err(Error::DimensionMismatch(format!("expected {} entry penalties, got {}", 2 * p, e.len())));
    }
    let w = (0..p).map(|j| signed_max(e[j], e[j + p])).collect();
    Ok(FeatureStats::new(w, StatisticKind::Lsm))
}

/// Group signed max from a group-lasso path fitted over `groups.doubled()`;
/// the per-group statistic is broadcast to every member variable.
pub fn group_lsm_statistics(path: &LassoPath, groups: &GroupSpec) -> Result<FeatureStats> {
    let g = groups.group_count();
    let entry = path
        .group_entry_lambda
        .as_ref()
        .ok_or_else(|| Error::DimensionMismatch("path has no group entry penalties".into()))?;
    if entry.len() != 2 * g {
        return Err(Error::DimensionMismatch(format!("expected {} group penalties, got {}", 2 * g, entry.len())));
    }
    let per_group: Vec<f64> = (0..g).map(|k| signed_max(entry[k], entry[k + g])).collect();
    let w = groups.assignments().iter().map(|&k| per_group[k - 1]).collect();
    Ok(FeatureStats { w, kind: StatisticKind::GroupLsm, lambda0: None, group_map: Some(groups.clone()) })
}

/// Per-group statistic (one entry per group) of broadcast group stats.
pub fn group_values(stats: &FeatureStats) -> Option<Vec<f64>> {
    let groups = stats.group_map.as_ref()?;
    Some(groups.members().iter().map(|m| stats.w[m[0]]).collect())
}

/// Raw ratio `#{W_j ≤ -t} / max(1, #{W_j ≥ t})`.
pub fn fdp_hat(stats: &FeatureStats, t: f64) -> f64 {
    ratio(&stats.w, t, 0.0)
}

fn ratio(w: &[f64], t: f64, offset: f64) -> f64 {
    let neg = w.iter().filter(|&&v| v <= -t).count() as f64;
    let pos = w.iter().filter(|&&v| v >= t).count().max(1) as f64;
    (neg + offset) / pos
}

/// Smallest candidate `t` (distinct positive `|W_j|`) whose estimated FDP is
/// at most `alpha`; `plus_variant` adds one to the numerator.
///
/// For grouped statistics the count runs over groups, not broadcast members.
pub fn knockoff_threshold(stats: &FeatureStats, alpha: f64, plus_variant: bool) -> Result<SelectionResult> {
    if stats.is_empty() {
        return Err(Error::EmptyStats);
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} outside (0, 1]")));
    }
    let counted: Vec<f64> = group_values(stats).unwrap_or_else(|| stats.w.clone());
    let mut candidates: Vec<f64> = counted.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    let offset = if plus_variant { 1.0 } else { 0.0 };
    let threshold = candidates.into_iter().find(|&t| ratio(&counted, t, offset) <= alpha).unwrap_or(f64::INFINITY);
    let selected: Vec<usize> = stats.w.iter().enumerate().filter(|(_, &v)| v >= threshold).map(|(j, _)| j).collect();
    let fdp_estimate = if selected.is_empty() { 0.0 } else { ratio(&counted, threshold, 0.0) };
    Ok(SelectionResult { threshold, selected, fdp_estimate, nominal_fdr: alpha, plus_variant })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats(w: &[f64]) -> FeatureStats {
        FeatureStats::new(w.to_vec(), StatisticKind::Lcd)
    }

    /// Brute-force threshold: scan every candidate t, smallest qualifying.
    fn brute_threshold(w: &[f64], alpha: f64, plus: bool) -> f64 {
        let mut best = f64::INFINITY;
        for &c in w {
            let t = c.abs();
            if t == 0.0 {
                continue;
            }
            let neg = w.iter().filter(|&&v| v <= -t).count() as f64 + if plus { 1.0 } else { 0.0 };
            let pos = w.iter().filter(|&&v| v >= t).count().max(1) as f64;
            if neg / pos <= alpha && t < best {
                best = t;
            }
        }
        best
    }

    #[test]
    fn all_positive_selects_everything() {
        let r = knockoff_threshold(&stats(&[3.0, 2.0, 1.0]), 0.5, false).unwrap();
        assert_eq!(r.threshold, 1.0);
        assert_eq!(r.selected, vec![0, 1, 2]);
        assert_eq!(r.fdp_estimate, 0.0);
    }

    #[test]
    fn mixed_signs_enumerated() {
        // t=1: 2/3 > 0.5; t=2: 1/3 ≤ 0.5
        let w = [5.0, 4.0, -3.0, 2.0, -1.0];
        let r = knockoff_threshold(&stats(&w), 0.5, false).unwrap();
        assert_eq!(r.threshold, brute_threshold(&w, 0.5, false));
        assert_eq!(r.threshold, 2.0);
        assert_eq!(r.selected, vec![0, 1, 3]);
    }

    #[test]
    fn all_negative_selects_nothing() {
        let r = knockoff_threshold(&stats(&[-1.0, -2.0]), 0.9, false).unwrap();
        assert!(r.threshold.is_infinite());
        assert!(r.selected.is_empty());
        assert_eq!(r.fdp_estimate, 0.0);
    }

    #[test]
    fn fdp_hat_examples() {
        assert_eq!(fdp_hat(&stats(&[1.0, 1.0, 1.0]), 1.0), 0.0);
        assert_eq!(fdp_hat(&stats(&[2.0, -2.0]), 2.0), 1.0);
        assert_eq!(fdp_hat(&stats(&[-1.0, -2.0]), 1.0), 2.0);
    }

    #[test]
    fn empty_stats_error() {
        assert_eq!(knockoff_threshold(&stats(&[]), 0.1, false), Err(Error::EmptyStats));
    }

    #[test]
    fn lcd_examples() {
        let fit = FitResult {
            coefficients: vec![],
            standardized_coefficients: vec![0.5, 0.7, 0.5, 0.0],
            intercept: 0.0,
            lambda_selected: 0.1,
            lambda_grid: vec![0.1],
            cv_error_curve: vec![],
            robust_se: None,
            intercept_se: None,
        };
        let s = lcd_statistics(&fit, 2).unwrap();
        assert_eq!(s.w, vec![0.0, 0.7]);
        assert!(lcd_statistics(&fit, 3).is_err());
    }

    fn path_with_entries(entry: Vec<f64>, group: Option<Vec<f64>>) -> LassoPath {
        LassoPath {
            lambda_grid: vec![1.0],
            coefficients: nalgebra::DMatrix::zeros(1, entry.len()),
            entry_lambda: entry,
            intercept_per_lambda: vec![0.0],
            group_entry_lambda: group,
            x_mean: vec![],
            x_scale: vec![],
            y_mean: 0.0,
        }
    }

    #[test]
    fn lsm_examples() {
        let path = path_with_entries(vec![0.8, 0.3, 0.5, 0.3, 0.8, 0.5], None);
        let s = lsm_statistics(&path, 3).unwrap();
        assert_eq!(s.w, vec![0.8, -0.8, 0.0]);
    }

    #[test]
    fn group_lsm_examples() {
        // groups: {0,1}, {2}, {3}
        let groups = GroupSpec::new(vec![1, 1, 2, 3]).unwrap();
        let path = path_with_entries(vec![0.0; 8], Some(vec![0.0, 0.6, 0.4, 0.0, 0.0, 0.7]));
        let s = group_lsm_statistics(&path, &groups).unwrap();
        assert_eq!(s.w, vec![0.0, 0.0, 0.6, -0.7]);
        assert_eq!(group_values(&s).unwrap(), vec![0.0, 0.6, -0.7]);
    }

    proptest! {
        #[test]
        fn threshold_matches_brute_force(w in prop::collection::vec(-5i32..=5, 1..30), plus: bool, a in 1u32..=20) {
            let w: Vec<f64> = w.into_iter().map(f64::from).collect();
            let alpha = f64::from(a) / 20.0;
            let r = knockoff_threshold(&stats(&w), alpha, plus).unwrap();
            prop_assert_eq!(r.threshold, brute_threshold(&w, alpha, plus));
        }

        #[test]
        fn larger_alpha_never_shrinks_selection(w in prop::collection::vec(-10.0f64..10.0, 1..40), a in 0.01f64..1.0, b in 0.01f64..1.0, plus: bool) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let s = stats(&w);
            let r_lo = knockoff_threshold(&s, lo, plus).unwrap();
            let r_hi = knockoff_threshold(&s, hi, plus).unwrap();
            prop_assert!(r_hi.threshold <= r_lo.threshold);
            prop_assert!(r_lo.selected.iter().all(|j| r_hi.selected.contains(j)));
        }
    }
}
