use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::windows::{TimeIndexedDataset, WindowPlan};
use super::{mae, rmse};
use crate::data::{DataMatrix, GroupSpec};
use crate::error::{Error, Result};
use crate::filter::StatisticKind;
use crate::group_pca::{fit_group_pca, transform};
use crate::knockoffs::KnockoffMethod;
use crate::regression::{self, CvOptions, FitResult};
use crate::rng;
use crate::robust::{self, KnockoffConfig, ScoreMode, WeightKind, WeightScheme, WfdrOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WfdrCutoff {
    TopM { m: usize },
    Threshold { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionMethod {
    None,
    Wfdr { grid: Vec<f64>, weights: WeightKind, mode: ScoreMode, options: WfdrOptions, cutoff: WfdrCutoff },
    SingleKnockoff { alpha: f64 },
    GroupKnockoff { alpha: f64 },
}

impl SelectionMethod {
    pub fn label(&self) -> &'static str {
        match self {
            SelectionMethod::None => "none",
            SelectionMethod::Wfdr { .. } => "wfdr",
            SelectionMethod::SingleKnockoff { .. } => "single_knockoff",
            SelectionMethod::GroupKnockoff { .. } => "group_knockoff",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostEstimator {
    Ols,
    /// Mixing 0.5, penalty by cross-validation.
    #[serde(rename = "elastic_net")]
    ElasticNetCv,
    #[serde(rename = "lasso")]
    LassoCv,
}

impl PostEstimator {
    pub fn label(&self) -> &'static str {
        match self {
            PostEstimator::Ols => "ols",
            PostEstimator::ElasticNetCv => "elastic_net",
            PostEstimator::LassoCv => "lasso",
        }
    }
}

/// Where variable selection (and the group PCA) sees data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionScope {
    /// Select once on every row, then fit the estimator per split.
    FullSample,
    /// Refit PCA and reselect on each split's training rows only.
    TrainOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcaSettings {
    pub cap: usize,
    pub var_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastConfig {
    pub selection: SelectionMethod,
    pub estimator: PostEstimator,
    pub scope: SelectionScope,
    pub knockoff: KnockoffConfig,
    /// Variable groups, used for group knockoffs and the group PCA.
    pub groups: Option<GroupSpec>,
    pub pca: Option<PcaSettings>,
    pub cv_folds: usize,
    pub seed: u64,
}

impl ForecastConfig {
    pub fn new(selection: SelectionMethod, estimator: PostEstimator, seed: u64) -> Self {
        Self {
            selection,
            estimator,
            scope: SelectionScope::TrainOnly,
            knockoff: KnockoffConfig::default(),
            groups: None,
            pca: None,
            cv_folds: 10,
            seed,
        }
    }

    pub fn label(&self) -> String {
        format!("{}+{}", self.selection.label(), self.estimator.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStage {
    Pca,
    Selection,
    Estimator,
}

/// Rows consumed by one fit; `split = None` marks a full-sample fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub split: Option<usize>,
    pub stage: FitStage,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub label: String,
    pub n_train: usize,
    pub n_test: usize,
    pub selected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub scheme: String,
    pub selection: String,
    pub estimator: String,
    pub rmse: f64,
    pub mae: f64,
    pub n_predictions: usize,
    pub predictions: Vec<f64>,
    pub actual: Vec<f64>,
    pub test_rows: Vec<usize>,
    pub splits: Vec<SplitSummary>,
    pub audit: Vec<FitRecord>,
    pub leakage_free: bool,
}

impl ForecastReport {
    pub fn squared_errors(&self) -> Vec<f64> {
        self.predictions.iter().zip(&self.actual).map(|(p, a)| (p - a).powi(2)).collect()
    }
}

/// True when every per-split fit used only rows before that split's first test row.
pub fn audit_passes(plan: &WindowPlan, audit: &[FitRecord]) -> bool {
    audit.iter().all(|rec| match rec.split {
        Some(s) => {
            let first_test = plan.splits[s].test.iter().copied().min().unwrap_or(usize::MAX);
            rec.rows.iter().all(|&r| r < first_test)
        }
        None => false,
    })
}

/// Features after optional PCA, with the component→group map when PCA ran.
struct Features {
    train: DataMatrix,
    test: DataMatrix,
    groups: Option<GroupSpec>,
}

fn build_features(
    data: &TimeIndexedDataset,
    cfg: &ForecastConfig,
    fit_rows: &[usize],
    train: &[usize],
    test: &[usize],
) -> Result<Features> {
    match (cfg.pca, &cfg.groups) {
        (Some(pca), Some(groups)) => {
            let model = fit_group_pca(&data.x.select_rows(fit_rows), groups, pca.cap, pca.var_threshold)?;
            Ok(Features {
                train: transform(&model, &data.x.select_rows(train))?,
                test: transform(&model, &data.x.select_rows(test))?,
                groups: Some(model.component_groups()),
            })
        }
        (Some(_), None) => Err(Error::InvalidConfig("group PCA needs a group map".into())),
        (None, groups) => {
            Ok(Features { train: data.x.select_rows(train), test: data.x.select_rows(test), groups: groups.clone() })
        }
    }
}

fn select_columns(
    x: &DataMatrix,
    y: &[f64],
    groups: Option<&GroupSpec>,
    cfg: &ForecastConfig,
    seed: u64,
) -> Result<Vec<usize>> {
    let p = x.ncols();
    match &cfg.selection {
        SelectionMethod::None => Ok((0..p).collect()),
        SelectionMethod::SingleKnockoff { alpha } => {
            Ok(robust::knockoff_select(x, y, *alpha, &cfg.knockoff, seed)?.1.selected)
        }
        SelectionMethod::GroupKnockoff { alpha } => {
            let groups = groups.ok_or_else(|| Error::InvalidConfig("group knockoffs need a group map".into()))?;
            let kc = KnockoffConfig {
                method: KnockoffMethod::GroupEqui { groups: groups.clone() },
                statistic: StatisticKind::GroupLsm,
                ..cfg.knockoff.clone()
            };
            Ok(robust::knockoff_select(x, y, *alpha, &kc, seed)?.1.selected)
        }
        SelectionMethod::Wfdr { grid, weights, mode, options, cutoff } => {
            let scheme = WeightScheme::new(*weights, grid.len());
            let scores = robust::weighted_fdr_selection(x, y, grid, &cfg.knockoff, options, &scheme, *mode, seed)?;
            let pick = |s: &[f64]| match cutoff {
                WfdrCutoff::TopM { m } => robust::top_m(s, *m),
                WfdrCutoff::Threshold { value } => robust::above_threshold(s, *value),
            };
            match (cfg.pca, groups) {
                (Some(_), Some(map)) => {
                    let group_scores = robust::aggregate_group_scores(&scores.scores, map, *mode)?;
                    let keep = pick(&group_scores);
                    Ok((0..p).filter(|&c| keep.contains(&(map.assignments()[c] - 1))).collect())
                }
                _ => {
                    let mut sel = pick(&scores.scores);
                    sel.sort_unstable();
                    Ok(sel)
                }
            }
        }
    }
}

fn fit_estimator(x: &DMatrix<f64>, y: &[f64], est: PostEstimator, folds: usize, seed: u64) -> Result<FitResult> {
    match est {
        PostEstimator::Ols => regression::ols_hc3(x, y),
        PostEstimator::ElasticNetCv => regression::elastic_net_fit(x, y, 0.5, &CvOptions::new(folds, seed)),
        PostEstimator::LassoCv => regression::elastic_net_fit(x, y, 1.0, &CvOptions::new(folds, seed)),
    }
}

/// Fit on each split's training rows, predict its test rows, and pool the
/// errors over the whole plan.
pub fn run_forecast_experiment(
    data: &TimeIndexedDataset,
    plan: &WindowPlan,
    cfg: &ForecastConfig,
) -> Result<ForecastReport> {
    let mut audit = Vec::new();
    let all: Vec<usize> = (0..data.len()).collect();

    let global = if cfg.scope == SelectionScope::FullSample && cfg.selection != SelectionMethod::None {
        if cfg.pca.is_some() {
            audit.push(FitRecord { split: None, stage: FitStage::Pca, rows: all.clone() });
        }
        let feats = build_features(data, cfg, &all, &all, &[])?;
        audit.push(FitRecord { split: None, stage: FitStage::Selection, rows: all.clone() });
        let seed = rng::derive_seed(cfg.seed, &[u64::MAX]);
        Some(select_columns(&feats.train, &data.y, feats.groups.as_ref(), cfg, seed)?)
    } else {
        None
    };

    let mut predictions = Vec::new();
    let mut actual = Vec::new();
    let mut test_rows = Vec::new();
    let mut summaries = Vec::new();
    for (s, split) in plan.splits.iter().enumerate() {
        let seed = rng::derive_seed(cfg.seed, &[s as u64]);
        let pca_rows = match cfg.scope {
            SelectionScope::FullSample => all.as_slice(),
            SelectionScope::TrainOnly => split.train.as_slice(),
        };
        if cfg.pca.is_some() {
            let split_id = (cfg.scope == SelectionScope::TrainOnly).then_some(s);
            audit.push(FitRecord { split: split_id, stage: FitStage::Pca, rows: pca_rows.to_vec() });
        }
        let feats = build_features(data, cfg, pca_rows, &split.train, &split.test)?;
        let y_train: Vec<f64> = split.train.iter().map(|&i| data.y[i]).collect();
        let selected = match &global {
            Some(sel) => sel.clone(),
            None => {
                if cfg.selection != SelectionMethod::None {
                    audit.push(FitRecord { split: Some(s), stage: FitStage::Selection, rows: split.train.clone() });
                }
                select_columns(&feats.train, &y_train, feats.groups.as_ref(), cfg, seed)?
            }
        };
        audit.push(FitRecord { split: Some(s), stage: FitStage::Estimator, rows: split.train.clone() });
        let preds = if selected.is_empty() {
            let mean = y_train.iter().sum::<f64>() / y_train.len() as f64;
            vec![mean; split.test.len()]
        } else {
            let xtr = feats.train.select_columns(&selected);
            let xte = feats.test.select_columns(&selected);
            let fit = fit_estimator(xtr.values(), &y_train, cfg.estimator, cfg.cv_folds, rng::derive_seed(seed, &[3]))?;
            fit.predict(xte.values())
        };
        summaries.push(SplitSummary {
            label: split.label.clone(),
            n_train: split.train.len(),
            n_test: split.test.len(),
            selected: selected.iter().map(|&j| feats.train.names()[j].clone()).collect(),
        });
        predictions.extend(preds);
        actual.extend(split.test.iter().map(|&i| data.y[i]));
        test_rows.extend(split.test.iter().copied());
    }

    let leakage_free = audit_passes(plan, &audit);
    Ok(ForecastReport {
        scheme: plan.scheme.label().to_string(),
        selection: cfg.selection.label().to_string(),
        estimator: cfg.estimator.label().to_string(),
        rmse: rmse(&predictions, &actual)?,
        mae: mae(&predictions, &actual)?,
        n_predictions: predictions.len(),
        predictions,
        actual,
        test_rows,
        splits: summaries,
        audit,
        leakage_free,
    })
}
