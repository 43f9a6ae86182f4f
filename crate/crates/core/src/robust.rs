//! Repeated-subsampling selection probabilities and their weighted
//! aggregation over a grid of nominal FDR levels.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::{DataMatrix, GroupSpec};
use crate::error::{Error, Result};
use crate::filter::{self, FeatureStats, SelectionResult, StatisticKind};
use crate::knockoffs::{sample_knockoffs, KnockoffMethod, KnockoffModel, Shrinkage};
use crate::regression::{self, CvOptions, GridSpec};
use crate::rng;

/// How one knockoff pass is built and scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KnockoffConfig {
    pub method: KnockoffMethod,
    pub statistic: StatisticKind,
    pub plus_variant: bool,
    pub shrinkage: Shrinkage,
    pub cv_folds: usize,
    pub grid: GridSpec,
}

impl Default for KnockoffConfig {
    fn default() -> Self {
        Self {
            method: KnockoffMethod::default(),
            statistic: StatisticKind::Lcd,
            plus_variant: false,
            shrinkage: Shrinkage::default(),
            cv_folds: 10,
            grid: GridSpec::default(),
        }
    }
}

/// Draw knockoffs for `x` and compute the configured statistic.
/// Knockoff noise uses `derive_seed(seed, [1])`, CV folds `derive_seed(seed, [2])`.
pub fn knockoff_statistics(x: &DataMatrix, y: &[f64], cfg: &KnockoffConfig, seed: u64) -> Result<FeatureStats> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch { left: x.nrows(), right: y.len() });
    }
    let p = x.ncols();
    let model = KnockoffModel::fit(x, cfg.shrinkage, cfg.method.clone())?;
    let xk = sample_knockoffs(x, &model, rng::derive_seed(seed, &[1]))?;
    let joint = x.hstack(&xk)?;
    let design = joint.values();
    match cfg.statistic {
        StatisticKind::Lcd => {
            let opts = CvOptions { folds: cfg.cv_folds, seed: rng::derive_seed(seed, &[2]), grid: cfg.grid.clone() };
            let fit = regression::elastic_net_fit(design, y, 1.0, &opts)?;
            filter::lcd_statistics(&fit, p)
        }
        StatisticKind::Lsm => {
            let path = regression::lasso_path(design, y, &cfg.grid)?;
            filter::lsm_statistics(&path, p)
        }
        StatisticKind::GroupLsm => {
            let groups = match &cfg.method {
                KnockoffMethod::GroupEqui { groups } => groups.clone(),
                _ => GroupSpec::singletons(p),
            };
            let path = regression::group_lasso_path(design, y, &groups.doubled(), &cfg.grid)?;
            filter::group_lsm_statistics(&path, &groups)
        }
    }
}

/// One full knockoff filter pass on all rows.
pub fn knockoff_select(
    x: &DataMatrix,
    y: &[f64],
    alpha: f64,
    cfg: &KnockoffConfig,
    seed: u64,
) -> Result<(FeatureStats, SelectionResult)> {
    let stats = knockoff_statistics(x, y, cfg, seed)?;
    let sel = filter::knockoff_threshold(&stats, alpha, cfg.plus_variant)?;
    Ok((stats, sel))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionProbabilities {
    pub probs: Vec<f64>,
    pub alpha: f64,
    pub b: usize,
    pub theta: f64,
    pub n_sub: usize,
    /// `B × p` selection indicators, one row per repetition.
    pub per_rep_selected: Vec<Vec<bool>>,
    /// Set when `n_sub < 2p`.
    pub small_subsample_warning: bool,
}

fn subsample_size(n: usize, p: usize, theta: f64, b: usize) -> Result<(usize, bool)> {
    if !(theta > 0.0 && theta <= 1.0) {
        return Err(Error::InvalidArgument(format!("theta {theta} outside (0, 1]")));
    }
    if b == 0 {
        return Err(Error::InvalidArgument("B must be at least 1".into()));
    }
    let n_sub = (n as f64 * theta).floor() as usize;
    if n_sub < 10 {
        return Err(Error::SubsampleTooSmall { n_sub });
    }
    Ok((n_sub, n_sub < 2 * p))
}

#[cfg(feature = "parallel")]
fn map_reps<T: Send>(count: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_reps<T>(count: usize, f: impl Fn(usize) -> Result<T>) -> Result<Vec<T>> {
    (0..count).map(f).collect()
}

/// Statistics on the subsample for repetition `b` of stream `k`.
fn subsample_stats(
    x: &DataMatrix,
    y: &[f64],
    cfg: &KnockoffConfig,
    n_sub: usize,
    seed: u64,
    k: u64,
    b: usize,
) -> Result<(Vec<usize>, FeatureStats)> {
    let rep_seed = rng::derive_seed(seed, &[k, b as u64]);
    let mut r = rng::rng_from(rep_seed, &[0]);
    let rows = rng::sample_without_replacement(&mut r, x.nrows(), n_sub);
    let xs = x.select_rows(&rows);
    let ys: Vec<f64> = rows.iter().map(|&i| y[i]).collect();
    let stats = knockoff_statistics(&xs, &ys, cfg, rep_seed)?;
    Ok((rows, stats))
}

fn probabilities_from(per_rep: &[Vec<bool>], p: usize) -> Vec<f64> {
    let b = per_rep.len() as f64;
    (0..p).map(|j| per_rep.iter().filter(|row| row[j]).count() as f64 / b).collect()
}

fn subsampling_at(
    x: &DataMatrix,
    y: &[f64],
    alpha: f64,
    cfg: &KnockoffConfig,
    theta: f64,
    b: usize,
    seed: u64,
    k: u64,
) -> Result<SelectionProbabilities> {
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch { left: x.nrows(), right: y.len() });
    }
    let p = x.ncols();
    let (n_sub, warn) = subsample_size(x.nrows(), p, theta, b)?;
    let per_rep = map_reps(b, |rep| {
        let (_, stats) = subsample_stats(x, y, cfg, n_sub, seed, k, rep)?;
        let sel = filter::knockoff_threshold(&stats, alpha, cfg.plus_variant)?;
        Ok(sel.indicators(p))
    })?;
    Ok(SelectionProbabilities {
        probs: probabilities_from(&per_rep, p),
        alpha,
        b,
        theta,
        n_sub,
        per_rep_selected: per_rep,
        small_subsample_warning: warn,
    })
}

/// `B` knockoff runs on `⌊nθ⌋`-row subsamples drawn without replacement.
/// Repetition `b` draws everything from `derive_seed(seed, [0, b])`.
pub fn repeated_subsampling(
    x: &DataMatrix,
    y: &[f64],
    alpha: f64,
    cfg: &KnockoffConfig,
    theta: f64,
    b: usize,
    seed: u64,
) -> Result<SelectionProbabilities> {
    subsampling_at(x, y, alpha, cfg, theta, b, seed, 0)
}

/// Rank `p` goes to the largest probability; ties go to the higher index.
pub fn probs_to_ranks(probs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; probs.len()];
    for (pos, &j) in order.iter().enumerate() {
        ranks[j] = (pos + 1) as f64;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightKind {
    Unweighted,
    LinearDecay,
    ExpDecay,
}

/// Weights over the FDR grid; index 0 belongs to the smallest α.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightScheme {
    pub kind: WeightKind,
    pub weights: Vec<f64>,
}

impl WeightScheme {
    pub fn new(kind: WeightKind, k: usize) -> Self {
        match kind {
            WeightKind::Unweighted => unweighted(k),
            WeightKind::LinearDecay => linear_weights(k),
            WeightKind::ExpDecay => exp_weights(k),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn normalized(kind: WeightKind, raw: Vec<f64>) -> WeightScheme {
    let total: f64 = raw.iter().sum();
    WeightScheme { kind, weights: raw.into_iter().map(|w| w / total).collect() }
}

pub fn unweighted(k: usize) -> WeightScheme {
    normalized(WeightKind::Unweighted, vec![1.0; k])
}

/// `ω_k = (K - k + 1) / Σ k`.
pub fn linear_weights(k: usize) -> WeightScheme {
    normalized(WeightKind::LinearDecay, (0..k).map(|i| (k - i) as f64).collect())
}

/// Raw weights `K^{(K-k)/(K-1)}`, log-equidistant from `K` down to 1.
pub fn exp_weights(k: usize) -> WeightScheme {
    if k <= 1 {
        return normalized(WeightKind::ExpDecay, vec![1.0; k]);
    }
    let kf = k as f64;
    let raw = (1..=k).map(|i| kf.powf((kf - i as f64) / (kf - 1.0))).collect();
    normalized(WeightKind::ExpDecay, raw)
}

/// `{0.05, 0.10, ..., 0.95}`.
pub fn default_fdr_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    Probability,
    Rank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    /// Repeated subsampling at every grid point.
    Method1,
    /// One knockoff pass on all rows; probabilities are 0/1 indicators.
    SinglePass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WfdrOptions {
    pub baseline: Baseline,
    pub theta: f64,
    pub b: usize,
    /// Reuse the same subsamples and knockoffs at every α.
    pub shared_subsamples: bool,
}

impl Default for WfdrOptions {
    fn default() -> Self {
        Self { baseline: Baseline::Method1, theta: 0.9, b: 100, shared_subsamples: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedScores {
    pub scores: Vec<f64>,
    pub mode: ScoreMode,
    pub fdr_grid: Vec<f64>,
    pub scheme: WeightScheme,
    /// `K × p` selection probabilities before conversion and weighting.
    pub per_alpha_probs: Vec<Vec<f64>>,
    pub n_sub: usize,
    pub small_subsample_warning: bool,
}

fn validate_grid(grid: &[f64], scheme: &WeightScheme) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty FDR grid".into()));
    }
    if grid.iter().any(|&a| !(a > 0.0 && a <= 1.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("FDR grid must be strictly increasing in (0, 1]".into()));
    }
    if scheme.len() != grid.len() {
        return Err(Error::LengthMismatch { left: scheme.len(), right: grid.len() });
    }
    Ok(())
}

/// `WP_l = Σ_k ω_k pr_{lk}` (or the same sum over per-α ranks).
pub fn weighted_fdr_selection(
    x: &DataMatrix,
    y: &[f64],
    fdr_grid: &[f64],
    cfg: &KnockoffConfig,
    opts: &WfdrOptions,
    scheme: &WeightScheme,
    mode: ScoreMode,
    seed: u64,
) -> Result<WeightedScores> {
    validate_grid(fdr_grid, scheme)?;
    if x.nrows() != y.len() {
        return Err(Error::LengthMismatch { left: x.nrows(), right: y.len() });
    }
    let p = x.ncols();
    let (theta, b) = match opts.baseline {
        Baseline::Method1 => (opts.theta, opts.b),
        Baseline::SinglePass => (1.0, 1),
    };
    let (n_sub, warn) = subsample_size(x.nrows(), p, theta, b)?;

    let per_alpha_probs: Vec<Vec<f64>> = if opts.shared_subsamples {
        let stats = map_reps(b, |rep| subsample_stats(x, y, cfg, n_sub, seed, 0, rep).map(|s| s.1))?;
        fdr_grid
            .iter()
            .map(|&alpha| {
                let per_rep = stats
                    .iter()
                    .map(|s| filter::knockoff_threshold(s, alpha, cfg.plus_variant).map(|r| r.indicators(p)))
                    .collect::<Result<Vec<_>>>()?;
                Ok(probabilities_from(&per_rep, p))
            })
            .collect::<Result<_>>()?
    } else {
        fdr_grid
            .iter()
            .enumerate()
            .map(|(k, &alpha)| subsampling_at(x, y, alpha, cfg, theta, b, seed, k as u64).map(|s| s.probs))
            .collect::<Result<_>>()?
    };

    let scores = weight_scores(&per_alpha_probs, scheme, mode);
    Ok(WeightedScores {
        scores,
        mode,
        fdr_grid: fdr_grid.to_vec(),
        scheme: scheme.clone(),
        per_alpha_probs,
        n_sub,
        small_subsample_warning: warn,
    })
}

/// Weighted sum of per-α probabilities, or of their ranks in `Rank` mode.
pub fn weight_scores(per_alpha_probs: &[Vec<f64>], scheme: &WeightScheme, mode: ScoreMode) -> Vec<f64> {
    let p = per_alpha_probs.first().map_or(0, Vec::len);
    let mut out = vec![0.0; p];
    for (probs, &w) in per_alpha_probs.iter().zip(&scheme.weights) {
        let vals = match mode {
            ScoreMode::Probability => probs.clone(),
            ScoreMode::Rank => probs_to_ranks(probs),
        };
        for (o, v) in out.iter_mut().zip(vals) {
            *o += w * v;
        }
    }
    out
}

/// Component ranks are mapped onto `[1, RANK_CEILING]` before group aggregation.
pub const RANK_CEILING: f64 = 20.0;

/// Group score = max over the group's component scores. In `Rank` mode the
/// component ranks are first rescaled `r' = 1 + (r - 1)·19/(P - 1)`; a single
/// component maps to the ceiling.
pub fn aggregate_group_scores(component_scores: &[f64], pc_to_group: &GroupSpec, mode: ScoreMode) -> Result<Vec<f64>> {
    let n_comp = component_scores.len();
    if n_comp > pc_to_group.len() {
        return Err(Error::UnmappedComponent(pc_to_group.len()));
    }
    if n_comp < pc_to_group.len() {
        return Err(Error::LengthMismatch { left: n_comp, right: pc_to_group.len() });
    }
    let rescale = |r: f64| {
        if n_comp == 1 {
            RANK_CEILING
        } else {
            1.0 + (r - 1.0) * (RANK_CEILING - 1.0) / (n_comp - 1) as f64
        }
    };
    let mut out = vec![f64::NEG_INFINITY; pc_to_group.group_count()];
    for (c, &g) in pc_to_group.assignments().iter().enumerate() {
        let v = match mode {
            ScoreMode::Probability => component_scores[c],
            ScoreMode::Rank => rescale(component_scores[c]),
        };
        out[g - 1] = out[g - 1].max(v);
    }
    Ok(out)
}

/// Indices of the `m` largest scores, best first; ties go to the higher index.
pub fn top_m(scores: &[f64], m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(b.cmp(&a)));
    order.truncate(m);
    order
}

/// Indices with score at least `threshold`, ascending.
pub fn above_threshold(scores: &[f64], threshold: f64) -> Vec<usize> {
    scores.iter().enumerate().filter(|(_, &s)| s >= threshold).map(|(j, _)| j).collect()
}

/// Per-α selection indicators as a `K × p` 0/1 matrix, handy for plotting.
pub fn probs_matrix(scores: &WeightedScores) -> DMatrix<f64> {
    let k = scores.per_alpha_probs.len();
    let p = scores.scores.len();
    DMatrix::from_fn(k, p, |i, j| scores.per_alpha_probs[i][j])
}
