//! Run configuration, the JSON envelope passed between commands, and the
//! per-command drivers used by the command-line tool.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::{DataMatrix, GroupSpec};
use crate::diagnostics::{self, DiagnosticsConfig};
use crate::error::{Error, Result};
use crate::evaluation::{
    make_windows, model_confidence_set, run_forecast_experiment, ForecastConfig, LossMatrix, PcaSettings,
    PostEstimator, SelectionMethod, SelectionScope, TimeIndexedDataset, WfdrCutoff, WindowScheme,
};
use crate::group_pca;
use crate::io::{self, CsvSchema};
use crate::knockoffs::{sample_knockoffs, KnockoffMethod, KnockoffModel};
use crate::robust::{self, Baseline, KnockoffConfig, ScoreMode, WeightKind, WeightScheme, WfdrOptions};
use crate::sim::{self, SimDesign};

pub const SCHEMA_VERSION: &str = "1.0";

pub const COMMANDS: [&str; 9] =
    ["knockoff", "select", "robust-select", "wfdr", "group-pca", "simulate", "evaluate", "report", "pipeline"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub selection: SelectionMethod,
    pub estimator: PostEstimator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub schemes: Vec<WindowScheme>,
    pub methods: Vec<MethodSpec>,
    pub scope: SelectionScope,
    pub mcs_alpha: f64,
    pub mcs_b: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            schemes: Vec::new(),
            methods: vec![MethodSpec { selection: SelectionMethod::None, estimator: PostEstimator::Ols }],
            scope: SelectionScope::TrainOnly,
            mcs_alpha: 0.15,
            mcs_b: 5000,
        }
    }
}

/// Everything a run needs. Every field has a default so a config file only
/// lists what it changes; command-line flags override file values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: Option<std::path::PathBuf>,
    pub response: String,
    pub date_column: Option<String>,
    pub group_map: Option<std::path::PathBuf>,
    pub knockoff: KnockoffConfig,
    pub alpha: f64,
    pub fdr_grid: Vec<f64>,
    pub theta: f64,
    pub b: usize,
    pub baseline: Baseline,
    pub shared_subsamples: bool,
    pub weights: WeightKind,
    pub mode: ScoreMode,
    pub cutoff: Option<WfdrCutoff>,
    pub pca: PcaSettings,
    pub diagnostics: DiagnosticsConfig,
    pub evaluation: EvaluationConfig,
    pub simulate: Option<SimDesign>,
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            data: None,
            response: "y".into(),
            date_column: None,
            group_map: None,
            knockoff: KnockoffConfig::default(),
            alpha: 0.1,
            fdr_grid: robust::default_fdr_grid(),
            theta: 0.9,
            b: 100,
            baseline: Baseline::Method1,
            shared_subsamples: false,
            weights: WeightKind::LinearDecay,
            mode: ScoreMode::Probability,
            cutoff: None,
            pca: PcaSettings { cap: 4, var_threshold: 0.9 },
            diagnostics: DiagnosticsConfig::default(),
            evaluation: EvaluationConfig::default(),
            simulate: None,
            seed: None,
        }
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidConfig(msg.into())
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    /// Check every module precondition before any computation starts.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(invalid(format!("alpha {} outside (0, 1]", self.alpha)));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(invalid(format!("theta {} outside (0, 1]", self.theta)));
        }
        if self.b == 0 {
            return Err(invalid("B must be at least 1"));
        }
        if self.fdr_grid.is_empty()
            || self.fdr_grid.iter().any(|&a| !(a > 0.0 && a <= 1.0))
            || self.fdr_grid.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(invalid("fdr_grid must be non-empty and strictly increasing in (0, 1]"));
        }
        if self.knockoff.cv_folds < 2 {
            return Err(invalid("cv_folds must be at least 2"));
        }
        if let KnockoffMethod::Asdp { block_size } = self.knockoff.method {
            if block_size == 0 {
                return Err(invalid("ASDP block size must be positive"));
            }
        }
        if self.pca.cap == 0 || !(self.pca.var_threshold > 0.0 && self.pca.var_threshold <= 1.0) {
            return Err(invalid("pca needs cap >= 1 and var_threshold in (0, 1]"));
        }
        match self.cutoff {
            Some(WfdrCutoff::TopM { m: 0 }) => return Err(invalid("top-m cutoff needs m >= 1")),
            Some(WfdrCutoff::Threshold { value }) if !value.is_finite() => {
                return Err(invalid("cutoff must be finite"))
            }
            _ => {}
        }
        let ev = &self.evaluation;
        if !(ev.mcs_alpha > 0.0 && ev.mcs_alpha < 1.0) || ev.mcs_b == 0 {
            return Err(invalid("evaluation needs mcs_alpha in (0, 1) and mcs_b >= 1"));
        }
        if let Some(d) = &self.simulate {
            d.validate()?;
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| invalid("--seed is required for this command"))
    }

    fn wfdr_options(&self) -> WfdrOptions {
        WfdrOptions { baseline: self.baseline, theta: self.theta, b: self.b, shared_subsamples: self.shared_subsamples }
    }
}

/// Known simulation truth travelling with a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub active: Vec<String>,
    pub beta: Vec<f64>,
}

/// A dataset in memory, as read from CSV or from an upstream envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct Input {
    pub x: DataMatrix,
    pub y: Option<Vec<f64>>,
    pub dates: Option<Vec<NaiveDate>>,
    pub truth: Option<Truth>,
    pub upstream: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DatasetPayload {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
    response: Option<Vec<f64>>,
    dates: Option<Vec<NaiveDate>>,
}

impl Input {
    pub fn response(&self) -> Result<&[f64]> {
        self.y.as_deref().ok_or_else(|| Error::MissingColumn("response".into()))
    }

    fn payload(&self) -> DatasetPayload {
        let v = self.x.values();
        DatasetPayload {
            names: self.x.names().to_vec(),
            rows: (0..v.nrows()).map(|i| v.row(i).iter().copied().collect()).collect(),
            response: self.y.clone(),
            dates: self.dates.clone(),
        }
    }

    /// Accepts either CSV text or an envelope carrying a `dataset` block.
    pub fn parse(text: &str, schema: &CsvSchema) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            let env: Value = serde_json::from_str(text).map_err(|e| invalid(format!("input envelope: {e}")))?;
            check_envelope(&env)?;
            let data =
                env.get("dataset").ok_or_else(|| Error::MissingColumn("dataset block in input envelope".into()))?;
            let p: DatasetPayload = serde_json::from_value(data.clone()).map_err(|e| invalid(e.to_string()))?;
            let n = p.rows.len();
            let width = p.names.len();
            if p.rows.iter().any(|r| r.len() != width) {
                return Err(invalid("ragged dataset rows"));
            }
            let flat: Vec<f64> = p.rows.into_iter().flatten().collect();
            let x = DataMatrix::new(DMatrix::from_row_slice(n, width, &flat), p.names)?;
            let truth = env.get("truth").map(|t| serde_json::from_value(t.clone())).transpose()?;
            Ok(Self { x, y: p.response, dates: p.dates, truth, upstream: Some(env) })
        } else {
            let d = io::read_dataset(text.as_bytes(), schema)?;
            Ok(Self { x: d.x, y: d.y, dates: d.dates, truth: None, upstream: None })
        }
    }
}

/// `{schema_version, command, seed, config, result, [dataset], [truth]}`.
pub fn envelope(command: &str, seed: Option<u64>, cfg: &RunConfig, result: Value) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "seed": seed,
        "config": serde_json::to_value(cfg).expect("config serializes"),
        "result": result,
    })
}

fn with_data(mut env: Value, input: &Input) -> Value {
    env["dataset"] = serde_json::to_value(input.payload()).expect("dataset serializes");
    if let Some(t) = &input.truth {
        env["truth"] = serde_json::to_value(t).expect("truth serializes");
    }
    env
}

/// Structural checks shared by every consumer of an envelope.
pub fn check_envelope(env: &Value) -> Result<()> {
    let version = env.get("schema_version").and_then(Value::as_str);
    if version != Some(SCHEMA_VERSION) {
        return Err(Error::SchemaMismatch(format!("schema_version {version:?}, expected {SCHEMA_VERSION}")));
    }
    let command = env.get("command").and_then(Value::as_str).unwrap_or("");
    if !COMMANDS.contains(&command) {
        return Err(Error::SchemaMismatch(format!("unknown command '{command}'")));
    }
    if !env.get("result").is_some_and(Value::is_object) {
        return Err(Error::SchemaMismatch("missing result object".into()));
    }
    Ok(())
}

/// Full schema check including per-command required fields.
pub fn validate_report(env: &Value) -> Result<()> {
    check_envelope(env)?;
    let result = &env["result"];
    let need = |keys: &[&str]| -> Result<()> {
        for k in keys {
            if result.get(*k).is_none() {
                return Err(Error::SchemaMismatch(format!("result lacks '{k}'")));
            }
        }
        Ok(())
    };
    let len = |k: &str| result.get(k).and_then(Value::as_array).map(Vec::len);
    match env["command"].as_str().unwrap_or("") {
        "wfdr" => {
            need(&["variables", "scores", "fdr_grid", "weights", "per_alpha_probs", "ranking"])?;
            if len("variables") != len("scores") {
                return Err(Error::SchemaMismatch("one score per variable expected".into()));
            }
        }
        "robust-select" => need(&["variables", "probs", "n_sub", "b"])?,
        "select" => need(&["variables", "w", "threshold", "selected"])?,
        "knockoff" => need(&["s", "diagnostics"])?,
        "group-pca" => need(&["component_names", "groups"])?,
        "simulate" => need(&["design", "active"])?,
        "evaluate" => need(&["forecasts", "mcs"])?,
        "report" => need(&["source_command", "summary"])?,
        "pipeline" => need(&["wfdr"])?,
        _ => {}
    }
    if env["seed"].is_null() && matches!(env["command"].as_str(), Some("wfdr" | "robust-select" | "simulate")) {
        return Err(Error::SchemaMismatch("stochastic command without seed echo".into()));
    }
    Ok(())
}

fn recovery(truth: &Truth, names: &[String], selected: &[usize], ranking: &[usize]) -> Value {
    let active: Vec<usize> =
        names.iter().enumerate().filter(|(_, n)| truth.active.contains(n)).map(|(j, _)| j).collect();
    let (fdp, power) = sim::measure_fdr_power(selected, &active);
    let k = active.len();
    let top_hits = ranking.iter().take(k).filter(|j| active.contains(j)).count();
    json!({
        "active_count": k,
        "fdp": fdp,
        "power": power,
        "top_active_count_hits": top_hits,
        "active_occupy_top": top_hits == k,
    })
}

fn names_of(names: &[String], idx: &[usize]) -> Vec<String> {
    idx.iter().map(|&j| names[j].clone()).collect()
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Value> {
    let seed = cfg.require_seed()?;
    let design = SimDesign { seed, ..cfg.simulate.clone().unwrap_or_else(|| SimDesign::benchmark(seed)) };
    let data = sim::simulate_design(&design)?;
    let names = data.x.names().to_vec();
    let truth = Truth { active: names_of(&names, &data.active), beta: data.beta.clone() };
    let input = Input { x: data.x, y: Some(data.y), dates: None, truth: Some(truth.clone()), upstream: None };
    let result = json!({ "design": design, "active": truth.active });
    Ok(with_data(envelope("simulate", Some(seed), cfg, result), &input))
}

pub fn cmd_knockoff(input: &Input, cfg: &RunConfig) -> Result<Value> {
    let seed = cfg.require_seed()?;
    let model = KnockoffModel::fit(&input.x, cfg.knockoff.shrinkage, cfg.knockoff.method.clone())?;
    let xk = sample_knockoffs(&input.x, &model, seed)?;
    let block = match cfg.knockoff.method {
        KnockoffMethod::Asdp { block_size } => block_size,
        _ => 10,
    };
    let target = diagnostics::asdp_target(input.x.values(), block)?;
    let diag = diagnostics::knockoff_diagnostics(input.x.values(), xk.values(), &target, &cfg.diagnostics)?;
    let result = json!({
        "variables": input.x.names(),
        "s": model.s.as_slice(),
        "shrinkage_intensity": model.moments.shrinkage_intensity,
        "diagnostics": diag,
    });
    let knock = Input { x: xk, y: None, dates: None, truth: None, upstream: None };
    Ok(with_data(envelope("knockoff", Some(seed), cfg, result), &knock))
}

pub fn cmd_select(input: &Input, cfg: &RunConfig) -> Result<Value> {
    let seed = cfg.require_seed()?;
    let y = input.response()?;
    let (stats, sel) = robust::knockoff_select(&input.x, y, cfg.alpha, &cfg.knockoff, seed)?;
    let names = input.x.names();
    let threshold = if sel.threshold.is_finite() { json!(sel.threshold) } else { json!("inf") };
    let mut result = json!({
        "variables": names,
        "w": stats.w,
        "statistic": stats.kind,
        "lambda0": stats.lambda0,
        "threshold": threshold,
        "selected": names_of(names, &sel.selected),
        "fdp_estimate": sel.fdp_estimate,
        "alpha": cfg.alpha,
    });
    if let Some(t) = &input.truth {
        let ranking = robust::top_m(&stats.w, names.len());
        result["recovery"] = recovery(t, names, &sel.selected, &ranking);
    }
    Ok(envelope("select", Some(seed), cfg, result))
}

pub fn cmd_robust_select(input: &Input, cfg: &RunConfig) -> Result<Value> {
    let seed = cfg.require_seed()?;
    let y = input.response()?;
    let res = robust::repeated_subsampling(&input.x, y, cfg.alpha, &cfg.knockoff, cfg.theta, cfg.b, seed)?;
    let names = input.x.names();
    let ranks = robust::probs_to_ranks(&res.probs);
    let mut result = json!({
        "variables": names,
        "probs": res.probs,
        "ranks": ranks,
        "alpha": res.alpha,
        "b": res.b,
        "theta": res.theta,
        "n_sub": res.n_sub,
        "small_subsample_warning": res.small_subsample_warning,
        "per_rep_selected": res.per_rep_selected,
    });
    if let Some(t) = &input.truth {
        let ranking = robust::top_m(&res.probs, names.len());
        let chosen: Vec<usize> = robust::above_threshold(&res.probs, 0.5);
        result["recovery"] = recovery(t, names, &chosen, &ranking);
    }
    Ok(envelope("robust-select", Some(seed), cfg, result))
}

fn wfdr_result(input: &Input, cfg: &RunConfig, seed: u64) -> Result<Value> {
    let y = input.response()?;
    let scheme = WeightScheme::new(cfg.weights, cfg.fdr_grid.len());
    let ws = robust::weighted_fdr_selection(
        &input.x,
        y,
        &cfg.fdr_grid,
        &cfg.knockoff,
        &cfg.wfdr_options(),
        &scheme,
        cfg.mode,
        seed,
    )?;
    let names = input.x.names();
    let ranking = robust::top_m(&ws.scores, names.len());
    let selected = match cfg.cutoff {
        Some(WfdrCutoff::TopM { m }) => {
            let mut s = robust::top_m(&ws.scores, m);
            s.sort_unstable();
            Some(s)
        }
        Some(WfdrCutoff::Threshold { value }) => Some(robust::above_threshold(&ws.scores, value)),
        None => None,
    };
    let mut result = json!({
        "variables": names,
        "scores": ws.scores,
        "mode": ws.mode,
        "fdr_grid": ws.fdr_grid,
        "weights": ws.scheme,
        "per_alpha_probs": ws.per_alpha_probs,
        "ranking": names_of(names, &ranking),
        "selected": selected.as_ref().map(|s| names_of(names, s)),
        "n_sub": ws.n_sub,
        "small_subsample_warning": ws.small_subsample_warning,
    });
    if let Some(t) = &input.truth {
        result["recovery"] = recovery(t, names, selected.as_deref().unwrap_or(&[]), &ranking);
    }
    Ok(result)
}

pub fn cmd_wfdr(input: &Input, cfg: &RunConfig) -> Result<Value> {
    let seed = cfg.require_seed()?;
    let mut env = envelope("wfdr", Some(seed), cfg, wfdr_result(input, cfg, seed)?);
    if let Some(t) = &input.truth {
        env["truth"] = serde_json::to_value(t)?;
    }
    Ok(env)
}

pub fn cmd_group_pca(input: &Input, groups: &GroupSpec, cfg: &RunConfig) -> Result<Value> {
    let mut model = group_pca::fit_group_pca(&input.x, groups, cfg.pca.cap, cfg.pca.var_threshold)?;
    if let Some(d) = &input.dates {
        model.fit_window = d.first().zip(d.last()).map(|(a, b)| (a.to_string(), b.to_string()));
    }
    let scores = group_pca::transform(&model, &input.x)?;
    let groups_json: Vec<Value> = model
        .groups
        .iter()
        .enumerate()
        .map(|(g, c)| {
            json!({
                "group": groups.name(g + 1),
                "variables": names_of(&model.input_names, &c.columns),
                "retained": c.retained,
                "explained_variance_ratio": c.explained_variance_ratio,
                "captured_variance": c.captured_variance(),
                "loadings": (0..c.loadings.nrows())
                    .map(|i| c.loadings.row(i).iter().copied().collect::<Vec<f64>>())
                    .collect::<Vec<_>>(),
            })
        })
        .collect();
    let result = json!({
        "component_names": model.component_names,
        "component_groups": model.component_groups().assignments(),
        "fit_window": model.fit_window,
        "groups": groups_json,
    });
    let out = Input { x: scores, y: input.y.clone(), dates: input.dates.clone(), truth: None, upstream: None };
    Ok(with_data(envelope("group-pca", None, cfg, result), &out))
}

pub fn cmd_evaluate(input: &Input, groups: Option<&GroupSpec>, cfg: &RunConfig) -> Result<Value> {
    let seed = cfg.require_seed()?;
    let dates = input.dates.clone().ok_or_else(|| Error::MissingColumn("date column for evaluation".into()))?;
    let data = TimeIndexedDataset::new(dates, input.x.clone(), input.response()?.to_vec())?;
    let ev = &cfg.evaluation;
    if ev.schemes.is_empty() {
        return Err(invalid("evaluation.schemes is empty"));
    }
    let mut forecasts = Vec::new();
    let mut mcs = BTreeMap::new();
    for (si, scheme) in ev.schemes.iter().enumerate() {
        let plan = make_windows(&data, scheme)?;
        let mut losses = Vec::new();
        let mut labels = Vec::new();
        for (mi, m) in ev.methods.iter().enumerate() {
            let fc = ForecastConfig {
                selection: m.selection.clone(),
                estimator: m.estimator,
                scope: ev.scope,
                knockoff: cfg.knockoff.clone(),
                groups: groups.cloned(),
                pca: groups.map(|_| cfg.pca),
                cv_folds: cfg.knockoff.cv_folds,
                seed: crate::rng::derive_seed(seed, &[si as u64, mi as u64]),
            };
            let rep = run_forecast_experiment(&data, &plan, &fc)?;
            labels.push(format!("{mi}:{}", fc.label()));
            losses.push(rep.squared_errors());
            forecasts.push(json!({
                "scheme": rep.scheme,
                "selection": rep.selection,
                "estimator": rep.estimator,
                "rmse": rep.rmse,
                "mae": rep.mae,
                "n_predictions": rep.n_predictions,
                "leakage_free": rep.leakage_free,
                "splits": rep.splits.len(),
            }));
        }
        if labels.len() >= 2 {
            let lm = LossMatrix::from_columns(&losses, labels)?;
            let res = model_confidence_set(
                &lm,
                ev.mcs_alpha,
                ev.mcs_b,
                crate::rng::derive_seed(seed, &[si as u64, u64::MAX]),
            )?;
            mcs.insert(format!("{si}:{}", scheme.label()), serde_json::to_value(res)?);
        }
    }
    Ok(envelope("evaluate", Some(seed), cfg, json!({ "forecasts": forecasts, "mcs": mcs })))
}

/// Summarize an upstream envelope.
pub fn cmd_report(upstream: &Value, cfg: &RunConfig) -> Result<Value> {
    validate_report(upstream)?;
    let source = upstream["command"].as_str().unwrap_or_default().to_string();
    let r = &upstream["result"];
    let summary = match source.as_str() {
        "wfdr" => {
            let vars: Vec<String> = serde_json::from_value(r["variables"].clone())?;
            let scores: Vec<f64> = serde_json::from_value(r["scores"].clone())?;
            let mut order: Vec<usize> = robust::top_m(&scores, scores.len());
            order.truncate(vars.len());
            let table: Vec<Value> = order
                .iter()
                .enumerate()
                .map(|(rank, &j)| json!({ "rank": rank + 1, "variable": vars[j], "score": scores[j] }))
                .collect();
            json!({ "table": table, "recovery": r.get("recovery") })
        }
        "evaluate" => json!({ "forecasts": r["forecasts"], "mcs": r["mcs"] }),
        _ => r.clone(),
    };
    let result = json!({
        "source_command": source,
        "source_seed": upstream["seed"],
        "summary": summary,
    });
    let mut env = envelope("report", upstream["seed"].as_u64(), cfg, result);
    if let Some(t) = upstream.get("truth") {
        env["truth"] = t.clone();
    }
    Ok(env)
}

/// CSV rendering of a report's main table.
pub fn report_csv(report: &Value) -> Result<String> {
    let mut buf = Vec::new();
    let s = &report["result"]["summary"];
    if let Some(table) = s.get("table").and_then(Value::as_array) {
        let rows: Vec<Vec<String>> = table
            .iter()
            .map(|r| {
                vec![r["rank"].to_string(), r["variable"].as_str().unwrap_or("").to_string(), r["score"].to_string()]
            })
            .collect();
        io::write_table(&mut buf, &["rank", "variable", "score"], &rows)?;
    } else if let Some(rows) = s.get("forecasts").and_then(Value::as_array) {
        let rows: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                ["scheme", "selection", "estimator", "rmse", "mae"]
                    .iter()
                    .map(|k| r[*k].as_str().map_or_else(|| r[*k].to_string(), str::to_string))
                    .collect()
            })
            .collect();
        io::write_table(&mut buf, &["scheme", "selection", "estimator", "rmse", "mae"], &rows)?;
    } else {
        return Err(invalid("report has no tabular summary"));
    }
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

/// Load or simulate data, then run the weighted selection (and the
/// forecasting study when windows are configured).
pub fn run_pipeline(cfg: &RunConfig) -> Result<Value> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let input = match (&cfg.data, &cfg.simulate) {
        (Some(path), _) => {
            let schema =
                CsvSchema { response: Some(cfg.response.clone()), date: cfg.date_column.clone(), features: None };
            Input::parse(&std::fs::read_to_string(path)?, &schema)?
        }
        (None, Some(_)) => {
            let env = cmd_simulate(cfg)?;
            Input::parse(&env.to_string(), &CsvSchema::default())?
        }
        (None, None) => return Err(invalid("pipeline needs either data or simulate")),
    };
    let groups = cfg.group_map.as_ref().map(|p| io::load_group_map(p, input.x.names())).transpose()?;
    let mut result = json!({ "wfdr": wfdr_result(&input, cfg, seed)? });
    if !cfg.evaluation.schemes.is_empty() && input.dates.is_some() {
        result["evaluate"] = cmd_evaluate(&input, groups.as_ref(), cfg)?["result"].clone();
    }
    let mut env = envelope("pipeline", Some(seed), cfg, result);
    if let Some(t) = &input.truth {
        env["truth"] = serde_json::to_value(t)?;
    }
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::StatisticKind;
    use crate::regression::GridSpec;
    use crate::sim::{SimCovariance, SimModel};

    fn small_cfg(seed: u64) -> RunConfig {
        RunConfig {
            knockoff: KnockoffConfig {
                method: KnockoffMethod::Equi,
                statistic: StatisticKind::Lsm,
                grid: GridSpec::Auto { len: 30, min_ratio: 1e-2 },
                ..KnockoffConfig::default()
            },
            fdr_grid: vec![0.1, 0.3, 0.5],
            b: 5,
            simulate: Some(SimDesign {
                n: 80,
                p: 8,
                covariance: SimCovariance::Ar1 { rho: 0.3 },
                active_count: 2,
                amplitude: 3.0,
                noise_sd: 1.0,
                model: SimModel::Linear,
                seed: 0,
            }),
            seed: Some(seed),
            ..RunConfig::default()
        }
    }

    #[test]
    fn theta_out_of_range_fails_validation() {
        let cfg = RunConfig { theta: 1.3, ..RunConfig::default() };
        let err = cfg.validate().unwrap_err();
        assert!(err.is_validation());
        let from_file = RunConfig::from_json(r#"{"theta": 1.3}"#).unwrap();
        assert!(from_file.validate().is_err());
        assert!(RunConfig::from_json(r#"{"thetaa": 0.5}"#).is_err());
    }

    #[test]
    fn simulate_then_wfdr_round_trips() {
        let cfg = small_cfg(3);
        let sim = cmd_simulate(&cfg).unwrap();
        validate_report(&sim).unwrap();
        let input = Input::parse(&sim.to_string(), &CsvSchema::default()).unwrap();
        assert_eq!(input.x.ncols(), 8);
        assert_eq!(input.truth.as_ref().unwrap().active.len(), 2);
        let w = cmd_wfdr(&input, &cfg).unwrap();
        validate_report(&w).unwrap();
        assert_eq!(w["result"]["scores"].as_array().unwrap().len(), 8);
        assert_eq!(w["seed"], 3);
        let rep = cmd_report(&w, &cfg).unwrap();
        validate_report(&rep).unwrap();
        assert_eq!(rep["result"]["summary"]["table"].as_array().unwrap().len(), 8);
        assert!(report_csv(&rep).unwrap().starts_with("rank,variable,score"));
    }

    #[test]
    fn pipeline_is_byte_deterministic() {
        let cfg = small_cfg(5);
        let a = serde_json::to_string(&run_pipeline(&cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&run_pipeline(&cfg).unwrap()).unwrap();
        assert_eq!(a, b);
        assert!(a.contains("\"schema_version\":\"1.0\""));
    }

    #[test]
    fn envelope_checks() {
        assert!(matches!(check_envelope(&json!({"schema_version": "0.1"})), Err(Error::SchemaMismatch(_))));
        let bad =
            json!({"schema_version": SCHEMA_VERSION, "command": "wfdr", "seed": 1, "result": {"variables": ["a"]}});
        assert!(validate_report(&bad).is_err());
    }

    #[test]
    fn missing_seed_is_reported() {
        let cfg = RunConfig { seed: None, ..small_cfg(0) };
        assert!(matches!(cmd_simulate(&cfg), Err(Error::InvalidConfig(_))));
    }
}
