//! Browser demo: three small interactive operations exposed to JavaScript.
//! Each returns a JSON string; the `*_json` functions hold the logic so they
//! can be tested natively.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use robust_knockoffs::filter::{self, StatisticKind};
use robust_knockoffs::knockoffs::KnockoffMethod;
use robust_knockoffs::robust::{self, KnockoffConfig, ScoreMode, WeightKind, WeightScheme, WfdrOptions};
use robust_knockoffs::sim::{self, SimCovariance, SimDesign};

/// Small design so each call stays interactive in the browser.
fn demo_design(seed: u64, signals: usize, amplitude: f64) -> SimDesign {
    SimDesign {
        n: 200,
        p: 30,
        covariance: SimCovariance::Ar1 { rho: 0.3 },
        active_count: signals,
        amplitude,
        noise_sd: 1.0,
        seed,
        ..SimDesign::benchmark(seed)
    }
}

/// Lasso signed-max statistics keep the page responsive.
fn demo_config() -> KnockoffConfig {
    KnockoffConfig { method: KnockoffMethod::Equi, statistic: StatisticKind::Lsm, ..KnockoffConfig::default() }
}

fn parse_kind(kind: &str) -> Result<WeightKind, String> {
    match kind {
        "unweighted" => Ok(WeightKind::Unweighted),
        "linear" => Ok(WeightKind::LinearDecay),
        "exp" => Ok(WeightKind::ExpDecay),
        other => Err(format!("unknown weight scheme '{other}'")),
    }
}

pub fn weight_schemes_json(k: usize) -> Result<String, String> {
    if !(1..=50).contains(&k) {
        return Err(format!("K must lie in [1, 50], got {k}"));
    }
    let v = json!({
        "k": k,
        "unweighted": robust::unweighted(k).weights,
        "linear": robust::linear_weights(k).weights,
        "exp": robust::exp_weights(k).weights,
    });
    Ok(v.to_string())
}

pub fn filter_explorer_json(seed: u64, alpha: f64, plus: bool, amplitude: f64) -> Result<String, String> {
    let design = demo_design(seed, 6, amplitude);
    let data = sim::simulate_design(&design).map_err(|e| e.to_string())?;
    let stats = robust::knockoff_statistics(&data.x, &data.y, &demo_config(), seed).map_err(|e| e.to_string())?;
    let sel = filter::knockoff_threshold(&stats, alpha, plus).map_err(|e| e.to_string())?;
    let (fdp, power) = sim::measure_fdr_power(&sel.selected, &data.active);
    let v = json!({
        "w": stats.w,
        "active": data.active,
        "threshold": if sel.threshold.is_finite() { Value::from(sel.threshold) } else { Value::Null },
        "selected": sel.selected,
        "fdp_estimate": sel.fdp_estimate,
        "fdp": fdp,
        "power": power,
    });
    Ok(v.to_string())
}

pub fn wfdr_explorer_json(seed: u64, b: usize, kind: &str, amplitude: f64) -> Result<String, String> {
    if !(1..=50).contains(&b) {
        return Err(format!("B must lie in [1, 50], got {b}"));
    }
    let data = sim::simulate_design(&demo_design(seed, 6, amplitude)).map_err(|e| e.to_string())?;
    let grid = robust::default_fdr_grid();
    let scheme = WeightScheme::new(parse_kind(kind)?, grid.len());
    let opts = WfdrOptions { b, shared_subsamples: true, ..WfdrOptions::default() };
    let ws = robust::weighted_fdr_selection(
        &data.x,
        &data.y,
        &grid,
        &demo_config(),
        &opts,
        &scheme,
        ScoreMode::Probability,
        seed,
    )
    .map_err(|e| e.to_string())?;
    let v = json!({
        "fdr_grid": ws.fdr_grid,
        "weights": ws.scheme.weights,
        "per_alpha_probs": ws.per_alpha_probs,
        "scores": ws.scores,
        "ranking": robust::top_m(&ws.scores, ws.scores.len()),
        "active": data.active,
        "n_sub": ws.n_sub,
    });
    Ok(v.to_string())
}

#[wasm_bindgen]
pub fn weight_schemes(k: usize) -> Result<String, JsError> {
    weight_schemes_json(k).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn filter_explorer(seed: u32, alpha: f64, plus: bool, amplitude: f64) -> Result<String, JsError> {
    filter_explorer_json(seed.into(), alpha, plus, amplitude).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn wfdr_explorer(seed: u32, b: usize, kind: &str, amplitude: f64) -> Result<String, JsError> {
    wfdr_explorer_json(seed.into(), b, kind, amplitude).map_err(|e| JsError::new(&e))
}
