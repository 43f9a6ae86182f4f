//! Synthetic linear designs with a known active set.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::knockoffs::{ar1_correlation, equicorrelation};
use crate::linalg;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimCovariance {
    Identity,
    Equicorr { rho: f64 },
    Ar1 { rho: f64 },
    BlockDiag { block_size: usize, rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimModel {
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub n: usize,
    pub p: usize,
    pub covariance: SimCovariance,
    pub active_count: usize,
    pub amplitude: f64,
    pub noise_sd: f64,
    #[serde(default = "linear")]
    pub model: SimModel,
    pub seed: u64,
}

fn linear() -> SimModel {
    SimModel::Linear
}

impl SimDesign {
    /// 300 × 50 AR(1) ρ = 0.3 design with 10 signals of amplitude 3.5.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            n: 300,
            p: 50,
            covariance: SimCovariance::Ar1 { rho: 0.3 },
            active_count: 10,
            amplitude: 3.5,
            noise_sd: 1.0,
            model: SimModel::Linear,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidDesign(m));
        if self.n == 0 || self.p == 0 {
            return bad("n and p must be positive".into());
        }
        if self.active_count > self.p {
            return bad(format!("active_count {} exceeds p = {}", self.active_count, self.p));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite())
            || !(self.noise_sd >= 0.0 && self.noise_sd.is_finite())
        {
            return bad("amplitude and noise_sd must be finite and non-negative".into());
        }
        let rho_ok = |rho: f64, lo: f64| rho > lo && rho < 1.0;
        match self.covariance {
            SimCovariance::Identity => {}
            SimCovariance::Equicorr { rho } => {
                let lo = if self.p > 1 { -1.0 / (self.p - 1) as f64 } else { -1.0 };
                if !rho_ok(rho, lo) {
                    return bad(format!("equicorrelation {rho} is not positive definite for p = {}", self.p));
                }
            }
            SimCovariance::Ar1 { rho } => {
                if !rho_ok(rho, -1.0) {
                    return bad(format!("AR(1) coefficient {rho} outside (-1, 1)"));
                }
            }
            SimCovariance::BlockDiag { block_size, rho } => {
                let lo = if block_size > 1 { -1.0 / (block_size - 1) as f64 } else { -1.0 };
                if block_size == 0 || !rho_ok(rho, lo) {
                    return bad(format!("block design ({block_size}, {rho}) is not positive definite"));
                }
            }
        }
        Ok(())
    }

    pub fn correlation(&self) -> DMatrix<f64> {
        match self.covariance {
            SimCovariance::Identity => DMatrix::identity(self.p, self.p),
            SimCovariance::Equicorr { rho } => equicorrelation(self.p, rho),
            SimCovariance::Ar1 { rho } => ar1_correlation(self.p, rho),
            SimCovariance::BlockDiag { block_size, rho } => DMatrix::from_fn(self.p, self.p, |i, j| {
                if i == j {
                    1.0
                } else if i / block_size == j / block_size {
                    rho
                } else {
                    0.0
                }
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub x: DataMatrix,
    pub y: Vec<f64>,
    pub beta: Vec<f64>,
    /// Zero-based, ascending.
    pub active: Vec<usize>,
}

/// `X ~ N(0, Σ)`, `y = Xβ + σε`; positions, signs, rows and noise each use
/// their own derived stream.
pub fn simulate_design(design: &SimDesign) -> Result<SimData> {
    design.validate()?;
    let (n, p) = (design.n, design.p);
    let chol = linalg::cholesky_lower(&design.correlation()).map_err(|e| Error::InvalidDesign(e.to_string()))?;

    let mut r = rng::rng_from(design.seed, &[1]);
    let active = rng::sample_without_replacement(&mut r, p, design.active_count);
    let mut r = rng::rng_from(design.seed, &[2]);
    let mut beta = vec![0.0; p];
    for &j in &active {
        let sign = if rng::uniform_index(&mut r, 2) == 0 { 1.0 } else { -1.0 };
        beta[j] = sign * design.amplitude;
    }

    let mut r = rng::rng_from(design.seed, &[3]);
    let z = rng::normals(&mut r, n * p);
    let z = DMatrix::from_fn(n, p, |i, j| z[i * p + j]);
    let x = z * chol.transpose();
    let mut r = rng::rng_from(design.seed, &[4]);
    let e = rng::normals(&mut r, n);
    let y = (0..n).map(|i| active.iter().map(|&j| x[(i, j)] * beta[j]).sum::<f64>() + design.noise_sd * e[i]).collect();
    Ok(SimData { x: DataMatrix::from_matrix(x), y, beta, active })
}

/// Realized false discovery proportion (0 for an empty selection) and power.
pub fn measure_fdr_power(selected: &[usize], active: &[usize]) -> (f64, f64) {
    let hits = selected.iter().filter(|j| active.contains(j)).count();
    let fdp = if selected.is_empty() { 0.0 } else { (selected.len() - hits) as f64 / selected.len() as f64 };
    let power = hits as f64 / active.len().max(1) as f64;
    (fdp, power)
}
