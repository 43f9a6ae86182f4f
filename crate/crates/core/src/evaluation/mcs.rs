use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Per-observation losses, one column per method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossMatrix {
    pub losses: DMatrix<f64>,
    pub method_names: Vec<String>,
}

impl LossMatrix {
    pub fn new(losses: DMatrix<f64>, method_names: Vec<String>) -> Result<Self> {
        if losses.ncols() != method_names.len() {
            return Err(Error::LengthMismatch { left: losses.ncols(), right: method_names.len() });
        }
        if let Some(v) = losses.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(format!("loss value {v}")));
        }
        Ok(Self { losses, method_names })
    }

    /// Build from per-method loss series of equal length.
    pub fn from_columns(columns: &[Vec<f64>], method_names: Vec<String>) -> Result<Self> {
        let t = columns.first().map_or(0, Vec::len);
        if let Some(c) = columns.iter().find(|c| c.len() != t) {
            return Err(Error::LengthMismatch { left: t, right: c.len() });
        }
        Self::new(DMatrix::from_fn(t, columns.len(), |i, j| columns[j][i]), method_names)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsResult {
    pub method_names: Vec<String>,
    pub surviving: Vec<String>,
    /// `t_i·` on the full method set.
    pub tmax_per_method: Vec<f64>,
    pub p_values: Vec<f64>,
    pub elimination_order: Vec<String>,
    pub alpha: f64,
    pub b: usize,
    pub block_length: usize,
    pub pairwise_block_lengths: Vec<(String, String, usize)>,
}

/// AR order minimizing AIC (least squares on a common sample), at least 1.
pub fn block_length_aic(series: &[f64]) -> Result<usize> {
    let t = series.len();
    if t < 10 {
        return Err(Error::SeriesTooShort { needed: 10, got: t });
    }
    let mean = series.iter().sum::<f64>() / t as f64;
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t as f64;
    if !(var > 1e-300) {
        return Ok(1);
    }
    let q_max = (t / 5).min(10);
    let n_eff = t - q_max;
    let y = DVector::from_iterator(n_eff, series[q_max..].iter().copied());
    let mut best = (f64::INFINITY, 0);
    for q in 0..=q_max {
        let x = DMatrix::from_fn(n_eff, q + 1, |i, j| if j == 0 { 1.0 } else { series[q_max + i - j] });
        let beta = x.clone().svd(true, true).solve(&y, 1e-12).map_err(|e| Error::InvalidArgument(e.into()))?;
        let rss = (&y - &x * beta).norm_squared().max(f64::MIN_POSITIVE);
        let aic = n_eff as f64 * (rss / n_eff as f64).ln() + 2.0 * (q + 1) as f64;
        if aic < best.0 {
            best = (aic, q);
        }
    }
    Ok(best.1.max(1))
}

/// Moving-block bootstrap row indices: `⌈T/k⌉` blocks with uniform starts,
/// truncated to `T`. Replicate `b` uses its own stream.
pub fn block_bootstrap_indices(t: usize, k: usize, b: usize, seed: u64) -> Vec<Vec<usize>> {
    let k = k.clamp(1, t.max(1));
    (0..b)
        .map(|rep| {
            let mut r = rng::rng_from(seed, &[rep as u64]);
            let mut idx = Vec::with_capacity(t);
            while idx.len() < t {
                let start = rng::uniform_index(&mut r, t - k + 1);
                idx.extend((start..start + k).take(t - idx.len()));
            }
            idx
        })
        .collect()
}

pub fn block_bootstrap(series: &[f64], k: usize, b: usize, seed: u64) -> Vec<Vec<f64>> {
    block_bootstrap_indices(series.len(), k, b, seed)
        .into_iter()
        .map(|idx| idx.into_iter().map(|i| series[i]).collect())
        .collect()
}

fn median_lower(mut v: Vec<usize>) -> usize {
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

/// Per-method `t_i·` and bootstrap `T_max` p-value for the active set.
fn tmax_step(means: &[f64], boot_means: &DMatrix<f64>, active: &[usize]) -> (Vec<f64>, f64) {
    let b = boot_means.nrows();
    let m = active.len() as f64;
    let centre = active.iter().map(|&i| means[i]).sum::<f64>() / m;
    let dbar: Vec<f64> = active.iter().map(|&i| means[i] - centre).collect();
    // bootstrap deviations d̄*_i·b − d̄_i·
    let dev = DMatrix::from_fn(b, active.len(), |r, c| {
        let bc = active.iter().map(|&i| boot_means[(r, i)]).sum::<f64>() / m;
        boot_means[(r, active[c])] - bc - dbar[c]
    });
    let sd: Vec<f64> =
        (0..active.len()).map(|c| (dev.column(c).iter().map(|v| v * v).sum::<f64>() / b as f64).sqrt()).collect();
    let scale = |v: f64, s: f64| {
        if s > 1e-300 {
            v / s
        } else if v.abs() <= 1e-14 {
            0.0
        } else {
            v.signum() * f64::INFINITY
        }
    };
    let t: Vec<f64> = dbar.iter().zip(&sd).map(|(&d, &s)| scale(d, s)).collect();
    let tmax = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exceed = (0..b)
        .filter(|&r| {
            let tb = (0..active.len()).map(|c| scale(dev[(r, c)], sd[c])).fold(f64::NEG_INFINITY, f64::max);
            tb >= tmax
        })
        .count();
    (t, exceed as f64 / b as f64)
}

/// `T_max` model confidence set: eliminate the worst method while the
/// bootstrap test rejects equal predictive ability at level `alpha`.
pub fn model_confidence_set(losses: &LossMatrix, alpha: f64, b: usize, seed: u64) -> Result<McsResult> {
    let (t, m) = losses.losses.shape();
    if m < 2 {
        return Err(Error::InvalidArgument("model confidence set needs at least two methods".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) || b == 0 {
        return Err(Error::InvalidArgument("alpha must be in (0, 1) and B at least 1".into()));
    }
    let names = &losses.method_names;
    let l = &losses.losses;

    let mut pairwise = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            let d: Vec<f64> = (0..t).map(|r| l[(r, i)] - l[(r, j)]).collect();
            pairwise.push((names[i].clone(), names[j].clone(), block_length_aic(&d)?));
        }
    }
    let k = median_lower(pairwise.iter().map(|p| p.2).collect());

    let means: Vec<f64> = (0..m).map(|i| l.column(i).mean()).collect();
    let idx = block_bootstrap_indices(t, k, b, seed);
    let boot_means = DMatrix::from_fn(b, m, |r, i| idx[r].iter().map(|&row| l[(row, i)]).sum::<f64>() / t as f64);

    let mut active: Vec<usize> = (0..m).collect();
    let (tmax_per_method, _) = tmax_step(&means, &boot_means, &active);
    let mut p_values = vec![1.0; m];
    let mut elimination_order = Vec::new();
    let mut running = 0.0_f64;
    while active.len() > 1 {
        let (ts, p) = tmax_step(&means, &boot_means, &active);
        running = running.max(p);
        if p >= alpha {
            for &i in &active {
                p_values[i] = running;
            }
            break;
        }
        let worst = (0..active.len())
            .max_by(|&a, &c| ts[a].total_cmp(&ts[c]).then_with(|| names[active[c]].cmp(&names[active[a]])))
            .expect("active set is non-empty");
        let gone = active.remove(worst);
        p_values[gone] = running;
        elimination_order.push(names[gone].clone());
        if active.len() == 1 {
            p_values[active[0]] = 1.0;
        }
    }
    let surviving = active.iter().map(|&i| names[i].clone()).collect();
    Ok(McsResult {
        method_names: names.clone(),
        surviving,
        tmax_per_method,
        p_values,
        elimination_order,
        alpha,
        b,
        block_length: k,
        pairwise_block_lengths: pairwise,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut r = rng::rng_from(seed, &[]);
        rng::normals(&mut r, len)
    }

    fn ar2(len: usize, seed: u64) -> Vec<f64> {
        let e = noise(len + 100, seed);
        let mut x = vec![0.0; len + 100];
        for t in 2..x.len() {
            x[t] = 1.0 * x[t - 1] - 0.5 * x[t - 2] + e[t];
        }
        x.split_off(100)
    }

    #[test]
    fn block_length_examples() {
        // AIC occasionally overfits white noise, so check the bulk of seeds
        let white: Vec<usize> = (0..40).map(|s| block_length_aic(&noise(500, s)).unwrap()).collect();
        assert!(white.iter().filter(|&&k| k == 1).count() >= 24, "{white:?}");
        assert!(white.iter().filter(|&&k| k <= 3).count() >= 30, "{white:?}");
        let strong: Vec<usize> = (100..120).map(|s| block_length_aic(&ar2(500, s)).unwrap()).collect();
        assert!(strong.iter().filter(|&&k| (1..=3).contains(&k)).count() >= 15, "{strong:?}");
        assert!(strong.iter().filter(|&&k| k == 2).count() >= 10, "{strong:?}");
        assert_eq!(block_length_aic(&[2.0; 30]).unwrap(), 1);
        assert_eq!(block_length_aic(&[1.0; 5]), Err(Error::SeriesTooShort { needed: 10, got: 5 }));
    }

    #[test]
    fn bootstrap_examples() {
        let s = noise(400, 9);
        for rep in block_bootstrap(&s, 400, 3, 1) {
            assert_eq!(rep, s);
        }
        assert_eq!(block_bootstrap(&s, 7, 4, 2), block_bootstrap(&s, 7, 4, 2));
        let mean = s.iter().sum::<f64>() / 400.0;
        let sd = (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 399.0).sqrt();
        for rep in block_bootstrap(&s, 1, 20, 3) {
            let m = rep.iter().sum::<f64>() / 400.0;
            assert!((m - mean).abs() <= 4.0 * sd / 20.0);
        }
        for idx in block_bootstrap_indices(10, 3, 5, 4) {
            assert_eq!(idx.len(), 10);
        }
    }

    #[test]
    fn identical_methods_both_survive() {
        let e: Vec<f64> = noise(200, 1).iter().map(|v| v * v).collect();
        let lm = LossMatrix::from_columns(&[e.clone(), e], vec!["a".into(), "b".into()]).unwrap();
        let res = model_confidence_set(&lm, 0.15, 200, 7).unwrap();
        assert_eq!(res.surviving.len(), 2);
        assert_eq!(res.p_values, vec![1.0, 1.0]);
    }

    #[test]
    fn shifted_method_is_eliminated() {
        let a: Vec<f64> = noise(300, 2).iter().map(|v| v * v).collect();
        let b: Vec<f64> = noise(300, 3).iter().map(|v| v * v).collect();
        let mean = a.iter().sum::<f64>() / 300.0;
        let sd = (a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 299.0).sqrt();
        let c: Vec<f64> = a.iter().map(|v| v + 5.0 * sd).collect();
        let names = vec!["one".to_string(), "two".into(), "three".into()];
        let lm = LossMatrix::from_columns(&[a.clone(), b.clone(), c.clone()], names).unwrap();
        let res = model_confidence_set(&lm, 0.15, 500, 11).unwrap();
        assert!(!res.surviving.contains(&"three".to_string()));
        assert_eq!(res.elimination_order[0], "three");
        assert!(res.tmax_per_method[2] > 0.0);
        for (name, p) in res.method_names.iter().zip(&res.p_values) {
            assert_eq!(res.surviving.contains(name), *p >= 0.15);
        }

        // reordering the methods leaves the outcome unchanged
        let names2 = vec!["three".to_string(), "one".into(), "two".into()];
        let lm2 = LossMatrix::from_columns(&[c, a, b], names2).unwrap();
        let res2 = model_confidence_set(&lm2, 0.15, 500, 11).unwrap();
        let mut s1 = res.surviving.clone();
        let mut s2 = res2.surviving.clone();
        s1.sort();
        s2.sort();
        assert_eq!(s1, s2);
        assert_eq!(res.p_values[2], res2.p_values[0]);
    }

    #[test]
    fn sign_consistency() {
        let a: Vec<f64> = noise(200, 4).iter().map(|v| v * v).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 0.5).collect();
        let lm = LossMatrix::from_columns(&[a, b], vec!["a".into(), "b".into()]).unwrap();
        let res = model_confidence_set(&lm, 0.15, 100, 1).unwrap();
        assert!(res.tmax_per_method[0] < 0.0 && res.tmax_per_method[1] > 0.0);
    }

    #[test]
    fn p_values_monotone_along_elimination() {
        let cols: Vec<Vec<f64>> =
            (0..4).map(|k| noise(150, 20 + k).iter().map(|v| v * v + 0.3 * k as f64).collect()).collect();
        let names: Vec<String> = (0..4).map(|k| format!("m{k}")).collect();
        let res = model_confidence_set(&LossMatrix::from_columns(&cols, names.clone()).unwrap(), 0.15, 300, 3).unwrap();
        let ps: Vec<f64> =
            res.elimination_order.iter().map(|n| res.p_values[names.iter().position(|x| x == n).unwrap()]).collect();
        assert!(ps.windows(2).all(|w| w[0] <= w[1]));
    }
}
