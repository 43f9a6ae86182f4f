//! Out-of-sample forecasting harness and model confidence sets.

mod forecast;
mod mcs;
mod windows;

pub use forecast::{
    audit_passes, run_forecast_experiment, FitRecord, FitStage, ForecastConfig, ForecastReport, PcaSettings,
    PostEstimator, SelectionMethod, SelectionScope, SplitSummary, WfdrCutoff,
};
pub use mcs::{
    block_bootstrap, block_bootstrap_indices, block_length_aic, model_confidence_set, LossMatrix, McsResult,
};
pub use windows::{make_windows, Split, TimeIndexedDataset, WindowPlan, WindowScheme};

use crate::error::{Error, Result};

fn check_pair(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.len() != actual.len() {
        return Err(Error::LengthMismatch { left: pred.len(), right: actual.len() });
    }
    if pred.is_empty() {
        return Err(Error::Empty);
    }
    Ok(())
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(pred, actual)?;
    let mse = pred.iter().zip(actual).map(|(p, a)| (p - a).powi(2)).sum::<f64>() / pred.len() as f64;
    Ok(mse.sqrt())
}

pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    check_pair(pred, actual)?;
    Ok(pred.iter().zip(actual).map(|(p, a)| (p - a).abs()).sum::<f64>() / pred.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0, 2.0], &[3.0, 2.0]).unwrap(), 2f64.sqrt());
        assert_eq!(mae(&[1.0, 2.0], &[3.0, 2.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[1.5, 4.5], &[1.0, 4.0]).unwrap(), 0.5);
        assert_eq!(mae(&[1.5, 4.5], &[1.0, 4.0]).unwrap(), 0.5);
        assert_eq!(rmse(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { left: 1, right: 2 }));
        assert_eq!(mae(&[], &[]), Err(Error::Empty));
    }
}
