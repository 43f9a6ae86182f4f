use chrono::{Datelike, Months, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::data::DataMatrix;
use crate::error::{Error, Result};

/// Rows sorted by date; several rows may share a date.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeIndexedDataset {
    pub dates: Vec<NaiveDate>,
    pub x: DataMatrix,
    pub y: Vec<f64>,
}

impl TimeIndexedDataset {
    pub fn new(dates: Vec<NaiveDate>, x: DataMatrix, y: Vec<f64>) -> Result<Self> {
        if dates.len() != x.nrows() || y.len() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "{} dates, {} rows, {} responses",
                dates.len(),
                x.nrows(),
                y.len()
            )));
        }
        if let Some(i) = dates.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument(format!("dates not sorted at row {}", i + 1)));
        }
        x.ensure_finite()?;
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(format!("response row {i}")));
        }
        Ok(Self { dates, x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    fn rows_where(&self, keep: impl Fn(NaiveDate) -> bool) -> Vec<usize> {
        (0..self.len()).filter(|&i| keep(self.dates[i])).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowScheme {
    /// Train on years `≤ train_end`, test on the next `test_span` years.
    Fixed { train_end: i32, test_span: u32 },
    /// For each origin τ: train on years `≤ τ`, test on `τ+1 ..= τ+horizon_years`.
    ExpandingAnnual { origins: Vec<i32>, horizon_years: u32 },
    /// Refit before every event date `d` on the preceding `train_years` years.
    /// Without `test_start`, testing begins at the first date with a full window.
    DailyRolling {
        train_years: u32,
        #[serde(default)]
        test_start: Option<NaiveDate>,
    },
}

impl WindowScheme {
    pub fn label(&self) -> &'static str {
        match self {
            WindowScheme::Fixed { .. } => "fixed",
            WindowScheme::ExpandingAnnual { .. } => "expanding_annual",
            WindowScheme::DailyRolling { .. } => "daily_rolling",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub label: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPlan {
    pub scheme: WindowScheme,
    pub splits: Vec<Split>,
}

impl WindowPlan {
    /// Test rows in prediction order (repeated rows for overlapping horizons).
    pub fn test_rows(&self) -> Vec<usize> {
        self.splits.iter().flat_map(|s| s.test.iter().copied()).collect()
    }
}

fn years_before(d: NaiveDate, years: u32) -> NaiveDate {
    d.checked_sub_months(Months::new(12 * years)).unwrap_or(NaiveDate::MIN)
}

pub fn make_windows(data: &TimeIndexedDataset, scheme: &WindowScheme) -> Result<WindowPlan> {
    if data.is_empty() {
        return Err(Error::Empty);
    }
    let split = |label: String, train: Vec<usize>, test: Vec<usize>| -> Result<Split> {
        if train.is_empty() {
            return Err(Error::EmptyTrainWindow(label));
        }
        if test.is_empty() {
            return Err(Error::EmptyTestWindow(label));
        }
        Ok(Split { label, train, test })
    };
    let splits = match scheme {
        WindowScheme::Fixed { train_end, test_span } => {
            let last = train_end + *test_span as i32;
            vec![split(
                format!("train..{train_end}"),
                data.rows_where(|d| d.year() <= *train_end),
                data.rows_where(|d| d.year() > *train_end && d.year() <= last),
            )?]
        }
        WindowScheme::ExpandingAnnual { origins, horizon_years } => {
            if origins.is_empty() {
                return Err(Error::InvalidArgument("no expanding-window origins".into()));
            }
            origins
                .iter()
                .map(|&tau| {
                    let last = tau + *horizon_years as i32;
                    split(
                        format!("origin {tau}"),
                        data.rows_where(|d| d.year() <= tau),
                        data.rows_where(|d| d.year() > tau && d.year() <= last),
                    )
                })
                .collect::<Result<_>>()?
        }
        WindowScheme::DailyRolling { train_years, test_start } => {
            if *train_years == 0 {
                return Err(Error::InvalidArgument("rolling window needs at least one year".into()));
            }
            let first = data.dates[0];
            let start = test_start
                .unwrap_or_else(|| first.checked_add_months(Months::new(12 * train_years)).unwrap_or(NaiveDate::MAX));
            let mut event_dates: Vec<NaiveDate> = data.dates.iter().copied().filter(|&d| d >= start).collect();
            event_dates.dedup();
            if event_dates.is_empty() {
                return Err(Error::EmptyTestWindow(format!("no events on or after {start}")));
            }
            event_dates
                .into_iter()
                .map(|day| {
                    let from = years_before(day, *train_years);
                    split(day.to_string(), data.rows_where(|d| d >= from && d < day), data.rows_where(|d| d == day))
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(WindowPlan { scheme: scheme.clone(), splits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    /// Two events in each of years 1..=6.
    fn toy() -> TimeIndexedDataset {
        let dates: Vec<NaiveDate> = (1..=6).flat_map(|y| [date(2000 + y, 3, 1), date(2000 + y, 9, 1)]).collect();
        let n = dates.len();
        let x = DataMatrix::from_matrix(DMatrix::from_fn(n, 1, |i, _| i as f64));
        TimeIndexedDataset::new(dates, x, (0..n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn fixed_partition() {
        let plan = make_windows(&toy(), &WindowScheme::Fixed { train_end: 2004, test_span: 2 }).unwrap();
        assert_eq!(plan.splits.len(), 1);
        assert_eq!(plan.splits[0].train, (0..8).collect::<Vec<_>>());
        assert_eq!(plan.splits[0].test, (8..12).collect::<Vec<_>>());
    }

    #[test]
    fn expanding_pools_horizons() {
        let scheme = WindowScheme::ExpandingAnnual { origins: vec![2004, 2005], horizon_years: 2 };
        let plan = make_windows(&toy(), &scheme).unwrap();
        assert_eq!(plan.splits.len(), 2);
        assert_eq!(plan.splits[0].train, (0..8).collect::<Vec<_>>());
        assert_eq!(plan.splits[0].test, (8..12).collect::<Vec<_>>());
        assert_eq!(plan.splits[1].train, (0..10).collect::<Vec<_>>());
        assert_eq!(plan.splits[1].test, vec![10, 11]);
    }

    #[test]
    fn rolling_groups_same_day_events() {
        let dates = vec![date(2001, 1, 5), date(2002, 1, 5), date(2003, 2, 1), date(2003, 2, 1), date(2003, 6, 1)];
        let x = DataMatrix::from_matrix(DMatrix::zeros(5, 1));
        let data = TimeIndexedDataset::new(dates, x, vec![0.0; 5]).unwrap();
        let plan = make_windows(&data, &WindowScheme::DailyRolling { train_years: 2, test_start: None }).unwrap();
        assert_eq!(plan.splits.len(), 2);
        assert_eq!(plan.splits[0].test, vec![2, 3]);
        // window opens 2001-02-01, after the first event
        assert_eq!(plan.splits[0].train, vec![1]);
        assert_eq!(plan.splits[1].train, vec![1, 2, 3]);
        assert_eq!(plan.splits[1].test, vec![4]);
    }

    #[test]
    fn every_test_row_follows_training() {
        let data = toy();
        for scheme in [
            WindowScheme::Fixed { train_end: 2003, test_span: 3 },
            WindowScheme::ExpandingAnnual { origins: vec![2002, 2003, 2004], horizon_years: 1 },
            WindowScheme::DailyRolling { train_years: 2, test_start: None },
        ] {
            let plan = make_windows(&data, &scheme).unwrap();
            for s in &plan.splits {
                let last_train = data.dates[*s.train.last().unwrap()];
                assert!(s.test.iter().all(|&t| data.dates[t] > last_train));
            }
        }
    }

    #[test]
    fn window_errors() {
        let data = toy();
        assert!(matches!(
            make_windows(&data, &WindowScheme::Fixed { train_end: 1990, test_span: 1 }),
            Err(Error::EmptyTrainWindow(_))
        ));
        assert!(matches!(
            make_windows(&data, &WindowScheme::Fixed { train_end: 2006, test_span: 1 }),
            Err(Error::EmptyTestWindow(_))
        ));
    }
}
