use chrono::{Datelike, Days, NaiveDate};

use super::{BranchSeries, Dataset, Scaler};
use crate::error::{Error, Result};

pub const DEFAULT_PERIOD: usize = 7;

/// One input/target pair: the previous sales period, calendar features of
/// the first target day (the anchor) and the next period's revenues.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWindow {
    pub anchor: NaiveDate,
    pub sales_prev: Vec<f64>,
    pub year: i32,
    pub month: u32,
    /// ISO-8601 week number.
    pub week: u32,
    /// 0 = Monday.
    pub weekday_anchor: u32,
    pub target: Vec<f64>,
    /// Target days imputed as zero because the branch is closed then.
    pub target_closed: Vec<bool>,
}

impl SampleWindow {
    pub fn period(&self) -> usize {
        self.target.len()
    }

    pub fn target_date(&self, offset: usize) -> NaiveDate {
        self.anchor + Days::new(offset as u64)
    }
}

/// Cuts a cleaned series into windows anchored every `period` days from the
/// first date: days `[t-period, t-1]` are the input, `[t, t+period-1]` the
/// target. A missing day on a closed weekday is imputed as 0; any other gap
/// discards the window.
pub fn make_windows(series: &BranchSeries, period: usize) -> Result<Vec<SampleWindow>> {
    assert!(period >= 1, "period must be positive");
    let (Some(first), Some(last)) = (series.observations.first(), series.observations.last()) else {
        return Err(Error::InsufficientData(format!(
            "{}: empty series",
            series.branch_id
        )));
    };
    let span = (last.date - first.date).num_days() as usize + 1;
    if span < 2 * period {
        return Err(Error::InsufficientData(format!(
            "{}: {span} days, need at least {}",
            series.branch_id,
            2 * period
        )));
    }

    let mut days: Vec<Option<f64>> = vec![None; span];
    for o in &series.observations {
        days[(o.date - first.date).num_days() as usize] = Some(o.revenue);
    }
    let date_at = |i: usize| first.date + Days::new(i as u64);

    let mut windows = Vec::new();
    let mut discarded = 0usize;
    let mut anchor = period;
    while anchor + period <= span {
        let mut values = Vec::with_capacity(2 * period);
        let mut closed = Vec::with_capacity(2 * period);
        let mut keep = true;
        for i in anchor - period..anchor + period {
            match days[i] {
                Some(v) => {
                    values.push(v);
                    closed.push(false);
                }
                None if series.is_closed(date_at(i)) => {
                    values.push(0.0);
                    closed.push(true);
                }
                None => {
                    keep = false;
                    break;
                }
            }
        }
        if keep {
            let d = date_at(anchor);
            windows.push(SampleWindow {
                anchor: d,
                sales_prev: values[..period].to_vec(),
                year: d.year(),
                month: d.month(),
                week: d.iso_week().week(),
                weekday_anchor: d.weekday().num_days_from_monday(),
                target: values[period..].to_vec(),
                target_closed: closed[period..].to_vec(),
            });
        } else {
            discarded += 1;
        }
        anchor += period;
    }
    if discarded > 0 {
        log::info!(
            "{}: discarded {discarded} windows spanning unexplained gaps",
            series.branch_id
        );
    }
    Ok(windows)
}

/// Windows anchored in `test_year` form the test split; everything else
/// trains. The scaler is fit on the train split only.
pub fn split_train_test(branch_id: &str, windows: Vec<SampleWindow>, test_year: i32) -> Result<Dataset> {
    if windows.is_empty() {
        return Err(Error::Split(format!("{branch_id}: no windows to split")));
    }
    let (test, train): (Vec<_>, Vec<_>) = windows.into_iter().partition(|w| w.year == test_year);
    if train.is_empty() {
        return Err(Error::Split(format!("{branch_id}: empty train split")));
    }
    if test.is_empty() {
        return Err(Error::Split(format!(
            "{branch_id}: no windows anchored in test year {test_year}"
        )));
    }
    let scaler = Scaler::fit(&train);
    Ok(Dataset {
        branch_id: branch_id.to_string(),
        train,
        test,
        scaler,
    })
}
