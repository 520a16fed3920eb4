//! Branch revenue series: ingestion, cleaning, windowing into model samples
//! and the train/test split with its feature scaler.

mod csv;
mod scaler;
mod synth;
mod window;

use chrono::{Datelike, NaiveDate};

pub use self::csv::{load_csv, parse_csv, write_csv};
pub use self::scaler::{NormalizedWindow, Scaler};
pub(crate) use self::scaler::raw_features;
pub use self::synth::{generate_synthetic, SynthConfig};
pub use self::window::{make_windows, split_train_test, SampleWindow, DEFAULT_PERIOD};

/// One day of revenue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub date: NaiveDate,
    pub revenue: f64,
}

/// A branch's dated daily revenue. Dates are strictly increasing; gaps are
/// allowed. `closed_weekdays` (0 = Monday) lists days on which the branch
/// does not trade, so a gap on such a day is a genuine zero.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchSeries {
    pub branch_id: String,
    pub observations: Vec<Observation>,
    pub closed_weekdays: Vec<u32>,
}

impl BranchSeries {
    pub fn new(branch_id: impl Into<String>, observations: Vec<Observation>) -> Self {
        BranchSeries {
            branch_id: branch_id.into(),
            observations,
            closed_weekdays: Vec::new(),
        }
    }

    pub fn with_closed_weekdays(mut self, days: Vec<u32>) -> Self {
        self.closed_weekdays = days;
        self
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn is_closed(&self, date: NaiveDate) -> bool {
        self.closed_weekdays
            .contains(&date.weekday().num_days_from_monday())
    }
}

/// Drops negative revenues. Returns the cleaned series and how many rows
/// were removed.
pub fn clean(series: &BranchSeries) -> (BranchSeries, usize) {
    let kept: Vec<Observation> = series
        .observations
        .iter()
        .copied()
        .filter(|o| o.revenue >= 0.0)
        .collect();
    let dropped = series.len() - kept.len();
    if dropped > 0 {
        log::info!("{}: dropped {dropped} negative revenue rows", series.branch_id);
    }
    if kept.is_empty() && !series.is_empty() {
        log::warn!("{}: no observations survive cleaning", series.branch_id);
    }
    let out = BranchSeries {
        branch_id: series.branch_id.clone(),
        observations: kept,
        closed_weekdays: series.closed_weekdays.clone(),
    };
    (out, dropped)
}

/// Train and test windows of one branch plus the scaler fit on train.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub branch_id: String,
    pub train: Vec<SampleWindow>,
    pub test: Vec<SampleWindow>,
    pub scaler: Scaler,
}

impl Dataset {
    pub fn normalized_train(&self) -> Vec<NormalizedWindow> {
        self.train.iter().map(|w| self.scaler.normalize(w)).collect()
    }

    pub fn normalized_test(&self) -> Vec<NormalizedWindow> {
        self.test.iter().map(|w| self.scaler.normalize(w)).collect()
    }
}

/// Load/generate → clean → window → split, for one series.
pub fn prepare_dataset(series: &BranchSeries, period: usize, test_year: i32) -> crate::Result<Dataset> {
    let (cleaned, _) = clean(series);
    let windows = make_windows(&cleaned, period)?;
    split_train_test(&series.branch_id, windows, test_year)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(revs: &[f64]) -> BranchSeries {
        let start = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap();
        BranchSeries::new(
            "t",
            revs.iter()
                .enumerate()
                .map(|(i, &r)| Observation {
                    date: start + chrono::Days::new(i as u64),
                    revenue: r,
                })
                .collect(),
        )
    }

    #[test]
    fn clean_cases() {
        let s = series(&[1.0; 10]);
        let (c, dropped) = clean(&s);
        assert_eq!(c, s);
        assert_eq!(dropped, 0);

        let mut revs = vec![3.0; 10];
        revs[4] = -5.0;
        let (c, dropped) = clean(&series(&revs));
        assert_eq!(c.len(), 9);
        assert_eq!(dropped, 1);

        let (c, dropped) = clean(&series(&[-1.0, -2.0]));
        assert!(c.is_empty());
        assert_eq!(dropped, 2);
    }

    #[test]
    fn clean_is_idempotent() {
        let s = series(&[1.0, -1.0, 2.0, 0.0, -0.5, 4.0]);
        let (once, _) = clean(&s);
        let (twice, dropped) = clean(&once);
        assert_eq!(once, twice);
        assert_eq!(dropped, 0);
    }
}
