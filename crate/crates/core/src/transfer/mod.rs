//! Transfer paths, transfer-and-retrain, transferability and the
//! brute-force sweep over every path.

mod records;
mod sweep;

use std::fmt;
use std::str::FromStr;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forecaster::{train, ForecastModel};

pub use records::{parse_records, render_records, SWEEP_HEADER};
pub use sweep::{
    base_model_seed, path_seed, sweep, sweep_uncached, BaseModel, ModelStore, NoStore, SweepConfig, SweepHooks,
    SweepOutput,
};

/// Ordered distinct branches a model is trained on, source first.
/// Ordering is lexicographic over the label sequence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TransferPath {
    branches: Vec<String>,
}

impl TransferPath {
    pub fn new(branches: Vec<String>) -> Result<Self> {
        if branches.is_empty() {
            return Err(Error::Path("empty transfer path".into()));
        }
        for (i, b) in branches.iter().enumerate() {
            if b.is_empty() || b.contains(['+', ';']) {
                return Err(Error::Path(format!("invalid branch label {b:?}")));
            }
            if branches[..i].contains(b) {
                return Err(Error::Path(format!("branch {b} repeats in path")));
            }
        }
        Ok(TransferPath { branches })
    }

    /// Single-branch path naming a base model.
    pub fn base(branch: &str) -> Self {
        TransferPath::new(vec![branch.to_string()]).expect("valid base label")
    }

    pub fn branches(&self) -> &[String] {
        &self.branches
    }

    /// Number of retraining hops; 0 for a base model.
    pub fn degree(&self) -> usize {
        self.branches.len() - 1
    }

    pub fn source(&self) -> &str {
        &self.branches[0]
    }

    pub fn target(&self) -> &str {
        self.branches.last().expect("non-empty path")
    }

    /// Branch the model was trained on just before the target.
    pub fn immediate_source(&self) -> Option<&str> {
        let n = self.branches.len();
        (n >= 2).then(|| self.branches[n - 2].as_str())
    }

    pub fn prefix(&self) -> Option<TransferPath> {
        (self.branches.len() >= 2).then(|| TransferPath {
            branches: self.branches[..self.branches.len() - 1].to_vec(),
        })
    }

    pub fn extend(&self, branch: &str) -> Result<TransferPath> {
        let mut b = self.branches.clone();
        b.push(branch.to_string());
        TransferPath::new(b)
    }

    pub fn starts_with(&self, prefix: &TransferPath) -> bool {
        self.branches.starts_with(&prefix.branches)
    }
}

impl fmt::Display for TransferPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.branches.join("+"))
    }
}

impl FromStr for TransferPath {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TransferPath::new(s.split('+').map(str::to_string).collect())
    }
}

/// Every ordered sequence of distinct branches with 2 to `max_degree + 1`
/// elements, sorted.
pub fn enumerate_paths(labels: &[String], max_degree: usize) -> Result<Vec<TransferPath>> {
    let n = labels.len();
    if max_degree < 1 || max_degree >= n {
        return Err(Error::Contract(format!(
            "max_degree must lie in 1..={} for {n} branches, got {max_degree}",
            n.saturating_sub(1)
        )));
    }
    let mut out = Vec::new();
    let mut stack: Vec<usize> = Vec::new();
    fn rec(labels: &[String], max_len: usize, stack: &mut Vec<usize>, out: &mut Vec<TransferPath>) {
        if stack.len() >= 2 {
            out.push(TransferPath {
                branches: stack.iter().map(|&i| labels[i].clone()).collect(),
            });
        }
        if stack.len() == max_len {
            return;
        }
        for i in 0..labels.len() {
            if !stack.contains(&i) {
                stack.push(i);
                rec(labels, max_len, stack, out);
                stack.pop();
            }
        }
    }
    rec(labels, max_degree + 1, &mut stack, &mut out);
    // Labels are distinct, so validation only fails on bad characters.
    for p in &out {
        TransferPath::new(p.branches.clone())?;
    }
    out.sort();
    Ok(out)
}

/// Paths per degree `1..=max_degree`: `n·(n−1)·…·(n−d)`.
pub fn path_counts(n: usize, max_degree: usize) -> Vec<usize> {
    (1..=max_degree)
        .map(|d| (0..=d).map(|k| n.saturating_sub(k)).product())
        .collect()
}

/// Relative MAPE improvement `(base − transferred) / base`; positive means
/// the transferred model forecasts better than the target-only model.
pub fn transferability(mape_base: f64, mape_transferred: f64) -> Result<f64> {
    if !(mape_base > 0.0) {
        return Err(Error::Contract(format!("base MAPE must be positive, got {mape_base}")));
    }
    Ok((mape_base - mape_transferred) / mape_base)
}

/// Retrains every parameter of `source` on the target's train split for
/// the configured number of retraining epochs.
pub fn transfer_retrain(source: &ForecastModel, target: &Dataset, shuffle_seed: u64) -> Result<ForecastModel> {
    if source.provenance.is_empty() {
        return Err(Error::Path("source model has not been trained".into()));
    }
    if source.provenance.contains(&target.branch_id) {
        return Err(Error::Path(format!(
            "model trained on {} already saw {}",
            source.provenance.join("+"),
            target.branch_id
        )));
    }
    let epochs = source.config.retrain_epochs;
    train(source.clone(), target, epochs, shuffle_seed)
}

/// Outcome of one path.
#[derive(Debug, Clone, PartialEq)]
pub enum RecordStatus {
    Ok,
    Failed(String),
}

impl fmt::Display for RecordStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RecordStatus::Ok => f.write_str("ok"),
            RecordStatus::Failed(r) => write!(f, "failed: {r}"),
        }
    }
}

/// One executed path. Metric fields are `None` when the path failed.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferRecord {
    pub path: TransferPath,
    pub mape_base: Option<f64>,
    pub mape_transferred: Option<f64>,
    /// `(mape_base − mape_transferred) / mape_base`.
    pub delta_m: Option<f64>,
    /// `mape_transferred − mape_base`.
    pub delta_m_raw: Option<f64>,
    pub rmse_transferred: Option<f64>,
    pub status: RecordStatus,
}

impl TransferRecord {
    pub fn target(&self) -> &str {
        self.path.target()
    }

    pub fn degree(&self) -> usize {
        self.path.degree()
    }

    pub fn is_ok(&self) -> bool {
        self.status == RecordStatus::Ok
    }

    pub fn succeeded(path: TransferPath, mape_base: f64, mape_transferred: f64, rmse: f64) -> Result<Self> {
        Ok(TransferRecord {
            delta_m: Some(transferability(mape_base, mape_transferred)?),
            delta_m_raw: Some(mape_transferred - mape_base),
            path,
            mape_base: Some(mape_base),
            mape_transferred: Some(mape_transferred),
            rmse_transferred: Some(rmse),
            status: RecordStatus::Ok,
        })
    }

    pub fn failed(path: TransferPath, mape_base: Option<f64>, reason: &str) -> Self {
        // Keep the reason on one CSV field.
        let reason: String = reason
            .chars()
            .map(|c| if c == ';' || c.is_control() { ' ' } else { c })
            .collect();
        TransferRecord {
            path,
            mape_base,
            mape_transferred: None,
            delta_m: None,
            delta_m_raw: None,
            rmse_transferred: None,
            status: RecordStatus::Failed(reason),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("B{i}")).collect()
    }

    #[test]
    fn six_branch_counts() {
        let paths = enumerate_paths(&labels(6), 5).unwrap();
        let mut per = [0usize; 5];
        for p in &paths {
            per[p.degree() - 1] += 1;
        }
        assert_eq!(per, [30, 120, 360, 720, 720]);
        assert_eq!(paths.len(), 1950);
        assert_eq!(path_counts(6, 5), vec![30, 120, 360, 720, 720]);
    }

    #[test]
    fn small_enumerations() {
        let p = enumerate_paths(&labels(2), 1).unwrap();
        assert_eq!(p.iter().map(|p| p.to_string()).collect::<Vec<_>>(), ["B1+B2", "B2+B1"]);
        let p = enumerate_paths(&labels(4), 3).unwrap();
        assert_eq!(p.len(), 60);
        assert_eq!(path_counts(4, 3), vec![12, 24, 24]);
        assert!(enumerate_paths(&labels(4), 4).is_err());
        assert!(enumerate_paths(&labels(4), 0).is_err());
    }

    #[test]
    fn closed_form_matches_brute_force() {
        for n in 2..=6 {
            for d in 1..n {
                let paths = enumerate_paths(&labels(n), d).unwrap();
                assert_eq!(paths.len(), path_counts(n, d).iter().sum::<usize>());
                for p in &paths {
                    let mut b = p.branches().to_vec();
                    b.sort();
                    b.dedup();
                    assert_eq!(b.len(), p.branches().len());
                }
            }
        }
    }

    #[test]
    fn transferability_examples() {
        let d = transferability(13.31, 12.52).unwrap();
        assert!((d - 0.0594).abs() < 1e-3);
        assert_eq!(transferability(7.0, 7.0).unwrap(), 0.0);
        assert!((transferability(10.0, 11.0).unwrap() + 0.10).abs() < 1e-12);
        assert!(transferability(0.0, 1.0).is_err());
    }

    #[test]
    fn path_parsing() {
        let p: TransferPath = "B2+B1+B3".parse().unwrap();
        assert_eq!(p.degree(), 2);
        assert_eq!(p.target(), "B3");
        assert_eq!(p.immediate_source(), Some("B1"));
        assert_eq!(p.prefix().unwrap().to_string(), "B2+B1");
        assert!("B1+B1".parse::<TransferPath>().is_err());
        assert!(p.extend("B2").is_err());
    }
}
