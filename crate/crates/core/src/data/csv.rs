use std::fs;
use std::path::Path;

use chrono::NaiveDate;

use super::{BranchSeries, Observation};
use crate::error::{Error, Result};

const HEADER: &str = "date,revenue";

pub fn load_csv(path: impl AsRef<Path>, branch_id: &str) -> Result<BranchSeries> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, branch_id)
}

/// Parses `date,revenue` text. Rows are sorted by date (stable);
/// duplicate dates are rejected.
pub fn parse_csv(text: &str, branch_id: &str) -> Result<BranchSeries> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end_matches('\r').trim() == HEADER => {}
        Some((_, h)) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header {HEADER:?}, got {h:?}"),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "empty file".into(),
            })
        }
    }

    let mut rows: Vec<(Observation, usize)> = Vec::new();
    for (i, raw) in lines {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let Some((d, r)) = line.split_once(',') else {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected two fields in {line:?}"),
            });
        };
        let date = NaiveDate::parse_from_str(d.trim(), "%Y-%m-%d").map_err(|e| Error::Parse {
            line: line_no,
            message: format!("bad date {d:?}: {e}"),
        })?;
        let revenue: f64 = r.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            message: format!("bad revenue {r:?}"),
        })?;
        if !revenue.is_finite() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("non-finite revenue {r:?}"),
            });
        }
        rows.push((Observation { date, revenue }, line_no));
    }

    rows.sort_by_key(|(o, _)| o.date);
    for pair in rows.windows(2) {
        if pair[0].0.date == pair[1].0.date {
            return Err(Error::Data(format!(
                "{branch_id}: duplicate date {} (lines {} and {})",
                pair[1].0.date, pair[0].1, pair[1].1
            )));
        }
    }
    Ok(BranchSeries::new(
        branch_id,
        rows.into_iter().map(|(o, _)| o).collect(),
    ))
}

pub fn write_csv(series: &BranchSeries, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(series.len() * 20 + 16);
    out.push_str(HEADER);
    out.push('\n');
    for o in &series.observations {
        out.push_str(&format!("{},{}\n", o.date.format("%Y-%m-%d"), o.revenue));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
