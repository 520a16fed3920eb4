use super::SampleWindow;

/// Per-feature standardization fit on a train split.
///
/// Feature order: the `period` previous-sales positions, then year, month,
/// ISO week and weekday. Target position `i` shares the scaler of sales
/// position `i`, so forecasts can be mapped back to currency units.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    period: usize,
}

/// A window mapped into model space.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedWindow {
    pub sales: Vec<f64>,
    pub year: f64,
    pub month: f64,
    pub week: f64,
    pub weekday: f64,
    pub target: Vec<f64>,
}

pub(crate) fn raw_features(w: &SampleWindow) -> Vec<f64> {
    let mut f = w.sales_prev.clone();
    f.extend([
        w.year as f64,
        w.month as f64,
        w.week as f64,
        w.weekday_anchor as f64,
    ]);
    f
}

impl Scaler {
    pub fn fit(windows: &[SampleWindow]) -> Scaler {
        assert!(!windows.is_empty(), "cannot fit a scaler on no windows");
        let period = windows[0].sales_prev.len();
        let rows: Vec<Vec<f64>> = windows.iter().map(raw_features).collect();
        let dim = rows[0].len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in &rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Scaler {
            mean,
            scale,
            period,
        }
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn features(&self, w: &SampleWindow) -> Vec<f64> {
        raw_features(w)
    }

    pub fn transform(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn inverse(&self, scaled: &[f64]) -> Vec<f64> {
        scaled
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    /// Maps a model-space forecast back to currency units.
    pub fn inverse_sales(&self, scaled: &[f64]) -> Vec<f64> {
        scaled
            .iter()
            .enumerate()
            .map(|(i, v)| v * self.scale[i] + self.mean[i])
            .collect()
    }

    pub fn normalize(&self, w: &SampleWindow) -> NormalizedWindow {
        let f = self.transform(&raw_features(w));
        let p = self.period;
        let target = w
            .target
            .iter()
            .enumerate()
            .map(|(i, v)| (v - self.mean[i]) / self.scale[i])
            .collect();
        NormalizedWindow {
            sales: f[..p].to_vec(),
            year: f[p],
            month: f[p + 1],
            week: f[p + 2],
            weekday: f[p + 3],
            target,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_windows, BranchSeries, Observation};
    use crate::rng::RngStream;
    use chrono::{Days, NaiveDate};

    fn noisy_windows() -> Vec<SampleWindow> {
        let mut rng = RngStream::derive(3, "scaler");
        let start = NaiveDate::from_ymd_opt(2014, 3, 1).unwrap();
        let obs = (0..900)
            .map(|i| Observation {
                date: start + Days::new(i),
                revenue: 500.0 + 200.0 * rng.uniform(),
            })
            .collect();
        make_windows(&BranchSeries::new("b", obs), 7).unwrap()
    }

    #[test]
    fn round_trip_is_identity() {
        let w = noisy_windows();
        let sc = Scaler::fit(&w);
        for win in &w {
            let raw = sc.features(win);
            let back = sc.inverse(&sc.transform(&raw));
            for (a, b) in raw.iter().zip(&back) {
                assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
            }
            let n = sc.normalize(win);
            let target_back = sc.inverse_sales(&n.target);
            for (a, b) in win.target.iter().zip(&target_back) {
                assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn normalized_columns_standardized() {
        let w = noisy_windows();
        let sc = Scaler::fit(&w);
        let rows: Vec<Vec<f64>> = w.iter().map(|x| sc.transform(&sc.features(x))).collect();
        let n = rows.len() as f64;
        for c in 0..rows[0].len() {
            if sc.features(&w[0])[c] == sc.mean[c] && sc.scale[c] == 1.0 {
                // constant column (weekday under step-7 anchoring)
                assert!(rows.iter().all(|r| r[c] == 0.0));
                continue;
            }
            let mean = rows.iter().map(|r| r[c]).sum::<f64>() / n;
            let sd = (rows.iter().map(|r| (r[c] - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!(mean.abs() < 1e-9, "column {c} mean {mean}");
            assert!((sd - 1.0).abs() < 1e-6, "column {c} sd {sd}");
        }
    }
}
