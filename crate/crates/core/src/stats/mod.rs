//! One-sample t-test, Spearman rank correlation and the indicator
//! correlation report.

mod special;

use crate::error::{Error, Result};
use crate::transfer::TransferPath;

pub use special::{ln_gamma, reg_inc_beta, student_t_cdf, student_t_two_sided};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p_two_sided: f64,
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub sd: f64,
    pub n: usize,
}

/// Two-sided one-sample t-test of `mean = mu0` from summary statistics.
pub fn ttest_from_summary(mean: f64, sd: f64, n: usize, mu0: f64) -> Result<TTest> {
    if n < 2 {
        return Err(Error::Contract(format!("t-test needs n ≥ 2, got {n}")));
    }
    if !(sd > 0.0) {
        return Err(Error::Undefined("t-test with zero sample variance".into()));
    }
    let t = (mean - mu0) / (sd / (n as f64).sqrt());
    Ok(TTest {
        t,
        p_two_sided: student_t_two_sided(t, (n - 1) as f64),
        mean,
        sd,
        n,
    })
}

pub fn one_sample_ttest(values: &[f64], mu0: f64) -> Result<TTest> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Contract(format!("t-test needs n ≥ 2, got {n}")));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    ttest_from_summary(mean, var.sqrt(), n, mu0)
}

/// How a correlation's p-value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PMethod {
    /// `t = r·√((n−2)/(1−r²))` against Student's t with n − 2 df.
    TApprox,
    /// Share of all n! pairings at least as extreme.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationResult {
    pub r_s: f64,
    pub p_value: f64,
    pub n: usize,
    pub method: PMethod,
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("correlation of {} vs {} values", x.len(), y.len())));
    }
    if x.len() < 3 {
        return Err(Error::Contract(format!("correlation needs n ≥ 3, got {}", x.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in correlation input".into()));
    }
    for (name, v) in [("x", x), ("y", y)] {
        if v.iter().all(|a| *a == v[0]) {
            return Err(Error::Undefined(format!("correlation with constant {name}")));
        }
    }
    Ok(())
}

/// Spearman's rank correlation with average ranks for ties and a
/// two-sided t-approximation p-value.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    check_pair(x, y)?;
    let n = x.len();
    let r = pearson(&average_ranks(x), &average_ranks(y));
    let p = if r.abs() >= 1.0 {
        0.0
    } else {
        let t = r * ((n - 2) as f64 / (1.0 - r * r)).sqrt();
        student_t_two_sided(t, (n - 2) as f64)
    };
    Ok(CorrelationResult {
        r_s: r,
        p_value: p,
        n,
        method: PMethod::TApprox,
    })
}

/// Largest n for which [`spearman_exact`] enumerates permutations.
pub const EXACT_MAX_N: usize = 10;

/// Spearman's rho with an exact two-sided permutation p-value.
pub fn spearman_exact(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    check_pair(x, y)?;
    let n = x.len();
    if n > EXACT_MAX_N {
        return Err(Error::Contract(format!("exact p-value limited to n ≤ {EXACT_MAX_N}")));
    }
    let rx = average_ranks(x);
    let mut ry = average_ranks(y);
    let observed = pearson(&rx, &ry);
    // Tolerance so permutations tying the observed value count as extreme.
    let bar = observed.abs() - 1e-12;
    let mut extreme = 0u64;
    let mut total = 0u64;
    // Heap's algorithm over all orderings of the y ranks.
    let mut c = vec![0usize; n];
    let mut visit = |ry: &[f64]| {
        total += 1;
        if pearson(&rx, ry).abs() >= bar {
            extreme += 1;
        }
    };
    visit(&ry);
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                ry.swap(0, i);
            } else {
                ry.swap(c[i], i);
            }
            visit(&ry);
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(CorrelationResult {
        r_s: observed,
        p_value: extreme as f64 / total as f64,
        n,
        method: PMethod::Exact,
    })
}

/// Significance marks: `***` p < .001, `**` p < .01, `*` p < .05.
pub fn stars(p: f64) -> &'static str {
    if p < 0.001 {
        "***"
    } else if p < 0.01 {
        "**"
    } else if p < 0.05 {
        "*"
    } else {
        ""
    }
}

/// Indicators of one successful transfer record.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorRow {
    /// Immediate source: the branch trained on just before the target.
    pub source: String,
    pub target: String,
    pub path: TransferPath,
    pub delta_m: f64,
    pub d_raw: f64,
    pub d_tsne: f64,
    pub d_pca: f64,
    pub d_mds: f64,
    pub rho_svcca: f64,
}

/// Tested hypotheses, in report order: label, indicator name, column.
pub const HYPOTHESES: [(&str, &str, fn(&IndicatorRow) -> f64); 5] = [
    ("H2", "data_divergence", |r| r.d_raw),
    ("H3.1", "tsne_divergence", |r| r.d_tsne),
    ("H3.2", "pca_divergence", |r| r.d_pca),
    ("H3.3", "mds_divergence", |r| r.d_mds),
    ("H4", "svcca_rho", |r| r.rho_svcca),
];

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorCorrelation {
    pub hypothesis: &'static str,
    pub indicator: &'static str,
    /// Error text when the correlation is undefined (e.g. constant input).
    pub result: std::result::Result<CorrelationResult, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationReport {
    /// H1: mean transferability differs from 0.
    pub ttest: TTest,
    pub correlations: Vec<IndicatorCorrelation>,
    pub n_rows: usize,
}

/// Correlates every indicator with transferability. Exact permutation
/// p-values are used up to [`EXACT_MAX_N`] rows, the t approximation above.
pub fn correlate_indicators(rows: &[IndicatorRow]) -> Result<CorrelationReport> {
    if rows.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "correlation report needs at least 3 successful records, got {}",
            rows.len()
        )));
    }
    let dm: Vec<f64> = rows.iter().map(|r| r.delta_m).collect();
    let ttest = one_sample_ttest(&dm, 0.0)?;
    let correlations = HYPOTHESES
        .iter()
        .map(|(h, name, col)| {
            let x: Vec<f64> = rows.iter().map(col).collect();
            let r = if rows.len() <= EXACT_MAX_N {
                spearman_exact(&x, &dm)
            } else {
                spearman_rho(&x, &dm)
            };
            IndicatorCorrelation {
                hypothesis: h,
                indicator: name,
                result: r.map_err(|e| e.to_string()),
            }
        })
        .collect();
    Ok(CorrelationReport {
        ttest,
        correlations,
        n_rows: rows.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    #[test]
    fn large_sweep_summary_ttest() {
        let t = ttest_from_summary(0.00894, 0.06728, 1950, 0.0).unwrap();
        assert!((5.80..=5.95).contains(&t.t), "{}", t.t);
        assert!(t.p_two_sided < 1e-4);
    }

    #[test]
    fn ttest_cases() {
        let t = one_sample_ttest(&[-1.0, 1.0, -2.0, 2.0], 0.0).unwrap();
        assert_eq!(t.t, 0.0);
        assert!((t.p_two_sided - 1.0).abs() < 1e-12);
        let t = one_sample_ttest(&[1.0, 1.0, 1.0, 1.0, 1.0001], 0.0).unwrap();
        assert!(t.p_two_sided < 1e-6);
        assert!(one_sample_ttest(&[2.0, 2.0, 2.0], 0.0).is_err());
        let v = [0.3, -0.1, 0.25, 0.05, 0.4];
        let a = one_sample_ttest(&v, 0.0).unwrap();
        let b = one_sample_ttest(&v.map(|x| x * 7.5), 0.0).unwrap();
        assert!((a.t - b.t).abs() < 1e-12 && (a.p_two_sided - b.p_two_sided).abs() < 1e-12);
    }

    #[test]
    fn ranks_with_ties() {
        assert_eq!(average_ranks(&[10.0, 20.0, 10.0, 30.0]), vec![1.5, 3.0, 1.5, 4.0]);
    }

    #[test]
    fn spearman_cases() {
        let r = spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[1.0, 4.0, 9.0, 16.0]).unwrap();
        assert_eq!(r.r_s, 1.0);
        assert_eq!(spearman_rho(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap().r_s, -1.0);
        assert!(matches!(spearman_rho(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]), Err(Error::Undefined(_))));
    }

    #[test]
    fn monotone_invariance() {
        let mut rng = RngStream::derive(1, "sp");
        let x: Vec<f64> = (0..30).map(|_| rng.normal(0.0, 1.0)).collect();
        let y: Vec<f64> = (0..30).map(|_| rng.normal(0.0, 1.0)).collect();
        let base = spearman_rho(&x, &y).unwrap();
        let tx: Vec<f64> = x.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
        assert_eq!(spearman_rho(&tx, &y).unwrap(), base);
    }

    #[test]
    fn exact_p_values() {
        // n = 4, perfect order: 2 of 24 permutations reach |r| = 1.
        let r = spearman_exact(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 5.0, 8.0]).unwrap();
        assert_eq!(r.r_s, 1.0);
        assert!((r.p_value - 2.0 / 24.0).abs() < 1e-15);
        let r = spearman_exact(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 5.0]).unwrap();
        assert!(r.p_value > 0.05 && r.p_value < 1.0);
    }

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.0005), "***");
        assert_eq!(stars(0.001), "**");
        assert_eq!(stars(0.004), "**");
        assert_eq!(stars(0.01), "*");
        assert_eq!(stars(0.049), "*");
        assert_eq!(stars(0.05), "");
    }

    #[test]
    fn report_from_constructed_rows() {
        let rows: Vec<IndicatorRow> = (0..12)
            .map(|i| {
                let d = i as f64 * 0.1 + 0.05;
                IndicatorRow {
                    source: "B1".into(),
                    target: "B2".into(),
                    path: "B1+B2".parse().unwrap(),
                    delta_m: -d,
                    d_raw: d,
                    d_tsne: (i % 5) as f64,
                    d_pca: d * d,
                    d_mds: 1.0,
                    rho_svcca: 1.0 - d / 2.0,
                }
            })
            .collect();
        let rep = correlate_indicators(&rows).unwrap();
        assert_eq!(rep.correlations.len(), 5);
        let h2 = rep.correlations[0].result.as_ref().unwrap();
        assert_eq!(h2.r_s, -1.0);
        assert!(rep.correlations[3].result.is_err());
        assert_eq!(rep.correlations[4].result.as_ref().unwrap().r_s, 1.0);
        assert!(correlate_indicators(&rows[..2]).is_err());
    }
}
