//! Final report bundle: indicator rows, correlations, transfer tables, KDE
//! overlays and a markdown summary. Every function here is pure; the
//! pipeline writes the returned files.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::divergence::{DivergenceMatrix, Representation, SampleSet};
use crate::error::{Error, Result};
use crate::projections::{kde2d, GridSpec, KdeGrid, METHODS};
use crate::stats::{correlate_indicators, stars, CorrelationReport, IndicatorRow};
use crate::transfer::{TransferPath, TransferRecord};

pub const CORRELATIONS_HEADER: &str = "hypothesis;indicator;r_s;p_value;n;stars";
pub const TTEST_HEADER: &str = "hypothesis;statistic;t;p_value;mean;sd;n;stars";
pub const INDICATOR_HEADER: &str = "path;source;target;delta_m;d_raw;d_tsne;d_pca;d_mds;rho_svcca";

/// Everything the report is computed from.
#[derive(Debug, Clone)]
pub struct ReportInputs {
    pub labels: Vec<String>,
    /// Base-model test MAPE per branch; `None` when it could not be scored.
    pub base_mape: BTreeMap<String, Option<f64>>,
    pub records: Vec<TransferRecord>,
    /// One matrix per representation: raw, t-SNE, PCA, MDS.
    pub matrices: Vec<DivergenceMatrix>,
    /// SVCCA rho per ordered (source, target) pair; `None` if undefined.
    pub svcca: BTreeMap<(String, String), Option<f64>>,
    /// Projected sample sets; 2-D sets get KDE overlays.
    pub projections: Vec<SampleSet>,
    pub kde_grid: usize,
}

/// Records left out of the correlation analysis.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Exclusions {
    pub failed: usize,
    pub svcca_undefined: usize,
}

fn matrix(inputs: &ReportInputs, rep: Representation) -> Result<&DivergenceMatrix> {
    inputs
        .matrices
        .iter()
        .find(|m| m.representation == rep)
        .ok_or_else(|| Error::Data(format!("no {rep} divergence matrix")))
}

/// Checks that records, matrices and SVCCA pairs all speak of the same
/// branches; the error lists every orphan key.
pub fn check_join(inputs: &ReportInputs) -> Result<()> {
    let known: BTreeSet<&str> = inputs.labels.iter().map(String::as_str).collect();
    let mut orphans = BTreeSet::new();
    for r in &inputs.records {
        for b in r.path.branches() {
            if !known.contains(b.as_str()) {
                orphans.insert(format!("record {}: branch {b}", r.path));
            }
        }
    }
    for rep in Representation::ALL {
        let m = matrix(inputs, rep)?;
        let got: BTreeSet<&str> = m.labels.iter().map(String::as_str).collect();
        for l in known.difference(&got) {
            orphans.insert(format!("{rep} divergence: missing {l}"));
        }
        for l in got.difference(&known) {
            orphans.insert(format!("{rep} divergence: unknown {l}"));
        }
    }
    for (s, t) in inputs.svcca.keys() {
        if !known.contains(s.as_str()) || !known.contains(t.as_str()) {
            orphans.insert(format!("svcca: unknown pair {s};{t}"));
        }
    }
    for r in inputs.records.iter().filter(|r| r.is_ok()) {
        let pair = (r.path.immediate_source().unwrap_or_default().to_string(), r.target().to_string());
        if !inputs.svcca.contains_key(&pair) {
            orphans.insert(format!("svcca: no pair {};{} for record {}", pair.0, pair.1, r.path));
        }
    }
    for b in inputs.base_mape.keys() {
        if !known.contains(b.as_str()) {
            orphans.insert(format!("bases: unknown {b}"));
        }
    }
    if orphans.is_empty() {
        Ok(())
    } else {
        Err(Error::Data(format!(
            "report inputs do not join: {}",
            orphans.into_iter().collect::<Vec<_>>().join(", ")
        )))
    }
}

/// One row per successful record, keyed by the record's immediate source
/// and target. Failed records and pairs without an SVCCA score are
/// counted, not joined.
pub fn indicator_rows(inputs: &ReportInputs) -> Result<(Vec<IndicatorRow>, Exclusions)> {
    check_join(inputs)?;
    let mats = Representation::ALL.map(|rep| matrix(inputs, rep));
    let [raw, tsne, pca, mds] = mats;
    let (raw, tsne, pca, mds) = (raw?, tsne?, pca?, mds?);
    let mut rows = Vec::new();
    let mut ex = Exclusions::default();
    for r in &inputs.records {
        let (true, Some(delta_m)) = (r.is_ok(), r.delta_m) else {
            ex.failed += 1;
            continue;
        };
        let source = r.path.immediate_source().expect("transfer path has a source").to_string();
        let target = r.target().to_string();
        let Some(rho) = inputs.svcca[&(source.clone(), target.clone())] else {
            ex.svcca_undefined += 1;
            continue;
        };
        let d = |m: &DivergenceMatrix| m.get(&source, &target).expect("joined above");
        rows.push(IndicatorRow {
            d_raw: d(raw),
            d_tsne: d(tsne),
            d_pca: d(pca),
            d_mds: d(mds),
            rho_svcca: rho,
            delta_m,
            path: r.path.clone(),
            source,
            target,
        });
    }
    Ok((rows, ex))
}

pub fn indicator_csv(rows: &[IndicatorRow]) -> String {
    let mut s = format!("{INDICATOR_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{};{};{};{};{};{};{};{};{}",
            r.path, r.source, r.target, r.delta_m, r.d_raw, r.d_tsne, r.d_pca, r.d_mds, r.rho_svcca
        );
    }
    s
}

pub fn correlations_csv(report: &CorrelationReport) -> String {
    let mut s = format!("{CORRELATIONS_HEADER}\n");
    for c in &report.correlations {
        match &c.result {
            Ok(r) => {
                let _ = writeln!(s, "{};{};{};{};{};{}", c.hypothesis, c.indicator, r.r_s, r.p_value, r.n, stars(r.p_value));
            }
            Err(_) => {
                let _ = writeln!(s, "{};{};;;{};", c.hypothesis, c.indicator, report.n_rows);
            }
        }
    }
    s
}

pub fn ttest_csv(report: &CorrelationReport) -> String {
    let t = &report.ttest;
    format!(
        "{TTEST_HEADER}\nH1;delta_m_mean;{};{};{};{};{};{}\n",
        t.t,
        t.p_two_sided,
        t.mean,
        t.sd,
        t.n,
        stars(t.p_two_sided)
    )
}

fn first_degree(records: &[TransferRecord]) -> BTreeMap<(&str, &str), &TransferRecord> {
    records
        .iter()
        .filter(|r| r.degree() == 1)
        .map(|r| ((r.path.source(), r.target()), r))
        .collect()
}

/// Source × target matrix of first-degree values, diagonal blank. Missing
/// or failed transfers are blank as well.
pub fn first_degree_csv(labels: &[String], records: &[TransferRecord], value: fn(&TransferRecord) -> Option<f64>) -> String {
    let cells = first_degree(records);
    let mut s = format!("source;{}\n", labels.join(";"));
    for src in labels {
        s.push_str(src);
        for tgt in labels {
            s.push(';');
            if let Some(v) = cells.get(&(src.as_str(), tgt.as_str())).and_then(|r| value(r)) {
                s.push_str(&v.to_string());
            }
        }
        s.push('\n');
    }
    s
}

/// Lowest-MAPE model for one target at one degree (0 = base model).
#[derive(Debug, Clone, PartialEq)]
pub struct BestEntry {
    pub target: String,
    pub degree: usize,
    pub mape: f64,
    /// `None` for the base model.
    pub delta_m: Option<f64>,
    pub path: TransferPath,
}

/// Best model per (target, degree) over successful records; ties go to
/// the lexicographically first path.
pub fn best_by_degree(labels: &[String], base_mape: &BTreeMap<String, Option<f64>>, records: &[TransferRecord]) -> Vec<BestEntry> {
    let mut best: BTreeMap<(usize, usize), BestEntry> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        if let Some(Some(m)) = base_mape.get(l) {
            best.insert(
                (i, 0),
                BestEntry {
                    target: l.clone(),
                    degree: 0,
                    mape: *m,
                    delta_m: None,
                    path: TransferPath::base(l),
                },
            );
        }
    }
    for r in records {
        let (Some(m), true) = (r.mape_transferred, r.is_ok()) else { continue };
        let Some(i) = labels.iter().position(|l| l == r.target()) else { continue };
        let key = (i, r.degree());
        let better = match best.get(&key) {
            None => true,
            Some(b) => m < b.mape || (m == b.mape && r.path < b.path),
        };
        if better {
            best.insert(
                key,
                BestEntry {
                    target: r.target().to_string(),
                    degree: r.degree(),
                    mape: m,
                    delta_m: r.delta_m,
                    path: r.path.clone(),
                },
            );
        }
    }
    best.into_values().collect()
}

pub fn best_csv(entries: &[BestEntry]) -> String {
    let mut s = String::from("target;degree;mape;delta_m;path\n");
    for e in entries {
        let dm = e.delta_m.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{};{};{};{dm};{}", e.target, e.degree, e.mape, e.path);
    }
    s
}

/// Grid over all `sets`, widened by a tenth of the span on every side.
pub fn shared_grid(sets: &[&crate::tensor::Matrix], n: usize) -> Result<GridSpec> {
    let g = GridSpec::covering(sets, n, n, 0.0).or_else(|_| GridSpec::covering(sets, n, n, 0.5))?;
    let (px, py) = (0.1 * (g.x1 - g.x0), 0.1 * (g.y1 - g.y0));
    Ok(GridSpec {
        x0: g.x0 - px,
        x1: g.x1 + px,
        y0: g.y0 - py,
        y1: g.y1 + py,
        ..g
    })
}

/// KDE overlay of two branches' projections on one shared grid, annotated
/// with both first-degree transferabilities.
///
/// ```text
/// pair;B1;B3
/// delta_m;B1+B3;0.0591
/// delta_m;B3+B1;
/// bounds;x0;x1;y0;y1
/// density;B1
/// <ny rows of nx values>
/// density;B3
/// <ny rows of nx values>
/// ```
pub fn kde_overlay(a: &SampleSet, b: &SampleSet, n: usize, records: &[TransferRecord]) -> Result<String> {
    let spec = shared_grid(&[&a.points, &b.points], n)?;
    let ga = kde2d(&a.points, spec)?;
    let gb = kde2d(&b.points, spec)?;
    let fd = first_degree(records);
    let dm = |s: &str, t: &str| {
        fd.get(&(s, t))
            .and_then(|r| r.delta_m)
            .map(|v| v.to_string())
            .unwrap_or_default()
    };
    let (la, lb) = (&a.source_label, &b.source_label);
    let mut out = format!("pair;{la};{lb}\n");
    let _ = writeln!(out, "delta_m;{la}+{lb};{}", dm(la, lb));
    let _ = writeln!(out, "delta_m;{lb}+{la};{}", dm(lb, la));
    let body = |g: &KdeGrid| g.to_csv().split_once('\n').map(|(_, rest)| rest.to_string()).unwrap_or_default();
    let bounds = ga.to_csv().lines().next().unwrap_or_default().to_string();
    out.push_str(&bounds);
    out.push('\n');
    let _ = writeln!(out, "density;{la}");
    out.push_str(&body(&ga));
    let _ = writeln!(out, "density;{lb}");
    out.push_str(&body(&gb));
    Ok(out)
}

/// Output files of the report stage, keyed by relative path.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bundle {
    pub files: BTreeMap<String, String>,
}

fn pct(v: f64) -> String {
    format!("{:+.2}%", 100.0 * v)
}

fn summary(
    inputs: &ReportInputs,
    preamble: &str,
    report: &CorrelationReport,
    ex: &Exclusions,
    best: &[BestEntry],
) -> String {
    let mut s = String::from("# Transfer study report\n\n");
    s.push_str(preamble);
    if !preamble.ends_with('\n') {
        s.push('\n');
    }
    let n_ok = inputs.records.iter().filter(|r| r.is_ok()).count();
    let _ = writeln!(
        s,
        "\n## Transfer records\n\n{} records, {} ok, {} failed; {} joined rows, {} excluded for undefined SVCCA.\n",
        inputs.records.len(),
        n_ok,
        ex.failed,
        report.n_rows,
        ex.svcca_undefined
    );
    for r in inputs.records.iter().filter(|r| !r.is_ok()) {
        let _ = writeln!(s, "- {}: {}", r.path, r.status);
    }

    s.push_str("\n## First-degree transfers (MAPE, relative improvement)\n\n| source |");
    for l in &inputs.labels {
        let _ = write!(s, " {l} |");
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(inputs.labels.len()));
    s.push_str("\n| base |");
    for l in &inputs.labels {
        match inputs.base_mape.get(l).copied().flatten() {
            Some(m) => {
                let _ = write!(s, " {m:.2} |");
            }
            None => s.push_str(" n/a |"),
        }
    }
    let fd = first_degree(&inputs.records);
    for src in &inputs.labels {
        let _ = write!(s, "\n| {src} |");
        for tgt in &inputs.labels {
            match fd.get(&(src.as_str(), tgt.as_str())) {
                _ if src == tgt => s.push_str(" - |"),
                Some(r) if r.is_ok() => {
                    let _ = write!(
                        s,
                        " {:.2} ({}) |",
                        r.mape_transferred.unwrap_or(f64::NAN),
                        pct(r.delta_m.unwrap_or(f64::NAN))
                    );
                }
                Some(_) => s.push_str(" failed |"),
                None => s.push_str(" |"),
            }
        }
    }
    s.push_str("\n| best |");
    for tgt in &inputs.labels {
        let b = inputs
            .records
            .iter()
            .filter(|r| r.degree() == 1 && r.target() == tgt && r.is_ok())
            .min_by(|a, b| a.mape_transferred.partial_cmp(&b.mape_transferred).unwrap_or(std::cmp::Ordering::Equal));
        match b {
            Some(r) => {
                let _ = write!(s, " {:.2} ({}) |", r.mape_transferred.unwrap_or(f64::NAN), pct(r.delta_m.unwrap_or(f64::NAN)));
            }
            None => s.push_str(" |"),
        }
    }

    let max_degree = best.iter().map(|e| e.degree).max().unwrap_or(0);
    s.push_str("\n\n## Best model per degree of transfer (MAPE, path)\n\n| target |");
    for d in 0..=max_degree {
        if d == 0 {
            s.push_str(" base |");
        } else {
            let _ = write!(s, " degree {d} |");
        }
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(max_degree + 1));
    for l in &inputs.labels {
        let _ = write!(s, "\n| {l} |");
        for d in 0..=max_degree {
            match best.iter().find(|e| &e.target == l && e.degree == d) {
                Some(e) => {
                    let _ = write!(s, " {:.2} ({}) |", e.mape, e.path);
                }
                None => s.push_str(" |"),
            }
        }
    }

    let t = &report.ttest;
    let _ = write!(
        s,
        "\n\n## Mean transferability\n\nOne-sample two-sided t-test of delta_m against 0: mean {:.5}, sd {:.5}, n {}, t {:.4}, p {:.3e} {}\n",
        t.mean,
        t.sd,
        t.n,
        t.t,
        t.p_two_sided,
        stars(t.p_two_sided)
    );
    s.push_str("\n## Indicators of transferability (Spearman)\n\n| H | indicator | r_s | p | n |\n|---|---|---|---|---|\n");
    for c in &report.correlations {
        match &c.result {
            Ok(r) => {
                let _ = writeln!(
                    s,
                    "| {} | {} | {:.4}{} | {:.3e} | {} |",
                    c.hypothesis,
                    c.indicator,
                    r.r_s,
                    stars(r.p_value),
                    r.p_value,
                    r.n
                );
            }
            Err(e) => {
                let _ = writeln!(s, "| {} | {} | undefined | {e} | {} |", c.hypothesis, c.indicator, report.n_rows);
            }
        }
    }
    s.push_str("\n\"*\" p < .05, \"**\" p < .01, \"***\" p < .001.\n");
    s
}

/// Builds every report file. `preamble` is markdown placed at the top of
/// the summary (configuration and seeds).
pub fn emit_report(inputs: &ReportInputs, preamble: &str) -> Result<Bundle> {
    let (rows, ex) = indicator_rows(inputs)?;
    let report = correlate_indicators(&rows)?;
    let best = best_by_degree(&inputs.labels, &inputs.base_mape, &inputs.records);
    let mut files = BTreeMap::new();
    files.insert("indicator_rows.csv".to_string(), indicator_csv(&rows));
    files.insert("correlations.csv".to_string(), correlations_csv(&report));
    files.insert("ttest.csv".to_string(), ttest_csv(&report));
    files.insert(
        "first_degree_mape.csv".to_string(),
        first_degree_csv(&inputs.labels, &inputs.records, |r| r.mape_transferred),
    );
    files.insert(
        "first_degree_delta_m.csv".to_string(),
        first_degree_csv(&inputs.labels, &inputs.records, |r| r.delta_m),
    );
    files.insert("best_by_degree.csv".to_string(), best_csv(&best));
    for method in METHODS {
        let sets: Vec<&SampleSet> = inputs
            .projections
            .iter()
            .filter(|s| s.representation == method && s.points.cols() == 2)
            .collect();
        for (i, a) in sets.iter().enumerate() {
            for b in &sets[i + 1..] {
                let name = format!("kde_overlay/{}_{}_{}.csv", method.label(), a.source_label, b.source_label);
                files.insert(name, kde_overlay(a, b, inputs.kde_grid, &inputs.records)?);
            }
        }
    }
    files.insert("summary.md".to_string(), summary(inputs, preamble, &report, &ex, &best));
    Ok(Bundle { files })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::tensor::Matrix;

    fn labels(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("B{i}")).collect()
    }

    fn rec(path: &str, base: f64, tr: f64) -> TransferRecord {
        TransferRecord::succeeded(path.parse().unwrap(), base, tr, 1.0).unwrap()
    }

    fn inputs(n: usize, records: Vec<TransferRecord>) -> ReportInputs {
        let labels = labels(n);
        let matrices = Representation::ALL
            .iter()
            .enumerate()
            .map(|(k, rep)| {
                DivergenceMatrix::compute(*rep, &labels, |i, j| Ok((i + j + k) as f64 + 0.5 * (i * j) as f64)).unwrap()
            })
            .collect();
        let mut svcca = BTreeMap::new();
        for a in &labels {
            for b in &labels {
                if a != b {
                    svcca.insert((a.clone(), b.clone()), Some(0.5 + 0.01 * a.len() as f64));
                }
            }
        }
        let mut rng = RngStream::derive(3, "report-test");
        let projections = labels
            .iter()
            .map(|l| {
                let m = Matrix::from_vec(20, 2, (0..40).map(|_| rng.normal(0.0, 1.0)).collect()).unwrap();
                SampleSet::new(m, l.clone(), Representation::Mds).unwrap()
            })
            .collect();
        ReportInputs {
            base_mape: labels.iter().enumerate().map(|(i, l)| (l.clone(), Some(10.0 + i as f64))).collect(),
            labels,
            records,
            matrices,
            svcca,
            projections,
            kde_grid: 8,
        }
    }

    #[test]
    fn two_branch_first_degree_layout() {
        let inp = inputs(2, vec![rec("B1+B2", 11.0, 10.0), rec("B2+B1", 10.0, 10.5)]);
        let csv = first_degree_csv(&inp.labels, &inp.records, |r| r.mape_transferred);
        assert_eq!(csv, "source;B1;B2\nB1;;10\nB2;10.5;\n");
    }

    #[test]
    fn best_matches_exhaustive_minimum() {
        let mut rng = RngStream::derive(1, "best");
        let labs = labels(4);
        let paths = crate::transfer::enumerate_paths(&labs, 3).unwrap();
        let records: Vec<TransferRecord> = paths
            .iter()
            .map(|p| {
                let m = (rng.uniform() * 8.0).round() + 5.0;
                rec(&p.to_string(), 10.0, m)
            })
            .collect();
        let inp = inputs(4, records.clone());
        let best = best_by_degree(&inp.labels, &inp.base_mape, &records);
        assert_eq!(best.len(), 4 * 4);
        for e in best.iter().filter(|e| e.degree > 0) {
            let cands: Vec<&TransferRecord> = records
                .iter()
                .filter(|r| r.target() == e.target && r.degree() == e.degree)
                .collect();
            let min = cands.iter().map(|r| r.mape_transferred.unwrap()).fold(f64::INFINITY, f64::min);
            assert_eq!(e.mape, min);
            let first = cands.iter().find(|r| r.mape_transferred.unwrap() == min).unwrap();
            assert_eq!(e.path, first.path);
        }
    }

    #[test]
    fn bundle_is_deterministic_and_complete() {
        let labs = labels(3);
        let records: Vec<TransferRecord> = crate::transfer::enumerate_paths(&labs, 2)
            .unwrap()
            .into_iter()
            .enumerate()
            .map(|(i, p)| rec(&p.to_string(), 10.0, 9.0 + (i % 5) as f64 * 0.3))
            .collect();
        let inp = inputs(3, records);
        let a = emit_report(&inp, "preamble\n").unwrap();
        let b = emit_report(&inp, "preamble\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.files["correlations.csv"].lines().count(), 6);
        assert!(a.files.contains_key("kde_overlay/mds_B1_B3.csv"));
        let overlay = &a.files["kde_overlay/mds_B1_B2.csv"];
        assert!(overlay.starts_with("pair;B1;B2\ndelta_m;B1+B2;"));
        assert_eq!(overlay.lines().count(), 3 + 1 + 2 * (1 + 8));
        assert!(a.files["summary.md"].contains("| B1 | - |"));
    }

    #[test]
    fn join_errors_name_orphans() {
        let mut inp = inputs(2, vec![rec("B1+B2", 11.0, 10.0)]);
        inp.svcca.clear();
        let err = indicator_rows(&inp).unwrap_err().to_string();
        assert!(err.contains("svcca: no pair B1;B2"), "{err}");
        let mut inp = inputs(2, vec![rec("B1+B7", 11.0, 10.0)]);
        inp.labels.push("B9".into());
        let err = check_join(&inp).unwrap_err().to_string();
        assert!(err.contains("branch B7") && err.contains("missing B9"), "{err}");
    }

    #[test]
    fn exclusions_are_counted() {
        let mut recs = vec![rec("B1+B2", 11.0, 10.0), rec("B2+B1", 10.0, 10.5)];
        recs.push(TransferRecord::failed("B1+B2+B3".parse().unwrap(), None, "boom"));
        let mut inp = inputs(3, recs);
        inp.svcca.insert(("B2".into(), "B1".into()), None);
        let (rows, ex) = indicator_rows(&inp).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(ex, Exclusions { failed: 1, svcca_undefined: 1 });
        assert_eq!(rows[0].d_raw, inp.matrices[0].get("B1", "B2").unwrap());
    }
}
