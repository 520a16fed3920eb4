//! File-backed pipeline stages: `generate`, `sweep`, `indicators`,
//! `report`, and `all` in sequence.
//!
//! Everything lives under the configured output directory:
//!
//! ```text
//! data/        B1.csv …, roster.csv
//! sweep/       sweep.csv, bases.csv, manifest.kv
//! models/      B1.ckpt, B1+B2.ckpt … (paths up to checkpoint_degree)
//! indicators/  divergence_{raw,tsne,pca,mds}.csv, svcca.csv,
//!              svcca_layers.csv, projections.csv, kde/<method>_<B>.csv
//! report/      see `report::emit_report`
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::Datelike;
use log::{info, warn};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{DataSource, RunConfig, Split};
use crate::data::{clean, generate_synthetic, load_csv, parse_csv, prepare_dataset, write_csv, BranchSeries, Dataset, SampleWindow};
use crate::divergence::{energy_distance, feature_matrix, raw_pair, DivergenceMatrix, Representation, SampleSet};
use crate::error::{Error, Result};
use crate::forecaster::{checkpoint, ForecastModel, ModelConfig};
use crate::kv::KvFile;
use crate::netsim::{svcca_rows, svcca_score_layers, SVCCA_HEADER};
use crate::projections::{kde2d, project_branches, projection_csv, METHODS};
use crate::report::{emit_report, shared_grid, Bundle, ReportInputs};
use crate::rng::derive_seed;
use crate::tensor::Matrix;
use crate::transfer::{
    base_model_seed, enumerate_paths, parse_records, path_seed, render_records, sweep, ModelStore, SweepConfig,
    SweepHooks, TransferPath, TransferRecord,
};

pub const SVCCA_PAIR_HEADER: &str = "source;target;rho;status";
const BASES_HEADER: &str = "branch;mape;rmse;n_predictions;status";

/// Paths of every stage output under one root.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn branch_csv(&self, label: &str) -> PathBuf {
        self.data_dir().join(format!("{label}.csv"))
    }

    pub fn sweep_dir(&self) -> PathBuf {
        self.root.join("sweep")
    }

    pub fn sweep_csv(&self) -> PathBuf {
        self.sweep_dir().join("sweep.csv")
    }

    pub fn bases_csv(&self) -> PathBuf {
        self.sweep_dir().join("bases.csv")
    }

    pub fn manifest(&self) -> PathBuf {
        self.sweep_dir().join("manifest.kv")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn checkpoint(&self, path: &TransferPath) -> PathBuf {
        self.models_dir().join(format!("{path}.ckpt"))
    }

    pub fn indicators_dir(&self) -> PathBuf {
        self.root.join("indicators")
    }

    pub fn divergence_csv(&self, rep: Representation) -> PathBuf {
        self.indicators_dir().join(format!("divergence_{}.csv", rep.label()))
    }

    pub fn svcca_csv(&self) -> PathBuf {
        self.indicators_dir().join("svcca.csv")
    }

    pub fn projections_csv(&self) -> PathBuf {
        self.indicators_dir().join("projections.csv")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes through a temporary sibling and a rename, so readers never see
/// half a file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        mkdir(dir)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read_required(path: &Path, command: &'static str) -> Result<String> {
    if !path.exists() {
        return Err(Error::Prerequisite {
            path: path.to_path_buf(),
            command,
        });
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn remove_dir(dir: &Path) -> Result<()> {
    match fs::remove_dir_all(dir) {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(dir, e)),
        _ => Ok(()),
    }
}

fn thread_pool(n: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))
}

// ---------------------------------------------------------------- data

/// Branch series as the later stages see them. Synthetic data is read back
/// from the files written by `generate`.
pub fn load_series(cfg: &RunConfig) -> Result<Vec<BranchSeries>> {
    let layout = Layout::new(&cfg.output_dir);
    match &cfg.data.source {
        DataSource::Synthetic { config, .. } => (0..config.n_branches)
            .map(|i| {
                let label = crate::data::SynthConfig::branch_label(i);
                let path = layout.branch_csv(&label);
                let text = read_required(&path, "generate")?;
                Ok(parse_csv(&text, &label)?.with_closed_weekdays(config.closed_days[i].clone()))
            })
            .collect(),
        DataSource::Csv(branches) => branches
            .iter()
            .map(|b| Ok(load_csv(&b.path, &b.label)?.with_closed_weekdays(b.closed_days.clone())))
            .collect(),
    }
}

pub fn load_datasets(cfg: &RunConfig) -> Result<Vec<Dataset>> {
    load_series(cfg)?
        .iter()
        .map(|s| {
            let (_, dropped) = clean(s);
            if dropped > 0 {
                warn!("{}: dropped {dropped} negative revenues", s.branch_id);
            }
            prepare_dataset(s, cfg.data.period, cfg.data.test_year)
        })
        .collect()
}

/// One line of the branch roster.
#[derive(Debug, Clone, PartialEq)]
pub struct RosterRow {
    pub branch: String,
    pub first: chrono::NaiveDate,
    pub last: chrono::NaiveDate,
    pub open_days: usize,
    pub closed_weekdays: Vec<u32>,
    pub mean_revenue: f64,
    /// Weekday (0 = Monday) with the highest mean revenue.
    pub peak_weekday: u32,
}

const WEEKDAYS: [&str; 7] = ["Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"];

fn roster_row(s: &BranchSeries) -> Result<RosterRow> {
    let (Some(first), Some(last)) = (s.observations.first(), s.observations.last()) else {
        return Err(Error::Data(format!("branch {} has no observations", s.branch_id)));
    };
    let mut sum = [0.0; 7];
    let mut count = [0usize; 7];
    for o in &s.observations {
        let wd = o.date.weekday().num_days_from_monday() as usize;
        sum[wd] += o.revenue;
        count[wd] += 1;
    }
    let mut peak = 0;
    let mean = |d: usize| if count[d] > 0 { sum[d] / count[d] as f64 } else { f64::NEG_INFINITY };
    for d in 1..7 {
        if mean(d) > mean(peak) {
            peak = d;
        }
    }
    Ok(RosterRow {
        branch: s.branch_id.clone(),
        first: first.date,
        last: last.date,
        open_days: s.len(),
        closed_weekdays: s.closed_weekdays.clone(),
        mean_revenue: sum.iter().sum::<f64>() / s.len() as f64,
        peak_weekday: peak as u32,
    })
}

fn closed_names(days: &[u32]) -> String {
    days.iter().map(|d| WEEKDAYS[*d as usize]).collect::<Vec<_>>().join(",")
}

pub fn roster_csv(rows: &[RosterRow]) -> String {
    let mut s = String::from("branch;first_date;last_date;open_days;closed_weekdays;mean_revenue;peak_weekday\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{};{};{};{};{};{};{}",
            r.branch,
            r.first,
            r.last,
            r.open_days,
            closed_names(&r.closed_weekdays),
            r.mean_revenue,
            WEEKDAYS[r.peak_weekday as usize]
        );
    }
    s
}

/// Fixed-width roster for the terminal.
pub fn roster_table(rows: &[RosterRow]) -> String {
    let mut s = format!(
        "{:<8} {:<10} {:<10} {:>6} {:<8} {:>12} {:<4}\n",
        "branch", "first", "last", "days", "closed", "mean", "peak"
    );
    for r in rows {
        let closed = closed_names(&r.closed_weekdays);
        let _ = writeln!(
            s,
            "{:<8} {:<10} {:<10} {:>6} {:<8} {:>12.2} {:<4}",
            r.branch,
            r.first,
            r.last,
            r.open_days,
            if closed.is_empty() { "-" } else { &closed },
            r.mean_revenue,
            WEEKDAYS[r.peak_weekday as usize]
        );
    }
    s
}

/// Writes one CSV per synthetic branch plus `data/roster.csv`.
pub fn cmd_generate(cfg: &RunConfig) -> Result<Vec<RosterRow>> {
    let DataSource::Synthetic { config, .. } = &cfg.data.source else {
        return Err(Error::Config("generate needs data.mode=synthetic".into()));
    };
    let layout = Layout::new(&cfg.output_dir);
    mkdir(&layout.data_dir())?;
    let series = generate_synthetic(config, cfg.data.start, cfg.data.end)?;
    let mut rows = Vec::new();
    for s in &series {
        write_csv(s, layout.branch_csv(&s.branch_id))?;
        rows.push(roster_row(s)?);
    }
    write_atomic(&layout.data_dir().join("roster.csv"), roster_csv(&rows).as_bytes())?;
    info!("generated {} branches in {}", series.len(), layout.data_dir().display());
    Ok(rows)
}

// ---------------------------------------------------------------- sweep

/// Checkpoints of paths up to `max_degree` as files under `models/`.
pub struct FileStore {
    layout: Layout,
    max_degree: usize,
    model: ModelConfig,
}

impl FileStore {
    pub fn new(layout: Layout, max_degree: usize, model: ModelConfig) -> Self {
        FileStore { layout, max_degree, model }
    }
}

fn same_architecture(a: &ModelConfig, b: &ModelConfig) -> bool {
    ModelConfig { seed: 0, ..a.clone() } == ModelConfig { seed: 0, ..b.clone() }
}

impl ModelStore for FileStore {
    fn load(&self, path: &TransferPath) -> Result<Option<ForecastModel>> {
        let file = self.layout.checkpoint(path);
        if path.branches().len() > self.max_degree + 1 || !file.exists() {
            return Ok(None);
        }
        let m = checkpoint::load(&file)?;
        if m.provenance != path.branches() || !same_architecture(&m.config, &self.model) {
            return Err(Error::Data(format!(
                "checkpoint {} does not belong to this run",
                file.display()
            )));
        }
        Ok(Some(m))
    }

    fn save(&self, path: &TransferPath, model: &ForecastModel) -> Result<()> {
        if path.branches().len() > self.max_degree + 1 {
            return Ok(());
        }
        checkpoint::save(model, self.layout.checkpoint(path))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// What a sweep depends on: seeds, model, data windows and file digests.
fn sweep_manifest(cfg: &RunConfig) -> Result<KvFile> {
    let mut kv = KvFile::default();
    kv.set("global_seed", cfg.global_seed);
    kv.set("data.start", cfg.data.start);
    kv.set("data.end", cfg.data.end);
    kv.set("data.test_year", cfg.data.test_year);
    kv.set("data.period", cfg.data.period);
    let m = cfg.model.to_kv();
    for k in m.keys() {
        kv.set(&format!("model.{k}"), m.get_str(k).unwrap_or_default());
    }
    let layout = Layout::new(&cfg.output_dir);
    let files: Vec<(String, PathBuf)> = match &cfg.data.source {
        DataSource::Synthetic { .. } => cfg.branch_labels().into_iter().map(|l| (l.clone(), layout.branch_csv(&l))).collect(),
        DataSource::Csv(b) => b.iter().map(|b| (b.label.clone(), b.path.clone())).collect(),
    };
    for (label, path) in files {
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        kv.set(&format!("data.sha256.{label}"), sha256_hex(&bytes));
    }
    Ok(kv)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub records: usize,
    pub ok: usize,
    pub failed: usize,
    /// Records taken over from an interrupted run.
    pub resumed: usize,
}

fn bases_csv(out: &crate::transfer::SweepOutput, labels: &[String]) -> String {
    let mut s = format!("{BASES_HEADER}\n");
    for l in labels {
        match (out.bases.get(l), out.base_failures.get(l)) {
            (Some(b), _) => match &b.eval {
                Ok(ev) => {
                    let _ = writeln!(s, "{l};{};{};{};ok", ev.mape, ev.rmse, ev.n_predictions);
                }
                Err(e) => {
                    let _ = writeln!(s, "{l};;;;failed: {}", e.replace([';', '\n'], " "));
                }
            },
            (None, Some(e)) => {
                let _ = writeln!(s, "{l};;;;failed: {}", e.replace([';', '\n'], " "));
            }
            (None, None) => {
                let _ = writeln!(s, "{l};;;;failed: missing");
            }
        }
    }
    s
}

fn parse_bases(text: &str) -> Result<BTreeMap<String, Option<f64>>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(';').collect();
        if f.len() != 5 {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected 5 fields in bases file".into(),
            });
        }
        let mape = if f[1].is_empty() {
            None
        } else {
            Some(f[1].parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("bad MAPE {:?}", f[1]),
            })?)
        };
        out.insert(f[0].to_string(), mape);
    }
    Ok(out)
}

/// Trains base models and every transfer path, appending each record to
/// `sweep/sweep.csv` as it completes. With `resume`, records and
/// checkpoints of an interrupted run with the same inputs are reused.
pub fn cmd_sweep(cfg: &RunConfig, resume: bool) -> Result<SweepSummary> {
    let layout = Layout::new(&cfg.output_dir);
    let datasets = load_datasets(cfg)?;
    let manifest = sweep_manifest(cfg)?.render();
    let labels = cfg.branch_labels();
    let max_degree = cfg.max_degree();
    let expected = enumerate_paths(&labels, max_degree)?;

    let mut completed = BTreeMap::new();
    let mut reuse = false;
    if resume {
        match fs::read_to_string(layout.manifest()) {
            Ok(old) if old != manifest => {
                return Err(Error::Config(
                    "cannot resume: seeds, model or data changed since the interrupted sweep; rerun without --resume".into(),
                ))
            }
            Ok(_) => {
                reuse = true;
                if let Ok(text) = fs::read_to_string(layout.sweep_csv()) {
                    for r in parse_records(&text, true)? {
                        if expected.binary_search(&r.path).is_ok() {
                            completed.insert(r.path.clone(), r);
                        }
                    }
                }
            }
            Err(_) => warn!("nothing to resume in {}; starting afresh", layout.sweep_dir().display()),
        }
    }
    if !reuse {
        remove_dir(&layout.models_dir())?;
    }
    mkdir(&layout.sweep_dir())?;
    mkdir(&layout.models_dir())?;
    write_atomic(&layout.manifest(), manifest.as_bytes())?;
    let done: Vec<TransferRecord> = completed.values().cloned().collect();
    write_atomic(&layout.sweep_csv(), render_records(&done).as_bytes())?;
    let resumed = done.len();
    if resumed > 0 {
        info!("resuming with {resumed} of {} records done", expected.len());
    }

    let sink_path = layout.sweep_csv();
    let file = fs::OpenOptions::new()
        .append(true)
        .open(&sink_path)
        .map_err(|e| Error::io(&sink_path, e))?;
    let file = Mutex::new(file);
    let sink = |r: &TransferRecord| -> Result<()> {
        let text = render_records(std::slice::from_ref(r));
        let line = text.split_once('\n').map(|(_, l)| l).unwrap_or_default();
        let mut f = file.lock().expect("sweep file lock");
        f.write_all(line.as_bytes()).map_err(|e| Error::io(&sink_path, e))
    };
    let store = FileStore::new(layout.clone(), cfg.transfer.checkpoint_degree, cfg.model.clone());
    let hooks = SweepHooks {
        store: &store,
        completed,
        on_record: Some(&sink),
    };
    let sweep_cfg = SweepConfig {
        max_degree,
        parallelism: cfg.transfer.parallelism,
        global_seed: cfg.global_seed,
    };
    let out = sweep(&datasets, &cfg.model, &sweep_cfg, &hooks)?;
    drop(hooks);
    drop(file);
    write_atomic(&layout.sweep_csv(), render_records(&out.records).as_bytes())?;
    write_atomic(&layout.bases_csv(), bases_csv(&out, &labels).as_bytes())?;
    let ok = out.records.iter().filter(|r| r.is_ok()).count();
    info!("sweep: {} records, {ok} ok", out.records.len());
    Ok(SweepSummary {
        records: out.records.len(),
        ok,
        failed: out.records.len() - ok,
        resumed,
    })
}

// ---------------------------------------------------------------- indicators

fn split_windows(ds: &Dataset, split: Split) -> Vec<SampleWindow> {
    match split {
        Split::Train => ds.train.clone(),
        Split::Test => ds.test.clone(),
        Split::All => ds.train.iter().chain(&ds.test).cloned().collect(),
    }
}

/// SVCCA of one ordered pair, or why it is undefined.
#[derive(Debug, Clone)]
pub struct PairScore {
    pub source: String,
    pub target: String,
    pub rho: std::result::Result<f64, String>,
    pub layers: String,
}

#[derive(Debug, Clone)]
pub struct IndicatorSummary {
    pub matrices: Vec<DivergenceMatrix>,
    pub svcca: Vec<PairScore>,
}

fn pair_matrix(
    rep: Representation,
    labels: &[String],
    f: impl Fn(usize, usize) -> Result<f64> + Sync,
) -> Result<DivergenceMatrix> {
    let n = labels.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
    let values: BTreeMap<(usize, usize), f64> = pairs
        .par_iter()
        .map(|&(i, j)| f(i, j).map(|v| ((i, j), v)))
        .collect::<Result<_>>()?;
    DivergenceMatrix::compute(rep, labels, |i, j| Ok(values[&(i, j)]))
}

fn load_model(layout: &Layout, path: &TransferPath) -> Result<ForecastModel> {
    let file = layout.checkpoint(path);
    if !file.exists() {
        return Err(Error::Prerequisite { path: file, command: "sweep" });
    }
    checkpoint::load(&file)
}

fn svcca_pairs(cfg: &RunConfig, datasets: &[Dataset], records: &[TransferRecord]) -> Result<Vec<PairScore>> {
    let layout = Layout::new(&cfg.output_dir);
    let bases: BTreeMap<&str, ForecastModel> = datasets
        .iter()
        .map(|d| Ok((d.branch_id.as_str(), load_model(&layout, &TransferPath::base(&d.branch_id))?)))
        .collect::<Result<_>>()?;
    let status: BTreeMap<&TransferPath, &TransferRecord> = records.iter().map(|r| (&r.path, r)).collect();
    let mut pairs = Vec::new();
    for s in datasets {
        for t in datasets {
            if s.branch_id != t.branch_id {
                pairs.push((s, t));
            }
        }
    }
    pairs
        .par_iter()
        .map(|(s, t)| {
            let path = TransferPath::new(vec![s.branch_id.clone(), t.branch_id.clone()])?;
            let mut score = PairScore {
                source: s.branch_id.clone(),
                target: t.branch_id.clone(),
                rho: Err(String::new()),
                layers: String::new(),
            };
            if let Some(r) = status.get(&path).filter(|r| !r.is_ok()) {
                if !layout.checkpoint(&path).exists() {
                    score.rho = Err(format!("transfer {path} {}", r.status));
                    return Ok(score);
                }
            }
            let transferred = load_model(&layout, &path)?;
            let probe = t.normalized_test();
            match svcca_score_layers(
                &bases[t.branch_id.as_str()],
                &transferred,
                &probe,
                cfg.svcca.threshold,
                cfg.svcca.layers.as_deref(),
            ) {
                Ok(r) => {
                    score.layers = svcca_rows(&score.source, &score.target, &r);
                    score.rho = Ok(r.rho);
                }
                Err(e @ (Error::Config(_) | Error::Io { .. })) => return Err(e),
                Err(e) => {
                    warn!("SVCCA {path}: {e}");
                    score.rho = Err(e.to_string());
                }
            }
            Ok(score)
        })
        .collect()
}

fn svcca_csv(scores: &[PairScore]) -> String {
    let mut s = format!("{SVCCA_PAIR_HEADER}\n");
    for p in scores {
        match &p.rho {
            Ok(r) => {
                let _ = writeln!(s, "{};{};{r};ok", p.source, p.target);
            }
            Err(e) => {
                let _ = writeln!(s, "{};{};;failed: {}", p.source, p.target, e.replace([';', '\n'], " "));
            }
        }
    }
    s
}

fn parse_svcca(text: &str) -> Result<BTreeMap<(String, String), Option<f64>>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.splitn(4, ';').collect();
        if f.len() != 4 {
            return Err(Error::Parse {
                line: i + 1,
                message: "expected 4 fields in svcca file".into(),
            });
        }
        let rho = if f[2].is_empty() {
            None
        } else {
            Some(f[2].parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("bad rho {:?}", f[2]),
            })?)
        };
        out.insert((f[0].to_string(), f[1].to_string()), rho);
    }
    Ok(out)
}

fn parse_projections(text: &str) -> Result<Vec<SampleSet>> {
    let mut groups: Vec<((String, Representation), Vec<Vec<f64>>)> = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(';').collect();
        let bad = |m: String| Error::Parse { line: i + 1, message: m };
        if f.len() < 3 {
            return Err(bad("short projection row".into()));
        }
        let rep: Representation = f[1].parse().map_err(|_| bad(format!("bad method {:?}", f[1])))?;
        let coords = f[2..]
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad coordinate {v:?}"))))
            .collect::<Result<Vec<_>>>()?;
        let key = (f[0].to_string(), rep);
        match groups.last_mut() {
            Some((k, rows)) if *k == key => rows.push(coords),
            _ => groups.push((key, vec![coords])),
        }
    }
    groups
        .into_iter()
        .map(|((label, rep), rows)| SampleSet::new(Matrix::from_rows(&rows)?, label, rep))
        .collect()
}

/// Divergence matrices for raw data and the three projections, per-pair
/// SVCCA, projected coordinates, and one KDE grid per branch and method.
pub fn cmd_indicators(cfg: &RunConfig) -> Result<IndicatorSummary> {
    let layout = Layout::new(&cfg.output_dir);
    let records = parse_records(&read_required(&layout.sweep_csv(), "sweep")?, false)?;
    // Fail before the slow projections if the sweep left no base models.
    for label in cfg.branch_labels() {
        let file = layout.checkpoint(&TransferPath::base(&label));
        if !file.exists() {
            return Err(Error::Prerequisite { path: file, command: "sweep" });
        }
    }
    let datasets = load_datasets(cfg)?;
    let labels: Vec<String> = datasets.iter().map(|d| d.branch_id.clone()).collect();
    let windows: Vec<Vec<SampleWindow>> = datasets.iter().map(|d| split_windows(d, cfg.divergence_split)).collect();
    let features: Vec<(String, Matrix)> = labels
        .iter()
        .zip(&windows)
        .map(|(l, w)| Ok((l.clone(), feature_matrix(w)?)))
        .collect::<Result<_>>()?;
    let pcfg = cfg.projection_config();
    let pool = thread_pool(cfg.transfer.parallelism)?;
    let (matrices, projected, svcca) = pool.install(|| -> Result<_> {
        let raw = pair_matrix(Representation::Raw, &labels, |i, j| {
            let (a, b) = raw_pair(&labels[i], &windows[i], &labels[j], &windows[j])?;
            Ok(energy_distance(&a, &b)?.value)
        })?;
        info!("raw divergences done");
        let projected: Vec<Vec<SampleSet>> = METHODS
            .par_iter()
            .map(|m| project_branches(&features, *m, &pcfg))
            .collect::<Result<_>>()?;
        let mut matrices = vec![raw];
        for (m, sets) in METHODS.iter().zip(&projected) {
            matrices.push(pair_matrix(*m, &labels, |i, j| Ok(energy_distance(&sets[i], &sets[j])?.value))?);
        }
        info!("projections done");
        let svcca = svcca_pairs(cfg, &datasets, &records)?;
        info!("SVCCA done");
        Ok((matrices, projected, svcca))
    })?;

    let dir = layout.indicators_dir();
    remove_dir(&dir)?;
    mkdir(&dir)?;
    for m in &matrices {
        write_atomic(&layout.divergence_csv(m.representation), m.to_csv().as_bytes())?;
    }
    let all_sets: Vec<SampleSet> = projected.iter().flatten().cloned().collect();
    write_atomic(&layout.projections_csv(), projection_csv(&all_sets).as_bytes())?;
    if cfg.projections.out_dim == 2 {
        for set in &all_sets {
            let spec = shared_grid(&[&set.points], cfg.projections.kde_grid)?;
            let grid = kde2d(&set.points, spec)?;
            let name = format!("kde/{}_{}.csv", set.representation.label(), set.source_label);
            write_atomic(&dir.join(name), grid.to_csv().as_bytes())?;
        }
    } else {
        warn!("KDE grids need out_dim = 2; skipped");
    }
    write_atomic(&layout.svcca_csv(), svcca_csv(&svcca).as_bytes())?;
    let mut layers = format!("{SVCCA_HEADER}\n");
    for p in &svcca {
        layers.push_str(&p.layers);
    }
    write_atomic(&dir.join("svcca_layers.csv"), layers.as_bytes())?;
    Ok(IndicatorSummary { matrices, svcca })
}

// ---------------------------------------------------------------- report

fn preamble(cfg: &RunConfig) -> String {
    let mut s = String::from("## Configuration\n\n```\n");
    s.push_str(&cfg.to_kv().render());
    s.push_str("```\n\n## Seeds\n\nEvery stochastic site draws from a stream derived from the global seed and a label.\n\n");
    let _ = writeln!(s, "- global seed: {}", cfg.global_seed);
    if let DataSource::Synthetic { config, .. } = &cfg.data.source {
        let _ = writeln!(s, "- synthetic data: {}", config.seed);
    }
    for l in cfg.branch_labels() {
        let base = TransferPath::base(&l);
        let _ = writeln!(
            s,
            "- {l}: init {}, base shuffle {}",
            base_model_seed(cfg.global_seed, &l),
            path_seed(cfg.global_seed, &base)
        );
    }
    let _ = writeln!(s, "- transfer path P: shuffle seed derived from label `path/P`");
    let p = cfg.projection_config();
    let _ = writeln!(s, "- projections: {}", p.seed);
    let tsne_labels: Vec<String> = if p.joint { vec!["joint".into()] } else { cfg.branch_labels() };
    for l in tsne_labels {
        let _ = writeln!(s, "- t-SNE {l}: {}", derive_seed(p.seed, &format!("tsne/{l}")));
    }
    s.push_str("\n## Method notes\n\n");
    let _ = writeln!(
        s,
        "- Divergences use the {} split; raw features are standardized over each compared pair, projection inputs over all branches.",
        cfg.divergence_split
    );
    let _ = writeln!(
        s,
        "- Projections are fit {}.",
        if p.joint { "jointly on all branches" } else { "per branch" }
    );
    let _ = writeln!(
        s,
        "- Each record is scored against its immediate source: the branch trained on just before the target."
    );
    let _ = writeln!(
        s,
        "- SVCCA compares the target's base model with the first-degree transfer from that source, probed on the target's test windows; rho averages {}.",
        match &cfg.svcca.layers {
            Some(l) => l.join(", "),
            None => "the pooled head outputs, concat, dense1, dense2 and output".into(),
        }
    );
    s
}

/// Joins sweep records with the indicators and writes the report bundle.
pub fn cmd_report(cfg: &RunConfig) -> Result<Bundle> {
    let layout = Layout::new(&cfg.output_dir);
    let records = parse_records(&read_required(&layout.sweep_csv(), "sweep")?, false)?;
    let base_mape = parse_bases(&read_required(&layout.bases_csv(), "sweep")?)?;
    let matrices = Representation::ALL
        .iter()
        .map(|rep| DivergenceMatrix::from_csv(&read_required(&layout.divergence_csv(*rep), "indicators")?, *rep))
        .collect::<Result<Vec<_>>>()?;
    let svcca = parse_svcca(&read_required(&layout.svcca_csv(), "indicators")?)?;
    let projections = parse_projections(&read_required(&layout.projections_csv(), "indicators")?)?;
    let inputs = ReportInputs {
        labels: cfg.branch_labels(),
        base_mape,
        records,
        matrices,
        svcca,
        projections,
        kde_grid: cfg.projections.kde_grid,
    };
    let bundle = emit_report(&inputs, &preamble(cfg))?;
    let dir = layout.report_dir();
    remove_dir(&dir)?;
    for (name, text) in &bundle.files {
        write_atomic(&dir.join(name), text.as_bytes())?;
    }
    info!("report: {} files in {}", bundle.files.len(), dir.display());
    Ok(bundle)
}

/// `generate` (synthetic mode only), `sweep`, `indicators`, `report`.
pub fn cmd_all(cfg: &RunConfig, resume: bool) -> Result<Bundle> {
    if matches!(cfg.data.source, DataSource::Synthetic { .. }) {
        cmd_generate(cfg)?;
    }
    cmd_sweep(cfg, resume)?;
    cmd_indicators(cfg)?;
    cmd_report(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SynthConfig;

    fn quick(n: usize, dir: &Path) -> RunConfig {
        let synth = if n == 6 {
            SynthConfig::six_branch(0)
        } else {
            SynthConfig::four_branch(0)
        };
        let mut cfg = RunConfig::synthetic(synth, 11);
        cfg.output_dir = dir.to_path_buf();
        cfg.data.start = chrono::NaiveDate::from_ymd_opt(2016, 1, 1).unwrap();
        cfg.model.conv_filters = 4;
        cfg.model.dense1 = 16;
        cfg.model.dense2 = 8;
        cfg.model.base_epochs = 2;
        cfg.model.retrain_epochs = 2;
        cfg.projections.tsne.perplexity = 10.0;
        cfg.projections.tsne.iterations = 120;
        cfg.projections.tsne.exaggeration_iters = 40;
        cfg.transfer.max_degree = Some(1);
        cfg
    }

    fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
        let mut out = BTreeMap::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(dir) = stack.pop() {
            for e in fs::read_dir(&dir).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    out.insert(p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap());
                }
            }
        }
        out
    }

    #[test]
    fn generate_writes_one_file_per_branch() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = quick(6, tmp.path());
        let rows = cmd_generate(&cfg).unwrap();
        assert_eq!(rows.len(), 6);
        let first = tree(&tmp.path().join("data"));
        assert_eq!(first.len(), 7);
        cmd_generate(&cfg).unwrap();
        assert_eq!(tree(&tmp.path().join("data")), first);
        assert!(roster_table(&rows).contains("B6"));

        let mut none = cfg.clone();
        if let DataSource::Synthetic { config, .. } = &mut none.data.source {
            config.n_branches = 0;
        }
        assert_eq!(cmd_generate(&none).map(|_| ()).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn stages_need_their_inputs() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = quick(4, tmp.path());
        match cmd_sweep(&cfg, false) {
            Err(Error::Prerequisite { command, .. }) => assert_eq!(command, "generate"),
            other => panic!("{other:?}"),
        }
        match cmd_report(&cfg) {
            Err(e @ Error::Prerequisite { command: "sweep", .. }) => assert_eq!(e.exit_code(), 3),
            other => panic!("{:?}", other.map(|_| ())),
        }
        cmd_generate(&cfg).unwrap();
        cmd_sweep(&cfg, false).unwrap();
        fs::remove_dir_all(tmp.path().join("models")).unwrap();
        let err = cmd_indicators(&cfg).unwrap_err();
        assert!(err.to_string().contains("sweep"), "{err}");
    }

    #[test]
    fn six_branch_run_and_resume() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg = quick(6, tmp.path());
        let bundle = cmd_all(&cfg, false).unwrap();
        let layout = Layout::new(tmp.path());
        let sweep = fs::read_to_string(layout.sweep_csv()).unwrap();
        let records = parse_records(&sweep, false).unwrap();
        assert_eq!(records.len(), 30);

        for rep in Representation::ALL {
            let m = DivergenceMatrix::from_csv(&fs::read_to_string(layout.divergence_csv(rep)).unwrap(), rep).unwrap();
            assert_eq!(m.labels.len(), 6);
            for l in &m.labels {
                assert_eq!(m.get(l, l), Some(0.0));
            }
        }
        let svcca = fs::read_to_string(layout.svcca_csv()).unwrap();
        assert_eq!(svcca.lines().count(), 1 + 30);
        let correlations = &bundle.files["correlations.csv"];
        assert_eq!(correlations.lines().count(), 1 + 5);

        let first = tree(tmp.path());
        cmd_all(&cfg, false).unwrap();
        assert_eq!(tree(tmp.path()), first);

        // An interrupted sweep: keep the header and ten records.
        let partial: String = sweep.lines().take(11).map(|l| format!("{l}\n")).collect();
        fs::write(layout.sweep_csv(), partial).unwrap();
        let s = cmd_sweep(&cfg, true).unwrap();
        assert_eq!((s.resumed, s.records), (10, 30));
        cmd_indicators(&cfg).unwrap();
        cmd_report(&cfg).unwrap();
        assert_eq!(tree(tmp.path()), first);

        let mut other = cfg.clone();
        other.set_seed(12);
        assert_eq!(cmd_sweep(&other, true).unwrap_err().exit_code(), 2);
    }
}
