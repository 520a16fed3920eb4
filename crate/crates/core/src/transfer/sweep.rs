use std::collections::BTreeMap;

use log::{debug, info, warn};
use rayon::prelude::*;

use super::{enumerate_paths, transfer_retrain, TransferPath, TransferRecord};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forecaster::{evaluate, train, EvalResult, ForecastModel, ModelConfig};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub max_degree: usize,
    /// Worker threads; results do not depend on it.
    pub parallelism: usize,
    pub global_seed: u64,
}

/// Initialization seed of a branch's base model.
pub fn base_model_seed(global_seed: u64, branch: &str) -> u64 {
    derive_seed(global_seed, &format!("init/{branch}"))
}

/// Shuffle seed for the last training step of `path`.
pub fn path_seed(global_seed: u64, path: &TransferPath) -> u64 {
    derive_seed(global_seed, &format!("path/{path}"))
}

/// Persistent model cache keyed by path, used for checkpointing and resume.
pub trait ModelStore: Sync {
    fn load(&self, path: &TransferPath) -> Result<Option<ForecastModel>>;
    fn save(&self, path: &TransferPath, model: &ForecastModel) -> Result<()>;
}

/// Keeps nothing.
pub struct NoStore;

impl ModelStore for NoStore {
    fn load(&self, _: &TransferPath) -> Result<Option<ForecastModel>> {
        Ok(None)
    }

    fn save(&self, _: &TransferPath, _: &ForecastModel) -> Result<()> {
        Ok(())
    }
}

type RecordSink<'a> = &'a (dyn Fn(&TransferRecord) -> Result<()> + Sync);

/// Checkpointing and resume hooks for [`sweep`].
pub struct SweepHooks<'a> {
    pub store: &'a dyn ModelStore,
    /// Records from an earlier, interrupted run; their paths are not
    /// re-evaluated, and subtrees made only of them are not retrained.
    pub completed: BTreeMap<TransferPath, TransferRecord>,
    /// Called once per newly produced record, from worker threads.
    pub on_record: Option<RecordSink<'a>>,
}

impl Default for SweepHooks<'_> {
    fn default() -> Self {
        SweepHooks {
            store: &NoStore,
            completed: BTreeMap::new(),
            on_record: None,
        }
    }
}

/// A branch's target-only model and its test accuracy.
#[derive(Debug, Clone)]
pub struct BaseModel {
    pub model: ForecastModel,
    /// Test accuracy, or why it is undefined.
    pub eval: std::result::Result<EvalResult, String>,
}

impl BaseModel {
    pub fn mape(&self) -> Option<f64> {
        self.eval.as_ref().ok().map(|e| e.mape)
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub bases: BTreeMap<String, BaseModel>,
    /// Branches whose base model could not be trained.
    pub base_failures: BTreeMap<String, String>,
    /// One record per enumerated path, sorted by path.
    pub records: Vec<TransferRecord>,
}

struct Ctx<'a> {
    datasets: BTreeMap<&'a str, &'a Dataset>,
    labels: Vec<String>,
    bases: &'a BTreeMap<String, BaseModel>,
    base_failures: &'a BTreeMap<String, String>,
    max_len: usize,
    seed: u64,
    hooks: &'a SweepHooks<'a>,
}

/// Trains one base model per branch, then every path up to the maximum
/// degree by chained retraining. Each trained prefix is reused by all
/// paths extending it.
pub fn sweep(
    datasets: &[Dataset],
    model_config: &ModelConfig,
    config: &SweepConfig,
    hooks: &SweepHooks<'_>,
) -> Result<SweepOutput> {
    let labels = check_datasets(datasets, config)?;
    let pool = thread_pool(config.parallelism)?;
    pool.install(|| {
        let (bases, base_failures) = train_bases(datasets, model_config, config.global_seed, hooks.store)?;
        let ctx = Ctx {
            datasets: datasets.iter().map(|d| (d.branch_id.as_str(), d)).collect(),
            labels: labels.clone(),
            bases: &bases,
            base_failures: &base_failures,
            max_len: config.max_degree + 1,
            seed: config.global_seed,
            hooks,
        };
        let roots: Vec<TransferPath> = enumerate_paths(&labels, 1)?;
        let chunks: Vec<Vec<TransferRecord>> = roots
            .par_iter()
            .map(|root| {
                let mut out = Vec::new();
                match bases.get(root.source()) {
                    Some(b) => visit(&ctx, root, &b.model, &mut out)?,
                    None => {
                        let reason = format!("base model for {} failed", root.source());
                        fail_subtree(&ctx, root, &reason, &mut out)?;
                    }
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let mut records: Vec<TransferRecord> = chunks.into_iter().flatten().collect();
        records.extend(hooks.completed.values().filter(|r| r.degree() <= config.max_degree).cloned());
        records.sort_by(|a, b| a.path.cmp(&b.path));
        records.dedup_by(|a, b| a.path == b.path);
        Ok(SweepOutput {
            bases,
            base_failures,
            records,
        })
    })
}

/// Same records as [`sweep`], but every path is retrained from its base
/// model without sharing prefixes. Slow; exists to check the cache.
pub fn sweep_uncached(datasets: &[Dataset], model_config: &ModelConfig, config: &SweepConfig) -> Result<SweepOutput> {
    let labels = check_datasets(datasets, config)?;
    let pool = thread_pool(config.parallelism)?;
    pool.install(|| {
        let (bases, base_failures) = train_bases(datasets, model_config, config.global_seed, &NoStore)?;
        let by_label: BTreeMap<&str, &Dataset> = datasets.iter().map(|d| (d.branch_id.as_str(), d)).collect();
        let paths = enumerate_paths(&labels, config.max_degree)?;
        let records = paths
            .par_iter()
            .map(|path| {
                let Some(base) = bases.get(path.source()) else {
                    return TransferRecord::failed(path.clone(), None, "source base model failed");
                };
                let mut model = base.model.clone();
                for k in 2..=path.branches().len() {
                    let prefix = TransferPath::new(path.branches()[..k].to_vec()).expect("sub-path is valid");
                    let ds = by_label[prefix.target()];
                    model = match transfer_retrain(&model, ds, path_seed(config.global_seed, &prefix)) {
                        Ok(m) => m,
                        Err(e) => return TransferRecord::failed(path.clone(), None, &e.to_string()),
                    };
                }
                score(path, &model, by_label[path.target()], &bases, &base_failures)
            })
            .collect();
        Ok(SweepOutput {
            bases,
            base_failures,
            records,
        })
    })
}

fn check_datasets(datasets: &[Dataset], config: &SweepConfig) -> Result<Vec<String>> {
    if datasets.len() < 2 {
        return Err(Error::Contract(format!("a sweep needs at least 2 branches, got {}", datasets.len())));
    }
    let labels: Vec<String> = datasets.iter().map(|d| d.branch_id.clone()).collect();
    let mut sorted = labels.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != labels.len() {
        return Err(Error::Data("duplicate branch labels".into()));
    }
    if config.parallelism == 0 {
        return Err(Error::Config("transfer.parallelism must be at least 1".into()));
    }
    if config.max_degree < 1 || config.max_degree >= labels.len() {
        return Err(Error::Contract(format!(
            "max_degree must lie in 1..={} for {} branches, got {}",
            labels.len() - 1,
            labels.len(),
            config.max_degree
        )));
    }
    Ok(labels)
}

fn thread_pool(n: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))
}

type Bases = (BTreeMap<String, BaseModel>, BTreeMap<String, String>);

fn train_bases(datasets: &[Dataset], model_config: &ModelConfig, seed: u64, store: &dyn ModelStore) -> Result<Bases> {
    let results: Vec<(String, Result<BaseModel>)> = datasets
        .par_iter()
        .map(|ds| {
            let path = TransferPath::base(&ds.branch_id);
            let res = (|| -> Result<BaseModel> {
                let model = match store.load(&path)? {
                    Some(m) => {
                        debug!("loaded base model {}", ds.branch_id);
                        m
                    }
                    None => {
                        let cfg = ModelConfig {
                            seed: base_model_seed(seed, &ds.branch_id),
                            ..model_config.clone()
                        };
                        let epochs = cfg.base_epochs;
                        let m = train(ForecastModel::init(&cfg)?, ds, epochs, path_seed(seed, &path))?;
                        store.save(&path, &m)?;
                        m
                    }
                };
                let eval = match evaluate(&model, &ds.test, &ds.scaler) {
                    Ok(ev) => {
                        info!("base {}: MAPE {:.4}", ds.branch_id, ev.mape);
                        Ok(ev)
                    }
                    Err(e) => {
                        warn!("base {} cannot be scored: {e}", ds.branch_id);
                        Err(e.to_string())
                    }
                };
                Ok(BaseModel { model, eval })
            })();
            (ds.branch_id.clone(), res)
        })
        .collect();
    let mut bases = BTreeMap::new();
    let mut failures = BTreeMap::new();
    for (label, r) in results {
        match r {
            Ok(b) => {
                bases.insert(label, b);
            }
            Err(e @ Error::Io { .. }) => return Err(e),
            Err(e) => {
                warn!("base model {label} failed: {e}");
                failures.insert(label, e.to_string());
            }
        }
    }
    Ok((bases, failures))
}

fn score(
    path: &TransferPath,
    model: &ForecastModel,
    ds: &Dataset,
    bases: &BTreeMap<String, BaseModel>,
    base_failures: &BTreeMap<String, String>,
) -> TransferRecord {
    let Some(base) = bases.get(path.target()) else {
        let why = base_failures.get(path.target()).map(String::as_str).unwrap_or("missing");
        return TransferRecord::failed(path.clone(), None, &format!("target base model: {why}"));
    };
    let mape_base = match &base.eval {
        Ok(ev) => ev.mape,
        Err(e) => return TransferRecord::failed(path.clone(), None, &format!("target base model: {e}")),
    };
    match evaluate(model, &ds.test, &ds.scaler)
        .and_then(|ev| TransferRecord::succeeded(path.clone(), mape_base, ev.mape, ev.rmse))
    {
        Ok(r) => r,
        Err(e) => TransferRecord::failed(path.clone(), Some(mape_base), &e.to_string()),
    }
}

fn children<'c>(ctx: &'c Ctx<'_>, path: &'c TransferPath) -> impl Iterator<Item = TransferPath> + 'c {
    let room = path.branches().len() < ctx.max_len;
    ctx.labels
        .iter()
        .filter(move |l| room && !path.branches().contains(l))
        .map(move |l| path.extend(l).expect("distinct extension"))
}

/// Whether some path in the subtree rooted at `path` still has no record.
fn subtree_pending(ctx: &Ctx<'_>, path: &TransferPath) -> bool {
    let n = ctx.labels.len();
    let len = path.branches().len();
    let mut expected = 0usize;
    let mut level = 1usize;
    for extra in 0..=(ctx.max_len - len) {
        if extra > 0 {
            level *= n - len - (extra - 1);
        }
        expected += level;
    }
    let done = ctx
        .hooks
        .completed
        .range(path.clone()..)
        .take_while(|(p, _)| p.starts_with(path))
        .filter(|(p, _)| p.branches().len() <= ctx.max_len)
        .count();
    done < expected
}

fn emit(ctx: &Ctx<'_>, record: TransferRecord, out: &mut Vec<TransferRecord>) -> Result<()> {
    if let Some(sink) = ctx.hooks.on_record {
        sink(&record)?;
    }
    out.push(record);
    Ok(())
}

fn visit(ctx: &Ctx<'_>, path: &TransferPath, parent: &ForecastModel, out: &mut Vec<TransferRecord>) -> Result<()> {
    if !subtree_pending(ctx, path) {
        return Ok(());
    }
    let model = match ctx.hooks.store.load(path)? {
        Some(m) => m,
        None => match transfer_retrain(parent, ctx.datasets[path.target()], path_seed(ctx.seed, path)) {
            Ok(m) => {
                ctx.hooks.store.save(path, &m)?;
                m
            }
            Err(e) => {
                warn!("path {path} failed: {e}");
                return fail_subtree(ctx, path, &e.to_string(), out);
            }
        },
    };
    if !ctx.hooks.completed.contains_key(path) {
        let rec = score(path, &model, ctx.datasets[path.target()], ctx.bases, ctx.base_failures);
        debug!("{path}: {}", rec.status);
        emit(ctx, rec, out)?;
    }
    for child in children(ctx, path) {
        visit(ctx, &child, &model, out)?;
    }
    Ok(())
}

fn fail_subtree(ctx: &Ctx<'_>, path: &TransferPath, reason: &str, out: &mut Vec<TransferRecord>) -> Result<()> {
    if !ctx.hooks.completed.contains_key(path) {
        let mape_base = ctx.bases.get(path.target()).and_then(BaseModel::mape);
        emit(ctx, TransferRecord::failed(path.clone(), mape_base, reason), out)?;
    }
    for child in children(ctx, path) {
        fail_subtree(ctx, &child, &format!("prefix {path} failed"), out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, prepare_dataset, SynthConfig};
    use chrono::NaiveDate;
    use std::sync::Mutex;

    pub(crate) fn toy_datasets(n: usize, seed: u64) -> Vec<Dataset> {
        let mut cfg = SynthConfig::four_branch(seed);
        cfg.n_branches = n;
        cfg.weekly_profiles.truncate(n);
        cfg.closed_days.truncate(n);
        let series = generate_synthetic(
            &cfg,
            NaiveDate::from_ymd_opt(2016, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2017, 6, 30).unwrap(),
        )
        .unwrap();
        series.iter().map(|s| prepare_dataset(s, 7, 2017).unwrap()).collect()
    }

    pub(crate) fn toy_model() -> ModelConfig {
        ModelConfig {
            conv_filters: 4,
            dense1: 12,
            dense2: 8,
            base_epochs: 3,
            retrain_epochs: 2,
            ..ModelConfig::default()
        }
    }

    fn cfg(max_degree: usize, parallelism: usize) -> SweepConfig {
        SweepConfig {
            max_degree,
            parallelism,
            global_seed: 11,
        }
    }

    #[test]
    fn two_branches_two_records() {
        let ds = toy_datasets(2, 1);
        let out = sweep(&ds, &toy_model(), &cfg(1, 1), &SweepHooks::default()).unwrap();
        let paths: Vec<String> = out.records.iter().map(|r| r.path.to_string()).collect();
        assert_eq!(paths, ["B1+B2", "B2+B1"]);
        for r in &out.records {
            assert!(r.is_ok(), "{r:?}");
            assert!(r.mape_transferred.unwrap().is_finite());
            let d = (r.mape_base.unwrap() - r.mape_transferred.unwrap()) / r.mape_base.unwrap();
            assert_eq!(r.delta_m.unwrap(), d);
        }
    }

    #[test]
    fn cache_matches_recomputation_and_parallelism() {
        let ds = toy_datasets(3, 2);
        let a = sweep(&ds, &toy_model(), &cfg(2, 1), &SweepHooks::default()).unwrap();
        let b = sweep_uncached(&ds, &toy_model(), &cfg(2, 3)).unwrap();
        let c = sweep(&ds, &toy_model(), &cfg(2, 3), &SweepHooks::default()).unwrap();
        assert_eq!(a.records.len(), 12);
        assert_eq!(a.records, b.records);
        assert_eq!(a.records, c.records);
    }

    struct MemStore(Mutex<BTreeMap<TransferPath, ForecastModel>>);

    impl ModelStore for MemStore {
        fn load(&self, p: &TransferPath) -> Result<Option<ForecastModel>> {
            Ok(self.0.lock().unwrap().get(p).cloned())
        }
        fn save(&self, p: &TransferPath, m: &ForecastModel) -> Result<()> {
            self.0.lock().unwrap().insert(p.clone(), m.clone());
            Ok(())
        }
    }

    #[test]
    fn shared_prefix_models_are_identical_and_resume_is_exact() {
        let ds = toy_datasets(3, 3);
        let store = MemStore(Mutex::new(BTreeMap::new()));
        let hooks = SweepHooks {
            store: &store,
            ..SweepHooks::default()
        };
        let full = sweep(&ds, &toy_model(), &cfg(2, 1), &hooks).unwrap();
        let models = store.0.lock().unwrap().clone();
        let ab: TransferPath = "B1+B2".parse().unwrap();
        let abc: TransferPath = "B1+B2+B3".parse().unwrap();
        assert_eq!(models[&abc].provenance, ["B1", "B2", "B3"]);
        // Recomputing the shared prefix gives the cached parameters.
        let again = transfer_retrain(&full.bases["B1"].model, &ds[1], path_seed(11, &ab)).unwrap();
        assert_eq!(again, models[&ab]);

        // Resume from half of the records and no model cache.
        let completed: BTreeMap<_, _> = full
            .records
            .iter()
            .take(5)
            .map(|r| (r.path.clone(), r.clone()))
            .collect();
        let fresh = Mutex::new(Vec::new());
        let sink = |r: &TransferRecord| {
            fresh.lock().unwrap().push(r.path.clone());
            Ok(())
        };
        let hooks = SweepHooks {
            store: &NoStore,
            completed,
            on_record: Some(&sink),
        };
        let resumed = sweep(&ds, &toy_model(), &cfg(2, 2), &hooks).unwrap();
        assert_eq!(resumed.records, full.records);
        assert_eq!(fresh.lock().unwrap().len(), full.records.len() - 5);
    }

    #[test]
    fn failing_target_marks_subtree() {
        let mut ds = toy_datasets(3, 4);
        ds[2].test[0].target[0] = 0.0;
        ds[2].test[0].target_closed[0] = false;
        let out = sweep(&ds, &toy_model(), &cfg(2, 1), &SweepHooks::default()).unwrap();
        assert!(out.bases["B3"].eval.is_err());
        assert_eq!(out.records.len(), 12);
        for r in &out.records {
            assert_eq!(r.is_ok(), r.target() != "B3", "{r:?}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let ds = toy_datasets(2, 5);
        assert!(sweep(&ds[..1], &toy_model(), &cfg(1, 1), &SweepHooks::default()).is_err());
        assert!(sweep(&ds, &toy_model(), &cfg(2, 1), &SweepHooks::default()).is_err());
        assert!(sweep(&ds, &toy_model(), &cfg(1, 0), &SweepHooks::default()).is_err());
    }
}
