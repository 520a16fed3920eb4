//! Run configuration: one flat `key=value` file for every pipeline stage.
//!
//! ```text
//! global_seed=42
//! output_dir=out
//! data.mode=synthetic            # or csv
//! data.start=2015-01-01
//! data.end=2017-12-31
//! data.test_year=2017
//! data.synth.n_branches=4        # SynthConfig keys under data.synth.
//! data.branches=B1,B2            # csv mode
//! data.path.B1=b1.csv
//! data.closed_days.B1=6
//! model.batch_size=16            # ModelConfig keys under model.
//! transfer.max_degree=3
//! transfer.parallelism=4
//! transfer.checkpoint_degree=1
//! projections.out_dim=2
//! projections.joint=false
//! projections.kde_grid=50
//! projections.tsne.perplexity=30
//! projections.tsne.learning_rate=auto  # or a number
//! divergence.split=train         # train | test | all
//! svcca.threshold=0.99
//! svcca.layers=default           # or a comma list of layer names
//! ```
//!
//! Unknown keys are rejected so typos fail loudly.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::NaiveDate;

use crate::data::{SynthConfig, DEFAULT_PERIOD};
use crate::error::{Error, Result};
use crate::forecaster::ModelConfig;
use crate::kv::KvFile;
use crate::projections::{ProjectionConfig, TsneConfig};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct CsvBranch {
    pub label: String,
    pub path: PathBuf,
    pub closed_days: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    /// `seed_fixed` is false when the generator seed follows `global_seed`.
    Synthetic { config: SynthConfig, seed_fixed: bool },
    Csv(Vec<CsvBranch>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub test_year: i32,
    pub period: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    All,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "all" => Ok(Split::All),
            _ => Err(Error::Config(format!("divergence.split must be train, test or all, got {s:?}"))),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::All => "all",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferSettings {
    /// `None` means every branch but the target, `n − 1`.
    pub max_degree: Option<usize>,
    pub parallelism: usize,
    /// Models on paths up to this degree are written to disk.
    pub checkpoint_degree: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSettings {
    pub out_dim: usize,
    pub joint: bool,
    pub tsne: TsneConfig,
    /// Nodes per axis of every KDE grid.
    pub kde_grid: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvccaSettings {
    pub threshold: f64,
    /// Layers averaged into rho; `None` is the default aggregate set.
    pub layers: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub global_seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub transfer: TransferSettings,
    pub projections: ProjectionSettings,
    pub divergence_split: Split,
    pub svcca: SvccaSettings,
}

const TOP_KEYS: [&str; 2] = ["global_seed", "output_dir"];
const SECTIONS: [&str; 6] = ["data", "model", "transfer", "projections", "divergence", "svcca"];

fn date(s: &str, key: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| Error::Config(format!("{key}: bad date {s:?}: {e}")))
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn check_label(label: &str) -> Result<()> {
    let ok = !label.is_empty() && label.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("branch label {label:?} must be non-empty ASCII letters, digits, '_' or '-'")))
    }
}

impl RunConfig {
    /// Synthetic run over 2015–2017 with 2017 as test year.
    pub fn synthetic(synth: SynthConfig, global_seed: u64) -> Self {
        let mut cfg = RunConfig {
            global_seed,
            output_dir: PathBuf::from("out"),
            data: DataConfig {
                source: DataSource::Synthetic {
                    config: synth,
                    seed_fixed: false,
                },
                start: NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date"),
                end: NaiveDate::from_ymd_opt(2017, 12, 31).expect("valid date"),
                test_year: 2017,
                period: DEFAULT_PERIOD,
            },
            model: ModelConfig::default(),
            transfer: TransferSettings {
                max_degree: None,
                parallelism: default_parallelism(),
                checkpoint_degree: 1,
            },
            projections: ProjectionSettings {
                out_dim: 2,
                joint: false,
                tsne: TsneConfig::default(),
                kde_grid: 50,
            },
            divergence_split: Split::Train,
            svcca: SvccaSettings {
                threshold: 0.99,
                layers: None,
            },
        };
        cfg.set_seed(global_seed);
        cfg
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        RunConfig::parse(&text, base)
    }

    /// Relative data paths are resolved against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let kv = KvFile::parse(text)?;
        for key in kv.keys() {
            let known = TOP_KEYS.contains(&key) || SECTIONS.iter().any(|s| key.starts_with(&format!("{s}.")));
            if !known {
                return Err(Error::Config(format!("unknown key {key:?}")));
            }
        }
        let global_seed = kv.get_or("global_seed", 0u64)?;
        let d = kv.section("data");
        let mode = d.get_str("mode").unwrap_or("synthetic");
        let synth_kv = d.section("synth");
        let source = match mode {
            "synthetic" => {
                let seed_fixed = synth_kv.get_str("seed").is_some();
                let config = if synth_kv.get_str("n_branches").is_some() {
                    SynthConfig::from_kv(&synth_kv)?
                } else if synth_kv.keys().next().is_none() {
                    SynthConfig::six_branch(0)
                } else {
                    return Err(Error::Config("data.synth.* given without data.synth.n_branches".into()));
                };
                DataSource::Synthetic { config, seed_fixed }
            }
            "csv" => {
                let labels: Vec<String> = d
                    .get_list("branches")?
                    .ok_or_else(|| Error::Config("csv mode needs data.branches".into()))?;
                let mut branches = Vec::new();
                for label in labels {
                    check_label(&label)?;
                    let p = d
                        .get_str(&format!("path.{label}"))
                        .ok_or_else(|| Error::Config(format!("missing data.path.{label}")))?;
                    let path = base_dir.join(p);
                    if !path.is_file() {
                        return Err(Error::Config(format!("data.path.{label}: {} does not exist", path.display())));
                    }
                    branches.push(CsvBranch {
                        closed_days: d.get_list(&format!("closed_days.{label}"))?.unwrap_or_default(),
                        label,
                        path,
                    });
                }
                DataSource::Csv(branches)
            }
            other => return Err(Error::Config(format!("data.mode must be synthetic or csv, got {other:?}"))),
        };
        let mut cfg = RunConfig::synthetic(SynthConfig::six_branch(0), global_seed);
        cfg.data.source = source;
        if let Some(s) = d.get_str("start") {
            cfg.data.start = date(s, "data.start")?;
        }
        if let Some(s) = d.get_str("end") {
            cfg.data.end = date(s, "data.end")?;
        }
        cfg.data.test_year = d.get_or("test_year", cfg.data.test_year)?;
        cfg.data.period = d.get_or("period", cfg.data.period)?;
        if let Some(dir) = kv.get_str("output_dir") {
            cfg.output_dir = base_dir.join(dir);
        }
        cfg.model = ModelConfig::from_kv(&kv.section("model"), ModelConfig::default())?;

        let t = kv.section("transfer");
        cfg.transfer.max_degree = t.get("max_degree")?;
        cfg.transfer.parallelism = t.get_or("parallelism", cfg.transfer.parallelism)?;
        cfg.transfer.checkpoint_degree = t.get_or("checkpoint_degree", cfg.transfer.checkpoint_degree)?;

        let p = kv.section("projections");
        cfg.projections.out_dim = p.get_or("out_dim", cfg.projections.out_dim)?;
        cfg.projections.joint = p.get_or("joint", cfg.projections.joint)?;
        cfg.projections.kde_grid = p.get_or("kde_grid", cfg.projections.kde_grid)?;
        cfg.projections.tsne = TsneConfig::from_kv(&p.section("tsne"), cfg.projections.tsne)?;

        if let Some(s) = kv.get_str("divergence.split") {
            cfg.divergence_split = s.parse()?;
        }
        cfg.svcca.threshold = kv.get_or("svcca.threshold", cfg.svcca.threshold)?;
        cfg.svcca.layers = match kv.get_str("svcca.layers") {
            None | Some("default") => None,
            Some(_) => kv.get_list("svcca.layers")?,
        };
        cfg.set_seed(global_seed);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets the global seed; a synthetic generator seed not fixed in the
    /// config follows it.
    pub fn set_seed(&mut self, seed: u64) {
        self.global_seed = seed;
        if let DataSource::Synthetic {
            config,
            seed_fixed: false,
        } = &mut self.data.source
        {
            config.seed = derive_seed(seed, "synth");
        }
    }

    pub fn validate(&self) -> Result<()> {
        let labels = self.branch_labels();
        for l in &labels {
            check_label(l)?;
        }
        let mut sorted = labels.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != labels.len() {
            return Err(Error::Config("duplicate branch labels".into()));
        }
        if labels.len() < 2 {
            return Err(Error::Config(format!("need at least 2 branches, got {}", labels.len())));
        }
        if self.data.start >= self.data.end {
            return Err(Error::Config("data.start must precede data.end".into()));
        }
        if self.data.period != self.model.input_len {
            return Err(Error::Config(format!(
                "data.period {} must equal model.input_len {}",
                self.data.period, self.model.input_len
            )));
        }
        if self.model.output_len != self.data.period {
            return Err(Error::Config("model.output_len must equal data.period".into()));
        }
        let d = self.max_degree();
        if d == 0 || d >= labels.len() {
            return Err(Error::Config(format!(
                "transfer.max_degree {d} not in 1..={}",
                labels.len() - 1
            )));
        }
        if self.transfer.parallelism == 0 {
            return Err(Error::Config("transfer.parallelism must be at least 1".into()));
        }
        if self.transfer.checkpoint_degree == 0 {
            return Err(Error::Config(
                "transfer.checkpoint_degree must be at least 1: first-degree models feed SVCCA".into(),
            ));
        }
        if self.projections.out_dim == 0 {
            return Err(Error::Config("projections.out_dim must be at least 1".into()));
        }
        if self.projections.kde_grid < 2 {
            return Err(Error::Config("projections.kde_grid must be at least 2".into()));
        }
        if !(self.svcca.threshold > 0.0 && self.svcca.threshold <= 1.0) {
            return Err(Error::Config(format!("svcca.threshold {} not in (0, 1]", self.svcca.threshold)));
        }
        if matches!(&self.svcca.layers, Some(l) if l.is_empty()) {
            return Err(Error::Config("svcca.layers is empty".into()));
        }
        Ok(())
    }

    pub fn branch_labels(&self) -> Vec<String> {
        match &self.data.source {
            DataSource::Synthetic { config, .. } => (0..config.n_branches).map(SynthConfig::branch_label).collect(),
            DataSource::Csv(b) => b.iter().map(|b| b.label.clone()).collect(),
        }
    }

    pub fn max_degree(&self) -> usize {
        self.transfer
            .max_degree
            .unwrap_or_else(|| self.branch_labels().len().saturating_sub(1))
    }

    pub fn projection_config(&self) -> ProjectionConfig {
        ProjectionConfig {
            out_dim: self.projections.out_dim,
            tsne: self.projections.tsne.clone(),
            seed: derive_seed(self.global_seed, "projections"),
            joint: self.projections.joint,
        }
    }

    /// The effective configuration, every default spelled out. Parsing the
    /// result yields an equal config, except that `transfer.parallelism`
    /// is left out because results do not depend on it.
    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::default();
        kv.set("global_seed", self.global_seed);
        kv.set("output_dir", self.output_dir.display());
        let d = &self.data;
        kv.set("data.start", d.start);
        kv.set("data.end", d.end);
        kv.set("data.test_year", d.test_year);
        kv.set("data.period", d.period);
        match &d.source {
            DataSource::Synthetic { config, .. } => {
                kv.set("data.mode", "synthetic");
                let s = config.to_kv();
                for k in s.keys() {
                    kv.set(&format!("data.synth.{k}"), s.get_str(k).unwrap_or_default());
                }
            }
            DataSource::Csv(branches) => {
                kv.set("data.mode", "csv");
                let labels: Vec<&str> = branches.iter().map(|b| b.label.as_str()).collect();
                kv.set("data.branches", labels.join(","));
                for b in branches {
                    kv.set(&format!("data.path.{}", b.label), b.path.display());
                    let days: Vec<String> = b.closed_days.iter().map(|d| d.to_string()).collect();
                    kv.set(&format!("data.closed_days.{}", b.label), days.join(","));
                }
            }
        }
        let m = self.model.to_kv();
        for k in m.keys() {
            kv.set(&format!("model.{k}"), m.get_str(k).unwrap_or_default());
        }
        kv.set("transfer.max_degree", self.max_degree());
        kv.set("transfer.checkpoint_degree", self.transfer.checkpoint_degree);
        let p = &self.projections;
        kv.set("projections.out_dim", p.out_dim);
        kv.set("projections.joint", p.joint);
        kv.set("projections.kde_grid", p.kde_grid);
        p.tsne.write_kv(&mut kv, "projections.tsne.");
        kv.set("divergence.split", self.divergence_split);
        kv.set("svcca.threshold", self.svcca.threshold);
        kv.set(
            "svcca.layers",
            self.svcca.layers.as_ref().map(|l| l.join(",")).unwrap_or_else(|| "default".into()),
        );
        kv
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = RunConfig::parse("global_seed=9\ndata.synth.n_branches=3\ntransfer.max_degree=2\nmodel.dense1=8\n", Path::new("")).unwrap();
        assert_eq!(cfg.branch_labels(), ["B1", "B2", "B3"]);
        assert_eq!(cfg.max_degree(), 2);
        assert_eq!(cfg.model.dense1, 8);
        let DataSource::Synthetic { config, seed_fixed } = &cfg.data.source else { panic!() };
        assert!(!seed_fixed);
        assert_eq!(config.seed, derive_seed(9, "synth"));
        let six = RunConfig::parse("", Path::new("")).unwrap();
        assert_eq!(six.max_degree(), 5);
    }

    #[test]
    fn seed_override_follows_unless_fixed() {
        let mut cfg = RunConfig::parse("data.synth.n_branches=2\n", Path::new("")).unwrap();
        cfg.set_seed(5);
        let DataSource::Synthetic { config, .. } = &cfg.data.source else { panic!() };
        assert_eq!(config.seed, derive_seed(5, "synth"));
        let mut fixed = RunConfig::parse("data.synth.n_branches=2\ndata.synth.seed=77\n", Path::new("")).unwrap();
        fixed.set_seed(5);
        let DataSource::Synthetic { config, .. } = &fixed.data.source else { panic!() };
        assert_eq!(config.seed, 77);
    }

    #[test]
    fn rendering_round_trips() {
        let cfg = RunConfig::parse(
            "global_seed=3\ndata.synth.n_branches=4\nprojections.joint=true\nsvcca.layers=dense1,dense2\ndivergence.split=all\n",
            Path::new(""),
        )
        .unwrap();
        let again = RunConfig::parse(&cfg.to_kv().render(), Path::new("")).unwrap();
        let mut a = cfg.clone();
        a.transfer.max_degree = Some(a.max_degree());
        if let DataSource::Synthetic { seed_fixed, .. } = &mut a.data.source {
            *seed_fixed = true;
        }
        a.transfer.parallelism = again.transfer.parallelism;
        assert_eq!(a, again);
    }

    #[test]
    fn rejects_bad_input() {
        let bad = [
            "data.synth.n_branches=0\n",
            "data.synth.n_branches=1\n",
            "data.synth.noise_sd=0.1\n",
            "typo=1\n",
            "data.mode=excel\n",
            "data.mode=csv\ndata.branches=A\ndata.path.A=/no/such/file.csv\n",
            "divergence.split=both\n",
            "transfer.max_degree=6\n",
            "transfer.checkpoint_degree=0\n",
            "svcca.threshold=1.5\n",
            "data.period=5\n",
        ];
        for text in bad {
            let err = RunConfig::parse(text, Path::new("")).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }
}
