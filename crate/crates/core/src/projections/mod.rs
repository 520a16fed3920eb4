//! Projections of feature matrices to a few dimensions (PCA, classical
//! MDS, exact t-SNE) and 2-D kernel density grids of the results.

mod kde;
mod linear;
mod tsne;

use crate::divergence::{standardize_union, Representation, SampleSet};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::tensor::Matrix;

pub use kde::{kde2d, GridSpec, KdeGrid};
pub use linear::{mds, pca, MdsResult, PcaResult};
pub use tsne::{conditional_affinities, tsne, TsneConfig, TsneResult};

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionConfig {
    pub out_dim: usize,
    pub tsne: TsneConfig,
    pub seed: u64,
    /// Fit one projection on all branches together instead of one per branch.
    pub joint: bool,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        ProjectionConfig {
            out_dim: 2,
            tsne: TsneConfig::default(),
            seed: 0,
            joint: false,
        }
    }
}

/// The projected representations, in report order.
pub const METHODS: [Representation; 3] = [Representation::Tsne, Representation::Pca, Representation::Mds];

pub fn pca_project(x: &Matrix, config: &ProjectionConfig, label: &str) -> Result<SampleSet> {
    SampleSet::new(pca(x, config.out_dim)?.scores, label, Representation::Pca)
}

pub fn mds_project(x: &Matrix, config: &ProjectionConfig, label: &str) -> Result<SampleSet> {
    SampleSet::new(mds(x, config.out_dim)?.coords, label, Representation::Mds)
}

/// The t-SNE seed is derived from the config seed and `label`.
pub fn tsne_project(x: &Matrix, config: &ProjectionConfig, label: &str) -> Result<SampleSet> {
    let seed = derive_seed(config.seed, &format!("tsne/{label}"));
    SampleSet::new(tsne(x, config.out_dim, &config.tsne, seed)?.embedding, label, Representation::Tsne)
}

pub fn project(x: &Matrix, method: Representation, config: &ProjectionConfig, label: &str) -> Result<SampleSet> {
    match method {
        Representation::Pca => pca_project(x, config, label),
        Representation::Mds => mds_project(x, config, label),
        Representation::Tsne => tsne_project(x, config, label),
        Representation::Raw => Err(Error::Contract("raw is not a projection".into())),
    }
}

/// Standardizes the branches' feature matrices over their union, then
/// projects each branch on its own, or all stacked together when
/// `config.joint` is set.
pub fn project_branches(
    inputs: &[(String, Matrix)],
    method: Representation,
    config: &ProjectionConfig,
) -> Result<Vec<SampleSet>> {
    let mats: Vec<&Matrix> = inputs.iter().map(|(_, m)| m).collect();
    let z = standardize_union(&mats)?;
    if !config.joint {
        return inputs
            .iter()
            .zip(&z)
            .map(|((label, _), m)| project(m, method, config, label))
            .collect();
    }
    let mut stacked = z[0].clone();
    for m in &z[1..] {
        stacked = stacked.vstack(m)?;
    }
    let all = project(&stacked, method, config, "joint")?;
    let mut out = Vec::new();
    let mut start = 0;
    for ((label, _), m) in inputs.iter().zip(&z) {
        let idx: Vec<usize> = (start..start + m.rows()).collect();
        out.push(SampleSet::new(all.points.select_rows(&idx), label.clone(), method)?);
        start += m.rows();
    }
    Ok(out)
}

/// `branch;method;dim1;dim2…` rows for every set, in the given order.
pub fn projection_csv(sets: &[SampleSet]) -> String {
    let dims = sets.first().map(|s| s.points.cols()).unwrap_or(2);
    let mut s = String::from("branch;method");
    for d in 1..=dims {
        s.push_str(&format!(";dim{d}"));
    }
    s.push('\n');
    for set in sets {
        for r in 0..set.points.rows() {
            s.push_str(&set.source_label);
            s.push(';');
            s.push_str(set.representation.label());
            for v in set.points.row(r) {
                s.push(';');
                s.push_str(&v.to_string());
            }
            s.push('\n');
        }
    }
    s
}
