//! PCA, classical MDS and t-SNE of two branches, then energy distance and
//! a KDE grid in each 2-D projection.
//!
//!     cargo run --release --example projections

use chrono::NaiveDate;
use transferlab::data::{generate_synthetic, prepare_dataset, SynthConfig};
use transferlab::divergence::{energy_distance, feature_matrix};
use transferlab::projections::{kde2d, project_branches, GridSpec, ProjectionConfig, METHODS};

fn main() -> transferlab::Result<()> {
    let series = generate_synthetic(
        &SynthConfig::four_branch(0),
        NaiveDate::from_ymd_opt(2015, 1, 1).unwrap(),
        NaiveDate::from_ymd_opt(2017, 12, 31).unwrap(),
    )?;
    let inputs = [0, 2]
        .iter()
        .map(|&i| {
            let ds = prepare_dataset(&series[i], 7, 2017)?;
            Ok((ds.branch_id.clone(), feature_matrix(&ds.train)?))
        })
        .collect::<transferlab::Result<Vec<_>>>()?;

    let config = ProjectionConfig {
        seed: 4,
        ..ProjectionConfig::default()
    };
    for method in METHODS {
        let sets = project_branches(&inputs, method, &config)?;
        let d = energy_distance(&sets[0], &sets[1])?.value;
        let grid = GridSpec::covering(&[&sets[0].points, &sets[1].points], 40, 40, 0.1)?;
        let kde = kde2d(&sets[0].points, grid)?;
        let (ix, iy) = kde.argmax();
        let (x, y) = kde.spec.node(ix, iy);
        println!(
            "{method:<5} D({}, {}) = {d:.4}; {} density peaks at ({x:.2}, {y:.2}), mass {:.3}",
            sets[0].source_label,
            sets[1].source_label,
            sets[0].source_label,
            kde.riemann_mass()
        );
    }
    Ok(())
}
