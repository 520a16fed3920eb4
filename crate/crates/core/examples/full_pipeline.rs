//! generate → sweep → indicators → report in a temporary directory, with
//! a small network and max degree 1. Pass a directory to keep the output.
//!
//!     cargo run --release --example full_pipeline [-- OUT_DIR]

use transferlab::data::SynthConfig;
use transferlab::pipeline::{cmd_generate, cmd_indicators, cmd_report, cmd_sweep, roster_table};
use transferlab::RunConfig;

fn main() -> transferlab::Result<()> {
    let tmp = tempfile::tempdir().map_err(|e| transferlab::Error::io(std::env::temp_dir(), e))?;
    let out = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| tmp.path().to_path_buf());

    let mut cfg = RunConfig::synthetic(SynthConfig::four_branch(0), 5);
    cfg.output_dir = out;
    cfg.model.conv_filters = 8;
    cfg.model.dense1 = 32;
    cfg.model.dense2 = 16;
    cfg.transfer.max_degree = Some(1);

    print!("{}", roster_table(&cmd_generate(&cfg)?));
    let s = cmd_sweep(&cfg, false)?;
    println!("sweep: {} records, {} failed", s.records, s.failed);
    let ind = cmd_indicators(&cfg)?;
    for p in &ind.svcca {
        match &p.rho {
            Ok(r) => println!("rho {}→{}: {r:.4}", p.source, p.target),
            Err(why) => println!("rho {}→{}: {why}", p.source, p.target),
        }
    }
    let bundle = cmd_report(&cfg)?;
    print!("{}", bundle.files["correlations.csv"]);
    print!("{}", bundle.files["ttest.csv"]);
    Ok(())
}
