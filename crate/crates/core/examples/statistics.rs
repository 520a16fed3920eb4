//! The hypothesis tests behind the report: a one-sample t-test on
//! transferabilities and Spearman correlations with significance marks.
//!
//!     cargo run --example statistics

use transferlab::stats::{one_sample_ttest, spearman_exact, spearman_rho, stars, ttest_from_summary};

fn main() -> transferlab::Result<()> {
    // Summary statistics of a large sweep.
    let t = ttest_from_summary(0.00894, 0.06728, 1950, 0.0)?;
    println!("t = {:.3}, p = {:.2e} {}", t.t, t.p_two_sided, stars(t.p_two_sided));

    let delta_m = [0.04, -0.02, 0.01, 0.07, -0.05, 0.03, 0.00, 0.02];
    let t = one_sample_ttest(&delta_m, 0.0)?;
    println!("mean {:.4}, sd {:.4}, t = {:.3}, p = {:.3}", t.mean, t.sd, t.t, t.p_two_sided);

    let divergence = [0.8, 1.5, 0.3, 0.2, 2.4, 0.9, 1.1, 0.9];
    let r = spearman_exact(&divergence, &delta_m)?;
    println!("exact:  r_s = {:+.4}, p = {:.4} {}", r.r_s, r.p_value, stars(r.p_value));
    let r = spearman_rho(&divergence, &delta_m)?;
    println!("t-approx: r_s = {:+.4}, p = {:.4} {}", r.r_s, r.p_value, stars(r.p_value));
    Ok(())
}
