//! Explicit-duration HSMM: fitted Poisson duration rates and segment-level
//! Viterbi output.

use actseg::data::{generate_synthetic, SyntheticConfig};
use actseg::seqmodels::{hsmm_em_fit, hsmm_viterbi_segments, truncated_poisson_rate, CovarianceKind, HsmmConfig};

pub fn main() -> actseg::Result<()> {
    let ds = generate_synthetic(&SyntheticConfig {
        demonstrators: 2,
        demos_per_demonstrator: 2,
        classes: 3,
        feature_width: 6,
        signal_dims: 6,
        nuisance_dims: 0,
        mean_durations: vec![6.0, 12.0, 18.0],
        noise_sigma: 0.3,
        seed: 3,
        ..SyntheticConfig::default()
    })?;
    let seqs: Vec<Vec<&[f64]>> = ds.demos.iter().map(|d| d.features()).collect();
    let config = HsmmConfig {
        states: 3,
        iterations: 8,
        max_duration: 40,
        covariance: CovarianceKind::Diagonal,
        ..HsmmConfig::default()
    };
    let fit = hsmm_em_fit(&seqs, &config, 0)?;
    let ll = &fit.log_likelihoods;
    println!("log-likelihood {:.1} -> {:.1}", ll[0], ll[ll.len() - 1]);

    for k in 0..fit.model.num_states() {
        let pmf = fit.model.durations().row(k);
        let mean: f64 = pmf.iter().enumerate().map(|(d, p)| (d + 1) as f64 * p).sum();
        println!("state {k}: mean duration {mean:.1} frames (rate {:.2})", truncated_poisson_rate(mean, config.max_duration));
    }
    let segments = hsmm_viterbi_segments(&fit.model, &seqs[0])?;
    println!("first demo as (state, duration): {:?}", &segments[..segments.len().min(8)]);
    Ok(())
}
