//! Unsupervised Gaussian HMM: EM on unlabeled sequences, Viterbi decoding,
//! then a greedy map from hidden states to segment labels.

use actseg::data::{generate_synthetic, SyntheticConfig};
use actseg::pipeline::pooled_accuracy;
use actseg::seqmodels::{greedy_state_label_map, hmm_em_fit, hmm_viterbi, CovarianceKind, HmmConfig};

pub fn main() -> actseg::Result<()> {
    let ds = generate_synthetic(&SyntheticConfig {
        demonstrators: 2,
        demos_per_demonstrator: 3,
        classes: 4,
        feature_width: 8,
        signal_dims: 6,
        nuisance_dims: 0,
        noise_sigma: 0.3,
        seed: 1,
        ..SyntheticConfig::default()
    })?;
    let seqs: Vec<Vec<&[f64]>> = ds.demos.iter().map(|d| d.features()).collect();
    let config = HmmConfig {
        states: 6,
        iterations: 15,
        covariance: CovarianceKind::Diagonal,
        ..HmmConfig::default()
    };
    let fit = hmm_em_fit(&seqs, &config, 0)?;
    let ll = &fit.log_likelihoods;
    println!("log-likelihood {:.1} -> {:.1} in {} iterations", ll[0], ll[ll.len() - 1], ll.len() - 1);

    let paths = seqs.iter().map(|s| hmm_viterbi(&fit.model, s)).collect::<actseg::Result<Vec<_>>>()?;
    let labels: Vec<Vec<_>> = ds.demos.iter().map(|d| d.frames().iter().map(|f| f.label).collect()).collect();
    let map = greedy_state_label_map(&paths, &labels, config.states)?;
    println!("state -> label: {:?}", map.iter().map(|l| l.get()).collect::<Vec<_>>());
    let pred: Vec<Vec<_>> = paths.iter().map(|p| p.iter().map(|&s| map[s]).collect()).collect();
    println!("frame accuracy after mapping: {:.3}", pooled_accuracy(&pred, &ds.demos)?);
    Ok(())
}
