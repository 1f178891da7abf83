//! Linear-chain CRF trained on labeled runs, decoded with Viterbi.

use actseg::data::{generate_synthetic, split_leave_one_out, SyntheticConfig};
use actseg::pipeline::pooled_accuracy;
use actseg::seqmodels::{crf_marginals, crf_train, crf_viterbi, CrfConfig};

pub fn main() -> actseg::Result<()> {
    let ds = generate_synthetic(&SyntheticConfig {
        demonstrators: 3,
        demos_per_demonstrator: 3,
        classes: 5,
        feature_width: 16,
        signal_dims: 8,
        nuisance_dims: 4,
        seed: 8,
        ..SyntheticConfig::default()
    })?;
    let (train, test) = split_leave_one_out(&ds, 2)?;
    let data: Vec<_> = train
        .demos
        .iter()
        .map(|d| (d.features(), d.training_labels().expect("synthetic demos are labeled")))
        .collect();
    let fit = crf_train(&data, ds.classes, &CrfConfig { iterations: 60, ..CrfConfig::default() }, 0)?;
    println!(
        "objective {:.4} -> {:.4}",
        fit.objective[0],
        fit.objective[fit.objective.len() - 1]
    );

    let pred = test
        .demos
        .iter()
        .map(|d| crf_viterbi(&fit.model, &d.features()))
        .collect::<actseg::Result<Vec<_>>>()?;
    println!("held-out accuracy {:.3}", pooled_accuracy(&pred, &test.demos)?);
    let m = crf_marginals(&fit.model, &test.demos[0].features())?;
    println!("marginals of frame 0: {:.3?}", m[0]);
    Ok(())
}
