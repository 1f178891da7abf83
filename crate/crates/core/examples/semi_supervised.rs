//! Semi-supervised alternation with a quarter of the demonstrations labeled:
//! pretrain, segment, pseudo-label the rest, keep the most confident frames
//! per class, retrain the encoder, repeat.

use actseg::data::{generate_synthetic, split_leave_one_out, SyntheticConfig};
use actseg::embedding::EncoderConfig;
use actseg::pipeline::{run_alternation, trace_to_csv, PipelineConfig};

pub fn main() -> actseg::Result<()> {
    let ds = generate_synthetic(&SyntheticConfig {
        demonstrators: 4,
        demos_per_demonstrator: 4,
        classes: 5,
        feature_width: 24,
        signal_dims: 8,
        nuisance_dims: 8,
        seed: 6,
        ..SyntheticConfig::default()
    })?;
    let (train, val) = split_leave_one_out(&ds, 0)?;
    let mut config = PipelineConfig {
        rounds: 3,
        top_k: 40,
        stride: 32,
        pretrain_epochs: 10,
        retrain_epochs: 4,
        labeled_fraction: 0.25,
        convergence_tol: None,
        ..PipelineConfig::default()
    };
    config.embedding.encoder = EncoderConfig { hidden: vec![64], dim: 16 };
    config.seq.rnn.hidden = 16;
    config.seq.rnn.learning_rate = 1e-2;
    config.seq.rnn_epochs = 15;

    let res = run_alternation(&train, &val, &config)?;
    print!("{}", trace_to_csv(&res.trace));
    println!(
        "{} of {} training demos labeled; {} pseudo-labeled frames in the last round",
        res.train.labeled().count(),
        res.train.demos.len(),
        res.pseudo_labels.len()
    );
    Ok(())
}
