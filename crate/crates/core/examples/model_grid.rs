//! Embedding × sequence-model accuracy grid as comma-separated text.

use actseg::data::{generate_synthetic, split_leave_one_out, SyntheticConfig};
use actseg::embedding::EncoderConfig;
use actseg::pipeline::{accuracy_grid, EmbeddingKind, PipelineConfig};
use actseg::seqmodels::SeqModelKind;

pub fn main() -> actseg::Result<()> {
    let ds = generate_synthetic(&SyntheticConfig {
        demonstrators: 3,
        demos_per_demonstrator: 3,
        classes: 4,
        feature_width: 16,
        signal_dims: 6,
        nuisance_dims: 6,
        seed: 9,
        ..SyntheticConfig::default()
    })?;
    let (train, test) = split_leave_one_out(&ds, 0)?;
    let mut config = PipelineConfig {
        pretrain_epochs: 6,
        stride: 32,
        ..PipelineConfig::default()
    };
    config.embedding.encoder = EncoderConfig { hidden: vec![32], dim: 8 };
    config.seq.hmm.states = 8;
    config.seq.hmm.iterations = 8;
    config.seq.hsmm.states = 8;
    config.seq.hsmm.iterations = 4;
    config.seq.hsmm.max_duration = 30;
    config.seq.crf.iterations = 40;
    config.seq.rnn.hidden = 12;
    config.seq.rnn.learning_rate = 1e-2;
    config.seq.rnn_epochs = 10;

    let grid = accuracy_grid(&train, &test, &EmbeddingKind::ALL, &SeqModelKind::ALL, &config)?;
    print!("{}", grid.to_csv());
    Ok(())
}
