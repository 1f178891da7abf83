//! Final validation accuracy of the alternation as the labeled share grows.

use actseg::data::{generate_synthetic, split_leave_one_out, SyntheticConfig};
use actseg::embedding::EncoderConfig;
use actseg::pipeline::{label_fraction_sweep, PipelineConfig, SweepRow};
use actseg::seqmodels::{SeqModelConfig, SeqModelKind};

pub fn main() -> actseg::Result<()> {
    let ds = generate_synthetic(&SyntheticConfig {
        demonstrators: 4,
        demos_per_demonstrator: 3,
        classes: 4,
        feature_width: 16,
        signal_dims: 6,
        nuisance_dims: 6,
        seed: 12,
        ..SyntheticConfig::default()
    })?;
    let (train, val) = split_leave_one_out(&ds, 0)?;
    let mut config = PipelineConfig {
        rounds: 2,
        top_k: 30,
        pretrain_epochs: 6,
        retrain_epochs: 3,
        seq: SeqModelConfig::new(SeqModelKind::Knn),
        ..PipelineConfig::default()
    };
    config.embedding.encoder = EncoderConfig { hidden: vec![32], dim: 8 };

    let rows = label_fraction_sweep(&train, &val, &[0.125, 0.5, 1.0], &[0, 1], &config)?;
    print!("{}", SweepRow::to_csv(&rows));
    Ok(())
}
