//! Decode end-effector poses from frozen embeddings, pooled and per
//! demonstrator, with and without input noise.

use actseg::data::{generate_synthetic, split_leave_one_out, SyntheticConfig};
use actseg::embedding::EncoderConfig;
use actseg::imitation::{eval_pose, train_pose_decoder, PoseDecoderConfig, PoseScope};
use actseg::pipeline::{pretrain_encoder, PipelineConfig};

pub fn main() -> actseg::Result<()> {
    let ds = generate_synthetic(&SyntheticConfig {
        demonstrators: 3,
        demos_per_demonstrator: 3,
        seed: 13,
        ..SyntheticConfig::default()
    })?;
    let (train, test) = split_leave_one_out(&ds, 0)?;
    let mut config = PipelineConfig {
        pretrain_epochs: 8,
        ..PipelineConfig::default()
    };
    config.embedding.encoder = EncoderConfig { hidden: vec![64], dim: 16 };
    let encoder = pretrain_encoder(&train.demos, &config)?.encoder;

    let decoder = PoseDecoderConfig {
        hidden: vec![64, 32, 16],
        ..PoseDecoderConfig::default()
    };
    for scope in [PoseScope::Pooled, PoseScope::PerDemonstrator] {
        let fit = train_pose_decoder(&encoder, &train.demos, scope, &decoder, 20, 0)?;
        for sigma in [0.0, 0.15] {
            let m = eval_pose(&fit.decoders, &encoder, &test.demos, sigma, 1)?;
            println!(
                "{:>16} noise {sigma:.2}: rmse {:.3} cm, median quaternion loss {:.4}",
                scope.name(),
                m.rmse_position_cm,
                m.median_quat_loss
            );
        }
    }
    Ok(())
}
