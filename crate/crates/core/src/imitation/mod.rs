//! Pose decoding from frozen embeddings: the weighted position/orientation
//! loss, pooled and per-demonstrator decoders, and evaluation with input noise.

mod decoder;
mod pose;

pub use decoder::{
    decode_demos, eval_pose, pose_loss, pose_metrics, quaternion_loss, train_pose_decoder, trajectory_csv,
    PoseDecoder, PoseDecoderConfig, PoseDecoders, PoseMetrics, PoseScope, PoseTraining, DEFAULT_DECODER_HIDDEN,
    DEFAULT_POSITION_WEIGHT,
};
pub use pose::{ArmPose, EndEffectorPose, ARM_WIDTH, POSE_WIDTH};
