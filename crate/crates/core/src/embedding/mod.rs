//! Frame encoder, metric-learning losses and samplers, and the linear
//! projection baselines.

mod dump;
mod encoder;
mod ipca;
mod losses;
mod sampling;
mod train;
mod types;

pub use dump::{embeddings_to_csv, pca2d_dump, Pca2dRow};
pub use encoder::{Encoder, EncoderConfig, DEFAULT_EMBEDDING_DIM};
pub use ipca::{ipca_fit_partial, ipca_transform, IncrementalPca};
pub use losses::{npairs_loss, triplet_loss, NPairsLoss, TripletLoss, DEFAULT_MARGIN};
pub use sampling::{
    sample_triplets_semi_hard, sample_triplets_supervised, sample_triplets_time_contrastive,
    time_contrastive_triplet, Triplet,
};
pub use train::{
    train_embedding, train_embedding_from, EmbeddingTrainConfig, EmbeddingTraining, LabeledSequence, MetricLoss,
    SamplingMode, TripletConfig,
};
pub use types::{Embedding, FrameFeatures};
