mod birnn;
mod crf;
mod gaussian;
mod hmm;
mod hsmm;
mod knn;
mod label;
mod mapping;
mod model;

pub use birnn::{
    rnn_loss, rnn_predict, rnn_predict_sequence, rnn_train, BiRnn, LstmCell, RnnConfig, RnnTraining, DEFAULT_HIDDEN,
    DEFAULT_STRIDE,
};
pub use crf::{
    crf_log_likelihood, crf_log_partition, crf_marginals, crf_objective, crf_train, crf_viterbi, CrfConfig, CrfFit,
    LinearChainCrf, DEFAULT_CRF_FEATURES,
};
pub use gaussian::{CovarianceKind, Gaussian, DEFAULT_COV_REG};
pub use hmm::{
    hmm_em_fit, hmm_em_step, hmm_forward_backward, hmm_viterbi, total_log_likelihood, GaussianHmm, HmmConfig, HmmFit,
    Posteriors, DEFAULT_STATES,
};
pub use hsmm::{
    hsmm_em_fit, hsmm_em_step, hsmm_forward_backward, hsmm_total_log_likelihood, hsmm_viterbi, hsmm_viterbi_segments,
    truncated_poisson_pmf, truncated_poisson_rate, Hsmm, HsmmConfig, HsmmFit, DEFAULT_MAX_DURATION,
};
pub use knn::{knn_predict, KnnClassifier, DEFAULT_K};
pub use label::{SegmentLabel, DEFAULT_CLASSES};
pub use mapping::greedy_state_label_map;
pub use model::{Decoding, SeqModelConfig, SeqModelKind, SequenceModel};
