use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::SyntheticConfig;
use crate::embedding::{EmbeddingTrainConfig, EncoderConfig, MetricLoss, TripletConfig, DEFAULT_MARGIN};
use crate::error::{Error, Result};
use crate::imitation::PoseDecoderConfig;
use crate::pipeline::{EmbeddingKind, PipelineConfig};
use crate::seqmodels::{CovarianceKind, Decoding, SeqModelConfig, SeqModelKind};

/// Everything a command can be told through its config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub embedding: EmbeddingSection,
    pub pipeline: PipelineSection,
    pub sequence: SequenceSection,
    pub eval: EvalSection,
    pub imitate: ImitateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub demonstrators: usize,
    pub demos_per_demonstrator: usize,
    pub classes: usize,
    pub feature_width: usize,
    pub signal_dims: usize,
    pub nuisance_dims: usize,
    pub cycles: usize,
    pub class_scale: f64,
    pub motion_scale: f64,
    pub style_scale: f64,
    pub noise_sigma: f64,
    /// Trial index held out of training by every demonstrator.
    pub held_out: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        let s = SyntheticConfig::default();
        DataSection {
            demonstrators: s.demonstrators,
            demos_per_demonstrator: s.demos_per_demonstrator,
            classes: s.classes,
            feature_width: s.feature_width,
            signal_dims: s.signal_dims,
            nuisance_dims: s.nuisance_dims,
            cycles: s.cycles,
            class_scale: s.class_scale,
            motion_scale: s.motion_scale,
            style_scale: s.style_scale,
            noise_sigma: s.noise_sigma,
            held_out: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    /// `triplet`, `npairs` or `m2v_t`.
    pub loss: String,
    pub margin: f64,
    pub batch_size: usize,
    pub pos_window: usize,
    pub neg_window: usize,
    pub semi_hard: bool,
    pub hidden: Vec<usize>,
    pub dim: usize,
    pub learning_rate: f64,
    pub combined_weight: f64,
    pub npairs_scale: f64,
    pub max_grad_norm: f64,
    pub pretrain_epochs: usize,
    pub retrain_epochs: usize,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        let e = EmbeddingTrainConfig::default();
        let p = PipelineConfig::default();
        EmbeddingSection {
            loss: e.loss.name().into(),
            margin: DEFAULT_MARGIN,
            batch_size: e.triplet.batch_size,
            pos_window: e.triplet.pos_window,
            neg_window: e.triplet.neg_window,
            semi_hard: e.triplet.semi_hard,
            hidden: e.encoder.hidden,
            dim: e.encoder.dim,
            learning_rate: e.learning_rate,
            combined_weight: e.combined_weight,
            npairs_scale: e.npairs_scale,
            max_grad_norm: e.max_grad_norm,
            pretrain_epochs: p.pretrain_epochs,
            retrain_epochs: p.retrain_epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub rounds: usize,
    pub top_k: usize,
    pub stride: usize,
    pub labeled_fraction: f64,
    pub early_stop: bool,
    pub convergence_tol: f64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        let p = PipelineConfig::default();
        PipelineSection {
            rounds: p.rounds,
            top_k: p.top_k,
            stride: p.stride,
            labeled_fraction: p.labeled_fraction,
            early_stop: p.convergence_tol.is_some(),
            convergence_tol: p.convergence_tol.unwrap_or(0.002),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceSection {
    /// `knn`, `hmm`, `hsmm`, `crf` or `rnn`.
    pub model: String,
    /// `viterbi` or `posterior`, for HMM and HSMM.
    pub decoding: String,
    pub knn_k: usize,
    pub states: usize,
    pub em_iterations: usize,
    /// `full` or `diagonal`.
    pub covariance: String,
    pub max_duration: usize,
    pub crf_features: usize,
    pub crf_iterations: usize,
    pub crf_l2: f64,
    pub rnn_hidden: usize,
    pub rnn_epochs: usize,
    pub rnn_learning_rate: f64,
    pub rnn_batch_windows: usize,
}

impl Default for SequenceSection {
    fn default() -> Self {
        let s = SeqModelConfig::default();
        SequenceSection {
            model: s.kind.name().into(),
            decoding: s.decoding.name().into(),
            knn_k: s.knn_k,
            states: s.hmm.states,
            em_iterations: s.hmm.iterations,
            covariance: s.hmm.covariance.name().into(),
            max_duration: s.hsmm.max_duration,
            crf_features: s.crf.features,
            crf_iterations: s.crf.iterations,
            crf_l2: s.crf.l2,
            rnn_hidden: s.rnn.hidden,
            rnn_epochs: s.rnn_epochs,
            rnn_learning_rate: s.rnn.learning_rate,
            rnn_batch_windows: s.rnn.batch_windows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub grid: bool,
    pub grid_rows: Vec<String>,
    pub grid_cols: Vec<String>,
    /// Labeled fractions to sweep; empty skips the sweep.
    pub sweep_fractions: Vec<f64>,
    pub sweep_seeds: Vec<u64>,
    pub noise_sigma: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            grid: false,
            grid_rows: EmbeddingKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            grid_cols: SeqModelKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            sweep_fractions: Vec::new(),
            sweep_seeds: (0..5).collect(),
            noise_sigma: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImitateSection {
    pub hidden: Vec<usize>,
    pub w_pos: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_grad_norm: f64,
    pub epochs: usize,
    pub noise_sigma: f64,
}

impl Default for ImitateSection {
    fn default() -> Self {
        let d = PoseDecoderConfig::default();
        ImitateSection {
            hidden: d.hidden,
            w_pos: d.w_pos,
            learning_rate: d.learning_rate,
            batch_size: d.batch_size,
            max_grad_norm: d.max_grad_norm,
            epochs: 30,
            noise_sigma: 0.15,
        }
    }
}

fn bad(msg: String) -> Error {
    Error::Config(msg)
}

impl RunConfig {
    /// Reads a TOML config. Unknown keys are rejected with their name.
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| bad(format!("{}: {}", path.display(), e.message())))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| bad(e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn synthetic(&self) -> Result<SyntheticConfig> {
        let d = &self.data;
        let s = SyntheticConfig {
            demonstrators: d.demonstrators,
            demos_per_demonstrator: d.demos_per_demonstrator,
            classes: d.classes,
            feature_width: d.feature_width,
            signal_dims: d.signal_dims,
            nuisance_dims: d.nuisance_dims,
            cycles: d.cycles,
            class_scale: d.class_scale,
            motion_scale: d.motion_scale,
            style_scale: d.style_scale,
            noise_sigma: d.noise_sigma,
            seed: self.seed,
            ..SyntheticConfig::default()
        };
        s.validate().map_err(|e| bad(format!("[data] {e}")))?;
        Ok(s)
    }

    pub fn seq_model(&self) -> Result<SeqModelConfig> {
        let s = &self.sequence;
        let kind = SeqModelKind::from_name(&s.model).ok_or_else(|| bad(format!("unknown sequence model `{}`", s.model)))?;
        let mut c = SeqModelConfig::new(kind);
        c.decoding = Decoding::from_name(&s.decoding).ok_or_else(|| bad(format!("unknown decoding `{}`", s.decoding)))?;
        let cov = match s.covariance.as_str() {
            "full" => CovarianceKind::Full,
            "diagonal" => CovarianceKind::Diagonal,
            other => return Err(bad(format!("unknown covariance `{other}`"))),
        };
        c.knn_k = s.knn_k;
        c.hmm.states = s.states;
        c.hmm.iterations = s.em_iterations;
        c.hmm.covariance = cov;
        c.hsmm.states = s.states;
        c.hsmm.iterations = s.em_iterations;
        c.hsmm.covariance = cov;
        c.hsmm.max_duration = s.max_duration;
        c.crf.features = s.crf_features;
        c.crf.iterations = s.crf_iterations;
        c.crf.l2 = s.crf_l2;
        c.rnn.hidden = s.rnn_hidden;
        c.rnn.learning_rate = s.rnn_learning_rate;
        c.rnn.batch_windows = s.rnn_batch_windows;
        c.rnn_epochs = s.rnn_epochs;
        if s.knn_k == 0 || s.states < 2 || s.max_duration == 0 || s.crf_features == 0 || s.rnn_hidden == 0 {
            return Err(bad("[sequence] knn_k, states (≥ 2), max_duration, crf_features and rnn_hidden must be positive".into()));
        }
        Ok(c)
    }

    pub fn pipeline(&self) -> Result<PipelineConfig> {
        let e = &self.embedding;
        let loss = MetricLoss::from_name(&e.loss).ok_or_else(|| bad(format!("unknown loss `{}`", e.loss)))?;
        let p = &self.pipeline;
        let cfg = PipelineConfig {
            rounds: p.rounds,
            top_k: p.top_k,
            stride: p.stride,
            embedding: EmbeddingTrainConfig {
                triplet: TripletConfig {
                    margin: e.margin,
                    batch_size: e.batch_size,
                    pos_window: e.pos_window,
                    neg_window: e.neg_window,
                    semi_hard: e.semi_hard,
                    ..TripletConfig::default()
                },
                loss,
                encoder: EncoderConfig {
                    hidden: e.hidden.clone(),
                    dim: e.dim,
                },
                learning_rate: e.learning_rate,
                combined_weight: e.combined_weight,
                npairs_scale: e.npairs_scale,
                max_grad_norm: e.max_grad_norm,
            },
            pretrain_epochs: e.pretrain_epochs,
            retrain_epochs: e.retrain_epochs,
            seq: self.seq_model()?,
            labeled_fraction: p.labeled_fraction,
            convergence_tol: p.early_stop.then_some(p.convergence_tol),
            seed: self.seed,
        };
        if e.dim == 0 || e.hidden.contains(&0) {
            return Err(bad("[embedding] widths must be positive".into()));
        }
        cfg.validate().map_err(|err| bad(err.to_string()))?;
        Ok(cfg)
    }

    pub fn pose_decoder(&self) -> Result<PoseDecoderConfig> {
        let i = &self.imitate;
        if !(0.0..=1.0).contains(&i.w_pos) {
            return Err(bad(format!("[imitate] w_pos {} outside [0, 1]", i.w_pos)));
        }
        if i.batch_size == 0 || i.hidden.contains(&0) {
            return Err(bad("[imitate] batch_size and widths must be positive".into()));
        }
        if !(i.noise_sigma >= 0.0) {
            return Err(bad("[imitate] noise_sigma must be non-negative".into()));
        }
        Ok(PoseDecoderConfig {
            hidden: i.hidden.clone(),
            w_pos: i.w_pos,
            learning_rate: i.learning_rate,
            batch_size: i.batch_size,
            max_grad_norm: i.max_grad_norm,
        })
    }

    pub fn grid_axes(&self) -> Result<(Vec<EmbeddingKind>, Vec<SeqModelKind>)> {
        let rows = self
            .eval
            .grid_rows
            .iter()
            .map(|n| EmbeddingKind::from_name(n).ok_or_else(|| bad(format!("unknown grid row `{n}`"))))
            .collect::<Result<Vec<_>>>()?;
        let cols = self
            .eval
            .grid_cols
            .iter()
            .map(|n| SeqModelKind::from_name(n).ok_or_else(|| bad(format!("unknown grid column `{n}`"))))
            .collect::<Result<Vec<_>>>()?;
        Ok((rows, cols))
    }

    /// Checks every section so that no command starts work on a bad config.
    pub fn validate(&self) -> Result<()> {
        self.synthetic()?;
        self.pipeline()?;
        self.pose_decoder()?;
        self.grid_axes()?;
        if self.eval.sweep_fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(bad("[eval] sweep fractions must lie in (0, 1]".into()));
        }
        if !(self.eval.noise_sigma >= 0.0) {
            return Err(bad("[eval] noise_sigma must be non-negative".into()));
        }
        Ok(())
    }
}
