//! Semi-supervised alternation between the metric embedding and a sequence
//! model, plus the embedding × sequence-model grid and the labeled-fraction
//! sweep built on top of it.

mod grid;
mod pseudo;

pub use grid::{fit_embedder, label_fraction_sweep, accuracy_grid, EmbeddingKind, Grid, SweepRow};
pub use pseudo::{infer_pseudo_labels, select_top_k, PseudoLabel};

use std::collections::HashMap;
use std::fmt::Write as _;

use log::info;

use crate::data::{mask_labels, segmentation_accuracy, Dataset, Demonstration};
use crate::embedding::{
    train_embedding, train_embedding_from, Encoder, EmbeddingTrainConfig, EmbeddingTraining, IncrementalPca,
    LabeledSequence, MetricLoss,
};
use crate::error::{Error, Result};
use crate::seqmodels::{SegmentLabel, SeqModelConfig, SequenceModel, DEFAULT_STRIDE};

/// Anything that turns frame features into the vectors a sequence model sees.
#[derive(Debug, Clone, PartialEq)]
pub enum Embedder {
    /// Features passed through unchanged.
    Raw,
    Ipca(IncrementalPca),
    Encoder(Encoder),
}

impl Embedder {
    pub fn is_fitted(&self) -> bool {
        match self {
            Embedder::Raw => true,
            Embedder::Ipca(p) => p.is_fitted(),
            Embedder::Encoder(e) => e.is_trained(),
        }
    }

    pub fn embed(&self, values: &[f64]) -> Result<Vec<f64>> {
        match self {
            Embedder::Raw => Ok(values.to_vec()),
            Embedder::Ipca(p) => p.transform(values),
            Embedder::Encoder(e) => e.encode_values(values),
        }
    }

    pub fn embed_demo(&self, demo: &Demonstration) -> Result<Vec<Vec<f64>>> {
        demo.frames().iter().map(|f| self.embed(&f.values)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub rounds: usize,
    /// Pseudo-labeled frames kept per class per round.
    pub top_k: usize,
    /// Online window length of the recurrent model, in frames.
    pub stride: usize,
    pub embedding: EmbeddingTrainConfig,
    pub pretrain_epochs: usize,
    pub retrain_epochs: usize,
    pub seq: SeqModelConfig,
    pub labeled_fraction: f64,
    /// Stop once validation accuracy improves by less than this between rounds.
    pub convergence_tol: Option<f64>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            rounds: 3,
            top_k: 100,
            stride: DEFAULT_STRIDE,
            embedding: EmbeddingTrainConfig::default(),
            pretrain_epochs: 20,
            retrain_epochs: 10,
            seq: SeqModelConfig::default(),
            labeled_fraction: 1.0,
            convergence_tol: Some(0.002),
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 || self.top_k == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument("rounds, top_k and stride must be at least 1".into()));
        }
        if !(self.labeled_fraction > 0.0 && self.labeled_fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "labeled fraction {} outside (0, 1]",
                self.labeled_fraction
            )));
        }
        self.embedding.triplet.validate()
    }

    /// Sequence-model settings with the recurrent window tied to `stride`.
    pub fn seq_config(&self) -> SeqModelConfig {
        let mut s = self.seq.clone();
        s.rnn.stride = self.stride;
        s
    }
}

/// Derives an independent seed for one stage of a run.
pub(crate) fn stage_seed(seed: u64, stage: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(stage.wrapping_mul(0xbf58_476d_1ce4_e5b9))
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn labeled_sequences<'a>(demos: &'a [Demonstration], only_labeled: bool) -> Vec<LabeledSequence<'a>> {
    demos
        .iter()
        .filter(|d| !only_labeled || d.frames().iter().any(|f| f.label.is_some()))
        .map(|d| LabeledSequence {
            frames: d.features(),
            labels: d.frames().iter().map(|f| f.label).collect(),
        })
        .collect()
}

/// Trains the encoder on true labels only. Time-contrastive terms of the
/// combined loss also see the unlabeled demonstrations.
pub fn pretrain_encoder(demos: &[Demonstration], config: &PipelineConfig) -> Result<EmbeddingTraining> {
    let mut distinct: Vec<SegmentLabel> = demos.iter().flat_map(|d| d.frames().iter().filter_map(|f| f.label)).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateDataset(
            "pretraining needs labeled demonstrations with at least two distinct labels".into(),
        ));
    }
    let only_labeled = config.embedding.loss != MetricLoss::Combined;
    let seqs = labeled_sequences(demos, only_labeled);
    train_embedding(&seqs, &config.embedding, config.pretrain_epochs, stage_seed(config.seed, 1))
}

/// Fits a sequence model on embedded demonstrations with their visible labels.
pub fn train_sequence_model(
    embedder: &Embedder,
    demos: &[Demonstration],
    classes: usize,
    config: &SeqModelConfig,
    seed: u64,
) -> Result<SequenceModel> {
    let embedded = demos.iter().map(|d| embedder.embed_demo(d)).collect::<Result<Vec<_>>>()?;
    let seqs: Vec<LabeledSequence> = embedded
        .iter()
        .zip(demos)
        .map(|(e, d)| LabeledSequence {
            frames: e.iter().map(Vec::as_slice).collect(),
            labels: d.frames().iter().map(|f| f.label).collect(),
        })
        .collect();
    SequenceModel::train(&seqs, classes, config, seed)
}

/// Per-demo predicted labels.
pub fn segment_demos(embedder: &Embedder, model: &SequenceModel, demos: &[Demonstration]) -> Result<Vec<Vec<SegmentLabel>>> {
    demos.iter().map(|d| Ok(model.predict(&embedder.embed_demo(d)?)?.0)).collect()
}

/// Frame accuracy pooled over demos against their ground truth (visible or hidden).
pub fn pooled_accuracy(pred: &[Vec<SegmentLabel>], demos: &[Demonstration]) -> Result<f64> {
    let (mut all_pred, mut all_truth) = (Vec::new(), Vec::new());
    for (p, d) in pred.iter().zip(demos) {
        let truth = d
            .evaluation_labels()
            .ok_or_else(|| Error::InvalidArgument(format!("demo {} has no ground truth", d.id)))?;
        all_pred.extend_from_slice(p);
        all_truth.extend(truth);
    }
    if all_truth.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    segmentation_accuracy(&all_pred, &all_truth)
}

pub fn evaluate(embedder: &Embedder, model: &SequenceModel, demos: &[Demonstration]) -> Result<f64> {
    pooled_accuracy(&segment_demos(embedder, model, demos)?, demos)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    /// Mean embedding loss of the encoder update in this round.
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

pub fn trace_to_csv(trace: &[RoundMetrics]) -> String {
    let mut out = String::from("round,loss,train_acc,val_acc\n");
    for r in trace {
        writeln!(out, "{},{:.12e},{:.12e},{:.12e}", r.round, r.loss, r.train_acc, r.val_acc).unwrap();
    }
    out
}

#[derive(Debug, Clone)]
pub struct AlternationResult {
    pub encoder: Encoder,
    pub model: SequenceModel,
    pub trace: Vec<RoundMetrics>,
    /// Pseudo-labels used for the last encoder update (empty after one round).
    pub pseudo_labels: Vec<PseudoLabel>,
    /// The training set as seen by the run, after label masking.
    pub train: Dataset,
}

/// Encoder training sequences: true labels where present, selected
/// pseudo-labels on unlabeled frames, nothing elsewhere.
fn sequences_with_pseudo<'a>(demos: &'a [Demonstration], pseudo: &[PseudoLabel]) -> Vec<LabeledSequence<'a>> {
    let index: HashMap<(u32, usize), SegmentLabel> = pseudo.iter().map(|p| ((p.demo_id, p.frame_index), p.label)).collect();
    demos
        .iter()
        .map(|d| LabeledSequence {
            frames: d.features(),
            labels: d
                .frames()
                .iter()
                .map(|f| f.label.or_else(|| index.get(&(d.id, f.frame_index)).copied()))
                .collect(),
        })
        .collect()
}

/// Pretrain, then repeat (sequence-train → pseudo-label → top-k → encoder
/// update) for up to `rounds` rounds, scoring each round on `val`.
pub fn run_alternation(train: &Dataset, val: &Dataset, config: &PipelineConfig) -> Result<AlternationResult> {
    config.validate()?;
    let train = if config.labeled_fraction < 1.0 {
        mask_labels(train, config.labeled_fraction, stage_seed(config.seed, 0))?
    } else {
        train.clone()
    };
    let seq_cfg = config.seq_config();
    let pre = pretrain_encoder(&train.demos, config)?;
    let mut encoder = pre.encoder;
    let mut loss = mean(&pre.loss_trace);
    let mut trace: Vec<RoundMetrics> = Vec::new();
    let mut pseudo = Vec::new();
    let mut model: Option<SequenceModel> = None;
    for round in 1..=config.rounds {
        if let Some(prev) = &model {
            let candidates = infer_pseudo_labels(&Embedder::Encoder(encoder.clone()), prev, &train.demos)?;
            pseudo = select_top_k(&candidates, config.top_k);
            let seqs = sequences_with_pseudo(&train.demos, &pseudo);
            let res = train_embedding_from(
                encoder,
                &seqs,
                &config.embedding,
                config.retrain_epochs,
                stage_seed(config.seed, 10 + round as u64),
            )?;
            encoder = res.encoder;
            loss = mean(&res.loss_trace);
        }
        let embedder = Embedder::Encoder(encoder.clone());
        let m = train_sequence_model(&embedder, &train.demos, train.classes, &seq_cfg, stage_seed(config.seed, 100 + round as u64))?;
        let train_acc = evaluate(&embedder, &m, &train.demos)?;
        let val_acc = evaluate(&embedder, &m, &val.demos)?;
        info!("round {round}: loss {loss:.4} train {train_acc:.4} val {val_acc:.4}");
        let converged = match (config.convergence_tol, trace.last()) {
            (Some(tol), Some(prev)) => val_acc - prev.val_acc < tol,
            _ => false,
        };
        trace.push(RoundMetrics {
            round,
            loss,
            train_acc,
            val_acc,
        });
        model = Some(m);
        if converged {
            break;
        }
    }
    Ok(AlternationResult {
        encoder,
        model: model.expect("at least one round"),
        trace,
        pseudo_labels: pseudo,
        train,
    })
}
