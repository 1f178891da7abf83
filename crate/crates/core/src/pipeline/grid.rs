use std::fmt::Write as _;

use log::info;

use super::{evaluate, pretrain_encoder, run_alternation, stage_seed, train_sequence_model, Embedder, PipelineConfig};
use crate::data::Dataset;
use crate::embedding::{train_embedding, IncrementalPca, LabeledSequence, MetricLoss, SamplingMode};
use crate::error::{Error, Result};
use crate::seqmodels::SeqModelKind;

const IPCA_BATCH: usize = 256;

/// Rows of the embedding × sequence-model grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EmbeddingKind {
    Ipca,
    /// Unsupervised time-contrastive triplets.
    Svtcn,
    Raw,
    NPairs,
    Triplet,
    /// Supervised triplets plus time-contrastive triplets.
    TripletSvtcn,
}

impl EmbeddingKind {
    pub const ALL: [EmbeddingKind; 6] = [
        EmbeddingKind::Ipca,
        EmbeddingKind::Svtcn,
        EmbeddingKind::Raw,
        EmbeddingKind::NPairs,
        EmbeddingKind::Triplet,
        EmbeddingKind::TripletSvtcn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EmbeddingKind::Ipca => "ipca",
            EmbeddingKind::Svtcn => "svtcn",
            EmbeddingKind::Raw => "raw",
            EmbeddingKind::NPairs => "npairs",
            EmbeddingKind::Triplet => "triplet",
            EmbeddingKind::TripletSvtcn => "triplet_svtcn",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub fn uses_labels(self) -> bool {
        matches!(self, EmbeddingKind::NPairs | EmbeddingKind::Triplet | EmbeddingKind::TripletSvtcn)
    }
}

/// Fits the embedding of one grid row on `train`.
pub fn fit_embedder(kind: EmbeddingKind, train: &Dataset, config: &PipelineConfig) -> Result<Embedder> {
    let mut cfg = config.clone();
    cfg.embedding.triplet.sampling = SamplingMode::SupervisedSegment;
    match kind {
        EmbeddingKind::Raw => Ok(Embedder::Raw),
        EmbeddingKind::Ipca => {
            let rows: Vec<&[f64]> = train.demos.iter().flat_map(|d| d.features()).collect();
            if rows.is_empty() {
                return Err(Error::Empty("training frames"));
            }
            let mut pca = IncrementalPca::new(config.embedding.encoder.dim.min(train.feature_width))?;
            for chunk in rows.chunks(IPCA_BATCH) {
                pca.partial_fit(chunk)?;
            }
            Ok(Embedder::Ipca(pca))
        }
        EmbeddingKind::Svtcn => {
            cfg.embedding.loss = MetricLoss::Triplet;
            cfg.embedding.triplet.sampling = SamplingMode::TimeContrastive;
            let seqs: Vec<LabeledSequence> = train.demos.iter().map(|d| LabeledSequence::unlabeled(d.features())).collect();
            let res = train_embedding(&seqs, &cfg.embedding, cfg.pretrain_epochs, stage_seed(cfg.seed, 1))?;
            Ok(Embedder::Encoder(res.encoder))
        }
        EmbeddingKind::NPairs | EmbeddingKind::Triplet | EmbeddingKind::TripletSvtcn => {
            cfg.embedding.loss = match kind {
                EmbeddingKind::NPairs => MetricLoss::NPairs,
                EmbeddingKind::Triplet => MetricLoss::Triplet,
                _ => MetricLoss::Combined,
            };
            Ok(Embedder::Encoder(pretrain_encoder(&train.demos, &cfg)?.encoder))
        }
    }
}

/// Held-out accuracies, `accuracy[row][col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub rows: Vec<EmbeddingKind>,
    pub cols: Vec<SeqModelKind>,
    pub accuracy: Vec<Vec<f64>>,
}

impl Grid {
    pub fn get(&self, row: EmbeddingKind, col: SeqModelKind) -> Option<f64> {
        let r = self.rows.iter().position(|&k| k == row)?;
        let c = self.cols.iter().position(|&k| k == col)?;
        Some(self.accuracy[r][c])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("embedding");
        for c in &self.cols {
            write!(out, ",{}", c.name()).unwrap();
        }
        out.push('\n');
        for (r, row) in self.rows.iter().zip(&self.accuracy) {
            out.push_str(r.name());
            for a in row {
                write!(out, ",{a:.6}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Fully supervised grid: each embedding is fitted once on `train`, then
/// every sequence model is trained on it and scored on `test`.
pub fn accuracy_grid(
    train: &Dataset,
    test: &Dataset,
    rows: &[EmbeddingKind],
    cols: &[SeqModelKind],
    config: &PipelineConfig,
) -> Result<Grid> {
    config.validate()?;
    let mut accuracy = Vec::with_capacity(rows.len());
    for &row in rows {
        let embedder = fit_embedder(row, train, config)?;
        let mut line = Vec::with_capacity(cols.len());
        for &col in cols {
            let mut seq = config.seq_config();
            seq.kind = col;
            let model = train_sequence_model(&embedder, &train.demos, train.classes, &seq, stage_seed(config.seed, 200))?;
            let acc = evaluate(&embedder, &model, &test.demos)?;
            info!("grid {} × {}: {acc:.4}", row.name(), col.name());
            line.push(acc);
        }
        accuracy.push(line);
    }
    Ok(Grid {
        rows: rows.to_vec(),
        cols: cols.to_vec(),
        accuracy,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub fraction: f64,
    /// Final validation accuracy of each seed's alternation run.
    pub accuracies: Vec<f64>,
}

impl SweepRow {
    pub fn mean(&self) -> f64 {
        self.accuracies.iter().sum::<f64>() / self.accuracies.len().max(1) as f64
    }

    pub fn to_csv(rows: &[SweepRow]) -> String {
        let mut out = String::from("labeled_fraction,seeds,mean_acc,min_acc,max_acc\n");
        for r in rows {
            let min = r.accuracies.iter().copied().fold(f64::INFINITY, f64::min);
            let max = r.accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            writeln!(out, "{},{},{:.6},{min:.6},{max:.6}", r.fraction, r.accuracies.len(), r.mean()).unwrap();
        }
        out
    }
}

/// Runs the alternation once per (fraction, seed) and reports the final
/// validation accuracy.
pub fn label_fraction_sweep(
    train: &Dataset,
    val: &Dataset,
    fractions: &[f64],
    seeds: &[u64],
    config: &PipelineConfig,
) -> Result<Vec<SweepRow>> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one seed".into()));
    }
    fractions
        .iter()
        .map(|&fraction| {
            let accuracies = seeds
                .iter()
                .map(|&seed| {
                    let cfg = PipelineConfig {
                        labeled_fraction: fraction,
                        seed,
                        ..config.clone()
                    };
                    let res = run_alternation(train, val, &cfg)?;
                    Ok(res.trace.last().expect("at least one round").val_acc)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SweepRow { fraction, accuracies })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split_leave_one_out, SyntheticConfig};
    use crate::embedding::EncoderConfig;

    fn small() -> (Dataset, Dataset) {
        let ds = generate_synthetic(&SyntheticConfig {
            demonstrators: 3,
            demos_per_demonstrator: 2,
            classes: 3,
            feature_width: 10,
            signal_dims: 4,
            nuisance_dims: 4,
            cycles: 3,
            mean_durations: vec![8.0; 3],
            seed: 5,
            ..SyntheticConfig::default()
        })
        .unwrap();
        split_leave_one_out(&ds, 1).unwrap()
    }

    fn config() -> PipelineConfig {
        let mut c = PipelineConfig {
            rounds: 2,
            top_k: 10,
            stride: 16,
            pretrain_epochs: 2,
            retrain_epochs: 1,
            ..PipelineConfig::default()
        };
        c.embedding.encoder = EncoderConfig { hidden: vec![8], dim: 4 };
        c.embedding.triplet.batch_size = 16;
        c.embedding.triplet.pos_window = 2;
        c.embedding.triplet.neg_window = 4;
        c.seq.rnn.hidden = 4;
        c.seq.rnn_epochs = 2;
        c.seq.hmm.states = 3;
        c.seq.hsmm.states = 3;
        c.seq.hsmm.max_duration = 12;
        c.seq.hmm.iterations = 3;
        c.seq.hsmm.iterations = 3;
        c.seq.crf.iterations = 5;
        c
    }

    #[test]
    fn kind_names_round_trip() {
        for k in EmbeddingKind::ALL {
            assert_eq!(EmbeddingKind::from_name(k.name()), Some(k));
        }
        assert_eq!(EmbeddingKind::from_name("pixels"), None);
    }

    #[test]
    fn full_grid_shape_and_range() {
        let (train, test) = small();
        let g = accuracy_grid(&train, &test, &EmbeddingKind::ALL, &SeqModelKind::ALL, &config()).unwrap();
        assert_eq!(g.accuracy.len(), 6);
        assert!(g.accuracy.iter().all(|r| r.len() == 5 && r.iter().all(|a| (0.0..=1.0).contains(a))));
        let csv = g.to_csv();
        assert_eq!(csv.lines().count(), 7);
        assert!(csv.starts_with("embedding,knn,hmm,hsmm,crf,rnn\n"));
        assert_eq!(g.get(EmbeddingKind::Raw, SeqModelKind::Knn), Some(g.accuracy[2][0]));
    }

    #[test]
    fn ipca_embedder_has_requested_width() {
        let (train, _) = small();
        let e = fit_embedder(EmbeddingKind::Ipca, &train, &config()).unwrap();
        assert_eq!(e.embed_demo(&train.demos[0]).unwrap()[0].len(), 4);
    }

    #[test]
    fn sweep_has_one_row_per_fraction() {
        let (train, val) = small();
        let rows = label_fraction_sweep(&train, &val, &[0.25, 1.0], &[1, 2], &config()).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.accuracies.len() == 2));
        assert_eq!(SweepRow::to_csv(&rows).lines().count(), 3);
    }
}
