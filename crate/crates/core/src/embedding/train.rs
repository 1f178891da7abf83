use rand::Rng;

use super::encoder::{Encoder, EncoderConfig};
use super::losses::{npairs_loss, triplet_loss, DEFAULT_MARGIN};
use super::sampling::{
    check_windows, sample_triplets_semi_hard, sample_triplets_supervised, time_contrastive_triplet, Triplet,
};
use crate::error::{Error, Result};
use crate::numerics::{
    clip_grad_norm, l2_normalize_backward, mlp_backward_acc, seeded_rng, MlpCache, OptimizerState, SeededRng,
    DEFAULT_NORM_EPS,
};
use crate::seqmodels::SegmentLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingMode {
    SupervisedSegment,
    TimeContrastive,
}

/// Which metric objective drives the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricLoss {
    /// Triplet loss with triplets drawn by [`TripletConfig::sampling`].
    Triplet,
    NPairs,
    /// Weighted sum of the supervised triplet loss and the time-contrastive
    /// triplet loss.
    Combined,
}

impl MetricLoss {
    pub fn name(self) -> &'static str {
        match self {
            MetricLoss::Triplet => "triplet",
            MetricLoss::NPairs => "npairs",
            MetricLoss::Combined => "m2v_t",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "triplet" => Some(MetricLoss::Triplet),
            "npairs" | "n-pairs" => Some(MetricLoss::NPairs),
            "m2v_t" | "m2v-t" | "combined" => Some(MetricLoss::Combined),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletConfig {
    pub margin: f64,
    pub batch_size: usize,
    pub sampling: SamplingMode,
    pub pos_window: usize,
    pub neg_window: usize,
    /// Semi-hard negative mining inside each batch.
    pub semi_hard: bool,
}

impl Default for TripletConfig {
    fn default() -> Self {
        TripletConfig {
            margin: DEFAULT_MARGIN,
            batch_size: 128,
            sampling: SamplingMode::SupervisedSegment,
            pos_window: 6,
            neg_window: 12,
            semi_hard: false,
        }
    }
}

impl TripletConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::InvalidArgument(format!("margin {} must be positive", self.margin)));
        }
        if self.batch_size < 2 {
            return Err(Error::InvalidArgument("batch size must be at least 2".into()));
        }
        check_windows(self.pos_window, self.neg_window)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTrainConfig {
    pub triplet: TripletConfig,
    pub loss: MetricLoss,
    pub encoder: EncoderConfig,
    pub learning_rate: f64,
    /// Weight of each term of [`MetricLoss::Combined`].
    pub combined_weight: f64,
    /// Unit embeddings are multiplied by this before the n-pairs softmax.
    pub npairs_scale: f64,
    pub max_grad_norm: f64,
}

impl Default for EmbeddingTrainConfig {
    fn default() -> Self {
        EmbeddingTrainConfig {
            triplet: TripletConfig::default(),
            loss: MetricLoss::Triplet,
            encoder: EncoderConfig::default(),
            learning_rate: 1e-3,
            combined_weight: 0.5,
            npairs_scale: 4.0,
            max_grad_norm: 10.0,
        }
    }
}

/// Frames of one demonstration with whatever labels training may see
/// (true labels, pseudo-labels, or none).
#[derive(Debug, Clone)]
pub struct LabeledSequence<'a> {
    pub frames: Vec<&'a [f64]>,
    pub labels: Vec<Option<SegmentLabel>>,
}

impl<'a> LabeledSequence<'a> {
    pub fn unlabeled(frames: Vec<&'a [f64]>) -> Self {
        let labels = vec![None; frames.len()];
        LabeledSequence { frames, labels }
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingTraining {
    pub encoder: Encoder,
    /// Mean batch loss of every optimizer step.
    pub loss_trace: Vec<f64>,
}

/// Trains a fresh encoder initialized from `seed`.
pub fn train_embedding(
    seqs: &[LabeledSequence<'_>],
    config: &EmbeddingTrainConfig,
    epochs: usize,
    seed: u64,
) -> Result<EmbeddingTraining> {
    let width = seqs
        .iter()
        .flat_map(|s| s.frames.first())
        .map(|f| f.len())
        .next()
        .ok_or(Error::DegenerateDataset("no frames to train on".into()))?;
    let encoder = Encoder::new(width, &config.encoder, seed)?;
    train_embedding_from(encoder, seqs, config, epochs, seed)
}

/// Continues training `encoder` (warm start).
pub fn train_embedding_from(
    mut encoder: Encoder,
    seqs: &[LabeledSequence<'_>],
    config: &EmbeddingTrainConfig,
    epochs: usize,
    seed: u64,
) -> Result<EmbeddingTraining> {
    config.triplet.validate()?;
    for s in seqs {
        if s.frames.len() != s.labels.len() {
            return Err(Error::shape("one label slot per frame required"));
        }
        if let Some(f) = s.frames.iter().find(|f| f.len() != encoder.input_width()) {
            return Err(Error::shape(format!(
                "frame width {} differs from encoder input {}",
                f.len(),
                encoder.input_width()
            )));
        }
    }
    let pools = Pools::build(seqs, config)?;
    let total: usize = seqs.iter().map(|s| s.frames.len()).sum();
    let steps_per_epoch = total.div_ceil(config.triplet.batch_size).max(1);
    let mut rng = seeded_rng(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut opt = OptimizerState::adam(encoder.params().num_params(), config.learning_rate);
    let mut trace = Vec::with_capacity(epochs * steps_per_epoch);
    let mut flat = encoder.params().flatten();
    for _ in 0..epochs * steps_per_epoch {
        let mut step = Step::default();
        match config.loss {
            MetricLoss::Triplet => match config.triplet.sampling {
                SamplingMode::SupervisedSegment => pools.supervised(&encoder, config, 1.0, &mut step, &mut rng)?,
                SamplingMode::TimeContrastive => pools.time_contrastive(config, 1.0, &mut step, &mut rng),
            },
            MetricLoss::NPairs => pools.npairs(config, &mut step, &mut rng)?,
            MetricLoss::Combined => {
                let w = config.combined_weight;
                pools.supervised(&encoder, config, w, &mut step, &mut rng)?;
                pools.time_contrastive(config, w, &mut step, &mut rng);
            }
        }
        if step.terms.is_empty() {
            continue;
        }
        let (loss, mut grads) = step.evaluate(&encoder, config)?;
        clip_grad_norm(&mut grads, config.max_grad_norm);
        opt.update(&mut flat, &grads)?;
        encoder.params_mut().assign_flat(&flat)?;
        trace.push(loss);
    }
    if !trace.is_empty() {
        encoder.mark_trained();
    }
    Ok(EmbeddingTraining {
        encoder,
        loss_trace: trace,
    })
}

/// Frame pools the samplers draw from.
struct Pools<'s, 'a> {
    seqs: &'s [LabeledSequence<'a>],
    labeled: Vec<(usize, usize)>,
    /// Labeled frames grouped by class index.
    by_class: Vec<Vec<(usize, usize)>>,
    long: Vec<usize>,
    long_cumulative: Vec<usize>,
}

impl<'s, 'a> Pools<'s, 'a> {
    fn build(seqs: &'s [LabeledSequence<'a>], config: &EmbeddingTrainConfig) -> Result<Self> {
        let mut labeled = Vec::new();
        let mut by_class: Vec<Vec<(usize, usize)>> = Vec::new();
        for (s, seq) in seqs.iter().enumerate() {
            for (t, l) in seq.labels.iter().enumerate() {
                if let Some(l) = l {
                    labeled.push((s, t));
                    if by_class.len() <= l.index() {
                        by_class.resize(l.index() + 1, Vec::new());
                    }
                    by_class[l.index()].push((s, t));
                }
            }
        }
        let long: Vec<usize> = (0..seqs.len())
            .filter(|&s| seqs[s].frames.len() > 2 * config.triplet.neg_window)
            .collect();
        let mut acc = 0;
        let long_cumulative = long
            .iter()
            .map(|&s| {
                acc += seqs[s].frames.len();
                acc
            })
            .collect();

        let needs_labels = match config.loss {
            MetricLoss::Triplet => config.triplet.sampling == SamplingMode::SupervisedSegment,
            MetricLoss::NPairs | MetricLoss::Combined => true,
        };
        let needs_time = matches!(config.loss, MetricLoss::Combined)
            || (config.loss == MetricLoss::Triplet && config.triplet.sampling == SamplingMode::TimeContrastive);
        let with_pairs = by_class.iter().filter(|c| c.len() >= 2).count();
        let classes = by_class.iter().filter(|c| !c.is_empty()).count();
        if needs_labels && (classes < 2 || with_pairs == 0) {
            return Err(Error::DegenerateDataset(
                "supervised metric learning needs two labels and a label seen twice".into(),
            ));
        }
        if needs_time && long.is_empty() {
            return Err(Error::DegenerateDataset(format!(
                "no sequence longer than {} frames for time-contrastive sampling",
                2 * config.triplet.neg_window
            )));
        }
        Ok(Pools {
            seqs,
            labeled,
            by_class,
            long,
            long_cumulative,
        })
    }

    fn frame(&self, (s, t): (usize, usize)) -> &'a [f64] {
        self.seqs[s].frames[t]
    }

    fn label(&self, (s, t): (usize, usize)) -> SegmentLabel {
        self.seqs[s].labels[t].expect("labeled pool holds labeled frames")
    }

    fn supervised(
        &self,
        encoder: &Encoder,
        config: &EmbeddingTrainConfig,
        weight: f64,
        step: &mut Step<'a>,
        rng: &mut SeededRng,
    ) -> Result<()> {
        let batch: Vec<(usize, usize)> = (0..config.triplet.batch_size)
            .map(|_| self.labeled[rng.random_range(0..self.labeled.len())])
            .collect();
        let labels: Vec<SegmentLabel> = batch.iter().map(|&p| self.label(p)).collect();
        let triplets = if config.triplet.semi_hard {
            let emb = batch
                .iter()
                .map(|&p| encoder.encode_values(self.frame(p)))
                .collect::<Result<Vec<_>>>()?;
            sample_triplets_semi_hard(&labels, &emb, config.triplet.margin, rng)?
        } else {
            match sample_triplets_supervised(&labels, rng) {
                Ok(t) => t,
                // a batch drawn from a multi-label pool can still be single-label
                Err(Error::DegenerateBatch(_)) => Vec::new(),
                Err(e) => return Err(e),
            }
        };
        let ids: Vec<usize> = batch.iter().map(|&p| step.frame(self.frame(p))).collect();
        let scale = weight / triplets.len().max(1) as f64;
        for Triplet {
            anchor,
            positive,
            negative,
        } in triplets
        {
            step.terms.push(Term::Triplet {
                ids: [ids[anchor], ids[positive], ids[negative]],
                weight: scale,
            });
        }
        Ok(())
    }

    fn time_contrastive(&self, config: &EmbeddingTrainConfig, weight: f64, step: &mut Step<'a>, rng: &mut SeededRng) {
        let total = *self.long_cumulative.last().expect("checked in build");
        let n = config.triplet.batch_size;
        let mut made = Vec::with_capacity(n);
        let mut attempts = 0;
        while made.len() < n && attempts < 10 * n {
            attempts += 1;
            let r = rng.random_range(0..total);
            let k = self.long_cumulative.partition_point(|&c| c <= r);
            let s = self.long[k];
            let len = self.seqs[s].frames.len();
            let anchor = rng.random_range(0..len);
            if let Some(t) =
                time_contrastive_triplet(anchor, len, config.triplet.pos_window, config.triplet.neg_window, rng)
            {
                made.push((s, t));
            }
        }
        let scale = weight / made.len().max(1) as f64;
        for (s, t) in made {
            let f = &self.seqs[s].frames;
            let ids = [step.frame(f[t.anchor]), step.frame(f[t.positive]), step.frame(f[t.negative])];
            step.terms.push(Term::Triplet { ids, weight: scale });
        }
    }

    fn npairs(&self, config: &EmbeddingTrainConfig, step: &mut Step<'a>, rng: &mut SeededRng) -> Result<()> {
        let usable: Vec<usize> = (0..self.by_class.len()).filter(|&c| self.by_class[c].len() >= 2).collect();
        let pairs = (config.triplet.batch_size / 2).max(2);
        let mut anchors = Vec::with_capacity(pairs);
        let mut positives = Vec::with_capacity(pairs);
        let mut labels = Vec::with_capacity(pairs);
        for _ in 0..pairs {
            // classes drawn in proportion to their labeled frames
            let a = self.labeled[rng.random_range(0..self.labeled.len())];
            let class = &self.by_class[self.label(a).index()];
            let (a, members) = if class.len() >= 2 {
                (a, class)
            } else {
                let c = &self.by_class[usable[rng.random_range(0..usable.len())]];
                (c[rng.random_range(0..c.len())], c)
            };
            let mut p = members[rng.random_range(0..members.len() - 1)];
            if p == a {
                p = *members.last().unwrap();
            }
            anchors.push(step.frame(self.frame(a)));
            positives.push(step.frame(self.frame(p)));
            labels.push(self.label(a));
        }
        if labels.iter().all(|l| *l == labels[0]) {
            return Ok(());
        }
        step.terms.push(Term::NPairs {
            anchors,
            positives,
            labels,
            scale: config.npairs_scale,
        });
        Ok(())
    }
}

enum Term {
    Triplet {
        ids: [usize; 3],
        weight: f64,
    },
    NPairs {
        anchors: Vec<usize>,
        positives: Vec<usize>,
        labels: Vec<SegmentLabel>,
        scale: f64,
    },
}

/// The frames of one optimizer step and the loss terms defined over them.
#[derive(Default)]
struct Step<'a> {
    frames: Vec<&'a [f64]>,
    terms: Vec<Term>,
}

impl<'a> Step<'a> {
    fn frame(&mut self, f: &'a [f64]) -> usize {
        self.frames.push(f);
        self.frames.len() - 1
    }

    /// Loss and flat parameter gradient of the weighted sum of all terms.
    fn evaluate(&self, encoder: &Encoder, config: &EmbeddingTrainConfig) -> Result<(f64, Vec<f64>)> {
        let mut unit = Vec::with_capacity(self.frames.len());
        let mut raw = Vec::with_capacity(self.frames.len());
        let mut caches: Vec<MlpCache> = Vec::with_capacity(self.frames.len());
        for f in &self.frames {
            let (u, r, c) = encoder.encode_with_cache(f)?;
            unit.push(u);
            raw.push(r);
            caches.push(c);
        }
        let dim = encoder.dim();
        let mut grad_unit = vec![vec![0.0; dim]; self.frames.len()];
        let mut loss = 0.0;
        for term in &self.terms {
            match term {
                Term::Triplet { ids, weight } => {
                    let l = triplet_loss(&unit[ids[0]], &unit[ids[1]], &unit[ids[2]], config.triplet.margin)?;
                    loss += weight * l.loss;
                    if l.loss > 0.0 {
                        for (id, g) in ids.iter().zip([&l.grad_anchor, &l.grad_positive, &l.grad_negative]) {
                            for (acc, gi) in grad_unit[*id].iter_mut().zip(g) {
                                *acc += weight * gi;
                            }
                        }
                    }
                }
                Term::NPairs {
                    anchors,
                    positives,
                    labels,
                    scale,
                } => {
                    let scaled = |ids: &[usize]| -> Vec<Vec<f64>> {
                        ids.iter().map(|&i| unit[i].iter().map(|x| x * scale).collect()).collect()
                    };
                    let l = npairs_loss(&scaled(anchors), &scaled(positives), labels)?;
                    loss += l.loss;
                    for (ids, gs) in [(anchors, &l.grad_anchors), (positives, &l.grad_positives)] {
                        for (&id, g) in ids.iter().zip(gs) {
                            for (acc, gi) in grad_unit[id].iter_mut().zip(g) {
                                *acc += scale * gi;
                            }
                        }
                    }
                }
            }
        }
        let mut grads = encoder.params().zeros_like();
        for i in 0..self.frames.len() {
            if grad_unit[i].iter().all(|&g| g == 0.0) {
                continue;
            }
            let g_raw = l2_normalize_backward(&raw[i], &grad_unit[i], DEFAULT_NORM_EPS);
            mlp_backward_acc(encoder.params(), &caches[i], &g_raw, &mut grads)?;
        }
        Ok((loss, grads.flatten()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_check, norm};

    /// Three well-separated classes in 6-D with per-frame jitter, 4 sequences.
    fn toy(seed: u64) -> (Vec<Vec<Vec<f64>>>, Vec<Vec<Option<SegmentLabel>>>) {
        let mut rng = seeded_rng(seed);
        let mut frames = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..4 {
            let mut f = Vec::new();
            let mut l = Vec::new();
            for t in 0..60 {
                let c = t / 20;
                let v: Vec<f64> = (0..6)
                    .map(|j| if j == c { 1.0 } else { 0.0 } + rng.random_range(-0.6..0.6))
                    .collect();
                f.push(v);
                l.push(Some(SegmentLabel::from_index(c)));
            }
            frames.push(f);
            labels.push(l);
        }
        (frames, labels)
    }

    fn seqs<'a>(frames: &'a [Vec<Vec<f64>>], labels: &[Vec<Option<SegmentLabel>>]) -> Vec<LabeledSequence<'a>> {
        frames
            .iter()
            .zip(labels)
            .map(|(f, l)| LabeledSequence {
                frames: f.iter().map(|v| v.as_slice()).collect(),
                labels: l.clone(),
            })
            .collect()
    }

    fn small_config(loss: MetricLoss) -> EmbeddingTrainConfig {
        EmbeddingTrainConfig {
            loss,
            encoder: EncoderConfig { hidden: vec![16], dim: 4 },
            learning_rate: 1e-2,
            triplet: TripletConfig {
                batch_size: 32,
                ..TripletConfig::default()
            },
            ..EmbeddingTrainConfig::default()
        }
    }

    #[test]
    fn zero_epochs_returns_the_initialization() {
        let (f, l) = toy(0);
        let cfg = small_config(MetricLoss::Triplet);
        let out = train_embedding(&seqs(&f, &l), &cfg, 0, 5).unwrap();
        assert_eq!(out.encoder, Encoder::new(6, &cfg.encoder, 5).unwrap());
        assert!(out.loss_trace.is_empty());
    }

    #[test]
    fn fixed_seed_is_bit_reproducible() {
        let (f, l) = toy(1);
        for loss in [MetricLoss::Triplet, MetricLoss::NPairs, MetricLoss::Combined] {
            let cfg = small_config(loss);
            let a = train_embedding(&seqs(&f, &l), &cfg, 2, 9).unwrap();
            let b = train_embedding(&seqs(&f, &l), &cfg, 2, 9).unwrap();
            assert_eq!(a.encoder.checksum(), b.encoder.checksum());
            assert_eq!(a.loss_trace, b.loss_trace);
            assert!(a.encoder.is_trained());
        }
    }

    #[test]
    fn loss_goes_down() {
        let (f, l) = toy(2);
        for loss in [MetricLoss::Triplet, MetricLoss::NPairs, MetricLoss::Combined] {
            let out = train_embedding(&seqs(&f, &l), &small_config(loss), 30, 3).unwrap();
            let n = out.loss_trace.len() / 10;
            let head: f64 = out.loss_trace[..n].iter().sum::<f64>() / n as f64;
            let tail: f64 = out.loss_trace[out.loss_trace.len() - n..].iter().sum::<f64>() / n as f64;
            assert!(tail <= head, "{loss:?}: {head} -> {tail}");
        }
    }

    #[test]
    fn supervised_mode_without_labels_is_degenerate() {
        let (f, _) = toy(3);
        let s: Vec<LabeledSequence> = f
            .iter()
            .map(|x| LabeledSequence::unlabeled(x.iter().map(|v| v.as_slice()).collect()))
            .collect();
        let err = train_embedding(&s, &small_config(MetricLoss::Triplet), 1, 0).unwrap_err();
        assert!(matches!(err, Error::DegenerateDataset(_)));
        let mut tc = small_config(MetricLoss::Triplet);
        tc.triplet.sampling = SamplingMode::TimeContrastive;
        assert!(train_embedding(&s, &tc, 1, 0).is_ok());
    }

    #[test]
    fn step_gradient_matches_finite_differences() {
        let (f, l) = toy(4);
        let s = seqs(&f, &l);
        for loss in [MetricLoss::Triplet, MetricLoss::NPairs] {
            let cfg = small_config(loss);
            let pools = Pools::build(&s, &cfg).unwrap();
            let mut checked = 0;
            for seed in 0..20 {
                let enc = Encoder::new(6, &EncoderConfig { hidden: vec![8], dim: 3 }, seed).unwrap();
                let mut step = Step::default();
                let mut rng = seeded_rng(seed);
                match loss {
                    MetricLoss::NPairs => pools.npairs(&cfg, &mut step, &mut rng).unwrap(),
                    _ => pools.supervised(&enc, &cfg, 1.0, &mut step, &mut rng).unwrap(),
                }
                // keep only terms that sit away from the hinge kink
                let keep: Vec<bool> = step
                    .terms
                    .iter()
                    .map(|t| match t {
                        Term::Triplet { ids, .. } => {
                            let e: Vec<Vec<f64>> =
                                ids.iter().map(|&i| enc.encode_values(step.frames[i]).unwrap()).collect();
                            triplet_loss(&e[0], &e[1], &e[2], cfg.triplet.margin).unwrap().pre_hinge.abs() > 1e-3
                        }
                        Term::NPairs { .. } => true,
                    })
                    .collect();
                let mut flags = keep.into_iter();
                step.terms.retain(|_| flags.next().unwrap());
                // a frame whose relus are all off sits on the e1 discontinuity
                if step.frames.iter().any(|f| norm(&crate::numerics::mlp_predict(enc.params(), f).unwrap()) < 1e-2) {
                    continue;
                }
                checked += 1;
                let f = |p: &[f64]| {
                    let mut e = enc.clone();
                    e.params_mut().assign_flat(p)?;
                    step.evaluate(&e, &cfg)
                };
                let err = finite_diff_check(f, &enc.params().flatten(), 1e-6).unwrap();
                assert!(err < 1e-4, "{loss:?} seed {seed}: {err}");
            }
            assert!(checked >= 10, "{loss:?}: only {checked} instances away from the discontinuity");
        }
    }
}
