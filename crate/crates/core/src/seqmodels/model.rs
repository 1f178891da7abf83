use std::path::Path;

use super::birnn::{rnn_predict_sequence, rnn_train, BiRnn, RnnConfig};
use super::crf::{crf_marginals, crf_train, crf_viterbi, CrfConfig, LinearChainCrf};
use super::hmm::{hmm_em_fit, hmm_forward_backward, hmm_viterbi, GaussianHmm, HmmConfig, Posteriors};
use super::hsmm::{hsmm_em_fit, hsmm_forward_backward, hsmm_viterbi, Hsmm, HsmmConfig};
use super::knn::{KnnClassifier, DEFAULT_K};
use super::mapping::greedy_state_label_map;
use super::SegmentLabel;
use crate::archive::Archive;
use crate::embedding::LabeledSequence;
use crate::error::{Error, Result};
use crate::numerics::{argmax, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SeqModelKind {
    Knn,
    Hmm,
    Hsmm,
    Crf,
    Rnn,
}

impl SeqModelKind {
    pub const ALL: [SeqModelKind; 5] = [
        SeqModelKind::Knn,
        SeqModelKind::Hmm,
        SeqModelKind::Hsmm,
        SeqModelKind::Crf,
        SeqModelKind::Rnn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SeqModelKind::Knn => "knn",
            SeqModelKind::Hmm => "hmm",
            SeqModelKind::Hsmm => "hsmm",
            SeqModelKind::Crf => "crf",
            SeqModelKind::Rnn => "rnn",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s.to_ascii_lowercase())
    }
}

/// How HMM/HSMM frame labels are read off the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoding {
    /// Mapped label of the Viterbi state.
    Viterbi,
    /// Label with the largest aggregated state posterior.
    Posterior,
}

impl Decoding {
    pub fn name(self) -> &'static str {
        match self {
            Decoding::Viterbi => "viterbi",
            Decoding::Posterior => "posterior",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "viterbi" => Some(Decoding::Viterbi),
            "posterior" => Some(Decoding::Posterior),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqModelConfig {
    pub kind: SeqModelKind,
    pub knn_k: usize,
    pub hmm: HmmConfig,
    pub hsmm: HsmmConfig,
    pub crf: CrfConfig,
    pub rnn: RnnConfig,
    pub rnn_epochs: usize,
    pub decoding: Decoding,
}

impl SeqModelConfig {
    pub fn new(kind: SeqModelKind) -> Self {
        SeqModelConfig {
            kind,
            knn_k: DEFAULT_K,
            hmm: HmmConfig::default(),
            hsmm: HsmmConfig::default(),
            crf: CrfConfig::default(),
            rnn: RnnConfig::default(),
            rnn_epochs: 30,
            decoding: Decoding::Viterbi,
        }
    }
}

impl Default for SeqModelConfig {
    fn default() -> Self {
        SeqModelConfig::new(SeqModelKind::Rnn)
    }
}

/// A trained segment-inference model of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum SequenceModel {
    Knn(KnnClassifier),
    Hmm {
        model: GaussianHmm,
        map: Vec<SegmentLabel>,
        decoding: Decoding,
    },
    Hsmm {
        model: Hsmm,
        map: Vec<SegmentLabel>,
        decoding: Decoding,
    },
    Crf(LinearChainCrf),
    Rnn(BiRnn),
}

/// Maximal runs of consecutive labeled frames.
fn labeled_runs<'a>(seq: &LabeledSequence<'a>) -> Vec<(Vec<&'a [f64]>, Vec<SegmentLabel>)> {
    let mut runs = Vec::new();
    let mut cur: (Vec<&[f64]>, Vec<SegmentLabel>) = (Vec::new(), Vec::new());
    for (x, l) in seq.frames.iter().zip(&seq.labels) {
        match l {
            Some(l) => {
                cur.0.push(x);
                cur.1.push(*l);
            }
            None if !cur.0.is_empty() => runs.push(std::mem::take(&mut cur)),
            None => {}
        }
    }
    if !cur.0.is_empty() {
        runs.push(cur);
    }
    runs
}

impl SequenceModel {
    /// Fits the configured model. KNN, CRF and RNN learn from labeled frames
    /// only; HMM and HSMM are fitted on every frame and then mapped to labels
    /// through the labeled ones.
    pub fn train(seqs: &[LabeledSequence<'_>], classes: usize, config: &SeqModelConfig, seed: u64) -> Result<Self> {
        for s in seqs {
            if s.frames.len() != s.labels.len() {
                return Err(Error::shape("one label slot per frame required"));
            }
            if let Some(l) = s.labels.iter().flatten().find(|l| l.index() >= classes) {
                return Err(Error::InvalidArgument(format!("label {} exceeds {classes} classes", l.get())));
            }
        }
        let all: Vec<Vec<&[f64]>> = seqs.iter().filter(|s| !s.frames.is_empty()).map(|s| s.frames.clone()).collect();
        if all.is_empty() {
            return Err(Error::Empty("sequence-model training set"));
        }
        match config.kind {
            SeqModelKind::Knn => {
                let (mut pts, mut labels) = (Vec::new(), Vec::new());
                for s in seqs {
                    for (x, l) in s.frames.iter().zip(&s.labels) {
                        if let Some(l) = l {
                            pts.push(x.to_vec());
                            labels.push(*l);
                        }
                    }
                }
                if pts.is_empty() {
                    return Err(Error::DegenerateDataset("no labeled frames for knn".into()));
                }
                let k = config.knn_k.min(pts.len());
                Ok(SequenceModel::Knn(KnnClassifier::new(pts, labels, k)?))
            }
            SeqModelKind::Hmm => {
                let fit = hmm_em_fit(&all, &config.hmm, seed)?;
                let paths = all.iter().map(|s| hmm_viterbi(&fit.model, s)).collect::<Result<Vec<_>>>()?;
                let map = state_map(seqs, &paths, fit.model.num_states())?;
                Ok(SequenceModel::Hmm {
                    model: fit.model,
                    map,
                    decoding: config.decoding,
                })
            }
            SeqModelKind::Hsmm => {
                let fit = hsmm_em_fit(&all, &config.hsmm, seed)?;
                let paths = all.iter().map(|s| hsmm_viterbi(&fit.model, s)).collect::<Result<Vec<_>>>()?;
                let map = state_map(seqs, &paths, fit.model.num_states())?;
                Ok(SequenceModel::Hsmm {
                    model: fit.model,
                    map,
                    decoding: config.decoding,
                })
            }
            SeqModelKind::Crf => {
                let runs: Vec<_> = seqs.iter().flat_map(labeled_runs).collect();
                if runs.is_empty() {
                    return Err(Error::DegenerateDataset("no labeled frames for crf".into()));
                }
                Ok(SequenceModel::Crf(crf_train(&runs, classes, &config.crf, seed)?.model))
            }
            SeqModelKind::Rnn => {
                let data: Vec<_> = seqs.iter().map(|s| (s.frames.clone(), s.labels.clone())).collect();
                Ok(SequenceModel::Rnn(
                    rnn_train(&data, classes, &config.rnn, config.rnn_epochs, seed)?.model,
                ))
            }
        }
    }

    pub fn kind(&self) -> SeqModelKind {
        match self {
            SequenceModel::Knn(_) => SeqModelKind::Knn,
            SequenceModel::Hmm { .. } => SeqModelKind::Hmm,
            SequenceModel::Hsmm { .. } => SeqModelKind::Hsmm,
            SequenceModel::Crf(_) => SeqModelKind::Crf,
            SequenceModel::Rnn(_) => SeqModelKind::Rnn,
        }
    }

    /// Per-frame labels and confidences in `(0, 1]`.
    pub fn predict<R: AsRef<[f64]>>(&self, seq: &[R]) -> Result<(Vec<SegmentLabel>, Vec<f64>)> {
        if seq.is_empty() {
            return Ok((Vec::new(), Vec::new()));
        }
        match self {
            SequenceModel::Knn(knn) => seq.iter().map(|x| knn.predict(x.as_ref())).collect::<Result<Vec<_>>>().map(|v| v.into_iter().unzip()),
            SequenceModel::Hmm { model, map, decoding } => {
                let post = hmm_forward_backward(model, seq)?;
                let path = match decoding {
                    Decoding::Viterbi => Some(hmm_viterbi(model, seq)?),
                    Decoding::Posterior => None,
                };
                Ok(mapped_prediction(&post, path.as_deref(), map))
            }
            SequenceModel::Hsmm { model, map, decoding } => {
                let post = hsmm_forward_backward(model, seq)?;
                let path = match decoding {
                    Decoding::Viterbi => Some(hsmm_viterbi(model, seq)?),
                    Decoding::Posterior => None,
                };
                Ok(mapped_prediction(&post, path.as_deref(), map))
            }
            SequenceModel::Crf(crf) => {
                let labels = crf_viterbi(crf, seq)?;
                let marg = crf_marginals(crf, seq)?;
                let conf = labels.iter().zip(&marg).map(|(l, m)| m[l.index()].max(f64::MIN_POSITIVE)).collect();
                Ok((labels, conf))
            }
            SequenceModel::Rnn(rnn) => rnn_predict_sequence(rnn, seq),
        }
    }

    pub fn to_archive(&self) -> Archive {
        let mut a = match self {
            SequenceModel::Knn(knn) => {
                let mut a = Archive::new("knn");
                a.set_meta("k", knn.k());
                a.put("points", Matrix::from_rows(knn.points()).expect("finite points"));
                let labels: Vec<f64> = knn.labels().iter().map(|l| l.get() as f64).collect();
                a.put_vec("labels", &labels);
                a
            }
            SequenceModel::Hmm { model, map, decoding } => with_map(model.to_archive(), map, *decoding),
            SequenceModel::Hsmm { model, map, decoding } => with_map(model.to_archive(), map, *decoding),
            SequenceModel::Crf(crf) => crf.to_archive(),
            SequenceModel::Rnn(rnn) => rnn.to_archive(),
        };
        a.set_meta("model", self.kind().name());
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        let read_map = |a: &Archive| -> Result<(Vec<SegmentLabel>, Decoding)> {
            let map = a
                .vector("state_map")?
                .iter()
                .map(|&v| SegmentLabel::new(v as u16).filter(|l| l.get() as f64 == v))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::ModelInvalid("bad state map".into()))?;
            let d = a.meta_str("decoding")?;
            let decoding = Decoding::from_name(d).ok_or_else(|| Error::ModelInvalid(format!("unknown decoding `{d}`")))?;
            Ok((map, decoding))
        };
        match a.kind.as_str() {
            "knn" => {
                let pts = a.tensor("points")?;
                let points = (0..pts.rows()).map(|r| pts.row(r).to_vec()).collect();
                let labels = a
                    .vector("labels")?
                    .iter()
                    .map(|&v| SegmentLabel::new(v as u16))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| Error::ModelInvalid("bad knn label".into()))?;
                Ok(SequenceModel::Knn(KnnClassifier::new(points, labels, a.meta_parse("k")?)?))
            }
            "hmm" => {
                let model = GaussianHmm::from_archive(a)?;
                let (map, decoding) = read_map(a)?;
                check_map(&map, model.num_states())?;
                Ok(SequenceModel::Hmm { model, map, decoding })
            }
            "hsmm" => {
                let model = Hsmm::from_archive(a)?;
                let (map, decoding) = read_map(a)?;
                check_map(&map, model.num_states())?;
                Ok(SequenceModel::Hsmm { model, map, decoding })
            }
            "crf" => Ok(SequenceModel::Crf(LinearChainCrf::from_archive(a)?)),
            "birnn" => Ok(SequenceModel::Rnn(BiRnn::from_archive(a)?)),
            other => Err(Error::ModelInvalid(format!("unknown sequence model `{other}`"))),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        SequenceModel::from_archive(&Archive::load(path)?)
    }
}

fn state_map(seqs: &[LabeledSequence<'_>], paths: &[Vec<usize>], k: usize) -> Result<Vec<SegmentLabel>> {
    let labels: Vec<Vec<Option<SegmentLabel>>> =
        seqs.iter().filter(|s| !s.frames.is_empty()).map(|s| s.labels.clone()).collect();
    greedy_state_label_map(paths, &labels, k)
}

fn check_map(map: &[SegmentLabel], k: usize) -> Result<()> {
    if map.len() != k {
        return Err(Error::ModelInvalid("state map length differs from state count".into()));
    }
    Ok(())
}

fn with_map(mut a: Archive, map: &[SegmentLabel], decoding: Decoding) -> Archive {
    let v: Vec<f64> = map.iter().map(|l| l.get() as f64).collect();
    a.put_vec("state_map", &v);
    a.set_meta("decoding", decoding.name());
    a
}

/// Labels from a state path (or posterior argmax when `path` is `None`);
/// confidence is the posterior mass of all states mapped to the chosen label.
fn mapped_prediction(post: &Posteriors, path: Option<&[usize]>, map: &[SegmentLabel]) -> (Vec<SegmentLabel>, Vec<f64>) {
    let classes = map.iter().map(|l| l.index() + 1).max().unwrap_or(1);
    let mut labels = Vec::with_capacity(post.gamma.len());
    let mut conf = Vec::with_capacity(post.gamma.len());
    for (t, g) in post.gamma.iter().enumerate() {
        let mut mass = vec![0.0; classes];
        for (s, p) in g.iter().enumerate() {
            mass[map[s].index()] += p;
        }
        let l = match path {
            Some(p) => map[p[t]],
            None => SegmentLabel::from_index(argmax(&mass)),
        };
        labels.push(l);
        conf.push(mass[l.index()].clamp(f64::MIN_POSITIVE, 1.0));
    }
    (labels, conf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::seeded_rng;
    use rand::Rng;

    /// Three well-separated classes in a cyclic 1-2-3 pattern.
    fn toy(rng: &mut impl Rng, seqs: usize) -> Vec<(Vec<Vec<f64>>, Vec<SegmentLabel>)> {
        let centers = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        (0..seqs)
            .map(|_| {
                let (mut xs, mut ls) = (Vec::new(), Vec::new());
                for seg in 0..9 {
                    let c = seg % 3;
                    for _ in 0..rng.random_range(4..9) {
                        xs.push(centers[c].iter().map(|m| m + rng.random_range(-0.1..0.1)).collect());
                        ls.push(SegmentLabel::from_index(c));
                    }
                }
                (xs, ls)
            })
            .collect()
    }

    fn config(kind: SeqModelKind) -> SeqModelConfig {
        let mut c = SeqModelConfig::new(kind);
        c.hmm.states = 3;
        c.hsmm.states = 3;
        c.hsmm.max_duration = 12;
        c.hsmm.initial_rate = 5.0;
        c.rnn.hidden = 8;
        c.rnn.stride = 16;
        c.rnn.learning_rate = 0.02;
        c.rnn_epochs = 60;
        c
    }

    #[test]
    fn every_kind_fits_separable_data_and_round_trips() {
        let data = toy(&mut seeded_rng(0), 4);
        let seqs: Vec<LabeledSequence> = data
            .iter()
            .map(|(xs, ls)| LabeledSequence {
                frames: xs.iter().map(|x| x.as_slice()).collect(),
                labels: ls.iter().map(|&l| Some(l)).collect(),
            })
            .collect();
        for kind in SeqModelKind::ALL {
            let model = SequenceModel::train(&seqs, 3, &config(kind), 1).unwrap();
            let (mut hit, mut n) = (0, 0);
            for (xs, ls) in &data {
                let (pred, conf) = model.predict(xs).unwrap();
                assert!(conf.iter().all(|&c| c > 0.0 && c <= 1.0), "{kind:?}");
                hit += pred.iter().zip(ls).filter(|(a, b)| a == b).count();
                n += ls.len();
            }
            assert!(hit as f64 / n as f64 > 0.95, "{kind:?}: {hit}/{n}");
            let text = model.to_archive().to_text();
            let back = SequenceModel::from_archive(&Archive::from_text(&text, Path::new("m")).unwrap()).unwrap();
            assert_eq!(back, model, "{kind:?}");
        }
    }

    #[test]
    fn labeled_runs_split_at_gaps() {
        let xs = [[0.0], [1.0], [2.0], [3.0]];
        let l = SegmentLabel::new(1);
        let seq = LabeledSequence {
            frames: xs.iter().map(|x| x.as_slice()).collect(),
            labels: vec![l, None, l, l],
        };
        let runs = labeled_runs(&seq);
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[1].0.len(), 2);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in SeqModelKind::ALL {
            assert_eq!(SeqModelKind::from_name(k.name()), Some(k));
        }
        assert_eq!(SeqModelKind::from_name("lstm"), None);
    }
}
