use std::collections::BTreeMap;

use super::Embedder;
use crate::data::Demonstration;
use crate::error::{Error, Result};
use crate::seqmodels::{SegmentLabel, SequenceModel};

/// A label inferred for a frame that has no true label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoLabel {
    pub demo_id: u32,
    pub frame_index: usize,
    pub label: SegmentLabel,
    /// In `(0, 1]`.
    pub confidence: f64,
}

/// Labels every frame of every demonstration that lacks true labels.
pub fn infer_pseudo_labels(embedder: &Embedder, model: &SequenceModel, demos: &[Demonstration]) -> Result<Vec<PseudoLabel>> {
    if !embedder.is_fitted() {
        return Err(Error::Unfitted("encoder"));
    }
    let mut out = Vec::new();
    for d in demos.iter().filter(|d| !d.is_labeled()) {
        let emb = embedder.embed_demo(d)?;
        let (labels, conf) = model.predict(&emb)?;
        for (t, (l, c)) in labels.into_iter().zip(conf).enumerate() {
            if d.frames()[t].label.is_some() {
                continue;
            }
            out.push(PseudoLabel {
                demo_id: d.id,
                frame_index: t,
                label: l,
                confidence: c,
            });
        }
    }
    Ok(out)
}

/// Keeps, per class, the `k` most confident pseudo-labels. Equal confidences
/// are ordered by demo id, then frame index. Output is grouped by class in
/// ascending label order, most confident first.
pub fn select_top_k(pseudo: &[PseudoLabel], k: usize) -> Vec<PseudoLabel> {
    let mut by_class: BTreeMap<SegmentLabel, Vec<PseudoLabel>> = BTreeMap::new();
    for p in pseudo {
        by_class.entry(p.label).or_default().push(*p);
    }
    let mut out = Vec::new();
    for (_, mut v) in by_class {
        v.sort_by(|a, b| {
            b.confidence
                .total_cmp(&a.confidence)
                .then(a.demo_id.cmp(&b.demo_id))
                .then(a.frame_index.cmp(&b.frame_index))
        });
        out.extend(v.into_iter().take(k));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(demo: u32, frame: usize, label: u16, confidence: f64) -> PseudoLabel {
        PseudoLabel {
            demo_id: demo,
            frame_index: frame,
            label: SegmentLabel::new(label).unwrap(),
            confidence,
        }
    }

    #[test]
    fn under_full_class_keeps_everything() {
        let v = vec![p(0, 0, 1, 0.5), p(0, 1, 1, 0.7), p(1, 0, 1, 0.2)];
        assert_eq!(select_top_k(&v, 5).len(), 3);
    }

    #[test]
    fn keeps_the_most_confident() {
        let v: Vec<PseudoLabel> = (0..10).map(|i| p(0, i, 2, i as f64 / 10.0)).collect();
        let top = select_top_k(&v, 2);
        assert_eq!(top.iter().map(|x| x.frame_index).collect::<Vec<_>>(), vec![9, 8]);
    }

    #[test]
    fn ties_break_by_demo_then_frame() {
        let v = vec![p(3, 0, 1, 0.5), p(1, 7, 1, 0.5), p(1, 2, 1, 0.5)];
        let top = select_top_k(&v, 2);
        assert_eq!((top[0].demo_id, top[0].frame_index), (1, 2));
        assert_eq!((top[1].demo_id, top[1].frame_index), (1, 7));
    }

    proptest! {
        #[test]
        fn cardinality_and_sorted_prefix(
            items in proptest::collection::vec((0u32..4, 0usize..50, 1u16..5, 1u32..=100), 0..200),
            k in 1usize..20,
        ) {
            let pseudo: Vec<PseudoLabel> = items.iter().map(|&(d, f, l, c)| p(d, f, l, c as f64 / 100.0)).collect();
            let top = select_top_k(&pseudo, k);
            let mut expected = 0;
            for c in 1u16..5 {
                let label = SegmentLabel::new(c).unwrap();
                let mut all: Vec<f64> = pseudo.iter().filter(|x| x.label == label).map(|x| x.confidence).collect();
                all.sort_by(|a, b| b.total_cmp(a));
                let kept: Vec<f64> = top.iter().filter(|x| x.label == label).map(|x| x.confidence).collect();
                prop_assert_eq!(kept.len(), k.min(all.len()));
                prop_assert_eq!(&kept[..], &all[..kept.len()]);
                expected += k.min(all.len());
            }
            prop_assert_eq!(top.len(), expected);
        }
    }
}
