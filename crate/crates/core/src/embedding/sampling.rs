use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::squared_distance;
use crate::seqmodels::SegmentLabel;

/// Indices of an (anchor, positive, negative) triple into some frame list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub positive: usize,
    pub negative: usize,
}

fn distinct_labels(labels: &[SegmentLabel]) -> usize {
    let mut v = labels.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

/// One triplet per anchor that has a same-label partner: the positive is drawn
/// uniformly among the other frames of the anchor's label, the negative
/// uniformly among frames of any other label.
pub fn sample_triplets_supervised<R: Rng + ?Sized>(labels: &[SegmentLabel], rng: &mut R) -> Result<Vec<Triplet>> {
    if distinct_labels(labels) < 2 {
        return Err(Error::DegenerateBatch("supervised sampling needs at least two labels".into()));
    }
    let mut out = Vec::with_capacity(labels.len());
    let mut skipped = 0;
    for (a, &la) in labels.iter().enumerate() {
        let positives: Vec<usize> = (0..labels.len()).filter(|&j| j != a && labels[j] == la).collect();
        if positives.is_empty() {
            skipped += 1;
            continue;
        }
        let negatives: Vec<usize> = (0..labels.len()).filter(|&j| labels[j] != la).collect();
        out.push(Triplet {
            anchor: a,
            positive: positives[rng.random_range(0..positives.len())],
            negative: negatives[rng.random_range(0..negatives.len())],
        });
    }
    if out.is_empty() {
        log::warn!("no anchor in the batch has a same-label positive; no triplets emitted");
    } else if skipped > 0 {
        log::debug!("{skipped} anchors without a positive were skipped");
    }
    Ok(out)
}

/// Like [`sample_triplets_supervised`] but each negative is the closest
/// other-label frame that is still farther than the positive and within the
/// margin band; anchors without such a frame fall back to a uniform negative.
pub fn sample_triplets_semi_hard<R: Rng + ?Sized, E: AsRef<[f64]>>(
    labels: &[SegmentLabel],
    embeddings: &[E],
    margin: f64,
    rng: &mut R,
) -> Result<Vec<Triplet>> {
    if embeddings.len() != labels.len() {
        return Err(Error::shape("one embedding per label required"));
    }
    let mut triplets = sample_triplets_supervised(labels, rng)?;
    for t in &mut triplets {
        let a = embeddings[t.anchor].as_ref();
        let dp = squared_distance(a, embeddings[t.positive].as_ref());
        let mut best: Option<(f64, usize)> = None;
        for (j, l) in labels.iter().enumerate() {
            if *l == labels[t.anchor] {
                continue;
            }
            let dn = squared_distance(a, embeddings[j].as_ref());
            if dn > dp && dn < dp + margin && best.is_none_or(|(d, _)| dn < d) {
                best = Some((dn, j));
            }
        }
        if let Some((_, j)) = best {
            t.negative = j;
        }
    }
    Ok(triplets)
}

/// Time-contrastive triplet for one anchor of a sequence of length `len`:
/// positive within `±pos_window` (excluding the anchor), negative strictly
/// outside `±neg_window`. `None` when either set is empty.
pub fn time_contrastive_triplet<R: Rng + ?Sized>(
    anchor: usize,
    len: usize,
    pos_window: usize,
    neg_window: usize,
    rng: &mut R,
) -> Option<Triplet> {
    if anchor >= len {
        return None;
    }
    let lo = anchor.saturating_sub(pos_window);
    let hi = (anchor + pos_window).min(len - 1);
    let pos_count = hi - lo; // window size minus the anchor itself
    if pos_count == 0 {
        return None;
    }
    let mut positive = lo + rng.random_range(0..pos_count);
    if positive >= anchor {
        positive += 1;
    }
    // negatives: [0, anchor - neg_window) ∪ (anchor + neg_window, len)
    let left = anchor.saturating_sub(neg_window);
    let right_start = anchor + neg_window + 1;
    let right = len.saturating_sub(right_start);
    if left + right == 0 {
        return None;
    }
    let k = rng.random_range(0..left + right);
    let negative = if k < left { k } else { right_start + (k - left) };
    Some(Triplet {
        anchor,
        positive,
        negative,
    })
}

/// `count` time-contrastive triplets with uniformly drawn anchors, all inside
/// one sequence of length `len`.
pub fn sample_triplets_time_contrastive<R: Rng + ?Sized>(
    len: usize,
    count: usize,
    pos_window: usize,
    neg_window: usize,
    rng: &mut R,
) -> Result<Vec<Triplet>> {
    check_windows(pos_window, neg_window)?;
    if len <= 2 * neg_window {
        return Err(Error::DegenerateBatch(format!(
            "sequence of {len} frames is too short for a negative window of {neg_window}"
        )));
    }
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < 10 * count + 10 {
        attempts += 1;
        let anchor = rng.random_range(0..len);
        if let Some(t) = time_contrastive_triplet(anchor, len, pos_window, neg_window, rng) {
            out.push(t);
        }
    }
    Ok(out)
}

pub(crate) fn check_windows(pos_window: usize, neg_window: usize) -> Result<()> {
    if pos_window == 0 || neg_window <= pos_window {
        return Err(Error::InvalidArgument(format!(
            "windows must satisfy 0 < pos ({pos_window}) < neg ({neg_window})"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::seeded_rng;
    use std::collections::HashSet;

    fn labels(v: &[u16]) -> Vec<SegmentLabel> {
        v.iter().map(|&x| SegmentLabel::new(x).unwrap()).collect()
    }

    #[test]
    fn two_ones_and_a_two() {
        let got: HashSet<Triplet> = sample_triplets_supervised(&labels(&[1, 1, 2]), &mut seeded_rng(0))
            .unwrap()
            .into_iter()
            .collect();
        let want: HashSet<Triplet> = [
            Triplet { anchor: 0, positive: 1, negative: 2 },
            Triplet { anchor: 1, positive: 0, negative: 2 },
        ]
        .into_iter()
        .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn one_frame_per_label_gives_no_triplets() {
        let t = sample_triplets_supervised(&labels(&[1, 2, 3]), &mut seeded_rng(0)).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn single_label_batch_is_degenerate() {
        assert!(matches!(
            sample_triplets_supervised(&labels(&[4, 4, 4]), &mut seeded_rng(0)),
            Err(Error::DegenerateBatch(_))
        ));
    }

    #[test]
    fn supervised_triplets_respect_labels() {
        let mut rng = seeded_rng(4);
        let batch: Vec<SegmentLabel> = (0..128).map(|_| SegmentLabel::from_index(rng.random_range(0..11))).collect();
        let ts = sample_triplets_supervised(&batch, &mut rng).unwrap();
        assert!(!ts.is_empty());
        for t in ts {
            assert_ne!(t.anchor, t.positive);
            assert_eq!(batch[t.anchor], batch[t.positive]);
            assert_ne!(batch[t.anchor], batch[t.negative]);
        }
    }

    #[test]
    fn semi_hard_prefers_band_negatives() {
        let l = labels(&[1, 1, 2, 2]);
        let e = vec![vec![0.0], vec![0.3], vec![0.35], vec![5.0]];
        // d(a0,p1)=0.09; neg 2 at 0.1225 lies in (0.09, 0.29)
        for seed in 0..5 {
            let ts = sample_triplets_semi_hard(&l, &e, 0.2, &mut seeded_rng(seed)).unwrap();
            let t0 = ts.iter().find(|t| t.anchor == 0).unwrap();
            assert_eq!(t0.negative, 2);
        }
    }

    #[test]
    fn anchor_fifty_windows() {
        let mut rng = seeded_rng(1);
        for _ in 0..500 {
            let t = time_contrastive_triplet(50, 200, 6, 12, &mut rng).unwrap();
            assert!((44..=56).contains(&t.positive) && t.positive != 50);
            assert!(!(38..=62).contains(&t.negative));
        }
    }

    #[test]
    fn short_sequence_is_degenerate() {
        assert!(matches!(
            sample_triplets_time_contrastive(24, 10, 6, 12, &mut seeded_rng(0)),
            Err(Error::DegenerateBatch(_))
        ));
        assert!(sample_triplets_time_contrastive(100, 10, 12, 12, &mut seeded_rng(0)).is_err());
    }

    #[test]
    fn thousand_triplets_on_two_hundred_frames() {
        let ts = sample_triplets_time_contrastive(200, 1000, 6, 12, &mut seeded_rng(2)).unwrap();
        assert_eq!(ts.len(), 1000);
        for t in ts {
            let dp = t.positive.abs_diff(t.anchor);
            let dn = t.negative.abs_diff(t.anchor);
            assert!(dp >= 1 && dp <= 6);
            assert!(dn > 12);
            assert!(t.negative < 200 && t.positive < 200);
        }
    }
}
