use crate::error::{Error, Result};
use crate::numerics::{dot, softmax, squared_distance};
use crate::seqmodels::SegmentLabel;

pub const DEFAULT_MARGIN: f64 = 0.2;

/// Hinge triplet loss and its gradients with respect to the three embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletLoss {
    pub loss: f64,
    /// `‖a − p‖² − ‖a − n‖² + margin`, before the hinge.
    pub pre_hinge: f64,
    pub grad_anchor: Vec<f64>,
    pub grad_positive: Vec<f64>,
    pub grad_negative: Vec<f64>,
}

/// `max(0, ‖a − p‖² − ‖a − n‖² + margin)` on squared Euclidean distances.
pub fn triplet_loss(anchor: &[f64], positive: &[f64], negative: &[f64], margin: f64) -> Result<TripletLoss> {
    let d = anchor.len();
    if positive.len() != d || negative.len() != d {
        return Err(Error::shape(format!(
            "triplet widths differ: {d}, {}, {}",
            positive.len(),
            negative.len()
        )));
    }
    let pre = squared_distance(anchor, positive) - squared_distance(anchor, negative) + margin;
    if pre <= 0.0 {
        return Ok(TripletLoss {
            loss: 0.0,
            pre_hinge: pre,
            grad_anchor: vec![0.0; d],
            grad_positive: vec![0.0; d],
            grad_negative: vec![0.0; d],
        });
    }
    let mut ga = vec![0.0; d];
    let mut gp = vec![0.0; d];
    let mut gn = vec![0.0; d];
    for i in 0..d {
        ga[i] = 2.0 * (negative[i] - positive[i]);
        gp[i] = -2.0 * (anchor[i] - positive[i]);
        gn[i] = 2.0 * (anchor[i] - negative[i]);
    }
    Ok(TripletLoss {
        loss: pre,
        pre_hinge: pre,
        grad_anchor: ga,
        grad_positive: gp,
        grad_negative: gn,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NPairsLoss {
    pub loss: f64,
    pub grad_anchors: Vec<Vec<f64>>,
    pub grad_positives: Vec<Vec<f64>>,
}

/// Multi-class N-pairs loss.
///
/// Anchor `i` scores every positive `j` by `aᵢ · pⱼ`; the softmax over those
/// scores is matched by cross-entropy against the uniform distribution over
/// positives sharing anchor `i`'s label. The result is averaged over anchors.
pub fn npairs_loss<A: AsRef<[f64]>>(anchors: &[A], positives: &[A], labels: &[SegmentLabel]) -> Result<NPairsLoss> {
    let n = anchors.len();
    if positives.len() != n || labels.len() != n {
        return Err(Error::shape("anchors, positives and labels must have equal counts"));
    }
    if n < 2 {
        return Err(Error::DegenerateBatch("n-pairs needs at least 2 pairs".into()));
    }
    if labels.iter().all(|l| *l == labels[0]) {
        return Err(Error::DegenerateBatch("every pair shares one label".into()));
    }
    let d = anchors[0].as_ref().len();
    if anchors.iter().chain(positives).any(|v| v.as_ref().len() != d) {
        return Err(Error::shape("n-pairs embeddings differ in width"));
    }

    let mut loss = 0.0;
    let mut ga = vec![vec![0.0; d]; n];
    let mut gp = vec![vec![0.0; d]; n];
    let inv_n = 1.0 / n as f64;
    for i in 0..n {
        let a = anchors[i].as_ref();
        let logits: Vec<f64> = positives.iter().map(|p| dot(a, p.as_ref())).collect();
        let probs = softmax(&logits);
        let same = labels.iter().filter(|l| **l == labels[i]).count() as f64;
        for j in 0..n {
            let target = if labels[j] == labels[i] { 1.0 / same } else { 0.0 };
            if target > 0.0 {
                loss -= target * probs[j].max(f64::MIN_POSITIVE).ln() * inv_n;
            }
            let g = (probs[j] - target) * inv_n;
            if g != 0.0 {
                let p = positives[j].as_ref();
                for k in 0..d {
                    ga[i][k] += g * p[k];
                    gp[j][k] += g * a[k];
                }
            }
        }
    }
    Ok(NPairsLoss {
        loss,
        grad_anchors: ga,
        grad_positives: gp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_check, seeded_rng};
    use proptest::prelude::*;
    use rand::Rng;

    /// Unit vector at `cos θ = c` from `e1`, on the side given by `sign`.
    fn at_cos(c: f64, sign: f64) -> Vec<f64> {
        vec![c, sign * (1.0 - c * c).sqrt()]
    }

    #[test]
    fn inactive_hinge_gives_zero() {
        let a = vec![1.0, 0.0];
        let n = at_cos(0.5, 1.0); // ‖a − n‖² = 2 − 2·0.5 = 1
        let l = triplet_loss(&a, &a, &n, 0.2).unwrap();
        assert_eq!(l.loss, 0.0);
        assert!(l.grad_anchor.iter().chain(&l.grad_negative).all(|&g| g == 0.0));
    }

    #[test]
    fn coincident_triplet_costs_the_margin() {
        let a = vec![0.0, 1.0];
        assert!((triplet_loss(&a, &a, &a, 0.2).unwrap().loss - 0.2).abs() < 1e-15);
    }

    #[test]
    fn direct_substitution() {
        let a = vec![1.0, 0.0];
        let p = at_cos(0.75, 1.0); // d⁺² = 0.5
        let n = at_cos(0.85, -1.0); // d⁻² = 0.3
        let l = triplet_loss(&a, &p, &n, 0.2).unwrap();
        assert!((l.loss - 0.4).abs() < 1e-12, "{}", l.loss);
    }

    #[test]
    fn triplet_width_mismatch() {
        assert!(matches!(
            triplet_loss(&[1.0], &[1.0, 0.0], &[0.0], 0.2),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn saturated_npairs_is_near_zero() {
        let a = vec![vec![10.0, 0.0], vec![0.0, 10.0]];
        let p = vec![vec![10.0, 0.0], vec![0.0, 10.0]];
        let labels = [SegmentLabel::from_index(0), SegmentLabel::from_index(1)];
        assert!(npairs_loss(&a, &p, &labels).unwrap().loss < 1e-40);
    }

    #[test]
    fn uniform_npairs_is_ln_two() {
        let a = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        let p = vec![vec![0.0, 1.0], vec![0.0, -1.0]];
        let labels = [SegmentLabel::from_index(0), SegmentLabel::from_index(1)];
        let l = npairs_loss(&a, &p, &labels).unwrap();
        assert!((l.loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn single_label_batch_is_degenerate() {
        let a = vec![vec![1.0], vec![0.5]];
        let labels = [SegmentLabel::from_index(2); 2];
        assert!(matches!(npairs_loss(&a, &a, &labels), Err(Error::DegenerateBatch(_))));
    }

    #[test]
    fn npairs_gradient_matches_finite_differences() {
        for seed in 0..20 {
            let mut rng = seeded_rng(seed);
            let (n, d) = (4, 3);
            let labels: Vec<SegmentLabel> = [0, 1, 0, 2].iter().map(|&i| SegmentLabel::from_index(i)).collect();
            let flat: Vec<f64> = (0..2 * n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let f = |p: &[f64]| {
                let rows: Vec<&[f64]> = p.chunks(d).collect();
                let l = npairs_loss(&rows[..n], &rows[n..], &labels)?;
                let grad = l.grad_anchors.concat().into_iter().chain(l.grad_positives.concat()).collect();
                Ok((l.loss, grad))
            };
            let err = finite_diff_check(f, &flat, 1e-6).unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    proptest! {
        #[test]
        fn triplet_loss_nonnegative_and_exact_zero_region(
            v in proptest::collection::vec(-1.0f64..1.0, 9),
            margin in 0.01f64..1.0,
        ) {
            let (a, p, n) = (&v[0..3], &v[3..6], &v[6..9]);
            let l = triplet_loss(a, p, n, margin).unwrap();
            prop_assert!(l.loss >= 0.0);
            if squared_distance(a, p) + margin <= squared_distance(a, n) {
                prop_assert_eq!(l.loss, 0.0);
            }
        }

        #[test]
        fn triplet_gradient_matches_finite_differences_off_the_kink(
            v in proptest::collection::vec(-1.0f64..1.0, 12),
        ) {
            let margin = 0.2;
            let pre = {
                let (a, p, n) = (&v[0..4], &v[4..8], &v[8..12]);
                triplet_loss(a, p, n, margin).unwrap().pre_hinge
            };
            prop_assume!(pre.abs() > 1e-3);
            let f = |x: &[f64]| {
                let l = triplet_loss(&x[0..4], &x[4..8], &x[8..12], margin)?;
                Ok((l.loss, [l.grad_anchor, l.grad_positive, l.grad_negative].concat()))
            };
            let err = finite_diff_check(f, &v, 1e-5).unwrap();
            prop_assert!(err < 1e-4, "{}", err);
        }
    }
}
