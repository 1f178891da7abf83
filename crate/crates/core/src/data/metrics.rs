use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::seqmodels::SegmentLabel;

fn check_lengths(pred: &[SegmentLabel], truth: &[SegmentLabel]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} ground-truth labels",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("label sequence"));
    }
    Ok(())
}

/// Fraction of frames whose predicted label equals the ground truth.
pub fn segmentation_accuracy(pred: &[SegmentLabel], truth: &[SegmentLabel]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Row-normalized confusion matrix; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
    pub normalized: Matrix,
    /// `true` for classes that never occur in the ground truth (their row is all zero).
    pub absent: Vec<bool>,
}

impl ConfusionMatrix {
    /// Mean of the diagonal over occurring classes.
    pub fn diagonal_mean(&self) -> f64 {
        let present: Vec<usize> = (0..self.absent.len()).filter(|&c| !self.absent[c]).collect();
        present.iter().map(|&c| self.normalized.get(c, c)).sum::<f64>() / present.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let c = self.absent.len();
        let mut out = String::from("true_label");
        for j in 1..=c {
            out.push_str(&format!(",pred_{j}"));
        }
        out.push('\n');
        for i in 0..c {
            out.push_str(&(i + 1).to_string());
            for j in 0..c {
                out.push_str(&format!(",{:.6}", self.normalized.get(i, j)));
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_matrix(pred: &[SegmentLabel], truth: &[SegmentLabel], classes: usize) -> Result<ConfusionMatrix> {
    check_lengths(pred, truth)?;
    if let Some(bad) = pred.iter().chain(truth).find(|l| l.index() >= classes) {
        return Err(Error::InvalidArgument(format!("label {bad} outside 1..={classes}")));
    }
    let mut counts = vec![vec![0usize; classes]; classes];
    for (p, t) in pred.iter().zip(truth) {
        counts[t.index()][p.index()] += 1;
    }
    let mut normalized = Matrix::zeros(classes, classes);
    let mut absent = vec![false; classes];
    for i in 0..classes {
        let total: usize = counts[i].iter().sum();
        if total == 0 {
            absent[i] = true;
            continue;
        }
        for j in 0..classes {
            normalized.set(i, j, counts[i][j] as f64 / total as f64);
        }
    }
    Ok(ConfusionMatrix {
        counts,
        normalized,
        absent,
    })
}
