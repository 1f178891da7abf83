use super::SegmentLabel;
use crate::error::{Error, Result};
use crate::numerics::squared_distance;

pub const DEFAULT_K: usize = 5;

/// Brute-force k-nearest-neighbour classifier over stored embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnClassifier {
    points: Vec<Vec<f64>>,
    labels: Vec<SegmentLabel>,
    k: usize,
}

impl KnnClassifier {
    pub fn new(points: Vec<Vec<f64>>, labels: Vec<SegmentLabel>, k: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Empty("knn training set"));
        }
        if points.len() != labels.len() {
            return Err(Error::shape("one label per training point required"));
        }
        let d = points[0].len();
        if points.iter().any(|p| p.len() != d) {
            return Err(Error::shape("knn training points differ in width"));
        }
        if k == 0 || k > points.len() {
            return Err(Error::InvalidArgument(format!("k = {k} outside 1..={}", points.len())));
        }
        Ok(KnnClassifier { points, labels, k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[SegmentLabel] {
        &self.labels
    }

    /// Majority label of the `k` nearest points and its vote fraction.
    pub fn predict(&self, query: &[f64]) -> Result<(SegmentLabel, f64)> {
        if query.len() != self.points[0].len() {
            return Err(Error::shape(format!(
                "query width {} differs from training width {}",
                query.len(),
                self.points[0].len()
            )));
        }
        // (distance, index) of the k nearest; index breaks distance ties
        let mut nearest: Vec<(f64, usize)> = Vec::with_capacity(self.k + 1);
        for (i, p) in self.points.iter().enumerate() {
            let d = squared_distance(query, p);
            if nearest.len() == self.k && d >= nearest[self.k - 1].0 {
                continue;
            }
            let pos = nearest.partition_point(|&(nd, _)| nd <= d);
            nearest.insert(pos, (d, i));
            nearest.truncate(self.k);
        }
        let mut votes: Vec<(SegmentLabel, usize, f64)> = Vec::new();
        for &(d, i) in &nearest {
            let l = self.labels[i];
            match votes.iter_mut().find(|v| v.0 == l) {
                Some(v) => {
                    v.1 += 1;
                    v.2 += d.sqrt();
                }
                None => votes.push((l, 1, d.sqrt())),
            }
        }
        let best = votes
            .iter()
            .min_by(|a, b| b.1.cmp(&a.1).then(a.2.total_cmp(&b.2)).then(a.0.cmp(&b.0)))
            .expect("k >= 1");
        Ok((best.0, best.1 as f64 / self.k as f64))
    }
}

/// Single-query convenience wrapper.
pub fn knn_predict(points: &[Vec<f64>], labels: &[SegmentLabel], query: &[f64], k: usize) -> Result<SegmentLabel> {
    Ok(KnnClassifier::new(points.to_vec(), labels.to_vec(), k)?.predict(query)?.0)
}
