use std::fmt::Write as _;

use super::ipca::IncrementalPca;
use super::Embedding;
use crate::error::{Error, Result};
use crate::seqmodels::SegmentLabel;

fn label_field(label: Option<SegmentLabel>) -> String {
    label.map_or_else(|| "-1".to_string(), |l| l.to_string())
}

/// `demo_id,frame_index,label,e0..` with `-1` for unlabeled frames.
pub fn embeddings_to_csv(embeddings: &[Embedding], labels: &[Option<SegmentLabel>]) -> Result<String> {
    if embeddings.len() != labels.len() {
        return Err(Error::shape("one label slot per embedding required"));
    }
    let dim = embeddings.first().map_or(0, |e| e.values.len());
    let mut out = String::from("demo_id,frame_index,label");
    for j in 0..dim {
        write!(out, ",e{j}").unwrap();
    }
    out.push('\n');
    for (e, l) in embeddings.iter().zip(labels) {
        write!(out, "{},{},{}", e.demo_id, e.frame_index, label_field(*l)).unwrap();
        for v in &e.values {
            write!(out, ",{v:.16e}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca2dRow {
    pub demo_id: u32,
    pub frame_index: usize,
    pub label: Option<SegmentLabel>,
    pub x: f64,
    pub y: f64,
}

/// Projects the embedding set onto its top two principal components.
pub fn pca2d_dump(embeddings: &[Embedding], labels: &[Option<SegmentLabel>]) -> Result<Vec<Pca2dRow>> {
    if embeddings.len() < 2 {
        return Err(Error::DegenerateDataset("a 2-D projection needs at least two embeddings".into()));
    }
    if embeddings.len() != labels.len() {
        return Err(Error::shape("one label slot per embedding required"));
    }
    let mut pca = IncrementalPca::new(2)?;
    pca.partial_fit(embeddings)?;
    embeddings
        .iter()
        .zip(labels)
        .map(|(e, l)| {
            let p = pca.transform(&e.values)?;
            Ok(Pca2dRow {
                demo_id: e.demo_id,
                frame_index: e.frame_index,
                label: *l,
                x: p[0],
                y: p[1],
            })
        })
        .collect()
}

impl Pca2dRow {
    pub fn to_csv(rows: &[Pca2dRow]) -> String {
        let mut out = String::from("demo_id,frame_index,label,x,y\n");
        for r in rows {
            writeln!(
                out,
                "{},{},{},{:.16e},{:.16e}",
                r.demo_id,
                r.frame_index,
                label_field(r.label),
                r.x,
                r.y
            )
            .unwrap();
        }
        out
    }
}
