//! Learn a metric embedding with the triplet loss and compare KNN accuracy
//! on raw features against the embedded ones.

use actseg::data::{generate_synthetic, split_leave_one_out, SyntheticConfig};
use actseg::embedding::{pca2d_dump, train_embedding, EmbeddingTrainConfig, EncoderConfig, LabeledSequence, Pca2dRow};
use actseg::pipeline::{evaluate, train_sequence_model, Embedder};
use actseg::seqmodels::{SeqModelConfig, SeqModelKind};

pub fn main() -> actseg::Result<()> {
    let ds = generate_synthetic(&SyntheticConfig {
        demonstrators: 4,
        demos_per_demonstrator: 3,
        seed: 2,
        ..SyntheticConfig::default()
    })?;
    let (train, test) = split_leave_one_out(&ds, 1)?;

    let seqs: Vec<LabeledSequence> = train
        .demos
        .iter()
        .map(|d| LabeledSequence {
            frames: d.features(),
            labels: d.frames().iter().map(|f| f.label).collect(),
        })
        .collect();
    let config = EmbeddingTrainConfig {
        encoder: EncoderConfig { hidden: vec![64], dim: 16 },
        ..EmbeddingTrainConfig::default()
    };
    let fit = train_embedding(&seqs, &config, 25, 0)?;
    let first = fit.loss_trace.iter().take(10).sum::<f64>() / 10.0;
    let last = fit.loss_trace.iter().rev().take(10).sum::<f64>() / 10.0;
    println!("triplet loss {first:.4} -> {last:.4} over {} steps", fit.loss_trace.len());

    let knn = SeqModelConfig::new(SeqModelKind::Knn);
    for (name, emb) in [("raw", Embedder::Raw), ("triplet", Embedder::Encoder(fit.encoder.clone()))] {
        let model = train_sequence_model(&emb, &train.demos, train.classes, &knn, 0)?;
        println!("{name:>8} + knn: {:.3}", evaluate(&emb, &model, &test.demos)?);
    }

    let demo = &test.demos[0];
    let rows = pca2d_dump(&fit.encoder.embed_demo(demo)?, &demo.frames().iter().map(|f| f.label).collect::<Vec<_>>())?;
    print!("{}", Pca2dRow::to_csv(&rows[..4]));
    Ok(())
}
