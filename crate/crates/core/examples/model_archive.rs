//! Save a trained sequence model as a text archive and load it back.

use actseg::data::{generate_synthetic, SyntheticConfig};
use actseg::embedding::LabeledSequence;
use actseg::seqmodels::{SeqModelConfig, SeqModelKind, SequenceModel};

pub fn main() -> actseg::Result<()> {
    let ds = generate_synthetic(&SyntheticConfig {
        demonstrators: 2,
        demos_per_demonstrator: 2,
        classes: 3,
        feature_width: 6,
        signal_dims: 4,
        nuisance_dims: 0,
        seed: 21,
        ..SyntheticConfig::default()
    })?;
    let seqs: Vec<LabeledSequence> = ds
        .demos
        .iter()
        .map(|d| LabeledSequence {
            frames: d.features(),
            labels: d.frames().iter().map(|f| f.label).collect(),
        })
        .collect();
    let mut config = SeqModelConfig::new(SeqModelKind::Hsmm);
    config.hsmm.states = 3;
    config.hsmm.iterations = 3;
    config.hsmm.max_duration = 30;
    let model = SequenceModel::train(&seqs, ds.classes, &config, 0)?;

    let path = std::env::temp_dir().join("actseg-example-hsmm.model");
    model.save(&path)?;
    let back = SequenceModel::load(&path)?;
    assert_eq!(back, model);
    let (labels, conf) = back.predict(&ds.demos[0].features())?;
    println!("{} reloaded from {}; first labels {:?}", back.kind().name(), path.display(), labels[..5].iter().map(|l| l.get()).collect::<Vec<_>>());
    println!("confidences {:.3?}", &conf[..5]);
    Ok(())
}
