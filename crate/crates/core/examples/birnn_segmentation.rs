//! Bidirectional LSTM classifier over fixed-length windows.

use actseg::data::{generate_synthetic, split_leave_one_out, SyntheticConfig};
use actseg::pipeline::pooled_accuracy;
use actseg::seqmodels::{rnn_predict_sequence, rnn_train, RnnConfig};

pub fn main() -> actseg::Result<()> {
    let ds = generate_synthetic(&SyntheticConfig {
        demonstrators: 3,
        demos_per_demonstrator: 3,
        classes: 4,
        feature_width: 12,
        signal_dims: 8,
        nuisance_dims: 2,
        seed: 5,
        ..SyntheticConfig::default()
    })?;
    let (train, test) = split_leave_one_out(&ds, 0)?;
    let data: Vec<_> = train
        .demos
        .iter()
        .map(|d| (d.features(), d.frames().iter().map(|f| f.label).collect()))
        .collect();
    let config = RnnConfig {
        hidden: 16,
        stride: 32,
        learning_rate: 1e-2,
        ..RnnConfig::default()
    };
    let fit = rnn_train(&data, ds.classes, &config, 25, 0)?;
    let trace = &fit.loss_trace;
    println!("cross-entropy {:.3} -> {:.3}", trace[0], trace[trace.len() - 1]);

    let pred = test
        .demos
        .iter()
        .map(|d| Ok(rnn_predict_sequence(&fit.model, &d.features())?.0))
        .collect::<actseg::Result<Vec<_>>>()?;
    println!("held-out accuracy {:.3}", pooled_accuracy(&pred, &test.demos)?);
    Ok(())
}
