//! Generate a synthetic dataset, write it to disk, read it back and split it.

use actseg::data::{generate_synthetic, load_dataset, mask_labels, save_dataset, split_leave_one_out, SyntheticConfig};

pub fn main() -> actseg::Result<()> {
    let config = SyntheticConfig {
        demonstrators: 4,
        demos_per_demonstrator: 3,
        seed: 11,
        ..SyntheticConfig::default()
    };
    let ds = generate_synthetic(&config)?;
    println!(
        "{} demos, {} frames, {} classes, {} features per frame",
        ds.demos.len(),
        ds.total_frames(),
        ds.classes,
        ds.feature_width
    );

    let dir = std::env::temp_dir().join("actseg-example-data");
    let manifest = save_dataset(&ds, &dir)?;
    let back = load_dataset(&manifest)?;
    assert_eq!(back, ds);
    println!("round trip through {} is exact", manifest.display());

    // one trial per demonstrator becomes the test set
    let (train, test) = split_leave_one_out(&ds, 0)?;
    println!("train {} demos, test {} demos", train.demos.len(), test.demos.len());

    let masked = mask_labels(&train, 0.25, 3)?;
    println!(
        "after masking: {} labeled, {} unlabeled",
        masked.labeled().count(),
        masked.unlabeled().count()
    );
    Ok(())
}
