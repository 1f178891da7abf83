//! Fit incremental PCA batch by batch and inspect the explained variance.

use actseg::data::{generate_synthetic, SyntheticConfig};
use actseg::embedding::IncrementalPca;

pub fn main() -> actseg::Result<()> {
    let ds = generate_synthetic(&SyntheticConfig {
        demonstrators: 2,
        demos_per_demonstrator: 3,
        seed: 4,
        ..SyntheticConfig::default()
    })?;
    let mut pca = IncrementalPca::new(8)?;
    for d in &ds.demos {
        pca.partial_fit(&d.features())?;
    }
    println!("{} frames seen", pca.n_samples_seen());
    let ratio: Vec<String> = pca.explained_variance_ratio().iter().map(|r| format!("{r:.3}")).collect();
    println!("explained variance ratio: {}", ratio.join(" "));
    let z = pca.transform(&ds.demos[0].frames()[0].values)?;
    println!("first frame projected to {} dims: {:.3?}", z.len(), &z[..3]);
    Ok(())
}
