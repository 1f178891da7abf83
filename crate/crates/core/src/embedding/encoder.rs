use std::path::Path;

use super::{Embedding, FrameFeatures};
use crate::archive::Archive;
use crate::data::Demonstration;
use crate::error::{Error, Result};
use crate::numerics::{
    l2_normalize, mlp_forward, mlp_predict, seeded_rng, Activation, MlpCache, MlpParams,
    DEFAULT_NORM_EPS,
};

pub const DEFAULT_EMBEDDING_DIM: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub hidden: Vec<usize>,
    pub dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            hidden: vec![256, 64],
            dim: DEFAULT_EMBEDDING_DIM,
        }
    }
}

/// Feedforward network from frame features to a unit-norm embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    mlp: MlpParams,
    trained: bool,
}

impl Encoder {
    /// Glorot-initialized encoder; relu hidden layers, linear output, then L2 normalization.
    pub fn new(input_width: usize, config: &EncoderConfig, seed: u64) -> Result<Self> {
        if input_width == 0 || config.dim == 0 {
            return Err(Error::InvalidArgument("encoder widths must be positive".into()));
        }
        let mut widths = vec![input_width];
        widths.extend(&config.hidden);
        widths.push(config.dim);
        let mlp = MlpParams::xavier(&widths, Activation::Relu, Activation::Identity, &mut seeded_rng(seed))?;
        Ok(Encoder { mlp, trained: false })
    }

    pub fn from_params(mlp: MlpParams, trained: bool) -> Self {
        Encoder { mlp, trained }
    }

    pub fn params(&self) -> &MlpParams {
        &self.mlp
    }

    pub(crate) fn params_mut(&mut self) -> &mut MlpParams {
        &mut self.mlp
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    pub(crate) fn mark_trained(&mut self) {
        self.trained = true;
    }

    pub fn input_width(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn dim(&self) -> usize {
        self.mlp.output_dim()
    }

    pub fn encode_values(&self, values: &[f64]) -> Result<Vec<f64>> {
        Ok(l2_normalize(&mlp_predict(&self.mlp, values)?, DEFAULT_NORM_EPS))
    }

    /// Unit embedding plus what backpropagation needs: the pre-normalization
    /// output and the layer cache.
    pub(crate) fn encode_with_cache(&self, values: &[f64]) -> Result<(Vec<f64>, Vec<f64>, MlpCache)> {
        let (raw, cache) = mlp_forward(&self.mlp, values)?;
        Ok((l2_normalize(&raw, DEFAULT_NORM_EPS), raw, cache))
    }

    pub fn encode(&self, frame: &FrameFeatures) -> Result<Embedding> {
        Ok(Embedding {
            values: self.encode_values(&frame.values)?,
            demo_id: frame.demo_id,
            frame_index: frame.frame_index,
        })
    }

    pub fn embed_demo(&self, demo: &Demonstration) -> Result<Vec<Embedding>> {
        demo.frames().iter().map(|f| self.encode(f)).collect()
    }

    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::new("encoder");
        a.set_meta("trained", self.trained);
        a.put_mlp("mlp", &self.mlp);
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        a.expect_kind("encoder")?;
        Ok(Encoder {
            mlp: a.mlp("mlp")?,
            trained: a.meta_parse("trained")?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Encoder::from_archive(&Archive::load(path)?)
    }

    /// FNV-1a over the bit patterns of every parameter.
    pub fn checksum(&self) -> u64 {
        self.mlp.flatten().iter().fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
            v.to_bits()
                .to_le_bytes()
                .iter()
                .fold(h, |h, b| (h ^ *b as u64).wrapping_mul(0x0100_0000_01b3))
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::norm;

    fn frame(values: Vec<f64>) -> FrameFeatures {
        FrameFeatures {
            values,
            demo_id: 0,
            frame_index: 0,
            label: None,
        }
    }

    #[test]
    fn untrained_encoder_emits_unit_vectors() {
        let enc = Encoder::new(5, &EncoderConfig::default(), 1).unwrap();
        let e = enc.encode(&frame(vec![0.3, -1.0, 2.0, 0.1, 0.0])).unwrap();
        assert_eq!(e.values.len(), 32);
        assert!((norm(&e.values) - 1.0).abs() < 1e-9);
        assert!(!enc.is_trained());
    }

    #[test]
    fn identical_frames_identical_embeddings() {
        let enc = Encoder::new(3, &EncoderConfig { hidden: vec![8], dim: 4 }, 2).unwrap();
        let a = enc.encode(&frame(vec![1.0, 2.0, 3.0])).unwrap();
        let b = enc.encode(&frame(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn width_mismatch_is_a_shape_error() {
        let enc = Encoder::new(3, &EncoderConfig::default(), 2).unwrap();
        assert!(matches!(enc.encode(&frame(vec![1.0])), Err(Error::Shape(_))));
    }

    #[test]
    fn archive_round_trip_is_exact() {
        let mut enc = Encoder::new(4, &EncoderConfig { hidden: vec![6], dim: 3 }, 9).unwrap();
        enc.mark_trained();
        let text = enc.to_archive().to_text();
        let back = Encoder::from_archive(&Archive::from_text(&text, Path::new("enc")).unwrap()).unwrap();
        assert_eq!(back, enc);
        assert_eq!(back.checksum(), enc.checksum());
    }

    #[test]
    fn checksum_tracks_parameters() {
        let a = Encoder::new(3, &EncoderConfig::default(), 2).unwrap();
        let b = Encoder::new(3, &EncoderConfig::default(), 3).unwrap();
        assert_eq!(a.checksum(), a.clone().checksum());
        assert_ne!(a.checksum(), b.checksum());
    }
}
