pub mod archive;
pub mod cli;
pub mod data;
pub mod embedding;
pub mod error;
pub mod imitation;
pub mod numerics;
pub mod pipeline;
pub mod seqmodels;

pub use error::{Error, Result};
