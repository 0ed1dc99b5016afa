//! Diarization-driven separation of two percussive voices in a mono
//! recording: segment, cluster with the information-bottleneck principle,
//! identify solo/overlap clusters with GMMs, separate only the overlapped
//! segments with a mask-predicting recurrent network, and score every stage.

pub mod dsp;
pub mod gmm;
pub mod segmentation;
pub mod error;

pub use error::{Error, Result};
