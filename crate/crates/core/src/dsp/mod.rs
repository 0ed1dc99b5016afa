//! Deterministic signal primitives: WAV I/O, STFT/ISTFT, MFCC features,
//! spectral-flux onset detection.

mod audio;
mod features;
mod onset;
mod stft;

pub use audio::{read_wav, write_wav, AudioBuffer};
pub use features::{dct_ii_orthonormal, mel_filterbank, mfcc, FeatureMatrix, MfccConfig};
pub use onset::{detect_onsets, spectral_flux, OnsetConfig, OnsetList};
pub use stft::{frame_count, hann_window, istft, stft, Spectrogram, Window};
