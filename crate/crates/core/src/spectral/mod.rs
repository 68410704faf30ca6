//! STFT analysis/synthesis, power spectra and the log-mel front end.

mod mel;
mod stft;

pub use mel::{hz_to_mel, mel_to_hz, MelConfig, MelFeatures, MelFilterbank, DEFAULT_LOG_FLOOR};
pub use stft::{
    istft, power, resynthesize, stft, ComplexSpectrogram, PowerSpectrum, StftConfig,
    COLA_TOLERANCE,
};
