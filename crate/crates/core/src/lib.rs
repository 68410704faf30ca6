//! Energy-masked adversarial perturbations against speaker embeddings.
//!
//! The pipeline works on the STFT power spectrum of 16 kHz mono audio:
//! a small-energy mask selects the bins that may be perturbed, a
//! differentiable log-mel speaker encoder provides gradients, and
//! gradient-sign attacks (FGSM, I-FGSM, MI-FGSM, PGD, MEP, I-MEP) build
//! the perturbation. Adversarial audio is resynthesized with the original
//! phase, and the evaluation harness reports SNR, log-spectral distortion
//! and verification EER.

pub mod attacks;
pub mod audio_io;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod matrix_io;
pub mod metrics;
pub mod selfcheck;
pub mod sem_mask;
pub mod spectral;

pub use attacks::{AttackConfig, AttackMethod, AttackResult, MepMode, Perturbation};
pub use audio_io::{read_wav, write_wav, SampleFormat, WaveBuffer, SAMPLE_RATE};
pub use corpus::CorpusSpec;
pub use encoder::{EncoderState, SpeakerModel, TargetEmbedding};
pub use error::{MepError, Result};
pub use evaluation::{EvaluationReport, MetricReport};
pub use sem_mask::{EnergyMask, MaskConfig};
pub use spectral::{ComplexSpectrogram, MelConfig, MelFeatures, MelFilterbank, PowerSpectrum, StftConfig};
