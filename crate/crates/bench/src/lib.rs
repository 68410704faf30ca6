//! Shared fixtures for the criterion benches.

use mep_core::corpus::{generate, CorpusSpec, Utterance};

/// One deterministic synthetic utterance of `secs` seconds.
pub fn fixture_utterance(secs: f64) -> Utterance {
    let spec = CorpusSpec {
        speakers: 1,
        utterances_per_speaker: 1,
        duration_secs: secs,
        ..CorpusSpec::default()
    };
    generate(&spec)
        .expect("fixture corpus spec is valid")
        .remove(0)
}
