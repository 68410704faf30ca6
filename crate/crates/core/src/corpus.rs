//! Seeded synthetic speech-like corpus.
//!
//! A "speaker" is a fundamental-frequency range plus a three-resonance
//! spectral envelope and a filtered-noise component. Utterances of one speaker
//! vary pitch, syllable rhythm, phases and noise, but keep the envelope, so
//! genuine pairs look alike to the encoder and imposter pairs do not.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::audio_io::{WaveBuffer, SAMPLE_RATE};
use crate::error::{MepError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSpec {
    pub speakers: usize,
    pub utterances_per_speaker: usize,
    pub duration_secs: f64,
    pub seed: u64,
    /// Peak amplitude of the voiced component.
    pub level: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            speakers: 8,
            utterances_per_speaker: 10,
            duration_secs: 1.0,
            seed: 0,
            level: 0.002,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let min_secs = 400.0 / f64::from(SAMPLE_RATE);
        if self.speakers == 0 || self.utterances_per_speaker == 0 {
            return Err(MepError::InvalidTrialSet(
                "corpus needs at least one speaker and one utterance".into(),
            ));
        }
        if !(self.duration_secs >= min_secs && self.duration_secs <= 60.0) {
            return Err(MepError::InvalidTrialSet(format!(
                "utterance duration {} s outside [{min_secs}, 60] s",
                self.duration_secs
            )));
        }
        if !(self.level > 0.0 && self.level <= 1.0) {
            return Err(MepError::InvalidTrialSet(format!(
                "level {} outside (0, 1]",
                self.level
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Utterance {
    pub speaker: usize,
    pub index: usize,
    pub wave: WaveBuffer,
}

#[derive(Debug, Clone)]
struct Resonance {
    freq: f64,
    bandwidth: f64,
    gain: f64,
}

#[derive(Debug, Clone)]
struct SpeakerProfile {
    f0: f64,
    resonances: [Resonance; 3],
    tilt: f64,
    noise_center: f64,
    noise_gain: f64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream(seed: u64, a: u64, b: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed ^ splitmix(a)) ^ b))
}

impl SpeakerProfile {
    fn draw(seed: u64, speaker: usize) -> Self {
        let mut rng = stream(seed, 0x5eed, speaker as u64);
        let f0 = rng.random_range(90.0..240.0);
        let f1 = rng.random_range(300.0..900.0);
        let f2 = rng.random_range(1000.0..2600.0);
        let f3 = rng.random_range(2700.0..4200.0);
        let resonances = [
            Resonance {
                freq: f1,
                bandwidth: rng.random_range(60.0..160.0),
                gain: 1.0,
            },
            Resonance {
                freq: f2,
                bandwidth: rng.random_range(80.0..220.0),
                gain: rng.random_range(0.3..0.8),
            },
            Resonance {
                freq: f3,
                bandwidth: rng.random_range(120.0..300.0),
                gain: rng.random_range(0.1..0.4),
            },
        ];
        Self {
            f0,
            resonances,
            tilt: rng.random_range(0.6..1.4),
            noise_center: rng.random_range(2500.0..6500.0),
            noise_gain: rng.random_range(0.05..0.2),
        }
    }

    fn envelope(&self, hz: f64) -> f64 {
        let peaks: f64 = self
            .resonances
            .iter()
            .map(|r| r.gain / (1.0 + ((hz - r.freq) / r.bandwidth).powi(2)))
            .sum();
        let floor = 0.02 / (1.0 + hz / 1000.0).powf(self.tilt);
        peaks + floor
    }
}

fn synthesize(profile: &SpeakerProfile, spec: &CorpusSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n = (spec.duration_secs * f64::from(SAMPLE_RATE)).round() as usize;
    let fs = f64::from(SAMPLE_RATE);
    let f0 = profile.f0 * (1.0 + rng.random_range(-0.04..0.04));
    let vibrato_rate = rng.random_range(3.0..6.0);
    let vibrato_depth = rng.random_range(0.01..0.03);
    let syllable_rate = rng.random_range(2.5..4.5);
    let syllable_phase = rng.random_range(0.0..2.0 * PI);

    let n_harmonics = ((0.48 * fs) / (f0 * (1.0 + vibrato_depth))).floor() as usize;
    let amps: Vec<f64> = (1..=n_harmonics)
        .map(|h| profile.envelope(h as f64 * f0))
        .collect();
    let norm: f64 = amps.iter().copied().fold(0.0, f64::max);
    let phases: Vec<f64> = (0..n_harmonics).map(|_| rng.random_range(0.0..2.0 * PI)).collect();

    let gauss = Normal::new(0.0, 1.0).expect("unit normal");
    // two-pole resonator for the noise component
    let r = 0.96;
    let theta = 2.0 * PI * profile.noise_center / fs;
    let (a1, a2) = (2.0 * r * theta.cos(), -r * r);
    let (mut y1, mut y2) = (0.0, 0.0);

    let mut phase = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / fs;
        let inst_f0 = f0 * (1.0 + vibrato_depth * (2.0 * PI * vibrato_rate * t).sin());
        phase += 2.0 * PI * inst_f0 / fs;
        let voiced: f64 = amps
            .iter()
            .zip(&phases)
            .enumerate()
            .map(|(h, (a, p))| a * ((h + 1) as f64 * phase + p).sin())
            .sum::<f64>()
            / norm
            / (n_harmonics as f64).sqrt();
        // syllables: raised half-wave envelope, silent between
        let gate = (2.0 * PI * syllable_rate * t + syllable_phase).sin().max(0.0).sqrt();

        let w: f64 = gauss.sample(rng);
        let y = w + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        let breath = profile.noise_gain * (1.0 - r) * y;
        let background = 1e-3 * gauss.sample(rng);

        out.push(spec.level * (gate * (voiced + breath) + background));
    }
    out
}

/// All utterances, speaker-major, deterministic in `spec`.
pub fn generate(spec: &CorpusSpec) -> Result<Vec<Utterance>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.speakers * spec.utterances_per_speaker);
    for speaker in 0..spec.speakers {
        let profile = SpeakerProfile::draw(spec.seed, speaker);
        for index in 0..spec.utterances_per_speaker {
            let mut rng = stream(spec.seed, speaker as u64 + 1, index as u64);
            let samples = synthesize(&profile, spec, &mut rng);
            out.push(Utterance {
                speaker,
                index,
                wave: WaveBuffer::from_samples(samples)?,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let spec = CorpusSpec {
            speakers: 2,
            utterances_per_speaker: 2,
            ..CorpusSpec::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.len(), 4);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.wave, y.wave);
            assert_eq!(x.wave.len(), 16_000);
            assert!(x.wave.samples().iter().all(|s| s.abs() <= 1.0));
        }
        assert_ne!(a[0].wave, a[1].wave);
    }

    #[test]
    fn rejects_degenerate_specs() {
        for spec in [
            CorpusSpec { speakers: 0, ..CorpusSpec::default() },
            CorpusSpec { duration_secs: 0.01, ..CorpusSpec::default() },
            CorpusSpec { level: 0.0, ..CorpusSpec::default() },
        ] {
            assert!(generate(&spec).is_err());
        }
    }
}
