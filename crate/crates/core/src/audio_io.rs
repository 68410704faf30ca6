//! Mono 16 kHz WAV input/output.
//!
//! Only the two sample formats the pipeline needs are accepted: 16-bit PCM
//! (format tag 1) and 32-bit IEEE float (format tag 3). Anything else,
//! including stereo and non-16 kHz rates, is rejected rather than converted.

use std::fs;
use std::path::Path;

use crate::error::{MepError, Result};

pub const SAMPLE_RATE: u32 = 16_000;

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;

/// Mono audio samples at 16 kHz, nominally in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct WaveBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl WaveBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate != SAMPLE_RATE {
            return Err(MepError::UnsupportedFormat(format!(
                "sample rate {sample_rate} Hz (only {SAMPLE_RATE} Hz is accepted)"
            )));
        }
        if samples.is_empty() {
            return Err(MepError::EmptyAudio);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(MepError::NonFiniteSample(i));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    /// Builds a 16 kHz buffer.
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        Self::new(samples, SAMPLE_RATE)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// Quantization used by [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleFormat {
    #[default]
    Pcm16,
    Float32,
}

impl std::str::FromStr for SampleFormat {
    type Err = MepError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pcm16" | "pcm-16" | "i16" => Ok(SampleFormat::Pcm16),
            "float32" | "float-32" | "f32" => Ok(SampleFormat::Float32),
            _ => Err(MepError::UnknownName {
                kind: "sample format",
                value: s.to_string(),
            }),
        }
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<WaveBuffer> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| MepError::io(path, e))?;
    decode_wav(&bytes)
}

/// Parses an in-memory RIFF/WAVE image.
pub fn decode_wav(bytes: &[u8]) -> Result<WaveBuffer> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(MepError::MalformedContainer(
            "missing RIFF/WAVE header".into(),
        ));
    }

    let mut fmt: Option<FmtChunk> = None;
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().unwrap()) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| {
                MepError::MalformedContainer(format!(
                    "chunk `{}` overruns the file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => fmt = Some(FmtChunk::parse(body)?),
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }

    let fmt = fmt.ok_or_else(|| MepError::MalformedContainer("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| MepError::MalformedContainer("no data chunk".into()))?;
    fmt.check_supported()?;

    let samples: Vec<f64> = match fmt.audio_format {
        FORMAT_PCM => data
            .chunks_exact(2)
            .map(|b| f64::from(i16::from_le_bytes([b[0], b[1]])) / 32768.0)
            .collect(),
        _ => data
            .chunks_exact(4)
            .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
            .collect(),
    };
    WaveBuffer::new(samples, fmt.sample_rate)
}

#[derive(Debug)]
struct FmtChunk {
    audio_format: u16,
    channels: u16,
    sample_rate: u32,
    bits_per_sample: u16,
}

impl FmtChunk {
    fn parse(body: &[u8]) -> Result<Self> {
        if body.len() < 16 {
            return Err(MepError::MalformedContainer(format!(
                "fmt chunk of {} bytes (need 16)",
                body.len()
            )));
        }
        let u16_at = |i: usize| u16::from_le_bytes([body[i], body[i + 1]]);
        let u32_at = |i: usize| u32::from_le_bytes(body[i..i + 4].try_into().unwrap());
        Ok(Self {
            audio_format: u16_at(0),
            channels: u16_at(2),
            sample_rate: u32_at(4),
            bits_per_sample: u16_at(14),
        })
    }

    fn check_supported(&self) -> Result<()> {
        match (self.audio_format, self.bits_per_sample) {
            (FORMAT_PCM, 16) | (FORMAT_IEEE_FLOAT, 32) => {}
            (tag, bits) => {
                return Err(MepError::UnsupportedFormat(format!(
                    "format tag {tag} with {bits} bits per sample (need PCM-16 or float-32)"
                )))
            }
        }
        if self.channels != 1 {
            return Err(MepError::UnsupportedFormat(format!(
                "{} channels (only mono is accepted)",
                self.channels
            )));
        }
        if self.sample_rate != SAMPLE_RATE {
            return Err(MepError::UnsupportedFormat(format!(
                "sample rate {} Hz (only {SAMPLE_RATE} Hz is accepted)",
                self.sample_rate
            )));
        }
        Ok(())
    }
}

pub fn write_wav(buffer: &WaveBuffer, path: impl AsRef<Path>, format: SampleFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_wav(buffer, format)?;
    fs::write(path, bytes).map_err(|e| MepError::io(path, e))
}

/// Serializes a buffer to a RIFF/WAVE image. Samples are clamped to [-1, 1].
pub fn encode_wav(buffer: &WaveBuffer, format: SampleFormat) -> Result<Vec<u8>> {
    if buffer.is_empty() {
        return Err(MepError::EmptyAudio);
    }
    let (tag, bytes_per_sample) = match format {
        SampleFormat::Pcm16 => (FORMAT_PCM, 2u16),
        SampleFormat::Float32 => (FORMAT_IEEE_FLOAT, 4u16),
    };
    let data_len = buffer.len() * usize::from(bytes_per_sample);
    let data_len_u32 = u32::try_from(data_len)
        .map_err(|_| MepError::UnsupportedFormat("audio too long for a RIFF container".into()))?;

    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len_u32).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&tag.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&buffer.sample_rate().to_le_bytes());
    out.extend_from_slice(&(buffer.sample_rate() * u32::from(bytes_per_sample)).to_le_bytes());
    out.extend_from_slice(&bytes_per_sample.to_le_bytes());
    out.extend_from_slice(&(bytes_per_sample * 8).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len_u32.to_le_bytes());

    for &s in buffer.samples() {
        let s = s.clamp(-1.0, 1.0);
        match format {
            SampleFormat::Pcm16 => {
                let q = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                out.extend_from_slice(&q.to_le_bytes());
            }
            SampleFormat::Float32 => out.extend_from_slice(&(s as f32).to_le_bytes()),
        }
    }
    Ok(out)
}
