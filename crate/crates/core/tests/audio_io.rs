use mep_core::audio_io::*;
use mep_core::MepError;
use proptest::prelude::*;

fn sine(freq: f64, amp: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin())
        .collect()
}

/// Minimal canonical RIFF image with caller-chosen header fields.
fn raw_wav(tag: u16, channels: u16, rate: u32, bits: u16, data: &[u8]) -> Vec<u8> {
    let block = channels * bits / 8;
    let mut v = Vec::new();
    v.extend_from_slice(b"RIFF");
    v.extend_from_slice(&(36 + data.len() as u32).to_le_bytes());
    v.extend_from_slice(b"WAVEfmt ");
    v.extend_from_slice(&16u32.to_le_bytes());
    v.extend_from_slice(&tag.to_le_bytes());
    v.extend_from_slice(&channels.to_le_bytes());
    v.extend_from_slice(&rate.to_le_bytes());
    v.extend_from_slice(&(rate * block as u32).to_le_bytes());
    v.extend_from_slice(&block.to_le_bytes());
    v.extend_from_slice(&bits.to_le_bytes());
    v.extend_from_slice(b"data");
    v.extend_from_slice(&(data.len() as u32).to_le_bytes());
    v.extend_from_slice(data);
    v
}

#[test]
fn sine_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tone.wav");
    let wave = WaveBuffer::from_samples(sine(440.0, 0.5, 16_000)).unwrap();
    write_wav(&wave, &path, SampleFormat::Pcm16).unwrap();
    let back = read_wav(&path).unwrap();
    assert_eq!(back.len(), wave.len());
    assert_eq!(back.sample_rate(), SAMPLE_RATE);
    for (a, b) in wave.samples().iter().zip(back.samples()) {
        assert!((a - b).abs() <= 2f64.powi(-15));
    }
}

#[test]
fn float32_round_trip_is_single_precision_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tone.wav");
    let wave = WaveBuffer::from_samples(sine(1000.0, 0.9, 4000)).unwrap();
    write_wav(&wave, &path, SampleFormat::Float32).unwrap();
    let back = read_wav(&path).unwrap();
    for (a, b) in wave.samples().iter().zip(back.samples()) {
        assert_eq!(*b, f64::from(*a as f32));
    }
}

#[test]
fn rejects_other_rates_and_layouts() {
    let data = vec![0u8; 8];
    assert!(matches!(decode_wav(&raw_wav(1, 1, 44_100, 16, &data)), Err(MepError::UnsupportedFormat(_))));
    assert!(matches!(decode_wav(&raw_wav(1, 2, 16_000, 16, &data)), Err(MepError::UnsupportedFormat(_))));
    assert!(matches!(decode_wav(&raw_wav(1, 1, 16_000, 8, &data)), Err(MepError::UnsupportedFormat(_))));
    assert!(decode_wav(&raw_wav(1, 1, 16_000, 16, &data)).is_ok());
}

#[test]
fn rejects_empty_and_garbage() {
    assert!(matches!(decode_wav(&raw_wav(1, 1, 16_000, 16, &[])), Err(MepError::EmptyAudio)));
    assert!(matches!(decode_wav(b"not a wav file at all"), Err(MepError::MalformedContainer(_))));
    let nan = f32::NAN.to_le_bytes();
    assert!(matches!(decode_wav(&raw_wav(3, 1, 16_000, 32, &nan)), Err(MepError::NonFiniteSample(0))));
}

#[test]
fn missing_file_reports_path() {
    let err = read_wav("/definitely/not/here.wav").unwrap_err();
    assert!(err.to_string().contains("/definitely/not/here.wav"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pcm16_error_bounded(samples in prop::collection::vec(-1.0f64..1.0, 1..2000)) {
        let wave = WaveBuffer::from_samples(samples).unwrap();
        let back = decode_wav(&encode_wav(&wave, SampleFormat::Pcm16).unwrap()).unwrap();
        for (a, b) in wave.samples().iter().zip(back.samples()) {
            prop_assert!((a - b).abs() <= 2f64.powi(-15));
        }
    }
}
