use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Zip};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::audio_io::WaveBuffer;
use crate::error::{MepError, Result};

/// Frame layout for analysis and synthesis.
///
/// The defaults are a 25 ms periodic Hann window with a 12.5 ms hop at
/// 16 kHz, zero-padded to a 512-point FFT (257 one-sided bins).
#[derive(Debug, Clone, PartialEq)]
pub struct StftConfig {
    fft_size: usize,
    window_length: usize,
    hop_length: usize,
    window: Vec<f64>,
}

/// Maximum relative deviation of the summed analysis window from a constant.
pub const COLA_TOLERANCE: f64 = 1e-6;

impl Default for StftConfig {
    fn default() -> Self {
        Self::new(512, 400, 200).expect("default STFT layout satisfies COLA")
    }
}

impl StftConfig {
    pub fn new(fft_size: usize, window_length: usize, hop_length: usize) -> Result<Self> {
        if fft_size == 0 || window_length == 0 || hop_length == 0 {
            return Err(MepError::InvalidStftConfig("sizes must be positive".into()));
        }
        if fft_size % 2 != 0 {
            return Err(MepError::InvalidStftConfig(format!(
                "fft_size {fft_size} must be even"
            )));
        }
        if window_length > fft_size {
            return Err(MepError::InvalidStftConfig(format!(
                "window_length {window_length} exceeds fft_size {fft_size}"
            )));
        }
        if hop_length > window_length {
            return Err(MepError::InvalidStftConfig(format!(
                "hop_length {hop_length} exceeds window_length {window_length}"
            )));
        }
        let window = periodic_hann(window_length);
        let deviation = cola_deviation(&window, hop_length);
        if deviation > COLA_TOLERANCE {
            return Err(MepError::InvalidStftConfig(format!(
                "window/hop pair violates constant overlap-add (relative deviation {deviation:.3e})"
            )));
        }
        Ok(Self {
            fft_size,
            window_length,
            hop_length,
            window,
        })
    }

    pub fn fft_size(&self) -> usize {
        self.fft_size
    }

    pub fn window_length(&self) -> usize {
        self.window_length
    }

    pub fn hop_length(&self) -> usize {
        self.hop_length
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    /// Normalized angular frequency of bin `k`, 2πk/K.
    pub fn bin_omega(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.fft_size as f64
    }

    pub fn bin_hz(&self, k: usize, sample_rate: u32) -> f64 {
        k as f64 * f64::from(sample_rate) / self.fft_size as f64
    }

    fn pad(&self) -> usize {
        self.window_length / 2
    }

    /// Frames produced for a signal of `len` samples.
    pub fn n_frames(&self, len: usize) -> usize {
        let padded = len + 2 * self.pad();
        1 + (padded - self.window_length) / self.hop_length
    }
}

fn periodic_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// max |Σ_m w[n - mH] - mean| / mean over one hop period.
fn cola_deviation(window: &[f64], hop: usize) -> f64 {
    let sums: Vec<f64> = (0..hop)
        .map(|n| window.iter().skip(n).step_by(hop).sum())
        .collect();
    let mean = sums.iter().sum::<f64>() / hop as f64;
    if mean <= 0.0 {
        return f64::INFINITY;
    }
    sums.iter()
        .map(|s| (s - mean).abs() / mean)
        .fold(0.0, f64::max)
}

/// One-sided complex STFT coefficients, frames × bins.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    data: Array2<Complex64>,
    config: StftConfig,
    original_length: usize,
}

impl ComplexSpectrogram {
    pub fn new(data: Array2<Complex64>, config: StftConfig, original_length: usize) -> Result<Self> {
        if data.ncols() != config.n_bins() {
            return Err(MepError::InvalidShape(format!(
                "{} bins, expected {}",
                data.ncols(),
                config.n_bins()
            )));
        }
        if data.nrows() != config.n_frames(original_length) {
            return Err(MepError::InvalidShape(format!(
                "{} frames for {} samples, expected {}",
                data.nrows(),
                original_length,
                config.n_frames(original_length)
            )));
        }
        if data.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(MepError::InvalidShape("non-finite coefficient".into()));
        }
        Ok(Self {
            data,
            config,
            original_length,
        })
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.data
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn original_length(&self) -> usize {
        self.original_length
    }

    pub fn n_frames(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.data.ncols()
    }
}

/// Energies x[m,k] = |S[m,k]|², frames × bins.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSpectrum {
    data: Array2<f64>,
    config: StftConfig,
    original_length: usize,
}

impl PowerSpectrum {
    pub fn new(data: Array2<f64>, config: StftConfig, original_length: usize) -> Result<Self> {
        if data.ncols() != config.n_bins() {
            return Err(MepError::InvalidShape(format!(
                "{} bins, expected {}",
                data.ncols(),
                config.n_bins()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(MepError::InvalidShape(format!(
                "energy {v} is negative or non-finite"
            )));
        }
        Ok(Self {
            data,
            config,
            original_length,
        })
    }

    /// Wraps a bare energy matrix with the default layout. Useful for
    /// encoder/attack work that never goes back to the time domain.
    pub fn from_matrix(data: Array2<f64>) -> Result<Self> {
        let config = StftConfig::default();
        let len = (data.nrows().saturating_sub(1)) * config.hop_length();
        Self::new(data, config, len)
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<f64> {
        self.data
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn original_length(&self) -> usize {
        self.original_length
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.data.nrows(), self.data.ncols())
    }

    /// Same layout, different energies. Negative entries are floored to 0.
    pub fn with_data(&self, data: Array2<f64>) -> Result<Self> {
        let (m, k) = self.shape();
        if data.dim() != (m, k) {
            return Err(MepError::ShapeMismatch {
                expected: (m, k),
                actual: data.dim(),
            });
        }
        Self::new(
            data.mapv(|v| v.max(0.0)),
            self.config.clone(),
            self.original_length,
        )
    }
}

struct Planned {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plan(n: usize) -> Planned {
    let mut planner = FftPlanner::new();
    Planned {
        forward: planner.plan_fft_forward(n),
        inverse: planner.plan_fft_inverse(n),
    }
}

fn reflect_pad(samples: &[f64], pad: usize) -> Vec<f64> {
    let n = samples.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    out.extend((1..=pad).rev().map(|i| samples[i]));
    out.extend_from_slice(samples);
    out.extend((0..pad).map(|i| samples[n - 2 - i]));
    out
}

pub fn stft(wave: &WaveBuffer, config: &StftConfig) -> Result<ComplexSpectrogram> {
    let samples = wave.samples();
    if samples.len() < config.window_length {
        return Err(MepError::TooShort {
            len: samples.len(),
            window: config.window_length,
        });
    }
    let padded = reflect_pad(samples, config.pad());
    let n_frames = config.n_frames(samples.len());
    let n_bins = config.n_bins();
    let k = config.fft_size;
    let fft = plan(k).forward;

    let mut data = Array2::<Complex64>::zeros((n_frames, n_bins));
    let mut buf = vec![Complex64::new(0.0, 0.0); k];
    for (m, mut row) in data.rows_mut().into_iter().enumerate() {
        let start = m * config.hop_length;
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for (j, (b, w)) in buf.iter_mut().zip(&config.window).enumerate() {
            b.re = padded[start + j] * w;
        }
        fft.process(&mut buf);
        row.iter_mut().zip(&buf).for_each(|(o, c)| *o = *c);
    }
    ComplexSpectrogram::new(data, config.clone(), samples.len())
}

/// Weighted overlap-add inverse: each frame is windowed again and the sum is
/// divided by Σ w², which undoes analysis exactly wherever frames overlap.
pub fn istft(spec: &ComplexSpectrogram) -> Result<WaveBuffer> {
    let config = &spec.config;
    let k = config.fft_size;
    let n_bins = config.n_bins();
    if spec.data.ncols() != n_bins || spec.data.nrows() != config.n_frames(spec.original_length) {
        return Err(MepError::InvalidShape(format!(
            "{}x{} spectrogram for {} samples",
            spec.data.nrows(),
            spec.data.ncols(),
            spec.original_length
        )));
    }
    let pad = config.pad();
    let padded_len = spec.original_length + 2 * pad;
    let ifft = plan(k).inverse;

    let mut acc = vec![0.0; padded_len];
    let mut norm = vec![0.0; padded_len];
    let mut buf = vec![Complex64::new(0.0, 0.0); k];
    for (m, row) in spec.data.rows().into_iter().enumerate() {
        // rebuild the Hermitian-symmetric full spectrum
        for (i, c) in row.iter().enumerate() {
            buf[i] = *c;
        }
        buf[0].im = 0.0;
        buf[k / 2].im = 0.0;
        for i in 1..k / 2 {
            buf[k - i] = row[i].conj();
        }
        ifft.process(&mut buf);
        let start = m * config.hop_length;
        for (j, w) in config.window.iter().enumerate() {
            acc[start + j] += buf[j].re / k as f64 * w;
            norm[start + j] += w * w;
        }
    }

    let samples = (pad..pad + spec.original_length)
        .map(|i| {
            if norm[i] > 1e-12 {
                acc[i] / norm[i]
            } else {
                0.0
            }
        })
        .collect();
    WaveBuffer::from_samples(samples)
}

pub fn power(spec: &ComplexSpectrogram) -> PowerSpectrum {
    PowerSpectrum {
        data: spec.data.mapv(|c| c.norm_sqr()),
        config: spec.config.clone(),
        original_length: spec.original_length,
    }
}

/// Inverse STFT of √x̃ carrying the phase of `phase_source`.
///
/// Negative energies are clamped to zero before the square root. Bins whose
/// source coefficient is exactly zero have no defined phase and take phase 0.
pub fn resynthesize(perturbed: &PowerSpectrum, phase_source: &ComplexSpectrogram) -> Result<WaveBuffer> {
    if perturbed.data.dim() != phase_source.data.dim() {
        return Err(MepError::ShapeMismatch {
            expected: phase_source.data.dim(),
            actual: perturbed.data.dim(),
        });
    }
    let mut data = Array2::<Complex64>::zeros(phase_source.data.dim());
    Zip::from(&mut data)
        .and(&perturbed.data)
        .and(&phase_source.data)
        .for_each(|out, &x, &s| {
            let mag = x.max(0.0).sqrt();
            let r = s.norm();
            *out = if r > 0.0 {
                s * (mag / r)
            } else {
                Complex64::new(mag, 0.0)
            };
        });
    let spec = ComplexSpectrogram {
        data,
        config: phase_source.config.clone(),
        original_length: phase_source.original_length,
    };
    istft(&spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> WaveBuffer {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        WaveBuffer::from_samples((0..n).map(|_| rng.random_range(-0.5..0.5)).collect()).unwrap()
    }

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn default_layout() {
        let cfg = StftConfig::default();
        assert_eq!(cfg.n_bins(), 257);
        assert_eq!(cfg.n_frames(16_000), 81);
        assert!((cfg.bin_omega(128) - PI / 2.0).abs() < 1e-15);
        assert!(cola_deviation(cfg.window(), cfg.hop_length()) < 1e-12);
    }

    #[test]
    fn rejects_non_cola_layouts() {
        assert!(StftConfig::new(512, 400, 150).is_err());
        assert!(StftConfig::new(256, 400, 200).is_err());
        assert!(StftConfig::new(512, 400, 100).is_ok());
    }

    #[test]
    fn zero_wave_gives_zero_spectrum() {
        let wave = WaveBuffer::from_samples(vec![0.0; 1000]).unwrap();
        let spec = stft(&wave, &StftConfig::default()).unwrap();
        assert!(spec.data().iter().all(|c| c.norm() == 0.0));
        assert!(istft(&spec).unwrap().samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn too_short_is_rejected() {
        let wave = WaveBuffer::from_samples(vec![0.1; 399]).unwrap();
        assert!(matches!(
            stft(&wave, &StftConfig::default()),
            Err(MepError::TooShort { len: 399, window: 400 })
        ));
    }

    #[test]
    fn aligned_sine_peaks_at_its_bin() {
        let cfg = StftConfig::default();
        let k0 = 40;
        let samples = (0..8000)
            .map(|n| 0.3 * (cfg.bin_omega(k0) * n as f64).sin())
            .collect();
        let spec = stft(&WaveBuffer::from_samples(samples).unwrap(), &cfg).unwrap();
        let p = power(&spec);
        for m in 2..p.shape().0 - 2 {
            let row = p.data().row(m);
            let argmax = (0..row.len())
                .max_by(|&a, &b| row[a].total_cmp(&row[b]))
                .unwrap();
            assert_eq!(argmax, k0, "frame {m}");
        }
    }

    #[test]
    fn round_trip_is_exact() {
        for (len, seed) in [(16_000, 1), (401, 2), (12_345, 3)] {
            let wave = noise(len, seed);
            let back = istft(&stft(&wave, &StftConfig::default()).unwrap()).unwrap();
            assert_eq!(back.len(), len);
            assert!(rel_l2(back.samples(), wave.samples()) <= 1e-6);
        }
    }

    #[test]
    fn power_is_squared_magnitude() {
        let cfg = StftConfig::default();
        let mut data = Array2::<Complex64>::zeros((cfg.n_frames(400), 257));
        data[[0, 3]] = Complex64::new(3.0, 4.0);
        let spec = ComplexSpectrogram::new(data, cfg, 400).unwrap();
        let p = power(&spec);
        assert_eq!(p.data()[[0, 3]], 25.0);
        assert_eq!(p.data()[[0, 4]], 0.0);
    }

    #[test]
    fn scaling_one_frame_only_touches_its_support() {
        let cfg = StftConfig::default();
        let wave = noise(4000, 9);
        let mut spec = stft(&wave, &cfg).unwrap();
        let m = 7;
        spec.data_mut().row_mut(m).mapv_inplace(|c| c * 2.0);
        let out = istft(&spec).unwrap();
        // frame m covers padded [m*hop, m*hop + win) = original [m*hop - pad, ...)
        let lo = m * 200 - 200;
        let hi = lo + 400;
        for (i, (a, b)) in out.samples().iter().zip(wave.samples()).enumerate() {
            if i < lo || i >= hi {
                assert!((a - b).abs() < 1e-12, "sample {i} changed");
            }
        }
        assert!((lo..hi).any(|i| (out.samples()[i] - wave.samples()[i]).abs() > 1e-6));
    }

    #[test]
    fn resynthesis_identity_scale_and_silence() {
        let cfg = StftConfig::default();
        let wave = noise(6000, 4);
        let spec = stft(&wave, &cfg).unwrap();
        let p = power(&spec);

        let same = resynthesize(&p, &spec).unwrap();
        assert!(rel_l2(same.samples(), wave.samples()) <= 1e-6);

        let quad = p.with_data(p.data() * 4.0).unwrap();
        let doubled: Vec<f64> = wave.samples().iter().map(|s| 2.0 * s).collect();
        assert!(rel_l2(resynthesize(&quad, &spec).unwrap().samples(), &doubled) <= 1e-6);

        let zero = p.with_data(Array2::zeros(p.data().dim())).unwrap();
        assert!(resynthesize(&zero, &spec).unwrap().samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn resynthesis_shape_mismatch() {
        let cfg = StftConfig::default();
        let spec = stft(&noise(6000, 4), &cfg).unwrap();
        let other = power(&stft(&noise(5000, 4), &cfg).unwrap());
        assert!(matches!(
            resynthesize(&other, &spec),
            Err(MepError::ShapeMismatch { .. })
        ));
    }
}
