use ndarray::{Array2, ArrayView2};

use super::stft::{PowerSpectrum, StftConfig};
use crate::audio_io::SAMPLE_RATE;
use crate::error::{MepError, Result};

pub const DEFAULT_LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MelConfig {
    pub n_channels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub log_floor: f64,
}

impl Default for MelConfig {
    fn default() -> Self {
        Self {
            n_channels: 80,
            f_min: 0.0,
            f_max: f64::from(SAMPLE_RATE) / 2.0,
            log_floor: DEFAULT_LOG_FLOOR,
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular HTK-scale filterbank, channels × bins.
///
/// Each row keeps the half-open bin range holding its non-zero weights so
/// that forward and backward passes only touch the support.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Array2<f64>,
    support: Vec<(usize, usize)>,
    log_floor: f64,
}

impl MelFilterbank {
    pub fn new(config: &MelConfig, stft: &StftConfig) -> Result<Self> {
        if config.n_channels == 0 {
            return Err(MepError::InvalidFilterbank("zero channels".into()));
        }
        if !(config.log_floor > 0.0) {
            return Err(MepError::InvalidFilterbank(format!(
                "log floor must be positive, got {}",
                config.log_floor
            )));
        }
        let nyquist = f64::from(SAMPLE_RATE) / 2.0;
        if !(0.0 <= config.f_min && config.f_min < config.f_max && config.f_max <= nyquist) {
            return Err(MepError::InvalidFilterbank(format!(
                "band {}..{} Hz outside 0..{nyquist} Hz",
                config.f_min, config.f_max
            )));
        }

        let n_bins = stft.n_bins();
        let c = config.n_channels;
        let lo = hz_to_mel(config.f_min);
        let hi = hz_to_mel(config.f_max);
        let edges: Vec<f64> = (0..c + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (c + 1) as f64))
            .collect();

        let mut weights = Array2::zeros((c, n_bins));
        let mut support = Vec::with_capacity(c);
        for ch in 0..c {
            let (left, center, right) = (edges[ch], edges[ch + 1], edges[ch + 2]);
            let mut first = None;
            let mut last = 0;
            for k in 0..n_bins {
                let f = stft.bin_hz(k, SAMPLE_RATE);
                let w = if f > left && f < right {
                    if f <= center {
                        (f - left) / (center - left)
                    } else {
                        (right - f) / (right - center)
                    }
                } else {
                    0.0
                };
                if w > 0.0 {
                    weights[[ch, k]] = w;
                    first.get_or_insert(k);
                    last = k;
                }
            }
            let first = first.ok_or_else(|| {
                MepError::InvalidFilterbank(format!(
                    "channel {ch} ({left:.1}-{right:.1} Hz) covers no FFT bin"
                ))
            })?;
            support.push((first, last + 1));
        }
        Ok(Self {
            weights,
            support,
            log_floor: config.log_floor,
        })
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn n_channels(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.weights.ncols()
    }

    pub fn log_floor(&self) -> f64 {
        self.log_floor
    }

    /// Linear mel energies mel[m,c] = Σ_k fb[c,k]·x[m,k].
    pub fn mel_energies(&self, power: ArrayView2<f64>) -> Result<Array2<f64>> {
        if power.ncols() != self.n_bins() {
            return Err(MepError::ShapeMismatch {
                expected: (power.nrows(), self.n_bins()),
                actual: power.dim(),
            });
        }
        let mut mel = Array2::zeros((power.nrows(), self.n_channels()));
        for (x, mut out) in power.rows().into_iter().zip(mel.rows_mut()) {
            for (c, &(a, b)) in self.support.iter().enumerate() {
                let w = self.weights.row(c);
                let mut acc = 0.0;
                for k in a..b {
                    acc += w[k] * x[k];
                }
                out[c] = acc;
            }
        }
        Ok(mel)
    }

    pub fn apply(&self, power: &PowerSpectrum) -> Result<MelFeatures> {
        self.apply_matrix(power.data().view())
    }

    pub fn apply_matrix(&self, power: ArrayView2<f64>) -> Result<MelFeatures> {
        let mel = self.mel_energies(power)?;
        let floor = self.log_floor;
        let log_mel = mel.mapv(|v| v.max(floor).ln());
        Ok(MelFeatures { mel, log_mel })
    }

    /// Pulls a log-mel gradient back to the power spectrum.
    ///
    /// Channels at or below the log floor are constant in the forward pass and
    /// contribute nothing.
    pub fn backward(&self, grad_logmel: ArrayView2<f64>, power: &PowerSpectrum) -> Result<Array2<f64>> {
        let mel = self.mel_energies(power.data().view())?;
        self.backward_with_mel(grad_logmel, mel.view())
    }

    pub fn backward_with_mel(
        &self,
        grad_logmel: ArrayView2<f64>,
        mel: ArrayView2<f64>,
    ) -> Result<Array2<f64>> {
        if grad_logmel.dim() != mel.dim() {
            return Err(MepError::ShapeMismatch {
                expected: mel.dim(),
                actual: grad_logmel.dim(),
            });
        }
        let mut out = Array2::zeros((mel.nrows(), self.n_bins()));
        for ((g, v), mut row) in grad_logmel
            .rows()
            .into_iter()
            .zip(mel.rows())
            .zip(out.rows_mut())
        {
            for (c, &(a, b)) in self.support.iter().enumerate() {
                if v[c] <= self.log_floor || g[c] == 0.0 {
                    continue;
                }
                let scale = g[c] / v[c];
                let w = self.weights.row(c);
                for k in a..b {
                    row[k] += scale * w[k];
                }
            }
        }
        Ok(out)
    }
}

/// Mel energies and their floored logarithm, frames × channels.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFeatures {
    pub mel: Array2<f64>,
    pub log_mel: Array2<f64>,
}

impl MelFeatures {
    pub fn n_frames(&self) -> usize {
        self.log_mel.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.log_mel.ncols()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn default_bank() -> MelFilterbank {
        MelFilterbank::new(&MelConfig::default(), &StftConfig::default()).unwrap()
    }

    #[test]
    fn every_channel_has_weight() {
        let fb = default_bank();
        assert_eq!(fb.weights().dim(), (80, 257));
        for row in fb.weights().rows() {
            assert!(row.iter().all(|&w| w >= 0.0));
            assert!(row.iter().any(|&w| w > 0.0));
        }
    }

    #[test]
    fn mel_scale_round_trips() {
        for hz in [0.0, 100.0, 1000.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(hz)) - hz).abs() < 1e-9);
        }
        assert!((hz_to_mel(1000.0) - 999.985_6).abs() < 1e-3);
    }

    #[test]
    fn too_many_channels_leave_empty_rows() {
        let cfg = MelConfig {
            n_channels: 400,
            ..MelConfig::default()
        };
        assert!(matches!(
            MelFilterbank::new(&cfg, &StftConfig::default()),
            Err(MepError::InvalidFilterbank(_))
        ));
    }

    #[test]
    fn zero_power_hits_the_floor() {
        let fb = default_bank();
        let feats = fb.apply_matrix(Array2::zeros((3, 257)).view()).unwrap();
        let expected = DEFAULT_LOG_FLOOR.ln();
        assert!(feats.log_mel.iter().all(|&v| v == expected));
    }

    #[test]
    fn one_hot_bin_selects_a_column() {
        let fb = default_bank();
        let mut x = Array2::zeros((2, 257));
        x[[1, 37]] = 2.5;
        let feats = fb.apply_matrix(x.view()).unwrap();
        for c in 0..80 {
            assert_eq!(feats.mel[[0, c]], 0.0);
            assert_eq!(feats.mel[[1, c]], fb.weights()[[c, 37]] * 2.5);
        }
    }

    #[test]
    fn scalar_chain_rule() {
        let fb = default_bank();
        let mut x = Array2::zeros((1, 257));
        x[[0, 37]] = 2.0;
        let mel = fb.mel_energies(x.view()).unwrap();
        let c = (0..80).find(|&c| fb.weights()[[c, 37]] > 0.0).unwrap();
        let mut g = Array2::zeros((1, 80));
        g[[0, c]] = 0.7;
        let grad = fb.backward_with_mel(g.view(), mel.view()).unwrap();
        let w = fb.weights()[[c, 37]];
        let expected = 0.7 * w / mel[[0, c]];
        assert!((grad[[0, 37]] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let fb = default_bank();
        let x = Array2::from_elem((2, 257), 0.3);
        let mel = fb.mel_energies(x.view()).unwrap();
        let grad = fb.backward_with_mel(Array2::zeros((2, 80)).view(), mel.view()).unwrap();
        assert!(grad.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_shape_mismatch() {
        let fb = default_bank();
        let mel = Array2::ones((2, 80));
        assert!(matches!(
            fb.backward_with_mel(Array2::zeros((3, 80)).view(), mel.view()),
            Err(MepError::ShapeMismatch { .. })
        ));
    }
}
