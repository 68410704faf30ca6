//! Toy speaker encoder with a hand-written backward pass.
//!
//! log-mel → utterance mean removal → two tanh layers applied per frame →
//! mean ‖ std statistics pooling → linear projection → L2 normalization.
//! Weights are untrained and drawn from a seeded ChaCha stream, which is all
//! a white-box gradient attack needs.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MepError, Result};
use crate::spectral::{MelConfig, MelFilterbank, PowerSpectrum, StftConfig};

pub const HIDDEN: usize = 128;
pub const EMBEDDING_DIM: usize = 64;
pub const MIN_FRAMES: usize = 2;
/// Added to the pooled variance before the square root.
pub const STD_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderState {
    seed: u64,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array2<f64>,
    pub b3: Array1<f64>,
}

fn uniform_layer(rng: &mut ChaCha8Rng, fan_out: usize, fan_in: usize) -> (Array2<f64>, Array1<f64>) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let w = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-bound..=bound));
    let b = Array1::from_shape_simple_fn(fan_out, || rng.random_range(-bound..=bound));
    (w, b)
}

impl EncoderState {
    pub fn new(seed: u64, n_channels: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (w1, b1) = uniform_layer(&mut rng, HIDDEN, n_channels);
        let (w2, b2) = uniform_layer(&mut rng, HIDDEN, HIDDEN);
        let (w3, b3) = uniform_layer(&mut rng, EMBEDDING_DIM, 2 * HIDDEN);
        Self {
            seed,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_channels(&self) -> usize {
        self.w1.ncols()
    }

    /// FNV-1a over the bit patterns of every parameter.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let params = [
            self.w1.view().into_dyn(),
            self.b1.view().into_dyn(),
            self.w2.view().into_dyn(),
            self.b2.view().into_dyn(),
            self.w3.view().into_dyn(),
            self.b3.view().into_dyn(),
        ];
        for p in params {
            for v in p.iter() {
                for byte in v.to_bits().to_le_bytes() {
                    h ^= u64::from(byte);
                    h = h.wrapping_mul(0x0100_0000_01b3);
                }
            }
        }
        h
    }

    fn check_input(&self, log_mel: ArrayView2<f64>) -> Result<()> {
        if log_mel.ncols() != self.n_channels() {
            return Err(MepError::DimensionMismatch {
                expected: self.n_channels(),
                got: log_mel.ncols(),
            });
        }
        if log_mel.nrows() < MIN_FRAMES {
            return Err(MepError::TooFewFrames {
                needed: MIN_FRAMES,
                got: log_mel.nrows(),
            });
        }
        if log_mel.iter().any(|v| !v.is_finite()) {
            return Err(MepError::InvalidShape("non-finite log-mel feature".into()));
        }
        Ok(())
    }

    fn forward_cached(&self, log_mel: ArrayView2<f64>) -> Result<Forward> {
        self.check_input(log_mel)?;
        let frames = log_mel.nrows() as f64;
        let centered = &log_mel - log_mel.mean().unwrap_or(0.0);
        let h1 = (centered.dot(&self.w1.t()) + &self.b1).mapv(f64::tanh);
        let h2 = (h1.dot(&self.w2.t()) + &self.b2).mapv(f64::tanh);

        let mean = h2.sum_axis(Axis(0)) / frames;
        let dev = &h2 - &mean;
        let var = dev.mapv(|d| d * d).sum_axis(Axis(0)) / frames;
        let std = var.mapv(|v| (v + STD_EPS).sqrt());

        let mut pooled = Array1::zeros(2 * HIDDEN);
        pooled.slice_mut(s![..HIDDEN]).assign(&mean);
        pooled.slice_mut(s![HIDDEN..]).assign(&std);

        let z = self.w3.dot(&pooled) + &self.b3;
        let norm = z.dot(&z).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(MepError::DegenerateEmbedding);
        }
        let embedding = &z / norm;
        Ok(Forward {
            h1,
            h2,
            dev,
            std,
            norm,
            embedding,
        })
    }

    /// Unit-norm speaker embedding of a log-mel matrix (frames × channels).
    pub fn embed(&self, log_mel: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.forward_cached(log_mel)?.embedding)
    }

    /// Loss 1 − cos(e, y) and its gradient with respect to the log-mel input.
    pub fn grad_log_mel(&self, log_mel: ArrayView2<f64>, target: &TargetEmbedding) -> Result<LossGrad> {
        if target.dim() != EMBEDDING_DIM {
            return Err(MepError::DimensionMismatch {
                expected: EMBEDDING_DIM,
                got: target.dim(),
            });
        }
        let fwd = self.forward_cached(log_mel)?;
        let e = &fwd.embedding;
        let y = target.as_view();
        let loss = cosine_loss(e.view(), y);

        let frames = log_mel.nrows() as f64;
        // dL/de = -y; through e = z/|z|
        let g_e = y.mapv(|v| -v);
        let g_z = (&g_e - &(e * e.dot(&g_e))) / fwd.norm;
        let g_pooled = self.w3.t().dot(&g_z);
        let g_mean = g_pooled.slice(s![..HIDDEN]);
        let g_std = g_pooled.slice(s![HIDDEN..]);

        // d std_j / d h2[m,j] = dev[m,j] / (M std_j); the mean term cancels
        let std_coef = (&g_std / &fwd.std) / frames;
        let g_h2 = &fwd.dev * &std_coef + &(&g_mean / frames);
        let g_a2 = g_h2 * fwd.h2.mapv(|h| 1.0 - h * h);
        let g_h1 = g_a2.dot(&self.w2);
        let g_a1 = g_h1 * fwd.h1.mapv(|h| 1.0 - h * h);
        let g_centered = g_a1.dot(&self.w1);
        let g_log_mel = &g_centered - g_centered.mean().unwrap_or(0.0);

        Ok(LossGrad {
            loss,
            embedding: fwd.embedding,
            grad: g_log_mel,
        })
    }
}

struct Forward {
    h1: Array2<f64>,
    h2: Array2<f64>,
    dev: Array2<f64>,
    std: Array1<f64>,
    norm: f64,
    embedding: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub embedding: Array1<f64>,
    pub grad: Array2<f64>,
}

/// Unit-norm reference embedding y.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetEmbedding(Array1<f64>);

impl TargetEmbedding {
    /// Normalizes `v` to unit length.
    pub fn normalized(v: Array1<f64>) -> Result<Self> {
        let norm = v.dot(&v).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(MepError::DegenerateEmbedding);
        }
        Ok(Self(v / norm))
    }

    /// Seeded direction drawn uniformly from the unit sphere.
    pub fn random(seed: u64) -> Self {
        use rand_distr::StandardNormal;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = Array1::from_shape_simple_fn(EMBEDDING_DIM, || rng.sample::<f64, _>(StandardNormal));
        Self::normalized(v).expect("gaussian draw is non-zero")
    }

    pub fn as_view(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// 1 − e·y, clamped to [0, 2] against rounding.
pub fn cosine_loss(e: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    (1.0 - e.dot(&y)).clamp(0.0, 2.0)
}

/// Filterbank and encoder composed: the attacked function of the power spectrum.
#[derive(Debug, Clone)]
pub struct SpeakerModel {
    pub filterbank: MelFilterbank,
    pub encoder: EncoderState,
}

impl SpeakerModel {
    pub fn new(encoder_seed: u64) -> Self {
        Self::with_configs(encoder_seed, &MelConfig::default(), &StftConfig::default())
            .expect("default filterbank is valid")
    }

    pub fn with_configs(encoder_seed: u64, mel: &MelConfig, stft: &StftConfig) -> Result<Self> {
        let filterbank = MelFilterbank::new(mel, stft)?;
        let encoder = EncoderState::new(encoder_seed, filterbank.n_channels());
        Ok(Self {
            filterbank,
            encoder,
        })
    }

    pub fn embed(&self, power: &PowerSpectrum) -> Result<Array1<f64>> {
        self.embed_matrix(power.data().view())
    }

    pub fn embed_matrix(&self, power: ArrayView2<f64>) -> Result<Array1<f64>> {
        let feats = self.filterbank.apply_matrix(power)?;
        self.encoder.embed(feats.log_mel.view())
    }

    pub fn loss(&self, power: ArrayView2<f64>, target: &TargetEmbedding) -> Result<f64> {
        Ok(cosine_loss(self.embed_matrix(power)?.view(), target.as_view()))
    }

    /// Loss and exact gradient with respect to every power bin x[m,k].
    pub fn grad_power(&self, power: ArrayView2<f64>, target: &TargetEmbedding) -> Result<LossGrad> {
        let feats = self.filterbank.apply_matrix(power)?;
        let upstream = self.encoder.grad_log_mel(feats.log_mel.view(), target)?;
        let grad = self
            .filterbank
            .backward_with_mel(upstream.grad.view(), feats.mel.view())?;
        Ok(LossGrad { grad, ..upstream })
    }
}
