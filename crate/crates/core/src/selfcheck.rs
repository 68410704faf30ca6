//! Built-in verification suites run by `mep selfcheck`.
//!
//! Three suites: analytic gradients against central finite differences, STFT
//! round-trip reconstruction, and the energy mask against a naive
//! recomputation. Each suite reports how many of its cases passed.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::audio_io::WaveBuffer;
use crate::encoder::{SpeakerModel, TargetEmbedding};
use crate::error::Result;
use crate::sem_mask::{build_mask, MaskConfig};
use crate::spectral::{istft, stft, PowerSpectrum, StftConfig};

pub const GRADIENT_REL_TOL: f64 = 1e-3;
pub const GRADIENT_MIN_MAGNITUDE: f64 = 1e-8;
pub const RECONSTRUCTION_TOL: f64 = 1e-6;

/// Deliberate defects for exercising the failure path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FaultInjection {
    /// Scales the filterbank backward pass by 1.05.
    pub corrupt_mel_backward: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: usize,
    pub total: usize,
    pub detail: String,
}

impl SuiteReport {
    pub fn ok(&self) -> bool {
        self.passed == self.total
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SelfcheckReport {
    pub suites: Vec<SuiteReport>,
}

impl SelfcheckReport {
    pub fn ok(&self) -> bool {
        self.suites.iter().all(SuiteReport::ok)
    }

    pub fn failed(&self) -> impl Iterator<Item = &SuiteReport> {
        self.suites.iter().filter(|s| !s.ok())
    }
}

pub fn run(fault: FaultInjection) -> Result<SelfcheckReport> {
    Ok(SelfcheckReport {
        suites: vec![gradient_suite(fault)?, reconstruction_suite()?, mask_suite()?],
    })
}

fn random_power(rng: &mut ChaCha8Rng, frames: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((frames, 257), || rng.random_range(0.01..1.0))
}

fn analytic_grad(
    model: &SpeakerModel,
    x: ArrayView2<f64>,
    target: &TargetEmbedding,
    fault: FaultInjection,
) -> Result<Array2<f64>> {
    let feats = model.filterbank.apply_matrix(x)?;
    let up = model.encoder.grad_log_mel(feats.log_mel.view(), target)?;
    let grad = model
        .filterbank
        .backward_with_mel(up.grad.view(), feats.mel.view())?;
    Ok(if fault.corrupt_mel_backward {
        grad * 1.05
    } else {
        grad
    })
}

/// Largest relative error between the analytic gradient and central
/// differences with step 1e-6·max(x, 1), over entries with |grad| > 1e-8.
pub fn gradient_max_rel_error(
    model: &SpeakerModel,
    x: &Array2<f64>,
    target: &TargetEmbedding,
    grad: &Array2<f64>,
) -> Result<f64> {
    let mut worst = 0.0f64;
    let mut probe = x.clone();
    for ((m, k), &g) in grad.indexed_iter() {
        if g.abs() <= GRADIENT_MIN_MAGNITUDE {
            continue;
        }
        let h = 1e-6 * x[[m, k]].max(1.0);
        let orig = probe[[m, k]];
        probe[[m, k]] = orig + h;
        let up = model.loss(probe.view(), target)?;
        probe[[m, k]] = orig - h;
        let down = model.loss(probe.view(), target)?;
        probe[[m, k]] = orig;
        let fd = (up - down) / (2.0 * h);
        worst = worst.max((fd - g).abs() / g.abs());
    }
    Ok(worst)
}

fn gradient_suite(fault: FaultInjection) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x6ead);
    let mut passed = 0;
    let mut worst = 0.0f64;
    let total = 4;
    for case in 0..total {
        let model = SpeakerModel::new(1000 + case as u64);
        let frames = 4 + case % 3;
        let x = random_power(&mut rng, frames);
        let target = TargetEmbedding::random(case as u64);
        let grad = analytic_grad(&model, x.view(), &target, fault)?;
        let err = gradient_max_rel_error(&model, &x, &target, &grad)?;
        worst = worst.max(err);
        if err <= GRADIENT_REL_TOL {
            passed += 1;
        }
    }
    Ok(SuiteReport {
        name: "gradient",
        passed,
        total,
        detail: format!("max relative error {worst:.3e} (limit {GRADIENT_REL_TOL:.0e})"),
    })
}

fn reconstruction_suite() -> Result<SuiteReport> {
    let cfg = StftConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x57f7);
    let total = 5;
    let mut passed = 0;
    let mut worst = 0.0f64;
    for case in 0..total {
        let len = 400 + case * 3917;
        let samples: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let wave = WaveBuffer::from_samples(samples)?;
        let back = istft(&stft(&wave, &cfg)?)?;
        let num: f64 = back
            .samples()
            .iter()
            .zip(wave.samples())
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        let den: f64 = wave.samples().iter().map(|s| s * s).sum();
        let err = (num / den).sqrt();
        worst = worst.max(err);
        if err <= RECONSTRUCTION_TOL {
            passed += 1;
        }
    }
    Ok(SuiteReport {
        name: "stft-round-trip",
        passed,
        total,
        detail: format!("max relative L2 error {worst:.3e} (limit {RECONSTRUCTION_TOL:.0e})"),
    })
}

/// Insertion sort, the peak, and an elementwise comparison, written out longhand.
fn naive_mask(x: &Array2<f64>, cfg: &MaskConfig) -> Vec<bool> {
    let flat: Vec<f64> = x.iter().copied().collect();
    let mut sorted: Vec<f64> = Vec::with_capacity(flat.len());
    for &v in &flat {
        let pos = sorted.iter().position(|&s| s < v).unwrap_or(sorted.len());
        sorted.insert(pos, v);
    }
    let skip = (cfg.peak_exclusion_fraction * flat.len() as f64) as usize;
    let peak = sorted[skip];
    let th = peak * 10f64.powf(cfg.eta_th / 10.0);
    flat.iter().map(|&v| v >= th).collect()
}

fn mask_suite() -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3a5c);
    let cfg = MaskConfig::default();
    let total = 10;
    let mut passed = 0;
    for _ in 0..total {
        let frames = rng.random_range(2..10);
        let x = Array2::from_shape_simple_fn((frames, 257), || {
            let db: f64 = rng.random_range(-60.0..0.0);
            10f64.powf(db / 10.0)
        });
        let power = PowerSpectrum::from_matrix(x.clone())?;
        let mask = build_mask(&power, &cfg)?;
        let got: Vec<bool> = mask.keep().iter().copied().collect();
        if got == naive_mask(&x, &cfg) {
            passed += 1;
        }
    }
    Ok(SuiteReport {
        name: "mask-oracle",
        passed,
        total,
        detail: "build_mask vs naive sort/percentile/compare".into(),
    })
}
