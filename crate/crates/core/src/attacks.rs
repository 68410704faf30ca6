//! Gradient-sign attacks in the linear power-spectrum domain.
//!
//! Every method perturbs x[m,k] directly, evaluates the encoder on the floored
//! spectrum max(x + δ, 0) and keeps ‖δ‖∞ ≤ ε. MEP and I-MEP additionally gate
//! each step with the small-energy mask so low-energy bins are never touched.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio_io::WaveBuffer;
use crate::encoder::{SpeakerModel, TargetEmbedding};
use crate::error::{MepError, Result};
use crate::sem_mask::{build_mask, EnergyMask, MaskConfig};
use crate::spectral::{power, resynthesize, stft, ComplexSpectrogram, PowerSpectrum, StftConfig};

pub const DEFAULT_EPSILON: f64 = 0.0002;
pub const DEFAULT_ITERATIONS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackMethod {
    Fgsm,
    IFgsm,
    MiFgsm,
    Pgd,
    Mep,
    IMep,
}

impl AttackMethod {
    pub const ALL: [AttackMethod; 6] = [
        AttackMethod::Fgsm,
        AttackMethod::IFgsm,
        AttackMethod::MiFgsm,
        AttackMethod::Pgd,
        AttackMethod::Mep,
        AttackMethod::IMep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackMethod::Fgsm => "FGSM",
            AttackMethod::IFgsm => "I-FGSM",
            AttackMethod::MiFgsm => "MI-FGSM",
            AttackMethod::Pgd => "PGD",
            AttackMethod::Mep => "MEP",
            AttackMethod::IMep => "I-MEP",
        }
    }

    pub fn uses_mask(self) -> bool {
        matches!(self, AttackMethod::Mep | AttackMethod::IMep)
    }
}

impl fmt::Display for AttackMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackMethod {
    type Err = MepError;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "fgsm" => Ok(AttackMethod::Fgsm),
            "ifgsm" => Ok(AttackMethod::IFgsm),
            "mifgsm" => Ok(AttackMethod::MiFgsm),
            "pgd" => Ok(AttackMethod::Pgd),
            "mep" => Ok(AttackMethod::Mep),
            "imep" => Ok(AttackMethod::IMep),
            _ => Err(MepError::UnknownName {
                kind: "attack method",
                value: s.to_string(),
            }),
        }
    }
}

/// How the energy mask enters an MEP step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MepMode {
    /// δ-step = α·sign(∇L) ⊙ μ
    #[default]
    GradientMask,
    /// δ-step = α·sign(∇L) ⊙ x_sem, shrunk back into the step budget
    FeatureProduct,
}

impl MepMode {
    pub fn name(self) -> &'static str {
        match self {
            MepMode::GradientMask => "gradient-mask",
            MepMode::FeatureProduct => "feature-product",
        }
    }
}

impl fmt::Display for MepMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MepMode {
    type Err = MepError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "gradient-mask" | "mask" => Ok(MepMode::GradientMask),
            "feature-product" | "product" => Ok(MepMode::FeatureProduct),
            _ => Err(MepError::UnknownName {
                kind: "MEP mode",
                value: s.to_string(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub method: AttackMethod,
    pub epsilon: f64,
    pub iterations: usize,
    /// Step size; `None` means ε / N.
    pub alpha: Option<f64>,
    pub momentum_decay: f64,
    pub random_start: bool,
    pub mep_mode: MepMode,
    pub rng_seed: u64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            method: AttackMethod::IMep,
            epsilon: DEFAULT_EPSILON,
            iterations: DEFAULT_ITERATIONS,
            alpha: None,
            momentum_decay: 1.0,
            random_start: true,
            mep_mode: MepMode::GradientMask,
            rng_seed: 0,
        }
    }
}

impl AttackConfig {
    pub fn for_method(method: AttackMethod) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
            .unwrap_or(self.epsilon / self.iterations.max(1) as f64)
    }

    /// ε = 0 is accepted as the no-op attack.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MepError::InvalidAttackConfig(msg));
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return bad(format!("epsilon must be finite and >= 0, got {}", self.epsilon));
        }
        if self.iterations == 0 {
            return bad("iterations must be >= 1".into());
        }
        let alpha = self.alpha();
        if !(alpha.is_finite() && alpha >= 0.0) {
            return bad(format!("alpha must be finite and >= 0, got {alpha}"));
        }
        if alpha > self.epsilon {
            return bad(format!("alpha {alpha} exceeds epsilon {}", self.epsilon));
        }
        if self.epsilon > 0.0 && alpha == 0.0 {
            return bad("alpha must be positive when epsilon is".into());
        }
        if !(self.momentum_decay.is_finite() && self.momentum_decay >= 0.0) {
            return bad(format!("momentum decay must be >= 0, got {}", self.momentum_decay));
        }
        Ok(())
    }
}

/// Outcome of an attack in the power domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub delta: Array2<f64>,
    /// x̃ = max(x + δ, 0)
    pub perturbed: Array2<f64>,
    /// Loss at the point each gradient was taken, in iteration order.
    pub loss_trace: Vec<f64>,
    pub final_loss: f64,
    pub mask: Option<EnergyMask>,
}

impl Perturbation {
    pub fn max_abs_delta(&self) -> f64 {
        self.delta.iter().fold(0.0, |m, d| m.max(d.abs()))
    }
}

#[derive(Debug, Clone)]
pub struct AttackResult {
    pub perturbation: Perturbation,
    pub power: PowerSpectrum,
    pub adversarial: WaveBuffer,
}

/// sign with sign(0) = 0.
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn floored(x: ArrayView2<f64>, delta: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(x.dim());
    Zip::from(&mut out)
        .and(x)
        .and(delta)
        .for_each(|o, &x, &d| *o = (x + d).max(0.0));
    out
}

struct Objective<'a> {
    model: &'a SpeakerModel,
    target: &'a TargetEmbedding,
    x: ArrayView2<'a, f64>,
}

impl Objective<'_> {
    /// Loss and gradient at max(x + δ, 0); bins held at the floor get zero gradient.
    fn gradient(&self, delta: &Array2<f64>) -> Result<(f64, Array2<f64>)> {
        let point = floored(self.x, delta);
        let mut lg = self.model.grad_power(point.view(), self.target)?;
        Zip::from(&mut lg.grad)
            .and(self.x)
            .and(delta)
            .for_each(|g, &x, &d| {
                if x + d < 0.0 {
                    *g = 0.0;
                }
            });
        Ok((lg.loss, lg.grad))
    }

    fn finish(&self, delta: Array2<f64>, loss_trace: Vec<f64>, mask: Option<EnergyMask>) -> Result<Perturbation> {
        let perturbed = floored(self.x, &delta);
        let final_loss = self.model.loss(perturbed.view(), self.target)?;
        Ok(Perturbation {
            delta,
            perturbed,
            loss_trace,
            final_loss,
            mask,
        })
    }
}

fn clip_inf(delta: &mut Array2<f64>, epsilon: f64) {
    delta.mapv_inplace(|d| d.clamp(-epsilon, epsilon));
}

fn check_mask(x: ArrayView2<f64>, mask: &EnergyMask) -> Result<()> {
    if mask.shape() != x.dim() {
        return Err(MepError::ShapeMismatch {
            expected: x.dim(),
            actual: mask.shape(),
        });
    }
    Ok(())
}

/// One masked step: step·sign(g)⊙μ, or step·sign(g)⊙x_sem scaled so no entry exceeds `budget`.
fn masked_step(
    grad: &Array2<f64>,
    x: ArrayView2<f64>,
    mask: &EnergyMask,
    mode: MepMode,
    step: f64,
    budget: f64,
) -> Array2<f64> {
    let mut out = Array2::zeros(grad.dim());
    match mode {
        MepMode::GradientMask => {
            Zip::from(&mut out)
                .and(grad)
                .and(mask.keep())
                .for_each(|o, &g, &k| *o = if k { step * sign(g) } else { 0.0 });
        }
        MepMode::FeatureProduct => {
            Zip::from(&mut out)
                .and(grad)
                .and(mask.keep())
                .and(x)
                .for_each(|o, &g, &k, &x| *o = if k { step * sign(g) * x } else { 0.0 });
            let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if peak > budget {
                let scale = budget / peak;
                out.mapv_inplace(|v| v * scale);
            }
        }
    }
    out
}

/// Single step of size `step` along sign(∇L(x)).
pub fn fgsm_with_step(
    model: &SpeakerModel,
    x: ArrayView2<f64>,
    target: &TargetEmbedding,
    step: f64,
) -> Result<Perturbation> {
    let obj = Objective { model, target, x };
    let zero = Array2::zeros(x.dim());
    let (loss, grad) = obj.gradient(&zero)?;
    let delta = grad.mapv(|g| step * sign(g));
    obj.finish(delta, vec![loss], None)
}

/// δ = ε·sign(∇L(x)).
pub fn fgsm(model: &SpeakerModel, x: ArrayView2<f64>, target: &TargetEmbedding, cfg: &AttackConfig) -> Result<Perturbation> {
    cfg.validate()?;
    fgsm_with_step(model, x, target, cfg.epsilon)
}

fn iterate(
    obj: &Objective<'_>,
    cfg: &AttackConfig,
    mut delta: Array2<f64>,
) -> Result<Perturbation> {
    let alpha = cfg.alpha();
    let mut trace = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let (loss, grad) = obj.gradient(&delta)?;
        trace.push(loss);
        Zip::from(&mut delta).and(&grad).for_each(|d, &g| *d += alpha * sign(g));
        clip_inf(&mut delta, cfg.epsilon);
    }
    obj.finish(delta, trace, None)
}

/// N steps of δ ← clip(δ + α·sign(∇L(x + δ)), ε) from δ = 0.
pub fn i_fgsm(model: &SpeakerModel, x: ArrayView2<f64>, target: &TargetEmbedding, cfg: &AttackConfig) -> Result<Perturbation> {
    cfg.validate()?;
    let obj = Objective { model, target, x };
    iterate(&obj, cfg, Array2::zeros(x.dim()))
}

/// Momentum variant: g ← μ·g + ∇L/‖∇L‖₁, steps along sign(g).
pub fn mi_fgsm(model: &SpeakerModel, x: ArrayView2<f64>, target: &TargetEmbedding, cfg: &AttackConfig) -> Result<Perturbation> {
    cfg.validate()?;
    let obj = Objective { model, target, x };
    let alpha = cfg.alpha();
    let mut delta = Array2::zeros(x.dim());
    let mut momentum = Array2::<f64>::zeros(x.dim());
    let mut trace = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let (loss, grad) = obj.gradient(&delta)?;
        trace.push(loss);
        let l1: f64 = grad.iter().map(|g| g.abs()).sum();
        let inv = if l1 > 0.0 { 1.0 / l1 } else { 0.0 };
        Zip::from(&mut momentum)
            .and(&grad)
            .for_each(|m, &g| *m = cfg.momentum_decay * *m + g * inv);
        Zip::from(&mut delta).and(&momentum).for_each(|d, &m| *d += alpha * sign(m));
        clip_inf(&mut delta, cfg.epsilon);
    }
    obj.finish(delta, trace, None)
}

/// Seeded uniform start in [-ε, ε], then projected sign steps.
pub fn pgd(model: &SpeakerModel, x: ArrayView2<f64>, target: &TargetEmbedding, cfg: &AttackConfig) -> Result<Perturbation> {
    cfg.validate()?;
    let obj = Objective { model, target, x };
    iterate(&obj, cfg, pgd_start(x.dim(), cfg))
}

pub fn pgd_start(shape: (usize, usize), cfg: &AttackConfig) -> Array2<f64> {
    if !cfg.random_start || cfg.epsilon == 0.0 {
        return Array2::zeros(shape);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let eps = cfg.epsilon;
    Array2::from_shape_simple_fn(shape, || rng.random_range(-eps..=eps))
}

/// Single masked step. Steps by α (not ε).
pub fn mep(
    model: &SpeakerModel,
    x: ArrayView2<f64>,
    target: &TargetEmbedding,
    mask: &EnergyMask,
    cfg: &AttackConfig,
) -> Result<Perturbation> {
    cfg.validate()?;
    check_mask(x, mask)?;
    let obj = Objective { model, target, x };
    let zero = Array2::zeros(x.dim());
    let (loss, grad) = obj.gradient(&zero)?;
    let delta = masked_step(&grad, x, mask, cfg.mep_mode, cfg.alpha(), cfg.epsilon);
    obj.finish(delta, vec![loss], Some(mask.clone()))
}

/// Iterative masked steps, each clipped back into the ε-ball.
pub fn i_mep(
    model: &SpeakerModel,
    x: ArrayView2<f64>,
    target: &TargetEmbedding,
    mask: &EnergyMask,
    cfg: &AttackConfig,
) -> Result<Perturbation> {
    cfg.validate()?;
    check_mask(x, mask)?;
    let obj = Objective { model, target, x };
    let alpha = cfg.alpha();
    let mut delta = Array2::zeros(x.dim());
    let mut trace = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        let (loss, grad) = obj.gradient(&delta)?;
        trace.push(loss);
        delta += &masked_step(&grad, x, mask, cfg.mep_mode, alpha, alpha);
        clip_inf(&mut delta, cfg.epsilon);
    }
    obj.finish(delta, trace, Some(mask.clone()))
}

/// Dispatches on `cfg.method`. `mask` is required for MEP and I-MEP.
pub fn perturb(
    model: &SpeakerModel,
    x: ArrayView2<f64>,
    target: &TargetEmbedding,
    mask: Option<&EnergyMask>,
    cfg: &AttackConfig,
) -> Result<Perturbation> {
    let need_mask = || {
        mask.ok_or_else(|| {
            MepError::InvalidAttackConfig(format!("{} requires an energy mask", cfg.method))
        })
    };
    match cfg.method {
        AttackMethod::Fgsm => fgsm(model, x, target, cfg),
        AttackMethod::IFgsm => i_fgsm(model, x, target, cfg),
        AttackMethod::MiFgsm => mi_fgsm(model, x, target, cfg),
        AttackMethod::Pgd => pgd(model, x, target, cfg),
        AttackMethod::Mep => mep(model, x, target, need_mask()?, cfg),
        AttackMethod::IMep => i_mep(model, x, target, need_mask()?, cfg),
    }
}

/// Full pipeline on one utterance: power, mask (MEP methods), attack, and
/// resynthesis with the original phase.
pub fn run_attack(
    spec: &ComplexSpectrogram,
    model: &SpeakerModel,
    target: &TargetEmbedding,
    cfg: &AttackConfig,
    mask_cfg: &MaskConfig,
) -> Result<AttackResult> {
    let clean = power(spec);
    let mask = if cfg.method.uses_mask() {
        Some(build_mask(&clean, mask_cfg)?)
    } else {
        None
    };
    let perturbation = perturb(model, clean.data().view(), target, mask.as_ref(), cfg)?;
    let adv_power = clean.with_data(perturbation.perturbed.clone())?;
    let adversarial = resynthesize(&adv_power, spec)?;
    Ok(AttackResult {
        perturbation,
        power: adv_power,
        adversarial,
    })
}

/// [`run_attack`] starting from audio. An all-zero δ returns the input
/// samples unchanged rather than their (rounding-level) resynthesis.
pub fn attack_wave(
    wave: &WaveBuffer,
    stft_cfg: &StftConfig,
    model: &SpeakerModel,
    target: &TargetEmbedding,
    cfg: &AttackConfig,
    mask_cfg: &MaskConfig,
) -> Result<AttackResult> {
    let spec = stft(wave, stft_cfg)?;
    let mut result = run_attack(&spec, model, target, cfg, mask_cfg)?;
    if result.perturbation.delta.iter().all(|&d| d == 0.0) {
        result.adversarial = wave.clone();
    }
    Ok(result)
}
