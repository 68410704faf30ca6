//! Enroll/test/imposter evaluation of attacks over a set of utterances.
//!
//! The first utterance of every speaker is its clean enrollment. Every other
//! utterance is a test utterance: it is attacked with its own speaker's
//! enrollment embedding as the target, re-analyzed from the adversarial
//! waveform, and scored against all enrollments.

use std::fmt::Write as _;

use ndarray::Array1;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::attacks::{attack_wave, AttackConfig, AttackMethod};
use crate::corpus::{CorpusSpec, Utterance};
use crate::encoder::{SpeakerModel, TargetEmbedding};
use crate::error::{MepError, Result};
use crate::metrics::{lsd, snr, TrialSet};
use crate::sem_mask::MaskConfig;
use crate::spectral::{power, stft, PowerSpectrum, StftConfig};

/// Finite values as JSON numbers, infinities and NaN as the strings
/// `"inf"`, `"-inf"` and `"nan"`.
fn ser_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

fn ser_f64_vec<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    struct Wrapped(f64);
    impl Serialize for Wrapped {
        fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
            ser_f64(&self.0, s)
        }
    }
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&Wrapped(*x))?;
    }
    seq.end()
}

fn format_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.4}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// One row of the evaluation table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub method: String,
    pub epsilon: f64,
    pub iterations: usize,
    pub alpha: f64,
    pub eta_th: f64,
    pub mep_mode: String,
    #[serde(serialize_with = "ser_f64")]
    pub snr_db_mean: f64,
    #[serde(serialize_with = "ser_f64_vec")]
    pub snr_db_per_utterance: Vec<f64>,
    pub lsd_db_mean: f64,
    pub eer_percent: f64,
    pub baseline_eer_percent: f64,
    /// Always null; reserved for externally computed PESQ.
    pub pesq: Option<f64>,
    pub max_abs_delta: f64,
    pub budget_ok: bool,
    #[serde(serialize_with = "ser_f64")]
    pub mean_initial_loss: f64,
    #[serde(serialize_with = "ser_f64")]
    pub mean_final_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialCounts {
    pub enroll: usize,
    pub test: usize,
    pub genuine: usize,
    pub imposter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub model: String,
    pub encoder_seed: u64,
    pub corpus: Option<CorpusSpec>,
    pub epsilon: f64,
    pub iterations: usize,
    pub alpha: f64,
    pub eta_th: f64,
    pub mep_mode: String,
    pub trials: TrialCounts,
    pub reports: Vec<MetricReport>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serializable")
    }

    /// Table layout: model, method, PESQ, SNR, LSD, EER.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,method,pesq,snr_db,lsd_db,eer_percent\n");
        for r in &self.reports {
            let _ = writeln!(
                out,
                "{},{},,{},{},{}",
                self.model,
                r.method,
                format_f64(r.snr_db_mean),
                format_f64(r.lsd_db_mean),
                format_f64(r.eer_percent)
            );
        }
        out
    }

    pub fn row(&self, method: &str) -> Option<&MetricReport> {
        self.reports.iter().find(|r| r.method == method)
    }
}

struct Prepared {
    speaker: usize,
    wave: crate::audio_io::WaveBuffer,
    power: PowerSpectrum,
    embedding: Array1<f64>,
}

/// Clean analysis of a corpus, reusable across attack methods.
pub struct Evaluator<'a> {
    model: &'a SpeakerModel,
    stft_cfg: StftConfig,
    mask_cfg: MaskConfig,
    enroll: Vec<Prepared>,
    tests: Vec<Prepared>,
    baseline_eer: f64,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        utterances: &[Utterance],
        model: &'a SpeakerModel,
        stft_cfg: StftConfig,
        mask_cfg: MaskConfig,
    ) -> Result<Self> {
        mask_cfg.validate()?;
        let prepared = utterances
            .par_iter()
            .map(|u| {
                let spec = stft(&u.wave, &stft_cfg)?;
                let p = power(&spec);
                let embedding = model.embed(&p)?;
                Ok(Prepared {
                    speaker: u.speaker,
                    wave: u.wave.clone(),
                    power: p,
                    embedding,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let mut enroll: Vec<Prepared> = Vec::new();
        let mut tests = Vec::new();
        for p in prepared {
            if enroll.iter().any(|e| e.speaker == p.speaker) {
                tests.push(p);
            } else {
                enroll.push(p);
            }
        }
        let mut eval = Self {
            model,
            stft_cfg,
            mask_cfg,
            enroll,
            tests,
            baseline_eer: f64::NAN,
        };
        let clean: Vec<Array1<f64>> = eval.tests.iter().map(|t| t.embedding.clone()).collect();
        eval.baseline_eer = eval.trials(clean).eer()?;
        Ok(eval)
    }

    fn trials(&self, test_embeddings: Vec<Array1<f64>>) -> TrialSet {
        TrialSet {
            enroll: self
                .enroll
                .iter()
                .map(|e| (e.speaker, e.embedding.clone()))
                .collect(),
            tests: self
                .tests
                .iter()
                .zip(test_embeddings)
                .map(|(t, e)| (t.speaker, e))
                .collect(),
        }
    }

    pub fn trial_counts(&self) -> TrialCounts {
        let genuine: usize = self
            .enroll
            .iter()
            .map(|e| self.tests.iter().filter(|t| t.speaker == e.speaker).count())
            .sum();
        TrialCounts {
            enroll: self.enroll.len(),
            test: self.tests.len(),
            genuine,
            imposter: self.enroll.len() * self.tests.len() - genuine,
        }
    }

    pub fn baseline_eer(&self) -> f64 {
        self.baseline_eer
    }

    pub fn baseline(&self) -> MetricReport {
        MetricReport {
            method: "baseline".into(),
            epsilon: 0.0,
            iterations: 0,
            alpha: 0.0,
            eta_th: self.mask_cfg.eta_th,
            mep_mode: String::new(),
            snr_db_mean: f64::INFINITY,
            snr_db_per_utterance: vec![f64::INFINITY; self.tests.len()],
            lsd_db_mean: 0.0,
            eer_percent: self.baseline_eer,
            baseline_eer_percent: self.baseline_eer,
            pesq: None,
            max_abs_delta: 0.0,
            budget_ok: true,
            mean_initial_loss: f64::NAN,
            mean_final_loss: f64::NAN,
        }
    }

    /// Attacks every test utterance with `cfg` and scores the result.
    pub fn evaluate_attack(&self, cfg: &AttackConfig) -> Result<MetricReport> {
        cfg.validate()?;
        struct Outcome {
            snr: f64,
            lsd: f64,
            embedding: Array1<f64>,
            max_abs_delta: f64,
            initial_loss: f64,
            final_loss: f64,
        }
        let outcomes = self
            .tests
            .par_iter()
            .enumerate()
            .map(|(i, t)| {
                let enroll = self
                    .enroll
                    .iter()
                    .find(|e| e.speaker == t.speaker)
                    .expect("every test speaker is enrolled");
                let target = TargetEmbedding::normalized(enroll.embedding.clone())?;
                let cfg_i = AttackConfig {
                    rng_seed: cfg.rng_seed.wrapping_add(i as u64),
                    ..cfg.clone()
                };
                let result = attack_wave(&t.wave, &self.stft_cfg, self.model, &target, &cfg_i, &self.mask_cfg)?;
                let adv_power = power(&stft(&result.adversarial, &self.stft_cfg)?);
                Ok(Outcome {
                    snr: snr(&t.wave, &result.adversarial)?,
                    lsd: lsd(t.power.data().view(), adv_power.data().view())?,
                    embedding: self.model.embed(&adv_power)?,
                    max_abs_delta: result.perturbation.max_abs_delta(),
                    initial_loss: result.perturbation.loss_trace[0],
                    final_loss: result.perturbation.final_loss,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let n = outcomes.len() as f64;
        let snrs: Vec<f64> = outcomes.iter().map(|o| o.snr).collect();
        let max_abs_delta = outcomes.iter().fold(0.0f64, |m, o| m.max(o.max_abs_delta));
        let mean = |f: fn(&Outcome) -> f64| outcomes.iter().map(f).sum::<f64>() / n;
        let snr_db_mean = snrs.iter().sum::<f64>() / n;
        let lsd_db_mean = mean(|o| o.lsd);
        let mean_initial_loss = mean(|o| o.initial_loss);
        let mean_final_loss = mean(|o| o.final_loss);
        let eer_percent = self
            .trials(outcomes.into_iter().map(|o| o.embedding).collect())
            .eer()?;

        Ok(MetricReport {
            method: cfg.method.name().into(),
            epsilon: cfg.epsilon,
            iterations: cfg.iterations,
            alpha: cfg.alpha(),
            eta_th: self.mask_cfg.eta_th,
            mep_mode: cfg.mep_mode.name().into(),
            snr_db_mean,
            snr_db_per_utterance: snrs,
            lsd_db_mean,
            eer_percent,
            baseline_eer_percent: self.baseline_eer,
            pesq: None,
            max_abs_delta,
            budget_ok: max_abs_delta <= cfg.epsilon,
            mean_initial_loss,
            mean_final_loss,
        })
    }
}

/// Baseline row plus one row per method, all sharing `base` hyperparameters.
pub fn evaluate(
    utterances: &[Utterance],
    corpus: Option<&CorpusSpec>,
    model: &SpeakerModel,
    methods: &[AttackMethod],
    base: &AttackConfig,
    mask_cfg: &MaskConfig,
) -> Result<EvaluationReport> {
    if utterances.is_empty() {
        return Err(MepError::InvalidTrialSet("no utterances".into()));
    }
    let evaluator = Evaluator::new(utterances, model, StftConfig::default(), mask_cfg.clone())?;
    let mut reports = vec![evaluator.baseline()];
    for &method in methods {
        log::info!("evaluating {method}");
        let cfg = AttackConfig {
            method,
            ..base.clone()
        };
        reports.push(evaluator.evaluate_attack(&cfg)?);
    }
    Ok(EvaluationReport {
        model: format!("toy-encoder-{}", model.encoder.seed()),
        encoder_seed: model.encoder.seed(),
        corpus: corpus.cloned(),
        epsilon: base.epsilon,
        iterations: base.iterations,
        alpha: base.alpha(),
        eta_th: mask_cfg.eta_th,
        mep_mode: base.mep_mode.name().into(),
        trials: evaluator.trial_counts(),
        reports,
    })
}
