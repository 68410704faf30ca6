//! Quality (SNR, log-spectral distortion) and verification (cosine scoring,
//! EER) metrics.

use ndarray::{ArrayView1, ArrayView2, Zip};

use crate::audio_io::WaveBuffer;
use crate::error::{MepError, Result};

/// Energy floor φ inside the LSD log ratio.
pub const LSD_FLOOR: f64 = 1e-10;

/// 10·log₁₀(Σ clean² / Σ (adv − clean)²). Identical signals give `+∞`.
pub fn snr(clean: &WaveBuffer, adv: &WaveBuffer) -> Result<f64> {
    if clean.sample_rate() != adv.sample_rate() {
        return Err(MepError::UnsupportedFormat(format!(
            "sample rates differ: {} vs {}",
            clean.sample_rate(),
            adv.sample_rate()
        )));
    }
    snr_samples(clean.samples(), adv.samples())
}

pub fn snr_samples(clean: &[f64], adv: &[f64]) -> Result<f64> {
    if clean.len() != adv.len() {
        return Err(MepError::LengthMismatch(clean.len(), adv.len()));
    }
    let signal: f64 = clean.iter().map(|s| s * s).sum();
    let noise: f64 = clean.iter().zip(adv).map(|(c, a)| (a - c) * (a - c)).sum();
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

/// Mean over frames of the RMS (over bins) dB ratio between two power spectra.
pub fn lsd(clean: ArrayView2<f64>, adv: ArrayView2<f64>) -> Result<f64> {
    if clean.dim() != adv.dim() {
        return Err(MepError::ShapeMismatch {
            expected: clean.dim(),
            actual: adv.dim(),
        });
    }
    let (frames, bins) = clean.dim();
    if frames == 0 || bins == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (c, a) in clean.rows().into_iter().zip(adv.rows()) {
        let mut sq = 0.0;
        Zip::from(&c).and(&a).for_each(|&x, &y| {
            let d = 10.0 * ((y + LSD_FLOOR) / (x + LSD_FLOOR)).log10();
            sq += d * d;
        });
        total += (sq / bins as f64).sqrt();
    }
    Ok(total / frames as f64)
}

/// Dot product of two unit embeddings, clamped to [-1, 1].
pub fn cosine_score(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.dot(&b).clamp(-1.0, 1.0)
}

/// Equal error rate in percent.
///
/// Thresholds sweep the sorted union of all scores plus +∞. At threshold t a
/// genuine score is rejected when below t and an imposter accepted when at or
/// above t. FAR − FRR is non-increasing along the sweep; the EER is read at
/// the first point where it reaches zero, interpolating linearly from the
/// previous point when it jumps past zero.
pub fn eer(genuine: &[f64], imposter: &[f64]) -> Result<f64> {
    if genuine.is_empty() || imposter.is_empty() {
        return Err(MepError::EmptyTrialList);
    }
    if genuine.iter().chain(imposter).any(|s| !s.is_finite()) {
        return Err(MepError::InvalidTrialSet("non-finite score".into()));
    }
    let mut g = genuine.to_vec();
    let mut i = imposter.to_vec();
    g.sort_by(f64::total_cmp);
    i.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = g.iter().chain(&i).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    let (ng, ni) = (g.len() as f64, i.len() as f64);
    let rates = |t: f64| {
        let rejected = g.partition_point(|&s| s < t) as f64;
        let accepted = i.len() as f64 - i.partition_point(|&s| s < t) as f64;
        (accepted / ni, rejected / ng)
    };

    let (mut prev_far, mut prev_frr) = rates(thresholds[0]);
    for &t in &thresholds[1..] {
        let (far, frr) = rates(t);
        let d = far - frr;
        if d <= 0.0 {
            if d == 0.0 {
                return Ok(100.0 * far);
            }
            let d_prev = prev_far - prev_frr;
            let lambda = d_prev / (d_prev - d);
            return Ok(100.0 * (prev_far + lambda * (far - prev_far)));
        }
        prev_far = far;
        prev_frr = frr;
    }
    unreachable!("FAR - FRR is -1 at the +inf threshold")
}

/// Enrollment embeddings and scored test embeddings, keyed by speaker.
#[derive(Debug, Clone, Default)]
pub struct TrialSet {
    pub enroll: Vec<(usize, ndarray::Array1<f64>)>,
    pub tests: Vec<(usize, ndarray::Array1<f64>)>,
}

impl TrialSet {
    /// Genuine and imposter cosine scores: every enrollment against every test
    /// utterance, genuine when the speakers match.
    pub fn scores(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut genuine = Vec::new();
        let mut imposter = Vec::new();
        for (spk_e, e) in &self.enroll {
            for (spk_t, t) in &self.tests {
                let s = cosine_score(e.view(), t.view());
                if spk_e == spk_t {
                    genuine.push(s);
                } else {
                    imposter.push(s);
                }
            }
        }
        if genuine.is_empty() || imposter.is_empty() {
            return Err(MepError::InvalidTrialSet(format!(
                "{} genuine and {} imposter trials; need at least one of each",
                genuine.len(),
                imposter.len()
            )));
        }
        Ok((genuine, imposter))
    }

    pub fn eer(&self) -> Result<f64> {
        let (g, i) = self.scores()?;
        eer(&g, &i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    #[test]
    fn snr_definition() {
        let clean: Vec<f64> = (0..100).map(|i| ((i as f64) * 0.3).sin()).collect();
        let noisy: Vec<f64> = clean.iter().map(|c| c * 1.1).collect();
        assert!((snr_samples(&clean, &noisy).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(snr_samples(&clean, &clean).unwrap(), f64::INFINITY);
        let double: Vec<f64> = clean.iter().map(|c| 2.0 * c).collect();
        assert!(snr_samples(&clean, &double).unwrap().abs() < 1e-12);
        assert!(matches!(
            snr_samples(&clean, &clean[..10]),
            Err(MepError::LengthMismatch(100, 10))
        ));
    }

    #[test]
    fn lsd_definition() {
        let x = Array2::from_shape_fn((3, 5), |(m, k)| 0.1 + (m * 5 + k) as f64);
        assert_eq!(lsd(x.view(), x.view()).unwrap(), 0.0);
        // (10x + φ)/(x + φ) is 10 only up to the floor
        let ten = &x * 10.0;
        assert!((lsd(x.view(), ten.view()).unwrap() - 10.0).abs() < 1e-8);
        assert!(lsd(x.view(), Array2::zeros((2, 5)).view()).is_err());
    }

    #[test]
    fn cosine_extremes() {
        let a = array![0.6, 0.8];
        assert!((cosine_score(a.view(), a.view()) - 1.0).abs() < 1e-15);
        assert!((cosine_score(a.view(), (-&a).view()) + 1.0).abs() < 1e-15);
        assert_eq!(cosine_score(a.view(), array![0.8, -0.6].view()), 0.0);
    }

    #[test]
    fn eer_examples() {
        assert_eq!(eer(&[0.9, 0.8], &[0.1, 0.2]).unwrap(), 0.0);
        assert_eq!(eer(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 50.0);
        assert_eq!(eer(&[0.1], &[0.9]).unwrap(), 100.0);
        assert!(matches!(eer(&[], &[0.1]), Err(MepError::EmptyTrialList)));
        assert!(matches!(eer(&[0.1], &[]), Err(MepError::EmptyTrialList)));
    }

    #[test]
    fn trial_set_needs_both_kinds() {
        let one = TrialSet {
            enroll: vec![(0, array![1.0, 0.0])],
            tests: vec![(0, array![1.0, 0.0])],
        };
        assert!(one.scores().is_err());
        let two = TrialSet {
            enroll: vec![(0, array![1.0, 0.0]), (1, array![0.0, 1.0])],
            tests: vec![(0, array![1.0, 0.0]), (1, array![0.0, 1.0])],
        };
        assert_eq!(two.eer().unwrap(), 0.0);
    }
}
