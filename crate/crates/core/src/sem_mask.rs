//! Small-energy masking.
//!
//! Bins whose energy falls more than |η_th| dB below a per-utterance peak are
//! masked out. The peak is the largest energy left after discarding the top
//! fraction of all time-frequency bins, which keeps a handful of outliers
//! from setting the reference level.

use ndarray::{Array2, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{MepError, Result};
use crate::spectral::PowerSpectrum;

pub const DEFAULT_ETA_TH_DB: f64 = -20.0;
pub const DEFAULT_PEAK_EXCLUSION: f64 = 0.05;

/// Draws η_th uniformly from `[min_db, max_db)` instead of using the fixed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomThreshold {
    pub min_db: f64,
    pub max_db: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskConfig {
    pub eta_th: f64,
    pub peak_exclusion_fraction: f64,
    pub rescale_unmasked: bool,
    pub random_threshold: Option<RandomThreshold>,
}

impl Default for MaskConfig {
    fn default() -> Self {
        Self {
            eta_th: DEFAULT_ETA_TH_DB,
            peak_exclusion_fraction: DEFAULT_PEAK_EXCLUSION,
            rescale_unmasked: false,
            random_threshold: None,
        }
    }
}

impl MaskConfig {
    pub fn with_eta(eta_th: f64) -> Self {
        Self {
            eta_th,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta_th < 0.0) {
            return Err(MepError::InvalidMaskConfig(format!(
                "eta_th must be negative, got {}",
                self.eta_th
            )));
        }
        if !(0.0..1.0).contains(&self.peak_exclusion_fraction) {
            return Err(MepError::InvalidMaskConfig(format!(
                "peak exclusion fraction must lie in [0, 1), got {}",
                self.peak_exclusion_fraction
            )));
        }
        if let Some(r) = &self.random_threshold {
            if !(r.min_db < r.max_db && r.max_db <= 0.0) {
                return Err(MepError::InvalidMaskConfig(format!(
                    "random threshold range [{}, {}) must be non-empty and non-positive",
                    r.min_db, r.max_db
                )));
            }
        }
        Ok(())
    }

    /// The threshold in dB actually used: the fixed η_th, or one seeded draw.
    pub fn effective_eta(&self) -> f64 {
        match &self.random_threshold {
            None => self.eta_th,
            Some(r) => ChaCha8Rng::seed_from_u64(r.seed).random_range(r.min_db..r.max_db),
        }
    }
}

/// Binary keep-mask μ together with the levels it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyMask {
    keep: Array2<bool>,
    pub x_peak: f64,
    pub x_th: f64,
    pub eta_th: f64,
}

impl EnergyMask {
    pub fn keep(&self) -> &Array2<bool> {
        &self.keep
    }

    pub fn shape(&self) -> (usize, usize) {
        self.keep.dim()
    }

    /// μ as 0.0/1.0.
    pub fn as_f64(&self) -> Array2<f64> {
        self.keep.mapv(|k| if k { 1.0 } else { 0.0 })
    }

    pub fn all_ones(shape: (usize, usize)) -> Self {
        Self::from_keep(Array2::from_elem(shape, true))
    }

    pub fn all_zeros(shape: (usize, usize)) -> Self {
        Self::from_keep(Array2::from_elem(shape, false))
    }

    /// A mask not tied to any threshold (levels are NaN).
    pub fn from_keep(keep: Array2<bool>) -> Self {
        Self {
            keep,
            x_peak: f64::NAN,
            x_th: f64::NAN,
            eta_th: f64::NAN,
        }
    }

    pub fn kept_count(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    /// Share of bins with μ = 0.
    pub fn masked_fraction(&self) -> f64 {
        let n = self.keep.len();
        if n == 0 {
            return 0.0;
        }
        (n - self.kept_count()) as f64 / n as f64
    }
}

/// 10·log₁₀(x / x_peak). Diagnostic only; masking compares energies directly.
pub fn db_ratio(x: f64, x_peak: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(MepError::NonPositiveEnergy(x));
    }
    if !(x_peak > 0.0) {
        return Err(MepError::NonPositiveEnergy(x_peak));
    }
    Ok(10.0 * (x / x_peak).log10())
}

pub fn compute_peak(power: &PowerSpectrum, cfg: &MaskConfig) -> Result<f64> {
    cfg.validate()?;
    let mut values: Vec<f64> = power.data().iter().copied().collect();
    if !values.iter().any(|&v| v > 0.0) {
        return Err(MepError::AllZeroEnergy);
    }
    // stable: equal energies keep flattened order
    values.sort_by(|a, b| b.total_cmp(a));
    let discard = (cfg.peak_exclusion_fraction * values.len() as f64).floor() as usize;
    Ok(values[discard.min(values.len() - 1)])
}

pub fn threshold(x_peak: f64, eta_th: f64) -> Result<f64> {
    if !(x_peak > 0.0) {
        return Err(MepError::NonPositivePeak(x_peak));
    }
    Ok(x_peak * 10f64.powf(eta_th / 10.0))
}

pub fn build_mask(power: &PowerSpectrum, cfg: &MaskConfig) -> Result<EnergyMask> {
    let x_peak = compute_peak(power, cfg)?;
    let eta_th = cfg.effective_eta();
    let x_th = threshold(x_peak, eta_th)?;
    let mut mask = mask_at(power, x_th);
    mask.x_peak = x_peak;
    mask.eta_th = eta_th;
    Ok(mask)
}

/// μ[m,k] = 1 iff x[m,k] ≥ `x_th`.
pub fn mask_at(power: &PowerSpectrum, x_th: f64) -> EnergyMask {
    EnergyMask {
        keep: power.data().mapv(|x| x >= x_th),
        x_peak: f64::NAN,
        x_th,
        eta_th: f64::NAN,
    }
}

/// x_sem = μ ⊙ x, optionally rescaled so the total energy is unchanged.
pub fn apply_mask(power: &PowerSpectrum, mask: &EnergyMask, cfg: &MaskConfig) -> Result<PowerSpectrum> {
    if mask.shape() != power.shape() {
        return Err(MepError::ShapeMismatch {
            expected: power.shape(),
            actual: mask.shape(),
        });
    }
    let mut out = Array2::zeros(power.shape());
    Zip::from(&mut out)
        .and(power.data())
        .and(mask.keep())
        .for_each(|o, &x, &k| *o = if k { x } else { 0.0 });
    if cfg.rescale_unmasked {
        let total: f64 = power.data().sum();
        let kept: f64 = out.sum();
        if kept == 0.0 {
            return Err(MepError::RescaleUndefined);
        }
        let scale = total / kept;
        out.mapv_inplace(|v| v * scale);
    }
    power.with_data(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn spectrum(data: Array2<f64>) -> PowerSpectrum {
        PowerSpectrum::from_matrix(data).unwrap()
    }

    /// Tests need arbitrary small shapes, not the 257-bin default.
    fn loose(data: Array2<f64>) -> PowerSpectrum {
        let bins = data.ncols();
        let padded = Array2::from_shape_fn((data.nrows(), 257), |(m, k)| {
            if k < bins {
                data[[m, k]]
            } else {
                0.0
            }
        });
        spectrum(padded)
    }

    #[test]
    fn db_ratio_values() {
        assert_eq!(db_ratio(3.0, 3.0).unwrap(), 0.0);
        assert!((db_ratio(0.01, 1.0).unwrap() + 20.0).abs() < 1e-12);
        assert!((db_ratio(2.0, 1.0).unwrap() - 3.010_299_956_6).abs() < 1e-9);
        assert!(matches!(db_ratio(0.0, 1.0), Err(MepError::NonPositiveEnergy(_))));
    }

    #[test]
    fn peak_skips_top_five_percent() {
        let data = Array2::from_shape_fn((1, 257), |(_, k)| if k < 100 { (k + 1) as f64 } else { 0.0 });
        // 257 entries: floor(0.05 * 257) = 12 are discarded, so the peak is 100 - 12
        assert_eq!(compute_peak(&spectrum(data), &MaskConfig::default()).unwrap(), 88.0);
    }

    #[test]
    fn peak_rule_on_exactly_one_hundred_values() {
        let mut values: Vec<f64> = (1..=100).map(f64::from).collect();
        values.sort_by(|a, b| b.total_cmp(a));
        let discard = (0.05 * values.len() as f64).floor() as usize;
        assert_eq!(values[discard], 95.0);
    }

    #[test]
    fn constant_spectrum_peak() {
        let p = spectrum(Array2::from_elem((3, 257), 7.0));
        assert_eq!(compute_peak(&p, &MaskConfig::default()).unwrap(), 7.0);
        assert!(build_mask(&p, &MaskConfig::default()).unwrap().keep().iter().all(|&k| k));
    }

    #[test]
    fn small_counts_keep_the_maximum() {
        let cfg = MaskConfig {
            peak_exclusion_fraction: 0.05,
            ..MaskConfig::default()
        };
        // 19 * 0.05 < 1, nothing discarded
        let mut values: Vec<f64> = (1..=19).map(f64::from).collect();
        values.sort_by(|a, b| b.total_cmp(a));
        assert_eq!(values[(cfg.peak_exclusion_fraction * 19.0).floor() as usize], 19.0);
    }

    #[test]
    fn all_zero_is_rejected() {
        let p = spectrum(Array2::zeros((2, 257)));
        assert!(matches!(compute_peak(&p, &MaskConfig::default()), Err(MepError::AllZeroEnergy)));
        assert!(matches!(build_mask(&p, &MaskConfig::default()), Err(MepError::AllZeroEnergy)));
    }

    #[test]
    fn threshold_values() {
        assert!((threshold(1.0, -20.0).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(threshold(1.0, 0.0).unwrap(), 1.0);
        assert!((threshold(50.0, -10.0).unwrap() - 5.0).abs() < 1e-12);
        assert!(matches!(threshold(0.0, -20.0), Err(MepError::NonPositivePeak(_))));
    }

    #[test]
    fn injected_threshold_mask() {
        let p = loose(array![[0.5, 0.005], [1.0, 0.02]]);
        let mask = mask_at(&p, 0.01);
        assert_eq!(mask.keep()[[0, 0]], true);
        assert_eq!(mask.keep()[[0, 1]], false);
        assert_eq!(mask.keep()[[1, 0]], true);
        assert_eq!(mask.keep()[[1, 1]], true);
    }

    #[test]
    fn boundary_energy_is_kept() {
        let p = loose(array![[0.01, 0.009_999_999]]);
        let mask = mask_at(&p, 0.01);
        assert!(mask.keep()[[0, 0]]);
        assert!(!mask.keep()[[0, 1]]);
    }

    #[test]
    fn apply_mask_identity_zero_and_rescale() {
        let p = loose(array![[4.0, 1.0]]);
        let ones = EnergyMask::all_ones(p.shape());
        assert_eq!(apply_mask(&p, &ones, &MaskConfig::default()).unwrap(), p);

        let zeros = EnergyMask::all_zeros(p.shape());
        let out = apply_mask(&p, &zeros, &MaskConfig::default()).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));

        let mut keep = Array2::from_elem(p.shape(), false);
        keep[[0, 0]] = true;
        let cfg = MaskConfig {
            rescale_unmasked: true,
            ..MaskConfig::default()
        };
        let out = apply_mask(&p, &EnergyMask::from_keep(keep), &cfg).unwrap();
        assert_eq!(out.data()[[0, 0]], 5.0);
        assert_eq!(out.data()[[0, 1]], 0.0);

        assert!(matches!(apply_mask(&p, &zeros, &cfg), Err(MepError::RescaleUndefined)));
    }

    #[test]
    fn apply_mask_shape_mismatch() {
        let p = loose(array![[4.0, 1.0]]);
        let m = EnergyMask::all_ones((2, 257));
        assert!(matches!(
            apply_mask(&p, &m, &MaskConfig::default()),
            Err(MepError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(MaskConfig::with_eta(0.0).validate().is_err());
        assert!(MaskConfig {
            peak_exclusion_fraction: 1.0,
            ..MaskConfig::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn random_threshold_is_seeded() {
        let cfg = MaskConfig {
            random_threshold: Some(RandomThreshold {
                min_db: -30.0,
                max_db: -10.0,
                seed: 5,
            }),
            ..MaskConfig::default()
        };
        let a = cfg.effective_eta();
        assert_eq!(a, cfg.effective_eta());
        assert!((-30.0..-10.0).contains(&a));
    }
}
