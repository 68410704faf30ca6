//! Independent reference computations for the integration tests.
//!
//! Everything here is deliberately written with plain loops over `Vec`s and
//! shares no code path with the library beyond reading weights and filterbank
//! coefficients.

#![allow(dead_code)]

use mep_core::encoder::{EncoderState, STD_EPS};
use mep_core::spectral::MelFilterbank;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Energies spread over 60 dB, like a real spectrogram.
pub fn random_power(rng: &mut ChaCha8Rng, frames: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((frames, 257), || 10f64.powf(rng.random_range(-6.0..0.0)))
}

/// Uniform energies in [0.01, 1): keeps every mel channel well above the floor.
pub fn moderate_power(rng: &mut ChaCha8Rng, frames: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((frames, 257), || rng.random_range(0.01..1.0))
}

pub fn naive_log_mel(fb: &MelFilterbank, x: &Array2<f64>) -> Vec<Vec<f64>> {
    let w = fb.weights();
    let mut out = vec![vec![0.0; w.nrows()]; x.nrows()];
    for m in 0..x.nrows() {
        for c in 0..w.nrows() {
            let mut acc = 0.0;
            for k in 0..w.ncols() {
                acc += w[[c, k]] * x[[m, k]];
            }
            out[m][c] = if acc > fb.log_floor() { acc } else { fb.log_floor() }.ln();
        }
    }
    out
}

/// Straight re-evaluation of the encoder arithmetic.
pub fn naive_embed(enc: &EncoderState, log_mel: &[Vec<f64>]) -> Vec<f64> {
    let frames = log_mel.len();
    let channels = log_mel[0].len();
    let mut total = 0.0;
    for row in log_mel {
        for v in row {
            total += v;
        }
    }
    let mean_in = total / (frames * channels) as f64;

    let hidden = enc.b1.len();
    let mut h2 = vec![vec![0.0; hidden]; frames];
    for m in 0..frames {
        let mut h1 = vec![0.0; hidden];
        for j in 0..hidden {
            let mut a = enc.b1[j];
            for c in 0..channels {
                a += enc.w1[[j, c]] * (log_mel[m][c] - mean_in);
            }
            h1[j] = a.tanh();
        }
        for j in 0..hidden {
            let mut a = enc.b2[j];
            for i in 0..hidden {
                a += enc.w2[[j, i]] * h1[i];
            }
            h2[m][j] = a.tanh();
        }
    }
    let mut pooled = vec![0.0; 2 * hidden];
    for j in 0..hidden {
        let mu = (0..frames).map(|m| h2[m][j]).sum::<f64>() / frames as f64;
        let var = (0..frames).map(|m| (h2[m][j] - mu).powi(2)).sum::<f64>() / frames as f64;
        pooled[j] = mu;
        pooled[hidden + j] = (var + STD_EPS).sqrt();
    }
    let dim = enc.b3.len();
    let mut z = vec![0.0; dim];
    for d in 0..dim {
        let mut a = enc.b3[d];
        for (i, p) in pooled.iter().enumerate() {
            a += enc.w3[[d, i]] * p;
        }
        z[d] = a;
    }
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    z.iter().map(|v| v / norm).collect()
}

/// Naive SEM mask: insertion sort, skip the top fraction, compare.
pub fn naive_mask(x: &Array2<f64>, eta_th: f64, fraction: f64) -> Vec<bool> {
    let flat: Vec<f64> = x.iter().copied().collect();
    let mut sorted: Vec<f64> = Vec::new();
    for &v in &flat {
        let mut i = 0;
        while i < sorted.len() && sorted[i] >= v {
            i += 1;
        }
        sorted.insert(i, v);
    }
    let skip = (fraction * flat.len() as f64) as usize;
    let th = sorted[skip] * 10f64.powf(eta_th / 10.0);
    flat.iter().map(|&v| v >= th).collect()
}

/// Every candidate threshold (each score, then +inf) counted from scratch,
/// then the first FAR <= FRR crossing with linear interpolation.
pub fn brute_force_eer(genuine: &[f64], imposter: &[f64]) -> f64 {
    let mut cands: Vec<f64> = genuine.iter().chain(imposter).copied().collect();
    cands.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cands.dedup();
    cands.push(f64::INFINITY);
    let mut pts = Vec::new();
    for &t in &cands {
        let fa = imposter.iter().filter(|&&s| s >= t).count() as f64 / imposter.len() as f64;
        let fr = genuine.iter().filter(|&&s| s < t).count() as f64 / genuine.len() as f64;
        pts.push((fa, fr));
    }
    for i in 1..pts.len() {
        let (fa, fr) = pts[i];
        if fa <= fr {
            if fa == fr {
                return 100.0 * fa;
            }
            let (pfa, pfr) = pts[i - 1];
            // intersect the two segments
            let lambda = (pfa - pfr) / ((pfa - pfr) - (fa - fr));
            return 100.0 * (pfr + lambda * (fr - pfr));
        }
    }
    unreachable!()
}

pub fn naive_lsd(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let (frames, bins) = a.dim();
    let mut total = 0.0;
    for m in 0..frames {
        let mut s = 0.0;
        for k in 0..bins {
            let r = 10.0 * ((b[[m, k]] + 1e-10) / (a[[m, k]] + 1e-10)).log10();
            s += r * r;
        }
        total += (s / bins as f64).sqrt();
    }
    total / frames as f64
}

/// Central differences of `f` at every entry of `x`, step 1e-6·max(x, 1).
pub fn finite_difference(x: &Array2<f64>, mut f: impl FnMut(&Array2<f64>) -> f64) -> Array2<f64> {
    let mut probe = x.clone();
    let mut out = Array2::zeros(x.dim());
    for m in 0..x.nrows() {
        for k in 0..x.ncols() {
            let h = 1e-6 * x[[m, k]].max(1.0);
            let orig = probe[[m, k]];
            probe[[m, k]] = orig + h;
            let up = f(&probe);
            probe[[m, k]] = orig - h;
            let down = f(&probe);
            probe[[m, k]] = orig;
            out[[m, k]] = (up - down) / (2.0 * h);
        }
    }
    out
}

pub fn sgn(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
