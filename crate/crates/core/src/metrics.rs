//! Figures of merit: eigenvalue-product metric, sum rate and Monte Carlo BER.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::detection::{
    effective_matrix, interference_covariance, noise_covariance, Constellation, DetectorMode, PreparedDetector,
    DEFAULT_HYPOTHESIS_CAP,
};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::model::hermitian_inv_sqrt;
use crate::scalar::Real;
use crate::schemes::{DesignResult, SchemeId};

/// One cell of one Monte Carlo trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub scheme: SchemeId,
    pub detector: Option<DetectorMode>,
    pub snr_db: f64,
    pub seed: u64,
    pub eig_metric: f64,
    pub sum_rate: f64,
    pub bit_errors: u64,
    pub bits_sent: u64,
}

/// `2 sum log2 s_i` over the `count` largest singular values of `h_bb`;
/// `-inf` when one of them is zero.
pub fn eig_product_metric<T: Real>(h_bb: &CMatrix<T>, count: usize) -> Result<T> {
    let (m, n) = h_bb.dim();
    if count > m.min(n) {
        return Err(Error::Dimension(format!("{count} singular values requested from a {m}x{n} matrix")));
    }
    let s = linalg::svd(h_bb)?.s;
    let two = T::lit(2.0);
    Ok(s.iter().take(count).fold(T::zero(), |acc, &v| {
        if v > T::zero() {
            acc + two * v.log2()
        } else {
            T::neg_infinity()
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SumRate<T: Real> {
    pub value: T,
    /// Some `K_k` was floored before inversion.
    pub regularized: bool,
}

/// `sum_k log2 det(I + K_k^{-1} W_k^H H_k F_k F_k^H H_k^H W_k)` with `K_k`
/// the interference-plus-noise covariance after combining.
pub fn sum_rate<T: Real>(channels: &ChannelSet<T>, result: &DesignResult<T>, noise_var: T) -> Result<SumRate<T>> {
    let mut total = T::zero();
    let mut regularized = false;
    for k in 0..result.combiners.len() {
        let a = effective_matrix(channels, result, k);
        let kc = interference_covariance(channels, result, k, noise_var);
        let inv = hermitian_inv_sqrt(&kc)?;
        regularized |= inv.regularized;
        let g = inv.matrix.dot(&a);
        let mut m = g.dot(&linalg::adjoint(&g));
        for i in 0..m.nrows() {
            m[[i, i]] += Complex::new(T::one(), T::zero());
        }
        let m = linalg::hermitian_part(&m);
        let v = match linalg::log2_det_hpd(&m) {
            Some(v) => v,
            None => linalg::eigh(&m)?
                .values
                .iter()
                .map(|&l| l.max(T::one()).log2())
                .fold(T::zero(), |a, b| a + b),
        };
        total += v.max(T::zero());
    }
    Ok(SumRate {
        value: total,
        regularized,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BitCount {
    pub bit_errors: u64,
    pub bits_sent: u64,
}

/// Monte Carlo bit errors for several detectors on the same draws.
///
/// Each of the `n_vectors` transmissions draws uniform symbols for all
/// `K n_s` streams and `CN(0, sigma^2)` noise at every receive antenna,
/// combines per user and detects. Approximate modes multiply the combined
/// signal by the design's common receiver scale first. Deterministic in
/// `seed`.
pub fn ber_trial_multi<T: Real>(
    channels: &ChannelSet<T>,
    result: &DesignResult<T>,
    noise_var: T,
    detectors: &[DetectorMode],
    q: &Constellation<T>,
    n_vectors: usize,
    seed: u64,
) -> Result<Vec<BitCount>> {
    if n_vectors == 0 {
        return Err(Error::InvalidConfig("n_vectors must be at least 1".into()));
    }
    let k_users = result.combiners.len();
    let n_s = result.combiners[0].w_bb.ncols();
    let n_r = channels.h[0].nrows();
    let streams = k_users * n_s;
    let f = result.precoder.product();
    let scale = result.diagnostics.receiver_scale;

    // per user: W^H H F (n_s x K n_s) and W^H (n_s x n_r)
    let mut through = Vec::with_capacity(k_users);
    let mut w_h = Vec::with_capacity(k_users);
    let mut prepared: Vec<Vec<PreparedDetector<T>>> = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let w = result.combiners[k].full();
        let wh = linalg::adjoint(&w);
        through.push(wh.dot(&channels.h[k]).dot(&f));
        w_h.push(wh);
        let a = effective_matrix(channels, result, k);
        let noise = noise_covariance(result, k, noise_var);
        let mut dets = Vec::with_capacity(detectors.len());
        let mut interf: Option<CMatrix<T>> = None;
        for &mode in detectors {
            let cov = if mode.whitens_interference() {
                interf
                    .get_or_insert_with(|| interference_covariance(channels, result, k, noise_var))
                    .clone()
            } else {
                noise.clone()
            };
            dets.push(PreparedDetector::new(&a, &cov, mode, q, DEFAULT_HYPOTHESIS_CAP)?);
        }
        prepared.push(dets);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = (noise_var / T::lit(2.0)).sqrt();
    let mut counts = vec![BitCount::default(); detectors.len()];
    let mut sent = vec![0usize; streams];
    let mut x = CVector::from_elem(streams, Complex::new(T::zero(), T::zero()));
    let mut noise = CVector::from_elem(n_r, Complex::new(T::zero(), T::zero()));
    let mut got = vec![0usize; n_s];
    for _ in 0..n_vectors {
        for (i, s) in sent.iter_mut().enumerate() {
            *s = rng.random_range(0..q.size());
            x[i] = q.points[*s];
        }
        for k in 0..k_users {
            for z in noise.iter_mut() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                *z = Complex::new(T::lit(re) * sd, T::lit(im) * sd);
            }
            let y = through[k].dot(&x) + w_h[k].dot(&noise);
            let y_scaled = y.mapv(|z| z * scale);
            for (d, (det, &mode)) in prepared[k].iter().zip(detectors).enumerate() {
                let input = if mode.approximate() { &y_scaled } else { &y };
                det.symbol_indices(det.detect_hypothesis(input), &mut got);
                for j in 0..n_s {
                    counts[d].bit_errors += u64::from((got[j] ^ sent[k * n_s + j]).count_ones());
                }
                counts[d].bits_sent += (n_s * q.bits_per_symbol) as u64;
            }
        }
    }
    Ok(counts)
}

pub fn ber_trial<T: Real>(
    channels: &ChannelSet<T>,
    result: &DesignResult<T>,
    noise_var: T,
    detector: DetectorMode,
    q: &Constellation<T>,
    n_vectors: usize,
    seed: u64,
) -> Result<BitCount> {
    Ok(ber_trial_multi(channels, result, noise_var, &[detector], q, n_vectors, seed)?[0])
}
