//! Exhaustive minimum-distance detectors and Gray-mapped constellations.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::model::{hermitian_inv_sqrt, Modulation};
use crate::scalar::Real;
use crate::schemes::DesignResult;

/// Default bound on `|Q|^{n_s}` for exhaustive search.
pub const DEFAULT_HYPOTHESIS_CAP: u128 = 1 << 20;

/// Point `i` carries the bits of `i` (most significant first).
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation<T: Real> {
    pub name: &'static str,
    pub points: Vec<Complex<T>>,
    pub bits_per_symbol: usize,
}

/// Gray levels for two bits: 00 -> -3, 01 -> -1, 11 -> 1, 10 -> 3.
fn pam4_level(b_hi: usize, b_lo: usize) -> f64 {
    match (b_hi, b_lo) {
        (0, 0) => -3.0,
        (0, 1) => -1.0,
        (1, 1) => 1.0,
        _ => 3.0,
    }
}

impl<T: Real> Constellation<T> {
    pub fn qpsk() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let points = (0..4usize)
            .map(|i| {
                let (b0, b1) = (i >> 1 & 1, i & 1);
                Complex::new(T::lit((1.0 - 2.0 * b0 as f64) * h), T::lit((1.0 - 2.0 * b1 as f64) * h))
            })
            .collect();
        Constellation {
            name: "QPSK",
            points,
            bits_per_symbol: 2,
        }
    }

    pub fn qam16() -> Self {
        let norm = 10f64.sqrt();
        let points = (0..16usize)
            .map(|i| {
                let re = pam4_level(i >> 3 & 1, i >> 2 & 1) / norm;
                let im = pam4_level(i >> 1 & 1, i & 1) / norm;
                Complex::new(T::lit(re), T::lit(im))
            })
            .collect();
        Constellation {
            name: "QAM16",
            points,
            bits_per_symbol: 4,
        }
    }

    pub fn for_modulation(m: Modulation) -> Self {
        match m {
            Modulation::Qpsk => Self::qpsk(),
            Modulation::Qam16 => Self::qam16(),
        }
    }

    pub fn size(&self) -> usize {
        self.points.len()
    }

    /// Index of `s` among the points (within `1e-6`).
    pub fn index_of(&self, s: Complex<T>) -> Result<usize> {
        let tol = T::lit(1e-6);
        self.points
            .iter()
            .position(|p| (p - s).norm() < tol)
            .ok_or(Error::UnknownSymbol(self.name))
    }

    pub fn bits_of_index(&self, idx: usize, out: &mut Vec<u8>) {
        for b in (0..self.bits_per_symbol).rev() {
            out.push((idx >> b & 1) as u8);
        }
    }
}

pub fn bits_from_symbols<T: Real>(symbols: &[Complex<T>], q: &Constellation<T>) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(symbols.len() * q.bits_per_symbol);
    for &s in symbols {
        q.bits_of_index(q.index_of(s)?, &mut out);
    }
    Ok(out)
}

pub fn symbols_from_bits<T: Real>(bits: &[u8], q: &Constellation<T>) -> Result<Vec<Complex<T>>> {
    if bits.len() % q.bits_per_symbol != 0 || bits.iter().any(|&b| b > 1) {
        return Err(Error::InvalidConfig(format!(
            "bit vector of length {} is not a whole number of {}-bit symbols",
            bits.len(),
            q.bits_per_symbol
        )));
    }
    Ok(bits
        .chunks(q.bits_per_symbol)
        .map(|c| q.points[c.iter().fold(0usize, |acc, &b| acc << 1 | b as usize)])
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum DetectorMode {
    Mdd,
    Amdd,
    Nwmdd,
    Nwamdd,
    Nwimdd,
}

impl DetectorMode {
    pub const ALL: [DetectorMode; 5] = [
        DetectorMode::Mdd,
        DetectorMode::Amdd,
        DetectorMode::Nwmdd,
        DetectorMode::Nwamdd,
        DetectorMode::Nwimdd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DetectorMode::Mdd => "MDD",
            DetectorMode::Amdd => "AMDD",
            DetectorMode::Nwmdd => "NWMDD",
            DetectorMode::Nwamdd => "NWAMDD",
            DetectorMode::Nwimdd => "NWIMDD",
        }
    }

    /// Treats the effective matrix as the identity.
    pub fn approximate(self) -> bool {
        matches!(self, DetectorMode::Amdd | DetectorMode::Nwamdd)
    }

    pub fn whitened(self) -> bool {
        matches!(self, DetectorMode::Nwmdd | DetectorMode::Nwamdd | DetectorMode::Nwimdd)
    }

    /// Whitening covers interference from other users' streams as well.
    pub fn whitens_interference(self) -> bool {
        self == DetectorMode::Nwimdd
    }
}

impl fmt::Display for DetectorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DetectorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DetectorMode::ALL
            .iter()
            .copied()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownName {
                kind: "detector",
                name: s.to_string(),
                valid: DetectorMode::ALL.iter().map(|m| m.name()).collect::<Vec<_>>().join(", "),
            })
    }
}

fn user_combiner<T: Real>(result: &DesignResult<T>, k: usize) -> CMatrix<T> {
    result.combiners[k].full()
}

fn n_s_of<T: Real>(result: &DesignResult<T>) -> usize {
    result.combiners.first().map_or(0, |c| c.w_bb.ncols())
}

/// `W_k^H H_k F_k`: user `k`'s own streams through its combiner.
pub fn effective_matrix<T: Real>(channels: &ChannelSet<T>, result: &DesignResult<T>, k: usize) -> CMatrix<T> {
    let w = user_combiner(result, k);
    let f_k = result.precoder.user_block(k, n_s_of(result));
    linalg::adjoint(&w).dot(&channels.h[k]).dot(&f_k)
}

/// `sigma^2 W_k^H W_k`.
pub fn noise_covariance<T: Real>(result: &DesignResult<T>, k: usize, noise_var: T) -> CMatrix<T> {
    let w = user_combiner(result, k);
    linalg::hermitian_part(&linalg::adjoint(&w).dot(&w)).mapv(|z| z * noise_var)
}

/// `sigma^2 W_k^H W_k + sum_{j != k} W_k^H H_k F_j F_j^H H_k^H W_k`.
pub fn interference_covariance<T: Real>(
    channels: &ChannelSet<T>,
    result: &DesignResult<T>,
    k: usize,
    noise_var: T,
) -> CMatrix<T> {
    let w = user_combiner(result, k);
    let n_s = n_s_of(result);
    let wh = linalg::adjoint(&w).dot(&channels.h[k]);
    let mut cov = linalg::adjoint(&w).dot(&w).mapv(|z| z * noise_var);
    for j in 0..result.combiners.len() {
        if j != k {
            let g = wh.dot(&result.precoder.user_block(j, n_s));
            cov = cov + g.dot(&linalg::adjoint(&g));
        }
    }
    linalg::hermitian_part(&cov)
}

/// Exhaustive detector for one (effective matrix, covariance, mode) triple.
/// Stores `M A d` for every hypothesis `d`, where `M` is the whitening
/// matrix (identity when unwhitened) and `A` the identity for approximate
/// modes.
#[derive(Debug, Clone)]
pub struct PreparedDetector<T: Real> {
    whiten: Option<CMatrix<T>>,
    candidates: Vec<CVector<T>>,
    n_s: usize,
    q_size: usize,
    pub regularized: bool,
}

impl<T: Real> PreparedDetector<T> {
    pub fn new(a: &CMatrix<T>, k_cov: &CMatrix<T>, mode: DetectorMode, q: &Constellation<T>, cap: u128) -> Result<Self> {
        let n_s = a.nrows();
        if a.ncols() != n_s || (mode.whitened() && k_cov.dim() != (n_s, n_s)) {
            return Err(Error::Dimension(format!(
                "detector needs square A and matching covariance, got {:?} and {:?}",
                a.dim(),
                k_cov.dim()
            )));
        }
        let total = (q.size() as u128).checked_pow(n_s as u32).unwrap_or(u128::MAX);
        if total > cap {
            return Err(Error::HypothesisCap {
                hypotheses: total,
                cap,
            });
        }
        let (whiten, regularized) = if mode.whitened() {
            let w = hermitian_inv_sqrt(k_cov)?;
            (Some(w.matrix), w.regularized)
        } else {
            (None, false)
        };
        let eff = if mode.approximate() {
            linalg::identity(n_s)
        } else {
            a.clone()
        };
        let eff = match &whiten {
            Some(m) => m.dot(&eff),
            None => eff,
        };
        let mut candidates = Vec::with_capacity(total as usize);
        let mut d = CVector::from_elem(n_s, Complex::new(T::zero(), T::zero()));
        for h in 0..total as usize {
            let mut rest = h;
            for j in (0..n_s).rev() {
                d[j] = q.points[rest % q.size()];
                rest /= q.size();
            }
            candidates.push(eff.dot(&d));
        }
        Ok(PreparedDetector {
            whiten,
            candidates,
            n_s,
            q_size: q.size(),
            regularized,
        })
    }

    /// Index of the minimizing hypothesis; ties go to the lowest index.
    pub fn detect_hypothesis(&self, y: &CVector<T>) -> usize {
        let z = match &self.whiten {
            Some(m) => m.dot(y),
            None => y.clone(),
        };
        let mut best = 0;
        let mut best_d = T::infinity();
        for (h, c) in self.candidates.iter().enumerate() {
            let mut dist = T::zero();
            for i in 0..self.n_s {
                dist += (z[i] - c[i]).norm_sqr();
            }
            if dist < best_d {
                best_d = dist;
                best = h;
            }
        }
        best
    }

    /// Per-stream constellation indices of a hypothesis.
    pub fn symbol_indices(&self, h: usize, out: &mut [usize]) {
        let mut rest = h;
        for j in (0..self.n_s).rev() {
            out[j] = rest % self.q_size;
            rest /= self.q_size;
        }
    }
}

/// Nearest block in `Q^{n_s}` to `y` under the mode's metric.
pub fn detect<T: Real>(
    y: &CVector<T>,
    a: &CMatrix<T>,
    k_cov: &CMatrix<T>,
    mode: DetectorMode,
    q: &Constellation<T>,
) -> Result<Vec<Complex<T>>> {
    let det = PreparedDetector::new(a, k_cov, mode, q, DEFAULT_HYPOTHESIS_CAP)?;
    if y.len() != det.n_s {
        return Err(Error::Dimension(format!("received vector of length {} for {} streams", y.len(), det.n_s)));
    }
    let mut idx = vec![0; det.n_s];
    det.symbol_indices(det.detect_hypothesis(y), &mut idx);
    Ok(idx.into_iter().map(|i| q.points[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::identity;
    use crate::testutil::{random_matrix, random_psd};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(y: &CVector<f64>, m: &CMatrix<f64>, q: &Constellation<f64>, n_s: usize) -> Vec<Complex<f64>> {
        let mut best = (f64::INFINITY, vec![]);
        let total = q.size().pow(n_s as u32);
        for h in 0..total {
            let d: Vec<Complex<f64>> = (0..n_s)
                .map(|j| q.points[h / q.size().pow((n_s - 1 - j) as u32) % q.size()])
                .collect();
            let r = y - &m.dot(&CVector::from(d.clone()));
            let v: f64 = r.iter().map(|z| z.norm_sqr()).sum();
            if v < best.0 {
                best = (v, d);
            }
        }
        best.1
    }

    #[test]
    fn constellations_unit_energy_and_gray() {
        for q in [Constellation::<f64>::qpsk(), Constellation::qam16()] {
            let e: f64 = q.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / q.size() as f64;
            assert!((e - 1.0).abs() < 1e-12);
            let dmin = q
                .points
                .iter()
                .enumerate()
                .flat_map(|(i, a)| q.points.iter().skip(i + 1).map(move |b| (a - b).norm()))
                .fold(f64::INFINITY, f64::min);
            // nearest neighbours differ in exactly one bit
            for (i, a) in q.points.iter().enumerate() {
                for (j, b) in q.points.iter().enumerate() {
                    if i != j && (a - b).norm() < dmin * 1.0001 {
                        assert_eq!((i ^ j).count_ones(), 1, "{} {i} {j}", q.name);
                    }
                }
            }
        }
        let q = Constellation::<f64>::qpsk();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(q.points[0], Complex::new(h, h));
        assert_eq!(q.points[3], Complex::new(-h, -h));
    }

    #[test]
    fn bit_round_trips() {
        let q = Constellation::<f64>::qpsk();
        let bits = bits_from_symbols(&q.points, &q).unwrap();
        assert_eq!(symbols_from_bits(&bits, &q).unwrap(), q.points);
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for q in [Constellation::<f64>::qpsk(), Constellation::qam16()] {
            let bits: Vec<u8> = (0..64).map(|_| rng.random_range(0..2u8)).collect();
            let s = symbols_from_bits(&bits, &q).unwrap();
            assert_eq!(bits_from_symbols(&s, &q).unwrap(), bits);
        }
        assert!(bits_from_symbols(&[Complex::new(0.3, 0.0)], &q).is_err());
        assert!(symbols_from_bits(&[1, 0, 1], &q).is_err());
    }

    #[test]
    fn names_parse() {
        for m in DetectorMode::ALL {
            assert_eq!(m.name().parse::<DetectorMode>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
        assert!("ML".parse::<DetectorMode>().is_err());
    }

    #[test]
    fn noise_free_recovery() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let q = Constellation::<f64>::qpsk();
        for _ in 0..200 {
            let a = random_matrix(&mut rng, 2, 2);
            let k = random_psd(&mut rng, 2, 2);
            let d: Vec<_> = (0..2).map(|_| q.points[rng.random_range(0..4)]).collect();
            let y = a.dot(&CVector::from(d.clone()));
            for mode in [DetectorMode::Mdd, DetectorMode::Nwmdd, DetectorMode::Nwimdd] {
                assert_eq!(detect(&y, &a, &k, mode, &q).unwrap(), d);
            }
        }
    }

    #[test]
    fn matches_brute_force_and_collapses() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let q = Constellation::<f64>::qam16();
        let eye = identity::<f64>(2);
        for _ in 0..200 {
            let a = random_matrix(&mut rng, 2, 2);
            let y = random_matrix(&mut rng, 2, 1).column(0).to_owned();
            assert_eq!(detect(&y, &a, &eye, DetectorMode::Mdd, &q).unwrap(), brute_force(&y, &a, &q, 2));
            assert_eq!(
                detect(&y, &eye, &eye, DetectorMode::Mdd, &q).unwrap(),
                detect(&y, &a, &eye, DetectorMode::Amdd, &q).unwrap()
            );
        }
    }

    #[test]
    fn scalar_whitening_is_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let q = Constellation::<f64>::qpsk();
        for _ in 0..1000 {
            let a = random_matrix(&mut rng, 2, 2);
            let c: f64 = rng.random_range(0.01..100.0);
            let k = identity::<f64>(2).mapv(|z| z * c);
            let y = random_matrix(&mut rng, 2, 1).column(0).to_owned().mapv(|z| z * 2.0);
            let m = detect(&y, &a, &k, DetectorMode::Mdd, &q).unwrap();
            assert_eq!(detect(&y, &a, &k, DetectorMode::Nwmdd, &q).unwrap(), m);
            assert_eq!(detect(&y, &a, &k, DetectorMode::Nwimdd, &q).unwrap(), m);
            assert_eq!(
                detect(&y, &a, &k, DetectorMode::Nwamdd, &q).unwrap(),
                detect(&y, &a, &k, DetectorMode::Amdd, &q).unwrap()
            );
        }
    }

    #[test]
    fn ties_take_lowest_index() {
        let q = Constellation::<f64>::qpsk();
        let y = CVector::from_elem(2, Complex::new(0.0, 0.0));
        let eye = identity::<f64>(2);
        assert_eq!(detect(&y, &eye, &eye, DetectorMode::Mdd, &q).unwrap(), vec![q.points[0]; 2]);
    }

    #[test]
    fn hypothesis_cap() {
        let q = Constellation::<f64>::qam16();
        let eye = identity::<f64>(6);
        let err = PreparedDetector::new(&eye, &eye, DetectorMode::Mdd, &q, DEFAULT_HYPOTHESIS_CAP).unwrap_err();
        assert_eq!(
            err,
            Error::HypothesisCap {
                hypotheses: 1 << 24,
                cap: 1 << 20
            }
        );
    }
}
