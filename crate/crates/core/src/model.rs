//! System dimensions, precoder/combiner containers and the small spectral
//! helpers every design relies on.

use ndarray::s;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::scalar::Real;

/// Constellation used for the data streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Modulation {
    #[default]
    #[serde(rename = "QPSK")]
    Qpsk,
    #[serde(rename = "QAM16")]
    Qam16,
}

impl Modulation {
    pub const ALL: [Modulation; 2] = [Modulation::Qpsk, Modulation::Qam16];

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Qpsk => "QPSK",
            Modulation::Qam16 => "QAM16",
        }
    }
}

impl std::str::FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modulation::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::UnknownName {
                kind: "modulation",
                name: s.to_string(),
                valid: "QPSK, QAM16".into(),
            })
    }
}

fn default_noise_var() -> f64 {
    1.0
}

/// Array sizes, RF chain counts and noise level of one downlink scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// BS antennas (square UPA).
    pub n_t: usize,
    /// Antennas per user (square UPA).
    pub n_r: usize,
    /// Streams per user.
    pub n_s: usize,
    pub k_users: usize,
    /// BS RF chains.
    pub n_rf_t: usize,
    /// RF chains per user.
    pub n_rf_r: usize,
    /// Multipath components per user channel.
    pub n_paths: usize,
    /// Noise variance per receive antenna (linear).
    #[serde(default = "default_noise_var")]
    pub noise_var: f64,
    #[serde(default)]
    pub modulation: Modulation,
}

fn exact_sqrt(n: usize) -> Option<usize> {
    let r = (n as f64).sqrt().round() as usize;
    (r * r == n).then_some(r)
}

impl SystemConfig {
    /// The evaluation scenario with the maximum RF chain setting:
    /// 64 BS antennas, 4 antennas per user, 2 streams, 8 paths.
    pub fn mmwave_default(k_users: usize) -> Self {
        SystemConfig {
            n_t: 64,
            n_r: 4,
            n_s: 2,
            k_users,
            n_rf_t: k_users * 2,
            n_rf_r: 2,
            n_paths: 8,
            noise_var: 1.0,
            modulation: Modulation::Qpsk,
        }
    }

    pub fn with_noise_var(mut self, noise_var: f64) -> Self {
        self.noise_var = noise_var;
        self
    }

    pub fn with_snr_db(self, snr_db: f64) -> Self {
        let e_t = self.total_energy();
        self.with_noise_var(snr_to_noise_var(snr_db, e_t))
    }

    /// Total number of streams `K N_s`.
    pub fn total_streams(&self) -> usize {
        self.k_users * self.n_s
    }

    /// Total transmit energy `E_T = K N_s`.
    pub fn total_energy(&self) -> f64 {
        self.total_streams() as f64
    }

    /// Side lengths of the BS array.
    pub fn tx_grid(&self) -> (usize, usize) {
        let s = exact_sqrt(self.n_t).unwrap_or(0);
        (s, s)
    }

    /// Side lengths of each user's array.
    pub fn rx_grid(&self) -> (usize, usize) {
        let s = exact_sqrt(self.n_r).unwrap_or(0);
        (s, s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.k_users == 0 || self.n_s == 0 {
            return bad("k_users and n_s must be positive".into());
        }
        if !(self.total_streams() <= self.n_rf_t && self.n_rf_t <= self.n_t) {
            return bad(format!(
                "need K*n_s <= n_rf_t <= n_t, got {} <= {} <= {}",
                self.total_streams(),
                self.n_rf_t,
                self.n_t
            ));
        }
        if !(self.n_s <= self.n_rf_r && self.n_rf_r <= self.n_r) {
            return bad(format!(
                "need n_s <= n_rf_r <= n_r, got {} <= {} <= {}",
                self.n_s, self.n_rf_r, self.n_r
            ));
        }
        if exact_sqrt(self.n_t).is_none() || exact_sqrt(self.n_r).is_none() {
            return bad(format!(
                "arrays must be square: n_t={} and n_r={} must be perfect squares",
                self.n_t, self.n_r
            ));
        }
        if !(self.noise_var > 0.0 && self.noise_var.is_finite()) {
            return bad(format!("noise_var must be positive, got {}", self.noise_var));
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1".into());
        }
        Ok(())
    }
}

/// `sigma_n^2 = E_T / 10^(snr_db / 10)`
pub fn snr_to_noise_var(snr_db: f64, e_t: f64) -> f64 {
    e_t / 10f64.powf(snr_db / 10.0)
}

/// Entrywise phase projection: every entry keeps its phase and gets
/// magnitude `scale`. Zero entries map to `scale` (phase 0).
pub fn phase_project<T: Real>(a: &CMatrix<T>, scale: T) -> CMatrix<T> {
    a.mapv(|z| {
        let r = z.norm();
        if r > T::zero() && r.is_finite() {
            z * (scale / r)
        } else {
            Complex::new(scale, T::zero())
        }
    })
}

/// Transmit side: analog part `f_rf` (phase shifters) and digital part `f_bb`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridPrecoder<T: Real> {
    pub f_rf: CMatrix<T>,
    pub f_bb: CMatrix<T>,
}

impl<T: Real> HybridPrecoder<T> {
    pub fn new(f_rf: CMatrix<T>, f_bb: CMatrix<T>) -> Result<Self> {
        if f_rf.ncols() != f_bb.nrows() {
            return Err(Error::Dimension(format!(
                "f_rf is {:?} but f_bb is {:?}",
                f_rf.dim(),
                f_bb.dim()
            )));
        }
        Ok(HybridPrecoder { f_rf, f_bb })
    }

    /// `F_RF F_BB`
    pub fn product(&self) -> CMatrix<T> {
        self.f_rf.dot(&self.f_bb)
    }

    /// Columns of the full precoder that carry user `k`'s streams.
    pub fn user_block(&self, k: usize, n_s: usize) -> CMatrix<T> {
        self.f_rf.dot(&self.f_bb.slice(s![.., k * n_s..(k + 1) * n_s]))
    }

    /// Rescales `f_bb` so that `||F_RF F_BB||_F^2 = target`.
    pub fn normalized(mut self, target: T) -> Result<Self> {
        let e = linalg::frob_sqr(&self.product());
        if !(e > T::zero()) || !e.is_finite() {
            return Err(Error::NormalizationImpossible);
        }
        let g = (target / e).sqrt();
        self.f_bb.mapv_inplace(|z| z * g);
        Ok(self)
    }
}

pub fn normalize_power<T: Real>(p: HybridPrecoder<T>, target: T) -> Result<HybridPrecoder<T>> {
    p.normalized(target)
}

/// Receive side of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct UserCombiner<T: Real> {
    pub w_rf: CMatrix<T>,
    pub w_bb: CMatrix<T>,
}

impl<T: Real> UserCombiner<T> {
    /// Analog-only combiner (`W_BB = I`).
    pub fn analog_only(w_rf: CMatrix<T>) -> Self {
        let n = w_rf.ncols();
        UserCombiner {
            w_rf,
            w_bb: linalg::identity(n),
        }
    }

    /// `W_RF W_BB`
    pub fn full(&self) -> CMatrix<T> {
        self.w_rf.dot(&self.w_bb)
    }
}

/// Rank and log2 of the product of the non-negligible eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PseudoDet<T: Real> {
    pub rank: usize,
    /// `-inf` when the matrix is zero (nonzero dimension).
    pub log2: T,
}

impl<T: Real> PseudoDet<T> {
    pub fn value(&self) -> T {
        T::lit(2.0).powf(self.log2)
    }

    /// Lexicographic (rank first) comparison with relative slack on the
    /// log value.
    pub fn at_least(&self, other: &Self, rel_slack: T) -> bool {
        match self.rank.cmp(&other.rank) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => {
                if other.log2 == T::neg_infinity() {
                    return true;
                }
                self.log2 >= other.log2 - rel_slack * other.log2.abs().max(T::one())
            }
        }
    }
}

fn hermitian_tol<T: Real>() -> T {
    T::epsilon().sqrt() * T::lit(10.0)
}

/// Pseudo-determinant split into rank and log2 value. Eigenvalues above
/// `rank_tol * lambda_max` count.
pub fn pseudo_det_parts<T: Real>(a: &CMatrix<T>, rank_tol: T) -> Result<PseudoDet<T>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!("pseudo_det of {:?}", a.dim())));
    }
    if a.nrows() == 0 {
        return Ok(PseudoDet {
            rank: 0,
            log2: T::zero(),
        });
    }
    let defect = linalg::hermitian_defect(a);
    if defect > hermitian_tol() {
        return Err(Error::NotHermitian {
            defect: defect.to_f64_lossy(),
        });
    }
    let e = linalg::eigh(a)?;
    let lmax = e.values[0];
    if !(lmax > T::zero()) {
        return Ok(PseudoDet {
            rank: 0,
            log2: T::neg_infinity(),
        });
    }
    let cut = rank_tol * lmax;
    let kept: Vec<T> = e.values.iter().copied().filter(|&v| v > cut).collect();
    Ok(PseudoDet {
        rank: kept.len(),
        log2: kept.iter().map(|v| v.log2()).sum(),
    })
}

/// Product of the non-negligible eigenvalues of a Hermitian matrix.
///
/// Returns 1 for a 0x0 matrix and 0 for the zero matrix.
pub fn pseudo_det<T: Real>(a: &CMatrix<T>, rank_tol: T) -> Result<T> {
    Ok(pseudo_det_parts(a, rank_tol)?.value())
}

/// `K^{-1/2}` together with whether any eigenvalue had to be floored.
#[derive(Debug, Clone)]
pub struct InvSqrt<T: Real> {
    pub matrix: CMatrix<T>,
    pub regularized: bool,
}

/// Hermitian inverse square root. Eigenvalues below `1e-12 * lambda_max`
/// are raised to that floor.
pub fn hermitian_inv_sqrt<T: Real>(k: &CMatrix<T>) -> Result<InvSqrt<T>> {
    let defect = linalg::hermitian_defect(k);
    if defect > hermitian_tol() {
        return Err(Error::NotHermitian {
            defect: defect.to_f64_lossy(),
        });
    }
    let e = linalg::eigh(k)?;
    let lmax = e.values.first().copied().unwrap_or(T::one());
    if !(lmax > T::zero()) {
        return Err(Error::Singular {
            what: "hermitian_inv_sqrt",
            condition: f64::INFINITY,
        });
    }
    let floor = T::eig_floor() * lmax;
    let mut regularized = false;
    let scales: Vec<T> = e
        .values
        .iter()
        .map(|&v| {
            if v < floor {
                regularized = true;
                T::one() / floor.sqrt()
            } else {
                T::one() / v.sqrt()
            }
        })
        .collect();
    let v = &e.vectors;
    let scaled = v.dot(&linalg::from_diag(&scales));
    Ok(InvSqrt {
        matrix: scaled.dot(&linalg::adjoint(v)),
        regularized,
    })
}
