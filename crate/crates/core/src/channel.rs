//! Geometric narrowband mmWave channel with uniform planar arrays.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::model::SystemConfig;
use crate::scalar::{expj, Real};

/// One propagation path of one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathComponent<T: Real> {
    /// Complex gain, CN(0, 1).
    pub alpha: Complex<T>,
    /// Azimuth / elevation of arrival.
    pub phi_r: T,
    pub theta_r: T,
    /// Azimuth / elevation of departure.
    pub phi_t: T,
    pub theta_t: T,
}

/// Channel matrices `H_k` (`n_r x n_t`) of all users and the paths they were
/// built from.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet<T: Real> {
    pub h: Vec<CMatrix<T>>,
    pub paths: Vec<Vec<PathComponent<T>>>,
}

impl<T: Real> ChannelSet<T> {
    pub fn from_matrices(h: Vec<CMatrix<T>>) -> Self {
        let paths = vec![Vec::new(); h.len()];
        ChannelSet { h, paths }
    }

    pub fn k_users(&self) -> usize {
        self.h.len()
    }

    /// `H = [H_1; ...; H_K]`
    pub fn stacked(&self) -> CMatrix<T> {
        linalg::vstack(&self.h)
    }
}

/// Uniform linear array response `[1, e^{j psi}, ..., e^{j (m-1) psi}] / sqrt(m)`.
pub fn ula_response<T: Real>(psi: T, m: usize) -> CVector<T> {
    let norm = T::one() / T::from_usize_lossy(m).sqrt();
    CVector::from_shape_fn(m, |i| expj(psi * T::from_usize_lossy(i)) * norm)
}

/// Half-wavelength UPA response: horizontal response (phase
/// `pi cos(phi) sin(theta)`) Kronecker vertical response (phase `pi cos(theta)`).
pub fn upa_response<T: Real>(phi: T, theta: T, m_h: usize, m_v: usize) -> CVector<T> {
    let pi = T::PI();
    let dh = ula_response(pi * phi.cos() * theta.sin(), m_h);
    let dv = ula_response(pi * theta.cos(), m_v);
    CVector::from_shape_fn(m_h * m_v, |i| dh[i / m_v] * dv[i % m_v])
}

/// Generator keyed by `(seed, user, path)`; streams are independent of the
/// order in which users and paths are drawn.
fn path_rng(seed: u64, user: usize, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((user as u64) << 32) | path as u64);
    rng
}

fn draw_path<T: Real>(seed: u64, user: usize, path: usize) -> PathComponent<T> {
    let mut rng = path_rng(seed, user, path);
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    let two_pi = std::f64::consts::TAU;
    let pi = std::f64::consts::PI;
    let phi_r = rng.random_range(0.0..two_pi);
    let theta_r = rng.random_range(0.0..pi);
    let phi_t = rng.random_range(0.0..two_pi);
    let theta_t = rng.random_range(0.0..pi);
    PathComponent {
        alpha: Complex::new(T::lit(re * h), T::lit(im * h)),
        phi_r: T::lit(phi_r),
        theta_r: T::lit(theta_r),
        phi_t: T::lit(phi_t),
        theta_t: T::lit(theta_t),
    }
}

/// Builds `H_k` from its paths:
/// `sqrt(n_t n_r / n_p) * sum_p alpha_p d_r(arrival) d_t(departure)^H`.
pub fn channel_from_paths<T: Real>(cfg: &SystemConfig, paths: &[PathComponent<T>]) -> CMatrix<T> {
    let (th, tv) = cfg.tx_grid();
    let (rh, rv) = cfg.rx_grid();
    let mut h = CMatrix::from_elem((cfg.n_r, cfg.n_t), Complex::new(T::zero(), T::zero()));
    for p in paths {
        let ar = upa_response(p.phi_r, p.theta_r, rh, rv);
        let at = upa_response(p.phi_t, p.theta_t, th, tv);
        for i in 0..cfg.n_r {
            let a = p.alpha * ar[i];
            for j in 0..cfg.n_t {
                h[[i, j]] += a * at[j].conj();
            }
        }
    }
    let scale = (T::from_usize_lossy(cfg.n_t * cfg.n_r) / T::from_usize_lossy(paths.len().max(1))).sqrt();
    h.mapv_inplace(|z| z * scale);
    h
}

/// Draws one channel realization for all users. Deterministic in `seed`.
pub fn generate_channel<T: Real>(cfg: &SystemConfig, seed: u64) -> Result<ChannelSet<T>> {
    cfg.validate()?;
    let mut h = Vec::with_capacity(cfg.k_users);
    let mut paths = Vec::with_capacity(cfg.k_users);
    for k in 0..cfg.k_users {
        let pk: Vec<PathComponent<T>> = (0..cfg.n_paths).map(|p| draw_path(seed, k, p)).collect();
        h.push(channel_from_paths(cfg, &pk));
        paths.push(pk);
    }
    Ok(ChannelSet { h, paths })
}

/// Portable JSON form of a channel realization. Matrix entries are
/// row-major `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelDump {
    pub seed: u64,
    pub n_t: usize,
    pub n_r: usize,
    pub k_users: usize,
    pub n_paths: usize,
    pub users: Vec<UserDump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserDump {
    pub rows: usize,
    pub cols: usize,
    pub h: Vec<[f64; 2]>,
    pub paths: Vec<PathDump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathDump {
    pub alpha: [f64; 2],
    pub phi_r: f64,
    pub theta_r: f64,
    pub phi_t: f64,
    pub theta_t: f64,
}

impl ChannelDump {
    pub fn from_channel<T: Real>(cfg: &SystemConfig, seed: u64, ch: &ChannelSet<T>) -> Self {
        let users = ch
            .h
            .iter()
            .zip(&ch.paths)
            .map(|(h, paths)| UserDump {
                rows: h.nrows(),
                cols: h.ncols(),
                h: h.iter().map(|z| [z.re.to_f64_lossy(), z.im.to_f64_lossy()]).collect(),
                paths: paths
                    .iter()
                    .map(|p| PathDump {
                        alpha: [p.alpha.re.to_f64_lossy(), p.alpha.im.to_f64_lossy()],
                        phi_r: p.phi_r.to_f64_lossy(),
                        theta_r: p.theta_r.to_f64_lossy(),
                        phi_t: p.phi_t.to_f64_lossy(),
                        theta_t: p.theta_t.to_f64_lossy(),
                    })
                    .collect(),
            })
            .collect();
        ChannelDump {
            seed,
            n_t: cfg.n_t,
            n_r: cfg.n_r,
            k_users: cfg.k_users,
            n_paths: cfg.n_paths,
            users,
        }
    }

    pub fn to_channel<T: Real>(&self) -> Result<ChannelSet<T>> {
        let mut h = Vec::new();
        let mut paths = Vec::new();
        for u in &self.users {
            if u.h.len() != u.rows * u.cols {
                return Err(Error::Dimension(format!(
                    "channel dump has {} entries for a {}x{} matrix",
                    u.h.len(),
                    u.rows,
                    u.cols
                )));
            }
            let data = u.h.iter().map(|[re, im]| Complex::new(T::lit(*re), T::lit(*im))).collect();
            h.push(CMatrix::from_shape_vec((u.rows, u.cols), data).expect("checked length"));
            paths.push(
                u.paths
                    .iter()
                    .map(|p| PathComponent {
                        alpha: Complex::new(T::lit(p.alpha[0]), T::lit(p.alpha[1])),
                        phi_r: T::lit(p.phi_r),
                        theta_r: T::lit(p.theta_r),
                        phi_t: T::lit(p.phi_t),
                        theta_t: T::lit(p.theta_t),
                    })
                    .collect(),
            );
        }
        Ok(ChannelSet { h, paths })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn norm(v: &CVector<f64>) -> f64 {
        v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn ula_examples() {
        let d = ula_response(0.0f64, 4);
        assert!(d.iter().all(|z| (z.re - 0.5).abs() < 1e-15 && z.im == 0.0));
        let d = ula_response(std::f64::consts::PI, 2);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(d[0].re, r, epsilon = 1e-15);
        assert_relative_eq!(d[1].re, -r, epsilon = 1e-15);
        assert!(d[1].im.abs() < 1e-15);
        for psi in [0.3, 1.7, -2.2, 9.0] {
            assert_relative_eq!(norm(&ula_response(psi, 7)), 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn upa_examples() {
        let h = std::f64::consts::FRAC_PI_2;
        let d = upa_response(h, h, 4, 4);
        for z in d.iter() {
            assert!((z - Complex::new(0.25, 0.0)).norm() < 1e-15);
        }
        let d = upa_response(0.7f64, 1.1, 1, 1);
        assert_eq!(d.len(), 1);
        assert!((d[0] - Complex::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn upa_matches_double_loop() {
        let (phi, theta) = (2.1f64, 0.4f64);
        let (mh, mv) = (3, 5);
        let d = upa_response(phi, theta, mh, mv);
        let hp = std::f64::consts::PI * phi.cos() * theta.sin();
        let vp = std::f64::consts::PI * theta.cos();
        for p in 0..mh {
            for q in 0..mv {
                let want = Complex::from_polar(1.0 / ((mh * mv) as f64).sqrt(), p as f64 * hp + q as f64 * vp);
                assert!((d[p * mv + q] - want).norm() < 1e-14);
            }
        }
        assert_relative_eq!(norm(&d), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn single_path_is_rank_one() {
        let mut cfg = SystemConfig::mmwave_default(2);
        cfg.n_paths = 1;
        let ch = generate_channel::<f64>(&cfg, 11).unwrap();
        for h in &ch.h {
            let s = crate::linalg::svd(h).unwrap().s;
            assert!(s[1] < 1e-12 * s[0]);
        }
    }

    #[test]
    fn summand_norm() {
        let mut cfg = SystemConfig::mmwave_default(1);
        cfg.n_paths = 1;
        let ch = generate_channel::<f64>(&cfg, 5).unwrap();
        let alpha = ch.paths[0][0].alpha.norm();
        let want = alpha * ((cfg.n_t * cfg.n_r) as f64).sqrt();
        assert_relative_eq!(crate::linalg::frob(&ch.h[0]), want, max_relative = 1e-12);
    }

    #[test]
    fn deterministic_and_shaped() {
        let cfg = SystemConfig::mmwave_default(4);
        let a = generate_channel::<f64>(&cfg, 42).unwrap();
        let b = generate_channel::<f64>(&cfg, 42).unwrap();
        let c = generate_channel::<f64>(&cfg, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.h.len(), 4);
        assert_eq!(a.h[0].dim(), (4, 64));
        assert_eq!(a.paths[3].len(), 8);
        for p in a.paths.iter().flatten() {
            assert!((0.0..std::f64::consts::TAU).contains(&p.phi_t));
            assert!((0.0..std::f64::consts::PI).contains(&p.theta_t));
            assert!((0.0..std::f64::consts::TAU).contains(&p.phi_r));
            assert!((0.0..std::f64::consts::PI).contains(&p.theta_r));
        }
    }

    #[test]
    fn user_streams_independent_of_user_count() {
        let a = generate_channel::<f64>(&SystemConfig::mmwave_default(2), 9).unwrap();
        let b = generate_channel::<f64>(&SystemConfig::mmwave_default(4), 9).unwrap();
        assert_eq!(a.h[1], b.h[1]);
    }

    #[test]
    fn dump_round_trip() {
        let cfg = SystemConfig::mmwave_default(2);
        let ch = generate_channel::<f64>(&cfg, 3).unwrap();
        let dump = ChannelDump::from_channel(&cfg, 3, &ch);
        let text = serde_json::to_string(&dump).unwrap();
        let back: ChannelDump = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_channel::<f64>().unwrap(), ch);
    }

    #[test]
    fn mean_energy_close_to_nt_nr() {
        let cfg = SystemConfig::mmwave_default(1);
        let trials = 2000;
        let mean: f64 = (0..trials)
            .map(|s| crate::linalg::frob_sqr(&generate_channel::<f64>(&cfg, s).unwrap().h[0]))
            .sum::<f64>()
            / trials as f64;
        // loose here; the acceptance suite runs the 10^4-seed version
        assert!((mean / 256.0 - 1.0).abs() < 0.06, "mean {mean}");
    }
}
