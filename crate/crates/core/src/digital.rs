//! Digital (baseband) stages: constrained MMSE precoding, the pseudo-MMSE
//! baseline, block diagonalization and the eigenvector digital combiner.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::scalar::Real;

/// Solution of `M x = rhs` with `M` Hermitian PSD-ish; a ridge of
/// `1e-12 * tr(M)/dim` is added when the LU pivots collapse.
#[derive(Debug, Clone)]
pub struct Solved<T: Real> {
    pub x: CMatrix<T>,
    pub regularized: bool,
}

fn ridge_solve<T: Real>(m: &CMatrix<T>, rhs: &CMatrix<T>, what: &'static str) -> Result<Solved<T>> {
    let n = m.nrows();
    let thresh = T::epsilon() * T::lit(1e3);
    if let Ok(f) = linalg::lu(m) {
        if f.pivot_ratio > thresh {
            return Ok(Solved {
                x: f.solve(rhs),
                regularized: false,
            });
        }
    }
    let mean_diag = linalg::trace(m).re.abs() / T::from_usize_lossy(n.max(1));
    let ridge = T::eig_floor() * if mean_diag > T::zero() { mean_diag } else { T::one() };
    let mut reg = m.clone();
    for i in 0..n {
        reg[[i, i]] += Complex::new(ridge, T::zero());
    }
    match linalg::lu(&reg) {
        Ok(f) if f.pivot_ratio > T::zero() => Ok(Solved {
            x: f.solve(rhs),
            regularized: true,
        }),
        Ok(f) => Err(Error::Singular {
            what,
            condition: (T::one() / f.pivot_ratio).to_f64_lossy(),
        }),
        Err(_) => Err(Error::Singular {
            what,
            condition: f64::INFINITY,
        }),
    }
}

/// Linear precoding problem with an analog constraint matrix `B` folded into
/// `h_eff = H B` and `a = B^H B`.
#[derive(Debug, Clone)]
pub struct MmseProblem<T: Real> {
    pub h_eff: CMatrix<T>,
    pub a: CMatrix<T>,
    pub r_x: CMatrix<T>,
    pub r_n: CMatrix<T>,
    pub e_t: T,
}

impl<T: Real> MmseProblem<T> {
    pub fn validate(&self) -> Result<()> {
        let (rows, cols) = self.h_eff.dim();
        let sq = |m: &CMatrix<T>, n: usize| m.dim() == (n, n);
        if !sq(&self.a, cols) || !sq(&self.r_x, rows) || !sq(&self.r_n, rows) {
            return Err(Error::Dimension(format!(
                "MMSE problem: h_eff {:?}, a {:?}, r_x {:?}, r_n {:?}",
                self.h_eff.dim(),
                self.a.dim(),
                self.r_x.dim(),
                self.r_n.dim()
            )));
        }
        if !(self.e_t > T::zero()) || !self.e_t.is_finite() {
            return Err(Error::InvalidConfig("total energy must be positive".into()));
        }
        for m in [&self.h_eff, &self.a, &self.r_x, &self.r_n] {
            if !linalg::all_finite(m) {
                return Err(Error::NonFinite("MMSE problem"));
            }
        }
        Ok(())
    }

    /// `E||x - beta (H_eff F x + n)||^2`.
    pub fn mse(&self, f: &CMatrix<T>, beta: T) -> T {
        let hf = self.h_eff.dot(f);
        let cross = linalg::trace(&hf.dot(&self.r_x)).re;
        let sig = linalg::trace(&hf.dot(&self.r_x).dot(&linalg::adjoint(&hf))).re;
        linalg::trace(&self.r_x).re - T::lit(2.0) * beta * cross + beta * beta * (sig + linalg::trace(&self.r_n).re)
    }

    /// `tr(A F R_x F^H)`, the energy spent by `F` after the analog stage.
    pub fn energy(&self, f: &CMatrix<T>) -> T {
        linalg::trace(&self.a.dot(f).dot(&self.r_x).dot(&linalg::adjoint(f))).re
    }
}

#[derive(Debug, Clone)]
pub struct MmseSolution<T: Real> {
    pub f: CMatrix<T>,
    /// Receiver scaling applied to the received signal.
    pub beta: T,
    pub regularized: bool,
}

/// MMSE precoder under the energy constraint `tr(A F R_x F^H) <= E_T`:
/// `F = beta^{-1} (H^H H + tr(R_n)/E_T A)^{-1} H^H`, with `beta` chosen so the
/// constraint holds with equality.
pub fn constrained_mmse<T: Real>(p: &MmseProblem<T>) -> Result<MmseSolution<T>> {
    p.validate()?;
    let ratio = linalg::trace(&p.r_n).re / p.e_t;
    let mut m = linalg::adjoint(&p.h_eff).dot(&p.h_eff);
    m.zip_mut_with(&p.a, |x, a| *x += *a * ratio);
    let solved = ridge_solve(&m, &linalg::adjoint(&p.h_eff), "constrained MMSE system")?;
    let g = solved.x;
    let spent = p.energy(&g);
    if !(spent > T::zero()) || !spent.is_finite() {
        return Err(Error::NormalizationImpossible);
    }
    let beta = (spent / p.e_t).sqrt();
    Ok(MmseSolution {
        f: g.mapv(|z| z / beta),
        beta,
        regularized: solved.regularized,
    })
}

/// `(H^H H + gamma/e_t F_RF^H F_RF)^{-1} H^H` for the stacked effective
/// channel `h_tilde`. Unnormalized; `e_t` is the stream count `K n_s`.
pub fn mmse_bb<T: Real>(h_tilde: &CMatrix<T>, f_rf: &CMatrix<T>, gamma: T, e_t: T) -> Result<Solved<T>> {
    if h_tilde.ncols() != f_rf.ncols() {
        return Err(Error::Dimension(format!(
            "effective channel {:?} vs analog precoder {:?}",
            h_tilde.dim(),
            f_rf.dim()
        )));
    }
    if !(e_t > T::zero()) || !(gamma >= T::zero()) {
        return Err(Error::InvalidConfig("mmse_bb needs gamma >= 0 and e_t > 0".into()));
    }
    let ratio = gamma / e_t;
    let mut m = linalg::adjoint(h_tilde).dot(h_tilde);
    m.zip_mut_with(&linalg::adjoint(f_rf).dot(f_rf), |x, a| *x += *a * ratio);
    ridge_solve(&m, &linalg::adjoint(h_tilde), "MMSE baseband system")
}

/// Per-user noise covariance after combining, `sigma^2 W_k^H W_k`.
pub fn combined_noise_cov<T: Real>(w_k: &CMatrix<T>, noise_var: T) -> CMatrix<T> {
    linalg::hermitian_part(&linalg::adjoint(w_k).dot(w_k)).mapv(|z| z * noise_var)
}

/// `gamma = sum_k tr(sigma^2 W_k^H W_k)` over the full user combiners.
pub fn combined_noise_trace<T: Real>(combiners: &[CMatrix<T>], noise_var: T) -> T {
    combiners
        .iter()
        .map(|w| linalg::frob_sqr(w) * noise_var)
        .fold(T::zero(), |a, b| a + b)
}

/// `H^H (H H^H + sigma^2 I)^{-1}`.
pub fn pseudo_mmse<T: Real>(h_bb: &CMatrix<T>, noise_var: T) -> Result<CMatrix<T>> {
    if !(noise_var >= T::zero()) {
        return Err(Error::InvalidConfig("noise variance must be nonnegative".into()));
    }
    let mut m = h_bb.dot(&linalg::adjoint(h_bb));
    for i in 0..m.nrows() {
        m[[i, i]] += Complex::new(noise_var, T::zero());
    }
    // (H H^H + s I)^{-1} is Hermitian, so solve for its product with H and
    // take the adjoint
    let x = ridge_solve(&m, h_bb, "pseudo MMSE system")?.x;
    Ok(linalg::adjoint(&x))
}

#[derive(Debug, Clone)]
pub struct BdOutput<T: Real> {
    /// `[F_1^a F_1^b, ..., F_K^a F_K^b]`.
    pub f_bb: CMatrix<T>,
    pub w_bb: Vec<CMatrix<T>>,
    /// Diagonal of each `Lambda_k`.
    pub power_loading: Vec<Vec<T>>,
    /// Singular values of each user's projected channel (the diagonal of the
    /// effective channel before power loading).
    pub gains: Vec<Vec<T>>,
    pub null_dims: Vec<usize>,
}

/// Orthonormal basis of the null space of `a` (`ncols` rows), by the full
/// right singular basis with rank threshold relative to the largest squared
/// singular value.
pub fn null_space<T: Real>(a: &CMatrix<T>) -> Result<CMatrix<T>> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return Ok(linalg::identity(n));
    }
    let svd = linalg::svd(a)?;
    let smax = svd.s.first().copied().unwrap_or(T::zero());
    let cut = T::rank_tol() * smax * smax;
    let rank = svd.s.iter().filter(|&&s| smax > T::zero() && s * s > cut).count();
    Ok(linalg::columns(&svd.v, rank, n - rank))
}

/// Block diagonalization of the per-user baseband channels `H_BB_k`
/// (`r_k x n_rf_t`). User `k` is precoded inside the null space of every
/// other user's block, then the projected channel is diagonalized by its
/// SVD; `W_BB_k` holds its `n_s` leading left singular vectors. Equal power
/// loading.
pub fn bd_precoder<T: Real>(h_bb: &[CMatrix<T>], n_s: usize) -> Result<BdOutput<T>> {
    let k_users = h_bb.len();
    if k_users == 0 || n_s == 0 {
        return Err(Error::Dimension("BD needs at least one user and one stream".into()));
    }
    let n_rf_t = h_bb[0].ncols();
    if h_bb.iter().any(|h| h.ncols() != n_rf_t) {
        return Err(Error::Dimension("BD blocks must share the column count".into()));
    }
    let mut blocks = Vec::with_capacity(k_users);
    let mut out = BdOutput {
        f_bb: CMatrix::zeros((n_rf_t, 0)),
        w_bb: Vec::with_capacity(k_users),
        power_loading: Vec::with_capacity(k_users),
        gains: Vec::with_capacity(k_users),
        null_dims: Vec::with_capacity(k_users),
    };
    for k in 0..k_users {
        if h_bb[k].nrows() < n_s {
            return Err(Error::Dimension(format!(
                "user {k} has {} baseband outputs for {n_s} streams",
                h_bb[k].nrows()
            )));
        }
        let others: Vec<CMatrix<T>> = h_bb
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != k)
            .map(|(_, h)| h.clone())
            .collect();
        let others = if others.is_empty() {
            CMatrix::zeros((0, n_rf_t))
        } else {
            linalg::vstack(&others)
        };
        let f_a = null_space(&others)?;
        let dim = f_a.ncols();
        out.null_dims.push(dim);
        if dim < n_s {
            return Err(Error::NullSpace {
                needed: n_s,
                available: dim,
            });
        }
        let proj = h_bb[k].dot(&f_a);
        let svd = linalg::svd(&proj)?;
        let lambda = vec![T::one(); n_s];
        let f_b = linalg::columns(&svd.v, 0, n_s);
        blocks.push(f_a.dot(&f_b));
        out.w_bb.push(linalg::columns(&svd.u, 0, n_s));
        out.gains.push(svd.s.iter().take(n_s).copied().collect());
        out.power_loading.push(lambda);
    }
    out.f_bb = linalg::hstack(&blocks);
    Ok(out)
}

/// The `n_s` principal eigenvectors of `H_check H_check^H`.
pub fn svd_digital_combiner<T: Real>(h_check: &CMatrix<T>, n_s: usize) -> Result<CMatrix<T>> {
    let n = h_check.nrows();
    if n_s == 0 || n_s > n {
        return Err(Error::Dimension(format!("digital combiner with {n_s} columns for {n} inputs")));
    }
    let e = linalg::eigh(&h_check.dot(&linalg::adjoint(h_check)))?;
    Ok(linalg::columns(&e.vectors, 0, n_s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{adjoint, blkdiag, frob, frob_sqr, identity};
    use crate::model::pseudo_det;
    use crate::testutil::{random_matrix, random_psd, random_unit_modulus};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn max_abs(a: &CMatrix<f64>) -> f64 {
        a.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn random_problem(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> MmseProblem<f64> {
        let b = random_matrix(rng, cols, cols);
        MmseProblem {
            h_eff: random_matrix(rng, rows, cols),
            a: adjoint(&b).dot(&b),
            r_x: identity(rows),
            r_n: random_psd(rng, rows, rows).mapv(|z| z * 0.3),
            e_t: rows as f64,
        }
    }

    /// Feasible rescaling of `f` plus the receiver scaling minimizing the MSE
    /// for that precoder.
    fn best_feasible(p: &MmseProblem<f64>, f: &CMatrix<f64>) -> (CMatrix<f64>, f64) {
        let f = f.mapv(|z| z * (p.e_t / p.energy(f)).sqrt());
        let hf = p.h_eff.dot(&f);
        let cross = crate::linalg::trace(&hf.dot(&p.r_x)).re;
        let sig = crate::linalg::trace(&hf.dot(&p.r_x).dot(&adjoint(&hf))).re;
        let beta = cross / (sig + crate::linalg::trace(&p.r_n).re);
        (f, beta)
    }

    #[test]
    fn identity_constraint_is_regularized_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let h = random_matrix(&mut rng, 4, 4);
        let s2 = 0.5;
        let p = MmseProblem {
            h_eff: h.clone(),
            a: identity(4),
            r_x: identity(4),
            r_n: identity::<f64>(4).mapv(|z| z * s2),
            e_t: 4.0,
        };
        let sol = constrained_mmse(&p).unwrap();
        let mut m = adjoint(&h).dot(&h);
        for i in 0..4 {
            m[[i, i]] += Complex::new(4.0 * s2 / 4.0, 0.0);
        }
        let g = linalg::inverse(&m).unwrap().dot(&adjoint(&h));
        let want = g.mapv(|z| z / sol.beta);
        assert!(max_abs(&(&sol.f - &want)) < 1e-10 * max_abs(&want));
        assert!((frob_sqr(&sol.f) - 4.0).abs() < 1e-9 * 4.0);
    }

    #[test]
    fn energy_and_stationarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for (r, c) in [(2, 3), (4, 6), (4, 4), (8, 16)] {
            let p = random_problem(&mut rng, r, c);
            let sol = constrained_mmse(&p).unwrap();
            assert!((p.energy(&sol.f) - p.e_t).abs() < 1e-9 * p.e_t);
            // beta^2 H^H H F + lambda A F = beta H^H with lambda/beta^2 = tr(R_n)/E_T
            let b = sol.beta;
            let lam = b * b * crate::linalg::trace(&p.r_n).re / p.e_t;
            let lhs = adjoint(&p.h_eff).dot(&p.h_eff).dot(&sol.f).mapv(|z| z * b * b) + p.a.dot(&sol.f).mapv(|z| z * lam);
            let rhs = adjoint(&p.h_eff).mapv(|z| z * b);
            assert!(frob(&(&lhs - &rhs)) < 1e-8 * frob(&rhs));
        }
    }

    #[test]
    fn beats_perturbed_feasible_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let p = random_problem(&mut rng, 4, 6);
        let sol = constrained_mmse(&p).unwrap();
        let best = p.mse(&sol.f, sol.beta);
        for i in 0..10_000 {
            let eps = [1e-3, 1e-2, 1e-1, 1.0][i % 4];
            let d = random_matrix(&mut rng, 6, 4).mapv(|z| z * eps * frob(&sol.f) / 5.0);
            let (f, _) = best_feasible(&p, &(&sol.f + &d));
            let jitter: f64 = rng.sample::<f64, _>(StandardNormal) * eps * sol.beta;
            let beta = sol.beta + jitter;
            assert!(p.mse(&f, beta) >= best - 1e-12 * best.abs().max(1.0));
        }
    }

    fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], step: f64, iters: usize) -> (Vec<f64>, f64) {
        let n = x0.len();
        let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
        for i in 0..n {
            let mut x = x0.to_vec();
            x[i] += step;
            simplex.push(x);
        }
        let mut vals: Vec<f64> = simplex.iter().map(|x| f(x)).collect();
        for _ in 0..iters {
            let mut idx: Vec<usize> = (0..=n).collect();
            idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap());
            simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
            vals = idx.iter().map(|&i| vals[i]).collect();
            let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|x| x[j]).sum::<f64>() / n as f64).collect();
            let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect() };
            let xr = along(-1.0);
            let fr = f(&xr);
            if fr < vals[0] {
                let xe = along(-2.0);
                let fe = f(&xe);
                if fe < fr {
                    simplex[n] = xe;
                    vals[n] = fe;
                } else {
                    simplex[n] = xr;
                    vals[n] = fr;
                }
            } else if fr < vals[n - 1] {
                simplex[n] = xr;
                vals[n] = fr;
            } else {
                let xc = if fr < vals[n] { along(-0.5) } else { along(0.5) };
                let fc = f(&xc);
                if fc < vals[n].min(fr) {
                    simplex[n] = xc;
                    vals[n] = fc;
                } else {
                    for i in 1..=n {
                        simplex[i] = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
                        vals[i] = f(&simplex[i]);
                    }
                }
            }
        }
        let best = (0..=n).min_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap()).unwrap();
        (simplex[best].clone(), vals[best])
    }

    #[test]
    fn matches_numerical_minimizer_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let p = random_problem(&mut rng, 2, 3);
        let sol = constrained_mmse(&p).unwrap();
        let ours = p.mse(&sol.f, sol.beta);
        let objective = |x: &[f64]| {
            let f = CMatrix::from_shape_fn((3, 2), |(i, j)| Complex::new(x[2 * (2 * i + j)], x[2 * (2 * i + j) + 1]));
            let (f, beta) = best_feasible(&p, &f);
            p.mse(&f, beta)
        };
        let mut x: Vec<f64> = (0..12).map(|_| rng.sample(StandardNormal)).collect();
        let mut val = f64::MAX;
        let mut step = 0.5;
        for _ in 0..30 {
            let (nx, nv) = nelder_mead(&objective, &x, step, 4000);
            x = nx;
            val = nv;
            step = (step * 0.5).max(1e-4);
        }
        assert!(val >= ours - 1e-12, "{val} < {ours}");
        assert!((val - ours).abs() < 1e-5, "{val} vs {ours}");
    }

    fn hybrid_setup(rng: &mut ChaCha8Rng, k: usize, n_s: usize, n_t: usize, n_rf_t: usize, n_r: usize) -> (CMatrix<f64>, CMatrix<f64>, Vec<CMatrix<f64>>) {
        let f_rf = random_unit_modulus(rng, n_t, n_rf_t, 1.0 / (n_t as f64).sqrt());
        let w: Vec<_> = (0..k).map(|_| random_unit_modulus(rng, n_r, n_s, 1.0 / (n_r as f64).sqrt())).collect();
        let h: Vec<_> = (0..k).map(|_| random_matrix(rng, n_r, n_t)).collect();
        let h_tilde = linalg::vstack(&h.iter().zip(&w).map(|(h, w)| adjoint(w).dot(h).dot(&f_rf)).collect::<Vec<_>>());
        (h_tilde, f_rf, w)
    }

    #[test]
    fn mmse_bb_is_constrained_mmse_up_to_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let (h_tilde, f_rf, w) = hybrid_setup(&mut rng, 3, 2, 16, 8, 4);
        let s2 = 0.7;
        let gamma = combined_noise_trace(&w, s2);
        let fbb = mmse_bb(&h_tilde, &f_rf, gamma, 6.0).unwrap().x;
        let r_n = blkdiag(&w.iter().map(|w| combined_noise_cov(w, s2)).collect::<Vec<_>>());
        assert!((crate::linalg::trace(&r_n).re - gamma).abs() < 1e-12 * gamma);
        let p = MmseProblem {
            h_eff: h_tilde.clone(),
            a: adjoint(&f_rf).dot(&f_rf),
            r_x: identity(6),
            r_n,
            e_t: 6.0,
        };
        let sol = constrained_mmse(&p).unwrap();
        let scaled = fbb.mapv(|z| z / sol.beta);
        assert!(max_abs(&(&scaled - &sol.f)) < 1e-10 * max_abs(&sol.f));
        // after the common Frobenius normalization both give the same precoder
        let a = crate::model::HybridPrecoder::new(f_rf.clone(), fbb).unwrap().normalized(6.0).unwrap();
        let b = crate::model::HybridPrecoder::new(f_rf, sol.f).unwrap().normalized(6.0).unwrap();
        assert!(max_abs(&(&a.f_bb - &b.f_bb)) < 1e-10 * max_abs(&a.f_bb));
    }

    #[test]
    fn mmse_bb_with_orthonormal_analog_is_pseudo_mmse() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        // unit-modulus F_RF with orthogonal columns: DFT columns
        let n_t = 8;
        let f_rf = CMatrix::from_shape_fn((n_t, 4), |(i, j)| {
            Complex::from_polar(1.0 / (n_t as f64).sqrt(), std::f64::consts::TAU * (i * j) as f64 / n_t as f64)
        });
        let fhf = adjoint(&f_rf).dot(&f_rf);
        assert!(max_abs(&(&fhf - &identity(4))) < 1e-12);
        let h = random_matrix(&mut rng, 4, 4);
        let gamma = 2.4;
        let a = mmse_bb(&h, &f_rf, gamma, 4.0).unwrap().x;
        let b = pseudo_mmse(&h, gamma / 4.0).unwrap();
        assert!(max_abs(&(&a - &b)) < 1e-10 * max_abs(&b));
    }

    #[test]
    fn mmse_bb_zero_forcing_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let (h_tilde, f_rf, _) = hybrid_setup(&mut rng, 2, 2, 16, 4, 4);
        let fbb = mmse_bb(&h_tilde, &f_rf, 1e-12 * 4.0, 4.0).unwrap();
        assert!(!fbb.regularized);
        let prod = h_tilde.dot(&fbb.x);
        assert!(max_abs(&(&prod - &identity(4))) < 1e-6);
    }

    #[test]
    fn pseudo_mmse_examples() {
        let f = pseudo_mmse(&identity::<f64>(3), 1.0).unwrap();
        assert!(max_abs(&(&f - &identity::<f64>(3).mapv(|z| z * 0.5))) < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let h = random_matrix(&mut rng, 3, 5);
        let f = pseudo_mmse(&h, 0.0).unwrap();
        assert!(max_abs(&(&h.dot(&f) - &identity(3))) < 1e-10);
    }

    #[test]
    fn pseudo_mmse_differs_for_correlated_analog() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let (h_tilde, f_rf, w) = hybrid_setup(&mut rng, 2, 2, 8, 4, 4);
        let fhf = adjoint(&f_rf).dot(&f_rf);
        let off = max_abs(&(&fhf - &identity(4)));
        assert!(off > 0.1, "analog columns happen to be orthonormal");
        let s2 = 1.0;
        let gamma = combined_noise_trace(&w, s2);
        let a = mmse_bb(&h_tilde, &f_rf, gamma, 4.0).unwrap().x;
        let b = pseudo_mmse(&h_tilde, s2).unwrap();
        let na = crate::model::HybridPrecoder::new(f_rf.clone(), a).unwrap().normalized(4.0).unwrap();
        let nb = crate::model::HybridPrecoder::new(f_rf, b).unwrap().normalized(4.0).unwrap();
        assert!(max_abs(&(&na.f_bb - &nb.f_bb)) > 1e-3);
    }

    #[test]
    fn null_space_is_orthogonal_complement() {
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let a = random_matrix(&mut rng, 3, 7);
        let n = null_space(&a).unwrap();
        assert_eq!(n.dim(), (7, 4));
        assert!(max_abs(&a.dot(&n)) < 1e-12 * max_abs(&a));
        assert!(max_abs(&(&adjoint(&n).dot(&n) - &identity(4))) < 1e-12);
        // rank-deficient rows
        let b = linalg::vstack(&[a.clone(), a.slice(ndarray::s![0..1, ..]).mapv(|z| z * 2.0)]);
        assert_eq!(null_space(&b).unwrap().ncols(), 4);
    }

    #[test]
    fn bd_single_user_is_svd_precoding() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let h = random_matrix(&mut rng, 2, 4);
        let bd = bd_precoder(&[h.clone()], 2).unwrap();
        assert_eq!(bd.null_dims, vec![4]);
        let svd = linalg::svd(&h).unwrap();
        let eff = adjoint(&bd.w_bb[0]).dot(&h).dot(&bd.f_bb);
        for i in 0..2 {
            assert!((eff[[i, i]].re - svd.s[i]).abs() < 1e-10);
            assert!(eff[[i, i]].im.abs() < 1e-10);
        }
        assert!((eff[[0, 1]].norm() + eff[[1, 0]].norm()) < 1e-10);
    }

    #[test]
    fn bd_two_users_leakage_and_diagonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let hs = vec![random_matrix(&mut rng, 2, 4), random_matrix(&mut rng, 2, 4)];
        let bd = bd_precoder(&hs, 2).unwrap();
        let f1 = bd.f_bb.slice(ndarray::s![.., 0..2]).to_owned();
        let f2 = bd.f_bb.slice(ndarray::s![.., 2..4]).to_owned();
        assert!(frob(&hs[0].dot(&f2)) / frob(&hs[0]) < 1e-9);
        assert!(frob(&hs[1].dot(&f1)) / frob(&hs[1]) < 1e-9);
        for (k, f) in [f1, f2].iter().enumerate() {
            let eff = adjoint(&bd.w_bb[k]).dot(&hs[k]).dot(f);
            assert!(eff[[0, 1]].norm() < 1e-9 && eff[[1, 0]].norm() < 1e-9);
            for i in 0..2 {
                assert!((eff[[i, i]].re - bd.gains[k][i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bd_wider_null_space_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let hs: Vec<_> = (0..3).map(|_| random_matrix(&mut rng, 2, 8)).collect();
        let bd = bd_precoder(&hs, 2).unwrap();
        assert_eq!(bd.null_dims, vec![4, 4, 4]);
        assert_eq!(bd.f_bb.dim(), (8, 6));
        let hs: Vec<_> = (0..3).map(|_| random_matrix(&mut rng, 2, 5)).collect();
        assert_eq!(bd_precoder(&hs, 2).unwrap_err(), Error::NullSpace { needed: 2, available: 1 });
    }

    #[test]
    fn digital_combiner_attains_hadamard_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let h = random_matrix(&mut rng, 4, 32);
        let g = h.dot(&adjoint(&h));
        let w = svd_digital_combiner(&h, 2).unwrap();
        let m = adjoint(&w).dot(&g).dot(&w);
        let tr = crate::linalg::trace(&g).re;
        assert!(m[[0, 1]].norm() < 1e-10 * tr);
        let na = nalgebra::DMatrix::from_fn(4, 4, |i, j| g[[i, j]]);
        let mut ev: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((m[[0, 0]].re - ev[0]).abs() < 1e-9 * ev[0]);
        assert!((m[[1, 1]].re - ev[1]).abs() < 1e-9 * ev[0]);
        let pd = pseudo_det(&linalg::hermitian_part(&m), 1e-10).unwrap();
        assert!((pd - ev[0] * ev[1]).abs() < 1e-9 * ev[0] * ev[1]);
        // no orthonormal pair does better
        for _ in 0..2000 {
            let q = random_matrix(&mut rng, 4, 2);
            let qr = linalg::svd(&q).unwrap();
            let o = qr.u.dot(&adjoint(&qr.v));
            let v = pseudo_det(&linalg::hermitian_part(&adjoint(&o).dot(&g).dot(&o)), 1e-10).unwrap();
            assert!(v <= pd * (1.0 + 1e-9));
        }
    }

    #[test]
    fn digital_combiner_full_is_unitary_and_degenerate_ok() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let h = random_matrix(&mut rng, 3, 6);
        let w = svd_digital_combiner(&h, 3).unwrap();
        assert!(max_abs(&(&adjoint(&w).dot(&w) - &identity(3))) < 1e-12);
        // repeated eigenvalues: H = I gives any basis, result must diagonalize
        let w = svd_digital_combiner(&identity::<f64>(3), 2).unwrap();
        let m = adjoint(&w).dot(&w);
        assert!(max_abs(&(&m - &identity(2))) < 1e-12);
    }
}
