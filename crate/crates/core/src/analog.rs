//! Analog (phase-shifter) stages: column iterative algorithm, its recursive
//! transmitter/receiver alternation, and eigenvector phase projections.

use ndarray::s;
use num_complex::Complex;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::model::{phase_project, pseudo_det_parts, PseudoDet, SystemConfig};
use crate::scalar::Real;

/// Loop control for the column iterative algorithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CiaSettings<T: Real> {
    pub max_sweeps: usize,
    /// Stop when no entry moved by more than this in a sweep.
    pub conv_tol: T,
    /// Relative ridge added to a singular `C_j` (scaled by its mean diagonal).
    pub reg_eps: T,
    /// Relative ridge added to `D` when its rank is below the column count,
    /// so the surplus columns spread out instead of sitting on a flat
    /// objective.
    pub rank_ridge: T,
}

impl<T: Real> Default for CiaSettings<T> {
    fn default() -> Self {
        CiaSettings {
            max_sweeps: 100,
            conv_tol: T::lit(1e-6),
            reg_eps: T::lit(1e-9),
            rank_ridge: T::lit(1e-6),
        }
    }
}

impl<T: Real> CiaSettings<T> {
    pub fn validate(&self) -> Result<()> {
        if self.max_sweeps == 0 || !(self.conv_tol > T::zero()) {
            return Err(Error::InvalidConfig(
                "CIA needs max_sweeps >= 1 and conv_tol > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct CiaOutcome<T: Real> {
    pub b: CMatrix<T>,
    pub sweeps: usize,
    pub converged: bool,
    /// A `C_j` had to be ridge-regularized at least once.
    pub regularized: bool,
    /// `D` had rank below `m` and was ridged; the trace refers to the ridged
    /// matrix.
    pub ridged: bool,
    /// Objective of the starting point followed by one entry per sweep.
    pub objective_trace: Vec<PseudoDet<T>>,
}

/// `B^H D B` pseudo-determinant (rank and log2 value).
pub fn cia_objective<T: Real>(b: &CMatrix<T>, d: &CMatrix<T>) -> Result<PseudoDet<T>> {
    gram_objective(linalg::hermitian_part(&linalg::adjoint(b).dot(&d.dot(b))))
}

fn gram_objective<T: Real>(m: CMatrix<T>) -> Result<PseudoDet<T>> {
    // well-conditioned full rank is the common case; Cholesky is exact there
    if let Some(l) = linalg::cholesky(&m) {
        let piv: Vec<T> = (0..m.nrows()).map(|i| l[[i, i]].re * l[[i, i]].re).collect();
        let max = piv.iter().copied().fold(T::zero(), T::max);
        let min = piv.iter().copied().fold(T::infinity(), T::min);
        if min > T::lit(1e3) * T::rank_tol() * max {
            let log2 = piv.iter().map(|p| p.log2()).fold(T::zero(), |a, b| a + b);
            return Ok(PseudoDet { rank: m.nrows(), log2 });
        }
    }
    pseudo_det_parts(&m, T::rank_tol())
}

/// Numerical rank of a Hermitian PSD matrix by diagonally pivoted Cholesky,
/// relative to its largest diagonal entry.
fn psd_rank<T: Real>(d: &CMatrix<T>) -> usize {
    let n = d.nrows();
    let mut a = d.clone();
    let top = (0..n).map(|i| a[[i, i]].re).fold(T::zero(), T::max);
    if !(top > T::zero()) {
        return 0;
    }
    let mut used = vec![false; n];
    for r in 0..n {
        let (p, v) = (0..n)
            .filter(|&i| !used[i])
            .map(|i| (i, a[[i, i]].re))
            .fold((usize::MAX, T::neg_infinity()), |acc, x| if x.1 > acc.1 { x } else { acc });
        if p == usize::MAX || !(v > T::rank_tol() * top) {
            return r;
        }
        used[p] = true;
        let col: Vec<Complex<T>> = (0..n).map(|i| a[[i, p]]).collect();
        for i in 0..n {
            if used[i] {
                continue;
            }
            for j in 0..n {
                if !used[j] {
                    let upd = col[i] * col[j].conj() / v;
                    a[[i, j]] -= upd;
                }
            }
        }
    }
    n
}

/// `R` with `R^H R = d` for Hermitian PSD `d`, from its eigenpairs; rows
/// for eigenvalues at rounding level are dropped.
fn psd_root<T: Real>(d: &CMatrix<T>) -> Result<CMatrix<T>> {
    let e = linalg::eigh(d)?;
    let top = e.values.first().copied().unwrap_or(T::zero()).max(T::zero());
    let keep: Vec<usize> = (0..e.values.len())
        .filter(|&i| e.values[i] > T::rank_tol() * top)
        .collect();
    let n = d.nrows();
    let mut r = CMatrix::from_elem((keep.len().max(1), n), Complex::new(T::zero(), T::zero()));
    for (row, &i) in keep.iter().enumerate() {
        let s = e.values[i].sqrt();
        for c in 0..n {
            r[[row, c]] = e.vectors[[c, i]].conj() * s;
        }
    }
    Ok(r)
}

/// `Z` with `Z^H Z = G_j = D - D Bbar C_j^{-1} Bbar^H D`, given `Y = R Bbar`.
///
/// `G_j = R^H (I - Y C_j^{-1} Y^H) R` and the middle factor is a projector,
/// so `Z = (I - U U^H) R` from the SVD of `Y`. Subtracting the projection
/// of `R` keeps full relative accuracy where forming `G_j` directly would
/// cancel. A numerically singular `C_j = Y^H Y` is ridged by `reg_eps`
/// times its mean diagonal; the middle factor then has eigenvalues
/// `delta / (s^2 + delta)` on the range of `U`. Returns whether the ridge
/// was needed.
fn schur_root<T: Real>(r: &CMatrix<T>, y: &CMatrix<T>, reg_eps: T) -> Result<(CMatrix<T>, bool)> {
    let sv = linalg::svd(y)?;
    let cols = y.ncols().min(sv.u.ncols());
    let s2: Vec<T> = sv.s[..cols].iter().map(|s| *s * *s).collect();
    let max = s2.iter().copied().fold(T::zero(), T::max);
    let min = s2.iter().copied().fold(T::infinity(), T::min);
    let singular = y.ncols() > sv.u.ncols() || !(min > T::rank_tol() * max);
    let delta = if singular {
        let mean = linalg::frob_sqr(y) / T::from_usize_lossy(y.ncols().max(1));
        reg_eps * if mean > T::zero() { mean } else { T::one() }
    } else {
        T::zero()
    };
    let mut z = r.clone();
    let uhr = linalg::adjoint(&sv.u.slice(s![.., ..cols]).to_owned()).dot(r);
    for k in 0..cols {
        // share of the component along u_k that is removed
        let w = if singular {
            T::one() - (delta / (s2[k] + delta)).sqrt()
        } else {
            T::one()
        };
        if w == T::zero() {
            continue;
        }
        for a in 0..z.nrows() {
            let uk = sv.u[[a, k]] * w;
            for c in 0..z.ncols() {
                let t = uk * uhr[[k, c]];
                z[[a, c]] -= t;
            }
        }
    }
    Ok((z, singular))
}

/// Column iterative algorithm: searches `B` (`n x m`, all entries of
/// magnitude `1/sqrt(n)`) maximizing `|B^H D B|`.
///
/// Starts from the all-equal matrix and sweeps over columns. For column `j`
/// the determinant factors as `det(C_j) * b_j^H G_j b_j` with
/// `C_j = Bbar^H D Bbar` and `G_j = D - D Bbar C_j^{-1} Bbar^H D`, so each
/// entry update `b_ij <- Psi(sum_{l != i} G_j[i, l] b_lj)` is a coordinate
/// ascent step. Updates are applied in place, which keeps the objective
/// nondecreasing. `G_j` is handled through a square-root factor so that
/// ill-conditioned `D` does not lose the small Schur complement to
/// cancellation.
pub fn column_iterative<T: Real>(d: &CMatrix<T>, m: usize, settings: &CiaSettings<T>) -> Result<CiaOutcome<T>> {
    settings.validate()?;
    let n = d.nrows();
    if d.ncols() != n {
        return Err(Error::Dimension(format!("CIA needs square D, got {:?}", d.dim())));
    }
    if m == 0 || m > n {
        return Err(Error::Dimension(format!("CIA needs 1 <= m <= n, got m={m}, n={n}")));
    }
    if !linalg::all_finite(d) {
        return Err(Error::NonFinite("CIA input"));
    }
    let mut d = linalg::hermitian_part(d);
    let ridge = rank_ridge(&d, m, settings);
    let root = match ridge {
        Some(r) => {
            for i in 0..n {
                d[[i, i]] += Complex::new(r, T::zero());
            }
            psd_root(&d)?
        }
        None => psd_root(&d)?,
    };
    cia_sweeps(&d, &root, m, settings, ridge.is_some())
}

/// [`column_iterative`] for `D = R^H R` given `R` (`r x n`), which skips
/// the eigendecomposition of `D`.
pub fn column_iterative_factored<T: Real>(root: &CMatrix<T>, m: usize, settings: &CiaSettings<T>) -> Result<CiaOutcome<T>> {
    settings.validate()?;
    let n = root.ncols();
    if m == 0 || m > n {
        return Err(Error::Dimension(format!("CIA needs 1 <= m <= n, got m={m}, n={n}")));
    }
    if !linalg::all_finite(root) {
        return Err(Error::NonFinite("CIA input"));
    }
    let mut d = linalg::hermitian_part(&linalg::adjoint(root).dot(root));
    let ridge = rank_ridge(&d, m, settings);
    let root = match ridge {
        Some(r) => {
            for i in 0..n {
                d[[i, i]] += Complex::new(r, T::zero());
            }
            let extra = linalg::identity::<T>(n).mapv(|z| z * r.sqrt());
            linalg::vstack(&[root.clone(), extra])
        }
        None => root.clone(),
    };
    cia_sweeps(&d, &root, m, settings, ridge.is_some())
}

/// Diagonal ridge for `d` when its rank is below `m`.
fn rank_ridge<T: Real>(d: &CMatrix<T>, m: usize, settings: &CiaSettings<T>) -> Option<T> {
    if psd_rank(d) >= m {
        return None;
    }
    let n = d.nrows();
    let mean_diag = linalg::trace(d).re / T::from_usize_lossy(n);
    Some(settings.rank_ridge * if mean_diag > T::zero() { mean_diag } else { T::one() })
}

fn cia_sweeps<T: Real>(d: &CMatrix<T>, root: &CMatrix<T>, m: usize, settings: &CiaSettings<T>, ridged: bool) -> Result<CiaOutcome<T>> {
    let n = d.nrows();
    let r = root.nrows();
    let zero = Complex::new(T::zero(), T::zero());
    let scale = T::one() / T::from_usize_lossy(n).sqrt();
    // sums below this are rounding noise on a flat direction
    let flat = T::rank_tol() * linalg::trace(d).re.abs() * scale;
    // contiguous layouts: rt[i] = column i of R, bc[j] = column j of B,
    // rb[j] = R b_j
    let rt: Vec<Complex<T>> = (0..n).flat_map(|i| (0..r).map(move |a| root[[a, i]])).collect();
    let mut bc = vec![Complex::new(scale, T::zero()); n * m];
    let to_matrix = |bc: &[Complex<T>]| CMatrix::from_shape_fn((n, m), |(i, j)| bc[j * n + i]);
    let mut rb = vec![zero; m * r];
    // B^H D B as the Gram of the rows of rb = (R B)^T
    let objective = |rb: &[Complex<T>]| {
        gram_objective(CMatrix::from_shape_fn((m, m), |(a, c)| dot_conj(&rb[a * r..(a + 1) * r], &rb[c * r..(c + 1) * r])))
    };
    for j in 0..m {
        mat_vec(&rt, &bc[j * n..(j + 1) * n], r, &mut rb[j * r..(j + 1) * r]);
    }
    let mut trace = vec![objective(&rb)?];
    let mut basis = vec![zero; (m - 1) * r];
    let mut coef = vec![zero; m.max(1)];
    let mut z = vec![zero; r];
    let mut w = vec![zero; r];
    let mut regularized = false;
    let mut converged = false;
    let mut sweeps = 0;

    while sweeps < settings.max_sweeps {
        sweeps += 1;
        let prev = bc.clone();
        for j in 0..m {
            // G_j = Z^H Z is never formed. With a small basis Q of the other
            // columns' image, z_i = (I - Q Q^H) r_i is built per entry. With a
            // small complement P, z_i is replaced by its coordinates P^H r_i,
            // which leaves every inner product unchanged. Near-singular bases
            // take the SVD route.
            let mut coords: Option<Vec<Complex<T>>> = None;
            let mut dim = r;
            let mut q_rows = 0;
            if m > 1 {
                let mut c = 0;
                for k in (0..m).filter(|&k| k != j) {
                    basis[c * r..(c + 1) * r].copy_from_slice(&rb[k * r..(k + 1) * r]);
                    c += 1;
                }
                if orthonormalize_rows(&mut basis, m - 1, r) {
                    q_rows = m - 1;
                    if 2 * q_rows > r {
                        let p = complement_rows(&basis[..q_rows * r], r);
                        dim = r - q_rows;
                        let mut zt = vec![zero; n * dim];
                        for i in 0..n {
                            let ri = &rt[i * r..(i + 1) * r];
                            for (c, row) in p.chunks_exact(r).enumerate() {
                                zt[i * dim + c] = dot_conj(row, ri);
                            }
                        }
                        coords = Some(zt);
                    }
                } else {
                    let y = CMatrix::from_shape_fn((r, m - 1), |(a, c)| basis[c * r + a]);
                    let (zm, reg) = schur_root(root, &y, settings.reg_eps)?;
                    regularized |= reg;
                    coords = Some((0..n).flat_map(|i| (0..r).map(move |a| (i, a))).map(|(i, a)| zm[[a, i]]).collect());
                }
            }
            let z = &mut z[..dim];
            let w = &mut w[..dim];
            let column = |i: usize, z: &mut [Complex<T>], coef: &mut [Complex<T>]| match &coords {
                Some(zt) => z.copy_from_slice(&zt[i * dim..(i + 1) * dim]),
                None => {
                    z.copy_from_slice(&rt[i * r..(i + 1) * r]);
                    project_out(&basis[..q_rows * r], r, z, coef);
                }
            };
            // w = Z b_j
            match &coords {
                Some(zt) => mat_vec(zt, &bc[j * n..(j + 1) * n], dim, w),
                None => {
                    w.copy_from_slice(&rb[j * r..(j + 1) * r]);
                    project_out(&basis[..q_rows * r], r, w, &mut coef);
                }
            }
            for i in 0..n {
                column(i, z, &mut coef);
                let mut zw = zero;
                let mut g_ii = T::zero();
                for (a, c) in z.iter().zip(w.iter()) {
                    zw += a.conj() * c;
                    g_ii += a.norm_sqr();
                }
                let old = bc[j * n + i];
                let acc = zw - old * g_ii;
                let mag = acc.norm();
                // a zero sum leaves the objective flat in this entry; keep it
                if mag > flat && mag.is_finite() {
                    let new = acc * (scale / mag);
                    let delta = new - old;
                    bc[j * n + i] = new;
                    for (wa, za) in w.iter_mut().zip(z.iter()) {
                        *wa += *za * delta;
                    }
                }
            }
            mat_vec(&rt, &bc[j * n..(j + 1) * n], r, &mut rb[j * r..(j + 1) * r]);
        }
        trace.push(objective(&rb)?);
        let delta = bc.iter().zip(&prev).map(|(a, b)| (*a - *b).norm()).fold(T::zero(), T::max);
        if delta < settings.conv_tol {
            converged = true;
            break;
        }
    }
    Ok(CiaOutcome {
        b: to_matrix(&bc),
        sweeps,
        converged,
        regularized,
        ridged,
        objective_trace: trace,
    })
}

/// `out = R x` with `R` given column-wise in `rt` (`r` entries per column).
fn mat_vec<T: Real>(rt: &[Complex<T>], x: &[Complex<T>], r: usize, out: &mut [Complex<T>]) {
    out.iter_mut().for_each(|o| *o = Complex::new(T::zero(), T::zero()));
    for (col, &xi) in rt.chunks_exact(r).zip(x) {
        for (o, c) in out.iter_mut().zip(col) {
            *o += *c * xi;
        }
    }
}

fn dot_conj<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter().zip(b).fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

/// Orthonormal rows spanning the complement of the orthonormal rows `q`.
/// Each step takes the unit vector with the largest residual, so the
/// residual norm is at least `1 / r` and never at rounding level.
fn complement_rows<T: Real>(q: &[Complex<T>], r: usize) -> Vec<Complex<T>> {
    let k = q.len() / r;
    let zero = Complex::new(T::zero(), T::zero());
    let mut p: Vec<Complex<T>> = Vec::with_capacity((r - k) * r);
    let mut v = vec![zero; r];
    for _ in k..r {
        let mut best = (T::zero(), 0);
        for a in 0..r {
            // squared residual of e_a is 1 - sum of |row_a|^2 over the basis
            let used = q.chunks_exact(r).chain(p.chunks_exact(r)).map(|row| row[a].norm_sqr()).fold(T::zero(), |x, y| x + y);
            let res = T::one() - used;
            if res > best.0 {
                best = (res, a);
            }
        }
        v.iter_mut().for_each(|x| *x = zero);
        v[best.1] = Complex::new(T::one(), T::zero());
        for _ in 0..2 {
            for row in q.chunks_exact(r).chain(p.chunks_exact(r)) {
                let c = dot_conj(row, &v);
                for (va, ra) in v.iter_mut().zip(row) {
                    *va -= *ra * c;
                }
            }
        }
        let inv = T::one() / v.iter().map(|x| x.norm_sqr()).fold(T::zero(), |x, y| x + y).sqrt();
        p.extend(v.iter().map(|x| *x * inv));
    }
    p
}

/// `z <- z - Q Q^H z` for orthonormal rows `q` of length `r`.
fn project_out<T: Real>(q: &[Complex<T>], r: usize, z: &mut [Complex<T>], coef: &mut [Complex<T>]) {
    for (row, c) in q.chunks_exact(r).zip(coef.iter_mut()) {
        *c = row.iter().zip(z.iter()).fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b);
    }
    for (row, &c) in q.chunks_exact(r).zip(coef.iter()) {
        for (za, qa) in z.iter_mut().zip(row) {
            *za -= *qa * c;
        }
    }
}

/// Orthonormalizes `k` rows of length `r` in place by Gram-Schmidt with one
/// reorthogonalization pass. Returns false when a row is close enough to
/// the span of the others that the SVD route has to decide.
fn orthonormalize_rows<T: Real>(rows: &mut [Complex<T>], k: usize, r: usize) -> bool {
    if k > r {
        return false;
    }
    let norm2 = |v: &[Complex<T>]| v.iter().map(|z| z.norm_sqr()).fold(T::zero(), |a, b| a + b);
    let top = (0..k).map(|c| norm2(&rows[c * r..(c + 1) * r])).fold(T::zero(), T::max);
    if !(top > T::zero()) {
        return false;
    }
    for c in 0..k {
        let (done, rest) = rows.split_at_mut(c * r);
        let v = &mut rest[..r];
        for _ in 0..2 {
            for q in done.chunks_exact(r) {
                let dot = q.iter().zip(v.iter()).fold(Complex::new(T::zero(), T::zero()), |acc, (a, b)| acc + a.conj() * b);
                for (va, qa) in v.iter_mut().zip(q) {
                    *va -= *qa * dot;
                }
            }
        }
        let nn = norm2(v);
        // margin over the singularity test so borderline cases go to the SVD
        if !(nn > T::lit(1e4) * T::rank_tol() * top) {
            return false;
        }
        let inv = T::one() / nn.sqrt();
        v.iter_mut().for_each(|z| *z = *z * inv);
    }
    true
}

/// Receive-side CIA on `H_k H_k^H` with `n_rf_r` columns.
pub fn cia_analog_combiner<T: Real>(h_k: &CMatrix<T>, n_rf_r: usize, settings: &CiaSettings<T>) -> Result<CiaOutcome<T>> {
    let a = h_k.dot(&linalg::adjoint(h_k));
    column_iterative(&a, n_rf_r, settings)
}

/// `H^H W W^H H` for the stacked channel and block-diagonal combiner.
pub fn composite_gram<T: Real>(h_stack: &CMatrix<T>, w_blkdiag: &CMatrix<T>) -> CMatrix<T> {
    let m = linalg::adjoint(w_blkdiag).dot(h_stack);
    linalg::hermitian_part(&linalg::adjoint(&m).dot(&m))
}

/// Transmit-side CIA on `H^H W_RF W_RF^H H` with `n_rf_t` columns.
pub fn cia_analog_precoder<T: Real>(
    h_stack: &CMatrix<T>,
    w_rf_blkdiag: &CMatrix<T>,
    n_rf_t: usize,
    settings: &CiaSettings<T>,
) -> Result<CiaOutcome<T>> {
    if h_stack.nrows() != w_rf_blkdiag.nrows() {
        return Err(Error::Dimension(format!(
            "stacked channel {:?} vs block combiner {:?}",
            h_stack.dim(),
            w_rf_blkdiag.dim()
        )));
    }
    let root = linalg::adjoint(w_rf_blkdiag).dot(h_stack);
    column_iterative_factored(&root, n_rf_t, settings)
}

#[derive(Debug, Clone)]
pub struct RecursiveCiaOutcome<T: Real> {
    pub f_rf: CMatrix<T>,
    pub w_rf: Vec<CMatrix<T>>,
    pub passes: usize,
    pub converged: bool,
    pub regularized: bool,
    /// Per pass, per user: `|W_RF_k^H A_k W_RF_k|` with the pass's `A_k`.
    pub objective_trace: Vec<Vec<PseudoDet<T>>>,
    /// Total inner CIA sweeps over all calls.
    pub inner_sweeps: usize,
    /// Inner CIA calls that hit their sweep cap.
    pub inner_unconverged: usize,
}

/// Alternates user combiners `W_RF_k <- CIA(H_k F_k F_k^H H_k^H)` and the
/// BS precoder `F_RF <- CIA(H^H W_RF W_RF^H H)` until both stop moving or
/// `outer_max` passes ran. `F_k` is user `k`'s `n_s`-column block of `F_RF`.
pub fn recursive_cia<T: Real>(
    channels: &ChannelSet<T>,
    cfg: &SystemConfig,
    settings: &CiaSettings<T>,
    outer_max: usize,
) -> Result<RecursiveCiaOutcome<T>> {
    if outer_max == 0 {
        return Err(Error::InvalidConfig("outer_max must be at least 1".into()));
    }
    let k_users = channels.k_users();
    if cfg.n_rf_t < k_users * cfg.n_s {
        return Err(Error::InvalidConfig("n_rf_t smaller than K*n_s".into()));
    }
    let h_stack = channels.stacked();
    let wr = T::one() / T::from_usize_lossy(cfg.n_r).sqrt();
    let ft = T::one() / T::from_usize_lossy(cfg.n_t).sqrt();
    let mut w: Vec<CMatrix<T>> = (0..k_users)
        .map(|_| CMatrix::from_elem((cfg.n_r, cfg.n_rf_r), Complex::new(wr, T::zero())))
        .collect();
    let mut f = CMatrix::from_elem((cfg.n_t, cfg.n_rf_t), Complex::new(ft, T::zero()));
    let mut out = RecursiveCiaOutcome {
        f_rf: f.clone(),
        w_rf: w.clone(),
        passes: 0,
        converged: false,
        regularized: false,
        objective_trace: Vec::new(),
        inner_sweeps: 0,
        inner_unconverged: 0,
    };
    for _ in 0..outer_max {
        out.passes += 1;
        let mut new_w = Vec::with_capacity(k_users);
        let mut objectives = Vec::with_capacity(k_users);
        for (k, h_k) in channels.h.iter().enumerate() {
            let f_k = f.slice(s![.., k * cfg.n_s..(k + 1) * cfg.n_s]);
            let hf = h_k.dot(&f_k);
            let a_k = linalg::hermitian_part(&hf.dot(&linalg::adjoint(&hf)));
            let res = column_iterative_factored(&linalg::adjoint(&hf), cfg.n_rf_r, settings)?;
            out.inner_sweeps += res.sweeps;
            out.inner_unconverged += usize::from(!res.converged);
            out.regularized |= res.regularized;
            objectives.push(cia_objective(&res.b, &a_k)?);
            new_w.push(res.b);
        }
        let res = cia_analog_precoder(&h_stack, &linalg::blkdiag(&new_w), cfg.n_rf_t, settings)?;
        out.inner_sweeps += res.sweeps;
        out.inner_unconverged += usize::from(!res.converged);
        out.regularized |= res.regularized;
        let new_f = res.b;

        let max_move = |a: &CMatrix<T>, b: &CMatrix<T>| (a - b).iter().map(|z| z.norm()).fold(T::zero(), T::max);
        let delta = w
            .iter()
            .zip(&new_w)
            .map(|(a, b)| max_move(a, b))
            .fold(max_move(&f, &new_f), T::max);
        w = new_w;
        f = new_f;
        out.objective_trace.push(objectives);
        if delta < settings.conv_tol {
            out.converged = true;
            break;
        }
    }
    out.f_rf = f;
    out.w_rf = w;
    Ok(out)
}

/// `Psi` of the `n_cols` principal eigenvectors of `H_k H_k^H`, scaled to
/// `1/sqrt(n_r)`.
pub fn svd_phase_combiner<T: Real>(h_k: &CMatrix<T>, n_cols: usize) -> Result<CMatrix<T>> {
    let n_r = h_k.nrows();
    if n_cols == 0 || n_cols > n_r {
        return Err(Error::Dimension(format!("combiner with {n_cols} columns for {n_r} antennas")));
    }
    let e = linalg::eigh(&h_k.dot(&linalg::adjoint(h_k)))?;
    let v = linalg::columns(&e.vectors, 0, n_cols);
    Ok(phase_project(&v, T::one() / T::from_usize_lossy(n_r).sqrt()))
}

/// `Psi(H_k^H W_RF_k) / sqrt(n_t)`: the user's analog precoder block.
pub fn conjugate_phase_precoder<T: Real>(h_k: &CMatrix<T>, w_rf_k: &CMatrix<T>) -> Result<CMatrix<T>> {
    if h_k.nrows() != w_rf_k.nrows() {
        return Err(Error::Dimension(format!("channel {:?} vs combiner {:?}", h_k.dim(), w_rf_k.dim())));
    }
    let n_t = h_k.ncols();
    Ok(phase_project(
        &linalg::adjoint(h_k).dot(w_rf_k),
        T::one() / T::from_usize_lossy(n_t).sqrt(),
    ))
}

/// `Psi` of the `n_cols` principal eigenvectors of `H^H W W^H H`, scaled to
/// `1/sqrt(n_t)`.
pub fn eig_phase_precoder<T: Real>(h_stack: &CMatrix<T>, w_blkdiag: &CMatrix<T>, n_cols: usize) -> Result<CMatrix<T>> {
    let n_t = h_stack.ncols();
    if n_cols == 0 || n_cols > n_t {
        return Err(Error::Dimension(format!("precoder with {n_cols} columns for {n_t} antennas")));
    }
    if h_stack.nrows() != w_blkdiag.nrows() {
        return Err(Error::Dimension(format!(
            "stacked channel {:?} vs block combiner {:?}",
            h_stack.dim(),
            w_blkdiag.dim()
        )));
    }
    let e = linalg::eigh(&composite_gram(h_stack, w_blkdiag))?;
    let v = linalg::columns(&e.vectors, 0, n_cols);
    Ok(phase_project(&v, T::one() / T::from_usize_lossy(n_t).sqrt()))
}
