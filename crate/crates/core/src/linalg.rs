//! Dense complex linear algebra on `ndarray` matrices.
//!
//! Everything here is generic over [`Real`] so the same code runs in `f32`
//! and `f64`. Decompositions are Jacobi-based: cyclic two-sided Jacobi for
//! Hermitian eigenproblems and one-sided (Hestenes) Jacobi for the SVD. Both
//! are accurate to working precision on the small matrices (at most a few
//! dozen rows) this crate deals with.
//!
//! Conventions used by every decomposition:
//! - eigenvalues and singular values are returned in descending order;
//! - each eigenvector / right singular vector has its largest-magnitude
//!   component rotated onto the positive real axis.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use num_complex::Complex;

use crate::error::Error;
use crate::scalar::{cone, czero, Real};

pub type CMatrix<T> = Array2<Complex<T>>;
pub type CVector<T> = Array1<Complex<T>>;

const MAX_JACOBI_SWEEPS: usize = 80;

pub fn identity<T: Real>(n: usize) -> CMatrix<T> {
    let mut m = CMatrix::from_elem((n, n), czero());
    for i in 0..n {
        m[[i, i]] = cone();
    }
    m
}

pub fn from_diag<T: Real>(d: &[T]) -> CMatrix<T> {
    let mut m = CMatrix::from_elem((d.len(), d.len()), czero());
    for (i, &v) in d.iter().enumerate() {
        m[[i, i]] = Complex::new(v, T::zero());
    }
    m
}

/// Conjugate transpose.
pub fn adjoint<T: Real>(a: &CMatrix<T>) -> CMatrix<T> {
    a.t().mapv(|z| z.conj())
}

pub fn adjoint_view<T: Real>(a: ArrayView2<'_, Complex<T>>) -> CMatrix<T> {
    a.t().mapv(|z| z.conj())
}

/// `a^H b` without materializing the adjoint.
pub fn adj_mul<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> CMatrix<T> {
    adjoint(a).dot(b)
}

pub fn frob_sqr<T: Real>(a: &CMatrix<T>) -> T {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn frob<T: Real>(a: &CMatrix<T>) -> T {
    frob_sqr(a).sqrt()
}

pub fn trace<T: Real>(a: &CMatrix<T>) -> Complex<T> {
    a.diag().iter().fold(czero(), |acc, &z| acc + z)
}

pub fn all_finite<T: Real>(a: &CMatrix<T>) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// `(a + a^H) / 2`
pub fn hermitian_part<T: Real>(a: &CMatrix<T>) -> CMatrix<T> {
    let half = T::lit(0.5);
    let mut h = a + &adjoint(a);
    h.mapv_inplace(|z| z * half);
    h
}

/// Relative Hermitian defect `||a - a^H||_F / ||a||_F` (0 for the zero matrix).
pub fn hermitian_defect<T: Real>(a: &CMatrix<T>) -> T {
    let n = frob(a);
    if n == T::zero() {
        return T::zero();
    }
    frob(&(a - &adjoint(a))) / n
}

/// Block-diagonal matrix from the given blocks.
pub fn blkdiag<T: Real>(blocks: &[CMatrix<T>]) -> CMatrix<T> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::from_elem((rows, cols), czero());
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.slice_mut(s![r..r + b.nrows(), c..c + b.ncols()]).assign(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

pub fn vstack<T: Real>(blocks: &[CMatrix<T>]) -> CMatrix<T> {
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    ndarray::concatenate(Axis(0), &views).expect("vstack: column counts differ")
}

pub fn hstack<T: Real>(blocks: &[CMatrix<T>]) -> CMatrix<T> {
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    ndarray::concatenate(Axis(1), &views).expect("hstack: row counts differ")
}

/// Owned copy of columns `start..start+len`.
pub fn columns<T: Real>(a: &CMatrix<T>, start: usize, len: usize) -> CMatrix<T> {
    a.slice(s![.., start..start + len]).to_owned()
}

/// Rotation `[[c, s], [-s e^{-i phi}, c e^{-i phi}]]` that diagonalizes the
/// Hermitian 2x2 block `[[app, apq], [conj(apq), aqq]]`.
#[derive(Clone, Copy)]
struct Rotation<T: Real> {
    c: T,
    s: T,
    t: T,
    /// e^{-i phi} with phi = arg(apq)
    ph: Complex<T>,
}

impl<T: Real> Rotation<T> {
    fn new(app: T, aqq: T, apq: Complex<T>) -> Self {
        let abs = apq.norm();
        let tau = (aqq - app) / (abs + abs);
        let t = if tau == T::zero() {
            T::one()
        } else {
            tau.signum() / (tau.abs() + (T::one() + tau * tau).sqrt())
        };
        let c = T::one() / (T::one() + t * t).sqrt();
        Rotation {
            c,
            s: t * c,
            t,
            ph: (apq / abs).conj(),
        }
    }

    /// `a <- a J` on columns p, q.
    fn apply_right(&self, a: &mut CMatrix<T>, p: usize, q: usize) {
        for k in 0..a.nrows() {
            let x = a[[k, p]];
            let y = a[[k, q]];
            a[[k, p]] = x * self.c - y * self.ph * self.s;
            a[[k, q]] = x * self.s + y * self.ph * self.c;
        }
    }

    /// `a <- J^H a` on rows p, q.
    fn apply_left_adj(&self, a: &mut CMatrix<T>, p: usize, q: usize) {
        let phc = self.ph.conj();
        for k in 0..a.ncols() {
            let x = a[[p, k]];
            let y = a[[q, k]];
            a[[p, k]] = x * self.c - y * phc * self.s;
            a[[q, k]] = x * self.s + y * phc * self.c;
        }
    }
}

/// Index of the component whose magnitude defines the phase reference.
fn phase_anchor<T: Real>(col: ndarray::ArrayView1<'_, Complex<T>>) -> Option<usize> {
    let max = col.iter().map(|z| z.norm()).fold(T::zero(), T::max);
    if max == T::zero() {
        return None;
    }
    let cut = max * (T::one() - T::epsilon().sqrt());
    col.iter().position(|z| z.norm() >= cut)
}

/// Multiplies column `j` by the unit phase that makes its anchor component
/// real-positive; returns the applied phase.
fn fix_column_phase<T: Real>(v: &mut CMatrix<T>, j: usize) -> Complex<T> {
    match phase_anchor(v.column(j)) {
        Some(i) => {
            let z = v[[i, j]];
            let ph = z.conj() / z.norm();
            v.column_mut(j).mapv_inplace(|x| x * ph);
            v[[i, j]] = Complex::new(v[[i, j]].norm(), T::zero());
            ph
        }
        None => cone(),
    }
}

/// Hermitian eigendecomposition `a = V diag(values) V^H`.
#[derive(Debug, Clone)]
pub struct Eigh<T: Real> {
    /// Descending.
    pub values: Vec<T>,
    pub vectors: CMatrix<T>,
}

/// Eigendecomposition of the Hermitian part of `a` by cyclic Jacobi.
pub fn eigh<T: Real>(a: &CMatrix<T>) -> Result<Eigh<T>, Error> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!(
            "eigh needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if !all_finite(a) {
        return Err(Error::NonFinite("eigh input"));
    }
    let mut m = hermitian_part(a);
    let mut v = identity::<T>(n);
    let total = frob_sqr(&m);
    let eps = T::epsilon();
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += m[[p, q]].norm_sqr();
            }
        }
        if off <= eps * eps * total * T::lit(0.25) || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.norm() <= T::min_positive_value() {
                    continue;
                }
                let app = m[[p, p]].re;
                let aqq = m[[q, q]].re;
                let rot = Rotation::new(app, aqq, apq);
                let abs = apq.norm();
                rot.apply_right(&mut m, p, q);
                rot.apply_left_adj(&mut m, p, q);
                m[[p, q]] = czero();
                m[[q, p]] = czero();
                m[[p, p]] = Complex::new(app - rot.t * abs, T::zero());
                m[[q, q]] = Complex::new(aqq + rot.t * abs, T::zero());
                rot.apply_right(&mut v, p, q);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[[j, j]]
            .re
            .partial_cmp(&m[[i, i]].re)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values: Vec<T> = order.iter().map(|&i| m[[i, i]].re).collect();
    let mut vectors = CMatrix::from_elem((n, n), czero());
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
        fix_column_phase(&mut vectors, dst);
    }
    Ok(Eigh { values, vectors })
}

/// Singular value decomposition `a = U diag(s) V^H`.
///
/// `v` is the full `n x n` unitary factor, so right null-space vectors are
/// available as the trailing columns. `s` has `n` entries (zeros included).
/// `u` is `m x min(m, n)`.
#[derive(Debug, Clone)]
pub struct Svd<T: Real> {
    pub u: CMatrix<T>,
    /// Descending, length `n`.
    pub s: Vec<T>,
    pub v: CMatrix<T>,
}

pub fn svd<T: Real>(a: &CMatrix<T>) -> Result<Svd<T>, Error> {
    let (m, n) = a.dim();
    if !all_finite(a) {
        return Err(Error::NonFinite("svd input"));
    }
    let mut w = a.to_owned();
    let mut v = identity::<T>(n);
    let eps = T::epsilon();
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let mut alpha = T::zero();
                let mut beta = T::zero();
                let mut gamma: Complex<T> = czero();
                for k in 0..m {
                    let x = w[[k, p]];
                    let y = w[[k, q]];
                    alpha += x.norm_sqr();
                    beta += y.norm_sqr();
                    gamma += x.conj() * y;
                }
                let g = gamma.norm();
                if g <= eps * (alpha * beta).sqrt() || g <= T::min_positive_value() {
                    continue;
                }
                rotated = true;
                let rot = Rotation::new(alpha, beta, gamma);
                rot.apply_right(&mut w, p, q);
                rot.apply_right(&mut v, p, q);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<T> = (0..n)
        .map(|j| w.column(j).iter().map(|z| z.norm_sqr()).sum::<T>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        norms[j]
            .partial_cmp(&norms[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let s: Vec<T> = order.iter().map(|&i| norms[i]).collect();
    let mut vs = CMatrix::from_elem((n, n), czero());
    let r = m.min(n);
    let mut u = CMatrix::from_elem((m, r), czero());
    let smax = s.first().copied().unwrap_or(T::zero());
    let tiny = smax * eps * T::from_usize_lossy(n.max(m).max(1));
    let mut filled = vec![false; r];
    for (dst, &src) in order.iter().enumerate() {
        vs.column_mut(dst).assign(&v.column(src));
        let ph = fix_column_phase(&mut vs, dst);
        if dst < r && s[dst] > tiny && s[dst] > T::zero() {
            let inv = T::one() / s[dst];
            for k in 0..m {
                u[[k, dst]] = w[[k, src]] * ph * inv;
            }
            filled[dst] = true;
        }
    }
    complete_orthonormal(&mut u, &filled);
    Ok(Svd { u, s, v: vs })
}

/// Fills the columns of `u` not marked in `filled` with an orthonormal
/// completion (Gram-Schmidt against the canonical basis).
fn complete_orthonormal<T: Real>(u: &mut CMatrix<T>, filled: &[bool]) {
    let m = u.nrows();
    let mut have: Vec<usize> = (0..filled.len()).filter(|&j| filled[j]).collect();
    let mut basis = 0;
    for j in 0..filled.len() {
        if filled[j] {
            continue;
        }
        while basis < m {
            let mut cand = CVector::from_elem(m, czero());
            cand[basis] = cone();
            basis += 1;
            for _ in 0..2 {
                for &h in &have {
                    let col = u.column(h);
                    let proj: Complex<T> = col
                        .iter()
                        .zip(cand.iter())
                        .fold(czero(), |acc, (a, b)| acc + a.conj() * b);
                    for k in 0..m {
                        cand[k] -= col[k] * proj;
                    }
                }
            }
            let nrm = cand.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
            if nrm > T::lit(1e-3) {
                u.column_mut(j).assign(&cand.mapv(|z| z / nrm));
                have.push(j);
                break;
            }
        }
    }
}

/// LU factorization with partial pivoting.
pub struct Lu<T: Real> {
    lu: CMatrix<T>,
    perm: Vec<usize>,
    /// min |u_ii| / max |u_ii|; a cheap conditioning indicator.
    pub pivot_ratio: T,
}

pub fn lu<T: Real>(a: &CMatrix<T>) -> Result<Lu<T>, Error> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!(
            "lu needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    if !all_finite(a) {
        return Err(Error::NonFinite("lu input"));
    }
    let mut lu = a.to_owned();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (piv, best) = (k..n)
            .map(|i| (i, lu[[i, k]].norm()))
            .fold((k, T::zero()), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best == T::zero() {
            return Err(Error::Singular {
                what: "lu",
                condition: T::infinity().to_f64_lossy(),
            });
        }
        if piv != k {
            for j in 0..n {
                lu.swap([k, j], [piv, j]);
            }
            perm.swap(k, piv);
        }
        let d = lu[[k, k]];
        for i in k + 1..n {
            let f = lu[[i, k]] / d;
            lu[[i, k]] = f;
            if f != czero() {
                for j in k + 1..n {
                    let t = lu[[k, j]];
                    lu[[i, j]] -= f * t;
                }
            }
        }
    }
    let diag: Vec<T> = (0..n).map(|i| lu[[i, i]].norm()).collect();
    let max = diag.iter().copied().fold(T::zero(), T::max);
    let min = diag.iter().copied().fold(T::infinity(), T::min);
    let pivot_ratio = if n == 0 { T::one() } else { min / max };
    Ok(Lu {
        lu,
        perm,
        pivot_ratio,
    })
}

impl<T: Real> Lu<T> {
    /// Solves `a x = b` for every column of `b`.
    pub fn solve(&self, b: &CMatrix<T>) -> CMatrix<T> {
        let n = self.lu.nrows();
        let mut x = CMatrix::from_elem(b.dim(), czero());
        for (i, &p) in self.perm.iter().enumerate() {
            x.row_mut(i).assign(&b.row(p));
        }
        for c in 0..b.ncols() {
            for i in 0..n {
                let mut acc = x[[i, c]];
                for k in 0..i {
                    acc -= self.lu[[i, k]] * x[[k, c]];
                }
                x[[i, c]] = acc;
            }
            for i in (0..n).rev() {
                let mut acc = x[[i, c]];
                for k in i + 1..n {
                    acc -= self.lu[[i, k]] * x[[k, c]];
                }
                x[[i, c]] = acc / self.lu[[i, i]];
            }
        }
        x
    }
}

pub fn solve<T: Real>(a: &CMatrix<T>, b: &CMatrix<T>) -> Result<CMatrix<T>, Error> {
    Ok(lu(a)?.solve(b))
}

pub fn inverse<T: Real>(a: &CMatrix<T>) -> Result<CMatrix<T>, Error> {
    let n = a.nrows();
    Ok(lu(a)?.solve(&identity(n)))
}

/// Lower Cholesky factor of a Hermitian positive-definite matrix, or `None`
/// when a pivot is not strictly positive.
pub fn cholesky<T: Real>(a: &CMatrix<T>) -> Option<CMatrix<T>> {
    let n = a.nrows();
    let mut l = CMatrix::from_elem((n, n), czero());
    for j in 0..n {
        let mut d = a[[j, j]].re;
        for k in 0..j {
            d -= l[[j, k]].norm_sqr();
        }
        if !(d > T::zero()) {
            return None;
        }
        let djj = d.sqrt();
        l[[j, j]] = Complex::new(djj, T::zero());
        for i in j + 1..n {
            let mut acc = a[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]].conj();
            }
            l[[i, j]] = acc / djj;
        }
    }
    Some(l)
}

/// Inverse of a Hermitian PD matrix through its Cholesky factor.
pub fn cholesky_inverse<T: Real>(l: &CMatrix<T>) -> CMatrix<T> {
    let n = l.nrows();
    // L^{-1} by forward substitution, then A^{-1} = L^{-H} L^{-1}.
    let mut linv: CMatrix<T> = CMatrix::from_elem((n, n), czero());
    for c in 0..n {
        for i in c..n {
            let mut acc: Complex<T> = if i == c { cone() } else { czero() };
            for k in c..i {
                acc -= l[[i, k]] * linv[[k, c]];
            }
            linv[[i, c]] = acc / l[[i, i]];
        }
    }
    adjoint(&linv).dot(&linv)
}

/// `log2 det(a)` for Hermitian positive-definite `a`.
pub fn log2_det_hpd<T: Real>(a: &CMatrix<T>) -> Option<T> {
    let l = cholesky(a)?;
    let two = T::lit(2.0);
    Some((0..a.nrows()).map(|i| two * l[[i, i]].re.log2()).sum())
}
