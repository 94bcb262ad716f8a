//! Random fixtures shared by unit tests.

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{adjoint, CMatrix};

/// Matrix with i.i.d. CN(0, 1) entries.
pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> CMatrix<f64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_shape_fn((rows, cols), |_| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex::new(re * h, im * h)
    })
}

/// `X X^H` with `X` of size `n x rank`.
pub fn random_psd<R: Rng>(rng: &mut R, n: usize, rank: usize) -> CMatrix<f64> {
    let x = random_matrix(rng, n, rank);
    x.dot(&adjoint(&x))
}

pub fn random_unit_modulus<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> CMatrix<f64> {
    CMatrix::from_shape_fn((rows, cols), |_| {
        Complex::from_polar(scale, rng.random_range(0.0..std::f64::consts::TAU))
    })
}
