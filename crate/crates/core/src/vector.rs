//! Dense complex vector kernels shared by the solvers.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;

#[inline]
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[inline]
pub fn norm_sq(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

#[inline]
pub fn norm(a: &[C64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `y += alpha·x`
#[inline]
pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

#[inline]
pub fn scale(alpha: C64, x: &mut [C64]) {
    x.iter_mut().for_each(|v| *v *= alpha);
}

/// Rayleigh quotient `Re⟨x, Ax⟩/⟨x, x⟩` given `ax = A x`.
pub fn rayleigh(x: &[C64], ax: &[C64]) -> f64 {
    dot(x, ax).re / norm_sq(x)
}

/// Standard normal real vector, deterministic in `seed`.
pub fn random_real(len: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| C64::new(rng.sample(StandardNormal), 0.0)).collect()
}

/// Standard complex normal vector, deterministic in `seed`.
pub fn random_complex(len: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).collect()
}
