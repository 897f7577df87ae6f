//! Functions of the grid Laplacian applied through fast transforms: the
//! orthonormal sine transform (DST-I) diagonalizes the Dirichlet stencil, the
//! FFT diagonalizes every translation-invariant periodic operator.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::{Boundary, Grid};
use crate::vector::C64;

/// Which symbol of `−Δ` a spectral operator is a function of.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaplacianSymbol {
    /// Symbol of the 2nd-order stencil, `Σ_j (4/h_j²) sin²(θ_j/2)`.
    FiniteDifference,
    /// Continuum symbol `|k|²` at the grid's wave numbers.
    Exact,
}

/// Sine or Fourier basis matching the grid boundary.
#[derive(Clone)]
pub struct SpectralBasis {
    grid: Arc<Grid>,
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
}

impl fmt::Debug for SpectralBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpectralBasis({:?}, {:?})", self.grid.boundary(), self.grid.shape())
    }
}

impl SpectralBasis {
    pub fn new(grid: &Arc<Grid>) -> Self {
        let mut planner = FftPlanner::new();
        let lens: Vec<usize> = match grid.boundary() {
            Boundary::Dirichlet => grid.shape().iter().map(|m| 2 * (m + 1)).collect(),
            Boundary::Periodic => grid.shape().to_vec(),
        };
        let forward = lens.iter().map(|&l| planner.plan_fft_forward(l)).collect();
        let inverse = lens.iter().map(|&l| planner.plan_fft_inverse(l)).collect();
        Self { grid: grid.clone(), forward, inverse }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Per-axis eigenvalues of `−Δ` in transform order.
    pub fn axis_symbols(&self, kind: LaplacianSymbol) -> Vec<Vec<f64>> {
        let g = &self.grid;
        (0..g.dim())
            .map(|j| {
                let m = g.shape()[j];
                let h = g.spacing()[j];
                let length = 2.0 * g.spec().extent[j];
                (0..m)
                    .map(|k| match (g.boundary(), kind) {
                        (Boundary::Dirichlet, LaplacianSymbol::FiniteDifference) => {
                            let s = (PI * (k + 1) as f64 / (2.0 * (m + 1) as f64)).sin();
                            4.0 * s * s / (h * h)
                        }
                        (Boundary::Dirichlet, LaplacianSymbol::Exact) => (PI * (k + 1) as f64 / length).powi(2),
                        (Boundary::Periodic, LaplacianSymbol::FiniteDifference) => {
                            let s = (PI * k as f64 / m as f64).sin();
                            4.0 * s * s / (h * h)
                        }
                        (Boundary::Periodic, LaplacianSymbol::Exact) => {
                            let kk = if 2 * k <= m { k as f64 } else { k as f64 - m as f64 };
                            (2.0 * PI * kk / length).powi(2)
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Eigenvalue of `−Δ` for every mode, in transform layout.
    pub fn laplacian_symbol(&self, kind: LaplacianSymbol) -> Vec<f64> {
        let axes = self.axis_symbols(kind);
        let g = &self.grid;
        let mut out = vec![0.0; g.len()];
        let mut mi = vec![0usize; g.dim()];
        for (idx, o) in out.iter_mut().enumerate() {
            g.multi_index(idx, &mut mi);
            *o = mi.iter().enumerate().map(|(j, &k)| axes[j][k]).sum();
        }
        out
    }

    /// Forward transform in place (orthonormal DST-I, or unnormalized FFT).
    pub fn forward(&self, data: &mut [C64]) {
        for axis in 0..self.grid.dim() {
            self.axis_pass(data, axis, true);
        }
    }

    /// Inverse of [`SpectralBasis::forward`].
    pub fn inverse(&self, data: &mut [C64]) {
        for axis in 0..self.grid.dim() {
            self.axis_pass(data, axis, false);
        }
        if self.grid.boundary() == Boundary::Periodic {
            let s = 1.0 / self.grid.len() as f64;
            data.iter_mut().for_each(|v| *v *= s);
        }
    }

    fn axis_pass(&self, data: &mut [C64], axis: usize, forward: bool) {
        let m = self.grid.shape()[axis];
        let stride = self.grid.strides()[axis];
        let dirichlet = self.grid.boundary() == Boundary::Dirichlet;
        let fft = if forward || dirichlet { &self.forward[axis] } else { &self.inverse[axis] };
        let line_op = |line: &mut [C64], work: &mut Vec<C64>, scratch: &mut Vec<C64>| {
            if dirichlet {
                dst1(line, fft.as_ref(), work, scratch);
            } else {
                fft.process_with_scratch(line, scratch);
            }
        };
        let init = || {
            let n = fft.len();
            (vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()])
        };
        if stride == 1 {
            data.par_chunks_mut(m).for_each_init(init, |(w, s), line| line_op(line, w, s));
            return;
        }
        let mut buf = vec![C64::new(0.0, 0.0); data.len()];
        let block = m * stride;
        for (l, chunk) in buf.chunks_mut(m).enumerate() {
            let start = (l / stride) * block + l % stride;
            for (k, c) in chunk.iter_mut().enumerate() {
                *c = data[start + k * stride];
            }
        }
        buf.par_chunks_mut(m).for_each_init(init, |(w, s), line| line_op(line, w, s));
        for (l, chunk) in buf.chunks(m).enumerate() {
            let start = (l / stride) * block + l % stride;
            for (k, c) in chunk.iter().enumerate() {
                data[start + k * stride] = *c;
            }
        }
    }
}

/// Orthonormal DST-I of a complex line through an FFT of length `2(m+1)`.
fn dst1(line: &mut [C64], fft: &dyn Fft<f64>, work: &mut [C64], scratch: &mut [C64]) {
    let m = line.len();
    let n = work.len();
    let zero = C64::new(0.0, 0.0);
    work[0] = zero;
    work[m + 1] = zero;
    for k in 1..=m {
        work[k] = line[k - 1];
        work[n - k] = -line[k - 1];
    }
    fft.process_with_scratch(work, scratch);
    let s = C64::new(0.0, 0.5 * (2.0 / (m + 1) as f64).sqrt());
    for k in 1..=m {
        line[k - 1] = work[k] * s;
    }
}

/// `φ(−Δ_h)` (or `φ` of the continuum symbol) realized by fast transforms.
#[derive(Clone, Debug)]
pub struct SpectralOp {
    basis: SpectralBasis,
    symbol: Vec<f64>,
}

impl SpectralOp {
    pub fn function_of_laplacian<F: Fn(f64) -> f64>(grid: &Arc<Grid>, kind: LaplacianSymbol, phi: F) -> Self {
        let basis = SpectralBasis::new(grid);
        let symbol = basis.laplacian_symbol(kind).into_iter().map(phi).collect();
        Self { basis, symbol }
    }

    pub fn from_symbol(basis: SpectralBasis, symbol: Vec<f64>) -> Self {
        assert_eq!(symbol.len(), basis.grid.len());
        Self { basis, symbol }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.basis.grid
    }

    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    /// Same basis, symbol mapped through `phi`.
    pub fn map<F: Fn(f64) -> f64>(&self, phi: F) -> Self {
        Self { basis: self.basis.clone(), symbol: self.symbol.iter().map(|&l| phi(l)).collect() }
    }

    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        y.copy_from_slice(x);
        self.basis.forward(y);
        y.iter_mut().zip(&self.symbol).for_each(|(v, s)| *v *= s);
        self.basis.inverse(y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::vector::{norm, random_complex};

    #[test]
    fn dst_matches_definition_and_is_involutive() {
        let g = GridSpec::cube(3, 1.0, 6, Boundary::Dirichlet).build().unwrap();
        let b = SpectralBasis::new(&g);
        let x = random_complex(g.len(), 1);
        let mut y = x.clone();
        b.forward(&mut y);
        // direct triple sum at one mode
        let m = 5usize;
        let s = |j: usize, k: usize| (2.0 / 6.0f64).sqrt() * (PI * ((j + 1) * (k + 1)) as f64 / 6.0).sin();
        let (k0, k1, k2) = (1, 3, 4);
        let mut direct = C64::new(0.0, 0.0);
        for j0 in 0..m {
            for j1 in 0..m {
                for j2 in 0..m {
                    direct += x[j0 * 25 + j1 * 5 + j2] * s(j0, k0) * s(j1, k1) * s(j2, k2);
                }
            }
        }
        assert!((y[k0 * 25 + k1 * 5 + k2] - direct).norm() < 1e-12);
        b.inverse(&mut y);
        let diff: Vec<C64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) < 1e-12 * norm(&x));
    }

    #[test]
    fn periodic_round_trip() {
        let g = GridSpec { dim: 3, extent: vec![1.0, 2.0, 1.5], points: vec![4, 6, 5], boundary: Boundary::Periodic, max_nodes: 1000 }
            .build()
            .unwrap();
        let b = SpectralBasis::new(&g);
        let x = random_complex(g.len(), 2);
        let mut y = x.clone();
        b.forward(&mut y);
        b.inverse(&mut y);
        let diff: Vec<C64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) < 1e-12 * norm(&x));
    }
}
