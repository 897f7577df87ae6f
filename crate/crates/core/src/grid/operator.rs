//! Self-adjoint operators on grid fields.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use super::spectral::{LaplacianSymbol, SpectralOp};
use super::{Boundary, Field, Grid};
use crate::error::{Error, Result};
use crate::vector::C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const CHUNK: usize = 4096;

/// `(Aψ)(x) = d(x)ψ(x) − Σ_j [e_j(x)ψ(x+e_j) + e_j(x−e_j)ψ(x−e_j)]`, the
/// symmetric nearest-neighbor stencil with per-edge weights `e_j` stored at
/// the lower endpoint of each edge.
#[derive(Clone, Debug)]
pub struct StencilOp {
    grid: Arc<Grid>,
    diag: Vec<f64>,
    edges: Vec<Vec<f64>>,
}

impl StencilOp {
    pub fn new(grid: &Arc<Grid>, diag: Vec<f64>, edges: Vec<Vec<f64>>) -> Result<Self> {
        if diag.len() != grid.len() || edges.len() != grid.dim() || edges.iter().any(|e| e.len() != grid.len()) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid: grid.clone(), diag, edges })
    }

    /// `−Δ_h`, the 2n+1 point stencil.
    pub fn laplacian(grid: &Arc<Grid>) -> Self {
        let h = grid.spacing();
        let d: f64 = h.iter().map(|h| 2.0 / (h * h)).sum();
        let edges = h.iter().map(|h| vec![1.0 / (h * h); grid.len()]).collect();
        Self { grid: grid.clone(), diag: vec![d; grid.len()], edges }
    }

    /// `Σ_k w_k · u_k (−Δ_h) u_k` for real node weights `u_k`, merged into a
    /// single stencil.
    pub fn weighted_laplacian(grid: &Arc<Grid>, terms: &[(f64, &[f64])]) -> Self {
        let h = grid.spacing();
        let n = grid.dim();
        let len = grid.len();
        let d2: f64 = h.iter().map(|h| 2.0 / (h * h)).sum();
        let mut diag = vec![0.0; len];
        let mut edges = vec![vec![0.0; len]; n];
        for &(w, u) in terms {
            diag.par_iter_mut().zip(u).for_each(|(d, ui)| *d += w * d2 * ui * ui);
            for (j, e) in edges.iter_mut().enumerate() {
                let inv = 1.0 / (h[j] * h[j]);
                e.par_iter_mut().enumerate().for_each(|(idx, ej)| {
                    if let Some(p) = grid.neighbor(idx, j, true) {
                        *ej += w * inv * u[idx] * u[p];
                    }
                });
            }
        }
        Self { grid: grid.clone(), diag, edges }
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn edges(&self) -> &[Vec<f64>] {
        &self.edges
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let g = &self.grid;
        let n = g.dim();
        y.par_chunks_mut(CHUNK).enumerate().for_each(|(c, ys)| {
            let base = c * CHUNK;
            for (k, yi) in ys.iter_mut().enumerate() {
                let idx = base + k;
                let mut acc = x[idx] * self.diag[idx];
                for j in 0..n {
                    if let Some(p) = g.neighbor(idx, j, true) {
                        acc -= x[p] * self.edges[j][idx];
                    }
                    if let Some(m) = g.neighbor(idx, j, false) {
                        acc -= x[m] * self.edges[j][m];
                    }
                }
                *yi = acc;
            }
        });
    }

    fn gershgorin(&self) -> (f64, f64) {
        let g = &self.grid;
        (0..g.len())
            .into_par_iter()
            .map(|idx| {
                let mut r = 0.0;
                for j in 0..g.dim() {
                    if g.neighbor(idx, j, true).is_some() {
                        r += self.edges[j][idx].abs();
                    }
                    if let Some(m) = g.neighbor(idx, j, false) {
                        r += self.edges[j][m].abs();
                    }
                }
                (self.diag[idx] - r, self.diag[idx] + r)
            })
            .reduce(|| (f64::INFINITY, f64::NEG_INFINITY), |a, b| (a.0.min(b.0), a.1.max(b.1)))
    }
}

/// `½ Σ_± (G^±)ᵀ M^±(x) G^±`: a divergence-form second-order operator with
/// symmetric matrix coefficients, where `G^±` are the forward and backward
/// difference gradients (values outside a Dirichlet box are zero). With
/// `M^± ≡ I` it equals `−Δ_h` away from the boundary and is positive
/// semidefinite whenever every `M^±(x)` is.
#[derive(Clone, Debug)]
pub struct TensorOp {
    grid: Arc<Grid>,
    /// Packed upper triangles, `n(n+1)/2` entries per node.
    plus: Vec<f64>,
    minus: Vec<f64>,
}

#[inline]
fn packed(n: usize, j: usize, k: usize) -> usize {
    let (j, k) = if j <= k { (j, k) } else { (k, j) };
    j * n - j * (j + 1) / 2 + k
}

impl TensorOp {
    /// Builds the operator from coefficient callbacks: `coeff(sign, idx, out)`
    /// fills the packed matrix for node `idx`, `sign = +1` or `−1`.
    pub fn from_fn<F>(grid: &Arc<Grid>, coeff: F) -> Self
    where
        F: Fn(i32, usize, &mut [f64]) + Sync,
    {
        let n = grid.dim();
        let m = n * (n + 1) / 2;
        let fill = |sign: i32| {
            let mut v = vec![0.0; grid.len() * m];
            v.par_chunks_mut(m).enumerate().for_each(|(idx, out)| coeff(sign, idx, out));
            v
        };
        Self { grid: grid.clone(), plus: fill(1), minus: fill(-1) }
    }

    pub fn packed_len(n: usize) -> usize {
        n * (n + 1) / 2
    }

    pub fn packed_index(n: usize, j: usize, k: usize) -> usize {
        packed(n, j, k)
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let g = &self.grid;
        let n = g.dim();
        let m = n * (n + 1) / 2;
        let h = g.spacing();
        let mut v = vec![ZERO; g.len() * n];
        y.iter_mut().for_each(|v| *v = ZERO);
        for forward in [true, false] {
            let coeffs = if forward { &self.plus } else { &self.minus };
            v.par_chunks_mut(n).enumerate().for_each(|(idx, vi)| {
                let mut u = [ZERO; 8];
                for j in 0..n {
                    let other = g.neighbor(idx, j, forward).map_or(ZERO, |p| x[p]);
                    u[j] = if forward { other - x[idx] } else { x[idx] - other } / h[j];
                }
                let mm = &coeffs[idx * m..(idx + 1) * m];
                for j in 0..n {
                    let mut acc = ZERO;
                    for k in 0..n {
                        acc += u[k] * mm[packed(n, j, k)];
                    }
                    vi[j] = acc * 0.5;
                }
            });
            y.par_chunks_mut(CHUNK).enumerate().for_each(|(c, ys)| {
                let base = c * CHUNK;
                for (kk, yi) in ys.iter_mut().enumerate() {
                    let z = base + kk;
                    let mut acc = ZERO;
                    for j in 0..n {
                        // adjoint of the forward difference: v_j(z−e_j) − v_j(z);
                        // of the backward difference: v_j(z) − v_j(z+e_j).
                        let other = g.neighbor(z, j, !forward).map_or(ZERO, |p| v[p * n + j]);
                        acc += if forward { other - v[z * n + j] } else { v[z * n + j] - other } / h[j];
                    }
                    *yi += acc;
                }
            });
        }
    }

    fn diagonal(&self) -> Vec<f64> {
        let g = &self.grid;
        let n = g.dim();
        let m = n * (n + 1) / 2;
        let h = g.spacing();
        (0..g.len())
            .into_par_iter()
            .map(|z| {
                let mut d = 0.0;
                for (forward, coeffs) in [(true, &self.plus), (false, &self.minus)] {
                    let mm = &coeffs[z * m..(z + 1) * m];
                    for j in 0..n {
                        for k in 0..n {
                            d += mm[packed(n, j, k)] / (h[j] * h[k]);
                        }
                        if let Some(p) = g.neighbor(z, j, !forward) {
                            d += coeffs[p * m + packed(n, j, j)] / (h[j] * h[j]);
                        }
                    }
                }
                0.5 * d
            })
            .collect()
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.grid.dim();
        let m = n * (n + 1) / 2;
        let lap: f64 = self.grid.spacing().iter().map(|h| 4.0 / (h * h)).sum();
        let row_bound = |mm: &[f64]| (0..n).map(|j| (0..n).map(|k| mm[packed(n, j, k)].abs()).sum::<f64>()).fold(0.0, f64::max);
        let max = self.plus.par_chunks(m).chain(self.minus.par_chunks(m)).map(row_bound).reduce(|| 0.0, f64::max);
        (-max * lap, max * lap)
    }
}

/// `−i Σ_j (a_j D⁰_j + D⁰_j a_j)` with centered differences `D⁰_j` and real
/// node coefficients `a_j`: a first-order Hermitian operator with purely
/// imaginary matrix entries.
#[derive(Clone, Debug)]
pub struct FirstOrderOp {
    grid: Arc<Grid>,
    /// `coeff[idx * n + j] = a_j(x_idx)`
    coeff: Vec<f64>,
}

impl FirstOrderOp {
    pub fn new(grid: &Arc<Grid>, coeff: Vec<f64>) -> Result<Self> {
        if coeff.len() != grid.len() * grid.dim() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid: grid.clone(), coeff })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coeff
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let g = &self.grid;
        let n = g.dim();
        let h = g.spacing();
        let a = &self.coeff;
        let minus_i = C64::new(0.0, -1.0);
        y.par_chunks_mut(CHUNK).enumerate().for_each(|(c, ys)| {
            let base = c * CHUNK;
            for (k, yi) in ys.iter_mut().enumerate() {
                let idx = base + k;
                let mut acc = ZERO;
                for j in 0..n {
                    let aj = a[idx * n + j];
                    let mut t = ZERO;
                    if let Some(p) = g.neighbor(idx, j, true) {
                        t += x[p] * (aj + a[p * n + j]);
                    }
                    if let Some(m) = g.neighbor(idx, j, false) {
                        t -= x[m] * (aj + a[m * n + j]);
                    }
                    acc += t / (2.0 * h[j]);
                }
                *yi = minus_i * acc;
            }
        });
    }
}

/// Eigen-decomposition of a small real symmetric operator.
#[derive(Debug)]
pub struct EigenBasis {
    pub vectors: DMatrix<f64>,
    pub values: Vec<f64>,
}

/// `U φ(Λ) Uᵀ` for a stored eigen-decomposition.
#[derive(Clone, Debug)]
pub struct EigenOp {
    grid: Arc<Grid>,
    basis: Arc<EigenBasis>,
    mapped: Vec<f64>,
}

impl EigenOp {
    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let u = &self.basis.vectors;
        let re = DVector::from_iterator(x.len(), x.iter().map(|v| v.re));
        let im = DVector::from_iterator(x.len(), x.iter().map(|v| v.im));
        let mut cr = u.tr_mul(&re);
        let mut ci = u.tr_mul(&im);
        for (k, s) in self.mapped.iter().enumerate() {
            cr[k] *= s;
            ci[k] *= s;
        }
        let yr = u * cr;
        let yi = u * ci;
        for (k, v) in y.iter_mut().enumerate() {
            *v = C64::new(yr[k], yi[k]);
        }
    }
}

/// `Σ_k c_k T_k(Â)` with `Â = (2A − (hi + lo))/(hi − lo)`.
#[derive(Clone, Debug)]
pub struct PolynomialOp {
    pub op: DiscreteOperator,
    pub lo: f64,
    pub hi: f64,
    pub coeffs: Vec<f64>,
}

impl PolynomialOp {
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let len = x.len();
        let d = self.coeffs.len();
        let alpha = 2.0 / (self.hi - self.lo);
        let beta = -(self.hi + self.lo) / (self.hi - self.lo);
        let mut b1 = vec![ZERO; len];
        let mut b2 = vec![ZERO; len];
        let mut t = vec![ZERO; len];
        // Clenshaw: b_k = c_k x + 2Â b_{k+1} − b_{k+2}
        for k in (1..d).rev() {
            self.op.apply(&b1, &mut t);
            let ck = self.coeffs[k];
            t.par_iter_mut()
                .zip(&b1)
                .zip(&b2)
                .zip(x)
                .for_each(|(((ti, b1i), b2i), xi)| *ti = xi * ck + (*ti * alpha + b1i * beta) * 2.0 - b2i);
            std::mem::swap(&mut b2, &mut b1);
            std::mem::swap(&mut b1, &mut t);
        }
        self.op.apply(&b1, &mut t);
        let c0 = self.coeffs.first().copied().unwrap_or(0.0);
        y.par_iter_mut()
            .zip(&t)
            .zip(&b1)
            .zip(&b2)
            .zip(x)
            .for_each(|((((yi, ti), b1i), b2i), xi)| *yi = xi * c0 + ti * alpha + b1i * beta - b2i);
    }
}

/// A symmetric (real) or Hermitian operator on the fields of one grid.
#[derive(Clone)]
pub enum DiscreteOperator {
    Diagonal {
        grid: Arc<Grid>,
        values: Arc<Vec<f64>>,
    },
    Stencil(Arc<StencilOp>),
    Tensor(Arc<TensorOp>),
    FirstOrder(Arc<FirstOrderOp>),
    Spectral(Arc<SpectralOp>),
    Eigen(Arc<EigenOp>),
    Polynomial(Arc<PolynomialOp>),
    /// `O·I·O` for a symmetric outer factor `O`.
    Sandwich {
        outer: Box<DiscreteOperator>,
        inner: Box<DiscreteOperator>,
    },
    Sum(Vec<(f64, DiscreteOperator)>),
    /// `i(AB − BA)` for Hermitian `A`, `B`.
    Commutator {
        a: Box<DiscreteOperator>,
        b: Box<DiscreteOperator>,
    },
}

impl fmt::Debug for DiscreteOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Diagonal { .. } => write!(f, "Diagonal"),
            Self::Stencil(_) => write!(f, "Stencil"),
            Self::Tensor(_) => write!(f, "Tensor"),
            Self::FirstOrder(_) => write!(f, "FirstOrder"),
            Self::Spectral(_) => write!(f, "Spectral"),
            Self::Eigen(_) => write!(f, "Eigen"),
            Self::Polynomial(p) => write!(f, "Polynomial(deg {}, {:?})", p.coeffs.len().saturating_sub(1), p.op),
            Self::Sandwich { outer, inner } => write!(f, "Sandwich({outer:?}, {inner:?})"),
            Self::Sum(terms) => f.debug_list().entries(terms.iter()).finish(),
            Self::Commutator { a, b } => write!(f, "i[{a:?}, {b:?}]"),
        }
    }
}

impl DiscreteOperator {
    /// `−Δ_h`: the 2n+1 point stencil, with wraparound on periodic grids.
    pub fn laplacian(grid: &Arc<Grid>) -> Self {
        Self::Stencil(Arc::new(StencilOp::laplacian(grid)))
    }

    /// `−Δ` through its continuum Fourier symbol (periodic grids) or exact
    /// box eigenvalues (Dirichlet grids).
    pub fn spectral_laplacian(grid: &Arc<Grid>) -> Self {
        Self::Spectral(Arc::new(SpectralOp::function_of_laplacian(grid, LaplacianSymbol::Exact, |l| l)))
    }

    pub fn diagonal(grid: &Arc<Grid>, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), grid.len());
        Self::Diagonal { grid: grid.clone(), values: Arc::new(values) }
    }

    pub fn scaled(self, c: f64) -> Self {
        Self::Sum(vec![(c, self)])
    }

    pub fn sum(terms: Vec<(f64, DiscreteOperator)>) -> Self {
        Self::Sum(terms)
    }

    /// `self − other`.
    pub fn minus(self, other: DiscreteOperator) -> Self {
        Self::Sum(vec![(1.0, self), (-1.0, other)])
    }

    pub fn plus(self, other: DiscreteOperator) -> Self {
        Self::Sum(vec![(1.0, self), (1.0, other)])
    }

    pub fn sandwich(outer: DiscreteOperator, inner: DiscreteOperator) -> Self {
        Self::Sandwich { outer: Box::new(outer), inner: Box::new(inner) }
    }

    /// `i[a, b] = i(ab − ba)`.
    pub fn commutator(a: DiscreteOperator, b: DiscreteOperator) -> Self {
        Self::Commutator { a: Box::new(a), b: Box::new(b) }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        match self {
            Self::Diagonal { grid, .. } => grid,
            Self::Stencil(s) => &s.grid,
            Self::Tensor(t) => &t.grid,
            Self::FirstOrder(t) => &t.grid,
            Self::Spectral(s) => s.grid(),
            Self::Eigen(e) => &e.grid,
            Self::Polynomial(p) => p.op.grid(),
            Self::Sandwich { outer, .. } => outer.grid(),
            Self::Sum(terms) => terms.first().expect("empty operator sum").1.grid(),
            Self::Commutator { a, .. } => a.grid(),
        }
    }

    /// True when the matrix entries are real.
    pub fn is_real(&self) -> bool {
        match self {
            Self::FirstOrder(_) => false,
            Self::Polynomial(p) => p.op.is_real(),
            Self::Sandwich { outer, inner } => outer.is_real() && inner.is_real(),
            Self::Sum(terms) => terms.iter().all(|(_, t)| t.is_real()),
            Self::Commutator { a, b } => a.is_real() != b.is_real(),
            _ => true,
        }
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), y.len());
        match self {
            Self::Diagonal { values, .. } => y.par_iter_mut().zip(x).zip(values.par_iter()).for_each(|((yi, xi), d)| *yi = xi * d),
            Self::Stencil(s) => s.apply(x, y),
            Self::Tensor(t) => t.apply(x, y),
            Self::FirstOrder(t) => t.apply(x, y),
            Self::Spectral(s) => s.apply(x, y),
            Self::Eigen(e) => e.apply(x, y),
            Self::Polynomial(p) => p.apply(x, y),
            Self::Sandwich { outer, inner } => {
                let mut t = vec![ZERO; x.len()];
                outer.apply(x, &mut t);
                inner.apply(&t, y);
                outer.apply(y, &mut t);
                y.copy_from_slice(&t);
            }
            Self::Sum(terms) => {
                let mut t = vec![ZERO; x.len()];
                for (k, (c, op)) in terms.iter().enumerate() {
                    if k == 0 {
                        op.apply(x, y);
                        if *c != 1.0 {
                            y.par_iter_mut().for_each(|v| *v *= c);
                        }
                    } else {
                        op.apply(x, &mut t);
                        y.par_iter_mut().zip(&t).for_each(|(yi, ti)| *yi += ti * c);
                    }
                }
            }
            Self::Commutator { a, b } => {
                let mut t = vec![ZERO; x.len()];
                let mut u = vec![ZERO; x.len()];
                b.apply(x, &mut t);
                a.apply(&t, y);
                a.apply(x, &mut t);
                b.apply(&t, &mut u);
                let i = C64::new(0.0, 1.0);
                y.par_iter_mut().zip(&u).for_each(|(yi, ui)| *yi = i * (*yi - ui));
            }
        }
    }

    pub fn apply_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; x.len()];
        self.apply(x, &mut y);
        y
    }

    pub fn apply_field(&self, psi: &Field) -> Result<Field> {
        if **psi.grid() != **self.grid() {
            return Err(Error::GridMismatch);
        }
        Field::from_vec(psi.grid(), self.apply_vec(psi.data()))
    }

    /// Exact diagonal, when cheaply available.
    pub fn diagonal_entries(&self) -> Option<Vec<f64>> {
        match self {
            Self::Diagonal { values, .. } => Some(values.to_vec()),
            Self::Stencil(s) => Some(s.diag.clone()),
            Self::Tensor(t) => Some(t.diagonal()),
            Self::FirstOrder(t) => Some(vec![0.0; t.grid.len()]),
            Self::Eigen(e) => {
                let u = &e.basis.vectors;
                Some((0..u.nrows()).map(|i| (0..u.ncols()).map(|k| u[(i, k)] * u[(i, k)] * e.mapped[k]).sum()).collect())
            }
            Self::Sandwich { outer, inner } => match outer.as_ref() {
                Self::Diagonal { values, .. } => {
                    let d = inner.diagonal_entries()?;
                    Some(d.iter().zip(values.iter()).map(|(a, o)| a * o * o).collect())
                }
                _ => None,
            },
            Self::Sum(terms) => {
                let mut acc = vec![0.0; self.grid().len()];
                for (c, t) in terms {
                    let d = t.diagonal_entries()?;
                    acc.iter_mut().zip(d).for_each(|(a, v)| *a += c * v);
                }
                Some(acc)
            }
            Self::Spectral(_) | Self::Polynomial(_) | Self::Commutator { .. } => None,
        }
    }

    /// Largest diagonal magnitude, used as the scale of certification floors.
    pub fn max_abs_diagonal(&self) -> Option<f64> {
        self.diagonal_entries().map(|d| d.iter().fold(0.0, |m, v| f64::max(m, v.abs())))
    }

    /// Interval containing the spectrum, from Gershgorin-type bounds.
    pub fn spectral_enclosure(&self) -> Option<(f64, f64)> {
        match self {
            Self::Diagonal { values, .. } => {
                Some(values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v))))
            }
            Self::Stencil(s) => Some(s.gershgorin()),
            Self::Tensor(t) => Some(t.gershgorin()),
            Self::Spectral(s) => Some(s.symbol().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))),
            Self::Eigen(e) => Some(e.mapped.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))),
            Self::Sum(terms) => {
                let mut lo = 0.0;
                let mut hi = 0.0;
                for (c, t) in terms {
                    let (a, b) = t.spectral_enclosure()?;
                    let (a, b) = if *c >= 0.0 { (c * a, c * b) } else { (c * b, c * a) };
                    lo += a;
                    hi += b;
                }
                Some((lo, hi))
            }
            _ => None,
        }
    }

    /// Reach of the stencil in each axis, if the operator is local.
    pub fn stencil_radius(&self) -> Option<usize> {
        match self {
            Self::Diagonal { .. } => Some(0),
            Self::Stencil(_) | Self::Tensor(_) | Self::FirstOrder(_) => Some(1),
            Self::Sandwich { outer, inner } => match outer.as_ref() {
                Self::Diagonal { .. } => inner.stencil_radius(),
                _ => None,
            },
            Self::Sum(terms) => terms.iter().map(|(_, t)| t.stencil_radius()).try_fold(0, |m, r| r.map(|r| m.max(r))),
            Self::Commutator { a, b } => Some(a.stencil_radius()? + b.stencil_radius()?),
            _ => None,
        }
    }

    /// Dense matrix of a real operator (small grids only).
    pub fn to_dense(&self, max_len: usize) -> Result<DMatrix<f64>> {
        let len = self.grid().len();
        if len > max_len {
            return Err(Error::Unsupported(format!("dense assembly of {len} unknowns exceeds the limit {max_len}")));
        }
        if !self.is_real() {
            return Err(Error::Unsupported("dense assembly needs a real operator".into()));
        }
        let mut m = DMatrix::zeros(len, len);
        let mut e = vec![ZERO; len];
        let mut col = vec![ZERO; len];
        for j in 0..len {
            e[j] = C64::new(1.0, 0.0);
            self.apply(&e, &mut col);
            e[j] = ZERO;
            for i in 0..len {
                m[(i, j)] = col[i].re;
            }
        }
        // remove roundoff asymmetry
        let mt = m.transpose();
        Ok((m + mt) * 0.5)
    }

    /// Full eigen-decomposition of a small real operator.
    pub fn eigen_basis(&self, max_len: usize) -> Result<Arc<EigenBasis>> {
        let m = self.to_dense(max_len)?;
        let eig = SymmetricEigen::new(m);
        Ok(Arc::new(EigenBasis { vectors: eig.eigenvectors, values: eig.eigenvalues.iter().copied().collect() }))
    }

    /// `φ(A)` for an operator given by its eigen-decomposition.
    pub fn eigen_function<F: Fn(f64) -> f64>(grid: &Arc<Grid>, basis: &Arc<EigenBasis>, phi: F) -> Self {
        let mapped = basis.values.iter().map(|&l| phi(l)).collect();
        Self::Eigen(Arc::new(EigenOp { grid: grid.clone(), basis: basis.clone(), mapped }))
    }

    /// `φ(self)` for operators held in diagonalized form (transform symbols
    /// or stored eigen-decompositions).
    pub fn map_spectrum<F: Fn(f64) -> f64>(&self, phi: F) -> Option<Self> {
        match self {
            Self::Spectral(s) => Some(Self::Spectral(Arc::new(s.map(phi)))),
            Self::Eigen(e) => {
                let mapped = e.mapped.iter().map(|&l| phi(l)).collect();
                Some(Self::Eigen(Arc::new(EigenOp { grid: e.grid.clone(), basis: e.basis.clone(), mapped })))
            }
            _ => None,
        }
    }

    /// Writes the nonzero entries as `row col value` lines (0-based), for
    /// local real operators. Entries are recovered by probing with
    /// color classes of nodes whose stencils do not overlap.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<usize> {
        let radius = self.stencil_radius().ok_or_else(|| Error::Unsupported("triplet export needs a local operator".into()))?;
        if !self.is_real() {
            return Err(Error::Unsupported("triplet export needs a real operator".into()));
        }
        let g = self.grid().clone();
        let n = g.dim();
        let period = 2 * radius + 1;
        let colors: Vec<usize> =
            g.shape().iter().map(|&m| if g.boundary() == Boundary::Periodic && m % period != 0 { m } else { period.min(m) }).collect();
        let total: usize = colors.iter().product();
        let mut mi = vec![0usize; n];
        let mut count = 0;
        let mut probe = vec![ZERO; g.len()];
        let mut out = vec![ZERO; g.len()];
        let mut lines = Vec::new();
        for color in 0..total {
            let mut cm = vec![0usize; n];
            let mut rem = color;
            for j in (0..n).rev() {
                cm[j] = rem % colors[j];
                rem /= colors[j];
            }
            for (idx, p) in probe.iter_mut().enumerate() {
                g.multi_index(idx, &mut mi);
                let on = mi.iter().zip(&cm).zip(&colors).all(|((i, c), k)| i % k == *c);
                *p = if on { C64::new(1.0, 0.0) } else { ZERO };
            }
            self.apply(&probe, &mut out);
            for (row, v) in out.iter().enumerate() {
                if v.re == 0.0 {
                    continue;
                }
                // locate the probed column within reach of this row
                g.multi_index(row, &mut mi);
                let mut col = 0;
                let mut found = true;
                for j in 0..n {
                    let m = g.shape()[j] as i64;
                    let mut hit = None;
                    for d in -(radius as i64)..=(radius as i64) {
                        let mut i = mi[j] as i64 + d;
                        if g.boundary() == Boundary::Periodic {
                            i = i.rem_euclid(m);
                        }
                        if i >= 0 && i < m && (i as usize) % colors[j] == cm[j] {
                            hit = Some(i as usize);
                            break;
                        }
                    }
                    match hit {
                        Some(i) => col += i * g.strides()[j],
                        None => {
                            found = false;
                            break;
                        }
                    }
                }
                if found {
                    lines.push((row, col, v.re));
                }
            }
        }
        lines.sort_by_key(|a| (a.0, a.1));
        for (r, c, v) in lines {
            writeln!(w, "{r} {c} {v:.17e}")?;
            count += 1;
        }
        Ok(count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::vector::{dot, norm, random_complex};

    fn herm_defect(op: &DiscreteOperator, seed: u64) -> f64 {
        let n = op.grid().len();
        let a = random_complex(n, seed);
        let b = random_complex(n, seed + 1);
        let lhs = dot(&a, &op.apply_vec(&b));
        let rhs = dot(&op.apply_vec(&a), &b);
        (lhs - rhs).norm() / (norm(&a) * norm(&b))
    }

    fn small(boundary: Boundary) -> Arc<Grid> {
        GridSpec::cube(3, 2.0, 6, boundary).build().unwrap()
    }

    #[test]
    fn tensor_with_identity_is_laplacian_in_the_interior() {
        let g = small(Boundary::Periodic);
        let t = DiscreteOperator::Tensor(Arc::new(TensorOp::from_fn(&g, |_, _, out| {
            out.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..3 {
                out[packed(3, j, j)] = 1.0;
            }
        })));
        let l = DiscreteOperator::laplacian(&g);
        let x = random_complex(g.len(), 3);
        let d: Vec<C64> = t.apply_vec(&x).iter().zip(l.apply_vec(&x)).map(|(a, b)| a - b).collect();
        assert!(norm(&d) < 1e-12 * norm(&x));
        let diag = t.diagonal_entries().unwrap();
        assert!(diag.iter().all(|v| (v - 6.0 / (4.0 / 9.0)).abs() < 1e-12));
    }

    #[test]
    fn operators_are_self_adjoint() {
        for b in [Boundary::Dirichlet, Boundary::Periodic] {
            let g = small(b);
            let u: Vec<f64> = g.sample(|p| (-p[0] * p[0]).exp() + 0.1 * p[1]);
            let tensor = DiscreteOperator::Tensor(Arc::new(TensorOp::from_fn(&g, |s, idx, out| {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = ((idx * 7 + k * 3) % 5) as f64 * 0.1 + if s > 0 { 0.05 } else { 0.0 };
                }
            })));
            let first = DiscreteOperator::FirstOrder(Arc::new(
                FirstOrderOp::new(&g, (0..g.len() * 3).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap(),
            ));
            let stencil = DiscreteOperator::Stencil(Arc::new(StencilOp::weighted_laplacian(&g, &[(2.0, &u)])));
            let sum = DiscreteOperator::sum(vec![(0.5, stencil.clone()), (-1.5, DiscreteOperator::diagonal(&g, u.clone()))]);
            let sand = DiscreteOperator::sandwich(DiscreteOperator::diagonal(&g, u.clone()), tensor.clone());
            for op in [tensor, first, stencil, sum, sand, DiscreteOperator::spectral_laplacian(&g)] {
                assert!(herm_defect(&op, 11) < 1e-12, "{op:?} {b:?}");
            }
        }
    }

    #[test]
    fn diagonal_entries_match_probing() {
        let g = small(Boundary::Dirichlet);
        let tensor = DiscreteOperator::Tensor(Arc::new(TensorOp::from_fn(&g, |s, idx, out| {
            for (k, o) in out.iter_mut().enumerate() {
                *o = ((idx * 3 + k) % 7) as f64 * 0.2 - if s > 0 { 0.3 } else { 0.1 };
            }
        })));
        let dense = tensor.to_dense(1000).unwrap();
        let d = tensor.diagonal_entries().unwrap();
        for i in 0..g.len() {
            assert!((dense[(i, i)] - d[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn triplets_reproduce_the_dense_matrix() {
        for b in [Boundary::Dirichlet, Boundary::Periodic] {
            let g = GridSpec::cube(3, 2.0, 5, b).build().unwrap();
            let tensor = DiscreteOperator::Tensor(Arc::new(TensorOp::from_fn(&g, |_, idx, out| {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = 1.0 + ((idx + k) % 3) as f64;
                }
            })));
            let op = tensor.plus(DiscreteOperator::laplacian(&g));
            let mut buf = Vec::new();
            op.write_triplets(&mut buf).unwrap();
            let dense = op.to_dense(1000).unwrap();
            let mut rebuilt = DMatrix::<f64>::zeros(g.len(), g.len());
            for line in String::from_utf8(buf).unwrap().lines() {
                let p: Vec<&str> = line.split_whitespace().collect();
                rebuilt[(p[0].parse::<usize>().unwrap(), p[1].parse::<usize>().unwrap())] = p[2].parse().unwrap();
            }
            assert!((dense - rebuilt).amax() < 1e-12, "{b:?}");
        }
    }

    #[test]
    fn chebyshev_of_diagonal() {
        let g = small(Boundary::Dirichlet);
        let vals: Vec<f64> = (0..g.len()).map(|i| (i % 10) as f64).collect();
        let d = DiscreteOperator::diagonal(&g, vals.clone());
        // T_0 + 0.5 T_1 + 0.25 T_2 on [0, 9]
        let p = DiscreteOperator::Polynomial(Arc::new(PolynomialOp { op: d, lo: 0.0, hi: 9.0, coeffs: vec![1.0, 0.5, 0.25] }));
        let x = random_complex(g.len(), 5);
        let y = p.apply_vec(&x);
        for i in 0..g.len() {
            let t = 2.0 * vals[i] / 9.0 - 1.0;
            let expect = 1.0 + 0.5 * t + 0.25 * (2.0 * t * t - 1.0);
            assert!((y[i] - x[i] * expect).norm() < 1e-12);
        }
    }
}
