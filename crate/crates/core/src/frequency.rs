//! Smoothed spectral cutoffs `P_K = P(·/K)` and `Q_K = I(·/K) − P(·/K)` of
//! positive operators, realized exactly (transform symbols or dense
//! eigen-decompositions) or by Chebyshev expansions evaluated with matvecs,
//! plus the sandwich decomposition and the cutoff-based positivity tests
//! built on them.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::certify::{certify, certify_compressed, EigOptions, PositivityCertificate};
use crate::commutator::{assemble_commutator, hamiltonian, potential_part, potential_values};
use crate::error::{Error, Result};
use crate::grid::{Boundary, DiscreteOperator, Field, Grid, LaplacianSymbol, PolynomialOp, SpectralOp};
use crate::multiplier::MultiplierSpec;
use crate::potentials::PotentialSpec;
use crate::profile::dist;
use crate::vector::{norm, random_real, C64};

/// Largest grid diagonalized densely by the exact realization.
pub const EXACT_MAX_NODES: usize = 4096;
/// Largest Chebyshev degree tried by the adaptive fit.
pub const MAX_DEGREE: usize = 8192;

fn ramp(t: f64) -> f64 {
    if t > 0.0 {
        (-1.0 / t).exp()
    } else {
        0.0
    }
}

/// C^∞ step: 0 for `t ≤ 0`, 1 for `t ≥ 1`.
pub fn smoothstep(t: f64) -> f64 {
    let (a, b) = (ramp(t), ramp(1.0 - t));
    a / (a + b)
}

/// Base high-pass shape: 0 on `(−∞, 1]`, 1 on `[3, ∞)`, `0 ≤ P′ ≤ 1`.
pub fn base_p(t: f64) -> f64 {
    smoothstep(0.5 * (t - 1.0))
}

/// Base step rising across `[−1, 0]`.
pub fn base_i(t: f64) -> f64 {
    smoothstep(t + 1.0)
}

/// `I − P`: equals `1 − P` on `[0, ∞)`.
pub fn base_q(t: f64) -> f64 {
    base_i(t) - base_p(t)
}

/// Which cutoff to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    /// High-energy part `P_K`.
    P,
    /// Low-energy part `Q_K`.
    Q,
}

impl Part {
    pub fn eval(self, t: f64) -> f64 {
        match self {
            Part::P => base_p(t),
            Part::Q => base_q(t),
        }
    }
}

/// How `φ(A)` is computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Realization {
    /// Transform symbol or full diagonalization (at most [`EXACT_MAX_NODES`]).
    Exact,
    /// Chebyshev expansion over `interval` (or the operator's Gershgorin
    /// enclosure) with sup-error `tol`.
    Chebyshev {
        #[serde(default = "default_cheb_tol")]
        tol: f64,
        #[serde(default)]
        interval: Option<[f64; 2]>,
    },
}

fn default_cheb_tol() -> f64 {
    1e-8
}

/// Scale and realization of a cutoff pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutoffSpec {
    pub scale: f64,
    pub realization: Realization,
}

impl CutoffSpec {
    pub fn exact(scale: f64) -> Self {
        Self { scale, realization: Realization::Exact }
    }

    pub fn chebyshev(scale: f64, tol: f64) -> Self {
        Self { scale, realization: Realization::Chebyshev { tol, interval: None } }
    }

    pub fn with_scale(&self, scale: f64) -> Self {
        Self { scale, ..self.clone() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Invalid(format!("cutoff scale must be positive, got {}", self.scale)));
        }
        if let Realization::Chebyshev { tol, interval } = &self.realization {
            if tol.is_nan() || *tol <= 0.0 {
                return Err(Error::Invalid("Chebyshev tolerance must be positive".into()));
            }
            if let Some([lo, hi]) = interval {
                if hi.is_nan() || lo.is_nan() || hi <= lo {
                    return Err(Error::Invalid("empty spectral interval".into()));
                }
            }
        }
        Ok(())
    }
}

/// Chebyshev coefficients of `f` on `[lo, hi]` by interpolation at the
/// `d + 1` first-kind nodes.
pub fn chebyshev_coefficients<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, d: usize) -> Vec<f64> {
    let m = d + 1;
    let theta: Vec<f64> = (0..m).map(|j| std::f64::consts::PI * (j as f64 + 0.5) / m as f64).collect();
    let vals: Vec<f64> = theta.iter().map(|t| f(lo + 0.5 * (hi - lo) * (t.cos() + 1.0))).collect();
    (0..m)
        .map(|k| {
            let s: f64 = vals.iter().zip(&theta).map(|(v, t)| v * (k as f64 * t).cos()).sum();
            s * 2.0 / m as f64 * if k == 0 { 0.5 } else { 1.0 }
        })
        .collect()
}

/// Value of `Σ c_k T_k` at `λ ∈ [lo, hi]`.
pub fn chebyshev_eval(coeffs: &[f64], lo: f64, hi: f64, lambda: f64) -> f64 {
    let t = (2.0 * lambda - (hi + lo)) / (hi - lo);
    let (mut b1, mut b2) = (0.0, 0.0);
    for c in coeffs.iter().skip(1).rev() {
        let b0 = c + 2.0 * t * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    coeffs.first().copied().unwrap_or(0.0) + t * b1 - b2
}

/// Sup-norm error of a fit, sampled at `samples` uniform points.
pub fn chebyshev_error<F: Fn(f64) -> f64>(f: &F, coeffs: &[f64], lo: f64, hi: f64, samples: usize) -> f64 {
    (0..=samples)
        .map(|i| {
            let l = lo + (hi - lo) * i as f64 / samples as f64;
            (f(l) - chebyshev_eval(coeffs, lo, hi, l)).abs()
        })
        .fold(0.0, f64::max)
}

/// Smallest power-of-two degree whose fit meets `tol`, with negligible
/// trailing coefficients trimmed.
pub fn chebyshev_fit<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> Result<Vec<f64>> {
    let mut d = 16;
    while d <= MAX_DEGREE {
        let mut c = chebyshev_coefficients(&f, lo, hi, d);
        if chebyshev_error(&f, &c, lo, hi, 8 * d) <= 0.5 * tol {
            let mut dropped = 0.0;
            while let Some(last) = c.last() {
                if c.len() > 1 && dropped + last.abs() <= 0.25 * tol {
                    dropped += last.abs();
                    c.pop();
                } else {
                    break;
                }
            }
            return Ok(c);
        }
        d *= 2;
    }
    Err(Error::Solver(format!("Chebyshev fit did not reach {tol:e} below degree {MAX_DEGREE}")))
}

fn interval_of(a: &DiscreteOperator, interval: &Option<[f64; 2]>) -> Result<(f64, f64)> {
    let (lo, hi) = match interval {
        Some([lo, hi]) => (*lo, *hi),
        None => a
            .spectral_enclosure()
            .ok_or_else(|| Error::Invalid("polynomial cutoff needs a spectral interval estimate for this operator".into()))?,
    };
    // a zero-width enclosure (a multiple of the identity) still needs an interval
    Ok(if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) })
}

/// `P_K(A)` or `Q_K(A)` as an operator.
pub fn cutoff_operator(spec: &CutoffSpec, part: Part, a: &DiscreteOperator) -> Result<DiscreteOperator> {
    spec.validate()?;
    let k = spec.scale;
    let phi = move |l: f64| part.eval(l / k);
    match &spec.realization {
        Realization::Exact => {
            if let Some(op) = a.map_spectrum(phi) {
                return Ok(op);
            }
            let basis = a.eigen_basis(EXACT_MAX_NODES)?;
            Ok(DiscreteOperator::eigen_function(a.grid(), &basis, phi))
        }
        Realization::Chebyshev { tol, interval } => {
            let (lo, hi) = interval_of(a, interval)?;
            let coeffs = match part {
                Part::P => chebyshev_fit(phi, lo, hi, *tol)?,
                Part::Q => {
                    // I and P fitted separately so that the pair sums to the
                    // (exactly represented) fit of I
                    let i = chebyshev_fit(|l| base_i(l / k), lo, hi, 0.5 * tol)?;
                    let p = chebyshev_fit(|l| base_p(l / k), lo, hi, 0.5 * tol)?;
                    (0..i.len().max(p.len())).map(|j| i.get(j).unwrap_or(&0.0) - p.get(j).unwrap_or(&0.0)).collect()
                }
            };
            Ok(DiscreteOperator::Polynomial(Arc::new(PolynomialOp { op: a.clone(), lo, hi, coeffs })))
        }
    }
}

/// `P_K(A)ψ` or `Q_K(A)ψ`.
pub fn apply_cutoff(spec: &CutoffSpec, part: Part, a: &DiscreteOperator, psi: &Field) -> Result<Field> {
    cutoff_operator(spec, part, a)?.apply_field(psi)
}

/// `P_K(A)(εA − 2B)P_K(A)` and `Q_K(A)(εA − 2B)Q_K(A)`, whose sum bounds
/// `εA − B` from below.
#[derive(Clone, Debug)]
pub struct SandwichForms {
    pub high: DiscreteOperator,
    pub low: DiscreteOperator,
}

/// Builds the two sandwiched forms after checking that `B` is a diagonal
/// multiplication operator and that the cross term `P(λ)λQ(λ)` is
/// nonnegative on the spectrum samples of `A`.
pub fn sandwich_lower_bound(a: &DiscreteOperator, b: &DiscreteOperator, spec: &CutoffSpec, epsilon: f64) -> Result<SandwichForms> {
    if !matches!(b, DiscreteOperator::Diagonal { .. }) {
        return Err(Error::Invalid("the subtracted operator must be diagonal".into()));
    }
    if **a.grid() != **b.grid() {
        return Err(Error::GridMismatch);
    }
    let p = cutoff_operator(spec, Part::P, a)?;
    let q = cutoff_operator(spec, Part::Q, a)?;
    let samples: Vec<f64> = match (a, &p) {
        (DiscreteOperator::Spectral(s), _) => s.symbol().to_vec(),
        (_, DiscreteOperator::Eigen(e)) => e.basis().values.clone(),
        _ => {
            let (lo, hi) = interval_of(a, &None).unwrap_or((0.0, 3.0 * spec.scale));
            (0..=1000).map(|i| lo + (hi - lo) * i as f64 / 1000.0).collect()
        }
    };
    let k = spec.scale;
    if let Some(l) = samples.iter().find(|&&l| l >= 0.0 && base_p(l / k) * l * base_q(l / k) < 0.0) {
        return Err(Error::Invalid(format!("cross term P(λ)λQ(λ) is negative at λ = {l}")));
    }
    let inner = DiscreteOperator::sum(vec![(epsilon, a.clone()), (-2.0, b.clone())]);
    Ok(SandwichForms { high: DiscreteOperator::sandwich(p, inner.clone()), low: DiscreteOperator::sandwich(q, inner) })
}

/// Power-iteration controls.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 2000, seed: 11 }
    }
}

/// Largest eigenvalue of a positive semidefinite operator by power iteration.
pub fn power_iteration(op: &DiscreteOperator, opts: &PowerOptions) -> Result<f64> {
    let mut x = random_real(op.grid().len(), opts.seed);
    let mut prev = 0.0;
    for _ in 0..opts.max_iter {
        let nx = norm(&x);
        if nx == 0.0 {
            return Ok(0.0);
        }
        x.iter_mut().for_each(|v| *v /= nx);
        let y = op.apply_vec(&x);
        let est = norm(&y);
        if (est - prev).abs() <= opts.tol * est {
            return Ok(est);
        }
        prev = est;
        x = y;
    }
    Err(Error::Solver(format!("power iteration did not reach {:e} in {} steps", opts.tol, opts.max_iter)))
}

/// `‖χ_δ Q_K(−Δ_h) |x|‖` with `χ_δ` the indicator of `[−L, L] × B(δ)`,
/// from the top eigenvalue of `|x|Q χ_δ Q|x|`.
pub fn norm_chi_q_x(delta: f64, spec: &CutoffSpec, grid: &Arc<Grid>, slab_l: f64, opts: &PowerOptions) -> Result<f64> {
    if grid.boundary() != Boundary::Dirichlet {
        return Err(Error::Grid("the tube norm needs a Dirichlet grid".into()));
    }
    if !(delta > 0.0 && slab_l > 0.0) {
        return Err(Error::Invalid("tube radius and slab half-length must be positive".into()));
    }
    let lap = DiscreteOperator::Spectral(Arc::new(SpectralOp::function_of_laplacian(grid, LaplacianSymbol::FiniteDifference, |l| l)));
    let q = cutoff_operator(spec, Part::Q, &lap)?;
    let origin = vec![0.0; grid.dim()];
    let radius = grid.sample(|x| dist(x, &origin));
    let chi = grid.sample(|x| {
        let y = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if x[0].abs() <= slab_l && y <= delta {
            1.0
        } else {
            0.0
        }
    });
    let normal = DiscreteOperator::sandwich(
        DiscreteOperator::diagonal(grid, radius),
        DiscreteOperator::sandwich(q, DiscreteOperator::diagonal(grid, chi)),
    );
    Ok(power_iteration(&normal, opts)?.sqrt())
}

/// `W = (4 − σ/(n−2)²)V − g⁻²·(−2∇F·∇V)`, the bounded function the
/// high-energy cutoff must dominate.
pub fn high_energy_weight(grid: &Arc<Grid>, v: &PotentialSpec, spec: &MultiplierSpec) -> Result<Vec<f64>> {
    let w = spec.profile.lower_bound_weight();
    let vals = potential_values(grid, v, None)?;
    let part = potential_part(grid, v, spec, None)?;
    let c = &spec.centers[0];
    Ok((0..grid.len())
        .map(|i| {
            let r = dist(&grid.point_vec(i), c);
            w * vals[i] - part[i] / spec.profile.g_sq(r)
        })
        .collect())
}

/// Certifies `P_K(H)(i[H, γ] − (4 − σ/(n−2)² − ε)·g H g)P_K(H) ≥ 0` for a
/// single-center multiplier and a nonnegative potential.
pub fn high_energy_certificate(
    grid: &Arc<Grid>,
    v: &PotentialSpec,
    m_spec: &MultiplierSpec,
    epsilon: f64,
    cutoff: &CutoffSpec,
    opts: &EigOptions,
) -> Result<PositivityCertificate> {
    let h = hamiltonian(grid, v, None)?;
    high_energy_certificate_with(grid, v, m_spec, epsilon, &h, cutoff, opts)
}

/// Same as [`high_energy_certificate`], applying the cutoff to `h_repr`, a
/// representation of `H_h` (e.g. its stored eigen-decomposition, so that a
/// scan over `K` diagonalizes once).
pub fn high_energy_certificate_with(
    grid: &Arc<Grid>,
    v: &PotentialSpec,
    m_spec: &MultiplierSpec,
    epsilon: f64,
    h_repr: &DiscreteOperator,
    cutoff: &CutoffSpec,
    opts: &EigOptions,
) -> Result<PositivityCertificate> {
    let p = &m_spec.profile;
    let n = p.dim() as f64;
    let sigma = p.sigma();
    if !(sigma > 0.5 && sigma < 4.0 * (n - 2.0).powi(2)) {
        return Err(Error::Domain(format!("σ = {sigma} outside (1/2, 4(n−2)²)")));
    }
    let w = p.lower_bound_weight();
    if !(epsilon > 0.0 && epsilon < w) {
        return Err(Error::Domain(format!("ε = {epsilon} outside (0, {w})")));
    }
    if m_spec.centers.len() != 1 {
        return Err(Error::Multiplier("the high-energy certificate takes a single-center multiplier".into()));
    }
    if potential_values(grid, v, None)?.iter().any(|x| *x < 0.0) {
        return Err(Error::Potential("the high-energy certificate needs V ≥ 0".into()));
    }
    if **h_repr.grid() != **grid {
        return Err(Error::GridMismatch);
    }
    let h = hamiltonian(grid, v, None)?;
    let comm = assemble_commutator(grid, v, m_spec, None)?;
    let c = &m_spec.centers[0];
    let g = grid.sample(|x| p.g(dist(x, c)));
    let weighted = DiscreteOperator::sandwich(DiscreteOperator::diagonal(grid, g), h);
    let inner = DiscreteOperator::sum(vec![(1.0, comm.total), (-(w - epsilon), weighted)]);
    let params = serde_json::json!({ "K": cutoff.scale, "epsilon": epsilon, "sigma": sigma });
    if let (DiscreteOperator::Eigen(e), Realization::Exact) = (h_repr, &cutoff.realization) {
        // stored eigenpairs of H: certify on the range of P_K(H) directly
        let basis = e.basis();
        let weights: Vec<f64> = basis.values.iter().map(|l| base_p(l / cutoff.scale)).collect();
        return certify_compressed(&inner, basis, &weights, "high_energy", params, opts);
    }
    let pk = cutoff_operator(cutoff, Part::P, h_repr)?;
    let form = DiscreteOperator::sandwich(pk, inner);
    certify(&form, "high_energy", params, opts)
}

/// `‖(P_K(A) + Q_K(A))ψ − ψ‖ / ‖ψ‖`.
pub fn partition_defect(spec: &CutoffSpec, a: &DiscreteOperator, psi: &[C64]) -> Result<f64> {
    let p = cutoff_operator(spec, Part::P, a)?.apply_vec(psi);
    let q = cutoff_operator(spec, Part::Q, a)?.apply_vec(psi);
    let diff: Vec<C64> = p.iter().zip(&q).zip(psi).map(|((a, b), c)| a + b - c).collect();
    Ok(norm(&diff) / norm(psi))
}
