//! Commutator forms `i[H, γ]` of `H = −Δ + V` with a multiplier, split into
//! the kinetic part `−4∂_j(∂_j∂_k F)∂_k − Δ²F` and the multiplication
//! operator `−2∇F·∇V`, plus the comparison forms they are certified against.
//!
//! The kinetic part is assembled from the analytic weight derivatives as
//!
//! ```text
//! 4g(−Δ_h)g + (4gΔg − Δ²F) + 4(−∂·B∂),   B = (f/ρ − g²)(I − x̂x̂) ⪰ 0,
//! ```
//!
//! using `∂_j∂_k F = g²δ_jk + B_jk`; each piece is discretized so that it is
//! symmetric, and the first and last are positive semidefinite.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{DiscreteOperator, Grid, StencilOp, TensorOp};
use crate::multiplier::{MultiplierSpec, MultiplierVariant};
use crate::potentials::{PotentialSpec, MAX_DIM};
use crate::profile::dist;

/// `i[V, γ](x) = −2 Σ_k λ_k ∇F_{c_k}(x)·∇V(x)`.
pub fn potential_symbol(v: &PotentialSpec, spec: &MultiplierSpec, x: &[f64], t: Option<f64>) -> Result<f64> {
    let gv = v.gradient(x, t)?;
    let mut gf = vec![0.0; x.len()];
    spec.field(x, &mut gf);
    Ok(-2.0 * gf.iter().zip(&gv).map(|(a, b)| a * b).sum::<f64>())
}

/// Same as [`potential_symbol`] without argument checks; `t` is ignored by
/// static potentials.
pub(crate) fn symbol_at(v: &PotentialSpec, spec: &MultiplierSpec, x: &[f64], t: f64) -> f64 {
    let n = x.len();
    let mut gv = [0.0; MAX_DIM];
    let mut gf = [0.0; MAX_DIM];
    v.value_grad(x, t, &mut gv[..n]);
    spec.field(x, &mut gf[..n]);
    -2.0 * (0..n).map(|j| gf[j] * gv[j]).sum::<f64>()
}

/// Values of `V` at the grid nodes.
pub fn potential_values(grid: &Arc<Grid>, v: &PotentialSpec, t: Option<f64>) -> Result<Vec<f64>> {
    v.validate(grid.dim())?;
    let t = match (v.is_time_dependent(), t) {
        (true, Some(t)) => t,
        (false, None) => 0.0,
        _ => return Err(Error::Potential("time argument must be given exactly for time-dependent potentials".into())),
    };
    let n = grid.dim();
    Ok(grid.sample(|x| {
        let mut g = [0.0; MAX_DIM];
        v.value_grad(x, t, &mut g[..n])
    }))
}

/// `H_h = −Δ_h + V`.
pub fn hamiltonian(grid: &Arc<Grid>, v: &PotentialSpec, t: Option<f64>) -> Result<DiscreteOperator> {
    let values = potential_values(grid, v, t)?;
    let lap = StencilOp::laplacian(grid);
    let diag: Vec<f64> = lap.diag().iter().zip(&values).map(|(a, b)| a + b).collect();
    Ok(DiscreteOperator::Stencil(Arc::new(StencilOp::new(grid, diag, lap.edges().to_vec())?)))
}

/// The assembled commutator `i[H, γ]`.
#[derive(Clone, Debug)]
pub struct CommutatorForm {
    pub kinetic: DiscreteOperator,
    pub potential: DiscreteOperator,
    pub total: DiscreteOperator,
}

impl CommutatorForm {
    pub fn grid(&self) -> &Arc<Grid> {
        self.kinetic.grid()
    }

    /// Node values of the multiplication operator `i[V, γ]`.
    pub fn potential_values(&self) -> &[f64] {
        match &self.potential {
            DiscreteOperator::Diagonal { values, .. } => values,
            _ => unreachable!("the potential part is always diagonal"),
        }
    }
}

fn check_compatible(grid: &Arc<Grid>, spec: &MultiplierSpec) -> Result<()> {
    if grid.dim() != spec.dim() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

fn node_distances(grid: &Arc<Grid>, c: &[f64]) -> Vec<f64> {
    grid.sample(|x| dist(x, c))
}

/// Kinetic part `i[−Δ, γ]` of a smooth multiplier.
pub fn kinetic_form(grid: &Arc<Grid>, spec: &MultiplierSpec) -> Result<DiscreteOperator> {
    check_compatible(grid, spec)?;
    if spec.variant == MultiplierVariant::Morawetz {
        return Err(Error::Unsupported("kinetic commutator of the Morawetz multiplier has a singular weight Hessian".into()));
    }
    let p = &spec.profile;
    let n = grid.dim();
    let gs: Vec<Vec<f64>> = spec.centers.iter().map(|c| node_distances(grid, c).into_iter().map(|r| p.g(r)).collect()).collect();
    let terms: Vec<(f64, &[f64])> = spec.weights.iter().zip(&gs).map(|(w, g)| (4.0 * w, g.as_slice())).collect();
    let hardy = StencilOp::weighted_laplacian(grid, &terms);
    let remainder = grid.sample(|x| spec.centers.iter().zip(&spec.weights).map(|(c, w)| w * p.kinetic_remainder(dist(x, c))).sum());
    let diag: Vec<f64> = hardy.diag().iter().zip(&remainder).map(|(a, b)| a + b).collect();
    let scalar = StencilOp::new(grid, diag, hardy.edges().to_vec())?;
    let half: Vec<f64> = grid.spacing().iter().map(|h| 0.5 * h).collect();
    let tensor = TensorOp::from_fn(grid, |sign, idx, out| {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut x = [0.0; MAX_DIM];
        grid.point(idx, &mut x[..n]);
        for j in 0..n {
            x[j] += sign as f64 * half[j];
        }
        for (c, w) in spec.centers.iter().zip(&spec.weights) {
            let mut d = [0.0; MAX_DIM];
            for j in 0..n {
                d[j] = x[j] - c[j];
            }
            let rho = d[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
            if rho == 0.0 {
                continue;
            }
            let gap = 4.0 * w * p.transverse_gap(rho);
            for j in 0..n {
                for k in j..n {
                    let delta = if j == k { 1.0 } else { 0.0 };
                    out[TensorOp::packed_index(n, j, k)] += gap * (delta - d[j] * d[k] / (rho * rho));
                }
            }
        }
    });
    Ok(DiscreteOperator::sum(vec![(1.0, DiscreteOperator::Stencil(Arc::new(scalar))), (1.0, DiscreteOperator::Tensor(Arc::new(tensor)))]))
}

/// Node values of `i[V, γ]`.
pub fn potential_part(grid: &Arc<Grid>, v: &PotentialSpec, spec: &MultiplierSpec, t: Option<f64>) -> Result<Vec<f64>> {
    check_compatible(grid, spec)?;
    v.validate(grid.dim())?;
    let t = match (v.is_time_dependent(), t) {
        (true, Some(t)) => t,
        (false, None) => 0.0,
        _ => return Err(Error::Potential("time argument must be given exactly for time-dependent potentials".into())),
    };
    Ok(grid.sample(|x| symbol_at(v, spec, x, t)))
}

/// Rejects grids whose spacing exceeds a quarter of the smallest bump radius.
pub fn check_resolution(grid: &Grid, v: &PotentialSpec) -> Result<()> {
    if let Some(support) = v.min_support_radius() {
        let spacing = grid.max_spacing();
        if spacing > support / 4.0 {
            return Err(Error::GridTooCoarse { spacing, support });
        }
    }
    Ok(())
}

/// `i[H, γ]` with kinetic and potential parts.
pub fn assemble_commutator(grid: &Arc<Grid>, v: &PotentialSpec, spec: &MultiplierSpec, t: Option<f64>) -> Result<CommutatorForm> {
    check_resolution(grid, v)?;
    let kinetic = kinetic_form(grid, spec)?;
    let potential = DiscreteOperator::diagonal(grid, potential_part(grid, v, spec, t)?);
    let total = kinetic.clone().plus(potential.clone());
    Ok(CommutatorForm { kinetic, potential, total })
}

/// `i[H_h, γ_h]` by composing the discrete operators; a cross-check of the
/// assembled form that agrees with it to second order on smooth fields.
pub fn composed_commutator(grid: &Arc<Grid>, v: &PotentialSpec, spec: &MultiplierSpec, t: Option<f64>) -> Result<DiscreteOperator> {
    Ok(DiscreteOperator::commutator(hamiltonian(grid, v, t)?, spec.operator(grid)?))
}

/// `s·Σ_k λ_k w g_k(−Δ_h)g_k` with `w = 4 − σ/(n−2)²` and `g_k = ⟨x − c_k⟩^{−σ}`
/// in the profile's scaling.
pub fn lower_bound_form(grid: &Arc<Grid>, spec: &MultiplierSpec, scale: f64) -> Result<DiscreteOperator> {
    check_compatible(grid, spec)?;
    let p = &spec.profile;
    let w = p.lower_bound_weight() * scale;
    let gs: Vec<Vec<f64>> = spec.centers.iter().map(|c| node_distances(grid, c).into_iter().map(|r| p.g(r)).collect()).collect();
    let terms: Vec<(f64, &[f64])> = spec.weights.iter().zip(&gs).map(|(l, g)| (w * l, g.as_slice())).collect();
    Ok(DiscreteOperator::Stencil(Arc::new(StencilOp::weighted_laplacian(grid, &terms))))
}

/// What the commutator is compared against.
#[derive(Clone, Debug)]
pub enum ResidualBound {
    /// An explicit form, e.g. from [`lower_bound_form`].
    Form(DiscreteOperator),
    /// `c·i[−Δ, γ]` with the commutator's own kinetic part.
    ScaledKinetic(f64),
}

/// `i[H, γ] − bound`.
pub fn residual_form(comm: &CommutatorForm, bound: ResidualBound) -> Result<DiscreteOperator> {
    match bound {
        ResidualBound::Form(b) => {
            if **b.grid() != **comm.grid() {
                return Err(Error::GridMismatch);
            }
            Ok(comm.total.clone().minus(b))
        }
        ResidualBound::ScaledKinetic(c) => Ok(DiscreteOperator::sum(vec![(1.0 - c, comm.kinetic.clone()), (1.0, comm.potential.clone())])),
    }
}

/// Largest value of `V` sampled on the grid nodes.
pub fn max_potential(grid: &Arc<Grid>, v: &PotentialSpec, t: Option<f64>) -> Result<f64> {
    Ok(potential_values(grid, v, t)?.into_par_iter().reduce(|| f64::NEG_INFINITY, f64::max))
}
