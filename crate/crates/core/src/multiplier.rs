//! Vector-field multipliers `γ = −i Σ_k λ_k (∇F_{c_k}·∇ + ∇·∇F_{c_k})` built
//! from the radial weight `F` of a profile (or from `F(ρ) = ρ` for the
//! Morawetz variant), and their discretization as symmetric first-order
//! operators.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DiscreteOperator, Field, FirstOrderOp, Grid};
use crate::potentials::MAX_DIM;
use crate::profile::{dist, RadialProfile};

/// Which radial weight generates each `γ_c`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierVariant {
    /// `∇F_c = f(ρ)(x − c)/ρ` with the profile's slope `f`.
    #[default]
    SmoothF,
    /// `∇F_c = (x − c)/ρ`, zero at the center node.
    Morawetz,
}

/// A weighted sum of single-center multipliers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiplierSpec {
    pub profile: RadialProfile,
    pub centers: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub variant: MultiplierVariant,
}

impl MultiplierSpec {
    pub fn new(profile: RadialProfile, centers: Vec<Vec<f64>>, weights: Option<Vec<f64>>, variant: MultiplierVariant) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::Multiplier("a multiplier needs at least one center".into()));
        }
        let n = profile.dim();
        if let Some(c) = centers.iter().find(|c| c.len() != n) {
            return Err(Error::Multiplier(format!("center {c:?} does not have dimension {n}")));
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; centers.len()]);
        if weights.len() != centers.len() {
            return Err(Error::Multiplier(format!("{} weights for {} centers", weights.len(), centers.len())));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Multiplier("weights must be positive and finite".into()));
        }
        Ok(Self { profile, centers, weights, variant })
    }

    pub fn dim(&self) -> usize {
        self.profile.dim()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `Σ_k λ_k ∇F_{c_k}(x)`, written into `out`.
    pub fn field(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let mut g = [0.0; MAX_DIM];
        let g = &mut g[..x.len()];
        for (c, w) in self.centers.iter().zip(&self.weights) {
            self.center_field(x, c, g);
            out.iter_mut().zip(g.iter()).for_each(|(o, v)| *o += w * v);
        }
    }

    /// `∇F_c(x)` for one center.
    pub fn center_field(&self, x: &[f64], c: &[f64], out: &mut [f64]) {
        match self.variant {
            MultiplierVariant::SmoothF => self.profile.grad_weight(x, c, out),
            MultiplierVariant::Morawetz => {
                let rho = dist(x, c);
                for ((o, xi), ci) in out.iter_mut().zip(x).zip(c) {
                    *o = if rho == 0.0 { 0.0 } else { (xi - ci) / rho };
                }
            }
        }
    }

    /// Same centers, each weight rescaled.
    pub fn scaled(&self, factor: f64) -> Self {
        Self { weights: self.weights.iter().map(|w| w * factor).collect(), ..self.clone() }
    }

    /// The discrete multiplier as a symmetric first-order operator.
    pub fn operator(&self, grid: &Arc<Grid>) -> Result<DiscreteOperator> {
        if grid.dim() != self.dim() {
            return Err(Error::Multiplier(format!("grid dimension {} differs from the profile dimension {}", grid.dim(), self.dim())));
        }
        let n = grid.dim();
        let mut coeff = vec![0.0; grid.len() * n];
        coeff.par_chunks_mut(n).enumerate().for_each(|(idx, out)| {
            let mut x = [0.0; MAX_DIM];
            grid.point(idx, &mut x[..n]);
            self.field(&x[..n], out);
        });
        Ok(DiscreteOperator::FirstOrder(Arc::new(FirstOrderOp::new(grid, coeff)?)))
    }
}

/// `γ_N`: unit-weight centers `k·b`, `k = −N..N`.
pub fn build_gamma_n(profile: &RadialProfile, n: usize, axis_b: &[f64]) -> Result<MultiplierSpec> {
    if axis_b.iter().all(|v| *v == 0.0) {
        return Err(Error::Multiplier("axis vector b must be nonzero".into()));
    }
    let n = n as i64;
    let centers = (-n..=n).map(|k| axis_b.iter().map(|v| k as f64 * v).collect()).collect();
    MultiplierSpec::new(profile.clone(), centers, None, MultiplierVariant::SmoothF)
}

/// Morawetz multipliers centered at every sign flip of `x′`, duplicates removed.
pub fn build_sym_morawetz(profile: &RadialProfile, x_prime: &[f64]) -> Result<MultiplierSpec> {
    let n = x_prime.len();
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(1 << n);
    for mask in 0..(1usize << n) {
        let c: Vec<f64> = x_prime.iter().enumerate().map(|(j, v)| if mask >> j & 1 == 1 { -v } else { *v }).collect();
        // −0.0 and 0.0 compare equal, so vanishing coordinates deduplicate
        if !centers.contains(&c) {
            centers.push(c);
        }
    }
    MultiplierSpec::new(profile.clone(), centers, None, MultiplierVariant::Morawetz)
}

/// Smooth multipliers at arbitrary centers with weights `λ_j`.
pub fn build_weighted(profile: &RadialProfile, centers: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<MultiplierSpec> {
    MultiplierSpec::new(profile.clone(), centers, Some(weights), MultiplierVariant::SmoothF)
}

/// `γψ` on the field's grid.
pub fn apply_gamma(spec: &MultiplierSpec, psi: &Field) -> Result<Field> {
    spec.operator(psi.grid())?.apply_field(psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Boundary, GridSpec};
    use crate::vector::{dot, random_complex, random_real, C64};

    fn grid() -> Arc<Grid> {
        GridSpec::cube(3, 3.0, 12, Boundary::Dirichlet).build().unwrap()
    }

    #[test]
    fn center_enumeration() {
        let p = RadialProfile::standard();
        assert_eq!(build_gamma_n(&p, 0, &[1.0, 0.0, 0.0]).unwrap().centers, vec![vec![0.0; 3]]);
        let s = build_gamma_n(&p, 2, &[1.0, 0.0, 0.0]).unwrap();
        let x1: Vec<f64> = s.centers.iter().map(|c| c[0]).collect();
        assert_eq!(x1, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        for c in &s.centers {
            let neg: Vec<f64> = c.iter().map(|v| -v).collect();
            assert!(s.centers.contains(&neg));
        }
        assert!(build_gamma_n(&p, 1, &[0.0; 3]).is_err());
    }

    #[test]
    fn symmetric_morawetz_counts() {
        let p = RadialProfile::standard();
        assert_eq!(build_sym_morawetz(&p, &[0.0; 3]).unwrap().centers.len(), 1);
        assert_eq!(build_sym_morawetz(&p, &[1.0, 2.0, 3.0]).unwrap().centers.len(), 8);
        assert_eq!(build_sym_morawetz(&p, &[1.0, 0.0, 3.0]).unwrap().centers.len(), 4);
    }

    #[test]
    fn real_fields_have_zero_expectation() {
        let g = grid();
        let spec = build_gamma_n(&RadialProfile::standard(), 1, &[1.0, 0.0, 0.0]).unwrap();
        let op = spec.operator(&g).unwrap();
        let x = random_real(g.len(), 3);
        assert!(dot(&x, &op.apply_vec(&x)).re.abs() < 1e-10);
    }

    #[test]
    fn gamma_is_symmetric() {
        let g = grid();
        let spec = build_gamma_n(&RadialProfile::standard(), 2, &[0.7, 0.0, 0.0]).unwrap();
        let op = spec.operator(&g).unwrap();
        let (u, v) = (random_complex(g.len(), 4), random_complex(g.len(), 5));
        let lhs: C64 = dot(&u, &op.apply_vec(&v));
        let rhs: C64 = dot(&op.apply_vec(&u), &v);
        assert!((lhs - rhs).norm() < 1e-12 * lhs.norm().max(1.0));
    }

    #[test]
    fn morawetz_center_node_is_zero() {
        let p = RadialProfile::standard();
        let s = build_sym_morawetz(&p, &[0.0; 3]).unwrap();
        let mut out = [1.0; 3];
        s.field(&[0.0; 3], &mut out);
        assert_eq!(out, [0.0; 3]);
    }
}
