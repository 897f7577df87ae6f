//! Potential families with analytic gradients, and sampled checks of the
//! axial repulsiveness conditions, their time-uniform versions, and the
//! pointwise sufficient condition for sign-indefinite potentials.
//!
//! Points are written `x = (x₁, y)` with `x₁` the coordinate along the first
//! axis and `y ∈ ℝⁿ⁻¹` the transverse part.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::RadialProfile;

/// Largest supported dimension.
pub const MAX_DIM: usize = 8;

/// Radial bump `A·(1 − (r/R)²)³` on `r < R`, zero outside: C², decreasing,
/// compactly supported.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub amplitude: f64,
    pub radius: f64,
}

impl Bump {
    pub fn value(&self, r: f64) -> f64 {
        if r >= self.radius {
            return 0.0;
        }
        let u = 1.0 - (r / self.radius).powi(2);
        self.amplitude * u * u * u
    }

    /// `V′(r)`.
    pub fn derivative(&self, r: f64) -> f64 {
        -self.radial_factor(r) * r
    }

    /// `−V′(r)/r = 6A/R² (1 − (r/R)²)²`, so that `∇V = −factor·(x − c)`.
    fn radial_factor(&self, r: f64) -> f64 {
        if r >= self.radius {
            return 0.0;
        }
        let u = 1.0 - (r / self.radius).powi(2);
        6.0 * self.amplitude / (self.radius * self.radius) * u * u
    }

    fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.radius > 0.0 && self.amplitude.is_finite() && self.radius.is_finite()) {
            return Err(Error::Potential(format!("bump needs amplitude ≥ 0 and radius > 0, got {self:?}")));
        }
        Ok(())
    }
}

/// Axial factor `X(x₁) = A(e^{−(x₁−d)²/w²} + e^{−(x₁+d)²/w²})`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianPair {
    pub amplitude: f64,
    pub offset: f64,
    pub width: f64,
}

impl GaussianPair {
    pub fn value(&self, x1: f64) -> f64 {
        let w2 = self.width * self.width;
        self.amplitude * ((-(x1 - self.offset).powi(2) / w2).exp() + (-(x1 + self.offset).powi(2) / w2).exp())
    }

    pub fn derivative(&self, x1: f64) -> f64 {
        let w2 = self.width * self.width;
        let (a, b) = (x1 - self.offset, x1 + self.offset);
        -2.0 * self.amplitude / w2 * (a * (-a * a / w2).exp() + b * (-b * b / w2).exp())
    }

    /// Smallest `K` with `|X′| ≤ K·X` on `[−L, L]`: `2(L + d)/w²`.
    pub fn log_slope_bound(&self, half_length: f64) -> f64 {
        2.0 * (half_length + self.offset.abs()) / (self.width * self.width)
    }
}

/// Time dependence of a translation `β(t)` or a transverse scaling `λ(t)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum MotionLaw {
    Constant {
        value: f64,
    },
    /// `offset + amplitude·sin(ωt + phase)`
    Sinusoid {
        offset: f64,
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
    /// `offset + amplitude·tanh(rate·(t − center))`
    Ramp {
        offset: f64,
        amplitude: f64,
        rate: f64,
        center: f64,
    },
    /// `start + rate·t`
    Linear {
        start: f64,
        rate: f64,
    },
}

impl MotionLaw {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Self::Constant { value } => value,
            Self::Sinusoid { offset, amplitude, omega, phase } => offset + amplitude * (omega * t + phase).sin(),
            Self::Ramp { offset, amplitude, rate, center } => offset + amplitude * (rate * (t - center)).tanh(),
            Self::Linear { start, rate } => start + rate * t,
        }
    }
}

fn zero_law() -> MotionLaw {
    MotionLaw::Constant { value: 0.0 }
}
fn unit_law() -> MotionLaw {
    MotionLaw::Constant { value: 1.0 }
}
fn unit_bounds() -> [f64; 2] {
    [1.0, 1.0]
}

/// One moving piece `V_j(x₁ − β(t), λ(t)y)` of a time-dependent potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovingComponent {
    pub potential: PotentialSpec,
    #[serde(default = "zero_law")]
    pub translation: MotionLaw,
    #[serde(default = "unit_law")]
    pub scaling: MotionLaw,
    /// Declared bound `β₀` on `|β(t)|`.
    #[serde(default)]
    pub translation_bound: f64,
    /// Declared range `[λ₀, λ_∞]` of `λ(t)`.
    #[serde(default = "unit_bounds")]
    pub scaling_bounds: [f64; 2],
}

/// A summand with its multiplier weight `λ_j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedTerm {
    pub weight: f64,
    pub potential: PotentialSpec,
}

/// The potential families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    RadialBump {
        center: Vec<f64>,
        bump: Bump,
    },
    /// `V₋₁(|x + b|) + V₁(|x − b|)`; `bumps[0]` sits at `−b`, `bumps[1]` at `b`.
    TwoBump {
        b: Vec<f64>,
        bumps: [Bump; 2],
    },
    /// Identical bumps at `j·spacing·e₁`, `j = −M..M`.
    #[serde(rename = "lattice_1d")]
    Lattice1D {
        m: usize,
        #[serde(default = "unit_spacing")]
        spacing: f64,
        bump: Bump,
    },
    /// `X(x₁)·exp(η − √(|y|² + η²))`; `η = 0` is the cone `X(x₁)e^{−|y|}`.
    AxialProduct {
        factor: GaussianPair,
        #[serde(default)]
        smoothing: f64,
    },
    /// `−1/(b + c|x − center|^{2+ε})`
    NondefiniteRadial {
        b: f64,
        c: f64,
        eps: f64,
        center: Vec<f64>,
    },
    /// `Σ_j V_j`, each summand carrying a multiplier weight `λ_j`.
    WeightedSum {
        terms: Vec<WeightedTerm>,
    },
    /// `Σ_j V_j(x₁ − β_j(t), λ_j(t) y)`.
    TimeDependent {
        components: Vec<MovingComponent>,
    },
}

fn unit_spacing() -> f64 {
    1.0
}

fn radial_at(center: &[f64], x: &[f64], bump: &Bump, grad: &mut [f64]) -> f64 {
    let mut r2 = 0.0;
    for (xi, ci) in x.iter().zip(center) {
        r2 += (xi - ci) * (xi - ci);
    }
    let r = r2.sqrt();
    if r >= bump.radius {
        return 0.0;
    }
    let k = bump.radial_factor(r);
    for ((g, xi), ci) in grad.iter_mut().zip(x).zip(center) {
        *g -= k * (xi - ci);
    }
    bump.value(r)
}

impl PotentialSpec {
    /// Checks parameters; `dim` is the ambient dimension.
    pub fn validate(&self, dim: usize) -> Result<()> {
        if dim > MAX_DIM {
            return Err(Error::Potential(format!("dimension {dim} exceeds the supported maximum {MAX_DIM}")));
        }
        let check_point = |p: &[f64], what: &str| {
            if p.len() != dim {
                Err(Error::Potential(format!("{what} has {} coordinates, expected {dim}", p.len())))
            } else {
                Ok(())
            }
        };
        match self {
            Self::Zero => Ok(()),
            Self::RadialBump { center, bump } => {
                check_point(center, "bump center")?;
                bump.validate()
            }
            Self::TwoBump { b, bumps } => {
                check_point(b, "bump offset b")?;
                if b[1..].iter().any(|v| *v != 0.0) {
                    return Err(Error::Potential("bump offset b must lie on the first axis".into()));
                }
                bumps.iter().try_for_each(Bump::validate)
            }
            Self::Lattice1D { spacing, bump, .. } => {
                if spacing.is_nan() || *spacing <= 0.0 {
                    return Err(Error::Potential("lattice spacing must be positive".into()));
                }
                bump.validate()
            }
            Self::AxialProduct { factor, smoothing } => {
                if !(factor.amplitude >= 0.0 && factor.width > 0.0 && *smoothing >= 0.0) {
                    return Err(Error::Potential(format!("invalid axial factor {factor:?}, smoothing {smoothing}")));
                }
                Ok(())
            }
            Self::NondefiniteRadial { b, c, eps, center } => {
                check_point(center, "center")?;
                if !(*b > 0.0 && *c > 0.0 && *eps > 0.0) {
                    return Err(Error::Potential(format!("need b, c, ε > 0, got b={b}, c={c}, ε={eps}")));
                }
                Ok(())
            }
            Self::WeightedSum { terms } => {
                if terms.is_empty() {
                    return Err(Error::Potential("weighted sum needs at least one term".into()));
                }
                for t in terms {
                    if !(t.weight > 0.0 && t.weight < 1.0) {
                        return Err(Error::Potential(format!("term weights must lie in (0, 1), got {}", t.weight)));
                    }
                    t.potential.validate(dim)?;
                }
                Ok(())
            }
            Self::TimeDependent { components } => {
                if components.is_empty() {
                    return Err(Error::Potential("time-dependent potential needs a component".into()));
                }
                for c in components {
                    if c.potential.is_time_dependent() {
                        return Err(Error::Potential("moving components must be static potentials".into()));
                    }
                    let [lo, hi] = c.scaling_bounds;
                    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                        return Err(Error::Potential(format!("scaling bounds must satisfy 0 < λ₀ ≤ λ_∞ < ∞, got {lo}, {hi}")));
                    }
                    if c.translation_bound.is_nan() || c.translation_bound < 0.0 {
                        return Err(Error::Potential("translation bound must be nonnegative".into()));
                    }
                    c.potential.validate(dim)?;
                }
                Ok(())
            }
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        matches!(self, Self::TimeDependent { .. })
    }

    /// Whether the family member is C¹ by construction.
    pub fn is_c1(&self) -> bool {
        match self {
            Self::AxialProduct { smoothing, .. } => *smoothing > 0.0,
            Self::WeightedSum { terms } => terms.iter().all(|t| t.potential.is_c1()),
            Self::TimeDependent { components } => components.iter().all(|c| c.potential.is_c1()),
            _ => true,
        }
    }

    /// Value at `x`, adding `∇V(x)` into `grad`; `t` is ignored by static
    /// families.
    pub(crate) fn accumulate(&self, x: &[f64], t: f64, grad: &mut [f64]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::RadialBump { center, bump } => radial_at(center, x, bump, grad),
            Self::TwoBump { b, bumps } => {
                let mut c = [0.0; MAX_DIM];
                let n = x.len();
                for (k, v) in b.iter().enumerate() {
                    c[k] = -v;
                }
                let v = radial_at(&c[..n], x, &bumps[0], grad);
                v + radial_at(b, x, &bumps[1], grad)
            }
            Self::Lattice1D { m, spacing, bump } => {
                let m = *m as i64;
                let n = x.len();
                let mut c = [0.0; MAX_DIM];
                let mut v = 0.0;
                // only centers within reach contribute
                let lo = ((x[0] - bump.radius) / spacing).ceil().max(-m as f64) as i64;
                let hi = ((x[0] + bump.radius) / spacing).floor().min(m as f64) as i64;
                for j in lo..=hi {
                    c[0] = j as f64 * spacing;
                    v += radial_at(&c[..n], x, bump, grad);
                }
                v
            }
            Self::AxialProduct { factor, smoothing } => {
                let s2: f64 = x[1..].iter().map(|v| v * v).sum();
                let q = (s2 + smoothing * smoothing).sqrt();
                let y = (smoothing - q).exp();
                let xv = factor.value(x[0]);
                grad[0] += factor.derivative(x[0]) * y;
                if q > 0.0 {
                    let k = xv * y / q;
                    for (g, yi) in grad[1..].iter_mut().zip(&x[1..]) {
                        *g -= k * yi;
                    }
                }
                xv * y
            }
            Self::NondefiniteRadial { b, c, eps, center } => {
                let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                let r = r2.sqrt();
                let d = b + c * r.powf(2.0 + eps);
                // ∇V = c(2+ε) r^ε (x − center)/d²
                let k = c * (2.0 + eps) * r.powf(*eps) / (d * d);
                for ((g, xi), ci) in grad.iter_mut().zip(x).zip(center) {
                    *g += k * (xi - ci);
                }
                -1.0 / d
            }
            Self::WeightedSum { terms } => terms.iter().map(|term| term.potential.accumulate(x, t, grad)).sum(),
            Self::TimeDependent { components } => {
                let n = x.len();
                let mut total = 0.0;
                for comp in components {
                    let beta = comp.translation.at(t);
                    let lambda = comp.scaling.at(t);
                    let mut z = [0.0; MAX_DIM];
                    z[0] = x[0] - beta;
                    for k in 1..n {
                        z[k] = lambda * x[k];
                    }
                    let mut gz = [0.0; MAX_DIM];
                    total += comp.potential.accumulate(&z[..n], t, &mut gz[..n]);
                    grad[0] += gz[0];
                    for k in 1..n {
                        grad[k] += lambda * gz[k];
                    }
                }
                total
            }
        }
    }

    /// Value and gradient without argument checks.
    #[inline]
    pub fn value_grad(&self, x: &[f64], t: f64, grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        self.accumulate(x, t, grad)
    }

    fn check_time(&self, t: Option<f64>) -> Result<f64> {
        match (self.is_time_dependent(), t) {
            (true, Some(t)) => Ok(t),
            (false, None) => Ok(0.0),
            (true, None) => Err(Error::Potential("time-dependent potential needs a time argument".into())),
            (false, Some(_)) => Err(Error::Potential("static potential takes no time argument".into())),
        }
    }

    /// `V(x)` or `V(x, t)`; `t` must be given exactly for time-dependent specs.
    pub fn eval(&self, x: &[f64], t: Option<f64>) -> Result<f64> {
        let t = self.check_time(t)?;
        let mut g = [0.0; MAX_DIM];
        Ok(self.value_grad(x, t, &mut g[..x.len().min(MAX_DIM)]))
    }

    /// `∇V(x)` or `∇V(x, t)`.
    pub fn gradient(&self, x: &[f64], t: Option<f64>) -> Result<Vec<f64>> {
        let t = self.check_time(t)?;
        let mut g = vec![0.0; x.len()];
        self.value_grad(x, t, &mut g);
        Ok(g)
    }

    /// Indexed radial bumps the potential decomposes into.
    pub fn bumps(&self, dim: usize) -> Option<Vec<(i64, PotentialSpec)>> {
        match self {
            Self::RadialBump { .. } => Some(vec![(0, self.clone())]),
            Self::TwoBump { b, bumps } => Some(vec![
                (-1, Self::RadialBump { center: b.iter().map(|v| -v).collect(), bump: bumps[0] }),
                (1, Self::RadialBump { center: b.clone(), bump: bumps[1] }),
            ]),
            Self::Lattice1D { m, spacing, bump } => Some(
                (-(*m as i64)..=*m as i64)
                    .map(|j| {
                        let mut c = vec![0.0; dim];
                        c[0] = j as f64 * spacing;
                        (j, Self::RadialBump { center: c, bump: *bump })
                    })
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Radius and center of a radially symmetric spec.
    pub fn radial_center(&self) -> Option<&[f64]> {
        match self {
            Self::RadialBump { center, .. } | Self::NondefiniteRadial { center, .. } => Some(center),
            _ => None,
        }
    }

    /// Smallest support radius among compactly supported bumps.
    pub fn min_support_radius(&self) -> Option<f64> {
        match self {
            Self::RadialBump { bump, .. } | Self::Lattice1D { bump, .. } => Some(bump.radius),
            Self::TwoBump { bumps, .. } => Some(bumps[0].radius.min(bumps[1].radius)),
            Self::WeightedSum { terms } => terms.iter().filter_map(|t| t.potential.min_support_radius()).reduce(f64::min),
            Self::TimeDependent { components } => components
                .iter()
                .filter_map(|c| {
                    let lmax = c.scaling_bounds[1].max(1.0);
                    c.potential.min_support_radius().map(|r| r / lmax)
                })
                .reduce(f64::min),
            _ => None,
        }
    }

    /// Largest value of `V` over the support (closed form where available).
    pub fn peak(&self) -> Option<f64> {
        match self {
            Self::Zero => Some(0.0),
            Self::RadialBump { bump, .. } => Some(bump.amplitude),
            Self::TwoBump { bumps, .. } => Some(bumps[0].amplitude.max(bumps[1].amplitude)),
            _ => None,
        }
    }
}

/// Sample set `{(x₁, r·ω)}` over a slab and a transverse ball.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxialSample {
    pub x1: Vec<f64>,
    /// Transverse radii; a radius 0 adds the on-axis point once.
    pub radii: Vec<f64>,
    /// Unit vectors in ℝⁿ⁻¹.
    pub directions: Vec<Vec<f64>>,
}

impl AxialSample {
    /// `n_x1` evenly spaced `x₁ ∈ [−L′, L′]`, `n_r` radii in `[0, ρ]`, and
    /// `n_dir` directions (evenly spaced angles when `n = 3`, seeded random
    /// unit vectors otherwise).
    pub fn uniform(dim: usize, half_length: f64, n_x1: usize, max_radius: f64, n_r: usize, n_dir: usize, seed: u64) -> Self {
        let x1 = (0..n_x1).map(|i| -half_length + 2.0 * half_length * i as f64 / (n_x1.max(2) - 1) as f64).collect();
        let radii = (0..n_r).map(|i| max_radius * i as f64 / (n_r.max(2) - 1) as f64).collect();
        let directions = if dim == 3 {
            (0..n_dir)
                .map(|k| {
                    let a = 2.0 * PI * k as f64 / n_dir as f64;
                    vec![a.cos(), a.sin()]
                })
                .collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n_dir)
                .map(|_| {
                    let v: Vec<f64> = (0..dim - 1).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.into_iter().map(|x| x / norm).collect()
                })
                .collect()
        };
        Self { x1, radii, directions }
    }

    fn transverse_points(&self) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        let m = self.directions.first().map_or(0, |d| d.len());
        if self.radii.contains(&0.0) {
            out.push(vec![0.0; m]);
        }
        for &r in self.radii.iter().filter(|r| **r > 0.0) {
            for d in &self.directions {
                out.push(d.iter().map(|v| r * v).collect());
            }
        }
        out
    }

    /// All sample points, dimension `1 + dim(ω)`.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let ys = self.transverse_points();
        let mut out = Vec::with_capacity(self.x1.len() * ys.len());
        for &x1 in &self.x1 {
            for y in &ys {
                let mut p = Vec::with_capacity(y.len() + 1);
                p.push(x1);
                p.extend_from_slice(y);
                out.push(p);
            }
        }
        out
    }

    /// Sample spacing along the axis.
    pub fn axial_resolution(&self) -> f64 {
        if self.x1.len() < 2 {
            return 0.0;
        }
        (self.x1[self.x1.len() - 1] - self.x1[0]).abs() / (self.x1.len() - 1) as f64
    }
}

/// Worst violation of one condition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub condition: String,
    pub location: Vec<f64>,
    /// Amount by which the inequality fails (positive).
    pub magnitude: f64,
}

/// Outcome of the sampled axial-repulsiveness checks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxialConditionReport {
    /// `V ≥ 0` and `V` is C¹.
    pub a1: bool,
    /// `−y·∇_yV ≥ 0` everywhere.
    pub a2a: bool,
    /// `−x₁∂₁V ≥ 0` for `|x₁| > L`.
    pub a2b: bool,
    /// `Λ_δ` finite for every requested `δ`.
    pub a3: bool,
    /// `−x_j∂_jV ≥ 0` for every `j` when `|x₁| > L`.
    pub a4: bool,
    /// Smallest sampled `L` such that `−x₁∂₁V ≥ 0` for `|x₁| > L`.
    pub axial_half_length: f64,
    /// Smallest sampled `L` such that `−x_j∂_jV ≥ 0` for every `j` when `|x₁| > L`.
    pub directional_half_length: f64,
    /// `(δ, Λ_δ)`; `Λ_δ = ∞` when a transverse derivative vanishes where the
    /// axial one does not.
    pub lambda: Vec<(f64, f64)>,
    pub violations: Vec<Violation>,
}

impl AxialConditionReport {
    pub fn all_pass(&self) -> bool {
        self.a1 && self.a2a && self.a2b && self.a3 && self.a4
    }

    pub fn lambda_at(&self, delta: f64) -> Option<f64> {
        self.lambda.iter().find(|(d, _)| *d == delta).map(|(_, l)| *l)
    }
}

const POINTWISE_TOL: f64 = 1e-12;
/// Directional derivatives below this magnitude count as zero in `Λ_δ`.
const NEGLIGIBLE: f64 = 1e-13;

struct PointEval {
    x: Vec<f64>,
    v: f64,
    g: Vec<f64>,
}

fn evaluate_points<F>(points: Vec<Vec<f64>>, f: F) -> Vec<PointEval>
where
    F: Fn(&[f64], &mut [f64]) -> f64 + Sync,
{
    points
        .into_par_iter()
        .map(|x| {
            let mut g = vec![0.0; x.len()];
            let v = f(&x, &mut g);
            PointEval { x, v, g }
        })
        .collect()
}

fn record(worst: &mut Option<Violation>, name: &str, x: &[f64], magnitude: f64) {
    if worst.as_ref().is_none_or(|w| magnitude > w.magnitude) {
        *worst = Some(Violation { condition: name.into(), location: x.to_vec(), magnitude });
    }
}

/// Axial checks for a value-and-gradient evaluator.
pub(crate) fn axial_report_for<F>(eval: F, c1: bool, sample: &AxialSample, deltas: &[f64]) -> Result<AxialConditionReport>
where
    F: Fn(&[f64], &mut [f64]) -> f64 + Sync,
{
    if sample.x1.is_empty() || sample.radii.is_empty() || sample.directions.is_empty() {
        return Err(Error::Invalid("axial sample has an empty slice".into()));
    }
    let pts = evaluate_points(sample.points(), eval);
    let mut w1 = None;
    let mut w2a = None;
    let mut w2b = None;
    let mut w4 = None;
    let mut l_axial: f64 = 0.0;
    let mut l_dir: f64 = 0.0;
    for p in &pts {
        if p.v < -POINTWISE_TOL {
            record(&mut w1, "A1", &p.x, -p.v);
        }
        let radial_y: f64 = p.x[1..].iter().zip(&p.g[1..]).map(|(y, g)| y * g).sum();
        if -radial_y < -POINTWISE_TOL {
            record(&mut w2a, "A2a", &p.x, radial_y);
        }
        let ax = -p.x[0] * p.g[0];
        if ax < -POINTWISE_TOL {
            l_axial = l_axial.max(p.x[0].abs());
            l_dir = l_dir.max(p.x[0].abs());
        }
        for j in 1..p.x.len() {
            if -p.x[j] * p.g[j] < -POINTWISE_TOL {
                l_dir = l_dir.max(p.x[0].abs());
            }
        }
    }
    // With L discovered as the largest violating |x₁|, (A2b) holds by
    // construction; record where it binds. (A4) fails when transverse
    // directions force a larger slab than the axial one.
    for p in &pts {
        let ax = -p.x[0] * p.g[0];
        if ax < -POINTWISE_TOL && p.x[0].abs() >= l_axial {
            record(&mut w2b, "A2b-boundary", &p.x, -ax);
        }
        if p.x[0].abs() > l_axial {
            for j in 1..p.x.len() {
                let d = -p.x[j] * p.g[j];
                if d < -POINTWISE_TOL {
                    record(&mut w4, "A4", &p.x, -d);
                }
            }
        }
    }
    let mut lambda = Vec::with_capacity(deltas.len());
    let mut a3 = true;
    let mut w3 = None;
    for &delta in deltas {
        let mut worst: f64 = 0.0;
        for p in &pts {
            if p.x[0].abs() > l_axial {
                continue;
            }
            let s: f64 = p.x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if s <= delta {
                continue;
            }
            let num = p.g[0].abs();
            if num <= NEGLIGIBLE {
                continue;
            }
            let den = (p.x[1..].iter().zip(&p.g[1..]).map(|(y, g)| y * g).sum::<f64>() / s).abs();
            let ratio = if den <= NEGLIGIBLE { f64::INFINITY } else { num / den };
            if ratio > worst {
                worst = ratio;
            }
            if ratio.is_infinite() {
                record(&mut w3, "A3", &p.x, f64::INFINITY);
            }
        }
        if worst.is_infinite() {
            a3 = false;
        }
        lambda.push((delta, worst));
    }
    let violations: Vec<Violation> = [w1, w2a, w2b, w3, w4].into_iter().flatten().collect();
    Ok(AxialConditionReport {
        a1: c1 && !violations.iter().any(|v| v.condition == "A1"),
        a2a: !violations.iter().any(|v| v.condition == "A2a"),
        a2b: true,
        a3,
        a4: !violations.iter().any(|v| v.condition == "A4"),
        axial_half_length: l_axial,
        directional_half_length: l_dir,
        lambda,
        violations,
    })
}

/// Sampled (A1)–(A4) for a static potential.
pub fn check_axial_conditions(spec: &PotentialSpec, sample: &AxialSample, deltas: &[f64]) -> Result<AxialConditionReport> {
    if spec.is_time_dependent() {
        return Err(Error::Potential("use check_time_uniformity for time-dependent potentials".into()));
    }
    axial_report_for(|x, g| spec.value_grad(x, 0.0, g), spec.is_c1(), sample, deltas)
}

/// Result of the pointwise sufficient condition for sign-indefinite potentials.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NondefiniteReport {
    pub pass: bool,
    pub min_margin: f64,
    pub worst_location: Vec<f64>,
    /// One margin per sample point (per term for weighted sums, minimum taken).
    pub margins: Vec<f64>,
    /// Sum of the multiplier weights; must stay below 1.
    pub total_weight: f64,
}

/// Evaluates `λ((n−2)² − σ/4)/(r²⟨x−c⟩^{2σ}) − 2 f(∞)|∇V(x)|` at each sample
/// point, for a single centered radial potential (weight `lambda`) or for
/// each term of a weighted sum (weights from the terms, `lambda` ignored).
pub fn check_nondefinite_condition(
    spec: &PotentialSpec,
    profile: &RadialProfile,
    lambda: f64,
    sample: &[Vec<f64>],
) -> Result<NondefiniteReport> {
    let n = profile.dim() as f64;
    let coefficient = (n - 2.0).powi(2) - profile.sigma() / 4.0;
    let terms: Vec<(f64, &PotentialSpec, Vec<f64>)> = match spec {
        PotentialSpec::WeightedSum { terms } => terms
            .iter()
            .map(|t| {
                let c = t.potential.radial_center().map(|c| c.to_vec()).unwrap_or_else(|| vec![0.0; profile.dim()]);
                (t.weight, &t.potential, c)
            })
            .collect(),
        PotentialSpec::NondefiniteRadial { center, .. } => vec![(lambda, spec, center.clone())],
        PotentialSpec::Zero => vec![(lambda, spec, vec![0.0; profile.dim()])],
        _ => return Err(Error::Potential("the sufficient condition applies to nondefinite radial potentials and weighted sums".into())),
    };
    if !(lambda > 0.0 && lambda < 1.0) && !matches!(spec, PotentialSpec::WeightedSum { .. }) {
        return Err(Error::Invalid(format!("lambda must lie in (0, 1), got {lambda}")));
    }
    let total_weight: f64 = terms.iter().map(|t| t.0).sum();
    for x in sample {
        for (_, _, c) in &terms {
            if crate::profile::dist(x, c) == 0.0 {
                return Err(Error::Invalid("sample contains a center point".into()));
            }
        }
    }
    let bound = 2.0 * profile.f_inf();
    let margins: Vec<f64> = sample
        .par_iter()
        .map(|x| {
            let mut g = vec![0.0; x.len()];
            terms
                .iter()
                .map(|(w, v, c)| {
                    let r = crate::profile::dist(x, c);
                    v.value_grad(x, 0.0, &mut g);
                    let grad = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                    w * coefficient / (r * r * profile.bracket_sq(r).powf(profile.sigma())) - bound * grad
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let (imin, min_margin) = margins.iter().enumerate().fold((0, f64::INFINITY), |acc, (i, m)| if *m < acc.1 { (i, *m) } else { acc });
    Ok(NondefiniteReport {
        pass: min_margin >= -POINTWISE_TOL && total_weight < 1.0,
        min_margin,
        worst_location: sample.get(imin).cloned().unwrap_or_default(),
        margins,
        total_weight,
    })
}

/// Equality-case parameters `(ε, b, c)` of the sign-indefinite example family
/// `−1/(b + c r^{2+ε})`: `ε = 2σ − 1`,
/// `b = 4(2+ε)M_σ/(a(n−2)²λ)`, `c = 16(2+ε)M_σ a^{ε/2}/((n−2)²λ)`.
pub fn nondefinite_equality_parameters(profile: &RadialProfile, lambda: f64) -> (f64, f64, f64) {
    let eps = 2.0 * profile.sigma() - 1.0;
    let n2 = (profile.dim() as f64 - 2.0).powi(2);
    let m = profile.m_sigma();
    let b = 4.0 * (2.0 + eps) * m / (profile.a() * n2 * lambda);
    let c = 16.0 * (2.0 + eps) * m * profile.a().powf(eps / 2.0) / (n2 * lambda);
    (eps, b, c)
}

/// Outcome of the time-uniformity check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeUniformityReport {
    pub pass: bool,
    pub static_half_length: f64,
    pub translation_bound: f64,
    /// `(t, L(t), all conditions pass at t)`
    pub per_time: Vec<(f64, f64, bool)>,
    /// `(δ, sup_t Λ_δ(t))`
    pub envelope: Vec<(f64, f64)>,
    pub reasons: Vec<String>,
}

/// Runs the axial checks on the frozen potential at each sampled time and
/// requires: every frozen potential passes, `L(t) ≤ L_static + β₀` (up to the
/// axial sampling resolution), the motion laws stay inside their declared
/// bounds, and `sup_t Λ_δ(t)` is finite.
pub fn check_time_uniformity(spec: &PotentialSpec, times: &[f64], sample: &AxialSample, deltas: &[f64]) -> Result<TimeUniformityReport> {
    let PotentialSpec::TimeDependent { components } = spec else {
        return Err(Error::Potential("time-uniformity check needs a time-dependent potential".into()));
    };
    let c1 = spec.is_c1();
    let statics = PotentialSpec::WeightedSum {
        terms: components.iter().map(|c| WeightedTerm { weight: 0.5, potential: c.potential.clone() }).collect(),
    };
    let base = axial_report_for(|x, g| statics.value_grad(x, 0.0, g), c1, sample, deltas)?;
    let beta0 = components.iter().map(|c| c.translation_bound).fold(0.0, f64::max);
    let limit = base.axial_half_length + beta0 + sample.axial_resolution();
    let mut reasons = Vec::new();
    if !base.all_pass() {
        reasons.push("static potential fails the axial conditions".to_string());
    }
    let mut per_time = Vec::with_capacity(times.len());
    let mut envelope: Vec<(f64, f64)> = deltas.iter().map(|d| (*d, 0.0)).collect();
    for &t in times {
        for (k, c) in components.iter().enumerate() {
            let beta = c.translation.at(t);
            let lambda = c.scaling.at(t);
            if beta.abs() > c.translation_bound {
                reasons.push(format!("component {k}: |β({t})| = {} exceeds β₀ = {}", beta.abs(), c.translation_bound));
            }
            if lambda < c.scaling_bounds[0] || lambda > c.scaling_bounds[1] {
                reasons.push(format!("component {k}: λ({t}) = {lambda} leaves [{}, {}]", c.scaling_bounds[0], c.scaling_bounds[1]));
            }
        }
        let r = axial_report_for(|x, g| spec.value_grad(x, t, g), c1, sample, deltas)?;
        let ok = r.all_pass();
        if !ok {
            reasons.push(format!("axial conditions fail at t = {t}"));
        }
        if r.axial_half_length > limit {
            reasons.push(format!("L({t}) = {} exceeds L_static + β₀ = {}", r.axial_half_length, limit));
        }
        for (e, (_, l)) in envelope.iter_mut().zip(&r.lambda) {
            e.1 = e.1.max(*l);
        }
        per_time.push((t, r.axial_half_length, ok));
    }
    if envelope.iter().any(|(_, l)| !l.is_finite()) {
        reasons.push("Λ_δ envelope is unbounded".into());
    }
    Ok(TimeUniformityReport {
        pass: reasons.is_empty(),
        static_half_length: base.axial_half_length,
        translation_bound: beta0,
        per_time,
        envelope,
        reasons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump() -> Bump {
        Bump { amplitude: 2.0, radius: 1.5 }
    }

    #[test]
    fn bump_values() {
        let b = bump();
        assert_eq!(b.value(0.0), 2.0);
        assert_eq!(b.value(1.5), 0.0);
        assert_eq!(b.derivative(0.0), 0.0);
        assert!(b.derivative(0.7) < 0.0);
    }

    #[test]
    fn family_examples() {
        let two = PotentialSpec::TwoBump { b: vec![2.0, 0.0, 0.0], bumps: [bump(), Bump { amplitude: 3.0, radius: 1.0 }] };
        assert_eq!(two.eval(&[2.0, 0.0, 0.0], None).unwrap(), 3.0);
        assert_eq!(two.eval(&[-2.0, 0.0, 0.0], None).unwrap(), 2.0);
        let ax = PotentialSpec::AxialProduct { factor: GaussianPair { amplitude: 1.0, offset: 1.0, width: 1.0 }, smoothing: 0.0 };
        let x1 = 0.3;
        assert_eq!(ax.eval(&[x1, 0.0, 0.0], None).unwrap(), GaussianPair { amplitude: 1.0, offset: 1.0, width: 1.0 }.value(x1));
        let nd = PotentialSpec::NondefiniteRadial { b: 4.0, c: 16.0, eps: 1.0, center: vec![0.0; 3] };
        assert_eq!(nd.eval(&[0.0; 3], None).unwrap(), -0.25);
    }

    #[test]
    fn time_argument_is_checked() {
        let s = PotentialSpec::RadialBump { center: vec![0.0; 3], bump: bump() };
        assert!(s.eval(&[0.0; 3], Some(1.0)).is_err());
        let td = PotentialSpec::TimeDependent {
            components: vec![MovingComponent {
                potential: s,
                translation: MotionLaw::Constant { value: 0.0 },
                scaling: MotionLaw::Constant { value: 1.0 },
                translation_bound: 1.0,
                scaling_bounds: [1.0, 1.0],
            }],
        };
        assert!(td.eval(&[0.0; 3], None).is_err());
        assert_eq!(td.eval(&[0.0; 3], Some(0.5)).unwrap(), 2.0);
    }

    #[test]
    fn gradient_vanishes_at_center_and_outside() {
        let s = PotentialSpec::RadialBump { center: vec![1.0, 0.0, 0.0], bump: bump() };
        assert_eq!(s.gradient(&[1.0, 0.0, 0.0], None).unwrap(), vec![0.0; 3]);
        assert_eq!(s.gradient(&[5.0, 0.0, 0.0], None).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn single_bump_passes_with_zero_slab() {
        let s = PotentialSpec::RadialBump { center: vec![0.0; 3], bump: bump() };
        let sample = AxialSample::uniform(3, 3.0, 61, 2.0, 21, 8, 0);
        let r = check_axial_conditions(&s, &sample, &[0.25, 0.5]).unwrap();
        assert!(r.all_pass(), "{r:?}");
        assert_eq!(r.axial_half_length, 0.0);
    }

    #[test]
    fn serde_is_strict() {
        let ok = r#"{"variant":"radial_bump","center":[0,0,0],"bump":{"amplitude":1,"radius":2}}"#;
        let s: PotentialSpec = serde_json::from_str(ok).unwrap();
        assert!(matches!(s, PotentialSpec::RadialBump { .. }));
        let bad = r#"{"variant":"radial_bump","center":[0,0,0],"bump":{"amplitude":1,"radius":2},"extra":1}"#;
        assert!(serde_json::from_str::<PotentialSpec>(bad).is_err());
    }
}
