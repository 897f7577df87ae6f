//! Pointwise verifiers for the cancellation estimates of symmetric center
//! pairs, the negative region of `i[V_j, γ_N]` and its tube radius, and the
//! logarithmic growth of the off-axis gain in `N`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::commutator::symbol_at;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::multiplier::{build_gamma_n, build_sym_morawetz, MultiplierSpec};
use crate::potentials::{Bump, PotentialSpec, MAX_DIM};
use crate::profile::{dist, RadialProfile};
use crate::vector::C64;

/// Tolerance of the pointwise inequalities.
pub const POINTWISE_TOL: f64 = 1e-12;

fn transverse_norm(x: &[f64]) -> f64 {
    x[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Symbol of the pair `γ_c + γ_{−c}` against the radial potential `V₀(|x|)`,
/// and the lower bound `−2V₀′(r)·min{f(|x+c|), f(|x−c|)}·2|y|²/(r(r+|c|))`.
pub fn pair_bound_check(x: &[f64], c: &[f64], v0: &Bump, profile: &RadialProfile) -> Result<(f64, f64)> {
    if x.len() != c.len() || x.len() != profile.dim() {
        return Err(Error::Invalid("points must share the profile dimension".into()));
    }
    if c[1..].iter().any(|v| *v != 0.0) {
        return Err(Error::Invalid("pair center must lie on the first axis".into()));
    }
    let r = dist(x, &vec![0.0; x.len()]);
    if r == 0.0 {
        return Ok((0.0, 0.0));
    }
    let neg: Vec<f64> = c.iter().map(|v| -v).collect();
    let dv = v0.derivative(r);
    let mut value = 0.0;
    let mut g = [0.0; MAX_DIM];
    for center in [c, &neg[..]] {
        profile.grad_weight(x, center, &mut g[..x.len()]);
        let radial: f64 = g[..x.len()].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / r;
        value += -2.0 * dv * radial;
    }
    let y2 = transverse_norm(x).powi(2);
    let cn = dist(c, &vec![0.0; c.len()]);
    let fmin = profile.f(dist(x, c)).min(profile.f(dist(x, &neg)));
    let bound = -2.0 * dv * fmin * 2.0 * y2 / r / (r + cn);
    Ok((value, bound))
}

/// `f(|x−k₁|)/|x−k₁|·(x₁−k₁) + f(|x−k₂|)/|x−k₂|·(x₁−k₂)` with `k_j = (k_j, y₀)`.
/// Nonpositive when `x₁` is nearer `k₁`, nonnegative when nearer `k₂`.
pub fn claim_monotone_check(k1: f64, k2: f64, x: &[f64], y0: &[f64], profile: &RadialProfile) -> Result<f64> {
    if !(k1 <= x[0] && x[0] <= k2) {
        return Err(Error::Invalid(format!("need k1 ≤ x₁ ≤ k2, got {k1}, {}, {k2}", x[0])));
    }
    if y0.len() + 1 != x.len() {
        return Err(Error::Invalid("transverse offset has the wrong dimension".into()));
    }
    let s: f64 = x[1..].iter().zip(y0).map(|(a, b)| (a - b) * (a - b)).sum();
    let term = |k: f64| {
        let d = x[0] - k;
        let rho = (d * d + s).sqrt();
        if rho == 0.0 {
            0.0
        } else {
            profile.f(rho) / rho * d
        }
    };
    Ok(term(k1) + term(k2))
}

/// Value of `i[V, γ]` and the uniform lower bound
/// `−2|∂₁V|(2L+3)f(∞) − 2(∇_yV·y)Σ_k f(|x−c_k|)/|x−c_k|` for unit-spaced
/// centers on the first axis.
pub fn general_lower_bound_check(v: &PotentialSpec, spec: &MultiplierSpec, x: &[f64], half_length: f64) -> Result<(f64, f64)> {
    if v.is_time_dependent() {
        return Err(Error::Potential("static potential required".into()));
    }
    let g = v.gradient(x, None)?;
    let p = &spec.profile;
    let value = symbol_at(v, spec, x, 0.0);
    let y_dot: f64 = x[1..].iter().zip(&g[1..]).map(|(a, b)| a * b).sum();
    let sum: f64 = spec
        .centers
        .iter()
        .zip(&spec.weights)
        .map(|(c, w)| {
            let rho = dist(x, c);
            if rho == 0.0 {
                0.0
            } else {
                w * p.f(rho) / rho
            }
        })
        .sum();
    let floor = -2.0 * g[0].abs() * (2.0 * half_length + 3.0) * p.f_inf() - 2.0 * y_dot * sum;
    Ok((value, floor))
}

/// `i[V, Σ_{c∈sym{x′}} γ_c^Mor](x)` for `|x₁| > L`.
pub fn sym_morawetz_check(v: &PotentialSpec, profile: &RadialProfile, x_prime: &[f64], x: &[f64], half_length: f64) -> Result<f64> {
    if x[0].abs() <= half_length {
        return Err(Error::Invalid(format!("need |x₁| > L = {half_length}, got x₁ = {}", x[0])));
    }
    if v.is_time_dependent() {
        return Err(Error::Potential("static potential required".into()));
    }
    let spec = build_sym_morawetz(profile, x_prime)?;
    Ok(symbol_at(v, &spec, x, 0.0))
}

/// Nodes where `i[V_j, γ]` is strictly negative.
#[derive(Clone, Debug, Serialize)]
pub struct NegativeRegion {
    pub bump_index: i64,
    #[serde(skip)]
    pub indicator: Vec<bool>,
    pub count: usize,
    /// Largest `|y|` over flagged nodes (0 when empty).
    pub tube_radius: f64,
    pub volume_fraction: f64,
    /// Smallest symbol value over the grid.
    pub min_value: f64,
    /// `min(i[V_j, γ] + 4f(∞)|∇V_j|)`; negative values violate the floor.
    pub floor_margin: f64,
    /// Flagged nodes outside the support of `V_j`.
    pub outside_support: usize,
    #[serde(skip)]
    grid: Option<Arc<Grid>>,
}

impl NegativeRegion {
    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Indicator as a 0/1 field, for the binary dump format.
    pub fn to_field(&self) -> Result<Field> {
        let grid = self.grid.as_ref().ok_or_else(|| Error::Invalid("region has no grid".into()))?;
        Field::from_vec(grid, self.indicator.iter().map(|b| C64::new(if *b { 1.0 } else { 0.0 }, 0.0)).collect())
    }
}

/// Flags the nodes where the symbol of bump `j` is below `−1e−14` times its
/// local scale `2Σλ_k f(∞)|∇V_j|`.
pub fn negative_region(v: &PotentialSpec, spec: &MultiplierSpec, grid: &Arc<Grid>, bump_index: i64) -> Result<NegativeRegion> {
    let bumps = v.bumps(grid.dim()).ok_or_else(|| Error::Potential("potential does not decompose into bumps".into()))?;
    let (_, vj) =
        bumps.into_iter().find(|(j, _)| *j == bump_index).ok_or_else(|| Error::Invalid(format!("no bump with index {bump_index}")))?;
    let PotentialSpec::RadialBump { center, bump } = &vj else { unreachable!("bumps are radial") };
    let n = grid.dim();
    let f_inf = spec.profile.f_inf();
    let weight = spec.total_weight();
    let rows: Vec<(bool, f64, f64, bool, f64)> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let mut x = [0.0; MAX_DIM];
            grid.point(idx, &mut x[..n]);
            let x = &x[..n];
            let value = symbol_at(&vj, spec, x, 0.0);
            let r = dist(x, center);
            let grad = bump.derivative(r).abs();
            let flagged = value < -1e-14 * 2.0 * weight * f_inf * grad;
            (flagged, value, value + 4.0 * f_inf * grad, r >= bump.radius, transverse_norm(x))
        })
        .collect();
    let indicator: Vec<bool> = rows.iter().map(|r| r.0).collect();
    let count = indicator.iter().filter(|b| **b).count();
    Ok(NegativeRegion {
        bump_index,
        count,
        tube_radius: rows.iter().filter(|r| r.0).map(|r| r.4).fold(0.0, f64::max),
        volume_fraction: count as f64 / grid.len() as f64,
        min_value: rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min),
        floor_margin: rows.iter().map(|r| r.2).fold(f64::INFINITY, f64::min),
        outside_support: rows.iter().filter(|r| r.0 && r.3).count(),
        indicator,
        grid: Some(grid.clone()),
    })
}

/// Least-squares fit of `min_probes i[V₀, γ_N]` against `log N`.
#[derive(Clone, Debug, Serialize)]
pub struct LogFit {
    pub n_values: Vec<usize>,
    pub minima: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ a + b·x`, returning `(a, b, R²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (a, b, r2)
}

/// Fits the smallest symbol of `γ_N` against a radial bump at the origin,
/// over the probe points, as a function of `log N`.
pub fn log_accumulation_fit(v0: &Bump, profile: &RadialProfile, axis_b: &[f64], n_list: &[usize], probes: &[Vec<f64>]) -> Result<LogFit> {
    if n_list.len() < 3 {
        return Err(Error::Invalid("the log fit needs at least three values of N".into()));
    }
    if probes.is_empty() {
        return Err(Error::Invalid("no probe points".into()));
    }
    let v = PotentialSpec::RadialBump { center: vec![0.0; profile.dim()], bump: *v0 };
    let minima: Vec<f64> = n_list
        .iter()
        .map(|&n| {
            let spec = build_gamma_n(profile, n, axis_b)?;
            Ok(probes.par_iter().map(|x| symbol_at(&v, &spec, x, 0.0)).reduce(|| f64::INFINITY, f64::min))
        })
        .collect::<Result<_>>()?;
    let logs: Vec<f64> = n_list.iter().map(|&n| (n as f64).ln()).collect();
    let (intercept, slope, r_squared) = linear_fit(&logs, &minima);
    Ok(LogFit { n_values: n_list.to_vec(), minima, slope, intercept, r_squared })
}

/// For each `δ`, the smallest `N` of the ladder whose negative region (of the
/// whole potential) lies inside `[−L, L] × B(δ)`.
pub fn tube_thresholds(
    v: &PotentialSpec,
    profile: &RadialProfile,
    grid: &Arc<Grid>,
    half_length: f64,
    deltas: &[f64],
    n_ladder: &[usize],
) -> Result<Vec<Option<usize>>> {
    let n = grid.dim();
    let mut extents = Vec::with_capacity(n_ladder.len());
    for &nn in n_ladder {
        let mut axis = vec![0.0; n];
        axis[0] = 1.0;
        let spec = build_gamma_n(profile, nn, &axis)?;
        let (max_x1, max_y) = (0..grid.len())
            .into_par_iter()
            .map(|idx| {
                let mut x = [0.0; MAX_DIM];
                grid.point(idx, &mut x[..n]);
                let mut g = [0.0; MAX_DIM];
                let scale = {
                    v.value_grad(&x[..n], 0.0, &mut g[..n]);
                    g[..n].iter().map(|v| v * v).sum::<f64>().sqrt()
                };
                let value = symbol_at(v, &spec, &x[..n], 0.0);
                if value < -1e-14 * scale * spec.total_weight() * profile.f_inf() {
                    (x[0].abs(), transverse_norm(&x[..n]))
                } else {
                    (0.0, 0.0)
                }
            })
            .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
        extents.push((max_x1, max_y));
    }
    Ok(deltas
        .iter()
        .map(|&d| n_ladder.iter().zip(&extents).find(|(_, (x1, y))| *x1 <= half_length && *y <= d).map(|(nn, _)| *nn))
        .collect())
}

/// Outcome of a randomized pointwise sweep; the margin is the amount by
/// which the inequality holds (negative when violated).
#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub samples: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub worst_location: Vec<f64>,
}

impl SweepReport {
    fn collect(rows: Vec<(f64, Vec<f64>)>, tol: f64) -> Self {
        let violations = rows.iter().filter(|r| r.0 < -tol).count();
        let (worst_margin, worst_location) =
            rows.iter().fold((f64::INFINITY, Vec::new()), |acc, r| if r.0 < acc.0 { (r.0, r.1.clone()) } else { acc });
        Self { samples: rows.len(), violations, worst_margin, worst_location }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn uniform_point(rng: &mut ChaCha8Rng, half_widths: &[f64]) -> Vec<f64> {
    half_widths.iter().map(|w| rng.random_range(-*w..=*w)).collect()
}

/// [`pair_bound_check`] at `samples` random `(x, c)`: `x` uniform in the cube
/// of half-width `1.2R` around the bump, `c = (c₁, 0, …)` with `c₁ ∈ [0, 3R]`.
pub fn pair_bound_sweep(v0: &Bump, profile: &RadialProfile, samples: usize, seed: u64, tol: f64) -> Result<SweepReport> {
    let n = profile.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<(Vec<f64>, Vec<f64>)> = (0..samples)
        .map(|_| {
            let x = uniform_point(&mut rng, &vec![1.2 * v0.radius; n]);
            let mut c = vec![0.0; n];
            c[0] = rng.random_range(0.0..=3.0 * v0.radius);
            (x, c)
        })
        .collect();
    let rows = points
        .par_iter()
        .map(|(x, c)| {
            let (value, bound) = pair_bound_check(x, c, v0, profile)?;
            Ok((value - bound, x.iter().chain(c).copied().collect()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport::collect(rows, tol))
}

/// Sign branches of [`claim_monotone_check`] at random `k₁ < k₂`, `x₁ ∈ [k₁, k₂]`
/// and transverse offsets in `[−2, 2]`: the value must be `≤ tol` when `x₁` is
/// nearer `k₁` and `≥ −tol` when nearer `k₂`.
pub fn claim_sign_sweep(profile: &RadialProfile, samples: usize, seed: u64, tol: f64) -> Result<SweepReport> {
    let n = profile.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(samples);
    for _ in 0..samples {
        let k1 = rng.random_range(-5.0..=5.0);
        let k2 = k1 + rng.random_range(0.01..=5.0);
        let mut x = uniform_point(&mut rng, &vec![2.0; n]);
        x[0] = rng.random_range(k1..=k2);
        let y0 = uniform_point(&mut rng, &vec![2.0; n - 1]);
        let value = claim_monotone_check(k1, k2, &x, &y0, profile)?;
        let mid = 0.5 * (k1 + k2);
        let margin = if x[0] < mid {
            -value
        } else if x[0] > mid {
            value
        } else {
            continue;
        };
        rows.push((margin, [&[k1, k2][..], &x, &y0].concat()));
    }
    Ok(SweepReport::collect(rows, tol))
}

/// [`general_lower_bound_check`] at `samples` points uniform in the cube of
/// the given half-widths.
pub fn general_floor_sweep(
    v: &PotentialSpec,
    spec: &MultiplierSpec,
    half_length: f64,
    half_widths: &[f64],
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<SweepReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<Vec<f64>> = (0..samples).map(|_| uniform_point(&mut rng, half_widths)).collect();
    let rows = points
        .par_iter()
        .map(|x| {
            let (value, floor) = general_lower_bound_check(v, spec, x, half_length)?;
            Ok((value - floor, x.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport::collect(rows, tol))
}
