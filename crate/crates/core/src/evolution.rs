//! Propagation of `i∂ₜψ = Hψ` on a grid (Crank–Nicolson with conjugate
//! gradients, or Strang splitting through the sine/Fourier transform) and the
//! dynamical checks built on a trajectory: the Ehrenfest identity for a
//! multiplier, the Morawetz budget and the weighted decay integrals.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::commutator::{hamiltonian, potential_values};
use crate::error::{Error, Result};
use crate::frequency::{cutoff_operator, CutoffSpec, Part};
use crate::grid::{DiscreteOperator, Field, Grid, LaplacianSymbol, SpectralBasis};
use crate::multiplier::MultiplierSpec;
use crate::potentials::PotentialSpec;
use crate::profile::RadialProfile;
use crate::vector::{axpy, dot, norm, norm_sq, C64};

/// Time integrator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// `(1 + iαH)ψ₊ = (1 − iαH)ψ`, `α = dt/2`, solved through the normal
    /// equations `(1 + α²H²)z = (1 − iαH)ψ`.
    #[default]
    CrankNicolson,
    /// `e^{−iV dt/2} e^{iΔ_h dt} e^{−iV dt/2}` with the stencil symbol.
    StrangSplitStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub horizon: f64,
    pub scheme: Scheme,
    /// Relative residual of the implicit solve.
    pub solver_tol: f64,
    pub max_solver_iter: usize,
    /// Keep every `sample_every`-th state.
    pub sample_every: usize,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        Self { dt: 0.01, horizon: 1.0, scheme: Scheme::CrankNicolson, solver_tol: 1e-13, max_solver_iter: 1000, sample_every: 1 }
    }
}

impl EvolutionConfig {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.horizon > 0.0 && self.solver_tol > 0.0 && self.sample_every > 0) {
            return Err(Error::Invalid("dt, horizon, solver tolerance and sampling stride must be positive".into()));
        }
        let steps = self.horizon / self.dt;
        if (steps - steps.round()).abs() > 1e-9 * steps {
            return Err(Error::Invalid(format!("horizon {} is not a multiple of dt {}", self.horizon, self.dt)));
        }
        Ok(())
    }
}

/// Sampled states of one propagation.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub grid: Arc<Grid>,
    pub potential: PotentialSpec,
    pub config: EvolutionConfig,
    pub times: Vec<f64>,
    pub states: Vec<Vec<C64>>,
    /// Largest relative residual of the implicit solves (0 for splitting).
    pub max_solver_residual: f64,
}

impl Trajectory {
    fn time_arg(&self, t: f64) -> Option<f64> {
        self.potential.is_time_dependent().then_some(t)
    }

    /// `H_h` at time `t`.
    pub fn hamiltonian_at(&self, t: f64) -> Result<DiscreteOperator> {
        hamiltonian(&self.grid, &self.potential, self.time_arg(t))
    }

    pub fn field(&self, k: usize) -> Result<Field> {
        Field::from_vec(&self.grid, self.states[k].clone())
    }
}

/// Conjugate gradients for a Hermitian positive definite `a`.
fn conjugate_gradient<F: Fn(&[C64]) -> Vec<C64>>(a: F, b: &[C64], x0: Vec<C64>, tol: f64, max_iter: usize) -> Result<(Vec<C64>, f64)> {
    let bn = norm(b);
    if bn == 0.0 {
        return Ok((vec![C64::new(0.0, 0.0); b.len()], 0.0));
    }
    let mut x = x0;
    let ax = a(&x);
    let mut r: Vec<C64> = b.iter().zip(&ax).map(|(u, v)| u - v).collect();
    let mut p = r.clone();
    let mut rr = norm_sq(&r);
    for _ in 0..max_iter {
        if rr.sqrt() <= tol * bn {
            return Ok((x, rr.sqrt() / bn));
        }
        let ap = a(&p);
        let alpha = rr / dot(&p, &ap).re;
        axpy(C64::new(alpha, 0.0), &p, &mut x);
        axpy(C64::new(-alpha, 0.0), &ap, &mut r);
        let rr_new = norm_sq(&r);
        let beta = rr_new / rr;
        p.par_iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + *pi * beta);
        rr = rr_new;
    }
    let rel = rr.sqrt() / bn;
    if rel <= tol {
        Ok((x, rel))
    } else {
        Err(Error::Solver(format!("implicit solve stalled at relative residual {rel:e}")))
    }
}

/// One Crank–Nicolson step with `H` held fixed.
fn cn_step(h: &DiscreteOperator, psi: &[C64], dt: f64, tol: f64, max_iter: usize) -> Result<(Vec<C64>, f64)> {
    let alpha = 0.5 * dt;
    let minus_i_alpha = C64::new(0.0, -alpha);
    let apply_m = |x: &[C64]| -> Vec<C64> {
        let hx = h.apply_vec(x);
        x.iter().zip(&hx).map(|(a, b)| a + b * minus_i_alpha).collect()
    };
    let rhs = apply_m(psi);
    let normal = |x: &[C64]| -> Vec<C64> {
        let hhx = h.apply_vec(&h.apply_vec(x));
        x.iter().zip(&hhx).map(|(a, b)| a + b * (alpha * alpha)).collect()
    };
    let (z, res) = conjugate_gradient(normal, &rhs, psi.to_vec(), tol, max_iter)?;
    Ok((apply_m(&z), res))
}

struct SplitStep {
    basis: SpectralBasis,
    kinetic_phase: Vec<C64>,
}

impl SplitStep {
    fn new(grid: &Arc<Grid>, dt: f64) -> Self {
        let basis = SpectralBasis::new(grid);
        let kinetic_phase =
            basis.laplacian_symbol(LaplacianSymbol::FiniteDifference).iter().map(|l| C64::from_polar(1.0, -l * dt)).collect();
        Self { basis, kinetic_phase }
    }

    fn step(&self, psi: &mut [C64], v: &[f64], dt: f64) {
        let half = |psi: &mut [C64]| psi.par_iter_mut().zip(v).for_each(|(p, vi)| *p *= C64::from_polar(1.0, -0.5 * dt * vi));
        half(psi);
        self.basis.forward(psi);
        psi.par_iter_mut().zip(&self.kinetic_phase).for_each(|(p, k)| *p *= k);
        self.basis.inverse(psi);
        half(psi);
    }
}

/// Propagates `psi0` over the configured horizon and hands every sampled
/// state (including `t = 0`) to `observe`. Time-dependent potentials are
/// sampled at the midpoint of each step. Returns the largest relative
/// residual of the implicit solves.
pub fn propagate_observed<F>(grid: &Arc<Grid>, v: &PotentialSpec, psi0: &Field, config: &EvolutionConfig, mut observe: F) -> Result<f64>
where
    F: FnMut(f64, &[C64]) -> Result<()>,
{
    config.validate()?;
    if **psi0.grid() != **grid {
        return Err(Error::GridMismatch);
    }
    let td = v.is_time_dependent();
    let steps = config.steps();
    let mut psi = psi0.data().to_vec();
    observe(0.0, &psi)?;
    let mut max_res: f64 = 0.0;
    let static_h = if td { None } else { Some(hamiltonian(grid, v, None)?) };
    let static_v = if td { None } else { Some(potential_values(grid, v, None)?) };
    let split = (config.scheme == Scheme::StrangSplitStep).then(|| SplitStep::new(grid, config.dt));
    for k in 0..steps {
        let mid = (k as f64 + 0.5) * config.dt;
        match &split {
            None => {
                let h = match &static_h {
                    Some(h) => h.clone(),
                    None => hamiltonian(grid, v, Some(mid))?,
                };
                let (next, res) = cn_step(&h, &psi, config.dt, config.solver_tol, config.max_solver_iter)?;
                max_res = max_res.max(res);
                psi = next;
            }
            Some(s) => {
                let sampled;
                let vals = match &static_v {
                    Some(vals) => vals,
                    None => {
                        sampled = potential_values(grid, v, Some(mid))?;
                        &sampled
                    }
                };
                s.step(&mut psi, vals, config.dt);
            }
        }
        if (k + 1) % config.sample_every == 0 {
            observe((k + 1) as f64 * config.dt, &psi)?;
        }
    }
    Ok(max_res)
}

/// Propagates `psi0` over the configured horizon, keeping every
/// `sample_every`-th state.
pub fn propagate(grid: &Arc<Grid>, v: &PotentialSpec, psi0: &Field, config: &EvolutionConfig) -> Result<Trajectory> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let max_res = propagate_observed(grid, v, psi0, config, |t, psi| {
        times.push(t);
        states.push(psi.to_vec());
        Ok(())
    })?;
    Ok(Trajectory { grid: grid.clone(), potential: v.clone(), config: config.clone(), times, states, max_solver_residual: max_res })
}

/// `∫₀^T ‖⟨x⟩^{−(σ+1)}u‖²dt / ‖u₀‖²` at each horizon `T`, accumulated while
/// propagating to the largest horizon without storing states. Horizons must
/// be sample times.
pub fn decay_ratios(
    grid: &Arc<Grid>,
    v: &PotentialSpec,
    psi0: &Field,
    config: &EvolutionConfig,
    profile: &RadialProfile,
    sigma: f64,
    horizons: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let t_max = horizons.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if t_max.is_nan() || t_max <= 0.0 {
        return Err(Error::Invalid("need a positive horizon".into()));
    }
    let stride = config.dt * config.sample_every as f64;
    for &t in horizons {
        let k = t / stride;
        if (k - k.round()).abs() > 1e-9 * k.max(1.0) {
            return Err(Error::Invalid(format!("horizon {t} is not a sample time")));
        }
    }
    let config = EvolutionConfig { horizon: t_max, ..config.clone() };
    let vol = grid.cell_volume();
    let weight = bracket_weight(grid, profile, sigma + 1.0);
    let n0 = psi0.norm().powi(2);
    let (mut acc, mut last) = (0.0, None::<(f64, f64)>);
    let mut out = Vec::new();
    propagate_observed(grid, v, psi0, &config, |t, psi| {
        let value: f64 = psi.iter().zip(&weight).map(|(p, w)| p.norm_sqr() * w * w).sum::<f64>() * vol;
        if let Some((t0, v0)) = last {
            acc += 0.5 * (t - t0) * (value + v0);
        }
        last = Some((t, value));
        if horizons.iter().any(|h| (h - t).abs() <= 1e-9 * t.max(1.0)) {
            out.push((t, acc / n0));
        }
        Ok(())
    })?;
    Ok(out)
}

/// Per-sample observables of a trajectory for one multiplier.
#[derive(Clone, Debug, Serialize)]
pub struct MorawetzLedger {
    pub times: Vec<f64>,
    pub gamma_expect: Vec<f64>,
    pub commutator_expect: Vec<f64>,
    pub norm: Vec<f64>,
    pub energy: Vec<f64>,
    /// `‖⟨x⟩^{−(σ+1)}ψ(t)‖²`.
    pub decay_integrand: Vec<f64>,
    /// Trapezoid integral of `commutator_expect` up to each sample.
    pub running_integral: Vec<f64>,
    pub sup_gamma_norm: f64,
    pub initial_norm: f64,
}

impl MorawetzLedger {
    /// CSV with header `t,gamma_expect,commutator_expect,norm,energy,decay_integrand`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "gamma_expect", "commutator_expect", "norm", "energy", "decay_integrand"])?;
        for k in 0..self.times.len() {
            let row =
                [self.times[k], self.gamma_expect[k], self.commutator_expect[k], self.norm[k], self.energy[k], self.decay_integrand[k]];
            out.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        out.flush()?;
        Ok(())
    }

    /// Largest decrease of `⟨γ⟩` between consecutive samples (0 if monotone).
    pub fn largest_dip(&self) -> f64 {
        self.gamma_expect.windows(2).map(|w| (w[0] - w[1]).max(0.0)).fold(0.0, f64::max)
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.norm.iter().map(|v| (v - self.initial_norm).abs()).fold(0.0, f64::max)
    }

    pub fn max_energy_drift(&self) -> f64 {
        self.energy.iter().map(|v| (v - self.energy[0]).abs()).fold(0.0, f64::max)
    }
}

/// `⟨x⟩^{−p}` with the profile's bracket, centered at the origin.
fn bracket_weight(grid: &Grid, profile: &RadialProfile, power: f64) -> Vec<f64> {
    grid.sample(|x| profile.bracket_sq(x.iter().map(|v| v * v).sum::<f64>().sqrt()).powf(-0.5 * power))
}

fn trapezoid(times: &[f64], values: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; values.len()];
    for k in 1..values.len() {
        acc[k] = acc[k - 1] + 0.5 * (times[k] - times[k - 1]) * (values[k] + values[k - 1]);
    }
    acc
}

/// Evaluates the ledger observables; the commutator is the composition
/// `i[H_h(t), γ_h]`, for which the discrete Ehrenfest identity is exact.
pub fn morawetz_ledger(traj: &Trajectory, gamma: &MultiplierSpec, sigma: f64) -> Result<MorawetzLedger> {
    let grid = &traj.grid;
    let vol = grid.cell_volume();
    let g_op = gamma.operator(grid)?;
    let weight = bracket_weight(grid, &gamma.profile, 2.0 * (sigma + 1.0));
    let static_h = if traj.potential.is_time_dependent() { None } else { Some(traj.hamiltonian_at(0.0)?) };
    let rows: Vec<[f64; 6]> = traj
        .states
        .iter()
        .zip(&traj.times)
        .map(|(psi, &t)| {
            let h = match &static_h {
                Some(h) => h.clone(),
                None => traj.hamiltonian_at(t)?,
            };
            let gpsi = g_op.apply_vec(psi);
            let hpsi = h.apply_vec(psi);
            // ⟨ψ, i[H, γ]ψ⟩ = −2 Im⟨Hψ, γψ⟩
            let comm = -2.0 * dot(&hpsi, &gpsi).im;
            let decay: f64 = psi.iter().zip(&weight).map(|(p, w)| p.norm_sqr() * w).sum();
            Ok([
                dot(psi, &gpsi).re * vol,
                comm * vol,
                (norm_sq(psi) * vol).sqrt(),
                dot(psi, &hpsi).re * vol,
                decay * vol,
                norm(&gpsi) * vol.sqrt(),
            ])
        })
        .collect::<Result<_>>()?;
    let col = |j: usize| rows.iter().map(|r| r[j]).collect::<Vec<f64>>();
    let commutator_expect = col(1);
    Ok(MorawetzLedger {
        times: traj.times.clone(),
        gamma_expect: col(0),
        running_integral: trapezoid(&traj.times, &commutator_expect),
        commutator_expect,
        norm: col(2),
        energy: col(3),
        decay_integrand: col(4),
        sup_gamma_norm: col(5).into_iter().fold(0.0, f64::max),
        initial_norm: rows[0][2],
    })
}

/// Largest gap between the centered difference of `⟨γ⟩` and `⟨i[H, γ]⟩`
/// over interior samples.
pub fn ehrenfest_check(traj: &Trajectory, gamma: &MultiplierSpec) -> Result<f64> {
    if traj.potential.is_time_dependent() {
        return Err(Error::Potential("the Ehrenfest check takes a static potential".into()));
    }
    if traj.times.len() < 3 {
        return Err(Error::Invalid("need at least three samples".into()));
    }
    let ledger = morawetz_ledger(traj, gamma, 1.0)?;
    let (t, g, c) = (&ledger.times, &ledger.gamma_expect, &ledger.commutator_expect);
    Ok((1..t.len() - 1).map(|k| ((g[k + 1] - g[k - 1]) / (t[k + 1] - t[k - 1]) - c[k]).abs()).fold(0.0, f64::max))
}

/// `(∫⟨ψ, i[H, γ]ψ⟩dt, 2 sup‖γψ‖·‖ψ₀‖)`.
pub fn morawetz_budget(traj: &Trajectory, gamma: &MultiplierSpec) -> Result<(f64, f64)> {
    let ledger = morawetz_ledger(traj, gamma, 1.0)?;
    let lhs = *ledger.running_integral.last().expect("a trajectory has at least one sample");
    Ok((lhs, 2.0 * ledger.sup_gamma_norm * ledger.initial_norm))
}

/// Time integrals of the weighted decay functionals over a trajectory.
#[derive(Clone, Debug, Serialize)]
pub struct DecayReport {
    pub horizon: f64,
    /// `∫‖⟨x⟩^{−(σ+1)}u‖²dt`.
    pub weighted: f64,
    /// `∫‖⟨x⟩^{−(σ+1)}Q₁u‖²dt`.
    pub low_weighted: f64,
    /// `∫‖√(−Δ_h)⟨x⟩^{−σ}Q₁u‖²dt`.
    pub low_gradient: f64,
    pub initial_norm_sq: f64,
    /// `weighted / ‖u₀‖²`.
    pub ratio: f64,
    /// `(low_weighted + low_gradient) / ‖u₀‖²`.
    pub low_ratio: f64,
}

/// Decay integrals with the weight `⟨x⟩` of `profile`; `cutoff` realizes
/// `Q₁(H)` (its scale is normally 1).
pub fn decay_integrals(traj: &Trajectory, profile: &RadialProfile, sigma: f64, cutoff: &CutoffSpec) -> Result<DecayReport> {
    if traj.potential.is_time_dependent() {
        return Err(Error::Potential("decay integrals take a static potential".into()));
    }
    let grid = &traj.grid;
    let vol = grid.cell_volume();
    let h = traj.hamiltonian_at(0.0)?;
    let q = cutoff_operator(cutoff, Part::Q, &h)?;
    let lap = DiscreteOperator::laplacian(grid);
    let w_decay = bracket_weight(grid, profile, sigma + 1.0);
    let w_grad = bracket_weight(grid, profile, sigma);
    let rows: Vec<[f64; 3]> = traj
        .states
        .iter()
        .map(|psi| {
            let weighted = |w: &[f64], x: &[C64]| -> Vec<C64> { x.iter().zip(w).map(|(a, b)| a * b).collect() };
            let qpsi = q.apply_vec(psi);
            let wq = weighted(&w_grad, &qpsi);
            [norm_sq(&weighted(&w_decay, psi)) * vol, norm_sq(&weighted(&w_decay, &qpsi)) * vol, dot(&wq, &lap.apply_vec(&wq)).re * vol]
        })
        .collect();
    let integral = |j: usize| *trapezoid(&traj.times, &rows.iter().map(|r| r[j]).collect::<Vec<_>>()).last().unwrap();
    let n0 = norm_sq(&traj.states[0]) * vol;
    let (weighted, low_weighted, low_gradient) = (integral(0), integral(1), integral(2));
    Ok(DecayReport {
        horizon: *traj.times.last().unwrap(),
        weighted,
        low_weighted,
        low_gradient,
        initial_norm_sq: n0,
        ratio: weighted / n0,
        low_ratio: (low_weighted + low_gradient) / n0,
    })
}

/// Normalized Gaussian packet `exp(−|x − x₀|²/(2w²) + i k·x)`.
pub fn gaussian_packet(grid: &Arc<Grid>, center: &[f64], width: f64, momentum: &[f64]) -> Field {
    let f = Field::from_fn(grid, |x| {
        let r2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
        let phase: f64 = x.iter().zip(momentum).map(|(a, b)| a * b).sum();
        C64::from_polar((-0.5 * r2 / (width * width)).exp(), phase)
    });
    let n = f.norm();
    f.scaled(C64::new(1.0 / n, 0.0))
}
