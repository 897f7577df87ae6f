//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! `COMMLAB_ACCEPTANCE=3,7` restricts the run to the listed criteria.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use commlab::cancellation::{claim_sign_sweep, linear_fit, log_accumulation_fit, negative_region, pair_bound_sweep};
use commlab::certify::{certify, scan, EigOptions, PositivityCertificate, ScanResult, Verdict};
use commlab::commutator::{
    assemble_commutator, composed_commutator, hamiltonian, kinetic_form, lower_bound_form, residual_form, ResidualBound,
};
use commlab::evolution::{
    decay_ratios, ehrenfest_check, gaussian_packet, morawetz_ledger, propagate, propagate_observed, EvolutionConfig, MorawetzLedger, Scheme,
};
use commlab::frequency::{high_energy_certificate_with, high_energy_weight, norm_chi_q_x, partition_defect, CutoffSpec, PowerOptions};
use commlab::grid::{Boundary, DiscreteOperator, Field, Grid, GridSpec};
use commlab::multiplier::{build_gamma_n, MultiplierSpec};
use commlab::potentials::{
    check_nondefinite_condition, nondefinite_equality_parameters, Bump, GaussianPair, MotionLaw, MovingComponent, PotentialSpec,
};
use commlab::profile::RadialProfile;
use commlab::vector::C64;
use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), Box<dyn std::error::Error>>;
type Criterion = (&'static str, fn() -> Outcome);

const BUMP: Bump = Bump { amplitude: 3.0, radius: 1.5 };

fn cube(extent: f64, points: usize) -> Arc<Grid> {
    GridSpec::cube(3, extent, points, Boundary::Dirichlet).build().expect("valid grid")
}

fn two_bump() -> PotentialSpec {
    PotentialSpec::TwoBump { b: vec![2.0, 0.0, 0.0], bumps: [BUMP; 2] }
}

fn lattice() -> PotentialSpec {
    PotentialSpec::Lattice1D { m: 2, spacing: 2.0, bump: BUMP }
}

fn axial_product() -> PotentialSpec {
    PotentialSpec::AxialProduct { factor: GaussianPair { amplitude: 3.0, offset: 2.0, width: 0.8 }, smoothing: 0.5 }
}

fn moving_bump() -> PotentialSpec {
    let component = |x: f64, phase: f64| MovingComponent {
        potential: PotentialSpec::RadialBump { center: vec![x, 0.0, 0.0], bump: BUMP },
        translation: MotionLaw::Sinusoid { offset: 0.0, amplitude: 0.25, omega: 2.0, phase },
        scaling: MotionLaw::Constant { value: 1.0 },
        translation_bound: 0.25,
        scaling_bounds: [1.0, 1.0],
    };
    PotentialSpec::TimeDependent { components: vec![component(-2.0, 0.0), component(2.0, PI / 2.0)] }
}

/// The certified presets: potential, multiplier axis and the preset's `N`.
fn presets() -> Vec<(&'static str, PotentialSpec, [f64; 3], usize)> {
    vec![
        ("two-bump", two_bump(), [2.0, 0.0, 0.0], 8),
        ("lattice", lattice(), [2.0, 0.0, 0.0], 32),
        ("axial-product", axial_product(), [1.0, 0.0, 0.0], 16),
        ("moving-bump", moving_bump(), [2.0, 0.0, 0.0], 8),
    ]
}

fn profile() -> RadialProfile {
    RadialProfile::standard()
}

/// Fourth-order central difference.
fn diff(f: impl Fn(f64) -> f64, r: f64, h: f64) -> f64 {
    (f(r - 2.0 * h) - 8.0 * f(r - h) + 8.0 * f(r + h) - f(r + 2.0 * h)) / (12.0 * h)
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn profile_exactness() -> Outcome {
    let p = profile();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut hess_err: f64 = 0.0;
    for _ in 0..100 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        let c: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
        let rho = x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let mut eig = SymmetricEigen::new(p.hessian_weight(&x, &c)?).eigenvalues.as_slice().to_vec();
        eig.sort_by(f64::total_cmp);
        let mut expected = vec![p.g_sq(rho), p.f(rho) / rho, p.f(rho) / rho];
        expected.sort_by(f64::total_cmp);
        for (a, b) in eig.iter().zip(&expected) {
            hess_err = hess_err.max(rel_err(*a, *b));
        }
    }
    let h = 1e-3;
    let mut fd_err: f64 = 0.0;
    for _ in 0..100 {
        let r = rng.random_range(0.05..8.0);
        let s = p.derivative_stack(r)?;
        let radial_lap = |d1: f64, d2: f64| d2 + 2.0 * d1 / r;
        let lap_w = |r: f64| p.derivative_stack(r).unwrap().lap_weight;
        let checks = [
            (s.dg, diff(|t| p.g(t), r, h)),
            (s.d2g, diff(|t| p.dg(t), r, h)),
            (s.lap_g, radial_lap(s.dg, s.d2g)),
            (s.f, diff(|t| p.weight(t), r, h)),
            (s.g * s.g, diff(|t| p.f(t), r, h)),
            (s.f_over_r, s.f / r),
            (s.lap_weight, radial_lap(s.f, diff(|t| p.f(t), r, h))),
            (s.bilap_weight, radial_lap(diff(lap_w, r, h), diff(|t| diff(lap_w, t, h), r, h))),
        ];
        for (a, b) in checks {
            fd_err = fd_err.max(rel_err(a, b));
        }
    }
    Ok((hess_err <= 1e-10 && fd_err <= 1e-6, format!("hessian eigenvalue error {hess_err:.1e}, finite-difference error {fd_err:.1e}")))
}

fn commutator_identity() -> Outcome {
    let spec = build_gamma_n(&profile(), 1, &[1.0, 0.0, 0.0])?;
    let mut errs = Vec::new();
    for points in [24, 48] {
        let g = cube(4.0, points);
        let psi = Field::from_fn(&g, |x| {
            let e = (-x.iter().map(|v| v * v).sum::<f64>()).exp();
            C64::new(e * (1.0 + 0.3 * x[0]), 0.2 * x[1] * e)
        });
        let assembled = kinetic_form(&g, &spec)?.apply_field(&psi)?;
        let composed = composed_commutator(&g, &PotentialSpec::Zero, &spec, None)?.apply_field(&psi)?;
        errs.push(assembled.add_scaled(C64::new(-1.0, 0.0), &composed)?.norm());
    }
    let order = (errs[0] / errs[1]).log2();
    Ok(((order - 2.0).abs() <= 0.3, format!("disagreement {:.3e} -> {:.3e}, order {order:.3}", errs[0], errs[1])))
}

fn lower_bound_positivity() -> Outcome {
    let g = cube(8.0, 48);
    let spec = build_gamma_n(&profile(), 0, &[1.0, 0.0, 0.0])?;
    let form = kinetic_form(&g, &spec)?.minus(lower_bound_form(&g, &spec, 1.0)?);
    let c = certify(&form, "lower_bound", serde_json::Value::Null, &EigOptions::default())?;
    let ok = c.estimate >= -1e-8 * c.scale && c.verdict == Verdict::Pass;
    Ok((ok, format!("min Rayleigh quotient {:.3e} (scale {:.1}, {:?})", c.estimate, c.scale, c.verdict)))
}

fn cancellation_sweeps() -> Outcome {
    let pairs = pair_bound_sweep(&BUMP, &profile(), 100_000, 2, 1e-12)?;
    let claim = claim_sign_sweep(&profile(), 10_000, 3, 1e-12)?;
    let ok = pairs.violations == 0 && claim.violations == 0;
    Ok((
        ok,
        format!(
            "pair bound {} violations / {} (worst margin {:.2e}); sign claim {} violations / {}",
            pairs.violations, pairs.samples, pairs.worst_margin, claim.violations, claim.samples
        ),
    ))
}

fn log_law() -> Outcome {
    let ns = [8, 16, 32, 64, 128];
    let mut slopes = Vec::new();
    let mut detail = Vec::new();
    let mut ok = true;
    for delta in [0.2, 0.4] {
        let probes: Vec<Vec<f64>> = [-0.5, 0.5]
            .into_iter()
            .flat_map(|x1| (0..8).map(move |k| (x1, k as f64 * PI / 4.0)))
            .map(|(x1, a)| vec![x1, delta * a.cos(), delta * a.sin()])
            .collect();
        let fit = log_accumulation_fit(&BUMP, &profile(), &[1.0, 0.0, 0.0], &ns, &probes)?;
        ok &= fit.slope > 0.0 && fit.r_squared >= 0.9;
        detail.push(format!("delta {delta}: slope {:.3} R2 {:.4}", fit.slope, fit.r_squared));
        slopes.push(fit.slope);
    }
    let ratio = slopes[1] / slopes[0];
    ok &= (ratio / 4.0 - 1.0).abs() <= 0.3;
    Ok((ok, format!("{}; slope ratio {ratio:.3} vs 4", detail.join(", "))))
}

fn tube() -> Outcome {
    let g =
        GridSpec { dim: 3, extent: vec![4.0, 2.0, 2.0], points: vec![64, 32, 32], boundary: Boundary::Dirichlet, max_nodes: 10_000_000 }
            .build()?;
    let v = two_bump();
    let mut radii = Vec::new();
    let mut floor: f64 = f64::INFINITY;
    for n in [1, 2, 4, 8, 16, 32] {
        let spec = build_gamma_n(&profile(), n, &[2.0, 0.0, 0.0])?;
        let r = negative_region(&v, &spec, &g, 1)?;
        radii.push(r.tube_radius);
        floor = floor.min(r.floor_margin);
    }
    let nonincreasing = radii.windows(2).all(|w| w[1] <= w[0]);
    let last = *radii.last().unwrap();
    let ok = nonincreasing && last < 0.5 && floor >= -1e-12;
    Ok((ok, format!("tube radii {radii:.3?}, floor margin {floor:.3e}")))
}

fn certificate(g: &Arc<Grid>, v: &PotentialSpec, axis: &[f64], n: usize) -> commlab::Result<PositivityCertificate> {
    let spec = build_gamma_n(&profile(), n, axis)?;
    let form = assemble_commutator(g, v, &spec, None)?;
    certify(&residual_form(&form, ResidualBound::ScaledKinetic(0.9))?, "scan", serde_json::json!({ "N": n }), &EigOptions::default())
}

fn scan_summary(s: &ScanResult) -> String {
    s.verdicts
        .iter()
        .zip(&s.ladder)
        .map(|(v, n)| format!("{n}:{}", if *v == Verdict::Pass { "P" } else { "F" }))
        .collect::<Vec<_>>()
        .join(" ")
}

fn certificate_scans() -> Outcome {
    let ladder = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
    let (coarse, fine) = (cube(7.0, 40), cube(7.0, 56));
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, v, axis, _) in presets().into_iter().take(3) {
        let s = scan(&ladder, |n| certificate(&coarse, &v, &axis, n as usize))?;
        let Some(first) = s.first_pass else {
            ok = false;
            detail.push(format!("{name}: no pass [{}]", scan_summary(&s)));
            continue;
        };
        ok &= s.monotone;
        // re-check the flip on the refined grid
        let k = s.ladder.iter().position(|n| *n == first).unwrap();
        let mut stable = true;
        for j in k.saturating_sub(1)..=k {
            let c = certificate(&fine, &v, &axis, s.ladder[j] as usize)?;
            stable &= c.verdict == s.verdicts[j];
        }
        ok &= stable;
        detail.push(format!("{name}: first pass N={first} [{}] refined {}", scan_summary(&s), if stable { "stable" } else { "changed" }));
    }
    Ok((ok, detail.join("; ")))
}

fn frequency_machinery() -> Outcome {
    let small = cube(2.0, 10);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let psi: Vec<C64> = (0..small.len()).map(|_| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
    let defect = partition_defect(&CutoffSpec::chebyshev(4.0, 1e-11), &DiscreteOperator::laplacian(&small), &psi)?.max(partition_defect(
        &CutoffSpec::exact(4.0),
        &DiscreteOperator::spectral_laplacian(&small),
        &psi,
    )?);
    let g =
        GridSpec { dim: 3, extent: vec![4.0, 3.0, 3.0], points: vec![32, 48, 48], boundary: Boundary::Dirichlet, max_nodes: 10_000_000 }
            .build()?;
    let deltas = [0.25, 0.5, 1.0];
    let norms = deltas
        .iter()
        .map(|d| norm_chi_q_x(*d, &CutoffSpec::exact(1.0), &g, 2.0, &PowerOptions::default()))
        .collect::<commlab::Result<Vec<f64>>>()?;
    let logs = |v: &[f64]| v.iter().map(|x| x.ln()).collect::<Vec<f64>>();
    let (_, exponent, _) = linear_fit(&logs(&deltas), &logs(&norms));
    let ok = defect <= 1e-10 && (exponent - 1.0).abs() <= 0.3;
    Ok((ok, format!("partition defect {defect:.1e}; tube norms {norms:.3?}, exponent {exponent:.3} vs 1")))
}

fn high_energy() -> Outcome {
    let g = cube(2.25, 12);
    let v = PotentialSpec::RadialBump { center: vec![0.0; 3], bump: BUMP };
    let spec = build_gamma_n(&profile(), 0, &[1.0, 0.0, 0.0])?;
    let w_norm = high_energy_weight(&g, &v, &spec)?.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let h = hamiltonian(&g, &v, None)?;
    let top = h.spectral_enclosure().map_or(f64::INFINITY, |e| e.1);
    let basis = h.eigen_basis(4096)?;
    let h_repr = DiscreteOperator::eigen_function(&g, &basis, |x| x);
    let ladder: Vec<f64> = [0.125, 0.25, 0.5, 1.0, 2.0, 4.0].iter().map(|m| m * w_norm.max(1.0)).filter(|k| *k < top).collect();
    let s = scan(&ladder, |k| high_energy_certificate_with(&g, &v, &spec, 1.0, &h_repr, &CutoffSpec::exact(k), &EigOptions::default()))?;
    let ok = s.first_pass.is_some() && s.monotone;
    Ok((ok, format!("|W| {w_norm:.2}, K ladder {:.2?} [{}], estimates [{}]", s.ladder, scan_summary(&s), sci(&s.estimates))))
}

fn sci(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(" ")
}

fn packet(g: &Arc<Grid>) -> Field {
    gaussian_packet(g, &[0.0, 0.0, 1.0], 0.8, &[0.0; 3])
}

fn cn(dt: f64, horizon: f64) -> EvolutionConfig {
    EvolutionConfig { dt, horizon, ..EvolutionConfig::default() }
}

/// Largest dip of `⟨γ⟩` relative to its range, and the ledger.
fn ledger(g: &Arc<Grid>, v: &PotentialSpec, gamma: &MultiplierSpec, dt: f64) -> commlab::Result<MorawetzLedger> {
    morawetz_ledger(&propagate(g, v, &packet(g), &cn(dt, 1.0))?, gamma, 1.0)
}

fn dynamics() -> Outcome {
    let g = cube(7.0, 40);
    let mut ok = true;
    let mut detail = Vec::new();

    let psi0 = packet(&g);
    let n0 = psi0.norm();
    let mut drift: f64 = 0.0;
    let vol = g.cell_volume();
    propagate_observed(&g, &two_bump(), &psi0, &cn(0.01, 10.0), |_, psi| {
        drift = drift.max(((psi.iter().map(|p| p.norm_sqr()).sum::<f64>() * vol).sqrt() - n0).abs());
        Ok(())
    })?;
    ok &= drift <= 1e-9;
    detail.push(format!("norm drift {drift:.1e} over 1000 steps"));

    let gamma = build_gamma_n(&profile(), 8, &[2.0, 0.0, 0.0])?;
    let devs = [0.04, 0.02, 0.01]
        .iter()
        .map(|dt| ehrenfest_check(&propagate(&g, &two_bump(), &psi0, &cn(*dt, 0.4))?, &gamma))
        .collect::<commlab::Result<Vec<f64>>>()?;
    let logs = |v: &[f64]| v.iter().map(|x| x.ln()).collect::<Vec<f64>>();
    let (_, order, _) = linear_fit(&logs(&[0.04, 0.02, 0.01]), &logs(&devs));
    ok &= (order - 2.0).abs() <= 0.3;
    detail.push(format!("Ehrenfest deviations {}, order {order:.2}", sci(&devs)));

    for (name, v, axis, n) in presets() {
        let gamma = build_gamma_n(&profile(), n, &axis)?;
        let (coarse, fine) = (ledger(&g, &v, &gamma, 0.02)?, ledger(&g, &v, &gamma, 0.01)?);
        let scale = coarse.gamma_expect.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let (d1, d2) = (coarse.largest_dip(), fine.largest_dip());
        let negligible = d1.max(d2) <= 1e-12 * scale;
        let shrinks = d1 / d2 >= 4.0 * 0.7;
        let budget = [&coarse, &fine].iter().all(|l| *l.running_integral.last().unwrap() <= 2.0 * l.sup_gamma_norm * l.initial_norm);
        ok &= (negligible || shrinks) && budget;
        detail.push(format!("{name}: dips {d1:.1e} -> {d2:.1e}, budget {}", if budget { "ok" } else { "exceeded" }));
    }

    let periodic = GridSpec::cube(3, 24.0, 128, Boundary::Periodic).build()?;
    let split = EvolutionConfig { dt: 0.05, horizon: 20.0, scheme: Scheme::StrangSplitStep, ..EvolutionConfig::default() };
    let ratios = decay_ratios(&periodic, &two_bump(), &packet(&periodic), &split, &profile(), 1.0, &[5.0, 10.0, 20.0])?;
    let r: Vec<f64> = ratios.iter().map(|p| p.1).collect();
    let bounded = r[2] <= 1.05 * r[1];
    ok &= bounded;
    detail.push(format!("decay ratios at T=5,10,20: {r:.4?}"));
    Ok((ok, detail.join("; ")))
}

fn nondefinite() -> Outcome {
    let p = profile();
    let (eps, b, c) = nondefinite_equality_parameters(&p, 0.5);
    let v = PotentialSpec::NondefiniteRadial { b, c, eps, center: vec![0.0; 3] };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sample: Vec<Vec<f64>> = (0..20_000)
        .map(|_| {
            let dir: Vec<f64> = (0..3).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            let norm = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
            let r = 10.0 * (1.0 - rng.random::<f64>());
            dir.iter().map(|d| r * d / norm).collect()
        })
        .collect();
    let report = check_nondefinite_condition(&v, &p, 0.5, &sample)?;
    let g = cube(6.0, 48);
    let spec = build_gamma_n(&p, 0, &[1.0, 0.0, 0.0])?;
    let form = assemble_commutator(&g, &v, &spec, None)?;
    let cert = certify(&form.total, "nondefinite", serde_json::Value::Null, &EigOptions::default())?;
    let ok = report.pass && report.min_margin >= 0.0 && cert.verdict == Verdict::Pass;
    Ok((
        ok,
        format!(
            "min margin {:.3e} over {} points; commutator min {:.3e} ({:?})",
            report.min_margin,
            sample.len(),
            cert.estimate,
            cert.verdict
        ),
    ))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("profile exactness", profile_exactness),
        ("discrete commutator identity", commutator_identity),
        ("single-center lower bound positivity", lower_bound_positivity),
        ("cancellation sweeps", cancellation_sweeps),
        ("logarithmic accumulation", log_law),
        ("negative-region tube", tube),
        ("certificate scans", certificate_scans),
        ("frequency machinery", frequency_machinery),
        ("high-energy certificate", high_energy),
        ("dynamics", dynamics),
        ("nondefinite condition", nondefinite),
    ];
    let only: Option<Vec<usize>> =
        std::env::var("COMMLAB_ACCEPTANCE").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let start = Instant::now();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        if only.as_ref().is_some_and(|o| !o.contains(&(k + 1))) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = run().unwrap_or_else(|e| (false, format!("error: {e}")));
        failed += usize::from(!pass);
        println!("{} {:>2} {name}: {detail} ({:.1} s)", if pass { "PASS" } else { "FAIL" }, k + 1, t.elapsed().as_secs_f64());
    }
    println!("acceptance: {failed} failed, {:.0} s total", start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
