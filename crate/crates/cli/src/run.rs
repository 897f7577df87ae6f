//! Check execution and artifact output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use commlab::cancellation::{claim_sign_sweep, general_floor_sweep, negative_region, pair_bound_sweep, SweepReport};
use commlab::certify::{certify, scan, PositivityCertificate, Verdict};
use commlab::commutator::{assemble_commutator, hamiltonian, lower_bound_form, residual_form, ResidualBound};
use commlab::evolution::{decay_integrals, ehrenfest_check, gaussian_packet, morawetz_ledger, propagate, Trajectory};
use commlab::frequency::{high_energy_certificate_with, high_energy_weight, CutoffSpec, Realization, EXACT_MAX_NODES};
use commlab::grid::{DiscreteOperator, Field, Grid, GridSpec};
use commlab::multiplier::MultiplierSpec;
use commlab::potentials::{check_axial_conditions, check_nondefinite_condition, check_time_uniformity, AxialSample};
use commlab::profile::RadialProfile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Check, Residual, ScenarioConfig, Suite};

/// One entry of the summary.
#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub name: String,
    pub kind: String,
    pub verdict: Verdict,
    pub metrics: Value,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub suite: Suite,
    pub checks: Vec<Outcome>,
}

impl Summary {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != Verdict::Fail)
    }
}

/// SHA-256 of the canonical JSON form of the configuration.
pub fn scenario_hash(cfg: &ScenarioConfig) -> String {
    let canonical = serde_json::to_vec(cfg).expect("configurations serialize");
    Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-check seed, stable under reordering of the check list.
fn check_seed(seed: u64, name: &str) -> u64 {
    let d = Sha256::digest(name.as_bytes());
    seed ^ u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension(format!("{}.tmp", path.extension().and_then(|e| e.to_str()).unwrap_or("")));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

struct Ctx<'a> {
    cfg: &'a ScenarioConfig,
    profile: RadialProfile,
    out: &'a Path,
}

impl Ctx<'_> {
    fn artifact(&self, name: &str, file: &str, bytes: &[u8], list: &mut Vec<String>) -> anyhow::Result<()> {
        let rel = format!("{name}.{file}");
        write_atomic(&self.out.join(&rel), bytes)?;
        list.push(rel);
        Ok(())
    }

    fn dump(&self, name: &str, file: &str, field: &Field, list: &mut Vec<String>) -> anyhow::Result<()> {
        let mut buf = Vec::new();
        field.write_dump(&mut buf)?;
        self.artifact(name, file, &buf, list)
    }

    fn multiplier(&self, n: Option<usize>) -> anyhow::Result<MultiplierSpec> {
        Ok(self.cfg.multiplier.build(&self.profile, n)?)
    }

    fn grid(&self, over: &Option<GridSpec>) -> anyhow::Result<Arc<Grid>> {
        Ok(self.cfg.grid_for(over).build()?)
    }
}

/// Runs the checks of `suite` in parallel and writes `summary.json`.
pub fn run_suite(cfg: &ScenarioConfig, suite: Suite, out: &Path) -> anyhow::Result<Summary> {
    fs::create_dir_all(out)?;
    let ctx = Ctx { cfg, profile: cfg.profile()?, out };
    let selected: Vec<&Check> = cfg.checks.iter().filter(|c| c.in_suite(suite)).collect();
    let checks = selected
        .par_iter()
        .map(|c| run_check(&ctx, c).map_err(|e| anyhow::anyhow!("check {}: {e}", c.name())))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let summary = Summary { scenario: cfg.name.clone(), scenario_hash: scenario_hash(cfg), seed: cfg.seed, suite, checks };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    write_atomic(&out.join("summary.json"), text.as_bytes())?;
    Ok(summary)
}

fn sweep_outcome(report: &SweepReport) -> (Verdict, Value) {
    (if report.passed() { Verdict::Pass } else { Verdict::Fail }, json!(report))
}

fn pass_if(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn residual_bound(grid: &Arc<Grid>, spec: &MultiplierSpec, residual: &Residual) -> anyhow::Result<ResidualBound> {
    Ok(match *residual {
        Residual::ScaledKinetic { c } => ResidualBound::ScaledKinetic(c),
        Residual::LowerBound { scale } => ResidualBound::Form(lower_bound_form(grid, spec, scale)?),
    })
}

fn certificate_for(
    ctx: &Ctx,
    grid: &Arc<Grid>,
    n: Option<usize>,
    residual: &Residual,
    eig: &commlab::certify::EigOptions,
) -> anyhow::Result<PositivityCertificate> {
    let spec = ctx.multiplier(n)?;
    let comm = assemble_commutator(grid, &ctx.cfg.potential, &spec, None)?;
    let form = residual_form(&comm, residual_bound(grid, &spec, residual)?)?;
    let params = json!({ "N": n.unwrap_or(ctx.cfg.multiplier.n), "residual": residual });
    Ok(certify(&form, "residual", params, eig)?)
}

fn witness_field(grid: &Arc<Grid>, cert: &PositivityCertificate) -> Option<Field> {
    cert.witness.as_ref().and_then(|w| Field::from_vec(grid, w.clone()).ok())
}

fn run_check(ctx: &Ctx, check: &Check) -> anyhow::Result<Outcome> {
    let cfg = ctx.cfg;
    let name = check.name();
    let seed = check_seed(cfg.seed, name);
    let mut artifacts = Vec::new();
    let (verdict, metrics) = match check {
        Check::PairBound { samples, tol, .. } => sweep_outcome(&pair_bound_sweep(&cfg.first_bump(), &ctx.profile, *samples, seed, *tol)?),
        Check::ClaimSign { samples, .. } => {
            sweep_outcome(&claim_sign_sweep(&ctx.profile, *samples, seed, commlab::cancellation::POINTWISE_TOL)?)
        }
        Check::GeneralFloor { half_length, samples, tol, .. } => {
            let spec = ctx.multiplier(None)?;
            let widths: Vec<f64> = cfg.grid.extent.iter().cycle().take(cfg.profile.dim).copied().collect();
            sweep_outcome(&general_floor_sweep(&cfg.potential, &spec, *half_length, &widths, *samples, seed, *tol)?)
        }
        Check::NegativeRegion { bump_index, ladder, target, grid, tol, .. } => {
            let grid = ctx.grid(grid)?;
            let mut rows = Vec::new();
            let mut last = None;
            for &n in ladder {
                let spec = ctx.multiplier(Some(n))?;
                let region = negative_region(&cfg.potential, &spec, &grid, *bump_index)?;
                rows.push(json!({ "N": n, "region": &region }));
                last = Some(region);
            }
            let last = last.expect("ladder is nonempty");
            ctx.dump(name, "region.bin", &last.to_field()?, &mut artifacts)?;
            let radii: Vec<f64> = rows.iter().map(|r| r["region"]["tube_radius"].as_f64().unwrap_or(f64::NAN)).collect();
            let margins: Vec<f64> = rows.iter().map(|r| r["region"]["floor_margin"].as_f64().unwrap_or(f64::NAN)).collect();
            let nonincreasing = radii.windows(2).all(|w| w[1] <= w[0] + 1e-12);
            let floor_ok = margins.iter().all(|m| *m >= -*tol);
            let below = last.tube_radius < *target;
            let metrics = json!({ "ladder": rows, "nonincreasing": nonincreasing, "floor_respected": floor_ok, "final_tube_radius": last.tube_radius, "target": target });
            (pass_if(nonincreasing && floor_ok && below), metrics)
        }
        Check::AxialConditions { half_length, max_radius, n_x1, n_r, n_dir, deltas, .. } => {
            let sample = AxialSample::uniform(cfg.profile.dim, *half_length, *n_x1, *max_radius, *n_r, *n_dir, seed);
            let report = check_axial_conditions(&cfg.potential, &sample, deltas)?;
            (pass_if(report.all_pass()), json!(report))
        }
        Check::TimeUniformity { times, half_length, max_radius, deltas, .. } => {
            let sample = AxialSample::uniform(cfg.profile.dim, *half_length, 41, *max_radius, 9, 8, seed);
            let report = check_time_uniformity(&cfg.potential, times, &sample, deltas)?;
            (pass_if(report.pass), json!(report))
        }
        Check::NondefiniteCondition { lambda, max_radius, samples, .. } => {
            let center = cfg.potential.radial_center().map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; cfg.profile.dim]);
            let points = ball_sample(&center, *max_radius, *samples, seed);
            let report = check_nondefinite_condition(&cfg.potential, &ctx.profile, *lambda, &points)?;
            let metrics = json!({
                "pass": report.pass,
                "min_margin": report.min_margin,
                "worst_location": report.worst_location,
                "total_weight": report.total_weight,
                "samples": report.margins.len(),
            });
            (pass_if(report.pass), metrics)
        }
        Check::Certify { residual, eig, grid, .. } => {
            let grid = ctx.grid(grid)?;
            let cert = certificate_for(ctx, &grid, None, residual, eig)?;
            if let Some(w) = witness_field(&grid, &cert) {
                ctx.dump(name, "witness.bin", &w, &mut artifacts)?;
            }
            (cert.verdict, json!(cert))
        }
        Check::Scan { ladder, residual, eig, grid, .. } => {
            let grid = ctx.grid(grid)?;
            let values: Vec<f64> = ladder.iter().map(|n| *n as f64).collect();
            let result = scan(&values, |n| {
                certificate_for(ctx, &grid, Some(n as usize), residual, eig).map_err(|e| commlab::Error::Invalid(e.to_string()))
            })?;
            let verdict = scan_verdict(&result.verdicts, result.first_pass.is_some(), result.monotone);
            let first_pass_n = result.first_pass.map(|v| v as usize);
            (verdict, json!({ "first_pass_N": first_pass_n, "scan": result }))
        }
        Check::HighEnergyScan { epsilon, multiples, realization, eig, grid, .. } => {
            let grid = ctx.grid(grid)?;
            let spec = ctx.multiplier(None)?;
            let w = high_energy_weight(&grid, &cfg.potential, &spec)?;
            let w_norm = w.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            let h = hamiltonian(&grid, &cfg.potential, None)?;
            let spectral_max = h.spectral_enclosure().map(|e| e.1);
            let h_repr = match realization {
                Realization::Exact if grid.len() <= EXACT_MAX_NODES => {
                    let basis = h.eigen_basis(EXACT_MAX_NODES)?;
                    DiscreteOperator::eigen_function(&grid, &basis, |x| x)
                }
                _ => h,
            };
            let ladder: Vec<f64> = multiples.iter().map(|m| m * w_norm.max(1.0)).collect();
            let result = scan(&ladder, |k| {
                let cutoff = CutoffSpec { scale: k, realization: realization.clone() };
                high_energy_certificate_with(&grid, &cfg.potential, &spec, *epsilon, &h_repr, &cutoff, eig)
            })?;
            let verdict = scan_verdict(&result.verdicts, result.first_pass.is_some(), result.monotone);
            (
                verdict,
                json!({ "weight_norm": w_norm, "spectral_upper_bound": spectral_max, "first_pass_K": result.first_pass, "scan": result }),
            )
        }
        Check::Evolve { evolution, packet, sigma, decay_horizons, dip_tol, norm_tol, decay_realization, grid, .. } => {
            let grid = ctx.grid(grid)?;
            let momentum = packet.momentum.clone().unwrap_or_else(|| vec![0.0; grid.dim()]);
            let psi0 = gaussian_packet(&grid, &packet.center, packet.width, &momentum);
            let mut config = evolution.clone();
            let horizon = decay_horizons.iter().copied().fold(config.horizon, f64::max);
            config.horizon = horizon;
            let traj = propagate(&grid, &cfg.potential, &psi0, &config)?;
            let gamma = ctx.multiplier(None)?;
            let ledger = morawetz_ledger(&traj, &gamma, *sigma)?;
            let mut csv = Vec::new();
            ledger.write_csv(&mut csv)?;
            ctx.artifact(name, "ledger.csv", &csv, &mut artifacts)?;
            let lhs = *ledger.running_integral.last().expect("nonempty ledger");
            let rhs = 2.0 * ledger.sup_gamma_norm * ledger.initial_norm;
            let static_v = !cfg.potential.is_time_dependent();
            let ehrenfest = if static_v { Some(ehrenfest_check(&traj, &gamma)?) } else { None };
            let mut decay = Vec::new();
            if static_v {
                let cutoff = CutoffSpec { scale: 1.0, realization: decay_realization.clone() };
                for &t in decay_horizons {
                    decay.push(decay_integrals(&truncate(&traj, t), &gamma.profile, *sigma, &cutoff)?);
                }
            }
            let norm_drift = ledger.max_norm_drift();
            let dip = ledger.largest_dip();
            let ok = norm_drift <= *norm_tol && lhs <= rhs && dip <= *dip_tol;
            let metrics = json!({
                "steps": config.steps(),
                "max_norm_drift": norm_drift,
                "max_energy_drift": ledger.max_energy_drift(),
                "largest_dip": dip,
                "max_solver_residual": traj.max_solver_residual,
                "budget_lhs": lhs,
                "budget_rhs": rhs,
                "ehrenfest_deviation": ehrenfest,
                "decay": decay,
            });
            (pass_if(ok), metrics)
        }
    };
    Ok(Outcome { name: name.to_string(), kind: check.kind().to_string(), verdict, metrics, artifacts })
}

/// Pass when some rung passes and no pass is followed by a fail; fail when a
/// rung fails after a pass or every rung fails; inconclusive otherwise.
fn scan_verdict(verdicts: &[Verdict], any_pass: bool, monotone: bool) -> Verdict {
    if !monotone || verdicts.iter().all(|v| *v == Verdict::Fail) {
        Verdict::Fail
    } else if any_pass {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    }
}

/// The trajectory restricted to `t ≤ horizon`.
fn truncate(traj: &Trajectory, horizon: f64) -> Trajectory {
    let k = traj.times.iter().take_while(|t| **t <= horizon + 1e-9).count();
    Trajectory {
        grid: traj.grid.clone(),
        potential: traj.potential.clone(),
        config: traj.config.clone(),
        times: traj.times[..k].to_vec(),
        states: traj.states[..k].to_vec(),
        max_solver_residual: traj.max_solver_residual,
    }
}

/// Points uniform in direction and in radius on `(0, r_max]` around `center`.
fn ball_sample(center: &[f64], r_max: f64, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = center.len();
    (0..samples)
        .map(|_| {
            let dir: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let r = r_max * (1.0 - rng.random::<f64>());
            center.iter().zip(&dir).map(|(c, d)| c + r * d / norm).collect()
        })
        .collect()
}

/// Resolves `--out`, the config's `output`, or `commlab-out/<name>`.
pub fn output_dir(cfg: &ScenarioConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| cfg.output.clone()).unwrap_or_else(|| {
        let stem = if cfg.name.is_empty() { "scenario" } else { &cfg.name };
        PathBuf::from("commlab-out").join(stem)
    })
}
