//! Positivity certificates for symmetric discrete forms: the smallest
//! eigenvalue by preconditioned block LOBPCG, the pass/fail/inconclusive
//! verdict against a relative floor, and ladder scans for thresholds.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Boundary, DiscreteOperator, EigenBasis, LaplacianSymbol, SpectralBasis, SpectralOp};
use crate::vector::{dot, norm, random_complex, random_real, rayleigh, C64};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Default relative floor: a form passes when its smallest eigenvalue is at
/// least `−floor·scale`.
pub const DEFAULT_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EigOptions {
    /// Block size.
    pub block: usize,
    pub max_iter: usize,
    /// Residual tolerance relative to the scale.
    pub tol: f64,
    pub seed: u64,
    /// Use the weighted inverse-Laplacian preconditioner when the form's
    /// diagonal is available.
    pub precondition: bool,
    /// Relative floor of the verdict.
    pub floor: f64,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self { block: 4, max_iter: 400, tol: 1e-7, seed: 7, precondition: true, floor: DEFAULT_FLOOR }
    }
}

/// Estimated bottom of the spectrum.
#[derive(Clone, Debug)]
pub struct MinEig {
    /// Rayleigh quotient of the witness: an upper bound for the smallest eigenvalue.
    pub estimate: f64,
    /// `‖Aw − θw‖` for the unit witness `w`.
    pub residual: f64,
    pub witness: Vec<C64>,
    pub iterations: usize,
    pub converged: bool,
    /// Scale of the form (largest diagonal magnitude).
    pub scale: f64,
}

fn form_scale(form: &DiscreteOperator, seed: u64) -> f64 {
    if let Some(s) = form.max_abs_diagonal() {
        if s > 0.0 {
            return s;
        }
    }
    // few steps of power iteration on |A|
    let mut x = random_real(form.grid().len(), seed ^ 0x5eed);
    let mut est = 0.0;
    for _ in 0..30 {
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
        let y = form.apply_vec(&x);
        est = norm(&y);
        x = y;
        if est == 0.0 {
            break;
        }
    }
    est
}

/// `W^{-1/2}(−Δ_h + s)^{-1}W^{-1/2}`, with `W` the form's diagonal measured in
/// units of the Laplacian diagonal.
struct Preconditioner {
    inverse: SpectralOp,
    scale: Vec<f64>,
}

impl Preconditioner {
    fn new(form: &DiscreteOperator) -> Option<Self> {
        let grid = form.grid();
        let diag = form.diagonal_entries()?;
        let basis = SpectralBasis::new(grid);
        let symbol = basis.laplacian_symbol(LaplacianSymbol::FiniteDifference);
        let shift = match grid.boundary() {
            Boundary::Dirichlet => symbol.iter().copied().fold(f64::INFINITY, f64::min),
            Boundary::Periodic => grid.spacing().iter().zip(&grid.spec().extent).map(|(_, l)| (std::f64::consts::PI / l).powi(2)).sum(),
        };
        let inverse = SpectralOp::from_symbol(basis, symbol.iter().map(|l| 1.0 / (l + shift)).collect());
        let lap_diag: f64 = grid.spacing().iter().map(|h| 2.0 / (h * h)).sum();
        let top = diag.iter().fold(0.0, |m: f64, v| m.max(v.abs())) / lap_diag;
        let floor = 1e-3 * top.max(f64::MIN_POSITIVE);
        let scale = diag.iter().map(|d| 1.0 / (d / lap_diag).max(floor).sqrt()).collect();
        Some(Self { inverse, scale })
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let t: Vec<C64> = x.iter().zip(&self.scale).map(|(v, s)| v * s).collect();
        self.inverse.apply(&t, y);
        y.iter_mut().zip(&self.scale).for_each(|(v, s)| *v *= s);
    }
}

/// Rayleigh–Ritz on the span of `basis` (with images `images`): returns the
/// coefficient matrix of the `k` lowest Ritz vectors and their values.
fn rayleigh_ritz(basis: &[Vec<C64>], images: &[Vec<C64>], k: usize) -> Result<(DMatrix<C64>, Vec<f64>)> {
    let m = basis.len();
    let gram = DMatrix::from_fn(m, m, |i, j| dot(&basis[i], &basis[j]));
    let proj = DMatrix::from_fn(m, m, |i, j| dot(&basis[i], &images[j]));
    let gram = (&gram + gram.adjoint()) * C64::new(0.5, 0.0);
    let proj = (&proj + proj.adjoint()) * C64::new(0.5, 0.0);
    // orthonormalize through the Gram eigenbasis, dropping dependent directions
    let ge = SymmetricEigen::new(gram);
    let top = ge.eigenvalues.iter().fold(0.0, |a: f64, b| a.max(*b));
    let keep: Vec<usize> = (0..m).filter(|&i| ge.eigenvalues[i] > 1e-13 * top).collect();
    if keep.len() < k {
        return Err(Error::Solver("search space collapsed".into()));
    }
    let t = DMatrix::from_fn(m, keep.len(), |i, j| ge.eigenvectors[(i, keep[j])] / ge.eigenvalues[keep[j]].sqrt());
    let reduced = t.adjoint() * proj * &t;
    let reduced = (&reduced + reduced.adjoint()) * C64::new(0.5, 0.0);
    let re = SymmetricEigen::new(reduced);
    let mut order: Vec<usize> = (0..keep.len()).collect();
    order.sort_by(|a, b| re.eigenvalues[*a].total_cmp(&re.eigenvalues[*b]));
    let y = DMatrix::from_fn(keep.len(), k, |i, j| re.eigenvectors[(i, order[j])]);
    let values = order[..k].iter().map(|&i| re.eigenvalues[i]).collect();
    Ok((t * y, values))
}

fn combine(vectors: &[Vec<C64>], coeff: &DMatrix<C64>, rows: std::ops::Range<usize>, col: usize) -> Vec<C64> {
    let len = vectors[0].len();
    let mut out = vec![ZERO; len];
    for (r, v) in rows.clone().zip(&vectors[rows.start..rows.end]) {
        let c = coeff[(r, col)];
        if c != ZERO {
            out.par_iter_mut().zip(v.par_iter()).for_each(|(o, x)| *o += c * x);
        }
    }
    out
}

/// Smallest eigenvalue of a Hermitian form.
pub fn min_eig(form: &DiscreteOperator, opts: &EigOptions) -> Result<MinEig> {
    let len = form.grid().len();
    let k = opts.block.clamp(1, len);
    let scale = form_scale(form, opts.seed);
    if scale == 0.0 {
        let mut w = vec![ZERO; len];
        w[0] = C64::new(1.0, 0.0);
        return Ok(MinEig { estimate: 0.0, residual: 0.0, witness: w, iterations: 0, converged: true, scale: 0.0 });
    }
    let real = form.is_real();
    let pre = if opts.precondition { Preconditioner::new(form) } else { None };
    let start = |s: u64| if real { random_real(len, s) } else { random_complex(len, s) };
    let mut x: Vec<Vec<C64>> = (0..k as u64).map(|i| start(opts.seed.wrapping_add(i))).collect();
    let mut ax: Vec<Vec<C64>> = x.iter().map(|v| form.apply_vec(v)).collect();
    let (c, mut theta) = rayleigh_ritz(&x, &ax, k)?;
    let all: Vec<usize> = (0..k).collect();
    let (nx, nax): (Vec<_>, Vec<_>) = all.iter().map(|&j| (combine(&x, &c, 0..k, j), combine(&ax, &c, 0..k, j))).unzip();
    x = nx;
    ax = nax;
    let mut p: Vec<Vec<C64>> = Vec::new();
    let mut ap: Vec<Vec<C64>> = Vec::new();
    let tol = opts.tol * scale;
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..opts.max_iter {
        iterations = it + 1;
        let r: Vec<Vec<C64>> = (0..k).map(|j| ax[j].iter().zip(&x[j]).map(|(a, v)| a - v * theta[j]).collect()).collect();
        if norm(&r[0]) <= tol {
            converged = true;
            break;
        }
        let mut w: Vec<Vec<C64>> = r
            .iter()
            .map(|rj| match &pre {
                Some(t) => {
                    let mut out = vec![ZERO; len];
                    t.apply(rj, &mut out);
                    out
                }
                None => rj.clone(),
            })
            .collect();
        for wj in w.iter_mut() {
            for xi in &x {
                let c = dot(xi, wj);
                wj.par_iter_mut().zip(xi.par_iter()).for_each(|(a, b)| *a -= c * b);
            }
            let nw = norm(wj);
            if nw > 0.0 {
                wj.iter_mut().for_each(|v| *v /= nw);
            }
        }
        let aw: Vec<Vec<C64>> = w.iter().map(|v| form.apply_vec(v)).collect();
        let mut basis: Vec<Vec<C64>> = x.clone();
        let mut images = ax.clone();
        basis.extend(w);
        images.extend(aw);
        basis.extend(p.iter().cloned());
        images.extend(ap.iter().cloned());
        let (c, values) = match rayleigh_ritz(&basis, &images, k) {
            Ok(v) => v,
            Err(_) if !p.is_empty() => {
                // restart without the momentum directions
                basis.truncate(2 * k);
                images.truncate(2 * k);
                rayleigh_ritz(&basis, &images, k)?
            }
            Err(e) => return Err(e),
        };
        let m = basis.len();
        let new_x: Vec<Vec<C64>> = (0..k).map(|j| combine(&basis, &c, 0..m, j)).collect();
        let new_ax: Vec<Vec<C64>> = (0..k).map(|j| combine(&images, &c, 0..m, j)).collect();
        p = (0..k).map(|j| combine(&basis, &c, k..m, j)).collect();
        ap = (0..k).map(|j| combine(&images, &c, k..m, j)).collect();
        x = new_x;
        ax = new_ax;
        theta = values;
    }
    let mut w = x.swap_remove(0);
    let nw = norm(&w);
    w.iter_mut().for_each(|v| *v /= nw);
    let aw = form.apply_vec(&w);
    let estimate = rayleigh(&w, &aw);
    let residual = aw.iter().zip(&w).map(|(a, v)| (a - v * estimate).norm_sqr()).sum::<f64>().sqrt();
    Ok(MinEig { estimate, residual, witness: w, iterations, converged: converged || residual <= tol, scale })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Outcome of a positivity test.
#[derive(Clone, Debug, Serialize)]
pub struct PositivityCertificate {
    pub form: String,
    pub parameters: serde_json::Value,
    pub estimate: f64,
    pub residual: f64,
    pub scale: f64,
    /// Absolute floor `floor·scale`.
    pub floor: f64,
    pub iterations: usize,
    pub verdict: Verdict,
    #[serde(skip)]
    pub witness: Option<Vec<C64>>,
}

impl PositivityCertificate {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Certifies `form ≥ −floor·scale`. A Rayleigh quotient below the floor is a
/// failure with witness regardless of convergence; an unconverged solve
/// above the floor is inconclusive.
pub fn certify(form: &DiscreteOperator, name: &str, parameters: serde_json::Value, opts: &EigOptions) -> Result<PositivityCertificate> {
    let m = min_eig(form, opts)?;
    let floor = opts.floor * m.scale;
    let verdict = if m.estimate < -floor {
        Verdict::Fail
    } else if m.converged {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    };
    Ok(PositivityCertificate {
        form: name.to_string(),
        parameters,
        estimate: m.estimate,
        residual: m.residual,
        scale: m.scale,
        floor,
        iterations: m.iterations,
        verdict,
        witness: (verdict == Verdict::Fail).then_some(m.witness),
    })
}

/// Certifies `D Uᵀ A U D ≥ 0` exactly, where `U` holds the eigenvectors of
/// `basis` with `weights[k] ≠ 0` and `D = diag(weights)`: the sandwich
/// `φ(B) A φ(B)` with `B` diagonalized by `basis`, compressed to the range of
/// `φ(B)`. The smallest eigenvalue comes from a dense solve, so the verdict
/// is never inconclusive; the scale is the largest diagonal magnitude.
pub fn certify_compressed(
    form: &DiscreteOperator,
    basis: &EigenBasis,
    weights: &[f64],
    name: &str,
    parameters: serde_json::Value,
    opts: &EigOptions,
) -> Result<PositivityCertificate> {
    let len = form.grid().len();
    if basis.vectors.nrows() != len || weights.len() != basis.values.len() {
        return Err(Error::GridMismatch);
    }
    if !form.is_real() {
        return Err(Error::Invalid("compressed certificates take real forms".into()));
    }
    let keep: Vec<usize> = (0..weights.len()).filter(|&k| weights[k] != 0.0).collect();
    let m = keep.len();
    let params = parameters;
    if m == 0 {
        return Ok(PositivityCertificate {
            form: name.to_string(),
            parameters: params,
            estimate: 0.0,
            residual: 0.0,
            scale: 0.0,
            floor: 0.0,
            iterations: 0,
            verdict: Verdict::Pass,
            witness: None,
        });
    }
    let u = DMatrix::from_fn(len, m, |i, j| basis.vectors[(i, keep[j])]);
    let columns: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let col: Vec<C64> = u.column(j).iter().map(|v| C64::new(*v, 0.0)).collect();
            form.apply_vec(&col).into_iter().map(|v| v.re).collect()
        })
        .collect();
    let au = DMatrix::from_fn(len, m, |i, j| columns[j][i]);
    let mut b = u.tr_mul(&au);
    for j in 0..m {
        for i in 0..m {
            b[(i, j)] *= weights[keep[i]] * weights[keep[j]];
        }
    }
    let b = (&b + b.transpose()) * 0.5;
    let scale = (0..m).map(|i| b[(i, i)].abs()).fold(0.0, f64::max);
    let eig = SymmetricEigen::new(b);
    let (kmin, estimate) =
        eig.eigenvalues.iter().enumerate().fold((0, f64::INFINITY), |acc, (k, v)| if *v < acc.1 { (k, *v) } else { acc });
    let floor = opts.floor * scale;
    let verdict = if estimate < -floor { Verdict::Fail } else { Verdict::Pass };
    let witness = (verdict == Verdict::Fail).then(|| {
        let w = &u * eig.eigenvectors.column(kmin);
        w.iter().map(|v| C64::new(*v, 0.0)).collect()
    });
    Ok(PositivityCertificate {
        form: name.to_string(),
        parameters: params,
        estimate,
        residual: 0.0,
        scale,
        floor,
        iterations: 1,
        verdict,
        witness,
    })
}

/// Verdicts along an increasing parameter ladder.
#[derive(Clone, Debug, Serialize)]
pub struct ScanResult {
    pub ladder: Vec<f64>,
    pub verdicts: Vec<Verdict>,
    pub estimates: Vec<f64>,
    pub first_pass: Option<f64>,
    /// True when no pass is followed by a fail.
    pub monotone: bool,
}

/// Runs `rung` at every ladder value.
pub fn scan<F>(ladder: &[f64], rung: F) -> Result<ScanResult>
where
    F: Fn(f64) -> Result<PositivityCertificate> + Sync,
{
    if ladder.is_empty() {
        return Err(Error::Invalid("scan ladder is empty".into()));
    }
    if ladder.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid("scan ladder must be strictly increasing".into()));
    }
    let certs: Vec<PositivityCertificate> = ladder.par_iter().map(|&v| rung(v)).collect::<Result<_>>()?;
    let verdicts: Vec<Verdict> = certs.iter().map(|c| c.verdict).collect();
    let first = verdicts.iter().position(|v| *v == Verdict::Pass);
    let monotone = match first {
        Some(i) => !verdicts[i..].contains(&Verdict::Fail),
        None => true,
    };
    Ok(ScanResult {
        ladder: ladder.to_vec(),
        estimates: certs.iter().map(|c| c.estimate).collect(),
        first_pass: first.map(|i| ladder[i]),
        verdicts,
        monotone,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn shifted_diagonal() {
        let g = GridSpec::cube(3, 1.0, 9, Boundary::Dirichlet).build().unwrap();
        let values: Vec<f64> = (0..g.len()).map(|i| 1.0 + i as f64 - 0.5).collect();
        let op = DiscreteOperator::diagonal(&g, values);
        let m = min_eig(&op, &EigOptions { precondition: false, ..Default::default() }).unwrap();
        assert!((m.estimate - 0.5).abs() < 1e-6, "{m:?}");
    }

    #[test]
    fn indefinite_diagonal_fails_with_basis_witness() {
        let g = GridSpec::cube(3, 1.0, 7, Boundary::Dirichlet).build().unwrap();
        let mut values = vec![1.0; g.len()];
        values[17] = -1.0;
        let op = DiscreteOperator::diagonal(&g, values);
        let c = certify(&op, "indefinite", serde_json::Value::Null, &EigOptions::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Fail);
        let w = c.witness.unwrap();
        let peak = w.iter().enumerate().max_by(|a, b| a.1.norm().total_cmp(&b.1.norm())).unwrap().0;
        assert_eq!(peak, 17);
    }

    #[test]
    fn laplacian_bottom_matches_symbol() {
        let g = GridSpec::cube(3, 2.0, 16, Boundary::Dirichlet).build().unwrap();
        let op = DiscreteOperator::laplacian(&g);
        let m = min_eig(&op, &EigOptions::default()).unwrap();
        let h = g.spacing()[0];
        let s = (std::f64::consts::PI / 32.0).sin();
        let expected = 3.0 * 4.0 * s * s / (h * h);
        assert!(m.converged);
        assert!((m.estimate - expected).abs() < 1e-8 * expected, "{} vs {expected}", m.estimate);
    }

    #[test]
    fn compressed_sees_only_the_weighted_range() {
        let g = GridSpec::cube(3, 1.0, 5, Boundary::Dirichlet).build().unwrap();
        let diag: Vec<f64> = (0..g.len()).map(|i| i as f64 - 3.5).collect();
        let op = DiscreteOperator::diagonal(&g, diag.clone());
        let basis = DiscreteOperator::diagonal(&g, diag).eigen_basis(64).unwrap();
        let mut w: Vec<f64> = vec![1.0; g.len()];
        let c = certify_compressed(&op, &basis, &w, "toy", serde_json::Value::Null, &EigOptions::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Fail);
        assert!((c.estimate + 3.5).abs() < 1e-12);
        for (k, v) in basis.values.iter().enumerate() {
            if *v < 0.0 {
                w[k] = 0.0;
            }
        }
        let c = certify_compressed(&op, &basis, &w, "toy", serde_json::Value::Null, &EigOptions::default()).unwrap();
        assert_eq!(c.verdict, Verdict::Pass);
        assert!((c.estimate - 0.5).abs() < 1e-12);
    }

    #[test]
    fn scan_detects_reversion() {
        let g = GridSpec::cube(3, 1.0, 5, Boundary::Dirichlet).build().unwrap();
        let r = scan(&[1.0, 2.0, 3.0], |v| {
            let shift = if v == 2.0 { 1.0 } else { -1.0 };
            let op = DiscreteOperator::diagonal(&g, vec![shift; g.len()]);
            certify(&op, "toy", serde_json::Value::Null, &EigOptions::default())
        })
        .unwrap();
        assert_eq!(r.first_pass, Some(2.0));
        assert!(!r.monotone);
        assert!(scan(&[2.0, 1.0], |_| unreachable!()).is_err());
    }
}
