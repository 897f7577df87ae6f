//! Radial seed of the multipliers.
//!
//! For a scale `a > 0`, decay exponent `σ > 1/2` and dimension `n ≥ 3`:
//!
//! * `g(r) = (1 + a r²)^(−σ/2)`,
//! * `f(r) = ∫₀ʳ g(s)² ds`, bounded by `f(∞) = M_σ/√a` with
//!   `M_σ = ∫₀^∞ (1 + s²)^(−σ) ds`,
//! * the weight `F(r) = ∫₀ʳ f(s) ds`, whose gradient `f(ρ)(x−c)/ρ` drives the
//!   multiplier centered at `c`.
//!
//! Everything radial is evaluated in closed form except `f` for `σ ≠ 1`, which
//! goes through adaptive quadrature (user-facing calls) or a cubic Hermite
//! table built from it (hot loops).

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::integrate;

const QUAD_TOL: f64 = 1e-13;
const QUAD_SEGMENTS: usize = 4000;
const TABLE_INTERVALS: usize = 4096;
/// Below this radius `f(ρ)/ρ` switches to its Taylor polynomial.
const TAYLOR_RADIUS: f64 = 1e-6;
/// Below this value of `aρ²` the difference `f/ρ − g²` is summed as a series.
const SERIES_ARGUMENT: f64 = 0.01;

/// Parameters of a [`RadialProfile`] as they appear in configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileParams {
    pub a: f64,
    pub sigma: f64,
    pub dim: usize,
}

impl Default for ProfileParams {
    fn default() -> Self {
        Self { a: 1.0, sigma: 1.0, dim: 3 }
    }
}

/// Cubic Hermite table of `√a·f` in the angle `θ = atan(√a r)`.
#[derive(Debug)]
struct AngleTable {
    step: f64,
    upper: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl AngleTable {
    fn eval(&self, theta: f64) -> f64 {
        let u = theta / self.step;
        let i = (u.floor() as usize).min(self.values.len() - 2);
        let t = u - i as f64;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * self.step, self.slopes[i + 1] * self.step);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * m1
    }
}

/// The radial profile `(a, σ, n)` together with the cached constant `M_σ`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "ProfileParams", into = "ProfileParams")]
pub struct RadialProfile {
    a: f64,
    sigma: f64,
    dim: usize,
    m_sigma: f64,
    table: Option<Arc<AngleTable>>,
}

impl PartialEq for RadialProfile {
    fn eq(&self, other: &Self) -> bool {
        self.a == other.a && self.sigma == other.sigma && self.dim == other.dim
    }
}

impl TryFrom<ProfileParams> for RadialProfile {
    type Error = Error;
    fn try_from(p: ProfileParams) -> Result<Self> {
        RadialProfile::new(p.a, p.sigma, p.dim)
    }
}

impl From<RadialProfile> for ProfileParams {
    fn from(p: RadialProfile) -> Self {
        ProfileParams { a: p.a, sigma: p.sigma, dim: p.dim }
    }
}

/// All radial quantities at one radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProfileStack {
    pub g: f64,
    /// g′(r)
    pub dg: f64,
    /// g″(r)
    pub d2g: f64,
    /// Δg as a radial function on ℝⁿ
    pub lap_g: f64,
    pub f: f64,
    /// the weight F(r)
    pub weight: f64,
    pub f_over_r: f64,
    /// ΔF = (n−1) f/r + g²
    pub lap_weight: f64,
    /// Δ²F
    pub bilap_weight: f64,
}

impl RadialProfile {
    pub fn new(a: f64, sigma: f64, dim: usize) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Domain(format!("profile scale a must be positive, got {a}")));
        }
        if !(sigma > 0.5 && sigma.is_finite()) {
            return Err(Error::Domain(format!("decay exponent sigma must exceed 1/2, got {sigma}")));
        }
        if dim < 3 {
            return Err(Error::Domain(format!("dimension must be at least 3, got {dim}")));
        }
        let m_sigma = if sigma == 1.0 { std::f64::consts::FRAC_PI_2 } else { angular_tail(sigma, std::f64::consts::FRAC_PI_2)? };
        let mut profile = Self { a, sigma, dim, m_sigma, table: None };
        if sigma != 1.0 {
            profile.table = Some(Arc::new(profile.build_table()?));
        }
        Ok(profile)
    }

    /// Default seed `a = 1`, `σ = 1`, `n = 3`.
    pub fn standard() -> Self {
        Self::new(1.0, 1.0, 3).expect("standard profile parameters are valid")
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn params(&self) -> ProfileParams {
        ProfileParams { a: self.a, sigma: self.sigma, dim: self.dim }
    }

    /// `M_σ = ∫₀^∞ (1+s²)^(−σ) ds`.
    pub fn m_sigma(&self) -> f64 {
        self.m_sigma
    }

    /// `f(∞) = M_σ/√a`, the uniform bound on the multiplier slope.
    pub fn f_inf(&self) -> f64 {
        self.m_sigma / self.a.sqrt()
    }

    /// Admissible window `1/2 < σ < 4(n−2)²` of the positivity results.
    pub fn in_positivity_window(&self) -> bool {
        let n2 = (self.dim as f64 - 2.0).powi(2);
        self.sigma > 0.5 && self.sigma < 4.0 * n2
    }

    /// Coefficient `4 − σ/(n−2)²` of the lower-bound form.
    pub fn lower_bound_weight(&self) -> f64 {
        4.0 - self.sigma / (self.dim as f64 - 2.0).powi(2)
    }

    /// `⟨x⟩² = 1 + a r²`.
    #[inline]
    pub fn bracket_sq(&self, r: f64) -> f64 {
        1.0 + self.a * r * r
    }

    #[inline]
    pub fn g(&self, r: f64) -> f64 {
        self.bracket_sq(r).powf(-0.5 * self.sigma)
    }

    #[inline]
    pub fn g_sq(&self, r: f64) -> f64 {
        self.bracket_sq(r).powf(-self.sigma)
    }

    pub fn eval_g(&self, r: f64) -> Result<f64> {
        check_radius(r)?;
        Ok(self.g(r))
    }

    /// `f(r)` for finite `r ≥ 0`; uses the closed form or the Hermite table.
    #[inline]
    pub fn f(&self, r: f64) -> f64 {
        let s = self.a.sqrt();
        match &self.table {
            None => (s * r).atan() / s,
            Some(table) => {
                let theta = (s * r).atan();
                if theta <= table.upper {
                    table.eval(theta) / s
                } else {
                    self.f_by_quadrature(r).unwrap_or(self.f_inf())
                }
            }
        }
    }

    /// `f(r)` to absolute accuracy 1e−12; `r = +∞` returns `M_σ/√a`.
    pub fn eval_f(&self, r: f64) -> Result<f64> {
        if r == f64::INFINITY {
            return Ok(self.f_inf());
        }
        check_radius(r)?;
        if self.sigma == 1.0 {
            let s = self.a.sqrt();
            Ok((s * r).atan() / s)
        } else {
            self.f_by_quadrature(r)
        }
    }

    fn f_by_quadrature(&self, r: f64) -> Result<f64> {
        let s = self.a.sqrt();
        let theta = (s * r).atan();
        let p = 2.0 * self.sigma - 2.0;
        let v = if theta <= std::f64::consts::FRAC_PI_4 {
            integrate(|t| t.cos().powf(p), 0.0, theta, QUAD_TOL, QUAD_SEGMENTS)?.value
        } else {
            self.m_sigma - angular_tail(self.sigma, std::f64::consts::FRAC_PI_2 - theta)?
        };
        Ok(v / s)
    }

    fn build_table(&self) -> Result<AngleTable> {
        let p = 2.0 * self.sigma - 2.0;
        // For σ < 1 the angular integrand blows up at π/2; stop short of it.
        let upper = if self.sigma >= 1.0 { std::f64::consts::FRAC_PI_2 } else { std::f64::consts::FRAC_PI_2 - 0.1 };
        let step = upper / TABLE_INTERVALS as f64;
        let mut values = Vec::with_capacity(TABLE_INTERVALS + 1);
        let mut acc = 0.0;
        values.push(0.0);
        for i in 0..TABLE_INTERVALS {
            let lo = i as f64 * step;
            acc += integrate(|t| t.cos().powf(p), lo, lo + step, 1e-16, 64)
                .or_else(|_| integrate(|t| t.cos().powf(p), lo, lo + step, 1e-14, 4000))?
                .value;
            values.push(acc);
        }
        let slopes = (0..=TABLE_INTERVALS)
            .map(|i| {
                let c = (i as f64 * step).cos();
                if c > 0.0 {
                    c.powf(p)
                } else {
                    0.0
                }
            })
            .collect();
        Ok(AngleTable { step, upper, values, slopes })
    }

    /// The weight `F(r) = ∫₀ʳ f`.
    pub fn weight(&self, r: f64) -> f64 {
        let x = self.bracket_sq(r);
        let tail = if self.sigma == 1.0 {
            x.ln() / (2.0 * self.a)
        } else {
            (x.powf(1.0 - self.sigma) - 1.0) / (2.0 * self.a * (1.0 - self.sigma))
        };
        r * self.f(r) - tail
    }

    /// `f(ρ)/ρ`, continuous at 0 with value 1.
    #[inline]
    pub fn f_over_r(&self, r: f64) -> f64 {
        if r < TAYLOR_RADIUS {
            let u = self.a * r * r;
            let s = self.sigma;
            1.0 - s * u / 3.0 + s * (s + 1.0) * u * u / 10.0
        } else {
            self.f(r) / r
        }
    }

    /// `f(ρ)/ρ − g(ρ)²`, nonnegative, summed as a power series near 0.
    pub fn transverse_gap(&self, r: f64) -> f64 {
        let u = self.a * r * r;
        if u < SERIES_ARGUMENT {
            // f/ρ − g² = −Σ_{k≥1} C(−σ,k) (2k/(2k+1)) u^k
            let mut binom = 1.0;
            let mut pow = 1.0;
            let mut sum = 0.0;
            for k in 1..60 {
                let kf = k as f64;
                binom *= (-self.sigma - kf + 1.0) / kf;
                pow *= u;
                let term = -binom * pow * 2.0 * kf / (2.0 * kf + 1.0);
                sum += term;
                if term.abs() <= 1e-18 * sum.abs() {
                    break;
                }
            }
            sum
        } else {
            self.f_over_r(r) - self.g_sq(r)
        }
    }

    /// `g′(r)`.
    pub fn dg(&self, r: f64) -> f64 {
        -self.a * self.sigma * r * self.bracket_sq(r).powf(-0.5 * self.sigma - 1.0)
    }

    /// `g″(r)`.
    pub fn d2g(&self, r: f64) -> f64 {
        let (a, s) = (self.a, self.sigma);
        let x = self.bracket_sq(r);
        -a * s * x.powf(-0.5 * s - 1.0) + a * a * s * (s + 2.0) * r * r * x.powf(-0.5 * s - 2.0)
    }

    /// `Δg` of the radial function `x ↦ g(|x|)` on ℝⁿ.
    pub fn lap_g(&self, r: f64) -> f64 {
        let (a, s, n) = (self.a, self.sigma, self.dim as f64);
        let x = self.bracket_sq(r);
        -n * a * s * x.powf(-0.5 * s - 1.0) + a * a * s * (s + 2.0) * r * r * x.powf(-0.5 * s - 2.0)
    }

    /// `ΔF = (n−1) f/r + g²`.
    pub fn lap_weight(&self, r: f64) -> f64 {
        (self.dim as f64 - 1.0) * self.f_over_r(r) + self.g_sq(r)
    }

    /// `−Δ²F(ρ)`, including the removable point `ρ = 0`.
    pub fn neg_bilap_weight(&self, r: f64) -> f64 {
        let (a, s, n) = (self.a, self.sigma, self.dim as f64);
        let x = self.bracket_sq(r);
        let first = if self.dim == 3 {
            0.0
        } else if r == 0.0 {
            (n - 1.0) * (n - 3.0) * 2.0 * a * s / 3.0
        } else {
            (n - 1.0) * (n - 3.0) / (r * r) * self.transverse_gap(r)
        };
        first + a * s * (4.0 * n - 2.0) * x.powf(-s - 1.0) - 4.0 * a * a * s * (s + 1.0) * r * r * x.powf(-s - 2.0)
    }

    /// `−Δ²F(ρ)` for `ρ > 0`.
    pub fn bilaplacian_term(&self, rho: f64) -> Result<f64> {
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::Domain(format!("bilaplacian radius must be positive, got {rho}")));
        }
        Ok(self.neg_bilap_weight(rho))
    }

    /// Potential-free diagonal of the kinetic commutator split:
    /// `4 g Δg − Δ²F`.
    pub fn kinetic_remainder(&self, r: f64) -> f64 {
        4.0 * self.g(r) * self.lap_g(r) + self.neg_bilap_weight(r)
    }

    pub fn derivative_stack(&self, r: f64) -> Result<ProfileStack> {
        check_radius(r)?;
        Ok(ProfileStack {
            g: self.g(r),
            dg: self.dg(r),
            d2g: self.d2g(r),
            lap_g: self.lap_g(r),
            f: self.f(r),
            weight: self.weight(r),
            f_over_r: self.f_over_r(r),
            lap_weight: self.lap_weight(r),
            bilap_weight: -self.neg_bilap_weight(r),
        })
    }

    /// Gradient of the weight centered at `c`, written into `out`:
    /// `f(ρ)(x−c)/ρ`, zero at `x = c`.
    pub fn grad_weight(&self, x: &[f64], c: &[f64], out: &mut [f64]) {
        let rho = dist(x, c);
        if rho == 0.0 {
            out.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let s = self.f(rho) / rho;
        for ((o, xi), ci) in out.iter_mut().zip(x).zip(c) {
            *o = s * (xi - ci);
        }
    }

    /// Hessian of the weight centered at `c`:
    /// `(f/ρ) δ_jk + (g² − f/ρ) x̂_j x̂_k`, and `g(0)² I` at `x = c`.
    pub fn hessian_weight(&self, x: &[f64], c: &[f64]) -> Result<DMatrix<f64>> {
        if x.len() != self.dim || c.len() != self.dim {
            return Err(Error::Domain(format!("points must have dimension {}, got {} and {}", self.dim, x.len(), c.len())));
        }
        let n = self.dim;
        let rho = dist(x, c);
        if rho == 0.0 {
            return Ok(DMatrix::identity(n, n) * self.g_sq(0.0));
        }
        let fr = self.f_over_r(rho);
        let gap = self.g_sq(rho) - fr;
        Ok(DMatrix::from_fn(n, n, |j, k| {
            let delta = if j == k { fr } else { 0.0 };
            delta + gap * (x[j] - c[j]) * (x[k] - c[k]) / (rho * rho)
        }))
    }
}

fn check_radius(r: f64) -> Result<()> {
    if r >= 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("radius must be finite and nonnegative, got {r}")))
    }
}

/// `∫₀^v sin(u)^(2σ−2) du`, smoothed by `u = w^{1/(2σ−1)}`.
fn angular_tail(sigma: f64, v: f64) -> Result<f64> {
    if v <= 0.0 {
        return Ok(0.0);
    }
    let k = 1.0 / (2.0 * sigma - 1.0);
    let p = 2.0 * sigma - 2.0;
    let upper = v.powf(2.0 * sigma - 1.0);
    let integrand = |w: f64| {
        let u = w.powf(k);
        let sinc = if u < 1e-8 { 1.0 - u * u / 6.0 } else { u.sin() / u };
        k * sinc.powf(p)
    };
    Ok(integrate(integrand, 0.0, upper, QUAD_TOL, QUAD_SEGMENTS)?.value)
}

pub(crate) fn dist(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    #[test]
    fn g_values() {
        let p = RadialProfile::new(1.0, 2.0, 3).unwrap();
        assert_eq!(p.eval_g(0.0).unwrap(), 1.0);
        assert!((p.eval_g(1.0).unwrap() - 0.5).abs() < 1e-15);
        let q = RadialProfile::new(4.0, 1.0, 3).unwrap();
        assert!((q.eval_g(3.0).unwrap() - 1.0 / 37f64.sqrt()).abs() < 1e-15);
        assert!(matches!(p.eval_g(-1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(RadialProfile::new(0.0, 1.0, 3).is_err());
        assert!(RadialProfile::new(1.0, 0.5, 3).is_err());
        assert!(RadialProfile::new(1.0, 1.0, 2).is_err());
    }

    #[test]
    fn f_values() {
        let p = RadialProfile::standard();
        assert_eq!(p.eval_f(0.0).unwrap(), 0.0);
        assert!((p.eval_f(1.0).unwrap() - FRAC_PI_4).abs() < 1e-15);
        assert!((p.eval_f(f64::INFINITY).unwrap() - FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn quadrature_branch_matches_closed_form_at_sigma_two() {
        // σ = 2: ∫₀ʳ (1+s²)^{-2} ds = (r/(1+r²) + atan r)/2, M₂ = π/4.
        let p = RadialProfile::new(1.0, 2.0, 3).unwrap();
        assert!((p.m_sigma() - FRAC_PI_4).abs() < 1e-12);
        for &r in &[0.0, 0.1, 0.7, 1.0, 3.0, 40.0] {
            let exact = 0.5 * (r / (1.0 + r * r) + f64::atan(r));
            assert!((p.eval_f(r).unwrap() - exact).abs() < 1e-12, "r={r}");
            assert!((p.f(r) - exact).abs() < 1e-12, "table r={r}");
        }
    }

    #[test]
    fn sub_unit_sigma_tail() {
        let p = RadialProfile::new(2.0, 0.75, 4).unwrap();
        // Direct quadrature of the defining integral on a long interval plus
        // the analytic tail ∫_R^∞ (2s²)^{-3/4}(1 + ...) is awkward; compare
        // the table and the quadrature paths instead, and check f(∞).
        for &r in &[0.05, 0.5, 2.0, 10.0, 30.0] {
            assert!((p.f(r) - p.eval_f(r).unwrap()).abs() < 1e-11, "r={r}");
        }
        let far = p.eval_f(1e8).unwrap();
        // (1+2s²)^{-3/4} ~ (2s²)^{-3/4}: tail beyond R is 2^{1/4} R^{-1/2}.
        let tail = 2f64.powf(-0.75) * 2.0 / 1e4;
        assert!((p.f_inf() - far - tail).abs() < 1e-8);
    }

    #[test]
    fn weight_matches_integral_of_f() {
        for p in [RadialProfile::standard(), RadialProfile::new(0.5, 1.7, 3).unwrap()] {
            for &r in &[0.3, 1.0, 4.0] {
                let q = integrate(|s| p.f(s), 0.0, r, 1e-13, 1000).unwrap().value;
                assert!((p.weight(r) - q).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn transverse_gap_series_and_direct_agree() {
        let p = RadialProfile::new(1.3, 1.4, 5).unwrap();
        let r = (SERIES_ARGUMENT / p.a()).sqrt();
        let series = p.transverse_gap(r * 0.999);
        let direct = p.f_over_r(r * 0.999) - p.g_sq(r * 0.999);
        assert!((series - direct).abs() < 1e-11 * series);
        // leading term (2/3) σ a ρ²
        let rho = 1e-4;
        let lead = 2.0 / 3.0 * p.sigma() * p.a() * rho * rho;
        assert!((p.transverse_gap(rho) / lead - 1.0).abs() < 1e-6);
    }

    #[test]
    fn derivative_stack_at_origin() {
        let p = RadialProfile::new(1.0, 2.0, 3).unwrap();
        let s = p.derivative_stack(0.0).unwrap();
        assert_eq!(s.dg, 0.0);
        assert_eq!(s.f_over_r, 1.0);
        assert_eq!(s.lap_weight, 3.0);
        let s1 = p.derivative_stack(1.0).unwrap();
        assert!((s1.dg + 0.5).abs() < 1e-15);
    }

    #[test]
    fn bilaplacian_rejects_nonpositive() {
        let p = RadialProfile::standard();
        assert!(p.bilaplacian_term(0.0).is_err());
        assert!(p.bilaplacian_term(-1.0).is_err());
    }

    #[test]
    fn hessian_at_center_is_scaled_identity() {
        let p = RadialProfile::standard();
        let h = p.hessian_weight(&[0.5, 0.5, 0.5], &[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(h, DMatrix::identity(3, 3));
    }

    #[test]
    fn serde_round_trip() {
        let p = RadialProfile::new(2.0, 1.5, 4).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"a":2.0,"sigma":1.5,"dim":4}"#);
        let q: RadialProfile = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
        assert!(serde_json::from_str::<RadialProfile>(r#"{"a":2.0,"sigma":0.2,"dim":4}"#).is_err());
    }
}
