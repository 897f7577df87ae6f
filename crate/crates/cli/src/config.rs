//! Scenario files: a profile, a grid, a potential, a multiplier and a list of
//! checks. Parsing is strict; unknown keys are errors.

use std::path::PathBuf;

use commlab::certify::EigOptions;
use commlab::evolution::EvolutionConfig;
use commlab::frequency::Realization;
use commlab::grid::GridSpec;
use commlab::multiplier::{build_gamma_n, MultiplierSpec, MultiplierVariant};
use commlab::potentials::{Bump, PotentialSpec};
use commlab::profile::{ProfileParams, RadialProfile};
use serde::{Deserialize, Serialize};

/// Bundled presets, by name.
pub const PRESETS: &[(&str, &str)] = &[
    ("two-bump-default", include_str!("../presets/two-bump-default.toml")),
    ("lattice", include_str!("../presets/lattice.toml")),
    ("axial-product", include_str!("../presets/axial-product.toml")),
    ("moving-bump", include_str!("../presets/moving-bump.toml")),
    ("high-energy", include_str!("../presets/high-energy.toml")),
    ("nondefinite", include_str!("../presets/nondefinite.toml")),
];

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

fn default_seed() -> u64 {
    7
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub profile: ProfileParams,
    pub grid: GridSpec,
    pub potential: PotentialSpec,
    #[serde(default)]
    pub multiplier: MultiplierBlock,
    #[serde(default)]
    pub checks: Vec<Check>,
}

/// `γ_N` along `axis`, or explicit weighted centers.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierBlock {
    #[serde(default)]
    pub n: usize,
    #[serde(default = "default_axis")]
    pub axis: Vec<f64>,
    #[serde(default)]
    pub variant: MultiplierVariant,
    #[serde(default)]
    pub centers: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

fn default_axis() -> Vec<f64> {
    vec![1.0, 0.0, 0.0]
}

impl Default for MultiplierBlock {
    fn default() -> Self {
        Self { n: 0, axis: default_axis(), variant: MultiplierVariant::SmoothF, centers: None, weights: None }
    }
}

impl MultiplierBlock {
    /// The multiplier with `n` replaced by `n_override` when given.
    pub fn build(&self, profile: &RadialProfile, n_override: Option<usize>) -> commlab::Result<MultiplierSpec> {
        match &self.centers {
            Some(c) => MultiplierSpec::new(profile.clone(), c.clone(), self.weights.clone(), self.variant),
            None => {
                let spec = build_gamma_n(profile, n_override.unwrap_or(self.n), &self.axis)?;
                Ok(MultiplierSpec { variant: self.variant, ..spec })
            }
        }
    }
}

/// What a certificate compares `i[H, γ]` against.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Residual {
    /// `i[H, γ] − c·i[−Δ, γ]`.
    ScaledKinetic { c: f64 },
    /// `i[H, γ] − scale·(4 − σ/(n−2)²)Σλ g(−Δ)g`.
    LowerBound { scale: f64 },
}

/// Gaussian initial data.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Packet {
    pub center: Vec<f64>,
    pub width: f64,
    #[serde(default)]
    pub momentum: Option<Vec<f64>>,
}

fn default_samples() -> usize {
    10_000
}

fn default_tol() -> f64 {
    1e-12
}

fn default_sigma() -> f64 {
    1.0
}

fn default_horizons() -> Vec<f64> {
    Vec::new()
}

/// One entry of the `checks` list; `kind` selects the variant.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    /// Symmetric-pair bound on random `(x, c)`, with the scenario's first bump.
    PairBound {
        name: String,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    /// Sign branches of the two-center claim on random instances.
    ClaimSign {
        name: String,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    /// Negative region of one bump along an `N` ladder.
    NegativeRegion {
        name: String,
        bump_index: i64,
        ladder: Vec<usize>,
        target: f64,
        #[serde(default)]
        grid: Option<GridSpec>,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    /// Uniform floor of `i[V, γ_N]` at random points of the grid box.
    GeneralFloor {
        name: String,
        half_length: f64,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default = "default_tol")]
        tol: f64,
    },
    /// Axial conditions on a structured sample.
    AxialConditions {
        name: String,
        half_length: f64,
        max_radius: f64,
        #[serde(default = "default_n_x1")]
        n_x1: usize,
        #[serde(default = "default_n_r")]
        n_r: usize,
        #[serde(default = "default_n_dir")]
        n_dir: usize,
        deltas: Vec<f64>,
    },
    /// Pointwise sufficient condition for nondefinite radial terms.
    NondefiniteCondition {
        name: String,
        lambda: f64,
        max_radius: f64,
        #[serde(default = "default_samples")]
        samples: usize,
    },
    /// Uniformity in time of the axial conditions for moving components.
    TimeUniformity { name: String, times: Vec<f64>, half_length: f64, max_radius: f64, deltas: Vec<f64> },
    /// One positivity certificate for the scenario multiplier.
    Certify {
        name: String,
        /// Overrides the scenario grid.
        #[serde(default)]
        grid: Option<GridSpec>,
        residual: Residual,
        #[serde(default)]
        eig: EigOptions,
    },
    /// Certificates along an `N` ladder.
    Scan {
        name: String,
        /// Overrides the scenario grid.
        #[serde(default)]
        grid: Option<GridSpec>,
        ladder: Vec<usize>,
        residual: Residual,
        #[serde(default)]
        eig: EigOptions,
    },
    /// High-energy sandwiched certificates along `K = m·‖W‖`.
    HighEnergyScan {
        name: String,
        /// Overrides the scenario grid.
        #[serde(default)]
        grid: Option<GridSpec>,
        epsilon: f64,
        multiples: Vec<f64>,
        #[serde(default = "default_realization")]
        realization: Realization,
        #[serde(default)]
        eig: EigOptions,
    },
    /// Propagation with ledger, Ehrenfest, Morawetz budget and decay integrals.
    Evolve {
        name: String,
        /// Overrides the scenario grid.
        #[serde(default)]
        grid: Option<GridSpec>,
        evolution: EvolutionConfig,
        packet: Packet,
        #[serde(default = "default_sigma")]
        sigma: f64,
        /// Extra horizons for the decay-ratio ladder (static potentials).
        #[serde(default = "default_horizons")]
        decay_horizons: Vec<f64>,
        #[serde(default = "default_dip_tol")]
        dip_tol: f64,
        #[serde(default = "default_norm_tol")]
        norm_tol: f64,
        /// Realization of `Q₁(H)` in the decay integrals.
        #[serde(default = "default_decay_realization")]
        decay_realization: Realization,
    },
}

fn default_n_x1() -> usize {
    41
}
fn default_n_r() -> usize {
    9
}
fn default_n_dir() -> usize {
    8
}
fn default_dip_tol() -> f64 {
    1e-8
}
fn default_norm_tol() -> f64 {
    1e-9
}
fn default_decay_realization() -> Realization {
    Realization::Chebyshev { tol: 1e-8, interval: None }
}
fn default_realization() -> Realization {
    Realization::Exact
}

/// Command-line suites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    VerifyPointwise,
    Certify,
    Scan,
    Evolve,
    Report,
}

impl Check {
    pub fn name(&self) -> &str {
        match self {
            Check::PairBound { name, .. }
            | Check::ClaimSign { name, .. }
            | Check::NegativeRegion { name, .. }
            | Check::GeneralFloor { name, .. }
            | Check::AxialConditions { name, .. }
            | Check::NondefiniteCondition { name, .. }
            | Check::TimeUniformity { name, .. }
            | Check::Certify { name, .. }
            | Check::Scan { name, .. }
            | Check::HighEnergyScan { name, .. }
            | Check::Evolve { name, .. } => name,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Check::PairBound { .. } => "pair_bound",
            Check::ClaimSign { .. } => "claim_sign",
            Check::NegativeRegion { .. } => "negative_region",
            Check::GeneralFloor { .. } => "general_floor",
            Check::AxialConditions { .. } => "axial_conditions",
            Check::NondefiniteCondition { .. } => "nondefinite_condition",
            Check::TimeUniformity { .. } => "time_uniformity",
            Check::Certify { .. } => "certify",
            Check::Scan { .. } => "scan",
            Check::HighEnergyScan { .. } => "high_energy_scan",
            Check::Evolve { .. } => "evolve",
        }
    }

    pub fn suite(&self) -> Suite {
        match self {
            Check::PairBound { .. }
            | Check::ClaimSign { .. }
            | Check::NegativeRegion { .. }
            | Check::GeneralFloor { .. }
            | Check::AxialConditions { .. }
            | Check::NondefiniteCondition { .. }
            | Check::TimeUniformity { .. } => Suite::VerifyPointwise,
            Check::Certify { .. } => Suite::Certify,
            Check::Scan { .. } | Check::HighEnergyScan { .. } => Suite::Scan,
            Check::Evolve { .. } => Suite::Evolve,
        }
    }

    pub fn in_suite(&self, suite: Suite) -> bool {
        suite == Suite::Report || self.suite() == suite
    }
}

/// Parse failure or failed semantic validation.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError(format!("{origin}: {e}")))?;
        cfg.validate().map_err(|e| ConfigError(format!("{origin}: {e}")))?;
        Ok(cfg)
    }

    pub fn profile(&self) -> commlab::Result<RadialProfile> {
        RadialProfile::new(self.profile.a, self.profile.sigma, self.profile.dim)
    }

    /// The bump used by pointwise pair checks.
    pub fn first_bump(&self) -> Bump {
        self.potential
            .bumps(self.profile.dim)
            .and_then(|b| match b.first() {
                Some((_, PotentialSpec::RadialBump { bump, .. })) => Some(*bump),
                _ => None,
            })
            .unwrap_or(Bump { amplitude: 3.0, radius: 1.5 })
    }

    /// The check's grid override, or the scenario grid.
    pub fn grid_for<'a>(&'a self, over: &'a Option<GridSpec>) -> &'a GridSpec {
        over.as_ref().unwrap_or(&self.grid)
    }

    fn check_grid(&self, name: &str, grid: &Option<GridSpec>) -> Result<(), String> {
        if let Some(g) = grid {
            if g.dim != self.profile.dim {
                return Err(format!("checks.{name}.grid has dimension {} but profile.dim = {}", g.dim, self.profile.dim));
            }
            g.build().map_err(|e| format!("checks.{name}.grid: {e}"))?;
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), String> {
        let profile = self.profile().map_err(|e| format!("profile: {e}"))?;
        if self.grid.dim != self.profile.dim {
            return Err(format!("grid.dim = {} differs from profile.dim = {}", self.grid.dim, self.profile.dim));
        }
        self.grid.build().map_err(|e| format!("grid: {e}"))?;
        self.potential.validate(self.profile.dim).map_err(|e| format!("potential: {e}"))?;
        self.multiplier.build(&profile, None).map_err(|e| format!("multiplier: {e}"))?;
        let mut names = std::collections::HashSet::new();
        for c in &self.checks {
            let name = c.name();
            if name.is_empty() || !name.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '-' || ch == '_') {
                return Err(format!("check name {name:?} must be nonempty and use [A-Za-z0-9_-]"));
            }
            if !names.insert(name.to_string()) {
                return Err(format!("duplicate check name {name:?}"));
            }
            let positive = |label: &str, v: f64| {
                if v > 0.0 && v.is_finite() {
                    Ok(())
                } else {
                    Err(format!("checks.{name}.{label} must be positive"))
                }
            };
            match c {
                Check::PairBound { tol, samples, .. } => {
                    positive("tol", *tol)?;
                    positive("samples", *samples as f64)?;
                }
                Check::ClaimSign { samples, .. } => positive("samples", *samples as f64)?,
                Check::NegativeRegion { ladder, target, tol, grid, .. } => {
                    positive("target", *target)?;
                    positive("tol", *tol)?;
                    if ladder.is_empty() || ladder.windows(2).any(|w| w[1] <= w[0]) {
                        return Err(format!("checks.{name}.ladder must be nonempty and strictly increasing"));
                    }
                    self.check_grid(name, grid)?;
                }
                Check::GeneralFloor { half_length, tol, .. } => {
                    positive("half_length", *half_length)?;
                    positive("tol", *tol)?;
                }
                Check::AxialConditions { half_length, max_radius, .. } => {
                    positive("half_length", *half_length)?;
                    positive("max_radius", *max_radius)?;
                }
                Check::NondefiniteCondition { lambda, max_radius, .. } => {
                    positive("lambda", *lambda)?;
                    positive("max_radius", *max_radius)?;
                }
                Check::TimeUniformity { times, half_length, .. } => {
                    positive("half_length", *half_length)?;
                    if times.is_empty() {
                        return Err(format!("checks.{name}.times is empty"));
                    }
                }
                Check::Certify { eig, grid, .. } | Check::Scan { eig, grid, .. } | Check::HighEnergyScan { eig, grid, .. } => {
                    self.check_grid(name, grid)?;
                    positive("eig.tol", eig.tol)?;
                    positive("eig.floor", eig.floor)?;
                    if let Check::Scan { ladder, .. } = c {
                        if ladder.is_empty() || ladder.windows(2).any(|w| w[1] <= w[0]) {
                            return Err(format!("checks.{name}.ladder must be nonempty and strictly increasing"));
                        }
                    }
                    if let Check::HighEnergyScan { multiples, epsilon, .. } = c {
                        positive("epsilon", *epsilon)?;
                        if multiples.is_empty() || multiples.windows(2).any(|w| w[1] <= w[0]) {
                            return Err(format!("checks.{name}.multiples must be nonempty and strictly increasing"));
                        }
                    }
                }
                Check::Evolve { evolution, packet, dip_tol, norm_tol, grid, .. } => {
                    self.check_grid(name, grid)?;
                    positive("norm_tol", *norm_tol)?;
                    positive("evolution.dt", evolution.dt)?;
                    positive("evolution.horizon", evolution.horizon)?;
                    positive("packet.width", packet.width)?;
                    positive("dip_tol", *dip_tol)?;
                    if packet.center.len() != self.profile.dim {
                        return Err(format!("checks.{name}.packet.center has the wrong dimension"));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for (name, text) in PRESETS {
            ScenarioConfig::parse(text, name).unwrap_or_else(|e| panic!("{e}"));
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let text = PRESETS[0].1.replace("[grid]", "[grid]\ntypo_key = 1");
        let err = ScenarioConfig::parse(&text, "x").unwrap_err();
        assert!(err.0.contains("typo_key"), "{}", err.0);
    }
}
