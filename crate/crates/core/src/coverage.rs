//! Simulation checks of the coverage guarantees:
//!
//! - `P{G ⊆ Ĝ1u} ≥ 1 − α`, with equality at the flat model `β = (λ, 0, …)`;
//! - `P{Ĝ1l ⊆ G} ≥ 1 − α`, with equality just below the flat model;
//! - `P{Ĝ2l ⊆ G ⊆ Ĝ2u} ≥ 1 − α`.
//!
//! Set inclusion is decided on a finite probe grid over `K`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::band::{critical_constants, thread_pool, validate_alpha, ConstantSet, MonteCarloConfig, Shape};
use crate::error::{Error, Result};
use crate::level_set::probe_grid;
use crate::model::{design_matrix, BasisMap, BoxRegion, Dof, OlsSolver, RegressionFit};
use crate::rng::{self, DOMAIN_COVERAGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverageEvent {
    /// `G ⊆ Ĝ1u`.
    GSubsetG1u,
    /// `Ĝ1l ⊆ G`.
    G1lSubsetG,
    /// `Ĝ2l ⊆ G ⊆ Ĝ2u`.
    TwoSidedSandwich,
}

impl CoverageEvent {
    pub const ALL: [CoverageEvent; 3] = [
        CoverageEvent::GSubsetG1u,
        CoverageEvent::G1lSubsetG,
        CoverageEvent::TwoSidedSandwich,
    ];
}

impl fmt::Display for CoverageEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoverageEvent::GSubsetG1u => "G_subset_G1u",
            CoverageEvent::G1lSubsetG => "G1l_subset_G",
            CoverageEvent::TwoSidedSandwich => "two_sided_sandwich",
        })
    }
}

impl FromStr for CoverageEvent {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "g_subset_g1u" | "upper" => Ok(CoverageEvent::GSubsetG1u),
            "g1l_subset_g" | "lower" => Ok(CoverageEvent::G1lSubsetG),
            "two_sided_sandwich" | "two_sided" | "sandwich" => Ok(CoverageEvent::TwoSidedSandwich),
            other => Err(Error::InvalidArgument(format!("unknown coverage event '{other}'"))),
        }
    }
}

/// How the fixed design points are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignSpec {
    /// Raw covariate rows.
    Points(Vec<Vec<f64>>),
    /// `n` evenly spaced points across a one-dimensional region.
    Equispaced(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageScenario {
    pub true_beta: Vec<f64>,
    pub true_sigma: f64,
    pub basis: BasisMap,
    pub design: DesignSpec,
    pub region: BoxRegion,
    pub lambda: f64,
    pub alpha: f64,
    pub shape: Shape,
    pub replications: usize,
    pub seed: u64,
    pub containment_grid: usize,
    pub monte_carlo: MonteCarloConfig,
}

/// Probe nodes for inclusion tests: 512 on a line, 64×64 otherwise.
pub fn default_containment_grid(free_dims: usize) -> usize {
    if free_dims <= 1 {
        512
    } else {
        64 * 64
    }
}

/// Offset realising "infinitesimally below λ" for the lower-set extreme.
pub fn lambda_minus(lambda: f64) -> f64 {
    lambda - 1e-9 * lambda.abs().max(1.0)
}

impl CoverageScenario {
    /// Flat model `β = (λ, 0, …, 0)`: the least favourable configuration for
    /// `G ⊆ Ĝ1u`.
    pub fn flat(p: usize, n: usize, lambda: f64, alpha: f64, replications: usize, seed: u64) -> Result<Self> {
        let region = BoxRegion::interval(0.0, 1.0)?;
        let basis = if p == 1 { BasisMap::affine(1)? } else { BasisMap::polynomial(p)? };
        let mut true_beta = vec![0.0; p + 1];
        true_beta[0] = lambda;
        let mut mc = MonteCarloConfig::for_region(&region);
        mc.seed = seed.wrapping_add(1);
        Ok(Self {
            true_beta,
            true_sigma: 1.0,
            basis,
            design: DesignSpec::Equispaced(n),
            region,
            lambda,
            alpha,
            shape: Shape::Hyperbolic,
            replications,
            seed,
            containment_grid: default_containment_grid(1),
            monte_carlo: mc,
        })
    }

    /// Same scenario with the intercept moved just below `λ`, the least
    /// favourable configuration for `Ĝ1l ⊆ G`.
    pub fn with_lambda_minus(&self) -> Self {
        let mut s = self.clone();
        for b in s.true_beta.iter_mut().skip(1) {
            *b = 0.0;
        }
        s.true_beta[0] = lambda_minus(self.lambda);
        s
    }

    pub fn validate(&self) -> Result<()> {
        validate_alpha(self.alpha)?;
        if self.true_beta.len() != self.basis.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.basis.output_dim(),
                got: self.true_beta.len(),
            });
        }
        if self.region.dim() != self.basis.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.basis.input_dim(),
                got: self.region.dim(),
            });
        }
        if !(self.true_sigma > 0.0 && self.true_sigma.is_finite()) {
            return Err(Error::InvalidArgument("true_sigma must be positive".into()));
        }
        if !self.lambda.is_finite() || self.true_beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("scenario"));
        }
        if self.replications == 0 {
            return Err(Error::InvalidArgument("replications must be positive".into()));
        }
        if self.containment_grid == 0 {
            return Err(Error::InvalidArgument("containment_grid must be positive".into()));
        }
        self.monte_carlo.validate(&self.region)
    }

    pub fn design_covariates(&self) -> Result<DMatrix<f64>> {
        match &self.design {
            DesignSpec::Points(rows) => {
                let d = self.basis.input_dim();
                if let Some(bad) = rows.iter().find(|r| r.len() != d) {
                    return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
                }
                Ok(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
            }
            DesignSpec::Equispaced(n) => {
                if self.region.dim() != 1 {
                    return Err(Error::InvalidArgument(
                        "equispaced designs need a one-dimensional region; list the points instead".into(),
                    ));
                }
                let (lo, hi) = (self.region.lower()[0], self.region.upper()[0]);
                let n = *n;
                Ok(DMatrix::from_fn(n, 1, |i, _| {
                    if n == 1 {
                        lo
                    } else {
                        lo + (hi - lo) * i as f64 / (n - 1) as f64
                    }
                }))
            }
        }
    }

    /// Hex SHA-256 of the scenario with the worker count cleared; identifies
    /// a scenario independent of how it is run.
    pub fn fingerprint(&self) -> String {
        let mut s = self.clone();
        s.monte_carlo.workers = 0;
        let json = serde_json::to_string(&s).expect("scenario serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: ScenarioFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        raw.into_scenario()
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    model: ModelSection,
    design: DesignSection,
    region: RegionSection,
    test: TestSection,
    #[serde(default)]
    monte_carlo: McSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    true_beta: Vec<f64>,
    true_sigma: f64,
    #[serde(default)]
    basis: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DesignSection {
    equispaced: Option<usize>,
    points: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionSection {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TestSection {
    lambda: f64,
    alpha: f64,
    replications: usize,
    seed: u64,
    #[serde(default)]
    containment_grid: Option<usize>,
    #[serde(default)]
    shape: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct McSection {
    draws: Option<usize>,
    seed: Option<u64>,
    workers: Option<usize>,
    grid_points_per_dim: Option<usize>,
    refine_iterations: Option<usize>,
    allow_high_dim: Option<bool>,
}

/// Parses `affine`, `affine:<d>` or `poly:<q>`.
pub fn parse_basis(text: &str, covariate_dim: usize) -> Result<BasisMap> {
    let text = text.trim();
    if text == "affine" {
        return BasisMap::affine(covariate_dim);
    }
    let (kind, arg) = text
        .split_once(':')
        .ok_or_else(|| Error::InvalidArgument(format!("unknown basis '{text}'")))?;
    let n: usize = arg
        .trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad basis argument '{arg}'")))?;
    match kind.trim() {
        "affine" => BasisMap::affine(n),
        "poly" | "polynomial" => BasisMap::polynomial(n),
        other => Err(Error::InvalidArgument(format!("unknown basis '{other}'"))),
    }
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<CoverageScenario> {
        let region = BoxRegion::new(self.region.lower, self.region.upper)?;
        let basis = parse_basis(self.model.basis.as_deref().unwrap_or("affine"), region.dim())?;
        let design = match (self.design.equispaced, self.design.points) {
            (Some(n), None) => DesignSpec::Equispaced(n),
            (None, Some(p)) => DesignSpec::Points(p),
            _ => {
                return Err(Error::Config(
                    "[design] needs exactly one of `equispaced` or `points`".into(),
                ))
            }
        };
        let shape = match self.test.shape {
            Some(s) => s.parse()?,
            None => Shape::Hyperbolic,
        };
        let defaults = MonteCarloConfig::for_region(&region);
        let region_free = region.free_dims();
        let mc = self.monte_carlo;
        let monte_carlo = MonteCarloConfig {
            draws: mc.draws.unwrap_or(defaults.draws),
            seed: mc.seed.unwrap_or(self.test.seed.wrapping_add(1)),
            workers: mc.workers.filter(|&w| w > 0).unwrap_or(defaults.workers),
            grid_points_per_dim: mc.grid_points_per_dim.unwrap_or(defaults.grid_points_per_dim),
            refine_iterations: mc.refine_iterations.unwrap_or(defaults.refine_iterations),
            allow_high_dim: mc.allow_high_dim.unwrap_or(false),
        };
        let scenario = CoverageScenario {
            true_beta: self.model.true_beta,
            true_sigma: self.model.true_sigma,
            basis,
            design,
            region,
            lambda: self.test.lambda,
            alpha: self.test.alpha,
            shape,
            replications: self.test.replications,
            seed: self.test.seed,
            containment_grid: self.test.containment_grid.unwrap_or(default_containment_grid(region_free)),
            monte_carlo,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub event: CoverageEvent,
    pub true_beta: Vec<f64>,
    pub hits: usize,
    pub replications: usize,
    pub hit_rate: f64,
    pub mc_std_error: f64,
    /// `1 − α − 3·sqrt(α(1 − α)/R)`.
    pub lower_bound: f64,
    pub meets_bound: bool,
    pub c_one_sided_upper: f64,
    pub c_one_sided_lower: f64,
    pub c_two_sided: f64,
    pub scenario_fingerprint: String,
}

/// Probe-grid quantities that depend only on the design and region.
struct Prepared {
    design: DMatrix<f64>,
    solver: OlsSolver,
    constants: ConstantSet,
    probes: Vec<(DVector<f64>, f64)>,
    truth: Vec<bool>,
    true_mean: DVector<f64>,
}

fn prepare(scenario: &CoverageScenario) -> Result<Prepared> {
    scenario.validate()?;
    let covariates = scenario.design_covariates()?;
    let design = design_matrix(&covariates, &scenario.basis)?;
    let solver = OlsSolver::new(&design)?;
    let nu = (design.nrows() - design.ncols()) as u64;
    let geometry = RegressionFit::from_parts(
        DVector::zeros(design.ncols()),
        1.0,
        Dof::Finite(nu),
        solver.xtx_inv.clone(),
        scenario.basis,
    )?;
    // The constants depend on the design, region, α and side only, never on Y.
    let constants = critical_constants(
        &geometry,
        &scenario.region,
        scenario.shape,
        scenario.alpha,
        &scenario.monte_carlo,
    )?;
    let beta = DVector::from_column_slice(&scenario.true_beta);
    let mut probes = Vec::new();
    let mut truth = Vec::new();
    for x in probe_grid(&scenario.region, scenario.containment_grid) {
        let xt = crate::model::expand_basis(&scenario.basis, &x)?;
        let m = match scenario.shape {
            Shape::Hyperbolic => geometry.quad_form(xt.as_slice()).sqrt(),
            Shape::ConstantWidth => 1.0,
        };
        truth.push(xt.dot(&beta) >= scenario.lambda);
        probes.push((xt, m));
    }
    let true_mean = &design * &beta;
    Ok(Prepared {
        design,
        solver,
        constants,
        probes,
        truth,
        true_mean,
    })
}

/// Per-replication estimates `(β̂, σ̂)`.
fn replicate(scenario: &CoverageScenario, prep: &Prepared, j: usize) -> (DVector<f64>, f64) {
    let mut rng = rng::stream(scenario.seed, DOMAIN_COVERAGE, j as u64);
    let n = prep.design.nrows();
    let y = DVector::from_fn(n, |i, _| {
        let e: f64 = StandardNormal.sample(&mut rng);
        prep.true_mean[i] + scenario.true_sigma * e
    });
    let (beta_hat, rss) = prep.solver.solve(&y);
    let nu = (n - prep.design.ncols()) as f64;
    (beta_hat, (rss / nu).sqrt())
}

fn event_holds(event: CoverageEvent, scenario: &CoverageScenario, prep: &Prepared, beta_hat: &DVector<f64>, sigma_hat: f64) -> bool {
    let lambda = scenario.lambda;
    let c = &prep.constants;
    let member = |xt: &DVector<f64>, m: f64, sign: f64, value: f64| xt.dot(beta_hat) + sign * value * sigma_hat * m >= lambda;
    prep.probes.iter().zip(&prep.truth).all(|((xt, m), &in_g)| match event {
        CoverageEvent::GSubsetG1u => !in_g || member(xt, *m, 1.0, c.upper.value),
        CoverageEvent::G1lSubsetG => in_g || !member(xt, *m, -1.0, c.lower.value),
        CoverageEvent::TwoSidedSandwich => {
            (!in_g || member(xt, *m, 1.0, c.two_sided.value)) && (in_g || !member(xt, *m, -1.0, c.two_sided.value))
        }
    })
}

/// Outcome of `event` for every replication, in replication order.
pub fn replication_outcomes(scenario: &CoverageScenario, event: CoverageEvent) -> Result<Vec<bool>> {
    let prep = prepare(scenario)?;
    outcomes(scenario, &prep, |beta_hat, sigma_hat| event_holds(event, scenario, &prep, beta_hat, sigma_hat))
}

/// Per replication: does the one-sided upper band cover the true function
/// at every probe, `x̃ᵀ(β̂ − β) + c₁σ̂m(x) ≥ 0`?
pub fn upper_band_outcomes(scenario: &CoverageScenario) -> Result<Vec<bool>> {
    let prep = prepare(scenario)?;
    let beta = DVector::from_column_slice(&scenario.true_beta);
    let c = prep.constants.upper.value;
    outcomes(scenario, &prep, |beta_hat, sigma_hat| {
        let diff = beta_hat - &beta;
        prep.probes.iter().all(|(xt, m)| xt.dot(&diff) + c * sigma_hat * m >= 0.0)
    })
}

fn outcomes(
    scenario: &CoverageScenario,
    prep: &Prepared,
    test: impl Fn(&DVector<f64>, f64) -> bool + Sync,
) -> Result<Vec<bool>> {
    let pool = thread_pool(scenario.monte_carlo.workers)?;
    Ok(pool.install(|| {
        (0..scenario.replications)
            .into_par_iter()
            .map(|j| {
                let (beta_hat, sigma_hat) = replicate(scenario, prep, j);
                test(&beta_hat, sigma_hat)
            })
            .collect()
    }))
}

fn report(scenario: &CoverageScenario, prep: &Prepared, event: CoverageEvent, hits: usize) -> CoverageReport {
    let r = scenario.replications as f64;
    let hit_rate = hits as f64 / r;
    let a = scenario.alpha;
    let lower_bound = 1.0 - a - 3.0 * (a * (1.0 - a) / r).sqrt();
    CoverageReport {
        event,
        true_beta: scenario.true_beta.clone(),
        hits,
        replications: scenario.replications,
        hit_rate,
        mc_std_error: (hit_rate * (1.0 - hit_rate) / r).sqrt(),
        lower_bound,
        meets_bound: hit_rate >= lower_bound,
        c_one_sided_upper: prep.constants.upper.value,
        c_one_sided_lower: prep.constants.lower.value,
        c_two_sided: prep.constants.two_sided.value,
        scenario_fingerprint: scenario.fingerprint(),
    }
}

/// Empirical probability of `event` under `scenario`.
pub fn run_coverage(scenario: &CoverageScenario, event: CoverageEvent) -> Result<CoverageReport> {
    let prep = prepare(scenario)?;
    let hits = outcomes(scenario, &prep, |b, s| event_holds(event, scenario, &prep, b, s))?
        .into_iter()
        .filter(|&h| h)
        .count();
    Ok(report(scenario, &prep, event, hits))
}

/// Slope multipliers probed by [`run_least_favorable_sweep`].
pub const SWEEP_MULTIPLIERS: [f64; 5] = [0.0, 1.0, 4.0, 16.0, 64.0];

/// True coefficient vectors of the sweep: `β = (λ − s·x₀, s, 0, …)` with
/// `s = k·σ / width(K₁)` so the true function crosses `λ` at the centre
/// `x₀` of the first coordinate; `k = 0` is the flat model.
pub fn sweep_configurations(base: &CoverageScenario) -> Vec<Vec<f64>> {
    let lo = base.region.lower()[0];
    let hi = base.region.upper()[0];
    let width = if hi > lo { hi - lo } else { 1.0 };
    let centre = 0.5 * (lo + hi);
    let delta = base.true_sigma / width;
    SWEEP_MULTIPLIERS
        .iter()
        .map(|&k| {
            let slope = k * delta;
            let mut beta = vec![0.0; base.basis.output_dim()];
            beta[0] = base.lambda - slope * centre;
            beta[1] = slope;
            beta
        })
        .collect()
}

/// Two-sided coverage across the sweep configurations. The critical
/// constants are shared: they do not depend on `β`.
pub fn run_least_favorable_sweep(base: &CoverageScenario) -> Result<Vec<CoverageReport>> {
    let prep = prepare(base)?;
    sweep_configurations(base)
        .into_iter()
        .map(|beta| {
            let mut s = base.clone();
            s.true_beta = beta;
            let beta = DVector::from_column_slice(&s.true_beta);
            let prep = Prepared {
                truth: prep.probes.iter().map(|(xt, _)| xt.dot(&beta) >= s.lambda).collect(),
                true_mean: &prep.design * &beta,
                design: prep.design.clone(),
                solver: prep.solver.clone(),
                constants: prep.constants.clone(),
                probes: prep.probes.clone(),
            };
            let event = CoverageEvent::TwoSidedSandwich;
            let hits = outcomes(&s, &prep, |b, sig| event_holds(event, &s, &prep, b, sig))?
                .into_iter()
                .filter(|&h| h)
                .count();
            Ok(report(&s, &prep, event, hits))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(replications: usize) -> CoverageScenario {
        let mut s = CoverageScenario::flat(1, 20, 0.0, 0.05, replications, 42).unwrap();
        s.monte_carlo.draws = 4000;
        s.monte_carlo.grid_points_per_dim = 101;
        s.containment_grid = 128;
        s
    }

    #[test]
    fn single_replication_is_bernoulli() {
        let r = run_coverage(&quick(1), CoverageEvent::GSubsetG1u).unwrap();
        assert!(r.hit_rate == 0.0 || r.hit_rate == 1.0);
        assert_eq!(r.mc_std_error, 0.0);
    }

    #[test]
    fn fingerprint_ignores_workers() {
        let a = quick(10);
        let mut b = a.clone();
        b.monte_carlo.workers = 7;
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed += 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn vacuous_configuration_always_hits() {
        let mut s = quick(200);
        s.true_beta = vec![1e6, 0.0];
        let r = run_coverage(&s, CoverageEvent::TwoSidedSandwich).unwrap();
        assert_eq!(r.hit_rate, 1.0);
    }

    #[test]
    fn outcomes_match_report() {
        let s = quick(300);
        let o = replication_outcomes(&s, CoverageEvent::G1lSubsetG).unwrap();
        let r = run_coverage(&s, CoverageEvent::G1lSubsetG).unwrap();
        assert_eq!(o.iter().filter(|&&h| h).count(), r.hits);
    }

    #[test]
    fn scenario_file_round_trip() {
        let text = r#"
            [model]
            true_beta = [0.0, 0.0]
            true_sigma = 1.0

            [design]
            equispaced = 20

            [region]
            lower = [0.0]
            upper = [1.0]

            [test]
            lambda = 0.0
            alpha = 0.05
            replications = 100
            seed = 3

            [monte_carlo]
            draws = 2000
        "#;
        let s = CoverageScenario::from_toml_str(text).unwrap();
        assert_eq!(s.design, DesignSpec::Equispaced(20));
        assert_eq!(s.monte_carlo.draws, 2000);
        assert_eq!(s.monte_carlo.seed, 4);
        assert_eq!(s.basis, BasisMap::Affine { dim: 1 });
        assert!(CoverageScenario::from_toml_str("[model]\ntrue_beta = [0.0]").is_err());
    }

    #[test]
    fn sweep_crosses_lambda_at_centre() {
        let mut s = quick(10);
        s.lambda = 2.0;
        for beta in sweep_configurations(&s) {
            assert!((beta[0] + beta[1] * 0.5 - 2.0).abs() < 1e-12);
        }
    }
}
