//! Command-line front end.
//!
//! Arguments are parsed into a [`RunConfig`], which is fully validated
//! before any computation starts; [`run`] then executes the pipeline and
//! writes its artifacts into the output directory.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};

use crate::band::{
    critical_constants, default_grid_points, default_workers, validate_alpha, ConstantSet, CriticalConstant,
    MonteCarloConfig, Shape, Side, DEFAULT_DRAWS, DEFAULT_REFINE_ITERATIONS, DEFAULT_SEED,
};
use crate::cache::{CacheOutcome, ConstantCache};
use crate::coverage::{parse_basis, run_coverage, run_least_favorable_sweep, CoverageEvent, CoverageScenario};
use crate::error::{Error, Result};
use crate::level_set::{Link, LinkAdapter, LinkDirection, SetFamily, SetKind};
use crate::model::{fit_ols, BasisMap, BoxRegion, Dataset, RegressionFit};
use crate::report::{self, FitSummary, LinkRecord, Results, SetRecord};

#[derive(Debug, Parser)]
#[command(name = "levelconf", version, about = "Confidence sets for regression level sets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Least-squares fit of a CSV dataset.
    Fit(FitArgs),
    /// Simulated critical constants (upper, lower, two-sided).
    Critconst(ConstArgs),
    /// Simultaneous band over the region.
    Band(BandArgs),
    /// The four confidence sets for `{x : f(x) >= λ}` (or `<= λ`).
    Levelset(LevelsetArgs),
    /// Approximate confidence sets from an asymptotically normal estimate.
    GlmLevelset(GlmArgs),
    /// Monte Carlo coverage check of a scenario file.
    Coverage(CoverageArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Response column name.
    #[arg(long)]
    pub response: Option<String>,
    /// Comma-separated covariate columns (default: all other columns).
    #[arg(long)]
    pub covariates: Option<String>,
    /// `affine`, `affine:<d>` or `poly:<q>`.
    #[arg(long, default_value = "affine")]
    pub basis: String,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Coefficient estimate, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<String>,
    /// Coefficient covariance, rows separated by `;`.
    #[arg(long, allow_hyphen_values = true)]
    pub cov: Option<String>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    /// Region as `lo:hi` per coordinate, comma-separated.
    #[arg(long, allow_hyphen_values = true)]
    pub region: String,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// `hyperbolic` or `constant-width`.
    #[arg(long, default_value = "hyperbolic")]
    pub shape: String,
    #[arg(long, default_value_t = DEFAULT_DRAWS)]
    pub draws: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads (default: available cores); never changes results.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Search-grid nodes per free coordinate.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_REFINE_ITERATIONS)]
    pub refine: usize,
    /// Permit regions with more than three free coordinates.
    #[arg(long)]
    pub allow_high_dim: bool,
    /// Directory for cached critical constants.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ConstArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub estimate: EstimateArgs,
    #[command(flatten)]
    pub mc: McArgs,
}

#[derive(Debug, Args)]
pub struct BandArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub estimate: EstimateArgs,
    #[command(flatten)]
    pub mc: McArgs,
    #[arg(long, default_value = "two-sided")]
    pub side: String,
    /// Evaluation nodes per axis for bands.csv and plot.svg.
    #[arg(long, default_value_t = 201)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct LevelsetArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub estimate: EstimateArgs,
    #[command(flatten)]
    pub mc: McArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: f64,
    /// Only build this set (G1u, G1l, G2u or G2l).
    #[arg(long)]
    pub kind: Option<String>,
    /// Target `{x : f(x) <= λ}` instead.
    #[arg(long)]
    pub sublevel: bool,
    #[arg(long, default_value_t = 201)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct GlmArgs {
    #[command(flatten)]
    pub estimate: EstimateArgs,
    #[command(flatten)]
    pub mc: McArgs,
    /// `affine`, `affine:<d>` or `poly:<q>`.
    #[arg(long, default_value = "affine")]
    pub basis: String,
    /// Threshold on the linear-predictor scale.
    #[arg(long, allow_hyphen_values = true)]
    pub lambda: Option<f64>,
    /// Threshold on the mean-response scale, mapped through `--link`.
    #[arg(long, allow_hyphen_values = true)]
    pub threshold_mean: Option<f64>,
    /// identity, logit, probit, cloglog, log or loglog.
    #[arg(long)]
    pub link: Option<String>,
    /// Link direction when only `--lambda` is given.
    #[arg(long)]
    pub direction: Option<String>,
    #[arg(long)]
    pub kind: Option<String>,
    #[arg(long, default_value_t = 201)]
    pub points: usize,
}

#[derive(Debug, Args)]
pub struct CoverageArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// G_subset_G1u, G1l_subset_G or two_sided_sandwich (default: all).
    #[arg(long)]
    pub event: Option<String>,
    /// Run the least-favorable sweep of the two-sided event instead.
    #[arg(long)]
    pub sweep: bool,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubcommandKind {
    Fit,
    Critconst,
    Band,
    Levelset,
    GlmLevelset,
    Coverage,
}

impl SubcommandKind {
    pub fn name(self) -> &'static str {
        match self {
            SubcommandKind::Fit => "fit",
            SubcommandKind::Critconst => "critconst",
            SubcommandKind::Band => "band",
            SubcommandKind::Levelset => "levelset",
            SubcommandKind::GlmLevelset => "glm-levelset",
            SubcommandKind::Coverage => "coverage",
        }
    }
}

#[derive(Debug, Clone)]
pub enum ModelSource {
    Data {
        path: PathBuf,
        response: String,
        covariates: Vec<String>,
        basis: String,
    },
    /// Known-scale estimate `β̂ ~ N(β, cov)`.
    Estimate {
        beta: Vec<f64>,
        cov: DMatrix<f64>,
        basis: BasisMap,
    },
}

#[derive(Debug, Clone)]
pub enum Threshold {
    Lambda(f64),
    Mean { value: f64, link: Link },
}

/// Validated run description.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub subcommand: SubcommandKind,
    pub model: Option<ModelSource>,
    pub region: Option<BoxRegion>,
    pub alpha: f64,
    pub shape: Shape,
    pub side: Side,
    pub kinds: Vec<SetKind>,
    pub threshold: Option<Threshold>,
    pub link_name: Option<String>,
    pub direction: LinkDirection,
    pub sublevel: bool,
    pub monte_carlo: MonteCarloConfig,
    pub cache_dir: Option<PathBuf>,
    pub scenario: Option<CoverageScenario>,
    pub events: Vec<CoverageEvent>,
    pub sweep: bool,
    pub points: usize,
    pub out_dir: PathBuf,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn parse_f64(text: &str, what: &str) -> Result<f64> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| invalid(format!("{what}: '{}' is not a number", text.trim())))?;
    if !v.is_finite() {
        return Err(invalid(format!("{what} must be finite")));
    }
    Ok(v)
}

/// Parses `lo:hi[,lo:hi...]`.
pub fn parse_region(text: &str) -> Result<BoxRegion> {
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for part in text.split(',') {
        let (lo, hi) = part
            .split_once(':')
            .ok_or_else(|| invalid(format!("region component '{part}' is not lo:hi")))?;
        lower.push(parse_f64(lo, "region")?);
        upper.push(parse_f64(hi, "region")?);
    }
    BoxRegion::new(lower, upper)
}

pub fn parse_vector(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',').map(|v| parse_f64(v, what)).collect()
}

/// Parses a square matrix written row by row, rows separated by `;`.
pub fn parse_matrix(text: &str, what: &str) -> Result<DMatrix<f64>> {
    let rows: Vec<Vec<f64>> = text.split(';').map(|r| parse_vector(r, what)).collect::<Result<_>>()?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(invalid(format!("{what} must be a square matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn check_finite_f64(v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{what} must be finite")))
    }
}

fn model_source(data: Option<&DataArgs>, estimate: &EstimateArgs, basis_text: &str) -> Result<ModelSource> {
    let data_path = data.and_then(|d| d.data.clone());
    match (data_path, &estimate.beta, &estimate.cov) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => Err(invalid("--data cannot be combined with --beta/--cov")),
        (Some(path), None, None) => {
            let d = data.expect("data args present");
            let response = d.response.clone().ok_or_else(|| invalid("--data requires --response"))?;
            let covariates = d
                .covariates
                .as_deref()
                .map(|c| c.split(',').map(|s| s.trim().to_string()).collect())
                .unwrap_or_default();
            Ok(ModelSource::Data {
                path,
                response,
                covariates,
                basis: d.basis.clone(),
            })
        }
        (None, Some(b), Some(c)) => {
            let beta = parse_vector(b, "--beta")?;
            let cov = parse_matrix(c, "--cov")?;
            if cov.nrows() != beta.len() {
                return Err(Error::DimensionMismatch {
                    expected: beta.len(),
                    got: cov.nrows(),
                });
            }
            if beta.len() < 2 {
                return Err(invalid("--beta needs an intercept and at least one slope"));
            }
            let basis = parse_basis(basis_text, beta.len() - 1)?;
            if basis.output_dim() != beta.len() {
                return Err(Error::DimensionMismatch {
                    expected: basis.output_dim(),
                    got: beta.len(),
                });
            }
            Ok(ModelSource::Estimate { beta, cov, basis })
        }
        (None, Some(_), None) => Err(invalid("--beta requires --cov")),
        (None, None, Some(_)) => Err(invalid("--cov requires --beta")),
        (None, None, None) => Err(invalid("give either --data/--response or --beta/--cov")),
    }
}

struct McParts {
    region: BoxRegion,
    alpha: f64,
    shape: Shape,
    monte_carlo: MonteCarloConfig,
    cache_dir: Option<PathBuf>,
    out: PathBuf,
}

fn mc_parts(mc: &McArgs) -> Result<McParts> {
    let region = parse_region(&mc.region)?;
    validate_alpha(mc.alpha)?;
    let shape: Shape = mc.shape.parse()?;
    if mc.workers == Some(0) {
        return Err(invalid("--workers must be at least 1"));
    }
    let monte_carlo = MonteCarloConfig {
        draws: mc.draws,
        seed: mc.seed,
        workers: mc.workers.unwrap_or_else(default_workers),
        grid_points_per_dim: mc.grid.unwrap_or_else(|| default_grid_points(region.free_dims())),
        refine_iterations: mc.refine,
        allow_high_dim: mc.allow_high_dim,
    };
    monte_carlo.validate(&region)?;
    Ok(McParts {
        region,
        alpha: mc.alpha,
        shape,
        monte_carlo,
        cache_dir: mc.cache_dir.clone(),
        out: mc.out.clone(),
    })
}

fn check_points(points: usize) -> Result<usize> {
    if points < 2 {
        return Err(invalid("--points must be at least 2"));
    }
    Ok(points)
}

fn parse_kinds(kind: Option<&str>) -> Result<Vec<SetKind>> {
    match kind {
        Some(k) => Ok(vec![k.parse()?]),
        None => Ok(SetKind::ALL.to_vec()),
    }
}

impl RunConfig {
    fn base(subcommand: SubcommandKind, out_dir: PathBuf) -> Self {
        Self {
            subcommand,
            model: None,
            region: None,
            alpha: 0.05,
            shape: Shape::Hyperbolic,
            side: Side::TwoSided,
            kinds: Vec::new(),
            threshold: None,
            link_name: None,
            direction: LinkDirection::Increasing,
            sublevel: false,
            monte_carlo: MonteCarloConfig {
                draws: DEFAULT_DRAWS,
                seed: DEFAULT_SEED,
                workers: 1,
                grid_points_per_dim: 0,
                refine_iterations: DEFAULT_REFINE_ITERATIONS,
                allow_high_dim: false,
            },
            cache_dir: None,
            scenario: None,
            events: Vec::new(),
            sweep: false,
            points: 201,
            out_dir,
        }
    }

    fn with_mc(mut self, parts: McParts) -> Self {
        self.region = Some(parts.region);
        self.alpha = parts.alpha;
        self.shape = parts.shape;
        self.monte_carlo = parts.monte_carlo;
        self.cache_dir = parts.cache_dir;
        self
    }

    /// Validates parsed arguments; nothing is computed here beyond parsing
    /// the scenario file.
    pub fn from_cli(cli: Cli) -> Result<Self> {
        match cli.command {
            Command::Fit(a) => {
                let model = model_source(Some(&a.data), &EstimateArgs { beta: None, cov: None }, &a.data.basis)?;
                let mut c = Self::base(SubcommandKind::Fit, a.out);
                c.model = Some(model);
                Ok(c)
            }
            Command::Critconst(a) => {
                let model = model_source(Some(&a.data), &a.estimate, &a.data.basis)?;
                let parts = mc_parts(&a.mc)?;
                let mut c = Self::base(SubcommandKind::Critconst, parts.out.clone()).with_mc(parts);
                c.model = Some(model);
                c.check_model_dim()?;
                Ok(c)
            }
            Command::Band(a) => {
                let model = model_source(Some(&a.data), &a.estimate, &a.data.basis)?;
                let parts = mc_parts(&a.mc)?;
                let mut c = Self::base(SubcommandKind::Band, parts.out.clone()).with_mc(parts);
                c.model = Some(model);
                c.side = a.side.parse()?;
                c.points = check_points(a.points)?;
                c.check_model_dim()?;
                Ok(c)
            }
            Command::Levelset(a) => {
                let model = model_source(Some(&a.data), &a.estimate, &a.data.basis)?;
                check_finite_f64(a.lambda, "--lambda")?;
                let parts = mc_parts(&a.mc)?;
                let mut c = Self::base(SubcommandKind::Levelset, parts.out.clone()).with_mc(parts);
                c.model = Some(model);
                c.threshold = Some(Threshold::Lambda(a.lambda));
                c.kinds = parse_kinds(a.kind.as_deref())?;
                c.sublevel = a.sublevel;
                c.points = check_points(a.points)?;
                c.check_model_dim()?;
                Ok(c)
            }
            Command::GlmLevelset(a) => {
                let model = model_source(None, &a.estimate, &a.basis)?;
                let link: Option<Link> = a.link.as_deref().map(str::parse).transpose()?;
                let direction: Option<LinkDirection> = a.direction.as_deref().map(str::parse).transpose()?;
                let threshold = match (a.lambda, a.threshold_mean) {
                    (Some(_), Some(_)) => return Err(invalid("--lambda and --threshold-mean are mutually exclusive")),
                    (None, None) => return Err(invalid("give --lambda or --threshold-mean")),
                    (Some(l), None) => {
                        check_finite_f64(l, "--lambda")?;
                        Threshold::Lambda(l)
                    }
                    (None, Some(m)) => {
                        check_finite_f64(m, "--threshold-mean")?;
                        let link = link.ok_or_else(|| invalid("--threshold-mean requires --link"))?;
                        link.apply(m)?;
                        Threshold::Mean { value: m, link }
                    }
                };
                let direction = match (link.map(Link::direction), direction) {
                    (Some(l), Some(d)) if l != d => {
                        return Err(invalid("--direction contradicts the direction of --link"));
                    }
                    (Some(l), _) => l,
                    (None, Some(d)) => d,
                    (None, None) => LinkDirection::Increasing,
                };
                let parts = mc_parts(&a.mc)?;
                let mut c = Self::base(SubcommandKind::GlmLevelset, parts.out.clone()).with_mc(parts);
                c.model = Some(model);
                c.threshold = Some(threshold);
                c.link_name = a.link.map(|l| l.to_ascii_lowercase());
                c.direction = direction;
                c.kinds = parse_kinds(a.kind.as_deref())?;
                c.points = check_points(a.points)?;
                c.check_model_dim()?;
                Ok(c)
            }
            Command::Coverage(a) => {
                let mut scenario = CoverageScenario::from_toml_file(&a.scenario)?;
                match a.workers {
                    Some(0) => return Err(invalid("--workers must be at least 1")),
                    Some(w) => scenario.monte_carlo.workers = w,
                    None => {}
                }
                let events = match (&a.event, a.sweep) {
                    (Some(_), true) => return Err(invalid("--event and --sweep are mutually exclusive")),
                    (Some(e), false) => vec![e.parse()?],
                    (None, true) => vec![CoverageEvent::TwoSidedSandwich],
                    (None, false) => CoverageEvent::ALL.to_vec(),
                };
                let mut c = Self::base(SubcommandKind::Coverage, a.out);
                c.region = Some(scenario.region.clone());
                c.alpha = scenario.alpha;
                c.shape = scenario.shape;
                c.monte_carlo = scenario.monte_carlo.clone();
                c.scenario = Some(scenario);
                c.events = events;
                c.sweep = a.sweep;
                Ok(c)
            }
        }
    }

    fn check_model_dim(&self) -> Result<()> {
        if let (Some(ModelSource::Estimate { basis, .. }), Some(region)) = (&self.model, &self.region) {
            if basis.input_dim() != region.dim() {
                return Err(Error::DimensionMismatch {
                    expected: basis.input_dim(),
                    got: region.dim(),
                });
            }
        }
        Ok(())
    }
}

/// What a run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub artifacts: Vec<PathBuf>,
    pub cache: Option<CacheOutcome>,
    /// Human-readable summary printed by the binary.
    pub summary: String,
}

fn load_fit(model: &ModelSource) -> Result<RegressionFit> {
    match model {
        ModelSource::Data {
            path,
            response,
            covariates,
            basis,
        } => {
            let data = Dataset::from_csv(path, response, covariates)?;
            let basis = parse_basis(basis, data.covariate_dim())?;
            fit_ols(&data, basis)
        }
        ModelSource::Estimate { beta, cov, basis } => {
            RegressionFit::from_covariance(DVector::from_column_slice(beta), cov.clone(), *basis)
        }
    }
}

fn constants_for(config: &RunConfig, fit: &RegressionFit) -> Result<(ConstantSet, Option<CacheOutcome>)> {
    let region = config.region.as_ref().expect("validated region");
    if region.dim() != fit.covariate_dim() {
        return Err(Error::DimensionMismatch {
            expected: fit.covariate_dim(),
            got: region.dim(),
        });
    }
    match &config.cache_dir {
        Some(dir) => {
            let cache = ConstantCache::new(dir)?;
            let (set, outcome) = cache.constants(fit, region, config.shape, config.alpha, &config.monte_carlo)?;
            Ok((set, Some(outcome)))
        }
        None => Ok((
            critical_constants(fit, region, config.shape, config.alpha, &config.monte_carlo)?,
            None,
        )),
    }
}

fn write(out: &mut Vec<PathBuf>, dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    out.push(path);
    Ok(())
}

fn constant_summary(set: &ConstantSet) -> String {
    [&set.upper, &set.lower, &set.two_sided]
        .iter()
        .map(|c| format!("c[{}] = {:.4} (MC s.e. {:.4})\n", c.spec.side, c.value, c.std_error))
        .collect()
}

fn set_summary(family: &SetFamily, kinds: &[SetKind]) -> String {
    let mut s = String::new();
    for kind in kinds {
        let set = family.get(*kind);
        let geometry = match set.intervals() {
            Some([]) => "empty".to_string(),
            Some(iv) => iv
                .iter()
                .map(|(a, b)| format!("[{a:.4}, {b:.4}]"))
                .collect::<Vec<_>>()
                .join(" U "),
            None if set.is_empty => "empty".into(),
            None if set.is_all_of_region => "all of K".into(),
            None => "see results.json".into(),
        };
        s.push_str(&format!("{kind}: {geometry}\n"));
    }
    s
}

/// Executes a validated configuration.
pub fn run(config: &RunConfig) -> Result<RunOutput> {
    let out_dir = &config.out_dir;
    fs::create_dir_all(out_dir)?;
    let mut artifacts = Vec::new();
    let mut results = Results::new(config.subcommand.name());
    let mut cache = None;
    let summary;

    match config.subcommand {
        SubcommandKind::Fit => {
            let fit = load_fit(config.model.as_ref().expect("validated model"))?;
            let fs = FitSummary::new(&fit);
            summary = format!(
                "beta_hat = {:?}\nsigma_hat = {:.6}\ndof = {}\n",
                fs.beta_hat,
                fs.sigma_hat,
                fit.dof()
            );
            results.fit = Some(fs);
        }
        SubcommandKind::Critconst => {
            let fit = load_fit(config.model.as_ref().expect("validated model"))?;
            let (set, outcome) = constants_for(config, &fit)?;
            cache = outcome;
            results.fit = Some(FitSummary::new(&fit));
            results.constants = [&set.upper, &set.lower, &set.two_sided].iter().map(|c| c.record()).collect();
            summary = constant_summary(&set);
        }
        SubcommandKind::Band => {
            let fit = load_fit(config.model.as_ref().expect("validated model"))?;
            let (set, outcome) = constants_for(config, &fit)?;
            cache = outcome;
            let c = set.get(config.side);
            results.fit = Some(FitSummary::new(&fit));
            results.constants = vec![c.record()];
            emit_bands(config, &fit, &[c], None, &[], &mut artifacts)?;
            summary = format!("c[{}] = {:.4} (MC s.e. {:.4})\n", c.spec.side, c.value, c.std_error);
        }
        SubcommandKind::Levelset => {
            let fit = load_fit(config.model.as_ref().expect("validated model"))?;
            let (set, outcome) = constants_for(config, &fit)?;
            cache = outcome;
            let Some(Threshold::Lambda(lambda)) = config.threshold else {
                unreachable!("levelset always has a lambda threshold")
            };
            let family = SetFamily::build(&fit, &set, lambda, config.sublevel)?;
            fill_sets(&mut results, &fit, &set, &family, &config.kinds);
            let sets: Vec<_> = config.kinds.iter().map(|k| family.get(*k)).collect();
            let bands = [&set.upper, &set.lower, &set.two_sided];
            emit_bands(config, &fit, &bands, Some(lambda), &sets, &mut artifacts)?;
            summary = constant_summary(&set) + &set_summary(&family, &config.kinds);
        }
        SubcommandKind::GlmLevelset => {
            let Some(ModelSource::Estimate { beta, cov, basis }) = config.model.clone() else {
                unreachable!("glm-levelset always has an estimate")
            };
            let adapter = match config.threshold.clone().expect("validated threshold") {
                Threshold::Lambda(l) => LinkAdapter::new(beta, cov, config.direction, l)?,
                Threshold::Mean { value, link } => LinkAdapter::from_mean_threshold(beta, cov, link, value)?,
            }
            .with_basis(basis)?;
            let fit = adapter.to_fit()?;
            let (set, outcome) = constants_for(config, &fit)?;
            cache = outcome;
            let family = crate::level_set::glm_sets_from_constants(&adapter, &set)?;
            fill_sets(&mut results, &fit, &set, &family, &config.kinds);
            results.link = Some(LinkRecord {
                link: config.link_name.clone(),
                direction: adapter.direction,
                threshold_mean: adapter.threshold_mean,
                lambda: adapter.lambda,
            });
            let sets: Vec<_> = config.kinds.iter().map(|k| family.get(*k)).collect();
            let bands = [&set.upper, &set.lower, &set.two_sided];
            emit_bands(config, &fit, &bands, Some(adapter.lambda), &sets, &mut artifacts)?;
            summary = format!("lambda = {:.6}\n", adapter.lambda)
                + &constant_summary(&set)
                + &set_summary(&family, &config.kinds);
        }
        SubcommandKind::Coverage => {
            let scenario = config.scenario.as_ref().expect("validated scenario");
            let reports = if config.sweep {
                run_least_favorable_sweep(scenario)?
            } else {
                config
                    .events
                    .iter()
                    .map(|e| run_coverage(scenario, *e))
                    .collect::<Result<Vec<_>>>()?
            };
            let table = report::coverage_table(&reports);
            write(&mut artifacts, out_dir, "coverage.json", &report::coverage_json(&reports)?)?;
            write(&mut artifacts, out_dir, "coverage.txt", &table)?;
            return Ok(RunOutput {
                artifacts,
                cache: None,
                summary: table,
            });
        }
    }

    let json = results.to_json()?;
    write(&mut artifacts, out_dir, "results.json", &json)?;
    // Keep results.json first in the artifact list.
    artifacts.rotate_right(1);
    Ok(RunOutput {
        artifacts,
        cache,
        summary,
    })
}

fn fill_sets(results: &mut Results, fit: &RegressionFit, set: &ConstantSet, family: &SetFamily, kinds: &[SetKind]) {
    results.fit = Some(FitSummary::new(fit));
    results.constants = [&set.upper, &set.lower, &set.two_sided].iter().map(|c| c.record()).collect();
    results.sets = kinds.iter().map(|k| SetRecord::new(family.get(*k))).collect();
}

fn emit_bands(
    config: &RunConfig,
    fit: &RegressionFit,
    constants: &[&CriticalConstant],
    lambda: Option<f64>,
    sets: &[&crate::level_set::LevelSetEstimate],
    artifacts: &mut Vec<PathBuf>,
) -> Result<()> {
    let region = config.region.as_ref().expect("validated region");
    let dir = &config.out_dir;
    let csv_points = if region.dim() == 1 { config.points } else { config.points.min(51) };
    if let Some(nodes) = report::band_nodes(region, csv_points) {
        write(artifacts, dir, "bands.csv", &report::bands_csv(fit, constants, &nodes)?)?;
    }
    match region.dim() {
        1 => {
            let svg = report::plot_1d(fit, region, constants, lambda, sets, config.points)?;
            write(artifacts, dir, "plot.svg", &svg)?;
        }
        2 if !sets.is_empty() => write(artifacts, dir, "plot.svg", &report::plot_2d(region, sets))?,
        _ => {}
    }
    Ok(())
}

/// Exit status: 0 on success, 2 for invalid input, 3 for numerical failure.
pub fn exit_code(err: &Error) -> i32 {
    if err.is_numerical() {
        3
    } else {
        2
    }
}

/// Parses `args`, runs, reports diagnostics on stderr and returns the exit
/// status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = RunConfig::from_cli(cli).and_then(|config| run(&config));
    match outcome {
        Ok(out) => {
            if out.cache == Some(CacheOutcome::Hit) {
                log::info!("critical constants loaded from cache");
            }
            print!("{}", out.summary);
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            exit_code(&e)
        }
    }
}
