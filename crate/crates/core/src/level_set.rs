//! Confidence sets for the level set `G = {x ∈ K : x̃ᵀβ ≥ λ}`.
//!
//! Each set collects the points of `K` where a simultaneous band reaches the
//! threshold: `x̃ᵀβ̂ + s·c·σ̂·m(x) ≥ λ` with `s = +1` for the outer sets
//! (`G1u`, `G2u`) and `s = -1` for the inner ones (`G1l`, `G2l`).
//! Membership is exact; the extracted geometry (intervals in one dimension,
//! a mask and contour polylines in two) is descriptive.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::band::{critical_constants, validate_alpha, ConstantSet, CriticalConstant, MonteCarloConfig, Shape, Side};
use crate::contour::{marching_squares, ScalarGrid};
use crate::error::{Error, Result};
use crate::model::{expand_basis, BasisMap, BoxRegion, RegressionFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetKind {
    G1u,
    G1l,
    G2u,
    G2l,
}

impl SetKind {
    pub const ALL: [SetKind; 4] = [SetKind::G2l, SetKind::G1l, SetKind::G1u, SetKind::G2u];

    /// Band side whose constant this set is built from.
    pub fn required_side(self) -> Side {
        match self {
            SetKind::G1u => Side::Upper,
            SetKind::G1l => Side::Lower,
            SetKind::G2u | SetKind::G2l => Side::TwoSided,
        }
    }

    fn sign(self) -> f64 {
        match self {
            SetKind::G1u | SetKind::G2u => 1.0,
            SetKind::G1l | SetKind::G2l => -1.0,
        }
    }
}

impl fmt::Display for SetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SetKind::G1u => "G1u",
            SetKind::G1l => "G1l",
            SetKind::G2u => "G2u",
            SetKind::G2l => "G2l",
        })
    }
}

impl FromStr for SetKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "g1u" => Ok(SetKind::G1u),
            "g1l" => Ok(SetKind::G1l),
            "g2u" => Ok(SetKind::G2u),
            "g2l" => Ok(SetKind::G2l),
            other => Err(Error::InvalidArgument(format!("unknown set kind '{other}'"))),
        }
    }
}

/// Resolution knobs for geometry extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeometryOptions {
    /// Scan points across a 1-D region before bisection.
    pub scan_points: usize,
    /// Root tolerance in `x` for 1-D endpoints.
    pub root_tol: f64,
    /// Grid nodes per axis for 2-D masks.
    pub grid_points: usize,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        Self {
            scan_points: 2001,
            root_tol: 1e-8,
            grid_points: 201,
        }
    }
}

/// Boolean mask over a rectangular node grid (row-major, `y` outer) with
/// the traced boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMask {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub mask: Vec<bool>,
    pub polylines: Vec<Vec<[f64; 2]>>,
}

impl GridMask {
    pub fn nx(&self) -> usize {
        self.xs.len()
    }

    pub fn ny(&self) -> usize {
        self.ys.len()
    }

    pub fn at(&self, ix: usize, iy: usize) -> bool {
        self.mask[iy * self.xs.len() + ix]
    }

    /// Alternating run lengths, starting with a (possibly zero) run of
    /// `false`.
    pub fn run_lengths(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        let mut current = false;
        let mut len = 0usize;
        for &m in &self.mask {
            if m == current {
                len += 1;
            } else {
                runs.push(len);
                current = m;
                len = 1;
            }
        }
        runs.push(len);
        runs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    /// Disjoint, sorted closed intervals.
    Intervals(Vec<(f64, f64)>),
    Grid(GridMask),
    /// Regions with three or more free coordinates; membership only.
    None,
}

/// A confidence set: an exact membership rule plus extracted geometry.
#[derive(Debug, Clone)]
pub struct LevelSetEstimate {
    pub kind: SetKind,
    /// Threshold as supplied by the caller.
    pub lambda: f64,
    /// True for sets built from asymptotic (GLM-type) bands.
    pub approximate: bool,
    /// True when the set targets `{x̃ᵀβ ≤ λ}`.
    pub sublevel: bool,
    pub constant: CriticalConstant,
    pub geometry: Geometry,
    pub is_empty: bool,
    pub is_all_of_region: bool,
    /// Fit and threshold the membership rule is evaluated with; negated for
    /// sublevel sets.
    fit: RegressionFit,
    effective_lambda: f64,
}

impl LevelSetEstimate {
    pub fn region(&self) -> &BoxRegion {
        &self.constant.spec.region
    }

    pub fn effective_fit(&self) -> &RegressionFit {
        &self.fit
    }

    /// `g(x) = x̃ᵀβ̂ + s·c·σ̂·m(x) − λ`; `x` is a member iff `g(x) ≥ 0`.
    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        margin(&self.fit, &self.constant, self.kind, self.effective_lambda, x)
    }

    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        if x.len() != self.region().dim() {
            return Err(Error::DimensionMismatch {
                expected: self.region().dim(),
                got: x.len(),
            });
        }
        Ok(self.region().contains(x) && self.margin(x)? >= 0.0)
    }

    pub fn intervals(&self) -> Option<&[(f64, f64)]> {
        match &self.geometry {
            Geometry::Intervals(v) => Some(v),
            _ => None,
        }
    }
}

fn margin(fit: &RegressionFit, c: &CriticalConstant, kind: SetKind, lambda: f64, x: &[f64]) -> Result<f64> {
    let xt = expand_basis(fit.basis(), x)?;
    let center = xt.dot(fit.beta_hat());
    let m = match c.spec.shape {
        Shape::Hyperbolic => fit.quad_form(xt.as_slice()).sqrt(),
        Shape::ConstantWidth => 1.0,
    };
    Ok(center + kind.sign() * c.value * fit.sigma_hat() * m - lambda)
}

/// Builds `kind` from a fit, a matching critical constant and threshold `λ`.
pub fn confidence_set(fit: &RegressionFit, c: &CriticalConstant, lambda: f64, kind: SetKind) -> Result<LevelSetEstimate> {
    confidence_set_with(fit, c, lambda, kind, &GeometryOptions::default())
}

pub fn confidence_set_with(
    fit: &RegressionFit,
    c: &CriticalConstant,
    lambda: f64,
    kind: SetKind,
    opts: &GeometryOptions,
) -> Result<LevelSetEstimate> {
    build(fit, c, lambda, lambda, kind, false, opts)
}

/// Confidence set for the sublevel set `{x ∈ K : x̃ᵀβ ≤ λ}`, obtained as the
/// level set of the negated regression function at `−λ`.
pub fn sublevel_set(fit: &RegressionFit, c: &CriticalConstant, lambda: f64, kind: SetKind) -> Result<LevelSetEstimate> {
    sublevel_set_with(fit, c, lambda, kind, &GeometryOptions::default())
}

pub fn sublevel_set_with(
    fit: &RegressionFit,
    c: &CriticalConstant,
    lambda: f64,
    kind: SetKind,
    opts: &GeometryOptions,
) -> Result<LevelSetEstimate> {
    build(&fit.negated(), c, lambda, -lambda, kind, true, opts)
}

fn build(
    fit: &RegressionFit,
    c: &CriticalConstant,
    lambda: f64,
    effective_lambda: f64,
    kind: SetKind,
    sublevel: bool,
    opts: &GeometryOptions,
) -> Result<LevelSetEstimate> {
    if c.spec.side != kind.required_side() {
        return Err(Error::KindMismatch {
            side: c.spec.side.to_string(),
            kind: kind.to_string(),
        });
    }
    if !lambda.is_finite() {
        return Err(Error::NonFinite("threshold"));
    }
    let region = &c.spec.region;
    if region.dim() != fit.covariate_dim() {
        return Err(Error::DimensionMismatch {
            expected: fit.covariate_dim(),
            got: region.dim(),
        });
    }
    let g = |x: &[f64]| margin(fit, c, kind, effective_lambda, x);

    let (geometry, is_empty, is_all) = match region.dim() {
        1 => {
            let intervals = extract_intervals(&g, region.lower()[0], region.upper()[0], opts)?;
            let empty = intervals.is_empty();
            let all = intervals.len() == 1
                && intervals[0].0 == region.lower()[0]
                && intervals[0].1 == region.upper()[0];
            (Geometry::Intervals(intervals), empty, all)
        }
        2 => {
            let grid = extract_grid(&g, region, opts)?;
            let empty = grid.mask.iter().all(|m| !m);
            let all = grid.mask.iter().all(|m| *m);
            (Geometry::Grid(grid), empty, all)
        }
        _ => {
            let mut any = false;
            let mut every = true;
            for x in probe_grid(region, 4096) {
                let inside = g(&x)? >= 0.0;
                any |= inside;
                every &= inside;
            }
            (Geometry::None, !any, every)
        }
    };

    Ok(LevelSetEstimate {
        kind,
        lambda,
        approximate: false,
        sublevel,
        constant: c.clone(),
        geometry,
        is_empty,
        is_all_of_region: is_all,
        fit: fit.clone(),
        effective_lambda,
    })
}

/// Scans for sign changes of `g` and bisects each bracket. Endpoints are
/// the member side of the final bracket, so they belong to the set.
fn extract_intervals(
    g: &impl Fn(&[f64]) -> Result<f64>,
    lo: f64,
    hi: f64,
    opts: &GeometryOptions,
) -> Result<Vec<(f64, f64)>> {
    let member = |x: f64| -> Result<bool> { Ok(g(&[x])? >= 0.0) };
    if lo == hi {
        return Ok(if member(lo)? { vec![(lo, hi)] } else { vec![] });
    }
    let n = opts.scan_points.max(2);
    let xs: Vec<f64> = (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect();
    let inside: Vec<bool> = xs.iter().map(|&x| member(x)).collect::<Result<_>>()?;

    let bisect = |mut a: f64, mut b: f64, a_inside: bool| -> Result<f64> {
        // Invariant: member(a) == a_inside, member(b) == !a_inside.
        while (b - a).abs() > opts.root_tol {
            let mid = 0.5 * (a + b);
            if member(mid)? == a_inside {
                a = mid;
            } else {
                b = mid;
            }
        }
        Ok(if a_inside { a } else { b })
    };

    let mut intervals = Vec::new();
    let mut start = if inside[0] { Some(xs[0]) } else { None };
    for i in 1..n {
        match (inside[i - 1], inside[i]) {
            (false, true) => start = Some(bisect(xs[i - 1], xs[i], false)?),
            (true, false) => {
                let end = bisect(xs[i - 1], xs[i], true)?;
                intervals.push((start.take().expect("interval opened"), end));
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        intervals.push((s, hi));
    }
    Ok(intervals)
}

fn extract_grid(g: &impl Fn(&[f64]) -> Result<f64>, region: &BoxRegion, opts: &GeometryOptions) -> Result<GridMask> {
    let xs = region.axis_nodes(0, opts.grid_points);
    let ys = region.axis_nodes(1, opts.grid_points);
    let mut values = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            values.push(g(&[x, y])?);
        }
    }
    let mask = values.iter().map(|v| *v >= 0.0).collect();
    let grid = ScalarGrid {
        xs: xs.clone(),
        ys: ys.clone(),
        values,
    };
    let polylines = marching_squares(&grid, 0.0);
    Ok(GridMask { xs, ys, mask, polylines })
}

/// Deterministic probe nodes covering `region` (vertices included) with at
/// least `target` nodes when the region has free coordinates.
pub fn probe_grid(region: &BoxRegion, target: usize) -> Vec<Vec<f64>> {
    let free = region.free_dims();
    let per_axis = if free == 0 {
        1
    } else {
        let mut n = (target as f64).powf(1.0 / free as f64).floor() as usize;
        while n.pow(free as u32) < target {
            n += 1;
        }
        n.max(2)
    };
    let axes: Vec<Vec<f64>> = (0..region.dim()).map(|i| region.axis_nodes(i, per_axis)).collect();
    let total: usize = axes.iter().map(Vec::len).product();
    let mut out = Vec::with_capacity(total);
    for mut idx in 0..total {
        let mut x = vec![0.0; axes.len()];
        for i in (0..axes.len()).rev() {
            x[i] = axes[i][idx % axes[i].len()];
            idx /= axes[i].len();
        }
        out.push(x);
    }
    out
}

/// The four sets of one problem, ordered from innermost to outermost.
#[derive(Debug, Clone)]
pub struct SetFamily {
    pub g2l: LevelSetEstimate,
    pub g1l: LevelSetEstimate,
    pub g1u: LevelSetEstimate,
    pub g2u: LevelSetEstimate,
}

impl SetFamily {
    pub fn build(fit: &RegressionFit, constants: &ConstantSet, lambda: f64, sublevel: bool) -> Result<Self> {
        Self::build_with(fit, constants, lambda, sublevel, &GeometryOptions::default())
    }

    pub fn build_with(
        fit: &RegressionFit,
        constants: &ConstantSet,
        lambda: f64,
        sublevel: bool,
        opts: &GeometryOptions,
    ) -> Result<Self> {
        let make = |kind: SetKind| {
            let c = constants.get(kind.required_side());
            if sublevel {
                sublevel_set_with(fit, c, lambda, kind, opts)
            } else {
                confidence_set_with(fit, c, lambda, kind, opts)
            }
        };
        Ok(Self {
            g2l: make(SetKind::G2l)?,
            g1l: make(SetKind::G1l)?,
            g1u: make(SetKind::G1u)?,
            g2u: make(SetKind::G2u)?,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = &LevelSetEstimate> {
        [&self.g2l, &self.g1l, &self.g1u, &self.g2u].into_iter()
    }

    pub fn get(&self, kind: SetKind) -> &LevelSetEstimate {
        match kind {
            SetKind::G2l => &self.g2l,
            SetKind::G1l => &self.g1l,
            SetKind::G1u => &self.g1u,
            SetKind::G2u => &self.g2u,
        }
    }

    fn mark_approximate(&mut self) {
        for s in [&mut self.g2l, &mut self.g1l, &mut self.g1u, &mut self.g2u] {
            s.approximate = true;
        }
    }
}

pub const DEFAULT_PROBE_NODES: usize = 10_000;

/// Checks `G2l ⊆ G1l ⊆ G1u ⊆ G2u` on a deterministic probe grid.
pub fn nesting_check(sets: &SetFamily) -> Result<bool> {
    nesting_check_with(sets, DEFAULT_PROBE_NODES)
}

pub fn nesting_check_with(sets: &SetFamily, probe_nodes: usize) -> Result<bool> {
    let expected = [SetKind::G2l, SetKind::G1l, SetKind::G1u, SetKind::G2u];
    for (set, kind) in sets.iter().zip(expected) {
        if set.kind != kind {
            return Err(Error::MismatchedProblems(format!("expected {kind}, found {}", set.kind)));
        }
    }
    let first = &sets.g2l;
    for other in sets.iter().skip(1) {
        if other.region() != first.region()
            || other.lambda != first.lambda
            || other.sublevel != first.sublevel
            || other.fit.beta_hat() != first.fit.beta_hat()
            || other.fit.xtx_inv() != first.fit.xtx_inv()
            || other.fit.sigma_hat_sq() != first.fit.sigma_hat_sq()
        {
            return Err(Error::MismatchedProblems(
                "sets differ in fit, threshold or region".into(),
            ));
        }
    }
    for x in probe_grid(first.region(), probe_nodes) {
        let m: Vec<bool> = sets.iter().map(|s| s.contains(&x)).collect::<Result<_>>()?;
        if (m[0] && !m[1]) || (m[1] && !m[2]) || (m[2] && !m[3]) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Monotone link `L` with `L[E(Y)] = x̃ᵀβ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Link {
    Identity,
    Logit,
    Probit,
    Cloglog,
    Log,
    /// `log(−log μ)`, decreasing in `μ`.
    Loglog,
}

impl Link {
    pub fn apply(self, mean: f64) -> Result<f64> {
        let in_unit = mean > 0.0 && mean < 1.0;
        let v = match self {
            Link::Identity => mean,
            Link::Log if mean > 0.0 => mean.ln(),
            Link::Logit if in_unit => (mean / (1.0 - mean)).ln(),
            Link::Probit if in_unit => crate::distributions::normal_quantile(mean),
            Link::Cloglog if in_unit => (-(1.0 - mean).ln()).ln(),
            Link::Loglog if in_unit => (-mean.ln()).ln(),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "threshold {mean} is outside the domain of the {self:?} link"
                )))
            }
        };
        Ok(v)
    }

    pub fn direction(self) -> LinkDirection {
        match self {
            Link::Loglog => LinkDirection::Decreasing,
            _ => LinkDirection::Increasing,
        }
    }
}

impl FromStr for Link {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" => Ok(Link::Identity),
            "logit" => Ok(Link::Logit),
            "probit" => Ok(Link::Probit),
            "cloglog" => Ok(Link::Cloglog),
            "log" => Ok(Link::Log),
            "loglog" => Ok(Link::Loglog),
            other => Err(Error::InvalidArgument(format!("unknown link '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkDirection {
    Increasing,
    Decreasing,
}

impl FromStr for LinkDirection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "increasing" => Ok(LinkDirection::Increasing),
            "decreasing" => Ok(LinkDirection::Decreasing),
            other => Err(Error::InvalidArgument(format!("unknown link direction '{other}'"))),
        }
    }
}

/// An asymptotically normal estimate `β̂ ~ N(β, cov)` of a linear predictor
/// with a threshold already mapped to the predictor scale.
#[derive(Debug, Clone)]
pub struct LinkAdapter {
    pub beta_hat: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub direction: LinkDirection,
    /// Threshold on the mean-response scale, when known.
    pub threshold_mean: Option<f64>,
    /// Threshold on the linear-predictor scale.
    pub lambda: f64,
    pub basis: BasisMap,
}

impl LinkAdapter {
    pub fn new(beta_hat: Vec<f64>, cov: DMatrix<f64>, direction: LinkDirection, lambda: f64) -> Result<Self> {
        if beta_hat.len() < 2 {
            return Err(Error::InvalidArgument("need an intercept and at least one slope".into()));
        }
        let basis = BasisMap::affine(beta_hat.len() - 1)?;
        Ok(Self {
            beta_hat: DVector::from_vec(beta_hat),
            cov,
            direction,
            threshold_mean: None,
            lambda,
            basis,
        })
    }

    pub fn from_mean_threshold(beta_hat: Vec<f64>, cov: DMatrix<f64>, link: Link, threshold_mean: f64) -> Result<Self> {
        let lambda = link.apply(threshold_mean)?;
        let mut this = Self::new(beta_hat, cov, link.direction(), lambda)?;
        this.threshold_mean = Some(threshold_mean);
        Ok(this)
    }

    pub fn with_basis(mut self, basis: BasisMap) -> Result<Self> {
        if basis.output_dim() != self.beta_hat.len() {
            return Err(Error::DimensionMismatch {
                expected: self.beta_hat.len(),
                got: basis.output_dim(),
            });
        }
        self.basis = basis;
        Ok(self)
    }

    /// `σ̂ = 1`, `ν = ∞`, covariance in place of `(XᵀX)⁻¹`.
    pub fn to_fit(&self) -> Result<RegressionFit> {
        RegressionFit::from_covariance(self.beta_hat.clone(), self.cov.clone(), self.basis)
    }
}

/// Approximate confidence set of one kind for a monotone-link model.
pub fn glm_confidence_set(
    adapter: &LinkAdapter,
    region: &BoxRegion,
    alpha: f64,
    kind: SetKind,
    config: &MonteCarloConfig,
) -> Result<LevelSetEstimate> {
    let fit = adapter.to_fit()?;
    validate_alpha(alpha)?;
    let spec = crate::band::BandSpec::new(kind.required_side(), Shape::Hyperbolic, alpha, region.clone())?;
    let c = crate::band::critical_constant(&fit, &spec, config)?;
    let mut set = match adapter.direction {
        LinkDirection::Increasing => confidence_set(&fit, &c, adapter.lambda, kind)?,
        LinkDirection::Decreasing => sublevel_set(&fit, &c, adapter.lambda, kind)?,
    };
    set.approximate = true;
    Ok(set)
}

/// All four approximate sets from one shared pivot simulation.
pub fn glm_confidence_sets(
    adapter: &LinkAdapter,
    region: &BoxRegion,
    alpha: f64,
    config: &MonteCarloConfig,
) -> Result<(SetFamily, ConstantSet)> {
    let fit = adapter.to_fit()?;
    let constants = critical_constants(&fit, region, Shape::Hyperbolic, alpha, config)?;
    let mut family = SetFamily::build(
        &fit,
        &constants,
        adapter.lambda,
        adapter.direction == LinkDirection::Decreasing,
    )?;
    family.mark_approximate();
    Ok((family, constants))
}

/// Same as [`glm_confidence_sets`] with externally supplied constants.
pub fn glm_sets_from_constants(adapter: &LinkAdapter, constants: &ConstantSet) -> Result<SetFamily> {
    let fit = adapter.to_fit()?;
    let mut family = SetFamily::build(
        &fit,
        constants,
        adapter.lambda,
        adapter.direction == LinkDirection::Decreasing,
    )?;
    family.mark_approximate();
    Ok(family)
}
