//! Simultaneous confidence bands: Monte Carlo critical constants and band
//! evaluation.
//!
//! The critical constant is the `1 - α` quantile of the pivotal statistic
//! `sup_{x ∈ K} ±x̃ᵀZ / (S · m(x))` with `Z ~ N(0, (XᵀX)⁻¹)` and
//! `S ~ sqrt(χ²_ν / ν)` independent. The inner supremum is found by a dense
//! grid followed by coordinate-wise golden-section refinement. For an
//! affine basis with hyperbolic width the stationary point of the ratio on
//! each face of `K` is also known in closed form and is added as a
//! candidate.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BasisMap, BoxRegion, Dof, RegressionFit};
use crate::rng::{self, DOMAIN_PIVOT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Upper,
    Lower,
    TwoSided,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Upper => "upper",
            Side::Lower => "lower",
            Side::TwoSided => "two-sided",
        })
    }
}

impl FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper" => Ok(Side::Upper),
            "lower" => Ok(Side::Lower),
            "two-sided" | "two_sided" | "both" => Ok(Side::TwoSided),
            other => Err(Error::InvalidArgument(format!("unknown side '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    /// Half-width proportional to `m(x)`.
    Hyperbolic,
    /// Half-width constant over the region (`m(x) = 1`).
    ConstantWidth,
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Shape::Hyperbolic => "hyperbolic",
            Shape::ConstantWidth => "constant-width",
        })
    }
}

impl FromStr for Shape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hyperbolic" => Ok(Shape::Hyperbolic),
            "constant-width" | "constant" => Ok(Shape::ConstantWidth),
            other => Err(Error::InvalidArgument(format!("unknown band shape '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub side: Side,
    pub shape: Shape,
    pub alpha: f64,
    pub region: BoxRegion,
}

impl BandSpec {
    pub fn new(side: Side, shape: Shape, alpha: f64, region: BoxRegion) -> Result<Self> {
        validate_alpha(alpha)?;
        Ok(Self {
            side,
            shape,
            alpha,
            region,
        })
    }
}

pub(crate) fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub draws: usize,
    pub seed: u64,
    pub workers: usize,
    pub grid_points_per_dim: usize,
    pub refine_iterations: usize,
    /// Permits regions with more than three free coordinates.
    #[serde(default)]
    pub allow_high_dim: bool,
}

pub const DEFAULT_DRAWS: usize = 200_000;
pub const DEFAULT_SEED: u64 = 20_220_601;
pub const DEFAULT_REFINE_ITERATIONS: usize = 40;
pub const MIN_DRAWS: usize = 1000;

impl MonteCarloConfig {
    /// Defaults sized for a region with `free_dims` non-degenerate coordinates.
    pub fn for_region(region: &BoxRegion) -> Self {
        Self {
            draws: DEFAULT_DRAWS,
            seed: DEFAULT_SEED,
            workers: default_workers(),
            grid_points_per_dim: default_grid_points(region.free_dims()),
            refine_iterations: DEFAULT_REFINE_ITERATIONS,
            allow_high_dim: false,
        }
    }

    pub fn validate(&self, region: &BoxRegion) -> Result<()> {
        if self.draws < MIN_DRAWS {
            return Err(Error::InvalidArgument(format!(
                "at least {MIN_DRAWS} draws are needed for quantile estimation, got {}",
                self.draws
            )));
        }
        self.validate_grid(region)
    }

    fn validate_grid(&self, region: &BoxRegion) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::InvalidArgument("workers must be positive".into()));
        }
        if self.grid_points_per_dim < 2 {
            return Err(Error::InvalidArgument("grid_points_per_dim must be at least 2".into()));
        }
        if region.free_dims() > 3 && !self.allow_high_dim {
            return Err(Error::InvalidArgument(format!(
                "region has {} free coordinates; more than 3 needs an explicit override",
                region.free_dims()
            )));
        }
        Ok(())
    }
}

pub fn default_grid_points(free_dims: usize) -> usize {
    if free_dims <= 2 {
        201
    } else {
        51
    }
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// A calibrated critical constant with its Monte Carlo standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalConstant {
    pub value: f64,
    pub std_error: f64,
    pub spec: BandSpec,
    pub config: MonteCarloConfig,
}

impl CriticalConstant {
    /// A constant supplied from outside (e.g. a reference value); carries no
    /// simulation error.
    pub fn fixed(value: f64, spec: BandSpec) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidArgument(format!("critical constant must be >= 0, got {value}")));
        }
        let config = MonteCarloConfig {
            draws: 0,
            seed: 0,
            workers: 1,
            grid_points_per_dim: 0,
            refine_iterations: 0,
            allow_high_dim: false,
        };
        Ok(Self {
            value,
            std_error: 0.0,
            spec,
            config,
        })
    }

    pub fn record(&self) -> ConstantRecord {
        ConstantRecord {
            value: self.value,
            std_error: self.std_error,
            alpha: self.spec.alpha,
            side: self.spec.side,
            shape: self.spec.shape,
            region: self.spec.region.clone(),
            draws: self.config.draws,
            seed: self.config.seed,
            grid_points_per_dim: self.config.grid_points_per_dim,
            refine_iterations: self.config.refine_iterations,
        }
    }
}

/// Flat JSON form of a [`CriticalConstant`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantRecord {
    pub value: f64,
    pub std_error: f64,
    pub alpha: f64,
    pub side: Side,
    pub shape: Shape,
    pub region: BoxRegion,
    pub draws: usize,
    pub seed: u64,
    pub grid_points_per_dim: usize,
    pub refine_iterations: usize,
}

impl ConstantRecord {
    pub fn into_constant(self, workers: usize) -> Result<CriticalConstant> {
        let spec = BandSpec::new(self.side, self.shape, self.alpha, self.region)?;
        Ok(CriticalConstant {
            value: self.value,
            std_error: self.std_error,
            spec,
            config: MonteCarloConfig {
                draws: self.draws,
                seed: self.seed,
                workers,
                grid_points_per_dim: self.grid_points_per_dim,
                refine_iterations: self.refine_iterations,
                allow_high_dim: true,
            },
        })
    }
}

const MULTI_START_FRACTION: f64 = 0.01;
const MAX_STARTS: usize = 8;
const SWEEPS_MULTI_DIM: usize = 6;
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizer of `x̃ᵀz / m(x)` over a box for a fixed fit geometry.
///
/// The unit vectors `x̃ / m(x)` at every grid node are computed once, so a
/// grid pass per `z` is a single matrix-vector product. For an affine basis
/// with hyperbolic shape the maximum lies at a vertex or at the stationary
/// point of some face, so those candidates replace the grid.
#[derive(Debug, Clone)]
pub struct SupMaximizer {
    basis: BasisMap,
    xtx_inv: Vec<f64>,
    k: usize,
    shape: Shape,
    region: BoxRegion,
    axes: Vec<Vec<f64>>,
    strides: Vec<usize>,
    units: Vec<f64>,
    steps: Vec<f64>,
    refine_iterations: usize,
    faces: Vec<Face>,
    exact: bool,
}

/// A face of the box with at least one free coordinate, in homogeneous
/// coordinates `x̃ = M·(1, y)` where `y` are the free coordinates.
///
/// On the face, `x̃ᵀz / m(x)` is stationary only along `u ∝ (MᵀAM)⁻¹Mᵀz`
/// (a maximum when `u₀ > 0`), with value `sqrt(zᵀM (MᵀAM)⁻¹ Mᵀz)`.
#[derive(Debug, Clone)]
struct Face {
    m: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    /// `(index, lower, upper)` of each free coordinate.
    free: Vec<(usize, f64, f64)>,
}

impl Face {
    fn candidate(&self, z: &[f64]) -> Option<f64> {
        let zf = self.m.tr_mul(&DVector::from_column_slice(z));
        let w = self.chol.solve(&zf);
        if w[0].is_nan() || w[0] <= 0.0 {
            return None;
        }
        let inside = self.free.iter().enumerate().all(|(j, &(_, lo, hi))| {
            let y = w[j + 1] / w[0];
            y >= lo && y <= hi
        });
        inside.then(|| zf.dot(&w).max(0.0).sqrt())
    }
}

/// Faces of `region` with at least one free coordinate; pinned coordinates
/// stay fixed on every face.
fn affine_faces(region: &BoxRegion, a: &DMatrix<f64>) -> Vec<Face> {
    let d = region.dim();
    let k = d + 1;
    let movable: Vec<usize> = (0..d).filter(|&i| !region.is_degenerate(i)).collect();
    let mut faces = Vec::new();
    // Each movable coordinate is at its lower bound (0), upper bound (1) or free (2).
    for code in 0..3usize.pow(movable.len() as u32) {
        let mut choice = vec![0usize; movable.len()];
        let mut c = code;
        for slot in choice.iter_mut() {
            *slot = c % 3;
            c /= 3;
        }
        let free: Vec<(usize, f64, f64)> = movable
            .iter()
            .zip(&choice)
            .filter(|(_, &ch)| ch == 2)
            .map(|(&i, _)| (i, region.lower()[i], region.upper()[i]))
            .collect();
        if free.is_empty() {
            continue;
        }
        let mut m = DMatrix::zeros(k, free.len() + 1);
        m[(0, 0)] = 1.0;
        for i in 0..d {
            let fixed = match movable.iter().position(|&j| j == i).map(|p| choice[p]) {
                Some(0) => region.lower()[i],
                Some(1) => region.upper()[i],
                Some(_) => continue,
                None => region.lower()[i],
            };
            m[(i + 1, 0)] = fixed;
        }
        for (col, &(i, _, _)) in free.iter().enumerate() {
            m[(i + 1, col + 1)] = 1.0;
        }
        let af = m.tr_mul(&(a * &m));
        if let Some(chol) = Cholesky::new(af) {
            faces.push(Face { m, chol, free });
        }
    }
    faces
}

/// Corners of `region`; pinned coordinates contribute a single value.
fn box_vertices(region: &BoxRegion) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::with_capacity(region.dim())];
    for i in 0..region.dim() {
        let ends: &[f64] = if region.is_degenerate(i) {
            &region.lower()[i..=i]
        } else {
            &[region.lower()[i], region.upper()[i]]
        };
        out = out
            .into_iter()
            .flat_map(|p| {
                ends.iter().map(move |&e| {
                    let mut q = p.clone();
                    q.push(e);
                    q
                })
            })
            .collect();
    }
    out
}

impl SupMaximizer {
    pub fn new(fit: &RegressionFit, region: &BoxRegion, shape: Shape, config: &MonteCarloConfig) -> Result<Self> {
        config.validate_grid(region)?;
        let basis = *fit.basis();
        if region.dim() != basis.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: basis.input_dim(),
                got: region.dim(),
            });
        }
        let k = basis.output_dim();
        let d = region.dim();
        let axes: Vec<Vec<f64>> = (0..d)
            .map(|i| region.axis_nodes(i, config.grid_points_per_dim))
            .collect();
        let steps: Vec<f64> = axes
            .iter()
            .map(|a| if a.len() > 1 { a[1] - a[0] } else { 0.0 })
            .collect();
        let mut strides = vec![1usize; d];
        for i in (0..d.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * axes[i + 1].len();
        }
        let node_count: usize = axes.iter().map(Vec::len).product();
        if node_count == 0 {
            return Err(Error::EmptyRegion);
        }

        let mut this = Self {
            basis,
            xtx_inv: fit.xtx_inv().iter().copied().collect(),
            k,
            shape,
            region: region.clone(),
            axes,
            strides,
            units: Vec::new(),
            steps,
            refine_iterations: config.refine_iterations,
            faces: Vec::new(),
            exact: false,
        };
        let mut points: Vec<Vec<f64>> = Vec::new();
        if matches!(basis, BasisMap::Affine { .. }) && shape == Shape::Hyperbolic {
            this.faces = affine_faces(region, fit.xtx_inv());
            this.exact = true;
            points = box_vertices(region);
        } else {
            let mut x = vec![0.0; d];
            for node in 0..node_count {
                this.node_point(node, &mut x);
                points.push(x.clone());
            }
        }
        this.units = vec![0.0; points.len() * k];
        let mut xt = vec![0.0; k];
        for (node, x) in points.iter().enumerate() {
            basis.expand_into(x, &mut xt)?;
            let m = this.width(&xt);
            for (dst, &v) in this.units[node * k..(node + 1) * k].iter_mut().zip(&xt) {
                *dst = v / m;
            }
        }
        Ok(this)
    }

    fn node_point(&self, node: usize, x: &mut [f64]) {
        for (i, axis) in self.axes.iter().enumerate() {
            x[i] = axis[(node / self.strides[i]) % axis.len()];
        }
    }

    fn width(&self, xt: &[f64]) -> f64 {
        match self.shape {
            Shape::ConstantWidth => 1.0,
            Shape::Hyperbolic => {
                let k = self.k;
                let mut acc = 0.0;
                // xtx_inv is stored column-major; it is symmetric.
                for i in 0..k {
                    let col = &self.xtx_inv[i * k..(i + 1) * k];
                    let row: f64 = col.iter().zip(xt).map(|(a, b)| a * b).sum();
                    acc += xt[i] * row;
                }
                acc.max(0.0).sqrt()
            }
        }
    }

    fn ratio_at(&self, z: &[f64], x: &[f64], xt: &mut [f64]) -> f64 {
        // Points passed here always lie in the region and match the basis.
        self.basis.expand_into(x, xt).expect("dimension checked at construction");
        let num: f64 = xt.iter().zip(z).map(|(a, b)| a * b).sum();
        num / self.width(xt)
    }

    fn is_local_max(&self, values: &[f64], node: usize) -> bool {
        let v = values[node];
        for (i, axis) in self.axes.iter().enumerate() {
            let idx = (node / self.strides[i]) % axis.len();
            if idx > 0 && values[node - self.strides[i]] > v {
                return false;
            }
            if idx + 1 < axis.len() && values[node + self.strides[i]] > v {
                return false;
            }
        }
        true
    }

    /// `sup_x x̃ᵀz / (denom_scale · m(x))`; the absolute value of the
    /// numerator is used when `signed` is false.
    pub fn sup_ratio(&self, z: &[f64], denom_scale: f64, signed: bool) -> f64 {
        if signed {
            self.signed_sup(z) / denom_scale
        } else {
            let neg: Vec<f64> = z.iter().map(|v| -v).collect();
            self.signed_sup(z).max(self.signed_sup(&neg)) / denom_scale
        }
    }

    /// Signed supremum of `x̃ᵀz / m(x)`; a lower bound on the exact value.
    pub fn signed_sup(&self, z: &[f64]) -> f64 {
        debug_assert_eq!(z.len(), self.k);
        let k = self.k;
        let values: Vec<f64> = self
            .units
            .chunks_exact(k)
            .map(|u| u.iter().zip(z).map(|(a, b)| a * b).sum())
            .collect();
        let (best_node, best) = values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
        if self.exact {
            return self.faces.iter().filter_map(|f| f.candidate(z)).fold(best, f64::max);
        }
        if self.refine_iterations == 0 || self.region.free_dims() == 0 {
            return best;
        }

        let cutoff = best - MULTI_START_FRACTION * best.abs();
        let mut starts: Vec<(usize, f64)> = values
            .iter()
            .copied()
            .enumerate()
            .filter(|&(i, v)| v >= cutoff && (i == best_node || self.is_local_max(&values, i)))
            .collect();
        starts.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        starts.truncate(MAX_STARTS);

        let mut overall = best;
        let mut x = vec![0.0; self.region.dim()];
        let mut xt = vec![0.0; k];
        for (node, value) in starts {
            self.node_point(node, &mut x);
            overall = overall.max(self.refine(z, &mut x, value, &mut xt));
        }
        overall
    }

    fn refine(&self, z: &[f64], x: &mut [f64], mut fx: f64, xt: &mut [f64]) -> f64 {
        let sweeps = if self.region.free_dims() == 1 { 1 } else { SWEEPS_MULTI_DIM };
        for _ in 0..sweeps {
            let before = fx;
            for i in 0..x.len() {
                if self.region.is_degenerate(i) {
                    continue;
                }
                let lo = (x[i] - self.steps[i]).max(self.region.lower()[i]);
                let hi = (x[i] + self.steps[i]).min(self.region.upper()[i]);
                let (xi, fi) = self.golden_along(z, x, i, lo, hi, xt);
                if fi > fx {
                    fx = fi;
                    x[i] = xi;
                }
            }
            if fx <= before {
                break;
            }
        }
        fx
    }

    /// Golden-section maximization along coordinate `i`; returns the best
    /// point evaluated (bracket ends included).
    fn golden_along(&self, z: &[f64], x: &mut [f64], i: usize, lo: f64, hi: f64, xt: &mut [f64]) -> (f64, f64) {
        let saved = x[i];
        let mut eval = |t: f64, x: &mut [f64]| {
            x[i] = t;
            self.ratio_at(z, x, xt)
        };
        let mut best = (lo, eval(lo, x));
        let f_hi = eval(hi, x);
        if f_hi > best.1 {
            best = (hi, f_hi);
        }
        let (mut a, mut b) = (lo, hi);
        let mut c = b - INV_PHI * (b - a);
        let mut d = a + INV_PHI * (b - a);
        let mut fc = eval(c, x);
        let mut fd = eval(d, x);
        for _ in 0..self.refine_iterations {
            if fc >= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - INV_PHI * (b - a);
                fc = eval(c, x);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + INV_PHI * (b - a);
                fd = eval(d, x);
            }
            for (t, f) in [(c, fc), (d, fd)] {
                if f > best.1 {
                    best = (t, f);
                }
            }
        }
        x[i] = saved;
        best
    }
}

/// One-shot form of [`SupMaximizer::sup_ratio`].
pub fn sup_ratio(
    z: &[f64],
    denom_scale: f64,
    fit: &RegressionFit,
    region: &BoxRegion,
    shape: Shape,
    signed: bool,
    config: &MonteCarloConfig,
) -> Result<f64> {
    if z.len() != fit.basis().output_dim() {
        return Err(Error::DimensionMismatch {
            expected: fit.basis().output_dim(),
            got: z.len(),
        });
    }
    if denom_scale.is_nan() || denom_scale <= 0.0 {
        return Err(Error::InvalidArgument("denominator scale must be positive".into()));
    }
    Ok(SupMaximizer::new(fit, region, shape, config)?.sup_ratio(z, denom_scale, signed))
}

/// Simulated pivot values, one per draw, for each side requested.
///
/// `upper[j]` is `sup x̃ᵀ(−Z_j) / (S_j m)`, the statistic whose quantile
/// calibrates the upper band; `lower[j]` uses `+Z_j`. The two-sided pivot is
/// their maximum, so all three share the same underlying streams.
#[derive(Debug, Clone)]
pub struct PivotSample {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
}

impl PivotSample {
    pub fn len(&self) -> usize {
        self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.upper.is_empty()
    }

    pub fn values(&self, side: Side) -> Vec<f64> {
        match side {
            Side::Upper => self.upper.clone(),
            Side::Lower => self.lower.clone(),
            Side::TwoSided => self
                .upper
                .iter()
                .zip(&self.lower)
                .map(|(u, l)| u.max(*l))
                .collect(),
        }
    }

    /// `(quantile, standard error)` at level `1 - alpha` for `side`.
    pub fn quantile(&self, side: Side, alpha: f64) -> (f64, f64) {
        let mut v = self.values(side);
        v.sort_by(f64::total_cmp);
        empirical_quantile(&v, alpha)
    }
}

/// Order statistic `⌈(1-α)N⌉` of sorted values plus its standard error from
/// the spacing of neighbouring order statistics.
pub fn empirical_quantile(sorted: &[f64], alpha: f64) -> (f64, f64) {
    let n = sorted.len();
    assert!(n > 0, "quantile of an empty sample");
    let r = order_index(n, alpha);
    let value = sorted[r - 1];
    let k = (n as f64).sqrt().ceil() as usize;
    let lo = r.saturating_sub(k).max(1);
    let hi = (r + k).min(n);
    let se = if hi > lo {
        let spacing = sorted[hi - 1] - sorted[lo - 1];
        (alpha * (1.0 - alpha) / n as f64).sqrt() * n as f64 * spacing / (hi - lo) as f64
    } else {
        0.0
    };
    (value, se)
}

/// 1-based rank `⌈(1-α)N⌉`, clamped to `[1, N]`.
pub fn order_index(n: usize, alpha: f64) -> usize {
    let target = (1.0 - alpha) * n as f64;
    // Absorb representation error such as 0.95 * 200000 = 190000.00000000003.
    let r = (target - 1e-9 * target.max(1.0)).ceil() as usize;
    r.clamp(1, n)
}

fn draw_scale(rng: &mut rand_chacha::ChaCha8Rng, dof: Dof) -> f64 {
    match dof {
        Dof::Infinite => 1.0,
        Dof::Finite(nu) => {
            let nu = nu as f64;
            let gamma = Gamma::new(0.5 * nu, 2.0).expect("positive shape");
            (gamma.sample(rng) / nu).sqrt()
        }
    }
}

pub(crate) fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}

/// Simulates `config.draws` pivots. Draw `j` uses only the stream
/// `(config.seed, j)`, so the result does not depend on `config.workers`.
pub fn simulate_pivots(
    fit: &RegressionFit,
    region: &BoxRegion,
    shape: Shape,
    config: &MonteCarloConfig,
) -> Result<PivotSample> {
    config.validate(region)?;
    let maximizer = SupMaximizer::new(fit, region, shape, config)?;
    let chol = fit.cholesky_lower().clone();
    let k = chol.nrows();
    let dof = fit.dof();
    let pool = thread_pool(config.workers)?;

    let pairs: Vec<(f64, f64)> = pool.install(|| {
        (0..config.draws)
            .into_par_iter()
            .map(|j| {
                let mut rng = rng::stream(config.seed, DOMAIN_PIVOT, j as u64);
                let normals: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
                let scale = draw_scale(&mut rng, dof);
                let mut z = vec![0.0; k];
                for i in 0..k {
                    z[i] = (0..=i).map(|c| chol[(i, c)] * normals[c]).sum();
                }
                let neg: Vec<f64> = z.iter().map(|v| -v).collect();
                let upper = maximizer.signed_sup(&neg) / scale;
                let lower = maximizer.signed_sup(&z) / scale;
                (upper, lower)
            })
            .collect()
    });
    let (upper, lower) = pairs.into_iter().unzip();
    Ok(PivotSample { upper, lower })
}

fn check_spec(fit: &RegressionFit, spec: &BandSpec) -> Result<()> {
    validate_alpha(spec.alpha)?;
    if spec.region.dim() != fit.covariate_dim() {
        return Err(Error::DimensionMismatch {
            expected: fit.covariate_dim(),
            got: spec.region.dim(),
        });
    }
    Ok(())
}

/// Critical constant for one band specification.
pub fn critical_constant(fit: &RegressionFit, spec: &BandSpec, config: &MonteCarloConfig) -> Result<CriticalConstant> {
    check_spec(fit, spec)?;
    let sample = simulate_pivots(fit, &spec.region, spec.shape, config)?;
    Ok(constant_from_sample(&sample, spec.clone(), config))
}

pub fn constant_from_sample(sample: &PivotSample, spec: BandSpec, config: &MonteCarloConfig) -> CriticalConstant {
    let (value, std_error) = sample.quantile(spec.side, spec.alpha);
    CriticalConstant {
        value,
        std_error,
        spec,
        config: config.clone(),
    }
}

/// Upper, lower and two-sided constants computed from one shared set of
/// simulated streams.
#[derive(Debug, Clone)]
pub struct ConstantSet {
    pub upper: CriticalConstant,
    pub lower: CriticalConstant,
    pub two_sided: CriticalConstant,
}

impl ConstantSet {
    pub fn get(&self, side: Side) -> &CriticalConstant {
        match side {
            Side::Upper => &self.upper,
            Side::Lower => &self.lower,
            Side::TwoSided => &self.two_sided,
        }
    }
}

pub fn critical_constants(
    fit: &RegressionFit,
    region: &BoxRegion,
    shape: Shape,
    alpha: f64,
    config: &MonteCarloConfig,
) -> Result<ConstantSet> {
    let spec = |side| BandSpec::new(side, shape, alpha, region.clone());
    check_spec(fit, &spec(Side::TwoSided)?)?;
    let sample = simulate_pivots(fit, region, shape, config)?;
    Ok(ConstantSet {
        upper: constant_from_sample(&sample, spec(Side::Upper)?, config),
        lower: constant_from_sample(&sample, spec(Side::Lower)?, config),
        two_sided: constant_from_sample(&sample, spec(Side::TwoSided)?, config),
    })
}

/// Band bounds at `x`; the missing side of a one-sided band is infinite.
pub fn band_at(fit: &RegressionFit, c: &CriticalConstant, x: &[f64]) -> Result<(f64, f64)> {
    let xt = crate::model::expand_basis(fit.basis(), x)?;
    let center = xt.dot(fit.beta_hat());
    let m = match c.spec.shape {
        Shape::Hyperbolic => fit.quad_form(xt.as_slice()).sqrt(),
        Shape::ConstantWidth => 1.0,
    };
    let half = c.value * fit.sigma_hat() * m;
    Ok(match c.spec.side {
        Side::Upper => (f64::NEG_INFINITY, center + half),
        Side::Lower => (center - half, f64::INFINITY),
        Side::TwoSided => (center - half, center + half),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    fn toxicity_fit() -> RegressionFit {
        RegressionFit::from_covariance(
            DVector::from_vec(vec![3.124, 2.128]),
            DMatrix::from_row_slice(2, 2, &[0.1122, 0.0679, 0.0679, 0.0490]),
            BasisMap::affine(1).unwrap(),
        )
        .unwrap()
    }

    fn small_config() -> MonteCarloConfig {
        MonteCarloConfig {
            draws: 2000,
            seed: 9,
            workers: 2,
            grid_points_per_dim: 201,
            refine_iterations: 40,
            allow_high_dim: false,
        }
    }

    #[test]
    fn zero_vector_gives_zero() {
        let fit = toxicity_fit();
        let region = BoxRegion::interval(-2.3, -0.05).unwrap();
        let v = sup_ratio(&[0.0, 0.0], 1.0, &fit, &region, Shape::Hyperbolic, true, &small_config()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn sup_ratio_matches_dense_grid() {
        let fit = toxicity_fit();
        let region = BoxRegion::interval(-2.3, -0.05).unwrap();
        let cfg = small_config();
        let a = fit.xtx_inv().clone();
        for z in [[0.4, -1.3], [-0.7, 0.2], [1.1, 0.9], [-0.05, -0.8]] {
            let got = sup_ratio(&z, 1.0, &fit, &region, Shape::Hyperbolic, true, &cfg).unwrap();
            let mut brute = f64::NEG_INFINITY;
            let n = 1_000_000;
            for i in 0..n {
                let x = -2.3 + 2.25 * i as f64 / (n - 1) as f64;
                let m = (a[(0, 0)] + 2.0 * a[(0, 1)] * x + a[(1, 1)] * x * x).sqrt();
                brute = brute.max((z[0] + z[1] * x) / m);
            }
            assert!((got - brute).abs() <= 1e-6 * brute.abs().max(1.0), "{got} vs {brute}");
            assert!(got >= brute - 1e-12);
        }
    }

    #[test]
    fn unsigned_is_max_of_signed() {
        let fit = toxicity_fit();
        let region = BoxRegion::interval(-2.3, -0.05).unwrap();
        let m = SupMaximizer::new(&fit, &region, Shape::Hyperbolic, &small_config()).unwrap();
        let z = [0.3, -0.4];
        let neg = [-0.3, 0.4];
        assert_eq!(m.sup_ratio(&z, 1.0, false), m.signed_sup(&z).max(m.signed_sup(&neg)));
    }

    #[test]
    fn quantile_rank() {
        assert_eq!(order_index(200_000, 0.05), 190_000);
        assert_eq!(order_index(1000, 0.05), 950);
        assert_eq!(order_index(10, 0.999), 1);
        let sorted: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(empirical_quantile(&sorted, 0.05).0, 95.0);
    }

    #[test]
    fn band_at_zero_constant_is_point_estimate() {
        let fit = toxicity_fit();
        let region = BoxRegion::interval(-2.3, -0.05).unwrap();
        let spec = BandSpec::new(Side::TwoSided, Shape::Hyperbolic, 0.05, region).unwrap();
        let c = CriticalConstant::fixed(0.0, spec).unwrap();
        let (lo, hi) = band_at(&fit, &c, &[-1.0]).unwrap();
        assert_eq!(lo, hi);
        assert!((lo - (3.124 - 2.128)).abs() < 1e-12);
    }

    #[test]
    fn one_sided_band_at_reported_boundary() {
        let fit = toxicity_fit();
        let region = BoxRegion::interval(-2.3, -0.05).unwrap();
        let spec = BandSpec::new(Side::Upper, Shape::Hyperbolic, 0.05, region).unwrap();
        let c = CriticalConstant::fixed(2.14, spec).unwrap();
        let (lo, hi) = band_at(&fit, &c, &[-1.61]).unwrap();
        assert_eq!(lo, f64::NEG_INFINITY);
        // Slope of the band is about 1.4 per unit x; ±0.005 in x is ±0.007.
        assert!(hi.abs() < 0.01, "{hi}");
    }

    #[test]
    fn worker_count_does_not_change_constant() {
        let fit = toxicity_fit();
        let region = BoxRegion::interval(-2.3, -0.05).unwrap();
        let spec = BandSpec::new(Side::TwoSided, Shape::Hyperbolic, 0.05, region).unwrap();
        let mut cfg = small_config();
        cfg.workers = 1;
        let a = critical_constant(&fit, &spec, &cfg).unwrap();
        cfg.workers = 4;
        let b = critical_constant(&fit, &spec, &cfg).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.std_error.to_bits(), b.std_error.to_bits());
    }

    #[test]
    fn too_few_draws_refused() {
        let fit = toxicity_fit();
        let region = BoxRegion::interval(-2.3, -0.05).unwrap();
        let spec = BandSpec::new(Side::Upper, Shape::Hyperbolic, 0.05, region).unwrap();
        let mut cfg = small_config();
        cfg.draws = 10;
        assert!(matches!(critical_constant(&fit, &spec, &cfg), Err(Error::InvalidArgument(_))));
    }
}
