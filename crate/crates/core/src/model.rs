//! Linear-model substrate: datasets, basis expansion, covariate boxes and
//! the least-squares fit that every band and level set is built from.

use std::fmt;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observed responses together with the raw covariates (one row per unit).
#[derive(Debug, Clone)]
pub struct Dataset {
    responses: DVector<f64>,
    covariates: DMatrix<f64>,
}

impl Dataset {
    pub fn new(responses: Vec<f64>, covariates: DMatrix<f64>) -> Result<Self> {
        if covariates.nrows() != responses.len() {
            return Err(Error::DimensionMismatch {
                expected: responses.len(),
                got: covariates.nrows(),
            });
        }
        if responses.iter().chain(covariates.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset"));
        }
        Ok(Self {
            responses: DVector::from_vec(responses),
            covariates,
        })
    }

    /// Builds a dataset from row-major covariate rows.
    pub fn from_rows(responses: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: bad.len(),
            });
        }
        let covariates = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(responses, covariates)
    }

    /// Reads a headed, comma-separated file. `covariates` selects columns by
    /// name; when empty, every column other than the response is used.
    pub fn from_csv(path: impl AsRef<Path>, response: &str, covariates: &[String]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_path(path)?;
        let headers = reader.headers()?.clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::InvalidArgument(format!("column '{name}' not found")))
        };
        let response_idx = find(response)?;
        let covariate_idx: Vec<usize> = if covariates.is_empty() {
            (0..headers.len()).filter(|&i| i != response_idx).collect()
        } else {
            covariates.iter().map(|c| find(c)).collect::<Result<_>>()?
        };
        if covariate_idx.is_empty() {
            return Err(Error::InvalidArgument("no covariate columns selected".into()));
        }

        let parse = |rec: &csv::StringRecord, idx: usize, line: usize| -> Result<f64> {
            let raw = rec.get(idx).unwrap_or("");
            raw.parse::<f64>().map_err(|_| {
                Error::InvalidArgument(format!("line {line}: cannot parse '{raw}' as a number"))
            })
        };

        let mut responses = Vec::new();
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            responses.push(parse(&rec, response_idx, line)?);
            rows.push(
                covariate_idx
                    .iter()
                    .map(|&j| parse(&rec, j, line))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        if rows.is_empty() {
            return Err(Error::InvalidArgument("csv file has no data rows".into()));
        }
        Self::from_rows(responses, &rows)
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn covariate_dim(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn responses(&self) -> &DVector<f64> {
        &self.responses
    }

    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }
}

/// Map from raw covariates `x` to the regressor vector `(1, ...)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisMap {
    /// `(1, x_1, ..., x_d)`.
    Affine { dim: usize },
    /// `(1, x, x^2, ..., x^degree)` for a scalar covariate.
    Polynomial { degree: usize },
}

impl BasisMap {
    pub fn affine(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("affine basis needs at least one covariate".into()));
        }
        Ok(BasisMap::Affine { dim })
    }

    pub fn polynomial(degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidArgument("polynomial degree must be positive".into()));
        }
        Ok(BasisMap::Polynomial { degree })
    }

    /// Number of raw covariates `d`.
    pub fn input_dim(&self) -> usize {
        match *self {
            BasisMap::Affine { dim } => dim,
            BasisMap::Polynomial { .. } => 1,
        }
    }

    /// Number of regression coefficients `p + 1`.
    pub fn output_dim(&self) -> usize {
        match *self {
            BasisMap::Affine { dim } => dim + 1,
            BasisMap::Polynomial { degree } => degree + 1,
        }
    }

    /// Writes the regressor vector for `x` into `out` (length `p + 1`).
    pub fn expand_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        if out.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.output_dim(),
                got: out.len(),
            });
        }
        out[0] = 1.0;
        match *self {
            BasisMap::Affine { .. } => out[1..].copy_from_slice(x),
            BasisMap::Polynomial { degree } => {
                let mut power = 1.0;
                for slot in out.iter_mut().take(degree + 1).skip(1) {
                    power *= x[0];
                    *slot = power;
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for BasisMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisMap::Affine { dim } => write!(f, "affine({dim})"),
            BasisMap::Polynomial { degree } => write!(f, "poly({degree})"),
        }
    }
}

/// Regressor vector `x̃` for covariate point `x`.
pub fn expand_basis(basis: &BasisMap, x: &[f64]) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(basis.output_dim());
    basis.expand_into(x, out.as_mut_slice())?;
    Ok(out)
}

/// Axis-aligned covariate region. A coordinate with `lower == upper` pins
/// that covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::EmptyRegion);
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidRegion(format!("coordinate {i} has a non-finite bound")));
            }
            if lo > hi {
                return Err(Error::InvalidRegion(format!(
                    "coordinate {i}: lower {lo} exceeds upper {hi}"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_degenerate(&self, i: usize) -> bool {
        self.lower[i] == self.upper[i]
    }

    pub fn free_dims(&self) -> usize {
        (0..self.dim()).filter(|&i| !self.is_degenerate(i)).count()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }

    /// Evenly spaced nodes along coordinate `i` (a single node when pinned).
    pub fn axis_nodes(&self, i: usize, points: usize) -> Vec<f64> {
        let (lo, hi) = (self.lower[i], self.upper[i]);
        if lo == hi || points < 2 {
            return vec![if lo == hi { lo } else { 0.5 * (lo + hi) }];
        }
        let step = (hi - lo) / (points - 1) as f64;
        (0..points)
            .map(|k| if k + 1 == points { hi } else { lo + step * k as f64 })
            .collect()
    }
}

/// Residual degrees of freedom; `Infinite` marks a known scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dof {
    Finite(u64),
    Infinite,
}

impl Dof {
    pub fn as_f64(self) -> f64 {
        match self {
            Dof::Finite(v) => v as f64,
            Dof::Infinite => f64::INFINITY,
        }
    }
}

impl Serialize for Dof {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Dof::Finite(v) => s.serialize_u64(*v),
            Dof::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Dof {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(0) => Err(serde::de::Error::custom("degrees of freedom must be positive")),
            Raw::Num(v) => Ok(Dof::Finite(v)),
            Raw::Text(t) if t == "inf" => Ok(Dof::Infinite),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("bad dof '{t}'"))),
        }
    }
}

impl fmt::Display for Dof {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Dof::Finite(v) => write!(f, "{v}"),
            Dof::Infinite => write!(f, "inf"),
        }
    }
}

/// Point estimate, scale estimate and the unscaled covariance of the
/// coefficients. For the GLM route the covariance is the plug-in inverse
/// information with `sigma_hat = 1` and infinite degrees of freedom.
#[derive(Debug, Clone)]
pub struct RegressionFit {
    beta_hat: DVector<f64>,
    sigma_hat_sq: f64,
    dof: Dof,
    xtx_inv: DMatrix<f64>,
    chol: DMatrix<f64>,
    basis: BasisMap,
}

const SYMMETRY_TOL: f64 = 1e-10;

impl RegressionFit {
    pub fn from_parts(
        beta_hat: DVector<f64>,
        sigma_hat_sq: f64,
        dof: Dof,
        xtx_inv: DMatrix<f64>,
        basis: BasisMap,
    ) -> Result<Self> {
        let k = basis.output_dim();
        if beta_hat.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: beta_hat.len(),
            });
        }
        if xtx_inv.nrows() != k || xtx_inv.ncols() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: xtx_inv.nrows().max(xtx_inv.ncols()),
            });
        }
        if !sigma_hat_sq.is_finite() || sigma_hat_sq < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "error variance must be finite and nonnegative, got {sigma_hat_sq}"
            )));
        }
        if beta_hat.iter().chain(xtx_inv.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("fit"));
        }
        let scale = xtx_inv.amax().max(f64::MIN_POSITIVE);
        for i in 0..k {
            for j in 0..i {
                if (xtx_inv[(i, j)] - xtx_inv[(j, i)]).abs() > SYMMETRY_TOL * scale {
                    return Err(Error::NotPositiveDefinite);
                }
            }
        }
        let sym = (&xtx_inv + xtx_inv.transpose()) * 0.5;
        let chol = Cholesky::new(sym.clone())
            .ok_or(Error::NotPositiveDefinite)?
            .l();
        Ok(Self {
            beta_hat,
            sigma_hat_sq,
            dof,
            xtx_inv: sym,
            chol,
            basis,
        })
    }

    /// Wraps an asymptotically normal estimate `N(beta, cov)`.
    pub fn from_covariance(beta_hat: DVector<f64>, cov: DMatrix<f64>, basis: BasisMap) -> Result<Self> {
        Self::from_parts(beta_hat, 1.0, Dof::Infinite, cov, basis)
    }

    pub fn beta_hat(&self) -> &DVector<f64> {
        &self.beta_hat
    }

    pub fn sigma_hat_sq(&self) -> f64 {
        self.sigma_hat_sq
    }

    pub fn sigma_hat(&self) -> f64 {
        self.sigma_hat_sq.sqrt()
    }

    pub fn dof(&self) -> Dof {
        self.dof
    }

    pub fn xtx_inv(&self) -> &DMatrix<f64> {
        &self.xtx_inv
    }

    /// Lower Cholesky factor of `xtx_inv`.
    pub fn cholesky_lower(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn basis(&self) -> &BasisMap {
        &self.basis
    }

    pub fn covariate_dim(&self) -> usize {
        self.basis.input_dim()
    }

    /// Same geometry with the coefficient vector negated; used for
    /// sublevel sets.
    pub fn negated(&self) -> Self {
        Self {
            beta_hat: -&self.beta_hat,
            ..self.clone()
        }
    }

    /// Same scale and geometry, different coefficients.
    pub fn with_beta(&self, beta_hat: DVector<f64>) -> Result<Self> {
        if beta_hat.len() != self.beta_hat.len() {
            return Err(Error::DimensionMismatch {
                expected: self.beta_hat.len(),
                got: beta_hat.len(),
            });
        }
        Ok(Self {
            beta_hat,
            ..self.clone()
        })
    }

    /// `x̃ᵀβ̂`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(expand_basis(&self.basis, x)?.dot(&self.beta_hat))
    }

    pub(crate) fn quad_form(&self, xt: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, xi) in xt.iter().enumerate() {
            let row: f64 = xt.iter().enumerate().map(|(j, xj)| self.xtx_inv[(i, j)] * xj).sum();
            acc += xi * row;
        }
        acc.max(0.0)
    }
}

/// Hyperbolic band half-width factor `m(x) = sqrt(x̃ᵀ (XᵀX)⁻¹ x̃)`.
pub fn band_width_factor(fit: &RegressionFit, x: &[f64]) -> Result<f64> {
    let xt = expand_basis(fit.basis(), x)?;
    Ok(fit.quad_form(xt.as_slice()).sqrt())
}

/// Ordinary least squares through Householder QR; `(XᵀX)⁻¹` comes from the
/// inverse triangular factor.
pub fn fit_ols(data: &Dataset, basis: BasisMap) -> Result<RegressionFit> {
    if data.covariate_dim() != basis.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.input_dim(),
            got: data.covariate_dim(),
        });
    }
    let design = design_matrix(data.covariates(), &basis)?;
    fit_design(&design, data.responses(), basis)
}

/// Stacks `x̃ᵢᵀ` rows for the raw covariate rows.
pub fn design_matrix(covariates: &DMatrix<f64>, basis: &BasisMap) -> Result<DMatrix<f64>> {
    let n = covariates.nrows();
    let k = basis.output_dim();
    let mut design = DMatrix::zeros(n, k);
    let mut row = vec![0.0; k];
    let mut x = vec![0.0; covariates.ncols()];
    for i in 0..n {
        for (j, slot) in x.iter_mut().enumerate() {
            *slot = covariates[(i, j)];
        }
        basis.expand_into(&x, &mut row)?;
        for j in 0..k {
            design[(i, j)] = row[j];
        }
    }
    Ok(design)
}

/// Numerical rank with the `max(n, k)·ε·σ_max` cutoff.
pub fn numerical_rank(design: &DMatrix<f64>) -> usize {
    let sv = design.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    let tol = design.nrows().max(design.ncols()) as f64 * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

pub(crate) fn fit_design(design: &DMatrix<f64>, y: &DVector<f64>, basis: BasisMap) -> Result<RegressionFit> {
    let qr = OlsSolver::new(design)?;
    let (beta, rss) = qr.solve(y);
    let nu = design.nrows() - design.ncols();
    RegressionFit::from_parts(
        beta,
        rss / nu as f64,
        Dof::Finite(nu as u64),
        qr.xtx_inv.clone(),
        basis,
    )
}

/// QR factorisation of a fixed design, reusable across response vectors.
#[derive(Debug, Clone)]
pub(crate) struct OlsSolver {
    q: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    pub(crate) xtx_inv: DMatrix<f64>,
}

impl OlsSolver {
    pub(crate) fn new(design: &DMatrix<f64>) -> Result<Self> {
        let (n, k) = design.shape();
        if n < k + 1 {
            return Err(Error::SampleTooSmall { n, required: k + 1 });
        }
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("design matrix"));
        }
        let rank = numerical_rank(design);
        if rank < k {
            return Err(Error::RankDeficient { rank, required: k });
        }
        let qr = design.clone().qr();
        let r = qr.r();
        let q = qr.q();
        let r_inv = r
            .solve_upper_triangular(&DMatrix::identity(k, k))
            .ok_or(Error::RankDeficient { rank: k - 1, required: k })?;
        let xtx_inv = &r_inv * r_inv.transpose();
        Ok(Self { q, r_inv, xtx_inv })
    }

    /// Returns `(β̂, residual sum of squares)`.
    pub(crate) fn solve(&self, y: &DVector<f64>) -> (DVector<f64>, f64) {
        let qty = self.q.tr_mul(y);
        let beta = &self.r_inv * &qty;
        // ‖y‖² − ‖Qᵀy‖² loses precision near a perfect fit; use the residual directly.
        let fitted = &self.q * &qty;
        let rss = (y - fitted).norm_squared();
        (beta, rss)
    }
}
