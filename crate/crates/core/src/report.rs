//! Serialized artifacts: results JSON, band tables, coverage tables and SVG
//! plots.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::band::{band_at, ConstantRecord, CriticalConstant, Side};
use crate::coverage::CoverageReport;
use crate::error::Result;
use crate::level_set::{Geometry, LevelSetEstimate, LinkDirection, SetKind};
use crate::model::{BoxRegion, Dof, RegressionFit};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub basis: String,
    pub beta_hat: Vec<f64>,
    pub sigma_hat: f64,
    pub dof: Dof,
    /// `(XᵀX)⁻¹`, or the coefficient covariance for a known-scale estimate.
    pub xtx_inv: Vec<Vec<f64>>,
}

impl FitSummary {
    pub fn new(fit: &RegressionFit) -> Self {
        let a = fit.xtx_inv();
        Self {
            basis: fit.basis().to_string(),
            beta_hat: fit.beta_hat().iter().copied().collect(),
            sigma_hat: fit.sigma_hat(),
            dof: fit.dof(),
            xtx_inv: (0..a.nrows()).map(|i| a.row(i).iter().copied().collect()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRecord {
    pub nx: usize,
    pub ny: usize,
    /// `[x_min, y_min, x_max, y_max]`.
    pub bbox: [f64; 4],
    /// Row-major (`y` outer) run lengths alternating outside/inside,
    /// starting with an outside run.
    pub mask_rle: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetRecord {
    pub kind: SetKind,
    pub lambda: f64,
    pub approximate: bool,
    pub sublevel: bool,
    pub critical_constant: f64,
    pub is_empty: bool,
    pub is_all_of_region: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervals: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_polylines: Option<Vec<Vec<[f64; 2]>>>,
}

impl SetRecord {
    pub fn new(set: &LevelSetEstimate) -> Self {
        let (intervals, grid, boundary_polylines) = match &set.geometry {
            Geometry::Intervals(v) => (Some(v.iter().map(|&(a, b)| [a, b]).collect()), None, None),
            Geometry::Grid(g) => {
                let record = GridRecord {
                    nx: g.nx(),
                    ny: g.ny(),
                    bbox: [g.xs[0], g.ys[0], g.xs[g.nx() - 1], g.ys[g.ny() - 1]],
                    mask_rle: g.run_lengths(),
                };
                (None, Some(record), Some(g.polylines.clone()))
            }
            Geometry::None => (None, None, None),
        };
        Self {
            kind: set.kind,
            lambda: set.lambda,
            approximate: set.approximate,
            sublevel: set.sublevel,
            critical_constant: set.constant.value,
            is_empty: set.is_empty,
            is_all_of_region: set.is_all_of_region,
            intervals,
            grid,
            boundary_polylines,
        }
    }
}

/// Threshold mapping of a link-based run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<String>,
    pub direction: LinkDirection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold_mean: Option<f64>,
    pub lambda: f64,
}

/// Contents of `results.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Results {
    pub schema_version: u32,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub constants: Vec<ConstantRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<LinkRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sets: Vec<SetRecord>,
}

impl Results {
    pub fn new(command: &str) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            command: command.to_string(),
            fit: None,
            constants: Vec::new(),
            link: None,
            sets: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

#[derive(Serialize)]
struct CoverageDocument<'a> {
    schema_version: u32,
    reports: &'a [CoverageReport],
}

pub fn coverage_json(reports: &[CoverageReport]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&CoverageDocument {
        schema_version: SCHEMA_VERSION,
        reports,
    })?;
    s.push('\n');
    Ok(s)
}

/// Aligned plain-text table, one row per report.
pub fn coverage_table(reports: &[CoverageReport]) -> String {
    let header = ["event", "true_beta", "hits", "reps", "hit_rate", "mc_se", "bound", "ok"];
    let rows: Vec<[String; 8]> = reports
        .iter()
        .map(|r| {
            let beta: Vec<String> = r.true_beta.iter().map(|b| format!("{b:.6}")).collect();
            [
                r.event.to_string(),
                format!("({})", beta.join(", ")),
                r.hits.to_string(),
                r.replications.to_string(),
                format!("{:.4}", r.hit_rate),
                format!("{:.4}", r.mc_std_error),
                format!("{:.4}", r.lower_bound),
                if r.meets_bound { "yes" } else { "NO" }.to_string(),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i < 2 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(padded.join("  ").trim_end());
        out.push('\n');
    };
    line(header.to_vec());
    for row in &rows {
        line(row.iter().map(String::as_str).collect());
    }
    out
}

/// Twelve significant digits.
pub fn format_sig12(v: f64) -> String {
    format!("{v:.11e}")
}

fn side_columns(side: Side) -> &'static [&'static str] {
    match side {
        Side::Upper => &["upper_one_sided"],
        Side::Lower => &["lower_one_sided"],
        Side::TwoSided => &["lower_two_sided", "upper_two_sided"],
    }
}

/// Nodes at which band tables and plots are evaluated: `points` per free
/// axis. Regions with more than two coordinates are not tabulated.
pub fn band_nodes(region: &BoxRegion, points: usize) -> Option<Vec<Vec<f64>>> {
    match region.dim() {
        1 => Some(region.axis_nodes(0, points).into_iter().map(|x| vec![x]).collect()),
        2 => {
            let xs = region.axis_nodes(0, points);
            let ys = region.axis_nodes(1, points);
            Some(ys.iter().flat_map(|&y| xs.iter().map(move |&x| vec![x, y])).collect())
        }
        _ => None,
    }
}

/// CSV of the point estimate and the finite band bounds at each node.
pub fn bands_csv(fit: &RegressionFit, constants: &[&CriticalConstant], nodes: &[Vec<f64>]) -> Result<String> {
    let dim = fit.covariate_dim();
    let mut out = String::new();
    let mut header: Vec<String> = (1..=dim).map(|i| if dim == 1 { "x".into() } else { format!("x{i}") }).collect();
    header.push("estimate".into());
    for c in constants {
        header.extend(side_columns(c.spec.side).iter().map(|s| s.to_string()));
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for x in nodes {
        let mut row: Vec<String> = x.iter().map(|v| format_sig12(*v)).collect();
        row.push(format_sig12(fit.predict(x)?));
        for c in constants {
            let (lo, hi) = band_at(fit, c, x)?;
            match c.spec.side {
                Side::Upper => row.push(format_sig12(hi)),
                Side::Lower => row.push(format_sig12(lo)),
                Side::TwoSided => {
                    row.push(format_sig12(lo));
                    row.push(format_sig12(hi));
                }
            }
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn set_colour(kind: SetKind) -> &'static str {
    match kind {
        SetKind::G2l => "#1b9e77",
        SetKind::G1l => "#7570b3",
        SetKind::G1u => "#d95f02",
        SetKind::G2u => "#e7298a",
    }
}

fn band_colour(side: Side) -> &'static str {
    match side {
        Side::Upper => "#d95f02",
        Side::Lower => "#7570b3",
        Side::TwoSided => "#1f78b4",
    }
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
    top: f64,
    bottom: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        self.bottom - (y - self.y0) / (self.y1 - self.y0) * (self.bottom - self.top)
    }
}

fn svg_open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{title}</text>"#, WIDTH / 2.0);
}

fn polyline(out: &mut String, pts: &[(f64, f64)], colour: &str, dash: bool) {
    if pts.is_empty() {
        return;
    }
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let dash = if dash { r#" stroke-dasharray="6 4""# } else { "" };
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"{dash}/>"#,
        coords.join(" ")
    );
}

fn axes(out: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        f.top,
        WIDTH - 2.0 * MARGIN,
        f.bottom - f.top
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = f.x0 + t * (f.x1 - f.x0);
        let yv = f.y0 + t * (f.y1 - f.y0);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            f.px(xv),
            f.bottom + 16.0,
            tick(xv)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN - 6.0,
            f.py(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{xlabel}</text>"#,
        WIDTH / 2.0,
        f.bottom + 34.0
    );
    let _ = writeln!(
        out,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">{ylabel}</text>"#,
        0.5 * (f.top + f.bottom),
        0.5 * (f.top + f.bottom)
    );
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// One-dimensional plot: estimate, bands, threshold line and one strip per
/// confidence set below the axes.
pub fn plot_1d(
    fit: &RegressionFit,
    region: &BoxRegion,
    constants: &[&CriticalConstant],
    lambda: Option<f64>,
    sets: &[&LevelSetEstimate],
    points: usize,
) -> Result<String> {
    let xs = region.axis_nodes(0, points.max(2));
    let estimate: Vec<f64> = xs.iter().map(|&x| fit.predict(&[x])).collect::<Result<_>>()?;
    let mut bands = Vec::new();
    for c in constants {
        let bounds: Vec<(f64, f64)> = xs.iter().map(|&x| band_at(fit, c, &[x])).collect::<Result<_>>()?;
        bands.push((c.spec.side, bounds));
    }
    let mut values: Vec<f64> = estimate.clone();
    for (_, b) in &bands {
        values.extend(b.iter().flat_map(|&(l, h)| [l, h]).filter(|v| v.is_finite()));
    }
    values.extend(lambda);
    let (mut y0, mut y1) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if y1 - y0 < 1e-12 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    let strip = 14.0;
    let strips = sets.len() as f64 * (strip + 4.0);
    let (x0, x1) = (region.lower()[0], region.upper()[0]);
    let f = Frame {
        x0,
        x1: if x1 > x0 { x1 } else { x0 + 1.0 },
        y0: y0 - pad,
        y1: y1 + pad,
        top: 36.0,
        bottom: HEIGHT - MARGIN - strips,
    };

    let mut out = String::new();
    svg_open(&mut out, "Simultaneous bands and level-set estimates");
    axes(&mut out, &f, "x", "regression function");
    let curve = |ys: &[f64]| -> Vec<(f64, f64)> {
        xs.iter()
            .zip(ys)
            .filter(|(_, y)| y.is_finite())
            .map(|(&x, &y)| (f.px(x), f.py(y)))
            .collect()
    };
    for (side, b) in &bands {
        let lo: Vec<f64> = b.iter().map(|p| p.0).collect();
        let hi: Vec<f64> = b.iter().map(|p| p.1).collect();
        polyline(&mut out, &curve(&lo), band_colour(*side), true);
        polyline(&mut out, &curve(&hi), band_colour(*side), true);
    }
    polyline(&mut out, &curve(&estimate), "black", false);
    if let Some(l) = lambda {
        let _ = writeln!(
            out,
            r#"<line x1="{MARGIN}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="red" stroke-width="1"/>"#,
            WIDTH - MARGIN,
            y = f.py(l)
        );
    }
    for (i, set) in sets.iter().enumerate() {
        let y = f.bottom + 44.0 + i as f64 * (strip + 4.0);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN - 6.0,
            y + strip - 3.0,
            set.kind
        );
        for &(a, b) in set.intervals().unwrap_or(&[]) {
            let (pa, pb) = (f.px(a), f.px(b));
            let _ = writeln!(
                out,
                r#"<rect x="{pa:.2}" y="{y:.2}" width="{:.2}" height="{strip}" fill="{}" fill-opacity="0.6"/>"#,
                (pb - pa).max(1.0),
                set_colour(set.kind)
            );
        }
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Two-dimensional plot: each set shaded over the rectangle with its traced
/// boundary.
pub fn plot_2d(region: &BoxRegion, sets: &[&LevelSetEstimate]) -> String {
    let (lo, hi) = (region.lower(), region.upper());
    let span = |i: usize| if hi[i] > lo[i] { hi[i] } else { lo[i] + 1.0 };
    let f = Frame {
        x0: lo[0],
        x1: span(0),
        y0: lo[1],
        y1: span(1),
        top: 36.0,
        bottom: HEIGHT - MARGIN,
    };
    let mut out = String::new();
    svg_open(&mut out, "Level-set estimates");
    for set in sets {
        let Geometry::Grid(g) = &set.geometry else { continue };
        let colour = set_colour(set.kind);
        let half = |v: &[f64]| if v.len() > 1 { 0.5 * (v[1] - v[0]) } else { 0.5 };
        let (hx, hy) = (half(&g.xs), half(&g.ys));
        for iy in 0..g.ny() {
            let mut ix = 0;
            while ix < g.nx() {
                if !g.at(ix, iy) {
                    ix += 1;
                    continue;
                }
                let start = ix;
                while ix < g.nx() && g.at(ix, iy) {
                    ix += 1;
                }
                let xa = (g.xs[start] - hx).max(f.x0);
                let xb = (g.xs[ix - 1] + hx).min(f.x1);
                let ya = (g.ys[iy] - hy).max(f.y0);
                let yb = (g.ys[iy] + hy).min(f.y1);
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{colour}" fill-opacity="0.2"/>"#,
                    f.px(xa),
                    f.py(yb),
                    f.px(xb) - f.px(xa),
                    f.py(ya) - f.py(yb)
                );
            }
        }
        for line in &g.polylines {
            let pts: Vec<(f64, f64)> = line.iter().map(|p| (f.px(p[0]), f.py(p[1]))).collect();
            polyline(&mut out, &pts, colour, false);
        }
    }
    axes(&mut out, &f, "x1", "x2");
    for (i, set) in sets.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" fill="{}">{}</text>"#,
            WIDTH - MARGIN + 8.0,
            f.top + 14.0 + 16.0 * i as f64,
            set_colour(set.kind),
            set.kind
        );
    }
    out.push_str("</svg>\n");
    out
}
