//! Variability ellipses over binnings, region classification, G-tests, and
//! the approximation-distance sweep.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bws::{bws_k_step, discretize_bws, discretize_normal, statistical_distance, NormalApprox};
use crate::error::{Error, Result};
use crate::special::chi2_sf;
use crate::wf::{TransitionMatrix, WfParams};

/// Mean and one-standard-deviation ellipse of `(s, 1 - p)` over several binnings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseSummary {
    pub label: String,
    /// `(mean s, mean indicator)`.
    pub center: (f64, f64),
    /// Semi-axes, major first.
    pub axes: (f64, f64),
    /// Direction of the major axis in `(-pi/2, pi/2]`.
    pub angle: f64,
    pub n_binnings: usize,
}

fn normalize_angle(mut a: f64) -> f64 {
    while a <= -FRAC_PI_2 {
        a += PI;
    }
    while a > FRAC_PI_2 {
        a -= PI;
    }
    a
}

/// Ellipse from `(s, p)` pairs; the vertical coordinate is `1 - p`.
pub fn ellipse_from_fits(label: impl Into<String>, fits: &[(f64, f64)]) -> Result<EllipseSummary> {
    let label = label.into();
    if fits.is_empty() {
        return Err(Error::InvalidParameter(format!("'{label}' has no fits to summarize")));
    }
    if let Some(&(_, p)) = fits.iter().find(|(_, p)| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidParameter(format!("p-value {p} is outside [0, 1]")));
    }
    let n = fits.len() as f64;
    let pts: Vec<(f64, f64)> = fits.iter().map(|&(s, p)| (s, 1.0 - p)).collect();
    let cx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p.1).sum::<f64>() / n;
    if fits.len() < 2 {
        return Ok(EllipseSummary { label, center: (cx, cy), axes: (0.0, 0.0), angle: 0.0, n_binnings: 1 });
    }
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(x, y) in &pts {
        sxx += (x - cx) * (x - cx);
        syy += (y - cy) * (y - cy);
        sxy += (x - cx) * (y - cy);
    }
    let (sxx, syy, sxy) = (sxx / (n - 1.0), syy / (n - 1.0), sxy / (n - 1.0));
    let half_trace = 0.5 * (sxx + syy);
    let radius = (0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy).sqrt();
    let major = (half_trace + radius).max(0.0);
    let minor = if major > 0.0 { ((sxx * syy - sxy * sxy) / major).max(0.0) } else { 0.0 };
    let angle = if radius == 0.0 { 0.0 } else { normalize_angle(0.5 * (2.0 * sxy).atan2(sxx - syy)) };
    Ok(EllipseSummary {
        label,
        center: (cx, cy),
        axes: (major.sqrt(), minor.sqrt()),
        angle,
        n_binnings: fits.len(),
    })
}

impl EllipseSummary {
    /// Half-widths of the axis-aligned bounding box.
    pub fn half_extents(&self) -> (f64, f64) {
        let (a, b) = self.axes;
        let (sin, cos) = self.angle.sin_cos();
        (
            (a * a * cos * cos + b * b * sin * sin).sqrt(),
            (a * a * sin * sin + b * b * cos * cos).sqrt(),
        )
    }

    fn boundary(&self, phi: f64) -> (f64, f64) {
        let (a, b) = self.axes;
        let (sin, cos) = self.angle.sin_cos();
        let (u, v) = (a * phi.cos(), b * phi.sin());
        (self.center.0 + u * cos - v * sin, self.center.1 + u * sin + v * cos)
    }

    /// Largest indicator value over the part of the ellipse with `s >= 0`, if any.
    fn max_indicator_on_positive_side(&self) -> Option<f64> {
        let (a, b) = self.axes;
        let (sin, cos) = self.angle.sin_cos();
        let (hx, hy) = self.half_extents();
        let (cx, cy) = self.center;
        // Topmost point of the ellipse.
        let top = self.boundary((b * cos).atan2(a * sin));
        if top.0 >= 0.0 {
            return Some(cy + hy);
        }
        if cx + hx < 0.0 {
            return None;
        }
        // Otherwise the maximum sits where the boundary crosses s = 0.
        let psi = (-b * sin).atan2(a * cos);
        let delta = if hx > 0.0 { (-cx / hx).clamp(-1.0, 1.0).acos() } else { 0.0 };
        let y1 = self.boundary(psi + delta).1;
        let y2 = self.boundary(psi - delta).1;
        Some(y1.max(y2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionClass {
    Irregularising,
    Inconclusive,
    NonIrregularising,
}

impl RegionClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Irregularising => "irregularising",
            Self::Inconclusive => "inconclusive",
            Self::NonIrregularising => "non_irregularising",
        }
    }
}

/// How overlap between an ellipse and the selection region is decided.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Containment {
    /// Compare the axis-aligned bounding box with the region.
    #[default]
    BoundingBox,
    /// Intersect the ellipse itself with the region.
    Exact,
}

/// Place an ellipse relative to the region `{s > 0, 1 - p > 1 - p_threshold}`.
pub fn classify_region(summary: &EllipseSummary, p_threshold: f64, containment: Containment) -> RegionClass {
    let floor = 1.0 - p_threshold;
    let (cx, cy) = summary.center;
    let (hx, hy) = summary.half_extents();
    if cx - hx > 0.0 && cy - hy > floor {
        return RegionClass::Irregularising;
    }
    let disjoint = match containment {
        Containment::BoundingBox => cx + hx <= 0.0 || cy + hy <= floor,
        Containment::Exact => summary.max_indicator_on_positive_side().is_none_or(|y| y <= floor),
    };
    if disjoint {
        RegionClass::NonIrregularising
    } else {
        RegionClass::Inconclusive
    }
}

/// Counts with one row per group and one column per outcome class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub counts: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn new(counts: Vec<Vec<u64>>) -> Result<Self> {
        let cols = counts.first().map_or(0, Vec::len);
        if counts.len() < 2 || cols < 2 || counts.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidParameter(
                "contingency table must be rectangular with at least two rows and two columns".into(),
            ));
        }
        Ok(Self { counts })
    }

    /// Parse `"9,2,8;7,4,23"` (rows separated by `;`).
    pub fn parse(text: &str) -> Result<Self> {
        let counts = text
            .split(';')
            .map(|row| {
                row.split(',')
                    .map(|c| {
                        c.trim().parse::<u64>().map_err(|e| {
                            Error::InvalidParameter(format!("bad count '{}': {e}", c.trim()))
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(counts)
    }

    pub fn from_classes(groups: &[&[RegionClass]]) -> Result<Self> {
        let order = [RegionClass::Irregularising, RegionClass::Inconclusive, RegionClass::NonIrregularising];
        Self::new(
            groups
                .iter()
                .map(|g| order.iter().map(|c| g.iter().filter(|x| *x == c).count() as u64).collect())
                .collect(),
        )
    }

    fn row_total(&self, r: usize) -> u64 {
        self.counts[r].iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GTest {
    pub g: f64,
    pub dof: usize,
    pub p_value: f64,
}

fn g_term(observed: u64, expected: f64) -> f64 {
    if observed == 0 {
        0.0
    } else {
        let o = observed as f64;
        o * (o / expected).ln()
    }
}

/// Goodness of fit of row 0 to the class proportions of row 1, `dof = columns - 1`.
pub fn g_test(table: &ContingencyTable) -> Result<GTest> {
    if table.counts.len() != 2 {
        return Err(Error::InvalidParameter("goodness-of-fit G-test needs exactly two rows".into()));
    }
    let (n_obs, n_ref) = (table.row_total(0), table.row_total(1));
    if n_obs == 0 || n_ref == 0 {
        return Err(Error::ZeroMarginal);
    }
    let mut g = 0.0;
    for (col, (&o, &r)) in table.counts[0].iter().zip(&table.counts[1]).enumerate() {
        if r == 0 {
            if o > 0 {
                return Err(Error::ZeroExpected(col));
            }
            continue;
        }
        g += g_term(o, n_obs as f64 * r as f64 / n_ref as f64);
    }
    let g = (2.0 * g).max(0.0);
    let dof = table.counts[0].len() - 1;
    Ok(GTest { g, dof, p_value: chi2_sf(g, dof as f64) })
}

/// Test of independence with expectations from the row and column totals.
pub fn g_test_independence(table: &ContingencyTable) -> Result<GTest> {
    let rows: Vec<f64> = (0..table.counts.len()).map(|r| table.row_total(r) as f64).collect();
    let cols: Vec<f64> = (0..table.counts[0].len())
        .map(|c| table.counts.iter().map(|r| r[c]).sum::<u64>() as f64)
        .collect();
    if rows.iter().chain(&cols).any(|&m| m == 0.0) {
        return Err(Error::ZeroMarginal);
    }
    let total: f64 = rows.iter().sum();
    let mut g = 0.0;
    for (r, row) in table.counts.iter().enumerate() {
        for (c, &o) in row.iter().enumerate() {
            g += g_term(o, rows[r] * cols[c] / total);
        }
    }
    let g = (2.0 * g).max(0.0);
    let dof = (rows.len() - 1) * (cols.len() - 1);
    Ok(GTest { g, dof, p_value: chi2_sf(g, dof as f64) })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub x0: f64,
    pub s: f64,
    pub tv_bws: f64,
    pub tv_normal: f64,
}

/// Total-variation distance of the BwS and normal approximations to the exact transition.
pub fn distance_sweep(popsize: usize, selstrengths: &[f64], k: usize, x0_grid: &[f64]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(selstrengths.len() * x0_grid.len());
    for &s in selstrengths {
        let params = WfParams::new(popsize as f64, s)?;
        let matrix = TransitionMatrix::new(&params)?;
        let grid = matrix.grid();
        for &x0 in x0_grid {
            let exact = matrix.k_step(x0, params.selstrength, k)?;
            let trans = bws_k_step(x0, &params, k)?;
            let tv_bws = statistical_distance(&discretize_bws(&trans, &grid), &exact)?;
            let normal = NormalApprox::from_transition(&trans);
            let tv_normal = statistical_distance(&discretize_normal(&normal, &grid), &exact)?;
            rows.push(SweepRow { x0, s, tv_bws, tv_normal });
        }
    }
    Ok(rows)
}

/// `count` evenly spaced points covering `[0, 1]`.
pub fn unit_grid(count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.5],
        _ => (0..count).map(|i| i as f64 / (count - 1) as f64).collect(),
    }
}

fn csv_error(source: csv::Error) -> Error {
    Error::Csv { path: Default::default(), source }
}

/// Write `label,cx,cy,ax1,ax2,angle,class`.
pub fn write_ellipses_csv(rows: &[(EllipseSummary, RegionClass)], writer: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["label", "cx", "cy", "ax1", "ax2", "angle", "class"]).map_err(csv_error)?;
    for (e, class) in rows {
        wtr.write_record([
            e.label.clone(),
            e.center.0.to_string(),
            e.center.1.to_string(),
            e.axes.0.to_string(),
            e.axes.1.to_string(),
            e.angle.to_string(),
            class.as_str().to_string(),
        ])
        .map_err(csv_error)?;
    }
    wtr.flush().map_err(|source| Error::Io { path: Default::default(), source })
}

/// Write `x0,s,tv_bws,tv_normal`.
pub fn write_sweep_csv(rows: &[SweepRow], writer: impl Write) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in rows {
        wtr.serialize(r).map_err(csv_error)?;
    }
    wtr.flush().map_err(|source| Error::Io { path: Default::default(), source })
}
