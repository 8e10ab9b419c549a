//! Checks on deformed grids: Jacobians, cell volumes, monitor tracking,
//! folding and interface conformity.

use serde::Serialize;

use crate::deform::GridCoordinates;
use crate::error::Result;
use crate::field::CellField;
use crate::grid::dist;
use crate::grid::MultiBlockDomain;
use crate::monitor::MonitorField;
use crate::velocity::{interpolate_scalar, locate};
use crate::Vec3;

fn corner_positions(
    coords: &GridCoordinates,
    domain: &MultiBlockDomain,
    block: usize,
    cell: [usize; 3],
) -> [Vec3; 8] {
    let p = coords.positions().block(block);
    domain.cell_corners(block, cell).map(|n| p[n])
}

fn det3(m: [Vec3; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Columns of the trilinear map's gradient at local point `s` of the cell,
/// scaled to the reference spacing `h`. `grad[a]` is `∂φ/∂x_a`.
fn trilinear_gradient(corners: &[Vec3; 8], s: Vec3, h: f64) -> [Vec3; 3] {
    let mut grad = [[0.0; 3]; 3];
    for (bit, p) in corners.iter().enumerate() {
        let hi = [bit & 1, bit >> 1 & 1, bit >> 2 & 1];
        let w = |a: usize| if hi[a] == 1 { s[a] } else { 1.0 - s[a] };
        for a in 0..3 {
            let sign = if hi[a] == 1 { 1.0 } else { -1.0 };
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            let coef = sign * w(b) * w(c) / h;
            for k in 0..3 {
                grad[a][k] += coef * p[k];
            }
        }
    }
    grad
}

/// `det ∇φ` at each cell center from central differences of the corner
/// positions (four edge differences averaged per direction).
pub fn jacobian_per_cell(coords: &GridCoordinates, domain: &MultiBlockDomain) -> CellField {
    let h = domain.spacing();
    let mut out: CellField = domain
        .blocks()
        .iter()
        .map(|b| vec![0.0; b.cell_count()])
        .collect();
    for (b, cell) in domain.cells() {
        let corners = corner_positions(coords, domain, b, cell);
        let j = det3(trilinear_gradient(&corners, [0.5; 3], h));
        out[b][domain.block(b).cell_index(cell)] = j;
    }
    out
}

/// Volume of each deformed cell, treating it as a trilinear hexahedron.
/// Two-point Gauss quadrature per axis integrates its Jacobian exactly.
pub fn cell_volumes(coords: &GridCoordinates, domain: &MultiBlockDomain) -> CellField {
    let h = domain.spacing();
    let g = 0.5 / 3f64.sqrt();
    let nodes = [0.5 - g, 0.5 + g];
    let h3 = h.powi(3);
    let mut out: CellField = domain
        .blocks()
        .iter()
        .map(|b| vec![0.0; b.cell_count()])
        .collect();
    for (b, cell) in domain.cells() {
        let corners = corner_positions(coords, domain, b, cell);
        let mut v = 0.0;
        for x in nodes {
            for y in nodes {
                for z in nodes {
                    v += det3(trilinear_gradient(&corners, [x, y, z], h));
                }
            }
        }
        out[b][domain.block(b).cell_index(cell)] = v * h3 / 8.0;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HStats {
    pub mean: f64,
    /// Population standard deviation divided by the mean.
    pub rsd: f64,
}

/// Statistics of `H = J/f(φ)` over all cells, with `f` interpolated at the
/// deformed cell center.
pub fn h_ratio_stats(
    coords: &GridCoordinates,
    f: &MonitorField,
    domain: &MultiBlockDomain,
) -> Result<HStats> {
    f.values().check_shape(domain)?;
    let jac = jacobian_per_cell(coords, domain);
    let mut ratios = Vec::with_capacity(domain.cell_count());
    for (b, cell) in domain.cells() {
        let corners = corner_positions(coords, domain, b, cell);
        let center: Vec3 = std::array::from_fn(|a| corners.iter().map(|p| p[a]).sum::<f64>() / 8.0);
        let fc = interpolate_scalar(f.values(), domain, &locate(center, domain)?);
        ratios.push(jac[b][domain.block(b).cell_index(cell)] / fc);
    }
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let var = ratios.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok(HStats {
        mean,
        rsd: var.sqrt() / mean,
    })
}

/// Largest distance between the two stored copies of any interface node.
pub fn interface_mismatch(coords: &GridCoordinates, domain: &MultiBlockDomain) -> f64 {
    let blocks = domain.blocks();
    let mut worst: f64 = 0.0;
    for patch in domain.interfaces() {
        let (a, b) = (patch.side_a().block, patch.side_b().block);
        for (pa, pb) in patch.pairs(blocks) {
            let d = dist(
                coords.positions().at(domain, a, pa),
                coords.positions().at(domain, b, pb),
            );
            worst = worst.max(d);
        }
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldedCell {
    pub block: usize,
    pub cell: [usize; 3],
    pub jacobian: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FoldReport {
    pub folded: Vec<FoldedCell>,
}

impl FoldReport {
    pub fn passed(&self) -> bool {
        self.folded.is_empty()
    }

    pub fn worst(&self) -> Option<FoldedCell> {
        self.folded
            .iter()
            .copied()
            .min_by(|a, b| a.jacobian.total_cmp(&b.jacobian))
    }
}

/// Cells whose Jacobian is not positive.
pub fn folding_check(coords: &GridCoordinates, domain: &MultiBlockDomain) -> FoldReport {
    let jac = jacobian_per_cell(coords, domain);
    let folded = domain
        .cells()
        .filter_map(|(b, cell)| {
            let j = jac[b][domain.block(b).cell_index(cell)];
            (j <= 0.0 || j.is_nan()).then_some(FoldedCell {
                block: b,
                cell,
                jacobian: j,
            })
        })
        .collect();
    FoldReport { folded }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellExtreme {
    pub block: usize,
    pub cell: [usize; 3],
    /// Deformed cell center.
    pub center: Vec3,
    pub volume: f64,
}

/// The smallest deformed cell.
pub fn min_volume_cell(coords: &GridCoordinates, domain: &MultiBlockDomain) -> CellExtreme {
    let vols = cell_volumes(coords, domain);
    let (b, cell, volume) = domain
        .cells()
        .map(|(b, c)| (b, c, vols[b][domain.block(b).cell_index(c)]))
        .min_by(|x, y| x.2.total_cmp(&y.2))
        .expect("domain has cells");
    let corners = corner_positions(coords, domain, b, cell);
    CellExtreme {
        block: b,
        cell,
        center: std::array::from_fn(|a| corners.iter().map(|p| p[a]).sum::<f64>() / 8.0),
        volume,
    }
}

/// One row of the per-snapshot report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridReport {
    pub stamp: String,
    #[serde(rename = "minJ")]
    pub min_jacobian: f64,
    #[serde(rename = "maxJ")]
    pub max_jacobian: f64,
    #[serde(rename = "minVol")]
    pub min_volume: f64,
    #[serde(rename = "maxVol")]
    pub max_volume: f64,
    #[serde(rename = "Hmean")]
    pub h_mean: f64,
    #[serde(rename = "Hrsd")]
    pub h_rsd: f64,
    #[serde(rename = "ifaceMismatch")]
    pub interface_mismatch: f64,
    #[serde(rename = "totalVol")]
    pub total_volume: f64,
}

impl GridReport {
    /// `f` must be the monitor at the snapshot's phase.
    pub fn compute(
        coords: &GridCoordinates,
        f: &MonitorField,
        domain: &MultiBlockDomain,
    ) -> Result<Self> {
        let jac = jacobian_per_cell(coords, domain);
        let vols = cell_volumes(coords, domain);
        let flat = |c: &CellField| -> (f64, f64) {
            c.iter()
                .flatten()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                })
        };
        let (min_jacobian, max_jacobian) = flat(&jac);
        let (min_volume, max_volume) = flat(&vols);
        let h = h_ratio_stats(coords, f, domain)?;
        Ok(Self {
            stamp: coords.phase().to_string(),
            min_jacobian,
            max_jacobian,
            min_volume,
            max_volume,
            h_mean: h.mean,
            h_rsd: h.rsd,
            interface_mismatch: interface_mismatch(coords, domain),
            total_volume: vols.iter().flatten().sum(),
        })
    }
}

/// Writes reports as CSV with the fixed column set.
pub fn write_reports<W: std::io::Write>(writer: W, rows: &[GridReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
