//! Grid velocity `η = f ∇ω` on the reference lattice, and its evaluation at
//! arbitrary points by point location plus trilinear interpolation.

use crate::error::{Error, Result};
use crate::field::{NodeField, ScalarField, VectorField};
use crate::grid::MultiBlockDomain;
use crate::monitor::MonitorField;
use crate::Vec3;

/// Points this far outside a block face (absolute length) are snapped onto it.
pub const LOCATE_TOL: f64 = 1e-9;

/// Central-difference gradient of a node field. Across an interface the
/// difference spans both blocks; where the external boundary removes a
/// neighbor the mirror condition makes that component zero.
pub fn gradient(omega: &ScalarField, domain: &MultiBlockDomain) -> Result<VectorField> {
    omega.check_shape(domain)?;
    let w = omega.to_unknowns(domain);
    let two_h = 2.0 * domain.spacing();
    let grad: Vec<Vec3> = (0..domain.unknown_count())
        .map(|u| {
            std::array::from_fn(|axis| {
                match (
                    domain.neighbor(u, 2 * axis),
                    domain.neighbor(u, 2 * axis + 1),
                ) {
                    (Some(m), Some(p)) => (w[p] - w[m]) / two_h,
                    _ => 0.0,
                }
            })
        })
        .collect();
    Ok(VectorField::from_unknowns(domain, &grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    eta: VectorField,
    grad: VectorField,
}

impl VelocityField {
    /// Nodal `η`, boundary-projected.
    pub fn eta(&self) -> &VectorField {
        &self.eta
    }

    /// Nodal `V = ∇ω`.
    pub fn grad(&self) -> &VectorField {
        &self.grad
    }

    /// A field with `η` prescribed directly (no projection).
    pub fn from_eta(domain: &MultiBlockDomain, eta: VectorField) -> Result<Self> {
        eta.check_shape(domain)?;
        Ok(Self {
            grad: VectorField::filled(domain, [0.0; 3]),
            eta,
        })
    }

    /// `η` at an arbitrary point of the closed domain.
    pub fn at(&self, domain: &MultiBlockDomain, p: Vec3) -> Result<Vec3> {
        Ok(interpolate_vector(&self.eta, domain, &locate(p, domain)?))
    }
}

/// `η = f·V`, then zeroes the components pinned by the external boundary.
pub fn node_velocity(
    f: &MonitorField,
    grad: VectorField,
    domain: &MultiBlockDomain,
) -> Result<VelocityField> {
    f.values().check_shape(domain)?;
    grad.check_shape(domain)?;
    let fu = f.values().to_unknowns(domain);
    let vu = grad.to_unknowns(domain);
    let eta: Vec<Vec3> = (0..domain.unknown_count())
        .map(|u| {
            let pinned = domain.outward(u);
            std::array::from_fn(|a| {
                if pinned[a] != 0 {
                    0.0
                } else {
                    fu[u] * vu[u][a]
                }
            })
        })
        .collect();
    Ok(VelocityField {
        eta: VectorField::from_unknowns(domain, &eta),
        grad,
    })
}

/// Cell of a block lattice containing a point, with local coordinates in `[0,1]³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub block: usize,
    pub cell: [usize; 3],
    pub local: Vec3,
}

/// Finds the block cell containing `p`. A point on a shared face may be
/// reported in either block; blocks that contain `p` without snapping win.
pub fn locate(p: Vec3, domain: &MultiBlockDomain) -> Result<Location> {
    let mut best: Option<(f64, Location)> = None;
    for block in domain.blocks() {
        let h = block.spacing();
        let origin = block.origin();
        let cells = block.cells();
        let mut excess: f64 = 0.0;
        let mut cell = [0usize; 3];
        let mut local = [0.0; 3];
        for a in 0..3 {
            let hi = cells[a] as f64;
            let mut s = (p[a] - origin[a]) / h;
            excess = excess.max(-s * h).max((s - hi) * h);
            s = s.clamp(0.0, hi);
            // land exactly on lattice planes when rounding put us a hair off
            let r = s.round();
            if (s - r).abs() < 1e-10 {
                s = r;
            }
            let c = (s.floor() as usize).min(cells[a] - 1);
            cell[a] = c;
            local[a] = s - c as f64;
        }
        if excess <= LOCATE_TOL && best.as_ref().is_none_or(|(e, _)| excess < *e) {
            best = Some((
                excess,
                Location {
                    block: block.id(),
                    cell,
                    local,
                },
            ));
            if excess <= 0.0 {
                break;
            }
        }
    }
    best.map(|(_, loc)| loc).ok_or(Error::OutOfDomain(p))
}

#[inline]
fn trilinear_weights(local: Vec3) -> [f64; 8] {
    let [x, y, z] = local;
    std::array::from_fn(|bit| {
        let wx = if bit & 1 == 1 { x } else { 1.0 - x };
        let wy = if bit >> 1 & 1 == 1 { y } else { 1.0 - y };
        let wz = if bit >> 2 & 1 == 1 { z } else { 1.0 - z };
        wx * wy * wz
    })
}

pub fn interpolate_scalar(field: &ScalarField, domain: &MultiBlockDomain, loc: &Location) -> f64 {
    let corners = domain.cell_corners(loc.block, loc.cell);
    let values = field.block(loc.block);
    trilinear_weights(loc.local)
        .iter()
        .zip(corners)
        .map(|(w, n)| w * values[n])
        .sum()
}

pub fn interpolate_vector(
    field: &NodeField<Vec3>,
    domain: &MultiBlockDomain,
    loc: &Location,
) -> Vec3 {
    let corners = domain.cell_corners(loc.block, loc.cell);
    let values = field.block(loc.block);
    let mut out = [0.0; 3];
    for (w, n) in trilinear_weights(loc.local).iter().zip(corners) {
        for a in 0..3 {
            out[a] += w * values[n][a];
        }
    }
    out
}

/// Trilinear `η` at `p`.
pub fn interpolate_velocity(
    field: &VelocityField,
    domain: &MultiBlockDomain,
    p: Vec3,
) -> Result<Vec3> {
    field.at(domain, p)
}
