//! Deformation Poisson problem `Δω = −∂ₜ(1/f)` with homogeneous Neumann
//! conditions on the external boundary, solved by SOR.
//!
//! The unknowns are the domain's shared node unknowns, so an interface node
//! is updated once with a 7-point stencil whose neighbors come from both
//! blocks. At external boundaries the stencil weights of
//! [`MultiBlockDomain::stencil_weights`] realize the mirror condition
//! `ω₋₁ = ω₁`, e.g. `(2ω₁₀₀ + 2ω₀₁₀ + 2ω₀₀₁ − h²·rhs) / 6` at a corner.
//!
//! The discrete Neumann operator is singular. Its left null vector is the
//! dual-cell weight of each node, so the right-hand side is made compatible
//! by removing its dual-weighted mean, and the solution is fixed by removing
//! the dual-weighted mean of `ω`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::MultiBlockDomain;
use crate::monitor::MonitorField;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relaxation factor λ, in (0, 2).
    pub lambda: f64,
    /// Absolute L∞ threshold on the residual.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Sweeps between residual evaluations.
    pub check_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 1.5,
            tolerance: 1e-8,
            max_iterations: 20_000,
            check_every: 10,
        }
    }
}

impl SolverConfig {
    pub fn new(lambda: f64, tolerance: f64, max_iterations: usize) -> Result<Self> {
        let config = Self {
            lambda,
            tolerance,
            max_iterations,
            ..Self::default()
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 2.0) {
            return Err(Error::OutOfRange {
                name: "sor.lambda",
                value: self.lambda,
                constraint: "lambda in (0, 2)",
            });
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::OutOfRange {
                name: "sor.tol",
                value: self.tolerance,
                constraint: "tol > 0",
            });
        }
        if self.max_iterations == 0 {
            return Err(Error::OutOfRange {
                name: "sor.max_iters",
                value: 0.0,
                constraint: "max_iters >= 1",
            });
        }
        if self.check_every == 0 {
            return Err(Error::OutOfRange {
                name: "check_every",
                value: 0.0,
                constraint: "check_every >= 1",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RhsField {
    values: ScalarField,
    mean_removed: bool,
    /// Dual-weighted mean subtracted by [`RhsField::remove_mean`].
    removed_mean: f64,
}

impl RhsField {
    /// Wraps raw values without mean removal.
    pub fn new(domain: &MultiBlockDomain, values: ScalarField) -> Result<Self> {
        values.check_shape(domain)?;
        Ok(Self {
            values,
            mean_removed: false,
            removed_mean: 0.0,
        })
    }

    pub fn values(&self) -> &ScalarField {
        &self.values
    }

    pub fn mean_removed(&self) -> bool {
        self.mean_removed
    }

    pub fn removed_mean(&self) -> f64 {
        self.removed_mean
    }

    /// Subtracts the dual-weighted mean, enforcing `Σ wᵢ rhsᵢ = 0`.
    pub fn remove_mean(mut self, domain: &MultiBlockDomain) -> Self {
        let mut u = self.values.to_unknowns(domain);
        let mean = weighted_mean(domain, &u);
        u.iter_mut().for_each(|v| *v -= mean);
        self.values = ScalarField::from_unknowns(domain, &u);
        self.removed_mean += mean;
        self.mean_removed = true;
        self
    }
}

/// `Σ wᵢ vᵢ` over unknowns with dual-cell weights (`h³` times this is the
/// trapezoidal integral over Ω).
pub fn weighted_sum(domain: &MultiBlockDomain, values: &[f64]) -> f64 {
    values
        .iter()
        .enumerate()
        .map(|(u, v)| domain.dual_weight(u) * v)
        .sum()
}

pub fn weighted_mean(domain: &MultiBlockDomain, values: &[f64]) -> f64 {
    let total: f64 = (0..domain.unknown_count())
        .map(|u| domain.dual_weight(u))
        .sum();
    weighted_sum(domain, values) / total
}

/// `rhs = −∂ₜ(1/f) ≈ (1/f_now − 1/f_next) / dt`, mean-removed.
pub fn assemble_rhs(
    f_now: &MonitorField,
    f_next: &MonitorField,
    dt: f64,
    domain: &MultiBlockDomain,
) -> Result<RhsField> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::OutOfRange {
            name: "dt",
            value: dt,
            constraint: "dt > 0",
        });
    }
    f_now.values().check_shape(domain)?;
    f_next.values().check_shape(domain)?;
    let now = f_now.values().to_unknowns(domain);
    let next = f_next.values().to_unknowns(domain);
    let raw: Vec<f64> = now
        .iter()
        .zip(&next)
        .map(|(a, b)| (1.0 / a - 1.0 / b) / dt)
        .collect();
    Ok(RhsField::new(domain, ScalarField::from_unknowns(domain, &raw))?.remove_mean(domain))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    values: ScalarField,
    achieved_residual: f64,
    iterations_used: usize,
    /// `(sweep, residual)` at every residual evaluation, starting at sweep 0.
    history: Vec<(usize, f64)>,
}

impl PotentialField {
    pub fn values(&self) -> &ScalarField {
        &self.values
    }

    pub fn into_values(self) -> ScalarField {
        self.values
    }

    pub fn achieved_residual(&self) -> f64 {
        self.achieved_residual
    }

    pub fn iterations_used(&self) -> usize {
        self.iterations_used
    }

    pub fn history(&self) -> &[(usize, f64)] {
        &self.history
    }
}

/// Flattened stencil: neighbor unknowns and weights, with missing neighbors
/// pointing back at the node itself with weight 0.
struct Stencil {
    neighbors: Vec<[u32; 6]>,
    weights: Vec<[f64; 6]>,
    h2: f64,
}

impl Stencil {
    fn new(domain: &MultiBlockDomain) -> Self {
        let neighbors = domain
            .neighbor_table()
            .iter()
            .enumerate()
            .map(|(u, nb)| nb.map(|v| if v == u32::MAX { u as u32 } else { v }))
            .collect();
        let weights = (0..domain.unknown_count())
            .map(|u| domain.stencil_weights(u))
            .collect();
        Self {
            neighbors,
            weights,
            h2: domain.spacing().powi(2),
        }
    }

    #[inline]
    fn neighbor_sum(&self, omega: &[f64], u: usize) -> f64 {
        let (nb, w) = (&self.neighbors[u], &self.weights[u]);
        (0..6).map(|d| w[d] * omega[nb[d] as usize]).sum()
    }

    fn residual(&self, omega: &[f64], rhs: &[f64]) -> f64 {
        (0..omega.len())
            .map(|u| ((self.neighbor_sum(omega, u) - 6.0 * omega[u]) / self.h2 - rhs[u]).abs())
            .fold(0.0, f64::max)
    }

    fn sweep(&self, omega: &mut [f64], rhs: &[f64], lambda: f64) {
        for u in 0..omega.len() {
            let tilde = (self.neighbor_sum(omega, u) - self.h2 * rhs[u]) / 6.0;
            omega[u] = (1.0 - lambda) * omega[u] + lambda * tilde;
        }
    }
}

/// Solves the Neumann problem by lexicographic SOR over the unknowns.
///
/// `initial` warm-starts the iteration. The rhs should already be
/// mean-removed; otherwise the iteration stalls at the incompatible part.
pub fn sor_solve(
    rhs: &RhsField,
    domain: &MultiBlockDomain,
    config: &SolverConfig,
    initial: Option<&ScalarField>,
) -> Result<PotentialField> {
    config.validate()?;
    rhs.values.check_shape(domain)?;
    let stencil = Stencil::new(domain);
    let b = rhs.values.to_unknowns(domain);
    let mut omega = match initial {
        Some(init) => {
            init.check_shape(domain)?;
            init.to_unknowns(domain)
        }
        None => vec![0.0; domain.unknown_count()],
    };

    let mut residual = stencil.residual(&omega, &b);
    let mut history = vec![(0, residual)];
    let mut sweeps = 0;
    while residual > config.tolerance && sweeps < config.max_iterations {
        stencil.sweep(&mut omega, &b, config.lambda);
        sweeps += 1;
        if sweeps % config.check_every == 0 || sweeps == config.max_iterations {
            residual = stencil.residual(&omega, &b);
            history.push((sweeps, residual));
        }
    }
    if residual > config.tolerance || residual.is_nan() {
        return Err(Error::NotConverged {
            iterations: sweeps,
            residual,
            tolerance: config.tolerance,
        });
    }

    let mean = weighted_mean(domain, &omega);
    omega.iter_mut().for_each(|v| *v -= mean);
    Ok(PotentialField {
        values: ScalarField::from_unknowns(domain, &omega),
        achieved_residual: residual,
        iterations_used: sweeps,
        history,
    })
}

/// Applies exactly `sweeps` SOR sweeps to `initial` without convergence
/// checks or gauge fixing.
pub fn sor_sweeps(
    rhs: &RhsField,
    domain: &MultiBlockDomain,
    lambda: f64,
    initial: &ScalarField,
    sweeps: usize,
) -> Result<ScalarField> {
    SolverConfig::new(lambda, 1.0, 1)?;
    rhs.values.check_shape(domain)?;
    initial.check_shape(domain)?;
    let stencil = Stencil::new(domain);
    let b = rhs.values.to_unknowns(domain);
    let mut omega = initial.to_unknowns(domain);
    for _ in 0..sweeps {
        stencil.sweep(&mut omega, &b, lambda);
    }
    Ok(ScalarField::from_unknowns(domain, &omega))
}

/// `stencil(ω) − rhs` at every node, with the solver's boundary and
/// interface stencils.
pub fn residual_field(
    omega: &ScalarField,
    rhs: &ScalarField,
    domain: &MultiBlockDomain,
) -> Result<ScalarField> {
    omega.check_shape(domain)?;
    rhs.check_shape(domain)?;
    let stencil = Stencil::new(domain);
    let w = omega.to_unknowns(domain);
    let b = rhs.to_unknowns(domain);
    let r: Vec<f64> = (0..w.len())
        .map(|u| (stencil.neighbor_sum(&w, u) - 6.0 * w[u]) / stencil.h2 - b[u])
        .collect();
    Ok(ScalarField::from_unknowns(domain, &r))
}

/// L∞ norm of [`residual_field`].
pub fn residual(omega: &ScalarField, rhs: &ScalarField, domain: &MultiBlockDomain) -> Result<f64> {
    Ok(residual_field(omega, rhs, domain)?
        .iter()
        .fold(0.0, |m: f64, v| m.max(v.abs())))
}

/// Largest disagreement between the interface-normal central difference of
/// `ω` evaluated from either side of each interface pair, together with any
/// disagreement of the paired values themselves.
pub fn interface_derivative_mismatch(omega: &ScalarField, domain: &MultiBlockDomain) -> f64 {
    let h = domain.spacing();
    let blocks = domain.blocks();
    let value_of = |u: usize| {
        let (b, n) = domain.owner(u);
        omega.block(b)[n]
    };
    let mut worst: f64 = 0.0;
    for patch in domain.interfaces() {
        let (sa, sb) = (patch.side_a(), patch.side_b());
        let axis = sa.face.axis();
        // direction index pointing from side A into side B
        let (out_a, sign) = if sa.face.is_max() {
            (2 * axis + 1, 1.0)
        } else {
            (2 * axis, -1.0)
        };
        let out_b = out_a ^ 1;
        let (ba, bb) = (&blocks[sa.block], &blocks[sb.block]);
        for (pa, pb) in patch.pairs(blocks) {
            let (ua, ub) = (
                domain.unknown(sa.block, ba.node_index(pa)),
                domain.unknown(sb.block, bb.node_index(pb)),
            );
            let (Some(across_a), Some(across_b)) =
                (domain.neighbor(ua, out_a), domain.neighbor(ub, out_b))
            else {
                continue;
            };
            let mut inner_a = pa;
            inner_a[axis] = if sa.face.is_max() {
                pa[axis] - 1
            } else {
                pa[axis] + 1
            };
            let mut inner_b = pb;
            inner_b[axis] = if sb.face.is_max() {
                pb[axis] - 1
            } else {
                pb[axis] + 1
            };
            let from_a =
                sign * (value_of(across_a) - omega.at(domain, sa.block, inner_a)) / (2.0 * h);
            let from_b =
                sign * (omega.at(domain, sb.block, inner_b) - value_of(across_b)) / (2.0 * h);
            let same = (omega.at(domain, sa.block, pa) - omega.at(domain, sb.block, pb)).abs();
            worst = worst.max((from_a - from_b).abs()).max(same);
        }
    }
    worst
}
