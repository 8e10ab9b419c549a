//! Self-checks behind `mbdeform verify`.

use std::f64::consts::PI;

use crate::config::RunConfig;
use crate::deform::{Deformer, GridCoordinates};
use crate::diagnostics::folding_check;
use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::grid::MultiBlockDomain;
use crate::monitor::{MonitorProfile, MonitorSpec};
use crate::poisson::{sor_solve, weighted_mean, RhsField, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for Check {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

/// Solves the Neumann problem for `ω = cos πx cos πy cos πz` on the unit
/// cube with `n` cells per side. Returns the L∞ error (up to the constant)
/// and the final residual.
pub fn manufactured_error(n: usize, solver: &SolverConfig) -> Result<(f64, f64)> {
    let d = MultiBlockDomain::single_block(n)?;
    let exact = |p: [f64; 3]| (PI * p[0]).cos() * (PI * p[1]).cos() * (PI * p[2]).cos();
    let rhs = RhsField::new(
        &d,
        ScalarField::from_fn(&d, |_, p| -3.0 * PI * PI * exact(p)),
    )?
    .remove_mean(&d);
    let w = sor_solve(&rhs, &d, solver, None)?;
    let reference = ScalarField::from_fn(&d, |_, p| exact(p)).to_unknowns(&d);
    let shift = weighted_mean(&d, &reference);
    let err = w
        .values()
        .to_unknowns(&d)
        .iter()
        .zip(&reference)
        .map(|(a, b)| (a - (b - shift)).abs())
        .fold(0.0, f64::max);
    Ok((err, w.achieved_residual()))
}

/// Second-order convergence between `n = 10` and `n = 20`.
pub fn manufactured_poisson(solver: &SolverConfig) -> Check {
    let name = "manufactured Poisson";
    let result =
        manufactured_error(10, solver).and_then(|a| Ok((a, manufactured_error(20, solver)?)));
    match result {
        Ok(((e10, r10), (e20, r20))) => {
            let ratio = e10 / e20;
            Check {
                name,
                passed: (3.0..=5.0).contains(&ratio) && r10 <= solver.tolerance && r20 <= solver.tolerance,
                detail: format!("error ratio {ratio:.3} ({e10:.3e} / {e20:.3e}), residuals {r10:.1e}, {r20:.1e}"),
            }
        }
        Err(e) => Check {
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Largest node displacement after a full run with a uniform monitor.
pub fn identity_displacement(config: &RunConfig) -> Result<f64> {
    let domain = config.domain()?;
    let spec = MonitorSpec::new(
        config.monitor.schedule.clone(),
        MonitorProfile {
            band: 0.0,
            ..config.monitor.profile
        },
    )?;
    let deformer = Deformer::new(domain, spec, config.solver, config.deform)?;
    let reference = GridCoordinates::reference(deformer.domain());
    let mut worst: f64 = 0.0;
    deformer.run(|snap| {
        worst = worst.max(snap.coords.max_displacement(&reference));
        Ok(())
    })?;
    Ok(worst)
}

pub fn identity_noop(config: &RunConfig) -> Check {
    let name = "identity monitor";
    match identity_displacement(config) {
        Ok(worst) => Check {
            name,
            passed: worst < 1e-10,
            detail: format!("max displacement {worst:.3e}"),
        },
        Err(e) => Check {
            name,
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Runs the configured scenario and checks every snapshot for folded cells.
pub fn folding_scan(config: &RunConfig) -> Check {
    let name = "folding scan";
    let mut seen = 0usize;
    let mut min_j = f64::INFINITY;
    let result = config.domain().and_then(|domain| {
        let deformer = Deformer::new(domain, config.monitor.clone(), config.solver, config.deform)?;
        deformer.run(|snap| {
            let report = folding_check(&snap.coords, deformer.domain());
            if let Some(worst) = report.worst() {
                return Err(Error::Folded {
                    stamp: snap.coords.phase().to_string(),
                    count: report.folded.len(),
                    worst: worst.jacobian,
                    block: worst.block,
                    cell: worst.cell,
                });
            }
            let jac = crate::diagnostics::jacobian_per_cell(&snap.coords, deformer.domain());
            min_j = jac.iter().flatten().fold(min_j, |a, &b| a.min(b));
            seen += 1;
            Ok(())
        })
    });
    match result {
        Ok(_) => Check {
            name,
            passed: true,
            detail: format!("{seen} snapshots, min J {min_j:.4}"),
        },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("after {seen} clean snapshots: {e}"),
        },
    }
}

pub fn run_checks(config: &RunConfig) -> Vec<Check> {
    vec![
        manufactured_poisson(&config.solver),
        identity_noop(config),
        folding_scan(config),
    ]
}
