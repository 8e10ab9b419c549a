//! Node advection `∂φ/∂t = η(φ, t)` and the two-phase run driver.

use serde::{Deserialize, Serialize};

use crate::diagnostics::folding_check;
use crate::error::{Error, Result};
use crate::field::{ScalarField, VectorField};
use crate::grid::MultiBlockDomain;
use crate::monitor::{monitor_at, MonitorField, MonitorSpec, Phase, STEP1_END};
use crate::poisson::{assemble_rhs, interface_derivative_mismatch, sor_solve, SolverConfig};
use crate::velocity::{gradient, locate, node_velocity, VelocityField};
use crate::Vec3;

/// Node positions of every block at one phase-time.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCoordinates {
    positions: VectorField,
    phase: Phase,
}

impl GridCoordinates {
    /// The identity map.
    pub fn reference(domain: &MultiBlockDomain) -> Self {
        Self {
            positions: VectorField::from_fn(domain, |_, p| p),
            phase: Phase::Step1 { t: 0.0 },
        }
    }

    pub fn new(domain: &MultiBlockDomain, positions: VectorField, phase: Phase) -> Result<Self> {
        positions.check_shape(domain)?;
        Ok(Self { positions, phase })
    }

    pub fn positions(&self) -> &VectorField {
        &self.positions
    }

    pub fn positions_mut(&mut self) -> &mut VectorField {
        &mut self.positions
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn with_phase(mut self, phase: Phase) -> Self {
        self.phase = phase;
        self
    }

    /// Largest node distance between two grids over the same domain.
    pub fn max_displacement(&self, other: &GridCoordinates) -> f64 {
        self.positions
            .iter()
            .zip(other.positions.iter())
            .map(|(a, b)| crate::grid::dist(*a, *b))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    #[default]
    Euler,
    /// Classical four-stage scheme with `η` frozen over the step.
    Rk4,
}

impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Integrator::Euler),
            "rk4" => Ok(Integrator::Rk4),
            _ => Err(Error::Config(format!(
                "deform.integrator: unknown integrator {s:?} (expected \"euler\" or \"rk4\")"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeformConfig {
    pub dt_step1: f64,
    pub substeps_per_l: usize,
    pub integrator: Integrator,
}

impl Default for DeformConfig {
    fn default() -> Self {
        Self {
            dt_step1: 0.05,
            substeps_per_l: 1,
            integrator: Integrator::Euler,
        }
    }
}

impl DeformConfig {
    pub fn validate(&self) -> Result<()> {
        self.step1_steps()?;
        if self.substeps_per_l == 0 {
            return Err(Error::OutOfRange {
                name: "deform.substeps",
                value: 0.0,
                constraint: "substeps >= 1",
            });
        }
        Ok(())
    }

    /// Number of phase-one steps, `0.5 / dt`.
    pub fn step1_steps(&self) -> Result<usize> {
        let dt = self.dt_step1;
        let steps = STEP1_END / dt;
        if dt > 0.0 && dt <= STEP1_END && (steps - steps.round()).abs() < 1e-9 * steps {
            Ok(steps.round() as usize)
        } else {
            Err(Error::OutOfRange {
                name: "deform.dt",
                value: dt,
                constraint: "dt in (0, 0.5] with 0.5/dt an integer",
            })
        }
    }
}

/// Moves every node along `η` for one step of length `dt`.
///
/// Each shared node is integrated once and written to all its block
/// instances. Coordinates normal to the external boundary are held at their
/// reference values.
pub fn advance(
    coords: &GridCoordinates,
    eta: &VelocityField,
    domain: &MultiBlockDomain,
    dt: f64,
    integrator: Integrator,
) -> Result<GridCoordinates> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::OutOfRange {
            name: "dt",
            value: dt,
            constraint: "dt > 0",
        });
    }
    coords.positions.check_shape(domain)?;
    eta.eta().check_shape(domain)?;
    let current = coords.positions.to_unknowns(domain);
    let mut next = Vec::with_capacity(current.len());
    for (u, &p) in current.iter().enumerate() {
        let pinned = domain.outward(u);
        let reference = domain.unknown_position(u);
        let pin = |mut q: Vec3| {
            for a in 0..3 {
                if pinned[a] != 0 {
                    q[a] = reference[a];
                }
            }
            q
        };
        let escaped = |q: Vec3| {
            let (block, node) = domain.owner(u);
            Error::NodeEscaped {
                block,
                node: domain.block(block).node_ijk(node),
                position: q,
            }
        };
        let velocity = |q: Vec3| eta.at(domain, q).map_err(|_| escaped(q));
        let step = |q: Vec3, v: Vec3, s: f64| pin(std::array::from_fn(|a| q[a] + s * v[a]));
        let q = match integrator {
            Integrator::Euler => step(p, velocity(p)?, dt),
            Integrator::Rk4 => {
                let k1 = velocity(p)?;
                let k2 = velocity(step(p, k1, dt / 2.0))?;
                let k3 = velocity(step(p, k2, dt / 2.0))?;
                let k4 = velocity(step(p, k3, dt))?;
                let v = std::array::from_fn(|a| (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]) / 6.0);
                step(p, v, dt)
            }
        };
        locate(q, domain).map_err(|_| escaped(q))?;
        next.push(q);
    }
    Ok(GridCoordinates {
        positions: VectorField::from_unknowns(domain, &next),
        phase: coords.phase,
    })
}

/// Summary of the Poisson solve that produced a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveRecord {
    pub iterations: usize,
    pub residual: f64,
    /// Disagreement of the interface-normal derivative of `ω` seen from
    /// the two blocks.
    pub interface_derivative_mismatch: f64,
}

/// A grid emitted by the driver together with the fields that moved it there.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub coords: GridCoordinates,
    /// Monitor at the snapshot's phase.
    pub monitor: MonitorField,
    /// Potential from the last solve before this snapshot.
    pub omega: Option<ScalarField>,
    /// Every solve since the previous snapshot.
    pub solves: Vec<SolveRecord>,
}

/// Runs the deformation on a fixed domain.
#[derive(Debug, Clone)]
pub struct Deformer {
    domain: MultiBlockDomain,
    spec: MonitorSpec,
    solver: SolverConfig,
    config: DeformConfig,
}

struct State {
    coords: GridCoordinates,
    monitor: MonitorField,
    omega: Option<ScalarField>,
}

impl Deformer {
    pub fn new(
        domain: MultiBlockDomain,
        spec: MonitorSpec,
        solver: SolverConfig,
        config: DeformConfig,
    ) -> Result<Self> {
        spec.profile.validate()?;
        solver.validate()?;
        config.validate()?;
        Ok(Self {
            domain,
            spec,
            solver,
            config,
        })
    }

    pub fn domain(&self) -> &MultiBlockDomain {
        &self.domain
    }

    pub fn spec(&self) -> &MonitorSpec {
        &self.spec
    }

    pub fn solver(&self) -> &SolverConfig {
        &self.solver
    }

    pub fn config(&self) -> &DeformConfig {
        &self.config
    }

    /// One solve + advance from the current state to `phase`.
    fn step(&self, state: &mut State, phase: Phase, dt: f64) -> Result<SolveRecord> {
        let d = &self.domain;
        let f_next = monitor_at(d, &self.spec, phase)?;
        let rhs = assemble_rhs(&state.monitor, &f_next, dt, d)?;
        // warm starting a zero-rhs solve would only add solver noise
        let zero_rhs = rhs.values().iter().all(|v| *v == 0.0);
        let warm = if zero_rhs { None } else { state.omega.as_ref() };
        let omega = sor_solve(&rhs, d, &self.solver, warm)?;
        let record = SolveRecord {
            iterations: omega.iterations_used(),
            residual: omega.achieved_residual(),
            interface_derivative_mismatch: interface_derivative_mismatch(omega.values(), d),
        };
        let omega = omega.into_values();
        let eta = node_velocity(&state.monitor, gradient(&omega, d)?, d)?;
        let coords = advance(&state.coords, &eta, d, dt, self.config.integrator)?.with_phase(phase);
        let folds = folding_check(&coords, d);
        if let Some(worst) = folds.worst() {
            return Err(Error::Folded {
                stamp: phase.to_string(),
                count: folds.folded.len(),
                worst: worst.jacobian,
                block: worst.block,
                cell: worst.cell,
            });
        }
        *state = State {
            coords,
            monitor: f_next,
            omega: Some(omega),
        };
        Ok(record)
    }

    fn emit(state: &State, solves: Vec<SolveRecord>) -> Snapshot {
        Snapshot {
            coords: state.coords.clone(),
            monitor: state.monitor.clone(),
            omega: state.omega.clone(),
            solves,
        }
    }

    fn step1(&self, observer: &mut dyn FnMut(Snapshot) -> Result<()>) -> Result<State> {
        let steps = self.config.step1_steps()?;
        let phase_at = |s: usize| Phase::Step1 {
            t: s as f64 * STEP1_END / steps as f64,
        };
        let mut state = State {
            coords: GridCoordinates::reference(&self.domain),
            monitor: monitor_at(&self.domain, &self.spec, phase_at(0))?,
            omega: None,
        };
        observer(Self::emit(&state, Vec::new()))?;
        for s in 0..steps {
            let record = self.step(&mut state, phase_at(s + 1), STEP1_END / steps as f64)?;
            observer(Self::emit(&state, vec![record]))?;
        }
        Ok(state)
    }

    fn step2(
        &self,
        mut state: State,
        observer: &mut dyn FnMut(Snapshot) -> Result<()>,
    ) -> Result<State> {
        let (l0, l1) = self.spec.schedule.l_range();
        let m = self.config.substeps_per_l;
        let d = &self.domain;
        // the frozen step-1 profile at t = 0.5 is the step-2 profile at l0
        state.monitor = monitor_at(d, &self.spec, Phase::Step2 { l: l0 })?;
        state.coords = state.coords.with_phase(Phase::Step2 { l: l0 });
        observer(Self::emit(&state, Vec::new()))?;
        let levels = (l1 - l0).round() as usize;
        for l in 0..levels {
            let mut records = Vec::with_capacity(m);
            for s in 0..m {
                let phase = Phase::Step2 {
                    l: l0 + l as f64 + (s + 1) as f64 / m as f64,
                };
                records.push(self.step(&mut state, phase, 1.0 / m as f64)?);
            }
            observer(Self::emit(&state, records))?;
        }
        Ok(state)
    }

    /// Phase one from the reference lattice: emits `t = 0, dt, …, 0.5`.
    pub fn run_step1(
        &self,
        mut observer: impl FnMut(Snapshot) -> Result<()>,
    ) -> Result<GridCoordinates> {
        Ok(self.step1(&mut observer)?.coords)
    }

    /// Phase two from `start`: emits `l = l0, l0 + 1, …, l1`.
    pub fn run_step2(
        &self,
        start: &GridCoordinates,
        mut observer: impl FnMut(Snapshot) -> Result<()>,
    ) -> Result<GridCoordinates> {
        start.positions.check_shape(&self.domain)?;
        let (l0, _) = self.spec.schedule.l_range();
        let state = State {
            coords: start.clone(),
            monitor: monitor_at(&self.domain, &self.spec, Phase::Step2 { l: l0 })?,
            omega: None,
        };
        Ok(self.step2(state, &mut observer)?.coords)
    }

    /// Both phases. The phase-one end grid is emitted once, stamped `l = l0`.
    pub fn run(&self, mut observer: impl FnMut(Snapshot) -> Result<()>) -> Result<GridCoordinates> {
        let steps = self.config.step1_steps()?;
        let mut seen = 0;
        let mut pending = Vec::new();
        let state = self.step1(&mut |snap| {
            seen += 1;
            if seen <= steps {
                observer(snap)
            } else {
                pending = snap.solves;
                Ok(())
            }
        })?;
        let mut first = true;
        Ok(self
            .step2(state, &mut |mut snap| {
                if first {
                    first = false;
                    snap.solves = std::mem::take(&mut pending);
                }
                observer(snap)
            })?
            .coords)
    }

    /// [`Deformer::run`] collected into memory.
    pub fn run_collect(&self) -> Result<Vec<Snapshot>> {
        let mut out = Vec::new();
        self.run(|s| {
            out.push(s);
            Ok(())
        })?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::monitor::{MonitorProfile, SphereSchedule};
    use approx::assert_relative_eq;

    fn uniform_spec() -> MonitorSpec {
        MonitorSpec::new(
            SphereSchedule::backstep(),
            MonitorProfile {
                band: 0.0,
                ..MonitorProfile::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn config_validation() {
        assert_eq!(DeformConfig::default().step1_steps().unwrap(), 10);
        let with_dt = |dt| DeformConfig {
            dt_step1: dt,
            ..DeformConfig::default()
        };
        assert_eq!(with_dt(0.025).step1_steps().unwrap(), 20);
        assert_eq!(with_dt(0.1).step1_steps().unwrap(), 5);
        assert!(with_dt(0.03).validate().is_err());
        assert!(with_dt(0.0).validate().is_err());
        assert!(with_dt(1.0).validate().is_err());
        let zero_sub = DeformConfig {
            substeps_per_l: 0,
            ..DeformConfig::default()
        };
        assert!(zero_sub.validate().is_err());
        assert_eq!("rk4".parse::<Integrator>().unwrap(), Integrator::Rk4);
        assert!("midpoint".parse::<Integrator>().is_err());
    }

    #[test]
    fn zero_velocity_no_motion() {
        let d = MultiBlockDomain::backstep(3).unwrap();
        let g = GridCoordinates::reference(&d);
        let eta = VelocityField::from_eta(&d, VectorField::filled(&d, [0.0; 3])).unwrap();
        for integrator in [Integrator::Euler, Integrator::Rk4] {
            let next = advance(&g, &eta, &d, 0.1, integrator).unwrap();
            assert_eq!(next, g);
        }
    }

    #[test]
    fn constant_velocity_translates_interior() {
        let d = MultiBlockDomain::single_block(4).unwrap();
        let g = GridCoordinates::reference(&d);
        let eta = VelocityField::from_eta(&d, VectorField::filled(&d, [0.2, 0.0, 0.0])).unwrap();
        for integrator in [Integrator::Euler, Integrator::Rk4] {
            let next = advance(&g, &eta, &d, 0.1, integrator).unwrap();
            let p = next.positions().at(&d, 0, [2, 2, 2]);
            assert_relative_eq!(p[0], 0.52, epsilon = 1e-15);
            // the x = 0 face is held in place
            assert_eq!(next.positions().at(&d, 0, [0, 2, 2])[0], 0.0);
        }
    }

    #[test]
    fn escaping_node_reported() {
        let d = MultiBlockDomain::single_block(4).unwrap();
        let g = GridCoordinates::reference(&d);
        let eta = VelocityField::from_eta(&d, VectorField::filled(&d, [5.0, 0.0, 0.0])).unwrap();
        let err = advance(&g, &eta, &d, 1.0, Integrator::Euler).unwrap_err();
        assert!(matches!(err, Error::NodeEscaped { block: 0, .. }));
    }

    #[test]
    fn uniform_monitor_keeps_identity() {
        let d = MultiBlockDomain::backstep(4).unwrap();
        let def = Deformer::new(
            d.clone(),
            uniform_spec(),
            SolverConfig::default(),
            DeformConfig::default(),
        )
        .unwrap();
        let reference = GridCoordinates::reference(&d);
        let mut count = 0;
        def.run(|s| {
            count += 1;
            assert!(s.coords.max_displacement(&reference) < 1e-10);
            Ok(())
        })
        .unwrap();
        assert_eq!(count, 51);
    }

    #[test]
    fn stationary_schedule_keeps_grid() {
        let d = MultiBlockDomain::backstep(4).unwrap();
        let c = [0.5, 0.5, 0.5];
        let spec = MonitorSpec::new(
            SphereSchedule::new(0.2, vec![(0.0, c), (5.0, c)]).unwrap(),
            MonitorProfile::default(),
        )
        .unwrap();
        let def = Deformer::new(
            d.clone(),
            spec,
            SolverConfig::default(),
            DeformConfig::default(),
        )
        .unwrap();
        let start = def.run_step1(|_| Ok(())).unwrap();
        let mut grids = Vec::new();
        def.run_step2(&start, |s| {
            grids.push(s.coords);
            Ok(())
        })
        .unwrap();
        assert_eq!(grids.len(), 6);
        for g in &grids {
            assert!(g.max_displacement(&start) < 1e-10);
        }
    }

    #[test]
    fn stamps_and_handoff() {
        let d = MultiBlockDomain::backstep(3).unwrap();
        let def = Deformer::new(
            d.clone(),
            MonitorSpec::default(),
            SolverConfig::default(),
            DeformConfig::default(),
        )
        .unwrap();
        let mut step1 = Vec::new();
        let end = def
            .run_step1(|s| {
                step1.push(s);
                Ok(())
            })
            .unwrap();
        assert_eq!(step1.len(), 11);
        assert_eq!(step1[0].coords, GridCoordinates::reference(&d));
        assert_eq!(step1[10].coords.phase(), Phase::Step1 { t: 0.5 });
        assert_eq!(step1[3].coords.phase().to_string(), "t=0.15");
        let all = def.run_collect().unwrap();
        assert_eq!(all.len(), 51);
        assert_eq!(all[10].coords.phase(), Phase::Step2 { l: 0.0 });
        assert_eq!(all[10].coords.positions(), end.positions());
        assert_eq!(all[10].solves.len(), 1);
        assert_eq!(all[50].coords.phase().to_string(), "l=40");
    }
}
