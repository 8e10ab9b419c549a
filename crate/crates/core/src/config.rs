//! Run configuration: a flat JSON object with dotted keys.
//!
//! ```json
//! { "n": 10, "sor.lambda": 1.7, "deform.integrator": "rk4", "output.dir": "out" }
//! ```
//!
//! Every key is optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::deform::{DeformConfig, Integrator};
use crate::error::{Error, Result};
use crate::grid::MultiBlockDomain;
use crate::monitor::{MonitorProfile, MonitorSpec, SphereSchedule};
use crate::poisson::SolverConfig;
use crate::Vec3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Column `[0,1]×[0,2]×[0,1]` joined to the cube `[1,2]×[0,1]×[0,1]`.
    #[default]
    Backstep,
    /// The unit cube as one block.
    SingleBlock,
}

impl Scenario {
    pub fn domain(self, n: usize) -> Result<MultiBlockDomain> {
        match self {
            Scenario::Backstep => MultiBlockDomain::backstep(n),
            Scenario::SingleBlock => MultiBlockDomain::single_block(n),
        }
    }

    /// Sphere path used when the config gives none.
    pub fn default_waypoints(self) -> Vec<(f64, Vec3)> {
        match self {
            Scenario::Backstep => SphereSchedule::backstep().waypoints().to_vec(),
            Scenario::SingleBlock => vec![(0.0, [0.3, 0.5, 0.5]), (40.0, [0.7, 0.5, 0.5])],
        }
    }
}

/// The document as written, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RawConfig {
    pub scenario: Scenario,
    pub n: usize,
    #[serde(rename = "monitor.radius")]
    pub radius: f64,
    #[serde(rename = "monitor.band")]
    pub band: f64,
    #[serde(rename = "monitor.slope")]
    pub slope: f64,
    #[serde(rename = "monitor.floor_scale")]
    pub floor_scale: f64,
    /// `[l, x, y, z]` rows; the scenario's path when absent.
    #[serde(rename = "schedule.waypoints", skip_serializing_if = "Option::is_none")]
    pub waypoints: Option<Vec<[f64; 4]>>,
    #[serde(rename = "sor.lambda")]
    pub lambda: f64,
    #[serde(rename = "sor.tol")]
    pub tol: f64,
    #[serde(rename = "sor.max_iters")]
    pub max_iters: usize,
    #[serde(rename = "sor.check_every")]
    pub check_every: usize,
    #[serde(rename = "deform.dt")]
    pub dt: f64,
    #[serde(rename = "deform.substeps")]
    pub substeps: usize,
    #[serde(rename = "deform.integrator")]
    pub integrator: Integrator,
    #[serde(rename = "output.dir")]
    pub dir: PathBuf,
    #[serde(rename = "output.cadence")]
    pub cadence: usize,
    #[serde(rename = "output.slice_z")]
    pub slice_z: f64,
}

impl Default for RawConfig {
    fn default() -> Self {
        let profile = MonitorProfile::default();
        let solver = SolverConfig::default();
        let deform = DeformConfig::default();
        Self {
            scenario: Scenario::Backstep,
            n: 20,
            radius: SphereSchedule::backstep().radius(),
            band: profile.band,
            slope: profile.slope,
            floor_scale: profile.floor_scale,
            waypoints: None,
            lambda: solver.lambda,
            tol: solver.tolerance,
            max_iters: solver.max_iterations,
            check_every: solver.check_every,
            dt: deform.dt_step1,
            substeps: deform.substeps_per_l,
            integrator: deform.integrator,
            dir: PathBuf::from("out"),
            cadence: 1,
            slice_z: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Every `cadence`-th snapshot is written; the last one always is.
    pub cadence: usize,
    pub slice_z: f64,
}

/// A validated configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub monitor: MonitorSpec,
    pub solver: SolverConfig,
    pub deform: DeformConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RawConfig::default().validate().expect("defaults are valid")
    }
}

impl RawConfig {
    pub fn validate(self) -> Result<RunConfig> {
        if self.n < 2 {
            return Err(Error::OutOfRange {
                name: "n",
                value: self.n as f64,
                constraint: "n >= 2",
            });
        }
        let waypoints = match self.waypoints {
            Some(rows) => rows
                .into_iter()
                .map(|[l, x, y, z]| (l, [x, y, z]))
                .collect(),
            None => self.scenario.default_waypoints(),
        };
        let schedule = SphereSchedule::new(self.radius, waypoints)?;
        let profile = MonitorProfile {
            band: self.band,
            slope: self.slope,
            floor_scale: self.floor_scale,
        };
        let monitor = MonitorSpec::new(schedule, profile)?;
        let solver = SolverConfig {
            lambda: self.lambda,
            tolerance: self.tol,
            max_iterations: self.max_iters,
            check_every: self.check_every,
        };
        solver.validate().map_err(|e| match e {
            Error::OutOfRange {
                name: "check_every",
                value,
                constraint,
            } => Error::OutOfRange {
                name: "sor.check_every",
                value,
                constraint,
            },
            e => e,
        })?;
        let deform = DeformConfig {
            dt_step1: self.dt,
            substeps_per_l: self.substeps,
            integrator: self.integrator,
        };
        deform.validate()?;
        if self.cadence == 0 {
            return Err(Error::OutOfRange {
                name: "output.cadence",
                value: 0.0,
                constraint: "cadence >= 1",
            });
        }
        if !(0.0..=1.0).contains(&self.slice_z) {
            return Err(Error::OutOfRange {
                name: "output.slice_z",
                value: self.slice_z,
                constraint: "slice_z in [0, 1]",
            });
        }
        Ok(RunConfig {
            scenario: self.scenario,
            n: self.n,
            monitor,
            solver,
            deform,
            output: OutputConfig {
                dir: self.dir,
                cadence: self.cadence,
                slice_z: self.slice_z,
            },
        })
    }
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = if text.trim().is_empty() {
        RawConfig::default()
    } else {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
    };
    raw.validate()
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        e => e,
    })
}

impl RunConfig {
    pub fn domain(&self) -> Result<MultiBlockDomain> {
        self.scenario.domain(self.n)
    }
}
