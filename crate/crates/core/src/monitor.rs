//! Level-set driven monitor functions.
//!
//! A sphere of radius `r` travels along a piecewise-linear schedule in the
//! artificial time `l`. The level set `d = |p − c(l)|² − r²` feeds a
//! piecewise-linear pre-monitor that is small near `d = 0` and 1 far away;
//! the pre-monitor is then scaled so that `∫ 1/f = |Ω|`.
//!
//! Phase one ramps the profile in from the uniform monitor over
//! `t ∈ [0, 0.5]` with the sphere parked at `c(0)`; phase two keeps the
//! `t = 0.5` profile and moves the sphere.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{cell_mean_integral, ScalarField};
use crate::grid::MultiBlockDomain;
use crate::Vec3;

/// End of the phase-one pseudo-time interval.
pub const STEP1_END: f64 = 0.5;

/// Time stamp of a monitor or grid: pseudo-time `t` in phase one,
/// artificial time `l` in phase two.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Phase {
    Step1 { t: f64 },
    Step2 { l: f64 },
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Step1 { t } => write!(f, "t={t}"),
            Phase::Step2 { l } => write!(f, "l={l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereSchedule {
    radius: f64,
    waypoints: Vec<(f64, Vec3)>,
}

impl SphereSchedule {
    /// `waypoints` are `(l, center)` pairs with strictly increasing `l`;
    /// the center is linear in `l` between them.
    pub fn new(radius: f64, waypoints: Vec<(f64, Vec3)>) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::OutOfRange {
                name: "monitor.radius",
                value: radius,
                constraint: "r > 0",
            });
        }
        if waypoints.is_empty() {
            return Err(Error::Config("schedule needs at least one waypoint".into()));
        }
        if waypoints
            .windows(2)
            .any(|w| w[1].0 <= w[0].0 || w[1].0.is_nan())
        {
            return Err(Error::Config(
                "schedule waypoints must have increasing l".into(),
            ));
        }
        Ok(Self { radius, waypoints })
    }

    /// `(0.5, 1.5, 0.5)` at `l = 0`, down to `(0.5, 0.5, 0.5)` at `l = 20`,
    /// across to `(1.5, 0.5, 0.5)` at `l = 40`; radius 0.2.
    pub fn backstep() -> Self {
        Self {
            radius: 0.2,
            waypoints: vec![
                (0.0, [0.5, 1.5, 0.5]),
                (20.0, [0.5, 0.5, 0.5]),
                (40.0, [1.5, 0.5, 0.5]),
            ],
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn waypoints(&self) -> &[(f64, Vec3)] {
        &self.waypoints
    }

    /// `(first l, last l)`.
    pub fn l_range(&self) -> (f64, f64) {
        (
            self.waypoints[0].0,
            self.waypoints[self.waypoints.len() - 1].0,
        )
    }

    pub fn center(&self, l: f64) -> Result<Vec3> {
        let (lo, hi) = self.l_range();
        if !(l >= lo && l <= hi) {
            return Err(Error::OutOfRange {
                name: "l",
                value: l,
                constraint: "l within the schedule",
            });
        }
        let seg = self
            .waypoints
            .windows(2)
            .find(|w| l <= w[1].0)
            .map(|w| (w[0], w[1]));
        Ok(match seg {
            None => self.waypoints[0].1,
            Some(((l0, c0), (l1, c1))) => {
                let s = (l - l0) / (l1 - l0);
                std::array::from_fn(|a| c0[a] + s * (c1[a] - c0[a]))
            }
        })
    }
}

/// Shape of the pre-monitor: `floor ∓ slope·d` inside `|d| < band`, 1 outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorProfile {
    pub band: f64,
    pub slope: f64,
    pub floor_scale: f64,
}

impl Default for MonitorProfile {
    fn default() -> Self {
        Self {
            band: 0.05,
            slope: 8.0,
            floor_scale: 0.2,
        }
    }
}

impl MonitorProfile {
    pub fn validate(&self) -> Result<()> {
        let check = |name, value: f64, ok: bool, constraint| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(Error::OutOfRange {
                    name,
                    value,
                    constraint,
                })
            }
        };
        check("monitor.band", self.band, self.band >= 0.0, "band >= 0")?;
        check("monitor.slope", self.slope, self.slope >= 0.0, "slope >= 0")?;
        // floor > 0 keeps 1 − 2t + 2t·(floor + slope·|d|) ≥ min(1, floor) on t ∈ [0, 0.5]
        check(
            "monitor.floor_scale",
            self.floor_scale,
            self.floor_scale > 0.0,
            "floor_scale > 0",
        )
    }

    /// The fully developed (`t = 0.5`) profile.
    fn target(&self, d: f64) -> Option<f64> {
        if d >= -self.band && d < 0.0 {
            Some(self.floor_scale - self.slope * d)
        } else if d >= 0.0 && d < self.band {
            Some(self.floor_scale + self.slope * d)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorSpec {
    pub schedule: SphereSchedule,
    pub profile: MonitorProfile,
}

impl Default for MonitorSpec {
    fn default() -> Self {
        Self {
            schedule: SphereSchedule::backstep(),
            profile: MonitorProfile::default(),
        }
    }
}

/// `|p − center|² − r²`.
#[inline]
pub fn level_set(p: Vec3, center: Vec3, radius: f64) -> f64 {
    (p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) + (p[2] - center[2]).powi(2)
        - radius * radius
}

impl MonitorSpec {
    pub fn new(schedule: SphereSchedule, profile: MonitorProfile) -> Result<Self> {
        profile.validate()?;
        Ok(Self { schedule, profile })
    }

    pub fn level_set(&self, p: Vec3, l: f64) -> Result<f64> {
        Ok(level_set(p, self.schedule.center(l)?, self.schedule.radius))
    }

    /// Phase-one pre-monitor: `1 − 2t + 2t·(floor ∓ slope·d)` in the band, 1 elsewhere.
    pub fn pre_monitor_step1(&self, d: f64, t: f64) -> Result<f64> {
        if !(0.0..=STEP1_END).contains(&t) {
            return Err(Error::OutOfRange {
                name: "t",
                value: t,
                constraint: "t in [0, 0.5]",
            });
        }
        let ramp = t / STEP1_END;
        Ok(match self.profile.target(d) {
            Some(g) => 1.0 - ramp + ramp * g,
            None => 1.0,
        })
    }

    /// Phase-two pre-monitor: the phase-one profile frozen at `t = 0.5`.
    pub fn pre_monitor_step2(&self, d: f64) -> f64 {
        self.profile.target(d).unwrap_or(1.0)
    }

    pub fn pre_monitor(&self, p: Vec3, phase: Phase) -> Result<f64> {
        match phase {
            Phase::Step1 { t } => {
                let (l0, _) = self.schedule.l_range();
                self.pre_monitor_step1(self.level_set(p, l0)?, t)
            }
            Phase::Step2 { l } => Ok(self.pre_monitor_step2(self.level_set(p, l)?)),
        }
    }
}

/// Normalized monitor sampled at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct MonitorField {
    values: ScalarField,
    phase: Phase,
    scale: f64,
}

impl MonitorField {
    pub fn values(&self) -> &ScalarField {
        &self.values
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    /// `Q / |Ω|`, the factor applied to the pre-monitor.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Same field with every value multiplied by `c`; used by diagnostics.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            values: self.values.map(|v| v * c),
            phase: self.phase,
            scale: self.scale * c,
        }
    }
}

/// `f = f̃ · Q / |Ω|` with `Q` the midpoint quadrature of `1/f̃`.
pub fn normalize(
    pre: &ScalarField,
    domain: &MultiBlockDomain,
    phase: Phase,
) -> Result<MonitorField> {
    pre.check_shape(domain)?;
    for (b, values) in pre.blocks().iter().enumerate() {
        if let Some((node, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| **v <= 0.0 || v.is_nan())
        {
            return Err(Error::NonPositiveMonitor {
                block: b,
                node,
                value,
            });
        }
    }
    let q = cell_mean_integral(domain, pre, |v| 1.0 / v);
    let scale = q / domain.volume();
    Ok(MonitorField {
        values: pre.map(|v| v * scale),
        phase,
        scale,
    })
}

/// Evaluates and normalizes the monitor at every node of the domain.
pub fn monitor_at(
    domain: &MultiBlockDomain,
    spec: &MonitorSpec,
    phase: Phase,
) -> Result<MonitorField> {
    let mut err = None;
    let pre = ScalarField::from_fn(domain, |_, p| {
        spec.pre_monitor(p, phase).unwrap_or_else(|e| {
            err.get_or_insert(e);
            1.0
        })
    });
    if let Some(e) = err {
        return Err(e);
    }
    normalize(&pre, domain, phase)
}
