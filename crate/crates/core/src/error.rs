use std::path::PathBuf;

use crate::Vec3;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid block {block}: {reason}")]
    InvalidBlock { block: usize, reason: String },

    #[error("invalid interface: {0}")]
    InvalidInterface(String),

    #[error("{name} = {value} is out of range: {constraint}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("non-positive pre-monitor value {value} at block {block} node {node}")]
    NonPositiveMonitor {
        block: usize,
        node: usize,
        value: f64,
    },

    #[error("field does not match the domain: {0}")]
    ShapeMismatch(String),

    #[error("SOR did not converge: residual {residual:e} after {iterations} sweeps (tolerance {tolerance:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("point ({}, {}, {}) lies outside the domain", .0[0], .0[1], .0[2])]
    OutOfDomain(Vec3),

    #[error("node {node:?} of block {block} left the domain at ({}, {}, {}); reduce the time step", .position[0], .position[1], .position[2])]
    NodeEscaped {
        block: usize,
        node: [usize; 3],
        position: Vec3,
    },

    #[error("grid folded at {stamp}: {count} cells with J <= 0 (worst J = {worst:e} in block {block} cell {cell:?})")]
    Folded {
        stamp: String,
        count: usize,
        worst: f64,
        block: usize,
        cell: [usize; 3],
    },

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed VTK file: {reason}")]
    Vtk { path: PathBuf, reason: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
