use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid feeder: {0}")]
    Topology(#[from] TopologyError),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Solver(#[from] SolverError),

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    /// Short stable identifier, used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Topology(_) => "topology",
            Error::InvalidInput(_) => "invalid_input",
            Error::Solver(_) => "solver",
            Error::DegenerateSample(_) => "degenerate_sample",
            Error::GridMismatch(_) => "grid_mismatch",
            Error::Numerical(_) => "numerical",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TopologyError {
    #[error("no slack node")]
    MissingSlack,
    #[error("more than one slack node ({0} and {1})")]
    MultipleSlack(u32, u32),
    #[error("duplicate node id {0}")]
    DuplicateNode(u32),
    #[error("branch references unknown node {0}")]
    UnknownNode(u32),
    #[error("branch {from}->{to} closes a cycle")]
    Cycle { from: u32, to: u32 },
    #[error("node {0} is not reachable from the slack node")]
    Disconnected(u32),
    #[error("branch {from}->{to} has zero impedance")]
    ZeroImpedance { from: u32, to: u32 },
    #[error("branch {from}->{to} has negative resistance")]
    NegativeResistance { from: u32, to: u32 },
    #[error("node {0} has a negative base load")]
    NegativeLoad(u32),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("power flow did not converge in {iterations} iterations (last max |dV| = {max_delta:e} p.u.)")]
    NotConverged { iterations: usize, max_delta: f64 },
    #[error("voltage collapse at node {node}: |V| = {magnitude} p.u.")]
    VoltageCollapse { node: u32, magnitude: f64 },
    #[error("injection vector has {got} entries, feeder has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite injection at node {0}")]
    NonFinite(u32),
    #[error("nodal admittance matrix is singular")]
    Singular,
}
