//! Uncertainty propagation through the feeder.
//!
//! Sampling engines ([`run_mcs`], [`run_fsds`]) solve one power flow per
//! input realization. Point-estimate engines ([`run_tpem`], [`run_ut`])
//! solve a small deterministic set of input points and recover moments from
//! weights.

mod compare;
mod fsds;
pub mod tpem;
pub mod ut;

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{DensityEstimate, TuningCurve};
use crate::error::{Error, Result, SolverError};
use crate::metrics::{moments, MomentVector};
use crate::solver::solve_fbs;
use crate::uncertainty::{build_samples, Scenario};

pub use compare::{
    compare_engines, write_characteristics_csv, write_errors_csv, write_moments_csv, Comparison,
    EngineErrors,
};
pub use fsds::{run_fsds, tune_fsds_sample_count, FsdsOptions};
pub use tpem::{run_tpem, ConcentrationPointSet};
pub use ut::{run_ut, SigmaPointSet, UtOptions};

/// Share of failed power flows above which a sampling result is flagged.
pub const FAILURE_FLAG_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EngineKind {
    Mcs,
    Fsds,
    Tpem,
    Ut,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Mcs => "mcs",
            EngineKind::Fsds => "fsds",
            EngineKind::Tpem => "tpem",
            EngineKind::Ut => "ut",
        }
    }
}

impl std::fmt::Display for EngineKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EngineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mcs" => Ok(EngineKind::Mcs),
            "fsds" => Ok(EngineKind::Fsds),
            "tpem" => Ok(EngineKind::Tpem),
            "ut" => Ok(EngineKind::Ut),
            other => Err(Error::InvalidInput(format!("unknown engine {other:?}"))),
        }
    }
}

/// Voltage-magnitude moments at one node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeMoments {
    pub node: u32,
    pub moments: MomentVector,
}

/// Estimated PDF of one selected output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputDensity {
    pub node: u32,
    pub density: DensityEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuningCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineResult {
    pub engine: EngineKind,
    /// Every non-slack node, in feeder order.
    pub nodes: Vec<NodeMoments>,
    pub densities: Vec<OutputDensity>,
    /// Power flows attempted.
    pub evaluations: usize,
    pub failed: usize,
    /// More than [`FAILURE_FLAG_FRACTION`] of the power flows failed.
    pub flagged: bool,
    /// Bandwidths were tuned against the engine's own samples.
    pub self_referential: bool,
    pub seed: Option<u64>,
    pub wall_seconds: f64,
}

impl EngineResult {
    pub fn node(&self, id: u32) -> Option<&MomentVector> {
        self.nodes.iter().find(|n| n.node == id).map(|n| &n.moments)
    }

    pub fn density(&self, id: u32) -> Option<&OutputDensity> {
        self.densities.iter().find(|d| d.node == id)
    }

    /// Equality ignoring the wall-clock time.
    pub fn same_outcome(&self, other: &EngineResult) -> bool {
        let mut a = self.clone();
        a.wall_seconds = other.wall_seconds;
        a == *other
    }
}

/// Voltage magnitudes of every non-slack node over successful samples.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputSamples {
    pub nodes: Vec<u32>,
    /// `values[j][i]`: node `nodes[j]`, `i`-th successful sample.
    pub values: Vec<Vec<f64>>,
    pub attempted: usize,
    pub failed: usize,
}

impl OutputSamples {
    pub fn node(&self, id: u32) -> Option<&[f64]> {
        self.nodes.iter().position(|&n| n == id).map(|j| self.values[j].as_slice())
    }

    pub fn flagged(&self) -> bool {
        self.failed as f64 > FAILURE_FLAG_FRACTION * self.attempted as f64
    }

    fn node_moments(&self) -> Result<Vec<NodeMoments>> {
        self.nodes
            .iter()
            .zip(&self.values)
            .map(|(&node, v)| Ok(NodeMoments { node, moments: moments(v)? }))
            .collect()
    }
}

/// Ids of the non-slack nodes, in feeder order.
pub(crate) fn reported_nodes(scenario: &Scenario) -> Vec<(usize, u32)> {
    let f = scenario.feeder();
    (0..f.len()).filter(|&i| i != f.slack()).map(|i| (i, f.id_of(i))).collect()
}

/// Voltage magnitudes at a point in variable space.
pub(crate) fn solve_point(scenario: &Scenario, values: &[f64]) -> Result<Vec<f64>, SolverError> {
    let inj = scenario.injection(values);
    solve_fbs(scenario.feeder(), &inj, &scenario.spec().engine.solver).map(|s| s.magnitudes())
}

/// Draw `k` input rows with `seed` and solve each one.
///
/// Rows whose power flow fails are dropped and counted.
pub fn evaluate_samples(scenario: &Scenario, k: usize, seed: u64) -> Result<OutputSamples> {
    let matrix = build_samples(scenario, k, seed)?;
    let cfg = &scenario.spec().engine.solver;
    let solved: Vec<Option<Vec<f64>>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let inj = matrix.injection(scenario, i);
            match solve_fbs(scenario.feeder(), &inj, cfg) {
                Ok(sol) => Some(sol.magnitudes()),
                Err(e) => {
                    log::debug!("sample {i} failed: {e}");
                    None
                }
            }
        })
        .collect();

    let nodes = reported_nodes(scenario);
    let mut values = vec![Vec::with_capacity(k); nodes.len()];
    let mut failed = 0;
    for row in solved {
        match row {
            Some(v) => {
                for (j, &(i, _)) in nodes.iter().enumerate() {
                    values[j].push(v[i]);
                }
            }
            None => failed += 1,
        }
    }
    if k - failed < 2 {
        return Err(Error::DegenerateSample(format!("{failed} of {k} power flows failed")));
    }
    let out = OutputSamples { nodes: nodes.into_iter().map(|(_, id)| id).collect(), values, attempted: k, failed };
    if out.flagged() {
        log::warn!("{failed} of {k} power flows failed");
    }
    Ok(out)
}

/// Monte Carlo reference.
///
/// With `lambda`, a Gaussian kernel estimate of each selected output is
/// attached, using the given bandwidth or the Silverman bandwidth when
/// `Some(None)`.
pub fn run_mcs(
    scenario: &Scenario,
    iterations: usize,
    seed: u64,
    density: Option<Option<f64>>,
) -> Result<EngineResult> {
    let start = Instant::now();
    let samples = evaluate_samples(scenario, iterations, seed)?;
    let nodes = samples.node_moments()?;
    let mut densities = Vec::new();
    if let Some(lambda) = density {
        for &idx in scenario.outputs() {
            let id = scenario.feeder().id_of(idx);
            let v = samples.node(id).expect("outputs are non-slack nodes");
            let density = fsds::fixed_bandwidth_pdf(v, lambda)?;
            densities.push(OutputDensity { node: id, density, tuning: None });
        }
    }
    Ok(EngineResult {
        engine: EngineKind::Mcs,
        nodes,
        densities,
        evaluations: iterations,
        failed: samples.failed,
        flagged: samples.flagged(),
        self_referential: false,
        seed: Some(seed),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
