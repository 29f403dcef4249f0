use std::io::Write;

use serde::Serialize;

use super::{EngineKind, EngineResult};
use crate::error::{Error, Result};
use crate::metrics::{relative_error, ErrorIndexReport};

/// Relative-error indices of one engine against the reference.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EngineErrors {
    pub engine: EngineKind,
    /// One report per moment order the engine provides, ascending.
    pub reports: Vec<ErrorIndexReport>,
    /// Reference wall time divided by this engine's.
    pub speedup: f64,
}

impl EngineErrors {
    pub fn order(&self, order: usize) -> Option<&ErrorIndexReport> {
        self.reports.iter().find(|r| r.order == order)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub reference: EngineKind,
    pub engines: Vec<EngineErrors>,
}

impl Comparison {
    pub fn engine(&self, kind: EngineKind) -> Option<&EngineErrors> {
        self.engines.iter().find(|e| e.engine == kind)
    }
}

/// Per-node, per-order relative errors of each result against `reference`.
pub fn compare_engines(results: &[EngineResult], reference: &EngineResult) -> Result<Comparison> {
    let mut engines = Vec::with_capacity(results.len());
    for r in results {
        for n in &reference.nodes {
            if r.node(n.node).is_none() {
                return Err(Error::InvalidInput(format!("{} result lacks node {}", r.engine, n.node)));
            }
        }
        let mut reports = Vec::new();
        for order in 1..=5 {
            let provided = reference.nodes.iter().any(|n| r.node(n.node).unwrap().order(order).is_ok());
            if !provided {
                continue;
            }
            let per_node = reference
                .nodes
                .iter()
                .map(|n| {
                    let eta = r.node(n.node).unwrap().order(order).ok();
                    let eta_ref = n.moments.order(order).ok();
                    let e = match (eta, eta_ref) {
                        (Some(a), Some(b)) => relative_error(a, b),
                        _ => None,
                    };
                    (n.node, e)
                })
                .collect();
            reports.push(ErrorIndexReport::build(order, per_node));
        }
        let speedup = reference.wall_seconds / r.wall_seconds.max(f64::MIN_POSITIVE);
        engines.push(EngineErrors { engine: r.engine, reports, speedup });
    }
    Ok(Comparison { reference: reference.engine, engines })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `node,mean,std,skewness,moment4,moment5`; undefined moments are empty.
pub fn write_moments_csv<W: Write>(result: &EngineResult, mut out: W) -> std::io::Result<()> {
    writeln!(out, "node,mean,std,skewness,moment4,moment5")?;
    for n in &result.nodes {
        let m = &n.moments;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            n.node,
            m.mean,
            m.std,
            opt(m.skewness),
            opt(m.moment4),
            opt(m.moment5)
        )?;
    }
    Ok(())
}

/// Error indices, one row per engine and moment order.
pub fn write_errors_csv<W: Write>(comparison: &Comparison, mut out: W) -> std::io::Result<()> {
    writeln!(out, "engine,order,eps_mean,eps_min,eps_max,excluded")?;
    for e in &comparison.engines {
        for r in &e.reports {
            let s = r.summary;
            writeln!(
                out,
                "{},{},{},{},{},{}",
                e.engine,
                r.order,
                opt(s.map(|s| s.mean)),
                opt(s.map(|s| s.min)),
                opt(s.map(|s| s.max)),
                r.excluded
            )?;
        }
    }
    Ok(())
}

/// Mean, STD and skewness per node and method with percentage errors
/// against `reference`.
pub fn write_characteristics_csv<W: Write>(
    results: &[EngineResult],
    reference: &EngineResult,
    nodes: &[u32],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "node,method,mean,eps_mean_pct,std,eps_std_pct,skewness,eps_skewness_pct")?;
    for &id in nodes {
        let Some(base) = reference.node(id) else { continue };
        for r in results {
            let Some(m) = r.node(id) else { continue };
            let pct = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(a), Some(b)) if r.engine != reference.engine => opt(relative_error(a, b).map(|e| 100.0 * e)),
                _ => String::new(),
            };
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                id,
                r.engine,
                m.mean,
                pct(Some(m.mean), Some(base.mean)),
                m.std,
                pct(Some(m.std), Some(base.std)),
                opt(m.skewness),
                pct(m.skewness, base.skewness)
            )?;
        }
    }
    Ok(())
}
