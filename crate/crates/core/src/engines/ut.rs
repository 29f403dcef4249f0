//! Unscented transform with `2n + 1` sigma points.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{reported_nodes, solve_point, EngineKind, EngineResult, NodeMoments};
use crate::error::{Error, Result};
use crate::metrics::MomentVector;
use crate::uncertainty::{Scenario, VariableKind};

/// Distance kept between a clipped centre weight and ±1.
pub const W0_CLIP_MARGIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UtOptions {
    /// Centre weight; `1 − n/3` clipped into (−1, 1) when absent.
    pub w0: Option<f64>,
}

impl UtOptions {
    pub fn centre_weight(&self, n: usize) -> Result<f64> {
        match self.w0 {
            Some(w) if w > -1.0 && w < 1.0 => Ok(w),
            Some(w) => Err(Error::InvalidInput(format!("centre weight {w} outside (-1, 1)"))),
            None => Ok((1.0 - n as f64 / 3.0).clamp(-1.0 + W0_CLIP_MARGIN, 1.0 - W0_CLIP_MARGIN)),
        }
    }
}

/// Sigma points `μ`, `μ ± sᵢ` with `sᵢ` the columns of `√(n/(1−W₀)·Σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPointSet {
    pub points: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
}

impl SigmaPointSet {
    pub fn new(mean: &DVector<f64>, cov: &DMatrix<f64>, w0: f64) -> Result<Self> {
        let n = mean.len();
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::InvalidInput("covariance shape does not match the mean".into()));
        }
        if n == 0 {
            return Ok(SigmaPointSet { points: vec![mean.clone()], weights: vec![1.0] });
        }
        let root = symmetric_sqrt(&(cov * (n as f64 / (1.0 - w0))))?;
        let wi = (1.0 - w0) / (2 * n) as f64;
        let mut points = Vec::with_capacity(2 * n + 1);
        let mut weights = Vec::with_capacity(2 * n + 1);
        points.push(mean.clone());
        weights.push(w0);
        for i in 0..n {
            let s = root.column(i);
            points.push(mean + s);
            points.push(mean - s);
            weights.extend([wi, wi]);
        }
        Ok(SigmaPointSet { points, weights })
    }
}

/// Symmetric square root with negative eigenvalues floored at zero.
fn symmetric_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let scale = a.amax();
    if (a - a.transpose()).amax() > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical("covariance is not symmetric".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("covariance has non-finite entries".into()));
    }
    let is_diagonal = (0..a.nrows()).all(|i| (0..a.ncols()).all(|j| i == j || a[(i, j)] == 0.0));
    if is_diagonal {
        if a.diagonal().iter().any(|&d| d < 0.0) {
            return Err(Error::Numerical("covariance has a negative variance".into()));
        }
        return Ok(DMatrix::from_diagonal(&a.diagonal().map(f64::sqrt)));
    }
    let eig = SymmetricEigen::new(a.clone());
    if eig.eigenvalues.iter().any(|&l| l < -1e-10 * scale) {
        return Err(Error::Numerical("covariance is not positive semidefinite".into()));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Weighted mean and covariance of the outputs of `f`.
pub fn propagate<F>(mean: &DVector<f64>, cov: &DMatrix<f64>, w0: f64, f: F) -> Result<(DVector<f64>, DMatrix<f64>)>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>> + Sync,
{
    let set = SigmaPointSet::new(mean, cov, w0)?;
    let ys = set.points.par_iter().map(&f).collect::<Result<Vec<_>>>()?;
    let dim = ys[0].len();
    let mut y_mean = DVector::zeros(dim);
    for (y, w) in ys.iter().zip(&set.weights) {
        y_mean += y * *w;
    }
    let mut y_cov = DMatrix::zeros(dim, dim);
    for (y, w) in ys.iter().zip(&set.weights) {
        let d = y - &y_mean;
        y_cov += &d * d.transpose() * *w;
    }
    Ok((y_mean, y_cov))
}

/// Unscented transform over the scenario's inputs, treated as independent
/// with their exact means and variances. Reports mean and STD only.
pub fn run_ut(scenario: &Scenario, opts: &UtOptions) -> Result<EngineResult> {
    let start = Instant::now();
    let vars = scenario.variables();
    if vars.iter().any(|v| !matches!(v.kind, VariableKind::LoadDraw { .. }) && v.std > 0.0) {
        log::warn!("discrete inputs enter the unscented transform as continuous mean/variance matches");
    }
    let n = vars.len();
    let mean = DVector::from_iterator(n, vars.iter().map(|v| v.mean));
    let cov = DMatrix::from_diagonal(&DVector::from_iterator(n, vars.iter().map(|v| v.std * v.std)));
    let w0 = opts.centre_weight(n)?;
    let nodes = reported_nodes(scenario);
    let (y_mean, y_cov) = propagate(&mean, &cov, w0, |x| {
        let v = solve_point(scenario, x.as_slice())?;
        Ok(DVector::from_iterator(nodes.len(), nodes.iter().map(|&(i, _)| v[i])))
    })?;
    let count = 2 * n + 1;
    let nodes = nodes
        .iter()
        .enumerate()
        .map(|(j, &(_, node))| NodeMoments {
            node,
            moments: MomentVector {
                mean: y_mean[j],
                std: y_cov[(j, j)].max(0.0).sqrt(),
                skewness: None,
                moment4: None,
                moment5: None,
                count,
            },
        })
        .collect();
    Ok(EngineResult {
        engine: EngineKind::Ut,
        nodes,
        densities: Vec::new(),
        evaluations: count,
        failed: 0,
        flagged: false,
        self_referential: false,
        seed: None,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}
