//! Two-point estimate method, 2m concentration scheme.
//!
//! Each of the `m` uncertain inputs is moved, one at a time, to two
//! locations `μ + ξσ` while the others stay at their means. The standardized
//! locations and weights match the input's first three moments:
//!
//! ```text
//! ξ₁,₂ = λ₃/2 ± √(m + (λ₃/2)²)
//! w₁ = −ξ₂ / (m(ξ₁ − ξ₂)),   w₂ = ξ₁ / (m(ξ₁ − ξ₂))
//! ```

use std::time::Instant;

use rayon::prelude::*;

use super::{reported_nodes, solve_point, EngineKind, EngineResult, NodeMoments};
use crate::error::{Error, Result};
use crate::metrics::{weighted_moments, MomentVector};
use crate::uncertainty::Scenario;

/// Standardized locations and weights for every uncertain input.
#[derive(Debug, Clone, PartialEq)]
pub struct ConcentrationPointSet {
    /// Input indices with non-zero spread; the others stay at their mean.
    pub active: Vec<usize>,
    pub locations: Vec<[f64; 2]>,
    pub weights: Vec<[f64; 2]>,
}

impl ConcentrationPointSet {
    /// Points for inputs with the given standard deviations and skewness.
    pub fn new(stds: &[f64], skewness: &[f64]) -> Result<Self> {
        if stds.len() != skewness.len() {
            return Err(Error::InvalidInput("std and skewness lengths differ".into()));
        }
        if stds.iter().chain(skewness).any(|v| !v.is_finite()) || stds.iter().any(|&s| s < 0.0) {
            return Err(Error::InvalidInput("input moments must be finite with std >= 0".into()));
        }
        let active: Vec<usize> = (0..stds.len()).filter(|&k| stds[k] > 0.0).collect();
        let m = active.len();
        if m == 0 {
            return Err(Error::InvalidInput("no uncertain inputs".into()));
        }
        let mf = m as f64;
        let mut locations = Vec::with_capacity(m);
        let mut weights = Vec::with_capacity(m);
        for &k in &active {
            let half = skewness[k] / 2.0;
            let root = (mf + half * half).sqrt();
            let (x1, x2) = (half + root, half - root);
            let zeta = mf * (x1 - x2);
            locations.push([x1, x2]);
            weights.push([-x2 / zeta, x1 / zeta]);
        }
        Ok(ConcentrationPointSet { active, locations, weights })
    }

    pub fn len(&self) -> usize {
        2 * self.active.len()
    }

    pub fn is_empty(&self) -> bool {
        self.active.is_empty()
    }

    /// The `2m` input vectors with their weights, variable by variable.
    pub fn points(&self, means: &[f64], stds: &[f64]) -> Vec<(Vec<f64>, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for (j, &k) in self.active.iter().enumerate() {
            for i in 0..2 {
                let mut x = means.to_vec();
                x[k] = means[k] + self.locations[j][i] * stds[k];
                out.push((x, self.weights[j][i]));
            }
        }
        out
    }
}

/// Moments of each component of `f` under independent inputs.
pub fn propagate<F>(means: &[f64], stds: &[f64], skewness: &[f64], f: F) -> Result<Vec<MomentVector>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    if means.len() != stds.len() {
        return Err(Error::InvalidInput("mean and std lengths differ".into()));
    }
    let set = ConcentrationPointSet::new(stds, skewness)?;
    let points = set.points(means, stds);
    let outputs = points.par_iter().map(|(x, _)| f(x)).collect::<Result<Vec<Vec<f64>>>>()?;
    let weights: Vec<f64> = points.iter().map(|(_, w)| *w).collect();
    let width = outputs[0].len();
    (0..width)
        .map(|c| {
            let y: Vec<f64> = outputs.iter().map(|o| o[c]).collect();
            weighted_moments(&y, &weights)
        })
        .collect()
}

/// Two-point estimate over the scenario's primitive inputs.
pub fn run_tpem(scenario: &Scenario) -> Result<EngineResult> {
    let start = Instant::now();
    let vars = scenario.variables();
    let means: Vec<f64> = vars.iter().map(|v| v.mean).collect();
    let stds: Vec<f64> = vars.iter().map(|v| v.std).collect();
    let skews: Vec<f64> = vars.iter().map(|v| v.skewness).collect();
    let nodes = reported_nodes(scenario);
    let moments = propagate(&means, &stds, &skews, |x| {
        let v = solve_point(scenario, x)?;
        Ok(nodes.iter().map(|&(i, _)| v[i]).collect())
    })?;
    let evaluations = 2 * stds.iter().filter(|&&s| s > 0.0).count();
    Ok(EngineResult {
        engine: EngineKind::Tpem,
        nodes: nodes.iter().zip(moments).map(|(&(_, node), moments)| NodeMoments { node, moments }).collect(),
        densities: Vec::new(),
        evaluations,
        failed: 0,
        flagged: false,
        self_referential: false,
        seed: None,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_inputs() {
        let set = ConcentrationPointSet::new(&[1.0; 4], &[0.0; 4]).unwrap();
        for (loc, w) in set.locations.iter().zip(&set.weights) {
            assert_eq!(*loc, [2.0, -2.0]);
            assert_eq!(*w, [0.125, 0.125]);
        }
    }

    #[test]
    fn weights_sum_to_one_and_match_moments() {
        let skews = [0.201, -1.3, 0.0, 2.5, 0.7];
        let set = ConcentrationPointSet::new(&[1.0; 5], &skews).unwrap();
        let total: f64 = set.weights.iter().flatten().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let m = 5.0;
        for (j, (loc, w)) in set.locations.iter().zip(&set.weights).enumerate() {
            // Scaled by m, each pair reproduces moments 0..3 of its input.
            let mom = |p: i32| m * (w[0] * loc[0].powi(p) + w[1] * loc[1].powi(p));
            assert!((mom(0) - 1.0).abs() < 1e-12);
            assert!(mom(1).abs() < 1e-12);
            assert!((mom(2) - m).abs() < 1e-12);
            assert!((mom(3) - m * skews[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_inputs_are_skipped() {
        let set = ConcentrationPointSet::new(&[0.0, 2.0, 0.0], &[0.0; 3]).unwrap();
        assert_eq!(set.active, vec![1]);
        assert_eq!(set.len(), 2);
        assert!(ConcentrationPointSet::new(&[0.0, 0.0], &[0.0; 2]).is_err());
    }
}
