use rayon::prelude::*;

use super::Scenario;
use crate::error::{Error, Result};
use crate::rng::substream;
use crate::solver::InjectionVector;

/// `rows × columns` realized inputs, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    labels: Vec<String>,
    rows: usize,
    data: Vec<f64>,
    seed: u64,
}

impl SampleMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn columns(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.columns();
        &self.data[i * d..(i + 1) * d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i)[j]).collect()
    }

    pub fn injection(&self, scenario: &Scenario, i: usize) -> InjectionVector {
        scenario.injection_from_columns(self.row(i))
    }
}

/// Draw `k_n` realizations of the scenario inputs.
///
/// Variable `v` of row `i` comes from its own stream `(seed, i, v)`, so the
/// matrix does not depend on evaluation order.
pub fn build_samples(scenario: &Scenario, k_n: usize, seed: u64) -> Result<SampleMatrix> {
    if k_n < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 samples, got {k_n}")));
    }
    let rows: Vec<Vec<f64>> = (0..k_n).into_par_iter().map(|i| sample_row(scenario, seed, i)).collect();
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    debug_assert!(data.iter().all(|x| x.is_finite()));
    Ok(SampleMatrix { labels: scenario.column_labels().to_vec(), rows: k_n, data, seed })
}

/// Realized columns of row `i`.
pub(crate) fn sample_row(scenario: &Scenario, seed: u64, i: usize) -> Vec<f64> {
    scenario.realize(&sample_variables(scenario, seed, i))
}

pub(crate) fn sample_variables(scenario: &Scenario, seed: u64, i: usize) -> Vec<f64> {
    (0..scenario.variables().len())
        .map(|v| scenario.draw_variable(v, &mut substream(seed, i as u64, v as u64)))
        .collect()
}
