//! Sample moments and relative-error indices against a Monte Carlo
//! reference.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean, standard deviation and standardized central moments 3 to 5.
///
/// The higher orders are `None` when the spread is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    pub mean: f64,
    pub std: f64,
    pub skewness: Option<f64>,
    pub moment4: Option<f64>,
    pub moment5: Option<f64>,
    pub count: usize,
}

impl MomentVector {
    /// Moment of order 1 to 5: mean, STD, then standardized central
    /// moments.
    pub fn order(&self, order: usize) -> Result<f64> {
        let higher = |v: Option<f64>| {
            v.ok_or_else(|| {
                Error::DegenerateSample(format!("order-{order} moment undefined for zero spread"))
            })
        };
        match order {
            1 => Ok(self.mean),
            2 => Ok(self.std),
            3 => higher(self.skewness),
            4 => higher(self.moment4),
            5 => higher(self.moment5),
            _ => Err(Error::InvalidInput(format!("moment order {order} not in 1..=5"))),
        }
    }
}

/// Divisor used for the unweighted standard deviation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StdConvention {
    /// `n`, directly comparable with weighted point schemes.
    #[default]
    Population,
    /// `n − 1`.
    Sample,
}

/// Unweighted moments, population convention.
pub fn moments(samples: &[f64]) -> Result<MomentVector> {
    moments_with(samples, StdConvention::Population)
}

pub fn moments_with(samples: &[f64], convention: StdConvention) -> Result<MomentVector> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::DegenerateSample(format!("moments need two points, got {n}")));
    }
    let w = vec![1.0 / n as f64; n];
    let mut m = weighted_moments(samples, &w)?;
    if convention == StdConvention::Sample {
        let var = m.std * m.std * n as f64 / (n as f64 - 1.0);
        let scale = (m.std * m.std / var).sqrt();
        m.std = var.sqrt();
        // Standardized moments rescale with the new denominator.
        m.skewness = m.skewness.map(|v| v * scale.powi(3));
        m.moment4 = m.moment4.map(|v| v * scale.powi(4));
        m.moment5 = m.moment5.map(|v| v * scale.powi(5));
    }
    Ok(m)
}

/// Moments of a discrete distribution `Σ wᵢ δ(yᵢ)`.
///
/// Central sums `Σ wᵢ (yᵢ − μ)ʲ` are taken directly; for `Σw = 1` they equal
/// the binomial conversion of the raw moments `Σ wᵢ yᵢʲ` without its
/// cancellation error.
pub fn weighted_moments(values: &[f64], weights: &[f64]) -> Result<MomentVector> {
    if values.len() != weights.len() {
        return Err(Error::InvalidInput("values and weights differ in length".into()));
    }
    if values.len() < 2 {
        return Err(Error::DegenerateSample("moments need two points".into()));
    }
    if values.iter().chain(weights).any(|x| !x.is_finite()) {
        return Err(Error::Numerical("non-finite value or weight".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!("weights sum to {total}, not 1")));
    }
    let first = values[0];
    if values.iter().all(|&y| y == first) {
        return Ok(MomentVector {
            mean: first,
            std: 0.0,
            skewness: None,
            moment4: None,
            moment5: None,
            count: values.len(),
        });
    }
    let mean: f64 = values.iter().zip(weights).map(|(y, w)| w * y).sum();
    let central = |j: i32| -> f64 { values.iter().zip(weights).map(|(y, w)| w * (y - mean).powi(j)).sum() };
    let var = central(2).max(0.0);
    let std = var.sqrt();
    let standardized = |j: i32| if std > 0.0 { Some(central(j) / std.powi(j)) } else { None };
    Ok(MomentVector {
        mean,
        std,
        skewness: standardized(3),
        moment4: standardized(4),
        moment5: standardized(5),
        count: values.len(),
    })
}

/// `|(η_ref − η) / η_ref|`; `None` when the reference is zero.
pub fn relative_error(eta: f64, eta_ref: f64) -> Option<f64> {
    relative_error_with_floor(eta, eta_ref, 0.0)
}

/// As [`relative_error`], treating `|η_ref| ≤ floor` as zero.
pub fn relative_error_with_floor(eta: f64, eta_ref: f64, floor: f64) -> Option<f64> {
    if eta_ref.abs() <= floor || !eta_ref.is_finite() || !eta.is_finite() {
        return None;
    }
    Some(((eta_ref - eta) / eta_ref).abs())
}

/// Average, minimum and maximum of per-node errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub fn aggregate_errors(errors: &[f64]) -> Result<ErrorSummary> {
    if errors.is_empty() {
        return Err(Error::InvalidInput("no errors to aggregate".into()));
    }
    let n = errors.len() as f64;
    Ok(ErrorSummary {
        mean: errors.iter().sum::<f64>() / n,
        min: errors.iter().cloned().fold(f64::INFINITY, f64::min),
        max: errors.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// Errors of one moment order over a set of nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorIndexReport {
    pub order: usize,
    /// `(node id, ε)`; `None` where the reference moment was zero or
    /// undefined.
    pub per_node: Vec<(u32, Option<f64>)>,
    pub summary: Option<ErrorSummary>,
    pub excluded: usize,
}

impl ErrorIndexReport {
    pub fn build(order: usize, per_node: Vec<(u32, Option<f64>)>) -> Self {
        let defined: Vec<f64> = per_node.iter().filter_map(|(_, e)| *e).collect();
        let excluded = per_node.len() - defined.len();
        ErrorIndexReport { order, per_node, summary: aggregate_errors(&defined).ok(), excluded }
    }
}
