//! Bandwidth and sample-count tuning.
//!
//! Two indices compare an estimate with a reference density on a shared
//! grid: the integrated squared error (single-replication MISE) and the
//! distance between the two most probable points (MPPT). The tuning
//! objective is `M_C = a·MISE + b·MPPT`; the bandwidth minimising it over a
//! log-spaced grid is selected.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{estimate_pdf, min_max, trapezoid, DensityEstimate, Grid, KernelKind, WindowFunction};
use crate::error::{Error, Result};

/// Integrated squared difference between `estimate` and `reference`.
pub fn mise(estimate: &DensityEstimate, reference: &DensityEstimate) -> Result<f64> {
    estimate.same_grid(reference)?;
    let sq: Vec<f64> =
        estimate.values.iter().zip(&reference.values).map(|(a, b)| (a - b) * (a - b)).collect();
    Ok(trapezoid(&estimate.grid, &sq))
}

/// Distance between the most probable points of two densities.
pub fn mppt(estimate: &DensityEstimate, reference: &DensityEstimate) -> Result<f64> {
    estimate.same_grid(reference)?;
    let flat = |d: &DensityEstimate| {
        let first = d.values.first().copied().unwrap_or(0.0);
        d.values.iter().all(|&v| v == first)
    };
    if flat(estimate) || flat(reference) {
        return Err(Error::DegenerateSample("flat density has no maximum".into()));
    }
    let a = estimate.mode().ok_or_else(|| Error::DegenerateSample("estimate has no maximum".into()))?;
    let b = reference.mode().ok_or_else(|| Error::DegenerateSample("reference has no maximum".into()))?;
    Ok((a - b).abs())
}

pub fn mc_index(mise: f64, mppt: f64, a: f64, b: f64) -> f64 {
    a * mise + b * mppt
}

/// `1.06 · σ̂ · n^(−1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    1.06 * var.sqrt() * n.powf(-0.2)
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Freedman–Diaconis bin width `2·IQR·n^(−1/3)`, falling back to Scott's
/// rule when the interquartile range is zero.
pub fn freedman_diaconis_width(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::DegenerateSample("histogram needs two samples".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let width = if iqr > 0.0 {
        2.0 * iqr * n.powf(-1.0 / 3.0)
    } else {
        let mean = samples.iter().sum::<f64>() / n;
        let sd = (samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
        3.49 * sd * n.powf(-1.0 / 3.0)
    };
    if !(width > 0.0) {
        return Err(Error::DegenerateSample("all samples are identical".into()));
    }
    Ok(width)
}

/// `n` log-spaced points from `lo` to `hi`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && n >= 1);
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceMode {
    /// Histogram of a dedicated Monte Carlo calibration run.
    #[default]
    CalibrationMcs,
    /// Histogram of the estimator's own samples.
    SelfHistogram,
    /// Least-squares cross-validation, no reference density.
    Lscv,
}

/// Tuning options as written in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TuningSettings {
    pub a: f64,
    pub b: f64,
    pub kernel: KernelKind,
    /// Bandwidth grid, as multiples of the Silverman bandwidth.
    pub lambda_min_factor: f64,
    pub lambda_max_factor: f64,
    pub lambda_points: usize,
    pub reference: ReferenceMode,
    /// Replications per candidate in the sample-count study.
    pub replications: usize,
    /// Candidate sample counts, ascending.
    pub candidates: Vec<usize>,
    /// Largest acceptable coefficient of variation of M_C across
    /// replications.
    pub convergence_threshold: f64,
}

impl Default for TuningSettings {
    fn default() -> Self {
        TuningSettings {
            a: 1.0,
            b: 0.05,
            kernel: KernelKind::Gaussian,
            lambda_min_factor: 0.02,
            lambda_max_factor: 5.0,
            lambda_points: 41,
            reference: ReferenceMode::CalibrationMcs,
            replications: 20,
            candidates: vec![15, 30, 45, 60, 90, 135, 200, 300, 400],
            convergence_threshold: 0.4,
        }
    }
}

impl TuningSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.a >= 0.0 && self.b >= 0.0) || (self.a == 0.0 && self.b == 0.0) {
            return Err(Error::InvalidInput("tuning weights must be >= 0 and not both zero".into()));
        }
        if !(self.lambda_min_factor > 0.0 && self.lambda_max_factor >= self.lambda_min_factor) {
            return Err(Error::InvalidInput("bandwidth factors must satisfy 0 < min <= max".into()));
        }
        if self.lambda_points == 0 || self.replications < 2 {
            return Err(Error::InvalidInput("need at least one bandwidth and two replications".into()));
        }
        if self.candidates.windows(2).any(|w| w[0] >= w[1]) || self.candidates.iter().any(|&k| k < 2) {
            return Err(Error::InvalidInput("sample-count candidates must ascend from >= 2".into()));
        }
        Ok(())
    }

    /// Concrete configuration for one sample set.
    pub fn config_for(&self, samples: &[f64]) -> Result<TuningConfig> {
        self.validate()?;
        let h = silverman_bandwidth(samples);
        if !(h > 0.0) {
            return Err(Error::DegenerateSample("samples have zero spread".into()));
        }
        Ok(TuningConfig {
            a: self.a,
            b: self.b,
            kernel: self.kernel,
            lambdas: log_spaced(h * self.lambda_min_factor, h * self.lambda_max_factor, self.lambda_points),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningConfig {
    pub a: f64,
    pub b: f64,
    pub kernel: KernelKind,
    /// Ascending candidate bandwidths.
    pub lambdas: Vec<f64>,
}

impl TuningConfig {
    /// Evaluation grid shared by every candidate bandwidth and the
    /// reference: covers the data plus five of the widest windows, resolves
    /// the narrowest window.
    pub fn grid(&self, samples: &[f64]) -> Grid {
        let (lo, hi) = min_max(samples);
        let lmin = self.lambdas[0];
        let lmax = *self.lambdas.last().unwrap();
        Grid::covering(lo - 5.0 * lmax, hi + 5.0 * lmax, lmin, self.kernel)
    }
}

/// M_C as a function of bandwidth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuningCurve {
    pub lambdas: Vec<f64>,
    pub mise: Vec<f64>,
    pub mppt: Vec<f64>,
    pub mc: Vec<f64>,
    pub best: usize,
}

impl TuningCurve {
    pub fn best_lambda(&self) -> f64 {
        self.lambdas[self.best]
    }

    pub fn best_mc(&self) -> f64 {
        self.mc[self.best]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "lambda,mise,mppt,mc")?;
        for i in 0..self.lambdas.len() {
            writeln!(out, "{},{},{},{}", self.lambdas[i], self.mise[i], self.mppt[i], self.mc[i])?;
        }
        Ok(())
    }
}

/// Evaluate M_C for every bandwidth in `cfg` and pick the minimiser; ties
/// go to the larger bandwidth. The estimate is computed on the reference's
/// grid.
pub fn tune_bandwidth(
    samples: &[f64],
    cfg: &TuningConfig,
    reference: &DensityEstimate,
) -> Result<TuningCurve> {
    if cfg.lambdas.is_empty() {
        return Err(Error::InvalidInput("empty bandwidth grid".into()));
    }
    let grid = reference
        .layout()
        .ok_or_else(|| Error::GridMismatch("reference density has no uniform layout".into()))?;
    let window = WindowFunction::new(cfg.kernel)?;
    let mut curve = TuningCurve {
        lambdas: cfg.lambdas.clone(),
        mise: Vec::with_capacity(cfg.lambdas.len()),
        mppt: Vec::with_capacity(cfg.lambdas.len()),
        mc: Vec::with_capacity(cfg.lambdas.len()),
        best: 0,
    };
    for &lambda in &cfg.lambdas {
        let est = estimate_pdf(samples, lambda, window, &grid)?;
        let e = mise(&est, reference)?;
        let m = mppt(&est, reference).unwrap_or(f64::NAN);
        curve.mise.push(e);
        curve.mppt.push(m);
        curve.mc.push(mc_index(e, m, cfg.a, cfg.b));
    }
    let mut best: Option<usize> = None;
    for (i, &v) in curve.mc.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        if best.is_none_or(|b| v <= curve.mc[b]) {
            best = Some(i);
        }
    }
    curve.best = best.ok_or_else(|| Error::Numerical("M_C is NaN for every bandwidth".into()))?;
    Ok(curve)
}

/// Least-squares cross-validation score of a Gaussian estimate,
/// `∫P̂² − 2/n·Σ P̂₋ᵢ(xᵢ)`.
pub fn lscv_score(samples: &[f64], lambda: f64) -> f64 {
    let n = samples.len() as f64;
    let phi = |u: f64, s: f64| (-0.5 * u * u / (s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
    let mut self_term = 0.0;
    let mut loo = 0.0;
    for (i, &xi) in samples.iter().enumerate() {
        for &xj in &samples[i + 1..] {
            let d = xi - xj;
            self_term += 2.0 * phi(d, std::f64::consts::SQRT_2 * lambda);
            loo += 2.0 * phi(d, lambda);
        }
    }
    self_term += n * phi(0.0, std::f64::consts::SQRT_2 * lambda);
    self_term / (n * n) - 2.0 * loo / (n * (n - 1.0))
}

/// Reference-free bandwidth: minimiser of [`lscv_score`] over `lambdas`.
pub fn tune_bandwidth_lscv(samples: &[f64], lambdas: &[f64]) -> Result<(f64, Vec<f64>)> {
    if samples.len() < 2 || lambdas.is_empty() {
        return Err(Error::InvalidInput("cross-validation needs two samples and a bandwidth".into()));
    }
    let scores: Vec<f64> = lambdas.iter().map(|&l| lscv_score(samples, l)).collect();
    let best = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_finite())
        .fold(None, |best: Option<usize>, (i, &s)| match best {
            Some(b) if s > scores[b] => Some(b),
            _ => Some(i),
        })
        .ok_or_else(|| Error::Numerical("cross-validation score is NaN everywhere".into()))?;
    Ok((lambdas[best], scores))
}

/// Spread of M_C across replications for each candidate sample count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleCountStudy {
    pub candidates: Vec<usize>,
    pub mean_mc: Vec<f64>,
    pub std_mc: Vec<f64>,
    pub selected: usize,
    /// False when no candidate met the threshold and the largest was
    /// returned.
    pub converged: bool,
}

impl SampleCountStudy {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "k_n,mean_mc,std_mc")?;
        for i in 0..self.candidates.len() {
            writeln!(out, "{},{},{}", self.candidates[i], self.mean_mc[i], self.std_mc[i])?;
        }
        Ok(())
    }
}

/// For each candidate `k_n`, evaluate `mc(k_n, replication)` `replications`
/// times and return the smallest `k_n` whose coefficient of variation of
/// M_C is below `threshold`.
pub fn tune_sample_count(
    candidates: &[usize],
    replications: usize,
    threshold: f64,
    mut mc: impl FnMut(usize, usize) -> Result<f64>,
) -> Result<SampleCountStudy> {
    if candidates.is_empty() || replications < 2 {
        return Err(Error::InvalidInput("need candidates and at least two replications".into()));
    }
    if candidates.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("candidates must be ascending".into()));
    }
    let mut study = SampleCountStudy {
        candidates: candidates.to_vec(),
        mean_mc: Vec::new(),
        std_mc: Vec::new(),
        selected: *candidates.last().unwrap(),
        converged: false,
    };
    for &k in candidates {
        let values = (0..replications).map(|r| mc(k, r)).collect::<Result<Vec<f64>>>()?;
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt();
        study.mean_mc.push(mean);
        study.std_mc.push(sd);
        let cv = if mean != 0.0 { sd / mean.abs() } else { sd };
        if !study.converged && cv < threshold {
            study.selected = k;
            study.converged = true;
        }
    }
    if !study.converged {
        log::warn!("no sample count met the M_C convergence threshold; using {}", study.selected);
    }
    Ok(study)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal_pdf(x: f64, mu: f64) -> f64 {
        (-(x - mu) * (x - mu) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
    }

    #[test]
    fn identical_densities() {
        let g = Grid::spanning(-6.0, 6.0, 801);
        let d = DensityEstimate::from_fn(&g, |x| normal_pdf(x, 0.0));
        assert_eq!(mise(&d, &d).unwrap(), 0.0);
        assert_eq!(mppt(&d, &d).unwrap(), 0.0);
    }

    #[test]
    fn mppt_is_distance_between_modes() {
        let g = Grid::spanning(0.9, 1.0, 101);
        let a = DensityEstimate::from_fn(&g, |x| (-(x - 0.956f64).powi(2) * 1e5).exp());
        let b = DensityEstimate::from_fn(&g, |x| (-(x - 0.958f64).powi(2) * 1e5).exp());
        assert!((mppt(&b, &a).unwrap() - 0.002).abs() < 1e-12);
    }

    #[test]
    fn flat_estimate_has_no_mode() {
        let g = Grid::spanning(0.0, 1.0, 11);
        let flat = DensityEstimate::from_fn(&g, |_| 1.0);
        let bump = DensityEstimate::from_fn(&g, |x| 1.0 - (x - 0.5).abs());
        assert!(mppt(&flat, &bump).is_err());
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = DensityEstimate::from_fn(&Grid::spanning(0.0, 1.0, 11), |x| x);
        let b = DensityEstimate::from_fn(&Grid::spanning(0.0, 1.0, 12), |x| x);
        let c = DensityEstimate::from_fn(&Grid::spanning(0.0, 2.0, 11), |x| x);
        assert!(matches!(mise(&a, &b), Err(Error::GridMismatch(_))));
        assert!(matches!(mise(&a, &c), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn mc_index_arithmetic() {
        assert!((mc_index(0.754, 0.012, 1.0, 0.05) - 0.7546).abs() < 1e-12);
        assert_eq!(mc_index(0.0, 0.0, 1.0, 0.05), 0.0);
        assert_eq!(mc_index(0.3, 9.0, 2.0, 0.0), 0.6);
    }

    #[test]
    fn single_point_grid_returns_that_point() {
        let samples: Vec<f64> = (0..50).map(|i| (i as f64 / 49.0) - 0.5).collect();
        let cfg = TuningConfig { a: 1.0, b: 0.05, kernel: KernelKind::Gaussian, lambdas: vec![0.2] };
        let reference = DensityEstimate::from_fn(&cfg.grid(&samples), |x| {
            if x.abs() <= 0.5 {
                1.0
            } else {
                0.0
            }
        });
        let curve = tune_bandwidth(&samples, &cfg, &reference).unwrap();
        assert_eq!(curve.best_lambda(), 0.2);
    }

    #[test]
    fn ties_prefer_larger_bandwidth() {
        // b-only objective with every estimate peaked at 0: all M_C tie.
        let samples = [0.0, 0.0];
        let cfg = TuningConfig {
            a: 0.0,
            b: 1.0,
            kernel: KernelKind::Gaussian,
            lambdas: vec![0.3, 0.5, 0.8],
        };
        let reference = DensityEstimate::from_fn(&Grid::spanning(-6.0, 6.0, 1201), |x| normal_pdf(x, 0.5));
        let curve = tune_bandwidth(&samples, &cfg, &reference).unwrap();
        assert!(curve.mc.iter().all(|&m| (m - 0.5).abs() < 1e-12));
        assert_eq!(curve.best, 2);
    }

    #[test]
    fn lscv_prefers_moderate_bandwidth() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..400).map(|_| StandardNormal.sample(&mut rng)).collect();
        let lambdas = log_spaced(0.01, 3.0, 40);
        let (best, _) = tune_bandwidth_lscv(&xs, &lambdas).unwrap();
        let h = silverman_bandwidth(&xs);
        assert!(best > h / 3.0 && best < 3.0 * h, "{best} vs {h}");
    }

    #[test]
    fn infinite_threshold_takes_smallest_candidate() {
        let study = tune_sample_count(&[10, 20, 40], 3, f64::INFINITY, |k, r| {
            Ok(1.0 + (r as f64) / k as f64)
        })
        .unwrap();
        assert_eq!(study.selected, 10);
        assert!(study.converged);
    }

    #[test]
    fn unmet_threshold_returns_largest() {
        let study = tune_sample_count(&[10, 20], 3, 0.0, |_, r| Ok(r as f64 + 1.0)).unwrap();
        assert_eq!(study.selected, 20);
        assert!(!study.converged);
    }

    #[test]
    fn histogram_integrates_to_one() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 7919) % 1000) as f64 / 1000.0).collect();
        let g = Grid::spanning(-0.5, 1.5, 20_001);
        let h = DensityEstimate::histogram(&xs, &g).unwrap();
        assert!((h.integral() - 1.0).abs() < 2e-3, "{}", h.integral());
        assert!(DensityEstimate::histogram(&[1.0, 1.0, 1.0], &g).is_err());
    }
}
