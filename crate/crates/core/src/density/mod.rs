//! Finite smoothing of data samples: kernel (Parzen window) estimates of a
//! scalar output PDF, plus the indices used to tune the window width.
//!
//! For a test point `x`, the samples falling in a region of width `λ`
//! centred on `x` estimate the local probability mass; dividing by the
//! region volume gives the density. Replacing the hard region by a smooth
//! window `K` gives
//!
//! ```text
//! P̂(x) = 1/(k_n·λ) · Σᵢ K((x − xᵢ)/λ)
//! ```
//!
//! with `∫K = 1`, `K ≥ 0`. [`KernelKind::Box`] is the literal hypercube
//! count; [`KernelKind::Gaussian`] is the default.

mod tuning;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use tuning::{
    freedman_diaconis_width, log_spaced, lscv_score, mc_index, mise, mppt, silverman_bandwidth,
    tune_bandwidth, tune_bandwidth_lscv, tune_sample_count, ReferenceMode, SampleCountStudy,
    TuningConfig, TuningCurve, TuningSettings,
};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    #[default]
    Gaussian,
    /// Unit-width hypercube: `K(u) = 1` for `|u| ≤ 1/2`.
    Box,
}

/// Gaussian tails beyond this many bandwidths are dropped (`e^{-40.5}`).
const GAUSS_CUTOFF: f64 = 9.0;

/// A validated window function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowFunction {
    kind: KernelKind,
}

impl WindowFunction {
    /// Checks `∫K = 1` numerically to 1e-6.
    pub fn new(kind: KernelKind) -> Result<Self> {
        let w = WindowFunction { kind };
        let area = w.numeric_area();
        if (area - 1.0).abs() > 1e-6 {
            return Err(Error::Numerical(format!("{kind:?} kernel integrates to {area}")));
        }
        Ok(w)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn eval(&self, u: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            KernelKind::Box => {
                if u.abs() <= 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Half-width of the support in units of `λ`.
    pub fn reach(&self) -> f64 {
        match self.kind {
            KernelKind::Gaussian => GAUSS_CUTOFF,
            KernelKind::Box => 0.5,
        }
    }

    fn numeric_area(&self) -> f64 {
        // Composite Simpson on each smooth piece of the support.
        let pieces: &[(f64, f64)] = match self.kind {
            KernelKind::Gaussian => &[(-12.0, 12.0)],
            KernelKind::Box => &[(-0.5, 0.5)],
        };
        pieces
            .iter()
            .map(|&(a, b)| {
                let n = 20_000;
                let h = (b - a) / n as f64;
                let mut s = self.eval(a) + self.eval(b);
                for i in 1..n {
                    let x = a + i as f64 * h;
                    s += if i % 2 == 1 { 4.0 } else { 2.0 } * self.eval(x);
                }
                s * h / 3.0
            })
            .sum()
    }
}

impl Default for WindowFunction {
    fn default() -> Self {
        WindowFunction { kind: KernelKind::Gaussian }
    }
}

/// Uniform evaluation grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    start: f64,
    step: f64,
    len: usize,
}

/// Points in the default grid.
pub const DEFAULT_GRID_POINTS: usize = 512;
/// Upper bound on refined grids.
pub const MAX_GRID_POINTS: usize = 1 << 20;

impl Grid {
    /// `len` points from `lo` to `hi` inclusive.
    pub fn spanning(lo: f64, hi: f64, len: usize) -> Self {
        assert!(len >= 2 && hi > lo, "grid needs two points and hi > lo");
        Grid { start: lo, step: (hi - lo) / (len - 1) as f64, len }
    }

    /// `[min − 5λ, max + 5λ]` with 512 points, refined when needed so that
    /// the spacing resolves the window (λ/2 for the Gaussian, λ/1000 for
    /// the box).
    pub fn for_samples(samples: &[f64], lambda: f64, kernel: KernelKind) -> Self {
        let (lo, hi) = min_max(samples);
        Self::covering(lo - 5.0 * lambda, hi + 5.0 * lambda, lambda, kernel)
    }

    /// Grid over `[lo, hi]` fine enough for bandwidth `lambda`.
    pub fn covering(lo: f64, hi: f64, lambda: f64, kernel: KernelKind) -> Self {
        let resolution = match kernel {
            KernelKind::Gaussian => 0.5,
            KernelKind::Box => 1e-3,
        };
        let needed = ((hi - lo) / (lambda * resolution)).ceil() as usize + 1;
        let len = needed.clamp(DEFAULT_GRID_POINTS, MAX_GRID_POINTS);
        if needed > MAX_GRID_POINTS {
            log::warn!("grid capped at {MAX_GRID_POINTS} points; bandwidth {lambda:e} under-resolved");
        }
        Grid::spanning(lo, hi, len)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.x(self.len - 1)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.x(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Gaussian,
    Box,
    Histogram,
    /// Closed-form density evaluated on the grid.
    Exact,
}

impl From<KernelKind> for Method {
    fn from(k: KernelKind) -> Self {
        match k {
            KernelKind::Gaussian => Method::Gaussian,
            KernelKind::Box => Method::Box,
        }
    }
}

/// Density values on a uniform grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Window width (bin width for histograms), data units.
    pub bandwidth: f64,
    pub method: Method,
    /// Number of samples behind the estimate.
    pub k_n: usize,
    #[serde(skip)]
    layout: Option<Grid>,
}

impl DensityEstimate {
    /// Tabulate a known density.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> Self {
        let xs = grid.points();
        let values = xs.iter().map(|&x| f(x)).collect();
        DensityEstimate { grid: xs, values, bandwidth: 0.0, method: Method::Exact, k_n: 0, layout: Some(*grid) }
    }

    /// Freedman–Diaconis histogram of `samples`, read off at the grid points.
    pub fn histogram(samples: &[f64], grid: &Grid) -> Result<Self> {
        let width = freedman_diaconis_width(samples)?;
        let (lo, hi) = min_max(samples);
        let bins = (((hi - lo) / width).ceil() as usize).max(1);
        let mut counts = vec![0usize; bins];
        for &x in samples {
            let b = (((x - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let norm = 1.0 / (samples.len() as f64 * width);
        let xs = grid.points();
        let values = xs
            .iter()
            .map(|&x| {
                if x < lo || x > lo + bins as f64 * width {
                    0.0
                } else {
                    let b = (((x - lo) / width) as usize).min(bins - 1);
                    counts[b] as f64 * norm
                }
            })
            .collect();
        Ok(DensityEstimate {
            grid: xs,
            values,
            bandwidth: width,
            method: Method::Histogram,
            k_n: samples.len(),
            layout: Some(*grid),
        })
    }

    /// Uniform layout of the grid, when known.
    pub fn layout(&self) -> Option<Grid> {
        self.layout
    }

    /// Trapezoidal integral of the density over its grid.
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.values)
    }

    /// Index of the global maximum; the smallest index wins ties.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, &v) in self.values.iter().enumerate() {
            match best {
                Some(b) if v <= self.values[b] => {}
                _ if v.is_nan() => {}
                _ => best = Some(i),
            }
        }
        best.filter(|&b| self.values[b] > 0.0)
    }

    /// Location of the global maximum.
    pub fn mode(&self) -> Option<f64> {
        self.argmax().map(|i| self.grid[i])
    }

    /// Local maxima at least `rel_floor` times the global maximum. A
    /// plateau counts once.
    pub fn count_modes(&self, rel_floor: f64) -> usize {
        let v = &self.values;
        let peak = v.iter().cloned().fold(0.0_f64, f64::max);
        if !(peak > 0.0) {
            return 0;
        }
        let floor = rel_floor * peak;
        let mut modes = 0;
        let mut i = 0;
        while i < v.len() {
            // Extent of the plateau starting at i.
            let mut j = i;
            while j + 1 < v.len() && v[j + 1] == v[i] {
                j += 1;
            }
            let left_lower = i == 0 || v[i - 1] < v[i];
            let right_lower = j + 1 == v.len() || v[j + 1] < v[i];
            if left_lower && right_lower && v[i] >= floor && v[i] > 0.0 {
                modes += 1;
            }
            i = j + 1;
        }
        modes
    }

    /// Two-column `x,density` CSV.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x,density")?;
        for (x, p) in self.grid.iter().zip(&self.values) {
            writeln!(out, "{x},{p}")?;
        }
        Ok(())
    }

    pub(crate) fn same_grid(&self, other: &DensityEstimate) -> Result<()> {
        if self.grid.len() != other.grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} vs {} points",
                self.grid.len(),
                other.grid.len()
            )));
        }
        let span = (self.grid[self.grid.len() - 1] - self.grid[0]).abs().max(f64::MIN_POSITIVE);
        for (a, b) in self.grid.iter().zip(&other.grid) {
            if (a - b).abs() > 1e-9 * span {
                return Err(Error::GridMismatch(format!("point {a} vs {b}")));
            }
        }
        Ok(())
    }
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

pub(crate) fn min_max(samples: &[f64]) -> (f64, f64) {
    samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Kernel density estimate of `samples` on `grid`.
///
/// Errors on an empty sample set, non-finite samples or a bandwidth that is
/// not strictly positive.
pub fn estimate_pdf(
    samples: &[f64],
    lambda: f64,
    kernel: WindowFunction,
    grid: &Grid,
) -> Result<DensityEstimate> {
    if samples.is_empty() {
        return Err(Error::DegenerateSample("no samples".into()));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidInput(format!("bandwidth must be positive, got {lambda}")));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);

    let n = grid.len();
    // Scatter each sample into the grid points it reaches. Chunks are
    // reduced in a fixed order so the result is independent of threading.
    const CHUNK: usize = 4096;
    let partials: Vec<Vec<f64>> = sorted
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = vec![0.0; n];
            for &xi in chunk {
                scatter(&mut acc, xi, lambda, kernel, grid);
            }
            acc
        })
        .collect();
    let mut values = vec![0.0; n];
    for part in partials {
        values.iter_mut().zip(part).for_each(|(v, p)| *v += p);
    }
    let norm = 1.0 / (samples.len() as f64 * lambda);
    values.iter_mut().for_each(|v| *v *= norm);

    Ok(DensityEstimate {
        grid: grid.points(),
        values,
        bandwidth: lambda,
        method: kernel.kind().into(),
        k_n: samples.len(),
        layout: Some(*grid),
    })
}

/// Add `K((x_g − xi)/λ)` to every grid point within reach of `xi`.
fn scatter(acc: &mut [f64], xi: f64, lambda: f64, kernel: WindowFunction, grid: &Grid) {
    let n = grid.len() as isize;
    let h = grid.step;
    let reach = kernel.reach() * lambda;
    let first = (((xi - reach) - grid.start) / h).ceil().max(0.0) as isize;
    let last = ((((xi + reach) - grid.start) / h).floor() as isize).min(n - 1);
    if first > last {
        return;
    }
    match kernel.kind() {
        KernelKind::Box => {
            for g in first..=last {
                // A grid point on the window edge takes half weight so
                // that the trapezoid rule integrates aligned windows
                // exactly.
                let u = ((grid.x(g as usize) - xi) / lambda).abs();
                if (u - 0.5).abs() <= 1e-12 {
                    acc[g as usize] += 0.5;
                } else if u < 0.5 {
                    acc[g as usize] += 1.0;
                }
            }
        }
        KernelKind::Gaussian => {
            // Walk outward from the grid point nearest xi using the ratio
            // recurrence of a sampled Gaussian: a(g+1) = a(g)·r(g),
            // r(g+1) = r(g)·q with q = exp(−h²/λ²).
            let centre = (((xi - grid.start) / h).round() as isize).clamp(first, last);
            let inv2 = 1.0 / (2.0 * lambda * lambda);
            let q = (-h * h / (lambda * lambda)).exp();
            let c0 = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
            let d = grid.x(centre as usize) - xi;
            let a0 = c0 * (-d * d * inv2).exp();
            acc[centre as usize] += a0;

            let mut a = a0;
            let mut r = (-(2.0 * d * h + h * h) * inv2).exp();
            for g in centre + 1..=last {
                a *= r;
                r *= q;
                acc[g as usize] += a;
            }
            let mut a = a0;
            let mut r = (-(-2.0 * d * h + h * h) * inv2).exp();
            for g in (first..centre).rev() {
                a *= r;
                r *= q;
                acc[g as usize] += a;
            }
        }
    }
}
