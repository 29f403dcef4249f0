use std::time::Instant;

use super::{evaluate_samples, EngineKind, EngineResult, OutputDensity, OutputSamples};
use crate::density::{
    estimate_pdf, silverman_bandwidth, tune_bandwidth, tune_bandwidth_lscv, tune_sample_count,
    DensityEstimate, Grid, KernelKind, ReferenceMode, SampleCountStudy, TuningCurve, TuningSettings,
    WindowFunction,
};
use crate::error::{Error, Result};
use crate::rng::child_seed;
use crate::uncertainty::Scenario;

/// Stream index of the calibration run derived from the FSDS seed.
const CALIBRATION_STREAM: u64 = 0xCA11;

#[derive(Debug, Clone, PartialEq)]
pub struct FsdsOptions {
    pub k_n: usize,
    pub seed: u64,
    /// Fixed bandwidth; tuned per output when absent.
    pub lambda: Option<f64>,
    pub tuning: TuningSettings,
    /// Size of the reference run in [`ReferenceMode::CalibrationMcs`].
    pub calibration_samples: usize,
}

impl FsdsOptions {
    pub fn from_scenario(scenario: &Scenario) -> Self {
        let spec = scenario.spec();
        FsdsOptions {
            k_n: spec.engine.k_n,
            seed: spec.engine.seed,
            lambda: spec.engine.lambda,
            tuning: spec.tuning.clone(),
            calibration_samples: spec.engine.calibration_samples,
        }
    }
}

/// Finite smoothing of data samples: `k_n` power flows, sample moments at
/// every node and a kernel PDF of each selected output.
///
/// `calibration` supplies reference samples for bandwidth tuning; when it
/// is absent and the tuning reference is a calibration run, one is drawn
/// from a stream derived from the seed.
pub fn run_fsds(
    scenario: &Scenario,
    opts: &FsdsOptions,
    calibration: Option<&OutputSamples>,
) -> Result<EngineResult> {
    let start = Instant::now();
    if opts.k_n < 2 {
        return Err(Error::InvalidInput(format!("k_n must be at least 2, got {}", opts.k_n)));
    }
    let samples = evaluate_samples(scenario, opts.k_n, opts.seed)?;
    let nodes = samples.node_moments()?;

    let mut own_calibration = None;
    let mut self_referential = false;
    let mut densities = Vec::with_capacity(scenario.outputs().len());
    for &idx in scenario.outputs() {
        let id = scenario.feeder().id_of(idx);
        let v = samples.node(id).expect("outputs are non-slack nodes");
        let od = match opts.lambda {
            Some(lambda) => OutputDensity { node: id, density: fixed_bandwidth_pdf(v, Some(lambda))?, tuning: None },
            None => {
                let (density, tuning) = match opts.tuning.reference {
                    ReferenceMode::CalibrationMcs => {
                        let cal = match calibration {
                            Some(c) => c,
                            None => own_calibration.get_or_insert(evaluate_samples(
                                scenario,
                                opts.calibration_samples,
                                child_seed(opts.seed, CALIBRATION_STREAM),
                            )?),
                        };
                        let reference = cal
                            .node(id)
                            .ok_or_else(|| Error::InvalidInput(format!("calibration lacks node {id}")))?;
                        let (d, c) = tuned_pdf(v, reference, &opts.tuning)?;
                        (d, Some(c))
                    }
                    ReferenceMode::SelfHistogram => {
                        self_referential = true;
                        let (d, c) = tuned_pdf(v, v, &opts.tuning)?;
                        (d, Some(c))
                    }
                    ReferenceMode::Lscv => (lscv_pdf(v, &opts.tuning)?, None),
                };
                OutputDensity { node: id, density, tuning }
            }
        };
        densities.push(od);
    }

    Ok(EngineResult {
        engine: EngineKind::Fsds,
        nodes,
        densities,
        evaluations: opts.k_n,
        failed: samples.failed,
        flagged: samples.flagged(),
        self_referential,
        seed: Some(opts.seed),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

fn check_spread(samples: &[f64]) -> Result<()> {
    let first = samples[0];
    if samples.iter().all(|&x| x == first) {
        return Err(Error::DegenerateSample(format!(
            "all {} samples equal {first}; a density estimate would be a single spike",
            samples.len()
        )));
    }
    Ok(())
}

/// Gaussian kernel estimate at `lambda`, or at the Silverman bandwidth.
pub(crate) fn fixed_bandwidth_pdf(samples: &[f64], lambda: Option<f64>) -> Result<DensityEstimate> {
    check_spread(samples)?;
    let lambda = lambda.unwrap_or_else(|| silverman_bandwidth(samples));
    let grid = Grid::for_samples(samples, lambda, KernelKind::Gaussian);
    estimate_pdf(samples, lambda, WindowFunction::default(), &grid)
}

/// Tune against the histogram of `reference` and estimate at the optimum.
fn tuned_pdf(samples: &[f64], reference: &[f64], settings: &TuningSettings) -> Result<(DensityEstimate, TuningCurve)> {
    check_spread(samples)?;
    let cfg = settings.config_for(samples)?;
    let (lo, hi) = crate::density::min_max(&[samples, reference].concat());
    let grid = cfg.grid(&[lo, hi]);
    let hist = DensityEstimate::histogram(reference, &grid)?;
    let curve = tune_bandwidth(samples, &cfg, &hist)?;
    let density = estimate_pdf(samples, curve.best_lambda(), WindowFunction::new(cfg.kernel)?, &grid)?;
    Ok((density, curve))
}

fn lscv_pdf(samples: &[f64], settings: &TuningSettings) -> Result<DensityEstimate> {
    check_spread(samples)?;
    let cfg = settings.config_for(samples)?;
    let (lambda, _) = tune_bandwidth_lscv(samples, &cfg.lambdas)?;
    let grid = Grid::for_samples(samples, lambda, KernelKind::Gaussian);
    estimate_pdf(samples, lambda, WindowFunction::default(), &grid)
}

/// Sample-count study at one output node: for each candidate `k_n`, the
/// spread of the tuned M_C over independent replications.
pub fn tune_fsds_sample_count(
    scenario: &Scenario,
    node: u32,
    settings: &TuningSettings,
    reference: &[f64],
    seed: u64,
) -> Result<SampleCountStudy> {
    settings.validate()?;
    tune_sample_count(&settings.candidates, settings.replications, settings.convergence_threshold, |k, rep| {
        let run = evaluate_samples(scenario, k, child_seed(seed, ((k as u64) << 20) | rep as u64))?;
        let v = run.node(node).ok_or_else(|| Error::InvalidInput(format!("node {node} is not reported")))?;
        let (_, curve) = tuned_pdf(v, reference, settings)?;
        Ok(curve.best_mc())
    })
}
