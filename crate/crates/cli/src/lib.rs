//! Batch front end: load a scenario, run the selected engines and write
//! plot-ready CSV artifacts.
//!
//! A run writes into a fresh temporary directory next to the requested
//! output directory and moves it into place only once every artifact has
//! been written, so a failed run never leaves a partial set behind.

// `!(x > 0.0)` rejects NaN as well; that is the point.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use pdpf::engines::{
    compare_engines, evaluate_samples, run_fsds, run_mcs, run_tpem, run_ut, tune_fsds_sample_count,
    write_characteristics_csv, write_errors_csv, write_moments_csv, EngineKind, EngineResult, FsdsOptions,
    UtOptions,
};
use pdpf::feeder::load_feeder;
use pdpf::rng::child_seed;
use pdpf::solver::{solve_fbs, solve_reference, InjectionVector, SolverConfig};
use pdpf::uncertainty::{Scenario, ScenarioSpec};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Version string embedded in `timing.json`.
pub const VERSION: &str = env!("PDPF_BUILD_VERSION");

/// Seed streams derived from the master seed, one per consumer.
const MCS_STREAM: u64 = 1;
const FSDS_STREAM: u64 = 2;
const CALIBRATION_STREAM: u64 = 3;
const STUDY_STREAM: u64 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] pdpf::Error),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid manifest: {0}")]
    Manifest(String),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Io { .. } => "io",
            CliError::Manifest(_) => "manifest",
        }
    }

    /// One-line JSON record for stderr.
    pub fn record(&self) -> serde_json::Value {
        serde_json::json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// One engine of a run with its parameters. Absent values come from the
/// scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSpec {
    pub kind: EngineKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_n: Option<usize>,
    /// Fixed FSDS bandwidth, p.u.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Tune the FSDS bandwidth when no fixed bandwidth is set.
    #[serde(default = "yes")]
    pub tune: bool,
}

fn yes() -> bool {
    true
}

impl EngineSpec {
    pub fn new(kind: EngineKind) -> Self {
        EngineSpec { kind, iterations: None, k_n: None, lambda: None, tune: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub scenario: PathBuf,
    pub engines: Vec<EngineSpec>,
    /// Master seed; the scenario's seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub out: PathBuf,
    /// Output nodes; the scenario's selection when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outputs: Option<Vec<u32>>,
    #[serde(default)]
    pub parallel_engines: bool,
}

impl RunManifest {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Manifest(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.engines.is_empty() {
            return Err(CliError::Manifest("at least one engine is required".into()));
        }
        for (i, e) in self.engines.iter().enumerate() {
            if self.engines[..i].iter().any(|o| o.kind == e.kind) {
                return Err(CliError::Manifest(format!("engine {} listed twice", e.kind)));
            }
            if e.kind == EngineKind::Fsds && !e.tune && e.lambda.is_none() {
                return Err(CliError::Manifest("fsds with tuning off needs a fixed lambda".into()));
            }
            if let Some(l) = e.lambda {
                if !(l > 0.0 && l.is_finite()) {
                    return Err(CliError::Manifest(format!("lambda must be positive, got {l}")));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the manifest with the output directory left out, so that
    /// the same experiment hashes the same wherever it is written.
    pub fn digest(&self) -> String {
        let mut m = self.clone();
        m.out = PathBuf::new();
        let bytes = serde_json::to_vec(&m).expect("manifest serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Scenario with the manifest's output selection applied.
pub fn load_scenario(path: &Path, outputs: Option<&[u32]>) -> Result<Scenario> {
    let mut spec = ScenarioSpec::from_file(path)?;
    if let Some(o) = outputs {
        spec.outputs = o.to_vec();
    }
    let feeder = load_feeder(&spec.feeder)?;
    Ok(Scenario::new(spec, Arc::new(feeder))?)
}

#[derive(Debug, Clone, Serialize)]
struct EngineTiming {
    engine: EngineKind,
    wall_seconds: f64,
    evaluations: usize,
    failed: usize,
    flagged: bool,
    self_referential: bool,
}

#[derive(Debug, Clone, Serialize)]
struct Timing {
    version: &'static str,
    seed: u64,
    manifest_sha256: String,
    threads: usize,
    engines: Vec<EngineTiming>,
    total_seconds: f64,
}

/// Outcome of a successful run.
#[derive(Debug)]
pub struct RunSummary {
    pub out: PathBuf,
    pub results: Vec<EngineResult>,
    pub files: Vec<String>,
}

fn run_engine(scenario: &Scenario, spec: &EngineSpec, seed: u64) -> pdpf::Result<EngineResult> {
    let settings = &scenario.spec().engine;
    match spec.kind {
        EngineKind::Mcs => run_mcs(
            scenario,
            spec.iterations.unwrap_or(settings.mcs_iterations),
            child_seed(seed, MCS_STREAM),
            Some(None),
        ),
        EngineKind::Fsds => {
            let mut opts = FsdsOptions::from_scenario(scenario);
            opts.seed = child_seed(seed, FSDS_STREAM);
            opts.k_n = spec.k_n.unwrap_or(opts.k_n);
            if spec.lambda.is_some() || !spec.tune {
                opts.lambda = spec.lambda.or(opts.lambda);
            }
            run_fsds(scenario, &opts, None)
        }
        EngineKind::Tpem => run_tpem(scenario),
        EngineKind::Ut => run_ut(scenario, &UtOptions::default()),
    }
}

/// Writer over a new file in `dir`, recording its name.
struct ArtifactDir<'a> {
    dir: &'a Path,
    files: Vec<String>,
}

impl ArtifactDir<'_> {
    fn write(&mut self, name: String, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
        let path = self.dir.join(&name);
        let file = File::create(&path).map_err(io_err(format!("creating {}", path.display())))?;
        let mut w = BufWriter::new(file);
        f(&mut w).and_then(|_| w.flush()).map_err(io_err(format!("writing {}", path.display())))?;
        self.files.push(name);
        Ok(())
    }
}

/// Move `staged` to `out`, replacing a previous directory there.
fn publish(staged: tempfile::TempDir, out: &Path) -> Result<()> {
    let staged = staged.keep();
    if out.exists() {
        let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let old = tempfile::Builder::new()
            .prefix(".pdpf-old-")
            .tempdir_in(parent)
            .map_err(io_err("staging the previous output"))?;
        let old_path = old.path().join("prev");
        std::fs::rename(out, &old_path).map_err(io_err(format!("moving aside {}", out.display())))?;
        std::fs::rename(&staged, out).map_err(io_err(format!("publishing {}", out.display())))?;
        drop(old);
    } else {
        std::fs::rename(&staged, out).map_err(io_err(format!("publishing {}", out.display())))?;
    }
    Ok(())
}

fn staging_dir(out: &Path) -> Result<tempfile::TempDir> {
    let parent = out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(parent).map_err(io_err(format!("creating {}", parent.display())))?;
    tempfile::Builder::new()
        .prefix(".pdpf-run-")
        .tempdir_in(parent)
        .map_err(io_err(format!("creating a staging directory in {}", parent.display())))
}

/// Run every engine of the manifest and write the artifact set.
pub fn run(manifest: &RunManifest) -> Result<RunSummary> {
    manifest.validate()?;
    let start = Instant::now();
    let scenario = load_scenario(&manifest.scenario, manifest.outputs.as_deref())?;
    let seed = manifest.seed.unwrap_or(scenario.spec().engine.seed);

    let results: Vec<EngineResult> = if manifest.parallel_engines {
        manifest.engines.par_iter().map(|e| run_engine(&scenario, e, seed)).collect::<pdpf::Result<_>>()?
    } else {
        manifest.engines.iter().map(|e| run_engine(&scenario, e, seed)).collect::<pdpf::Result<_>>()?
    };
    for r in results.iter().filter(|r| r.flagged) {
        log::warn!("{}: {} of {} power flows failed", r.engine, r.failed, r.evaluations);
    }

    let staged = staging_dir(&manifest.out)?;
    let mut dir = ArtifactDir { dir: staged.path(), files: Vec::new() };
    for r in &results {
        dir.write(format!("moments_{}.csv", r.engine), |w| write_moments_csv(r, w))?;
        for d in &r.densities {
            dir.write(format!("pdf_{}_{}.csv", d.node, r.engine), |w| d.density.write_csv(w))?;
            if let Some(curve) = &d.tuning {
                dir.write(format!("tuning_curve_{}.csv", d.node), |w| curve.write_csv(w))?;
            }
        }
    }
    if let Some(reference) = results.iter().find(|r| r.engine == EngineKind::Mcs) {
        let others: Vec<EngineResult> = results.iter().filter(|r| r.engine != EngineKind::Mcs).cloned().collect();
        let comparison = compare_engines(&others, reference)?;
        dir.write("errors_vs_mcs.csv".into(), |w| write_errors_csv(&comparison, w))?;
        let nodes: Vec<u32> = scenario.outputs().iter().map(|&i| scenario.feeder().id_of(i)).collect();
        dir.write("characteristics.csv".into(), |w| write_characteristics_csv(&results, reference, &nodes, w))?;
    }
    let timing = Timing {
        version: VERSION,
        seed,
        manifest_sha256: manifest.digest(),
        threads: rayon::current_num_threads(),
        engines: results
            .iter()
            .map(|r| EngineTiming {
                engine: r.engine,
                wall_seconds: r.wall_seconds,
                evaluations: r.evaluations,
                failed: r.failed,
                flagged: r.flagged,
                self_referential: r.self_referential,
            })
            .collect(),
        total_seconds: start.elapsed().as_secs_f64(),
    };
    dir.write("timing.json".into(), |w| {
        serde_json::to_writer_pretty(&mut *w, &timing)?;
        writeln!(w)
    })?;
    let files = dir.files;
    publish(staged, &manifest.out)?;
    Ok(RunSummary { out: manifest.out.clone(), results, files })
}

/// Base-case solution of a feeder file as `node,v_mag_pu,v_angle_deg`.
pub fn solve<W: Write>(feeder: &Path, reference: bool, config: &SolverConfig, mut out: W) -> Result<()> {
    let feeder = load_feeder(feeder)?;
    let inj = InjectionVector::base_case(&feeder);
    let sol = if reference { solve_reference(&feeder, &inj, config) } else { solve_fbs(&feeder, &inj, config) }
        .map_err(pdpf::Error::from)?;
    let write = |out: &mut W| -> std::io::Result<()> {
        writeln!(out, "node,v_mag_pu,v_angle_deg")?;
        for (node, v) in feeder.nodes().iter().zip(&sol.voltages) {
            writeln!(out, "{},{},{}", node.id, v.norm(), v.arg().to_degrees())?;
        }
        out.flush()
    };
    write(&mut out).map_err(io_err("writing the solution"))
}

/// Result of the sample-count and bandwidth study at one node.
#[derive(Debug, Clone, Serialize)]
pub struct TuneReport {
    pub node: u32,
    pub selected_k_n: usize,
    pub converged: bool,
    pub lambda: f64,
}

/// Sample-count study and bandwidth tuning at each output node; writes
/// `sample_count_<node>.csv` and `tuning_curve_<node>.csv`.
pub fn tune(scenario_path: &Path, outputs: Option<&[u32]>, seed: Option<u64>, out: &Path) -> Result<Vec<TuneReport>> {
    let scenario = load_scenario(scenario_path, outputs)?;
    let seed = seed.unwrap_or(scenario.spec().engine.seed);
    let settings = &scenario.spec().tuning;
    let calibration = evaluate_samples(
        &scenario,
        scenario.spec().engine.calibration_samples,
        child_seed(seed, CALIBRATION_STREAM),
    )?;
    let staged = staging_dir(out)?;
    let mut dir = ArtifactDir { dir: staged.path(), files: Vec::new() };
    let mut reports = Vec::new();
    for &idx in scenario.outputs() {
        let node = scenario.feeder().id_of(idx);
        let reference = calibration.node(node).expect("outputs are non-slack nodes");
        let study = tune_fsds_sample_count(&scenario, node, settings, reference, child_seed(seed, STUDY_STREAM))?;
        dir.write(format!("sample_count_{node}.csv"), |w| study.write_csv(w))?;
        let mut opts = FsdsOptions::from_scenario(&scenario);
        opts.k_n = study.selected;
        opts.seed = child_seed(seed, FSDS_STREAM);
        opts.lambda = None;
        let fsds = run_fsds(&scenario, &opts, Some(&calibration))?;
        let d = fsds.density(node).expect("fsds reports every output");
        let curve = d.tuning.as_ref().expect("tuned density carries its curve");
        dir.write(format!("tuning_curve_{node}.csv"), |w| curve.write_csv(w))?;
        reports.push(TuneReport {
            node,
            selected_k_n: study.selected,
            converged: study.converged,
            lambda: curve.best_lambda(),
        });
    }
    dir.write("tuning.json".into(), |w| {
        serde_json::to_writer_pretty(&mut *w, &reports)?;
        writeln!(w)
    })?;
    publish(staged, out)?;
    Ok(reports)
}

/// Apply `PDPF_THREADS` to the global thread pool.
pub fn configure_threads(threads: Option<usize>) -> Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Manifest(format!("thread pool: {e}")))?;
    }
    Ok(())
}
