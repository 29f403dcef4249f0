//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! Run with `cargo test -p pdpf-cli --test acceptance`.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use pdpf::density::{estimate_pdf, log_spaced, mise, silverman_bandwidth, tune_bandwidth, DensityEstimate, Grid};
use pdpf::density::{KernelKind, TuningConfig, WindowFunction};
use pdpf::engines::{
    compare_engines, evaluate_samples, run_fsds, run_mcs, run_tpem, run_ut, tpem, tune_fsds_sample_count, ut,
    EngineResult, FsdsOptions, OutputSamples, UtOptions,
};
use pdpf::feeder::{load_feeder, Bases, Branch, Feeder, Node, NodeKind};
use pdpf::metrics::relative_error;
use pdpf::rng::substream;
use pdpf::solver::{solve_fbs, solve_reference, InjectionVector, SolverConfig};
use pdpf::uncertainty::Scenario;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Seed of the MCS reference runs; distinct from every FSDS seed.
const REFERENCE_SEED: u64 = 999;
const MCS_ITERATIONS: usize = 5000;
const FSDS_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
/// Node fed by the level-3 station with 45% availability.
const STATION_NODE: u32 = 15;
/// A local maximum counts as a mode above this fraction of the peak.
const MODE_FLOOR: f64 = 0.05;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn node(id: u32, p: f64, q: f64, kind: NodeKind) -> Node {
    Node { id, base_load_p: p, base_load_q: q, kind }
}

/// Random radial feeder with `n` nodes and scattered ids.
fn random_feeder(n: usize, seed: u64) -> Feeder {
    let mut rng = substream(seed, 0, 0);
    let mut ids: Vec<u32> = (0..n as u32).map(|i| 500 + 3 * i).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        ids.swap(i, j);
    }
    let mut nodes = vec![node(ids[0], 0.0, 0.0, NodeKind::Slack)];
    let mut branches = Vec::new();
    // Keep the total load moderate so that deep feeders stay solvable.
    let per_node = 2000.0 / n as f64;
    for (k, &id) in ids.iter().enumerate().skip(1) {
        let p = rng.random_range(0.0..per_node);
        nodes.push(node(id, p, p * rng.random_range(0.0..0.6), NodeKind::Residential));
        let parent = if rng.random::<f64>() < 0.5 { k - 1 } else { rng.random_range(0..k) };
        let z = Complex64::new(rng.random_range(0.0005..0.005), rng.random_range(0.0005..0.005));
        branches.push(Branch { from: parent, to: k, impedance: z });
    }
    Feeder::new(nodes, branches, Complex64::new(1.0, 0.0), Bases { s_kva: 10_000.0, v_kv: 12.47 }).unwrap()
}

fn solver_gap(feeder: &Feeder) -> f64 {
    let cfg = SolverConfig::default();
    let inj = InjectionVector::base_case(feeder);
    let a = solve_fbs(feeder, &inj, &cfg).unwrap();
    let b = solve_reference(feeder, &inj, &cfg).unwrap();
    a.voltages.iter().zip(&b.voltages).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for name in ["feeder34.json", "feeder123.json"] {
        worst = worst.max(solver_gap(&load_feeder(data(name)).unwrap()));
        count += 1;
    }
    let mut sizes = substream(2024, 0, 1);
    for seed in 0..50 {
        let n = sizes.random_range(2..=200);
        worst = worst.max(solver_gap(&random_feeder(n, seed)));
        count += 1;
    }
    let f123 = load_feeder(data("feeder123.json")).unwrap();
    let inj = InjectionVector::base_case(&f123);
    let cfg = SolverConfig::default();
    solve_fbs(&f123, &inj, &cfg).unwrap();
    let reps = 200;
    let t = Instant::now();
    for _ in 0..reps {
        std::hint::black_box(solve_fbs(&f123, &inj, &cfg).unwrap());
    }
    let ms = t.elapsed().as_secs_f64() * 1e3 / reps as f64;
    outcome(
        worst < 1e-8 && ms < 10.0,
        format!("max |V_fbs − V_ref| = {worst:.2e} p.u. over {count} feeders (< 1e-8); 123-node solve {ms:.3} ms (< 10 ms)"),
    )
}

/// Receiving-end voltage of one line with a constant-power load,
/// `|V|⁴ + (2(RP + XQ) − V0²)|V|² + |z|²|S|² = 0`, angle from
/// `V0·V̄ = |V|² + z·S̄`.
fn two_bus_closed_form(z: Complex64, s: Complex64) -> Complex64 {
    let b = 2.0 * (z.re * s.re + z.im * s.im) - 1.0;
    let m2 = (-b + (b * b - 4.0 * z.norm_sqr() * s.norm_sqr()).sqrt()) / 2.0;
    Complex64::new(m2, 0.0) + z.conj() * s
}

fn criterion_2() -> Outcome {
    let cases = [
        (Complex64::new(0.01, 0.02), Complex64::new(0.5, 0.2)),
        (Complex64::new(0.05, 0.1), Complex64::new(1.2, 0.6)),
        (Complex64::new(0.002, 0.0), Complex64::new(3.0, 0.0)),
        (Complex64::new(0.0, 0.08), Complex64::new(0.1, 1.5)),
        (Complex64::new(0.03, 0.01), Complex64::new(0.0, 0.0)),
    ];
    let mut worst: f64 = 0.0;
    for (z, s) in cases {
        let f = Feeder::new(
            vec![node(0, 0.0, 0.0, NodeKind::Slack), node(1, s.re * 1000.0, s.im * 1000.0, NodeKind::Residential)],
            vec![Branch { from: 0, to: 1, impedance: z }],
            Complex64::new(1.0, 0.0),
            Bases { s_kva: 1000.0, v_kv: 12.47 },
        )
        .unwrap();
        let v = solve_fbs(&f, &InjectionVector::base_case(&f), &SolverConfig::default()).unwrap().voltages[1];
        worst = worst.max((v - two_bus_closed_form(z, s)).norm());
    }
    outcome(worst < 1e-8, format!("max |V − V_closed| = {worst:.2e} p.u. over {} lines (< 1e-8)", cases.len()))
}

fn criterion_3() -> Outcome {
    let pct = 100.0 * relative_error(0.9953, 0.9927).unwrap();
    outcome((pct - 0.262).abs() <= 0.001, format!("relative_error(0.9953, 0.9927) = {pct:.4}% (0.262 ± 0.001)"))
}

/// Shared runs on the 34-node scenario.
struct Study34 {
    scenario: Scenario,
    mcs: EngineResult,
    tpem: EngineResult,
    calibration: OutputSamples,
    k_n: usize,
    selected: usize,
    fsds: Vec<EngineResult>,
}

fn study34() -> Study34 {
    let scenario = Scenario::load(data("scenario34.json")).unwrap();
    let mcs = run_mcs(&scenario, MCS_ITERATIONS, REFERENCE_SEED, None).unwrap();
    let tpem = run_tpem(&scenario).unwrap();
    let calibration = evaluate_samples(&scenario, scenario.spec().engine.calibration_samples, 4242).unwrap();
    let tuning = &scenario.spec().tuning;
    let study =
        tune_fsds_sample_count(&scenario, STATION_NODE, tuning, calibration.node(STATION_NODE).unwrap(), 7).unwrap();
    let k_n = study.selected.max(45);
    let fsds = FSDS_SEEDS
        .iter()
        .map(|&seed| {
            let opts = FsdsOptions { k_n, seed, lambda: None, ..FsdsOptions::from_scenario(&scenario) };
            run_fsds(&scenario, &opts, Some(&calibration)).unwrap()
        })
        .collect();
    Study34 { scenario, mcs, tpem, calibration, k_n, selected: study.selected, fsds }
}

fn eps_mean(r: &EngineResult, reference: &EngineResult, order: usize) -> f64 {
    let cmp = compare_engines(std::slice::from_ref(r), reference).unwrap();
    cmp.engines[0].order(order).and_then(|rep| rep.summary).map_or(f64::NAN, |s| s.mean)
}

fn criterion_4(s: &Study34) -> Outcome {
    let mut strict = true;
    let (mut fsds_sum, mut tpem_sum) = (0.0, 0.0);
    let mut per_order = Vec::new();
    for order in 3..=5 {
        let t = eps_mean(&s.tpem, &s.mcs, order);
        let f: Vec<f64> = s.fsds.iter().map(|r| eps_mean(r, &s.mcs, order)).collect();
        strict &= f.iter().all(|&e| e < t);
        let worst = f.iter().cloned().fold(0.0, f64::max);
        per_order.push(format!("ε̄{order}: fsds ≤ {worst:.3} vs tpem {t:.3} ({:.1}×)", t / worst));
        fsds_sum += f.iter().sum::<f64>();
        tpem_sum += t * f.len() as f64;
    }
    let gap = tpem_sum / fsds_sum;
    outcome(
        strict && gap >= 5.0,
        format!(
            "k_n = {} (study chose {}), {} seeds; {}; pooled orders 3–5 gap {gap:.1}× (≥ 5×); fsds < tpem for every seed and order: {strict}",
            s.k_n,
            s.selected,
            s.fsds.len(),
            per_order.join("; "),
        ),
    )
}

fn criterion_5() -> Outcome {
    let c = [0.7, -1.2, 2.0];
    let means = [1.0, -0.5, 3.0];
    let stds = [0.3, 0.1, 0.05];
    let skews = [0.8, -0.4, 0.0];
    let m = &tpem::propagate(&means, &stds, &skews, |x| Ok(vec![4.0 + x.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()]))
        .unwrap()[0];
    let mean = 4.0 + means.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>();
    let var: f64 = stds.iter().zip(&c).map(|(s, c)| (c * s).powi(2)).sum();
    let tpem_err = (m.mean - mean).abs().max((m.std - var.sqrt()).abs());

    let a = DMatrix::from_row_slice(2, 3, &[0.7, -1.2, 2.0, 0.1, 0.4, -0.3]);
    let d = DVector::from_vec(vec![4.0, -1.0]);
    let mu = DVector::from_row_slice(&means);
    let cov = DMatrix::from_row_slice(3, 3, &[0.09, 0.01, 0.0, 0.01, 0.01, 0.002, 0.0, 0.002, 0.0025]);
    let w0 = UtOptions::default().centre_weight(3).unwrap();
    let (ym, yc) = ut::propagate(&mu, &cov, w0, |x| Ok(&a * x + &d)).unwrap();
    let ut_err = (ym - (&a * &mu + &d)).amax().max((yc - &a * &cov * a.transpose()).amax());
    outcome(
        tpem_err < 1e-10 && ut_err < 1e-10,
        format!("TPEM mean/STD error {tpem_err:.1e}; UT mean/covariance error {ut_err:.1e} (< 1e-10)"),
    )
}

fn criterion_6(s: &Study34) -> Outcome {
    let mut integrals = Vec::new();
    let s123 = Scenario::load(data("scenario123.json")).unwrap();
    let mcs34 = run_mcs(&s.scenario, MCS_ITERATIONS, REFERENCE_SEED, Some(None)).unwrap();
    let mcs123 = run_mcs(&s123, MCS_ITERATIONS, REFERENCE_SEED, Some(None)).unwrap();
    let fsds123 = run_fsds(&s123, &FsdsOptions::from_scenario(&s123), None).unwrap();
    for r in s.fsds.iter().chain([&mcs34, &mcs123, &fsds123]) {
        integrals.extend(r.densities.iter().map(|d| d.density.integral()));
    }
    let worst = integrals.iter().map(|i| (i - 1.0).abs()).fold(0.0, f64::max);

    // Oracle-tuned bandwidth against a unit normal at growing k.
    let grid = Grid::spanning(-6.0, 6.0, 2401);
    let truth = DensityEstimate::from_fn(&grid, |x| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt());
    let mut rng = substream(606, 0, 0);
    let mut mises = Vec::new();
    for k in [100, 1_000, 10_000, 100_000] {
        let x: Vec<f64> = (0..k).map(|_| StandardNormal.sample(&mut rng)).collect();
        let h = silverman_bandwidth(&x);
        let cfg = TuningConfig { a: 1.0, b: 0.05, kernel: KernelKind::Gaussian, lambdas: log_spaced(0.25 * h, 4.0 * h, 21) };
        let curve = tune_bandwidth(&x, &cfg, &truth).unwrap();
        let est = estimate_pdf(&x, curve.best_lambda(), WindowFunction::default(), &grid).unwrap();
        mises.push(mise(&est, &truth).unwrap());
    }
    let monotone = mises.windows(2).all(|w| w[1] < w[0]);
    outcome(
        worst <= 1e-3 && monotone,
        format!(
            "{} densities, max |∫P − 1| = {worst:.1e} (≤ 1e-3); MISE at k = 1e2..1e5: {} (decreasing: {monotone})",
            integrals.len(),
            mises.iter().map(|m| format!("{m:.2e}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn criterion_7(s: &Study34) -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (r, &seed) in s.fsds.iter().zip(&FSDS_SEEDS) {
        let d = &r.density(STATION_NODE).unwrap().density;
        let samples = evaluate_samples(&s.scenario, s.k_n, seed).unwrap();
        let v = samples.node(STATION_NODE).unwrap();
        let wide_lambda = 10.0 * d.bandwidth;
        let g = Grid::for_samples(v, wide_lambda, KernelKind::Gaussian);
        let wide = estimate_pdf(v, wide_lambda, WindowFunction::default(), &g).unwrap();
        let (m, w) = (d.count_modes(MODE_FLOOR), wide.count_modes(MODE_FLOOR));
        pass &= m >= 2 && w == 1;
        detail.push(format!("seed {seed}: λ {:.1e} → {m} modes, 10λ → {w}", d.bandwidth));
    }
    outcome(pass, format!("node {STATION_NODE}: {}", detail.join("; ")))
}

/// Fastest of three timings.
fn best_time(mut f: impl FnMut()) -> f64 {
    (0..3)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .fold(f64::INFINITY, f64::min)
}

fn criterion_8(s: &Study34) -> Outcome {
    // Bandwidth fixed at the value tuned beforehand, as in a production
    // run after the one-off tuning study.
    let lambda = s.fsds[0].density(STATION_NODE).unwrap().density.bandwidth;
    let opts = FsdsOptions { k_n: 45, seed: 11, lambda: Some(lambda), ..FsdsOptions::from_scenario(&s.scenario) };
    let fsds = best_time(|| {
        run_fsds(&s.scenario, &opts, None).unwrap();
    });
    let mcs = best_time(|| {
        run_mcs(&s.scenario, MCS_ITERATIONS, REFERENCE_SEED, None).unwrap();
    });
    let tuned = best_time(|| {
        let o = FsdsOptions { k_n: 45, seed: 11, lambda: None, ..FsdsOptions::from_scenario(&s.scenario) };
        run_fsds(&s.scenario, &o, None).unwrap();
    });
    let ratio = mcs / fsds;
    outcome(
        ratio >= 10.0 && tuned < 5.0,
        format!(
            "FSDS(45, fixed λ) {:.2} ms vs MCS(5000) {:.1} ms: {ratio:.0}× (≥ 10×); FSDS with tuning and its own calibration {tuned:.2} s (< 5 s)",
            fsds * 1e3,
            mcs * 1e3
        ),
    )
}

fn criterion_9() -> Outcome {
    let s = Scenario::load(data("scenario123.json")).unwrap();
    let mcs = run_mcs(&s, MCS_ITERATIONS, REFERENCE_SEED, None).unwrap();
    let ut = run_ut(&s, &UtOptions::default()).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    let mut nodes: Vec<u32> = s.stations().map(|st| st.model().node).collect();
    nodes.sort_unstable();
    for id in nodes {
        let (u, m) = (ut.node(id).unwrap().std, mcs.node(id).unwrap().std);
        pass &= u < m;
        detail.push(format!("{id}: {:.3}", u / m));
    }
    outcome(pass, format!("UT/MCS STD at station nodes {}", detail.join(", ")))
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> =
        std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

fn criterion_10(s: &Study34) -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        let ok = Command::new(env!("CARGO_BIN_EXE_pdpf"))
            .args(["run", "--seed", "5", "--scenario"])
            .arg(data("scenario34.json"))
            .arg("--out")
            .arg(&out)
            .env("RUST_LOG", "error")
            .status()
            .map(|st| st.success())
            .unwrap_or(false);
        (ok, out)
    };
    let ((ok_a, a), (ok_b, b)) = (run("a"), run("b"));
    if !(ok_a && ok_b) {
        return outcome(false, "pdpf run failed".into());
    }
    let names = files(&a);
    let mut differing = Vec::new();
    let mut compared = 0;
    for n in names.iter().filter(|n| *n != "timing.json") {
        compared += 1;
        if std::fs::read(a.join(n)).ok() != std::fs::read(b.join(n)).ok() {
            differing.push(n.clone());
        }
    }
    let same_set = names == files(&b);
    let opts = FsdsOptions { seed: 3, ..FsdsOptions::from_scenario(&s.scenario) };
    let engines_repeat = run_fsds(&s.scenario, &opts, Some(&s.calibration))
        .unwrap()
        .same_outcome(&run_fsds(&s.scenario, &opts, Some(&s.calibration)).unwrap())
        && run_mcs(&s.scenario, 500, 1, Some(None)).unwrap().same_outcome(&run_mcs(&s.scenario, 500, 1, Some(None)).unwrap());
    outcome(
        same_set && differing.is_empty() && engines_repeat,
        format!(
            "{compared} CSV artifacts byte-identical across two CLI runs (differing: {differing:?}); in-process engine reruns identical: {engines_repeat}"
        ),
    )
}

fn main() -> ExitCode {
    // The harness passes its own flags; a name filter skips the suite
    // unless it names it.
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !args.is_empty() && !args.iter().any(|a| "acceptance".contains(a.as_str())) {
        return ExitCode::SUCCESS;
    }
    let start = Instant::now();
    let mut results: Vec<(u8, &str, Outcome)> = Vec::new();
    let mut report = |id: u8, name: &'static str, o: Outcome| {
        println!("{} {id:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((id, name, o));
    };
    report(1, "solver oracle equivalence", criterion_1());
    report(2, "two-bus analytic check", criterion_2());
    report(3, "error arithmetic", criterion_3());
    let s34 = study34();
    report(4, "engine ordering", criterion_4(&s34));
    report(5, "linear-map exactness", criterion_5());
    report(6, "KDE normalization and consistency", criterion_6(&s34));
    report(7, "multi-modality", criterion_7(&s34));
    report(8, "speed", criterion_8(&s34));
    report(9, "UT variance underestimation", criterion_9());
    report(10, "determinism", criterion_10(&s34));
    let failed: Vec<u8> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} passed in {:.1} s",
        results.len() - failed.len(),
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
