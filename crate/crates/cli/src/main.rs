use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pdpf::engines::EngineKind;
use pdpf::solver::SolverConfig;
use pdpf_cli::{CliError, EngineSpec, RunManifest};

#[derive(Parser)]
#[command(name = "pdpf", version = pdpf_cli::VERSION, about = "Probabilistic distribution power flow")]
struct Cli {
    /// Worker threads for sample evaluation.
    #[arg(long, env = "PDPF_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run engines on a scenario and write the artifact set.
    Run(RunArgs),
    /// Solve a feeder's base case and print the voltages as CSV.
    Solve {
        feeder: PathBuf,
        /// Use the nodal-admittance reference solver.
        #[arg(long)]
        reference: bool,
    },
    /// Sample-count study and bandwidth tuning at the output nodes.
    Tune {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Output nodes, comma separated.
        #[arg(long, value_delimiter = ',')]
        outputs: Option<Vec<u32>>,
    },
}

#[derive(clap::Args)]
struct RunArgs {
    /// JSON run manifest; flags override its fields.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Engines, comma separated (mcs, fsds, tpem, ut).
    #[arg(long, value_delimiter = ',')]
    engines: Option<Vec<EngineKind>>,
    /// FSDS sample count.
    #[arg(long)]
    kn: Option<usize>,
    /// MCS iterations.
    #[arg(long)]
    iterations: Option<usize>,
    /// Fixed FSDS bandwidth, p.u.
    #[arg(long)]
    lambda: Option<f64>,
    /// Output nodes, comma separated.
    #[arg(long, value_delimiter = ',')]
    outputs: Option<Vec<u32>>,
    /// Run the engines concurrently.
    #[arg(long)]
    parallel_engines: bool,
}

impl RunArgs {
    fn manifest(self) -> Result<RunManifest, CliError> {
        let mut m = match &self.manifest {
            Some(path) => RunManifest::from_file(path)?,
            None => RunManifest {
                scenario: PathBuf::new(),
                engines: Vec::new(),
                seed: None,
                out: PathBuf::new(),
                outputs: None,
                parallel_engines: false,
            },
        };
        if let Some(s) = self.scenario {
            m.scenario = s;
        }
        if let Some(o) = self.out {
            m.out = o;
        }
        if m.scenario.as_os_str().is_empty() || m.out.as_os_str().is_empty() {
            return Err(CliError::Manifest("--scenario and --out are required without a manifest".into()));
        }
        m.seed = self.seed.or(m.seed);
        m.outputs = self.outputs.or(m.outputs);
        m.parallel_engines |= self.parallel_engines;
        if let Some(kinds) = self.engines {
            m.engines = kinds
                .into_iter()
                .map(|k| m.engines.iter().find(|e| e.kind == k).cloned().unwrap_or_else(|| EngineSpec::new(k)))
                .collect();
        }
        if m.engines.is_empty() {
            m.engines = [EngineKind::Mcs, EngineKind::Fsds, EngineKind::Tpem, EngineKind::Ut]
                .into_iter()
                .map(EngineSpec::new)
                .collect();
        }
        for e in &mut m.engines {
            match e.kind {
                EngineKind::Mcs => e.iterations = self.iterations.or(e.iterations),
                EngineKind::Fsds => {
                    e.k_n = self.kn.or(e.k_n);
                    e.lambda = self.lambda.or(e.lambda);
                }
                _ => {}
            }
        }
        Ok(m)
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    pdpf_cli::configure_threads(cli.threads)?;
    match cli.command {
        Command::Run(args) => {
            let summary = pdpf_cli::run(&args.manifest()?)?;
            for r in &summary.results {
                eprintln!("{:>5}: {:.3} s, {} evaluations", r.engine, r.wall_seconds, r.evaluations);
            }
            eprintln!("wrote {} files to {}", summary.files.len(), summary.out.display());
        }
        Command::Solve { feeder, reference } => {
            pdpf_cli::solve(&feeder, reference, &SolverConfig::default(), std::io::stdout().lock())?;
        }
        Command::Tune { scenario, seed, out, outputs } => {
            let reports = pdpf_cli::tune(&scenario, outputs.as_deref(), seed, &out)?;
            println!("{}", serde_json::to_string_pretty(&reports).expect("reports serialize"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        // A closed stdout (`pdpf solve f | head`) is not a failure.
        Err(CliError::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::FAILURE
        }
    }
}
