use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nearcomm::config::{resolve_workers, ExperimentConfig, ModeName, StyleName, WORKERS_ENV};
use nearcomm::document::{self, EnergyReportDoc, InstanceDocument, WitnessDocument};
use nearcomm::pipeline::{self, RoundingReportDoc, SearchDoc};
use nearcomm::scan::{self, ScanOptions};
use nearcomm::{Error, Result};
use nearcomm_core::algebra::{decompose_instance, DecomposeConfig};
use nearcomm_core::graph::generate_regular_graph;
use nearcomm_core::instance::{generate_commuting_instance, perturb_instance};
use nearcomm_core::rounding::{sweep_round, RoundingConfig};
use nearcomm_core::witness::{build_witness, np_verify, Verdict, WitnessConfig};
use nearcomm_core::seed;

#[derive(Parser)]
#[command(name = "nearcomm", version, about = "Near-commuting two-local QSAT toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a commuting instance on a random regular graph.
    Gen {
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 4)]
        d: usize,
        #[arg(long, default_value_t = 3)]
        degree: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Plant no common kernel.
        #[arg(long)]
        unsatisfiable: bool,
        #[arg(long, value_enum, default_value_t = StyleName::Auto)]
        style: StyleName,
        #[arg(long)]
        out: PathBuf,
    },
    /// Perturb an instance to a target noncommutativity.
    Perturb {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Round an instance to a commuting one.
    Round {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeName::Structural)]
        mode: ModeName,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-vertex rounding report.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Build a witness for a commuting instance.
    Witness {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the search report and energy.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Check a witness against an instance. Exit 0 accepts, 1 rejects.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        witness: PathBuf,
        #[arg(long)]
        r: f64,
    },
    /// Run every stage for one (delta, seed) and write all artifacts.
    Pipeline {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        /// Ensemble index.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Sweep deltas and seeds and write a CSV table.
    Scan {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Comma-separated deltas.
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
        /// Seeds per delta.
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long, env = WORKERS_ENV)]
        workers: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Record wall-clock time per row.
        #[arg(long)]
        runtime: bool,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeName>,
    #[arg(long, value_enum)]
    style: Option<StyleName>,
    #[arg(long)]
    oracle_cap: Option<usize>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut c: ExperimentConfig = match &self.config {
            Some(p) => document::read(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(n, d, degree, master_seed, r, mode, style, oracle_cap);
        Ok(c)
    }
}

fn read_instance(path: &std::path::Path) -> Result<nearcomm_core::instance::QsatInstance> {
    document::read::<InstanceDocument>(path)?.to_instance()
}

fn stage<T>(name: &'static str, r: nearcomm_core::Result<T>) -> Result<T> {
    r.map_err(|source| Error::Stage { stage: name, source })
}

fn run(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Gen { n, d, degree, seed: s, unsatisfiable, style, out } => {
            let graph = stage("generate", generate_regular_graph(n, degree, seed::derive(s, "graph", 0)))?;
            let h = stage("generate", generate_commuting_instance(graph, d, seed::derive(s, "instance", 0), !unsatisfiable, style.into()))?;
            document::write(&out, &InstanceDocument::from_instance(&h, None))?;
        }
        Command::Perturb { instance, delta, seed: s, out } => {
            let h = read_instance(&instance)?;
            let mut p = stage("perturb", perturb_instance(&h, delta, s))?;
            p.metadata.delta_declared = delta;
            document::write(&out, &InstanceDocument::from_instance(&p, None))?;
        }
        Command::Round { instance, mode, tol, out, report } => {
            let h = read_instance(&instance)?;
            let cfg = RoundingConfig { mode: mode.into(), tol, ..RoundingConfig::default() };
            let (hhat, sweep) = stage("round", sweep_round(&h, &cfg))?;
            document::write(&out, &InstanceDocument::from_instance(&hhat, None))?;
            if let Some(p) = report {
                document::write(&p, &RoundingReportDoc::new(&sweep, ""))?;
            }
            println!("epsilon_report {}", sweep.epsilon_report);
        }
        Command::Witness { instance, out, seed: s, report } => {
            let h = read_instance(&instance)?;
            let dcfg = DecomposeConfig { seed: seed::derive(s, "decompose", 0), ..DecomposeConfig::default() };
            let structures = stage("decompose", decompose_instance(&h, &dcfg))?;
            let wcfg = WitnessConfig { seed: seed::derive(s, "witness", 0), ..WitnessConfig::default() };
            let (w, search) = stage("witness", build_witness(&h, &structures, &wcfg))?;
            document::write(&out, &WitnessDocument::from_witness(&w, None))?;
            if let Some(p) = report {
                document::write(&p, &SearchDoc::from(&search))?;
            }
            println!("search_energy {}", search.energy);
        }
        Command::Verify { instance, witness, r } => {
            let h = read_instance(&instance)?;
            let w = document::read::<WitnessDocument>(&witness)?.to_witness()?;
            let verdict = np_verify(&w, &h, r);
            return Ok(match verdict {
                Verdict::Accept { report, threshold } => {
                    println!("ACCEPT energy {} < threshold {}", report.total, threshold);
                    println!("{}", document::render(&EnergyReportDoc::from(&report)).trim_end());
                    0
                }
                Verdict::Reject { reason, report } => {
                    println!("REJECT {reason}");
                    if let Some(report) = report {
                        println!("{}", document::render(&EnergyReportDoc::from(&report)).trim_end());
                    }
                    1
                }
            });
        }
        Command::Pipeline { exp, delta, seed: s, out_dir } => {
            let cfg = exp.resolve()?;
            let outcome = pipeline::run_pipeline(&cfg, delta, s, &out_dir)?;
            let sum = &outcome.summary;
            match &sum.error {
                Some(e) => eprintln!("stage {} failed: {e}", sum.failed_stage.as_deref().unwrap_or("?")),
                None => println!("accepted {} within_bound {}", sum.accepted, sum.within_bound),
            }
            return Ok(outcome.exit_code as u8);
        }
        Command::Scan { exp, deltas, seeds, workers, out, runtime } => {
            let mut cfg = exp.resolve()?;
            if let Some(d) = deltas {
                cfg.deltas = d;
            }
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            let opts = ScanOptions { workers: resolve_workers(workers), record_runtime: runtime };
            let rows = scan::run_scan(&cfg, opts)?;
            let file = std::fs::File::create(&out).map_err(|source| Error::Io { path: out.clone(), source })?;
            scan::write_csv(&rows, std::io::BufWriter::new(file))?;
            let failures = rows.iter().filter(|r| r.error.is_some()).count();
            println!("{} rows, {failures} failed", rows.len());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
