//! generate → perturb → round → decompose → witness → verify for one
//! `(delta, seed)` pair.

use std::path::{Path, PathBuf};

use nearcomm_core::algebra::{decompose_instance, DecomposeConfig, VertexStructure};
use nearcomm_core::graph::generate_regular_graph;
use nearcomm_core::instance::{generate_commuting_instance, perturb_instance, QsatInstance};
use nearcomm_core::rounding::{sweep_round, RoundingMode, SweepReport};
use nearcomm_core::seed;
use nearcomm_core::witness::{build_witness, evaluate_energy, np_verify, EnergyReport, SearchReport, SearchStrategy, TensorNetworkWitness, Verdict, WitnessConfig};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::document::{self, EnergyReportDoc, InstanceDocument, WitnessDocument, FORMAT_VERSION};
use crate::error::{Error, Result};

/// Slack added to `ε M` when checking the witness energy on `H`.
pub const ENERGY_SLACK: f64 = 1e-6;

pub const INSTANCE_FILE: &str = "instance.json";
pub const ROUNDED_FILE: &str = "rounded.json";
pub const ROUNDING_FILE: &str = "rounding.json";
pub const WITNESS_FILE: &str = "witness.json";
pub const ENERGY_FILE: &str = "energy.json";
pub const SUMMARY_FILE: &str = "summary.json";

/// Stage seeds for ensemble member `index`. The commuting seed instance
/// depends only on the index, so every delta perturbs the same instances.
pub struct StageSeeds {
    pub graph: u64,
    pub instance: u64,
    pub perturb: u64,
    pub decompose: u64,
    pub witness: u64,
}

impl StageSeeds {
    pub fn new(master: u64, index: u64) -> Self {
        Self {
            graph: seed::derive(master, "graph", index),
            instance: seed::derive(master, "instance", index),
            perturb: seed::derive(master, "perturb", index),
            decompose: seed::derive(master, "decompose", index),
            witness: seed::derive(master, "witness", index),
        }
    }
}

/// Everything a run produces, kept in memory.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub delta: f64,
    pub seed_index: u64,
    pub seed_instance: QsatInstance,
    /// The perturbed instance `H`.
    pub original: QsatInstance,
    /// The rounded commuting instance `Ĥ`.
    pub rounded: QsatInstance,
    pub sweep: SweepReport,
    pub structures: Vec<VertexStructure>,
    pub witness: TensorNetworkWitness,
    pub search: SearchReport,
    pub energy_original: EnergyReport,
    pub energy_rounded: EnergyReport,
    pub verdict: Verdict,
    /// `ε_report M + slack`.
    pub bound: f64,
}

impl RunArtifacts {
    pub fn within_bound(&self) -> bool {
        self.energy_original.total <= self.bound
    }

    pub fn success(&self) -> bool {
        self.within_bound() && self.verdict.accepted()
    }
}

fn stage<T>(name: &'static str, r: nearcomm_core::Result<T>) -> Result<T> {
    r.map_err(|source| Error::Stage { stage: name, source })
}

/// Callback receiving each intermediate result as soon as it exists.
pub trait Sink {
    fn instance(&mut self, _h: &QsatInstance) -> Result<()> {
        Ok(())
    }
    fn rounded(&mut self, _hhat: &QsatInstance, _sweep: &SweepReport) -> Result<()> {
        Ok(())
    }
    fn witness(&mut self, _w: &TensorNetworkWitness) -> Result<()> {
        Ok(())
    }
}

impl Sink for () {}

pub fn run_in_memory(cfg: &ExperimentConfig, delta: f64, index: u64) -> Result<RunArtifacts> {
    run_with_sink(cfg, delta, index, &mut ())
}

pub fn run_with_sink(cfg: &ExperimentConfig, delta: f64, index: u64, sink: &mut dyn Sink) -> Result<RunArtifacts> {
    cfg.validate()?;
    let seeds = StageSeeds::new(cfg.master_seed, index);
    let graph = stage("generate", generate_regular_graph(cfg.n, cfg.degree, seeds.graph))?;
    let seed_instance = stage("generate", generate_commuting_instance(graph, cfg.d, seeds.instance, true, cfg.style.into()))?;
    let mut original = stage("perturb", perturb_instance(&seed_instance, delta, seeds.perturb))?;
    original.metadata.delta_declared = delta;
    sink.instance(&original)?;
    let (rounded, sweep) = stage("round", sweep_round(&original, &cfg.rounding()))?;
    sink.rounded(&rounded, &sweep)?;
    let decompose = DecomposeConfig { cluster_gap: cfg.cluster_gap, seed: seeds.decompose, ..DecomposeConfig::default() };
    let structures = stage("decompose", decompose_instance(&rounded, &decompose))?;
    let wcfg = WitnessConfig { seed: seeds.witness, ..WitnessConfig::default() };
    let (witness, search) = stage("witness", build_witness(&rounded, &structures, &wcfg))?;
    sink.witness(&witness)?;
    let energy_original = stage("energy", evaluate_energy(&witness, &original))?;
    let energy_rounded = stage("energy", evaluate_energy(&witness, &rounded))?;
    let verdict = np_verify(&witness, &original, cfg.r);
    let bound = sweep.epsilon_report * original.m() as f64 + ENERGY_SLACK;
    Ok(RunArtifacts {
        delta,
        seed_index: index,
        seed_instance,
        original,
        rounded,
        sweep,
        structures,
        witness,
        search,
        energy_original,
        energy_rounded,
        verdict,
        bound,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct VertexReportDoc {
    pub vertex: usize,
    pub edges: Vec<usize>,
    pub mode: &'static str,
    pub fell_back: bool,
    pub displacement: f64,
    pub group_displacement: Vec<f64>,
    pub term_displacement: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub norm_preserving: bool,
    pub norm_deviation: f64,
    pub orthogonality_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundingReportDoc {
    pub version: u32,
    pub config_hash: String,
    pub epsilon_report: f64,
    pub max_displacement: f64,
    pub max_commutator: f64,
    pub max_commutator_op: f64,
    pub term_distance: Vec<f64>,
    pub vertices: Vec<VertexReportDoc>,
}

impl RoundingReportDoc {
    pub fn new(sweep: &SweepReport, config_hash: &str) -> Self {
        Self {
            version: FORMAT_VERSION,
            config_hash: config_hash.into(),
            epsilon_report: sweep.epsilon_report,
            max_displacement: sweep.max_displacement,
            max_commutator: sweep.max_commutator,
            max_commutator_op: sweep.max_commutator_op,
            term_distance: sweep.term_distance.clone(),
            vertices: sweep
                .vertices
                .iter()
                .map(|r| VertexReportDoc {
                    vertex: r.vertex,
                    edges: r.edges.clone(),
                    mode: match r.mode {
                        RoundingMode::Structural => "structural",
                        RoundingMode::Penalty => "penalty",
                    },
                    fell_back: r.fell_back,
                    displacement: r.displacement,
                    group_displacement: r.group_displacement.clone(),
                    term_displacement: r.term_displacement.clone(),
                    residual: r.residual,
                    iterations: r.iterations,
                    norm_preserving: r.norm_preserving,
                    norm_deviation: r.norm_deviation,
                    orthogonality_residual: r.orthogonality_residual,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchDoc {
    pub strategy: String,
    pub combinations: u64,
    pub evaluated: u64,
    pub energy: f64,
}

impl From<&SearchReport> for SearchDoc {
    fn from(s: &SearchReport) -> Self {
        let strategy = match &s.strategy {
            SearchStrategy::Exhaustive => "exhaustive".to_string(),
            SearchStrategy::Annealing { steps, restarts, t_start, t_end, seed } => {
                format!("annealing(steps={steps}, restarts={restarts}, t_start={t_start}, t_end={t_end}, geometric, seed={seed})")
            }
        };
        Self { strategy, combinations: s.combinations, evaluated: s.evaluated, energy: s.energy }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyFileDoc {
    pub version: u32,
    pub config_hash: String,
    pub original: EnergyReportDoc,
    pub rounded: EnergyReportDoc,
    pub search: SearchDoc,
    pub epsilon_report: f64,
    /// `ε_report M + slack`.
    pub bound: f64,
    pub within_bound: bool,
    pub r: f64,
    /// `r M`.
    pub threshold: f64,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reject_reason: Option<String>,
    /// Whether `r > 2 ε_report`.
    pub r_exceeds_twice_epsilon: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub tool: &'static str,
    pub documents: u32,
}

pub const VERSIONS: Versions = Versions { tool: env!("CARGO_PKG_VERSION"), documents: FORMAT_VERSION };

#[derive(Debug, Clone, Serialize)]
pub struct SummaryDoc {
    pub version: u32,
    pub config_hash: String,
    pub versions: Versions,
    pub config: ExperimentConfig,
    pub delta: f64,
    pub seed_index: u64,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Artifacts written before a failure; they do not describe a finished run.
    pub stale: Vec<String>,
    pub accepted: bool,
    pub within_bound: bool,
    pub exit_code: i32,
}

/// Writes each artifact as soon as its stage finishes.
struct FileSink<'a> {
    dir: &'a Path,
    hash: &'a str,
    written: Vec<String>,
}

impl FileSink<'_> {
    fn put<T: Serialize>(&mut self, name: &str, doc: &T) -> Result<()> {
        document::write(&self.dir.join(name), doc)?;
        self.written.push(name.to_string());
        Ok(())
    }
}

impl Sink for FileSink<'_> {
    fn instance(&mut self, h: &QsatInstance) -> Result<()> {
        let doc = InstanceDocument::from_instance(h, Some(self.hash));
        self.put(INSTANCE_FILE, &doc)
    }
    fn rounded(&mut self, hhat: &QsatInstance, sweep: &SweepReport) -> Result<()> {
        let doc = InstanceDocument::from_instance(hhat, Some(self.hash));
        self.put(ROUNDED_FILE, &doc)?;
        let report = RoundingReportDoc::new(sweep, self.hash);
        self.put(ROUNDING_FILE, &report)
    }
    fn witness(&mut self, w: &TensorNetworkWitness) -> Result<()> {
        let doc = WitnessDocument::from_witness(w, Some(self.hash));
        self.put(WITNESS_FILE, &doc)
    }
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub exit_code: i32,
    pub summary: SummaryDoc,
    pub artifacts: Option<RunArtifacts>,
    pub files: Vec<PathBuf>,
}

/// Runs one configuration and writes its artifacts to `dir`. Stage failures
/// are recorded in the summary (exit code 2) rather than returned.
pub fn run_pipeline(cfg: &ExperimentConfig, delta: f64, index: u64, dir: &Path) -> Result<PipelineOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(dir).map_err(crate::error::io(dir))?;
    let hash = cfg.hash();
    let mut sink = FileSink { dir, hash: &hash, written: Vec::new() };
    let result = run_with_sink(cfg, delta, index, &mut sink);
    let mut summary = SummaryDoc {
        version: FORMAT_VERSION,
        config_hash: hash.clone(),
        versions: VERSIONS,
        config: cfg.clone(),
        delta,
        seed_index: index,
        status: "ok",
        failed_stage: None,
        error: None,
        stale: Vec::new(),
        accepted: false,
        within_bound: false,
        exit_code: 0,
    };
    let artifacts = match result {
        Ok(run) => {
            let doc = EnergyFileDoc {
                version: FORMAT_VERSION,
                config_hash: hash.clone(),
                original: (&run.energy_original).into(),
                rounded: (&run.energy_rounded).into(),
                search: (&run.search).into(),
                epsilon_report: run.sweep.epsilon_report,
                bound: run.bound,
                within_bound: run.within_bound(),
                r: cfg.r,
                threshold: cfg.r * run.original.m() as f64,
                accepted: run.verdict.accepted(),
                reject_reason: match &run.verdict {
                    Verdict::Reject { reason, .. } => Some(reason.to_string()),
                    Verdict::Accept { .. } => None,
                },
                r_exceeds_twice_epsilon: cfg.r > 2.0 * run.sweep.epsilon_report,
            };
            sink.put(ENERGY_FILE, &doc)?;
            summary.accepted = run.verdict.accepted();
            summary.within_bound = run.within_bound();
            summary.exit_code = if run.success() { 0 } else { 1 };
            Some(run)
        }
        Err(Error::Stage { stage, source }) => {
            summary.status = "failed";
            summary.failed_stage = Some(stage.to_string());
            summary.error = Some(source.to_string());
            summary.stale = sink.written.clone();
            summary.exit_code = 2;
            None
        }
        Err(e) => return Err(e),
    };
    sink.put(SUMMARY_FILE, &summary)?;
    let files = sink.written.iter().map(|f| dir.join(f)).collect();
    Ok(PipelineOutcome { exit_code: summary.exit_code, summary, artifacts, files })
}
