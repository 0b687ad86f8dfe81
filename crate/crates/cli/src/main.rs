//! `rdnet`: layering, redundancy reports, disentanglement checks and merging
//! of feed-forward networks stored as topology files.
//!
//! Exit codes: 0 success, 2 input error, 3 structural error, 4 failed
//! disentanglement check under `--require-rdnet`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use rdnet_core::format::{self, FormatError, FORMAT_VERSION};
use rdnet_core::merge::{self, EdgeInit, MergeConfig, MergeError, MergeResult, TieBreak};
use rdnet_core::redundancy::{
    self, DisentanglementReport, RedundancyError, RedundancyObjectiveConfig, XiWeights,
};
use rdnet_core::{
    ActivationDataset, Estimator, EstimatorConfig, GraphError, Layering, NeuralGraph, TaskId, TaskPartition, TaskSet, Var, VertexId,
};
use rdnet_core::info::{Backend, Source};

const EXIT_INPUT: u8 = 2;
const EXIT_STRUCTURE: u8 = 3;
const EXIT_CONDITIONS: u8 = 4;

#[derive(Parser)]
#[command(name = "rdnet", version, about = "Redundancy analysis and merging of feed-forward networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the layers of a topology and write them as layers.json.
    Layers {
        topology: PathBuf,
        /// Directory for layers.json.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Compute the full redundancy report of a joint topology.
    Report(AnalysisArgs),
    /// Evaluate only the disentanglement conditions.
    Check(AnalysisArgs),
    /// Merge single-task networks into one redundancy-disentangled network.
    Merge(MergeArgs),
}

#[derive(Args)]
struct EstimatorArgs {
    /// JSON config with `estimator`, `objective` and `merge` sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Estimator backend: exact-discrete, binned-plugin or kl-upper-bound.
    #[arg(long)]
    estimator: Option<Backend>,
    /// Quantile bins for the binned backend.
    #[arg(long)]
    bins: Option<usize>,
    /// Tolerance of the disentanglement check, in bits.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Exit with status 4 when the disentanglement check fails.
    #[arg(long)]
    require_rdnet: bool,
}

#[derive(Args)]
struct AnalysisArgs {
    topology: PathBuf,
    /// Dataset manifest.
    #[arg(long)]
    data: PathBuf,
    /// Also write the JSON output into this directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[command(flatten)]
    common: EstimatorArgs,
}

#[derive(Args)]
struct MergeArgs {
    /// Two or more single-task topologies.
    #[arg(required = true, num_args = 2..)]
    topologies: Vec<PathBuf>,
    /// Dataset manifest covering every internal neuron and label.
    #[arg(long)]
    data: PathBuf,
    /// Greedy threshold on I(T'; Y^off), in bits.
    #[arg(long)]
    alpha: Option<f64>,
    /// Seed for edge initialization.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[command(flatten)]
    common: EstimatorArgs,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    /// Estimator for report and check; also the merge default.
    estimator: Option<EstimatorConfig>,
    objective: ObjectiveSection,
    merge: MergeSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ObjectiveSection {
    xi: XiWeights,
    epsilon: Option<f64>,
    estimator: Option<EstimatorConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct MergeSection {
    alpha: Option<f64>,
    /// Accepted for completeness; `--seed` always wins.
    rng_seed: Option<u64>,
    estimator: Option<EstimatorConfig>,
    auto_exact: Option<bool>,
    new_edge_init: Option<EdgeInit>,
    tie_break: Option<TieBreak>,
    epsilon: Option<f64>,
}

/// An error carrying its exit status.
#[derive(Debug)]
struct Exit(u8);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "exit {}", self.0)
    }
}

impl std::error::Error for Exit {}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Layers { topology, out_dir } => cmd_layers(&topology, &out_dir),
        Command::Report(args) => cmd_report(&args),
        Command::Check(args) => cmd_check(&args),
        Command::Merge(args) => cmd_merge(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            if let Some(Exit(code)) = err.downcast_ref::<Exit>() {
                return ExitCode::from(*code);
            }
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let structural = err.chain().any(|cause| {
        if let Some(e) = cause.downcast_ref::<GraphError>() {
            return e.is_structural();
        }
        if let Some(e) = cause.downcast_ref::<FormatError>() {
            return e.is_structural();
        }
        if let Some(MergeError::Graph(e)) = cause.downcast_ref::<MergeError>() {
            return e.is_structural();
        }
        if let Some(RedundancyError::Graph(e)) = cause.downcast_ref::<RedundancyError>() {
            return e.is_structural();
        }
        false
    });
    if structural {
        EXIT_STRUCTURE
    } else {
        EXIT_INPUT
    }
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile> {
    let Some(path) = path else {
        return Ok(ConfigFile::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn apply_flags(mut est: EstimatorConfig, args: &EstimatorArgs) -> EstimatorConfig {
    if let Some(b) = args.estimator {
        est.backend = b;
    }
    if let Some(bins) = args.bins {
        est.bins = bins;
    }
    est
}

/// Writes `contents` to `dir/name` through a temporary file and a rename.
fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("writing {}", path.display()))?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(&path).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn ids(set: &BTreeSet<VertexId>) -> String {
    set.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

#[derive(Serialize)]
struct LayersFile<'a> {
    format_version: u32,
    depth: usize,
    layers: &'a [BTreeSet<VertexId>],
    sinks: &'a BTreeSet<VertexId>,
}

fn cmd_layers(topology: &Path, out_dir: &Path) -> Result<()> {
    let g = format::read_topology(topology)?;
    let layering = g.construct_layers()?;
    let mut out = String::new();
    for (i, layer) in layering.layers().iter().enumerate() {
        writeln!(out, "G{i}: {}", ids(layer))?;
    }
    writeln!(out, "G{}: {}", layering.depth() + 1, ids(layering.sinks()))?;
    print!("{out}");
    let file = LayersFile {
        format_version: FORMAT_VERSION,
        depth: layering.depth(),
        layers: layering.layers(),
        sinks: layering.sinks(),
    };
    let path = write_atomic(out_dir, "layers.json", &to_json(&file)?)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

/// Graph, layering, dataset and objective config shared by report and check.
struct Analysis {
    graph: NeuralGraph,
    layering: Layering,
    data: ActivationDataset,
    cfg: RedundancyObjectiveConfig,
}

fn load_analysis(args: &AnalysisArgs) -> Result<Analysis> {
    let file = load_config(args.common.config.as_deref())?;
    let graph = format::read_topology(&args.topology)?;
    let layering = graph.construct_layers()?;
    let data = format::read_dataset(&args.data)?;

    let mut required: BTreeSet<Var> = layering.layers()[1..]
        .iter()
        .flatten()
        .cloned()
        .map(Var::Neuron)
        .collect();
    required.extend(graph.tasks().iter().cloned().map(Var::Label));
    require_columns(&data, required)?;

    let estimator = file.objective.estimator.or(file.estimator).unwrap_or_default();
    let cfg = RedundancyObjectiveConfig {
        xi: file.objective.xi,
        epsilon: args.common.epsilon.or(file.objective.epsilon).unwrap_or(0.01),
        estimator: apply_flags(estimator, &args.common),
    };
    cfg.validate()?;
    Ok(Analysis {
        graph,
        layering,
        data,
        cfg,
    })
}

fn require_columns(data: &ActivationDataset, required: impl IntoIterator<Item = Var>) -> Result<()> {
    let missing: Vec<String> = required
        .into_iter()
        .filter(|v| !data.contains(v))
        .map(|v| v.to_string())
        .collect();
    if !missing.is_empty() {
        bail!("dataset lacks columns: {}", missing.join(", "));
    }
    Ok(())
}

fn tasks(g: &NeuralGraph) -> Vec<TaskId> {
    g.tasks().iter().cloned().collect()
}

fn conditions_text(report: &DisentanglementReport) -> String {
    let mut out = String::new();
    for l in &report.layers {
        let _ = writeln!(
            out,
            "layer {} {} vs {}: c1={:.6} c2={:.6} c3={:.6}",
            l.layer, l.tau_a, l.tau_b, l.c1.value, l.c2.value, l.c3.value
        );
    }
    let _ = writeln!(
        out,
        "check {} at epsilon {}",
        if report.passed { "passed" } else { "failed" },
        report.epsilon
    );
    out
}

fn enforce(report: &DisentanglementReport, require: bool) -> Result<()> {
    if !report.passed {
        log::warn!("disentanglement check failed at epsilon {}", report.epsilon);
        if require {
            return Err(Exit(EXIT_CONDITIONS).into());
        }
    }
    Ok(())
}

fn cmd_report(args: &AnalysisArgs) -> Result<()> {
    let a = load_analysis(args)?;
    let est = Estimator::new(Source::Data(&a.data), &a.cfg.estimator)?;
    let report = redundancy::objective_values(&a.graph, &a.layering, &tasks(&a.graph), &est, &a.cfg)?;
    let json = to_json(&report)?;
    print!("{json}");
    if let Some(dir) = &args.out_dir {
        write_atomic(dir, "report.json", &json)?;
    }
    enforce(&report.conditions, args.common.require_rdnet)
}

fn cmd_check(args: &AnalysisArgs) -> Result<()> {
    let a = load_analysis(args)?;
    let est = Estimator::new(Source::Data(&a.data), &a.cfg.estimator)?;
    let report = redundancy::disentanglement_check(&a.graph, &a.layering, &tasks(&a.graph), &est, a.cfg.epsilon)?;
    print!("{}", conditions_text(&report));
    if let Some(dir) = &args.out_dir {
        write_atomic(dir, "conditions.json", &to_json(&report)?)?;
    }
    enforce(&report, args.common.require_rdnet)
}

fn merge_config(args: &MergeArgs) -> Result<MergeConfig> {
    let file = load_config(args.common.config.as_deref())?;
    let m = file.merge;
    let Some(alpha) = args.alpha.or(m.alpha) else {
        bail!("alpha is required: pass --alpha or set merge.alpha in the config");
    };
    if m.rng_seed.is_some_and(|s| s != args.seed) {
        log::info!("--seed {} overrides merge.rng_seed from the config", args.seed);
    }
    let mut cfg = MergeConfig::new(alpha, args.seed);
    if let Some(est) = m.estimator.or(file.estimator) {
        cfg.estimator = est;
    }
    cfg.estimator = apply_flags(cfg.estimator, &args.common);
    if let Some(v) = m.auto_exact {
        cfg.auto_exact = v;
    }
    if let Some(v) = m.new_edge_init {
        cfg.new_edge_init = v;
    }
    if let Some(v) = m.tie_break {
        cfg.tie_break = v;
    }
    if let Some(v) = args.common.epsilon.or(m.epsilon) {
        cfg.epsilon = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct PartitionFile<'a> {
    format_version: u32,
    estimator: &'a EstimatorConfig,
    #[serde(flatten)]
    partition: &'a TaskPartition,
    /// Block of every merged vertex, sources and sinks included.
    assignment: Vec<Assigned<'a>>,
}

#[derive(Serialize)]
struct Assigned<'a> {
    id: &'a VertexId,
    tasks: &'a TaskSet,
}

fn cmd_merge(args: &MergeArgs) -> Result<()> {
    let cfg = merge_config(args)?;
    let nets = args
        .topologies
        .iter()
        .map(|p| format::read_topology(p))
        .collect::<Result<Vec<_>, _>>()?;
    let data = format::read_dataset(&args.data)?;
    let refs: Vec<&NeuralGraph> = nets.iter().collect();
    let result = if refs.len() == 2 {
        merge::merge_two(refs[0], refs[1], &data, &cfg)?
    } else {
        merge::merge_k(&refs, &data, &cfg)?
    };

    let merged = format::topology_json(&result.merged);
    write_atomic(&args.out_dir, "merged.json", &merged)?;
    let partition = PartitionFile {
        format_version: FORMAT_VERSION,
        estimator: &result.estimator,
        partition: &result.partition,
        assignment: result
            .assignment
            .iter()
            .map(|(id, tasks)| Assigned { id, tasks })
            .collect(),
    };
    write_atomic(&args.out_dir, "partition.json", &to_json(&partition)?)?;
    write_atomic(&args.out_dir, "trace.txt", &result.trace_text())?;
    write_atomic(&args.out_dir, "conditions.json", &to_json(&result.conditions)?)?;
    print!("{}", summary(&result));
    enforce(&result.conditions, args.common.require_rdnet)
}

fn summary(result: &MergeResult) -> String {
    let mut out = String::new();
    for layer in &result.partition.layers {
        let sizes: Vec<String> = layer
            .blocks
            .iter()
            .map(|(tau, vs)| format!("{tau}={}", vs.len()))
            .collect();
        let _ = writeln!(out, "layer {}: {}", layer.layer, sizes.join(" "));
    }
    let _ = writeln!(out, "dropped: {}", result.dropped.len());
    out.push_str(&conditions_text(&result.conditions));
    out
}
