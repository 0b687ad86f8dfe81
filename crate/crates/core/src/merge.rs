//! Greedy construction of a redundancy-disentangled joint network from
//! single-task feed-forward networks.
//!
//! Every layer of the merged network is split into blocks T'^τ, one per
//! nonempty task subset τ. An edge from a τ1 block at layer i-1 to a τ2 block
//! at layer i exists exactly when τ2 ⊆ τ1; between allowed blocks the
//! connection is full. Sources belong to the block of the tasks whose
//! networks read them.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::LN_2;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphBuilder, GraphError, Layering, NeuralGraph, TaskId, TaskPartition, TaskSet, VertexId, VertexKind};
use crate::info::{ActivationDataset, Backend, Estimator, EstimatorConfig, InfoError, Source, Var};
use crate::redundancy::{self, DisentanglementReport, RedundancyError};

/// Largest per-column alphabet for which a discrete dataset switches the
/// merge estimator from the KL bound to exact counting.
pub const AUTO_EXACT_MAX_ALPHABET: usize = 16;

#[derive(Debug, Error)]
pub enum MergeError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Info(#[from] InfoError),
    #[error(transparent)]
    Redundancy(#[from] RedundancyError),
    #[error("invalid merge config: {0}")]
    InvalidConfig(String),
    #[error("need at least two networks, got {0}")]
    TooFewNetworks(usize),
    #[error("network {index} has {count} tasks, expected exactly one")]
    TaskCount { index: usize, count: usize },
    #[error("task {0} appears in more than one network")]
    DuplicateTask(TaskId),
    #[error("network for task {0} has no internal layer")]
    DepthZero(TaskId),
    #[error("network for task {task} is not simple feed-forward: {detail}")]
    NotFeedForward { task: TaskId, detail: String },
    #[error("vertex {0} appears in more than one network")]
    IdCollision(VertexId),
    #[error("dataset lacks columns: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", "))]
    MissingColumns(Vec<Var>),
    /// Every neuron on the way to this task's sink was claimed by both
    /// exclusive searches and dropped; alpha is too large for the data.
    #[error("no path to the sink of task {0} survives the merge; try a smaller alpha")]
    SinkCutOff(TaskId),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EdgeInit {
    Zero,
    /// Uniform on [-scale, scale].
    UniformNearZero { scale: f64 },
}

/// Rule used to break ties in every argmin of the greedy search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Lowest `(network, layer_hint, index)`.
    #[default]
    LowestId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    /// Threshold on I(T'^τ; Y^off), in bits.
    pub alpha: f64,
    pub rng_seed: u64,
    #[serde(default = "default_merge_estimator")]
    pub estimator: EstimatorConfig,
    /// Use exact counting instead of the KL bound when every neuron column is
    /// discrete with a small alphabet.
    #[serde(default = "default_true")]
    pub auto_exact: bool,
    #[serde(default = "default_edge_init")]
    pub new_edge_init: EdgeInit,
    #[serde(default)]
    pub tie_break: TieBreak,
    /// Tolerance of the disentanglement check run on the result, in bits.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_merge_estimator() -> EstimatorConfig {
    EstimatorConfig::kl()
}

fn default_true() -> bool {
    true
}

fn default_edge_init() -> EdgeInit {
    EdgeInit::Zero
}

fn default_epsilon() -> f64 {
    0.01
}

impl MergeConfig {
    pub fn new(alpha: f64, rng_seed: u64) -> Self {
        MergeConfig {
            alpha,
            rng_seed,
            estimator: default_merge_estimator(),
            auto_exact: true,
            new_edge_init: EdgeInit::Zero,
            tie_break: TieBreak::LowestId,
            epsilon: default_epsilon(),
        }
    }

    pub fn with_estimator(mut self, estimator: EstimatorConfig) -> Self {
        self.estimator = estimator;
        self
    }

    pub fn validate(&self) -> Result<(), MergeError> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(MergeError::InvalidConfig(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(self.epsilon > 0.0) {
            return Err(MergeError::InvalidConfig(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if let EdgeInit::UniformNearZero { scale } = self.new_edge_init {
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(MergeError::InvalidConfig(format!("edge init scale must be positive, got {scale}")));
            }
        }
        self.estimator.validate()?;
        Ok(())
    }

    /// Estimator actually used on `data`.
    pub fn resolved_estimator(&self, data: &ActivationDataset) -> EstimatorConfig {
        if self.auto_exact
            && self.estimator.backend == Backend::KlUpperBound
            && data.is_discrete(AUTO_EXACT_MAX_ALPHABET)
        {
            log::info!("dataset is discrete; merging with the exact-discrete backend");
            return EstimatorConfig {
                backend: Backend::ExactDiscrete,
                ..self.estimator.clone()
            };
        }
        self.estimator.clone()
    }
}

/// One greedy decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub layer: usize,
    pub target: TaskSet,
    pub candidate: VertexId,
    /// I(S ∪ {candidate}; Y^off) in bits.
    pub set_mi: f64,
    pub accepted: bool,
}

impl fmt::Display for TraceEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "layer={} target={} candidate={} set_mi={:.9} {}",
            self.layer,
            self.target,
            self.candidate,
            self.set_mi,
            if self.accepted { "accept" } else { "reject" }
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreedySelection {
    pub selected: BTreeSet<VertexId>,
    /// I(selected; Y^off) in bits; zero for the empty selection.
    pub final_mi: f64,
    pub steps: Vec<TraceEntry>,
}

/// Greedy search for a subset of `candidates` carrying at most `alpha` bits
/// about the joint off-task labels.
pub fn greedy_exclusive_set(
    candidates: &[VertexId],
    off_task: &[TaskId],
    data: &ActivationDataset,
    cfg: &MergeConfig,
) -> Result<GreedySelection, MergeError> {
    cfg.validate()?;
    if candidates.is_empty() || off_task.is_empty() {
        return Err(InfoError::EmptyVariableSet.into());
    }
    let est = Estimator::new(Source::Data(data), &cfg.resolved_estimator(data))?;
    let pool: BTreeSet<VertexId> = candidates.iter().cloned().collect();
    let vars: Vec<Var> = pool
        .iter()
        .cloned()
        .map(Var::Neuron)
        .chain(off_task.iter().cloned().map(Var::Label))
        .collect();
    let missing: Vec<Var> = vars.into_iter().filter(|v| !est.contains(v)).collect();
    if !missing.is_empty() {
        return Err(MergeError::MissingColumns(missing));
    }
    greedy(&est, &pool, off_task, cfg.alpha, 0, &TaskSet::default())
}

fn set_mi_bits(est: &Estimator, set: &BTreeSet<VertexId>, extra: &VertexId, labels: &[Var]) -> Result<f64, InfoError> {
    let vars: Vec<Var> = set
        .iter()
        .chain(std::iter::once(extra))
        .cloned()
        .map(Var::Neuron)
        .collect();
    Ok(est.mi_nats(&vars, labels)?.max(0.0) / LN_2)
}

/// Check-before-add: a candidate joins only if the set stays within `alpha`.
fn greedy(
    est: &Estimator,
    pool: &BTreeSet<VertexId>,
    off_task: &[TaskId],
    alpha: f64,
    layer: usize,
    target: &TaskSet,
) -> Result<GreedySelection, MergeError> {
    let labels: Vec<Var> = off_task.iter().cloned().map(Var::Label).collect();
    let mut selected = BTreeSet::new();
    let mut remaining = pool.clone();
    let mut steps = Vec::new();
    let mut final_mi = 0.0;
    while !remaining.is_empty() {
        // Iteration is in id order and only a strictly smaller value replaces
        // the incumbent, so ties resolve to the lowest id.
        let mut best: Option<(f64, &VertexId)> = None;
        for c in &remaining {
            let mi = set_mi_bits(est, &selected, c, &labels)?;
            if best.is_none_or(|(b, _)| mi < b) {
                best = Some((mi, c));
            }
        }
        let (mi, c) = best.unwrap();
        let c = c.clone();
        let accepted = mi <= alpha;
        steps.push(TraceEntry {
            layer,
            target: target.clone(),
            candidate: c.clone(),
            set_mi: mi,
            accepted,
        });
        if !accepted {
            break;
        }
        remaining.remove(&c);
        selected.insert(c);
        final_mi = mi;
    }
    Ok(GreedySelection {
        selected,
        final_mi,
        steps,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerAlignment {
    /// (layer of A, layer of B), from layer 1 up to the shallower depth.
    pub pairs: Vec<(usize, usize)>,
    /// Unpaired layers of A.
    pub tail_a: Vec<usize>,
    /// Unpaired layers of B.
    pub tail_b: Vec<usize>,
}

/// Pairs layers from the first one.
pub fn align_layers(a: &Layering, b: &Layering) -> LayerAlignment {
    let m = a.depth().min(b.depth());
    LayerAlignment {
        pairs: (1..=m).map(|i| (i, i)).collect(),
        tail_a: (m + 1..=a.depth()).collect(),
        tail_b: (m + 1..=b.depth()).collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergeResult {
    pub merged: NeuralGraph,
    /// Blocks of the merged graph by sink reachability.
    pub partition: TaskPartition,
    /// Task set of the block each vertex of `merged` was placed in; sources
    /// carry the tasks of the networks reading them, tail neurons and sinks
    /// their own task.
    pub assignment: BTreeMap<VertexId, TaskSet>,
    /// Original internal neurons absent from `merged`.
    pub dropped: BTreeSet<VertexId>,
    pub trace: Vec<TraceEntry>,
    pub conditions: DisentanglementReport,
    /// Estimator used for the greedy search and the check.
    pub estimator: EstimatorConfig,
}

impl MergeResult {
    /// One line per greedy decision.
    pub fn trace_text(&self) -> String {
        self.trace.iter().map(|e| format!("{e}\n")).collect()
    }
}

/// A validated single-task input network.
struct Net<'a> {
    task: TaskId,
    graph: &'a NeuralGraph,
    layering: Layering,
}

fn prepare<'a>(nets: &[&'a NeuralGraph], data: &ActivationDataset) -> Result<Vec<Net<'a>>, MergeError> {
    if nets.len() < 2 {
        return Err(MergeError::TooFewNetworks(nets.len()));
    }
    let mut out: Vec<Net> = Vec::with_capacity(nets.len());
    let mut owner: BTreeMap<VertexId, usize> = BTreeMap::new();
    let mut missing = Vec::new();
    for (index, g) in nets.iter().enumerate() {
        if g.tasks().len() != 1 {
            return Err(MergeError::TaskCount {
                index,
                count: g.tasks().len(),
            });
        }
        let task = g.tasks().iter().next().unwrap().clone();
        if out.iter().any(|n| n.task == task) {
            return Err(MergeError::DuplicateTask(task));
        }
        let layering = g.construct_layers()?;
        if layering.depth() == 0 {
            return Err(MergeError::DepthZero(task));
        }
        check_feed_forward(g, &layering, &task)?;
        for v in g.vertices().filter(|v| v.kind != VertexKind::Source) {
            if owner.insert(v.id.clone(), index).is_some() {
                return Err(MergeError::IdCollision(v.id.clone()));
            }
            if v.kind == VertexKind::Internal && data.neuron(&v.id).is_none() {
                missing.push(Var::Neuron(v.id.clone()));
            }
        }
        if data.label(&task).is_none() {
            missing.push(Var::Label(task.clone()));
        }
        out.push(Net {
            task,
            graph: g,
            layering,
        });
    }
    for n in &out {
        for s in n.graph.sources() {
            if owner.contains_key(&s) {
                return Err(MergeError::IdCollision(s));
            }
        }
    }
    if !missing.is_empty() {
        return Err(MergeError::MissingColumns(missing));
    }
    out.sort_by(|a, b| a.task.cmp(&b.task));
    Ok(out)
}

/// Every vertex sits in exactly one layer and every edge joins consecutive layers.
fn check_feed_forward(g: &NeuralGraph, layering: &Layering, task: &TaskId) -> Result<(), MergeError> {
    let mut level: BTreeMap<&VertexId, usize> = BTreeMap::new();
    for (i, layer) in layering.layers().iter().enumerate() {
        for v in layer {
            if level.insert(v, i).is_some() {
                return Err(MergeError::NotFeedForward {
                    task: task.clone(),
                    detail: format!("{v} feeds layers beyond the next one"),
                });
            }
        }
    }
    let sink_level = layering.depth() + 1;
    for s in layering.sinks() {
        level.insert(s, sink_level);
    }
    for (from, to, _) in g.edges() {
        let (a, b) = (level[from], level[to]);
        if b != a + 1 {
            return Err(MergeError::NotFeedForward {
                task: task.clone(),
                detail: format!("edge {from} -> {to} joins layer {a} to layer {b}"),
            });
        }
    }
    Ok(())
}

type Blocks = BTreeMap<TaskSet, BTreeSet<VertexId>>;

fn layer_pool(nets: &[Net], i: usize) -> BTreeSet<VertexId> {
    nets.iter()
        .flat_map(|n| n.layering.layer(i).iter().cloned())
        .collect()
}

fn min_depth(nets: &[Net]) -> usize {
    nets.iter().map(|n| n.layering.depth()).min().unwrap()
}

fn tasks_of(nets: &[Net]) -> Vec<TaskId> {
    nets.iter().map(|n| n.task.clone()).collect()
}

/// Literal two-network merge: both exclusive searches run on the full pool,
/// their overlap is dropped and the remainder is shared.
pub fn merge_two(
    net_a: &NeuralGraph,
    net_b: &NeuralGraph,
    data: &ActivationDataset,
    cfg: &MergeConfig,
) -> Result<MergeResult, MergeError> {
    cfg.validate()?;
    let nets = prepare(&[net_a, net_b], data)?;
    let est_cfg = cfg.resolved_estimator(data);
    let est = Estimator::new(Source::Data(data), &est_cfg)?;
    let (ta, tb) = (nets[0].task.clone(), nets[1].task.clone());
    let (sa, sb) = (TaskSet::single(ta.clone()), TaskSet::single(tb.clone()));
    let mut blocks = Vec::new();
    let mut trace = Vec::new();
    let mut dropped = BTreeSet::new();
    for i in 1..=min_depth(&nets) {
        let pool = layer_pool(&nets, i);
        let a = greedy(&est, &pool, std::slice::from_ref(&tb), cfg.alpha, i, &sa)?;
        let b = greedy(&est, &pool, std::slice::from_ref(&ta), cfg.alpha, i, &sb)?;
        trace.extend(a.steps);
        trace.extend(b.steps);
        let overlap: BTreeSet<VertexId> = a.selected.intersection(&b.selected).cloned().collect();
        let shared: BTreeSet<VertexId> = pool
            .iter()
            .filter(|v| !a.selected.contains(*v) && !b.selected.contains(*v))
            .cloned()
            .collect();
        let mut layer = Blocks::new();
        layer.insert(sa.clone(), &a.selected - &overlap);
        layer.insert(sb.clone(), &b.selected - &overlap);
        layer.insert(TaskSet::new([ta.clone(), tb.clone()]), shared);
        blocks.push(layer);
        dropped.extend(overlap);
    }
    finish(&nets, blocks, dropped, trace, &est, est_cfg, cfg)
}

/// Merge of K ≥ 2 networks over the subset lattice.
///
/// Subsets are visited by increasing size. All subsets of one size search the
/// same pool, against the joint labels of the tasks outside the subset;
/// neurons claimed by two subsets of that size are dropped, and the claimed
/// neurons leave the pool. The full task set takes what remains. With two
/// networks this is exactly [`merge_two`].
pub fn merge_k(
    nets: &[&NeuralGraph],
    data: &ActivationDataset,
    cfg: &MergeConfig,
) -> Result<MergeResult, MergeError> {
    cfg.validate()?;
    let nets = prepare(nets, data)?;
    let est_cfg = cfg.resolved_estimator(data);
    let est = Estimator::new(Source::Data(data), &est_cfg)?;
    let tasks = tasks_of(&nets);
    let all = TaskSet::new(tasks.iter().cloned());
    let subsets = redundancy::nonempty_subsets(&tasks);
    let mut blocks = Vec::new();
    let mut trace = Vec::new();
    let mut dropped = BTreeSet::new();
    for i in 1..=min_depth(&nets) {
        let mut pool = layer_pool(&nets, i);
        let mut layer = Blocks::new();
        for size in 1..tasks.len() {
            let mut claims: Vec<(TaskSet, BTreeSet<VertexId>)> = Vec::new();
            for tau in subsets.iter().filter(|s| s.len() == size) {
                let off: Vec<TaskId> = tasks.iter().filter(|t| !tau.contains(t)).cloned().collect();
                let sel = greedy(&est, &pool, &off, cfg.alpha, i, tau)?;
                trace.extend(sel.steps);
                claims.push((tau.clone(), sel.selected));
            }
            let mut count: BTreeMap<&VertexId, usize> = BTreeMap::new();
            for (_, s) in &claims {
                for v in s {
                    *count.entry(v).or_default() += 1;
                }
            }
            let contested: BTreeSet<VertexId> = count
                .into_iter()
                .filter(|(_, c)| *c > 1)
                .map(|(v, _)| v.clone())
                .collect();
            for (tau, s) in claims {
                for v in &s {
                    pool.remove(v);
                }
                layer.insert(tau, &s - &contested);
            }
            dropped.extend(contested);
        }
        layer.insert(all.clone(), pool);
        blocks.push(layer);
    }
    finish(&nets, blocks, dropped, trace, &est, est_cfg, cfg)
}

fn finish(
    nets: &[Net],
    blocks: Vec<Blocks>,
    mut dropped: BTreeSet<VertexId>,
    trace: Vec<TraceEntry>,
    est: &Estimator,
    est_cfg: EstimatorConfig,
    cfg: &MergeConfig,
) -> Result<MergeResult, MergeError> {
    let (merged, pruned, mut assignment) = assemble(nets, &blocks, cfg)?;
    assignment.retain(|v, _| merged.contains(v));
    if !pruned.is_empty() {
        log::info!("{} neurons lost every legal path and were removed", pruned.len());
    }
    dropped.extend(pruned);
    let layering = merged.construct_layers()?;
    let partition = merged.partition(&layering)?;
    let tasks = tasks_of(nets);
    let conditions = redundancy::conditions_for_partition(&partition, &tasks, est, cfg.epsilon)?;
    Ok(MergeResult {
        merged,
        partition: TaskPartition {
            dropped: dropped.clone(),
            ..partition
        },
        assignment,
        dropped,
        trace,
        conditions,
        estimator: est_cfg,
    })
}

/// Builds the merged graph from per-layer blocks (index 0 is layer 1).
#[allow(clippy::type_complexity)]
fn assemble(
    nets: &[Net],
    blocks: &[Blocks],
    cfg: &MergeConfig,
) -> Result<(NeuralGraph, BTreeSet<VertexId>, BTreeMap<VertexId, TaskSet>), MergeError> {
    let m = blocks.len();
    let original = |u: &VertexId, v: &VertexId| nets.iter().find_map(|n| n.graph.weight(u, v));

    // Layer-0 blocks: each source belongs to the tasks of the networks reading it.
    let mut sources: BTreeMap<VertexId, BTreeSet<TaskId>> = BTreeMap::new();
    for n in nets {
        for s in n.graph.sources() {
            sources.entry(s).or_default().insert(n.task.clone());
        }
    }
    let mut layer0 = Blocks::new();
    for (s, ts) in &sources {
        layer0
            .entry(TaskSet::new(ts.iter().cloned()))
            .or_default()
            .insert(s.clone());
    }

    let mut edges: BTreeMap<(VertexId, VertexId), Option<f32>> = BTreeMap::new();
    let mut connect = |u: &VertexId, v: &VertexId| {
        edges.insert((u.clone(), v.clone()), original(u, v));
    };
    let feeding = |prev: &Blocks, pred: &dyn Fn(&TaskSet) -> bool| -> Vec<VertexId> {
        prev.iter()
            .filter(|(tau, _)| pred(tau))
            .flat_map(|(_, vs)| vs.iter().cloned())
            .collect()
    };

    for i in 0..m {
        let prev = if i == 0 { &layer0 } else { &blocks[i - 1] };
        for (tau2, vs) in &blocks[i] {
            let from = feeding(prev, &|tau1: &TaskSet| tau2.is_subset(tau1));
            for v in vs {
                for u in &from {
                    connect(u, v);
                }
            }
        }
    }
    let last = if m == 0 { &layer0 } else { &blocks[m - 1] };
    let mut tail_vertices = BTreeSet::new();
    for n in nets {
        let from = feeding(last, &|tau1: &TaskSet| tau1.contains(&n.task));
        let sink = n.graph.sink_of(&n.task)?;
        let depth = n.layering.depth();
        if depth == m {
            for u in &from {
                connect(u, sink);
            }
            continue;
        }
        // The deeper network keeps its tail, fed by every block serving its task.
        for v in n.layering.layer(m + 1) {
            for u in &from {
                connect(u, v);
            }
        }
        for i in m + 1..=depth {
            for u in n.layering.layer(i) {
                tail_vertices.insert(u.clone());
                for v in n.graph.successors(u) {
                    connect(u, v);
                }
            }
        }
    }

    let mut assignment: BTreeMap<VertexId, TaskSet> = BTreeMap::new();
    for layer in std::iter::once(&layer0).chain(blocks) {
        for (tau, vs) in layer {
            for v in vs {
                assignment.insert(v.clone(), tau.clone());
            }
        }
    }
    for n in nets {
        let own = TaskSet::single(n.task.clone());
        for v in n.layering.layers().iter().skip(m + 1).flatten() {
            assignment.insert(v.clone(), own.clone());
        }
        assignment.insert(n.graph.sink_of(&n.task)?.clone(), own);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut b = GraphBuilder::new();
    for s in sources.keys() {
        b.source(s.clone());
    }
    for v in blocks.iter().flat_map(|l| l.values().flatten()).chain(&tail_vertices) {
        b.internal(v.clone());
    }
    for n in nets {
        b.sink(n.graph.sink_of(&n.task)?.clone(), n.task.clone());
    }
    for ((u, v), w) in edges {
        let w = match (w, cfg.new_edge_init) {
            (Some(w), _) => w,
            (None, EdgeInit::Zero) => 0.0,
            (None, EdgeInit::UniformNearZero { scale }) => rng.random_range(-scale..=scale) as f32,
        };
        b.edge(u, v, w);
    }
    let (g, pruned) = b.build_pruned().map_err(|e| match e {
        GraphError::UnreachableSink(s) => match nets.iter().find(|n| n.graph.sink_of(&n.task).ok() == Some(&s)) {
            Some(n) => MergeError::SinkCutOff(n.task.clone()),
            None => GraphError::UnreachableSink(s).into(),
        },
        e => e.into(),
    })?;
    Ok((g, pruned, assignment))
}
