//! Joint neural graph: weighted DAG of source, internal and sink vertices,
//! together with layer construction and task partitioning.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Identifier of a task; one sink per task.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskId(pub String);

impl TaskId {
    pub fn new(name: impl Into<String>) -> Self {
        TaskId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TaskId {
    fn from(s: &str) -> Self {
        TaskId(s.to_string())
    }
}

/// Provenance-carrying neuron identifier.
///
/// Ordering is lexicographic over `(network, layer_hint, index)`, which is
/// also the deterministic tie-break used by the greedy merge.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "(String, u32, u32)", into = "(String, u32, u32)")]
pub struct VertexId {
    pub network: String,
    pub layer_hint: u32,
    pub index: u32,
}

impl VertexId {
    pub fn new(network: impl Into<String>, layer_hint: u32, index: u32) -> Self {
        VertexId {
            network: network.into(),
            layer_hint,
            index,
        }
    }
}

impl From<(String, u32, u32)> for VertexId {
    fn from((network, layer_hint, index): (String, u32, u32)) -> Self {
        VertexId {
            network,
            layer_hint,
            index,
        }
    }
}

impl From<VertexId> for (String, u32, u32) {
    fn from(v: VertexId) -> Self {
        (v.network, v.layer_hint, v.index)
    }
}

impl fmt::Display for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.network, self.layer_hint, self.index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Source,
    Internal,
    Sink,
}

impl fmt::Display for VertexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VertexKind::Source => "source",
            VertexKind::Internal => "internal",
            VertexKind::Sink => "sink",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vertex {
    pub id: VertexId,
    pub kind: VertexKind,
    /// Set for sinks only.
    pub task: Option<TaskId>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("unknown vertex {0}")]
    UnknownVertex(VertexId),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("duplicate vertex {0}")]
    DuplicateVertex(VertexId),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(VertexId, VertexId),
    #[error("sink {0} has no task")]
    SinkWithoutTask(VertexId),
    #[error("non-sink vertex {0} carries a task")]
    TaskOnNonSink(VertexId),
    #[error("task {0} has {1} sinks, expected exactly one")]
    SinkCount(TaskId, usize),
    #[error("self-loop on {0}")]
    SelfLoop(VertexId),
    #[error("cycle detected: {}", join(.0, " -> "))]
    Cycle(Vec<VertexId>),
    #[error("vertices on no source-to-sink path: {}", join(.0, ", "))]
    Dangling(Vec<VertexId>),
    #[error("vertex {id} declared {declared} but has in-degree {in_degree}, out-degree {out_degree}")]
    KindMismatch {
        id: VertexId,
        declared: VertexKind,
        in_degree: usize,
        out_degree: usize,
    },
    #[error("graph has no source vertices")]
    NoSources,
    #[error("graph has no sink vertices")]
    NoSinks,
    #[error("sink {0} is not reached by the layering")]
    UnreachableSink(VertexId),
    #[error("internal vertex {0} is connected to no sink")]
    Unassigned(VertexId),
    #[error("layering is inconsistent with the graph: {0}")]
    InconsistentLayering(String),
}

impl GraphError {
    /// Shape errors (cycles, dangling parts, unreachable sinks) as opposed to
    /// referential problems in the input description.
    pub fn is_structural(&self) -> bool {
        matches!(
            self,
            GraphError::SelfLoop(_)
                | GraphError::Cycle(_)
                | GraphError::Dangling(_)
                | GraphError::KindMismatch { .. }
                | GraphError::NoSources
                | GraphError::NoSinks
                | GraphError::UnreachableSink(_)
                | GraphError::Unassigned(_)
                | GraphError::InconsistentLayering(_)
        )
    }
}

fn join<T: fmt::Display>(items: &[T], sep: &str) -> String {
    items
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

/// Accumulates vertices and edges; `build` validates all graph invariants.
#[derive(Clone, Debug, Default)]
pub struct GraphBuilder {
    vertices: Vec<Vertex>,
    edges: Vec<(VertexId, VertexId, f32)>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn source(&mut self, id: VertexId) -> &mut Self {
        self.vertices.push(Vertex {
            id,
            kind: VertexKind::Source,
            task: None,
        });
        self
    }

    pub fn internal(&mut self, id: VertexId) -> &mut Self {
        self.vertices.push(Vertex {
            id,
            kind: VertexKind::Internal,
            task: None,
        });
        self
    }

    pub fn sink(&mut self, id: VertexId, task: TaskId) -> &mut Self {
        self.vertices.push(Vertex {
            id,
            kind: VertexKind::Sink,
            task: Some(task),
        });
        self
    }

    pub fn vertex(&mut self, vertex: Vertex) -> &mut Self {
        self.vertices.push(vertex);
        self
    }

    pub fn edge(&mut self, from: VertexId, to: VertexId, weight: f32) -> &mut Self {
        self.edges.push((from, to, weight));
        self
    }

    pub fn build(&self) -> Result<NeuralGraph, GraphError> {
        let g = self.assemble()?;
        g.validate()?;
        Ok(g)
    }

    /// Like [`build`](Self::build), but removes vertices that lie on no
    /// source-to-sink path instead of rejecting them. Returns the removed
    /// internal vertices. A sink that no source reaches is still an error.
    pub fn build_pruned(&self) -> Result<(NeuralGraph, BTreeSet<VertexId>), GraphError> {
        let mut g = self.assemble()?;
        g.check_acyclic()?;
        let keep = g.on_source_sink_path();
        let removed: Vec<VertexId> = g
            .vertices
            .keys()
            .filter(|id| !keep.contains(*id))
            .cloned()
            .collect();
        if let Some(sink) = removed.iter().find(|id| g.vertices[*id].kind == VertexKind::Sink) {
            return Err(GraphError::UnreachableSink(sink.clone()));
        }
        let mut removed_internal = BTreeSet::new();
        for id in removed {
            if g.vertices[&id].kind == VertexKind::Internal {
                removed_internal.insert(id.clone());
            }
            g.remove_vertex(&id);
        }
        g.validate()?;
        Ok((g, removed_internal))
    }

    fn assemble(&self) -> Result<NeuralGraph, GraphError> {
        let mut g = NeuralGraph::default();
        for v in &self.vertices {
            match (v.kind, &v.task) {
                (VertexKind::Sink, None) => return Err(GraphError::SinkWithoutTask(v.id.clone())),
                (VertexKind::Source | VertexKind::Internal, Some(_)) => {
                    return Err(GraphError::TaskOnNonSink(v.id.clone()))
                }
                _ => {}
            }
            if g.vertices.insert(v.id.clone(), v.clone()).is_some() {
                return Err(GraphError::DuplicateVertex(v.id.clone()));
            }
            g.succ.insert(v.id.clone(), BTreeSet::new());
            g.pred.insert(v.id.clone(), BTreeSet::new());
        }
        for (from, to, w) in &self.edges {
            for end in [from, to] {
                if !g.vertices.contains_key(end) {
                    return Err(GraphError::UnknownVertex(end.clone()));
                }
            }
            if from == to {
                return Err(GraphError::SelfLoop(from.clone()));
            }
            if g.edges.insert((from.clone(), to.clone()), *w).is_some() {
                return Err(GraphError::DuplicateEdge(from.clone(), to.clone()));
            }
            g.succ.get_mut(from).unwrap().insert(to.clone());
            g.pred.get_mut(to).unwrap().insert(from.clone());
        }
        let mut sinks_per_task: BTreeMap<TaskId, usize> = BTreeMap::new();
        for v in g.vertices.values() {
            if let Some(t) = &v.task {
                *sinks_per_task.entry(t.clone()).or_default() += 1;
            }
        }
        for (t, n) in sinks_per_task {
            if n != 1 {
                return Err(GraphError::SinkCount(t, n));
            }
            g.tasks.insert(t);
        }
        Ok(g)
    }
}

/// Simple acyclic directed graph of neurons with weighted edges.
///
/// Immutable once built; every query is read-only.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NeuralGraph {
    vertices: BTreeMap<VertexId, Vertex>,
    edges: BTreeMap<(VertexId, VertexId), f32>,
    succ: BTreeMap<VertexId, BTreeSet<VertexId>>,
    pred: BTreeMap<VertexId, BTreeSet<VertexId>>,
    tasks: BTreeSet<TaskId>,
}

impl NeuralGraph {
    pub fn builder() -> GraphBuilder {
        GraphBuilder::new()
    }

    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> {
        self.vertices.values()
    }

    pub fn vertex(&self, id: &VertexId) -> Option<&Vertex> {
        self.vertices.get(id)
    }

    pub fn contains(&self, id: &VertexId) -> bool {
        self.vertices.contains_key(id)
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Edges in `(from, to)` order.
    pub fn edges(&self) -> impl Iterator<Item = (&VertexId, &VertexId, f32)> {
        self.edges.iter().map(|((a, b), w)| (a, b, *w))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn weight(&self, from: &VertexId, to: &VertexId) -> Option<f32> {
        self.edges.get(&(from.clone(), to.clone())).copied()
    }

    pub fn tasks(&self) -> &BTreeSet<TaskId> {
        &self.tasks
    }

    pub fn successors(&self, id: &VertexId) -> impl Iterator<Item = &VertexId> {
        self.succ.get(id).into_iter().flatten()
    }

    pub fn predecessors(&self, id: &VertexId) -> impl Iterator<Item = &VertexId> {
        self.pred.get(id).into_iter().flatten()
    }

    pub fn sources(&self) -> BTreeSet<VertexId> {
        self.ids_of_kind(VertexKind::Source)
    }

    pub fn sinks(&self) -> BTreeSet<VertexId> {
        self.ids_of_kind(VertexKind::Sink)
    }

    pub fn internal_vertices(&self) -> BTreeSet<VertexId> {
        self.ids_of_kind(VertexKind::Internal)
    }

    fn ids_of_kind(&self, kind: VertexKind) -> BTreeSet<VertexId> {
        self.vertices
            .values()
            .filter(|v| v.kind == kind)
            .map(|v| v.id.clone())
            .collect()
    }

    pub fn sink_of(&self, task: &TaskId) -> Result<&VertexId, GraphError> {
        self.vertices
            .values()
            .find(|v| v.task.as_ref() == Some(task))
            .map(|v| &v.id)
            .ok_or_else(|| GraphError::UnknownTask(task.clone()))
    }

    fn require(&self, id: &VertexId) -> Result<(), GraphError> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(GraphError::UnknownVertex(id.clone()))
        }
    }

    fn reach(&self, start: &VertexId, forward: bool) -> BTreeSet<VertexId> {
        let adj = if forward { &self.succ } else { &self.pred };
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([start.clone()]);
        while let Some(v) = queue.pop_front() {
            for n in adj.get(&v).into_iter().flatten() {
                if seen.insert(n.clone()) {
                    queue.push_back(n.clone());
                }
            }
        }
        seen
    }

    /// Vertices reachable from `id` (excluding `id`).
    pub fn descendants(&self, id: &VertexId) -> Result<BTreeSet<VertexId>, GraphError> {
        self.require(id)?;
        Ok(self.reach(id, true))
    }

    /// Vertices from which `id` is reachable (excluding `id`).
    pub fn ancestors(&self, id: &VertexId) -> Result<BTreeSet<VertexId>, GraphError> {
        self.require(id)?;
        Ok(self.reach(id, false))
    }

    /// True iff a directed path exists between the two vertices in either direction.
    pub fn connected(&self, v1: &VertexId, v2: &VertexId) -> Result<bool, GraphError> {
        self.require(v1)?;
        self.require(v2)?;
        Ok(self.reach(v1, true).contains(v2) || self.reach(v2, true).contains(v1))
    }

    /// Internal vertices connected with the sink of `task`.
    pub fn task_members(&self, task: &TaskId) -> Result<BTreeSet<VertexId>, GraphError> {
        let sink = self.sink_of(task)?;
        Ok(self
            .reach(sink, false)
            .into_iter()
            .filter(|v| self.vertices[v].kind == VertexKind::Internal)
            .collect())
    }

    /// The task-connected subgraph G^t: the sink of `task` plus every source and
    /// internal vertex with a path to it.
    pub fn task_connected_subgraph(&self, task: &TaskId) -> Result<NeuralGraph, GraphError> {
        let sink = self.sink_of(task)?.clone();
        let mut keep = self.reach(&sink, false);
        keep.insert(sink);
        let mut b = GraphBuilder::new();
        for id in &keep {
            b.vertex(self.vertices[id].clone());
        }
        for ((from, to), w) in &self.edges {
            if keep.contains(from) && keep.contains(to) {
                b.edge(from.clone(), to.clone(), *w);
            }
        }
        b.build()
    }

    /// Layers Γ_0..Γ_N. Γ_0 is the source set; each following layer carries
    /// forward the vertices of the previous layer that feed a sink and adds the
    /// internal out-neighbours of the vertices first expanded in the previous
    /// layer. Construction stops once those out-neighbours are all sinks.
    pub fn construct_layers(&self) -> Result<Layering, GraphError> {
        let sources = self.sources();
        let sinks = self.sinks();
        if sources.is_empty() {
            return Err(GraphError::NoSources);
        }
        if sinks.is_empty() {
            return Err(GraphError::NoSinks);
        }
        let mut layers = vec![sources.clone()];
        let mut fresh = sources;
        let mut reached_sinks = BTreeSet::new();
        loop {
            let mut next = BTreeSet::new();
            for v in &fresh {
                for n in &self.succ[v] {
                    if sinks.contains(n) {
                        reached_sinks.insert(n.clone());
                    } else {
                        next.insert(n.clone());
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            // A longest path visits every vertex at most once.
            if layers.len() > self.vertices.len() {
                return Err(GraphError::Cycle(Vec::new()));
            }
            let current = layers.last().unwrap();
            let mut layer: BTreeSet<VertexId> = current
                .iter()
                .filter(|v| self.succ[*v].iter().any(|n| sinks.contains(n)))
                .cloned()
                .collect();
            layer.extend(next.iter().cloned());
            layers.push(layer);
            fresh = next;
        }
        for v in layers.iter().flatten() {
            reached_sinks.extend(self.succ[v].iter().filter(|n| sinks.contains(*n)).cloned());
        }
        if let Some(missing) = sinks.difference(&reached_sinks).next() {
            return Err(GraphError::UnreachableSink(missing.clone()));
        }
        Ok(Layering { layers, sinks })
    }

    /// Assigns every internal vertex of every layer to the block T'^τ with
    /// τ = { t : vertex ∈ G^t }.
    pub fn partition(&self, layering: &Layering) -> Result<TaskPartition, GraphError> {
        layering.check_against(self)?;
        let members: Vec<(TaskId, BTreeSet<VertexId>)> = self
            .tasks
            .iter()
            .map(|t| Ok((t.clone(), self.task_members(t)?)))
            .collect::<Result<_, GraphError>>()?;
        let mut layers = Vec::with_capacity(layering.depth());
        for i in 1..=layering.depth() {
            let mut blocks: BTreeMap<TaskSet, BTreeSet<VertexId>> = BTreeMap::new();
            for v in layering.layer(i) {
                if self.vertices[v].kind != VertexKind::Internal {
                    continue;
                }
                let tau: TaskSet = members
                    .iter()
                    .filter(|(_, m)| m.contains(v))
                    .map(|(t, _)| t.clone())
                    .collect();
                if tau.is_empty() {
                    return Err(GraphError::Unassigned(v.clone()));
                }
                blocks.entry(tau).or_default().insert(v.clone());
            }
            layers.push(LayerPartition { layer: i, blocks });
        }
        Ok(TaskPartition {
            layers,
            dropped: BTreeSet::new(),
        })
    }

    fn validate(&self) -> Result<(), GraphError> {
        if !self.vertices.values().any(|v| v.kind == VertexKind::Source) {
            return Err(GraphError::NoSources);
        }
        if self.tasks.is_empty() {
            return Err(GraphError::NoSinks);
        }
        self.check_acyclic()?;
        let on_path = self.on_source_sink_path();
        let dangling: Vec<VertexId> = self
            .vertices
            .keys()
            .filter(|id| !on_path.contains(*id))
            .cloned()
            .collect();
        if !dangling.is_empty() {
            return Err(GraphError::Dangling(dangling));
        }
        for v in self.vertices.values() {
            let (i, o) = (self.pred[&v.id].len(), self.succ[&v.id].len());
            let ok = match v.kind {
                VertexKind::Source => i == 0,
                VertexKind::Sink => o == 0,
                VertexKind::Internal => i > 0 && o > 0,
            };
            if !ok {
                return Err(GraphError::KindMismatch {
                    id: v.id.clone(),
                    declared: v.kind,
                    in_degree: i,
                    out_degree: o,
                });
            }
        }
        Ok(())
    }

    fn on_source_sink_path(&self) -> BTreeSet<VertexId> {
        let mut from_sources = BTreeSet::new();
        let mut to_sinks = BTreeSet::new();
        for v in self.vertices.values() {
            match v.kind {
                VertexKind::Source => {
                    from_sources.insert(v.id.clone());
                    from_sources.extend(self.reach(&v.id, true));
                }
                VertexKind::Sink => {
                    to_sinks.insert(v.id.clone());
                    to_sinks.extend(self.reach(&v.id, false));
                }
                VertexKind::Internal => {}
            }
        }
        from_sources.intersection(&to_sinks).cloned().collect()
    }

    fn check_acyclic(&self) -> Result<(), GraphError> {
        let mut indeg: BTreeMap<&VertexId, usize> =
            self.pred.iter().map(|(k, p)| (k, p.len())).collect();
        let mut queue: VecDeque<&VertexId> =
            indeg.iter().filter(|(_, d)| **d == 0).map(|(k, _)| *k).collect();
        let mut visited = 0;
        while let Some(v) = queue.pop_front() {
            visited += 1;
            for n in &self.succ[v] {
                let d = indeg.get_mut(n).unwrap();
                *d -= 1;
                if *d == 0 {
                    queue.push_back(n);
                }
            }
        }
        if visited == self.vertices.len() {
            return Ok(());
        }
        // Every leftover vertex has a leftover predecessor; walk backwards until a repeat.
        let leftover: BTreeSet<&VertexId> =
            indeg.iter().filter(|(_, d)| **d > 0).map(|(k, _)| *k).collect();
        let mut walk: Vec<&VertexId> = vec![leftover.iter().next().unwrap()];
        loop {
            let cur = *walk.last().unwrap();
            let prev = self.pred[cur]
                .iter()
                .find(|p| leftover.contains(p))
                .unwrap();
            if let Some(pos) = walk.iter().position(|v| *v == prev) {
                let mut cycle: Vec<VertexId> = walk[pos..].iter().rev().map(|v| (*v).clone()).collect();
                cycle.push(cycle[0].clone());
                return Err(GraphError::Cycle(cycle));
            }
            walk.push(prev);
        }
    }

    fn remove_vertex(&mut self, id: &VertexId) {
        self.vertices.remove(id);
        for s in self.succ.remove(id).unwrap_or_default() {
            self.pred.get_mut(&s).map(|p| p.remove(id));
            self.edges.remove(&(id.clone(), s));
        }
        for p in self.pred.remove(id).unwrap_or_default() {
            self.succ.get_mut(&p).map(|s| s.remove(id));
            self.edges.remove(&(p, id.clone()));
        }
    }
}

/// Ordered vertex layers Γ_0..Γ_N plus the sink set (Γ_{N+1}).
///
/// A vertex carried forward appears in several consecutive layers as the same
/// vertex, never as a clone.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layering {
    layers: Vec<BTreeSet<VertexId>>,
    sinks: BTreeSet<VertexId>,
}

impl Layering {
    pub fn from_layers(layers: Vec<BTreeSet<VertexId>>, sinks: BTreeSet<VertexId>) -> Self {
        Layering { layers, sinks }
    }

    /// Number of internal layers N.
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    /// Γ_i for `i` in `0..=depth()`; empty beyond.
    pub fn layer(&self, i: usize) -> &BTreeSet<VertexId> {
        static EMPTY: BTreeSet<VertexId> = BTreeSet::new();
        self.layers.get(i).unwrap_or(&EMPTY)
    }

    pub fn layers(&self) -> &[BTreeSet<VertexId>] {
        &self.layers
    }

    pub fn sinks(&self) -> &BTreeSet<VertexId> {
        &self.sinks
    }

    /// Indices of every layer containing `v`.
    pub fn membership(&self, v: &VertexId) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, l)| l.contains(v))
            .map(|(i, _)| i)
            .collect()
    }

    pub(crate) fn check_against(&self, g: &NeuralGraph) -> Result<(), GraphError> {
        if self.layers.is_empty() {
            return Err(GraphError::InconsistentLayering("no layers".into()));
        }
        for v in self.layers.iter().flatten().chain(self.sinks.iter()) {
            if !g.contains(v) {
                return Err(GraphError::InconsistentLayering(format!(
                    "vertex {v} is not in the graph"
                )));
            }
        }
        if self.layers[0] != g.sources() {
            return Err(GraphError::InconsistentLayering(
                "layer 0 differs from the source set".into(),
            ));
        }
        Ok(())
    }
}

/// Subset τ of tasks labelling a partition block.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaskSet(BTreeSet<TaskId>);

impl TaskSet {
    pub fn new(tasks: impl IntoIterator<Item = TaskId>) -> Self {
        TaskSet(tasks.into_iter().collect())
    }

    pub fn single(task: TaskId) -> Self {
        TaskSet(BTreeSet::from([task]))
    }

    pub fn contains(&self, t: &TaskId) -> bool {
        self.0.contains(t)
    }

    pub fn is_subset(&self, other: &TaskSet) -> bool {
        self.0.is_subset(&other.0)
    }

    pub fn union(&self, other: &TaskSet) -> TaskSet {
        TaskSet(self.0.union(&other.0).cloned().collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &TaskId> {
        self.0.iter()
    }
}

impl FromIterator<TaskId> for TaskSet {
    fn from_iter<I: IntoIterator<Item = TaskId>>(iter: I) -> Self {
        TaskSet(iter.into_iter().collect())
    }
}

impl fmt::Display for TaskSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{}}}", join(&self.0.iter().collect::<Vec<_>>(), ","))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPartition {
    pub layer: usize,
    #[serde(with = "blocks_serde")]
    pub blocks: BTreeMap<TaskSet, BTreeSet<VertexId>>,
}

impl LayerPartition {
    pub fn block(&self, tau: &TaskSet) -> BTreeSet<VertexId> {
        self.blocks.get(tau).cloned().unwrap_or_default()
    }

    /// Union of all blocks whose task set is contained in `within`.
    pub fn covered_by(&self, within: &TaskSet) -> BTreeSet<VertexId> {
        self.blocks
            .iter()
            .filter(|(tau, _)| tau.is_subset(within))
            .flat_map(|(_, vs)| vs.iter().cloned())
            .collect()
    }

    /// Vertices connected with `task` (L_i^t).
    pub fn connected_to(&self, task: &TaskId) -> BTreeSet<VertexId> {
        self.blocks
            .iter()
            .filter(|(tau, _)| tau.contains(task))
            .flat_map(|(_, vs)| vs.iter().cloned())
            .collect()
    }

    pub fn vertices(&self) -> BTreeSet<VertexId> {
        self.blocks.values().flatten().cloned().collect()
    }
}

/// Per-layer subset-exclusive blocks T'^τ.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPartition {
    pub layers: Vec<LayerPartition>,
    pub dropped: BTreeSet<VertexId>,
}

impl TaskPartition {
    pub fn layer(&self, i: usize) -> Option<&LayerPartition> {
        self.layers.iter().find(|l| l.layer == i)
    }

    pub fn block(&self, i: usize, tau: &TaskSet) -> BTreeSet<VertexId> {
        self.layer(i).map(|l| l.block(tau)).unwrap_or_default()
    }
}

mod blocks_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Block {
        tasks: TaskSet,
        vertices: BTreeSet<VertexId>,
    }

    pub fn serialize<S: Serializer>(
        blocks: &BTreeMap<TaskSet, BTreeSet<VertexId>>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let list: Vec<Block> = blocks
            .iter()
            .map(|(tasks, vertices)| Block {
                tasks: tasks.clone(),
                vertices: vertices.clone(),
            })
            .collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<TaskSet, BTreeSet<VertexId>>, D::Error> {
        let list = Vec::<Block>::deserialize(d)?;
        Ok(list.into_iter().map(|b| (b.tasks, b.vertices)).collect())
    }
}
