//! Fixtures for rdnet tests: a step-activation forward evaluator and builders
//! for planted-structure networks, random feed-forward nets and random joints.
//!
//! Internal neurons compute `1` when the weighted input sum exceeds
//! [`THRESHOLD`] and `0` otherwise; sinks output the raw weighted sum.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdnet_core::{ActivationDataset, DiscreteJoint, GraphBuilder, NeuralGraph, TaskId, TaskSet, Var, VertexId, VertexKind};

pub const THRESHOLD: f64 = 0.5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Evaluates every vertex of `g` on one assignment of its sources.
pub fn forward(g: &NeuralGraph, inputs: &BTreeMap<VertexId, f64>) -> BTreeMap<VertexId, f64> {
    let mut out: BTreeMap<VertexId, f64> = BTreeMap::new();
    let mut pending: Vec<VertexId> = g.vertices().map(|v| v.id.clone()).collect();
    while !pending.is_empty() {
        pending.retain(|v| {
            if g.predecessors(v).any(|p| !out.contains_key(p)) {
                return true;
            }
            let value = match g.vertex(v).unwrap().kind {
                VertexKind::Source => inputs[v],
                kind => {
                    let sum: f64 = g
                        .predecessors(v)
                        .map(|p| g.weight(p, v).unwrap() as f64 * out[p])
                        .sum();
                    if kind == VertexKind::Sink {
                        sum
                    } else if sum > THRESHOLD {
                        1.0
                    } else {
                        0.0
                    }
                }
            };
            out.insert(v.clone(), value);
            false
        });
    }
    out
}

/// All 2^n assignments of binary values to `sources`, first source most significant.
pub fn all_inputs(sources: &[VertexId]) -> Vec<BTreeMap<VertexId, f64>> {
    let n = sources.len();
    (0..1u64 << n)
        .map(|k| {
            sources
                .iter()
                .enumerate()
                .map(|(j, s)| (s.clone(), ((k >> (n - 1 - j)) & 1) as f64))
                .collect()
        })
        .collect()
}

/// Dataset of every internal neuron of `nets` over the given input rows, with
/// the given label columns.
pub fn dataset(
    nets: &[&NeuralGraph],
    rows: &[BTreeMap<VertexId, f64>],
    labels: &BTreeMap<TaskId, Vec<i64>>,
) -> ActivationDataset {
    let mut cols: BTreeMap<VertexId, Vec<f64>> = BTreeMap::new();
    for g in nets {
        for row in rows {
            let values = forward(g, row);
            for v in g.internal_vertices() {
                cols.entry(v.clone()).or_default().push(values[&v]);
            }
        }
    }
    let mut data = ActivationDataset::new(rows.len());
    for (id, col) in cols {
        data.insert_neuron(id, col).unwrap();
    }
    for (t, col) in labels {
        data.insert_label(t.clone(), col.clone()).unwrap();
    }
    data
}

pub fn input(j: u32) -> VertexId {
    VertexId::new("x", 0, j)
}

fn encode(bits: impl IntoIterator<Item = f64>) -> i64 {
    bits.into_iter().fold(0, |acc, b| acc * 2 + b as i64)
}

/// Independent input bit blocks, each read by a chosen set of tasks.
#[derive(Clone, Debug)]
pub struct PlantedSpec {
    pub tasks: Vec<TaskId>,
    /// (indices into `tasks` reading the block, number of bits)
    pub blocks: Vec<(Vec<usize>, u32)>,
    /// Internal depth of each task's network.
    pub depths: Vec<u32>,
}

impl PlantedSpec {
    /// Blocks X_a (A only), X_s (both), X_b (B only).
    pub fn two_task(a: u32, s: u32, b: u32, depth_a: u32, depth_b: u32) -> Self {
        PlantedSpec {
            tasks: vec!["A".into(), "B".into()],
            blocks: vec![(vec![0], a), (vec![0, 1], s), (vec![1], b)],
            depths: vec![depth_a, depth_b],
        }
    }
}

pub struct Planted {
    pub nets: Vec<NeuralGraph>,
    pub data: ActivationDataset,
    pub rows: Vec<BTreeMap<VertexId, f64>>,
    /// Neurons copying each block, per layer (index 0 is layer 1), up to the
    /// shallowest depth.
    pub expected: Vec<BTreeMap<TaskSet, BTreeSet<VertexId>>>,
}

impl Planted {
    pub fn net_refs(&self) -> Vec<&NeuralGraph> {
        self.nets.iter().collect()
    }
}

/// Each task's network copies the bits of every block it reads through its
/// layers (unit weight on the copied bit, zero on the rest of a dense layer);
/// the sink reads the last layer in binary, so the label is the integer
/// encoding of the bits the task sees.
pub fn planted(spec: &PlantedSpec) -> Planted {
    let mut bit_block = Vec::new();
    for (b, (_, size)) in spec.blocks.iter().enumerate() {
        bit_block.extend(std::iter::repeat_n(b, *size as usize));
    }
    let sources: Vec<VertexId> = (0..bit_block.len() as u32).map(input).collect();
    let mut nets = Vec::new();
    // Per task: the input bits it copies, in order.
    let mut seen_bits = Vec::new();
    for (t, task) in spec.tasks.iter().enumerate() {
        let bits: Vec<usize> = (0..bit_block.len())
            .filter(|&j| spec.blocks[bit_block[j]].0.contains(&t))
            .collect();
        let depth = spec.depths[t];
        let net = task.as_str();
        let mut g = GraphBuilder::new();
        for &j in &bits {
            g.source(sources[j].clone());
        }
        let width = bits.len() as u32;
        for l in 1..=depth {
            for k in 0..width {
                g.internal(VertexId::new(net, l, k));
                for p in 0..width {
                    let from = if l == 1 { sources[bits[p as usize]].clone() } else { VertexId::new(net, l - 1, p) };
                    g.edge(from, VertexId::new(net, l, k), if p == k { 1.0 } else { 0.0 });
                }
            }
        }
        let sink = VertexId::new(net, depth + 1, 0);
        g.sink(sink.clone(), task.clone());
        for k in 0..width {
            g.edge(VertexId::new(net, depth, k), sink.clone(), (1u64 << (width - 1 - k)) as f32);
        }
        nets.push(g.build().expect("planted network is valid"));
        seen_bits.push(bits);
    }

    let rows = all_inputs(&sources);
    let labels: BTreeMap<TaskId, Vec<i64>> = spec
        .tasks
        .iter()
        .zip(&seen_bits)
        .map(|(t, bits)| {
            let col = rows
                .iter()
                .map(|r| encode(bits.iter().map(|&j| r[&sources[j]])))
                .collect();
            (t.clone(), col)
        })
        .collect();
    let refs: Vec<&NeuralGraph> = nets.iter().collect();
    let data = dataset(&refs, &rows, &labels);

    let min_depth = *spec.depths.iter().min().unwrap();
    let expected = (1..=min_depth)
        .map(|l| {
            let mut layer: BTreeMap<TaskSet, BTreeSet<VertexId>> = BTreeMap::new();
            for (t, task) in spec.tasks.iter().enumerate() {
                for (k, &j) in seen_bits[t].iter().enumerate() {
                    let readers = &spec.blocks[bit_block[j]].0;
                    let tau = TaskSet::new(readers.iter().map(|&r| spec.tasks[r].clone()));
                    layer
                        .entry(tau)
                        .or_default()
                        .insert(VertexId::new(task.as_str(), l, k as u32));
                }
            }
            layer
        })
        .collect();
    Planted {
        nets,
        data,
        rows,
        expected,
    }
}

/// Random dense step-activation network for `task` on the given sources.
///
/// Weights are redrawn until no neuron is constant over `rows`.
pub fn random_mlp(
    rng: &mut impl Rng,
    task: &TaskId,
    sources: &[VertexId],
    widths: &[u32],
    rows: &[BTreeMap<VertexId, f64>],
) -> NeuralGraph {
    let net = task.as_str();
    loop {
        let mut g = GraphBuilder::new();
        for s in sources {
            g.source(s.clone());
        }
        let mut prev: Vec<VertexId> = sources.to_vec();
        for (l, &w) in widths.iter().enumerate() {
            let layer: Vec<VertexId> = (0..w).map(|k| VertexId::new(net, l as u32 + 1, k)).collect();
            for v in &layer {
                g.internal(v.clone());
                for u in &prev {
                    let weight = (rng.random_range(-10..=10) as f32) / 8.0;
                    g.edge(u.clone(), v.clone(), weight);
                }
            }
            prev = layer;
        }
        let sink = VertexId::new(net, widths.len() as u32 + 1, 0);
        g.sink(sink.clone(), task.clone());
        for u in &prev {
            g.edge(u.clone(), sink.clone(), rng.random_range(-4.0f32..4.0));
        }
        let g = g.build().expect("dense network is valid");
        let values: Vec<_> = rows.iter().map(|r| forward(&g, r)).collect();
        let constant = g
            .internal_vertices()
            .iter()
            .any(|v| values.iter().all(|x| x[v] == values[0][v]));
        if !constant {
            return g;
        }
    }
}

/// Integer encoding of the given sources, per row.
pub fn encode_label(rows: &[BTreeMap<VertexId, f64>], sources: &[VertexId]) -> Vec<i64> {
    rows.iter().map(|r| encode(sources.iter().map(|s| r[s]))).collect()
}

/// Joint graph of separate networks; sources with the same id are shared.
pub fn union(nets: &[&NeuralGraph]) -> NeuralGraph {
    let mut b = GraphBuilder::new();
    let mut seen = BTreeSet::new();
    for g in nets {
        for v in g.vertices() {
            if seen.insert(v.id.clone()) {
                b.vertex(v.clone());
            }
        }
        for (u, v, w) in g.edges() {
            b.edge(u.clone(), v.clone(), w);
        }
    }
    b.build().expect("union of valid networks is valid")
}

/// Fully shared multi-task network: the layers of `nets` are pooled into one
/// trunk; consecutive trunk layers are fully connected and every sink reads
/// the last trunk layer. Weights of edges present in an input network are
/// kept, the rest are zero. All inputs must have equal depth.
pub fn shared_trunk(nets: &[&NeuralGraph]) -> NeuralGraph {
    let layerings: Vec<_> = nets.iter().map(|g| g.construct_layers().unwrap()).collect();
    let depth = layerings[0].depth();
    assert!(layerings.iter().all(|l| l.depth() == depth));
    let weight = |u: &VertexId, v: &VertexId| nets.iter().find_map(|g| g.weight(u, v)).unwrap_or(0.0);
    let pooled = |i: usize| -> BTreeSet<VertexId> { layerings.iter().flat_map(|l| l.layer(i).iter().cloned()).collect() };
    let mut b = GraphBuilder::new();
    for s in pooled(0) {
        b.source(s);
    }
    for i in 1..=depth {
        for v in pooled(i) {
            b.internal(v.clone());
            for u in pooled(i - 1) {
                b.edge(u.clone(), v.clone(), weight(&u, &v));
            }
        }
    }
    for g in nets {
        let task = g.tasks().iter().next().unwrap().clone();
        let sink = g.sink_of(&task).unwrap().clone();
        b.sink(sink.clone(), task);
        for u in pooled(depth) {
            b.edge(u.clone(), sink.clone(), weight(&u, &sink));
        }
    }
    b.build().expect("trunk is valid")
}

/// A single-task deterministic toy network with its full-enumeration dataset.
pub struct ToyNet {
    pub graph: NeuralGraph,
    pub data: ActivationDataset,
    pub task: TaskId,
}

/// Strictly layered random network on 2 or 3 input bits with at most
/// `max_neurons` internal neurons in at most `max_layers` layers. With
/// `skip`, some non-final neurons also feed the sink directly, so they are
/// carried into the next layer. The label is a random function of the inputs.
pub fn toy_net(rng: &mut impl Rng, max_neurons: u32, max_layers: u32, skip: bool) -> ToyNet {
    let task: TaskId = "A".into();
    let n_inputs = rng.random_range(2..=3u32);
    let sources: Vec<VertexId> = (0..n_inputs).map(input).collect();
    let min_layers = if skip { 2 } else { 1 };
    let layers = rng.random_range(min_layers..=max_layers);
    let mut widths: Vec<u32> = vec![1; layers as usize];
    let mut total = layers;
    while total < max_neurons && rng.random_bool(0.7) {
        let l = rng.random_range(0..layers as usize);
        widths[l] += 1;
        total += 1;
    }
    let sink = VertexId::new("n", layers + 1, 0);
    let mut b = GraphBuilder::new();
    for s in &sources {
        b.source(s.clone());
    }
    b.sink(sink.clone(), task.clone());
    let weight = |rng: &mut dyn rand::RngCore| [-1.0f32, 0.5, 1.0, 2.0][rng.random_range(0..4)];
    let mut prev = sources.clone();
    let mut skipped = false;
    for (l, &w) in widths.iter().enumerate() {
        let layer: Vec<VertexId> = (0..w).map(|k| VertexId::new("n", l as u32 + 1, k)).collect();
        for v in &layer {
            b.internal(v.clone());
        }
        // Every neuron gets an input and every previous neuron an output.
        let mut edges = BTreeSet::new();
        for (k, v) in layer.iter().enumerate() {
            edges.insert((prev[k % prev.len()].clone(), v.clone()));
        }
        for (k, u) in prev.iter().enumerate() {
            edges.insert((u.clone(), layer[k % layer.len()].clone()));
        }
        for u in &prev {
            for v in &layer {
                if rng.random_bool(0.4) {
                    edges.insert((u.clone(), v.clone()));
                }
            }
        }
        for (u, v) in edges {
            let w = weight(rng);
            b.edge(u, v, w);
        }
        let last = l + 1 == widths.len();
        if skip && !last {
            for (k, v) in layer.iter().enumerate() {
                if k == 0 || rng.random_bool(0.3) {
                    let w = weight(rng);
                    b.edge(v.clone(), sink.clone(), w);
                    skipped = true;
                }
            }
        }
        prev = layer;
    }
    for u in &prev {
        let w = weight(rng);
        b.edge(u.clone(), sink.clone(), w);
    }
    assert_eq!(skip, skipped);
    let graph = b.build().expect("toy network is valid");
    let rows = all_inputs(&sources);
    let classes = rng.random_range(2..=4i64);
    let table: Vec<i64> = (0..rows.len()).map(|_| rng.random_range(0..classes)).collect();
    let mut labels = BTreeMap::new();
    labels.insert(task.clone(), table);
    let mut data = dataset(&[&graph], &rows, &labels);
    for (j, s) in sources.iter().enumerate() {
        let col = rows.iter().map(|r| r[s]).collect();
        data.insert_neuron(input(j as u32), col).unwrap();
    }
    ToyNet { graph, data, task }
}

/// Random joint distribution over `n` binary neurons `("x", 0, i)` followed by
/// a label `"Y"` with `label_card` values (omitted when zero). About a quarter
/// of the outcomes get zero mass.
pub fn random_joint(rng: &mut impl Rng, n: u32, label_card: usize) -> DiscreteJoint {
    let mut vars: Vec<(Var, usize)> = (0..n).map(|i| (Var::neuron("x", 0, i), 2)).collect();
    if label_card > 0 {
        vars.push((Var::label("Y"), label_card));
    }
    let size: usize = vars.iter().map(|(_, c)| c).product();
    let weights: Vec<f64> = (0..size)
        .map(|_| if rng.random_bool(0.25) { 0.0 } else { rng.random::<f64>() })
        .collect();
    let weights = if weights.iter().all(|w| *w == 0.0) { vec![1.0; size] } else { weights };
    let cards: Vec<usize> = vars.iter().map(|(_, c)| *c).collect();
    DiscreteJoint::from_weights(vars, |o| {
        let idx = o.iter().zip(&cards).fold(0, |acc, (x, c)| acc * c + x);
        weights[idx]
    })
    .unwrap()
}
