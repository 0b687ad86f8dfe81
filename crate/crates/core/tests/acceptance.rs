//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rdnet_core::format::topology_json;
use rdnet_core::info::{kl_upper_bound_mi, Source};
use rdnet_core::merge::{merge_k, merge_two, EdgeInit, MergeConfig, MergeResult};
use rdnet_core::redundancy::{disentanglement_check, join_redundancy, layer_terms, layerwise_redundancy, redundancy_of_set};
use rdnet_core::{ActivationDataset, DiscreteJoint, Estimator, EstimatorConfig, NeuralGraph, TaskId, TaskSet, Var, VertexId};
use rdnet_testkit as kit;

const ALPHA: f64 = 0.01;
const EPSILON: f64 = 0.01;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("information measures match brute-force enumeration", information_oracle),
        ("named information fixtures", named_fixtures),
        ("join rule equals direct set redundancy", join_rule),
        ("layer-wise redundancy equals direct redundancy", layerwise_equivalence),
        ("task information never grows with depth", data_processing),
        ("KL bound dominates binned plug-in, vanishes for identical classes", kl_bound),
        ("planted two-task merge recovery", planted_recovery),
        ("merge structural invariants", structural_invariants),
        ("disjoint tasks merge to the disjoint union", disjoint_identity),
        ("three-task extension and K=2 reduction", three_tasks),
        ("entangled trunk fails the check, merge passes", entangled_baseline),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        if !out.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {}: {} ({}; {:.2} s)",
            k + 1,
            if out.pass { "PASS" } else { "FAIL" },
            name,
            out.detail,
            secs
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

// Independent brute-force oracle over a probability table.

struct Table {
    cards: Vec<usize>,
    probs: Vec<f64>,
}

impl Table {
    fn of(j: &DiscreteJoint) -> Self {
        Table {
            cards: j.vars().iter().map(|v| j.cardinality(v).unwrap()).collect(),
            probs: j.probs().to_vec(),
        }
    }

    fn decode(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.cards.len()];
        for k in (0..self.cards.len()).rev() {
            out[k] = idx % self.cards[k];
            idx /= self.cards[k];
        }
        out
    }

    /// Marginal probability of each outcome restricted to `keep`.
    fn marginal(&self, keep: &[usize]) -> BTreeMap<Vec<usize>, f64> {
        let mut m = BTreeMap::new();
        for (i, p) in self.probs.iter().enumerate() {
            let o = self.decode(i);
            let key: Vec<usize> = keep.iter().map(|&k| o[k]).collect();
            *m.entry(key).or_insert(0.0) += p;
        }
        m
    }

    fn h(&self, keep: &[usize]) -> f64 {
        self.marginal(keep)
            .values()
            .filter(|p| **p > 0.0)
            .map(|p| -p * p.log2())
            .sum()
    }

    /// Σ p(a,b,c) log p(a,b,c) p(c) / (p(a,c) p(b,c)), summed outcome by outcome.
    fn cmi(&self, a: &[usize], b: &[usize], c: &[usize]) -> f64 {
        let cat = |x: &[usize], y: &[usize]| -> Vec<usize> { x.iter().chain(y).copied().collect() };
        let (pabc, pac, pbc, pc) = (
            self.marginal(&cat(&cat(a, b), c)),
            self.marginal(&cat(a, c)),
            self.marginal(&cat(b, c)),
            self.marginal(c),
        );
        let (na, nb) = (a.len(), b.len());
        pabc.iter()
            .filter(|(_, p)| **p > 0.0)
            .map(|(o, p)| {
                let (oa, ob, oc) = (&o[..na], &o[na..na + nb], &o[na + nb..]);
                let ac = pac[&cat(oa, oc)];
                let bc = pbc[&cat(ob, oc)];
                let cc = pc[&oc.to_vec()];
                p * (p * cc / (ac * bc)).log2()
            })
            .sum()
    }

    /// Co-information by inclusion-exclusion over joint entropies of singletons.
    fn co(&self, vars: &[usize]) -> f64 {
        let n = vars.len();
        (1..1usize << n)
            .map(|mask| {
                let sub: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| vars[i]).collect();
                let sign = if sub.len() % 2 == 1 { 1.0 } else { -1.0 };
                sign * self.h(&sub)
            })
            .sum()
    }
}

fn x(i: u32) -> Var {
    Var::neuron("x", 0, i)
}

fn exact(j: &DiscreteJoint) -> Estimator<'_> {
    Estimator::new(Source::Joint(j), &EstimatorConfig::exact()).unwrap()
}

fn information_oracle() -> Outcome {
    let mut rng = kit::rng(101);
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    let mut joints = 0;
    for k in 0..240 {
        let n = 2 + (k % 3) as u32;
        let j = kit::random_joint(&mut rng, n, 0);
        let t = Table::of(&j);
        let e = exact(&j);
        let idx: Vec<usize> = (0..n as usize).collect();
        let vars: Vec<Var> = (0..n).map(x).collect();
        let mut check = |got: f64, want: f64| {
            worst = worst.max((got - want).abs());
            checks += 1;
        };
        check(e.mutual_info(&vars[..1], &vars[1..2]).unwrap(), t.cmi(&[0], &[1], &[]));
        check(e.mutual_info(&vars[..1], &vars[1..]).unwrap(), t.cmi(&[0], &idx[1..], &[]));
        if n >= 3 {
            check(
                e.conditional_mi(&vars[..1], &vars[1..2], &vars[2..]).unwrap(),
                t.cmi(&[0], &[1], &idx[2..]),
            );
        }
        let singles: Vec<&[Var]> = vars.chunks(1).collect();
        check(e.co_information(&singles).unwrap(), t.co(&idx));
        let tc_want: f64 = idx.iter().map(|&i| t.h(&[i])).sum::<f64>() - t.h(&idx);
        check(e.total_correlation(&vars).unwrap(), tc_want);
        joints += 1;
    }
    outcome(
        worst <= 1e-9 && joints >= 200,
        format!("{joints} joints, {checks} values, max |error| {worst:.1e} bits"),
    )
}

fn named_fixtures() -> Outcome {
    let y = Var::label("Y");
    let bsc = DiscreteJoint::from_weights(vec![(x(0), 2), (y.clone(), 2)], |o| {
        if o[0] == o[1] { 0.45 } else { 0.05 }
    })
    .unwrap();
    let mi = exact(&bsc).mutual_info(&[x(0)], &[y]).unwrap();
    let xor = DiscreteJoint::from_weights(vec![(x(0), 2), (x(1), 2), (x(2), 2)], |o| {
        if o[2] == o[0] ^ o[1] { 1.0 } else { 0.0 }
    })
    .unwrap();
    let co = exact(&xor).co_information(&[&[x(0)], &[x(1)], &[x(2)]]).unwrap();
    let copies = DiscreteJoint::from_weights(vec![(x(0), 2), (x(1), 2), (x(2), 2)], |o| {
        if o[0] == o[1] && o[1] == o[2] { 1.0 } else { 0.0 }
    })
    .unwrap();
    let tc = exact(&copies).total_correlation(&[x(0), x(1), x(2)]).unwrap();
    let ok = (mi - 0.5310044064107188).abs() <= 1e-6 && (co + 1.0).abs() <= 1e-6 && (tc - 2.0).abs() <= 1e-6;
    outcome(ok, format!("BSC(0.1) MI {mi:.9}, XOR co-information {co:.9}, three-copy TC {tc:.9}"))
}

fn join_rule() -> Outcome {
    let mut rng = kit::rng(202);
    let task: TaskId = "Y".into();
    let mut worst: f64 = 0.0;
    let mut overlapping = 0;
    for k in 0..100 {
        let n = 2 + (k % 3) as u32;
        let j = kit::random_joint(&mut rng, n, 2 + k % 2);
        let e = exact(&j);
        let pick = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Var> {
            loop {
                let s: Vec<Var> = (0..n).filter(|_| rng.random_bool(0.5)).map(x).collect();
                if !s.is_empty() {
                    return s;
                }
            }
        };
        let (t1, t2) = (pick(&mut rng), pick(&mut rng));
        if t1.iter().any(|v| t2.contains(v)) {
            overlapping += 1;
        }
        let union: Vec<Var> = t1.iter().chain(&t2).cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let joined = join_redundancy(&e, &t1, &t2, &task).unwrap();
        let direct = redundancy_of_set(&e, &union, &task).unwrap();
        worst = worst.max((joined - direct).abs());
    }
    outcome(
        worst <= 1e-9 && overlapping > 0,
        format!("100 joints ({overlapping} with overlapping sets), max |error| {worst:.1e} bits"),
    )
}

fn toy_nets() -> Vec<kit::ToyNet> {
    let mut rng = kit::rng(303);
    (0..20).map(|k| kit::toy_net(&mut rng, 10, 3, k < 10)).collect()
}

fn layer_outputs(g: &NeuralGraph) -> Vec<BTreeSet<VertexId>> {
    g.construct_layers().unwrap().layers().to_vec()
}

fn layerwise_equivalence() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut with_carry = 0;
    for t in toy_nets() {
        let e = Estimator::new(Source::Data(&t.data), &EstimatorConfig::exact()).unwrap();
        let layering = t.graph.construct_layers().unwrap();
        let layers = layer_outputs(&t.graph);
        if (2..layers.len()).any(|i| !layers[i - 1].is_disjoint(&layers[i])) {
            with_carry += 1;
        }
        let union: Vec<Var> = layers[1..]
            .iter()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(Var::Neuron)
            .collect();
        let direct = redundancy_of_set(&e, &union, &t.task).unwrap();
        let layered = layerwise_redundancy(&t.graph, &layering, &t.task, &e).unwrap();
        worst = worst.max((direct - layered).abs());
    }
    outcome(
        worst <= 1e-9 && with_carry >= 5,
        format!("20 networks ({with_carry} with carried neurons), max |error| {worst:.1e} bits"),
    )
}

fn data_processing() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut pairs = 0;
    for t in toy_nets() {
        let e = Estimator::new(Source::Data(&t.data), &EstimatorConfig::exact()).unwrap();
        let layering = t.graph.construct_layers().unwrap();
        let inputs: Vec<Var> = layering.layer(0).iter().cloned().map(Var::Neuron).collect();
        let mut info = vec![e.mutual_info(&inputs, &[Var::Label(t.task.clone())]).unwrap()];
        info.extend(
            layer_terms(&t.graph, &layering, &t.task, &e)
                .unwrap()
                .iter()
                .map(|l| l.task_information),
        );
        for w in info.windows(2) {
            worst = worst.max(w[1] - w[0]);
            pairs += 1;
        }
    }
    outcome(
        worst <= 1e-9,
        format!("{pairs} consecutive layer pairs, largest increase {worst:.1e} bits"),
    )
}

/// Plug-in bins per dimension, keeping the joint cell count near N/100.
fn plugin_bins(dim: usize, n: usize) -> usize {
    ((n as f64 / 100.0).powf(1.0 / dim as f64).floor() as usize).clamp(2, 30)
}

fn gaussian_rows(rng: &mut impl Rng, mean: &DVector<f64>, chol: &DMatrix<f64>, n: usize) -> Vec<DVector<f64>> {
    let d = mean.len();
    (0..n)
        .map(|_| {
            let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
            mean + chol * z
        })
        .collect()
}

fn random_spd_chol(rng: &mut impl Rng, d: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let cov = &a * a.transpose() / d as f64 + DMatrix::identity(d, d) * 0.5;
    cov.cholesky().unwrap().l()
}

fn mixture_dataset(classes: &[Vec<DVector<f64>>]) -> (ActivationDataset, Vec<Var>) {
    let d = classes[0][0].len();
    let n: usize = classes.iter().map(Vec::len).sum();
    let mut data = ActivationDataset::new(n);
    let vars: Vec<Var> = (0..d as u32).map(|i| Var::neuron("g", 1, i)).collect();
    for i in 0..d {
        let col = classes.iter().flatten().map(|r| r[i]).collect();
        data.insert_neuron(VertexId::new("g", 1, i as u32), col).unwrap();
    }
    let labels = classes
        .iter()
        .enumerate()
        .flat_map(|(c, rows)| std::iter::repeat_n(c as i64, rows.len()))
        .collect();
    data.insert_label("Y".into(), labels).unwrap();
    (data, vars)
}

fn kl_bound() -> Outcome {
    let mut rng = kit::rng(404);
    let n = 100_000;
    let labels: Vec<TaskId> = vec!["Y".into()];
    let mut dominated = 0;
    let mut worst_gap = f64::INFINITY;
    for _ in 0..100 {
        let d = rng.random_range(1..=4usize);
        let w: f64 = rng.random_range(0.3..0.7);
        let n0 = (n as f64 * w) as usize;
        let classes: Vec<Vec<DVector<f64>>> = [n0, n - n0]
            .iter()
            .map(|&m| {
                let mean = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let chol = random_spd_chol(&mut rng, d);
                gaussian_rows(&mut rng, &mean, &chol, m)
            })
            .collect();
        let (data, vars) = mixture_dataset(&classes);
        let kl = kl_upper_bound_mi(&vars, &labels, &data, &EstimatorConfig::kl()).unwrap();
        let binned_cfg = EstimatorConfig::binned(plugin_bins(d, n));
        let binned = Estimator::new(Source::Data(&data), &binned_cfg)
            .unwrap()
            .mutual_info(&vars, &[Var::label("Y")])
            .unwrap();
        if kl >= binned {
            dominated += 1;
        }
        worst_gap = worst_gap.min(kl - binned);
    }
    let mut worst_identical: f64 = 0.0;
    for _ in 0..10 {
        let d = rng.random_range(1..=4usize);
        let mean = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let chol = random_spd_chol(&mut rng, d);
        let rows = gaussian_rows(&mut rng, &mean, &chol, n / 2);
        let (data, vars) = mixture_dataset(&[rows.clone(), rows]);
        let kl = kl_upper_bound_mi(&vars, &labels, &data, &EstimatorConfig::kl()).unwrap();
        worst_identical = worst_identical.max(kl.abs());
    }
    outcome(
        dominated >= 95 && worst_identical <= 1e-9,
        format!(
            "bound >= plug-in in {dominated}/100 (smallest margin {worst_gap:.2e} bits); identical classes max {worst_identical:.1e} bits"
        ),
    )
}

fn exact_cfg(seed: u64) -> MergeConfig {
    MergeConfig::new(ALPHA, seed).with_estimator(EstimatorConfig::exact())
}

fn planted_specs() -> Vec<kit::PlantedSpec> {
    let mut rng = kit::rng(505);
    (0..20)
        .map(|_| {
            kit::PlantedSpec::two_task(
                rng.random_range(1..=3),
                rng.random_range(1..=3),
                rng.random_range(1..=3),
                rng.random_range(1..=3),
                rng.random_range(1..=3),
            )
        })
        .collect()
}

fn block(r: &MergeResult, layer: usize, tau: &TaskSet) -> BTreeSet<VertexId> {
    r.partition.block(layer, tau)
}

fn planted_recovery() -> Outcome {
    let tasks: Vec<TaskId> = vec!["A".into(), "B".into()];
    let sets = [
        TaskSet::single(tasks[0].clone()),
        TaskSet::single(tasks[1].clone()),
        TaskSet::new(tasks.clone()),
    ];
    let mut recovered = 0;
    let mut notes = Vec::new();
    for (k, spec) in planted_specs().iter().enumerate() {
        let p = kit::planted(spec);
        let r = merge_two(&p.nets[0], &p.nets[1], &p.data, &exact_cfg(k as u64)).unwrap();
        let exact_blocks = p.expected.iter().enumerate().all(|(i, want)| {
            sets.iter().all(|tau| block(&r, i + 1, tau) == want.get(tau).cloned().unwrap_or_default())
        });
        let e = Estimator::new(Source::Data(&p.data), &EstimatorConfig::exact()).unwrap();
        let within_alpha = (1..=p.expected.len()).all(|i| {
            [(0, 1), (1, 0)].iter().all(|&(own, off)| {
                let accepted: BTreeSet<VertexId> = r
                    .trace
                    .iter()
                    .filter(|t| t.layer == i && t.target == sets[own] && t.accepted)
                    .map(|t| t.candidate.clone())
                    .collect();
                let traced_ok = r
                    .trace
                    .iter()
                    .filter(|t| t.layer == i && t.target == sets[own] && t.accepted)
                    .all(|t| t.set_mi <= ALPHA);
                let vars: Vec<Var> = accepted.into_iter().map(Var::Neuron).collect();
                let recomputed = if vars.is_empty() {
                    0.0
                } else {
                    e.mutual_info(&vars, &[Var::Label(tasks[off].clone())]).unwrap()
                };
                traced_ok && recomputed <= ALPHA
            })
        });
        let ok = exact_blocks && r.conditions.passed && within_alpha;
        if ok {
            recovered += 1;
        } else {
            notes.push(format!(
                "case {k}: blocks {exact_blocks}, check {}, alpha {within_alpha}",
                r.conditions.passed
            ));
        }
    }
    let detail = if notes.is_empty() {
        format!("{recovered}/20 exact recoveries, all checks passed, all traced MI <= {ALPHA}")
    } else {
        format!("{recovered}/20 exact recoveries; {}", notes.join("; "))
    };
    outcome(recovered == 20, detail)
}

/// Violations of the subset rule, conservation and weight provenance.
fn structural_violations(inputs: &[&NeuralGraph], r: &MergeResult, init: EdgeInit) -> Vec<String> {
    let mut bad = Vec::new();
    for (u, v, _) in r.merged.edges() {
        if !r.assignment[v].is_subset(&r.assignment[u]) {
            bad.push(format!("forbidden edge {u} -> {v}"));
        }
    }
    let original: BTreeSet<VertexId> = inputs.iter().flat_map(|g| g.internal_vertices()).collect();
    let kept = r.merged.internal_vertices();
    if !kept.is_disjoint(&r.dropped) || &kept | &r.dropped != original {
        bad.push("neuron conservation".into());
    }
    for (u, v, w) in r.merged.edges() {
        match inputs.iter().find_map(|g| g.weight(u, v)) {
            Some(orig) if orig.to_bits() != w.to_bits() => bad.push(format!("weight changed on {u} -> {v}")),
            Some(_) => {}
            None => {
                let ok = match init {
                    EdgeInit::Zero => w == 0.0,
                    EdgeInit::UniformNearZero { scale } => (w as f64).abs() <= scale,
                };
                if !ok {
                    bad.push(format!("new edge {u} -> {v} has weight {w}"));
                }
            }
        }
    }
    for g in inputs {
        for (u, v, _) in g.edges() {
            let survives = r.merged.contains(u) && r.merged.contains(v);
            if survives && r.assignment[v].is_subset(&r.assignment[u]) && r.merged.weight(u, v).is_none() {
                bad.push(format!("allowed edge {u} -> {v} lost"));
            }
        }
    }
    bad
}

fn fingerprint(r: &MergeResult) -> String {
    format!(
        "{}{}{}",
        topology_json(&r.merged),
        serde_json::to_string(&r.partition).unwrap(),
        r.trace_text()
    )
}

fn random_pair(rng: &mut rand_chacha::ChaCha8Rng, shared_inputs: bool) -> (Vec<NeuralGraph>, ActivationDataset) {
    let sources: Vec<VertexId> = (0..6).map(kit::input).collect();
    let rows = kit::all_inputs(&sources);
    let (sa, sb): (Vec<VertexId>, Vec<VertexId>) = if shared_inputs {
        (sources[..4].to_vec(), sources[2..].to_vec())
    } else {
        (sources[..3].to_vec(), sources[3..].to_vec())
    };
    let mut nets = Vec::new();
    let mut labels = BTreeMap::new();
    for (task, own) in [("A", &sa), ("B", &sb)] {
        let depth = rng.random_range(1..=3usize);
        let widths: Vec<u32> = (0..depth).map(|_| rng.random_range(1..=3)).collect();
        let task: TaskId = task.into();
        nets.push(kit::random_mlp(rng, &task, own, &widths, &rows));
        let read: Vec<VertexId> = if shared_inputs {
            own.iter().filter(|_| rng.random_bool(0.6)).cloned().collect()
        } else {
            own.clone()
        };
        let read = if read.is_empty() { own[..1].to_vec() } else { read };
        labels.insert(task, kit::encode_label(&rows, &read));
    }
    let refs: Vec<&NeuralGraph> = nets.iter().collect();
    let data = kit::dataset(&refs, &rows, &labels);
    (nets, data)
}

fn structural_invariants() -> Outcome {
    let mut runs = 0;
    let mut problems = Vec::new();
    let mut check = |inputs: &[&NeuralGraph], data: &ActivationDataset, cfg: &MergeConfig, label: String| {
        let r = merge_two(inputs[0], inputs[1], data, cfg).unwrap();
        let again = merge_two(inputs[0], inputs[1], data, cfg).unwrap();
        let mut bad = structural_violations(inputs, &r, cfg.new_edge_init);
        if fingerprint(&r) != fingerprint(&again) || r != again {
            bad.push("rerun differs".into());
        }
        runs += 1;
        if !bad.is_empty() {
            problems.push(format!("{label}: {}", bad.join(", ")));
        }
    };
    for (k, spec) in planted_specs().iter().enumerate() {
        let p = kit::planted(spec);
        check(&p.net_refs(), &p.data, &exact_cfg(k as u64), format!("planted {k}"));
    }
    let mut rng = kit::rng(606);
    for k in 0..20u64 {
        let (nets, data) = random_pair(&mut rng, true);
        let mut cfg = MergeConfig::new(ALPHA, 1000 + k);
        if k % 2 == 1 {
            cfg.new_edge_init = EdgeInit::UniformNearZero { scale: 0.05 };
        }
        let refs: Vec<&NeuralGraph> = nets.iter().collect();
        check(&refs, &data, &cfg, format!("random {k}"));
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{runs} merges, no violations, reruns byte-identical")
        } else {
            problems.join("; ")
        },
    )
}

fn disjoint_identity() -> Outcome {
    let mut rng = kit::rng(707);
    let mut problems = Vec::new();
    for k in 0..5u64 {
        let (nets, data) = random_pair(&mut rng, false);
        let r = merge_two(&nets[0], &nets[1], &data, &exact_cfg(k)).unwrap();
        let union_edges: BTreeSet<(VertexId, VertexId, u32)> = nets
            .iter()
            .flat_map(|g| g.edges().map(|(u, v, w)| (u.clone(), v.clone(), w.to_bits())))
            .collect();
        let merged_edges: BTreeSet<(VertexId, VertexId, u32)> =
            r.merged.edges().map(|(u, v, w)| (u.clone(), v.clone(), w.to_bits())).collect();
        let union_vertices: BTreeSet<VertexId> = nets.iter().flat_map(|g| g.vertices().map(|v| v.id.clone())).collect();
        let merged_vertices: BTreeSet<VertexId> = r.merged.vertices().map(|v| v.id.clone()).collect();
        if union_edges != merged_edges || union_vertices != merged_vertices || !r.dropped.is_empty() {
            problems.push(format!("case {k}: not the disjoint union"));
            continue;
        }
        let sources: Vec<VertexId> = (0..6).map(kit::input).collect();
        for row in kit::all_inputs(&sources) {
            let merged_out = kit::forward(&r.merged, &row);
            for g in &nets {
                let own = kit::forward(g, &row);
                let task = g.tasks().iter().next().unwrap();
                let sink = g.sink_of(task).unwrap();
                if own[sink].to_bits() != merged_out[sink].to_bits() {
                    problems.push(format!("case {k}: output of {task} differs"));
                }
            }
        }
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            "5 merges equal the disjoint union; outputs identical on all 64 inputs".to_string()
        } else {
            problems.join("; ")
        },
    )
}

fn three_tasks() -> Outcome {
    let tasks: Vec<TaskId> = vec!["A".into(), "B".into(), "C".into()];
    let subsets = rdnet_core::redundancy::nonempty_subsets(&tasks);
    let mut problems = Vec::new();
    let mut rng = kit::rng(808);
    let mut k3_runs = 0;
    for k in 0..8u64 {
        let with_pair = k % 2 == 0;
        let mut blocks = vec![
            (vec![0], rng.random_range(1..=2)),
            (vec![1], rng.random_range(1..=2)),
            (vec![2], rng.random_range(1..=2)),
            (vec![0, 1, 2], rng.random_range(1..=2)),
        ];
        if with_pair {
            blocks.push((vec![0, 1], rng.random_range(1..=2)));
        }
        // Unequal depths leave unmerged tails whose neurons duplicate shared
        // bits, so the pairwise check is only expected to pass at equal depth.
        let equal_depth = k < 4;
        let depths = if equal_depth {
            vec![rng.random_range(1..=2); 3]
        } else {
            (0..3).map(|_| rng.random_range(1..=2)).collect()
        };
        let spec = kit::PlantedSpec {
            tasks: tasks.clone(),
            blocks,
            depths,
        };
        let p = kit::planted(&spec);
        let r = merge_k(&p.net_refs(), &p.data, &exact_cfg(k)).unwrap();
        k3_runs += 1;
        for (i, want) in p.expected.iter().enumerate() {
            for tau in &subsets {
                if block(&r, i + 1, tau) != want.get(tau).cloned().unwrap_or_default() {
                    problems.push(format!("case {k}: layer {} block {tau} differs", i + 1));
                }
            }
        }
        let bad = structural_violations(&p.net_refs(), &r, EdgeInit::Zero);
        if !bad.is_empty() {
            problems.push(format!("case {k}: {}", bad.join(", ")));
        }
        if with_pair {
            let pair = TaskSet::new(tasks[..2].iter().cloned());
            let c_only = TaskSet::single(tasks[2].clone());
            let leaks = r
                .merged
                .edges()
                .filter(|(u, v, _)| r.assignment[*u] == pair && r.assignment[*v] == c_only)
                .count();
            if leaks > 0 {
                problems.push(format!("case {k}: {leaks} edges from the pair block into C"));
            }
        }
        if equal_depth && !r.conditions.passed {
            problems.push(format!("case {k}: check failed"));
        }
    }
    let mut reductions = 0;
    for (k, spec) in planted_specs().iter().enumerate().take(10) {
        let p = kit::planted(spec);
        let cfg = exact_cfg(k as u64);
        if merge_k(&p.net_refs(), &p.data, &cfg).unwrap() != merge_two(&p.nets[0], &p.nets[1], &p.data, &cfg).unwrap() {
            problems.push(format!("planted {k}: K=2 path differs"));
        }
        reductions += 1;
    }
    let mut rng = kit::rng(809);
    for k in 0..10u64 {
        let (nets, data) = random_pair(&mut rng, true);
        let cfg = MergeConfig::new(ALPHA, k);
        let refs: Vec<&NeuralGraph> = nets.iter().collect();
        if merge_k(&refs, &data, &cfg).unwrap() != merge_two(&nets[0], &nets[1], &data, &cfg).unwrap() {
            problems.push(format!("random {k}: K=2 path differs"));
        }
        reductions += 1;
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{k3_runs} three-task merges recover all 7 blocks (equal-depth ones pass the check); {reductions} K=2 merges identical")
        } else {
            problems.join("; ")
        },
    )
}

fn entangled_baseline() -> Outcome {
    let p = kit::planted(&kit::PlantedSpec::two_task(2, 1, 2, 2, 2));
    let tasks: Vec<TaskId> = vec!["A".into(), "B".into()];
    let trunk = kit::shared_trunk(&p.net_refs());
    let layering = trunk.construct_layers().unwrap();
    let e = Estimator::new(Source::Data(&p.data), &EstimatorConfig::exact()).unwrap();
    let trunk_check = disentanglement_check(&trunk, &layering, &tasks, &e, EPSILON).unwrap();
    let c2 = trunk_check.layers.iter().map(|l| l.c2.value).fold(f64::NEG_INFINITY, f64::max);
    let c3 = trunk_check.layers.iter().map(|l| l.c3.value).fold(f64::NEG_INFINITY, f64::max);
    let merged = merge_two(&p.nets[0], &p.nets[1], &p.data, &exact_cfg(0)).unwrap();
    let worst_merged = merged.conditions.layers.iter().map(|l| l.max_abs()).fold(0.0, f64::max);
    outcome(
        c2 > EPSILON && c3 > EPSILON && !trunk_check.passed && merged.conditions.passed,
        format!("trunk c2 {c2:.3} and c3 {c3:.3} bits; merged worst condition {worst_merged:.1e} bits"),
    )
}
