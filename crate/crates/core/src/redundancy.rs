//! Redundancy quantities over a layered graph and an activation source.
//!
//! All functions take an [`Estimator`], which fixes both the probability
//! source and the backend. Returned values are in the estimator's units.
//! Information terms with an empty argument are structurally zero and are
//! never passed to the estimator.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, Layering, NeuralGraph, TaskId, TaskPartition, TaskSet, VertexId};
use crate::info::{Estimator, EstimatorConfig, InfoError, LogBase, Var};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RedundancyError {
    #[error(transparent)]
    Info(#[from] InfoError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("no trade-off weight xi for task {task} at layer {layer}")]
    MissingXi { task: TaskId, layer: usize },
    #[error("invalid objective config: {0}")]
    InvalidConfig(String),
}

/// Trade-off weights ξ_i^t. Tasks without an explicit per-layer list use `default`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct XiWeights {
    pub default: f64,
    pub per_task: BTreeMap<TaskId, Vec<f64>>,
}

impl XiWeights {
    pub fn uniform(xi: f64) -> Self {
        XiWeights {
            default: xi,
            per_task: BTreeMap::new(),
        }
    }

    /// ξ for `task` at 1-based `layer`.
    pub fn get(&self, task: &TaskId, layer: usize) -> Result<f64, RedundancyError> {
        match self.per_task.get(task) {
            None => Ok(self.default),
            Some(list) => list
                .get(layer.wrapping_sub(1))
                .copied()
                .ok_or_else(|| RedundancyError::MissingXi {
                    task: task.clone(),
                    layer,
                }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RedundancyObjectiveConfig {
    pub xi: XiWeights,
    /// Tolerance replacing the exact zeros of the disentanglement conditions.
    pub epsilon: f64,
    pub estimator: EstimatorConfig,
}

impl Default for RedundancyObjectiveConfig {
    fn default() -> Self {
        RedundancyObjectiveConfig {
            xi: XiWeights::default(),
            epsilon: 0.01,
            estimator: EstimatorConfig::default(),
        }
    }
}

impl RedundancyObjectiveConfig {
    pub fn validate(&self) -> Result<(), RedundancyError> {
        if !(self.epsilon > 0.0) {
            return Err(RedundancyError::InvalidConfig(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        let bad_xi = std::iter::once(&self.xi.default)
            .chain(self.xi.per_task.values().flatten())
            .any(|x| !(*x >= 0.0));
        if bad_xi {
            return Err(RedundancyError::InvalidConfig("xi weights must be non-negative".into()));
        }
        self.estimator.validate()?;
        Ok(())
    }
}

/// An information value, flagged when it is zero because an argument set is empty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoValue {
    pub value: f64,
    pub structural_zero: bool,
}

impl InfoValue {
    pub const STRUCTURAL_ZERO: InfoValue = InfoValue {
        value: 0.0,
        structural_zero: true,
    };

    fn measured(value: f64) -> Self {
        InfoValue {
            value,
            structural_zero: false,
        }
    }
}

fn neurons(set: &BTreeSet<VertexId>) -> Vec<Var> {
    set.iter().cloned().map(Var::Neuron).collect()
}

fn labels<'a>(tasks: impl IntoIterator<Item = &'a TaskId>) -> Vec<Var> {
    tasks.into_iter().cloned().map(Var::Label).collect()
}

fn r_nats(est: &Estimator, vars: &[Var], task: &TaskId) -> Result<f64, InfoError> {
    if vars.is_empty() {
        return Ok(0.0);
    }
    Ok(est.marginal_entropy_sum_nats(vars)? - est.mi_nats(vars, &[Var::Label(task.clone())])?)
}

/// Σ H(T_i) − I(T; Y^task).
pub fn redundancy_of_set(est: &Estimator, vars: &[Var], task: &TaskId) -> Result<f64, RedundancyError> {
    if vars.is_empty() {
        return Err(InfoError::EmptyVariableSet.into());
    }
    check_known(est, vars)?;
    check_known(est, &[Var::Label(task.clone())])?;
    Ok(est.to_units(r_nats(est, vars, task)?).max(0.0))
}

/// R(t1) + R(t2) + I(t1; t2; Y^task) − Σ_{t1∩t2} H(T_i).
///
/// The sets may overlap; on the exact backend the result equals
/// `redundancy_of_set` of the union.
pub fn join_redundancy(
    est: &Estimator,
    t1: &[Var],
    t2: &[Var],
    task: &TaskId,
) -> Result<f64, RedundancyError> {
    if t1.is_empty() || t2.is_empty() {
        return Err(InfoError::EmptyVariableSet.into());
    }
    check_known(est, t1)?;
    check_known(est, t2)?;
    let y = [Var::Label(task.clone())];
    check_known(est, &y)?;
    let s2: BTreeSet<&Var> = t2.iter().collect();
    let overlap: Vec<Var> = t1
        .iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|v| s2.contains(v))
        .cloned()
        .collect();
    let co = est.co_nats(&[t1, t2, &y], &[])?;
    let nats = r_nats(est, t1, task)? + r_nats(est, t2, task)? + co
        - est.marginal_entropy_sum_nats(&overlap)?;
    Ok(est.to_units(nats))
}

fn check_known(est: &Estimator, vars: &[Var]) -> Result<(), InfoError> {
    match vars.iter().find(|v| !est.contains(v)) {
        Some(v) => Err(InfoError::UnknownVariable(v.clone())),
        None => Ok(()),
    }
}

/// Per-layer terms of the layer-wise redundancy for one task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerTaskTerms {
    /// R_t(L_i^t).
    pub redundancy: f64,
    /// Σ H(T) over L_{i-1}^t ∩ L_i^t.
    pub carried_entropy: f64,
    /// I(L_i^t; Y^t).
    pub task_information: f64,
}

/// Vertices of G^t: every vertex with a path to the sink of `task`.
fn task_vertices(g: &NeuralGraph, task: &TaskId) -> Result<BTreeSet<VertexId>, GraphError> {
    g.ancestors(g.sink_of(task)?)
}

/// Layer outputs L_0^t..L_N^t of the task-connected subgraph.
fn task_layers(g: &NeuralGraph, layering: &Layering, task: &TaskId) -> Result<Vec<BTreeSet<VertexId>>, GraphError> {
    layering.check_against(g)?;
    let members = task_vertices(g, task)?;
    Ok(layering
        .layers()
        .iter()
        .map(|l| l.intersection(&members).cloned().collect())
        .collect())
}

/// Terms for layers 1..=N (index 0 of the result is layer 1).
pub fn layer_terms(
    g: &NeuralGraph,
    layering: &Layering,
    task: &TaskId,
    est: &Estimator,
) -> Result<Vec<LayerTaskTerms>, RedundancyError> {
    let layers = task_layers(g, layering, task)?;
    let y = [Var::Label(task.clone())];
    check_known(est, &y)?;
    let mut out = Vec::with_capacity(layers.len().saturating_sub(1));
    for i in 1..layers.len() {
        let vars = neurons(&layers[i]);
        check_known(est, &vars)?;
        let carried: BTreeSet<VertexId> = layers[i - 1].intersection(&layers[i]).cloned().collect();
        out.push(LayerTaskTerms {
            redundancy: est.to_units(r_nats(est, &vars, task)?).max(0.0),
            carried_entropy: est.to_units(est.marginal_entropy_sum_nats(&neurons(&carried))?),
            task_information: est.to_units(est.mi_nats(&vars, &y)?.max(0.0)),
        });
    }
    Ok(out)
}

fn layerwise_total(terms: &[LayerTaskTerms]) -> f64 {
    terms
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let layer = k + 1;
            t.redundancy - t.carried_entropy + if layer >= 2 { t.task_information } else { 0.0 }
        })
        .sum()
}

/// Σ_i [R(L_i^t) − Σ_{L_{i-1}^t ∩ L_i^t} H(T)] + Σ_{i≥2} I(L_i^t; Y^t).
pub fn layerwise_redundancy(
    g: &NeuralGraph,
    layering: &Layering,
    task: &TaskId,
    est: &Estimator,
) -> Result<f64, RedundancyError> {
    Ok(layerwise_total(&layer_terms(g, layering, task, est)?))
}

/// Redundancy of the union of the task's layer outputs L_1^t..L_N^t, taken as
/// one set. Matches the layer-wise form when every layer output is a function
/// of the previous one.
pub fn direct_redundancy(
    g: &NeuralGraph,
    layering: &Layering,
    task: &TaskId,
    est: &Estimator,
) -> Result<f64, RedundancyError> {
    let layers = task_layers(g, layering, task)?;
    let all: BTreeSet<VertexId> = layers.iter().skip(1).flatten().cloned().collect();
    if all.is_empty() {
        return Ok(0.0);
    }
    redundancy_of_set(est, &neurons(&all), task)
}

/// R_intra^t: the layer-wise redundancy of the task-connected subgraph.
pub fn intra_redundancy(
    g: &NeuralGraph,
    layering: &Layering,
    task: &TaskId,
    est: &Estimator,
) -> Result<f64, RedundancyError> {
    Ok(layerwise_redundancy(g, layering, task, est)?.max(0.0))
}

fn pair_mi(est: &Estimator, a: &BTreeSet<VertexId>, b: &BTreeSet<VertexId>) -> Result<InfoValue, RedundancyError> {
    if a.is_empty() || b.is_empty() {
        return Ok(InfoValue::STRUCTURAL_ZERO);
    }
    let (va, vb) = (neurons(a), neurons(b));
    check_known(est, &va)?;
    check_known(est, &vb)?;
    Ok(InfoValue::measured(est.to_units(est.mi_nats(&va, &vb)?.max(0.0))))
}

/// Per-layer I(L_i'^a; L_i'^b) for the two task-exclusive blocks.
pub fn inter_terms(
    partition: &TaskPartition,
    a: &TaskId,
    b: &TaskId,
    est: &Estimator,
) -> Result<Vec<InfoValue>, RedundancyError> {
    let (ta, tb) = (TaskSet::single(a.clone()), TaskSet::single(b.clone()));
    partition
        .layers
        .iter()
        .map(|lp| pair_mi(est, &lp.block(&ta), &lp.block(&tb)))
        .collect()
}

/// R_inter^{a,b} = Σ_i I(L_i'^a; L_i'^b).
pub fn inter_redundancy(
    g: &NeuralGraph,
    layering: &Layering,
    a: &TaskId,
    b: &TaskId,
    est: &Estimator,
) -> Result<f64, RedundancyError> {
    for t in [a, b] {
        if !g.tasks().contains(t) {
            return Err(GraphError::UnknownTask(t.clone()).into());
        }
    }
    let partition = g.partition(layering)?;
    Ok(inter_terms(&partition, a, b, est)?.iter().map(|v| v.value).sum())
}

/// The three disentanglement values for one layer and one pair of task subsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerConditions {
    pub layer: usize,
    pub tau_a: TaskSet,
    pub tau_b: TaskSet,
    /// I(L'^τa; L'^τb; Y^τa; Y^τb)
    pub c1: InfoValue,
    /// I(L'^{τa∪τb}; Y^τa | L'^τa, Y^τb)
    pub c2: InfoValue,
    /// I(L'^{τa∪τb}; Y^τb | L'^τb, Y^τa)
    pub c3: InfoValue,
}

impl LayerConditions {
    pub fn max_abs(&self) -> f64 {
        [self.c1, self.c2, self.c3]
            .iter()
            .map(|c| c.value.abs())
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisentanglementReport {
    pub epsilon: f64,
    pub layers: Vec<LayerConditions>,
    pub passed: bool,
}

/// Pairs of distinct task subsets checked per layer: just ({A}, {B}) for two
/// tasks, every unordered pair of distinct nonempty subsets otherwise.
pub fn condition_pairs(tasks: &[TaskId]) -> Vec<(TaskSet, TaskSet)> {
    if tasks.len() == 2 {
        return vec![(TaskSet::single(tasks[0].clone()), TaskSet::single(tasks[1].clone()))];
    }
    let subsets = nonempty_subsets(tasks);
    let mut pairs = Vec::new();
    for i in 0..subsets.len() {
        for j in i + 1..subsets.len() {
            pairs.push((subsets[i].clone(), subsets[j].clone()));
        }
    }
    pairs
}

/// Nonempty subsets ordered by size, then by the position of their members in `tasks`.
pub fn nonempty_subsets(tasks: &[TaskId]) -> Vec<TaskSet> {
    let k = tasks.len();
    let mut masks: Vec<u32> = (1..(1u32 << k)).collect();
    masks.sort_by_key(|m| (m.count_ones(), *m));
    masks
        .into_iter()
        .map(|m| (0..k).filter(|i| m & (1 << i) != 0).map(|i| tasks[i].clone()).collect())
        .collect()
}

pub(crate) fn conditions_for_partition(
    partition: &TaskPartition,
    tasks: &[TaskId],
    est: &Estimator,
    epsilon: f64,
) -> Result<DisentanglementReport, RedundancyError> {
    let pairs = condition_pairs(tasks);
    let mut layers = Vec::new();
    for lp in &partition.layers {
        for (ta, tb) in &pairs {
            let la = neurons(&lp.block(ta));
            let lb = neurons(&lp.block(tb));
            let shared = neurons(&lp.block(&ta.union(tb)));
            let (ya, yb) = (labels(ta.iter()), labels(tb.iter()));
            for vs in [&la, &lb, &shared, &ya, &yb] {
                check_known(est, vs)?;
            }
            let c1 = if la.is_empty() || lb.is_empty() {
                InfoValue::STRUCTURAL_ZERO
            } else {
                InfoValue::measured(est.to_units(est.co_nats(&[&la, &lb, &ya, &yb], &[])?))
            };
            let cond = |own: &[Var], own_y: &[Var], other_y: &[Var]| -> Result<InfoValue, RedundancyError> {
                if shared.is_empty() {
                    return Ok(InfoValue::STRUCTURAL_ZERO);
                }
                let given: Vec<Var> = own.iter().chain(other_y).cloned().collect();
                Ok(InfoValue::measured(
                    est.to_units(est.cmi_nats(&shared, own_y, &given)?.max(0.0)),
                ))
            };
            layers.push(LayerConditions {
                layer: lp.layer,
                tau_a: ta.clone(),
                tau_b: tb.clone(),
                c1,
                c2: cond(&la, &ya, &yb)?,
                c3: cond(&lb, &yb, &ya)?,
            });
        }
    }
    let passed = layers.iter().all(|l| l.max_abs() <= epsilon);
    Ok(DisentanglementReport {
        epsilon,
        layers,
        passed,
    })
}

/// Evaluates the disentanglement conditions at every internal layer.
pub fn disentanglement_check(
    g: &NeuralGraph,
    layering: &Layering,
    tasks: &[TaskId],
    est: &Estimator,
    epsilon: f64,
) -> Result<DisentanglementReport, RedundancyError> {
    if tasks.len() < 2 {
        return Err(RedundancyError::InvalidConfig(
            "the disentanglement check needs at least two tasks".into(),
        ));
    }
    for t in tasks {
        if !g.tasks().contains(t) {
            return Err(GraphError::UnknownTask(t.clone()).into());
        }
    }
    let partition = g.partition(layering)?;
    conditions_for_partition(&partition, tasks, est, epsilon)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub tasks: (TaskId, TaskId),
    pub value: InfoValue,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTotal {
    pub tasks: (TaskId, TaskId),
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub layer: usize,
    pub tasks: BTreeMap<TaskId, LayerTaskTerms>,
    pub inter: Vec<PairTerm>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleTaskObjective {
    /// R_t(G^t) − Σ_i ξ_i I(L_i^t; Y^t), with the redundancy taken over G^t directly.
    pub whole_graph: f64,
    /// Σ_i [R_t(L_i^t) − carried_i − ξ_i I(L_i^t; Y^t)].
    pub layer_wise: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskObjective {
    /// One layer-wise objective per task.
    pub task_terms: BTreeMap<TaskId, f64>,
    /// Σ_i I(L_i'^a; L_i'^b) per task pair.
    pub inter_terms: Vec<PairTotal>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintValue {
    pub layer: usize,
    pub tau_a: TaskSet,
    pub tau_b: TaskSet,
    pub value: InfoValue,
}

/// The multi-task problem with inter-redundancy replaced by the zero
/// co-information constraint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedObjective {
    pub task_terms: BTreeMap<TaskId, f64>,
    pub constraints: Vec<ConstraintValue>,
    pub satisfied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objectives {
    pub single_task: BTreeMap<TaskId, SingleTaskObjective>,
    pub multi_task: MultiTaskObjective,
    pub reduced: ReducedObjective,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RedundancyReport {
    pub format_version: u32,
    pub log_base: LogBase,
    pub tasks: Vec<TaskId>,
    pub depth: usize,
    pub layers: Vec<LayerReport>,
    /// R_intra^t from the layer-wise form.
    pub intra: BTreeMap<TaskId, f64>,
    /// R_t over the union of the task's layer outputs in one set.
    pub intra_direct: BTreeMap<TaskId, f64>,
    pub inter: Vec<PairTotal>,
    pub conditions: DisentanglementReport,
    pub objectives: Objectives,
}

/// Evaluates every redundancy term and objective (nothing is optimised).
pub fn objective_values(
    g: &NeuralGraph,
    layering: &Layering,
    tasks: &[TaskId],
    est: &Estimator,
    cfg: &RedundancyObjectiveConfig,
) -> Result<RedundancyReport, RedundancyError> {
    cfg.validate()?;
    for t in tasks {
        if !g.tasks().contains(t) {
            return Err(GraphError::UnknownTask(t.clone()).into());
        }
    }
    let depth = layering.depth();
    let partition = g.partition(layering)?;

    let mut per_task: BTreeMap<TaskId, Vec<LayerTaskTerms>> = BTreeMap::new();
    for t in tasks {
        per_task.insert(t.clone(), layer_terms(g, layering, t, est)?);
    }
    let pairs: Vec<(TaskId, TaskId)> = (0..tasks.len())
        .flat_map(|i| (i + 1..tasks.len()).map(move |j| (i, j)))
        .map(|(i, j)| (tasks[i].clone(), tasks[j].clone()))
        .collect();
    let mut per_pair: Vec<Vec<InfoValue>> = Vec::with_capacity(pairs.len());
    for (a, b) in &pairs {
        per_pair.push(inter_terms(&partition, a, b, est)?);
    }

    let layers: Vec<LayerReport> = (0..depth)
        .map(|k| LayerReport {
            layer: k + 1,
            tasks: per_task.iter().map(|(t, terms)| (t.clone(), terms[k].clone())).collect(),
            inter: pairs
                .iter()
                .zip(&per_pair)
                .map(|(p, vals)| PairTerm {
                    tasks: p.clone(),
                    value: vals[k],
                })
                .collect(),
        })
        .collect();

    let mut intra = BTreeMap::new();
    let mut intra_direct = BTreeMap::new();
    let mut single_task = BTreeMap::new();
    let mut task_terms = BTreeMap::new();
    for t in tasks {
        let terms = &per_task[t];
        let layerwise = layerwise_total(terms);
        let direct = direct_redundancy(g, layering, t, est)?;
        let mut weighted_info = 0.0;
        let mut layer_objective = 0.0;
        for (k, term) in terms.iter().enumerate() {
            let xi = cfg.xi.get(t, k + 1)?;
            weighted_info += xi * term.task_information;
            layer_objective += term.redundancy - term.carried_entropy - xi * term.task_information;
        }
        intra.insert(t.clone(), layerwise);
        intra_direct.insert(t.clone(), direct);
        single_task.insert(
            t.clone(),
            SingleTaskObjective {
                whole_graph: direct - weighted_info,
                layer_wise: layer_objective,
            },
        );
        task_terms.insert(t.clone(), layer_objective);
    }

    let inter: Vec<PairTotal> = pairs
        .iter()
        .zip(&per_pair)
        .map(|(p, vals)| PairTotal {
            tasks: p.clone(),
            value: vals.iter().map(|v| v.value).sum(),
        })
        .collect();

    let conditions = if tasks.len() >= 2 {
        conditions_for_partition(&partition, tasks, est, cfg.epsilon)?
    } else {
        DisentanglementReport {
            epsilon: cfg.epsilon,
            layers: Vec::new(),
            passed: true,
        }
    };
    let constraints: Vec<ConstraintValue> = conditions
        .layers
        .iter()
        .map(|l| ConstraintValue {
            layer: l.layer,
            tau_a: l.tau_a.clone(),
            tau_b: l.tau_b.clone(),
            value: l.c1,
        })
        .collect();
    let satisfied = constraints.iter().all(|c| c.value.value.abs() <= cfg.epsilon);

    Ok(RedundancyReport {
        format_version: REPORT_FORMAT_VERSION,
        log_base: est.config().log_base,
        tasks: tasks.to_vec(),
        depth,
        layers,
        intra,
        intra_direct,
        inter: inter.clone(),
        conditions,
        objectives: Objectives {
            single_task,
            multi_task: MultiTaskObjective {
                task_terms: task_terms.clone(),
                inter_terms: inter,
            },
            reduced: ReducedObjective {
                task_terms,
                constraints,
                satisfied,
            },
        },
    })
}
