use std::collections::{BTreeSet, HashMap};

use crate::graph::{TaskId, VertexId};

use super::dataset::bin_column;
use super::{
    kl, ActivationDataset, Backend, DiscreteJoint, EstimatorConfig, InfoError, Source, Var,
    MAX_EXACT_OUTCOMES,
};

/// Symbolized column: dense codes in `0..alphabet`.
#[derive(Clone, Debug)]
struct Coded {
    codes: Vec<u32>,
    alphabet: usize,
}

#[derive(Debug)]
enum Backing<'a> {
    Joint(&'a DiscreteJoint),
    Samples {
        data: &'a ActivationDataset,
        columns: HashMap<Var, Coded>,
    },
}

/// Information measures over one source under one configuration.
///
/// Construction symbolizes every column once (quantile binning for the binned
/// and KL backends); afterwards all methods take `&self` and the estimator can
/// be shared across threads.
#[derive(Debug)]
pub struct Estimator<'a> {
    cfg: EstimatorConfig,
    backing: Backing<'a>,
}

impl<'a> Estimator<'a> {
    pub fn new(source: Source<'a>, cfg: &EstimatorConfig) -> Result<Self, InfoError> {
        cfg.validate()?;
        let backing = match source {
            Source::Joint(j) => Backing::Joint(j),
            Source::Data(data) => {
                if data.sample_count() < 2 {
                    return Err(InfoError::DegenerateDataset(data.sample_count()));
                }
                let mut columns = HashMap::new();
                for id in data.neuron_ids() {
                    let col = data.neuron(id).unwrap();
                    let coded = match cfg.backend {
                        Backend::ExactDiscrete => densify(col.iter().map(|x| x.to_bits())),
                        Backend::BinnedPlugin | Backend::KlUpperBound => {
                            let (codes, _) = bin_column(col, cfg.bins);
                            densify(codes.into_iter())
                        }
                    };
                    columns.insert(Var::Neuron(id.clone()), coded);
                }
                for t in data.tasks() {
                    let col = data.label(t).unwrap();
                    columns.insert(Var::Label(t.clone()), densify(col.iter().copied()));
                }
                Backing::Samples { data, columns }
            }
        };
        Ok(Estimator {
            cfg: cfg.clone(),
            backing,
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    pub fn contains(&self, v: &Var) -> bool {
        match &self.backing {
            Backing::Joint(j) => j.cardinality(v).is_some(),
            Backing::Samples { columns, .. } => columns.contains_key(v),
        }
    }

    fn out(&self, nats: f64) -> f64 {
        self.cfg.log_base.scale_nats(nats)
    }

    /// Joint entropy in nats of the union of `vars`; zero for the empty set.
    pub(crate) fn entropy_nats(&self, vars: &[Var]) -> Result<f64, InfoError> {
        let set: BTreeSet<&Var> = vars.iter().collect();
        let vars: Vec<Var> = set.into_iter().cloned().collect();
        match &self.backing {
            Backing::Joint(j) => j.entropy_nats(&vars),
            Backing::Samples { data, columns } => {
                let mut cols = Vec::with_capacity(vars.len());
                for v in &vars {
                    cols.push(
                        columns
                            .get(v)
                            .ok_or_else(|| InfoError::UnknownVariable(v.clone()))?,
                    );
                }
                if self.cfg.backend == Backend::ExactDiscrete {
                    let outcomes = cols
                        .iter()
                        .try_fold(1u128, |acc, c| acc.checked_mul(c.alphabet as u128))
                        .unwrap_or(u128::MAX);
                    if outcomes > MAX_EXACT_OUTCOMES as u128 {
                        return Err(InfoError::AlphabetTooLarge {
                            outcomes,
                            limit: MAX_EXACT_OUTCOMES,
                        });
                    }
                }
                Ok(plugin_entropy(&cols, data.sample_count()))
            }
        }
    }

    fn check_known(&self, vars: &[Var]) -> Result<(), InfoError> {
        match vars.iter().find(|v| !self.contains(v)) {
            Some(v) => Err(InfoError::UnknownVariable(v.clone())),
            None => Ok(()),
        }
    }

    /// I(a; b) in nats; sets may overlap. Routed through the KL bound when the
    /// backend asks for it and the split is neurons versus labels.
    pub(crate) fn mi_nats(&self, a: &[Var], b: &[Var]) -> Result<f64, InfoError> {
        if a.is_empty() || b.is_empty() {
            return Ok(0.0);
        }
        if let (Backend::KlUpperBound, Backing::Samples { data, .. }) = (self.cfg.backend, &self.backing) {
            if let Some((neurons, labels)) = split_neurons_labels(a, b).or_else(|| split_neurons_labels(b, a)) {
                return kl::kl_bound_nats(data, &neurons, &labels, &self.cfg);
            }
        }
        let ha = self.entropy_nats(a)?;
        let hb = self.entropy_nats(b)?;
        let hab = self.entropy_nats(&union(&[a, b]))?;
        Ok(ha + hb - hab)
    }

    /// I(a; b | c) in nats; sets may overlap.
    pub(crate) fn cmi_nats(&self, a: &[Var], b: &[Var], c: &[Var]) -> Result<f64, InfoError> {
        if a.is_empty() || b.is_empty() {
            return Ok(0.0);
        }
        if c.is_empty() {
            return self.mi_nats(a, b);
        }
        let hac = self.entropy_nats(&union(&[a, c]))?;
        let hbc = self.entropy_nats(&union(&[b, c]))?;
        let habc = self.entropy_nats(&union(&[a, b, c]))?;
        let hc = self.entropy_nats(c)?;
        Ok(hac + hbc - habc - hc)
    }

    /// I(S_1; ...; S_n | c) in nats via
    /// I(S_1;…;S_n | c) = I(S_1;…;S_{n-1} | c) − I(S_1;…;S_{n-1} | c, S_n).
    pub(crate) fn co_nats(&self, sets: &[&[Var]], c: &[Var]) -> Result<f64, InfoError> {
        match sets.len() {
            0 | 1 => Err(InfoError::TooFewSets(sets.len())),
            2 => self.cmi_nats(sets[0], sets[1], c),
            n => {
                let head = &sets[..n - 1];
                let with_last = union(&[c, sets[n - 1]]);
                Ok(self.co_nats(head, c)? - self.co_nats(head, &with_last)?)
            }
        }
    }

    pub fn entropy(&self, vars: &[Var]) -> Result<f64, InfoError> {
        nonempty(vars)?;
        self.check_known(vars)?;
        Ok(self.out(self.entropy_nats(vars)?.max(0.0)))
    }

    pub fn mutual_info(&self, set1: &[Var], set2: &[Var]) -> Result<f64, InfoError> {
        nonempty(set1)?;
        nonempty(set2)?;
        disjoint(&[set1, set2])?;
        self.check_known(set1)?;
        self.check_known(set2)?;
        Ok(self.out(self.mi_nats(set1, set2)?.max(0.0)))
    }

    pub fn conditional_mi(&self, set1: &[Var], set2: &[Var], cond: &[Var]) -> Result<f64, InfoError> {
        nonempty(set1)?;
        nonempty(set2)?;
        disjoint(&[set1, set2, cond])?;
        for s in [set1, set2, cond] {
            self.check_known(s)?;
        }
        Ok(self.out(self.cmi_nats(set1, set2, cond)?.max(0.0)))
    }

    /// n-way co-information; may be negative and is never clamped.
    pub fn co_information(&self, sets: &[&[Var]]) -> Result<f64, InfoError> {
        if sets.len() < 2 {
            return Err(InfoError::TooFewSets(sets.len()));
        }
        for s in sets {
            nonempty(s)?;
            self.check_known(s)?;
        }
        disjoint(sets)?;
        Ok(self.out(self.co_nats(sets, &[])?))
    }

    /// Σ H(T_i) − H(T).
    pub fn total_correlation(&self, vars: &[Var]) -> Result<f64, InfoError> {
        nonempty(vars)?;
        self.check_known(vars)?;
        let distinct: BTreeSet<&Var> = vars.iter().collect();
        let mut sum = 0.0;
        for v in &distinct {
            sum += self.entropy_nats(std::slice::from_ref(*v))?;
        }
        Ok(self.out((sum - self.entropy_nats(vars)?).max(0.0)))
    }

    /// Sum of the single-variable entropies of the distinct members of `vars`, in nats.
    pub(crate) fn marginal_entropy_sum_nats(&self, vars: &[Var]) -> Result<f64, InfoError> {
        let distinct: BTreeSet<&Var> = vars.iter().collect();
        distinct
            .into_iter()
            .try_fold(0.0, |acc, v| Ok(acc + self.entropy_nats(std::slice::from_ref(v))?))
    }

    pub(crate) fn to_units(&self, nats: f64) -> f64 {
        self.out(nats)
    }
}

fn nonempty(vars: &[Var]) -> Result<(), InfoError> {
    if vars.is_empty() {
        Err(InfoError::EmptyVariableSet)
    } else {
        Ok(())
    }
}

fn disjoint(sets: &[&[Var]]) -> Result<(), InfoError> {
    let mut seen = BTreeSet::new();
    for s in sets {
        let own: BTreeSet<&Var> = s.iter().collect();
        for v in own {
            if !seen.insert(v) {
                return Err(InfoError::Overlap(v.clone()));
            }
        }
    }
    Ok(())
}

pub(crate) fn union(sets: &[&[Var]]) -> Vec<Var> {
    let all: BTreeSet<&Var> = sets.iter().flat_map(|s| s.iter()).collect();
    all.into_iter().cloned().collect()
}

fn split_neurons_labels(a: &[Var], b: &[Var]) -> Option<(Vec<VertexId>, Vec<TaskId>)> {
    let neurons: Option<Vec<VertexId>> = a
        .iter()
        .map(|v| match v {
            Var::Neuron(id) => Some(id.clone()),
            Var::Label(_) => None,
        })
        .collect();
    let labels: Option<Vec<TaskId>> = b
        .iter()
        .map(|v| match v {
            Var::Label(t) => Some(t.clone()),
            Var::Neuron(_) => None,
        })
        .collect();
    Some((neurons?, labels?))
}

fn densify<T: Eq + std::hash::Hash>(values: impl Iterator<Item = T>) -> Coded {
    let mut map: HashMap<T, u32> = HashMap::new();
    let codes = values
        .map(|v| {
            let next = map.len() as u32;
            *map.entry(v).or_insert(next)
        })
        .collect();
    Coded {
        codes,
        alphabet: map.len(),
    }
}

/// Plug-in joint entropy (nats) of the given symbol columns.
fn plugin_entropy(cols: &[&Coded], n: usize) -> f64 {
    if cols.is_empty() {
        return 0.0;
    }
    // Combine columns one at a time, re-densifying so keys stay below n * alphabet.
    let mut coded = Coded {
        codes: cols[0].codes.clone(),
        alphabet: cols[0].alphabet,
    };
    for col in &cols[1..] {
        let radix = col.alphabet as u64;
        let combined = coded
            .codes
            .iter()
            .zip(&col.codes)
            .map(|(&k, &c)| k as u64 * radix + c as u64);
        coded = densify(combined);
    }
    // Dense codes give a fixed summation order, so results are reproducible.
    let mut counts = vec![0usize; coded.alphabet];
    for k in coded.codes {
        counts[k as usize] += 1;
    }
    let nf = n as f64;
    let sum_clogc: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let c = c as f64;
            c * c.ln()
        })
        .sum();
    nf.ln() - sum_clogc / nf
}
