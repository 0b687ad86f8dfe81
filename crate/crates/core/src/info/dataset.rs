use std::collections::{BTreeMap, BTreeSet};

use crate::graph::{TaskId, VertexId};

use super::{InfoError, Var};

/// Sampled neuron outputs plus per-task discrete labels.
///
/// Columns are stored column-major; every column has `sample_count` entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ActivationDataset {
    sample_count: usize,
    neurons: BTreeMap<VertexId, Vec<f64>>,
    labels: BTreeMap<TaskId, Vec<i64>>,
}

impl ActivationDataset {
    pub fn new(sample_count: usize) -> Self {
        ActivationDataset {
            sample_count,
            ..Default::default()
        }
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn insert_neuron(&mut self, id: VertexId, values: Vec<f64>) -> Result<(), InfoError> {
        self.check_len(&Var::Neuron(id.clone()), values.len())?;
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(InfoError::InvalidDataset(format!(
                "column {id} has a missing or non-finite value at row {i}"
            )));
        }
        if self.neurons.insert(id.clone(), values).is_some() {
            return Err(InfoError::InvalidDataset(format!("duplicate column {id}")));
        }
        Ok(())
    }

    pub fn insert_label(&mut self, task: TaskId, values: Vec<i64>) -> Result<(), InfoError> {
        self.check_len(&Var::Label(task.clone()), values.len())?;
        if self.labels.insert(task.clone(), values).is_some() {
            return Err(InfoError::InvalidDataset(format!("duplicate label column {task}")));
        }
        Ok(())
    }

    pub fn with_neuron(mut self, id: VertexId, values: Vec<f64>) -> Result<Self, InfoError> {
        self.insert_neuron(id, values)?;
        Ok(self)
    }

    pub fn with_label(mut self, task: TaskId, values: Vec<i64>) -> Result<Self, InfoError> {
        self.insert_label(task, values)?;
        Ok(self)
    }

    fn check_len(&self, var: &Var, len: usize) -> Result<(), InfoError> {
        if len != self.sample_count {
            return Err(InfoError::InvalidDataset(format!(
                "column {var} has {len} rows, expected {}",
                self.sample_count
            )));
        }
        Ok(())
    }

    pub fn neuron(&self, id: &VertexId) -> Option<&[f64]> {
        self.neurons.get(id).map(Vec::as_slice)
    }

    pub fn label(&self, task: &TaskId) -> Option<&[i64]> {
        self.labels.get(task).map(Vec::as_slice)
    }

    pub fn neuron_ids(&self) -> impl Iterator<Item = &VertexId> {
        self.neurons.keys()
    }

    pub fn tasks(&self) -> impl Iterator<Item = &TaskId> {
        self.labels.keys()
    }

    pub fn contains(&self, var: &Var) -> bool {
        match var {
            Var::Neuron(v) => self.neurons.contains_key(v),
            Var::Label(t) => self.labels.contains_key(t),
        }
    }

    /// Every label column must distinguish at least two classes.
    pub fn validate_labels(&self) -> Result<(), InfoError> {
        for (t, col) in &self.labels {
            let distinct: BTreeSet<i64> = col.iter().copied().collect();
            if distinct.len() < 2 {
                return Err(InfoError::InvalidDataset(format!(
                    "label column {t} has alphabet size {}",
                    distinct.len()
                )));
            }
        }
        Ok(())
    }

    /// True when every neuron column holds integral values with at most
    /// `max_alphabet` distinct symbols.
    pub fn is_discrete(&self, max_alphabet: usize) -> bool {
        self.neurons.values().all(|col| {
            let mut distinct = BTreeSet::new();
            col.iter().all(|x| {
                x.fract() == 0.0 && {
                    distinct.insert(x.to_bits());
                    distinct.len() <= max_alphabet
                }
            })
        })
    }

    /// Copy restricted to the given neurons and labels.
    pub fn select(&self, vars: &[Var]) -> Result<ActivationDataset, InfoError> {
        let mut out = ActivationDataset::new(self.sample_count);
        for v in vars {
            match v {
                Var::Neuron(id) => {
                    let col = self.neuron(id).ok_or_else(|| InfoError::UnknownVariable(v.clone()))?;
                    out.neurons.insert(id.clone(), col.to_vec());
                }
                Var::Label(t) => {
                    let col = self.label(t).ok_or_else(|| InfoError::UnknownVariable(v.clone()))?;
                    out.labels.insert(t.clone(), col.to_vec());
                }
            }
        }
        Ok(out)
    }
}

/// Replaces each selected neuron column by its per-column quantile bin index.
///
/// Labels and unselected columns are untouched. Columns with at most `bins`
/// distinct values keep one bin per value (ranked); otherwise cut points sit at
/// the `k/bins` empirical quantiles and a value equal to a cut point goes to the
/// lower bin. A constant column lands entirely in bin 0.
pub fn quantile_bin(
    data: &ActivationDataset,
    vars: &[Var],
    bins: usize,
) -> Result<ActivationDataset, InfoError> {
    if bins < 2 {
        return Err(InfoError::InvalidConfig(format!("bins must be at least 2, got {bins}")));
    }
    let mut out = data.clone();
    for v in vars {
        match v {
            Var::Neuron(id) => {
                let col = out
                    .neurons
                    .get_mut(id)
                    .ok_or_else(|| InfoError::UnknownVariable(v.clone()))?;
                let (codes, used) = bin_column(col, bins);
                if used == 1 && !col.is_empty() {
                    log::warn!("column {id} is constant; binned into a single bin");
                }
                *col = codes.into_iter().map(f64::from).collect();
            }
            Var::Label(t) => {
                if !data.labels.contains_key(t) {
                    return Err(InfoError::UnknownVariable(v.clone()));
                }
            }
        }
    }
    Ok(out)
}

/// Bin indices for one column plus the number of bins actually used.
pub(crate) fn bin_column(values: &[f64], bins: usize) -> (Vec<u32>, usize) {
    let n = values.len();
    if n == 0 {
        return (Vec::new(), 0);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() <= bins {
        let codes = values
            .iter()
            .map(|x| distinct.partition_point(|d| d < x) as u32)
            .collect();
        return (codes, distinct.len());
    }
    // Upper edge of bin b-1 is the ceil(b*n/bins)-th order statistic.
    let mut cuts: Vec<f64> = (1..bins)
        .map(|b| sorted[(b * n).div_ceil(bins) - 1])
        .collect();
    cuts.dedup();
    let codes: Vec<u32> = values
        .iter()
        .map(|x| cuts.partition_point(|c| c < x) as u32)
        .collect();
    let used = codes.iter().collect::<BTreeSet<_>>().len();
    (codes, used)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn id(i: u32) -> VertexId {
        VertexId::new("n", 1, i)
    }

    #[test]
    fn binary_column_unchanged_up_to_relabeling() {
        let col = vec![1.0, 1.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        let (codes, used) = bin_column(&col, 2);
        assert_eq!(used, 2);
        assert_eq!(codes, vec![1, 1, 0, 1, 1, 1, 0]);
    }

    #[test]
    fn uniform_samples_fill_bins_evenly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for n in [1000usize, 1001, 1003] {
            let col: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let (codes, used) = bin_column(&col, 4);
            assert_eq!(used, 4);
            let mut counts = [0usize; 4];
            codes.iter().for_each(|c| counts[*c as usize] += 1);
            let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
            assert!(hi - lo <= 1, "{counts:?}");
        }
    }

    #[test]
    fn boundary_ties_go_to_lower_bin() {
        // 10 values, 5 distinct > 2 bins: the cut is the 5th order statistic (3.0).
        let col = vec![1.0, 2.0, 3.0, 3.0, 3.0, 3.0, 4.0, 5.0, 5.0, 5.0];
        let (codes, _) = bin_column(&col, 2);
        assert_eq!(codes, vec![0, 0, 0, 0, 0, 0, 1, 1, 1, 1]);
    }

    #[test]
    fn constant_column_single_bin() {
        let d = ActivationDataset::new(5)
            .with_neuron(id(0), vec![0.3; 5])
            .unwrap();
        let b = quantile_bin(&d, &[Var::Neuron(id(0))], 4).unwrap();
        assert_eq!(b.neuron(&id(0)).unwrap(), &[0.0; 5]);
    }

    #[test]
    fn dataset_rejects_bad_columns() {
        let mut d = ActivationDataset::new(3);
        assert!(d.insert_neuron(id(0), vec![1.0, 2.0]).is_err());
        assert!(d.insert_neuron(id(0), vec![1.0, f64::NAN, 2.0]).is_err());
        d.insert_neuron(id(0), vec![1.0, 2.0, 3.0]).unwrap();
        assert!(d.insert_neuron(id(0), vec![1.0, 2.0, 3.0]).is_err());
        d.insert_label("A".into(), vec![1, 1, 1]).unwrap();
        assert!(d.validate_labels().is_err());
        assert!(quantile_bin(&d, &[Var::Neuron(id(9))], 4).is_err());
        assert!(quantile_bin(&d, &[Var::Neuron(id(0))], 1).is_err());
    }
}
