use std::collections::BTreeSet;

use super::{InfoError, Var, MAX_EXACT_OUTCOMES};

/// Probability table over a finite product alphabet.
///
/// Outcomes are stored row-major with the first variable most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteJoint {
    vars: Vec<Var>,
    cards: Vec<usize>,
    probs: Vec<f64>,
}

impl DiscreteJoint {
    pub fn new(vars: Vec<(Var, usize)>, probs: Vec<f64>) -> Result<Self, InfoError> {
        if vars.is_empty() {
            return Err(InfoError::EmptyVariableSet);
        }
        let mut seen = BTreeSet::new();
        for (v, card) in &vars {
            if !seen.insert(v) {
                return Err(InfoError::InvalidDistribution(format!("duplicate variable {v}")));
            }
            if *card == 0 {
                return Err(InfoError::InvalidDistribution(format!("variable {v} has an empty alphabet")));
            }
        }
        let outcomes = vars
            .iter()
            .try_fold(1u128, |acc, (_, c)| acc.checked_mul(*c as u128))
            .unwrap_or(u128::MAX);
        if outcomes > MAX_EXACT_OUTCOMES as u128 {
            return Err(InfoError::AlphabetTooLarge {
                outcomes,
                limit: MAX_EXACT_OUTCOMES,
            });
        }
        if probs.len() as u128 != outcomes {
            return Err(InfoError::InvalidDistribution(format!(
                "table has {} entries, alphabet has {outcomes} outcomes",
                probs.len()
            )));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(InfoError::InvalidDistribution("negative or non-finite probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(InfoError::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        let (vars, cards) = vars.into_iter().unzip();
        Ok(DiscreteJoint { vars, cards, probs })
    }

    /// Builds the table from an unnormalized weight function over outcome tuples.
    pub fn from_weights(
        vars: Vec<(Var, usize)>,
        weight: impl Fn(&[usize]) -> f64,
    ) -> Result<Self, InfoError> {
        let cards: Vec<usize> = vars.iter().map(|(_, c)| *c).collect();
        let total_outcomes: usize = cards.iter().product();
        let mut probs = Vec::with_capacity(total_outcomes);
        let mut outcome = vec![0usize; cards.len()];
        for _ in 0..total_outcomes {
            probs.push(weight(&outcome));
            increment(&mut outcome, &cards);
        }
        let total: f64 = probs.iter().sum();
        if !(total > 0.0) {
            return Err(InfoError::InvalidDistribution("weights sum to zero".into()));
        }
        probs.iter_mut().for_each(|p| *p /= total);
        // Renormalising can leave the sum a few ulps off 1; absorb the residue.
        let residue = 1.0 - probs.iter().sum::<f64>();
        if let Some(p) = probs.iter_mut().max_by(|a, b| a.total_cmp(b)) {
            *p += residue;
        }
        Self::new(vars, probs)
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn cardinality(&self, v: &Var) -> Option<usize> {
        self.position(v).map(|i| self.cards[i])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn position(&self, v: &Var) -> Option<usize> {
        self.vars.iter().position(|x| x == v)
    }

    /// Marginal distribution over `keep`, in this table's variable order.
    pub fn marginal(&self, keep: &[Var]) -> Result<DiscreteJoint, InfoError> {
        let (positions, probs) = self.marginal_table(keep)?;
        let vars = positions
            .iter()
            .map(|&i| (self.vars[i].clone(), self.cards[i]))
            .collect();
        DiscreteJoint::new(vars, probs).or_else(|_| {
            // Summation order can move the total by an ulp or two.
            let (positions, mut probs) = self.marginal_table(keep)?;
            let total: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= total);
            let vars = positions
                .iter()
                .map(|&i| (self.vars[i].clone(), self.cards[i]))
                .collect();
            DiscreteJoint::new(vars, probs)
        })
    }

    fn marginal_table(&self, keep: &[Var]) -> Result<(Vec<usize>, Vec<f64>), InfoError> {
        let mut positions = Vec::with_capacity(keep.len());
        for v in keep {
            let p = self
                .position(v)
                .ok_or_else(|| InfoError::UnknownVariable(v.clone()))?;
            if !positions.contains(&p) {
                positions.push(p);
            }
        }
        positions.sort_unstable();
        let size: usize = positions.iter().map(|&i| self.cards[i]).product();
        let mut out = vec![0.0; size];
        let mut outcome = vec![0usize; self.cards.len()];
        for &p in &self.probs {
            let idx = positions
                .iter()
                .fold(0usize, |acc, &i| acc * self.cards[i] + outcome[i]);
            out[idx] += p;
            increment(&mut outcome, &self.cards);
        }
        Ok((positions, out))
    }

    /// Joint entropy of `vars` in nats. An empty set has zero entropy.
    pub(crate) fn entropy_nats(&self, vars: &[Var]) -> Result<f64, InfoError> {
        if vars.is_empty() {
            return Ok(0.0);
        }
        let (_, table) = self.marginal_table(vars)?;
        Ok(table
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| -p * p.ln())
            .sum())
    }
}

pub(crate) fn increment(outcome: &mut [usize], cards: &[usize]) {
    for i in (0..outcome.len()).rev() {
        outcome[i] += 1;
        if outcome[i] < cards[i] {
            return;
        }
        outcome[i] = 0;
    }
}
