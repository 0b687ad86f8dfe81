//! Mixture-entropy upper bound on I(neurons; label) from pairwise KL
//! divergences between class-conditional Gaussians.
//!
//! With class weights w_c and class fits N_c the bound is
//! `-Σ_c w_c ln Σ_c' w_c' exp(-KL(N_c ‖ N_c'))`.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::graph::{TaskId, VertexId};

use super::{ActivationDataset, Backend, CovarianceMode, EstimatorConfig, InfoError, Var};

/// Gaussian fit with its Cholesky factor cached.
pub(crate) struct GaussianFit {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl GaussianFit {
    pub(crate) fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self, InfoError> {
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| InfoError::Singular(format!("{}x{} covariance", cov.nrows(), cov.ncols())))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(InfoError::Singular("non-finite log-determinant".into()));
        }
        Ok(GaussianFit {
            mean,
            cov,
            chol,
            log_det,
        })
    }
}

/// KL(p ‖ q) in nats between two Gaussian fits of equal dimension.
pub(crate) fn kl_fits(p: &GaussianFit, q: &GaussianFit) -> f64 {
    let d = p.mean.len() as f64;
    let trace = q.chol.solve(&p.cov).trace();
    let delta = &q.mean - &p.mean;
    let maha = delta.dot(&q.chol.solve(&delta));
    0.5 * (trace + maha - d + q.log_det - p.log_det)
}

/// KL(N(mean_p, cov_p) ‖ N(mean_q, cov_q)) in nats.
pub fn gaussian_kl(
    mean_p: &[f64],
    cov_p: &DMatrix<f64>,
    mean_q: &[f64],
    cov_q: &DMatrix<f64>,
) -> Result<f64, InfoError> {
    let p = GaussianFit::new(DVector::from_column_slice(mean_p), cov_p.clone())?;
    let q = GaussianFit::new(DVector::from_column_slice(mean_q), cov_q.clone())?;
    Ok(kl_fits(&p, &q))
}

/// Pairwise-KL upper bound on I(vars; labels), in the configured units.
///
/// `vars` must be neurons; several labels are combined into one joint class.
/// Requires the `kl-upper-bound` backend.
pub fn kl_upper_bound_mi(
    vars: &[Var],
    labels: &[TaskId],
    data: &ActivationDataset,
    cfg: &EstimatorConfig,
) -> Result<f64, InfoError> {
    cfg.validate()?;
    if cfg.backend != Backend::KlUpperBound {
        return Err(InfoError::InvalidConfig(
            "kl_upper_bound_mi requires the kl-upper-bound backend".into(),
        ));
    }
    let neurons = vars
        .iter()
        .map(|v| match v {
            Var::Neuron(id) => Ok(id.clone()),
            Var::Label(_) => Err(InfoError::InvalidConfig(format!(
                "{v} is a label; the KL bound fits Gaussians over neurons only"
            ))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(cfg.log_base.scale_nats(kl_bound_nats(data, &neurons, labels, cfg)?))
}

pub(crate) fn kl_bound_nats(
    data: &ActivationDataset,
    neurons: &[VertexId],
    labels: &[TaskId],
    cfg: &EstimatorConfig,
) -> Result<f64, InfoError> {
    if neurons.is_empty() || labels.is_empty() {
        return Err(InfoError::EmptyVariableSet);
    }
    let n = data.sample_count();
    if n < 2 {
        return Err(InfoError::DegenerateDataset(n));
    }
    let cols: Vec<&[f64]> = neurons
        .iter()
        .map(|id| {
            data.neuron(id)
                .ok_or_else(|| InfoError::UnknownVariable(Var::Neuron(id.clone())))
        })
        .collect::<Result<_, _>>()?;
    let label_cols: Vec<&[i64]> = labels
        .iter()
        .map(|t| {
            data.label(t)
                .ok_or_else(|| InfoError::UnknownVariable(Var::Label(t.clone())))
        })
        .collect::<Result<_, _>>()?;

    let mut classes: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
    for row in 0..n {
        let key = label_cols.iter().map(|c| c[row]).collect();
        classes.entry(key).or_default().push(row);
    }
    if classes.len() == 1 {
        return Ok(0.0);
    }

    let dim = cols.len();
    let mut weights = Vec::with_capacity(classes.len());
    let mut fits = Vec::with_capacity(classes.len());
    for (key, rows) in &classes {
        if rows.len() < 2 {
            return Err(InfoError::ClassTooSmall {
                class: format!("{key:?}"),
                count: rows.len(),
            });
        }
        let m = rows.len() as f64;
        let mean = DVector::from_iterator(
            dim,
            cols.iter().map(|c| rows.iter().map(|&r| c[r]).sum::<f64>() / m),
        );
        let mut cov = DMatrix::zeros(dim, dim);
        for a in 0..dim {
            let b_range = match cfg.covariance_mode {
                CovarianceMode::Full => 0..=a,
                CovarianceMode::Diagonal => a..=a,
            };
            for b in b_range {
                let s: f64 = rows
                    .iter()
                    .map(|&r| (cols[a][r] - mean[a]) * (cols[b][r] - mean[b]))
                    .sum::<f64>()
                    / m;
                cov[(a, b)] = s;
                cov[(b, a)] = s;
            }
            cov[(a, a)] += cfg.regularizer;
        }
        weights.push(m / n as f64);
        fits.push(GaussianFit::new(mean, cov).map_err(|e| match e {
            InfoError::Singular(msg) => InfoError::Singular(format!("class {key:?}: {msg}")),
            other => other,
        })?);
    }

    let mut bound = 0.0;
    for (i, p) in fits.iter().enumerate() {
        // log Σ_j w_j exp(-KL_ij), stabilised by the largest exponent.
        let exps: Vec<f64> = fits
            .iter()
            .zip(&weights)
            .enumerate()
            .map(|(j, (q, w))| w.ln() - if i == j { 0.0 } else { kl_fits(p, q) })
            .collect();
        let top = exps.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = top + exps.iter().map(|e| (e - top).exp()).sum::<f64>().ln();
        bound -= weights[i] * lse;
    }
    Ok(bound.max(0.0))
}
