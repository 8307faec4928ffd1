//! Generative label model.
//!
//! Each LF `j` votes with propensity `p_j` independent of the true label; when
//! it votes it is correct with probability `a_j` and otherwise spreads its
//! error uniformly over the remaining `M - 1` labels:
//!
//! ```text
//! P(votes_i | y) = Π_j  (1 - p_j)                  if j abstains
//!                       p_j · a_j                  if j votes y
//!                       p_j · (1 - a_j) / (M - 1)  otherwise
//! ```
//!
//! Parameters are fit by EM. Instances with a known (seed) label have their
//! E-step posterior fixed to that label. The class prior carries a Dirichlet
//! pseudo-count, so the quantity EM increases is the log-likelihood plus
//! `smoothing · Σ_y log π_y`; with `smoothing = 0` it is the plain
//! log-likelihood.

mod io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::LabelId;
use crate::error::{Error, Result};
use crate::lf::{LabelMatrix, Vote};

pub const DEFAULT_INITIAL_ACCURACY: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub max_iter: usize,
    /// Stop once the objective improves by less than this.
    pub tol: f64,
    /// Propensities and accuracies are kept in `[clamp_eps, 1 - clamp_eps]`.
    pub clamp_eps: f64,
    /// Unused by the deterministic EM; kept so configs can pin it.
    pub rng_seed: u64,
    /// Dirichlet pseudo-count on the class prior.
    pub smoothing: f64,
    /// Re-estimate the class prior in every M-step. When false the prior stays
    /// at its initial value, the smoothed distribution of clamped labels.
    pub learn_priors: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            max_iter: 100,
            tol: 1e-6,
            clamp_eps: 1e-3,
            rng_seed: 0,
            smoothing: 1.0,
            learn_priors: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidParameter("fit.tol must be > 0".into()));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::InvalidParameter("fit.clamp_eps must be in (0, 0.5)".into()));
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return Err(Error::InvalidParameter("fit.smoothing must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfParameters {
    pub id: String,
    pub propensity: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub objective: f64,
    pub converged: bool,
    /// Objective at the start of every iteration and at the final parameters.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelModelParams {
    pub priors: Vec<f64>,
    pub lfs: Vec<LfParameters>,
    pub diagnostics: FitDiagnostics,
}

impl LabelModelParams {
    pub fn num_labels(&self) -> usize {
        self.priors.len()
    }
}

/// Posterior distribution over labels for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub probs: Vec<f64>,
    /// Most probable label; ties go to the smallest index.
    pub argmax: LabelId,
    pub max_prob: f64,
    /// True when no LF voted; `probs` are then the priors.
    pub abstained: bool,
}

impl Posterior {
    pub fn label(&self) -> Option<LabelId> {
        (!self.abstained).then_some(self.argmax)
    }

    fn from_probs(probs: Vec<f64>, abstained: bool) -> Self {
        let (argmax, max_prob) = argmax(&probs);
        Posterior {
            probs,
            argmax: LabelId::from(argmax),
            max_prob,
            abstained,
        }
    }
}

/// First index of the maximum.
pub(crate) fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    (best, values[best])
}

/// Log-domain factors of the current parameters.
struct Factors {
    log_prior: Vec<f64>,
    /// Σ_j log(1 - p_j)
    all_abstain: f64,
    /// log(p_j (1 - a_j) / (M - 1)) - log(1 - p_j)
    vote_base: Vec<f64>,
    /// log(a_j) - log((1 - a_j) / (M - 1))
    vote_bonus: Vec<f64>,
}

impl Factors {
    fn new(priors: &[f64], propensity: &[f64], accuracy: &[f64]) -> Self {
        let others = (priors.len() - 1) as f64;
        Factors {
            log_prior: priors.iter().map(|p| p.ln()).collect(),
            all_abstain: propensity.iter().map(|p| (1.0 - p).ln()).sum(),
            vote_base: propensity
                .iter()
                .zip(accuracy)
                .map(|(p, a)| (p * (1.0 - a) / others).ln() - (1.0 - p).ln())
                .collect(),
            vote_bonus: accuracy
                .iter()
                .map(|a| a.ln() - ((1.0 - a) / others).ln())
                .collect(),
        }
    }

    /// Splits log P(votes, y) into a label-independent constant and per-label
    /// scores. Posteriors only need the scores.
    fn joint(&self, row: &[Vote]) -> (f64, Vec<f64>) {
        let constant =
            self.all_abstain + row.iter().map(|v| self.vote_base[v.lf as usize]).sum::<f64>();
        (constant, self.scores(row))
    }

    fn scores(&self, row: &[Vote]) -> Vec<f64> {
        let mut scores = self.log_prior.clone();
        for v in row {
            scores[v.label.index()] += self.vote_bonus[v.lf as usize];
        }
        scores
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn normalize(scores: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(scores);
    let mut probs: Vec<f64> = scores.iter().map(|s| (s - lse).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    probs
}

fn check_votes(matrix: &LabelMatrix, num_labels: usize) -> Result<()> {
    match matrix.max_label() {
        Some(l) if l.index() >= num_labels => Err(Error::InvalidParameter(format!(
            "vote for label {l} but the model has {num_labels} labels"
        ))),
        _ => Ok(()),
    }
}

/// Fits the model by EM. `clamped[i] = Some(y)` fixes instance `i`'s label.
pub fn fit(
    matrix: &LabelMatrix,
    num_labels: usize,
    clamped: Option<&[Option<LabelId>]>,
    cfg: &FitConfig,
) -> Result<LabelModelParams> {
    cfg.validate()?;
    if num_labels < 2 {
        return Err(Error::TooFewLabels(num_labels));
    }
    if matrix.votes().is_empty() {
        return Err(Error::NoSignal);
    }
    check_votes(matrix, num_labels)?;
    let n = matrix.n();
    let m = matrix.m();
    let no_clamps = vec![None; n];
    let clamped = match clamped {
        Some(c) if c.len() != n => {
            return Err(Error::Misaligned {
                expected: n,
                actual: c.len(),
            })
        }
        Some(c) => c,
        None => &no_clamps,
    };
    if let Some(l) = clamped.iter().flatten().find(|l| l.index() >= num_labels) {
        return Err(Error::InvalidParameter(format!("clamped label {l} out of range")));
    }

    let eps = cfg.clamp_eps;
    let clamp = |x: f64| x.clamp(eps, 1.0 - eps);
    let smoothing = cfg.smoothing;

    let mut vote_counts = vec![0usize; m];
    for v in matrix.votes() {
        vote_counts[v.lf as usize] += 1;
    }
    let propensity: Vec<f64> = vote_counts.iter().map(|&c| clamp(c as f64 / n as f64)).collect();
    let mut accuracy = vec![clamp(DEFAULT_INITIAL_ACCURACY); m];
    let mut priors = {
        let mut counts = vec![smoothing; num_labels];
        for l in clamped.iter().flatten() {
            counts[l.index()] += 1.0;
        }
        let total: f64 = counts.iter().sum();
        if counts.iter().all(|&c| c > 0.0) {
            counts.iter().map(|c| c / total).collect()
        } else {
            vec![1.0 / num_labels as f64; num_labels]
        }
    };

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        let factors = Factors::new(&priors, &propensity, &accuracy);
        let estep: Vec<(f64, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (constant, scores) = factors.joint(matrix.row(i));
                match clamped[i] {
                    Some(y) => {
                        let mut q = vec![0.0; num_labels];
                        q[y.index()] = 1.0;
                        (constant + scores[y.index()], q)
                    }
                    None => (constant + log_sum_exp(&scores), normalize(&scores)),
                }
            })
            .collect();
        let log_lik: f64 = estep.iter().map(|(ll, _)| ll).sum();
        let penalty: f64 = if smoothing > 0.0 {
            smoothing * factors.log_prior.iter().sum::<f64>()
        } else {
            0.0
        };
        let objective = log_lik + penalty;
        if let Some(&prev) = trace.last() {
            if objective - prev < cfg.tol {
                trace.push(objective);
                converged = true;
                break;
            }
        }
        trace.push(objective);
        if iterations == cfg.max_iter {
            break;
        }

        if cfg.learn_priors {
            let mut class_mass = vec![smoothing; num_labels];
            for (_, q) in &estep {
                for (c, p) in class_mass.iter_mut().zip(q) {
                    *c += p;
                }
            }
            let total: f64 = class_mass.iter().sum();
            priors = class_mass.iter().map(|c| c / total).collect();
        }

        let mut correct = vec![0.0; m];
        for v in matrix.votes() {
            correct[v.lf as usize] += estep[v.instance as usize].1[v.label.index()];
        }
        for j in 0..m {
            if vote_counts[j] > 0 {
                accuracy[j] = clamp(correct[j] / vote_counts[j] as f64);
            }
        }
        iterations += 1;
    }

    Ok(LabelModelParams {
        priors,
        lfs: (0..m)
            .map(|j| LfParameters {
                id: matrix.lf_ids()[j].clone(),
                propensity: propensity[j],
                accuracy: accuracy[j],
            })
            .collect(),
        diagnostics: FitDiagnostics {
            iterations,
            objective: *trace.last().expect("at least one E-step"),
            converged,
            trace,
        },
    })
}

fn factors_of(params: &LabelModelParams) -> Factors {
    let p: Vec<f64> = params.lfs.iter().map(|l| l.propensity).collect();
    let a: Vec<f64> = params.lfs.iter().map(|l| l.accuracy).collect();
    Factors::new(&params.priors, &p, &a)
}

/// Bayes posterior for one instance's votes (`Vote::instance` is ignored).
pub fn posterior(params: &LabelModelParams, votes: &[Vote]) -> Posterior {
    if votes.is_empty() {
        return Posterior::from_probs(params.priors.clone(), true);
    }
    Posterior::from_probs(normalize(&factors_of(params).scores(votes)), false)
}

pub fn predict(params: &LabelModelParams, matrix: &LabelMatrix) -> Result<Vec<Posterior>> {
    if matrix.m() != params.lfs.len() {
        return Err(Error::Misaligned {
            expected: params.lfs.len(),
            actual: matrix.m(),
        });
    }
    check_votes(matrix, params.num_labels())?;
    let factors = factors_of(params);
    Ok((0..matrix.n())
        .into_par_iter()
        .map(|i| {
            let row = matrix.row(i);
            if row.is_empty() {
                Posterior::from_probs(params.priors.clone(), true)
            } else {
                Posterior::from_probs(normalize(&factors.scores(row)), false)
            }
        })
        .collect())
}

/// Most frequent vote per instance; ties go to the smallest label, rows
/// without votes abstain.
pub fn majority_vote(matrix: &LabelMatrix, num_labels: usize) -> Vec<Option<LabelId>> {
    (0..matrix.n())
        .map(|i| {
            let row = matrix.row(i);
            if row.is_empty() {
                return None;
            }
            let mut counts = vec![0usize; num_labels.max(1)];
            for v in row {
                if v.label.index() >= counts.len() {
                    counts.resize(v.label.index() + 1, 0);
                }
                counts[v.label.index()] += 1;
            }
            let mut best = 0;
            for (l, &c) in counts.iter().enumerate() {
                if c > counts[best] {
                    best = l;
                }
            }
            Some(LabelId::from(best))
        })
        .collect()
}

#[cfg(test)]
mod tests;
