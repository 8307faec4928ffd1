//! Accuracy and redundancy filters applied to generated LFs before the label
//! model is trained. Both score LFs on the seed matrix and keep input order.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::LabelId;
use crate::error::{Error, Result};
use crate::lf::{LabelMatrix, LabelingFunction};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub min_accuracy: f64,
    pub min_coverage_votes: usize,
    pub redundancy_jaccard: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_accuracy: 0.5,
            min_coverage_votes: 1,
            redundancy_jaccard: 0.9,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_accuracy) {
            return Err(Error::InvalidParameter("filter.min_accuracy must be in [0, 1]".into()));
        }
        if !(self.redundancy_jaccard > 0.0 && self.redundancy_jaccard <= 1.0) {
            return Err(Error::InvalidParameter(
                "filter.redundancy_jaccard must be in (0, 1]".into(),
            ));
        }
        Ok(())
    }
}

/// Per-LF evidence on the seed matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedScore {
    pub lf_id: String,
    /// Votes on gold-labeled seed instances.
    pub votes: usize,
    pub correct: usize,
    pub accuracy: Option<f64>,
}

fn columns_by_id(
    lfs: &[LabelingFunction],
    matrix: &LabelMatrix,
) -> Result<Vec<usize>> {
    let index: HashMap<&str, usize> = matrix
        .lf_ids()
        .iter()
        .enumerate()
        .map(|(j, id)| (id.as_str(), j))
        .collect();
    lfs.iter()
        .map(|lf| {
            index.get(lf.id.as_str()).copied().ok_or_else(|| {
                Error::InvalidParameter(format!("LF `{}` has no column in the seed matrix", lf.id))
            })
        })
        .collect()
}

fn check_gold(matrix: &LabelMatrix, gold: &[Option<LabelId>]) -> Result<()> {
    if gold.len() == matrix.n() {
        Ok(())
    } else {
        Err(Error::Misaligned {
            expected: matrix.n(),
            actual: gold.len(),
        })
    }
}

/// Empirical accuracy of each LF on the gold-labeled seed rows.
pub fn seed_scores(
    lfs: &[LabelingFunction],
    matrix: &LabelMatrix,
    gold: &[Option<LabelId>],
) -> Result<Vec<SeedScore>> {
    check_gold(matrix, gold)?;
    let cols = columns_by_id(lfs, matrix)?;
    let mut votes = vec![0usize; matrix.m()];
    let mut correct = vec![0usize; matrix.m()];
    for v in matrix.votes() {
        if let Some(g) = gold[v.instance as usize] {
            votes[v.lf as usize] += 1;
            correct[v.lf as usize] += (g == v.label) as usize;
        }
    }
    Ok(lfs
        .iter()
        .zip(cols)
        .map(|(lf, j)| SeedScore {
            lf_id: lf.id.clone(),
            votes: votes[j],
            correct: correct[j],
            accuracy: (votes[j] > 0).then(|| correct[j] as f64 / votes[j] as f64),
        })
        .collect())
}

/// Keeps LFs with at least `min_coverage_votes` seed votes and empirical
/// accuracy `>= min_accuracy`.
pub fn accuracy_filter(
    lfs: &[LabelingFunction],
    seed_matrix: &LabelMatrix,
    gold: &[Option<LabelId>],
    cfg: &FilterConfig,
) -> Result<Vec<LabelingFunction>> {
    cfg.validate()?;
    let scores = seed_scores(lfs, seed_matrix, gold)?;
    Ok(lfs
        .iter()
        .zip(&scores)
        .filter(|(_, s)| {
            s.votes >= cfg.min_coverage_votes
                && s.accuracy.is_some_and(|a| a >= cfg.min_accuracy)
        })
        .map(|(lf, _)| lf.clone())
        .collect())
}

/// Jaccard similarity of two vote sets; two empty sets are identical.
pub fn jaccard(a: &BTreeSet<u32>, b: &BTreeSet<u32>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// Among LFs with the same target, visits them by descending seed accuracy
/// (unknown accuracy last, ties by input position) and drops any LF whose
/// voting set has Jaccard `>= redundancy_jaccard` with an already kept one.
/// Without gold every LF ties and input order decides.
pub fn redundancy_filter(
    lfs: &[LabelingFunction],
    seed_matrix: &LabelMatrix,
    gold: Option<&[Option<LabelId>]>,
    cfg: &FilterConfig,
) -> Result<Vec<LabelingFunction>> {
    cfg.validate()?;
    let cols = columns_by_id(lfs, seed_matrix)?;
    let accuracy: Vec<Option<f64>> = match gold {
        Some(g) => seed_scores(lfs, seed_matrix, g)?
            .into_iter()
            .map(|s| s.accuracy)
            .collect(),
        None => vec![None; lfs.len()],
    };
    let mut vote_sets = vec![BTreeSet::new(); seed_matrix.m()];
    for v in seed_matrix.votes() {
        vote_sets[v.lf as usize].insert(v.instance);
    }

    let mut order: Vec<usize> = (0..lfs.len()).collect();
    order.sort_by(|&x, &y| {
        let key = |i: usize| accuracy[i].unwrap_or(f64::NEG_INFINITY);
        key(y).total_cmp(&key(x)).then(x.cmp(&y))
    });
    let mut kept = vec![false; lfs.len()];
    let mut kept_by_target: HashMap<LabelId, Vec<usize>> = HashMap::new();
    for i in order {
        let mine = &vote_sets[cols[i]];
        let group = kept_by_target.entry(lfs[i].target).or_default();
        if group
            .iter()
            .all(|&k| jaccard(mine, &vote_sets[cols[k]]) < cfg.redundancy_jaccard)
        {
            group.push(i);
            kept[i] = true;
        }
    }
    Ok(lfs
        .iter()
        .zip(kept)
        .filter(|(_, k)| *k)
        .map(|(lf, _)| lf.clone())
        .collect())
}

/// Accuracy filter followed by the redundancy filter.
pub fn filter_lfs(
    lfs: &[LabelingFunction],
    seed_matrix: &LabelMatrix,
    gold: &[Option<LabelId>],
    cfg: &FilterConfig,
) -> Result<Vec<LabelingFunction>> {
    let accurate = accuracy_filter(lfs, seed_matrix, gold, cfg)?;
    redundancy_filter(&accurate, seed_matrix, Some(gold), cfg)
}
