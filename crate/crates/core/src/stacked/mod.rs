//! Label-space partitioning, one label model per group, and max-posterior
//! routing across groups.

mod embed;
mod hierarchy;
mod io;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::LabelId;
use crate::error::{Error, Result};
use crate::label_model::{self, FitConfig, LabelModelParams};
use crate::lf::{LabelMatrix, Vote};

pub use embed::{
    clustering_cost, embed_labels, embed_name, kmeans_partition, EmbeddingProvider, LabelEmbedding,
    DEFAULT_EMBEDDING_DIM, MAX_LLOYD_ITERATIONS,
};
pub use hierarchy::{hierarchy_partition, parse_hierarchy};
pub use io::{MODEL_MANIFEST_FILE, PARTITION_FILE};

pub const DEFAULT_K: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMethod {
    Kmeans,
    Hierarchy,
    Single,
}

impl std::str::FromStr for PartitionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(PartitionMethod::Kmeans),
            "hierarchy" => Ok(PartitionMethod::Hierarchy),
            "single" => Ok(PartitionMethod::Single),
            other => Err(Error::InvalidParameter(format!(
                "unknown partition method `{other}` (expected kmeans, hierarchy or single)"
            ))),
        }
    }
}

/// Disjoint, exhaustive, non-empty label groups. Each group is sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partition {
    pub method: PartitionMethod,
    pub provenance: String,
    pub num_labels: usize,
    pub groups: Vec<Vec<LabelId>>,
}

impl Partition {
    pub fn new(
        mut groups: Vec<Vec<LabelId>>,
        num_labels: usize,
        method: PartitionMethod,
        provenance: String,
    ) -> Result<Self> {
        let mut seen = vec![false; num_labels];
        for g in &mut groups {
            if g.is_empty() {
                return Err(Error::InvalidParameter("partition has an empty group".into()));
            }
            g.sort();
            for l in g.iter() {
                match seen.get_mut(l.index()) {
                    None => {
                        return Err(Error::InvalidParameter(format!(
                            "partition label {l} outside vocabulary of {num_labels}"
                        )))
                    }
                    Some(true) => {
                        return Err(Error::InvalidParameter(format!("label {l} in two groups")))
                    }
                    Some(s) => *s = true,
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidParameter(format!(
                "label {missing} is in no partition group"
            )));
        }
        Ok(Partition {
            method,
            provenance,
            num_labels,
            groups,
        })
    }

    pub fn single(num_labels: usize) -> Result<Self> {
        if num_labels == 0 {
            return Err(Error::EmptyVocabulary);
        }
        Partition::new(
            vec![(0..num_labels).map(LabelId::from).collect()],
            num_labels,
            PartitionMethod::Single,
            "single group".into(),
        )
    }

    pub fn k(&self) -> usize {
        self.groups.len()
    }

    /// Group index of every label.
    pub fn group_of(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_labels];
        for (g, labels) in self.groups.iter().enumerate() {
            for l in labels {
                out[l.index()] = g;
            }
        }
        out
    }

    /// Re-validates after deserialization.
    pub fn validated(self) -> Result<Self> {
        Partition::new(self.groups, self.num_labels, self.method, self.provenance)
    }
}

/// How a group's posterior is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum GroupModel {
    Fitted(LabelModelParams),
    /// One label: any vote makes it certain.
    Singleton,
    /// No LF of the group ever voted; always abstains with a uniform prior.
    Unsignaled,
}

impl GroupModel {
    pub fn state(&self) -> &'static str {
        match self {
            GroupModel::Fitted(_) => "fitted",
            GroupModel::Singleton => "singleton",
            GroupModel::Unsignaled => "unsignaled",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubModel {
    /// Local index -> global label.
    pub labels: Vec<LabelId>,
    /// Global LF columns assigned to the group, ascending.
    pub lf_columns: Vec<usize>,
    pub lf_ids: Vec<String>,
    pub model: GroupModel,
    /// Stored cells `n * m_g` of the group's matrix at fit time.
    pub footprint: usize,
}

impl SubModel {
    fn uniform(&self) -> Vec<f64> {
        vec![1.0 / self.labels.len() as f64; self.labels.len()]
    }

    /// Posterior over local labels for votes already relabeled to local
    /// indices.
    fn local_posterior(&self, votes: &[Vote]) -> GroupPosterior {
        let (probs, abstained) = match &self.model {
            GroupModel::Fitted(params) => {
                let p = label_model::posterior(params, votes);
                (p.probs, p.abstained)
            }
            GroupModel::Singleton => (vec![1.0], votes.is_empty()),
            GroupModel::Unsignaled => (self.uniform(), true),
        };
        GroupPosterior { probs, abstained }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedModel {
    pub partition: Partition,
    /// LF ids in the column order of the training matrix.
    pub lf_ids: Vec<String>,
    pub groups: Vec<SubModel>,
    /// Global LF column -> (group, local column).
    lf_route: Vec<(usize, usize)>,
    /// Global label -> (group, local label).
    label_route: Vec<(usize, usize)>,
}

impl StackedModel {
    fn assemble(partition: Partition, lf_ids: Vec<String>, groups: Vec<SubModel>) -> Result<Self> {
        let mut lf_route = vec![(usize::MAX, 0); lf_ids.len()];
        for (g, sub) in groups.iter().enumerate() {
            if sub.lf_ids.len() != sub.lf_columns.len() {
                return Err(Error::InvalidParameter(format!("group {g} LF ids and columns differ")));
            }
            for (local, &j) in sub.lf_columns.iter().enumerate() {
                if lf_ids.get(j) != Some(&sub.lf_ids[local]) {
                    return Err(Error::InvalidParameter(format!("group {g} LF column {j} id mismatch")));
                }
                let slot = lf_route.get_mut(j).ok_or_else(|| {
                    Error::InvalidParameter(format!("group {g} references LF column {j}"))
                })?;
                if slot.0 != usize::MAX {
                    return Err(Error::InvalidParameter(format!("LF column {j} in two groups")));
                }
                *slot = (g, local);
            }
        }
        if let Some(j) = lf_route.iter().position(|r| r.0 == usize::MAX) {
            return Err(Error::InvalidParameter(format!("LF `{}` assigned to no group", lf_ids[j])));
        }
        let mut label_route = vec![(0, 0); partition.num_labels];
        for (g, sub) in groups.iter().enumerate() {
            if sub.labels != partition.groups[g] {
                return Err(Error::InvalidParameter(format!("group {g} labels differ from partition")));
            }
            for (local, l) in sub.labels.iter().enumerate() {
                label_route[l.index()] = (g, local);
            }
        }
        Ok(StackedModel {
            partition,
            lf_ids,
            groups,
            lf_route,
            label_route,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.partition.num_labels
    }

    /// Stored cells of the largest per-group matrix.
    pub fn largest_footprint(&self) -> usize {
        self.groups.iter().map(|g| g.footprint).max().unwrap_or(0)
    }

    pub fn unsignaled_groups(&self) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .filter(|(_, g)| g.model == GroupModel::Unsignaled)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupPosterior {
    /// Distribution over the group's local labels.
    pub probs: Vec<f64>,
    pub abstained: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoutedPrediction {
    /// None when every group abstained.
    pub label: Option<LabelId>,
    pub prob: f64,
    pub groups: Vec<GroupPosterior>,
    /// Global distribution: active groups' posteriors concatenated and
    /// divided by the number of active groups; with no active group, every
    /// group's prior divided by K.
    pub probs: Vec<f64>,
}

/// Restricts `matrix` to the given LF columns and maps vote labels through
/// `to_local`.
fn local_matrix(matrix: &LabelMatrix, columns: &[usize], to_local: &HashMap<LabelId, usize>) -> Result<LabelMatrix> {
    let sub = matrix.select_lfs(columns);
    let votes = sub
        .votes()
        .iter()
        .map(|v| {
            let local = to_local.get(&v.label).ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "LF `{}` voted {} outside its group",
                    sub.lf_ids()[v.lf as usize],
                    v.label
                ))
            })?;
            Ok(Vote {
                instance: v.instance,
                lf: v.lf,
                label: LabelId::from(*local),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LabelMatrix::new(
        sub.n(),
        sub.m(),
        votes,
        sub.instance_ids().to_vec(),
        sub.lf_ids().to_vec(),
    )
}

fn fit_group(
    matrix: &LabelMatrix,
    labels: &[LabelId],
    columns: Vec<usize>,
    clamped: Option<&[Option<LabelId>]>,
    cfg: &FitConfig,
) -> Result<SubModel> {
    let to_local: HashMap<LabelId, usize> = labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let local = local_matrix(matrix, &columns, &to_local)?;
    let lf_ids = local.lf_ids().to_vec();
    let footprint = local.stored_cells();
    let model = if local.votes().is_empty() {
        GroupModel::Unsignaled
    } else if labels.len() == 1 {
        GroupModel::Singleton
    } else {
        let local_clamped: Option<Vec<Option<LabelId>>> = clamped.map(|c| {
            c.iter()
                .map(|g| g.and_then(|l| to_local.get(&l).map(|&i| LabelId::from(i))))
                .collect()
        });
        GroupModel::Fitted(label_model::fit(&local, labels.len(), local_clamped.as_deref(), cfg)?)
    };
    Ok(SubModel {
        labels: labels.to_vec(),
        lf_columns: columns,
        lf_ids,
        model,
        footprint,
    })
}

/// Fits one label model per partition group. LF `j` belongs to the group of
/// `lf_targets[j]`; `clamped` fixes seed instances to their gold label.
pub fn fit_stacked(
    matrix: &LabelMatrix,
    lf_targets: &[LabelId],
    partition: &Partition,
    clamped: Option<&[Option<LabelId>]>,
    cfg: &FitConfig,
) -> Result<StackedModel> {
    cfg.validate()?;
    if lf_targets.len() != matrix.m() {
        return Err(Error::Misaligned {
            expected: matrix.m(),
            actual: lf_targets.len(),
        });
    }
    if let Some(c) = clamped {
        if c.len() != matrix.n() {
            return Err(Error::Misaligned {
                expected: matrix.n(),
                actual: c.len(),
            });
        }
    }
    let group_of = partition.group_of();
    let mut columns = vec![Vec::new(); partition.k()];
    for (j, t) in lf_targets.iter().enumerate() {
        let g = group_of.get(t.index()).ok_or_else(|| {
            Error::UnknownLabel(format!("LF `{}` targets {t}", matrix.lf_ids()[j]))
        })?;
        columns[*g].push(j);
    }
    let groups = partition
        .groups
        .par_iter()
        .zip(columns)
        .map(|(labels, cols)| fit_group(matrix, labels, cols, clamped, cfg))
        .collect::<Result<Vec<_>>>()?;
    StackedModel::assemble(partition.clone(), matrix.lf_ids().to_vec(), groups)
}

/// Queries every group with its share of the votes and picks the most
/// probable (group, label); ties go to the smallest global label.
pub fn route_predict(model: &StackedModel, votes: &[Vote]) -> RoutedPrediction {
    let k = model.groups.len();
    let mut per_group: Vec<Vec<Vote>> = vec![Vec::new(); k];
    for v in votes {
        let (g, local_lf) = model.lf_route[v.lf as usize];
        let (lg, local_label) = model.label_route[v.label.index()];
        debug_assert_eq!(g, lg, "LF votes outside its group");
        per_group[g].push(Vote {
            instance: v.instance,
            lf: local_lf as u32,
            label: LabelId::from(local_label),
        });
    }
    let groups: Vec<GroupPosterior> = model
        .groups
        .iter()
        .zip(&per_group)
        .map(|(sub, v)| sub.local_posterior(v))
        .collect();

    let mut best: Option<(f64, LabelId)> = None;
    for (sub, post) in model.groups.iter().zip(&groups) {
        if post.abstained {
            continue;
        }
        for (&label, &p) in sub.labels.iter().zip(&post.probs) {
            let better = match best {
                None => true,
                Some((bp, bl)) => p > bp || (p == bp && label < bl),
            };
            if better {
                best = Some((p, label));
            }
        }
    }

    let active = groups.iter().filter(|g| !g.abstained).count();
    let mut probs = vec![0.0; model.num_labels()];
    for (sub, post) in model.groups.iter().zip(&groups) {
        if active == 0 || !post.abstained {
            let scale = if active == 0 { k } else { active } as f64;
            for (&label, &p) in sub.labels.iter().zip(&post.probs) {
                probs[label.index()] = p / scale;
            }
        }
    }
    RoutedPrediction {
        label: best.map(|(_, l)| l),
        prob: best.map_or(0.0, |(p, _)| p),
        groups,
        probs,
    }
}

/// Routes every row of a matrix whose LF columns match the training matrix.
pub fn predict_stacked(model: &StackedModel, matrix: &LabelMatrix) -> Result<Vec<RoutedPrediction>> {
    if matrix.lf_ids() != model.lf_ids.as_slice() {
        return Err(Error::Misaligned {
            expected: model.lf_ids.len(),
            actual: matrix.m(),
        });
    }
    if let Some(l) = matrix.max_label() {
        if l.index() >= model.num_labels() {
            return Err(Error::InvalidParameter(format!("vote for unknown label {l}")));
        }
    }
    let group_of = model.partition.group_of();
    for v in matrix.votes() {
        if group_of[v.label.index()] != model.lf_route[v.lf as usize].0 {
            return Err(Error::InvalidParameter(format!(
                "LF `{}` voted {} outside its group",
                model.lf_ids[v.lf as usize], v.label
            )));
        }
    }
    Ok((0..matrix.n())
        .into_par_iter()
        .map(|i| route_predict(model, matrix.row(i)))
        .collect())
}
