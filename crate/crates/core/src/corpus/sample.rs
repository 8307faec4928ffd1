use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, LabelId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedColumn {
    pub column_id: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedGroup {
    pub label: LabelId,
    pub label_name: String,
    pub columns: Vec<SeedColumn>,
    pub rng_seed: u64,
    /// ChaCha stream this group was drawn from (the label index).
    pub stream: u64,
}

impl SeedGroup {
    pub fn values(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().flat_map(|c| c.values.iter().map(String::as_str))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSet {
    pub per_type_columns: usize,
    pub values_per_column: usize,
    pub rng_seed: u64,
    pub groups: Vec<SeedGroup>,
}

impl SeedSet {
    /// Total number of sampled seed columns.
    pub fn instance_count(&self) -> usize {
        self.groups.iter().map(|g| g.columns.len()).sum()
    }

    pub fn column_ids(&self) -> impl Iterator<Item = &str> {
        self.groups
            .iter()
            .flat_map(|g| g.columns.iter().map(|c| c.column_id.as_str()))
    }
}

/// Samples up to `per_type_columns` gold columns per label and up to
/// `values_per_column` cells from each, both without replacement. Labels are
/// visited in vocabulary order and each draws from its own ChaCha stream, so a
/// label's sample does not depend on the other labels.
pub fn sample_seeds(
    dataset: &Dataset,
    per_type_columns: usize,
    values_per_column: usize,
    rng_seed: u64,
) -> Result<SeedSet> {
    if per_type_columns == 0 || values_per_column == 0 {
        return Err(Error::InvalidParameter(
            "per_type_columns and values_per_column must be at least 1".into(),
        ));
    }
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); dataset.vocabulary.len()];
    for (i, c) in dataset.columns.iter().enumerate() {
        if let Some(l) = c.gold_label {
            by_label[l.index()].push(i);
        }
    }
    if by_label.iter().all(Vec::is_empty) {
        return Err(Error::EmptySeeds);
    }

    let mut groups = Vec::new();
    for (label, candidates) in by_label.iter().enumerate() {
        if candidates.is_empty() {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(label as u64);

        let take = candidates.len().min(per_type_columns);
        let mut picked = index::sample(&mut rng, candidates.len(), take).into_vec();
        picked.sort_unstable();
        let columns = picked
            .into_iter()
            .map(|p| {
                let col = &dataset.columns[candidates[p]];
                let k = col.values.len().min(values_per_column);
                let mut cells = index::sample(&mut rng, col.values.len(), k).into_vec();
                cells.sort_unstable();
                SeedColumn {
                    column_id: col.column_id.clone(),
                    values: cells.into_iter().map(|c| col.values[c].clone()).collect(),
                }
            })
            .collect();
        let label = LabelId::from(label);
        groups.push(SeedGroup {
            label,
            label_name: dataset.vocabulary.name(label).to_string(),
            columns,
            rng_seed,
            stream: label.0 as u64,
        });
    }
    Ok(SeedSet {
        per_type_columns,
        values_per_column,
        rng_seed,
        groups,
    })
}
