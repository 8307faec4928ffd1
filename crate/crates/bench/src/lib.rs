//! Shared fixtures for the benchmarks: a synthetic corpus with mock-generated
//! labeling functions applied to it.

use lakelabel::corpus::{sample_seeds, Dataset, LabelId};
use lakelabel::lf::LabelingFunction;
use lakelabel::lfgen::{bundled_demonstrations, generate_lfs, GenerationConfig, MockBackend, PromptTemplate};
use lakelabel::synthetic::{generate_corpus, SyntheticConfig};
use lakelabel::LabelMatrix;

pub struct Fixture {
    pub dataset: Dataset,
    pub lfs: Vec<LabelingFunction>,
    pub matrix: LabelMatrix,
    pub targets: Vec<LabelId>,
    /// Seed rows carry their gold label, all others `None`.
    pub clamped: Vec<Option<LabelId>>,
}

pub fn fixture(columns_per_type: usize) -> Fixture {
    let dataset = generate_corpus(&SyntheticConfig {
        columns_per_type,
        ..SyntheticConfig::default()
    })
    .expect("synthetic corpus");
    let seeds = sample_seeds(&dataset, 10, 5, 0).expect("seeds");
    let generation = generate_lfs(
        &MockBackend,
        &PromptTemplate::default(),
        &seeds,
        &bundled_demonstrations(),
        &GenerationConfig::default(),
        &dataset.vocabulary,
    )
    .expect("mock generation");
    let lfs = generation.lfs;
    let matrix = lakelabel::lf::apply_all(&lfs, &dataset.columns).expect("apply");
    let targets = lfs.iter().map(|l| l.target).collect();
    let mut clamped = vec![None; dataset.columns.len()];
    for id in seeds.column_ids() {
        let i = dataset.position(id).expect("seed in corpus");
        clamped[i] = dataset.columns[i].gold_label;
    }
    Fixture {
        dataset,
        lfs,
        matrix,
        targets,
        clamped,
    }
}
