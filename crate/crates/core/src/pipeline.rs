//! End-to-end orchestration: ingest → seeds → LF generation → apply →
//! filter → partition → stacked fit → routed prediction → evaluation →
//! export. Every stage reads and writes named artifacts in one output
//! directory, so running stages one at a time composes to the full run.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    load_dataset, sample_seeds, CorpusFormat, Dataset, JsonlRecord, LabelId, LabelVocabulary, SeedSet,
};
use crate::error::{Error, Result};
use crate::eval::{
    avg_lf_f1, evaluate, read_weak_labels, write_weak_labels, EvalReport, Stage, WeakLabelRecord,
};
use crate::filter::{filter_lfs, FilterConfig};
use crate::label_model::{majority_vote, FitConfig};
use crate::lf::{apply_all, read_lf_file, write_lf_file, LabelMatrix, LabelingFunction};
use crate::lfgen::{bundled_demonstrations, generate_lfs, write_exchanges, GenerationConfig};
use crate::stacked::{
    embed_labels, fit_stacked, hierarchy_partition, kmeans_partition, predict_stacked, EmbeddingProvider,
    Partition, PartitionMethod, StackedModel, DEFAULT_K,
};

/// Artifact names inside the output directory.
pub mod artifacts {
    pub const MANIFEST: &str = "manifest.json";
    pub const CORPUS: &str = "corpus.jsonl";
    pub const LABELS: &str = "labels.txt";
    pub const SEEDS: &str = "seeds.json";
    pub const EXCHANGES: &str = "exchanges.jsonl";
    pub const LFS_GENERATED: &str = "lfs.generated.json";
    pub const MATRIX_GENERATED: &str = "matrix.generated.txt";
    pub const LFS_FILTERED: &str = "lfs.filtered.json";
    pub const MATRIX: &str = "matrix.txt";
    pub const PARTITION: &str = "partition.json";
    pub const MODEL_DIR: &str = "model";
    pub const PREDICTIONS: &str = "predictions.jsonl";
    pub const REPORT: &str = "report.json";
    pub const TRAINING_SET: &str = "training_set.jsonl";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: CorpusFormat,
    /// Label vocabulary file; gold labels in order of appearance otherwise.
    #[serde(default)]
    pub labels: Option<PathBuf>,
}

fn default_format() -> CorpusFormat {
    CorpusFormat::Jsonl
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedConfig {
    pub per_type_columns: usize,
    pub values_per_column: usize,
    pub rng_seed: u64,
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig {
            per_type_columns: 10,
            values_per_column: 5,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub k: usize,
    pub method: PartitionMethod,
    pub hierarchy: Option<PathBuf>,
    pub embedding: EmbeddingProvider,
    pub rng_seed: u64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        PartitionConfig {
            k: DEFAULT_K,
            method: PartitionMethod::Kmeans,
            hierarchy: None,
            embedding: EmbeddingProvider::default(),
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub seeds: SeedConfig,
    #[serde(default)]
    pub generation: GenerationConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub label_model: FitConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    pub output_dir: PathBuf,
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl PipelineConfig {
    /// Defaults everywhere except the corpus and output locations.
    pub fn new(corpus: PathBuf, output_dir: PathBuf) -> Self {
        PipelineConfig {
            corpus: CorpusConfig {
                path: corpus,
                format: CorpusFormat::Jsonl,
                labels: None,
            },
            seeds: SeedConfig::default(),
            generation: GenerationConfig::default(),
            filter: FilterConfig::default(),
            label_model: FitConfig::default(),
            partition: PartitionConfig::default(),
            output_dir,
        }
    }

    /// Parses TOML; relative paths are taken relative to `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        PipelineConfig::from_toml(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.corpus.path);
        resolve(base, &mut self.output_dir);
        for p in [
            self.corpus.labels.as_mut(),
            self.generation.template.as_mut(),
            self.partition.hierarchy.as_mut(),
        ]
        .into_iter()
        .flatten()
        {
            resolve(base, p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let must_exist = |what: &str, p: &Path| {
            if p.exists() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} `{}` does not exist", p.display())))
            }
        };
        must_exist("corpus", &self.corpus.path)?;
        if let Some(p) = &self.corpus.labels {
            must_exist("label file", p)?;
        }
        if let Some(p) = &self.generation.template {
            must_exist("template", p)?;
        }
        if self.partition.method == PartitionMethod::Hierarchy {
            match &self.partition.hierarchy {
                Some(p) => must_exist("hierarchy file", p)?,
                None => return Err(Error::Config("partition.method = hierarchy needs partition.hierarchy".into())),
            }
        }
        if self.seeds.per_type_columns == 0 || self.seeds.values_per_column == 0 {
            return Err(Error::Config("seed counts must be positive".into()));
        }
        if self.partition.k == 0 {
            return Err(Error::Config("partition.k must be positive".into()));
        }
        self.generation.validate(bundled_demonstrations().len())?;
        self.filter.validate()?;
        self.label_model.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageName {
    Ingest,
    Seed,
    Genlf,
    Apply,
    Filter,
    Partition,
    Train,
    Predict,
    Eval,
    Export,
}

impl fmt::Display for StageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StageName::Ingest => "ingest",
            StageName::Seed => "seed",
            StageName::Genlf => "genlf",
            StageName::Apply => "apply",
            StageName::Filter => "filter",
            StageName::Partition => "partition",
            StageName::Train => "train",
            StageName::Predict => "predict",
            StageName::Eval => "eval",
            StageName::Export => "export",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("stage `{stage}` failed: {source}")]
pub struct StageError {
    pub stage: StageName,
    #[source]
    pub source: Error,
}

pub trait StageContext<T> {
    fn stage(self, stage: StageName) -> std::result::Result<T, StageError>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, stage: StageName) -> std::result::Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value).expect("artifact serializes") + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))
}

/// Loads the corpus and writes its normalized form and vocabulary.
pub fn stage_ingest(cfg: &PipelineConfig, out: &Path) -> Result<Dataset> {
    let vocabulary = cfg.corpus.labels.as_deref().map(LabelVocabulary::read).transpose()?;
    let dataset = load_dataset(&cfg.corpus.path, cfg.corpus.format, vocabulary)?;
    dataset.save_jsonl(&out.join(artifacts::CORPUS))?;
    write_text(&out.join(artifacts::LABELS), &(dataset.vocabulary.names().join("\n") + "\n"))?;
    Ok(dataset)
}

/// Reads the artifacts written by [`stage_ingest`].
pub fn load_ingested(out: &Path) -> Result<Dataset> {
    let vocabulary = LabelVocabulary::read(&out.join(artifacts::LABELS))?;
    load_dataset(&out.join(artifacts::CORPUS), CorpusFormat::Jsonl, Some(vocabulary))
}

pub fn stage_seed(cfg: &PipelineConfig, dataset: &Dataset, out: &Path) -> Result<SeedSet> {
    let seeds = sample_seeds(
        dataset,
        cfg.seeds.per_type_columns,
        cfg.seeds.values_per_column,
        cfg.seeds.rng_seed,
    )?;
    write_json(&out.join(artifacts::SEEDS), &seeds)?;
    Ok(seeds)
}

pub fn load_seeds(out: &Path) -> Result<SeedSet> {
    read_json(&out.join(artifacts::SEEDS))
}

pub fn stage_genlf(
    cfg: &PipelineConfig,
    vocabulary: &LabelVocabulary,
    seeds: &SeedSet,
    out: &Path,
) -> Result<Vec<LabelingFunction>> {
    let backend = cfg.generation.backend()?;
    let template = cfg.generation.prompt_template()?;
    let result = generate_lfs(
        backend.as_ref(),
        &template,
        seeds,
        &bundled_demonstrations(),
        &cfg.generation,
        vocabulary,
    );
    let generation = result?;
    write_exchanges(&out.join(artifacts::EXCHANGES), &generation.exchanges)?;
    write_lf_file(&out.join(artifacts::LFS_GENERATED), &generation.lfs, vocabulary)?;
    Ok(generation.lfs)
}

pub fn stage_apply(lfs: &[LabelingFunction], dataset: &Dataset, out: &Path) -> Result<LabelMatrix> {
    let matrix = apply_all(lfs, &dataset.columns)?;
    matrix.write(&out.join(artifacts::MATRIX_GENERATED))?;
    Ok(matrix)
}

fn seed_positions(dataset: &Dataset, seeds: &SeedSet) -> Result<Vec<usize>> {
    let mut rows: Vec<usize> = seeds
        .column_ids()
        .map(|id| {
            dataset
                .position(id)
                .ok_or_else(|| Error::InvalidParameter(format!("seed column `{id}` is not in the corpus")))
        })
        .collect::<Result<_>>()?;
    rows.sort_unstable();
    Ok(rows)
}

/// Scores generated LFs on the seed rows and keeps the survivors' columns.
pub fn stage_filter(
    cfg: &PipelineConfig,
    lfs: &[LabelingFunction],
    generated: &LabelMatrix,
    dataset: &Dataset,
    seeds: &SeedSet,
    out: &Path,
) -> Result<(Vec<LabelingFunction>, LabelMatrix)> {
    let rows = seed_positions(dataset, seeds)?;
    let seed_matrix = generated.select_instances(&rows);
    let gold: Vec<Option<LabelId>> = rows.iter().map(|&i| dataset.columns[i].gold_label).collect();
    let kept = filter_lfs(lfs, &seed_matrix, &gold, &cfg.filter)?;
    if kept.is_empty() {
        return Err(Error::NoLabelingFunctions);
    }
    let columns: Vec<usize> = kept
        .iter()
        .map(|lf| generated.lf_ids().iter().position(|id| *id == lf.id).expect("kept LFs come from the matrix"))
        .collect();
    let matrix = generated.select_lfs(&columns);
    write_lf_file(&out.join(artifacts::LFS_FILTERED), &kept, &dataset.vocabulary)?;
    matrix.write(&out.join(artifacts::MATRIX))?;
    Ok((kept, matrix))
}

pub fn stage_partition(cfg: &PipelineConfig, vocabulary: &LabelVocabulary, out: &Path) -> Result<Partition> {
    let p = &cfg.partition;
    let partition = match p.method {
        PartitionMethod::Single => Partition::single(vocabulary.len())?,
        PartitionMethod::Hierarchy => {
            let path = p
                .hierarchy
                .as_deref()
                .ok_or_else(|| Error::Config("partition.hierarchy is not set".into()))?;
            hierarchy_partition(path, vocabulary)?
        }
        PartitionMethod::Kmeans => {
            let embedding = embed_labels(vocabulary, &p.embedding)?;
            let mut partition = kmeans_partition(&embedding, p.k, p.rng_seed)?;
            partition.provenance = format!("{}; {}", partition.provenance, p.embedding.describe());
            partition
        }
    };
    partition.write(&out.join(artifacts::PARTITION))?;
    Ok(partition)
}

/// Seed rows clamped to their gold label.
fn clamped(dataset: &Dataset, seeds: &SeedSet) -> Result<Vec<Option<LabelId>>> {
    let mut out = vec![None; dataset.columns.len()];
    for i in seed_positions(dataset, seeds)? {
        out[i] = dataset.columns[i].gold_label;
    }
    Ok(out)
}

pub fn stage_train(
    cfg: &PipelineConfig,
    matrix: &LabelMatrix,
    lfs: &[LabelingFunction],
    partition: &Partition,
    dataset: &Dataset,
    seeds: &SeedSet,
    out: &Path,
) -> Result<StackedModel> {
    let targets: Vec<LabelId> = lfs.iter().map(|l| l.target).collect();
    let model = fit_stacked(matrix, &targets, partition, Some(&clamped(dataset, seeds)?), &cfg.label_model)?;
    let dir = out.join(artifacts::MODEL_DIR);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    model.save(&dir)?;
    Ok(model)
}

pub fn stage_predict(
    model: &StackedModel,
    matrix: &LabelMatrix,
    dataset: &Dataset,
    out: &Path,
) -> Result<Vec<WeakLabelRecord>> {
    let routed = predict_stacked(model, matrix)?;
    let records: Vec<WeakLabelRecord> = routed
        .into_iter()
        .zip(matrix.instance_ids())
        .map(|(r, id)| WeakLabelRecord::new(id, r.label, r.probs, &dataset.vocabulary))
        .collect();
    write_weak_labels(&records, &out.join(artifacts::PREDICTIONS))?;
    Ok(records)
}

pub fn load_predictions(out: &Path, vocabulary: &LabelVocabulary) -> Result<Vec<WeakLabelRecord>> {
    read_weak_labels(&out.join(artifacts::PREDICTIONS), vocabulary)
}

/// Final report: the routed stacked model and the majority-vote baseline on
/// the evaluation split (gold columns that were not seeds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineReport {
    pub stacked: EvalReport,
    pub majority_vote: EvalReport,
    pub generated_lfs: Option<usize>,
    pub retained_lfs: usize,
    pub seed_instances: usize,
    pub eval_instances: usize,
}

impl PipelineReport {
    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// Indices of gold-labeled, non-seed rows.
pub fn eval_split(dataset: &Dataset, seeds: &SeedSet) -> Result<Vec<usize>> {
    let seed_rows = seed_positions(dataset, seeds)?;
    Ok((0..dataset.columns.len())
        .filter(|i| dataset.columns[*i].gold_label.is_some() && seed_rows.binary_search(i).is_err())
        .collect())
}

#[allow(clippy::too_many_arguments)]
pub fn stage_eval(
    predictions: &[WeakLabelRecord],
    dataset: &Dataset,
    seeds: &SeedSet,
    matrix: &LabelMatrix,
    lfs: &[LabelingFunction],
    generated_lfs: Option<usize>,
    out: &Path,
) -> Result<PipelineReport> {
    if predictions.len() != dataset.columns.len() || matrix.n() != dataset.columns.len() {
        return Err(Error::Misaligned {
            expected: dataset.columns.len(),
            actual: predictions.len().min(matrix.n()),
        });
    }
    for (p, c) in predictions.iter().zip(&dataset.columns) {
        if p.column_id != c.column_id {
            return Err(Error::InvalidParameter(format!(
                "prediction for `{}` where `{}` was expected",
                p.column_id, c.column_id
            )));
        }
    }
    let rows = eval_split(dataset, seeds)?;
    let vocab = &dataset.vocabulary;
    let gold: Vec<LabelId> = rows.iter().map(|&i| dataset.columns[i].gold_label.expect("eval rows have gold")).collect();
    let routed: Vec<Option<LabelId>> = rows
        .iter()
        .map(|&i| predictions[i].label_id(vocab))
        .collect::<Result<_>>()?;
    let mut stacked = evaluate(Stage::Stacked, &routed, &gold, vocab)?;
    stacked.avg_lf_f1 = Some(avg_lf_f1(lfs, &matrix.select_instances(&rows), &gold)?);
    let mv_all = majority_vote(matrix, vocab.len());
    let mv: Vec<Option<LabelId>> = rows.iter().map(|&i| mv_all[i]).collect();
    let majority = evaluate(Stage::MajorityVote, &mv, &gold, vocab)?;
    let report = PipelineReport {
        stacked,
        majority_vote: majority,
        generated_lfs,
        retained_lfs: lfs.len(),
        seed_instances: seeds.instance_count(),
        eval_instances: rows.len(),
    };
    write_text(&out.join(artifacts::REPORT), &report.to_text())?;
    Ok(report)
}

/// Writes non-abstained columns in the corpus format with their weak label.
pub fn stage_export(predictions: &[WeakLabelRecord], dataset: &Dataset, out: &Path) -> Result<usize> {
    let path = out.join(artifacts::TRAINING_SET);
    let mut text = String::new();
    let mut n = 0;
    for (p, c) in predictions.iter().zip(&dataset.columns) {
        let Some(label) = &p.label else { continue };
        let rec = JsonlRecord {
            column_id: c.column_id.clone(),
            table_id: c.table_id.clone(),
            header: c.header.clone(),
            values: c.values.clone(),
            label: Some(label.clone()),
        };
        text.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        text.push('\n');
        n += 1;
    }
    write_text(&path, &text)?;
    Ok(n)
}

/// Config plus content hashes of every input; a matching manifest marks a
/// completed run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of a file, or of a directory's sorted file names and contents.
pub fn hash_input(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut names: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(path, err)))
            .collect::<Result<_>>()?;
        names.retain(|p| p.is_file());
        names.sort();
        let mut h = Sha256::new();
        for p in names {
            h.update(p.file_name().expect("file entry").to_string_lossy().as_bytes());
            h.update([0u8]);
            h.update(std::fs::read(&p).map_err(|e| Error::io(&p, e))?);
            h.update([0u8]);
        }
        Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
    } else {
        Ok(sha256_hex(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
    }
}

impl RunManifest {
    pub fn compute(cfg: &PipelineConfig) -> Result<Self> {
        let mut config = serde_json::to_value(cfg).expect("config serializes");
        config.as_object_mut().expect("config is an object").remove("output_dir");
        let mut inputs = BTreeMap::new();
        inputs.insert("corpus".to_string(), hash_input(&cfg.corpus.path)?);
        let optional = [
            ("labels", &cfg.corpus.labels),
            ("template", &cfg.generation.template),
            ("hierarchy", &cfg.partition.hierarchy),
        ];
        for (name, path) in optional {
            if let Some(p) = path {
                inputs.insert(name.to_string(), hash_input(p)?);
            }
        }
        Ok(RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            inputs,
        })
    }

    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes") + "\n"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed(PipelineReport),
    /// A previous run with identical inputs and config already finished.
    UpToDate(PipelineReport),
}

impl RunOutcome {
    pub fn report(&self) -> &PipelineReport {
        match self {
            RunOutcome::Completed(r) | RunOutcome::UpToDate(r) => r,
        }
    }
}

/// Runs every stage in order, writing all artifacts under
/// `cfg.output_dir`. Skips the work when the directory already holds a
/// finished run with the same manifest, unless `force`.
pub fn run_pipeline(cfg: &PipelineConfig, force: bool) -> std::result::Result<RunOutcome, StageError> {
    let out = cfg.output_dir.as_path();
    cfg.validate().stage(StageName::Ingest)?;
    let manifest = RunManifest::compute(cfg).stage(StageName::Ingest)?;
    let manifest_path = out.join(artifacts::MANIFEST);
    if !force {
        if let Ok(existing) = std::fs::read_to_string(&manifest_path) {
            if existing == manifest.to_text() {
                if let Ok(report) = PipelineReport::read(&out.join(artifacts::REPORT)) {
                    return Ok(RunOutcome::UpToDate(report));
                }
            }
        }
    }
    begin_run(out).stage(StageName::Ingest)?;

    let dataset = stage_ingest(cfg, out).stage(StageName::Ingest)?;
    let seeds = stage_seed(cfg, &dataset, out).stage(StageName::Seed)?;
    let generated = stage_genlf(cfg, &dataset.vocabulary, &seeds, out).stage(StageName::Genlf)?;
    let generated_matrix = stage_apply(&generated, &dataset, out).stage(StageName::Apply)?;
    let (lfs, matrix) =
        stage_filter(cfg, &generated, &generated_matrix, &dataset, &seeds, out).stage(StageName::Filter)?;
    let partition = stage_partition(cfg, &dataset.vocabulary, out).stage(StageName::Partition)?;
    let model = stage_train(cfg, &matrix, &lfs, &partition, &dataset, &seeds, out).stage(StageName::Train)?;
    let predictions = stage_predict(&model, &matrix, &dataset, out).stage(StageName::Predict)?;
    let report = stage_eval(&predictions, &dataset, &seeds, &matrix, &lfs, Some(generated.len()), out)
        .stage(StageName::Eval)?;
    stage_export(&predictions, &dataset, out).stage(StageName::Export)?;
    write_text(&manifest_path, &manifest.to_text()).stage(StageName::Export)?;
    Ok(RunOutcome::Completed(report))
}

/// Creates the output directory and invalidates any previous manifest.
pub fn begin_run(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let manifest_path = out.join(artifacts::MANIFEST);
    if manifest_path.exists() {
        std::fs::remove_file(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    }
    Ok(())
}

/// Marks `cfg.output_dir` as holding a finished run of `cfg`.
pub fn finish_run(cfg: &PipelineConfig) -> Result<()> {
    let manifest = RunManifest::compute(cfg)?;
    write_text(&cfg.output_dir.join(artifacts::MANIFEST), &manifest.to_text())
}

/// Reads a positional matrix file and aligns its rows with the corpus and its
/// columns with `lfs`.
pub fn load_matrix(out: &Path, artifact: &str, dataset: &Dataset, lfs: &[LabelingFunction]) -> Result<LabelMatrix> {
    let matrix = LabelMatrix::read(&out.join(artifact))?;
    if matrix.n() != dataset.columns.len() {
        return Err(Error::Misaligned {
            expected: dataset.columns.len(),
            actual: matrix.n(),
        });
    }
    if matrix.m() != lfs.len() {
        return Err(Error::Misaligned {
            expected: lfs.len(),
            actual: matrix.m(),
        });
    }
    matrix.with_alignment(
        dataset.columns.iter().map(|c| c.column_id.clone()).collect(),
        lfs.iter().map(|l| l.id.clone()).collect(),
    )
}

/// Reads the LF file of a given artifact name.
pub fn load_lfs(out: &Path, artifact: &str, vocabulary: &LabelVocabulary) -> Result<Vec<LabelingFunction>> {
    read_lf_file(&out.join(artifact), vocabulary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{generate_corpus, SyntheticConfig};

    fn small_corpus(dir: &Path) -> PathBuf {
        let cfg = SyntheticConfig {
            types: ["isbn", "year", "name", "city", "email", "price"].iter().map(|s| s.to_string()).collect(),
            columns_per_type: 20,
            values_per_column: 15,
            ..SyntheticConfig::default()
        };
        let path = dir.join("corpus.jsonl");
        generate_corpus(&cfg).unwrap().save_jsonl(&path).unwrap();
        path
    }

    #[test]
    fn config_defaults_and_relative_paths() {
        let cfg = PipelineConfig::from_toml(
            "output_dir = \"out\"\n[corpus]\npath = \"c.jsonl\"\n[partition]\nk = 2\n",
            Path::new("/base"),
        )
        .unwrap();
        assert_eq!(cfg.corpus.path, Path::new("/base/c.jsonl"));
        assert_eq!(cfg.output_dir, Path::new("/base/out"));
        assert_eq!(cfg.seeds, SeedConfig::default());
        assert_eq!(cfg.seeds.per_type_columns, 10);
        assert_eq!(cfg.seeds.values_per_column, 5);
        assert_eq!(cfg.partition.k, 2);
        assert!(PipelineConfig::from_toml("output_dir = \"o\"\n[corpus]\npath = \"c\"\nbogus = 1\n", Path::new("/")).is_err());
        assert!(matches!(cfg.validate(), Err(Error::Config(m)) if m.contains("corpus")));
    }

    #[test]
    fn small_run_then_up_to_date() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = small_corpus(dir.path());
        let mut cfg = PipelineConfig::new(corpus, dir.path().join("out"));
        cfg.partition.k = 2;
        let first = run_pipeline(&cfg, false).unwrap();
        assert!(matches!(first, RunOutcome::Completed(_)));
        let r = first.report();
        assert_eq!(r.seed_instances, 60);
        assert_eq!(r.eval_instances, 60);
        assert!(r.stacked.micro_f1 > 0.5, "{}", r.stacked.micro_f1);
        for name in [artifacts::MANIFEST, artifacts::TRAINING_SET, artifacts::PARTITION] {
            assert!(cfg.output_dir.join(name).exists(), "{name}");
        }
        assert!(matches!(run_pipeline(&cfg, false).unwrap(), RunOutcome::UpToDate(_)));
        assert!(matches!(run_pipeline(&cfg, true).unwrap(), RunOutcome::Completed(_)));
    }

    #[test]
    fn oversized_k_fails_in_partition_stage() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = small_corpus(dir.path());
        let mut cfg = PipelineConfig::new(corpus, dir.path().join("out"));
        cfg.partition.k = 7;
        let err = run_pipeline(&cfg, false).unwrap_err();
        assert_eq!(err.stage, StageName::Partition);
        assert!(matches!(err.source, Error::PartitionSize { k: 7, labels: 6 }));
        assert!(cfg.output_dir.join(artifacts::MATRIX).exists());
        assert!(!cfg.output_dir.join(artifacts::MANIFEST).exists());
    }
}
