use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use lakelabel::corpus::CorpusFormat;
use lakelabel::lfgen::BackendKind;
use lakelabel::pipeline::{self as pl, artifacts, PipelineConfig, RunOutcome, StageContext, StageError, StageName};
use lakelabel::stacked::{PartitionMethod, StackedModel};
use lakelabel::synthetic::{generate_corpus, SyntheticConfig, SYNTHETIC_TYPES};

#[derive(Parser)]
#[command(name = "lakelabel", version, about = "Weak supervision for semantic column types with generated labeling functions")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the corpus; write corpus.jsonl and labels.txt.
    Ingest(StageArgs),
    /// Sample seed columns and values; write seeds.json.
    Seed(StageArgs),
    /// Prompt the backend per label and LF kind; write exchanges.jsonl and lfs.generated.json.
    Genlf(StageArgs),
    /// Apply generated LFs to every column; write matrix.generated.txt.
    Apply(StageArgs),
    /// Accuracy and redundancy filters on seed columns; write lfs.filtered.json and matrix.txt.
    Filter(StageArgs),
    /// Split the label set into groups; write partition.json.
    Partition(StageArgs),
    /// Fit one label model per group; write model/.
    Train(StageArgs),
    /// Route every column through the stacked model; write predictions.jsonl.
    Predict(StageArgs),
    /// Score predictions and majority vote on the evaluation split; write report.json.
    Eval(StageArgs),
    /// Write weakly labeled columns to training_set.jsonl.
    Export(StageArgs),
    /// Run every stage in order.
    Run {
        #[command(flatten)]
        stage: StageArgs,
        /// Rerun even when the output directory holds a finished run of this config.
        #[arg(long)]
        force: bool,
    },
    /// Write a synthetic corpus with planted keyword, pattern and range signals.
    Synth(SynthArgs),
}

#[derive(Args, Clone)]
struct StageArgs {
    /// Pipeline config (TOML). Flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for all artifacts.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Corpus format: jsonl or csv-dir.
    #[arg(long)]
    format: Option<CorpusFormat>,
    /// Label vocabulary file, one name per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    per_type_columns: Option<usize>,
    #[arg(long)]
    values_per_column: Option<usize>,
    #[arg(long)]
    seed_rng: Option<u64>,
    /// LLM backend: mock or http.
    #[arg(long)]
    backend: Option<BackendKind>,
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    /// Prompt template file: system text, a `---` line, user text.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Number of demonstrations per prompt.
    #[arg(long)]
    shots: Option<usize>,
    #[arg(long)]
    delimiter: Option<String>,
    #[arg(long)]
    min_accuracy: Option<f64>,
    #[arg(long)]
    redundancy_jaccard: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    fit_rng: Option<u64>,
    /// Number of label groups.
    #[arg(long)]
    k: Option<usize>,
    /// Partition method: kmeans, hierarchy or single.
    #[arg(long)]
    partition_method: Option<PartitionMethod>,
    #[arg(long)]
    hierarchy: Option<PathBuf>,
    #[arg(long)]
    partition_rng: Option<u64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Output JSONL file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    columns_per_type: usize,
    #[arg(long, default_value_t = 20)]
    values_per_column: usize,
    /// Probability that a cell is junk.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated subset of the built-in types.
    #[arg(long, value_delimiter = ',')]
    types: Option<Vec<String>>,
}

impl StageArgs {
    fn config(&self) -> anyhow::Result<PipelineConfig> {
        let cwd = std::env::current_dir().context("reading the working directory")?;
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => {
                let (Some(corpus), Some(out)) = (&self.corpus, &self.out_dir) else {
                    bail!("either --config or both --corpus and --out-dir are required");
                };
                PipelineConfig::new(corpus.clone(), out.clone())
            }
        };
        let abs = |p: &Path| if p.is_relative() { cwd.join(p) } else { p.to_path_buf() };
        if let Some(v) = &self.out_dir {
            cfg.output_dir = abs(v);
        }
        if let Some(v) = &self.corpus {
            cfg.corpus.path = abs(v);
        }
        if let Some(v) = self.format {
            cfg.corpus.format = v;
        }
        if let Some(v) = &self.labels {
            cfg.corpus.labels = Some(abs(v));
        }
        if let Some(v) = self.per_type_columns {
            cfg.seeds.per_type_columns = v;
        }
        if let Some(v) = self.values_per_column {
            cfg.seeds.values_per_column = v;
        }
        if let Some(v) = self.seed_rng {
            cfg.seeds.rng_seed = v;
        }
        if let Some(v) = self.backend {
            cfg.generation.backend = v;
        }
        if let Some(v) = &self.endpoint {
            cfg.generation.endpoint = Some(v.clone());
        }
        if let Some(v) = &self.model {
            cfg.generation.model = v.clone();
        }
        if let Some(v) = &self.template {
            cfg.generation.template = Some(abs(v));
        }
        if let Some(v) = self.shots {
            cfg.generation.shots = v;
        }
        if let Some(v) = &self.delimiter {
            cfg.generation.delimiter = v.clone();
        }
        if let Some(v) = self.min_accuracy {
            cfg.filter.min_accuracy = v;
        }
        if let Some(v) = self.redundancy_jaccard {
            cfg.filter.redundancy_jaccard = v;
        }
        if let Some(v) = self.max_iter {
            cfg.label_model.max_iter = v;
        }
        if let Some(v) = self.tol {
            cfg.label_model.tol = v;
        }
        if let Some(v) = self.fit_rng {
            cfg.label_model.rng_seed = v;
        }
        if let Some(v) = self.k {
            cfg.partition.k = v;
        }
        if let Some(v) = self.partition_method {
            cfg.partition.method = v;
        }
        if let Some(v) = &self.hierarchy {
            cfg.partition.hierarchy = Some(abs(v));
        }
        if let Some(v) = self.partition_rng {
            cfg.partition.rng_seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

enum Failure {
    Usage(anyhow::Error),
    Stage(StageError),
}

impl From<StageError> for Failure {
    fn from(e: StageError) -> Self {
        Failure::Stage(e)
    }
}

/// Runs exactly one stage, loading its inputs from the output directory.
fn run_stage(name: StageName, cfg: &PipelineConfig) -> Result<(), StageError> {
    let out = cfg.output_dir.as_path();
    let stage = |r: lakelabel::Result<()>| r.stage(name);
    let dataset = || pl::load_ingested(out).stage(name);
    match name {
        StageName::Ingest => {
            pl::begin_run(out).stage(name)?;
            stage(pl::stage_ingest(cfg, out).map(drop))
        }
        StageName::Seed => stage(pl::stage_seed(cfg, &dataset()?, out).map(drop)),
        StageName::Genlf => {
            let ds = dataset()?;
            let seeds = pl::load_seeds(out).stage(name)?;
            stage(pl::stage_genlf(cfg, &ds.vocabulary, &seeds, out).map(drop))
        }
        StageName::Apply => {
            let ds = dataset()?;
            let lfs = pl::load_lfs(out, artifacts::LFS_GENERATED, &ds.vocabulary).stage(name)?;
            stage(pl::stage_apply(&lfs, &ds, out).map(drop))
        }
        StageName::Filter => {
            let ds = dataset()?;
            let seeds = pl::load_seeds(out).stage(name)?;
            let lfs = pl::load_lfs(out, artifacts::LFS_GENERATED, &ds.vocabulary).stage(name)?;
            let generated = pl::load_matrix(out, artifacts::MATRIX_GENERATED, &ds, &lfs).stage(name)?;
            stage(pl::stage_filter(cfg, &lfs, &generated, &ds, &seeds, out).map(drop))
        }
        StageName::Partition => stage(pl::stage_partition(cfg, &dataset()?.vocabulary, out).map(drop)),
        StageName::Train => {
            let ds = dataset()?;
            let seeds = pl::load_seeds(out).stage(name)?;
            let lfs = pl::load_lfs(out, artifacts::LFS_FILTERED, &ds.vocabulary).stage(name)?;
            let matrix = pl::load_matrix(out, artifacts::MATRIX, &ds, &lfs).stage(name)?;
            let partition = lakelabel::stacked::Partition::read(&out.join(artifacts::PARTITION)).stage(name)?;
            stage(pl::stage_train(cfg, &matrix, &lfs, &partition, &ds, &seeds, out).map(drop))
        }
        StageName::Predict => {
            let ds = dataset()?;
            let lfs = pl::load_lfs(out, artifacts::LFS_FILTERED, &ds.vocabulary).stage(name)?;
            let model = StackedModel::load(&out.join(artifacts::MODEL_DIR)).stage(name)?;
            let matrix = pl::load_matrix(out, artifacts::MATRIX, &ds, &lfs).stage(name)?;
            stage(pl::stage_predict(&model, &matrix, &ds, out).map(drop))
        }
        StageName::Eval => {
            let ds = dataset()?;
            let seeds = pl::load_seeds(out).stage(name)?;
            let lfs = pl::load_lfs(out, artifacts::LFS_FILTERED, &ds.vocabulary).stage(name)?;
            let matrix = pl::load_matrix(out, artifacts::MATRIX, &ds, &lfs).stage(name)?;
            let predictions = pl::load_predictions(out, &ds.vocabulary).stage(name)?;
            let generated = if out.join(artifacts::LFS_GENERATED).exists() {
                Some(pl::load_lfs(out, artifacts::LFS_GENERATED, &ds.vocabulary).stage(name)?.len())
            } else {
                None
            };
            let report = pl::stage_eval(&predictions, &ds, &seeds, &matrix, &lfs, generated, out).stage(name)?;
            print!("{}", report.to_text());
            Ok(())
        }
        StageName::Export => {
            let ds = dataset()?;
            let predictions = pl::load_predictions(out, &ds.vocabulary).stage(name)?;
            let n = pl::stage_export(&predictions, &ds, out).stage(name)?;
            pl::finish_run(cfg).stage(name)?;
            log::info!("exported {n} weakly labeled columns");
            Ok(())
        }
    }
}

fn synth(args: &SynthArgs) -> Result<(), Failure> {
    let types = args
        .types
        .clone()
        .unwrap_or_else(|| SYNTHETIC_TYPES.iter().map(|s| s.to_string()).collect());
    let cfg = SyntheticConfig {
        types,
        columns_per_type: args.columns_per_type,
        values_per_column: args.values_per_column,
        noise: args.noise,
        rng_seed: args.seed,
    };
    let dataset = generate_corpus(&cfg).map_err(|e| Failure::Usage(e.into()))?;
    dataset
        .save_jsonl(&args.out)
        .map_err(|source| StageError { stage: StageName::Ingest, source })?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let single = |name: StageName, args: &StageArgs| -> Result<(), Failure> {
        let cfg = args.config().map_err(Failure::Usage)?;
        run_stage(name, &cfg)?;
        Ok(())
    };
    match cli.command {
        Command::Ingest(a) => single(StageName::Ingest, &a),
        Command::Seed(a) => single(StageName::Seed, &a),
        Command::Genlf(a) => single(StageName::Genlf, &a),
        Command::Apply(a) => single(StageName::Apply, &a),
        Command::Filter(a) => single(StageName::Filter, &a),
        Command::Partition(a) => single(StageName::Partition, &a),
        Command::Train(a) => single(StageName::Train, &a),
        Command::Predict(a) => single(StageName::Predict, &a),
        Command::Eval(a) => single(StageName::Eval, &a),
        Command::Export(a) => single(StageName::Export, &a),
        Command::Run { stage, force } => {
            let cfg = stage.config().map_err(Failure::Usage)?;
            let outcome = pl::run_pipeline(&cfg, force)?;
            if let RunOutcome::UpToDate(_) = outcome {
                eprintln!("{} is up to date; pass --force to rerun", cfg.output_dir.display());
            }
            print!("{}", outcome.report().to_text());
            Ok(())
        }
        Command::Synth(a) => synth(&a),
    }
}

/// Joins an error and its sources with `: `, skipping a source whose text the
/// previous message already ends with.
fn render(err: &(dyn std::error::Error + 'static)) -> String {
    let mut out = err.to_string();
    let mut last = out.clone();
    let mut next = err.source();
    while let Some(e) = next {
        let text = e.to_string();
        if !last.ends_with(&text) {
            out.push_str(": ");
            out.push_str(&text);
        }
        last = text;
        next = e.source();
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {}", render(e.as_ref()));
            ExitCode::from(1)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: stage `{}` failed: {}", e.stage, render(&e.source));
            ExitCode::from(2)
        }
    }
}
