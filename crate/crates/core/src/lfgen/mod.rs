//! Prompting an LLM for labeling functions: prompt construction from seed
//! groups, pluggable chat backends, a deterministic mock, and response
//! parsing back into DSL records.

mod backend;
mod demos;
mod mock;
mod parse;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{LabelVocabulary, SeedGroup, SeedSet};
use crate::error::{Error, Result};
use crate::lf::{LabelingFunction, LfKind, LfProvenance, LfSource};

pub use backend::{
    BackendReply, BackendRequest, HttpBackend, HttpConfig, LlmBackend, MockBackend, ENV_API_KEY,
    ENV_ENDPOINT,
};
pub use demos::{bundled_demonstrations, Demonstration};
pub use mock::{mock_generate, rounded_range, value_shape};
pub use parse::{parse_llm_response, ParseOutcome};

pub const DEFAULT_DELIMITER: &str = " ||| ";
pub const PLACEHOLDERS: [&str; 5] = [
    "{demonstrations}",
    "{lf_template}",
    "{question}",
    "{seed_values}",
    "{seed_label}",
];

/// Separates the system text from the user text in a template file.
pub const TEMPLATE_SEPARATOR: &str = "---";

const DEFAULT_SYSTEM: &str = "You write labeling functions for semantic column type detection. \
A labeling function inspects the cell values of one table column and either votes for one \
semantic type or abstains. Reply with a JSON array of labeling function records.";

const DEFAULT_USER: &str = "{demonstrations}Labeling functions are JSON records of these forms:
{lf_template}

The following columns have the semantic type \"{seed_label}\". Each line holds sampled values \
of one column, separated by the delimiter.
{seed_values}

{question}
";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub system_text: String,
    pub user_text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            system_text: DEFAULT_SYSTEM.into(),
            user_text: DEFAULT_USER.into(),
        }
    }
}

impl PromptTemplate {
    /// Every placeholder occurs exactly once in the user text and never in
    /// the system text.
    pub fn new(system_text: String, user_text: String) -> Result<Self> {
        for p in PLACEHOLDERS {
            match user_text.matches(p).count() {
                1 => {}
                0 => return Err(Error::Template(format!("user text lacks {p}"))),
                n => return Err(Error::Template(format!("user text has {p} {n} times"))),
            }
            if system_text.contains(p) {
                return Err(Error::Template(format!("system text contains {p}")));
            }
        }
        Ok(PromptTemplate {
            system_text,
            user_text,
        })
    }

    /// System text, a line holding only `---`, then the user text.
    pub fn parse(text: &str) -> Result<Self> {
        let mut system = Vec::new();
        let mut lines = text.lines();
        for line in lines.by_ref() {
            if line.trim_end() == TEMPLATE_SEPARATOR {
                let user: Vec<&str> = lines.collect();
                return PromptTemplate::new(system.join("\n").trim().to_string(), user.join("\n") + "\n");
            }
            system.push(line);
        }
        Err(Error::Template(format!(
            "no `{TEMPLATE_SEPARATOR}` line separating system and user text"
        )))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        PromptTemplate::parse(&text)
    }

    /// Substitutes placeholders in one pass, so values containing
    /// placeholder text are inserted verbatim.
    fn render(&self, fill: impl Fn(&str) -> String) -> String {
        let mut at: Vec<(usize, &str)> = PLACEHOLDERS
            .iter()
            .map(|p| (self.user_text.find(p).expect("validated"), *p))
            .collect();
        at.sort();
        let mut out = String::new();
        let mut pos = 0;
        for (start, p) in at {
            out.push_str(&self.user_text[pos..start]);
            out.push_str(&fill(p));
            pos = start + p.len();
        }
        out.push_str(&self.user_text[pos..]);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Http,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mock" => Ok(BackendKind::Mock),
            "http" => Ok(BackendKind::Http),
            other => Err(Error::InvalidParameter(format!(
                "unknown backend `{other}` (expected mock or http)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationConfig {
    pub backend: BackendKind,
    /// Chat endpoint for the http backend; falls back to the environment.
    pub endpoint: Option<String>,
    pub model: String,
    /// Template file; the bundled template when absent.
    pub template: Option<PathBuf>,
    pub kinds: Vec<LfKind>,
    /// Number of bundled demonstrations shown.
    pub shots: usize,
    pub delimiter: String,
    /// Records kept from one response.
    pub max_lfs_per_response: usize,
    /// Backend calls in flight at once.
    pub max_in_flight: usize,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            backend: BackendKind::Mock,
            endpoint: None,
            model: "gpt-4".into(),
            template: None,
            kinds: LfKind::ALL.to_vec(),
            shots: 5,
            delimiter: DEFAULT_DELIMITER.into(),
            max_lfs_per_response: 8,
            max_in_flight: 4,
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self, available_demos: usize) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::InvalidParameter("generation.kinds is empty".into()));
        }
        if self.shots > available_demos {
            return Err(Error::InvalidParameter(format!(
                "generation.shots = {} but only {available_demos} demonstrations exist",
                self.shots
            )));
        }
        if self.delimiter.is_empty() {
            return Err(Error::InvalidParameter("generation.delimiter is empty".into()));
        }
        if self.max_lfs_per_response == 0 || self.max_in_flight == 0 {
            return Err(Error::InvalidParameter(
                "generation.max_lfs_per_response and max_in_flight must be positive".into(),
            ));
        }
        Ok(())
    }
}

impl GenerationConfig {
    pub fn backend(&self) -> Result<Box<dyn LlmBackend>> {
        Ok(match self.backend {
            BackendKind::Mock => Box::new(MockBackend),
            BackendKind::Http => Box::new(HttpBackend::new(HttpConfig::from_env(
                self.endpoint.clone(),
                self.model.clone(),
            )?)),
        })
    }

    pub fn prompt_template(&self) -> Result<PromptTemplate> {
        match &self.template {
            Some(path) => PromptTemplate::read(path),
            None => Ok(PromptTemplate::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub system_text: String,
    pub user_text: String,
}

impl Prompt {
    /// SHA-256 over system text, a NUL byte, and user text, in hex.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.system_text.as_bytes());
        h.update([0u8]);
        h.update(self.user_text.as_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// One cell as it appears in a prompt: line breaks and the delimiter become
/// spaces so every value is recoverable by splitting a line.
pub fn prompt_cell(cell: &str, delimiter: &str) -> String {
    let flat = cell.replace(['\r', '\n'], " ");
    let trimmed = delimiter.trim();
    let mut out = flat.replace(delimiter, " ");
    if !trimmed.is_empty() {
        out = out.replace(trimmed, " ");
    }
    out
}

/// One line per seed column, values joined by the delimiter.
pub fn seed_value_lines(group: &SeedGroup, delimiter: &str) -> Vec<String> {
    group
        .columns
        .iter()
        .map(|c| {
            c.values
                .iter()
                .map(|v| prompt_cell(v, delimiter))
                .collect::<Vec<_>>()
                .join(delimiter)
        })
        .collect()
}

fn kind_template(kind: LfKind) -> &'static str {
    match kind {
        LfKind::Keyword => {
            r#"- keyword: {"id": "<id>", "kind": "keyword", "target_label": "<type>", "params": {"keywords": ["<word>", ...], "match_mode": "token" | "substring", "case_sensitive": false, "min_fraction": 0.6}}
  fires when at least min_fraction of the cells contain one of the keywords."#
        }
        LfKind::Statistical => {
            r#"- statistical: {"id": "<id>", "kind": "statistical", "target_label": "<type>", "params": {"constraints": [{"stat": "fraction_in_range", "range": [<low>, <high>], "comparator": ">=", "value": 0.8}]}}
  fires when every constraint on the column's aggregate statistics holds; stat is one of fraction_numeric, fraction_in_range, numeric_min, numeric_max, numeric_mean, mean_length, distinct_ratio."#
        }
        LfKind::Regex => {
            r#"- regex: {"id": "<id>", "kind": "regex", "target_label": "<type>", "params": {"pattern": "<regular expression>", "full_match": true, "min_fraction": 0.6}}
  fires when at least min_fraction of the cells match the pattern."#
        }
    }
}

fn render_demonstrations(demos: &[Demonstration], delimiter: &str) -> String {
    if demos.is_empty() {
        return String::new();
    }
    let mut out = String::from(
        "Here are example columns with their semantic type and labeling functions that recognize them.\n\n",
    );
    for (i, d) in demos.iter().enumerate() {
        let values: Vec<String> = d.values.iter().map(|v| prompt_cell(v, delimiter)).collect();
        out.push_str(&format!(
            "Example {}:\nValues: {}\nSemantic type: {}\nLabeling functions:\n[\n  {}\n]\n\n",
            i + 1,
            values.join(delimiter),
            d.label_name,
            d.example_lfs.join(",\n  ")
        ));
    }
    out
}

/// Fills the template for one seed group; the group's label name is always
/// included.
pub fn build_prompt(
    template: &PromptTemplate,
    group: &SeedGroup,
    demos: &[Demonstration],
    cfg: &GenerationConfig,
) -> Result<Prompt> {
    if group.columns.iter().all(|c| c.values.is_empty()) {
        return Err(Error::EmptySeeds);
    }
    cfg.validate(demos.len())?;
    let kinds: Vec<&str> = cfg.kinds.iter().map(|k| k.as_str()).collect();
    let user_text = template.render(|p| match p {
        "{demonstrations}" => render_demonstrations(&demos[..cfg.shots], &cfg.delimiter),
        "{lf_template}" => cfg.kinds.iter().map(|&k| kind_template(k)).collect::<Vec<_>>().join("\n"),
        "{question}" => format!(
            "Write at most {} {} labeling functions that vote \"{}\" for columns like these. \
             Answer with a JSON array of records.",
            cfg.max_lfs_per_response,
            kinds.join(" or "),
            group.label_name
        ),
        "{seed_values}" => seed_value_lines(group, &cfg.delimiter).join("\n"),
        "{seed_label}" => group.label_name.clone(),
        _ => unreachable!("placeholder list is fixed"),
    });
    Ok(Prompt {
        system_text: template.system_text.clone(),
        user_text,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExchangeStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRequest {
    pub system_text: String,
    pub user_text: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

/// Audit record of one backend call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendExchange {
    pub label: String,
    pub kind: LfKind,
    pub backend: String,
    pub prompt_hash: String,
    pub request: ExchangeRequest,
    pub response: Option<String>,
    pub status: ExchangeStatus,
    pub error: Option<String>,
    /// Absent for deterministic backends so logs are reproducible.
    pub latency_ms: Option<u64>,
    pub retries: u32,
    pub diagnostics: Vec<String>,
    pub lf_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub lfs: Vec<LabelingFunction>,
    pub exchanges: Vec<BackendExchange>,
    /// Per-exchange problems that did not stop the run.
    pub warnings: Vec<String>,
}

fn exchange(
    backend: &dyn LlmBackend,
    template: &PromptTemplate,
    group: &SeedGroup,
    kind: LfKind,
    demos: &[Demonstration],
    cfg: &GenerationConfig,
    vocabulary: &LabelVocabulary,
) -> Result<(Vec<LabelingFunction>, BackendExchange)> {
    let kind_cfg = GenerationConfig {
        kinds: vec![kind],
        ..cfg.clone()
    };
    let prompt = build_prompt(template, group, demos, &kind_cfg)?;
    let prompt_hash = prompt.hash();
    let request = BackendRequest {
        system_text: &prompt.system_text,
        user_text: &prompt.user_text,
        temperature: cfg.temperature,
        max_tokens: cfg.max_tokens,
        group,
        kind,
    };
    let started = Instant::now();
    let reply = backend.complete(&request);
    let latency_ms = (!backend.deterministic()).then(|| started.elapsed().as_millis() as u64);
    let mut record = BackendExchange {
        label: group.label_name.clone(),
        kind,
        backend: backend.name().to_string(),
        prompt_hash: prompt_hash.clone(),
        request: ExchangeRequest {
            system_text: prompt.system_text.clone(),
            user_text: prompt.user_text.clone(),
            temperature: cfg.temperature,
            max_tokens: cfg.max_tokens,
        },
        response: None,
        status: ExchangeStatus::Error,
        error: None,
        latency_ms,
        retries: 0,
        diagnostics: Vec::new(),
        lf_ids: Vec::new(),
    };
    let reply = match reply {
        Ok(r) => r,
        Err(e) => {
            record.error = Some(e.to_string());
            return Ok((Vec::new(), record));
        }
    };
    record.status = ExchangeStatus::Ok;
    record.retries = reply.retries;
    let outcome = parse_llm_response(&reply.text, &group.label_name, vocabulary);
    record.response = Some(reply.text);
    record.diagnostics = outcome.diagnostics;
    let mut lfs = Vec::new();
    for lf in outcome.lfs {
        if lf.kind() != kind {
            record
                .diagnostics
                .push(format!("dropped {} record in a {} request", lf.kind().as_str(), kind.as_str()));
            continue;
        }
        if lfs.len() == cfg.max_lfs_per_response {
            record.diagnostics.push("dropped records beyond max_lfs_per_response".into());
            break;
        }
        lfs.push(lf);
    }
    for (i, lf) in lfs.iter_mut().enumerate() {
        lf.id = format!("{}.{}.{}", group.label_name, kind.as_str(), i);
        lf.provenance = LfProvenance {
            source: LfSource::Llm,
            backend_name: Some(backend.name().to_string()),
            prompt_hash: Some(prompt_hash.clone()),
        };
    }
    record.lf_ids = lfs.iter().map(|l| l.id.clone()).collect();
    Ok((lfs, record))
}

/// One backend exchange per (seed group, requested kind), at most
/// `max_in_flight` concurrently; results are merged in seed-group order.
pub fn generate_lfs(
    backend: &dyn LlmBackend,
    template: &PromptTemplate,
    seeds: &SeedSet,
    demos: &[Demonstration],
    cfg: &GenerationConfig,
    vocabulary: &LabelVocabulary,
) -> Result<Generation> {
    cfg.validate(demos.len())?;
    let jobs: Vec<(&SeedGroup, LfKind)> = seeds
        .groups
        .iter()
        .flat_map(|g| cfg.kinds.iter().map(move |&k| (g, k)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.max_in_flight)
        .build()
        .map_err(|e| Error::Config(format!("cannot start generation workers: {e}")))?;
    let results: Vec<Result<(Vec<LabelingFunction>, BackendExchange)>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(g, k)| exchange(backend, template, g, k, demos, cfg, vocabulary))
            .collect()
    });
    let mut out = Generation {
        lfs: Vec::new(),
        exchanges: Vec::new(),
        warnings: Vec::new(),
    };
    for r in results {
        let (lfs, ex) = r?;
        if ex.status == ExchangeStatus::Error {
            let w = format!(
                "{} / {}: backend failed: {}",
                ex.label,
                ex.kind.as_str(),
                ex.error.as_deref().unwrap_or("unknown error")
            );
            log::warn!("{w}");
            out.warnings.push(w);
        } else if lfs.is_empty() {
            let w = format!("{} / {}: no labeling functions parsed", ex.label, ex.kind.as_str());
            log::info!("{w}");
            out.warnings.push(w);
        }
        out.lfs.extend(lfs);
        out.exchanges.push(ex);
    }
    if out.lfs.is_empty() {
        return Err(Error::NoLabelingFunctions);
    }
    Ok(out)
}

pub fn write_exchanges(path: &Path, exchanges: &[BackendExchange]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for ex in exchanges {
        let line = serde_json::to_string(ex).expect("exchange serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_exchanges(path: &Path) -> Result<Vec<BackendExchange>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
