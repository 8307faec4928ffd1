//! JSON encoding of labeling functions.
//!
//! A record is `{"id", "kind", "target_label", "params", "provenance"}`; the
//! target is a label *name*. The canonical form written by [`serialize_lf`]
//! has keys in that order, sorted keywords, and shortest round-trip numbers.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    AggregateConstraint, KeywordParams, LabelingFunction, LfKind, LfParams, LfProvenance,
    MatchMode, RegexParams, StatisticalParams, DEFAULT_MIN_FRACTION,
};
use crate::corpus::LabelVocabulary;
use crate::error::{Error, Result};

fn default_fraction() -> f64 {
    DEFAULT_MIN_FRACTION
}

fn default_true() -> bool {
    true
}

fn default_mode() -> MatchMode {
    MatchMode::Substring
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    id: String,
    kind: LfKind,
    target_label: String,
    params: Value,
    #[serde(default)]
    provenance: LfProvenance,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKeyword {
    keywords: Vec<String>,
    #[serde(default = "default_mode")]
    match_mode: MatchMode,
    #[serde(default)]
    case_sensitive: bool,
    #[serde(default = "default_fraction")]
    min_fraction: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStatistical {
    constraints: Vec<AggregateConstraint>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegex {
    pattern: String,
    #[serde(default = "default_true")]
    full_match: bool,
    #[serde(default = "default_fraction")]
    min_fraction: f64,
}

/// Canonical output shape of one record.
#[derive(Serialize)]
pub struct LfRecord<'a> {
    id: &'a str,
    kind: LfKind,
    target_label: &'a str,
    params: ParamsOut<'a>,
    provenance: &'a LfProvenance,
}

#[derive(Serialize)]
#[serde(untagged)]
enum ParamsOut<'a> {
    Keyword {
        keywords: &'a [String],
        match_mode: MatchMode,
        case_sensitive: bool,
        min_fraction: f64,
    },
    Statistical {
        constraints: &'a [AggregateConstraint],
    },
    Regex {
        pattern: &'a str,
        full_match: bool,
        min_fraction: f64,
    },
}

impl<'a> LfRecord<'a> {
    pub fn new(lf: &'a LabelingFunction, vocabulary: &'a LabelVocabulary) -> Self {
        let params = match &lf.params {
            LfParams::Keyword(p) => ParamsOut::Keyword {
                keywords: p.keywords(),
                match_mode: p.match_mode,
                case_sensitive: p.case_sensitive,
                min_fraction: p.min_fraction,
            },
            LfParams::Statistical(p) => ParamsOut::Statistical {
                constraints: p.constraints(),
            },
            LfParams::Regex(p) => ParamsOut::Regex {
                pattern: p.pattern.as_str(),
                full_match: p.full_match,
                min_fraction: p.min_fraction,
            },
        };
        LfRecord {
            id: &lf.id,
            kind: lf.kind(),
            target_label: vocabulary.name(lf.target),
            params,
            provenance: &lf.provenance,
        }
    }
}

/// Maps a serde error to a schema error naming the offending field when the
/// message carries one (`missing field `x``, `unknown field `x``).
fn schema_error(prefix: &str, e: serde_json::Error) -> Error {
    let msg = e.to_string();
    let field = msg
        .split('`')
        .nth(1)
        .filter(|f| !f.contains(' '))
        .map(|f| {
            if prefix.is_empty() {
                f.to_string()
            } else {
                format!("{prefix}.{f}")
            }
        })
        .unwrap_or_else(|| if prefix.is_empty() { "record".into() } else { prefix.into() });
    Error::schema(field, msg)
}

pub fn parse_lf(text: &str, vocabulary: &LabelVocabulary) -> Result<LabelingFunction> {
    let value: Value = serde_json::from_str(text).map_err(|e| schema_error("", e))?;
    lf_from_value(value, vocabulary)
}

pub fn lf_from_value(value: Value, vocabulary: &LabelVocabulary) -> Result<LabelingFunction> {
    let raw: RawRecord = serde_json::from_value(value).map_err(|e| schema_error("", e))?;
    if raw.id.trim().is_empty() {
        return Err(Error::schema("id", "must not be empty"));
    }
    let target = vocabulary
        .get(&raw.target_label)
        .ok_or_else(|| Error::schema("target_label", format!("unknown label `{}`", raw.target_label)))?;
    let params = match raw.kind {
        LfKind::Keyword => {
            let p: RawKeyword =
                serde_json::from_value(raw.params).map_err(|e| schema_error("params", e))?;
            LfParams::Keyword(KeywordParams::new(
                p.keywords,
                p.match_mode,
                p.case_sensitive,
                p.min_fraction,
            )?)
        }
        LfKind::Statistical => {
            let p: RawStatistical =
                serde_json::from_value(raw.params).map_err(|e| schema_error("params", e))?;
            LfParams::Statistical(StatisticalParams::new(p.constraints)?)
        }
        LfKind::Regex => {
            let p: RawRegex =
                serde_json::from_value(raw.params).map_err(|e| schema_error("params", e))?;
            LfParams::Regex(RegexParams::new(&p.pattern, p.full_match, p.min_fraction)?)
        }
    };
    Ok(LabelingFunction {
        id: raw.id,
        target,
        params,
        provenance: raw.provenance,
    })
}

pub fn serialize_lf(lf: &LabelingFunction, vocabulary: &LabelVocabulary) -> String {
    serde_json::to_string(&LfRecord::new(lf, vocabulary)).expect("LF records always serialize")
}

/// Writes a JSON array with one canonical record per line.
pub fn write_lf_file(path: &Path, lfs: &[LabelingFunction], vocabulary: &LabelVocabulary) -> Result<()> {
    let mut out = String::from("[");
    for (i, lf) in lfs.iter().enumerate() {
        out.push_str(if i == 0 { "\n  " } else { ",\n  " });
        out.push_str(&serialize_lf(lf, vocabulary));
    }
    out.push_str(if lfs.is_empty() { "]\n" } else { "\n]\n" });
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_lf_file(path: &Path, vocabulary: &LabelVocabulary) -> Result<Vec<LabelingFunction>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let values: Vec<Value> =
        serde_json::from_str(&text).map_err(|e| Error::json(path.display().to_string(), e))?;
    let mut seen = HashSet::new();
    values
        .into_iter()
        .map(|v| {
            let lf = lf_from_value(v, vocabulary)?;
            if !seen.insert(lf.id.clone()) {
                return Err(Error::DuplicateLf(lf.id));
            }
            Ok(lf)
        })
        .collect()
}
