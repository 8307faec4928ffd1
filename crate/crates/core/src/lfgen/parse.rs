use serde_json::Value;

use crate::corpus::LabelVocabulary;
use crate::lf::{lf_from_value, LabelingFunction};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParseOutcome {
    pub lfs: Vec<LabelingFunction>,
    /// One entry per rejected region or record.
    pub diagnostics: Vec<String>,
}

/// Byte ranges of top-level balanced `[..]` / `{..}` regions, skipping
/// brackets inside JSON strings. An unbalanced opener is abandoned and the
/// scan resumes after it.
fn bracketed_regions(text: &str) -> Vec<(usize, usize)> {
    let bytes = text.as_bytes();
    let mut regions = Vec::new();
    let mut start = 0;
    'outer: while start < bytes.len() {
        if bytes[start] != b'[' && bytes[start] != b'{' {
            start += 1;
            continue;
        }
        let mut stack = Vec::new();
        let mut in_string = false;
        let mut escaped = false;
        for (i, &b) in bytes.iter().enumerate().skip(start) {
            if in_string {
                match (escaped, b) {
                    (true, _) => escaped = false,
                    (false, b'\\') => escaped = true,
                    (false, b'"') => in_string = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'[' => stack.push(b']'),
                b'{' => stack.push(b'}'),
                b']' | b'}' => {
                    if stack.pop() != Some(b) {
                        break;
                    }
                    if stack.is_empty() {
                        regions.push((start, i + 1));
                        start = i + 1;
                        continue 'outer;
                    }
                }
                _ => {}
            }
        }
        start += 1;
    }
    regions
}

/// Extracts every valid LF record targeting `target_label` from free text.
/// Records missing `target_label` or `id` get defaults; nothing here panics
/// or fails.
pub fn parse_llm_response(text: &str, target_label: &str, vocabulary: &LabelVocabulary) -> ParseOutcome {
    let mut out = ParseOutcome::default();
    let target = vocabulary.get(target_label);
    for (start, end) in bracketed_regions(text) {
        let value: Value = match serde_json::from_str(&text[start..end]) {
            Ok(v) => v,
            Err(e) => {
                out.diagnostics.push(format!("bytes {start}..{end}: not JSON: {e}"));
                continue;
            }
        };
        let candidates = match value {
            Value::Array(items) => items,
            obj @ Value::Object(_) => vec![obj],
            _ => unreachable!("regions start with a bracket"),
        };
        for (k, mut record) in candidates.into_iter().enumerate() {
            let at = format!("bytes {start}..{end} record {k}");
            let Some(obj) = record.as_object_mut() else {
                out.diagnostics.push(format!("{at}: not an object"));
                continue;
            };
            obj.entry("target_label").or_insert_with(|| Value::from(target_label));
            obj.entry("id").or_insert_with(|| Value::from(format!("generated.{k}")));
            match lf_from_value(record, vocabulary) {
                Ok(lf) if Some(lf.target) == target => out.lfs.push(lf),
                Ok(lf) => out.diagnostics.push(format!(
                    "{at}: targets `{}`, not the requested `{target_label}`",
                    vocabulary.name(lf.target)
                )),
                Err(e) => out.diagnostics.push(format!("{at}: {e}")),
            }
        }
    }
    out
}
