use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use crate::corpus::stats::aggregates_of;
use crate::corpus::SeedGroup;
use crate::lf::tokenize;

const MIN_KEYWORD_LEN: usize = 3;
const MAX_KEYWORDS: usize = 5;
const NUMERIC_SHARE: f64 = 0.9;
const RANGE_SHARE: f64 = 0.7;
const MOCK_MIN_FRACTION: f64 = 0.6;

/// Regex generalizing one cell: digit runs become `\d{n}`, uppercase runs
/// `[A-Z]{n}`, lowercase runs `[a-z]+`, whitespace runs `\s+`; everything
/// else is escaped literally.
pub fn value_shape(cell: &str) -> String {
    #[derive(PartialEq, Clone, Copy)]
    enum Class {
        Digit,
        Upper,
        Lower,
        Space,
        Other(char),
    }
    let class = |c: char| match c {
        '0'..='9' => Class::Digit,
        'A'..='Z' => Class::Upper,
        'a'..='z' => Class::Lower,
        c if c.is_whitespace() => Class::Space,
        c => Class::Other(c),
    };
    let chars: Vec<char> = cell.trim().chars().collect();
    let mut out = String::new();
    let mut i = 0;
    while i < chars.len() {
        let c = class(chars[i]);
        let mut j = i + 1;
        if !matches!(c, Class::Other(_)) {
            while j < chars.len() && class(chars[j]) == c {
                j += 1;
            }
        }
        let n = j - i;
        let counted = |base: &str| if n == 1 { base.to_string() } else { format!("{base}{{{n}}}") };
        match c {
            Class::Digit => out.push_str(&counted(r"\d")),
            Class::Upper => out.push_str(&counted("[A-Z]")),
            Class::Lower => out.push_str("[a-z]+"),
            Class::Space => out.push_str(r"\s+"),
            Class::Other(ch) => out.push_str(&regex_syntax::escape(&ch.to_string())),
        }
        i = j;
    }
    out
}

fn keyword_record(group: &SeedGroup) -> Option<Value> {
    // token -> cells containing it, keyed case-insensitively
    let mut counts: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for cell in group.values() {
        let mut seen = BTreeSet::new();
        for tok in tokenize(cell) {
            if tok.chars().count() < MIN_KEYWORD_LEN || tok.chars().all(|c| c.is_numeric()) {
                continue;
            }
            let key = tok.to_lowercase();
            if seen.insert(key.clone()) {
                let entry = counts.entry(key).or_insert((0, tok.to_string()));
                entry.0 += 1;
                if tok < entry.1.as_str() {
                    entry.1 = tok.to_string();
                }
            }
        }
    }
    let top = counts.values().map(|(n, _)| *n).max()?;
    if top < 2 {
        return None;
    }
    let keywords: Vec<&str> = counts
        .values()
        .filter(|(n, _)| *n == top)
        .map(|(_, form)| form.as_str())
        .take(MAX_KEYWORDS)
        .collect();
    Some(json!({
        "id": format!("{}.keyword", group.label_name),
        "kind": "keyword",
        "target_label": group.label_name,
        "params": {"keywords": keywords, "match_mode": "token", "case_sensitive": false, "min_fraction": MOCK_MIN_FRACTION},
    }))
}

fn statistical_record(group: &SeedGroup) -> Option<Value> {
    let values: Vec<&str> = group.values().collect();
    let stats = aggregates_of(&values);
    let share = stats.fraction_numeric?;
    if share < NUMERIC_SHARE {
        return None;
    }
    let (lo, hi) = rounded_range(stats.min?, stats.max?);
    Some(json!({
        "id": format!("{}.range", group.label_name),
        "kind": "statistical",
        "target_label": group.label_name,
        "params": {"constraints": [
            {"stat": "fraction_in_range", "range": [lo, hi], "comparator": ">=", "value": RANGE_SHARE}
        ]},
    }))
}

/// Widens `[lo, hi]` outward to multiples of the span's leading decimal step,
/// the way a person writes "ages 10 to 90" after seeing 18 and 85.
pub fn rounded_range(lo: f64, hi: f64) -> (f64, f64) {
    let span = hi - lo;
    let scale = if span > 0.0 { span } else { hi.abs().max(1.0) };
    let exp = scale.log10().floor() as i32;
    if exp >= 0 {
        let step = 10f64.powi(exp);
        ((lo / step).floor() * step, (hi / step).ceil() * step)
    } else {
        // divide by the inverse step so results like 1.2 stay exact
        let inv = 10f64.powi(-exp);
        ((lo * inv).floor() / inv, (hi * inv).ceil() / inv)
    }
}

fn regex_record(group: &SeedGroup) -> Option<Value> {
    let mut shapes: BTreeMap<String, usize> = BTreeMap::new();
    for cell in group.values().filter(|c| !c.trim().is_empty()) {
        *shapes.entry(value_shape(cell)).or_default() += 1;
    }
    // BTreeMap order makes the lexicographically smallest shape win ties
    let (shape, _) = shapes.iter().fold(None::<(&String, usize)>, |best, (s, &n)| match best {
        Some((_, bn)) if bn >= n => best,
        _ => Some((s, n)),
    })?;
    Some(json!({
        "id": format!("{}.regex", group.label_name),
        "kind": "regex",
        "target_label": group.label_name,
        "params": {"pattern": shape, "full_match": true, "min_fraction": MOCK_MIN_FRACTION},
    }))
}

/// Deterministic stand-in for an LLM answer: one LF per applicable kind
/// derived from the seed values, wrapped in prose.
pub fn mock_generate(group: &SeedGroup) -> String {
    let records: Vec<Value> = [keyword_record(group), statistical_record(group), regex_record(group)]
        .into_iter()
        .flatten()
        .collect();
    let body = serde_json::to_string_pretty(&Value::Array(records)).expect("records serialize");
    format!(
        "Here are labeling functions for columns of type \"{}\":\n\n{body}\n\nEach one votes for \"{}\" or abstains.\n",
        group.label_name, group.label_name
    )
}
