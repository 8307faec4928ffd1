//! Labeling functions: a small declarative DSL with keyword, statistical and
//! regex rules, each voting for one target label or abstaining.

mod dsl;
mod matrix;
mod pattern;

pub use dsl::{lf_from_value, parse_lf, read_lf_file, serialize_lf, write_lf_file, LfRecord};
pub use matrix::{apply_all, lf_stats, LabelMatrix, LfStats, Vote};
pub use pattern::Pattern;

use serde::{Deserialize, Serialize};

use crate::corpus::stats::{aggregates_of, AggregateStats, Stat};
use crate::corpus::{ColumnInstance, LabelId};
use crate::error::{Error, Result};

/// Threshold applied when a generated rule omits `min_fraction`.
pub const DEFAULT_MIN_FRACTION: f64 = 0.6;

/// Tolerance of the `=` comparator.
const EQ_TOLERANCE: f64 = 1e-9;

/// A vote, or `None` for abstain.
pub type LfOutput = Option<LabelId>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LfKind {
    Keyword,
    Statistical,
    Regex,
}

impl LfKind {
    pub const ALL: [LfKind; 3] = [LfKind::Keyword, LfKind::Statistical, LfKind::Regex];

    pub fn as_str(self) -> &'static str {
        match self {
            LfKind::Keyword => "keyword",
            LfKind::Statistical => "statistical",
            LfKind::Regex => "regex",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// Raw containment of the keyword in the cell.
    Substring,
    /// The keyword's tokens appear as a contiguous run of the cell's tokens.
    Token,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeywordParams {
    keywords: Vec<String>,
    pub match_mode: MatchMode,
    pub case_sensitive: bool,
    pub min_fraction: f64,
}

impl KeywordParams {
    /// Keywords are deduplicated and sorted case-insensitively.
    pub fn new(
        keywords: Vec<String>,
        match_mode: MatchMode,
        case_sensitive: bool,
        min_fraction: f64,
    ) -> Result<Self> {
        let mut keywords: Vec<String> = keywords.into_iter().filter(|k| !k.is_empty()).collect();
        if keywords.is_empty() {
            return Err(Error::schema("params.keywords", "must contain a non-empty keyword"));
        }
        keywords.sort_by(|a, b| a.to_lowercase().cmp(&b.to_lowercase()).then_with(|| a.cmp(b)));
        keywords.dedup();
        check_fraction(min_fraction)?;
        Ok(KeywordParams {
            keywords,
            match_mode,
            case_sensitive,
            min_fraction,
        })
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    fn matches(&self, cell: &str) -> bool {
        let fold = |s: &str| {
            if self.case_sensitive {
                s.to_string()
            } else {
                s.to_lowercase()
            }
        };
        let cell = fold(cell);
        match self.match_mode {
            MatchMode::Substring => self.keywords.iter().any(|k| cell.contains(&fold(k))),
            MatchMode::Token => {
                let tokens = tokenize(&cell);
                self.keywords.iter().any(|k| {
                    let folded = fold(k);
                    let needle = tokenize(&folded);
                    !needle.is_empty()
                        && tokens.windows(needle.len()).any(|w| w == needle.as_slice())
                })
            }
        }
    }
}

/// Splits on whitespace and punctuation.
pub fn tokenize(text: &str) -> Vec<&str> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect()
}

fn check_fraction(tau: f64) -> Result<()> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(Error::schema("params.min_fraction", format!("{tau} is outside (0, 1]")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<", alias = "lt")]
    Lt,
    #[serde(rename = "<=", alias = "le", alias = "≤")]
    Le,
    #[serde(rename = "=", alias = "eq", alias = "==")]
    Eq,
    #[serde(rename = ">=", alias = "ge", alias = "≥")]
    Ge,
    #[serde(rename = ">", alias = "gt")]
    Gt,
}

impl Comparator {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Eq => (lhs - rhs).abs() <= EQ_TOLERANCE,
            Comparator::Ge => lhs >= rhs,
            Comparator::Gt => lhs > rhs,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggregateConstraint {
    pub stat: Stat,
    pub comparator: Comparator,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<(f64, f64)>,
}

impl AggregateConstraint {
    pub fn validate(&self) -> Result<()> {
        if !self.value.is_finite() {
            return Err(Error::schema("params.constraints.value", "must be finite"));
        }
        match (self.stat.needs_range(), self.range) {
            (true, None) => Err(Error::schema(
                "params.constraints.range",
                "fraction_in_range needs a [lo, hi] range",
            )),
            (false, Some(_)) => Err(Error::schema(
                "params.constraints.range",
                "only fraction_in_range takes a range",
            )),
            (true, Some((lo, hi))) if !(lo.is_finite() && hi.is_finite() && lo <= hi) => {
                Err(Error::schema("params.constraints.range", format!("bad range [{lo}, {hi}]")))
            }
            _ => Ok(()),
        }
    }

    pub fn holds(&self, stats: &AggregateStats) -> bool {
        stats
            .value(self.stat, self.range)
            .is_some_and(|v| self.comparator.holds(v, self.value))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatisticalParams {
    constraints: Vec<AggregateConstraint>,
}

impl StatisticalParams {
    pub fn new(constraints: Vec<AggregateConstraint>) -> Result<Self> {
        if constraints.is_empty() {
            return Err(Error::schema("params.constraints", "must not be empty"));
        }
        constraints.iter().try_for_each(AggregateConstraint::validate)?;
        Ok(StatisticalParams { constraints })
    }

    pub fn constraints(&self) -> &[AggregateConstraint] {
        &self.constraints
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegexParams {
    pub pattern: Pattern,
    pub full_match: bool,
    pub min_fraction: f64,
}

impl RegexParams {
    pub fn new(pattern: &str, full_match: bool, min_fraction: f64) -> Result<Self> {
        check_fraction(min_fraction)?;
        Ok(RegexParams {
            pattern: Pattern::new(pattern)?,
            full_match,
            min_fraction,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LfParams {
    Keyword(KeywordParams),
    Statistical(StatisticalParams),
    Regex(RegexParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LfSource {
    #[default]
    Manual,
    Llm,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LfProvenance {
    #[serde(default)]
    pub source: LfSource,
    #[serde(default)]
    pub backend_name: Option<String>,
    #[serde(default)]
    pub prompt_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelingFunction {
    pub id: String,
    pub target: LabelId,
    pub params: LfParams,
    pub provenance: LfProvenance,
}

impl LabelingFunction {
    pub fn kind(&self) -> LfKind {
        match self.params {
            LfParams::Keyword(_) => LfKind::Keyword,
            LfParams::Statistical(_) => LfKind::Statistical,
            LfParams::Regex(_) => LfKind::Regex,
        }
    }
}

/// Votes `lf.target` when the rule fires on the column. Empty columns always
/// abstain; fraction thresholds are inclusive.
pub fn apply_lf(lf: &LabelingFunction, column: &ColumnInstance) -> LfOutput {
    apply_values(lf, &column.values, None)
}

pub(crate) fn apply_values(
    lf: &LabelingFunction,
    values: &[String],
    stats: Option<&AggregateStats>,
) -> LfOutput {
    if values.is_empty() {
        return None;
    }
    let fires = match &lf.params {
        LfParams::Keyword(p) => fraction(values, |c| p.matches(c)) >= p.min_fraction,
        LfParams::Regex(p) => {
            fraction(values, |c| p.pattern.is_match(c, p.full_match)) >= p.min_fraction
        }
        LfParams::Statistical(p) => match stats {
            Some(s) => p.constraints.iter().all(|c| c.holds(s)),
            None => {
                let s = aggregates_of(values);
                p.constraints.iter().all(|c| c.holds(&s))
            }
        },
    };
    fires.then_some(lf.target)
}

fn fraction(values: &[String], pred: impl Fn(&str) -> bool) -> f64 {
    let hits = values.iter().filter(|v| pred(v)).count();
    hits as f64 / values.len() as f64
}
