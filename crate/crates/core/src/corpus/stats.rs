use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::ColumnInstance;

/// Parses a cell as a decimal number: optional sign, digits with optional
/// comma thousands separators, optional fraction and exponent. Surrounding
/// whitespace is ignored. `inf`, `nan` and hex forms are rejected.
pub fn parse_numeric(cell: &str) -> Option<f64> {
    let s = cell.trim();
    let bytes = s.as_bytes();
    let mut i = 0;
    let mut normalized = String::with_capacity(s.len());
    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
        normalized.push(bytes[i] as char);
        i += 1;
    }

    // integer part, possibly grouped as 1,234,567
    let int_start = i;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    let first_group = i - int_start;
    normalized.push_str(&s[int_start..i]);
    let mut int_digits = first_group;
    if i < bytes.len() && bytes[i] == b',' {
        if first_group == 0 || first_group > 3 {
            return None;
        }
        while i < bytes.len() && bytes[i] == b',' {
            let g = i + 1;
            if g + 3 > bytes.len() || !bytes[g..g + 3].iter().all(u8::is_ascii_digit) {
                return None;
            }
            if g + 3 < bytes.len() && bytes[g + 3].is_ascii_digit() {
                return None;
            }
            normalized.push_str(&s[g..g + 3]);
            int_digits += 3;
            i = g + 3;
        }
    }

    let mut frac_digits = 0;
    if i < bytes.len() && bytes[i] == b'.' {
        normalized.push('.');
        i += 1;
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        frac_digits = i - start;
        normalized.push_str(&s[start..i]);
    }
    if int_digits == 0 && frac_digits == 0 {
        return None;
    }

    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        normalized.push('e');
        i += 1;
        if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
            normalized.push(bytes[i] as char);
            i += 1;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i == start {
            return None;
        }
        normalized.push_str(&s[start..i]);
    }
    if i != bytes.len() {
        return None;
    }
    normalized.parse::<f64>().ok().filter(|v| v.is_finite())
}

/// The closed set of column statistics that statistical labeling functions
/// may constrain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stat {
    FractionNumeric,
    /// Fraction of all cells that are numeric and lie in `[lo, hi]`.
    FractionInRange,
    NumericMin,
    NumericMax,
    NumericMean,
    MeanLength,
    DistinctRatio,
}

impl Stat {
    pub fn needs_range(self) -> bool {
        self == Stat::FractionInRange
    }
}

/// Order-free summary of a column. Every statistic is `None` for an empty
/// column; min/max/mean are also `None` when no cell is numeric.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateStats {
    pub cells: usize,
    /// Numeric cell values, ascending.
    pub numeric: Vec<f64>,
    pub fraction_numeric: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub mean: Option<f64>,
    pub mean_length: Option<f64>,
    pub distinct_ratio: Option<f64>,
}

impl AggregateStats {
    pub fn is_defined(&self) -> bool {
        self.cells > 0
    }

    pub fn fraction_in_range(&self, lo: f64, hi: f64) -> Option<f64> {
        if self.cells == 0 {
            return None;
        }
        let start = self.numeric.partition_point(|&v| v < lo);
        let end = self.numeric.partition_point(|&v| v <= hi);
        Some(end.saturating_sub(start) as f64 / self.cells as f64)
    }

    pub fn value(&self, stat: Stat, range: Option<(f64, f64)>) -> Option<f64> {
        match stat {
            Stat::FractionNumeric => self.fraction_numeric,
            Stat::FractionInRange => range.and_then(|(lo, hi)| self.fraction_in_range(lo, hi)),
            Stat::NumericMin => self.min,
            Stat::NumericMax => self.max,
            Stat::NumericMean => self.mean,
            Stat::MeanLength => self.mean_length,
            Stat::DistinctRatio => self.distinct_ratio,
        }
    }
}

pub fn column_aggregates(column: &ColumnInstance) -> AggregateStats {
    aggregates_of(&column.values)
}

pub(crate) fn aggregates_of<S: AsRef<str>>(values: &[S]) -> AggregateStats {
    let cells = values.len();
    if cells == 0 {
        return AggregateStats {
            cells: 0,
            numeric: Vec::new(),
            fraction_numeric: None,
            min: None,
            max: None,
            mean: None,
            mean_length: None,
            distinct_ratio: None,
        };
    }
    let mut numeric: Vec<f64> = values.iter().filter_map(|v| parse_numeric(v.as_ref())).collect();
    // sorted before summing so the mean does not depend on cell order
    numeric.sort_by(f64::total_cmp);
    let total_len: usize = values.iter().map(|v| v.as_ref().chars().count()).sum();
    let distinct = values.iter().map(|v| v.as_ref()).collect::<HashSet<_>>().len();
    let (min, max, mean) = if numeric.is_empty() {
        (None, None, None)
    } else {
        let sum: f64 = numeric.iter().sum();
        (
            numeric.first().copied(),
            numeric.last().copied(),
            Some(sum / numeric.len() as f64),
        )
    };
    AggregateStats {
        cells,
        fraction_numeric: Some(numeric.len() as f64 / cells as f64),
        numeric,
        min,
        max,
        mean,
        mean_length: Some(total_len as f64 / cells as f64),
        distinct_ratio: Some(distinct as f64 / cells as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn numeric_grammar() {
        assert_eq!(parse_numeric(" 1999 "), Some(1999.0));
        assert_eq!(parse_numeric("1,234,567"), Some(1_234_567.0));
        assert_eq!(parse_numeric("-4,321.50"), Some(-4321.5));
        assert_eq!(parse_numeric(".5"), Some(0.5));
        assert_eq!(parse_numeric("1e3"), Some(1000.0));
        for bad in ["", "-", "1,23", "1234,567", ",123", "inf", "NaN", "0x10", "12a", "1.2.3", "1e"] {
            assert_eq!(parse_numeric(bad), None, "{bad:?}");
        }
    }

    #[test]
    fn years_are_all_numeric() {
        let s = aggregates_of(&["1999", "2004", "1875"]);
        assert_eq!(s.fraction_numeric, Some(1.0));
        assert_eq!(s.min, Some(1875.0));
        assert_eq!(s.max, Some(2004.0));
        assert_eq!(s.fraction_in_range(1700.0, 2023.0), Some(1.0));
        assert_eq!(s.fraction_in_range(1900.0, 2023.0), Some(2.0 / 3.0));
    }

    #[test]
    fn distinct_ratio_matches_brute_force() {
        let cells = ["a", "b", "a"];
        let mut distinct = 0;
        for (i, c) in cells.iter().enumerate() {
            if !cells[..i].contains(c) {
                distinct += 1;
            }
        }
        let s = aggregates_of(&cells);
        assert_eq!(s.distinct_ratio, Some(distinct as f64 / 3.0));
        assert_eq!(s.distinct_ratio, Some(2.0 / 3.0));
        assert_eq!(s.fraction_numeric, Some(0.0));
        assert_eq!(s.mean, None);
    }

    #[test]
    fn empty_column_is_undefined() {
        let s = aggregates_of::<&str>(&[]);
        assert!(!s.is_defined());
        assert_eq!(s.fraction_numeric, None);
        assert_eq!(s.fraction_in_range(0.0, 1.0), None);
        assert_eq!(s.value(Stat::DistinctRatio, None), None);
    }

    proptest! {
        #[test]
        fn aggregates_ignore_cell_order(
            cells in proptest::collection::vec("[0-9a-c.,-]{0,6}", 0..30),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = cells.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(aggregates_of(&cells), aggregates_of(&shuffled));
        }
    }
}
