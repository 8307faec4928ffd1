//! Synthetic headerless corpus with planted keyword, shape and numeric-range
//! signals per semantic type, plus junk-cell noise.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ColumnInstance, Dataset, LabelId, LabelVocabulary};
use crate::error::{Error, Result};

/// Every type the generator knows, in vocabulary order.
pub const SYNTHETIC_TYPES: [&str; 20] = [
    "isbn", "year", "name", "city", "email", "phone", "zip_code", "price", "age", "rating",
    "latitude", "population", "url", "date", "time", "country_code", "gender", "color",
    "percentage", "order_id",
];

/// Cells substituted at the noise rate.
pub const JUNK_CELLS: [&str; 7] = ["N/A", "", "-", "null", "unknown", "?", "TBD"];

const FIRST: [&str; 24] = [
    "James", "Mary", "Robert", "Patricia", "John", "Jennifer", "Michael", "Linda", "David",
    "Elizabeth", "William", "Barbara", "Richard", "Susan", "Joseph", "Jessica", "Thomas", "Sarah",
    "Charles", "Karen", "Daniel", "Nancy", "Matthew", "Lisa",
];
const LAST: [&str; 24] = [
    "Smith", "Johnson", "Williams", "Brown", "Jones", "Garcia", "Miller", "Davis", "Rodriguez",
    "Martinez", "Hernandez", "Lopez", "Gonzalez", "Wilson", "Anderson", "Taylor", "Moore",
    "Jackson", "Martin", "Lee", "Thompson", "White", "Harris", "Clark",
];
const CITIES: [&str; 24] = [
    "Boston", "Chicago", "Denver", "Seattle", "Austin", "Portland", "Atlanta", "Houston", "Phoenix",
    "Dallas", "Miami", "Detroit", "Memphis", "Nashville", "Baltimore", "Milwaukee", "Albuquerque",
    "Tucson", "Fresno", "Sacramento", "Omaha", "Oakland", "Tulsa", "Cleveland",
];
const DOMAINS: [&str; 8] = ["example", "mail", "inbox", "post", "corp", "school", "web", "net"];
const TLDS: [&str; 4] = ["com", "org", "net", "edu"];
const WORDS: [&str; 16] = [
    "news", "shop", "blog", "data", "travel", "music", "sports", "health", "food", "games",
    "books", "photo", "cloud", "maps", "learn", "market",
];
const COUNTRIES: [&str; 16] = [
    "US", "DE", "FR", "GB", "JP", "CN", "BR", "IN", "CA", "AU", "IT", "ES", "MX", "NL", "SE", "KR",
];
const COLORS: [&str; 14] = [
    "red", "green", "blue", "yellow", "purple", "orange", "black", "white", "gray", "pink",
    "brown", "teal", "navy", "olive",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub types: Vec<String>,
    pub columns_per_type: usize,
    pub values_per_column: usize,
    /// Probability that a cell is replaced by a junk value.
    pub noise: f64,
    pub rng_seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            types: SYNTHETIC_TYPES.iter().map(|s| s.to_string()).collect(),
            columns_per_type: 100,
            values_per_column: 20,
            noise: 0.1,
            rng_seed: 0,
        }
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &'a [&'a str]) -> &'a str {
    items.choose(rng).expect("non-empty list")
}

fn digits(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n).map(|_| char::from(b'0' + rng.random_range(0..10u8))).collect()
}

fn thousands(mut v: u64) -> String {
    let mut groups = Vec::new();
    while v >= 1000 {
        groups.push(format!("{:03}", v % 1000));
        v /= 1000;
    }
    groups.push(v.to_string());
    groups.reverse();
    groups.join(",")
}

/// One clean cell of the given type.
pub fn synthetic_value(kind: &str, rng: &mut ChaCha8Rng) -> Option<String> {
    Some(match kind {
        "isbn" => format!("ISBN 978-{}-{}-{}-{}", digits(rng, 1), digits(rng, 2), digits(rng, 6), digits(rng, 1)),
        "year" => rng.random_range(1700..=2023).to_string(),
        "name" => format!("{} {}", pick(rng, &FIRST), pick(rng, &LAST)),
        "city" => pick(rng, &CITIES).to_string(),
        "email" => format!(
            "{}.{}@{}.{}",
            pick(rng, &FIRST).to_lowercase(),
            pick(rng, &LAST).to_lowercase(),
            pick(rng, &DOMAINS),
            pick(rng, &TLDS)
        ),
        "phone" => format!("({}) {}-{}", digits(rng, 3), digits(rng, 3), digits(rng, 4)),
        "zip_code" => rng.random_range(10000..=99999).to_string(),
        "price" => format!("{}.{:02}", thousands(rng.random_range(2100..=9999)), rng.random_range(0..100)),
        "age" => rng.random_range(18..=90).to_string(),
        "rating" => format!("{:.1}", rng.random_range(10..=50) as f64 / 10.0),
        "latitude" => format!("{:.4}", rng.random_range(100_000..=890_000) as f64 / 10_000.0),
        "population" => thousands(rng.random_range(1_000_000..=9_999_999)),
        "url" => format!("https://www.{}.com/{}", pick(rng, &WORDS), pick(rng, &WORDS)),
        "date" => format!(
            "{}-{:02}-{:02}",
            rng.random_range(1950..=2023),
            rng.random_range(1..=12),
            rng.random_range(1..=28)
        ),
        "time" => format!("{:02}:{:02}", rng.random_range(0..24), rng.random_range(0..60)),
        "country_code" => pick(rng, &COUNTRIES).to_string(),
        "gender" => pick(rng, &["M", "F"]).to_string(),
        "color" => pick(rng, &COLORS).to_string(),
        "percentage" => format!("{:.1}%", rng.random_range(100..=999) as f64 / 10.0),
        "order_id" => format!("ORD-{}", digits(rng, 6)),
        _ => return None,
    })
}

/// Columns are interleaved by table: table `k` holds column `k` of every
/// type. Each type draws from its own ChaCha stream.
pub fn generate_corpus(cfg: &SyntheticConfig) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&cfg.noise) {
        return Err(Error::InvalidParameter("noise must be in [0, 1]".into()));
    }
    if cfg.columns_per_type == 0 || cfg.values_per_column == 0 {
        return Err(Error::InvalidParameter("column and value counts must be positive".into()));
    }
    let vocabulary = LabelVocabulary::new(&cfg.types)?;
    let mut per_type: Vec<Vec<Vec<String>>> = Vec::with_capacity(cfg.types.len());
    for (t, kind) in cfg.types.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        rng.set_stream(t as u64);
        let mut columns = Vec::with_capacity(cfg.columns_per_type);
        for _ in 0..cfg.columns_per_type {
            let mut values = Vec::with_capacity(cfg.values_per_column);
            for _ in 0..cfg.values_per_column {
                let clean = synthetic_value(kind, &mut rng)
                    .ok_or_else(|| Error::InvalidParameter(format!("unknown synthetic type `{kind}`")))?;
                values.push(if rng.random_bool(cfg.noise) {
                    pick(&mut rng, &JUNK_CELLS).to_string()
                } else {
                    clean
                });
            }
            columns.push(values);
        }
        per_type.push(columns);
    }
    let mut instances = Vec::with_capacity(cfg.types.len() * cfg.columns_per_type);
    #[allow(clippy::needless_range_loop)]
    for k in 0..cfg.columns_per_type {
        for (t, kind) in cfg.types.iter().enumerate() {
            instances.push(ColumnInstance {
                column_id: format!("t{k:04}:{kind}"),
                table_id: format!("t{k:04}"),
                header: None,
                values: std::mem::take(&mut per_type[t][k]),
                gold_label: Some(LabelId::from(t)),
            });
        }
    }
    Dataset::new(vocabulary, instances, "synthetic".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_numeric;

    fn small(noise: f64) -> SyntheticConfig {
        SyntheticConfig { columns_per_type: 5, values_per_column: 40, noise, ..SyntheticConfig::default() }
    }

    #[test]
    fn shape_and_determinism() {
        let d = generate_corpus(&small(0.1)).unwrap();
        assert_eq!(d.columns.len(), 100);
        assert_eq!(d.vocabulary.len(), 20);
        assert!(d.columns.iter().all(|c| c.values.len() == 40 && c.header.is_none()));
        assert_eq!(generate_corpus(&small(0.1)).unwrap().columns, d.columns);
        let other = SyntheticConfig { rng_seed: 9, ..small(0.1) };
        assert_ne!(generate_corpus(&other).unwrap().columns, d.columns);
    }

    #[test]
    fn noise_rate_is_close_to_requested() {
        let d = generate_corpus(&SyntheticConfig { noise: 0.1, ..SyntheticConfig::default() }).unwrap();
        let total: usize = d.columns.iter().map(|c| c.values.len()).sum();
        let junk = d.columns.iter().flat_map(|c| &c.values).filter(|v| JUNK_CELLS.contains(&v.as_str())).count();
        let rate = junk as f64 / total as f64;
        assert!((rate - 0.1).abs() < 0.01, "{rate}");
        let clean = generate_corpus(&small(0.0)).unwrap();
        assert!(clean.columns.iter().flat_map(|c| &c.values).all(|v| !JUNK_CELLS.contains(&v.as_str())));
    }

    #[test]
    fn planted_ranges_hold() {
        let d = generate_corpus(&small(0.0)).unwrap();
        let of = |kind: &'static str| d.columns.iter().filter(move |c| c.column_id.ends_with(&format!(":{kind}")));
        for c in of("year") {
            assert!(c.values.iter().all(|v| (1700.0..=2023.0).contains(&parse_numeric(v).unwrap())));
        }
        for c in of("price") {
            assert!(c.values.iter().all(|v| parse_numeric(v).unwrap() > 2023.0));
        }
        for c in of("population") {
            assert!(c.values.iter().all(|v| parse_numeric(v).unwrap() >= 1e6));
        }
        assert_eq!(thousands(1_234_567), "1,234,567");
        assert_eq!(thousands(999), "999");
    }

    #[test]
    fn unknown_type_rejected() {
        let cfg = SyntheticConfig { types: vec!["year".into(), "zzz".into()], ..small(0.0) };
        assert!(generate_corpus(&cfg).is_err());
    }
}
