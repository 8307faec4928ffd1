use serde::{Deserialize, Serialize};

/// A hand-written example: a column's values, its type, and LFs for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub label_name: String,
    pub values: Vec<String>,
    /// Serialized DSL records.
    pub example_lfs: Vec<String>,
}

fn demo(label: &str, values: &[&str], lfs: &[&str]) -> Demonstration {
    Demonstration {
        label_name: label.into(),
        values: values.iter().map(|v| v.to_string()).collect(),
        example_lfs: lfs.iter().map(|l| l.to_string()).collect(),
    }
}

/// Five demonstrations covering keyword, statistical and regex LFs.
pub fn bundled_demonstrations() -> Vec<Demonstration> {
    vec![
        demo(
            "isbn",
            &["ISBN 978-0-14-044913-6", "ISBN 978-1-4028-9462-6", "ISBN 0-306-40615-2", "ISBN 978-3-16-148410-0", "ISBN 0-19-852663-6"],
            &[
                r#"{"id":"isbn.keyword","kind":"keyword","target_label":"isbn","params":{"keywords":["ISBN"],"match_mode":"token","case_sensitive":false,"min_fraction":0.6}}"#,
                r#"{"id":"isbn.regex","kind":"regex","target_label":"isbn","params":{"pattern":"ISBN [0-9-]{10,17}","full_match":true,"min_fraction":0.6}}"#,
            ],
        ),
        demo(
            "year",
            &["1999", "2004", "1875", "2010", "1923"],
            &[
                r#"{"id":"year.range","kind":"statistical","target_label":"year","params":{"constraints":[{"stat":"fraction_in_range","range":[1700,2023],"comparator":">=","value":0.8}]}}"#,
                r#"{"id":"year.regex","kind":"regex","target_label":"year","params":{"pattern":"[12][0-9]{3}","full_match":true,"min_fraction":0.6}}"#,
            ],
        ),
        demo(
            "name",
            &["Ada Lovelace", "Alan Turing", "Grace Hopper", "Edsger Dijkstra", "Barbara Liskov"],
            &[r#"{"id":"name.regex","kind":"regex","target_label":"name","params":{"pattern":"[A-Z][a-z]+( [A-Z][a-z]+)+","full_match":true,"min_fraction":0.6}}"#],
        ),
        demo(
            "currency",
            &["USD", "EUR", "JPY", "GBP", "CHF"],
            &[
                r#"{"id":"currency.keyword","kind":"keyword","target_label":"currency","params":{"keywords":["CHF","EUR","GBP","JPY","USD"],"match_mode":"token","case_sensitive":true,"min_fraction":0.6}}"#,
                r#"{"id":"currency.length","kind":"statistical","target_label":"currency","params":{"constraints":[{"stat":"mean_length","comparator":"=","value":3},{"stat":"fraction_numeric","comparator":"<=","value":0.1}]}}"#,
            ],
        ),
        demo(
            "weight",
            &["12.5 kg", "3.2 kg", "80 kg", "0.75 kg", "41 kg"],
            &[
                r#"{"id":"weight.keyword","kind":"keyword","target_label":"weight","params":{"keywords":["kg","lb"],"match_mode":"token","case_sensitive":false,"min_fraction":0.6}}"#,
                r#"{"id":"weight.regex","kind":"regex","target_label":"weight","params":{"pattern":"[0-9]+(\\.[0-9]+)? ?(kg|lb)","full_match":true,"min_fraction":0.6}}"#,
            ],
        ),
    ]
}
