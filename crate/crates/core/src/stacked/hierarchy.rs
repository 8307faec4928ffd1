use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::de::{Deserializer, MapAccess, Visitor};
use serde::Deserialize;

use crate::corpus::{LabelId, LabelVocabulary};
use crate::error::{Error, Result};

use super::{Partition, PartitionMethod};

/// A JSON object kept as ordered pairs so repeated keys stay visible.
struct Pairs(Vec<(String, String)>);

impl<'de> Deserialize<'de> for Pairs {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct PairsVisitor;
        impl<'de> Visitor<'de> for PairsVisitor {
            type Value = Pairs;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an object mapping label names to category names")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Pairs, A::Error> {
                let mut out = Vec::new();
                while let Some(entry) = map.next_entry::<String, String>()? {
                    out.push(entry);
                }
                Ok(Pairs(out))
            }
        }
        d.deserialize_map(PairsVisitor)
    }
}

/// Parses `{label: category}` pairs in file order.
pub fn parse_hierarchy(text: &str) -> Result<Vec<(String, String)>> {
    let pairs: Pairs = serde_json::from_str(text).map_err(|e| Error::json("hierarchy", e))?;
    Ok(pairs.0)
}

/// One group per top-level category, groups ordered by category name.
pub fn hierarchy_partition(path: &Path, vocabulary: &LabelVocabulary) -> Result<Partition> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut categories: BTreeMap<String, Vec<LabelId>> = BTreeMap::new();
    let mut mapped = HashSet::new();
    for (label, category) in parse_hierarchy(&text)? {
        let id = vocabulary
            .get(&label)
            .ok_or_else(|| Error::Hierarchy(format!("label `{label}` is not in the vocabulary")))?;
        if !mapped.insert(id) {
            return Err(Error::Hierarchy(format!("label `{label}` is mapped more than once")));
        }
        let category = category.trim();
        if category.is_empty() {
            return Err(Error::Hierarchy(format!("label `{label}` has an empty category")));
        }
        categories.entry(category.to_string()).or_default().push(id);
    }
    if let Some(missing) = vocabulary.ids().find(|id| !mapped.contains(id)) {
        return Err(Error::Hierarchy(format!(
            "label `{}` is not mapped to a category",
            vocabulary.name(missing)
        )));
    }
    Partition::new(
        categories.into_values().collect(),
        vocabulary.len(),
        PartitionMethod::Hierarchy,
        path.display().to_string(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, text: &str) -> std::path::PathBuf {
        let p = dir.path().join("hierarchy.json");
        std::fs::write(&p, text).unwrap();
        p
    }

    fn vocab(names: &[&str]) -> LabelVocabulary {
        LabelVocabulary::new(names).unwrap()
    }

    #[test]
    fn two_categories() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, r#"{"year": "time", "name": "person", "date": "time", "age": "person"}"#);
        let part = hierarchy_partition(&p, &vocab(&["year", "name", "date", "age"])).unwrap();
        assert_eq!(part.k(), 2);
        assert_eq!(part.groups, vec![vec![LabelId(1), LabelId(3)], vec![LabelId(0), LabelId(2)]]);
    }

    #[test]
    fn unmapped_doubly_mapped_and_unknown_labels_are_named() {
        let dir = tempfile::tempdir().unwrap();
        let v = vocab(&["year", "name"]);
        let e = hierarchy_partition(&write(&dir, r#"{"year": "t"}"#), &v).unwrap_err();
        assert!(e.to_string().contains("`name`"), "{e}");
        let e = hierarchy_partition(&write(&dir, r#"{"year": "t", "name": "p", "year": "p"}"#), &v).unwrap_err();
        assert!(e.to_string().contains("`year`") && e.to_string().contains("more than once"), "{e}");
        let e = hierarchy_partition(&write(&dir, r#"{"year": "t", "name": "p", "zip": "p"}"#), &v).unwrap_err();
        assert!(e.to_string().contains("`zip`"), "{e}");
    }

    #[test]
    fn large_fixture_reproduces_file_grouping() {
        let names: Vec<String> = (0..255).map(|i| format!("type_{i:03}")).collect();
        let v = LabelVocabulary::new(names.clone()).unwrap();
        let category = |i: usize| format!("cat_{}", (i * 7919) % 13);
        let body: Vec<String> = names
            .iter()
            .enumerate()
            .map(|(i, n)| format!("\"{n}\": \"{}\"", category(i)))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let part = hierarchy_partition(&write(&dir, &format!("{{{}}}", body.join(","))), &v).unwrap();
        // oracle: group directly by the category string
        let mut expected: BTreeMap<String, Vec<LabelId>> = BTreeMap::new();
        for i in 0..255 {
            expected.entry(category(i)).or_default().push(LabelId::from(i));
        }
        assert_eq!(part.groups, expected.into_values().collect::<Vec<_>>());
    }
}
