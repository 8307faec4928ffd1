//! Column corpora: the label vocabulary, column instances, ingestion and
//! seed sampling.

mod sample;
pub(crate) mod stats;

pub use sample::{sample_seeds, SeedColumn, SeedGroup, SeedSet};
pub use stats::{column_aggregates, parse_numeric, AggregateStats, Stat};

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::SystemTime;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position of a semantic type in a [`LabelVocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelId(pub u32);

impl LabelId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for LabelId {
    fn from(i: usize) -> Self {
        LabelId(i as u32)
    }
}

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

fn fold(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Ordered set of semantic type names. Lookups are case-insensitive and
/// ignore surrounding whitespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocabulary {
    labels: Vec<String>,
    index: HashMap<String, LabelId>,
}

impl LabelVocabulary {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut labels = Vec::new();
        let mut index = HashMap::new();
        for name in names {
            let name = name.as_ref().trim();
            if name.is_empty() {
                return Err(Error::InvalidParameter("empty label name".into()));
            }
            let id = LabelId::from(labels.len());
            if index.insert(fold(name), id).is_some() {
                return Err(Error::DuplicateLabel(name.to_string()));
            }
            labels.push(name.to_string());
        }
        if labels.is_empty() {
            return Err(Error::EmptyVocabulary);
        }
        Ok(LabelVocabulary { labels, index })
    }

    /// Reads one label name per line; blank lines and `#` comments are skipped.
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<LabelId> {
        self.index.get(&fold(name)).copied()
    }

    pub fn id(&self, name: &str) -> Result<LabelId> {
        self.get(name)
            .ok_or_else(|| Error::UnknownLabel(name.to_string()))
    }

    pub fn name(&self, id: LabelId) -> &str {
        &self.labels[id.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.labels
    }

    pub fn ids(&self) -> impl Iterator<Item = LabelId> {
        (0..self.labels.len()).map(LabelId::from)
    }
}

impl Serialize for LabelVocabulary {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.labels.serialize(s)
    }
}

impl<'de> Deserialize<'de> for LabelVocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let names = Vec::<String>::deserialize(d)?;
        LabelVocabulary::new(names).map_err(serde::de::Error::custom)
    }
}

/// One table column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnInstance {
    pub column_id: String,
    pub table_id: String,
    /// Carried through ingestion and export; labeling functions never read it.
    pub header: Option<String>,
    pub values: Vec<String>,
    pub gold_label: Option<LabelId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub source: PathBuf,
    pub ingested_at: SystemTime,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocabulary: LabelVocabulary,
    pub columns: Vec<ColumnInstance>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(vocabulary: LabelVocabulary, columns: Vec<ColumnInstance>, source: PathBuf) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.column_id.as_str()) {
                return Err(Error::DuplicateColumn(c.column_id.clone()));
            }
            if let Some(l) = c.gold_label {
                if l.index() >= vocabulary.len() {
                    return Err(Error::UnknownLabel(l.to_string()));
                }
            }
        }
        Ok(Dataset {
            vocabulary,
            columns,
            provenance: Provenance {
                source,
                ingested_at: SystemTime::now(),
            },
        })
    }

    pub fn gold(&self) -> Vec<Option<LabelId>> {
        self.columns.iter().map(|c| c.gold_label).collect()
    }

    pub fn position(&self, column_id: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.column_id == column_id)
    }

    /// Writes the dataset in the JSONL corpus format, one column per line.
    pub fn write_jsonl(&self, w: &mut impl Write) -> std::io::Result<()> {
        for c in &self.columns {
            let rec = JsonlRecord {
                column_id: c.column_id.clone(),
                table_id: c.table_id.clone(),
                header: c.header.clone(),
                values: c.values.clone(),
                label: c.gold_label.map(|l| self.vocabulary.name(l).to_string()),
            };
            serde_json::to_writer(&mut *w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).map_err(|e| Error::io(path, e))?;
        fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusFormat {
    Jsonl,
    CsvDir,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv-dir" => Ok(CorpusFormat::CsvDir),
            other => Err(Error::InvalidParameter(format!(
                "unknown corpus format `{other}` (expected jsonl or csv-dir)"
            ))),
        }
    }
}

/// One line of the JSONL corpus format.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JsonlRecord {
    pub column_id: String,
    pub table_id: String,
    pub header: Option<String>,
    pub values: Vec<String>,
    pub label: Option<String>,
}

/// Loads a corpus. With `vocabulary` given, gold labels outside it are an
/// error; otherwise the vocabulary is the set of gold labels in order of
/// first appearance.
pub fn load_dataset(
    path: &Path,
    format: CorpusFormat,
    vocabulary: Option<LabelVocabulary>,
) -> Result<Dataset> {
    let raw = match format {
        CorpusFormat::Jsonl => read_jsonl(path)?,
        CorpusFormat::CsvDir => read_csv_dir(path)?,
    };
    let vocabulary = match vocabulary {
        Some(v) => v,
        None => {
            let mut names: Vec<&str> = Vec::new();
            let mut seen = HashSet::new();
            for (_, label) in &raw {
                if let Some(l) = label {
                    if seen.insert(fold(l)) {
                        names.push(l);
                    }
                }
            }
            LabelVocabulary::new(names)?
        }
    };
    let mut columns = Vec::with_capacity(raw.len());
    for (mut col, label) in raw {
        if let Some(l) = label {
            col.gold_label = Some(vocabulary.id(&l)?);
        }
        columns.push(col);
    }
    Dataset::new(vocabulary, columns, path.to_path_buf())
}

fn read_jsonl(path: &Path) -> Result<Vec<(ColumnInstance, Option<String>)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonlRecord = serde_json::from_str(&line).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push((
            ColumnInstance {
                column_id: rec.column_id,
                table_id: rec.table_id,
                header: rec.header,
                values: rec.values,
                gold_label: None,
            },
            rec.label,
        ));
    }
    Ok(out)
}

/// Name of the sidecar file mapping `table_id,column_index,label`.
pub const CSV_LABELS_FILE: &str = "labels.csv";

fn read_csv_dir(dir: &Path) -> Result<Vec<(ColumnInstance, Option<String>)>> {
    let mut tables: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "csv")
                && p.file_name().is_some_and(|n| n != CSV_LABELS_FILE)
        })
        .collect();
    tables.sort();

    let mut labels: HashMap<(String, usize), String> = HashMap::new();
    let labels_path = dir.join(CSV_LABELS_FILE);
    if labels_path.exists() {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_path(&labels_path)
            .map_err(|e| csv_error(&labels_path, e))?;
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(&labels_path, e))?;
            let malformed = |message: String| Error::Malformed {
                path: labels_path.clone(),
                line: i + 1,
                message,
            };
            if rec.len() != 3 {
                return Err(malformed(format!("expected 3 fields, got {}", rec.len())));
            }
            if i == 0 && &rec[0] == "table_id" {
                continue;
            }
            let idx: usize = rec[1]
                .trim()
                .parse()
                .map_err(|_| malformed(format!("bad column index `{}`", &rec[1])))?;
            labels.insert((rec[0].trim().to_string(), idx), rec[2].trim().to_string());
        }
    }

    let mut out = Vec::new();
    for table in tables {
        let table_id = table
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut rdr = csv::ReaderBuilder::new()
            .flexible(true)
            .from_path(&table)
            .map_err(|e| csv_error(&table, e))?;
        let headers: Vec<String> = rdr
            .headers()
            .map_err(|e| csv_error(&table, e))?
            .iter()
            .map(str::to_string)
            .collect();
        let mut values: Vec<Vec<String>> = vec![Vec::new(); headers.len()];
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_error(&table, e))?;
            for (j, cell) in rec.iter().enumerate().take(headers.len()) {
                values[j].push(cell.to_string());
            }
        }
        for (j, (header, values)) in headers.into_iter().zip(values).enumerate() {
            let label = labels.get(&(table_id.clone(), j)).cloned();
            out.push((
                ColumnInstance {
                    column_id: format!("{table_id}:{j}"),
                    table_id: table_id.clone(),
                    header: Some(header),
                    values,
                    gold_label: None,
                },
                label,
            ));
        }
    }
    Ok(out)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    Error::Malformed {
        path: path.to_path_buf(),
        line,
        message: e.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::File::create(&p).unwrap().write_all(text.as_bytes()).unwrap();
        p
    }

    #[test]
    fn jsonl_three_columns_two_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.jsonl",
            concat!(
                r#"{"column_id":"a","table_id":"t","header":null,"values":["1999"],"label":"year"}"#, "\n",
                r#"{"column_id":"b","table_id":"t","header":"h","values":["x"],"label":"name"}"#, "\n",
                r#"{"column_id":"c","table_id":"t","header":null,"values":[],"label":"Year"}"#, "\n",
            ),
        );
        let ds = load_dataset(&p, CorpusFormat::Jsonl, None).unwrap();
        assert_eq!(ds.vocabulary.len(), 2);
        assert_eq!(ds.columns.len(), 3);
        assert_eq!(ds.columns[2].gold_label, Some(LabelId(0)));
    }

    #[test]
    fn duplicate_column_id_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let line = r#"{"column_id":"a","table_id":"t","header":null,"values":[],"label":null}"#;
        let p = write(dir.path(), "c.jsonl", &format!("{line}\n{line}\n"));
        let err = load_dataset(&p, CorpusFormat::Jsonl, LabelVocabulary::new(["x"]).ok()).unwrap_err();
        assert!(matches!(err, Error::DuplicateColumn(id) if id == "a"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let ok = r#"{"column_id":"a","table_id":"t","header":null,"values":[],"label":"x"}"#;
        let p = write(dir.path(), "c.jsonl", &format!("{ok}\n{{not json\n"));
        match load_dataset(&p, CorpusFormat::Jsonl, None).unwrap_err() {
            Error::Malformed { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn unknown_gold_label_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.jsonl",
            "{\"column_id\":\"a\",\"table_id\":\"t\",\"header\":null,\"values\":[],\"label\":\"zzz\"}\n",
        );
        let vocab = LabelVocabulary::new(["year"]).unwrap();
        let err = load_dataset(&p, CorpusFormat::Jsonl, Some(vocab)).unwrap_err();
        assert!(err.to_string().contains("zzz"));
    }

    #[test]
    fn unknown_field_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "c.jsonl",
            "{\"column_id\":\"a\",\"table_id\":\"t\",\"header\":null,\"values\":[],\"label\":null,\"x\":1}\n",
        );
        assert!(matches!(
            load_dataset(&p, CorpusFormat::Jsonl, LabelVocabulary::new(["y"]).ok()),
            Err(Error::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn vocabulary_rejects_case_folded_duplicates() {
        assert!(matches!(
            LabelVocabulary::new(["Year", " year "]),
            Err(Error::DuplicateLabel(_))
        ));
        assert!(matches!(
            LabelVocabulary::new(Vec::<String>::new()),
            Err(Error::EmptyVocabulary)
        ));
    }

    #[test]
    fn csv_dir_with_sidecar_labels() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "t1.csv", "Name,Year\nAda Lovelace,1815\nAlan Turing,1912\n");
        write(dir.path(), "t0.csv", "ISBN\nISBN 0-1\n");
        write(
            dir.path(),
            CSV_LABELS_FILE,
            "table_id,column_index,label\nt1,0,name\nt1,1,year\nt0,0,isbn\n",
        );
        let ds = load_dataset(dir.path(), CorpusFormat::CsvDir, None).unwrap();
        let ids: Vec<_> = ds.columns.iter().map(|c| c.column_id.as_str()).collect();
        assert_eq!(ids, ["t0:0", "t1:0", "t1:1"]);
        assert_eq!(ds.vocabulary.names(), ["isbn", "name", "year"]);
        assert_eq!(ds.columns[2].values, ["1815", "1912"]);
        assert_eq!(ds.columns[1].header.as_deref(), Some("Name"));
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = LabelVocabulary::new(["year", "name", "unused"]).unwrap();
        let columns = vec![
            ColumnInstance {
                column_id: "c1".into(),
                table_id: "t".into(),
                header: Some("When".into()),
                values: vec!["1999".into(), "a \"quoted\"\ncell".into()],
                gold_label: Some(LabelId(0)),
            },
            ColumnInstance {
                column_id: "c2".into(),
                table_id: "t".into(),
                header: None,
                values: vec![],
                gold_label: None,
            },
        ];
        let ds = Dataset::new(vocab.clone(), columns, "mem".into()).unwrap();
        let p = dir.path().join("out.jsonl");
        ds.save_jsonl(&p).unwrap();
        let back = load_dataset(&p, CorpusFormat::Jsonl, Some(vocab)).unwrap();
        assert_eq!(back.vocabulary, ds.vocabulary);
        assert_eq!(back.columns, ds.columns);
    }
}
