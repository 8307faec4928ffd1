use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply_values, LabelingFunction, LfKind};
use crate::corpus::stats::aggregates_of;
use crate::corpus::{ColumnInstance, LabelId};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Vote {
    pub instance: u32,
    pub lf: u32,
    pub label: LabelId,
}

/// Sparse instances × LFs matrix of votes; a missing entry is an abstain.
/// Votes are kept sorted by (instance, lf).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatrix {
    n: usize,
    m: usize,
    votes: Vec<Vote>,
    row_start: Vec<usize>,
    instance_ids: Vec<String>,
    lf_ids: Vec<String>,
}

impl LabelMatrix {
    pub fn new(
        n: usize,
        m: usize,
        mut votes: Vec<Vote>,
        instance_ids: Vec<String>,
        lf_ids: Vec<String>,
    ) -> Result<Self> {
        if instance_ids.len() != n {
            return Err(Error::Misaligned {
                expected: n,
                actual: instance_ids.len(),
            });
        }
        if lf_ids.len() != m {
            return Err(Error::Misaligned {
                expected: m,
                actual: lf_ids.len(),
            });
        }
        votes.sort_unstable();
        for w in votes.windows(2) {
            if (w[0].instance, w[0].lf) == (w[1].instance, w[1].lf) {
                return Err(Error::InvalidParameter(format!(
                    "duplicate vote at ({}, {})",
                    w[0].instance, w[0].lf
                )));
            }
        }
        if let Some(v) = votes.iter().find(|v| v.instance as usize >= n || v.lf as usize >= m) {
            return Err(Error::InvalidParameter(format!(
                "vote ({}, {}) outside a {n}x{m} matrix",
                v.instance, v.lf
            )));
        }
        let mut row_start = vec![0; n + 1];
        for v in &votes {
            row_start[v.instance as usize + 1] += 1;
        }
        for i in 0..n {
            row_start[i + 1] += row_start[i];
        }
        Ok(LabelMatrix {
            n,
            m,
            votes,
            row_start,
            instance_ids,
            lf_ids,
        })
    }

    /// Matrix with positional ids (`"0"`, `"1"`, ...).
    pub fn anonymous(n: usize, m: usize, votes: Vec<Vote>) -> Result<Self> {
        Self::new(
            n,
            m,
            votes,
            (0..n).map(|i| i.to_string()).collect(),
            (0..m).map(|j| j.to_string()).collect(),
        )
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn votes(&self) -> &[Vote] {
        &self.votes
    }

    pub fn row(&self, i: usize) -> &[Vote] {
        &self.votes[self.row_start[i]..self.row_start[i + 1]]
    }

    pub fn instance_ids(&self) -> &[String] {
        &self.instance_ids
    }

    pub fn lf_ids(&self) -> &[String] {
        &self.lf_ids
    }

    /// Cells a dense n × m representation would store.
    pub fn stored_cells(&self) -> usize {
        self.n * self.m
    }

    pub fn max_label(&self) -> Option<LabelId> {
        self.votes.iter().map(|v| v.label).max()
    }

    pub fn dense(&self) -> Vec<Vec<Option<LabelId>>> {
        let mut out = vec![vec![None; self.m]; self.n];
        for v in &self.votes {
            out[v.instance as usize][v.lf as usize] = Some(v.label);
        }
        out
    }

    /// Keeps the given LF columns, in the given order.
    pub fn select_lfs(&self, lfs: &[usize]) -> LabelMatrix {
        let mut remap = vec![None; self.m];
        for (new, &old) in lfs.iter().enumerate() {
            remap[old] = Some(new as u32);
        }
        let votes = self
            .votes
            .iter()
            .filter_map(|v| remap[v.lf as usize].map(|lf| Vote { lf, ..*v }))
            .collect();
        LabelMatrix::new(
            self.n,
            lfs.len(),
            votes,
            self.instance_ids.clone(),
            lfs.iter().map(|&j| self.lf_ids[j].clone()).collect(),
        )
        .expect("selection of a valid matrix is valid")
    }

    /// Keeps the given instance rows, in the given order.
    pub fn select_instances(&self, rows: &[usize]) -> LabelMatrix {
        let mut votes = Vec::new();
        for (new, &old) in rows.iter().enumerate() {
            votes.extend(self.row(old).iter().map(|v| Vote {
                instance: new as u32,
                ..*v
            }));
        }
        LabelMatrix::new(
            rows.len(),
            self.m,
            votes,
            rows.iter().map(|&i| self.instance_ids[i].clone()).collect(),
            self.lf_ids.clone(),
        )
        .expect("selection of a valid matrix is valid")
    }

    /// Replaces the positional alignment read from a matrix file.
    pub fn with_alignment(self, instance_ids: Vec<String>, lf_ids: Vec<String>) -> Result<Self> {
        LabelMatrix::new(self.n, self.m, self.votes, instance_ids, lf_ids)
    }

    /// Text form: `n m`, then one `instance lf label` line per vote.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.n, self.m);
        for v in &self.votes {
            let _ = writeln!(out, "{} {} {}", v.instance, v.lf, v.label);
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let malformed = |line: usize, message: &str| Error::Malformed {
            path: path.to_path_buf(),
            line,
            message: message.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| malformed(1, "missing header"))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| malformed(1, "header must be `n m`"))?;
        let [n, m] = dims[..] else {
            return Err(malformed(1, "header must be `n m`"));
        };
        let mut votes = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<u32> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| malformed(i + 1, "expected `instance lf label`"))?;
            let [instance, lf, label] = f[..] else {
                return Err(malformed(i + 1, "expected `instance lf label`"));
            };
            votes.push(Vote {
                instance,
                lf,
                label: LabelId(label),
            });
        }
        LabelMatrix::anonymous(n, m, votes)
    }
}

/// Applies every LF to every column. Pairs are evaluated in parallel; the
/// result does not depend on scheduling.
pub fn apply_all(lfs: &[LabelingFunction], columns: &[ColumnInstance]) -> Result<LabelMatrix> {
    let mut seen = HashSet::new();
    for lf in lfs {
        if !seen.insert(lf.id.as_str()) {
            return Err(Error::DuplicateLf(lf.id.clone()));
        }
    }
    let needs_stats = lfs.iter().any(|lf| lf.kind() == LfKind::Statistical);
    let rows: Vec<Vec<Vote>> = columns
        .par_iter()
        .enumerate()
        .map(|(i, col)| {
            let stats = needs_stats.then(|| aggregates_of(&col.values));
            lfs.iter()
                .enumerate()
                .filter_map(|(j, lf)| {
                    apply_values(lf, &col.values, stats.as_ref()).map(|label| Vote {
                        instance: i as u32,
                        lf: j as u32,
                        label,
                    })
                })
                .collect()
        })
        .collect();
    LabelMatrix::new(
        columns.len(),
        lfs.len(),
        rows.into_iter().flatten().collect(),
        columns.iter().map(|c| c.column_id.clone()).collect(),
        lfs.iter().map(|l| l.id.clone()).collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LfStats {
    pub lf_id: String,
    pub votes: usize,
    pub coverage: f64,
    pub overlap: f64,
    pub conflict: f64,
    /// Correct votes over votes on gold-labeled instances; `None` without
    /// gold or when the LF never voted on one.
    pub empirical_accuracy: Option<f64>,
}

pub fn lf_stats(matrix: &LabelMatrix, gold: Option<&[Option<LabelId>]>) -> Result<Vec<LfStats>> {
    if let Some(g) = gold {
        if g.len() != matrix.n() {
            return Err(Error::Misaligned {
                expected: matrix.n(),
                actual: g.len(),
            });
        }
    }
    let m = matrix.m();
    let mut votes = vec![0usize; m];
    let mut overlaps = vec![0usize; m];
    let mut conflicts = vec![0usize; m];
    let mut judged = vec![0usize; m];
    let mut correct = vec![0usize; m];
    for i in 0..matrix.n() {
        let row = matrix.row(i);
        for v in row {
            let j = v.lf as usize;
            votes[j] += 1;
            if row.len() > 1 {
                overlaps[j] += 1;
            }
            if row.iter().any(|o| o.label != v.label) {
                conflicts[j] += 1;
            }
            if let Some(Some(g)) = gold.map(|g| g[i]) {
                judged[j] += 1;
                if g == v.label {
                    correct[j] += 1;
                }
            }
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok((0..m)
        .map(|j| LfStats {
            lf_id: matrix.lf_ids()[j].clone(),
            votes: votes[j],
            coverage: frac(votes[j], matrix.n()),
            overlap: frac(overlaps[j], votes[j]),
            conflict: frac(conflicts[j], votes[j]),
            empirical_accuracy: (judged[j] > 0).then(|| correct[j] as f64 / judged[j] as f64),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::LabelVocabulary;
    use crate::lf::parse_lf;

    fn col(id: &str, values: &[&str]) -> ColumnInstance {
        ColumnInstance {
            column_id: id.into(),
            table_id: "t".into(),
            header: None,
            values: values.iter().map(|s| s.to_string()).collect(),
            gold_label: None,
        }
    }

    fn vocab() -> LabelVocabulary {
        LabelVocabulary::new(["isbn", "year", "name"]).unwrap()
    }

    fn lfs() -> Vec<LabelingFunction> {
        let v = vocab();
        [
            r#"{"id":"kw","kind":"keyword","target_label":"isbn","params":{"keywords":["isbn"],"min_fraction":0.5}}"#,
            r#"{"id":"st","kind":"statistical","target_label":"year","params":{"constraints":[{"stat":"fraction_in_range","comparator":">=","value":0.6,"range":[1700,2023]}]}}"#,
            r#"{"id":"re","kind":"regex","target_label":"name","params":{"pattern":"[A-Z][a-z]+( [A-Z][a-z]+)?","min_fraction":0.5}}"#,
        ]
        .iter()
        .map(|t| parse_lf(t, &v).unwrap())
        .collect()
    }

    fn columns() -> Vec<ColumnInstance> {
        vec![
            col("a", &["ISBN 0-1", "ISBN 0-2"]),
            col("b", &["1999", "2004", "1875"]),
            col("c", &["John Smith", "Mary"]),
            col("d", &[]),
            col("e", &["Isbn", "1999", "Ada"]),
        ]
    }

    #[test]
    fn single_abstaining_lf() {
        let m = apply_all(&lfs()[..1], &[col("x", &["nothing"])]).unwrap();
        assert_eq!((m.n(), m.m()), (1, 1));
        assert!(m.votes().is_empty());
    }

    #[test]
    fn dense_view_equals_per_cell_application() {
        let lfs = lfs();
        let cols = columns();
        let m = apply_all(&lfs, &cols).unwrap();
        let dense = m.dense();
        for (i, c) in cols.iter().enumerate() {
            for (j, lf) in lfs.iter().enumerate() {
                assert_eq!(dense[i][j], crate::lf::apply_lf(lf, c), "({i},{j})");
            }
        }
        assert_eq!(m.instance_ids(), ["a", "b", "c", "d", "e"]);
        assert_eq!(m.lf_ids(), ["kw", "st", "re"]);
    }

    #[test]
    fn permuting_columns_permutes_rows() {
        let lfs = lfs();
        let cols = columns();
        let perm = [3, 0, 4, 2, 1];
        let permuted: Vec<_> = perm.iter().map(|&i| cols[i].clone()).collect();
        let a = apply_all(&lfs, &cols).unwrap().dense();
        let b = apply_all(&lfs, &permuted).unwrap().dense();
        for (new, &old) in perm.iter().enumerate() {
            assert_eq!(b[new], a[old]);
        }
    }

    #[test]
    fn duplicate_lf_ids_rejected() {
        let mut l = lfs();
        l[1].id = "kw".into();
        assert!(matches!(apply_all(&l, &columns()), Err(Error::DuplicateLf(_))));
    }

    #[test]
    fn text_format_round_trip() {
        let m = apply_all(&lfs(), &columns()).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("5 3\n"));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.txt");
        m.write(&p).unwrap();
        let back = LabelMatrix::read(&p)
            .unwrap()
            .with_alignment(m.instance_ids().to_vec(), m.lf_ids().to_vec())
            .unwrap();
        assert_eq!(back, m);
        let lines: Vec<_> = text.lines().skip(1).collect();
        let mut sorted = lines.clone();
        sorted.sort_by_key(|l| {
            l.split(' ').map(|x| x.parse::<u32>().unwrap()).collect::<Vec<_>>()
        });
        assert_eq!(lines, sorted);
    }

    #[test]
    fn stats_on_identical_lfs() {
        let v = |i, lf, l| Vote { instance: i, lf, label: LabelId(l) };
        let m = LabelMatrix::anonymous(3, 2, vec![v(0, 0, 1), v(0, 1, 1), v(2, 0, 1), v(2, 1, 1)]).unwrap();
        for s in lf_stats(&m, None).unwrap() {
            assert_eq!(s.coverage, 2.0 / 3.0);
            assert_eq!(s.overlap, 1.0);
            assert_eq!(s.conflict, 0.0);
            assert_eq!(s.empirical_accuracy, None);
        }
    }

    #[test]
    fn stats_match_hand_enumeration() {
        // rows: 0: lf0->0 lf1->0 lf2->1 | 1: lf0->0 | 2: lf1->1 lf2->1 | 3: lf2->2
        let v = |i, lf, l| Vote { instance: i, lf, label: LabelId(l) };
        let m = LabelMatrix::anonymous(
            4,
            3,
            vec![v(0, 0, 0), v(0, 1, 0), v(0, 2, 1), v(1, 0, 0), v(2, 1, 1), v(2, 2, 1), v(3, 2, 2)],
        )
        .unwrap();
        let gold = [Some(LabelId(0)), Some(LabelId(1)), None, Some(LabelId(2))];
        let dense = m.dense();
        let stats = lf_stats(&m, Some(&gold)).unwrap();
        for j in 0..3 {
            let mut cov = 0;
            let mut ov = 0;
            let mut cf = 0;
            let mut judged = 0;
            let mut ok = 0;
            for (i, row) in dense.iter().enumerate() {
                let Some(mine) = row[j] else { continue };
                cov += 1;
                let others: Vec<_> = row.iter().enumerate().filter(|&(k, x)| k != j && x.is_some()).collect();
                if !others.is_empty() {
                    ov += 1;
                }
                if others.iter().any(|(_, x)| **x != Some(mine)) {
                    cf += 1;
                }
                if let Some(g) = gold[i] {
                    judged += 1;
                    ok += (g == mine) as usize;
                }
            }
            let s = &stats[j];
            assert_eq!(s.coverage, cov as f64 / 4.0);
            assert_eq!(s.overlap, ov as f64 / cov as f64);
            assert_eq!(s.conflict, cf as f64 / cov as f64);
            assert_eq!(s.empirical_accuracy, Some(ok as f64 / judged as f64));
        }
        // lf2 votes on rows 0,2,3: overlap 2/3, conflict 2/3 (row 0 disagrees, row 2 agrees)
        assert_eq!(stats[2].overlap, 2.0 / 3.0);
        assert_eq!(stats[2].conflict, 1.0 / 3.0);
        assert!(lf_stats(&m, Some(&gold[..2])).is_err());
    }

    #[test]
    fn select_lfs_and_instances() {
        let m = apply_all(&lfs(), &columns()).unwrap();
        let sub = m.select_lfs(&[2, 0]);
        assert_eq!(sub.lf_ids(), ["re", "kw"]);
        let d = m.dense();
        let sd = sub.dense();
        for i in 0..m.n() {
            assert_eq!(sd[i], vec![d[i][2], d[i][0]]);
        }
        let rows = m.select_instances(&[4, 1]);
        assert_eq!(rows.dense(), vec![d[4].clone(), d[1].clone()]);
    }
}
