//! Micro/macro F1 of label predictions, average per-LF F1, and the weak-label
//! export handed to an end model.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabelId, LabelVocabulary};
use crate::error::{Error, Result};
use crate::lf::{LabelMatrix, LabelingFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Lf,
    LabelModel,
    Stacked,
    MajorityVote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelScore {
    pub label: String,
    /// Gold instances of the label.
    pub support: usize,
    /// Instances predicted as the label.
    pub predicted: usize,
    pub true_positives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalCounts {
    pub instances: usize,
    pub predicted: usize,
    pub abstained: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalMetadata {
    pub micro_f1: String,
    pub macro_f1: String,
    pub avg_lf_f1: String,
    pub abstain_policy: String,
}

impl Default for EvalMetadata {
    fn default() -> Self {
        EvalMetadata {
            micro_f1: "global precision over non-abstain predictions and recall over all gold instances".into(),
            macro_f1: "unweighted mean of per-label F1 over labels present in gold".into(),
            avg_lf_f1: "mean over LFs of binary F1 for target-vs-rest, a non-vote counting as negative; \
                        an LF without votes scores 0"
                .into(),
            abstain_policy: "abstained instances count as missed recall; counting only covered \
                             instances would raise recall to precision"
                .into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub stage: Stage,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub avg_lf_f1: Option<f64>,
    /// Fraction of instances with a non-abstain prediction.
    pub coverage: f64,
    pub counts: EvalCounts,
    pub per_label: Vec<LabelScore>,
    pub metadata: EvalMetadata,
}

impl EvalReport {
    pub fn to_text(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Scores predictions (None = abstain) against gold labels.
pub fn evaluate(
    stage: Stage,
    predictions: &[Option<LabelId>],
    gold: &[LabelId],
    vocabulary: &LabelVocabulary,
) -> Result<EvalReport> {
    if predictions.len() != gold.len() {
        return Err(Error::Misaligned {
            expected: gold.len(),
            actual: predictions.len(),
        });
    }
    let m = vocabulary.len();
    let mut support = vec![0usize; m];
    let mut predicted = vec![0usize; m];
    let mut tp = vec![0usize; m];
    for (p, g) in predictions.iter().zip(gold) {
        for l in p.iter().chain(std::iter::once(g)) {
            if l.index() >= m {
                return Err(Error::UnknownLabel(l.to_string()));
            }
        }
        support[g.index()] += 1;
        if let Some(p) = p {
            predicted[p.index()] += 1;
            tp[p.index()] += (p == g) as usize;
        }
    }
    let n = gold.len();
    let n_pred: usize = predicted.iter().sum();
    let correct: usize = tp.iter().sum();
    let micro_f1 = f1(ratio(correct, n_pred), ratio(correct, n));

    let per_label: Vec<LabelScore> = vocabulary
        .ids()
        .map(|l| {
            let i = l.index();
            let precision = ratio(tp[i], predicted[i]);
            let recall = ratio(tp[i], support[i]);
            LabelScore {
                label: vocabulary.name(l).to_string(),
                support: support[i],
                predicted: predicted[i],
                true_positives: tp[i],
                precision,
                recall,
                f1: f1(precision, recall),
            }
        })
        .collect();
    let present: Vec<f64> = per_label.iter().filter(|s| s.support > 0).map(|s| s.f1).collect();
    let macro_f1 = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    Ok(EvalReport {
        stage,
        micro_f1,
        macro_f1,
        avg_lf_f1: None,
        coverage: ratio(n_pred, n),
        counts: EvalCounts {
            instances: n,
            predicted: n_pred,
            abstained: n - n_pred,
            correct,
        },
        per_label,
        metadata: EvalMetadata::default(),
    })
}

/// Binary F1 of each LF's votes for its target against `gold == target`.
pub fn lf_f1_scores(lfs: &[LabelingFunction], matrix: &LabelMatrix, gold: &[LabelId]) -> Result<Vec<f64>> {
    if lfs.len() != matrix.m() {
        return Err(Error::Misaligned {
            expected: matrix.m(),
            actual: lfs.len(),
        });
    }
    if gold.len() != matrix.n() {
        return Err(Error::Misaligned {
            expected: matrix.n(),
            actual: gold.len(),
        });
    }
    for (lf, id) in lfs.iter().zip(matrix.lf_ids()) {
        if &lf.id != id {
            return Err(Error::InvalidParameter(format!(
                "LF `{}` does not match matrix column `{id}`",
                lf.id
            )));
        }
    }
    let mut tp = vec![0usize; lfs.len()];
    let mut fp = vec![0usize; lfs.len()];
    for v in matrix.votes() {
        let j = v.lf as usize;
        if gold[v.instance as usize] == lfs[j].target {
            tp[j] += 1;
        } else {
            fp[j] += 1;
        }
    }
    Ok(lfs
        .iter()
        .enumerate()
        .map(|(j, lf)| {
            let positives = gold.iter().filter(|&&g| g == lf.target).count();
            f1(ratio(tp[j], tp[j] + fp[j]), ratio(tp[j], positives))
        })
        .collect())
}

/// Unweighted mean of [`lf_f1_scores`].
pub fn avg_lf_f1(lfs: &[LabelingFunction], matrix: &LabelMatrix, gold: &[LabelId]) -> Result<f64> {
    if lfs.is_empty() {
        return Err(Error::NoLabelingFunctions);
    }
    let scores = lf_f1_scores(lfs, matrix, gold)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// One exported prediction. `probs` follow vocabulary order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakLabelRecord {
    pub column_id: String,
    pub label: Option<String>,
    pub probs: Vec<f64>,
    pub abstained: bool,
}

impl WeakLabelRecord {
    pub fn new(
        column_id: &str,
        label: Option<LabelId>,
        probs: Vec<f64>,
        vocabulary: &LabelVocabulary,
    ) -> Self {
        WeakLabelRecord {
            column_id: column_id.to_string(),
            label: label.map(|l| vocabulary.name(l).to_string()),
            probs,
            abstained: label.is_none(),
        }
    }

    pub fn label_id(&self, vocabulary: &LabelVocabulary) -> Result<Option<LabelId>> {
        self.label.as_deref().map(|n| vocabulary.id(n)).transpose()
    }
}

pub fn write_weak_labels(records: &[WeakLabelRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(r).expect("record serializes");
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_weak_labels(path: &Path, vocabulary: &LabelVocabulary) -> Result<Vec<WeakLabelRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let r: WeakLabelRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if r.probs.len() != vocabulary.len() {
            return Err(malformed(format!(
                "{} probabilities for {} labels",
                r.probs.len(),
                vocabulary.len()
            )));
        }
        if r.abstained != r.label.is_none() {
            return Err(malformed("`abstained` disagrees with `label`".into()));
        }
        r.label_id(vocabulary).map_err(|e| malformed(e.to_string()))?;
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lf::{KeywordParams, LfParams, LfProvenance, MatchMode, Vote};
    use proptest::prelude::*;

    fn vocab(m: usize) -> LabelVocabulary {
        LabelVocabulary::new((0..m).map(|i| format!("l{i}"))).unwrap()
    }

    fn ids(xs: &[u32]) -> Vec<LabelId> {
        xs.iter().map(|&x| LabelId(x)).collect()
    }

    #[test]
    fn perfect_and_all_abstain() {
        let gold = ids(&[0, 1, 2, 1]);
        let perfect: Vec<_> = gold.iter().map(|&g| Some(g)).collect();
        let r = evaluate(Stage::LabelModel, &perfect, &gold, &vocab(3)).unwrap();
        assert_eq!((r.micro_f1, r.macro_f1, r.coverage), (1.0, 1.0, 1.0));
        let r = evaluate(Stage::LabelModel, &[None; 4], &gold, &vocab(3)).unwrap();
        assert_eq!((r.micro_f1, r.macro_f1, r.coverage), (0.0, 0.0, 0.0));
        assert!(evaluate(Stage::Lf, &[None], &gold, &vocab(3)).is_err());
    }

    #[test]
    fn three_label_confusion_fixture() {
        // gold:  0 0 0 1 1 2 2 2
        // pred:  0 0 1 1 - 2 0 2
        let gold = ids(&[0, 0, 0, 1, 1, 2, 2, 2]);
        let pred = vec![Some(LabelId(0)), Some(LabelId(0)), Some(LabelId(1)), Some(LabelId(1)), None,
                        Some(LabelId(2)), Some(LabelId(0)), Some(LabelId(2))];
        let r = evaluate(Stage::Stacked, &pred, &gold, &vocab(3)).unwrap();
        // hand-enumerated confusion matrix
        // label 0: tp 2, pred 3, support 3 -> P 2/3 R 2/3
        // label 1: tp 1, pred 2, support 2 -> P 1/2 R 1/2
        // label 2: tp 2, pred 2, support 3 -> P 1   R 2/3
        let f = |p: f64, r: f64| 2.0 * p * r / (p + r);
        let expected = [(2.0 / 3.0, 2.0 / 3.0), (0.5, 0.5), (1.0, 2.0 / 3.0)];
        for (row, (p, rc)) in r.per_label.iter().zip(expected) {
            assert!((row.precision - p).abs() < 1e-12 && (row.recall - rc).abs() < 1e-12);
            assert!((row.f1 - f(p, rc)).abs() < 1e-12);
        }
        let macro_expected = expected.iter().map(|&(p, rc)| f(p, rc)).sum::<f64>() / 3.0;
        assert!((r.macro_f1 - macro_expected).abs() < 1e-12);
        // micro: 5 correct of 7 predicted, 8 gold
        assert!((r.micro_f1 - f(5.0 / 7.0, 5.0 / 8.0)).abs() < 1e-12);
        assert_eq!(r.counts, EvalCounts { instances: 8, predicted: 7, abstained: 1, correct: 5 });
        let back: EvalReport = serde_json::from_str(&r.to_text()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn macro_skips_labels_absent_from_gold() {
        let gold = ids(&[0, 0]);
        let pred = vec![Some(LabelId(0)), Some(LabelId(1))];
        let r = evaluate(Stage::Lf, &pred, &gold, &vocab(3)).unwrap();
        assert!((r.macro_f1 - f1(1.0, 0.5)).abs() < 1e-12);
    }

    fn kw(id: &str, target: u32) -> LabelingFunction {
        LabelingFunction {
            id: id.into(),
            target: LabelId(target),
            params: LfParams::Keyword(KeywordParams::new(vec!["k".into()], MatchMode::Token, false, 0.6).unwrap()),
            provenance: LfProvenance::default(),
        }
    }

    fn lf_matrix(lfs: &[LabelingFunction], n: usize, fired: &[(u32, u32)]) -> LabelMatrix {
        LabelMatrix::new(
            n,
            lfs.len(),
            fired.iter().map(|&(i, j)| Vote { instance: i, lf: j, label: lfs[j as usize].target }).collect(),
            (0..n).map(|i| format!("c{i}")).collect(),
            lfs.iter().map(|l| l.id.clone()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn lf_f1_definitions() {
        let lfs = vec![kw("perfect", 1), kw("silent", 0)];
        let gold = ids(&[1, 0, 1, 2]);
        let m = lf_matrix(&lfs, 4, &[(0, 0), (2, 0)]);
        assert_eq!(lf_f1_scores(&lfs, &m, &gold).unwrap(), vec![1.0, 0.0]);
        assert_eq!(avg_lf_f1(&lfs, &m, &gold).unwrap(), 0.5);
        assert!(matches!(avg_lf_f1(&[], &LabelMatrix::anonymous(4, 0, vec![]).unwrap(), &gold),
                         Err(Error::NoLabelingFunctions)));
    }

    #[test]
    fn five_lf_fixture_matches_counting_oracle() {
        let lfs: Vec<_> = (0..5).map(|j| kw(&format!("lf{j}"), j % 3)).collect();
        let gold = ids(&[0, 1, 2, 0, 1, 2, 0, 0, 1, 2]);
        let fired: Vec<(u32, u32)> = (0..10u32)
            .flat_map(|i| (0..5u32).map(move |j| (i, j)))
            .filter(|&(i, j)| (i * 7 + j * 3) % 4 == 0 || (gold[i as usize].0 == j % 3 && i % 3 != 0))
            .collect();
        let m = lf_matrix(&lfs, 10, &fired);
        let mut total = 0.0;
        for j in 0..5u32 {
            let t = j % 3;
            let (mut tp, mut fp, mut fnn) = (0.0, 0.0, 0.0);
            for i in 0..10u32 {
                let voted = fired.contains(&(i, j));
                let pos = gold[i as usize].0 == t;
                match (voted, pos) {
                    (true, true) => tp += 1.0,
                    (true, false) => fp += 1.0,
                    (false, true) => fnn += 1.0,
                    _ => {}
                }
            }
            total += if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fnn) };
        }
        assert!((avg_lf_f1(&lfs, &m, &gold).unwrap() - total / 5.0).abs() < 1e-12);
    }

    #[test]
    fn weak_labels_round_trip() {
        let v = vocab(3);
        let records = vec![
            WeakLabelRecord::new("a", Some(LabelId(2)), vec![0.1, 0.2, 0.7000000000000001], &v),
            WeakLabelRecord::new("b", None, vec![1.0 / 3.0; 3], &v),
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.jsonl");
        write_weak_labels(&records, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.lines().nth(1).unwrap().contains("\"abstained\":true"));
        let back = read_weak_labels(&p, &v).unwrap();
        assert_eq!(back, records);
        assert_eq!(back[0].label_id(&v).unwrap(), Some(LabelId(2)));
    }

    proptest! {
        #[test]
        fn permutation_invariance_and_micro_equals_accuracy(
            pairs in prop::collection::vec((0u32..4, 0u32..4), 1..60),
            rot in 0usize..60,
        ) {
            let v = vocab(4);
            let gold: Vec<LabelId> = pairs.iter().map(|p| LabelId(p.0)).collect();
            let pred: Vec<Option<LabelId>> = pairs.iter().map(|p| Some(LabelId(p.1))).collect();
            let r = evaluate(Stage::LabelModel, &pred, &gold, &v).unwrap();
            let acc = pairs.iter().filter(|p| p.0 == p.1).count() as f64 / pairs.len() as f64;
            prop_assert!((r.micro_f1 - acc).abs() < 1e-12);
            let k = rot % pairs.len();
            let (mut g2, mut p2) = (gold.clone(), pred.clone());
            g2.rotate_left(k);
            p2.rotate_left(k);
            let r2 = evaluate(Stage::LabelModel, &p2, &g2, &v).unwrap();
            prop_assert_eq!(r2.counts, r.counts);
            prop_assert!((r2.micro_f1 - r.micro_f1).abs() < 1e-12 && (r2.macro_f1 - r.macro_f1).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&r.macro_f1));
        }

        #[test]
        fn avg_lf_f1_ignores_lf_order(fired in prop::collection::vec((0u32..12, 0u32..6), 0..40), rot in 0usize..6) {
            let lfs: Vec<_> = (0..6).map(|j| kw(&format!("lf{j}"), j % 3)).collect();
            let gold: Vec<LabelId> = (0..12).map(|i| LabelId(i % 3)).collect();
            let mut fired = fired;
            fired.sort();
            fired.dedup();
            let base = avg_lf_f1(&lfs, &lf_matrix(&lfs, 12, &fired), &gold).unwrap();
            let mut order: Vec<usize> = (0..6).collect();
            order.rotate_left(rot);
            let perm: Vec<_> = order.iter().map(|&j| lfs[j].clone()).collect();
            let pos = |j: u32| order.iter().position(|&o| o == j as usize).unwrap() as u32;
            let refired: Vec<(u32, u32)> = fired.iter().map(|&(i, j)| (i, pos(j))).collect();
            let permuted = avg_lf_f1(&perm, &lf_matrix(&perm, 12, &refired), &gold).unwrap();
            prop_assert!((base - permuted).abs() < 1e-12);
        }
    }
}
