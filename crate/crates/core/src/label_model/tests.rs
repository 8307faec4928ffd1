use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn vote(i: u32, lf: u32, l: u32) -> Vote {
    Vote {
        instance: i,
        lf,
        label: LabelId(l),
    }
}

fn params(priors: Vec<f64>, lfs: &[(f64, f64)]) -> LabelModelParams {
    LabelModelParams {
        priors,
        lfs: lfs
            .iter()
            .enumerate()
            .map(|(j, &(p, a))| LfParameters {
                id: format!("lf{j}"),
                propensity: p,
                accuracy: a,
            })
            .collect(),
        diagnostics: FitDiagnostics::default(),
    }
}

/// Draws a matrix from the generative model itself.
fn sample(n: usize, m: usize, k: usize, rng: &mut ChaCha8Rng) -> (LabelMatrix, Vec<LabelId>) {
    let p: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..0.9)).collect();
    let a: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..0.95)).collect();
    let mut votes = Vec::new();
    let mut truth = Vec::new();
    for i in 0..n {
        let y = rng.random_range(0..k);
        truth.push(LabelId::from(y));
        for j in 0..m {
            if rng.random_bool(p[j]) {
                let l = if rng.random_bool(a[j]) {
                    y
                } else {
                    let off = rng.random_range(1..k);
                    (y + off) % k
                };
                votes.push(vote(i as u32, j as u32, l as u32));
            }
        }
    }
    (LabelMatrix::anonymous(n, m, votes).unwrap(), truth)
}

#[test]
fn perfect_clamped_lf_reaches_upper_clamp() {
    let n = 20;
    let votes = (0..n).map(|i| vote(i, 0, i % 2)).collect();
    let m = LabelMatrix::anonymous(n as usize, 1, votes).unwrap();
    let gold: Vec<_> = (0..n).map(|i| Some(LabelId(i % 2))).collect();
    let cfg = FitConfig::default();
    let fitted = fit(&m, 2, Some(&gold), &cfg).unwrap();
    assert_eq!(fitted.lfs[0].accuracy, 1.0 - cfg.clamp_eps);
    assert_eq!(fitted.lfs[0].propensity, 1.0 - cfg.clamp_eps);
}

#[test]
fn single_vote_posterior_closed_form() {
    let p = params(vec![0.5, 0.5], &[(1.0, 0.9)]);
    let post = posterior(&p, &[vote(0, 0, 1)]);
    // 0.9 / (0.9 + 0.1)
    assert!((post.probs[1] - 0.9).abs() < 1e-12);
    assert_eq!(post.argmax, LabelId(1));
    assert!(!post.abstained);
}

#[test]
fn all_abstain_returns_priors() {
    let p = params(vec![0.5, 0.5], &[(0.4, 0.9)]);
    let post = posterior(&p, &[]);
    assert_eq!(post.probs, vec![0.5, 0.5]);
    assert!(post.abstained);
    assert_eq!(post.label(), None);
    assert_eq!(post.argmax, LabelId(0));
}

#[test]
fn agreeing_lfs_strengthen_the_posterior() {
    let p = params(vec![0.25; 4], &[(0.5, 0.8), (0.7, 0.6)]);
    let one = posterior(&p, &[vote(0, 0, 2)]);
    let two = posterior(&p, &[vote(0, 0, 2), vote(0, 1, 2)]);
    // direct Bayes: score_y ∝ π_y Π_j (a_j if y == 2 else (1 - a_j)/3)
    let bayes = |accs: &[f64]| {
        let hit: f64 = accs.iter().product::<f64>() * 0.25;
        let miss: f64 = accs.iter().map(|a| (1.0 - a) / 3.0).product::<f64>() * 0.25;
        hit / (hit + 3.0 * miss)
    };
    assert!((one.probs[2] - bayes(&[0.8])).abs() < 1e-12);
    assert!((two.probs[2] - bayes(&[0.8, 0.6])).abs() < 1e-12);
    assert!(two.probs[2] >= one.probs[2]);
}

#[test]
fn batch_prediction_equals_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (m, _) = sample(300, 6, 4, &mut rng);
    let fitted = fit(&m, 4, None, &FitConfig::default()).unwrap();
    let batch = predict(&fitted, &m).unwrap();
    for (i, post) in batch.iter().enumerate() {
        assert_eq!(post, &posterior(&fitted, m.row(i)));
        assert!((post.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let single = predict(&fitted, &m.select_instances(&[7])).unwrap();
    assert_eq!(single, vec![batch[7].clone()]);
    let perm: Vec<usize> = (0..m.n()).rev().collect();
    let rev = predict(&fitted, &m.select_instances(&perm)).unwrap();
    for (k, &i) in perm.iter().enumerate() {
        assert_eq!(rev[k], batch[i]);
    }
}

#[test]
fn majority_vote_rules() {
    let m = LabelMatrix::anonymous(
        3,
        3,
        vec![vote(0, 0, 2), vote(0, 1, 2), vote(0, 2, 5), vote(1, 0, 1), vote(1, 1, 2)],
    )
    .unwrap();
    assert_eq!(
        majority_vote(&m, 6),
        vec![Some(LabelId(2)), Some(LabelId(1)), None]
    );
}

#[test]
fn majority_vote_matches_counting_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (n, m, k) = (200, 7, 5);
    let mut votes = Vec::new();
    for i in 0..n {
        for j in 0..m {
            if rng.random_bool(0.4) {
                votes.push(vote(i, j, rng.random_range(0..k)));
            }
        }
    }
    let matrix = LabelMatrix::anonymous(n as usize, m as usize, votes).unwrap();
    let mv = majority_vote(&matrix, k as usize);
    for (i, row) in matrix.dense().iter().enumerate() {
        let mut best: Option<(usize, u32)> = None;
        for l in 0..k {
            let c = row.iter().filter(|v| **v == Some(LabelId(l))).count();
            if c > 0 && best.is_none_or(|(bc, _)| c > bc) {
                best = Some((c, l));
            }
        }
        assert_eq!(mv[i], best.map(|(_, l)| LabelId(l)), "row {i}");
    }
}

#[test]
fn em_objective_never_decreases() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for round in 0..30 {
        let n = rng.random_range(20..200);
        let m = rng.random_range(1..8);
        let k = rng.random_range(2..6);
        let (matrix, truth) = sample(n, m, k, &mut rng);
        if matrix.votes().is_empty() {
            continue;
        }
        let clamps: Vec<_> = truth
            .iter()
            .map(|&t| rng.random_bool(0.2).then_some(t))
            .collect();
        for (smoothing, learn_priors) in [(0.0, true), (1.0, true), (1.0, false)] {
            let cfg = FitConfig {
                smoothing,
                learn_priors,
                tol: 1e-12,
                ..FitConfig::default()
            };
            let fitted = fit(&matrix, k, Some(&clamps), &cfg).unwrap();
            for w in fitted.diagnostics.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9, "round {round}: {} -> {}", w[0], w[1]);
            }
        }
    }
}

#[test]
fn fit_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (m, _) = sample(500, 8, 5, &mut rng);
    let a = fit(&m, 5, None, &FitConfig::default()).unwrap();
    let b = fit(&m, 5, None, &FitConfig::default()).unwrap();
    assert_eq!(a.to_text(), b.to_text());
    assert_eq!(a, b);
}

#[test]
fn label_permutation_equivariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let k = 4;
    let (m, truth) = sample(400, 6, k, &mut rng);
    let perm = [2u32, 0, 3, 1];
    let permuted = LabelMatrix::anonymous(
        m.n(),
        m.m(),
        m.votes()
            .iter()
            .map(|v| Vote {
                label: LabelId(perm[v.label.index()]),
                ..*v
            })
            .collect(),
    )
    .unwrap();
    let clamps: Vec<_> = truth.iter().enumerate().map(|(i, &t)| (i % 5 == 0).then_some(t)).collect();
    let pclamps: Vec<_> = clamps.iter().map(|c| c.map(|l| LabelId(perm[l.index()]))).collect();
    let cfg = FitConfig::default();
    let a = fit(&m, k, Some(&clamps), &cfg).unwrap();
    let b = fit(&permuted, k, Some(&pclamps), &cfg).unwrap();
    for (y, &py) in perm.iter().enumerate().take(k) {
        assert!((a.priors[y] - b.priors[py as usize]).abs() < 1e-9);
    }
    for (x, y) in a.lfs.iter().zip(&b.lfs) {
        assert!((x.accuracy - y.accuracy).abs() < 1e-9);
        assert!((x.propensity - y.propensity).abs() < 1e-12);
    }
    let pa = predict(&a, &m).unwrap();
    let pb = predict(&b, &permuted).unwrap();
    for (x, y) in pa.iter().zip(&pb) {
        for (l, &pl) in perm.iter().enumerate().take(k) {
            assert!((x.probs[l] - y.probs[pl as usize]).abs() < 1e-9);
        }
    }
}

#[test]
fn unanimous_votes_win_when_accuracies_beat_chance() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..200 {
        let k = rng.random_range(2..7);
        let m = rng.random_range(1..5);
        let lfs: Vec<(f64, f64)> = (0..m)
            .map(|_| (rng.random_range(0.01..0.99), rng.random_range(1.0 / k as f64 + 0.01..0.999)))
            .collect();
        // the argmax claim needs a prior that does not swamp the evidence
        let p = params(vec![1.0 / k as f64; k], &lfs);
        let y = rng.random_range(0..k) as u32;
        let voters: Vec<Vote> = (0..m as u32).filter(|_| rng.random_bool(0.7)).map(|j| vote(0, j, y)).collect();
        if voters.is_empty() {
            continue;
        }
        assert_eq!(posterior(&p, &voters).argmax, LabelId(y));
    }
}

#[test]
fn invalid_inputs() {
    let m = LabelMatrix::anonymous(2, 1, vec![vote(0, 0, 0)]).unwrap();
    assert!(matches!(fit(&m, 1, None, &FitConfig::default()), Err(Error::TooFewLabels(1))));
    let empty = LabelMatrix::anonymous(2, 1, vec![]).unwrap();
    assert!(matches!(fit(&empty, 3, None, &FitConfig::default()), Err(Error::NoSignal)));
    let high = LabelMatrix::anonymous(1, 1, vec![vote(0, 0, 4)]).unwrap();
    assert!(fit(&high, 3, None, &FitConfig::default()).is_err());
    assert!(fit(&m, 2, Some(&[None]), &FitConfig::default()).is_err());
    let bad = FitConfig {
        clamp_eps: 0.5,
        ..FitConfig::default()
    };
    assert!(fit(&m, 2, None, &bad).is_err());
}

#[test]
fn params_file_round_trips_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (m, _) = sample(200, 5, 3, &mut rng);
    let fitted = fit(&m, 3, None, &FitConfig::default()).unwrap();
    let text = fitted.to_text();
    let back = LabelModelParams::from_text(&text).unwrap();
    assert_eq!(back.priors, fitted.priors);
    assert_eq!(back.lfs, fitted.lfs);
    assert_eq!(back.diagnostics.objective, fitted.diagnostics.objective);
    assert_eq!(back.to_text(), text);
    assert!(text.contains("\"priors\": ["));
    assert_eq!(predict(&back, &m).unwrap(), predict(&fitted, &m).unwrap());
}
