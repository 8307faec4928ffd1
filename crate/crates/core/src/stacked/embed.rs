use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabelId, LabelVocabulary};
use crate::error::{Error, Result};

use super::{Partition, PartitionMethod};

pub const DEFAULT_EMBEDDING_DIM: usize = 128;
pub const MAX_LLOYD_ITERATIONS: usize = 300;

/// Where label vectors come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbeddingProvider {
    /// Hashed character trigram counts of the lowercased label name.
    CharNgramHash { dim: usize },
    /// POSTs `{"input": [names], "model": ..}` and reads `data[i].embedding`.
    External {
        endpoint: String,
        #[serde(default)]
        model: Option<String>,
    },
}

impl Default for EmbeddingProvider {
    fn default() -> Self {
        EmbeddingProvider::CharNgramHash {
            dim: DEFAULT_EMBEDDING_DIM,
        }
    }
}

impl EmbeddingProvider {
    pub fn describe(&self) -> String {
        match self {
            EmbeddingProvider::CharNgramHash { dim } => format!("char_ngram_hash(n=3, dim={dim})"),
            EmbeddingProvider::External { endpoint, model } => match model {
                Some(m) => format!("external({endpoint}, {m})"),
                None => format!("external({endpoint})"),
            },
        }
    }
}

/// One unit-norm vector per label, in vocabulary order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelEmbedding {
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn hashed_ngrams(name: &str, n: usize, dim: usize) -> Vec<f64> {
    let chars: Vec<char> = name.trim().to_lowercase().chars().collect();
    let mut v = vec![0.0; dim];
    if chars.len() >= n {
        for w in chars.windows(n) {
            let gram: String = w.iter().collect();
            v[(fnv1a(gram.as_bytes()) % dim as u64) as usize] += 1.0;
        }
    }
    v
}

fn normalized(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm <= 0.0 {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}

/// Trigram-hash embedding of one name; names shorter than three characters
/// fall back to character unigrams.
pub fn embed_name(name: &str, dim: usize) -> Result<Vec<f64>> {
    normalized(hashed_ngrams(name, 3, dim))
        .or_else(|| normalized(hashed_ngrams(name, 1, dim)))
        .ok_or_else(|| Error::Embedding(format!("label `{name}` has no characters to embed")))
}

#[derive(Deserialize)]
struct ExternalResponse {
    data: Vec<ExternalVector>,
}

#[derive(Deserialize)]
struct ExternalVector {
    embedding: Vec<f64>,
}

fn fetch_external(names: &[String], endpoint: &str, model: Option<&str>) -> Result<Vec<Vec<f64>>> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs(60)))
        .build()
        .into();
    let mut body = serde_json::json!({ "input": names });
    if let Some(m) = model {
        body["model"] = serde_json::Value::from(m);
    }
    let fail = |e: &dyn std::fmt::Display| Error::Embedding(format!("{endpoint}: {e}"));
    let mut response = agent.post(endpoint).send_json(&body).map_err(|e| fail(&e))?;
    let parsed: ExternalResponse = response
        .body_mut()
        .read_json()
        .map_err(|e| fail(&e))?;
    if parsed.data.len() != names.len() {
        return Err(Error::Embedding(format!(
            "{endpoint}: expected {} vectors, got {}",
            names.len(),
            parsed.data.len()
        )));
    }
    Ok(parsed.data.into_iter().map(|v| v.embedding).collect())
}

pub fn embed_labels(vocabulary: &LabelVocabulary, provider: &EmbeddingProvider) -> Result<LabelEmbedding> {
    let names = vocabulary.names();
    match provider {
        EmbeddingProvider::CharNgramHash { dim } => {
            if *dim == 0 {
                return Err(Error::InvalidParameter("embedding dim must be positive".into()));
            }
            let vectors = names.iter().map(|n| embed_name(n, *dim)).collect::<Result<_>>()?;
            Ok(LabelEmbedding { dim: *dim, vectors })
        }
        EmbeddingProvider::External { endpoint, model } => {
            let raw = fetch_external(names, endpoint, model.as_deref())?;
            let dim = raw.first().map_or(0, Vec::len);
            let mut vectors = Vec::with_capacity(raw.len());
            for (name, v) in names.iter().zip(raw) {
                if v.len() != dim || dim == 0 || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Embedding(format!("bad vector for label `{name}`")));
                }
                vectors.push(
                    normalized(v)
                        .ok_or_else(|| Error::Embedding(format!("zero vector for label `{name}`")))?,
                );
            }
            Ok(LabelEmbedding { dim, vectors })
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

fn plus_plus_init(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut chosen = vec![rng.random_range(0..points.len())];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    pick = Some(i);
                    if target < d {
                        break;
                    }
                    target -= d;
                }
            }
            pick.expect("positive total has a positive entry")
        } else {
            // all remaining points coincide with a centroid
            let free: Vec<usize> = (0..points.len()).filter(|i| !chosen.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn recompute(points: &[Vec<f64>], assign: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(assign) {
        counts[c] += 1;
        sums[c].iter_mut().zip(p).for_each(|(s, x)| *s += x);
    }
    for (s, &n) in sums.iter_mut().zip(&counts) {
        if n > 0 {
            s.iter_mut().for_each(|x| *x /= n as f64);
        }
    }
    sums
}

/// Moves the point farthest from its centroid (among clusters with more than
/// one member) into each empty cluster.
fn repair_empty(points: &[Vec<f64>], assign: &mut [usize], centroids: &mut [Vec<f64>], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        assign.iter().for_each(|&c| counts[c] += 1);
        let Some(empty) = counts.iter().position(|&n| n == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            if counts[assign[i]] > 1 {
                let d = sq_dist(p, &centroids[assign[i]]);
                if d > far_d {
                    far = Some(i);
                    far_d = d;
                }
            }
        }
        let i = far.expect("k <= number of points");
        assign[i] = empty;
        centroids[empty] = points[i].clone();
    }
}

/// Lloyd's k-means with k-means++ seeding; groups are sorted by their
/// smallest label.
pub fn kmeans_partition(embedding: &LabelEmbedding, k: usize, rng_seed: u64) -> Result<Partition> {
    let points = &embedding.vectors;
    let m = points.len();
    if k == 0 || k > m {
        return Err(Error::PartitionSize { k, labels: m });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut centroids = plus_plus_init(points, k, &mut rng);
    let mut assign: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    repair_empty(points, &mut assign, &mut centroids, k);
    for _ in 0..MAX_LLOYD_ITERATIONS {
        centroids = recompute(points, &assign, k, embedding.dim);
        let mut next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        repair_empty(points, &mut next, &mut centroids, k);
        if next == assign {
            break;
        }
        assign = next;
    }
    let mut groups = vec![Vec::new(); k];
    for (label, &c) in assign.iter().enumerate() {
        groups[c].push(LabelId::from(label));
    }
    groups.sort();
    Partition::new(groups, m, PartitionMethod::Kmeans, format!("k-means++ seed={rng_seed}"))
}

/// Sum of squared distances to cluster means.
pub fn clustering_cost(embedding: &LabelEmbedding, partition: &Partition) -> f64 {
    partition
        .groups
        .iter()
        .map(|g| {
            let members: Vec<&Vec<f64>> = g.iter().map(|l| &embedding.vectors[l.index()]).collect();
            let mut mean = vec![0.0; embedding.dim];
            for v in &members {
                mean.iter_mut().zip(v.iter()).for_each(|(m, x)| *m += x);
            }
            mean.iter_mut().for_each(|x| *x /= members.len() as f64);
            members.iter().map(|v| sq_dist(v, &mean)).sum::<f64>()
        })
        .sum()
}
