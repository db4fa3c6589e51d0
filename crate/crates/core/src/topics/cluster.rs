//! Average-linkage agglomerative clustering on cosine distance, cut at the
//! largest gap between consecutive merge distances.

use crate::parallel::Execution;
use crate::providers::EmbeddingVector;
use crate::retrieval::cosine_with_norms;

/// Label given to vectors that end up in clusters below the size floor.
pub const OUTLIER: i32 = -1;

/// Gaps at or below this are treated as "no structure to cut".
const MIN_GAP: f64 = 1e-12;

/// One agglomeration step. `kept` absorbs `absorbed`; both are slot indices
/// (a cluster is named by the smallest original index it contains).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub kept: usize,
    pub absorbed: usize,
    pub distance: f64,
    pub size: usize,
}

/// Clustering backend contract. The default is [`AverageLinkageGapCut`].
pub trait Clusterer: Send + Sync {
    /// One label per vector; `OUTLIER` marks noise.
    fn cluster(&self, vectors: &[&EmbeddingVector], min_cluster_size: usize, exec: Execution) -> Vec<i32>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AverageLinkageGapCut;

impl Clusterer for AverageLinkageGapCut {
    fn cluster(&self, vectors: &[&EmbeddingVector], min_cluster_size: usize, exec: Execution) -> Vec<i32> {
        cluster_fragments(vectors, min_cluster_size, exec)
    }
}

/// Full `n × n` cosine distance matrix, row-major.
pub fn distance_matrix(vectors: &[&EmbeddingVector], exec: Execution) -> Vec<f64> {
    let n = vectors.len();
    let norms: Vec<f64> = vectors.iter().map(|v| v.norm()).collect();
    let rows: Vec<Vec<f64>> = exec.map_range(n, |i| {
        (0..n)
            .map(|j| {
                if i == j {
                    0.0
                } else {
                    1.0 - cosine_with_norms(vectors[i].values(), norms[i], vectors[j].values(), norms[j])
                }
            })
            .collect()
    });
    rows.concat()
}

/// Agglomerate all `n` points; returns the `n − 1` merges in execution order.
///
/// Each step merges the closest active pair (ties: smallest slot pair) and
/// updates distances with the Lance–Williams average-linkage rule.
pub fn average_linkage(vectors: &[&EmbeddingVector], exec: Execution) -> Vec<Merge> {
    let n = vectors.len();
    let mut dist = distance_matrix(vectors, exec);
    let mut size = vec![1usize; n];
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    while active.len() > 1 {
        let m = active.len();
        let row_best: Vec<Option<(f64, usize, usize)>> = exec.map_range(m - 1, |a| {
            let i = active[a];
            let mut best: Option<(f64, usize, usize)> = None;
            for &j in &active[a + 1..] {
                let d = dist[i * n + j];
                if best.is_none_or(|(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
            best
        });
        // rows are in increasing slot order, so the first strict minimum wins ties
        let (d, i, j) = row_best
            .into_iter()
            .flatten()
            .fold(None, |acc: Option<(f64, usize, usize)>, cand| match acc {
                Some(a) if a.0 <= cand.0 => Some(a),
                _ => Some(cand),
            })
            .expect("at least one pair");

        let (si, sj) = (size[i] as f64, size[j] as f64);
        for &k in &active {
            if k == i || k == j {
                continue;
            }
            let nd = (si * dist[i * n + k] + sj * dist[j * n + k]) / (si + sj);
            dist[i * n + k] = nd;
            dist[k * n + i] = nd;
        }
        size[i] += size[j];
        active.retain(|&k| k != j);
        merges.push(Merge {
            kept: i,
            absorbed: j,
            distance: d,
            size: size[i],
        });
    }
    merges
}

/// Number of merges to apply: everything before the largest gap between
/// consecutive merge distances, or all merges when no gap exceeds `MIN_GAP`.
pub fn merges_before_largest_gap(merges: &[Merge]) -> usize {
    let mut best: Option<(f64, usize)> = None;
    for t in 0..merges.len().saturating_sub(1) {
        let gap = merges[t + 1].distance - merges[t].distance;
        if best.is_none_or(|(g, _)| gap > g) {
            best = Some((gap, t));
        }
    }
    match best {
        Some((gap, t)) if gap > MIN_GAP => t + 1,
        _ => merges.len(),
    }
}

/// Replay the first `count` merges; returns the member lists of the
/// resulting clusters ordered by their smallest member.
pub fn clusters_after(n: usize, merges: &[Merge], count: usize) -> Vec<Vec<usize>> {
    let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
    for m in &merges[..count] {
        let absorbed = members[m.absorbed].take().expect("absorbed slot active");
        members[m.kept].as_mut().expect("kept slot active").extend(absorbed);
    }
    members
        .into_iter()
        .flatten()
        .map(|mut c| {
            c.sort_unstable();
            c
        })
        .collect()
}

/// Deterministic clustering: average linkage on cosine distance, dendrogram
/// cut at the largest merge-distance gap, clusters smaller than
/// `min_cluster_size` relabeled [`OUTLIER`]. Labels are numbered by each
/// cluster's smallest member index.
pub fn cluster_fragments(vectors: &[&EmbeddingVector], min_cluster_size: usize, exec: Execution) -> Vec<i32> {
    let n = vectors.len();
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![0];
    }
    let min_cluster_size = min_cluster_size.max(2);
    let merges = average_linkage(vectors, exec);
    let clusters = clusters_after(n, &merges, merges_before_largest_gap(&merges));

    let mut labels = vec![OUTLIER; n];
    let mut next = 0;
    for members in clusters {
        if members.len() < min_cluster_size {
            continue;
        }
        for &i in &members {
            labels[i] = next;
        }
        next += 1;
    }
    labels
}
