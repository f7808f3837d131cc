//! Topological summaries used by the MANOVA baseline and by posterior
//! predictive checks.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{EdgeVector, EdgeIndex};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryVector {
    pub density: f64,
    pub transitivity: f64,
    /// Mean shortest-path length over unordered node pairs. Unreachable pairs
    /// count as the longest finite shortest path of the same graph.
    pub avg_path_length: f64,
    /// Categorical assortativity on the block attribute; `None` when blocks are
    /// absent or the coefficient is undefined (no edges, or a single block
    /// carries every edge end).
    pub assortativity: Option<f64>,
}

impl SummaryVector {
    pub const NAMES: [&'static str; 4] =
        ["density", "transitivity", "avg_path_length", "assortativity"];

    /// Values in [`Self::NAMES`] order; a missing assortativity becomes NaN.
    pub fn to_array(&self) -> [f64; 4] {
        [
            self.density,
            self.transitivity,
            self.avg_path_length,
            self.assortativity.unwrap_or(f64::NAN),
        ]
    }
}

fn neighbours(e: &EdgeVector, idx: &EdgeIndex) -> Vec<Vec<usize>> {
    let mut nb = vec![Vec::new(); e.v()];
    for l in e.ones() {
        let (a, b) = idx.pair(l);
        nb[a].push(b);
        nb[b].push(a);
    }
    nb
}

pub fn summary_stats(e: &EdgeVector, blocks: Option<&[usize]>) -> SummaryVector {
    let idx = EdgeIndex::new(e.v());
    summary_stats_with_index(e, blocks, &idx)
}

/// Same as [`summary_stats`] but reuses a prebuilt index.
pub fn summary_stats_with_index(
    e: &EdgeVector,
    blocks: Option<&[usize]>,
    idx: &EdgeIndex,
) -> SummaryVector {
    let nb = neighbours(e, idx);
    SummaryVector {
        density: e.n_edges() as f64 / e.len() as f64,
        transitivity: transitivity(&nb),
        avg_path_length: avg_path_length(&nb),
        assortativity: blocks.and_then(|b| assortativity(e, idx, b)),
    }
}

/// `3 × triangles / connected triples`, zero when there are no triples.
fn transitivity(nb: &[Vec<usize>]) -> f64 {
    let v = nb.len();
    let mut adj = vec![false; v * v];
    for (a, list) in nb.iter().enumerate() {
        for &b in list {
            adj[a * v + b] = true;
        }
    }
    let mut closed = 0usize;
    let mut triples = 0usize;
    for list in nb {
        let d = list.len();
        triples += d * d.saturating_sub(1) / 2;
        for (i, &a) in list.iter().enumerate() {
            for &b in &list[i + 1..] {
                if adj[a * v + b] {
                    closed += 1;
                }
            }
        }
    }
    // each triangle is closed at each of its three vertices
    if triples == 0 {
        0.0
    } else {
        closed as f64 / triples as f64
    }
}

fn avg_path_length(nb: &[Vec<usize>]) -> f64 {
    let v = nb.len();
    let mut dist = vec![usize::MAX; v];
    let mut queue = VecDeque::with_capacity(v);
    let mut finite_sum = 0usize;
    let mut finite_pairs = 0usize;
    let mut max_finite = 0usize;
    for src in 0..v {
        dist.iter_mut().for_each(|d| *d = usize::MAX);
        dist[src] = 0;
        queue.push_back(src);
        while let Some(a) = queue.pop_front() {
            for &b in &nb[a] {
                if dist[b] == usize::MAX {
                    dist[b] = dist[a] + 1;
                    queue.push_back(b);
                }
            }
        }
        for &d in &dist[src + 1..] {
            if d != usize::MAX {
                finite_sum += d;
                finite_pairs += 1;
                max_finite = max_finite.max(d);
            }
        }
    }
    let total_pairs = v * v.saturating_sub(1) / 2;
    if total_pairs == 0 {
        return 0.0;
    }
    let unreachable = total_pairs - finite_pairs;
    (finite_sum + unreachable * max_finite) as f64 / total_pairs as f64
}

/// Newman's assortativity coefficient for a categorical node attribute.
fn assortativity(e: &EdgeVector, idx: &EdgeIndex, blocks: &[usize]) -> Option<f64> {
    let m = e.n_edges();
    if m == 0 {
        return None;
    }
    let k = blocks.iter().copied().max()? + 1;
    let mut mix = vec![0.0; k * k];
    let w = 1.0 / (2 * m) as f64;
    for l in e.ones() {
        let (a, b) = idx.pair(l);
        let (ba, bb) = (blocks[a], blocks[b]);
        mix[ba * k + bb] += w;
        mix[bb * k + ba] += w;
    }
    let trace: f64 = (0..k).map(|i| mix[i * k + i]).sum();
    let sum_sq: f64 = (0..k)
        .map(|i| {
            let a: f64 = mix[i * k..(i + 1) * k].iter().sum();
            a * a
        })
        .sum();
    let denom = 1.0 - sum_sq;
    if denom.abs() < 1e-15 {
        None
    } else {
        Some((trace - sum_sq) / denom)
    }
}
