//! Binary undirected networks on a fixed node set.
//!
//! A network on `v` nodes is stored as its sub-diagonal adjacency entries in
//! column-major order: `A[1,0], A[2,0], …, A[v-1,0], A[2,1], …, A[v-1,v-2]`
//! (0-based node ids). Index `l` of that vector is called an *edge index*.

pub mod io;
pub mod stats;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_blocks, load_dataset, load_networks, save_dataset, InputFormat};
pub use stats::{summary_stats, SummaryVector};

/// Number of node pairs for `v` nodes.
#[inline]
pub const fn n_pairs(v: usize) -> usize {
    v * v.saturating_sub(1) / 2
}

/// Inverse of [`n_pairs`]: the node count whose pair count is `len`, if any.
pub fn nodes_for_pairs(len: usize) -> Option<usize> {
    let v = ((1.0 + (1.0 + 8.0 * len as f64).sqrt()) / 2.0).round() as usize;
    (v >= 2 && n_pairs(v) == len).then_some(v)
}

/// Edge index of the pair `(row, col)` with `row > col`.
#[inline]
pub fn pair_index(v: usize, row: usize, col: usize) -> usize {
    debug_assert!(row > col && row < v);
    col * (v - 1) - col * col.saturating_sub(1) / 2 + (row - col - 1)
}

/// Precomputed edge index ↔ node pair maps for one node count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeIndex {
    v: usize,
    pairs: Vec<(usize, usize)>,
    /// For each node, `(edge index, other node)` for all incident pairs.
    incident: Vec<Vec<(usize, usize)>>,
}

impl EdgeIndex {
    pub fn new(v: usize) -> Self {
        let mut pairs = Vec::with_capacity(n_pairs(v));
        let mut incident = vec![Vec::with_capacity(v.saturating_sub(1)); v];
        for col in 0..v {
            for row in col + 1..v {
                let l = pairs.len();
                pairs.push((row, col));
                incident[row].push((l, col));
                incident[col].push((l, row));
            }
        }
        Self { v, pairs, incident }
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `(row, col)` with `row > col` for edge index `l`.
    #[inline]
    pub fn pair(&self, l: usize) -> (usize, usize) {
        self.pairs[l]
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    #[inline]
    pub fn incident(&self, node: usize) -> &[(usize, usize)] {
        &self.incident[node]
    }

    #[inline]
    pub fn index_of(&self, a: usize, b: usize) -> usize {
        let (row, col) = if a > b { (a, b) } else { (b, a) };
        pair_index(self.v, row, col)
    }
}

/// Dense symmetric 0/1 adjacency matrix with an empty diagonal.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Adjacency {
    v: usize,
    data: Vec<u8>,
}

impl Adjacency {
    /// Builds from row vectors, checking shape, binarity, symmetry and hollowness.
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let v = rows.len();
        let mut data = Vec::with_capacity(v * v);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != v {
                return Err(Error::Format(format!(
                    "adjacency row {i} has {} entries, expected {v}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        let adj = Self { v, data };
        for i in 0..v {
            if adj.get(i, i) != 0 {
                return Err(Error::Format(format!("non-zero diagonal at node {i}")));
            }
            for j in 0..v {
                let x = adj.get(i, j);
                if x > 1 {
                    return Err(Error::Format(format!("non-binary entry {x} at ({i}, {j})")));
                }
                if x != adj.get(j, i) {
                    return Err(Error::Format(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(adj)
    }

    pub fn empty(v: usize) -> Self {
        Self { v, data: vec![0; v * v] }
    }

    pub fn v(&self) -> usize {
        self.v
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.data[i * self.v + j]
    }

    fn set_pair(&mut self, i: usize, j: usize, x: u8) {
        self.data[i * self.v + j] = x;
        self.data[j * self.v + i] = x;
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.data.chunks(self.v.max(1)).map(<[u8]>::to_vec).take(self.v).collect()
    }
}

/// Lower-triangular vectorization of one network.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeVector {
    v: usize,
    bits: Vec<u8>,
}

impl EdgeVector {
    pub fn new(v: usize, bits: Vec<u8>) -> Result<Self> {
        if v < 2 {
            return Err(Error::Format(format!("node count must be at least 2, got {v}")));
        }
        if bits.len() != n_pairs(v) {
            return Err(Error::Format(format!(
                "edge vector has length {}, expected {} for v = {v}",
                bits.len(),
                n_pairs(v)
            )));
        }
        if let Some(k) = bits.iter().position(|&b| b > 1) {
            return Err(Error::Format(format!("non-binary entry {} at position {k}", bits[k])));
        }
        Ok(Self { v, bits })
    }

    /// Infers `v` from the vector length.
    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        let v = nodes_for_pairs(bits.len()).ok_or_else(|| {
            Error::Format(format!("length {} is not a triangular number", bits.len()))
        })?;
        Self::new(v, bits)
    }

    pub fn empty(v: usize) -> Self {
        Self { v, bits: vec![0; n_pairs(v)] }
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn get(&self, l: usize) -> bool {
        self.bits[l] == 1
    }

    pub fn n_edges(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Edge indices that are present.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b == 1).map(|(l, _)| l)
    }
}

pub fn vectorize(adj: &Adjacency) -> EdgeVector {
    let v = adj.v();
    let mut bits = Vec::with_capacity(n_pairs(v));
    for col in 0..v {
        for row in col + 1..v {
            bits.push(adj.get(row, col));
        }
    }
    EdgeVector { v, bits }
}

pub fn devectorize(e: &EdgeVector) -> Adjacency {
    let mut adj = Adjacency::empty(e.v);
    let mut l = 0;
    for col in 0..e.v {
        for row in col + 1..e.v {
            adj.set_pair(row, col, e.bits[l]);
            l += 1;
        }
    }
    adj
}

/// Group label. Serialized as 1 or 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Group {
    One,
    Two,
}

impl Group {
    pub const BOTH: [Group; 2] = [Group::One, Group::Two];

    /// 0 for group 1, 1 for group 2.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Group::One => 0,
            Group::Two => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Group::One
        } else {
            Group::Two
        }
    }

    pub fn label(self) -> u8 {
        self.index() as u8 + 1
    }
}

impl TryFrom<u8> for Group {
    type Error = String;

    fn try_from(x: u8) -> std::result::Result<Self, Self::Error> {
        match x {
            1 => Ok(Group::One),
            2 => Ok(Group::Two),
            other => Err(format!("group label must be 1 or 2, got {other}")),
        }
    }
}

impl From<Group> for u8 {
    fn from(g: Group) -> u8 {
        g.label()
    }
}

/// A labelled population of networks sharing one node set.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkDataset {
    v: usize,
    networks: Vec<EdgeVector>,
    groups: Vec<Group>,
    blocks: Option<Vec<usize>>,
}

impl NetworkDataset {
    pub fn new(
        v: usize,
        networks: Vec<EdgeVector>,
        groups: Vec<Group>,
        blocks: Option<Vec<usize>>,
    ) -> Result<Self> {
        if networks.len() != groups.len() {
            return Err(Error::Contract(format!(
                "{} networks but {} group labels",
                networks.len(),
                groups.len()
            )));
        }
        if let Some(i) = networks.iter().position(|e| e.v() != v) {
            return Err(Error::Contract(format!(
                "network {i} has {} nodes, dataset has {v}",
                networks[i].v()
            )));
        }
        if let Some(b) = &blocks {
            if b.len() != v {
                return Err(Error::Contract(format!(
                    "block map covers {} nodes, dataset has {v}",
                    b.len()
                )));
            }
        }
        Ok(Self { v, networks, groups, blocks })
    }

    pub fn v(&self) -> usize {
        self.v
    }

    pub fn n(&self) -> usize {
        self.networks.len()
    }

    pub fn networks(&self) -> &[EdgeVector] {
        &self.networks
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn blocks(&self) -> Option<&[usize]> {
        self.blocks.as_deref()
    }

    pub fn with_blocks(mut self, blocks: Vec<usize>) -> Result<Self> {
        if blocks.len() != self.v {
            return Err(Error::Contract(format!(
                "block map covers {} nodes, dataset has {}",
                blocks.len(),
                self.v
            )));
        }
        self.blocks = Some(blocks);
        Ok(self)
    }

    /// Number of observations in each group.
    pub fn group_sizes(&self) -> [usize; 2] {
        let mut n = [0; 2];
        for g in &self.groups {
            n[g.index()] += 1;
        }
        n
    }

    /// Pooled empirical frequency of each edge.
    pub fn edge_frequencies(&self) -> Vec<f64> {
        let mut f = vec![0.0; n_pairs(self.v)];
        for e in &self.networks {
            for l in e.ones() {
                f[l] += 1.0;
            }
        }
        let n = self.n().max(1) as f64;
        f.iter_mut().for_each(|x| *x /= n);
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn adj_from_edges(v: usize, edges: &[(usize, usize)]) -> Adjacency {
        let mut a = Adjacency::empty(v);
        for &(i, j) in edges {
            a.set_pair(i, j, 1);
        }
        a
    }

    #[test]
    fn vectorize_ordering_v3() {
        // edges 1-2 and 2-3 (1-based) -> (A21, A31, A32) = (1, 0, 1)
        let a = adj_from_edges(3, &[(0, 1), (1, 2)]);
        assert_eq!(vectorize(&a).bits(), &[1, 0, 1]);
    }

    #[test]
    fn vectorize_empty_and_complete() {
        assert_eq!(vectorize(&Adjacency::empty(5)).bits(), &[0u8; 10]);
        let k4 = adj_from_edges(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert_eq!(vectorize(&k4).bits(), &[1u8; 6]);
    }

    #[test]
    fn devectorize_examples() {
        let e = EdgeVector::new(3, vec![1, 0, 1]).unwrap();
        assert_eq!(devectorize(&e), adj_from_edges(3, &[(0, 1), (1, 2)]));
        assert_eq!(devectorize(&EdgeVector::empty(5)), Adjacency::empty(5));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(Adjacency::from_rows(&[vec![0, 1], vec![0, 0]]).is_err());
        assert!(Adjacency::from_rows(&[vec![0, 2], vec![2, 0]]).is_err());
        assert!(Adjacency::from_rows(&[vec![1, 0], vec![0, 0]]).is_err());
        assert!(EdgeVector::from_bits(vec![0, 1]).is_err());
        assert!(EdgeVector::new(3, vec![0, 1, 3]).is_err());
        assert!(matches!(EdgeVector::from_bits(vec![1; 6]), Ok(e) if e.v() == 4));
    }

    #[test]
    fn edge_index_matches_vectorize_order() {
        for v in 2..9 {
            let idx = EdgeIndex::new(v);
            assert_eq!(idx.len(), n_pairs(v));
            for (l, &(row, col)) in idx.pairs().iter().enumerate() {
                assert_eq!(idx.index_of(row, col), l);
                assert_eq!(idx.index_of(col, row), l);
                let mut a = Adjacency::empty(v);
                a.set_pair(row, col, 1);
                assert_eq!(vectorize(&a).ones().collect::<Vec<_>>(), vec![l]);
            }
            for node in 0..v {
                assert_eq!(idx.incident(node).len(), v - 1);
            }
        }
    }

    #[test]
    fn nodes_for_pairs_inverts() {
        for v in 2..100 {
            assert_eq!(nodes_for_pairs(n_pairs(v)), Some(v));
        }
        assert_eq!(nodes_for_pairs(4), None);
    }

    proptest! {
        #[test]
        fn vectorize_roundtrip(v in 2usize..=12, seed in any::<u64>()) {
            let mut state = seed | 1;
            let bits: Vec<u8> = (0..n_pairs(v)).map(|_| {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                (state & 1) as u8
            }).collect();
            let e = EdgeVector::new(v, bits).unwrap();
            let a = devectorize(&e);
            prop_assert_eq!(Adjacency::from_rows(&a.rows()).unwrap(), a.clone());
            prop_assert_eq!(vectorize(&a), e);
        }
    }
}
