//! Initial contact topology.
//!
//! Nodes are normalised to contiguous 0-based indices on ingestion; the
//! original integer labels are kept in a side table for reporting. Every
//! ordered pair `(i, j)` with `{i, j}` an initial edge gets a row index in the
//! [`EdgeIndexMap`]; this ordering fixes the block layout of every matrix
//! built downstream.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{perron, PerronOptions};

pub mod generate;

/// Lexicographically ordered list of the `2m` ordered pairs `(i, j)`,
/// `j ∈ N_i(0)`. Rows for node `i` form the contiguous block
/// `offsets[i]..offsets[i + 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeIndexMap {
    pairs: Vec<(usize, usize)>,
    offsets: Vec<usize>,
    edge_of_pair: Vec<usize>,
    reverse_of_pair: Vec<usize>,
}

impl EdgeIndexMap {
    fn build(neighbors: &[Vec<usize>], edge_id: impl Fn(usize, usize) -> usize) -> Self {
        let mut pairs = Vec::new();
        let mut offsets = Vec::with_capacity(neighbors.len() + 1);
        let mut edge_of_pair = Vec::new();
        offsets.push(0);
        for (i, nb) in neighbors.iter().enumerate() {
            for &j in nb {
                pairs.push((i, j));
                edge_of_pair.push(edge_id(i, j));
            }
            offsets.push(pairs.len());
        }
        let mut map = Self {
            pairs,
            offsets,
            edge_of_pair,
            reverse_of_pair: Vec::new(),
        };
        map.reverse_of_pair = (0..map.pairs.len())
            .map(|k| {
                let (i, j) = map.pairs[k];
                map.index_in(neighbors, j, i).expect("symmetric adjacency")
            })
            .collect();
        map
    }

    fn index_in(&self, neighbors: &[Vec<usize>], i: usize, j: usize) -> Option<usize> {
        let nb = neighbors.get(i)?;
        nb.binary_search(&j).ok().map(|pos| self.offsets[i] + pos)
    }

    /// Number of ordered pairs, `2m`.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Ordered pair stored at row `k`.
    pub fn pair(&self, k: usize) -> (usize, usize) {
        self.pairs[k]
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Row range of node `i`'s block.
    pub fn block(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Undirected edge id carried by the ordered pair at row `k`.
    pub fn edge_of(&self, k: usize) -> usize {
        self.edge_of_pair[k]
    }

    /// Row of `(j, i)` given the row of `(i, j)`.
    pub fn reverse(&self, k: usize) -> usize {
        self.reverse_of_pair[k]
    }
}

/// Undirected simple graph `G0`.
#[derive(Debug, Clone)]
pub struct Graph {
    n: usize,
    /// Undirected edges as `(i, j)` with `i < j`, sorted.
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
    /// `(neighbor, edge id)` per node, sorted by neighbor.
    incident: Vec<Vec<(usize, usize)>>,
    labels: Vec<i64>,
    pair_map: EdgeIndexMap,
}

#[derive(Debug, Deserialize, Serialize)]
struct JsonGraph {
    n: usize,
    edges: Vec<[i64; 2]>,
    #[serde(default)]
    one_based: bool,
}

impl Graph {
    /// Builds a graph on nodes `0..n` from 0-based edges. Labels equal indices.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let labels = (0..n as i64).collect();
        Self::with_labels(n, edges, labels)
    }

    fn with_labels(n: usize, raw: &[(usize, usize)], labels: Vec<i64>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for &(a, b) in raw {
            for x in [a, b] {
                if x >= n {
                    return Err(Error::NodeOutOfRange { id: x as i64, n });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(labels[a]));
            }
            let key = (a.min(b), a.max(b));
            if !set.insert(key) {
                return Err(Error::DuplicateEdge(labels[key.0], labels[key.1]));
            }
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let mut incident = vec![Vec::new(); n];
        for (e, &(i, j)) in edges.iter().enumerate() {
            incident[i].push((j, e));
            incident[j].push((i, e));
        }
        for list in &mut incident {
            list.sort_unstable();
        }
        let neighbors: Vec<Vec<usize>> = incident
            .iter()
            .map(|l| l.iter().map(|&(j, _)| j).collect())
            .collect();
        let pair_map = EdgeIndexMap::build(&neighbors, |i, j| {
            let pos = incident[i].binary_search_by_key(&j, |&(k, _)| k).unwrap();
            incident[i][pos].1
        });
        Ok(Self {
            n,
            edges,
            neighbors,
            incident,
            labels,
            pair_map,
        })
    }

    /// Parses whitespace-separated integer pairs, one per line. `#` starts a
    /// comment. Labels are arbitrary integers and are renumbered in ascending
    /// order.
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut raw = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != 2 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected two node ids, found {} tokens", toks.len()),
                });
            }
            let mut ids = [0i64; 2];
            for (slot, tok) in ids.iter_mut().zip(&toks) {
                *slot = tok.parse().map_err(|_| Error::Parse {
                    line: lineno + 1,
                    msg: format!("`{tok}` is not an integer node id"),
                })?;
            }
            if ids[0] == ids[1] {
                return Err(Error::SelfLoop(ids[0]));
            }
            raw.push((ids[0], ids[1]));
        }
        let labels: Vec<i64> = raw
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index: BTreeMap<i64, usize> = labels.iter().enumerate().map(|(k, &l)| (l, k)).collect();
        let edges: Vec<(usize, usize)> = raw.iter().map(|(a, b)| (index[a], index[b])).collect();
        Self::with_labels(labels.len(), &edges, labels)
    }

    /// JSON form `{"n": .., "edges": [[i, j], ..], "one_based": false}`.
    /// Isolated nodes are allowed here, unlike the edge-list format.
    pub fn parse_json(text: &str) -> Result<Self> {
        let jg: JsonGraph = serde_json::from_str(text)?;
        let base = i64::from(jg.one_based);
        let labels: Vec<i64> = (0..jg.n as i64).map(|k| k + base).collect();
        let mut edges = Vec::with_capacity(jg.edges.len());
        for [a, b] in jg.edges {
            let (ia, ib) = (a - base, b - base);
            for (raw, idx) in [(a, ia), (b, ib)] {
                if idx < 0 || idx as usize >= jg.n {
                    return Err(Error::NodeOutOfRange { id: raw, n: jg.n });
                }
            }
            if a == b {
                return Err(Error::SelfLoop(a));
            }
            edges.push((ia as usize, ib as usize));
        }
        Self::with_labels(jg.n, &edges, labels)
    }

    pub fn to_json(&self) -> String {
        let jg = JsonGraph {
            n: self.n,
            edges: self
                .edges
                .iter()
                .map(|&(i, j)| [self.labels[i], self.labels[j]])
                .collect(),
            one_based: false,
        };
        serde_json::to_string(&jg).expect("graph serialises")
    }

    /// Edge-list text using the original labels.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(i, j) in &self.edges {
            out.push_str(&format!("{} {}\n", self.labels[i], self.labels[j]));
        }
        out
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// `(neighbor, edge id)` pairs of node `i`.
    pub fn incident(&self, i: usize) -> &[(usize, usize)] {
        &self.incident[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn label(&self, i: usize) -> i64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn pair_map(&self) -> &EdgeIndexMap {
        &self.pair_map
    }

    /// Row index of the ordered pair `(i, j)`, if `{i, j}` is an edge.
    pub fn pair_index(&self, i: usize, j: usize) -> Option<usize> {
        self.pair_map.index_in(&self.neighbors, i, j)
    }

    /// Undirected edge id of `{i, j}`.
    pub fn edge_id(&self, i: usize, j: usize) -> Option<usize> {
        self.pair_index(i, j).map(|k| self.pair_map.edge_of(k))
    }

    /// Connectivity of the undirected graph, equivalently irreducibility of
    /// the adjacency matrix.
    pub fn is_strongly_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }

    /// `A0 x` into `out`.
    pub fn adjacency_matvec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.neighbors[i].iter().map(|&j| x[j]).sum();
        }
    }

    pub fn adjacency_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut a = nalgebra::DMatrix::zeros(self.n, self.n);
        for &(i, j) in &self.edges {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }

    /// Perron root `rho` of `A0` and its eigenvector, normalised to unit max
    /// entry, with `|A0 v - rho v|_inf <= tol * rho`.
    pub fn spectral_radius(&self, tol: f64) -> Result<(f64, Vec<f64>)> {
        if !self.is_strongly_connected() {
            return Err(Error::Disconnected);
        }
        // The +I shift separates rho from -rho on bipartite graphs.
        let res = perron(
            self.n,
            |x, out| {
                self.adjacency_matvec(x, out);
                for (o, xi) in out.iter_mut().zip(x) {
                    *o += xi;
                }
            },
            &PerronOptions {
                tol: tol / 2.0,
                scale_floor: 0.0,
                shift: 1.0,
                ..PerronOptions::default()
            },
        )?;
        Ok((res.value - 1.0, res.vector))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_path() {
        let g = Graph::parse_edge_list("1 2\n2 3\n").unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.degrees(), vec![1, 2, 1]);
        assert_eq!(g.labels(), &[1, 2, 3]);
    }

    #[test]
    fn parse_errors_are_distinct() {
        assert!(matches!(Graph::parse_edge_list("1 1"), Err(Error::SelfLoop(1))));
        assert!(matches!(
            Graph::parse_edge_list("1 2\n2 1"),
            Err(Error::DuplicateEdge(1, 2))
        ));
        assert!(matches!(
            Graph::parse_edge_list("# header\n1 x"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(matches!(
            Graph::parse_edge_list("1 2 3"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn comments_and_blank_lines() {
        let g = Graph::parse_edge_list("# cycle\n\n1 2 # a\n2 3\n3 4\n4 1\n").unwrap();
        assert_eq!(g.degrees(), vec![2, 2, 2, 2]);
    }

    #[test]
    fn json_round_trip() {
        let g = Graph::parse_json(r#"{"n": 4, "edges": [[0,1],[1,2]]}"#).unwrap();
        assert_eq!(g.node_count(), 4);
        assert!(!g.is_strongly_connected());
        let h = Graph::parse_json(&g.to_json()).unwrap();
        assert_eq!(h.edges(), g.edges());
        let one = Graph::parse_json(r#"{"n": 2, "edges": [[1,2]], "one_based": true}"#).unwrap();
        assert_eq!(one.labels(), &[1, 2]);
        assert!(Graph::parse_json(r#"{"n": 2, "edges": [[0,2]]}"#).is_err());
    }

    #[test]
    fn connectivity() {
        assert!(generate::path(3).is_strongly_connected());
        assert!(generate::complete(5).is_strongly_connected());
        let two = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(!two.is_strongly_connected());
    }

    #[test]
    fn pair_map_layout() {
        let g = generate::path(3);
        let map = g.pair_map();
        assert_eq!(map.pairs(), &[(0, 1), (1, 0), (1, 2), (2, 1)]);
        assert_eq!(map.block(1), 1..3);
        assert_eq!(g.pair_index(2, 1), Some(3));
        assert_eq!(map.reverse(0), 1);
        assert_eq!(map.edge_of(2), map.edge_of(3));
    }

    #[test]
    fn spectral_radius_small_families() {
        let (rho, v) = generate::complete(4).spectral_radius(1e-12).unwrap();
        assert!((rho - 3.0).abs() < 1e-10);
        assert!(v.iter().all(|&x| (x - 1.0).abs() < 1e-8));
        let (rho, _) = generate::cycle(4).spectral_radius(1e-12).unwrap();
        assert!((rho - 2.0).abs() < 1e-10);
        let (rho, _) = generate::path(2).spectral_radius(1e-12).unwrap();
        assert!((rho - 1.0).abs() < 1e-10);
        assert!(matches!(
            Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap().spectral_radius(1e-9),
            Err(Error::Disconnected)
        ));
    }
}
