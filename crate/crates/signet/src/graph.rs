//! Signed directed graphs with a designated leader set, their normalized
//! weight matrices, and the unsigned 2n-node enlargement.
//!
//! Node ids are `0..n`. An edge `(src, dst, sign)` means "src influences
//! dst". Every node carries a self-loop so the normalized weight matrix has
//! a strictly positive diagonal magnitude, and leaders have no incoming
//! edges other than their own self-loop.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Edge sign: cooperative (+) or antagonistic (−).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    pub fn from_i8(v: i8) -> Option<Sign> {
        match v {
            1 => Some(Sign::Plus),
            -1 => Some(Sign::Minus),
            _ => None,
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sign::Plus => write!(f, "+"),
            Sign::Minus => write!(f, "-"),
        }
    }
}

/// A validated signed directed graph with a leader set.
///
/// Immutable after construction. Leaders are nodes with no incoming edge
/// from any other node; their states act as the containment reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedGraph {
    n: usize,
    /// Out-adjacency: `out[src]` maps dst -> sign, sorted by dst.
    out: Vec<BTreeMap<usize, Sign>>,
    leaders: BTreeSet<usize>,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    edges: Vec<(usize, usize, i8)>,
    leaders: Vec<usize>,
}

impl SignedGraph {
    /// Build a graph from raw parts, validating all invariants.
    ///
    /// Missing self-loops are repaired with sign `+` and reported in the
    /// returned warning list.
    pub fn build(
        n: usize,
        edges: &[(usize, usize, Sign)],
        leaders: &[usize],
    ) -> Result<(SignedGraph, Vec<String>)> {
        let mut out: Vec<BTreeMap<usize, Sign>> = vec![BTreeMap::new(); n];
        for &(src, dst, sign) in edges {
            if src >= n {
                return Err(Error::NodeOutOfRange { id: src, n });
            }
            if dst >= n {
                return Err(Error::NodeOutOfRange { id: dst, n });
            }
            if out[src].insert(dst, sign).is_some() {
                return Err(Error::DuplicateEdge { src, dst });
            }
        }
        let mut warnings = Vec::new();
        for i in 0..n {
            if !out[i].contains_key(&i) {
                out[i].insert(i, Sign::Plus);
                warnings.push(format!("self-loop added: {i}"));
            }
        }
        let mut leader_set = BTreeSet::new();
        for &l in leaders {
            if l >= n {
                return Err(Error::NodeOutOfRange { id: l, n });
            }
            leader_set.insert(l);
        }
        for src in 0..n {
            for (&dst, _) in &out[src] {
                if leader_set.contains(&dst) && src != dst {
                    return Err(Error::LeaderIncoming { leader: dst, src });
                }
            }
        }
        Ok((
            SignedGraph {
                n,
                out,
                leaders: leader_set,
            },
            warnings,
        ))
    }

    /// Parse either format, sniffing JSON by a leading `{`.
    pub fn parse(text: &str) -> Result<(SignedGraph, Vec<String>)> {
        if text.trim_start().starts_with('{') {
            SignedGraph::parse_json(text)
        } else {
            SignedGraph::parse_edge_list(text)
        }
    }

    /// Parse the edge-list format: one `src dst sign` per line with
    /// `sign` in `{+,-}`, `#` comments, and an optional `#leaders: id id ...`
    /// header. Node count is inferred from the largest id mentioned.
    pub fn parse_edge_list(text: &str) -> Result<(SignedGraph, Vec<String>)> {
        let mut edges: Vec<(usize, usize, Sign)> = Vec::new();
        let mut leaders: Vec<usize> = Vec::new();
        let mut max_id: Option<usize> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#leaders:") {
                for tok in rest.split_whitespace() {
                    let id: usize = tok.parse().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("invalid leader id {tok:?}"),
                    })?;
                    leaders.push(id);
                    max_id = Some(max_id.map_or(id, |m| m.max(id)));
                }
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (src, dst, sign) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), Some(s), None) => (a, b, s),
                _ => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected `src dst sign`, got {line:?}"),
                    })
                }
            };
            let src: usize = src.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid node id {src:?}"),
            })?;
            let dst: usize = dst.parse().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("invalid node id {dst:?}"),
            })?;
            let sign = match sign {
                "+" => Sign::Plus,
                "-" => Sign::Minus,
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("invalid sign {other:?}, expected + or -"),
                    })
                }
            };
            max_id = Some(max_id.map_or(src.max(dst), |m| m.max(src).max(dst)));
            edges.push((src, dst, sign));
        }
        let n = max_id.map_or(0, |m| m + 1);
        SignedGraph::build(n, &edges, &leaders)
    }

    /// Parse the JSON format `{"n":…, "edges":[[src,dst,±1],…], "leaders":[…]}`.
    pub fn parse_json(text: &str) -> Result<(SignedGraph, Vec<String>)> {
        let doc: GraphJson = serde_json::from_str(text)?;
        let mut edges = Vec::with_capacity(doc.edges.len());
        for &(src, dst, s) in &doc.edges {
            let sign = Sign::from_i8(s).ok_or_else(|| Error::Parse {
                line: 0,
                message: format!("edge [{src},{dst},{s}]: sign must be 1 or -1"),
            })?;
            edges.push((src, dst, sign));
        }
        SignedGraph::build(doc.n, &edges, &doc.leaders)
    }

    /// Emit the edge-list format. Parsing the output reproduces the graph.
    pub fn to_edge_list(&self) -> String {
        let mut s = String::new();
        if !self.leaders.is_empty() {
            s.push_str("#leaders:");
            for l in &self.leaders {
                s.push_str(&format!(" {l}"));
            }
            s.push('\n');
        }
        for (src, dst, sign) in self.edges() {
            s.push_str(&format!("{src} {dst} {sign}\n"));
        }
        s
    }

    pub fn to_json(&self) -> String {
        let doc = GraphJson {
            n: self.n,
            edges: self.edges().map(|(s, d, g)| (s, d, g.as_i8())).collect(),
            leaders: self.leaders.iter().copied().collect(),
        };
        serde_json::to_string(&doc).expect("graph serialization cannot fail")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn leaders(&self) -> &BTreeSet<usize> {
        &self.leaders
    }

    pub fn followers(&self) -> Vec<usize> {
        (0..self.n).filter(|i| !self.leaders.contains(i)).collect()
    }

    pub fn is_leader(&self, i: usize) -> bool {
        self.leaders.contains(&i)
    }

    /// All edges in (src, dst) order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, Sign)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(src, m)| m.iter().map(move |(&dst, &sign)| (src, dst, sign)))
    }

    pub fn edge_count(&self) -> usize {
        self.out.iter().map(|m| m.len()).sum()
    }

    pub fn sign(&self, src: usize, dst: usize) -> Option<Sign> {
        self.out.get(src).and_then(|m| m.get(&dst)).copied()
    }

    pub fn out_neighbors(&self, src: usize) -> impl Iterator<Item = (usize, Sign)> + '_ {
        self.out[src].iter().map(|(&dst, &sign)| (dst, sign))
    }

    /// Unsigned out-adjacency lists, self-loops stripped.
    pub fn out_adjacency(&self) -> Vec<Vec<usize>> {
        self.out
            .iter()
            .enumerate()
            .map(|(src, m)| m.keys().copied().filter(|&dst| dst != src).collect())
            .collect()
    }

    /// In-adjacency with signs: `result[dst]` lists (src, sign), self included.
    pub fn in_adjacency(&self) -> Vec<Vec<(usize, Sign)>> {
        let mut inc: Vec<Vec<(usize, Sign)>> = vec![Vec::new(); self.n];
        for (src, dst, sign) in self.edges() {
            inc[dst].push((src, sign));
        }
        inc
    }

    /// A copy of the graph with an extra edge, revalidated.
    pub fn with_edge(&self, src: usize, dst: usize, sign: Sign) -> Result<SignedGraph> {
        let mut edges: Vec<(usize, usize, Sign)> = self.edges().collect();
        edges.push((src, dst, sign));
        let leaders: Vec<usize> = self.leaders.iter().copied().collect();
        let (g, _warnings) = SignedGraph::build(self.n, &edges, &leaders)?;
        Ok(g)
    }
}

/// Row-normalized signed weight matrix: row i holds `a_ij` for influences
/// j -> i, with `|a_ij| = 1/|N_i|` over the in-neighborhood (self included)
/// so every row has absolute sum 1.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    /// Sparse rows sorted by column: `rows[i]` lists (j, a_ij).
    rows: Vec<Vec<(usize, f64)>>,
}

impl WeightMatrix {
    pub fn from_graph(g: &SignedGraph) -> WeightMatrix {
        let inc = g.in_adjacency();
        let rows = inc
            .into_iter()
            .map(|mut neigh| {
                neigh.sort_unstable_by_key(|&(src, _)| src);
                let w = 1.0 / neigh.len() as f64;
                neigh
                    .into_iter()
                    .map(|(src, sign)| (src, sign.value() * w))
                    .collect()
            })
            .collect();
        WeightMatrix { n: g.n(), rows }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|k| self.rows[i][k].1)
            .unwrap_or(0.0)
    }

    /// out = A x, single-threaded.
    pub fn apply_into_seq(&self, x: &[f64], out: &mut [f64]) {
        for (i, row) in self.rows.iter().enumerate() {
            out[i] = row.iter().map(|&(j, a)| a * x[j]).sum();
        }
    }

    /// out = A x, using the thread pool when the `parallel` feature is on.
    /// Row sums are evaluated per row, so results are bitwise identical to
    /// the sequential path.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        #[cfg(feature = "parallel")]
        {
            out.par_iter_mut().enumerate().for_each(|(i, o)| {
                *o = self.rows[i].iter().map(|&(j, a)| a * x[j]).sum();
            });
        }
        #[cfg(not(feature = "parallel"))]
        self.apply_into_seq(x, out);
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_into(x, &mut out);
        out
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, a) in row {
                m[(i, j)] = a;
            }
        }
        m
    }

    /// Dense sub-block with the given row and column node sets.
    pub fn dense_block(&self, row_ids: &[usize], col_ids: &[usize]) -> DMatrix<f64> {
        let col_pos: BTreeMap<usize, usize> =
            col_ids.iter().enumerate().map(|(k, &j)| (j, k)).collect();
        let mut m = DMatrix::zeros(row_ids.len(), col_ids.len());
        for (r, &i) in row_ids.iter().enumerate() {
            for &(j, a) in &self.rows[i] {
                if let Some(&c) = col_pos.get(&j) {
                    m[(r, c)] = a;
                }
            }
        }
        m
    }
}

/// Unsigned lift of a signed weight matrix onto 2n nodes: node i keeps the
/// nonnegative part of row i and routes negative weights to/from the
/// mirror block at offset n. Rows remain stochastic.
#[derive(Debug, Clone, PartialEq)]
pub struct EnlargedGraph {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl EnlargedGraph {
    pub fn from_weights(a: &WeightMatrix) -> EnlargedGraph {
        let n = a.n();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); 2 * n];
        for i in 0..n {
            for &(j, w) in a.row(i) {
                if w > 0.0 {
                    rows[i].push((j, w));
                    rows[i + n].push((j + n, w));
                } else if w < 0.0 {
                    rows[i].push((j + n, -w));
                    rows[i + n].push((j, -w));
                }
            }
        }
        for row in &mut rows {
            row.sort_unstable_by_key(|&(j, _)| j);
        }
        EnlargedGraph { n, rows }
    }

    /// Number of original nodes n; the lift has `2n` nodes.
    pub fn original_count(&self) -> usize {
        self.n
    }

    pub fn node_count(&self) -> usize {
        2 * self.n
    }

    pub fn mirror(&self, v: usize) -> usize {
        (v + self.n) % (2 * self.n)
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|k| self.rows[i][k].1)
            .unwrap_or(0.0)
    }

    pub fn out_adjacency(&self) -> Vec<Vec<usize>> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().map(|&(j, _)| j).filter(|&j| j != i).collect())
            .collect()
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let m2 = 2 * self.n;
        let mut m = DMatrix::zeros(m2, m2);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, a) in row {
                m[(i, j)] = a;
            }
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(text: &str) -> SignedGraph {
        SignedGraph::parse(text).unwrap().0
    }

    #[test]
    fn parse_edge_list_basic() {
        let (g, warnings) = SignedGraph::parse("0 1 +\n1 1 +\n0 0 +").unwrap();
        assert_eq!(g.n(), 2);
        assert!(warnings.is_empty());
        assert_eq!(g.sign(0, 1), Some(Sign::Plus));
        assert_eq!(g.sign(1, 0), None);
        assert_eq!(g.edge_count(), 3);
    }

    #[test]
    fn parse_repairs_missing_self_loop() {
        let (g, warnings) = SignedGraph::parse("0 1 +\n0 0 +").unwrap();
        assert_eq!(warnings, vec!["self-loop added: 1"]);
        assert_eq!(g.sign(1, 1), Some(Sign::Plus));
    }

    #[test]
    fn parse_rejects_duplicate_edge() {
        let err = SignedGraph::parse("0 1 +\n0 1 -").unwrap_err();
        assert!(matches!(err, Error::DuplicateEdge { src: 0, dst: 1 }));
        let err = SignedGraph::parse("0 1 +\n0 1 +").unwrap_err();
        assert!(matches!(err, Error::DuplicateEdge { src: 0, dst: 1 }));
    }

    #[test]
    fn parse_rejects_leader_with_incoming_edge() {
        let err = SignedGraph::parse("#leaders: 1\n0 1 +\n0 0 +\n1 1 +").unwrap_err();
        assert!(matches!(err, Error::LeaderIncoming { leader: 1, src: 0 }));
    }

    #[test]
    fn parse_reports_line_numbers() {
        let err = SignedGraph::parse("0 0 +\n0 1 *").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn leaders_header_can_extend_node_count() {
        let (g, warnings) = SignedGraph::parse("#leaders: 3\n0 1 +\n0 0 +\n1 1 +").unwrap();
        assert_eq!(g.n(), 4);
        assert!(g.is_leader(3));
        // nodes 2 and 3 were only implied, so both get repaired self-loops
        assert_eq!(warnings.len(), 2);
    }

    #[test]
    fn json_roundtrip() {
        let g = graph("#leaders: 0\n0 0 +\n0 1 -\n1 1 +\n1 2 +\n2 2 +");
        let (g2, w) = SignedGraph::parse_json(&g.to_json()).unwrap();
        assert!(w.is_empty());
        assert_eq!(g, g2);
    }

    #[test]
    fn edge_list_roundtrip() {
        let g = graph("#leaders: 0 2\n0 0 +\n0 1 -\n1 1 +\n2 2 +\n2 1 +");
        let (g2, w) = SignedGraph::parse_edge_list(&g.to_edge_list()).unwrap();
        assert!(w.is_empty());
        assert_eq!(g, g2);
    }

    #[test]
    fn adjacency_two_node_negative() {
        // edge 1 -> 0 negative, self-loops positive
        let g = graph("1 0 -\n0 0 +\n1 1 +");
        let a = WeightMatrix::from_graph(&g);
        assert_eq!(a.entry(0, 0), 0.5);
        assert_eq!(a.entry(0, 1), -0.5);
        assert_eq!(a.entry(1, 0), 0.0);
        assert_eq!(a.entry(1, 1), 1.0);
    }

    #[test]
    fn adjacency_isolated_node_is_identity_row() {
        let g = graph("0 0 +");
        let a = WeightMatrix::from_graph(&g);
        assert_eq!(a.row(0), &[(0, 1.0)]);
    }

    #[test]
    fn adjacency_all_to_all_uniform() {
        let g = graph("0 1 +\n0 2 +\n1 0 +\n1 2 +\n2 0 +\n2 1 +\n0 0 +\n1 1 +\n2 2 +");
        let a = WeightMatrix::from_graph(&g);
        for i in 0..3 {
            for j in 0..3 {
                assert!((a.entry(i, j) - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn enlarged_splits_negative_weights() {
        let g = graph("1 0 -\n0 0 +\n1 1 +");
        let a = WeightMatrix::from_graph(&g);
        let en = EnlargedGraph::from_weights(&a);
        assert_eq!(en.entry(0, 0), 0.5);
        assert_eq!(en.entry(0, 3), 0.5); // mirror of node 1
        assert_eq!(en.entry(0, 1), 0.0);
        assert_eq!(en.entry(1, 1), 1.0);
        assert_eq!(en.entry(2, 2), 0.5);
        assert_eq!(en.entry(2, 1), 0.5);
        assert_eq!(en.entry(3, 3), 1.0);
    }

    #[test]
    fn enlarged_all_positive_is_block_diagonal() {
        let g = graph("0 1 +\n1 0 +\n0 0 +\n1 1 +");
        let a = WeightMatrix::from_graph(&g);
        let en = EnlargedGraph::from_weights(&a);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(en.entry(i, j), a.entry(i, j));
                assert_eq!(en.entry(i + 2, j + 2), a.entry(i, j));
                assert_eq!(en.entry(i, j + 2), 0.0);
                assert_eq!(en.entry(i + 2, j), 0.0);
            }
        }
    }

    #[test]
    fn enlarged_all_negative_off_diagonal_connects_only_mirrors() {
        let g = graph("0 1 -\n1 0 -\n0 0 +\n1 1 +");
        let a = WeightMatrix::from_graph(&g);
        let en = EnlargedGraph::from_weights(&a);
        // originals reach mirrors off-diagonal, never each other
        assert_eq!(en.entry(0, 1), 0.0);
        assert_eq!(en.entry(1, 0), 0.0);
        assert_eq!(en.entry(0, 3), 0.5);
        assert_eq!(en.entry(1, 2), 0.5);
    }

    #[test]
    fn apply_matches_dense() {
        let g = graph("#leaders: 0\n0 0 +\n0 1 -\n1 1 +\n1 2 +\n2 2 +\n2 1 -");
        let a = WeightMatrix::from_graph(&g);
        let x = vec![1.0, -2.0, 3.0];
        let dense = a.dense();
        let xd = nalgebra::DVector::from_vec(x.clone());
        let want = &dense * &xd;
        let got = a.apply(&x);
        let mut got_seq = vec![0.0; 3];
        a.apply_into_seq(&x, &mut got_seq);
        for i in 0..3 {
            assert!((got[i] - want[i]).abs() < 1e-15);
            assert_eq!(got[i], got_seq[i]);
        }
    }
}
