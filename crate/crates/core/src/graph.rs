//! Undirected communication graphs and their spectral views.
//!
//! A [`Graph`] is an immutable value: removing a link (the effect of a DoS
//! event) produces a new graph and leaves the original untouched.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Absolute tolerance used when deciding whether an eigenvalue is zero.
pub const EIGEN_TOL: f64 = 1e-9;

/// Undirected simple graph on nodes `0..n_nodes`.
///
/// Edges are stored normalized as `(i, j)` with `i < j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Graph {
    n_nodes: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl Graph {
    /// Builds a graph, rejecting self-loops, duplicate edges and out-of-range indices.
    pub fn new(n_nodes: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::invalid("graph needs at least one node"));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i == j {
                return Err(Error::invalid(format!("self-loop at node {i}")));
            }
            if i >= n_nodes || j >= n_nodes {
                return Err(Error::invalid(format!(
                    "edge ({i},{j}) out of range for {n_nodes} nodes"
                )));
            }
            if !set.insert(normalize(i, j)) {
                return Err(Error::invalid(format!("duplicate edge ({i},{j})")));
            }
        }
        Ok(Graph {
            n_nodes,
            edges: set,
        })
    }

    pub fn empty(n_nodes: usize) -> Result<Self> {
        Self::new(n_nodes, [])
    }

    pub fn path(n_nodes: usize) -> Result<Self> {
        Self::new(n_nodes, (1..n_nodes).map(|i| (i - 1, i)))
    }

    pub fn complete(n_nodes: usize) -> Result<Self> {
        Self::new(
            n_nodes,
            (0..n_nodes).flat_map(|i| (i + 1..n_nodes).map(move |j| (i, j))),
        )
    }

    /// Star centred on node 0.
    pub fn star(n_nodes: usize) -> Result<Self> {
        Self::new(n_nodes, (1..n_nodes).map(|i| (0, i)))
    }

    /// Parses a 1-based edge list such as `"1-2, 1-3 2-4"` into 0-based pairs.
    pub fn parse_edge_list(text: &str) -> Result<Vec<(usize, usize)>> {
        text.split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(parse_edge_token)
            .collect()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Edges in ascending `(i, j)` order with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&normalize(i, j))
    }

    /// Neighbours of `i` in ascending order.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|&(a, b)| match (a == i, b == i) {
                (true, _) => Some(b),
                (_, true) => Some(a),
                _ => None,
            })
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn degree(&self, i: usize) -> usize {
        self.edges.iter().filter(|&&(a, b)| a == i || b == i).count()
    }

    pub fn adjacency<T: Real>(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.n_nodes, self.n_nodes);
        for &(i, j) in &self.edges {
            m[(i, j)] = T::one();
            m[(j, i)] = T::one();
        }
        m
    }

    pub fn degree_matrix<T: Real>(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.n_nodes, self.n_nodes);
        for i in 0..self.n_nodes {
            m[(i, i)] = T::from_usize_lossy(self.degree(i));
        }
        m
    }

    /// `Deg - Adj`; rows sum to exactly zero.
    pub fn laplacian<T: Real>(&self) -> DMatrix<T> {
        self.degree_matrix::<T>() - self.adjacency::<T>()
    }

    /// Returns a copy without the edge `{i, j}`.
    pub fn remove_edge(&self, i: usize, j: usize) -> Result<Graph> {
        let key = normalize(i, j);
        if !self.edges.contains(&key) {
            return Err(Error::NotFound(format!("edge ({i},{j})")));
        }
        let mut out = self.clone();
        out.edges.remove(&key);
        Ok(out)
    }

    /// Returns a copy with the edge `{i, j}` added.
    pub fn add_edge(&self, i: usize, j: usize) -> Result<Graph> {
        Graph::new(self.n_nodes, self.edges().chain(std::iter::once((i, j))))
    }

    /// Breadth-first connectivity test.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n_nodes];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = queue.pop_front() {
            for w in self.neighbors(v) {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    queue.push_back(w);
                }
            }
        }
        count == self.n_nodes
    }

    /// Graph read off the strongly negative off-diagonal entries of a
    /// (recovered) Laplacian: `(i, j)` is an edge when
    /// `m[(i, j)] < -rel_threshold * max_offdiag_magnitude`.
    pub fn from_laplacian_pattern<T: Real>(m: &DMatrix<T>, rel_threshold: T) -> Result<Graph> {
        let n = m.nrows();
        if n == 0 || m.ncols() != n {
            return Err(Error::invalid("pattern matrix must be square and non-empty"));
        }
        let mut scale = T::zero();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    scale = scale.max(m[(i, j)].abs());
                }
            }
        }
        let mut edges = Vec::new();
        if scale > T::zero() {
            let cut = -(rel_threshold * scale);
            for i in 0..n {
                for j in i + 1..n {
                    let sym = (m[(i, j)] + m[(j, i)]) * T::lit(0.5);
                    if sym < cut {
                        edges.push((i, j));
                    }
                }
            }
        }
        Graph::new(n, edges)
    }
}

impl fmt::Display for Graph {
    /// Prints the 1-based edge list used by scenario files.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .edges
            .iter()
            .map(|&(i, j)| format!("{}-{}", i + 1, j + 1))
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

fn normalize(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

fn parse_edge_token(tok: &str) -> Result<(usize, usize)> {
    let bad = |reason: &str| Error::Parse {
        what: format!("edge `{tok}`"),
        reason: reason.to_string(),
    };
    let (a, b) = tok.split_once('-').ok_or_else(|| bad("expected `i-j`"))?;
    let a: usize = a.trim().parse().map_err(|_| bad("node is not an integer"))?;
    let b: usize = b.trim().parse().map_err(|_| bad("node is not an integer"))?;
    if a == 0 || b == 0 {
        return Err(bad("node indices in files are 1-based"));
    }
    Ok((a - 1, b - 1))
}

/// Second-smallest Laplacian eigenvalue and an associated unit eigenvector.
#[derive(Clone, Debug)]
pub struct Connectivity<T: Real> {
    pub lambda2: T,
    pub fiedler: DVector<T>,
}

/// Algebraic connectivity of `g`.
pub fn algebraic_connectivity<T: Real>(g: &Graph) -> Result<Connectivity<T>> {
    spectral_connectivity(&g.laplacian::<T>())
}

/// Algebraic connectivity of an arbitrary symmetric Laplacian-like matrix.
///
/// The Fiedler vector's sign is fixed so that its largest-magnitude entry
/// (first one on ties) is positive.
pub fn spectral_connectivity<T: Real>(laplacian: &DMatrix<T>) -> Result<Connectivity<T>> {
    let n = laplacian.nrows();
    if n < 2 || laplacian.ncols() != n {
        return Err(Error::invalid(
            "algebraic connectivity needs a square matrix with at least 2 nodes",
        ));
    }
    let eig = SymmetricEigen::new(laplacian.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a]
            .partial_cmp(&eig.eigenvalues[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let idx = order[1];
    let lambda2 = eig.eigenvalues[idx].max(T::zero());
    let mut v: DVector<T> = eig.eigenvectors.column(idx).into_owned();
    let norm = v.norm();
    if norm > T::zero() {
        v /= norm;
    }
    let mut pivot = 0;
    for i in 1..n {
        if v[i].abs() > v[pivot].abs() {
            pivot = i;
        }
    }
    if v[pivot] < T::zero() {
        v = -v;
    }
    Ok(Connectivity {
        lambda2,
        fiedler: v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2() -> Graph {
        Graph::new(5, [(0, 1), (0, 2), (1, 3), (2, 4)]).unwrap()
    }

    #[test]
    fn path_laplacian() {
        let l = Graph::path(3).unwrap().laplacian::<f64>();
        let expect = DMatrix::from_row_slice(3, 3, &[1., -1., 0., -1., 2., -1., 0., -1., 1.]);
        assert_eq!(l, expect);
    }

    #[test]
    fn single_node_laplacian_is_zero() {
        let l = Graph::empty(1).unwrap().laplacian::<f64>();
        assert_eq!(l, DMatrix::zeros(1, 1));
    }

    #[test]
    fn formation_graph_laplacian() {
        let l = fig2().laplacian::<f64>();
        let diag: Vec<f64> = (0..5).map(|i| l[(i, i)]).collect();
        assert_eq!(diag, vec![2., 2., 2., 1., 1.]);
        for (i, j) in [(0, 1), (0, 2), (1, 3), (2, 4)] {
            assert_eq!(l[(i, j)], -1.0);
            assert_eq!(l[(j, i)], -1.0);
        }
        assert_eq!(l.iter().filter(|&&x| x == -1.0).count(), 8);
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(matches!(Graph::new(3, [(1, 1)]), Err(Error::InvalidInput(_))));
        assert!(matches!(Graph::new(3, [(0, 1), (1, 0)]), Err(Error::InvalidInput(_))));
        assert!(matches!(Graph::new(3, [(0, 3)]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn k2_connectivity() {
        let c = algebraic_connectivity::<f64>(&Graph::complete(2).unwrap()).unwrap();
        assert!((c.lambda2 - 2.0).abs() < 1e-12);
        let c = algebraic_connectivity::<f64>(&Graph::empty(2).unwrap()).unwrap();
        assert!(c.lambda2.abs() < 1e-12);
    }

    #[test]
    fn connectivity_needs_two_nodes() {
        let err = algebraic_connectivity::<f64>(&Graph::empty(1).unwrap()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }

    #[test]
    fn removing_leaf_link_isolates_node() {
        let g = fig2().remove_edge(4, 2).unwrap();
        assert_eq!(g.degree(4), 0);
        assert!(!g.is_connected());
        let c = algebraic_connectivity::<f64>(&g).unwrap();
        assert!(c.lambda2.abs() < EIGEN_TOL);
        // original untouched
        assert!(fig2().has_edge(2, 4));
    }

    #[test]
    fn k2_minus_edge_and_triangle_minus_edge() {
        let g = Graph::complete(2).unwrap().remove_edge(0, 1).unwrap();
        assert_eq!(g.n_edges(), 0);
        let t = Graph::complete(3).unwrap().remove_edge(0, 2).unwrap();
        assert!(t.is_connected());
        let c = algebraic_connectivity::<f64>(&t).unwrap();
        assert!((c.lambda2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn remove_absent_edge() {
        assert!(matches!(fig2().remove_edge(3, 4), Err(Error::NotFound(_))));
    }

    #[test]
    fn connectivity_examples() {
        assert!(fig2().is_connected());
        assert!(!fig2().remove_edge(2, 4).unwrap().is_connected());
        assert!(Graph::empty(1).unwrap().is_connected());
    }

    #[test]
    fn edge_list_parsing_is_one_based() {
        let e = Graph::parse_edge_list("1-2, 1-3 2-4,3-5").unwrap();
        assert_eq!(e, vec![(0, 1), (0, 2), (1, 3), (2, 4)]);
        assert!(Graph::parse_edge_list("0-1").is_err());
        assert!(Graph::parse_edge_list("1_2").is_err());
        assert_eq!(fig2().to_string(), "1-2,1-3,2-4,3-5");
    }

    #[test]
    fn laplacian_pattern_threshold() {
        let l = fig2().laplacian::<f64>() * 0.37;
        assert_eq!(Graph::from_laplacian_pattern(&l, 0.5).unwrap(), fig2());
    }
}
