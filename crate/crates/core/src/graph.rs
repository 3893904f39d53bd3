//! Undirected communication graphs: Laplacians, connectivity and the
//! orthonormal complement of the consensus direction.

use std::collections::VecDeque;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::scalar::{from_usize, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid adjacency: {0}")]
    InvalidAdjacency(String),
}

/// Undirected, unweighted graph on `node_count` agents.
///
/// Adjacency entries are 0/1 with an empty diagonal; neighbor lists are kept
/// sorted and always agree with the adjacency matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    node_count: usize,
    adjacency: Vec<bool>,
    neighbors: Vec<Vec<usize>>,
}

impl Topology {
    /// Graph with `n` nodes and no edges.
    pub fn empty(n: usize) -> Self {
        Self {
            node_count: n,
            adjacency: vec![false; n * n],
            neighbors: vec![Vec::new(); n],
        }
    }

    /// Builds a graph from an explicit 0/1 adjacency matrix.
    pub fn from_adjacency(rows: &[Vec<u8>]) -> Result<Self, GraphError> {
        let n = rows.len();
        let mut topo = Self::empty(n);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(GraphError::InvalidAdjacency(format!(
                    "row {} has {} entries, expected {n}",
                    i + 1,
                    row.len()
                )));
            }
            for (j, &a) in row.iter().enumerate() {
                match a {
                    0 => {}
                    1 if i == j => return Err(GraphError::InvalidAdjacency(format!("self-loop at node {}", i + 1))),
                    1 => {
                        if rows[j][i] != 1 {
                            return Err(GraphError::InvalidAdjacency(format!(
                                "entry ({}, {}) is not mirrored",
                                i + 1,
                                j + 1
                            )));
                        }
                        if i < j {
                            topo.set_edge(i, j);
                        }
                    }
                    other => {
                        return Err(GraphError::InvalidAdjacency(format!(
                            "entry ({}, {}) is {other}; only 0 and 1 are allowed",
                            i + 1,
                            j + 1
                        )))
                    }
                }
            }
        }
        Ok(topo)
    }

    /// Builds a graph from an undirected edge list (0-based endpoints).
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut topo = Self::empty(n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(GraphError::InvalidAdjacency(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(GraphError::InvalidAdjacency(format!("self-loop at node {i}")));
            }
            topo.set_edge(i, j);
        }
        Ok(topo)
    }

    /// Cycle through all nodes. `ring(3)` is the triangle, `ring(2)` a single
    /// edge.
    pub fn ring(n: usize) -> Self {
        let mut topo = Self::empty(n);
        if n >= 2 {
            for i in 0..n {
                topo.set_edge(i, (i + 1) % n);
            }
        }
        topo
    }

    pub fn complete(n: usize) -> Self {
        let mut topo = Self::empty(n);
        for i in 0..n {
            for j in i + 1..n {
                topo.set_edge(i, j);
            }
        }
        topo
    }

    pub fn path(n: usize) -> Self {
        let mut topo = Self::empty(n);
        for i in 1..n {
            topo.set_edge(i - 1, i);
        }
        topo
    }

    fn set_edge(&mut self, i: usize, j: usize) {
        let n = self.node_count;
        if self.adjacency[i * n + j] {
            return;
        }
        self.adjacency[i * n + j] = true;
        self.adjacency[j * n + i] = true;
        let pos = self.neighbors[i].binary_search(&j).unwrap_or_else(|p| p);
        self.neighbors[i].insert(pos, j);
        let pos = self.neighbors[j].binary_search(&i).unwrap_or_else(|p| p);
        self.neighbors[j].insert(pos, i);
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.node_count + j]
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Edge list with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (i, nbrs) in self.neighbors.iter().enumerate() {
            out.extend(nbrs.iter().filter(|&&j| j > i).map(|&j| (i, j)));
        }
        out
    }

    /// Adjacency as a row-major 0/1 matrix.
    pub fn adjacency_rows(&self) -> Vec<Vec<u8>> {
        (0..self.node_count)
            .map(|i| (0..self.node_count).map(|j| u8::from(self.has_edge(i, j))).collect())
            .collect()
    }

    /// Same node set with every edge touching an inactive node removed.
    pub fn restricted(&self, active: &[bool]) -> Self {
        assert_eq!(active.len(), self.node_count, "activity mask length");
        let mut topo = Self::empty(self.node_count);
        for (i, j) in self.edges() {
            if active[i] && active[j] {
                topo.set_edge(i, j);
            }
        }
        topo
    }

    /// Induced subgraph on `keep` (renumbered in the given order).
    pub fn induced(&self, keep: &[usize]) -> Self {
        let mut topo = Self::empty(keep.len());
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate().skip(a + 1) {
                if self.has_edge(i, j) {
                    topo.set_edge(a, b);
                }
            }
        }
        topo
    }

    pub fn is_connected(&self) -> bool {
        is_connected(self)
    }

    pub fn laplacian<T: Real>(&self) -> DMatrix<T> {
        laplacian(self)
    }
}

/// `L = D - A`.
pub fn laplacian<T: Real>(topology: &Topology) -> DMatrix<T> {
    let n = topology.node_count();
    let mut l = DMatrix::zeros(n, n);
    for i in 0..n {
        l[(i, i)] = from_usize(topology.degree(i));
        for &j in topology.neighbors(i) {
            l[(i, j)] = -T::one();
        }
    }
    l
}

/// Breadth-first reachability from the first node.
pub fn is_connected(topology: &Topology) -> bool {
    let n = topology.node_count();
    if n <= 1 {
        return true;
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut reached = 1;
    while let Some(i) = queue.pop_front() {
        for &j in topology.neighbors(i) {
            if !seen[j] {
                seen[j] = true;
                reached += 1;
                queue.push_back(j);
            }
        }
    }
    reached == n
}

/// Eigenvalues of a symmetric matrix in ascending order.
pub fn sorted_symmetric_eigenvalues<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    let eig = SymmetricEigen::new(m.clone());
    let mut values: Vec<T> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    values
}

/// Second-smallest Laplacian eigenvalue.
pub fn algebraic_connectivity<T: Real>(laplacian: &DMatrix<T>) -> Result<T, GraphError> {
    if !laplacian.is_square() {
        return Err(GraphError::Dimension(format!(
            "Laplacian must be square, got {}x{}",
            laplacian.nrows(),
            laplacian.ncols()
        )));
    }
    if laplacian.nrows() < 2 {
        return Err(GraphError::Dimension(
            "algebraic connectivity needs at least two nodes".into(),
        ));
    }
    Ok(sorted_symmetric_eigenvalues(laplacian)[1])
}

/// `N x (N-1)` matrix with orthonormal columns, all orthogonal to `1_N`.
///
/// Built from the Householder reflector that maps `e_1` onto `-1_N/sqrt(N)`;
/// the remaining columns of the reflector span the complement. The result is
/// one of many valid choices, so callers should rely only on
/// `R^T R = I` and `1^T R = 0`.
pub fn orthonormal_complement<T: Real>(n: usize) -> Result<DMatrix<T>, GraphError> {
    if n < 2 {
        return Err(GraphError::Dimension(
            "orthonormal complement of 1_N needs N >= 2".into(),
        ));
    }
    let inv_sqrt = T::one() / from_usize::<T>(n).sqrt();
    // u = 1/sqrt(N) + e_1, no cancellation in the first entry.
    let mut u = nalgebra::DVector::from_element(n, inv_sqrt);
    u[0] += T::one();
    let scale = (T::one() + T::one()) / u.norm_squared();
    let h = DMatrix::<T>::identity(n, n) - (&u * u.transpose()) * scale;
    Ok(h.columns(1, n - 1).into_owned())
}
