//! Graph substrate: edge lists, CSR topology, generators, SNAP ingestion and
//! one-dimensional ownership partitioning.

mod gen;
mod partition;
mod snap;
mod spec;

pub use gen::{assign_distinct_weights, generate_erdos_renyi, generate_kronecker, KRONECKER_INITIATOR};
pub use partition::{Partition, ProcessId};
pub use snap::{load_snap_edge_list, load_snap_edge_list_compact, write_snap_edge_list};
pub use spec::GraphSpec;

use thiserror::Error;

pub type VertexId = usize;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("vertex {vertex} out of range for graph with {n} vertices")]
    OutOfRange { vertex: VertexId, n: usize },
    #[error("invalid graph spec '{0}'")]
    Spec(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// A list of `(src, dst)` pairs over `n` dense vertex ids, with weights either
/// present for every edge or absent for all of them.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeList {
    pub n: usize,
    pub edges: Vec<(VertexId, VertexId)>,
    pub weights: Option<Vec<f64>>,
}

impl EdgeList {
    pub fn new(n: usize, edges: Vec<(VertexId, VertexId)>) -> Self {
        EdgeList { n, edges, weights: None }
    }

    pub fn with_weights(n: usize, edges: Vec<(VertexId, VertexId)>, weights: Vec<f64>) -> Self {
        EdgeList { n, edges, weights: Some(weights) }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn validate(&self) -> Result<(), GraphError> {
        for &(s, d) in &self.edges {
            for v in [s, d] {
                if v >= self.n {
                    return Err(GraphError::OutOfRange { vertex: v, n: self.n });
                }
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.edges.len() {
                return Err(GraphError::Malformed(format!(
                    "{} weights for {} edges",
                    w.len(),
                    self.edges.len()
                )));
            }
            if let Some(bad) = w.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
                return Err(GraphError::Malformed(format!("weight {bad} is not a non-negative real")));
            }
        }
        Ok(())
    }
}

/// Immutable CSR topology. Neighbor lists are sorted and free of duplicates and
/// self-loops.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<VertexId>,
    weights: Option<Vec<f64>>,
    directed: bool,
}

impl Graph {
    /// Builds a CSR graph. Undirected inputs are mirrored; duplicates collapse to
    /// one edge keeping the smallest weight, and self-loops are dropped.
    pub fn build_csr(edges: &EdgeList, directed: bool) -> Result<Graph, GraphError> {
        edges.validate()?;
        let n = edges.n;
        let weight_of = |i: usize| edges.weights.as_ref().map(|w| w[i]);

        let mut arcs: Vec<(VertexId, VertexId, f64)> = Vec::with_capacity(edges.len() * if directed { 1 } else { 2 });
        for (i, &(s, d)) in edges.edges.iter().enumerate() {
            if s == d {
                continue;
            }
            let w = weight_of(i).unwrap_or(0.0);
            arcs.push((s, d, w));
            if !directed {
                arcs.push((d, s, w));
            }
        }
        arcs.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)).then(a.2.total_cmp(&b.2)));
        arcs.dedup_by(|later, kept| later.0 == kept.0 && later.1 == kept.1);

        let mut row_offsets = vec![0usize; n + 1];
        for &(s, _, _) in &arcs {
            row_offsets[s + 1] += 1;
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        let col_indices = arcs.iter().map(|a| a.1).collect();
        let weights = edges.weights.as_ref().map(|_| arcs.iter().map(|a| a.2).collect());
        Ok(Graph { n, row_offsets, col_indices, weights, directed })
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    /// Number of stored arcs (twice the edge count for undirected graphs).
    pub fn num_arcs(&self) -> usize {
        self.col_indices.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[VertexId] {
        &self.col_indices
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn degree(&self, v: VertexId) -> usize {
        self.row_offsets[v + 1] - self.row_offsets[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|v| self.degree(v)).collect()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn neighbors(&self, v: VertexId) -> &[VertexId] {
        &self.col_indices[self.row_offsets[v]..self.row_offsets[v + 1]]
    }

    /// Neighbors of `v` paired with arc weights (0.0 when unweighted).
    pub fn weighted_neighbors(&self, v: VertexId) -> impl Iterator<Item = (VertexId, f64)> + '_ {
        let range = self.row_offsets[v]..self.row_offsets[v + 1];
        let w = self.weights.as_deref();
        range.map(move |i| (self.col_indices[i], w.map_or(0.0, |w| w[i])))
    }

    /// Each undirected edge once as `(u, v, w)` with `u < v`; every arc for directed graphs.
    pub fn edges(&self) -> Vec<(VertexId, VertexId, f64)> {
        let mut out = Vec::new();
        for u in 0..self.n {
            for (v, w) in self.weighted_neighbors(u) {
                if self.directed || u < v {
                    out.push((u, v, w));
                }
            }
        }
        out
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Graph, GraphError> {
        if weights.len() != self.col_indices.len() {
            return Err(GraphError::Malformed("weight array does not match arc count".into()));
        }
        self.weights = Some(weights);
        Ok(self)
    }

    /// Checks every structural invariant of the CSR representation.
    pub fn validate(&self) -> Result<(), GraphError> {
        let bad = |m: String| Err(GraphError::Invariant(m));
        if self.row_offsets.len() != self.n + 1 {
            return bad(format!("row_offsets has length {} for n={}", self.row_offsets.len(), self.n));
        }
        if self.row_offsets[0] != 0 || self.row_offsets[self.n] != self.col_indices.len() {
            return bad("row_offsets endpoints do not bracket col_indices".into());
        }
        if self.row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return bad("row_offsets not monotone".into());
        }
        if let Some(w) = &self.weights {
            if w.len() != self.col_indices.len() {
                return bad("weights not parallel to col_indices".into());
            }
        }
        for u in 0..self.n {
            let nb = self.neighbors(u);
            if nb.iter().any(|&v| v >= self.n) {
                return bad(format!("neighbor of {u} out of range"));
            }
            if nb.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("neighbors of {u} unsorted or duplicated"));
            }
            if nb.contains(&u) {
                return bad(format!("self-loop at {u}"));
            }
            if !self.directed {
                for &v in nb {
                    if self.neighbors(v).binary_search(&u).is_err() {
                        return bad(format!("edge ({u},{v}) has no mirror"));
                    }
                }
            }
        }
        Ok(())
    }
}
