//! Sequential reference results used to validate runs before they are
//! reported.

use std::collections::VecDeque;

use super::UNVISITED;
use crate::graph::{Graph, VertexId};

/// Queue-based BFS distances; unreachable vertices get [`UNVISITED`].
pub fn bfs_distances(graph: &Graph, source: VertexId) -> Vec<u64> {
    let mut dist = vec![UNVISITED; graph.num_vertices()];
    let mut queue = VecDeque::from([source]);
    dist[source] = 0;
    while let Some(u) = queue.pop_front() {
        for &w in graph.neighbors(u) {
            if dist[w] == UNVISITED {
                dist[w] = dist[u] + 1;
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Power iteration from the uniform vector; dangling vertices scatter nothing.
pub fn pagerank(graph: &Graph, d: f64, iterations: usize) -> Vec<f64> {
    let n = graph.num_vertices();
    let mut rank = vec![1.0 / n.max(1) as f64; n];
    for _ in 0..iterations {
        let mut next = vec![(1.0 - d) / n as f64; n];
        for v in 0..n {
            let deg = graph.degree(v);
            if deg > 0 {
                let share = d * rank[v] / deg as f64;
                for &w in graph.neighbors(v) {
                    next[w] += share;
                }
            }
        }
        rank = next;
    }
    rank
}

/// Disjoint sets with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if `a` and `b` were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
        true
    }
}

/// Kruskal minimum spanning forest: `(edges, total weight)`.
pub fn kruskal(graph: &Graph) -> (Vec<(VertexId, VertexId, f64)>, f64) {
    let mut edges = graph.edges();
    edges.sort_by(|a, b| a.2.total_cmp(&b.2).then((a.0, a.1).cmp(&(b.0, b.1))));
    let mut uf = UnionFind::new(graph.num_vertices());
    let tree: Vec<_> = edges.into_iter().filter(|&(u, v, _)| uf.union(u, v)).collect();
    let weight = tree.iter().map(|e| e.2).sum();
    (tree, weight)
}

pub fn connected(graph: &Graph, s: VertexId, t: VertexId) -> bool {
    let mut uf = UnionFind::new(graph.num_vertices());
    for (u, v, _) in graph.edges() {
        uf.union(u, v);
    }
    uf.find(s) == uf.find(t)
}

/// Edges whose endpoints share a color.
pub fn monochromatic_edges(graph: &Graph, colors: &[u64]) -> usize {
    graph.edges().iter().filter(|(u, v, _)| colors[*u] == colors[*v]).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::EdgeList;

    #[test]
    fn union_find_basics() {
        let mut uf = UnionFind::new(4);
        assert!(uf.union(0, 1));
        assert!(!uf.union(1, 0));
        assert!(uf.union(2, 3));
        assert_ne!(uf.find(0), uf.find(3));
    }

    #[test]
    fn kruskal_square() {
        let el = EdgeList::with_weights(4, vec![(0, 1), (1, 2), (2, 3), (3, 0)], vec![1.0, 4.0, 2.0, 3.0]);
        let g = Graph::build_csr(&el, false).unwrap();
        assert_eq!(kruskal(&g).1, 6.0);
    }
}
