use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EdgeList, Graph, VertexId};

/// Graph500 initiator probabilities `(A, B, C, D)`.
pub const KRONECKER_INITIATOR: (f64, f64, f64, f64) = (0.57, 0.19, 0.19, 0.05);

/// Recursive stochastic Kronecker generator with the Graph500 initiator.
///
/// Produces `edge_factor * 2^scale` edge tuples over `2^scale` vertices. Each
/// tuple descends `scale` levels of the initiator matrix, picking one quadrant
/// per level; vertex labels are then shuffled by a seeded permutation so that
/// hubs are not clustered at low ids. Duplicates and self-loops are kept here
/// and dropped by [`Graph::build_csr`].
pub fn generate_kronecker(scale: u32, edge_factor: usize, seed: u64) -> EdgeList {
    assert!(scale >= 1, "kronecker scale must be at least 1");
    let n = 1usize << scale;
    let m = edge_factor * n;
    let (a, b, c, _) = KRONECKER_INITIATOR;
    let ab = a + b;
    let abc = a + b + c;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let (mut src, mut dst) = (0usize, 0usize);
        for level in 0..scale {
            let r: f64 = rng.gen();
            let (sb, db) = if r < a {
                (0, 0)
            } else if r < ab {
                (0, 1)
            } else if r < abc {
                (1, 0)
            } else {
                (1, 1)
            };
            src |= sb << level;
            dst |= db << level;
        }
        edges.push((src, dst));
    }

    let mut perm: Vec<VertexId> = (0..n).collect();
    perm.shuffle(&mut rng);
    for e in &mut edges {
        *e = (perm[e.0], perm[e.1]);
    }
    EdgeList::new(n, edges)
}

/// G(n, p): every unordered pair `{u, v}` with `u < v` is included independently
/// with probability `p`. Uses geometric skipping so the cost is linear in the
/// output size.
pub fn generate_erdos_renyi(n: usize, p: f64, seed: u64) -> EdgeList {
    assert!((0.0..=1.0).contains(&p), "probability {p} outside [0, 1]");
    let mut edges = Vec::new();
    if n < 2 || p == 0.0 {
        return EdgeList::new(n, edges);
    }
    if p == 1.0 {
        for v in 1..n {
            for u in 0..v {
                edges.push((u, v));
            }
        }
        return EdgeList::new(n, edges);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let log_q = (1.0 - p).ln();
    let (mut v, mut w): (usize, i64) = (1, -1);
    while v < n {
        let r: f64 = rng.gen();
        let skip = ((1.0 - r).ln() / log_q).floor();
        // Jumps past the remaining pair space end the walk.
        if skip >= (n as f64) * (n as f64) {
            break;
        }
        w += 1 + skip as i64;
        while v < n && w >= v as i64 {
            w -= v as i64;
            v += 1;
        }
        if v < n {
            edges.push((w as usize, v));
        }
    }
    EdgeList::new(n, edges)
}

/// Replaces the weights of `graph` with distinct positive reals, identical on
/// both arcs of an undirected edge. Weights are a seeded permutation of
/// `1.0..=m`, so ties never occur.
pub fn assign_distinct_weights(graph: Graph, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5745_4947_4854_5321);
    let keys: Vec<(VertexId, VertexId)> = graph.edges().into_iter().map(|(u, v, _)| (u, v)).collect();
    let mut ranks: Vec<usize> = (0..keys.len()).collect();
    ranks.shuffle(&mut rng);
    let lookup: HashMap<(VertexId, VertexId), f64> =
        keys.iter().zip(ranks).map(|(&k, r)| (k, (r + 1) as f64)).collect();

    let directed = graph.is_directed();
    let mut weights = Vec::with_capacity(graph.num_arcs());
    for u in 0..graph.num_vertices() {
        for &v in graph.neighbors(u) {
            let key = if directed || u < v { (u, v) } else { (v, u) };
            weights.push(lookup[&key]);
        }
    }
    graph.with_weights(weights).expect("weights built per arc")
}
