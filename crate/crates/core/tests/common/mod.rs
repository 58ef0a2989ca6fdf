//! Helpers shared by the integration tests: reference implementations
//! written independently of the library, and small fixtures.
#![allow(dead_code)]

use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::cmp::Reverse;

use aam::graph::{assign_distinct_weights, generate_erdos_renyi, generate_kronecker, Graph};
use aam::txn::step::{AtomicScript, Program, ScriptOp, Terminal};
use aam::txn::Word;

pub const UNREACHED: u64 = u64::MAX;

pub fn kron(scale: u32, ef: usize, seed: u64) -> Graph {
    Graph::build_csr(&generate_kronecker(scale, ef, seed), false).unwrap()
}

pub fn er(n: usize, p: f64, seed: u64) -> Graph {
    Graph::build_csr(&generate_erdos_renyi(n, p, seed), false).unwrap()
}

pub fn weighted_er(n: usize, p: f64, seed: u64) -> Graph {
    assign_distinct_weights(er(n, p, seed), seed)
}

/// Distances by repeated relaxation over levels.
pub fn ref_bfs(g: &Graph, s: usize) -> Vec<u64> {
    let mut dist = vec![UNREACHED; g.num_vertices()];
    dist[s] = 0;
    let mut frontier = vec![s];
    let mut level = 0;
    while !frontier.is_empty() {
        level += 1;
        let mut next = Vec::new();
        for u in frontier {
            for &w in g.neighbors(u) {
                if dist[w] == UNREACHED {
                    dist[w] = level;
                    next.push(w);
                }
            }
        }
        frontier = next;
    }
    dist
}

/// Pull-style evaluation: each vertex sums over its in-neighbors.
pub fn ref_pagerank(g: &Graph, d: f64, iters: usize) -> Vec<f64> {
    let n = g.num_vertices();
    let mut incoming: Vec<Vec<usize>> = vec![Vec::new(); n];
    for u in 0..n {
        for &w in g.neighbors(u) {
            incoming[w].push(u);
        }
    }
    let mut rank = vec![1.0 / n as f64; n];
    for _ in 0..iters {
        rank = (0..n)
            .map(|v| (1.0 - d) / n as f64 + incoming[v].iter().map(|&u| d * rank[u] / g.degree(u) as f64).sum::<f64>())
            .collect();
    }
    rank
}

/// Prim over every component; returns total weight.
pub fn ref_msf_weight(g: &Graph) -> f64 {
    let n = g.num_vertices();
    let mut seen = vec![false; n];
    let mut total = 0.0;
    for root in 0..n {
        if seen[root] {
            continue;
        }
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((0u64, root)));
        while let Some(Reverse((w, v))) = heap.pop() {
            if seen[v] {
                continue;
            }
            seen[v] = true;
            total += f64::from_bits(w);
            for (x, wx) in g.weighted_neighbors(v) {
                if !seen[x] {
                    // positive finite floats order like their bit patterns
                    heap.push(Reverse((wx.to_bits(), x)));
                }
            }
        }
    }
    total
}

pub fn ref_connected(g: &Graph, s: usize, t: usize) -> bool {
    let mut seen = vec![false; g.num_vertices()];
    let mut queue = VecDeque::from([s]);
    seen[s] = true;
    while let Some(u) = queue.pop_front() {
        if u == t {
            return true;
        }
        for &w in g.neighbors(u) {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    false
}

pub fn monochromatic(g: &Graph, colors: &[u64]) -> usize {
    (0..g.num_vertices()).flat_map(|u| g.neighbors(u).iter().map(move |&v| (u, v))).filter(|&(u, v)| u < v && colors[u] == colors[v]).count()
}

fn run_alone(p: &Program, mem: &mut [Word]) -> Vec<Word> {
    match p {
        Program::Atomic(AtomicScript::Cas { cell, compare, new }) => {
            let ok = mem[cell.0] == *compare;
            if ok {
                mem[cell.0] = *new;
            }
            vec![ok as Word]
        }
        Program::Atomic(AtomicScript::Fao { cell, arg, op }) => {
            let prev = mem[cell.0];
            mem[cell.0] = op.apply(prev, *arg);
            vec![prev]
        }
        Program::Txn(ops) => {
            let mut regs = Vec::new();
            for op in ops {
                match *op {
                    ScriptOp::Read(c) => regs.push(mem[c.0]),
                    ScriptOp::Write(c, e) => mem[c.0] = e.eval(&regs),
                    ScriptOp::WriteIf { reg, equals, cell, value } => {
                        if regs[reg] == equals {
                            mem[cell.0] = value.eval(&regs);
                        }
                    }
                }
            }
            regs
        }
    }
}

fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, k - 1);
            out.push(q);
        }
    }
    out
}

/// Outcomes of running the programs one after another, in every order.
pub fn sequential_terminals(programs: &[Program], init: &[Word]) -> BTreeSet<Terminal> {
    permutations(programs.len())
        .into_iter()
        .map(|order| {
            let mut mem = init.to_vec();
            let mut reads = vec![Vec::new(); programs.len()];
            for i in order {
                reads[i] = run_alone(&programs[i], &mut mem);
            }
            Terminal { values: mem, reads }
        })
        .collect()
}
