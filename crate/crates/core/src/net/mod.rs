//! In-process simulated network: per-pair coalescing buffers feeding FIFO
//! mailboxes, plus the ownership protocol for transactions over remote
//! elements.

mod ownership;
pub mod scenario;

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering::Relaxed};
use std::time::{Duration, Instant};

use parking_lot::Mutex;

use crate::graph::ProcessId;

pub use ownership::{ownership_backoff, Acquire, OwnershipError, OwnershipTable, UNOWNED};
pub use scenario::{run_scenario, workload, DistConfig, DistError, DistReport, DistTxn, Scenario};

/// Messages from one source delivered together.
#[derive(Debug, Clone)]
pub struct Batch<M> {
    pub src: ProcessId,
    pub messages: Vec<M>,
    deliver_at: Option<Instant>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct NetStats {
    pub batches: u64,
    pub messages: u64,
}

/// `procs × procs` coalescing buffers of capacity `coalesce` and one
/// mailbox per destination. A buffer is moved into the mailbox while its
/// lock is held, so messages between a pair arrive in send order.
#[derive(Debug)]
pub struct Network<M> {
    procs: usize,
    coalesce: usize,
    latency: Duration,
    buffers: Vec<Mutex<Vec<M>>>,
    mailboxes: Vec<Mutex<VecDeque<Batch<M>>>>,
    batches: AtomicU64,
    messages: AtomicU64,
}

impl<M> Network<M> {
    pub fn new(procs: usize, coalesce: usize, latency: Duration) -> Self {
        assert!(procs >= 1 && coalesce >= 1, "procs and coalesce must be positive");
        Network {
            procs,
            coalesce,
            latency,
            buffers: (0..procs * procs).map(|_| Mutex::new(Vec::new())).collect(),
            mailboxes: (0..procs).map(|_| Mutex::new(VecDeque::new())).collect(),
            batches: AtomicU64::new(0),
            messages: AtomicU64::new(0),
        }
    }

    pub fn procs(&self) -> usize {
        self.procs
    }

    pub fn coalesce(&self) -> usize {
        self.coalesce
    }

    fn ship(&self, src: ProcessId, dst: ProcessId, buf: &mut Vec<M>) -> usize {
        let n = buf.len();
        let deliver_at = (!self.latency.is_zero()).then(|| Instant::now() + self.latency);
        self.mailboxes[dst].lock().push_back(Batch { src, messages: std::mem::take(buf), deliver_at });
        self.batches.fetch_add(1, Relaxed);
        self.messages.fetch_add(n as u64, Relaxed);
        n
    }

    /// Buffers `msg` for `dst`. Returns the size of the batch sent if the
    /// buffer filled up.
    pub fn send(&self, src: ProcessId, dst: ProcessId, msg: M) -> Option<usize> {
        assert_ne!(src, dst, "local messages never enter the network");
        let mut buf = self.buffers[src * self.procs + dst].lock();
        buf.push(msg);
        (buf.len() >= self.coalesce).then(|| self.ship(src, dst, &mut buf))
    }

    /// Sends every non-empty buffer of `src`. Returns the batch sizes.
    pub fn flush_all(&self, src: ProcessId) -> Vec<usize> {
        (0..self.procs)
            .filter(|&dst| dst != src)
            .filter_map(|dst| {
                let mut buf = self.buffers[src * self.procs + dst].lock();
                (!buf.is_empty()).then(|| self.ship(src, dst, &mut buf))
            })
            .collect()
    }

    pub fn has_buffered(&self, src: ProcessId) -> bool {
        (0..self.procs).any(|dst| !self.buffers[src * self.procs + dst].lock().is_empty())
    }

    /// Next deliverable batch for `dst`, if any.
    pub fn recv(&self, dst: ProcessId) -> Option<Batch<M>> {
        let mut mb = self.mailboxes[dst].lock();
        match mb.front() {
            Some(b) if b.deliver_at.is_none_or(|t| t <= Instant::now()) => mb.pop_front(),
            _ => None,
        }
    }

    pub fn has_mail(&self, dst: ProcessId) -> bool {
        !self.mailboxes[dst].lock().is_empty()
    }

    pub fn stats(&self) -> NetStats {
        NetStats { batches: self.batches.load(Relaxed), messages: self.messages.load(Relaxed) }
    }

    /// Drops everything in flight. Returns the number of messages discarded.
    pub fn clear(&self) -> usize {
        let mut dropped = 0;
        for b in &self.buffers {
            let mut b = b.lock();
            dropped += b.len();
            b.clear();
        }
        for mb in &self.mailboxes {
            let mut mb = mb.lock();
            dropped += mb.iter().map(|b| b.messages.len()).sum::<usize>();
            mb.clear();
        }
        dropped
    }
}
