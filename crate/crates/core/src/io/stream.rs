//! Ordered fragment ingest with a bounded reorder window.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::path::Path;

use crate::error::Result;
use crate::io::records::read_fragments;
use crate::types::Fragment;

struct ByEnd(Fragment);

impl PartialEq for ByEnd {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for ByEnd {}

impl PartialOrd for ByEnd {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ByEnd {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.t_end().total_cmp(&self.0.t_end()).then_with(|| other.0.id.cmp(&self.0.id))
    }
}

/// Buffers fragments until no admissible later arrival can precede them.
///
/// A fragment whose last timestamp is more than `window` behind the newest
/// one seen is rejected: everything up to that point may already have been
/// released.
pub struct ReorderBuffer {
    window: f64,
    newest: f64,
    heap: BinaryHeap<ByEnd>,
    rejected: Vec<String>,
    peak: usize,
}

impl ReorderBuffer {
    pub fn new(window: f64) -> Self {
        Self { window, newest: f64::NEG_INFINITY, heap: BinaryHeap::new(), rejected: Vec::new(), peak: 0 }
    }

    /// Accepts one fragment and returns those now safe to release, in
    /// order of last timestamp.
    pub fn push(&mut self, fragment: Fragment) -> Vec<Fragment> {
        let t = fragment.t_end();
        if t < self.newest - self.window {
            log::error!(
                "fragment {} ends at {t} s, {} s behind the stream; rejected",
                fragment.id,
                self.newest - t
            );
            self.rejected.push(fragment.id);
            return Vec::new();
        }
        self.newest = self.newest.max(t);
        self.heap.push(ByEnd(fragment));
        self.peak = self.peak.max(self.heap.len());
        let release = self.newest - self.window;
        let mut out = Vec::new();
        while self.heap.peek().is_some_and(|f| f.0.t_end() < release) {
            out.push(self.heap.pop().expect("peeked").0);
        }
        out
    }

    /// Releases everything still buffered.
    pub fn drain(&mut self) -> Vec<Fragment> {
        let mut out = Vec::with_capacity(self.heap.len());
        while let Some(f) = self.heap.pop() {
            out.push(f.0);
        }
        out
    }

    pub fn rejected(&self) -> &[String] {
        &self.rejected
    }

    pub fn peak_buffered(&self) -> usize {
        self.peak
    }
}

/// Fragments ordered by last timestamp, plus what the window refused.
#[derive(Debug, Clone, Default)]
pub struct Ingest {
    pub fragments: Vec<Fragment>,
    pub rejected: Vec<String>,
}

/// Orders an arrival sequence through a [`ReorderBuffer`].
pub fn reorder(arrivals: impl IntoIterator<Item = Fragment>, window: f64) -> Ingest {
    let mut buf = ReorderBuffer::new(window);
    let mut fragments = Vec::new();
    for f in arrivals {
        fragments.extend(buf.push(f));
    }
    fragments.extend(buf.drain());
    Ingest { fragments, rejected: buf.rejected().to_vec() }
}

/// Reads a fragment file in file order and releases it sorted by last
/// timestamp, tolerating jitter up to `window` seconds.
pub fn stream_ingest(path: &Path, window: f64) -> Result<Ingest> {
    Ok(reorder(read_fragments(path)?, window))
}
