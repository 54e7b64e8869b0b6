//! Unit-capacity residual graph with negative cycle detection.
//!
//! Every original edge carries a binary flow, so exactly one of its two
//! residual arcs is usable: the forward arc (cost `+c`) while the flow is
//! zero, the backward arc (cost `-c`) once it carries flow. Pushing flow
//! around a cycle flips each traversed edge.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Costs below `-NEGATIVE_EPS` count as negative.
pub const NEGATIVE_EPS: f64 = 1e-9;

pub type NodeId = usize;
pub type EdgeId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub from: NodeId,
    pub to: NodeId,
    pub cost: f64,
    pub flow: bool,
}

impl Edge {
    /// The usable residual arc: `(tail, head, cost, forward)`.
    pub fn residual(&self) -> (NodeId, NodeId, f64, bool) {
        if self.flow {
            (self.to, self.from, -self.cost, false)
        } else {
            (self.from, self.to, self.cost, true)
        }
    }
}

/// One traversed residual arc.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arc {
    pub edge: EdgeId,
    pub forward: bool,
}

/// A closed walk of residual arcs.
#[derive(Debug, Clone, PartialEq)]
pub struct Cycle {
    pub arcs: Vec<Arc>,
    pub cost: f64,
}

#[derive(Debug, Clone, Default)]
struct Adjacency {
    out: Vec<EdgeId>,
    inc: Vec<EdgeId>,
}

#[derive(Debug, Clone, Default)]
pub struct ResidualGraph {
    nodes: Vec<Option<Adjacency>>,
    free_nodes: Vec<NodeId>,
    edges: Vec<Option<Edge>>,
    free_edges: Vec<EdgeId>,
    live_nodes: usize,
}

impl ResidualGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_node(&mut self) -> NodeId {
        self.live_nodes += 1;
        match self.free_nodes.pop() {
            Some(id) => {
                self.nodes[id] = Some(Adjacency::default());
                id
            }
            None => {
                self.nodes.push(Some(Adjacency::default()));
                self.nodes.len() - 1
            }
        }
    }

    pub fn add_edge(&mut self, from: NodeId, to: NodeId, cost: f64) -> EdgeId {
        let edge = Edge { from, to, cost, flow: false };
        let id = match self.free_edges.pop() {
            Some(id) => {
                self.edges[id] = Some(edge);
                id
            }
            None => {
                self.edges.push(Some(edge));
                self.edges.len() - 1
            }
        };
        self.adj_mut(from).out.push(id);
        self.adj_mut(to).inc.push(id);
        id
    }

    fn adj(&self, n: NodeId) -> &Adjacency {
        self.nodes[n].as_ref().expect("live node")
    }

    fn adj_mut(&mut self, n: NodeId) -> &mut Adjacency {
        self.nodes[n].as_mut().expect("live node")
    }

    pub fn contains_node(&self, n: NodeId) -> bool {
        self.nodes.get(n).is_some_and(Option::is_some)
    }

    /// Removes nodes and all incident edges. Callers are responsible for
    /// keeping the remaining flow a circulation.
    pub fn remove_nodes(&mut self, doomed: &[NodeId]) {
        let mut dead_edge = vec![false; self.edges.len()];
        let mut touched = Vec::new();
        for &n in doomed {
            let adj = self.nodes[n].take().expect("live node");
            self.live_nodes -= 1;
            self.free_nodes.push(n);
            for e in adj.out.into_iter().chain(adj.inc) {
                if !dead_edge[e] {
                    dead_edge[e] = true;
                    let edge = self.edges[e].as_ref().expect("live edge");
                    touched.push(edge.from);
                    touched.push(edge.to);
                }
            }
        }
        touched.sort_unstable();
        touched.dedup();
        for n in touched {
            if let Some(adj) = self.nodes[n].as_mut() {
                adj.out.retain(|&e| !dead_edge[e]);
                adj.inc.retain(|&e| !dead_edge[e]);
            }
        }
        for (e, dead) in dead_edge.into_iter().enumerate() {
            if dead {
                self.edges[e] = None;
                self.free_edges.push(e);
            }
        }
    }

    pub fn edge(&self, e: EdgeId) -> &Edge {
        self.edges[e].as_ref().expect("live edge")
    }

    pub fn node_count(&self) -> usize {
        self.live_nodes
    }

    /// Upper bound on node ids, for sizing scratch arrays.
    pub fn node_capacity(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().enumerate().filter(|(_, n)| n.is_some()).map(|(i, _)| i)
    }

    pub fn edges(&self) -> impl Iterator<Item = (EdgeId, &Edge)> + '_ {
        self.edges.iter().enumerate().filter_map(|(i, e)| e.as_ref().map(|e| (i, e)))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len() - self.free_edges.len()
    }

    /// Original edges leaving `n`.
    pub fn out_edges(&self, n: NodeId) -> &[EdgeId] {
        &self.adj(n).out
    }

    /// Original edges entering `n`.
    pub fn in_edges(&self, n: NodeId) -> &[EdgeId] {
        &self.adj(n).inc
    }

    /// Usable residual arcs leaving `n`: `(arc, head, cost)`.
    pub fn residual_arcs(&self, n: NodeId) -> impl Iterator<Item = (Arc, NodeId, f64)> + '_ {
        let adj = self.adj(n);
        let fwd = adj.out.iter().filter_map(move |&e| {
            let edge = self.edge(e);
            (!edge.flow).then_some((Arc { edge: e, forward: true }, edge.to, edge.cost))
        });
        let bwd = adj.inc.iter().filter_map(move |&e| {
            let edge = self.edge(e);
            edge.flow.then_some((Arc { edge: e, forward: false }, edge.from, -edge.cost))
        });
        fwd.chain(bwd)
    }

    pub fn arc_cost(&self, arc: Arc) -> f64 {
        let c = self.edge(arc.edge).cost;
        if arc.forward { c } else { -c }
    }

    pub fn arc_tail(&self, arc: Arc) -> NodeId {
        let e = self.edge(arc.edge);
        if arc.forward { e.from } else { e.to }
    }

    pub fn arc_head(&self, arc: Arc) -> NodeId {
        let e = self.edge(arc.edge);
        if arc.forward { e.to } else { e.from }
    }

    /// Total cost of the current circulation.
    pub fn flow_cost(&self) -> f64 {
        self.edges().filter(|(_, e)| e.flow).map(|(_, e)| e.cost).sum()
    }

    /// Net flow imbalance (in minus out) per node; zero everywhere for a
    /// circulation.
    pub fn imbalance(&self, n: NodeId) -> i64 {
        let adj = self.adj(n);
        let inflow = adj.inc.iter().filter(|&&e| self.edge(e).flow).count() as i64;
        let outflow = adj.out.iter().filter(|&&e| self.edge(e).flow).count() as i64;
        inflow - outflow
    }

    /// Builds a [`Cycle`] from arcs, checking it is closed and usable.
    pub fn make_cycle(&self, arcs: Vec<Arc>) -> Result<Cycle> {
        if arcs.is_empty() {
            return Err(Error::Internal("empty cycle".into()));
        }
        for (k, &arc) in arcs.iter().enumerate() {
            let next = arcs[(k + 1) % arcs.len()];
            if self.arc_head(arc) != self.arc_tail(next) {
                return Err(Error::Internal("cycle is not a closed walk".into()));
            }
            if self.edge(arc.edge).flow == arc.forward {
                return Err(Error::Internal(format!("arc on edge {} has no residual capacity", arc.edge)));
            }
        }
        let cost = arcs.iter().map(|&a| self.arc_cost(a)).sum();
        Ok(Cycle { arcs, cost })
    }

    /// Pushes one unit of flow around `cycle`, reversing each arc.
    pub fn push_flow(&mut self, cycle: &Cycle) -> Result<()> {
        for arc in &cycle.arcs {
            let edge = self.edges[arc.edge]
                .as_ref()
                .ok_or_else(|| Error::Internal(format!("edge {} no longer exists", arc.edge)))?;
            if edge.flow == arc.forward {
                return Err(Error::Internal(format!(
                    "edge {} on cycle lacks residual capacity",
                    arc.edge
                )));
            }
        }
        for arc in &cycle.arcs {
            let edge = self.edges[arc.edge].as_mut().expect("checked above");
            edge.flow = arc.forward;
        }
        Ok(())
    }

    /// Finds a negative-cost residual cycle by queue-based Bellman-Ford with
    /// every node as a source.
    ///
    /// Relaxations require an improvement of `eps / n`, so any cycle read
    /// off the predecessor graph is strictly negative, and `None` certifies
    /// that no cycle costs less than `-eps`.
    pub fn find_negative_cycle(&self, eps: f64) -> Option<Cycle> {
        let cap = self.node_capacity();
        let n = self.node_count().max(1);
        let margin = eps / n as f64;
        let mut dist = vec![0.0f64; cap];
        let mut pred: Vec<Option<Arc>> = vec![None; cap];
        let mut queued = vec![false; cap];
        let mut queue: VecDeque<NodeId> = self.nodes().collect();
        for &u in &queue {
            queued[u] = true;
        }
        let mut relaxations = 0usize;
        while let Some(u) = queue.pop_front() {
            queued[u] = false;
            for (arc, v, c) in self.residual_arcs(u) {
                let cand = dist[u] + c;
                if cand < dist[v] - margin {
                    dist[v] = cand;
                    pred[v] = Some(arc);
                    relaxations += 1;
                    if relaxations % n == 0 {
                        if let Some(cycle) = self.predecessor_cycle(&pred) {
                            return Some(cycle);
                        }
                    }
                    if !queued[v] {
                        queued[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        None
    }

    /// Extracts a cycle from the predecessor graph, if one exists.
    pub(crate) fn predecessor_cycle(&self, pred: &[Option<Arc>]) -> Option<Cycle> {
        let cap = pred.len();
        // 0 = unvisited, otherwise the walk number that first reached it
        let mut mark = vec![0usize; cap];
        for start in 0..cap {
            if mark[start] != 0 || pred[start].is_none() {
                continue;
            }
            let walk = start + 1;
            let mut v = start;
            loop {
                if mark[v] == walk {
                    return Some(self.cycle_through(pred, v));
                }
                if mark[v] != 0 {
                    break;
                }
                mark[v] = walk;
                match pred[v] {
                    Some(arc) => v = self.arc_tail(arc),
                    None => break,
                }
            }
        }
        None
    }

    fn cycle_through(&self, pred: &[Option<Arc>], on_cycle: NodeId) -> Cycle {
        let mut arcs = Vec::new();
        let mut v = on_cycle;
        loop {
            let arc = pred[v].expect("node on predecessor cycle");
            arcs.push(arc);
            v = self.arc_tail(arc);
            if v == on_cycle {
                break;
            }
        }
        arcs.reverse();
        let cost = arcs.iter().map(|&a| self.arc_cost(a)).sum();
        Cycle { arcs, cost }
    }
}
