use std::collections::VecDeque;
use std::sync::Arc;

use crate::association::graph::{sort_chains, Association, Chain, CirculationGraph, Tracklet};
use crate::association::residual::{Arc as ResArc, NEGATIVE_EPS};
use crate::cost::CostModelParams;
use crate::error::{Error, Result};
use crate::types::Fragment;

/// Default eviction horizon, s.
pub const DEFAULT_HORIZON: f64 = 60.0;

/// Output of one eviction sweep.
#[derive(Debug, Clone, Default)]
pub struct Eviction {
    /// Finalized chains, ordered by first timestamp.
    pub chains: Vec<Chain>,
    /// Tracklets dropped without ever being included.
    pub excluded: Vec<Arc<Tracklet>>,
}

/// Streaming associator. Tracklets must arrive in nondecreasing order of
/// their last timestamp; after each insertion the residual graph holds no
/// negative cycle.
#[derive(Debug, Clone)]
pub struct AssociationState {
    graph: CirculationGraph,
    watermark: f64,
    horizon: f64,
    /// Resident slots in insertion order, hence sorted by last timestamp.
    resident: VecDeque<usize>,
    finalized_cost: f64,
    peak_resident: usize,
    inserted: usize,
    extra_cancellations: usize,
}

impl AssociationState {
    pub fn new(params: CostModelParams, horizon: f64) -> Self {
        Self {
            graph: CirculationGraph::new(params),
            watermark: f64::NEG_INFINITY,
            horizon,
            resident: VecDeque::new(),
            finalized_cost: 0.0,
            peak_resident: 0,
            inserted: 0,
            extra_cancellations: 0,
        }
    }

    pub fn graph(&self) -> &CirculationGraph {
        &self.graph
    }

    pub fn watermark(&self) -> f64 {
        self.watermark
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn resident_count(&self) -> usize {
        self.graph.tracklet_count()
    }

    pub fn peak_resident(&self) -> usize {
        self.peak_resident
    }

    pub fn inserted(&self) -> usize {
        self.inserted
    }

    /// Times a float-noise negative cycle had to be canceled outside the
    /// insertion step. Zero in exact arithmetic.
    pub fn extra_cancellations(&self) -> usize {
        self.extra_cancellations
    }

    /// Cost of evicted chains plus the resident circulation.
    pub fn total_cost(&self) -> f64 {
        self.finalized_cost + self.graph.flow_cost()
    }

    pub fn online_add(&mut self, fragment: &Fragment) -> Result<()> {
        let tracklet = Tracklet::from_fragment(fragment, self.graph.params());
        self.add_tracklet(tracklet)
    }

    /// Inserts a tracklet, then cancels the cheapest negative cycle through
    /// its node pair, if any.
    pub fn add_tracklet(&mut self, tracklet: Tracklet) -> Result<()> {
        if tracklet.t_end < self.watermark {
            return Err(Error::WatermarkViolation {
                id: tracklet.key.clone(),
                t_end: tracklet.t_end,
                watermark: self.watermark,
            });
        }
        self.watermark = tracklet.t_end;
        let max_gap = self.graph.params().max_gap;
        let t_start = tracklet.t_start;
        let k = self.graph.add_tracklet(Arc::new(tracklet));

        // predecessors end in [t_start - max_gap, t_start)
        let lo = self
            .resident
            .partition_point(|&s| self.graph.slot(s).tracklet.t_end < t_start - max_gap - 1e-9);
        let hi = self.resident.partition_point(|&s| self.graph.slot(s).tracklet.t_end < t_start - 1e-9);
        let preds: Vec<usize> = self.resident.range(lo..hi).copied().collect();
        for i in preds {
            self.graph.link(i, k);
        }
        self.resident.push_back(k);
        self.inserted += 1;
        self.peak_resident = self.peak_resident.max(self.graph.tracklet_count());

        if let Some(cycle) = self.find_min_cycle(k)? {
            self.graph.g.push_flow(&cycle)?;
        }
        Ok(())
    }

    /// Cheapest cycle through the new pair `(u_k, v_k)`: a shortest residual
    /// path `s -> u_k` closed by `u_k -> v_k -> s`.
    fn find_min_cycle(&mut self, k: usize) -> Result<Option<crate::association::residual::Cycle>> {
        loop {
            match self.shortest_paths_to(k) {
                Ok(found) => return Ok(found),
                Err(cycle) => {
                    // the pre-insertion graph held a (float-noise) negative
                    // cycle; cancel it and search again
                    self.graph.g.push_flow(&cycle)?;
                    self.extra_cancellations += 1;
                }
            }
        }
    }

    fn shortest_paths_to(
        &self,
        k: usize,
    ) -> std::result::Result<Option<crate::association::residual::Cycle>, crate::association::residual::Cycle> {
        let g = &self.graph.g;
        let slot = self.graph.slot(k);
        let (s, uk) = (self.graph.source, slot.u);
        let cap = g.node_capacity();
        let n = g.node_count().max(1);
        let margin = NEGATIVE_EPS / n as f64;
        let mut dist = vec![f64::INFINITY; cap];
        let mut pred: Vec<Option<ResArc>> = vec![None; cap];
        let mut queued = vec![false; cap];
        let mut queue = VecDeque::from([s]);
        dist[s] = 0.0;
        queued[s] = true;
        let mut relaxations = 0usize;
        while let Some(u) = queue.pop_front() {
            queued[u] = false;
            if u == uk {
                continue;
            }
            for (arc, v, c) in g.residual_arcs(u) {
                let cand = dist[u] + c;
                if cand < dist[v] - margin {
                    dist[v] = cand;
                    pred[v] = Some(arc);
                    relaxations += 1;
                    if relaxations % n == 0 {
                        if let Some(cycle) = g.predecessor_cycle(&pred) {
                            return Err(cycle);
                        }
                    }
                    if !queued[v] {
                        queued[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }

        let close = g.edge(slot.inclusion).cost + g.edge(slot.exit).cost;
        let mut best: Option<(f64, Vec<ResArc>)> = None;
        for &e in g.in_edges(uk) {
            let edge = g.edge(e);
            if edge.flow || !dist[edge.from].is_finite() {
                continue;
            }
            let total = dist[edge.from] + edge.cost + close;
            if total >= -NEGATIVE_EPS {
                continue;
            }
            let better = match &best {
                None => true,
                Some((b, arcs)) => {
                    total < b - 1e-12 || ((total - b).abs() <= 1e-12 && self.path_keys_less(&pred, edge.from, arcs))
                }
            };
            if better {
                let mut arcs = self.path_to(&pred, edge.from);
                arcs.push(ResArc { edge: e, forward: true });
                best = Some((total, arcs));
            }
        }
        Ok(best.map(|(_, mut arcs)| {
            arcs.push(ResArc { edge: slot.inclusion, forward: true });
            arcs.push(ResArc { edge: slot.exit, forward: true });
            g.make_cycle(arcs).expect("shortest path closes into a cycle")
        }))
    }

    fn path_to(&self, pred: &[Option<ResArc>], mut v: usize) -> Vec<ResArc> {
        let g = &self.graph.g;
        let mut arcs = Vec::new();
        while v != self.graph.source {
            let arc = pred[v].expect("reached node has a predecessor");
            arcs.push(arc);
            v = g.arc_tail(arc);
        }
        arcs.reverse();
        arcs
    }

    fn path_keys_less(&self, pred: &[Option<ResArc>], tail: usize, incumbent: &[ResArc]) -> bool {
        let keys = |arcs: &[ResArc]| -> Vec<String> {
            arcs.iter().filter_map(|&a| self.graph.arc_key(a).map(str::to_owned)).collect()
        };
        keys(&self.path_to(pred, tail)) < keys(incumbent)
    }

    /// Finalizes and removes every chain whose last timestamp is older than
    /// `watermark - horizon`, and drops excluded tracklets equally old.
    pub fn evict(&mut self) -> Result<Eviction> {
        let threshold = self.watermark - self.horizon;
        if !threshold.is_finite() {
            return Ok(Eviction::default());
        }
        self.evict_before(threshold)
    }

    fn evict_before(&mut self, threshold: f64) -> Result<Eviction> {
        // cheap exit: nothing resident is old enough
        match self.resident.front() {
            Some(&s) if self.graph.slot(s).tracklet.t_end < threshold => {}
            _ => return Ok(Eviction::default()),
        }
        let mut out = Eviction::default();
        let mut doomed = Vec::new();
        for chain in self.graph.chains()? {
            if chain.t_end() < threshold {
                out.chains.push(chain);
            }
        }
        let keys_done: std::collections::HashSet<&str> =
            out.chains.iter().flat_map(|c| c.tracklets.iter().map(|t| t.key.as_str())).collect();
        for &s in &self.resident {
            let slot = self.graph.slot(s);
            let key = slot.tracklet.key.as_str();
            if keys_done.contains(key) {
                doomed.push(s);
            } else if !self.graph.is_included(s) && slot.tracklet.t_end < threshold {
                out.excluded.push(slot.tracklet.clone());
                doomed.push(s);
            }
        }
        drop(keys_done);
        self.finalized_cost += out.chains.iter().map(|c| c.cost).sum::<f64>();
        let gone: std::collections::HashSet<usize> = doomed.iter().copied().collect();
        self.resident.retain(|s| !gone.contains(s));
        self.graph.remove_slots(&doomed);
        Ok(out)
    }

    /// Finalizes everything still resident.
    pub fn flush(&mut self) -> Result<Eviction> {
        if self.resident.is_empty() {
            return Ok(Eviction::default());
        }
        self.evict_before(f64::INFINITY)
    }

    /// Drains the state into the full association (finalized chains from
    /// `evicted` plus everything resident).
    pub fn finish(mut self, mut evicted: Vec<Chain>) -> Result<Association> {
        let rest = self.flush()?;
        evicted.extend(rest.chains);
        sort_chains(&mut evicted);
        Ok(Association { cost: self.finalized_cost, chains: evicted })
    }
}

/// Runs the online associator over fragments already ordered by last
/// timestamp, evicting as it goes; returns all chains.
pub fn associate_online(fragments: &[Fragment], params: &CostModelParams, horizon: f64) -> Result<(Association, usize)> {
    let mut state = AssociationState::new(*params, horizon);
    let mut chains = Vec::new();
    for f in fragments {
        state.online_add(f)?;
        chains.extend(state.evict()?.chains);
    }
    let peak = state.peak_resident();
    Ok((state.finish(chains)?, peak))
}
