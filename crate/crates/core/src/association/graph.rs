use std::sync::Arc;

use crate::association::residual::{Arc as ResArc, EdgeId, NodeId, ResidualGraph, NEGATIVE_EPS};
use crate::cost::{fit_motion, node_costs, CostModelParams, MotionEstimate};
use crate::error::{Error, Result};
use crate::types::{Fragment, Point};

/// The unit the circulation graph links: a fragment, or (in the second
/// association pass) an already-linked chain of fragments.
#[derive(Debug, Clone, PartialEq)]
pub struct Tracklet {
    /// Tie-breaking key; the first member fragment id.
    pub key: String,
    /// Member fragment ids in time order.
    pub members: Vec<String>,
    pub t_start: f64,
    pub t_end: f64,
    /// Points scored when this tracklet is the successor of a transition.
    pub head: Arc<[Point]>,
    /// Motion model used when this tracklet is the predecessor.
    pub tail: MotionEstimate,
    /// Cost of the inclusion edge.
    pub inclusion: f64,
}

impl Tracklet {
    pub fn from_fragment(fragment: &Fragment, params: &CostModelParams) -> Self {
        Self {
            key: fragment.id.clone(),
            members: vec![fragment.id.clone()],
            t_start: fragment.t_start(),
            t_end: fragment.t_end(),
            head: fragment.points.clone().into(),
            tail: fit_motion(fragment, params.nominal_speed),
            inclusion: node_costs(params).inclusion,
        }
    }

    /// Merges a chain into one tracklet whose inclusion cost is the chain's
    /// internal cost (everything but entry and exit).
    pub fn from_chain(chain: &Chain, params: &CostModelParams) -> Self {
        let first = &chain.tracklets[0];
        let last = &chain.tracklets[chain.tracklets.len() - 1];
        let nc = node_costs(params);
        let inclusion = if chain.included { chain.cost - nc.entry - nc.exit } else { first.inclusion };
        Self {
            key: first.key.clone(),
            members: chain.members(),
            t_start: first.t_start,
            t_end: last.t_end,
            head: first.head.clone(),
            tail: last.tail,
            inclusion,
        }
    }

    pub fn transition_cost_to(&self, next: &Tracklet, params: &CostModelParams) -> Option<f64> {
        let gap = next.t_start - self.t_end;
        if gap <= 1e-9 || gap > params.max_gap + 1e-9 {
            return None;
        }
        let c = params.cone_cost(&self.tail, self.t_end, &next.head);
        (c <= params.transition_cap()).then_some(c)
    }
}

/// An ordered run of linked tracklets.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub tracklets: Vec<Arc<Tracklet>>,
    /// Sum of the costs of all edges on this chain's cycle through the
    /// source; for an excluded tracklet, zero.
    pub cost: f64,
    /// False for a tracklet the circulation left out (judged a false
    /// positive).
    pub included: bool,
}

impl Chain {
    pub fn members(&self) -> Vec<String> {
        self.tracklets.iter().flat_map(|t| t.members.iter().cloned()).collect()
    }

    pub fn t_start(&self) -> f64 {
        self.tracklets[0].t_start
    }

    pub fn t_end(&self) -> f64 {
        self.tracklets[self.tracklets.len() - 1].t_end
    }

    pub fn key(&self) -> &str {
        &self.tracklets[0].key
    }
}

/// Orders chains by first timestamp, then by key.
pub fn sort_chains(chains: &mut [Chain]) {
    chains.sort_by(|a, b| a.t_start().total_cmp(&b.t_start()).then_with(|| a.key().cmp(b.key())));
}

#[derive(Debug, Clone)]
pub(crate) struct Slot {
    pub tracklet: Arc<Tracklet>,
    pub u: NodeId,
    pub v: NodeId,
    pub inclusion: EdgeId,
    pub exit: EdgeId,
}

/// Tracklet circulation graph: a source `s`, one `u -> v` inclusion edge per
/// tracklet, entry edges `s -> u`, exit edges `v -> s`, and transition edges
/// `v_i -> u_j`. The stored flow makes it double as its residual graph.
#[derive(Debug, Clone)]
pub struct CirculationGraph {
    pub(crate) g: ResidualGraph,
    pub(crate) source: NodeId,
    pub(crate) slots: Vec<Option<Slot>>,
    free_slots: Vec<usize>,
    /// Slot owning each node id.
    owner: Vec<Option<usize>>,
    pub(crate) params: CostModelParams,
    entry_cost: f64,
    exit_cost: f64,
}

impl CirculationGraph {
    pub fn new(params: CostModelParams) -> Self {
        let mut g = ResidualGraph::new();
        let source = g.add_node();
        let nc = node_costs(&params);
        Self {
            g,
            source,
            slots: Vec::new(),
            free_slots: Vec::new(),
            owner: vec![None],
            params,
            entry_cost: nc.entry,
            exit_cost: nc.exit,
        }
    }

    pub fn residual(&self) -> &ResidualGraph {
        &self.g
    }

    pub fn source(&self) -> NodeId {
        self.source
    }

    pub fn node_count(&self) -> usize {
        self.g.node_count()
    }

    pub fn edge_count(&self) -> usize {
        self.g.edge_count()
    }

    pub fn tracklet_count(&self) -> usize {
        self.slots.len() - self.free_slots.len()
    }

    pub fn flow_cost(&self) -> f64 {
        self.g.flow_cost()
    }

    pub fn params(&self) -> &CostModelParams {
        &self.params
    }

    fn set_owner(&mut self, node: NodeId, slot: usize) {
        if self.owner.len() <= node {
            self.owner.resize(node + 1, None);
        }
        self.owner[node] = Some(slot);
    }

    /// Adds `u`, `v` and the entry, inclusion and exit edges.
    pub(crate) fn add_tracklet(&mut self, tracklet: Arc<Tracklet>) -> usize {
        let u = self.g.add_node();
        let v = self.g.add_node();
        self.g.add_edge(self.source, u, self.entry_cost);
        let inclusion = self.g.add_edge(u, v, tracklet.inclusion);
        let exit = self.g.add_edge(v, self.source, self.exit_cost);
        let slot = Slot { tracklet, u, v, inclusion, exit };
        let id = match self.free_slots.pop() {
            Some(id) => {
                self.slots[id] = Some(slot);
                id
            }
            None => {
                self.slots.push(Some(slot));
                self.slots.len() - 1
            }
        };
        self.set_owner(u, id);
        self.set_owner(v, id);
        id
    }

    pub(crate) fn slot(&self, id: usize) -> &Slot {
        self.slots[id].as_ref().expect("live slot")
    }

    pub(crate) fn live_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots.iter().enumerate().filter(|(_, s)| s.is_some()).map(|(i, _)| i)
    }

    pub(crate) fn add_transition(&mut self, from: usize, to: usize, cost: f64) -> EdgeId {
        let v = self.slot(from).v;
        let u = self.slot(to).u;
        self.g.add_edge(v, u, cost)
    }

    /// Adds the transition edge `from -> to` if the pair is linkable.
    pub(crate) fn link(&mut self, from: usize, to: usize) -> Option<EdgeId> {
        let cost = self.slot(from).tracklet.transition_cost_to(&self.slot(to).tracklet, &self.params)?;
        Some(self.add_transition(from, to, cost))
    }

    pub(crate) fn remove_slots(&mut self, ids: &[usize]) {
        let mut nodes = Vec::with_capacity(ids.len() * 2);
        for &id in ids {
            let slot = self.slots[id].take().expect("live slot");
            self.owner[slot.u] = None;
            self.owner[slot.v] = None;
            nodes.push(slot.u);
            nodes.push(slot.v);
            self.free_slots.push(id);
        }
        self.g.remove_nodes(&nodes);
    }

    pub(crate) fn is_included(&self, id: usize) -> bool {
        self.g.edge(self.slot(id).inclusion).flow
    }

    /// Cancels negative cycles until none cheaper than `-NEGATIVE_EPS`
    /// remain. Returns the number of cycles canceled.
    pub fn cancel_negative_cycles(&mut self) -> Result<usize> {
        let mut canceled = 0;
        while let Some(cycle) = self.g.find_negative_cycle(NEGATIVE_EPS) {
            self.g.push_flow(&cycle)?;
            canceled += 1;
        }
        Ok(canceled)
    }

    /// Traces every unit of circulation through the source into a chain.
    pub fn chains(&self) -> Result<Vec<Chain>> {
        let mut chains = Vec::new();
        for &e in self.g.out_edges(self.source) {
            let entry = self.g.edge(e);
            if !entry.flow {
                continue;
            }
            chains.push(self.trace_from(entry.to, entry.cost)?);
        }
        sort_chains(&mut chains);
        Ok(chains)
    }

    /// Follows flow from `u` (entered with `entry_cost`) back to the source.
    fn trace_from(&self, mut u: NodeId, entry_cost: f64) -> Result<Chain> {
        let mut tracklets = Vec::new();
        let mut cost = entry_cost;
        let limit = self.tracklet_count() + 1;
        loop {
            let slot_id = self.owner[u].ok_or_else(|| Error::Internal("flow enters the source twice".into()))?;
            let slot = self.slot(slot_id);
            if slot.u != u || !self.g.edge(slot.inclusion).flow {
                return Err(Error::Internal(format!("flow into {} skips its inclusion edge", slot.tracklet.key)));
            }
            cost += self.g.edge(slot.inclusion).cost;
            tracklets.push(slot.tracklet.clone());
            if tracklets.len() > limit {
                return Err(Error::Internal("flow trace does not return to the source".into()));
            }
            let mut next = None;
            for &e in self.g.out_edges(slot.v) {
                let edge = self.g.edge(e);
                if edge.flow {
                    if next.is_some() {
                        return Err(Error::Internal("more than one unit of flow leaves a node".into()));
                    }
                    next = Some(edge);
                }
            }
            let edge = next.ok_or_else(|| Error::Internal(format!("flow stops at {}", slot.tracklet.key)))?;
            cost += edge.cost;
            if edge.to == self.source {
                return Ok(Chain { tracklets, cost, included: true });
            }
            u = edge.to;
        }
    }

    /// Tracklets left out of the circulation.
    pub fn excluded(&self) -> Vec<Arc<Tracklet>> {
        self.live_slots()
            .filter(|&id| !self.is_included(id))
            .map(|id| self.slot(id).tracklet.clone())
            .collect()
    }

    pub(crate) fn arc_key(&self, arc: ResArc) -> Option<&str> {
        let node = self.g.arc_head(arc);
        self.owner.get(node).copied().flatten().map(|s| self.slot(s).tracklet.key.as_str())
    }
}

/// Builds the circulation graph over `fragments`, with transition edges for
/// every linkable ordered pair.
pub fn construct_graph(fragments: &[Fragment], params: &CostModelParams) -> CirculationGraph {
    let tracklets: Vec<_> = fragments.iter().map(|f| Tracklet::from_fragment(f, params)).collect();
    construct_from_tracklets(tracklets, params)
}

pub(crate) fn construct_from_tracklets(tracklets: Vec<Tracklet>, params: &CostModelParams) -> CirculationGraph {
    let mut graph = CirculationGraph::new(*params);
    let ids: Vec<_> = tracklets.into_iter().map(|t| graph.add_tracklet(Arc::new(t))).collect();
    // candidate successors by start time
    let mut by_start = ids.clone();
    by_start.sort_by(|&a, &b| graph.slot(a).tracklet.t_start.total_cmp(&graph.slot(b).tracklet.t_start));
    let starts: Vec<f64> = by_start.iter().map(|&s| graph.slot(s).tracklet.t_start).collect();
    for &i in &ids {
        let t_end = graph.slot(i).tracklet.t_end;
        let lo = starts.partition_point(|&t| t <= t_end);
        let hi = starts.partition_point(|&t| t <= t_end + params.max_gap + 1e-9);
        for &j in &by_start[lo..hi] {
            if j != i {
                graph.link(i, j);
            }
        }
    }
    graph
}

/// Ordered fragment-id chains carried by the circulation.
pub fn flow_to_trajectories(graph: &CirculationGraph) -> Result<Vec<Vec<String>>> {
    Ok(graph.chains()?.iter().map(Chain::members).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Association {
    pub chains: Vec<Chain>,
    /// Total circulation cost.
    pub cost: f64,
}

impl Association {
    pub fn member_chains(&self) -> Vec<Vec<String>> {
        self.chains.iter().map(Chain::members).collect()
    }
}

/// Batch negative cycle canceling: build the graph, cancel negative cycles
/// until none remain, read off the chains.
pub fn ncc_batch(fragments: &[Fragment], params: &CostModelParams) -> Result<Association> {
    let mut graph = construct_graph(fragments, params);
    graph.cancel_negative_cycles()?;
    Ok(Association { chains: graph.chains()?, cost: graph.flow_cost() })
}

#[cfg(test)]
pub(crate) fn ncc_batch_tracklets(tracklets: Vec<Tracklet>, params: &CostModelParams) -> Result<(CirculationGraph, Association)> {
    let mut graph = construct_from_tracklets(tracklets, params);
    graph.cancel_negative_cycles()?;
    let assoc = Association { chains: graph.chains()?, cost: graph.flow_cost() };
    Ok((graph, assoc))
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::types::Direction;

    pub(crate) fn params() -> CostModelParams {
        CostModelParams { alpha: 4.0, beta: 2.0, p_enter: 0.2, p_exit: 0.2, fp_prob: 0.02, ..CostModelParams::default() }
    }

    pub(crate) fn line(id: &str, t0: f64, t1: f64, x0: f64, v: f64, y: f64) -> Fragment {
        let n = ((t1 - t0) / 0.04).round() as usize + 1;
        let points = (0..n)
            .map(|k| {
                let t = t0 + k as f64 * 0.04;
                Point::new(t, x0 + v * (t - t0), y)
            })
            .collect();
        Fragment::new(id, points, 15.0, 6.0, Direction::Forward).unwrap()
    }

    /// Two vehicles, each seen as two fragments with a gap in between.
    pub(crate) fn two_vehicles() -> Vec<Fragment> {
        vec![
            line("f1", 0.0, 2.0, 0.0, 60.0, 6.0),
            line("f2", 0.4, 2.4, 20.0, 50.0, 18.0),
            line("f3", 3.0, 5.0, 180.0, 60.0, 6.0),
            line("f4", 3.4, 5.4, 170.0, 50.0, 18.0),
        ]
    }

    #[test]
    fn empty_graph_has_only_source() {
        let g = construct_graph(&[], &params());
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edge_count(), 0);
        assert!(flow_to_trajectories(&g).unwrap().is_empty());
    }

    #[test]
    fn single_fragment_graph() {
        let g = construct_graph(&two_vehicles()[..1], &params());
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 3);
    }

    #[test]
    fn transitions_only_for_ordered_pairs() {
        let frags = two_vehicles();
        let g = construct_graph(&frags, &params());
        assert_eq!(g.node_count(), 9);
        let mut pairs = Vec::new();
        for (_, edge) in g.residual().edges() {
            let (Some(a), Some(b)) = (g.owner[edge.from], g.owner[edge.to]) else { continue };
            if a != b {
                let ta = &g.slot(a).tracklet;
                let tb = &g.slot(b).tracklet;
                assert!(tb.t_start > ta.t_end);
                pairs.push((ta.key.clone(), tb.key.clone()));
            }
        }
        pairs.sort();
        // f2 -> f3 is temporally ordered but too far off to be linkable
        let keys: Vec<_> = pairs.iter().map(|(a, b)| format!("{a}{b}")).collect();
        assert!(keys.contains(&"f1f3".to_string()));
        assert!(keys.contains(&"f2f4".to_string()));
        assert!(!keys.iter().any(|k| k == "f3f1" || k == "f4f2"));
    }

    #[test]
    fn batch_recovers_both_vehicles() {
        let assoc = ncc_batch(&two_vehicles(), &params()).unwrap();
        assert_eq!(assoc.member_chains(), vec![vec!["f1", "f3"], vec!["f2", "f4"]]);
        assert!((assoc.cost - assoc.chains.iter().map(|c| c.cost).sum::<f64>()).abs() < 1e-12);
    }

    #[test]
    fn batch_cost_ignores_input_order() {
        let mut frags = two_vehicles();
        let a = ncc_batch(&frags, &params()).unwrap();
        frags.reverse();
        let b = ncc_batch(&frags, &params()).unwrap();
        assert!((a.cost - b.cost).abs() < 1e-12);
        assert_eq!(a.member_chains(), b.member_chains());
    }

    #[test]
    fn solved_flow_is_conserved() {
        let mut g = construct_graph(&two_vehicles(), &params());
        g.cancel_negative_cycles().unwrap();
        for n in g.residual().nodes() {
            assert_eq!(g.residual().imbalance(n), 0);
        }
        assert!(g.residual().find_negative_cycle(NEGATIVE_EPS).is_none());
    }

    #[test]
    fn costly_fragment_is_excluded() {
        let p = CostModelParams { fp_prob: 0.4, ..params() };
        let assoc = ncc_batch(&two_vehicles()[..1], &p).unwrap();
        assert!(assoc.chains.is_empty());
        assert_eq!(assoc.cost, 0.0);
    }

    #[test]
    fn chain_becomes_super_tracklet() {
        let p = params();
        let assoc = ncc_batch(&two_vehicles(), &p).unwrap();
        let t = Tracklet::from_chain(&assoc.chains[0], &p);
        let nc = node_costs(&p);
        assert_eq!(t.members, vec!["f1", "f3"]);
        assert!((t.inclusion + nc.entry + nc.exit - assoc.chains[0].cost).abs() < 1e-12);
        let (_, merged) = ncc_batch_tracklets(vec![t], &p).unwrap();
        assert!((merged.cost - assoc.chains[0].cost).abs() < 1e-12);
    }
}
