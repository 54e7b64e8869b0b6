//! Fragment association as a min-cost circulation.

pub mod graph;
pub mod online;
pub mod residual;

pub use graph::{construct_graph, flow_to_trajectories, ncc_batch, sort_chains, Association, Chain, CirculationGraph, Tracklet};
pub use online::{associate_online, AssociationState, Eviction, DEFAULT_HORIZON};
pub use residual::{Cycle, ResidualGraph, NEGATIVE_EPS};
