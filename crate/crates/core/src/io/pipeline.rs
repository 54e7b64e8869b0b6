//! Partitioned pipeline: per-partition online association, a master
//! stream for everything linked across a boundary, then parallel
//! rectification.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use crossbeam_channel::{bounded, unbounded, Receiver};
use serde::Serialize;

use crate::association::{sort_chains, AssociationState, Chain, Eviction};
use crate::cost::{fit_motion, transition_cost_from, CostModelParams};
use crate::error::{Error, Result};
use crate::io::config::PipelineConfig;
use crate::io::records::{write_records, write_trajectories, write_trajectories_csv, ChainRecord};
use crate::io::stream::stream_ingest;
use crate::rectify::{rectify_trajectory, RectifierConfig};
use crate::types::{Direction, Fragment, Trajectory};

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunSummary {
    pub fragments: usize,
    pub rejected: usize,
    pub partitions: usize,
    /// Fragments routed to each partition.
    pub partition_fragments: Vec<usize>,
    /// Fragments associated by the master stream.
    pub master_fragments: usize,
    pub chains: usize,
    pub excluded_fragments: usize,
    pub trajectories: usize,
    pub total_cost: f64,
    /// Largest resident tracklet count of any worker or master.
    pub peak_resident: usize,
    pub association_seconds: f64,
    pub rectification_seconds: f64,
    pub wall_seconds: f64,
}

/// Chains of one pipeline run, ordered by first timestamp then key.
#[derive(Debug, Clone, Default)]
pub struct PartitionedAssociation {
    pub chains: Vec<Chain>,
    /// Fragment ids judged false positives.
    pub excluded: Vec<String>,
    pub cost: f64,
    pub peak_resident: usize,
    pub partition_fragments: Vec<usize>,
    pub master_fragments: usize,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub association: PartitionedAssociation,
    pub trajectories: Vec<Trajectory>,
    pub summary: RunSummary,
}

/// Whether `f` comes within `margin` of an interior boundary.
fn touches_boundary(f: &Fragment, boundaries: &[f64], margin: f64) -> bool {
    let (a, b) = (f.points[0].x, f.points[f.points.len() - 1].x);
    let (lo, hi) = (a.min(b), a.max(b));
    boundaries.iter().any(|&x| lo <= x + margin && hi >= x - margin)
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Connected components of the feasible-transition graph, as a root index
/// per fragment.
fn transition_components(fragments: &[Fragment], params: &CostModelParams) -> Vec<usize> {
    let n = fragments.len();
    let mut by_start: Vec<usize> = (0..n).collect();
    by_start.sort_by(|&a, &b| fragments[a].t_start().total_cmp(&fragments[b].t_start()));
    let starts: Vec<f64> = by_start.iter().map(|&j| fragments[j].t_start()).collect();
    let mut parent: Vec<usize> = (0..n).collect();
    for (i, f) in fragments.iter().enumerate() {
        let est = fit_motion(f, params.nominal_speed);
        let lo = starts.partition_point(|&t| t <= f.t_end());
        let hi = starts.partition_point(|&t| t <= f.t_end() + params.max_gap + 1e-9);
        for &j in &by_start[lo..hi] {
            if transition_cost_from(&est, f.t_end(), &fragments[j].points, params).is_some() {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

/// Stream index for every fragment: its partition's worker, or `k` for the
/// master. A fragment goes to the master with its whole transition
/// component when any member nears a boundary or the component spans
/// partitions, so each stream holds whole components.
fn route(fragments: &[Fragment], config: &PipelineConfig) -> Vec<usize> {
    let k = config.partition_count();
    let home: Vec<usize> = fragments.iter().map(|f| config.partition_of(f.points[f.points.len() - 1].x)).collect();
    if k == 1 {
        return home;
    }
    let boundaries = config.interior_boundaries();
    let comp = transition_components(fragments, &config.cost);
    let mut owner: HashMap<usize, usize> = HashMap::new();
    for (i, f) in fragments.iter().enumerate() {
        let want = if touches_boundary(f, &boundaries, config.margin) { k } else { home[i] };
        owner
            .entry(comp[i])
            .and_modify(|o| {
                if *o != want {
                    *o = k;
                }
            })
            .or_insert(want);
    }
    comp.iter().map(|c| owner[c]).collect()
}

/// Online association of one stream.
fn run_stream(fragments: Receiver<Fragment>, config: &PipelineConfig) -> Result<(Vec<Chain>, Vec<String>, f64, usize)> {
    let mut state = AssociationState::new(config.cost, config.horizon);
    let (mut chains, mut excluded) = (Vec::new(), Vec::new());
    let mut take = |ev: Eviction| {
        chains.extend(ev.chains);
        excluded.extend(ev.excluded.into_iter().flat_map(|t| t.members.iter().cloned().collect::<Vec<_>>()));
    };
    for f in fragments {
        state.online_add(&f)?;
        take(state.evict()?);
    }
    take(state.flush()?);
    Ok((chains, excluded, state.total_cost(), state.peak_resident()))
}

/// Associates one direction's fragments (sorted by last timestamp).
///
/// Each partition's worker gets the fragments owned by it alone; the
/// master gets everything near or across a boundary. All streams run
/// concurrently. The min-cost circulation separates over transition
/// components, so with an unbounded horizon the union of streams is the
/// single-stream optimum.
fn associate_direction(fragments: &[Fragment], config: &PipelineConfig) -> Result<PartitionedAssociation> {
    let k = config.partition_count();
    let stream = route(fragments, config);
    let mut out = PartitionedAssociation { partition_fragments: vec![0; k], ..Default::default() };
    for &w in &stream {
        if w == k {
            out.master_fragments += 1;
        } else {
            out.partition_fragments[w] += 1;
        }
    }
    let streams = if k == 1 { 1 } else { k + 1 };

    std::thread::scope(|s| -> Result<()> {
        let mut routes = Vec::with_capacity(streams);
        let mut handles = Vec::with_capacity(streams);
        for _ in 0..streams {
            let (ftx, frx) = bounded::<Fragment>(1024);
            routes.push(ftx);
            handles.push(s.spawn(move || run_stream(frx, config)));
        }
        s.spawn(move || {
            for (f, &w) in fragments.iter().zip(&stream) {
                if routes[w].send(f.clone()).is_err() {
                    break;
                }
            }
        });
        for (w, h) in handles.into_iter().enumerate() {
            let (chains, excluded, cost, peak) =
                h.join().map_err(|_| Error::Pipeline(format!("association stream {w} panicked")))??;
            out.chains.extend(chains);
            out.excluded.extend(excluded);
            out.cost += cost;
            out.peak_resident = out.peak_resident.max(peak);
        }
        Ok(())
    })?;
    sort_chains(&mut out.chains);
    out.excluded.sort();
    Ok(out)
}

/// Stages 1 and 2: partitioned online association plus the master stream,
/// one run per travel direction. `fragments` must be ordered by last
/// timestamp.
pub fn associate_partitioned(fragments: &[Fragment], config: &PipelineConfig) -> Result<PartitionedAssociation> {
    config.validate()?;
    if let Some(w) = fragments.windows(2).find(|w| w[1].t_end() < w[0].t_end()) {
        return Err(Error::WatermarkViolation { id: w[1].id.clone(), t_end: w[1].t_end(), watermark: w[0].t_end() });
    }
    let mut out = PartitionedAssociation { partition_fragments: vec![0; config.partition_count()], ..Default::default() };
    for dir in [Direction::Forward, Direction::Backward] {
        let part: Vec<Fragment> = fragments.iter().filter(|f| f.direction == dir).cloned().collect();
        if part.is_empty() {
            continue;
        }
        let r = associate_direction(&part, config)?;
        out.chains.extend(r.chains);
        out.excluded.extend(r.excluded);
        out.cost += r.cost;
        out.peak_resident = out.peak_resident.max(r.peak_resident);
        out.master_fragments += r.master_fragments;
        for (a, b) in out.partition_fragments.iter_mut().zip(r.partition_fragments) {
            *a += b;
        }
    }
    sort_chains(&mut out.chains);
    out.excluded.sort();
    Ok(out)
}

/// Trajectory id for a chain.
pub fn trajectory_id(chain_key: &str) -> String {
    format!("trj-{chain_key}")
}

/// Rectification results, in job order; stops handing out work after the
/// first failure.
pub struct RectifyFailure {
    pub completed: Vec<Trajectory>,
    pub failed: String,
    pub error: Error,
}

/// Stage 3: rectifies every chain over a pool of `threads` workers.
/// Output is ordered by first timestamp, then id.
pub fn rectify_chains(
    chains: &[Vec<String>],
    fragments: &HashMap<&str, &Fragment>,
    config: &RectifierConfig,
    threads: usize,
) -> std::result::Result<Vec<Trajectory>, Box<RectifyFailure>> {
    let (jtx, jrx) = unbounded::<usize>();
    for k in 0..chains.len() {
        jtx.send(k).expect("receiver alive");
    }
    drop(jtx);
    let cancel = AtomicBool::new(false);
    let (rtx, rrx) = unbounded::<(usize, Result<Trajectory>)>();
    std::thread::scope(|s| {
        for _ in 0..threads.max(1) {
            let (jrx, rtx, cancel) = (jrx.clone(), rtx.clone(), &cancel);
            s.spawn(move || {
                for k in jrx {
                    if cancel.load(Ordering::Relaxed) {
                        break;
                    }
                    let members = &chains[k];
                    let result = members
                        .iter()
                        .map(|m| {
                            fragments
                                .get(m.as_str())
                                .copied()
                                .ok_or_else(|| Error::Pipeline(format!("chain references unknown fragment {m}")))
                        })
                        .collect::<Result<Vec<&Fragment>>>()
                        .and_then(|fs| rectify_trajectory(trajectory_id(&members[0]), &fs, config));
                    if result.is_err() {
                        cancel.store(true, Ordering::Relaxed);
                    }
                    let _ = rtx.send((k, result));
                }
            });
        }
    });
    drop(rtx);
    let mut done = Vec::new();
    let mut failure: Option<(usize, Error)> = None;
    for (k, r) in rrx {
        match r {
            Ok(t) => done.push(t),
            Err(e) => {
                if failure.as_ref().is_none_or(|(j, _)| k < *j) {
                    failure = Some((k, e));
                }
            }
        }
    }
    sort_trajectories(&mut done);
    match failure {
        None => Ok(done),
        Some((k, error)) => Err(Box::new(RectifyFailure { completed: done, failed: trajectory_id(&chains[k][0]), error })),
    }
}

pub fn sort_trajectories(trajectories: &mut [Trajectory]) {
    trajectories.sort_by(|a, b| a.t_start().total_cmp(&b.t_start()).then_with(|| a.id.cmp(&b.id)));
}

/// All three stages on in-memory fragments ordered by last timestamp.
/// On a rectification failure the completed trajectories are returned
/// inside the error's manifest.
pub fn run_fragments(fragments: &[Fragment], config: &PipelineConfig) -> Result<PipelineOutput> {
    run_inner(fragments, config, 0).map_err(|(e, _)| e)
}

fn run_inner(
    fragments: &[Fragment],
    config: &PipelineConfig,
    rejected: usize,
) -> std::result::Result<PipelineOutput, (Error, Option<Box<RectifyFailure>>)> {
    let start = Instant::now();
    let association = associate_partitioned(fragments, config).map_err(|e| (e, None))?;
    let association_seconds = start.elapsed().as_secs_f64();
    let by_id: HashMap<&str, &Fragment> = fragments.iter().map(|f| (f.id.as_str(), f)).collect();
    let members: Vec<Vec<String>> = association.chains.iter().map(Chain::members).collect();
    let t1 = Instant::now();
    let trajectories = match rectify_chains(&members, &by_id, &config.rectifier, config.workers) {
        Ok(t) => t,
        Err(f) => {
            let e = Error::Pipeline(format!("rectifying {} failed: {}", f.failed, f.error));
            return Err((e, Some(f)));
        }
    };
    let summary = RunSummary {
        fragments: fragments.len() + rejected,
        rejected,
        partitions: config.partition_count(),
        partition_fragments: association.partition_fragments.clone(),
        master_fragments: association.master_fragments,
        chains: association.chains.len(),
        excluded_fragments: association.excluded.len(),
        trajectories: trajectories.len(),
        total_cost: association.cost,
        peak_resident: association.peak_resident,
        association_seconds,
        rectification_seconds: t1.elapsed().as_secs_f64(),
        wall_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(PipelineOutput { association, trajectories, summary })
}

/// Written next to the output when a run aborts.
#[derive(Debug, Clone, Serialize)]
pub struct AbortManifest {
    pub status: &'static str,
    pub error: String,
    pub failed: Option<String>,
    pub output: Option<PathBuf>,
    pub completed: usize,
    pub completed_ids: Vec<String>,
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Runs the pipeline from `config.input` and writes the configured
/// outputs. On failure, completed trajectories go to the output file and
/// an abort manifest is written beside it.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let input = config.input.as_deref().ok_or_else(|| Error::Config("no input path".into()))?;
    let ingest = stream_ingest(input, config.reorder_window)?;
    match run_inner(&ingest.fragments, config, ingest.rejected.len()) {
        Ok(out) => {
            if let Some(p) = &config.output {
                write_trajectories(p, &out.trajectories)?;
            }
            if let Some(p) = &config.csv {
                write_trajectories_csv(p, &out.trajectories)?;
            }
            if let Some(p) = &config.chains {
                write_records(p, out.association.chains.iter().map(ChainRecord::from_chain))?;
            }
            if let Some(p) = &config.summary {
                write_json(p, &out.summary)?;
            }
            Ok(out)
        }
        Err((error, failure)) => {
            let completed = failure.as_ref().map_or(&[][..], |f| &f.completed[..]);
            if let Some(p) = &config.output {
                write_trajectories(p, completed)?;
                let manifest = AbortManifest {
                    status: "aborted",
                    error: error.to_string(),
                    failed: failure.as_ref().map(|f| f.failed.clone()),
                    output: Some(p.clone()),
                    completed: completed.len(),
                    completed_ids: completed.iter().map(|t| t.id.clone()).collect(),
                };
                write_json(&manifest_path(p), &manifest)?;
            }
            Err(error)
        }
    }
}

/// Chains as shared fragment-id lists, for comparisons across runs.
pub fn chain_sets(chains: &[Chain]) -> Vec<Vec<String>> {
    let mut v: Vec<Vec<String>> = chains.iter().map(Chain::members).collect();
    v.sort();
    v
}
