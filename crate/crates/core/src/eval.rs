//! CLEAR-MOT scoring under footprint-IOU matching, and kinematic
//! statistics of trajectory sets.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Direction, Fragment, Trajectory, DEFAULT_DT};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.3;

/// Position track seen by the evaluator: either a raw fragment or a
/// rectified trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: Arc<str>,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub length: f64,
    pub width: f64,
    pub direction: Direction,
}

impl From<&Fragment> for Track {
    fn from(f: &Fragment) -> Self {
        Self {
            id: f.id.as_str().into(),
            t: f.points.iter().map(|p| p.t).collect(),
            x: f.points.iter().map(|p| p.x).collect(),
            y: f.points.iter().map(|p| p.y).collect(),
            length: f.length,
            width: f.width,
            direction: f.direction,
        }
    }
}

impl From<&Trajectory> for Track {
    fn from(tr: &Trajectory) -> Self {
        Self {
            id: tr.id.as_str().into(),
            t: tr.t.clone(),
            x: tr.x.clone(),
            y: tr.y.clone(),
            length: tr.length,
            width: tr.width,
            direction: tr.direction,
        }
    }
}

pub fn tracks<'a, T: 'a>(items: impl IntoIterator<Item = &'a T>) -> Vec<Track>
where
    Track: From<&'a T>,
{
    items.into_iter().map(Track::from).collect()
}

/// Axis-aligned footprint in roadway coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self { x0: x0.min(x1), x1: x0.max(x1), y0: y0.min(y1), y1: y0.max(y1) }
    }

    /// `x` is the rear bumper; the body extends `length` along the travel
    /// direction and is centered laterally on `y`.
    pub fn footprint(x: f64, y: f64, length: f64, width: f64, direction: Direction) -> Self {
        Self::new(x, x + length * direction.sign(), y - width / 2.0, y + width / 2.0)
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

pub fn footprint_iou(a: &Rect, b: &Rect) -> f64 {
    let w = (a.x1.min(b.x1) - a.x0.max(b.x0)).max(0.0);
    let h = (a.y1.min(b.y1) - a.y0.max(b.y0)).max(0.0);
    let inter = w * h;
    if inter <= 0.0 {
        return 0.0;
    }
    (inter / (a.area() + b.area() - inter)).min(1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatch {
    pub frame: i64,
    pub t: f64,
    /// `(gt id, pred id, IOU)`
    pub matched: Vec<(Arc<str>, Arc<str>, f64)>,
    pub unmatched_gt: Vec<Arc<str>>,
    pub unmatched_pred: Vec<Arc<str>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    pub iou_threshold: f64,
    pub dt: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self { iou_threshold: DEFAULT_IOU_THRESHOLD, dt: DEFAULT_DT }
    }
}

/// Minimum-cost assignment of every row to a distinct column
/// (`rows <= cols`). Returns the column of each row.
pub fn hungarian(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let m = cost[0].len();
    assert!(n <= m, "more rows than columns");
    // potentials and the column-to-row map are 1-based; index 0 is a sentinel
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=m {
        if owner[j] != 0 {
            out[owner[j] - 1] = j - 1;
        }
    }
    out
}

/// Maximum-total-IOU matching between `rows` and `cols` restricted to the
/// candidate `edges`; returns matched `(row, col, iou)`.
fn best_matching(rows: &[usize], cols: &[usize], edges: &HashMap<(usize, usize), f64>) -> Vec<(usize, usize, f64)> {
    let transpose = rows.len() > cols.len();
    let (a, b) = if transpose { (cols, rows) } else { (rows, cols) };
    let weight = |i: usize, j: usize| {
        let key = if transpose { (b[j], a[i]) } else { (a[i], b[j]) };
        edges.get(&key).copied()
    };
    let cost: Vec<Vec<f64>> = (0..a.len()).map(|i| (0..b.len()).map(|j| -weight(i, j).unwrap_or(0.0)).collect()).collect();
    hungarian(&cost)
        .into_iter()
        .enumerate()
        .filter_map(|(i, j)| {
            let w = weight(i, j)?;
            Some(if transpose { (b[j], a[i], w) } else { (a[i], b[j], w) })
        })
        .collect()
}

struct Entry {
    track: usize,
    rect: Rect,
}

#[derive(Default)]
struct FrameBucket {
    t: f64,
    gt: Vec<Entry>,
    pred: Vec<Entry>,
}

fn bucket(frames: &mut BTreeMap<i64, FrameBucket>, tracks: &[Track], dt: f64, gt: bool) {
    for (k, tr) in tracks.iter().enumerate() {
        for i in 0..tr.t.len() {
            let frame = (tr.t[i] / dt).round() as i64;
            let b = frames.entry(frame).or_default();
            b.t = frame as f64 * dt;
            let e = Entry { track: k, rect: Rect::footprint(tr.x[i], tr.y[i], tr.length, tr.width, tr.direction) };
            if gt { b.gt.push(e) } else { b.pred.push(e) }
        }
    }
}

/// Candidate pairs `(gt entry, pred entry) -> IOU` at or above threshold.
fn candidates(b: &FrameBucket, threshold: f64) -> HashMap<(usize, usize), f64> {
    let mut order: Vec<usize> = (0..b.pred.len()).collect();
    order.sort_by(|&i, &j| b.pred[i].rect.x0.total_cmp(&b.pred[j].rect.x0));
    let starts: Vec<f64> = order.iter().map(|&i| b.pred[i].rect.x0).collect();
    let longest = b.pred.iter().map(|e| e.rect.x1 - e.rect.x0).fold(0.0, f64::max);
    let mut out = HashMap::new();
    for (gi, g) in b.gt.iter().enumerate() {
        let begin = starts.partition_point(|&s| s <= g.rect.x0 - longest);
        let end = starts.partition_point(|&s| s < g.rect.x1);
        for &pi in &order[begin..end.max(begin)] {
            let p = &b.pred[pi];
            if p.rect.x1 <= g.rect.x0 {
                continue;
            }
            let iou = footprint_iou(&g.rect, &p.rect);
            if iou >= threshold {
                out.insert((gi, pi), iou);
            }
        }
    }
    out
}

/// Per-frame one-to-one matching. A pair matched in the previous frame is
/// kept while its IOU stays above threshold; the rest are assigned by
/// maximum-total-IOU bipartite matching. Frames are keyed by `round(t/dt)`.
pub fn match_frames(gt: &[Track], pred: &[Track], config: &MatchConfig) -> Vec<FrameMatch> {
    let mut frames: BTreeMap<i64, FrameBucket> = BTreeMap::new();
    bucket(&mut frames, gt, config.dt, true);
    bucket(&mut frames, pred, config.dt, false);
    let mut previous: HashMap<usize, usize> = HashMap::new();
    let mut last_frame = None;
    let mut out = Vec::with_capacity(frames.len());
    for (frame, b) in frames {
        if last_frame != Some(frame - 1) {
            previous.clear();
        }
        last_frame = Some(frame);
        let edges = candidates(&b, config.iou_threshold);
        let mut gt_taken = vec![false; b.gt.len()];
        let mut pred_taken = vec![false; b.pred.len()];
        let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
        let pred_at: HashMap<usize, usize> = b.pred.iter().enumerate().map(|(i, e)| (e.track, i)).collect();
        for (gi, g) in b.gt.iter().enumerate() {
            let Some(&pt) = previous.get(&g.track) else { continue };
            let Some(&pi) = pred_at.get(&pt) else { continue };
            if let Some(&iou) = edges.get(&(gi, pi)) {
                if !pred_taken[pi] {
                    gt_taken[gi] = true;
                    pred_taken[pi] = true;
                    pairs.push((gi, pi, iou));
                }
            }
        }
        // connected components of the remaining candidate graph
        let free: HashMap<(usize, usize), f64> =
            edges.iter().filter(|((g, p), _)| !gt_taken[*g] && !pred_taken[*p]).map(|(k, v)| (*k, *v)).collect();
        let mut adj_g: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut adj_p: HashMap<usize, Vec<usize>> = HashMap::new();
        for &(g, p) in free.keys() {
            adj_g.entry(g).or_default().push(p);
            adj_p.entry(p).or_default().push(g);
        }
        let mut seen_g: Vec<bool> = vec![false; b.gt.len()];
        let mut seeds: Vec<usize> = adj_g.keys().copied().collect();
        seeds.sort_by(|&a, &c| gt[b.gt[a].track].id.cmp(&gt[b.gt[c].track].id));
        for seed in seeds {
            if seen_g[seed] {
                continue;
            }
            let (mut rows, mut cols) = (Vec::new(), Vec::new());
            let mut seen_p: Vec<usize> = Vec::new();
            let mut stack = vec![seed];
            seen_g[seed] = true;
            while let Some(g) = stack.pop() {
                rows.push(g);
                for &p in &adj_g[&g] {
                    if !seen_p.contains(&p) {
                        seen_p.push(p);
                        cols.push(p);
                        for &g2 in &adj_p[&p] {
                            if !seen_g[g2] {
                                seen_g[g2] = true;
                                stack.push(g2);
                            }
                        }
                    }
                }
            }
            rows.sort_by(|&a, &c| gt[b.gt[a].track].id.cmp(&gt[b.gt[c].track].id));
            cols.sort_by(|&a, &c| pred[b.pred[a].track].id.cmp(&pred[b.pred[c].track].id));
            for (g, p, iou) in best_matching(&rows, &cols, &free) {
                gt_taken[g] = true;
                pred_taken[p] = true;
                pairs.push((g, p, iou));
            }
        }
        previous = pairs.iter().map(|&(g, p, _)| (b.gt[g].track, b.pred[p].track)).collect();
        let mut matched: Vec<(Arc<str>, Arc<str>, f64)> = pairs
            .iter()
            .map(|&(g, p, iou)| (gt[b.gt[g].track].id.clone(), pred[b.pred[p].track].id.clone(), iou))
            .collect();
        matched.sort_by(|a, c| a.0.cmp(&c.0));
        let mut unmatched_gt: Vec<Arc<str>> =
            b.gt.iter().zip(&gt_taken).filter(|(_, t)| !**t).map(|(e, _)| gt[e.track].id.clone()).collect();
        let mut unmatched_pred: Vec<Arc<str>> =
            b.pred.iter().zip(&pred_taken).filter(|(_, t)| !**t).map(|(e, _)| pred[e.track].id.clone()).collect();
        unmatched_gt.sort();
        unmatched_pred.sort();
        out.push(FrameMatch { frame, t: b.t, matched, unmatched_gt, unmatched_pred });
    }
    out
}

/// min / max / mean / population stdev. All zero when empty.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub stdev: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            count: values.len(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            stdev: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// `bins` equal-width bins over `[lo, hi]`; values outside are clamped
    /// into the end bins.
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let bins = bins.max(1);
        let w = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + w * i as f64).collect();
        let mut counts = vec![0; bins];
        for &v in values {
            let k = if w > 0.0 { ((v - lo) / w).floor() } else { 0.0 };
            counts[k.clamp(0.0, (bins - 1) as f64) as usize] += 1;
        }
        Self { edges, counts }
    }
}

/// Distributions of trajectory length and finite-difference speed and
/// acceleration, signed along the travel direction.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Kinematics {
    /// Longitudinal extent of each track, ft.
    pub length: Stats,
    pub speed: Stats,
    pub accel: Stats,
}

pub fn kinematic_samples(tracks: &[Track]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (mut len, mut speed, mut accel) = (Vec::new(), Vec::new(), Vec::new());
    for tr in tracks {
        if tr.t.is_empty() {
            continue;
        }
        let s = tr.direction.sign();
        len.push((tr.x[tr.x.len() - 1] - tr.x[0]).abs());
        let v: Vec<f64> = (1..tr.t.len()).map(|i| s * (tr.x[i] - tr.x[i - 1]) / (tr.t[i] - tr.t[i - 1])).collect();
        for i in 1..v.len() {
            accel.push((v[i] - v[i - 1]) / ((tr.t[i + 1] - tr.t[i - 1]) / 2.0));
        }
        speed.extend(v);
    }
    (len, speed, accel)
}

pub fn kinematic_stats(tracks: &[Track]) -> Kinematics {
    let (len, speed, accel) = kinematic_samples(tracks);
    Kinematics { length: Stats::of(&len), speed: Stats::of(&speed), accel: Stats::of(&accel) }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub mota: f64,
    /// Mean IOU over matches; 1 is perfect.
    pub motp: f64,
    pub fgmt_per_gt: f64,
    pub sw_per_gt: f64,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub id_switches: usize,
    pub fragmentations: usize,
    pub gt_detections: usize,
    pub gt_trajectories: usize,
    /// Predicted tracks.
    pub trajectories: usize,
    pub kinematics: Kinematics,
}

/// CLEAR-MOT aggregates over frame matches. A switch is counted when a
/// ground-truth track is matched to a different prediction than at its
/// previous match; a fragmentation when it goes from matched to unmatched
/// while still present.
pub fn compute_metrics(matches: &[FrameMatch]) -> Result<EvalReport> {
    let mut r = EvalReport::default();
    let mut last_pred: HashMap<Arc<str>, Arc<str>> = HashMap::new();
    let mut tracked: HashMap<Arc<str>, bool> = HashMap::new();
    let mut preds: std::collections::HashSet<Arc<str>> = Default::default();
    let mut iou_sum = 0.0;
    for fm in matches {
        for (g, p, iou) in &fm.matched {
            r.true_positives += 1;
            iou_sum += iou;
            if let Some(prev) = last_pred.insert(g.clone(), p.clone()) {
                if prev != *p {
                    r.id_switches += 1;
                }
            }
            tracked.insert(g.clone(), true);
            preds.insert(p.clone());
        }
        for g in &fm.unmatched_gt {
            r.false_negatives += 1;
            if tracked.insert(g.clone(), false) == Some(true) {
                r.fragmentations += 1;
            }
        }
        r.false_positives += fm.unmatched_pred.len();
        preds.extend(fm.unmatched_pred.iter().cloned());
    }
    r.gt_detections = r.true_positives + r.false_negatives;
    r.gt_trajectories = tracked.len();
    if r.gt_detections == 0 {
        return Err(Error::NoGroundTruth);
    }
    r.trajectories = preds.len();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    r.precision = ratio(r.true_positives, r.true_positives + r.false_positives);
    r.recall = ratio(r.true_positives, r.gt_detections);
    r.mota = 1.0 - (r.false_negatives + r.false_positives + r.id_switches) as f64 / r.gt_detections as f64;
    r.motp = if r.true_positives == 0 { 0.0 } else { iou_sum / r.true_positives as f64 };
    r.fgmt_per_gt = ratio(r.fragmentations, r.gt_trajectories);
    r.sw_per_gt = ratio(r.id_switches, r.gt_trajectories);
    Ok(r)
}

/// Matches, scores, and attaches the prediction set's kinematics.
pub fn evaluate(gt: &[Track], pred: &[Track], config: &MatchConfig) -> Result<EvalReport> {
    let mut r = compute_metrics(&match_frames(gt, pred, config))?;
    r.trajectories = pred.len();
    r.kinematics = kinematic_stats(pred);
    Ok(r)
}

/// Aligned text table, one column per named report.
pub fn render_table(columns: &[(&str, &EvalReport)]) -> String {
    type Row = (&'static str, fn(&EvalReport) -> String);
    let rows: [Row; 16] = [
        ("Precision", |r| format!("{:.3}", r.precision)),
        ("Recall", |r| format!("{:.3}", r.recall)),
        ("MOTA", |r| format!("{:.3}", r.mota)),
        ("MOTP", |r| format!("{:.3}", r.motp)),
        ("Fgmt/GT", |r| format!("{:.2}", r.fgmt_per_gt)),
        ("Sw/GT", |r| format!("{:.2}", r.sw_per_gt)),
        ("No. trajectories", |r| r.trajectories.to_string()),
        ("Length avg (ft)", |r| format!("{:.0}", r.kinematics.length.mean)),
        ("Length max (ft)", |r| format!("{:.0}", r.kinematics.length.max)),
        ("Speed min (ft/s)", |r| format!("{:.2}", r.kinematics.speed.min)),
        ("Speed max (ft/s)", |r| format!("{:.2}", r.kinematics.speed.max)),
        ("Speed avg (ft/s)", |r| format!("{:.2}", r.kinematics.speed.mean)),
        ("Speed stdev (ft/s)", |r| format!("{:.2}", r.kinematics.speed.stdev)),
        ("Accel min (ft/s2)", |r| format!("{:.2}", r.kinematics.accel.min)),
        ("Accel max (ft/s2)", |r| format!("{:.2}", r.kinematics.accel.max)),
        ("Accel stdev (ft/s2)", |r| format!("{:.2}", r.kinematics.accel.stdev)),
    ];
    let cells: Vec<Vec<String>> = rows.iter().map(|(_, f)| columns.iter().map(|(_, r)| f(r)).collect()).collect();
    let label_w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let col_w: Vec<usize> = (0..columns.len())
        .map(|c| cells.iter().map(|row| row[c].len()).chain([columns[c].0.len()]).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    let _ = write!(out, "{:label_w$}", "");
    for (c, (name, _)) in columns.iter().enumerate() {
        let _ = write!(out, "  {:>w$}", name, w = col_w[c]);
    }
    out.push('\n');
    for (row, (label, _)) in cells.iter().zip(&rows) {
        let _ = write!(out, "{label:label_w$}");
        for (c, v) in row.iter().enumerate() {
            let _ = write!(out, "  {:>w$}", v, w = col_w[c]);
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointStatus {
    TruePositive,
    FalsePositive,
    FalseNegative,
}

/// Per-point TP/FP/FN labels derived from frame matches.
#[derive(Debug, Clone, Default)]
pub struct Coloring {
    status: HashMap<(Arc<str>, i64), PointStatus>,
    /// Ground-truth points no prediction covered.
    pub missed: Vec<(f64, f64, f64)>,
}

impl Coloring {
    pub fn new(matches: &[FrameMatch], gt: &[Track], dt: f64) -> Self {
        let mut status = HashMap::new();
        let mut missed_ids: HashMap<(Arc<str>, i64), ()> = HashMap::new();
        for fm in matches {
            for (_, p, _) in &fm.matched {
                status.insert((p.clone(), fm.frame), PointStatus::TruePositive);
            }
            for p in &fm.unmatched_pred {
                status.insert((p.clone(), fm.frame), PointStatus::FalsePositive);
            }
            for g in &fm.unmatched_gt {
                missed_ids.insert((g.clone(), fm.frame), ());
            }
        }
        let mut missed = Vec::new();
        for tr in gt {
            for i in 0..tr.t.len() {
                let frame = (tr.t[i] / dt).round() as i64;
                if missed_ids.contains_key(&(tr.id.clone(), frame)) {
                    missed.push((tr.t[i], tr.x[i], tr.y[i]));
                }
            }
        }
        Self { status, missed }
    }

    pub fn status(&self, id: &Arc<str>, frame: i64) -> Option<PointStatus> {
        self.status.get(&(id.clone(), frame)).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotFormat {
    Csv,
    Png,
}

impl PlotFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("png") => Self::Png,
            _ => Self::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotOptions {
    /// Only points whose `floor(y / lane_width)` equals this lane.
    pub lane: Option<i64>,
    pub lane_width: f64,
    pub format: PlotFormat,
    pub width: u32,
    pub height: u32,
    pub dt: f64,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self { lane: None, lane_width: 12.0, format: PlotFormat::Csv, width: 1600, height: 900, dt: DEFAULT_DT }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PlotSummary {
    /// Tracks with at least one plotted point.
    pub polylines: usize,
    pub points: usize,
}

fn status_name(s: Option<PointStatus>) -> &'static str {
    match s {
        Some(PointStatus::TruePositive) => "tp",
        Some(PointStatus::FalsePositive) => "fp",
        Some(PointStatus::FalseNegative) => "fn",
        None => "",
    }
}

/// Time-space diagram: CSV point dump (`track,t,x,y,lane,status`) or PNG
/// scatter with time across and position up.
pub fn emit_timespace_plot(path: &Path, tracks: &[Track], opts: &PlotOptions, coloring: Option<&Coloring>) -> Result<PlotSummary> {
    let lane_of = |y: f64| (y / opts.lane_width).floor() as i64;
    let keep = |y: f64| opts.lane.is_none_or(|l| lane_of(y) == l);
    let mut rows: Vec<(usize, f64, f64, f64, Option<PointStatus>)> = Vec::new();
    let mut summary = PlotSummary::default();
    for (k, tr) in tracks.iter().enumerate() {
        let before = rows.len();
        for i in 0..tr.t.len() {
            if keep(tr.y[i]) {
                let frame = (tr.t[i] / opts.dt).round() as i64;
                rows.push((k, tr.t[i], tr.x[i], tr.y[i], coloring.and_then(|c| c.status(&tr.id, frame))));
            }
        }
        if rows.len() > before {
            summary.polylines += 1;
        }
    }
    let missed: Vec<&(f64, f64, f64)> = coloring.map(|c| c.missed.iter().filter(|p| keep(p.2)).collect()).unwrap_or_default();
    summary.points = rows.len() + missed.len();
    match opts.format {
        PlotFormat::Csv => {
            let mut out = String::from("track,t,x,y,lane,status\n");
            for (k, t, x, y, s) in &rows {
                let _ = writeln!(out, "{},{t:.2},{x:.3},{y:.3},{},{}", tracks[*k].id, lane_of(*y), status_name(*s));
            }
            for (t, x, y) in &missed {
                let _ = writeln!(out, ",{t:.2},{x:.3},{y:.3},{},fn", lane_of(*y));
            }
            std::fs::write(path, out).map_err(|e| Error::io(path, e))?;
        }
        PlotFormat::Png => {
            let (w, h) = (opts.width.max(2), opts.height.max(2));
            let mut img = image::RgbImage::from_pixel(w, h, image::Rgb([255, 255, 255]));
            let all = rows.iter().map(|r| (r.1, r.2)).chain(missed.iter().map(|m| (m.0, m.1)));
            let (mut t0, mut t1, mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
            for (t, x) in all {
                t0 = t0.min(t);
                t1 = t1.max(t);
                x0 = x0.min(x);
                x1 = x1.max(x);
            }
            let mut put = |t: f64, x: f64, c: [u8; 3]| {
                let px = ((t - t0) / (t1 - t0).max(1e-9) * (w - 1) as f64).round() as u32;
                let py = ((x1 - x) / (x1 - x0).max(1e-9) * (h - 1) as f64).round() as u32;
                img.put_pixel(px.min(w - 1), py.min(h - 1), image::Rgb(c));
            };
            for (k, t, x, _, s) in &rows {
                let c = match s {
                    Some(PointStatus::TruePositive) => [30, 140, 60],
                    Some(PointStatus::FalsePositive) => [210, 40, 40],
                    Some(PointStatus::FalseNegative) => [40, 40, 210],
                    None => palette(*k),
                };
                put(*t, *x, c);
            }
            for (t, x, _) in &missed {
                put(*t, *x, [40, 40, 210]);
            }
            img.save(path)?;
        }
    }
    Ok(summary)
}

fn palette(k: usize) -> [u8; 3] {
    const P: [[u8; 3]; 8] =
        [[31, 119, 180], [255, 127, 14], [44, 160, 44], [214, 39, 40], [148, 103, 189], [140, 86, 75], [227, 119, 194], [127, 127, 127]];
    P[k % P.len()]
}
