//! Synthetic ground truth and the corruption protocol that turns it into
//! raw tracking fragments.
//!
//! Ground truth comes from an intelligent-driver-model car-following
//! simulation on a multi-lane corridor without lane changes. A bottleneck is
//! a slow zone on one lane, approached as if led by a virtual vehicle.

use std::collections::VecDeque;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cost::CostModelParams;
use crate::error::{Error, Result};
use crate::io::config::{PipelineConfig, DEFAULT_V_MAX};
use crate::io::kv::{parse_numbers, KeyValues};
use crate::rectify::{differentiate, steering_angles, RectifierConfig, Weights};
use crate::types::{Direction, Fragment, Point, Trajectory, DEFAULT_DT};

/// Lane closure modeled as a slow zone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bottleneck {
    pub lane: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub x_start: f64,
    pub x_end: f64,
    /// Speed limit inside the zone, ft/s.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    /// ft
    pub corridor_length: f64,
    /// Arrival window, s. The simulation runs until the corridor empties.
    pub duration: f64,
    pub lanes: usize,
    /// ft
    pub lane_width: f64,
    /// Piecewise-constant demand: `(from time s, veh/hr/lane)`, sorted.
    pub demand: Vec<(f64, f64)>,
    pub bottleneck: Option<Bottleneck>,
    /// Mean desired speed, ft/s.
    pub free_speed: f64,
    /// Stdev of desired speed across vehicles, ft/s.
    pub speed_spread: f64,
    pub direction: Direction,
    pub dt: f64,
    pub idm: IdmParams,
}

/// Car-following parameters (feet, seconds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmParams {
    pub max_accel: f64,
    pub comfort_decel: f64,
    pub headway: f64,
    pub min_gap: f64,
    pub exponent: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self { max_accel: 3.3, comfort_decel: 4.9, headway: 1.5, min_gap: 6.5, exponent: 4.0 }
    }
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            corridor_length: 2000.0,
            duration: 600.0,
            lanes: 4,
            lane_width: 12.0,
            demand: vec![(0.0, 600.0)],
            bottleneck: None,
            free_speed: 60.0,
            speed_spread: 4.0,
            direction: Direction::Forward,
            dt: DEFAULT_DT,
            idm: IdmParams::default(),
        }
    }
}

impl ScenarioSpec {
    /// Full-size corridor: 2000 ft, four lanes, 900 s of demand stepping
    /// 1200 / 2400 / 3600 / 2400 / 1200 veh/hr/lane, and the leftmost lane
    /// throttled near 800 ft for the first 400 s.
    pub fn reference() -> Self {
        Self {
            duration: 900.0,
            demand: vec![(0.0, 1200.0), (180.0, 2400.0), (360.0, 3600.0), (540.0, 2400.0), (720.0, 1200.0)],
            bottleneck: Some(Bottleneck {
                lane: 0,
                t_start: 0.0,
                t_end: 400.0,
                x_start: 300.0,
                x_end: 400.0,
                speed: 15.0,
            }),
            ..Self::default()
        }
    }

    /// The reference corridor with demand scaled by `factor`.
    pub fn scaled(factor: f64) -> Self {
        let mut s = Self::reference();
        for d in &mut s.demand {
            d.1 *= factor;
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("scenario: {m}")));
        if !(self.corridor_length > 0.0 && self.duration >= 0.0 && self.lanes > 0 && self.lane_width > 0.0) {
            return bad("extents must be positive");
        }
        if !(self.free_speed > 0.0 && self.speed_spread >= 0.0 && self.dt > 0.0) {
            return bad("speeds and time step must be positive");
        }
        if self.demand.windows(2).any(|w| w[1].0 <= w[0].0) || self.demand.iter().any(|d| d.1 < 0.0) {
            return bad("demand must be sorted by time and nonnegative");
        }
        if let Some(b) = &self.bottleneck {
            if b.lane >= self.lanes || !(b.t_end > b.t_start && b.x_end > b.x_start && b.speed > 0.0) {
                return bad("bottleneck must name a lane and nonempty ranges");
            }
        }
        Ok(())
    }

    /// veh/hr/lane at time `t`.
    pub fn demand_at(&self, t: f64) -> f64 {
        self.demand.iter().rev().find(|d| d.0 <= t).map_or(0.0, |d| d.1)
    }

    fn lane_center(&self, lane: usize) -> f64 {
        (lane as f64 + 0.5) * self.lane_width
    }

    /// Reads `key = value` settings over the defaults. Demand is
    /// `demand = t0:rate, t1:rate, ...`; `demand_scale` multiplies it.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let base = match kv.raw("preset") {
            Some("reference") => Self::reference(),
            Some("replica") => Self::scaled(REPLICA_DEMAND_SCALE),
            Some("default") | None => Self::default(),
            Some(other) => return Err(Error::Config(format!("unknown scenario preset `{other}`"))),
        };
        let mut s = Self {
            corridor_length: kv.get_or("corridor_length", base.corridor_length)?,
            duration: kv.get_or("duration", base.duration)?,
            lanes: kv.get_or("lanes", base.lanes)?,
            lane_width: kv.get_or("lane_width", base.lane_width)?,
            free_speed: kv.get_or("free_speed", base.free_speed)?,
            speed_spread: kv.get_or("speed_spread", base.speed_spread)?,
            dt: kv.get_or("dt", base.dt)?,
            ..base
        };
        if let Some(d) = kv.get::<i64>("direction")? {
            s.direction = Direction::from_sign(d).ok_or_else(|| Error::Config("direction must be 1 or -1".into()))?;
        }
        if let Some(text) = kv.raw("demand") {
            let mut demand = Vec::new();
            for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
                let (t, r) = part
                    .split_once(':')
                    .ok_or_else(|| Error::Config(format!("demand entry `{part}` is not `time:rate`")))?;
                let num = |v: &str| v.trim().parse::<f64>().map_err(|e| Error::Config(format!("demand `{part}`: {e}")));
                demand.push((num(t)?, num(r)?));
            }
            s.demand = demand;
        }
        let scale: f64 = kv.get_or("demand_scale", 1.0)?;
        for d in &mut s.demand {
            d.1 *= scale;
        }
        if kv.raw("bottleneck") == Some("none") {
            s.bottleneck = None;
        } else if let Some(v) = kv.list("bottleneck")? {
            // lane, t_start, t_end, x_start, x_end, speed
            if v.len() != 6 {
                return Err(Error::Config("bottleneck needs lane,t0,t1,x0,x1,speed".into()));
            }
            s.bottleneck = Some(Bottleneck {
                lane: v[0] as usize,
                t_start: v[1],
                t_end: v[2],
                x_start: v[3],
                x_end: v[4],
                speed: v[5],
            });
        }
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_key_values(&KeyValues::load(path)?)
    }
}

struct Vehicle {
    id: usize,
    x: f64,
    v: f64,
    desired: f64,
    length: f64,
    width: f64,
    t0_index: i64,
    xs: Vec<f64>,
}

struct Pending {
    desired: f64,
    length: f64,
    width: f64,
}

fn idm_accel(p: &IdmParams, v: f64, desired: f64, leader: Option<(f64, f64)>) -> f64 {
    // above the desired speed, relax towards it at no more than the
    // comfortable deceleration
    let free = if v <= desired {
        1.0 - (v / desired).powf(p.exponent)
    } else {
        -(p.comfort_decel / p.max_accel) * (1.0 - (desired / v).powf(p.exponent))
    };
    let interaction = match leader {
        Some((gap, lead_v)) => {
            let s_star = p.min_gap + (v * p.headway + v * (v - lead_v) / (2.0 * (p.max_accel * p.comfort_decel).sqrt())).max(0.0);
            (s_star / gap.max(0.1)).powi(2)
        }
        None => 0.0,
    };
    p.max_accel * (free - interaction)
}

/// Runs the car-following simulation. Vehicles enter at `x = 0` (the
/// upstream end for either direction) and are recorded every frame until
/// their reference point passes the corridor end.
pub fn generate_ground_truth(spec: &ScenarioSpec, seed: u64) -> Result<Vec<Trajectory>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let speed_noise = Normal::new(0.0, spec.speed_spread.max(1e-12)).expect("finite stdev");
    let dt = spec.dt;
    let idm = &spec.idm;
    let arrival_frames = (spec.duration / dt).round() as i64;
    let mut lanes: Vec<VecDeque<Vehicle>> = (0..spec.lanes).map(|_| VecDeque::new()).collect();
    let mut queues: Vec<VecDeque<Pending>> = (0..spec.lanes).map(|_| VecDeque::new()).collect();
    let mut finished: Vec<(Vehicle, usize)> = Vec::new();
    let mut next_id = 0usize;
    let mut k: i64 = 0;
    loop {
        let t = k as f64 * dt;
        if k < arrival_frames {
            let p = (spec.demand_at(t) / 3600.0 * dt).min(1.0);
            for q in queues.iter_mut() {
                if p > 0.0 && rng.random_bool(p) {
                    let desired = if spec.speed_spread > 0.0 {
                        (spec.free_speed + speed_noise.sample(&mut rng))
                            .clamp(0.7 * spec.free_speed, 1.3 * spec.free_speed)
                    } else {
                        spec.free_speed
                    };
                    q.push_back(Pending {
                        desired,
                        length: rng.random_range(14.0..18.0),
                        width: rng.random_range(5.5..6.5),
                    });
                }
            }
        } else if lanes.iter().all(VecDeque::is_empty) && queues.iter().all(VecDeque::is_empty) {
            break;
        }

        // insert waiting vehicles where there is room
        for (lane, q) in queues.iter_mut().enumerate() {
            let Some(head) = q.front() else { continue };
            // x is the rear bumper; the newcomer's front sits at its length
            let (speed, ok) = match lanes[lane].back() {
                None => (head.desired, true),
                Some(last) => {
                    let gap = last.x - head.length;
                    if gap >= 2.0 * (idm.min_gap + head.desired * idm.headway) {
                        (head.desired, true)
                    } else {
                        let v = head.desired.min(last.v);
                        (v, gap >= idm.min_gap + v * idm.headway)
                    }
                }
            };
            if ok {
                let h = q.pop_front().unwrap();
                lanes[lane].push_back(Vehicle {
                    id: next_id,
                    x: 0.0,
                    v: speed,
                    desired: h.desired,
                    length: h.length,
                    width: h.width,
                    t0_index: k,
                    xs: vec![0.0],
                });
                next_id += 1;
            }
        }

        // accelerations from the current state, then a ballistic update
        for (lane, vehicles) in lanes.iter_mut().enumerate() {
            let mut acc = Vec::with_capacity(vehicles.len());
            for i in 0..vehicles.len() {
                let me = &vehicles[i];
                let leader = (i > 0).then(|| {
                    let l = &vehicles[i - 1];
                    (l.x - me.x - me.length, l.v)
                });
                let mut desired = me.desired;
                let mut a = idm_accel(idm, me.v, desired, leader);
                if let Some(b) = spec.bottleneck.filter(|b| b.lane == lane && t >= b.t_start && t < b.t_end) {
                    let front = me.x + me.length;
                    if front >= b.x_start && me.x < b.x_end {
                        desired = desired.min(b.speed);
                        a = idm_accel(idm, me.v, desired, leader);
                    } else if front < b.x_start {
                        // virtual leader cruising at the zone speed, placed so that the
                        // equilibrium gap is reached exactly at the zone entry
                        let gap = b.x_start - front + idm.min_gap + b.speed * idm.headway;
                        a = a.min(idm_accel(idm, me.v, desired, Some((gap, b.speed))));
                    }
                }
                acc.push(a.clamp(-30.0, idm.max_accel));
            }
            for (veh, a) in vehicles.iter_mut().zip(acc) {
                let v_new = (veh.v + a * dt).max(0.0);
                veh.x += 0.5 * (veh.v + v_new) * dt;
                veh.v = v_new;
            }
            while vehicles.front().is_some_and(|v| v.x > spec.corridor_length) {
                let done = vehicles.pop_front().unwrap();
                finished.push((done, lane));
            }
            for veh in vehicles.iter_mut() {
                veh.xs.push(veh.x);
            }
        }
        k += 1;
    }

    finished.sort_by_key(|(v, _)| v.id);
    let out = finished
        .into_iter()
        .map(|(veh, lane)| {
            let n = veh.xs.len();
            let t: Vec<f64> = (0..n).map(|i| (veh.t0_index + i as i64) as f64 * dt).collect();
            let x: Vec<f64> = match spec.direction {
                Direction::Forward => veh.xs,
                Direction::Backward => veh.xs.iter().map(|x| spec.corridor_length - x).collect(),
            };
            let y = vec![spec.lane_center(lane); n];
            Trajectory {
                id: format!("gt{:05}", veh.id),
                fragment_ids: vec![format!("gt{:05}", veh.id)],
                vx: differentiate(&x, 1, dt),
                vy: differentiate(&y, 1, dt),
                ax: differentiate(&x, 2, dt),
                ay: differentiate(&y, 2, dt),
                jx: differentiate(&x, 3, dt),
                jy: differentiate(&y, 3, dt),
                theta: steering_angles(&x, &y, dt),
                t,
                x,
                y,
                ex: Vec::new(),
                ey: Vec::new(),
                length: veh.length,
                width: veh.width,
                direction: spec.direction,
                solved: true,
            }
        })
        .collect();
    Ok(out)
}

/// Region of the time-space plane where nothing is observed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeMask {
    pub x_start: f64,
    pub x_end: f64,
    pub t_start: f64,
    pub t_end: f64,
}

impl SpaceTimeMask {
    pub fn new(x: (f64, f64), t: (f64, f64)) -> Result<Self> {
        if !(x.1 > x.0 && t.1 > t.0) {
            return Err(Error::Config(format!("mask ranges must be nonempty: x {x:?}, t {t:?}")));
        }
        Ok(Self { x_start: x.0, x_end: x.1, t_start: t.0, t_end: t.1 })
    }

    pub fn contains(&self, t: f64, x: f64) -> bool {
        x >= self.x_start && x <= self.x_end && t >= self.t_start && t <= self.t_end
    }
}

/// Per-camera x-ranges; adjacent cameras overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraLayout {
    pub ranges: Vec<(f64, f64)>,
}

impl CameraLayout {
    pub fn single(corridor_length: f64) -> Self {
        Self { ranges: vec![(0.0, corridor_length)] }
    }

    pub fn new(mut ranges: Vec<(f64, f64)>) -> Result<Self> {
        ranges.sort_by(|a, b| a.0.total_cmp(&b.0));
        if ranges.is_empty() || ranges.iter().any(|r| !(r.1 > r.0)) {
            return Err(Error::Config("camera ranges must be nonempty".into()));
        }
        if ranges.windows(2).any(|w| w[1].0 > w[0].1) {
            return Err(Error::Config("adjacent camera ranges must overlap or touch".into()));
        }
        Ok(Self { ranges })
    }

    fn max_end(&self) -> f64 {
        self.ranges.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Half-open ranges, except the far end of the last camera is closed.
    fn sees(&self, cam: usize, x: f64) -> bool {
        let (a, b) = self.ranges[cam];
        x >= a && (x < b || (x == b && b == self.max_end()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Gaussian position noise, ft.
    pub sigma: f64,
    /// Probability that a point is an outlier.
    pub outlier_rate: f64,
    /// Outlier magnitude range, ft; sign is random.
    pub outlier_range: (f64, f64),
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { sigma: 1.0, outlier_rate: 0.0, outlier_range: (10.0, 50.0), seed: 0 }
    }
}

impl NoiseSpec {
    pub fn clean() -> Self {
        Self { sigma: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.outlier_range;
        if self.sigma >= 0.0 && (0.0..=1.0).contains(&self.outlier_rate) && hi >= lo && lo >= 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid noise spec {self:?}")))
        }
    }
}

/// Splits `n` samples wherever `keep` is false.
fn runs(keep: impl Iterator<Item = bool>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    let mut n = 0;
    for (i, k) in keep.enumerate() {
        match (k, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
        n = i + 1;
    }
    if let Some(s) = start {
        out.push((s, n));
    }
    out
}

/// Applies the corruption protocol to each ground-truth trajectory: mask
/// cuts, camera splits (points in overlaps go to both cameras), Gaussian
/// noise, then sparse longitudinal outliers. Every piece gets a fresh id;
/// `gt_id` records its source.
pub fn perturb(
    gt: &[Trajectory],
    masks: &[SpaceTimeMask],
    layout: &CameraLayout,
    noise: &NoiseSpec,
) -> Result<Vec<Fragment>> {
    noise.validate()?;
    let normal = Normal::new(0.0, noise.sigma.max(1e-300)).expect("finite stdev");
    let mut pieces: Vec<(Fragment, usize)> = Vec::new();
    for (gi, tr) in gt.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        rng.set_stream(gi as u64);
        let visible = (0..tr.len()).map(|i| !masks.iter().any(|m| m.contains(tr.t[i], tr.x[i])));
        for (a, b) in runs(visible) {
            for cam in 0..layout.ranges.len() {
                let seen = (a..b).map(|i| layout.sees(cam, tr.x[i]));
                for (c0, c1) in runs(seen) {
                    let points: Vec<Point> = (a + c0..a + c1)
                        .map(|i| {
                            let (mut x, mut y) = (tr.x[i], tr.y[i]);
                            if noise.sigma > 0.0 {
                                x += normal.sample(&mut rng);
                                y += normal.sample(&mut rng);
                            }
                            if noise.outlier_rate > 0.0 && rng.random_bool(noise.outlier_rate) {
                                let mag = rng.random_range(noise.outlier_range.0..=noise.outlier_range.1);
                                x += if rng.random_bool(0.5) { mag } else { -mag };
                            }
                            Point::new(tr.t[i], x, y)
                        })
                        .collect();
                    let f = Fragment::new(String::new(), points, tr.length, tr.width, tr.direction)?.with_gt_id(&tr.id);
                    pieces.push((f, gi));
                }
            }
        }
    }
    pieces.sort_by(|a, b| a.0.t_start().total_cmp(&b.0.t_start()).then(a.1.cmp(&b.1)).then(a.0.points[0].x.total_cmp(&b.0.points[0].x)));
    let width = pieces.len().max(1).to_string().len().max(6);
    Ok(pieces
        .into_iter()
        .enumerate()
        .map(|(k, (mut f, _))| {
            f.id = format!("f{k:0width$}");
            f
        })
        .collect())
}

/// Fragment id to source ground-truth id.
pub fn provenance(fragments: &[Fragment]) -> Vec<(String, String)> {
    fragments.iter().filter_map(|f| f.gt_id.clone().map(|g| (f.id.clone(), g))).collect()
}

/// Replica demand relative to the reference scenario.
pub const REPLICA_DEMAND_SCALE: f64 = 0.4;

/// Packet-loss dropouts in the replica. Each one a vehicle drives through
/// costs it a fragmentation, so this count trades raw recall against raw
/// fragmentation.
pub const REPLICA_DROPOUTS: usize = 36;

/// A complete scenario plus corruption settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub scenario: ScenarioSpec,
    pub masks: Vec<SpaceTimeMask>,
    pub layout: CameraLayout,
    pub noise: NoiseSpec,
}

impl Benchmark {
    /// Desk-scale replica of the simulated corridor experiment: demand at
    /// 40% of the reference, three cameras overlapping by 100 ft, an
    /// upstream mask over the middle third of the run, a full-duration
    /// overpass mask, 50-ft packet-loss dropouts, 1-ft noise and sparse
    /// outliers.
    pub fn replica(seed: u64) -> Self {
        let scenario = ScenarioSpec::scaled(REPLICA_DEMAND_SCALE);
        let d = scenario.duration;
        let mut masks = vec![
            SpaceTimeMask::new((100.0, 300.0), (d / 3.0, 2.0 * d / 3.0)).unwrap(),
            SpaceTimeMask::new((1550.0, 1700.0), (0.0, f64::INFINITY)).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61_736b);
        for _ in 0..REPLICA_DROPOUTS {
            let x0 = rng.random_range(350.0..1450.0);
            let t0 = rng.random_range(0.0..d);
            masks.push(SpaceTimeMask::new((x0, x0 + 50.0), (t0, t0 + 60.0)).unwrap());
        }
        Self {
            scenario,
            masks,
            layout: CameraLayout::new(vec![(0.0, 700.0), (600.0, 1400.0), (1300.0, 2000.0)]).unwrap(),
            noise: NoiseSpec { sigma: 1.0, outlier_rate: 0.001, outlier_range: (10.0, 50.0), seed },
        }
    }

    /// Association settings tuned on the replica: a wide cone so links
    /// survive the long gaps left by the middle camera's overlapping
    /// fragment, a tight lateral law so lanes stay apart.
    pub fn cost_params() -> CostModelParams {
        CostModelParams {
            alpha: 4.0,
            beta: 200.0,
            p_enter: 0.05,
            p_exit: 0.05,
            fp_prob: 0.02,
            max_gap: 45.0,
            max_transition_cost: Some(20.0),
            nominal_speed: 60.0,
            lateral: Some((4.0, 0.2)),
        }
    }

    pub fn rectifier_config() -> RectifierConfig {
        RectifierConfig { weights: Weights { lambda1: 6.0, ..Weights::default() }, ..RectifierConfig::default() }
    }

    /// Pipeline settings matching [`Benchmark::cost_params`] and
    /// [`Benchmark::rectifier_config`].
    pub fn pipeline_config() -> PipelineConfig {
        let cost = Self::cost_params();
        PipelineConfig {
            margin: cost.max_gap * DEFAULT_V_MAX,
            cost,
            rectifier: Self::rectifier_config(),
            ..PipelineConfig::default()
        }
    }

    /// Reads corruption settings (`mask = x0,x1,t0,t1` repeated, `cameras =
    /// a,b,c,d,...` as consecutive pairs, `noise_sigma`, `outlier_rate`,
    /// `outlier_min`, `outlier_max`) over the replica defaults, with the
    /// scenario from the same file.
    pub fn from_key_values(kv: &KeyValues, seed: u64) -> Result<Self> {
        let mut b = if kv.raw("preset") == Some("replica") { Self::replica(seed) } else {
            Self { scenario: ScenarioSpec::default(), masks: Vec::new(), layout: CameraLayout::single(0.0), noise: NoiseSpec { seed, ..NoiseSpec::default() } }
        };
        if kv.raw("preset") != Some("replica") {
            b.scenario = ScenarioSpec::from_key_values(kv)?;
            b.layout = CameraLayout::single(b.scenario.corridor_length);
        }
        let masks = kv.all("mask");
        if !masks.is_empty() {
            b.masks.clear();
        }
        for (text, line) in masks {
            if text == "none" {
                continue;
            }
            let v = parse_numbers(text).map_err(|m| kv.error(line, m))?;
            if v.len() != 4 {
                return Err(kv.error(line, "mask needs x0,x1,t0,t1"));
            }
            b.masks.push(SpaceTimeMask::new((v[0], v[1]), (v[2], v[3]))?);
        }
        if let Some(v) = kv.list("cameras")? {
            if v.len() % 2 != 0 {
                return Err(Error::Config("cameras must be start,end pairs".into()));
            }
            b.layout = CameraLayout::new(v.chunks(2).map(|c| (c[0], c[1])).collect())?;
        }
        b.noise.sigma = kv.get_or("noise_sigma", b.noise.sigma)?;
        b.noise.outlier_rate = kv.get_or("outlier_rate", b.noise.outlier_rate)?;
        b.noise.outlier_range.0 = kv.get_or("outlier_min", b.noise.outlier_range.0)?;
        b.noise.outlier_range.1 = kv.get_or("outlier_max", b.noise.outlier_range.1)?;
        b.noise.validate()?;
        Ok(b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(rate: f64) -> ScenarioSpec {
        ScenarioSpec { duration: 120.0, lanes: 2, demand: vec![(0.0, rate)], ..ScenarioSpec::default() }
    }

    #[test]
    fn zero_demand_is_empty() {
        assert!(generate_ground_truth(&quiet(0.0), 1).unwrap().is_empty());
    }

    #[test]
    fn lone_vehicle_cruises() {
        let spec = ScenarioSpec { duration: 0.04, lanes: 1, demand: vec![(0.0, 3600.0 / 0.04)], speed_spread: 0.0, ..ScenarioSpec::default() };
        let gt = generate_ground_truth(&spec, 3).unwrap();
        assert_eq!(gt.len(), 1);
        let tr = &gt[0];
        assert!(tr.vx.iter().all(|v| (v - 60.0).abs() < 1e-9));
        assert!(tr.ax.iter().all(|a| a.abs() < 1e-6));
        assert!(*tr.x.last().unwrap() <= 2000.0 && *tr.x.last().unwrap() > 2000.0 - 60.0 * 0.04 - 1e-9);
        assert!(tr.y.iter().all(|&y| y == 6.0));
    }

    #[test]
    fn vehicles_keep_order_and_spacing() {
        let gt = generate_ground_truth(&quiet(1500.0), 5).unwrap();
        assert!(gt.len() > 40);
        for tr in &gt {
            assert!(tr.vx.iter().all(|&v| v >= -1e-9), "{} reverses", tr.id);
            assert_eq!(tr.t.len(), tr.x.len());
            assert_eq!(tr.jx.len(), tr.len() - 3);
        }
        // same lane, consecutive entry: follower never overtakes
        for pair in gt.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if a.y[0] != b.y[0] {
                continue;
            }
            let off = ((b.t[0] - a.t[0]) / 0.04).round() as usize;
            for (i, xb) in b.x.iter().enumerate() {
                if let Some(xa) = a.x.get(i + off) {
                    assert!(xa - xb >= b.length, "{} closes on {}", b.id, a.id);
                }
            }
        }
    }

    #[test]
    fn bottleneck_slows_upstream() {
        let mut spec = ScenarioSpec::scaled(0.5);
        spec.duration = 300.0;
        spec.lanes = 1;
        let gt = generate_ground_truth(&spec, 9).unwrap();
        let (mut up, mut down) = (Vec::new(), Vec::new());
        for tr in &gt {
            for (i, v) in tr.vx.iter().enumerate() {
                if tr.t[i] > 100.0 && tr.t[i] < 300.0 {
                    if tr.x[i] > 500.0 && tr.x[i] < 700.0 {
                        up.push(*v);
                    } else if tr.x[i] > 1200.0 {
                        down.push(*v);
                    }
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(mean(&up) + 10.0 < mean(&down), "{} vs {}", mean(&up), mean(&down));
    }

    #[test]
    fn backward_mirrors_positions() {
        let mut spec = quiet(900.0);
        let fwd = generate_ground_truth(&spec, 2).unwrap();
        spec.direction = Direction::Backward;
        let bwd = generate_ground_truth(&spec, 2).unwrap();
        assert_eq!(fwd.len(), bwd.len());
        for (a, b) in fwd.iter().zip(&bwd) {
            assert!(a.x.iter().zip(&b.x).all(|(p, q)| (p + q - 2000.0).abs() < 1e-9));
            assert!(b.vx.iter().all(|&v| v <= 1e-9));
        }
    }

    fn one_track(t0: f64, n: usize) -> Trajectory {
        let t: Vec<f64> = (0..n).map(|i| t0 + i as f64 * 0.04).collect();
        let x: Vec<f64> = (0..n).map(|i| i as f64 * 2.0).collect();
        Trajectory { id: "gt00000".into(), y: vec![6.0; n], t, x, length: 15.0, width: 6.0, solved: true, ..Trajectory::default() }
    }

    #[test]
    fn clean_single_camera_is_identity() {
        let tr = one_track(1.0, 500);
        let frags = perturb(std::slice::from_ref(&tr), &[], &CameraLayout::single(2000.0), &NoiseSpec::clean()).unwrap();
        assert_eq!(frags.len(), 1);
        let f = &frags[0];
        assert_eq!(f.gt_id.as_deref(), Some("gt00000"));
        assert_eq!(f.len(), 500);
        assert!(f.points.iter().zip(&tr.x).all(|(p, x)| p.x == *x && p.y == 6.0));
    }

    #[test]
    fn mask_cuts_a_trajectory() {
        let tr = one_track(0.0, 500);
        let mask = SpaceTimeMask::new((300.0, 450.0), (0.0, 100.0)).unwrap();
        let frags = perturb(&[tr], &[mask], &CameraLayout::single(2000.0), &NoiseSpec::clean()).unwrap();
        assert_eq!(frags.len(), 2);
        assert!(frags[0].points.last().unwrap().x < 300.0);
        assert!(frags[1].points[0].x > 450.0);
        assert!(frags[0].id < frags[1].id);
    }

    #[test]
    fn overlap_points_seen_twice() {
        let tr = one_track(0.0, 1000);
        let layout = CameraLayout::new(vec![(0.0, 700.0), (600.0, 1400.0), (1300.0, 2000.0)]).unwrap();
        let frags = perturb(std::slice::from_ref(&tr), &[], &layout, &NoiseSpec::clean()).unwrap();
        assert_eq!(frags.len(), 3);
        for (i, x) in tr.x.iter().enumerate() {
            let hits = frags.iter().filter(|f| f.points.iter().any(|p| p.t == tr.t[i])).count();
            let expected = if (600.0..700.0).contains(x) || (1300.0..1400.0).contains(x) { 2 } else { 1 };
            assert_eq!(hits, expected, "x = {x}");
        }
    }

    #[test]
    fn perturbation_is_reproducible() {
        let gt = generate_ground_truth(&quiet(900.0), 4).unwrap();
        let b = Benchmark::replica(11);
        let noise = NoiseSpec { outlier_rate: 0.01, ..b.noise };
        let a1 = perturb(&gt, &b.masks, &b.layout, &noise).unwrap();
        let a2 = perturb(&gt, &b.masks, &b.layout, &noise).unwrap();
        assert_eq!(a1, a2);
        let other = perturb(&gt, &b.masks, &b.layout, &NoiseSpec { seed: 12, ..noise }).unwrap();
        assert_ne!(a1, other);
    }

    #[test]
    fn outliers_are_longitudinal() {
        let tr = one_track(0.0, 2000);
        let noise = NoiseSpec { sigma: 0.0, outlier_rate: 0.05, seed: 1, ..NoiseSpec::default() };
        let frags = perturb(std::slice::from_ref(&tr), &[], &CameraLayout::single(1e4), &noise).unwrap();
        let pts = &frags[0].points;
        let moved: Vec<f64> = pts.iter().zip(&tr.x).map(|(p, x)| p.x - x).filter(|d| *d != 0.0).collect();
        assert!(moved.len() > 50 && moved.len() < 150, "{}", moved.len());
        assert!(moved.iter().all(|d| (10.0..=50.0).contains(&d.abs())));
        assert!(pts.iter().all(|p| p.y == 6.0));
    }

    #[test]
    fn reads_scenario_config() {
        let kv = KeyValues::parse(
            "preset = reference\ndemand_scale = 0.5\nlanes = 3\nbottleneck = 1, 0, 100, 500, 600, 20\nmask = 0,10,0,5\ncameras = 0,1000,900,2000\n",
            "cfg",
        )
        .unwrap();
        let s = ScenarioSpec::from_key_values(&kv).unwrap();
        assert_eq!(s.lanes, 3);
        assert_eq!(s.demand[2], (360.0, 1800.0));
        assert_eq!(s.bottleneck.unwrap().lane, 1);
        let b = Benchmark::from_key_values(&kv, 0).unwrap();
        assert_eq!(b.masks.len(), 1);
        assert_eq!(b.layout.ranges.len(), 2);
        let bad = KeyValues::parse("lanes = 2\nbottleneck = 5,0,1,0,1,1\n", "cfg").unwrap();
        assert!(ScenarioSpec::from_key_values(&bad).is_err());
    }
}
