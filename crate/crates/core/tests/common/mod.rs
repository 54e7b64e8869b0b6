#![allow(dead_code)]

pub mod qp;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use trajrecon::cost::{node_costs, transition_cost, CostModelParams};
use trajrecon::rectify::{RectificationProblem, Weights};
use trajrecon::types::{Direction, Fragment, Point};

pub const DT: f64 = 0.04;

pub fn line(id: &str, t0: f64, t1: f64, x0: f64, v: f64, y: f64, noise: f64, rng: &mut ChaCha8Rng) -> Fragment {
    let n = ((t1 - t0) / DT).round().max(0.0) as usize + 1;
    let d = Normal::new(0.0, noise.max(1e-12)).unwrap();
    let points = (0..n)
        .map(|k| {
            let t = t0 + k as f64 * DT;
            let (ex, ey) = if noise > 0.0 { (d.sample(rng), d.sample(rng)) } else { (0.0, 0.0) };
            Point::new(t, x0 + v * (t - t0) + ex, y + ey)
        })
        .collect();
    Fragment::new(id, points, 15.0, 6.0, Direction::Forward).unwrap()
}

/// Vehicles on two lanes, each cut into pieces with short gaps, plus the
/// odd spurious fragment. Sorted by last timestamp.
pub fn vehicle_stream(seed: u64, target: usize) -> Vec<Fragment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut t = 0.0;
    let mut vehicle = 0;
    while out.len() < target {
        let lane_y = if rng.random_bool(0.5) { 6.0 } else { 18.0 };
        let v = rng.random_range(40.0..70.0);
        let pieces = rng.random_range(1..=4);
        let mut ts = t;
        let mut x = 0.0;
        for p in 0..pieces {
            if out.len() >= target {
                break;
            }
            let len = rng.random_range(0.4..2.0);
            out.push(line(&format!("v{vehicle:04}p{p}"), ts, ts + len, x, v, lane_y, 0.3, &mut rng));
            let gap = rng.random_range(0.2..1.5);
            x += v * (len + gap);
            ts += len + gap;
        }
        if rng.random_bool(0.05) && out.len() < target {
            let ts = t + rng.random_range(0.0..2.0);
            out.push(line(&format!("junk{vehicle:04}"), ts, ts + 0.2, rng.random_range(0.0..300.0), 10.0, 30.0, 2.0, &mut rng));
        }
        vehicle += 1;
        t += rng.random_range(0.3..1.2);
    }
    sort_by_end(out)
}

pub fn sort_by_end(mut frags: Vec<Fragment>) -> Vec<Fragment> {
    frags.sort_by(|a, b| a.t_end().total_cmp(&b.t_end()).then_with(|| a.id.cmp(&b.id)));
    frags
}

/// Up to `max` fragments from a few vehicles with random cuts, in a small
/// space-time window so many pairs are linkable.
pub fn small_instance(seed: u64, max: usize) -> Vec<Fragment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max);
    let vehicles = rng.random_range(1..=3);
    let speeds: Vec<f64> = (0..vehicles).map(|_| rng.random_range(40.0..70.0)).collect();
    let starts: Vec<f64> = (0..vehicles).map(|_| rng.random_range(0.0..40.0)).collect();
    let lanes: Vec<f64> = (0..vehicles).map(|_| if rng.random_bool(0.5) { 6.0 } else { 18.0 }).collect();
    let mut clock: Vec<f64> = (0..vehicles).map(|_| (rng.random_range(0.0..1.0) / DT).round() * DT).collect();
    let frags = (0..n)
        .map(|k| {
            let v = rng.random_range(0..vehicles);
            let t0 = clock[v];
            let len = (rng.random_range(0.1..1.2) / DT).round() * DT;
            clock[v] = t0 + len + (rng.random_range(0.1..1.5) / DT).round() * DT;
            let x0 = starts[v] + speeds[v] * t0;
            line(&format!("f{k}"), t0, t0 + len, x0, speeds[v], lanes[v], 0.5, &mut rng)
        })
        .collect();
    sort_by_end(frags)
}

/// Minimum circulation cost by enumerating every way to split the
/// fragments into ordered chains, leaving any subset out.
pub fn brute_force_cost(frags: &[Fragment], params: &CostModelParams) -> f64 {
    let mut order: Vec<&Fragment> = frags.iter().collect();
    order.sort_by(|a, b| a.t_start().total_cmp(&b.t_start()));
    let n = order.len();
    let mut trans = vec![vec![None; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                trans[i][j] = transition_cost(order[i], order[j], params);
            }
        }
    }
    let nc = node_costs(params);
    let open = nc.entry + nc.exit + nc.inclusion;
    fn go(k: usize, tails: &mut Vec<usize>, cost: f64, n: usize, trans: &[Vec<Option<f64>>], open: f64, inc: f64, best: &mut f64) {
        if k == n {
            *best = best.min(cost);
            return;
        }
        go(k + 1, tails, cost, n, trans, open, inc, best);
        tails.push(k);
        go(k + 1, tails, cost + open, n, trans, open, inc, best);
        tails.pop();
        for c in 0..tails.len() {
            if let Some(w) = trans[tails[c]][k] {
                let prev = tails[c];
                tails[c] = k;
                go(k + 1, tails, cost + w + inc, n, trans, open, inc, best);
                tails[c] = prev;
            }
        }
    }
    let mut best = 0.0;
    go(0, &mut Vec::new(), 0.0, n, &trans, open, nc.inclusion, &mut best);
    best
}

/// One-axis rectification problem with random gaps, noise and spikes.
pub fn rect_instance(seed: u64, n: usize, weights: Weights) -> RectificationProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let v = rng.random_range(20.0..80.0);
    let acc = rng.random_range(-3.0..3.0);
    let hole = rng.random_range(0..n / 2);
    let hole_len = rng.random_range(0..n / 4);
    let observed: Vec<usize> = (0..n)
        .filter(|&i| i == 0 || i == n - 1 || (!(hole..hole + hole_len).contains(&i) && rng.random_bool(0.85)))
        .collect();
    let z = observed
        .iter()
        .map(|&i| {
            let t = i as f64 * DT;
            let spike = if rng.random_bool(0.05) { rng.random_range(10.0..50.0) } else { 0.0 };
            500.0 + v * t + 0.5 * acc * t * t + noise.sample(&mut rng) + spike
        })
        .collect();
    RectificationProblem {
        z,
        observed,
        n,
        dt: DT,
        weights,
        a_max: 10.0,
        j_max: 10.0,
        monotone: Some(Direction::Forward),
    }
}

pub fn chain_sets(chains: &[Vec<String>]) -> Vec<Vec<String>> {
    let mut v = chains.to_vec();
    v.sort();
    v
}
