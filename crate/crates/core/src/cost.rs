//! Edge costs of the tracklet circulation graph.
//!
//! Transition costs follow a cone model: after fragment `i` ends, the
//! vehicle's position is its constant-velocity projection plus zero-mean
//! noise whose variance grows as `alpha + beta * dt`. The cost of linking
//! `i -> j` is the mean negative log likelihood of `j`'s points under that
//! cone.

use serde::{Deserialize, Serialize};

use crate::types::{Fragment, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModelParams {
    /// Variance at zero elapsed time, ft^2.
    pub alpha: f64,
    /// Variance growth rate, ft^2/s.
    pub beta: f64,
    pub p_enter: f64,
    pub p_exit: f64,
    /// Probability that a fragment is a false positive.
    pub fp_prob: f64,
    /// Longest allowed time gap between linked fragments, s.
    pub max_gap: f64,
    /// Transition edges costlier than this are not created. `None` uses
    /// `c_en + c_ex`: such an edge can always be replaced by exiting and
    /// re-entering through the source at lower cost.
    pub max_transition_cost: Option<f64>,
    /// Slope used for single-point fragments, ft/s.
    pub nominal_speed: f64,
    /// Separate `(alpha, beta)` for the lateral residual. `None` shares
    /// `alpha` and `beta` across both axes.
    #[serde(default)]
    pub lateral: Option<(f64, f64)>,
}

impl Default for CostModelParams {
    fn default() -> Self {
        Self {
            alpha: 4.0,
            beta: 20.0,
            p_enter: 0.05,
            p_exit: 0.05,
            fp_prob: 0.02,
            max_gap: 15.0,
            max_transition_cost: None,
            nominal_speed: 60.0,
            lateral: None,
        }
    }
}

impl CostModelParams {
    pub fn validate(&self) -> Result<(), String> {
        let open_unit = |p: f64| p > 0.0 && p < 1.0;
        if !(self.alpha > 0.0) {
            return Err(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta >= 0.0) {
            return Err(format!("beta must be nonnegative, got {}", self.beta));
        }
        if !open_unit(self.p_enter) || !open_unit(self.p_exit) || !open_unit(self.fp_prob) {
            return Err("p_enter, p_exit and fp_prob must lie in (0, 1)".into());
        }
        if !(self.max_gap > 0.0) {
            return Err(format!("max_gap must be positive, got {}", self.max_gap));
        }
        if !self.nominal_speed.is_finite() {
            return Err("nominal_speed must be finite".into());
        }
        if let Some((a, b)) = self.lateral {
            if !(a > 0.0 && b >= 0.0) {
                return Err(format!("lateral variance law ({a}, {b}) must have alpha > 0, beta >= 0"));
            }
        }
        Ok(())
    }

    pub fn transition_cap(&self) -> f64 {
        self.max_transition_cost.unwrap_or_else(|| {
            let n = node_costs(self);
            n.entry + n.exit
        })
    }
}

/// Entry, exit and inclusion costs shared by every fragment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeCosts {
    pub entry: f64,
    pub exit: f64,
    pub inclusion: f64,
}

pub fn node_costs(params: &CostModelParams) -> NodeCosts {
    NodeCosts {
        entry: -params.p_enter.ln(),
        exit: -params.p_exit.ln(),
        inclusion: -((1.0 - params.fp_prob) / params.fp_prob).ln(),
    }
}

/// Constant-velocity model `p(t) = slope * t + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionEstimate {
    pub vx: f64,
    pub vy: f64,
    pub x0: f64,
    pub y0: f64,
}

impl MotionEstimate {
    pub fn project(&self, t: f64) -> (f64, f64) {
        (self.vx * t + self.x0, self.vy * t + self.y0)
    }
}

pub fn project_position(est: &MotionEstimate, t: f64) -> (f64, f64) {
    est.project(t)
}

/// Least-squares line fit of x(t) and y(t). A single point falls back to
/// `direction * nominal_speed` along x through that point.
pub fn fit_motion(fragment: &Fragment, nominal_speed: f64) -> MotionEstimate {
    fit_points(&fragment.points, fragment.direction.sign() * nominal_speed)
}

pub(crate) fn fit_points(points: &[Point], fallback_vx: f64) -> MotionEstimate {
    let n = points.len() as f64;
    let t_mean = points.iter().map(|p| p.t).sum::<f64>() / n;
    let x_mean = points.iter().map(|p| p.x).sum::<f64>() / n;
    let y_mean = points.iter().map(|p| p.y).sum::<f64>() / n;
    let stt: f64 = points.iter().map(|p| (p.t - t_mean).powi(2)).sum();
    if points.len() < 2 || stt <= 0.0 {
        return MotionEstimate {
            vx: fallback_vx,
            vy: 0.0,
            x0: x_mean - fallback_vx * t_mean,
            y0: y_mean,
        };
    }
    let stx: f64 = points.iter().map(|p| (p.t - t_mean) * (p.x - x_mean)).sum();
    let sty: f64 = points.iter().map(|p| (p.t - t_mean) * (p.y - y_mean)).sum();
    let vx = stx / stt;
    let vy = sty / stt;
    MotionEstimate { vx, vy, x0: x_mean - vx * t_mean, y0: y_mean - vy * t_mean }
}

/// Cost of `j` following `i`, or `None` when the pair is not linkable
/// (wrong order, gap beyond `max_gap`, or cost above the pruning cap).
pub fn transition_cost(from: &Fragment, to: &Fragment, params: &CostModelParams) -> Option<f64> {
    let est = fit_motion(from, params.nominal_speed);
    transition_cost_from(&est, from.t_end(), &to.points, params)
}

/// Same as [`transition_cost`] with the predecessor given by its motion
/// estimate and last timestamp.
pub fn transition_cost_from(
    est: &MotionEstimate,
    t_end: f64,
    successor: &[Point],
    params: &CostModelParams,
) -> Option<f64> {
    let first = successor.first()?;
    let gap = first.t - t_end;
    if gap <= 1e-9 || gap > params.max_gap + 1e-9 {
        return None;
    }
    let cost = params.cone_cost(est, t_end, successor);
    (cost <= params.transition_cap()).then_some(cost)
}

impl CostModelParams {
    /// Cone cost under these parameters, with the lateral law if set.
    pub fn cone_cost(&self, est: &MotionEstimate, t_end: f64, points: &[Point]) -> f64 {
        match self.lateral {
            None => cone_cost(est, t_end, points, self.alpha, self.beta),
            Some(lat) => cone_cost_axes(est, t_end, points, (self.alpha, self.beta), lat),
        }
    }
}

/// Cone cost with independent longitudinal and lateral variance laws. Each
/// axis contributes half the log term, so equal laws give [`cone_cost`].
pub fn cone_cost_axes(est: &MotionEstimate, t_end: f64, points: &[Point], x: (f64, f64), y: (f64, f64)) -> f64 {
    let mut sum = 0.0;
    for p in points {
        let dt = p.t - t_end;
        let (vx, vy) = (x.0 + x.1 * dt, y.0 + y.1 * dt);
        let (px, py) = est.project(p.t);
        sum += 0.5 * (vx.ln() + vy.ln()) + (p.x - px).powi(2) / vx + (p.y - py).powi(2) / vy;
    }
    sum / (2.0 * points.len() as f64)
}

/// Mean negative log likelihood of `points` under the cone anchored at
/// `t_end`, without feasibility checks.
pub fn cone_cost(est: &MotionEstimate, t_end: f64, points: &[Point], alpha: f64, beta: f64) -> f64 {
    let mut log_sum = 0.0;
    let mut res_sum = 0.0;
    for p in points {
        let var = alpha + beta * (p.t - t_end);
        let (px, py) = est.project(p.t);
        let r2 = (p.x - px).powi(2) + (p.y - py).powi(2);
        log_sum += var.ln();
        res_sum += r2 / var;
    }
    (log_sum + res_sum) / (2.0 * points.len() as f64)
}
