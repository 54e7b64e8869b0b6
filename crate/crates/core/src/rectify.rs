//! Per-axis trajectory rectification.
//!
//! Each axis solves
//!
//! ```text
//! min  |z - Hx - e|^2 + l2 |D2 x|^2 + l3 |D3 x|^2 + l1 |e|_1
//! s.t. dir * D1 x >= 0        (longitudinal axis only)
//!      |D2 x| <= a_max, |D3 x| <= j_max
//! ```
//!
//! with a primal-dual interior point method. The outlier vector is split as
//! `e = p - q`, `p, q >= 0`; its 2x2 blocks are eliminated per observation so
//! every Newton step is one banded Cholesky solve of half-bandwidth 3.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{resample_to_grid, Direction, Fragment, Point, Trajectory, DEFAULT_DT};

const STENCILS: [&[f64]; 4] = [&[1.0], &[-1.0, 1.0], &[1.0, -2.0, 1.0], &[-1.0, 3.0, -3.0, 1.0]];

/// Banded finite-difference operator `D^(k)`, `(N-k) x N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceOperator {
    pub order: usize,
    pub n: usize,
    pub dt: f64,
    scale: f64,
}

pub fn difference_operator(order: usize, n: usize, dt: f64) -> Result<DifferenceOperator> {
    if !(1..=3).contains(&order) {
        return Err(Error::InvalidProblem(format!("difference order must be 1..=3, got {order}")));
    }
    if n <= order {
        return Err(Error::SeriesTooShort { len: n, order });
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidProblem(format!("time step must be positive, got {dt}")));
    }
    Ok(DifferenceOperator { order, n, dt, scale: dt.powi(-(order as i32)) })
}

impl DifferenceOperator {
    pub fn rows(&self) -> usize {
        self.n - self.order
    }

    pub fn cols(&self) -> usize {
        self.n
    }

    /// Row stencil in physical units: `(-1, 1) / dt` for the first order.
    pub fn stencil(&self) -> Vec<f64> {
        STENCILS[self.order].iter().map(|c| c * self.scale).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "operand length");
        apply_stencil(self.order, self.scale, x)
    }

    /// `D^T y`.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows(), "operand length");
        let st = STENCILS[self.order];
        let mut out = vec![0.0; self.n];
        for (i, &v) in y.iter().enumerate() {
            for (j, c) in st.iter().enumerate() {
                out[i + j] += c * self.scale * v;
            }
        }
        out
    }
}

/// `D^(order) x` in physical units; empty when `x` is too short.
pub fn differentiate(x: &[f64], order: usize, dt: f64) -> Vec<f64> {
    if x.len() <= order {
        return Vec::new();
    }
    apply_stencil(order, dt.powi(-(order as i32)), x)
}

fn apply_stencil(order: usize, scale: f64, x: &[f64]) -> Vec<f64> {
    let st = STENCILS[order];
    x.windows(order + 1).map(|w| w.iter().zip(st).map(|(a, c)| a * c).sum::<f64>() * scale).collect()
}

/// Regularization weights for one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    /// Outlier sparsity.
    pub lambda1: f64,
    /// Acceleration smoothness.
    pub lambda2: f64,
    /// Jerk smoothness.
    pub lambda3: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self { lambda1: 1.2e-3, lambda2: 1.67e-2, lambda3: 1.67e-7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectifierConfig {
    pub weights: Weights,
    /// Lateral-axis weights; `None` shares `weights`.
    pub lateral_weights: Option<Weights>,
    /// ft/s^2
    pub a_max: f64,
    /// ft/s^3
    pub j_max: f64,
    pub dt: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for RectifierConfig {
    fn default() -> Self {
        Self {
            weights: Weights::default(),
            lateral_weights: None,
            a_max: 10.0,
            j_max: 10.0,
            dt: DEFAULT_DT,
            tolerance: 1e-6,
            max_iterations: 200,
        }
    }
}

impl RectifierConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.weights, self.lateral_weights.unwrap_or(self.weights)];
        let ok = w.iter().all(|w| w.lambda1 > 0.0 && w.lambda2 > 0.0 && w.lambda3 > 0.0)
            && self.a_max > 0.0
            && self.j_max > 0.0
            && self.dt > 0.0
            && self.tolerance > 0.0
            && self.max_iterations > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid rectifier config: {self:?}")))
        }
    }

    pub fn lateral(&self) -> Weights {
        self.lateral_weights.unwrap_or(self.weights)
    }
}

/// One axis of the rectification program.
#[derive(Debug, Clone, PartialEq)]
pub struct RectificationProblem {
    /// Observed positions, one per entry of `observed`.
    pub z: Vec<f64>,
    /// Strictly increasing grid indices of the observations (rows of `H`).
    pub observed: Vec<usize>,
    /// Grid length.
    pub n: usize,
    pub dt: f64,
    pub weights: Weights,
    pub a_max: f64,
    pub j_max: f64,
    /// Sign of the required first difference; `None` leaves it free.
    pub monotone: Option<Direction>,
}

impl RectificationProblem {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidProblem(m));
        if self.n < 4 {
            return Err(Error::SeriesTooShort { len: self.n, order: 3 });
        }
        if self.z.len() != self.observed.len() {
            return bad(format!("{} observations for {} indices", self.z.len(), self.observed.len()));
        }
        if self.observed.len() < 2 {
            return bad("at least two observations are required".into());
        }
        if self.observed.windows(2).any(|w| w[1] <= w[0]) || self.observed[self.observed.len() - 1] >= self.n {
            return bad("observed indices must be strictly increasing and inside the grid".into());
        }
        if self.z.iter().any(|v| !v.is_finite()) {
            return bad("observations must be finite".into());
        }
        let w = self.weights;
        if !(w.lambda1 >= 0.0 && w.lambda2 >= 0.0 && w.lambda3 >= 0.0) {
            return bad("weights must be nonnegative".into());
        }
        if !(self.a_max > 0.0 && self.j_max > 0.0 && self.dt > 0.0) {
            return bad("bounds and time step must be positive".into());
        }
        Ok(())
    }

    /// Objective value at `(x, e)`.
    pub fn objective(&self, x: &[f64], e: &[f64]) -> f64 {
        let fit: f64 = self.observed.iter().zip(&self.z).zip(e).map(|((&i, z), e)| (z - x[i] - e).powi(2)).sum();
        let sq = |k: usize| apply_stencil(k, self.dt.powi(-(k as i32)), x).iter().map(|v| v * v).sum::<f64>();
        let l1: f64 = e.iter().map(|v| v.abs()).sum();
        fit + self.weights.lambda2 * sq(2) + self.weights.lambda3 * sq(3) + self.weights.lambda1 * l1
    }

    /// Largest violation of the inequality constraints, in physical units.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        if let Some(dir) = self.monotone {
            for v in apply_stencil(1, 1.0 / self.dt, x) {
                worst = worst.max(-dir.sign() * v);
            }
        }
        for a in apply_stencil(2, self.dt.powi(-2), x) {
            worst = worst.max(a.abs() - self.a_max);
        }
        for j in apply_stencil(3, self.dt.powi(-3), x) {
            worst = worst.max(j.abs() - self.j_max);
        }
        worst
    }
}

/// Convergence certificate of one solve.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Max-norm of `Gw + s - h`.
    pub primal_residual: f64,
    /// Max-norm of the Lagrangian gradient, relative to the linear term.
    pub dual_residual: f64,
    /// Mean complementarity `s'z / m`.
    pub gap: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AxisSolution {
    pub x: Vec<f64>,
    /// Recovered outliers, one per observation.
    pub e: Vec<f64>,
    pub report: SolveReport,
}

/// Symmetric positive definite band matrix, lower band stored row-wise:
/// `band[i][k] = A[i][i-k]`.
#[derive(Clone)]
struct Band {
    n: usize,
    band: Vec<[f64; 4]>,
}

impl Band {
    fn zeros(n: usize) -> Self {
        Self { n, band: vec![[0.0; 4]; n] }
    }

    /// Adds `w * g g^T` for a stencil `g` starting at column `start`.
    fn add_outer(&mut self, start: usize, g: &[f64], w: f64) {
        for (a, ga) in g.iter().enumerate() {
            for (b, gb) in g.iter().enumerate().take(a + 1) {
                self.band[start + a][a - b] += w * ga * gb;
            }
        }
    }

    /// In-place Cholesky; `false` if a pivot is not positive.
    fn factor(&mut self) -> bool {
        for i in 0..self.n {
            for k in (1..4).rev() {
                if k > i {
                    continue;
                }
                let j = i - k;
                // L[i][j] = (A[i][j] - sum_{m<j} L[i][m] L[j][m]) / L[j][j]
                let mut s = self.band[i][k];
                for m in (k + 1)..4 {
                    if m > i {
                        break;
                    }
                    // column i-m, present in both rows i and j when m-k <= 3
                    s -= self.band[i][m] * self.band[j][m - k];
                }
                self.band[i][k] = s / self.band[j][0];
            }
            let mut d = self.band[i][0];
            for k in 1..4.min(i + 1) {
                d -= self.band[i][k] * self.band[i][k];
            }
            if !(d > 0.0 && d.is_finite()) {
                return false;
            }
            self.band[i][0] = d.sqrt();
        }
        true
    }

    fn solve(&self, rhs: &mut [f64]) {
        for i in 0..self.n {
            let mut s = rhs[i];
            for k in 1..4.min(i + 1) {
                s -= self.band[i][k] * rhs[i - k];
            }
            rhs[i] = s / self.band[i][0];
        }
        for i in (0..self.n).rev() {
            let mut s = rhs[i];
            for k in 1..4 {
                if i + k < self.n {
                    s -= self.band[i + k][k] * rhs[i + k];
                }
            }
            rhs[i] = s / self.band[i][0];
        }
    }
}

/// One inequality row on `x`: `sign * D^(k)[start] x <= bound`.
#[derive(Debug, Clone, Copy)]
struct Row {
    order: usize,
    start: usize,
    coef: f64,
    bound: f64,
}

/// The program with unit-step stencils: smoothness weights and bounds
/// absorb the powers of `dt`, which keeps the rows well scaled.
struct Qp<'a> {
    prob: &'a RectificationProblem,
    z: Vec<f64>,
    rows: Vec<Row>,
    /// Smoothness weights for orders 2 and 3.
    smooth_w: [(usize, f64); 2],
    /// `dt^-k`, converting row residuals back to physical units.
    unit: [f64; 4],
    /// Smoothness Hessian.
    smooth: Band,
}

impl<'a> Qp<'a> {
    fn new(prob: &'a RectificationProblem, offset: f64) -> Self {
        let n = prob.n;
        let dt = prob.dt;
        let unit = [0, 1, 2, 3].map(|k| dt.powi(-(k as i32)));
        let mut rows = Vec::new();
        if let Some(dir) = prob.monotone {
            for i in 0..n - 1 {
                rows.push(Row { order: 1, start: i, coef: -dir.sign(), bound: 0.0 });
            }
        }
        for (k, bound) in [(2, prob.a_max), (3, prob.j_max)] {
            for i in 0..n - k {
                rows.push(Row { order: k, start: i, coef: 1.0, bound: bound / unit[k] });
                rows.push(Row { order: k, start: i, coef: -1.0, bound: bound / unit[k] });
            }
        }
        let smooth_w = [(2, prob.weights.lambda2 * unit[2] * unit[2]), (3, prob.weights.lambda3 * unit[3] * unit[3])];
        let mut smooth = Band::zeros(n);
        for (k, w) in smooth_w {
            for i in 0..n - k {
                smooth.add_outer(i, STENCILS[k], 2.0 * w);
            }
        }
        Self { prob, z: prob.z.iter().map(|v| v - offset).collect(), rows, smooth_w, unit, smooth }
    }

    fn row_dot(&self, r: &Row, x: &[f64]) -> f64 {
        r.coef * STENCILS[r.order].iter().zip(&x[r.start..]).map(|(c, v)| c * v).sum::<f64>()
    }

    /// Smoothness Hessian times `x`.
    fn smooth_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        for (k, w) in self.smooth_w {
            let st = STENCILS[k];
            for i in 0..x.len() - k {
                let d: f64 = st.iter().zip(&x[i..]).map(|(c, v)| c * v).sum();
                for (j, c) in st.iter().enumerate() {
                    out[i + j] += 2.0 * w * c * d;
                }
            }
        }
        out
    }

    fn objective(&self, x: &[f64], p: &[f64], q: &[f64]) -> f64 {
        let prob = self.prob;
        let fit: f64 =
            prob.observed.iter().enumerate().map(|(i, &o)| (self.z[i] - x[o] - p[i] + q[i]).powi(2)).sum();
        let smooth: f64 = 0.5 * self.smooth_mul(x).iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        let l1: f64 = p.iter().chain(q).sum::<f64>() * prob.weights.lambda1;
        fit + smooth + l1
    }
}

impl Qp<'_> {
    /// A least-squares line through the data, with the outlier split
    /// absorbing the misfit: primal feasible up to slack floors.
    fn initial_point(&self) -> Iterate {
        let prob = self.prob;
        let (n, m, nr) = (prob.n, prob.observed.len(), self.rows.len());
        let mi = prob.observed.iter().map(|&i| i as f64).sum::<f64>() / m as f64;
        let mz = self.z.iter().sum::<f64>() / m as f64;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (&i, z) in prob.observed.iter().zip(&self.z) {
            sxy += (i as f64 - mi) * (z - mz);
            sxx += (i as f64 - mi).powi(2);
        }
        let mut slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
        if let Some(dir) = prob.monotone {
            if slope * dir.sign() < 0.0 {
                slope = 0.0;
            }
        }
        let x: Vec<f64> = (0..n).map(|i| mz + slope * (i as f64 - mi)).collect();
        let mut p = vec![0.0; m];
        let mut q = vec![0.0; m];
        for (k, &o) in prob.observed.iter().enumerate() {
            let d = self.z[k] - x[o];
            p[k] = d.max(0.0) + 1.0;
            q[k] = (-d).max(0.0) + 1.0;
        }
        let mut s = vec![0.0; nr + 2 * m];
        for (r_i, r) in self.rows.iter().enumerate() {
            s[r_i] = (r.bound - self.row_dot(r, &x)).max(0.1 * r.bound.max(1e-3));
        }
        s[nr..nr + m].copy_from_slice(&p);
        s[nr + m..].copy_from_slice(&q);
        Iterate { x, p, q, s, lam: vec![1.0; nr + 2 * m] }
    }

    /// Max-norm of the primal residual with `x` rows in physical units.
    fn physical_primal(&self, prim: &[f64]) -> f64 {
        let rows = self.rows.iter().zip(prim).map(|(r, v)| (v * self.unit[r.order]).abs());
        let bounds = prim[self.rows.len()..].iter().map(|v| v.abs());
        rows.chain(bounds).fold(0.0, f64::max)
    }
}

/// Interior-point iterate. Inequalities are ordered: the `x` rows, then
/// `-p <= 0`, then `-q <= 0`.
#[derive(Clone)]
struct Iterate {
    x: Vec<f64>,
    p: Vec<f64>,
    q: Vec<f64>,
    s: Vec<f64>,
    lam: Vec<f64>,
}

struct Residuals {
    rx: Vec<f64>,
    rp_var: Vec<f64>,
    rq_var: Vec<f64>,
    prim: Vec<f64>,
    /// Largest term entering the stationarity sums.
    dual_scale: f64,
}

impl Qp<'_> {
    fn residuals(&self, it: &Iterate) -> Residuals {
        let m = self.prob.observed.len();
        let nr = self.rows.len();
        let mut rx = self.smooth_mul(&it.x);
        let mut scale = inf_norm(&rx).max(self.prob.weights.lambda1);
        let mut rp_var = vec![self.prob.weights.lambda1; m];
        let mut rq_var = vec![self.prob.weights.lambda1; m];
        for (i, &o) in self.prob.observed.iter().enumerate() {
            let res = self.z[i] - it.x[o] - it.p[i] + it.q[i];
            rx[o] -= 2.0 * res;
            rp_var[i] -= 2.0 * res + it.lam[nr + i];
            rq_var[i] += 2.0 * res - it.lam[nr + m + i];
            scale = scale.max((2.0 * res).abs()).max(it.lam[nr + i]).max(it.lam[nr + m + i]);
        }
        let mut prim = vec![0.0; nr + 2 * m];
        let mut glam = vec![0.0; self.prob.n];
        for (r_i, r) in self.rows.iter().enumerate() {
            let l = it.lam[r_i] * r.coef;
            for (j, c) in STENCILS[r.order].iter().enumerate() {
                glam[r.start + j] += c * l;
                scale = scale.max((c * l).abs());
            }
            prim[r_i] = self.row_dot(r, &it.x) + it.s[r_i] - r.bound;
        }
        for (a, g) in rx.iter_mut().zip(&glam) {
            *a += g;
        }
        for i in 0..m {
            prim[nr + i] = -it.p[i] + it.s[nr + i];
            prim[nr + m + i] = -it.q[i] + it.s[nr + m + i];
        }
        Residuals { rx, rp_var, rq_var, prim, dual_scale: 1.0 + scale }
    }

    /// Solves the Newton system for complementarity target `rc`, returning
    /// `(dx, dp, dq, ds, dlam)`.
    #[allow(clippy::type_complexity)]
    fn newton(
        &self,
        it: &Iterate,
        res: &Residuals,
        rc: &[f64],
    ) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
        let n = self.prob.n;
        let m = self.prob.observed.len();
        let nr = self.rows.len();
        let d: Vec<f64> = it.lam.iter().zip(&it.s).map(|(l, s)| l / s).collect();
        // t = S^-1 (rc - Lam r_prim); rhs_w = -r_dual + G^T t
        let t: Vec<f64> = (0..d.len()).map(|k| (rc[k] - it.lam[k] * res.prim[k]) / it.s[k]).collect();

        let mut kmat = Band { n, band: self.smooth.band.clone() };
        let mut rhs_x: Vec<f64> = res.rx.iter().map(|v| -v).collect();
        for (r_i, r) in self.rows.iter().enumerate() {
            let st = STENCILS[r.order];
            kmat.add_outer(r.start, st, d[r_i]);
            for (j, c) in st.iter().enumerate() {
                rhs_x[r.start + j] += r.coef * c * t[r_i];
            }
        }
        let mut rhs_p = vec![0.0; m];
        let mut rhs_q = vec![0.0; m];
        let mut dets = vec![0.0; m];
        for (i, &o) in self.prob.observed.iter().enumerate() {
            let (dp, dq) = (d[nr + i], d[nr + m + i]);
            rhs_p[i] = -res.rp_var[i] - t[nr + i];
            rhs_q[i] = -res.rq_var[i] - t[nr + m + i];
            let det = 2.0 * dp + 2.0 * dq + dp * dq;
            dets[i] = det;
            kmat.band[o][0] += 2.0 * dp * dq / det;
            rhs_x[o] -= (2.0 * dq * rhs_p[i] - 2.0 * dp * rhs_q[i]) / det;
        }
        // rounding can leave a tiny negative pivot once some constraint
        // scalings are huge; retry with a growing diagonal shift
        let scale = kmat.band.iter().map(|r| r[0]).fold(0.0, f64::max);
        let mut shift = 0.0;
        loop {
            let mut trial = kmat.clone();
            for r in trial.band.iter_mut() {
                r[0] += shift;
            }
            if trial.factor() {
                kmat = trial;
                break;
            }
            shift = if shift == 0.0 { scale * 1e-14 } else { shift * 100.0 };
            if shift > scale * 1e-6 {
                return None;
            }
        }
        let mut dx = rhs_x;
        kmat.solve(&mut dx);
        let mut dpv = vec![0.0; m];
        let mut dqv = vec![0.0; m];
        for (i, &o) in self.prob.observed.iter().enumerate() {
            let (dp, dq) = (d[nr + i], d[nr + m + i]);
            let a = rhs_p[i] - 2.0 * dx[o];
            let b = rhs_q[i] + 2.0 * dx[o];
            dpv[i] = ((2.0 + dq) * a + 2.0 * b) / dets[i];
            dqv[i] = (2.0 * a + (2.0 + dp) * b) / dets[i];
        }
        // ds = -r_prim - G dw
        let mut ds = vec![0.0; nr + 2 * m];
        for (r_i, r) in self.rows.iter().enumerate() {
            ds[r_i] = -res.prim[r_i] - self.row_dot(r, &dx);
        }
        for i in 0..m {
            ds[nr + i] = -res.prim[nr + i] + dpv[i];
            ds[nr + m + i] = -res.prim[nr + m + i] + dqv[i];
        }
        let dlam: Vec<f64> = (0..ds.len()).map(|k| (-rc[k] - it.lam[k] * ds[k]) / it.s[k]).collect();
        Some((dx, dpv, dqv, ds, dlam))
    }
}

type Step = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

impl Qp<'_> {
    /// Residual of the full Newton system at a computed step, in the same
    /// layout as the right-hand side so a second solve corrects it.
    fn newton_defect(&self, it: &Iterate, res: &Residuals, rc: &[f64], step: &Step) -> (Residuals, Vec<f64>) {
        let (dx, dp, dq, ds, dl) = step;
        let m = self.prob.observed.len();
        let nr = self.rows.len();
        let mut ex = self.smooth_mul(dx);
        let mut ep = vec![0.0; m];
        let mut eq = vec![0.0; m];
        for (i, &o) in self.prob.observed.iter().enumerate() {
            let u = 2.0 * (dx[o] + dp[i] - dq[i]);
            ex[o] += u;
            ep[i] += u - dl[nr + i] + res.rp_var[i];
            eq[i] += -u - dl[nr + m + i] + res.rq_var[i];
        }
        let mut prim = vec![0.0; nr + 2 * m];
        for (r_i, r) in self.rows.iter().enumerate() {
            for (j, c) in STENCILS[r.order].iter().enumerate() {
                ex[r.start + j] += r.coef * c * dl[r_i];
            }
            prim[r_i] = self.row_dot(r, dx) + ds[r_i] + res.prim[r_i];
        }
        for (a, b) in ex.iter_mut().zip(&res.rx) {
            *a += b;
        }
        for i in 0..m {
            prim[nr + i] = -dp[i] + ds[nr + i] + res.prim[nr + i];
            prim[nr + m + i] = -dq[i] + ds[nr + m + i] + res.prim[nr + m + i];
        }
        let ec: Vec<f64> = (0..rc.len()).map(|k| it.lam[k] * ds[k] + it.s[k] * dl[k] + rc[k]).collect();
        (Residuals { rx: ex, rp_var: ep, rq_var: eq, prim, dual_scale: res.dual_scale }, ec)
    }

    /// Newton step plus one round of iterative refinement.
    fn refined_newton(&self, it: &Iterate, res: &Residuals, rc: &[f64]) -> Option<Step> {
        let mut step = self.newton(it, res, rc)?;
        let (defect, dc) = self.newton_defect(it, res, rc, &step);
        if let Some(fix) = self.newton(it, &defect, &dc) {
            let add = |a: &mut Vec<f64>, b: &[f64]| a.iter_mut().zip(b).for_each(|(u, v)| *u += v);
            add(&mut step.0, &fix.0);
            add(&mut step.1, &fix.1);
            add(&mut step.2, &fix.2);
            add(&mut step.3, &fix.3);
            add(&mut step.4, &fix.4);
        }
        Some(step)
    }
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter().zip(dv).filter(|(_, d)| **d < 0.0).map(|(v, d)| -v / d).fold(1.0f64 / 0.0, f64::min)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

/// Solves one axis.
pub fn rectify_axis(problem: &RectificationProblem, tolerance: f64, max_iterations: usize) -> Result<AxisSolution> {
    problem.validate()?;
    let m = problem.observed.len();
    let offset = problem.z.iter().sum::<f64>() / m as f64;
    let qp = Qp::new(problem, offset);

    let mut it = qp.initial_point();
    let inner_tol = tolerance * 1e-3;
    let mut report = SolveReport::default();
    // past the conditioning floor the iterates can drift; keep the best one
    let mut best: Option<(f64, Iterate, SolveReport)> = None;
    let mut stale = 0;
    for iter in 0..=max_iterations {
        let res = qp.residuals(&it);
        let mu = it.s.iter().zip(&it.lam).map(|(a, b)| a * b).sum::<f64>() / it.s.len() as f64;
        let dual = inf_norm(&res.rx).max(inf_norm(&res.rp_var)).max(inf_norm(&res.rq_var)) / res.dual_scale;
        let primal = qp.physical_primal(&res.prim);
        report = SolveReport {
            iterations: iter,
            primal_residual: primal,
            dual_residual: dual,
            gap: mu,
            objective: qp.objective(&it.x, &it.p, &it.q),
        };
        let obj_scale = 1.0 + report.objective.abs();
        // rounding floor of a third difference of positions this large
        let floor = 64.0 * f64::EPSILON * (1.0 + inf_norm(&it.x)) * qp.unit[3];
        if primal <= inner_tol.max(floor) && dual <= inner_tol && mu * it.s.len() as f64 <= inner_tol * obj_scale
        {
            break;
        }
        let merit = (primal / tolerance.max(floor))
            .max(dual / tolerance)
            .max(mu * it.s.len() as f64 / (tolerance * obj_scale));
        if best.as_ref().map_or(true, |b| merit < b.0) {
            best = Some((merit, it.clone(), report));
            stale = 0;
        } else {
            stale += 1;
            if best.as_ref().is_some_and(|b| b.0 <= 1.0) && stale >= 5 {
                break;
            }
        }
        if iter == max_iterations {
            break;
        }

        // predictor
        let rc_aff: Vec<f64> = it.s.iter().zip(&it.lam).map(|(a, b)| a * b).collect();
        let Some((_, _, _, ds_a, dl_a)) = qp.refined_newton(&it, &res, &rc_aff) else { break };
        let a_aff = max_step(&it.s, &ds_a).min(max_step(&it.lam, &dl_a)).min(1.0);
        let mu_aff = it
            .s
            .iter()
            .zip(&ds_a)
            .zip(it.lam.iter().zip(&dl_a))
            .map(|((s, ds), (l, dl))| (s + a_aff * ds) * (l + a_aff * dl))
            .sum::<f64>()
            / it.s.len() as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector
        let rc: Vec<f64> =
            (0..it.s.len()).map(|k| it.s[k] * it.lam[k] + ds_a[k] * dl_a[k] - sigma * mu).collect();
        let Some((dx, dp, dq, ds, dl)) = qp.refined_newton(&it, &res, &rc) else { break };
        let alpha = (0.99 * max_step(&it.s, &ds).min(max_step(&it.lam, &dl))).min(1.0);
        for (v, d) in it.x.iter_mut().zip(&dx) {
            *v += alpha * d;
        }
        for (v, d) in it.p.iter_mut().zip(&dp) {
            *v += alpha * d;
        }
        for (v, d) in it.q.iter_mut().zip(&dq) {
            *v += alpha * d;
        }
        for (v, d) in it.s.iter_mut().zip(&ds) {
            *v += alpha * d;
        }
        for (v, d) in it.lam.iter_mut().zip(&dl) {
            *v += alpha * d;
        }
    }
    if let Some((merit, b_it, b_report)) = best {
        let cur = (report.primal_residual / tolerance)
            .max(report.dual_residual / tolerance)
            .max(report.gap * it.s.len() as f64 / (tolerance * (1.0 + report.objective.abs())));
        if merit < cur {
            it = b_it;
            report = SolveReport { iterations: report.iterations, ..b_report };
        }
    }

    let x: Vec<f64> = it.x.iter().map(|v| v + offset).collect();
    let e: Vec<f64> = it.p.iter().zip(&it.q).map(|(p, q)| p - q).collect();
    report.objective = problem.objective(&x, &e);
    let gap_ok = report.gap * it.s.len() as f64 <= tolerance * (1.0 + report.objective.abs());
    if !(report.primal_residual <= tolerance && report.dual_residual <= tolerance && gap_ok) {
        return Err(Error::NonConvergence {
            iterations: report.iterations,
            primal: report.primal_residual,
            dual: report.dual_residual,
            gap: report.gap,
        });
    }
    Ok(AxisSolution { x, e, report })
}

/// `theta = atan2(D1 y, D1 x)`; a step with no displacement repeats the
/// previous angle (zero at the start).
pub fn steering_angles(x: &[f64], y: &[f64], dt: f64) -> Vec<f64> {
    assert_eq!(x.len(), y.len(), "axis lengths differ");
    if x.len() < 2 {
        return Vec::new();
    }
    let vx = apply_stencil(1, 1.0 / dt, x);
    let vy = apply_stencil(1, 1.0 / dt, y);
    let mut prev = 0.0;
    vx.iter()
        .zip(&vy)
        .map(|(&a, &b)| {
            if a != 0.0 || b != 0.0 {
                prev = b.atan2(a);
            }
            prev
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Merges a chain's fragments onto one grid and rectifies both axes.
///
/// Grids shorter than 4 frames are passed through unsolved
/// (`solved == false`), with gaps filled linearly.
pub fn rectify_trajectory(id: impl Into<String>, chain: &[&Fragment], config: &RectifierConfig) -> Result<Trajectory> {
    config.validate()?;
    let id = id.into();
    if chain.is_empty() {
        return Err(Error::InvalidProblem(format!("trajectory {id} has no fragments")));
    }
    let mut order: Vec<&Fragment> = chain.to_vec();
    order.sort_by(|a, b| a.t_start().total_cmp(&b.t_start()));
    for w in order.windows(2) {
        if w[1].t_start() <= w[0].t_end() {
            return Err(Error::InvalidProblem(format!("fragments {} and {} overlap in time", w[0].id, w[1].id)));
        }
    }
    let points: Vec<Point> = order.iter().flat_map(|f| f.points.iter().copied()).collect();
    let grid = resample_to_grid(&points, config.dt)?;
    let direction = order[0].direction;
    let length = median(&mut order.iter().map(|f| f.length).collect::<Vec<_>>());
    let width = median(&mut order.iter().map(|f| f.width).collect::<Vec<_>>());
    let observed = grid.observed_indices();
    let zx: Vec<f64> = observed.iter().map(|&i| grid.x[i]).collect();
    let zy: Vec<f64> = observed.iter().map(|&i| grid.y[i]).collect();
    let n = grid.len();

    let (x, y, ex, ey, solved) = if n < 4 {
        warn!("trajectory {id}: {n} frames, too short to rectify; passing through");
        let fill = |z: &[f64]| -> Vec<f64> {
            let mut out = vec![0.0; n];
            for w in observed.windows(2) {
                let k = observed.iter().position(|&o| o == w[0]).unwrap();
                for (i, v) in out.iter_mut().enumerate().take(w[1] + 1).skip(w[0]) {
                    let f = (i - w[0]) as f64 / (w[1] - w[0]) as f64;
                    *v = z[k] * (1.0 - f) + z[k + 1] * f;
                }
            }
            if observed.len() == 1 {
                out[0] = z[0];
            }
            out
        };
        (fill(&zx), fill(&zy), vec![0.0; zx.len()], vec![0.0; zy.len()], false)
    } else {
        let base = RectificationProblem {
            z: zx,
            observed: observed.clone(),
            n,
            dt: config.dt,
            weights: config.weights,
            a_max: config.a_max,
            j_max: config.j_max,
            monotone: Some(direction),
        };
        let lat = RectificationProblem { z: zy, weights: config.lateral(), monotone: None, ..base.clone() };
        let sx = rectify_axis(&base, config.tolerance, config.max_iterations)?;
        let sy = rectify_axis(&lat, config.tolerance, config.max_iterations)?;
        (sx.x, sy.x, sx.e, sy.e, true)
    };

    let d = |k: usize, v: &[f64]| differentiate(v, k, config.dt);
    Ok(Trajectory {
        id,
        fragment_ids: order.iter().map(|f| f.id.clone()).collect(),
        t: grid.t,
        vx: d(1, &x),
        vy: d(1, &y),
        ax: d(2, &x),
        ay: d(2, &y),
        jx: d(3, &x),
        jy: d(3, &y),
        theta: steering_angles(&x, &y, config.dt),
        x,
        y,
        ex,
        ey,
        length,
        width,
        direction,
        solved,
    })
}
