//! Reference solutions of the per-axis rectification program from a generic
//! conic solver, built from dense operator definitions.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettingsBuilder, DefaultSolver, IPSolver, NonnegativeConeT, SolverStatus};
use trajrecon::rectify::RectificationProblem;

pub struct Reference {
    pub objective: f64,
    pub x: Vec<f64>,
    pub e: Vec<f64>,
}

/// Dense rows of the k-th difference operator in physical units.
fn diff_rows(k: usize, n: usize, dt: f64) -> Vec<Vec<(usize, f64)>> {
    // binomial coefficients with alternating sign, highest index positive
    let coeffs: Vec<f64> = (0..=k)
        .map(|j| {
            let binom = (0..j).fold(1.0, |acc, i| acc * (k - i) as f64 / (i + 1) as f64);
            let sign = if (k - j) % 2 == 0 { 1.0 } else { -1.0 };
            sign * binom / dt.powi(k as i32)
        })
        .collect();
    (0..n - k).map(|i| (0..=k).map(|j| (i + j, coeffs[j])).collect()).collect()
}

#[derive(Default)]
struct Rows {
    ai: Vec<usize>,
    aj: Vec<usize>,
    av: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    fn push(&mut self, entries: impl IntoIterator<Item = (usize, f64)>, bound: f64) {
        let row = self.b.len();
        for (c, v) in entries {
            self.ai.push(row);
            self.aj.push(c);
            self.av.push(v);
        }
        self.b.push(bound);
    }
}

pub fn solve(p: &RectificationProblem) -> Reference {
    let n = p.n;
    let m = p.observed.len();
    let nv = n + 2 * m;
    let (xi, pi, qi) = (|i: usize| i, |i: usize| n + i, |i: usize| n + m + i);

    let mut hess = std::collections::BTreeMap::<(usize, usize), f64>::new();
    let mut add = |a: usize, b: usize, v: f64| {
        let key = if a <= b { (a, b) } else { (b, a) };
        *hess.entry(key).or_insert(0.0) += v;
    };
    // solve for x - mean(z); differences are unchanged
    let offset = p.z.iter().sum::<f64>() / m as f64;
    let mut lin = vec![0.0; nv];
    for (i, (&o, z)) in p.observed.iter().zip(&p.z).enumerate() {
        let z = z - offset;
        // (z - x_o - p_i + q_i)^2
        let terms = [(xi(o), 1.0), (pi(i), 1.0), (qi(i), -1.0)];
        for &(a, ca) in &terms {
            lin[a] += -2.0 * z * ca;
            for &(b, cb) in &terms {
                if a <= b {
                    add(a, b, 2.0 * ca * cb);
                }
            }
        }
        lin[pi(i)] += p.weights.lambda1;
        lin[qi(i)] += p.weights.lambda1;
    }
    // the solver sees unit-step stencils; weights and bounds absorb dt
    for (k, w) in [(2, p.weights.lambda2), (3, p.weights.lambda3)] {
        let w = w / p.dt.powi(2 * k as i32);
        for row in diff_rows(k, n, 1.0) {
            for &(a, ca) in &row {
                for &(b, cb) in &row {
                    if a <= b {
                        add(a, b, 2.0 * w * ca * cb);
                    }
                }
            }
        }
    }
    let (mut pi_, mut pj, mut pv) = (vec![], vec![], vec![]);
    for ((a, b), v) in hess {
        pi_.push(a);
        pj.push(b);
        pv.push(v);
    }
    let pmat = CscMatrix::new_from_triplets(nv, nv, pi_, pj, pv);

    let mut a = Rows::default();
    if let Some(dir) = p.monotone {
        for r in diff_rows(1, n, 1.0) {
            a.push(r.iter().map(|&(c, v)| (c, -dir.sign() * v)), 0.0);
        }
    }
    for (k, bound) in [(2, p.a_max), (3, p.j_max)] {
        let bound = bound * p.dt.powi(k as i32);
        for r in diff_rows(k, n, 1.0) {
            a.push(r.iter().copied(), bound);
            a.push(r.iter().map(|&(c, v)| (c, -v)), bound);
        }
    }
    for i in 0..m {
        a.push([(pi(i), -1.0)], 0.0);
        a.push([(qi(i), -1.0)], 0.0);
    }
    let Rows { ai, aj, av, b: bvec } = a;
    let rows = bvec.len();
    let amat = CscMatrix::new_from_triplets(rows, nv, ai, aj, av);
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_gap_abs(1e-11)
        .tol_gap_rel(1e-11)
        .tol_feas(1e-11)
        .max_iter(500)
        .build()
        .unwrap();
    let cones = [NonnegativeConeT(rows)];
    let mut solver = DefaultSolver::new(&pmat, &lin, &amat, &bvec, &cones, settings).unwrap();
    solver.solve();
    let status = solver.solution.status;
    assert!(
        matches!(status, SolverStatus::Solved | SolverStatus::AlmostSolved),
        "reference solver status {status:?}"
    );
    let w = &solver.solution.x;
    let x: Vec<f64> = w[..n].iter().map(|v| v + offset).collect();
    let e: Vec<f64> = (0..m).map(|i| w[pi(i)] - w[qi(i)]).collect();
    let objective = objective(p, &x, &e);
    Reference { objective, x, e }
}

/// Objective evaluated with dense difference rows.
pub fn objective(p: &RectificationProblem, x: &[f64], e: &[f64]) -> f64 {
    let mut total = 0.0;
    for ((&o, z), e) in p.observed.iter().zip(&p.z).zip(e) {
        total += (z - x[o] - e).powi(2) + p.weights.lambda1 * e.abs();
    }
    for (k, w) in [(2, p.weights.lambda2), (3, p.weights.lambda3)] {
        for row in diff_rows(k, p.n, p.dt) {
            let d: f64 = row.iter().map(|&(c, v)| v * x[c]).sum();
            total += w * d * d;
        }
    }
    total
}

/// Largest constraint violation, from dense difference rows.
pub fn violation(p: &RectificationProblem, x: &[f64]) -> f64 {
    let apply = |k: usize| -> Vec<f64> {
        diff_rows(k, p.n, p.dt).iter().map(|row| row.iter().map(|&(c, v)| v * x[c]).sum()).collect()
    };
    let mut worst = 0.0f64;
    if let Some(dir) = p.monotone {
        worst = apply(1).iter().fold(worst, |w, v| w.max(-dir.sign() * v));
    }
    worst = apply(2).iter().fold(worst, |w, a| w.max(a.abs() - p.a_max));
    apply(3).iter().fold(worst, |w, j| w.max(j.abs() - p.j_max))
}
