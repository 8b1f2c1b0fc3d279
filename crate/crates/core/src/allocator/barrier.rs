//! Log-barrier path-following solver for the CCP subproblem.
//!
//! The barrier Hessian splits into a block-diagonal part `D` (one `3K x 3K`
//! block per resource block, holding every per-symbol constraint and C4) plus
//! a low-rank coupling `B^T W B`, where `B` sums the users' powers of a block
//! and `W` carries the objective curvature and the budget constraint. Newton
//! steps are solved exactly through that structure: a small QR factorization
//! per block and one `MN x MN` Cholesky factorization for the coupling.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

use super::subproblem::{Point, SubproblemSpec};
use super::AllocationState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Target duality gap relative to `1 + |objective|`.
    pub tol: f64,
    pub max_newton_steps: usize,
    /// Barrier parameter growth per centering.
    pub barrier_growth: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_newton_steps: 2000,
            barrier_growth: 10.0,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

/// KKT diagnostics of a returned point. Multipliers are the barrier estimates
/// `lambda_c = 1 / (t (-g_c))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverReport {
    pub newton_steps: usize,
    pub centerings: usize,
    pub duality_gap: f64,
    pub stationarity: f64,
    pub complementarity: f64,
    pub primal_infeasibility: f64,
    pub objective: f64,
}

struct Barrier<'a> {
    spec: &'a SubproblemSpec,
    k: usize,
    mn: usize,
}

impl<'a> Barrier<'a> {
    fn new(spec: &'a SubproblemSpec) -> Self {
        let mn = spec.model.blocks();
        Self {
            spec,
            k: spec.len() / mn,
            mn,
        }
    }

    /// Per-element constraint values `[g2, g3, g5, g6, g7, g8]`.
    #[inline]
    fn element(&self, p: &Point, e: usize) -> [f64; 6] {
        let (x, s, a) = (p.x[e], p.s[e], p.a[e]);
        [
            -x,
            x - s,
            s - 1.0 + self.spec.eps - x,
            s * s - s,
            self.spec.c0[e] + self.spec.c1[e] * s - a,
            -a,
        ]
    }

    fn c4(&self, p: &Point, b: usize) -> f64 {
        (0..self.k).map(|i| p.s[b + self.mn * i]).sum::<f64>() - 1.0
    }

    fn c1(&self, p: &Point) -> f64 {
        p.x.iter().sum::<f64>() - 1.0
    }

    fn strictly_feasible(&self, p: &Point) -> bool {
        (0..self.spec.len()).all(|e| self.element(p, e).iter().all(|g| *g < 0.0))
            && (0..self.mn).all(|b| self.c4(p, b) < 0.0)
            && self.c1(p) < 0.0
    }

    /// `t (-f) - sum log(-g)`, or `+inf` outside the interior.
    fn phi(&self, p: &Point, t: f64) -> f64 {
        if !self.strictly_feasible(p) {
            return f64::INFINITY;
        }
        let mut barrier = 0.0;
        for e in 0..self.spec.len() {
            barrier -= self.element(p, e).iter().map(|g| (-g).ln()).sum::<f64>();
        }
        for b in 0..self.mn {
            barrier -= (-self.c4(p, b)).ln();
        }
        barrier -= (-self.c1(p)).ln();
        -t * self.spec.value(p) + barrier
    }

    /// Gradient of `phi` as `(x, s, a)` vectors.
    fn gradient(&self, p: &Point, t: f64, u: &[f64]) -> Point {
        let spec = self.spec;
        let len = spec.len();
        let gq = spec.model.grad_q_occupancy(u);
        let c1 = self.c1(p);
        let mut g = Point {
            x: vec![0.0; len],
            s: vec![0.0; len],
            a: vec![0.0; len],
        };
        for e in 0..len {
            let b = e % self.mn;
            let [g2, g3, g5, g6, g7, g8] = self.element(p, e);
            let c4 = self.c4(p, b);
            g.x[e] = t * (spec.grad_z[e] - gq[b]) - 1.0 / -g2 + 1.0 / -g3 - 1.0 / -g5 + 1.0 / -c1;
            g.s[e] =
                -1.0 / -g3 + 1.0 / -g5 + (2.0 * p.s[e] - 1.0) / -g6 + spec.c1[e] / -g7 + 1.0 / -c4;
            g.a[e] = t * spec.xi - 1.0 / -g7 - 1.0 / -g8;
        }
        g
    }

    /// Solves `H dz = -grad` through the block/low-rank structure.
    fn newton_step(&self, p: &Point, t: f64, u: &[f64], grad: &Point) -> Result<Point> {
        let spec = self.spec;
        let (k, mn) = (self.k, self.mn);
        let dim = 3 * k;
        let c1 = self.c1(p);

        let mut w = spec.model.neg_hess_q_occupancy(u) * t;
        w.add_scalar_mut(1.0 / (c1 * c1));

        let mut solved_rhs = Vec::with_capacity(mn);
        let mut solved_ones = Vec::with_capacity(mn);
        let mut s_diag = DVector::zeros(mn);
        let mut v_rhs = DVector::zeros(mn);
        for b in 0..mn {
            // D_b = A^T A with one row of A per barrier term, each row a
            // constraint gradient scaled by 1 / g. Factoring A by QR instead
            // of forming D keeps the conditioning at cond(A), which matters
            // once several constraints of a block are nearly active.
            let mut a = DMatrix::<f64>::zeros(7 * k + 1, dim);
            let mut r = DVector::<f64>::zeros(dim);
            let c4 = self.c4(p, b);
            for i in 0..k {
                let e = b + mn * i;
                let (xi, si, ai) = (i, k + i, 2 * k + i);
                let [g2, g3, g5, g6, g7, g8] = self.element(p, e);
                let row = 7 * i;
                a[(row, xi)] = -1.0 / g2;
                a[(row + 1, xi)] = 1.0 / g3;
                a[(row + 1, si)] = -1.0 / g3;
                a[(row + 2, xi)] = -1.0 / g5;
                a[(row + 2, si)] = 1.0 / g5;
                a[(row + 3, si)] = (2.0 * p.s[e] - 1.0) / g6;
                a[(row + 4, si)] = (2.0 / -g6).sqrt();
                a[(row + 5, si)] = spec.c1[e] / g7;
                a[(row + 5, ai)] = -1.0 / g7;
                a[(row + 6, ai)] = -1.0 / g8;
                r[xi] = -grad.x[e];
                r[si] = -grad.s[e];
                r[ai] = -grad.a[e];
            }
            for i in 0..k {
                a[(7 * k, k + i)] = 1.0 / c4;
            }
            let tri = a.qr().r();
            let solve = |rhs: &DVector<f64>| -> Result<DVector<f64>> {
                tri.tr_solve_upper_triangular(rhs)
                    .and_then(|z| tri.solve_upper_triangular(&z))
                    .filter(|y| y.iter().all(|v| v.is_finite()))
                    .ok_or_else(|| Error::Numerical(format!("barrier block {b} is singular")))
            };
            let mut ones = DVector::zeros(dim);
            ones.rows_mut(0, k).fill(1.0);
            let y = solve(&r)?;
            let z = solve(&ones)?;
            s_diag[b] = z.rows(0, k).sum();
            v_rhs[b] = y.rows(0, k).sum();
            solved_rhs.push(y);
            solved_ones.push(z);
        }

        // (S^-1 + W) v = S^-1 B D^-1 r, then dz = D^-1 r - D^-1 B^T W v.
        let mut lhs = w.clone();
        for b in 0..mn {
            lhs[(b, b)] += 1.0 / s_diag[b];
            v_rhs[b] /= s_diag[b];
        }
        let v = lhs
            .cholesky()
            .ok_or_else(|| {
                Error::Numerical("coupled Newton system is not positive definite".into())
            })?
            .solve(&v_rhs);
        let wv = &w * v;

        let len = spec.len();
        let mut step = Point {
            x: vec![0.0; len],
            s: vec![0.0; len],
            a: vec![0.0; len],
        };
        for b in 0..mn {
            let dz = &solved_rhs[b] - &solved_ones[b] * wv[b];
            for i in 0..k {
                let e = b + mn * i;
                step.x[e] = dz[i];
                step.s[e] = dz[k + i];
                step.a[e] = dz[2 * k + i];
            }
        }
        Ok(step)
    }

    /// Largest step keeping every linear constraint (and `0 < s < 1`) strict.
    fn max_step(&self, p: &Point, d: &Point) -> f64 {
        let mut alpha = f64::INFINITY;
        let mut limit = |g: f64, dg: f64| {
            if dg > 0.0 {
                alpha = alpha.min(-g / dg);
            }
        };
        for e in 0..self.spec.len() {
            let [g2, g3, g5, _, g7, g8] = self.element(p, e);
            limit(g2, -d.x[e]);
            limit(g3, d.x[e] - d.s[e]);
            limit(g5, d.s[e] - d.x[e]);
            limit(-p.s[e], -d.s[e]);
            limit(p.s[e] - 1.0, d.s[e]);
            limit(g7, self.spec.c1[e] * d.s[e] - d.a[e]);
            limit(g8, -d.a[e]);
        }
        for b in 0..self.mn {
            limit(
                self.c4(p, b),
                (0..self.k).map(|i| d.s[b + self.mn * i]).sum(),
            );
        }
        limit(self.c1(p), d.x.iter().sum());
        alpha
    }
}

fn axpy(p: &Point, alpha: f64, d: &Point) -> Point {
    let f = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| u + alpha * v).collect();
    Point {
        x: f(&p.x, &d.x),
        s: f(&p.s, &d.s),
        a: f(&p.a, &d.a),
    }
}

fn dot(a: &Point, b: &Point) -> f64 {
    let f = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
    f(&a.x, &b.x) + f(&a.s, &b.s) + f(&a.a, &b.a)
}

fn inf_norm(p: &Point) -> f64 {
    p.x.iter()
        .chain(&p.s)
        .chain(&p.a)
        .fold(0.0, |m, v| m.max(v.abs()))
}

/// Strictly feasible start near the warm point: blend toward the center just
/// enough to leave the boundary.
fn interior_start(b: &Barrier<'_>, warm: &Point) -> Result<Point> {
    let spec = b.spec;
    let center = spec.center()?;
    let mut theta = 1e-3;
    loop {
        let mut p = Point {
            x: warm
                .x
                .iter()
                .zip(&center.x)
                .map(|(w, c)| (1.0 - theta) * w + theta * c)
                .collect(),
            s: warm
                .s
                .iter()
                .zip(&center.s)
                .map(|(w, c)| (1.0 - theta) * w + theta * c)
                .collect(),
            a: vec![0.0; spec.len()],
        };
        for e in 0..spec.len() {
            p.a[e] = spec.tight_slack(e, p.s[e]) + theta;
        }
        if b.strictly_feasible(&p) {
            return Ok(p);
        }
        if theta >= 1.0 {
            return Err(Error::Numerical(
                "could not find a strictly feasible start".into(),
            ));
        }
        theta = (theta * 10.0).min(1.0);
    }
}

/// Solves the subproblem from a warm start (the previous CCP iterate).
pub fn solve_subproblem(
    spec: &SubproblemSpec,
    warm: &AllocationState,
    options: &SolverOptions,
) -> Result<(AllocationState, SolverReport)> {
    let barrier = Barrier::new(spec);
    let warm_point = spec.anchored(warm);
    let mut p = interior_start(&barrier, &warm_point)?;
    let m_c = spec.num_constraints() as f64;
    let mut t = (m_c / (1.0 + spec.value(&p).abs())).max(1.0);
    let mut newton_steps = 0;
    let mut centerings = 0;
    let mut last_grad_norm;

    loop {
        // Centering by damped Newton.
        loop {
            let u = spec.model.received(&spec.model.occupancy(&p.x), spec.n0);
            let grad = barrier.gradient(&p, t, &u);
            let step = barrier.newton_step(&p, t, &u, &grad)?;
            let slope = dot(&grad, &step);
            last_grad_norm = inf_norm(&grad);
            let phi0 = barrier.phi(&p, t);
            // A decrement below the resolution of phi cannot be acted on.
            if -slope / 2.0 <= 1e-10_f64.max(1e-13 * phi0.abs()) {
                break;
            }
            if newton_steps >= options.max_newton_steps {
                return Err(Error::IterationLimit {
                    iterations: newton_steps,
                    stationarity: last_grad_norm / t,
                    complementarity: 1.0 / t,
                });
            }
            newton_steps += 1;
            let mut alpha = (0.99 * barrier.max_step(&p, &step)).min(1.0);
            let mut next = axpy(&p, alpha, &step);
            while barrier.phi(&next, t) > phi0 + 0.25 * alpha * slope {
                alpha *= 0.5;
                if alpha < 1e-14 {
                    break;
                }
                next = axpy(&p, alpha, &step);
            }
            // Steps whose decrease is below the resolution of phi are an
            // Armijo pass by rounding, not progress.
            if alpha < 1e-14 || barrier.phi(&next, t) >= phi0 {
                break;
            }
            p = next;
        }
        centerings += 1;
        let objective = spec.value(&p);
        let gap = m_c / t;
        if gap <= options.tol * (1.0 + objective.abs()) {
            let report = SolverReport {
                newton_steps,
                centerings,
                duality_gap: gap,
                stationarity: last_grad_norm / t,
                complementarity: 1.0 / t,
                primal_infeasibility: spec.violation(&p).max(0.0),
                objective,
            };
            return Ok((spec.to_state(&p), report));
        }
        t *= options.barrier_growth;
    }
}
