//! Accelerated projected-gradient solver for the CCP subproblem.
//!
//! A slower cross-check of the barrier solver: FISTA with backtracking and
//! adaptive restart, projecting onto the constraint polyhedron with Hildreth's
//! dual coordinate ascent. Only meant for small grids.

use crate::error::{Error, Result};

use super::subproblem::{Point, SubproblemSpec};
use super::AllocationState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjGradReport {
    pub iterations: usize,
    pub objective: f64,
}

/// Halfspace `sum coeff * z[idx] <= rhs` over the flat vector `[x | s | a]`.
struct Halfspace {
    idx: Vec<usize>,
    coeff: Vec<f64>,
    rhs: f64,
    norm2: f64,
}

impl Halfspace {
    fn new(idx: Vec<usize>, coeff: Vec<f64>, rhs: f64) -> Self {
        let norm2 = coeff.iter().map(|c| c * c).sum();
        Self {
            idx,
            coeff,
            rhs,
            norm2,
        }
    }

    fn eval(&self, z: &[f64]) -> f64 {
        self.idx
            .iter()
            .zip(&self.coeff)
            .map(|(i, c)| c * z[*i])
            .sum::<f64>()
            - self.rhs
    }
}

fn halfspaces(spec: &SubproblemSpec) -> Vec<Halfspace> {
    let len = spec.len();
    let mn = spec.model.blocks();
    let k = len / mn;
    let (xo, so, ao) = (0, len, 2 * len);
    let mut out = Vec::with_capacity(7 * len + mn + 1);
    for e in 0..len {
        out.push(Halfspace::new(vec![xo + e], vec![-1.0], 0.0));
        out.push(Halfspace::new(vec![xo + e, so + e], vec![1.0, -1.0], 0.0));
        out.push(Halfspace::new(
            vec![so + e, xo + e],
            vec![1.0, -1.0],
            1.0 - spec.eps,
        ));
        out.push(Halfspace::new(vec![so + e], vec![-1.0], 0.0));
        out.push(Halfspace::new(vec![so + e], vec![1.0], 1.0));
        out.push(Halfspace::new(
            vec![so + e, ao + e],
            vec![spec.c1[e], -1.0],
            -spec.c0[e],
        ));
        out.push(Halfspace::new(vec![ao + e], vec![-1.0], 0.0));
    }
    for b in 0..mn {
        out.push(Halfspace::new(
            (0..k).map(|i| so + b + mn * i).collect(),
            vec![1.0; k],
            1.0,
        ));
    }
    out.push(Halfspace::new((0..len).collect(), vec![1.0; len], 1.0));
    out
}

/// Euclidean projection onto `{z : G z <= h}` by Hildreth's method.
fn project(cons: &[Halfspace], y: &[f64]) -> Vec<f64> {
    let mut z = y.to_vec();
    let mut lambda = vec![0.0; cons.len()];
    for _ in 0..200_000 {
        let mut moved: f64 = 0.0;
        for (c, lam) in cons.iter().zip(lambda.iter_mut()) {
            let delta = (c.eval(&z) / c.norm2).max(-*lam);
            if delta != 0.0 {
                *lam += delta;
                for (i, coef) in c.idx.iter().zip(&c.coeff) {
                    z[*i] -= delta * coef;
                }
                moved = moved.max(delta.abs() * c.norm2.sqrt());
            }
        }
        if moved < 1e-15 {
            break;
        }
    }
    z
}

fn split(spec: &SubproblemSpec, z: &[f64]) -> Point {
    let len = spec.len();
    Point {
        x: z[..len].to_vec(),
        s: z[len..2 * len].to_vec(),
        a: z[2 * len..].to_vec(),
    }
}

fn flatten(p: &Point) -> Vec<f64> {
    p.x.iter().chain(&p.s).chain(&p.a).copied().collect()
}

/// Negated objective; `+inf` where the logarithms are undefined.
fn loss(spec: &SubproblemSpec, z: &[f64]) -> f64 {
    let len = spec.len();
    if z[..len].iter().any(|x| *x < -1e-9) {
        return f64::INFINITY;
    }
    -spec.value(&split(spec, z))
}

fn loss_grad(spec: &SubproblemSpec, z: &[f64]) -> Vec<f64> {
    let len = spec.len();
    let mn = spec.model.blocks();
    let u = spec
        .model
        .received(&spec.model.occupancy(&z[..len]), spec.n0);
    let gq = spec.model.grad_q_occupancy(&u);
    let mut g = vec![0.0; 3 * len];
    for e in 0..len {
        g[e] = spec.grad_z[e] - gq[e % mn];
        g[2 * len + e] = spec.xi;
    }
    g
}

pub fn solve_subproblem_projected(
    spec: &SubproblemSpec,
    warm: &AllocationState,
    max_iterations: usize,
) -> Result<(AllocationState, ProjGradReport)> {
    let cons = halfspaces(spec);
    let mut z = project(&cons, &flatten(&spec.anchored(warm)));
    if !loss(spec, &z).is_finite() {
        return Err(Error::Numerical(
            "projected start has an undefined objective".into(),
        ));
    }
    let mut z_prev = z.clone();
    let mut momentum = 1.0f64;
    let mut lip = 1.0f64;
    let mut f_z = loss(spec, &z);
    for it in 1..=max_iterations {
        let next_m = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next_m;
        let mut y: Vec<f64> = z
            .iter()
            .zip(&z_prev)
            .map(|(a, b)| a + beta * (a - b))
            .collect();
        let mut f_y = loss(spec, &y);
        if !f_y.is_finite() {
            y = z.clone();
            f_y = f_z;
        }
        let g = loss_grad(spec, &y);
        let candidate = loop {
            let step: Vec<f64> = y.iter().zip(&g).map(|(v, d)| v - d / lip).collect();
            let c = project(&cons, &step);
            let diff: Vec<f64> = c.iter().zip(&y).map(|(a, b)| a - b).collect();
            let model = f_y
                + g.iter().zip(&diff).map(|(a, b)| a * b).sum::<f64>()
                + 0.5 * lip * diff.iter().map(|d| d * d).sum::<f64>();
            let f_c = loss(spec, &c);
            if f_c <= model + 1e-12 * (1.0 + model.abs()) {
                break c;
            }
            lip *= 2.0;
            if lip > 1e20 {
                return Err(Error::Numerical("step size collapsed".into()));
            }
        };
        let f_c = loss(spec, &candidate);
        let change = candidate
            .iter()
            .zip(&z)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if f_c > f_z {
            // Adaptive restart: drop momentum when the objective goes up.
            momentum = 1.0;
            z_prev = z.clone();
            continue;
        }
        z_prev = std::mem::replace(&mut z, candidate);
        f_z = f_c;
        momentum = next_m;
        lip = (lip * 0.9).max(1e-6);
        if change < 1e-11 {
            let p = split(spec, &z);
            return Ok((
                spec.to_state(&p),
                ProjGradReport {
                    iterations: it,
                    objective: spec.value(&p),
                },
            ));
        }
    }
    let p = split(spec, &z);
    Ok((
        spec.to_state(&p),
        ProjGradReport {
            iterations: max_iterations,
            objective: spec.value(&p),
        },
    ))
}
