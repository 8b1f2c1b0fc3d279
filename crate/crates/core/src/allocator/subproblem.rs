//! The convex subproblem solved at each penalty-CCP iteration.
//!
//! Internally every power is normalized by `P0`, so the budget reads
//! `sum x <= 1` and the Big-M constraints read `x <= s`, `x >= s - 1 + eps`.

use crate::error::{Error, Result};
use crate::linkmodel::LinkBudget;
use crate::tensor::Tensor3;

use super::dc::RateModel;
use super::AllocationState;

/// A point `(x, s, a)` in normalized units, each indexed `e = b + MN i`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Point {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub a: Vec<f64>,
}

/// Subproblem at iterate `m`: maximize
/// `Q(x) - Z_hat(x; x_m) - xi sum a` over C1-C8.
#[derive(Debug, Clone)]
pub struct SubproblemSpec {
    pub(crate) model: RateModel,
    pub(crate) p0: f64,
    pub(crate) n0: f64,
    pub(crate) x_m: Vec<f64>,
    pub(crate) grad_z: Vec<f64>,
    pub(crate) z_bar_m: f64,
    pub(crate) xi: f64,
    pub(crate) eps: f64,
    /// C7 reads `c0 + c1 s <= a`.
    pub(crate) c0: Vec<f64>,
    pub(crate) c1: Vec<f64>,
}

pub fn build_subproblem(
    model: &RateModel,
    at: &AllocationState,
    xi: f64,
    budget: &LinkBudget,
    eps_bigm: f64,
) -> Result<SubproblemSpec> {
    let (m, n, k) = model.dims();
    if at.rho.dims() != (m, n, k) || at.s.dims() != (m, n, k) {
        return Err(crate::error::dim_mismatch(
            "allocation state",
            format!("{:?}", (m, n, k)),
            format!("{:?}", at.rho.dims()),
        ));
    }
    if !(xi > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "penalty weight must be > 0, got {xi}"
        )));
    }
    if !(eps_bigm > 0.0) || eps_bigm >= budget.p0 {
        return Err(Error::Infeasible(format!(
            "Big-M margin {eps_bigm} must lie in (0, P0 = {})",
            budget.p0
        )));
    }
    let p0 = budget.p0;
    let n0 = budget.n0 / p0;
    let x_m: Vec<f64> = at.rho.iter().map(|r| r / p0).collect();
    let s_m = at.s.as_slice();
    let c1: Vec<f64> = s_m.iter().map(|s| 1.0 - 2.0 * s).collect();
    let c0: Vec<f64> = s_m
        .iter()
        .zip(&c1)
        .map(|(s, c)| s - s * s - c * s)
        .collect();
    Ok(SubproblemSpec {
        grad_z: model.grad_z(&x_m, n0),
        z_bar_m: model.z_bar(&x_m, n0),
        model: model.clone(),
        p0,
        n0,
        x_m,
        xi,
        eps: eps_bigm / p0,
        c0,
        c1,
    })
}

impl SubproblemSpec {
    pub fn xi(&self) -> f64 {
        self.xi
    }

    pub fn len(&self) -> usize {
        self.x_m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_m.is_empty()
    }

    /// Coefficients `(c0, c1)` of the linearized binary constraint
    /// `c0 + c1 s <= a` of element `e = b + MN i`.
    pub fn c7_coefficients(&self, e: usize) -> (f64, f64) {
        (self.c0[e], self.c1[e])
    }

    /// Number of scalar inequality constraints.
    pub(crate) fn num_constraints(&self) -> usize {
        6 * self.len() + self.model.blocks() + 1
    }

    /// `Q(x) - Z_hat(x) - xi sum a` in bits; the `log2 P0` offsets of `Q` and
    /// `Z_hat` cancel, so this equals the objective in physical units.
    pub(crate) fn value(&self, p: &Point) -> f64 {
        let lin: f64 = self
            .grad_z
            .iter()
            .zip(p.x.iter().zip(&self.x_m))
            .map(|(g, (x, xm))| g * (x - xm))
            .sum();
        self.model.q_bar(&p.x, self.n0) - self.z_bar_m - lin - self.xi * p.a.iter().sum::<f64>()
    }

    pub fn objective(&self, state: &AllocationState) -> f64 {
        self.value(&self.to_point(state))
    }

    /// Smallest feasible slack for a given `s`.
    pub(crate) fn tight_slack(&self, e: usize, s: f64) -> f64 {
        (self.c0[e] + self.c1[e] * s).max(0.0)
    }

    /// Largest violation of C1-C8 (0 when feasible), in normalized units.
    pub(crate) fn violation(&self, p: &Point) -> f64 {
        let mn = self.model.blocks();
        let k = self.len() / mn.max(1);
        let mut worst: f64 = 0.0;
        for e in 0..self.len() {
            let (x, s, a) = (p.x[e], p.s[e], p.a[e]);
            for g in [
                -x,
                x - s,
                s - 1.0 + self.eps - x,
                s * s - s,
                self.c0[e] + self.c1[e] * s - a,
                -a,
            ] {
                worst = worst.max(g);
            }
        }
        for b in 0..mn {
            worst = worst.max((0..k).map(|i| p.s[b + mn * i]).sum::<f64>() - 1.0);
        }
        worst.max(p.x.iter().sum::<f64>() - 1.0)
    }

    pub fn max_violation(&self, state: &AllocationState) -> f64 {
        self.violation(&self.to_point(state)) * self.p0
    }

    pub(crate) fn to_point(&self, state: &AllocationState) -> Point {
        Point {
            x: state.rho.iter().map(|r| r / self.p0).collect(),
            s: state.s.as_slice().to_vec(),
            a: state.a.as_slice().to_vec(),
        }
    }

    pub(crate) fn to_state(&self, p: &Point) -> AllocationState {
        let (m, n, k) = self.model.dims();
        let t = |v: Vec<f64>| Tensor3::from_vec(m, n, k, v).expect("length matches grid");
        AllocationState {
            rho: t(p.x.iter().map(|x| x * self.p0).collect()),
            s: t(p.s.clone()),
            a: t(p.a.clone()),
        }
    }

    /// The warm-start point with each slack set to its smallest feasible value.
    pub(crate) fn anchored(&self, state: &AllocationState) -> Point {
        let mut p = self.to_point(state);
        for e in 0..p.a.len() {
            p.a[e] = self.tight_slack(e, p.s[e]);
        }
        p
    }

    /// A strictly feasible point independent of the iterate.
    pub(crate) fn center(&self) -> Result<Point> {
        let len = self.len();
        let k = len / self.model.blocks().max(1);
        let s_c = 1.0 / (2.0 * k as f64);
        let lo = (s_c - 1.0 + self.eps).max(0.0);
        let hi = s_c.min(1.0 / len as f64);
        if lo >= hi {
            return Err(Error::Infeasible(format!(
                "no interior point: Big-M margin {} leaves an empty power interval",
                self.eps * self.p0
            )));
        }
        let x_c = 0.5 * (lo + hi);
        Ok(Point {
            x: vec![x_c; len],
            s: vec![s_c; len],
            a: (0..len).map(|e| self.tight_slack(e, s_c) + 1.0).collect(),
        })
    }
}
