//! Penalty convex-concave procedure over the convex subproblems.

use crate::access::AccessMask;
use crate::channel::UserChannel;
use crate::ddgrid::FrameParams;
use crate::error::{Error, Result};
use crate::linkmodel::{otfs_sum_rate, GridDomain, LinkBudget, PowerGrid};
use crate::tensor::Tensor3;

use super::barrier::{solve_subproblem, SolverOptions};
use super::dc::RateModel;
use super::subproblem::build_subproblem;
use super::AllocationState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcpConfig {
    pub xi0: f64,
    pub mu: f64,
    pub xi_max: f64,
    /// Stop when `||rho_{m+1} - rho_m||_1 <= delta1` ...
    pub delta1: f64,
    /// ... and `||A_{m+1} - A_m||_1 <= delta2`.
    pub delta2: f64,
    pub m_max: usize,
    pub eps_bigm: f64,
    pub solver_tol: f64,
}

impl CcpConfig {
    pub fn defaults(p0: f64, params: &FrameParams, k: usize) -> Self {
        Self {
            xi0: 1.0,
            mu: 3.0,
            xi_max: 1e4,
            delta1: 1e-3 * p0,
            delta2: 1e-4 * (params.mn() * k) as f64,
            m_max: 50,
            eps_bigm: 1e-6 * p0,
            solver_tol: 1e-7,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.xi0,
            self.xi_max,
            self.delta1,
            self.delta2,
            self.eps_bigm,
            self.solver_tol,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || !(self.mu >= 1.0) || self.m_max == 0 {
            return Err(Error::InvalidParameter(format!(
                "CCP settings must be positive with mu >= 1 and m_max >= 1: {self:?}"
            )));
        }
        Ok(())
    }
}

/// One CCP iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcpTraceRow {
    pub iteration: usize,
    /// Subproblem objective at the new point.
    pub objective: f64,
    /// Subproblem objective at the warm start (previous iterate).
    pub warm_objective: f64,
    /// `sum log2(1 + Gamma) / 2` at the new relaxed point.
    pub sum_rate: f64,
    pub slack_l1: f64,
    pub xi: f64,
    pub rho_change_l1: f64,
    pub slack_change_l1: f64,
    /// `max |s (s - 1)|`.
    pub binary_gap: f64,
    pub newton_steps: usize,
}

#[derive(Debug, Clone)]
pub struct CcpOutcome {
    pub state: AllocationState,
    pub trace: Vec<CcpTraceRow>,
    /// Whether the `delta1`/`delta2` test fired before `m_max`.
    pub converged: bool,
    pub schedule: AccessMask,
    pub power: PowerGrid,
    /// Sum rate (with the 1/2 pre-log) of the rounded schedule.
    pub sum_rate: f64,
    /// Sum rate of the final relaxed iterate.
    pub relaxed_sum_rate: f64,
}

impl CcpOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn final_slack_l1(&self) -> f64 {
        self.state.a.iter().sum()
    }
}

/// Uniform power on a mask with `s` equal to the mask.
pub fn initial_state(mask: &AccessMask, p0: f64) -> Result<AllocationState> {
    let power = crate::access::uniform_power(mask, p0)?;
    Ok(AllocationState {
        rho: power.rho,
        s: mask.to_f64(),
        a: {
            let (m, n, k) = mask.dims();
            Tensor3::zeros(m, n, k)
        },
    })
}

fn l1(a: &Tensor3<f64>, b: &Tensor3<f64>) -> f64 {
    a.l1_distance(b)
}

pub fn penalty_ccp(
    channels: &[UserChannel],
    params: &FrameParams,
    budget: &LinkBudget,
    config: &CcpConfig,
    init: AllocationState,
) -> Result<CcpOutcome> {
    config.validate()?;
    let model = RateModel::new(channels, params);
    let expected = model.dims();
    if init.rho.dims() != expected {
        return Err(crate::error::dim_mismatch(
            "initial allocation",
            format!("{expected:?}"),
            format!("{:?}", init.rho.dims()),
        ));
    }
    if init.rho.iter().any(|r| *r < 0.0) || init.rho.sum() > budget.p0 * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(
            "initial powers must be nonnegative and within the budget".into(),
        ));
    }
    let options = SolverOptions::with_tol(config.solver_tol);
    let mut state = init;
    let mut xi = config.xi0;
    let mut trace = Vec::new();
    let mut converged = false;
    for m in 0..config.m_max {
        let wrap = |e: Error| Error::Ccp {
            iteration: m + 1,
            source: Box::new(e),
        };
        let spec = build_subproblem(&model, &state, xi, budget, config.eps_bigm).map_err(wrap)?;
        let warm_objective = spec.value(&spec.anchored(&state));
        let (next, report) = solve_subproblem(&spec, &state, &options).map_err(wrap)?;
        let rho_change = l1(&next.rho, &state.rho);
        let slack_change = l1(&next.a, &state.a);
        let x: Vec<f64> = next.rho.iter().map(|r| r / budget.p0).collect();
        trace.push(CcpTraceRow {
            iteration: m + 1,
            objective: report.objective,
            warm_objective,
            sum_rate: 0.5 * model.rate(&x, budget.n0 / budget.p0),
            slack_l1: next.a.sum(),
            xi,
            rho_change_l1: rho_change,
            slack_change_l1: slack_change,
            binary_gap: next.binary_gap(),
            newton_steps: report.newton_steps,
        });
        state = next;
        xi = (config.mu * xi).min(config.xi_max);
        if rho_change <= config.delta1 && slack_change <= config.delta2 {
            converged = true;
            break;
        }
    }
    let (schedule, power) = round_schedule(&state, 0.5, budget.p0)?;
    let sum_rate = otfs_sum_rate(&power, channels, budget.n0, params)?;
    let relaxed = PowerGrid::new(state.rho.map(|r| r.max(0.0)), GridDomain::Dd)?;
    let relaxed_sum_rate = otfs_sum_rate(&relaxed, channels, budget.n0, params)?;
    Ok(CcpOutcome {
        state,
        trace,
        converged,
        schedule,
        power,
        sum_rate,
        relaxed_sum_rate,
    })
}

/// Thresholds `s` into a schedule, keeping the user with the largest power
/// when several exceed the threshold on one block, then rescales the
/// surviving powers to the budget.
pub fn round_schedule(
    state: &AllocationState,
    threshold: f64,
    p0: f64,
) -> Result<(AccessMask, PowerGrid)> {
    let (m, n, k) = state.s.dims();
    let mut s = Tensor3::filled(m, n, k, false);
    let mut rho = Tensor3::zeros(m, n, k);
    for kk in 0..n {
        for l in 0..m {
            let winner = (0..k)
                .filter(|&i| state.s[(l, kk, i)] > threshold)
                .max_by(|&a, &b| state.rho[(l, kk, a)].total_cmp(&state.rho[(l, kk, b)]));
            if let Some(i) = winner {
                s[(l, kk, i)] = true;
                rho[(l, kk, i)] = state.rho[(l, kk, i)].max(0.0);
            }
        }
    }
    let total = rho.sum();
    if total > 0.0 {
        let scale = p0 / total;
        rho.as_mut_slice().iter_mut().for_each(|r| *r *= scale);
    }
    Ok((AccessMask::new(s)?, PowerGrid::new(rho, GridDomain::Dd)?))
}
