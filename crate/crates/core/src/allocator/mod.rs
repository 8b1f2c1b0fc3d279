//! Joint power allocation and symbol scheduling.
//!
//! The binary schedule is relaxed through Big-M constraints, the sum rate is
//! split into a difference of concave functions, and a penalty CCP solves a
//! sequence of convex subproblems whose slack variables push the relaxed
//! schedule toward `{0, 1}`.

mod barrier;
mod ccp;
mod dc;
mod projgrad;
mod subproblem;

pub use barrier::{solve_subproblem, SolverOptions, SolverReport};
pub use ccp::{initial_state, penalty_ccp, round_schedule, CcpConfig, CcpOutcome, CcpTraceRow};
pub use dc::{dc_decompose, grad_zbar, linearize_z, DcTerms, RateModel};
pub use projgrad::{solve_subproblem_projected, ProjGradReport};
pub use subproblem::{build_subproblem, SubproblemSpec};

use crate::tensor::Tensor3;

/// Powers `rho`, relaxed schedule `s` in `[0, 1]` and penalty slacks `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationState {
    pub rho: Tensor3<f64>,
    pub s: Tensor3<f64>,
    pub a: Tensor3<f64>,
}

impl AllocationState {
    /// `max |s (s - 1)|`.
    pub fn binary_gap(&self) -> f64 {
        self.s.iter().fold(0.0, |m, s| m.max((s * (s - 1.0)).abs()))
    }
}
