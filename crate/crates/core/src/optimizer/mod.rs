//! Convex QP and mixed-integer QP solvers, plus the condensed MPC problem.

mod bnb;
mod condense;
mod problem;
mod qp;

pub use bnb::{solve_miqp, to_qp, MiqpOptions, MiqpSolution, MiqpStatus};
pub use condense::{
    build_horizon_problem, condense, lifted_box, CondensedMaps, HorizonBounds, HorizonProblem,
    TrackingWeights, OUTPUT_ROW,
};
pub use problem::{
    Constraint, LinExpr, MiqpProblem, ProblemBuilder, Sense, VarId, VarKind, Variable,
};
pub use qp::{
    kkt_report, solve_qp, InfeasibilityCertificate, KktReport, QpOptions, QpProblem, QpSolution,
    QpStatus,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("objective is unbounded below on the feasible set")]
    Unbounded,
    #[error("{count} binary variables exceed the limit of {limit}")]
    TooManyBinaries { count: usize, limit: usize },
}
