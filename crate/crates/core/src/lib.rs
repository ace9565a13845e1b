//! Koopman-predictor model predictive control with signal temporal logic
//! constraints for a nonlinear warm-water supply plant.
//!
//! The crate is organised bottom-up:
//!
//! * [`plant`]: the nonlinear six-state plant and its integrators.
//! * [`predictor`]: lifted linear predictors (EDMD fit and local linearization).
//! * [`stl`]: bounded STL parsing, robustness monitoring and big-M encoding.
//! * [`optimizer`]: condensing, dense convex QP and branch-and-bound MIQP.
//! * [`mpc`]: the receding-horizon controller, closed loop and feasibility sweep.

pub mod plant;

pub use plant::{output, Integrator, Plant, PlantDynamics, PlantError, PlantModel, State};
pub mod linalg;
pub mod predictor;
pub mod optimizer;
pub mod stl;
pub mod mpc;
