//! Receding-horizon controller: per-step MIQP assembly with STL history,
//! closed-loop simulation against a plant, and the feasibility sweep.

mod sweep;
mod trace;

use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::optimizer::{
    build_horizon_problem, condense, lifted_box, solve_miqp, HorizonBounds, LinExpr, MiqpOptions,
    MiqpProblem, MiqpStatus, SolverError, TrackingWeights, VarId,
};
use crate::plant::{PlantDynamics, PlantError, State};
use crate::predictor::LinearPredictor;
use crate::stl::{self, EncodingConfig, EncodingStats, Encoder, Formula, Sample, StlError, SymbolicSignal};

pub use sweep::{feasibility_sweep, is_monotone, FeasibilityTable, SweepGrid};
pub use trace::{input_admissible, ClosedLoopTrace, RunSummary, StepStatus, TraceRow};

#[derive(Debug, Error)]
pub enum MpcError {
    #[error("invalid controller configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("trace file: {0}")]
    Trace(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub horizon: usize,
    pub h: f64,
    pub q: f64,
    pub r: f64,
    pub reference: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub end_time: f64,
    /// Formulas in concrete syntax; `end` resolves to `end_time`.
    pub specs: Vec<String>,
    pub w_forecast: f64,
    /// State box lifted through the observables into lifted-state bounds.
    pub state_box: Option<[f64; 2]>,
    pub eps: f64,
    pub big_m: f64,
    /// Input held before the first feasible plan.
    pub initial_input: f64,
    pub gap_tol: f64,
    pub max_nodes: usize,
    pub max_binaries: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            h: 60.0,
            q: 1.0,
            r: 10.0,
            reference: 40.0,
            u_min: 0.0,
            u_max: 26.5,
            end_time: 1200.0,
            specs: vec![stl::SUPPLY_SPEC.to_string(), stl::INPUT_SPEC.to_string()],
            w_forecast: 10.0,
            state_box: Some([0.0, 100.0]),
            eps: 1e-6,
            big_m: 1e4,
            initial_input: 0.005,
            gap_tol: 1e-6,
            max_nodes: 50_000,
            max_binaries: 128,
        }
    }
}

impl ControllerConfig {
    /// Number of trace rows, `end_time / h + 1`.
    pub fn steps(&self) -> usize {
        (self.end_time / self.h).round() as usize + 1
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        let bad = |m: String| Err(MpcError::Config(m));
        if self.horizon == 0 {
            return bad("horizon must be at least one step".into());
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            return bad(format!("sampling period {} must be positive", self.h));
        }
        if !(self.q > 0.0 && self.r > 0.0) {
            return bad(format!("weights must be positive (q = {}, r = {})", self.q, self.r));
        }
        if !(self.u_min <= self.u_max) {
            return bad(format!("input bounds [{}, {}] are empty", self.u_min, self.u_max));
        }
        let ratio = self.end_time / self.h;
        if !(self.end_time >= 0.0) || (ratio - ratio.round()).abs() > 1e-9 {
            return bad(format!(
                "end time {} is not a non-negative multiple of h = {}",
                self.end_time, self.h
            ));
        }
        if !(self.eps > 0.0 && self.big_m > 0.0) {
            return bad("eps and big_m must be positive".into());
        }
        for f in self.formulas()? {
            let inner = match &f {
                Formula::Always(_, a) | Formula::Eventually(_, a) => a.horizon(self.h)?,
                Formula::Until(_, a, b) => a.horizon(self.h)?.max(b.horizon(self.h)?),
                other => other.horizon(self.h)?,
            };
            if inner > self.horizon {
                return bad(format!(
                    "nested window of `{f}` needs {inner} steps, horizon is {}",
                    self.horizon
                ));
            }
        }
        Ok(())
    }

    /// Parsed specs with `end` resolved, in negation normal form.
    pub fn formulas(&self) -> Result<Vec<Formula>, MpcError> {
        self.specs
            .iter()
            .map(|s| Ok(stl::parse(s)?.resolve_end(self.end_time).nnf()?))
            .collect()
    }

    pub fn weights(&self) -> TrackingWeights {
        TrackingWeights {
            output: self.q,
            input: self.r,
            reference: self.reference,
        }
    }

    pub fn miqp_options(&self) -> MiqpOptions {
        MiqpOptions {
            gap_tol: self.gap_tol,
            max_nodes: self.max_nodes,
            max_binaries: self.max_binaries,
            ..Default::default()
        }
    }

    fn encoding(&self) -> EncodingConfig {
        EncodingConfig {
            big_m: self.big_m,
            eps: self.eps,
            h: self.h,
            defer_missing: true,
            const_tol: 1e-7,
        }
    }
}

/// Measured outputs `y_0..y_k` and applied inputs `u_0..u_{k-1}`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub y: Vec<f64>,
    pub u: Vec<f64>,
}

/// Named solution of the previous step, used to seed the next one.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WarmStart {
    pub inputs: Vec<f64>,
    pub named: HashMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepPlan {
    pub status: StepStatus,
    /// First input of the optimizer, or the incumbent's on a node limit.
    pub input: Option<f64>,
    pub inputs: Vec<f64>,
    pub predicted_y: Vec<f64>,
    pub objective: f64,
    pub binaries: usize,
    pub nodes: usize,
    pub encoding: EncodingStats,
    pub warm: Option<WarmStart>,
    pub solve_seconds: f64,
}

/// The MIQP solved at one step, before warm starting.
#[derive(Debug, Clone)]
pub struct StepProblem {
    pub problem: MiqpProblem,
    pub u_vars: Vec<VarId>,
    /// Predicted outputs `y_k..y_{k+Np}` as affine expressions.
    pub y_exprs: Vec<LinExpr>,
    pub encoding: EncodingStats,
}

/// Builds the step-`k` problem: condensed tracking cost, input and
/// lifted-state bounds, and every formula over history plus horizon.
pub fn assemble_step(
    cfg: &ControllerConfig,
    formulas: &[Formula],
    predictor: &LinearPredictor,
    history: &History,
    x: &State,
    k: usize,
) -> Result<StepProblem, MpcError> {
    if history.y.len() != k + 1 || history.u.len() != k {
        return Err(MpcError::Config(format!(
            "history at step {k} must hold {} outputs and {k} inputs (got {} and {})",
            k + 1,
            history.y.len(),
            history.u.len()
        )));
    }
    let np = cfg.horizon;
    let z0 = predictor.lift(x);
    let maps = condense(predictor, &z0, np, &vec![cfg.w_forecast; np])?;
    let bounds = HorizonBounds {
        u_min: cfg.u_min,
        u_max: cfg.u_max,
        z_box: cfg.state_box.map(|[lo, hi]| lifted_box(predictor, lo, hi)),
    };
    let mut hp = build_horizon_problem(&maps, &cfg.weights(), &bounds)?;

    let mut y: Vec<Sample> = history.y.iter().map(|v| Sample::Const(*v)).collect();
    y.extend(hp.y_exprs[1..].iter().cloned().map(Sample::Expr));
    let mut u: Vec<Sample> = history.u.iter().map(|v| Sample::Const(*v)).collect();
    u.extend(hp.u_vars.iter().map(|v| Sample::Expr(LinExpr::var(*v))));
    let signal = SymbolicSignal::new(cfg.h)?
        .with_channel("y", y)
        .with_channel("u", u);
    let enc_cfg = cfg.encoding();
    let mut stats = EncodingStats::default();
    for (j, f) in formulas.iter().enumerate() {
        let mut enc = Encoder::new(&mut hp.builder, &signal, &enc_cfg, &format!("f{j}_"));
        enc.require(f, 0)?;
        let s = enc.stats();
        stats.predicate_binaries += s.predicate_binaries;
        stats.conjunction_literals += s.conjunction_literals;
        stats.disjunction_literals += s.disjunction_literals;
        stats.linking_constraints += s.linking_constraints;
        stats.hard_constraints += s.hard_constraints;
        stats.deferred += s.deferred;
    }
    Ok(StepProblem {
        problem: hp.builder.build()?,
        u_vars: hp.u_vars,
        y_exprs: hp.y_exprs,
        encoding: stats,
    })
}

/// Plans the input at step `k` from the measured state `x`.
pub fn plan_step(
    cfg: &ControllerConfig,
    formulas: &[Formula],
    predictor: &LinearPredictor,
    history: &History,
    x: &State,
    k: usize,
    warm: Option<&WarmStart>,
) -> Result<StepPlan, MpcError> {
    let StepProblem {
        problem,
        u_vars,
        y_exprs,
        encoding: stats,
    } = assemble_step(cfg, formulas, predictor, history, x, k)?;

    let warm_vec = warm.map(|w| {
        let mut v = vec![0.0; problem.num_vars()];
        for (i, var) in u_vars.iter().enumerate() {
            // Shift the previous plan by one step; repeat its last input.
            let src = (i + 1).min(w.inputs.len().saturating_sub(1));
            v[var.0] = w.inputs.get(src).copied().unwrap_or(cfg.initial_input);
        }
        for (i, var) in problem.vars.iter().enumerate() {
            if let Some(name) = &var.name {
                if let Some(val) = w.named.get(name) {
                    v[i] = *val;
                }
            }
        }
        v
    });

    let started = Instant::now();
    let sol = solve_miqp(&problem, &cfg.miqp_options(), warm_vec.as_deref())?;
    let solve_seconds = started.elapsed().as_secs_f64();

    let status = match sol.status {
        MiqpStatus::Optimal => StepStatus::Optimal,
        MiqpStatus::Infeasible => StepStatus::Infeasible,
        MiqpStatus::NodeLimit => StepStatus::NodeLimit,
    };
    let binaries = problem.binaries().len();
    let (input, inputs, predicted_y, warm_out) = match &sol.x {
        Some(xs) => {
            let inputs: Vec<f64> = u_vars.iter().map(|v| xs[v.0]).collect();
            let predicted_y = y_exprs.iter().map(|e| e.eval(xs)).collect();
            let named = problem
                .vars
                .iter()
                .enumerate()
                .filter_map(|(i, v)| v.name.as_ref().map(|n| (n.clone(), xs[i])))
                .filter(|(n, _)| n.starts_with('f'))
                .collect();
            (
                Some(inputs[0]),
                inputs.clone(),
                predicted_y,
                Some(WarmStart { inputs, named }),
            )
        }
        None => (None, Vec::new(), Vec::new(), None),
    };
    Ok(StepPlan {
        status,
        input,
        inputs,
        predicted_y,
        objective: sol.objective,
        binaries,
        nodes: sol.nodes,
        encoding: stats,
        warm: warm_out,
        solve_seconds,
    })
}

/// Options for a closed-loop run beyond the controller configuration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunOptions {
    /// Stop at the first step without an optimal plan.
    pub stop_on_infeasible: bool,
}

/// Simulates the closed loop from `x0` for `cfg.steps()` samples.
///
/// Plant failures end the run early; the partial trace carries the reason
/// in [`ClosedLoopTrace::abort`].
pub fn run_closed_loop<P: PlantDynamics + ?Sized>(
    plant: &P,
    cfg: &ControllerConfig,
    predictor: &LinearPredictor,
    x0: &State,
    opts: RunOptions,
) -> Result<ClosedLoopTrace, MpcError> {
    cfg.validate()?;
    let formulas = cfg.formulas()?;
    let mut trace = ClosedLoopTrace::new(cfg.h, cfg.specs.clone());
    let mut history = History::default();
    let mut x = *x0;
    let mut warm: Option<WarmStart> = None;
    let mut previous = cfg.initial_input;
    let steps = cfg.steps();
    for k in 0..steps {
        let y = plant.output(&x);
        history.y.push(y);
        let plan = plan_step(cfg, &formulas, predictor, &history, &x, k, warm.as_ref())?;
        let u = plan.input.unwrap_or(previous);
        if plan.warm.is_some() {
            warm = plan.warm.clone();
        }
        trace.rows.push(TraceRow {
            k,
            t: k as f64 * cfg.h,
            x,
            u,
            w: cfg.w_forecast,
            y,
            status: plan.status,
            objective: plan.objective,
            binaries: plan.binaries,
            nodes: plan.nodes,
            solve_seconds: plan.solve_seconds,
        });
        history.u.push(u);
        previous = u;
        if opts.stop_on_infeasible && plan.status != StepStatus::Optimal {
            trace.abort = Some(format!("no optimal plan at step {k} ({})", plan.status));
            break;
        }
        if k + 1 == steps {
            break;
        }
        match plant.step(&x, u, cfg.w_forecast, cfg.h) {
            Ok(next) => x = next,
            Err(e) => {
                trace.abort = Some(format!("plant failed after step {k}: {e}"));
                break;
            }
        }
    }
    Ok(trace)
}
