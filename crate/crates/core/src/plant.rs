//! Nonlinear warm-water supply plant: six water temperatures (heat pump,
//! pipe 1, tank layers 1-3, pipe 2) driven by the heat-pump power `u` and
//! the outside temperature `w`.
//!
//! The right-hand side is a fixed polynomial with 42 coefficients. The
//! default coefficients are bundled in `data/plant_coefficients.json`; any
//! other set with the same layout can be loaded from a file.

use std::path::Path;

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Water temperatures `x1..x6` in °C.
pub type State = [f64; 6];

pub const STATE_DIM: usize = 6;
pub const COEFFICIENT_COUNT: usize = 42;

/// Admissible temperature envelope. Leaving it is reported as divergence.
pub const DIVERGENCE_LOW: f64 = -50.0;
pub const DIVERGENCE_HIGH: f64 = 150.0;

const BUNDLED_COEFFICIENTS: &str = include_str!("../data/plant_coefficients.json");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("non-finite state")]
    NonFinite,
    #[error("integration interval must be positive, got {0} s")]
    NonPositiveInterval(f64),
    #[error("state left [{DIVERGENCE_LOW}, {DIVERGENCE_HIGH}] °C at t = {time} s: {state:?}")]
    Diverged { time: f64, state: State },
    #[error("step size underflow at t = {time} s (h = {step:e} s)")]
    StepUnderflow { time: f64, step: f64 },
    #[error("step {index} failed: {source}")]
    AtIndex {
        index: usize,
        #[source]
        source: Box<PlantError>,
    },
    #[error("input sequences differ in length ({u} vs {w}) or are empty")]
    SequenceLength { u: usize, w: usize },
    #[error("invalid coefficient file: {0}")]
    InvalidFile(String),
}

/// Coefficients of the polynomial vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    a: [f64; COEFFICIENT_COUNT],
    output_index: usize,
}

#[derive(Serialize, Deserialize)]
struct CoefficientFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    version: Option<u32>,
    a: Vec<f64>,
    output_index: usize,
}

impl Default for PlantModel {
    fn default() -> Self {
        Self::bundled()
    }
}

impl PlantModel {
    /// The bundled default coefficient set.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_COEFFICIENTS).expect("bundled coefficient file is valid")
    }

    pub fn new(a: [f64; COEFFICIENT_COUNT]) -> Self {
        Self { a, output_index: 5 }
    }

    pub fn from_json(text: &str) -> Result<Self, PlantError> {
        let file: CoefficientFile =
            serde_json::from_str(text).map_err(|e| PlantError::InvalidFile(e.to_string()))?;
        if file.a.len() != COEFFICIENT_COUNT {
            return Err(PlantError::InvalidFile(format!(
                "expected {COEFFICIENT_COUNT} coefficients, found {}",
                file.a.len()
            )));
        }
        if file.output_index != 5 {
            return Err(PlantError::InvalidFile(format!(
                "output_index must be 5 (third tank layer), found {}",
                file.output_index
            )));
        }
        if file.a.iter().any(|v| !v.is_finite()) {
            return Err(PlantError::InvalidFile("non-finite coefficient".into()));
        }
        let mut a = [0.0; COEFFICIENT_COUNT];
        a.copy_from_slice(&file.a);
        Ok(Self {
            a,
            output_index: file.output_index,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PlantError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| PlantError::InvalidFile(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let file = CoefficientFile {
            version: Some(1),
            a: self.a.to_vec(),
            output_index: self.output_index,
        };
        serde_json::to_string_pretty(&file).expect("coefficients serialize")
    }

    pub fn coefficients(&self) -> &[f64; COEFFICIENT_COUNT] {
        &self.a
    }

    /// 1-based coefficient accessor, `coef(1)` is `a1`.
    #[inline]
    pub fn coef(&self, i: usize) -> f64 {
        self.a[i - 1]
    }

    /// 1-based index of the measured state.
    pub fn output_index(&self) -> usize {
        self.output_index
    }

    pub fn vector_field(&self, x: &State, u: f64, w: f64) -> Result<State, PlantError> {
        if x.iter().any(|v| !v.is_finite()) || !u.is_finite() || !w.is_finite() {
            return Err(PlantError::NonFinite);
        }
        Ok(self.rhs(x, u, w))
    }

    /// Right-hand side without input validation; used inside the integrators.
    #[inline]
    pub fn rhs(&self, x: &State, u: f64, w: f64) -> State {
        let a = &self.a;
        let [x1, x2, x3, x4, x5, x6] = *x;
        let (x3s, x4s, x5s) = (x3 * x3, x4 * x4, x5 * x5);
        [
            a[0] * x1 + a[1] * x6 + a[2] * u,
            a[3] * x1 + a[4] * x2 + a[5] * w,
            a[6] * x2
                + a[7] * x3
                + a[8] * x4
                + a[9] * x3s
                + a[10] * x4s
                + a[11] * x3s * x4
                + a[12] * x3 * x4s
                + a[13] * x3s * x3
                + a[14] * x4s * x4
                + a[15] * w,
            a[16] * x3
                + a[17] * x4
                + a[18] * x5
                + a[19] * x3s
                + a[20] * x4s
                + a[21] * x5s
                + a[22] * x3s * x4
                + a[23] * x3 * x4s
                + a[24] * x4s * x5
                + a[25] * x4 * x5s
                + a[26] * x3s * x3
                + a[27] * x4s * x4
                + a[28] * x5s * x5
                + a[29] * w,
            a[30] * x4
                + a[31] * x5
                + a[32] * x4s
                + a[33] * x5s
                + a[34] * x4s * x5
                + a[35] * x4 * x5s
                + a[36] * x4s * x4
                + a[37] * x5s * x5
                + a[38] * w,
            a[39] * x5 + a[40] * x6 + a[41] * w,
        ]
    }

    /// Analytic Jacobians `(∂f/∂x, ∂f/∂u, ∂f/∂w)`.
    ///
    /// `u` and `w` enter linearly, so the input columns are constant.
    pub fn jacobian(&self, x: &State) -> (Matrix6<f64>, Vector6<f64>, Vector6<f64>) {
        let a = &self.a;
        let [_, _, x3, x4, x5, _] = *x;
        let mut j = Matrix6::zeros();

        j[(0, 0)] = a[0];
        j[(0, 5)] = a[1];

        j[(1, 0)] = a[3];
        j[(1, 1)] = a[4];

        j[(2, 1)] = a[6];
        j[(2, 2)] = a[7]
            + 2.0 * a[9] * x3
            + 2.0 * a[11] * x3 * x4
            + a[12] * x4 * x4
            + 3.0 * a[13] * x3 * x3;
        j[(2, 3)] = a[8]
            + 2.0 * a[10] * x4
            + a[11] * x3 * x3
            + 2.0 * a[12] * x3 * x4
            + 3.0 * a[14] * x4 * x4;

        j[(3, 2)] = a[16]
            + 2.0 * a[19] * x3
            + 2.0 * a[22] * x3 * x4
            + a[23] * x4 * x4
            + 3.0 * a[26] * x3 * x3;
        j[(3, 3)] = a[17]
            + 2.0 * a[20] * x4
            + a[22] * x3 * x3
            + 2.0 * a[23] * x3 * x4
            + 2.0 * a[24] * x4 * x5
            + a[25] * x5 * x5
            + 3.0 * a[27] * x4 * x4;
        j[(3, 4)] = a[18]
            + 2.0 * a[21] * x5
            + a[24] * x4 * x4
            + 2.0 * a[25] * x4 * x5
            + 3.0 * a[28] * x5 * x5;

        j[(4, 3)] = a[30]
            + 2.0 * a[32] * x4
            + 2.0 * a[34] * x4 * x5
            + a[35] * x5 * x5
            + 3.0 * a[36] * x4 * x4;
        j[(4, 4)] = a[31]
            + 2.0 * a[33] * x5
            + a[34] * x4 * x4
            + 2.0 * a[35] * x4 * x5
            + 3.0 * a[37] * x5 * x5;

        j[(5, 4)] = a[39];
        j[(5, 5)] = a[40];

        let b_u = Vector6::new(a[2], 0.0, 0.0, 0.0, 0.0, 0.0);
        let b_w = Vector6::new(0.0, a[5], a[15], a[29], a[38], a[41]);
        (j, b_u, b_w)
    }
}

/// Measured output: the third tank layer, `x5`.
#[inline]
pub fn output(x: &State) -> f64 {
    x[4]
}

/// Time integrator used over one zero-order-hold interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Integrator {
    /// Embedded Dormand-Prince 5(4) pair with a hard substep ceiling below
    /// the explicit stability limit of the fastest mode.
    DormandPrince { abs_tol: f64, max_substep: f64 },
    /// L-stable TR-BDF2 with Newton iterations on the analytic Jacobian and
    /// step-doubling error control.
    TrBdf2 { abs_tol: f64, max_substep: f64 },
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator::DormandPrince {
            abs_tol: 1e-8,
            max_substep: 2e-4,
        }
    }
}

impl Integrator {
    pub fn implicit() -> Self {
        Integrator::TrBdf2 {
            abs_tol: 1e-8,
            max_substep: 60.0,
        }
    }

    /// Same method with the substep ceiling halved.
    pub fn halved(self) -> Self {
        match self {
            Integrator::DormandPrince {
                abs_tol,
                max_substep,
            } => Integrator::DormandPrince {
                abs_tol,
                max_substep: max_substep / 2.0,
            },
            Integrator::TrBdf2 {
                abs_tol,
                max_substep,
            } => Integrator::TrBdf2 {
                abs_tol,
                max_substep: max_substep / 2.0,
            },
        }
    }
}

/// Anything the closed loop can drive with a held input over one period.
pub trait PlantDynamics: Sync {
    fn step(&self, x: &State, u: f64, w: f64, h: f64) -> Result<State, PlantError>;

    fn output(&self, x: &State) -> f64 {
        output(x)
    }
}

/// A plant model paired with its integrator settings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Plant {
    pub model: PlantModel,
    pub integrator: Integrator,
}

impl Plant {
    pub fn new(model: PlantModel, integrator: Integrator) -> Self {
        Self { model, integrator }
    }

    /// Advance `x` by `h` seconds with `u` and `w` held constant.
    pub fn step(&self, x: &State, u: f64, w: f64, h: f64) -> Result<State, PlantError> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(PlantError::NonPositiveInterval(h));
        }
        if x.iter().any(|v| !v.is_finite()) || !u.is_finite() || !w.is_finite() {
            return Err(PlantError::NonFinite);
        }
        match self.integrator {
            Integrator::DormandPrince {
                abs_tol,
                max_substep,
            } => dormand_prince(&self.model, x, u, w, h, abs_tol, max_substep),
            Integrator::TrBdf2 {
                abs_tol,
                max_substep,
            } => tr_bdf2(&self.model, x, u, w, h, abs_tol, max_substep),
        }
    }

    /// Repeated [`Plant::step`] under zero-order hold. Returns `n + 1` states.
    pub fn simulate(
        &self,
        x0: &State,
        u_seq: &[f64],
        w_seq: &[f64],
        h: f64,
    ) -> Result<Vec<State>, PlantError> {
        if u_seq.len() != w_seq.len() || u_seq.is_empty() {
            return Err(PlantError::SequenceLength {
                u: u_seq.len(),
                w: w_seq.len(),
            });
        }
        let mut states = Vec::with_capacity(u_seq.len() + 1);
        states.push(*x0);
        let mut x = *x0;
        for (index, (&u, &w)) in u_seq.iter().zip(w_seq).enumerate() {
            x = self
                .step(&x, u, w, h)
                .map_err(|source| PlantError::AtIndex {
                    index,
                    source: Box::new(source),
                })?;
            states.push(x);
        }
        Ok(states)
    }
}

impl PlantDynamics for Plant {
    fn step(&self, x: &State, u: f64, w: f64, h: f64) -> Result<State, PlantError> {
        Plant::step(self, x, u, w, h)
    }
}

fn check_envelope(time: f64, x: &State) -> Result<(), PlantError> {
    if x
        .iter()
        .all(|v| v.is_finite() && (DIVERGENCE_LOW..=DIVERGENCE_HIGH).contains(v))
    {
        Ok(())
    } else {
        Err(PlantError::Diverged { time, state: *x })
    }
}

#[inline]
fn axpy(y: &State, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..STATE_DIM {
            out[i] += c * k[i];
        }
    }
    out
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b_hat
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn dormand_prince(
    model: &PlantModel,
    x0: &State,
    u: f64,
    w: f64,
    span: f64,
    abs_tol: f64,
    max_substep: f64,
) -> Result<State, PlantError> {
    let f = |x: &State| model.rhs(x, u, w);
    let mut t = 0.0;
    let mut x = *x0;
    let mut h = max_substep.min(span);
    let mut k1 = f(&x);
    let min_step = span * 1e-14;

    while t < span {
        let last = t + h >= span;
        if last {
            h = span - t;
        }
        let k2 = f(&axpy(&x, &[(h * A21, &k1)]));
        let k3 = f(&axpy(&x, &[(h * A31, &k1), (h * A32, &k2)]));
        let k4 = f(&axpy(&x, &[(h * A41, &k1), (h * A42, &k2), (h * A43, &k3)]));
        let k5 = f(&axpy(
            &x,
            &[(h * A51, &k1), (h * A52, &k2), (h * A53, &k3), (h * A54, &k4)],
        ));
        let k6 = f(&axpy(
            &x,
            &[
                (h * A61, &k1),
                (h * A62, &k2),
                (h * A63, &k3),
                (h * A64, &k4),
                (h * A65, &k5),
            ],
        ));
        let x_new = axpy(
            &x,
            &[
                (h * B1, &k1),
                (h * B3, &k3),
                (h * B4, &k4),
                (h * B5, &k5),
                (h * B6, &k6),
            ],
        );
        let k7 = f(&x_new);

        let mut err: f64 = 0.0;
        for i in 0..STATE_DIM {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            err = err.max(e.abs());
        }
        let ratio = err / abs_tol;

        if ratio <= 1.0 {
            t = if last { span } else { t + h };
            x = x_new;
            k1 = k7;
            check_envelope(t, &x)?;
        }
        let factor = if ratio == 0.0 {
            5.0
        } else {
            (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
        };
        let factor = if ratio.is_finite() { factor } else { 0.2 };
        h = (h * factor).min(max_substep);
        if h < min_step {
            return Err(PlantError::StepUnderflow { time: t, step: h });
        }
    }
    Ok(x)
}

const NEWTON_MAX_ITERS: usize = 25;

fn newton_solve(
    model: &PlantModel,
    guess: &State,
    coeff: f64,
    rhs_const: &State,
    u: f64,
    w: f64,
) -> Option<State> {
    // Solves y - coeff * f(y) = rhs_const.
    let mut y = Vector6::from_column_slice(guess);
    let c = Vector6::from_column_slice(rhs_const);
    for _ in 0..NEWTON_MAX_ITERS {
        let ya: State = y.into();
        let fy = Vector6::from_column_slice(&model.rhs(&ya, u, w));
        let g = y - coeff * fy - c;
        let (jx, _, _) = model.jacobian(&ya);
        let m = Matrix6::identity() - coeff * jx;
        let delta = m.lu().solve(&(-g))?;
        y += delta;
        if !y.iter().all(|v| v.is_finite()) {
            return None;
        }
        let scale = 1.0 + y.amax();
        if delta.amax() <= 1e-13 * scale {
            return Some(y.into());
        }
    }
    None
}

fn tr_bdf2_step(model: &PlantModel, x: &State, u: f64, w: f64, h: f64) -> Option<State> {
    let gamma = 2.0 - std::f64::consts::SQRT_2;
    let fx = model.rhs(x, u, w);
    // Trapezoidal stage to t + gamma*h.
    let half = 0.5 * gamma * h;
    let c1 = axpy(x, &[(half, &fx)]);
    let z = newton_solve(model, x, half, &c1, u, w)?;
    // BDF2 stage to t + h.
    let denom = gamma * (2.0 - gamma);
    let cz = 1.0 / denom;
    let cx = -(1.0 - gamma) * (1.0 - gamma) / denom;
    let d = (1.0 - gamma) / (2.0 - gamma);
    let mut c2 = [0.0; STATE_DIM];
    for i in 0..STATE_DIM {
        c2[i] = cz * z[i] + cx * x[i];
    }
    newton_solve(model, &z, d * h, &c2, u, w)
}

fn tr_bdf2(
    model: &PlantModel,
    x0: &State,
    u: f64,
    w: f64,
    span: f64,
    abs_tol: f64,
    max_substep: f64,
) -> Result<State, PlantError> {
    let mut t = 0.0;
    let mut x = *x0;
    let mut h = (1e-4f64).min(max_substep).min(span);
    let min_step = span * 1e-14;

    while t < span {
        let last = t + h >= span;
        if last {
            h = span - t;
        }
        let attempt = tr_bdf2_step(model, &x, u, w, h).and_then(|full| {
            let mid = tr_bdf2_step(model, &x, u, w, 0.5 * h)?;
            let fine = tr_bdf2_step(model, &mid, u, w, 0.5 * h)?;
            Some((full, fine))
        });
        let factor = match attempt {
            Some((full, fine)) => {
                let mut err: f64 = 0.0;
                let mut refined = fine;
                for i in 0..STATE_DIM {
                    let diff = (fine[i] - full[i]) / 3.0;
                    err = err.max(diff.abs());
                    refined[i] = fine[i] + diff;
                }
                let ratio = err / abs_tol;
                if ratio <= 1.0 {
                    t = if last { span } else { t + h };
                    x = refined;
                    check_envelope(t, &x)?;
                }
                if ratio == 0.0 {
                    4.0
                } else {
                    (0.9 * ratio.powf(-1.0 / 3.0)).clamp(0.2, 4.0)
                }
            }
            None => 0.25,
        };
        h = (h * factor).min(max_substep);
        if h < min_step {
            return Err(PlantError::StepUnderflow { time: t, step: h });
        }
    }
    Ok(x)
}
