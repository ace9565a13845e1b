//! Linear predictors for the nonlinear plant.
//!
//! Two constructions share one interface ([`LinearPredictor`]):
//!
//! * a Koopman/EDMD predictor on monomial observables, fitted by least
//!   squares from one-step snapshot pairs, and
//! * a local linearization around an equilibrium, discretized exactly under
//!   zero-order hold and applied to deviations from the operating point.
//!
//! Both evolve `z_{k+1} = A z_k + b_u u_k + b_d w_k + e` and reconstruct
//! `x̂_k = C z_k + c0`. The drift `e` and output offset `c0` vanish for the
//! EDMD predictor and fold the operating point in for the local one.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix6, SMatrix, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{max_abs, pinv};
use crate::plant::{Integrator, Plant, PlantError, PlantModel, State, STATE_DIM};

#[derive(Debug, Error)]
pub enum PredictorError {
    #[error("dataset column {column}: {source}")]
    Column {
        column: usize,
        #[source]
        source: PlantError,
    },
    #[error("invalid dataset configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("equilibrium solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoEquilibrium { iterations: usize, residual: f64 },
    #[error("matrix exponential produced non-finite entries")]
    MatrixExponential,
    #[error("predictor file: {0}")]
    File(String),
}

/// Exponent vector of one monomial over `x1..x6`.
pub type Monomial = [u8; STATE_DIM];

/// Ordered monomial dictionary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObservableSet {
    monomials: Vec<Monomial>,
}

impl Default for ObservableSet {
    /// The 16 observables: the state itself followed by every nonlinear
    /// monomial that appears in the plant's vector field.
    fn default() -> Self {
        const fn m(e: [u8; 6]) -> Monomial {
            e
        }
        Self {
            monomials: vec![
                m([1, 0, 0, 0, 0, 0]),
                m([0, 1, 0, 0, 0, 0]),
                m([0, 0, 1, 0, 0, 0]),
                m([0, 0, 0, 1, 0, 0]),
                m([0, 0, 0, 0, 1, 0]),
                m([0, 0, 0, 0, 0, 1]),
                m([0, 0, 2, 0, 0, 0]),
                m([0, 0, 0, 2, 0, 0]),
                m([0, 0, 0, 0, 2, 0]),
                m([0, 0, 2, 1, 0, 0]),
                m([0, 0, 1, 2, 0, 0]),
                m([0, 0, 0, 2, 1, 0]),
                m([0, 0, 0, 1, 2, 0]),
                m([0, 0, 3, 0, 0, 0]),
                m([0, 0, 0, 3, 0, 0]),
                m([0, 0, 0, 0, 3, 0]),
            ],
        }
    }
}

impl ObservableSet {
    /// The six coordinate functions only.
    pub fn identity() -> Self {
        Self {
            monomials: (0..STATE_DIM)
                .map(|i| {
                    let mut e = [0; STATE_DIM];
                    e[i] = 1;
                    e
                })
                .collect(),
        }
    }

    /// Builds a dictionary; the first six entries must be the coordinates.
    pub fn new(monomials: Vec<Monomial>) -> Result<Self, PredictorError> {
        let ident = Self::identity();
        if monomials.len() < STATE_DIM || monomials[..STATE_DIM] != ident.monomials[..] {
            return Err(PredictorError::Dimension(
                "observable set must start with x1..x6".into(),
            ));
        }
        Ok(Self { monomials })
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn lift(&self, x: &State) -> DVector<f64> {
        DVector::from_iterator(
            self.monomials.len(),
            self.monomials.iter().map(|e| {
                e.iter()
                    .zip(x)
                    .fold(1.0, |acc, (&p, &xi)| acc * xi.powi(p as i32))
            }),
        )
    }

    /// Componentwise lift of a 6×K snapshot matrix.
    pub fn lift_columns(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.len(), x.ncols());
        for (j, col) in x.column_iter().enumerate() {
            let s: State = std::array::from_fn(|i| col[i]);
            out.set_column(j, &self.lift(&s));
        }
        out
    }
}

/// Operating point of a local linearization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub x: State,
    pub u: f64,
    pub w: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals: Option<FitDiagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
}

/// Conditioning and residual report of an EDMD fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub regressor_rank: usize,
    pub regressor_rows: usize,
    pub regressor_condition: f64,
    pub lifted_rank: usize,
    pub lifted_condition: f64,
    /// Max-abs residual of `X'_lift - [A b_u b_d] [X_lift; u; w]`.
    pub dynamics_residual_max: f64,
    pub dynamics_residual_rms: f64,
    /// Max-abs residual of `X - C X_lift`.
    pub output_residual_max: f64,
    pub rank_deficient: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearPredictor {
    pub a: DMatrix<f64>,
    pub b_u: DVector<f64>,
    pub b_d: DVector<f64>,
    pub c: DMatrix<f64>,
    pub h: f64,
    pub observables: ObservableSet,
    pub operating_point: Option<OperatingPoint>,
    pub meta: FitMeta,
}

impl LinearPredictor {
    pub fn new(
        a: DMatrix<f64>,
        b_u: DVector<f64>,
        b_d: DVector<f64>,
        c: DMatrix<f64>,
        h: f64,
        observables: ObservableSet,
    ) -> Result<Self, PredictorError> {
        let p = Self {
            a,
            b_u,
            b_d,
            c,
            h,
            observables,
            operating_point: None,
            meta: FitMeta::default(),
        };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<(), PredictorError> {
        let n = self.observables.len();
        let ok = self.a.shape() == (n, n)
            && self.b_u.len() == n
            && self.b_d.len() == n
            && self.c.shape() == (STATE_DIM, n);
        if !ok {
            return Err(PredictorError::Dimension(format!(
                "N = {n}: A {:?}, b_u {}, b_d {}, C {:?}",
                self.a.shape(),
                self.b_u.len(),
                self.b_d.len(),
                self.c.shape()
            )));
        }
        if !(self.h > 0.0) {
            return Err(PredictorError::Dimension(format!("h = {}", self.h)));
        }
        let finite = self.a.iter().all(|v| v.is_finite())
            && self.b_u.iter().all(|v| v.is_finite())
            && self.b_d.iter().all(|v| v.is_finite())
            && self.c.iter().all(|v| v.is_finite());
        if !finite {
            return Err(PredictorError::Dimension("non-finite entries".into()));
        }
        Ok(())
    }

    /// Lifted dimension `N`.
    pub fn dim(&self) -> usize {
        self.observables.len()
    }

    pub fn is_local(&self) -> bool {
        self.operating_point.is_some()
    }

    /// `z = ψ(x)`, or `x - x*` for a local linearization.
    pub fn lift(&self, x: &State) -> DVector<f64> {
        match &self.operating_point {
            None => self.observables.lift(x),
            Some(op) => DVector::from_iterator(STATE_DIM, x.iter().zip(&op.x).map(|(a, b)| a - b)),
        }
    }

    /// Constant term `e` of the lifted dynamics.
    pub fn drift(&self) -> DVector<f64> {
        match &self.operating_point {
            None => DVector::zeros(self.dim()),
            Some(op) => -(&self.b_u * op.u) - &self.b_d * op.w,
        }
    }

    /// Constant term `c0` of the reconstruction.
    pub fn output_offset(&self) -> DVector<f64> {
        match &self.operating_point {
            None => DVector::zeros(STATE_DIM),
            Some(op) => DVector::from_column_slice(&op.x),
        }
    }

    pub fn advance(&self, z: &DVector<f64>, u: f64, w: f64) -> DVector<f64> {
        let mut next = &self.a * z + &self.b_u * u + &self.b_d * w;
        if self.operating_point.is_some() {
            next += self.drift();
        }
        next
    }

    pub fn reconstruct(&self, z: &DVector<f64>) -> State {
        let x = &self.c * z + self.output_offset();
        std::array::from_fn(|i| x[i])
    }

    /// Open-loop rollout; returns `x̂_0..x̂_n`.
    pub fn predict(
        &self,
        x0: &State,
        u_seq: &[f64],
        w_seq: &[f64],
    ) -> Result<Vec<State>, PredictorError> {
        if u_seq.len() != w_seq.len() {
            return Err(PredictorError::Dimension(format!(
                "u has {} samples, w has {}",
                u_seq.len(),
                w_seq.len()
            )));
        }
        let mut z = self.lift(x0);
        let mut out = Vec::with_capacity(u_seq.len() + 1);
        out.push(self.reconstruct(&z));
        for (&u, &w) in u_seq.iter().zip(w_seq) {
            z = self.advance(&z, u, w);
            out.push(self.reconstruct(&z));
        }
        Ok(out)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&PredictorFile::from(self)).expect("predictor serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PredictorError> {
        let file: PredictorFile =
            serde_json::from_str(text).map_err(|e| PredictorError::File(e.to_string()))?;
        file.try_into()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PredictorError> {
        std::fs::write(path.as_ref(), self.to_json())
            .map_err(|e| PredictorError::File(format!("{}: {e}", path.as_ref().display())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PredictorError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| PredictorError::File(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json(&text)
    }
}

/// On-disk layout: row-major matrices.
#[derive(Serialize, Deserialize)]
struct PredictorFile {
    #[serde(rename = "N")]
    n: usize,
    h: f64,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    bu: Vec<f64>,
    bd: Vec<f64>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    observables: ObservableSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    operating_point: Option<OperatingPoint>,
    #[serde(default)]
    meta: FitMeta,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], ncols: usize, what: &str) -> Result<DMatrix<f64>, PredictorError> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(PredictorError::File(format!("{what}: ragged rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

impl From<&LinearPredictor> for PredictorFile {
    fn from(p: &LinearPredictor) -> Self {
        Self {
            n: p.dim(),
            h: p.h,
            a: rows_of(&p.a),
            bu: p.b_u.iter().cloned().collect(),
            bd: p.b_d.iter().cloned().collect(),
            c: rows_of(&p.c),
            observables: p.observables.clone(),
            operating_point: p.operating_point,
            meta: p.meta.clone(),
        }
    }
}

impl TryFrom<PredictorFile> for LinearPredictor {
    type Error = PredictorError;

    fn try_from(f: PredictorFile) -> Result<Self, PredictorError> {
        if f.observables.len() != f.n {
            return Err(PredictorError::File(format!(
                "N = {} but {} observables",
                f.n,
                f.observables.len()
            )));
        }
        let p = LinearPredictor {
            a: matrix_from_rows(&f.a, f.n, "A")?,
            b_u: DVector::from_vec(f.bu),
            b_d: DVector::from_vec(f.bd),
            c: matrix_from_rows(&f.c, f.n, "C")?,
            h: f.h,
            observables: f.observables,
            operating_point: f.operating_point,
            meta: f.meta,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Snapshot-pair synthesis settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    #[serde(rename = "K")]
    pub samples: usize,
    pub state_range: [f64; 2],
    pub u_band: [f64; 2],
    pub p_off: f64,
    pub w0: f64,
    pub h: f64,
    pub seed: u64,
    /// Draw one temperature per sample and share it across all six states
    /// instead of drawing each state independently.
    pub shared_draw: bool,
    pub integrator: Integrator,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            samples: 10_000,
            state_range: [10.0, 40.0],
            u_band: [21.2, 26.5],
            p_off: 0.2,
            w0: 10.0,
            h: 60.0,
            seed: 0,
            shared_draw: false,
            integrator: Integrator::implicit(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self, lifted_dim: usize) -> Result<(), PredictorError> {
        let bad = |m: String| Err(PredictorError::InvalidConfig(m));
        if self.samples < lifted_dim + 2 {
            return bad(format!("K = {} < N + 2 = {}", self.samples, lifted_dim + 2));
        }
        if !(0.0..=1.0).contains(&self.p_off) {
            return bad(format!("p_off = {} outside [0, 1]", self.p_off));
        }
        if !(self.state_range[0] <= self.state_range[1]) {
            return bad(format!("state range {:?}", self.state_range));
        }
        if !(self.u_band[0] <= self.u_band[1]) {
            return bad(format!("u band {:?}", self.u_band));
        }
        if !(self.h > 0.0) {
            return bad(format!("h = {}", self.h));
        }
        Ok(())
    }
}

/// Snapshot pairs: `X` (6×K), inputs, disturbances and `X'` (6×K).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub u: DVector<f64>,
    pub w: DVector<f64>,
    pub x_next: DMatrix<f64>,
    pub h: f64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.x.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.x.ncols() == 0
    }
}

/// Per-column generator: column `i` always draws from stream `i` of the
/// seed, so serial and parallel synthesis agree bit-for-bit.
fn column_rng(seed: u64, column: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(column as u64);
    rng
}

fn draw_column(cfg: &DatasetConfig, column: usize) -> (State, f64) {
    let mut rng = column_rng(cfg.seed, column);
    let [lo, hi] = cfg.state_range;
    let mut x = [0.0; STATE_DIM];
    if cfg.shared_draw {
        let v = lo + (hi - lo) * rng.random::<f64>();
        x = [v; STATE_DIM];
    } else {
        for xi in &mut x {
            *xi = lo + (hi - lo) * rng.random::<f64>();
        }
    }
    let off = rng.random::<f64>() < cfg.p_off;
    let u = if off {
        0.0
    } else {
        let [ul, uh] = cfg.u_band;
        ul + (uh - ul) * rng.random::<f64>()
    };
    (x, u)
}

/// Random one-step snapshot pairs of the plant under held inputs.
pub fn generate_dataset(model: &PlantModel, cfg: &DatasetConfig) -> Result<Dataset, PredictorError> {
    if cfg.samples == 0 {
        return Err(PredictorError::InvalidConfig("K = 0".into()));
    }
    let plant = Plant::new(model.clone(), cfg.integrator);
    let columns: Vec<Result<(State, f64, State), PredictorError>> = (0..cfg.samples)
        .into_par_iter()
        .map(|j| {
            let (x0, u0) = draw_column(cfg, j);
            plant
                .step(&x0, u0, cfg.w0, cfg.h)
                .map(|x1| (x0, u0, x1))
                .map_err(|source| PredictorError::Column { column: j, source })
        })
        .collect();

    let k = cfg.samples;
    let mut x = DMatrix::zeros(STATE_DIM, k);
    let mut x_next = DMatrix::zeros(STATE_DIM, k);
    let mut u = DVector::zeros(k);
    for (j, col) in columns.into_iter().enumerate() {
        let (x0, u0, x1) = col?;
        x.set_column(j, &Vector6::from_column_slice(&x0));
        x_next.set_column(j, &Vector6::from_column_slice(&x1));
        u[j] = u0;
    }
    Ok(Dataset {
        x,
        u,
        w: DVector::from_element(k, cfg.w0),
        x_next,
        h: cfg.h,
    })
}

/// Least-squares fit of `[A b_u b_d]` and `C` from snapshot pairs.
pub fn fit_edmd(
    observables: &ObservableSet,
    data: &Dataset,
) -> Result<(LinearPredictor, FitDiagnostics), PredictorError> {
    let n = observables.len();
    let k = data.len();
    if k < n + 2 {
        return Err(PredictorError::InvalidConfig(format!("K = {k} < N + 2 = {}", n + 2)));
    }
    if data.u.len() != k || data.w.len() != k || data.x_next.ncols() != k {
        return Err(PredictorError::Dimension("dataset columns disagree".into()));
    }
    let x_lift = observables.lift_columns(&data.x);
    let x_next_lift = observables.lift_columns(&data.x_next);

    let mut regressor = DMatrix::zeros(n + 2, k);
    regressor.rows_mut(0, n).copy_from(&x_lift);
    regressor.row_mut(n).copy_from(&data.u.transpose());
    regressor.row_mut(n + 1).copy_from(&data.w.transpose());

    let reg_pinv = pinv(&regressor);
    let abd = &x_next_lift * &reg_pinv.matrix;
    let lift_pinv = pinv(&x_lift);
    let c = &data.x * &lift_pinv.matrix;

    let a = abd.columns(0, n).into_owned();
    let b_u = abd.column(n).into_owned();
    let b_d = abd.column(n + 1).into_owned();

    let dyn_res = &x_next_lift - &abd * &regressor;
    let out_res = &data.x - &c * &x_lift;
    let diagnostics = FitDiagnostics {
        regressor_rank: reg_pinv.rank,
        regressor_rows: n + 2,
        regressor_condition: reg_pinv.condition_number(),
        lifted_rank: lift_pinv.rank,
        lifted_condition: lift_pinv.condition_number(),
        dynamics_residual_max: max_abs(&dyn_res),
        dynamics_residual_rms: (dyn_res.norm_squared() / dyn_res.len() as f64).sqrt(),
        output_residual_max: max_abs(&out_res),
        rank_deficient: reg_pinv.rank < n + 2 || lift_pinv.rank < n,
    };

    let mut predictor = LinearPredictor::new(a, b_u, b_d, c, data.h, observables.clone())?;
    predictor.meta = FitMeta {
        seed: None,
        samples: Some(k),
        residuals: Some(diagnostics.clone()),
        method: Some("edmd".into()),
    };
    Ok((predictor, diagnostics))
}

/// Solution of `f(x, u, w) = 0`, `x5 = target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub x: State,
    pub u: f64,
    pub w: f64,
    pub residual: f64,
    pub iterations: usize,
    /// `false` when `u` lies outside the heat pump's `[0, 26.5]` kW range.
    pub input_in_range: bool,
}

pub const EQUILIBRIUM_TOL: f64 = 1e-10;
const EQUILIBRIUM_MAX_ITERS: usize = 200;
pub const HEAT_PUMP_MAX_KW: f64 = 26.5;

fn equilibrium_residual(model: &PlantModel, v: &SMatrix<f64, 7, 1>, w: f64, target_y: f64) -> SMatrix<f64, 7, 1> {
    let x: State = std::array::from_fn(|i| v[i]);
    let f = model.rhs(&x, v[6], w);
    let mut r = SMatrix::<f64, 7, 1>::zeros();
    for i in 0..STATE_DIM {
        r[i] = f[i];
    }
    r[6] = x[4] - target_y;
    r
}

/// Damped Newton solve of the seven-equation system for `(x*, u*)`.
///
/// Starts from the uniform state at `target_y`; when that fails, walks the
/// target from the steady state under half the rated input, re-solving
/// Newton at every stage from the previous solution.
pub fn find_equilibrium(
    model: &PlantModel,
    w: f64,
    target_y: f64,
) -> Result<Equilibrium, PredictorError> {
    let u0 = HEAT_PUMP_MAX_KW / 2.0;
    let direct = find_equilibrium_from(model, w, target_y, &[target_y; STATE_DIM], u0);
    if direct.is_ok() {
        return direct;
    }
    let Some(start) = steady_state(model, u0, w) else {
        return direct;
    };
    let (mut x, mut u, mut y) = (start, u0, start[4]);
    let mut frac = 1.0;
    let mut stages = 0;
    while y != target_y {
        let next = if frac >= 1.0 { target_y } else { y + (target_y - y) * frac };
        match find_equilibrium_from(model, w, next, &x, u) {
            Ok(eq) => {
                stages += 1;
                x = eq.x;
                u = eq.u;
                y = next;
                frac = (frac * 2.0).min(1.0);
                if y == target_y {
                    return Ok(Equilibrium {
                        iterations: eq.iterations + stages,
                        ..eq
                    });
                }
            }
            Err(_) if frac > 1e-6 => frac /= 2.0,
            Err(e) => return Err(e),
        }
        if stages > 10_000 {
            break;
        }
    }
    direct
}

/// Smallest residual double precision can resolve at `v`: far from the
/// physical range the individual terms of `f` reach 1e9 and more.
fn rounding_floor(model: &PlantModel, v: &SMatrix<f64, 7, 1>, w: f64) -> f64 {
    let x: State = std::array::from_fn(|i| v[i]);
    let (j, bu, bw) = model.jacobian(&x);
    let xv = Vector6::from(x);
    let scale = (0..STATE_DIM)
        .map(|i| {
            j.row(i).iter().zip(xv.iter()).map(|(a, b)| (a * b).abs()).sum::<f64>()
                + (bu[i] * v[6]).abs()
                + (bw[i] * w).abs()
        })
        .fold(0.0, f64::max);
    64.0 * f64::EPSILON * scale
}

/// Newton solve of `f(x, u, w) = 0` for the state alone.
fn steady_state(model: &PlantModel, u: f64, w: f64) -> Option<State> {
    let mut x = Vector6::from_element(w);
    for _ in 0..EQUILIBRIUM_MAX_ITERS {
        let xs: State = std::array::from_fn(|i| x[i]);
        let f = Vector6::from(model.rhs(&xs, u, w));
        if f.amax() <= EQUILIBRIUM_TOL {
            return Some(xs);
        }
        let (j, _, _) = model.jacobian(&xs);
        x += j.lu().solve(&(-f))?;
    }
    None
}

pub fn find_equilibrium_from(
    model: &PlantModel,
    w: f64,
    target_y: f64,
    x_guess: &State,
    u_guess: f64,
) -> Result<Equilibrium, PredictorError> {
    let mut v = SMatrix::<f64, 7, 1>::zeros();
    v.fixed_rows_mut::<6>(0).copy_from_slice(x_guess);
    v[6] = u_guess;
    let mut r = equilibrium_residual(model, &v, w, target_y);
    let mut norm = r.amax();
    let mut best = (v, norm);
    // Consecutive full steps taken although they raised the residual.
    let mut uphill = 0;

    for iter in 0..EQUILIBRIUM_MAX_ITERS {
        if norm <= EQUILIBRIUM_TOL || (uphill == 0 && iter > 0 && norm <= rounding_floor(model, &v, w)) {
            let x: State = std::array::from_fn(|i| v[i]);
            return Ok(Equilibrium {
                x,
                u: v[6],
                w,
                residual: norm,
                iterations: iter,
                input_in_range: (0.0..=HEAT_PUMP_MAX_KW).contains(&v[6]),
            });
        }
        let x: State = std::array::from_fn(|i| v[i]);
        let (jx, bu, _) = model.jacobian(&x);
        let mut jac = SMatrix::<f64, 7, 7>::zeros();
        jac.fixed_view_mut::<6, 6>(0, 0).copy_from(&jx);
        jac.fixed_view_mut::<6, 1>(0, 6).copy_from(&bu);
        jac[(6, 4)] = 1.0;
        let Some(step) = jac.lu().solve(&(-r)) else {
            break;
        };
        // Backtrack on the residual max-norm.
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-8 {
            let trial = v + step * t;
            let rt = equilibrium_residual(model, &trial, w, target_y);
            if rt.amax() < norm || rt.amax() <= EQUILIBRIUM_TOL {
                v = trial;
                r = rt;
                norm = rt.amax();
                accepted = true;
                uphill = 0;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // The first steps towards a far-away root can raise the
            // residual before Newton's local convergence sets in.
            let trial = v + step;
            let rt = equilibrium_residual(model, &trial, w, target_y);
            if uphill == 5 || !rt.iter().all(|e| e.is_finite()) {
                break;
            }
            uphill += 1;
            v = trial;
            r = rt;
            norm = rt.amax();
        }
        if norm < best.1 {
            best = (v, norm);
        }
    }
    let (v, norm) = best;
    if norm <= EQUILIBRIUM_TOL.max(rounding_floor(model, &v, w)) {
        let x: State = std::array::from_fn(|i| v[i]);
        return Ok(Equilibrium {
            x,
            u: v[6],
            w,
            residual: norm,
            iterations: EQUILIBRIUM_MAX_ITERS,
            input_in_range: (0.0..=HEAT_PUMP_MAX_KW).contains(&v[6]),
        });
    }
    Err(PredictorError::NoEquilibrium {
        iterations: EQUILIBRIUM_MAX_ITERS,
        residual: norm,
    })
}

/// Exact zero-order-hold discretization of `(A_c, [b_c d_c])` via the
/// exponential of the augmented matrix.
pub fn zoh_discretize(
    a_c: &Matrix6<f64>,
    b_c: &Vector6<f64>,
    d_c: &Vector6<f64>,
    h: f64,
) -> Result<(Matrix6<f64>, Vector6<f64>, Vector6<f64>), PredictorError> {
    let mut m = SMatrix::<f64, 8, 8>::zeros();
    m.fixed_view_mut::<6, 6>(0, 0).copy_from(&(a_c * h));
    m.fixed_view_mut::<6, 1>(0, 6).copy_from(&(b_c * h));
    m.fixed_view_mut::<6, 1>(0, 7).copy_from(&(d_c * h));
    let e = m.exp();
    if !e.iter().all(|v| v.is_finite()) {
        return Err(PredictorError::MatrixExponential);
    }
    Ok((
        e.fixed_view::<6, 6>(0, 0).into_owned(),
        e.fixed_view::<6, 1>(0, 6).into_owned(),
        e.fixed_view::<6, 1>(0, 7).into_owned(),
    ))
}

/// Local-linearization baseline predictor around `(x*, u*, w*)`.
pub fn linearize_local(
    model: &PlantModel,
    x_eq: &State,
    u_eq: f64,
    w_eq: f64,
    h: f64,
) -> Result<LinearPredictor, PredictorError> {
    let (a_c, b_c, d_c) = model.jacobian(x_eq);
    let (a_d, b_d_u, b_d_w) = zoh_discretize(&a_c, &b_c, &d_c, h)?;
    let mut p = LinearPredictor::new(
        DMatrix::from_iterator(6, 6, a_d.iter().cloned()),
        DVector::from_column_slice(b_d_u.as_slice()),
        DVector::from_column_slice(b_d_w.as_slice()),
        DMatrix::identity(STATE_DIM, STATE_DIM),
        h,
        ObservableSet::identity(),
    )?;
    p.operating_point = Some(OperatingPoint {
        x: *x_eq,
        u: u_eq,
        w: w_eq,
    });
    p.meta.method = Some("local-linearization".into());
    Ok(p)
}
