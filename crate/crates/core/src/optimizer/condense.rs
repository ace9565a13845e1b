//! Condensed horizon problem: lifted states are eliminated by forward
//! substitution so the only continuous decisions are the inputs.

use nalgebra::{DMatrix, DVector};

use super::problem::{LinExpr, ProblemBuilder, Sense, VarId};
use super::SolverError;
use crate::predictor::LinearPredictor;

/// Row of `C` that reconstructs the plant output.
pub const OUTPUT_ROW: usize = 4;

/// `z_i = G_i u + g_i` for `i = 0..=Np`, and `y_i = r·z_i + y_offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedMaps {
    pub g_mat: Vec<DMatrix<f64>>,
    pub g_vec: Vec<DVector<f64>>,
    pub output_row: DVector<f64>,
    pub output_offset: f64,
}

impl CondensedMaps {
    pub fn horizon(&self) -> usize {
        self.g_mat.len() - 1
    }

    pub fn z(&self, i: usize, u: &[f64]) -> DVector<f64> {
        &self.g_mat[i] * DVector::from_column_slice(u) + &self.g_vec[i]
    }

    pub fn y(&self, i: usize, u: &[f64]) -> f64 {
        self.output_row.dot(&self.z(i, u)) + self.output_offset
    }

    /// `y_i` as an affine expression in the input variables.
    pub fn y_expr(&self, i: usize, u_vars: &[VarId]) -> LinExpr {
        let coefs = self.output_row.transpose() * &self.g_mat[i];
        let mut e = LinExpr::constant(self.output_row.dot(&self.g_vec[i]) + self.output_offset);
        for (j, v) in u_vars.iter().enumerate() {
            if coefs[j] != 0.0 {
                e.add_term(*v, coefs[j]);
            }
        }
        e
    }
}

/// Unrolls the predictor over `horizon` steps from lifted state `z0` under
/// the disturbance forecast `w_seq`.
pub fn condense(
    predictor: &LinearPredictor,
    z0: &DVector<f64>,
    horizon: usize,
    w_seq: &[f64],
) -> Result<CondensedMaps, SolverError> {
    let n = predictor.dim();
    if horizon == 0 {
        return Err(SolverError::InvalidProblem("horizon must be at least 1".into()));
    }
    if z0.len() != n || w_seq.len() < horizon {
        return Err(SolverError::InvalidProblem(format!(
            "condense needs z0 of length {n} and {horizon} disturbance samples (got {} and {})",
            z0.len(),
            w_seq.len()
        )));
    }
    let drift = predictor.drift();
    let mut g_mat = vec![DMatrix::zeros(n, horizon)];
    let mut g_vec = vec![z0.clone()];
    for i in 0..horizon {
        let mut gm = &predictor.a * &g_mat[i];
        let col = gm.column(i) + &predictor.b_u;
        gm.set_column(i, &col);
        let gv = &predictor.a * &g_vec[i] + &predictor.b_d * w_seq[i] + &drift;
        g_mat.push(gm);
        g_vec.push(gv);
    }
    Ok(CondensedMaps {
        g_mat,
        g_vec,
        output_row: predictor.c.row(OUTPUT_ROW).transpose(),
        output_offset: predictor.output_offset()[OUTPUT_ROW],
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingWeights {
    pub output: f64,
    pub input: f64,
    pub reference: f64,
}

impl Default for TrackingWeights {
    fn default() -> Self {
        Self {
            output: 1.0,
            input: 10.0,
            reference: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HorizonBounds {
    pub u_min: f64,
    pub u_max: f64,
    /// Box on every predicted lifted state `z_1..z_Np`.
    pub z_box: Option<(DVector<f64>, DVector<f64>)>,
}

impl Default for HorizonBounds {
    fn default() -> Self {
        Self {
            u_min: 0.0,
            u_max: 26.5,
            z_box: None,
        }
    }
}

/// Interval image of the state box `[lo, hi]^6` under the predictor's
/// lifting.
pub fn lifted_box(predictor: &LinearPredictor, lo: f64, hi: f64) -> (DVector<f64>, DVector<f64>) {
    match &predictor.operating_point {
        Some(op) => (
            DVector::from_iterator(op.x.len(), op.x.iter().map(|x| lo - x)),
            DVector::from_iterator(op.x.len(), op.x.iter().map(|x| hi - x)),
        ),
        None => {
            let n = predictor.dim();
            let mut zlo = DVector::zeros(n);
            let mut zhi = DVector::zeros(n);
            for (k, m) in predictor.observables.monomials().iter().enumerate() {
                let (mut a, mut b) = (1.0, 1.0);
                for &e in m {
                    let (l, u) = interval_pow(lo, hi, e as i32);
                    let prods = [a * l, a * u, b * l, b * u];
                    a = prods.iter().cloned().fold(f64::INFINITY, f64::min);
                    b = prods.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                }
                zlo[k] = a;
                zhi[k] = b;
            }
            (zlo, zhi)
        }
    }
}

fn interval_pow(lo: f64, hi: f64, e: i32) -> (f64, f64) {
    if e == 0 {
        return (1.0, 1.0);
    }
    let (a, b) = (lo.powi(e), hi.powi(e));
    if e % 2 == 0 && lo < 0.0 && hi > 0.0 {
        (0.0, a.max(b))
    } else {
        (a.min(b), a.max(b))
    }
}

/// The condensed problem before STL constraints are added.
#[derive(Debug, Clone)]
pub struct HorizonProblem {
    pub builder: ProblemBuilder,
    pub u_vars: Vec<VarId>,
    /// Predicted outputs `y_0..y_Np`.
    pub y_exprs: Vec<LinExpr>,
}

/// Input variables, tracking cost and optional lifted-state bounds.
pub fn build_horizon_problem(
    maps: &CondensedMaps,
    weights: &TrackingWeights,
    bounds: &HorizonBounds,
) -> Result<HorizonProblem, SolverError> {
    let np = maps.horizon();
    if bounds.u_min > bounds.u_max {
        return Err(SolverError::InvalidProblem(format!(
            "input bounds [{}, {}] are empty",
            bounds.u_min, bounds.u_max
        )));
    }
    let mut builder = ProblemBuilder::new();
    let u_vars: Vec<VarId> = (0..np)
        .map(|i| builder.add_continuous(bounds.u_min, bounds.u_max, Some(format!("u_{i}"))))
        .collect();
    let y_exprs: Vec<LinExpr> = (0..=np).map(|i| maps.y_expr(i, &u_vars)).collect();

    for i in 0..np {
        let err = y_exprs[i + 1].plus(&LinExpr::constant(-weights.reference));
        builder.add_square(&err, weights.output);
        builder.add_square(&LinExpr::var(u_vars[i]), weights.input);
    }

    if let Some((zlo, zhi)) = &bounds.z_box {
        let n = maps.g_vec[0].len();
        if zlo.len() != n || zhi.len() != n {
            return Err(SolverError::InvalidProblem(format!(
                "lifted-state bounds have length {} / {}, predictor has {n}",
                zlo.len(),
                zhi.len()
            )));
        }
        for i in 1..=np {
            for r in 0..n {
                let mut e = LinExpr::constant(maps.g_vec[i][r]);
                for (j, v) in u_vars.iter().enumerate() {
                    let c = maps.g_mat[i][(r, j)];
                    if c != 0.0 {
                        e.add_term(*v, c);
                    }
                }
                if zhi[r].is_finite() {
                    let upper = e.plus(&LinExpr::constant(-zhi[r]));
                    push_bound(&mut builder, upper, Sense::Le, format!("zmax_{i}_{r}"));
                }
                if zlo[r].is_finite() {
                    let lower = e.plus(&LinExpr::constant(-zlo[r]));
                    push_bound(&mut builder, lower, Sense::Ge, format!("zmin_{i}_{r}"));
                }
            }
        }
    }
    Ok(HorizonProblem {
        builder,
        u_vars,
        y_exprs,
    })
}

/// Skips rows that hold for every input in the box.
fn push_bound(builder: &mut ProblemBuilder, e: LinExpr, sense: Sense, name: String) {
    let (lo, hi) = builder.expr_range(&e);
    let redundant = match sense {
        Sense::Le => hi <= 0.0,
        Sense::Ge => lo >= 0.0,
        Sense::Eq => false,
    };
    if !redundant {
        builder.add_constraint(e, sense, Some(name));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::ObservableSet;

    fn scalar_toy() -> LinearPredictor {
        // Lifted dimension must be at least 6 with C = I; use the identity
        // lifting with A = I and only the output row driven.
        let mut bu = DVector::zeros(6);
        bu[OUTPUT_ROW] = 1.0;
        LinearPredictor::new(
            DMatrix::identity(6, 6),
            bu,
            DVector::zeros(6),
            DMatrix::identity(6, 6),
            60.0,
            ObservableSet::identity(),
        )
        .unwrap()
    }

    #[test]
    fn running_sum() {
        let p = scalar_toy();
        let maps = condense(&p, &DVector::zeros(6), 4, &[0.0; 4]).unwrap();
        let u = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = (0..=4).map(|i| maps.y(i, &u)).collect();
        assert_eq!(ys, vec![0.0, 1.0, 3.0, 6.0, 10.0]);
    }

    #[test]
    fn unconstrained_tracking_hits_reference() {
        let p = scalar_toy();
        let maps = condense(&p, &DVector::zeros(6), 1, &[0.0]).unwrap();
        let w = TrackingWeights {
            output: 1.0,
            input: 0.0,
            reference: 40.0,
        };
        let b = HorizonBounds {
            u_min: -100.0,
            u_max: 100.0,
            z_box: None,
        };
        let hp = build_horizon_problem(&maps, &w, &b).unwrap();
        let prob = hp.builder.build().unwrap();
        let qp = super::super::to_qp(&prob);
        let s = super::super::solve_qp(&qp, &Default::default(), None).unwrap();
        assert!((s.x[0] - 40.0).abs() < 1e-10);
    }

    #[test]
    fn interval_powers() {
        assert_eq!(interval_pow(-2.0, 3.0, 2), (0.0, 9.0));
        assert_eq!(interval_pow(-2.0, 3.0, 3), (-8.0, 27.0));
        assert_eq!(interval_pow(0.0, 100.0, 0), (1.0, 1.0));
    }
}
