//! Dense primal active-set solver for convex QPs
//!
//! ```text
//!     minimize     ½ xᵀ H x + cᵀ x
//!     subject to   A_eq x  = b_eq
//!                  A_le x <= b_le
//!                  lb <= x <= ub
//! ```
//!
//! `H` only needs to be positive semidefinite. Steps along directions of
//! zero reduced curvature run until a constraint blocks, so LPs are handled
//! by the same loop. A feasible start is found with a phase-1 LP on the
//! violated rows; a positive phase-1 optimum proves infeasibility and its
//! multipliers are returned as a Farkas-style certificate.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::SolverError;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_le: DMatrix<f64>,
    pub b_le: DVector<f64>,
    pub lb: DVector<f64>,
    pub ub: DVector<f64>,
}

impl QpProblem {
    /// Unconstrained problem in `n` variables with infinite bounds.
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>) -> Self {
        let n = linear.len();
        Self {
            hessian,
            linear,
            constant: 0.0,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_le: DMatrix::zeros(0, n),
            b_le: DVector::zeros(0),
            lb: DVector::from_element(n, f64::NEG_INFINITY),
            ub: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn with_bounds(mut self, lb: DVector<f64>, ub: DVector<f64>) -> Self {
        self.lb = lb;
        self.ub = ub;
        self
    }

    pub fn with_eq(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_le(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_le = a;
        self.b_le = b;
        self
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x) + self.constant
    }

    fn check_shapes(&self) -> Result<(), SolverError> {
        let n = self.num_vars();
        let ok = self.hessian.shape() == (n, n)
            && self.a_eq.ncols() == n
            && self.a_eq.nrows() == self.b_eq.len()
            && self.a_le.ncols() == n
            && self.a_le.nrows() == self.b_le.len()
            && self.lb.len() == n
            && self.ub.len() == n;
        if ok {
            Ok(())
        } else {
            Err(SolverError::InvalidProblem("QP dimensions disagree".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktReport {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

/// Multipliers `y ≥ 0` on the `≤` rows (bounds included, equalities
/// split by sign) such that `yᵀA ≈ 0` and `yᵀb < 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibilityCertificate {
    pub y_eq: DVector<f64>,
    pub y_le: DVector<f64>,
    pub y_lb: DVector<f64>,
    pub y_ub: DVector<f64>,
    /// Optimal phase-1 value (sum of normalized violations).
    pub violation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub status: QpStatus,
    pub x: DVector<f64>,
    pub objective: f64,
    pub y_eq: DVector<f64>,
    pub y_le: DVector<f64>,
    pub y_lb: DVector<f64>,
    pub y_ub: DVector<f64>,
    pub iterations: usize,
    pub kkt: Option<KktReport>,
    pub certificate: Option<InfeasibilityCertificate>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    pub max_iterations: usize,
    /// Primal feasibility tolerance on unit-normalized rows.
    pub feasibility_tol: f64,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            feasibility_tol: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Origin {
    Eq(usize),
    Le(usize),
    Lb(usize),
    Ub(usize),
}

#[derive(Debug, Clone)]
struct Row {
    a: DVector<f64>,
    b: f64,
    equality: bool,
    /// Original row = scale · normalized row.
    scale: f64,
    origin: Origin,
}

fn make_row(a: DVector<f64>, b: f64, equality: bool, origin: Origin) -> Option<Row> {
    let scale = a.norm();
    if scale == 0.0 {
        return None;
    }
    Some(Row {
        a: a / scale,
        b: b / scale,
        equality,
        scale,
        origin,
    })
}

struct CoreResult {
    x: DVector<f64>,
    working: Vec<usize>,
    lambda: Vec<f64>,
    iterations: usize,
    converged: bool,
}

/// Null-space data of the working set.
struct Factor {
    y: DMatrix<f64>,
    z: DMatrix<f64>,
    r: DMatrix<f64>,
}

fn factor(rows: &[Row], working: &[usize], n: usize) -> Factor {
    let m = working.len();
    if m == 0 {
        return Factor {
            y: DMatrix::zeros(n, 0),
            z: DMatrix::identity(n, n),
            r: DMatrix::zeros(0, 0),
        };
    }
    let mut at = DMatrix::zeros(n, m);
    for (k, &i) in working.iter().enumerate() {
        at.set_column(k, &rows[i].a);
    }
    let qr = at.qr();
    let mut qt = DMatrix::identity(n, n);
    qr.q_tr_mul(&mut qt);
    let q = qt.transpose();
    let r = qr.r();
    Factor {
        y: q.columns(0, m).into_owned(),
        z: q.columns(m, n - m).into_owned(),
        r,
    }
}

fn solve_upper(r: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let m = rhs.len();
    let mut x = DVector::zeros(m);
    for i in (0..m).rev() {
        let mut s = rhs[i];
        for j in i + 1..m {
            s -= r[(i, j)] * x[j];
        }
        x[i] = s / r[(i, i)];
    }
    x
}

/// Greedy selection of linearly independent rows from `candidates`.
fn independent_rows(rows: &[Row], candidates: impl Iterator<Item = usize>, limit: usize) -> Vec<usize> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut chosen = Vec::new();
    for i in candidates {
        if chosen.len() == limit {
            break;
        }
        let mut r = rows[i].a.clone();
        // Two Gram-Schmidt passes for numerical orthogonality.
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&r);
                r -= q * c;
            }
        }
        let nr = r.norm();
        if nr > 1e-9 {
            basis.push(r / nr);
            chosen.push(i);
        }
    }
    chosen
}

/// Equality rows, then inequality rows already tight at `x`.
fn crash_working_set(rows: &[Row], x: &DVector<f64>) -> Vec<usize> {
    let eq = (0..rows.len()).filter(|i| rows[*i].equality);
    let tight = (0..rows.len()).filter(|i| {
        let r = &rows[*i];
        !r.equality && (r.b - r.a.dot(x)).abs() <= 1e-12 * (1.0 + r.b.abs())
    });
    independent_rows(rows, eq.chain(tight), x.len())
}

fn active_set(
    h: &DMatrix<f64>,
    c: &DVector<f64>,
    rows: &[Row],
    mut x: DVector<f64>,
    mut working: Vec<usize>,
    max_iterations: usize,
) -> Result<CoreResult, SolverError> {
    let n = x.len();
    let h_zero = h.iter().all(|v| *v == 0.0);
    let h_scale = 1.0 + h.amax();
    let curv_tol = 1e-11 * h_scale;
    let mut in_working = vec![false; rows.len()];
    for &i in &working {
        in_working[i] = true;
    }
    let mut degenerate_run = 0usize;

    for iter in 0..max_iterations {
        let g = h * &x + c;
        let g_scale = 1.0 + g.amax();
        let f = factor(rows, &working, n);
        let r_dim = f.z.ncols();

        let mut p = DVector::zeros(n);
        let mut ray = false;
        if r_dim > 0 {
            let gz = f.z.transpose() * &g;
            if h_zero {
                p = -(&f.z * &gz);
                ray = true;
            } else {
                let hz = f.z.transpose() * h * &f.z;
                let hz = (&hz + hz.transpose()) * 0.5;
                // Clearly positive definite: plain Newton step.
                if let Some(ch) = hz.clone().cholesky() {
                    let l = ch.l_dirty();
                    let min_pivot = (0..r_dim).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
                    if min_pivot > 1e-8 * h_scale {
                        p = -(&f.z * ch.solve(&gz));
                    }
                }
            }
            if !h_zero && p.iter().all(|v| *v == 0.0) {
                let hz = f.z.transpose() * h * &f.z;
                let hz = (&hz + hz.transpose()) * 0.5;
                let eig = SymmetricEigen::new(hz);
                let mut d_null = DVector::zeros(r_dim);
                let mut d_newton = DVector::zeros(r_dim);
                let mut has_null = false;
                for (k, lam) in eig.eigenvalues.iter().enumerate() {
                    let v = eig.eigenvectors.column(k);
                    let gamma = v.dot(&gz);
                    if *lam <= curv_tol {
                        if gamma.abs() > 1e-12 * g_scale {
                            d_null -= v * gamma;
                            has_null = true;
                        }
                    } else {
                        d_newton -= v * (gamma / lam);
                    }
                }
                if has_null {
                    p = &f.z * d_null;
                    ray = true;
                } else {
                    p = &f.z * d_newton;
                }
            }
        }

        let x_scale = 1.0 + x.amax();
        if p.amax() <= 1e-12 * x_scale {
            // Stationary on the working set: check multiplier signs.
            let lambda = if working.is_empty() {
                Vec::new()
            } else {
                let rhs = -(f.y.transpose() * &g);
                solve_upper(&f.r, &rhs).iter().cloned().collect()
            };
            let dual_tol = 1e-9 * g_scale;
            let bland = degenerate_run > 20;
            let mut leave: Option<(usize, f64)> = None;
            for (k, &i) in working.iter().enumerate() {
                if rows[i].equality || lambda[k] >= -dual_tol {
                    continue;
                }
                let better = match leave {
                    None => true,
                    Some((kk, lk)) => {
                        if bland {
                            working[k] < working[kk]
                        } else {
                            lambda[k] < lk
                        }
                    }
                };
                if better {
                    leave = Some((k, lambda[k]));
                }
            }
            match leave {
                None => {
                    return Ok(CoreResult {
                        x,
                        working,
                        lambda,
                        iterations: iter,
                        converged: true,
                    })
                }
                Some((k, _)) => {
                    in_working[working[k]] = false;
                    working.remove(k);
                }
            }
            continue;
        }

        // Ratio test, ties broken by lowest row index.
        let p_norm = p.norm();
        let mut alpha = if ray { f64::INFINITY } else { 1.0 };
        let mut blocking: Option<usize> = None;
        for (i, row) in rows.iter().enumerate() {
            if in_working[i] || row.equality {
                continue;
            }
            let ap = row.a.dot(&p);
            if ap <= 1e-12 * p_norm {
                continue;
            }
            let slack = (row.b - row.a.dot(&x)).max(0.0);
            let step = slack / ap;
            if step < alpha * (1.0 - 1e-12) || (blocking.is_none() && step <= alpha) {
                alpha = step;
                blocking = Some(i);
            }
        }
        if !alpha.is_finite() {
            return Err(SolverError::Unbounded);
        }
        if alpha * p.amax() <= 1e-14 * x_scale {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        x += &p * alpha;
        if let Some(i) = blocking {
            working.push(i);
            in_working[i] = true;
        }
    }
    Ok(CoreResult {
        x,
        lambda: vec![0.0; working.len()],
        working,
        iterations: max_iterations,
        converged: false,
    })
}

/// Solves a convex QP, optionally starting the feasibility search at `warm`.
pub fn solve_qp(
    problem: &QpProblem,
    options: &QpOptions,
    warm: Option<&DVector<f64>>,
) -> Result<QpSolution, SolverError> {
    problem.check_shapes()?;
    let n_all = problem.num_vars();
    for j in 0..n_all {
        if problem.lb[j] > problem.ub[j] {
            return Ok(infeasible_bounds(problem, j));
        }
    }

    // Eliminate fixed variables.
    let fixed: Vec<bool> = (0..n_all)
        .map(|j| problem.lb[j] == problem.ub[j])
        .collect();
    let free: Vec<usize> = (0..n_all).filter(|j| !fixed[*j]).collect();
    let mut x_fixed = DVector::zeros(n_all);
    for j in 0..n_all {
        if fixed[j] {
            x_fixed[j] = problem.lb[j];
        }
    }
    let n = free.len();
    let h = DMatrix::from_fn(n, n, |i, j| problem.hessian[(free[i], free[j])]);
    let hx_fixed = &problem.hessian * &x_fixed;
    let c = DVector::from_fn(n, |i, _| problem.linear[free[i]] + hx_fixed[free[i]]);

    let mut rows = Vec::new();
    let mut constant_violations: Vec<(Origin, f64)> = Vec::new();
    let mut push_general = |a_full: nalgebra::DVectorView<f64>, b: f64, equality: bool, origin: Origin| {
        let shift: f64 = a_full.dot(&x_fixed);
        let a = DVector::from_fn(n, |i, _| a_full[free[i]]);
        let b = b - shift;
        match make_row(a, b, equality, origin) {
            Some(row) => rows.push(row),
            None => {
                let viol = if equality { b.abs() } else { (-b).max(0.0) };
                if viol > options.feasibility_tol * (1.0 + b.abs()) {
                    constant_violations.push((origin, b));
                }
            }
        }
    };
    for i in 0..problem.a_eq.nrows() {
        push_general(
            problem.a_eq.row(i).transpose().as_view(),
            problem.b_eq[i],
            true,
            Origin::Eq(i),
        );
    }
    for i in 0..problem.a_le.nrows() {
        push_general(
            problem.a_le.row(i).transpose().as_view(),
            problem.b_le[i],
            false,
            Origin::Le(i),
        );
    }
    if let Some((origin, b)) = constant_violations.first().cloned() {
        return Ok(infeasible_constant_row(problem, origin, b));
    }
    let general = rows.len();
    for (k, &j) in free.iter().enumerate() {
        if problem.lb[j].is_finite() {
            let mut a = DVector::zeros(n);
            a[k] = -1.0;
            rows.push(Row {
                a,
                b: -problem.lb[j],
                equality: false,
                scale: 1.0,
                origin: Origin::Lb(j),
            });
        }
        if problem.ub[j].is_finite() {
            let mut a = DVector::zeros(n);
            a[k] = 1.0;
            rows.push(Row {
                a,
                b: problem.ub[j],
                equality: false,
                scale: 1.0,
                origin: Origin::Ub(j),
            });
        }
    }

    // Starting point: warm start (or zero) projected on the box.
    let mut x0 = DVector::from_fn(n, |k, _| {
        let j = free[k];
        let v = warm.map(|w| w[j]).unwrap_or(0.0);
        let v = if v.is_finite() { v } else { 0.0 };
        v.clamp(problem.lb[j], problem.ub[j])
    });
    for v in x0.iter_mut() {
        if !v.is_finite() {
            *v = 0.0;
        }
    }

    let tol = options.feasibility_tol;
    let mut total_iterations = 0;

    // Phase 1 on the violated general rows.
    let violated: Vec<(usize, f64)> = rows[..general]
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let res = r.a.dot(&x0) - r.b;
            let bad = if r.equality { res.abs() > tol } else { res > tol };
            bad.then_some((i, res))
        })
        .collect();

    if !violated.is_empty() {
        let k = violated.len();
        let n1 = n + k;
        let mut rows1: Vec<Row> = Vec::with_capacity(rows.len() + k);
        let mut slack_of = vec![None; rows.len()];
        for (s, (i, res)) in violated.iter().enumerate() {
            slack_of[*i] = Some((s, *res));
        }
        for (i, r) in rows.iter().enumerate() {
            let mut a = DVector::zeros(n1);
            a.rows_mut(0, n).copy_from(&r.a);
            if let Some((s, res)) = slack_of[i] {
                // a x - s <= b  (or a x ∓ s = b for equalities)
                a[n + s] = if r.equality && res < 0.0 { 1.0 } else { -1.0 };
            }
            let norm = a.norm();
            rows1.push(Row {
                a: a / norm,
                b: r.b / norm,
                equality: r.equality,
                scale: norm * r.scale,
                origin: r.origin,
            });
        }
        for s in 0..k {
            let mut a = DVector::zeros(n1);
            a[n + s] = -1.0;
            rows1.push(Row {
                a,
                b: 0.0,
                equality: false,
                scale: 1.0,
                origin: Origin::Lb(usize::MAX),
            });
        }
        let mut c1 = DVector::zeros(n1);
        for s in 0..k {
            c1[n + s] = 1.0;
        }
        let mut z0 = DVector::zeros(n1);
        z0.rows_mut(0, n).copy_from(&x0);
        for (s, (_, res)) in violated.iter().enumerate() {
            z0[n + s] = res.abs();
        }
        let h1 = DMatrix::zeros(n1, n1);
        let w1 = crash_working_set(&rows1, &z0);
        let core = active_set(&h1, &c1, &rows1, z0, w1, options.max_iterations)?;
        total_iterations += core.iterations;
        if !core.converged {
            return Ok(iteration_limit(problem, &x_fixed, &free, &x0, total_iterations));
        }
        let violation: f64 = core.x.rows(n, k).sum();
        if violation > 10.0 * tol * (k as f64) {
            let cert = certificate(problem, &rows1, &core, violation);
            let mut x_full = x_fixed.clone();
            for (kk, &j) in free.iter().enumerate() {
                x_full[j] = core.x[kk];
            }
            return Ok(QpSolution {
                status: QpStatus::Infeasible,
                objective: problem.objective(&x_full),
                x: x_full,
                y_eq: DVector::zeros(problem.a_eq.nrows()),
                y_le: DVector::zeros(problem.a_le.nrows()),
                y_lb: DVector::zeros(n_all),
                y_ub: DVector::zeros(n_all),
                iterations: total_iterations,
                kkt: None,
                certificate: Some(cert),
            });
        }
        x0 = core.x.rows(0, n).into_owned();
    }

    let w0 = crash_working_set(&rows, &x0);
    let core = active_set(&h, &c, &rows, x0, w0, options.max_iterations)?;
    total_iterations += core.iterations;
    if !core.converged {
        return Ok(iteration_limit(problem, &x_fixed, &free, &core.x, total_iterations));
    }

    let mut x_full = x_fixed.clone();
    for (k, &j) in free.iter().enumerate() {
        x_full[j] = core.x[k];
    }
    let mut y_eq = DVector::zeros(problem.a_eq.nrows());
    let mut y_le = DVector::zeros(problem.a_le.nrows());
    let mut y_lb = DVector::zeros(n_all);
    let mut y_ub = DVector::zeros(n_all);
    for (k, &i) in core.working.iter().enumerate() {
        let lam = core.lambda[k] / rows[i].scale;
        match rows[i].origin {
            Origin::Eq(r) => y_eq[r] = lam,
            Origin::Le(r) => y_le[r] = lam,
            Origin::Lb(j) => y_lb[j] = lam,
            Origin::Ub(j) => y_ub[j] = lam,
        }
    }
    // Multipliers of eliminated variables from stationarity.
    let g_full = &problem.hessian * &x_full
        + &problem.linear
        + problem.a_eq.transpose() * &y_eq
        + problem.a_le.transpose() * &y_le;
    for j in 0..n_all {
        if fixed[j] {
            let gj = g_full[j];
            if gj >= 0.0 {
                y_lb[j] = gj;
            } else {
                y_ub[j] = -gj;
            }
        }
    }
    let mut sol = QpSolution {
        status: QpStatus::Optimal,
        objective: problem.objective(&x_full),
        x: x_full,
        y_eq,
        y_le,
        y_lb,
        y_ub,
        iterations: total_iterations,
        kkt: None,
        certificate: None,
    };
    sol.kkt = Some(kkt_report(problem, &sol));
    Ok(sol)
}

/// KKT residuals of a candidate primal-dual pair in original units.
pub fn kkt_report(problem: &QpProblem, sol: &QpSolution) -> KktReport {
    let x = &sol.x;
    let grad = &problem.hessian * x
        + &problem.linear
        + problem.a_eq.transpose() * &sol.y_eq
        + problem.a_le.transpose() * &sol.y_le
        - &sol.y_lb
        + &sol.y_ub;
    let scale = 1.0 + problem.linear.amax() + (&problem.hessian * x).amax();
    let stationarity = grad.amax() / scale;
    let mut primal: f64 = 0.0;
    let mut comp: f64 = 0.0;
    let mut dual: f64 = 0.0;
    let eq_res = &problem.a_eq * x - &problem.b_eq;
    primal = primal.max(eq_res.amax());
    let le_res = &problem.a_le * x - &problem.b_le;
    for i in 0..le_res.len() {
        primal = primal.max(le_res[i]);
        dual = dual.max(-sol.y_le[i]);
        comp = comp.max((sol.y_le[i] * le_res[i]).abs());
    }
    for j in 0..x.len() {
        if problem.lb[j].is_finite() {
            primal = primal.max(problem.lb[j] - x[j]);
            comp = comp.max((sol.y_lb[j] * (x[j] - problem.lb[j])).abs());
        }
        if problem.ub[j].is_finite() {
            primal = primal.max(x[j] - problem.ub[j]);
            comp = comp.max((sol.y_ub[j] * (problem.ub[j] - x[j])).abs());
        }
        dual = dual.max(-sol.y_lb[j]).max(-sol.y_ub[j]);
    }
    KktReport {
        stationarity,
        primal,
        dual: dual / scale,
        complementarity: comp / scale,
    }
}

fn certificate(
    problem: &QpProblem,
    rows1: &[Row],
    core: &CoreResult,
    violation: f64,
) -> InfeasibilityCertificate {
    let n_all = problem.num_vars();
    let mut cert = InfeasibilityCertificate {
        y_eq: DVector::zeros(problem.a_eq.nrows()),
        y_le: DVector::zeros(problem.a_le.nrows()),
        y_lb: DVector::zeros(n_all),
        y_ub: DVector::zeros(n_all),
        violation,
    };
    for (k, &i) in core.working.iter().enumerate() {
        let lam = core.lambda[k] / rows1[i].scale;
        match rows1[i].origin {
            Origin::Eq(r) => cert.y_eq[r] = lam,
            Origin::Le(r) => cert.y_le[r] = lam,
            Origin::Lb(j) if j != usize::MAX => cert.y_lb[j] = lam,
            Origin::Ub(j) => cert.y_ub[j] = lam,
            Origin::Lb(_) => {}
        }
    }
    cert
}

fn empty_solution(problem: &QpProblem, status: QpStatus, x: DVector<f64>) -> QpSolution {
    let n = problem.num_vars();
    QpSolution {
        status,
        objective: problem.objective(&x),
        x,
        y_eq: DVector::zeros(problem.a_eq.nrows()),
        y_le: DVector::zeros(problem.a_le.nrows()),
        y_lb: DVector::zeros(n),
        y_ub: DVector::zeros(n),
        iterations: 0,
        kkt: None,
        certificate: None,
    }
}

fn infeasible_bounds(problem: &QpProblem, j: usize) -> QpSolution {
    let n = problem.num_vars();
    let mut sol = empty_solution(problem, QpStatus::Infeasible, DVector::zeros(n));
    let mut cert = InfeasibilityCertificate {
        y_eq: DVector::zeros(problem.a_eq.nrows()),
        y_le: DVector::zeros(problem.a_le.nrows()),
        y_lb: DVector::zeros(n),
        y_ub: DVector::zeros(n),
        violation: problem.lb[j] - problem.ub[j],
    };
    cert.y_lb[j] = 1.0;
    cert.y_ub[j] = 1.0;
    sol.certificate = Some(cert);
    sol
}

fn infeasible_constant_row(problem: &QpProblem, origin: Origin, b: f64) -> QpSolution {
    let n = problem.num_vars();
    let mut sol = empty_solution(problem, QpStatus::Infeasible, DVector::zeros(n));
    let mut cert = InfeasibilityCertificate {
        y_eq: DVector::zeros(problem.a_eq.nrows()),
        y_le: DVector::zeros(problem.a_le.nrows()),
        y_lb: DVector::zeros(n),
        y_ub: DVector::zeros(n),
        violation: b.abs(),
    };
    match origin {
        Origin::Eq(i) => cert.y_eq[i] = -b.signum(),
        Origin::Le(i) => cert.y_le[i] = 1.0,
        _ => {}
    }
    sol.certificate = Some(cert);
    sol
}

fn iteration_limit(
    problem: &QpProblem,
    x_fixed: &DVector<f64>,
    free: &[usize],
    x: &DVector<f64>,
    iterations: usize,
) -> QpSolution {
    let mut x_full = x_fixed.clone();
    for (k, &j) in free.iter().enumerate() {
        x_full[j] = x[k];
    }
    let mut sol = empty_solution(problem, QpStatus::IterationLimit, x_full);
    sol.iterations = iterations;
    sol
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_var(h: f64, c: f64, lb: f64, ub: f64) -> QpProblem {
        QpProblem::new(DMatrix::from_element(1, 1, h), DVector::from_element(1, c))
            .with_bounds(DVector::from_element(1, lb), DVector::from_element(1, ub))
    }

    #[test]
    fn clipped_parabola() {
        // min (u - 3)^2 s.t. u <= 2
        let mut p = one_var(2.0, -6.0, f64::NEG_INFINITY, f64::INFINITY)
            .with_le(DMatrix::from_element(1, 1, 1.0), DVector::from_element(1, 2.0));
        p.constant = 9.0;
        let s = solve_qp(&p, &QpOptions::default(), None).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 2.0).abs() < 1e-12);
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!((s.y_le[0] - 2.0).abs() < 1e-10);
        assert!(s.kkt.unwrap().max() < 1e-10);
    }

    #[test]
    fn infeasible_box() {
        // u >= 1 and u <= 0 written as general rows.
        let p = one_var(1.0, 0.0, f64::NEG_INFINITY, f64::INFINITY).with_le(
            DMatrix::from_column_slice(2, 1, &[-1.0, 1.0]),
            DVector::from_column_slice(&[-1.0, 0.0]),
        );
        let s = solve_qp(&p, &QpOptions::default(), None).unwrap();
        assert_eq!(s.status, QpStatus::Infeasible);
        let cert = s.certificate.unwrap();
        // yᵀA = 0 and yᵀb < 0
        let y = &cert.y_le;
        assert!((-y[0] + y[1]).abs() < 1e-9);
        assert!(-y[0] * 1.0 + 0.0 * y[1] < 0.0);

        let crossed = one_var(1.0, 0.0, 1.0, 0.0);
        assert_eq!(
            solve_qp(&crossed, &QpOptions::default(), None).unwrap().status,
            QpStatus::Infeasible
        );
    }

    #[test]
    fn small_lp() {
        // max x + y s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0  -> (1.6, 1.2)
        let p = QpProblem::new(DMatrix::zeros(2, 2), DVector::from_column_slice(&[-1.0, -1.0]))
            .with_bounds(DVector::zeros(2), DVector::from_element(2, f64::INFINITY))
            .with_le(
                DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 1.0]),
                DVector::from_column_slice(&[4.0, 6.0]),
            );
        let s = solve_qp(&p, &QpOptions::default(), None).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 1.6).abs() < 1e-10 && (s.x[1] - 1.2).abs() < 1e-10);
        assert!(s.kkt.unwrap().max() < 1e-9);
    }

    #[test]
    fn unbounded_lp_is_reported() {
        let p = QpProblem::new(DMatrix::zeros(1, 1), DVector::from_element(1, -1.0));
        assert!(matches!(
            solve_qp(&p, &QpOptions::default(), None),
            Err(SolverError::Unbounded)
        ));
    }

    #[test]
    fn fixed_variables_are_eliminated() {
        // min (x - 1)^2 + (y - 2)^2 with y fixed at 5 and x + y <= 5.5
        let mut p = QpProblem::new(
            DMatrix::from_diagonal_element(2, 2, 2.0),
            DVector::from_column_slice(&[-2.0, -4.0]),
        )
        .with_bounds(
            DVector::from_column_slice(&[-10.0, 5.0]),
            DVector::from_column_slice(&[10.0, 5.0]),
        )
        .with_le(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), DVector::from_element(1, 5.5));
        p.constant = 5.0;
        let s = solve_qp(&p, &QpOptions::default(), None).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 0.5).abs() < 1e-12);
        assert!((s.objective - (0.25 + 9.0)).abs() < 1e-10);
        assert!(s.kkt.unwrap().max() < 1e-9);
    }
}
