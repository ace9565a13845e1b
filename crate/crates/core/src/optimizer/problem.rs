//! Mixed-integer QP model: variables, linear constraints and a convex
//! quadratic objective `½ xᵀ H x + cᵀ x + k`.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::SolverError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
}

/// Affine expression `Σ coef·x + constant`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(value: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn var(v: VarId) -> Self {
        Self {
            terms: vec![(v, 1.0)],
            constant: 0.0,
        }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|(_, c)| *c == 0.0)
    }

    pub fn add_term(&mut self, v: VarId, coef: f64) -> &mut Self {
        self.terms.push((v, coef));
        self
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|(v, c)| (*v, c * s)).collect(),
            constant: self.constant * s,
        }
    }

    pub fn plus(&self, other: &LinExpr) -> Self {
        let mut terms = self.terms.clone();
        terms.extend_from_slice(&other.terms);
        Self {
            terms,
            constant: self.constant + other.constant,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(v, c)| c * x[v.0]).sum::<f64>()
    }

    /// Merge duplicate variables and drop zero coefficients.
    pub fn compact(mut self) -> Self {
        self.terms.sort_by_key(|(v, _)| *v);
        let mut out: Vec<(VarId, f64)> = Vec::with_capacity(self.terms.len());
        for (v, c) in self.terms {
            match out.last_mut() {
                Some((lv, lc)) if *lv == v => *lc += c,
                _ => out.push((v, c)),
            }
        }
        out.retain(|(_, c)| *c != 0.0);
        Self {
            terms: out,
            constant: self.constant,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

/// `expr (sense) rhs`, with the expression's constant already folded into `rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub name: Option<String>,
}

impl Constraint {
    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|(v, c)| c * x[v.0]).sum()
    }

    /// Positive amount by which `x` violates the constraint.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let l = self.lhs(x);
        match self.sense {
            Sense::Le => (l - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - l).max(0.0),
            Sense::Eq => (l - self.rhs).abs(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Variable {
    pub kind: VarKind,
    pub lb: f64,
    pub ub: f64,
    pub name: Option<String>,
}

/// A validated problem. Built through [`ProblemBuilder`].
#[derive(Debug, Clone, PartialEq)]
pub struct MiqpProblem {
    pub vars: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
}

impl MiqpProblem {
    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn binaries(&self) -> Vec<VarId> {
        self.vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.kind == VarKind::Binary)
            .map(|(i, _)| VarId(i))
            .collect()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        0.5 * (xv.transpose() * &self.hessian * &xv)[0] + self.linear.dot(&xv) + self.constant
    }

    /// Largest bound or constraint violation of `x`, and of binary integrality.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, xi) in self.vars.iter().zip(x) {
            worst = worst.max(v.lb - xi).max(xi - v.ub);
            if v.kind == VarKind::Binary {
                worst = worst.max((xi - xi.round()).abs());
            }
        }
        for c in &self.constraints {
            worst = worst.max(c.violation(x));
        }
        worst
    }

    pub fn find_var(&self, name: &str) -> Option<VarId> {
        self.vars
            .iter()
            .position(|v| v.name.as_deref() == Some(name))
            .map(VarId)
    }

    /// Plain-text dump in CPLEX LP style for cross-checking with external
    /// solvers.
    pub fn to_lp_string(&self) -> String {
        let name = |i: usize| -> String {
            match &self.vars[i].name {
                Some(n) => sanitize(n),
                None => format!("x{i}"),
            }
        };
        let mut s = String::new();
        writeln!(s, "\\ constant term: {}", self.constant).unwrap();
        writeln!(s, "Minimize").unwrap();
        let mut obj = String::from(" obj:");
        for (i, c) in self.linear.iter().enumerate() {
            if *c != 0.0 {
                write!(obj, " {} {}", signed(*c), name(i)).unwrap();
            }
        }
        let mut quad = Vec::new();
        let n = self.num_vars();
        for i in 0..n {
            for j in i..n {
                let h = self.hessian[(i, j)];
                if h == 0.0 {
                    continue;
                }
                // [ ... ] / 2 holds xᵀHx, so off-diagonal pairs count twice.
                let coef = if i == j { h } else { 2.0 * h };
                if i == j {
                    quad.push(format!("{} {} ^2", signed(coef), name(i)));
                } else {
                    quad.push(format!("{} {} * {}", signed(coef), name(i), name(j)));
                }
            }
        }
        if !quad.is_empty() {
            write!(obj, " + [ {} ] / 2", quad.join(" ")).unwrap();
        }
        writeln!(s, "{obj}").unwrap();
        writeln!(s, "Subject To").unwrap();
        for (k, c) in self.constraints.iter().enumerate() {
            let mut row = match &c.name {
                Some(n) => format!(" {}:", sanitize(n)),
                None => format!(" c{k}:"),
            };
            if c.terms.is_empty() {
                write!(row, " 0 {}", name(0)).unwrap();
            }
            for (v, coef) in &c.terms {
                write!(row, " {} {}", signed(*coef), name(v.0)).unwrap();
            }
            let op = match c.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            writeln!(s, "{row} {op} {}", c.rhs).unwrap();
        }
        writeln!(s, "Bounds").unwrap();
        for (i, v) in self.vars.iter().enumerate() {
            let lb = if v.lb.is_finite() { v.lb.to_string() } else { "-inf".into() };
            let ub = if v.ub.is_finite() { v.ub.to_string() } else { "+inf".into() };
            writeln!(s, " {lb} <= {} <= {ub}", name(i)).unwrap();
        }
        let bins: Vec<String> = self.binaries().iter().map(|v| name(v.0)).collect();
        if !bins.is_empty() {
            writeln!(s, "Binaries").unwrap();
            writeln!(s, " {}", bins.join(" ")).unwrap();
        }
        writeln!(s, "End").unwrap();
        s
    }
}

fn signed(c: f64) -> String {
    if c < 0.0 {
        format!("- {}", -c)
    } else {
        format!("+ {c}")
    }
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|ch| if ch.is_ascii_alphanumeric() || ch == '_' || ch == '.' { ch } else { '_' })
        .collect()
}

/// Incremental problem construction. Constraints may be recorded as
/// trivially infeasible when an encoding proves a contradiction between
/// constants.
#[derive(Debug, Clone, Default)]
pub struct ProblemBuilder {
    vars: Vec<Variable>,
    constraints: Vec<Constraint>,
    quad: Vec<(usize, usize, f64)>,
    linear: Vec<(usize, f64)>,
    constant: f64,
}

impl ProblemBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_continuous(&mut self, lb: f64, ub: f64, name: Option<String>) -> VarId {
        self.vars.push(Variable {
            kind: VarKind::Continuous,
            lb,
            ub,
            name,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_binary(&mut self, name: Option<String>) -> VarId {
        self.vars.push(Variable {
            kind: VarKind::Binary,
            lb: 0.0,
            ub: 1.0,
            name,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn bounds(&self, v: VarId) -> (f64, f64) {
        (self.vars[v.0].lb, self.vars[v.0].ub)
    }

    pub fn set_bounds(&mut self, v: VarId, lb: f64, ub: f64) {
        self.vars[v.0].lb = lb;
        self.vars[v.0].ub = ub;
    }

    pub fn kind(&self, v: VarId) -> VarKind {
        self.vars[v.0].kind
    }

    /// Interval of `expr` over the current variable bounds.
    pub fn expr_range(&self, expr: &LinExpr) -> (f64, f64) {
        let mut lo = expr.constant;
        let mut hi = expr.constant;
        for (v, c) in &expr.terms {
            let (l, u) = self.bounds(*v);
            if *c >= 0.0 {
                lo += c * l;
                hi += c * u;
            } else {
                lo += c * u;
                hi += c * l;
            }
        }
        (lo, hi)
    }

    /// Adds `expr (sense) 0`.
    pub fn add_constraint(&mut self, expr: LinExpr, sense: Sense, name: Option<String>) {
        let expr = expr.compact();
        self.constraints.push(Constraint {
            terms: expr.terms,
            sense,
            rhs: -expr.constant,
            name,
        });
    }

    /// Records a contradiction (`0 ≥ 1`).
    pub fn add_infeasible(&mut self, name: Option<String>) {
        self.constraints.push(Constraint {
            terms: Vec::new(),
            sense: Sense::Ge,
            rhs: 1.0,
            name,
        });
    }

    /// `H[i,j] += coef`, mirrored to `H[j,i]` when `i ≠ j`.
    pub fn add_hessian(&mut self, i: VarId, j: VarId, coef: f64) {
        self.quad.push((i.0, j.0, coef));
        if i != j {
            self.quad.push((j.0, i.0, coef));
        }
    }

    pub fn add_linear(&mut self, v: VarId, coef: f64) {
        self.linear.push((v.0, coef));
    }

    pub fn add_constant(&mut self, c: f64) {
        self.constant += c;
    }

    /// Adds `weight · (expr)²` to the objective.
    pub fn add_square(&mut self, expr: &LinExpr, weight: f64) {
        let e = expr.clone().compact();
        for (vi, ci) in &e.terms {
            for (vj, cj) in &e.terms {
                // ½ H with H = 2·w·ccᵀ
                self.quad.push((vi.0, vj.0, 2.0 * weight * ci * cj));
            }
            self.linear.push((vi.0, 2.0 * weight * ci * e.constant));
        }
        self.constant += weight * e.constant * e.constant;
    }

    pub fn build(self) -> Result<MiqpProblem, SolverError> {
        let n = self.vars.len();
        let mut h = DMatrix::zeros(n, n);
        for (i, j, c) in &self.quad {
            h[(*i, *j)] += c;
        }
        let asym = (&h - h.transpose()).amax();
        if asym > 1e-9 * (1.0 + h.amax()) {
            return Err(SolverError::InvalidProblem(format!(
                "quadratic term not symmetric (max asymmetry {asym:e})"
            )));
        }
        let h = (&h + h.transpose()) * 0.5;
        if n > 0 && h.amax() > 0.0 {
            let eig = SymmetricEigen::new(h.clone());
            let min = eig.eigenvalues.min();
            if min < -1e-9 * (1.0 + h.amax()) {
                return Err(SolverError::InvalidProblem(format!(
                    "quadratic term not positive semidefinite (min eigenvalue {min:e})"
                )));
            }
        }
        let mut linear = DVector::zeros(n);
        for (i, c) in &self.linear {
            linear[*i] += c;
        }
        for (i, v) in self.vars.iter().enumerate() {
            if v.lb > v.ub {
                return Err(SolverError::InvalidProblem(format!(
                    "variable {i} has empty bounds [{}, {}]",
                    v.lb, v.ub
                )));
            }
            if v.kind == VarKind::Binary {
                let used = linear[i] != 0.0
                    || h.row(i).iter().any(|c| *c != 0.0)
                    || self
                        .constraints
                        .iter()
                        .any(|c| c.terms.iter().any(|(v, coef)| v.0 == i && *coef != 0.0));
                if !used {
                    return Err(SolverError::InvalidProblem(format!(
                        "binary variable {i} appears in no constraint or objective term"
                    )));
                }
            }
        }
        Ok(MiqpProblem {
            vars: self.vars,
            constraints: self.constraints,
            hessian: h,
            linear,
            constant: self.constant,
        })
    }
}
