//! Best-first branch and bound over the binary variables of a
//! [`MiqpProblem`], with QP relaxations solved by [`solve_qp`].

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{DMatrix, DVector};

use super::problem::{MiqpProblem, Sense, VarKind};
use super::qp::{solve_qp, QpOptions, QpProblem, QpStatus};
use super::SolverError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiqpOptions {
    /// Stop once `incumbent - bound <= gap_tol · max(1, |incumbent|)`.
    pub gap_tol: f64,
    pub integrality_tol: f64,
    pub max_nodes: usize,
    pub max_binaries: usize,
    pub qp: QpOptions,
}

impl Default for MiqpOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-6,
            integrality_tol: 1e-6,
            max_nodes: 50_000,
            max_binaries: 128,
            qp: QpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MiqpStatus {
    Optimal,
    Infeasible,
    /// Node budget exhausted; `x` holds the incumbent if one was found.
    NodeLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiqpSolution {
    pub status: MiqpStatus,
    pub x: Option<Vec<f64>>,
    pub objective: f64,
    pub bound: f64,
    pub nodes: usize,
    pub qp_iterations: usize,
}

impl MiqpSolution {
    pub fn gap(&self) -> f64 {
        if self.x.is_some() {
            (self.objective - self.bound).max(0.0)
        } else {
            f64::INFINITY
        }
    }
}

/// Continuous relaxation (binaries in `[0, 1]`).
pub fn to_qp(problem: &MiqpProblem) -> QpProblem {
    let n = problem.num_vars();
    let mut eq = Vec::new();
    let mut le = Vec::new();
    for c in &problem.constraints {
        let mut row = vec![0.0; n];
        for (v, coef) in &c.terms {
            row[v.0] += coef;
        }
        match c.sense {
            Sense::Eq => eq.push((row, c.rhs)),
            Sense::Le => le.push((row, c.rhs)),
            Sense::Ge => le.push((row.iter().map(|v| -v).collect(), -c.rhs)),
        }
    }
    let dense = |rows: &[(Vec<f64>, f64)]| {
        (
            DMatrix::from_fn(rows.len(), n, |i, j| rows[i].0[j]),
            DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1)),
        )
    };
    let (a_eq, b_eq) = dense(&eq);
    let (a_le, b_le) = dense(&le);
    let mut qp = QpProblem::new(problem.hessian.clone(), problem.linear.clone())
        .with_bounds(
            DVector::from_iterator(n, problem.vars.iter().map(|v| v.lb)),
            DVector::from_iterator(n, problem.vars.iter().map(|v| v.ub)),
        )
        .with_eq(a_eq, b_eq)
        .with_le(a_le, b_le);
    qp.constant = problem.constant;
    qp
}

struct Node {
    bound: f64,
    seq: usize,
    fixes: Vec<(usize, f64)>,
    x: DVector<f64>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // BinaryHeap pops the maximum: invert so the lowest bound comes first,
    // then the oldest node.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    base: QpProblem,
    binaries: Vec<usize>,
    opts: &'a MiqpOptions,
    qp_iterations: usize,
}

impl Search<'_> {
    fn relax(
        &mut self,
        fixes: &[(usize, f64)],
        warm: Option<&DVector<f64>>,
    ) -> Result<Option<(f64, DVector<f64>)>, SolverError> {
        let mut qp = self.base.clone();
        for &(j, v) in fixes {
            qp.lb[j] = v;
            qp.ub[j] = v;
        }
        let sol = solve_qp(&qp, &self.opts.qp, warm)?;
        self.qp_iterations += sol.iterations;
        Ok(match sol.status {
            QpStatus::Optimal => Some((sol.objective, sol.x)),
            // An unfinished relaxation gives no valid bound; dropping the
            // node is the conservative choice for feasibility detection.
            QpStatus::Infeasible | QpStatus::IterationLimit => None,
        })
    }

    fn most_fractional(&self, x: &DVector<f64>) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &j in &self.binaries {
            let frac = (x[j] - x[j].round()).abs();
            if frac > self.opts.integrality_tol && best.is_none_or(|(_, f)| frac > f) {
                best = Some((j, frac));
            }
        }
        best.map(|(j, _)| j)
    }

    /// Fixes every binary to its rounded value and re-solves.
    fn polish(
        &mut self,
        x: &DVector<f64>,
    ) -> Result<Option<(f64, DVector<f64>)>, SolverError> {
        let fixes: Vec<(usize, f64)> = self
            .binaries
            .iter()
            .map(|&j| (j, x[j].round().clamp(0.0, 1.0)))
            .collect();
        self.relax(&fixes, Some(x))
    }
}

/// Solves `problem` to global optimality (within `gap_tol`). `warm` is a
/// full-length guess whose rounded binaries seed the incumbent.
pub fn solve_miqp(
    problem: &MiqpProblem,
    opts: &MiqpOptions,
    warm: Option<&[f64]>,
) -> Result<MiqpSolution, SolverError> {
    let binaries: Vec<usize> = problem
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(i, _)| i)
        .collect();
    if binaries.len() > opts.max_binaries {
        return Err(SolverError::TooManyBinaries {
            count: binaries.len(),
            limit: opts.max_binaries,
        });
    }
    let mut search = Search {
        base: to_qp(problem),
        binaries,
        opts,
        qp_iterations: 0,
    };

    let mut incumbent: Option<(f64, DVector<f64>)> = None;
    let offer = |inc: &mut Option<(f64, DVector<f64>)>, cand: (f64, DVector<f64>)| {
        if inc.as_ref().is_none_or(|(f, _)| cand.0 < *f) {
            *inc = Some(cand);
        }
    };

    if let Some(w) = warm {
        if w.len() == problem.num_vars() {
            let wv = DVector::from_column_slice(w);
            if let Some(c) = search.polish(&wv)? {
                offer(&mut incumbent, c);
            }
        }
    }

    let mut nodes = 1;
    let Some((root_bound, root_x)) = search.relax(&[], None)? else {
        return Ok(MiqpSolution {
            status: MiqpStatus::Infeasible,
            x: None,
            objective: f64::INFINITY,
            bound: f64::INFINITY,
            nodes,
            qp_iterations: search.qp_iterations,
        });
    };
    if incumbent.is_none() && !search.binaries.is_empty() {
        if let Some(c) = search.polish(&root_x)? {
            offer(&mut incumbent, c);
        }
    }

    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Node {
        bound: root_bound,
        seq,
        fixes: Vec::new(),
        x: root_x,
    });
    let mut global_bound = root_bound;
    let close_enough = |inc: f64, bound: f64| inc - bound <= opts.gap_tol * inc.abs().max(1.0);

    while let Some(node) = heap.pop() {
        global_bound = node.bound;
        if let Some((f, _)) = &incumbent {
            if close_enough(*f, node.bound) {
                global_bound = node.bound.min(*f);
                heap.clear();
                break;
            }
        }
        match search.most_fractional(&node.x) {
            None => {
                let cand = if search.binaries.is_empty() {
                    Some((node.bound, node.x))
                } else {
                    search.polish(&node.x)?
                };
                if let Some(c) = cand {
                    offer(&mut incumbent, c);
                }
            }
            Some(j) => {
                if nodes >= opts.max_nodes {
                    heap.push(node);
                    break;
                }
                for v in [0.0, 1.0] {
                    let mut fixes = node.fixes.clone();
                    fixes.push((j, v));
                    nodes += 1;
                    if let Some((bound, x)) = search.relax(&fixes, Some(&node.x))? {
                        let prune = incumbent
                            .as_ref()
                            .is_some_and(|(f, _)| close_enough(*f, bound));
                        if !prune {
                            seq += 1;
                            heap.push(Node {
                                bound: bound.max(node.bound),
                                seq,
                                fixes,
                                x,
                            });
                        }
                    }
                }
            }
        }
    }

    let exhausted = heap.is_empty();
    if exhausted {
        if let Some((f, _)) = &incumbent {
            global_bound = global_bound.min(*f);
        }
    } else {
        global_bound = heap.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    }
    let (status, objective, x) = match (incumbent, exhausted) {
        (Some((f, x)), true) => (MiqpStatus::Optimal, f, Some(x)),
        (Some((f, x)), false) => (MiqpStatus::NodeLimit, f, Some(x)),
        (None, true) => (MiqpStatus::Infeasible, f64::INFINITY, None),
        (None, false) => (MiqpStatus::NodeLimit, f64::INFINITY, None),
    };
    Ok(MiqpSolution {
        status,
        x: x.map(|v| {
            let mut v: Vec<f64> = v.iter().cloned().collect();
            for &j in &search.binaries {
                v[j] = v[j].round();
            }
            v
        }),
        objective,
        bound: if status == MiqpStatus::Infeasible {
            f64::INFINITY
        } else {
            global_bound
        },
        nodes,
        qp_iterations: search.qp_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::super::problem::{LinExpr, ProblemBuilder};
    use super::*;

    #[test]
    fn either_or_picks_the_cheaper_branch() {
        // min (x - 3)^2 s.t. x <= 1 or x >= 4 (big-M 20), x in [-10, 10]
        let mut b = ProblemBuilder::new();
        let x = b.add_continuous(-10.0, 10.0, Some("x".into()));
        let d = b.add_binary(Some("d".into()));
        // x - 1 <= 20 d
        let mut e = LinExpr::var(x);
        e.add_term(d, -20.0);
        e.constant = -1.0;
        b.add_constraint(e, Sense::Le, None);
        // x - 4 >= -20 (1 - d)
        let mut e = LinExpr::var(x);
        e.add_term(d, -20.0);
        e.constant = 16.0;
        b.add_constraint(e, Sense::Ge, None);
        b.add_square(&LinExpr::var(x).plus(&LinExpr::constant(-3.0)), 1.0);
        let p = b.build().unwrap();
        let s = solve_miqp(&p, &MiqpOptions::default(), None).unwrap();
        assert_eq!(s.status, MiqpStatus::Optimal);
        let xs = s.x.unwrap();
        assert!((xs[0] - 4.0).abs() < 1e-9);
        assert_eq!(xs[1], 1.0);
        assert!((s.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn contradiction_is_infeasible() {
        let mut b = ProblemBuilder::new();
        let d = b.add_binary(None);
        let mut e = LinExpr::var(d);
        e.constant = -0.5;
        b.add_constraint(e.clone(), Sense::Le, None);
        b.add_constraint(e, Sense::Ge, None);
        let p = b.build().unwrap();
        let s = solve_miqp(&p, &MiqpOptions::default(), None).unwrap();
        assert_eq!(s.status, MiqpStatus::Infeasible);
        assert!(s.x.is_none());
    }

    #[test]
    fn binary_limit_is_enforced() {
        let mut b = ProblemBuilder::new();
        for _ in 0..3 {
            let d = b.add_binary(None);
            b.add_linear(d, 1.0);
        }
        let p = b.build().unwrap();
        let opts = MiqpOptions {
            max_binaries: 2,
            ..Default::default()
        };
        assert!(matches!(
            solve_miqp(&p, &opts, None),
            Err(SolverError::TooManyBinaries { count: 3, limit: 2 })
        ));
    }
}
