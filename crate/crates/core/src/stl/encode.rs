//! Big-M encoding of NNF formulas into a [`ProblemBuilder`].
//!
//! Each predicate instance becomes a binary `p` with
//! `p = 1 ⇒ margin ≥ δ` and `p = 0 ⇒ margin ≤ δ` (`δ = eps` for strict
//! predicates, else 0). Conjunctions and disjunctions get continuous
//! literals in `[0, 1]` bounded above by their children (one-sided linking
//! is exact for negation-free formulas). Formulas that must hold are pushed
//! down through `and`/`alw` so plain predicates become hard rows.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{Formula, Predicate, StlError};
use crate::optimizer::{LinExpr, ProblemBuilder, Sense, VarId};

#[derive(Debug, Clone, PartialEq)]
pub enum Sample {
    Const(f64),
    Expr(LinExpr),
    /// Beyond the decision horizon.
    Deferred,
}

/// Channels whose samples are constants, affine expressions in decision
/// variables, or deferred. Indices past a channel's end are deferred.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicSignal {
    pub h: f64,
    channels: BTreeMap<String, Vec<Sample>>,
}

impl SymbolicSignal {
    pub fn new(h: f64) -> Result<Self, StlError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(StlError::InvalidPeriod);
        }
        Ok(Self {
            h,
            channels: BTreeMap::new(),
        })
    }

    pub fn with_channel(mut self, name: &str, samples: Vec<Sample>) -> Self {
        self.channels.insert(name.to_string(), samples);
        self
    }

    /// Constant channel.
    pub fn with_values(self, name: &str, values: &[f64]) -> Self {
        self.with_channel(name, values.iter().map(|v| Sample::Const(*v)).collect())
    }

    fn get(&self, name: &str, t: usize) -> Result<&Sample, StlError> {
        let ch = self
            .channels
            .get(name)
            .ok_or_else(|| StlError::UnknownChannel(name.to_string()))?;
        Ok(ch.get(t).unwrap_or(&Sample::Deferred))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingConfig {
    /// Fallback constant when a predicate's range is unbounded.
    pub big_m: f64,
    pub eps: f64,
    pub h: f64,
    /// Treat deferred samples as satisfied instead of failing.
    pub defer_missing: bool,
    /// Slack when a predicate folds to a constant (history samples that
    /// came out of a solver carry its feasibility tolerance).
    pub const_tol: f64,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        Self {
            big_m: 1e4,
            eps: 1e-6,
            h: 60.0,
            defer_missing: false,
            const_tol: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lit {
    True,
    False,
    Var(VarId),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncodingStats {
    pub predicate_binaries: usize,
    pub conjunction_literals: usize,
    pub disjunction_literals: usize,
    pub linking_constraints: usize,
    pub hard_constraints: usize,
    pub deferred: usize,
}

pub struct Encoder<'a> {
    builder: &'a mut ProblemBuilder,
    signal: &'a SymbolicSignal,
    cfg: &'a EncodingConfig,
    prefix: String,
    ids: HashMap<usize, usize>,
    memo: HashMap<(usize, usize), Lit>,
    required: HashSet<(usize, usize)>,
    missing: BTreeSet<usize>,
    stats: EncodingStats,
}

fn key(f: &Formula) -> usize {
    f as *const Formula as usize
}

impl<'a> Encoder<'a> {
    /// `prefix` namespaces variable names; names otherwise depend only on
    /// the formula's node order and absolute sample index.
    pub fn new(
        builder: &'a mut ProblemBuilder,
        signal: &'a SymbolicSignal,
        cfg: &'a EncodingConfig,
        prefix: &str,
    ) -> Self {
        Self {
            builder,
            signal,
            cfg,
            prefix: prefix.to_string(),
            ids: HashMap::new(),
            memo: HashMap::new(),
            required: HashSet::new(),
            missing: BTreeSet::new(),
            stats: EncodingStats::default(),
        }
    }

    pub fn stats(&self) -> EncodingStats {
        self.stats
    }

    fn number(&mut self, f: &Formula) {
        let mut stack = vec![f];
        while let Some(n) = stack.pop() {
            let next = self.ids.len();
            self.ids.entry(key(n)).or_insert(next);
            match n {
                Formula::Pred(_) => {}
                Formula::Not(a) | Formula::Always(_, a) | Formula::Eventually(_, a) => {
                    stack.push(a)
                }
                Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) => {
                    stack.push(b);
                    stack.push(a);
                }
            }
        }
    }

    fn prepare(&mut self, f: &Formula) -> Result<(), StlError> {
        if !f.is_nnf() {
            return Err(StlError::NotNnf);
        }
        self.number(f);
        Ok(())
    }

    fn check_missing(&mut self) -> Result<(), StlError> {
        if self.missing.is_empty() {
            Ok(())
        } else {
            Err(StlError::MissingSamples(std::mem::take(&mut self.missing).into_iter().collect()))
        }
    }

    /// Literal equal to (or implying) satisfaction of `f` at index `t`.
    pub fn literal(&mut self, f: &Formula, t: usize) -> Result<Lit, StlError> {
        self.prepare(f)?;
        let l = self.lit(f, t)?;
        self.check_missing()?;
        Ok(l)
    }

    /// Constrains `f` to hold at index `t`.
    pub fn require(&mut self, f: &Formula, t: usize) -> Result<(), StlError> {
        self.prepare(f)?;
        self.req(f, t)?;
        self.check_missing()
    }

    fn name(&self, kind: char, f: &Formula, t: usize) -> String {
        format!("{}{}{}_{}", self.prefix, kind, self.ids[&key(f)], t)
    }

    /// `margin - δ` as an affine expression, or `None` when deferred.
    fn margin(&mut self, p: &Predicate, t: usize) -> Result<Option<LinExpr>, StlError> {
        let mut lhs = LinExpr::constant(0.0);
        for (coef, ch) in &p.terms {
            match self.signal.get(ch, t)? {
                Sample::Const(v) => lhs.constant += coef * v,
                Sample::Expr(e) => lhs = lhs.plus(&e.scaled(*coef)),
                Sample::Deferred => {
                    if self.cfg.defer_missing {
                        self.stats.deferred += 1;
                    } else {
                        self.missing.insert(t);
                    }
                    return Ok(None);
                }
            }
        }
        let o = p.orientation();
        let delta = if p.relation.is_strict() { self.cfg.eps } else { 0.0 };
        let mut m = lhs.scaled(o);
        m.constant -= o * p.threshold + delta;
        Ok(Some(m.compact()))
    }

    fn lit(&mut self, f: &Formula, t: usize) -> Result<Lit, StlError> {
        if let Some(l) = self.memo.get(&(key(f), t)) {
            return Ok(*l);
        }
        let h = self.cfg.h;
        let l = match f {
            Formula::Pred(p) => match self.margin(p, t)? {
                None => Lit::True,
                Some(m) if m.is_constant() => {
                    if m.constant >= -self.cfg.const_tol {
                        Lit::True
                    } else {
                        Lit::False
                    }
                }
                Some(m) => {
                    let (lo, hi) = self.builder.expr_range(&m);
                    let mut big = 1.1 * (-lo).max(hi).max(0.0) + self.cfg.eps;
                    if !big.is_finite() {
                        big = self.cfg.big_m;
                    }
                    let name = self.name('p', f, t);
                    let p = self.builder.add_binary(Some(name.clone()));
                    // m ≥ -M (1 - p)
                    let mut lower = m.clone();
                    lower.add_term(p, -big);
                    lower.constant += big;
                    self.builder
                        .add_constraint(lower, Sense::Ge, Some(format!("{name}_on")));
                    // m ≤ M p
                    let mut upper = m;
                    upper.add_term(p, -big);
                    self.builder
                        .add_constraint(upper, Sense::Le, Some(format!("{name}_off")));
                    self.stats.predicate_binaries += 1;
                    self.stats.linking_constraints += 2;
                    Lit::Var(p)
                }
            },
            Formula::Not(_) => unreachable!("checked by prepare"),
            Formula::And(a, b) => {
                let children = vec![self.lit(a, t)?, self.lit(b, t)?];
                self.conjunction(f, t, children)
            }
            Formula::Or(a, b) => {
                let children = vec![self.lit(a, t)?, self.lit(b, t)?];
                self.disjunction(f, t, children)
            }
            Formula::Always(i, a) => {
                let (lo, hi) = i.steps(h)?;
                let mut children = Vec::new();
                for s in t + lo..=t + hi {
                    children.push(self.lit(a, s)?);
                }
                self.conjunction(f, t, children)
            }
            Formula::Eventually(i, a) => {
                let (lo, hi) = i.steps(h)?;
                let mut children = Vec::new();
                for s in t + lo..=t + hi {
                    children.push(self.lit(a, s)?);
                }
                self.disjunction(f, t, children)
            }
            Formula::Until(i, a, b) => {
                let (lo, hi) = i.steps(h)?;
                let mut branches = Vec::new();
                for tp in t + lo..=t + hi {
                    let mut parts = vec![self.lit(b, tp)?];
                    for tpp in t..tp {
                        parts.push(self.lit(a, tpp)?);
                    }
                    let name = format!("{}_{}", self.name('w', f, t), tp);
                    branches.push(self.combine(parts, true, name));
                }
                self.disjunction(f, t, branches)
            }
        };
        self.memo.insert((key(f), t), l);
        Ok(l)
    }

    fn conjunction(&mut self, f: &Formula, t: usize, children: Vec<Lit>) -> Lit {
        let name = self.name('a', f, t);
        self.combine(children, true, name)
    }

    fn disjunction(&mut self, f: &Formula, t: usize, children: Vec<Lit>) -> Lit {
        let name = self.name('o', f, t);
        self.combine(children, false, name)
    }

    fn combine(&mut self, children: Vec<Lit>, conj: bool, name: String) -> Lit {
        let (absorbing, neutral) = if conj {
            (Lit::False, Lit::True)
        } else {
            (Lit::True, Lit::False)
        };
        if children.contains(&absorbing) {
            return absorbing;
        }
        let mut vars: Vec<VarId> = children
            .into_iter()
            .filter_map(|c| match c {
                Lit::Var(v) => Some(v),
                _ => None,
            })
            .collect();
        vars.dedup();
        match vars.len() {
            0 => neutral,
            1 => Lit::Var(vars[0]),
            _ => {
                let l = self.builder.add_continuous(0.0, 1.0, Some(name.clone()));
                if conj {
                    for (k, v) in vars.iter().enumerate() {
                        let mut e = LinExpr::var(l);
                        e.add_term(*v, -1.0);
                        self.builder
                            .add_constraint(e, Sense::Le, Some(format!("{name}_{k}")));
                    }
                    self.stats.conjunction_literals += 1;
                    self.stats.linking_constraints += vars.len();
                } else {
                    let mut e = LinExpr::var(l);
                    for v in &vars {
                        e.add_term(*v, -1.0);
                    }
                    self.builder.add_constraint(e, Sense::Le, Some(name));
                    self.stats.disjunction_literals += 1;
                    self.stats.linking_constraints += 1;
                }
                Lit::Var(l)
            }
        }
    }

    fn req(&mut self, f: &Formula, t: usize) -> Result<(), StlError> {
        if !self.required.insert((key(f), t)) {
            return Ok(());
        }
        let h = self.cfg.h;
        match f {
            Formula::Pred(p) => {
                if let Some(m) = self.margin(p, t)? {
                    let name = self.name('h', f, t);
                    if m.is_constant() {
                        if m.constant < -self.cfg.const_tol {
                            self.builder.add_infeasible(Some(name));
                            self.stats.hard_constraints += 1;
                        }
                    } else {
                        self.builder.add_constraint(m, Sense::Ge, Some(name));
                        self.stats.hard_constraints += 1;
                    }
                }
            }
            Formula::And(a, b) => {
                self.req(a, t)?;
                self.req(b, t)?;
            }
            Formula::Always(i, a) => {
                let (lo, hi) = i.steps(h)?;
                for s in t + lo..=t + hi {
                    self.req(a, s)?;
                }
            }
            _ => match self.lit(f, t)? {
                Lit::True => {}
                Lit::False => {
                    let name = self.name('h', f, t);
                    self.builder.add_infeasible(Some(name));
                    self.stats.hard_constraints += 1;
                }
                Lit::Var(v) => {
                    self.builder.set_bounds(v, 1.0, 1.0);
                    self.stats.hard_constraints += 1;
                }
            },
        }
        Ok(())
    }
}
