//! Bounded signal temporal logic over sampled signals: syntax, quantitative
//! semantics and a mixed-integer encoding.
//!
//! Concrete syntax, lowest precedence first:
//!
//! ```text
//! formula  := conj ("or" conj)*
//! conj     := until ("and" until)*
//! until    := unary ("until_[a,b]" unary)*
//! unary    := "alw_[a,b]" unary | "ev_[a,b]" unary | "not" unary
//!           | "(" formula ")" | atom
//! atom     := linear relop number
//! linear   := ["-"] term (("+" | "-") term)*
//! term     := [number "*"] channel
//! relop    := ">=" | "<=" | ">" | "<"
//! ```
//!
//! Bounds are seconds or `end`.

mod encode;
mod monitor;
mod parse;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use encode::{EncodingConfig, EncodingStats, Encoder, Lit, Sample, SymbolicSignal};
pub use monitor::{robustness, robustness_eps, SampledSignal};
pub use parse::{parse, parse_spec_file};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StlError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("interval [{0}, {1}] is not a bounded, ordered, non-negative window")]
    InvalidInterval(f64, f64),
    #[error("interval uses `end`; resolve it to a final time first")]
    UnresolvedEnd,
    #[error("unknown channel `{0}`")]
    UnknownChannel(String),
    #[error("signal does not cover sample indices {0:?}")]
    MissingSamples(Vec<usize>),
    #[error("formula must be in negation normal form before encoding")]
    NotNnf,
    #[error("negated `until` has no negation normal form in this fragment")]
    NegatedUntil,
    #[error("sampling period must be positive and finite")]
    InvalidPeriod,
    #[error("channel `{channel}` has {found} samples, expected {expected}")]
    ChannelLength {
        channel: String,
        found: usize,
        expected: usize,
    },
    #[error("reading {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Ge,
    Le,
    Gt,
    Lt,
}

impl Relation {
    pub fn is_strict(self) -> bool {
        matches!(self, Relation::Gt | Relation::Lt)
    }

    /// Relation of the negated predicate.
    pub fn negated(self) -> Self {
        match self {
            Relation::Ge => Relation::Lt,
            Relation::Le => Relation::Gt,
            Relation::Gt => Relation::Le,
            Relation::Lt => Relation::Ge,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::Ge => ">=",
            Relation::Le => "<=",
            Relation::Gt => ">",
            Relation::Lt => "<",
        }
    }
}

/// `Σ coef·channel (relation) threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub terms: Vec<(f64, String)>,
    pub relation: Relation,
    pub threshold: f64,
}

impl Predicate {
    pub fn new(channel: &str, relation: Relation, threshold: f64) -> Self {
        Self {
            terms: vec![(1.0, channel.to_string())],
            relation,
            threshold,
        }
    }

    /// Signed margin, positive when satisfied.
    pub fn margin(&self, lhs: f64) -> f64 {
        match self.relation {
            Relation::Ge | Relation::Gt => lhs - self.threshold,
            Relation::Le | Relation::Lt => self.threshold - lhs,
        }
    }

    /// Sign applied to the left-hand side inside [`Self::margin`].
    pub fn orientation(&self) -> f64 {
        match self.relation {
            Relation::Ge | Relation::Gt => 1.0,
            Relation::Le | Relation::Lt => -1.0,
        }
    }

    pub fn negated(&self) -> Self {
        Self {
            terms: self.terms.clone(),
            relation: self.relation.negated(),
            threshold: self.threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bound {
    Time(f64),
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: f64,
    pub end: Bound,
}

impl Interval {
    pub fn new(start: f64, end: Bound) -> Self {
        Self { start, end }
    }

    pub fn bounded(start: f64, end: f64) -> Self {
        Self {
            start,
            end: Bound::Time(end),
        }
    }

    fn end_time(&self) -> Result<f64, StlError> {
        match self.end {
            Bound::Time(b) => Ok(b),
            Bound::End => Err(StlError::UnresolvedEnd),
        }
    }

    /// Step offsets `⌈a/h⌉ ..= ⌊b/h⌋` relative to the evaluation time.
    pub fn steps(&self, h: f64) -> Result<(usize, usize), StlError> {
        let b = self.end_time()?;
        // Interval ends are usually multiples of h; the slack absorbs
        // representation error in the division.
        let lo = (self.start / h - 1e-9).ceil().max(0.0) as usize;
        let hi = (b / h + 1e-9).floor().max(0.0) as usize;
        Ok((lo, hi))
    }

    fn validate(&self) -> Result<(), StlError> {
        let b = match self.end {
            Bound::Time(b) => b,
            Bound::End => f64::INFINITY,
        };
        if !(self.start >= 0.0 && self.start.is_finite() && self.start <= b && !b.is_nan()) {
            return Err(StlError::InvalidInterval(self.start, b));
        }
        Ok(())
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.end {
            Bound::Time(b) => write!(f, "[{},{}]", self.start, b),
            Bound::End => write!(f, "[{},end]", self.start),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Formula {
    Pred(Predicate),
    Not(Box<Formula>),
    And(Box<Formula>, Box<Formula>),
    Or(Box<Formula>, Box<Formula>),
    Always(Interval, Box<Formula>),
    Eventually(Interval, Box<Formula>),
    Until(Interval, Box<Formula>, Box<Formula>),
}

impl Formula {
    pub fn pred(channel: &str, relation: Relation, threshold: f64) -> Self {
        Formula::Pred(Predicate::new(channel, relation, threshold))
    }

    pub fn and(a: Formula, b: Formula) -> Self {
        Formula::And(Box::new(a), Box::new(b))
    }

    pub fn or(a: Formula, b: Formula) -> Self {
        Formula::Or(Box::new(a), Box::new(b))
    }

    pub fn not(a: Formula) -> Self {
        Formula::Not(Box::new(a))
    }

    pub fn always(i: Interval, a: Formula) -> Self {
        Formula::Always(i, Box::new(a))
    }

    pub fn eventually(i: Interval, a: Formula) -> Self {
        Formula::Eventually(i, Box::new(a))
    }

    pub fn until(i: Interval, a: Formula, b: Formula) -> Self {
        Formula::Until(i, Box::new(a), Box::new(b))
    }

    /// Replaces every `end` bound with `end_time` seconds.
    pub fn resolve_end(&self, end_time: f64) -> Formula {
        let fix = |i: &Interval| Interval {
            start: i.start,
            end: match i.end {
                Bound::End => Bound::Time(end_time),
                b => b,
            },
        };
        match self {
            Formula::Pred(p) => Formula::Pred(p.clone()),
            Formula::Not(a) => Formula::not(a.resolve_end(end_time)),
            Formula::And(a, b) => Formula::and(a.resolve_end(end_time), b.resolve_end(end_time)),
            Formula::Or(a, b) => Formula::or(a.resolve_end(end_time), b.resolve_end(end_time)),
            Formula::Always(i, a) => Formula::always(fix(i), a.resolve_end(end_time)),
            Formula::Eventually(i, a) => Formula::eventually(fix(i), a.resolve_end(end_time)),
            Formula::Until(i, a, b) => {
                Formula::until(fix(i), a.resolve_end(end_time), b.resolve_end(end_time))
            }
        }
    }

    /// Replaces the start of the outermost temporal interval.
    pub fn with_outer_start(&self, start: f64) -> Formula {
        match self {
            Formula::Always(i, a) => Formula::always(Interval::new(start, i.end), (**a).clone()),
            Formula::Eventually(i, a) => {
                Formula::eventually(Interval::new(start, i.end), (**a).clone())
            }
            Formula::Until(i, a, b) => {
                Formula::until(Interval::new(start, i.end), (**a).clone(), (**b).clone())
            }
            other => other.clone(),
        }
    }

    /// Negation normal form; negations are absorbed into predicates.
    pub fn nnf(&self) -> Result<Formula, StlError> {
        self.push_not(false)
    }

    fn push_not(&self, neg: bool) -> Result<Formula, StlError> {
        Ok(match (self, neg) {
            (Formula::Pred(p), false) => Formula::Pred(p.clone()),
            (Formula::Pred(p), true) => Formula::Pred(p.negated()),
            (Formula::Not(a), _) => a.push_not(!neg)?,
            (Formula::And(a, b), false) => Formula::and(a.push_not(false)?, b.push_not(false)?),
            (Formula::And(a, b), true) => Formula::or(a.push_not(true)?, b.push_not(true)?),
            (Formula::Or(a, b), false) => Formula::or(a.push_not(false)?, b.push_not(false)?),
            (Formula::Or(a, b), true) => Formula::and(a.push_not(true)?, b.push_not(true)?),
            (Formula::Always(i, a), false) => Formula::always(*i, a.push_not(false)?),
            (Formula::Always(i, a), true) => Formula::eventually(*i, a.push_not(true)?),
            (Formula::Eventually(i, a), false) => Formula::eventually(*i, a.push_not(false)?),
            (Formula::Eventually(i, a), true) => Formula::always(*i, a.push_not(true)?),
            (Formula::Until(i, a, b), false) => {
                Formula::until(*i, a.push_not(false)?, b.push_not(false)?)
            }
            (Formula::Until(..), true) => return Err(StlError::NegatedUntil),
        })
    }

    pub fn is_nnf(&self) -> bool {
        match self {
            Formula::Pred(_) => true,
            Formula::Not(_) => false,
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) => {
                a.is_nnf() && b.is_nnf()
            }
            Formula::Always(_, a) | Formula::Eventually(_, a) => a.is_nnf(),
        }
    }

    /// Future samples needed to evaluate the formula at one time index.
    pub fn horizon(&self, h: f64) -> Result<usize, StlError> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(StlError::InvalidPeriod);
        }
        Ok(match self {
            Formula::Pred(_) => 0,
            Formula::Not(a) => a.horizon(h)?,
            Formula::And(a, b) | Formula::Or(a, b) => a.horizon(h)?.max(b.horizon(h)?),
            Formula::Always(i, a) | Formula::Eventually(i, a) => {
                i.validate()?;
                let b = i.end_time()?;
                (b / h - 1e-9).ceil() as usize + a.horizon(h)?
            }
            Formula::Until(i, a, b) => {
                i.validate()?;
                let e = i.end_time()?;
                (e / h - 1e-9).ceil() as usize + a.horizon(h)?.max(b.horizon(h)?)
            }
        })
    }

    /// Channel names in first-appearance order.
    pub fn channels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        self.visit_predicates(&mut |p| {
            for (_, c) in &p.terms {
                if !out.contains(c) {
                    out.push(c.clone());
                }
            }
        });
        out
    }

    fn visit_predicates(&self, f: &mut impl FnMut(&Predicate)) {
        match self {
            Formula::Pred(p) => f(p),
            Formula::Not(a) | Formula::Always(_, a) | Formula::Eventually(_, a) => {
                a.visit_predicates(f)
            }
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) => {
                a.visit_predicates(f);
                b.visit_predicates(f);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Formula::Pred(_) => 0,
            Formula::Not(a) | Formula::Always(_, a) | Formula::Eventually(_, a) => 1 + a.depth(),
            Formula::And(a, b) | Formula::Or(a, b) | Formula::Until(_, a, b) => {
                1 + a.depth().max(b.depth())
            }
        }
    }
}

fn write_number(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    write!(f, "{v}")
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, (coef, ch)) in self.terms.iter().enumerate() {
            let (sign, mag) = if *coef < 0.0 { ("-", -coef) } else { ("+", *coef) };
            match (k, sign) {
                (0, "-") => write!(f, "-")?,
                (0, _) => {}
                (_, s) => write!(f, " {s} ")?,
            }
            if mag != 1.0 {
                write_number(f, mag)?;
                write!(f, "*")?;
            }
            write!(f, "{ch}")?;
        }
        write!(f, " {} ", self.relation.symbol())?;
        write_number(f, self.threshold)
    }
}

/// Canonical form: every operand of a connective or temporal operator is
/// parenthesized.
impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Formula::Pred(p) => write!(f, "{p}"),
            Formula::Not(a) => write!(f, "not ({a})"),
            Formula::And(a, b) => write!(f, "({a}) and ({b})"),
            Formula::Or(a, b) => write!(f, "({a}) or ({b})"),
            Formula::Always(i, a) => write!(f, "alw_{i} ({a})"),
            Formula::Eventually(i, a) => write!(f, "ev_{i} ({a})"),
            Formula::Until(i, a, b) => write!(f, "({a}) until_{i} ({b})"),
        }
    }
}

/// Reads a specification file: one formula per line, `#` starts a comment.
pub fn load_spec_file(path: impl AsRef<Path>) -> Result<Vec<Formula>, StlError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| StlError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_spec_file(&text)
}

/// Warm-water specification: output at least 40 °C from 420 s on.
pub const SUPPLY_SPEC: &str = "alw_[420,end] (y >= 40)";
/// Heat pump is either (almost) off or within its operating band.
pub const INPUT_SPEC: &str =
    "alw_[0,end] (((u > 0.001) and (u < 0.01)) or ((u >= 21.2) and (u <= 26.5)))";

pub fn default_specs() -> Vec<Formula> {
    [SUPPLY_SPEC, INPUT_SPEC]
        .iter()
        .map(|s| parse(s).expect("built-in specification parses"))
        .collect()
}
