//! Oracles shared by the integration tests and the acceptance suite. None of
//! them call into the solvers they check.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use wws_core::optimizer::{LinExpr, MiqpProblem, ProblemBuilder, Sense, VarKind};

pub const FEAS_TOL: f64 = 1e-9;

/// Random MIQP with a positive definite continuous block and `m` general
/// rows. Roughly one in ten instances is made infeasible on purpose.
pub fn random_miqp<R: Rng>(rng: &mut R, nc: usize, nb: usize, m: usize) -> MiqpProblem {
    let n = nc + nb;
    let mut b = ProblemBuilder::new();
    let mut vars = Vec::new();
    for i in 0..nc {
        vars.push(b.add_continuous(-5.0, 5.0, Some(format!("x{i}"))));
    }
    for i in 0..nb {
        vars.push(b.add_binary(Some(format!("d{i}"))));
    }
    // H = MᵀM + 0.5 I on the continuous block.
    let mm = DMatrix::from_fn(n + 1, n, |_, _| rng.random_range(-1.0..1.0));
    let mut h = mm.transpose() * mm;
    for i in 0..nc {
        h[(i, i)] += 0.5;
    }
    for i in 0..n {
        for j in 0..n {
            if i <= j {
                b.add_hessian(vars[i], vars[j], h[(i, j)]);
            }
        }
    }
    for v in &vars {
        b.add_linear(*v, rng.random_range(-3.0..3.0));
    }
    // Rows satisfied by a hidden point (x*, d*).
    let hidden: Vec<f64> = (0..n)
        .map(|i| {
            if i < nc {
                rng.random_range(-4.0..4.0)
            } else {
                f64::from(rng.random_range(0..2u8))
            }
        })
        .collect();
    let infeasible = rng.random_bool(0.1);
    for r in 0..m {
        let mut e = LinExpr::constant(0.0);
        let mut lhs = 0.0;
        for (k, v) in vars.iter().enumerate() {
            if rng.random_bool(0.7) {
                let c = rng.random_range(-3.0..3.0);
                e.add_term(*v, c);
                lhs += c * hidden[k];
            }
        }
        if e.terms.is_empty() {
            e.add_term(vars[r % n], 1.0);
            lhs = hidden[r % n];
        }
        e.constant = -(lhs + rng.random_range(0.0..2.0));
        if infeasible && r == 0 {
            // lin ≤ -c together with lin ≥ 1 - c.
            let mut opp = e.scaled(-1.0);
            opp.constant = 1.0 - e.constant;
            b.add_constraint(opp, Sense::Le, Some("contra".into()));
        }
        b.add_constraint(e, Sense::Le, Some(format!("r{r}")));
    }
    // Binaries must appear somewhere; the linear term guarantees it.
    b.build().expect("random instance is well formed")
}

/// Minimum of a strictly convex QP in the continuous variables by
/// enumerating every candidate active set and solving its KKT system.
pub fn brute_force_continuous(p: &MiqpProblem, fixed: &[(usize, f64)]) -> Option<f64> {
    let n = p.num_vars();
    let mut value = vec![None; n];
    for &(j, v) in fixed {
        value[j] = Some(v);
    }
    let cont: Vec<usize> = (0..n).filter(|j| value[*j].is_none()).collect();
    let nc = cont.len();
    let xf = DVector::from_fn(n, |j, _| value[j].unwrap_or(0.0));

    // Rows a·x_c <= b over the continuous block.
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    let mut eqs: Vec<(DVector<f64>, f64)> = Vec::new();
    for c in &p.constraints {
        let mut a = DVector::zeros(nc);
        let mut shift = 0.0;
        for (v, coef) in &c.terms {
            match cont.iter().position(|j| *j == v.0) {
                Some(k) => a[k] += coef,
                None => shift += coef * xf[v.0],
            }
        }
        let rhs = c.rhs - shift;
        match c.sense {
            Sense::Le => rows.push((a, rhs)),
            Sense::Ge => rows.push((-a, -rhs)),
            Sense::Eq => eqs.push((a, rhs)),
        }
    }
    for (k, &j) in cont.iter().enumerate() {
        let mut e = DVector::zeros(nc);
        e[k] = 1.0;
        if p.vars[j].ub.is_finite() {
            rows.push((e.clone(), p.vars[j].ub));
        }
        if p.vars[j].lb.is_finite() {
            rows.push((-e, -p.vars[j].lb));
        }
    }
    // Constant rows decide feasibility outright.
    let is_const = |a: &DVector<f64>| a.iter().all(|v| *v == 0.0);
    if rows.iter().any(|(a, b)| is_const(a) && *b < -FEAS_TOL)
        || eqs.iter().any(|(a, b)| is_const(a) && b.abs() > FEAS_TOL)
    {
        return None;
    }
    rows.retain(|(a, _)| !is_const(a));
    eqs.retain(|(a, _)| !is_const(a));

    let hc = DMatrix::from_fn(nc, nc, |i, j| p.hessian[(cont[i], cont[j])]);
    let hx = &p.hessian * &xf;
    let cc = DVector::from_fn(nc, |i, _| p.linear[cont[i]] + hx[cont[i]]);
    let base = 0.5 * xf.dot(&(&p.hessian * &xf)) + p.linear.dot(&xf) + p.constant;

    let mut best: Option<f64> = None;
    let m = rows.len();
    let max_active = nc.saturating_sub(eqs.len());
    let mut subset = Vec::new();
    enumerate_subsets(m, max_active, 0, &mut subset, &mut |active| {
        let k = eqs.len() + active.len();
        let mut kkt = DMatrix::zeros(nc + k, nc + k);
        let mut rhs = DVector::zeros(nc + k);
        kkt.view_mut((0, 0), (nc, nc)).copy_from(&hc);
        rhs.rows_mut(0, nc).copy_from(&(-&cc));
        let all = eqs.iter().chain(active.iter().map(|i| &rows[*i]));
        for (r, (a, b)) in all.enumerate() {
            kkt.view_mut((nc + r, 0), (1, nc)).copy_from(&a.transpose());
            kkt.view_mut((0, nc + r), (nc, 1)).copy_from(a);
            rhs[nc + r] = *b;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { return };
        let x = sol.rows(0, nc).into_owned();
        let ok = rows.iter().all(|(a, b)| a.dot(&x) <= b + 1e-7)
            && eqs.iter().all(|(a, b)| (a.dot(&x) - b).abs() <= 1e-7);
        if ok {
            let f = base + 0.5 * x.dot(&(&hc * &x)) + cc.dot(&x);
            if best.is_none_or(|b| f < b) {
                best = Some(f);
            }
        }
    });
    best
}

fn enumerate_subsets(
    m: usize,
    max: usize,
    start: usize,
    cur: &mut Vec<usize>,
    f: &mut impl FnMut(&[usize]),
) {
    f(cur);
    if cur.len() == max {
        return;
    }
    for i in start..m {
        cur.push(i);
        enumerate_subsets(m, max, i + 1, cur, f);
        cur.pop();
    }
}

/// Exhaustive optimum over all binary assignments.
pub fn enumerate_miqp(p: &MiqpProblem) -> Option<f64> {
    let bins: Vec<usize> = p
        .vars
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(i, _)| i)
        .collect();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1u32 << bins.len()) {
        let fixed: Vec<(usize, f64)> = bins
            .iter()
            .enumerate()
            .map(|(k, &j)| (j, f64::from((mask >> k) & 1)))
            .collect();
        if let Some(f) = brute_force_continuous(p, &fixed) {
            if best.is_none_or(|b| f < b) {
                best = Some(f);
            }
        }
    }
    best
}

use wws_core::optimizer::{solve_miqp, MiqpOptions, MiqpStatus};
use wws_core::stl::{
    robustness_eps, EncodingConfig, Encoder, Formula, Interval, Relation, SampledSignal, Sample,
    SymbolicSignal,
};

const CHANNELS: [&str; 2] = ["a", "b"];

/// Random bounded formula of the given maximum depth over up to two
/// channels, on an integer time grid.
pub fn random_formula<R: Rng>(rng: &mut R, depth: usize, channels: usize) -> Formula {
    if depth == 0 || rng.random_bool(0.25) {
        let rel = [Relation::Ge, Relation::Le, Relation::Gt, Relation::Lt][rng.random_range(0..4)];
        let ch = CHANNELS[rng.random_range(0..channels)];
        let thr = f64::from(rng.random_range(-4..=4i32)) * 0.5;
        let mut f = Formula::pred(ch, rel, thr);
        if channels > 1 && rng.random_bool(0.2) {
            if let Formula::Pred(p) = &mut f {
                let other = CHANNELS[1 - CHANNELS.iter().position(|c| *c == ch).unwrap()];
                p.terms.push((f64::from(rng.random_range(-2..=2i32)), other.to_string()));
            }
        }
        return f;
    }
    let mut interval = || {
        let a = rng.random_range(0..=2u32);
        let b = a + rng.random_range(0..=2u32);
        Interval::bounded(f64::from(a), f64::from(b))
    };
    let iv = interval();
    match rng.random_range(0..6) {
        0 => Formula::not(random_formula(rng, depth - 1, channels)),
        1 => Formula::and(
            random_formula(rng, depth - 1, channels),
            random_formula(rng, depth - 1, channels),
        ),
        2 => Formula::or(
            random_formula(rng, depth - 1, channels),
            random_formula(rng, depth - 1, channels),
        ),
        3 => Formula::always(iv, random_formula(rng, depth - 1, channels)),
        4 => Formula::eventually(iv, random_formula(rng, depth - 1, channels)),
        _ => Formula::until(
            iv,
            random_formula(rng, depth - 1, channels),
            random_formula(rng, depth - 1, channels),
        ),
    }
}

pub struct SoundnessCase {
    pub formula: Formula,
    pub signal: SampledSignal,
}

/// Draws formulas until one fits a signal of at most `max_len` samples and
/// has a negation normal form.
pub fn random_soundness_case<R: Rng>(rng: &mut R, max_len: usize) -> SoundnessCase {
    loop {
        let channels = rng.random_range(1..=2);
        let depth = rng.random_range(1..=3);
        let f = random_formula(rng, depth, channels);
        if f.nnf().is_err() {
            continue;
        }
        let need = f.horizon(1.0).unwrap() + 1;
        if need > max_len {
            continue;
        }
        let len = rng.random_range(need..=max_len);
        let mut s = SampledSignal::new(1.0).unwrap();
        for ch in CHANNELS.iter().take(channels) {
            let v = (0..len)
                .map(|_| f64::from(rng.random_range(-6..=6i32)) * 0.5)
                .collect();
            s = s.with_channel(ch, v).unwrap();
        }
        return SoundnessCase { formula: f, signal: s };
    }
}

pub struct SoundnessOutcome {
    pub robustness: f64,
    pub milp_feasible: bool,
    pub via_literal: bool,
}

/// Encodes the case with every signal sample as a fixed variable and asks
/// the MIQP solver for feasibility, both through `require` and through a
/// top literal pinned to one.
pub fn check_soundness(case: &SoundnessCase, eps: f64) -> SoundnessOutcome {
    let nnf = case.formula.nnf().unwrap();
    let cfg = EncodingConfig {
        eps,
        h: case.signal.h,
        ..Default::default()
    };
    let solve = |use_literal: bool| -> bool {
        let mut b = ProblemBuilder::new();
        let mut sym = SymbolicSignal::new(case.signal.h).unwrap();
        for ch in CHANNELS {
            if let Some(vals) = case.signal.channel(ch) {
                let samples = vals
                    .iter()
                    .map(|v| Sample::Expr(LinExpr::var(b.add_continuous(*v, *v, None))))
                    .collect();
                sym = sym.with_channel(ch, samples);
            }
        }
        let mut enc = Encoder::new(&mut b, &sym, &cfg, "");
        if use_literal {
            match enc.literal(&nnf, 0).unwrap() {
                wws_core::stl::Lit::True => return true,
                wws_core::stl::Lit::False => return false,
                wws_core::stl::Lit::Var(v) => b.set_bounds(v, 1.0, 1.0),
            }
        } else {
            enc.require(&nnf, 0).unwrap();
        }
        let p = b.build().unwrap();
        let s = solve_miqp(&p, &MiqpOptions::default(), None).unwrap();
        match s.status {
            MiqpStatus::Optimal => true,
            MiqpStatus::Infeasible => false,
            MiqpStatus::NodeLimit => panic!("node limit on a soundness case"),
        }
    };
    let req = solve(false);
    let lit = solve(true);
    SoundnessOutcome {
        robustness: robustness_eps(&case.formula, &case.signal, 0, eps).unwrap(),
        milp_feasible: req,
        via_literal: lit,
    }
}

// ---------------------------------------------------------------------------
// Predictor oracles.

use wws_core::predictor::{Dataset, ObservableSet};
use wws_core::PlantModel;

/// A linear system that the given dictionary lifts exactly, with the
/// snapshot pairs it generates.
pub struct PlantedSystem {
    pub a: DMatrix<f64>,
    pub b_u: DVector<f64>,
    pub b_d: DVector<f64>,
    pub data: Dataset,
}

/// Random `x' = M x + b u + d w` on the six coordinates.
pub fn planted_identity<R: Rng>(rng: &mut R, samples: usize) -> PlantedSystem {
    let m = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-0.5..0.5));
    let b = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
    let d = DVector::from_fn(6, |_, _| rng.random_range(-1.0..1.0));
    let x = DMatrix::from_fn(6, samples, |_, _| rng.random_range(-2.0..2.0));
    let u = DVector::from_fn(samples, |_, _| rng.random_range(0.0..1.0));
    let w = DVector::from_fn(samples, |_, _| rng.random_range(-1.0..1.0));
    let mut x_next = &m * &x;
    for j in 0..samples {
        let col = x_next.column(j) + &b * u[j] + &d * w[j];
        x_next.set_column(j, &col);
    }
    PlantedSystem {
        a: m,
        b_u: b,
        b_d: d,
        data: Dataset { x, u, w, x_next, h: 1.0 },
    }
}

/// For the default 16-term dictionary: `x1, x2, x6` mix linearly with the
/// inputs, `x3..x5` are scaled, so every monomial advances linearly.
pub fn planted_default<R: Rng>(rng: &mut R, samples: usize) -> PlantedSystem {
    let obs = ObservableSet::default();
    let free = [0usize, 1, 5];
    let mut mix = DMatrix::<f64>::zeros(6, 6);
    for &i in &free {
        for &j in &free {
            mix[(i, j)] = rng.random_range(-0.5..0.5);
        }
    }
    let scale: Vec<f64> = (0..3).map(|_| rng.random_range(0.5..1.2)).collect();
    for k in 0..3 {
        mix[(2 + k, 2 + k)] = scale[k];
    }
    let mut b = DVector::zeros(6);
    let mut d = DVector::zeros(6);
    for &i in &free {
        b[i] = rng.random_range(-1.0..1.0);
        d[i] = rng.random_range(-1.0..1.0);
    }

    let n = obs.len();
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (6, 6)).copy_from(&mix);
    for (k, e) in obs.monomials().iter().enumerate().skip(6) {
        assert!(e[0] == 0 && e[1] == 0 && e[5] == 0);
        a[(k, k)] = (0..3).map(|i| scale[i].powi(e[2 + i] as i32)).product();
    }
    let mut b_u = DVector::zeros(n);
    let mut b_d = DVector::zeros(n);
    b_u.rows_mut(0, 6).copy_from(&b);
    b_d.rows_mut(0, 6).copy_from(&d);

    let x = DMatrix::from_fn(6, samples, |_, _| rng.random_range(0.5..2.0));
    let u = DVector::from_fn(samples, |_, _| rng.random_range(0.0..1.0));
    let w = DVector::from_fn(samples, |_, _| rng.random_range(-1.0..1.0));
    let mut x_next = &mix * &x;
    for j in 0..samples {
        let col = x_next.column(j) + &b * u[j] + &d * w[j];
        x_next.set_column(j, &col);
    }
    PlantedSystem {
        a,
        b_u,
        b_d,
        data: Dataset { x, u, w, x_next, h: 1.0 },
    }
}

/// Largest entry of `|J_analytic - J_fd|` over the largest analytic entry,
/// with central differences of step `step` on every state and input.
pub fn jacobian_fd_error(model: &PlantModel, x: &[f64; 6], u: f64, w: f64, step: f64) -> f64 {
    let (jx, ju, jw) = model.jacobian(x);
    let f = |x: &[f64; 6], u: f64, w: f64| model.vector_field(x, u, w).unwrap();
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for c in 0..8 {
        let (mut xp, mut xm) = (*x, *x);
        let (mut up, mut um, mut wp, mut wm) = (u, u, w, w);
        match c {
            0..=5 => {
                xp[c] += step;
                xm[c] -= step;
            }
            6 => {
                up += step;
                um -= step;
            }
            _ => {
                wp += step;
                wm -= step;
            }
        }
        let (fp, fm) = (f(&xp, up, wp), f(&xm, um, wm));
        for r in 0..6 {
            let fd = (fp[r] - fm[r]) / (2.0 * step);
            let an = match c {
                0..=5 => jx[(r, c)],
                6 => ju[r],
                _ => jw[r],
            };
            num = num.max((an - fd).abs());
            den = den.max(an.abs());
        }
    }
    num / den
}
