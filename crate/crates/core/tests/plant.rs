use proptest::prelude::*;
use wws_core::predictor::find_equilibrium_from;
use wws_core::{output, Integrator, Plant, PlantModel, State};

/// Each right-hand side as `(coefficient index, exponents of x1..x6, u, w)`,
/// evaluated by a generic monomial loop rather than the hand-unrolled code.
const TERMS: &[(usize, usize, [u32; 8])] = &[
    (0, 1, [1, 0, 0, 0, 0, 0, 0, 0]),
    (0, 2, [0, 0, 0, 0, 0, 1, 0, 0]),
    (0, 3, [0, 0, 0, 0, 0, 0, 1, 0]),
    (1, 4, [1, 0, 0, 0, 0, 0, 0, 0]),
    (1, 5, [0, 1, 0, 0, 0, 0, 0, 0]),
    (1, 6, [0, 0, 0, 0, 0, 0, 0, 1]),
    (2, 7, [0, 1, 0, 0, 0, 0, 0, 0]),
    (2, 8, [0, 0, 1, 0, 0, 0, 0, 0]),
    (2, 9, [0, 0, 0, 1, 0, 0, 0, 0]),
    (2, 10, [0, 0, 2, 0, 0, 0, 0, 0]),
    (2, 11, [0, 0, 0, 2, 0, 0, 0, 0]),
    (2, 12, [0, 0, 2, 1, 0, 0, 0, 0]),
    (2, 13, [0, 0, 1, 2, 0, 0, 0, 0]),
    (2, 14, [0, 0, 3, 0, 0, 0, 0, 0]),
    (2, 15, [0, 0, 0, 3, 0, 0, 0, 0]),
    (2, 16, [0, 0, 0, 0, 0, 0, 0, 1]),
    (3, 17, [0, 0, 1, 0, 0, 0, 0, 0]),
    (3, 18, [0, 0, 0, 1, 0, 0, 0, 0]),
    (3, 19, [0, 0, 0, 0, 1, 0, 0, 0]),
    (3, 20, [0, 0, 2, 0, 0, 0, 0, 0]),
    (3, 21, [0, 0, 0, 2, 0, 0, 0, 0]),
    (3, 22, [0, 0, 0, 0, 2, 0, 0, 0]),
    (3, 23, [0, 0, 2, 1, 0, 0, 0, 0]),
    (3, 24, [0, 0, 1, 2, 0, 0, 0, 0]),
    (3, 25, [0, 0, 0, 2, 1, 0, 0, 0]),
    (3, 26, [0, 0, 0, 1, 2, 0, 0, 0]),
    (3, 27, [0, 0, 3, 0, 0, 0, 0, 0]),
    (3, 28, [0, 0, 0, 3, 0, 0, 0, 0]),
    (3, 29, [0, 0, 0, 0, 3, 0, 0, 0]),
    (3, 30, [0, 0, 0, 0, 0, 0, 0, 1]),
    (4, 31, [0, 0, 0, 1, 0, 0, 0, 0]),
    (4, 32, [0, 0, 0, 0, 1, 0, 0, 0]),
    (4, 33, [0, 0, 0, 2, 0, 0, 0, 0]),
    (4, 34, [0, 0, 0, 0, 2, 0, 0, 0]),
    (4, 35, [0, 0, 0, 2, 1, 0, 0, 0]),
    (4, 36, [0, 0, 0, 1, 2, 0, 0, 0]),
    (4, 37, [0, 0, 0, 3, 0, 0, 0, 0]),
    (4, 38, [0, 0, 0, 0, 3, 0, 0, 0]),
    (4, 39, [0, 0, 0, 0, 0, 0, 0, 1]),
    (5, 40, [0, 0, 0, 0, 1, 0, 0, 0]),
    (5, 41, [0, 0, 0, 0, 0, 1, 0, 0]),
    (5, 42, [0, 0, 0, 0, 0, 0, 0, 1]),
];

fn oracle_field(m: &PlantModel, x: &State, u: f64, w: f64) -> State {
    let vars = [x[0], x[1], x[2], x[3], x[4], x[5], u, w];
    let mut f = [0.0; 6];
    for &(row, coef, exps) in TERMS {
        let mono: f64 = vars.iter().zip(exps).map(|(v, e)| v.powi(e as i32)).product();
        f[row] += m.coef(coef) * mono;
    }
    f
}

fn close(a: &State, b: &State, tol: f64) -> bool {
    a.iter().zip(b).all(|(p, q)| (p - q).abs() <= tol)
}

fn explicit() -> Plant {
    Plant::new(PlantModel::bundled(), Integrator::default())
}

fn implicit() -> Plant {
    Plant::new(PlantModel::bundled(), Integrator::implicit())
}

#[test]
fn every_coefficient_appears_once() {
    let mut seen: Vec<usize> = TERMS.iter().map(|t| t.1).collect();
    seen.sort_unstable();
    assert_eq!(seen, (1..=42).collect::<Vec<_>>());
}

#[test]
fn vector_field_at_the_ones_point() {
    let m = PlantModel::bundled();
    let f0 = m.vector_field(&[1.0; 6], 0.0, 0.0).unwrap();
    assert!((f0[0] - (-0.058)).abs() < 1e-15);
    assert!((f0[1] - (-236.2)).abs() < 1e-12);
    assert!(close(&f0, &oracle_field(&m, &[1.0; 6], 0.0, 0.0), 1e-12));

    let f1 = m.vector_field(&[1.0; 6], 1.0, 0.0).unwrap();
    assert!((f1[0] - 0.04).abs() < 1e-15);
    assert_eq!(f1[1..], f0[1..]);
}

#[test]
fn output_projects_the_third_layer() {
    assert_eq!(output(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]), 5.0);
    assert_eq!(output(&[0.0; 6]), 0.0);
    assert_eq!(output(&[0.0, 0.0, 0.0, 0.0, 40.0, 0.0]), 40.0);
}

proptest! {
    #[test]
    fn vector_field_matches_term_table(
        x in prop::array::uniform6(-50.0f64..150.0),
        u in 0.0f64..30.0,
        w in -10.0f64..40.0,
    ) {
        let m = PlantModel::bundled();
        let f = m.vector_field(&x, u, w).unwrap();
        let g = oracle_field(&m, &x, u, w);
        for i in 0..6 {
            prop_assert!((f[i] - g[i]).abs() <= 1e-9 * (1.0 + g[i].abs()), "row {i}: {} vs {}", f[i], g[i]);
        }
    }

    #[test]
    fn inputs_enter_linearly(
        x in prop::array::uniform6(0.0f64..60.0),
        u in 0.0f64..30.0,
        w in -10.0f64..40.0,
        s in -3.0f64..3.0,
    ) {
        let m = PlantModel::bundled();
        let base = m.vector_field(&x, 0.0, 0.0).unwrap();
        let d = |u: f64, w: f64| -> State {
            let f = m.vector_field(&x, u, w).unwrap();
            std::array::from_fn(|i| f[i] - base[i])
        };
        let (du, dw, duw, dsu) = (d(u, 0.0), d(0.0, w), d(u, w), d(s * u, s * w));
        for i in 0..6 {
            let tol = 1e-9 * (1.0 + base[i].abs());
            prop_assert!((duw[i] - du[i] - dw[i]).abs() <= tol);
            prop_assert!((dsu[i] - s * duw[i]).abs() <= tol * (1.0 + s.abs()));
        }
    }
}

#[test]
fn regression_anchor_from_the_ones_point() {
    // Frozen from the default integrator after checking it against a run
    // with half the substep ceiling.
    let anchor: State = [
        2.795_251_853_425_636_5e-3,
        4.427_623_380_804_42e-5,
        4.427_768_914_232_951e-10,
        2.435_392_728_227_051e-13,
        8.930_065_052_290_9e-17,
        1.414_504_555_973_081_6e-18,
    ];
    let x = explicit().step(&[1.0; 6], 0.0, 0.0, 60.0).unwrap();
    assert!(close(&x, &anchor, 1e-12), "{x:?}");
    let half = Plant::new(PlantModel::bundled(), Integrator::default().halved())
        .step(&[1.0; 6], 0.0, 0.0, 60.0)
        .unwrap();
    assert!(close(&x, &half, 1e-6), "{half:?}");
}

#[test]
fn halving_the_substep_at_nominal_conditions() {
    let x0 = [15.0; 6];
    let a = explicit().step(&x0, 26.5, 10.0, 60.0).unwrap();
    let b = Plant::new(PlantModel::bundled(), Integrator::default().halved())
        .step(&x0, 26.5, 10.0, 60.0)
        .unwrap();
    assert!(close(&a, &b, 1e-6), "{a:?} vs {b:?}");
}

#[test]
fn integrators_agree() {
    for (x0, u) in [([15.0; 6], 26.5), ([40.0; 6], 0.0), ([10.0, 20.0, 30.0, 35.0, 25.0, 12.0], 21.2)] {
        let a = explicit().step(&x0, u, 10.0, 60.0).unwrap();
        let b = implicit().step(&x0, u, 10.0, 60.0).unwrap();
        assert!(close(&a, &b, 1e-6), "{x0:?}: {a:?} vs {b:?}");
    }
}

#[test]
fn steps_are_bit_reproducible() {
    let x0 = [12.0, 18.0, 25.0, 30.0, 33.0, 20.0];
    for p in [explicit(), implicit()] {
        assert_eq!(p.step(&x0, 23.0, 10.0, 60.0).unwrap(), p.step(&x0, 23.0, 10.0, 60.0).unwrap());
    }
}

/// A steady state reached by simulation, then polished by Newton from a
/// perturbed guess.
fn equilibrium() -> (State, f64) {
    let p = implicit();
    let mut x = [15.0; 6];
    for _ in 0..20 {
        x = p.step(&x, 10.0, 10.0, 60.0).unwrap();
    }
    let guess: State = std::array::from_fn(|i| x[i] + 0.5);
    let eq = find_equilibrium_from(&p.model, 10.0, x[4], &guess, 12.0).unwrap();
    assert!(eq.input_in_range);
    (eq.x, eq.u)
}

#[test]
fn equilibrium_is_a_fixed_point_of_step() {
    let (x, u) = equilibrium();
    let next = explicit().step(&x, u, 10.0, 60.0).unwrap();
    assert!(close(&next, &x, 1e-6), "{next:?} vs {x:?}");
    let traj = explicit().simulate(&x, &[u; 3], &[10.0; 3], 60.0).unwrap();
    assert!(traj.iter().all(|s| close(s, &x, 1e-5)));
}

#[test]
fn simulate_composes() {
    let p = implicit();
    let x0 = [15.0; 6];
    let u: Vec<f64> = (0..10).map(|k| if k % 3 == 0 { 0.0 } else { 21.2 + k as f64 * 0.5 }).collect();
    let w = vec![10.0; 10];
    let full = p.simulate(&x0, &u, &w, 60.0).unwrap();
    assert_eq!(full.len(), 11);
    assert_eq!(full[0], x0);
    let first = p.simulate(&x0, &u[..5], &w[..5], 60.0).unwrap();
    let second = p.simulate(&first[5], &u[5..], &w[5..], 60.0).unwrap();
    assert_eq!(full[..6], first[..]);
    assert_eq!(full[5..], second[..]);

    let one = p.simulate(&x0, &u[..1], &w[..1], 60.0).unwrap();
    assert_eq!(one[1], p.step(&x0, u[0], w[0], 60.0).unwrap());
}

#[test]
fn coefficient_file_overrides_the_table() {
    let mut a = *PlantModel::bundled().coefficients();
    a[2] = 0.5;
    let m = PlantModel::from_json(&PlantModel::new(a).to_json()).unwrap();
    assert_eq!(m.coef(3), 0.5);
    let f = m.vector_field(&[0.0; 6], 2.0, 0.0).unwrap();
    assert_eq!(f[0], 1.0);
}
