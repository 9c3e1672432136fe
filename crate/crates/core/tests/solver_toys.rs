//! Solver behavior on small problems with independently computable answers.

use gaitopt::solver::{multi_start, solve, SolveOptions, SolveStatus};
use gaitopt::transcription::blocks::{BlockKind, ConstraintBlock};
use gaitopt::transcription::cost::{CostTerm, Objective, TermKind};
use gaitopt::transcription::flat_nlp;

fn poly_term(monomials: Vec<(f64, Vec<(usize, u32)>)>, vars: Vec<usize>) -> CostTerm {
    CostTerm { vars, kind: TermKind::Poly { monomials } }
}

/// min x^2 s.t. x >= 1, posed with the bound as an inequality row.
#[test]
fn scalar_quadratic_with_inequality() {
    let obj = Objective::Terms(vec![poly_term(vec![(1.0, vec![(0, 2)])], vec![0])]);
    let ineq = ConstraintBlock::new(
        vec![0],
        BlockKind::Linear { coeffs: vec![vec![-1.0]], rhs: vec![-1.0] }, // 1 - x <= 0
        None,
        "x>=1",
    );
    let nlp = flat_nlp(1, vec![f64::NEG_INFINITY], vec![f64::INFINITY], vec![], vec![ineq], obj).unwrap();
    let opts = SolveOptions { optimality_tol: 1e-9, ..Default::default() };
    let r = solve(&nlp, &[3.0], &opts);
    assert_eq!(r.status, SolveStatus::Optimal, "{}", r.message);
    assert!((r.x[0] - 1.0).abs() < 1e-8, "x = {}", r.x[0]);
}

/// Same problem posed through a variable bound.
#[test]
fn scalar_quadratic_with_bound() {
    let obj = Objective::Terms(vec![poly_term(vec![(1.0, vec![(0, 2)])], vec![0])]);
    let nlp = flat_nlp(1, vec![1.0], vec![f64::INFINITY], vec![], vec![], obj).unwrap();
    let opts = SolveOptions { optimality_tol: 1e-9, ..Default::default() };
    let r = solve(&nlp, &[4.0], &opts);
    assert_eq!(r.status, SolveStatus::Optimal, "{}", r.message);
    assert!((r.x[0] - 1.0).abs() < 1e-8, "x = {}", r.x[0]);
}

/// min ||x||^2 s.t. A x = b. Closed form: x = A^T (A A^T)^{-1} b.
#[test]
fn equality_qp_matches_projection() {
    // A = [[1, 1, 0], [0, 1, 2]], b = [1, 2]
    let a = [[1.0, 1.0, 0.0], [0.0, 1.0, 2.0]];
    let b = [1.0, 2.0];
    // A A^T = [[2, 1], [1, 5]]; inverse = 1/9 [[5, -1], [-1, 2]].
    let aat_inv = [[5.0 / 9.0, -1.0 / 9.0], [-1.0 / 9.0, 2.0 / 9.0]];
    let lam = [
        aat_inv[0][0] * b[0] + aat_inv[0][1] * b[1],
        aat_inv[1][0] * b[0] + aat_inv[1][1] * b[1],
    ];
    let expected: Vec<f64> = (0..3).map(|j| a[0][j] * lam[0] + a[1][j] * lam[1]).collect();

    let obj = Objective::Terms(vec![poly_term(
        vec![(1.0, vec![(0, 2)]), (1.0, vec![(1, 2)]), (1.0, vec![(2, 2)])],
        vec![0, 1, 2],
    )]);
    let eq = ConstraintBlock::new(
        vec![0, 1, 2],
        BlockKind::Linear { coeffs: vec![a[0].to_vec(), a[1].to_vec()], rhs: b.to_vec() },
        None,
        "Ax=b",
    );
    let nlp = flat_nlp(
        3,
        vec![f64::NEG_INFINITY; 3],
        vec![f64::INFINITY; 3],
        vec![eq],
        vec![],
        obj,
    )
    .unwrap();
    let r = solve(&nlp, &[0.3, -0.5, 0.9], &SolveOptions::default());
    assert_eq!(r.status, SolveStatus::Optimal, "{}", r.message);
    for i in 0..3 {
        assert!((r.x[i] - expected[i]).abs() < 1e-8, "x[{i}] = {} vs {}", r.x[i], expected[i]);
    }
}

fn double_well_nlp() -> gaitopt::NlpProblem {
    // f(x) = (x^2 - 1)^2 + 0.1 x = x^4 - 2x^2 + 0.1x + 1
    let obj = Objective::Terms(vec![poly_term(
        vec![(1.0, vec![(0, 4)]), (-2.0, vec![(0, 2)]), (0.1, vec![(0, 1)]), (1.0, vec![])],
        vec![0],
    )]);
    flat_nlp(1, vec![f64::NEG_INFINITY], vec![f64::INFINITY], vec![], vec![], obj).unwrap()
}

/// Multi-start escapes the higher well; the expected minimizer comes from a
/// grid search over [-2, 2].
#[test]
fn double_well_multi_start_finds_global_minimum() {
    let f = |x: f64| (x * x - 1.0) * (x * x - 1.0) + 0.1 * x;
    let mut best = (f64::INFINITY, 0.0);
    let mut x = -2.0;
    while x <= 2.0 {
        if f(x) < best.0 {
            best = (f(x), x);
        }
        x += 1e-4;
    }
    assert!(best.1 < -0.9, "grid oracle sanity");

    let nlp = double_well_nlp();
    let opts = SolveOptions::default();
    let r = multi_start(&nlp, &[0.9], 8, 1.0, 7, &opts);
    assert!(r.status.is_feasible(), "{:?}", r.status);
    assert!((r.x[0] - best.1).abs() < 1e-4, "found {} vs grid {}", r.x[0], best.1);
}

/// One start is exactly `solve` from the base point.
#[test]
fn multi_start_with_one_start_equals_solve() {
    let nlp = double_well_nlp();
    let opts = SolveOptions::default();
    let single = solve(&nlp, &[0.9], &opts);
    let multi = multi_start(&nlp, &[0.9], 1, 0.5, 3, &opts);
    assert_eq!(single.status, multi.status);
    assert_eq!(single.x, multi.x);
    assert_eq!(single.cost, multi.cost);
}

/// Bit-identical reruns under a fixed seed.
#[test]
fn multi_start_is_deterministic() {
    let nlp = double_well_nlp();
    let opts = SolveOptions::default();
    let a = multi_start(&nlp, &[0.9], 8, 1.0, 42, &opts);
    let b = multi_start(&nlp, &[0.9], 8, 1.0, 42, &opts);
    assert_eq!(a.status, b.status);
    assert_eq!(a.x, b.x);
    assert!(a.cost == b.cost && a.max_violation == b.max_violation);
}

/// Optimal results re-checked by independent constraint evaluation.
#[test]
fn optimal_status_implies_feasibility() {
    let obj = Objective::Terms(vec![poly_term(
        vec![(1.0, vec![(0, 2)]), (0.5, vec![(1, 2)]), (1.0, vec![(0, 1), (1, 1)])],
        vec![0, 1],
    )]);
    let eq = ConstraintBlock::new(
        vec![0, 1],
        BlockKind::Linear { coeffs: vec![vec![1.0, 2.0]], rhs: vec![3.0] },
        None,
        "row",
    );
    let ineq = ConstraintBlock::new(
        vec![0],
        BlockKind::Linear { coeffs: vec![vec![-1.0]], rhs: vec![-0.2] },
        None,
        "x0>=0.2",
    );
    let nlp = flat_nlp(
        2,
        vec![f64::NEG_INFINITY; 2],
        vec![f64::INFINITY; 2],
        vec![eq],
        vec![ineq],
        obj,
    )
    .unwrap();
    let opts = SolveOptions::default();
    let r = solve(&nlp, &[1.0, 1.0], &opts);
    assert_eq!(r.status, SolveStatus::Optimal, "{}", r.message);
    assert!(nlp.max_violation(&r.x) <= opts.feasibility_tol);
}
