//! Assembled operators against the independent dense re-summation.

use nonlocal_hjb::discounted::{solve, SolverOptions};
use nonlocal_hjb::oracle::{dense_apply, dense_fixed_point, DenseOracle, ORACLE_CAP};
use nonlocal_hjb::problem::KernelFactor;
use nonlocal_hjb::{
    assemble, build_quadrature, example_1_1_problem, Control, ControlProblem, ExteriorRule, FarField, Grid, HjbError,
    KernelSpec,
};

mod oracle_comparison {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/oracle_comparison.rs"));
}

fn rows_agree(p: &ControlProblem, g: &Grid, r_far: f64, ext: &ExteriorRule) {
    let s = p.kernel.unwrap().s;
    let q = build_quadrature(g, s, r_far).unwrap();
    let op = assemble(p, g, Some(&q), ext).unwrap();
    for tau in 0..p.controls.len() {
        let dense = DenseOracle::build(p, g, &q, ext, tau).unwrap();
        let a = op.dense_linear(tau);
        let scale = a.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
        assert_eq!(a.len(), dense.matrix.len());
        for (i, (row, oracle)) in a.iter().zip(&dense.matrix).enumerate() {
            for (j, (x, y)) in row.iter().zip(oracle).enumerate() {
                assert!(
                    (x - y).abs() <= 1e-12 * scale,
                    "control {tau}, entry ({i},{j}): {x} vs {y}"
                );
            }
            let c = op.stencil(tau).constant()[i];
            assert!((c - dense.constant[i]).abs() <= 1e-12 * (1.0 + c.abs()), "constant at {i}");
        }
    }
}

#[test]
fn matrices_agree_with_zero_exterior() {
    for seed in 0..4 {
        let p = oracle_comparison::random_problem(seed, 0.75).unwrap();
        let g = Grid::new(1, 0.25, 3.0).unwrap();
        rows_agree(&p, &g, 5.0, &ExteriorRule::Zero);
    }
}

#[test]
fn matrices_agree_in_two_dimensions() {
    let s = 0.7;
    let e = 2.0 - 2.0 * s;
    let c = Control::new("v", e, |x| x[0] - x[1])
        .with_kernel(KernelFactor::field(move |x, _| e * (1.0 + 0.3 * x[1].sin())))
        .with_drift(|x| [-x[0], 0.5 - x[1]]);
    let p = ControlProblem::new(2, Some(KernelSpec::new(s, 0.5, 2.0).unwrap()), vec![c])
        .unwrap()
        .with_discount(0.3);
    let g = Grid::new(2, 0.5, 2.5).unwrap();
    rows_agree(&p, &g, 4.0, &ExteriorRule::Zero);
}

#[test]
fn function_exterior_agrees_on_affine_data() {
    let p = example_1_1_problem(1.6, 0.1, 1, 0.9).unwrap().with_discount(0.5);
    let g = Grid::new(1, 0.5, 4.0).unwrap();
    let f = |x: &[f64]| 1.0 + 0.5 * x[0];
    let ext = ExteriorRule::function(f, FarField::Lumped);
    let q = build_quadrature(&g, 0.9, 9.0).unwrap();
    let op = assemble(&p, &g, Some(&q), &ext).unwrap();
    let u = g.tabulate(&|x| (x[0]).sin());
    for tau in 0..2 {
        let dense = DenseOracle::build(&p, &g, &q, &ext, tau).unwrap();
        let a = op.apply(tau, &u).unwrap();
        let b = dense_apply(&dense, &u).unwrap();
        for i in 0..g.len() {
            assert!((a[i] - b[i]).abs() <= 1e-11 * (1.0 + a[i].abs()), "node {i}: {} vs {}", a[i], b[i]);
        }
    }
}

#[test]
fn policy_iteration_matches_fixed_point() {
    for seed in 0..10 {
        let d = oracle_comparison::compare(seed, 4.0).unwrap();
        assert!(d <= 1e-8, "seed {seed}: {d}");
    }
}

#[test]
fn howard_and_fixed_point_agree_on_the_example() {
    let p = example_1_1_problem(1.6, 0.1, 1, 0.9).unwrap().with_discount(0.25);
    let g = Grid::new(1, 0.5, 8.0).unwrap();
    let q = build_quadrature(&g, 0.9, 16.5).unwrap();
    let op = assemble(&p, &g, Some(&q), &ExteriorRule::Zero).unwrap();
    let sol = solve(&op, &SolverOptions::default(), None).unwrap();
    let dense: Vec<_> = (0..2)
        .map(|t| DenseOracle::build(&p, &g, &q, &ExteriorRule::Zero, t).unwrap())
        .collect();
    let fp = dense_fixed_point(&dense, 1e-11).unwrap();
    let d = sol.w.iter().zip(&fp).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(d <= 1e-8, "{d}");
}

#[test]
fn oracle_refuses_large_grids() {
    let p = example_1_1_problem(1.6, 0.1, 2, 0.9).unwrap();
    let g = Grid::new(2, 0.5, 5.0).unwrap();
    assert!(g.len() > ORACLE_CAP);
    let q = build_quadrature(&g, 0.9, 6.0).unwrap();
    assert!(matches!(
        DenseOracle::build(&p, &g, &q, &ExteriorRule::Zero, 0),
        Err(HjbError::OracleCap { .. })
    ));
}
