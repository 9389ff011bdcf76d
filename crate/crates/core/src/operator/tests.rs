use super::*;
use crate::grid::{ExteriorRule, FarField, Grid};
use crate::numerics::laplacian_kernel_factor;
use crate::problem::{Control, ControlProblem, KernelFactor, KernelSpec, MixedSpec};

fn single(dim: usize, s: f64, k: f64) -> ControlProblem {
    ControlProblem::new(dim, Some(KernelSpec::new(s, 0.1, 10.0).unwrap()), vec![Control::new("only", k, |_| 0.0)])
        .unwrap()
}

#[test]
fn cosine_at_origin_matches_symbol() {
    let s = 0.75;
    let h = 2f64.powi(-7);
    let g = Grid::new(1, h, 4.0 * h).unwrap();
    let q = build_quadrature(&g, s, 64.0).unwrap();
    let p = single(1, s, laplacian_kernel_factor(1, s));
    let ext = ExteriorRule::function(|x| x[0].cos(), FarField::Mean(0.0));
    let op = assemble(&p, &g, Some(&q), &ext).unwrap();
    let u = g.tabulate(&|x| x[0].cos());
    let v = op.apply(0, &u).unwrap();
    let err = (v[g.origin_index()] + 1.0).abs();
    assert!(err < 2e-3, "error {err}");
}

#[test]
fn affine_functions_are_annihilated() {
    for dim in [1, 2] {
        let g = Grid::new(dim, 0.5, 3.0).unwrap();
        let q = build_quadrature(&g, 0.7, 4.0).unwrap();
        let k = KernelFactor::field(|x, y| 0.6 * (1.0 + 0.3 * (x[0] * y[0]).cos()));
        let c = Control::new("k", 0.6, |_| 0.0).with_kernel(k);
        let p = ControlProblem::new(dim, Some(KernelSpec::new(0.7, 0.5, 2.0).unwrap()), vec![c]).unwrap();
        let f = move |x: &[f64]| 3.0 * x[0] + 2.0 - if x.len() > 1 { 1.5 * x[1] } else { 0.0 };
        let ext = ExteriorRule::function(f, FarField::Lumped);
        let op = assemble(&p, &g, Some(&q), &ext).unwrap();
        let v = op.apply(0, &g.tabulate(&f)).unwrap();
        let worst = v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        assert!(worst <= 1e-12, "dim {dim}: {worst}");
    }
}

#[test]
fn homogeneous_problem_has_zero_residual_at_zero() {
    let g = Grid::new(1, 0.5, 4.0).unwrap();
    let q = build_quadrature(&g, 0.8, 5.0).unwrap();
    let p = single(1, 0.8, 0.4).with_discount(0.3);
    let op = assemble(&p, &g, Some(&q), &ExteriorRule::Zero).unwrap();
    assert!(op.apply(0, &vec![0.0; g.len()]).unwrap().iter().all(|v| *v == 0.0));
    // u ≡ 1: c − exterior mass
    let v = op.apply(0, &vec![1.0; g.len()]).unwrap();
    let st = op.stencil(0);
    for i in 0..g.len() {
        assert!((v[i] - (-0.3 - st.exterior_mass()[i])).abs() < 1e-13);
    }
}

#[test]
fn row_mass_matches_quadrature_total() {
    let s = 0.65;
    let k = 2.0 - 2.0 * s;
    let g = Grid::new(1, 0.25, 2.0).unwrap();
    let q = build_quadrature(&g, s, 3.0).unwrap();
    let op = assemble(&single(1, s, k), &g, Some(&q), &ExteriorRule::Zero).unwrap();
    let total = k * (2.0 * q.total_weight() + 2.0 * q.core_coeff() + 2.0 * q.tail_mass());
    for i in 0..g.len() {
        let row: f64 = op.row_entries(0, i).iter().map(|e| e.2).sum();
        assert!((row - total).abs() < 1e-12 * total);
    }
}

#[test]
fn laplacian_stencil_for_pure_diffusion() {
    let g = Grid::new(1, 0.25, 2.0).unwrap();
    let c = Control::new("a", 0.0, |_| 0.0).with_diffusion(|_| [[1.0, 0.0], [0.0, 0.0]]);
    let p = ControlProblem::new(1, None, vec![c])
        .unwrap()
        .with_mixed(MixedSpec {
            lambda: 1.0,
            big_lambda: 1.0,
            majorant: None,
        });
    let op = assemble(&p, &g, None, &ExteriorRule::Zero).unwrap();
    let a = op.dense_linear(0);
    let i = g.origin_index();
    assert_eq!(a[i][i], -32.0);
    assert_eq!(a[i][i - 1], 16.0);
    assert_eq!(a[i][i + 1], 16.0);
    assert_eq!(a[i].iter().filter(|v| **v != 0.0).count(), 3);
}

#[test]
fn non_dominant_diffusion_rejected() {
    let g = Grid::new(2, 0.5, 2.0).unwrap();
    let c = Control::new("a", 0.0, |_| 0.0).with_diffusion(|_| [[1.0, 1.5], [1.5, 3.0]]);
    let p = ControlProblem::new(2, None, vec![c]).unwrap();
    assert!(matches!(
        assemble(&p, &g, None, &ExteriorRule::Zero),
        Err(crate::HjbError::NotDiagonallyDominant { .. })
    ));
}

#[test]
fn quadratic_integrated_exactly() {
    let s = 0.8;
    let k = 2.0 - 2.0 * s;
    let g = Grid::new(1, 0.25, 2.0).unwrap();
    let r_far = 3.0;
    let q = build_quadrature(&g, s, r_far).unwrap();
    let ext = ExteriorRule::function(|x| x[0] * x[0], FarField::Mean(0.0));
    let op = assemble(&single(1, s, k), &g, Some(&q), &ext).unwrap();
    let v = op.apply(0, &g.tabulate(&|x| x[0] * x[0])).unwrap();
    let exact = 4.0 * r_far.powf(2.0 - 2.0 * s);
    assert!((v[g.origin_index()] - exact).abs() < 1e-12 * exact);
}

#[test]
fn inf_policy_dominance_and_drift_sign() {
    let g = Grid::new(1, 0.5, 3.0).unwrap();
    let q = build_quadrature(&g, 0.75, 4.0).unwrap();
    let spec = Some(KernelSpec::new(0.75, 1.0, 1.0).unwrap());
    let p = ControlProblem::new(
        1,
        spec,
        vec![Control::new("cheap", 0.5, |_| 0.0), Control::new("dear", 0.5, |_| 1.0)],
    )
    .unwrap();
    let op = assemble(&p, &g, Some(&q), &ExteriorRule::Zero).unwrap();
    let u = g.tabulate(&|x| x[0].sin());
    let (v, pol) = op.apply_inf(&u).unwrap();
    assert!(pol.iter().all(|t| *t == 0));
    assert_eq!(v, op.apply(0, &u).unwrap());

    let p = ControlProblem::new(
        1,
        spec,
        vec![
            Control::new("right", 0.5, |_| 0.0).with_drift(|_| [1.0, 0.0]),
            Control::new("left", 0.5, |_| 0.0).with_drift(|_| [-1.0, 0.0]),
        ],
    )
    .unwrap();
    let f = |x: &[f64]| 2.0 * x[0] + 1.0;
    let ext = ExteriorRule::function(f, FarField::Lumped);
    let op = assemble(&p, &g, Some(&q), &ext).unwrap();
    let (v, pol) = op.apply_inf(&g.tabulate(&f)).unwrap();
    // b·∇u = ±2: moving left is cheaper everywhere
    assert!(pol.iter().all(|t| *t == 1));
    assert!(v.iter().all(|a| (a + 2.0).abs() < 1e-12));
}

#[test]
fn constant_shift_changes_by_zeroth_term() {
    let g = Grid::new(2, 0.5, 2.0).unwrap();
    let q = build_quadrature(&g, 0.7, 3.0).unwrap();
    let p = single(2, 0.7, 0.6).with_discount(0.2);
    let u = g.tabulate(&|x| x[0] * x[1] + x[0]);
    let kappa = 1.7;
    let shifted: Vec<f64> = u.iter().map(|a| a + kappa).collect();
    let op = assemble(&p, &g, Some(&q), &ExteriorRule::Zero).unwrap();
    let a = op.apply(0, &u).unwrap();
    let b = op.apply(0, &shifted).unwrap();
    for i in 0..g.len() {
        let expect = -0.2 * kappa - kappa * op.stencil(0).exterior_mass()[i];
        assert!((b[i] - a[i] - expect).abs() < 1e-11);
    }
    let whole = |c: f64| ExteriorRule::function(move |x| x[0] * x[1] + x[0] + c, FarField::Lumped);
    let a = assemble(&p, &g, Some(&q), &whole(0.0)).unwrap().apply(0, &u).unwrap();
    let b = assemble(&p, &g, Some(&q), &whole(kappa)).unwrap().apply(0, &shifted).unwrap();
    for i in 0..g.len() {
        assert!((b[i] - a[i] + 0.2 * kappa).abs() < 1e-11);
    }
}

#[test]
fn reflection_conserves_mass() {
    let g = Grid::new(2, 0.5, 2.0).unwrap();
    let q = build_quadrature(&g, 0.7, 3.0).unwrap();
    let p = single(2, 0.7, 0.6);
    let op = assemble(&p, &g, Some(&q), &ExteriorRule::Reflect).unwrap();
    let v = op.apply(0, &vec![3.0; g.len()]).unwrap();
    assert!(v.iter().all(|a| a.abs() < 1e-12));
    assert!(op.stencil(0).exterior_mass().iter().all(|m| *m == 0.0));
}

#[test]
fn pucci_brackets_and_degenerates() {
    let s = 0.75;
    let e = 2.0 - 2.0 * s;
    let g = Grid::new(1, 0.25, 2.0).unwrap();
    let q = build_quadrature(&g, s, 3.0).unwrap();
    let u = g.tabulate(&|x| (2.0 * x[0]).sin() + x[0] * x[0]);
    let ext = ExteriorRule::Zero;
    let plus = pucci_extremal(&q, &g, &u, &ext, PucciSign::Plus, 0.5, 1.5).unwrap();
    let minus = pucci_extremal(&q, &g, &u, &ext, PucciSign::Minus, 0.5, 1.5).unwrap();
    let k = KernelFactor::field(move |x, y| e * (1.0 + 0.4 * (x[0] * y[0]).cos()));
    let c = Control::new("k", 0.0, |_| 0.0).with_kernel(k);
    let p = ControlProblem::new(1, Some(KernelSpec::new(s, 0.5, 1.5).unwrap()), vec![c]).unwrap();
    let v = assemble(&p, &g, Some(&q), &ext).unwrap().apply(0, &u).unwrap();
    for i in 0..g.len() {
        assert!(minus[i] <= v[i] + 1e-12 && v[i] <= plus[i] + 1e-12);
    }
    // λ = Λ: the class is a singleton
    let one = pucci_extremal(&q, &g, &u, &ext, PucciSign::Plus, 1.0, 1.0).unwrap();
    let v = assemble(&single(1, s, e), &g, Some(&q), &ext).unwrap().apply(0, &u).unwrap();
    for i in 0..g.len() {
        assert!((one[i] - v[i]).abs() < 1e-12);
    }
    // affine: both vanish
    let f = |x: &[f64]| 1.0 - 2.0 * x[0];
    let ext = ExteriorRule::function(f, FarField::Lumped);
    let a = pucci_extremal(&q, &g, &g.tabulate(&f), &ext, PucciSign::Plus, 0.5, 1.5).unwrap();
    assert!(a.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn stencil_dump_round_trips_through_json() {
    let g = Grid::new(1, 0.5, 2.0).unwrap();
    let q = build_quadrature(&g, 0.75, 3.0).unwrap();
    let op = assemble(&single(1, 0.75, 0.5), &g, Some(&q), &ExteriorRule::Zero).unwrap();
    let mut buf = Vec::new();
    dump_stencils(&op, &[0, g.origin_index()], &mut buf).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 2);
    assert_eq!(v[1]["control"], "only");
    assert!(v[0]["exterior_mass"].as_f64().unwrap() > 0.0);
}

#[test]
fn negative_weight_names_node_and_offset() {
    let g = Grid::new(1, 0.5, 2.0).unwrap();
    let q = build_quadrature(&g, 0.75, 3.0).unwrap();
    let c = Control::new("bad", 0.5, |_| 0.0)
        .with_kernel(KernelFactor::field(|x, _| if x[0] > 1.0 { -1.0 } else { 0.5 }));
    let p = ControlProblem::new(1, Some(KernelSpec::new(0.75, 0.1, 1.0).unwrap()), vec![c]).unwrap();
    match assemble(&p, &g, Some(&q), &ExteriorRule::Zero) {
        Err(crate::HjbError::Monotonicity { control, node, .. }) => {
            assert_eq!(control, "bad");
            assert!(g.point(node)[0] > 1.0);
        }
        other => panic!("expected monotonicity error, got {other:?}"),
    }
}
