// Jump operator applied to `cos` and to a Gaussian, against reference values.
//
// With kernel factor `C(1,s)/2` the operator approximates `−(−Δ)^s`, whose
// value on `cos` at the origin is `−1`.

use nonlocal_hjb::numerics::laplacian_kernel_factor;
use nonlocal_hjb::oracle::{cos_symbol_value, fractional_laplacian_reference, ReferenceFunction};
use nonlocal_hjb::{assemble, build_quadrature, Control, ControlProblem, ExteriorRule, FarField, Grid, KernelSpec};

/// `(s, hx, error)` for `cos` at the origin.
pub fn cos_errors(orders: &[f64], spacings: &[f64], r_far: f64) -> nonlocal_hjb::Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::new();
    for &s in orders {
        for &h in spacings {
            let g = Grid::new(1, h, 4.0 * h)?;
            let q = build_quadrature(&g, s, r_far)?;
            let k = laplacian_kernel_factor(1, s);
            let p = ControlProblem::new(1, Some(KernelSpec::new(s, 0.1, 10.0)?), vec![Control::new("cos", k, |_| 0.0)])?;
            let ext = ExteriorRule::function(|x| x[0].cos(), FarField::Mean(0.0));
            let op = assemble(&p, &g, Some(&q), &ext)?;
            let v = op.apply(0, &g.tabulate(&|x| x[0].cos()))?;
            out.push((s, h, (v[g.origin_index()] - cos_symbol_value(0.0)).abs()));
        }
    }
    Ok(out)
}

pub fn run_example() -> nonlocal_hjb::Result<Vec<(f64, f64, f64)>> {
    let rows = cos_errors(&[0.6, 0.75, 0.9], &[2f64.powi(-6), 2f64.powi(-7)], 64.0)?;
    println!("{:>6} {:>10} {:>12}", "s", "hx", "|I cos(0)+1|");
    for (s, h, e) in &rows {
        println!("{s:>6} {h:>10.3e} {e:>12.3e}");
    }

    // Gaussian bump, compared with adaptive quadrature of the integral itself
    let s = 0.75;
    let h = 2f64.powi(-5);
    let g = Grid::new(1, h, 4.0)?;
    let q = build_quadrature(&g, s, 64.0)?;
    let p = ControlProblem::new(
        1,
        Some(KernelSpec::new(s, 0.1, 10.0)?),
        vec![Control::new("gauss", laplacian_kernel_factor(1, s), |_| 0.0)],
    )?;
    let f = |x: &[f64]| (-x[0] * x[0]).exp();
    let op = assemble(&p, &g, Some(&q), &ExteriorRule::function(f, FarField::Mean(0.0)))?;
    let v = op.apply(0, &g.tabulate(&f))?;
    for x in [0.0, 0.5, 1.0] {
        let i = g.nearest_node(&[x]).expect("on the lattice");
        let r = fractional_laplacian_reference(ReferenceFunction::Gaussian, x, s)?;
        println!("gaussian x={x}: discrete {:.6}, reference {:.6}", v[i], r);
    }
    Ok(rows)
}

#[allow(dead_code)]
fn main() -> nonlocal_hjb::Result<()> {
    run_example().map(|_| ())
}
