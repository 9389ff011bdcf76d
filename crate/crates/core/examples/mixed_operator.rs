// Two-dimensional problem mixing a variable jump kernel, drift, diffusion and
// a compensated Lévy part; structural checks, a discounted solve and the
// stencil of the origin node.

use nonlocal_hjb::discounted::{solve, SolverOptions};
use nonlocal_hjb::grid::euclidean_norm;
use nonlocal_hjb::operator::stencil_rows;
use nonlocal_hjb::problem::{validate_problem, KernelFactor, MixedSpec, ValidationOptions};
use nonlocal_hjb::{assemble, build_quadrature, Control, ControlProblem, ExteriorRule, Grid, KernelSpec};

pub fn run_example() -> nonlocal_hjb::Result<f64> {
    let s = 0.75;
    let e = 2.0 - 2.0 * s;
    let cost = |x: &[f64]| (1.0 + x[0] * x[0] + x[1] * x[1]).sqrt();
    let jump = Control::new("jump", e, cost)
        .with_kernel(KernelFactor::field(move |x, _| e * (1.0 + 0.25 * x[0].cos())))
        .with_drift(|x| [-0.5 * x[0], -0.5 * x[1]]);
    let local = Control::new("local", e, move |x| cost(x) + 0.25)
        .with_diffusion(|_| [[0.4, 0.1], [0.1, 0.3]])
        .with_levy(|_, y| 0.2 * (-euclidean_norm(y)).exp());
    let p = ControlProblem::new(2, Some(KernelSpec::new(s, 0.5, 1.5)?), vec![jump, local])?
        .with_mixed(MixedSpec {
            lambda: 0.2,
            big_lambda: 1.0,
            majorant: Some(std::sync::Arc::new(|y: &[f64]| 0.2 * (-euclidean_norm(y)).exp())),
        })
        .with_discount(0.5);
    let g = Grid::new(2, 0.5, 3.0)?;
    let q = build_quadrature(&g, s, 4.0)?;
    let rep = validate_problem(&p, &g, &q, &ValidationOptions::default())?;
    for c in &rep.checks {
        println!("{:<24} {:?}  {}", c.name, c.status, c.detail);
    }
    let op = assemble(&p, &g, Some(&q), &ExteriorRule::Zero)?;
    let sol = solve(&op, &SolverOptions::default(), None)?;
    let o = g.origin_index();
    let share = sol.policy.iter().filter(|&&t| t == 1).count() as f64 / g.len() as f64;
    println!(
        "{} nodes, residual {:.2e}, w(0) = {:.6}, share of nodes using the local control {:.2}",
        g.len(),
        sol.residual_inf_norm,
        sol.w[o],
        share
    );
    for row in stencil_rows(&op, &[o]) {
        let mass: f64 = row.entries.iter().filter(|e| e.target != Some(o)).map(|e| e.weight).sum();
        println!(
            "origin, control {}: {} entries, off-diagonal mass {:.4}, diagonal {:.4}",
            row.control,
            row.entries.len(),
            mass,
            row.diagonal
        );
    }
    Ok(sol.w[o])
}

#[allow(dead_code)]
fn main() -> nonlocal_hjb::Result<()> {
    run_example().map(|_| ())
}
