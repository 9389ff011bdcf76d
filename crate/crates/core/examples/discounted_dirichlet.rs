// Discounted problem with zero exterior data on growing balls, with the
// barrier `|w| ≤ k0/c∘ + V` and the bound `‖w‖ ≤ sup|g|/c∘` checked at
// every node.

use nonlocal_hjb::discounted::{barrier_constant, check_barrier, check_max_bound, SolverOptions};
use nonlocal_hjb::ergodic::{expand_domain, DomainConfig, FarRadius};
use nonlocal_hjb::{build_quadrature, example_1_1_problem, ExteriorRule};

pub fn run_example() -> nonlocal_hjb::Result<bool> {
    let p = example_1_1_problem(1.6, 0.1, 1, 0.9)?;
    let mut all = true;
    println!("{:>6} {:>6} {:>12} {:>12} {:>12}", "alpha", "R", "w(0)", "sup|w|", "barrier gap");
    for alpha in [0.5, 0.25, 0.125] {
        for r in [8.0, 16.0] {
            let cfg = DomainConfig::new(1, 0.5, vec![r])
                .with_exterior(ExteriorRule::Zero)
                .with_far(FarRadius::Diameter);
            let ex = expand_domain(&p, alpha, &cfg, 1e-8, &SolverOptions::default())?;
            let grid = &ex.grid;
            let mut pa = p.clone().with_discount(alpha);
            let q = build_quadrature(grid, 0.9, 2.0 * r + 0.5)?;
            let k0 = barrier_constant(&pa, grid, Some(&q))?;
            pa.lyapunov.as_mut().expect("example carries V").k0 = k0;
            let b = check_barrier(&ex.solution, &pa, grid)?;
            let m = check_max_bound(&ex.solution, &pa, grid);
            all &= b.passed() && m.passed;
            let w = &ex.solution.w;
            println!(
                "{alpha:>6} {r:>6} {:>12.6} {:>12.6} {:>12.3e}",
                w[grid.origin_index()],
                m.sup_w,
                b.min_margin
            );
        }
    }
    println!("all bounds hold: {all}");
    Ok(all)
}

#[allow(dead_code)]
fn main() -> nonlocal_hjb::Result<()> {
    run_example().map(|_| ())
}
