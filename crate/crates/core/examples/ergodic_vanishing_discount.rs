// Ergodic pair `(u, λ*)` by vanishing discount on a reflecting ball, with the
// residual recomputed on a fresh operator and a second discount schedule.

use nonlocal_hjb::ergodic::{geometric_alphas, vanishing_discount, verify_ergodic_pair, DomainConfig, ErgodicOptions};
use nonlocal_hjb::example_1_1_problem;

pub fn run_example() -> nonlocal_hjb::Result<f64> {
    let p = example_1_1_problem(1.6, 0.1, 1, 0.9)?;
    let cfg = DomainConfig::new(1, 0.5, vec![8.0, 16.0]);
    let opts = ErgodicOptions::default();
    let sol = vanishing_discount(&p, &cfg, &opts)?;
    println!("{:>10} {:>14} {:>10} {:>10}", "alpha", "alpha*w(0)", "d lambda", "d w");
    for s in &sol.alpha_trace {
        println!(
            "{:>10.3e} {:>14.10} {:>10.2e} {:>10.2e}",
            s.alpha,
            s.lambda,
            s.lambda_change.unwrap_or(f64::NAN),
            s.change.unwrap_or(f64::NAN)
        );
    }
    let probe = geometric_alphas(0.4, 30);
    let pair = verify_ergodic_pair(&sol, &p, &cfg, &opts, Some(&probe))?;
    println!("lambda* = {:.8} converged = {}", sol.lambda_star, sol.converged);
    println!("residual on |x| <= {}: {:.2e}", sol.inner_radius, pair.residual);
    if let Some(u) = &pair.uniqueness {
        println!("second schedule: lambda* = {:.8}, diff {:.2e}", u.lambda_other, u.lambda_diff);
    }
    println!("lambda bounds hold: {:?}", sol.lambda_bounds_hold());
    Ok(sol.lambda_star)
}

#[allow(dead_code)]
fn main() -> nonlocal_hjb::Result<()> {
    run_example().map(|_| ())
}
