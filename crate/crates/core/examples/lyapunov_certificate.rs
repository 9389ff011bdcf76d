// Numerical Foster-Lyapunov certificate `sup_τ L_τ V ≤ k0 − k1|x|^p` for the
// power-law problem, and the same check after reversing the drift.

use nonlocal_hjb::grid::build_grid;
use nonlocal_hjb::lyapunov::{apply_certificate, certify, cost_envelope_ratio};
use nonlocal_hjb::{build_quadrature, example_1_1_problem};

/// Violation counts of the original and the reversed-drift problem.
pub fn run_example() -> nonlocal_hjb::Result<(usize, usize)> {
    let mut p = example_1_1_problem(1.6, 0.1, 1, 0.9)?;
    let grid = build_grid(1, 0.5, 32.0)?;
    let q = build_quadrature(&grid, 0.9, 65.0)?;
    let cert = certify(&p, &grid, &q)?;
    println!(
        "k0 = {:.4}, k1 = {:.4}, p = {}, violations = {}",
        cert.k0,
        cert.k1,
        cert.exponents.envelope,
        cert.violations.len()
    );
    let ratio = cost_envelope_ratio(&p, &grid, &cert, 10.0);
    println!("sup |g|/h on the outer half: {:.4} (decreasing: {})", ratio.sup_ratio, ratio.decreasing);
    apply_certificate(&mut p, &cert)?;

    let flipped = example_1_1_problem(1.6, 0.1, 1, 0.9)?.flip_drift();
    let bad = certify(&flipped, &grid, &q)?;
    println!(
        "reversed drift: admissible = {}, violations = {}",
        bad.admissible,
        bad.violations.len()
    );
    Ok((cert.violations.len(), bad.violations.len()))
}

#[allow(dead_code)]
fn main() -> nonlocal_hjb::Result<()> {
    run_example().map(|_| ())
}
