// Policy iteration against the dense damped fixed point on a small random
// problem.

use nonlocal_hjb::discounted::solve_policy_iteration;
use nonlocal_hjb::oracle::{dense_fixed_point, DenseOracle};
use nonlocal_hjb::problem::KernelFactor;
use nonlocal_hjb::{assemble, build_quadrature, Control, ControlProblem, ExteriorRule, Grid, KernelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random two-control problem on `[−R, R]` with bounded coefficients.
pub fn random_problem(seed: u64, s: f64) -> nonlocal_hjb::Result<ControlProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = 2.0 - 2.0 * s;
    let mut controls = Vec::new();
    for label in ["a", "b"] {
        let (k0, k1, f) = (rng.gen_range(0.6..1.4), rng.gen_range(0.0..0.3), rng.gen_range(0.2..2.0));
        let (b0, b1) = (rng.gen_range(-1.0..1.0), rng.gen_range(-0.5..0.5));
        let (g0, g1, g2) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.5..3.0));
        let c0 = rng.gen_range(0.2..1.0);
        controls.push(
            Control::new(label, e, move |x| g0 + g1 * (g2 * x[0]).sin())
                .with_kernel(KernelFactor::field(move |x, _| e * (k0 + k1 * (f * x[0]).cos())))
                .with_drift(move |x| [b0 + b1 * x[0].sin(), 0.0])
                .with_zeroth(move |x| -c0 * (1.0 + 0.5 * x[0].cos().powi(2))),
        );
    }
    ControlProblem::new(1, Some(KernelSpec::new(s, 0.5, 1.5)?), controls)
}

/// Sup distance between the two solutions.
pub fn compare(seed: u64, radius: f64) -> nonlocal_hjb::Result<f64> {
    let s = 0.75;
    let p = random_problem(seed, s)?;
    let g = Grid::new(1, 0.25, radius)?;
    let q = build_quadrature(&g, s, radius + 2.0)?;
    let ext = ExteriorRule::Zero;
    let op = assemble(&p, &g, Some(&q), &ext)?;
    let pi = solve_policy_iteration(&op, 1e-12, 100)?;
    let dense: Vec<DenseOracle> = (0..p.controls.len())
        .map(|t| DenseOracle::build(&p, &g, &q, &ext, t))
        .collect::<nonlocal_hjb::Result<_>>()?;
    let fp = dense_fixed_point(&dense, 1e-11)?;
    Ok(pi.w.iter().zip(&fp).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

pub fn run_example() -> nonlocal_hjb::Result<f64> {
    let mut worst = 0.0f64;
    for seed in 0..3 {
        let d = compare(seed, 4.0)?;
        println!("seed {seed}: sup |w_pi - w_dense| = {d:.3e}");
        worst = worst.max(d);
    }
    Ok(worst)
}

#[allow(dead_code)]
fn main() -> nonlocal_hjb::Result<()> {
    run_example().map(|_| ())
}
