// Extremal operators `M^±` bracket the jump operator of every kernel in the
// class.

use nonlocal_hjb::operator::{pucci_extremal, PucciSign};
use nonlocal_hjb::problem::KernelFactor;
use nonlocal_hjb::{assemble, build_quadrature, Control, ControlProblem, ExteriorRule, Grid, KernelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest `max(M^− u − I u, I u − M^+ u)` over all nodes, functions and
/// kernels; nonpositive up to rounding when the envelope holds.
pub fn worst_excess(seed: u64, functions: usize, kernels: usize) -> nonlocal_hjb::Result<f64> {
    let s = 0.7;
    let (lo, hi) = (0.5, 2.0);
    let e = 2.0 - 2.0 * s;
    let g = Grid::new(1, 0.25, 3.0)?;
    let q = build_quadrature(&g, s, 4.0)?;
    let ext = ExteriorRule::Zero;
    let spec = KernelSpec::new(s, lo, hi)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..functions {
        let u: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let plus = pucci_extremal(&q, &g, &u, &ext, PucciSign::Plus, lo, hi)?;
        let minus = pucci_extremal(&q, &g, &u, &ext, PucciSign::Minus, lo, hi)?;
        for _ in 0..kernels {
            let (a, b, c) = (rng.gen_range(0.0..1.0), rng.gen_range(0.5..3.0), rng.gen_range(0.0..1.0));
            // symmetric in y, values in [e·lo, e·hi]
            let k = KernelFactor::field(move |x, y| {
                let t = 0.5 * (1.0 + (b * y[0].abs() + c * x[0]).cos());
                e * (lo + (hi - lo) * (a * t + (1.0 - a) * 0.5))
            });
            let p = ControlProblem::new(1, Some(spec), vec![Control::new("k", 0.0, |_| 0.0).with_kernel(k)])?;
            let v = assemble(&p, &g, Some(&q), &ext)?.apply(0, &u)?;
            for i in 0..g.len() {
                worst = worst.max(minus[i] - v[i]).max(v[i] - plus[i]);
            }
        }
    }
    Ok(worst)
}

pub fn run_example() -> nonlocal_hjb::Result<f64> {
    let w = worst_excess(7, 10, 5)?;
    println!("largest envelope excess over 10 functions x 5 kernels: {w:.3e}");
    Ok(w)
}

#[allow(dead_code)]
fn main() -> nonlocal_hjb::Result<()> {
    run_example().map(|_| ())
}
