// Acceptance suite: one PASS/FAIL line per criterion. Runs without the libtest
// harness so the lines are always printed; exits non-zero if any fails.

use std::process::ExitCode;
use std::time::Instant;

use nonlocal_hjb::discounted::{barrier_constant, check_barrier, check_max_bound, solve, SolverOptions};
use nonlocal_hjb::ergodic::{
    geometric_alphas, vanishing_discount, verify_ergodic_pair, DomainConfig, ErgodicOptions, ErgodicSolution,
};
use nonlocal_hjb::harness::{run, RunConfig};
use nonlocal_hjb::problem::{constant_cost_problem, KernelFactor};
use nonlocal_hjb::{
    assemble, build_quadrature, example_1_1_problem, Control, ControlProblem, ExteriorRule, FarField, Grid,
    KernelSpec, Result,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod quadrature_consistency {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/quadrature_consistency.rs"));
}
mod pucci_envelope {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/pucci_envelope.rs"));
}
mod oracle_comparison {
    include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/oracle_comparison.rs"));
}

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { passed, detail })
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, a| m.max(a.abs()))
}

fn inner_sup_diff(a: &ErgodicSolution, b: &ErgodicSolution) -> f64 {
    a.grid
        .nodes_within(a.inner_radius)
        .into_iter()
        .filter_map(|i| b.grid.node_at(a.grid.lattice(i)).map(|j| (a.u[i] - b.u[j]).abs()))
        .fold(0.0, f64::max)
}

// 1: I[cos](0) = −1 within 2e−3 at hx = 2^-7, R_far = 64; error decreases at hx/2; < 5 s.
fn quadrature() -> Result<Outcome> {
    let t = Instant::now();
    let rows = quadrature_consistency::cos_errors(&[0.6, 0.75, 0.9], &[2f64.powi(-7), 2f64.powi(-8)], 64.0)?;
    let secs = t.elapsed().as_secs_f64();
    let mut ok = secs < 5.0;
    let mut parts = Vec::new();
    for pair in rows.chunks(2) {
        let (s, _, e1) = pair[0];
        let e2 = pair[1].2;
        ok &= e1 <= 2e-3 && e2 < e1;
        parts.push(format!("s={s}: {e1:.2e} -> {e2:.2e}"));
    }
    outcome(ok, format!("{} in {secs:.2}s", parts.join(", ")))
}

// 2: affine functions annihilated to 1e−12 at every node.
fn affine() -> Result<Outcome> {
    let mut worst = 0.0f64;
    for dim in [1, 2] {
        for (s, amp) in [(0.6, 0.0), (0.75, 0.4), (0.9, 0.2)] {
            let g = Grid::new(dim, 0.25, 2.0)?;
            let q = build_quadrature(&g, s, 3.0)?;
            let e = 2.0 - 2.0 * s;
            let k = KernelFactor::field(move |x, _| e * (1.0 + amp * (2.0 * x[0]).sin()));
            let c = Control::new("k", e, |_| 0.0).with_kernel(k);
            let p = ControlProblem::new(dim, Some(KernelSpec::new(s, 0.5, 1.5)?), vec![c])?;
            for (a, b, c) in [(1.0, 0.0, 0.0), (-2.0, 3.0, 0.5), (0.5, -1.0, 4.0)] {
                let f = move |x: &[f64]| a + b * x[0] + if x.len() > 1 { c * x[1] } else { 0.0 };
                let op = assemble(&p, &g, Some(&q), &ExteriorRule::function(f, FarField::Lumped))?;
                worst = worst.max(sup(&op.apply(0, &g.tabulate(&f))?));
            }
        }
    }
    outcome(worst <= 1e-12, format!("max |I[affine]| = {worst:.2e}"))
}

// 3: policy iteration vs dense damped fixed point, 10 seeds, 1-d, <= 65 nodes, < 10 s.
fn oracle() -> Result<Outcome> {
    let t = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..10 {
        worst = worst.max(oracle_comparison::compare(seed, 4.0)?);
    }
    let nodes = Grid::new(1, 0.25, 4.0)?.len();
    let secs = t.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-8 && secs < 10.0 && nodes <= 65,
        format!("max sup|w_pi - w_oracle| = {worst:.2e} on {nodes} nodes in {secs:.2}s"),
    )
}

fn seeded_problem(seed: u64, bump: f64) -> Result<ControlProblem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = 0.75;
    let e = 2.0 - 2.0 * s;
    let mut controls = Vec::new();
    for label in ["a", "b"] {
        let (amp, b0, g0, g1, c0) = (
            rng.gen_range(0.0..0.5),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(0.1..1.0),
        );
        let (center, width) = (rng.gen_range(-2.0..2.0), rng.gen_range(0.3..2.0));
        controls.push(
            Control::new(label, e, move |x| {
                g0 + g1 * x[0].sin() + bump * (-((x[0] - center) / width).powi(2)).exp()
            })
            .with_kernel(KernelFactor::field(move |x, _| e * (1.0 + amp * x[0].cos())))
            .with_drift(move |x| [b0 - 0.2 * x[0], 0.0])
            .with_zeroth(move |_| -c0),
        );
    }
    ControlProblem::new(1, Some(KernelSpec::new(s, 0.5, 1.5)?), controls)
}

// 4: g1 <= g2 implies w1 <= w2, 10 seeds.
fn comparison() -> Result<Outcome> {
    let g = Grid::new(1, 0.25, 4.0)?;
    let q = build_quadrature(&g, 0.75, 6.0)?;
    let opts = SolverOptions::default();
    let mut worst = f64::INFINITY;
    let mut ok = true;
    for seed in 0..10 {
        let w1 = solve(&assemble(&seeded_problem(seed, 0.0)?, &g, Some(&q), &ExteriorRule::Zero)?, &opts, None)?;
        let w2 = solve(&assemble(&seeded_problem(seed, 1.5)?, &g, Some(&q), &ExteriorRule::Zero)?, &opts, None)?;
        let slack = (w1.residual_inf_norm / w1.c_circ) + (w2.residual_inf_norm / w2.c_circ);
        let m = w2.w.iter().zip(&w1.w).map(|(a, b)| a - b).fold(f64::INFINITY, f64::min);
        ok &= m >= -slack;
        worst = worst.min(m);
    }
    outcome(ok, format!("min (w2 - w1) = {worst:.2e}"))
}

// 5: barrier and M-bound for the power-law problem, α ∈ {.5,.25,.125}, R ∈ {8,16,32}, d = 1.
fn barrier() -> Result<Outcome> {
    let p = example_1_1_problem(1.6, 0.1, 1, 0.9)?;
    let mut ok = true;
    let (mut bmin, mut mmin) = (f64::INFINITY, f64::INFINITY);
    for alpha in [0.5, 0.25, 0.125] {
        for r in [8.0, 16.0, 32.0] {
            let g = Grid::new(1, 0.5, r)?;
            let q = build_quadrature(&g, 0.9, 2.0 * r + 0.5)?;
            let mut pa = p.clone().with_discount(alpha);
            let sol = solve(&assemble(&pa, &g, Some(&q), &ExteriorRule::Zero)?, &SolverOptions::default(), None)?;
            let k0 = barrier_constant(&pa, &g, Some(&q))?;
            pa.lyapunov.as_mut().expect("V present").k0 = k0;
            let b = check_barrier(&sol, &pa, &g)?;
            let m = check_max_bound(&sol, &pa, &g);
            ok &= b.passed() && m.passed && sol.converged;
            bmin = bmin.min(b.min_margin);
            mmin = mmin.min(m.bound - m.sup_w);
        }
    }
    outcome(ok, format!("9 runs; min barrier margin {bmin:.3e}, min M-bound margin {mmin:.3e}"))
}

// 6: constant cost κ ∈ {0, 1, −3} gives λ* = κ and u = 0 within 1e−9.
fn constant_cost() -> Result<Outcome> {
    let cfg = DomainConfig::new(1, 0.5, vec![4.0, 6.0]);
    let mut ok = true;
    let mut parts = Vec::new();
    for kappa in [0.0, 1.0, -3.0] {
        let sol = vanishing_discount(&constant_cost_problem(1, 0.75, kappa)?, &cfg, &ErgodicOptions::default())?;
        let (dl, du) = ((sol.lambda_star - kappa).abs(), sup(&sol.u));
        ok &= dl <= 1e-9 && du <= 1e-9;
        parts.push(format!("k={kappa}: |dl|={dl:.1e} |u|={du:.1e}"));
    }
    outcome(ok, parts.join(", "))
}

fn example_cfg(dim: usize) -> DomainConfig {
    if dim == 1 {
        DomainConfig::new(1, 0.5, vec![8.0, 16.0])
    } else {
        DomainConfig::new(2, 0.25, vec![4.0, 6.0])
    }
}

// 7: adding κ = 2 to every cost shifts λ* by 2 ± 1e−6; u changes by ≤ 1e−6.
fn shift(base: &ErgodicSolution) -> Result<Outcome> {
    let p = example_1_1_problem(1.6, 0.1, 1, 0.9)?.shift_cost(2.0);
    let sol = vanishing_discount(&p, &example_cfg(1), &ErgodicOptions::default())?;
    let dl = sol.lambda_star - base.lambda_star;
    let du = inner_sup_diff(base, &sol);
    outcome(
        (dl - 2.0).abs() <= 1e-6 && du <= 1e-6,
        format!("shift {dl:.9}, inner sup |du| = {du:.2e}"),
    )
}

// 8: two schedules agree within 5·tol in λ* and u, d = 1 and d = 2; < 5 min.
fn uniqueness(base: &ErgodicSolution) -> Result<Outcome> {
    let t = Instant::now();
    let opts = ErgodicOptions::default();
    let probe = geometric_alphas(0.4, 30);
    let mut ok = true;
    let mut parts = Vec::new();
    let p1 = example_1_1_problem(1.6, 0.1, 1, 0.9)?;
    let r1 = verify_ergodic_pair(base, &p1, &example_cfg(1), &opts, Some(&probe))?;
    let p2 = example_1_1_problem(1.6, 0.1, 2, 0.9)?;
    let s2 = vanishing_discount(&p2, &example_cfg(2), &opts)?;
    let r2 = verify_ergodic_pair(&s2, &p2, &example_cfg(2), &opts, Some(&probe))?;
    for (d, r, conv) in [(1, r1, base.converged), (2, r2, s2.converged)] {
        let u = r.uniqueness.expect("probe requested");
        ok &= conv && u.converged && u.lambda_diff <= 5.0 * opts.tol && u.u_diff <= 5.0 * opts.tol;
        parts.push(format!("d={d}: dl={:.1e} du={:.1e}", u.lambda_diff, u.u_diff));
    }
    let secs = t.elapsed().as_secs_f64();
    ok &= secs < 300.0;
    outcome(ok, format!("{} in {secs:.1}s", parts.join(", ")))
}

// 9: certify mode on the power-law problem (d = 1, R = 32) has no violations;
// reversing the drift produces some.
fn certificate() -> Result<Outcome> {
    let text = r#"
mode = "certify"
[problem]
family = "example-1-1"
dim = 1
s = 0.9
gamma = 1.6
theta = 0.1
[grid]
hx = 0.5
radii = [32.0]
r_far = 65.0
"#;
    let dir = std::env::temp_dir().join(format!("nonlocal-hjb-acceptance-{}", std::process::id()));
    let mut counts = Vec::new();
    for t in [text.to_string(), text.replace("theta = 0.1", "theta = 0.1\nflip_drift = true")] {
        run(&RunConfig::from_toml(&t)?, &dir)?;
        let cert: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("certificate.json"))?)?;
        counts.push(cert["violations"].as_array().map_or(usize::MAX, |v| v.len()));
    }
    std::fs::remove_dir_all(&dir)?;
    outcome(
        counts[0] == 0 && counts[1] > 0,
        format!("violations: {} (original), {} (reversed drift)", counts[0], counts[1]),
    )
}

// 10: g ≡ 0 with c ≤ −c∘ < 0 gives w = 0 to solver tolerance, 10 seeds.
fn liouville() -> Result<Outcome> {
    let g = Grid::new(1, 0.25, 4.0)?;
    let q = build_quadrature(&g, 0.75, 6.0)?;
    let opts = SolverOptions::default();
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let p = seeded_problem(seed, 0.0)?.replace_cost(std::sync::Arc::new(|_: &[f64]| 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let start: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let sol = solve(&assemble(&p, &g, Some(&q), &ExteriorRule::Zero)?, &opts, Some(&start))?;
        worst = worst.max(sup(&sol.w));
    }
    outcome(worst <= opts.tol, format!("max sup|w| = {worst:.2e} (tol {:.0e})", opts.tol))
}

// 11: M− ≤ I ≤ M+ for 10 functions × 5 kernels, to 1e−12.
fn pucci() -> Result<Outcome> {
    let w = pucci_envelope::worst_excess(2024, 10, 5)?;
    outcome(w <= 1e-12, format!("largest excess {w:.3e}"))
}

// 12: α|w_α(0)| ≤ k0 + αV(0) across the α trace.
fn lambda_bound(base: &ErgodicSolution) -> Result<Outcome> {
    let levels = base.alpha_trace.len();
    let worst = base
        .alpha_trace
        .iter()
        .filter_map(|s| s.lambda_bound.as_ref().map(|b| b.k0 + s.alpha * b.v_origin - s.lambda.abs()))
        .fold(f64::INFINITY, f64::min);
    outcome(
        base.lambda_bounds_hold() == Some(true),
        format!("{levels} levels, min margin {worst:.3e}"),
    )
}

fn with_base(base: &Result<ErgodicSolution>, f: fn(&ErgodicSolution) -> Result<Outcome>) -> Result<Outcome> {
    match base {
        Ok(b) => f(b),
        Err(e) => outcome(false, format!("reference ergodic run failed: {e}")),
    }
}

type Criterion<'a> = Box<dyn Fn() -> Result<Outcome> + 'a>;

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let base = vanishing_discount(
        &example_1_1_problem(1.6, 0.1, 1, 0.9).expect("valid parameters"),
        &example_cfg(1),
        &ErgodicOptions::default(),
    );
    let criteria: Vec<(&str, Criterion<'_>)> = vec![
        ("quadrature consistency", Box::new(quadrature)),
        ("affine annihilation", Box::new(affine)),
        ("oracle equivalence", Box::new(oracle)),
        ("discrete comparison", Box::new(comparison)),
        ("barrier and M-bound", Box::new(barrier)),
        ("constant-cost exactness", Box::new(constant_cost)),
        ("shift covariance", Box::new(|| with_base(&base, shift))),
        ("uniqueness probe", Box::new(|| with_base(&base, uniqueness))),
        ("Lyapunov certificate", Box::new(certificate)),
        ("discrete Liouville", Box::new(liouville)),
        ("Pucci envelope", Box::new(pucci)),
        ("lambda_alpha boundedness", Box::new(|| with_base(&base, lambda_bound))),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (passed, detail) = match check() {
            Ok(o) => (o.passed, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failed += 1;
        }
        println!(
            "[{}] {:>2} {name}: {detail} ({:.2}s)",
            if passed { "PASS" } else { "FAIL" },
            k + 1,
            t.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
