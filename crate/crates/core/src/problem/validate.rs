//! Grid-level checks of the structural assumptions on a problem.

use serde::Serialize;

use crate::error::{HjbError, Result};
use crate::grid::{euclidean_norm, Grid};
use crate::numerics::GaussRule;
use crate::operator::JumpQuadrature;
use crate::problem::{ControlProblem, KernelFactor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

/// Outcome of one check, with the worst sampled value and where it occurred.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationCheck {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
    pub worst: Option<f64>,
    pub witness: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<ValidationCheck>,
    /// `c∘` with `sup_τ c_τ ≤ −c∘` on the grid, when positive.
    pub c_circ: Option<f64>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&ValidationCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    fn push(&mut self, name: &str, ok: bool, detail: String, worst: Option<f64>, witness: Option<Vec<f64>>) {
        self.checks.push(ValidationCheck {
            name: name.to_string(),
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            detail,
            worst,
            witness,
        });
    }

    fn skip(&mut self, name: &str, detail: &str) {
        self.checks.push(ValidationCheck {
            name: name.to_string(),
            status: CheckStatus::Skipped,
            detail: detail.to_string(),
            worst: None,
            witness: None,
        });
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ValidationOptions {
    /// Bound `C` for the growth ratios.
    pub growth_bound: f64,
    /// Cap on sampled (node, offset) pairs per kernel check.
    pub max_pairs: usize,
    pub symmetry_tol: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self {
            growth_bound: 10.0,
            max_pairs: 200_000,
            symmetry_tol: 1e-12,
        }
    }
}

struct Worst {
    value: f64,
    at: Vec<f64>,
}

impl Worst {
    fn new() -> Self {
        Self {
            value: f64::NEG_INFINITY,
            at: Vec::new(),
        }
    }

    fn update(&mut self, v: f64, at: impl FnOnce() -> Vec<f64>) {
        if v > self.value {
            self.value = v;
            self.at = at();
        }
    }
}

fn finite(field: &str, v: f64, x: &[f64]) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(HjbError::NonFinite {
            field: field.to_string(),
            point: x.to_vec(),
        })
    }
}

/// Checks the sampled structural assumptions. Failures are reported; NaN
/// coefficients and negative kernel values are hard errors.
pub fn validate_problem(
    p: &ControlProblem,
    grid: &Grid,
    q: &JumpQuadrature,
    opts: &ValidationOptions,
) -> Result<ValidationReport> {
    let mut rep = ValidationReport::default();
    let d = p.dim;
    if grid.dim() != d {
        return Err(HjbError::InvalidProblem(format!(
            "problem dimension {d} differs from grid dimension {}",
            grid.dim()
        )));
    }
    let points: Vec<Vec<f64>> = grid.points().map(|x| x[..d].to_vec()).collect();

    // coefficient finiteness
    for (tau, c) in p.controls.iter().enumerate() {
        for x in &points {
            finite(&format!("cost[{}]", c.label), p.cost(tau, x), x)?;
            finite(&format!("zeroth[{}]", c.label), p.zeroth(tau, x), x)?;
            let b = c.drift_at(x);
            finite(&format!("drift[{}]", c.label), b[0] + b[1], x)?;
        }
    }

    kernel_checks(p, q, &points, opts, &mut rep)?;

    // (B1)
    let mut sup_c = f64::NEG_INFINITY;
    let mut at = Vec::new();
    for x in &points {
        for tau in 0..p.controls.len() {
            let c = p.zeroth(tau, x);
            if c > sup_c {
                sup_c = c;
                at = x.clone();
            }
        }
    }
    if p.discount.is_some() {
        let ok = sup_c < 0.0;
        if ok {
            rep.c_circ = Some(-sup_c);
        }
        rep.push(
            "zeroth_order_sign",
            ok,
            format!("sup c = {sup_c:e}; need sup c <= -c_circ < 0"),
            Some(sup_c),
            Some(at),
        );
    } else {
        rep.push(
            "zeroth_order_sign",
            sup_c <= 0.0,
            format!("sup c = {sup_c:e}; need c <= 0"),
            Some(sup_c),
            Some(at),
        );
    }

    lyapunov_checks(p, grid, q, &points, opts, &mut rep)?;
    mixed_checks(p, q, &points, opts, &mut rep)?;
    Ok(rep)
}

fn kernel_checks(
    p: &ControlProblem,
    q: &JumpQuadrature,
    points: &[Vec<f64>],
    opts: &ValidationOptions,
    rep: &mut ValidationReport,
) -> Result<()> {
    let Some(spec) = p.kernel else {
        rep.skip("kernel_symmetry", "no jump part");
        rep.skip("kernel_bounds", "no jump part");
        return Ok(());
    };
    let (lo, hi) = spec.bounds();
    let stride = ((points.len() * q.len()) / opts.max_pairs.max(1)).max(1);
    let mut asym = Worst::new();
    let mut below = Worst::new();
    let mut above = Worst::new();
    let tol = 1e-12 * hi.max(1.0);
    let d = p.dim;
    let mut k = 0usize;
    for c in &p.controls {
        let constant = c.kernel.is_constant();
        for x in points {
            for (j, o) in q.offsets().iter().enumerate() {
                k += 1;
                if constant && j > 0 {
                    break;
                }
                if !constant && !k.is_multiple_of(stride) {
                    continue;
                }
                let y = &o.point[..d];
                let v = c.kernel.eval(x, y);
                finite(&format!("kernel[{}]", c.label), v, x)?;
                if v < 0.0 {
                    return Err(HjbError::NegativeKernel {
                        control: c.label.clone(),
                        x: x.clone(),
                        y: y.to_vec(),
                        value: v,
                    });
                }
                let ym: Vec<f64> = y.iter().map(|a| -a).collect();
                let vm = match &c.kernel {
                    KernelFactor::Constant(k) => *k,
                    KernelFactor::Field(f) => f(x, &ym),
                };
                let mut w = x.clone();
                w.extend_from_slice(y);
                asym.update((v - vm).abs(), || w.clone());
                below.update(lo - v, || w.clone());
                above.update(v - hi, || w);
            }
        }
    }
    rep.push(
        "kernel_symmetry",
        asym.value <= opts.symmetry_tol * hi.max(1.0),
        format!("max |k(x,y) - k(x,-y)| = {:e}", asym.value),
        Some(asym.value),
        Some(asym.at),
    );
    let worst = below.value.max(above.value);
    let at = if below.value >= above.value { below.at } else { above.at };
    rep.push(
        "kernel_bounds",
        worst <= tol,
        format!("need {lo} <= k <= {hi}; worst excess {worst:e}"),
        Some(worst),
        Some(at),
    );
    Ok(())
}

fn lyapunov_checks(
    p: &ControlProblem,
    grid: &Grid,
    q: &JumpQuadrature,
    points: &[Vec<f64>],
    opts: &ValidationOptions,
    rep: &mut ValidationReport,
) -> Result<()> {
    let names = [
        "lyapunov_nonnegative",
        "inf_compact_proxy",
        "growth_ratio",
        "lyapunov_integrability",
    ];
    let Some(lyap) = &p.lyapunov else {
        for n in names {
            rep.skip(n, "no Lyapunov data");
        }
        return Ok(());
    };
    let s = p.kernel.map_or(1.0, |k| k.s);
    let mu = lyap.mu;
    let mut neg = Worst::new();
    let mut ratio = Worst::new();
    for x in points {
        let v = finite("V", lyap.v.value(x), x)?;
        let h = finite("h", lyap.h(x), x)?;
        neg.update(-v.min(h), || x.clone());
        let base = 1.0 + v;
        for (tau, c) in p.controls.iter().enumerate() {
            let b = c.drift_at(x);
            let nb = euclidean_norm(&b[..p.dim]);
            let r = nb / base.powf((2.0 * s - 1.0) * mu)
                + p.cost(tau, x).abs() / base.powf(1.0 + 2.0 * s * mu)
                + p.zeroth(tau, x).abs() / base.powf(2.0 * s * mu);
            ratio.update(r, || x.clone());
        }
    }
    rep.push(
        "lyapunov_nonnegative",
        neg.value <= 0.0,
        format!("min(V, h) = {:e}", -neg.value),
        Some(-neg.value),
        Some(neg.at),
    );

    // monotone growth of V and h along rays beyond r = 1
    let dirs = q.tail_directions();
    let steps = 64;
    let r_max = grid.radius().max(2.0);
    let mut drop = Worst::new();
    for dir in &dirs {
        let mut prev = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for k in 0..=steps {
            let r = 1.0 + (r_max - 1.0) * k as f64 / steps as f64;
            let x: Vec<f64> = dir[..p.dim].iter().map(|a| a * r).collect();
            let cur = (lyap.v.value(&x), lyap.h(&x));
            drop.update((prev.0 - cur.0).max(prev.1 - cur.1), || x.clone());
            prev = cur;
        }
    }
    rep.push(
        "inf_compact_proxy",
        drop.value <= 0.0,
        "V and h nondecreasing along sampled rays for |x| >= 1 (proxy for inf-compactness)".into(),
        Some(drop.value),
        Some(drop.at),
    );

    rep.push(
        "growth_ratio",
        ratio.value <= opts.growth_bound,
        format!(
            "sup |b|/(1+V)^((2s-1)mu) + |g|/(1+V)^(1+2s mu) + |c|/(1+V)^(2s mu) = {:.6} (bound {})",
            ratio.value, opts.growth_bound
        ),
        Some(ratio.value),
        Some(ratio.at),
    );

    // V^{1+mu} against 1/(1+|y|^{d+2s}) on dyadic shells beyond the grid
    let rule = GaussRule::new(16);
    let shell = |a: f64| -> f64 {
        let mut acc = 0.0;
        for dir in &dirs {
            acc += rule.integrate(a, 2.0 * a, |r| {
                let x: Vec<f64> = dir[..p.dim].iter().map(|c| c * r).collect();
                let w = 1.0 / (1.0 + r.powf(p.dim as f64 + 2.0 * s));
                lyap.v.value(&x).powf(1.0 + mu) * w * r.powi(p.dim as i32 - 1)
            });
        }
        acc * crate::numerics::sphere_measure(p.dim) / dirs.len() as f64
    };
    let mut a = grid.radius().max(1.0);
    let mut shells = Vec::new();
    for _ in 0..6 {
        shells.push(shell(a));
        a *= 2.0;
    }
    let rho = shells[5] / shells[4];
    rep.push(
        "lyapunov_integrability",
        rho < 1.0,
        format!("dyadic shell ratio of V^(1+mu) w_s = {rho:.6}; integrable tail needs < 1"),
        Some(rho),
        None,
    );
    Ok(())
}

fn mixed_checks(
    p: &ControlProblem,
    q: &JumpQuadrature,
    points: &[Vec<f64>],
    opts: &ValidationOptions,
    rep: &mut ValidationReport,
) -> Result<()> {
    let Some(mixed) = &p.mixed else {
        rep.skip("ellipticity", "no local part");
        rep.skip("levy_majorant", "no local part");
        return Ok(());
    };
    let d = p.dim;
    let mut worst = Worst::new();
    let mut any = false;
    for c in &p.controls {
        let Some(a) = &c.diffusion else { continue };
        any = true;
        for x in points {
            let m = a(x);
            let (e0, e1) = if d == 1 {
                (m[0][0], m[0][0])
            } else {
                let tr = m[0][0] + m[1][1];
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
                (0.5 * tr - disc, 0.5 * tr + disc)
            };
            finite("diffusion", e0 + e1, x)?;
            let excess = (mixed.lambda - e0).max(e1 - mixed.big_lambda);
            worst.update(excess, || x.clone());
        }
    }
    if any {
        rep.push(
            "ellipticity",
            worst.value <= 1e-12,
            format!("eigenvalues in [{}, {}]; worst excess {:e}", mixed.lambda, mixed.big_lambda, worst.value),
            Some(worst.value),
            Some(worst.at),
        );
    } else {
        rep.skip("ellipticity", "no diffusion");
    }

    let has_levy = p.controls.iter().any(|c| c.levy.is_some());
    if !has_levy {
        rep.skip("levy_majorant", "no Lévy part");
        return Ok(());
    }
    let Some(maj) = &mixed.majorant else {
        rep.push("levy_majorant", false, "Lévy densities given without a majorant".into(), None, None);
        return Ok(());
    };
    let stride = ((points.len() * q.len()) / opts.max_pairs.max(1)).max(1);
    let mut excess = Worst::new();
    let mut k = 0usize;
    for c in &p.controls {
        let Some(kf) = &c.levy else { continue };
        for x in points {
            for o in q.offsets() {
                k += 1;
                if !k.is_multiple_of(stride) {
                    continue;
                }
                let y = &o.point[..d];
                let v = finite("levy", kf(x, y), x)?;
                if v < 0.0 {
                    return Err(HjbError::NegativeKernel {
                        control: c.label.clone(),
                        x: x.clone(),
                        y: y.to_vec(),
                        value: v,
                    });
                }
                excess.update(v - maj(y), || {
                    let mut w = x.clone();
                    w.extend_from_slice(y);
                    w
                });
            }
        }
    }
    let moment: f64 = q
        .offsets()
        .iter()
        .map(|o| maj(&o.point[..d]) * o.area * (o.norm * o.norm).min(1.0))
        .sum();
    rep.push(
        "levy_majorant",
        excess.value <= 1e-12 && moment.is_finite(),
        format!(
            "max K_tau - K = {:e}; quadrature estimate of int min(|y|^2,1) K = {moment:.6}",
            excess.value
        ),
        Some(excess.value),
        Some(excess.at),
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{constant_cost_problem, example_1_1_problem, Control, KernelSpec};

    fn setup(dim: usize) -> (Grid, JumpQuadrature) {
        let g = Grid::new(dim, 0.5, 4.0).unwrap();
        let q = crate::operator::build_quadrature(&g, 0.75, 5.0).unwrap();
        (g, q)
    }

    #[test]
    fn constant_kernel_passes_bounds() {
        let (g, q) = setup(1);
        let p = constant_cost_problem(1, 0.75, 1.0).unwrap().with_discount(0.1);
        let r = validate_problem(&p, &g, &q, &ValidationOptions::default()).unwrap();
        assert_eq!(r.check("kernel_bounds").unwrap().status, CheckStatus::Pass);
        assert_eq!(r.check("kernel_symmetry").unwrap().status, CheckStatus::Pass);
        assert!((r.c_circ.unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn odd_kernel_fails_symmetry_with_witness() {
        let (g, q) = setup(1);
        let s = 0.75;
        let e = 2.0 - 2.0 * s;
        let c = Control::new("odd", e, |_| 0.0).with_kernel(KernelFactor::field(move |x, y| {
            e * (1.0 + 0.5 * (x[0] * y[0]).sin())
        }));
        let p = ControlProblem::new(1, Some(KernelSpec::new(s, 0.5, 1.5).unwrap()), vec![c]).unwrap();
        let r = validate_problem(&p, &g, &q, &ValidationOptions::default()).unwrap();
        let sym = r.check("kernel_symmetry").unwrap();
        assert_eq!(sym.status, CheckStatus::Fail);
        assert!(sym.worst.unwrap() > 0.1);
        assert_eq!(r.check("kernel_bounds").unwrap().status, CheckStatus::Pass);
        // the direct witness: x = 1, y = ±1
        let k = |y: f64| e * (1.0 + 0.5 * (1.0 * y).sin());
        assert!((k(1.0) - k(-1.0)).abs() > 0.4);
    }

    #[test]
    fn negative_kernel_and_nan_are_hard_errors() {
        let (g, q) = setup(1);
        let spec = Some(KernelSpec::new(0.75, 0.5, 1.5).unwrap());
        let c = Control::new("neg", -0.1, |_| 0.0);
        let p = ControlProblem::new(1, spec, vec![c]).unwrap();
        assert!(matches!(
            validate_problem(&p, &g, &q, &ValidationOptions::default()),
            Err(HjbError::NegativeKernel { .. })
        ));
        let c = Control::new("nan", 0.5, |x| if x[0] > 1.0 { f64::NAN } else { 0.0 });
        let p = ControlProblem::new(1, spec, vec![c]).unwrap();
        assert!(matches!(
            validate_problem(&p, &g, &q, &ValidationOptions::default()),
            Err(HjbError::NonFinite { .. })
        ));
    }

    #[test]
    fn power_family_passes_on_moderate_grids() {
        for r in [8.0, 32.0] {
            let g = Grid::new(1, 0.5, r).unwrap();
            let q = crate::operator::build_quadrature(&g, 0.9, r + 1.0).unwrap();
            let p = example_1_1_problem(1.6, 0.1, 1, 0.9).unwrap().with_discount(0.25);
            let rep = validate_problem(&p, &g, &q, &ValidationOptions::default()).unwrap();
            assert!(rep.passed(), "{rep:#?}");
            assert_eq!(rep.check("growth_ratio").unwrap().status, CheckStatus::Pass);
        }
    }
}
