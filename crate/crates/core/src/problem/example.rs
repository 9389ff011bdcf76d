//! The power-law family: `V(x) = |x|^γ` outside the unit ball, a radial drift
//! `−β·x·|x|^{θ−1}` and a constant kernel factor.

use std::sync::Arc;

use crate::error::{HjbError, Result};
use crate::grid::{euclidean_norm, FarField};
use crate::problem::{Control, ControlProblem, KernelFactor, KernelSpec, LyapunovData, LyapunovFunction};

/// Exponents of the power-law family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExampleExponents {
    pub gamma: f64,
    pub theta: f64,
    /// Growth exponent of the running cost.
    pub sigma: f64,
}

/// `V(x) = |x|^γ` for `|x| ≥ 1` and the even quartic
/// `a + b·r² + c·r⁴` inside, matching value, slope and curvature at `r = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CappedPower {
    pub gamma: f64,
    a: f64,
    b: f64,
    c: f64,
}

impl CappedPower {
    pub fn new(gamma: f64) -> Self {
        let c = gamma * (gamma - 2.0) / 8.0;
        let b = gamma * (4.0 - gamma) / 4.0;
        let a = 1.0 - b - c;
        Self { gamma, a, b, c }
    }

    /// Coefficients `(a, b, c)` of the inner quartic.
    pub fn cap(&self) -> (f64, f64, f64) {
        (self.a, self.b, self.c)
    }
}

impl LyapunovFunction for CappedPower {
    fn value(&self, x: &[f64]) -> f64 {
        let r = euclidean_norm(x);
        if r >= 1.0 {
            r.powf(self.gamma)
        } else {
            let r2 = r * r;
            self.a + self.b * r2 + self.c * r2 * r2
        }
    }

    fn gradient(&self, x: &[f64]) -> [f64; 2] {
        let r = euclidean_norm(x);
        // radial derivative divided by r
        let f = if r >= 1.0 {
            self.gamma * r.powf(self.gamma - 2.0)
        } else {
            2.0 * self.b + 4.0 * self.c * r * r
        };
        let mut g = [0.0; 2];
        for (k, xk) in x.iter().enumerate() {
            g[k] = f * xk;
        }
        g
    }

    fn hessian(&self, x: &[f64]) -> [[f64; 2]; 2] {
        let r = euclidean_norm(x);
        let mut h = [[0.0; 2]; 2];
        let d = x.len();
        if r >= 1.0 {
            let f = self.gamma * r.powf(self.gamma - 2.0);
            for i in 0..d {
                for j in 0..d {
                    let id = if i == j { 1.0 } else { 0.0 };
                    h[i][j] = f * (id + (self.gamma - 2.0) * x[i] * x[j] / (r * r));
                }
            }
        } else {
            let f = 2.0 * self.b + 4.0 * self.c * r * r;
            for i in 0..d {
                for j in 0..d {
                    let id = if i == j { 1.0 } else { 0.0 };
                    h[i][j] = f * id + 8.0 * self.c * x[i] * x[j];
                }
            }
        }
        h
    }

    fn far_field(&self) -> FarField {
        FarField::Power {
            coeff: 1.0,
            exponent: self.gamma,
        }
    }

    fn name(&self) -> String {
        format!("capped_power(gamma={})", self.gamma)
    }
}

/// Power-law problem with two controls, "mild" (`β = 1`, no surcharge) and
/// "strong" (`β = 2`, surcharge 0.5), kernel factor `(2−2s)` with class
/// constants `λ = 0.5`, `Λ = 1.5`, and cost `(1+|x|²)^{σ/2} + e_τ`.
///
/// The cost exponent is `σ = min(2sθ/(2s−1), (θ+γ−1)/2)`, strictly below the
/// envelope exponent `θ+γ−1`. The Lyapunov constants `k0`, `k1` are
/// placeholders until a certificate is computed.
pub fn example_1_1_problem(gamma: f64, theta: f64, dim: usize, s: f64) -> Result<ControlProblem> {
    let fail = |msg: String| Err(HjbError::Constraint(msg));
    if !(s > 0.5 && s < 1.0) {
        return fail(format!("s = {s} must lie in (1/2, 1)"));
    }
    if !(gamma > s + 0.5) {
        return fail(format!("gamma > s + 1/2 fails: {gamma} <= {}", s + 0.5));
    }
    if !(gamma < 2.0 * s) {
        return fail(format!("gamma < 2s fails: {gamma} >= {}", 2.0 * s));
    }
    if !(theta >= 0.0) {
        return fail(format!("theta >= 0 fails: {theta}"));
    }
    if !(theta + gamma - 1.0 > 0.0) {
        return fail(format!("theta + gamma - 1 > 0 fails: {}", theta + gamma - 1.0));
    }
    let cap = (2.0 * s - gamma) * (2.0 * s - 1.0);
    if !(theta < cap) {
        return fail(format!("theta < (2s - gamma)(2s - 1) fails: {theta} >= {cap}"));
    }
    let kernel = KernelSpec::new(s, 0.5, 1.5)?;
    let mu = theta / (gamma * (2.0 * s - 1.0));
    let p = theta + gamma - 1.0;
    let sigma = (2.0 * s * theta / (2.0 * s - 1.0)).min(0.5 * p);
    let k = 2.0 - 2.0 * s;
    let controls = [("mild", 1.0, 0.0), ("strong", 2.0, 0.5)]
        .into_iter()
        .map(|(label, beta, extra)| {
            Control::new(label, k, move |x: &[f64]| {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                (1.0 + r2).powf(0.5 * sigma) + extra
            })
            .with_kernel(KernelFactor::Constant(k))
            .with_drift(move |x: &[f64]| {
                let r = euclidean_norm(x);
                if r == 0.0 {
                    return [0.0, 0.0];
                }
                let f = -beta * r.powf(theta - 1.0);
                [f * x[0], if x.len() > 1 { f * x[1] } else { 0.0 }]
            })
        })
        .collect();
    let lyap = LyapunovData {
        v: Arc::new(CappedPower::new(gamma)),
        k0: 1.0,
        k1: 1.0,
        envelope_exponent: p,
        mu,
        exponents: Some(ExampleExponents { gamma, theta, sigma }),
        certified: false,
    };
    Ok(ControlProblem::new(dim, Some(kernel), controls)?.with_lyapunov(lyap))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constraint_chain() {
        let p = example_1_1_problem(1.6, 0.1, 1, 0.9).unwrap();
        let l = p.lyapunov.as_ref().unwrap();
        assert!((l.mu - 0.078125).abs() < 1e-15);
        let e = example_1_1_problem(1.0, 0.0, 1, 0.6).unwrap_err().to_string();
        assert!(e.contains("gamma > s + 1/2"), "{e}");
        let e = example_1_1_problem(1.6, 0.2, 1, 0.9).unwrap_err().to_string();
        assert!(e.contains("theta < (2s - gamma)(2s - 1)"), "{e}");
        assert!(example_1_1_problem(1.85, 0.0, 1, 0.9).is_err());
    }

    #[test]
    fn cap_is_c2_and_nonnegative() {
        for gamma in [1.2, 1.6, 1.9] {
            let v = CappedPower::new(gamma);
            let inside = |r: f64| v.value(&[r]);
            let eps = 1e-6;
            // value and first two radial derivatives match at r = 1
            let (a, b, c) = v.cap();
            assert!((a + b + c - 1.0).abs() < 1e-14);
            assert!((2.0 * b + 4.0 * c - gamma).abs() < 1e-14);
            assert!((2.0 * b + 12.0 * c - gamma * (gamma - 1.0)).abs() < 1e-14);
            assert!((inside(1.0 - eps) - inside(1.0 + eps)).abs() < 1e-5);
            for k in 0..=100 {
                assert!(inside(k as f64 / 100.0) >= 0.0);
            }
        }
        let v = CappedPower::new(1.6);
        assert!((v.cap().0 - 0.12).abs() < 1e-14);
    }

    #[test]
    fn gradient_matches_difference_quotients() {
        let v = CappedPower::new(1.6);
        for x in [[0.3, -0.4], [2.0, 1.5], [-0.9, 0.1]] {
            let g = v.gradient(&x);
            let h = v.hessian(&x);
            for k in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += 1e-6;
                xm[k] -= 1e-6;
                let fd = (v.value(&xp) - v.value(&xm)) / 2e-6;
                assert!((fd - g[k]).abs() < 1e-6);
                let gp = v.gradient(&xp);
                let gm = v.gradient(&xm);
                for i in 0..2 {
                    assert!(((gp[i] - gm[i]) / 2e-6 - h[i][k]).abs() < 1e-5);
                }
            }
        }
    }
}
