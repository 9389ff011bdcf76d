//! Slow, independent references for the tests: dense re-summation of the
//! jump/drift operator, a damped fixed-point solver, adaptive quadrature of
//! the fractional Laplacian of a few test functions, and finite-difference
//! gradients.
//!
//! Nothing here shares code with the assembly or the solvers beyond the
//! quadrature weights and the problem description.

use std::collections::HashMap;

use crate::error::{HjbError, Result};
use crate::grid::{ExteriorRule, FarField, Grid};
use crate::numerics::fractional_laplacian_constant;
use crate::operator::JumpQuadrature;
use crate::problem::{ControlProblem, LyapunovFunction};

/// Node cap for dense oracles.
pub const ORACLE_CAP: usize = 200;

/// Dense frozen-control operator `u ↦ A u + b`.
#[derive(Clone, Debug)]
pub struct DenseOracle {
    pub matrix: Vec<Vec<f64>>,
    pub constant: Vec<f64>,
}

impl DenseOracle {
    /// Direct summation of the jump, core, tail, drift, zeroth and cost terms
    /// of control `tau`. Supports `Zero` exterior data and `Function` data with
    /// `Mean` or `Lumped` far field; no diffusion or Lévy parts.
    pub fn build(
        p: &ControlProblem,
        grid: &Grid,
        q: &JumpQuadrature,
        ext: &ExteriorRule,
        tau: usize,
    ) -> Result<Self> {
        let n = grid.len();
        if n > ORACLE_CAP {
            return Err(HjbError::OracleCap { nodes: n, cap: ORACLE_CAP });
        }
        let c = &p.controls[tau];
        if c.diffusion.is_some() || c.levy.is_some() {
            return Err(HjbError::InvalidProblem("dense oracle covers jump and drift parts only".into()));
        }
        let d = grid.dim();
        let h = grid.hx();
        let key = |z: &[f64]| -> (i64, i64) {
            let a = (z[0] / h).round() as i64;
            let b = if d == 2 { (z[1] / h).round() as i64 } else { 0 };
            (a, b)
        };
        let mut index = HashMap::new();
        let pts: Vec<Vec<f64>> = grid.points().map(|x| x[..d].to_vec()).collect();
        for (i, x) in pts.iter().enumerate() {
            index.insert(key(x), i);
        }
        let exterior = |z: &[f64]| -> Result<f64> {
            match ext {
                ExteriorRule::Zero => Ok(0.0),
                ExteriorRule::Function { field, .. } => Ok(field(z)),
                ExteriorRule::Reflect => Err(HjbError::InvalidProblem(
                    "dense oracle does not model reflection".into(),
                )),
            }
        };
        let mut a = vec![vec![0.0; n]; n];
        let mut b = vec![0.0; n];
        for i in 0..n {
            let x = &pts[i];
            let add = |z: Vec<f64>, w: f64, a: &mut Vec<Vec<f64>>, b: &mut Vec<f64>| -> Result<()> {
                a[i][i] -= w;
                match index.get(&key(&z)) {
                    Some(&t) => a[i][t] += w,
                    None => b[i] += w * exterior(&z)?,
                }
                Ok(())
            };
            let k = |y: &[f64]| c.kernel.eval(x, y);
            if p.kernel.is_some() {
                for o in q.offsets() {
                    let y = &o.point[..d];
                    let ym: Vec<f64> = y.iter().map(|v| -v).collect();
                    let z: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| xi + yi).collect();
                    add(z, o.weight * (k(y) + k(&ym)), &mut a, &mut b)?;
                }
                for axis in 0..d {
                    let mut e = vec![0.0; d];
                    e[axis] = h;
                    let mut em = vec![0.0; d];
                    em[axis] = -h;
                    let w = q.core_coeff() * 0.5 * (k(&e) + k(&em));
                    let zp: Vec<f64> = x.iter().zip(&e).map(|(xi, yi)| xi + yi).collect();
                    let zm: Vec<f64> = x.iter().zip(&e).map(|(xi, yi)| xi - yi).collect();
                    add(zp, w, &mut a, &mut b)?;
                    add(zm, w, &mut a, &mut b)?;
                }
                let dirs: Vec<Vec<f64>> = if d == 1 {
                    vec![vec![1.0], vec![-1.0]]
                } else {
                    (0..16)
                        .map(|m| {
                            let t = std::f64::consts::PI * m as f64 / 8.0;
                            vec![t.cos(), t.sin()]
                        })
                        .collect()
                };
                let r = q.tail_radius();
                let kt: f64 = dirs
                    .iter()
                    .map(|e| k(&e.iter().map(|v| v * r).collect::<Vec<_>>()))
                    .sum::<f64>()
                    / dirs.len() as f64;
                let w = 2.0 * q.tail_mass() * kt;
                let mean = match ext {
                    ExteriorRule::Zero => 0.0,
                    ExteriorRule::Function { field, far } => match far {
                        FarField::Mean(m) => *m,
                        FarField::Lumped => {
                            let rs = r * 2.0 * q.order() / (2.0 * q.order() - 1.0);
                            dirs.iter()
                                .map(|e| {
                                    let z: Vec<f64> = x.iter().zip(e).map(|(xi, ei)| xi + rs * ei).collect();
                                    field(&z)
                                })
                                .sum::<f64>()
                                / dirs.len() as f64
                        }
                        FarField::Power { .. } => {
                            return Err(HjbError::InvalidProblem(
                                "dense oracle does not model power far fields".into(),
                            ))
                        }
                    },
                    ExteriorRule::Reflect => unreachable!(),
                };
                a[i][i] -= w;
                b[i] += w * mean;
            }
            let drift = c.drift_at(x);
            for axis in 0..d {
                let mut z = x.clone();
                let bk = drift[axis];
                if bk > 0.0 {
                    z[axis] += h;
                    add(z, bk / h, &mut a, &mut b)?;
                } else if bk < 0.0 {
                    z[axis] -= h;
                    add(z, -bk / h, &mut a, &mut b)?;
                }
            }
            a[i][i] += p.zeroth(tau, x);
            b[i] += p.cost(tau, x);
        }
        Ok(Self { matrix: a, constant: b })
    }

    pub fn len(&self) -> usize {
        self.constant.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constant.is_empty()
    }
}

/// `A u + b`.
pub fn dense_apply(o: &DenseOracle, u: &[f64]) -> Result<Vec<f64>> {
    if u.len() != o.len() {
        return Err(HjbError::LengthMismatch {
            expected: o.len(),
            got: u.len(),
        });
    }
    Ok(o.matrix
        .iter()
        .zip(&o.constant)
        .map(|(row, bi)| row.iter().zip(u).map(|(a, x)| a * x).sum::<f64>() + bi)
        .collect())
}

/// Damped fixed point `u ← u + η·min_τ(A_τ u + b_τ)` with `η = 1/max|A_ii|`,
/// stopped when `‖min_τ(A_τ u + b_τ)‖_∞ / c∘ ≤ tol` (an a-posteriori bound on
/// the distance to the fixed point).
pub fn dense_fixed_point(oracles: &[DenseOracle], tol: f64) -> Result<Vec<f64>> {
    let n = oracles.first().map_or(0, |o| o.len());
    let mut max_diag: f64 = 0.0;
    let mut c_circ = f64::INFINITY;
    for o in oracles {
        for i in 0..n {
            max_diag = max_diag.max(o.matrix[i][i].abs());
            let row: f64 = o.matrix[i].iter().sum();
            c_circ = c_circ.min(-row);
        }
    }
    let eta = 1.0 / max_diag;
    let factor = 1.0 - eta * c_circ;
    if !(c_circ > 0.0) || factor >= 1.0 {
        return Err(HjbError::NotContractive(factor));
    }
    let mut u = vec![0.0; n];
    let max_iter = ((tol.ln() - 10.0) / factor.ln()).abs().ceil() as usize * 4 + 100;
    for _ in 0..max_iter {
        let mut f = vec![f64::INFINITY; n];
        for o in oracles {
            let v = dense_apply(o, &u)?;
            for (fi, vi) in f.iter_mut().zip(&v) {
                *fi = fi.min(*vi);
            }
        }
        let res = f.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        if res / c_circ <= tol {
            return Ok(u);
        }
        for (ui, fi) in u.iter_mut().zip(&f) {
            *ui += eta * fi;
        }
    }
    Err(HjbError::NotContractive(factor))
}

/// Test functions with reference values of the jump integral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReferenceFunction {
    /// `cos x`, kernel factor `C(1,s)/2`: the integral is `−(−Δ)^s cos`.
    Cos,
    /// `exp(−x²)`, kernel factor `C(1,s)/2`.
    Gaussian,
    /// `x²`, kernel factor `2−2s`, integral truncated at `|y| ≤ r_far`.
    QuadraticTruncated { r_far: f64 },
}

impl std::str::FromStr for ReferenceFunction {
    type Err = HjbError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cos" => Ok(Self::Cos),
            "gaussian" => Ok(Self::Gaussian),
            _ => match s.strip_prefix("quadratic-truncated:") {
                Some(r) => r
                    .parse()
                    .map(|r_far| Self::QuadraticTruncated { r_far })
                    .map_err(|_| HjbError::UnknownReference(s.to_string())),
                None => Err(HjbError::UnknownReference(s.to_string())),
            },
        }
    }
}

/// Fourier-symbol value of `−(−Δ)^s cos` at `x`.
pub fn cos_symbol_value(x: f64) -> f64 {
    -x.cos()
}

/// `∫ δ(u, x, y) k |y|^{−1−2s} dy` by adaptive Gauss–Kronrod quadrature.
pub fn fractional_laplacian_reference(f: ReferenceFunction, x: f64, s: f64) -> Result<f64> {
    if !(s > 0.5 && s < 1.0) {
        return Err(HjbError::InvalidProblem(format!("order s = {s} outside (1/2, 1)")));
    }
    let (u, k, r_far): (fn(f64) -> f64, f64, Option<f64>) = match f {
        ReferenceFunction::Cos => (f64::cos, 0.5 * fractional_laplacian_constant(1, s), None),
        ReferenceFunction::Gaussian => (|t| (-t * t).exp(), 0.5 * fractional_laplacian_constant(1, s), None),
        ReferenceFunction::QuadraticTruncated { r_far } => (|t| t * t, 2.0 - 2.0 * s, Some(r_far)),
    };
    let delta = |y: f64| u(x + y) + u(x - y) - 2.0 * u(x);
    // |y| < 1 with y = t^a, a = 1/(2−2s): δ k y^{−1−2s} dy = a k δ/y² dt
    let a = 1.0 / (2.0 - 2.0 * s);
    let inner_end = r_far.map_or(1.0, |r| r.min(1.0));
    let t_end = inner_end.powf(1.0 / a);
    let near = adaptive(
        &|t: f64| {
            let y = t.powf(a);
            if y < 1e-3 {
                // δ/y² = u''(x) + O(y²)
                let e = 1e-3;
                let u2 = (-u(x + 2.0 * e) + 16.0 * u(x + e) - 30.0 * u(x) + 16.0 * u(x - e) - u(x - 2.0 * e))
                    / (12.0 * e * e);
                a * u2
            } else {
                a * delta(y) / (y * y)
            }
        },
        0.0,
        t_end,
        1e-13,
    );
    let far = match r_far {
        Some(r) if r <= 1.0 => 0.0,
        Some(r) => adaptive(&|y: f64| delta(y) * y.powf(-1.0 - 2.0 * s), 1.0, r, 1e-13),
        None => {
            // oscillating part panel by panel; the −2u(x) part in closed form
            let panel = std::f64::consts::PI;
            let panels = 4000;
            let mut acc = 0.0;
            for m in 0..panels {
                let lo = 1.0 + m as f64 * panel;
                acc += adaptive(
                    &|y: f64| (u(x + y) + u(x - y)) * y.powf(-1.0 - 2.0 * s),
                    lo,
                    lo + panel,
                    1e-15,
                );
            }
            acc - 2.0 * u(x) / (2.0 * s)
        }
    };
    Ok(2.0 * k * (near + far))
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let mut stack = vec![(a, b, 0usize)];
    let mut total = 0.0;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (v, e) = gk15(f, lo, hi);
        if e <= tol.max(1e-15 * v.abs()) || depth >= 40 {
            total += v;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    total
}

/// Central-difference gradient.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    (0..x.len())
        .map(|k| {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[k] += step;
            xm[k] -= step;
            (f(&xp) - f(&xm)) / (2.0 * step)
        })
        .collect()
}

/// Largest deviation between the analytic gradient of `v` and central
/// differences over `points`.
pub fn gradient_check(v: &dyn LyapunovFunction, points: &[Vec<f64>], step: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for x in points {
        let g = v.gradient(x);
        let fd = fd_gradient(&|z| v.value(z), x, step);
        for (k, fk) in fd.iter().enumerate() {
            worst = worst.max((g[k] - fk).abs());
        }
    }
    worst
}
