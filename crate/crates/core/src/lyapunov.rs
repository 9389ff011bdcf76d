//! Numerical Foster–Lyapunov certificates: `sup_τ 𝓛_τ V ≤ k0 − k1·|x|^p`
//! checked at the grid nodes.
//!
//! The jump part of `𝓛_τ V` uses the same quadrature as the solver with `V`
//! itself as exterior data (closed-form power-law far field); the drift and
//! diffusion parts use the analytic gradient and Hessian of `V`.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{HjbError, Result};
use crate::grid::{ExteriorRule, FarField, Grid};
use crate::operator::{assemble_parts, JumpQuadrature, Parts};
use crate::problem::{ControlProblem, LyapunovData};

/// Smallest admissible `k0`.
pub const K0_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateViolation {
    pub node: usize,
    pub point: Vec<f64>,
    pub value: f64,
    /// `k0 − h(x)`.
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridProvenance {
    pub dim: usize,
    pub hx: f64,
    pub radius: f64,
    pub nodes: usize,
    pub r_far: Option<f64>,
    pub s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CertificateExponents {
    pub gamma: Option<f64>,
    pub theta: Option<f64>,
    pub sigma: Option<f64>,
    /// Exponent of `h(x) = k1·|x|^p`.
    pub envelope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LyapunovCertificate {
    pub lyapunov_function: String,
    pub exponents: CertificateExponents,
    pub k0: f64,
    pub k1: f64,
    /// Whether a decaying envelope with `k1 > 0` was found.
    pub admissible: bool,
    /// `min_i (k0 − h(x_i) − values_i)`.
    pub worst_margin: f64,
    /// Node where `worst_margin` is attained.
    pub worst_node: Option<usize>,
    pub violations: Vec<CertificateViolation>,
    pub tail_mode: String,
    pub scope: String,
    pub grid: GridProvenance,
    #[serde(skip)]
    pub values: Vec<f64>,
}

impl LyapunovCertificate {
    pub fn passed(&self) -> bool {
        self.admissible && self.violations.is_empty()
    }

    /// Re-checks `values ≤ k0 − h` and returns the offending nodes.
    pub fn recheck(&self, grid: &Grid) -> Vec<usize> {
        (0..grid.len())
            .filter(|&i| {
                let h = self.k1 * grid.norm(i).powf(self.exponents.envelope);
                self.values[i] > self.k0 - h
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn lyapunov(p: &ControlProblem) -> Result<&LyapunovData> {
    p.lyapunov.as_ref().ok_or(HjbError::MissingLyapunov)
}

fn tail_mode(far: &FarField) -> String {
    match far {
        FarField::Power { coeff, exponent } => format!(
            "V evaluated in closed form on every offset up to R_far; tail beyond R_far uses {coeff}*|x+y|^{exponent} with its second-order moment expansion"
        ),
        FarField::Lumped => "V evaluated in closed form on every offset; tail lumped at the mean radius".into(),
        FarField::Mean(m) => format!("V evaluated in closed form on every offset; tail mean value {m}"),
    }
}

/// `sup_τ 𝓛_τ V(x_i)` without the zeroth-order term.
pub fn evaluate_lv(p: &ControlProblem, grid: &Grid, q: &JumpQuadrature) -> Result<Vec<f64>> {
    evaluate_lv_parts(p, grid, q, false)
}

/// `sup_τ (𝓛_τ V + c_τ V)(x_i)`, the discounted form.
pub fn evaluate_lv_with_zeroth(p: &ControlProblem, grid: &Grid, q: &JumpQuadrature) -> Result<Vec<f64>> {
    evaluate_lv_parts(p, grid, q, true)
}

fn evaluate_lv_parts(p: &ControlProblem, grid: &Grid, q: &JumpQuadrature, zeroth: bool) -> Result<Vec<f64>> {
    let lyap = lyapunov(p)?;
    let v = lyap.v.clone();
    let d = grid.dim();
    let vn = grid.tabulate(&|x| v.value(x));
    if let Some(i) = vn.iter().position(|a| !a.is_finite() || *a < 0.0) {
        return Err(HjbError::LyapunovDomain(grid.point(i)[..d].to_vec()));
    }
    let ext = ExteriorRule::Function {
        field: {
            let v = v.clone();
            Arc::new(move |x: &[f64]| v.value(x))
        },
        far: v.far_field(),
    };
    let parts = Parts {
        jumps: true,
        levy: true,
        zeroth,
        drift: false,
        diffusion: false,
        cost: false,
    };
    let op = assemble_parts(p, grid, Some(q), &ext, parts)?;
    let mut values = vec![f64::NEG_INFINITY; grid.len()];
    for (tau, c) in p.controls.iter().enumerate() {
        let jv = op.apply(tau, &vn)?;
        let local: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let x = grid.point(i);
                let x = &x[..d];
                let g = v.gradient(x);
                let b = c.drift_at(x);
                let mut t = (0..d).map(|k| b[k] * g[k]).sum::<f64>();
                if let Some(a) = &c.diffusion {
                    let a = a(x);
                    let hs = v.hessian(x);
                    for r in 0..d {
                        for k in 0..d {
                            t += a[r][k] * hs[r][k];
                        }
                    }
                }
                t
            })
            .collect();
        for i in 0..grid.len() {
            let val = jv[i] + local[i];
            if !val.is_finite() {
                return Err(HjbError::LyapunovDomain(grid.point(i)[..d].to_vec()));
            }
            values[i] = values[i].max(val);
        }
    }
    Ok(values)
}

/// Fits `h(x) = k1·|x|^p` with `p` from the Lyapunov data: `k1` is half the
/// least-squares decay slope of `values` against `|x|^p` on the outer half of
/// the nodes, then `k0 = max_i(values_i + h(x_i))` (at least [`K0_FLOOR`]).
/// A nonpositive slope falls back to the largest `k1` with
/// `values ≤ −k1·|x|^p` on `|x| ≥ 1`; if none exists the certificate is
/// inadmissible and lists the nodes above the inner-half maximum.
pub fn fit_envelope(values: &[f64], lyap: &LyapunovData, grid: &Grid) -> Result<LyapunovCertificate> {
    let n = grid.len();
    if values.len() != n {
        return Err(HjbError::LengthMismatch { expected: n, got: values.len() });
    }
    let p = lyap.envelope_exponent;
    let half = 0.5 * grid.radius();
    let outer: Vec<usize> = (0..n).filter(|&i| grid.norm(i) >= half).collect();
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &i in &outer {
        let t = grid.norm(i).powf(p);
        let y = -values[i];
        sx += t;
        sy += y;
        sxx += t * t;
        sxy += t * y;
    }
    let m = outer.len() as f64;
    let den = m * sxx - sx * sx;
    let slope = if den > 0.0 { (m * sxy - sx * sy) / den } else { 0.0 };
    let mut k1 = 0.5 * slope;
    if !(k1 > 0.0) {
        let cap = (0..n)
            .filter(|&i| grid.norm(i) >= 1.0)
            .map(|i| -values[i] / grid.norm(i).powf(p))
            .fold(f64::INFINITY, f64::min);
        k1 = if cap.is_finite() && cap > 0.0 { cap } else { 0.0 };
    }
    let admissible = k1 > 0.0;
    let h = |i: usize| k1 * grid.norm(i).powf(p);
    let k0 = if admissible {
        (0..n).map(|i| values[i] + h(i)).fold(K0_FLOOR, f64::max)
    } else {
        (0..n)
            .filter(|&i| grid.norm(i) < half)
            .map(|i| values[i])
            .fold(K0_FLOOR, f64::max)
    };
    let mut worst_margin = f64::INFINITY;
    let mut worst_node = None;
    let mut violations = Vec::new();
    for i in 0..n {
        let bound = k0 - h(i);
        let margin = bound - values[i];
        if margin < worst_margin {
            worst_margin = margin;
            worst_node = Some(i);
        }
        if margin < 0.0 {
            violations.push(CertificateViolation {
                node: i,
                point: grid.point(i)[..grid.dim()].to_vec(),
                value: values[i],
                bound,
            });
        }
    }
    Ok(LyapunovCertificate {
        lyapunov_function: lyap.v.name(),
        exponents: CertificateExponents {
            gamma: lyap.exponents.map(|e| e.gamma),
            theta: lyap.exponents.map(|e| e.theta),
            sigma: lyap.exponents.map(|e| e.sigma),
            envelope: p,
        },
        k0,
        k1,
        admissible,
        worst_margin,
        worst_node,
        violations,
        tail_mode: tail_mode(&lyap.v.far_field()),
        scope: "grid-relative: the inequality is checked at the grid nodes only".into(),
        grid: GridProvenance {
            dim: grid.dim(),
            hx: grid.hx(),
            radius: grid.radius(),
            nodes: n,
            r_far: None,
            s: None,
        },
        values: values.to_vec(),
    })
}

/// `evaluate_lv` followed by `fit_envelope`, with quadrature provenance.
pub fn certify(p: &ControlProblem, grid: &Grid, q: &JumpQuadrature) -> Result<LyapunovCertificate> {
    let values = evaluate_lv(p, grid, q)?;
    let mut cert = fit_envelope(&values, lyapunov(p)?, grid)?;
    cert.grid.r_far = Some(q.tail_radius());
    cert.grid.s = Some(q.order());
    Ok(cert)
}

/// Copies the fitted constants into the problem's Lyapunov data.
pub fn apply_certificate(p: &mut ControlProblem, cert: &LyapunovCertificate) -> Result<()> {
    let lyap = p.lyapunov.as_mut().ok_or(HjbError::MissingLyapunov)?;
    lyap.k0 = cert.k0;
    lyap.k1 = cert.k1;
    lyap.certified = cert.passed();
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostEnvelopeReport {
    /// `(|x|, sup_τ |g_τ(x)| / h(x))` on the outer half, sorted by radius
    /// (largest ratio per radius).
    pub ratios: Vec<(f64, f64)>,
    pub sup_ratio: f64,
    pub bound: f64,
    pub decreasing: bool,
    pub passed: bool,
}

/// Ratio of the running cost to the envelope `h` on the outer half of the
/// nodes: bounded by `bound` and nonincreasing in `|x|`.
pub fn cost_envelope_ratio(
    p: &ControlProblem,
    grid: &Grid,
    cert: &LyapunovCertificate,
    bound: f64,
) -> CostEnvelopeReport {
    let d = grid.dim();
    let half = 0.5 * grid.radius();
    let mut rows: Vec<(f64, f64)> = Vec::new();
    for i in (0..grid.len()).filter(|&i| grid.norm(i) >= half.max(1e-12)) {
        let x = grid.point(i);
        let g = (0..p.controls.len())
            .map(|t| p.cost(t, &x[..d]).abs())
            .fold(0.0, f64::max);
        let r = grid.norm(i);
        rows.push((r, g / (cert.k1 * r.powf(cert.exponents.envelope))));
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut ratios: Vec<(f64, f64)> = Vec::new();
    for (r, v) in rows {
        match ratios.last_mut() {
            Some(last) if (last.0 - r).abs() <= 1e-9 * r => last.1 = last.1.max(v),
            _ => ratios.push((r, v)),
        }
    }
    let sup_ratio = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    let decreasing = ratios.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-12));
    CostEnvelopeReport {
        passed: sup_ratio <= bound && decreasing && sup_ratio.is_finite(),
        ratios,
        sup_ratio,
        bound,
        decreasing,
    }
}
