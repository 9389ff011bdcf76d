//! Discounted problem `inf_τ(L_τ w + c_τ w + g_τ) = 0` in the ball with
//! exterior data: Howard policy iteration, damped value iteration as a
//! fallback, and the barrier/maximum-norm bounds.

use std::io::Write;

use log::{debug, warn};
use serde::Serialize;

use crate::error::{HjbError, Result};
use crate::grid::{ExteriorRule, Grid};
use crate::linsolve::{gmres, GmresOptions, GmresOutcome};
use crate::operator::{assemble_parts, DiscreteOperator, JumpQuadrature, Parts};
use crate::problem::ControlProblem;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Acceptance threshold on `‖apply_inf(w)‖_∞`.
    pub tol: f64,
    pub max_iter: usize,
    pub gmres: GmresOptions,
    pub value_iteration_max: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 60,
            gmres: GmresOptions::default(),
            value_iteration_max: 20_000,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub residual: f64,
    pub policy_changes: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscountedSolution {
    pub w: Vec<f64>,
    pub policy: Vec<usize>,
    pub residual_inf_norm: f64,
    pub iterations: usize,
    pub linear_iterations: usize,
    pub alpha: Option<f64>,
    /// `c∘ = −max_{τ,i} c_τ(x_i)`.
    pub c_circ: f64,
    pub converged: bool,
    pub used_fallback: bool,
    /// Largest pointwise increase between consecutive policy-iteration
    /// values after the first solve (should be ≤ rounding for the inf problem).
    pub monotone_violation: f64,
    pub trace: Vec<TraceRow>,
}

impl DiscountedSolution {
    /// Writes the convergence trace as CSV (`iteration,residual,policy_changes`).
    pub fn write_trace<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for row in &self.trace {
            wr.serialize(row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Solves the frozen-policy system `A x = rhs` with the unknown split as
/// `x = (t/s)·1 + y`, `y(0) = 0`, where `s = ‖A·1‖_∞`. The pair `(t, y)`
/// replaces `x` (with `t` stored at the origin slot). For conservative rows
/// `A·1 = −α·1` and the constant mode, whose eigenvalue `−α` degrades plain
/// GMRES as `α → 0`, becomes an `O(1)` unknown.
fn frozen_solve(op: &DiscreteOperator, policy: &[usize], rhs: &[f64], w: &mut [f64], gm: &GmresOptions) -> GmresOutcome {
    let n = w.len();
    let o = op.grid().origin_index();
    let ones = vec![1.0; n];
    let r = op.apply_policy_linear(policy, &ones);
    let s = inf_norm(&r);
    let mut diag = op.policy_diagonal(policy);
    if !(s > 0.0) || n < 2 {
        let apply = |v: &[f64]| op.apply_policy_linear(policy, v);
        return gmres(&apply, rhs, w, &diag, gm);
    }
    let mut z: Vec<f64> = w.iter().map(|v| v - w[o]).collect();
    z[o] = s * w[o];
    let apply = |z: &[f64]| {
        let t = z[o] / s;
        let mut y = z.to_vec();
        y[o] = 0.0;
        let mut out = op.apply_policy_linear(policy, &y);
        for (oi, ri) in out.iter_mut().zip(&r) {
            *oi += t * ri;
        }
        out
    };
    diag[o] = if r[o] != 0.0 { r[o] / s } else { 1.0 };
    let out = gmres(&apply, rhs, &mut z, &diag, gm);
    let c = z[o] / s;
    for (i, wi) in w.iter_mut().enumerate() {
        *wi = if i == o { c } else { z[i] + c };
    }
    out
}

/// Howard iteration with default linear-solver settings.
pub fn solve_policy_iteration(op: &DiscreteOperator, tol: f64, max_iter: usize) -> Result<DiscountedSolution> {
    let opts = SolverOptions {
        tol,
        max_iter,
        ..SolverOptions::default()
    };
    solve(op, &opts, None)
}

/// Howard iteration from an optional initial guess. Frozen-policy systems are
/// solved by GMRES to an absolute residual of `tol/10`; if policy iteration
/// stalls, damped value iteration takes over. Non-convergence is reported in
/// the result, not as an error.
pub fn solve(op: &DiscreteOperator, opts: &SolverOptions, initial: Option<&[f64]>) -> Result<DiscountedSolution> {
    let n = op.len();
    let c_circ = -op.max_zeroth();
    if !(c_circ > 0.0) {
        return Err(HjbError::InvalidProblem(format!(
            "discounted solve needs sup c <= -c_circ < 0, got sup c = {}",
            -c_circ
        )));
    }
    let mut w = match initial {
        Some(u) if u.len() == n => u.to_vec(),
        Some(u) => {
            return Err(HjbError::LengthMismatch {
                expected: n,
                got: u.len(),
            })
        }
        None => vec![0.0; n],
    };
    let (mut r, mut policy) = op.apply_inf(&w)?;
    let mut res = inf_norm(&r);
    let mut trace = vec![TraceRow {
        iteration: 0,
        residual: res,
        policy_changes: 0,
    }];
    let mut linear_iterations = 0;
    let mut monotone_violation: f64 = 0.0;
    let mut iterations = 0;
    let mut stalls = 0;
    let gm = GmresOptions {
        tol: opts.tol / 10.0,
        ..opts.gmres
    };
    while res > opts.tol && iterations < opts.max_iter {
        iterations += 1;
        let rhs: Vec<f64> = op.policy_constant(&policy).iter().map(|c| -c).collect();
        let prev = w.clone();
        let out = frozen_solve(op, &policy, &rhs, &mut w, &gm);
        linear_iterations += out.iterations;
        let (r_new, p_new) = op.apply_inf(&w)?;
        let changes = p_new.iter().zip(&policy).filter(|(a, b)| a != b).count();
        let res_new = inf_norm(&r_new);
        if iterations > 1 {
            let inc = w.iter().zip(&prev).fold(0.0f64, |m, (a, b)| m.max(a - b));
            monotone_violation = monotone_violation.max(inc);
        }
        debug!(
            "policy iteration {iterations}: residual {res_new:.3e}, {changes} policy changes, {} linear iterations",
            out.iterations
        );
        trace.push(TraceRow {
            iteration: iterations,
            residual: res_new,
            policy_changes: changes,
        });
        if res_new >= 0.5 * res && changes == 0 {
            stalls += 1;
        } else {
            stalls = 0;
        }
        r = r_new;
        res = res_new;
        policy = p_new;
        if stalls >= 2 {
            break;
        }
    }
    let mut used_fallback = false;
    if res > opts.tol {
        warn!("policy iteration stalled at residual {res:.3e}; switching to value iteration");
        used_fallback = true;
        let eta = 1.0 / op.max_diagonal().max(c_circ);
        let mut k = 0;
        while res > opts.tol && k < opts.value_iteration_max {
            for (wi, ri) in w.iter_mut().zip(&r) {
                *wi += eta * ri;
            }
            let (r_new, p_new) = op.apply_inf(&w)?;
            r = r_new;
            policy = p_new;
            res = inf_norm(&r);
            k += 1;
        }
        iterations += k;
        trace.push(TraceRow {
            iteration: iterations,
            residual: res,
            policy_changes: 0,
        });
    }
    Ok(DiscountedSolution {
        converged: res <= opts.tol,
        w,
        policy,
        residual_inf_norm: res,
        iterations,
        linear_iterations,
        alpha: None,
        c_circ,
        used_fallback,
        monotone_violation,
        trace,
    })
}

/// Discrete constant `k0` of the discounted Lyapunov condition: the smallest
/// `k0` with `(L_τ V + c_τ V)(x_i) + |g_τ(x_i)| ≤ k0` for all nodes and
/// controls, the operator taking the exact `V` outside the ball. With this
/// constant, `±(k0/c∘ + V)` are discrete super/subsolutions of the Dirichlet
/// problem, so the barrier bound holds at every node.
pub fn barrier_constant(p: &ControlProblem, grid: &Grid, q: Option<&JumpQuadrature>) -> Result<f64> {
    let lyap = p.lyapunov.as_ref().ok_or(HjbError::MissingLyapunov)?;
    let v = lyap.v.clone();
    let ext = ExteriorRule::Function {
        field: {
            let v = v.clone();
            std::sync::Arc::new(move |x: &[f64]| v.value(x))
        },
        far: v.far_field(),
    };
    let parts = Parts {
        cost: false,
        ..Parts::ALL
    };
    let op = assemble_parts(p, grid, q, &ext, parts)?;
    let vn = grid.tabulate(&|x| v.value(x));
    let d = grid.dim();
    let mut k0 = 1e-12f64;
    for tau in 0..op.num_controls() {
        let lv = op.apply(tau, &vn)?;
        for (i, x) in grid.points().enumerate() {
            k0 = k0.max(lv[i] + p.cost(tau, &x[..d]).abs());
        }
    }
    Ok(k0)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BarrierViolation {
    pub node: usize,
    pub point: Vec<f64>,
    pub value: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BarrierReport {
    pub k0: f64,
    pub c_circ: f64,
    /// Allowance for the solver residual, `residual/c∘`.
    pub slack: f64,
    /// `min_i (k0/c∘ + V(x_i) − |w_i|)`.
    pub min_margin: f64,
    pub violations: Vec<BarrierViolation>,
}

impl BarrierReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks `|w(x_i)| ≤ k0/c∘ + V(x_i)` with `k0` from the problem's Lyapunov data.
pub fn check_barrier(sol: &DiscountedSolution, p: &ControlProblem, grid: &Grid) -> Result<BarrierReport> {
    let lyap = p.lyapunov.as_ref().ok_or(HjbError::MissingLyapunov)?;
    if sol.w.len() != grid.len() {
        return Err(HjbError::LengthMismatch {
            expected: grid.len(),
            got: sol.w.len(),
        });
    }
    let c = sol.c_circ;
    let slack = sol.residual_inf_norm / c + 1e-12;
    let d = grid.dim();
    let mut min_margin = f64::INFINITY;
    let mut violations = Vec::new();
    for (i, x) in grid.points().enumerate() {
        let bound = lyap.k0 / c + lyap.v.value(&x[..d]);
        let margin = bound - sol.w[i].abs();
        min_margin = min_margin.min(margin);
        if margin < -slack {
            violations.push(BarrierViolation {
                node: i,
                point: x[..d].to_vec(),
                value: sol.w[i],
                bound,
            });
        }
    }
    Ok(BarrierReport {
        k0: lyap.k0,
        c_circ: c,
        slack,
        min_margin,
        violations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaxBoundReport {
    pub sup_w: f64,
    pub bound: f64,
    pub passed: bool,
}

/// `‖w‖_∞ ≤ c∘^{-1} sup_τ sup_i |g_τ(x_i)|`, valid for homogeneous Dirichlet data.
pub fn check_max_bound(sol: &DiscountedSolution, p: &ControlProblem, grid: &Grid) -> MaxBoundReport {
    let bound = p.sup_cost(grid.points()) / sol.c_circ;
    let sup_w = inf_norm(&sol.w);
    MaxBoundReport {
        sup_w,
        bound,
        passed: sup_w <= bound + sol.residual_inf_norm / sol.c_circ + 1e-12,
    }
}
