//! Mode drivers and the files they write.
//!
//! Every run writes `report.json` (deterministic: no timings, keys sorted) and
//! `metadata.json` (timestamps and environment). Failures write `error.json`
//! as `{"error": {"kind": ..., "message": ...}}`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{Mode, RunConfig};
use crate::discounted::{barrier_constant, check_barrier, check_max_bound};
use crate::ergodic::{
    check_bar_w_bound, expand_domain, vanishing_discount, verify_ergodic_pair, write_grid_csv, DomainConfig,
};
use crate::error::{HjbError, Result};
use crate::grid::{build_grid, ExteriorRule, Grid};
use crate::lyapunov::{certify, cost_envelope_ratio};
use crate::operator::{assemble, build_quadrature, dump_stencils, JumpQuadrature};
use crate::problem::{validate_problem, ControlProblem, ValidationOptions};

/// Exit code of a run whose hard invariants hold but whose iteration did not
/// meet its tolerance.
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_FAILURE: i32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Invariant {
    pub name: String,
    /// Hard invariants decide the exit code; soft ones are reported only.
    pub hard: bool,
    pub passed: bool,
    pub detail: String,
}

impl Invariant {
    fn new(name: &str, hard: bool, passed: bool, detail: String) -> Self {
        if !passed {
            if hard {
                warn!("invariant {name} failed: {detail}");
            } else {
                info!("soft check {name} failed: {detail}");
            }
        }
        Self {
            name: name.to_string(),
            hard,
            passed,
            detail,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    InvariantFailure,
    NotConverged,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunReport {
    pub mode: String,
    pub status: Status,
    pub converged: bool,
    pub invariants: Vec<Invariant>,
    pub summary: Value,
    pub config: RunConfig,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Ok => 0,
            Status::InvariantFailure => EXIT_FAILURE,
            Status::NotConverged => EXIT_NOT_CONVERGED,
        }
    }

    pub fn failed_invariants(&self) -> Vec<&str> {
        self.invariants
            .iter()
            .filter(|i| i.hard && !i.passed)
            .map(|i| i.name.as_str())
            .collect()
    }
}

struct ModeRun {
    summary: Value,
    invariants: Vec<Invariant>,
    converged: bool,
    grid: Arc<Grid>,
    u: Vec<f64>,
    /// `λ*` of an ergodic run, `w(0)` of a discounted one.
    scalar: f64,
}

fn quadrature(p: &ControlProblem, grid: &Grid, dom: &DomainConfig) -> Result<Option<JumpQuadrature>> {
    match &p.kernel {
        Some(k) => Ok(Some(build_quadrature(grid, k.s, dom.far.resolve(grid.radius(), grid.hx()))?)),
        None => Ok(None),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn validation_invariant(p: &ControlProblem, grid: &Grid, q: Option<&JumpQuadrature>) -> Result<(Value, Invariant)> {
    match q {
        Some(q) => {
            let rep = validate_problem(p, grid, q, &ValidationOptions::default())?;
            let failed: Vec<&str> = rep
                .checks
                .iter()
                .filter(|c| !matches!(c.status, crate::problem::CheckStatus::Pass | crate::problem::CheckStatus::Skipped))
                .map(|c| c.name.as_str())
                .collect();
            let inv = Invariant::new(
                "structural_assumptions",
                false,
                rep.passed(),
                if failed.is_empty() {
                    "all sampled checks passed".into()
                } else {
                    format!("failed: {}", failed.join(", "))
                },
            );
            Ok((serde_json::to_value(&rep)?, inv))
        }
        None => Ok((
            Value::Null,
            Invariant::new("structural_assumptions", false, true, "no jump kernel; skipped".into()),
        )),
    }
}

fn dump_requested(cfg: &RunConfig, p: &ControlProblem, grid: &Grid, dom: &DomainConfig, dir: &Path) -> Result<()> {
    if cfg.output.dump_stencils.is_empty() {
        return Ok(());
    }
    if let Some(&bad) = cfg.output.dump_stencils.iter().find(|&&i| i >= grid.len()) {
        return Err(HjbError::Config(format!(
            "output.dump_stencils: node {bad} is out of range (grid has {} nodes)",
            grid.len()
        )));
    }
    let q = quadrature(p, grid, dom)?;
    let op = assemble(p, grid, q.as_ref(), &dom.exterior)?;
    dump_stencils(&op, &cfg.output.dump_stencils, create(dir, "stencils.json")?)
}

fn run_discounted(cfg: &RunConfig, hx: f64, dir: &Path) -> Result<ModeRun> {
    let p = cfg.build_problem()?;
    let dom = cfg.domain(Mode::Discounted, hx);
    let alpha = cfg.discount.alpha;
    let ex = expand_domain(&p, alpha, &dom, cfg.discount.radius_tol, &cfg.solver_options())?;
    let grid = ex.grid.clone();
    let sol = &ex.solution;
    let mut pa = p.clone().with_discount(alpha);
    let q = quadrature(&p, &grid, &dom)?;
    let (validation, vinv) = validation_invariant(&pa, &grid, q.as_ref())?;
    let mut inv = vec![vinv];
    let zero = matches!(dom.exterior, ExteriorRule::Zero);
    let max_bound = if zero {
        let m = check_max_bound(sol, &pa, &grid);
        inv.push(Invariant::new(
            "max_bound",
            true,
            m.passed,
            format!("sup|w| = {:e}, bound = {:e}", m.sup_w, m.bound),
        ));
        serde_json::to_value(&m)?
    } else {
        Value::Null
    };
    let barrier = match (&mut pa.lyapunov, zero) {
        (Some(_), true) => {
            let k0 = barrier_constant(&pa, &grid, q.as_ref())?;
            if let Some(l) = pa.lyapunov.as_mut() {
                l.k0 = k0;
            }
            let b = check_barrier(sol, &pa, &grid)?;
            inv.push(Invariant::new(
                "barrier",
                true,
                b.passed(),
                format!("k0 = {:e}, min margin = {:e}, {} violations", b.k0, b.min_margin, b.violations.len()),
            ));
            serde_json::to_value(&b)?
        }
        _ => Value::Null,
    };
    let scale = 1.0 + sol.w.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    inv.push(Invariant::new(
        "policy_iteration_monotone",
        false,
        sol.monotone_violation <= 1e-8 * scale,
        format!("largest increase {:e}", sol.monotone_violation),
    ));
    inv.push(Invariant::new(
        "domain_stabilized",
        false,
        ex.stabilized,
        format!("last inner change {:?}", ex.last_change),
    ));
    fs::create_dir_all(dir)?;
    write_grid_csv(&grid, &sol.w, create(dir, "solution.csv")?)?;
    if cfg.output.write_trace {
        sol.write_trace(create(dir, "trace.csv")?)?;
    }
    dump_requested(cfg, &pa, &grid, &dom, dir)?;
    let w0 = sol.w[grid.origin_index()];
    let summary = json!({
        "alpha": alpha,
        "hx": hx,
        "radius": grid.radius(),
        "nodes": grid.len(),
        "exterior": dom.exterior.kind(),
        "w_origin": w0,
        "sup_w": scale - 1.0,
        "residual": sol.residual_inf_norm,
        "iterations": sol.iterations,
        "linear_iterations": sol.linear_iterations,
        "used_fallback": sol.used_fallback,
        "c_circ": sol.c_circ,
        "radius_trace": ex.radius_trace,
        "stabilized": ex.stabilized,
        "max_bound": max_bound,
        "barrier": barrier,
        "validation": validation,
    });
    Ok(ModeRun {
        summary,
        invariants: inv,
        converged: sol.converged,
        grid,
        u: sol.w.clone(),
        scalar: w0,
    })
}

#[derive(Serialize)]
struct AlphaRow {
    alpha: f64,
    lambda: f64,
    lambda_change: Option<f64>,
    change: Option<f64>,
    inner_sup: f64,
    radius: f64,
    residual: f64,
    iterations: usize,
}

fn run_ergodic(cfg: &RunConfig, hx: f64, dir: &Path) -> Result<ModeRun> {
    let p = cfg.build_problem()?;
    let dom = cfg.domain(Mode::Ergodic, hx);
    let opts = cfg.ergodic_options();
    let sol = vanishing_discount(&p, &dom, &opts)?;
    let probe = cfg.discount.probe.then(|| cfg.probe_alphas());
    let pair = verify_ergodic_pair(&sol, &p, &dom, &opts, probe.as_deref())?;
    let grid = sol.grid.clone();
    let q = quadrature(&p, &grid, &dom)?;
    let (validation, vinv) = validation_invariant(&p, &grid, q.as_ref())?;
    let mut inv = vec![vinv];
    inv.push(Invariant::new(
        "origin_normalized",
        true,
        pair.origin_value == 0.0,
        format!("u(0) = {:e}", pair.origin_value),
    ));
    inv.push(Invariant::new(
        "ergodic_residual",
        sol.converged,
        pair.residual <= opts.tol,
        format!("residual {:e} on |x| <= {}, tol {:e}", pair.residual, sol.inner_radius, opts.tol),
    ));
    if let Some(holds) = sol.lambda_bounds_hold() {
        inv.push(Invariant::new(
            "lambda_bound",
            true,
            holds,
            "alpha*|w(0)| <= k0 + alpha*V(0) at every level".into(),
        ));
    }
    if let Some(u) = &pair.uniqueness {
        inv.push(Invariant::new(
            "uniqueness",
            true,
            u.passed,
            format!("|lambda - lambda_other| = {:e}, u difference {:e}", u.lambda_diff, u.u_diff),
        ));
    }
    let bar_w = if p.lyapunov.is_some() && sol.levels.len() >= 2 {
        let b = check_bar_w_bound(&sol.levels, &p, sol.inner_radius)?;
        inv.push(Invariant::new(
            "bar_w_bound",
            false,
            b.passed,
            format!("bounded = {}", b.bounded),
        ));
        serde_json::to_value(&b)?
    } else {
        Value::Null
    };
    if let Some(g) = &sol.growth_report {
        inv.push(Invariant::new("growth_proxy", false, g.nonincreasing, g.label.clone()));
    }
    fs::create_dir_all(dir)?;
    sol.write_csv(create(dir, "solution.csv")?)?;
    if cfg.output.write_trace {
        let mut wr = csv::Writer::from_writer(create(dir, "trace.csv")?);
        for s in &sol.alpha_trace {
            wr.serialize(AlphaRow {
                alpha: s.alpha,
                lambda: s.lambda,
                lambda_change: s.lambda_change,
                change: s.change,
                inner_sup: s.inner_sup,
                radius: s.radius,
                residual: s.residual,
                iterations: s.iterations,
            })?;
        }
        wr.flush()?;
    }
    dump_requested(cfg, &p, &grid, &dom, dir)?;
    let summary = json!({
        "lambda_star": sol.lambda_star,
        "hx": hx,
        "radius": grid.radius(),
        "nodes": grid.len(),
        "inner_radius": sol.inner_radius,
        "exterior": sol.exterior,
        "levels": sol.alpha_trace.len(),
        "final_alpha": sol.alpha_trace.last().map(|s| s.alpha),
        "alpha_trace": sol.alpha_trace,
        "radius_trace": sol.radius_trace,
        "pair": pair,
        "bar_w": bar_w,
        "growth": sol.growth_report,
        "validation": validation,
    });
    Ok(ModeRun {
        summary,
        invariants: inv,
        converged: sol.converged,
        grid,
        scalar: sol.lambda_star,
        u: sol.u,
    })
}

fn run_certify(cfg: &RunConfig, dir: &Path) -> Result<ModeRun> {
    let p = cfg.build_problem()?;
    let kernel = p
        .kernel
        .ok_or_else(|| HjbError::Config("certify mode needs a jump kernel (problem.s)".into()))?;
    let radius = cfg.grid.radii[cfg.grid.radii.len() - 1];
    let grid = Arc::new(build_grid(p.dim, cfg.grid.hx, radius)?);
    let r_far = cfg.far_radius().resolve(radius, cfg.grid.hx);
    let q = build_quadrature(&grid, kernel.s, r_far)?;
    let cert = certify(&p, &grid, &q)?;
    let recheck = cert.recheck(&grid);
    let ratio = cost_envelope_ratio(&p, &grid, &cert, cfg.certify.cost_ratio_bound);
    let inv = vec![
        Invariant::new(
            "certificate",
            true,
            cert.passed(),
            format!(
                "k0 = {:e}, k1 = {:e}, admissible = {}, {} violations",
                cert.k0,
                cert.k1,
                cert.admissible,
                cert.violations.len()
            ),
        ),
        Invariant::new(
            "certificate_recheck",
            true,
            recheck.len() == cert.violations.len(),
            format!("{} nodes fail the re-check", recheck.len()),
        ),
        Invariant::new(
            "cost_envelope_ratio",
            false,
            ratio.passed,
            format!("sup ratio {:e}, bound {}", ratio.sup_ratio, ratio.bound),
        ),
    ];
    fs::create_dir_all(dir)?;
    fs::write(dir.join("certificate.json"), cert.to_json()? + "\n")?;
    write_grid_csv(&grid, &cert.values, create(dir, "lv.csv")?)?;
    let summary = json!({
        "k0": cert.k0,
        "k1": cert.k1,
        "admissible": cert.admissible,
        "worst_margin": cert.worst_margin,
        "violations": cert.violations.len(),
        "radius": radius,
        "r_far": r_far,
        "nodes": grid.len(),
        "cost_ratio": ratio,
    });
    Ok(ModeRun {
        summary,
        invariants: inv,
        converged: true,
        scalar: cert.k0,
        u: cert.values,
        grid,
    })
}

/// Sup difference on `|x| ≤ r0` between a grid function and its refinement
/// with half the spacing.
fn refinement_change(coarse: &Grid, u: &[f64], fine: &Grid, v: &[f64], r0: f64) -> f64 {
    coarse
        .nodes_within(r0)
        .into_iter()
        .filter_map(|i| {
            let l = coarse.lattice(i);
            fine.node_at([2 * l[0], 2 * l[1]]).map(|j| (u[i] - v[j]).abs())
        })
        .fold(0.0, f64::max)
}

fn run_study(cfg: &RunConfig, dir: &Path) -> Result<ModeRun> {
    let base = cfg.study.base;
    let mut runs = Vec::new();
    let mut inv = Vec::new();
    for k in 0..cfg.study.refinements {
        let hx = cfg.grid.hx / f64::from(1u32 << k);
        info!("refinement {k}: hx = {hx}");
        let sub = dir.join(format!("level-{k}"));
        let r = match base {
            Mode::Discounted => run_discounted(cfg, hx, &sub)?,
            _ => run_ergodic(cfg, hx, &sub)?,
        };
        for i in &r.invariants {
            inv.push(Invariant {
                name: format!("level-{k}/{}", i.name),
                ..i.clone()
            });
        }
        runs.push((hx, r));
    }
    let r0 = cfg.domain(base, cfg.grid.hx).inner();
    let mut rows = Vec::new();
    for k in 0..runs.len() {
        let (hx, r) = &runs[k];
        let (scalar_change, u_change) = if k > 0 {
            let (_, prev) = &runs[k - 1];
            (
                Some((r.scalar - prev.scalar).abs()),
                Some(refinement_change(&prev.grid, &prev.u, &r.grid, &r.u, r0)),
            )
        } else {
            (None, None)
        };
        rows.push(json!({
            "hx": hx,
            "nodes": r.grid.len(),
            "value": r.scalar,
            "value_change": scalar_change,
            "solution_change": u_change,
            "converged": r.converged,
        }));
    }
    let changes: Vec<f64> = rows.iter().filter_map(|r| r["value_change"].as_f64()).collect();
    let orders: Vec<f64> = changes
        .windows(2)
        .map(|w| (w[0] / w[1]).log2())
        .collect();
    let converged = runs.iter().all(|(_, r)| r.converged);
    let last = runs.pop().expect("at least two refinements").1;
    Ok(ModeRun {
        summary: json!({
            "base": base.name(),
            "value": if base == Mode::Discounted { "w(0)" } else { "lambda_star" },
            "inner_radius": r0,
            "levels": rows,
            "observed_orders": orders,
        }),
        invariants: inv,
        converged,
        grid: last.grid,
        u: last.u,
        scalar: last.scalar,
    })
}

/// Runs `cfg`, writing every output into `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunReport> {
    fs::create_dir_all(out)?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let r = match cfg.mode {
        Mode::Discounted => run_discounted(cfg, cfg.grid.hx, out)?,
        Mode::Ergodic => run_ergodic(cfg, cfg.grid.hx, out)?,
        Mode::Certify => run_certify(cfg, out)?,
        Mode::ConvergenceStudy => run_study(cfg, out)?,
    };
    let status = if r.invariants.iter().any(|i| i.hard && !i.passed) {
        Status::InvariantFailure
    } else if !r.converged {
        Status::NotConverged
    } else {
        Status::Ok
    };
    let report = RunReport {
        mode: cfg.mode.name().to_string(),
        status,
        converged: r.converged,
        invariants: r.invariants,
        summary: r.summary,
        config: cfg.clone(),
    };
    write_json(out, "report.json", &report)?;
    let unix = |t: SystemTime| t.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    write_json(
        out,
        "metadata.json",
        &json!({
            "version": env!("CARGO_PKG_VERSION"),
            "started_unix": unix(started),
            "finished_unix": unix(SystemTime::now()),
            "elapsed_seconds": clock.elapsed().as_secs_f64(),
            "threads": rayon::current_num_threads(),
        }),
    )?;
    if status == Status::InvariantFailure {
        let msg = format!("hard invariants failed: {}", report.failed_invariants().join(", "));
        write_error(out, "invariant_failure", &msg)?;
    }
    Ok(report)
}

pub fn write_error(out: &Path, kind: &str, message: &str) -> Result<()> {
    fs::create_dir_all(out)?;
    write_json(out, "error.json", &json!({"error": {"kind": kind, "message": message}}))
}

/// Loads the configuration at `path`, runs it and returns the process exit
/// code. `out` overrides `output.dir`. Errors end up in `error.json`.
pub fn execute(path: &Path, out: Option<&Path>) -> i32 {
    let cfg = RunConfig::load(path);
    let dir: PathBuf = match (out, &cfg) {
        (Some(o), _) => o.to_path_buf(),
        (None, Ok(c)) => c.output.dir.clone(),
        (None, Err(_)) => PathBuf::from("out"),
    };
    let result = cfg.and_then(|c| run(&c, &dir));
    match result {
        Ok(report) => {
            match report.status {
                Status::Ok => info!("run finished"),
                Status::NotConverged => warn!("run did not converge"),
                Status::InvariantFailure => {
                    eprintln!("error: hard invariants failed: {}", report.failed_invariants().join(", "))
                }
            }
            report.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            if let Err(w) = write_error(&dir, e.kind(), &e.to_string()) {
                eprintln!("error: could not write error.json: {w}");
            }
            EXIT_FAILURE
        }
    }
}
