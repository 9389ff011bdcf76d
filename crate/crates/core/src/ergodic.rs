//! The two limits: Dirichlet problems on growing balls for a fixed discount
//! ([`expand_domain`]), then a decreasing discount schedule
//! ([`vanishing_discount`]) producing the pair `(u, λ*)` with `u(0) = 0`.
//!
//! The driver defaults to the reflecting exterior rule. With homogeneous
//! Dirichlet data the discounted values stay bounded on a fixed ball and
//! `α·w_α(0) → 0`, whatever the cost. Reflection keeps rows conservative, so
//! constants are annihilated exactly; the driver exploits this by solving for
//! `w_α − λ_prev/α` instead of `w_α`, which keeps the unknown `O(1)` as
//! `α → 0`.

use std::sync::Arc;

use log::{debug, info};
use serde::Serialize;

use crate::discounted::{solve, DiscountedSolution, SolverOptions};
use crate::error::{HjbError, Result};
use crate::grid::{ExteriorRule, Grid};
use crate::operator::{assemble, build_quadrature, DiscreteOperator};
use crate::problem::ControlProblem;

/// Truncation radius of the quadrature as a function of the ball radius.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum FarRadius {
    Fixed(f64),
    /// `R + c`.
    Offset(f64),
    /// `2R + hx`: every offset between two nodes is resolved.
    Diameter,
}

impl FarRadius {
    pub fn resolve(&self, radius: f64, hx: f64) -> f64 {
        match *self {
            FarRadius::Fixed(r) => r,
            FarRadius::Offset(c) => radius + c,
            FarRadius::Diameter => 2.0 * radius + hx,
        }
    }

    /// `Diameter` in one dimension, `Offset(1)` in two.
    pub fn default_for(dim: usize) -> Self {
        if dim == 1 {
            FarRadius::Diameter
        } else {
            FarRadius::Offset(1.0)
        }
    }
}

/// Grid spacing, radius schedule and boundary treatment of a run.
#[derive(Clone, Debug)]
pub struct DomainConfig {
    pub dim: usize,
    pub hx: f64,
    pub radii: Vec<f64>,
    pub far: FarRadius,
    pub exterior: ExteriorRule,
    /// Observation window `B_{R0}`; defaults to the first radius over 4.
    pub inner_radius: Option<f64>,
}

impl DomainConfig {
    /// Reflecting exterior and the default far radius.
    pub fn new(dim: usize, hx: f64, radii: Vec<f64>) -> Self {
        Self {
            dim,
            hx,
            radii,
            far: FarRadius::default_for(dim),
            exterior: ExteriorRule::Reflect,
            inner_radius: None,
        }
    }

    pub fn with_exterior(mut self, exterior: ExteriorRule) -> Self {
        self.exterior = exterior;
        self
    }

    pub fn with_far(mut self, far: FarRadius) -> Self {
        self.far = far;
        self
    }

    pub fn with_inner_radius(mut self, r: f64) -> Self {
        self.inner_radius = Some(r);
        self
    }

    pub fn inner(&self) -> f64 {
        self.inner_radius.unwrap_or(self.radii[0] / 4.0)
    }

    fn validate(&self) -> Result<()> {
        if self.radii.is_empty() {
            return Err(HjbError::Schedule("empty radius schedule".into()));
        }
        for w in self.radii.windows(2) {
            if !(w[1] > w[0]) {
                return Err(HjbError::Schedule(format!(
                    "radius schedule must increase strictly: {:?}",
                    self.radii
                )));
            }
        }
        if self.radii[0] < 4.0 * self.hx {
            return Err(HjbError::Schedule(format!(
                "radius {} below 4*hx = {}",
                self.radii[0],
                4.0 * self.hx
            )));
        }
        Ok(())
    }
}

/// One radius of a domain expansion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RadiusStep {
    pub alpha: f64,
    pub radius: f64,
    pub nodes: usize,
    /// Sup-norm change on the inner window against the previous radius,
    /// origin-normalized under reflection.
    pub change: Option<f64>,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct ExpandedSolution {
    pub grid: Arc<Grid>,
    pub solution: DiscountedSolution,
    pub radius_trace: Vec<RadiusStep>,
    /// Whether two consecutive radii agreed within the tolerance.
    pub stabilized: bool,
    pub last_change: Option<f64>,
}

struct Level {
    grid: Arc<Grid>,
    op: DiscreteOperator,
    /// `max_{i,τ} ((L_τ + c_τ)V + |g_τ|)(x_i)` for this operator.
    lambda_k0: Option<f64>,
    /// Discount and solution of the latest solve on this radius.
    last: Option<(f64, Vec<f64>)>,
}

/// Operators of the undiscounted problem, one per radius, built on demand.
struct DomainCache<'a> {
    p: ControlProblem,
    cfg: &'a DomainConfig,
    levels: Vec<Option<Level>>,
}

impl<'a> DomainCache<'a> {
    fn new(p: &ControlProblem, cfg: &'a DomainConfig) -> Result<Self> {
        cfg.validate()?;
        if p.dim != cfg.dim {
            return Err(HjbError::InvalidProblem(format!(
                "problem dimension {} but grid dimension {}",
                p.dim, cfg.dim
            )));
        }
        Ok(Self {
            p: p.clone().without_discount(),
            cfg,
            levels: (0..cfg.radii.len()).map(|_| None).collect(),
        })
    }

    fn level(&mut self, k: usize) -> Result<&mut Level> {
        if self.levels[k].is_none() {
            let r = self.cfg.radii[k];
            let grid = Grid::new(self.cfg.dim, self.cfg.hx, r)?;
            let q = match &self.p.kernel {
                Some(kernel) => Some(build_quadrature(&grid, kernel.s, self.cfg.far.resolve(r, self.cfg.hx))?),
                None => None,
            };
            let op = assemble(&self.p, &grid, q.as_ref(), &self.cfg.exterior)?;
            let lambda_k0 = match &self.p.lyapunov {
                Some(l) => {
                    let vn = grid.tabulate(&|x| l.v.value(x));
                    let mut k0 = f64::NEG_INFINITY;
                    for tau in 0..op.num_controls() {
                        let out = op.apply(tau, &vn)?;
                        let g = op.stencil(tau).constant();
                        let d = grid.dim();
                        for (i, x) in grid.points().enumerate() {
                            // constant() is g plus folded exterior data
                            k0 = k0.max(out[i] - g[i] + self.p.cost(tau, &x[..d]).abs());
                        }
                    }
                    Some(k0)
                }
                None => None,
            };
            debug!("assembled radius {r}: {} nodes", grid.len());
            self.levels[k] = Some(Level {
                grid: Arc::new(grid),
                op,
                lambda_k0,
                last: None,
            });
        }
        Ok(self.levels[k].as_mut().expect("level built above"))
    }
}

/// Values of `w` (on `from`) at the nodes of `to`; nodes outside `from` take
/// the value of the reflected node.
fn transfer(from: &Grid, w: &[f64], to: &Grid) -> Vec<f64> {
    to.lattice_points()
        .iter()
        .map(|&l| match from.node_at(l) {
            Some(i) => w[i],
            None => w[from.reflect_lattice(l)],
        })
        .collect()
}

/// `max |a − b|` over nodes of `ga` within `r`, matched by lattice point.
fn window_change(ga: &Grid, a: &[f64], gb: &Grid, b: &[f64], r: f64) -> f64 {
    ga.nodes_within(r)
        .into_iter()
        .map(|i| {
            let j = gb.node_at(ga.lattice(i)).unwrap_or_else(|| gb.reflect_lattice(ga.lattice(i)));
            (a[i] - b[j]).abs()
        })
        .fold(0.0, f64::max)
}

/// Solves on every radius in turn with discount `alpha`, stopping once the
/// inner window changes by at most `tol` (after subtracting the origin value
/// when the exterior is reflecting). Each radius warm starts from its own
/// previous solve, or else from the previous radius. Under reflection the
/// unknown is `w − m` with cost `g − α·m`, `m` the warm start's origin value
/// rescaled to the new discount.
fn expand_cached(
    cache: &mut DomainCache,
    alpha: f64,
    tol: f64,
    opts: &SolverOptions,
) -> Result<(usize, ExpandedSolution)> {
    let r0 = cache.cfg.inner();
    let conservative = matches!(cache.cfg.exterior, ExteriorRule::Reflect);
    let mut trace = Vec::new();
    let mut prev: Option<(Arc<Grid>, Vec<f64>)> = None;
    let mut last: Option<(usize, DiscountedSolution)> = None;
    let mut stabilized = false;
    let mut last_change = None;
    for k in 0..cache.cfg.radii.len() {
        let level = cache.level(k)?;
        let grid = level.grid.clone();
        let o = grid.origin_index();
        let (offset, init) = match (&level.last, &prev) {
            (Some((a, w)), _) => {
                let m = if conservative { w[o] * a / alpha } else { 0.0 };
                (m, Some(w.iter().map(|v| v - m).collect::<Vec<_>>()))
            }
            (None, Some((g, w))) => {
                let t = transfer(g, w, &grid);
                let m = if conservative { t[o] } else { 0.0 };
                (m, Some(t.iter().map(|v| v - m).collect()))
            }
            (None, None) => (0.0, None),
        };
        level.op.shift_zeroth(-alpha);
        level.op.shift_constant(-alpha * offset);
        let out = solve(&level.op, opts, init.as_deref());
        level.op.shift_zeroth(alpha);
        level.op.shift_constant(alpha * offset);
        let mut sol = out?;
        sol.alpha = Some(alpha);
        sol.w.iter_mut().for_each(|v| *v += offset);
        level.last = Some((alpha, sol.w.clone()));
        // under reflection constants are free, so compare shapes
        let change = prev.as_ref().map(|(g, w)| {
            if conservative {
                window_change(&grid, &normalize(&grid, &sol.w), g, &normalize(g, w), r0)
            } else {
                window_change(&grid, &sol.w, g, w, r0)
            }
        });
        trace.push(RadiusStep {
            alpha,
            radius: grid.radius(),
            nodes: grid.len(),
            change,
            residual: sol.residual_inf_norm,
            iterations: sol.iterations,
        });
        prev = Some((grid, sol.w.clone()));
        last = Some((k, sol));
        if let Some(c) = change {
            last_change = Some(c);
            if c <= tol {
                stabilized = true;
                break;
            }
        }
    }
    let (k, solution) = last.expect("schedule is nonempty");
    Ok((
        k,
        ExpandedSolution {
            grid: prev.expect("schedule is nonempty").0,
            solution,
            radius_trace: trace,
            stabilized,
            last_change,
        },
    ))
}

/// Discounted solves on the radius schedule, stopping when the solution on
/// the inner window changes by at most `tol` between consecutive radii.
pub fn expand_domain(
    p: &ControlProblem,
    alpha: f64,
    cfg: &DomainConfig,
    tol: f64,
    opts: &SolverOptions,
) -> Result<ExpandedSolution> {
    if !(alpha > 0.0) {
        return Err(HjbError::Schedule(format!("discount must be positive, got {alpha}")));
    }
    let mut cache = DomainCache::new(p, cfg)?;
    let (_, out) = expand_cached(&mut cache, alpha, tol, opts)?;
    if !out.stabilized {
        info!("radius schedule exhausted; last inner change {:?}", out.last_change);
    }
    Ok(out)
}

/// `0.5·2^{−k}`-style schedule: `levels` values starting at `start`.
pub fn geometric_alphas(start: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|k| start * 0.5f64.powi(k as i32)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErgodicOptions {
    /// Strictly decreasing discounts in `(0, 1)`.
    pub alphas: Vec<f64>,
    /// Cauchy tolerance on `λ_α`, on `w̄_α` over the inner window, and on the
    /// ergodic residual `α·max_B |w̄_α|`.
    pub tol: f64,
    /// Inner-window tolerance of the domain expansion.
    pub radius_tol: f64,
    pub solver: SolverOptions,
}

impl Default for ErgodicOptions {
    fn default() -> Self {
        Self {
            alphas: geometric_alphas(0.5, 30),
            tol: 1e-6,
            radius_tol: 1e-6,
            solver: SolverOptions::default(),
        }
    }
}

/// Bound `α·|w_α(0)| ≤ k0 + α·V(0)` at one discount level.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LambdaBound {
    pub k0: f64,
    pub v_origin: f64,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlphaStep {
    pub alpha: f64,
    /// `α·w_α(0)`.
    pub lambda: f64,
    pub w_origin: f64,
    /// `|λ_α − λ_prev|`.
    pub lambda_change: Option<f64>,
    /// `‖w̄_α − w̄_prev‖_∞` on the inner window.
    pub change: Option<f64>,
    /// `max_B |w̄_α|` on the inner window.
    pub inner_sup: f64,
    pub radius: f64,
    pub radius_stable: bool,
    pub residual: f64,
    pub iterations: usize,
    pub lambda_bound: Option<LambdaBound>,
}

/// `w̄_α` at one discount level.
#[derive(Clone, Debug)]
pub struct LevelRecord {
    pub alpha: f64,
    pub grid: Arc<Grid>,
    pub w_bar: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RaySamples {
    pub direction: Vec<f64>,
    /// `(|x|, |u(x)| / (1 + V(x)))`.
    pub samples: Vec<(f64, f64)>,
    pub nonincreasing: bool,
}

/// Sampled `|u|/(1+V)` on the outer half of the ball along coordinate rays.
/// A proxy for `u = o(V)`, nothing more.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GrowthReport {
    pub label: String,
    pub rays: Vec<RaySamples>,
    pub nonincreasing: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ErgodicSolution {
    pub u: Vec<f64>,
    pub lambda_star: f64,
    #[serde(skip)]
    pub grid: Arc<Grid>,
    pub policy: Vec<usize>,
    pub alpha_trace: Vec<AlphaStep>,
    pub radius_trace: Vec<RadiusStep>,
    pub growth_report: Option<GrowthReport>,
    pub converged: bool,
    pub inner_radius: f64,
    pub exterior: String,
    #[serde(skip)]
    pub levels: Vec<LevelRecord>,
}

impl ErgodicSolution {
    /// Every recorded level satisfies `α·|w_α(0)| ≤ k0 + α·V(0)`.
    pub fn lambda_bounds_hold(&self) -> Option<bool> {
        self.alpha_trace
            .iter()
            .map(|s| s.lambda_bound.as_ref().map(|b| b.holds))
            .collect::<Option<Vec<_>>>()
            .map(|v| v.into_iter().all(|b| b))
    }

    /// CSV with columns `x1[,x2],u`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        write_grid_csv(&self.grid, &self.u, w)
    }
}

/// Grid function as CSV with columns `x1[,x2],u`.
pub fn write_grid_csv<W: std::io::Write>(grid: &Grid, u: &[f64], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    if grid.dim() == 1 {
        wr.write_record(["x1", "u"])?;
    } else {
        wr.write_record(["x1", "x2", "u"])?;
    }
    for (i, x) in grid.points().enumerate() {
        let mut rec: Vec<String> = x[..grid.dim()].iter().map(|v| format!("{v}")).collect();
        rec.push(format!("{:e}", u[i]));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// Subtracts the value at the origin node.
pub fn normalize(grid: &Grid, w: &[f64]) -> Vec<f64> {
    let w0 = w[grid.origin_index()];
    w.iter().map(|v| v - w0).collect()
}

fn check_alphas(alphas: &[f64]) -> Result<()> {
    if alphas.is_empty() {
        return Err(HjbError::Schedule("empty discount schedule".into()));
    }
    if alphas.iter().any(|a| !(*a > 0.0 && *a < 1.0)) {
        return Err(HjbError::Schedule(format!("discounts must lie in (0, 1): {alphas:?}")));
    }
    if alphas.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(HjbError::Schedule(format!("discounts must decrease strictly: {alphas:?}")));
    }
    Ok(())
}

/// Runs the discount schedule, expanding the domain at each level and warm
/// starting from the previous level. Stops once `|Δλ|`, the inner-window change
/// of `w̄` and `α·max_B|w̄|` are all at most `tol`. An exhausted schedule is
/// reported through `converged = false`.
pub fn vanishing_discount(p: &ControlProblem, cfg: &DomainConfig, opts: &ErgodicOptions) -> Result<ErgodicSolution> {
    check_alphas(&opts.alphas)?;
    let mut cache = DomainCache::new(p, cfg)?;
    let r0 = cfg.inner();
    let mut alpha_trace: Vec<AlphaStep> = Vec::new();
    let mut radius_trace = Vec::new();
    let mut levels: Vec<LevelRecord> = Vec::new();
    let mut last_policy = Vec::new();
    let mut converged = false;
    for &alpha in &opts.alphas {
        let (k, ex) = expand_cached(&mut cache, alpha, opts.radius_tol, &opts.solver)?;
        let grid = ex.grid.clone();
        let w = ex.solution.w.clone();
        let w0 = w[grid.origin_index()];
        let lambda = alpha * w0;
        let w_bar = normalize(&grid, &w);
        let inner = grid.nodes_within(r0);
        let inner_sup = inner.iter().map(|&i| w_bar[i].abs()).fold(0.0, f64::max);
        let change = levels
            .last()
            .map(|l| window_change(&grid, &w_bar, &l.grid, &l.w_bar, r0));
        let lambda_change = alpha_trace.last().map(|s| (lambda - s.lambda).abs());
        let lambda_bound = match (cache.level(k)?.lambda_k0, &p.lyapunov) {
            (Some(k0), Some(l)) => {
                let v0 = l.v.value(&vec![0.0; grid.dim()]);
                Some(LambdaBound {
                    k0,
                    v_origin: v0,
                    holds: lambda.abs() <= k0 + alpha * v0 + ex.solution.residual_inf_norm,
                })
            }
            _ => None,
        };
        info!(
            "alpha {alpha:.3e}: lambda {lambda:.10}, dlambda {:?}, dw {:?}, R {}",
            lambda_change,
            change,
            grid.radius()
        );
        alpha_trace.push(AlphaStep {
            alpha,
            lambda,
            w_origin: w0,
            lambda_change,
            change,
            inner_sup,
            radius: grid.radius(),
            radius_stable: ex.stabilized,
            residual: ex.solution.residual_inf_norm,
            iterations: ex.solution.iterations,
            lambda_bound,
        });
        radius_trace.extend(ex.radius_trace);
        last_policy = ex.solution.policy.clone();
        levels.push(LevelRecord {
            alpha,
            grid: grid.clone(),
            w_bar,
        });
        if let (Some(dl), Some(dw)) = (lambda_change, change) {
            if dl <= opts.tol && dw <= opts.tol && alpha * inner_sup <= opts.tol {
                converged = true;
                break;
            }
        }
    }
    let last = levels.last().expect("schedule is nonempty");
    let grid = last.grid.clone();
    let u = normalize(&grid, &last.w_bar);
    let growth_report = p.lyapunov.as_ref().map(|l| growth_report(&grid, &u, &|x| l.v.value(x)));
    Ok(ErgodicSolution {
        u,
        lambda_star: alpha_trace.last().expect("schedule is nonempty").lambda,
        grid,
        policy: last_policy,
        alpha_trace,
        radius_trace,
        growth_report,
        converged,
        inner_radius: r0,
        exterior: cfg.exterior.kind().to_string(),
        levels,
    })
}

/// Samples `|u|/(1+V)` on the outer half of each coordinate ray.
pub fn growth_report(grid: &Grid, u: &[f64], v: &dyn Fn(&[f64]) -> f64) -> GrowthReport {
    let d = grid.dim();
    let dirs: Vec<[i32; 2]> = if d == 1 {
        vec![[1, 0], [-1, 0]]
    } else {
        vec![[1, 0], [-1, 0], [0, 1], [0, -1]]
    };
    let steps = (grid.radius() / grid.hx()).floor() as i32;
    let first = (steps + 1) / 2;
    let stride = ((steps - first) / 8).max(1);
    let rays: Vec<RaySamples> = dirs
        .iter()
        .map(|e| {
            let mut samples = Vec::new();
            let mut j = first.max(1);
            while j <= steps {
                if let Some(i) = grid.node_at([e[0] * j, e[1] * j]) {
                    let x = grid.point(i);
                    samples.push((grid.norm(i), u[i].abs() / (1.0 + v(&x[..d]))));
                }
                j += stride;
            }
            let nonincreasing = samples.windows(2).all(|w| w[1].1 <= w[0].1 * (1.0 + 1e-9) + 1e-15);
            RaySamples {
                direction: e[..d].iter().map(|v| *v as f64).collect(),
                samples,
                nonincreasing,
            }
        })
        .collect();
    GrowthReport {
        label: "proxy for u = o(V): sampled ratios near the truncation boundary".into(),
        nonincreasing: rays.iter().all(|r| r.nonincreasing),
        rays,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BarWLevel {
    pub alpha: f64,
    /// `max_B |w̄_α|`.
    pub max_inner: f64,
    /// `min_i (max_B|w̄_α| + V(x_i) − |w̄_α(x_i)|)`.
    pub min_margin: f64,
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BarWReport {
    pub inner_radius: f64,
    pub levels: Vec<BarWLevel>,
    /// Last `max_B |w̄_α|` is at most twice the median over the trace.
    pub bounded: bool,
    pub passed: bool,
}

/// Checks `|w̄_α(x)| ≤ max_B |w̄_α| + V(x)` at every node of every level, and
/// that `max_B |w̄_α|` does not blow up along the trace.
pub fn check_bar_w_bound(levels: &[LevelRecord], p: &ControlProblem, inner_radius: f64) -> Result<BarWReport> {
    let lyap = p.lyapunov.as_ref().ok_or(HjbError::MissingLyapunov)?;
    if levels.len() < 2 {
        return Err(HjbError::Schedule("need at least two discount levels".into()));
    }
    let mut out = Vec::new();
    for l in levels {
        let d = l.grid.dim();
        let max_inner = l
            .grid
            .nodes_within(inner_radius)
            .into_iter()
            .map(|i| l.w_bar[i].abs())
            .fold(0.0, f64::max);
        let mut min_margin = f64::INFINITY;
        let mut violations = 0;
        for (i, x) in l.grid.points().enumerate() {
            let m = max_inner + lyap.v.value(&x[..d]) - l.w_bar[i].abs();
            min_margin = min_margin.min(m);
            if m < -1e-9 {
                violations += 1;
            }
        }
        out.push(BarWLevel {
            alpha: l.alpha,
            max_inner,
            min_margin,
            violations,
        });
    }
    let mut sups: Vec<f64> = out.iter().map(|l| l.max_inner).collect();
    let last = *sups.last().expect("two levels");
    sups.sort_by(f64::total_cmp);
    let median = sups[sups.len() / 2];
    let bounded = last <= 2.0 * median + 1e-12;
    Ok(BarWReport {
        inner_radius,
        passed: bounded && out.iter().all(|l| l.violations == 0),
        levels: out,
        bounded,
    })
}

/// `‖inf_τ(L_τ u + g_τ) − λ‖_∞` over the nodes within `inner_radius`, for an
/// operator assembled without discount.
pub fn ergodic_residual(u: &[f64], lambda: f64, op: &DiscreteOperator, inner_radius: f64) -> Result<f64> {
    let (r, _) = op.apply_inf(u)?;
    Ok(op
        .grid()
        .nodes_within(inner_radius)
        .into_iter()
        .map(|i| (r[i] - lambda).abs())
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub alphas: Vec<f64>,
    pub lambda: f64,
    pub lambda_other: f64,
    pub lambda_diff: f64,
    /// Inner-window sup distance between the two `u`.
    pub u_diff: f64,
    pub converged: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairReport {
    pub residual: f64,
    pub origin_value: f64,
    pub tol: f64,
    pub residual_passed: bool,
    pub uniqueness: Option<UniquenessReport>,
    pub passed: bool,
}

/// Recomputes the ergodic residual of `sol` on the inner window with a fresh
/// operator, and optionally re-runs the driver on `probe_alphas`, requiring
/// both `λ*` to agree within `5·tol`.
pub fn verify_ergodic_pair(
    sol: &ErgodicSolution,
    p: &ControlProblem,
    cfg: &DomainConfig,
    opts: &ErgodicOptions,
    probe_alphas: Option<&[f64]>,
) -> Result<PairReport> {
    let base = p.clone().without_discount();
    let q = match &base.kernel {
        Some(k) => Some(build_quadrature(&sol.grid, k.s, cfg.far.resolve(sol.grid.radius(), sol.grid.hx()))?),
        None => None,
    };
    let op = assemble(&base, &sol.grid, q.as_ref(), &cfg.exterior)?;
    let residual = ergodic_residual(&sol.u, sol.lambda_star, &op, sol.inner_radius)?;
    let origin_value = sol.u[sol.grid.origin_index()];
    let residual_passed = residual <= opts.tol && origin_value == 0.0;
    let uniqueness = match probe_alphas {
        Some(alphas) => {
            let other = vanishing_discount(
                p,
                cfg,
                &ErgodicOptions {
                    alphas: alphas.to_vec(),
                    ..opts.clone()
                },
            )?;
            let lambda_diff = (other.lambda_star - sol.lambda_star).abs();
            let u_diff = window_change(&sol.grid, &sol.u, &other.grid, &other.u, sol.inner_radius);
            Some(UniquenessReport {
                alphas: alphas.to_vec(),
                lambda: sol.lambda_star,
                lambda_other: other.lambda_star,
                lambda_diff,
                u_diff,
                converged: other.converged,
                passed: lambda_diff <= 5.0 * opts.tol,
            })
        }
        None => None,
    };
    Ok(PairReport {
        residual,
        origin_value,
        tol: opts.tol,
        passed: residual_passed && uniqueness.as_ref().is_none_or(|u| u.passed),
        residual_passed,
        uniqueness,
    })
}
