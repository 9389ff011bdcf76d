//! Run configuration (TOML). Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discounted::SolverOptions;
use crate::ergodic::{geometric_alphas, DomainConfig, ErgodicOptions, FarRadius};
use crate::error::{HjbError, Result};
use crate::grid::ExteriorRule;
use crate::linsolve::GmresOptions;
use crate::problem::{
    constant_cost_problem, example_1_1_problem, CappedPower, Control, ControlProblem, Expression, KernelFactor,
    KernelSpec, LyapunovData, MixedSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Discounted,
    Ergodic,
    Certify,
    ConvergenceStudy,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Discounted => "discounted",
            Mode::Ergodic => "ergodic",
            Mode::Certify => "certify",
            Mode::ConvergenceStudy => "convergence-study",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    #[serde(rename = "example-1-1")]
    Example11,
    ConstantCost,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExteriorKind {
    Reflect,
    Zero,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub discount: DiscountConfig,
    #[serde(default)]
    pub certify: CertifyConfig,
    #[serde(default)]
    pub study: StudyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub family: Family,
    pub dim: usize,
    /// Order `s` of the jump kernel; omit for a purely local custom problem.
    pub s: Option<f64>,
    pub gamma: Option<f64>,
    pub theta: Option<f64>,
    pub kappa: Option<f64>,
    /// Added to every running cost.
    #[serde(default)]
    pub cost_shift: f64,
    #[serde(default)]
    pub flip_drift: bool,
    pub kernel_lambda: Option<f64>,
    pub kernel_big_lambda: Option<f64>,
    #[serde(default)]
    pub controls: Vec<ControlConfig>,
    pub mixed: Option<MixedConfig>,
    pub lyapunov: Option<LyapunovConfig>,
}

/// One control of a custom problem. Fields are expressions in `x1`, `x2`,
/// `r` (and `y1`, `y2`, `ry` for kernels).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub label: String,
    /// Kernel factor `k(x, y)`; defaults to the constant `2 − 2s`.
    pub kernel: Option<String>,
    pub drift: Option<Vec<String>>,
    pub cost: String,
    pub zeroth: Option<String>,
    pub diffusion: Option<Vec<Vec<String>>>,
    pub levy: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixedConfig {
    pub lambda: f64,
    pub big_lambda: f64,
    pub majorant: Option<String>,
}

/// `V = |x|^γ` outside the unit ball with a quartic cap inside.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    pub gamma: f64,
    pub envelope_exponent: f64,
    #[serde(default)]
    pub mu: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub hx: f64,
    pub radii: Vec<f64>,
    /// Fixed quadrature truncation radius.
    pub r_far: Option<f64>,
    /// Truncation radius `R + far_offset`.
    pub far_offset: Option<f64>,
    pub exterior: Option<ExteriorKind>,
    pub inner_radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
    pub value_iteration_max: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverOptions::default();
        Self {
            tol: s.tol,
            max_iter: s.max_iter,
            gmres_restart: s.gmres.restart,
            gmres_max_iter: s.gmres.max_iter,
            value_iteration_max: s.value_iteration_max,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscountConfig {
    /// Discount of a discounted run.
    pub alpha: f64,
    /// Explicit schedule of an ergodic run; otherwise `start·2^{−k}`.
    pub alphas: Option<Vec<f64>>,
    pub start: f64,
    pub levels: usize,
    pub tol: f64,
    pub radius_tol: f64,
    /// Re-run on `probe_start·2^{−k}` and compare `λ*`.
    pub probe: bool,
    pub probe_start: f64,
}

impl Default for DiscountConfig {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            alphas: None,
            start: 0.5,
            levels: 30,
            tol: 1e-6,
            radius_tol: 1e-6,
            probe: false,
            probe_start: 0.4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyConfig {
    /// Bound on `sup_τ|g_τ|/h` over the outer half of the nodes.
    pub cost_ratio_bound: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self { cost_ratio_bound: 10.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    /// Mode of the refined runs: discounted or ergodic.
    pub base: Mode,
    /// Number of spacings `hx, hx/2, …`.
    pub refinements: usize,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            base: Mode::Ergodic,
            refinements: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Nodes whose stencils are written to `stencils.json`.
    pub dump_stencils: Vec<usize>,
    pub write_trace: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            dump_stencils: Vec::new(),
            write_trace: true,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| HjbError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Checks every parameter before anything is allocated.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HjbError::Config(m));
        let p = &self.problem;
        if p.dim != 1 && p.dim != 2 {
            return bad(format!("problem.dim must be 1 or 2, got {}", p.dim));
        }
        match p.family {
            Family::Example11 => {
                for (k, v) in [("s", p.s), ("gamma", p.gamma), ("theta", p.theta)] {
                    if v.is_none() {
                        return bad(format!("problem.{k} is required for family example-1-1"));
                    }
                }
            }
            Family::ConstantCost => {
                if p.s.is_none() || p.kappa.is_none() {
                    return bad("problem.s and problem.kappa are required for family constant-cost".into());
                }
            }
            Family::Custom => {
                if p.controls.is_empty() {
                    return bad("family custom needs at least one [[problem.controls]]".into());
                }
                if p.s.is_none() && p.controls.iter().any(|c| c.kernel.is_some() || c.levy.is_some()) {
                    return bad("problem.s is required when a control has a kernel or a Levy density".into());
                }
            }
        }
        if p.family != Family::Custom
            && (!p.controls.is_empty() || p.mixed.is_some() || p.kernel_lambda.is_some() || p.kernel_big_lambda.is_some())
        {
            return bad("controls, mixed and kernel bounds are only allowed for family custom".into());
        }
        if let Some(s) = p.s {
            if !(s > 0.5 && s < 1.0) {
                return bad(format!("problem.s = {s} must lie in (1/2, 1)"));
            }
        }
        let g = &self.grid;
        if !(g.hx > 0.0) {
            return bad(format!("grid.hx must be positive, got {}", g.hx));
        }
        if g.radii.is_empty() {
            return bad("grid.radii is empty".into());
        }
        if g.radii.windows(2).any(|w| !(w[1] > w[0])) {
            return bad(format!("grid.radii must increase strictly: {:?}", g.radii));
        }
        if g.radii[0] < 4.0 * g.hx {
            return bad(format!("grid.radii[0] = {} is below 4*hx", g.radii[0]));
        }
        if g.r_far.is_some() && g.far_offset.is_some() {
            return bad("set at most one of grid.r_far and grid.far_offset".into());
        }
        if let Some(r) = g.r_far {
            let last = g.radii[g.radii.len() - 1];
            if !(r >= last + 1.0) {
                return bad(format!("grid.r_far = {r} must be at least the largest radius + 1"));
            }
        }
        if let Some(c) = g.far_offset {
            if !(c >= 1.0) {
                return bad(format!("grid.far_offset = {c} must be at least 1"));
            }
        }
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 || self.solver.gmres_restart == 0 {
            return bad("solver.tol, solver.max_iter and solver.gmres_restart must be positive".into());
        }
        let d = &self.discount;
        if !(d.alpha > 0.0 && d.alpha < 1.0) {
            return bad(format!("discount.alpha = {} must lie in (0, 1)", d.alpha));
        }
        if !(d.tol > 0.0 && d.radius_tol > 0.0) {
            return bad("discount.tol and discount.radius_tol must be positive".into());
        }
        if d.alphas.is_none() && (!(d.start > 0.0 && d.start < 1.0) || d.levels == 0) {
            return bad("discount.start must lie in (0, 1) and discount.levels must be positive".into());
        }
        if d.probe && !(d.probe_start > 0.0 && d.probe_start < 1.0) {
            return bad("discount.probe_start must lie in (0, 1)".into());
        }
        if self.mode == Mode::ConvergenceStudy {
            if !matches!(self.study.base, Mode::Discounted | Mode::Ergodic) {
                return bad("study.base must be discounted or ergodic".into());
            }
            if self.study.refinements < 2 {
                return bad("study.refinements must be at least 2".into());
            }
        }
        if self.mode == Mode::Certify && p.family == Family::Custom && p.lyapunov.is_none() {
            return bad("certify mode on a custom problem needs [problem.lyapunov]".into());
        }
        Ok(())
    }

    /// Ergodic or discounted runs default to reflection and Dirichlet data
    /// respectively.
    pub fn exterior(&self, mode: Mode) -> ExteriorRule {
        match (self.grid.exterior, mode) {
            (Some(ExteriorKind::Reflect), _) => ExteriorRule::Reflect,
            (Some(ExteriorKind::Zero), _) => ExteriorRule::Zero,
            (None, Mode::Discounted) => ExteriorRule::Zero,
            (None, _) => ExteriorRule::Reflect,
        }
    }

    pub fn far_radius(&self) -> FarRadius {
        match (self.grid.r_far, self.grid.far_offset) {
            (Some(r), _) => FarRadius::Fixed(r),
            (_, Some(c)) => FarRadius::Offset(c),
            _ => FarRadius::default_for(self.problem.dim),
        }
    }

    pub fn domain(&self, mode: Mode, hx: f64) -> DomainConfig {
        let mut cfg = DomainConfig::new(self.problem.dim, hx, self.grid.radii.clone())
            .with_exterior(self.exterior(mode))
            .with_far(self.far_radius());
        cfg.inner_radius = self.grid.inner_radius;
        cfg
    }

    pub fn solver_options(&self) -> SolverOptions {
        let s = &self.solver;
        SolverOptions {
            tol: s.tol,
            max_iter: s.max_iter,
            gmres: GmresOptions {
                restart: s.gmres_restart,
                max_iter: s.gmres_max_iter,
                ..GmresOptions::default()
            },
            value_iteration_max: s.value_iteration_max,
        }
    }

    pub fn alphas(&self) -> Vec<f64> {
        match &self.discount.alphas {
            Some(a) => a.clone(),
            None => geometric_alphas(self.discount.start, self.discount.levels),
        }
    }

    pub fn probe_alphas(&self) -> Vec<f64> {
        geometric_alphas(self.discount.probe_start, self.discount.levels)
    }

    pub fn ergodic_options(&self) -> ErgodicOptions {
        ErgodicOptions {
            alphas: self.alphas(),
            tol: self.discount.tol,
            radius_tol: self.discount.radius_tol,
            solver: self.solver_options(),
        }
    }

    pub fn build_problem(&self) -> Result<ControlProblem> {
        build_problem(&self.problem)
    }
}

fn field(src: &str) -> Result<crate::grid::ScalarField> {
    Ok(Expression::parse(src)?.scalar_field())
}

/// Builds the problem described by the configuration.
pub fn build_problem(c: &ProblemConfig) -> Result<ControlProblem> {
    let mut p = match c.family {
        Family::Example11 => example_1_1_problem(
            c.gamma.unwrap_or_default(),
            c.theta.unwrap_or_default(),
            c.dim,
            c.s.unwrap_or_default(),
        )?,
        Family::ConstantCost => constant_cost_problem(c.dim, c.s.unwrap_or_default(), c.kappa.unwrap_or_default())?,
        Family::Custom => custom_problem(c)?,
    };
    if let Some(l) = &c.lyapunov {
        let prev_exps = p.lyapunov.as_ref().and_then(|d| d.exponents);
        p = p.with_lyapunov(LyapunovData {
            v: Arc::new(CappedPower::new(l.gamma)),
            k0: 1.0,
            k1: 1.0,
            envelope_exponent: l.envelope_exponent,
            mu: l.mu,
            exponents: prev_exps,
            certified: false,
        });
    }
    if c.cost_shift != 0.0 {
        p = p.shift_cost(c.cost_shift);
    }
    if c.flip_drift {
        p = p.flip_drift();
    }
    Ok(p)
}

fn custom_problem(c: &ProblemConfig) -> Result<ControlProblem> {
    let kernel = match c.s {
        Some(s) => Some(KernelSpec::new(
            s,
            c.kernel_lambda.unwrap_or(1.0),
            c.kernel_big_lambda.unwrap_or(1.0),
        )?),
        None => None,
    };
    let default_k = c.s.map_or(0.0, |s| 2.0 - 2.0 * s);
    let mut controls = Vec::new();
    for cc in &c.controls {
        let cost = field(&cc.cost)?;
        let mut ctl = Control::new(cc.label.clone(), default_k, move |x: &[f64]| cost(x));
        if let Some(k) = &cc.kernel {
            let e = Expression::parse(k)?;
            ctl = ctl.with_kernel(KernelFactor::field(move |x: &[f64], y: &[f64]| e.eval(x, y)));
        }
        if let Some(b) = &cc.drift {
            if b.len() != c.dim {
                return Err(HjbError::Config(format!(
                    "control {}: drift has {} components, dim is {}",
                    cc.label,
                    b.len(),
                    c.dim
                )));
            }
            let comps: Vec<Expression> = b.iter().map(|s| Expression::parse(s)).collect::<Result<_>>()?;
            ctl = ctl.with_drift(move |x: &[f64]| {
                let mut v = [0.0; 2];
                for (k, e) in comps.iter().enumerate() {
                    v[k] = e.eval(x, &[]);
                }
                v
            });
        }
        if let Some(z) = &cc.zeroth {
            let f = field(z)?;
            ctl = ctl.with_zeroth(move |x: &[f64]| f(x));
        }
        if let Some(a) = &cc.diffusion {
            if a.len() != c.dim || a.iter().any(|row| row.len() != c.dim) {
                return Err(HjbError::Config(format!(
                    "control {}: diffusion must be a {}x{} matrix",
                    cc.label, c.dim, c.dim
                )));
            }
            let m: Vec<Vec<Expression>> = a
                .iter()
                .map(|row| row.iter().map(|s| Expression::parse(s)).collect::<Result<_>>())
                .collect::<Result<_>>()?;
            ctl = ctl.with_diffusion(move |x: &[f64]| {
                let mut out = [[0.0; 2]; 2];
                for (i, row) in m.iter().enumerate() {
                    for (j, e) in row.iter().enumerate() {
                        out[i][j] = e.eval(x, &[]);
                    }
                }
                out
            });
        }
        if let Some(l) = &cc.levy {
            let e = Expression::parse(l)?;
            ctl = ctl.with_levy(move |x: &[f64], y: &[f64]| e.eval(x, y));
        }
        controls.push(ctl);
    }
    let mut p = ControlProblem::new(c.dim, kernel, controls)?;
    if let Some(m) = &c.mixed {
        p = p.with_mixed(MixedSpec {
            lambda: m.lambda,
            big_lambda: m.big_lambda,
            majorant: m.majorant.as_deref().map(field).transpose()?,
        });
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
mode = "ergodic"
[problem]
family = "constant-cost"
dim = 1
s = 0.75
kappa = 2.0
[grid]
hx = 0.5
radii = [4.0, 6.0]
"#;

    #[test]
    fn parses_minimal_config() {
        let c = RunConfig::from_toml(BASE).unwrap();
        assert_eq!(c.mode, Mode::Ergodic);
        assert_eq!(c.discount.start, 0.5);
        assert!(matches!(c.exterior(Mode::Ergodic), ExteriorRule::Reflect));
        assert!(matches!(c.exterior(Mode::Discounted), ExteriorRule::Zero));
        assert_eq!(c.far_radius(), FarRadius::Diameter);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = BASE.replace("kappa = 2.0", "kappa = 2.0\nkapa = 1.0");
        let e = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(e.contains("kapa"), "{e}");
        let text = BASE.replace("[grid]", "[grid]\nhy = 1.0");
        let e = RunConfig::from_toml(&text).unwrap_err().to_string();
        assert!(e.contains("hy"), "{e}");
    }

    #[test]
    fn rejects_bad_parameters() {
        for (from, to) in [
            ("radii = [4.0, 6.0]", "radii = [6.0, 4.0]"),
            ("radii = [4.0, 6.0]", "radii = [1.0]"),
            ("s = 0.75", "s = 0.4"),
            ("dim = 1", "dim = 3"),
            ("kappa = 2.0", ""),
        ] {
            let text = BASE.replace(from, to);
            assert!(RunConfig::from_toml(&text).is_err(), "{to}");
        }
    }

    #[test]
    fn custom_problem_from_expressions() {
        let text = r#"
mode = "discounted"
[problem]
family = "custom"
dim = 2
s = 0.75
[[problem.controls]]
label = "a"
kernel = "1 + 0.1*cos(x1)"
drift = ["-x1", "-x2"]
cost = "r^2"
diffusion = [["1", "0"], ["0", "1"]]
[grid]
hx = 0.5
radii = [2.0]
far_offset = 1.0
"#;
        let c = RunConfig::from_toml(text).unwrap();
        let p = c.build_problem().unwrap();
        assert_eq!(p.controls.len(), 1);
        assert_eq!(p.cost(0, &[3.0, 4.0]), 25.0);
        assert_eq!(p.controls[0].drift_at(&[1.0, 2.0]), [-1.0, -2.0]);
        assert!((p.controls[0].kernel.eval(&[0.0, 0.0], &[1.0, 0.0]) - 1.1).abs() < 1e-15);
    }
}
