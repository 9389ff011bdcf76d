//! Declarative description of a controlled problem.
//!
//! A [`ControlProblem`] holds a finite list of [`Control`]s. Each control
//! carries the density factor `k_τ(x, y)` of its jump kernel against
//! `|y|^{−d−2s}`, a drift, a running cost and an optional zeroth-order
//! coefficient; the mixed local/nonlocal case adds a diffusion matrix and a
//! compensated Lévy density. Coefficients are closures, tabulated only when an
//! operator is assembled on a particular grid.

mod example;
mod expr;
mod validate;

use std::fmt;
use std::sync::Arc;

pub use crate::grid::ScalarField;
use crate::error::{HjbError, Result};
use crate::grid::FarField;

pub use example::{example_1_1_problem, CappedPower, ExampleExponents};
pub use expr::{parse_scalar, Expression};
pub use validate::{validate_problem, CheckStatus, ValidationCheck, ValidationOptions, ValidationReport};

pub type VectorField = Arc<dyn Fn(&[f64]) -> [f64; 2] + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(&[f64]) -> [[f64; 2]; 2] + Send + Sync>;
/// `(x, y) ↦ value`.
pub type KernelField = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;

/// Density factor `k_τ(x, y)` of a jump kernel.
#[derive(Clone)]
pub enum KernelFactor {
    Constant(f64),
    Field(KernelField),
}

impl KernelFactor {
    pub fn field<F>(f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        KernelFactor::Field(Arc::new(f))
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            KernelFactor::Constant(k) => *k,
            KernelFactor::Field(f) => f(x, y),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, KernelFactor::Constant(_))
    }
}

impl fmt::Debug for KernelFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelFactor::Constant(k) => write!(f, "Constant({k})"),
            KernelFactor::Field(_) => write!(f, "Field"),
        }
    }
}

/// Order and ellipticity constants of the jump part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelSpec {
    pub s: f64,
    pub lambda: f64,
    pub big_lambda: f64,
}

impl KernelSpec {
    pub fn new(s: f64, lambda: f64, big_lambda: f64) -> Result<Self> {
        if !(s > 0.5 && s < 1.0) {
            return Err(HjbError::InvalidProblem(format!("order s = {s} outside (1/2, 1)")));
        }
        if !(lambda > 0.0) || !(big_lambda >= lambda) {
            return Err(HjbError::InvalidProblem(format!(
                "ellipticity constants need 0 < λ ≤ Λ, got λ = {lambda}, Λ = {big_lambda}"
            )));
        }
        Ok(Self { s, lambda, big_lambda })
    }

    /// Admissible range `[(2−2s)λ, (2−2s)Λ]` of kernel factors.
    pub fn bounds(&self) -> (f64, f64) {
        let e = 2.0 - 2.0 * self.s;
        (e * self.lambda, e * self.big_lambda)
    }
}

/// One element `τ` of the control set.
#[derive(Clone)]
pub struct Control {
    pub label: String,
    pub kernel: KernelFactor,
    pub drift: Option<VectorField>,
    pub cost: ScalarField,
    pub zeroth: Option<ScalarField>,
    /// Diffusion matrix `a_τ(x)` of the mixed operator.
    pub diffusion: Option<MatrixField>,
    /// Lévy density `K_τ(x, y)` of the mixed operator, compensated on `B_1`.
    pub levy: Option<KernelField>,
}

impl fmt::Debug for Control {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Control")
            .field("label", &self.label)
            .field("kernel", &self.kernel)
            .field("drift", &self.drift.is_some())
            .field("zeroth", &self.zeroth.is_some())
            .field("diffusion", &self.diffusion.is_some())
            .field("levy", &self.levy.is_some())
            .finish()
    }
}

impl Control {
    /// A control with constant kernel factor, no drift and the given cost.
    pub fn new<F>(label: impl Into<String>, kernel: f64, cost: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            kernel: KernelFactor::Constant(kernel),
            drift: None,
            cost: Arc::new(cost),
            zeroth: None,
            diffusion: None,
            levy: None,
        }
    }

    pub fn with_kernel(mut self, kernel: KernelFactor) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn with_drift<F>(mut self, drift: F) -> Self
    where
        F: Fn(&[f64]) -> [f64; 2] + Send + Sync + 'static,
    {
        self.drift = Some(Arc::new(drift));
        self
    }

    pub fn with_cost<F>(mut self, cost: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.cost = Arc::new(cost);
        self
    }

    pub fn with_zeroth<F>(mut self, c: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.zeroth = Some(Arc::new(c));
        self
    }

    pub fn with_diffusion<F>(mut self, a: F) -> Self
    where
        F: Fn(&[f64]) -> [[f64; 2]; 2] + Send + Sync + 'static,
    {
        self.diffusion = Some(Arc::new(a));
        self
    }

    pub fn with_levy<F>(mut self, k: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.levy = Some(Arc::new(k));
        self
    }

    pub fn drift_at(&self, x: &[f64]) -> [f64; 2] {
        self.drift.as_ref().map_or([0.0, 0.0], |b| b(x))
    }

    pub fn zeroth_at(&self, x: &[f64]) -> f64 {
        self.zeroth.as_ref().map_or(0.0, |c| c(x))
    }
}

/// Ellipticity and majorant data of the local part of the mixed operator.
#[derive(Clone)]
pub struct MixedSpec {
    pub lambda: f64,
    pub big_lambda: f64,
    /// `K(y)` dominating every Lévy density.
    pub majorant: Option<ScalarField>,
}

impl fmt::Debug for MixedSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MixedSpec")
            .field("lambda", &self.lambda)
            .field("big_lambda", &self.big_lambda)
            .field("majorant", &self.majorant.is_some())
            .finish()
    }
}

/// A twice differentiable function with analytic derivatives.
pub trait LyapunovFunction: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> [f64; 2];
    fn hessian(&self, x: &[f64]) -> [[f64; 2]; 2];
    /// Growth of the function at infinity, used for the quadrature tail.
    fn far_field(&self) -> FarField;
    fn name(&self) -> String;
}

/// Lyapunov data: `V`, the decay envelope `h = k1·|x|^p`, and `k0`.
#[derive(Clone)]
pub struct LyapunovData {
    pub v: Arc<dyn LyapunovFunction>,
    pub k0: f64,
    pub k1: f64,
    /// Exponent `p` of `h(x) = k1·|x|^p`.
    pub envelope_exponent: f64,
    pub mu: f64,
    pub exponents: Option<ExampleExponents>,
    /// Whether `k0`, `k1` were certified numerically or are placeholders.
    pub certified: bool,
}

impl fmt::Debug for LyapunovData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyapunovData")
            .field("v", &self.v.name())
            .field("k0", &self.k0)
            .field("k1", &self.k1)
            .field("envelope_exponent", &self.envelope_exponent)
            .field("mu", &self.mu)
            .finish()
    }
}

impl LyapunovData {
    pub fn h(&self, x: &[f64]) -> f64 {
        let r = crate::grid::euclidean_norm(x);
        self.k1 * r.powf(self.envelope_exponent)
    }
}

/// Finite-control problem on `ℝ^d`.
#[derive(Clone, Debug)]
pub struct ControlProblem {
    pub dim: usize,
    pub kernel: Option<KernelSpec>,
    pub controls: Vec<Control>,
    /// Discount `α`: adds `c ≡ −α` to every control.
    pub discount: Option<f64>,
    pub mixed: Option<MixedSpec>,
    pub lyapunov: Option<LyapunovData>,
}

impl ControlProblem {
    pub fn new(dim: usize, kernel: Option<KernelSpec>, controls: Vec<Control>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(HjbError::InvalidProblem(format!("unsupported dimension {dim}")));
        }
        if controls.is_empty() {
            return Err(HjbError::InvalidProblem("control set is empty".into()));
        }
        Ok(Self {
            dim,
            kernel,
            controls,
            discount: None,
            mixed: None,
            lyapunov: None,
        })
    }

    pub fn with_discount(mut self, alpha: f64) -> Self {
        self.discount = Some(alpha);
        self
    }

    pub fn without_discount(mut self) -> Self {
        self.discount = None;
        self
    }

    pub fn with_mixed(mut self, mixed: MixedSpec) -> Self {
        self.mixed = Some(mixed);
        self
    }

    pub fn with_lyapunov(mut self, data: LyapunovData) -> Self {
        self.lyapunov = Some(data);
        self
    }

    pub fn control_index(&self, label: &str) -> Result<usize> {
        self.controls
            .iter()
            .position(|c| c.label == label)
            .ok_or_else(|| HjbError::UnknownControl(label.to_string()))
    }

    /// `c_τ(x)`, including the discount.
    pub fn zeroth(&self, tau: usize, x: &[f64]) -> f64 {
        self.controls[tau].zeroth_at(x) - self.discount.unwrap_or(0.0)
    }

    pub fn cost(&self, tau: usize, x: &[f64]) -> f64 {
        (self.controls[tau].cost)(x)
    }

    /// Adds `kappa` to every running cost.
    pub fn shift_cost(mut self, kappa: f64) -> Self {
        for c in &mut self.controls {
            let g = c.cost.clone();
            c.cost = Arc::new(move |x| g(x) + kappa);
        }
        self
    }

    /// Multiplies every running cost by `kappa`.
    pub fn scale_cost(mut self, kappa: f64) -> Self {
        for c in &mut self.controls {
            let g = c.cost.clone();
            c.cost = Arc::new(move |x| kappa * g(x));
        }
        self
    }

    /// Replaces every running cost by `g`.
    pub fn replace_cost(mut self, g: ScalarField) -> Self {
        for c in &mut self.controls {
            c.cost = g.clone();
        }
        self
    }

    /// Flips the sign of every drift.
    pub fn flip_drift(mut self) -> Self {
        for c in &mut self.controls {
            if let Some(b) = c.drift.clone() {
                c.drift = Some(Arc::new(move |x| {
                    let v = b(x);
                    [-v[0], -v[1]]
                }));
            }
        }
        self
    }

    /// `sup_τ sup_i |g_τ(x_i)|` over the given points.
    pub fn sup_cost(&self, points: impl Iterator<Item = crate::grid::Point>) -> f64 {
        let mut m: f64 = 0.0;
        for p in points {
            for tau in 0..self.controls.len() {
                m = m.max(self.cost(tau, &p[..self.dim]).abs());
            }
        }
        m
    }
}

/// A problem whose every control has constant cost `kappa`, constant kernel
/// factor `(2−2s)` and drift `−x`; `w ≡ κ/α` solves the discounted problem
/// when the exterior data is the same constant.
pub fn constant_cost_problem(dim: usize, s: f64, kappa: f64) -> Result<ControlProblem> {
    let kernel = KernelSpec::new(s, 1.0, 1.0)?;
    let k = 2.0 - 2.0 * s;
    let controls = vec![
        Control::new("still", k, move |_| kappa),
        Control::new("pull", k, move |_| kappa).with_drift(|x| {
            [-x[0], if x.len() > 1 { -x[1] } else { 0.0 }]
        }),
    ];
    ControlProblem::new(dim, Some(kernel), controls)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_control_set_rejected() {
        assert!(ControlProblem::new(1, None, vec![]).is_err());
    }

    #[test]
    fn discount_enters_zeroth_term() {
        let p = constant_cost_problem(1, 0.75, 1.0).unwrap().with_discount(0.1);
        assert_eq!(p.zeroth(0, &[3.0]), -0.1);
        assert_eq!(p.control_index("pull").unwrap(), 1);
        assert!(matches!(p.control_index("push"), Err(HjbError::UnknownControl(_))));
        let q = p.shift_cost(2.0);
        assert_eq!(q.cost(1, &[0.0]), 3.0);
    }
}
