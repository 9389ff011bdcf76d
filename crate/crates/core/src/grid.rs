//! Uniform lattices on truncated balls `B_R ⊂ ℝ^d` (d = 1, 2) and the rules
//! that extend a grid function to lattice points outside the ball.
//!
//! Nodes are the points `hx·l` with integer `l` and `|hx·l| ≤ R`, ordered
//! lexicographically in `l`. The lattice is centred at the origin, so the
//! origin is always a node.

use std::fmt;
use std::sync::Arc;

use crate::error::{HjbError, Result};

/// A point of `ℝ^d` padded to two coordinates; the second entry is zero in 1-d.
pub type Point = [f64; 2];

/// Integer lattice coordinates, padded like [`Point`].
pub type Lattice = [i32; 2];

/// A scalar field evaluated at a point given as a slice of length `d`.
pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

const LATTICE_EPS: f64 = 1e-9;

/// Wraps a closure into a [`ScalarField`].
pub fn scalar_field<F>(f: F) -> ScalarField
where
    F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
{
    Arc::new(f)
}

pub fn euclidean_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Lattice points of spacing `hx` inside the closed ball of radius `radius`,
/// in lexicographic order. No parameter checks beyond positivity; see
/// [`Grid::new`] for the solver-level preconditions.
pub fn lattice_ball(dim: usize, hx: f64, radius: f64) -> Vec<Lattice> {
    let n = half_width(hx, radius);
    let r2 = (radius / hx).powi(2) + LATTICE_EPS;
    let mut out = Vec::new();
    match dim {
        1 => {
            for i in -n..=n {
                out.push([i, 0]);
            }
        }
        _ => {
            for i in -n..=n {
                for j in -n..=n {
                    if (i as f64).powi(2) + (j as f64).powi(2) <= r2 {
                        out.push([i, j]);
                    }
                }
            }
        }
    }
    out
}

fn half_width(hx: f64, radius: f64) -> i32 {
    (radius / hx + LATTICE_EPS).floor() as i32
}

/// Uniform lattice on a truncated ball.
#[derive(Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    hx: f64,
    radius: f64,
    half_width: i32,
    lattice: Vec<Lattice>,
    lookup: Vec<i32>,
    origin_index: usize,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("hx", &self.hx)
            .field("radius", &self.radius)
            .field("nodes", &self.lattice.len())
            .finish()
    }
}

/// Builds the lattice on `B_R`. Requires `hx > 0`, `R ≥ 4·hx` and `d ∈ {1, 2}`.
pub fn build_grid(dim: usize, hx: f64, radius: f64) -> Result<Grid> {
    Grid::new(dim, hx, radius)
}

impl Grid {
    pub fn new(dim: usize, hx: f64, radius: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(HjbError::InvalidGrid(format!(
                "unsupported dimension {dim} (expected 1 or 2)"
            )));
        }
        if !(hx > 0.0) || !hx.is_finite() {
            return Err(HjbError::InvalidGrid(format!("spacing must be positive, got {hx}")));
        }
        if !radius.is_finite() || radius < 4.0 * hx * (1.0 - LATTICE_EPS) {
            return Err(HjbError::InvalidGrid(format!(
                "radius {radius} is smaller than 4·hx = {}",
                4.0 * hx
            )));
        }
        let lattice = lattice_ball(dim, hx, radius);
        let n = half_width(hx, radius);
        let width = (2 * n + 1) as usize;
        let mut lookup = vec![-1i32; if dim == 1 { width } else { width * width }];
        for (k, l) in lattice.iter().enumerate() {
            let idx = box_index(dim, n, *l);
            lookup[idx] = k as i32;
        }
        let origin_index = lookup[box_index(dim, n, [0, 0])] as usize;
        Ok(Self {
            dim,
            hx,
            radius,
            half_width: n,
            lattice,
            lookup,
            origin_index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    /// Index of the node at the origin.
    pub fn origin_index(&self) -> usize {
        self.origin_index
    }

    /// Largest `|l_i|` over the nodes.
    pub fn half_width(&self) -> i32 {
        self.half_width
    }

    pub fn lattice(&self, i: usize) -> Lattice {
        self.lattice[i]
    }

    pub fn lattice_points(&self) -> &[Lattice] {
        &self.lattice
    }

    pub fn lattice_to_point(&self, l: Lattice) -> Point {
        [l[0] as f64 * self.hx, l[1] as f64 * self.hx]
    }

    pub fn point(&self, i: usize) -> Point {
        self.lattice_to_point(self.lattice[i])
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        self.lattice.iter().map(move |l| self.lattice_to_point(*l))
    }

    pub fn norm(&self, i: usize) -> f64 {
        euclidean_norm(&self.point(i)[..self.dim])
    }

    /// Node index of a lattice point, if it lies in the ball.
    pub fn node_at(&self, l: Lattice) -> Option<usize> {
        let n = self.half_width;
        if l[0].abs() > n || l[1].abs() > n || (self.dim == 1 && l[1] != 0) {
            return None;
        }
        let k = self.lookup[box_index(self.dim, n, l)];
        (k >= 0).then_some(k as usize)
    }

    /// Lattice point nearest to `x`.
    pub fn nearest_lattice(&self, x: &[f64]) -> Lattice {
        let a = (x[0] / self.hx).round() as i32;
        let b = if self.dim == 2 { (x[1] / self.hx).round() as i32 } else { 0 };
        [a, b]
    }

    /// Node nearest to `x` when `x` rounds to a lattice point inside the ball.
    pub fn nearest_node(&self, x: &[f64]) -> Option<usize> {
        self.node_at(self.nearest_lattice(x))
    }

    /// Whether `x` coincides with a lattice point up to rounding.
    pub fn is_lattice_point(&self, x: &[f64]) -> bool {
        let l = self.nearest_lattice(x);
        let p = self.lattice_to_point(l);
        (0..self.dim).all(|k| (p[k] - x[k]).abs() <= LATTICE_EPS * self.hx.max(1.0))
    }

    /// Node onto which an exterior lattice point is reflected: the node nearest
    /// to `R·l/|l|`, searched inward until a node is hit.
    pub fn reflect_lattice(&self, l: Lattice) -> usize {
        if let Some(k) = self.node_at(l) {
            return k;
        }
        let p = self.lattice_to_point(l);
        let r = euclidean_norm(&p[..self.dim]);
        let dir = [p[0] / r, p[1] / r];
        let mut t = self.radius;
        loop {
            let cand = self.nearest_lattice(&[t * dir[0], t * dir[1]]);
            if let Some(k) = self.node_at(cand) {
                return k;
            }
            t -= 0.25 * self.hx;
            if t <= 0.0 {
                return self.origin_index;
            }
        }
    }

    /// Indices of nodes whose norm is at most `r`.
    pub fn nodes_within(&self, r: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.norm(i) <= r + LATTICE_EPS * self.hx)
            .collect()
    }

    /// Evaluates a scalar field at every node.
    pub fn tabulate(&self, f: &dyn Fn(&[f64]) -> f64) -> Vec<f64> {
        self.points().map(|p| f(&p[..self.dim])).collect()
    }
}

fn box_index(dim: usize, n: i32, l: Lattice) -> usize {
    let w = 2 * n + 1;
    let a = (l[0] + n) as usize;
    if dim == 1 {
        a
    } else {
        a * w as usize + (l[1] + n) as usize
    }
}

/// Behaviour of the exterior data beyond the quadrature tail radius, where
/// the jump integral is lumped into one mass.
#[derive(Clone, Debug, PartialEq)]
pub enum FarField {
    /// Evaluate the data at one representative point per direction, at the mean
    /// radius of the tail measure.
    Lumped,
    /// The data averages to this value over the far field (exact for constants).
    Mean(f64),
    /// The data behaves like `coeff·|z|^exponent` at infinity; requires
    /// `exponent < 2s`.
    Power { coeff: f64, exponent: f64 },
}

/// Extension of a grid function outside the ball.
#[derive(Clone)]
pub enum ExteriorRule {
    /// Homogeneous Dirichlet data.
    Zero,
    /// Prescribed exterior data.
    Function { field: ScalarField, far: FarField },
    /// Exterior points take the value of the node they reflect onto, which
    /// keeps the discrete operator conservative.
    Reflect,
}

impl fmt::Debug for ExteriorRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExteriorRule::Zero => write!(f, "Zero"),
            ExteriorRule::Function { far, .. } => write!(f, "Function({far:?})"),
            ExteriorRule::Reflect => write!(f, "Reflect"),
        }
    }
}

impl ExteriorRule {
    pub fn function<F>(f: F, far: FarField) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        ExteriorRule::Function {
            field: Arc::new(f),
            far,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self::function(move |_| value, FarField::Mean(value))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ExteriorRule::Zero => "zero",
            ExteriorRule::Function { .. } => "function",
            ExteriorRule::Reflect => "reflect",
        }
    }
}

/// Value of the extension of `field` at `x`: the grid value when `x` is a node,
/// otherwise whatever the exterior rule prescribes.
pub fn evaluate_extended(grid: &Grid, field: &[f64], rule: &ExteriorRule, x: &[f64]) -> f64 {
    if grid.is_lattice_point(x) {
        if let Some(k) = grid.nearest_node(x) {
            return field[k];
        }
    }
    match rule {
        ExteriorRule::Zero => 0.0,
        ExteriorRule::Function { field: f, .. } => f(&x[..grid.dim()]),
        ExteriorRule::Reflect => field[grid.reflect_lattice(grid.nearest_lattice(x))],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_d_counts() {
        let g = build_grid(1, 0.25, 1.0).unwrap();
        assert_eq!(g.len(), 9);
        assert_eq!(g.point(g.origin_index()), [0.0, 0.0]);
        let l: Vec<_> = lattice_ball(1, 1.0, 2.0).iter().map(|l| l[0]).collect();
        assert_eq!(l, vec![-2, -1, 0, 1, 2]);
        assert_eq!(lattice_ball(1, 0.5, 1.0).len(), 5);
    }

    #[test]
    fn two_d_matches_enumeration() {
        // brute force over the bounding box
        let pts = lattice_ball(2, 1.0, 1.5);
        let mut brute = 0;
        for i in -3i32..=3 {
            for j in -3i32..=3 {
                if ((i * i + j * j) as f64).sqrt() <= 1.5 {
                    brute += 1;
                }
            }
        }
        assert_eq!(pts.len(), brute);
        assert_eq!(pts.len(), 9);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(build_grid(3, 0.1, 1.0).is_err());
        assert!(build_grid(1, 0.0, 1.0).is_err());
        assert!(build_grid(1, -0.1, 1.0).is_err());
        assert!(build_grid(1, 1.0, 2.0).is_err());
        assert!(build_grid(2, 1.0, 1.5).is_err());
        assert!(build_grid(1, 1.0, 4.0).is_ok());
    }

    #[test]
    fn symmetric_and_deterministic() {
        let g = build_grid(2, 0.3, 2.0).unwrap();
        let h = build_grid(2, 0.3, 2.0).unwrap();
        assert_eq!(g, h);
        for l in g.lattice_points() {
            assert!(g.node_at([-l[0], -l[1]]).is_some());
        }
        for i in 0..g.len() {
            assert!(g.norm(i) <= 2.0 + 1e-12);
            assert_eq!(g.nearest_node(&g.point(i)), Some(i));
        }
    }

    #[test]
    fn extension_rules() {
        let g = build_grid(1, 1.0, 4.0).unwrap();
        let mut field = vec![0.0; g.len()];
        field[g.origin_index()] = 3.7;
        assert_eq!(evaluate_extended(&g, &field, &ExteriorRule::Zero, &[0.0]), 3.7);
        assert_eq!(evaluate_extended(&g, &field, &ExteriorRule::Zero, &[5.0]), 0.0);
        let v = ExteriorRule::function(|x| x[0].abs().powf(0.9), FarField::Lumped);
        assert_eq!(evaluate_extended(&g, &field, &v, &[5.0]), 5f64.powf(0.9));
        field[g.len() - 1] = 2.0;
        assert_eq!(evaluate_extended(&g, &field, &ExteriorRule::Reflect, &[7.0]), 2.0);
    }

    #[test]
    fn reflection_lands_on_boundary() {
        let g = build_grid(2, 0.5, 3.0).unwrap();
        let k = g.reflect_lattice([20, 1]);
        assert!(g.norm(k) > 3.0 - 0.5);
    }
}
