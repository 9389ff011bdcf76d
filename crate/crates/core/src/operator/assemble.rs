//! Assembly and application of the per-control monotone stencils.
//!
//! Every stencil is stored in difference form,
//!
//! ```text
//! (L_τ u + c_τ u + g_τ)(x_i) = Σ_t w_it (u(t) − u(x_i)) + c_τ(x_i) u(x_i) + const_i,
//! ```
//!
//! with nonnegative weights `w_it`. Targets outside the ball resolve through
//! the exterior rule: to a sink of value zero (prescribed data is folded into
//! `const_i`) or, for reflection, to a boundary node. Jump targets carrying
//! prescribed data get their own slot, so that evaluating the operator sums
//! `w (f(z) − u(x_i))` rather than cancelling two large sums. The difference
//! form keeps `L_τ 1 = 0` exact in floating point.

use rayon::prelude::*;

use crate::error::{HjbError, Result};
use crate::grid::{ExteriorRule, FarField, Grid, Lattice, Point};
use crate::numerics::GaussRule;
use crate::operator::JumpQuadrature;
use crate::problem::{Control, ControlProblem, KernelFactor};

/// Which parts of `L_τ + c_τ` and `g_τ` to assemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Parts {
    pub jumps: bool,
    pub drift: bool,
    pub diffusion: bool,
    pub levy: bool,
    pub zeroth: bool,
    pub cost: bool,
}

impl Parts {
    pub const ALL: Parts = Parts {
        jumps: true,
        drift: true,
        diffusion: true,
        levy: true,
        zeroth: true,
        cost: true,
    };

    /// Only the integro-differential part without drift and diffusion.
    pub const NONLOCAL: Parts = Parts {
        jumps: true,
        drift: false,
        diffusion: false,
        levy: true,
        zeroth: false,
        cost: false,
    };
}

impl Default for Parts {
    fn default() -> Self {
        Parts::ALL
    }
}

#[derive(Clone, Debug)]
enum JumpRows {
    None,
    /// One weight per offset, shared by all nodes.
    Uniform(Vec<f64>),
    /// `nodes × offsets` weights, row-major.
    Tabulated(Vec<f64>),
}

/// Local (nearest-neighbour and tail) entries in compressed rows.
#[derive(Clone, Debug, Default)]
struct Rows {
    ptr: Vec<usize>,
    col: Vec<u32>,
    val: Vec<f64>,
}

impl Rows {
    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.ptr[i]..self.ptr[i + 1];
        self.col[r.clone()]
            .iter()
            .zip(&self.val[r])
            .map(|(c, v)| (*c as usize, *v))
    }
}

/// Assembled stencil of one control.
#[derive(Clone, Debug)]
pub struct ControlStencil {
    label: String,
    jump: JumpRows,
    local: Rows,
    zeroth: Vec<f64>,
    constant: Vec<f64>,
    /// `constant` without the prescribed data of jump targets.
    constant_local: Vec<f64>,
    diagonal: Vec<f64>,
    exterior_mass: Vec<f64>,
}

impl ControlStencil {
    pub fn label(&self) -> &str {
        &self.label
    }

    /// `c_τ(x_i)`.
    pub fn zeroth(&self) -> &[f64] {
        &self.zeroth
    }

    /// `g_τ(x_i)` plus folded exterior data.
    pub fn constant(&self) -> &[f64] {
        &self.constant
    }

    /// Diagonal of the linear part: `c_τ(x_i) − Σ_{t≠i} w_it`.
    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// Total weight whose target lies outside the ball (sink targets).
    pub fn exterior_mass(&self) -> &[f64] {
        &self.exterior_mass
    }
}

/// Per-control monotone stencils on a grid.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    grid: Grid,
    exterior: &'static str,
    box_half: i32,
    box_map: Vec<u32>,
    node_base: Vec<usize>,
    offset_delta: Vec<isize>,
    offset_lattice: Vec<Lattice>,
    /// Values behind the targets `len()..`: the zero sink, then exterior data
    /// per lookup-box position.
    exterior_values: Vec<f64>,
    controls: Vec<ControlStencil>,
}

struct BoxIndex {
    dim: usize,
    half: i32,
    width: usize,
}

impl BoxIndex {
    fn index(&self, l: Lattice) -> usize {
        let a = (l[0] + self.half) as usize;
        if self.dim == 1 {
            a
        } else {
            a * self.width + (l[1] + self.half) as usize
        }
    }

    fn delta(&self, o: Lattice) -> isize {
        if self.dim == 1 {
            o[0] as isize
        } else {
            o[0] as isize * self.width as isize + o[1] as isize
        }
    }

    fn len(&self) -> usize {
        if self.dim == 1 {
            self.width
        } else {
            self.width * self.width
        }
    }
}

/// Where the tail mass of one node goes.
#[derive(Clone, Debug)]
pub(crate) enum TailTarget {
    /// Sink with the given mean exterior value.
    Sink(f64),
    /// Equal shares on these nodes.
    Nodes(Vec<usize>),
}

/// Mean of the exterior data over the far field seen from `x`.
pub(crate) fn tail_target(grid: &Grid, q: &JumpQuadrature, ext: &ExteriorRule, x: &Point) -> TailTarget {
    let d = grid.dim();
    match ext {
        ExteriorRule::Zero => TailTarget::Sink(0.0),
        ExteriorRule::Function { field, far } => {
            let m = match far {
                FarField::Mean(c) => *c,
                FarField::Lumped => {
                    let r = q.tail_mean_radius();
                    let dirs = q.tail_directions();
                    let sum: f64 = dirs
                        .iter()
                        .map(|e| {
                            let z = [x[0] + r * e[0], x[1] + r * e[1]];
                            field(&z[..d])
                        })
                        .sum();
                    sum / dirs.len() as f64
                }
                FarField::Power { coeff, exponent } => {
                    // average of |x ± y|^p over the tail measure, to second order in |x|
                    let p = *exponent;
                    let x2 = x[0] * x[0] + x[1] * x[1];
                    let lead = q.tail_power_moment(p);
                    let corr = 0.5 * p * x2 * (1.0 + (p - 2.0) / d as f64) * q.tail_power_moment(p - 2.0);
                    coeff * (lead + corr) / q.tail_mass()
                }
            };
            TailTarget::Sink(m)
        }
        ExteriorRule::Reflect => {
            let far = grid.radius() + 2.0 * grid.hx();
            TailTarget::Nodes(
                q.tail_directions()
                    .iter()
                    .map(|e| grid.reflect_lattice(grid.nearest_lattice(&[far * e[0], far * e[1]])))
                    .collect(),
            )
        }
    }
}

struct RowBuilder {
    entries: Vec<(u32, f64)>,
    constant: f64,
}

impl DiscreteOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn exterior_kind(&self) -> &'static str {
        self.exterior
    }

    pub fn num_controls(&self) -> usize {
        self.controls.len()
    }

    pub fn stencil(&self, tau: usize) -> &ControlStencil {
        &self.controls[tau]
    }

    pub fn labels(&self) -> Vec<String> {
        self.controls.iter().map(|c| c.label.clone()).collect()
    }

    pub fn control_index(&self, label: &str) -> Result<usize> {
        self.controls
            .iter()
            .position(|c| c.label == label)
            .ok_or_else(|| HjbError::UnknownControl(label.to_string()))
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.len() {
            return Err(HjbError::LengthMismatch {
                expected: self.len(),
                got: u.len(),
            });
        }
        Ok(())
    }

    /// `u` followed by the exterior slots: their data, or zeros for the
    /// linear part alone.
    fn extended(&self, u: &[f64], data: bool) -> Vec<f64> {
        let mut e = Vec::with_capacity(u.len() + self.exterior_values.len());
        e.extend_from_slice(u);
        if data {
            e.extend_from_slice(&self.exterior_values);
        } else {
            e.resize(u.len() + self.exterior_values.len(), 0.0);
        }
        e
    }

    /// Linear part `Σ w (u_t − u_i) + c u_i` of control `tau` at node `i`.
    fn linear_at(&self, tau: usize, i: usize, ue: &[f64]) -> f64 {
        let st = &self.controls[tau];
        let ui = ue[i];
        let mut acc = 0.0;
        match &st.jump {
            JumpRows::None => {}
            JumpRows::Uniform(w) => {
                let base = self.node_base[i] as isize;
                for (wj, dj) in w.iter().zip(&self.offset_delta) {
                    let t = self.box_map[(base + dj) as usize] as usize;
                    acc += wj * (ue[t] - ui);
                }
            }
            JumpRows::Tabulated(w) => {
                let base = self.node_base[i] as isize;
                let m = self.offset_delta.len();
                let row = &w[i * m..(i + 1) * m];
                for (wj, dj) in row.iter().zip(&self.offset_delta) {
                    let t = self.box_map[(base + dj) as usize] as usize;
                    acc += wj * (ue[t] - ui);
                }
            }
        }
        for (t, w) in st.local.row(i) {
            acc += w * (ue[t] - ui);
        }
        acc + st.zeroth[i] * ui
    }

    /// `(L_τ u + c_τ u + g_τ)(x_i)` at every node.
    pub fn apply(&self, tau: usize, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u)?;
        if tau >= self.controls.len() {
            return Err(HjbError::UnknownControl(format!("#{tau}")));
        }
        let ue = self.extended(u, true);
        let c = &self.controls[tau].constant_local;
        Ok((0..self.len())
            .into_par_iter()
            .with_min_len(64)
            .map(|i| self.linear_at(tau, i, &ue) + c[i])
            .collect())
    }

    pub fn apply_label(&self, label: &str, u: &[f64]) -> Result<Vec<f64>> {
        self.apply(self.control_index(label)?, u)
    }

    /// Pointwise minimum over controls and the argmin policy; ties go to the
    /// lowest control index.
    pub fn apply_inf(&self, u: &[f64]) -> Result<(Vec<f64>, Vec<usize>)> {
        self.check_len(u)?;
        let ue = self.extended(u, true);
        let pairs: Vec<(f64, usize)> = (0..self.len())
            .into_par_iter()
            .with_min_len(64)
            .map(|i| {
                let mut best = (f64::INFINITY, 0);
                for tau in 0..self.controls.len() {
                    let v = self.linear_at(tau, i, &ue) + self.controls[tau].constant_local[i];
                    if v < best.0 {
                        best = (v, tau);
                    }
                }
                best
            })
            .collect();
        Ok(pairs.into_iter().unzip())
    }

    /// Linear part of the frozen-policy operator (no constant term).
    pub fn apply_policy_linear(&self, policy: &[usize], u: &[f64]) -> Vec<f64> {
        let ue = self.extended(u, false);
        (0..self.len())
            .into_par_iter()
            .with_min_len(64)
            .map(|i| self.linear_at(policy[i], i, &ue))
            .collect()
    }

    /// Frozen-policy operator including the constant term.
    pub fn apply_policy(&self, policy: &[usize], u: &[f64]) -> Vec<f64> {
        let ue = self.extended(u, true);
        (0..self.len())
            .into_par_iter()
            .with_min_len(64)
            .map(|i| self.linear_at(policy[i], i, &ue) + self.controls[policy[i]].constant_local[i])
            .collect()
    }

    pub fn policy_constant(&self, policy: &[usize]) -> Vec<f64> {
        policy
            .iter()
            .enumerate()
            .map(|(i, &t)| self.controls[t].constant[i])
            .collect()
    }

    pub fn policy_diagonal(&self, policy: &[usize]) -> Vec<f64> {
        policy
            .iter()
            .enumerate()
            .map(|(i, &t)| self.controls[t].diagonal[i])
            .collect()
    }

    /// Largest `|diagonal|` over all controls and nodes.
    pub fn max_diagonal(&self) -> f64 {
        self.controls
            .iter()
            .flat_map(|c| c.diagonal.iter())
            .fold(0.0f64, |m, d| m.max(d.abs()))
    }

    /// `max_τ max_i c_τ(x_i)`.
    pub fn max_zeroth(&self) -> f64 {
        self.controls
            .iter()
            .flat_map(|c| c.zeroth.iter())
            .fold(f64::NEG_INFINITY, |m, c| m.max(*c))
    }

    /// Adds `delta` to `c_τ` of every control (a change of discount).
    pub fn shift_zeroth(&mut self, delta: f64) {
        for c in &mut self.controls {
            c.zeroth.iter_mut().for_each(|z| *z += delta);
            c.diagonal.iter_mut().for_each(|z| *z += delta);
        }
    }

    /// Adds `delta` to the constant term of every control.
    pub fn shift_constant(&mut self, delta: f64) {
        for c in &mut self.controls {
            c.constant.iter_mut().for_each(|z| *z += delta);
            c.constant_local.iter_mut().for_each(|z| *z += delta);
        }
    }

    /// Every `(target, weight)` of control `tau` at node `i`; targets from
    /// `len()` on lie outside the ball.
    pub fn row_entries(&self, tau: usize, i: usize) -> Vec<(usize, Option<Lattice>, f64)> {
        let st = &self.controls[tau];
        let mut out = Vec::new();
        let base = self.node_base[i] as isize;
        let m = self.offset_delta.len();
        let mut push_jump = |j: usize, w: f64| {
            let t = self.box_map[(base + self.offset_delta[j]) as usize] as usize;
            out.push((t, Some(self.offset_lattice[j]), w));
        };
        match &st.jump {
            JumpRows::None => {}
            JumpRows::Uniform(w) => w.iter().enumerate().for_each(|(j, wj)| push_jump(j, *wj)),
            JumpRows::Tabulated(w) => w[i * m..(i + 1) * m]
                .iter()
                .enumerate()
                .for_each(|(j, wj)| push_jump(j, *wj)),
        }
        for (t, w) in st.local.row(i) {
            out.push((t, None, w));
        }
        out
    }

    /// Dense matrix of the linear part of control `tau` (test sizes only).
    pub fn dense_linear(&self, tau: usize) -> Vec<Vec<f64>> {
        let n = self.len();
        let mut a = vec![vec![0.0; n]; n];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] += self.controls[tau].zeroth[i];
            for (t, _, w) in self.row_entries(tau, i) {
                row[i] -= w;
                if t < n {
                    row[t] += w;
                }
            }
        }
        a
    }
}

/// Assembles all parts of `L_τ + c_τ` and `g_τ` with the given exterior rule.
pub fn assemble(
    p: &ControlProblem,
    grid: &Grid,
    q: Option<&JumpQuadrature>,
    ext: &ExteriorRule,
) -> Result<DiscreteOperator> {
    assemble_parts(p, grid, q, ext, Parts::ALL)
}

/// As [`assemble`], restricted to `parts`.
pub fn assemble_parts(
    p: &ControlProblem,
    grid: &Grid,
    q: Option<&JumpQuadrature>,
    ext: &ExteriorRule,
    parts: Parts,
) -> Result<DiscreteOperator> {
    let d = grid.dim();
    if p.dim != d {
        return Err(HjbError::InvalidProblem(format!(
            "problem dimension {} differs from grid dimension {d}",
            p.dim
        )));
    }
    let needs_q = (parts.jumps && p.kernel.is_some())
        || (parts.levy && p.controls.iter().any(|c| c.levy.is_some()));
    if needs_q && q.is_none() {
        return Err(HjbError::InvalidQuadrature(
            "problem has a nonlocal part but no quadrature was given".into(),
        ));
    }
    if let (Some(q), Some(k)) = (q, p.kernel) {
        if (q.order() - k.s).abs() > 1e-15 || q.dim() != d || (q.hx() - grid.hx()).abs() > 1e-15 {
            return Err(HjbError::InvalidQuadrature(format!(
                "quadrature (d={}, hx={}, s={}) does not match problem/grid (d={d}, hx={}, s={})",
                q.dim(),
                q.hx(),
                q.order(),
                grid.hx(),
                k.s
            )));
        }
    }
    let n = grid.len();
    let extent = q.map_or(1, |q| q.extent()) + 1;
    let half = grid.half_width() + extent;
    let bx = BoxIndex {
        dim: d,
        half,
        width: (2 * half + 1) as usize,
    };
    let mut box_map = vec![n as u32; bx.len()];
    let mut exterior_values = vec![0.0];
    let data = match ext {
        ExteriorRule::Function { field, .. } if q.is_some() && (parts.jumps || parts.levy) => {
            exterior_values.resize(bx.len() + 1, 0.0);
            Some(field)
        }
        _ => None,
    };
    for a in -half..=half {
        let bs: Vec<i32> = if d == 1 { vec![0] } else { (-half..=half).collect() };
        for b in bs {
            let l = [a, b];
            let k = bx.index(l);
            let t = match (grid.node_at(l), ext, data) {
                (Some(i), _, _) => i,
                (None, ExteriorRule::Reflect, _) => grid.reflect_lattice(l),
                (None, _, Some(f)) => {
                    exterior_values[k + 1] = f(&grid.lattice_to_point(l)[..d]);
                    n + 1 + k
                }
                (None, _, None) => n,
            };
            box_map[k] = t as u32;
        }
    }
    let node_base: Vec<usize> = grid.lattice_points().iter().map(|l| bx.index(*l)).collect();
    let (offset_delta, offset_lattice) = match q {
        Some(q) if parts.jumps || parts.levy => (
            q.offsets().iter().map(|o| bx.delta(o.lattice)).collect(),
            q.offsets().iter().map(|o| o.lattice).collect(),
        ),
        _ => (Vec::new(), Vec::new()),
    };

    let points: Vec<Point> = grid.points().collect();
    let tails: Vec<TailTarget> = match q {
        Some(q) => points.iter().map(|x| tail_target(grid, q, ext, x)).collect(),
        None => vec![TailTarget::Sink(0.0); n],
    };
    let ctx = Ctx {
        p,
        grid,
        q,
        ext,
        parts,
        box_map: &box_map,
        node_base: &node_base,
        offset_delta: &offset_delta,
        points: &points,
        tails: &tails,
    };
    let controls = p
        .controls
        .iter()
        .enumerate()
        .map(|(tau, c)| ctx.control(tau, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(DiscreteOperator {
        grid: grid.clone(),
        exterior: ext.kind(),
        box_half: half,
        box_map,
        node_base,
        offset_delta,
        offset_lattice,
        exterior_values,
        controls,
    })
}

struct Ctx<'a> {
    p: &'a ControlProblem,
    grid: &'a Grid,
    q: Option<&'a JumpQuadrature>,
    ext: &'a ExteriorRule,
    parts: Parts,
    box_map: &'a [u32],
    node_base: &'a [usize],
    offset_delta: &'a [isize],
    points: &'a [Point],
    tails: &'a [TailTarget],
}

impl Ctx<'_> {
    fn monotone(&self, label: &str, node: usize, offset: Lattice, w: f64) -> Result<f64> {
        if w >= 0.0 && w.is_finite() {
            Ok(w)
        } else {
            Err(HjbError::Monotonicity {
                node,
                control: label.to_string(),
                offset: offset[..self.grid.dim()].to_vec(),
                weight: w,
            })
        }
    }

    fn target(&self, i: usize, off: Lattice) -> (usize, Point) {
        let l = self.grid.lattice(i);
        let t = [l[0] + off[0], l[1] + off[1]];
        (
            self.grid.node_at(t).unwrap_or_else(|| match self.ext {
                ExteriorRule::Reflect => self.grid.reflect_lattice(t),
                _ => self.grid.len(),
            }),
            self.grid.lattice_to_point(t),
        )
    }

    /// Adds weight `w` towards lattice offset `off` from node `i`.
    fn push(&self, row: &mut RowBuilder, i: usize, off: Lattice, w: f64) {
        if w == 0.0 {
            return;
        }
        let (t, z) = self.target(i, off);
        row.entries.push((t as u32, w));
        if t == self.grid.len() {
            if let ExteriorRule::Function { field, .. } = self.ext {
                row.constant += w * field(&z[..self.grid.dim()]);
            }
        }
    }

    fn push_tail(&self, row: &mut RowBuilder, i: usize, w: f64) {
        if w == 0.0 {
            return;
        }
        match &self.tails[i] {
            TailTarget::Sink(m) => {
                row.entries.push((self.grid.len() as u32, w));
                row.constant += w * m;
            }
            TailTarget::Nodes(nodes) => {
                let share = w / nodes.len() as f64;
                for k in nodes {
                    row.entries.push((*k as u32, share));
                }
            }
        }
    }

    fn control(&self, tau: usize, c: &Control) -> Result<ControlStencil> {
        let d = self.grid.dim();
        let n = self.grid.len();
        let h = self.grid.hx();
        let label = c.label.as_str();
        let jumps_on = self.parts.jumps && self.p.kernel.is_some();
        let levy_on = self.parts.levy && c.levy.is_some();

        // nonlocal weights per offset
        let jump = match self.q {
            Some(q) if jumps_on || levy_on => {
                if !levy_on {
                    if let KernelFactor::Constant(k) = c.kernel {
                        let w: Vec<f64> = q.offsets().iter().map(|o| 2.0 * k * o.weight).collect();
                        for (j, wj) in w.iter().enumerate() {
                            self.monotone(label, 0, q.offsets()[j].lattice, *wj)?;
                        }
                        JumpRows::Uniform(w)
                    } else {
                        JumpRows::Tabulated(self.tabulate(c, q, jumps_on, false)?)
                    }
                } else {
                    JumpRows::Tabulated(self.tabulate(c, q, jumps_on, true)?)
                }
            }
            _ => JumpRows::None,
        };

        let rule = GaussRule::new(16);
        let mut ptr = vec![0usize];
        let mut col = Vec::new();
        let mut val = Vec::new();
        let mut constant = vec![0.0; n];
        let mut zeroth = vec![0.0; n];
        for i in 0..n {
            let x = &self.points[i][..d];
            let mut row = RowBuilder {
                entries: Vec::new(),
                constant: 0.0,
            };
            if self.parts.cost {
                row.constant += self.p.cost(tau, x);
            }
            if self.parts.zeroth {
                zeroth[i] = self.p.zeroth(tau, x);
            }
            let mut drift = if self.parts.drift { c.drift_at(x) } else { [0.0; 2] };
            let mut axis = [0.0; 2];
            let mut tail_w = 0.0;

            if let (true, Some(q)) = (jumps_on, self.q) {
                let kc = q.core_coeff();
                for (k, ax) in axis.iter_mut().enumerate().take(d) {
                    let mut e = [0.0; 2];
                    e[k] = h;
                    let kp = c.kernel.eval(x, &e[..d]);
                    e[k] = -h;
                    let km = c.kernel.eval(x, &e[..d]);
                    *ax += kc * 0.5 * (kp + km);
                }
                let dirs = q.tail_directions();
                let r = q.tail_radius();
                let kt = dirs
                    .iter()
                    .map(|e| c.kernel.eval(x, &[r * e[0], r * e[1]][..d]))
                    .sum::<f64>()
                    / dirs.len() as f64;
                tail_w += 2.0 * q.tail_mass() * kt;
            }
            if let (true, Some(q), Some(kf)) = (levy_on, self.q, c.levy.as_ref()) {
                let (core, comp, tail) = levy_local(&rule, q, x, kf.as_ref());
                for k in 0..d {
                    axis[k] += core[k] / (h * h);
                    drift[k] -= comp[k];
                }
                tail_w += tail;
            }
            let mut diag_pairs = [0.0; 2];
            if self.parts.diffusion {
                if let Some(a) = &c.diffusion {
                    let m = a(x);
                    if d == 1 {
                        axis[0] += m[0][0] / (h * h);
                    } else {
                        let a12 = 0.5 * (m[0][1] + m[1][0]);
                        if m[0][0] < a12.abs() || m[1][1] < a12.abs() {
                            return Err(HjbError::NotDiagonallyDominant {
                                control: label.to_string(),
                                node: i,
                            });
                        }
                        axis[0] += (m[0][0] - a12.abs()) / (h * h);
                        axis[1] += (m[1][1] - a12.abs()) / (h * h);
                        if a12 >= 0.0 {
                            diag_pairs[0] = a12 / (h * h);
                        } else {
                            diag_pairs[1] = -a12 / (h * h);
                        }
                    }
                }
            }
            for k in 0..d {
                let mut e: Lattice = [0, 0];
                e[k] = 1;
                let w = self.monotone(label, i, e, axis[k])?;
                self.push(&mut row, i, e, w);
                self.push(&mut row, i, [-e[0], -e[1]], w);
                if drift[k] > 0.0 {
                    self.push(&mut row, i, e, self.monotone(label, i, e, drift[k] / h)?);
                } else if drift[k] < 0.0 {
                    self.push(&mut row, i, [-e[0], -e[1]], self.monotone(label, i, e, -drift[k] / h)?);
                }
            }
            if diag_pairs[0] > 0.0 {
                self.push(&mut row, i, [1, 1], diag_pairs[0]);
                self.push(&mut row, i, [-1, -1], diag_pairs[0]);
            }
            if diag_pairs[1] > 0.0 {
                self.push(&mut row, i, [1, -1], diag_pairs[1]);
                self.push(&mut row, i, [-1, 1], diag_pairs[1]);
            }
            self.push_tail(&mut row, i, tail_w);

            // merge duplicate targets
            row.entries.sort_by_key(|e| e.0);
            let mut last = u32::MAX;
            for (t, w) in row.entries {
                if t == last {
                    *val.last_mut().unwrap() += w;
                } else {
                    col.push(t);
                    val.push(w);
                    last = t;
                }
            }
            ptr.push(col.len());
            constant[i] = row.constant;
        }
        let local = Rows { ptr, col, val };
        let constant_local = constant.clone();

        // exterior data for nonlocal targets outside the ball
        if let (ExteriorRule::Function { field, .. }, Some(q)) = (self.ext, self.q) {
            if !matches!(jump, JumpRows::None) {
                for (i, ci) in constant.iter_mut().enumerate() {
                    let base = self.node_base[i] as isize;
                    let l = self.grid.lattice(i);
                    for (j, o) in q.offsets().iter().enumerate() {
                        if self.box_map[(base + self.offset_delta[j]) as usize] as usize >= n {
                            let w = match &jump {
                                JumpRows::Uniform(w) => w[j],
                                JumpRows::Tabulated(w) => w[i * q.len() + j],
                                JumpRows::None => 0.0,
                            };
                            let z = self
                                .grid
                                .lattice_to_point([l[0] + o.lattice[0], l[1] + o.lattice[1]]);
                            *ci += w * field(&z[..d]);
                        }
                    }
                }
            }
        }

        // diagonal and exterior mass
        let mut diagonal = vec![0.0; n];
        let mut exterior_mass = vec![0.0; n];
        for i in 0..n {
            let mut off = 0.0;
            let mut ext = 0.0;
            let mut add = |t: usize, w: f64| {
                if t != i {
                    off += w;
                }
                if t >= n {
                    ext += w;
                }
            };
            let base = self.node_base[i] as isize;
            match &jump {
                JumpRows::None => {}
                JumpRows::Uniform(w) => {
                    for (wj, dj) in w.iter().zip(self.offset_delta) {
                        add(self.box_map[(base + dj) as usize] as usize, *wj);
                    }
                }
                JumpRows::Tabulated(w) => {
                    let m = self.offset_delta.len();
                    for (wj, dj) in w[i * m..(i + 1) * m].iter().zip(self.offset_delta) {
                        add(self.box_map[(base + dj) as usize] as usize, *wj);
                    }
                }
            }
            for (t, w) in local.row(i) {
                add(t, w);
            }
            diagonal[i] = zeroth[i] - off;
            exterior_mass[i] = ext;
        }

        Ok(ControlStencil {
            label: c.label.clone(),
            jump,
            local,
            zeroth,
            constant,
            constant_local,
            diagonal,
            exterior_mass,
        })
    }

    fn tabulate(&self, c: &Control, q: &JumpQuadrature, jumps: bool, levy: bool) -> Result<Vec<f64>> {
        let d = self.grid.dim();
        let m = q.len();
        let rows: Vec<Result<Vec<f64>>> = (0..self.grid.len())
            .into_par_iter()
            .map(|i| {
                let x = &self.points[i][..d];
                let mut row = vec![0.0; m];
                if jumps {
                    let k: Vec<f64> = q.offsets().iter().map(|o| c.kernel.eval(x, &o.point[..d])).collect();
                    for (j, o) in q.offsets().iter().enumerate() {
                        let w = o.weight * (k[j] + k[q.mirror(j)]);
                        row[j] = self.monotone(&c.label, i, o.lattice, w)?;
                    }
                }
                if levy {
                    let kf = c.levy.as_ref().unwrap();
                    for (j, o) in q.offsets().iter().enumerate() {
                        let w = kf(x, &o.point[..d]) * o.area;
                        row[j] += self.monotone(&c.label, i, o.lattice, w)?;
                    }
                }
                Ok(row)
            })
            .collect();
        let mut out = Vec::with_capacity(self.grid.len() * m);
        for r in rows {
            out.extend(r?);
        }
        Ok(out)
    }
}

/// Core second moments per axis (`½∫_{|y|<h} y_k² K`), compensator
/// `Σ_{h≤|y_j|<1} m_j y_j` and tail mass `∫_{|y|>R_far} K` of a Lévy density.
fn levy_local(
    rule: &GaussRule,
    q: &JumpQuadrature,
    x: &[f64],
    k: &(dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync),
) -> ([f64; 2], [f64; 2], f64) {
    let d = q.dim();
    let h = q.hx();
    let dirs: Vec<Point> = match d {
        1 => vec![[1.0, 0.0], [-1.0, 0.0]],
        _ => (0..32)
            .map(|a| {
                let t = 2.0 * std::f64::consts::PI * (a as f64 + 0.5) / 32.0;
                [t.cos(), t.sin()]
            })
            .collect(),
    };
    let dtheta = if d == 1 { 1.0 } else { 2.0 * std::f64::consts::PI / dirs.len() as f64 };
    let mut core = [0.0; 2];
    for e in &dirs {
        // dyadic panels towards the singularity at 0
        let mut acc = 0.0;
        let mut b = h;
        for _ in 0..60 {
            let a = 0.5 * b;
            acc += rule.integrate(a, b, |r| {
                let y = [r * e[0], r * e[1]];
                r * r * k(x, &y[..d]) * r.powi(d as i32 - 1)
            });
            b = a;
        }
        for kk in 0..d {
            core[kk] += 0.5 * acc * e[kk] * e[kk] * dtheta;
        }
    }
    let mut comp = [0.0; 2];
    for o in q.offsets() {
        if o.norm < 1.0 {
            let m = k(x, &o.point[..d]) * o.area;
            comp[0] += m * o.point[0];
            comp[1] += m * o.point[1];
        }
    }
    let r0 = q.tail_radius();
    let mut tail = 0.0;
    for e in &dirs {
        // r = r0 / t on dyadic panels in t
        let mut acc = 0.0;
        let mut b = 1.0;
        for _ in 0..60 {
            let a = 0.5 * b;
            acc += rule.integrate(a, b, |t| {
                let r = r0 / t;
                let y = [r * e[0], r * e[1]];
                k(x, &y[..d]) * r.powi(d as i32 - 1) * r0 / (t * t)
            });
            b = a;
        }
        tail += acc * dtheta;
    }
    (core, comp, tail)
}

impl DiscreteOperator {
    /// Half-width of the lookup box (diagnostics).
    pub fn lookup_half_width(&self) -> i32 {
        self.box_half
    }
}
