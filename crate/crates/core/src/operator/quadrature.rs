//! Lattice quadrature for the singular measure `dy/|y|^{d+2s}`.
//!
//! The plane (or line) is split into three parts:
//! * the core `|y| < hx`, replaced by a multiple of the nearest-neighbour
//!   second difference along each axis;
//! * the annulus `hx ≤ |y| ≤ R_far`, tiled by the lattice cells around each
//!   offset `y_j`;
//! * the tail `|y| > R_far`, carried as one closed-form mass.
//!
//! Cell weights are matched to the second moment of the measure,
//! `ŵ_j = ∫_cell |y|^{2−d−2s} dy / |y_j|²`, so quadratic functions are
//! integrated exactly. Plain cell masses lose the `hx^{2−2s}` consistency
//! order near the core when `s` is close to 1.

use std::f64::consts::PI;

use crate::error::{HjbError, Result};
use crate::grid::{Grid, Lattice, Point};
use crate::numerics::{sphere_measure, GaussRule};

/// One quadrature offset `y_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Offset {
    pub lattice: Lattice,
    pub point: Point,
    pub norm: f64,
    /// Moment-matched weight `ŵ_j`.
    pub weight: f64,
    /// Plain measure of the cell part inside the annulus, `∫_cell dy`.
    pub area: f64,
}

/// Offsets, core coefficient and tail mass for a given `(hx, s, R_far)`.
#[derive(Clone, Debug)]
pub struct JumpQuadrature {
    dim: usize,
    hx: f64,
    s: f64,
    r_far: f64,
    offsets: Vec<Offset>,
    mirror: Vec<usize>,
    core_coeff: f64,
    tail_mass: f64,
}

/// Builds the quadrature for `grid`; requires `R_far ≥ R + 1` and `s ∈ (½, 1)`.
pub fn build_quadrature(grid: &Grid, s: f64, r_far: f64) -> Result<JumpQuadrature> {
    if r_far < grid.radius() + 1.0 - 1e-12 {
        return Err(HjbError::InvalidQuadrature(format!(
            "tail radius {r_far} is below R + 1 = {}",
            grid.radius() + 1.0
        )));
    }
    JumpQuadrature::new(grid.dim(), grid.hx(), s, r_far)
}

impl JumpQuadrature {
    /// Quadrature without reference to a grid radius.
    pub fn new(dim: usize, hx: f64, s: f64, r_far: f64) -> Result<Self> {
        if !(s > 0.5 && s < 1.0) {
            return Err(HjbError::InvalidQuadrature(format!(
                "order s = {s} outside (1/2, 1)"
            )));
        }
        if !(hx > 0.0) || !(r_far >= 2.0 * hx) {
            return Err(HjbError::InvalidQuadrature(format!(
                "need hx > 0 and R_far ≥ 2·hx, got hx = {hx}, R_far = {r_far}"
            )));
        }
        let offsets = match dim {
            1 => offsets_1d(hx, s, r_far),
            2 => offsets_2d(hx, s, r_far),
            _ => {
                return Err(HjbError::InvalidQuadrature(format!(
                    "unsupported dimension {dim}"
                )))
            }
        };
        let mirror = mirror_table(&offsets);
        let e = 2.0 - 2.0 * s;
        let sd = sphere_measure(dim);
        let core_coeff = sd * hx.powf(e) / (dim as f64 * e * hx * hx);
        let tail_mass = sd * r_far.powf(-2.0 * s) / (2.0 * s);
        Ok(Self {
            dim,
            hx,
            s,
            r_far,
            offsets,
            mirror,
            core_coeff,
            tail_mass,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn order(&self) -> f64 {
        self.s
    }

    pub fn tail_radius(&self) -> f64 {
        self.r_far
    }

    pub fn offsets(&self) -> &[Offset] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Index of `−y_j`.
    pub fn mirror(&self, j: usize) -> usize {
        self.mirror[j]
    }

    /// Coefficient of `δ(u, x, hx·e_i)` for each axis `i`.
    pub fn core_coeff(&self) -> f64 {
        self.core_coeff
    }

    /// `∫_{|y|>R_far} |y|^{−d−2s} dy`.
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Mean radius of the tail measure, `R_far·2s/(2s−1)`.
    pub fn tail_mean_radius(&self) -> f64 {
        self.r_far * 2.0 * self.s / (2.0 * self.s - 1.0)
    }

    /// Sum of all cell weights.
    pub fn total_weight(&self) -> f64 {
        self.offsets.iter().map(|o| o.weight).sum()
    }

    /// Largest `|l_i|` over the offsets.
    pub fn extent(&self) -> i32 {
        self.offsets
            .iter()
            .map(|o| o.lattice[0].abs().max(o.lattice[1].abs()))
            .max()
            .unwrap_or(1)
            .max(1)
    }

    /// `∫_{|y|>R_far} |y|^{p−d−2s} dy`, finite for `p < 2s`.
    pub fn tail_power_moment(&self, p: f64) -> f64 {
        sphere_measure(self.dim) * self.r_far.powf(p - 2.0 * self.s) / (2.0 * self.s - p)
    }

    /// Unit directions used to sample the tail of exterior data: `±1` in 1-d,
    /// 16 equally spaced angles in 2-d.
    pub fn tail_directions(&self) -> Vec<Point> {
        match self.dim {
            1 => vec![[1.0, 0.0], [-1.0, 0.0]],
            _ => (0..16)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / 16.0;
                    [t.cos(), t.sin()]
                })
                .collect(),
        }
    }
}

fn offsets_1d(h: f64, s: f64, r_far: f64) -> Vec<Offset> {
    let e = 2.0 - 2.0 * s;
    let mut half = Vec::new();
    let mut j = 1i32;
    loop {
        let a = ((j as f64 - 0.5) * h).max(h);
        if a >= r_far - 1e-12 * h {
            break;
        }
        let b = ((j as f64 + 0.5) * h).min(r_far);
        let y = j as f64 * h;
        let weight = (b.powf(e) - a.powf(e)) / (e * y * y);
        half.push((j, weight, b - a));
        j += 1;
    }
    let mut out = Vec::with_capacity(2 * half.len());
    for &(j, w, area) in half.iter().rev() {
        out.push(offset([-j, 0], h, w, area));
    }
    for &(j, w, area) in &half {
        out.push(offset([j, 0], h, w, area));
    }
    out
}

fn offset(l: Lattice, h: f64, weight: f64, area: f64) -> Offset {
    let point = [l[0] as f64 * h, l[1] as f64 * h];
    Offset {
        lattice: l,
        point,
        norm: (point[0] * point[0] + point[1] * point[1]).sqrt(),
        weight,
        area,
    }
}

fn offsets_2d(h: f64, s: f64, r_far: f64) -> Vec<Offset> {
    let rule = GaussRule::new(16);
    let n = (r_far / h).ceil() as i32 + 1;
    let mut out = Vec::new();
    for i in -n..=n {
        for j in -n..=n {
            if i == 0 && j == 0 {
                continue;
            }
            let c = [i as f64 * h, j as f64 * h];
            let (near, far) = square_distance_range(c, 0.5 * h);
            if near > r_far || far < h {
                continue;
            }
            let m = cell_integral(&rule, c, 0.5 * h, h, r_far, -2.0 * s);
            if m <= 0.0 {
                continue;
            }
            let area = cell_integral(&rule, c, 0.5 * h, h, r_far, 0.0);
            let y2 = c[0] * c[0] + c[1] * c[1];
            out.push(offset([i, j], h, m / y2, area));
        }
    }
    out
}

fn square_distance_range(c: Point, half: f64) -> (f64, f64) {
    let mut near2 = 0.0;
    let mut far2 = 0.0;
    for k in 0..2 {
        let lo = c[k] - half;
        let hi = c[k] + half;
        let n = if lo > 0.0 {
            lo
        } else if hi < 0.0 {
            -hi
        } else {
            0.0
        };
        let f = lo.abs().max(hi.abs());
        near2 += n * n;
        far2 += f * f;
    }
    (near2.sqrt(), far2.sqrt())
}

/// `∫ |y|^e dy` over the square of centre `c` and half-width `half`
/// intersected with the annulus `r_min ≤ |y| ≤ r_max`, in polar coordinates.
/// The radial integral is exact; the angular one uses Gauss–Legendre on the
/// pieces between corner angles and circle crossings, where the integrand is
/// smooth. The square must not contain the origin.
pub(crate) fn cell_integral(
    rule: &GaussRule,
    c: Point,
    half: f64,
    r_min: f64,
    r_max: f64,
    e: f64,
) -> f64 {
    let phi = c[1].atan2(c[0]);
    let x0 = c[0] - half;
    let x1 = c[0] + half;
    let y0 = c[1] - half;
    let y1 = c[1] + half;
    let rel = |p: [f64; 2]| wrap(p[1].atan2(p[0]) - phi);

    let mut cuts: Vec<f64> = [[x0, y0], [x1, y0], [x0, y1], [x1, y1]]
        .iter()
        .map(|p| rel(*p))
        .collect();
    let lo = cuts.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = cuts.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for rho in [r_min, r_max] {
        for x in [x0, x1] {
            if rho * rho >= x * x {
                let y = (rho * rho - x * x).sqrt();
                for yy in [y, -y] {
                    if yy >= y0 && yy <= y1 {
                        cuts.push(rel([x, yy]));
                    }
                }
            }
        }
        for y in [y0, y1] {
            if rho * rho >= y * y {
                let x = (rho * rho - y * y).sqrt();
                for xx in [x, -x] {
                    if xx >= x0 && xx <= x1 {
                        cuts.push(rel([xx, y]));
                    }
                }
            }
        }
    }
    cuts.retain(|t| *t >= lo && *t <= hi);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);

    let p = e + 2.0;
    let anti = |r: f64| {
        if p.abs() < 1e-14 {
            r.ln()
        } else {
            r.powf(p) / p
        }
    };
    let mut total = 0.0;
    for w in cuts.windows(2) {
        if w[1] - w[0] <= 0.0 {
            continue;
        }
        total += rule.integrate(w[0], w[1], |t| {
            let th = phi + t;
            let d = [th.cos(), th.sin()];
            let (r_in, r_out) = ray_box(d, x0, x1, y0, y1);
            let a = r_in.max(r_min);
            let b = r_out.min(r_max);
            if b > a {
                anti(b) - anti(a)
            } else {
                0.0
            }
        });
    }
    total
}

fn wrap(t: f64) -> f64 {
    let mut t = t;
    while t > PI {
        t -= 2.0 * PI;
    }
    while t <= -PI {
        t += 2.0 * PI;
    }
    t
}

/// Parameter interval of the ray `r·d, r ≥ 0` inside the box.
fn ray_box(d: [f64; 2], x0: f64, x1: f64, y0: f64, y1: f64) -> (f64, f64) {
    let mut t0: f64 = 0.0;
    let mut t1 = f64::INFINITY;
    for (dk, lo, hi) in [(d[0], x0, x1), (d[1], y0, y1)] {
        if dk.abs() < 1e-300 {
            if lo > 0.0 || hi < 0.0 {
                return (0.0, 0.0);
            }
            continue;
        }
        let a = lo / dk;
        let b = hi / dk;
        t0 = t0.max(a.min(b));
        t1 = t1.min(a.max(b));
    }
    if t1 > t0 {
        (t0, t1)
    } else {
        (0.0, 0.0)
    }
}

fn mirror_table(offsets: &[Offset]) -> Vec<usize> {
    let mut index = std::collections::HashMap::with_capacity(offsets.len());
    for (k, o) in offsets.iter().enumerate() {
        index.insert(o.lattice, k);
    }
    offsets
        .iter()
        .map(|o| index[&[-o.lattice[0], -o.lattice[1]]])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_offsets_with_equal_weights() {
        for dim in [1, 2] {
            let q = JumpQuadrature::new(dim, 0.25, 0.75, 3.0).unwrap();
            for (j, o) in q.offsets().iter().enumerate() {
                let m = &q.offsets()[q.mirror(j)];
                assert_eq!(m.lattice, [-o.lattice[0], -o.lattice[1]]);
                assert!((m.weight - o.weight).abs() <= 1e-14 * o.weight);
                assert!(o.weight > 0.0);
            }
        }
    }

    #[test]
    fn tail_mass_closed_form() {
        let q = JumpQuadrature::new(1, 0.5, 0.6, 10.0).unwrap();
        let exact = 2.0 / 1.2 * 10f64.powf(-1.2);
        assert!((q.tail_mass() - exact).abs() / exact < 1e-12);
    }

    #[test]
    fn annulus_area_is_tiled() {
        let q = JumpQuadrature::new(2, 0.25, 0.7, 2.0).unwrap();
        let area: f64 = q.offsets().iter().map(|o| o.area).sum();
        let exact = PI * (4.0 - 0.0625);
        assert!((area - exact).abs() < 1e-10, "{area} vs {exact}");
        // second moment: Σ ŵ |y|² = ∫_{h<|y|<R} |y|^{-2s} dy
        let s = 0.7;
        let m2: f64 = q.offsets().iter().map(|o| o.weight * o.norm * o.norm).sum();
        let e = 2.0 - 2.0 * s;
        let exact = 2.0 * PI * (2f64.powf(e) - 0.25f64.powf(e)) / e;
        assert!((m2 - exact).abs() / exact < 1e-10);
    }

    #[test]
    fn rejects_short_tail() {
        let g = Grid::new(1, 0.5, 4.0).unwrap();
        assert!(build_quadrature(&g, 0.75, 4.5).is_err());
        assert!(build_quadrature(&g, 0.75, 5.0).is_ok());
        assert!(build_quadrature(&g, 0.4, 5.0).is_err());
    }
}
