//! Extremal operators `M^±` over the kernel class with factors in
//! `[(2−2s)λ, (2−2s)Λ]`, evaluated on the same quadrature as the assembled
//! jump operator so that `M^− u ≤ I u ≤ M^+ u` holds term by term.

use crate::error::{HjbError, Result};
use crate::grid::{ExteriorRule, Grid, Lattice};
use crate::operator::assemble::{tail_target, TailTarget};
use crate::operator::JumpQuadrature;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PucciSign {
    Plus,
    Minus,
}

fn extended(grid: &Grid, u: &[f64], ext: &ExteriorRule, l: Lattice) -> f64 {
    match grid.node_at(l) {
        Some(k) => u[k],
        None => match ext {
            ExteriorRule::Zero => 0.0,
            ExteriorRule::Function { field, .. } => {
                let z = grid.lattice_to_point(l);
                field(&z[..grid.dim()])
            }
            ExteriorRule::Reflect => u[grid.reflect_lattice(l)],
        },
    }
}

/// `M^+ u` or `M^− u` at every node.
pub fn pucci_extremal(
    q: &JumpQuadrature,
    grid: &Grid,
    u: &[f64],
    ext: &ExteriorRule,
    sign: PucciSign,
    lambda: f64,
    big_lambda: f64,
) -> Result<Vec<f64>> {
    if u.len() != grid.len() {
        return Err(HjbError::LengthMismatch {
            expected: grid.len(),
            got: u.len(),
        });
    }
    let e = 2.0 - 2.0 * q.order();
    let (up, down) = match sign {
        PucciSign::Plus => (e * big_lambda, e * lambda),
        PucciSign::Minus => (e * lambda, e * big_lambda),
    };
    let weigh = |delta: f64| {
        if delta >= 0.0 {
            up * delta
        } else {
            down * delta
        }
    };
    let mut out = vec![0.0; grid.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let l = grid.lattice(i);
        let ui = u[i];
        let val = |off: Lattice| extended(grid, u, ext, [l[0] + off[0], l[1] + off[1]]);
        let mut acc = 0.0;
        for y in q.offsets() {
            let m = [-y.lattice[0], -y.lattice[1]];
            let delta = (val(y.lattice) - ui) + (val(m) - ui);
            acc += y.weight * weigh(delta);
        }
        for k in 0..grid.dim() {
            let mut e1: Lattice = [0, 0];
            e1[k] = 1;
            let delta = (val(e1) - ui) + (val([-e1[0], -e1[1]]) - ui);
            acc += q.core_coeff() * weigh(delta);
        }
        let x = grid.point(i);
        let mean = match tail_target(grid, q, ext, &x) {
            TailTarget::Sink(m) => m,
            TailTarget::Nodes(nodes) => nodes.iter().map(|k| u[*k]).sum::<f64>() / nodes.len() as f64,
        };
        acc += q.tail_mass() * weigh(2.0 * (mean - ui));
        *o = acc;
    }
    Ok(out)
}
