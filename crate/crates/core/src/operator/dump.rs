//! JSON dump of assembled stencils.
//!
//! Layout (one object per `(node, control)` pair):
//!
//! ```json
//! {"node": 3, "control": "mild", "point": [-0.5],
//!  "entries": [{"target": 2, "offset": [-1], "weight": 1.25}, ...],
//!  "zeroth": -0.5, "diagonal": -7.1, "constant": 1.0, "exterior_mass": 0.0}
//! ```
//!
//! `target` is the node index, or `null` for the exterior sink; `offset` is
//! the jump offset in lattice units, or `null` for local and tail entries.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::operator::DiscreteOperator;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StencilEntry {
    pub target: Option<usize>,
    pub offset: Option<Vec<i32>>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StencilRow {
    pub node: usize,
    pub control: String,
    pub point: Vec<f64>,
    pub entries: Vec<StencilEntry>,
    pub zeroth: f64,
    pub diagonal: f64,
    pub constant: f64,
    pub exterior_mass: f64,
}

/// Rows of the given nodes for every control.
pub fn stencil_rows(op: &DiscreteOperator, nodes: &[usize]) -> Vec<StencilRow> {
    let d = op.grid().dim();
    let n = op.len();
    let mut out = Vec::new();
    for &i in nodes {
        for tau in 0..op.num_controls() {
            let st = op.stencil(tau);
            let entries = op
                .row_entries(tau, i)
                .into_iter()
                .filter(|e| e.2 != 0.0)
                .map(|(t, off, w)| StencilEntry {
                    target: (t < n).then_some(t),
                    offset: off.map(|o| o[..d].to_vec()),
                    weight: w,
                })
                .collect();
            out.push(StencilRow {
                node: i,
                control: st.label().to_string(),
                point: op.grid().point(i)[..d].to_vec(),
                entries,
                zeroth: st.zeroth()[i],
                diagonal: st.diagonal()[i],
                constant: st.constant()[i],
                exterior_mass: st.exterior_mass()[i],
            });
        }
    }
    out
}

/// Writes [`stencil_rows`] as a pretty-printed JSON array.
pub fn dump_stencils<W: Write>(op: &DiscreteOperator, nodes: &[usize], w: W) -> Result<()> {
    serde_json::to_writer_pretty(w, &stencil_rows(op, nodes))?;
    Ok(())
}
