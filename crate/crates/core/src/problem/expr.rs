//! Expression strings for user-supplied coefficient fields.
//!
//! Variables: `x1`, `x2` (state), `y1`, `y2` (jump offset, kernel fields
//! only), `r` (`|x|`) and `ry` (`|y|`). Functions: `sin cos tan exp ln sqrt abs
//! min max pow`. Operators `+ - * / ^` and the constants `pi`, `e`.

use std::str::FromStr;
use std::sync::Arc;

use meval::{ContextProvider, FuncEvalError};

use crate::error::{HjbError, Result};
use crate::grid::ScalarField;
use crate::problem::KernelField;

/// A parsed expression, shareable across threads.
#[derive(Clone, Debug)]
pub struct Expression {
    source: String,
    expr: meval::Expr,
}

struct Vars<'a> {
    x: &'a [f64],
    y: &'a [f64],
}

impl ContextProvider for Vars<'_> {
    fn get_var(&self, name: &str) -> Option<f64> {
        let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
        match name {
            "x1" => self.x.first().copied(),
            "x2" => Some(self.x.get(1).copied().unwrap_or(0.0)),
            "y1" => Some(self.y.first().copied().unwrap_or(0.0)),
            "y2" => Some(self.y.get(1).copied().unwrap_or(0.0)),
            "r" => Some(norm(self.x)),
            "ry" => Some(norm(self.y)),
            "pi" => Some(std::f64::consts::PI),
            "e" => Some(std::f64::consts::E),
            _ => None,
        }
    }

    fn eval_func(&self, name: &str, args: &[f64]) -> std::result::Result<f64, FuncEvalError> {
        let one = |f: fn(f64) -> f64| match args {
            [a] => Ok(f(*a)),
            _ => Err(FuncEvalError::NumberArgs(1)),
        };
        let two = |f: fn(f64, f64) -> f64| match args {
            [a, b] => Ok(f(*a, *b)),
            _ => Err(FuncEvalError::NumberArgs(2)),
        };
        match name {
            "sin" => one(f64::sin),
            "cos" => one(f64::cos),
            "tan" => one(f64::tan),
            "exp" => one(f64::exp),
            "ln" => one(f64::ln),
            "sqrt" => one(f64::sqrt),
            "abs" => one(f64::abs),
            "min" => two(f64::min),
            "max" => two(f64::max),
            "pow" => two(f64::powf),
            _ => Err(FuncEvalError::UnknownFunction),
        }
    }
}

const PROBE: [f64; 2] = [0.37, -0.21];

impl Expression {
    /// Parses and test-evaluates an expression.
    pub fn parse(source: &str) -> Result<Self> {
        let err = |reason: String| HjbError::Expression {
            expr: source.to_string(),
            reason,
        };
        let expr = meval::Expr::from_str(source).map_err(|e| err(e.to_string()))?;
        let out = Self {
            source: source.to_string(),
            expr,
        };
        out.expr
            .eval_with_context(Vars { x: &PROBE, y: &PROBE })
            .map_err(|e| err(e.to_string()))?;
        Ok(out)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Evaluates at state `x` and offset `y`; unknown names were rejected at
    /// parse time, so failures here only signal non-finite results.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        self.expr
            .eval_with_context(Vars { x, y })
            .unwrap_or(f64::NAN)
    }

    pub fn scalar_field(self) -> ScalarField {
        Arc::new(move |x| self.eval(x, &[]))
    }

    pub fn kernel_field(self) -> KernelField {
        Arc::new(move |x, y| self.eval(x, y))
    }
}

/// Parses `source` into a scalar field of the state.
pub fn parse_scalar(source: &str) -> Result<ScalarField> {
    Ok(Expression::parse(source)?.scalar_field())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evaluates_state_and_offset_variables() {
        let e = Expression::parse("x1^2 + 3*sin(y1) + r").unwrap();
        let v = e.eval(&[2.0], &[0.5]);
        assert!((v - (4.0 + 3.0 * 0.5f64.sin() + 2.0)).abs() < 1e-14);
        let f = parse_scalar("pow(1 + r^2, 0.25) + max(x1, x2)").unwrap();
        assert!((f(&[3.0, 4.0]) - (26f64.powf(0.25) + 4.0)).abs() < 1e-14);
    }

    #[test]
    fn rejects_unknown_names() {
        assert!(Expression::parse("x3 + 1").is_err());
        assert!(Expression::parse("foo(x1)").is_err());
        assert!(Expression::parse("1 +").is_err());
    }
}
