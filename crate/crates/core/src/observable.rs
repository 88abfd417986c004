//! Test functions `f(x, y)` and expression-defined scalar functions of the state.

use std::fmt;
use std::sync::Arc;

use meval::{Context, ContextProvider, Expr};

use crate::error::{Error, Result};

pub type ObsFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A scalar function of the state `z = (x, y)`.
#[derive(Clone)]
pub struct Observable {
    pub name: String,
    f: ObsFn,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Observable({})", self.name)
    }
}

impl Observable {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Observable { name: name.into(), f: Arc::new(f) }
    }

    #[inline]
    pub fn eval(&self, z: &[f64]) -> f64 {
        (self.f)(z)
    }

    pub fn constant(c: f64) -> Self {
        Observable::new(format!("{c}"), move |_| c)
    }

    /// Coordinate `z[i]`.
    pub fn coordinate(i: usize) -> Self {
        Observable::new(format!("z{i}"), move |z| z[i])
    }

    /// Parses an expression in `x0.., y0..` (and the aliases `x`, `y`).
    pub fn parse(src: &str, m: usize, d: usize) -> Result<Self> {
        let e = Expression::parse(src, m, d)?;
        Ok(Observable::new(src, move |z| e.eval(0.0, z)))
    }
}

thread_local! {
    static BUILTINS: Context<'static> = Context::new();
}

struct StateVars<'a> {
    t: f64,
    z: &'a [f64],
    m: usize,
}

impl ContextProvider for StateVars<'_> {
    fn get_var(&self, name: &str) -> Option<f64> {
        match name {
            "t" => return Some(self.t),
            "x" => return (self.m > 0).then(|| self.z[0]),
            "y" => return self.z.get(self.m).copied(),
            _ => {}
        }
        let (head, idx) = name.split_at(1);
        let i: usize = idx.parse().ok()?;
        match head {
            "x" if i < self.m => Some(self.z[i]),
            "y" => self.z.get(self.m + i).copied(),
            _ => None,
        }
    }
}

/// A parsed arithmetic expression in `t`, `x0..x{m-1}`, `y0..y{d-1}`, with the
/// usual elementary functions (`tanh`, `sin`, `exp`, `abs`, `signum`, ...).
#[derive(Debug, Clone)]
pub struct Expression {
    expr: Expr,
    m: usize,
}

impl Expression {
    pub fn parse(src: &str, m: usize, d: usize) -> Result<Self> {
        let expr: Expr = src.parse().map_err(|e| Error::Evaluator(format!("cannot parse `{src}`: {e}")))?;
        let e = Expression { expr, m };
        let probe = vec![0.1; m + d];
        e.try_eval(0.0, &probe)
            .map_err(|err| Error::Evaluator(format!("cannot evaluate `{src}`: {err}")))?;
        Ok(e)
    }

    fn try_eval(&self, t: f64, z: &[f64]) -> std::result::Result<f64, meval::Error> {
        BUILTINS.with(|b| self.expr.eval_with_context((StateVars { t, z, m: self.m }, b)))
    }

    /// Evaluates at `(t, z)`; evaluation failures (already excluded at parse
    /// time) yield NaN.
    pub fn eval(&self, t: f64, z: &[f64]) -> f64 {
        self.try_eval(t, z).unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_state_variables() {
        let f = Observable::parse("x0 * y0 + tanh(x / 2)", 1, 1).unwrap();
        let z = [0.5, 3.0];
        assert!((f.eval(&z) - (1.5 + (0.25f64).tanh())).abs() < 1e-15);
    }

    #[test]
    fn unknown_variable_is_an_error() {
        assert!(Observable::parse("x3", 1, 1).is_err());
        assert!(Observable::parse("y0 +", 1, 1).is_err());
    }

    #[test]
    fn time_variable() {
        let e = Expression::parse("t * y1", 1, 2).unwrap();
        assert_eq!(e.eval(2.0, &[0.0, 1.0, 4.0]), 8.0);
    }
}
