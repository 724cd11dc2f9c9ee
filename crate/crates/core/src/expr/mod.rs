//! Candidate functions: parsing, evaluation and the piecewise-polynomial form.

mod ast;
mod piecewise;
mod poly;

pub use ast::{Dialect, Expr};
pub use piecewise::{decompose, Hyperplane, Piece, PiecewiseForm, PointClass, SNAP_TOL};
pub use poly::Polynomial;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

/// State dimension and time horizon `[t0, theta0]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameFrame {
    pub n: usize,
    pub t0: f64,
    pub theta0: f64,
}

impl GameFrame {
    pub fn new(n: usize, t0: f64, theta0: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidFrame("n must be positive".into()));
        }
        if !(t0.is_finite() && theta0.is_finite() && t0 < theta0) {
            return Err(Error::InvalidFrame(format!("need t0 < theta0, got {t0}, {theta0}")));
        }
        Ok(Self { n, t0, theta0 })
    }

    pub fn horizon(&self) -> f64 {
        self.theta0 - self.t0
    }

    pub fn is_interior_time(&self, t: f64) -> bool {
        t > self.t0 && t < self.theta0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub t: f64,
    pub x: Vec<f64>,
}

impl Position {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        Self { t, x }
    }

    /// `(t, x1, ..., xn)` as one vector.
    pub fn coords(&self) -> Vec<f64> {
        std::iter::once(self.t).chain(self.x.iter().copied()).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub frame: GameFrame,
    pub expr: Expr,
}

impl Candidate {
    pub fn new(frame: GameFrame, expr: Expr) -> Result<Self> {
        check_vars(&expr, frame.n)?;
        Ok(Self { frame, expr })
    }

    pub fn parse(doc: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(doc)?;
        Self::from_json(&v)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let num = |key: &str| {
            v.get(key)
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::Malformed(format!("missing numeric field '{key}'")))
        };
        let n = v
            .get("n")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Malformed("missing integer field 'n'".into()))? as usize;
        let frame = GameFrame::new(n, num("t0")?, num("theta0")?)?;
        let node = v
            .get("expr")
            .ok_or_else(|| Error::Malformed("missing field 'expr'".into()))?;
        let expr = Expr::from_json(node, n, Dialect::Candidate)?;
        Ok(Self { frame, expr })
    }

    pub fn to_json(&self) -> Value {
        json!({
            "n": self.frame.n,
            "t0": self.frame.t0,
            "theta0": self.frame.theta0,
            "expr": self.expr.to_json(),
        })
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        self.expr.eval(t, x, &[])
    }

    pub fn eval_at(&self, p: &Position) -> f64 {
        self.eval(p.t, &p.x)
    }
}

fn check_vars(e: &Expr, n: usize) -> Result<()> {
    match e {
        Expr::X(i) if *i >= n => Err(Error::IndexOutOfRange { index: i + 1, n }),
        Expr::S(_) | Expr::Max(_) | Expr::Min(_) => Err(Error::Malformed(format!(
            "candidate may not use {e}"
        ))),
        _ => e.children().iter().try_for_each(|c| check_vars(c, n)),
    }
}
