use std::fmt;
use std::ops;

use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

/// Expression tree over `t`, the state `x` and (for Hamiltonians only) the
/// costate `s`. Variable indices are zero-based internally and one-based in
/// JSON and in display.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Const(f64),
    T,
    X(usize),
    S(usize),
    Add(Vec<Expr>),
    Sub(Vec<Expr>),
    Mul(Vec<Expr>),
    Neg(Box<Expr>),
    Abs(Box<Expr>),
    Max(Vec<Expr>),
    Min(Vec<Expr>),
}

/// Which node kinds a document may use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dialect {
    /// `t`, `x`, arithmetic and `abs`.
    Candidate,
    /// Additionally `s`, `max` and `min`.
    Hamiltonian,
}

impl Expr {
    pub fn c(v: f64) -> Self {
        Expr::Const(v)
    }

    /// State coordinate, one-based.
    pub fn x(i: usize) -> Self {
        Expr::X(i - 1)
    }

    /// Costate coordinate, one-based.
    pub fn s(i: usize) -> Self {
        Expr::S(i - 1)
    }

    pub fn abs(self) -> Self {
        Expr::Abs(Box::new(self))
    }

    pub fn eval(&self, t: f64, x: &[f64], s: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::T => t,
            Expr::X(i) => x[*i],
            Expr::S(i) => s[*i],
            Expr::Add(a) => a.iter().map(|e| e.eval(t, x, s)).sum(),
            Expr::Sub(a) => {
                let first = a[0].eval(t, x, s);
                a[1..].iter().fold(first, |acc, e| acc - e.eval(t, x, s))
            }
            Expr::Mul(a) => a.iter().map(|e| e.eval(t, x, s)).product(),
            Expr::Neg(e) => -e.eval(t, x, s),
            Expr::Abs(e) => e.eval(t, x, s).abs(),
            Expr::Max(a) => a
                .iter()
                .map(|e| e.eval(t, x, s))
                .fold(f64::NEG_INFINITY, f64::max),
            Expr::Min(a) => a
                .iter()
                .map(|e| e.eval(t, x, s))
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn children(&self) -> &[Expr] {
        match self {
            Expr::Add(a) | Expr::Sub(a) | Expr::Mul(a) | Expr::Max(a) | Expr::Min(a) => a,
            Expr::Neg(e) | Expr::Abs(e) => std::slice::from_ref(e.as_ref()),
            _ => &[],
        }
    }

    pub fn contains_abs(&self) -> bool {
        matches!(self, Expr::Abs(_)) || self.children().iter().any(Expr::contains_abs)
    }

    pub fn mentions_x(&self) -> bool {
        matches!(self, Expr::X(_)) || self.children().iter().any(Expr::mentions_x)
    }

    pub fn mentions_t(&self) -> bool {
        matches!(self, Expr::T) || self.children().iter().any(Expr::mentions_t)
    }

    /// Parse a JSON node. `n` bounds the variable indices.
    pub fn from_json(v: &Value, n: usize, dialect: Dialect) -> Result<Self> {
        if let Some(c) = v.as_f64() {
            return finite(c).map(Expr::Const);
        }
        let obj = v
            .as_object()
            .ok_or_else(|| Error::Malformed(format!("expected an expression node, found {v}")))?;
        if let Some(c) = obj.get("const") {
            let c = c
                .as_f64()
                .ok_or_else(|| Error::Malformed(format!("const must be a number: {v}")))?;
            return finite(c).map(Expr::Const);
        }
        if let Some(var) = obj.get("var") {
            return parse_var(var, obj, n, dialect, v);
        }
        let op = obj
            .get("op")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Malformed(format!("node needs const, var or op: {v}")))?;
        let args = obj
            .get("args")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Malformed(format!("op '{op}' needs an args array")))?;
        let args: Vec<Expr> = args
            .iter()
            .map(|a| Expr::from_json(a, n, dialect))
            .collect::<Result<_>>()?;
        let arity = |want: usize| -> Result<()> {
            if args.len() == want {
                Ok(())
            } else {
                Err(Error::Malformed(format!(
                    "op '{op}' takes {want} argument(s), got {}",
                    args.len()
                )))
            }
        };
        let nonempty = || -> Result<()> {
            if args.is_empty() {
                Err(Error::Malformed(format!("op '{op}' needs arguments")))
            } else {
                Ok(())
            }
        };
        match op {
            "add" => nonempty().map(|_| Expr::Add(args)),
            "sub" => nonempty().map(|_| Expr::Sub(args)),
            "mul" => nonempty().map(|_| Expr::Mul(args)),
            "neg" => arity(1).map(|_| Expr::Neg(Box::new(args.into_iter().next().unwrap()))),
            "abs" => arity(1).map(|_| Expr::Abs(Box::new(args.into_iter().next().unwrap()))),
            "max" | "min" if dialect == Dialect::Hamiltonian => {
                nonempty()?;
                Ok(if op == "max" {
                    Expr::Max(args)
                } else {
                    Expr::Min(args)
                })
            }
            other => Err(Error::Malformed(format!("unsupported op '{other}'"))),
        }
    }

    pub fn to_json(&self) -> Value {
        let op = |name: &str, args: &[Expr]| {
            json!({"op": name, "args": args.iter().map(Expr::to_json).collect::<Vec<_>>()})
        };
        match self {
            Expr::Const(c) => json!({ "const": c }),
            Expr::T => json!({"var": "t"}),
            Expr::X(i) => json!({"var": "x", "i": i + 1}),
            Expr::S(i) => json!({"var": "s", "i": i + 1}),
            Expr::Add(a) => op("add", a),
            Expr::Sub(a) => op("sub", a),
            Expr::Mul(a) => op("mul", a),
            Expr::Max(a) => op("max", a),
            Expr::Min(a) => op("min", a),
            Expr::Neg(e) => op("neg", std::slice::from_ref(e)),
            Expr::Abs(e) => op("abs", std::slice::from_ref(e)),
        }
    }
}

fn finite(c: f64) -> Result<f64> {
    if c.is_finite() {
        Ok(c)
    } else {
        Err(Error::Malformed(format!("non-finite constant {c}")))
    }
}

fn parse_var(
    var: &Value,
    obj: &Map<String, Value>,
    n: usize,
    dialect: Dialect,
    whole: &Value,
) -> Result<Expr> {
    let name = var
        .as_str()
        .ok_or_else(|| Error::Malformed(format!("var must be a string: {whole}")))?;
    if name == "t" {
        return Ok(Expr::T);
    }
    let index = || -> Result<usize> {
        let i = obj
            .get("i")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Malformed(format!("var '{name}' needs a positive index i: {whole}")))?
            as usize;
        if i == 0 || i > n {
            Err(Error::IndexOutOfRange { index: i, n })
        } else {
            Ok(i - 1)
        }
    };
    match name {
        "x" => index().map(Expr::X),
        "s" if dialect == Dialect::Hamiltonian => index().map(Expr::S),
        other => Err(Error::Malformed(format!("unknown variable '{other}'"))),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |f: &mut fmt::Formatter<'_>, a: &[Expr], sep: &str| -> fmt::Result {
            write!(f, "(")?;
            for (k, e) in a.iter().enumerate() {
                if k > 0 {
                    write!(f, "{sep}")?;
                }
                write!(f, "{e}")?;
            }
            write!(f, ")")
        };
        match self {
            Expr::Const(c) => write!(f, "{c}"),
            Expr::T => write!(f, "t"),
            Expr::X(i) => write!(f, "x{}", i + 1),
            Expr::S(i) => write!(f, "s{}", i + 1),
            Expr::Add(a) => join(f, a, " + "),
            Expr::Sub(a) => join(f, a, " - "),
            Expr::Mul(a) => join(f, a, "*"),
            Expr::Neg(e) => write!(f, "-({e})"),
            Expr::Abs(e) => write!(f, "|{e}|"),
            Expr::Max(a) => {
                write!(f, "max")?;
                join(f, a, ", ")
            }
            Expr::Min(a) => {
                write!(f, "min")?;
                join(f, a, ", ")
            }
        }
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::Add(vec![self, rhs])
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::Sub(vec![self, rhs])
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::Mul(vec![self, rhs])
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::Neg(Box::new(self))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let e = Expr::T + Expr::x(1).abs() - Expr::x(2).abs();
        let back = Expr::from_json(&e.to_json(), 2, Dialect::Candidate).unwrap();
        assert_eq!(back, e);
        assert_eq!(e.to_string(), "((t + |x1|) - |x2|)");
    }

    #[test]
    fn rejects_bad_index_and_dialect() {
        let v = json!({"var": "x", "i": 3});
        assert!(matches!(
            Expr::from_json(&v, 2, Dialect::Candidate),
            Err(Error::IndexOutOfRange { index: 3, n: 2 })
        ));
        let v = json!({"var": "s", "i": 1});
        assert!(Expr::from_json(&v, 2, Dialect::Candidate).is_err());
        assert!(Expr::from_json(&v, 2, Dialect::Hamiltonian).is_ok());
        let v = json!({"op": "max", "args": [1.0]});
        assert!(Expr::from_json(&v, 2, Dialect::Candidate).is_err());
    }

    #[test]
    fn eval_matches_hand_value() {
        let e = Expr::T * (Expr::x(1).abs() - Expr::x(2).abs());
        assert_eq!(e.eval(0.5, &[-2.0, 1.0], &[]), 0.5);
        let h = -Expr::Max(vec![Expr::s(1).abs(), Expr::s(2).abs()]);
        assert_eq!(h.eval(0.0, &[], &[0.3, -0.7]), -0.7);
    }
}
