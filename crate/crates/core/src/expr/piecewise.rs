use super::{Candidate, Expr, GameFrame, Polynomial, Position};
use crate::error::{Error, Result};
use crate::geometry::{dot, norm};
use crate::lp::{Goal, LinearProgram, LpOutcome, Sense};

/// Distance below which a point counts as lying on a kink hyperplane.
pub const SNAP_TOL: f64 = 1e-9;

/// Largest number of distinct kink hyperplanes accepted.
const MAX_HYPERPLANES: usize = 24;

/// Kink hyperplane `normal · (t, x) + offset = 0` with a unit normal whose
/// first nonzero entry is positive.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Hyperplane {
    /// Signed distance of `(t, x)` to the hyperplane.
    pub fn eval(&self, coords: &[f64]) -> f64 {
        dot(&self.normal, coords) + self.offset
    }

    pub fn is_time_only(&self) -> bool {
        self.normal[1..].iter().all(|v| *v == 0.0)
    }
}

/// One polynomial piece, valid where each hyperplane has the recorded sign.
#[derive(Clone, Debug)]
pub struct Piece {
    pub signs: Vec<i8>,
    pub poly: Polynomial,
    /// Partial derivatives in `t, x1, ..., xn`.
    pub grad: Vec<Polynomial>,
}

impl Piece {
    pub fn value(&self, coords: &[f64]) -> f64 {
        self.poly.eval(coords)
    }

    /// `(∂t, ∂x1, ..., ∂xn)` at `coords`.
    pub fn gradient(&self, coords: &[f64]) -> Vec<f64> {
        self.grad.iter().map(|g| g.eval(coords)).collect()
    }
}

#[derive(Clone, Debug)]
enum AbsNode {
    Plane { index: usize, orient: f64, arg: Polynomial },
    Constant(f64),
}

#[derive(Clone, Debug)]
pub struct PiecewiseForm {
    pub frame: GameFrame,
    pub hyperplanes: Vec<Hyperplane>,
    pub pieces: Vec<Piece>,
    abs_nodes: Vec<AbsNode>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PointClass {
    Smooth { piece: usize },
    /// `on` lists the hyperplanes through the point, `active` the pieces whose
    /// closure contains it.
    Nonsmooth { on: Vec<usize>, active: Vec<usize> },
}

/// Split a candidate into polynomial pieces over the sign arrangement of its
/// `abs` arguments. Every argument must be abs-free and affine in `(t, x)`.
pub fn decompose(c: &Candidate) -> Result<PiecewiseForm> {
    let nvars = c.frame.n + 1;
    let mut raw: Vec<(Polynomial, String)> = Vec::new();
    lower(&c.expr, nvars, &mut |arg| {
        if arg.contains_abs() {
            return Err(Error::NonAffineAbs {
                subtree: format!("|{arg}|"),
            });
        }
        let p = lower(arg, nvars, &mut |_| unreachable!("abs-free"))?;
        if p.degree() > 1 {
            return Err(Error::NonAffineAbs {
                subtree: format!("|{arg}|"),
            });
        }
        raw.push((p, format!("|{arg}|")));
        Ok(Polynomial::zero(nvars))
    })?;

    let mut hyperplanes: Vec<Hyperplane> = Vec::new();
    let mut abs_nodes = Vec::new();
    for (p, _) in raw {
        let (c0, lin) = p.as_affine().expect("degree checked");
        let len = norm(&lin);
        if len == 0.0 {
            abs_nodes.push(AbsNode::Constant(c0.abs()));
            continue;
        }
        let lead = lin.iter().find(|v| v.abs() > 1e-14 * len).copied().unwrap_or(1.0);
        let orient = lead.signum();
        let k = len * orient;
        let h = Hyperplane {
            normal: lin.iter().map(|v| v / k).collect(),
            offset: c0 / k,
        };
        let index = match hyperplanes.iter().position(|g| same_plane(g, &h)) {
            Some(i) => i,
            None => {
                hyperplanes.push(h);
                hyperplanes.len() - 1
            }
        };
        abs_nodes.push(AbsNode::Plane {
            index,
            orient,
            arg: p,
        });
    }
    if hyperplanes.len() > MAX_HYPERPLANES {
        return Err(Error::Malformed(format!(
            "{} distinct kink hyperplanes exceed the limit of {MAX_HYPERPLANES}",
            hyperplanes.len()
        )));
    }

    let mut form = PiecewiseForm {
        frame: c.frame,
        hyperplanes,
        pieces: Vec::new(),
        abs_nodes,
    };
    let mut patterns = Vec::new();
    let mut prefix = Vec::new();
    form.enumerate_regions(&mut prefix, &mut patterns)?;
    for signs in patterns {
        let poly = form.piece_polynomial(&c.expr, &signs)?;
        let grad = (0..nvars).map(|i| poly.partial(i)).collect();
        form.pieces.push(Piece { signs, poly, grad });
    }
    if form.pieces.is_empty() {
        return Err(Error::Malformed("no nonempty region in the time horizon".into()));
    }
    Ok(form)
}

fn same_plane(a: &Hyperplane, b: &Hyperplane) -> bool {
    (a.offset - b.offset).abs() <= 1e-12 * (1.0 + a.offset.abs())
        && a.normal.iter().zip(&b.normal).all(|(x, y)| (x - y).abs() <= 1e-12)
}

/// Expression to polynomial; `on_abs` supplies the polynomial for each `abs`
/// node in pre-order.
fn lower(
    e: &Expr,
    nvars: usize,
    on_abs: &mut dyn FnMut(&Expr) -> Result<Polynomial>,
) -> Result<Polynomial> {
    Ok(match e {
        Expr::Const(c) => Polynomial::constant(nvars, *c),
        Expr::T => Polynomial::var(nvars, 0),
        Expr::X(i) => Polynomial::var(nvars, i + 1),
        Expr::Add(a) => {
            let mut acc = Polynomial::zero(nvars);
            for c in a {
                acc = acc.add(&lower(c, nvars, on_abs)?);
            }
            acc
        }
        Expr::Sub(a) => {
            let mut acc = lower(&a[0], nvars, on_abs)?;
            for c in &a[1..] {
                acc = acc.sub(&lower(c, nvars, on_abs)?);
            }
            acc
        }
        Expr::Mul(a) => {
            let mut acc = Polynomial::constant(nvars, 1.0);
            for c in a {
                acc = acc.mul(&lower(c, nvars, on_abs)?);
            }
            acc
        }
        Expr::Neg(c) => lower(c, nvars, on_abs)?.scale(-1.0),
        Expr::Abs(arg) => on_abs(arg)?,
        Expr::S(_) | Expr::Max(_) | Expr::Min(_) => {
            return Err(Error::Malformed(format!("'{e}' is not allowed in a candidate")))
        }
    })
}

impl PiecewiseForm {
    pub fn n(&self) -> usize {
        self.frame.n
    }

    fn enumerate_regions(&self, prefix: &mut Vec<i8>, out: &mut Vec<Vec<i8>>) -> Result<()> {
        if prefix.len() == self.hyperplanes.len() {
            out.push(prefix.clone());
            return Ok(());
        }
        for s in [1i8, -1] {
            prefix.push(s);
            if self.region_margin(prefix)? > SNAP_TOL {
                self.enumerate_regions(prefix, out)?;
            }
            prefix.pop();
        }
        Ok(())
    }

    /// Largest `ε ≤ 1` such that some `(t, x)` with `t0 + ε ≤ t ≤ theta0 - ε`
    /// sits at signed distance at least `ε` on the prescribed side of each of
    /// the first `signs.len()` hyperplanes. Space is unbounded, so regions
    /// outside any finite box still count.
    fn region_margin(&self, signs: &[i8]) -> Result<f64> {
        let d = self.frame.n + 1;
        let eps = d;
        let mut lp = LinearProgram::new(Goal::Maximize, d + 1);
        for v in 0..d {
            lp.free(v);
        }
        lp.bounds(eps, f64::NEG_INFINITY, 1.0);
        let mut obj = vec![0.0; d + 1];
        obj[eps] = 1.0;
        lp.objective(&obj);
        let mut row = vec![0.0; d + 1];
        row[0] = 1.0;
        row[eps] = -1.0;
        lp.constraint(row.clone(), Sense::Ge, self.frame.t0);
        row[0] = -1.0;
        lp.constraint(row, Sense::Ge, -self.frame.theta0);
        for (h, s) in self.hyperplanes.iter().zip(signs) {
            let s = *s as f64;
            let mut row: Vec<f64> = h.normal.iter().map(|v| s * v).collect();
            row.push(-1.0);
            lp.constraint(row, Sense::Ge, -s * h.offset);
        }
        match lp.solve()? {
            LpOutcome::Optimal { objective, .. } => Ok(objective),
            LpOutcome::Infeasible => Ok(f64::NEG_INFINITY),
            LpOutcome::Unbounded => Err(Error::Lp("region margin unbounded".into())),
        }
    }

    fn piece_polynomial(&self, expr: &Expr, signs: &[i8]) -> Result<Polynomial> {
        let nvars = self.frame.n + 1;
        let mut k = 0;
        lower(expr, nvars, &mut |_| {
            let node = &self.abs_nodes[k];
            k += 1;
            Ok(match node {
                AbsNode::Constant(c) => Polynomial::constant(nvars, *c),
                AbsNode::Plane { index, orient, arg } => {
                    arg.scale(signs[*index] as f64 * orient)
                }
            })
        })
    }

    /// Sign of each hyperplane at `coords`, zero when within [`SNAP_TOL`].
    pub fn sign_pattern(&self, coords: &[f64]) -> Vec<i8> {
        self.hyperplanes
            .iter()
            .map(|h| {
                let v = h.eval(coords);
                if v.abs() <= SNAP_TOL {
                    0
                } else if v > 0.0 {
                    1
                } else {
                    -1
                }
            })
            .collect()
    }

    /// Pieces compatible with a sign pattern; zero entries are unconstrained.
    pub fn pieces_matching(&self, pattern: &[i8]) -> Vec<usize> {
        self.pieces
            .iter()
            .enumerate()
            .filter(|(_, p)| {
                p.signs
                    .iter()
                    .zip(pattern)
                    .all(|(s, q)| *q == 0 || s == q)
            })
            .map(|(i, _)| i)
            .collect()
    }

    pub fn classify(&self, p: &Position) -> PointClass {
        let coords = p.coords();
        let pattern = self.sign_pattern(&coords);
        let on: Vec<usize> = pattern
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == 0)
            .map(|(i, _)| i)
            .collect();
        let active = self.pieces_matching(&pattern);
        if on.is_empty() && active.len() == 1 {
            PointClass::Smooth { piece: active[0] }
        } else {
            PointClass::Nonsmooth { on, active }
        }
    }

    /// Value through the piece active at `p` (the first, on boundaries).
    pub fn value(&self, p: &Position) -> Option<f64> {
        let coords = p.coords();
        let pattern = self.sign_pattern(&coords);
        self.pieces_matching(&pattern)
            .first()
            .map(|k| self.pieces[*k].value(&coords))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(n: usize) -> GameFrame {
        GameFrame::new(n, 0.0, 1.0).unwrap()
    }

    #[test]
    fn four_pieces_for_two_kinks() {
        let c = Candidate::new(frame(2), Expr::T + Expr::x(1).abs() - Expr::x(2).abs()).unwrap();
        let f = decompose(&c).unwrap();
        assert_eq!(f.hyperplanes.len(), 2);
        assert_eq!(f.pieces.len(), 4);
        let p = Position::new(0.5, vec![0.0, 0.3]);
        match f.classify(&p) {
            PointClass::Nonsmooth { on, active } => {
                assert_eq!(on, vec![0]);
                assert_eq!(active.len(), 2);
            }
            other => panic!("{other:?}"),
        }
        let q = Position::new(0.5, vec![0.2, 0.3]);
        assert!(matches!(f.classify(&q), PointClass::Smooth { .. }));
    }

    #[test]
    fn scaled_arguments_share_a_hyperplane() {
        let e = (Expr::c(2.0) * Expr::x(1)).abs() + (-Expr::x(1)).abs();
        let c = Candidate::new(frame(1), e).unwrap();
        let f = decompose(&c).unwrap();
        assert_eq!(f.hyperplanes.len(), 1);
        assert_eq!(f.pieces.len(), 2);
        assert_eq!(f.value(&Position::new(0.5, vec![-1.0])), Some(3.0));
    }

    #[test]
    fn nonaffine_abs_is_rejected_with_subtree() {
        let e = (Expr::x(1) * Expr::x(2)).abs();
        let c = Candidate::new(frame(2), e).unwrap();
        match decompose(&c) {
            Err(Error::NonAffineAbs { subtree }) => assert_eq!(subtree, "|(x1*x2)|"),
            other => panic!("{other:?}"),
        }
        let nested = Candidate::new(frame(1), Expr::x(1).abs().abs()).unwrap();
        assert!(matches!(decompose(&nested), Err(Error::NonAffineAbs { .. })));
    }

    #[test]
    fn hyperplane_outside_horizon_is_pruned() {
        // |t - 2| never changes sign on [0, 1].
        let c = Candidate::new(frame(1), (Expr::T - Expr::c(2.0)).abs() + Expr::x(1)).unwrap();
        let f = decompose(&c).unwrap();
        assert_eq!(f.pieces.len(), 1);
        assert_eq!(f.value(&Position::new(0.5, vec![1.0])), Some(2.5));
    }

    #[test]
    fn constant_abs_argument() {
        let c = Candidate::new(frame(1), Expr::c(-3.0).abs() * Expr::x(1)).unwrap();
        let f = decompose(&c).unwrap();
        assert!(f.hyperplanes.is_empty());
        assert_eq!(f.value(&Position::new(0.1, vec![2.0])), Some(6.0));
    }
}
