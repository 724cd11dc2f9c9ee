//! Thin wrapper over `microlp` with dense rows, plus the few convex-hull
//! queries the rest of the crate needs.

use microlp::{ComparisonOp, OptimizationDirection, Problem};

use crate::error::{Error, Result};
use crate::geometry::dist_inf;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Goal {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug)]
pub struct LinearProgram {
    goal: Goal,
    objective: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    rows: Vec<(Vec<f64>, Sense, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { objective: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimum(&self) -> Option<(f64, &[f64])> {
        match self {
            LpOutcome::Optimal { objective, x } => Some((*objective, x)),
            _ => None,
        }
    }
}

impl LinearProgram {
    /// A program in `vars` variables, all nonnegative by default.
    pub fn new(goal: Goal, vars: usize) -> Self {
        Self {
            goal,
            objective: vec![0.0; vars],
            bounds: vec![(0.0, f64::INFINITY); vars],
            rows: Vec::new(),
        }
    }

    pub fn vars(&self) -> usize {
        self.objective.len()
    }

    pub fn objective(&mut self, coeffs: &[f64]) -> &mut Self {
        self.objective.copy_from_slice(coeffs);
        self
    }

    pub fn bounds(&mut self, var: usize, lo: f64, hi: f64) -> &mut Self {
        self.bounds[var] = (lo, hi);
        self
    }

    pub fn free(&mut self, var: usize) -> &mut Self {
        self.bounds(var, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn constraint(&mut self, coeffs: Vec<f64>, sense: Sense, rhs: f64) -> &mut Self {
        debug_assert_eq!(coeffs.len(), self.vars());
        self.rows.push((coeffs, sense, rhs));
        self
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        let dir = match self.goal {
            Goal::Minimize => OptimizationDirection::Minimize,
            Goal::Maximize => OptimizationDirection::Maximize,
        };
        let mut p = Problem::new(dir);
        let vars: Vec<_> = self
            .objective
            .iter()
            .zip(&self.bounds)
            .map(|(c, b)| p.add_var(*c, *b))
            .collect();
        for (coeffs, sense, rhs) in &self.rows {
            let op = match sense {
                Sense::Le => ComparisonOp::Le,
                Sense::Ge => ComparisonOp::Ge,
                Sense::Eq => ComparisonOp::Eq,
            };
            let terms: Vec<_> = coeffs
                .iter()
                .enumerate()
                .filter(|(_, c)| **c != 0.0)
                .map(|(i, c)| (vars[i], *c))
                .collect();
            p.add_constraint(terms, op, *rhs);
        }
        match p.solve() {
            Ok(outcome) => {
                let sol = outcome
                    .into_solution()
                    .map_err(|_| Error::Lp("solve interrupted".into()))?;
                let x = vars.iter().map(|v| sol.var_value(*v)).collect();
                Ok(LpOutcome::Optimal {
                    objective: sol.objective(),
                    x,
                })
            }
            Err(microlp::Error::Infeasible) => Ok(LpOutcome::Infeasible),
            Err(microlp::Error::Unbounded) => Ok(LpOutcome::Unbounded),
            Err(e) => Err(Error::Lp(format!("{e:?}"))),
        }
    }
}

/// Extra linear constraint on the convex weights `λ`, written as
/// `coeffs · λ (sense) rhs`.
pub type WeightConstraint = (Vec<f64>, Sense, f64);

/// Optimize `Σ λ_k values[k]` over `λ ≥ 0, Σ λ = 1, Σ λ_k points[k] = target`
/// and any extra weight constraints. `None` when no such weights exist.
pub fn optimize_convex_weights(
    goal: Goal,
    points: &[Vec<f64>],
    values: &[f64],
    target: &[f64],
    extra: &[WeightConstraint],
) -> Result<Option<(f64, Vec<f64>)>> {
    let k = points.len();
    if k == 0 {
        return Ok(None);
    }
    let mut lp = LinearProgram::new(goal, k);
    lp.objective(values);
    lp.constraint(vec![1.0; k], Sense::Eq, 1.0);
    for (d, t) in target.iter().enumerate() {
        lp.constraint(points.iter().map(|p| p[d]).collect(), Sense::Eq, *t);
    }
    for (c, s, r) in extra {
        lp.constraint(c.clone(), *s, *r);
    }
    match lp.solve()? {
        LpOutcome::Optimal { objective, x } => Ok(Some((objective, x))),
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => Err(Error::Lp("bounded weight program reported unbounded".into())),
    }
}

pub fn in_convex_hull(points: &[Vec<f64>], target: &[f64]) -> Result<bool> {
    let zeros = vec![0.0; points.len()];
    Ok(optimize_convex_weights(Goal::Minimize, points, &zeros, target, &[])?.is_some())
}

/// Deduplicate (max-norm `tol`) and drop points lying in the hull of the others.
pub fn hull_vertices(points: &[Vec<f64>], tol: f64) -> Result<Vec<Vec<f64>>> {
    let mut uniq: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if !uniq.iter().any(|q| dist_inf(p, q) <= tol) {
            uniq.push(p.clone());
        }
    }
    if uniq.len() <= 2 {
        return Ok(uniq);
    }
    let mut keep = Vec::new();
    for i in 0..uniq.len() {
        let others: Vec<Vec<f64>> = uniq
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, p)| p.clone())
            .collect();
        if !in_convex_hull(&others, &uniq[i])? {
            keep.push(uniq[i].clone());
        }
    }
    Ok(keep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_program() {
        // max x + y  s.t. x + 2y <= 4, 3x + y <= 6
        let mut lp = LinearProgram::new(Goal::Maximize, 2);
        lp.objective(&[1.0, 1.0])
            .constraint(vec![1.0, 2.0], Sense::Le, 4.0)
            .constraint(vec![3.0, 1.0], Sense::Le, 6.0);
        let (obj, x) = lp.solve().unwrap().optimum().map(|(o, x)| (o, x.to_vec())).unwrap();
        assert!((obj - 2.8).abs() < 1e-9);
        assert!((x[0] - 1.6).abs() < 1e-9 && (x[1] - 1.2).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(Goal::Minimize, 1);
        lp.constraint(vec![1.0], Sense::Ge, 2.0).constraint(vec![1.0], Sense::Le, 1.0);
        assert_eq!(lp.solve().unwrap(), LpOutcome::Infeasible);
        let mut lp = LinearProgram::new(Goal::Maximize, 1);
        lp.objective(&[1.0]);
        assert_eq!(lp.solve().unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn hull_drops_interior_points() {
        let pts = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.2, 0.2],
            vec![1.0, 0.0],
        ];
        let v = hull_vertices(&pts, 1e-12).unwrap();
        assert_eq!(v.len(), 3);
        assert!(in_convex_hull(&pts[..3], &[0.5, 0.5]).unwrap());
        assert!(!in_convex_hull(&pts[..3], &[0.6, 0.6]).unwrap());
    }

    #[test]
    fn weight_range() {
        let pts = vec![vec![1.0], vec![-1.0], vec![1.0], vec![-1.0]];
        let vals = [1.0, 0.0, 0.0, 1.0];
        let lo = optimize_convex_weights(Goal::Minimize, &pts, &vals, &[0.0], &[]).unwrap().unwrap();
        let hi = optimize_convex_weights(Goal::Maximize, &pts, &vals, &[0.0], &[]).unwrap().unwrap();
        assert!(lo.0.abs() < 1e-9);
        assert!((hi.0 - 1.0).abs() < 1e-9);
    }
}
