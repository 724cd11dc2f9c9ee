use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::expr::{PiecewiseForm, PointClass, Position};
use crate::geometry::{mix_seed, simplex_weights};
use crate::hamiltonian::Hamiltonian;
use crate::nonsmooth::{analyze, DiniSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpotWitness {
    pub position: Position,
    /// `(a, s)`.
    pub gradient: Vec<f64>,
    /// `a + H(t, x, s)`.
    pub residual: f64,
    pub kind: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpotReport {
    pub smooth: usize,
    pub smooth_max_residual: f64,
    pub smooth_target: f64,
    pub nonsmooth: usize,
    pub dini_points: usize,
    /// Smallest `-(a + H)` over the subdifferential points.
    pub upper_min_slack: Option<f64>,
    /// Smallest `a + H` over the superdifferential points.
    pub lower_min_slack: Option<f64>,
    pub violations: Vec<SpotWitness>,
    pub pass: bool,
}

/// At smooth positions reports `|∂φ/∂t + H(t, x, ∇φ)|` against
/// `smooth_target`; at kinks checks `a + H <= 0` on the Dini
/// subdifferential and `a + H >= 0` on the superdifferential, at the
/// vertices and `interior` seeded combinations of them.
pub fn minimax_spot_check(
    pw: &PiecewiseForm,
    h: &dyn Hamiltonian,
    positions: &[Position],
    interior: usize,
    smooth_target: f64,
    tol: f64,
    seed: u64,
) -> Result<SpotReport> {
    struct Local {
        smooth: Option<(f64, SpotWitness)>,
        points: usize,
        upper: Option<f64>,
        lower: Option<f64>,
        violations: Vec<SpotWitness>,
    }
    let per: Vec<Local> = positions
        .par_iter()
        .map(|p| -> Result<Local> {
            let mut out = Local {
                smooth: None,
                points: 0,
                upper: None,
                lower: None,
                violations: Vec::new(),
            };
            if let PointClass::Smooth { piece } = pw.classify(p) {
                let g = pw.pieces[piece].gradient(&p.coords());
                let r = g[0] + h.eval(p.t, &p.x, &g[1..]);
                out.smooth = Some((
                    r.abs(),
                    SpotWitness {
                        position: p.clone(),
                        gradient: g,
                        residual: r,
                        kind: "smooth".into(),
                    },
                ));
                return Ok(out);
            }
            let a = analyze(pw, p, 0, seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &p.coords()));
            for (set, upper) in [(&a.sub, true), (&a.sup, false)] {
                for w in dini_points(set, interior, &mut rng) {
                    out.points += 1;
                    let r = w[0] + h.eval(p.t, &p.x, &w[1..]);
                    let slack = if upper { -r } else { r };
                    let slot = if upper { &mut out.upper } else { &mut out.lower };
                    *slot = Some(slot.map_or(slack, |m: f64| m.min(slack)));
                    if slack < -tol {
                        out.violations.push(SpotWitness {
                            position: p.clone(),
                            gradient: w,
                            residual: r,
                            kind: if upper { "subdifferential" } else { "superdifferential" }.into(),
                        });
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut rep = SpotReport {
        smooth: 0,
        smooth_max_residual: 0.0,
        smooth_target,
        nonsmooth: 0,
        dini_points: 0,
        upper_min_slack: None,
        lower_min_slack: None,
        violations: Vec::new(),
        pass: true,
    };
    let fold = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    };
    for l in per {
        match l.smooth {
            Some((r, w)) => {
                rep.smooth += 1;
                rep.smooth_max_residual = rep.smooth_max_residual.max(r);
                if r > smooth_target {
                    rep.violations.push(w);
                }
            }
            None => {
                rep.nonsmooth += 1;
                rep.dini_points += l.points;
                rep.upper_min_slack = fold(rep.upper_min_slack, l.upper);
                rep.lower_min_slack = fold(rep.lower_min_slack, l.lower);
                rep.violations.extend(l.violations);
            }
        }
    }
    rep.pass = rep.violations.is_empty();
    Ok(rep)
}

fn dini_points(set: &DiniSet, interior: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let v = &set.vertices;
    if v.is_empty() {
        return Vec::new();
    }
    let mut out = v.clone();
    if v.len() > 1 {
        for _ in 0..interior {
            let w = simplex_weights(rng, v.len());
            let mut p = vec![0.0; v[0].len()];
            for (wk, vk) in w.iter().zip(v) {
                for (pi, vi) in p.iter_mut().zip(vk) {
                    *pi += wk * vi;
                }
            }
            out.push(p);
        }
    }
    out
}
