use rayon::prelude::*;
use serde_json::json;

use super::samples::{extend_h, Extension, Origin, PartialHamiltonian};
use super::{ConditionId, ConditionReport, Witness};
use crate::error::{Error, Result};
use crate::geometry::{dot, norm};
use crate::lp::{in_convex_hull, optimize_convex_weights, Goal, Sense, WeightConstraint};
use crate::nonsmooth::{DiniKind, DiniSet, LocalAnalysis};

/// Limiting gradients must carry a single `h` each.
pub fn check_e1(analyses: &[LocalAnalysis]) -> Result<ConditionReport> {
    if analyses.is_empty() {
        return Err(Error::EmptySamples);
    }
    let witnesses: Vec<Witness> = analyses
        .iter()
        .flat_map(|a| {
            a.e1.iter().filter(|e| e.conflict).map(move |e| Witness {
                position: Some(a.position.clone()),
                message: "pieces meeting here give one gradient two different values of h".into(),
                definitive: true,
                detail: json!({"s": e.s, "h_values": e.h_values, "pieces": e.pieces}),
            })
        })
        .collect();
    Ok(ConditionReport::from_witnesses(ConditionId::E1, witnesses))
}

/// Constraints on convex weights `λ` forcing `(-Σ λ_k h_k, s)` into `set`.
fn dini_constraints(set: &DiniSet, values: &[f64], s: &[f64], tol: f64) -> Vec<WeightConstraint> {
    let mut out = Vec::new();
    let row = |r: &[f64]| -> Vec<f64> { values.iter().map(|h| -r[0] * h).collect() };
    for (r, b) in &set.inequalities {
        let rhs = b - dot(&r[1..], s);
        out.push((row(r), Sense::Le, rhs + tol * (1.0 + b.abs())));
    }
    for (r, c) in &set.equalities {
        let rhs = c - dot(&r[1..], s);
        let slack = tol * (1.0 + c.abs());
        out.push((row(r), Sense::Le, rhs + slack));
        out.push((row(r), Sense::Ge, rhs - slack));
    }
    out
}

/// Inequality on one-sided Dini sets, with `h` extended off the limiting
/// gradients by convex combination. The zero gradient, when present, is
/// tested with `h(0) = 0`, which homogeneity forces.
pub fn check_e2(analyses: &[LocalAnalysis], tol: f64) -> Result<ConditionReport> {
    if analyses.is_empty() {
        return Err(Error::EmptySamples);
    }
    let per: Vec<(Vec<Witness>, usize)> = analyses
        .par_iter()
        .map(|a| e2_at(a, tol))
        .collect::<Result<_>>()?;
    let tested: usize = per.iter().map(|(_, k)| k).sum();
    let witnesses: Vec<Witness> = per.into_iter().flat_map(|(w, _)| w).collect();
    let mut report = ConditionReport::from_witnesses(ConditionId::E2, witnesses);
    report.notes.push(format!("{tested} gradients tested on one-sided Dini sets"));
    Ok(report)
}

fn e2_at(a: &LocalAnalysis, tol: f64) -> Result<(Vec<Witness>, usize)> {
    let Some(e2) = &a.e2 else {
        return Ok((Vec::new(), 0));
    };
    let (set, goal) = match e2.source {
        DiniKind::Sub => (&a.sub, Goal::Minimize),
        DiniKind::Super => (&a.sup, Goal::Maximize),
    };
    let points: Vec<Vec<f64>> = a.e1.iter().map(|e| e.s.clone()).collect();
    let values: Vec<f64> = a.e1.iter().map(|e| e.h).collect();
    let limiting: Vec<(Vec<f64>, f64)> = points.iter().cloned().zip(values.iter().copied()).collect();

    // (s, h(s), definitive)
    let mut cases: Vec<(Vec<f64>, Option<f64>, bool)> = Vec::new();
    for k in &e2.limiting_inside {
        cases.push((a.e1[*k].s.clone(), Some(a.e1[*k].h), true));
    }
    let mut witnesses = Vec::new();
    for s in &e2.samples {
        match extend_h(&limiting, s, tol)? {
            Extension::Value { h, .. } => cases.push((s.clone(), Some(h), false)),
            Extension::IllDefined { min, max, weights_min, weights_max } => {
                witnesses.push(Witness {
                    position: Some(a.position.clone()),
                    message: "h has no single convex-combination extension at this gradient".into(),
                    definitive: false,
                    detail: json!({"s": s, "min": min, "max": max,
                        "weights_min": weights_min, "weights_max": weights_max}),
                });
                cases.push((s.clone(), None, false));
            }
        }
    }
    let zero = vec![0.0; points[0].len()];
    if in_convex_hull(&e2.projection, &zero)? {
        cases.push((zero, Some(0.0), true));
    }

    let tested = cases.len();
    for (s, h, definitive) in cases {
        let Some(h) = h else { continue };
        let extra = dini_constraints(set, &values, &s, tol);
        let Some((opt, weights)) = optimize_convex_weights(goal, &points, &values, &s, &extra)? else {
            continue;
        };
        let slack = tol * (1.0 + opt.abs());
        let violated = match goal {
            Goal::Minimize => h > opt + slack,
            Goal::Maximize => h < opt - slack,
        };
        if violated {
            witnesses.push(Witness {
                position: Some(a.position.clone()),
                message: match goal {
                    Goal::Minimize => "a combination in the Dini subdifferential undercuts h".into(),
                    Goal::Maximize => "a combination in the Dini superdifferential exceeds h".into(),
                },
                definitive,
                detail: json!({"s": s, "h": h, "combination_value": opt, "weights": weights,
                    "limiting": points, "limiting_h": values}),
            });
        }
    }
    Ok((witnesses, tested))
}

/// Positive homogeneity: codirectional gradients at one position must have
/// proportional `h`, and the zero gradient must have `h = 0`.
pub fn check_e3(ph: &PartialHamiltonian, tol: f64) -> Result<ConditionReport> {
    if ph.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut witnesses = Vec::new();
    for g in &ph.groups {
        let smp = &g.samples;
        let lens: Vec<f64> = smp.iter().map(|s| norm(&s.s)).collect();
        for (i, a) in smp.iter().enumerate() {
            if lens[i] <= 1e-12 {
                if a.h.abs() > tol {
                    witnesses.push(Witness {
                        position: Some(g.position.clone()),
                        message: "nonzero h at the zero gradient".into(),
                        definitive: a.origin == Origin::E1,
                        detail: json!({"s": a.s, "h": a.h, "origin": a.origin}),
                    });
                }
                continue;
            }
            for (j, b) in smp.iter().enumerate().skip(i + 1) {
                if lens[j] <= 1e-12 {
                    continue;
                }
                // Compare unit vectors; a cosine test would admit angles near sqrt(tol).
                let gap = a
                    .s
                    .iter()
                    .zip(&b.s)
                    .map(|(p, q)| (p / lens[i] - q / lens[j]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if gap > tol {
                    continue;
                }
                let lhs = lens[j] * a.h;
                let rhs = lens[i] * b.h;
                if (lhs - rhs).abs() > tol * (1.0 + lhs.abs().max(rhs.abs())) {
                    witnesses.push(Witness {
                        position: Some(g.position.clone()),
                        message: "codirectional gradients with non-proportional h".into(),
                        definitive: a.origin == Origin::E1 && b.origin == Origin::E1,
                        detail: json!({"s1": a.s, "h1": a.h, "origin1": a.origin,
                            "s2": b.s, "h2": b.h, "origin2": b.origin}),
                    });
                }
            }
        }
    }
    Ok(ConditionReport::from_witnesses(ConditionId::E3, witnesses))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::Status;
    use crate::conditions::samples::{HSample, PositionSamples};
    use crate::expr::Position;

    fn group(samples: Vec<(Vec<f64>, f64)>) -> PartialHamiltonian {
        PartialHamiltonian::new(vec![PositionSamples {
            position: Position::new(0.5, vec![0.0, 0.0]),
            samples: samples
                .into_iter()
                .map(|(s, h)| HSample { s, h, origin: Origin::E1 })
                .collect(),
        }])
    }

    #[test]
    fn homogeneity_pass_and_fail() {
        let ok = group(vec![(vec![1.0, 0.0], 2.0), (vec![2.0, 0.0], 4.0)]);
        assert_eq!(check_e3(&ok, 1e-9).unwrap().status, Status::Pass);
        let bad = group(vec![(vec![1.0, 0.0], 2.0), (vec![2.0, 0.0], 5.0)]);
        let r = check_e3(&bad, 1e-9).unwrap();
        assert_eq!(r.status, Status::Fail);
        assert!(r.witnesses[0].definitive);
    }

    #[test]
    fn opposite_directions_are_unconstrained() {
        let ph = group(vec![(vec![1.0, 0.0], 2.0), (vec![-1.0, 0.0], 7.0)]);
        assert_eq!(check_e3(&ph, 1e-9).unwrap().status, Status::Pass);
    }

    #[test]
    fn zero_gradient_needs_zero_h() {
        let ph = group(vec![(vec![0.0, 0.0], 0.5)]);
        assert_eq!(check_e3(&ph, 1e-9).unwrap().status, Status::Fail);
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(check_e3(&PartialHamiltonian::default(), 1e-9), Err(Error::EmptySamples)));
        assert!(matches!(check_e1(&[]), Err(Error::EmptySamples)));
        assert!(matches!(check_e2(&[], 1e-9), Err(Error::EmptySamples)));
    }
}
