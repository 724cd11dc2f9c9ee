//! Growth and regularity of `h/‖s‖`: sublinear growth in `x`, Lipschitz in
//! `x`, a time modulus, and Lipschitz dependence on the unit costate. The
//! constants are estimated from samples at successively smaller time floors.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::samples::NatSample;
use super::{ConditionId, ConditionReport, Estimates, Status, Witness};
use crate::error::{Error, Result};
use crate::expr::Position;
use crate::geometry::{dist, norm};

/// Cumulative sample set for one refinement level.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthLevel {
    pub t_floor: Option<f64>,
    pub samples: Vec<NatSample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelEstimates {
    pub t_floor: Option<f64>,
    pub min_t: f64,
    pub samples: usize,
    pub gamma: f64,
    pub gamma_growth: f64,
    pub gamma_costate: f64,
    #[serde(rename = "W")]
    pub time_modulus: f64,
    #[serde(rename = "L")]
    pub lipschitz_x: f64,
    /// Sample attaining `gamma_growth`.
    pub growth_argmax: Option<NatSample>,
}

impl LevelEstimates {
    fn values(&self) -> [(&'static str, f64); 3] {
        [
            ("gamma", self.gamma),
            ("W", self.time_modulus),
            ("L", self.lipschitz_x),
        ]
    }

    pub fn estimates(&self) -> Estimates {
        Estimates {
            gamma: self.gamma,
            lipschitz_x: self.lipschitz_x,
            time_modulus: self.time_modulus,
        }
    }
}

type Key = Vec<u64>;

fn key(t: Option<f64>, x: &[f64]) -> Key {
    t.into_iter().chain(x.iter().copied()).map(f64::to_bits).collect()
}

/// Max over `(value, i, j)` preferring the smallest index pair on ties, so the
/// parallel reduction is deterministic.
fn better(a: (f64, usize, usize), b: (f64, usize, usize)) -> (f64, usize, usize) {
    if b.0 > a.0 || (b.0 == a.0 && (b.1, b.2) < (a.1, a.2)) {
        b
    } else {
        a
    }
}

pub fn estimate_level(level: &GrowthLevel) -> LevelEstimates {
    let smp = &level.samples;
    let xn: Vec<f64> = smp.iter().map(|s| norm(&s.x)).collect();

    let mut gamma_growth = 0.0;
    let mut growth_argmax = None;
    for (i, s) in smp.iter().enumerate() {
        let v = s.h.abs() / (1.0 + xn[i]);
        if v > gamma_growth {
            gamma_growth = v;
            growth_argmax = Some(i);
        }
    }

    let mut by_position: BTreeMap<Key, Vec<usize>> = BTreeMap::new();
    let mut by_state: BTreeMap<Key, Vec<usize>> = BTreeMap::new();
    for (i, s) in smp.iter().enumerate() {
        by_position.entry(key(Some(s.t), &s.x)).or_default().push(i);
        by_state.entry(key(None, &s.x)).or_default().push(i);
    }

    let mut gamma_costate: f64 = 0.0;
    for idx in by_position.values() {
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                let ds = dist(&smp[i].s, &smp[j].s);
                if ds > 1e-12 {
                    let q = (smp[i].h - smp[j].h).abs() / ((1.0 + xn[i]) * ds);
                    gamma_costate = gamma_costate.max(q);
                }
            }
        }
    }
    let gamma = gamma_growth.max(gamma_costate);

    let mut time_modulus: f64 = 0.0;
    for idx in by_state.values() {
        for (a, &i) in idx.iter().enumerate() {
            for &j in &idx[a + 1..] {
                let dt = (smp[i].t - smp[j].t).abs();
                if dt > 0.0 {
                    let ds = dist(&smp[i].s, &smp[j].s);
                    let r = (smp[i].h - smp[j].h).abs() - gamma * (1.0 + xn[i]) * ds;
                    time_modulus = time_modulus.max(r.max(0.0) / dt);
                }
            }
        }
    }

    let lipschitz_x = (0..smp.len())
        .into_par_iter()
        .map(|i| {
            let mut best = (0.0, usize::MAX, usize::MAX);
            for j in i + 1..smp.len() {
                let dx = dist(&smp[i].x, &smp[j].x);
                if dx == 0.0 {
                    continue;
                }
                let dt = (smp[i].t - smp[j].t).abs();
                let ds = dist(&smp[i].s, &smp[j].s);
                let r = (smp[i].h - smp[j].h).abs()
                    - time_modulus * dt
                    - gamma * (1.0 + xn[i].min(xn[j])) * ds;
                if r > 0.0 {
                    best = better(best, (r / dx, i, j));
                }
            }
            best
        })
        .reduce(|| (0.0, usize::MAX, usize::MAX), better)
        .0;

    LevelEstimates {
        t_floor: level.t_floor,
        min_t: smp.iter().map(|s| s.t).fold(f64::INFINITY, f64::min),
        samples: smp.len(),
        gamma,
        gamma_growth,
        gamma_costate,
        time_modulus,
        lipschitz_x,
        growth_argmax: growth_argmax.map(|i| smp[i].clone()),
    }
}

/// Values at or below this count as zero when comparing levels.
const ZERO: f64 = 1e-12;

fn relative_change(a: f64, b: f64) -> f64 {
    if a <= ZERO && b <= ZERO {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// PASS when every estimate moves by less than `stable` (relative) between
/// the last two levels; FAIL when some estimate grows by `growth` or more
/// between consecutive levels; INCONCLUSIVE otherwise.
pub fn check_e4(levels: &[GrowthLevel], stable: f64, growth: f64) -> Result<(ConditionReport, Vec<LevelEstimates>)> {
    if levels.is_empty() {
        return Err(Error::EmptySchedule);
    }
    if levels.iter().any(|l| l.samples.is_empty()) {
        return Err(Error::EmptySamples);
    }
    let est: Vec<LevelEstimates> = levels.iter().map(estimate_level).collect();

    let mut witnesses = Vec::new();
    for w in est.windows(2) {
        for ((name, prev), (_, next)) in w[0].values().iter().zip(w[1].values()) {
            // Float slack so an exact tenfold jump is not lost to rounding.
            if *prev > ZERO && next >= growth * (1.0 - 1e-9) * prev {
                let argmax = w[1].growth_argmax.as_ref();
                witnesses.push(Witness {
                    position: argmax.map(|s| Position::new(s.t, s.x.clone())),
                    message: format!("{name} grows by a factor {:.3} as the time floor decreases", next / prev),
                    definitive: false,
                    detail: json!({
                        "quantity": name,
                        "sequence": est.iter().map(|e| json!({
                            "t_floor": e.t_floor,
                            "min_t": e.min_t,
                            "value": e.values().iter().find(|(n, _)| n == name).map(|(_, v)| *v),
                        })).collect::<Vec<_>>(),
                        "growth_argmax": argmax,
                    }),
                });
            }
        }
    }
    let mut report = if !witnesses.is_empty() {
        ConditionReport::from_witnesses(ConditionId::E4, witnesses)
    } else if est.len() >= 2 && {
        let (a, b) = (&est[est.len() - 2], &est[est.len() - 1]);
        a.values()
            .iter()
            .zip(b.values())
            .all(|((_, p), (_, q))| relative_change(*p, q) < stable)
    } {
        ConditionReport::new(ConditionId::E4, Status::Pass)
    } else {
        let mut r = ConditionReport::new(ConditionId::E4, Status::Inconclusive);
        r.notes.push("estimates neither stabilized nor grew past the failure factor".into());
        r
    };
    if report.status != Status::Fail {
        report.estimates = Some(est[est.len() - 1].estimates());
    }
    Ok((report, est))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditions::samples::Origin;

    fn level(t_floor: Option<f64>, pts: &[(f64, f64, f64, f64)]) -> GrowthLevel {
        GrowthLevel {
            t_floor,
            samples: pts
                .iter()
                .map(|(t, x, s, h)| NatSample {
                    t: *t,
                    x: vec![*x],
                    s: vec![*s],
                    h: *h,
                    origin: Origin::E1,
                })
                .collect(),
        }
    }

    #[test]
    fn constant_h_stabilizes() {
        let base = [(0.5, 0.0, 1.0, -1.0), (0.5, 0.5, -1.0, -1.0), (0.7, 0.5, 1.0, -1.0)];
        let mut more = base.to_vec();
        more.push((0.1, 0.0, 1.0, -1.0));
        let (r, est) = check_e4(&[level(None, &base), level(Some(0.1), &more)], 0.1, 10.0).unwrap();
        assert_eq!(r.status, Status::Pass);
        assert!((est[1].gamma - 1.0).abs() < 1e-15);
        let e = r.estimates.unwrap();
        assert_eq!((e.time_modulus, e.lipschitz_x), (0.0, 0.0));
    }

    #[test]
    fn blow_up_in_time_fails() {
        // h/‖s‖ = 1/t
        let mk = |tmin: f64| -> Vec<(f64, f64, f64, f64)> {
            [0.5, tmin].iter().map(|t| (*t, 0.0, 1.0, 1.0 / t)).collect()
        };
        let levels = [level(Some(0.1), &mk(0.1)), level(Some(0.01), &mk(0.01))];
        let (r, est) = check_e4(&levels, 0.1, 10.0).unwrap();
        assert_eq!(r.status, Status::Fail);
        assert!(r.estimates.is_none());
        assert!((est[1].gamma / est[0].gamma - 10.0).abs() < 1e-9);
    }

    #[test]
    fn estimates_are_residuals() {
        // h depends only on x with slope 2.
        let pts = [(0.5, 0.0, 1.0, 0.0), (0.5, 0.25, 1.0, 0.5), (0.25, 0.25, 1.0, 0.5)];
        let e = estimate_level(&level(None, &pts));
        assert_eq!(e.time_modulus, 0.0);
        assert!((e.lipschitz_x - 2.0).abs() < 1e-12);
    }

    #[test]
    fn empty_schedule() {
        assert!(matches!(check_e4(&[], 0.1, 10.0), Err(Error::EmptySchedule)));
    }
}
