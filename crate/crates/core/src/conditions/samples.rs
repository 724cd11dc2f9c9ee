use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Position;
use crate::geometry::norm;
use crate::lp::{optimize_convex_weights, Goal};

/// Where a Hamiltonian sample came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    /// A limiting gradient with its piece-derived `h`.
    E1,
    /// A one-sided Dini gradient with `h` from the convex-combination extension.
    E2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HSample {
    pub s: Vec<f64>,
    pub h: f64,
    pub origin: Origin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionSamples {
    pub position: Position,
    pub samples: Vec<HSample>,
}

/// `h` known on a finite set of `(t, x, s)`, grouped by position.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PartialHamiltonian {
    pub groups: Vec<PositionSamples>,
}

impl PartialHamiltonian {
    pub fn new(groups: Vec<PositionSamples>) -> Self {
        Self { groups }
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.samples.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn only(&self, origin: Origin) -> Self {
        Self {
            groups: self
                .groups
                .iter()
                .map(|g| PositionSamples {
                    position: g.position.clone(),
                    samples: g.samples.iter().filter(|s| s.origin == origin).cloned().collect(),
                })
                .filter(|g| !g.samples.is_empty())
                .collect(),
        }
    }

    /// Homogeneous-of-degree-zero view: unit `s` with `h / ‖s‖`. Samples with
    /// `‖s‖` below `zero_tol` are dropped.
    pub fn natural(&self, zero_tol: f64) -> Vec<NatSample> {
        self.groups
            .iter()
            .flat_map(|g| {
                g.samples.iter().filter_map(move |smp| {
                    let len = norm(&smp.s);
                    (len >= zero_tol).then(|| NatSample {
                        t: g.position.t,
                        x: g.position.x.clone(),
                        s: smp.s.iter().map(|v| v / len).collect(),
                        h: smp.h / len,
                        origin: smp.origin,
                    })
                })
            })
            .collect()
    }
}

/// Sample of `h/‖s‖` at a unit costate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NatSample {
    pub t: f64,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub h: f64,
    pub origin: Origin,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Extension {
    Value { h: f64, weights: Vec<f64> },
    /// Different convex representations of `s` give different `h`.
    IllDefined {
        min: f64,
        max: f64,
        weights_min: Vec<f64>,
        weights_max: Vec<f64>,
    },
}

/// `h(s) = Σ λ_k h_k` over representations `s = Σ λ_k s_k`; well defined
/// only when every representation gives the same value within `tol`.
pub fn extend_h(limiting: &[(Vec<f64>, f64)], s: &[f64], tol: f64) -> Result<Extension> {
    if limiting.is_empty() {
        return Err(Error::EmptySamples);
    }
    let points: Vec<Vec<f64>> = limiting.iter().map(|(p, _)| p.clone()).collect();
    let values: Vec<f64> = limiting.iter().map(|(_, h)| *h).collect();
    let lo = optimize_convex_weights(Goal::Minimize, &points, &values, s, &[])?;
    let hi = optimize_convex_weights(Goal::Maximize, &points, &values, s, &[])?;
    match (lo, hi) {
        (Some((min, wl)), Some((max, wh))) => {
            if max - min <= tol * (1.0 + min.abs().max(max.abs())) {
                Ok(Extension::Value {
                    h: 0.5 * (min + max),
                    weights: wl,
                })
            } else {
                Ok(Extension::IllDefined {
                    min,
                    max,
                    weights_min: wl,
                    weights_max: wh,
                })
            }
        }
        _ => Err(Error::NotInHull(s.to_vec())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn midpoint_extension() {
        let lim = vec![(vec![1.0, 0.0], 1.0), (vec![-1.0, 0.0], 0.0)];
        match extend_h(&lim, &[0.0, 0.0], 1e-9).unwrap() {
            Extension::Value { h, .. } => assert!((h - 0.5).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_representations_disagree() {
        // The origin is the midpoint of both diagonals, with different averages.
        let lim = vec![
            (vec![1.0, 0.0], 1.0),
            (vec![-1.0, 0.0], 1.0),
            (vec![0.0, 1.0], 0.0),
            (vec![0.0, -1.0], 0.0),
        ];
        match extend_h(&lim, &[0.0, 0.0], 1e-9).unwrap() {
            Extension::IllDefined { min, max, .. } => {
                assert!(min.abs() < 1e-9 && (max - 1.0).abs() < 1e-9)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn outside_hull_is_an_error() {
        let lim = vec![(vec![1.0], 1.0), (vec![2.0], 0.0)];
        assert!(matches!(extend_h(&lim, &[0.0], 1e-9), Err(Error::NotInHull(_))));
    }

    #[test]
    fn natural_view_drops_zero_gradients() {
        let ph = PartialHamiltonian::new(vec![PositionSamples {
            position: Position::new(0.5, vec![0.0]),
            samples: vec![
                HSample { s: vec![2.0], h: 4.0, origin: Origin::E1 },
                HSample { s: vec![0.0], h: 0.0, origin: Origin::E2 },
            ],
        }]);
        let nat = ph.natural(1e-9);
        assert_eq!(nat.len(), 1);
        assert_eq!((nat[0].s[0], nat[0].h), (1.0, 2.0));
        assert_eq!(ph.only(Origin::E2).len(), 1);
    }
}
