//! Hamiltonians `H(t, x, s)`, a closed-form variant parsed from expressions,
//! and a randomized regularity audit.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::expr::{Dialect, Expr, GameFrame};
use crate::geometry::{dist, norm, standard_normal};

/// Regularity constants a Hamiltonian carries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianMeta {
    /// `|H(t,x,s)| <= upsilon (1+‖x‖) ‖s‖` and `H` is `upsilon (1+‖x‖)`-Lipschitz in `s`.
    pub upsilon: f64,
    /// Lipschitz constant in `x` per unit `‖s‖`, when known.
    #[serde(rename = "L")]
    pub lipschitz_x: Option<f64>,
    /// Linear time modulus per unit `‖s‖`, when known.
    #[serde(rename = "W")]
    pub time_modulus: Option<f64>,
    pub x_independent: bool,
}

impl HamiltonianMeta {
    pub fn validate(&self) -> Result<()> {
        if !(self.upsilon.is_finite() && self.upsilon >= 0.0) {
            return Err(Error::MissingMetadata(format!("upsilon = {}", self.upsilon)));
        }
        Ok(())
    }

    /// `upsilon (1+‖x‖)`, or `upsilon` alone when `H` ignores `x`.
    pub fn s_lipschitz(&self, x_norm: f64) -> f64 {
        if self.x_independent {
            self.upsilon
        } else {
            self.upsilon * (1.0 + x_norm)
        }
    }
}

pub trait Hamiltonian: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, x: &[f64], s: &[f64]) -> f64;
    fn meta(&self) -> &HamiltonianMeta;
}

/// `H` given by an expression in `t`, `x`, `s` with `max`/`min`/`abs`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosedFormHamiltonian {
    n: usize,
    expr: Expr,
    meta: HamiltonianMeta,
}

impl ClosedFormHamiltonian {
    pub fn new(n: usize, expr: Expr, upsilon: f64) -> Result<Self> {
        let meta = HamiltonianMeta {
            upsilon,
            lipschitz_x: None,
            time_modulus: None,
            x_independent: !expr.mentions_x() && !expr.mentions_t(),
        };
        meta.validate()?;
        Ok(Self { n, expr, meta })
    }

    pub fn with_moduli(mut self, lipschitz_x: f64, time_modulus: f64) -> Self {
        self.meta.lipschitz_x = Some(lipschitz_x);
        self.meta.time_modulus = Some(time_modulus);
        self
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    /// `{"n", "upsilon", "expr", optional "L", "W"}`.
    pub fn from_json(v: &Value) -> Result<Self> {
        let n = v
            .get("n")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Malformed("Hamiltonian needs integer 'n'".into()))? as usize;
        let upsilon = v
            .get("upsilon")
            .and_then(Value::as_f64)
            .ok_or_else(|| Error::MissingMetadata("Hamiltonian needs numeric 'upsilon'".into()))?;
        let node = v
            .get("expr")
            .ok_or_else(|| Error::Malformed("Hamiltonian needs 'expr'".into()))?;
        let expr = Expr::from_json(node, n, Dialect::Hamiltonian)?;
        let mut h = Self::new(n, expr, upsilon)?;
        h.meta.lipschitz_x = v.get("L").and_then(Value::as_f64);
        h.meta.time_modulus = v.get("W").and_then(Value::as_f64);
        Ok(h)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "n": self.n,
            "upsilon": self.meta.upsilon,
            "L": self.meta.lipschitz_x,
            "W": self.meta.time_modulus,
            "expr": self.expr.to_json(),
        })
    }
}

impl Hamiltonian for ClosedFormHamiltonian {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, t: f64, x: &[f64], s: &[f64]) -> f64 {
        self.expr.eval(t, x, s)
    }

    fn meta(&self) -> &HamiltonianMeta {
        &self.meta
    }
}

/// Where the audit draws `(t, x, s)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRegion {
    pub frame: GameFrame,
    pub x_lo: f64,
    pub x_hi: f64,
    /// Costates are drawn with norm up to this radius.
    pub s_radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub draws: usize,
    /// Max of `|H(αs) - αH(s)| / (1 + |αH(s)|)` over `α ∈ [0, 10]`.
    pub homogeneity_max_residual: f64,
    /// Max of `|H| / (upsilon' ‖s‖)` with `upsilon' = s_lipschitz(‖x‖)`.
    pub growth_max_ratio: f64,
    pub growth_violations: usize,
    /// Max of `|ΔH| / (upsilon' ‖Δs‖)`.
    pub s_lipschitz_max_ratio: f64,
    pub s_lipschitz_violations: usize,
    /// Max of `|ΔH| / (‖s‖ (W |Δt| + (L + upsilon) ‖Δx‖))`, when `L`, `W` known.
    pub tx_max_ratio: Option<f64>,
    pub tx_violations: usize,
    pub pass: bool,
}

/// Randomized audit of homogeneity, growth, and Lipschitz bounds.
pub fn verify_regularity(h: &dyn Hamiltonian, region: &AuditRegion, draws: usize, seed: u64) -> RegularityReport {
    let n = h.dim();
    let meta = *h.meta();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = region.frame;
    let draw_point = |rng: &mut ChaCha8Rng| -> (f64, Vec<f64>, Vec<f64>) {
        let t = rng.gen_range(f.t0..=f.theta0);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(region.x_lo..=region.x_hi)).collect();
        let dir: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
        let len = norm(&dir).max(1e-300);
        let r = region.s_radius * rng.gen::<f64>();
        let s: Vec<f64> = dir.iter().map(|v| v * r / len).collect();
        (t, x, s)
    };
    let slack = 1e-9;
    let mut rep = RegularityReport {
        draws,
        homogeneity_max_residual: 0.0,
        growth_max_ratio: 0.0,
        growth_violations: 0,
        s_lipschitz_max_ratio: 0.0,
        s_lipschitz_violations: 0,
        tx_max_ratio: None,
        tx_violations: 0,
        pass: true,
    };
    for _ in 0..draws {
        let (t, x, s) = draw_point(&mut rng);
        let hs = h.eval(t, &x, &s);
        let alpha = 10.0 * rng.gen::<f64>();
        let scaled: Vec<f64> = s.iter().map(|v| v * alpha).collect();
        let res = (h.eval(t, &x, &scaled) - alpha * hs).abs() / (1.0 + (alpha * hs).abs());
        rep.homogeneity_max_residual = rep.homogeneity_max_residual.max(res);

        let bound = meta.s_lipschitz(norm(&x));
        let sn = norm(&s);
        if sn > 0.0 {
            let ratio = hs.abs() / (bound * sn);
            rep.growth_max_ratio = rep.growth_max_ratio.max(ratio);
            if ratio > 1.0 + slack {
                rep.growth_violations += 1;
            }
        }

        let (t2, x2, s2) = draw_point(&mut rng);
        let ds = dist(&s, &s2);
        if ds > 0.0 {
            let ratio = (h.eval(t, &x, &s2) - hs).abs() / (bound * ds);
            rep.s_lipschitz_max_ratio = rep.s_lipschitz_max_ratio.max(ratio);
            if ratio > 1.0 + slack {
                rep.s_lipschitz_violations += 1;
            }
        }

        if let (Some(l), Some(w)) = (meta.lipschitz_x, meta.time_modulus) {
            let denom = sn * (w * (t - t2).abs() + (l + meta.upsilon) * dist(&x, &x2));
            if denom > 0.0 {
                let ratio = (h.eval(t2, &x2, &s) - hs).abs() / denom;
                let cur = rep.tx_max_ratio.unwrap_or(0.0);
                rep.tx_max_ratio = Some(cur.max(ratio));
                if ratio > 1.0 + slack {
                    rep.tx_violations += 1;
                }
            }
        }
    }
    rep.pass = rep.homogeneity_max_residual <= 1e-12
        && rep.growth_violations == 0
        && rep.s_lipschitz_violations == 0
        && rep.tx_violations == 0;
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_norm_h() -> ClosedFormHamiltonian {
        let e = -Expr::Max(vec![Expr::s(1).abs(), Expr::s(2).abs()]);
        ClosedFormHamiltonian::new(2, e, 1.0).unwrap().with_moduli(0.0, 0.0)
    }

    #[test]
    fn closed_form_round_trip() {
        let h = max_norm_h();
        let back = ClosedFormHamiltonian::from_json(&h.to_json()).unwrap();
        assert_eq!(back, h);
        assert!(h.meta().x_independent);
        assert_eq!(h.eval(0.0, &[0.0, 0.0], &[0.5, -2.0]), -2.0);
    }

    #[test]
    fn audit_passes_for_a_valid_hamiltonian() {
        let region = AuditRegion {
            frame: GameFrame::new(2, 0.0, 1.0).unwrap(),
            x_lo: -1.0,
            x_hi: 1.0,
            s_radius: 3.0,
        };
        let rep = verify_regularity(&max_norm_h(), &region, 2000, 5);
        assert!(rep.pass, "{rep:?}");
        assert!(rep.growth_max_ratio <= 1.0);
    }

    #[test]
    fn audit_catches_too_small_upsilon() {
        let e = -Expr::Max(vec![Expr::s(1).abs(), Expr::s(2).abs()]);
        let h = ClosedFormHamiltonian::new(2, e, 0.5).unwrap();
        let region = AuditRegion {
            frame: GameFrame::new(2, 0.0, 1.0).unwrap(),
            x_lo: -1.0,
            x_hi: 1.0,
            s_radius: 3.0,
        };
        let rep = verify_regularity(&h, &region, 500, 5);
        assert!(!rep.pass);
        assert!(rep.growth_violations > 0);
    }

    #[test]
    fn negative_upsilon_is_rejected() {
        assert!(matches!(
            ClosedFormHamiltonian::new(1, Expr::s(1), -1.0),
            Err(Error::MissingMetadata(_))
        ));
    }
}
