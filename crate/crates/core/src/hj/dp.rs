use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_finite, record_stride, Grid, Scheme, ValueField};
use crate::error::{Error, Result};
use crate::expr::GameFrame;
use crate::game::{max_min, GameDynamics, Order};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpConfig {
    pub dt: f64,
    /// Ball-control mesh spacing; ignored for finite control sets.
    pub delta: f64,
    /// How far past the box a step may land before the clamped
    /// interpolation is refused.
    pub padding: f64,
    pub snapshots: Option<usize>,
    pub seed: u64,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            delta: 0.25,
            padding: f64::INFINITY,
            snapshots: None,
            seed: 0,
        }
    }
}

/// `V(t)(x) = opt_v opt_u V(t+Δt)(x + Δt f(t, x, u, v))` from `V(θ0) = σ`,
/// optimizing in `order`.
pub fn solve_dp(game: &GameDynamics, sigma: &[f64], grid: &Grid, frame: GameFrame, order: Order, cfg: &DpConfig) -> Result<ValueField> {
    let n = grid.dim();
    if game.dim() != n || frame.n != n {
        return Err(Error::Config(format!("grid dimension {n}, game dimension {}", game.dim())));
    }
    if sigma.len() != grid.len() {
        return Err(Error::Config("terminal data does not match the grid".into()));
    }
    if !(cfg.dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {}", cfg.dt)));
    }
    let horizon = frame.horizon();
    let steps = (horizon / cfg.dt).round().max(1.0) as usize;
    let dt = horizon / steps as f64;
    let mesh = game.mesh(cfg.delta)?;
    let controls = mesh.controls();
    let all: Vec<_> = (0..controls).map(|k| mesh.control(k)).collect();
    let mut outer: Vec<usize> = (0..controls).collect();
    outer.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let coords: Vec<Vec<f64>> = (0..grid.len()).map(|k| grid.coords(k)).collect();
    let stride = record_stride(steps, cfg.snapshots);

    let mut current = sigma.to_vec();
    let mut times = vec![frame.theta0];
    let mut levels = vec![current.clone()];
    for step in 1..=steps {
        let t = frame.theta0 - step as f64 * dt;
        let next_values = &current;
        let next: Vec<Result<f64>> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let x = &coords[k];
                // payoff[u * controls + v]
                let mut payoff = vec![0.0; controls * controls];
                for (ui, u) in all.iter().enumerate() {
                    for (vi, v) in all.iter().enumerate() {
                        let f = game.dynamics(t, x, u, v);
                        let y: Vec<f64> = x.iter().zip(&f).map(|(a, b)| a + dt * b).collect();
                        for i in 0..n {
                            if y[i] < grid.lo[i] - cfg.padding || y[i] > grid.hi[i] + cfg.padding {
                                return Err(Error::StepLeavesBox { level: step });
                            }
                        }
                        payoff[ui * controls + vi] = grid.interpolate(next_values, &y);
                    }
                }
                Ok(match order {
                    Order::Maxmin => max_min(&outer, controls, |v, u| payoff[u * controls + v]).value,
                    Order::Minmax => -max_min(&outer, controls, |u, v| -payoff[u * controls + v]).value,
                })
            })
            .collect();
        current = next.into_iter().collect::<Result<_>>()?;
        check_finite(&current, step)?;
        if step % stride == 0 || step == steps {
            times.push(t);
            levels.push(current.clone());
        }
    }
    if let Some(t) = times.last_mut() {
        *t = frame.t0;
    }
    // Characteristics of the Hamilton-Jacobi equation, not the raw control
    // speed: clamping bias travels no faster than H's costate Lipschitz bound.
    let speed = vec![game.hamiltonian().meta().s_lipschitz(grid.max_norm_in_box()); n];
    Ok(ValueField {
        scheme: Scheme::DynamicProgramming,
        frame,
        grid: grid.clone(),
        dt,
        steps,
        speed,
        times,
        levels,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpPair {
    pub maxmin: ValueField,
    pub minmax: ValueField,
    /// `(level, node)` pairs where `maxmin > minmax`.
    pub order_violations: Vec<(usize, usize)>,
}

/// Both orders on the same grid and mesh, with the weak-duality check at
/// every recorded node.
pub fn solve_dp_pair(game: &GameDynamics, sigma: &[f64], grid: &Grid, frame: GameFrame, cfg: &DpConfig) -> Result<DpPair> {
    let lower = solve_dp(game, sigma, grid, frame, Order::Maxmin, cfg)?;
    let upper = solve_dp(game, sigma, grid, frame, Order::Minmax, cfg)?;
    let mut order_violations = Vec::new();
    for (l, (a, b)) in lower.levels.iter().zip(&upper.levels).enumerate() {
        for (k, (p, q)) in a.iter().zip(b).enumerate() {
            if p > q {
                order_violations.push((l, k));
            }
        }
    }
    Ok(DpPair {
        maxmin: lower,
        minmax: upper,
        order_violations,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::expr::Expr;
    use crate::game::GameKind;
    use crate::hamiltonian::{ClosedFormHamiltonian, Hamiltonian};

    #[test]
    fn frozen_dynamics_keep_sigma() {
        let h: Arc<dyn Hamiltonian> = Arc::new(ClosedFormHamiltonian::new(1, Expr::c(0.0), 0.0).unwrap());
        let game = GameDynamics::unchecked(h, GameKind::Isaacs1d).unwrap();
        let g = Grid::cube(1, -1.0, 1.0, 21).unwrap();
        let sigma: Vec<f64> = (0..g.len()).map(|k| g.coords(k)[0].abs()).collect();
        let frame = GameFrame::new(1, 0.0, 1.0).unwrap();
        let f = solve_dp(&game, &sigma, &g, frame, Order::Maxmin, &DpConfig::default()).unwrap();
        assert!(f.levels.iter().all(|l| l == &sigma));
    }

    #[test]
    fn padding_violation_is_reported() {
        let h: Arc<dyn Hamiltonian> = Arc::new(ClosedFormHamiltonian::new(1, -Expr::s(1).abs(), 1.0).unwrap());
        let game = GameDynamics::unchecked(h, GameKind::Isaacs1d).unwrap();
        let g = Grid::cube(1, -1.0, 1.0, 21).unwrap();
        let sigma = vec![0.0; g.len()];
        let frame = GameFrame::new(1, 0.0, 1.0).unwrap();
        let cfg = DpConfig { dt: 0.1, padding: 0.0, ..DpConfig::default() };
        assert!(matches!(
            solve_dp(&game, &sigma, &g, frame, Order::Maxmin, &cfg),
            Err(Error::StepLeavesBox { level: 1 })
        ));
    }
}
