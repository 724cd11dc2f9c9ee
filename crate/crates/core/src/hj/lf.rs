use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_finite, record_stride, Grid, Scheme, ValueField};
use crate::error::{Error, Result};
use crate::expr::GameFrame;
use crate::hamiltonian::Hamiltonian;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dissipation {
    /// One coefficient per axis from the metadata bound over the whole box.
    Global,
    /// Per node, the steepest secant of `H` along each axis over the
    /// costates spanned by the one-sided differences, capped by the global
    /// bound.
    Local,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LfConfig {
    pub cfl: f64,
    /// Fixed step; chosen from `cfl` when absent.
    pub dt: Option<f64>,
    pub dissipation: Dissipation,
    /// Levels kept besides the terminal one; `None` keeps every level.
    pub snapshots: Option<usize>,
}

impl Default for LfConfig {
    fn default() -> Self {
        Self {
            cfl: 0.9,
            dt: None,
            dissipation: Dissipation::Local,
            snapshots: Some(20),
        }
    }
}

/// Backward march `V(t-Δt) = V(t) + Δt [H(t, x, (D⁺+D⁻)/2) + Σ αᵢ (Dᵢ⁺-Dᵢ⁻)/2]`
/// from `V(θ0) = σ`, one-sided at the box faces.
pub fn solve_lf(h: &dyn Hamiltonian, sigma: &[f64], grid: &Grid, frame: GameFrame, cfg: &LfConfig) -> Result<ValueField> {
    let n = grid.dim();
    if h.dim() != n || frame.n != n {
        return Err(Error::Config(format!(
            "grid dimension {n}, Hamiltonian dimension {}, frame dimension {}",
            h.dim(),
            frame.n
        )));
    }
    if sigma.len() != grid.len() {
        return Err(Error::Config("terminal data does not match the grid".into()));
    }
    h.meta().validate()?;
    let bound = h.meta().s_lipschitz(grid.max_norm_in_box());
    let alpha_global = vec![bound; n];
    let rate: f64 = (0..n).map(|i| alpha_global[i] / grid.spacing[i]).sum();
    let horizon = frame.horizon();
    let dt_max = if rate > 0.0 { cfg.cfl / rate } else { horizon };
    let steps = match cfg.dt {
        Some(dt) => {
            if !(dt > 0.0) || dt * rate > cfg.cfl * (1.0 + 1e-12) {
                return Err(Error::Cfl(format!(
                    "dt = {dt} gives Δt Σ αᵢ/Δxᵢ = {} > {}",
                    dt * rate,
                    cfg.cfl
                )));
            }
            (horizon / dt).round().max(1.0) as usize
        }
        None => (horizon / dt_max).ceil().max(1.0) as usize,
    };
    let dt = horizon / steps as f64;
    if dt * rate > cfg.cfl * (1.0 + 1e-9) {
        return Err(Error::Cfl(format!("dt = {dt} does not divide the horizon within the CFL limit")));
    }
    let stride = record_stride(steps, cfg.snapshots);
    let coords: Vec<Vec<f64>> = (0..grid.len()).map(|k| grid.coords(k)).collect();
    let multi: Vec<Vec<usize>> = (0..grid.len()).map(|k| grid.multi_index(k)).collect();

    let mut current = sigma.to_vec();
    let mut times = vec![frame.theta0];
    let mut levels = vec![current.clone()];
    for step in 1..=steps {
        let t = frame.theta0 - (step - 1) as f64 * dt;
        let prev = &current;
        let next: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let mut dm = [0.0; 3];
                let mut dp = [0.0; 3];
                for i in 0..n {
                    let s = grid.stride(i);
                    let (j, last) = (multi[k][i], grid.points[i] - 1);
                    let back = (j > 0).then(|| (prev[k] - prev[k - s]) / grid.spacing[i]);
                    let fwd = (j < last).then(|| (prev[k + s] - prev[k]) / grid.spacing[i]);
                    let (m, p) = match (back, fwd) {
                        (Some(m), Some(p)) => (m, p),
                        (Some(m), None) => (m, m),
                        (None, Some(p)) => (p, p),
                        (None, None) => (0.0, 0.0),
                    };
                    dm[i] = m;
                    dp[i] = p;
                }
                let central: Vec<f64> = (0..n).map(|i| 0.5 * (dm[i] + dp[i])).collect();
                let x = &coords[k];
                let alpha = match cfg.dissipation {
                    Dissipation::Global => alpha_global.clone(),
                    Dissipation::Local => local_alpha(h, t, x, &dm[..n], &dp[..n], bound),
                };
                let mut update = h.eval(t, x, &central);
                for i in 0..n {
                    update += alpha[i] * 0.5 * (dp[i] - dm[i]);
                }
                prev[k] + dt * update
            })
            .collect();
        check_finite(&next, step)?;
        current = next;
        if step % stride == 0 || step == steps {
            times.push(frame.theta0 - step as f64 * dt);
            levels.push(current.clone());
        }
    }
    if let Some(t) = times.last_mut() {
        *t = frame.t0;
    }
    Ok(ValueField {
        scheme: Scheme::LaxFriedrichs,
        frame,
        grid: grid.clone(),
        dt,
        steps,
        speed: alpha_global,
        times,
        levels,
    })
}

/// Steepest secant of `H` along each axis between neighbouring points of the
/// 3-per-axis lattice spanning `[min(D⁻,D⁺), max(D⁻,D⁺)]`.
fn local_alpha(h: &dyn Hamiltonian, t: f64, x: &[f64], dm: &[f64], dp: &[f64], cap: f64) -> Vec<f64> {
    let n = dm.len();
    let lo: Vec<f64> = (0..n).map(|i| dm[i].min(dp[i])).collect();
    let hi: Vec<f64> = (0..n).map(|i| dm[i].max(dp[i])).collect();
    let total = 3usize.pow(n as u32);
    let point = |code: usize| -> Vec<f64> {
        let mut c = code;
        (0..n)
            .map(|i| {
                let k = c % 3;
                c /= 3;
                lo[i] + (hi[i] - lo[i]) * k as f64 / 2.0
            })
            .collect()
    };
    let values: Vec<f64> = (0..total).map(|code| h.eval(t, x, &point(code))).collect();
    let mut alpha = vec![0.0; n];
    let mut step = 1;
    for i in 0..n {
        let width = (hi[i] - lo[i]) / 2.0;
        if width > 0.0 {
            for code in 0..total {
                if (code / step) % 3 < 2 {
                    let slope = (values[code + step] - values[code]).abs() / width;
                    alpha[i] = f64::max(alpha[i], slope);
                }
            }
        }
        alpha[i] = alpha[i].min(cap);
        step *= 3;
    }
    alpha
}
