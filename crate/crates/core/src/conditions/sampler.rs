use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::expr::{PiecewiseForm, Position};
use crate::geometry::{affine_solution, dot};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    /// Spatial box `[x_lo, x_hi]^n`.
    pub x_lo: f64,
    pub x_hi: f64,
    /// Lattice points per axis.
    pub lattice: usize,
    /// Interior times `t0 + (θ0 - t0) k / (m + 1)`, `k = 1..=m`.
    pub interior_times: usize,
    /// Refinement time floors as fractions of the horizon above `t0`.
    pub t_floors: Vec<f64>,
    /// Interior combinations drawn per one-sided Dini projection.
    pub e2_interior: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            x_lo: -1.0,
            x_hi: 1.0,
            lattice: 9,
            interior_times: 7,
            t_floors: vec![0.1, 0.01, 0.001],
            e2_interior: 50,
            seed: 0,
        }
    }
}

/// Positions added at one refinement level.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleLevel {
    /// Absolute time floor introduced at this level, `None` for the base set.
    pub t_floor: Option<f64>,
    pub positions: Vec<Position>,
}

/// Base positions followed by one level per time floor. Each level holds only
/// the positions it adds; the growth check accumulates them.
pub fn sample_levels(pw: &PiecewiseForm, cfg: &SamplingConfig) -> Vec<SampleLevel> {
    let f = pw.frame;
    let mut base_times: Vec<f64> = (1..=cfg.interior_times)
        .map(|k| f.t0 + f.horizon() * k as f64 / (cfg.interior_times + 1) as f64)
        .collect();
    // Time-only kinks get their own slice.
    for h in pw.hyperplanes.iter().filter(|h| h.is_time_only()) {
        let t = -h.offset / h.normal[0];
        if f.is_interior_time(t) {
            base_times.push(t);
        }
    }
    base_times.sort_by(f64::total_cmp);
    base_times.dedup();
    let mut levels = vec![SampleLevel {
        t_floor: None,
        positions: base_times.iter().flat_map(|t| slice(pw, cfg, *t)).collect(),
    }];
    for frac in &cfg.t_floors {
        let t = f.t0 + f.horizon() * frac;
        if f.is_interior_time(t) && !base_times.contains(&t) {
            levels.push(SampleLevel {
                t_floor: Some(t),
                positions: slice(pw, cfg, t),
            });
        }
    }
    levels
}

fn lattice_axis(cfg: &SamplingConfig) -> Vec<f64> {
    let m = cfg.lattice.max(2);
    (0..m)
        .map(|k| {
            let v = cfg.x_lo + (cfg.x_hi - cfg.x_lo) * k as f64 / (m - 1) as f64;
            if v.abs() < 1e-15 {
                0.0
            } else {
                v
            }
        })
        .collect()
}

/// Lattice positions at time `t` plus their projections onto every kink
/// hyperplane and every intersection of up to three of them.
fn slice(pw: &PiecewiseForm, cfg: &SamplingConfig, t: f64) -> Vec<Position> {
    let n = pw.n();
    let axis = lattice_axis(cfg);
    let lattice: Vec<Vec<f64>> = (0..n).map(|_| axis.iter().copied()).multi_cartesian_product().collect();
    let in_box = |x: &[f64]| x.iter().all(|v| *v >= cfg.x_lo - 1e-12 && *v <= cfg.x_hi + 1e-12);
    let mut out: Vec<Vec<f64>> = lattice.clone();

    let planes = &pw.hyperplanes;
    for size in 1..=planes.len().min(3) {
        for subset in (0..planes.len()).combinations(size) {
            let rows: Vec<Vec<f64>> = subset.iter().map(|j| planes[*j].normal[1..].to_vec()).collect();
            let rhs: Vec<f64> = subset
                .iter()
                .map(|j| -(planes[*j].offset + planes[*j].normal[0] * t))
                .collect();
            let Some((x0, null)) = affine_solution(&rows, &rhs, n, 1e-12) else {
                continue;
            };
            for y in &lattice {
                let mut x = x0.clone();
                let diff: Vec<f64> = y.iter().zip(&x0).map(|(a, b)| a - b).collect();
                for b in &null {
                    let c = dot(&diff, b);
                    for i in 0..n {
                        x[i] += c * b[i];
                    }
                }
                // Remove rounding residue so the point sits on every plane.
                for v in x.iter_mut() {
                    if v.abs() < 1e-14 {
                        *v = 0.0;
                    }
                }
                if in_box(&x) {
                    out.push(x);
                }
            }
        }
    }
    out.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    out.dedup_by(|a, b| a.iter().zip(b.iter()).all(|(p, q)| (p - q).abs() <= 1e-12));
    out.into_iter().map(|x| Position::new(t, x)).collect()
}
