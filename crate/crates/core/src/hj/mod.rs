//! Numerical certificates that a game's value is the candidate: a monotone
//! Lax-Friedrichs solve of the Hamilton-Jacobi equation backward from the
//! terminal payoff, dynamic programming on the game itself, and pointwise
//! checks of the minimax inequalities.

mod dp;
mod grid;
mod lf;
mod spot;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Candidate, GameFrame};

pub use dp::{solve_dp, solve_dp_pair, DpConfig, DpPair};
pub use grid::{Grid, MAX_GRID_DIM};
pub use lf::{solve_lf, Dissipation, LfConfig};
pub use spot::{minimax_spot_check, SpotReport, SpotWitness};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    LaxFriedrichs,
    DynamicProgramming,
}

/// `σ(x) = φ(θ0, x)` with a sampled growth constant.
#[derive(Clone, Debug)]
pub struct TerminalPayoff {
    candidate: Candidate,
    pub growth: f64,
}

impl TerminalPayoff {
    pub fn from_candidate(c: &Candidate, grid: &Grid) -> Self {
        let theta0 = c.frame.theta0;
        let growth = (0..grid.len())
            .map(|k| {
                let x = grid.coords(k);
                c.eval(theta0, &x).abs() / (1.0 + crate::geometry::norm(&x))
            })
            .fold(0.0, f64::max);
        Self {
            candidate: c.clone(),
            growth,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.candidate.eval(self.candidate.frame.theta0, x)
    }

    pub fn on_grid(&self, grid: &Grid) -> Vec<f64> {
        (0..grid.len()).map(|k| self.eval(&grid.coords(k))).collect()
    }
}

/// Recorded time levels of a backward solve, latest time first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueField {
    pub scheme: Scheme,
    pub frame: GameFrame,
    pub grid: Grid,
    pub dt: f64,
    pub steps: usize,
    /// Per-axis bound on characteristic speed; sets the comparison margin.
    pub speed: Vec<f64>,
    pub times: Vec<f64>,
    pub levels: Vec<Vec<f64>>,
}

impl ValueField {
    /// The level at `t0`.
    pub fn initial(&self) -> &[f64] {
        self.levels.last().expect("a field always holds its terminal level")
    }

    /// Nodes at least `(θ0 - t) · max speed` away from every box face.
    pub fn interior_nodes(&self, t: f64) -> Vec<usize> {
        let margin = (self.frame.theta0 - t) * self.speed.iter().copied().fold(0.0, f64::max);
        let g = &self.grid;
        (0..g.len())
            .filter(|&k| {
                let x = g.coords(k);
                (0..g.dim()).all(|i| x[i] - g.lo[i] >= margin - 1e-12 && g.hi[i] - x[i] >= margin - 1e-12)
            })
            .collect()
    }

    /// Every recorded level next to the analytic value and the error.
    pub fn write_csv(&self, path: &Path, oracle: &dyn Fn(f64, &[f64]) -> f64) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.grid.dim()).map(|i| format!("x{i}")));
        header.extend(["value", "analytic", "abs_error"].map(String::from));
        w.write_record(&header)?;
        for (t, level) in self.times.iter().zip(&self.levels) {
            for (k, v) in level.iter().enumerate() {
                let x = self.grid.coords(k);
                let exact = oracle(*t, &x);
                let mut row = vec![format!("{t:e}")];
                row.extend(x.iter().map(|c| format!("{c:e}")));
                row.push(format!("{v:e}"));
                row.push(format!("{exact:e}"));
                row.push(format!("{:e}", (v - exact).abs()));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelError {
    pub t: f64,
    pub nodes: usize,
    pub max_abs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementRow {
    pub points: Vec<usize>,
    pub spacing: Vec<f64>,
    pub dt: f64,
    pub max_abs: f64,
    /// Previous row's error over this one's.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub max_abs: f64,
    pub mean_abs: f64,
    pub compared: usize,
    pub worst_t: f64,
    pub worst_x: Vec<f64>,
    pub levels: Vec<LevelError>,
    pub tolerance: f64,
    pub pass: bool,
    pub refinement: Vec<RefinementRow>,
}

/// Error of `field` against `oracle(t, x)` over the interior of every
/// recorded level.
pub fn compare(field: &ValueField, oracle: &dyn Fn(f64, &[f64]) -> f64, tolerance: f64) -> Result<ErrorStats> {
    let mut max_abs: f64 = 0.0;
    let mut sum = 0.0;
    let mut compared = 0;
    let mut worst = (field.frame.theta0, vec![]);
    let mut levels = Vec::new();
    for (t, values) in field.times.iter().zip(&field.levels) {
        let nodes = field.interior_nodes(*t);
        let mut level_max: f64 = 0.0;
        for &k in &nodes {
            let x = field.grid.coords(k);
            let e = (values[k] - oracle(*t, &x)).abs();
            if e > max_abs {
                max_abs = e;
                worst = (*t, x);
            }
            level_max = level_max.max(e);
            sum += e;
        }
        compared += nodes.len();
        levels.push(LevelError {
            t: *t,
            nodes: nodes.len(),
            max_abs: level_max,
        });
    }
    if compared == 0 {
        return Err(Error::Config("no grid node lies inside the comparison region".into()));
    }
    Ok(ErrorStats {
        max_abs,
        mean_abs: sum / compared as f64,
        compared,
        worst_t: worst.0,
        worst_x: worst.1,
        levels,
        tolerance,
        pass: max_abs <= tolerance,
        refinement: Vec::new(),
    })
}

/// Errors of successive solves, with the ratio between neighbours.
pub fn refinement_table(runs: &[(&ValueField, &ErrorStats)]) -> Vec<RefinementRow> {
    let mut rows: Vec<RefinementRow> = Vec::new();
    for (field, stats) in runs {
        let ratio = rows.last().map(|prev| prev.max_abs / stats.max_abs);
        rows.push(RefinementRow {
            points: field.grid.points.clone(),
            spacing: field.grid.spacing.clone(),
            dt: field.dt,
            max_abs: stats.max_abs,
            ratio,
        });
    }
    rows
}

/// Level indices to keep for `steps` steps and at most `snapshots` levels
/// besides the terminal one; `None` keeps all.
pub(crate) fn record_stride(steps: usize, snapshots: Option<usize>) -> usize {
    match snapshots {
        Some(k) if k > 0 => steps.div_ceil(k).max(1),
        _ => 1,
    }
}

pub(crate) fn check_finite(values: &[f64], level: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { level })
    }
}
