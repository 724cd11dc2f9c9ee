use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_GRID_DIM: usize = 3;

/// Uniform tensor grid over a box, last axis fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points: Vec<usize>,
    pub spacing: Vec<f64>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn uniform(lo: Vec<f64>, hi: Vec<f64>, points: Vec<usize>) -> Result<Self> {
        let n = lo.len();
        if n == 0 || hi.len() != n || points.len() != n {
            return Err(Error::Config("grid bounds and point counts must share one positive dimension".into()));
        }
        if n > MAX_GRID_DIM {
            return Err(Error::DimensionUnsupported { n, max: MAX_GRID_DIM });
        }
        if points.iter().any(|&p| p < 2) {
            return Err(Error::Config("each grid axis needs at least two points".into()));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
            return Err(Error::Config(format!("empty grid box {lo:?}..{hi:?}")));
        }
        let spacing = (0..n).map(|i| (hi[i] - lo[i]) / (points[i] - 1) as f64).collect();
        let mut strides = vec![1; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * points[i + 1];
        }
        Ok(Self {
            lo,
            hi,
            points,
            spacing,
            strides,
        })
    }

    /// Same box and count on every axis.
    pub fn cube(n: usize, lo: f64, hi: f64, points: usize) -> Result<Self> {
        Self::uniform(vec![lo; n], vec![hi; n], vec![points; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.points.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        (0..self.dim()).map(|i| (idx / self.strides[i]) % self.points[i]).collect()
    }

    pub fn coords(&self, idx: usize) -> Vec<f64> {
        self.multi_index(idx)
            .iter()
            .enumerate()
            .map(|(i, &k)| self.axis_coord(i, k))
            .collect()
    }

    pub fn axis_coord(&self, axis: usize, k: usize) -> f64 {
        if k + 1 == self.points[axis] {
            self.hi[axis]
        } else {
            self.lo[axis] + k as f64 * self.spacing[axis]
        }
    }

    pub fn max_norm_in_box(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(a, b)| a.abs().max(b.abs()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Multilinear interpolation with each coordinate clamped into the box.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let n = self.dim();
        let mut base = 0;
        let mut frac = [0.0; MAX_GRID_DIM];
        let mut steps = [0usize; MAX_GRID_DIM];
        for i in 0..n {
            let c = x[i].clamp(self.lo[i], self.hi[i]);
            let mut r = (c - self.lo[i]) / self.spacing[i];
            // Snap to nodes so that queries at grid points are exact copies.
            if (r - r.round()).abs() <= 1e-10 {
                r = r.round();
            }
            let k = (r.floor() as usize).min(self.points[i] - 2);
            frac[i] = (r - k as f64).clamp(0.0, 1.0);
            steps[i] = self.strides[i];
            base += k * self.strides[i];
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut idx = base;
            for i in 0..n {
                if corner >> i & 1 == 1 {
                    w *= frac[i];
                    idx += steps[i];
                } else {
                    w *= 1.0 - frac[i];
                }
            }
            if w != 0.0 {
                acc += w * values[idx];
            }
        }
        acc
    }
}
