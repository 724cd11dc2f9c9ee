//! Small dense linear-algebra helpers on `Vec<f64>` plus direction sets on spheres.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Relative cutoff for singular values when computing ranks.
pub const RANK_TOL: f64 = 1e-10;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scale(a: &[f64], k: f64) -> Vec<f64> {
    a.iter().map(|x| x * k).collect()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Max-norm distance, used for deduplication.
pub fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn normalized(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm(a);
    (n > 0.0 && n.is_finite()).then(|| scale(a, 1.0 / n))
}

/// Orthonormal bases of the row space and of its orthogonal complement (the
/// null space) of the matrix whose rows are `rows`, all of length `dim`.
pub fn row_and_null_space(rows: &[Vec<f64>], dim: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    if rows.is_empty() {
        return (Vec::new(), identity_rows(dim));
    }
    // Pad to at least dim rows so the SVD yields a full right-singular basis.
    let m = rows.len().max(dim);
    let mut a = DMatrix::<f64>::zeros(m, dim);
    for (i, r) in rows.iter().enumerate() {
        for (j, v) in r.iter().enumerate() {
            a[(i, j)] = *v;
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = RANK_TOL * smax.max(1.0);
    let mut row = Vec::new();
    let mut null = Vec::new();
    for k in 0..dim {
        let v: Vec<f64> = (0..dim).map(|j| v_t[(k, j)]).collect();
        if svd.singular_values[k] > cutoff {
            row.push(v);
        } else {
            null.push(v);
        }
    }
    (row, null)
}

pub fn identity_rows(dim: usize) -> Vec<Vec<f64>> {
    (0..dim)
        .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Solve a square system; `None` when it is numerically singular.
pub fn solve_square(rows: &[Vec<f64>], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = rows.len();
    if n == 0 {
        return Some(Vec::new());
    }
    let a = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > RANK_TOL * smax.max(1.0)) {
        return None;
    }
    let b = DVector::from_column_slice(rhs);
    svd.solve(&b, 0.0).ok().map(|x| x.iter().cloned().collect())
}

/// Minimum-norm solution of `rows · x = rhs` and a null-space basis, or `None`
/// when the system is inconsistent beyond `tol`.
pub fn affine_solution(
    rows: &[Vec<f64>],
    rhs: &[f64],
    dim: usize,
    tol: f64,
) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
    let (_, null) = row_and_null_space(rows, dim);
    if rows.is_empty() {
        return Some((vec![0.0; dim], null));
    }
    let m = rows.len();
    let a = DMatrix::from_fn(m, dim, |i, j| rows[i][j]);
    let b = DVector::from_column_slice(rhs);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let x = svd.solve(&b, RANK_TOL * smax.max(1.0)).ok()?;
    let resid = (&a * &x - &b).amax();
    if resid > tol {
        return None;
    }
    Some((x.iter().cloned().collect(), null))
}

/// Quasi-uniform unit vectors in `dim` dimensions.
///
/// One dimension gives the two signs, two dimensions equally spaced angles,
/// three a Fibonacci lattice; above that seeded Gaussian draws.
pub fn sphere_points(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    match dim {
        0 => Vec::new(),
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
                    let r = (1.0 - z * z).max(0.0).sqrt();
                    let a = golden * k as f64;
                    vec![r * a.cos(), r * a.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .filter_map(|_| {
                    let v: Vec<f64> = (0..dim).map(|_| standard_normal(&mut rng)).collect();
                    normalized(&v)
                })
                .collect()
        }
    }
}

/// Box-Muller; enough for direction sampling.
pub fn standard_normal<R: rand::Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Random point of the probability simplex with `k` vertices (flat Dirichlet).
pub fn simplex_weights<R: rand::Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k)
        .map(|_| -rng.gen_range(f64::MIN_POSITIVE..1.0).ln())
        .collect();
    let total: f64 = e.iter().sum();
    e.into_iter().map(|v| v / total).collect()
}

/// Deterministic 64-bit mix of a seed and a list of floats.
pub fn mix_seed(seed: u64, values: &[f64]) -> u64 {
    let mut h = seed ^ 0x9E37_79B9_7F4A_7C15;
    for v in values {
        h ^= v.to_bits();
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_and_null_split() {
        let (row, null) = row_and_null_space(&[vec![1.0, 1.0, 0.0], vec![2.0, 2.0, 0.0]], 3);
        assert_eq!(row.len(), 1);
        assert_eq!(null.len(), 2);
        for v in &null {
            assert!(dot(v, &[1.0, 1.0, 0.0]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_system_is_rejected() {
        assert!(solve_square(&[vec![1.0, 2.0], vec![2.0, 4.0]], &[1.0, 2.0]).is_none());
        let x = solve_square(&[vec![2.0, 0.0], vec![0.0, 4.0]], &[1.0, 2.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn inconsistent_affine_system() {
        let rows = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        assert!(affine_solution(&rows, &[1.0, 2.0], 2, 1e-10).is_none());
        let (x, null) = affine_solution(&rows, &[1.0, 1.0], 2, 1e-10).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert_eq!(null.len(), 1);
    }

    #[test]
    fn sphere_points_are_unit() {
        for dim in 1..=5 {
            for p in sphere_points(dim, 40, 7) {
                assert!((norm(&p) - 1.0).abs() < 1e-12);
            }
        }
    }
}
