//! Local nonsmooth analysis of a piecewise form at a position: limiting
//! gradients, exact Dini sub- and superdifferentials, the Clarke hull, and
//! the one-sided differentiability class.

use itertools::Itertools;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{PiecewiseForm, PointClass, Position};
use crate::geometry::{dist_inf, dot, mix_seed, normalized, row_and_null_space, simplex_weights, solve_square};
use crate::lp::{hull_vertices, in_convex_hull};

/// Largest state dimension handled by the exact local analysis.
pub const MAX_DIM: usize = 3;

/// Tolerance for merging gradients and testing polytope membership.
pub const MERGE_TOL: f64 = 1e-9;

/// A limiting gradient `s` with `h = -∂tφ` from the adjacent pieces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct E1Entry {
    pub s: Vec<f64>,
    pub h: f64,
    pub pieces: Vec<usize>,
    /// Every `h` seen for this `s`; more than one distinct value is a conflict.
    pub h_values: Vec<f64>,
    pub conflict: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiniKind {
    #[serde(rename = "sub")]
    Sub,
    #[serde(rename = "super")]
    Super,
}

/// Dini sub- or superdifferential as a polytope of `(a, s)` vectors.
///
/// `inequalities` are stored as `row · w <= rhs` whatever the kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiniSet {
    pub kind: DiniKind,
    pub vertices: Vec<Vec<f64>>,
    pub equalities: Vec<(Vec<f64>, f64)>,
    pub inequalities: Vec<(Vec<f64>, f64)>,
}

impl DiniSet {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn contains(&self, w: &[f64], tol: f64) -> bool {
        !self.is_empty()
            && self
                .equalities
                .iter()
                .all(|(r, c)| (dot(r, w) - c).abs() <= tol * (1.0 + c.abs()))
            && self
                .inequalities
                .iter()
                .all(|(r, b)| dot(r, w) <= b + tol * (1.0 + b.abs()))
    }

    /// Vertices of the projection onto the `s` coordinates.
    pub fn s_projection(&self) -> Result<Vec<Vec<f64>>> {
        let pts: Vec<Vec<f64>> = self.vertices.iter().map(|v| v[1..].to_vec()).collect();
        hull_vertices(&pts, MERGE_TOL)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CjClass {
    #[serde(rename = "smooth")]
    Smooth,
    #[serde(rename = "CJ-")]
    CjMinus,
    #[serde(rename = "CJ+")]
    CjPlus,
    #[serde(rename = "neither")]
    Neither,
}

/// Gradients a one-sided Dini set adds beyond the limiting ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct E2Set {
    pub source: DiniKind,
    /// Vertices of the `s`-projection of the Dini set.
    pub projection: Vec<Vec<f64>>,
    /// Indices of limiting gradients lying in the projection.
    pub limiting_inside: Vec<usize>,
    /// Gradients to test: projection vertices and seeded interior
    /// combinations, none equal to a limiting gradient.
    pub samples: Vec<Vec<f64>>,
    pub interior_requested: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitingData {
    pub position: Position,
    pub e1: Vec<E1Entry>,
    pub e2: Option<E2Set>,
    pub cj_class: CjClass,
}

/// Everything the condition checks need at one position.
#[derive(Clone, Debug)]
pub struct LocalAnalysis {
    pub position: Position,
    pub smooth: bool,
    pub on: Vec<usize>,
    pub e1: Vec<E1Entry>,
    pub sub: DiniSet,
    pub sup: DiniSet,
    pub cj_class: CjClass,
    pub e2: Option<E2Set>,
    /// Irredundant generators `(a, s)` of the Clarke hull.
    pub clarke: Vec<Vec<f64>>,
}

/// Orthonormal split of `(t, x)` space at a point: the lineality space where
/// every adjacent piece agrees, its complement, and the extreme rays of the
/// fan cut out by the active hyperplanes.
struct LocalFan {
    lineality: Vec<Vec<f64>>,
    span: Vec<Vec<f64>>,
    rays: Vec<Vec<f64>>,
}

fn local_fan(pw: &PiecewiseForm, on: &[usize]) -> LocalFan {
    let d = pw.n() + 1;
    let normals: Vec<Vec<f64>> = on.iter().map(|j| pw.hyperplanes[*j].normal.clone()).collect();
    let (span, lineality) = row_and_null_space(&normals, d);
    let r = span.len();
    let mut rays: Vec<Vec<f64>> = Vec::new();
    if r > 0 {
        // Normals expressed in span coordinates.
        let local: Vec<Vec<f64>> = normals
            .iter()
            .map(|a| span.iter().map(|e| dot(a, e)).collect())
            .collect();
        for subset in (0..local.len()).combinations(r - 1) {
            let rows: Vec<Vec<f64>> = subset.iter().map(|k| local[*k].clone()).collect();
            let (_, null) = row_and_null_space(&rows, r);
            if null.len() != 1 {
                continue;
            }
            let dir: Vec<f64> = (0..d)
                .map(|i| span.iter().zip(&null[0]).map(|(e, c)| e[i] * c).sum())
                .collect();
            let Some(dir) = normalized(&dir) else { continue };
            for sign in [1.0, -1.0] {
                let ray: Vec<f64> = dir.iter().map(|v| v * sign).collect();
                if !rays.iter().any(|q| dist_inf(q, &ray) <= 1e-9) {
                    rays.push(ray);
                }
            }
        }
    }
    LocalFan {
        lineality,
        span,
        rays,
    }
}

fn check_dim(pw: &PiecewiseForm) -> Result<()> {
    if pw.n() > MAX_DIM {
        Err(Error::DimensionUnsupported {
            n: pw.n(),
            max: MAX_DIM,
        })
    } else {
        Ok(())
    }
}

/// One-sided derivative `lim (φ(p + αd) - φ(p)) / α` with `d = (τ, g)`.
pub fn directional_derivative(pw: &PiecewiseForm, p: &Position, d: &[f64]) -> Result<f64> {
    if !pw.frame.is_interior_time(p.t) {
        return Err(Error::NotInterior);
    }
    if d.iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroDirection);
    }
    Ok(dir_derivative(pw, &p.coords(), d))
}

fn dir_derivative(pw: &PiecewiseForm, coords: &[f64], d: &[f64]) -> f64 {
    let scale = d.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let pattern: Vec<i8> = pw
        .sign_pattern(coords)
        .iter()
        .zip(&pw.hyperplanes)
        .map(|(s, h)| {
            if *s != 0 {
                return *s;
            }
            let v = dot(&h.normal, d);
            if v.abs() <= 1e-10 * scale {
                0
            } else if v > 0.0 {
                1
            } else {
                -1
            }
        })
        .collect();
    let k = pw.pieces_matching(&pattern)[0];
    dot(&pw.pieces[k].gradient(coords), d)
}

/// Limiting gradients at `p`, one entry per distinct `s`.
pub fn limiting_gradients(pw: &PiecewiseForm, p: &Position) -> Result<Vec<E1Entry>> {
    let coords = p.coords();
    let active = match pw.classify(p) {
        PointClass::Smooth { piece } => vec![piece],
        PointClass::Nonsmooth { active, .. } => active,
    };
    let mut out: Vec<E1Entry> = Vec::new();
    for k in active {
        let g = pw.pieces[k].gradient(&coords);
        let h = -g[0];
        let s = g[1..].to_vec();
        match out.iter_mut().find(|e| dist_inf(&e.s, &s) <= MERGE_TOL) {
            Some(e) => {
                e.pieces.push(k);
                if !e.h_values.iter().any(|v| (v - h).abs() <= MERGE_TOL * (1.0 + h.abs())) {
                    e.h_values.push(h);
                    e.conflict = true;
                }
            }
            None => out.push(E1Entry {
                s,
                h,
                pieces: vec![k],
                h_values: vec![h],
                conflict: false,
            }),
        }
    }
    Ok(out)
}

/// Exact Dini sub- (`Sub`) or superdifferential (`Super`) at `p`.
pub fn dini_set(pw: &PiecewiseForm, p: &Position, kind: DiniKind) -> Result<DiniSet> {
    check_dim(pw)?;
    if !pw.frame.is_interior_time(p.t) {
        return Err(Error::NotInterior);
    }
    let coords = p.coords();
    let on: Vec<usize> = pw
        .sign_pattern(&coords)
        .iter()
        .enumerate()
        .filter(|(_, s)| **s == 0)
        .map(|(i, _)| i)
        .collect();
    let fan = local_fan(pw, &on);
    Ok(dini_from_fan(pw, &coords, &fan, kind))
}

fn dini_from_fan(pw: &PiecewiseForm, coords: &[f64], fan: &LocalFan, kind: DiniKind) -> DiniSet {
    let d = coords.len();
    let sign = match kind {
        DiniKind::Sub => 1.0,
        DiniKind::Super => -1.0,
    };
    // Along the lineality space every adjacent piece has the same slope.
    let mut base = vec![0.0; d];
    let mut equalities = Vec::new();
    for l in &fan.lineality {
        let c = dir_derivative(pw, coords, l);
        for i in 0..d {
            base[i] += c * l[i];
        }
        equalities.push((l.clone(), c));
    }
    let inequalities: Vec<(Vec<f64>, f64)> = fan
        .rays
        .iter()
        .map(|ray| {
            let b = dir_derivative(pw, coords, ray);
            (ray.iter().map(|v| sign * v).collect(), sign * b)
        })
        .collect();

    let r = fan.span.len();
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    if r == 0 {
        vertices.push(base);
    } else {
        let local: Vec<(Vec<f64>, f64)> = inequalities
            .iter()
            .map(|(row, b)| (fan.span.iter().map(|e| dot(row, e)).collect(), *b))
            .collect();
        for subset in (0..local.len()).combinations(r) {
            let rows: Vec<Vec<f64>> = subset.iter().map(|k| local[*k].0.clone()).collect();
            let rhs: Vec<f64> = subset.iter().map(|k| local[*k].1).collect();
            let Some(v) = solve_square(&rows, &rhs) else { continue };
            let feasible = local
                .iter()
                .all(|(row, b)| dot(row, &v) <= b + MERGE_TOL * (1.0 + b.abs()));
            if !feasible {
                continue;
            }
            let w: Vec<f64> = (0..d)
                .map(|i| base[i] + fan.span.iter().zip(&v).map(|(e, c)| e[i] * c).sum::<f64>())
                .collect();
            if !vertices.iter().any(|q| dist_inf(q, &w) <= MERGE_TOL) {
                vertices.push(w);
            }
        }
    }
    DiniSet {
        kind,
        vertices,
        equalities,
        inequalities,
    }
}

/// Limiting data with the differentiability class and, for one-sided
/// points, the extra gradients of the nonempty Dini set.
pub fn classify_cj(pw: &PiecewiseForm, p: &Position, interior: usize, seed: u64) -> Result<LimitingData> {
    let a = analyze(pw, p, interior, seed)?;
    Ok(LimitingData {
        position: a.position,
        e1: a.e1,
        e2: a.e2,
        cj_class: a.cj_class,
    })
}

pub fn analyze(pw: &PiecewiseForm, p: &Position, interior: usize, seed: u64) -> Result<LocalAnalysis> {
    check_dim(pw)?;
    if !pw.frame.is_interior_time(p.t) {
        return Err(Error::NotInterior);
    }
    let coords = p.coords();
    let e1 = limiting_gradients(pw, p)?;
    let class = pw.classify(p);
    let on = match &class {
        PointClass::Smooth { .. } => Vec::new(),
        PointClass::Nonsmooth { on, .. } => on.clone(),
    };
    let fan = local_fan(pw, &on);
    let sub = dini_from_fan(pw, &coords, &fan, DiniKind::Sub);
    let sup = dini_from_fan(pw, &coords, &fan, DiniKind::Super);
    let cj_class = match (sub.is_empty(), sup.is_empty()) {
        (false, false) => CjClass::Smooth,
        (false, true) => CjClass::CjMinus,
        (true, false) => CjClass::CjPlus,
        (true, true) => CjClass::Neither,
    };
    let generators: Vec<Vec<f64>> = e1
        .iter()
        .flat_map(|e| {
            e.h_values.iter().map(move |h| {
                std::iter::once(-h).chain(e.s.iter().copied()).collect::<Vec<f64>>()
            })
        })
        .collect();
    let clarke = hull_vertices(&generators, MERGE_TOL)?;
    let e2 = match cj_class {
        CjClass::CjMinus => Some(build_e2(&sub, &e1, &coords, interior, seed)?),
        CjClass::CjPlus => Some(build_e2(&sup, &e1, &coords, interior, seed)?),
        _ => None,
    };
    Ok(LocalAnalysis {
        position: p.clone(),
        smooth: on.is_empty(),
        on,
        e1,
        sub,
        sup,
        cj_class,
        e2,
        clarke,
    })
}

fn build_e2(set: &DiniSet, e1: &[E1Entry], coords: &[f64], interior: usize, seed: u64) -> Result<E2Set> {
    let projection = set.s_projection()?;
    let mut limiting_inside = Vec::new();
    for (k, e) in e1.iter().enumerate() {
        if in_convex_hull(&projection, &e.s)? {
            limiting_inside.push(k);
        }
    }
    let is_limiting = |s: &[f64]| e1.iter().any(|e| dist_inf(&e.s, s) <= MERGE_TOL);
    let mut samples: Vec<Vec<f64>> = Vec::new();
    let push = |s: Vec<f64>, samples: &mut Vec<Vec<f64>>| {
        if !is_limiting(&s) && !samples.iter().any(|q| dist_inf(q, &s) <= MERGE_TOL) {
            samples.push(s);
        }
    };
    for v in &projection {
        push(v.clone(), &mut samples);
    }
    if projection.len() > 1 {
        // Seeded by the state only, so every time slice draws the same weights.
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, &coords[1..]));
        for _ in 0..interior {
            let w = simplex_weights(&mut rng, projection.len());
            let dim = projection[0].len();
            let s: Vec<f64> = (0..dim)
                .map(|i| projection.iter().zip(&w).map(|(v, c)| v[i] * c).sum())
                .collect();
            push(s, &mut samples);
        }
    }
    Ok(E2Set {
        source: set.kind,
        projection,
        limiting_inside,
        samples,
        interior_requested: interior,
    })
}
