//! Lipschitz-type extension of sampled `h/‖s‖` to all `(t, x, s)` and the
//! degree-one homogenization that turns it into a Hamiltonian.
//!
//! `h*(t,x,ŝ) = max(-Γ(1+‖x‖), max_k [h_k - W|t-τ_k| - L‖x-y_k‖ - Γ(1+‖x‖)‖ŝ-ξ_k‖])`

use serde::{Deserialize, Serialize};

use crate::conditions::{estimate_level, Estimates, GrowthLevel, NatSample, Origin, PartialHamiltonian};
use crate::error::{Error, Result};
use crate::expr::GameFrame;
use crate::geometry::{dist, norm};
use crate::hamiltonian::{Hamiltonian, HamiltonianMeta};

/// Gradients shorter than this only impose `h(0) = 0`.
pub const ZERO_GRADIENT: f64 = 1e-9;

/// Above this many samples queries go through the k-d tree.
pub const INDEX_THRESHOLD: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtensionConstants {
    pub gamma: f64,
    /// `max(L̂, Γ)`; the floor keeps the extension below `Γ(1+‖x‖)`.
    #[serde(rename = "L")]
    pub lipschitz_x: f64,
    #[serde(rename = "W")]
    pub time_modulus: f64,
    #[serde(rename = "L_estimate")]
    pub lipschitz_estimate: f64,
}

impl ExtensionConstants {
    pub fn from_estimates(e: &Estimates) -> Result<Self> {
        for (name, v) in [("gamma", e.gamma), ("L", e.lipschitz_x), ("W", e.time_modulus)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::MissingMetadata(format!("{name} = {v}")));
            }
        }
        Ok(Self {
            gamma: e.gamma,
            lipschitz_x: e.lipschitz_x.max(e.gamma),
            time_modulus: e.time_modulus,
            lipschitz_estimate: e.lipschitz_x,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleTable {
    pub frame: GameFrame,
    pub points: Vec<NatSample>,
    pub zero_constraints: usize,
}

impl SampleTable {
    pub fn from_hamiltonian(ph: &PartialHamiltonian, frame: GameFrame) -> Self {
        let points = ph.natural(ZERO_GRADIENT);
        Self {
            frame,
            zero_constraints: ph.len() - points.len(),
            points,
        }
    }

    /// Constants estimated on the table itself, raised to at least `floor`
    /// component-wise. Using the table's own estimates keeps every sample a
    /// fixed point of the extension.
    pub fn constants(&self, floor: Option<&Estimates>) -> Result<ExtensionConstants> {
        if self.points.is_empty() {
            return Err(Error::EmptySamples);
        }
        let own = estimate_level(&GrowthLevel {
            t_floor: None,
            samples: self.points.clone(),
        })
        .estimates();
        let merged = match floor {
            Some(f) => Estimates {
                gamma: own.gamma.max(f.gamma),
                lipschitz_x: own.lipschitz_x.max(f.lipschitz_x),
                time_modulus: own.time_modulus.max(f.time_modulus),
            },
            None => own,
        };
        ExtensionConstants::from_estimates(&merged)
    }
}

#[derive(Clone, Debug)]
struct Node {
    lo: Vec<f64>,
    hi: Vec<f64>,
    max_h: f64,
    body: Body,
}

#[derive(Clone, Debug)]
enum Body {
    Leaf(std::ops::Range<usize>),
    Split(Box<Node>, Box<Node>),
}

/// k-d tree over `(t, x, ŝ)` with per-node maxima of `h`, for branch and
/// bound. Split axes are chosen by extent weighted with the moduli that
/// multiply each coordinate in the extension.
#[derive(Clone, Debug)]
struct KdTree {
    order: Vec<usize>,
    root: Node,
}

const LEAF: usize = 16;

impl KdTree {
    fn build(points: &[NatSample], consts: &ExtensionConstants) -> Self {
        let n = points[0].x.len();
        let mut weights = vec![consts.time_modulus];
        weights.extend(std::iter::repeat(consts.lipschitz_x).take(n));
        weights.extend(std::iter::repeat(consts.gamma).take(n));
        let mut order: Vec<usize> = (0..points.len()).collect();
        let root = Self::node(points, &weights, &mut order, 0, points.len());
        Self { order, root }
    }

    fn coord(p: &NatSample, d: usize) -> f64 {
        let n = p.x.len();
        if d == 0 {
            p.t
        } else if d <= n {
            p.x[d - 1]
        } else {
            p.s[d - 1 - n]
        }
    }

    fn node(points: &[NatSample], weights: &[f64], order: &mut [usize], start: usize, end: usize) -> Node {
        let dims = weights.len();
        let mut lo = vec![f64::INFINITY; dims];
        let mut hi = vec![f64::NEG_INFINITY; dims];
        let mut max_h = f64::NEG_INFINITY;
        for &i in &order[start..end] {
            for d in 0..dims {
                let v = Self::coord(&points[i], d);
                lo[d] = lo[d].min(v);
                hi[d] = hi[d].max(v);
            }
            max_h = max_h.max(points[i].h);
        }
        let body = if end - start <= LEAF {
            Body::Leaf(start..end)
        } else {
            let extent = |d: usize, w: bool| (hi[d] - lo[d]) * if w { weights[d] } else { 1.0 };
            let weighted = (0..dims).any(|d| extent(d, true) > 0.0);
            let axis = (0..dims)
                .max_by(|a, b| extent(*a, weighted).total_cmp(&extent(*b, weighted)))
                .unwrap();
            let mid = (start + end) / 2;
            order[start..end].select_nth_unstable_by(mid - start, |a, b| {
                Self::coord(&points[*a], axis)
                    .total_cmp(&Self::coord(&points[*b], axis))
                    .then(a.cmp(b))
            });
            Body::Split(
                Box::new(Self::node(points, weights, order, start, mid)),
                Box::new(Self::node(points, weights, order, mid, end)),
            )
        };
        Node { lo, hi, max_h, body }
    }
}

#[derive(Clone, Debug)]
pub struct McShaneExtension {
    table: SampleTable,
    consts: ExtensionConstants,
    index: Option<KdTree>,
}

impl McShaneExtension {
    pub fn new(table: SampleTable, consts: ExtensionConstants) -> Self {
        Self::with_threshold(table, consts, INDEX_THRESHOLD)
    }

    pub fn with_threshold(table: SampleTable, consts: ExtensionConstants, threshold: usize) -> Self {
        let index = (table.points.len() >= threshold && !table.points.is_empty())
            .then(|| KdTree::build(&table.points, &consts));
        Self { table, consts, index }
    }

    pub fn table(&self) -> &SampleTable {
        &self.table
    }

    pub fn constants(&self) -> &ExtensionConstants {
        &self.consts
    }

    fn term(&self, k: usize, t: f64, x: &[f64], s: &[f64], gx: f64) -> f64 {
        let p = &self.table.points[k];
        p.h - self.consts.time_modulus * (t - p.t).abs()
            - self.consts.lipschitz_x * dist(x, &p.x)
            - gx * dist(s, &p.s)
    }

    /// `h*` at a unit costate `s`.
    pub fn value(&self, t: f64, x: &[f64], s: &[f64]) -> f64 {
        match &self.index {
            Some(tree) => self.value_indexed(tree, t, x, s),
            None => self.value_exhaustive(t, x, s),
        }
    }

    pub fn value_exhaustive(&self, t: f64, x: &[f64], s: &[f64]) -> f64 {
        let gx = self.consts.gamma * (1.0 + norm(x));
        (0..self.table.points.len())
            .map(|k| self.term(k, t, x, s, gx))
            .fold(-gx, f64::max)
    }

    fn value_indexed(&self, tree: &KdTree, t: f64, x: &[f64], s: &[f64]) -> f64 {
        let gx = self.consts.gamma * (1.0 + norm(x));
        let mut best = -gx;
        let n = x.len();
        let gap = |n: &Node, d: usize, v: f64| (n.lo[d] - v).max(v - n.hi[d]).max(0.0);
        let bound = |node: &Node| -> f64 {
            let dt = gap(node, 0, t);
            let dx2: f64 = (0..n).map(|i| gap(node, 1 + i, x[i]).powi(2)).sum();
            let ds2: f64 = (0..n).map(|i| gap(node, 1 + n + i, s[i]).powi(2)).sum();
            node.max_h - self.consts.time_modulus * dt - self.consts.lipschitz_x * dx2.sqrt() - gx * ds2.sqrt()
        };
        let mut stack: Vec<(&Node, f64)> = vec![(&tree.root, bound(&tree.root))];
        while let Some((node, b)) = stack.pop() {
            if b <= best {
                continue;
            }
            match &node.body {
                Body::Leaf(r) => {
                    for &k in &tree.order[r.clone()] {
                        best = best.max(self.term(k, t, x, s, gx));
                    }
                }
                Body::Split(l, r) => {
                    let (bl, br) = (bound(l), bound(r));
                    // Push the weaker child first so the stronger is explored next.
                    if bl >= br {
                        stack.push((r, br));
                        stack.push((l, bl));
                    } else {
                        stack.push((l, bl));
                        stack.push((r, br));
                    }
                }
            }
        }
        best
    }

    /// Largest distance from a probe position in the box to the nearest
    /// sampled position, over a deterministic probe lattice.
    pub fn covering_radius(&self, x_lo: f64, x_hi: f64, per_axis: usize) -> f64 {
        let n = self.table.frame.n;
        let f = self.table.frame;
        let mut positions: Vec<Vec<f64>> = self
            .table
            .points
            .iter()
            .map(|p| std::iter::once(p.t).chain(p.x.iter().copied()).collect())
            .collect();
        positions.sort_by(|a, b| a.partial_cmp(b).unwrap());
        positions.dedup();
        let m = per_axis.max(2);
        let axis = |lo: f64, hi: f64, k: usize| lo + (hi - lo) * k as f64 / (m - 1) as f64;
        let mut worst: f64 = 0.0;
        let total = m.pow(n as u32 + 1);
        for code in 0..total {
            let mut c = code;
            let mut probe = Vec::with_capacity(n + 1);
            for d in 0..=n {
                let k = c % m;
                c /= m;
                probe.push(if d == 0 {
                    axis(f.t0, f.theta0, k)
                } else {
                    axis(x_lo, x_hi, k)
                });
            }
            let near = positions
                .iter()
                .map(|p| dist(p, &probe))
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(near);
        }
        worst
    }
}

/// `H(t,x,s) = ‖s‖ h*(t, x, s/‖s‖)`, `H(t,x,0) = 0`.
#[derive(Clone, Debug)]
pub struct McShaneHamiltonian {
    ext: McShaneExtension,
    meta: HamiltonianMeta,
}

pub fn homogenize(ext: McShaneExtension) -> McShaneHamiltonian {
    let c = ext.consts;
    let meta = HamiltonianMeta {
        upsilon: 2.0 * c.gamma,
        lipschitz_x: Some(c.lipschitz_x),
        time_modulus: Some(c.time_modulus),
        x_independent: false,
    };
    McShaneHamiltonian { ext, meta }
}

impl McShaneHamiltonian {
    pub fn extension(&self) -> &McShaneExtension {
        &self.ext
    }
}

impl Hamiltonian for McShaneHamiltonian {
    fn dim(&self) -> usize {
        self.ext.table.frame.n
    }

    fn eval(&self, t: f64, x: &[f64], s: &[f64]) -> f64 {
        let len = norm(s);
        if len == 0.0 {
            return 0.0;
        }
        let unit: Vec<f64> = s.iter().map(|v| v / len).collect();
        len * self.ext.value(t, x, &unit)
    }

    fn meta(&self) -> &HamiltonianMeta {
        &self.meta
    }
}

/// Samples of the table that the extension does not reproduce within `tol`.
pub fn extension_mismatches(ext: &McShaneExtension, tol: f64) -> Vec<(usize, f64, f64)> {
    ext.table
        .points
        .iter()
        .enumerate()
        .filter_map(|(k, p)| {
            let v = ext.value(p.t, &p.x, &p.s);
            ((v - p.h).abs() > tol * (1.0 + p.h.abs())).then_some((k, p.h, v))
        })
        .collect()
}

/// Only limiting-gradient samples, for diagnostics.
pub fn limiting_table(table: &SampleTable) -> SampleTable {
    SampleTable {
        frame: table.frame,
        points: table.points.iter().filter(|p| p.origin == Origin::E1).cloned().collect(),
        zero_constraints: table.zero_constraints,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_table(count: usize, seed: u64) -> SampleTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = (0..count)
            .map(|_| {
                let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                let x = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                NatSample {
                    t: rng.gen_range(0.0..1.0),
                    h: -(a.cos().abs().max(a.sin().abs())) + 0.1 * x[0],
                    x,
                    s: vec![a.cos(), a.sin()],
                    origin: Origin::E1,
                }
            })
            .collect();
        SampleTable {
            frame: GameFrame::new(2, 0.0, 1.0).unwrap(),
            points,
            zero_constraints: 0,
        }
    }

    #[test]
    fn samples_are_fixed_points() {
        let table = random_table(400, 1);
        let consts = table.constants(None).unwrap();
        let ext = McShaneExtension::new(table, consts);
        assert!(extension_mismatches(&ext, 1e-12).is_empty());
    }

    #[test]
    fn index_matches_exhaustive_scan() {
        let table = random_table(3000, 2);
        let consts = table.constants(None).unwrap();
        let plain = McShaneExtension::with_threshold(table.clone(), consts, usize::MAX);
        let indexed = McShaneExtension::with_threshold(table, consts, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..500 {
            let a: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let t = rng.gen_range(-0.2..1.2);
            let x = [rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)];
            let s = [a.cos(), a.sin()];
            assert_eq!(plain.value(t, &x, &s).to_bits(), indexed.value(t, &x, &s).to_bits());
        }
    }

    #[test]
    fn empty_table_gives_clamp() {
        let table = SampleTable {
            frame: GameFrame::new(1, 0.0, 1.0).unwrap(),
            points: Vec::new(),
            zero_constraints: 0,
        };
        assert!(matches!(table.constants(None), Err(Error::EmptySamples)));
        let consts = ExtensionConstants {
            gamma: 2.0,
            lipschitz_x: 2.0,
            time_modulus: 0.0,
            lipschitz_estimate: 0.0,
        };
        let ext = McShaneExtension::new(table, consts);
        assert_eq!(ext.value(0.5, &[1.0], &[1.0]), -4.0);
    }

    #[test]
    fn zero_costate_gives_zero() {
        let table = random_table(50, 3);
        let consts = table.constants(None).unwrap();
        let h = homogenize(McShaneExtension::new(table, consts));
        assert_eq!(h.eval(0.3, &[0.2, 0.1], &[0.0, 0.0]), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn growth_and_costate_lipschitz(
            t in 0.0f64..1.0, x0 in -1.0f64..1.0, x1 in -1.0f64..1.0,
            s0 in -3.0f64..3.0, s1 in -3.0f64..3.0, r0 in -3.0f64..3.0, r1 in -3.0f64..3.0,
        ) {
            let table = random_table(120, 4);
            let consts = table.constants(None).unwrap();
            let h = homogenize(McShaneExtension::new(table, consts));
            let x = [x0, x1];
            let bound = 2.0 * consts.gamma * (1.0 + norm(&x));
            let (s, r) = ([s0, s1], [r0, r1]);
            let hs = h.eval(t, &x, &s);
            prop_assert!(hs.abs() <= bound * norm(&s) * (1.0 + 1e-12) + 1e-12);
            let hr = h.eval(t, &x, &r);
            prop_assert!((hs - hr).abs() <= bound * dist(&s, &r) * (1.0 + 1e-12) + 1e-12);
        }

        #[test]
        fn positive_homogeneity(alpha in 0.0f64..10.0, s0 in -3.0f64..3.0, s1 in -3.0f64..3.0) {
            let table = random_table(120, 5);
            let consts = table.constants(None).unwrap();
            let h = homogenize(McShaneExtension::new(table, consts));
            let x = [0.3, -0.4];
            let a = h.eval(0.5, &x, &[alpha * s0, alpha * s1]);
            let b = alpha * h.eval(0.5, &x, &[s0, s1]);
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }
}
