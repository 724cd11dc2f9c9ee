//! Dynamics `f(t, x, u, v)` whose lower or upper game Hamiltonian is a given
//! `H`, and brute-force verification over discretized control sets.

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::geometry::{dot, mix_seed, norm, sphere_points, standard_normal};
use crate::hamiltonian::{AuditRegion, Hamiltonian};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GameKind {
    /// `f = (H(z)+c) z' + c y + c(1+⟨y,z⟩) y'`, `H = max_v min_u ⟨s,f⟩`.
    Maxmin,
    /// `f = (c-H(y)) y' + c z + c(1-⟨z,y⟩) z'`, `H = min_u max_v ⟨s,f⟩`.
    Minmax,
    /// The max-min formula on `{-1,1}²` controls; `n = 1` only.
    Isaacs1d,
    /// `f = H(y) y' + c(y' + z + (1+⟨y,z⟩) z')` read in min-max order. Its
    /// upper Hamiltonian is `-H(-s)`, so it only exists to exercise the gate.
    RoleSwapped,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Order {
    Maxmin,
    Minmax,
}

impl GameKind {
    pub fn order(self) -> Order {
        match self {
            GameKind::Maxmin | GameKind::Isaacs1d => Order::Maxmin,
            GameKind::Minmax | GameKind::RoleSwapped => Order::Minmax,
        }
    }

    /// Whether `H` is read at the maximizer's first component (else the minimizer's).
    fn h_at_maximizer(self) -> bool {
        matches!(self, GameKind::Maxmin | GameKind::Isaacs1d)
    }

    pub fn finite_controls(self) -> bool {
        self == GameKind::Isaacs1d
    }
}

impl fmt::Display for GameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GameKind::Maxmin => "maxmin",
            GameKind::Minmax => "minmax",
            GameKind::Isaacs1d => "isaacs-1d",
            GameKind::RoleSwapped => "role-swapped",
        };
        f.write_str(s)
    }
}

/// A control `(a, b)`: `(y, y')` for the minimizer, `(z, z')` for the maximizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Control {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// Points of one factor of a control set. A control is a pair of indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlMesh {
    pub points: Vec<Vec<f64>>,
    /// Largest distance from a unit vector to the nearest unit-shell point.
    pub sphere_covering: f64,
    pub delta: Option<f64>,
}

impl ControlMesh {
    /// Center plus shells of radius ½ and 1, with adjacent points at most
    /// `delta` apart on each shell.
    pub fn ball(n: usize, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::Config(format!("mesh spacing must be positive, got {delta}")));
        }
        let mut points = vec![vec![0.0; n]];
        let mut unit_count = 0;
        for r in [0.5, 1.0] {
            let count = match n {
                1 => 2,
                2 => (2.0 * std::f64::consts::PI * r / delta).ceil() as usize,
                _ => (4.0 * std::f64::consts::PI * r * r / (delta * delta)).ceil() as usize,
            }
            .max(2);
            if r == 1.0 {
                unit_count = count;
            }
            let seed = mix_seed(0, &[r, delta]);
            points.extend(
                sphere_points(n, count, seed)
                    .into_iter()
                    .map(|p| p.into_iter().map(|v| v * r).collect()),
            );
        }
        let sphere_covering = match n {
            1 => 0.0,
            2 => 2.0 * (std::f64::consts::PI / (2.0 * unit_count as f64)).sin(),
            _ => {
                let unit: Vec<&Vec<f64>> = points.iter().filter(|p| (norm(p) - 1.0).abs() < 1e-12).collect();
                sphere_points(n, 4000, 11)
                    .iter()
                    .map(|q| {
                        unit.iter()
                            .map(|p| crate::geometry::dist(p, q))
                            .fold(f64::INFINITY, f64::min)
                    })
                    .fold(0.0, f64::max)
            }
        };
        Ok(Self {
            points,
            sphere_covering,
            delta: Some(delta),
        })
    }

    /// `{-1, 1}`.
    pub fn signs() -> Self {
        Self {
            points: vec![vec![-1.0], vec![1.0]],
            sphere_covering: 0.0,
            delta: None,
        }
    }

    pub fn controls(&self) -> usize {
        self.points.len() * self.points.len()
    }

    pub fn control(&self, k: usize) -> Control {
        let m = self.points.len();
        Control {
            a: self.points[k / m].clone(),
            b: self.points[k % m].clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct GameDynamics {
    kind: GameKind,
    n: usize,
    upsilon: f64,
    h: Arc<dyn Hamiltonian>,
}

impl GameDynamics {
    /// Builds the dynamics without verification.
    pub fn unchecked(h: Arc<dyn Hamiltonian>, kind: GameKind) -> Result<Self> {
        let meta = *h.meta();
        meta.validate()?;
        let n = h.dim();
        if kind == GameKind::Isaacs1d && n != 1 {
            return Err(Error::IsaacsDimension(n));
        }
        Ok(Self {
            kind,
            n,
            upsilon: meta.upsilon,
            h,
        })
    }

    pub fn kind(&self) -> GameKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn upsilon(&self) -> f64 {
        self.upsilon
    }

    pub fn hamiltonian(&self) -> &Arc<dyn Hamiltonian> {
        &self.h
    }

    /// `‖f‖ <= lambda_f (1+‖x‖)`: every coefficient is at most `2c` or `c`
    /// with `c = Υ(1+‖x‖)`, and there are at most five unit terms.
    pub fn lambda_f(&self) -> f64 {
        5.0 * self.upsilon
    }

    fn c(&self, x: &[f64]) -> f64 {
        self.upsilon * (1.0 + norm(x))
    }

    pub fn mesh(&self, delta: f64) -> Result<ControlMesh> {
        if self.kind.finite_controls() {
            Ok(ControlMesh::signs())
        } else {
            ControlMesh::ball(self.n, delta)
        }
    }

    /// `f(t, x, u, v)` with `u = (y, y')`, `v = (z, z')`.
    pub fn dynamics(&self, t: f64, x: &[f64], u: &Control, v: &Control) -> Vec<f64> {
        let c = self.c(x);
        let (y, yp, z, zp) = (&u.a, &u.b, &v.a, &v.b);
        let yz = dot(y, z);
        let mut f = vec![0.0; self.n];
        match self.kind {
            GameKind::Maxmin | GameKind::Isaacs1d => {
                let hz = self.h.eval(t, x, z);
                for i in 0..self.n {
                    f[i] = (hz + c) * zp[i] + c * (y[i] + (1.0 + yz) * yp[i]);
                }
            }
            GameKind::Minmax => {
                let hy = self.h.eval(t, x, y);
                for i in 0..self.n {
                    f[i] = (c - hy) * yp[i] + c * (z[i] + (1.0 - yz) * zp[i]);
                }
            }
            GameKind::RoleSwapped => {
                let hy = self.h.eval(t, x, y);
                for i in 0..self.n {
                    f[i] = hy * yp[i] + c * (yp[i] + z[i] + (1.0 + yz) * zp[i]);
                }
            }
        }
        f
    }

    /// `⟨s, f⟩` from precomputed inner products, `h` being `H` at whichever
    /// first component the formula reads. The `c` terms share one product so
    /// that on sign controls equal payoffs round identically.
    fn payoff(&self, c: f64, h: f64, s_y: f64, s_yp: f64, s_z: f64, s_zp: f64, yz: f64) -> f64 {
        match self.kind {
            GameKind::Maxmin | GameKind::Isaacs1d => (h + c) * s_zp + c * (s_y + (1.0 + yz) * s_yp),
            GameKind::Minmax => (c - h) * s_yp + c * (s_z + (1.0 - yz) * s_zp),
            GameKind::RoleSwapped => h * s_yp + c * (s_yp + s_z + (1.0 + yz) * s_zp),
        }
    }

    /// Both iterated optima of `⟨s, f⟩` over `mesh × mesh` controls.
    pub fn iterated_optima(&self, mesh: &ControlMesh, gram: &[f64], t: f64, x: &[f64], s: &[f64], seed: u64) -> IteratedOptima {
        let m = mesh.points.len();
        let c = self.c(x);
        let h_cache: Vec<f64> = mesh.points.iter().map(|p| self.h.eval(t, x, p)).collect();
        let ps: Vec<f64> = mesh.points.iter().map(|p| dot(s, p)).collect();
        let at_max = self.kind.h_at_maximizer();
        // u = (i, j) = (y, y'), v = (k, l) = (z, z').
        let value = |u: usize, v: usize| -> f64 {
            let (i, j, k, l) = (u / m, u % m, v / m, v % m);
            let h = if at_max { h_cache[k] } else { h_cache[i] };
            self.payoff(c, h, ps[i], ps[j], ps[k], ps[l], gram[i * m + k])
        };
        let count = m * m;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..count).collect();
        order.shuffle(&mut rng);
        let lower = max_min(&order, count, |v, u| value(u, v));
        let upper = max_min(&order, count, |u, v| -value(u, v));
        IteratedOptima {
            maxmin: lower.value,
            minmax: -upper.value,
            maxmin_controls: (mesh.control(lower.inner), mesh.control(lower.outer)),
            minmax_controls: (mesh.control(upper.outer), mesh.control(upper.inner)),
        }
    }

    pub fn to_json(&self, hamiltonian_ref: &str) -> Value {
        let (p, q) = if self.kind.finite_controls() {
            ("finite-set({-1,1}^2)", "finite-set({-1,1}^2)")
        } else {
            ("ball-product(radius 1)^2", "ball-product(radius 1)^2")
        };
        json!({
            "kind": self.kind,
            "n": self.n,
            "Upsilon": self.upsilon,
            "Lambda_f": self.lambda_f(),
            "P": p,
            "Q": q,
            "order": self.kind.order(),
            "hamiltonian": hamiltonian_ref,
        })
    }
}

/// `⟨a, b⟩` over all pairs of mesh points, row-major.
pub fn mesh_gram(mesh: &ControlMesh) -> Vec<f64> {
    let p = &mesh.points;
    p.iter().flat_map(|a| p.iter().map(move |b| dot(a, b))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IteratedOptima {
    pub maxmin: f64,
    pub minmax: f64,
    /// `(u, v)` attaining the max-min.
    pub maxmin_controls: (Control, Control),
    /// `(u, v)` attaining the min-max.
    pub minmax_controls: (Control, Control),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Optimum {
    pub value: f64,
    pub outer: usize,
    pub inner: usize,
}

const KILLERS: usize = 4;

/// `max_o min_i p(o, i)`, exact. Outer candidates are visited in `order`;
/// an inner scan stops once it can no longer beat the incumbent. Ties go to
/// the smallest index on both levels, so the visiting order never changes
/// the result.
pub fn max_min(order: &[usize], inner: usize, p: impl Fn(usize, usize) -> f64) -> Optimum {
    let mut best = Optimum {
        value: f64::NEG_INFINITY,
        outer: usize::MAX,
        inner: usize::MAX,
    };
    let mut killers: Vec<usize> = Vec::with_capacity(KILLERS);
    let beaten = |run: f64, o: usize, best: &Optimum| run < best.value || (run == best.value && o > best.outer);
    for &o in order {
        let mut run = f64::INFINITY;
        let mut arg = usize::MAX;
        let mut cut = None;
        for &k in &killers {
            let v = p(o, k);
            if v < run || (v == run && k < arg) {
                run = v;
                arg = k;
            }
            if beaten(run, o, &best) {
                cut = Some(k);
                break;
            }
        }
        if cut.is_none() {
            for i in 0..inner {
                let v = p(o, i);
                if v < run || (v == run && i < arg) {
                    run = v;
                    arg = i;
                }
                if beaten(run, o, &best) {
                    cut = Some(i);
                    break;
                }
            }
        }
        match cut {
            Some(k) => {
                if let Some(pos) = killers.iter().position(|&q| q == k) {
                    killers.remove(pos);
                }
                killers.insert(0, k);
                killers.truncate(KILLERS);
            }
            None => {
                best = Optimum {
                    value: run,
                    outer: o,
                    inner: arg,
                }
            }
        }
    }
    best
}

/// `(t, x, s)` drawn with `s` uniform in `[-R, R]^n`, `R = region.s_radius`.
pub fn identity_samples(region: &AuditRegion, count: usize, seed: u64) -> Vec<(f64, Vec<f64>, Vec<f64>)> {
    let n = region.frame.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let t = rng.gen_range(region.frame.t0..=region.frame.theta0);
            let x = (0..n).map(|_| rng.gen_range(region.x_lo..=region.x_hi)).collect();
            let s = (0..n)
                .map(|_| rng.gen_range(-region.s_radius..=region.s_radius))
                .collect();
            (t, x, s)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentitySample {
    pub t: f64,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub h: f64,
    /// Iterated optimum in the game's order.
    pub declared: f64,
    /// Iterated optimum in the other order.
    pub other: f64,
    pub error: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub kind: GameKind,
    pub order: Order,
    pub delta: Option<f64>,
    pub mesh_points: usize,
    pub sphere_covering: f64,
    pub max_error: f64,
    /// Max of error over its bound.
    pub max_error_ratio: f64,
    /// Max of `minmax - maxmin`.
    pub isaacs_gap: f64,
    /// Samples with `maxmin > minmax + 2 C(δ)`.
    pub order_violations: usize,
    pub growth_max_ratio: f64,
    pub pass: bool,
    pub samples: Vec<IdentitySample>,
}

/// Exact enumeration tolerance for finite control sets.
pub const FINITE_TOL: f64 = 1e-12;

/// `C(δ) = Υ(1+‖x‖)(2+‖s‖)δ`.
pub fn mesh_tolerance(upsilon: f64, x: &[f64], s: &[f64], delta: f64) -> f64 {
    upsilon * (1.0 + norm(x)) * (2.0 + norm(s)) * delta
}

/// Compares the iterated optimum in the game's order with `H` at each sample.
pub fn verify_hamiltonian_identity(
    game: &GameDynamics,
    samples: &[(f64, Vec<f64>, Vec<f64>)],
    delta: f64,
    seed: u64,
) -> Result<IdentityReport> {
    let mesh = game.mesh(delta)?;
    let gram = mesh_gram(&mesh);
    let finite = game.kind.finite_controls();
    let order = game.kind.order();
    let rows: Vec<IdentitySample> = samples
        .par_iter()
        .map(|(t, x, s)| {
            let opt = game.iterated_optima(&mesh, &gram, *t, x, s, mix_seed(seed, s));
            let (declared, other) = match order {
                Order::Maxmin => (opt.maxmin, opt.minmax),
                Order::Minmax => (opt.minmax, opt.maxmin),
            };
            let h = game.h.eval(*t, x, s);
            let bound = if finite {
                FINITE_TOL * (1.0 + h.abs())
            } else {
                mesh_tolerance(game.upsilon, x, s, delta)
            };
            IdentitySample {
                t: *t,
                x: x.clone(),
                s: s.clone(),
                h,
                declared,
                other,
                error: (declared - h).abs(),
                bound,
            }
        })
        .collect();
    let mut max_error: f64 = 0.0;
    let mut max_ratio: f64 = 0.0;
    let mut gap: f64 = 0.0;
    let mut order_violations = 0;
    for r in &rows {
        max_error = max_error.max(r.error);
        max_ratio = max_ratio.max(if r.bound > 0.0 { r.error / r.bound } else if r.error > 0.0 { f64::INFINITY } else { 0.0 });
        let (lo, hi) = match order {
            Order::Maxmin => (r.declared, r.other),
            Order::Minmax => (r.other, r.declared),
        };
        gap = gap.max(hi - lo);
        let slack = if finite { r.bound } else { 2.0 * r.bound };
        if lo > hi + slack {
            order_violations += 1;
        }
    }
    let growth_max_ratio = growth_ratio(game, samples, seed);
    let pass = max_ratio <= 1.0 && order_violations == 0 && growth_max_ratio <= 1.0 + 1e-12;
    Ok(IdentityReport {
        kind: game.kind,
        order,
        delta: mesh.delta,
        mesh_points: mesh.points.len(),
        sphere_covering: mesh.sphere_covering,
        max_error,
        max_error_ratio: max_ratio,
        isaacs_gap: gap,
        order_violations,
        growth_max_ratio,
        pass,
        samples: rows,
    })
}

/// Max of `‖f‖ / (Λ_f (1+‖x‖))` over random admissible controls at the sample states.
fn growth_ratio(game: &GameDynamics, samples: &[(f64, Vec<f64>, Vec<f64>)], seed: u64) -> f64 {
    let n = game.n;
    let lf = game.lambda_f();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6a09_e667);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        if game.kind.finite_controls() {
            return vec![if rng.gen::<bool>() { 1.0 } else { -1.0 }];
        }
        let d: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
        let len = norm(&d).max(1e-300);
        let r = rng.gen::<f64>().powf(1.0 / n as f64);
        d.iter().map(|v| v * r / len).collect()
    };
    let mut worst: f64 = 0.0;
    for (t, x, _) in samples {
        for _ in 0..16 {
            let u = Control { a: draw(&mut rng), b: draw(&mut rng) };
            let v = Control { a: draw(&mut rng), b: draw(&mut rng) };
            let f = game.dynamics(*t, x, &u, &v);
            let denom = lf * (1.0 + norm(x));
            let r = if denom > 0.0 { norm(&f) / denom } else if norm(&f) > 0.0 { f64::INFINITY } else { 0.0 };
            worst = worst.max(r);
        }
    }
    worst
}

/// Samples and mesh for the check run before a game is handed out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub region: AuditRegion,
    pub samples: usize,
    pub delta: f64,
    pub seed: u64,
}

/// Builds the dynamics and refuses them unless the identity check passes.
pub fn synthesize(h: Arc<dyn Hamiltonian>, kind: GameKind, gate: &GateConfig) -> Result<(GameDynamics, IdentityReport)> {
    let game = GameDynamics::unchecked(h, kind)?;
    let samples = identity_samples(&gate.region, gate.samples, gate.seed);
    let report = verify_hamiltonian_identity(&game, &samples, gate.delta, gate.seed)?;
    if !report.pass {
        let worst = report
            .samples
            .iter()
            .max_by(|a, b| (a.error / a.bound.max(1e-300)).total_cmp(&(b.error / b.bound.max(1e-300))));
        let detail = match worst {
            Some(w) => format!(
                "{kind} game: iterated optimum {} vs H {} at t={}, x={:?}, s={:?} (bound {}); order violations {}",
                w.declared, w.h, w.t, w.x, w.s, w.bound, report.order_violations
            ),
            None => format!("{kind} game: no samples"),
        };
        return Err(Error::IdentityRejected(detail));
    }
    Ok((game, report))
}
