use std::sync::{Arc, OnceLock};

use proptest::prelude::*;

use gameval::conditions::{full_check, CheckConfig, CheckOutcome, ConditionId, Origin, Status, VerdictReport};
use gameval::expr::{decompose, Candidate, Expr, GameFrame, PiecewiseForm, PointClass, Position};
use gameval::game::{mesh_gram, mesh_tolerance, GameDynamics, GameKind};
use gameval::geometry::norm;
use gameval::hamiltonian::{ClosedFormHamiltonian, Hamiltonian};
use gameval::mcshane::{McShaneExtension, SampleTable};
use gameval::nonsmooth::{analyze, CjClass};

fn frame(n: usize) -> GameFrame {
    GameFrame::new(n, 0.0, 1.0).unwrap()
}

fn x(i: usize) -> Expr {
    Expr::x(i)
}

/// A spread of admissible shapes: kinks in x and t, polynomial pieces, n = 1..3.
fn family() -> &'static Vec<(Candidate, PiecewiseForm)> {
    static F: OnceLock<Vec<(Candidate, PiecewiseForm)>> = OnceLock::new();
    F.get_or_init(|| {
        let c = |n, e| Candidate::new(frame(n), e).unwrap();
        let list = vec![
            c(2, Expr::T + x(1).abs() - x(2).abs()),
            c(2, Expr::T * (x(1).abs() - x(2).abs())),
            c(1, Expr::T + x(1).abs()),
            c(
                2,
                x(1) * x(1) * (x(2) - Expr::T).abs() + (x(1) + x(2) - Expr::c(0.3)).abs(),
            ),
            c(
                3,
                (x(1) - x(2)).abs() + Expr::T * x(3) - (x(2) + Expr::c(0.5) * Expr::T).abs() + x(3).abs(),
            ),
        ];
        list.into_iter()
            .map(|c| {
                let pw = decompose(&c).unwrap();
                (c, pw)
            })
            .collect()
    })
}

fn position(n: usize, t: f64, raw: &[f64]) -> Position {
    Position::new(t, raw[..n].to_vec())
}

fn coords_strategy() -> impl Strategy<Value = (usize, f64, Vec<f64>)> {
    (0..5usize, 0.01f64..0.99, prop::collection::vec(-1.5f64..1.5, 3))
}

/// Moves `p` onto hyperplane `k` along its normal, if the time stays inside.
fn onto_hyperplane(pw: &PiecewiseForm, k: usize, p: &Position) -> Option<Position> {
    let h = &pw.hyperplanes[k];
    let c = p.coords();
    let nn: f64 = h.normal.iter().map(|v| v * v).sum();
    let shift = h.eval(&c) / nn;
    let q: Vec<f64> = c.iter().zip(&h.normal).map(|(a, b)| a - shift * b).collect();
    pw.frame
        .is_interior_time(q[0])
        .then(|| Position::new(q[0], q[1..].to_vec()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn ast_matches_active_piece((which, t, raw) in coords_strategy()) {
        let (c, pw) = &family()[which];
        let p = position(c.frame.n, t, &raw);
        let v = c.eval_at(&p);
        let w = pw.value(&p).expect("some piece is active");
        prop_assert!((v - w).abs() <= 1e-12 * (1.0 + v.abs()), "{v} vs {w}");
    }

    #[test]
    fn every_position_is_covered((which, t, raw) in coords_strategy()) {
        let (c, pw) = &family()[which];
        let p = position(c.frame.n, t, &raw);
        match pw.classify(&p) {
            PointClass::Smooth { .. } => {}
            PointClass::Nonsmooth { on, active } => {
                prop_assert!(!active.is_empty());
                prop_assert!(!on.is_empty() || active.len() > 1);
            }
        }
    }

    #[test]
    fn boundary_points_agree_across_pieces((which, t, raw) in coords_strategy(), k in 0..8usize) {
        let (c, pw) = &family()[which];
        prop_assume!(!pw.hyperplanes.is_empty());
        let p = position(c.frame.n, t, &raw);
        let Some(q) = onto_hyperplane(pw, k % pw.hyperplanes.len(), &p) else { return Ok(()) };
        if let PointClass::Nonsmooth { active, .. } = pw.classify(&q) {
            let coords = q.coords();
            let values: Vec<f64> = active.iter().map(|i| pw.pieces[*i].value(&coords)).collect();
            for v in &values {
                prop_assert!((v - values[0]).abs() <= 1e-12 * (1.0 + values[0].abs()), "{values:?}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn smooth_gradient_matches_central_differences((which, t, raw) in coords_strategy()) {
        let (c, pw) = &family()[which];
        let p = position(c.frame.n, t, &raw);
        let coords = p.coords();
        let step = 1e-5;
        // Keep the stencil on one side of every kink.
        let clear = pw.hyperplanes.iter().all(|h| h.eval(&coords).abs() > 10.0 * step * norm(&h.normal));
        prop_assume!(clear && t > 2.0 * step && t < 1.0 - 2.0 * step);
        let PointClass::Smooth { piece } = pw.classify(&p) else { return Ok(()) };
        let g = pw.pieces[piece].gradient(&coords);
        for i in 0..coords.len() {
            let mut hi = coords.clone();
            let mut lo = coords.clone();
            hi[i] += step;
            lo[i] -= step;
            let f = |v: &[f64]| c.eval(v[0], &v[1..]);
            let fd = (f(&hi) - f(&lo)) / (2.0 * step);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0), "axis {i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn local_structure_is_consistent((which, t, raw) in coords_strategy(), snap in 0..4usize) {
        let (c, pw) = &family()[which];
        let mut p = position(c.frame.n, t, &raw);
        if snap < 2 && !pw.hyperplanes.is_empty() {
            if let Some(q) = onto_hyperplane(pw, snap % pw.hyperplanes.len(), &p) {
                p = q;
            }
        }
        let a = analyze(pw, &p, 0, 1).unwrap();
        if a.smooth {
            // The Clarke hull collapses to the gradient.
            prop_assert_eq!(a.clarke.len(), 1);
            let PointClass::Smooth { piece } = pw.classify(&p) else { unreachable!() };
            let g = pw.pieces[piece].gradient(&p.coords());
            prop_assert!(a.clarke[0].iter().zip(&g).all(|(u, v)| (u - v).abs() <= 1e-12));
        } else {
            // Both one-sided sets nonempty only at points of differentiability.
            prop_assert!(a.sub.is_empty() || a.sup.is_empty());
            let expected = match (a.sub.is_empty(), a.sup.is_empty()) {
                (false, true) => CjClass::CjMinus,
                (true, false) => CjClass::CjPlus,
                _ => CjClass::Neither,
            };
            prop_assert_eq!(a.cj_class, expected);
        }
    }
}

fn outcome(which: usize) -> &'static CheckOutcome {
    static O: OnceLock<Vec<CheckOutcome>> = OnceLock::new();
    &O.get_or_init(|| {
        (0..2)
            .map(|k| full_check(&family()[k].0, &CheckConfig::default()).unwrap())
            .collect()
    })[which]
}

#[test]
fn verdict_report_round_trips() {
    for k in 0..2 {
        let r = &outcome(k).report;
        let text = serde_json::to_string(r).unwrap();
        let back: VerdictReport = serde_json::from_str(&text).unwrap();
        assert_eq!(&back, r);
        assert_eq!(serde_json::to_string(&back).unwrap(), text);
    }
}

#[test]
fn growth_estimates_stable_for_saddle_and_diverging_for_scaled() {
    let stable = &outcome(0).report.sampling.levels;
    for l in stable {
        assert!((l.gamma - stable[0].gamma).abs() <= 1e-9, "{stable:?}");
    }
    let diverging = &outcome(1).report.sampling.levels;
    // Gamma scales like 1 / t_min: halving the floor at least doubles it.
    for w in diverging.windows(2) {
        let shrink = w[0].min_t / w[1].min_t;
        assert!(shrink > 1.0);
        assert!(w[1].gamma >= shrink * w[0].gamma * (1.0 - 1e-9), "{w:?}");
    }
}

#[test]
fn failure_persists_under_denser_sampling() {
    let c = &family()[1].0;
    for lattice in [5, 9, 13] {
        let mut cfg = CheckConfig::default();
        cfg.sampling.lattice = lattice;
        let r = full_check(c, &cfg).unwrap().report;
        assert_eq!(r.condition(ConditionId::E4).status, Status::Fail, "lattice {lattice}");
    }
}

#[test]
fn one_sided_extension_matches_limiting_values_on_saddle() {
    // Every limiting gradient carries h = -1 there, so convex combinations do too.
    let ph = &outcome(0).hamiltonian;
    let mut seen = 0;
    for g in &ph.groups {
        for s in g.samples.iter().filter(|s| s.origin == Origin::E2) {
            assert!((s.h + 1.0).abs() <= 1e-9, "{:?}", s);
            seen += 1;
        }
    }
    assert!(seen > 0);
}

fn saddle_extension() -> &'static McShaneExtension {
    static E: OnceLock<McShaneExtension> = OnceLock::new();
    E.get_or_init(|| {
        let table = SampleTable::from_hamiltonian(&outcome(0).hamiltonian, frame(2));
        let consts = table.constants(None).unwrap();
        McShaneExtension::new(table, consts)
    })
}

fn unit(a: f64) -> [f64; 2] {
    [a.cos(), a.sin()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn extension_is_clamped_and_bounded(t in 0.0f64..1.0, x0 in -2.0f64..2.0, x1 in -2.0f64..2.0, a in 0.0f64..6.3) {
        let ext = saddle_extension();
        let k = ext.constants();
        let x = [x0, x1];
        let g = k.gamma * (1.0 + norm(&x));
        let v = ext.value(t, &x, &unit(a));
        prop_assert!(v >= -g);
        prop_assert!(k.lipschitz_x >= k.gamma);
        prop_assert!(v <= g * (1.0 + 1e-12));
    }

    #[test]
    fn extension_is_costate_lipschitz(t in 0.0f64..1.0, x0 in -1.0f64..1.0, x1 in -1.0f64..1.0, a in 0.0f64..6.3, b in 0.0f64..6.3) {
        let ext = saddle_extension();
        let x = [x0, x1];
        let g = ext.constants().gamma * (1.0 + norm(&x));
        let (sa, sb) = (unit(a), unit(b));
        let d = ((sa[0] - sb[0]).powi(2) + (sa[1] - sb[1]).powi(2)).sqrt();
        let gap = (ext.value(t, &x, &sa) - ext.value(t, &x, &sb)).abs();
        prop_assert!(gap <= g * d * (1.0 + 1e-12) + 1e-12);
    }

    #[test]
    fn more_samples_never_lower_the_extension(t in 0.0f64..1.0, x0 in -1.0f64..1.0, x1 in -1.0f64..1.0, a in 0.0f64..6.3, keep in 2usize..6) {
        let full = saddle_extension();
        let mut part = full.table().clone();
        part.points = part.points.iter().step_by(keep).cloned().collect();
        let sub = McShaneExtension::new(part, *full.constants());
        let x = [x0, x1];
        let s = unit(a);
        prop_assert!(sub.value(t, &x, &s) <= full.value(t, &x, &s));
        // Old samples keep their values.
        for p in sub.table().points.iter().take(20) {
            prop_assert!((sub.value(p.t, &p.x, &p.s) - p.h).abs() <= 1e-12);
        }
    }
}

fn ball_game() -> &'static GameDynamics {
    static G: OnceLock<GameDynamics> = OnceLock::new();
    G.get_or_init(|| {
        let h: Arc<dyn Hamiltonian> = Arc::new(
            ClosedFormHamiltonian::new(2, -Expr::Max(vec![Expr::s(1).abs(), Expr::s(2).abs()]), 1.0).unwrap(),
        );
        GameDynamics::unchecked(h, GameKind::Maxmin).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn weak_duality_within_mesh_tolerance(t in 0.0f64..1.0, x0 in -1.0f64..1.0, x1 in -1.0f64..1.0, s0 in -2.0f64..2.0, s1 in -2.0f64..2.0) {
        let game = ball_game();
        let delta = 0.3;
        let mesh = game.mesh(delta).unwrap();
        let gram = mesh_gram(&mesh);
        let (x, s) = ([x0, x1], [s0, s1]);
        let o = game.iterated_optima(&mesh, &gram, t, &x, &s, 2);
        prop_assert!(o.maxmin <= o.minmax + 2.0 * mesh_tolerance(game.upsilon(), &x, &s, delta));
    }

    #[test]
    fn dynamics_respect_growth_bound(t in 0.0f64..1.0, x0 in -3.0f64..3.0, x1 in -3.0f64..3.0, u in 0usize..10_000, v in 0usize..10_000) {
        for kind in [GameKind::Maxmin, GameKind::Minmax] {
            let game = GameDynamics::unchecked(ball_game().hamiltonian().clone(), kind).unwrap();
            let mesh = game.mesh(0.3).unwrap();
            let n = mesh.controls();
            let x = [x0, x1];
            let f = game.dynamics(t, &x, &mesh.control(u % n), &mesh.control(v % n));
            prop_assert!(norm(&f) <= game.lambda_f() * (1.0 + norm(&x)) * (1.0 + 1e-12));
        }
    }
}
