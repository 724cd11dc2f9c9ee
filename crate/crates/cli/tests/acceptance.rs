//! Acceptance runs. Each test prints one line of the form
//! `acceptance <id> <name>: PASS|FAIL <measurements>` and then asserts.
//! They hold a shared lock so the runtime limits are measured one at a time.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gameval::conditions::{full_check, CheckConfig, ConditionId, Status, Verdict, VerdictReport};
use gameval::expr::{decompose, Candidate, Expr, GameFrame, PiecewiseForm, Position};
use gameval::game::{identity_samples, verify_hamiltonian_identity, GameDynamics, GameKind};
use gameval::geometry::{dot, norm, simplex_weights, standard_normal};
use gameval::hamiltonian::{verify_regularity, AuditRegion, ClosedFormHamiltonian, Hamiltonian};
use gameval::hj::{compare, solve_dp_pair, solve_lf, DpConfig, Grid, LfConfig, TerminalPayoff};
use gameval::mcshane::{extension_mismatches, homogenize, McShaneExtension, SampleTable};
use gameval::nonsmooth::{analyze, directional_derivative, CjClass};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

// Written straight to the stderr handle so the line survives libtest capture.
fn line(id: &str, name: &str, pass: bool, detail: String) {
    use std::io::Write;
    let _ = writeln!(
        std::io::stderr().lock(),
        "acceptance {id} {name}: {} {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gameval"))
}

fn data(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn saddle() -> Candidate {
    Candidate::new(GameFrame::new(2, 0.0, 1.0).unwrap(), Expr::T + Expr::x(1).abs() - Expr::x(2).abs()).unwrap()
}

fn scaled_saddle() -> Candidate {
    Candidate::new(
        GameFrame::new(2, 0.0, 1.0).unwrap(),
        Expr::T * (Expr::x(1).abs() - Expr::x(2).abs()),
    )
    .unwrap()
}

fn max_norm_h() -> ClosedFormHamiltonian {
    ClosedFormHamiltonian::new(2, -Expr::Max(vec![Expr::s(1).abs(), Expr::s(2).abs()]), 1.0)
        .unwrap()
        .with_moduli(0.0, 0.0)
}

fn abs_h() -> ClosedFormHamiltonian {
    ClosedFormHamiltonian::new(1, -Expr::s(1).abs(), 1.0).unwrap().with_moduli(0.0, 0.0)
}

/// Both lists hold the same points up to `tol` in max-norm.
fn same_set(a: &[Vec<f64>], b: &[Vec<f64>], tol: f64) -> bool {
    let close = |p: &Vec<f64>, q: &Vec<f64>| p.len() == q.len() && p.iter().zip(q).all(|(x, y)| (x - y).abs() <= tol);
    a.iter().all(|p| b.iter().any(|q| close(p, q))) && b.iter().all(|q| a.iter().any(|p| close(p, q)))
}

fn run_check_cli(candidate: &Path, out: &Path) -> (i32, VerdictReport, Duration) {
    let start = Instant::now();
    let status = bin()
        .arg("check")
        .arg(candidate)
        .arg("--out")
        .arg(out)
        .output()
        .expect("gameval runs");
    let elapsed = start.elapsed();
    let report: VerdictReport = serde_json::from_str(&fs::read_to_string(out).unwrap()).unwrap();
    (status.status.code().unwrap_or(-1), report, elapsed)
}

#[test]
fn a1_saddle_kink_is_a_value_with_exact_local_structure() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let (code, report, elapsed) = run_check_cli(&data("phi1.json"), &dir.path().join("verdict.json"));

    let pw = decompose(&saddle()).unwrap();
    let tol = 1e-9;
    let mut mismatches: Vec<String> = Vec::new();
    // (position, E1 gradients, D- vertices, D+ vertices, class)
    let strata: Vec<(Position, Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>, CjClass)> = vec![
        (
            Position::new(0.5, vec![0.0, 0.4]),
            vec![vec![1.0, -1.0], vec![-1.0, -1.0]],
            vec![vec![1.0, -1.0, -1.0], vec![1.0, 1.0, -1.0]],
            vec![],
            CjClass::CjMinus,
        ),
        (
            Position::new(0.3, vec![0.0, -0.7]),
            vec![vec![1.0, 1.0], vec![-1.0, 1.0]],
            vec![vec![1.0, -1.0, 1.0], vec![1.0, 1.0, 1.0]],
            vec![],
            CjClass::CjMinus,
        ),
        (
            Position::new(0.5, vec![0.6, 0.0]),
            vec![vec![1.0, 1.0], vec![1.0, -1.0]],
            vec![],
            vec![vec![1.0, 1.0, -1.0], vec![1.0, 1.0, 1.0]],
            CjClass::CjPlus,
        ),
        (
            Position::new(0.8, vec![-0.25, 0.0]),
            vec![vec![-1.0, 1.0], vec![-1.0, -1.0]],
            vec![],
            vec![vec![1.0, -1.0, -1.0], vec![1.0, -1.0, 1.0]],
            CjClass::CjPlus,
        ),
        (
            Position::new(0.5, vec![0.0, 0.0]),
            vec![vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 1.0], vec![-1.0, -1.0]],
            vec![],
            vec![],
            CjClass::Neither,
        ),
    ];
    for (p, e1, sub, sup, class) in &strata {
        let a = analyze(&pw, p, 0, 0).unwrap();
        let got_e1: Vec<Vec<f64>> = a.e1.iter().map(|e| e.s.clone()).collect();
        if !same_set(&got_e1, e1, tol) {
            mismatches.push(format!("E1 at {p:?}: {got_e1:?}"));
        }
        if a.e1.iter().any(|e| (e.h + 1.0).abs() > tol) {
            mismatches.push(format!("h != -1 at {p:?}"));
        }
        if !same_set(&a.sub.vertices, sub, tol) {
            mismatches.push(format!("D- at {p:?}: {:?}", a.sub.vertices));
        }
        if !same_set(&a.sup.vertices, sup, tol) {
            mismatches.push(format!("D+ at {p:?}: {:?}", a.sup.vertices));
        }
        if a.cj_class != *class {
            mismatches.push(format!("class at {p:?}: {:?}", a.cj_class));
        }
    }
    let pass = code == 0
        && report.overall == Verdict::InValf
        && mismatches.is_empty()
        && elapsed <= Duration::from_secs(60);
    line(
        "1",
        "saddle-kink membership",
        pass,
        format!(
            "(exit {code}, {}, {} strata checked, {} mismatches, {:.1} s)",
            serde_json::to_string(&report.overall).unwrap(),
            strata.len(),
            mismatches.len(),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass, "{mismatches:#?}");
}

#[test]
fn a2_time_scaled_kink_fails_growth_with_witness_sequence() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let (code, report, elapsed) = run_check_cli(&data("phi2.json"), &dir.path().join("verdict.json"));
    let e4 = report.condition(ConditionId::E4);
    let level = |floor: f64| {
        report
            .sampling
            .levels
            .iter()
            .find(|l| l.t_floor.is_some_and(|t| (t - floor).abs() < 1e-12))
            .map(|l| l.gamma)
    };
    let (g1, g2) = (level(0.1), level(0.01));
    let growth = match (g1, g2) {
        (Some(a), Some(b)) if a > 0.0 => b / a,
        _ => f64::NAN,
    };
    let pass = code == 1
        && report.overall == Verdict::NotInValf
        && e4.status == Status::Fail
        && e4.witnesses.iter().any(|w| w.definitive)
        // Exactly 10 in real arithmetic.
        && growth >= 10.0 * (1.0 - 1e-9)
        && elapsed <= Duration::from_secs(60);
    line(
        "2",
        "time-scaled kink rejection",
        pass,
        format!(
            "(exit {code}, E4 {:?}, gamma {:.4} -> {:.4}, factor {growth:.6}, {:.1} s)",
            e4.status,
            g1.unwrap_or(f64::NAN),
            g2.unwrap_or(f64::NAN),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn a3_ball_game_reproduces_hamiltonian_as_mesh_refines() {
    let _g = serial();
    let start = Instant::now();
    let frame = GameFrame::new(2, 0.0, 1.0).unwrap();
    let region = AuditRegion {
        frame,
        x_lo: -1.0,
        x_hi: 1.0,
        s_radius: 2.0,
    };
    let h: Arc<dyn Hamiltonian> = Arc::new(max_norm_h());
    let game = GameDynamics::unchecked(h, GameKind::Maxmin).unwrap();
    let samples = identity_samples(&region, 500, 3);
    let coarse = verify_hamiltonian_identity(&game, &samples, 0.05, 3).unwrap();
    let fine = verify_hamiltonian_identity(&game, &samples, 0.025, 3).unwrap();
    let elapsed = start.elapsed();
    let ratio = coarse.max_error / fine.max_error;
    let pass = coarse.max_error <= 0.25
        && ratio >= 1.4
        && coarse.order_violations == 0
        && fine.order_violations == 0
        && elapsed <= Duration::from_secs(300);
    line(
        "3",
        "ball-game identity",
        pass,
        format!(
            "(max error {:.4} at delta 0.05, {:.4} at 0.025, ratio {ratio:.3}, {:.1} s)",
            coarse.max_error,
            fine.max_error,
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn a4_sign_control_game_is_exact() {
    let _g = serial();
    let frame = GameFrame::new(1, 0.0, 1.0).unwrap();
    let region = AuditRegion {
        frame,
        x_lo: -1.0,
        x_hi: 1.0,
        s_radius: 2.0,
    };
    let h: Arc<dyn Hamiltonian> = Arc::new(abs_h());
    let game = GameDynamics::unchecked(h, GameKind::Isaacs1d).unwrap();
    let samples = identity_samples(&region, 1000, 4);
    let r = verify_hamiltonian_identity(&game, &samples, 0.0, 4).unwrap();
    let pass = r.isaacs_gap <= 1e-12 && r.max_error <= 1e-12 && r.mesh_points == 2;
    line(
        "4",
        "sign-control exactness",
        pass,
        format!(
            "(1000 draws, 16 tuples, max |maxmin - minmax| {:.1e}, max |maxmin - H| {:.1e})",
            r.isaacs_gap, r.max_error
        ),
    );
    assert!(pass);
}

#[test]
fn a5_extension_keeps_samples_and_regularity() {
    let _g = serial();
    let c = saddle();
    let out = full_check(&c, &CheckConfig::default()).unwrap();
    let table = SampleTable::from_hamiltonian(&out.hamiltonian, c.frame);
    let floor = out.report.condition(ConditionId::E4).estimates;
    let consts = table.constants(floor.as_ref()).unwrap();
    let ext = McShaneExtension::new(table, consts);
    let total = ext.table().points.len();
    let mismatched = extension_mismatches(&ext, 1e-12).len();
    let h = homogenize(ext);
    let region = AuditRegion {
        frame: c.frame,
        x_lo: -1.0,
        x_hi: 1.0,
        s_radius: 2.0,
    };
    let reg = verify_regularity(&h, &region, 1000, 5);
    let pass = mismatched == 0
        && reg.homogeneity_max_residual <= 1e-12
        && reg.growth_violations == 0
        && reg.s_lipschitz_violations == 0
        && (h.meta().upsilon - 2.0 * consts.gamma).abs() == 0.0;
    line(
        "5",
        "extension suite",
        pass,
        format!(
            "({total} samples, {mismatched} off by > 1e-12; 1000 draws: homogeneity residual {:.1e}, growth ratio {:.3} ({} violations), s-Lipschitz ratio {:.3} ({} violations))",
            reg.homogeneity_max_residual,
            reg.growth_max_ratio,
            reg.growth_violations,
            reg.s_lipschitz_max_ratio,
            reg.s_lipschitz_violations
        ),
    );
    assert!(pass);
}

#[test]
fn a6_lax_friedrichs_matches_saddle_and_converges() {
    let _g = serial();
    let start = Instant::now();
    let c = saddle();
    let h = max_norm_h();
    let oracle = |t: f64, x: &[f64]| c.eval(t, x);
    let mut errors = Vec::new();
    for points in [161, 321] {
        let grid = Grid::cube(2, -1.0, 1.0, points).unwrap();
        let sigma = TerminalPayoff::from_candidate(&c, &grid).on_grid(&grid);
        let field = solve_lf(&h, &sigma, &grid, c.frame, &LfConfig::default()).unwrap();
        errors.push(compare(&field, &oracle, 0.05).unwrap().max_abs);
    }
    let elapsed = start.elapsed();
    let ratio = errors[0] / errors[1];
    let pass = errors[0] <= 0.05 && ratio >= 1.4 && elapsed <= Duration::from_secs(300);
    line(
        "6",
        "Lax-Friedrichs certificate",
        pass,
        format!(
            "(max interior error {:.5} at 161^2, {:.5} at 321^2, ratio {ratio:.3}, {:.1} s)",
            errors[0],
            errors[1],
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

struct DpRun {
    max_vs: f64,
    violations: usize,
}

fn dp_against(oracle: &dyn Fn(f64, &[f64]) -> f64) -> DpRun {
    let frame = GameFrame::new(1, 0.0, 1.0).unwrap();
    let h: Arc<dyn Hamiltonian> = Arc::new(abs_h());
    let game = GameDynamics::unchecked(h, GameKind::Isaacs1d).unwrap();
    let grid = Grid::cube(1, -2.0, 2.0, 201).unwrap();
    let sigma: Vec<f64> = (0..grid.len()).map(|k| 1.0 + grid.coords(k)[0].abs()).collect();
    let cfg = DpConfig {
        dt: 0.01,
        ..DpConfig::default()
    };
    let pair = solve_dp_pair(&game, &sigma, &grid, frame, &cfg).unwrap();
    DpRun {
        max_vs: compare(&pair.maxmin, oracle, 0.05).unwrap().max_abs,
        violations: pair.order_violations.len(),
    }
}

/// Implemented as stated; `t + |x|` is not the value of this game, so the
/// comparison is expected to fail. See `a7b_...` for the actual value.
#[test]
fn a7_sign_control_dp_against_stated_value() {
    let _g = serial();
    let run = dp_against(&|t, x| t + x[0].abs());
    let pass = run.max_vs <= 0.05 && run.violations == 0;
    line(
        "7",
        "sign-control DP vs t+|x|",
        pass,
        format!(
            "(201 points on [-2, 2], dt 0.01, max interior error {:.4}, maxmin > minmax at {} nodes)",
            run.max_vs, run.violations
        ),
    );
    assert!(pass, "max interior error {:.4} against t+|x|", run.max_vs);
}

#[test]
fn a7b_sign_control_dp_against_hopf_lax_value() {
    let _g = serial();
    let run = dp_against(&|t, x| 1.0 + (x[0].abs() - (1.0 - t)).max(0.0));
    let pass = run.max_vs <= 0.05 && run.violations == 0;
    line(
        "7b",
        "sign-control DP vs 1+(|x|-1+t)+",
        pass,
        format!(
            "(201 points on [-2, 2], dt 0.01, max interior error {:.4}, maxmin > minmax at {} nodes)",
            run.max_vs, run.violations
        ),
    );
    assert!(pass);
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| standard_normal(rng)).collect();
        let l = norm(&v);
        if l > 1e-12 {
            return v.iter().map(|c| c / l).collect();
        }
    }
}

fn random_position(rng: &mut ChaCha8Rng) -> Position {
    let t = rng.gen_range(0.05..0.95);
    let mut x = vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    match rng.gen_range(0..4) {
        0 => x[0] = 0.0,
        1 => x[1] = 0.0,
        2 => x = vec![0.0, 0.0],
        _ => {}
    }
    Position::new(t, x)
}

#[test]
fn a8_dini_sets_agree_with_sampled_directions() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let directions: Vec<Vec<f64>> = (0..4000).map(|_| unit(&mut rng, 3)).collect();
    let forms: Vec<PiecewiseForm> = [saddle(), scaled_saddle()].iter().map(|c| decompose(c).unwrap()).collect();
    let mut worst_slack = f64::INFINITY;
    let mut vertices = 0;
    let mut kinks = Vec::new();
    for k in 0..100 {
        let which = k % 2;
        let pw = &forms[which];
        let p = random_position(&mut rng);
        let a = analyze(pw, &p, 0, 8).unwrap();
        let derivs: Vec<f64> = directions
            .iter()
            .map(|d| directional_derivative(pw, &p, d).unwrap())
            .collect();
        for v in &a.sub.vertices {
            vertices += 1;
            for (d, dd) in directions.iter().zip(&derivs) {
                worst_slack = worst_slack.min(dd - dot(v, d));
            }
        }
        for v in &a.sup.vertices {
            vertices += 1;
            for (d, dd) in directions.iter().zip(&derivs) {
                worst_slack = worst_slack.min(dot(v, d) - dd);
            }
        }
        if !a.smooth {
            kinks.push((which, p, a));
        }
    }
    // Cycle over the kinks until 50 Clarke points outside D- are drawn.
    let mut outside: Vec<(usize, Position, Vec<f64>)> = Vec::new();
    for (which, p, a) in kinks.iter().cycle().take(100 * kinks.len()) {
        if outside.len() == 50 {
            break;
        }
        let w = simplex_weights(&mut rng, a.clarke.len());
        let mut point = vec![0.0; 3];
        for (wk, g) in w.iter().zip(&a.clarke) {
            for (pi, gi) in point.iter_mut().zip(g) {
                *pi += wk * gi;
            }
        }
        if !a.sub.contains(&point, 1e-9) {
            outside.push((*which, p.clone(), point));
        }
    }
    let refuted = outside
        .iter()
        .filter(|(which, p, w)| {
            directions
                .iter()
                .any(|d| dot(w, d) > directional_derivative(&forms[*which], p, d).unwrap() + 1e-9)
        })
        .count();
    let pass = worst_slack >= -1e-9 && outside.len() == 50 && refuted == outside.len();
    line(
        "8",
        "Dini oracle equivalence",
        pass,
        format!(
            "(100 positions, {vertices} vertices x 4000 directions, min slack {worst_slack:.2e}; {refuted}/{} Clarke points outside D- refuted)",
            outside.len()
        ),
    );
    assert!(pass);
}

fn pipeline_run(dir: &Path) {
    let verdict = dir.join("verdict.json");
    let ok = |c: &mut Command| {
        let out = c.output().expect("gameval runs");
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    ok(bin().args(["check"]).arg(data("phi1.json")).args(["--seed", "7", "--out"]).arg(&verdict));
    ok(bin().arg("synth").arg(&verdict).arg("--out").arg(dir));
    ok(bin().arg("verify").arg(dir).args(["--grid", "21", "--tol", "0.1"]));
    ok(bin().arg("report").arg(dir));
}

#[test]
fn a9_pipeline_is_deterministic() {
    let _g = serial();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline_run(a.path());
    pipeline_run(b.path());
    let mut names: Vec<String> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "run_meta.json")
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| fs::read(a.path().join(n)).ok() != fs::read(b.path().join(n)).ok())
        .collect();
    let pass = differing.is_empty() && names.len() >= 7;
    line(
        "9",
        "pipeline determinism",
        pass,
        format!("({} files compared, {} differ: {differing:?})", names.len(), differing.len()),
    );
    assert!(pass);
}
