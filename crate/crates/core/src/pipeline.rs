//! File-level pipeline behind the command line: check a candidate,
//! synthesize a Hamiltonian and game into a directory, verify the directory,
//! and summarize it.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::conditions::{full_check, CheckConfig, CheckOutcome, ConditionId, NatSample, Origin, Verdict, VerdictReport};
use crate::error::{Error, Result};
use crate::expr::{Candidate, GameFrame, Position};
use crate::game::{synthesize, GameDynamics, GameKind, GateConfig, Order};
use crate::hamiltonian::{verify_regularity, AuditRegion, ClosedFormHamiltonian, Hamiltonian, HamiltonianMeta, RegularityReport};
use crate::hj::{
    compare, minimax_spot_check, refinement_table, solve_dp_pair, solve_lf, Dissipation, DpConfig, ErrorStats, Grid, LfConfig,
    Scheme, SpotReport, TerminalPayoff, ValueField,
};
use crate::mcshane::{homogenize, ExtensionConstants, McShaneExtension, SampleTable};

pub const VERDICT_FILE: &str = "verdict.json";
pub const HAMILTONIAN_FILE: &str = "hamiltonian.json";
pub const SAMPLES_FILE: &str = "hamiltonian_samples.csv";
pub const GAME_FILE: &str = "game.json";
pub const VERIFY_FILE: &str = "verify.json";
pub const FIELD_FILE: &str = "field.csv";
pub const REPORT_FILE: &str = "report.txt";
/// The only output carrying wall-clock data.
pub const META_FILE: &str = "run_meta.json";

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

pub fn write_run_meta(dir: &Path, command: &str, seed: u64) -> Result<()> {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    write_json(
        &dir.join(META_FILE),
        &json!({
            "command": command,
            "timestamp_unix": secs,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
        }),
    )
}

/// Accepts either a candidate document or a verdict report that embeds one.
pub fn load_candidate(path: &Path) -> Result<(Candidate, Option<CheckConfig>)> {
    let v: Value = read_json(path)?;
    if let Some(c) = v.get("candidate") {
        let cfg = v.get("config").map(|c| serde_json::from_value(c.clone())).transpose()?;
        return Ok((Candidate::from_json(c)?, cfg));
    }
    Ok((Candidate::from_json(&v)?, None))
}

pub fn run_check(c: &Candidate, cfg: &CheckConfig) -> Result<CheckOutcome> {
    full_check(c, cfg)
}

/// Human-readable lines for a verdict.
pub fn verdict_summary(r: &VerdictReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "candidate: n = {}, t in [{}, {}]", r.frame.n, r.frame.t0, r.frame.theta0);
    let _ = writeln!(s, "pieces: {}, kink hyperplanes: {}", r.pieces, r.hyperplanes);
    for c in &r.conditions {
        let definitive = c.witnesses.iter().filter(|w| w.definitive).count();
        let _ = write!(s, "  {:?}: {:?}", c.id, c.status);
        if !c.witnesses.is_empty() {
            let _ = write!(s, " ({} witnesses, {} definitive)", c.witnesses.len(), definitive);
        }
        if let Some(e) = &c.estimates {
            let _ = write!(s, " [gamma = {:.6}, L = {:.6}, W = {:.6}]", e.gamma, e.lipschitz_x, e.time_modulus);
        }
        let _ = writeln!(s);
        if let Some(w) = c.witnesses.first() {
            let _ = writeln!(s, "    first witness: {}", w.message);
        }
    }
    for w in &r.warnings {
        let _ = writeln!(s, "  warning: {w}");
    }
    let _ = writeln!(s, "overall: {}", verdict_name(r.overall));
    s
}

pub fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::InValf => "IN_VALF",
        Verdict::NotInValf => "NOT_IN_VALF",
        Verdict::Inconclusive => "INCONCLUSIVE",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HamiltonianSource {
    /// Extension of the sampled partial Hamiltonian.
    Mcshane {
        constants: ExtensionConstants,
        samples: usize,
        zero_constraints: usize,
        covering_radius: f64,
        table: String,
        table_sha256: String,
    },
    /// User-supplied expression, for comparison runs.
    ClosedForm { hamiltonian: Value },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianDump {
    pub n: usize,
    pub frame: GameFrame,
    pub x_lo: f64,
    pub x_hi: f64,
    pub meta: HamiltonianMeta,
    pub source: HamiltonianSource,
    pub regularity: RegularityReport,
    pub seed: u64,
}

fn write_sample_table(path: &Path, table: &SampleTable) -> Result<()> {
    let n = table.frame.n;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["t".to_string()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=n).map(|i| format!("s{i}")));
    header.push("h".into());
    header.push("origin".into());
    w.write_record(&header)?;
    for p in &table.points {
        let mut row = vec![p.t.to_string()];
        row.extend(p.x.iter().map(f64::to_string));
        row.extend(p.s.iter().map(f64::to_string));
        row.push(p.h.to_string());
        row.push(format!("{:?}", p.origin));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn read_sample_table(path: &Path, frame: GameFrame, zero_constraints: usize) -> Result<SampleTable> {
    let n = frame.n;
    let mut r = csv::Reader::from_path(path)?;
    let mut points = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 2 * n + 3 {
            return Err(Error::Config(format!("{}: expected {} columns", path.display(), 2 * n + 3)));
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("{}: bad number '{}': {e}", path.display(), &rec[i])))
        };
        let origin = match &rec[2 * n + 2] {
            "E1" => Origin::E1,
            "E2" => Origin::E2,
            other => return Err(Error::Config(format!("{}: unknown origin '{other}'", path.display()))),
        };
        points.push(NatSample {
            t: num(0)?,
            x: (1..=n).map(num).collect::<Result<_>>()?,
            s: (n + 1..=2 * n).map(num).collect::<Result<_>>()?,
            h: num(2 * n + 1)?,
            origin,
        });
    }
    Ok(SampleTable {
        frame,
        points,
        zero_constraints,
    })
}

/// Rebuilds the Hamiltonian a directory refers to, checking the sample
/// table against its recorded hash.
pub fn load_hamiltonian(dir: &Path) -> Result<(Arc<dyn Hamiltonian>, HamiltonianDump)> {
    let dump: HamiltonianDump = read_json(&dir.join(HAMILTONIAN_FILE))?;
    let h: Arc<dyn Hamiltonian> = match &dump.source {
        HamiltonianSource::ClosedForm { hamiltonian } => Arc::new(ClosedFormHamiltonian::from_json(hamiltonian)?),
        HamiltonianSource::Mcshane {
            constants,
            zero_constraints,
            table,
            table_sha256,
            ..
        } => {
            let path = dir.join(table);
            let found = sha256_file(&path)?;
            if &found != table_sha256 {
                return Err(Error::HashMismatch {
                    file: table.clone(),
                    expected: table_sha256.clone(),
                    found,
                });
            }
            let table = read_sample_table(&path, dump.frame, *zero_constraints)?;
            Arc::new(homogenize(McShaneExtension::new(table, *constants)))
        }
    };
    Ok((h, dump))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentitySummary {
    pub delta: Option<f64>,
    pub samples: usize,
    pub mesh_points: usize,
    pub max_error: f64,
    pub max_error_ratio: f64,
    pub isaacs_gap: f64,
    pub order_violations: usize,
    pub growth_max_ratio: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameDump {
    pub kind: GameKind,
    pub n: usize,
    #[serde(rename = "Upsilon")]
    pub upsilon: f64,
    #[serde(rename = "Lambda_f")]
    pub lambda_f: f64,
    #[serde(rename = "P")]
    pub controls_min: String,
    #[serde(rename = "Q")]
    pub controls_max: String,
    pub order: Order,
    pub hamiltonian: String,
    pub hamiltonian_sha256: String,
    pub candidate: Value,
    pub verdict: Verdict,
    /// Set when synthesis was forced past a verdict other than IN_VALF.
    pub unverified_premise: bool,
    pub notes: Vec<String>,
    pub identity: IdentitySummary,
    pub spot_check: SpotReport,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub check: CheckConfig,
    pub kind: GameKind,
    pub force: bool,
    pub closed_form: Option<ClosedFormHamiltonian>,
    pub gate_samples: usize,
    pub gate_delta: f64,
    pub spot_positions: usize,
    pub audit_draws: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            check: CheckConfig::default(),
            kind: GameKind::Maxmin,
            force: false,
            closed_form: None,
            gate_samples: 32,
            gate_delta: 0.1,
            spot_positions: 200,
            audit_draws: 1000,
        }
    }
}

#[derive(Clone, Debug)]
pub enum SynthOutcome {
    Refused(Verdict),
    Written { verdict: Verdict, game: Box<GameDump> },
}

fn spot_positions(outcome: &CheckOutcome, max: usize) -> Vec<Position> {
    let all: Vec<&Position> = outcome.hamiltonian.groups.iter().map(|g| &g.position).collect();
    let stride = all.len().div_ceil(max.max(1)).max(1);
    all.into_iter().step_by(stride).cloned().collect()
}

/// Checks the candidate, then writes the Hamiltonian and game dumps into
/// `out` unless the verdict forbids it.
pub fn synthesize_to_dir(c: &Candidate, cfg: &SynthConfig, out: &Path) -> Result<SynthOutcome> {
    fs::create_dir_all(out)?;
    let seed = cfg.check.sampling.seed;
    let outcome = run_check(c, &cfg.check)?;
    write_json(&out.join(VERDICT_FILE), &outcome.report)?;
    let verdict = outcome.report.overall;
    if verdict != Verdict::InValf && !cfg.force {
        write_run_meta(out, "synth", seed)?;
        return Ok(SynthOutcome::Refused(verdict));
    }
    let frame = c.frame;
    let (x_lo, x_hi) = (cfg.check.sampling.x_lo, cfg.check.sampling.x_hi);
    let mut notes = Vec::new();

    let (h, source, smooth_target): (Arc<dyn Hamiltonian>, HamiltonianSource, f64) = match &cfg.closed_form {
        Some(cf) => {
            if cf.dim() != frame.n {
                return Err(Error::Config(format!(
                    "closed-form Hamiltonian has n = {}, candidate has n = {}",
                    cf.dim(),
                    frame.n
                )));
            }
            (
                Arc::new(cf.clone()),
                HamiltonianSource::ClosedForm { hamiltonian: cf.to_json() },
                1e-9,
            )
        }
        None => {
            let table = SampleTable::from_hamiltonian(&outcome.hamiltonian, frame);
            let floor = outcome.report.condition(ConditionId::E4).estimates;
            if floor.is_none() {
                notes.push("growth estimates unavailable; extension constants come from the sample table alone".into());
            }
            let constants = table.constants(floor.as_ref())?;
            let ext = McShaneExtension::new(table, constants);
            let covering = ext.covering_radius(x_lo, x_hi, 9);
            let table_path = out.join(SAMPLES_FILE);
            write_sample_table(&table_path, ext.table())?;
            let source = HamiltonianSource::Mcshane {
                constants,
                samples: ext.table().points.len(),
                zero_constraints: ext.table().zero_constraints,
                covering_radius: covering,
                table: SAMPLES_FILE.into(),
                table_sha256: sha256_file(&table_path)?,
            };
            (Arc::new(homogenize(ext)), source, 10.0 * constants.lipschitz_x * covering)
        }
    };

    let region = AuditRegion {
        frame,
        x_lo,
        x_hi,
        s_radius: 2.0,
    };
    let regularity = verify_regularity(h.as_ref(), &region, cfg.audit_draws, seed);
    if !regularity.pass {
        notes.push("regularity audit of the Hamiltonian failed; see hamiltonian.json".into());
    }
    let spot = minimax_spot_check(
        &outcome.form,
        h.as_ref(),
        &spot_positions(&outcome, cfg.spot_positions),
        20,
        smooth_target,
        smooth_target.max(1e-9),
        seed,
    )?;
    if !spot.pass {
        if cfg.closed_form.is_some() && !cfg.force {
            return Err(Error::Config(
                "the closed-form Hamiltonian violates the minimax inequalities for this candidate".into(),
            ));
        }
        notes.push("minimax spot check reported violations; see spot_check".into());
    }

    let gate = GateConfig {
        region,
        samples: cfg.gate_samples,
        delta: cfg.gate_delta,
        seed,
    };
    let (game, identity) = synthesize(h.clone(), cfg.kind, &gate)?;
    if cfg.kind == GameKind::Minmax {
        notes.push(
            "min-max dynamics f' = (c - H(y)) y' + c z + c (1 - <z,y>) z' are derived, not quoted; accepted after the identity check".into(),
        );
    }

    let dump = HamiltonianDump {
        n: frame.n,
        frame,
        x_lo,
        x_hi,
        meta: *h.meta(),
        source,
        regularity,
        seed,
    };
    let h_path = out.join(HAMILTONIAN_FILE);
    write_json(&h_path, &dump)?;
    let finite = cfg.kind.finite_controls();
    let set = if finite { "finite-set({-1,1}^2)" } else { "ball-product(B^n x B^n, radius 1)" };
    let game_dump = GameDump {
        kind: cfg.kind,
        n: frame.n,
        upsilon: game.upsilon(),
        lambda_f: game.lambda_f(),
        controls_min: set.into(),
        controls_max: set.into(),
        order: cfg.kind.order(),
        hamiltonian: HAMILTONIAN_FILE.into(),
        hamiltonian_sha256: sha256_file(&h_path)?,
        candidate: c.to_json(),
        verdict,
        unverified_premise: verdict != Verdict::InValf,
        notes,
        identity: IdentitySummary {
            delta: identity.delta,
            samples: identity.samples.len(),
            mesh_points: identity.mesh_points,
            max_error: identity.max_error,
            max_error_ratio: identity.max_error_ratio,
            isaacs_gap: identity.isaacs_gap,
            order_violations: identity.order_violations,
            growth_max_ratio: identity.growth_max_ratio,
            pass: identity.pass,
        },
        spot_check: spot,
        seed,
    };
    write_json(&out.join(GAME_FILE), &game_dump)?;
    write_run_meta(out, "synth", seed)?;
    Ok(SynthOutcome::Written {
        verdict,
        game: Box::new(game_dump),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub scheme: Scheme,
    pub points: usize,
    pub tol: f64,
    /// Defaults to the box the Hamiltonian was built on.
    pub x_box: Option<(f64, f64)>,
    pub dt: Option<f64>,
    pub delta: f64,
    pub dissipation: Dissipation,
    pub refine: bool,
    pub snapshots: Option<usize>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::LaxFriedrichs,
            points: 161,
            tol: 0.05,
            x_box: None,
            dt: None,
            delta: 0.25,
            dissipation: Dissipation::Local,
            refine: false,
            snapshots: Some(20),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub scheme: Scheme,
    pub config: VerifyConfig,
    pub x_lo: f64,
    pub x_hi: f64,
    pub points: Vec<usize>,
    pub dt: f64,
    pub steps: usize,
    pub stats: ErrorStats,
    /// DP only: nodes where the max-min value exceeds the min-max value.
    pub order_violations: Option<usize>,
    pub pass: bool,
    pub hamiltonian_sha256: String,
    pub unverified_premise: bool,
    pub seed: u64,
}

fn solve_once(
    game: &GameDump,
    h: &Arc<dyn Hamiltonian>,
    c: &Candidate,
    grid: &Grid,
    cfg: &VerifyConfig,
    dt: Option<f64>,
) -> Result<(ValueField, Option<usize>)> {
    let sigma = TerminalPayoff::from_candidate(c, grid).on_grid(grid);
    match cfg.scheme {
        Scheme::LaxFriedrichs => {
            let lf = LfConfig {
                dt,
                dissipation: cfg.dissipation,
                snapshots: cfg.snapshots,
                ..LfConfig::default()
            };
            Ok((solve_lf(h.as_ref(), &sigma, grid, c.frame, &lf)?, None))
        }
        Scheme::DynamicProgramming => {
            let dyn_game = GameDynamics::unchecked(h.clone(), game.kind)?;
            let dp = DpConfig {
                dt: dt.unwrap_or(0.01),
                delta: cfg.delta,
                snapshots: cfg.snapshots,
                seed: game.seed,
                ..DpConfig::default()
            };
            let pair = solve_dp_pair(&dyn_game, &sigma, grid, c.frame, &dp)?;
            let violations = pair.order_violations.len();
            let field = match game.order {
                Order::Maxmin => pair.maxmin,
                Order::Minmax => pair.minmax,
            };
            Ok((field, Some(violations)))
        }
    }
}

/// Solves the Cauchy problem for the game in `dir` and compares with the
/// candidate. Refuses a game whose Hamiltonian dump does not hash to the
/// recorded value.
pub fn verify_dir(dir: &Path, cfg: &VerifyConfig) -> Result<VerifyReport> {
    if !(cfg.tol > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {}", cfg.tol)));
    }
    let game: GameDump = read_json(&dir.join(GAME_FILE))?;
    let found = sha256_file(&dir.join(&game.hamiltonian))?;
    if found != game.hamiltonian_sha256 {
        return Err(Error::HashMismatch {
            file: game.hamiltonian.clone(),
            expected: game.hamiltonian_sha256.clone(),
            found,
        });
    }
    let (h, dump) = load_hamiltonian(dir)?;
    let c = Candidate::from_json(&game.candidate)?;
    let (x_lo, x_hi) = cfg.x_box.unwrap_or((dump.x_lo, dump.x_hi));
    let grid = Grid::cube(c.frame.n, x_lo, x_hi, cfg.points)?;
    let oracle = |t: f64, x: &[f64]| c.eval(t, x);

    let (field, violations) = solve_once(&game, &h, &c, &grid, cfg, cfg.dt)?;
    let mut stats = compare(&field, &oracle, cfg.tol)?;
    field.write_csv(&dir.join(FIELD_FILE), &oracle)?;
    if cfg.refine {
        let fine_grid = Grid::cube(c.frame.n, x_lo, x_hi, 2 * cfg.points - 1)?;
        let fine_dt = match cfg.scheme {
            Scheme::LaxFriedrichs => cfg.dt.map(|d| d / 2.0),
            Scheme::DynamicProgramming => Some(field.dt / 2.0),
        };
        let (fine, _) = solve_once(&game, &h, &c, &fine_grid, cfg, fine_dt)?;
        let fine_stats = compare(&fine, &oracle, cfg.tol)?;
        stats.refinement = refinement_table(&[(&field, &stats), (&fine, &fine_stats)]);
    }
    let pass = stats.pass && violations.unwrap_or(0) == 0;
    let report = VerifyReport {
        scheme: cfg.scheme,
        config: cfg.clone(),
        x_lo,
        x_hi,
        points: grid.points.clone(),
        dt: field.dt,
        steps: field.steps,
        stats,
        order_violations: violations,
        pass,
        hamiltonian_sha256: game.hamiltonian_sha256.clone(),
        unverified_premise: game.unverified_premise,
        seed: game.seed,
    };
    write_json(&dir.join(VERIFY_FILE), &report)?;
    write_run_meta(dir, "verify", game.seed)?;
    Ok(report)
}

/// One text summary of whatever the directory holds. Returns the text and
/// the exit code of the weakest result in it.
pub fn report_dir(dir: &Path) -> Result<(String, i32)> {
    let mut s = String::new();
    let mut code = 0;
    let verdict_path = dir.join(VERDICT_FILE);
    let game_path = dir.join(GAME_FILE);
    let verify_path = dir.join(VERIFY_FILE);
    if !verdict_path.exists() && !game_path.exists() && !verify_path.exists() {
        return Err(Error::Config(format!("{} holds no verdict, game or verification", dir.display())));
    }
    if verdict_path.exists() {
        let r: VerdictReport = read_json(&verdict_path)?;
        let _ = writeln!(s, "== membership check (seed {}) ==", r.seed);
        s.push_str(&verdict_summary(&r));
        code = code.max(r.overall.exit_code());
    }
    if game_path.exists() {
        let g: GameDump = read_json(&game_path)?;
        let _ = writeln!(s, "== game ==");
        if g.unverified_premise {
            let _ = writeln!(s, "!! UNVERIFIED PREMISE: synthesized from a {} verdict", verdict_name(g.verdict));
        }
        let _ = writeln!(s, "kind: {}, order: {:?}, Upsilon = {}, Lambda_f = {}", g.kind, g.order, g.upsilon, g.lambda_f);
        let _ = writeln!(
            s,
            "identity check: {} samples, max error {:.3e} (ratio to bound {:.3}), Isaacs gap {:.3e}, {}",
            g.identity.samples,
            g.identity.max_error,
            g.identity.max_error_ratio,
            g.identity.isaacs_gap,
            if g.identity.pass { "pass" } else { "FAIL" }
        );
        let _ = writeln!(
            s,
            "minimax spot check: {} smooth (max residual {:.3e}), {} kinks, {} violations",
            g.spot_check.smooth,
            g.spot_check.smooth_max_residual,
            g.spot_check.nonsmooth,
            g.spot_check.violations.len()
        );
        for n in &g.notes {
            let _ = writeln!(s, "note: {n}");
        }
    }
    if verify_path.exists() {
        let v: VerifyReport = read_json(&verify_path)?;
        let _ = writeln!(s, "== verification ==");
        let _ = writeln!(
            s,
            "{:?} on {:?} points over [{}, {}], dt = {:.4e}, {} steps",
            v.scheme, v.points, v.x_lo, v.x_hi, v.dt, v.steps
        );
        let _ = writeln!(
            s,
            "max interior error {:.4e} (mean {:.4e}) at t = {}, x = {:?}; tolerance {}",
            v.stats.max_abs, v.stats.mean_abs, v.stats.worst_t, v.stats.worst_x, v.stats.tolerance
        );
        for row in &v.stats.refinement {
            let _ = writeln!(
                s,
                "  refinement {:?}: error {:.4e}{}",
                row.points,
                row.max_abs,
                row.ratio.map(|r| format!(", ratio {r:.3}")).unwrap_or_default()
            );
        }
        if let Some(k) = v.order_violations {
            let _ = writeln!(s, "max-min above min-max at {k} nodes");
        }
        let _ = writeln!(s, "verification: {}", if v.pass { "pass" } else { "FAIL" });
        if !v.pass {
            code = code.max(1);
        }
    }
    fs::write(dir.join(REPORT_FILE), &s)?;
    Ok((s, code))
}
