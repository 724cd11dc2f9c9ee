use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gameval::conditions::CheckConfig;
use gameval::game::GameKind;
use gameval::hamiltonian::ClosedFormHamiltonian;
use gameval::hj::{Dissipation, Scheme};
use gameval::pipeline::{
    self, load_candidate, read_json, report_dir, synthesize_to_dir, verdict_name, verdict_summary, verify_dir,
    write_json, SynthConfig, SynthOutcome, VerifyConfig,
};
use gameval::{Error, Result};

const EXIT_CONFIG: u8 = 3;

/// Decide whether a piecewise-smooth function is the value of a differential
/// game, build a game that realizes it, and check the game numerically.
#[derive(Parser)]
#[command(name = "gameval", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the membership conditions; exit 0 IN_VALF, 1 NOT_IN_VALF, 2 INCONCLUSIVE.
    Check(CheckArgs),
    /// Build the Hamiltonian and game dumps for a candidate or a verdict report.
    Synth(SynthArgs),
    /// Solve the Hamilton-Jacobi equation for a synthesized game and compare.
    Verify(VerifyArgs),
    /// Summarize a directory of results.
    Report { dir: PathBuf },
}

#[derive(Args)]
struct Sampling {
    /// Spatial box [a, b]^n.
    #[arg(long = "box", num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true)]
    x_box: Option<Vec<f64>>,
    /// Lattice points per axis on each time slice.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance for hull membership and consistency checks.
    #[arg(long)]
    tol: Option<f64>,
}

impl Sampling {
    fn apply(&self, mut cfg: CheckConfig) -> Result<CheckConfig> {
        if let Some(b) = &self.x_box {
            if !(b[0] < b[1]) {
                return Err(Error::Config(format!("--box needs a < b, got {} {}", b[0], b[1])));
            }
            cfg.sampling.x_lo = b[0];
            cfg.sampling.x_hi = b[1];
        }
        if let Some(m) = self.samples {
            if m < 2 {
                return Err(Error::Config("--samples needs at least 2 points per axis".into()));
            }
            cfg.sampling.lattice = m;
        }
        if let Some(s) = self.seed {
            cfg.sampling.seed = s;
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(Error::Config(format!("--tol must be positive, got {t}")));
            }
            cfg.tol = t;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct CheckArgs {
    candidate: PathBuf,
    #[command(flatten)]
    sampling: Sampling,
    /// Where to write the verdict report; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Maxmin,
    Minmax,
    Isaacs1d,
}

impl From<KindArg> for GameKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Maxmin => GameKind::Maxmin,
            KindArg::Minmax => GameKind::Minmax,
            KindArg::Isaacs1d => GameKind::Isaacs1d,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Candidate JSON, or a verdict report from `check`.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "maxmin")]
    kind: KindArg,
    #[arg(long, default_value = "game")]
    out: PathBuf,
    /// Synthesize even when the verdict is not IN_VALF.
    #[arg(long)]
    force: bool,
    /// Use this Hamiltonian instead of the extension of the sampled one.
    #[arg(long)]
    closed_form: Option<PathBuf>,
    #[command(flatten)]
    sampling: Sampling,
    /// Random (t, x, s) draws for the Hamiltonian identity gate.
    #[arg(long, default_value_t = 32)]
    gate_samples: usize,
    /// Ball-control mesh spacing for the identity gate.
    #[arg(long, default_value_t = 0.1)]
    gate_delta: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Lf,
    Dp,
}

#[derive(Clone, Copy, ValueEnum)]
enum DissipationArg {
    Local,
    Global,
}

#[derive(Args)]
struct VerifyArgs {
    gamedir: PathBuf,
    #[arg(long, value_enum, default_value = "lf")]
    scheme: SchemeArg,
    /// Grid points per axis.
    #[arg(long, default_value_t = 161)]
    grid: usize,
    #[arg(long, default_value_t = 0.05)]
    tol: f64,
    #[arg(long = "box", num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true)]
    x_box: Option<Vec<f64>>,
    /// Time step: `auto` or a number.
    #[arg(long, default_value = "auto")]
    dt: String,
    /// Ball-control mesh spacing for dynamic programming.
    #[arg(long, default_value_t = 0.25)]
    delta: f64,
    #[arg(long, value_enum, default_value = "local")]
    dissipation: DissipationArg,
    /// Also solve on the doubled grid and report the error ratio.
    #[arg(long)]
    refine: bool,
    /// Time levels kept in field.csv besides the terminal one.
    #[arg(long, default_value_t = 20)]
    snapshots: usize,
}

fn run_check(a: &CheckArgs) -> Result<u8> {
    let (c, embedded) = load_candidate(&a.candidate)?;
    let cfg = a.sampling.apply(embedded.unwrap_or_default())?;
    let out = pipeline::run_check(&c, &cfg)?;
    match &a.out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            write_json(path, &out.report)?;
            print!("{}", verdict_summary(&out.report));
        }
        None => {
            eprint!("{}", verdict_summary(&out.report));
            println!("{}", serde_json::to_string_pretty(&out.report)?);
        }
    }
    Ok(out.report.overall.exit_code() as u8)
}

fn run_synth(a: &SynthArgs) -> Result<u8> {
    let (c, embedded) = load_candidate(&a.input)?;
    let check = a.sampling.apply(embedded.unwrap_or_default())?;
    let closed_form = a
        .closed_form
        .as_deref()
        .map(|p| read_json(p).and_then(|v| ClosedFormHamiltonian::from_json(&v)))
        .transpose()?;
    let cfg = SynthConfig {
        check,
        kind: a.kind.into(),
        force: a.force,
        closed_form,
        gate_samples: a.gate_samples,
        gate_delta: a.gate_delta,
        ..SynthConfig::default()
    };
    match synthesize_to_dir(&c, &cfg, &a.out)? {
        SynthOutcome::Refused(v) => {
            eprintln!(
                "verdict {}; not synthesizing (pass --force to override). Report in {}",
                verdict_name(v),
                a.out.display()
            );
            Ok(v.exit_code() as u8)
        }
        SynthOutcome::Written { verdict, game } => {
            if game.unverified_premise {
                eprintln!("warning: UNVERIFIED PREMISE, verdict was {}", verdict_name(verdict));
            }
            println!(
                "{} game written to {} (Upsilon = {}, identity error {:.3e})",
                game.kind,
                a.out.display(),
                game.upsilon,
                game.identity.max_error
            );
            Ok(0)
        }
    }
}

fn run_verify(a: &VerifyArgs) -> Result<u8> {
    let dt = match a.dt.as_str() {
        "auto" => None,
        s => Some(
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("--dt must be 'auto' or a number, got '{s}'")))?,
        ),
    };
    if let Some(b) = &a.x_box {
        if !(b[0] < b[1]) {
            return Err(Error::Config(format!("--box needs a < b, got {} {}", b[0], b[1])));
        }
    }
    if a.grid < 3 {
        return Err(Error::Config("--grid needs at least 3 points".into()));
    }
    let cfg = VerifyConfig {
        scheme: match a.scheme {
            SchemeArg::Lf => Scheme::LaxFriedrichs,
            SchemeArg::Dp => Scheme::DynamicProgramming,
        },
        points: a.grid,
        tol: a.tol,
        x_box: a.x_box.as_ref().map(|b| (b[0], b[1])),
        dt,
        delta: a.delta,
        dissipation: match a.dissipation {
            DissipationArg::Local => Dissipation::Local,
            DissipationArg::Global => Dissipation::Global,
        },
        refine: a.refine,
        snapshots: Some(a.snapshots),
    };
    let r = verify_dir(&a.gamedir, &cfg)?;
    println!(
        "max interior error {:.4e} over {} comparisons (tolerance {}): {}",
        r.stats.max_abs,
        r.stats.compared,
        r.stats.tolerance,
        if r.pass { "pass" } else { "FAIL" }
    );
    if let Some(row) = r.stats.refinement.last() {
        if let Some(ratio) = row.ratio {
            println!("refined error {:.4e}, ratio {ratio:.3}", row.max_abs);
        }
    }
    Ok(if r.pass { 0 } else { 1 })
}

fn run_report(dir: &Path) -> Result<u8> {
    let (text, code) = report_dir(dir)?;
    print!("{text}");
    Ok(code as u8)
}

fn exit_for(e: &Error) -> u8 {
    match e {
        Error::IdentityRejected(_) => 1,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Check(a) => run_check(a),
        Command::Synth(a) => run_synth(a),
        Command::Verify(a) => run_verify(a),
        Command::Report { dir } => run_report(dir),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_for(&e))
        }
    }
}
