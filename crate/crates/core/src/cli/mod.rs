//! Command-line front end: `check`, `reconstruct`, `verify` and `snf`.

pub mod config;
mod report;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;

use crate::dynsys::{check_hypotheses, complete_lifts, SystemSpec};
use crate::linalg::{snf, IntMatrix};
use crate::reconstruct::{compute_phase_data, drift_torus, reduce_resonances, Mode, PipelineResult};
use crate::verify::{run_verification, Trajectory};
use config::RunConfig;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "reltori", version, about = "Reconstruction of relative quasi-periodic tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the hypotheses of the reconstruction for a system.
    Check(RunArgs),
    /// Run the pipeline and write `report.json`.
    Reconstruct(RunArgs),
    /// Run the pipeline and the numerical checks; write `trajectory.csv`
    /// and `verification.json`.
    Verify(RunArgs),
    /// Smith normal form of an integer matrix file.
    Snf(SnfArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Exact,
    Numeric,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: `output.dir` from the config, else `.`).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    step: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    height_bound: Option<i64>,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args, Debug)]
struct SnfArgs {
    /// Whitespace- or comma-separated integer rows; `#` starts a comment.
    #[arg(long, alias = "config")]
    matrix: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match cli.command {
        Command::Check(a) => with_config(&a, cmd_check),
        Command::Reconstruct(a) => with_config(&a, cmd_reconstruct),
        Command::Verify(a) => with_config(&a, cmd_verify),
        Command::Snf(a) => cmd_snf(&a),
    }
}

struct Loaded {
    cfg: RunConfig,
    spec: SystemSpec,
    out: PathBuf,
}

fn with_config(args: &RunArgs, cmd: fn(&Loaded) -> i32) -> i32 {
    let mut cfg = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    if let Some(s) = args.step {
        if !(s > 0.0) {
            eprintln!("error: --step must be positive");
            return EXIT_USAGE;
        }
        cfg.pipeline.step = s;
    }
    if let Some(m) = args.mode {
        cfg.pipeline.mode = match m {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Numeric => Mode::Numeric,
        };
    }
    if let Some(h) = args.height_bound {
        cfg.pipeline.height_bound = h;
    }
    if let Some(t) = args.tol {
        cfg.pipeline.tol = t;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let spec = cfg.system_spec().expect("validated on load");
    cmd(&Loaded { cfg, spec, out })
}

fn cmd_check(run: &Loaded) -> i32 {
    let violations = check_hypotheses(&run.spec);
    if violations.is_empty() {
        println!("hypotheses hold");
        EXIT_PASS
    } else {
        for v in &violations {
            println!("violation: {v}");
        }
        EXIT_FAIL
    }
}

/// A failed pipeline stage.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage {}: {}", self.stage, self.message)
    }
}

/// The pipeline with each failure labeled by its stage.
pub fn run_stages(cfg: &RunConfig, spec: &SystemSpec) -> Result<PipelineResult, StageError> {
    fn fail(stage: &'static str) -> impl Fn(&dyn std::fmt::Display) -> StageError {
        move |e| StageError {
            stage,
            message: e.to_string(),
        }
    }
    let violations = check_hypotheses(spec);
    if !violations.is_empty() {
        let msg = violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
        return Err(fail("hypotheses")(&msg));
    }
    let opts = cfg.pipeline_options();
    let lifts = complete_lifts(spec).map_err(|e| fail("lifts")(&e))?;
    let phase = compute_phase_data(spec, &lifts, &opts).map_err(|e| fail("phases")(&e))?;
    let t1 = drift_torus(&spec.omega, &phase, &opts).map_err(|e| fail("external frequencies")(&e))?;
    let t2 = reduce_resonances(&spec.omega, &phase, &t1, &opts).map_err(|e| fail("resonances")(&e))?;
    Ok(PipelineResult { lifts, phase, drift: t1, resonance: t2 })
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, String> {
    std::fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    Ok(path)
}

fn cmd_reconstruct(run: &Loaded) -> i32 {
    let result = match run_stages(&run.cfg, &run.spec) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAIL;
        }
    };
    let json = report::reconstruction_json(&run.cfg, &run.spec, &result);
    match write_file(&run.out, "report.json", &json) {
        Ok(p) => {
            println!("{}", report::summary(&result));
            println!("wrote {}", p.display());
            EXIT_PASS
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_FAIL
        }
    }
}

/// Trajectory as CSV: `t`, the angles, then the group payload.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = String::new();
    let k = traj.points.first().map_or(0, |p| p.phi.len());
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=k).map(|i| format!("phi_{i}")));
    if let Some(p) = traj.points.first() {
        match p.g.group() {
            crate::group::GroupId::So3 => header.extend(["q_w", "q_x", "q_y", "q_z"].map(String::from)),
            crate::group::GroupId::Torus(d) => header.extend((1..=d).map(|i| format!("g_{i}"))),
        }
    }
    let _ = writeln!(s, "{}", header.join(","));
    for (t, p) in traj.times.iter().zip(&traj.points) {
        let row: Vec<String> = std::iter::once(*t)
            .chain(p.phi.iter().copied())
            .chain(p.g.payload())
            .map(|x| format!("{:.14e}", if x == 0.0 { 0.0 } else { x }))
            .collect();
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

fn cmd_verify(run: &Loaded) -> i32 {
    let result = match run_stages(&run.cfg, &run.spec) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_FAIL;
        }
    };
    let (rep, traj) = run_verification(&run.spec, &result, &run.cfg.verify_options());
    let json = report::verification_json(&run.cfg, &rep);
    let written = write_file(&run.out, "trajectory.csv", &trajectory_csv(&traj))
        .and_then(|_| write_file(&run.out, "verification.json", &json));
    if let Err(e) = written {
        eprintln!("error: {e}");
        return EXIT_FAIL;
    }
    for row in &rep.rows {
        println!(
            "{} {:<48} residual {:.3e} (tol {:.1e})",
            if row.pass { "PASS" } else { "FAIL" },
            row.name,
            row.residual,
            row.tolerance
        );
    }
    if let Some(e) = &rep.fit_error {
        println!("FAIL frequency fit: {e}");
    }
    if rep.passed() {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

/// Parses an integer matrix: one row per line, entries separated by
/// whitespace or commas, `#` comments.
pub fn parse_matrix(text: &str) -> Result<IntMatrix, String> {
    let mut rows: Vec<Vec<BigInt>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<BigInt>().map_err(|_| format!("line {}: not an integer: {t:?}", n + 1)))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(format!("line {}: expected {} entries, got {}", n + 1, first.len(), row.len()));
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(IntMatrix::from_rows(rows, cols))
}

fn cmd_snf(args: &SnfArgs) -> i32 {
    let text = match std::fs::read_to_string(&args.matrix) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.matrix.display());
            return EXIT_USAGE;
        }
    };
    let m = match parse_matrix(&text) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let json = report::snf_json(&m, &snf(&m));
    print!("{json}");
    if let Some(dir) = &args.out {
        if let Err(e) = write_file(dir, "snf.json", &json) {
            eprintln!("error: {e}");
            return EXIT_FAIL;
        }
    }
    EXIT_PASS
}
