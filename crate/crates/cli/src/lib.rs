//! Command-line front end for `fts-core`.
//!
//! Every command reads a strict JSON run config, writes machine-readable
//! results to stdout (JSON) and, where there are tables, CSV files to an
//! output directory. Diagnostics and the human verdict line go to stderr.
//!
//! Exit codes: 0 certified / all checks passed, 1 not certified or a check
//! failed, 2 vacuous bound, 3 bad input, 4 runtime or I/O failure.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use fts_core::certificate::{self, Certificate, Status, SweepRow};
use fts_core::config::{RunConfig, StepConfig};
use fts_core::fixedpoint::{self, VerifyOptions};
use fts_core::simulator::{self, EnvelopeOptions, EnvelopeReport, Trajectory};
use fts_core::system::{EtaChoice, FtsQuery, SystemSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CERTIFIED: i32 = 1;
pub const EXIT_VACUOUS: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

const DEFAULT_OUT: &str = "fts-out";

#[derive(Debug, Parser)]
#[command(name = "fts", version, about = "Robust finite-time stability certificates for fractional delay systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the certificate and print it as JSON.
    Check(CheckArgs),
    /// Integrate the system and a sampled disturbance envelope.
    Simulate(SimulateArgs),
    /// Tabulate C and D over a log-spaced range of eta.
    Sweep(SweepArgs),
    /// Run the Picard construction and check the a-priori bound.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub config: PathBuf,
    /// Step size, or "auto" for (T - t0)/2048.
    #[arg(long)]
    pub step: Option<String>,
    /// Number of random envelope runs.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for trajectory.csv and summary.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub eta_min: Option<f64>,
    #[arg(long)]
    pub eta_max: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    /// Output directory for sweep.csv and best.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub config: PathBuf,
    /// Step size, or "auto" for (T - t0)/2048.
    #[arg(long)]
    pub step: Option<String>,
    /// Also write the report to `<out>/verify.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl From<fts_core::Error> for Failure {
    fn from(e: fts_core::Error) -> Self {
        use fts_core::Error as E;
        match e {
            E::Domain(_) | E::InvalidSpec(_) | E::InvalidQuery(_) | E::VacuousRange { .. } => Failure::input(e.to_string()),
            _ => Failure::runtime(e.to_string()),
        }
    }
}

type CmdResult = Result<i32, Failure>;

/// Run a parsed command; stdout receives the JSON result, stderr the
/// verdict line and diagnostics. Returns the process exit code.
pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match &cli.command {
        Command::Check(a) => cmd_check(a, stdout, stderr),
        Command::Simulate(a) => cmd_simulate(a, stdout, stderr),
        Command::Sweep(a) => cmd_sweep(a, stdout, stderr),
        Command::Verify(a) => cmd_verify(a, stdout, stderr),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {}", f.message);
            f.code
        }
    }
}

fn load(path: &Path) -> Result<(RunConfig, SystemSpec, FtsQuery), Failure> {
    let cfg = RunConfig::from_path(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let (spec, query) = cfg.build().map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    Ok((cfg, spec, query))
}

fn resolve_step(flag: Option<&str>, cfg: &RunConfig, spec: &SystemSpec) -> Result<f64, Failure> {
    let step = match flag {
        None => cfg.solver.step.clone(),
        Some(s) => match s.parse::<f64>() {
            Ok(v) => StepConfig::Value(v),
            Err(_) => StepConfig::Named(s.to_string()),
        },
    };
    step.resolve(spec).map_err(|e| Failure::input(format!("--step: {e}")))
}

fn out_dir(flag: Option<&PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.cloned()
        .or_else(|| cfg.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Failure::runtime(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, contents).map_err(|e| Failure::runtime(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialises");
    s.push('\n');
    s
}

fn emit(stdout: &mut dyn Write, text: &str) -> Result<(), Failure> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| Failure::runtime(format!("cannot write to stdout: {e}")))
}

/// Fixed-width scientific notation with 17 significant digits.
pub fn format_number(v: f64) -> String {
    format!("{v:.16e}")
}

/// The human-readable verdict. Never claims instability.
pub fn verdict_text(status: Status, eps2: f64) -> String {
    match status {
        Status::Certified => format!("certified: robustly finite-time stable (bound <= eps2 = {eps2})"),
        Status::NotCertified => format!(
            "not certified: the sufficient condition does not hold for eps2 = {eps2}; this is not a proof of instability"
        ),
        Status::VacuousOverflow => {
            "vacuous: the Mittag-Leffler factor overflows, so the bound carries no information (not certified)".into()
        }
    }
}

fn certificate_for(spec: &SystemSpec, query: &FtsQuery) -> Result<Certificate, Failure> {
    Ok(match query.eta {
        EtaChoice::Fixed(_) => certificate::compute_certificate(spec, query)?,
        EtaChoice::Search { .. } => certificate::optimize_eta(spec, query)?.best,
    })
}

pub fn cmd_check(args: &CheckArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let (_, spec, query) = load(&args.config)?;
    let cert = certificate_for(&spec, &query)?;
    emit(stdout, &to_json(&cert))?;
    let _ = writeln!(stderr, "{}", verdict_text(cert.status, query.eps2));
    Ok(cert.status.exit_code())
}

/// `t,x1,...,xn,norm`, one row per stored grid time.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.states.first().map_or(0, |x| x.len());
    let mut out = String::from("t");
    for i in 1..=n {
        let _ = write!(out, ",x{i}");
    }
    out.push_str(",norm\n");
    for (t, x) in traj.times.iter().zip(&traj.states) {
        out.push_str(&format_number(*t));
        for v in x.iter() {
            out.push(',');
            out.push_str(&format_number(*v));
        }
        out.push(',');
        out.push_str(&format_number(x.norm()));
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
struct SimulationSummary {
    sup_norm: f64,
    blow_up: bool,
    blow_up_time: Option<f64>,
    step: f64,
    steps: usize,
    corrector_iters: usize,
    samples: usize,
    seed: u64,
    eps2: f64,
    nominal_within_eps2: bool,
    envelope: EnvelopeReport,
    all_within_eps2: bool,
}

pub fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let (cfg, spec, query) = load(&args.config)?;
    let step = resolve_step(args.step.as_deref(), &cfg, &spec)?;
    let samples = args.samples.unwrap_or(cfg.solver.samples);
    if samples == 0 {
        return Err(Failure::input("--samples must be >= 1"));
    }
    let seed = args.seed.unwrap_or(cfg.solver.seed);
    let out = out_dir(args.out.as_ref(), &cfg);
    let iters = cfg.solver.corrector_iters;

    let traj = simulator::integrate(&spec, step, iters)?;
    let options = EnvelopeOptions {
        step,
        corrector_iters: iters,
        ..EnvelopeOptions::for_spec(&spec)
    };
    let envelope = simulator::disturbance_envelope_run(&spec, &query, samples, seed, &options)?;

    let nominal_within_eps2 = traj.blow_up.is_none() && traj.sup_norm <= query.eps2;
    let all_within_eps2 = nominal_within_eps2 && envelope.all_within_eps2;
    let summary = SimulationSummary {
        sup_norm: traj.sup_norm,
        blow_up: traj.blow_up.is_some(),
        blow_up_time: traj.blow_up,
        step: traj.step,
        steps: traj.main_states().len() - 1,
        corrector_iters: iters,
        samples,
        seed,
        eps2: query.eps2,
        nominal_within_eps2,
        envelope,
        all_within_eps2,
    };
    let json = to_json(&summary);
    write_file(&out.join("trajectory.csv"), &trajectory_csv(&traj))?;
    write_file(&out.join("summary.json"), &json)?;
    emit(stdout, &json)?;
    if all_within_eps2 {
        let _ = writeln!(stderr, "all runs stay within eps2 = {}", query.eps2);
        Ok(EXIT_OK)
    } else {
        let _ = writeln!(
            stderr,
            "some runs leave the eps2 = {} ball (max sup norm {})",
            query.eps2, summary.envelope.max_sup_norm.max(summary.sup_norm)
        );
        Ok(EXIT_NOT_CERTIFIED)
    }
}

/// `eta,C,D,verdict_D`
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("eta,C,D,verdict_D\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            format_number(r.eta),
            format_number(r.c),
            format_number(r.d),
            r.verdict_d
        );
    }
    out
}

#[derive(Debug, Serialize)]
struct SweepSummary {
    /// Grid row with the smallest `D`.
    row: Option<SweepRow>,
    /// Certificate at the refined minimiser.
    refined: Certificate,
}

pub fn cmd_sweep(args: &SweepArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let (cfg, spec, query) = load(&args.config)?;
    let from_config = match query.eta {
        EtaChoice::Search { lo, hi, points } => Some((lo, hi, points)),
        EtaChoice::Fixed(_) => None,
    };
    let lo = args.eta_min.or(from_config.map(|c| c.0));
    let hi = args.eta_max.or(from_config.map(|c| c.1));
    let points = args.points.or(from_config.map(|c| c.2));
    let (Some(lo), Some(hi), Some(points)) = (lo, hi, points) else {
        return Err(Failure::input(
            "sweep needs --eta-min, --eta-max and --points (or an eta search in the config)",
        ));
    };
    let search = certificate::sweep_eta(&spec, &query, lo, hi, points)?;
    let row = search
        .rows
        .iter()
        .filter(|r| r.d.is_finite())
        .fold(None::<SweepRow>, |best, r| match best {
            Some(b) if b.d <= r.d => Some(b),
            _ => Some(*r),
        });
    let summary = SweepSummary {
        row,
        refined: search.best,
    };
    let out = out_dir(args.out.as_ref(), &cfg);
    let json = to_json(&summary);
    write_file(&out.join("sweep.csv"), &sweep_csv(&search.rows))?;
    write_file(&out.join("best.json"), &json)?;
    emit(stdout, &json)?;
    let status = summary.refined.status;
    let _ = writeln!(stderr, "best eta = {}: {}", summary.refined.eta, verdict_text(status, query.eps2));
    Ok(status.exit_code())
}

pub fn cmd_verify(args: &VerifyArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let (cfg, spec, query) = load(&args.config)?;
    let query = match query.eta {
        EtaChoice::Fixed(_) => query,
        EtaChoice::Search { .. } => {
            let eta = certificate::optimize_eta(&spec, &query)?.best.eta;
            query.with_eta(EtaChoice::Fixed(eta))
        }
    };
    let options = VerifyOptions {
        step: resolve_step(args.step.as_deref(), &cfg, &spec)?,
        corrector_iters: cfg.solver.corrector_iters,
        ..VerifyOptions::for_spec(&spec)
    };
    let report = fixedpoint::verify_a_priori_bound(&spec, &query, &options)?;
    let json = to_json(&report);
    if let Some(out) = &args.out {
        write_file(&out.join("verify.json"), &json)?;
    }
    emit(stdout, &json)?;
    if !report.picard.converged {
        let last = report.picard.last_ratio().map_or("none".to_string(), |r| r.to_string());
        let _ = writeln!(stderr, "Picard iteration did not converge; last ratio {last}");
        return Ok(EXIT_NOT_CERTIFIED);
    }
    if report.all_passed() {
        let _ = writeln!(stderr, "all fixed-point checks passed");
        Ok(EXIT_OK)
    } else {
        let _ = writeln!(stderr, "some fixed-point checks failed; see report");
        Ok(EXIT_NOT_CERTIFIED)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_carry_seventeen_significant_digits() {
        let s = format_number(0.1);
        assert_eq!(s, "1.0000000000000001e-1");
        assert_eq!(s.parse::<f64>().unwrap(), 0.1);
        assert_eq!(format_number(0.0), "0.0000000000000000e0");
    }

    #[test]
    fn verdict_text_never_says_unstable() {
        for status in [Status::Certified, Status::NotCertified, Status::VacuousOverflow] {
            let text = verdict_text(status, 1.0);
            assert!(!text.contains("unstable"), "{text}");
        }
        assert!(verdict_text(Status::NotCertified, 1.0).starts_with("not certified"));
    }

    #[test]
    fn cli_parses_flags() {
        let cli = Cli::try_parse_from(["fts", "sweep", "a.json", "--eta-min", "0.1", "--eta-max", "10", "--points", "64"]).unwrap();
        match cli.command {
            Command::Sweep(a) => {
                assert_eq!(a.eta_min, Some(0.1));
                assert_eq!(a.points, Some(64));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
