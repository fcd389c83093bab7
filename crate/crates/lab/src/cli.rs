//! `nmv-lab` argument parsing and subcommand dispatch.
//!
//! Exit codes: 0 success, 1 invalid arguments or configuration, 2 numerical
//! or output failure, 3 a `--check` assertion failed.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nmv_core::bounds::compute_paper_bounds;
use nmv_core::model::{audit_assumptions, broken_neutral, builtin, AuditSampler};
use nmv_core::ModelSpec;
use serde::Serialize;

use crate::output::{self, Summary};
use crate::studies::{self, RateSummary};
use crate::{Experiment, ExperimentConfig, LabError, Runner};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "nmv-lab",
    version,
    about = "Large-deviation experiments for neutral McKean-Vlasov SDEs"
)]
pub struct Cli {
    /// Worker threads; 0 uses every available core. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate eps·log P(event) over the configured noise levels.
    Sweep(StudyArgs),
    /// Tails of the pathwise gaps between particle, frozen, discretised and truncated schemes.
    Equivalence(StudyArgs),
    /// Evaluate the closed-form constants, or compare them with simulated moments.
    Bounds(BoundsArgs),
    /// Sample the structural assumptions of a built-in model.
    Audit(AuditArgs),
    /// Minimise the action over controls reaching the configured event.
    Rate(StudyArgs),
    /// Gap between the skeleton and its time-discretised version.
    #[command(name = "mn-convergence")]
    MnConvergence(StudyArgs),
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    /// TOML experiment file.
    #[arg(long)]
    pub config: PathBuf,
    /// Exit with status 3 unless the study's acceptance assertions hold.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long, required_unless_present = "config")]
    pub alpha: Option<f64>,
    #[arg(long = "L", required_unless_present = "config")]
    pub l: Option<f64>,
    #[arg(long = "L1", required_unless_present = "config")]
    pub l1: Option<f64>,
    #[arg(long = "T", required_unless_present = "config")]
    pub horizon: Option<f64>,
    #[arg(long, required_unless_present = "config")]
    pub eps: Option<f64>,
    /// `‖ξ‖_∞`
    #[arg(long, required_unless_present = "config")]
    pub xi: Option<f64>,
    /// Run the particle system of this experiment and compare its moments with the bounds.
    #[arg(long, conflicts_with_all = ["alpha", "l", "l1", "horizon", "eps", "xi"])]
    pub config: Option<PathBuf>,
    #[arg(long, requires = "config")]
    pub check: bool,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    /// SCHILDER, TEST-1, TEST-1-BOUNDED or the BROKEN-NEUTRAL fixture.
    #[arg(long)]
    pub model: String,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub check: bool,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(&cli) {
        Ok(failures) if failures.is_empty() => EXIT_OK,
        Ok(failures) => {
            for f in &failures {
                eprintln!("check failed: {f}");
            }
            EXIT_CHECK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load(path: &Path) -> Result<Experiment, LabError> {
    ExperimentConfig::load(path)?.resolve()
}

struct Session<'a> {
    command: &'a str,
    exp: Experiment,
    runner: Runner,
    start: Instant,
}

impl<'a> Session<'a> {
    fn open(command: &'a str, config: &Path, threads: usize) -> Result<Self, LabError> {
        let start = Instant::now();
        let exp = load(config)?;
        Ok(Self {
            command,
            exp,
            runner: Runner::new(threads)?,
            start,
        })
    }

    fn finish<R: Serialize>(
        &self,
        results: R,
        check: bool,
        failures: Vec<String>,
    ) -> Result<Vec<String>, LabError> {
        let failures = if check { failures } else { Vec::new() };
        let summary = Summary {
            command: self.command,
            config: &self.exp.config,
            git_describe: output::GIT_DESCRIBE,
            wall_clock_seconds: self.start.elapsed().as_secs_f64(),
            threads: self.runner.threads(),
            check_failures: &failures,
            results,
        };
        let path = output::write_summary(&self.exp.config.output_dir(), &summary)?;
        println!("summary: {}", path.display());
        Ok(failures)
    }
}

fn dispatch(cli: &Cli) -> Result<Vec<String>, LabError> {
    match &cli.command {
        Command::Sweep(a) => {
            let s = Session::open("sweep", &a.config, cli.threads)?;
            let report = studies::run_eps_sweep(&s.exp, &s.runner)?;
            let csv = output::write_sweep_csv(&s.exp.config.output_dir(), &report.rows)?;
            println!("table: {}", csv.display());
            println!(
                "rate: {} (converged: {})",
                report.rate.value, report.rate.converged
            );
            let failures = studies::sweep_failures(&report);
            s.finish(&report, a.check, failures)
        }
        Command::Equivalence(a) => {
            let s = Session::open("equivalence", &a.config, cli.threads)?;
            let rows = studies::run_equivalence_study(&s.exp, &s.runner)?;
            let csv = output::write_equivalence_csv(&s.exp.config.output_dir(), &rows)?;
            println!("table: {}", csv.display());
            let failures = studies::equivalence_failures(&rows);
            s.finish(&rows, a.check, failures)
        }
        Command::MnConvergence(a) => {
            let s = Session::open("mn-convergence", &a.config, cli.threads)?;
            let rows = studies::run_mn_convergence(&s.exp, &s.runner)?;
            let csv = output::write_mn_csv(&s.exp.config.output_dir(), &rows)?;
            println!("table: {}", csv.display());
            let failures = studies::mn_failures(&rows);
            s.finish(&rows, a.check, failures)
        }
        Command::Rate(a) => {
            let s = Session::open("rate", &a.config, cli.threads)?;
            let est = studies::run_rate(&s.exp, &s.runner)?;
            println!(
                "rate: {} (converged: {}, residual {})",
                est.value, est.converged, est.residual
            );
            let failures = if est.converged {
                Vec::new()
            } else {
                vec!["rate minimisation did not converge".into()]
            };
            s.finish(RateSummary::from(&est), a.check, failures)
        }
        Command::Bounds(a) => bounds(a, cli.threads),
        Command::Audit(a) => audit(a),
    }
}

fn bounds(a: &BoundsArgs, threads: usize) -> Result<Vec<String>, LabError> {
    if let Some(config) = &a.config {
        let s = Session::open("bounds", config, threads)?;
        let rows = studies::run_moment_study(&s.exp, &s.runner)?;
        let csv = output::write_moments_csv(&s.exp.config.output_dir(), &rows)?;
        println!("table: {}", csv.display());
        let failures = rows
            .iter()
            .filter(|r| !r.within_bounds())
            .map(|r| {
                format!(
                    "eps {}: simulated moments exceed the bounds: {r:?}",
                    r.epsilon
                )
            })
            .collect();
        return s.finish(&rows, a.check, failures);
    }
    let need = |v: Option<f64>| v.ok_or_else(|| LabError::Config("missing bound parameter".into()));
    let b = compute_paper_bounds(
        need(a.alpha)?,
        need(a.l)?,
        need(a.l1)?,
        need(a.horizon)?,
        need(a.eps)?,
        need(a.xi)?,
    )
    .map_err(|e| LabError::Config(e.to_string()))?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "L2 = {}", b.l2)?;
    writeln!(out, "L3 = {}", b.l3)?;
    writeln!(out, "X0_bound = {}", b.x0_bound)?;
    writeln!(out, "L4 = {}", b.l4)?;
    Ok(Vec::new())
}

/// Built-in models plus the fixture that violates the neutral contraction.
pub fn audit_model(name: &str) -> Result<ModelSpec, LabError> {
    if name == "BROKEN-NEUTRAL" {
        Ok(broken_neutral())
    } else {
        Ok(builtin(name)?)
    }
}

fn audit(a: &AuditArgs) -> Result<Vec<String>, LabError> {
    if a.samples == 0 {
        return Err(LabError::Config("samples must be positive".into()));
    }
    let spec = audit_model(&a.model)?;
    let sampler = AuditSampler {
        seed: a.seed,
        ..AuditSampler::default()
    };
    let report = audit_assumptions(&spec, &sampler, a.samples);
    let mut failures = Vec::new();
    let mut out = std::io::stdout().lock();
    for c in &report.conditions {
        let verdict = if c.passed { "ok" } else { "VIOLATED" };
        writeln!(
            out,
            "{:<28} {verdict:<8} worst margin {:.6e}, {} failures",
            c.condition.label(),
            c.worst_margin,
            c.failures
        )?;
        if let Some(w) = &c.witness {
            writeln!(
                out,
                "  witness: lhs {} > rhs {}, xi {:?}, eta {:?}",
                w.lhs, w.rhs, w.xi, w.eta
            )?;
        }
        if !c.passed && a.check {
            failures.push(format!("{}: {}", spec.name(), c.condition.label()));
        }
    }
    Ok(failures)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds_flags_parse() {
        let cli = Cli::try_parse_from([
            "nmv-lab", "bounds", "--alpha", "0", "--L", "1", "--L1", "1", "--T", "1", "--eps", "0",
            "--xi", "1",
        ])
        .unwrap();
        match cli.command {
            Command::Bounds(b) => {
                assert_eq!((b.l, b.l1, b.horizon), (Some(1.0), Some(1.0), Some(1.0)))
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["nmv-lab", "bounds", "--alpha", "0"]).is_err());
    }

    #[test]
    fn threads_is_global() {
        let cli = Cli::try_parse_from(["nmv-lab", "sweep", "--config", "x.toml", "--threads", "3"])
            .unwrap();
        assert_eq!(cli.threads, 3);
    }

    #[test]
    fn exit_codes_for_bad_input() {
        assert_eq!(run(["nmv-lab", "frobnicate"]), EXIT_CONFIG);
        assert_eq!(
            run(["nmv-lab", "sweep", "--config", "/nonexistent/cfg.toml"]),
            EXIT_CONFIG
        );
        assert_eq!(run(["nmv-lab", "audit", "--model", "NOPE"]), EXIT_CONFIG);
        let alpha_one = [
            "nmv-lab", "bounds", "--alpha", "1", "--L", "1", "--L1", "1", "--T", "1", "--eps", "0",
            "--xi", "1",
        ];
        assert_eq!(run(alpha_one), EXIT_CONFIG);
    }
}
