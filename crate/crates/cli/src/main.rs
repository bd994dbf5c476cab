//! `aircomp`: sweeps, one-shot solves and oracle audits.
//!
//! Failures print `{"error": {"kind": ..., "message": ...}}` on stderr and
//! exit with status 1 (2 for unusable arguments). An oracle audit that
//! completes with failing instances exits with status 3.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aircomp_core::aircomp::ProxyReport;
use aircomp_core::audit::{run_audit, AuditTolerances, CheckedSolver};
use aircomp_core::baselines::{channel_inversion, equal_allocation};
use aircomp_core::fdm_opt::{comp_optimal_fdm, decision_optimal_fdm, write_trace_csv, FdmOptions};
use aircomp_core::harness::{run_sweep, write_result, Axis, OutputFormat, SweepConfig};
use aircomp_core::tdm_opt::{comp_optimal_tdm_allocation, decision_optimal_tdm_allocation};
use aircomp_core::{Allocation, Multiplexing, SchemeKind, SolverInstance};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "aircomp",
    version,
    about = "AirComp feature-aggregation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an accuracy sweep described by a JSON config.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        axis: Option<AxisArg>,
        /// Comma-separated axis values, replacing those in the config.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
    },
    /// Solve one instance and print the allocation as JSON.
    Solve {
        /// comp-opt, decision-opt, equal or inversion.
        #[arg(long)]
        scheme: String,
        /// Instance JSON: a file path or an inline document.
        #[arg(long)]
        instance: String,
        #[arg(long, value_enum, default_value_t = MuxArg::Fdm)]
        multiplexing: MuxArg,
        /// Solver options JSON (file path or inline).
        #[arg(long)]
        options: Option<String>,
        /// Write the outer-loop convergence trace here as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Compare a solver against its brute-force oracle on random instances.
    Oracle {
        /// comp-tdm, decision-tdm, comp-fdm or decision-fdm.
        #[arg(long)]
        check: String,
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory receiving JSON repro files of disagreeing instances.
        #[arg(long)]
        dump_dir: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    Snr,
    K,
    N,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum MuxArg {
    Tdm,
    Fdm,
}

struct Failure {
    kind: &'static str,
    message: String,
    code: u8,
}

impl From<aircomp_core::Error> for Failure {
    fn from(e: aircomp_core::Error) -> Self {
        Failure {
            kind: e.kind(),
            message: e.to_string(),
            code: 1,
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        aircomp_core::Error::from(e).into()
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure {
        kind: "io",
        message: format!("{}: {e}", path.display()),
        code: 1,
    }
}

fn usage(message: String) -> Failure {
    Failure {
        kind: "usage",
        message,
        code: 2,
    }
}

/// Reads a JSON argument given either inline or as a path.
fn json_arg(arg: &str) -> Result<String, Failure> {
    if arg.trim_start().starts_with('{') {
        return Ok(arg.to_string());
    }
    let path = Path::new(arg);
    fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

/// A closed pipe on standard output (`aircomp ... | head`) is not an error.
fn stdout_failure(e: io::Error) -> Result<(), Failure> {
    if e.kind() == io::ErrorKind::BrokenPipe {
        Ok(())
    } else {
        Err(io_failure(Path::new("<stdout>"), e))
    }
}

fn broken_pipe(e: &(dyn std::error::Error + 'static)) -> bool {
    let mut cur = Some(e);
    while let Some(err) = cur {
        if err
            .downcast_ref::<io::Error>()
            .is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
        {
            return true;
        }
        cur = err.source();
    }
    false
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value)?;
    let mut out = io::stdout().lock();
    writeln!(out, "{text}")
        .and_then(|_| out.flush())
        .or_else(stdout_failure)
}

fn simulate(
    config: &Path,
    axis: Option<AxisArg>,
    values: Option<Vec<f64>>,
    trials: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Option<FormatArg>,
) -> Result<(), Failure> {
    let mut cfg = SweepConfig::load(config)?;
    if let Some(a) = axis {
        cfg.axis = match a {
            AxisArg::Snr => Axis::Snr,
            AxisArg::K => Axis::K,
            AxisArg::N => Axis::N,
        };
    }
    if let Some(v) = values {
        cfg.values = v;
    }
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if let Some(s) = seed {
        cfg.scenario.set_seed(s);
    }
    let format = match format {
        Some(FormatArg::Csv) => OutputFormat::Csv,
        Some(FormatArg::Json) => OutputFormat::Json,
        None => cfg.format,
    };
    let out = out.or_else(|| cfg.output.clone());
    cfg.validate()?;
    let result = run_sweep(&cfg)?;
    match out {
        Some(path) => aircomp_core::harness::emit(&result, format, &path)?,
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            if let Err(e) = write_result(&result, format, &mut lock) {
                return if broken_pipe(&e) {
                    Ok(())
                } else {
                    Err(e.into())
                };
            }
            lock.flush().or_else(stdout_failure)?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct SolveOutput {
    scheme: SchemeKind,
    multiplexing: Multiplexing,
    alloc: Allocation,
    proxies: ProxyReport,
    power_used: Vec<f64>,
    power_feasible: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    objective: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    duality_gap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prices: Option<Vec<f64>>,
}

fn solve(
    scheme: &str,
    instance: &str,
    mux: MuxArg,
    options: Option<String>,
    trace: Option<PathBuf>,
) -> Result<(), Failure> {
    let scheme: SchemeKind = scheme.parse()?;
    let inst: SolverInstance = serde_json::from_str(&json_arg(instance)?)?;
    inst.validate()?;
    let mut opts: FdmOptions = match options {
        Some(o) => serde_json::from_str(&json_arg(&o)?)?,
        None => FdmOptions::default(),
    };
    opts.trace = opts.trace || trace.is_some();
    let multiplexing = match mux {
        MuxArg::Tdm => Multiplexing::Tdm,
        MuxArg::Fdm => Multiplexing::Fdm,
    };
    let moments = inst.moments();
    let (ch, b, nu, var, noise) = (
        &inst.channels,
        &inst.budgets,
        &inst.nu_sq,
        &inst.var_per_dim,
        inst.noise_var,
    );
    let mut objective = None;
    let mut converged = None;
    let mut duality_gap = None;
    let mut prices = None;
    let alloc = match (scheme, multiplexing) {
        (SchemeKind::Equal, m) => equal_allocation(ch, b, nu, var, noise, m)?,
        (SchemeKind::Inversion, m) => channel_inversion(ch, b, nu, var, noise, m)?,
        (kind, Multiplexing::Tdm) => {
            let sol = if kind == SchemeKind::CompOpt {
                comp_optimal_tdm_allocation(&inst)?
            } else {
                decision_optimal_tdm_allocation(&inst)?
            };
            objective = Some(sol.objective);
            sol.alloc
        }
        (kind, Multiplexing::Fdm) => {
            let sol = if kind == SchemeKind::CompOpt {
                comp_optimal_fdm(&inst, &opts)?
            } else {
                decision_optimal_fdm(&inst, &opts)?
            };
            if let Some(path) = &trace {
                write_trace_csv(&sol.trace, path)?;
            }
            objective = Some(sol.objective);
            converged = Some(sol.dual_state.converged);
            duality_gap = Some(sol.duality_gap);
            prices = Some(sol.dual_state.lambda.clone());
            sol.alloc
        }
    };
    let out = SolveOutput {
        scheme,
        multiplexing,
        proxies: ProxyReport::evaluate(&alloc, ch, &moments, noise)?,
        power_used: alloc.power_profile(nu),
        power_feasible: alloc.is_power_feasible(b, nu),
        alloc,
        objective,
        converged,
        duality_gap,
        prices,
    };
    print_json(&out)
}

fn oracle(
    check: &str,
    instances: usize,
    seed: u64,
    dump_dir: Option<PathBuf>,
) -> Result<bool, Failure> {
    let solver: CheckedSolver = check.parse()?;
    if let Some(dir) = &dump_dir {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    let report = run_audit(
        solver,
        instances,
        seed,
        &FdmOptions::default(),
        &AuditTolerances::default(),
        dump_dir.as_deref(),
    )?;
    print_json(&report)?;
    Ok(report.failed == 0)
}

fn run(cli: Cli) -> Result<ExitCode, Failure> {
    match cli.command {
        Command::Simulate {
            config,
            axis,
            values,
            trials,
            seed,
            out,
            format,
        } => simulate(&config, axis, values, trials, seed, out, format).map(|_| ExitCode::SUCCESS),
        Command::Solve {
            scheme,
            instance,
            multiplexing,
            options,
            trace,
        } => solve(&scheme, &instance, multiplexing, options, trace).map(|_| ExitCode::SUCCESS),
        Command::Oracle {
            check,
            instances,
            seed,
            dump_dir,
        } => oracle(&check, instances, seed, dump_dir).map(|ok| {
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => return report(usage(e.to_string().trim().to_string())),
    };
    match run(cli) {
        Ok(code) => code,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    let doc = json!({ "error": { "kind": f.kind, "message": f.message } });
    eprintln!("{doc}");
    ExitCode::from(f.code)
}
