//! Command-line front end.
//!
//! Exit codes: 0 success, 1 an assumption H1–H5 fails, 2 incompatible initial
//! data in strict mode, 3 numerical failure, 4 I/O or config error. Every
//! failure also prints one line `axon-relax: exit=<code> reason=<token> detail=<text>`
//! on standard error.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use crate::formats::{self, num, FormatError};
use crate::ibvp::{
    self, CompatMode, DiagnosticsSeries, Grid, Reference, RunFailure, RunOutput, Scheme, SchemeConfig,
    SolverError,
};
use crate::relaxation::{certify, StabilityCertificate};
use crate::steady::{steady_profile_with, ProfileOptions, ReprChoice, SteadyProfile};
use crate::system_model::{catalog, validate_assumptions, Catalog, InitialData, SystemSpec};

#[derive(Debug, Parser)]
#[command(name = "axon-relax", version, about = "Relaxation analysis and simulation of linear reaction-hyperbolic systems")]
pub struct Cli {
    /// Seed for randomized catalog systems.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the structural assumptions H1–H5.
    Validate(ValidateArgs),
    /// Build and verify the stability certificate.
    Certify(CertifyArgs),
    /// Tabulate the boundary-layer steady state.
    Steady(SteadyArgs),
    /// Run the initial-boundary value problem and write diagnostics.
    Simulate(SimulateArgs),
    /// Report decay times of the perturbation sup norm.
    Decay(DecayArgs),
}

#[derive(Debug, Args)]
pub struct SpecArg {
    /// Config file, or `catalog:<name>[:params]`.
    pub spec: String,
    /// Tolerance for the assumption checks.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub spec: SpecArg,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[command(flatten)]
    pub spec: SpecArg,
    /// Certificate document path.
    #[arg(short, long, default_value = "certificate.toml")]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReprArg {
    Auto,
    Spectral,
    Pade,
}

#[derive(Debug, Args)]
pub struct SteadyArgs {
    #[command(flatten)]
    pub spec: SpecArg,
    /// Inflow value B(0) as comma-separated components (default e_1).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub boundary: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10.0)]
    pub xmax: f64,
    /// Number of intervals; the table has nx + 1 rows.
    #[arg(long, default_value_t = 100)]
    pub nx: usize,
    #[arg(long, value_enum, default_value_t = ReprArg::Auto)]
    pub repr: ReprArg,
    /// Output path; standard output when absent.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    Explicit,
    Imex,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ReferenceArg {
    Discrete,
    Exact,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub spec: SpecArg,
    /// Inflow value as comma-separated components.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub boundary: Option<Vec<f64>>,
    /// `steady`, `bump:A,x0,sigma`, `kernel-scaled:s` or `file:<path>`.
    #[arg(long, default_value = "bump:0.1,2,0.5")]
    pub ic: String,
    #[arg(long, default_value_t = 40.0)]
    pub tmax: f64,
    #[arg(long, default_value_t = 2000)]
    pub nx: usize,
    #[arg(long, default_value_t = 20.0)]
    pub xmax: f64,
    #[arg(long, default_value_t = 0.9)]
    pub cfl: f64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Imex)]
    pub scheme: SchemeArg,
    /// Steps between diagnostic samples.
    #[arg(long, default_value_t = 10)]
    pub stride: usize,
    /// Run despite incompatible initial data.
    #[arg(long)]
    pub permissive: bool,
    #[arg(long, default_value_t = 1e-10)]
    pub compat_tol: f64,
    #[arg(long, value_enum, default_value_t = ReferenceArg::Discrete)]
    pub reference: ReferenceArg,
    /// Run once per listed epsilon, in parallel.
    #[arg(long, value_delimiter = ',')]
    pub sweep_eps: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Directory for `diagnostics.csv` and `final_state.csv`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecayArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Relative thresholds on sup|Φ|.
    #[arg(long = "decay-tol", value_delimiter = ',', default_values_t = vec![1e-1, 1e-2, 1e-3, 1e-6])]
    pub decay_tol: Vec<f64>,
}

/// A failure mapped to its exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub reason: String,
    pub detail: String,
}

impl Failure {
    fn new(code: i32, reason: impl Into<String>, detail: impl ToString) -> Self {
        Self {
            code,
            reason: reason.into(),
            detail: detail.to_string().replace('\n', " "),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "axon-relax: exit={} reason={} detail={}",
            self.code, self.reason, self.detail
        )
    }
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        let reason = match &e {
            FormatError::Io { .. } => "io",
            FormatError::Dimension { .. } => "dimension",
            _ => "config",
        };
        Failure::new(4, reason, e)
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Compatibility { .. } => Failure::new(2, "compatibility", e),
            SolverError::NonFinite { .. } | SolverError::Singular(_) | SolverError::Steady(_) => {
                Failure::new(3, "numerical", e)
            }
            _ => Failure::new(4, "config", e),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .map_err(|e| Failure::new(4, "io", format!("cannot write {}: {e}", path.display())))
}

/// Resolves a spec argument (file path or catalog entry).
pub fn load_spec(arg: &SpecArg, seed: Option<u64>) -> Result<SystemSpec, Failure> {
    let spec = if let Some(rest) = arg.spec.strip_prefix("catalog:") {
        let entry = Catalog::parse(rest, seed).map_err(|e| Failure::new(4, "config", e))?;
        catalog(&entry).map_err(|e| Failure::new(4, "config", e))?
    } else {
        formats::parse_spec_file(Path::new(&arg.spec))?
    };
    Ok(spec)
}

fn require_assumptions(spec: &SystemSpec, tol: f64) -> Result<(), Failure> {
    let report = validate_assumptions(spec, tol);
    if report.passed() {
        return Ok(());
    }
    let failed = report.failed().join(",");
    let detail: Vec<String> = report
        .verdicts()
        .iter()
        .filter_map(|(name, v)| v.witness.as_ref().map(|w| format!("{name}: {w}")))
        .collect();
    Err(Failure::new(1, failed, detail.join("; ")))
}

fn certificate(spec: &SystemSpec) -> Result<StabilityCertificate, Failure> {
    certify(spec).map_err(|e| Failure::new(3, format!("certify:{}", e.stage), e))
}

fn boundary_vector(values: &Option<Vec<f64>>, r: usize) -> Result<Option<DVector<f64>>, Failure> {
    match values {
        None => Ok(None),
        Some(v) if v.len() == r && v.iter().all(|x| x.is_finite()) => Ok(Some(DVector::from_column_slice(v))),
        Some(v) => Err(Failure::new(
            4,
            "dimension",
            format!("boundary has {} entries, system has r = {r}", v.len()),
        )),
    }
}

fn unit_vector(r: usize) -> DVector<f64> {
    let mut e = DVector::zeros(r);
    e[0] = 1.0;
    e
}

fn profile(spec: &SystemSpec, b0: &DVector<f64>, choice: ReprChoice) -> Result<SteadyProfile, Failure> {
    steady_profile_with(
        spec,
        b0,
        ProfileOptions {
            choice,
            ..ProfileOptions::default()
        },
    )
    .map_err(|e| Failure::new(3, "steady", e))
}

/// Parsed initial-condition descriptor.
#[derive(Debug, Clone, PartialEq)]
pub enum IcDescriptor {
    Steady,
    Bump { amplitude: f64, center: f64, width: f64 },
    KernelScaled(f64),
    File(PathBuf),
}

impl IcDescriptor {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let bad = || Failure::new(4, "config", format!("bad initial-condition descriptor `{text}`"));
        let (name, args) = text.split_once(':').unwrap_or((text, ""));
        let numbers = || -> Result<Vec<f64>, Failure> {
            args.split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
                .collect()
        };
        match name {
            "steady" if args.is_empty() => Ok(Self::Steady),
            "bump" => match numbers()?.as_slice() {
                &[amplitude, center, width] if width > 0.0 => Ok(Self::Bump {
                    amplitude,
                    center,
                    width,
                }),
                _ => Err(bad()),
            },
            "kernel-scaled" => match numbers()?.as_slice() {
                &[s] if s.is_finite() => Ok(Self::KernelScaled(s)),
                _ => Err(bad()),
            },
            "file" if !args.is_empty() => Ok(Self::File(PathBuf::from(args))),
            _ => Err(bad()),
        }
    }
}

/// Reads `x,u_1,…,u_r` rows (header optional).
fn read_initial_file(path: &Path, r: usize) -> Result<InitialData, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::new(4, "io", format!("cannot read {}: {e}", path.display())))?;
    let mut xs = Vec::new();
    let mut values = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('x') {
            continue;
        }
        let row: Result<Vec<f64>, _> = line.split(',').map(|s| s.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| Failure::new(4, "config", format!("{}:{}: {e}", path.display(), n + 1)))?;
        if row.len() != r + 1 {
            return Err(Failure::new(
                4,
                "dimension",
                format!("{}:{}: expected {} columns, got {}", path.display(), n + 1, r + 1, row.len()),
            ));
        }
        xs.push(row[0]);
        values.push(DVector::from_column_slice(&row[1..]));
    }
    InitialData::sampled(xs, values).map_err(|e| Failure::new(4, "config", format!("{}: {e}", path.display())))
}

/// Initial data and the steady state it perturbs.
fn initial_setup(
    spec: &SystemSpec,
    args: &RunArgs,
    cert: &StabilityCertificate,
) -> Result<(InitialData, SteadyProfile), Failure> {
    let r = spec.dim();
    let boundary = boundary_vector(&args.boundary, r)?;
    match IcDescriptor::parse(&args.ic)? {
        IcDescriptor::Steady => {
            let b0 = boundary.unwrap_or_else(|| unit_vector(r));
            let prof = profile(spec, &b0, ReprChoice::Auto)?;
            let u0 = ibvp::steady_data(&prof);
            Ok((u0, prof))
        }
        IcDescriptor::Bump {
            amplitude,
            center,
            width,
        } => {
            let b0 = boundary.unwrap_or_else(|| unit_vector(r));
            let prof = profile(spec, &b0, ReprChoice::Auto)?;
            let u0 = ibvp::bump_data(&prof, amplitude, center, width);
            Ok((u0, prof))
        }
        IcDescriptor::KernelScaled(s) => {
            let state = &cert.kernel.xi * s;
            let b0 = boundary.unwrap_or_else(|| state.clone());
            let prof = profile(spec, &b0, ReprChoice::Auto)?;
            Ok((InitialData::constant(state), prof))
        }
        IcDescriptor::File(path) => {
            let u0 = read_initial_file(&path, r)?;
            let b0 = match boundary {
                Some(b) => b,
                None => u0.eval(0.0).map_err(|e| Failure::new(4, "config", e))?,
            };
            let prof = profile(spec, &b0, ReprChoice::Auto)?;
            Ok((u0, prof))
        }
    }
}

fn scheme_config(args: &RunArgs) -> SchemeConfig {
    SchemeConfig {
        cfl: args.cfl,
        scheme: match args.scheme {
            SchemeArg::Explicit => Scheme::Explicit,
            SchemeArg::Imex => Scheme::Imex,
        },
        t_end: args.tmax,
        output_stride: args.stride,
        compat: if args.permissive {
            CompatMode::Permissive
        } else {
            CompatMode::Strict
        },
        compat_tol: args.compat_tol,
        reference: match args.reference {
            ReferenceArg::Discrete => Reference::Discrete,
            ReferenceArg::Exact => Reference::Exact,
        },
    }
}

/// One complete run: certificate, steady state, grid, time stepping.
pub fn execute_run(spec: &SystemSpec, args: &RunArgs) -> Result<(RunOutput, Grid), Failure> {
    let cert = certificate(spec)?;
    let (u0, prof) = initial_setup(spec, args, &cert)?;
    let grid = ibvp::make_grid(args.xmax, args.nx, Some(prof.layer_width()))?;
    let config = scheme_config(args);
    match ibvp::run(spec, &u0, &grid, &config, &cert, &prof) {
        Ok(out) => Ok((out, grid)),
        Err(RunFailure { source, partial }) => {
            let mut failure = Failure::from(source);
            if let Some(series) = partial {
                let _ = write!(failure.detail, " (after {} samples)", series.samples.len());
            }
            Err(failure)
        }
    }
}

fn run_summary(series: &DiagnosticsSeries) -> String {
    let first = series.initial().map_or(0.0, |s| s.sup);
    let last = series.last().map_or(0.0, |s| s.sup);
    let ratio = if first > 0.0 { last / first } else { 0.0 };
    format!(
        "steps={} dt={} initial_sup={} final_sup={} ratio={} energy_violations={} step_energy_violations={} max_energy_budget={} steady_floor={}",
        series.n_steps,
        num(series.dt),
        num(first),
        num(last),
        num(ratio),
        series.energy_violations,
        series.step_energy_violations,
        num(series.max_energy_budget),
        num(series.steady_floor),
    )
}

/// Runs over the requested epsilons (or just the spec's own) on worker threads.
fn sweep(
    spec: &SystemSpec,
    args: &RunArgs,
) -> Result<Vec<(f64, Result<(RunOutput, Grid), Failure>)>, Failure> {
    let epsilons = args.sweep_eps.clone().unwrap_or_else(|| vec![spec.epsilon()]);
    let specs: Vec<SystemSpec> = epsilons
        .iter()
        .map(|&e| spec.with_epsilon(e).map_err(|err| Failure::new(4, "config", err)))
        .collect::<Result<_, _>>()?;
    if specs.len() == 1 {
        return Ok(vec![(epsilons[0], execute_run(&specs[0], args))]);
    }
    Ok(std::thread::scope(|scope| {
        let handles: Vec<_> = specs
            .iter()
            .map(|s| scope.spawn(move || execute_run(s, args)))
            .collect();
        epsilons
            .iter()
            .zip(handles)
            .map(|(&e, h)| {
                let res = h
                    .join()
                    .unwrap_or_else(|_| Err(Failure::new(3, "numerical", "worker panicked")));
                (e, res)
            })
            .collect()
    }))
}

fn worst(failures: impl IntoIterator<Item = Failure>) -> Option<Failure> {
    failures.into_iter().max_by_key(|f| f.code)
}

/// Dispatches a parsed command, writing reports to `out`.
pub fn dispatch(cli: &Cli, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::new(4, "io", e);
    match &cli.command {
        Command::Validate(a) => {
            let spec = load_spec(&a.spec, cli.seed)?;
            let report = validate_assumptions(&spec, a.spec.tol);
            writeln!(out, "{report}").map_err(io)?;
            require_assumptions(&spec, a.spec.tol)
        }
        Command::Certify(a) => {
            let spec = load_spec(&a.spec, cli.seed)?;
            require_assumptions(&spec, a.spec.tol)?;
            let cert = certificate(&spec)?;
            write_file(&a.output, &formats::certificate_document(&cert))?;
            writeln!(
                out,
                "certificate: {} r={} c={} detailed_balance={} max_asymmetry={} output={}",
                if cert.passed() { "pass" } else { "fail" },
                spec.dim(),
                num(cert.comp.c),
                cert.detailed_balance.is_symmetric,
                num(cert.detailed_balance.max_asymmetry),
                a.output.display()
            )
            .map_err(io)?;
            Ok(())
        }
        Command::Steady(a) => {
            let spec = load_spec(&a.spec, cli.seed)?;
            require_assumptions(&spec, a.spec.tol)?;
            if !(a.xmax > 0.0 && a.xmax.is_finite()) || a.nx == 0 {
                return Err(Failure::new(4, "config", "xmax must be positive and nx at least 1"));
            }
            let b0 = boundary_vector(&a.boundary, spec.dim())?.unwrap_or_else(|| unit_vector(spec.dim()));
            let choice = match a.repr {
                ReprArg::Auto => ReprChoice::Auto,
                ReprArg::Spectral => ReprChoice::Spectral,
                ReprArg::Pade => ReprChoice::Pade,
            };
            let prof = profile(&spec, &b0, choice)?;
            let table = formats::profile_table(&prof, a.xmax, a.nx)
                .map_err(|e| Failure::new(3, "steady", e))?;
            match &a.output {
                Some(path) => {
                    write_file(path, &table)?;
                    writeln!(
                        out,
                        "steady: layer_width={} far_field={:?} output={}",
                        num(prof.layer_width()),
                        prof.far_field().iter().map(|&v| num(v)).collect::<Vec<_>>(),
                        path.display()
                    )
                    .map_err(io)?;
                }
                None => out.write_all(table.as_bytes()).map_err(io)?,
            }
            Ok(())
        }
        Command::Simulate(a) => {
            let spec = load_spec(&a.run.spec, cli.seed)?;
            require_assumptions(&spec, a.run.spec.tol)?;
            if !a.out_dir.is_dir() {
                return Err(Failure::new(4, "io", format!("{} is not a directory", a.out_dir.display())));
            }
            let results = sweep(&spec, &a.run)?;
            let many = results.len() > 1;
            let mut failures = Vec::new();
            for (i, (eps, res)) in results.into_iter().enumerate() {
                match res {
                    Ok((output, grid)) => {
                        let suffix = if many { format!("_{i}") } else { String::new() };
                        let diag = a.out_dir.join(format!("diagnostics{suffix}.csv"));
                        let fin = a.out_dir.join(format!("final_state{suffix}.csv"));
                        write_file(&diag, &formats::diagnostics_table(&output.series))?;
                        write_file(&fin, &formats::state_table(&output.state, &grid))?;
                        writeln!(out, "epsilon={} {}", num(eps), run_summary(&output.series)).map_err(io)?;
                    }
                    Err(f) => failures.push(f),
                }
            }
            worst(failures).map_or(Ok(()), Err)
        }
        Command::Decay(a) => {
            let spec = load_spec(&a.run.spec, cli.seed)?;
            require_assumptions(&spec, a.run.spec.tol)?;
            let mut failures = Vec::new();
            for (eps, res) in sweep(&spec, &a.run)? {
                match res {
                    Ok((output, _)) => {
                        let mut line = format!("epsilon={}", num(eps));
                        for &tol in &a.decay_tol {
                            let t = ibvp::decay_time(&output.series, tol)
                                .map_or_else(|| "none".to_string(), num);
                            let _ = write!(line, " decay_time[{}]={t}", num(tol));
                        }
                        writeln!(out, "{line}").map_err(io)?;
                    }
                    Err(f) => failures.push(f),
                }
            }
            worst(failures).map_or(Ok(()), Err)
        }
    }
}

/// Parses `argv` (including the program name), runs, and returns the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let _ = e.print();
            let failure = Failure::new(4, "usage", e.kind());
            eprintln!("{}", failure.line());
            return failure.code;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match dispatch(&cli, &mut lock) {
        Ok(()) => 0,
        Err(f) => {
            let _ = lock.flush();
            eprintln!("{}", f.line());
            f.code
        }
    }
}
