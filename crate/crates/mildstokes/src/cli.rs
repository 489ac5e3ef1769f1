//! Subcommands of the `mildstokes` binary.
//!
//! Exit codes: 0 ok, 1 parse or IO error, 2 not mild, 3 unsupported formal
//! structure, 4 certification or numerical failure.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mildstokes_core::diffmod::{formal_datum, formal_solution, DiffError, DiffSystem, FormalDatum};
use mildstokes_core::exponents::{stokes_directions, Arc};
use mildstokes_core::sectorial::{ray_points, residual, solution_samples, RaySamples, SectorialError, SectorialParams};
use mildstokes_core::stokes::{
    compute_cocycle, default_covering, rh_assemble, CocycleParams, Covering, StokesCocycle, StokesError,
};
use mildstokes_core::Complex64;

use crate::formats::{self, FormatError};
use crate::parser::{parse_constant, parse_system, ParseError, SystemFile};
use crate::printer::format_complex;
use crate::verify::{self, arc_for, wrap_angle};

pub const OUT_DIR_ENV: &str = "MILDSTOKES_OUT";

#[derive(Debug, Parser)]
#[command(name = "mildstokes", version, about = "Stokes data of mild difference systems y(s) = A(s) y(s+1)")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Checks that A is holomorphic at t = 0 with A(0) invertible.
    CheckMild { path: PathBuf },
    /// Prints the formal datum: one `(exponent, G=[...])` line per block.
    Formal { path: PathBuf },
    /// CSV of Stokes directions, special points and covering arcs.
    Directions { path: PathBuf },
    /// CSV of flat-section samples on a ray, with a residual summary.
    Solve(SolveArgs),
    /// Stokes cocycle, certification report and module datum file.
    Cocycle(CocycleArgs),
    /// Runs a verification suite against closed-form solutions.
    Verify(VerifyArgs),
    /// Sample files on several rays and a gnuplot script.
    PlotData(PlotArgs),
}

fn real_arg(s: &str) -> Result<f64, String> {
    let z = parse_constant(s).map_err(|e| e.to_string())?;
    if z.im != 0.0 {
        return Err(format!("`{s}` is not real"));
    }
    Ok(z.re)
}

fn complex_arg(s: &str) -> Result<Complex64, String> {
    parse_constant(s).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
pub struct RayArgs {
    /// Smallest |s| on the ray.
    #[arg(long, value_parser = real_arg)]
    pub smin: Option<f64>,
    /// Largest |s| on the ray.
    #[arg(long, value_parser = real_arg)]
    pub smax: Option<f64>,
    /// Number of samples.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub path: PathBuf,
    /// Direction θ on the circle; samples lie on arg s = −θ. Accepts `pi/4` etc.
    #[arg(long, value_parser = real_arg, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    #[command(flatten)]
    pub ray: RayArgs,
    /// CSV output file (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CocycleArgs {
    pub path: PathBuf,
    /// Output directory for module.toml and the overlap sample files.
    #[arg(long, env = OUT_DIR_ENV, default_value = "mildstokes-out")]
    pub out: PathBuf,
    /// Samples per overlap ray.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Comma-separated cut directions θ replacing the default covering.
    #[arg(long, allow_hyphen_values = true)]
    pub cuts: Option<String>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Example {
    Gamma,
    Egamma,
    Lambda,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub example: Example,
    /// α for the gamma suite.
    #[arg(long, value_parser = complex_arg, default_value = "0.5", allow_hyphen_values = true)]
    pub alpha: Complex64,
    /// Direction θ for the lambda suite.
    #[arg(long, value_parser = real_arg, default_value = "0.3", allow_hyphen_values = true)]
    pub direction: f64,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    pub path: PathBuf,
    /// Ray directions θ (repeatable); defaults to the middle of each overlap.
    #[arg(long, value_parser = real_arg, allow_hyphen_values = true)]
    pub theta: Vec<f64>,
    #[command(flatten)]
    pub ray: RayArgs,
    #[arg(long, env = OUT_DIR_ENV, default_value = "mildstokes-out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok = 0,
    Parse = 1,
    NotMild = 2,
    Unsupported = 3,
    Failed = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub status: Status,
    pub message: String,
}

impl CliError {
    fn new(status: Status, message: impl Into<String>) -> Self {
        CliError { status, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(Status::Parse, e.to_string())
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        CliError::new(Status::Parse, e.to_string())
    }
}

impl From<DiffError> for CliError {
    fn from(e: DiffError) -> Self {
        let status = match e {
            DiffError::NotMild(_) => Status::NotMild,
            DiffError::UnsupportedFormalStructure(_) | DiffError::ClusteredEigenvalues(_) => Status::Unsupported,
            _ => Status::Failed,
        };
        CliError::new(status, e.to_string())
    }
}

impl From<SectorialError> for CliError {
    fn from(e: SectorialError) -> Self {
        match e {
            SectorialError::Diff(d) => d.into(),
            other => CliError::new(Status::Failed, other.to_string()),
        }
    }
}

impl From<StokesError> for CliError {
    fn from(e: StokesError) -> Self {
        match e {
            StokesError::Diff(d) => d.into(),
            StokesError::Sectorial(s) => s.into(),
            StokesError::Unsupported(m) => CliError::new(Status::Unsupported, format!("unsupported: {m}")),
            other => CliError::new(Status::Failed, other.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn load(path: &Path) -> CliResult<SystemFile> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::new(Status::Parse, format!("{}: {e}", path.display())))?;
    parse_system(&text).map_err(|e: ParseError| CliError::new(Status::Parse, format!("{}:{e}", path.display())))
}

fn mild_system(file: &SystemFile) -> CliResult<DiffSystem> {
    let sys = file.system()?;
    let report = sys.mildness();
    if !report.mild {
        return Err(CliError::new(Status::NotMild, format!("not mild: {}", report.reason.unwrap_or_default())));
    }
    Ok(sys)
}

/// Where a configuration value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Flag,
    File,
    Default,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Flag => "flag",
            Source::File => "file",
            Source::Default => "default",
        })
    }
}

/// Resolved run configuration: flags, then `param` lines of the file, then defaults.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub values: Vec<(&'static str, f64, Source)>,
}

impl RunConfig {
    fn resolve(file: &SystemFile, entries: &[(&'static str, Option<f64>, f64)]) -> RunConfig {
        let values = entries
            .iter()
            .map(|&(key, flag, default)| match (flag, file.param(key)) {
                (Some(v), _) => (key, v, Source::Flag),
                (None, Some(v)) => (key, v, Source::File),
                _ => (key, default, Source::Default),
            })
            .collect();
        RunConfig { values }
    }

    pub fn get(&self, key: &str) -> f64 {
        self.values.iter().find(|v| v.0 == key).map(|v| v.1).expect("known key")
    }

    pub fn header(&self) -> String {
        let parts: Vec<String> = self.values.iter().map(|(k, v, s)| format!("{k}={v} ({s})")).collect();
        format!("# config: {}", parts.join(" "))
    }
}

fn ray_config(file: &SystemFile, theta: Option<f64>, ray: &RayArgs, trunc: i64) -> RunConfig {
    RunConfig::resolve(
        file,
        &[
            ("theta", theta, 0.0),
            ("smin", ray.smin, 10.0),
            ("smax", ray.smax, 40.0),
            ("n", ray.n.map(|n| n as f64), 32.0),
            ("trunc", None, trunc as f64),
        ],
    )
}

pub fn cmd_check_mild(path: &Path, out: &mut dyn Write) -> CliResult<()> {
    let file = load(path)?;
    let sys = file.system()?;
    let r = sys.mildness();
    if r.mild {
        writeln!(out, "mild")?;
        writeln!(out, "det A(0) = {}", format_complex(r.det_a0))?;
        Ok(())
    } else {
        let reason = r.reason.unwrap_or_default();
        writeln!(out, "not mild: {reason}")?;
        Err(CliError::new(Status::NotMild, format!("not mild: {reason}")))
    }
}

fn plain_complex(z: Complex64) -> String {
    let z = z + Complex64::new(0.0, 0.0);
    if z.im == 0.0 {
        format!("{:?}", z.re)
    } else {
        format_complex(z)
    }
}

/// `(exponent, G=[...])` per block of the datum.
pub fn formal_lines(fd: &FormalDatum) -> Vec<String> {
    fd.pieces
        .iter()
        .map(|p| {
            let rows: Vec<String> = (0..p.rank())
                .map(|i| (0..p.rank()).map(|j| plain_complex(p.g[(i, j)])).collect::<Vec<_>>().join(", "))
                .collect();
            let g = if p.rank() == 1 {
                format!("[{}]", rows[0])
            } else {
                format!("[{}]", rows.iter().map(|r| format!("[{r}]")).collect::<Vec<_>>().join(", "))
            };
            format!("({}, G={g})", p.exponent)
        })
        .collect()
}

pub fn cmd_formal(path: &Path, out: &mut dyn Write) -> CliResult<FormalDatum> {
    let file = load(path)?;
    let sys = mild_system(&file)?;
    let fd = formal_datum(&sys)?;
    for line in formal_lines(&fd) {
        writeln!(out, "{line}")?;
    }
    Ok(fd)
}

/// One row of the directions table.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionRow {
    pub kind: &'static str,
    pub label: String,
    pub theta: f64,
    pub theta_end: f64,
    pub sigma: f64,
}

pub fn direction_rows(fd: &FormalDatum) -> CliResult<Vec<DirectionRow>> {
    let pi = std::f64::consts::PI;
    let mut rows = vec![
        DirectionRow { kind: "special", label: "e^0".into(), theta: 0.0, theta_end: 0.0, sigma: 0.0 },
        DirectionRow { kind: "special", label: "e^(i*pi)".into(), theta: pi, theta_end: pi, sigma: pi },
    ];
    for (i, p) in fd.pieces.iter().enumerate() {
        for (j, q) in fd.pieces.iter().enumerate().skip(i + 1) {
            if p.exponent.same_orbit(&q.exponent) {
                continue;
            }
            for sigma in stokes_directions(&p.exponent, &q.exponent).map_err(StokesError::from)? {
                let theta = wrap_angle(-sigma);
                rows.push(DirectionRow { kind: "stokes", label: format!("{i}-{j}"), theta, theta_end: theta, sigma });
            }
        }
    }
    let cov = default_covering(fd)?;
    for (k, a) in cov.arcs.iter().enumerate() {
        rows.push(DirectionRow { kind: "arc", label: format!("U{k}"), theta: a.start, theta_end: a.end, sigma: a.sigma_mid() });
    }
    Ok(rows)
}

pub fn cmd_directions(path: &Path, out: &mut dyn Write) -> CliResult<Vec<DirectionRow>> {
    let file = load(path)?;
    let sys = mild_system(&file)?;
    let fd = formal_datum(&sys)?;
    let rows = direction_rows(&fd)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "label", "theta", "theta_end", "sigma"]).map_err(FormatError::from)?;
    for r in &rows {
        w.write_record([r.kind.to_string(), r.label.clone(), r.theta.to_string(), r.theta_end.to_string(), r.sigma.to_string()])
            .map_err(FormatError::from)?;
    }
    w.flush()?;
    Ok(rows)
}

/// Flat sections on one ray.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub config: RunConfig,
    pub arc: Arc,
    pub samples: RaySamples,
    pub residual: f64,
    pub warnings: Vec<String>,
}

fn stokes_warnings(fd: &FormalDatum, theta: f64) -> Vec<String> {
    let mut out = Vec::new();
    for (i, p) in fd.pieces.iter().enumerate() {
        for (j, q) in fd.pieces.iter().enumerate().skip(i + 1) {
            if let Ok(ds) = stokes_directions(&p.exponent, &q.exponent) {
                if ds.iter().any(|s| (wrap_angle(-s) - wrap_angle(theta)).abs() < 1e-9) {
                    out.push(format!("theta is a Stokes direction of blocks {i} and {j}"));
                }
            }
        }
    }
    out
}

pub fn solve(file: &SystemFile, theta: Option<f64>, ray: &RayArgs) -> CliResult<SolveReport> {
    let sys = mild_system(file)?;
    let trunc = sys.matrix().trunc();
    let config = ray_config(file, theta, ray, trunc);
    let theta = wrap_angle(config.get("theta"));
    let (smin, smax, n) = (config.get("smin"), config.get("smax"), config.get("n") as usize);
    if !(smin > 0.0 && smax > smin && n >= 2) {
        return Err(CliError::new(Status::Parse, format!("bad ray: smin={smin} smax={smax} n={n}")));
    }
    let fs = formal_solution(&sys, trunc)?;
    let cov = default_covering(&fs.datum)?;
    let arc = arc_for(&cov, theta).ok_or_else(|| CliError::new(Status::Failed, "no arc contains theta"))?;
    let mut warnings = stokes_warnings(&fs.datum, theta);
    if !warnings.is_empty() {
        warnings.push(format!("evaluating on the arc {arc} around it"));
    }
    let pts = ray_points(-theta, smin, smax, n);
    let samples = solution_samples(&sys, &fs, &arc, &pts, &SectorialParams::default())?;
    let res = residual(&sys, &samples)?;
    Ok(SolveReport { config, arc, samples, residual: res, warnings })
}

pub fn cmd_solve(args: &SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<SolveReport> {
    let file = load(&args.path)?;
    let report = solve(&file, args.theta, &args.ray)?;
    for w in &report.warnings {
        writeln!(err, "warning: {w}")?;
    }
    let summary = format!(
        "{}\n# arc {}\n# max relative residual {:.3e}",
        report.config.header(),
        report.arc,
        report.residual
    );
    match &args.out {
        Some(p) => {
            formats::write_samples(std::io::BufWriter::new(std::fs::File::create(p)?), &report.samples)?;
            writeln!(out, "{summary}")?;
        }
        None => {
            writeln!(err, "{summary}")?;
            formats::write_samples(&mut *out, &report.samples)?;
        }
    }
    Ok(report)
}

fn parse_cuts(text: &str) -> CliResult<Vec<f64>> {
    text.split(',').map(|c| real_arg(c.trim()).map_err(|e| CliError::new(Status::Parse, e))).collect()
}

/// The cocycle of a file: identity for a bare formal datum, numeric otherwise.
pub fn cocycle(file: &SystemFile, samples: Option<usize>, cuts: Option<&str>) -> CliResult<(FormalDatum, StokesCocycle)> {
    let sys = mild_system(file)?;
    let fs = formal_solution(&sys, sys.matrix().trunc())?;
    let covering = match cuts {
        Some(c) => Covering::from_cuts(parse_cuts(c)?)?,
        None => default_covering(&fs.datum)?,
    };
    if file.matrix.is_none() {
        return Ok((fs.datum.clone(), StokesCocycle::identity(&fs.datum, &covering)));
    }
    let mut params = CocycleParams::default();
    if let Some(n) = samples {
        params.samples = n;
    }
    let sc = compute_cocycle(&sys, &fs, &covering, &params)?;
    Ok((fs.datum, sc))
}

pub fn cmd_cocycle(args: &CocycleArgs, out: &mut dyn Write) -> CliResult<formats::ModuleFile> {
    let file = load(&args.path)?;
    let (fd, sc) = cocycle(&file, args.samples, args.cuts.as_deref())?;
    let fm = rh_assemble(&fd, &sc)?;
    let rec = formats::write_module(&args.out, &args.path.display().to_string(), &fm)?;
    writeln!(out, "# source {}", args.path.display())?;
    writeln!(out, "# {} arcs, {} triple overlaps", sc.covering.len(), sc.triple_overlaps())?;
    for o in &rec.cocycle {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        writeln!(out, "{tag} overlap {} ({:.6}, {:.6}) {}", o.index, o.theta_start, o.theta_end, o.kind)?;
        for b in &o.blocks {
            writeln!(out, "  block ({}, {}): {} rate {:.4e}{}", b.row, b.col, b.class, b.rate, if b.numerically_zero { " (zero)" } else { "" })?;
        }
    }
    for g in &rec.graded {
        writeln!(out, "graded {} rank {}", g.orbit, g.rank)?;
    }
    writeln!(out, "wrote {}", args.out.join("module.toml").display())?;
    Ok(rec)
}

pub fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> CliResult<Vec<verify::Check>> {
    let checks = match args.example {
        Example::Gamma => verify::gamma_suite(args.alpha),
        Example::Egamma => verify::egamma_suite(),
        Example::Lambda => verify::lambda_suite(args.direction),
    };
    for c in &checks {
        writeln!(out, "{c}")?;
    }
    if checks.iter().all(|c| c.passed) {
        Ok(checks)
    } else {
        Err(CliError::new(Status::Failed, "verification failed"))
    }
}

pub fn cmd_plot_data(args: &PlotArgs, out: &mut dyn Write) -> CliResult<Vec<PathBuf>> {
    let file = load(&args.path)?;
    let sys = mild_system(&file)?;
    let fs = formal_solution(&sys, sys.matrix().trunc())?;
    let cov = default_covering(&fs.datum)?;
    let thetas: Vec<f64> = if args.theta.is_empty() {
        (0..cov.len()).map(|k| {
            let o = cov.overlap(k);
            wrap_angle(0.5 * (o.start + o.end))
        }).collect()
    } else {
        args.theta.iter().map(|&t| wrap_angle(t)).collect()
    };
    let base = ray_config(&file, None, &args.ray, sys.matrix().trunc());
    let (smin, smax, n) = (base.get("smin"), base.get("smax"), base.get("n") as usize);
    let jobs: Vec<CliResult<RaySamples>> = std::thread::scope(|scope| {
        let handles: Vec<_> = thetas
            .iter()
            .map(|&theta| {
                let (sys, fs, cov) = (&sys, &fs, &cov);
                scope.spawn(move || -> CliResult<RaySamples> {
                    let arc = arc_for(cov, theta).ok_or_else(|| CliError::new(Status::Failed, "no arc contains theta"))?;
                    let pts = ray_points(-theta, smin, smax, n);
                    Ok(solution_samples(sys, fs, &arc, &pts, &SectorialParams::default())?)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("ray job panicked")).collect()
    });
    std::fs::create_dir_all(&args.out)?;
    let mut written = Vec::new();
    let mut script = String::from("set datafile separator ','\nset logscale y\nset xlabel '|s|'\nset ylabel '|y|'\nplot ");
    let mut plots = Vec::new();
    for (k, (theta, job)) in thetas.iter().zip(jobs).enumerate() {
        let samples = job?;
        let name = format!("ray_{k}.csv");
        let path = args.out.join(&name);
        formats::write_samples(std::io::BufWriter::new(std::fs::File::create(&path)?), &samples)?;
        let cols = samples.values.first().map(|v| v.nrows() * v.ncols()).unwrap_or(0);
        for c in 0..cols {
            let (re, im) = (3 + 2 * c, 4 + 2 * c);
            plots.push(format!(
                "'{name}' every ::1 using (sqrt($1**2+$2**2)):(sqrt(${re}**2+${im}**2)) with lines title 'theta={theta:.4} y{c}'"
            ));
        }
        writeln!(out, "{}", path.display())?;
        written.push(path);
    }
    script.push_str(&plots.join(", \\\n     "));
    script.push('\n');
    let gp = args.out.join("plot.gp");
    std::fs::write(&gp, format!("# {}\n{script}", base.header().trim_start_matches("# ")))?;
    writeln!(out, "{}", gp.display())?;
    written.push(gp);
    Ok(written)
}

/// Runs a parsed command line and returns the process status.
pub fn run(cli: &Cli, out: &mut dyn Write, err: &mut dyn Write) -> Status {
    let result = match &cli.command {
        Command::CheckMild { path } => cmd_check_mild(path, out),
        Command::Formal { path } => cmd_formal(path, out).map(drop),
        Command::Directions { path } => cmd_directions(path, out).map(drop),
        Command::Solve(a) => cmd_solve(a, out, err).map(drop),
        Command::Cocycle(a) => cmd_cocycle(a, out).map(drop),
        Command::Verify(a) => cmd_verify(a, out).map(drop),
        Command::PlotData(a) => cmd_plot_data(a, out).map(drop),
    };
    match result {
        Ok(()) => Status::Ok,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.status
        }
    }
}
