//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 on invalid input, 2 when a numerical
//! diagnostic was raised (outputs are still written, with flags).

mod svg;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::classify::{
    classify_sweep, decompose_canonical, default_grid, differentiability_check, model_hash,
    verify_mixed_equality, ClassificationReport, ClassifyOptions, HullContext, Label,
    SCHEMA_VERSION,
};
use crate::equilibria::{
    brute_force_set, equilibrium_set, set_distance, Ensemble, EquilibriumSet, SetComparison,
};
use crate::error::{Error, Result};
use crate::lft::{concave_hull, curve_rows, write_rows, CurveRow, SupportTolerances};
use crate::model::{validate_model, Model};
use crate::sampler::{run_chain, ChainConfig, ChainEnsemble, ChainResult};
use crate::thermo::{linspace, Frame, PointDiagnostics, SolverOptions, Thermo};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "ENSEMBLEKIT_THREADS";

/// `lo:hi:count` with `count ≥ 2` and `lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        linspace(self.lo, self.hi, self.count)
    }
}

impl FromStr for GridSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, count] = parts[..] else {
            return Err(format!("expected lo:hi:count, found `{s}`"));
        };
        let lo: f64 = lo
            .trim()
            .parse()
            .map_err(|_| format!("bad lower end `{lo}`"))?;
        let hi: f64 = hi
            .trim()
            .parse()
            .map_err(|_| format!("bad upper end `{hi}`"))?;
        let count: usize = count
            .trim()
            .parse()
            .map_err(|_| format!("bad count `{count}`"))?;
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(format!("need finite lo < hi, found {lo}:{hi}"));
        }
        if count < 2 {
            return Err(format!("need at least 2 grid points, found {count}"));
        }
        Ok(Self { lo, hi, count })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Parser)]
#[command(
    name = "ensemblekit",
    version,
    about = "Entropies, free energies and ensemble equivalence for mean-field models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Microcanonical entropy with its concave hull and support flags.
    Entropy(EntropyArgs),
    /// Canonical free energy over a multiplier grid.
    FreeEnergy(FreeEnergyArgs),
    /// Label every grid value Full, Partial, Nonequivalent or Boundary.
    Classify(ClassifyArgs),
    /// Equilibrium macrostate set of one ensemble.
    Macrostates(MacrostatesArgs),
    /// Entropy or classification inside a mixed frame (σ = 2).
    Mixed(MixedArgs),
    /// Metropolis chain on site configurations.
    Sample(SampleArgs),
    /// Run every equivalence check and print a pass/fail table.
    Verify(VerifyArgs),
    /// Render a curve CSV or JSON as an SVG line chart.
    Plot(PlotArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Model description (JSON).
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format; inferred from the file extension when absent.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Energy grid `lo:hi:count`; attained values (tables) or 101 points by default.
    #[arg(long, allow_hyphen_values = true)]
    pub u_grid: Option<GridSpec>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct FreeEnergyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub beta_grid: GridSpec,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub u_grid: Option<GridSpec>,
    /// Multipliers of the disjointness test; derived from the hull by default.
    #[arg(long, allow_hyphen_values = true)]
    pub beta_grid: Option<GridSpec>,
    /// Labels only, without checking them against equilibrium sets.
    #[arg(long)]
    pub no_verify: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SetKind {
    Canonical,
    Microcanonical,
    Mixed,
    MixedCanonical,
    MicroPair,
}

/// Comma-separated numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct List(pub Vec<f64>);

impl FromStr for List {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        s.split(',')
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| format!("bad number `{p}`"))
            })
            .collect::<std::result::Result<_, _>>()
            .map(List)
    }
}

#[derive(Debug, Args)]
pub struct MacrostatesArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum)]
    pub ensemble: SetKind,
    /// Multipliers, comma separated (canonical).
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<List>,
    /// Conserved values, comma separated (microcanonical).
    #[arg(long, allow_hyphen_values = true)]
    pub u: Option<List>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub u1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub u2: Option<f64>,
    /// Also compute the exhaustive set and compare.
    #[arg(long)]
    pub brute_force: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct MixedArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Tilt the first component by this multiplier and sweep the second.
    #[arg(
        long,
        allow_hyphen_values = true,
        conflicts_with = "u2",
        required_unless_present = "u2"
    )]
    pub beta1: Option<f64>,
    /// Pin the second component at this value and sweep the first.
    #[arg(long, allow_hyphen_values = true)]
    pub u2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub grid: Option<GridSpec>,
    /// Write a classification report instead of the curve.
    #[arg(long)]
    pub classify: bool,
    #[arg(long, allow_hyphen_values = true)]
    pub beta_grid: Option<GridSpec>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ChainKind {
    Canonical,
    Shell,
    Mixed,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum)]
    pub ensemble: ChainKind,
    #[arg(long, allow_hyphen_values = true)]
    pub beta: Option<List>,
    #[arg(long, allow_hyphen_values = true)]
    pub u: Option<List>,
    /// Shell half-width.
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub u2: Option<f64>,
    /// Site count `a_n`; the model default when absent.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub sweeps: usize,
    /// Burn-in sweeps; a tenth of the recorded sweeps by default.
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub blocks: usize,
    /// Block trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Model description (JSON); not needed with `--report`.
    #[arg(long, required_unless_present = "report")]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, allow_hyphen_values = true)]
    pub u_grid: Option<GridSpec>,
    #[arg(long, allow_hyphen_values = true)]
    pub beta_grid: Option<GridSpec>,
    /// Frame for σ = 2 models: first component tilted by this multiplier.
    #[arg(long, allow_hyphen_values = true, conflicts_with = "u2")]
    pub beta1: Option<f64>,
    /// Frame for σ = 2 models: second component pinned here.
    #[arg(long, allow_hyphen_values = true)]
    pub u2: Option<f64>,
    /// Re-read a saved classification report (JSON) instead of computing.
    #[arg(long, conflicts_with = "model")]
    pub report: Option<PathBuf>,
    /// Write the suites and the report as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Curve CSV or JSON written by another subcommand.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Column for the horizontal axis; the first column by default.
    #[arg(long)]
    pub x: Option<String>,
    /// Columns to draw, comma separated; `s,s_hull` or the second column by default.
    #[arg(long, value_delimiter = ',')]
    pub y: Vec<String>,
    #[arg(long)]
    pub title: Option<String>,
}

/// Whether a command finished cleanly or with numerical diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Clean,
    Diagnostic,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return 1;
    }
    match dispatch(cli.command) {
        Ok(Status::Clean) => 0,
        Ok(Status::Diagnostic) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_diagnostic() {
                2
            } else {
                1
            }
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::Argument(format!(
            "{THREADS_ENV} must be a positive integer, found `{v}`"
        ))
    })?;
    // A second configuration in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

fn dispatch(cmd: Command) -> Result<Status> {
    match cmd {
        Command::Entropy(a) => entropy(a),
        Command::FreeEnergy(a) => free_energy(a),
        Command::Classify(a) => classify(a),
        Command::Macrostates(a) => macrostates(a),
        Command::Mixed(a) => mixed(a),
        Command::Sample(a) => sample(a),
        Command::Verify(a) => verify(a),
        Command::Plot(a) => plot(a),
    }
}

fn load(args: &ModelArgs) -> Result<Model> {
    load_path(&args.model)
}

/// Reads a model and rejects it when any invariant is violated.
fn load_path(path: &Path) -> Result<Model> {
    let model = Model::from_path(path)?;
    let violations = validate_model(&model);
    if violations.is_empty() {
        return Ok(model);
    }
    let text: Vec<String> = violations
        .iter()
        .map(|v| format!("{}: {}", v.location, v.message))
        .collect();
    Err(Error::Model(text.join("; ")))
}

fn options(seed: u64) -> SolverOptions {
    SolverOptions {
        seed,
        ..SolverOptions::default()
    }
}

fn format_of(out: &OutputArgs, fallback: Format) -> Format {
    out.format.unwrap_or_else(|| {
        match out
            .out
            .as_ref()
            .and_then(|p| p.extension())
            .and_then(|e| e.to_str())
        {
            Some("json") => Format::Json,
            Some("svg") => Format::Svg,
            Some("csv") => Format::Csv,
            _ => fallback,
        }
    })
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => fs::write(p, bytes)?,
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut buf = serde_json::to_vec_pretty(value)?;
    buf.push(b'\n');
    Ok(buf)
}

fn unsupported(format: Format, what: &str) -> Error {
    Error::Argument(format!("{what} cannot be written as {format:?}"))
}

fn diagnostics_status(diags: &[PointDiagnostics], grid: &[f64]) -> Status {
    let bad: Vec<f64> = diags
        .iter()
        .zip(grid)
        .filter(|(d, _)| !d.converged)
        .map(|(_, &g)| g)
        .collect();
    if bad.is_empty() {
        Status::Clean
    } else {
        eprintln!(
            "warning: {} grid points did not converge: {bad:?}",
            bad.len()
        );
        Status::Diagnostic
    }
}

/// JSON form of an entropy curve.
#[derive(Debug, Serialize, Deserialize)]
pub struct CurveDocument {
    pub schema_version: u32,
    pub command: String,
    pub model_hash: String,
    pub frame: Frame,
    pub rows: Vec<CurveRow>,
    pub diagnostics: Vec<PointDiagnostics>,
}

fn entropy_curve_output(
    thermo: &Thermo,
    model: &Model,
    frame: Frame,
    grid: &[f64],
    command: &str,
    output: &OutputArgs,
) -> Result<Status> {
    let tc = thermo.frame_entropy_curve(frame, grid)?;
    let curve = tc.sampled()?;
    let hull = concave_hull(&curve);
    let rows = curve_rows(&curve, &hull, SupportTolerances::for_curve(&curve));
    let bytes = match format_of(output, Format::Csv) {
        Format::Csv => {
            let mut buf = Vec::new();
            write_rows(&rows, &mut buf)?;
            buf
        }
        Format::Json => to_json(&CurveDocument {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            model_hash: model_hash(model),
            frame,
            rows,
            diagnostics: tc.diagnostics.clone(),
        })?,
        Format::Svg => {
            let table = svg::Table::from_rows(&rows);
            svg::render(&table, "u", &["s", "s_hull"], command)?.into_bytes()
        }
    };
    emit(output.out.as_deref(), &bytes)?;
    Ok(diagnostics_status(&tc.diagnostics, grid))
}

fn entropy(a: EntropyArgs) -> Result<Status> {
    let model = load(&a.model)?;
    let thermo = Thermo::new(&model, options(a.model.seed));
    let grid = match a.u_grid {
        Some(g) => g.values(),
        None => default_grid(&thermo, Frame::Pure, 101)?,
    };
    entropy_curve_output(&thermo, &model, Frame::Pure, &grid, "entropy", &a.output)
}

#[derive(Debug, Serialize)]
struct FreeEnergyDocument {
    schema_version: u32,
    command: String,
    model_hash: String,
    beta: Vec<f64>,
    #[serde(with = "crate::floats::vec")]
    phi: Vec<f64>,
    diagnostics: Vec<PointDiagnostics>,
}

fn free_energy(a: FreeEnergyArgs) -> Result<Status> {
    let model = load(&a.model)?;
    let thermo = Thermo::new(&model, options(a.model.seed));
    let betas = a.beta_grid.values();
    let tc = thermo.free_energy_curve(&betas)?;
    let bytes = match format_of(&a.output, Format::Csv) {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["beta", "phi"])?;
            for (b, v) in betas.iter().zip(&tc.values) {
                w.write_record([b.to_string(), v.to_string()])?;
            }
            w.into_inner().map_err(|e| Error::Io(e.into_error()))?
        }
        Format::Json => to_json(&FreeEnergyDocument {
            schema_version: SCHEMA_VERSION,
            command: "free-energy".into(),
            model_hash: model_hash(&model),
            beta: betas.clone(),
            phi: tc.values.clone(),
            diagnostics: tc.diagnostics.clone(),
        })?,
        Format::Svg => {
            let table = svg::Table {
                columns: vec!["beta".into(), "phi".into()],
                data: vec![betas.clone(), tc.values.clone()],
            };
            svg::render(&table, "beta", &["phi"], "free energy")?.into_bytes()
        }
    };
    emit(a.output.out.as_deref(), &bytes)?;
    Ok(diagnostics_status(&tc.diagnostics, &betas))
}

fn write_report(report: &ClassificationReport, output: &OutputArgs) -> Result<()> {
    let bytes = match format_of(output, Format::Csv) {
        Format::Json => {
            let mut buf = Vec::new();
            report.write_json(&mut buf)?;
            buf.push(b'\n');
            buf
        }
        Format::Csv => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            buf
        }
        f => return Err(unsupported(f, "a classification report")),
    };
    emit(output.out.as_deref(), &bytes)
}

fn report_status(report: &ClassificationReport) -> Status {
    let fails = report.failures();
    if !report.converged {
        eprintln!("warning: some entropy values did not converge");
    }
    if !fails.is_empty() {
        eprintln!("warning: {} checks failed", fails.len());
    }
    if fails.is_empty() && report.converged {
        Status::Clean
    } else {
        Status::Diagnostic
    }
}

fn classify_options(beta_grid: Option<GridSpec>, verify: bool) -> ClassifyOptions {
    ClassifyOptions {
        beta_grid: beta_grid.map(|g| g.values()),
        verify,
        ..ClassifyOptions::default()
    }
}

fn classify(a: ClassifyArgs) -> Result<Status> {
    let model = load(&a.model)?;
    let thermo = Thermo::new(&model, options(a.model.seed));
    let grid = match a.u_grid {
        Some(g) => g.values(),
        None => default_grid(&thermo, Frame::Pure, 101)?,
    };
    let report = classify_sweep(
        &thermo,
        Frame::Pure,
        &grid,
        &classify_options(a.beta_grid, !a.no_verify),
    )?;
    write_report(&report, &a.output)?;
    Ok(report_status(&report))
}

#[derive(Debug, Serialize)]
struct SetDocument {
    schema_version: u32,
    model_hash: String,
    set: EquilibriumSet,
    #[serde(skip_serializing_if = "Option::is_none")]
    brute_force: Option<EquilibriumSet>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<SetComparison>,
}

fn need<T>(v: Option<T>, flag: &str, kind: &str) -> Result<T> {
    v.ok_or_else(|| Error::Argument(format!("--{flag} is required for {kind}")))
}

fn macrostates(a: MacrostatesArgs) -> Result<Status> {
    let model = load(&a.model)?;
    let thermo = Thermo::new(&model, options(a.model.seed));
    let ensemble = match a.ensemble {
        SetKind::Canonical => Ensemble::Canonical {
            beta: need(a.beta.map(|l| l.0), "beta", "canonical sets")?,
        },
        SetKind::Microcanonical => Ensemble::Microcanonical {
            u: need(a.u.map(|l| l.0), "u", "microcanonical sets")?,
        },
        SetKind::Mixed => Ensemble::Mixed {
            beta1: need(a.beta1, "beta1", "mixed sets")?,
            u2: need(a.u2, "u2", "mixed sets")?,
        },
        SetKind::MixedCanonical => Ensemble::MixedCanonical {
            beta1: need(a.beta1, "beta1", "mixed canonical sets")?,
            beta2: need(a.beta2, "beta2", "mixed canonical sets")?,
        },
        SetKind::MicroPair => Ensemble::MicroPair {
            u1: need(a.u1, "u1", "paired microcanonical sets")?,
            u2: need(a.u2, "u2", "paired microcanonical sets")?,
        },
    };
    let set = equilibrium_set(&thermo, ensemble.clone(), 0)?;
    let (brute, comparison) = if a.brute_force {
        let bf = brute_force_set(&model, ensemble)?;
        let tol = if model.is_tabular() {
            0.0
        } else {
            2.0 / crate::equilibria::BRUTE_FORCE_STEPS as f64
        };
        let cmp = set_distance(&set, &bf, tol);
        (Some(bf), Some(cmp))
    } else {
        (None, None)
    };
    let status = if set.converged {
        Status::Clean
    } else {
        Status::Diagnostic
    };
    let doc = SetDocument {
        schema_version: SCHEMA_VERSION,
        model_hash: model_hash(&model),
        set,
        brute_force: brute,
        comparison,
    };
    match format_of(&a.output, Format::Json) {
        Format::Json => emit(a.output.out.as_deref(), &to_json(&doc)?)?,
        f => return Err(unsupported(f, "an equilibrium set")),
    }
    Ok(status)
}

fn mixed_frame(beta1: Option<f64>, u2: Option<f64>) -> Result<Frame> {
    match (beta1, u2) {
        (Some(b), None) => Ok(Frame::FixedBeta1(b)),
        (None, Some(v)) => Ok(Frame::FixedU2(v)),
        _ => Err(Error::Argument(
            "give exactly one of --beta1 and --u2".into(),
        )),
    }
}

fn mixed(a: MixedArgs) -> Result<Status> {
    let model = load(&a.model)?;
    let thermo = Thermo::new(&model, options(a.model.seed));
    let frame = mixed_frame(a.beta1, a.u2)?;
    let grid = match a.grid {
        Some(g) => g.values(),
        None => default_grid(&thermo, frame, 101)?,
    };
    if a.classify {
        let report = classify_sweep(&thermo, frame, &grid, &classify_options(a.beta_grid, true))?;
        write_report(&report, &a.output)?;
        return Ok(report_status(&report));
    }
    entropy_curve_output(&thermo, &model, frame, &grid, "mixed", &a.output)
}

#[derive(Debug, Serialize)]
struct ChainDocument {
    schema_version: u32,
    model_hash: String,
    result: ChainResult,
}

fn sample(a: SampleArgs) -> Result<Status> {
    let model = load(&a.model)?;
    let ensemble = match a.ensemble {
        ChainKind::Canonical => ChainEnsemble::Canonical {
            beta: need(a.beta.map(|l| l.0), "beta", "canonical chains")?,
        },
        ChainKind::Shell => ChainEnsemble::Shell {
            u: need(a.u.map(|l| l.0), "u", "shell chains")?,
            r: need(a.r, "r", "shell chains")?,
        },
        ChainKind::Mixed => ChainEnsemble::Mixed {
            beta1: need(a.beta1, "beta1", "mixed chains")?,
            u2: need(a.u2, "u2", "mixed chains")?,
            r: need(a.r, "r", "mixed chains")?,
        },
    };
    let config = ChainConfig {
        ensemble,
        sites: a.n,
        sweeps: a.sweeps,
        burn_in: a.burn_in.unwrap_or(a.sweeps / 10),
        seed: a.model.seed,
        proposal: Default::default(),
        blocks: a.blocks,
        anneal_sweeps: 2000,
    };
    let result = run_chain(&model, &config)?;
    if let Some(path) = &a.trace {
        let mut buf = Vec::new();
        result.write_trace_csv(&mut buf)?;
        fs::write(path, buf)?;
    }
    let doc = ChainDocument {
        schema_version: SCHEMA_VERSION,
        model_hash: model_hash(&model),
        result,
    };
    match format_of(&a.output, Format::Json) {
        Format::Json => emit(a.output.out.as_deref(), &to_json(&doc)?)?,
        f => return Err(unsupported(f, "a chain result")),
    }
    Ok(Status::Clean)
}

/// Tally of one family of checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suite {
    pub name: String,
    pub passed: usize,
    pub failed: usize,
    pub advisory: usize,
}

impl Suite {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            passed: 0,
            failed: 0,
            advisory: 0,
        }
    }

    fn add(&mut self, passed: bool, advisory: bool) {
        match (passed, advisory) {
            (true, _) => self.passed += 1,
            (false, true) => self.advisory += 1,
            (false, false) => self.failed += 1,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct VerifyDocument {
    pub schema_version: u32,
    pub suites: Vec<Suite>,
    pub report: ClassificationReport,
}

fn pointwise_suite(report: &ClassificationReport) -> Suite {
    let mut suite = Suite::new("pointwise checks");
    for r in report.records.iter().filter(|r| r.label != Label::Boundary) {
        for c in &r.checks {
            suite.add(c.passed, c.advisory);
        }
    }
    suite
}

fn print_table(report: &ClassificationReport, suites: &[Suite]) {
    println!("{:<12} {:<14} checks", "u", "label");
    for r in &report.records {
        let label = serde_json::to_value(r.label)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let checks: Vec<String> = r
            .checks
            .iter()
            .map(|c| {
                let mark = match (c.passed, c.advisory) {
                    (true, _) => "pass",
                    (false, true) => "advisory",
                    (false, false) => "FAIL",
                };
                format!("{} {mark} ({})", c.name, c.evidence)
            })
            .collect();
        println!(
            "{:<12} {:<14} {}",
            format!("{:.6}", r.u),
            label,
            checks.join("; ")
        );
    }
    println!();
    println!(
        "{:<28} {:>8} {:>8} {:>9}",
        "suite", "passed", "failed", "advisory"
    );
    for s in suites {
        println!(
            "{:<28} {:>8} {:>8} {:>9}",
            s.name, s.passed, s.failed, s.advisory
        );
    }
}

fn verify(a: VerifyArgs) -> Result<Status> {
    if let Some(path) = &a.report {
        let text = fs::read_to_string(path)?;
        let report: ClassificationReport = serde_json::from_str(&text)?;
        let suites = vec![pointwise_suite(&report)];
        print_table(&report, &suites);
        return Ok(if suites.iter().all(|s| s.failed == 0) {
            Status::Clean
        } else {
            Status::Diagnostic
        });
    }
    let path = a
        .model
        .as_ref()
        .ok_or_else(|| Error::Argument("--model or --report is required".into()))?;
    let model = load_path(path)?;
    let thermo = Thermo::new(&model, options(a.seed));
    let frame = if model.sigma() == 2 {
        mixed_frame(a.beta1, a.u2)?
    } else {
        if a.beta1.is_some() || a.u2.is_some() {
            return Err(Error::Argument(
                "--beta1 and --u2 need a σ = 2 model".into(),
            ));
        }
        Frame::Pure
    };
    let grid = match a.u_grid {
        Some(g) => g.values(),
        None => default_grid(&thermo, frame, 101)?,
    };
    let opts = classify_options(a.beta_grid, true);
    let report = classify_sweep(&thermo, frame, &grid, &opts)?;
    let ctx = HullContext::build(&thermo, frame, &grid)?;
    let set_tol = opts.set_tol;

    let mut suites = vec![pointwise_suite(&report)];
    let mut decomposition = Suite::new("canonical decomposition");
    let mut differentiability = Suite::new("differentiability");
    let results: Vec<Result<(bool, bool, bool)>> = {
        use rayon::prelude::*;
        report
            .betas
            .par_iter()
            .map(|&b| {
                let dec = decompose_canonical(&thermo, frame, b, Some(&ctx), set_tol)?;
                let exact = dec.set.is_exact() && dec.parts.iter().all(|p| p.micro.is_exact());
                let diff = differentiability_check(&thermo, b, &ctx, set_tol)?;
                Ok((dec.consistent(), diff.consistent, exact))
            })
            .collect()
    };
    for r in results {
        match r {
            Ok((dec, diff, exact)) => {
                decomposition.add(dec, !exact);
                differentiability.add(diff, !exact);
            }
            Err(Error::Resolution(msg)) => {
                eprintln!("warning: {msg}");
                decomposition.add(false, true);
            }
            Err(e) => return Err(e),
        }
    }
    suites.push(decomposition);
    suites.push(differentiability);

    if frame != Frame::Pure {
        let mut equality = Suite::new("mixed equality");
        let pairs: Vec<(f64, f64)> = match frame {
            Frame::FixedBeta1(b) => grid.iter().map(|&u| (b, u)).collect(),
            Frame::FixedU2(v) => report.betas.iter().map(|&b| (b, v)).collect(),
            Frame::Pure => Vec::new(),
        };
        for (b, u) in pairs {
            match verify_mixed_equality(&thermo, b, u) {
                Ok(r) => equality.add(r.equal, !r.exact),
                Err(Error::Capacity(msg)) => {
                    eprintln!("warning: mixed equality skipped: {msg}");
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        suites.push(equality);
    }

    print_table(&report, &suites);
    if let Some(out) = &a.out {
        fs::write(
            out,
            to_json(&VerifyDocument {
                schema_version: SCHEMA_VERSION,
                suites: suites.clone(),
                report,
            })?,
        )?;
    }
    Ok(if suites.iter().all(|s| s.failed == 0) {
        Status::Clean
    } else {
        Status::Diagnostic
    })
}

fn plot(a: PlotArgs) -> Result<Status> {
    let text = fs::read_to_string(&a.input)?;
    let is_json = a.input.extension().and_then(|e| e.to_str()) == Some("json")
        || text.trim_start().starts_with('{');
    let table = if is_json {
        svg::Table::from_json(&text)?
    } else {
        svg::Table::from_csv(&text)?
    };
    let x = a.x.clone().unwrap_or_else(|| table.columns[0].clone());
    let y: Vec<String> = if !a.y.is_empty() {
        a.y.clone()
    } else if table.has("s") {
        ["s", "s_hull"]
            .iter()
            .filter(|c| table.has(c))
            .map(|c| c.to_string())
            .collect()
    } else {
        table
            .columns
            .iter()
            .find(|c| **c != x)
            .cloned()
            .into_iter()
            .collect()
    };
    let y_refs: Vec<&str> = y.iter().map(String::as_str).collect();
    let title = a.title.clone().unwrap_or_else(|| {
        a.input
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    let doc = svg::render(&table, &x, &y_refs, &title)?;
    emit(a.out.as_deref(), doc.as_bytes())?;
    Ok(Status::Clean)
}
