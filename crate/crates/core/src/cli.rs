//! Command-line front end. Every command writes one JSON document or one CSV
//! table, to stdout or atomically to `--output`.

use std::f64::consts::LN_2;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::ser::{SerializeStruct, Serializer};
use serde::Serialize;

use crate::bounds::{write_sweep_csv, BoundsReport, CrestCurves, SweepRow};
use crate::density::DensityCurve;
use crate::distributions::DiscreteInput;
use crate::error::Error;
use crate::kernel::{binomial_entropy_exact, binomial_entropy_lower, binomial_entropy_upper, ChannelSpec};
use crate::oracles::exact_solution;
use crate::report::{format_real, to_json_string, write_atomic};
use crate::solver::{kkt_check, solve_capacity, KktSummary, SolveReport, SolverConfig, StructuralFlags};

/// Environment variable naming the directory that relative `--output`
/// paths are resolved against.
pub const OUTPUT_DIR_ENV: &str = "BINCAP_OUTPUT_DIR";

pub const EXIT_SUCCESS: u8 = 0;
pub const EXIT_IO: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_NOT_CONVERGED: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "bincap", version, about = "Capacity of the binomial channel and its bounds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Output format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,

    /// Output file; relative paths are resolved against $BINCAP_OUTPUT_DIR
    /// when it is set. Defaults to stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    /// Report information quantities in bits instead of nats.
    #[arg(long, global = true)]
    pub bits: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Capacity and capacity-achieving input for one trial count.
    Solve {
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Closed-form capacity and cardinality bounds.
    Bounds {
        #[arg(long, required_unless_present = "n_max", conflicts_with = "n_max")]
        n: Option<usize>,
        /// Emit rows for every trial count from 1 to this value.
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Certifies a user-supplied input law (JSON with "support"/"points" and "weights").
    Verify {
        #[arg(long)]
        dist: PathBuf,
        #[arg(long)]
        n: usize,
        /// Certification grid size.
        #[arg(long, default_value_t = SolverConfig::default().certification_points())]
        points: usize,
        #[arg(long, default_value_t = SolverConfig::default().kkt_tol)]
        kkt_tol: f64,
    },
    /// Bounds next to solved capacities for a range of trial counts.
    Sweep {
        #[arg(long)]
        n_max: usize,
        /// Largest trial count that is solved; larger ones get bounds only.
        #[arg(long, default_value_t = 32)]
        solve_max: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Exact solutions for one, two and three trials.
    Table,
    /// Information density and its derivatives for the solved input, or
    /// the crest-factor lower bounds with `--crest`.
    Curves {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1001)]
        points: usize,
        #[arg(long)]
        crest: bool,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Exact binomial entropy next to its closed-form lower and upper bounds.
    EntropyBounds {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 201)]
        points: usize,
    },
}

/// Overrides of the solver defaults.
#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long)]
    pub grid_size: Option<usize>,
    #[arg(long)]
    pub ba_tol: Option<f64>,
    #[arg(long)]
    pub kkt_tol: Option<f64>,
    #[arg(long)]
    pub merge_radius: Option<f64>,
    #[arg(long)]
    pub prune_weight: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Do not average the input with its mirror image.
    #[arg(long)]
    pub no_symmetrize: bool,
}

impl SolverArgs {
    pub fn config(&self) -> Result<SolverConfig, Error> {
        let d = SolverConfig::default();
        let config = SolverConfig {
            grid_size: self.grid_size.unwrap_or(d.grid_size),
            ba_tol: self.ba_tol.unwrap_or(d.ba_tol),
            kkt_tol: self.kkt_tol.unwrap_or(d.kkt_tol),
            merge_radius: self.merge_radius.unwrap_or(d.merge_radius),
            prune_weight: self.prune_weight.unwrap_or(d.prune_weight),
            max_outer_iters: self.max_iters.unwrap_or(d.max_outer_iters),
            symmetrize: !self.no_symmetrize,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Failure of a command, mapped to an exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

/// Rendered output and whether every solve converged.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub body: String,
    pub converged: bool,
}

/// Unit in which information quantities are printed.
#[derive(Debug, Clone, Copy)]
struct Units {
    bits: bool,
}

impl Units {
    fn scale(self) -> f64 {
        if self.bits {
            1.0 / LN_2
        } else {
            1.0
        }
    }

    fn capacity_key(self) -> &'static str {
        if self.bits {
            "capacity_bits"
        } else {
            "capacity_nats"
        }
    }
}

/// One solution in the report schema: trial count, capacity, certified
/// slack, support, weights, output law, structural flags, iteration count
/// and convergence.
struct SolveRecord<'a> {
    n: usize,
    capacity_nats: f64,
    kkt_slack: f64,
    support: &'a [f64],
    weights: &'a [f64],
    output_pmf: &'a [f64],
    flags: &'a StructuralFlags,
    iterations: usize,
    converged: bool,
    units: Units,
}

impl<'a> SolveRecord<'a> {
    fn from_report(report: &'a SolveReport, units: Units) -> Self {
        Self {
            n: report.n,
            capacity_nats: report.capacity_nats,
            kkt_slack: report.kkt_slack,
            support: report.input.points(),
            weights: report.input.weights(),
            output_pmf: report.output.probs(),
            flags: &report.flags,
            iterations: report.iterations,
            converged: report.converged,
            units,
        }
    }
}

impl Serialize for SolveRecord<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let scale = self.units.scale();
        let mut s = serializer.serialize_struct("SolveRecord", 9)?;
        s.serialize_field("n", &self.n)?;
        s.serialize_field(self.units.capacity_key(), &(self.capacity_nats * scale))?;
        s.serialize_field("kkt_slack", &(self.kkt_slack * scale))?;
        s.serialize_field("support", self.support)?;
        s.serialize_field("weights", self.weights)?;
        s.serialize_field("output_pmf", self.output_pmf)?;
        s.serialize_field("flags", self.flags)?;
        s.serialize_field("iterations", &self.iterations)?;
        s.serialize_field("converged", &self.converged)?;
        s.end()
    }
}

/// Certificate of a user-supplied input law.
struct VerifyRecord<'a> {
    n: usize,
    summary: &'a KktSummary,
    units: Units,
}

impl Serialize for VerifyRecord<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let scale = self.units.scale();
        let m = self.summary;
        let mut s = serializer.serialize_struct("VerifyRecord", 7)?;
        s.serialize_field("n", &self.n)?;
        s.serialize_field(self.units.capacity_key(), &(m.capacity_nats * scale))?;
        s.serialize_field("kkt_slack", &(m.kkt_slack * scale))?;
        s.serialize_field("equality_defect", &(m.equality_defect * scale))?;
        s.serialize_field("certification_points", &m.certification_points)?;
        s.serialize_field("all_flags_pass", &m.flags.all_pass())?;
        s.serialize_field("flags", &m.flags)?;
        s.end()
    }
}

/// Bounds in the chosen unit; cardinalities are unit-free.
struct BoundsRecord<'a> {
    report: &'a BoundsReport,
    units: Units,
}

impl Serialize for BoundsRecord<'_> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let scale = self.units.scale();
        let r = self.report;
        let mut s = serializer.serialize_struct("BoundsRecord", 6)?;
        s.serialize_field("n", &r.n)?;
        s.serialize_field("cap_lower", &(r.cap_lower * scale))?;
        s.serialize_field("cap_upper", &(r.cap_upper * scale))?;
        s.serialize_field("card_lower", &r.card_lower)?;
        s.serialize_field("card_upper", &r.card_upper)?;
        s.serialize_field("witsenhausen", &r.witsenhausen)?;
        s.end()
    }
}

fn csv_string<F>(write: F) -> Result<String, CliError>
where
    F: FnOnce(&mut Vec<u8>) -> csv::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

fn csv_table(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, CliError> {
    csv_string(|buf| {
        let mut out = csv::Writer::from_writer(buf);
        out.write_record(header)?;
        for row in rows {
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    })
}

fn spec(n: usize) -> Result<ChannelSpec, CliError> {
    Ok(ChannelSpec::new(n)?)
}

/// Executes a parsed command and renders its output.
pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let units = Units { bits: cli.bits };
    let scale = units.scale();
    let format = |default: Format| cli.format.unwrap_or(default);
    let done = |body: String| Ok(Outcome { body, converged: true });
    match &cli.command {
        Command::Solve { n, solver } => {
            let report = solve_capacity(spec(*n)?, &solver.config()?)?;
            let body = match format(Format::Json) {
                Format::Json => to_json_string(&SolveRecord::from_report(&report, units))?,
                Format::Csv => csv_table(
                    &["x", "weight"],
                    report.input.atoms().map(|(x, w)| vec![format_real(x), format_real(w)]),
                )?,
            };
            Ok(Outcome { body, converged: report.converged })
        }
        Command::Bounds { n, n_max } => {
            let reports: Vec<BoundsReport> = match (n, n_max) {
                (Some(n), _) => vec![BoundsReport::new(spec(*n)?, None)],
                (None, Some(m)) => {
                    (1..=*m).map(|k| spec(k).map(|s| BoundsReport::new(s, None))).collect::<Result<_, _>>()?
                }
                (None, None) => return Err(CliError::Validation("bounds needs --n or --n-max".into())),
            };
            if reports.is_empty() {
                return Err(CliError::Validation("--n-max must be at least 1".into()));
            }
            match format(Format::Json) {
                Format::Json => {
                    let records: Vec<BoundsRecord> =
                        reports.iter().map(|report| BoundsRecord { report, units }).collect();
                    if n.is_some() {
                        done(to_json_string(&records[0])?)
                    } else {
                        done(to_json_string(&records)?)
                    }
                }
                Format::Csv => done(csv_table(
                    &["n", "cap_lower", "cap_upper", "card_lower", "card_upper", "witsenhausen"],
                    reports.iter().map(|r| {
                        vec![
                            r.n.to_string(),
                            format_real(r.cap_lower * scale),
                            format_real(r.cap_upper * scale),
                            format_real(r.card_lower),
                            r.card_upper.to_string(),
                            r.witsenhausen.to_string(),
                        ]
                    }),
                )?),
            }
        }
        Command::Verify { dist, n, points, kkt_tol } => {
            let text = std::fs::read_to_string(dist)
                .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", dist.display())))?;
            let input: DiscreteInput = serde_json::from_str(&text)
                .map_err(|e| CliError::Validation(format!("malformed distribution {}: {e}", dist.display())))?;
            let summary = kkt_check(&input, spec(*n)?, *points, *kkt_tol)?;
            match format(Format::Json) {
                Format::Json => done(to_json_string(&VerifyRecord { n: *n, summary: &summary, units })?),
                Format::Csv => done(csv_table(
                    &["n", units.capacity_key(), "kkt_slack", "equality_defect", "all_flags_pass"],
                    [vec![
                        n.to_string(),
                        format_real(summary.capacity_nats * scale),
                        format_real(summary.kkt_slack * scale),
                        format_real(summary.equality_defect * scale),
                        summary.flags.all_pass().to_string(),
                    ]],
                )?),
            }
        }
        Command::Sweep { n_max, solve_max, solver } => {
            if *n_max == 0 {
                return Err(CliError::Validation("--n-max must be at least 1".into()));
            }
            let config = solver.config()?;
            let mut converged = true;
            let mut rows = Vec::with_capacity(*n_max);
            let mut reports = Vec::new();
            for k in 1..=*n_max {
                let s = spec(k)?;
                let report = if k <= *solve_max { Some(solve_capacity(s, &config)?) } else { None };
                converged &= report.as_ref().is_none_or(|r| r.converged);
                rows.push(SweepRow::new(s, report.as_ref()));
                reports.extend(report);
            }
            let body = match format(Format::Csv) {
                Format::Csv => csv_string(|buf| write_sweep_csv(&rows, scale, buf))?,
                Format::Json => {
                    let bounds: Vec<BoundsRecord> =
                        rows.iter().map(|r| BoundsRecord { report: &r.bounds, units }).collect();
                    let solutions: Vec<SolveRecord> =
                        reports.iter().map(|r| SolveRecord::from_report(r, units)).collect();
                    #[derive(Serialize)]
                    struct Sweep<'a> {
                        bounds: Vec<BoundsRecord<'a>>,
                        solutions: Vec<SolveRecord<'a>>,
                    }
                    to_json_string(&Sweep { bounds, solutions })?
                }
            };
            Ok(Outcome { body, converged })
        }
        Command::Table => {
            let config = SolverConfig::default();
            let mut fixtures = Vec::new();
            for n in 1..=3 {
                let exact = exact_solution(n)?;
                let summary = kkt_check(&exact.input, spec(n)?, config.certification_points(), config.kkt_tol)?;
                fixtures.push((exact, summary));
            }
            match format(Format::Json) {
                Format::Json => {
                    let records: Vec<SolveRecord> = fixtures
                        .iter()
                        .map(|(exact, summary)| SolveRecord {
                            n: exact.n,
                            capacity_nats: exact.capacity_nats,
                            kkt_slack: summary.kkt_slack,
                            support: exact.input.points(),
                            weights: exact.input.weights(),
                            output_pmf: exact.output.probs(),
                            flags: &summary.flags,
                            iterations: 0,
                            converged: true,
                            units,
                        })
                        .collect();
                    done(to_json_string(&records)?)
                }
                Format::Csv => done(csv_table(
                    &["n", units.capacity_key(), "x", "weight"],
                    fixtures.iter().flat_map(|(exact, _)| {
                        exact.input.atoms().map(move |(x, w)| {
                            vec![
                                exact.n.to_string(),
                                format_real(exact.capacity_nats * scale),
                                format_real(x),
                                format_real(w),
                            ]
                        })
                    }),
                )?),
            }
        }
        Command::Curves { n, points, crest, solver } => {
            if format(Format::Csv) != Format::Csv {
                return Err(CliError::Validation("curves are emitted as CSV only".into()));
            }
            let s = spec(*n)?;
            if *crest {
                let mut curves = CrestCurves::new(s, *points)?;
                curves.lb1.iter_mut().flatten().for_each(|v| *v *= scale);
                curves.lb2.iter_mut().flatten().for_each(|v| *v *= scale);
                return done(csv_string(|buf| curves.write_csv(buf))?);
            }
            let report = solve_capacity(s, &solver.config()?)?;
            let mut curve = DensityCurve::new(&report.input, s, *points)?;
            curve.values.iter_mut().for_each(|v| *v *= scale);
            curve.d1.iter_mut().flatten().for_each(|v| *v *= scale);
            curve.d2.iter_mut().flatten().for_each(|v| *v *= scale);
            Ok(Outcome { body: csv_string(|buf| curve.write_csv(buf))?, converged: report.converged })
        }
        Command::EntropyBounds { n, points } => {
            if format(Format::Csv) != Format::Csv {
                return Err(CliError::Validation("entropy bounds are emitted as CSV only".into()));
            }
            if *points < 2 {
                return Err(CliError::Validation("--points must be at least 2".into()));
            }
            let s = spec(*n)?;
            let last = (*points - 1) as f64;
            let mut rows = Vec::with_capacity(*points);
            for j in 0..*points {
                let x = j as f64 / last;
                rows.push(vec![
                    format_real(x),
                    format_real(binomial_entropy_lower(s, x)? * scale),
                    format_real(binomial_entropy_exact(s, x)? * scale),
                    format_real(binomial_entropy_upper(s, x)? * scale),
                ]);
            }
            done(csv_table(&["x", "lower", "exact", "upper"], rows)?)
        }
    }
}

/// Resolves a relative output path against `output_dir` when given.
pub fn resolve_output(path: &Path, output_dir: Option<&Path>) -> PathBuf {
    match output_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

/// Parses `args`, runs the command, writes its output and returns the exit
/// status.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_SUCCESS };
        }
    };
    let outcome = match execute(&cli) {
        Ok(outcome) => outcome,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let written = match &cli.output {
        Some(path) => {
            let dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
            write_atomic(&resolve_output(path, dir.as_deref()), outcome.body.as_bytes())
        }
        None => {
            use std::io::Write;
            std::io::stdout().write_all(outcome.body.as_bytes())
        }
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return EXIT_IO;
    }
    if outcome.converged {
        EXIT_SUCCESS
    } else {
        eprintln!("error: the solver did not reach the requested tolerance");
        EXIT_NOT_CONVERGED
    }
}
