//! Command-line front end: CSV ingestion, run configuration, dispatch and
//! result files.
//!
//! Every command prints a human-readable report on stdout. `--out` additionally
//! writes the machine-readable result in `--format`. Failures print a single
//! line `error kind=<kind> code=<code> msg=<json string>` on stderr.

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::btrex::{btrex_fit, BtrexResult};
use crate::error::Error;
use crate::model::{standardize, Dataset};
use crate::rng::child_seed;
use crate::simbench::{
    generate_synthetic, hamming_distance, kfold_prediction_error, run_experiment, run_method,
    runtime_scaling, summarize, CellSummary, ExperimentRecord, Method, MethodSettings,
    SynthConfig, TimedMethod, DESK_REPS, FULL_SCALE_KAPPAS, FULL_SCALE_REPS, FULL_SCALE_SIGMAS,
};
use crate::trex::{trex_objective_exact, TrexParams, DEFAULT_Q};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_SOLVER: i32 = 4;

/// Column order of `simulate` result files.
pub const RECORD_COLUMNS: [&str; 10] = [
    "method",
    "n",
    "p",
    "sigma",
    "kappa",
    "repetition",
    "hamming",
    "support_size",
    "runtime_secs",
    "converged",
];

pub const DESK_BENCH_GRID: [usize; 4] = [250, 500, 1000, 2000];
pub const FULL_BENCH_GRID: [usize; 5] = [250, 500, 1000, 2000, 4000];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Fit one method and print its support and coefficients.
    Fit,
    /// B-TREX selection frequencies and majority support.
    Btrex,
    /// Synthetic experiment matrix (methods x configurations x repetitions).
    Simulate,
    /// Runtime scaling of TREX against a Lasso path.
    Bench,
    /// K-fold prediction error.
    Cv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "trex", version, about = "Tuning-free sparse regression")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,

    /// Design matrix CSV (n rows, p columns, optional header row).
    #[arg(long)]
    pub design: Option<PathBuf>,
    /// Response CSV (n rows, one column, optional header row).
    #[arg(long)]
    pub response: Option<PathBuf>,
    /// Use a synthetic equicorrelated design instead of CSV input.
    #[arg(long)]
    pub synthetic: bool,

    #[arg(long)]
    pub n: Option<usize>,
    /// Number of variables; a comma-separated list for `simulate` and `bench`.
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<usize>,
    /// Noise level; a comma-separated list for `simulate`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub sigma: Vec<f64>,
    /// Equicorrelation; a comma-separated list for `simulate`.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub kappa: Vec<f64>,

    /// trex, btrex, lasso-cv or sqrt-lasso; comma-separated for `simulate` and `cv`.
    #[arg(long, value_delimiter = ',')]
    pub method: Vec<Method>,
    #[arg(long, default_value_t = DEFAULT_Q)]
    pub q: u32,
    #[arg(long, default_value_t = 31)]
    pub b: usize,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    /// Per-cell summary file (mean, sd) for plotting; `simulate` only.
    #[arg(long)]
    pub plot_data: Option<PathBuf>,

    /// Refit the selected support by least squares before predicting (`cv`).
    #[arg(long)]
    pub refit: bool,
    /// Report coefficients on the scale of the input columns (`fit`).
    #[arg(long)]
    pub back_transform: bool,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// 51 repetitions and p = 500 for `simulate`; adds p = 4000 to the `bench` grid.
    #[arg(long)]
    pub full_paper_scale: bool,
}

/// Where the data comes from.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Files { design: PathBuf, response: PathBuf },
    Synthetic {
        n: usize,
        p: Vec<usize>,
        sigma: Vec<f64>,
        kappa: Vec<f64>,
    },
}

/// Fully resolved run configuration. The serialized form is echoed in JSON
/// output; fields that cannot change results (output paths, thread count) are
/// left out so that replays compare equal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub source: DataSource,
    pub methods: Vec<Method>,
    pub q: u32,
    pub b: usize,
    pub folds: usize,
    pub reps: usize,
    pub seed: u64,
    pub refit: bool,
    pub back_transform: bool,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub format: OutputFormat,
    #[serde(skip)]
    pub plot_data: Option<PathBuf>,
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn settings(&self) -> MethodSettings {
        MethodSettings {
            trex: TrexParams {
                q: self.q,
                ..TrexParams::default()
            },
            b: self.b,
            folds: self.folds,
            ..MethodSettings::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Io,
    Solver,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Config,
            message: msg.into(),
        }
    }

    pub fn io(msg: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Io,
            message: msg.into(),
        }
    }

    /// Errors while reading input files count as I/O errors.
    fn input(e: Error) -> Self {
        Self::io(e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Config => EXIT_CONFIG,
            ErrorKind::Io => EXIT_IO,
            ErrorKind::Solver => EXIT_SOLVER,
        }
    }

    /// The one-line stderr form.
    pub fn line(&self) -> String {
        let kind = match self.kind {
            ErrorKind::Config => "config",
            ErrorKind::Io => "io",
            ErrorKind::Solver => "solver",
        };
        let msg = serde_json::to_string(&self.message).unwrap_or_else(|_| "\"?\"".into());
        format!("error kind={kind} code={} msg={msg}", self.exit_code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let kind = match e {
            Error::InvalidParameter(_) => ErrorKind::Config,
            Error::Io(_) | Error::Parse { .. } => ErrorKind::Io,
            _ => ErrorKind::Solver,
        };
        Self {
            kind,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                let _ = e.print();
                return EXIT_OK;
            }
            let text = e.to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("{}", CliError::config(first).line());
            return EXIT_CONFIG;
        }
    };
    match resolve(cli).and_then(|cfg| execute(&cfg)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("{}", e.line());
            e.exit_code()
        }
    }
}

/// Applies command-specific defaults and checks the flag combination.
pub fn resolve(cli: Cli) -> CliResult<RunConfig> {
    let cmd = cli.command;
    let files = cli.design.is_some() || cli.response.is_some();
    let synthetic_only = matches!(cmd, Command::Simulate | Command::Bench);
    if files && cli.synthetic {
        return Err(CliError::config("give either --design/--response or --synthetic, not both"));
    }
    if files && synthetic_only {
        return Err(CliError::config(format!("{} runs on synthetic data only", name_of(cmd))));
    }
    if !files && !cli.synthetic && !synthetic_only {
        return Err(CliError::config("no data: give --design and --response, or --synthetic"));
    }

    let source = if files {
        let (Some(design), Some(response)) = (cli.design.clone(), cli.response.clone()) else {
            return Err(CliError::config("--design and --response must be given together"));
        };
        if !cli.p.is_empty() || !cli.sigma.is_empty() || !cli.kappa.is_empty() || cli.n.is_some() {
            return Err(CliError::config("--n/--p/--sigma/--kappa apply to synthetic data only"));
        }
        DataSource::Files { design, response }
    } else {
        let n = cli.n.unwrap_or(100);
        let p = if !cli.p.is_empty() {
            cli.p.clone()
        } else {
            match (cmd, cli.full_paper_scale) {
                (Command::Bench, false) => DESK_BENCH_GRID.to_vec(),
                (Command::Bench, true) => FULL_BENCH_GRID.to_vec(),
                (Command::Simulate, true) => vec![500],
                _ => vec![100],
            }
        };
        let sigma = if !cli.sigma.is_empty() {
            cli.sigma.clone()
        } else if cmd == Command::Simulate {
            FULL_SCALE_SIGMAS.to_vec()
        } else {
            vec![0.5]
        };
        let kappa = if !cli.kappa.is_empty() {
            cli.kappa.clone()
        } else if cmd == Command::Simulate && cli.full_paper_scale {
            FULL_SCALE_KAPPAS.to_vec()
        } else {
            vec![0.0]
        };
        if !synthetic_only && (p.len() > 1 || sigma.len() > 1 || kappa.len() > 1) {
            return Err(CliError::config(format!(
                "{} takes a single --p, --sigma and --kappa",
                name_of(cmd)
            )));
        }
        if cmd == Command::Bench && (sigma.len() > 1 || kappa.len() > 1) {
            return Err(CliError::config("bench takes a single --sigma and --kappa"));
        }
        for &pp in &p {
            for &s in &sigma {
                for &k in &kappa {
                    SynthConfig::with_sparse_signal(n, pp, s, k, 0).validate()?;
                }
            }
        }
        DataSource::Synthetic { n, p, sigma, kappa }
    };

    let methods = match cmd {
        Command::Fit => match cli.method.as_slice() {
            [] => vec![Method::Trex],
            [m] => vec![*m],
            _ => return Err(CliError::config("fit takes a single --method")),
        },
        Command::Btrex | Command::Bench => {
            if !cli.method.is_empty() {
                return Err(CliError::config(format!("{} does not take --method", name_of(cmd))));
            }
            match cmd {
                Command::Btrex => vec![Method::Btrex],
                _ => Vec::new(),
            }
        }
        Command::Simulate | Command::Cv => {
            if cli.method.is_empty() {
                Method::ALL.to_vec()
            } else {
                let mut ms = cli.method.clone();
                let mut seen = Vec::new();
                ms.retain(|m| {
                    let fresh = !seen.contains(m);
                    seen.push(*m);
                    fresh
                });
                ms
            }
        }
    };

    let reps = match (cli.reps, cmd) {
        (Some(0), _) => return Err(CliError::config("--reps must be >= 1")),
        (Some(r), _) => r,
        (None, Command::Simulate) if cli.full_paper_scale => FULL_SCALE_REPS,
        (None, Command::Simulate) => DESK_REPS,
        (None, Command::Bench) if cli.full_paper_scale => 11,
        (None, Command::Bench) => 5,
        (None, _) => 1,
    };
    if cli.b < 1 {
        return Err(CliError::config("--b must be >= 1"));
    }
    if cli.folds < 2 {
        return Err(CliError::config("--folds must be >= 2"));
    }
    if cli.threads == Some(0) {
        return Err(CliError::config("--threads must be >= 1"));
    }
    if cli.plot_data.is_some() && cmd != Command::Simulate {
        return Err(CliError::config("--plot-data applies to simulate only"));
    }
    TrexParams {
        q: cli.q,
        ..TrexParams::default()
    }
    .validate(0)?;

    Ok(RunConfig {
        command: cmd,
        source,
        methods,
        q: cli.q,
        b: cli.b,
        folds: cli.folds,
        reps,
        seed: cli.seed,
        refit: cli.refit,
        back_transform: cli.back_transform,
        out: cli.out,
        format: cli.format,
        plot_data: cli.plot_data,
        threads: cli.threads,
    })
}

fn name_of(cmd: Command) -> &'static str {
    match cmd {
        Command::Fit => "fit",
        Command::Btrex => "btrex",
        Command::Simulate => "simulate",
        Command::Bench => "bench",
        Command::Cv => "cv",
    }
}

pub fn execute(cfg: &RunConfig) -> CliResult<()> {
    // Timing runs are always single-threaded.
    let threads = match cfg.command {
        Command::Bench => Some(1),
        _ => cfg.threads,
    };
    let run = || match cfg.command {
        Command::Fit => fit_command(cfg),
        Command::Btrex => btrex_command(cfg),
        Command::Simulate => simulate_command(cfg),
        Command::Bench => bench_command(cfg),
        Command::Cv => cv_command(cfg),
    };
    match threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| CliError::config(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Loaded or generated data for the single-dataset commands, plus the true
/// support when it is known.
fn single_dataset(cfg: &RunConfig) -> CliResult<(Dataset, Option<Vec<usize>>)> {
    match &cfg.source {
        DataSource::Files { design, response } => Ok((load_csv_dataset(design, response)?, None)),
        DataSource::Synthetic { n, p, sigma, kappa } => {
            let sc = SynthConfig::with_sparse_signal(*n, p[0], sigma[0], kappa[0], cfg.seed);
            let data = generate_synthetic(&sc)?;
            Ok((data.dataset, Some(sc.true_support())))
        }
    }
}

fn open_out(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::io(format!("{}: {e}", path.display()))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::io(format!("{}: {e}", path.display()))
}

fn join_labels(d: &Dataset, support: &[usize]) -> String {
    support.iter().map(|&j| d.label(j)).collect::<Vec<_>>().join(" ")
}

fn one_based(support: &[usize]) -> String {
    support.iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    seed: u64,
    config: &'a RunConfig,
}

fn metadata(cfg: &RunConfig) -> Metadata<'_> {
    Metadata {
        tool: "trex",
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config: cfg,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = open_out(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::io(e.to_string()))?;
    writeln!(w).and_then(|_| w.flush()).map_err(io_err(path))
}

fn write_csv_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(open_out(path)?);
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(r).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Serialize)]
struct Coefficient {
    variable: String,
    index: usize,
    coefficient: f64,
}

#[derive(Debug, Serialize)]
struct FitOutput<'a> {
    metadata: Metadata<'a>,
    method: Method,
    n: usize,
    p: usize,
    support: Vec<usize>,
    exact_objective: Option<f64>,
    converged: bool,
    hamming: Option<usize>,
    coefficients: Vec<Coefficient>,
}

pub fn fit_command(cfg: &RunConfig) -> CliResult<()> {
    let (d, truth) = single_dataset(cfg)?;
    let method = cfg.methods[0];
    let outcome = run_method(method, &d, &cfg.settings(), child_seed(cfg.seed, method.tag()))?;
    if !outcome.converged {
        log::warn!("{method} did not converge; reporting the last iterate");
    }
    let objective = outcome
        .beta
        .as_ref()
        .and_then(|b| trex_objective_exact(&d, b).ok());
    let beta = outcome.beta.as_ref().map(|b| {
        if cfg.back_transform {
            d.to_raw_scale(b)
        } else {
            b.clone()
        }
    });
    let coefficients: Vec<Coefficient> = outcome
        .support
        .iter()
        .map(|&j| Coefficient {
            variable: d.label(j),
            index: j + 1,
            coefficient: beta.as_ref().map_or(f64::NAN, |b| b[j]),
        })
        .collect();
    let hamming = truth.map(|t| hamming_distance(&outcome.support, &t, d.p()));

    let mut out = io::stdout().lock();
    let mut report = || -> io::Result<()> {
        writeln!(out, "method: {method}")?;
        writeln!(out, "n: {}  p: {}", d.n(), d.p())?;
        writeln!(out, "support: {}", one_based(&outcome.support))?;
        if d.names().is_some() {
            writeln!(out, "variables: {}", join_labels(&d, &outcome.support))?;
        }
        match objective {
            Some(o) => writeln!(out, "exact_objective: {}", num(o))?,
            None => writeln!(out, "exact_objective: NaN")?,
        }
        writeln!(out, "converged: {}", outcome.converged)?;
        if let Some(h) = hamming {
            writeln!(out, "hamming: {h}")?;
        }
        writeln!(out, "variable\tindex\tcoefficient")?;
        for c in &coefficients {
            writeln!(out, "{}\t{}\t{}", c.variable, c.index, num(c.coefficient))?;
        }
        Ok(())
    };
    report().map_err(|e| CliError::io(e.to_string()))?;

    if let Some(path) = &cfg.out {
        match cfg.format {
            OutputFormat::Csv => {
                let rows: Vec<Vec<String>> = coefficients
                    .iter()
                    .map(|c| vec![c.variable.clone(), c.index.to_string(), num(c.coefficient)])
                    .collect();
                write_csv_rows(path, &["variable", "index", "coefficient"], &rows)?;
            }
            OutputFormat::Json => write_json(
                path,
                &FitOutput {
                    metadata: metadata(cfg),
                    method,
                    n: d.n(),
                    p: d.p(),
                    support: outcome.support.iter().map(|j| j + 1).collect(),
                    exact_objective: objective.map(round10),
                    converged: outcome.converged,
                    hamming,
                    coefficients: coefficients
                        .into_iter()
                        .map(|c| Coefficient {
                            coefficient: round10(c.coefficient),
                            ..c
                        })
                        .collect(),
                },
            )?,
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct FrequencyRow {
    variable: String,
    index: usize,
    frequency: usize,
    fraction: f64,
    majority: bool,
}

#[derive(Debug, Serialize)]
struct BtrexOutput<'a> {
    metadata: Metadata<'a>,
    b: usize,
    majority_support: Vec<usize>,
    frequencies: Vec<FrequencyRow>,
    /// 1-based supports in bootstrap order.
    bootstrap_supports: Vec<Vec<usize>>,
    failures: Vec<(usize, String)>,
}

/// Selected variables ordered by decreasing frequency, then by index.
fn frequency_table(d: &Dataset, res: &BtrexResult) -> Vec<FrequencyRow> {
    let mut order: Vec<usize> = (0..d.p()).filter(|&j| res.frequencies[j] > 0).collect();
    order.sort_by(|&a, &b| res.frequencies[b].cmp(&res.frequencies[a]).then(a.cmp(&b)));
    order
        .into_iter()
        .map(|j| FrequencyRow {
            variable: d.label(j),
            index: j + 1,
            frequency: res.frequencies[j],
            fraction: round10(res.frequencies[j] as f64 / res.b as f64),
            majority: 2 * res.frequencies[j] > res.b,
        })
        .collect()
}

pub fn btrex_command(cfg: &RunConfig) -> CliResult<()> {
    let (d, truth) = single_dataset(cfg)?;
    let settings = cfg.settings();
    let res = btrex_fit(&d, cfg.b, &settings.trex, child_seed(cfg.seed, Method::Btrex.tag()))?;
    let unconverged = res.converged.iter().filter(|c| !**c).count();
    if unconverged > 0 {
        log::warn!("{unconverged} of {} bootstrap fits did not converge", res.b);
    }
    if !res.failures.is_empty() {
        log::warn!("{} of {} bootstrap fits failed", res.failures.len(), res.b);
    }
    let table = frequency_table(&d, &res);

    let mut out = io::stdout().lock();
    let mut report = || -> io::Result<()> {
        writeln!(out, "bootstraps: {}", res.b)?;
        writeln!(out, "majority_support: {}", one_based(&res.majority_support))?;
        if d.names().is_some() {
            writeln!(out, "variables: {}", join_labels(&d, &res.majority_support))?;
        }
        if let Some(t) = &truth {
            writeln!(out, "hamming: {}", hamming_distance(&res.majority_support, t, d.p()))?;
        }
        writeln!(out, "variable\tindex\tfrequency")?;
        for r in &table {
            writeln!(out, "{}\t{}\t{}", r.variable, r.index, r.frequency)?;
        }
        Ok(())
    };
    report().map_err(|e| CliError::io(e.to_string()))?;

    if let Some(path) = &cfg.out {
        match cfg.format {
            OutputFormat::Csv => {
                let rows: Vec<Vec<String>> = table
                    .iter()
                    .map(|r| {
                        vec![
                            r.variable.clone(),
                            r.index.to_string(),
                            r.frequency.to_string(),
                            num(r.fraction),
                            r.majority.to_string(),
                        ]
                    })
                    .collect();
                write_csv_rows(path, &["variable", "index", "frequency", "fraction", "majority"], &rows)?;
            }
            OutputFormat::Json => write_json(
                path,
                &BtrexOutput {
                    metadata: metadata(cfg),
                    b: res.b,
                    majority_support: res.majority_support.iter().map(|j| j + 1).collect(),
                    frequencies: table,
                    bootstrap_supports: res
                        .per_bootstrap_supports
                        .iter()
                        .map(|s| s.iter().map(|j| j + 1).collect())
                        .collect(),
                    failures: res.failures.clone(),
                },
            )?,
        }
    }
    Ok(())
}

/// Experiment configurations in (p, kappa, sigma) order.
fn synthetic_configs(cfg: &RunConfig) -> Vec<SynthConfig> {
    let DataSource::Synthetic { n, p, sigma, kappa } = &cfg.source else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for &pp in p {
        for &k in kappa {
            for &s in sigma {
                out.push(SynthConfig::with_sparse_signal(*n, pp, s, k, 0));
            }
        }
    }
    out
}

pub fn simulate_command(cfg: &RunConfig) -> CliResult<()> {
    let configs = synthetic_configs(cfg);
    let records = run_experiment(&configs, &cfg.methods, cfg.reps, cfg.seed, &cfg.settings())?;
    let unconverged = records.iter().filter(|r| !r.converged).count();
    if unconverged > 0 {
        log::warn!("{unconverged} of {} fits did not converge", records.len());
    }
    let summary = plot_summary(&records, &cfg.methods);

    let mut out = io::stdout().lock();
    let mut report = || -> io::Result<()> {
        writeln!(out, "method\tn\tp\tsigma\tkappa\treps\tmedian_hamming\tmean_hamming\tmean_support_size")?;
        for s in &summary {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                s.method,
                s.n,
                s.p,
                num(s.sigma),
                num(s.kappa),
                s.reps,
                num(s.median_hamming),
                num(s.mean_hamming),
                num(s.mean_support_size)
            )?;
        }
        Ok(())
    };
    report().map_err(|e| CliError::io(e.to_string()))?;

    if let Some(path) = &cfg.out {
        emit_results(&records, cfg.format, path, cfg)?;
    }
    if let Some(path) = &cfg.plot_data {
        write_summary(&summary, cfg.format, path, cfg)?;
    }
    Ok(())
}

/// Per-cell summaries grouped by method (in `methods` order), then configuration.
pub fn plot_summary(records: &[ExperimentRecord], methods: &[Method]) -> Vec<CellSummary> {
    let cells = summarize(records);
    let mut out = Vec::with_capacity(cells.len());
    for m in methods {
        out.extend(cells.iter().filter(|c| c.method == *m).cloned());
    }
    out
}

/// Flat result row shared by the CSV and JSON writers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordRow {
    pub method: Method,
    pub n: usize,
    pub p: usize,
    pub sigma: f64,
    pub kappa: f64,
    pub repetition: usize,
    pub hamming: usize,
    pub support_size: usize,
    pub runtime_secs: f64,
    pub converged: bool,
}

impl From<&ExperimentRecord> for RecordRow {
    fn from(r: &ExperimentRecord) -> Self {
        Self {
            method: r.method,
            n: r.config.n,
            p: r.config.p,
            sigma: round10(r.config.sigma),
            kappa: round10(r.config.kappa),
            repetition: r.repetition,
            hamming: r.hamming,
            support_size: r.support_size,
            runtime_secs: round10(r.runtime_secs),
            converged: r.converged,
        }
    }
}

impl RecordRow {
    fn fields(&self) -> Vec<String> {
        vec![
            self.method.to_string(),
            self.n.to_string(),
            self.p.to_string(),
            num(self.sigma),
            num(self.kappa),
            self.repetition.to_string(),
            self.hamming.to_string(),
            self.support_size.to_string(),
            num(self.runtime_secs),
            self.converged.to_string(),
        ]
    }
}

#[derive(Debug, Serialize)]
struct RecordsOutput<'a, T> {
    metadata: Metadata<'a>,
    records: Vec<T>,
}

/// Writes experiment records as CSV (header plus one row per record) or as a
/// JSON object holding `metadata` and the `records` array.
pub fn emit_results(
    records: &[ExperimentRecord],
    format: OutputFormat,
    path: &Path,
    cfg: &RunConfig,
) -> CliResult<()> {
    if records.is_empty() {
        return Err(CliError::config("no records to write"));
    }
    let rows: Vec<RecordRow> = records.iter().map(RecordRow::from).collect();
    match format {
        OutputFormat::Csv => {
            let fields: Vec<Vec<String>> = rows.iter().map(RecordRow::fields).collect();
            write_csv_rows(path, &RECORD_COLUMNS, &fields)
        }
        OutputFormat::Json => write_json(
            path,
            &RecordsOutput {
                metadata: metadata(cfg),
                records: rows,
            },
        ),
    }
}

/// Reads a CSV written by [`emit_results`].
pub fn read_results_csv(path: &Path) -> CliResult<Vec<RecordRow>> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    rdr.deserialize()
        .collect::<std::result::Result<Vec<RecordRow>, _>>()
        .map_err(csv_err(path))
}

pub const SUMMARY_COLUMNS: [&str; 13] = [
    "method",
    "n",
    "p",
    "sigma",
    "kappa",
    "reps",
    "mean_hamming",
    "sd_hamming",
    "median_hamming",
    "mean_support_size",
    "sd_support_size",
    "mean_runtime_secs",
    "sd_runtime_secs",
];

fn write_summary(
    summary: &[CellSummary],
    format: OutputFormat,
    path: &Path,
    cfg: &RunConfig,
) -> CliResult<()> {
    match format {
        OutputFormat::Csv => {
            let rows: Vec<Vec<String>> = summary
                .iter()
                .map(|s| {
                    vec![
                        s.method.to_string(),
                        s.n.to_string(),
                        s.p.to_string(),
                        num(s.sigma),
                        num(s.kappa),
                        s.reps.to_string(),
                        num(s.mean_hamming),
                        num(s.sd_hamming),
                        num(s.median_hamming),
                        num(s.mean_support_size),
                        num(s.sd_support_size),
                        num(s.mean_runtime_secs),
                        num(s.sd_runtime_secs),
                    ]
                })
                .collect();
            write_csv_rows(path, &SUMMARY_COLUMNS, &rows)
        }
        OutputFormat::Json => write_json(
            path,
            &RecordsOutput {
                metadata: metadata(cfg),
                records: summary.to_vec(),
            },
        ),
    }
}

pub fn bench_command(cfg: &RunConfig) -> CliResult<()> {
    let DataSource::Synthetic { n, p, sigma, kappa } = &cfg.source else {
        return Err(CliError::config("bench runs on synthetic data only"));
    };
    let base = SynthConfig::with_sparse_signal(*n, p[0], sigma[0], kappa[0], cfg.seed);
    let report = runtime_scaling(p, &base, cfg.reps, &cfg.settings())?;

    let mut out = io::stdout().lock();
    let mut print = || -> io::Result<()> {
        writeln!(out, "method\tp\tmedian_runtime_secs")?;
        for (m, pp, t) in &report.medians {
            writeln!(out, "{}\t{}\t{}", m.name(), pp, num(*t))?;
        }
        for m in [TimedMethod::Trex, TimedMethod::LassoPath] {
            match report.exponent(m) {
                Some(e) => writeln!(out, "exponent {}: {}", m.name(), num(e))?,
                None => writeln!(out, "exponent {}: n/a", m.name())?,
            }
        }
        Ok(())
    };
    print().map_err(|e| CliError::io(e.to_string()))?;

    if let Some(path) = &cfg.out {
        match cfg.format {
            OutputFormat::Csv => {
                let rows: Vec<Vec<String>> = report
                    .records
                    .iter()
                    .map(|r| {
                        vec![
                            r.method.name().to_string(),
                            n.to_string(),
                            r.p.to_string(),
                            r.repetition.to_string(),
                            num(r.runtime_secs),
                        ]
                    })
                    .collect();
                write_csv_rows(path, &["method", "n", "p", "repetition", "runtime_secs"], &rows)?;
            }
            OutputFormat::Json => write_json(
                path,
                &RecordsOutput {
                    metadata: metadata(cfg),
                    records: vec![report],
                },
            )?,
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct CvRow {
    method: Method,
    folds: usize,
    refit: bool,
    mean_error: f64,
    median_support_size: f64,
    excluded: usize,
}

pub fn cv_command(cfg: &RunConfig) -> CliResult<()> {
    let (d, _) = single_dataset(cfg)?;
    if cfg.folds > d.n() {
        return Err(CliError::config(format!(
            "--folds {} exceeds the number of observations {}",
            cfg.folds,
            d.n()
        )));
    }
    let settings = cfg.settings();
    let mut rows = Vec::with_capacity(cfg.methods.len());
    for &m in &cfg.methods {
        let rep = kfold_prediction_error(&d, m, cfg.folds, cfg.refit, child_seed(cfg.seed, m.tag()), &settings)?;
        if rep.excluded > 0 {
            log::warn!("{m}: {} of {} folds failed and were excluded", rep.excluded, cfg.folds);
        }
        rows.push(CvRow {
            method: m,
            folds: cfg.folds,
            refit: cfg.refit,
            mean_error: round10(rep.mean_error),
            median_support_size: round10(rep.median_support_size),
            excluded: rep.excluded,
        });
    }

    let mut out = io::stdout().lock();
    let mut print = || -> io::Result<()> {
        writeln!(out, "method\tfolds\trefit\tmean_error\tmedian_support_size\texcluded")?;
        for r in &rows {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                r.method,
                r.folds,
                r.refit,
                num(r.mean_error),
                num(r.median_support_size),
                r.excluded
            )?;
        }
        Ok(())
    };
    print().map_err(|e| CliError::io(e.to_string()))?;

    if let Some(path) = &cfg.out {
        match cfg.format {
            OutputFormat::Csv => {
                let fields: Vec<Vec<String>> = rows
                    .iter()
                    .map(|r| {
                        vec![
                            r.method.to_string(),
                            r.folds.to_string(),
                            r.refit.to_string(),
                            num(r.mean_error),
                            num(r.median_support_size),
                            r.excluded.to_string(),
                        ]
                    })
                    .collect();
                write_csv_rows(
                    path,
                    &["method", "folds", "refit", "mean_error", "median_support_size", "excluded"],
                    &fields,
                )?;
            }
            OutputFormat::Json => write_json(
                path,
                &RecordsOutput {
                    metadata: metadata(cfg),
                    records: rows,
                },
            )?,
        }
    }
    Ok(())
}

/// `x` rounded to 10 significant digits.
pub fn round10(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.9e}").parse().unwrap_or(x)
}

/// Decimal text of `x` with at most 10 significant digits.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{}", round10(x))
}

/// Parsed numeric CSV: optional header plus rows of equal length.
struct NumericTable {
    header: Option<Vec<String>>,
    rows: Vec<Vec<f64>>,
}

fn read_numeric_csv(path: &Path) -> Result<NumericTable, Error> {
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row: line,
            col: 0,
            msg: e.to_string(),
        })?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: Vec<Option<f64>> = rec.iter().map(|s| s.parse::<f64>().ok()).collect();
        if i == 0 && parsed.iter().all(Option::is_none) {
            header = Some(rec.iter().map(str::to_string).collect::<Vec<_>>());
            width = Some(rec.len());
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::Parse {
                row: line,
                col: rec.len().min(w) + 1,
                msg: format!("expected {w} fields, found {}", rec.len()),
            });
        }
        let mut row = Vec::with_capacity(w);
        for (c, (v, raw)) in parsed.iter().zip(rec.iter()).enumerate() {
            match v {
                Some(x) if x.is_finite() => row.push(*x),
                Some(_) => {
                    return Err(Error::Parse {
                        row: line,
                        col: c + 1,
                        msg: format!("non-finite value '{raw}'"),
                    })
                }
                None => {
                    return Err(Error::Parse {
                        row: line,
                        col: c + 1,
                        msg: format!("not a number: '{raw}'"),
                    })
                }
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 1,
            col: 1,
            msg: format!("{} holds no data rows", path.display()),
        });
    }
    Ok(NumericTable { header, rows })
}

/// Reads a design and a response CSV and standardizes the design. A first row
/// in which no field parses as a number is taken as a header; design header
/// names are kept for reporting.
pub fn load_csv_dataset(design_path: &Path, response_path: &Path) -> Result<Dataset, CliError> {
    load_csv_dataset_inner(design_path, response_path).map_err(CliError::input)
}

fn load_csv_dataset_inner(design_path: &Path, response_path: &Path) -> Result<Dataset, Error> {
    let design = read_numeric_csv(design_path)?;
    let response = read_numeric_csv(response_path)?;
    let n = design.rows.len();
    let p = design.rows[0].len();
    if response.rows[0].len() != 1 {
        return Err(Error::DimensionMismatch {
            what: "response columns",
            expected: 1,
            got: response.rows[0].len(),
        });
    }
    if response.rows.len() != n {
        return Err(Error::DimensionMismatch {
            what: "response rows vs design rows",
            expected: n,
            got: response.rows.len(),
        });
    }
    let x = DMatrix::from_fn(n, p, |i, j| design.rows[i][j]);
    let y = DVector::from_iterator(n, response.rows.iter().map(|r| r[0]));
    let d = standardize(x, y)?;
    match design.header {
        Some(names) => d.with_names(names),
        None => Ok(d),
    }
}

/// Writes `d` as a design CSV with a header row and a one-column response CSV.
/// Values use the shortest representation that reads back exactly.
pub fn write_dataset_csv(d: &Dataset, design_path: &Path, response_path: &Path) -> io::Result<()> {
    let to_io = |e: csv::Error| io::Error::other(e.to_string());
    let mut w = csv::Writer::from_path(design_path).map_err(to_io)?;
    let header: Vec<String> = match d.names() {
        Some(names) => names.to_vec(),
        None => (0..d.p()).map(|j| format!("x{}", j + 1)).collect(),
    };
    w.write_record(&header).map_err(to_io)?;
    for i in 0..d.n() {
        w.write_record(d.x().row(i).iter().map(|v| format!("{v:?}")))
            .map_err(to_io)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(response_path).map_err(to_io)?;
    w.write_record(["y"]).map_err(to_io)?;
    for v in d.y().iter() {
        w.write_record([format!("{v:?}")]).map_err(to_io)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_formatting() {
        assert_eq!(num(0.1), "0.1");
        assert_eq!(num(1.0 / 3.0), "0.3333333333");
        assert_eq!(num(123456789012.0), "123456789000");
        assert_eq!(num(f64::NAN), "NaN");
        assert_eq!(num(0.0), "0");
    }

    #[test]
    fn error_line_is_single_line() {
        let e = CliError::config("bad\nvalue \"x\"");
        let line = e.line();
        assert!(!line.contains('\n'));
        assert!(line.starts_with("error kind=config code=2 msg="));
    }

    #[test]
    fn resolve_defaults() {
        let cli = Cli::try_parse_from(["trex", "simulate"]).unwrap();
        let cfg = resolve(cli).unwrap();
        assert_eq!(cfg.reps, DESK_REPS);
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.methods, Method::ALL.to_vec());
        match &cfg.source {
            DataSource::Synthetic { p, sigma, .. } => {
                assert_eq!(p, &vec![100]);
                assert_eq!(sigma, &FULL_SCALE_SIGMAS.to_vec());
            }
            _ => panic!("expected synthetic source"),
        }
        let full = resolve(Cli::try_parse_from(["trex", "simulate", "--full-paper-scale"]).unwrap()).unwrap();
        assert_eq!(full.reps, FULL_SCALE_REPS);
    }

    #[test]
    fn resolve_rejects_bad_combinations() {
        for args in [
            vec!["trex", "fit"],
            vec!["trex", "fit", "--synthetic", "--design", "a.csv", "--response", "b.csv"],
            vec!["trex", "fit", "--design", "a.csv"],
            vec!["trex", "simulate", "--design", "a.csv", "--response", "b.csv"],
            vec!["trex", "fit", "--synthetic", "--method", "trex,btrex"],
            vec!["trex", "fit", "--synthetic", "--q", "3"],
            vec!["trex", "simulate", "--reps", "0"],
            vec!["trex", "bench", "--method", "trex"],
        ] {
            let cli = Cli::try_parse_from(&args).unwrap();
            let err = resolve(cli).unwrap_err();
            assert_eq!(err.exit_code(), EXIT_CONFIG, "{args:?}");
        }
    }
}
