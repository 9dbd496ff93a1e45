//! `lpbic` command-line interface.
//!
//! Exit codes: 0 success, 2 input error, 3 computational failure.

use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::aecm::{fit, resolve_lambda, FitConfig, Init, PenaltyConfig, DEFAULT_SEED};
use crate::error::{Error, Result};
use crate::evaluation::{
    adjusted_rand_index, replicate_experiment, simulate, ConfusionTable, CovarianceKind, GroupSpec, SimSpec,
};
use crate::io;
use crate::model::{CovarianceCode, ModelDescriptor};
use crate::par;
use crate::params::{Loadings, Noise};
use crate::selection::{compute_lpbic, grid_search_with_progress, SelectionTable, TableMeta, TableRow};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_COMPUTE: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "lpbic",
    version,
    about = "Penalized mixtures of factor analyzers with BIC/LPBIC model selection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the three-group benchmark data set.
    Simulate(SimulateArgs),
    /// Fit one model.
    Fit(FitCmdArgs),
    /// Fit every model of a grid and select by BIC and LPBIC.
    Search(SearchArgs),
    /// Repeat simulate + search and compare the two criteria.
    Replicate(ReplicateArgs),
    /// Adjusted Rand index between two label files.
    Ari(AriArgs),
}

/// `--lambda` value: a number or `recip-p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaArg(pub PenaltyConfig);

impl FromStr for LambdaArg {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "recip-p" | "1/p" => Ok(LambdaArg(PenaltyConfig::ReciprocalP)),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .map(|v| LambdaArg(PenaltyConfig::Fixed(v)))
                .ok_or_else(|| format!("expected a non-negative number or 'recip-p', got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Random,
    Kmeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct FitOptions {
    /// Tuning parameter: a number or `recip-p` (1/p).
    #[arg(long, default_value = "recip-p")]
    pub lambda: LambdaArg,
    /// Random starts per model.
    #[arg(long, default_value_t = 20)]
    pub starts: usize,
    #[arg(long, env = "LPBIC_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long = "max-iter", default_value_t = 1000)]
    pub max_iter: usize,
    #[arg(long, value_enum, default_value_t = InitArg::Kmeans)]
    pub init: InitArg,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub threads: Option<usize>,
}

impl FitOptions {
    pub fn config(&self) -> FitConfig {
        FitConfig {
            max_iterations: self.max_iter,
            tolerance: self.tol,
            n_starts: self.starts,
            seed: self.seed,
            init: match self.init {
                InitArg::Random => Init::RandomSoft,
                InitArg::Kmeans => Init::KMeans,
            },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GridOptions {
    #[arg(long = "g-min", default_value_t = 1)]
    pub g_min: usize,
    #[arg(long = "g-max", default_value_t = 4)]
    pub g_max: usize,
    #[arg(long = "q-min", default_value_t = 1)]
    pub q_min: usize,
    #[arg(long = "q-max", default_value_t = 3)]
    pub q_max: usize,
    /// Comma-separated covariance codes (default: all eight).
    #[arg(long, value_delimiter = ',')]
    pub models: Vec<String>,
}

impl GridOptions {
    pub fn expand(&self) -> Result<Vec<ModelDescriptor>> {
        let codes: Vec<CovarianceCode> = if self.models.is_empty() {
            CovarianceCode::all()
        } else {
            self.models.iter().map(|m| m.parse()).collect::<Result<_>>()?
        };
        let grid = ModelDescriptor::grid(self.g_min..=self.g_max, self.q_min..=self.q_max, &codes);
        if grid.is_empty() {
            return Err(Error::InvalidInput("model grid is empty".into()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimOptions {
    #[arg(long)]
    pub p: usize,
    /// Group sizes.
    #[arg(long, value_delimiter = ',', default_value = "40,30,30")]
    pub sizes: Vec<usize>,
    /// Constant mean level of each group.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "-5.5,2,3")]
    pub levels: Vec<f64>,
    /// Covariance kind of each group: isotropic, diagonal or full.
    #[arg(long, value_delimiter = ',', default_value = "isotropic,diagonal,full")]
    pub kinds: Vec<String>,
}

impl SimOptions {
    pub fn spec(&self, seed: u64) -> Result<SimSpec> {
        if self.sizes.len() != self.levels.len() || self.sizes.len() != self.kinds.len() {
            return Err(Error::InvalidInput(
                "--sizes, --levels and --kinds must have the same length".into(),
            ));
        }
        let groups = self
            .sizes
            .iter()
            .zip(&self.levels)
            .zip(&self.kinds)
            .map(|((&size, &level), kind)| {
                let kind = match kind.trim().to_ascii_lowercase().as_str() {
                    "isotropic" => CovarianceKind::Isotropic,
                    "diagonal" => CovarianceKind::Diagonal,
                    "full" => CovarianceKind::Full,
                    other => return Err(Error::InvalidInput(format!("unknown covariance kind {other:?}"))),
                };
                Ok(GroupSpec { size, level, kind })
            })
            .collect::<Result<_>>()?;
        let spec = SimSpec {
            p: self.p,
            groups,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub sim: SimOptions,
    #[arg(long, env = "LPBIC_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Data CSV output.
    #[arg(long)]
    pub out: PathBuf,
    /// Labels output (one 1-based label per line).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Write a header row `x1,...,xp`.
    #[arg(long)]
    pub header: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FitCmdArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Covariance code, e.g. CUC.
    #[arg(long)]
    pub model: String,
    /// Number of components.
    #[arg(long = "groups", short = 'G')]
    pub groups: usize,
    #[arg(long)]
    pub q: usize,
    #[command(flatten)]
    pub fit: FitOptions,
    /// JSON output with the fitted parameters.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub grid: GridOptions,
    #[command(flatten)]
    pub fit: FitOptions,
    /// Selection table output.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Additionally write the table as CSV here.
    #[arg(long = "csv-out")]
    pub csv_out: Option<PathBuf>,
    /// No per-cell progress on stderr.
    #[arg(long, short)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReplicateArgs {
    #[command(flatten)]
    pub sim: SimOptions,
    #[arg(long, default_value_t = 25)]
    pub reps: usize,
    #[command(flatten)]
    pub grid: GridOptions,
    #[command(flatten)]
    pub fit: FitOptions,
    /// Report CSV (rep, criterion, G, q, code, ari, value).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct AriArgs {
    pub first: PathBuf,
    pub second: PathBuf,
    /// Also print the confusion table (rows: first file, columns: second).
    #[arg(long)]
    pub table: bool,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                EXIT_INPUT
            } else {
                EXIT_COMPUTE
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Search(a) => cmd_search(&a),
        Command::Replicate(a) => cmd_replicate(&a),
        Command::Ari(a) => cmd_ari(&a),
    }
}

fn write_text(path: &std::path::Path, text: &str) -> Result<()> {
    let mut f = io::create_file(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<i32> {
    let spec = a.sim.spec(a.seed)?;
    let (data, labels) = simulate(&spec)?;
    io::write_data(&data, a.header, std::io::BufWriter::new(io::create_file(&a.out)?))?;
    if let Some(path) = &a.labels {
        io::write_labels(&labels, std::io::BufWriter::new(io::create_file(path)?))?;
    }
    Ok(0)
}

#[derive(Serialize)]
struct FitReport {
    model: ModelDescriptor,
    lambda_n: f64,
    loglik: f64,
    penalized_loglik: f64,
    bic: f64,
    lpbic: f64,
    rho: usize,
    rho_tilde: usize,
    iterations: usize,
    converged: bool,
    nonzero_mean_counts: Vec<usize>,
    pi: Vec<f64>,
    mu: Vec<Vec<f64>>,
    /// One `p x q` matrix (row-major) per distinct loading block.
    loadings: Vec<Vec<Vec<f64>>>,
    /// Distinct noise variances in storage order.
    noise: Vec<f64>,
    labels: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ari: Option<f64>,
    trace: Vec<f64>,
}

fn matrix_rows(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn load_truth(path: &Option<PathBuf>, n: usize) -> Result<Option<Vec<usize>>> {
    let Some(path) = path else { return Ok(None) };
    let labels = io::read_labels_file(path)?;
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {n} observations",
            labels.len()
        )));
    }
    Ok(Some(labels))
}

pub fn cmd_fit(a: &FitCmdArgs) -> Result<i32> {
    let data = io::read_data_file(&a.data)?;
    let truth = load_truth(&a.labels, data.n())?;
    let model = ModelDescriptor::parse(&a.model, a.groups, a.q)?;
    model.validate(data.n(), data.p())?;
    let penalty = a.fit.lambda.0;
    let config = a.fit.config();
    config.validate()?;
    let result = par::with_threads(a.fit.threads, || fit(&data, model, penalty, &config))?;
    let lambda_n = resolve_lambda(penalty, data.p());
    let crit = compute_lpbic(&result, &model, lambda_n, data.n())?;
    let labels = result.hard_labels();
    let ari = truth.as_ref().map(|t| adjusted_rand_index(t, &labels)).transpose()?;
    let loadings = match result.params.loadings() {
        Loadings::Shared(m) => vec![matrix_rows(m)],
        Loadings::PerGroup(ms) => ms.iter().map(matrix_rows).collect(),
    };
    let noise: &Noise = result.params.noise();
    let report = FitReport {
        model,
        lambda_n,
        loglik: result.loglik,
        penalized_loglik: result.penalized_loglik,
        bic: crit.bic,
        lpbic: crit.lpbic,
        rho: crit.rho,
        rho_tilde: crit.rho_tilde,
        iterations: result.iterations,
        converged: result.converged,
        nonzero_mean_counts: result.nonzero_mean_counts.clone(),
        pi: result.params.pi().iter().copied().collect(),
        mu: matrix_rows(result.params.mu()),
        loadings,
        noise: noise.slots(),
        labels: labels.iter().map(|l| l + 1).collect(),
        ari,
        trace: result.trace.clone(),
    };
    if let Some(out) = &a.out {
        let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.to_string()))?;
        write_text(out, &json)?;
    }
    println!(
        "{model}: loglik={:.4} penalized={:.4} BIC={:.4} LPBIC={:.4} iterations={} converged={}{}",
        result.loglik,
        result.penalized_loglik,
        crit.bic,
        crit.lpbic,
        result.iterations,
        result.converged,
        ari.map(|v| format!(" ARI={v:.4}")).unwrap_or_default()
    );
    Ok(if result.converged { 0 } else { EXIT_COMPUTE })
}

fn summary_line(label: &str, row: Option<&TableRow>, value: impl Fn(&TableRow) -> f64) -> String {
    match row {
        Some(r) => {
            let ari = r
                .fitted()
                .and_then(|c| c.ari)
                .map(|v| format!(" ARI={v:.4}"))
                .unwrap_or_default();
            format!(
                "{label:<5} best: G={} q={} model={} value={:.4}{ari}",
                r.model.groups,
                r.model.q,
                r.model.code,
                value(r)
            )
        }
        None => format!("{label:<5} best: none (no converged cell)"),
    }
}

fn progress_line(row: &TableRow, done: usize, total: usize) -> String {
    match row.fitted() {
        Some(c) => format!(
            "[{done}/{total}] {}: bic={:.3} lpbic={:.3} iterations={} converged={}",
            row.model, c.criterion.bic, c.criterion.lpbic, c.iterations, c.converged
        ),
        None => format!("[{done}/{total}] {}: failed", row.model),
    }
}

pub fn cmd_search(a: &SearchArgs) -> Result<i32> {
    let data = io::read_data_file(&a.data)?;
    let truth = load_truth(&a.labels, data.n())?;
    let grid = a.grid.expand()?;
    let penalty = a.fit.lambda.0;
    let config = a.fit.config();
    let done = AtomicUsize::new(0);
    let total = grid.len();
    let quiet = a.quiet;
    let mut table: SelectionTable = par::with_threads(a.fit.threads, || {
        grid_search_with_progress(&data, &grid, penalty, &config, |row| {
            let k = done.fetch_add(1, Ordering::SeqCst) + 1;
            if !quiet {
                eprintln!("{}", progress_line(row, k, total));
            }
        })
    })?;
    if let Some(t) = &truth {
        table.attach_truth(t)?;
    }
    let meta = TableMeta::new(&grid, penalty, table.lambda_n, &config).stamped();
    if let Some(out) = &a.out {
        let text = match a.format {
            Format::Json => table.to_json(&meta)?,
            Format::Csv => table.to_csv()?,
        };
        write_text(out, &text)?;
    }
    if let Some(path) = &a.csv_out {
        write_text(path, &table.to_csv()?)?;
    }
    println!(
        "{}",
        summary_line("BIC", table.best_bic(), |r| r
            .fitted()
            .map_or(f64::NAN, |c| c.criterion.bic))
    );
    println!(
        "{}",
        summary_line("LPBIC", table.best_lpbic(), |r| r
            .fitted()
            .map_or(f64::NAN, |c| c.criterion.lpbic))
    );
    Ok(if table.best_by_bic.is_some() { 0 } else { EXIT_COMPUTE })
}

pub fn cmd_replicate(a: &ReplicateArgs) -> Result<i32> {
    let spec = a.sim.spec(a.fit.seed)?;
    let grid = a.grid.expand()?;
    let config = a.fit.config();
    let report = par::with_threads(a.fit.threads, || {
        replicate_experiment(&spec, &grid, a.reps, a.fit.lambda.0, &config)
    })?;
    if let Some(out) = &a.out {
        write_text(out, &report.to_csv()?)?;
    }
    let s = &report.summary;
    let groups = |m: &std::collections::BTreeMap<usize, usize>| {
        m.iter()
            .map(|(g, c)| format!("G={g}:{c}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    println!("BIC   selections: {}", groups(&s.bic_groups));
    println!("LPBIC selections: {}", groups(&s.lpbic_groups));
    println!(
        "LPBIC ARI higher in {}/{} replications ({} ties, {} failed)",
        s.lpbic_ari_higher, s.reps, s.ari_ties, s.failures
    );
    Ok(if s.failures == s.reps { EXIT_COMPUTE } else { 0 })
}

pub fn cmd_ari(a: &AriArgs) -> Result<i32> {
    let first = io::read_labels_file(&a.first)?;
    let second = io::read_labels_file(&a.second)?;
    let ari = adjusted_rand_index(&first, &second)?;
    println!("{ari:.4}");
    if a.table {
        let t = ConfusionTable::new(&first, &second)?;
        let header: Vec<String> = t.column_labels.iter().map(|c| (c + 1).to_string()).collect();
        println!("\t{}", header.join("\t"));
        for (r, counts) in t.row_labels.iter().zip(&t.counts) {
            let cells: Vec<String> = counts.iter().map(|c| c.to_string()).collect();
            println!("{}\t{}", r + 1, cells.join("\t"));
        }
    }
    Ok(0)
}
