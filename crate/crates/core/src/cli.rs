//! The `poikit` command line.
//!
//! Settings come from `--config` (JSON), then `POIKIT_*` environment
//! overrides, then command-line flags. Output files go to `--out-dir`, which
//! must already exist.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{AnalyzeConfig, DataInput, EstimateConfig, EstimatorChoice, RunConfig, SimulateConfig};
use crate::data::{read_curves_csv, read_responses_csv, write_curves_csv, write_responses_csv, FunctionalDataset, GridSpec};
use crate::error::{PoiError, Result};
use crate::glm::LinkSpec;
use crate::harness::quality::{summarize_fit, ModelSummary};
use crate::harness::{per_models, run_experiment_with_threads, DgpChoice, Estimator, ExperimentSpec, McReport};
use crate::nw::{average_squared_error, fit_nw_at_indices, KernelConfig, KernelKind};
use crate::output::write_exact_json;
use crate::poi::{estimate_poi, Candidate, DeltaRule, PoiConfig};
use crate::selection::{best_subset_over_delta, default_k_grid, fit_at_indices, SelectionLimits};
use crate::sim::{generate_responses, sample_process, Dgp, ImpactModelSpec, ProcessSpec, SamplingMethod};

#[derive(Debug, Parser)]
#[command(name = "poikit", version, about = "Points of impact in functional regression")]
pub struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Existing directory for output files [default: .]
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub estimator: Option<EstimatorChoice>,
    /// Worker threads for `benchmark` [default: all cores]
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw curves and responses from a simulation design.
    Simulate(SimulateArgs),
    /// Detect points of impact and fit models on them.
    Estimate(InputArgs),
    /// Run a Monte Carlo experiment.
    Benchmark(BenchmarkArgs),
    /// Compare the point-of-impact model with peak-and-end models.
    Analyze(InputArgs),
}

fn parse_dgp(s: &str) -> std::result::Result<Dgp, String> {
    serde_json::from_value(serde_json::Value::String(s.to_uppercase())).map_err(|_| format!("unknown design {s:?}, expected DGP1..DGP5"))
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_dgp)]
    pub dgp: Option<Dgp>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// Curves CSV, one row per subject.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// Responses CSV with a single column.
    #[arg(long)]
    pub responses: Option<PathBuf>,
    /// Center and scale each grid point before estimation.
    #[arg(long)]
    pub standardize: bool,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, value_parser = parse_dgp)]
    pub dgp: Option<Dgp>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Comma-separated grid sizes.
    #[arg(long, value_delimiter = ',')]
    pub p: Vec<usize>,
    #[arg(long)]
    pub reps: Option<usize>,
}

/// Resolved settings shared by all subcommands.
struct Context {
    config: RunConfig,
    /// Flag, else config file, else none.
    seed: Option<u64>,
    out_dir: PathBuf,
    estimator: Option<EstimatorChoice>,
    threads: Option<usize>,
}

impl Context {
    fn new(cli: &Cli, env: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let config = RunConfig::load(cli.config.as_deref(), env)?;
        let out_dir = cli.out_dir.clone().or_else(|| config.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
        if !out_dir.is_dir() {
            return Err(PoiError::io(
                &out_dir,
                std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
            ));
        }
        let threads = cli.threads.or(config.threads);
        if threads == Some(0) {
            return Err(PoiError::Config("--threads must be >= 1".into()));
        }
        Ok(Context {
            seed: cli.seed.or(config.seed),
            estimator: cli.estimator,
            threads,
            out_dir,
            config,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

/// Runs one parsed command and returns the files written.
pub fn run(cli: &Cli, env: impl IntoIterator<Item = (String, String)>) -> Result<Vec<PathBuf>> {
    let ctx = Context::new(cli, env)?;
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(&ctx, args),
        Command::Estimate(args) => cmd_estimate(&ctx, args),
        Command::Benchmark(args) => cmd_benchmark(&ctx, args),
        Command::Analyze(args) => cmd_analyze(&ctx, args),
    }
}

/// Parses `args`, runs, reports to stdout/stderr and returns the exit code.
pub fn main_with_args<I, T>(args: I, env: impl IntoIterator<Item = (String, String)>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli, env) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[derive(Serialize)]
struct SimulationMetadata<'a> {
    dgp: &'a DgpChoice,
    process: ProcessSpec,
    model: ImpactModelSpec,
    n: usize,
    p: usize,
    domain: [f64; 2],
    seed: u64,
    sampling: SamplingMethod,
    tau_indices: Vec<usize>,
    tau_grid_points: Vec<f64>,
    curves: PathBuf,
    responses: PathBuf,
}

fn missing(what: &str) -> PoiError {
    PoiError::Config(format!("{what} is required (flag or config file)"))
}

fn cmd_simulate(ctx: &Context, args: &SimulateArgs) -> Result<Vec<PathBuf>> {
    let mut cfg = match (&ctx.config.simulate, args.dgp) {
        (Some(c), _) => c.clone(),
        (None, Some(dgp)) => SimulateConfig {
            dgp: DgpChoice::Preset(dgp),
            n: args.n.ok_or_else(|| missing("--n"))?,
            p: args.p.ok_or_else(|| missing("--p"))?,
            domain: [0.0, 1.0],
            sampling: SamplingMethod::Auto,
        },
        (None, None) => return Err(missing("--dgp")),
    };
    if let Some(dgp) = args.dgp {
        cfg.dgp = DgpChoice::Preset(dgp);
    }
    cfg.n = args.n.unwrap_or(cfg.n);
    cfg.p = args.p.unwrap_or(cfg.p);

    let (process, model) = match &cfg.dgp {
        DgpChoice::Preset(d) => (d.process(), d.model()),
        DgpChoice::Custom { process, model } => (process.clone(), model.clone()),
    };
    let grid = GridSpec::new(cfg.domain[0], cfg.domain[1], cfg.p)?;
    process.check_domain(&grid)?;
    let seed = ctx.seed.unwrap_or(0);
    let x = sample_process(&process, &grid, cfg.n, seed, cfg.sampling)?;
    let sim = generate_responses(&x, &grid, &model, seed)?;

    let curves = ctx.path("curves.csv");
    let responses = ctx.path("responses.csv");
    let metadata = ctx.path("metadata.json");
    write_curves_csv(&curves, &x)?;
    write_responses_csv(&responses, &sim.y)?;
    write_exact_json(
        &metadata,
        &SimulationMetadata {
            dgp: &cfg.dgp,
            tau_grid_points: sim.tau_indices.iter().map(|&j| grid.point(j)).collect(),
            tau_indices: sim.tau_indices,
            process,
            model,
            n: cfg.n,
            p: cfg.p,
            domain: cfg.domain,
            seed,
            sampling: cfg.sampling,
            curves: curves.clone(),
            responses: responses.clone(),
        },
    )?;
    log::info!("simulated n = {}, p = {} into {}", cfg.n, cfg.p, ctx.out_dir.display());
    Ok(vec![curves, responses, metadata])
}

fn resolve_input(configured: Option<&DataInput>, args: &InputArgs) -> Result<DataInput> {
    let mut input = match configured {
        Some(c) => c.clone(),
        None => DataInput {
            curves: args.curves.clone().ok_or_else(|| missing("--curves"))?,
            responses: args.responses.clone().ok_or_else(|| missing("--responses"))?,
            domain: [0.0, 1.0],
            standardize: false,
        },
    };
    if let Some(c) = &args.curves {
        input.curves = c.clone();
    }
    if let Some(r) = &args.responses {
        input.responses = r.clone();
    }
    input.standardize |= args.standardize;
    Ok(input)
}

fn load_data(input: &DataInput) -> Result<FunctionalDataset> {
    let x = read_curves_csv(&input.curves)?;
    let y = read_responses_csv(&input.responses)?;
    let grid = GridSpec::new(input.domain[0], input.domain[1], x.ncols())?;
    let data = FunctionalDataset::new(grid, x, y)?;
    Ok(if input.standardize { data.standardized() } else { data })
}

#[derive(Serialize)]
struct InputMetadata<'a> {
    curves: &'a Path,
    responses: &'a Path,
    n: usize,
    p: usize,
    domain: [f64; 2],
    standardized: bool,
}

impl<'a> InputMetadata<'a> {
    fn new(input: &'a DataInput, data: &FunctionalDataset) -> Self {
        InputMetadata {
            curves: &input.curves,
            responses: &input.responses,
            n: data.n(),
            p: data.p(),
            domain: input.domain,
            standardized: input.standardize,
        }
    }
}

#[derive(Serialize)]
struct CandidateOut {
    index: usize,
    location: f64,
    score: f64,
    /// Standardized statistic; absent where the stencil leaves the grid.
    statistic: Option<f64>,
}

fn candidates_out(cands: &[Candidate], stats: &[Option<f64>]) -> Vec<CandidateOut> {
    cands
        .iter()
        .zip(stats)
        .map(|(c, s)| CandidateOut {
            index: c.index,
            location: c.location,
            score: c.score,
            statistic: *s,
        })
        .collect()
}

#[derive(Serialize)]
struct SelectedPoint {
    index: usize,
    location: f64,
}

#[derive(Serialize)]
struct NwSummary {
    kernel: KernelKind,
    bandwidths: Vec<f64>,
    /// Mean squared difference between fitted values and responses.
    fitted_mse: f64,
}

#[derive(Serialize)]
struct TrhBlock {
    label: &'static str,
    delta: f64,
    k_delta: usize,
    lambda: f64,
    candidates: Vec<CandidateOut>,
    s_hat: usize,
    selected: Vec<SelectedPoint>,
    model: ModelSummary,
    nonparametric: Option<NwSummary>,
}

#[derive(Serialize)]
struct PoiBlock {
    label: &'static str,
    k_grid: Vec<usize>,
    delta_grid: Vec<f64>,
    delta: f64,
    k_delta: usize,
    candidates: Vec<CandidateOut>,
    s_hat: usize,
    selected: Vec<SelectedPoint>,
    subsets_fitted: usize,
    subsets_pruned: usize,
    warnings: Vec<String>,
    model: ModelSummary,
    nonparametric: Option<NwSummary>,
}

#[derive(Serialize)]
struct EstimateReport<'a> {
    input: InputMetadata<'a>,
    link: LinkSpec,
    detector: &'a PoiConfig,
    trh: Option<TrhBlock>,
    poi: Option<PoiBlock>,
}

fn term_name(grid: &GridSpec, j: usize) -> String {
    format!("X({:.4})", grid.point(j))
}

fn selected_points(grid: &GridSpec, indices: &[usize]) -> Vec<SelectedPoint> {
    indices
        .iter()
        .map(|&j| SelectedPoint {
            index: j,
            location: grid.point(j),
        })
        .collect()
}

/// GLM on the (uncentered) data at `indices`; intercept-only when empty.
fn model_at(name: &str, data: &FunctionalDataset, indices: &[usize], link: LinkSpec, limits: &SelectionLimits) -> Result<ModelSummary> {
    let fit = fit_at_indices(data, indices, link, &limits.fit)?;
    let names: Vec<String> = indices.iter().map(|&j| term_name(&data.grid, j)).collect();
    summarize_fit(name, &names, &data.columns_at(indices), &data.y, &fit)
}

fn nw_at(data: &FunctionalDataset, indices: &[usize], config: Option<&KernelConfig>) -> Result<Option<NwSummary>> {
    let Some(config) = config else { return Ok(None) };
    if indices.is_empty() {
        return Ok(None);
    }
    let fit = fit_nw_at_indices(data, indices, config)?;
    let y: Vec<f64> = data.y.iter().copied().collect();
    Ok(Some(NwSummary {
        kernel: fit.kernel,
        fitted_mse: average_squared_error(&fit.fitted(), &y),
        bandwidths: fit.bandwidths,
    }))
}

fn run_trh(data: &FunctionalDataset, cfg: &EstimateConfig) -> Result<TrhBlock> {
    let est = estimate_poi(data, &cfg.detector)?;
    let mut indices: Vec<usize> = est.selected().iter().map(|c| c.index).collect();
    indices.sort_unstable();
    Ok(TrhBlock {
        label: Estimator::Trh.label(),
        delta: est.delta,
        k_delta: est.k_delta,
        lambda: est.lambda,
        candidates: candidates_out(&est.candidates, &est.statistics),
        s_hat: est.s_hat,
        selected: selected_points(&data.grid, &indices),
        model: model_at("TRH", data, &indices, cfg.link, &cfg.selection)?,
        nonparametric: nw_at(data, &indices, cfg.kernel.as_ref())?,
    })
}

fn run_bic(data: &FunctionalDataset, detector: &PoiConfig, k_grid: Option<&Vec<usize>>, link: LinkSpec, limits: &SelectionLimits, kernel: Option<&KernelConfig>) -> Result<PoiBlock> {
    let ks = k_grid.cloned().unwrap_or_else(|| default_k_grid(&data.grid, detector.difference_order));
    let res = best_subset_over_delta(data, &ks, link, limits, detector)?;
    // statistics for the winning lag's candidates, recomputed on the same settings
    let est = estimate_poi(
        data,
        &PoiConfig {
            delta: DeltaRule::Explicit { k_delta: res.best_k_delta },
            ..detector.clone()
        },
    )?;
    Ok(PoiBlock {
        label: Estimator::Poi.label(),
        delta_grid: res.delta_grid.clone(),
        k_grid: ks,
        delta: res.best_delta,
        k_delta: res.best_k_delta,
        candidates: candidates_out(&est.candidates, &est.statistics),
        s_hat: res.s_hat(),
        selected: selected_points(&data.grid, &res.selected_indices),
        subsets_fitted: res.trace.len(),
        subsets_pruned: res.pruned,
        warnings: res.warnings.clone(),
        model: model_at("POI", data, &res.selected_indices, link, limits)?,
        nonparametric: nw_at(data, &res.selected_indices, kernel)?,
    })
}

fn cmd_estimate(ctx: &Context, args: &InputArgs) -> Result<Vec<PathBuf>> {
    let mut cfg = match &ctx.config.estimate {
        Some(c) => c.clone(),
        None => EstimateConfig {
            input: resolve_input(None, args)?,
            estimator: EstimatorChoice::Both,
            detector: PoiConfig::default(),
            k_grid: None,
            selection: SelectionLimits::default(),
            link: LinkSpec::Logit,
            kernel: None,
        },
    };
    cfg.input = resolve_input(Some(&cfg.input), args)?;
    if let Some(e) = ctx.estimator {
        cfg.estimator = e;
    }
    let data = load_data(&cfg.input)?;

    let trh = cfg.estimator.trh().then(|| run_trh(&data, &cfg)).transpose()?;
    let poi = cfg
        .estimator
        .poi()
        .then(|| run_bic(&data, &cfg.detector, cfg.k_grid.as_ref(), cfg.link, &cfg.selection, cfg.kernel.as_ref()))
        .transpose()?;
    let out = ctx.path("estimate.json");
    write_exact_json(
        &out,
        &EstimateReport {
            input: InputMetadata::new(&cfg.input, &data),
            link: cfg.link,
            detector: &cfg.detector,
            trh,
            poi,
        },
    )?;
    Ok(vec![out])
}

fn cmd_benchmark(ctx: &Context, args: &BenchmarkArgs) -> Result<Vec<PathBuf>> {
    let mut spec = match (&ctx.config.benchmark, args.dgp) {
        (Some(s), _) => s.clone(),
        (None, Some(dgp)) => ExperimentSpec::new(dgp, args.n.clone(), args.p.clone(), args.reps.unwrap_or(200), 0),
        (None, None) => return Err(missing("--dgp")),
    };
    if let Some(dgp) = args.dgp {
        spec.dgp = DgpChoice::Preset(dgp);
    }
    if !args.n.is_empty() {
        spec.n_list = args.n.clone();
    }
    if !args.p.is_empty() {
        spec.p_list = args.p.clone();
    }
    if let Some(r) = args.reps {
        spec.reps = r;
    }
    if let Some(seed) = ctx.seed {
        spec.seed = seed;
    }
    if let Some(e) = ctx.estimator {
        spec.estimators = match e {
            EstimatorChoice::Trh => vec![Estimator::Trh],
            EstimatorChoice::Poi => vec![Estimator::Poi],
            EstimatorChoice::Both => vec![Estimator::Trh, Estimator::Poi],
        };
    }
    let threads = ctx.threads.unwrap_or_else(rayon::current_num_threads);
    let report = run_experiment_with_threads(&spec, threads)?;
    let (json, csv) = crate::harness::report::write_report(&ctx.out_dir, "benchmark", &report)?;
    let cells = ctx.path("benchmark_cells.csv");
    write_cells_csv(&cells, &report)?;
    log::info!("benchmark {} finished in {:.1} s", report.spec_hash, report.runtime_secs);
    Ok(vec![json, csv, cells])
}

fn write_cells_csv(path: &Path, report: &McReport) -> Result<()> {
    let opt = |v: Option<f64>| v.map(crate::data::fmt_f64).unwrap_or_default();
    let mut w = csv::Writer::from_path(path).map_err(|e| PoiError::InvalidData(format!("{}: {e}", path.display())))?;
    let io = |e: csv::Error| PoiError::InvalidData(format!("{}: {e}", path.display()));
    w.write_record([
        "n",
        "p",
        "estimator",
        "reps",
        "failures",
        "p_correct",
        "avg_mse_penalized",
        "avg_mse_matched",
        "median_max_abs_err",
        "mase",
    ])
    .map_err(io)?;
    for c in &report.cells {
        w.write_record([
            c.n.to_string(),
            c.p.to_string(),
            c.estimator.label().to_string(),
            c.reps.to_string(),
            c.failures.to_string(),
            opt(c.p_correct),
            opt(c.avg_mse_penalized),
            opt(c.avg_mse_matched),
            opt(c.median_max_abs_err),
            opt(c.mase),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| PoiError::io(path, e))
}

#[derive(Serialize)]
struct AnalyzeReport<'a> {
    input: InputMetadata<'a>,
    poi: PoiBlock,
    per1: ModelSummary,
    per2: ModelSummary,
}

fn per_summary(name: &str, terms: &[&str], design: &DMatrix<f64>, data: &FunctionalDataset, link: LinkSpec, limits: &SelectionLimits) -> Result<ModelSummary> {
    let fit = crate::glm::fisher_scoring(&crate::glm::with_intercept(design), &data.y, link, None, &limits.fit)?;
    let names: Vec<String> = terms.iter().map(|s| s.to_string()).collect();
    summarize_fit(name, &names, design, &data.y, &fit)
}

fn cmd_analyze(ctx: &Context, args: &InputArgs) -> Result<Vec<PathBuf>> {
    let mut cfg = match &ctx.config.analyze {
        Some(c) => c.clone(),
        None => AnalyzeConfig {
            input: resolve_input(None, args)?,
            detector: PoiConfig::default(),
            k_grid: None,
            selection: SelectionLimits::default(),
            link: LinkSpec::Logit,
        },
    };
    cfg.input = resolve_input(Some(&cfg.input), args)?;
    let data = load_data(&cfg.input)?;

    let poi = run_bic(&data, &cfg.detector, cfg.k_grid.as_ref(), cfg.link, &cfg.selection, None)?;
    let per = per_models(&data);
    let per1 = per_summary("PER-1", &["X(peak)", "X(end)"], &per.per1, &data, cfg.link, &cfg.selection)?;
    let per2 = per_summary("PER-2", &["X(peak+)", "X(peak-)", "X(end)"], &per.per2, &data, cfg.link, &cfg.selection)?;

    let table = ctx.path("analyze.csv");
    write_comparison_csv(&table, &[&poi.model, &per1, &per2])?;
    let json = ctx.path("analyze.json");
    write_exact_json(
        &json,
        &AnalyzeReport {
            input: InputMetadata::new(&cfg.input, &data),
            poi,
            per1,
            per2,
        },
    )?;
    Ok(vec![json, table])
}

fn write_comparison_csv(path: &Path, models: &[&ModelSummary]) -> Result<()> {
    let fmt = crate::data::fmt_f64;
    let io = |e: csv::Error| PoiError::InvalidData(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["model", "terms", "converged", "loglik", "aic", "bic", "mcfadden_r2", "somers_dxy"])
        .map_err(io)?;
    for m in models {
        let (r2, dxy) = m
            .quality
            .map_or((String::new(), String::new()), |q| (fmt(q.mcfadden_r2), fmt(q.somers_dxy)));
        let terms: Vec<String> = m.terms.iter().map(|t| format!("{}{}", t.name, t.stars)).collect();
        w.write_record([
            m.name.clone(),
            terms.join(" "),
            m.converged.to_string(),
            fmt(m.loglik),
            fmt(m.aic),
            fmt(m.bic),
            r2,
            dxy,
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| PoiError::io(path, e))
}
