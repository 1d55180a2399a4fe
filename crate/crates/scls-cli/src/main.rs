//! Command-line front end for simplicial-simplicial regression: fitting,
//! prediction, permutation tests, Monte-Carlo studies, cross-validation
//! and SVG plots, all over CSV/JSON files.

mod manifest;
mod plot;

use clap::{Args, Parser, Subcommand, ValueEnum};
use manifest::RunManifest;
use scls_core::inference::{
    self, bootstrap_coefficients, confidence_ellipse, test_amalgamation, test_coefficients,
    test_independence, InferenceError, TestResult,
};
use scls_core::io::{
    self, read_coefficient_csv, read_composition_csv, write_coefficient_csv, write_composition_csv,
    IoError, ReadOptions,
};
use scls_core::qp::QpError;
use scls_core::scls::{
    fit_alpha_scls, fit_ar1, fit_multi, fit_weighted, CoefficientMatrix, FitError,
    FittedCoefficients, SclsFit,
};
use scls_core::simplex::CompositionMatrix;
use scls_core::simulation::{
    cross_validate, cross_validate_alpha_grid, ground_truth_coefficients, run_benchmark,
    run_discrepancy, run_power, run_type1, CvMetric, CvModel, SimConfig, SimError,
};
use scls_core::tflr::{fit_tflr, TflrError};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "scls",
    version,
    about = "Simplicial-simplicial regression by constrained least squares"
)]
struct Cli {
    /// Worker threads for replicate-level parallelism (default: all cores;
    /// SCLS_THREADS is honored when the flag is absent). Results do not
    /// depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a regression model and write coefficient and fitted-value files
    Fit(FitArgs),
    /// Predict responses for new predictor rows from saved coefficients
    Predict(PredictArgs),
    /// Permutation tests; the result is printed as JSON
    Test(TestArgs),
    /// Monte-Carlo studies writing result tables as CSV
    Simulate(SimulateArgs),
    /// Repeated k-fold cross-validation; per-repeat metrics as CSV
    Crossval(CrossvalArgs),
    /// Bootstrap the coefficient matrix and save the draws as JSON
    Bootstrap(BootstrapArgs),
    /// Render SVG diagrams
    Plot(PlotArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Scls,
    Tflr,
}

#[derive(Args)]
struct FitArgs {
    /// Response composition CSV
    #[arg(long)]
    response: PathBuf,
    /// Predictor composition CSV; repeat the flag for several predictors
    #[arg(long)]
    predictor: Vec<PathBuf>,
    /// Power-transformation parameter applied to the response (SCLS only)
    #[arg(long)]
    alpha: Option<f64>,
    /// Estimate predictor weights instead of fixing them to 1/M
    #[arg(long)]
    weighted: bool,
    #[arg(long, value_enum, default_value = "scls")]
    model: ModelArg,
    /// Fit the first-order autoregression of the response on its lag
    #[arg(long)]
    lag1: bool,
    /// Column of the response CSV holding group labels for --lag1
    #[arg(long)]
    group_column: Option<String>,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Coefficient CSV as written by `fit`
    #[arg(long)]
    coefficients: PathBuf,
    /// Predictor composition CSV
    #[arg(long)]
    predictor: PathBuf,
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TestArgs {
    #[command(subcommand)]
    kind: TestKind,
}

#[derive(Args)]
struct TestCommon {
    #[arg(long)]
    response: PathBuf,
    #[arg(long)]
    predictor: PathBuf,
    #[arg(long)]
    permutations: usize,
    #[arg(long)]
    seed: u64,
    /// Include the replicate statistics in the JSON output
    #[arg(long)]
    include_replicates: bool,
}

#[derive(Subcommand)]
enum TestKind {
    /// Permutation test of linear independence between response and predictor
    Independence {
        #[command(flatten)]
        common: TestCommon,
        #[arg(long, value_enum, default_value = "scls")]
        model: ModelArg,
    },
    /// Permutation test of a fixed coefficient matrix
    Coefficients {
        #[command(flatten)]
        common: TestCommon,
        /// CSV holding the hypothesized coefficient matrix
        #[arg(long)]
        b0: PathBuf,
    },
    /// Permutation test that two predictor components share a coefficient row
    Amalgamation {
        #[command(flatten)]
        common: TestCommon,
        #[arg(long)]
        l1: usize,
        #[arg(long)]
        l2: usize,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[command(subcommand)]
    study: StudyKind,
}

#[derive(Args)]
struct SimGrid {
    /// Sample sizes, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    n: Vec<usize>,
    /// Response component counts, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    dr: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    replicates: usize,
    #[arg(long, default_value_t = 199)]
    permutations: usize,
    #[arg(long)]
    seed: u64,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum StudyKind {
    /// Empirical size of the independence test under independent data
    Type1 {
        #[command(flatten)]
        grid: SimGrid,
        #[arg(long, value_enum, default_value = "scls")]
        model: ModelArg,
    },
    /// Empirical power against the linked alternative
    Power {
        #[command(flatten)]
        grid: SimGrid,
        #[arg(long, value_enum, default_value = "scls")]
        model: ModelArg,
    },
    /// Mean estimation error of both models against the generating matrix
    Discrepancy {
        #[command(flatten)]
        grid: SimGrid,
    },
    /// Median fit times of both models
    Benchmark {
        #[command(flatten)]
        grid: SimGrid,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Kld,
    Jsd,
}

#[derive(Args)]
struct CrossvalArgs {
    #[arg(long)]
    response: PathBuf,
    #[arg(long)]
    predictor: PathBuf,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 20)]
    repeats: usize,
    #[arg(long, value_enum, default_value = "kld")]
    metric: MetricArg,
    #[arg(long, value_enum, default_value = "scls")]
    model: ModelArg,
    /// Evaluate a grid of power-transformation parameters, comma separated
    #[arg(long, value_delimiter = ',')]
    alpha_grid: Option<Vec<f64>>,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct BootstrapArgs {
    #[arg(long)]
    response: PathBuf,
    #[arg(long)]
    predictor: PathBuf,
    #[arg(long)]
    n_boot: usize,
    #[arg(long)]
    seed: u64,
    /// Output JSON path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[command(subcommand)]
    kind: PlotKind,
}

#[derive(Subcommand)]
enum PlotKind {
    /// Ternary diagram of coefficient rows (3 response components only)
    Ternary {
        /// Coefficient CSV as written by `fit`
        #[arg(long)]
        coefficients: PathBuf,
        /// Bootstrap JSON from `bootstrap`; adds 95% confidence ellipses
        #[arg(long)]
        ellipses: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Entropy surface over the 3-part simplex
    Entropy {
        #[arg(long)]
        out: PathBuf,
    },
}

/// A failure carrying its machine-readable code and process exit status.
struct AppError {
    code: &'static str,
    detail: String,
    exit: u8,
}

impl AppError {
    fn usage(code: &'static str, detail: impl ToString) -> Self {
        Self {
            code,
            detail: detail.to_string(),
            exit: 2,
        }
    }

    fn numerical(code: &'static str, detail: impl ToString) -> Self {
        Self {
            code,
            detail: detail.to_string(),
            exit: 3,
        }
    }
}

impl From<FitError> for AppError {
    fn from(e: FitError) -> Self {
        match &e {
            FitError::Qp(q) => match q {
                QpError::BadShape(_) | QpError::NotSymmetric(_) => Self::usage("BadInput", e),
                _ => Self::numerical("Solver", e),
            },
            FitError::NoConvergence(_) => Self::numerical("NoConvergence", e),
            FitError::Simplex(_) => Self::usage("BadComposition", e),
            _ => Self::usage("BadInput", e),
        }
    }
}

impl From<TflrError> for AppError {
    fn from(e: TflrError) -> Self {
        match e {
            TflrError::ZeroFittedCell { .. } => Self::usage("ZeroFittedCell", e),
            TflrError::NoConvergence(_) => Self::numerical("NoConvergence", e),
            TflrError::Fit(f) => f.into(),
        }
    }
}

impl From<InferenceError> for AppError {
    fn from(e: InferenceError) -> Self {
        match e {
            InferenceError::Fit(f) => f.into(),
            InferenceError::Tflr(t) => t.into(),
            InferenceError::DegenerateScatter(_, _) => Self::numerical("DegenerateScatter", e),
            InferenceError::Simplex(_) => Self::usage("BadComposition", e),
            _ => Self::usage("BadInput", e),
        }
    }
}

impl From<SimError> for AppError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Fit(f) => f.into(),
            SimError::Tflr(t) => t.into(),
            SimError::Inference(i) => i.into(),
            SimError::Simplex(_) => Self::usage("BadComposition", e),
            _ => Self::usage("BadInput", e),
        }
    }
}

impl From<IoError> for AppError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Fit(f) => f.into(),
            IoError::Simplex(_) => Self::usage("BadComposition", e),
            IoError::Io(_) => Self::usage("Io", e),
            _ => Self::usage("BadInput", e),
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        Self::usage("Io", e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("SCLS_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(k) = threads {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ERROR {}: {}", e.code, e.detail);
            ExitCode::from(e.exit)
        }
    }
}

fn dispatch(command: Command) -> Result<(), AppError> {
    match command {
        Command::Fit(args) => cmd_fit(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Test(args) => cmd_test(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Crossval(args) => cmd_crossval(args),
        Command::Bootstrap(args) => cmd_bootstrap(args),
        Command::Plot(args) => cmd_plot(args),
    }
}

fn read_matrix(path: &Path) -> Result<CompositionMatrix, AppError> {
    Ok(read_composition_csv(path, &ReadOptions::default())?.matrix)
}

fn coefficient_json(b: &CoefficientMatrix) -> serde_json::Value {
    let values: Vec<Vec<f64>> = b
        .as_array()
        .rows()
        .into_iter()
        .map(|r| r.to_vec())
        .collect();
    serde_json::json!({
        "predictor_names": b.predictor_names(),
        "response_names": b.response_names(),
        "values": values,
    })
}

fn write_fit_outputs(
    out: &Path,
    coefficients: &[(String, CoefficientMatrix)],
    fitted: &CompositionMatrix,
    json: serde_json::Value,
    mut manifest: RunManifest,
    inputs: &[&Path],
) -> Result<(), AppError> {
    std::fs::create_dir_all(out)?;
    for (suffix, b) in coefficients {
        let name = if suffix.is_empty() {
            "coefficients.csv".to_string()
        } else {
            format!("coefficients_{suffix}.csv")
        };
        let file = std::fs::File::create(out.join(name))?;
        write_coefficient_csv(file, b)?;
    }
    std::fs::write(
        out.join("coefficients.json"),
        serde_json::to_string_pretty(&json).expect("fit result serializes") + "\n",
    )?;
    let file = std::fs::File::create(out.join("fitted.csv"))?;
    write_composition_csv(file, fitted)?;
    for p in inputs {
        manifest.add_input(p)?;
    }
    manifest.write(&out.join("manifest.json"))?;
    Ok(())
}

fn single_fit_json(model: &str, fit: &SclsFit) -> serde_json::Value {
    serde_json::json!({
        "model": model,
        "alpha": fit.alpha,
        "loss": fit.loss,
        "coefficients": coefficient_json(fit.coefficient_matrix()),
    })
}

fn cmd_fit(args: FitArgs) -> Result<(), AppError> {
    if args.lag1 {
        return fit_lag1(args);
    }
    if args.predictor.is_empty() {
        return Err(AppError::usage(
            "BadInput",
            "at least one --predictor file is required",
        ));
    }
    let y = read_matrix(&args.response)?;
    let xs: Vec<CompositionMatrix> = args
        .predictor
        .iter()
        .map(|p| read_matrix(p))
        .collect::<Result<_, _>>()?;
    let manifest = RunManifest::new("fit", None);
    let mut inputs: Vec<&Path> = vec![&args.response];
    inputs.extend(args.predictor.iter().map(PathBuf::as_path));

    if xs.len() > 1 {
        if args.model == ModelArg::Tflr {
            return Err(AppError::usage(
                "BadInput",
                "multiple predictors are supported for the scls model only",
            ));
        }
        let refs: Vec<&CompositionMatrix> = xs.iter().collect();
        let fit = if args.weighted {
            fit_weighted(&y, &refs)?
        } else {
            fit_multi(&y, &refs)?
        };
        let (per_predictor, weights) = match &fit.coefficients {
            FittedCoefficients::Multi {
                per_predictor,
                weights,
            } => (per_predictor, weights),
            FittedCoefficients::Single(_) => unreachable!(),
        };
        let named: Vec<(String, CoefficientMatrix)> = per_predictor
            .iter()
            .enumerate()
            .map(|(m, b)| (format!("{}", m + 1), b.clone()))
            .collect();
        let json = serde_json::json!({
            "model": "scls",
            "alpha": fit.alpha,
            "loss": fit.loss,
            "weights": weights.as_array().to_vec(),
            "per_predictor": per_predictor.iter().map(coefficient_json).collect::<Vec<_>>(),
        });
        return write_fit_outputs(&args.out, &named, &fit.fitted, json, manifest, &inputs);
    }

    let x = &xs[0];
    match args.model {
        ModelArg::Scls => {
            let fit = fit_alpha_scls(&y, x, args.alpha.unwrap_or(1.0))?;
            let json = single_fit_json("scls", &fit);
            let coefficients = vec![(String::new(), fit.coefficient_matrix().clone())];
            write_fit_outputs(
                &args.out,
                &coefficients,
                &fit.fitted,
                json,
                manifest,
                &inputs,
            )
        }
        ModelArg::Tflr => {
            if args.alpha.is_some_and(|a| a != 1.0) {
                return Err(AppError::usage(
                    "BadInput",
                    "--alpha applies to the scls model only",
                ));
            }
            let fit = fit_tflr(&y, x)?;
            let json = serde_json::json!({
                "model": "tflr",
                "divergence": fit.divergence,
                "iterations": fit.iterations,
                "converged": fit.converged,
                "coefficients": coefficient_json(&fit.coefficients),
            });
            let coefficients = vec![(String::new(), fit.coefficients.clone())];
            write_fit_outputs(
                &args.out,
                &coefficients,
                &fit.fitted,
                json,
                manifest,
                &inputs,
            )
        }
    }
}

fn fit_lag1(args: FitArgs) -> Result<(), AppError> {
    if args.model == ModelArg::Tflr || args.weighted || args.alpha.is_some_and(|a| a != 1.0) {
        return Err(AppError::usage(
            "BadInput",
            "--lag1 supports the plain scls model only",
        ));
    }
    if !args.predictor.is_empty() {
        return Err(AppError::usage(
            "BadInput",
            "--lag1 derives the predictor from the lagged response; drop --predictor",
        ));
    }
    let options = ReadOptions {
        force_closure: false,
        group_column: args.group_column.clone(),
    };
    let table = read_composition_csv(&args.response, &options)?;
    let fit = fit_ar1(&table.matrix, table.groups.as_deref())?;
    let json = single_fit_json("scls-ar1", &fit);
    let coefficients = vec![(String::new(), fit.coefficient_matrix().clone())];
    write_fit_outputs(
        &args.out,
        &coefficients,
        &fit.fitted,
        json,
        RunManifest::new("fit", None),
        &[&args.response],
    )
}

fn cmd_predict(args: PredictArgs) -> Result<(), AppError> {
    let b = read_coefficient_csv(&args.coefficients)?;
    let x = read_matrix(&args.predictor)?;
    if x.ncols() != b.nrows() {
        return Err(AppError::usage(
            "BadInput",
            format!(
                "predictor has {} columns, coefficients expect {}",
                x.ncols(),
                b.nrows()
            ),
        ));
    }
    let raw = x.as_array().dot(b.as_array());
    let pred = CompositionMatrix::with_names(raw, b.response_names().map(<[String]>::to_vec))
        .map_err(IoError::Simplex)?;
    let file = std::fs::File::create(&args.out)?;
    write_composition_csv(file, &pred)?;
    Ok(())
}

fn print_test_result(result: &TestResult, include_replicates: bool) {
    let json = result.to_json(include_replicates);
    println!(
        "{}",
        serde_json::to_string_pretty(&json).expect("test result serializes")
    );
}

fn cmd_test(args: TestArgs) -> Result<(), AppError> {
    match args.kind {
        TestKind::Independence { common, model } => {
            let y = read_matrix(&common.response)?;
            let x = read_matrix(&common.predictor)?;
            let m = match model {
                ModelArg::Scls => inference::Model::Scls,
                ModelArg::Tflr => inference::Model::Tflr,
            };
            let result = test_independence(&y, &x, common.permutations, common.seed, m)?;
            print_test_result(&result, common.include_replicates);
        }
        TestKind::Coefficients { common, b0 } => {
            let y = read_matrix(&common.response)?;
            let x = read_matrix(&common.predictor)?;
            let b0 = read_coefficient_csv(&b0)?;
            let result = test_coefficients(&y, &x, &b0, common.permutations, common.seed)?;
            print_test_result(&result, common.include_replicates);
        }
        TestKind::Amalgamation { common, l1, l2 } => {
            let y = read_matrix(&common.response)?;
            let x = read_matrix(&common.predictor)?;
            let result = test_amalgamation(&y, &x, l1, l2, common.permutations, common.seed)?;
            print_test_result(&result, common.include_replicates);
        }
    }
    Ok(())
}

fn write_table(
    out_dir: &Path,
    name: &str,
    header: &str,
    rows: &[String],
    manifest: RunManifest,
) -> Result<(), AppError> {
    std::fs::create_dir_all(out_dir)?;
    let mut table = String::new();
    let _ = writeln!(table, "{header}");
    for r in rows {
        let _ = writeln!(table, "{r}");
    }
    std::fs::write(out_dir.join(name), table)?;
    manifest.write(&out_dir.join("manifest.json"))?;
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), AppError> {
    match args.study {
        StudyKind::Type1 { grid, model } => {
            let m = match model {
                ModelArg::Scls => inference::Model::Scls,
                ModelArg::Tflr => inference::Model::Tflr,
            };
            let mut rows = Vec::new();
            for &n in &grid.n {
                for &d_r in &grid.dr {
                    let cfg = SimConfig::new(n, d_r, grid.replicates, grid.permutations, grid.seed);
                    let rate = run_type1(&cfg, m)?;
                    rows.push(format!(
                        "{n},{d_r},{},{}",
                        model_name(model),
                        io::format_sig6(rate)
                    ));
                }
            }
            write_table(
                &grid.out,
                "type1.csv",
                "n,d_r,model,rejection_rate",
                &rows,
                RunManifest::new("simulate type1", Some(grid.seed)),
            )
        }
        StudyKind::Power { grid, model } => {
            let m = match model {
                ModelArg::Scls => inference::Model::Scls,
                ModelArg::Tflr => inference::Model::Tflr,
            };
            let mut rows = Vec::new();
            for &n in &grid.n {
                for &d_r in &grid.dr {
                    let b = ground_truth_coefficients(d_r)?;
                    let cfg = SimConfig::new(n, d_r, grid.replicates, grid.permutations, grid.seed);
                    let power = run_power(&cfg, &b, m)?;
                    rows.push(format!(
                        "{n},{d_r},{},{}",
                        model_name(model),
                        io::format_sig6(power)
                    ));
                }
            }
            write_table(
                &grid.out,
                "power.csv",
                "n,d_r,model,power",
                &rows,
                RunManifest::new("simulate power", Some(grid.seed)),
            )
        }
        StudyKind::Discrepancy { grid } => {
            let mut rows = Vec::new();
            for &n in &grid.n {
                for &d_r in &grid.dr {
                    let b = ground_truth_coefficients(d_r)?;
                    let cfg = SimConfig::new(n, d_r, grid.replicates, grid.permutations, grid.seed);
                    let d = run_discrepancy(&cfg, &b)?;
                    rows.push(format!(
                        "{n},{d_r},{},{},{},{},{}",
                        io::format_sig6(d.scls_kld),
                        io::format_sig6(d.scls_l1),
                        io::format_sig6(d.tflr_kld),
                        io::format_sig6(d.tflr_l1),
                        d.clamped_cells
                    ));
                }
            }
            write_table(
                &grid.out,
                "discrepancy.csv",
                "n,d_r,scls_kld,scls_l1,tflr_kld,tflr_l1,clamped_cells",
                &rows,
                RunManifest::new("simulate discrepancy", Some(grid.seed)),
            )
        }
        StudyKind::Benchmark { grid } => {
            let bench = run_benchmark(&grid.n, &grid.dr, grid.seed)?;
            let rows: Vec<String> = bench
                .iter()
                .map(|r| {
                    format!(
                        "{},{},{},{},{}",
                        r.n,
                        r.d_r,
                        io::format_sig6(r.t_scls_ms),
                        io::format_sig6(r.t_tflr_ms),
                        io::format_sig6(r.ratio)
                    )
                })
                .collect();
            write_table(
                &grid.out,
                "benchmark.csv",
                "n,D_r,t_scls_ms,t_tflr_ms,ratio",
                &rows,
                RunManifest::new("simulate benchmark", Some(grid.seed)),
            )
        }
    }
}

fn model_name(m: ModelArg) -> &'static str {
    match m {
        ModelArg::Scls => "scls",
        ModelArg::Tflr => "tflr",
    }
}

fn cmd_crossval(args: CrossvalArgs) -> Result<(), AppError> {
    let y = read_matrix(&args.response)?;
    let x = read_matrix(&args.predictor)?;
    let metric = match args.metric {
        MetricArg::Kld => CvMetric::Kld,
        MetricArg::Jsd => CvMetric::Jsd,
    };
    match &args.alpha_grid {
        Some(alphas) => {
            if args.model == ModelArg::Tflr {
                return Err(AppError::usage(
                    "BadInput",
                    "--alpha-grid applies to the scls model only",
                ));
            }
            let grid = cross_validate_alpha_grid(
                &y,
                &x,
                args.folds,
                args.repeats,
                metric,
                alphas,
                args.seed,
            )?;
            println!("alpha,repeat,value");
            for (alpha, values) in &grid {
                for (rep, v) in values.iter().enumerate() {
                    println!("{alpha},{},{}", rep + 1, io::format_sig6(*v));
                }
            }
        }
        None => {
            let model = match args.model {
                ModelArg::Scls => CvModel::Scls { alpha: 1.0 },
                ModelArg::Tflr => CvModel::Tflr,
            };
            let values =
                cross_validate(&y, &x, args.folds, args.repeats, metric, model, args.seed)?;
            println!("repeat,value");
            for (rep, v) in values.iter().enumerate() {
                println!("{},{}", rep + 1, io::format_sig6(*v));
            }
        }
    }
    Ok(())
}

fn cmd_bootstrap(args: BootstrapArgs) -> Result<(), AppError> {
    let y = read_matrix(&args.response)?;
    let x = read_matrix(&args.predictor)?;
    let boot = bootstrap_coefficients(&y, &x, args.n_boot, args.seed)?;
    let matrices: Vec<Vec<Vec<f64>>> = boot
        .iter()
        .map(|b| {
            b.as_array()
                .rows()
                .into_iter()
                .map(|r| r.to_vec())
                .collect()
        })
        .collect();
    let mut manifest = RunManifest::new("bootstrap", Some(args.seed));
    manifest.add_input(&args.response)?;
    manifest.add_input(&args.predictor)?;
    let json = serde_json::json!({
        "n_boot": args.n_boot,
        "seed": args.seed,
        "matrices": matrices,
    });
    std::fs::write(
        &args.out,
        serde_json::to_string(&json).expect("bootstrap serializes") + "\n",
    )?;
    if let Some(dir) = args.out.parent() {
        let dir = if dir.as_os_str().is_empty() {
            Path::new(".")
        } else {
            dir
        };
        manifest.write(&dir.join("manifest.json"))?;
    }
    Ok(())
}

fn load_bootstrap(path: &Path) -> Result<Vec<CoefficientMatrix>, AppError> {
    let text = std::fs::read_to_string(path)?;
    let json: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| AppError::usage("BadInput", format!("malformed bootstrap JSON: {e}")))?;
    let matrices = json["matrices"]
        .as_array()
        .ok_or_else(|| AppError::usage("BadInput", "bootstrap JSON lacks a matrices array"))?;
    let mut out = Vec::with_capacity(matrices.len());
    for m in matrices {
        let rows = m
            .as_array()
            .ok_or_else(|| AppError::usage("BadInput", "bootstrap matrix is not an array"))?;
        let ncols = rows
            .first()
            .and_then(|r| r.as_array())
            .map(Vec::len)
            .ok_or_else(|| AppError::usage("BadInput", "bootstrap matrix has no rows"))?;
        let mut data = ndarray::Array2::zeros((rows.len(), ncols));
        for (i, row) in rows.iter().enumerate() {
            let row = row
                .as_array()
                .ok_or_else(|| AppError::usage("BadInput", "bootstrap row is not an array"))?;
            for (j, v) in row.iter().enumerate() {
                data[[i, j]] = v
                    .as_f64()
                    .ok_or_else(|| AppError::usage("BadInput", "bootstrap cell is not a number"))?;
            }
        }
        out.push(CoefficientMatrix::new(data)?);
    }
    Ok(out)
}

fn cmd_plot(args: PlotArgs) -> Result<(), AppError> {
    match args.kind {
        PlotKind::Ternary {
            coefficients,
            ellipses,
            out,
        } => {
            let b = read_coefficient_csv(&coefficients)?;
            if b.ncols() != 3 {
                return Err(AppError::usage(
                    "BadInput",
                    format!(
                        "ternary plots need 3 response components, got {}",
                        b.ncols()
                    ),
                ));
            }
            let regions = match &ellipses {
                Some(path) => {
                    let boot = load_bootstrap(path)?;
                    (0..b.nrows())
                        .map(|row| confidence_ellipse(&boot, row, 0.95))
                        .collect::<Result<Vec<_>, _>>()?
                }
                None => Vec::new(),
            };
            std::fs::write(&out, plot::ternary_svg(&b, &regions))?;
        }
        PlotKind::Entropy { out } => {
            std::fs::write(&out, plot::entropy_svg())?;
        }
    }
    Ok(())
}
