//! Command-line front end: single backtests, the experiment grid,
//! ledger diagnostics, and a built-in selftest.
//!
//! Exit codes group failures by where they came from: 1 for configuration
//! problems, 2 for data problems (parsing, alignment, missing history,
//! scheduling, I/O), 3 for numerical problems (solver, shapes, fitting,
//! metrics, model files).

pub mod config;

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

use spofolio_core::backtest::{
    dump_prediction_diagnostics, grid_summary_csv, run_backtest, run_grid, BacktestLedger, Mode,
};
use spofolio_core::interventions::VariantName;
use spofolio_core::market_data::{generate_synthetic_panel, load_panel, MarketPanel};
use spofolio_core::optimizer::{self, DecisionProblem};
use spofolio_core::predictor::{spo_plus_loss, PredictorParams, TrainSample};
use spofolio_core::{metrics, Error, Result};

use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "spofolio",
    about = "Decision-focused portfolio backtesting",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one backtest and print its performance summary.
    Backtest(BacktestArgs),
    /// Sweep lambdas, variants, and seeds; emit an aggregated CSV.
    Grid(GridArgs),
    /// Recompute prediction diagnostics for a stored ledger.
    Diagnose(DiagnoseArgs),
    /// Exercise the solver and loss on built-in fixtures.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Configuration file of `key = value` lines; defaults apply without it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `synthetic` or a directory of per-ticker OHLCV CSV files.
    #[arg(long, default_value = "synthetic")]
    dataset: String,
}

#[derive(Debug, Args)]
struct BacktestArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Prediction source: spo, pto, or mvo.
    #[arg(long)]
    mode: Option<String>,
    /// Pipeline variant: standard, clip, rescale, adj, clip_adj, rescale_adj.
    #[arg(long)]
    variant: Option<String>,
    /// Risk-aversion weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Proportional transaction cost.
    #[arg(long)]
    kappa: Option<f64>,
    /// Seed for the hyperparameter search.
    #[arg(long)]
    seed: Option<u64>,
    /// Hyperparameter candidates per search.
    #[arg(long)]
    hyper_budget: Option<usize>,
    /// Write the rebalance ledger CSV here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GridArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Prediction source: spo, pto, or mvo.
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated lambda sweep, overriding the configuration.
    #[arg(long)]
    lambdas: Option<String>,
    /// Comma-separated variant sweep, overriding the configuration.
    #[arg(long)]
    variants: Option<String>,
    /// Comma-separated seed sweep, overriding the configuration.
    #[arg(long)]
    seeds: Option<String>,
    /// Hyperparameter candidates per search.
    #[arg(long)]
    hyper_budget: Option<usize>,
    /// Write the aggregated summary CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiagnoseArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Ledger CSV produced by `backtest --out`.
    #[arg(long)]
    ledger: PathBuf,
    /// Write the diagnostics CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    /// Write a per-iteration solver residual trace CSV here.
    #[arg(long)]
    solver_trace: Option<PathBuf>,
}

/// Parses arguments and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}

/// Maps an error to the documented exit-code groups.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => 1,
        Error::Parse { .. }
        | Error::Data { .. }
        | Error::Alignment(_)
        | Error::History { .. }
        | Error::Schedule(_)
        | Error::Io(_) => 2,
        Error::Solver(_)
        | Error::Input(_)
        | Error::Fit(_)
        | Error::Shape(_)
        | Error::Metrics(_)
        | Error::ModelFormat(_) => 3,
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Backtest(args) => cmd_backtest(args),
        Command::Grid(args) => cmd_grid(args),
        Command::Diagnose(args) => cmd_diagnose(args),
        Command::Selftest(args) => cmd_selftest(args),
    }
}

fn resolve_config(common: &CommonArgs) -> Result<RunConfig> {
    match &common.config {
        Some(path) => config::load_config(path),
        None => Ok(RunConfig::default()),
    }
}

fn echo_config(config: &RunConfig) {
    eprint!("# resolved configuration\n{}", config.to_config_string());
}

/// Builds the panel named by `--dataset`: the seeded synthetic panel, or a
/// directory holding one `<TICKER>.csv` per asset.
fn load_dataset(config: &RunConfig, spec: &str) -> Result<(String, MarketPanel)> {
    if spec == "synthetic" {
        let (panel, _) = generate_synthetic_panel(
            config.synth_seed,
            config.synth_assets,
            config.synth_days,
            config.synth_signal,
        )?;
        return Ok(("synthetic".to_string(), panel));
    }
    let dir = Path::new(spec);
    if !dir.is_dir() {
        return Err(Error::Data {
            file: spec.to_string(),
            line: 0,
            msg: "dataset must be `synthetic` or a directory of CSV files".into(),
        });
    }
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "csv").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Data {
            file: spec.to_string(),
            line: 0,
            msg: "directory holds no .csv files".into(),
        });
    }
    let tickers: Vec<String> = paths
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().to_string())
                .unwrap_or_default()
        })
        .collect();
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| spec.to_string());
    let panel = load_panel(&paths, &tickers)?;
    Ok((name, panel))
}

fn write_or_print(out: &Option<PathBuf>, content: &str, label: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, content)?;
            eprintln!("{label} written to {}", path.display());
            Ok(())
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn cmd_backtest(args: BacktestArgs) -> Result<()> {
    let mut config = resolve_config(&args.common)?;
    if let Some(mode) = &args.mode {
        config.mode = Mode::parse(mode)?;
    }
    if let Some(variant) = &args.variant {
        config.variant = VariantName::parse(variant)?;
    }
    if let Some(lambda) = args.lambda {
        config.lambda = lambda;
    }
    if let Some(kappa) = args.kappa {
        config.kappa = kappa;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(budget) = args.hyper_budget {
        config.hyper_budget = budget;
    }
    echo_config(&config);

    let (name, panel) = load_dataset(&config, &args.common.dataset)?;
    let ledger = run_backtest(&panel, &config.to_backtest_config())?;
    let summary = ledger.summary(config.annualization)?;

    println!("dataset            {name}");
    println!("mode               {}", config.mode);
    println!("variant            {}", config.variant);
    println!("lambda             {}", config.lambda);
    println!("kappa              {}", config.kappa);
    println!("rebalances         {}", summary.n_periods);
    println!("annual return      {:.6}", summary.ann_return);
    println!("annual volatility  {:.6}", summary.ann_vol);
    println!("sharpe             {:.6}", summary.sharpe);
    println!("max drawdown       {:.6}", summary.max_drawdown);
    println!("mean turnover      {:.6}", summary.mean_turnover);

    if let Some(out) = &args.out {
        ledger.write_csv(out)?;
        eprintln!("ledger written to {}", out.display());
    }
    Ok(())
}

fn cmd_grid(args: GridArgs) -> Result<()> {
    let mut config = resolve_config(&args.common)?;
    if let Some(mode) = &args.mode {
        config.mode = Mode::parse(mode)?;
    }
    if let Some(budget) = args.hyper_budget {
        config.hyper_budget = budget;
    }
    if let Some(lambdas) = &args.lambdas {
        config.lambdas = lambdas
            .split(',')
            .map(|part| {
                part.trim().parse::<f64>().map_err(|e| Error::Config {
                    key: "lambdas".into(),
                    msg: format!("bad value `{part}`: {e}"),
                })
            })
            .collect::<Result<_>>()?;
    }
    if let Some(variants) = &args.variants {
        config.variants = variants
            .split(',')
            .map(VariantName::parse)
            .collect::<Result<_>>()?;
    }
    if let Some(seeds) = &args.seeds {
        config.seeds = seeds
            .split(',')
            .map(|part| {
                part.trim().parse::<u64>().map_err(|e| Error::Config {
                    key: "seeds".into(),
                    msg: format!("bad value `{part}`: {e}"),
                })
            })
            .collect::<Result<_>>()?;
    }
    echo_config(&config);

    let dataset = load_dataset(&config, &args.common.dataset)?;
    let outcomes = run_grid(&[dataset], &config.to_grid_spec())?;
    for o in &outcomes {
        if let Err(e) = &o.summary {
            eprintln!(
                "cell failed: dataset={} lambda={} variant={} seed={}: {e}",
                o.dataset, o.lambda, o.variant, o.seed
            );
        }
    }
    write_or_print(&args.out, &grid_summary_csv(&outcomes), "grid summary")
}

fn cmd_diagnose(args: DiagnoseArgs) -> Result<()> {
    let config = resolve_config(&args.common)?;
    let ledger = BacktestLedger::read_csv(&args.ledger)?;
    let (_, panel) = load_dataset(&config, &args.common.dataset)?;
    let dump = dump_prediction_diagnostics(&ledger, &panel)?;
    write_or_print(&args.out, &dump, "diagnostics")
}

fn cmd_selftest(args: SelftestArgs) -> Result<()> {
    use spofolio_core::nalgebra::{DMatrix, DVector};

    // Ranking through the optimizer: the best score takes the whole budget.
    let problem = DecisionProblem::new(
        DVector::from_row_slice(&[0.3, 0.1, -0.2]),
        DMatrix::zeros(3, 3),
        0.0,
        0.0,
        DVector::from_element(3, 1.0 / 3.0),
    )?;
    let result = optimizer::solve(&problem, 1e-8)?;
    expect(
        (result.weights[0] - 1.0).abs() < 1e-7 && result.objective > 0.29999,
        "solver ranks the best asset first",
    )?;
    let report = optimizer::verify_kkt(&problem, &result, 1e-6)?;
    expect(report.passed, "solver optimality conditions hold")?;

    if let Some(path) = &args.solver_trace {
        let (_, rows) = optimizer::solve_traced(&problem, 1e-8)?;
        std::fs::write(path, optimizer::trace_to_csv(&rows))?;
        eprintln!("solver trace written to {}", path.display());
    }

    // Decision loss on the crossed fixture: misranking two assets whose
    // returns differ by 0.1 costs 0.3 with gradient magnitude 2.
    let sample = TrainSample {
        features: vec![DVector::zeros(1), DVector::zeros(1)],
        realized: DVector::from_row_slice(&[0.1, 0.0]),
        sigma: DMatrix::zeros(2, 2),
        w_anchor: DVector::from_element(2, 0.5),
    };
    let params = PredictorParams {
        theta: DVector::zeros(1),
        bias: DVector::from_row_slice(&[0.0, 0.1]),
    };
    let (loss, grad) = spo_plus_loss(&params, &sample, 0.0, 0.0)?;
    expect(
        (loss - 0.3).abs() < 1e-6 && (grad.bias[0] + 2.0).abs() < 1e-4,
        "decision loss matches the crossed fixture",
    )?;
    let truthful = PredictorParams {
        theta: DVector::zeros(1),
        bias: sample.realized.clone(),
    };
    let (zero_loss, _) = spo_plus_loss(&truthful, &sample, 0.0, 0.0)?;
    expect(zero_loss == 0.0, "decision loss vanishes at the truth")?;

    // Performance summary fixture.
    let summary = metrics::summarize(
        &[0.1, -0.2, 0.05],
        &[0.0, 0.0, 0.0],
        metrics::Annualization::Geometric,
    )?;
    expect(
        (summary.max_drawdown + 0.2).abs() < 1e-12,
        "drawdown matches the wealth-curve fixture",
    )?;

    println!("selftest: all checks passed");
    Ok(())
}

fn expect(ok: bool, what: &str) -> Result<()> {
    if ok {
        println!("selftest: {what}");
        Ok(())
    } else {
        Err(Error::Solver(format!("selftest failed: {what}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Vec<String> {
        std::iter::once("spofolio")
            .chain(list.iter().copied())
            .map(String::from)
            .collect()
    }

    #[test]
    fn exit_codes_group_errors_by_origin() {
        assert_eq!(
            exit_code_for(&Error::Config {
                key: "x".into(),
                msg: "bad".into()
            }),
            1
        );
        assert_eq!(
            exit_code_for(&Error::Parse {
                file: "f".into(),
                line: 1,
                msg: "bad".into()
            }),
            2
        );
        assert_eq!(exit_code_for(&Error::Alignment("x".into())), 2);
        assert_eq!(
            exit_code_for(&Error::History {
                needed: 2,
                available: 1,
                context: "x".into()
            }),
            2
        );
        assert_eq!(exit_code_for(&Error::Schedule("x".into())), 2);
        assert_eq!(exit_code_for(&Error::Solver("x".into())), 3);
        assert_eq!(exit_code_for(&Error::Input("x".into())), 3);
        assert_eq!(exit_code_for(&Error::Fit("x".into())), 3);
        assert_eq!(exit_code_for(&Error::Metrics("x".into())), 3);
        assert_eq!(exit_code_for(&Error::ModelFormat("x".into())), 3);
    }

    #[test]
    fn selftest_passes() {
        assert_eq!(run(args(&["selftest"])), 0);
    }

    #[test]
    fn selftest_writes_a_solver_trace() {
        let dir = tempfile::tempdir().unwrap();
        let trace = dir.path().join("trace.csv");
        assert_eq!(
            run(args(&["selftest", "--solver-trace", trace.to_str().unwrap()])),
            0
        );
        let text = std::fs::read_to_string(&trace).unwrap();
        assert!(text.starts_with("iter,r_dual,r_eq,r_ineq,gap\n"));
        assert!(text.lines().count() > 2);
    }

    #[test]
    fn help_exits_cleanly() {
        assert_eq!(run(args(&["--help"])), 0);
    }

    #[test]
    fn unknown_flags_are_usage_errors() {
        assert_eq!(run(args(&["backtest", "--bogus"])), 1);
    }

    #[test]
    fn missing_config_file_maps_to_exit_one() {
        assert_eq!(
            run(args(&[
                "backtest",
                "--config",
                "/nonexistent/config.txt"
            ])),
            1
        );
    }

    #[test]
    fn backtest_ledger_diagnose_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("run.conf");
        std::fs::write(
            &config_path,
            "mode = pto\nsynth_assets = 3\nsynth_days = 480\nhyper_budget = 1\n\
             hyper_refresh_months = 100\nlambda = 10\n",
        )
        .unwrap();
        let ledger_path = dir.path().join("ledger.csv");
        assert_eq!(
            run(args(&[
                "backtest",
                "--config",
                config_path.to_str().unwrap(),
                "--out",
                ledger_path.to_str().unwrap(),
            ])),
            0
        );
        let ledger = BacktestLedger::read_csv(&ledger_path).unwrap();
        assert!(!ledger.records.is_empty());

        let diag_path = dir.path().join("diag.csv");
        assert_eq!(
            run(args(&[
                "diagnose",
                "--config",
                config_path.to_str().unwrap(),
                "--ledger",
                ledger_path.to_str().unwrap(),
                "--out",
                diag_path.to_str().unwrap(),
            ])),
            0
        );
        let dump = std::fs::read_to_string(&diag_path).unwrap();
        assert!(dump.starts_with("# spofolio-diagnostics v1"));
    }

    #[test]
    fn grid_writes_the_aggregated_csv() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("run.conf");
        std::fs::write(
            &config_path,
            "mode = pto\nsynth_assets = 3\nsynth_days = 480\nhyper_budget = 1\n\
             hyper_refresh_months = 100\n",
        )
        .unwrap();
        let out_path = dir.path().join("grid.csv");
        assert_eq!(
            run(args(&[
                "grid",
                "--config",
                config_path.to_str().unwrap(),
                "--lambdas",
                "1,20",
                "--variants",
                "standard",
                "--seeds",
                "1",
                "--out",
                out_path.to_str().unwrap(),
            ])),
            0
        );
        let csv = std::fs::read_to_string(&out_path).unwrap();
        assert!(csv.starts_with("dataset,lambda,variant,"));
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.contains("synthetic,1,standard,"));
        assert!(csv.contains("synthetic,20,standard,"));
    }

    #[test]
    fn cli_dataset_must_exist() {
        assert_eq!(run(args(&["backtest", "--dataset", "/no/such/dir"])), 2);
    }
}
