//! Monthly rolling backtest and the experiment grid.
//!
//! Rebalancing happens on the first trading day of each eligible month. A
//! month is complete when the panel holds at least [`MIN_MONTH_DAYS`] trading
//! days for it; a month is eligible for a decision when its year is past the
//! warm-up year and enough complete months precede it to fill the training
//! and validation windows. Each decision realizes over the span from its
//! own date to the next month's first trading day, or to the final panel
//! date when no later month exists.
//!
//! The trading loop never sees future data: features and risk estimates are
//! computed as of the decision date, and every training month's target is a
//! return that has fully realized by then.

use chrono::{Datelike, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::{compute_feature_row, FeatureRow, Standardizer, MIN_FEATURE_HISTORY};
use crate::interventions::{PostHook, VariantName, VariantSpec};
use crate::market_data::{estimate_covariance, trailing_mean_monthly_return, MarketPanel};
use crate::metrics::{summarize, Annualization, PerformanceSummary};
use crate::optimizer::{self, DecisionProblem};
use crate::predictor::{
    self, predict, search_hyperparams, Hyperparams, TrainObjective, TrainSample,
};

/// Minimum trading days for a month to count as complete.
pub const MIN_MONTH_DAYS: usize = 15;

/// Smallest covariance window accepted for a training sample; months with
/// less history are skipped.
const MIN_SAMPLE_COV_WINDOW: usize = 30;

/// What produces the return predictions fed to the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Predictor trained on decision loss.
    Spo,
    /// Predictor trained on squared error.
    Pto,
    /// No predictor: trailing mean returns, the plain mean-variance baseline.
    MvoBaseline,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Spo => "spo",
            Mode::Pto => "pto",
            Mode::MvoBaseline => "mvo",
        }
    }

    pub fn parse(s: &str) -> Result<Mode> {
        match s.trim() {
            "spo" => Ok(Mode::Spo),
            "pto" => Ok(Mode::Pto),
            "mvo" => Ok(Mode::MvoBaseline),
            other => Err(Error::Config {
                key: "mode".into(),
                msg: format!("unknown mode {other:?}; expected spo, pto, or mvo"),
            }),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything one backtest run depends on besides the panel itself.
#[derive(Debug, Clone)]
pub struct BacktestConfig {
    pub mode: Mode,
    pub variant: VariantSpec,
    pub lambda: f64,
    pub kappa: f64,
    pub train_months: usize,
    pub val_months: usize,
    /// Decisions only happen in years strictly after this one.
    pub warmup_year: i32,
    pub cov_window: usize,
    pub cov_ridge: f64,
    pub hyper_budget: usize,
    /// Hyperparameters are re-searched every this many rebalances.
    pub hyper_refresh_months: usize,
    pub seed: u64,
    pub solve_tol: f64,
}

impl BacktestConfig {
    fn check(&self) -> Result<()> {
        if self.train_months == 0 || self.val_months == 0 {
            return Err(Error::Input(format!(
                "training and validation windows must be non-empty, got {}/{}",
                self.train_months, self.val_months
            )));
        }
        if self.cov_window < 2 {
            return Err(Error::Input(format!(
                "covariance window {} is too short",
                self.cov_window
            )));
        }
        if self.hyper_budget == 0 || self.hyper_refresh_months == 0 {
            return Err(Error::Input(
                "hyperparameter budget and refresh interval must be at least 1".into(),
            ));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Input(format!("lambda {} must be >= 0", self.lambda)));
        }
        if !self.kappa.is_finite() || self.kappa < 0.0 {
            return Err(Error::Input(format!("kappa {} must be >= 0", self.kappa)));
        }
        if !(self.solve_tol > 0.0) {
            return Err(Error::Input(format!(
                "solve tolerance {} must be positive",
                self.solve_tol
            )));
        }
        Ok(())
    }

    fn canonical_string(&self) -> String {
        let hook = match self.variant.post_hook {
            PostHook::Identity => "identity".to_string(),
            PostHook::PartialAdjust { delta } => format!("partial_adjust:{delta}"),
        };
        format!(
            "mode={} variant={} clip={:?} rescale={:?} hook={hook} lambda={} kappa={} \
             train={} val={} warmup={} cov_window={} cov_ridge={} budget={} refresh={} \
             seed={} tol={}",
            self.mode,
            self.variant.name,
            self.variant.clip_gamma,
            self.variant.rescale_c,
            self.lambda,
            self.kappa,
            self.train_months,
            self.val_months,
            self.warmup_year,
            self.cov_window,
            self.cov_ridge,
            self.hyper_budget,
            self.hyper_refresh_months,
            self.seed,
            self.solve_tol,
        )
    }

    /// FNV-1a hash of the resolved configuration, stamped into ledgers so a
    /// stored run can be matched back to the settings that produced it.
    pub fn hash_hex(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.canonical_string().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}

#[derive(Debug, Clone, Copy)]
struct MonthInfo {
    year: i32,
    month: u32,
    first_idx: usize,
    days: usize,
}

fn month_table(panel: &MarketPanel) -> Vec<MonthInfo> {
    let mut out: Vec<MonthInfo> = Vec::new();
    for (idx, d) in panel.calendar().iter().enumerate() {
        match out.last_mut() {
            Some(m) if m.year == d.year() && m.month == d.month() => m.days += 1,
            _ => out.push(MonthInfo {
                year: d.year(),
                month: d.month(),
                first_idx: idx,
                days: 1,
            }),
        }
    }
    out
}

/// One planned rebalance: when the decision is made and over which span its
/// return realizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleEntry {
    pub decision_index: usize,
    pub decision_date: NaiveDate,
    pub realization_index: usize,
    pub realization_date: NaiveDate,
}

/// Plans the rebalance dates for a panel.
///
/// `min_prior_months` is the number of complete months that must exist
/// strictly before a decision month (the training plus validation span).
pub fn rebalance_schedule(
    panel: &MarketPanel,
    warmup_year: i32,
    min_prior_months: usize,
) -> Result<Vec<ScheduleEntry>> {
    let months = month_table(panel);
    let mut entries = Vec::new();
    for (j, m) in months.iter().enumerate() {
        if m.days < MIN_MONTH_DAYS || m.year <= warmup_year {
            continue;
        }
        let prior_complete = months[..j]
            .iter()
            .filter(|p| p.days >= MIN_MONTH_DAYS)
            .count();
        if prior_complete < min_prior_months {
            continue;
        }
        let realization_index = months
            .get(j + 1)
            .map(|next| next.first_idx)
            .unwrap_or(panel.n_days() - 1);
        entries.push(ScheduleEntry {
            decision_index: m.first_idx,
            decision_date: panel.calendar()[m.first_idx],
            realization_index,
            realization_date: panel.calendar()[realization_index],
        });
    }
    Ok(entries)
}

/// One executed rebalance, in the exact shape the ledger CSV stores.
#[derive(Debug, Clone, PartialEq)]
pub struct RebalanceRecord {
    pub date: NaiveDate,
    /// Raw model predictions.
    pub r_hat: DVector<f64>,
    /// Predictions after the variant's transform.
    pub r_tilde: DVector<f64>,
    /// Optimizer output before the post hook.
    pub w_target: DVector<f64>,
    /// Portfolio actually held after this rebalance.
    pub w_held: DVector<f64>,
    /// Half the L1 distance between consecutive held portfolios.
    pub turnover: f64,
    pub gross: f64,
    pub net: f64,
    pub cost: f64,
}

const LEDGER_MAGIC: &str = "# spofolio-ledger v1";
const LEDGER_CSV_HEADER: &str =
    "date,ticker,r_hat,r_tilde,w_target,w_held,turnover,gross,net,cost";

/// Full record of one backtest run.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestLedger {
    pub seed: u64,
    pub config_hash: String,
    pub tickers: Vec<String>,
    pub records: Vec<RebalanceRecord>,
}

impl BacktestLedger {
    pub fn net_returns(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.net).collect()
    }

    pub fn turnovers(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.turnover).collect()
    }

    pub fn summary(&self, annualization: Annualization) -> Result<PerformanceSummary> {
        summarize(&self.net_returns(), &self.turnovers(), annualization)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = format!(
            "{LEDGER_MAGIC} seed={} config_hash={}\n{LEDGER_CSV_HEADER}\n",
            self.seed, self.config_hash
        );
        for rec in &self.records {
            for (i, ticker) in self.tickers.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{}\n",
                    rec.date,
                    ticker,
                    rec.r_hat[i],
                    rec.r_tilde[i],
                    rec.w_target[i],
                    rec.w_held[i],
                    rec.turnover,
                    rec.gross,
                    rec.net,
                    rec.cost
                ));
            }
        }
        out
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<BacktestLedger> {
        let text = std::fs::read_to_string(&path)?;
        Self::parse_csv(&text, &path.as_ref().display().to_string())
    }

    pub fn from_csv_str(text: &str) -> Result<BacktestLedger> {
        Self::parse_csv(text, "<ledger>")
    }

    fn parse_csv(text: &str, label: &str) -> Result<BacktestLedger> {
        let err = |line: u64, msg: String| Error::Parse {
            file: label.to_string(),
            line,
            msg,
        };
        let mut lines = text.lines();
        let meta = lines.next().ok_or_else(|| err(1, "empty ledger".into()))?;
        let meta_rest = meta
            .strip_prefix(LEDGER_MAGIC)
            .ok_or_else(|| err(1, format!("bad ledger marker `{meta}`")))?;
        let mut seed = None;
        let mut config_hash = None;
        for token in meta_rest.split_whitespace() {
            match token.split_once('=') {
                Some(("seed", v)) => {
                    seed = Some(v.parse::<u64>().map_err(|e| err(1, format!("bad seed: {e}")))?)
                }
                Some(("config_hash", v)) => config_hash = Some(v.to_string()),
                _ => return Err(err(1, format!("unexpected metadata token `{token}`"))),
            }
        }
        let (Some(seed), Some(config_hash)) = (seed, config_hash) else {
            return Err(err(1, "metadata must carry seed and config_hash".into()));
        };

        let header = lines.next().ok_or_else(|| err(2, "missing header".into()))?;
        if header != LEDGER_CSV_HEADER {
            return Err(err(2, format!("header `{header}`, expected `{LEDGER_CSV_HEADER}`")));
        }

        let mut tickers: Vec<String> = Vec::new();
        let mut records: Vec<RebalanceRecord> = Vec::new();
        let mut group: Vec<(String, [f64; 8])> = Vec::new();
        let mut group_date: Option<NaiveDate> = None;

        let flush = |date: NaiveDate,
                     group: &[(String, [f64; 8])],
                     tickers: &mut Vec<String>,
                     records: &mut Vec<RebalanceRecord>,
                     line: u64|
         -> Result<()> {
            let names: Vec<String> = group.iter().map(|(t, _)| t.clone()).collect();
            if tickers.is_empty() {
                *tickers = names;
            } else if *tickers != names {
                return Err(Error::Parse {
                    file: label.to_string(),
                    line,
                    msg: format!("ticker block for {date} does not match the first block"),
                });
            }
            let column = |k: usize| DVector::from_iterator(group.len(), group.iter().map(|(_, v)| v[k]));
            let scalars = group[0].1;
            for (t, v) in group {
                for k in 4..8 {
                    if v[k] != scalars[k] {
                        return Err(Error::Parse {
                            file: label.to_string(),
                            line,
                            msg: format!("row for {t} on {date} disagrees on shared columns"),
                        });
                    }
                }
            }
            records.push(RebalanceRecord {
                date,
                r_hat: column(0),
                r_tilde: column(1),
                w_target: column(2),
                w_held: column(3),
                turnover: scalars[4],
                gross: scalars[5],
                net: scalars[6],
                cost: scalars[7],
            });
            Ok(())
        };

        for (offset, line) in lines.enumerate() {
            let line_no = offset as u64 + 3;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 10 {
                return Err(err(line_no, format!("{} fields, expected 10", fields.len())));
            }
            let date = NaiveDate::parse_from_str(fields[0], "%Y-%m-%d")
                .map_err(|e| err(line_no, format!("bad date `{}`: {e}", fields[0])))?;
            let mut values = [0.0f64; 8];
            for (k, slot) in values.iter_mut().enumerate() {
                *slot = fields[k + 2]
                    .parse::<f64>()
                    .map_err(|e| err(line_no, format!("bad number `{}`: {e}", fields[k + 2])))?;
            }
            if group_date != Some(date) {
                if let Some(prev) = group_date {
                    flush(prev, &group, &mut tickers, &mut records, line_no)?;
                    group.clear();
                }
                group_date = Some(date);
            }
            group.push((fields[1].to_string(), values));
        }
        if let Some(prev) = group_date {
            let line_no = text.lines().count() as u64;
            flush(prev, &group, &mut tickers, &mut records, line_no)?;
        }
        if records.is_empty() {
            return Err(err(3, "ledger holds no rebalance rows".into()));
        }
        Ok(BacktestLedger {
            seed,
            config_hash,
            tickers,
            records,
        })
    }
}

/// Raw per-month training material before standardization.
struct RawMonth {
    rows: Vec<FeatureRow>,
    realized: DVector<f64>,
    sigma: DMatrix<f64>,
}

fn build_raw_month(
    panel: &MarketPanel,
    months: &[MonthInfo],
    j: usize,
    config: &BacktestConfig,
) -> Result<Option<RawMonth>> {
    let m = months[j];
    let t = m.first_idx;
    if t < MIN_FEATURE_HISTORY {
        return Ok(None);
    }
    let window = config.cov_window.min(t);
    if window < MIN_SAMPLE_COV_WINDOW {
        return Ok(None);
    }
    let date = panel.calendar()[t];
    let next_idx = match months.get(j + 1) {
        Some(next) => next.first_idx,
        None => {
            return Err(Error::Schedule(format!(
                "training month starting {date} has no following month boundary"
            )))
        }
    };
    let mut rows = Vec::with_capacity(panel.n_assets());
    for asset in 0..panel.n_assets() {
        rows.push(compute_feature_row(panel, asset, date)?);
    }
    let sigma = estimate_covariance(panel, date, window, config.cov_ridge)?;
    Ok(Some(RawMonth {
        rows,
        realized: panel.period_returns(t, next_idx),
        sigma: sigma.matrix,
    }))
}

fn to_samples(
    months: &[&RawMonth],
    standardizer: &Standardizer,
    w_anchor: &DVector<f64>,
) -> Vec<TrainSample> {
    months
        .iter()
        .map(|m| TrainSample {
            features: m
                .rows
                .iter()
                .map(|row| DVector::from_row_slice(&standardizer.transform(row)))
                .collect(),
            realized: m.realized.clone(),
            sigma: m.sigma.clone(),
            w_anchor: w_anchor.clone(),
        })
        .collect()
}

fn sanitize_weights(w: &mut DVector<f64>) -> Result<()> {
    for v in w.iter_mut() {
        if *v < 0.0 {
            if *v < -1e-8 {
                return Err(Error::Solver(format!(
                    "weight {v} is negative beyond rounding after post-processing"
                )));
            }
            *v = 0.0;
        }
    }
    let sum = w.sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::Solver(format!("weights sum to {sum}")));
    }
    *w /= sum;
    Ok(())
}

fn l1_distance(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
}

/// Runs one full backtest over the panel.
pub fn run_backtest(panel: &MarketPanel, config: &BacktestConfig) -> Result<BacktestLedger> {
    config.check()?;
    let months = month_table(panel);
    let min_prior = config.train_months + config.val_months;
    let schedule = rebalance_schedule(panel, config.warmup_year, min_prior)?;
    if schedule.is_empty() {
        return Err(Error::Schedule(format!(
            "no eligible rebalance months: need a complete month after year {} with {} complete \
             months before it (panel spans {} to {})",
            config.warmup_year,
            min_prior,
            panel.calendar()[0],
            panel.calendar()[panel.n_days() - 1]
        )));
    }
    let n = panel.n_assets();
    let mut w_held = DVector::from_element(n, 1.0 / n as f64);
    let mut records = Vec::with_capacity(schedule.len());
    let mut cached_hyper: Option<Hyperparams> = None;

    for (d, entry) in schedule.iter().enumerate() {
        let sigma_dec = estimate_covariance(
            panel,
            entry.decision_date,
            config.cov_window,
            config.cov_ridge,
        )?;

        let r_hat = match config.mode {
            Mode::MvoBaseline => {
                trailing_mean_monthly_return(panel, entry.decision_date, config.cov_window)?
            }
            Mode::Spo | Mode::Pto => {
                let objective = match config.mode {
                    Mode::Spo => TrainObjective::DecisionLoss,
                    _ => TrainObjective::SquaredError,
                };
                predict_with_rolling_model(
                    panel, &months, entry, config, objective, &w_held, d, &mut cached_hyper,
                )?
            }
        };

        let r_tilde = config.variant.transform_predictions(&r_hat)?;
        let problem = DecisionProblem::new(
            r_tilde.clone(),
            sigma_dec.matrix.clone(),
            config.lambda,
            config.kappa,
            w_held.clone(),
        )?;
        let solved = optimizer::solve(&problem, config.solve_tol)?;
        let w_target = solved.weights.clone();
        let mut w_new = config.variant.post_hook.apply(&w_target, &w_held)?;
        sanitize_weights(&mut w_new)?;

        let trade = l1_distance(&w_new, &w_held);
        let turnover = 0.5 * trade;
        let cost = config.kappa * trade;
        let realized = panel.period_returns(entry.decision_index, entry.realization_index);
        let gross = w_new.dot(&realized);
        let net = gross - cost;

        records.push(RebalanceRecord {
            date: entry.decision_date,
            r_hat,
            r_tilde,
            w_target,
            w_held: w_new.clone(),
            turnover,
            gross,
            net,
            cost,
        });
        w_held = w_new;
    }

    Ok(BacktestLedger {
        seed: config.seed,
        config_hash: config.hash_hex(),
        tickers: panel.tickers().to_vec(),
        records,
    })
}

/// Builds the rolling training window for one decision, (re)searches
/// hyperparameters on schedule, trains the deployed model on the full window,
/// and predicts the decision date's cross-section.
#[allow(clippy::too_many_arguments)]
fn predict_with_rolling_model(
    panel: &MarketPanel,
    months: &[MonthInfo],
    entry: &ScheduleEntry,
    config: &BacktestConfig,
    objective: TrainObjective,
    w_held: &DVector<f64>,
    decision_number: usize,
    cached_hyper: &mut Option<Hyperparams>,
) -> Result<DVector<f64>> {
    let decision_pos = months
        .iter()
        .position(|m| m.first_idx == entry.decision_index)
        .expect("decision date is a month boundary");
    let window_positions: Vec<usize> = months[..decision_pos]
        .iter()
        .enumerate()
        .filter(|(_, m)| m.days >= MIN_MONTH_DAYS)
        .map(|(j, _)| j)
        .collect();
    let need = config.train_months + config.val_months;
    if window_positions.len() < need {
        return Err(Error::History {
            needed: need,
            available: window_positions.len(),
            context: format!("training window before {}", entry.decision_date),
        });
    }
    let window = &window_positions[window_positions.len() - need..];

    let mut train_raw: Vec<RawMonth> = Vec::new();
    let mut val_raw: Vec<RawMonth> = Vec::new();
    for (k, &j) in window.iter().enumerate() {
        if let Some(raw) = build_raw_month(panel, months, j, config)? {
            if k < config.train_months {
                train_raw.push(raw);
            } else {
                val_raw.push(raw);
            }
        }
    }
    if train_raw.is_empty() || val_raw.is_empty() {
        return Err(Error::History {
            needed: need,
            available: train_raw.len() + val_raw.len(),
            context: format!(
                "usable training/validation months before {} ({} train, {} val)",
                entry.decision_date,
                train_raw.len(),
                val_raw.len()
            ),
        });
    }

    if cached_hyper.is_none() || decision_number % config.hyper_refresh_months == 0 {
        let train_rows: Vec<FeatureRow> = train_raw.iter().flat_map(|m| m.rows.clone()).collect();
        let std_train = Standardizer::fit(&train_rows)?;
        let train_samples = to_samples(&train_raw.iter().collect::<Vec<_>>(), &std_train, w_held);
        let val_samples = to_samples(&val_raw.iter().collect::<Vec<_>>(), &std_train, w_held);
        let search_seed = config
            .seed
            .wrapping_mul(0x9e3779b97f4a7c15)
            .wrapping_add(decision_number as u64);
        let outcome = search_hyperparams(
            objective,
            &train_samples,
            &val_samples,
            config.lambda,
            config.kappa,
            config.hyper_budget,
            search_seed,
        )?;
        *cached_hyper = Some(outcome.best);
    }
    let hyper = cached_hyper.expect("hyperparameters cached above");

    // The deployed model is refit on the whole window, validation included.
    let all_raw: Vec<&RawMonth> = train_raw.iter().chain(val_raw.iter()).collect();
    let all_rows: Vec<FeatureRow> = all_raw.iter().flat_map(|m| m.rows.clone()).collect();
    let standardizer = Standardizer::fit(&all_rows)?;
    let samples = to_samples(&all_raw, &standardizer, w_held);
    let model = predictor::train(objective, &samples, config.lambda, config.kappa, hyper)?;

    let mut decision_features = Vec::with_capacity(panel.n_assets());
    for asset in 0..panel.n_assets() {
        let row = compute_feature_row(panel, asset, entry.decision_date)?;
        decision_features.push(DVector::from_row_slice(&standardizer.transform(&row)));
    }
    predict(&model.params, &decision_features)
}

/// One cell of the experiment grid and what came out of it.
#[derive(Debug)]
pub struct GridOutcome {
    pub dataset: String,
    pub lambda: f64,
    pub variant: VariantName,
    pub seed: u64,
    pub summary: Result<PerformanceSummary>,
}

/// Cartesian experiment grid over datasets, risk aversions, variants, and
/// seeds, sharing everything else from a base configuration.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub lambdas: Vec<f64>,
    pub variants: Vec<VariantName>,
    pub seeds: Vec<u64>,
    pub clip_gamma: f64,
    pub rescale_c: f64,
    pub adjust_delta: f64,
    pub base: BacktestConfig,
}

/// Runs every grid cell, in parallel, and returns outcomes in the
/// deterministic dataset-major, seed-minor order. Failed cells carry their
/// error instead of aborting the rest of the grid.
pub fn run_grid(datasets: &[(String, MarketPanel)], spec: &GridSpec) -> Result<Vec<GridOutcome>> {
    if datasets.is_empty() || spec.lambdas.is_empty() || spec.variants.is_empty() || spec.seeds.is_empty()
    {
        return Err(Error::Input(
            "grid needs at least one dataset, lambda, variant, and seed".into(),
        ));
    }
    let mut cells = Vec::new();
    for (di, _) in datasets.iter().enumerate() {
        for &lambda in &spec.lambdas {
            for &variant in &spec.variants {
                for &seed in &spec.seeds {
                    cells.push((di, lambda, variant, seed));
                }
            }
        }
    }
    Ok(cells
        .into_par_iter()
        .map(|(di, lambda, variant, seed)| {
            let (name, panel) = &datasets[di];
            let mut config = spec.base.clone();
            config.lambda = lambda;
            config.seed = seed;
            config.variant =
                VariantSpec::new(variant, spec.clip_gamma, spec.rescale_c, spec.adjust_delta);
            let summary =
                run_backtest(panel, &config).and_then(|l| l.summary(Annualization::Geometric));
            GridOutcome {
                dataset: name.clone(),
                lambda,
                variant,
                seed,
                summary,
            }
        })
        .collect())
}

/// Aggregates grid outcomes into one CSV row per (dataset, lambda, variant):
/// seed-means of the summary statistics, their standard deviations, and the
/// count of seeds that finished.
pub fn grid_summary_csv(outcomes: &[GridOutcome]) -> String {
    let mut keys: Vec<(String, f64, VariantName)> = Vec::new();
    let mut buckets: Vec<Vec<&PerformanceSummary>> = Vec::new();
    for o in outcomes {
        let key = (o.dataset.clone(), o.lambda, o.variant);
        let idx = match keys
            .iter()
            .position(|k| k.0 == key.0 && k.1.to_bits() == key.1.to_bits() && k.2 == key.2)
        {
            Some(i) => i,
            None => {
                keys.push(key);
                buckets.push(Vec::new());
                keys.len() - 1
            }
        };
        if let Ok(s) = &o.summary {
            buckets[idx].push(s);
        }
    }

    let mut out = String::from(
        "dataset,lambda,variant,ret,vol,to,mdd,sr,ret_std,vol_std,to_std,mdd_std,sr_std,n_seeds\n",
    );
    for (idx, key) in keys.iter().enumerate() {
        let summaries = &buckets[idx];
        let stats = |pick: fn(&PerformanceSummary) -> f64| -> (f64, f64) {
            if summaries.is_empty() {
                return (f64::NAN, f64::NAN);
            }
            let n = summaries.len() as f64;
            let mean = summaries.iter().map(|s| pick(s)).sum::<f64>() / n;
            let var = summaries
                .iter()
                .map(|s| (pick(s) - mean) * (pick(s) - mean))
                .sum::<f64>()
                / n;
            (mean, var.sqrt())
        };
        let (ret, ret_std) = stats(|s| s.ann_return);
        let (vol, vol_std) = stats(|s| s.ann_vol);
        let (to, to_std) = stats(|s| s.mean_turnover);
        let (mdd, mdd_std) = stats(|s| s.max_drawdown);
        let (sr, sr_std) = stats(|s| s.sharpe);
        out.push_str(&format!(
            "{},{},{},{ret},{vol},{to},{mdd},{sr},{ret_std},{vol_std},{to_std},{mdd_std},{sr_std},{}\n",
            key.0,
            key.1,
            key.2,
            summaries.len()
        ));
    }
    out
}

/// Dumps prediction-versus-realization diagnostics for a stored run.
///
/// The ledger does not carry realized per-asset returns, so the panel the
/// run was produced from is required to recompute them over each record's
/// realization span. Emits two sections: per-date cross-sectional means of
/// raw predictions, transformed predictions, and realized returns, then the
/// pooled per-asset rows behind them.
pub fn dump_prediction_diagnostics(
    ledger: &BacktestLedger,
    panel: &MarketPanel,
) -> Result<String> {
    if ledger.tickers != panel.tickers() {
        return Err(Error::Alignment(format!(
            "ledger tickers {:?} do not match panel tickers {:?}",
            ledger.tickers,
            panel.tickers()
        )));
    }
    let months = month_table(panel);
    let mut means = String::from("date,mean_r_hat,mean_r_tilde,mean_realized\n");
    let mut pairs = String::from("date,ticker,r_hat,r_tilde,realized\n");
    for rec in &ledger.records {
        let pos = months
            .iter()
            .position(|m| panel.calendar()[m.first_idx] == rec.date)
            .ok_or_else(|| {
                Error::Input(format!(
                    "ledger date {} is not a month boundary of the panel",
                    rec.date
                ))
            })?;
        let end = months
            .get(pos + 1)
            .map(|m| m.first_idx)
            .unwrap_or(panel.n_days() - 1);
        let realized = panel.period_returns(months[pos].first_idx, end);
        means.push_str(&format!(
            "{},{},{},{}\n",
            rec.date,
            rec.r_hat.mean(),
            rec.r_tilde.mean(),
            realized.mean()
        ));
        for (i, ticker) in ledger.tickers.iter().enumerate() {
            pairs.push_str(&format!(
                "{},{},{},{},{}\n",
                rec.date, ticker, rec.r_hat[i], rec.r_tilde[i], realized[i]
            ));
        }
    }
    Ok(format!(
        "# spofolio-diagnostics v1\n# section means\n{means}# section pairs\n{pairs}"
    ))
}
