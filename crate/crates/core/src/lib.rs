//! Decision-focused portfolio backtesting engine.
//!
//! The crate is organized as a pipeline: daily bars are aligned onto a shared
//! calendar ([`market_data`]), turned into technical features ([`features`]),
//! fed to a linear return predictor trained either on squared error or on the
//! downstream decision loss ([`predictor`]), and mapped to portfolio weights
//! by a mean-variance optimizer with an L1 transaction-cost term
//! ([`optimizer`]). Decision-time transforms such as clipping, rescaling, and
//! partial adjustment live in [`interventions`]; the monthly rolling backtest
//! and the experiment grid in [`backtest`]; performance summaries in
//! [`metrics`].

pub use nalgebra;

pub mod backtest;
pub mod error;
pub mod features;
pub mod interventions;
pub mod market_data;
pub mod metrics;
pub mod optimizer;
pub mod predictor;

pub use backtest::{
    dump_prediction_diagnostics, grid_summary_csv, rebalance_schedule, run_backtest, run_grid,
    BacktestConfig, BacktestLedger, GridOutcome, GridSpec, Mode, RebalanceRecord, ScheduleEntry,
};
pub use error::{Error, Result};
pub use features::{FeatureRow, Standardizer, FEATURE_COUNT, FEATURE_NAMES, MIN_FEATURE_HISTORY};
pub use interventions::{PostHook, VariantName, VariantSpec};
pub use market_data::{
    estimate_covariance, generate_synthetic_panel, load_panel, trailing_mean_monthly_return, Bar,
    CovarianceEstimate, MarketPanel, PlantedModel,
};
pub use metrics::{max_drawdown, summarize, Annualization, PerformanceSummary};
pub use optimizer::{
    oracle_decision, solve, solve_traced, trace_to_csv, verify_kkt, DecisionProblem,
    DecisionResult, KktCase, KktReport, SolveStatus, TraceRow, DEFAULT_TOL,
};
pub use predictor::{
    decision_regret, load_model, predict, save_model, search_hyperparams, spo_plus_loss, train,
    Hyperparams, LossGrad, PredictorParams, SearchOutcome, TrainObjective, TrainSample,
    TrainedModel,
};
