//! Flat `key = value` run configuration with defaults for every knob.
//!
//! Unknown keys are rejected so typos fail loudly. `to_config_string`
//! echoes the fully resolved configuration in a form that parses back to an
//! identical value, which is how runs are made reproducible from logs.

use spofolio_core::backtest::{BacktestConfig, GridSpec, Mode};
use spofolio_core::interventions::{VariantName, VariantSpec};
use spofolio_core::metrics::Annualization;
use spofolio_core::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub variant: VariantName,
    pub variants: Vec<VariantName>,
    pub lambda: f64,
    pub lambdas: Vec<f64>,
    pub kappa: f64,
    pub gamma: f64,
    pub rescale_c: f64,
    pub delta: f64,
    pub train_months: usize,
    pub val_months: usize,
    pub warmup_year: i32,
    pub cov_window: usize,
    pub cov_ridge: f64,
    pub hyper_budget: usize,
    pub hyper_refresh_months: usize,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub synth_assets: usize,
    pub synth_days: usize,
    pub synth_seed: u64,
    pub synth_signal: f64,
    pub solve_tol: f64,
    pub annualization: Annualization,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Spo,
            variant: VariantName::Standard,
            variants: VariantName::ALL.to_vec(),
            lambda: 20.0,
            lambdas: vec![0.1, 1.0, 10.0, 20.0, 50.0],
            kappa: 0.002,
            gamma: 0.1,
            rescale_c: 0.1,
            delta: 0.1,
            train_months: 9,
            val_months: 3,
            warmup_year: 2019,
            cov_window: 220,
            cov_ridge: 1e-6,
            hyper_budget: 16,
            hyper_refresh_months: 1,
            seed: 1,
            seeds: vec![1, 2, 3, 4, 5],
            synth_assets: 8,
            synth_days: 780,
            synth_seed: 7,
            synth_signal: 1.0,
            solve_tol: 1e-8,
            annualization: Annualization::Geometric,
        }
    }
}

fn config_err(key: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        msg: msg.into(),
    }
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse::<T>()
        .map_err(|e| config_err(key, format!("bad value `{value}`: {e}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = value
        .split(',')
        .map(|part| parse_scalar(key, part))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(config_err(key, "empty list"));
    }
    Ok(items)
}

/// Parses configuration text on top of the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(config_err(
                "<line>",
                format!("line {}: `{line}` is not `key = value`", idx + 1),
            ));
        };
        let key = key.trim();
        let value = value.trim();
        match key {
            "mode" => config.mode = Mode::parse(value)?,
            "variant" => config.variant = VariantName::parse(value)?,
            "variants" => {
                config.variants = value
                    .split(',')
                    .map(VariantName::parse)
                    .collect::<Result<Vec<_>>>()?;
                if config.variants.is_empty() {
                    return Err(config_err(key, "empty list"));
                }
            }
            "lambda" => config.lambda = parse_scalar(key, value)?,
            "lambdas" => config.lambdas = parse_list(key, value)?,
            "kappa" => config.kappa = parse_scalar(key, value)?,
            "gamma" => config.gamma = parse_scalar(key, value)?,
            "rescale_c" => config.rescale_c = parse_scalar(key, value)?,
            "delta" => config.delta = parse_scalar(key, value)?,
            "train_months" => config.train_months = parse_scalar(key, value)?,
            "val_months" => config.val_months = parse_scalar(key, value)?,
            "warmup_year" => config.warmup_year = parse_scalar(key, value)?,
            "cov_window" => config.cov_window = parse_scalar(key, value)?,
            "cov_ridge" => config.cov_ridge = parse_scalar(key, value)?,
            "hyper_budget" => config.hyper_budget = parse_scalar(key, value)?,
            "hyper_refresh_months" => config.hyper_refresh_months = parse_scalar(key, value)?,
            "seed" => config.seed = parse_scalar(key, value)?,
            "seeds" => config.seeds = parse_list(key, value)?,
            "synth_assets" => config.synth_assets = parse_scalar(key, value)?,
            "synth_days" => config.synth_days = parse_scalar(key, value)?,
            "synth_seed" => config.synth_seed = parse_scalar(key, value)?,
            "synth_signal" => config.synth_signal = parse_scalar(key, value)?,
            "solve_tol" => config.solve_tol = parse_scalar(key, value)?,
            "annualization" => {
                config.annualization = match value {
                    "geometric" => Annualization::Geometric,
                    "arithmetic" => Annualization::Arithmetic,
                    other => {
                        return Err(config_err(
                            key,
                            format!("unknown annualization `{other}`; expected geometric or arithmetic"),
                        ))
                    }
                }
            }
            other => {
                return Err(config_err(
                    other,
                    format!("unknown configuration key on line {}", idx + 1),
                ))
            }
        }
    }
    Ok(config)
}

/// Reads and parses a configuration file.
pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    if !path.exists() {
        return Err(config_err(
            "config",
            format!("configuration file {} does not exist", path.display()),
        ));
    }
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

impl RunConfig {
    /// Echoes the resolved configuration; parsing the result reproduces
    /// `self` exactly.
    pub fn to_config_string(&self) -> String {
        let join_f = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let join_u = |v: &[u64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let variants = self
            .variants
            .iter()
            .map(|v| v.as_str())
            .collect::<Vec<_>>()
            .join(",");
        let annualization = match self.annualization {
            Annualization::Geometric => "geometric",
            Annualization::Arithmetic => "arithmetic",
        };
        format!(
            "mode = {}\nvariant = {}\nvariants = {variants}\nlambda = {}\nlambdas = {}\n\
             kappa = {}\ngamma = {}\nrescale_c = {}\ndelta = {}\ntrain_months = {}\n\
             val_months = {}\nwarmup_year = {}\ncov_window = {}\ncov_ridge = {}\n\
             hyper_budget = {}\nhyper_refresh_months = {}\nseed = {}\nseeds = {}\n\
             synth_assets = {}\nsynth_days = {}\nsynth_seed = {}\nsynth_signal = {}\n\
             solve_tol = {}\nannualization = {annualization}\n",
            self.mode,
            self.variant,
            self.lambda,
            join_f(&self.lambdas),
            self.kappa,
            self.gamma,
            self.rescale_c,
            self.delta,
            self.train_months,
            self.val_months,
            self.warmup_year,
            self.cov_window,
            self.cov_ridge,
            self.hyper_budget,
            self.hyper_refresh_months,
            self.seed,
            join_u(&self.seeds),
            self.synth_assets,
            self.synth_days,
            self.synth_seed,
            self.synth_signal,
            self.solve_tol,
        )
    }

    /// Backtest settings for a single run with this configuration's variant,
    /// lambda, and seed.
    pub fn to_backtest_config(&self) -> BacktestConfig {
        BacktestConfig {
            mode: self.mode,
            variant: VariantSpec::new(self.variant, self.gamma, self.rescale_c, self.delta),
            lambda: self.lambda,
            kappa: self.kappa,
            train_months: self.train_months,
            val_months: self.val_months,
            warmup_year: self.warmup_year,
            cov_window: self.cov_window,
            cov_ridge: self.cov_ridge,
            hyper_budget: self.hyper_budget,
            hyper_refresh_months: self.hyper_refresh_months,
            seed: self.seed,
            solve_tol: self.solve_tol,
        }
    }

    /// Grid settings sweeping this configuration's lambda, variant, and seed
    /// lists.
    pub fn to_grid_spec(&self) -> GridSpec {
        GridSpec {
            lambdas: self.lambdas.clone(),
            variants: self.variants.clone(),
            seeds: self.seeds.clone(),
            clip_gamma: self.gamma,
            rescale_c: self.rescale_c,
            adjust_delta: self.delta,
            base: self.to_backtest_config(),
        }
    }
}
