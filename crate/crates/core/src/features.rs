//! Technical features computed per asset per date, plus cross-sectional
//! standardization.
//!
//! All indicators are computed from adjusted closes (and volumes) up to and
//! including the as-of date, with recursive indicators (EMA, Wilder RSI)
//! anchored at the start of the available series. Feature values therefore
//! never depend on data after the as-of date, which the no-look-ahead tests
//! rely on.

use chrono::NaiveDate;
use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::market_data::MarketPanel;

/// Number of raw technical features, before the ticker one-hot block.
pub const FEATURE_COUNT: usize = 7;

/// Fixed feature order; column order of every dump and coefficient vector.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "log_return",
    "sma10_trend",
    "price_bias",
    "rsi14",
    "macd_diff",
    "bollinger_width",
    "volume_bias",
];

/// Trading days of history required before the as-of date (MACD slow EMA
/// plus its signal line need the longest warm-up).
pub const MIN_FEATURE_HISTORY: usize = 35;

/// Raw feature values for one asset on one date.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub date: NaiveDate,
    pub ticker: String,
    pub values: [f64; FEATURE_COUNT],
}

/// Computes the raw feature vector from a close/volume history whose last
/// element is the as-of day.
///
/// Requires at least [`MIN_FEATURE_HISTORY`] observations before the as-of
/// day, i.e. `closes.len() > MIN_FEATURE_HISTORY`.
pub fn compute_raw_features(closes: &[f64], volumes: &[f64]) -> Result<[f64; FEATURE_COUNT]> {
    if closes.len() != volumes.len() {
        return Err(Error::Shape(format!(
            "{} closes vs {} volumes",
            closes.len(),
            volumes.len()
        )));
    }
    if closes.len() <= MIN_FEATURE_HISTORY {
        return Err(Error::History {
            needed: MIN_FEATURE_HISTORY,
            available: closes.len().saturating_sub(1),
            context: "feature computation".into(),
        });
    }
    let t = closes.len() - 1;
    let c_t = closes[t];

    let log_return = (c_t / closes[t - 1]).ln();

    let sma10_trend = {
        let mut acc = 0.0;
        for k in 0..10 {
            acc += (closes[t - k] / closes[t - k - 1]).ln();
        }
        acc / 10.0
    };

    let price_bias = {
        let sma: f64 = closes[t - 9..=t].iter().sum::<f64>() / 10.0;
        (c_t - sma) / sma
    };

    let rsi14 = wilder_rsi(closes);

    let macd_diff = macd_histogram(closes) / c_t;

    let bollinger_width = {
        let window = &closes[t - 19..=t];
        let mean = window.iter().sum::<f64>() / 20.0;
        let var = window.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / 20.0;
        4.0 * var.sqrt() / mean
    };

    let volume_bias = {
        let sma: f64 = volumes[t - 9..=t].iter().sum::<f64>() / 10.0;
        if sma == 0.0 {
            0.0
        } else {
            (volumes[t] - sma) / sma
        }
    };

    Ok([
        log_return,
        sma10_trend,
        price_bias,
        rsi14,
        macd_diff,
        bollinger_width,
        volume_bias,
    ])
}

/// Wilder-smoothed 14-day RSI over the full series. Zero average loss maps
/// to 100, zero average gain to 0, and a completely flat series to the
/// neutral 50.
fn wilder_rsi(closes: &[f64]) -> f64 {
    const PERIOD: usize = 14;
    let mut gain = 0.0;
    let mut loss = 0.0;
    for k in 1..=PERIOD {
        let d = closes[k] - closes[k - 1];
        gain += d.max(0.0);
        loss += (-d).max(0.0);
    }
    gain /= PERIOD as f64;
    loss /= PERIOD as f64;
    for k in PERIOD + 1..closes.len() {
        let d = closes[k] - closes[k - 1];
        gain = ((PERIOD - 1) as f64 * gain + d.max(0.0)) / PERIOD as f64;
        loss = ((PERIOD - 1) as f64 * loss + (-d).max(0.0)) / PERIOD as f64;
    }
    if gain == 0.0 && loss == 0.0 {
        50.0
    } else if loss == 0.0 {
        100.0
    } else {
        100.0 - 100.0 / (1.0 + gain / loss)
    }
}

/// MACD histogram: (EMA12 - EMA26) minus its 9-day signal EMA, in price
/// units. EMAs are seeded at the first observation.
fn macd_histogram(closes: &[f64]) -> f64 {
    let a12 = 2.0 / 13.0;
    let a26 = 2.0 / 27.0;
    let a9 = 2.0 / 10.0;
    let mut e12 = closes[0];
    let mut e26 = closes[0];
    let mut signal = 0.0;
    let mut macd = 0.0;
    for (k, &c) in closes.iter().enumerate() {
        if k > 0 {
            e12 = a12 * c + (1.0 - a12) * e12;
            e26 = a26 * c + (1.0 - a26) * e26;
        }
        macd = e12 - e26;
        if k == 0 {
            signal = macd;
        } else {
            signal = a9 * macd + (1.0 - a9) * signal;
        }
    }
    macd - signal
}

/// Computes the feature row for one asset as of a calendar date in the panel.
pub fn compute_feature_row(
    panel: &MarketPanel,
    asset: usize,
    asof: NaiveDate,
) -> Result<FeatureRow> {
    if asset >= panel.n_assets() {
        return Err(Error::Shape(format!(
            "asset index {asset} out of range for {} assets",
            panel.n_assets()
        )));
    }
    let idx = panel
        .date_index(asof)
        .ok_or_else(|| Error::Input(format!("asof {asof} not in panel calendar")))?;
    let closes: Vec<f64> = (0..=idx).map(|t| panel.adj_close(asset, t)).collect();
    let volumes: Vec<f64> = (0..=idx).map(|t| panel.bar(asset, t).volume).collect();
    let values = compute_raw_features(&closes, &volumes)?;
    Ok(FeatureRow {
        date: asof,
        ticker: panel.tickers()[asset].clone(),
        values,
    })
}

/// Per-feature affine transform fitted on a training window.
///
/// Uses population statistics. Features whose training-window standard
/// deviation is (numerically) zero are flagged constant and map to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: [f64; FEATURE_COUNT],
    pub std: [f64; FEATURE_COUNT],
    pub constant: [bool; FEATURE_COUNT],
}

impl Standardizer {
    /// Fits means and standard deviations on the supplied rows only.
    pub fn fit(rows: &[FeatureRow]) -> Result<Standardizer> {
        if rows.is_empty() {
            return Err(Error::Fit("cannot fit standardizer on zero rows".into()));
        }
        let n = rows.len() as f64;
        let mut mean = [0.0; FEATURE_COUNT];
        let mut std = [0.0; FEATURE_COUNT];
        let mut constant = [false; FEATURE_COUNT];
        for j in 0..FEATURE_COUNT {
            mean[j] = rows.iter().map(|r| r.values[j]).sum::<f64>() / n;
            let var = rows
                .iter()
                .map(|r| (r.values[j] - mean[j]) * (r.values[j] - mean[j]))
                .sum::<f64>()
                / n;
            std[j] = var.sqrt();
            if std[j] <= 1e-12 * (1.0 + mean[j].abs()) {
                constant[j] = true;
                std[j] = 0.0;
            }
        }
        Ok(Standardizer {
            mean,
            std,
            constant,
        })
    }

    /// Applies `(x - mean) / std` per feature; constant features become 0.
    pub fn transform_values(&self, values: &[f64; FEATURE_COUNT]) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        for j in 0..FEATURE_COUNT {
            out[j] = if self.constant[j] {
                0.0
            } else {
                (values[j] - self.mean[j]) / self.std[j]
            };
        }
        out
    }

    pub fn transform(&self, row: &FeatureRow) -> [f64; FEATURE_COUNT] {
        self.transform_values(&row.values)
    }
}

/// Appends the ticker one-hot block to a (standardized) feature vector,
/// producing the predictor's input of length `FEATURE_COUNT + n_assets`.
pub fn with_one_hot(values: &[f64; FEATURE_COUNT], asset: usize, n_assets: usize) -> DVector<f64> {
    assert!(asset < n_assets, "asset {asset} out of range {n_assets}");
    let mut v = DVector::zeros(FEATURE_COUNT + n_assets);
    for (j, &x) in values.iter().enumerate() {
        v[j] = x;
    }
    v[FEATURE_COUNT + asset] = 1.0;
    v
}

/// Serializes rows for debugging: `date,ticker,feat_1..feat_7`.
pub fn feature_rows_to_csv(rows: &[FeatureRow]) -> String {
    let mut out = String::from("date,ticker");
    for j in 1..=FEATURE_COUNT {
        out.push_str(&format!(",feat_{j}"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&format!("{},{}", row.date, row.ticker));
        for v in row.values {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}
