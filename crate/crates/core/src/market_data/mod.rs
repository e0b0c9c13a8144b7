//! Daily bar ingestion, calendar alignment, and covariance estimation.
//!
//! One CSV per ticker is aligned onto the intersection of trading dates; the
//! resulting [`MarketPanel`] is immutable and every downstream stage reads
//! from it. Covariance is a trailing-window sample estimate of daily returns,
//! scaled to the monthly decision horizon and ridge-regularized.

mod synthetic;

pub use synthetic::{generate_synthetic_panel, PlantedModel, PlantedMonth};

use std::collections::BTreeSet;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Trading days per month used when scaling daily moments to the monthly
/// rebalance horizon.
pub const TRADING_DAYS_PER_MONTH: f64 = 21.0;

/// Expected CSV header for per-ticker bar files.
pub const BAR_CSV_HEADER: &str = "date,open,high,low,close,adj_close,volume";

/// One daily OHLCV bar.
#[derive(Debug, Clone, PartialEq)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub adj_close: f64,
    pub volume: f64,
}

impl Bar {
    /// Validates price positivity, the high/low envelope, and volume sign.
    pub fn new(
        date: NaiveDate,
        open: f64,
        high: f64,
        low: f64,
        close: f64,
        adj_close: f64,
        volume: f64,
    ) -> Result<Self> {
        for (name, v) in [
            ("open", open),
            ("high", high),
            ("low", low),
            ("close", close),
            ("adj_close", adj_close),
            ("volume", volume),
        ] {
            if !v.is_finite() {
                return Err(Error::Input(format!("{name} is not finite on {date}")));
            }
        }
        if open <= 0.0 || high <= 0.0 || low <= 0.0 || close <= 0.0 {
            return Err(Error::Input(format!("non-positive price field on {date}")));
        }
        if adj_close <= 0.0 {
            return Err(Error::Input(format!("non-positive adj_close on {date}")));
        }
        if volume < 0.0 {
            return Err(Error::Input(format!("negative volume on {date}")));
        }
        if low > open.min(close) || high < open.max(close) {
            return Err(Error::Input(format!(
                "high/low do not bracket open/close on {date}"
            )));
        }
        Ok(Bar {
            date,
            open,
            high,
            low,
            close,
            adj_close,
            volume,
        })
    }
}

/// Aligned daily bars for a fixed set of tickers on a shared calendar.
///
/// Immutable after construction. `returns[a][t]` is the simple adj-close
/// return of asset `a` from `calendar[t]` to `calendar[t+1]`.
#[derive(Debug, Clone)]
pub struct MarketPanel {
    tickers: Vec<String>,
    calendar: Vec<NaiveDate>,
    bars: Vec<Vec<Bar>>,
    returns: Vec<Vec<f64>>,
}

impl MarketPanel {
    /// Builds a panel from pre-aligned per-asset bar series.
    ///
    /// Every series must already be on the shared calendar (same length,
    /// matching dates, strictly increasing).
    pub fn from_parts(
        tickers: Vec<String>,
        calendar: Vec<NaiveDate>,
        bars: Vec<Vec<Bar>>,
    ) -> Result<Self> {
        if tickers.is_empty() || tickers.len() != bars.len() {
            return Err(Error::Shape(format!(
                "got {} tickers and {} bar series",
                tickers.len(),
                bars.len()
            )));
        }
        if calendar.len() < 2 {
            return Err(Error::Alignment(format!(
                "calendar has {} dates, need at least 2",
                calendar.len()
            )));
        }
        for w in calendar.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Alignment(format!(
                    "calendar not strictly increasing at {}",
                    w[1]
                )));
            }
        }
        for (ticker, series) in tickers.iter().zip(&bars) {
            if series.len() != calendar.len() {
                return Err(Error::Shape(format!(
                    "{ticker} has {} bars on a {}-day calendar",
                    series.len(),
                    calendar.len()
                )));
            }
            for (bar, date) in series.iter().zip(&calendar) {
                if bar.date != *date {
                    return Err(Error::Alignment(format!(
                        "{ticker} bar dated {} where calendar has {date}",
                        bar.date
                    )));
                }
            }
        }
        let returns = bars
            .iter()
            .map(|series| {
                series
                    .windows(2)
                    .map(|w| w[1].adj_close / w[0].adj_close - 1.0)
                    .collect()
            })
            .collect();
        Ok(MarketPanel {
            tickers,
            calendar,
            bars,
            returns,
        })
    }

    /// Convenience constructor for tests and synthetic data: bars with a flat
    /// intraday envelope and constant volume, built from close series.
    pub fn from_closes(
        tickers: Vec<String>,
        calendar: Vec<NaiveDate>,
        closes: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if tickers.len() != closes.len() {
            return Err(Error::Shape(format!(
                "got {} tickers and {} close series",
                tickers.len(),
                closes.len()
            )));
        }
        let bars = closes
            .iter()
            .map(|series| {
                series
                    .iter()
                    .zip(&calendar)
                    .map(|(&c, &d)| Bar::new(d, c, c, c, c, c, 1.0e6))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        MarketPanel::from_parts(tickers, calendar, bars)
    }

    pub fn n_assets(&self) -> usize {
        self.tickers.len()
    }

    pub fn n_days(&self) -> usize {
        self.calendar.len()
    }

    pub fn tickers(&self) -> &[String] {
        &self.tickers
    }

    pub fn calendar(&self) -> &[NaiveDate] {
        &self.calendar
    }

    pub fn bar(&self, asset: usize, t: usize) -> &Bar {
        &self.bars[asset][t]
    }

    pub fn adj_close(&self, asset: usize, t: usize) -> f64 {
        self.bars[asset][t].adj_close
    }

    /// Daily simple returns of one asset; entry `t` covers calendar `t -> t+1`.
    pub fn daily_returns(&self, asset: usize) -> &[f64] {
        &self.returns[asset]
    }

    /// Index of `date` in the calendar, if present.
    pub fn date_index(&self, date: NaiveDate) -> Option<usize> {
        self.calendar.binary_search(&date).ok()
    }

    /// Simple adj-close return of `asset` between two calendar indices.
    pub fn simple_return(&self, asset: usize, from: usize, to: usize) -> f64 {
        self.adj_close(asset, to) / self.adj_close(asset, from) - 1.0
    }

    /// Per-asset simple returns between two calendar indices.
    pub fn period_returns(&self, from: usize, to: usize) -> DVector<f64> {
        DVector::from_fn(self.n_assets(), |a, _| self.simple_return(a, from, to))
    }

    /// Restricts the panel to calendar dates `<= cutoff`. Used by
    /// no-look-ahead checks.
    pub fn truncate_at(&self, cutoff: NaiveDate) -> Result<MarketPanel> {
        let keep = self.calendar.partition_point(|d| *d <= cutoff);
        if keep < 2 {
            return Err(Error::Alignment(format!(
                "truncation at {cutoff} leaves {keep} dates"
            )));
        }
        MarketPanel::from_parts(
            self.tickers.clone(),
            self.calendar[..keep].to_vec(),
            self.bars.iter().map(|s| s[..keep].to_vec()).collect(),
        )
    }
}

/// Trailing-window covariance of daily returns, scaled to the monthly
/// horizon, with a ridge on the diagonal.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub asof: NaiveDate,
    pub window_days: usize,
    pub ridge: f64,
    pub matrix: DMatrix<f64>,
}

/// Loads one CSV per ticker and aligns them on the intersection of dates.
///
/// Files may be unsorted; they are sorted on load. Duplicate dates within a
/// file, malformed rows, and non-positive adjusted closes are errors carrying
/// the file and line they came from.
pub fn load_panel<P: AsRef<Path>>(paths: &[P], tickers: &[String]) -> Result<MarketPanel> {
    if paths.is_empty() || paths.len() != tickers.len() {
        return Err(Error::Shape(format!(
            "got {} paths and {} tickers",
            paths.len(),
            tickers.len()
        )));
    }
    let mut per_ticker: Vec<Vec<Bar>> = Vec::with_capacity(paths.len());
    for (path, ticker) in paths.iter().zip(tickers) {
        let mut bars = read_bar_csv(path.as_ref())?;
        bars.sort_by_key(|b| b.date);
        for w in bars.windows(2) {
            if w[0].date == w[1].date {
                return Err(Error::Data {
                    file: path.as_ref().display().to_string(),
                    line: 0,
                    msg: format!("duplicate date {} for {ticker}", w[0].date),
                });
            }
        }
        per_ticker.push(bars);
    }

    let mut shared: BTreeSet<NaiveDate> = per_ticker[0].iter().map(|b| b.date).collect();
    for bars in &per_ticker[1..] {
        let dates: BTreeSet<NaiveDate> = bars.iter().map(|b| b.date).collect();
        shared = shared.intersection(&dates).copied().collect();
    }
    if shared.len() < 2 {
        let sizes: Vec<String> = tickers
            .iter()
            .zip(&per_ticker)
            .map(|(t, b)| format!("{t}:{} rows", b.len()))
            .collect();
        return Err(Error::Alignment(format!(
            "only {} shared dates across inputs ({})",
            shared.len(),
            sizes.join(", ")
        )));
    }
    let calendar: Vec<NaiveDate> = shared.into_iter().collect();
    let aligned: Vec<Vec<Bar>> = per_ticker
        .into_iter()
        .map(|bars| {
            bars.into_iter()
                .filter(|b| calendar.binary_search(&b.date).is_ok())
                .collect()
        })
        .collect();
    MarketPanel::from_parts(tickers.to_vec(), calendar, aligned)
}

fn read_bar_csv(path: &Path) -> Result<Vec<Bar>> {
    let file_label = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse {
            file: file_label.clone(),
            line: 0,
            msg: e.to_string(),
        })?;
    {
        let headers = reader.headers().map_err(|e| Error::Parse {
            file: file_label.clone(),
            line: 1,
            msg: e.to_string(),
        })?;
        let got = headers.iter().collect::<Vec<_>>().join(",");
        if got != BAR_CSV_HEADER {
            return Err(Error::Parse {
                file: file_label,
                line: 1,
                msg: format!("header `{got}`, expected `{BAR_CSV_HEADER}`"),
            });
        }
    }
    let mut bars = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            file: file_label.clone(),
            line: 0,
            msg: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let parse_err = |msg: String| Error::Parse {
            file: file_label.clone(),
            line,
            msg,
        };
        if record.len() != 7 {
            return Err(parse_err(format!("{} fields, expected 7", record.len())));
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|e| parse_err(format!("bad date `{}`: {e}", &record[0])))?;
        let mut nums = [0.0f64; 6];
        for (k, slot) in nums.iter_mut().enumerate() {
            *slot = record[k + 1]
                .parse::<f64>()
                .map_err(|e| parse_err(format!("bad number `{}`: {e}", &record[k + 1])))?;
        }
        let bar = Bar::new(date, nums[0], nums[1], nums[2], nums[3], nums[4], nums[5]).map_err(
            |e| Error::Data {
                file: file_label.clone(),
                line,
                msg: e.to_string(),
            },
        )?;
        bars.push(bar);
    }
    Ok(bars)
}

/// Indices of the daily-return window ending with the return realized at
/// `asof`: the last `window_days` observations whose end date is `<= asof`.
fn return_window(panel: &MarketPanel, asof: NaiveDate, window_days: usize) -> Result<(usize, usize)> {
    let idx = panel
        .date_index(asof)
        .ok_or_else(|| Error::Input(format!("asof {asof} not in panel calendar")))?;
    if idx < window_days {
        return Err(Error::History {
            needed: window_days,
            available: idx,
            context: format!("return window ending {asof}"),
        });
    }
    Ok((idx - window_days, idx))
}

/// Sample covariance of daily returns over a trailing window, scaled by
/// trading days per month and ridge-regularized.
///
/// Uses the population divisor. The result is exactly symmetric and its
/// eigenvalues are bounded below by the ridge (up to rounding).
pub fn estimate_covariance(
    panel: &MarketPanel,
    asof: NaiveDate,
    window_days: usize,
    ridge: f64,
) -> Result<CovarianceEstimate> {
    if window_days < 2 {
        return Err(Error::Input(format!(
            "covariance window {window_days} is too short"
        )));
    }
    if !(ridge >= 0.0) {
        return Err(Error::Input(format!("ridge {ridge} must be non-negative")));
    }
    let (lo, hi) = return_window(panel, asof, window_days)?;
    let n = panel.n_assets();
    let w = (hi - lo) as f64;
    let means: Vec<f64> = (0..n)
        .map(|a| panel.daily_returns(a)[lo..hi].iter().sum::<f64>() / w)
        .collect();
    let mut matrix = DMatrix::zeros(n, n);
    for i in 0..n {
        let ri = &panel.daily_returns(i)[lo..hi];
        for j in i..n {
            let rj = &panel.daily_returns(j)[lo..hi];
            let mut acc = 0.0;
            for t in 0..ri.len() {
                acc += (ri[t] - means[i]) * (rj[t] - means[j]);
            }
            let cov = acc / w * TRADING_DAYS_PER_MONTH;
            matrix[(i, j)] = cov;
            matrix[(j, i)] = cov;
        }
    }
    for i in 0..n {
        matrix[(i, i)] += ridge;
    }
    Ok(CovarianceEstimate {
        asof,
        window_days,
        ridge,
        matrix,
    })
}

/// Trailing mean of daily returns over the same window convention as
/// [`estimate_covariance`], scaled to the monthly horizon. This is the
/// historical return estimate used by the plain mean-variance baseline.
pub fn trailing_mean_monthly_return(
    panel: &MarketPanel,
    asof: NaiveDate,
    window_days: usize,
) -> Result<DVector<f64>> {
    if window_days == 0 {
        return Err(Error::Input("mean window must be positive".into()));
    }
    let (lo, hi) = return_window(panel, asof, window_days)?;
    let w = (hi - lo) as f64;
    Ok(DVector::from_fn(panel.n_assets(), |a, _| {
        panel.daily_returns(a)[lo..hi].iter().sum::<f64>() / w * TRADING_DAYS_PER_MONTH
    }))
}
